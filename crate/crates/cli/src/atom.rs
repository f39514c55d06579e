//! `atom build|render|ground|bench`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use atomnav::builder::build;
use atomnav::grounding::{answer_multiple_choice, ground_query, run_benchmark, BenchConfig, Grounder, QueryFile};
use atomnav::perception::{PerceptionError, Sequence, Vlm, MANIFEST};
use atomnav::render::render;
use atomnav::scene::{load_atom, save_atom};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::settings::{parse_grounder, Overrides, Settings};
use crate::{emit, open_endpoint, read_json, write_file, CliError, CliResult};

#[derive(Parser)]
#[command(name = "atom", about = "Build, render and ground abstract top-view maps", disable_version_flag = true)]
struct Cli {
    /// Print the crate and schema versions.
    #[arg(long)]
    version: bool,
    /// JSON settings file (sections: builder, render, grounding, explore, camera).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Default)]
struct Common {
    /// VLM endpoint: replay:DIR, http:URL, oracle:SCENE, or bare oracle/replay
    /// for the sequence's own scene.json or replay/ store.
    #[arg(long)]
    vlm: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Fold a recorded sequence into a map.
    Build {
        #[arg(long)]
        sequence: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Store the path cloud in a sidecar .cloud.bin file.
        #[arg(long)]
        external_cloud: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Draw the top view centred on one sign.
    Render {
        #[arg(long)]
        atom: PathBuf,
        #[arg(long, default_value_t = 0)]
        sign: u32,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        sidecar: Option<PathBuf>,
    },
    /// Resolve a location query to a path or structure.
    Ground {
        #[arg(long)]
        atom: PathBuf,
        /// Location to look for; defaults to the query in --choices.
        #[arg(long)]
        query: Option<String>,
        #[arg(long, value_parser = parse_grounder)]
        grounder: Option<Grounder>,
        /// Benchmark query file; the answer is added to the result.
        #[arg(long)]
        choices: Option<PathBuf>,
        /// Sequence holding the query frame; defaults to the directory above
        /// the query file's folder.
        #[arg(long)]
        sequence: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Score every sequence of a dataset against its query files.
    Bench {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_parser = parse_grounder)]
        grounder: Option<Grounder>,
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

pub fn main(args: impl IntoIterator<Item = OsString>) -> i32 {
    crate::run::<Cli>(args, dispatch)
}

fn dispatch(cli: Cli) -> CliResult {
    if cli.version {
        print!("{}", crate::versions());
        return Ok(());
    }
    let Some(command) = cli.command else {
        use clap::CommandFactory;
        eprint!("{}", Cli::command().render_help());
        return Err(CliError::usage("missing subcommand"));
    };
    let config = cli.config.as_deref();
    match command {
        Command::Build {
            sequence,
            out,
            external_cloud,
            common,
        } => cmd_build(config, &sequence, out.as_deref(), external_cloud, common),
        Command::Render { atom, sign, out, sidecar } => {
            let s = Settings::from_process_env(config, &Overrides::default())?;
            let map = load_atom(&atom).map_err(CliError::data)?;
            let r = render(&map, sign, &s.render).map_err(CliError::data)?;
            write_file(&out, &r.image)?;
            let json = r.sidecar.to_json();
            if let Some(p) = sidecar {
                write_file(&p, &json)?;
            }
            use std::io::Write;
            let _ = std::io::stdout().write_all(&json);
            Ok(())
        }
        Command::Ground {
            atom,
            query,
            grounder,
            choices,
            sequence,
            common,
        } => cmd_ground(config, &atom, query, grounder, choices.as_deref(), sequence, common),
        Command::Bench {
            dataset,
            report,
            grounder,
            jobs,
            common,
        } => {
            let flags = Overrides {
                grounder,
                vlm: common.vlm,
                jobs,
            };
            let s = Settings::from_process_env(config, &flags)?;
            let endpoint = s.vlm.clone().unwrap_or_else(|| "oracle".into());
            let factory = move |dir: &Path| -> Result<Box<dyn Vlm>, PerceptionError> { bench_vlm(&endpoint, dir) };
            let cfg = BenchConfig {
                grounder: s.grounder,
                builder: s.builder,
                render: s.render,
                grounding: s.grounding,
                jobs: s.jobs,
            };
            let r = run_benchmark(&dataset, &cfg, &factory)?;
            if let Some(p) = report {
                write_file(&p, &r.to_json())?;
            }
            print!("{}", r.table());
            Ok(())
        }
    }
}

/// Per-sequence backend for benchmarks. A `replay:DIR` whose DIR holds one
/// folder per sequence is resolved to that sequence's folder.
fn bench_vlm(endpoint: &str, dir: &Path) -> Result<Box<dyn Vlm>, PerceptionError> {
    if let Some(root) = endpoint.strip_prefix("replay:") {
        let per_seq = dir.file_name().map(|n| Path::new(root).join(n));
        if let Some(p) = per_seq.filter(|p| p.is_dir()) {
            return atomnav::perception::open_vlm(&format!("replay:{}", p.display()));
        }
    }
    open_endpoint(endpoint, Some(dir)).map_err(|e| PerceptionError::Endpoint(e.message))
}

#[derive(Serialize)]
struct BuildSummary {
    frames: usize,
    signs: usize,
    structures: usize,
    path_points: usize,
}

fn cmd_build(config: Option<&Path>, sequence: &Path, out: Option<&Path>, external: bool, common: Common) -> CliResult {
    let s = Settings::from_process_env(
        config,
        &Overrides {
            vlm: common.vlm,
            ..Overrides::default()
        },
    )?;
    let seq = Sequence::open(sequence)?;
    let endpoint = s.vlm.ok_or_else(|| CliError::usage("no VLM endpoint (use --vlm or ATOMNAV_VLM)"))?;
    let vlm = open_endpoint(&endpoint, Some(sequence))?;
    let map = build(seq.frames(), &s.builder, vlm.as_ref())?;
    match out {
        Some(p) => {
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| CliError::data(format!("{}: {e}", parent.display())))?;
            }
            save_atom(p, &map, external).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
            emit(&BuildSummary {
                frames: seq.len(),
                signs: map.signs.len(),
                structures: map.structures.len(),
                path_points: map.path_cloud.len(),
            });
        }
        None => {
            use std::io::Write;
            let _ = std::io::stdout().write_all(&atomnav::scene::serialize_atom(&map));
        }
    }
    Ok(())
}

fn cmd_ground(
    config: Option<&Path>,
    atom: &Path,
    query: Option<String>,
    grounder: Option<Grounder>,
    choices: Option<&Path>,
    sequence: Option<PathBuf>,
    common: Common,
) -> CliResult {
    let s = Settings::from_process_env(
        config,
        &Overrides {
            grounder,
            vlm: common.vlm,
            jobs: None,
        },
    )?;
    let map = load_atom(atom).map_err(CliError::data)?;
    let qf: Option<QueryFile> = choices.map(read_json).transpose()?;
    if let Some(q) = &qf {
        q.validate().map_err(CliError::data)?;
    }
    let query = query
        .or_else(|| qf.as_ref().map(|q| q.query.clone()))
        .ok_or_else(|| CliError::usage("need --query or --choices"))?;
    let seq_dir = sequence.or_else(|| {
        choices
            .and_then(|c| c.parent())
            .and_then(|d| d.parent())
            .filter(|d| d.join(MANIFEST).is_file())
            .map(Path::to_path_buf)
    });
    let vlm = match (s.grounder, &s.vlm) {
        (Grounder::Vlm, Some(e)) => Some(open_endpoint(e, seq_dir.as_deref())?),
        (Grounder::Vlm, None) => return Err(CliError::usage("the vlm grounder needs --vlm")),
        (Grounder::Geometric, _) => None,
    };
    let (mut result, _) = ground_query(&map, &query, s.grounder, vlm.as_deref(), &s.render, &s.grounding)?;
    if let Some(q) = &qf {
        let dir = seq_dir.ok_or_else(|| CliError::usage("--choices needs --sequence"))?;
        let seq = Sequence::open(&dir)?;
        let goal = result
            .subgoal_3d
            .ok_or_else(|| CliError::data("the matched cue is locational; nothing to choose"))?;
        let idx = seq
            .index_of(q.frame_t)
            .ok_or_else(|| CliError::data(format!("no frame at t={}", q.frame_t)))?;
        let frame = seq.load(idx)?;
        result.answer = Some(answer_multiple_choice(&q.choices, &goal, &frame)?);
    }
    emit(&result);
    Ok(())
}
