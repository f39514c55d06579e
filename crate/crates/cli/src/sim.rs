//! `sim gen|bench-gen|explore`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use atomnav::builder::MapBuilder;
use atomnav::exploration::{explore, scan_in_place};
use atomnav::scene::save_atom;
use atomnav::sim::{benchmark_trajectory, emit_sequence, make_benchmark, write_benchmark, OracleVlm, SceneSpec, SimAgent, TrajectoryPose};
use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::settings::{Overrides, Settings};
use crate::{emit, open_endpoint, read_json, to_json, write_file, CliError, CliResult};

#[derive(Parser)]
#[command(name = "sim", about = "Synthetic scenes: sequences, benchmarks and exploration", disable_version_flag = true)]
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

#[derive(Subcommand)]
enum Command {
    /// Render a trajectory through a scene as a sequence directory.
    Gen {
        #[arg(long)]
        scene: PathBuf,
        /// JSON list of {"position": [x, y], "yaw": rad, "t"?: s}; defaults
        /// to the benchmark trajectory.
        #[arg(long)]
        trajectory: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a multiple-choice benchmark sequence. A directory of scenes
    /// yields one sequence per scene under OUT.
    BenchGen {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scan at the start pose, visit frontiers and save the map.
    Explore {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        log: Option<PathBuf>,
        /// Maximum number of frontier visits.
        #[arg(long)]
        budget: Option<usize>,
        /// VLM endpoint; defaults to an uncorrupted oracle of the scene.
        #[arg(long)]
        vlm: Option<String>,
    },
}

pub fn main(args: impl IntoIterator<Item = OsString>) -> i32 {
    crate::run::<Cli>(args, dispatch)
}

fn load_scene(p: &Path) -> Result<SceneSpec, CliError> {
    Ok(SceneSpec::load(p)?)
}

#[derive(Serialize)]
struct Generated {
    name: String,
    frames: usize,
    queries: usize,
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
        Command::Gen { scene, trajectory, out } => {
            let s = Settings::from_process_env(config, &Overrides::default())?;
            let sc = load_scene(&scene)?;
            let traj: Vec<TrajectoryPose> = match trajectory {
                Some(p) => read_json(&p)?,
                None => benchmark_trajectory(&sc),
            };
            let m = emit_sequence(&sc, &s.camera, &traj, &out)?;
            write_file(&out.join("scene.json"), &sc.to_json())?;
            emit(&Generated {
                name: sc.name,
                frames: m.frames.len(),
                queries: 0,
            });
            Ok(())
        }
        Command::BenchGen { scene, seed, out } => {
            let s = Settings::from_process_env(config, &Overrides::default())?;
            let jobs: Vec<(PathBuf, PathBuf)> = if scene.is_dir() {
                let mut files: Vec<PathBuf> = std::fs::read_dir(&scene)
                    .map_err(|e| CliError::data(format!("{}: {e}", scene.display())))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "json"))
                    .collect();
                files.sort();
                files
                    .into_iter()
                    .map(|f| {
                        let stem = f.file_stem().unwrap_or_default().to_owned();
                        (f, out.join(stem))
                    })
                    .collect()
            } else {
                vec![(scene, out)]
            };
            let mut made = Vec::new();
            for (file, dir) in jobs {
                let sc = load_scene(&file)?;
                let b = make_benchmark(&sc, &s.camera, seed)?;
                write_benchmark(&b, &sc, &dir)?;
                made.push(Generated {
                    name: sc.name,
                    frames: b.frames.len(),
                    queries: b.queries.len(),
                });
            }
            emit(&made);
            Ok(())
        }
        Command::Explore {
            scene,
            out,
            log,
            budget,
            vlm,
        } => {
            let s = Settings::from_process_env(
                config,
                &Overrides {
                    vlm,
                    ..Overrides::default()
                },
            )?;
            let sc = load_scene(&scene)?;
            let backend: Box<dyn atomnav::perception::Vlm> = match &s.vlm {
                Some(e) => open_endpoint(e, scene.parent())?,
                None => Box::new(OracleVlm::new(sc.clone(), 0.0, sc.rng_seed)),
            };
            let mut cfg = s.explore.clone();
            if let Some(b) = budget {
                cfg.max_visits = b;
            }
            let mut builder = MapBuilder::new(s.builder.clone(), backend.as_ref())?;
            let mut agent = SimAgent::at_start(&sc, s.camera);
            scan_in_place(&mut agent, &mut builder, cfg.scan_steps)?;
            let visits = explore(&mut agent, &mut builder, &cfg)?;
            let map = builder.into_map();
            if let Some(parent) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).map_err(|e| CliError::data(format!("{}: {e}", parent.display())))?;
            }
            save_atom(&out, &map, false).map_err(|e| CliError::data(format!("{}: {e}", out.display())))?;
            if let Some(p) = log {
                write_file(&p, &to_json(&visits))?;
            }
            emit(&visits);
            Ok(())
        }
    }
}
