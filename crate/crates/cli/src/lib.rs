//! Shared plumbing for the `atom` and `sim` binaries: layered settings,
//! VLM endpoint resolution and exit codes.

pub mod atom;
pub mod settings;
pub mod sim;

use std::ffi::OsString;
use std::fmt::Display;
use std::path::Path;

use atomnav::builder::BuildError;
use atomnav::exploration::ExploreError;
use atomnav::grounding::GroundingError;
use atomnav::perception::{open_vlm, PerceptionError, Vlm};
use atomnav::sim::{OracleVlm, SimError};
use clap::Parser;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_TRANSPORT: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(m: impl Display) -> Self {
        Self {
            code: EXIT_USAGE,
            message: m.to_string(),
        }
    }

    pub fn data(m: impl Display) -> Self {
        Self {
            code: EXIT_DATA,
            message: m.to_string(),
        }
    }
}

/// `Variant: message`, so scripts can match on the error kind.
fn tagged<E: std::fmt::Debug + Display>(e: &E) -> String {
    let dbg = format!("{e:?}");
    let kind = dbg.split(['(', ' ', '{']).next().unwrap_or_default();
    format!("{kind}: {e}")
}

impl From<PerceptionError> for CliError {
    fn from(e: PerceptionError) -> Self {
        let code = match e {
            PerceptionError::Transport { .. } => EXIT_TRANSPORT,
            PerceptionError::Endpoint(_) => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        Self {
            code,
            message: tagged(&e),
        }
    }
}

impl From<BuildError> for CliError {
    fn from(e: BuildError) -> Self {
        match e {
            BuildError::Frame(p) => p.into(),
            BuildError::Config(_) => Self::usage(tagged(&e)),
            other => Self::data(tagged(&other)),
        }
    }
}

impl From<GroundingError> for CliError {
    fn from(e: GroundingError) -> Self {
        match e {
            GroundingError::Perception(p) => p.into(),
            GroundingError::Build(b) => b.into(),
            other => Self::data(tagged(&other)),
        }
    }
}

impl From<ExploreError> for CliError {
    fn from(e: ExploreError) -> Self {
        match e {
            ExploreError::Build(b) => b.into(),
            other => Self::data(tagged(&other)),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Perception(p) => p.into(),
            other => Self::data(tagged(&other)),
        }
    }
}

pub type CliResult = Result<(), CliError>;

/// Parse arguments, run, and turn the outcome into an exit code. Help and
/// version go to stdout; everything else is diagnostics on stderr.
pub fn run<C: Parser>(args: impl IntoIterator<Item = OsString>, body: impl FnOnce(C) -> CliResult) -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .try_init();
    let cli = match C::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{}", e.render());
                    EXIT_OK
                }
                _ => {
                    eprint!("{}", e.render());
                    EXIT_USAGE
                }
            };
        }
    };
    match body(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn versions() -> String {
    format!(
        "{} {}\natom_version {}\nrender_version {}\nsequence_version {}\n",
        env!("CARGO_PKG_NAME"),
        env!("CARGO_PKG_VERSION"),
        atomnav::scene::ATOM_VERSION,
        atomnav::render::RENDER_VERSION,
        atomnav::perception::SEQUENCE_VERSION
    )
}

/// Resolve an endpoint for one sequence directory. Besides the library's
/// `replay:DIR`, `http:URL` and `oracle:SCENE`, a bare `oracle` uses the
/// sequence's own `scene.json` and a bare `replay` its `replay/` store.
pub fn open_endpoint(endpoint: &str, sequence: Option<&Path>) -> Result<Box<dyn Vlm>, CliError> {
    match (endpoint, sequence) {
        ("oracle", Some(dir)) => Ok(Box::new(OracleVlm::from_scene_file(&dir.join("scene.json"))?)),
        ("replay", Some(dir)) => Ok(open_vlm(&format!("replay:{}", dir.join("replay").display()))?),
        ("oracle" | "replay", None) => Err(CliError::usage(format!("endpoint {endpoint:?} needs a sequence directory"))),
        _ => Ok(open_vlm(endpoint)?),
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> CliResult {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::data(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: serde::Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("value serializes");
    b.push(b'\n');
    b
}

pub fn emit<T: serde::Serialize>(v: &T) {
    use std::io::Write;
    let _ = std::io::stdout().write_all(&to_json(v));
}
