//! Settings layered as flags > environment > config file > defaults.

use std::path::Path;

use atomnav::builder::BuilderConfig;
use atomnav::exploration::ExploreConfig;
use atomnav::grounding::{Grounder, GroundingConfig};
use atomnav::render::RenderConfig;
use atomnav::sim::SimCamera;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const ENV_CONFIG: &str = "ATOMNAV_CONFIG";
pub const ENV_VLM: &str = "ATOMNAV_VLM";
pub const ENV_GROUNDER: &str = "ATOMNAV_GROUNDER";
pub const ENV_JOBS: &str = "ATOMNAV_JOBS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub builder: BuilderConfig,
    pub render: RenderConfig,
    pub grounding: GroundingConfig,
    pub explore: ExploreConfig,
    pub camera: SimCamera,
    pub grounder: Grounder,
    pub vlm: Option<String>,
    /// Benchmark worker threads; 0 means one per logical core.
    pub jobs: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            builder: BuilderConfig::default(),
            render: RenderConfig::default(),
            grounding: GroundingConfig::default(),
            explore: ExploreConfig::default(),
            camera: SimCamera::default(),
            grounder: Grounder::Geometric,
            vlm: None,
            jobs: 0,
        }
    }
}

/// Values that can also be given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub grounder: Option<Grounder>,
    pub vlm: Option<String>,
    pub jobs: Option<usize>,
}

pub fn parse_grounder(s: &str) -> Result<Grounder, String> {
    match s {
        "geometric" => Ok(Grounder::Geometric),
        "vlm" => Ok(Grounder::Vlm),
        _ => Err(format!("unknown grounder {s:?} (geometric or vlm)")),
    }
}

impl Settings {
    /// Merge the layers. `env` looks up environment variables, so tests can
    /// supply their own.
    pub fn resolve(config: Option<&Path>, env: impl Fn(&str) -> Option<String>, flags: &Overrides) -> Result<Self, CliError> {
        let file = config.map(Path::to_path_buf).or_else(|| env(ENV_CONFIG).map(Into::into));
        let mut s: Settings = match &file {
            Some(p) => crate::read_json(p).map_err(|e| CliError::usage(e.message))?,
            None => Settings::default(),
        };
        if let Some(v) = env(ENV_VLM) {
            s.vlm = Some(v);
        }
        if let Some(g) = env(ENV_GROUNDER) {
            s.grounder = parse_grounder(&g).map_err(|e| CliError::usage(format!("{ENV_GROUNDER}: {e}")))?;
        }
        if let Some(j) = env(ENV_JOBS) {
            s.jobs = j.parse().map_err(|_| CliError::usage(format!("{ENV_JOBS}: not a count: {j:?}")))?;
        }
        if let Some(v) = &flags.vlm {
            s.vlm = Some(v.clone());
        }
        if let Some(g) = flags.grounder {
            s.grounder = g;
        }
        if let Some(j) = flags.jobs {
            s.jobs = j;
        }
        s.builder.validate().map_err(CliError::usage)?;
        s.render.validate().map_err(CliError::usage)?;
        s.explore.render.validate().map_err(CliError::usage)?;
        Ok(s)
    }

    pub fn from_process_env(config: Option<&Path>, flags: &Overrides) -> Result<Self, CliError> {
        Self::resolve(config, |k| std::env::var(k).ok(), flags)
    }
}
