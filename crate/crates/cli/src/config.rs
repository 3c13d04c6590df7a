//! TOML configuration file.
//!
//! Every section and key is optional; command-line flags take precedence.
//! Unknown keys are rejected.
//!
//! ```toml
//! [clustering]
//! k = 10
//! seed = 0
//! max_iters = 300
//!
//! [gbrt]
//! num_trees = 200
//! max_depth = 6
//! learning_rate = 0.1
//! min_samples_leaf = 5
//!
//! [cascade]
//! bounds = [0.0, 0.06, 1.0]
//! systems = ["GXP", "CXP", "CP"]
//!
//! [sweep]
//! realisations = 100
//! c_step = 0.02
//! seed = 0
//! systems = ["BP", "CP", "XP", "CXP"]
//!
//! [gxp]
//! test_groups = ["g3", "g5"]
//!
//! [grid]
//! encoders = ["x264"]
//! presets = ["ultrafast", "medium", "veryslow"]
//! cqps = [22, 27, 32, 37]
//!
//! [synthetic]
//! clips = 600
//! sigma = 0.3
//! seed = 0
//!
//! [paths]
//! features = "features.csv"
//! tasks = "tasks.csv"
//! times = "times.csv"
//! ```

use std::path::{Path, PathBuf};

use corpus_eta::corpus::{Preset, TaskGrid};
use corpus_eta::gbrt::Hyperparams;
use corpus_eta::predictors::{CascadePolicy, System};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub clustering: ClusteringConfig,
    #[serde(default)]
    pub gbrt: GbrtConfig,
    #[serde(default)]
    pub cascade: CascadeConfig,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub gxp: GxpConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub synthetic: SyntheticConfig,
    #[serde(default)]
    pub paths: PathsConfig,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusteringConfig {
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub max_iters: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GbrtConfig {
    pub num_trees: Option<usize>,
    pub max_depth: Option<usize>,
    pub learning_rate: Option<f64>,
    pub min_samples_leaf: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeConfig {
    pub bounds: Option<Vec<f64>>,
    pub systems: Option<Vec<System>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub realisations: Option<usize>,
    pub c_step: Option<f64>,
    pub seed: Option<u64>,
    pub systems: Option<Vec<System>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GxpConfig {
    pub test_groups: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub encoders: Option<Vec<String>>,
    pub presets: Option<Vec<Preset>>,
    pub cqps: Option<Vec<u8>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub clips: Option<usize>,
    pub sigma: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub features: Option<PathBuf>,
    pub tasks: Option<PathBuf>,
    pub times: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("config: {0}")]
    Invalid(String),
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|message| ConfigError::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn hyperparams(&self) -> Hyperparams {
        let d = Hyperparams::default();
        Hyperparams {
            num_trees: self.gbrt.num_trees.unwrap_or(d.num_trees),
            max_depth: self.gbrt.max_depth.unwrap_or(d.max_depth),
            learning_rate: self.gbrt.learning_rate.unwrap_or(d.learning_rate),
            min_samples_leaf: self.gbrt.min_samples_leaf.unwrap_or(d.min_samples_leaf),
        }
    }

    pub fn grid(&self) -> TaskGrid {
        let d = TaskGrid::default();
        TaskGrid {
            encoders: self.grid.encoders.clone().unwrap_or(d.encoders),
            presets: self.grid.presets.clone().unwrap_or(d.presets),
            cqps: self.grid.cqps.clone().unwrap_or(d.cqps),
        }
    }

    pub fn cascade(&self) -> Result<CascadePolicy, ConfigError> {
        match (&self.cascade.bounds, &self.cascade.systems) {
            (None, None) => Ok(CascadePolicy::default()),
            (Some(b), Some(s)) => CascadePolicy::from_parallel(b, s).map_err(|e| ConfigError::Invalid(e.to_string())),
            _ => Err(ConfigError::Invalid(
                "cascade.bounds and cascade.systems must be given together".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        let c = Config::parse("").unwrap();
        assert_eq!(c.hyperparams(), Hyperparams::default());
        assert_eq!(c.grid(), TaskGrid::default());
        assert_eq!(c.cascade().unwrap(), CascadePolicy::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = Config::parse("[clustering]\nkk = 3\n").unwrap_err();
        assert!(err.contains("kk"), "{err}");
        assert!(Config::parse("[clusterin]\nk = 3\n").is_err());
    }

    #[test]
    fn documented_example_parses() {
        let doc: String = include_str!("config.rs")
            .lines()
            .skip_while(|l| !l.starts_with("//! ```toml"))
            .skip(1)
            .take_while(|l| !l.starts_with("//! ```"))
            .map(|l| l.trim_start_matches("//!").trim_start())
            .collect::<Vec<_>>()
            .join("\n");
        let c = Config::parse(&doc).unwrap();
        assert_eq!(c.clustering.k, Some(10));
        assert_eq!(c.cascade().unwrap(), CascadePolicy::default());
        assert_eq!(c.sweep.systems.as_deref(), Some(&[System::Bp, System::Cp, System::Xp, System::Cxp][..]));
    }

    #[test]
    fn half_a_cascade_is_an_error() {
        let c = Config::parse("[cascade]\nbounds = [0.0, 1.0]\n").unwrap();
        assert!(c.cascade().is_err());
    }
}
