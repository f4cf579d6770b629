use std::path::Path;

use serde::{Deserialize, Serialize};

use recfield::evaluation::EvalOptions;
use recfield::network::NetworkConfig;
use recfield::svr::SvrConfig;
use recfield::training::TrainConfig;

use crate::UsageError;

/// Dataset generation and split settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub category: String,
    pub count: usize,
    pub voxel_dim: usize,
    /// Point samples come from a jittered grid of this resolution.
    pub sample_resolution: usize,
    /// The last `holdout` shapes are excluded from training and used for scoring.
    /// With 0, every shape is used for both.
    pub holdout: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            category: "table".into(),
            count: 200,
            voxel_dim: 32,
            sample_resolution: 32,
            holdout: 0,
        }
    }
}

/// Every setting a command may read. The top-level seed overrides the per-section seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    pub svr: SvrConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            data: DataConfig::default(),
            network: NetworkConfig::desk(),
            train: TrainConfig::default(),
            eval: EvalOptions::default(),
            svr: SvrConfig::default(),
        }
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl RunConfig {
    /// Parses a possibly partial TOML document over the defaults.
    pub fn from_toml(text: &str) -> Result<Self, UsageError> {
        let over: toml::Value = toml::from_str(text).map_err(|e| UsageError(format!("invalid config: {e}")))?;
        let mut base = toml::Value::try_from(RunConfig::default()).expect("defaults serialize");
        merge(&mut base, over);
        base.try_into().map_err(|e| UsageError(format!("invalid config: {e}")))
    }

    pub fn load(path: Option<&Path>) -> Result<Self, UsageError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| UsageError(format!("cannot read config {}: {e}", p.display())))?;
                RunConfig::from_toml(&text)
            }
        }
    }

    /// Copies the top-level seed into every section.
    pub fn propagate_seed(&mut self) {
        self.network.seed = self.seed;
        self.train.seed = self.seed;
        self.eval.seed = self.seed;
        self.svr.seed = self.seed;
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c = RunConfig::from_toml("seed = 7\n[network]\nlevels = 3\n[train]\nstage_iterations = 10\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.network.levels, 3);
        assert_eq!(c.network.code_dim, NetworkConfig::desk().code_dim);
        assert_eq!(c.train.stage_iterations, 10);
        assert_eq!(
            c.train.points_per_iteration,
            TrainConfig::default().points_per_iteration
        );
    }

    #[test]
    fn round_trip_and_unknown_keys() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert!(RunConfig::from_toml("bogus = 1").is_err());
        assert!(RunConfig::from_toml("[network]\nlevels = \"two\"").is_err());
    }
}
