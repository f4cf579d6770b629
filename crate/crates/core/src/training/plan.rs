use std::fmt;

use serde::{Deserialize, Serialize};

use crate::network::NetworkConfig;
use crate::nn::ParamGroup;

/// Loss optimized during a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Objective {
    /// Field levels `1..=levels` are evaluated.
    pub levels: usize,
    /// Reconstruction only; decomposition is reported but not optimized.
    pub recon_only: bool,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.recon_only {
            write!(f, "recon@{}", self.levels)
        } else {
            write!(f, "recon+decomposition@{}", self.levels)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub trainable: Vec<ParamGroup>,
    pub frozen: Vec<ParamGroup>,
    pub objective: Objective,
    pub iterations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub stages: Vec<Stage>,
}

impl StagePlan {
    pub fn total_iterations(&self) -> u64 {
        self.stages.iter().map(|s| s.iterations).sum()
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }
}

fn all_groups(config: &NetworkConfig) -> Vec<ParamGroup> {
    let mut g = vec![ParamGroup::Encoder];
    g.extend((1..=config.feature_decoder_count()).map(ParamGroup::FeatureDecoder));
    g.extend((1..=config.part_decoder_count()).map(ParamGroup::PartDecoder));
    g
}

fn stage(name: &str, all: &[ParamGroup], trainable: Vec<ParamGroup>, objective: Objective, iterations: u64) -> Stage {
    let frozen = all.iter().copied().filter(|g| !trainable.contains(g)).collect();
    Stage {
        name: name.to_string(),
        trainable,
        frozen,
        objective,
        iterations,
    }
}

/// Staged schedule for a network.
///
/// Progressive: `initial` (encoder + part decoder 1), `level<j>` for `j = 2..=N` (feature
/// decoder `j−1` + part decoder `j`, everything else frozen), then `finetune` (all
/// parameters, reconstruction only). Otherwise a single `joint` stage over all parameters.
pub fn build_stage_plan(config: &NetworkConfig, progressive: bool, iterations: u64) -> StagePlan {
    let n = config.field_levels();
    let all = all_groups(config);
    if !progressive {
        return StagePlan {
            stages: vec![stage(
                "joint",
                &all,
                all.clone(),
                Objective {
                    levels: n,
                    recon_only: false,
                },
                iterations,
            )],
        };
    }
    let mut stages = vec![stage(
        "initial",
        &all,
        vec![ParamGroup::Encoder, ParamGroup::PartDecoder(1)],
        Objective {
            levels: 1,
            recon_only: false,
        },
        iterations,
    )];
    for j in 2..=n {
        stages.push(stage(
            &format!("level{j}"),
            &all,
            vec![ParamGroup::FeatureDecoder(j - 1), ParamGroup::PartDecoder(j)],
            Objective {
                levels: j,
                recon_only: false,
            },
            iterations,
        ));
    }
    stages.push(stage(
        "finetune",
        &all,
        all.clone(),
        Objective {
            levels: n,
            recon_only: true,
        },
        iterations,
    ));
    StagePlan { stages }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(levels: usize) -> NetworkConfig {
        NetworkConfig {
            levels,
            ..NetworkConfig::tiny()
        }
    }

    #[test]
    fn three_levels_progressive() {
        let p = build_stage_plan(&cfg(3), true, 10);
        let names: Vec<_> = p.stages.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["initial", "level2", "level3", "finetune"]);
        assert_eq!(
            p.stages[2].trainable,
            vec![ParamGroup::FeatureDecoder(2), ParamGroup::PartDecoder(3)]
        );
        assert!(p.stages[2].frozen.contains(&ParamGroup::Encoder));
        assert!(p.stages[3].objective.recon_only);
        assert_eq!(p.total_iterations(), 40);
    }

    #[test]
    fn single_level_has_initial_and_finetune() {
        let p = build_stage_plan(&cfg(1), true, 5);
        assert_eq!(p.len(), 2);
        assert_eq!(p.stages[0].objective.levels, 1);
    }

    #[test]
    fn joint_trains_everything() {
        let p = build_stage_plan(&cfg(3), false, 7);
        assert_eq!(p.len(), 1);
        assert!(p.stages[0].frozen.is_empty());
        assert_eq!(p.stages[0].trainable.len(), 1 + 2 + 3);
        assert_eq!(p.stages[0].iterations, 7);
    }

    #[test]
    fn groups_partition_parameters() {
        for n in 1..=4 {
            for prog in [true, false] {
                let c = cfg(n);
                let net = crate::network::Network::<f32>::new(c.clone()).unwrap();
                let mut all = net.groups();
                all.sort();
                for s in build_stage_plan(&c, prog, 1).stages {
                    let mut u: Vec<_> = s.trainable.iter().chain(&s.frozen).copied().collect();
                    u.sort();
                    assert_eq!(u, all);
                }
            }
        }
    }
}
