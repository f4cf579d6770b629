//! Staged optimization with parameter freezing, loss logging and resumable checkpoints.

pub mod plan;
pub mod trainer;

pub use plan::{build_stage_plan, Objective, Stage, StagePlan};
pub use trainer::{iteration_rng, log_header, TrainConfig, Trainer};
