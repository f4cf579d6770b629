use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::plan::{build_stage_plan, StagePlan};
use crate::data::ShapeRecord;
use crate::error::{Error, Result};
use crate::losses::{loss_and_grad, LossReport, LossWeights};
use crate::network::checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta};
use crate::network::{Network, NetworkConfig};
use crate::nn::{Adam, AdamConfig, Gradients, ParamGroup};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub stage_iterations: u64,
    pub batch_shapes: usize,
    pub points_per_iteration: usize,
    /// Share of each iteration's points drawn from samples next to the surface;
    /// the rest are drawn uniformly.
    pub surface_fraction: f64,
    pub optimizer: AdamConfig,
    pub progressive: bool,
    pub loss: LossWeights,
    pub seed: u64,
    /// Extra checkpoint period in iterations; 0 writes only at stage boundaries.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            stage_iterations: 3000,
            batch_shapes: 1,
            points_per_iteration: 4096,
            surface_fraction: 0.5,
            optimizer: AdamConfig::default(),
            progressive: true,
            loss: LossWeights::default(),
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stage_iterations == 0 || self.batch_shapes == 0 || self.points_per_iteration == 0 {
            return Err(Error::InvalidInput(
                "stage_iterations, batch_shapes and points_per_iteration must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.surface_fraction) {
            return Err(Error::InvalidInput("surface_fraction must lie in [0, 1]".into()));
        }
        if !(self.loss.alpha > 0.0 && self.loss.beta >= 0.0) {
            return Err(Error::InvalidInput("loss weights need alpha > 0 and beta >= 0".into()));
        }
        Ok(())
    }
}

/// Comma-separated header matching [`Trainer::log`] lines.
pub fn log_header(levels: usize) -> String {
    let mut h = String::from("iteration,stage");
    for j in 1..=levels {
        h.push_str(&format!(",recon_{j}"));
    }
    h.push_str(",hie,total");
    h
}

fn log_line(iteration: u64, stage: &str, levels: usize, r: &LossReport) -> String {
    let mut s = format!("{iteration},{stage}");
    for j in 0..levels {
        match r.recon_per_level.get(j) {
            Some(v) => s.push_str(&format!(",{v}")),
            None => s.push_str(",-"),
        }
    }
    s.push_str(&format!(",{},{}", r.decomposition_total, r.total));
    s
}

/// Random stream for one iteration; a pure function of the seed and the global iteration
/// index, so a resumed run draws exactly what an unbroken run would.
pub fn iteration_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(iteration);
    rng
}

/// Drives a network through a [`StagePlan`].
pub struct Trainer {
    pub network: Network<f32>,
    pub optimizer: Adam<f32>,
    pub config: TrainConfig,
    pub plan: StagePlan,
    /// Global iterations completed.
    pub iteration: u64,
    pub stage_index: usize,
    pub stage_iteration: u64,
    /// Loss log lines produced by this trainer instance.
    pub log: Vec<String>,
    checkpoint_dir: Option<PathBuf>,
    root_codes: HashMap<usize, Vec<f32>>,
    surface: HashMap<usize, Vec<usize>>,
}

impl Trainer {
    pub fn new(network: Network<f32>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let plan = build_stage_plan(&network.config, config.progressive, config.stage_iterations);
        let optimizer = Adam::new(&network.store, config.optimizer);
        Ok(Trainer {
            network,
            optimizer,
            config,
            plan,
            iteration: 0,
            stage_index: 0,
            stage_iteration: 0,
            log: Vec::new(),
            checkpoint_dir: None,
            root_codes: HashMap::new(),
            surface: HashMap::new(),
        })
    }

    /// Restores a trainer from a checkpoint written by [`Trainer::save`].
    pub fn resume(dir: &Path, expected: Option<&NetworkConfig>) -> Result<Self> {
        let ck = load_checkpoint(dir, expected)?;
        let config: TrainConfig = serde_json::from_value(ck.meta.extra.clone()).map_err(|e| Error::Corrupt {
            path: dir.join("meta.json"),
            reason: format!("training settings: {e}"),
        })?;
        let mut t = Trainer::new(ck.network, config)?;
        t.optimizer = ck.optimizer.ok_or_else(|| Error::Corrupt {
            path: dir.to_path_buf(),
            reason: "optimizer state missing".into(),
        })?;
        t.iteration = ck.meta.iteration;
        t.stage_index = ck.meta.stage_index;
        t.stage_iteration = ck.meta.stage_iteration;
        t.checkpoint_dir = Some(dir.to_path_buf());
        Ok(t)
    }

    pub fn with_checkpoints(mut self, dir: impl Into<PathBuf>) -> Self {
        self.checkpoint_dir = Some(dir.into());
        self
    }

    pub fn is_done(&self) -> bool {
        self.stage_index >= self.plan.len()
    }

    pub fn stage_name(&self) -> &str {
        self.plan.stages.get(self.stage_index).map_or("done", |s| &s.name)
    }

    pub fn meta(&self) -> CheckpointMeta {
        let mut m = CheckpointMeta::new(&self.network.config);
        m.iteration = self.iteration;
        m.stage = self.stage_name().to_string();
        m.stage_index = self.stage_index;
        m.stage_iteration = self.stage_iteration;
        m.extra = serde_json::to_value(&self.config).expect("serializable");
        m
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        save_checkpoint(dir, &self.network, &self.meta(), Some(&self.optimizer))
    }

    fn check_data(&self, data: &[ShapeRecord]) -> Result<()> {
        if data.is_empty() {
            return Err(Error::Empty("training dataset has no shapes".into()));
        }
        for s in data {
            if s.voxels.dim != self.network.config.input_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.network.config.input_dim,
                    actual: s.voxels.dim,
                    context: format!("voxel resolution of shape {}", s.id),
                });
            }
            if s.samples.is_empty() {
                return Err(Error::Empty(format!("shape {} has no point samples", s.id)));
            }
        }
        Ok(())
    }

    /// Runs until the plan completes or `max_iterations` more steps have been taken.
    /// Each log line is passed to `sink` as it is produced.
    pub fn run(&mut self, data: &[ShapeRecord], max_iterations: Option<u64>, sink: &mut dyn FnMut(&str)) -> Result<()> {
        self.check_data(data)?;
        let mut taken = 0;
        while !self.is_done() {
            if max_iterations.is_some_and(|m| taken >= m) {
                break;
            }
            if self.stage_iteration == 0 {
                self.root_codes.clear();
            }
            let line = self.step(data)?;
            sink(&line);
            self.log.push(line);
            taken += 1;
            self.iteration += 1;
            self.stage_iteration += 1;
            let stage_end = self.stage_iteration >= self.plan.stages[self.stage_index].iterations;
            if stage_end {
                self.stage_index += 1;
                self.stage_iteration = 0;
                self.root_codes.clear();
            }
            let periodic =
                self.config.checkpoint_every > 0 && self.iteration.is_multiple_of(self.config.checkpoint_every);
            if let Some(dir) = &self.checkpoint_dir {
                if stage_end || periodic {
                    self.save(dir)?;
                }
            }
        }
        Ok(())
    }

    /// One optimizer step of the current stage; returns the log line.
    fn step(&mut self, data: &[ShapeRecord]) -> Result<String> {
        let stage = self.plan.stages[self.stage_index].clone();
        let levels = stage.objective.levels;
        let mut rng = iteration_rng(self.config.seed, self.iteration);
        let encoder_frozen = !stage.trainable.contains(&ParamGroup::Encoder);
        let mut grads: Option<Gradients<f32>> = None;
        let mut reports = Vec::with_capacity(self.config.batch_shapes);
        for _ in 0..self.config.batch_shapes {
            let shape_index = rng.random_range(0..data.len());
            let shape = &data[shape_index];
            let surface = self
                .surface
                .entry(shape_index)
                .or_insert_with(|| shape.samples.surface_indices().unwrap_or_default());
            let picked = pick_points(
                &mut rng,
                shape.samples.len(),
                surface,
                self.config.points_per_iteration,
                self.config.surface_fraction,
            );
            let points: Vec<[f32; 3]> = picked.iter().map(|&i| shape.samples.points[i]).collect();
            let y: Vec<f32> = picked.iter().map(|&i| shape.samples.values[i] as f32).collect();
            let net = &self.network;
            let (tree, cache) = if encoder_frozen {
                let code = self.root_codes.entry(shape_index).or_insert_with(|| {
                    net.encoder
                        .encode(&net.store, &net.grid_input(&shape.voxels).expect("checked"))
                });
                net.forward_train(code, true, &points, levels)
            } else {
                let input = net.grid_input(&shape.voxels)?;
                net.forward_train(&input, false, &points, levels)
            };
            let (report, dfields) = loss_and_grad(&tree, &y, &self.config.loss, stage.objective.recon_only);
            self.check_finite(&report, &stage.name)?;
            let g = net.backward(&cache, &dfields, &stage.trainable);
            match &mut grads {
                Some(acc) => acc.add_assign(&g),
                None => grads = Some(g),
            }
            reports.push(report);
        }
        let mut grads = grads.expect("batch_shapes >= 1");
        let report = if reports.len() == 1 {
            reports.pop().expect("one report")
        } else {
            grads.scale(1.0 / reports.len() as f32);
            mean_report(&reports)
        };
        self.optimizer.step(&mut self.network.store, &grads, &stage.trainable);
        Ok(log_line(
            self.iteration,
            &stage.name,
            self.network.field_levels(),
            &report,
        ))
    }

    fn check_finite(&self, r: &LossReport, stage: &str) -> Result<()> {
        let bad = |term: String, value: f64| Error::NonFiniteLoss {
            iteration: self.iteration,
            stage: stage.to_string(),
            term,
            value,
        };
        for (j, &v) in r.recon_per_level.iter().enumerate() {
            if !v.is_finite() {
                return Err(bad(format!("recon_{}", j + 1), v));
            }
        }
        if !r.decomposition_total.is_finite() {
            return Err(bad("hie".into(), r.decomposition_total));
        }
        if !r.total.is_finite() {
            return Err(bad("total".into(), r.total));
        }
        Ok(())
    }
}

/// `count` sample indices: `fraction` of them from `surface` (without replacement),
/// the rest uniformly from all `n` samples (without replacement).
fn pick_points(rng: &mut ChaCha8Rng, n: usize, surface: &[usize], count: usize, fraction: f64) -> Vec<usize> {
    if count >= n {
        return (0..n).collect();
    }
    let near = ((count as f64 * fraction).round() as usize).min(surface.len());
    let mut picked: Vec<usize> = rand::seq::index::sample(rng, surface.len(), near)
        .into_iter()
        .map(|i| surface[i])
        .collect();
    picked.extend(rand::seq::index::sample(rng, n, count - near));
    picked
}

fn mean_report(rs: &[LossReport]) -> LossReport {
    let k = rs.len() as f64;
    let levels = rs[0].recon_per_level.len();
    LossReport {
        recon_per_level: (0..levels)
            .map(|j| rs.iter().map(|r| r.recon_per_level[j]).sum::<f64>() / k)
            .collect(),
        decomposition_total: rs.iter().map(|r| r.decomposition_total).sum::<f64>() / k,
        total: rs.iter().map(|r| r.total).sum::<f64>() / k,
        decomposition_optimized: rs[0].decomposition_optimized,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_shapes, Category};

    fn data() -> Vec<ShapeRecord> {
        generate_shapes(Category::Table, 2, 5, 16, 16).unwrap()
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            stage_iterations: 3,
            points_per_iteration: 256,
            optimizer: AdamConfig {
                learning_rate: 1e-3,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn log_marks_unevaluated_levels() {
        let mut t = Trainer::new(Network::new(NetworkConfig::tiny()).unwrap(), quick()).unwrap();
        t.run(&data(), None, &mut |_| {}).unwrap();
        assert!(t.is_done());
        assert_eq!(t.log.len(), 9);
        assert!(t.log[0].starts_with("0,initial,") && t.log[0].contains(",-,"));
        assert!(t.log[3].starts_with("3,level2,") && !t.log[3].contains('-'));
        assert_eq!(log_header(2), "iteration,stage,recon_1,recon_2,hie,total");
        assert_eq!(t.log[8].split(',').count(), 6);
    }

    #[test]
    fn frozen_groups_are_untouched() {
        let mut t = Trainer::new(Network::new(NetworkConfig::tiny()).unwrap(), quick()).unwrap();
        let d = data();
        t.run(&d, Some(3), &mut |_| {}).unwrap();
        let before: Vec<_> = [ParamGroup::Encoder, ParamGroup::PartDecoder(1)]
            .iter()
            .map(|&g| t.network.store.digest(g))
            .collect();
        let fd = t.network.store.digest(ParamGroup::FeatureDecoder(1));
        t.run(&d, Some(3), &mut |_| {}).unwrap();
        assert_eq!(t.stage_name(), "finetune");
        let after: Vec<_> = [ParamGroup::Encoder, ParamGroup::PartDecoder(1)]
            .iter()
            .map(|&g| t.network.store.digest(g))
            .collect();
        assert_eq!(before, after);
        assert_ne!(fd, t.network.store.digest(ParamGroup::FeatureDecoder(1)));
    }

    #[test]
    fn wrong_resolution_is_rejected() {
        let mut t = Trainer::new(Network::new(NetworkConfig::tiny()).unwrap(), quick()).unwrap();
        let d = generate_shapes(Category::Table, 1, 5, 32, 16).unwrap();
        assert!(matches!(
            t.run(&d, None, &mut |_| {}),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(t.run(&[], None, &mut |_| {}), Err(Error::Empty(_))));
    }

    #[test]
    fn divergence_names_the_term() {
        let mut t = Trainer::new(Network::new(NetworkConfig::tiny()).unwrap(), quick()).unwrap();
        for v in t
            .network
            .store
            .tensors_mut()
            .iter_mut()
            .filter(|t| t.name.starts_with("part_decoder1.fc3"))
        {
            v.value.iter_mut().for_each(|x| *x = f32::NAN);
        }
        match t.run(&data(), None, &mut |_| {}) {
            Err(Error::NonFiniteLoss { term, iteration, .. }) => {
                assert_eq!(term, "recon_1");
                assert_eq!(iteration, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
