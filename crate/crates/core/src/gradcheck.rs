//! Finite-difference verification of the analytic loss gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::losses::{loss_and_grad, total_loss, LossWeights};
use crate::network::{Network, NetworkConfig};
use crate::nn::ParamGroup;

/// Gradients below this magnitude are compared absolutely rather than relatively.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub parameters: usize,
    pub max_relative_error: f64,
    /// Name and flat index of the worst entry.
    pub worst: (String, usize),
    pub analytic: f64,
    pub numeric: f64,
}

/// Re-draws every parameter with fan-in scaled weights and nonzero biases so that all
/// paths carry signal.
pub fn randomize(net: &mut Network<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in net.store.tensors_mut() {
        let fan_in: usize = t.shape[1..].iter().product::<usize>().max(1);
        let std = if t.shape.len() == 1 {
            0.1
        } else {
            1.0 / (fan_in as f64).sqrt()
        };
        let normal = Normal::new(0.0, std).expect("finite std");
        for v in t.value.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
}

/// Compares `∂L/∂θ` for every parameter against central differences of step `h`.
///
/// The loss is the full weighted objective over all levels on a random grid and point batch.
#[allow(clippy::needless_range_loop)]
pub fn check_gradients(config: NetworkConfig, points: usize, h: f64, seed: u64) -> GradCheckReport {
    let mut net = Network::<f64>::new(config).expect("valid config");
    randomize(&mut net, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let dim = net.config.input_dim;
    let input: Vec<f64> = (0..dim * dim * dim)
        .map(|_| if rng.random_bool(0.3) { 1.0 } else { 0.0 })
        .collect();
    let pts: Vec<[f64; 3]> = (0..points)
        .map(|_| [0; 3].map(|_: i32| rng.random_range(-0.5..0.5)))
        .collect();
    let y: Vec<f64> = (0..points).map(|i| (i % 2) as f64).collect();
    let weights = LossWeights::default();
    let levels = net.field_levels();
    let all: Vec<ParamGroup> = net.groups();

    let (tree, cache) = net.forward_train(&input, false, &pts, levels);
    let (_, dfields) = loss_and_grad(&tree, &y, &weights, false);
    let grads = net.backward(&cache, &dfields, &all);

    let loss = |n: &Network<f64>| {
        let (t, _) = n.forward_train(&input, false, &pts, levels);
        total_loss(&t, &y, &weights, levels).total
    };
    let mut report = GradCheckReport {
        parameters: net.store.scalar_count(),
        max_relative_error: 0.0,
        worst: (String::new(), 0),
        analytic: 0.0,
        numeric: 0.0,
    };
    let analytic: Vec<Vec<f64>> = grads.iter().map(|g| g.to_vec()).collect();
    for ti in 0..net.store.len() {
        for k in 0..net.store.tensors()[ti].value.len() {
            let orig = net.store.tensors()[ti].value[k];
            net.store.tensors_mut()[ti].value[k] = orig + h;
            let plus = loss(&net);
            net.store.tensors_mut()[ti].value[k] = orig - h;
            let minus = loss(&net);
            net.store.tensors_mut()[ti].value[k] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[ti][k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst = (net.store.tensors()[ti].name.clone(), k);
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_level_flat_network_gradients() {
        let cfg = NetworkConfig {
            levels: 1,
            flat_branches: Some(3),
            encoder_channels: vec![2, 4, 8],
            ..NetworkConfig::tiny()
        };
        let r = check_gradients(cfg, 6, 1e-5, 3);
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }
}
