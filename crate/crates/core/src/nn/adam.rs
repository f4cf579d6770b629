use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamGroup, ParamStore};
use super::real::Real;

/// Adaptive-moment gradient descent settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Per-tensor Adam state. Each tensor keeps its own step count, so tensors that sit
/// frozen for a stage resume with correctly bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub config: AdamConfig,
    pub m: Vec<Vec<F>>,
    pub v: Vec<Vec<F>>,
    pub steps: Vec<u64>,
}

impl<F: Real> Adam<F> {
    pub fn new(store: &ParamStore<F>, config: AdamConfig) -> Self {
        let zeros = || -> Vec<Vec<F>> { store.tensors().iter().map(|t| vec![F::zero(); t.value.len()]).collect() };
        Adam {
            config,
            m: zeros(),
            v: zeros(),
            steps: vec![0; store.len()],
        }
    }

    /// Applies one update to tensors whose group is in `trainable`; all others are untouched.
    pub fn step(&mut self, store: &mut ParamStore<F>, grads: &Gradients<F>, trainable: &[ParamGroup]) {
        let c = self.config;
        let (b1, b2) = (F::c(c.beta1), F::c(c.beta2));
        let (one_b1, one_b2) = (F::c(1.0 - c.beta1), F::c(1.0 - c.beta2));
        let eps = F::c(c.epsilon);
        for (i, (t, g)) in store.tensors_mut().iter_mut().zip(grads.iter()).enumerate() {
            if !trainable.contains(&t.group) {
                continue;
            }
            self.steps[i] += 1;
            let step = self.steps[i] as i32;
            let lr_t = F::c(c.learning_rate / (1.0 - c.beta1.powi(step)));
            let bc2 = F::c(1.0 - c.beta2.powi(step));
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for k in 0..t.value.len() {
                m[k] = b1 * m[k] + one_b1 * g[k];
                v[k] = b2 * v[k] + one_b2 * g[k] * g[k];
                t.value[k] -= lr_t * m[k] / ((v[k] / bc2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::params::Init;

    #[test]
    fn first_step_moves_by_learning_rate_against_gradient_sign() {
        let mut s = ParamStore::<f64>::new();
        let id = s.add("w", ParamGroup::Encoder, &[2], Init::Constant(1.0), 0);
        let frozen = s.add("f", ParamGroup::PartDecoder(1), &[1], Init::Constant(3.0), 0);
        let mut g = Gradients::zeros_like(&s);
        g.get_mut(id).copy_from_slice(&[0.5, -2.0]);
        g.get_mut(frozen)[0] = 1.0;
        let mut adam = Adam::new(&s, AdamConfig::default());
        adam.step(&mut s, &g, &[ParamGroup::Encoder]);
        assert!((s.get(id)[0] - (1.0 - 1e-4)).abs() < 1e-9);
        assert!((s.get(id)[1] - (1.0 + 1e-4)).abs() < 1e-9);
        assert_eq!(s.get(frozen)[0], 3.0);
        assert_eq!(adam.steps, vec![1, 0]);
    }
}
