//! Reconstruction and decomposition losses over a [`FieldTree`].
//!
//! All terms are batch means. `max` is used literally; at ties the subgradient goes to
//! the lower-index node.

use serde::{Deserialize, Serialize};

use crate::network::hierarchy::argmax_at;
use crate::network::FieldTree;
use crate::nn::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub decomposition_enabled: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 1.0,
            beta: 10.0,
            decomposition_enabled: true,
        }
    }
}

impl LossWeights {
    /// Effective decomposition weight.
    pub fn beta_eff(&self) -> f64 {
        if self.decomposition_enabled {
            self.beta
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub recon_per_level: Vec<f64>,
    pub decomposition_total: f64,
    pub total: f64,
    /// False when the decomposition term is reported but not part of `total`.
    pub decomposition_optimized: bool,
}

/// `mean_p (y − max_i f_{i,j}(p))²`.
pub fn recon_level<F: Real>(tree: &FieldTree<F>, level: usize, y_gt: &[F]) -> f64 {
    assert_eq!(y_gt.len(), tree.batch);
    let rows = tree.level(level);
    let nodes = tree.nodes(level);
    let sum: f64 = (0..tree.batch)
        .map(|p| {
            let d = y_gt[p].f64() - argmax_at(rows, tree.batch, nodes, p).1.f64();
            d * d
        })
        .sum();
    sum / tree.batch as f64
}

/// Sum of [`recon_level`] over levels `1..=levels`.
pub fn recon_total<F: Real>(tree: &FieldTree<F>, y_gt: &[F], levels: usize) -> f64 {
    (1..=levels).map(|j| recon_level(tree, j, y_gt)).sum()
}

fn child_max<F: Real>(tree: &FieldTree<F>, i: usize, level: usize, p: usize) -> (usize, F) {
    let left = tree.field(2 * i - 1, level + 1)[p];
    let right = tree.field(2 * i, level + 1)[p];
    if right > left {
        (2 * i, right)
    } else {
        (2 * i - 1, left)
    }
}

/// `mean_p (f_{i,j}(p) − max(f_{2i−1,j+1}(p), f_{2i,j+1}(p)))²` for node `i` (1-based).
pub fn decomposition_node<F: Real>(tree: &FieldTree<F>, i: usize, level: usize) -> f64 {
    let parent = tree.field(i, level);
    let sum: f64 = (0..tree.batch)
        .map(|p| {
            let d = parent[p].f64() - child_max(tree, i, level, p).1.f64();
            d * d
        })
        .sum();
    sum / tree.batch as f64
}

/// Sum of [`decomposition_node`] over every node of levels `1..levels`; zero for one level.
pub fn decomposition_total<F: Real>(tree: &FieldTree<F>, levels: usize) -> f64 {
    (1..levels)
        .flat_map(|j| (1..=tree.nodes(j)).map(move |i| (i, j)))
        .map(|(i, j)| decomposition_node(tree, i, j))
        .fold(0.0, |a, b| a + b)
}

/// `α·Σ recon + β·decomposition` over levels `1..=levels`.
pub fn total_loss<F: Real>(tree: &FieldTree<F>, y_gt: &[F], weights: &LossWeights, levels: usize) -> LossReport {
    let recon_per_level: Vec<f64> = (1..=levels).map(|j| recon_level(tree, j, y_gt)).collect();
    let decomposition_total = decomposition_total(tree, levels);
    let total = weights.alpha * recon_per_level.iter().sum::<f64>() + weights.beta_eff() * decomposition_total;
    LossReport {
        recon_per_level,
        decomposition_total,
        total,
        decomposition_optimized: weights.decomposition_enabled,
    }
}

/// Loss report plus `dL/dfields` for every level of `tree`.
///
/// With `recon_only` the decomposition term is still reported but excluded from the
/// objective and its gradient.
pub fn loss_and_grad<F: Real>(
    tree: &FieldTree<F>,
    y_gt: &[F],
    weights: &LossWeights,
    recon_only: bool,
) -> (LossReport, Vec<Vec<F>>) {
    let levels = tree.levels();
    let mut report = total_loss(tree, y_gt, weights, levels);
    let beta = if recon_only { 0.0 } else { weights.beta_eff() };
    if recon_only {
        report.total = weights.alpha * report.recon_per_level.iter().sum::<f64>();
        report.decomposition_optimized = false;
    }
    let b = tree.batch;
    let mut d: Vec<Vec<F>> = tree.fields.iter().map(|f| vec![F::zero(); f.len()]).collect();
    let ra = F::c(2.0 * weights.alpha / b as f64);
    for j in 1..=levels {
        let rows = tree.level(j);
        let nodes = tree.nodes(j);
        for p in 0..b {
            let (n, m) = argmax_at(rows, b, nodes, p);
            d[j - 1][n * b + p] += ra * (m - y_gt[p]);
        }
    }
    if beta > 0.0 {
        let hb = F::c(2.0 * beta / b as f64);
        for j in 1..levels {
            for i in 1..=tree.nodes(j) {
                let parent = tree.field(i, j);
                for p in 0..b {
                    let (child, m) = child_max(tree, i, j, p);
                    let g = hb * (parent[p] - m);
                    d[j - 1][(i - 1) * b + p] += g;
                    d[j][(child - 1) * b + p] -= g;
                }
            }
        }
    }
    (report, d)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tree(levels: Vec<Vec<Vec<f64>>>) -> FieldTree<f64> {
        FieldTree::from_rows(levels)
    }

    #[test]
    fn recon_examples() {
        let t = tree(vec![vec![vec![0.3], vec![0.1]]]);
        assert_eq!(recon_level(&t, 1, &[0.0]), 0.3f64 * 0.3);
        let perfect = tree(vec![vec![vec![1.0], vec![0.2]]]);
        assert_eq!(recon_level(&perfect, 1, &[1.0]), 0.0);
        let swapped = tree(vec![vec![vec![0.1], vec![0.3]]]);
        assert_eq!(recon_level(&swapped, 1, &[0.0]), recon_level(&t, 1, &[0.0]));
    }

    #[test]
    fn recon_total_sums_levels() {
        // level 1 error 0.2, level 2 error 0.1
        let t = tree(vec![
            vec![vec![0.8], vec![0.1]],
            vec![vec![0.9], vec![0.1], vec![0.2], vec![0.3]],
        ]);
        let total = recon_total(&t, &[1.0], 2);
        assert!((total - 0.05).abs() < 1e-15);
        assert_eq!(recon_total(&t, &[1.0], 1), recon_level(&t, 1, &[1.0]));
    }

    #[test]
    fn decomposition_examples() {
        let t = tree(vec![
            vec![vec![0.7], vec![0.9]],
            vec![vec![0.7], vec![0.2], vec![0.5], vec![0.6]],
        ]);
        assert_eq!(decomposition_node(&t, 1, 1), 0.0);
        assert!((decomposition_node(&t, 2, 1) - 0.09).abs() < 1e-15);
        let s = tree(vec![
            vec![vec![0.7], vec![0.9]],
            vec![vec![0.2], vec![0.7], vec![0.6], vec![0.5]],
        ]);
        assert_eq!(decomposition_node(&s, 2, 1), decomposition_node(&t, 2, 1));
        assert!((decomposition_total(&t, 2) - 0.09).abs() < 1e-15);
    }

    #[test]
    fn decomposition_total_adds_node_terms() {
        // node losses 0.01 and 0.03 via single-point differences 0.1 and sqrt(0.03)
        let d2 = 0.03f64.sqrt();
        let t = tree(vec![
            vec![vec![0.6], vec![0.5 + d2]],
            vec![vec![0.5], vec![0.1], vec![0.5], vec![0.2]],
        ]);
        assert!((decomposition_node(&t, 1, 1) - 0.01).abs() < 1e-15);
        assert!((decomposition_node(&t, 2, 1) - 0.03).abs() < 1e-15);
        assert!((decomposition_total(&t, 2) - 0.04).abs() < 1e-15);
    }

    #[test]
    fn single_level_has_no_decomposition() {
        let t = tree(vec![vec![vec![0.3, 0.9], vec![0.1, 0.2]]]);
        assert_eq!(decomposition_total(&t, 1).to_bits(), 0.0f64.to_bits());
        assert_eq!(decomposition_total(&t, 1), 0.0);
        let (r, d) = loss_and_grad(&t, &[1.0, 0.0], &LossWeights::default(), false);
        assert_eq!(r.decomposition_total, 0.0);
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn weighted_total() {
        let w = LossWeights::default();
        assert_eq!((w.alpha, w.beta), (1.0, 10.0));
        let total = w.alpha * 0.05 + w.beta_eff() * 0.004;
        assert!((total - 0.09).abs() < 1e-15);
        let off = LossWeights {
            decomposition_enabled: false,
            ..w
        };
        let t = tree(vec![
            vec![vec![0.6], vec![0.9]],
            vec![vec![0.5], vec![0.1], vec![0.5], vec![0.2]],
        ]);
        let r = total_loss(&t, &[1.0], &off, 2);
        assert_eq!(r.total, recon_total(&t, &[1.0], 2));
        assert!(r.decomposition_total > 0.0);
    }

    #[test]
    fn recon_only_objective_excludes_decomposition() {
        let t = tree(vec![
            vec![vec![0.6], vec![0.9]],
            vec![vec![0.5], vec![0.1], vec![0.5], vec![0.2]],
        ]);
        let (r, d) = loss_and_grad(&t, &[1.0], &LossWeights::default(), true);
        assert!(!r.decomposition_optimized);
        assert!(r.decomposition_total > 0.0);
        assert_eq!(r.total, recon_total(&t, &[1.0], 2));
        // only the level-2 argmax node gets a level-2 gradient
        assert_eq!(d[1].iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn decomposition_zero_iff_parent_equals_child_max() {
        let exact = tree(vec![
            vec![vec![0.5, 0.25], vec![0.75, 0.125]],
            vec![
                vec![0.5, 0.0625],
                vec![0.25, 0.25],
                vec![0.75, 0.125],
                vec![0.5, 0.0625],
            ],
        ]);
        assert_eq!(decomposition_total(&exact, 2), 0.0);
        let mut off = exact.clone();
        off.fields[1][3] = 0.2500001;
        assert!(decomposition_total(&off, 2) > 0.0);
    }

    fn numeric(t: &FieldTree<f64>, y: &[f64], w: &LossWeights, l: usize, k: usize) -> f64 {
        let h = 1e-7;
        let mut a = t.clone();
        a.fields[l][k] += h;
        let mut b = t.clone();
        b.fields[l][k] -= h;
        (total_loss(&a, y, w, t.levels()).total - total_loss(&b, y, w, t.levels()).total) / (2.0 * h)
    }

    proptest! {
        #[test]
        fn components_non_negative(v in prop::collection::vec(0.0f64..1.0, 18), y in prop::collection::vec(0u8..2, 3)) {
            let rows1 = vec![v[0..3].to_vec(), v[3..6].to_vec()];
            let rows2 = (0..4).map(|i| v[6 + 3 * i..9 + 3 * i].to_vec()).collect();
            let t = tree(vec![rows1, rows2]);
            let y: Vec<f64> = y.iter().map(|&b| b as f64).collect();
            let r = total_loss(&t, &y, &LossWeights::default(), 2);
            prop_assert!(r.recon_per_level.iter().all(|&x| x >= 0.0));
            prop_assert!(r.decomposition_total >= 0.0 && r.total >= 0.0);
        }

        #[test]
        fn batch_mean_is_size_weighted(v in prop::collection::vec(0.0f64..1.0, 12), split in 1usize..5) {
            let rows = |lo: usize, hi: usize| vec![v[lo..hi].to_vec(), v[6 + lo..6 + hi].to_vec()];
            let y = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0];
            let whole = recon_level(&tree(vec![rows(0, 6)]), 1, &y);
            let a = recon_level(&tree(vec![rows(0, split)]), 1, &y[..split]);
            let b = recon_level(&tree(vec![rows(split, 6)]), 1, &y[split..]);
            let mixed = (a * split as f64 + b * (6 - split) as f64) / 6.0;
            prop_assert!((whole - mixed).abs() < 1e-12);
        }

        #[test]
        fn field_gradient_matches_differences(v in prop::collection::vec(0.05f64..0.95, 12)) {
            let rows1 = vec![v[0..2].to_vec(), v[2..4].to_vec()];
            let rows2 = (0..4).map(|i| v[4 + 2 * i..6 + 2 * i].to_vec()).collect();
            let t = tree(vec![rows1, rows2]);
            let y = [1.0, 0.0];
            let w = LossWeights::default();
            let (_, d) = loss_and_grad(&t, &y, &w, false);
            for l in 0..2 {
                for k in 0..t.fields[l].len() {
                    let n = numeric(&t, &y, &w, l, k);
                    prop_assert!((n - d[l][k]).abs() < 1e-5, "level {} entry {}: {} vs {}", l + 1, k, n, d[l][k]);
                }
            }
        }
    }
}
