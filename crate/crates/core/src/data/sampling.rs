use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::shapes::{occupancy, ToyShapeSpec};
use super::voxel::cell_center;
use crate::error::{Error, Result};

/// Point/value samples of one shape's ground-truth field.
///
/// `labels` carries per-point part labels for evaluation; training never reads it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSampleSet {
    pub points: Vec<[f32; 3]>,
    pub values: Vec<u8>,
    pub labels: Option<Vec<u8>>,
}

impl PointSampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn check(&self) -> Result<()> {
        if self.values.len() != self.points.len() {
            return Err(Error::Inconsistent(format!(
                "{} points but {} values",
                self.points.len(),
                self.values.len()
            )));
        }
        if let Some(l) = &self.labels {
            if l.len() != self.points.len() {
                return Err(Error::Inconsistent(format!(
                    "{} points but {} labels",
                    self.points.len(),
                    l.len()
                )));
            }
        }
        Ok(())
    }

    pub fn inside_fraction(&self) -> f64 {
        self.values.iter().filter(|&&v| v == 1).count() as f64 / self.len().max(1) as f64
    }

    /// Indices of samples whose value differs from one of their six grid neighbours.
    /// `None` unless the set holds a full `res³` grid in sampling order.
    pub fn surface_indices(&self) -> Option<Vec<usize>> {
        let n = self.len();
        let res = (n as f64).cbrt().round() as usize;
        if res < 2 || res * res * res != n {
            return None;
        }
        let v = &self.values;
        let at = |x: usize, y: usize, z: usize| v[(x * res + y) * res + z];
        let mut out = Vec::new();
        for x in 0..res {
            for y in 0..res {
                for z in 0..res {
                    let c = at(x, y, z);
                    let differs = (x > 0 && at(x - 1, y, z) != c)
                        || (x + 1 < res && at(x + 1, y, z) != c)
                        || (y > 0 && at(x, y - 1, z) != c)
                        || (y + 1 < res && at(x, y + 1, z) != c)
                        || (z > 0 && at(x, y, z - 1) != c)
                        || (z + 1 < res && at(x, y, z + 1) != c);
                    if differs {
                        out.push((x * res + y) * res + z);
                    }
                }
            }
        }
        Some(out)
    }
}

pub const SAMPLE_RESOLUTIONS: [usize; 3] = [16, 32, 64];

/// One sample per cell of a `grid_res³` grid, jittered uniformly inside its cell.
///
/// Values and labels are computed at the stored (single-precision) coordinates so
/// that re-evaluating the occupancy at any stored point reproduces its value.
pub fn sample_points(spec: &ToyShapeSpec, grid_res: usize, seed: u64) -> Result<PointSampleSet> {
    if !SAMPLE_RESOLUTIONS.contains(&grid_res) {
        return Err(Error::InvalidInput(format!(
            "sample resolution {grid_res} not in {SAMPLE_RESOLUTIONS:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid_res * grid_res * grid_res;
    let cell = 1.0 / grid_res as f64;
    let mut points = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for x in 0..grid_res {
        for y in 0..grid_res {
            for z in 0..grid_res {
                let mut p = [0f32; 3];
                for (d, i) in [x, y, z].into_iter().enumerate() {
                    let jitter: f64 = rng.random_range(-0.5..0.5);
                    p[d] = (cell_center(i, grid_res) + jitter * cell) as f32;
                }
                let q = p.map(f64::from);
                points.push(p);
                values.push(occupancy(spec, q));
                labels.push(spec.label_at(q));
            }
        }
    }
    Ok(PointSampleSet {
        points,
        values,
        labels: Some(labels),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::shapes::{gen_toy_shape, Category, OUTSIDE_LABEL};

    #[test]
    fn sixteen_cubed_gives_4096_samples() {
        let s = sample_points(&gen_toy_shape(Category::Table, 0), 16, 1).unwrap();
        assert_eq!(s.len(), 4096);
        s.check().unwrap();
    }

    #[test]
    fn unsupported_resolution_is_rejected() {
        assert!(sample_points(&gen_toy_shape(Category::Table, 0), 20, 1).is_err());
    }

    #[test]
    fn inside_fraction_within_three_sigma_of_volume() {
        for seed in 0..10 {
            let spec = gen_toy_shape(Category::Table, seed);
            let vol = spec.primitive_volume();
            let s = sample_points(&spec, 32, seed + 100).unwrap();
            let sigma = (vol * (1.0 - vol) / s.len() as f64).sqrt();
            assert!((s.inside_fraction() - vol).abs() <= 3.0 * sigma, "seed {seed}");
        }
    }

    #[test]
    fn values_and_labels_agree_with_occupancy() {
        for c in Category::ALL {
            let spec = gen_toy_shape(c, 5);
            let s = sample_points(&spec, 16, 2).unwrap();
            let labels = s.labels.as_ref().unwrap();
            for ((p, &v), &l) in s.points.iter().zip(&s.values).zip(labels) {
                assert!(p.iter().all(|&x| (-0.5..=0.5).contains(&x)));
                assert_eq!(v, occupancy(&spec, p.map(f64::from)));
                assert_eq!(v == 1, l != OUTSIDE_LABEL);
            }
        }
    }

    #[test]
    fn surface_indices_of_a_single_inside_cell() {
        let mut values = vec![0u8; 27];
        values[13] = 1;
        let set = PointSampleSet {
            points: vec![[0.0; 3]; 27],
            values,
            labels: None,
        };
        assert_eq!(set.surface_indices().unwrap(), vec![4, 10, 12, 13, 14, 16, 22]);
        let short = PointSampleSet {
            points: vec![[0.0; 3]; 26],
            values: vec![0; 26],
            labels: None,
        };
        assert!(short.surface_indices().is_none());
    }
}
