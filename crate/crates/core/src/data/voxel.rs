use serde::{Deserialize, Serialize};

use super::shapes::{occupancy, ToyShapeSpec};

/// Cubic binary occupancy grid over `[-0.5, 0.5]³`, index `(x·D + y)·D + z`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoxelGrid {
    pub dim: usize,
    pub occupancy: Vec<u8>,
}

/// Center of cell `i` along one axis of a `dim`-cell grid.
#[inline]
pub fn cell_center(i: usize, dim: usize) -> f64 {
    (i as f64 + 0.5) / dim as f64 - 0.5
}

impl VoxelGrid {
    pub fn empty(dim: usize) -> Self {
        VoxelGrid {
            dim,
            occupancy: vec![0; dim * dim * dim],
        }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.dim + y) * self.dim + z
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> u8 {
        self.occupancy[self.index(x, y, z)]
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_boundary(&self, x: usize, y: usize, z: usize) -> bool {
        let last = self.dim - 1;
        x == 0 || y == 0 || z == 0 || x == last || y == last || z == last
    }

    pub fn boundary_is_empty(&self) -> bool {
        let d = self.dim;
        (0..d).all(|x| (0..d).all(|y| (0..d).all(|z| !self.is_boundary(x, y, z) || self.get(x, y, z) == 0)))
    }

    /// Cell centers of every voxel in index order.
    pub fn centers(dim: usize) -> Vec<[f32; 3]> {
        let mut out = Vec::with_capacity(dim * dim * dim);
        for x in 0..dim {
            for y in 0..dim {
                for z in 0..dim {
                    out.push([
                        cell_center(x, dim) as f32,
                        cell_center(y, dim) as f32,
                        cell_center(z, dim) as f32,
                    ]);
                }
            }
        }
        out
    }
}

/// Occupancy sampled at cell centers with the boundary layer forced empty.
pub fn voxelize(spec: &ToyShapeSpec, dim: usize) -> VoxelGrid {
    assert!(dim >= 8, "voxel resolution must be at least 8");
    let mut grid = VoxelGrid::empty(dim);
    for x in 1..dim - 1 {
        for y in 1..dim - 1 {
            for z in 1..dim - 1 {
                let p = [cell_center(x, dim), cell_center(y, dim), cell_center(z, dim)];
                let i = grid.index(x, y, z);
                grid.occupancy[i] = occupancy(spec, p);
            }
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::shapes::{gen_toy_shape, Category};

    #[test]
    fn empty_spec_gives_empty_grid() {
        let g = voxelize(&ToyShapeSpec::empty(Category::Table), 16);
        assert_eq!(g.occupied_count(), 0);
    }

    #[test]
    fn boundary_layer_is_empty() {
        for c in Category::ALL {
            for seed in 0..5 {
                assert!(voxelize(&gen_toy_shape(c, seed), 16).boundary_is_empty());
            }
        }
    }

    #[test]
    fn occupied_fraction_tracks_analytic_volume_across_resolutions() {
        // Table interiors are disjoint, so the primitive volume sum is the exact union volume.
        for seed in 0..4 {
            let spec = gen_toy_shape(Category::Table, seed);
            let vol = spec.primitive_volume();
            let coarse = voxelize(&spec, 64).occupied_count() as f64 / 64f64.powi(3);
            let fine = voxelize(&spec, 128).occupied_count() as f64 / 128f64.powi(3);
            assert!((coarse / fine - 1.0).abs() < 0.2, "seed {seed}: {coarse} vs {fine}");
            assert!((fine / vol - 1.0).abs() < 0.2, "seed {seed}: {fine} vs analytic {vol}");
        }
    }

    #[test]
    fn occupied_center_has_value_one() {
        let spec = gen_toy_shape(Category::Chair, 9);
        let g = voxelize(&spec, 32);
        for x in 0..32 {
            for y in 0..32 {
                for z in 0..32 {
                    if g.get(x, y, z) == 1 {
                        let p = [cell_center(x, 32), cell_center(y, 32), cell_center(z, 32)];
                        assert_eq!(occupancy(&spec, p), 1);
                    }
                }
            }
        }
    }
}
