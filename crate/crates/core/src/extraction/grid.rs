use crate::data::{cell_center, VoxelGrid};
use crate::network::Network;
use crate::nn::Real;

/// Points evaluated per decoder call when sweeping a grid.
const CHUNK: usize = 4096;

/// Cell-centered scalar values over the canonical cube, x-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    pub dim: usize,
    pub values: Vec<f32>,
}

impl ScalarGrid {
    pub fn zeros(dim: usize) -> Self {
        ScalarGrid {
            dim,
            values: vec![0.0; dim * dim * dim],
        }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.dim + y) * self.dim + z
    }

    pub fn zero_boundary(&mut self) {
        let d = self.dim;
        for x in 0..d {
            for y in 0..d {
                for z in 0..d {
                    if x == 0 || y == 0 || z == 0 || x == d - 1 || y == d - 1 || z == d - 1 {
                        let k = self.index(x, y, z);
                        self.values[k] = 0.0;
                    }
                }
            }
        }
    }

    /// Cells strictly above `tau`.
    pub fn binarize(&self, tau: f64) -> VoxelGrid {
        VoxelGrid {
            dim: self.dim,
            occupancy: self.values.iter().map(|&v| u8::from(v as f64 > tau)).collect(),
        }
    }
}

/// All cell centers of a `dim³` grid in index order.
pub fn grid_points<F: Real>(dim: usize) -> Vec<[F; 3]> {
    let mut pts = Vec::with_capacity(dim * dim * dim);
    for x in 0..dim {
        for y in 0..dim {
            for z in 0..dim {
                pts.push([x, y, z].map(|i| F::c(cell_center(i, dim))));
            }
        }
    }
    pts
}

/// Level fields at `points`, evaluated in chunks; `nodes × points` layout.
pub fn node_fields<F: Real>(net: &Network<F>, codes: &[Vec<F>], level: usize, points: &[[F; 3]]) -> Vec<F> {
    let n = points.len();
    let nodes = net.config.nodes_at(level);
    let mut out = vec![F::zero(); nodes * n];
    for (ci, chunk) in points.chunks(CHUNK).enumerate() {
        let f = net.level_fields(codes, level, chunk);
        let m = chunk.len();
        for node in 0..nodes {
            out[node * n + ci * CHUNK..node * n + ci * CHUNK + m].copy_from_slice(&f[node * m..(node + 1) * m]);
        }
    }
    out
}

/// Union field `max_i f_{i,level}` at every cell center, boundary layer zeroed.
pub fn eval_union_grid<F: Real>(net: &Network<F>, root: &[F], level: usize, dim: usize) -> ScalarGrid {
    let codes = net.codes(root);
    let pts = grid_points::<F>(dim);
    let mut grid = ScalarGrid::zeros(dim);
    for (ci, chunk) in pts.chunks(CHUNK).enumerate() {
        let f = net.level_fields(&codes, level, chunk);
        let m = chunk.len();
        for (k, v) in grid.values[ci * CHUNK..ci * CHUNK + m].iter_mut().enumerate() {
            *v = f
                .iter()
                .skip(k)
                .step_by(m)
                .map(|x| x.f64())
                .fold(f64::NEG_INFINITY, f64::max) as f32;
        }
    }
    grid.zero_boundary();
    grid
}
