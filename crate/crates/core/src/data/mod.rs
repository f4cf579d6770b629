//! Toy shape generation, voxelization, point sampling, and the dataset container.

pub mod container;
pub mod sampling;
pub mod shapes;
pub mod voxel;

pub use container::{read_dataset, read_manifest, write_dataset, DatasetManifest, ShapeRecord, DATASET_VERSION};
pub use sampling::{sample_points, PointSampleSet, SAMPLE_RESOLUTIONS};
pub use shapes::{gen_toy_shape, occupancy, Category, Primitive, PrimitiveKind, ToyShapeSpec, OUTSIDE_LABEL};
pub use voxel::{cell_center, voxelize, VoxelGrid};

use crate::error::Result;

/// Per-shape seed derived from the dataset seed and the shape's index.
pub fn shape_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generates `count` shapes of one category, voxelized at `voxel_dim` and
/// sampled on a `grid_res³` jittered grid.
pub fn generate_shapes(
    category: Category,
    count: usize,
    seed: u64,
    voxel_dim: usize,
    grid_res: usize,
) -> Result<Vec<ShapeRecord>> {
    (0..count)
        .map(|i| {
            let s = shape_seed(seed, i);
            let spec = gen_toy_shape(category, s);
            Ok(ShapeRecord {
                id: format!("{}-{i:05}", category.name()),
                voxels: voxelize(&spec, voxel_dim),
                samples: sample_points(&spec, grid_res, s ^ 0x5a5a_5a5a)?,
            })
        })
        .collect()
}

/// Regenerates the analytic spec behind a generated shape.
pub fn regenerate_spec(category: Category, seed: u64, index: usize) -> ToyShapeSpec {
    gen_toy_shape(category, shape_seed(seed, index))
}
