//! Dense field sampling, marching cubes, part labelling and hierarchy export.

pub mod export;
pub mod grid;
pub mod mc;
pub mod mesh;

pub use export::{
    build_hierarchy, export_hierarchy, fmt_g6, label_mesh, mesh_to_obj, HierarchyNode, StructureHierarchy,
};
pub use grid::{eval_union_grid, grid_points, node_fields, ScalarGrid};
pub use mc::marching_cubes;
pub use mesh::Mesh;
