use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::{eval_union_grid, grid_points, node_fields};
use super::mc::marching_cubes;
use super::mesh::Mesh;
use crate::error::Result;
use crate::fsutil::{write_dir_atomically, write_file, write_json};
use crate::network::hierarchy::{argmax_at, classify_rows};
use crate::network::Network;
use crate::nn::Real;

/// Formats like C's `%g`: six significant digits, trailing zeros removed.
pub fn fmt_g6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.5e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let mant = trim_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mant}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Labels every vertex with the leaf part (0-based) whose field is largest there.
///
/// Vertices whose largest field does not exceed `tau` take the label of the nearest
/// labelled vertex along mesh edges; among equally near labels the one with the larger
/// field at the vertex wins. Components without any labelled vertex fall back to argmax.
pub fn label_mesh<F: Real>(mesh: &Mesh, net: &Network<F>, root: &[F], level: usize, tau: f64) -> Mesh {
    let codes = net.codes(root);
    let pts: Vec<[F; 3]> = mesh.vertices.iter().map(|v| v.map(F::c)).collect();
    let f = node_fields(net, &codes, level, &pts);
    let parts = assign_parts(mesh, &f, net.config.nodes_at(level), tau);
    Mesh {
        vertex_part: Some(parts),
        ..mesh.clone()
    }
}

pub(crate) fn assign_parts<F: Real>(mesh: &Mesh, fields: &[F], nodes: usize, tau: f64) -> Vec<u32> {
    let n = mesh.vertices.len();
    let direct = classify_rows(fields, n, tau);
    let mut label: Vec<Option<u32>> = direct.iter().map(|c| c.map(|p| p as u32)).collect();
    let adj = mesh.adjacency();
    let mut dist: Vec<u32> = label.iter().map(|l| if l.is_some() { 0 } else { u32::MAX }).collect();
    let mut frontier: Vec<usize> = (0..n).filter(|&v| label[v].is_some()).collect();
    let mut d = 0;
    while !frontier.is_empty() {
        d += 1;
        let mut next = Vec::new();
        for &v in &frontier {
            for &u in &adj[v] {
                let u = u as usize;
                if dist[u] == u32::MAX {
                    dist[u] = d;
                    next.push(u);
                }
            }
        }
        next.sort_unstable();
        for &u in &next {
            let best = adj[u]
                .iter()
                .filter(|&&w| dist[w as usize] == d - 1)
                .filter_map(|&w| label[w as usize])
                .max_by(|&a, &b| {
                    let fa = fields[a as usize * n + u];
                    let fb = fields[b as usize * n + u];
                    fa.partial_cmp(&fb).unwrap_or(std::cmp::Ordering::Equal).then(b.cmp(&a))
                });
            label[u] = best;
        }
        frontier = next;
    }
    (0..n)
        .map(|v| label[v].unwrap_or_else(|| argmax_at(fields, n, nodes, v).0 as u32))
        .collect()
}

/// Part of each triangle: majority of its vertex parts, lowest part when all differ.
pub fn triangle_parts(mesh: &Mesh) -> Vec<u32> {
    let parts = mesh.vertex_part.as_ref().expect("labelled mesh");
    mesh.triangles
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|i| parts[i as usize]);
            if a == b || a == c {
                a
            } else if b == c {
                b
            } else {
                a.min(b).min(c)
            }
        })
        .collect()
}

/// Wavefront text with `g part_<i>` groups for every node `i = 1..=groups` and a
/// `#vp <i>` comment after each vertex.
pub fn mesh_to_obj(mesh: &Mesh, groups: usize, title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {title}");
    let parts = mesh.vertex_part.clone().unwrap_or_else(|| vec![0; mesh.vertices.len()]);
    for (v, p) in mesh.vertices.iter().zip(&parts) {
        let _ = writeln!(s, "v {} {} {}", fmt_g6(v[0]), fmt_g6(v[1]), fmt_g6(v[2]));
        let _ = writeln!(s, "#vp {}", p + 1);
    }
    let tparts = if mesh.vertex_part.is_some() {
        triangle_parts(mesh)
    } else {
        vec![0; mesh.triangles.len()]
    };
    for g in 0..groups as u32 {
        let _ = writeln!(s, "g part_{}", g + 1);
        for (t, _) in mesh.triangles.iter().zip(&tparts).filter(|(_, &p)| p == g) {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyNode {
    /// `n<level>_<index>`, index 1-based; the root is `n0_1`.
    pub id: String,
    pub level: usize,
    pub index: usize,
    pub children: Vec<String>,
    /// Surface file and group holding this node's triangles; empty for the root.
    pub mesh: String,
    pub group: String,
    /// Fraction of the unit cube where the node's field exceeds the threshold.
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureHierarchy {
    pub levels: usize,
    pub resolution: usize,
    pub threshold: f64,
    pub nodes: Vec<HierarchyNode>,
}

pub fn node_id(level: usize, index: usize) -> String {
    format!("n{level}_{index}")
}

/// Per-level meshes and the node tree for one shape code.
pub struct HierarchyExport {
    pub hierarchy: StructureHierarchy,
    pub meshes: Vec<Mesh>,
}

/// Extracts every level at `dim³` and labels vertices by node.
pub fn build_hierarchy<F: Real>(net: &Network<F>, root: &[F], dim: usize) -> HierarchyExport {
    let tau = net.config.inside_threshold;
    let levels = net.field_levels();
    let codes = net.codes(root);
    let pts = grid_points::<F>(dim);
    let cells = (dim * dim * dim) as f64;
    let mut nodes = vec![HierarchyNode {
        id: node_id(0, 1),
        level: 0,
        index: 1,
        children: (1..=net.config.nodes_at(1)).map(|i| node_id(1, i)).collect(),
        mesh: String::new(),
        group: String::new(),
        volume: 0.0,
    }];
    let mut meshes = Vec::with_capacity(levels);
    for j in 1..=levels {
        let count = net.config.nodes_at(j);
        let f = node_fields(net, &codes, j, &pts);
        let n = pts.len();
        for i in 1..=count {
            let inside = f[(i - 1) * n..i * n].iter().filter(|v| v.f64() > tau).count();
            let children = if j < levels {
                vec![node_id(j + 1, 2 * i - 1), node_id(j + 1, 2 * i)]
            } else {
                Vec::new()
            };
            nodes.push(HierarchyNode {
                id: node_id(j, i),
                level: j,
                index: i,
                children,
                mesh: format!("level_{j}.obj"),
                group: format!("part_{i}"),
                volume: inside as f64 / cells,
            });
        }
        let union = eval_union_grid(net, root, j, dim);
        nodes[0].volume = nodes[0].volume.max(union.binarize(tau).occupied_count() as f64 / cells);
        let mesh = marching_cubes(&union, tau);
        meshes.push(label_mesh(&mesh, net, root, j, tau));
    }
    HierarchyExport {
        hierarchy: StructureHierarchy {
            levels,
            resolution: dim,
            threshold: tau,
            nodes,
        },
        meshes,
    }
}

/// Writes `hierarchy.json` and `level_<j>.obj` for every level into `dir`, atomically.
pub fn export_hierarchy<F: Real>(net: &Network<F>, root: &[F], dim: usize, dir: &Path) -> Result<StructureHierarchy> {
    let ex = build_hierarchy(net, root, dim);
    write_dir_atomically(dir, |tmp| {
        write_json(&tmp.join("hierarchy.json"), &ex.hierarchy)?;
        for (j, mesh) in ex.meshes.iter().enumerate() {
            let text = mesh_to_obj(mesh, net.config.nodes_at(j + 1), &format!("level {}", j + 1));
            write_file(&tmp.join(format!("level_{}.obj", j + 1)), text.as_bytes())?;
        }
        Ok(())
    })?;
    Ok(ex.hierarchy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkConfig;

    #[test]
    fn g6_matches_printf() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (-0.5, "-0.5"),
            (0.123456789, "0.123457"),
            (123456.7, "123457"),
            (1234567.0, "1.23457e+06"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (999999.5, "1e+06"),
            (-0.03125, "-0.03125"),
        ];
        for (x, s) in cases {
            assert_eq!(fmt_g6(x), s, "{x}");
        }
    }

    fn square_mesh() -> Mesh {
        // strip of 4 vertices along x: 0-1-2-3 with two triangles per gap
        Mesh {
            vertices: vec![
                [-0.3, 0.0, 0.0],
                [-0.1, 0.0, 0.0],
                [0.1, 0.0, 0.0],
                [0.3, 0.0, 0.0],
                [0.0, 0.1, 0.0],
            ],
            triangles: vec![[0, 1, 4], [1, 2, 4], [2, 3, 4]],
            vertex_part: None,
        }
    }

    #[test]
    fn sub_threshold_vertices_inherit_nearest_label() {
        let m = square_mesh();
        // two nodes; vertex 0 clearly node 0, vertex 3 clearly node 1, others weak
        let f: Vec<f64> = vec![
            0.9, 0.3, 0.2, 0.1, 0.2, //
            0.1, 0.2, 0.3, 0.9, 0.1,
        ];
        let parts = assign_parts(&m, &f, 2, 0.5);
        assert_eq!(parts, vec![0, 0, 1, 1, 0]);
    }

    #[test]
    fn labels_follow_vertex_permutation() {
        let m = square_mesh();
        let f: Vec<f64> = vec![0.9, 0.3, 0.2, 0.1, 0.2, 0.1, 0.2, 0.3, 0.9, 0.1];
        let base = assign_parts(&m, &f, 2, 0.5);
        let perm = [3usize, 0, 4, 1, 2];
        let mut inv = [0usize; 5];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let pm = Mesh {
            vertices: perm.iter().map(|&o| m.vertices[o]).collect(),
            triangles: m.triangles.iter().map(|t| t.map(|v| inv[v as usize] as u32)).collect(),
            vertex_part: None,
        };
        let pf: Vec<f64> = (0..2)
            .flat_map(|node| perm.iter().map(move |&o| (node, o)))
            .map(|(node, o)| f[node * 5 + o])
            .collect();
        let got = assign_parts(&pm, &pf, 2, 0.5);
        for (new, &old) in perm.iter().enumerate() {
            assert_eq!(got[new], base[old]);
        }
    }

    #[test]
    fn export_is_deterministic_and_complete() {
        let cfg = NetworkConfig {
            levels: 3,
            ..NetworkConfig::tiny()
        };
        let net = Network::<f32>::new(cfg).unwrap();
        let root = vec![0.5f32; 8];
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        let h = export_hierarchy(&net, &root, 16, &a).unwrap();
        export_hierarchy(&net, &root, 16, &b).unwrap();
        for f in ["hierarchy.json", "level_1.obj", "level_2.obj", "level_3.obj"] {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        }
        let obj = std::fs::read_to_string(a.join("level_3.obj")).unwrap();
        assert_eq!(obj.lines().filter(|l| l.starts_with("g part_")).count(), 8);
        for n in &h.nodes {
            if n.level >= 1 && n.level < 3 {
                assert_eq!(
                    n.children,
                    vec![node_id(n.level + 1, 2 * n.index - 1), node_id(n.level + 1, 2 * n.index)]
                );
            }
        }
        assert_eq!(h.nodes.len(), 1 + 2 + 4 + 8);
    }
}
