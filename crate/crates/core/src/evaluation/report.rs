use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::chamfer::{chamfer, sample_surface};
use super::metrics::{per_label_iou, snap_labels, volumetric_iou, LabelMapping};
use crate::data::{Category, ShapeRecord, VoxelGrid, OUTSIDE_LABEL};
use crate::error::{Error, Result};
use crate::extraction::{eval_union_grid, marching_cubes, node_fields, Mesh, ScalarGrid};
use crate::losses::decomposition_total;
use crate::network::hierarchy::argmax_at;
use crate::network::{FieldTree, Network};

/// Chamfer values are reported multiplied by this factor.
pub const CD_SCALE: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Field level to score; `None` means the leaf level.
    pub level: Option<usize>,
    pub mc_resolution: usize,
    pub surface_points: usize,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            level: None,
            mc_resolution: 64,
            surface_points: 4096,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeMetrics {
    pub id: String,
    /// `None` when the prediction has no surface.
    pub cd: Option<f64>,
    pub iou: f64,
}

/// Aggregate scores for one category at one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub category: String,
    pub level: usize,
    pub shapes: usize,
    /// Mean Chamfer distance ×10³ over shapes with a non-empty prediction.
    pub cd: f64,
    pub empty_predictions: usize,
    pub iou: f64,
    pub per_label_iou: BTreeMap<String, f64>,
    pub miou: Option<f64>,
    pub mapping: Option<LabelMapping>,
    pub per_shape: Vec<ShapeMetrics>,
}

/// Surface of a binary voxel grid.
pub fn voxel_mesh(grid: &VoxelGrid) -> Mesh {
    let scalar = ScalarGrid {
        dim: grid.dim,
        values: grid.occupancy.iter().map(|&v| v as f32).collect(),
    };
    marching_cubes(&scalar, 0.5)
}

/// Leaf branch with the largest field at each point, no threshold.
pub fn segment_points(net: &Network<f32>, root: &[f32], points: &[[f32; 3]]) -> Vec<u32> {
    let level = net.field_levels();
    let codes = net.codes(root);
    let f = node_fields(net, &codes, level, points);
    let nodes = net.config.nodes_at(level);
    (0..points.len())
        .map(|p| argmax_at(&f, points.len(), nodes, p).0 as u32)
        .collect()
}

struct Prediction {
    mesh: Mesh,
    grid: VoxelGrid,
    branches: Vec<u32>,
}

fn predict(net: Option<&Network<f32>>, shape: &ShapeRecord, level: usize, opts: &EvalOptions) -> Result<Prediction> {
    let labels = shape.samples.labels.as_deref();
    let Some(net) = net else {
        // reference prediction: the ground truth itself
        return Ok(Prediction {
            mesh: voxel_mesh(&shape.voxels),
            grid: shape.voxels.clone(),
            branches: labels
                .map(|l| l.iter().map(|&x| x as u32).collect())
                .unwrap_or_default(),
        });
    };
    let root = net.encode(&shape.voxels)?;
    let tau = net.config.inside_threshold;
    let mesh = marching_cubes(&eval_union_grid(net, &root, level, opts.mc_resolution), tau);
    let grid = eval_union_grid(net, &root, level, shape.voxels.dim).binarize(tau);
    let branches = match labels {
        Some(_) => segment_points(net, &root, &shape.samples.points),
        None => Vec::new(),
    };
    Ok(Prediction { mesh, grid, branches })
}

/// Scores `net` (or the ground truth itself when `None`) on every shape, grouped by category.
///
/// Segmentation uses ground-truth inside points; votes for label snapping are pooled over
/// all shapes of a category.
pub fn evaluate(net: Option<&Network<f32>>, shapes: &[ShapeRecord], opts: &EvalOptions) -> Result<Vec<MetricReport>> {
    if shapes.is_empty() {
        return Err(Error::Empty("no shapes to evaluate".into()));
    }
    let level = opts.level.unwrap_or_else(|| net.map_or(1, |n| n.field_levels()));
    if let Some(n) = net {
        if level == 0 || level > n.field_levels() {
            return Err(Error::LevelOutOfRange {
                level,
                max: n.field_levels(),
            });
        }
    }
    let mut reports = Vec::new();
    for cat in Category::ALL {
        let group: Vec<&ShapeRecord> = shapes.iter().filter(|s| s.category() == Some(cat)).collect();
        if group.is_empty() {
            continue;
        }
        let mut per_shape = Vec::with_capacity(group.len());
        let mut branches = Vec::new();
        let mut gt = Vec::new();
        for (k, shape) in group.iter().enumerate() {
            let pred = predict(net, shape, level, opts)?;
            let gt_mesh = voxel_mesh(&shape.voxels);
            let seed = opts.seed.wrapping_add(k as u64);
            let cd = if pred.mesh.is_empty() || gt_mesh.is_empty() {
                None
            } else {
                let a = sample_surface(&pred.mesh, opts.surface_points, seed)?;
                let b = sample_surface(&gt_mesh, opts.surface_points, seed)?;
                Some(chamfer(&a, &b)? * CD_SCALE)
            };
            per_shape.push(ShapeMetrics {
                id: shape.id.clone(),
                cd,
                iou: volumetric_iou(&pred.grid, &shape.voxels)?,
            });
            if let Some(labels) = &shape.samples.labels {
                for (i, &l) in labels.iter().enumerate() {
                    if l != OUTSIDE_LABEL && shape.samples.values[i] == 1 {
                        branches.push(pred.branches[i]);
                        gt.push(l);
                    }
                }
            }
        }
        let cds: Vec<f64> = per_shape.iter().filter_map(|s| s.cd).collect();
        let cd = if cds.is_empty() {
            f64::NAN
        } else {
            cds.iter().sum::<f64>() / cds.len() as f64
        };
        let iou = per_shape.iter().map(|s| s.iou).sum::<f64>() / per_shape.len() as f64;
        let (per_label, miou, mapping) = if gt.is_empty() {
            (BTreeMap::new(), None, None)
        } else {
            let mapping = snap_labels(&branches, &gt)?;
            let label_ids: Vec<u8> = (0..cat.label_names().len() as u8).collect();
            let score = per_label_iou(&branches, &gt, &mapping, &label_ids);
            let named = score
                .per_label_iou
                .iter()
                .map(|(&l, &v)| (cat.label_names()[l as usize].to_string(), v))
                .collect();
            (named, Some(score.miou), Some(mapping))
        };
        reports.push(MetricReport {
            category: cat.name().to_string(),
            level,
            shapes: group.len(),
            cd,
            empty_predictions: per_shape.len() - cds.len(),
            iou,
            per_label_iou: per_label,
            miou,
            mapping,
            per_shape,
        });
    }
    Ok(reports)
}

/// Mean over shapes of the decomposition loss on each shape's stored samples.
pub fn mean_decomposition(net: &Network<f32>, shapes: &[ShapeRecord]) -> Result<f64> {
    if shapes.is_empty() {
        return Err(Error::Empty("no shapes".into()));
    }
    let levels = net.field_levels();
    let mut sum = 0.0;
    for s in shapes {
        let root = net.encode(&s.voxels)?;
        let codes = net.codes(&root);
        let fields = (1..=levels)
            .map(|j| node_fields(net, &codes, j, &s.samples.points))
            .collect();
        let tree = FieldTree {
            batch: s.samples.len(),
            fields,
            codes,
        };
        sum += decomposition_total(&tree, levels);
    }
    Ok(sum / shapes.len() as f64)
}

/// Flat `category/metric/level → value` map for machine consumption.
pub fn report_entries(reports: &[MetricReport]) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for r in reports {
        let key = |m: &str| format!("{}/{}/{}", r.category, m, r.level);
        out.insert(key("cd"), r.cd);
        out.insert(key("iou"), r.iou);
        if let Some(m) = r.miou {
            out.insert(key("miou"), m);
        }
        for (label, v) in &r.per_label_iou {
            out.insert(key(&format!("iou_{label}")), *v);
        }
    }
    out
}

/// Human-readable table.
pub fn report_text(reports: &[MetricReport]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<8} {:>5} {:>6} {:>10} {:>8} {:>8}  per-label IoU",
        "category", "level", "shapes", "CD(x1e3)", "IoU", "mIoU"
    );
    for r in reports {
        let miou = r.miou.map_or("-".to_string(), |m| format!("{m:.4}"));
        let labels: Vec<String> = r.per_label_iou.iter().map(|(l, v)| format!("{l}={v:.4}")).collect();
        let _ = writeln!(
            s,
            "{:<8} {:>5} {:>6} {:>10.4} {:>8.4} {:>8}  {}",
            r.category,
            r.level,
            r.shapes,
            r.cd,
            r.iou,
            miou,
            labels.join(" ")
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_shapes;

    #[test]
    fn reference_prediction_is_perfect() {
        let shapes = generate_shapes(Category::Chair, 2, 3, 32, 16).unwrap();
        let r = evaluate(None, &shapes, &EvalOptions::default()).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].cd, 0.0);
        assert_eq!(r[0].iou, 1.0);
        assert_eq!(r[0].miou, Some(1.0));
        let e = report_entries(&r);
        assert_eq!(e["chair/iou/1"], 1.0);
        assert!(report_text(&r).contains("chair"));
    }
}
