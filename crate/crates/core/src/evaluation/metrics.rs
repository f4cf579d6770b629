use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{VoxelGrid, OUTSIDE_LABEL};
use crate::error::{Error, Result};

/// `|pred ∧ gt| / |pred ∨ gt|`, or 1 when both grids are empty.
pub fn volumetric_iou(pred: &VoxelGrid, gt: &VoxelGrid) -> Result<f64> {
    if pred.dim != gt.dim {
        return Err(Error::DimensionMismatch {
            expected: gt.dim,
            actual: pred.dim,
            context: "IoU grids".into(),
        });
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in pred.occupancy.iter().zip(&gt.occupancy) {
        let (a, b) = (a != 0, b != 0);
        inter += usize::from(a && b);
        union += usize::from(a || b);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Branch to ground-truth label assignment from majority voting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMapping {
    pub branch_to_label: BTreeMap<u32, u8>,
}

impl LabelMapping {
    pub fn get(&self, branch: u32) -> Option<u8> {
        self.branch_to_label.get(&branch).copied()
    }
}

/// Maps every voting branch to the label it co-occurs with most (lower label on ties).
/// Points labelled as outside are skipped.
pub fn snap_labels(pred_branch: &[u32], gt_label: &[u8]) -> Result<LabelMapping> {
    if pred_branch.len() != gt_label.len() {
        return Err(Error::DimensionMismatch {
            expected: gt_label.len(),
            actual: pred_branch.len(),
            context: "branch and label arrays".into(),
        });
    }
    let mut votes: BTreeMap<u32, BTreeMap<u8, usize>> = BTreeMap::new();
    for (&b, &l) in pred_branch.iter().zip(gt_label) {
        if l != OUTSIDE_LABEL {
            *votes.entry(b).or_default().entry(l).or_insert(0) += 1;
        }
    }
    if votes.is_empty() {
        return Err(Error::Empty("no labelled points to vote with".into()));
    }
    let branch_to_label = votes
        .into_iter()
        .map(|(b, counts)| {
            // BTreeMap iterates labels ascending, so `>` keeps the lower label on ties
            let mut best = (0u8, 0usize);
            for (l, c) in counts {
                if c > best.1 {
                    best = (l, c);
                }
            }
            (b, best.0)
        })
        .collect();
    Ok(LabelMapping { branch_to_label })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationScore {
    pub per_label_iou: BTreeMap<u8, f64>,
    pub miou: f64,
}

/// Per-label IoU of mapped predictions over `labels`; labels absent from both the
/// prediction and the ground truth are left out of the mean.
pub fn per_label_iou(pred_branch: &[u32], gt_label: &[u8], mapping: &LabelMapping, labels: &[u8]) -> SegmentationScore {
    let mut per_label_iou = BTreeMap::new();
    for &l in labels {
        let (mut inter, mut union) = (0usize, 0usize);
        for (&b, &g) in pred_branch.iter().zip(gt_label) {
            if g == OUTSIDE_LABEL {
                continue;
            }
            let p = mapping.get(b) == Some(l);
            let t = g == l;
            inter += usize::from(p && t);
            union += usize::from(p || t);
        }
        if union > 0 {
            per_label_iou.insert(l, inter as f64 / union as f64);
        }
    }
    let miou = if per_label_iou.is_empty() {
        0.0
    } else {
        per_label_iou.values().sum::<f64>() / per_label_iou.len() as f64
    };
    SegmentationScore { per_label_iou, miou }
}
