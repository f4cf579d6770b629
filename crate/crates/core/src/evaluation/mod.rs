//! Chamfer distance, volumetric IoU and co-segmentation scoring.

pub mod chamfer;
pub mod metrics;
pub mod report;

pub use chamfer::{chamfer, chamfer_brute, sample_surface, KdTree};
pub use metrics::{per_label_iou, snap_labels, volumetric_iou, LabelMapping, SegmentationScore};
pub use report::{
    evaluate, mean_decomposition, report_entries, report_text, segment_points, voxel_mesh, EvalOptions, MetricReport,
    ShapeMetrics, CD_SCALE,
};
