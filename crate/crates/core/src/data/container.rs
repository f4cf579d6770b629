//! On-disk dataset container.
//!
//! ```text
//! <root>/manifest.json
//! <root>/shapes/<id>/voxels.u8    D³ bytes, x-major
//! <root>/shapes/<id>/points.f32   S×3 little-endian f32, row-major
//! <root>/shapes/<id>/values.u8    S bytes
//! <root>/shapes/<id>/labels.u8    S bytes (optional)
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::sampling::PointSampleSet;
use super::shapes::Category;
use super::voxel::VoxelGrid;
use crate::error::{Error, Result};
use crate::fsutil::{f32_bytes, f32_from_bytes, read_exact_len, write_file, write_json};

pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub shape_count: usize,
    pub voxel_dim: usize,
    pub points_per_shape: usize,
    pub has_labels: bool,
    pub category_names: Vec<String>,
    pub shape_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeRecord {
    pub id: String,
    pub voxels: VoxelGrid,
    pub samples: PointSampleSet,
}

impl ShapeRecord {
    /// Category encoded in the id prefix (`<category>-<index>`).
    pub fn category(&self) -> Option<Category> {
        self.id.split('-').next().and_then(|c| c.parse().ok())
    }
}

impl DatasetManifest {
    pub fn describe(shapes: &[ShapeRecord]) -> Self {
        let mut category_names: Vec<String> = Vec::new();
        for s in shapes {
            if let Some(c) = s.category() {
                if !category_names.iter().any(|n| n == c.name()) {
                    category_names.push(c.name().to_string());
                }
            }
        }
        DatasetManifest {
            version: DATASET_VERSION,
            shape_count: shapes.len(),
            voxel_dim: shapes.first().map_or(0, |s| s.voxels.dim),
            points_per_shape: shapes.first().map_or(0, |s| s.samples.len()),
            has_labels: shapes.first().is_some_and(|s| s.samples.labels.is_some()),
            category_names,
            shape_ids: shapes.iter().map(|s| s.id.clone()).collect(),
        }
    }

    fn check_against(&self, shapes: &[ShapeRecord]) -> Result<()> {
        if self.shape_count != shapes.len() {
            return Err(Error::Inconsistent(format!(
                "manifest shape_count {} but {} records",
                self.shape_count,
                shapes.len()
            )));
        }
        if self.shape_ids.len() != self.shape_count {
            return Err(Error::Inconsistent(format!(
                "manifest shape_count {} but {} shape ids",
                self.shape_count,
                self.shape_ids.len()
            )));
        }
        for (id, s) in self.shape_ids.iter().zip(shapes) {
            if *id != s.id {
                return Err(Error::Inconsistent(format!("shape id {} listed as {id}", s.id)));
            }
            if s.voxels.dim != self.voxel_dim || s.voxels.occupancy.len() != self.voxel_dim.pow(3) {
                return Err(Error::Inconsistent(format!("shape {} voxel dim differs", s.id)));
            }
            if s.samples.len() != self.points_per_shape {
                return Err(Error::Inconsistent(format!("shape {} point count differs", s.id)));
            }
            if s.samples.labels.is_some() != self.has_labels {
                return Err(Error::Inconsistent(format!("shape {} label presence differs", s.id)));
            }
            s.samples.check()?;
        }
        Ok(())
    }
}

pub fn write_dataset(shapes: &[ShapeRecord], manifest: &DatasetManifest, root: &Path) -> Result<()> {
    manifest.check_against(shapes)?;
    let shapes_dir = root.join("shapes");
    fs::create_dir_all(&shapes_dir).map_err(|e| Error::io(&shapes_dir, e))?;
    write_json(&root.join("manifest.json"), manifest)?;
    for s in shapes {
        let dir = shapes_dir.join(&s.id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_file(&dir.join("voxels.u8"), &s.voxels.occupancy)?;
        let flat: Vec<f32> = s.samples.points.iter().flatten().copied().collect();
        let pts = f32_bytes(&flat);
        write_file(&dir.join("points.f32"), &pts)?;
        write_file(&dir.join("values.u8"), &s.samples.values)?;
        if let Some(labels) = &s.samples.labels {
            write_file(&dir.join("labels.u8"), labels)?;
        }
    }
    Ok(())
}

pub fn read_manifest(root: &Path) -> Result<DatasetManifest> {
    let mpath = root.join("manifest.json");
    let text = fs::read_to_string(&mpath).map_err(|e| Error::Corrupt {
        path: mpath.clone(),
        reason: e.to_string(),
    })?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Corrupt {
        path: mpath.clone(),
        reason: e.to_string(),
    })?;
    let version = raw
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Corrupt {
            path: mpath.clone(),
            reason: "missing version".into(),
        })? as u32;
    if version != DATASET_VERSION {
        return Err(Error::VersionMismatch {
            path: mpath,
            found: version,
            expected: DATASET_VERSION,
        });
    }
    serde_json::from_value(raw).map_err(|e| Error::Corrupt {
        path: mpath,
        reason: e.to_string(),
    })
}

pub fn read_dataset(root: &Path) -> Result<(Vec<ShapeRecord>, DatasetManifest)> {
    let manifest = read_manifest(root)?;
    let shapes_dir = root.join("shapes");
    let on_disk = fs::read_dir(&shapes_dir)
        .map_err(|e| Error::Corrupt {
            path: shapes_dir.clone(),
            reason: e.to_string(),
        })?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .count();
    if on_disk != manifest.shape_count || manifest.shape_ids.len() != manifest.shape_count {
        return Err(Error::Inconsistent(format!(
            "manifest shape_count {} but {} shape ids and {} shape directories",
            manifest.shape_count,
            manifest.shape_ids.len(),
            on_disk
        )));
    }
    let d = manifest.voxel_dim as u64;
    let s = manifest.points_per_shape as u64;
    let mut shapes = Vec::with_capacity(manifest.shape_count);
    for id in &manifest.shape_ids {
        let dir: PathBuf = shapes_dir.join(id);
        let occupancy = read_exact_len(&dir.join("voxels.u8"), d * d * d)?;
        let pts = read_exact_len(&dir.join("points.f32"), s * 12)?;
        let points = f32_from_bytes(&pts)
            .chunks_exact(3)
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        let values = read_exact_len(&dir.join("values.u8"), s)?;
        let labels = if manifest.has_labels {
            Some(read_exact_len(&dir.join("labels.u8"), s)?)
        } else {
            None
        };
        shapes.push(ShapeRecord {
            id: id.clone(),
            voxels: VoxelGrid {
                dim: manifest.voxel_dim,
                occupancy,
            },
            samples: PointSampleSet { points, values, labels },
        });
    }
    Ok((shapes, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_shapes;

    fn small() -> Vec<ShapeRecord> {
        generate_shapes(Category::Table, 3, 11, 16, 16).unwrap()
    }

    #[test]
    fn round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let shapes = small();
        let m = DatasetManifest::describe(&shapes);
        write_dataset(&shapes, &m, dir.path()).unwrap();
        let (back, m2) = read_dataset(dir.path()).unwrap();
        assert_eq!(m, m2);
        assert_eq!(shapes, back);
    }

    #[test]
    fn truncated_voxels_report_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let shapes = small();
        write_dataset(&shapes, &DatasetManifest::describe(&shapes), dir.path()).unwrap();
        let vpath = dir.path().join("shapes").join(&shapes[1].id).join("voxels.u8");
        let bytes = fs::read(&vpath).unwrap();
        fs::write(&vpath, &bytes[..bytes.len() - 7]).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn shape_count_disagreement_is_inconsistent() {
        let shapes = small();
        let mut m = DatasetManifest::describe(&shapes);
        m.shape_count = 2;
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            write_dataset(&shapes, &m, dir.path()),
            Err(Error::Inconsistent(_))
        ));

        let good = DatasetManifest::describe(&shapes);
        write_dataset(&shapes, &good, dir.path()).unwrap();
        let mut text: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        text["shape_count"] = 2.into();
        fs::write(dir.path().join("manifest.json"), text.to_string()).unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::Inconsistent(_))));
    }

    #[test]
    fn version_and_corruption_are_distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        let shapes = small();
        write_dataset(&shapes, &DatasetManifest::describe(&shapes), dir.path()).unwrap();
        let mpath = dir.path().join("manifest.json");
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&mpath).unwrap()).unwrap();
        v["version"] = 9.into();
        fs::write(&mpath, v.to_string()).unwrap();
        assert!(matches!(
            read_dataset(dir.path()),
            Err(Error::VersionMismatch { found: 9, .. })
        ));
        fs::write(&mpath, "{ not json").unwrap();
        assert!(matches!(read_dataset(dir.path()), Err(Error::Corrupt { .. })));
    }
}
