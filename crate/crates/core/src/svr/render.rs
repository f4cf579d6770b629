use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::VoxelGrid;
use crate::error::{Error, Result};
use crate::fsutil::{create_dir, read_exact_len, read_json, write_file, write_json};

pub const IMAGE_SIZE: usize = 64;

/// Orthographic view along one axis, from the negative or positive side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct View {
    pub axis: usize,
    pub from_positive: bool,
}

impl View {
    /// Looking along +z.
    pub const FRONT: View = View {
        axis: 2,
        from_positive: false,
    };
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.from_positive { '+' } else { '-' };
        write!(f, "{sign}{}", ['x', 'y', 'z'][self.axis])
    }
}

impl FromStr for View {
    type Err = Error;

    /// `-z` views from the negative z side, `+x` from the positive x side, and so on.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("view `{s}` is not one of ±x, ±y, ±z"));
        let mut c = s.chars();
        let from_positive = match c.next() {
            Some('+') => true,
            Some('-') => false,
            _ => return Err(bad()),
        };
        let axis = match (c.next(), c.next()) {
            (Some('x'), None) => 0,
            (Some('y'), None) => 1,
            (Some('z'), None) => 2,
            _ => return Err(bad()),
        };
        Ok(View { axis, from_positive })
    }
}

/// `IMAGE_SIZE²` intensities in `[0, 1]`, quantized to multiples of 1/255.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewImage {
    pub view: View,
    pub pixels: Vec<f32>,
}

impl ViewImage {
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|&p| (p * 255.0).round() as u8).collect()
    }

    pub fn from_bytes(view: View, bytes: &[u8]) -> Self {
        ViewImage {
            view,
            pixels: bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        }
    }

    pub fn lit(&self) -> usize {
        self.pixels.iter().filter(|&&p| p > 0.0).count()
    }
}

/// Orthographic projections. With `depth_shading` a lit pixel is `1 − k/D` for the first
/// occupied cell `k` along the ray, otherwise it is 1.
pub fn render_views(grid: &VoxelGrid, views: &[View], depth_shading: bool) -> Vec<ViewImage> {
    views.iter().map(|&v| render(grid, v, depth_shading)).collect()
}

fn render(grid: &VoxelGrid, view: View, depth_shading: bool) -> ViewImage {
    let d = grid.dim;
    let (ua, va) = match view.axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let mut pixels = vec![0.0f32; IMAGE_SIZE * IMAGE_SIZE];
    for u in 0..IMAGE_SIZE {
        for v in 0..IMAGE_SIZE {
            let (cu, cv) = (u * d / IMAGE_SIZE, v * d / IMAGE_SIZE);
            let hit = (0..d).find(|&k| {
                let depth = if view.from_positive { d - 1 - k } else { k };
                let mut idx = [0usize; 3];
                idx[view.axis] = depth;
                idx[ua] = cu;
                idx[va] = cv;
                grid.get(idx[0], idx[1], idx[2]) != 0
            });
            if let Some(k) = hit {
                let value = if depth_shading { 1.0 - k as f32 / d as f32 } else { 1.0 };
                pixels[u * IMAGE_SIZE + v] = (value * 255.0).round() / 255.0;
            }
        }
    }
    ViewImage { view, pixels }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageManifest {
    pub size: usize,
    pub views: Vec<String>,
    pub depth_shading: bool,
    pub shape_ids: Vec<String>,
}

/// Writes `manifest.json` and `<id>.<view>.u8` raw image files.
pub fn write_images(dir: &Path, manifest: &ImageManifest, images: &[Vec<ViewImage>]) -> Result<()> {
    create_dir(dir)?;
    write_json(&dir.join("manifest.json"), manifest)?;
    for (id, views) in manifest.shape_ids.iter().zip(images) {
        for img in views {
            write_file(&dir.join(format!("{id}.{}.u8", img.view)), &img.to_bytes())?;
        }
    }
    Ok(())
}

pub fn read_images(dir: &Path) -> Result<(ImageManifest, Vec<Vec<ViewImage>>)> {
    let manifest: ImageManifest = read_json(&dir.join("manifest.json"))?;
    let views: Vec<View> = manifest.views.iter().map(|v| v.parse()).collect::<Result<_>>()?;
    let n = (manifest.size * manifest.size) as u64;
    let images = manifest
        .shape_ids
        .iter()
        .map(|id| {
            views
                .iter()
                .map(|&v| {
                    Ok(ViewImage::from_bytes(
                        v,
                        &read_exact_len(&dir.join(format!("{id}.{v}.u8")), n)?,
                    ))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok((manifest, images))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{voxelize, Category, Primitive, PrimitiveKind, ToyShapeSpec};

    #[test]
    fn empty_and_full_grids() {
        let img = &render_views(&VoxelGrid::empty(32), &[View::FRONT], true)[0];
        assert_eq!(img.lit(), 0);
        let full = VoxelGrid {
            dim: 16,
            occupancy: vec![1; 16 * 16 * 16],
        };
        let img = &render_views(&full, &[View::FRONT], false)[0];
        assert_eq!(img.lit(), IMAGE_SIZE * IMAGE_SIZE);
    }

    #[test]
    fn centered_box_projects_to_half_width_square() {
        let mut spec = ToyShapeSpec::empty(Category::Table);
        spec.primitives.push(Primitive {
            kind: PrimitiveKind::Box,
            center: [0.0; 3],
            half_extents: [0.25; 3],
            label: 0,
        });
        let grid = voxelize(&spec, 64);
        for view in ["-x", "+y", "-z"] {
            let img = &render_views(&grid, &[view.parse().unwrap()], true)[0];
            let lit = img.lit() as i64;
            assert!((lit - 32 * 32).abs() <= 2 * 33 + 1, "{view}: {lit}");
            let rows = (0..IMAGE_SIZE)
                .filter(|u| (0..IMAGE_SIZE).any(|v| img.pixels[u * IMAGE_SIZE + v] > 0.0))
                .count();
            assert!((rows as i64 - 32).abs() <= 1, "{rows}");
        }
    }

    #[test]
    fn view_names_round_trip() {
        for s in ["+x", "-x", "+y", "-y", "+z", "-z"] {
            assert_eq!(s.parse::<View>().unwrap().to_string(), s);
        }
        assert!("z".parse::<View>().is_err());
    }

    #[test]
    fn images_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = crate::data::voxelize(&crate::data::gen_toy_shape(Category::Chair, 1), 32);
        let imgs = vec![render_views(&grid, &[View::FRONT, "+x".parse().unwrap()], true)];
        let m = ImageManifest {
            size: IMAGE_SIZE,
            views: vec!["-z".into(), "+x".into()],
            depth_shading: true,
            shape_ids: vec!["chair-00000".into()],
        };
        write_images(dir.path(), &m, &imgs).unwrap();
        let (m2, back) = read_images(dir.path()).unwrap();
        assert_eq!(m, m2);
        assert_eq!(back, imgs);
    }
}
