//! Procedural toy shapes with analytic occupancy and part labels.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label stored for points outside every primitive.
pub const OUTSIDE_LABEL: u8 = 255;

/// Half-width of the canonical cube every shape lives in.
pub const CUBE_HALF: f64 = 0.5;

const FLOOR_Y: f64 = -0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Table,
    Chair,
    Plane,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Table, Category::Chair, Category::Plane];

    pub fn name(self) -> &'static str {
        match self {
            Category::Table => "table",
            Category::Chair => "chair",
            Category::Plane => "plane",
        }
    }

    /// Semantic label names, indexed by label id.
    pub fn label_names(self) -> &'static [&'static str] {
        match self {
            Category::Table => &["top", "support"],
            Category::Chair => &["back", "seat", "leg"],
            Category::Plane => &["body", "wing", "tail"],
        }
    }

    pub fn primitive_count(self) -> usize {
        match self {
            Category::Table => 5,
            Category::Chair => 6,
            Category::Plane => 4,
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "table" => Ok(Category::Table),
            "chair" => Ok(Category::Chair),
            "plane" | "airplane" => Ok(Category::Plane),
            _ => Err(Error::UnknownCategory(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimitiveKind {
    Box,
    Ellipsoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub kind: PrimitiveKind,
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
    pub label: u8,
}

impl Primitive {
    fn cuboid(center: [f64; 3], half_extents: [f64; 3], label: u8) -> Self {
        Primitive {
            kind: PrimitiveKind::Box,
            center,
            half_extents,
            label,
        }
    }

    /// Closed membership test.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        match self.kind {
            PrimitiveKind::Box => (0..3).all(|d| (p[d] - self.center[d]).abs() <= self.half_extents[d]),
            PrimitiveKind::Ellipsoid => {
                let q: f64 = (0..3)
                    .map(|d| {
                        let t = (p[d] - self.center[d]) / self.half_extents[d];
                        t * t
                    })
                    .sum();
                q <= 1.0
            }
        }
    }

    pub fn volume(&self) -> f64 {
        let [a, b, c] = self.half_extents;
        match self.kind {
            PrimitiveKind::Box => 8.0 * a * b * c,
            PrimitiveKind::Ellipsoid => 4.0 / 3.0 * std::f64::consts::PI * a * b * c,
        }
    }

    fn inside_cube(&self) -> bool {
        (0..3).all(|d| {
            self.half_extents[d] > 0.0
                && self.center[d] - self.half_extents[d] >= -CUBE_HALF
                && self.center[d] + self.half_extents[d] <= CUBE_HALF
        })
    }
}

/// A toy shape: a labelled union of boxes and ellipsoids in `[-0.5, 0.5]³`, y up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyShapeSpec {
    pub category: Category,
    pub primitives: Vec<Primitive>,
}

impl ToyShapeSpec {
    pub fn empty(category: Category) -> Self {
        ToyShapeSpec {
            category,
            primitives: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self.primitives.iter().position(|p| !p.inside_cube()) {
            return Err(Error::InvalidInput(format!("primitive {i} leaves the canonical cube")));
        }
        let mut labels: Vec<u8> = self.primitives.iter().map(|p| p.label).collect();
        labels.sort_unstable();
        labels.dedup();
        if labels.iter().enumerate().any(|(i, &l)| l as usize != i) {
            return Err(Error::InvalidInput("labels are not contiguous from 0".into()));
        }
        Ok(())
    }

    pub fn label_set(&self) -> Vec<u8> {
        let mut labels: Vec<u8> = self.primitives.iter().map(|p| p.label).collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }

    /// Label of the first primitive containing `p`, or [`OUTSIDE_LABEL`].
    pub fn label_at(&self, p: [f64; 3]) -> u8 {
        self.primitives
            .iter()
            .find(|prim| prim.contains(p))
            .map_or(OUTSIDE_LABEL, |prim| prim.label)
    }

    /// Sum of primitive volumes; equals the union volume when interiors are disjoint.
    pub fn primitive_volume(&self) -> f64 {
        self.primitives.iter().map(Primitive::volume).sum()
    }
}

/// Ground-truth occupancy: 1 iff `p` lies in the union of primitives.
pub fn occupancy(spec: &ToyShapeSpec, p: [f64; 3]) -> u8 {
    spec.primitives.iter().any(|prim| prim.contains(p)) as u8
}

/// Deterministic toy shape for `(category, seed)`.
///
/// Parameter ranges (all half-extents, canonical units):
///
/// | part | ranges |
/// |------|--------|
/// | table top | x,z ∈ [0.25, 0.4], thickness ∈ [0.02, 0.05], center y ∈ [0.05, 0.25] |
/// | table/chair leg | cross-section ∈ [0.015, 0.04], inset ∈ [0, 0.05], floor at y = −0.4 |
/// | chair seat | x,z ∈ [0.2, 0.3], thickness ∈ [0.025, 0.05], center y ∈ [−0.12, 0] |
/// | chair back | width = seat x, depth ∈ [0.02, 0.05], height ∈ [0.12, 0.18] |
/// | plane body | ellipsoid x ∈ [0.3, 0.42], y,z ∈ [0.04, 0.07] |
/// | plane wing | chord ∈ [0.06, 0.1], thickness ∈ [0.015, 0.025], span ∈ [0.15, 0.22] |
/// | plane tail | x ∈ [0.04, 0.06], y ∈ [0.06, 0.1], z ∈ [0.01, 0.02] |
///
/// Legs run from the floor to the underside of the top or seat, so parts touch.
pub fn gen_toy_shape(category: Category, seed: u64) -> ToyShapeSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let primitives = match category {
        Category::Table => gen_table(&mut rng),
        Category::Chair => gen_chair(&mut rng),
        Category::Plane => gen_plane(&mut rng),
    };
    let spec = ToyShapeSpec { category, primitives };
    debug_assert!(spec.validate().is_ok());
    spec
}

/// Four legs under a slab whose underside sits at `underside_y`.
fn legs(rng: &mut ChaCha8Rng, slab_hx: f64, slab_hz: f64, underside_y: f64, label: u8) -> Vec<Primitive> {
    let lw = rng.random_range(0.015..=0.04);
    let inset = rng.random_range(0.0..=0.05);
    let half_h = (underside_y - FLOOR_Y) / 2.0;
    let cy = FLOOR_Y + half_h;
    let lx = slab_hx - lw - inset;
    let lz = slab_hz - lw - inset;
    [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
        .into_iter()
        .map(|(sx, sz)| Primitive::cuboid([sx * lx, cy, sz * lz], [lw, half_h, lw], label))
        .collect()
}

fn gen_table(rng: &mut ChaCha8Rng) -> Vec<Primitive> {
    let hx = rng.random_range(0.25..=0.4);
    let hz = rng.random_range(0.25..=0.4);
    let hy = rng.random_range(0.02..=0.05);
    let ty = rng.random_range(0.05..=0.25);
    let mut prims = vec![Primitive::cuboid([0.0, ty, 0.0], [hx, hy, hz], 0)];
    prims.extend(legs(rng, hx, hz, ty - hy, 1));
    prims
}

fn gen_chair(rng: &mut ChaCha8Rng) -> Vec<Primitive> {
    let hx = rng.random_range(0.2..=0.3);
    let hz = rng.random_range(0.2..=0.3);
    let hy = rng.random_range(0.025..=0.05);
    let sy = rng.random_range(-0.12..=0.0);
    let bz = rng.random_range(0.02..=0.05);
    let bh = rng.random_range(0.12..=0.18);
    let back = Primitive::cuboid([0.0, sy + hy + bh, -(hz - bz)], [hx, bh, bz], 0);
    let seat = Primitive::cuboid([0.0, sy, 0.0], [hx, hy, hz], 1);
    let mut prims = vec![back, seat];
    prims.extend(legs(rng, hx, hz, sy - hy, 2));
    prims
}

fn gen_plane(rng: &mut ChaCha8Rng) -> Vec<Primitive> {
    let ex = rng.random_range(0.3..=0.42);
    let ey = rng.random_range(0.04..=0.07);
    let ez = rng.random_range(0.04..=0.07);
    let body = Primitive {
        kind: PrimitiveKind::Ellipsoid,
        center: [0.0, 0.0, 0.0],
        half_extents: [ex, ey, ez],
        label: 0,
    };
    let chord = rng.random_range(0.06..=0.1);
    let thick = rng.random_range(0.015..=0.025);
    let span = rng.random_range(0.15..=0.22);
    let wx = rng.random_range(-0.05..=0.05);
    let wing = |sz: f64| Primitive::cuboid([wx, 0.0, sz * span], [chord, thick, span], 1);
    let tx = rng.random_range(0.04..=0.06);
    let ty = rng.random_range(0.06..=0.1);
    let tz = rng.random_range(0.01..=0.02);
    let tail = Primitive::cuboid([-(ex - tx), ty, 0.0], [tx, ty, tz], 2);
    vec![body, wing(1.0), wing(-1.0), tail]
}
