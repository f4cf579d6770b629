use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::real::Real;

/// Index of a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Freezing unit used by the staged training schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "level")]
pub enum ParamGroup {
    Encoder,
    FeatureDecoder(usize),
    PartDecoder(usize),
    ImageEncoder,
}

impl fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamGroup::Encoder => write!(f, "encoder"),
            ParamGroup::FeatureDecoder(j) => write!(f, "feature_decoder{j}"),
            ParamGroup::PartDecoder(j) => write!(f, "part_decoder{j}"),
            ParamGroup::ImageEncoder => write!(f, "image_encoder"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Normal(f64),
    Zeros,
    Constant(f64),
}

#[derive(Debug, Clone)]
pub struct ParamTensor<F> {
    pub name: String,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
    pub value: Vec<F>,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore<F> {
    tensors: Vec<ParamTensor<F>>,
}

pub(crate) fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore { tensors: Vec::new() }
    }

    /// Adds a tensor. Each tensor draws from its own stream keyed by `(seed, name)`,
    /// so the values of one tensor do not depend on which others exist.
    pub fn add(&mut self, name: &str, group: ParamGroup, shape: &[usize], init: Init, seed: u64) -> ParamId {
        assert!(
            self.tensors.iter().all(|t| t.name != name),
            "duplicate parameter name {name}"
        );
        let len: usize = shape.iter().product();
        let value = match init {
            Init::Zeros => vec![F::zero(); len],
            Init::Constant(c) => vec![F::c(c); len],
            Init::Normal(std) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(name.bytes()));
                let normal = Normal::new(0.0, std).expect("finite std");
                (0..len).map(|_| F::c(normal.sample(&mut rng))).collect()
            }
        };
        self.tensors.push(ParamTensor {
            name: name.to_string(),
            group,
            shape: shape.to_vec(),
            value,
        });
        ParamId(self.tensors.len() - 1)
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &[F] {
        &self.tensors[id.0].value
    }

    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut [F] {
        &mut self.tensors[id.0].value
    }

    pub fn tensor(&self, id: ParamId) -> &ParamTensor<F> {
        &self.tensors[id.0]
    }

    pub fn tensors(&self) -> &[ParamTensor<F>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [ParamTensor<F>] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.value.len()).sum()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.tensors.iter().position(|t| t.name == name).map(ParamId)
    }

    /// Distinct groups in first-appearance order.
    pub fn groups(&self) -> Vec<ParamGroup> {
        let mut out: Vec<ParamGroup> = Vec::new();
        for t in &self.tensors {
            if !out.contains(&t.group) {
                out.push(t.group);
            }
        }
        out
    }

    pub fn ids_in(&self, group: ParamGroup) -> Vec<ParamId> {
        (0..self.tensors.len())
            .filter(|&i| self.tensors[i].group == group)
            .map(ParamId)
            .collect()
    }

    /// Content hash over the exact bit patterns of a group's values.
    pub fn digest(&self, group: ParamGroup) -> u64 {
        let bytes = self.tensors.iter().filter(|t| t.group == group).flat_map(|t| {
            t.name
                .bytes()
                .chain(t.value.iter().flat_map(|v| v.f64().to_bits().to_le_bytes()))
        });
        fnv1a(bytes)
    }

    pub fn digest_all(&self) -> u64 {
        fnv1a(self.groups().into_iter().flat_map(|g| self.digest(g).to_le_bytes()))
    }

    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .map(|t| ParamTensor {
                    name: t.name.clone(),
                    group: t.group,
                    shape: t.shape.clone(),
                    value: t.value.iter().map(|v| G::c(v.f64())).collect(),
                })
                .collect(),
        }
    }
}

/// Gradient buffers aligned with a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Gradients<F> {
    data: Vec<Vec<F>>,
}

impl<F: Real> Gradients<F> {
    pub fn zeros_like(store: &ParamStore<F>) -> Self {
        Gradients {
            data: store.tensors.iter().map(|t| vec![F::zero(); t.value.len()]).collect(),
        }
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &[F] {
        &self.data[id.0]
    }

    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut [F] {
        &mut self.data[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[F]> {
        self.data.iter().map(|v| v.as_slice())
    }

    pub fn scale(&mut self, s: F) {
        for v in self.data.iter_mut().flatten() {
            *v *= s;
        }
    }

    pub fn add_assign(&mut self, other: &Gradients<F>) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
    }
}
