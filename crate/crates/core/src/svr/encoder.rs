use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::render::{render_views, View, ViewImage, IMAGE_SIZE};
use crate::data::ShapeRecord;
use crate::error::{Error, Result};
use crate::fsutil::{read_json, write_dir_atomically, write_json};
use crate::network::checkpoint::{read_store_into, write_store};
use crate::network::{ConvEncoder, Network};
use crate::nn::{Adam, AdamConfig, Gradients, ParamGroup, ParamStore};
use crate::training::iteration_rng;

pub const SVR_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvrConfig {
    pub iterations: u64,
    pub batch_shapes: usize,
    pub optimizer: AdamConfig,
    pub channels: Vec<usize>,
    pub views: Vec<View>,
    pub depth_shading: bool,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for SvrConfig {
    fn default() -> Self {
        SvrConfig {
            iterations: 2000,
            batch_shapes: 8,
            optimizer: AdamConfig::default(),
            channels: vec![32, 64, 128],
            views: vec![View::FRONT],
            depth_shading: true,
            init_std: 0.02,
            seed: 0,
        }
    }
}

impl SvrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.views.is_empty() {
            return Err(Error::InvalidInput("at least one view is required".into()));
        }
        if self.batch_shapes == 0 {
            return Err(Error::InvalidInput("batch_shapes must be positive".into()));
        }
        Ok(())
    }
}

/// One 2D encoder per view; the latent code is the mean of the per-view codes.
#[derive(Debug, Clone)]
pub struct ImageEncoder {
    pub config: SvrConfig,
    pub code_dim: usize,
    pub store: ParamStore<f32>,
    pub encoders: Vec<ConvEncoder>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SvrMeta {
    version: u32,
    code_dim: usize,
    iteration: u64,
    config: SvrConfig,
}

impl ImageEncoder {
    pub fn new(config: SvrConfig, code_dim: usize) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut channels = config.channels.clone();
        channels.push(code_dim);
        let single = config.views.len() == 1;
        let encoders = (0..config.views.len())
            .map(|k| {
                let prefix = if single {
                    "image_encoder".to_string()
                } else {
                    format!("image_encoder_v{k}")
                };
                let seed = config.seed.wrapping_add(k as u64 * 7919);
                ConvEncoder::image(&mut store, &prefix, &channels, IMAGE_SIZE, config.init_std, seed)
            })
            .collect();
        Ok(ImageEncoder {
            config,
            code_dim,
            store,
            encoders,
        })
    }

    fn check(&self, images: &[ViewImage]) -> Result<()> {
        if images.len() != self.encoders.len() {
            return Err(Error::DimensionMismatch {
                expected: self.encoders.len(),
                actual: images.len(),
                context: "views per shape".into(),
            });
        }
        for (img, view) in images.iter().zip(&self.config.views) {
            if img.pixels.len() != IMAGE_SIZE * IMAGE_SIZE {
                return Err(Error::DimensionMismatch {
                    expected: IMAGE_SIZE * IMAGE_SIZE,
                    actual: img.pixels.len(),
                    context: "image pixels".into(),
                });
            }
            if img.view != *view {
                return Err(Error::InvalidInput(format!(
                    "image view {} where {view} was expected",
                    img.view
                )));
            }
        }
        Ok(())
    }

    /// Latent code for one shape's views.
    pub fn encode(&self, images: &[ViewImage]) -> Result<Vec<f32>> {
        self.check(images)?;
        let inv = 1.0 / self.encoders.len() as f32;
        let mut code = vec![0.0f32; self.code_dim];
        for (enc, img) in self.encoders.iter().zip(images) {
            for (c, v) in code.iter_mut().zip(enc.encode(&self.store, &img.pixels)) {
                *c += v * inv;
            }
        }
        Ok(code)
    }

    /// Accumulates gradients of `mean((code − target)²)` scaled by `weight`; returns the MSE.
    fn accumulate(&self, images: &[ViewImage], target: &[f32], weight: f32, grads: &mut Gradients<f32>) -> f64 {
        let inv = 1.0 / self.encoders.len() as f32;
        let outs: Vec<_> = self
            .encoders
            .iter()
            .zip(images)
            .map(|(enc, img)| enc.forward(&self.store, &img.pixels))
            .collect();
        let mut code = vec![0.0f32; self.code_dim];
        for (o, _) in &outs {
            for (c, v) in code.iter_mut().zip(o) {
                *c += v * inv;
            }
        }
        let mse = latent_mse(&code, target);
        let scale = 2.0 * weight * inv / self.code_dim as f32;
        let dcode: Vec<f32> = code.iter().zip(target).map(|(c, t)| scale * (c - t)).collect();
        for (enc, (_, cache)) in self.encoders.iter().zip(&outs) {
            enc.backward(&self.store, cache, &dcode, grads);
        }
        mse
    }

    pub fn save(&self, dir: &Path, iteration: u64) -> Result<()> {
        let meta = SvrMeta {
            version: SVR_VERSION,
            code_dim: self.code_dim,
            iteration,
            config: self.config.clone(),
        };
        write_dir_atomically(dir, |tmp| {
            write_json(&tmp.join("svr.json"), &meta)?;
            write_store(tmp, &self.store)
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("svr.json");
        let meta: SvrMeta = read_json(&path)?;
        if meta.version != SVR_VERSION {
            return Err(Error::VersionMismatch {
                path,
                found: meta.version,
                expected: SVR_VERSION,
            });
        }
        let mut enc = ImageEncoder::new(meta.config, meta.code_dim)?;
        read_store_into(dir, &mut enc.store)?;
        Ok(enc)
    }
}

/// Mean squared difference over code entries.
pub fn latent_mse(a: &[f32], b: &[f32]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / a.len().max(1) as f64
}

/// Training pairs: rendered views and the frozen 3D encoder's code for each shape.
#[derive(Debug, Clone)]
pub struct SvrDataset {
    pub ids: Vec<String>,
    pub images: Vec<Vec<ViewImage>>,
    pub targets: Vec<Vec<f32>>,
}

impl SvrDataset {
    pub fn build(net: &Network<f32>, shapes: &[ShapeRecord], views: &[View], depth_shading: bool) -> Result<Self> {
        if shapes.is_empty() {
            return Err(Error::Empty("no shapes for image encoder training".into()));
        }
        let mut ds = SvrDataset {
            ids: Vec::with_capacity(shapes.len()),
            images: Vec::with_capacity(shapes.len()),
            targets: Vec::with_capacity(shapes.len()),
        };
        for s in shapes {
            ds.ids.push(s.id.clone());
            ds.images.push(render_views(&s.voxels, views, depth_shading));
            ds.targets.push(net.encode(&s.voxels)?);
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct SvrTrainReport {
    /// `iteration,mse` rows, batch MSE before each update.
    pub log: Vec<String>,
    /// Latent MSE over the whole training set after the last update.
    pub final_mse: f64,
}

pub fn dataset_mse(enc: &ImageEncoder, ds: &SvrDataset) -> Result<f64> {
    let mut total = 0.0;
    for (img, t) in ds.images.iter().zip(&ds.targets) {
        total += latent_mse(&enc.encode(img)?, t);
    }
    Ok(total / ds.len().max(1) as f64)
}

/// Regresses the image encoder onto the dataset's target codes. The 3D network is only read.
pub fn train_image_encoder(
    enc: &mut ImageEncoder,
    ds: &SvrDataset,
    sink: &mut dyn FnMut(&str),
) -> Result<SvrTrainReport> {
    if ds.is_empty() {
        return Err(Error::Empty("no shapes for image encoder training".into()));
    }
    if ds.targets[0].len() != enc.code_dim {
        return Err(Error::DimensionMismatch {
            expected: enc.code_dim,
            actual: ds.targets[0].len(),
            context: "3D code dimension".into(),
        });
    }
    for imgs in &ds.images {
        enc.check(imgs)?;
    }
    let mut adam = Adam::new(&enc.store, enc.config.optimizer);
    let batch = enc.config.batch_shapes.min(ds.len());
    let weight = 1.0 / batch as f32;
    let mut log = vec!["iteration,mse".to_string()];
    sink(&log[0]);
    for it in 0..enc.config.iterations {
        let mut rng = iteration_rng(enc.config.seed, it);
        let mut grads = Gradients::zeros_like(&enc.store);
        let mut mse = 0.0;
        for _ in 0..batch {
            let k = rng.random_range(0..ds.len());
            mse += enc.accumulate(&ds.images[k], &ds.targets[k], weight, &mut grads) / batch as f64;
        }
        if !mse.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: it,
                stage: "svr".into(),
                term: "mse".into(),
                value: mse,
            });
        }
        adam.step(&mut enc.store, &grads, &[ParamGroup::ImageEncoder]);
        let line = format!("{it},{mse}");
        sink(&line);
        log.push(line);
    }
    Ok(SvrTrainReport {
        log,
        final_mse: dataset_mse(enc, ds)?,
    })
}
