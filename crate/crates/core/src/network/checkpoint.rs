//! Checkpoint directory layout.
//!
//! ```text
//! <dir>/meta.json             CheckpointMeta
//! <dir>/tensors.json          name -> {shape, file, offset}
//! <dir>/tensors/<name>.f32    little-endian f32, row-major
//! <dir>/optimizer.json        optional: Adam settings, per-tensor steps, moment index
//! <dir>/optimizer/<m|v>.<name>.f32
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;
use super::head::HeadKind;
use super::hierarchy::Network;
use crate::error::{Error, Result};
use crate::fsutil::{
    create_dir, f32_bytes, f32_from_bytes, read_exact_len, read_json, write_dir_atomically, write_file, write_json,
};
use crate::nn::{Adam, AdamConfig, ParamStore};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    pub config: NetworkConfig,
    pub levels: usize,
    pub head_kind: HeadKind,
    pub seed: u64,
    /// Global iterations completed.
    pub iteration: u64,
    /// Name of the stage in progress, or `done`.
    pub stage: String,
    /// Index of that stage in the plan.
    pub stage_index: usize,
    /// Iterations completed within that stage.
    pub stage_iteration: u64,
    /// Caller-defined settings (e.g. the training configuration).
    #[serde(default)]
    pub extra: serde_json::Value,
}

impl CheckpointMeta {
    pub fn new(config: &NetworkConfig) -> Self {
        CheckpointMeta {
            version: CHECKPOINT_VERSION,
            config: config.clone(),
            levels: config.levels,
            head_kind: config.head_kind,
            seed: config.seed,
            iteration: 0,
            stage: String::new(),
            stage_index: 0,
            stage_iteration: 0,
            extra: serde_json::Value::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub shape: Vec<usize>,
    pub file: String,
    pub offset: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OptimizerIndex {
    config: AdamConfig,
    steps: BTreeMap<String, u64>,
    tensors: BTreeMap<String, TensorEntry>,
}

/// Writes every tensor of `store` under `dir/<subdir>` and returns the index.
fn write_tensors<'a>(
    dir: &Path,
    subdir: &str,
    items: impl Iterator<Item = (String, &'a [usize], &'a [f32])>,
) -> Result<BTreeMap<String, TensorEntry>> {
    create_dir(&dir.join(subdir))?;
    let mut index = BTreeMap::new();
    for (name, shape, values) in items {
        let file = format!("{subdir}/{name}.f32");
        write_file(&dir.join(&file), &f32_bytes(values))?;
        index.insert(
            name,
            TensorEntry {
                shape: shape.to_vec(),
                file,
                offset: 0,
            },
        );
    }
    Ok(index)
}

fn read_tensor(dir: &Path, entry: &TensorEntry) -> Result<Vec<f32>> {
    let len: usize = entry.shape.iter().product();
    let bytes = read_exact_len(&dir.join(&entry.file), entry.offset + 4 * len as u64)?;
    Ok(f32_from_bytes(&bytes[entry.offset as usize..]))
}

/// Writes a parameter store as `tensors.json` plus one file per tensor.
pub fn write_store(dir: &Path, store: &ParamStore<f32>) -> Result<()> {
    let index = write_tensors(
        dir,
        "tensors",
        store
            .tensors()
            .iter()
            .map(|t| (t.name.clone(), t.shape.as_slice(), t.value.as_slice())),
    )?;
    write_json(&dir.join("tensors.json"), &index)
}

/// Overwrites the values of `store` from `dir`, which must hold exactly the same tensors.
pub fn read_store_into(dir: &Path, store: &mut ParamStore<f32>) -> Result<()> {
    let ipath = dir.join("tensors.json");
    let index: BTreeMap<String, TensorEntry> = read_json(&ipath)?;
    if index.len() != store.len() {
        return Err(Error::Corrupt {
            path: ipath,
            reason: format!("{} tensors listed, architecture has {}", index.len(), store.len()),
        });
    }
    for t in store.tensors_mut() {
        let entry = index.get(&t.name).ok_or_else(|| Error::Corrupt {
            path: ipath.clone(),
            reason: format!("missing tensor {}", t.name),
        })?;
        if entry.shape != t.shape {
            return Err(Error::Corrupt {
                path: ipath.clone(),
                reason: format!("tensor {} has shape {:?}, expected {:?}", t.name, entry.shape, t.shape),
            });
        }
        t.value = read_tensor(dir, entry)?;
    }
    Ok(())
}

/// Saves parameters, metadata and (optionally) optimizer moments; the directory is
/// replaced atomically.
pub fn save_checkpoint(
    dir: &Path,
    network: &Network<f32>,
    meta: &CheckpointMeta,
    optimizer: Option<&Adam<f32>>,
) -> Result<()> {
    write_dir_atomically(dir, |tmp| {
        write_json(&tmp.join("meta.json"), meta)?;
        write_store(tmp, &network.store)?;
        if let Some(opt) = optimizer {
            let names = network.store.tensors().iter().map(|t| &t.name);
            let shapes = network.store.tensors().iter().map(|t| t.shape.as_slice());
            let items = names
                .clone()
                .zip(shapes.clone())
                .zip(&opt.m)
                .map(|((n, s), m)| (format!("m.{n}"), s, m.as_slice()))
                .chain(
                    names
                        .clone()
                        .zip(shapes)
                        .zip(&opt.v)
                        .map(|((n, s), v)| (format!("v.{n}"), s, v.as_slice())),
                );
            let tensors = write_tensors(tmp, "optimizer", items)?;
            let steps = names.cloned().zip(opt.steps.iter().copied()).collect();
            write_json(
                &tmp.join("optimizer.json"),
                &OptimizerIndex {
                    config: opt.config,
                    steps,
                    tensors,
                },
            )?;
        }
        Ok(())
    })
}

pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub network: Network<f32>,
    pub optimizer: Option<Adam<f32>>,
}

pub fn read_meta(dir: &Path) -> Result<CheckpointMeta> {
    let mpath = dir.join("meta.json");
    let raw: serde_json::Value = read_json(&mpath)?;
    let version = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            path: mpath,
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    serde_json::from_value(raw).map_err(|e| Error::Corrupt {
        path: mpath,
        reason: e.to_string(),
    })
}

fn describe_mismatch(found: &NetworkConfig, expected: &NetworkConfig) -> String {
    if found.levels != expected.levels {
        return format!("checkpoint has {} levels, expected {}", found.levels, expected.levels);
    }
    if found.head_kind != expected.head_kind {
        return format!(
            "checkpoint head is {}, expected {}",
            found.head_kind.name(),
            expected.head_kind.name()
        );
    }
    if found.flat_branches != expected.flat_branches {
        return format!(
            "checkpoint flat branches {:?}, expected {:?}",
            found.flat_branches, expected.flat_branches
        );
    }
    "network configuration differs".into()
}

/// Loads a checkpoint. When `expected` is given the stored configuration must match it.
pub fn load_checkpoint(dir: &Path, expected: Option<&NetworkConfig>) -> Result<Checkpoint> {
    let meta = read_meta(dir)?;
    if meta.levels != meta.config.levels || meta.head_kind != meta.config.head_kind {
        return Err(Error::Corrupt {
            path: dir.join("meta.json"),
            reason: "summary fields disagree with the stored configuration".into(),
        });
    }
    if let Some(exp) = expected {
        if *exp != meta.config {
            return Err(Error::ConfigMismatch(describe_mismatch(&meta.config, exp)));
        }
    }
    let mut network = Network::<f32>::new(meta.config.clone())?;
    read_store_into(dir, &mut network.store)?;
    let opath = dir.join("optimizer.json");
    let optimizer = if opath.exists() {
        let index: OptimizerIndex = read_json(&opath)?;
        let mut adam = Adam::new(&network.store, index.config);
        for (i, t) in network.store.tensors().iter().enumerate() {
            let get = |prefix: &str| {
                index
                    .tensors
                    .get(&format!("{prefix}.{}", t.name))
                    .ok_or_else(|| Error::Corrupt {
                        path: opath.clone(),
                        reason: format!("missing moment for {}", t.name),
                    })
            };
            adam.m[i] = read_tensor(dir, get("m")?)?;
            adam.v[i] = read_tensor(dir, get("v")?)?;
            adam.steps[i] = *index.steps.get(&t.name).ok_or_else(|| Error::Corrupt {
                path: opath.clone(),
                reason: format!("missing step count for {}", t.name),
            })?;
        }
        Some(adam)
    } else {
        None
    };
    Ok(Checkpoint {
        meta,
        network,
        optimizer,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net() -> Network<f32> {
        Network::new(NetworkConfig::tiny()).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck");
        let mut n = net();
        n.store.tensors_mut()[0].value[0] = f32::from_bits(0x3f80_0001);
        let mut adam = Adam::new(&n.store, AdamConfig::default());
        adam.steps[1] = 17;
        adam.m[2][0] = 1.5e-7;
        let meta = CheckpointMeta::new(&n.config);
        save_checkpoint(&path, &n, &meta, Some(&adam)).unwrap();
        let ck = load_checkpoint(&path, Some(&n.config)).unwrap();
        assert_eq!(ck.meta, meta);
        for (a, b) in n.store.tensors().iter().zip(ck.network.store.tensors()) {
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.value), bits(&b.value));
        }
        let back = ck.optimizer.unwrap();
        assert_eq!(back.steps, adam.steps);
        assert_eq!(back.m, adam.m);
        assert!(!crate::fsutil::staging_dir(&path).exists());
    }

    #[test]
    fn level_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let n = net();
        save_checkpoint(dir.path(), &n, &CheckpointMeta::new(&n.config), None).unwrap();
        let other = NetworkConfig {
            levels: 3,
            ..NetworkConfig::tiny()
        };
        match load_checkpoint(dir.path(), Some(&other)) {
            Err(Error::ConfigMismatch(m)) => assert!(m.contains("levels"), "{m}"),
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => panic!("mismatch accepted"),
        }
    }

    #[test]
    fn truncated_tensor_is_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let n = net();
        save_checkpoint(dir.path(), &n, &CheckpointMeta::new(&n.config), None).unwrap();
        let f = dir.path().join(format!("tensors/{}.f32", n.store.tensors()[0].name));
        let bytes = std::fs::read(&f).unwrap();
        std::fs::write(&f, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(
            load_checkpoint(dir.path(), None),
            Err(Error::SizeMismatch { .. })
        ));
    }
}
