use serde::{Deserialize, Serialize};

use super::head::HeadKind;
use crate::error::{Error, Result};

/// Architecture of the recursive implicit field network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Number of tree levels `N`.
    pub levels: usize,
    pub code_dim: usize,
    /// Voxel resolution the encoder consumes; must equal `4·2^(layers−1)`.
    pub input_dim: usize,
    /// Output channels of each strided 3D convolution; the last equals `code_dim`.
    pub encoder_channels: Vec<usize>,
    pub fd_hidden: usize,
    pub pd_hidden: [usize; 2],
    pub head_kind: HeadKind,
    /// When set, a single part decoder with this many branches replaces the hierarchy.
    pub flat_branches: Option<usize>,
    pub inside_threshold: f64,
    pub seed: u64,
    pub init_std: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            levels: 3,
            code_dim: 128,
            input_dim: 64,
            encoder_channels: vec![32, 64, 128, 256, 128],
            fd_hidden: 256,
            pd_hidden: [256, 256],
            head_kind: HeadKind::Gaussian,
            flat_branches: None,
            inside_threshold: 0.5,
            seed: 0,
            init_std: 0.02,
        }
    }
}

impl NetworkConfig {
    /// Reduced widths that train in minutes on a single CPU core.
    pub fn desk() -> Self {
        NetworkConfig {
            levels: 2,
            code_dim: 128,
            input_dim: 32,
            encoder_channels: vec![16, 32, 64, 128],
            fd_hidden: 256,
            pd_hidden: [64, 64],
            ..Default::default()
        }
    }

    /// The smallest configuration, used for gradient verification.
    pub fn tiny() -> Self {
        NetworkConfig {
            levels: 2,
            code_dim: 8,
            input_dim: 16,
            encoder_channels: vec![4, 8, 8],
            fd_hidden: 16,
            pd_hidden: [16, 16],
            ..Default::default()
        }
    }

    pub fn is_flat(&self) -> bool {
        self.flat_branches.is_some()
    }

    /// Number of field levels the network emits.
    pub fn field_levels(&self) -> usize {
        if self.is_flat() {
            1
        } else {
            self.levels
        }
    }

    /// Number of part decoders instantiated.
    pub fn part_decoder_count(&self) -> usize {
        self.field_levels()
    }

    /// Number of feature decoders instantiated.
    pub fn feature_decoder_count(&self) -> usize {
        if self.is_flat() {
            0
        } else {
            self.levels - 1
        }
    }

    /// Branches of each part decoder.
    pub fn branches(&self) -> usize {
        self.flat_branches.unwrap_or(2)
    }

    /// Node count emitted at field level `j` (1-based).
    pub fn nodes_at(&self, level: usize) -> usize {
        self.branches().pow(level as u32)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.levels == 0 {
            return bad("levels must be at least 1".into());
        }
        if self.code_dim == 0 || self.fd_hidden == 0 || self.pd_hidden.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        if self.encoder_channels.len() < 2 {
            return bad("encoder needs at least two convolutions".into());
        }
        if self.encoder_channels.last() != Some(&self.code_dim) {
            return bad("last encoder channel count must equal code_dim".into());
        }
        let expected = 4usize << (self.encoder_channels.len() - 1);
        if self.input_dim != expected {
            return bad(format!(
                "{} encoder layers consume {expected}³ voxels, not {}³",
                self.encoder_channels.len(),
                self.input_dim
            ));
        }
        if !(self.inside_threshold > 0.0 && self.inside_threshold < 1.0) {
            return bad("inside threshold must lie in (0, 1)".into());
        }
        if let Some(k) = self.flat_branches {
            if k < 2 {
                return bad("flat mode needs at least two branches".into());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        NetworkConfig::default().validate().unwrap();
        NetworkConfig::desk().validate().unwrap();
        NetworkConfig::tiny().validate().unwrap();
    }

    #[test]
    fn resolution_must_match_layer_count() {
        let cfg = NetworkConfig {
            input_dim: 32,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
