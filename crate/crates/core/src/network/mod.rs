//! Encoder, decoders and the recursive field hierarchy.

pub mod checkpoint;
pub mod config;
pub mod decoders;
pub mod encoder;
pub mod head;
pub mod hierarchy;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use config::NetworkConfig;
pub use decoders::{FeatureDecoder, PartDecoder};
pub use encoder::ConvEncoder;
pub use head::{gaussian_prob, head_eval, map_params, GaussianParams, HeadKind};
pub use hierarchy::{classify_points, FieldTree, ForwardCache, Network};
