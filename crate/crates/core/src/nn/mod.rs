//! Minimal dense neural-network toolkit: parameters, layers, optimizer.
//!
//! Layers are stateless descriptors holding [`ParamId`]s into a [`ParamStore`];
//! backward passes are written by hand against the cached forward activations.

pub mod adam;
pub mod layers;
pub mod params;
pub mod real;

pub use adam::{Adam, AdamConfig};
pub use layers::{Conv3d, ConvCache, Linear};
pub use params::{Gradients, Init, ParamGroup, ParamId, ParamStore, ParamTensor};
pub use real::{leaky, leaky_grad, matmul, sigmoid, softplus, softplus_inv, Mat, Real, LEAKY_SLOPE};
