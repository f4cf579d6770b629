//! Recursive implicit fields: hierarchies of per-point Gaussian parts that reconstruct a
//! voxelized shape at every tree level, trained without part supervision.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod extraction;
pub mod fsutil;
pub mod gradcheck;
pub mod losses;
pub mod network;
pub mod nn;
pub mod svr;
pub mod training;

pub use error::{Error, Result};
