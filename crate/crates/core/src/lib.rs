//! Numeric core of the Mosquito-Net malaria cell classifier.
//!
//! Everything in this crate is pure computation over in-memory tensors: the
//! dense [`Tensor`] type and its GEMM kernels, the layer zoo with hand-written
//! backward passes, the assembled network and its checkpoint codec, data
//! augmentation and fold splitting, the optimizers and learning-rate schedule,
//! diagnostic metrics, and Grad-CAM. It builds without `std` (only `alloc` is
//! required); file IO, timing, the CLI and the HTTP service live in the
//! `mosquitonet` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod checkpoint;
pub mod data;
mod error;
pub mod gradcheck;
pub mod imageops;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod train;
pub mod xai;

pub use error::{Error, Result};
pub use model::{ClassLabel, ModelConfig, MosquitoNet};
pub use tensor::{RngSeed, Tensor};
