//! Wonder-filter watermarking for EEG-style neural classifiers.
//!
//! The toolkit covers the full ownership story: derive a watermark filter
//! from an owner's digital signature, embed it during training through
//! paired normal/null trigger sets with out-of-bound values, verify
//! ownership cryptographically and functionally, and stress the result
//! with fine-tuning, transfer-learning, pruning, and piracy attacks.
//!
//! Numerical code is generic over the [`Scalar`] type; the `*32`/`*64`
//! aliases below pick concrete widths.

pub mod attacks;
pub mod data;
pub mod error;
pub mod filter;
pub mod identity;
pub mod nn;
pub mod pipeline;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// f32 tensor, the deployment width (checkpoints store f32).
pub type Tensor32 = nn::Tensor<f32>;
/// f64 tensor, used where precision matters (gradient checking).
pub type Tensor64 = nn::Tensor<f64>;
pub type Network32 = nn::Network<f32>;
pub type Network64 = nn::Network<f64>;
pub type EEGDataset32 = data::EEGDataset<f32>;
pub type EEGDataset64 = data::EEGDataset<f64>;
