//! Anisotropic super-resolution network.
//!
//! A small U-Net-shaped regressor that keeps the in-plane resolution and
//! up-samples the slice axis by an integer factor k: anisotropic (2, 2, 1)
//! max-pooling in the encoder, skip concatenations per level, a learned
//! transposed convolution with stride (1, 1, k) at the decoder head, and a
//! linear final layer. Training minimises voxel-wise MSE with
//! adaptive-moment gradient descent; gradients are exact reverse-mode and
//! are verified against central finite differences in the tests.

mod enhance;
mod layers;
mod model;
mod patch;
mod tensor;
mod train;

pub use enhance::{enhance, EnhanceTiling};
pub use model::{forward, gradient, SrModel, SrModelConfig};
pub use patch::{extract_patches, patch_stats, standardize_pair};
pub use tensor::Tensor5;
pub use train::{loss_mse, train, EpochStats, TrainConfig, TrainHistory};
