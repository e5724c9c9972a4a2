//! Image quality transfer for low-field MRI.
//!
//! This crate simulates low-field (LF) brain MR images from high-field (HF)
//! volumes, trains an anisotropic super-resolution network on the resulting
//! pairs, and evaluates the enhancement against a cubic B-spline
//! interpolation baseline.
//!
//! The pieces, bottom up:
//!
//! - [`volume`]: the 3D image model and membership maps; [`nifti`] reads and
//!   writes them as NIfTI-1.
//! - [`phantom`]: synthetic nested-ellipsoid brains with known tissue
//!   geometry for desk-scale testing.
//! - [`tissue`]: GM/WM/CSF membership maps, either ingested from files or
//!   fitted with a three-class EM Gaussian mixture, plus skull-stripping.
//! - [`resample`]: through-plane Gaussian blur, gapped slice sampling, and
//!   the cubic B-spline upsampling baseline.
//! - [`sim`]: SNR estimation, contrast change and noise addition, composed
//!   into the five-step HF -> LF simulation.
//! - [`srnet`]: the anisotropic U-Net regressor (forward, reverse-mode
//!   gradients, training, whole-volume inference).
//! - [`metrics`]: SSIM / PSNR / MSE and paired comparison reports.
//! - [`desk`]: the end-to-end desk-scale reproduction pipeline.

pub mod desk;
pub mod error;
pub mod metrics;
pub mod nifti;
pub mod phantom;
pub mod resample;
pub mod rng;
pub mod sim;
pub mod srnet;
pub mod tissue;
pub mod volume;

pub use error::{IqtError, Result};
pub use volume::{MembershipMaps, Volume};
