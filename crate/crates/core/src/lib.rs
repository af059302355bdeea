//! Simulation of quantum imaging with undetected photons.
//!
//! The crate renders the two output-port detector images of an induced
//! coherence interferometer with quasi-Monte Carlo integration, evaluates the
//! fast convolution approximation of the pointwise visibility, restores images
//! with Richardson-Lucy deconvolution and computes resolution limits.
//!
//! Everything numeric is generic over [`Real`]; the aliases below fix the
//! scalar to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod config;
pub mod detection;
pub mod error;
pub mod fastpath;
pub mod fft;
pub mod grid;
pub mod io;
pub mod optics;
pub mod restore;
pub mod scalar;
pub mod scene;
pub mod source;

pub use config::SetupConfig;
pub use error::{Error, Result};
pub use grid::{Grid, Region};
pub use scalar::Real;

pub type Setup = optics::OpticalSetup<f64>;
pub type Mask = scene::ObjectMask<f64>;
pub type Image = Grid<f64>;
pub type Kernel = source::KernelGrid<f64>;
pub type Visibility = detection::VisibilityMap<f64>;
pub type Fast = fastpath::FastPath<f64>;
pub type Detector = detection::DetectorImage<f64>;
