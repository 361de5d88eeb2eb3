//! Learning motility maps (the body-velocity-from-shape-velocity map of
//! principally kinematic locomotion) with Gaussian branching regression.
//!
//! The crate is `no_std` with `alloc`. Everything here is a pure function of
//! its inputs and seeds; file formats and the command line live in the
//! `motility` companion crate.
//!
//! Layout of the pipeline:
//!
//! * [`data`]: shape/pose trajectories, finite differencing, stride segmentation.
//! * [`gaussian`], [`gmm`]: single Gaussians, TLS slopes, EM fitting.
//! * [`gbr`]: the branch-aware regressor, [`augment`]: ruled-surface augmentation.
//! * [`baselines`]: phase-binned Phase and Geometric models.
//! * [`se2`], [`strides`], [`density`]: reconstruction and evaluation.
//! * [`synth`], [`experiment`]: generators and the extrapolation protocol.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod augment;
pub mod baselines;
pub mod data;
pub mod density;
mod error;
pub mod experiment;
pub mod gaussian;
pub mod gbr;
pub mod gmm;
mod linalg;
pub mod rng;
pub mod se2;
pub mod strides;
pub mod synth;

pub use augment::{assign_members, build_agbr, sphere_weights, synthesize, AugmentConfig};
pub use baselines::{fit_geometric, FourierSeries, GeometricModel, PhaseBin};
pub use data::{derive_velocities, segment_strides, Dataset, GraphPoint, ShapeSample, StrideRange, Trajectory};
pub use density::{ksde, Bandwidth, DensityCurve};
pub use error::{Error, Result};
pub use gaussian::{tls_extract, GaussianComponent, TlsSlope};
pub use gbr::{build_gbr, build_gbr_from_points, FeedbackMode, GbrModel, Prediction};
pub use gmm::{fit_gmm, responsibilities, EmConfig, GmmModel};
pub use se2::{exp_se2, integrate, log_se2, PoseSE2};
pub use strides::{stride_displacements, zscore_loss, StrideRecord};
