//! Homodyne-mediated feedback stabilization of a driven two-level atom.
//!
//! A resonantly driven atom whose fluorescence is measured by homodyne
//! detection, with the photocurrent fed back into the driving, can be held at
//! an arbitrary pure state on the Bloch sphere. This crate provides
//!
//! * [`bloch`]: Bloch vectors, density matrices and polar coordinates,
//! * [`steady_state`]: the deterministic (ensemble-averaged) Bloch equations,
//!   their fixed points, exact solution and stability,
//! * [`design`]: optimal gain/driving pairs and the purity locus,
//! * [`sde`]: conditioned stochastic trajectories and ensembles,
//! * [`output`] and [`cli`]: CSV/JSON files and the command layer.
//!
//! ```
//! use bloch_feedback::design::{lambda_eta1, alpha_eta1};
//! use bloch_feedback::steady_state::{feedback_ss, SystemParams};
//!
//! let theta = std::f64::consts::PI / 6.0;
//! let p = SystemParams::new(1.0, 1.0, alpha_eta1(theta, 1.0), lambda_eta1(theta, 1.0)).unwrap();
//! let b = feedback_ss(&p).unwrap();
//! assert!((b.x - theta.sin()).abs() < 1e-12 && (b.z - theta.cos()).abs() < 1e-12);
//! ```

// NaN-rejecting comparisons are written as `!(a <= b)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bloch;
pub mod cli;
pub mod design;
pub mod error;
pub mod output;
pub mod sde;
pub mod steady_state;

pub use bloch::{BlochVector, DensityMatrix, PolarState};
pub use design::{FeedbackDesign, Objective, SearchConfig};
pub use error::{Error, Result};
pub use sde::{EnsembleStats, SimConfig, Trajectory};
pub use steady_state::{DriftModel, Stability, StabilityReport, SystemParams};
