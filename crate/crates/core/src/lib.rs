//! Continuous-discrete nonlinear state estimation.
//!
//! The level set Kalman filter (LSKF) propagates a Gaussian belief between
//! measurements by integrating an ODE for its mean and a square-root factor of
//! its covariance. The CD-CKF with an order-1.5 Itô-Taylor expansion is
//! provided as a baseline, together with the square-root cubature measurement
//! update both filters share, the radar coordinated-turn benchmark and
//! convergence studies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cdckf;
pub mod cli;
pub mod error;
pub mod filter;
pub mod linalg;
pub mod lskf;
pub mod lyapunov;
pub mod model;
pub mod odesolve;
pub mod scenarios;
pub mod srmu;

pub use error::{Error, Result};
pub use filter::{ContinuousDiscreteFilter, Propagator};
pub use model::{GaussianBelief, LinearSystem, MeasurementModel, SdeModel};
