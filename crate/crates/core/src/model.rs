//! Model and belief types shared by every filter.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

pub type DriftFn = dyn Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync;
pub type JacobianFn = dyn Fn(&DVector<f64>, f64) -> DMatrix<f64> + Send + Sync;
/// Returns one d×d Hessian per drift component: `out[i][(p, q)] = ∂²vᵢ/∂x_p∂x_q`.
pub type HessiansFn = dyn Fn(&DVector<f64>, f64) -> Vec<DMatrix<f64>> + Send + Sync;
pub type MeasureFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;

/// Gaussian belief carried between filter steps: `N(mean, factor·factorᵀ)` at `time`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub factor: DMatrix<f64>,
    pub time: f64,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, factor: DMatrix<f64>, time: f64) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::InvalidArgument(
                "belief dimension must be >= 1".into(),
            ));
        }
        if factor.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!(
                "mean has length {d}, factor is {}x{}",
                factor.nrows(),
                factor.ncols()
            )));
        }
        Ok(Self { mean, factor, time })
    }

    /// Builds a belief with the canonical (Cholesky) factor of `covariance`.
    pub fn from_covariance(
        mean: DVector<f64>,
        covariance: &DMatrix<f64>,
        time: f64,
    ) -> Result<Self> {
        let factor = linalg::cholesky_lower(covariance)?;
        Self::new(mean, factor, time)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        linalg::outer_square(&self.factor)
    }

    pub fn is_finite(&self) -> bool {
        self.mean
            .iter()
            .chain(self.factor.iter())
            .all(|v| v.is_finite())
    }
}

/// Itô SDE `dx = v(x, t) dt + √K dβ`.
#[derive(Clone)]
pub struct SdeModel {
    dim: usize,
    drift: Arc<DriftFn>,
    diffusion_factor: DMatrix<f64>,
    process_noise: DMatrix<f64>,
    jacobian: Option<Arc<JacobianFn>>,
    hessians: Option<Arc<HessiansFn>>,
    time_derivative: Option<Arc<DriftFn>>,
}

impl fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeModel")
            .field("dim", &self.dim)
            .field("diffusion_factor", &self.diffusion_factor)
            .field("has_jacobian", &self.jacobian.is_some())
            .field("has_hessians", &self.hessians.is_some())
            .finish()
    }
}

impl SdeModel {
    pub fn new<F>(dim: usize, drift: F, diffusion_factor: DMatrix<f64>) -> Result<Self>
    where
        F: Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
    {
        Self::from_arc(dim, Arc::new(drift), diffusion_factor)
    }

    pub fn from_arc(
        dim: usize,
        drift: Arc<DriftFn>,
        diffusion_factor: DMatrix<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "model dimension must be >= 1".into(),
            ));
        }
        if diffusion_factor.shape() != (dim, dim) {
            return Err(Error::DimensionMismatch(format!(
                "diffusion factor must be {dim}x{dim}, got {}x{}",
                diffusion_factor.nrows(),
                diffusion_factor.ncols()
            )));
        }
        let process_noise = linalg::outer_square(&diffusion_factor);
        Ok(Self {
            dim,
            drift,
            diffusion_factor,
            process_noise,
            jacobian: None,
            hessians: None,
            time_derivative: None,
        })
    }

    pub fn with_jacobian<F>(mut self, f: F) -> Self
    where
        F: Fn(&DVector<f64>, f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(f));
        self
    }

    pub fn with_hessians<F>(mut self, f: F) -> Self
    where
        F: Fn(&DVector<f64>, f64) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    {
        self.hessians = Some(Arc::new(f));
        self
    }

    /// Explicit `∂v/∂t` for non-autonomous drift. Without it the drift is
    /// treated as autonomous by the Itô-Taylor operators.
    pub fn with_time_derivative<F>(mut self, f: F) -> Self
    where
        F: Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
    {
        self.time_derivative = Some(Arc::new(f));
        self
    }

    /// Replaces the drift while keeping noise and derivative callbacks.
    pub fn map_drift<F>(&self, f: F) -> Self
    where
        F: Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
    {
        let mut out = self.clone();
        out.drift = Arc::new(f);
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn drift(&self, x: &DVector<f64>, t: f64) -> DVector<f64> {
        (self.drift)(x, t)
    }

    pub fn drift_fn(&self) -> Arc<DriftFn> {
        Arc::clone(&self.drift)
    }

    /// `√K`.
    pub fn diffusion_factor(&self) -> &DMatrix<f64> {
        &self.diffusion_factor
    }

    /// `K = √K √Kᵀ`.
    pub fn process_noise(&self) -> &DMatrix<f64> {
        &self.process_noise
    }

    pub fn jacobian(&self, x: &DVector<f64>, t: f64) -> Option<DMatrix<f64>> {
        self.jacobian.as_ref().map(|f| f(x, t))
    }

    pub fn hessians(&self, x: &DVector<f64>, t: f64) -> Option<Vec<DMatrix<f64>>> {
        self.hessians.as_ref().map(|f| f(x, t))
    }

    pub fn time_derivative(&self, x: &DVector<f64>, t: f64) -> Option<DVector<f64>> {
        self.time_derivative.as_ref().map(|f| f(x, t))
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn has_hessians(&self) -> bool {
        self.hessians.is_some()
    }
}

/// Discrete measurement `y = h(x) + τ`, `τ ~ N(0, √R √Rᵀ)`.
#[derive(Clone)]
pub struct MeasurementModel {
    meas_dim: usize,
    h: Arc<MeasureFn>,
    noise_factor: DMatrix<f64>,
    residual_wrap: Vec<bool>,
}

impl fmt::Debug for MeasurementModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MeasurementModel")
            .field("meas_dim", &self.meas_dim)
            .field("noise_factor", &self.noise_factor)
            .field("residual_wrap", &self.residual_wrap)
            .finish()
    }
}

impl MeasurementModel {
    pub fn new<F>(meas_dim: usize, h: F, noise_factor: DMatrix<f64>) -> Result<Self>
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self::from_arc(meas_dim, Arc::new(h), noise_factor)
    }

    pub fn from_arc(
        meas_dim: usize,
        h: Arc<MeasureFn>,
        noise_factor: DMatrix<f64>,
    ) -> Result<Self> {
        if meas_dim == 0 {
            return Err(Error::InvalidArgument(
                "measurement dimension must be >= 1".into(),
            ));
        }
        if noise_factor.shape() != (meas_dim, meas_dim) {
            return Err(Error::DimensionMismatch(format!(
                "measurement noise factor must be {meas_dim}x{meas_dim}, got {}x{}",
                noise_factor.nrows(),
                noise_factor.ncols()
            )));
        }
        Ok(Self {
            meas_dim,
            h,
            noise_factor,
            residual_wrap: vec![false; meas_dim],
        })
    }

    /// Marks components whose residuals are angles to wrap into (−π, π].
    pub fn with_residual_wrap(mut self, flags: Vec<bool>) -> Result<Self> {
        if flags.len() != self.meas_dim {
            return Err(Error::DimensionMismatch(format!(
                "{} wrap flags for a {}-dimensional measurement",
                flags.len(),
                self.meas_dim
            )));
        }
        self.residual_wrap = flags;
        Ok(self)
    }

    pub fn meas_dim(&self) -> usize {
        self.meas_dim
    }

    pub fn measure(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.h)(x)
    }

    /// `√R`.
    pub fn noise_factor(&self) -> &DMatrix<f64> {
        &self.noise_factor
    }

    pub fn residual_wrap(&self) -> &[bool] {
        &self.residual_wrap
    }

    /// Applies the wrap flags to a residual vector.
    pub fn wrap_residual(&self, r: &mut DVector<f64>) {
        for (v, &w) in r.iter_mut().zip(&self.residual_wrap) {
            if w {
                *v = wrap_angle(*v);
            }
        }
    }
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    if a > -PI && a <= PI {
        return a;
    }
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r == -PI {
        PI
    } else {
        r
    }
}

/// Linear drift `v(x) = J x` with constant process noise `K`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    pub jacobian: DMatrix<f64>,
    pub process_noise: DMatrix<f64>,
}

impl LinearSystem {
    pub fn new(jacobian: DMatrix<f64>, process_noise: DMatrix<f64>) -> Result<Self> {
        let d = jacobian.nrows();
        if jacobian.ncols() != d || process_noise.shape() != (d, d) {
            return Err(Error::DimensionMismatch("J and K must both be d×d".into()));
        }
        Ok(Self {
            jacobian,
            process_noise,
        })
    }

    pub fn dim(&self) -> usize {
        self.jacobian.nrows()
    }

    /// SDE form with analytic Jacobian and zero Hessians.
    pub fn to_sde_model(&self) -> Result<SdeModel> {
        let d = self.dim();
        let sqrt_k = linalg::cholesky_lower(&self.process_noise)?;
        let j = self.jacobian.clone();
        let jj = self.jacobian.clone();
        Ok(SdeModel::new(d, move |x, _t| &j * x, sqrt_k)?
            .with_jacobian(move |_x, _t| jj.clone())
            .with_hessians(move |_x, _t| vec![DMatrix::zeros(d, d); d]))
    }
}
