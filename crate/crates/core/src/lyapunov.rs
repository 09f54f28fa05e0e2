//! Ground-truth moments for linear Fokker-Planck dynamics.
//!
//! For `v(x) = J x` with constant `K`, the mean and covariance obey
//! `x̄' = J x̄` and `Σ' = J Σ + Σ Jᵀ + K`. Integrating those directly gives an
//! oracle that shares nothing with the level-set factor ODE.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::symmetrize;
use crate::model::LinearSystem;
use crate::odesolve::{integrate, OdeProblem, SolverSpec};

/// Propagates `(x̄₀, Σ₀)` through the linear system for a duration `t`.
pub fn lyapunov_oracle(
    sys: &LinearSystem,
    mean0: &DVector<f64>,
    cov0: &DMatrix<f64>,
    t: f64,
    tol: f64,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = sys.dim();
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(
            "oracle tolerance must be positive".into(),
        ));
    }
    if mean0.len() != d || cov0.shape() != (d, d) {
        return Err(Error::DimensionMismatch("oracle initial moments".into()));
    }
    let mut y0 = Vec::with_capacity(d + d * d);
    y0.extend(mean0.iter());
    y0.extend(cov0.iter());
    let j = &sys.jacobian;
    let k = &sys.process_noise;
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let x = DVector::from_column_slice(&y[..d]);
        let s = DMatrix::from_column_slice(d, d, &y[d..]);
        let dx = j * x;
        let js = j * &s;
        let ds = &js + js.transpose() + k;
        dy[..d].copy_from_slice(dx.as_slice());
        dy[d..].copy_from_slice(ds.as_slice());
        Ok(())
    };
    let mut spec = SolverSpec::adaptive(tol, tol);
    spec.max_steps = 10_000_000;
    let (y, _) = integrate(&mut OdeProblem::new(rhs, 0.0, t, y0), &spec)?;
    let mean = DVector::from_column_slice(&y[..d]);
    let cov = symmetrize(&DMatrix::from_column_slice(d, d, &y[d..]));
    Ok((mean, cov))
}
