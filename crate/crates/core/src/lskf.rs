//! Level set Kalman filter time-update.
//!
//! The Gaussian `N(x̄, M Mᵀ)` is tracked through the points `x̄ + Mᵢ` on its
//! one-sigma ellipsoid. Each column of `M` moves with the drift difference
//! `v(x̄ + Mᵢ) − c` plus the diffusion velocity `½ K (Mᵀ)⁻¹ eᵢ`, while the
//! center moves with `c`. The variants differ only in the center velocity `c`:
//!
//! * `Standard`: `c = v(x̄)`
//! * `Averaged`: `c = (1/2d) Σᵢ [v(x̄ + Mᵢ) + v(x̄ − Mᵢ)]`
//! * `Partial`:  `c = (1/2d) [Σᵢ v(x̄ + Mᵢ) + d·v(x̄ − M₁)]`
//!
//! The concatenated state `(x̄ | M)` is handed to a generic ODE solver.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::solve_transpose;
use crate::model::{GaussianBelief, SdeModel};
use crate::odesolve::{integrate, OdeProblem, SolverSpec, SolverStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LskfVariant {
    Standard,
    #[default]
    Averaged,
    Partial,
}

impl LskfVariant {
    pub const ALL: [LskfVariant; 3] = [
        LskfVariant::Standard,
        LskfVariant::Averaged,
        LskfVariant::Partial,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LskfVariant::Standard => "standard",
            LskfVariant::Averaged => "averaged",
            LskfVariant::Partial => "partial",
        }
    }
}

impl fmt::Display for LskfVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LskfVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(LskfVariant::Standard),
            "averaged" => Ok(LskfVariant::Averaged),
            "partial" => Ok(LskfVariant::Partial),
            other => Err(Error::InvalidArgument(format!(
                "unknown LSKF variant '{other}'"
            ))),
        }
    }
}

/// Drift evaluations performed by one [`lskf_rhs`] call.
pub fn count_drift_evals(variant: LskfVariant, d: usize) -> usize {
    match variant {
        LskfVariant::Standard | LskfVariant::Partial => d + 1,
        LskfVariant::Averaged => 2 * d,
    }
}

/// Packs `(x̄ | M)` into a flat vector: the mean, then `M` column by column.
pub fn pack(mean: &DVector<f64>, factor: &DMatrix<f64>) -> Vec<f64> {
    let mut y = Vec::with_capacity(mean.len() * (mean.len() + 1));
    y.extend(mean.iter());
    // nalgebra storage is column-major
    y.extend(factor.iter());
    y
}

pub fn unpack(y: &[f64], d: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if y.len() != d * (d + 1) {
        return Err(Error::DimensionMismatch(format!(
            "packed state of length {} for d = {d}",
            y.len()
        )));
    }
    Ok((
        DVector::from_column_slice(&y[..d]),
        DMatrix::from_column_slice(d, d, &y[d..]),
    ))
}

/// Time derivative of `(x̄, M)`.
pub fn lskf_rhs(
    t: f64,
    mean: &DVector<f64>,
    factor: &DMatrix<f64>,
    model: &SdeModel,
    variant: LskfVariant,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = mean.len();
    if model.dim() != d || factor.shape() != (d, d) {
        return Err(Error::DimensionMismatch(format!(
            "model dimension {} vs belief dimension {d}",
            model.dim()
        )));
    }

    let mut forward = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        let v = model.drift(&(mean + factor.column(i)), t);
        forward.set_column(i, &v);
    }
    let center = match variant {
        LskfVariant::Standard => model.drift(mean, t),
        LskfVariant::Averaged => {
            let mut acc = forward.column_sum();
            for i in 0..d {
                acc += model.drift(&(mean - factor.column(i)), t);
            }
            acc / (2 * d) as f64
        }
        LskfVariant::Partial => {
            let back = model.drift(&(mean - factor.column(0)), t);
            (forward.column_sum() + back * d as f64) / (2 * d) as f64
        }
    };

    let mut dm = forward;
    for mut col in dm.column_iter_mut() {
        col -= &center;
    }
    let k = model.process_noise();
    if k.iter().any(|&v| v != 0.0) {
        let diffusion = solve_transpose(factor, k)?;
        dm += diffusion * 0.5;
    }

    if center.iter().chain(dm.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("level-set velocity"));
    }
    Ok((center, dm))
}

/// Propagates `belief` to `t1`; the returned factor is left untriangularized.
pub fn lskf_time_update(
    belief: &GaussianBelief,
    model: &SdeModel,
    variant: LskfVariant,
    t1: f64,
    spec: &SolverSpec,
) -> Result<GaussianBelief> {
    lskf_time_update_with_stats(belief, model, variant, t1, spec).map(|(b, _)| b)
}

pub fn lskf_time_update_with_stats(
    belief: &GaussianBelief,
    model: &SdeModel,
    variant: LskfVariant,
    t1: f64,
    spec: &SolverSpec,
) -> Result<(GaussianBelief, SolverStats)> {
    let t0 = belief.time;
    if !(t1 >= t0) {
        return Err(Error::InvalidArgument(format!(
            "time-update target {t1} precedes belief time {t0}"
        )));
    }
    if t1 == t0 {
        return Ok((belief.clone(), SolverStats::default()));
    }
    let d = belief.dim();
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let (mean, factor) = unpack(y, d)?;
        let (dx, dm) = lskf_rhs(t, &mean, &factor, model, variant)?;
        dy[..d].copy_from_slice(dx.as_slice());
        dy[d..].copy_from_slice(dm.as_slice());
        Ok(())
    };
    let mut problem = OdeProblem::new(rhs, t0, t1, pack(&belief.mean, &belief.factor));
    let (y, stats) = integrate(&mut problem, spec).map_err(|e| Error::TimeUpdate {
        from: t0,
        to: t1,
        source: Box::new(e),
    })?;
    let (mean, factor) = unpack(&y, d)?;
    Ok((
        GaussianBelief {
            mean,
            factor,
            time: t1,
        },
        stats,
    ))
}
