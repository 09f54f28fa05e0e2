//! CD-CKF time-update with the order-1.5 Itô-Taylor expansion.
//!
//! Two placements of the discretized noise are provided:
//!
//! * `ProperIt15` injects the IT-1.5 noise blocks at every substep with the
//!   substep length, which converges at weak order 2.
//! * `IntervalNoise` builds the noise blocks
//!   once per measurement interval (full-interval length, operators
//!   evaluated at the first substep's propagated mean) and injects them in the
//!   first substep only. Later substeps propagate the cubature spread alone.
//!
//! With `m = 1` both variants coincide.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cubature_points, tria};
use crate::model::{GaussianBelief, SdeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CdckfMode {
    IntervalNoise,
    ProperIt15,
}

impl fmt::Display for CdckfMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CdckfMode::IntervalNoise => "interval-noise",
            CdckfMode::ProperIt15 => "proper-it15",
        })
    }
}

impl FromStr for CdckfMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interval-noise" => Ok(CdckfMode::IntervalNoise),
            "proper-it15" => Ok(CdckfMode::ProperIt15),
            other => Err(Error::InvalidArgument(format!(
                "unknown CD-CKF mode '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CdckfVariant {
    pub mode: CdckfMode,
    /// Substeps per measurement interval.
    pub m: usize,
    /// Use central differences for missing derivatives instead of failing.
    #[serde(default)]
    pub finite_differences: bool,
}

impl CdckfVariant {
    pub fn new(mode: CdckfMode, m: usize) -> Self {
        Self {
            mode,
            m,
            finite_differences: false,
        }
    }
}

/// Itô-Taylor operators derived from an [`SdeModel`].
#[derive(Debug, Clone, Copy)]
pub struct It15Operators<'a> {
    model: &'a SdeModel,
    finite_differences: bool,
}

impl<'a> It15Operators<'a> {
    pub fn new(model: &'a SdeModel) -> Self {
        Self {
            model,
            finite_differences: false,
        }
    }

    pub fn with_finite_differences(mut self, on: bool) -> Self {
        self.finite_differences = on;
        self
    }

    pub fn model(&self) -> &SdeModel {
        self.model
    }

    pub fn jacobian(&self, x: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
        if let Some(j) = self.model.jacobian(x, t) {
            return Ok(j);
        }
        if self.finite_differences {
            return Ok(fd_jacobian(self.model, x, t));
        }
        Err(Error::MissingDerivatives("drift Jacobian"))
    }

    /// `Σ_{p,q} K_{pq} ∂²vᵢ/∂x_p∂x_q` for every component `i`.
    pub fn diffusion_curvature(&self, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        let d = self.model.dim();
        let k = self.model.process_noise();
        if let Some(hs) = self.model.hessians(x, t) {
            if hs.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "{} Hessians for a {d}-dimensional drift",
                    hs.len()
                )));
            }
            return Ok(DVector::from_iterator(
                d,
                hs.iter().map(|h| h.component_mul(k).sum()),
            ));
        }
        if k.iter().all(|&v| v == 0.0) {
            return Ok(DVector::zeros(d));
        }
        if self.finite_differences {
            return Ok(fd_diffusion_curvature(self.model, x, t));
        }
        Err(Error::MissingDerivatives("drift Hessians"))
    }

    /// `𝕃₀ v = ∂v/∂t + J v + ½ Σ K_{pq} ∂²v/∂x_p∂x_q`.
    pub fn l0(&self, x: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
        let v = self.model.drift(x, t);
        let mut out = self.jacobian(x, t)? * v + self.diffusion_curvature(x, t)? * 0.5;
        if let Some(dt) = self.model.time_derivative(x, t) {
            out += dt;
        }
        Ok(out)
    }

    /// `f_d(x) = x + Δt·v + ½Δt²·𝕃₀v`.
    pub fn point_predict(&self, x: &DVector<f64>, t: f64, dt: f64) -> Result<DVector<f64>> {
        let v = self.model.drift(x, t);
        let l0 = self.l0(x, t)?;
        Ok(x + v * dt + l0 * (0.5 * dt * dt))
    }

    /// The matrix `𝕃(v)` with entries `𝕃ⱼvᵢ = Σ_k √K_{kj} ∂vᵢ/∂x_k`, i.e. `J·√K`.
    pub fn lv_matrix(&self, x: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
        Ok(self.jacobian(x, t)? * self.model.diffusion_factor())
    }
}

pub fn it15_point_predict(
    x: &DVector<f64>,
    t: f64,
    dt: f64,
    ops: &It15Operators<'_>,
) -> Result<DVector<f64>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(
            "IT-1.5 step must be positive".into(),
        ));
    }
    ops.point_predict(x, t, dt)
}

pub fn lv_matrix(x: &DVector<f64>, t: f64, ops: &It15Operators<'_>) -> Result<DMatrix<f64>> {
    ops.lv_matrix(x, t)
}

fn fd_step(x: &DVector<f64>) -> f64 {
    1e-6 * (1.0 + x.norm())
}

fn fd_jacobian(model: &SdeModel, x: &DVector<f64>, t: f64) -> DMatrix<f64> {
    let d = model.dim();
    let h = fd_step(x);
    let mut j = DMatrix::<f64>::zeros(d, d);
    for k in 0..d {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let col = (model.drift(&xp, t) - model.drift(&xm, t)) / (2.0 * h);
        j.set_column(k, &col);
    }
    j
}

fn fd_diffusion_curvature(model: &SdeModel, x: &DVector<f64>, t: f64) -> DVector<f64> {
    // Σ_pq K_pq H_pq = Σ_j sⱼᵀ H sⱼ with sⱼ the columns of √K; each term is a
    // second directional difference along sⱼ.
    let d = model.dim();
    let sqrt_k = model.diffusion_factor();
    let v0 = model.drift(x, t);
    // second differences need a larger step than first differences
    let h = f64::EPSILON.powf(0.25) * (1.0 + x.norm());
    let mut acc = DVector::<f64>::zeros(d);
    for s in sqrt_k.column_iter() {
        let n = s.norm();
        if n == 0.0 {
            continue;
        }
        let u = s / n;
        let vp = model.drift(&(x + &u * h), t);
        let vm = model.drift(&(x - &u * h), t);
        acc += (vp - &v0 * 2.0 + vm) * (n * n / (h * h));
    }
    acc
}

/// CD-CKF prediction of `belief` to `t1` using `variant.m` equal substeps.
pub fn cdckf_time_update(
    belief: &GaussianBelief,
    model: &SdeModel,
    variant: &CdckfVariant,
    t1: f64,
) -> Result<GaussianBelief> {
    let t0 = belief.time;
    if !(t1 >= t0) {
        return Err(Error::InvalidArgument(format!(
            "time-update target {t1} precedes belief time {t0}"
        )));
    }
    if variant.m == 0 {
        return Err(Error::InvalidArgument("CD-CKF needs m >= 1".into()));
    }
    if model.dim() != belief.dim() {
        return Err(Error::DimensionMismatch("model vs belief dimension".into()));
    }
    if t1 == t0 {
        return Ok(belief.clone());
    }
    let ops = It15Operators::new(model).with_finite_differences(variant.finite_differences);
    let d = belief.dim();
    let interval = t1 - t0;
    let dt = interval / variant.m as f64;
    let weight = 1.0 / ((2 * d) as f64).sqrt();
    let sqrt_k = model.diffusion_factor();

    let mut mean = belief.mean.clone();
    let mut factor = belief.factor.clone();
    for s in 0..variant.m {
        let t = t0 + s as f64 * dt;
        let pts = cubature_points(&mean, &factor);
        let mut prop = DMatrix::<f64>::zeros(d, 2 * d);
        for (i, p) in pts.column_iter().enumerate() {
            let x = p.clone_owned();
            prop.set_column(i, &ops.point_predict(&x, t, dt)?);
        }
        let new_mean = prop.column_sum() / (2 * d) as f64;
        let mut centered = prop;
        for mut c in centered.column_iter_mut() {
            c -= &new_mean;
            c *= weight;
        }

        let noise_step = match variant.mode {
            CdckfMode::ProperIt15 => Some(dt),
            CdckfMode::IntervalNoise if s == 0 => Some(interval),
            CdckfMode::IntervalNoise => None,
        };
        let stacked = match noise_step {
            Some(h) => {
                let lv = ops.lv_matrix(&new_mean, t)?;
                let b = (sqrt_k + &lv * (0.5 * h)) * h.sqrt();
                let c = &lv * (h * h * h / 12.0).sqrt();
                let mut a = DMatrix::<f64>::zeros(d, 4 * d);
                a.view_mut((0, 0), (d, 2 * d)).copy_from(&centered);
                a.view_mut((0, 2 * d), (d, d)).copy_from(&b);
                a.view_mut((0, 3 * d), (d, d)).copy_from(&c);
                a
            }
            None => centered,
        };
        factor = tria(&stacked)?;
        mean = new_mean;
        if !(mean.iter().chain(factor.iter()).all(|v| v.is_finite())) {
            return Err(Error::TimeUpdate {
                from: t0,
                to: t1,
                source: Box::new(Error::NonFinite("CD-CKF prediction")),
            });
        }
    }
    Ok(GaussianBelief {
        mean,
        factor,
        time: t1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::outer_square;
    use crate::model::LinearSystem;
    use nalgebra::dmatrix;

    #[test]
    fn frozen_system_is_unchanged() {
        let sys = LinearSystem::new(DMatrix::zeros(2, 2), DMatrix::zeros(2, 2)).unwrap();
        let model = sys.to_sde_model().unwrap();
        let m = dmatrix![1.0, 0.0; 0.5, 2.0];
        let b = GaussianBelief::new(DVector::from_vec(vec![3.0, -1.0]), m.clone(), 0.0).unwrap();
        for mode in [CdckfMode::IntervalNoise, CdckfMode::ProperIt15] {
            for steps in [1, 3, 8] {
                let out =
                    cdckf_time_update(&b, &model, &CdckfVariant::new(mode, steps), 2.0).unwrap();
                assert_eq!(out.mean, b.mean);
                assert!((out.factor.clone() - &m).amax() < 1e-14);
                assert_eq!(out.time, 2.0);
            }
        }
    }

    #[test]
    fn point_predict_is_second_order_taylor_for_linear_drift() {
        let j = dmatrix![0.1, 1.0, 0.0; -0.5, 0.0, 0.3; 0.0, 0.2, -0.4];
        let sys = LinearSystem::new(j.clone(), DMatrix::zeros(3, 3)).unwrap();
        let model = sys.to_sde_model().unwrap();
        let ops = It15Operators::new(&model);
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let dt = 0.3;
        let expect = &x + &j * &x * dt + &j * &j * &x * (0.5 * dt * dt);
        let got = it15_point_predict(&x, 0.0, dt, &ops).unwrap();
        assert!((got - expect).amax() < 1e-14);
        assert!(it15_point_predict(&x, 0.0, 0.0, &ops).is_err());
    }

    #[test]
    fn lv_matrix_contractions() {
        let zero = LinearSystem::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2)).unwrap();
        let model = zero.to_sde_model().unwrap();
        let x = DVector::zeros(2);
        assert_eq!(
            lv_matrix(&x, 0.0, &It15Operators::new(&model)).unwrap(),
            DMatrix::zeros(2, 2)
        );

        let s = [0.3, 2.0, 0.7];
        let model = SdeModel::new(
            3,
            |x, _| x.clone(),
            DMatrix::from_diagonal(&DVector::from_row_slice(&s)),
        )
        .unwrap()
        .with_jacobian(|_, _| DMatrix::identity(3, 3));
        let lv = lv_matrix(&DVector::zeros(3), 0.0, &It15Operators::new(&model)).unwrap();
        assert_eq!(lv, DMatrix::from_diagonal(&DVector::from_row_slice(&s)));
    }

    #[test]
    fn missing_derivatives() {
        let model = SdeModel::new(2, |x, _| x.clone(), DMatrix::identity(2, 2)).unwrap();
        let ops = It15Operators::new(&model);
        let x = DVector::from_vec(vec![1.0, 1.0]);
        assert_eq!(
            ops.l0(&x, 0.0).unwrap_err(),
            Error::MissingDerivatives("drift Jacobian")
        );
        let b = GaussianBelief::new(x.clone(), DMatrix::identity(2, 2), 0.0).unwrap();
        assert!(cdckf_time_update(
            &b,
            &model,
            &CdckfVariant::new(CdckfMode::ProperIt15, 2),
            1.0
        )
        .is_err());
        let mut fd = CdckfVariant::new(CdckfMode::ProperIt15, 2);
        fd.finite_differences = true;
        assert!(cdckf_time_update(&b, &model, &fd, 1.0).is_ok());
    }

    #[test]
    fn finite_difference_fallback_matches_analytic() {
        // v = (x₀ x₁, sin x₀), √K dense
        let drift = |x: &DVector<f64>, _t: f64| DVector::from_vec(vec![x[0] * x[1], x[0].sin()]);
        let sqrt_k = dmatrix![0.3, 0.0; 0.2, 0.5];
        let analytic = SdeModel::new(2, drift, sqrt_k.clone())
            .unwrap()
            .with_jacobian(|x, _| dmatrix![x[1], x[0]; x[0].cos(), 0.0])
            .with_hessians(|x, _| {
                vec![
                    dmatrix![0.0, 1.0; 1.0, 0.0],
                    dmatrix![-x[0].sin(), 0.0; 0.0, 0.0],
                ]
            });
        let black_box = SdeModel::new(2, drift, sqrt_k).unwrap();
        let x = DVector::from_vec(vec![0.7, -1.3]);
        let a = It15Operators::new(&analytic).l0(&x, 0.0).unwrap();
        let b = It15Operators::new(&black_box)
            .with_finite_differences(true)
            .l0(&x, 0.0)
            .unwrap();
        assert!((a - b).amax() < 1e-6);
    }

    #[test]
    fn single_substep_variants_coincide() {
        let sys = LinearSystem::new(dmatrix![0.0, 1.0; -1.0, -0.1], dmatrix![0.1, 0.0; 0.0, 0.2])
            .unwrap();
        let model = sys.to_sde_model().unwrap();
        let b = GaussianBelief::new(
            DVector::from_vec(vec![1.0, 0.0]),
            DMatrix::identity(2, 2) * 0.3,
            0.0,
        )
        .unwrap();
        let a = cdckf_time_update(
            &b,
            &model,
            &CdckfVariant::new(CdckfMode::IntervalNoise, 1),
            0.5,
        )
        .unwrap();
        let p = cdckf_time_update(
            &b,
            &model,
            &CdckfVariant::new(CdckfMode::ProperIt15, 1),
            0.5,
        )
        .unwrap();
        assert_eq!(a, p);
    }

    #[test]
    fn covariance_recursion_for_linear_drift() {
        // Σ' = Φ Σ Φᵀ + Δt K + Δt²/2 (J K + K Jᵀ) + Δt³/3 J K Jᵀ per substep
        let j = dmatrix![0.0, 1.0; -2.0, -0.3];
        let k = dmatrix![0.04, 0.01; 0.01, 0.09];
        let sys = LinearSystem::new(j.clone(), k.clone()).unwrap();
        let model = sys.to_sde_model().unwrap();
        let b = GaussianBelief::from_covariance(
            DVector::from_vec(vec![1.0, 0.5]),
            &dmatrix![0.5, 0.1; 0.1, 0.3],
            0.0,
        )
        .unwrap();
        let dt = 0.05;
        let phi = DMatrix::identity(2, 2) + &j * dt + &j * &j * (0.5 * dt * dt);
        let mut sigma = b.covariance();
        let mut mean = b.mean.clone();
        for _ in 0..4 {
            sigma = &phi * &sigma * phi.transpose()
                + &k * dt
                + (&j * &k + &k * j.transpose()) * (0.5 * dt * dt)
                + &j * &k * j.transpose() * (dt * dt * dt / 3.0);
            mean = &phi * mean;
        }
        let out = cdckf_time_update(
            &b,
            &model,
            &CdckfVariant::new(CdckfMode::ProperIt15, 4),
            4.0 * dt,
        )
        .unwrap();
        assert!((out.mean - mean).amax() < 1e-14);
        assert!((outer_square(&out.factor) - sigma).amax() < 1e-14);
    }
}
