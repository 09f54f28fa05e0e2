//! Explicit Runge-Kutta integration over a flat state vector.
//!
//! Fixed-step classical schemes of order 1, 2 and 4, and an adaptive
//! Dormand-Prince 5(4) pair with PI step-size control. The right-hand side may
//! fail; recoverable failures (for example a singular covariance factor) make
//! the adaptive solver reject and halve the step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Initial value problem `y' = rhs(t, y)` on `[t0, t1]`.
///
/// `rhs` writes the derivative into its output slice.
pub struct OdeProblem<F> {
    pub rhs: F,
    pub t0: f64,
    pub t1: f64,
    pub y0: Vec<f64>,
}

impl<F> OdeProblem<F>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    pub fn new(rhs: F, t0: f64, t1: f64, y0: Vec<f64>) -> Self {
        Self { rhs, t0, t1, y0 }
    }

    pub fn dim(&self) -> usize {
        self.y0.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    FixedRk1,
    FixedRk2,
    FixedRk4,
    Adaptive,
}

impl SolverKind {
    pub fn order(self) -> u32 {
        match self {
            SolverKind::FixedRk1 => 1,
            SolverKind::FixedRk2 => 2,
            SolverKind::FixedRk4 => 4,
            SolverKind::Adaptive => 5,
        }
    }

    pub fn stages(self) -> usize {
        match self {
            SolverKind::FixedRk1 => 1,
            SolverKind::FixedRk2 => 2,
            SolverKind::FixedRk4 => 4,
            SolverKind::Adaptive => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    pub kind: SolverKind,
    /// Number of equal steps for the fixed kinds.
    pub steps: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_steps: usize,
}

impl SolverSpec {
    pub fn fixed(kind: SolverKind, steps: usize) -> Self {
        Self {
            kind,
            steps,
            abs_tol: 0.0,
            rel_tol: 0.0,
            max_steps: usize::MAX,
        }
    }

    pub fn adaptive(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            kind: SolverKind::Adaptive,
            steps: 1,
            abs_tol,
            rel_tol,
            max_steps: 100_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            SolverKind::Adaptive => {
                if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
                    return Err(Error::InvalidArgument(
                        "adaptive tolerances must be positive".into(),
                    ));
                }
            }
            _ => {
                if self.steps == 0 {
                    return Err(Error::InvalidArgument(
                        "fixed step count must be >= 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverStats {
    pub rhs_evals: usize,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

impl std::ops::AddAssign for SolverStats {
    fn add_assign(&mut self, o: Self) {
        self.rhs_evals += o.rhs_evals;
        self.accepted_steps += o.accepted_steps;
        self.rejected_steps += o.rejected_steps;
    }
}

/// Integrates `problem` from `t0` to `t1`, returning `y(t1)`.
pub fn integrate<F>(
    problem: &mut OdeProblem<F>,
    spec: &SolverSpec,
) -> Result<(Vec<f64>, SolverStats)>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    spec.validate()?;
    if !(problem.t1 >= problem.t0) {
        return Err(Error::InvalidArgument(format!(
            "integration interval [{}, {}] is reversed",
            problem.t0, problem.t1
        )));
    }
    if problem.t1 == problem.t0 {
        return Ok((problem.y0.clone(), SolverStats::default()));
    }
    match spec.kind {
        SolverKind::Adaptive => integrate_adaptive(problem, spec),
        kind => integrate_fixed(problem, kind, spec.steps),
    }
}

fn integrate_fixed<F>(
    problem: &mut OdeProblem<F>,
    kind: SolverKind,
    steps: usize,
) -> Result<(Vec<f64>, SolverStats)>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = problem.dim();
    let (t0, t1) = (problem.t0, problem.t1);
    let h = (t1 - t0) / steps as f64;
    let mut y = problem.y0.clone();
    let mut stats = SolverStats::default();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let rhs = &mut problem.rhs;

    for s in 0..steps {
        let t = t0 + s as f64 * h;
        let h = if s + 1 == steps { t1 - t } else { h };
        match kind {
            SolverKind::FixedRk1 => {
                rhs(t, &y, &mut k1)?;
                axpy_into(&mut y, h, &k1);
            }
            SolverKind::FixedRk2 => {
                // explicit midpoint
                rhs(t, &y, &mut k1)?;
                lincomb(&mut tmp, &y, &[(0.5 * h, &k1)]);
                rhs(t + 0.5 * h, &tmp, &mut k2)?;
                axpy_into(&mut y, h, &k2);
            }
            SolverKind::FixedRk4 => {
                rhs(t, &y, &mut k1)?;
                lincomb(&mut tmp, &y, &[(0.5 * h, &k1)]);
                rhs(t + 0.5 * h, &tmp, &mut k2)?;
                lincomb(&mut tmp, &y, &[(0.5 * h, &k2)]);
                rhs(t + 0.5 * h, &tmp, &mut k3)?;
                lincomb(&mut tmp, &y, &[(h, &k3)]);
                rhs(t + h, &tmp, &mut k4)?;
                for i in 0..n {
                    y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
            SolverKind::Adaptive => unreachable!(),
        }
        stats.rhs_evals += kind.stages();
        stats.accepted_steps += 1;
    }
    Ok((y, stats))
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b*
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const PI_BETA: f64 = 0.04;
const PI_ALPHA: f64 = 0.2 - 0.75 * PI_BETA;
const MAX_HALVINGS: usize = 20;

fn integrate_adaptive<F>(
    problem: &mut OdeProblem<F>,
    spec: &SolverSpec,
) -> Result<(Vec<f64>, SolverStats)>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = problem.dim();
    let (t0, t1) = (problem.t0, problem.t1);
    let span = t1 - t0;
    let min_step = 1e-14 * span;
    let rhs = &mut problem.rhs;

    let mut stats = SolverStats::default();
    let mut y = problem.y0.clone();
    let mut t = t0;
    let mut h = span / 100.0;
    let mut err_prev: f64 = 1e-4;
    let mut halvings = 0usize;
    let mut last_rejected = false;

    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];

    rhs(t, &y, &mut k1)?;
    stats.rhs_evals += 1;

    while t < t1 {
        if stats.accepted_steps + stats.rejected_steps >= spec.max_steps {
            return Err(Error::MaxStepsExceeded {
                max_steps: spec.max_steps,
                t,
            });
        }
        // land exactly on t1; absorb a sliver of remaining interval
        let mut last = false;
        if t + h >= t1 - 1e-12 * span {
            h = t1 - t;
            last = true;
        }
        if h < min_step && !last {
            return Err(Error::StepUnderflow { t, h });
        }

        let stage = (|| -> Result<()> {
            lincomb(&mut tmp, &y, &[(h * A21, &k1)]);
            rhs(t + C2 * h, &tmp, &mut k2)?;
            lincomb(&mut tmp, &y, &[(h * A31, &k1), (h * A32, &k2)]);
            rhs(t + C3 * h, &tmp, &mut k3)?;
            lincomb(
                &mut tmp,
                &y,
                &[(h * A41, &k1), (h * A42, &k2), (h * A43, &k3)],
            );
            rhs(t + C4 * h, &tmp, &mut k4)?;
            lincomb(
                &mut tmp,
                &y,
                &[
                    (h * A51, &k1),
                    (h * A52, &k2),
                    (h * A53, &k3),
                    (h * A54, &k4),
                ],
            );
            rhs(t + C5 * h, &tmp, &mut k5)?;
            lincomb(
                &mut tmp,
                &y,
                &[
                    (h * A61, &k1),
                    (h * A62, &k2),
                    (h * A63, &k3),
                    (h * A64, &k4),
                    (h * A65, &k5),
                ],
            );
            rhs(t + h, &tmp, &mut k6)?;
            lincomb(
                &mut y_new,
                &y,
                &[
                    (h * B1, &k1),
                    (h * B3, &k3),
                    (h * B4, &k4),
                    (h * B5, &k5),
                    (h * B6, &k6),
                ],
            );
            rhs(t + h, &y_new, &mut k7)?;
            Ok(())
        })();
        stats.rhs_evals += 6;

        if let Err(e) = stage {
            if !e.is_recoverable() || halvings >= MAX_HALVINGS {
                return Err(e);
            }
            halvings += 1;
            stats.rejected_steps += 1;
            last_rejected = true;
            h *= 0.5;
            if h < min_step {
                return Err(Error::StepUnderflow { t, h });
            }
            continue;
        }

        let mut err: f64 = 0.0;
        for i in 0..n {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = spec.abs_tol + spec.rel_tol * y[i].abs().max(y_new[i].abs());
            err = err.max(e.abs() / sc);
        }
        if !err.is_finite() {
            if halvings >= MAX_HALVINGS {
                return Err(Error::NonFinite("adaptive error estimate"));
            }
            halvings += 1;
            stats.rejected_steps += 1;
            last_rejected = true;
            h *= 0.5;
            continue;
        }

        if err <= 1.0 {
            halvings = 0;
            stats.accepted_steps += 1;
            t = if last { t1 } else { t + h };
            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            let mut factor = if err == 0.0 {
                MAX_FACTOR
            } else {
                SAFETY * err.powf(-PI_ALPHA) * err_prev.powf(PI_BETA)
            };
            factor = factor.clamp(MIN_FACTOR, MAX_FACTOR);
            if last_rejected {
                factor = factor.min(1.0);
            }
            err_prev = err.max(1e-4);
            last_rejected = false;
            h *= factor;
        } else {
            stats.rejected_steps += 1;
            last_rejected = true;
            h *= (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, 1.0);
            if h < min_step {
                return Err(Error::StepUnderflow { t, h });
            }
        }
    }
    Ok((y, stats))
}

fn axpy_into(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn lincomb(out: &mut [f64], base: &[f64], terms: &[(f64, &Vec<f64>)]) {
    out.copy_from_slice(base);
    for (a, k) in terms {
        axpy_into(out, *a, k);
    }
}

/// Least-squares slope of `ln(err)` against `ln(dt)`.
pub fn fitted_slope(dts: &[f64], errs: &[f64]) -> Result<f64> {
    if dts.len() != errs.len() || dts.len() < 2 {
        return Err(Error::InvalidArgument(
            "slope fit needs at least two (dt, err) pairs".into(),
        ));
    }
    let xs: Vec<f64> = dts.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("all step sizes are equal".into()));
    }
    Ok(sxy / sxx)
}

/// Empirical order of a fixed-step scheme on `problem`.
///
/// The reference solution comes from the adaptive solver at tolerance 1e-12;
/// errors (∞-norm) at or below `error_floor` are dropped from the fit.
pub fn order_of_accuracy<F>(
    problem: &mut OdeProblem<F>,
    kind: SolverKind,
    step_counts: &[usize],
    error_floor: f64,
) -> Result<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let mut reference_spec = SolverSpec::adaptive(1e-12, 1e-12);
    reference_spec.max_steps = 10_000_000;
    let (reference, _) = integrate(problem, &reference_spec)?;
    let span = problem.t1 - problem.t0;
    let mut dts = Vec::new();
    let mut errs = Vec::new();
    for &m in step_counts {
        let (y, _) = integrate(problem, &SolverSpec::fixed(kind, m))?;
        let err = y
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if err > error_floor {
            dts.push(span / m as f64);
            errs.push(err);
        }
    }
    fitted_slope(&dts, &errs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[allow(clippy::type_complexity)]
    fn growth(t1: f64) -> OdeProblem<impl FnMut(f64, &[f64], &mut [f64]) -> Result<()>> {
        OdeProblem::new(
            |_t, y: &[f64], dy: &mut [f64]| {
                dy[0] = y[0];
                Ok(())
            },
            0.0,
            t1,
            vec![1.0],
        )
    }

    #[test]
    fn constant_solution_every_kind() {
        for spec in [
            SolverSpec::fixed(SolverKind::FixedRk1, 3),
            SolverSpec::fixed(SolverKind::FixedRk2, 3),
            SolverSpec::fixed(SolverKind::FixedRk4, 3),
            SolverSpec::adaptive(1e-8, 1e-8),
        ] {
            let mut p = OdeProblem::new(
                |_t, _y: &[f64], dy: &mut [f64]| {
                    dy.fill(0.0);
                    Ok(())
                },
                0.0,
                2.0,
                vec![1.5, -2.0],
            );
            let (y, _) = integrate(&mut p, &spec).unwrap();
            assert_eq!(y, vec![1.5, -2.0]);
        }
    }

    #[test]
    fn rk4_exponential() {
        let mut p = growth(1.0);
        let (y, stats) = integrate(&mut p, &SolverSpec::fixed(SolverKind::FixedRk4, 100)).unwrap();
        assert!((y[0] - E).abs() < 1e-8);
        assert_eq!(stats.rhs_evals, 400);
        assert_eq!(stats.accepted_steps, 100);
    }

    #[test]
    fn adaptive_decay() {
        let mut p = OdeProblem::new(
            |_t, y: &[f64], dy: &mut [f64]| {
                dy[0] = -y[0];
                Ok(())
            },
            0.0,
            1.0,
            vec![1.0],
        );
        let (y, stats) = integrate(&mut p, &SolverSpec::adaptive(1e-10, 1e-10)).unwrap();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-8);
        assert!(stats.accepted_steps > 0);
        // the counter exists and is consistent with the evaluation count
        assert_eq!(
            stats.rhs_evals,
            1 + 6 * (stats.accepted_steps + stats.rejected_steps)
        );
    }

    #[test]
    fn adaptive_rejects_large_initial_step() {
        // sharply varying forcing forces at least one rejection from h0 = span/100
        let mut p = OdeProblem::new(
            |t: f64, _y: &[f64], dy: &mut [f64]| {
                dy[0] = 50.0 * (50.0 * t).cos();
                Ok(())
            },
            0.0,
            10.0,
            vec![0.0],
        );
        let (y, stats) = integrate(&mut p, &SolverSpec::adaptive(1e-10, 1e-10)).unwrap();
        assert!((y[0] - (500.0f64).sin()).abs() < 1e-7);
        assert!(stats.rejected_steps > 0);
    }

    #[test]
    fn rk4_error_ratio_near_sixteen() {
        let err = |m| {
            let mut p = growth(1.0);
            let (y, _) = integrate(&mut p, &SolverSpec::fixed(SolverKind::FixedRk4, m)).unwrap();
            (y[0] - E).abs()
        };
        let ratio = err(10) / err(20);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn orders_of_accuracy() {
        let steps: Vec<usize> = (0..6).map(|k| 10usize << k).collect();
        let s1 = order_of_accuracy(&mut growth(1.0), SolverKind::FixedRk1, &steps, 0.0).unwrap();
        let s2 = order_of_accuracy(&mut growth(1.0), SolverKind::FixedRk2, &steps, 0.0).unwrap();
        let s4 = order_of_accuracy(&mut growth(1.0), SolverKind::FixedRk4, &steps, 1e-11).unwrap();
        assert!((s1 - 1.0).abs() <= 0.15, "rk1 slope {s1}");
        assert!((s2 - 2.0).abs() <= 0.2, "rk2 slope {s2}");
        assert!((s4 - 4.0).abs() <= 0.4, "rk4 slope {s4}");
    }

    #[test]
    fn adaptive_subdivision_invariance() {
        let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0] + 0.1 * (t).sin();
            Ok(())
        };
        let tol = 1e-9;
        let spec = SolverSpec::adaptive(tol, tol);
        let (whole, _) =
            integrate(&mut OdeProblem::new(rhs, 0.0, 4.0, vec![1.0, 0.0]), &spec).unwrap();
        for pieces in [2usize, 4, 8] {
            let mut y = vec![1.0, 0.0];
            for k in 0..pieces {
                let a = 4.0 * k as f64 / pieces as f64;
                let b = 4.0 * (k + 1) as f64 / pieces as f64;
                y = integrate(&mut OdeProblem::new(rhs, a, b, y), &spec)
                    .unwrap()
                    .0;
            }
            for (a, b) in y.iter().zip(&whole) {
                assert!((a - b).abs() <= 10.0 * tol, "{pieces} pieces: {a} vs {b}");
            }
        }
    }

    #[test]
    fn adaptive_recovers_from_rhs_failure() {
        // a few evaluations in the middle of the run fail as if the factor were singular
        let mut calls = 0usize;
        let mut p = OdeProblem::new(
            move |_t: f64, y: &[f64], dy: &mut [f64]| {
                calls += 1;
                if (10..14).contains(&calls) {
                    return Err(Error::SingularFactor {
                        pivot: 0.0,
                        index: 0,
                    });
                }
                dy[0] = -y[0];
                Ok(())
            },
            0.0,
            1.0,
            vec![1.0],
        );
        let (y, stats) = integrate(&mut p, &SolverSpec::adaptive(1e-10, 1e-10)).unwrap();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-8);
        assert!(stats.rejected_steps > 0);
    }

    #[test]
    fn unrecoverable_rhs_error_propagates() {
        let mut p = OdeProblem::new(
            |t: f64, _y: &[f64], _dy: &mut [f64]| {
                if t > 0.0 {
                    Err(Error::MissingDerivatives("test"))
                } else {
                    Ok(())
                }
            },
            0.0,
            1.0,
            vec![1.0],
        );
        assert_eq!(
            integrate(&mut p, &SolverSpec::adaptive(1e-6, 1e-6)).unwrap_err(),
            Error::MissingDerivatives("test")
        );
    }

    #[test]
    fn persistent_singularity_gives_up() {
        let mut p = OdeProblem::new(
            |t: f64, _y: &[f64], dy: &mut [f64]| {
                if t > 0.0 {
                    Err(Error::SingularFactor {
                        pivot: 0.0,
                        index: 0,
                    })
                } else {
                    dy[0] = 1.0;
                    Ok(())
                }
            },
            0.0,
            1.0,
            vec![1.0],
        );
        assert!(matches!(
            integrate(&mut p, &SolverSpec::adaptive(1e-6, 1e-6)),
            Err(Error::SingularFactor { .. })
        ));
    }

    #[test]
    fn max_steps_exceeded() {
        let mut spec = SolverSpec::adaptive(1e-12, 1e-12);
        spec.max_steps = 3;
        let mut p = growth(10.0);
        assert!(matches!(
            integrate(&mut p, &spec),
            Err(Error::MaxStepsExceeded { .. })
        ));
    }

    #[test]
    fn lands_exactly_on_t1() {
        let mut p = OdeProblem::new(
            |_t, _y: &[f64], dy: &mut [f64]| {
                dy[0] = 1.0;
                Ok(())
            },
            0.3,
            1.7,
            vec![0.0],
        );
        let (y, _) = integrate(&mut p, &SolverSpec::adaptive(1e-8, 1e-8)).unwrap();
        assert!((y[0] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut p = growth(1.0);
        assert!(integrate(&mut p, &SolverSpec::fixed(SolverKind::FixedRk4, 0)).is_err());
        assert!(integrate(&mut p, &SolverSpec::adaptive(0.0, 1e-6)).is_err());
        let mut rev = OdeProblem::new(
            |_t, _y: &[f64], _dy: &mut [f64]| Ok(()),
            1.0,
            0.0,
            vec![0.0],
        );
        assert!(integrate(&mut rev, &SolverSpec::adaptive(1e-6, 1e-6)).is_err());
    }
}
