//! Factor non-uniqueness study on the shear transport problem.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cholesky_lower;
use crate::lskf::{count_drift_evals, lskf_time_update, LskfVariant};
use crate::model::GaussianBelief;
use crate::odesolve::SolverSpec;
use crate::scenarios::transport_scenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportStudyConfig {
    pub a: f64,
    pub b: f64,
    pub t: f64,
    pub factorizations: usize,
    pub seed: u64,
    pub grid_n: usize,
    pub tol: f64,
}

impl Default for TransportStudyConfig {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 1.0,
            t: 1.0,
            factorizations: 1024,
            seed: 20_210_001,
            grid_n: 201,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportSummary {
    pub variant: LskfVariant,
    pub drift_evals_per_rhs: usize,
    pub mean_l2_error: f64,
    /// Spread of the propagated covariance across factorizations, averaged
    /// over the distinct entries.
    pub cov_std_mean: f64,
    pub l2_errors: Vec<f64>,
}

/// Haar-distributed element of O(2).
pub fn random_orthogonal_2x2<R: Rng>(rng: &mut R) -> DMatrix<f64> {
    let theta = rng.random_range(0.0..2.0 * PI);
    let (s, c) = theta.sin_cos();
    let reflect = if rng.random_bool(0.5) { -1.0 } else { 1.0 };
    DMatrix::from_row_slice(2, 2, &[c, -s * reflect, s, c * reflect])
}

fn population_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

pub fn transport_study(
    cfg: &TransportStudyConfig,
    variants: &[LskfVariant],
) -> Result<Vec<TransportSummary>> {
    if cfg.factorizations == 0 || cfg.grid_n < 2 || !(cfg.t > 0.0) {
        return Err(Error::Config("invalid transport study settings".into()));
    }
    let s = transport_scenario(cfg.a, cfg.b)?;
    let chol = cholesky_lower(&s.initial_covariance())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rotations: Vec<DMatrix<f64>> = (0..cfg.factorizations)
        .map(|_| random_orthogonal_2x2(&mut rng))
        .collect();
    let grid = s.grid(cfg.t, cfg.grid_n);
    let spec = SolverSpec::adaptive(cfg.tol, cfg.tol);

    variants
        .iter()
        .map(|&variant| {
            let results: Vec<(f64, DMatrix<f64>)> = rotations
                .par_iter()
                .map(|q| {
                    let b0 = GaussianBelief::new(DVector::zeros(2), &chol * q, 0.0)?;
                    let b = lskf_time_update(&b0, &s.model, variant, cfg.t, &spec)?;
                    Ok((s.l2_error(&b, cfg.t, &grid)?, b.covariance()))
                })
                .collect::<Result<_>>()?;
            let l2_errors: Vec<f64> = results.iter().map(|r| r.0).collect();
            let entries = [(0, 0), (0, 1), (1, 1)];
            let cov_std_mean = entries
                .iter()
                .map(|&(i, j)| {
                    population_std(&results.iter().map(|r| r.1[(i, j)]).collect::<Vec<_>>())
                })
                .sum::<f64>()
                / entries.len() as f64;
            Ok(TransportSummary {
                variant,
                drift_evals_per_rhs: count_drift_evals(variant, 2),
                mean_l2_error: l2_errors.iter().sum::<f64>() / l2_errors.len() as f64,
                cov_std_mean,
                l2_errors,
            })
        })
        .collect()
}
