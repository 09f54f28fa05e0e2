use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cdckf::{CdckfMode, CdckfVariant};
use crate::error::{Error, Result};
use crate::filter::Propagator;
use crate::lskf::LskfVariant;
use crate::lyapunov::lyapunov_oracle;
use crate::model::GaussianBelief;
use crate::odesolve::{SolverKind, SolverSpec};
use crate::scenarios::{linear_fp_scenario, oscillator_scenario, LinearScenario};

pub const ORACLE_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergenceProblem {
    LinearFp,
    Oscillator,
}

impl ConvergenceProblem {
    pub fn scenario(self) -> LinearScenario {
        match self {
            ConvergenceProblem::LinearFp => linear_fp_scenario(),
            ConvergenceProblem::Oscillator => oscillator_scenario(),
        }
    }
}

impl FromStr for ConvergenceProblem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear-fp" => Ok(ConvergenceProblem::LinearFp),
            "oscillator" => Ok(ConvergenceProblem::Oscillator),
            _ => Err(Error::InvalidArgument(format!("unknown problem '{s}'"))),
        }
    }
}

impl fmt::Display for ConvergenceProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConvergenceProblem::LinearFp => "linear-fp",
            ConvergenceProblem::Oscillator => "oscillator",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvMethod {
    LskfRk1,
    LskfRk2,
    LskfRk4,
    LskfAdaptive,
    Cdckf,
    CdckfProper,
}

impl ConvMethod {
    pub const ALL: [ConvMethod; 6] = [
        ConvMethod::LskfRk1,
        ConvMethod::LskfRk2,
        ConvMethod::LskfRk4,
        ConvMethod::LskfAdaptive,
        ConvMethod::Cdckf,
        ConvMethod::CdckfProper,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ConvMethod::LskfRk1 => "lskf-rk1",
            ConvMethod::LskfRk2 => "lskf-rk2",
            ConvMethod::LskfRk4 => "lskf-rk4",
            ConvMethod::LskfAdaptive => "lskf-adaptive",
            ConvMethod::Cdckf => "cdckf",
            ConvMethod::CdckfProper => "cdckf-proper",
        }
    }

    /// Propagator taking `steps` steps over the whole horizon.
    pub fn propagator(self, steps: usize, variant: LskfVariant) -> Propagator {
        let fixed = |kind| Propagator::Lskf {
            variant,
            solver: SolverSpec::fixed(kind, steps),
            pieces: 1,
        };
        match self {
            ConvMethod::LskfRk1 => fixed(SolverKind::FixedRk1),
            ConvMethod::LskfRk2 => fixed(SolverKind::FixedRk2),
            ConvMethod::LskfRk4 => fixed(SolverKind::FixedRk4),
            ConvMethod::LskfAdaptive => Propagator::Lskf {
                variant,
                solver: SolverSpec::adaptive(1e-8, 1e-8),
                pieces: steps,
            },
            ConvMethod::Cdckf => {
                Propagator::Cdckf(CdckfVariant::new(CdckfMode::IntervalNoise, steps))
            }
            ConvMethod::CdckfProper => {
                Propagator::Cdckf(CdckfVariant::new(CdckfMode::ProperIt15, steps))
            }
        }
    }
}

impl fmt::Display for ConvMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConvMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ConvMethod::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub method: ConvMethod,
    pub steps: usize,
    pub dt: f64,
    pub err_mean_l2: f64,
    pub err_cov_fro: f64,
}

/// Exact mean and covariance of `problem` at its horizon.
pub fn oracle(problem: ConvergenceProblem) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let s = problem.scenario();
    lyapunov_oracle(&s.system, &s.mean0, &s.cov0, s.horizon, ORACLE_TOL)
}

/// Propagates the initial belief of `problem` to its horizon with `method`.
pub fn propagate(
    problem: ConvergenceProblem,
    method: ConvMethod,
    steps: usize,
    variant: LskfVariant,
) -> Result<GaussianBelief> {
    if steps == 0 {
        return Err(Error::InvalidArgument("step counts must be >= 1".into()));
    }
    let s = problem.scenario();
    let (b, _) =
        method
            .propagator(steps, variant)
            .predict(&s.initial_belief()?, &s.model()?, s.horizon)?;
    Ok(b)
}

/// Errors of each method against the exact linear solution at the horizon.
pub fn convergence_study(
    problem: ConvergenceProblem,
    methods: &[ConvMethod],
    step_counts: &[usize],
    variant: LskfVariant,
) -> Result<Vec<ConvergenceRow>> {
    let horizon = problem.scenario().horizon;
    let (mean_ref, cov_ref) = oracle(problem)?;
    let mut rows = Vec::new();
    for &method in methods {
        for &steps in step_counts {
            let b = propagate(problem, method, steps, variant)?;
            let de = &b.mean - &mean_ref;
            let dc = b.covariance() - &cov_ref;
            rows.push(ConvergenceRow {
                method,
                steps,
                dt: horizon / steps as f64,
                err_mean_l2: de.norm(),
                err_cov_fro: dc.norm(),
            });
        }
    }
    Ok(rows)
}
