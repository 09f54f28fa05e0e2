//! Alternating time-update / measurement-update loop.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::cdckf::{cdckf_time_update, CdckfVariant};
use crate::error::{Error, Result};
use crate::lskf::{lskf_time_update_with_stats, LskfVariant};
use crate::model::{GaussianBelief, MeasurementModel, SdeModel};
use crate::odesolve::{SolverSpec, SolverStats};
use crate::srmu::{measurement_update, UpdateDiagnostics};

/// How the belief is carried between measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Propagator {
    /// LSKF factor ODE. The interval is split into `pieces` equal parts, each
    /// integrated by `solver` (for fixed kinds `solver.steps` is per piece).
    Lskf {
        variant: LskfVariant,
        solver: SolverSpec,
        pieces: usize,
    },
    Cdckf(CdckfVariant),
}

impl Propagator {
    pub fn predict(
        &self,
        belief: &GaussianBelief,
        model: &SdeModel,
        t1: f64,
    ) -> Result<(GaussianBelief, SolverStats)> {
        match self {
            Propagator::Lskf {
                variant,
                solver,
                pieces,
            } => {
                if *pieces == 0 {
                    return Err(Error::InvalidArgument("pieces must be >= 1".into()));
                }
                let t0 = belief.time;
                let mut b = belief.clone();
                let mut stats = SolverStats::default();
                for k in 1..=*pieces {
                    let tk = if k == *pieces {
                        t1
                    } else {
                        t0 + (t1 - t0) * k as f64 / *pieces as f64
                    };
                    let (next, s) = lskf_time_update_with_stats(&b, model, *variant, tk, solver)?;
                    b = next;
                    stats += s;
                }
                Ok((b, stats))
            }
            Propagator::Cdckf(v) => {
                let b = cdckf_time_update(belief, model, v, t1)?;
                let evals = v.m * 2 * belief.dim();
                Ok((
                    b,
                    SolverStats {
                        rhs_evals: evals,
                        accepted_steps: v.m,
                        rejected_steps: 0,
                    },
                ))
            }
        }
    }
}

/// A continuous-discrete filter bound to one model pair.
#[derive(Debug, Clone)]
pub struct ContinuousDiscreteFilter {
    pub model: SdeModel,
    pub measurement: MeasurementModel,
    pub propagator: Propagator,
    belief: GaussianBelief,
    stats: SolverStats,
}

impl ContinuousDiscreteFilter {
    pub fn new(
        model: SdeModel,
        measurement: MeasurementModel,
        propagator: Propagator,
        initial: GaussianBelief,
    ) -> Result<Self> {
        if model.dim() != initial.dim() {
            return Err(Error::DimensionMismatch(format!(
                "model dimension {} vs belief dimension {}",
                model.dim(),
                initial.dim()
            )));
        }
        Ok(Self {
            model,
            measurement,
            propagator,
            belief: initial,
            stats: SolverStats::default(),
        })
    }

    pub fn belief(&self) -> &GaussianBelief {
        &self.belief
    }

    pub fn set_belief(&mut self, belief: GaussianBelief) -> Result<()> {
        if belief.dim() != self.model.dim() {
            return Err(Error::DimensionMismatch("belief dimension".into()));
        }
        self.belief = belief;
        Ok(())
    }

    /// Cumulative propagation statistics.
    pub fn stats(&self) -> SolverStats {
        self.stats
    }

    pub fn predict(&mut self, t1: f64) -> Result<&GaussianBelief> {
        let (b, s) = self.propagator.predict(&self.belief, &self.model, t1)?;
        if !b.is_finite() {
            return Err(Error::NonFinite("predicted belief"));
        }
        self.belief = b;
        self.stats += s;
        Ok(&self.belief)
    }

    pub fn update(&mut self, y: &DVector<f64>) -> Result<UpdateDiagnostics> {
        let (b, diag) = measurement_update(&self.belief, &self.measurement, y)?;
        self.belief = b;
        Ok(diag)
    }

    /// Predicts to `t` and then assimilates `y`.
    pub fn step(&mut self, t: f64, y: &DVector<f64>) -> Result<UpdateDiagnostics> {
        self.predict(t)?;
        self.update(y)
    }
}
