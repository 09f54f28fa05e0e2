//! Monte-Carlo radar benchmark and convergence studies.
//!
//! Every trial is a pure function of `(config, cell, trial_index)`: the truth
//! and the initial guess are drawn from RNG streams seeded with
//! `config.seed + trial_index`, so results do not depend on scheduling and all
//! filters see identical inputs.

mod convergence;
mod transport_study;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use convergence::{
    convergence_study, oracle, propagate, ConvMethod, ConvergenceProblem, ConvergenceRow,
    ORACLE_TOL,
};
pub use transport_study::{
    random_orthogonal_2x2, transport_study, TransportStudyConfig, TransportSummary,
};

use crate::cdckf::{CdckfMode, CdckfVariant};
use crate::error::{Error, Result};
use crate::filter::{ContinuousDiscreteFilter, Propagator};
use crate::linalg::cholesky_lower;
use crate::lskf::LskfVariant;
use crate::model::GaussianBelief;
use crate::odesolve::{SolverKind, SolverSpec};
use crate::scenarios::{simulate_truth, RadarScenario, TruthScheme, STATE_DIM, TRUTH_SUBSTEPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterId {
    LskfRk2,
    LskfRk4,
    LskfAdaptive,
    /// CD-CKF as in the reference implementation.
    Cdckf,
    /// CD-CKF with noise discretized at every substep.
    CdckfProper,
}

impl FilterId {
    pub const ALL: [FilterId; 5] = [
        FilterId::LskfRk2,
        FilterId::LskfRk4,
        FilterId::LskfAdaptive,
        FilterId::Cdckf,
        FilterId::CdckfProper,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FilterId::LskfRk2 => "lskf-rk2",
            FilterId::LskfRk4 => "lskf-rk4",
            FilterId::LskfAdaptive => "lskf-adaptive",
            FilterId::Cdckf => "cdckf",
            FilterId::CdckfProper => "cdckf-proper",
        }
    }

    pub fn is_lskf(self) -> bool {
        matches!(
            self,
            FilterId::LskfRk2 | FilterId::LskfRk4 | FilterId::LskfAdaptive
        )
    }
}

impl fmt::Display for FilterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FilterId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FilterId::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown filter '{s}'")))
    }
}

/// Radar benchmark configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub omega_deg: Vec<f64>,
    pub interval_s: Vec<f64>,
    pub m: Vec<usize>,
    pub filters: Vec<FilterId>,
    pub variant: LskfVariant,
    pub trials: usize,
    pub seed: u64,
    pub tol_abs: f64,
    pub tol_rel: f64,
    /// Position-error norm (m) above which a trial is declared divergent.
    pub divergence_threshold: f64,
    pub sigma2: f64,
    pub horizon_s: f64,
    pub truth_substeps: usize,
    pub truth_scheme: TruthScheme,
    /// Worker threads; 0 uses all cores. Does not affect results.
    pub jobs: usize,
    /// Record wall-clock time per trial. Off by default so output files are
    /// reproducible byte for byte.
    pub record_timing: bool,
}

pub const DEFAULT_SEED: u64 = 20_210_001;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DIVERGENCE_THRESHOLD_M: f64 = 500.0;

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            omega_deg: vec![6.0, 12.0, 24.0],
            interval_s: (1..=7).map(f64::from).collect(),
            m: vec![1, 2, 4, 8, 16, 32, 64],
            filters: vec![FilterId::LskfAdaptive, FilterId::LskfRk4, FilterId::Cdckf],
            variant: LskfVariant::Averaged,
            trials: 100,
            seed: DEFAULT_SEED,
            tol_abs: DEFAULT_TOL,
            tol_rel: DEFAULT_TOL,
            divergence_threshold: DIVERGENCE_THRESHOLD_M,
            sigma2: 7e-4,
            horizon_s: 120.0,
            truth_substeps: TRUTH_SUBSTEPS,
            truth_scheme: TruthScheme::default(),
            jobs: 0,
            record_timing: false,
        }
    }
}

/// One (filter, ω₀, T, m) combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub filter: FilterId,
    pub omega_deg: f64,
    pub interval_s: f64,
    pub m: usize,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(Error::Config(
                "divergence threshold must be positive".into(),
            ));
        }
        if !(self.tol_abs > 0.0 && self.tol_rel > 0.0) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        if self.m.contains(&0) {
            return Err(Error::Config("subdivision counts must be >= 1".into()));
        }
        if self.omega_deg.is_empty()
            || self.interval_s.is_empty()
            || self.m.is_empty()
            || self.filters.is_empty()
        {
            return Err(Error::Config("empty parameter list".into()));
        }
        for &t in &self.interval_s {
            self.scenario(self.omega_deg[0], t)
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &filter in &self.filters {
            for &omega_deg in &self.omega_deg {
                for &interval_s in &self.interval_s {
                    for &m in &self.m {
                        out.push(Cell {
                            filter,
                            omega_deg,
                            interval_s,
                            m,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn scenario(&self, omega_deg: f64, interval_s: f64) -> Result<RadarScenario> {
        let mut s = RadarScenario::new(omega_deg, interval_s)?;
        s.sigma2 = self.sigma2;
        s.horizon = self.horizon_s;
        s.truth_substeps = self.truth_substeps;
        s.truth_scheme = self.truth_scheme;
        s.validate()?;
        Ok(s)
    }

    pub fn adaptive_spec(&self) -> SolverSpec {
        SolverSpec::adaptive(self.tol_abs, self.tol_rel)
    }

    pub fn propagator(&self, filter: FilterId, m: usize) -> Propagator {
        match filter {
            FilterId::LskfRk2 => Propagator::Lskf {
                variant: self.variant,
                solver: SolverSpec::fixed(SolverKind::FixedRk2, m),
                pieces: 1,
            },
            FilterId::LskfRk4 => Propagator::Lskf {
                variant: self.variant,
                solver: SolverSpec::fixed(SolverKind::FixedRk4, m),
                pieces: 1,
            },
            FilterId::LskfAdaptive => Propagator::Lskf {
                variant: self.variant,
                solver: self.adaptive_spec(),
                pieces: m,
            },
            FilterId::Cdckf => Propagator::Cdckf(CdckfVariant::new(CdckfMode::IntervalNoise, m)),
            FilterId::CdckfProper => Propagator::Cdckf(CdckfVariant::new(CdckfMode::ProperIt15, m)),
        }
    }

    pub fn variant_label(&self, filter: FilterId) -> String {
        match filter {
            FilterId::Cdckf => CdckfMode::IntervalNoise.to_string(),
            FilterId::CdckfProper => CdckfMode::ProperIt15.to_string(),
            _ => self.variant.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Position,
    Velocity,
    TurnRate,
}

/// Outcome of one filtering run over a simulated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub trial_index: usize,
    pub seed: u64,
    pub divergent: bool,
    /// Why the trial stopped early, if it did.
    pub failure: Option<String>,
    /// Squared errors of the post-update estimate at each processed measurement.
    pub sq_err_position: Vec<f64>,
    pub sq_err_velocity: Vec<f64>,
    pub sq_err_turn_rate: Vec<f64>,
    pub final_estimate: Vec<f64>,
    pub rhs_evals: usize,
    pub wall_time_s: f64,
}

impl TrialMetrics {
    pub fn squared_errors(&self, q: Quantity) -> &[f64] {
        match q {
            Quantity::Position => &self.sq_err_position,
            Quantity::Velocity => &self.sq_err_velocity,
            Quantity::TurnRate => &self.sq_err_turn_rate,
        }
    }
}

/// Initial filter mean drawn from `N(x₀, Σ₀)` on stream 1 of the trial seed;
/// the truth uses stream 0.
pub fn initial_guess(scenario: &RadarScenario, seed: u64) -> Result<GaussianBelief> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let factor = cholesky_lower(&scenario.initial_covariance())?;
    let xi = DVector::<f64>::from_fn(STATE_DIM, |_, _| StandardNormal.sample(&mut rng));
    let mean = scenario.initial_state() + &factor * xi;
    GaussianBelief::new(mean, factor, 0.0)
}

pub fn run_trial(config: &BenchConfig, cell: &Cell, trial_index: usize) -> Result<TrialMetrics> {
    let scenario = config.scenario(cell.omega_deg, cell.interval_s)?;
    let seed = config.seed.wrapping_add(trial_index as u64);
    let traj = simulate_truth(&scenario, seed)?;
    let belief = initial_guess(&scenario, seed)?;
    let mut filter = ContinuousDiscreteFilter::new(
        scenario.sde_model(),
        scenario.measurement_model(),
        config.propagator(cell.filter, cell.m),
        belief,
    )?;

    let started = Instant::now();
    let k = traj.times.len();
    let mut out = TrialMetrics {
        trial_index,
        seed,
        divergent: false,
        failure: None,
        sq_err_position: Vec::with_capacity(k),
        sq_err_velocity: Vec::with_capacity(k),
        sq_err_turn_rate: Vec::with_capacity(k),
        final_estimate: Vec::new(),
        rhs_evals: 0,
        wall_time_s: 0.0,
    };
    for ((&t, truth), y) in traj
        .times
        .iter()
        .zip(&traj.truth_states)
        .zip(&traj.measurements)
    {
        if let Err(e) = filter.step(t, y) {
            out.divergent = true;
            out.failure = Some(e.to_string());
            break;
        }
        let est = &filter.belief().mean;
        let e = est - truth;
        let pos = e[0] * e[0] + e[2] * e[2] + e[4] * e[4];
        let vel = e[1] * e[1] + e[3] * e[3] + e[5] * e[5];
        let turn = e[6] * e[6];
        out.sq_err_position.push(pos);
        out.sq_err_velocity.push(vel);
        out.sq_err_turn_rate.push(turn);
        if !(pos.is_finite() && vel.is_finite() && turn.is_finite()) {
            out.divergent = true;
            out.failure = Some("non-finite estimate".into());
            break;
        }
        if pos.sqrt() > config.divergence_threshold {
            out.divergent = true;
            out.failure = Some(format!("position error {:.3} m at t = {t}", pos.sqrt()));
            break;
        }
    }
    out.final_estimate = filter.belief().mean.iter().copied().collect();
    out.rhs_evals = filter.stats().rhs_evals;
    if config.record_timing {
        out.wall_time_s = started.elapsed().as_secs_f64();
    }
    Ok(out)
}

/// Root-mean-square error over all measurements of the non-divergent trials.
pub fn rmse(metrics: &[TrialMetrics], quantity: Quantity) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for m in metrics.iter().filter(|m| !m.divergent) {
        let errs = m.squared_errors(quantity);
        sum += errs.iter().sum::<f64>();
        count += errs.len();
    }
    if count == 0 {
        return Err(Error::AllTrialsDivergent);
    }
    Ok((sum / count as f64).sqrt())
}

/// Aggregates for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub filter: FilterId,
    pub variant: String,
    pub omega_deg: f64,
    pub interval_s: f64,
    pub m: usize,
    pub trials: usize,
    pub divergent: usize,
    /// NaN when every trial diverged.
    pub rmse_pos_m: f64,
    pub rmse_vel_mps: f64,
    pub rmse_turn_radps: f64,
    pub wall_ms_per_trial: f64,
    pub rhs_evals_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<ReportRow>,
}

pub fn summarize(config: &BenchConfig, cell: &Cell, metrics: &[TrialMetrics]) -> ReportRow {
    let n = metrics.len().max(1) as f64;
    let or_nan = |r: Result<f64>| r.unwrap_or(f64::NAN);
    ReportRow {
        filter: cell.filter,
        variant: config.variant_label(cell.filter),
        omega_deg: cell.omega_deg,
        interval_s: cell.interval_s,
        m: cell.m,
        trials: metrics.len(),
        divergent: metrics.iter().filter(|m| m.divergent).count(),
        rmse_pos_m: or_nan(rmse(metrics, Quantity::Position)),
        rmse_vel_mps: or_nan(rmse(metrics, Quantity::Velocity)),
        rmse_turn_radps: or_nan(rmse(metrics, Quantity::TurnRate)),
        wall_ms_per_trial: metrics.iter().map(|m| m.wall_time_s).sum::<f64>() * 1e3 / n,
        rhs_evals_mean: metrics.iter().map(|m| m.rhs_evals as f64).sum::<f64>() / n,
    }
}

/// Runs all trials of one cell, in parallel on the current rayon pool.
pub fn run_cell(config: &BenchConfig, cell: &Cell) -> Result<Vec<TrialMetrics>> {
    (0..config.trials)
        .into_par_iter()
        .map(|i| run_trial(config, cell, i))
        .collect()
}

/// Serial reference for [`run_cell`].
pub fn run_cell_serial(config: &BenchConfig, cell: &Cell) -> Result<Vec<TrialMetrics>> {
    (0..config.trials)
        .map(|i| run_trial(config, cell, i))
        .collect()
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Sweeps every cell of `config`.
pub fn run_grid(config: &BenchConfig) -> Result<BenchReport> {
    run_grid_with(config, |_, _| {})
}

/// Like [`run_grid`], calling `on_cell` with each cell's raw trials.
pub fn run_grid_with<F>(config: &BenchConfig, mut on_cell: F) -> Result<BenchReport>
where
    F: FnMut(&Cell, &[TrialMetrics]),
{
    config.validate()?;
    let pool = thread_pool(config.jobs)?;
    let mut rows = Vec::new();
    for cell in config.cells() {
        let metrics = pool.install(|| run_cell(config, &cell))?;
        on_cell(&cell, &metrics);
        rows.push(summarize(config, &cell, &metrics));
    }
    Ok(BenchReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics(pos: Vec<f64>, divergent: bool) -> TrialMetrics {
        TrialMetrics {
            trial_index: 0,
            seed: 0,
            divergent,
            failure: None,
            sq_err_velocity: vec![0.0; pos.len()],
            sq_err_turn_rate: vec![0.0; pos.len()],
            sq_err_position: pos,
            final_estimate: vec![],
            rhs_evals: 0,
            wall_time_s: 0.0,
        }
    }

    #[test]
    fn rmse_single_measurement() {
        // error vector (3, 4, 0)
        assert_eq!(
            rmse(&[metrics(vec![25.0], false)], Quantity::Position).unwrap(),
            5.0
        );
    }

    #[test]
    fn rmse_two_trials() {
        let a = metrics(vec![1.0, 2.0, 3.0], false);
        let b = metrics(vec![4.0, 5.0, 6.0], false);
        let r = rmse(&[a, b], Quantity::Position).unwrap();
        assert!((r - ((6.0f64 + 15.0) / 6.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rmse_excludes_divergent() {
        let a = metrics(vec![4.0], false);
        let b = metrics(vec![1e12], true);
        assert_eq!(rmse(&[a, b.clone()], Quantity::Position).unwrap(), 2.0);
        assert_eq!(
            rmse(&[b], Quantity::Position).unwrap_err(),
            Error::AllTrialsDivergent
        );
    }

    #[test]
    fn filter_ids_round_trip() {
        for f in FilterId::ALL {
            assert_eq!(f.as_str().parse::<FilterId>().unwrap(), f);
        }
        assert!("ukf".parse::<FilterId>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = BenchConfig::default();
        assert!(c.validate().is_ok());
        c.trials = 0;
        assert!(c.validate().is_err());
        let c = BenchConfig {
            m: vec![0],
            ..BenchConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn cells_are_cartesian() {
        let c = BenchConfig {
            omega_deg: vec![6.0, 12.0],
            interval_s: vec![2.0],
            m: vec![1, 4, 16],
            filters: vec![FilterId::Cdckf, FilterId::LskfAdaptive],
            ..BenchConfig::default()
        };
        assert_eq!(c.cells().len(), 12);
    }
}
