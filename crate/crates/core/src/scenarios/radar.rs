//! Aircraft in a coordinated turn, observed by a single range/azimuth/elevation radar.
//!
//! State: `[ε, ε̇, η, η̇, ζ, ζ̇, ω]` (m, m/s, rad/s).

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MeasurementModel, SdeModel};

pub const STATE_DIM: usize = 7;
pub const MEAS_DIM: usize = 3;

/// Truth-simulation substeps per measurement interval.
pub const TRUTH_SUBSTEPS: usize = 1000;

/// Integrator for the simulated truth between measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruthScheme {
    /// `x += v(x)·δ + √K·√δ·ξ`.
    EulerMaruyama,
    /// Classical RK4 drift step followed by the same additive increment.
    #[default]
    AdditiveRk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarScenario {
    /// Initial turn rate, rad/s.
    pub omega0: f64,
    /// Measurement interval, s.
    pub interval: f64,
    pub horizon: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub station: [f64; 3],
    pub sigma_r: f64,
    /// rad
    pub sigma_theta: f64,
    /// rad
    pub sigma_phi: f64,
    pub initial_state: [f64; STATE_DIM],
    pub initial_cov_diag: [f64; STATE_DIM],
    pub truth_substeps: usize,
    pub truth_scheme: TruthScheme,
}

impl RadarScenario {
    /// Scenario with the standard parameters; angles given in degrees.
    pub fn new(omega0_deg: f64, interval_s: f64) -> Result<Self> {
        let omega0 = omega0_deg.to_radians();
        let s = Self {
            omega0,
            interval: interval_s,
            horizon: 120.0,
            sigma1: 0.2f64.sqrt(),
            sigma2: 7e-4,
            station: [1500.0, 10.0, 0.0],
            sigma_r: 50.0,
            sigma_theta: 0.1f64.to_radians(),
            sigma_phi: 0.1f64.to_radians(),
            initial_state: [1000.0, 0.0, 2650.0, 150.0, 200.0, 0.0, omega0],
            initial_cov_diag: [100.0, 1.0, 100.0, 1.0, 100.0, 1.0, 0.01],
            truth_substeps: TRUTH_SUBSTEPS,
            truth_scheme: TruthScheme::default(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.interval > 0.0 && self.horizon >= self.interval) {
            return Err(Error::InvalidArgument(format!(
                "measurement interval {} must be positive and within the horizon {}",
                self.interval, self.horizon
            )));
        }
        if !(self.sigma_r > 0.0 && self.sigma_theta > 0.0 && self.sigma_phi > 0.0) {
            return Err(Error::InvalidArgument(
                "measurement noise scales must be positive".into(),
            ));
        }
        if !(self.sigma1 >= 0.0 && self.sigma2 >= 0.0) || self.truth_substeps == 0 {
            return Err(Error::InvalidArgument(
                "invalid process noise or substep count".into(),
            ));
        }
        Ok(())
    }

    /// Number of measurements, `⌊horizon / T⌋`.
    pub fn measurement_count(&self) -> usize {
        ((self.horizon / self.interval) + 1e-9).floor() as usize
    }

    pub fn measurement_times(&self) -> Vec<f64> {
        (1..=self.measurement_count())
            .map(|k| k as f64 * self.interval)
            .collect()
    }

    pub fn diffusion_factor(&self) -> DMatrix<f64> {
        let s1 = self.sigma1;
        DMatrix::from_diagonal(&DVector::from_vec(vec![
            0.0,
            s1,
            0.0,
            s1,
            0.0,
            s1,
            self.sigma2,
        ]))
    }

    pub fn noise_factor(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![
            self.sigma_r,
            self.sigma_theta,
            self.sigma_phi,
        ]))
    }

    pub fn initial_covariance(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_row_slice(&self.initial_cov_diag))
    }

    pub fn initial_state(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.initial_state)
    }

    pub fn sde_model(&self) -> SdeModel {
        SdeModel::new(
            STATE_DIM,
            |x, _t| coordinated_turn_drift(x),
            self.diffusion_factor(),
        )
        .expect("7x7 diffusion factor")
        .with_jacobian(|x, _t| coordinated_turn_jacobian(x))
        .with_hessians(|_x, _t| coordinated_turn_hessians())
    }

    pub fn measurement_model(&self) -> MeasurementModel {
        let s = self.station;
        MeasurementModel::new(
            MEAS_DIM,
            move |x| radar_measure_unchecked(x, &s),
            self.noise_factor(),
        )
        .expect("3x3 noise factor")
        .with_residual_wrap(vec![false, true, true])
        .expect("three wrap flags")
    }
}

pub fn coordinated_turn_drift(x: &DVector<f64>) -> DVector<f64> {
    let w = x[6];
    DVector::from_vec(vec![x[1], -w * x[3], x[3], w * x[1], x[5], 0.0, 0.0])
}

pub fn coordinated_turn_jacobian(x: &DVector<f64>) -> DMatrix<f64> {
    let w = x[6];
    let mut j = DMatrix::<f64>::zeros(STATE_DIM, STATE_DIM);
    j[(0, 1)] = 1.0;
    j[(1, 3)] = -w;
    j[(1, 6)] = -x[3];
    j[(2, 3)] = 1.0;
    j[(3, 1)] = w;
    j[(3, 6)] = x[1];
    j[(4, 5)] = 1.0;
    j
}

/// Only the ω–velocity cross terms are nonzero.
pub fn coordinated_turn_hessians() -> Vec<DMatrix<f64>> {
    let mut hs = vec![DMatrix::<f64>::zeros(STATE_DIM, STATE_DIM); STATE_DIM];
    hs[1][(3, 6)] = -1.0;
    hs[1][(6, 3)] = -1.0;
    hs[3][(1, 6)] = 1.0;
    hs[3][(6, 1)] = 1.0;
    hs
}

/// Range, azimuth and elevation of the target relative to the station at `s`.
pub fn radar_measure(x: &DVector<f64>, s: &[f64; 3]) -> Result<(f64, f64, f64)> {
    let (dx, dy) = (x[0] - s[0], x[2] - s[1]);
    if dx.hypot(dy) == 0.0 {
        return Err(Error::AtStationSingularity);
    }
    let y = radar_measure_unchecked(x, s);
    Ok((y[0], y[1], y[2]))
}

fn radar_measure_unchecked(x: &DVector<f64>, s: &[f64; 3]) -> DVector<f64> {
    let (dx, dy, dz) = (x[0] - s[0], x[2] - s[1], x[4] - s[2]);
    let rho = dx.hypot(dy);
    DVector::from_vec(vec![
        (dx * dx + dy * dy + dz * dz).sqrt(),
        dy.atan2(dx),
        dz.atan2(rho),
    ])
}

/// Simulated truth and noisy measurements at `k·T`, `k = 1..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial_state: DVector<f64>,
    pub times: Vec<f64>,
    pub truth_states: Vec<DVector<f64>>,
    pub measurements: Vec<DVector<f64>>,
}

/// Simulates the truth from the scenario's initial state. Deterministic in `seed`.
///
/// Brownian increments are drawn on a base grid of [`TRUTH_SUBSTEPS`] per
/// interval (stream 0). When `truth_substeps` is a multiple of the base grid,
/// each base increment is split by a Brownian bridge drawn from stream 2, so
/// refining the substep refines the same sample path.
pub fn simulate_truth(scenario: &RadarScenario, seed: u64) -> Result<Trajectory> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bridge_rng = ChaCha8Rng::seed_from_u64(seed);
    bridge_rng.set_stream(2);
    let sqrt_k = scenario.diffusion_factor();
    let sqrt_r = scenario.noise_factor();
    let times = scenario.measurement_times();
    let substeps = scenario.truth_substeps;
    let (base, split) = if substeps.is_multiple_of(TRUTH_SUBSTEPS) {
        (TRUTH_SUBSTEPS, substeps / TRUTH_SUBSTEPS)
    } else {
        (substeps, 1)
    };
    let delta = scenario.interval / substeps as f64;
    let base_sqrt_delta = (scenario.interval / base as f64).sqrt();

    let mut x = scenario.initial_state();
    // Kahan compensation for the state update
    let mut carry = DVector::<f64>::zeros(STATE_DIM);
    let mut truth_states = Vec::with_capacity(times.len());
    let mut measurements = Vec::with_capacity(times.len());
    let mut pieces = vec![DVector::<f64>::zeros(STATE_DIM); split];
    for _ in &times {
        for _ in 0..base {
            let dw = DVector::<f64>::from_fn(STATE_DIM, |_, _| StandardNormal.sample(&mut rng))
                * base_sqrt_delta;
            if split == 1 {
                pieces[0] = dw;
            } else {
                let sd = delta.sqrt();
                for p in pieces.iter_mut() {
                    *p = DVector::from_fn(STATE_DIM, |_, _| StandardNormal.sample(&mut bridge_rng))
                        * sd;
                }
                let shift = (dw - pieces.iter().sum::<DVector<f64>>()) / split as f64;
                for p in pieces.iter_mut() {
                    *p += &shift;
                }
            }
            for w in &pieces {
                let drift_step = match scenario.truth_scheme {
                    TruthScheme::EulerMaruyama => coordinated_turn_drift(&x) * delta,
                    TruthScheme::AdditiveRk4 => rk4_increment(&x, delta),
                };
                let inc = drift_step + &sqrt_k * w - &carry;
                let next = &x + &inc;
                carry = (&next - &x) - inc;
                x = next;
            }
        }
        let tau = DVector::<f64>::from_fn(MEAS_DIM, |_, _| StandardNormal.sample(&mut rng));
        measurements.push(radar_measure_unchecked(&x, &scenario.station) + &sqrt_r * tau);
        truth_states.push(x.clone());
    }
    Ok(Trajectory {
        initial_state: scenario.initial_state(),
        times,
        truth_states,
        measurements,
    })
}

fn rk4_increment(x: &DVector<f64>, h: f64) -> DVector<f64> {
    let k1 = coordinated_turn_drift(x);
    let k2 = coordinated_turn_drift(&(x + &k1 * (0.5 * h)));
    let k3 = coordinated_turn_drift(&(x + &k2 * (0.5 * h)));
    let k4 = coordinated_turn_drift(&(x + &k3 * h));
    (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn drift_reads_off_formula() {
        let x = DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(
            coordinated_turn_drift(&x),
            DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
        );
        let x = DVector::from_vec(vec![0.0, 2.0, 0.0, 3.0, 0.0, 0.0, 1.0]);
        let v = coordinated_turn_drift(&x);
        assert_eq!((v[1], v[3]), (-3.0, 2.0));
    }

    #[test]
    fn measurement_examples() {
        let s = [1500.0, 10.0, 0.0];
        let at = |e: f64, n: f64, z: f64| DVector::from_vec(vec![e, 0.0, n, 0.0, z, 0.0, 0.0]);
        let (r, th, ph) = radar_measure(&at(1600.0, 10.0, 0.0), &s).unwrap();
        assert_eq!((r, th, ph), (100.0, 0.0, 0.0));
        let (r, th, ph) = radar_measure(&at(1500.0, 110.0, 0.0), &s).unwrap();
        assert!((r - 100.0).abs() < 1e-12 && (th - FRAC_PI_2).abs() < 1e-15 && ph == 0.0);
        let (r, th, ph) = radar_measure(&at(1600.0, 10.0, 100.0), &s).unwrap();
        assert!((r - 100.0 * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(th, 0.0);
        assert!((ph - FRAC_PI_4).abs() < 1e-15);
        assert_eq!(
            radar_measure(&at(1500.0, 10.0, 50.0), &s).unwrap_err(),
            Error::AtStationSingularity
        );
    }

    #[test]
    fn unit_conversions_happen_at_construction() {
        let s = RadarScenario::new(6.0, 2.0).unwrap();
        assert!((s.omega0 - 6.0f64.to_radians()).abs() < 1e-16);
        assert!((s.sigma_theta - 0.1f64.to_radians()).abs() < 1e-18);
        assert_eq!(s.initial_state[6], s.omega0);
        assert_eq!(s.measurement_count(), 60);
        assert_eq!(
            RadarScenario::new(6.0, 7.0).unwrap().measurement_count(),
            17
        );
        assert!(RadarScenario::new(6.0, 0.0).is_err());
    }

    #[test]
    fn same_seed_same_trajectory() {
        let s = RadarScenario::new(12.0, 6.0).unwrap();
        let a = simulate_truth(&s, 7).unwrap();
        let b = simulate_truth(&s, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, simulate_truth(&s, 8).unwrap());
    }
}
