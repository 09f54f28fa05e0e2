//! Linear-drift test problems with exact Gaussian solutions.

use nalgebra::{dmatrix, DMatrix, DVector};

use crate::error::Result;
use crate::model::{GaussianBelief, LinearSystem, SdeModel};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearScenario {
    pub name: &'static str,
    pub system: LinearSystem,
    pub mean0: DVector<f64>,
    pub cov0: DMatrix<f64>,
    pub horizon: f64,
}

impl LinearScenario {
    pub fn model(&self) -> Result<SdeModel> {
        self.system.to_sde_model()
    }

    pub fn initial_belief(&self) -> Result<GaussianBelief> {
        GaussianBelief::from_covariance(self.mean0.clone(), &self.cov0, 0.0)
    }
}

/// Diffusion matrix as printed for the two-dimensional linear example.
pub fn linear_fp_pde_diffusion() -> DMatrix<f64> {
    dmatrix![0.5, 0.25; 0.25, 1.5]
}

/// Two-dimensional linear Fokker-Planck problem, `t ∈ [0, 10]`.
///
/// That example's PDE carries `∇·K∇u` without the factor ½, so the
/// process noise handed to the filter is `2·K`.
pub fn linear_fp_scenario() -> LinearScenario {
    LinearScenario {
        name: "linear-fp",
        system: LinearSystem {
            jacobian: dmatrix![0.0, 0.1; 0.0, 0.0],
            process_noise: linear_fp_pde_diffusion() * 2.0,
        },
        mean0: DVector::zeros(2),
        cov0: dmatrix![2.0, 1.0; 1.0, 2.0],
        horizon: 10.0,
    }
}

/// Noisy harmonic oscillator `[ε, ε̇, ε̈]`, `t ∈ [0, 0.2]`.
pub fn oscillator_scenario() -> LinearScenario {
    LinearScenario {
        name: "oscillator",
        system: LinearSystem {
            jacobian: dmatrix![0.0, 1.0, 0.0; 0.0, 0.0, 1.0; -1.0, 0.0, 0.0],
            process_noise: DMatrix::from_diagonal(&DVector::from_vec(vec![
                0.01f64.powi(2),
                0.01f64.powi(2),
                0.02f64.powi(2),
            ])),
        },
        mean0: DVector::from_vec(vec![1.0, 0.0, 0.0]),
        cov0: DMatrix::from_diagonal(&DVector::from_vec(vec![
            0.01f64.powi(2),
            0.01f64.powi(2),
            0.03f64.powi(2),
        ])),
        horizon: 0.2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oscillator_drift() {
        let s = oscillator_scenario();
        let model = s.model().unwrap();
        let v = model.drift(&DVector::from_vec(vec![1.0, 2.0, 3.0]), 0.0);
        assert_eq!(v, DVector::from_vec(vec![2.0, 3.0, -1.0]));
        assert!((model.process_noise() - &s.system.process_noise).amax() < 1e-18);
    }

    #[test]
    fn linear_fp_uses_doubled_diffusion() {
        let s = linear_fp_scenario();
        assert_eq!(s.system.process_noise, dmatrix![1.0, 0.5; 0.5, 3.0]);
    }
}
