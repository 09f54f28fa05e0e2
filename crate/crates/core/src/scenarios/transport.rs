//! Pure transport by the shear field `v(x, y) = (0, x²)`.
//!
//! Characteristics keep `x` fixed and move `y` to `y₀ + x²t`. The map has unit
//! Jacobian, so the exact density at time `t` is
//! `u(x, y, t) = u₀(x, y − x²t)` and is not Gaussian for `t > 0`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::outer_square;
use crate::model::{GaussianBelief, SdeModel};

#[derive(Debug, Clone)]
pub struct TransportScenario {
    pub a: f64,
    pub b: f64,
    pub model: SdeModel,
}

pub fn transport_scenario(a: f64, b: f64) -> Result<TransportScenario> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::InvalidArgument(
            "transport scales a, b must be positive".into(),
        ));
    }
    let model = SdeModel::new(
        2,
        |x, _t| DVector::from_vec(vec![0.0, x[0] * x[0]]),
        DMatrix::zeros(2, 2),
    )?;
    Ok(TransportScenario { a, b, model })
}

/// Uniform grid over a rectangle, used for L² comparisons.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    fn cell_area(&self) -> f64 {
        (self.x.1 - self.x.0) / (self.nx - 1) as f64 * (self.y.1 - self.y.0) / (self.ny - 1) as f64
    }

    fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let dx = (self.x.1 - self.x.0) / (self.nx - 1) as f64;
        let dy = (self.y.1 - self.y.0) / (self.ny - 1) as f64;
        (0..self.nx).flat_map(move |i| {
            (0..self.ny).map(move |j| (self.x.0 + i as f64 * dx, self.y.0 + j as f64 * dy))
        })
    }
}

impl TransportScenario {
    pub fn initial_covariance(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![self.a * self.a, self.b * self.b]))
    }

    /// Position at time `t` of the point starting at `(x, y)`.
    pub fn characteristic(&self, x: f64, y: f64, t: f64) -> (f64, f64) {
        (x, y + x * x * t)
    }

    pub fn exact_density(&self, x: f64, y: f64, t: f64) -> f64 {
        let y0 = y - x * x * t;
        let q = (x / self.a).powi(2) + (y0 / self.b).powi(2);
        (-0.5 * q).exp() / (2.0 * PI * self.a * self.b)
    }

    /// Default comparison grid for time `t`: covers the sheared mass and the
    /// Gaussians the filter variants produce.
    pub fn grid(&self, t: f64, n: usize) -> Grid {
        let (a, b) = (self.a, self.b);
        Grid {
            x: (-6.0 * a, 6.0 * a),
            y: (-6.0 * b - 6.0 * a * a * t, 6.0 * b + 16.0 * a * a * t),
            nx: n,
            ny: n,
        }
    }

    /// L² distance between the Gaussian `belief` and the exact density at `t`.
    pub fn l2_error(&self, belief: &GaussianBelief, t: f64, grid: &Grid) -> Result<f64> {
        let gauss = Gaussian2::new(&belief.mean, &outer_square(&belief.factor))?;
        let sum: f64 = grid
            .points()
            .map(|(x, y)| {
                let e = gauss.density(x, y) - self.exact_density(x, y, t);
                e * e
            })
            .sum();
        Ok((sum * grid.cell_area()).sqrt())
    }
}

struct Gaussian2 {
    mean: (f64, f64),
    inv: [[f64; 2]; 2],
    norm: f64,
}

impl Gaussian2 {
    fn new(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
        if !(det > 0.0) {
            return Err(Error::NotPositiveSemiDefinite {
                pivot: det,
                index: 1,
            });
        }
        Ok(Self {
            mean: (mean[0], mean[1]),
            inv: [
                [cov[(1, 1)] / det, -cov[(0, 1)] / det],
                [-cov[(1, 0)] / det, cov[(0, 0)] / det],
            ],
            norm: 1.0 / (2.0 * PI * det.sqrt()),
        })
    }

    fn density(&self, x: f64, y: f64) -> f64 {
        let (u, v) = (x - self.mean.0, y - self.mean.1);
        let q = u * (self.inv[0][0] * u + self.inv[0][1] * v)
            + v * (self.inv[1][0] * u + self.inv[1][1] * v);
        self.norm * (-0.5 * q).exp()
    }
}
