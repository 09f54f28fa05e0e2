//! Square-root cubature measurement update.
//!
//! The joint triangularization
//!
//! ```text
//! tria [ Y_c  √R ]  =  [ T₁₁   0  ]
//!      [ X_c   0 ]     [ T₂₁  T₂₂ ]
//! ```
//!
//! gives the innovation factor `T₁₁`, the cross term `T₂₁` and the posterior
//! factor `T₂₂`. The gain solves `W T₁₁ = T₂₁`. Only `√R` needs full rank, so
//! rank-deficient prior factors are accepted.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{cubature_points, solve_right_lower, tria};
use crate::model::{wrap_angle, GaussianBelief, MeasurementModel};

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateDiagnostics {
    pub predicted_measurement: DVector<f64>,
    pub innovation: DVector<f64>,
    pub gain: DMatrix<f64>,
}

pub fn measurement_update(
    belief: &GaussianBelief,
    mm: &MeasurementModel,
    y: &DVector<f64>,
) -> Result<(GaussianBelief, UpdateDiagnostics)> {
    let d = belief.dim();
    let p = mm.meas_dim();
    if y.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "measurement of length {} for a {p}-dimensional model",
            y.len()
        )));
    }
    let n = 2 * d;
    let weight = 1.0 / (n as f64).sqrt();
    let pts = cubature_points(&belief.mean, &belief.factor);

    let mut ys = DMatrix::<f64>::zeros(p, n);
    for (i, x) in pts.column_iter().enumerate() {
        let yi = mm.measure(&x.clone_owned());
        if yi.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "h returned {} components, expected {p}",
                yi.len()
            )));
        }
        ys.set_column(i, &yi);
    }

    // Angular channels are averaged relative to the first point so a spread
    // straddling ±π does not collapse to the wrong side.
    let wrap = mm.residual_wrap();
    let mut y_pred = DVector::<f64>::zeros(p);
    for r in 0..p {
        if wrap[r] {
            let anchor = ys[(r, 0)];
            let offset: f64 =
                (0..n).map(|c| wrap_angle(ys[(r, c)] - anchor)).sum::<f64>() / n as f64;
            y_pred[r] = wrap_angle(anchor + offset);
        } else {
            y_pred[r] = ys.row(r).sum() / n as f64;
        }
    }

    let mut stacked = DMatrix::<f64>::zeros(p + d, n + p);
    for c in 0..n {
        for r in 0..p {
            let mut dev = ys[(r, c)] - y_pred[r];
            if wrap[r] {
                dev = wrap_angle(dev);
            }
            stacked[(r, c)] = weight * dev;
        }
        for r in 0..d {
            stacked[(p + r, c)] = weight * (pts[(r, c)] - belief.mean[r]);
        }
    }
    stacked
        .view_mut((0, n), (p, p))
        .copy_from(mm.noise_factor());

    let l = tria(&stacked)?;
    let t11 = l.view((0, 0), (p, p)).clone_owned();
    let t21 = l.view((p, 0), (d, p)).clone_owned();
    let t22 = l.view((p, p), (d, d)).clone_owned();

    let scale = t11.amax().max(mm.noise_factor().amax());
    if (0..p).any(|i| !(t11[(i, i)] > 1e-14 * scale)) {
        return Err(Error::DegenerateInnovationCovariance);
    }
    let gain = solve_right_lower(&t11, &t21);

    let mut innovation = y - &y_pred;
    mm.wrap_residual(&mut innovation);
    let mean = &belief.mean + &gain * &innovation;
    if !(mean.iter().chain(t22.iter()).all(|v| v.is_finite())) {
        return Err(Error::NonFinite("measurement update"));
    }
    Ok((
        GaussianBelief {
            mean,
            factor: t22,
            time: belief.time,
        },
        UpdateDiagnostics {
            predicted_measurement: y_pred,
            innovation,
            gain,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{is_lower_triangular, outer_square};
    use nalgebra::dmatrix;

    fn identity_model(d: usize, r: f64) -> MeasurementModel {
        MeasurementModel::new(d, |x| x.clone(), DMatrix::identity(d, d) * r).unwrap()
    }

    #[test]
    fn uninformative_measurement_leaves_prior() {
        let b = GaussianBelief::new(
            DVector::from_vec(vec![1.0, 2.0]),
            dmatrix![1.0, 0.0; 0.3, 0.8],
            0.0,
        )
        .unwrap();
        let y = DVector::from_vec(vec![4.0, -1.0]);
        let (post, _) = measurement_update(&b, &identity_model(2, 1e6), &y).unwrap();
        assert!((&post.mean - &b.mean).norm() <= 1e-6 * (&y - &b.mean).norm());
        assert!((post.covariance() - b.covariance()).amax() < 1e-9);
    }

    #[test]
    fn zero_innovation_keeps_mean_and_contracts() {
        let b = GaussianBelief::new(
            DVector::from_vec(vec![1.0, 2.0]),
            dmatrix![1.0, 0.0; 0.3, 0.8],
            0.0,
        )
        .unwrap();
        let (post, diag) =
            measurement_update(&b, &identity_model(2, 0.5), &b.mean.clone()).unwrap();
        assert!((&post.mean - &b.mean).amax() < 1e-15);
        assert!(diag.innovation.amax() < 1e-15);
        let shrink = b.covariance() - post.covariance();
        assert!(crate::linalg::min_eigenvalue(&shrink) > 0.0);
        assert!(is_lower_triangular(&post.factor));
        assert!(post.factor.diagonal().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn degenerate_innovation() {
        let b = GaussianBelief::new(DVector::zeros(2), DMatrix::zeros(2, 2), 0.0).unwrap();
        let mm = MeasurementModel::new(1, |x| DVector::from_vec(vec![x[0]]), DMatrix::zeros(1, 1))
            .unwrap();
        assert_eq!(
            measurement_update(&b, &mm, &DVector::from_vec(vec![1.0])).unwrap_err(),
            Error::DegenerateInnovationCovariance
        );
    }

    #[test]
    fn angle_residual_wraps() {
        use std::f64::consts::PI;
        let mm = MeasurementModel::new(
            1,
            |x| DVector::from_vec(vec![x[0]]),
            DMatrix::identity(1, 1) * 0.1,
        )
        .unwrap()
        .with_residual_wrap(vec![true])
        .unwrap();
        let b = GaussianBelief::new(
            DVector::from_vec(vec![PI - 0.01]),
            DMatrix::identity(1, 1) * 0.01,
            0.0,
        )
        .unwrap();
        let y = DVector::from_vec(vec![-PI + 0.01]);
        let (post, diag) = measurement_update(&b, &mm, &y).unwrap();
        assert!((diag.innovation[0] - 0.02).abs() < 1e-12);
        assert!(post.mean[0] > PI - 0.01);
    }

    #[test]
    fn posterior_factor_matches_joint_covariance() {
        let b = GaussianBelief::new(
            DVector::from_vec(vec![0.5, -0.2]),
            dmatrix![2.0, 0.0; -0.4, 1.1],
            0.0,
        )
        .unwrap();
        let mm = MeasurementModel::new(
            1,
            |x| DVector::from_vec(vec![x[0] + 2.0 * x[1]]),
            dmatrix![0.3],
        )
        .unwrap();
        let (post, diag) = measurement_update(&b, &mm, &DVector::from_vec(vec![1.0])).unwrap();
        let h = dmatrix![1.0, 2.0];
        let s = b.covariance();
        let pyy = &h * &s * h.transpose() + dmatrix![0.09];
        let k = &s * h.transpose() / pyy[(0, 0)];
        assert!((&diag.gain - &k).amax() < 1e-13);
        let expect = &s - &k * &h * &s;
        assert!((outer_square(&post.factor) - expect).amax() < 1e-13);
    }
}
