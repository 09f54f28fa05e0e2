#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use cdfilter::model::{LinearSystem, SdeModel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn normal_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Random linear system with `‖J‖_F ≤ 1`, PSD `K`, and a well-conditioned
/// invertible initial factor.
pub fn random_linear(rng: &mut ChaCha8Rng, d: usize) -> (LinearSystem, DVector<f64>, DMatrix<f64>) {
    let j = normal_matrix(rng, d, d);
    let j = &j * (rng.random_range(0.1..1.0) / j.norm());
    let b = normal_matrix(rng, d, d) * 0.5;
    let k = &b * b.transpose();
    let m0 = DMatrix::identity(d, d) * 1.5 + normal_matrix(rng, d, d) * 0.3;
    let mean0 = normal_vector(rng, d);
    (LinearSystem::new(j, k).unwrap(), mean0, m0)
}

/// Model whose drift evaluations are counted.
pub fn counting_linear_model(
    j: DMatrix<f64>,
    sqrt_k: DMatrix<f64>,
) -> (SdeModel, Arc<AtomicUsize>) {
    let count = Arc::new(AtomicUsize::new(0));
    let c = count.clone();
    let d = j.nrows();
    let model = SdeModel::new(
        d,
        move |x, _t| {
            c.fetch_add(1, Ordering::SeqCst);
            &j * x
        },
        sqrt_k,
    )
    .unwrap();
    (model, count)
}

pub fn random_orthogonal(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let qr = normal_matrix(rng, d, d).qr();
    let (mut q, r) = (qr.q(), qr.r());
    for i in 0..d {
        if r[(i, i)] < 0.0 {
            q.column_mut(i).neg_mut();
        }
    }
    q
}

pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Linear-measurement instance: prior belief, `H`, `√R`, and a measurement.
pub struct KalmanCase {
    pub belief: cdfilter::GaussianBelief,
    pub h: DMatrix<f64>,
    pub sqrt_r: DMatrix<f64>,
    pub y: DVector<f64>,
}

pub fn kalman_case(rng: &mut ChaCha8Rng, rank_deficient: bool) -> KalmanCase {
    let d = rng.random_range(1..=6);
    let p = rng.random_range(1..=d.min(4));
    let mut m = normal_matrix(rng, d, d);
    if rank_deficient {
        let c = rng.random_range(0..d);
        m.column_mut(c).fill(0.0);
    }
    let mean = normal_vector(rng, d);
    let h = normal_matrix(rng, p, d);
    let sqrt_r =
        DMatrix::identity(p, p) * rng.random_range(0.1..1.0) + normal_matrix(rng, p, p) * 0.05;
    let y = &h * &mean + normal_vector(rng, p);
    KalmanCase {
        belief: cdfilter::GaussianBelief::new(mean, m, 0.0).unwrap(),
        h,
        sqrt_r,
        y,
    }
}

/// Textbook Kalman update.
pub fn kalman_update(c: &KalmanCase) -> (DVector<f64>, DMatrix<f64>) {
    let s = c.belief.covariance();
    let r = &c.sqrt_r * c.sqrt_r.transpose();
    let innov_cov = &c.h * &s * c.h.transpose() + r;
    let gain = &s * c.h.transpose() * innov_cov.try_inverse().unwrap();
    let mean = &c.belief.mean + &gain * (&c.y - &c.h * &c.belief.mean);
    let cov = &s - &gain * &c.h * &s;
    (mean, cov)
}

pub fn linear_measurement(c: &KalmanCase) -> cdfilter::MeasurementModel {
    let h = c.h.clone();
    cdfilter::MeasurementModel::new(h.nrows(), move |x| &h * x, c.sqrt_r.clone()).unwrap()
}
