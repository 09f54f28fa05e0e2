mod common;

use cdfilter::linalg::{is_lower_triangular, min_eigenvalue};
use cdfilter::srmu::measurement_update;

use common::*;

#[test]
fn matches_kalman_update() {
    let mut rng = rng(21);
    for i in 0..200 {
        let c = kalman_case(&mut rng, false);
        let (post, diag) = measurement_update(&c.belief, &linear_measurement(&c), &c.y).unwrap();
        let (mean, cov) = kalman_update(&c);
        assert!((&post.mean - mean).amax() <= 1e-10, "instance {i}");
        assert!((post.covariance() - &cov).amax() <= 1e-10, "instance {i}");
        assert!(is_lower_triangular(&post.factor));
        assert!(post.factor.diagonal().iter().all(|&v| v >= 0.0));
        assert_eq!(diag.gain.shape(), (c.belief.dim(), c.h.nrows()));
        // posterior never exceeds the prior
        let shrink = c.belief.covariance() - cov;
        assert!(min_eigenvalue(&shrink) >= -1e-10);
    }
}

#[test]
fn rank_deficient_prior() {
    let mut rng = rng(22);
    for i in 0..20 {
        let c = kalman_case(&mut rng, true);
        let (post, _) = measurement_update(&c.belief, &linear_measurement(&c), &c.y).unwrap();
        let (mean, cov) = kalman_update(&c);
        assert!((&post.mean - mean).amax() <= 1e-10, "instance {i}");
        assert!((post.covariance() - cov).amax() <= 1e-10, "instance {i}");
    }
}
