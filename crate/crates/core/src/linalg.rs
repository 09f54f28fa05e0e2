//! Small dense linear algebra with fixed conventions.
//!
//! Square-root factors are canonicalized to lower-triangular form with a
//! non-negative diagonal. Matrices here are tiny (d ≤ ~16), so everything is
//! dense and allocation is not a concern.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const SYMMETRY_RTOL: f64 = 1e-10;
const PSD_RTOL: f64 = 1e-12;
const SINGULAR_RTOL: f64 = 1e-14;

/// Lower-triangular Cholesky factor of a symmetric positive semi-definite matrix.
///
/// Zero (or round-off sized) pivots are accepted and produce a zero column, so
/// rank-deficient covariances factor cleanly.
pub fn cholesky_lower(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = sigma.nrows();
    if sigma.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "cholesky of {}x{} matrix",
            n,
            sigma.ncols()
        )));
    }
    let scale = sigma.amax();
    let asym = (sigma - sigma.transpose()).amax();
    if asym > SYMMETRY_RTOL * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let norm = sigma.norm();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = sigma[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if pivot < -PSD_RTOL * norm {
            return Err(Error::NotPositiveSemiDefinite { pivot, index: j });
        }
        if pivot <= 16.0 * f64::EPSILON * sigma[(j, j)].abs() {
            // Dependent direction: the column stays zero.
            continue;
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut s = 0.5 * (sigma[(i, j)] + sigma[(j, i)]);
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Flips the sign of every column whose diagonal entry is negative.
pub fn fix_column_signs(l: &mut DMatrix<f64>) {
    let n = l.nrows().min(l.ncols());
    for j in 0..n {
        if l[(j, j)] < 0.0 {
            l.column_mut(j).neg_mut();
        }
    }
}

/// Orthogonal triangularization: returns lower-triangular `L` (d×d, diag ≥ 0)
/// with `L Lᵀ = A Aᵀ` for a d×n input with n ≥ d.
pub fn tria(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (d, n) = a.shape();
    if n < d {
        return Err(Error::DimensionMismatch(format!(
            "tria needs at least as many columns as rows, got {d}x{n}"
        )));
    }
    if d == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let r = a.transpose().qr().r();
    let mut l = r.transpose();
    // The strict upper part is exactly zero from the QR, but be explicit.
    for j in 0..d {
        for i in 0..j {
            l[(i, j)] = 0.0;
        }
    }
    fix_column_signs(&mut l);
    Ok(l)
}

/// LU factorization with partial pivoting of a square matrix.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: DMatrix<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "LU of {}x{} matrix",
                n,
                m.ncols()
            )));
        }
        let tol = SINGULAR_RTOL * m.norm();
        let mut lu = m.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (p, pivot) = (k..n)
                .map(|i| (i, lu[(i, k)].abs()))
                .fold(
                    (k, -1.0),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
            if !(pivot >= tol) || pivot == 0.0 {
                return Err(Error::SingularFactor { pivot, index: k });
            }
            if p != k {
                lu.swap_rows(p, k);
                perm.swap(p, k);
            }
            let piv = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / piv;
                lu[(i, k)] = f;
                if f != 0.0 {
                    for j in (k + 1)..n {
                        let u = lu[(k, j)];
                        lu[(i, j)] -= f * u;
                    }
                }
            }
        }
        Ok(Self { lu, perm })
    }

    /// Solves `M x = b` in place for every column of `b`.
    pub fn solve_mut(&self, b: &mut DMatrix<f64>) {
        let n = self.lu.nrows();
        let permuted = DMatrix::from_fn(n, b.ncols(), |i, j| b[(self.perm[i], j)]);
        *b = permuted;
        for c in 0..b.ncols() {
            for i in 0..n {
                let mut s = b[(i, c)];
                for k in 0..i {
                    s -= self.lu[(i, k)] * b[(k, c)];
                }
                b[(i, c)] = s;
            }
            for i in (0..n).rev() {
                let mut s = b[(i, c)];
                for k in (i + 1)..n {
                    s -= self.lu[(i, k)] * b[(k, c)];
                }
                b[(i, c)] = s / self.lu[(i, i)];
            }
        }
    }
}

/// Returns `X = K (Mᵀ)⁻¹`, i.e. the solution of `X Mᵀ = K`.
///
/// Solved as `M Xᵀ = Kᵀ` through an LU factorization of `M`. A pivot below
/// `1e-14·‖M‖_F` is reported as [`Error::SingularFactor`].
pub fn solve_transpose(m: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if k.ncols() != m.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "K has {} columns, M is {}x{}",
            k.ncols(),
            m.nrows(),
            m.ncols()
        )));
    }
    let lu = Lu::new(m)?;
    let mut z = k.transpose();
    lu.solve_mut(&mut z);
    Ok(z.transpose())
}

/// Solves `W L = B` for `W`, with `L` square lower triangular.
pub fn solve_right_lower(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    // W L = B  <=>  Lᵀ Wᵀ = Bᵀ, with Lᵀ upper triangular.
    let n = l.nrows();
    let mut w = DMatrix::<f64>::zeros(b.nrows(), n);
    for r in 0..b.nrows() {
        for j in (0..n).rev() {
            let mut s = b[(r, j)];
            for k in (j + 1)..n {
                s -= w[(r, k)] * l[(k, j)];
            }
            w[(r, j)] = s / l[(j, j)];
        }
    }
    w
}

/// `M Mᵀ`, symmetrized.
pub fn outer_square(m: &DMatrix<f64>) -> DMatrix<f64> {
    let s = m * m.transpose();
    symmetrize(&s)
}

pub fn symmetrize(s: &DMatrix<f64>) -> DMatrix<f64> {
    (s + s.transpose()) * 0.5
}

/// The 2d symmetric cubature points `x̄ ± √d·Mᵢ`, as columns (`+` block first).
pub fn cubature_points(mean: &DVector<f64>, factor: &DMatrix<f64>) -> DMatrix<f64> {
    let d = mean.len();
    let spread = (d as f64).sqrt();
    let mut pts = DMatrix::<f64>::zeros(d, 2 * d);
    for i in 0..d {
        let col = factor.column(i) * spread;
        pts.set_column(i, &(mean + &col));
        pts.set_column(i + d, &(mean - &col));
    }
    pts
}

pub fn is_lower_triangular(m: &DMatrix<f64>) -> bool {
    (0..m.ncols()).all(|j| (0..j.min(m.nrows())).all(|i| m[(i, j)] == 0.0))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(s: &DMatrix<f64>) -> f64 {
    symmetrize(s)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn cholesky_identity() {
        let i = DMatrix::<f64>::identity(2, 2);
        assert_eq!(cholesky_lower(&i).unwrap(), i);
    }

    #[test]
    fn cholesky_two_by_two() {
        let s = dmatrix![2.0, 1.0; 1.0, 2.0];
        let l = cholesky_lower(&s).unwrap();
        assert!((l[(0, 0)] - std::f64::consts::SQRT_2).abs() < 1e-12);
        assert!((l[(1, 0)] - 0.707_106_781_186_547_5).abs() < 1e-12);
        assert!((l[(1, 1)] - 1.224_744_871_391_589).abs() < 1e-12);
        assert_eq!(l[(0, 1)], 0.0);
        assert!(rel_err(&(&l * l.transpose()), &s) < 1e-12);
    }

    #[test]
    fn cholesky_zero_matrix() {
        let z = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(cholesky_lower(&z).unwrap(), z);
    }

    #[test]
    fn cholesky_rank_deficient() {
        let s = dmatrix![1.0, 1.0; 1.0, 1.0];
        let l = cholesky_lower(&s).unwrap();
        assert_eq!(l, dmatrix![1.0, 0.0; 1.0, 0.0]);
    }

    #[test]
    fn cholesky_rejects_asymmetric() {
        let s = dmatrix![2.0, 1.0; 0.5, 2.0];
        assert!(matches!(
            cholesky_lower(&s),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let s = dmatrix![1.0, 2.0; 2.0, 1.0];
        assert!(matches!(
            cholesky_lower(&s),
            Err(Error::NotPositiveSemiDefinite { index: 1, .. })
        ));
    }

    #[test]
    fn tria_identity() {
        let i = DMatrix::<f64>::identity(2, 2);
        assert!(rel_err(&tria(&i).unwrap(), &i) < 1e-15);
    }

    #[test]
    fn tria_row_vector_gives_row_norm() {
        let a = dmatrix![3.0, 4.0];
        let l = tria(&a).unwrap();
        assert!((l[(0, 0)] - 5.0).abs() < 1e-14);
    }

    #[test]
    fn tria_of_padded_triangular_is_identity_map() {
        let m = dmatrix![2.0, 0.0, 0.0; -1.0, 0.5, 0.0; 3.0, 0.25, 1.5];
        let mut a = DMatrix::<f64>::zeros(3, 6);
        a.view_mut((0, 0), (3, 3)).copy_from(&m);
        let l = tria(&a).unwrap();
        assert!(rel_err(&l, &m) < 1e-14);
        assert!(is_lower_triangular(&l));
    }

    #[test]
    fn tria_rank_deficient_has_zero_diagonal() {
        let a = dmatrix![1.0, 2.0, 3.0; 2.0, 4.0, 6.0];
        let l = tria(&a).unwrap();
        assert!(l[(1, 1)].abs() < 1e-14);
        assert!(rel_err(&(&l * l.transpose()), &(&a * a.transpose())) < 1e-13);
    }

    #[test]
    fn tria_rejects_wide_rows() {
        assert!(tria(&DMatrix::<f64>::zeros(3, 2)).is_err());
    }

    #[test]
    fn solve_transpose_identity() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert_eq!(solve_transpose(&i, &i).unwrap(), i);
    }

    #[test]
    fn solve_transpose_diagonal_scaling() {
        let m = DMatrix::<f64>::identity(2, 2) * 2.0;
        let k = DMatrix::<f64>::identity(2, 2);
        let x = solve_transpose(&m, &k).unwrap();
        assert!(rel_err(&x, &(k * 0.5)) < 1e-15);
    }

    #[test]
    fn solve_transpose_residual() {
        let m = dmatrix![4.0, 1.0, -2.0; 0.5, 3.0, 1.0; -1.0, 2.0, 5.0];
        let k = dmatrix![1.0, 0.2, 0.1; 0.2, 2.0, -0.3; 0.1, -0.3, 0.7];
        let x = solve_transpose(&m, &k).unwrap();
        let resid = (&x * m.transpose() - &k).norm();
        assert!(resid <= 1e-10 * k.norm());
    }

    #[test]
    fn solve_transpose_singular() {
        let m = dmatrix![1.0, 2.0; 2.0, 4.0];
        let k = DMatrix::<f64>::identity(2, 2);
        assert!(matches!(
            solve_transpose(&m, &k),
            Err(Error::SingularFactor { .. })
        ));
    }

    #[test]
    fn solve_right_lower_residual() {
        let l = dmatrix![2.0, 0.0; -1.0, 3.0];
        let b = dmatrix![1.0, 2.0; 3.0, 4.0; 5.0, 6.0];
        let w = solve_right_lower(&l, &b);
        assert!((&w * &l - &b).amax() < 1e-14);
    }

    #[test]
    fn cubature_points_reproduce_moments() {
        let mean = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let m = dmatrix![1.0, 0.0, 0.0; 0.3, 2.0, 0.0; -0.4, 0.1, 0.7];
        let pts = cubature_points(&mean, &m);
        let avg = pts.column_sum() / 6.0;
        assert!((&avg - &mean).amax() < 1e-15);
        let mut cov = DMatrix::<f64>::zeros(3, 3);
        for c in pts.column_iter() {
            let dv = c - &mean;
            cov += &dv * dv.transpose() / 6.0;
        }
        assert!(rel_err(&cov, &(&m * m.transpose())) < 1e-14);
    }
}
