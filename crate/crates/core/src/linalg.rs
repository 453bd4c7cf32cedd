//! Small dense linear algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row weights normalized to sum 1; `None` means uniform.
pub fn normalized_weights<T: Real>(n: usize, weights: Option<&[T]>) -> Result<Vec<T>> {
    if n == 0 {
        return Err(Error::Config("cannot weight an empty sample".into()));
    }
    match weights {
        None => Ok(vec![T::one() / T::from_usize_lossy(n); n]),
        Some(w) => {
            if w.len() != n {
                return Err(Error::Config(format!("{} weights for {n} rows", w.len())));
            }
            let mut total = T::zero();
            for (i, &v) in w.iter().enumerate() {
                if !v.is_finite_real() || v < T::zero() {
                    return Err(Error::Config(format!("weight {i} is negative or non-finite")));
                }
                total += v;
            }
            if total <= T::zero() {
                return Err(Error::Config("weights sum to zero".into()));
            }
            Ok(w.iter().map(|&v| v / total).collect())
        }
    }
}

/// Σ_a w_a v_a with a fixed left-to-right accumulation order.
pub fn weighted_dot<T: Real>(a: &[T], b: &[T], w: &[T]) -> T {
    let mut acc = T::zero();
    for ((&x, &y), &wi) in a.iter().zip(b).zip(w) {
        acc += wi * x * y;
    }
    acc
}

pub fn weighted_mean<T: Real>(v: &[T], w: &[T]) -> T {
    let mut acc = T::zero();
    for (&x, &wi) in v.iter().zip(w) {
        acc += wi * x;
    }
    acc
}

/// Per-column weighted means of `m` (weights already normalized).
pub fn weighted_column_means<T: Real>(m: &DMatrix<T>, w: &[T]) -> DVector<T> {
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| weighted_mean(c.as_slice(), w)))
}

/// `aᵀ diag(w) b`, routed through a dense gemm.
pub fn weighted_cross<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, w: &[T]) -> DMatrix<T> {
    let mut aw = a.clone();
    for mut col in aw.column_iter_mut() {
        for (x, &wi) in col.iter_mut().zip(w) {
            *x *= wi;
        }
    }
    let awt = aw.transpose();
    &awt * b
}

/// Relative eigenvalue floor used for symmetric inverse roots and pseudo-solves.
pub fn eigen_floor<T: Real>(largest: T) -> T {
    let rel = T::lit(1e-10).max(T::machine_epsilon() * T::lit(10.0));
    rel * largest.max(T::one())
}

/// Symmetric `G^{-1/2}` with eigenvalues floored at `eigen_floor(λ_max)`.
pub fn inverse_sqrt_floored<T: Real>(g: &DMatrix<T>) -> DMatrix<T> {
    let r = g.nrows();
    let sym = symmetrize(g);
    let eig = SymmetricEigen::new(sym);
    let largest = eig.eigenvalues.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let floor = eigen_floor(largest);
    let mut scaled = eig.eigenvectors.clone();
    for (k, mut col) in scaled.column_iter_mut().enumerate() {
        let lam = eig.eigenvalues[k].max(floor);
        col /= lam.sqrt();
    }
    let out = &scaled * eig.eigenvectors.transpose();
    debug_assert_eq!(out.nrows(), r);
    symmetrize(&out)
}

pub fn symmetrize<T: Real>(g: &DMatrix<T>) -> DMatrix<T> {
    let half = T::lit(0.5);
    DMatrix::from_fn(g.nrows(), g.ncols(), |i, j| (g[(i, j)] + g[(j, i)]) * half)
}

/// How a ridge system was solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Cholesky,
    PseudoInverse,
}

/// Solve `(G + λI) x = rhs` for a symmetric PSD `G`.
pub fn solve_ridge<T: Real>(g: &DMatrix<T>, rhs: &DMatrix<T>, lambda: T) -> Result<DMatrix<T>> {
    solve_ridge_reporting(g, rhs, lambda).map(|(x, _)| x)
}

/// Cholesky first; eigenvalue-floored pseudo-solve if the factorization fails.
pub fn solve_ridge_reporting<T: Real>(g: &DMatrix<T>, rhs: &DMatrix<T>, lambda: T) -> Result<(DMatrix<T>, SolveMethod)> {
    let p = g.nrows();
    let mut a = symmetrize(g);
    for k in 0..p {
        a[(k, k)] += lambda;
    }
    if let Some(chol) = Cholesky::new(a.clone()) {
        let x = chol.solve(rhs);
        if x.iter().all(|v| v.is_finite_real()) {
            return Ok((x, SolveMethod::Cholesky));
        }
    }
    pseudo_solve(&a, rhs).map(|x| (x, SolveMethod::PseudoInverse))
}

/// Eigen pseudo-inverse solve; directions below the relative floor are dropped.
pub fn pseudo_solve<T: Real>(a: &DMatrix<T>, rhs: &DMatrix<T>) -> Result<DMatrix<T>> {
    let eig = SymmetricEigen::new(symmetrize(a));
    let largest = eig.eigenvalues.iter().copied().fold(T::zero(), |x, y| x.max(y.abs()));
    if !largest.is_finite_real() {
        return Err(Error::Numerical("non-finite normal equations".into()));
    }
    let cutoff = eigen_floor(largest);
    let proj = eig.eigenvectors.transpose() * rhs;
    let mut scaled = proj;
    for (k, mut row) in scaled.row_iter_mut().enumerate() {
        let lam = eig.eigenvalues[k];
        if lam > cutoff {
            row /= lam;
        } else {
            row.fill(T::zero());
        }
    }
    let x = &eig.eigenvectors * scaled;
    if x.iter().all(|v| v.is_finite_real()) {
        Ok(x)
    } else {
        Err(Error::Numerical("pseudo-solve produced non-finite values".into()))
    }
}

/// Max absolute entry, 0 for an empty matrix.
pub fn max_abs<T: Real>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |a, &b| a.max(b.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_sqrt_whitens_spd() {
        let g = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let w = inverse_sqrt_floored(&g);
        let id = &w * &g * &w;
        assert!((id - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);
        assert!((&w - w.transpose()).amax() == 0.0);
    }

    #[test]
    fn floor_keeps_singular_gram_finite() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0f64]);
        let w = inverse_sqrt_floored(&g);
        assert!(w.iter().all(|v| v.is_finite()));
        // the floored direction scales by 1/sqrt(1e-10 * 2)
        assert!(w.amax() < 1e6);
    }

    #[test]
    fn ridge_solve_matches_direct_inverse() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0f64]);
        let rhs = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let x = solve_ridge(&g, &rhs, 0.1).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[2.1, 0.5, 0.5, 1.1]);
        let direct = a.try_inverse().unwrap() * rhs;
        assert!((x - direct).amax() < 1e-14);
    }

    #[test]
    fn pseudo_solve_drops_null_space() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0f64]);
        let rhs = DMatrix::from_column_slice(2, 1, &[2.0, 2.0]);
        let x = pseudo_solve(&a, &rhs).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weights_validation() {
        assert!(normalized_weights::<f64>(3, Some(&[1.0, -1.0, 1.0])).is_err());
        assert!(normalized_weights::<f64>(2, Some(&[0.0, 0.0])).is_err());
        assert!(normalized_weights::<f64>(2, Some(&[1.0])).is_err());
        let w = normalized_weights::<f64>(2, Some(&[1.0, 3.0])).unwrap();
        assert_eq!(w, vec![0.25, 0.75]);
    }
}
