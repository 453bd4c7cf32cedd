//! Orthogonalized interaction blocks.

use nalgebra::{DMatrix, DVector};

use crate::kernel_maps::FeatureMap;
use crate::scalar::Real;

/// Product map of a feature pair, residualized against `[1, Φᵢ, Φⱼ]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairMap<T: Real> {
    pub pair: (usize, usize),
    /// Product columns (u, v): Φᵢ[:, u] ∘ Φⱼ[:, v].
    pub columns: Vec<(usize, usize)>,
    /// Γ with `block = P − [1, Φᵢ, Φⱼ] Γ`; shape (1 + rᵢ + rⱼ) × p.
    pub orthogonalizer: DMatrix<T>,
    /// One parent is a constant feature; the block is identically zero.
    pub degenerate: bool,
}

impl<T: Real> PairMap<T> {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Raw products in `columns` order.
    pub fn products(&self, left: &DMatrix<T>, right: &DMatrix<T>) -> DMatrix<T> {
        product_columns(left, right, &self.columns)
    }

    /// Orthogonalized block for the given parent maps (row-wise, fixed order).
    pub fn apply(&self, left: &DMatrix<T>, right: &DMatrix<T>) -> DMatrix<T> {
        let n = left.nrows();
        let p = self.width();
        if self.degenerate {
            return DMatrix::zeros(n, p);
        }
        let ri = left.ncols();
        let rj = right.ncols();
        let g = &self.orthogonalizer;
        let mut out = DMatrix::zeros(n, p);
        for a in 0..n {
            for (c, &(u, v)) in self.columns.iter().enumerate() {
                let mut fitted = g[(0, c)];
                for k in 0..ri {
                    fitted += left[(a, k)] * g[(1 + k, c)];
                }
                for k in 0..rj {
                    fitted += right[(a, k)] * g[(1 + ri + k, c)];
                }
                out[(a, c)] = left[(a, u)] * right[(a, v)] - fitted;
            }
        }
        out
    }
}

pub(crate) fn product_columns<T: Real>(left: &DMatrix<T>, right: &DMatrix<T>, columns: &[(usize, usize)]) -> DMatrix<T> {
    let n = left.nrows();
    let mut out = DMatrix::zeros(n, columns.len());
    for (c, &(u, v)) in columns.iter().enumerate() {
        for a in 0..n {
            out[(a, c)] = left[(a, u)] * right[(a, v)];
        }
    }
    out
}

/// Weighted second moments of the (centered) map columns.
pub fn column_variances<T: Real>(values: &DMatrix<T>, weights: &[T]) -> Vec<T> {
    values
        .column_iter()
        .map(|c| c.iter().zip(weights).fold(T::zero(), |acc, (&v, &w)| acc + w * v * v))
        .collect()
}

/// The `rank_pair` products with the largest variance product `σ²ᵤ σ²ᵥ`.
///
/// Main maps are in principal-component order, so this keeps the leading
/// part of the tensor-product spectrum. Ties go to the smaller (u, v).
pub fn pair_columns<T: Real>(left_var: &[T], right_var: &[T], rank_pair: usize) -> Vec<(usize, usize)> {
    let mut all: Vec<((usize, usize), T)> = Vec::with_capacity(left_var.len() * right_var.len());
    for (u, &a) in left_var.iter().enumerate() {
        for (v, &b) in right_var.iter().enumerate() {
            all.push(((u, v), a * b));
        }
    }
    all.sort_by(|x, y| y.1.total_cmp_real(&x.1).then(x.0.cmp(&y.0)));
    let mut cols: Vec<(usize, usize)> = all.into_iter().take(rank_pair.max(1)).map(|(c, _)| c).collect();
    cols.sort_unstable();
    cols
}

/// `[1, Φᵢ, Φⱼ]`.
fn parent_basis<T: Real>(left: &DMatrix<T>, right: &DMatrix<T>) -> DMatrix<T> {
    let n = left.nrows();
    let ri = left.ncols();
    let rj = right.ncols();
    let mut b = DMatrix::zeros(n, 1 + ri + rj);
    b.column_mut(0).fill(T::one());
    b.view_mut((0, 1), (n, ri)).copy_from(left);
    b.view_mut((0, 1 + ri), (n, rj)).copy_from(right);
    b
}

/// Weighted least-squares projector onto the column span of `basis`.
///
/// Returns `(T, Q)` with `√W · basis · T = Q` and `Q` orthonormal, built by
/// Gram-Schmidt with one reorthogonalization pass. Columns whose residual falls
/// below `eps · max(n, m)` times the largest column norm are dropped.
fn weighted_projector<T: Real>(basis: &DMatrix<T>, weights: &[T]) -> Option<(DMatrix<T>, DMatrix<T>)> {
    let (n, m) = basis.shape();
    let mut scaled = basis.clone();
    for (a, &w) in weights.iter().enumerate() {
        let s = w.sqrt();
        for k in 0..m {
            scaled[(a, k)] *= s;
        }
    }
    let largest = scaled.column_iter().map(|c| c.norm()).fold(T::zero(), |a, b| a.max(b));
    if !largest.is_finite_real() || largest <= T::zero() {
        return None;
    }
    let cutoff = largest * T::machine_epsilon() * T::from_usize_lossy(n.max(m));
    let mut qs: Vec<DVector<T>> = Vec::new();
    let mut ts: Vec<DVector<T>> = Vec::new();
    for c in 0..m {
        let mut q = scaled.column(c).into_owned();
        let mut t = DVector::zeros(m);
        t[c] = T::one();
        for _ in 0..2 {
            for (qi, ti) in qs.iter().zip(&ts) {
                let r = qi.dot(&q);
                q.axpy(-r, qi, T::one());
                t.axpy(-r, ti, T::one());
            }
        }
        let norm = q.norm();
        if norm > cutoff {
            qs.push(q / norm);
            ts.push(t / norm);
        }
    }
    let k = qs.len();
    let coef = DMatrix::from_fn(m, k, |r, c| ts[c][r]);
    let left = DMatrix::from_fn(n, k, |r, c| qs[c][r]);
    Some((coef, left))
}

/// Build the orthogonalized pair map from its centered parents.
///
/// The weighted projection onto `[1, Φᵢ, Φⱼ]` uses an orthonormal basis of the
/// weighted parents and is applied twice so the stored coefficients reproduce
/// a residual that is orthogonal to working precision. Product columns whose
/// residual is below `eps^(1/3)` of their norm are dropped; if none survive the
/// map is degenerate.
pub fn build_pair_map<T: Real>(
    left: &FeatureMap<T>,
    right: &FeatureMap<T>,
    weights: &[T],
    rank_pair: usize,
) -> (PairMap<T>, DMatrix<T>) {
    let columns = pair_columns(&column_variances(&left.values, weights), &column_variances(&right.values, weights), rank_pair);
    let m = 1 + left.rank() + right.rank();
    let degenerate = left.degenerate || right.degenerate;
    let mut map = PairMap {
        pair: (left.feature_index, right.feature_index),
        columns,
        orthogonalizer: DMatrix::zeros(m, 0),
        degenerate,
    };
    let p = map.width();
    map.orthogonalizer = DMatrix::zeros(m, p);
    let n = left.values.nrows();
    if degenerate {
        return (map, DMatrix::zeros(n, p));
    }
    let basis = parent_basis(&left.values, &right.values);
    let mut residual = map.products(&left.values, &right.values);
    let Some((coef, u)) = weighted_projector(&basis, weights) else {
        return (map, residual);
    };
    let sqrt_w: Vec<T> = weights.iter().map(|w| w.sqrt()).collect();
    let mut gamma = DMatrix::zeros(m, p);
    for _ in 0..2 {
        let mut scaled = residual.clone();
        for (a, &s) in sqrt_w.iter().enumerate() {
            for k in 0..p {
                scaled[(a, k)] *= s;
            }
        }
        let step = &coef * (u.transpose() * scaled);
        gamma += &step;
        map.orthogonalizer = gamma.clone();
        residual = map.apply(&left.values, &right.values);
    }
    // columns that sit in the parent span to within rounding carry no interaction
    let products = map.products(&left.values, &right.values);
    let tol = T::machine_epsilon().cbrt();
    let keep: Vec<usize> = (0..p)
        .filter(|&c| {
            let before = weighted_norm(products.column(c).as_slice(), weights);
            let after = weighted_norm(residual.column(c).as_slice(), weights);
            after > tol * before
        })
        .collect();
    if keep.len() == p {
        return (map, residual);
    }
    if keep.is_empty() {
        map.degenerate = true;
        map.orthogonalizer = DMatrix::zeros(m, p);
        return (map, DMatrix::zeros(n, p));
    }
    map.columns = keep.iter().map(|&c| map.columns[c]).collect();
    map.orthogonalizer = map.orthogonalizer.select_columns(&keep);
    (map, residual.select_columns(&keep))
}

fn weighted_norm<T: Real>(v: &[T], w: &[T]) -> T {
    v.iter().zip(w).fold(T::zero(), |acc, (&a, &wa)| acc + wa * a * a).sqrt()
}
