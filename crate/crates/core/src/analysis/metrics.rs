//! Fidelity and rank-agreement metrics.

use crate::error::{Error, Result};
use crate::linalg::normalized_weights;
use crate::scalar::Real;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Data(format!("length mismatch: {a} vs {b}")));
    }
    if a < 2 {
        return Err(Error::UndefinedMetric(format!("need at least 2 values, got {a}")));
    }
    Ok(())
}

/// Weighted coefficient of determination of `y_hat` against `y_ref`.
pub fn fidelity_r2<T: Real>(y_ref: &[T], y_hat: &[T], weights: Option<&[T]>) -> Result<T> {
    check_lengths(y_ref.len(), y_hat.len())?;
    let w = normalized_weights(y_ref.len(), weights)?;
    let mut mean = T::zero();
    for (&v, &wa) in y_ref.iter().zip(&w) {
        mean += wa * v;
    }
    let mut sse = T::zero();
    let mut sst = T::zero();
    for ((&r, &h), &wa) in y_ref.iter().zip(y_hat).zip(&w) {
        sse += wa * (r - h) * (r - h);
        sst += wa * (r - mean) * (r - mean);
    }
    // spread at the rounding level of the reference counts as constant
    let scale = y_ref.iter().fold(T::zero(), |a, &v| a.max(v.abs()));
    let floor = T::machine_epsilon() * T::lit(64.0) * scale;
    if !(sst > floor * floor) {
        return Err(Error::UndefinedMetric("reference has zero variance".into()));
    }
    Ok(T::one() - sse / sst)
}

/// 1-based ranks with ties given their average rank.
pub fn average_ranks<T: Real>(v: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp_real(&v[b]).then(a.cmp(&b)));
    let mut ranks = vec![T::zero(); v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = T::from_usize_lossy(start + end + 1) / T::lit(2.0);
        for &k in &order[start..end] {
            ranks[k] = avg;
        }
        start = end;
    }
    ranks
}

/// Weighted Pearson correlation; `None` if either series is constant.
pub fn weighted_correlation<T: Real>(a: &[T], b: &[T], w: &[T]) -> Option<T> {
    let mut ma = T::zero();
    let mut mb = T::zero();
    for ((&x, &y), &wa) in a.iter().zip(b).zip(w) {
        ma += wa * x;
        mb += wa * y;
    }
    let mut sab = T::zero();
    let mut saa = T::zero();
    let mut sbb = T::zero();
    for ((&x, &y), &wa) in a.iter().zip(b).zip(w) {
        let dx = x - ma;
        let dy = y - mb;
        sab += wa * dx * dy;
        saa += wa * dx * dx;
        sbb += wa * dy * dy;
    }
    if !(saa > T::zero()) || !(sbb > T::zero()) {
        return None;
    }
    let r = sab / (saa.sqrt() * sbb.sqrt());
    Some(r.max(-T::one()).min(T::one()))
}

/// Spearman correlation: Pearson correlation of average ranks.
pub fn spearman_rank_agreement<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    check_lengths(a.len(), b.len())?;
    if a.iter().chain(b).any(|v| !v.is_finite_real()) {
        return Err(Error::Data("non-finite value in rank agreement input".into()));
    }
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let w = vec![T::one() / T::from_usize_lossy(a.len()); a.len()];
    weighted_correlation(&ra, &rb, &w).ok_or_else(|| Error::UndefinedMetric("constant input to rank agreement".into()))
}
