//! Shapley-compatible attributions from orthogonal components.
//!
//! Each component's value is split equally among its members, so
//! φᵢ = fᵢ + ½ Σⱼ f_ij for a model with mains and pairs.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::decomposition::{DecompositionModel, Evaluation};
use crate::error::{Error, Result};
use crate::linalg::normalized_weights;
use crate::scalar::Real;
use crate::subset::SubsetId;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttributionVector<T> {
    pub instance_id: usize,
    /// φᵢ per feature.
    pub values: Vec<T>,
    pub baseline: T,
    pub reconstruction: T,
}

impl<T: Real> AttributionVector<T> {
    /// |Σφᵢ − (reconstruction − baseline)| / max(1, |reconstruction|).
    pub fn efficiency_gap(&self) -> T {
        let mut sum = T::zero();
        for &v in &self.values {
            sum += v;
        }
        (sum - (self.reconstruction - self.baseline)).abs() / self.reconstruction.abs().max(T::one())
    }
}

/// Attributions for a single row of component values.
pub fn shapley_row<T: Real>(d: usize, subsets: &[SubsetId], row: &[T]) -> Vec<T> {
    let mut phi = vec![T::zero(); d];
    for (s, &v) in subsets.iter().zip(row) {
        let k = s.len();
        if k == 0 {
            continue;
        }
        let share = v / T::from_usize_lossy(k);
        for &i in s.members() {
            phi[i] += share;
        }
    }
    phi
}

/// Attributions for every row of an evaluation; rows keep their order.
pub fn attributions_from_evaluation<T: Real>(ev: &Evaluation<T>, d: usize) -> Vec<AttributionVector<T>> {
    (0..ev.n_rows())
        .into_par_iter()
        .map(|a| {
            let row: Vec<T> = ev.values.row(a).iter().copied().collect();
            AttributionVector {
                instance_id: a,
                values: shapley_row(d, &ev.subsets, &row),
                baseline: ev.baseline,
                reconstruction: ev.reconstruction[a],
            }
        })
        .collect()
}

/// Attributions of one instance.
pub fn shapley_aggregate<T: Real>(model: &DecompositionModel<T>, instance: &[T]) -> Result<AttributionVector<T>> {
    let d = model.n_features();
    if instance.len() != d {
        return Err(Error::Schema(format!("instance has {} values, model has {d} features", instance.len())));
    }
    let x = DMatrix::from_row_slice(1, d, instance);
    let ev = model.evaluate(&x)?;
    Ok(attributions_from_evaluation(&ev, d).remove(0))
}

/// Attributions of every row of `x`.
pub fn explain<T: Real>(model: &DecompositionModel<T>, x: &DMatrix<T>) -> Result<Vec<AttributionVector<T>>> {
    let ev = model.evaluate(x)?;
    Ok(attributions_from_evaluation(&ev, model.n_features()))
}

/// Global importances: mean |fᵢ| (main) and mean |φᵢ| (total).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanAbsAttributions<T> {
    pub main: Vec<T>,
    pub total: Vec<T>,
}

pub fn mean_abs_attributions<T: Real>(ev: &Evaluation<T>, d: usize, weights: Option<&[T]>) -> Result<MeanAbsAttributions<T>> {
    let n = ev.n_rows();
    let w = normalized_weights(n, weights)?;
    let mut main = vec![T::zero(); d];
    for (k, s) in ev.subsets.iter().enumerate() {
        if s.len() == 1 {
            let i = s.members()[0];
            for a in 0..n {
                main[i] += w[a] * ev.values[(a, k)].abs();
            }
        }
    }
    let mut total = vec![T::zero(); d];
    for (a, attr) in attributions_from_evaluation(ev, d).iter().enumerate() {
        for (t, &v) in total.iter_mut().zip(&attr.values) {
            *t += w[a] * v.abs();
        }
    }
    Ok(MeanAbsAttributions { main, total })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand_evaluation() -> Evaluation<f64> {
        let subsets = vec![SubsetId::singleton(0), SubsetId::singleton(1), SubsetId::pair(0, 1)];
        let values = DMatrix::from_row_slice(1, 3, &[2.0, 1.0, 0.6]);
        Evaluation::from_components(0.0, subsets, values)
    }

    #[test]
    fn efficiency_arithmetic() {
        let attr = attributions_from_evaluation(&hand_evaluation(), 2).remove(0);
        assert!((attr.values[0] - 2.3).abs() < 1e-15);
        assert!((attr.values[1] - 1.3).abs() < 1e-15);
        assert!((attr.reconstruction - 3.6).abs() < 1e-15);
        assert!(attr.efficiency_gap() < 1e-15);
    }

    #[test]
    fn absent_feature_gets_zero() {
        let attr = attributions_from_evaluation(&hand_evaluation(), 3).remove(0);
        assert_eq!(attr.values[2], 0.0);
    }

    #[test]
    fn pure_pair_splits_equally() {
        let subsets = vec![SubsetId::singleton(0), SubsetId::singleton(1), SubsetId::pair(0, 1)];
        let values = DMatrix::from_row_slice(1, 3, &[0.0, 0.0, -0.7]);
        let ev = Evaluation::from_components(0.25, subsets, values);
        let attr = attributions_from_evaluation(&ev, 2).remove(0);
        assert_eq!(attr.values, vec![-0.35, -0.35]);
    }

    #[test]
    fn mean_abs_separates_main_and_total() {
        let subsets = vec![SubsetId::singleton(0), SubsetId::singleton(1), SubsetId::pair(0, 1)];
        let values = DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 2.0, -1.0, 1.0, 2.0]);
        let ev = Evaluation::from_components(0.0, subsets, values);
        let m = mean_abs_attributions(&ev, 2, None).unwrap();
        assert_eq!(m.main, vec![1.0, 1.0]);
        assert_eq!(m.total, vec![1.0, 1.0]);
        let m = mean_abs_attributions(&ev, 2, Some(&[3.0, 1.0])).unwrap();
        assert_eq!(m.total, vec![1.5, 0.5]);
    }
}
