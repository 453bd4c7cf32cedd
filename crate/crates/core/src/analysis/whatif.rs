//! What-if edits of a single instance.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::decomposition::DecompositionModel;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::subset::SubsetId;

use super::attribution::{attributions_from_evaluation, AttributionVector};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WhatIfReport<T> {
    pub before: Vec<T>,
    pub after: Vec<T>,
    pub subsets: Vec<SubsetId>,
    pub components_before: Vec<T>,
    pub components_after: Vec<T>,
    pub component_deltas: Vec<T>,
    pub attributions_before: AttributionVector<T>,
    pub attributions_after: AttributionVector<T>,
    pub attribution_deltas: Vec<T>,
    pub reconstruction_delta: T,
}

/// Re-evaluate `instance` with `edits` (feature index, new value) applied.
pub fn what_if<T: Real>(model: &DecompositionModel<T>, instance: &[T], edits: &[(usize, T)]) -> Result<WhatIfReport<T>> {
    let d = model.n_features();
    if instance.len() != d {
        return Err(Error::Schema(format!("instance has {} values, model has {d} features", instance.len())));
    }
    let mut after = instance.to_vec();
    for &(j, v) in edits {
        if j >= d {
            return Err(Error::Schema(format!("edit references feature {j}, model has {d}")));
        }
        if !v.is_finite_real() {
            return Err(Error::Data(format!("non-finite edit value for feature {j}")));
        }
        after[j] = v;
    }
    let mut rows = Vec::with_capacity(2 * d);
    rows.extend_from_slice(instance);
    rows.extend_from_slice(&after);
    let ev = model.evaluate(&DMatrix::from_row_slice(2, d, &rows))?;
    let mut attrs = attributions_from_evaluation(&ev, d);
    let attributions_after = attrs.pop().expect("two rows");
    let attributions_before = attrs.pop().expect("two rows");
    let components_before: Vec<T> = ev.values.row(0).iter().copied().collect();
    let components_after: Vec<T> = ev.values.row(1).iter().copied().collect();
    Ok(WhatIfReport {
        before: instance.to_vec(),
        component_deltas: components_after.iter().zip(&components_before).map(|(&a, &b)| a - b).collect(),
        attribution_deltas: attributions_after.values.iter().zip(&attributions_before.values).map(|(&a, &b)| a - b).collect(),
        reconstruction_delta: ev.reconstruction[1] - ev.reconstruction[0],
        after,
        subsets: ev.subsets,
        components_before,
        components_after,
        attributions_before,
        attributions_after,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{fit, FitConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn product_model() -> (DecompositionModel<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 400;
        let x = DMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..n).map(|a| x[(a, 0)] * x[(a, 1)] + 0.3 * x[(a, 2)]).collect();
        let config = FitConfig { rank_main: 10, rank_pair: 9, forced_pairs: Some(vec![(0, 1), (1, 2)]), ..FitConfig::default() };
        (fit(&x, &y, &config).unwrap(), x)
    }

    #[test]
    fn empty_edit_changes_nothing() {
        let (m, x) = product_model();
        let inst: Vec<f64> = x.row(3).iter().copied().collect();
        let r = what_if(&m, &inst, &[]).unwrap();
        assert!(r.component_deltas.iter().all(|&v| v == 0.0));
        assert!(r.attribution_deltas.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn untouched_components_have_exact_zero_delta() {
        let (m, x) = product_model();
        let inst: Vec<f64> = x.row(5).iter().copied().collect();
        let r = what_if(&m, &inst, &[(0, 0.77)]).unwrap();
        for (s, &delta) in r.subsets.iter().zip(&r.component_deltas) {
            if !s.contains(0) {
                assert_eq!(delta, 0.0, "{s}");
            }
        }
        let k = r.subsets.iter().position(|s| *s == SubsetId::pair(0, 1)).unwrap();
        let expected = 0.5 * (r.components_after[k] - r.components_before[k]);
        assert!((r.attribution_deltas[1] - expected).abs() < 1e-12);
        assert_eq!(r.attribution_deltas[2], 0.0);
    }

    #[test]
    fn bad_edits_are_rejected() {
        let (m, _) = product_model();
        assert!(matches!(what_if(&m, &[0.0; 3], &[(3, 1.0)]), Err(Error::Schema(_))));
        assert!(matches!(what_if(&m, &[0.0; 2], &[]), Err(Error::Schema(_))));
        assert!(matches!(what_if(&m, &[0.0; 3], &[(1, f64::NAN)]), Err(Error::Data(_))));
    }
}
