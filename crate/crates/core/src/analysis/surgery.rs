//! Component surgery: the R² cost of deleting one component.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::decomposition::{DecompositionModel, Evaluation};
use crate::error::{Error, Result};
use crate::linalg::normalized_weights;
use crate::scalar::Real;
use crate::subset::SubsetId;

use super::metrics::fidelity_r2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    ModelOutput,
    TrueLabels,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurgeryReport<T> {
    pub removed_subset: SubsetId,
    pub r2_full: T,
    pub r2_ablated: T,
    /// r2_full − r2_ablated.
    pub delta_r2: T,
    pub target_kind: TargetKind,
}

pub fn surgery_from_evaluation<T: Real>(
    ev: &Evaluation<T>,
    target: &[T],
    kind: TargetKind,
    subset: &SubsetId,
    weights: Option<&[T]>,
) -> Result<SurgeryReport<T>> {
    let k = ev
        .index_of(subset)
        .filter(|_| !subset.is_empty())
        .ok_or_else(|| Error::Domain(format!("subset {subset} is not a modeled component")))?;
    if target.len() != ev.n_rows() {
        return Err(Error::Data(format!("{} targets for {} rows", target.len(), ev.n_rows())));
    }
    let full: Vec<T> = ev.reconstruction.iter().copied().collect();
    let ablated: Vec<T> = full.iter().enumerate().map(|(a, &v)| v - ev.values[(a, k)]).collect();
    let r2_full = fidelity_r2(target, &full, weights)?;
    let r2_ablated = fidelity_r2(target, &ablated, weights)?;
    Ok(SurgeryReport { removed_subset: subset.clone(), r2_full, r2_ablated, delta_r2: r2_full - r2_ablated, target_kind: kind })
}

pub fn component_surgery<T: Real>(
    model: &DecompositionModel<T>,
    x_test: &DMatrix<T>,
    target: &[T],
    kind: TargetKind,
    subset: &SubsetId,
) -> Result<SurgeryReport<T>> {
    let ev = model.evaluate(x_test)?;
    surgery_from_evaluation(&ev, target, kind, subset, None)
}

/// Pair with the largest weighted l2 norm on the evaluation rows; first in order on ties.
pub fn most_impactful_pair<T: Real>(ev: &Evaluation<T>, weights: Option<&[T]>) -> Result<Option<SubsetId>> {
    let w = normalized_weights(ev.n_rows(), weights)?;
    let mut best: Option<(SubsetId, T)> = None;
    for (k, s) in ev.subsets.iter().enumerate() {
        if s.len() != 2 {
            continue;
        }
        let mut norm = T::zero();
        for (a, &wa) in w.iter().enumerate() {
            norm += wa * ev.values[(a, k)] * ev.values[(a, k)];
        }
        if best.as_ref().is_none_or(|(_, b)| norm > *b) {
            best = Some((s.clone(), norm));
        }
    }
    Ok(best.map(|(s, _)| s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev() -> Evaluation<f64> {
        let subsets = vec![SubsetId::singleton(0), SubsetId::singleton(1), SubsetId::pair(0, 1)];
        let values = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.5, -1.0, 0.0, -0.5, 0.0, 0.0, 1.0]);
        Evaluation::from_components(0.0, subsets, values)
    }

    #[test]
    fn null_component_changes_nothing() {
        let e = ev();
        let target: Vec<f64> = e.reconstruction.iter().map(|v| v + 0.1).collect();
        let r = surgery_from_evaluation(&e, &target, TargetKind::ModelOutput, &SubsetId::singleton(1), None).unwrap();
        assert_eq!(r.delta_r2, 0.0);
        assert_eq!(r.r2_full, r.r2_ablated);
    }

    #[test]
    fn removing_signal_drops_r2() {
        let e = ev();
        let target: Vec<f64> = e.reconstruction.iter().copied().collect();
        let r = surgery_from_evaluation(&e, &target, TargetKind::TrueLabels, &SubsetId::pair(0, 1), None).unwrap();
        assert_eq!(r.r2_full, 1.0);
        assert!(r.delta_r2 > 0.0);
        assert_eq!(r.delta_r2, r.r2_full - r.r2_ablated);
    }

    #[test]
    fn unmodeled_subset_is_domain_error() {
        let e = ev();
        let t = [1.0, 2.0, 3.0];
        assert!(matches!(surgery_from_evaluation(&e, &t, TargetKind::ModelOutput, &SubsetId::pair(0, 2), None), Err(Error::Domain(_))));
        assert!(matches!(surgery_from_evaluation(&e, &t, TargetKind::ModelOutput, &SubsetId::empty(), None), Err(Error::Domain(_))));
    }

    #[test]
    fn picks_largest_pair() {
        assert_eq!(most_impactful_pair(&ev(), None).unwrap(), Some(SubsetId::pair(0, 1)));
        let mains = Evaluation::from_components(0.0, vec![SubsetId::singleton(0)], DMatrix::from_element(2, 1, 1.0));
        assert_eq!(most_impactful_pair(&mains, None).unwrap(), None);
    }
}
