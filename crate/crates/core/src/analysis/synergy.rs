//! Pairwise synergy scores: s_ij = corr_w(f_ij, fᵢ + fⱼ).

use nalgebra::DMatrix;
use serde::Serialize;

use crate::decomposition::{DecompositionModel, Evaluation};
use crate::error::Result;
use crate::linalg::normalized_weights;
use crate::scalar::Real;
use crate::subset::SubsetId;

use super::metrics::weighted_correlation;

#[derive(Clone, Debug, PartialEq)]
pub struct SynergyMatrix<T: Real> {
    pub feature_names: Vec<String>,
    /// d × d, symmetric with zero diagonal.
    pub values: DMatrix<T>,
}

impl<T: Real> SynergyMatrix<T> {
    /// Header of feature names, then one tab-separated row per feature.
    pub fn to_tsv(&self) -> String {
        let mut out = self.feature_names.join("\t");
        out.push('\n');
        for i in 0..self.values.nrows() {
            let row: Vec<String> = (0..self.values.ncols()).map(|j| format!("{:?}", self.values[(i, j)].as_f64())).collect();
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.values.nrows()).map(|i| self.values.row(i).iter().map(|v| v.as_f64()).collect()).collect()
    }
}

impl<T: Real> Serialize for SynergyMatrix<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("SynergyMatrix", 2)?;
        st.serialize_field("feature_names", &self.feature_names)?;
        st.serialize_field("matrix", &self.rows())?;
        st.end()
    }
}

pub fn synergy_from_evaluation<T: Real>(
    ev: &Evaluation<T>,
    feature_names: &[String],
    weights: Option<&[T]>,
) -> Result<SynergyMatrix<T>> {
    let d = feature_names.len();
    let n = ev.n_rows();
    let w = normalized_weights(n, weights)?;
    let mut values = DMatrix::zeros(d, d);
    for s in &ev.subsets {
        if s.len() != 2 {
            continue;
        }
        let (i, j) = (s.members()[0], s.members()[1]);
        let (Some(fij), Some(fi), Some(fj)) =
            (ev.component(s), ev.component(&SubsetId::singleton(i)), ev.component(&SubsetId::singleton(j)))
        else {
            continue;
        };
        let mains: Vec<T> = fi.iter().zip(&fj).map(|(&a, &b)| a + b).collect();
        let r = weighted_correlation(&fij, &mains, &w).unwrap_or_else(T::zero);
        values[(i, j)] = r;
        values[(j, i)] = r;
    }
    Ok(SynergyMatrix { feature_names: feature_names.to_vec(), values })
}

pub fn synergy_matrix<T: Real>(
    model: &DecompositionModel<T>,
    x_eval: &DMatrix<T>,
    weights: Option<&[T]>,
) -> Result<SynergyMatrix<T>> {
    let ev = model.evaluate(x_eval)?;
    synergy_from_evaluation(&ev, &model.feature_names, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|j| format!("x{j}")).collect()
    }

    #[test]
    fn no_pairs_gives_zero_matrix() {
        let subsets = vec![SubsetId::singleton(0), SubsetId::singleton(1)];
        let ev = Evaluation::from_components(0.0, subsets, DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 1.0, -1.0, 5.0]));
        let s = synergy_from_evaluation(&ev, &names(2), None).unwrap();
        assert_eq!(s.values, DMatrix::zeros(2, 2));
    }

    #[test]
    fn anti_proportional_pair_is_minus_one() {
        let fi: [f64; 4] = [0.3, -1.0, 0.5, 0.2];
        let fj = [1.0, 0.1, -0.4, -0.7];
        let mut data = Vec::new();
        for a in 0..4 {
            data.extend_from_slice(&[fi[a], fj[a], -(fi[a] + fj[a]) / 2.0]);
        }
        let subsets = vec![SubsetId::singleton(0), SubsetId::singleton(1), SubsetId::pair(0, 1)];
        let ev = Evaluation::from_components(0.0, subsets, DMatrix::from_row_slice(4, 3, &data));
        let s = synergy_from_evaluation(&ev, &names(3), None).unwrap();
        assert!((s.values[(0, 1)] + 1.0).abs() < 1e-14);
        assert_eq!(s.values, s.values.transpose());
        for i in 0..3 {
            assert_eq!(s.values[(i, i)], 0.0);
        }
        assert_eq!(s.values[(0, 2)], 0.0);
        let tsv = s.to_tsv();
        assert!(tsv.starts_with("x0\tx1\tx2\n"));
        assert_eq!(tsv.lines().count(), 4);
    }

    #[test]
    fn constant_series_scores_zero() {
        let subsets = vec![SubsetId::singleton(0), SubsetId::singleton(1), SubsetId::pair(0, 1)];
        let ev = Evaluation::from_components(0.0, subsets, DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, -1.0, 0.0, 0.0]));
        let s = synergy_from_evaluation(&ev, &names(2), None).unwrap();
        assert_eq!(s.values[(0, 1)], 0.0);
    }
}
