//! Interaction pair screening.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::design::{column_variances, pair_columns, product_columns};
use super::FitConfig;
use crate::kernel_maps::FeatureMap;
use crate::linalg::{solve_ridge, weighted_cross};
use crate::scalar::Real;

/// Candidate pair with its screening score.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairScore<T> {
    pub pair: (usize, usize),
    pub score: T,
}

/// Score every non-degenerate pair by the weighted squared norm of the
/// residual's ridge projection onto the pair's rank-capped product map.
pub fn score_pairs<T: Real>(
    main_maps: &[FeatureMap<T>],
    residual: &[T],
    weights: &[T],
    rank_pair: usize,
    lambda: T,
) -> Vec<PairScore<T>> {
    let d = main_maps.len();
    let candidates: Vec<(usize, usize)> = (0..d)
        .flat_map(|i| ((i + 1)..d).map(move |j| (i, j)))
        .filter(|&(i, j)| !main_maps[i].degenerate && !main_maps[j].degenerate)
        .collect();
    let r = DMatrix::from_column_slice(residual.len(), 1, residual);
    let variances: Vec<Vec<T>> = main_maps.iter().map(|m| column_variances(&m.values, weights)).collect();
    let lambda = lambda.max(T::lit(1e-10));
    candidates
        .par_iter()
        .map(|&(i, j)| {
            let cols = pair_columns(&variances[i], &variances[j], rank_pair);
            let p = product_columns(&main_maps[i].values, &main_maps[j].values, &cols);
            let gram = weighted_cross(&p, &p, weights);
            let rhs = weighted_cross(&p, &r, weights);
            let score = match solve_ridge(&gram, &rhs, lambda) {
                Ok(beta) => {
                    let fitted: DVector<T> = (&p * beta).column(0).into_owned();
                    fitted.iter().zip(weights).fold(T::zero(), |acc, (&f, &w)| acc + w * f * f)
                }
                Err(_) => T::zero(),
            };
            PairScore { pair: (i, j), score }
        })
        .collect()
}

/// Top pairs by score; ties go to the lexicographically smaller pair.
pub fn rank_pairs<T: Real>(mut scores: Vec<PairScore<T>>, max_pairs: usize) -> Vec<(usize, usize)> {
    scores.sort_by(|a, b| b.score.total_cmp_real(&a.score).then(a.pair.cmp(&b.pair)));
    scores.into_iter().take(max_pairs).map(|s| s.pair).collect()
}

/// Select up to `max_pairs` interaction pairs from the stage-1 residual.
pub fn select_pairs<T: Real>(
    main_maps: &[FeatureMap<T>],
    residual: &[T],
    weights: &[T],
    config: &FitConfig<T>,
) -> Vec<(usize, usize)> {
    let max_pairs = config.effective_max_pairs(main_maps.len());
    if max_pairs == 0 {
        return Vec::new();
    }
    let scores = score_pairs(main_maps, residual, weights, config.rank_pair, config.ridge_lambda);
    rank_pairs(scores, max_pairs)
}
