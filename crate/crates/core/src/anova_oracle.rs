//! Exact Hoeffding decomposition on small discrete product grids.
//!
//! Components are computed by inclusion–exclusion of conditional means,
//! f_S(x_S) = Σ_{R⊆S} (−1)^{|S|−|R|} E[f | x_R], with no kernels or solves.
//! The arithmetic is generic over `num_traits::Num`, so it runs exactly on
//! rationals as well as on floats.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_traits::{Num, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decomposition::{fit, FitConfig};
use crate::error::{Error, Result};
use crate::kernel_maps::KernelKind;
use crate::subset::SubsetId;

pub const MAX_DIM: usize = 3;
pub const MAX_LEVELS: usize = 8;
const PROB_TOL: f64 = 1e-12;

/// A function tabulated on a full product grid with per-feature marginals.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteGridFunction<T> {
    levels: Vec<Vec<f64>>,
    probs: Vec<Vec<T>>,
    /// Row-major over the grid, last feature fastest.
    table: Vec<T>,
}

/// One component f_S as a table over the levels of S's members (row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentTable<T> {
    pub subset: SubsetId,
    pub shape: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Clone> ComponentTable<T> {
    /// Value at a full grid cell (level index per feature).
    pub fn at_cell(&self, cell: &[usize]) -> T {
        let mut idx = 0;
        for (k, &j) in self.subset.members().iter().enumerate() {
            idx = idx * self.shape[k] + cell[j];
        }
        self.values[idx].clone()
    }
}

fn to_f64<T: ToPrimitive>(v: &T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

impl<T: Num + Clone + ToPrimitive> DiscreteGridFunction<T> {
    pub fn new(levels: Vec<Vec<f64>>, probs: Vec<Vec<T>>, table: Vec<T>) -> Result<Self> {
        let d = levels.len();
        if d == 0 || d > MAX_DIM {
            return Err(Error::Size(format!("grid dimension must be 1..={MAX_DIM}, got {d}")));
        }
        if probs.len() != d {
            return Err(Error::Config(format!("{} marginals for {d} features", probs.len())));
        }
        for (j, (lv, p)) in levels.iter().zip(&probs).enumerate() {
            if lv.is_empty() || lv.len() > MAX_LEVELS {
                return Err(Error::Size(format!("feature {j}: 1..={MAX_LEVELS} levels required, got {}", lv.len())));
            }
            if lv.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("feature {j}: non-finite level")));
            }
            let mut sorted = lv.clone();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            if sorted.len() != lv.len() {
                return Err(Error::Config(format!("feature {j}: levels must be distinct")));
            }
            if p.len() != lv.len() {
                return Err(Error::Config(format!("feature {j}: {} probabilities for {} levels", p.len(), lv.len())));
            }
            if p.iter().any(|v| !(to_f64(v) >= 0.0)) {
                return Err(Error::Config(format!("feature {j}: negative probability")));
            }
            let total = p.iter().cloned().fold(T::zero(), |a, b| a + b);
            if (to_f64(&total) - 1.0).abs() > PROB_TOL {
                return Err(Error::Config(format!("feature {j}: probabilities sum to {}", to_f64(&total))));
            }
        }
        let cells: usize = levels.iter().map(Vec::len).product();
        if table.len() != cells {
            return Err(Error::Config(format!("table has {} entries for {cells} grid cells", table.len())));
        }
        Ok(Self { levels, probs, table })
    }

    /// Build from a joint weight table, which must factor into its marginals.
    pub fn from_joint_weights(levels: Vec<Vec<f64>>, joint: Vec<T>, table: Vec<T>) -> Result<Self> {
        let shape: Vec<usize> = levels.iter().map(Vec::len).collect();
        let cells: usize = shape.iter().product();
        if joint.len() != cells {
            return Err(Error::Config(format!("joint weights have {} entries for {cells} cells", joint.len())));
        }
        let total = joint.iter().cloned().fold(T::zero(), |a, b| a + b);
        if !(to_f64(&total) > 0.0) {
            return Err(Error::Config("joint weights must have positive sum".into()));
        }
        let joint: Vec<T> = joint.into_iter().map(|w| w / total.clone()).collect();
        let mut probs: Vec<Vec<T>> = shape.iter().map(|&l| vec![T::zero(); l]).collect();
        for (c, w) in joint.iter().enumerate() {
            for (j, &l) in unravel(c, &shape).iter().enumerate() {
                probs[j][l] = probs[j][l].clone() + w.clone();
            }
        }
        for (c, w) in joint.iter().enumerate() {
            let cell = unravel(c, &shape);
            let prod = cell.iter().enumerate().fold(T::one(), |a, (j, &l)| a * probs[j][l].clone());
            if (to_f64(&prod) - to_f64(w)).abs() > PROB_TOL {
                return Err(Error::Config(format!("weights are not a product measure (cell {cell:?})")));
            }
        }
        Self::new(levels, probs, table)
    }

    pub fn dim(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    pub fn probs(&self) -> &[Vec<T>] {
        &self.probs
    }

    pub fn table(&self) -> &[T] {
        &self.table
    }

    pub fn shape(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }

    pub fn n_cells(&self) -> usize {
        self.table.len()
    }

    /// Level indices of cell `c`.
    pub fn cell(&self, c: usize) -> Vec<usize> {
        unravel(c, &self.shape())
    }

    /// Product probability of cell `c`.
    pub fn cell_weight(&self, c: usize) -> T {
        self.cell(c).iter().enumerate().fold(T::one(), |a, (j, &l)| a * self.probs[j][l].clone())
    }

    pub fn to_f64(&self) -> DiscreteGridFunction<f64> {
        DiscreteGridFunction {
            levels: self.levels.clone(),
            probs: self.probs.iter().map(|p| p.iter().map(to_f64).collect()).collect(),
            table: self.table.iter().map(to_f64).collect(),
        }
    }
}

impl DiscreteGridFunction<f64> {
    /// Seeded random instance: random levels, marginals and table values.
    pub fn random(seed: u64, dim: usize, max_levels: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut levels = Vec::with_capacity(dim);
        let mut probs = Vec::with_capacity(dim);
        for _ in 0..dim {
            let l = rng.random_range(2..=max_levels.max(2));
            let base: f64 = rng.random_range(-2.0..2.0);
            let mut lv = Vec::with_capacity(l);
            let mut v = base;
            for _ in 0..l {
                v += rng.random_range(0.25..1.0);
                lv.push(v);
            }
            let raw: Vec<f64> = (0..l).map(|_| rng.random_range(0.2..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let mut p: Vec<f64> = raw.iter().map(|r| r / total).collect();
            let head: f64 = p[..l - 1].iter().sum();
            p[l - 1] = 1.0 - head;
            levels.push(lv);
            probs.push(p);
        }
        let cells: usize = levels.iter().map(Vec::len).product();
        let table = (0..cells).map(|_| rng.random_range(-3.0..3.0)).collect();
        Self::new(levels, probs, table)
    }

    /// Grid cells as a data matrix (one row per cell).
    pub fn design(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(self.n_cells(), d, |c, j| self.levels[j][self.cell(c)[j]])
    }
}

fn unravel(mut c: usize, shape: &[usize]) -> Vec<usize> {
    let mut cell = vec![0; shape.len()];
    for j in (0..shape.len()).rev() {
        cell[j] = c % shape[j];
        c /= shape[j];
    }
    cell
}

fn sub_index(cell: &[usize], members: &[usize], shape: &[usize]) -> usize {
    members.iter().fold(0, |idx, &j| idx * shape[j] + cell[j])
}

/// Exact functional ANOVA components for every subset (including ∅).
pub fn exact_anova<T: Num + Clone + ToPrimitive>(f: &DiscreteGridFunction<T>) -> BTreeMap<SubsetId, ComponentTable<T>> {
    let d = f.dim();
    let shape = f.shape();
    let full = SubsetId::new((0..d).collect::<Vec<_>>());
    let all = full.subsets();

    // conditional means E[f | x_R] tabulated over R's levels
    let mut cond: BTreeMap<SubsetId, Vec<T>> = BTreeMap::new();
    for r in &all {
        let size: usize = r.members().iter().map(|&j| shape[j]).product();
        let mut g = vec![T::zero(); size];
        for c in 0..f.n_cells() {
            let cell = unravel(c, &shape);
            let mut w = T::one();
            for j in 0..d {
                if !r.contains(j) {
                    w = w * f.probs[j][cell[j]].clone();
                }
            }
            let k = sub_index(&cell, r.members(), &shape);
            g[k] = g[k].clone() + w * f.table[c].clone();
        }
        cond.insert(r.clone(), g);
    }

    let mut out = BTreeMap::new();
    for s in &all {
        let sshape: Vec<usize> = s.members().iter().map(|&j| shape[j]).collect();
        let size: usize = sshape.iter().product();
        let mut values = Vec::with_capacity(size);
        for idx in 0..size {
            let local = unravel(idx, &sshape);
            let mut cell = vec![0; d];
            for (k, &j) in s.members().iter().enumerate() {
                cell[j] = local[k];
            }
            let mut acc = T::zero();
            for r in s.subsets() {
                let v = cond[&r][sub_index(&cell, r.members(), &shape)].clone();
                if (s.len() - r.len()) % 2 == 0 {
                    acc = acc + v;
                } else {
                    acc = acc - v;
                }
            }
            values.push(acc);
        }
        out.insert(s.clone(), ComponentTable { subset: s.clone(), shape: sshape, values });
    }
    out
}

/// Engine settings under which the fit reproduces the exact decomposition.
pub fn oracle_engine_config(f: &DiscreteGridFunction<f64>) -> FitConfig<f64> {
    let d = f.dim();
    let max_levels = f.shape().into_iter().max().unwrap_or(1);
    FitConfig {
        kernel: KernelKind::Delta,
        rank_main: max_levels,
        rank_pair: max_levels * max_levels,
        ridge_lambda: 1e-10,
        forced_pairs: Some((0..d).flat_map(|i| ((i + 1)..d).map(move |j| (i, j))).collect()),
        ..FitConfig::default()
    }
}

/// Max |engine f_S − exact f_S| over grid cells and subsets of size ≤ 2, plus f₀.
///
/// The fit sample is the full grid with product-probability row weights; the
/// grid is replicated when it has fewer cells than the engine's minimum rows.
pub fn compare_to_engine(f: &DiscreteGridFunction<f64>, config: &FitConfig<f64>) -> Result<f64> {
    let exact = exact_anova(f);
    let cells = f.n_cells();
    let reps = crate::decomposition::MIN_ROWS.div_ceil(cells);
    let grid = f.design();
    let n = cells * reps;
    let x = DMatrix::from_fn(n, f.dim(), |a, j| grid[(a % cells, j)]);
    let y: Vec<f64> = (0..n).map(|a| f.table()[a % cells]).collect();
    let weights: Vec<f64> = (0..n).map(|a| f.cell_weight(a % cells)).collect();
    let mut cfg = config.clone();
    cfg.weights = Some(weights);
    let model = fit(&x, &y, &cfg)?;
    let ev = model.evaluate(&grid)?;

    let mut worst = (model.baseline - exact[&SubsetId::empty()].values[0]).abs();
    for (k, s) in ev.subsets.iter().enumerate() {
        let table = &exact[s];
        for c in 0..cells {
            worst = worst.max((ev.values[(c, k)] - table.at_cell(&f.cell(c))).abs());
        }
    }
    // subsets of size ≤ 2 that the engine did not model must vanish exactly
    for (s, table) in &exact {
        if !s.is_empty() && s.len() <= 2 && ev.index_of(s).is_none() {
            worst = worst.max(table.values.iter().fold(0.0, |a: f64, v| a.max(v.abs())));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn xor_grid() -> DiscreteGridFunction<f64> {
        let levels = vec![vec![-1.0, 1.0], vec![-1.0, 1.0]];
        let probs = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let table = vec![1.0, -1.0, -1.0, 1.0];
        DiscreteGridFunction::new(levels, probs, table).unwrap()
    }

    #[test]
    fn product_on_signs() {
        let f = xor_grid();
        let a = exact_anova(&f);
        assert_eq!(a[&SubsetId::empty()].values, vec![0.0]);
        assert_eq!(a[&SubsetId::singleton(0)].values, vec![0.0, 0.0]);
        assert_eq!(a[&SubsetId::singleton(1)].values, vec![0.0, 0.0]);
        assert_eq!(a[&SubsetId::pair(0, 1)].values, vec![1.0, -1.0, -1.0, 1.0]);
        let gap = compare_to_engine(&f, &oracle_engine_config(&f)).unwrap();
        assert!(gap <= 1e-6, "{gap}");
    }

    #[test]
    fn constant_function() {
        let f: DiscreteGridFunction<f64> = DiscreteGridFunction::new(vec![vec![0.0, 1.0, 2.0], vec![5.0, 6.0]], vec![vec![0.2, 0.3, 0.5], vec![0.5, 0.5]], vec![2.5; 6]).unwrap();
        let a = exact_anova(&f);
        assert!((a[&SubsetId::empty()].values[0] - 2.5).abs() < 1e-15);
        for (s, t) in &a {
            if !s.is_empty() {
                assert!(t.values.iter().all(|v| v.abs() < 1e-15), "{s}");
            }
        }
        let gap = compare_to_engine(&f, &oracle_engine_config(&f)).unwrap();
        assert!(gap <= 1e-10, "{gap}");
    }

    #[test]
    fn additive_function_has_no_interaction_exactly() {
        let g = [q(1, 3), q(-2, 1), q(5, 7)];
        let h = [q(3, 2), q(-1, 4)];
        let table: Vec<BigRational> = (0..6).map(|c| g[c / 2].clone() + h[c % 2].clone()).collect();
        let probs = vec![vec![q(1, 6), q(1, 2), q(1, 3)], vec![q(2, 5), q(3, 5)]];
        let f = DiscreteGridFunction::new(vec![vec![0.0, 1.0, 2.0], vec![0.0, 1.0]], probs, table).unwrap();
        let a = exact_anova(&f);
        assert!(a[&SubsetId::pair(0, 1)].values.iter().all(|v| *v == q(0, 1)));
    }

    #[test]
    fn rational_components_are_exact() {
        let probs = vec![vec![q(1, 4), q(3, 4)], vec![q(1, 3), q(1, 3), q(1, 3)], vec![q(1, 2), q(1, 2)]];
        let table: Vec<BigRational> = (0..12).map(|c| q((c as i64 * 7) % 11 - 5, 1 + (c as i64 % 3))).collect();
        let levels = vec![vec![0.0, 1.0], vec![0.0, 1.0, 2.0], vec![0.0, 1.0]];
        let f = DiscreteGridFunction::new(levels, probs, table).unwrap();
        let a = exact_anova(&f);
        // completeness, exactly
        for c in 0..f.n_cells() {
            let cell = f.cell(c);
            let sum = a.values().fold(q(0, 1), |acc, t| acc + t.at_cell(&cell));
            assert_eq!(sum, f.table()[c]);
        }
        // zero partial means, exactly
        let shape = f.shape();
        for (s, t) in &a {
            for &i in s.members() {
                for c in 0..f.n_cells() {
                    let cell = f.cell(c);
                    if cell[i] != 0 {
                        continue;
                    }
                    let mut m = q(0, 1);
                    for l in 0..shape[i] {
                        let mut moved = cell.clone();
                        moved[i] = l;
                        m = m + f.probs()[i][l].clone() * t.at_cell(&moved);
                    }
                    assert_eq!(m, q(0, 1), "{s} along {i}");
                }
            }
        }
    }

    #[test]
    fn float_oracle_properties() {
        for seed in 0..5 {
            let f = DiscreteGridFunction::random(seed, 3, 4).unwrap();
            let a = exact_anova(&f);
            for c in 0..f.n_cells() {
                let cell = f.cell(c);
                let sum: f64 = a.values().map(|t| t.at_cell(&cell)).sum();
                assert!((sum - f.table()[c]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn random_three_way_grid_matches_engine() {
        let levels = vec![vec![0.0, 1.0, 2.0]; 3];
        let probs = vec![vec![1.0 / 3.0; 3]; 3];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let table: Vec<f64> = (0..27).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut probs = probs;
        for p in probs.iter_mut() {
            p[2] = 1.0 - p[0] - p[1];
        }
        let f = DiscreteGridFunction::new(levels, probs, table).unwrap();
        let gap = compare_to_engine(&f, &oracle_engine_config(&f)).unwrap();
        assert!(gap <= 1e-6, "{gap}");
    }

    #[test]
    fn non_product_weights_rejected() {
        let levels = vec![vec![0.0, 1.0], vec![0.0, 1.0]];
        let joint = vec![0.4, 0.1, 0.1, 0.4];
        let err = DiscreteGridFunction::from_joint_weights(levels.clone(), joint, vec![0.0; 4]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let f: DiscreteGridFunction<f64> = DiscreteGridFunction::from_joint_weights(levels, vec![0.06, 0.14, 0.24, 0.56], vec![0.0; 4]).unwrap();
        assert!((f.probs()[0][0] - 0.2).abs() < 1e-12);
        assert!((f.probs()[1][1] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn grid_limits() {
        let big = vec![(0..9).map(f64::from).collect::<Vec<_>>()];
        assert!(matches!(DiscreteGridFunction::new(big, vec![vec![1.0 / 9.0; 9]], vec![0.0; 9]), Err(Error::Size(_))));
        let four = vec![vec![0.0, 1.0]; 4];
        assert!(matches!(DiscreteGridFunction::new(four, vec![vec![0.5, 0.5]; 4], vec![0.0; 16]), Err(Error::Size(_))));
        let bad = DiscreteGridFunction::new(vec![vec![0.0, 1.0]], vec![vec![0.5, 0.6]], vec![0.0; 2]);
        assert!(matches!(bad, Err(Error::Config(_))));
    }
}
