//! The production decomposition pipeline.
//!
//! 1. Center the outputs at the weighted baseline f₀.
//! 2. Build a centered Nyström map per feature (main-effect blocks).
//! 3. Screen interaction pairs on the residual of a mains-only ridge fit.
//! 4. Build each selected pair's product map and residualize it against the
//!    constant and both parent main blocks.
//! 5. Solve one ridge system over all blocks and slice the coefficients
//!    into components f_S.

pub mod archive;
pub mod design;
pub mod pairs;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

pub use design::{build_pair_map, column_variances, pair_columns, PairMap};
pub use pairs::{rank_pairs, score_pairs, select_pairs, PairScore};

use crate::error::{Error, Result};
use crate::kernel_maps::{build_feature_map_weighted, feature_seed, median_bandwidth, FeatureMap, KernelKind, KernelSpec};
use crate::linalg::{normalized_weights, solve_ridge, solve_ridge_reporting, weighted_cross, weighted_dot, weighted_mean, SolveMethod};
use crate::scalar::Real;
use crate::subset::SubsetId;

pub const DEFAULT_RANK_PAIR: usize = 16;
pub const DEFAULT_LAMBDA: f64 = 1e-6;
pub const DEFAULT_SEED: u64 = 11;
/// Smallest sample `fit` accepts.
pub const MIN_ROWS: usize = 5;

/// Hyperparameters of a fit.
#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig<T> {
    pub kernel: KernelKind,
    /// Fixed RBF/Laplace length-scale; `None` uses the per-feature median heuristic.
    pub bandwidth: Option<T>,
    pub degree: u32,
    pub offset: T,
    pub rank_main: usize,
    pub rank_pair: usize,
    /// Ridge strength λ; the Gram uses weights summing to one, which is the
    /// same as `ΦᵀWΦ + λnI` with unit weights.
    pub ridge_lambda: T,
    /// `None` means `min(2d, d(d-1)/2)`.
    pub max_pairs: Option<usize>,
    /// Skip screening and model exactly these pairs.
    pub forced_pairs: Option<Vec<(usize, usize)>>,
    pub seed: u64,
    /// Optional non-negative row weights (normalized internally).
    pub weights: Option<Vec<T>>,
}

impl<T: Real> Default for FitConfig<T> {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Rbf,
            bandwidth: None,
            degree: 2,
            offset: T::one(),
            rank_main: crate::kernel_maps::DEFAULT_RANK_MAIN,
            rank_pair: DEFAULT_RANK_PAIR,
            ridge_lambda: T::lit(DEFAULT_LAMBDA),
            max_pairs: None,
            forced_pairs: None,
            seed: DEFAULT_SEED,
            weights: None,
        }
    }
}

impl<T: Real> FitConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.rank_main < 1 || self.rank_pair < 1 {
            return Err(Error::Config("ranks must be at least 1".into()));
        }
        if !(self.ridge_lambda.is_finite_real() && self.ridge_lambda >= T::zero()) {
            return Err(Error::Config(format!("ridge lambda must be >= 0, got {}", self.ridge_lambda)));
        }
        if let Some(b) = self.bandwidth {
            if !(b.is_finite_real() && b > T::zero()) {
                return Err(Error::Config(format!("bandwidth must be positive, got {b}")));
            }
        }
        if self.degree < 1 {
            return Err(Error::Config("polynomial degree must be at least 1".into()));
        }
        if !(self.offset.is_finite_real() && self.offset >= T::zero()) {
            return Err(Error::Config("polynomial offset must be >= 0".into()));
        }
        Ok(())
    }

    pub fn default_max_pairs(d: usize) -> usize {
        (2 * d).min(d * d.saturating_sub(1) / 2)
    }

    pub fn effective_max_pairs(&self, d: usize) -> usize {
        let all = d * d.saturating_sub(1) / 2;
        match &self.forced_pairs {
            Some(p) => p.len(),
            None => self.max_pairs.unwrap_or_else(|| Self::default_max_pairs(d)).min(all),
        }
    }

    /// Kernel for feature `j`, resolving the median heuristic on its column.
    pub fn kernel_for(&self, column: &[T], j: usize) -> Result<KernelSpec<T>> {
        let spec = match self.kernel {
            KernelKind::Rbf | KernelKind::Laplace => {
                let bw = match self.bandwidth {
                    Some(b) => b,
                    None => median_bandwidth(column, feature_seed(self.seed, j))?,
                };
                KernelSpec { kind: self.kernel, bandwidth: bw, degree: 1, offset: T::zero() }
            }
            KernelKind::Polynomial => KernelSpec::polynomial(self.degree, self.offset),
            KernelKind::Delta => KernelSpec::delta(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// One fitted component f_S.
#[derive(Clone, Debug, PartialEq)]
pub struct Component<T> {
    pub subset: SubsetId,
    pub coefficients: DVector<T>,
    /// f_S on the fit sample; empty for a model loaded from an archive.
    pub train_values: Vec<T>,
    /// Weighted empirical L² norm on the fit sample.
    pub l2_norm: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics<T> {
    /// Largest normalized weighted inner product between a block (or
    /// component) and any of its lower-order terms, constant included.
    pub orthogonality_residual: T,
    /// Largest normalized inner product between two distinct main
    /// components. Not enforced; nonzero under dependent features.
    pub cross_main_residual: T,
    /// Weighted RMS of `y − reconstruction` on the fit sample.
    pub fit_residual_norm: T,
    /// Weighted R² of the reconstruction against `y` (`None` for constant `y`).
    pub train_r2: Option<T>,
    pub solver: SolveMethod,
    pub n_train: usize,
}

/// Frozen result of a fit.
#[derive(Clone, Debug)]
pub struct DecompositionModel<T: Real> {
    /// Config used for the fit (row weights are not retained).
    pub config: FitConfig<T>,
    pub weighted: bool,
    pub feature_names: Vec<String>,
    pub baseline: T,
    pub feature_maps: Vec<FeatureMap<T>>,
    pub pair_maps: Vec<PairMap<T>>,
    /// Mains for every feature (in order) followed by pairs in `pair_list` order.
    pub components: Vec<Component<T>>,
    pub diagnostics: Diagnostics<T>,
}

/// Component values of a model on some rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation<T: Real> {
    pub baseline: T,
    pub subsets: Vec<SubsetId>,
    /// n × (#components), columns ordered as `subsets`.
    pub values: DMatrix<T>,
    /// f₀ + Σ_S f_S per row.
    pub reconstruction: DVector<T>,
}

impl<T: Real> Evaluation<T> {
    /// Assemble from component columns; the reconstruction is summed in column order.
    pub fn from_components(baseline: T, subsets: Vec<SubsetId>, values: DMatrix<T>) -> Self {
        let n = values.nrows();
        let mut recon = DVector::from_element(n, baseline);
        for c in 0..values.ncols() {
            for a in 0..n {
                recon[a] += values[(a, c)];
            }
        }
        Self { baseline, subsets, values, reconstruction: recon }
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn index_of(&self, subset: &SubsetId) -> Option<usize> {
        self.subsets.iter().position(|s| s == subset)
    }

    pub fn component(&self, subset: &SubsetId) -> Option<Vec<T>> {
        self.index_of(subset).map(|k| self.values.column(k).iter().copied().collect())
    }

    /// Row `a`: (subset, value) pairs.
    pub fn row(&self, a: usize) -> Vec<(SubsetId, T)> {
        self.subsets.iter().cloned().zip(self.values.row(a).iter().copied()).collect()
    }
}

impl<T: Real> DecompositionModel<T> {
    pub fn n_features(&self) -> usize {
        self.feature_maps.len()
    }

    pub fn pair_list(&self) -> Vec<(usize, usize)> {
        self.pair_maps.iter().map(|p| p.pair).collect()
    }

    pub fn component(&self, subset: &SubsetId) -> Option<&Component<T>> {
        self.components.iter().find(|c| &c.subset == subset)
    }

    pub fn set_feature_names(&mut self, names: Vec<String>) -> Result<()> {
        if names.len() != self.n_features() {
            return Err(Error::Schema(format!("{} names for {} features", names.len(), self.n_features())));
        }
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != names.len() {
            return Err(Error::Schema("feature names must be unique".into()));
        }
        self.feature_names = names;
        Ok(())
    }

    pub fn evaluate(&self, x_new: &DMatrix<T>) -> Result<Evaluation<T>> {
        evaluate(self, x_new)
    }

    /// Build all blocks for new rows from the stored maps.
    fn blocks(&self, x: &DMatrix<T>) -> Result<Vec<DMatrix<T>>> {
        let mains: Vec<DMatrix<T>> = self
            .feature_maps
            .iter()
            .enumerate()
            .map(|(j, m)| m.apply(&column(x, j)))
            .collect::<Result<_>>()?;
        let mut blocks = mains;
        let pair_blocks: Vec<DMatrix<T>> = self
            .pair_maps
            .iter()
            .map(|p| p.apply(&blocks[p.pair.0], &blocks[p.pair.1]))
            .collect();
        blocks.extend(pair_blocks);
        Ok(blocks)
    }
}

fn column<T: Real>(x: &DMatrix<T>, j: usize) -> Vec<T> {
    x.column(j).iter().copied().collect()
}

/// Σ_k block[a, k] β_k per row with a fixed accumulation order.
fn block_values<T: Real>(block: &DMatrix<T>, beta: &DVector<T>) -> Vec<T> {
    (0..block.nrows())
        .map(|a| {
            let mut acc = T::zero();
            for k in 0..block.ncols() {
                acc += block[(a, k)] * beta[k];
            }
            acc
        })
        .collect()
}

fn evaluation_from_blocks<T: Real>(baseline: T, components: &[Component<T>], blocks: &[DMatrix<T>], n: usize) -> Evaluation<T> {
    let mut values = DMatrix::zeros(n, components.len());
    for (k, (c, b)) in components.iter().zip(blocks).enumerate() {
        let v = block_values(b, &c.coefficients);
        values.column_mut(k).copy_from_slice(&v);
    }
    Evaluation::from_components(baseline, components.iter().map(|c| c.subset.clone()).collect(), values)
}

/// Evaluate every component on new rows.
pub fn evaluate<T: Real>(model: &DecompositionModel<T>, x_new: &DMatrix<T>) -> Result<Evaluation<T>> {
    if x_new.ncols() != model.n_features() {
        return Err(Error::Schema(format!(
            "model has {} features, input has {} columns",
            model.n_features(),
            x_new.ncols()
        )));
    }
    let blocks = model.blocks(x_new)?;
    Ok(evaluation_from_blocks(model.baseline, &model.components, &blocks, x_new.nrows()))
}

fn check_pairs(pairs: &[(usize, usize)], d: usize) -> Result<Vec<(usize, usize)>> {
    let mut out: Vec<(usize, usize)> = Vec::with_capacity(pairs.len());
    for &(a, b) in pairs {
        if a == b || a >= d || b >= d {
            return Err(Error::Config(format!("invalid pair ({a},{b}) for {d} features")));
        }
        let p = (a.min(b), a.max(b));
        if out.contains(&p) {
            return Err(Error::Config(format!("pair ({},{}) listed twice", p.0, p.1)));
        }
        out.push(p);
    }
    Ok(out)
}

fn hcat<T: Real>(blocks: &[&DMatrix<T>], n: usize) -> DMatrix<T> {
    let p: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(n, p);
    let mut off = 0;
    for b in blocks {
        out.view_mut((0, off), (n, b.ncols())).copy_from(*b);
        off += b.ncols();
    }
    out
}

/// Fit the decomposition of outputs `y` over inputs `x`.
pub fn fit<T: Real>(x: &DMatrix<T>, y: &[T], config: &FitConfig<T>) -> Result<DecompositionModel<T>> {
    let n = x.nrows();
    let d = x.ncols();
    if n < MIN_ROWS {
        return Err(Error::Config(format!("need at least {MIN_ROWS} rows, got {n}")));
    }
    if d == 0 {
        return Err(Error::Config("no features".into()));
    }
    if y.len() != n {
        return Err(Error::Data(format!("{} outputs for {n} rows", y.len())));
    }
    if let Some(a) = y.iter().position(|v| !v.is_finite_real()) {
        return Err(Error::Data(format!("non-finite output at row {a}")));
    }
    if let Some(pos) = x.iter().position(|v| !v.is_finite_real()) {
        return Err(Error::Data(format!("non-finite input at row {}, column {}", pos % n, pos / n)));
    }
    config.validate()?;
    let w = normalized_weights(n, config.weights.as_deref())?;
    let baseline = weighted_mean(y, &w);
    let yc: Vec<T> = y.iter().map(|&v| v - baseline).collect();
    let rank_main = config.rank_main.min(n);

    let maps: Vec<FeatureMap<T>> = (0..d)
        .into_par_iter()
        .map(|j| {
            let col = column(x, j);
            let spec = config.kernel_for(&col, j)?;
            build_feature_map_weighted(j, &col, Some(&w), &spec, rank_main, config.seed)
        })
        .collect::<Result<_>>()?;

    let main_refs: Vec<&DMatrix<T>> = maps.iter().map(|m| &m.values).collect();
    let main_design = hcat(&main_refs, n);
    let yc_mat = DMatrix::from_column_slice(n, 1, &yc);

    let pairs = match &config.forced_pairs {
        Some(forced) => check_pairs(forced, d)?,
        None if config.effective_max_pairs(d) == 0 => Vec::new(),
        None => {
            let gram = weighted_cross(&main_design, &main_design, &w);
            let rhs = weighted_cross(&main_design, &yc_mat, &w);
            let beta = solve_ridge(&gram, &rhs, config.ridge_lambda)?;
            let fitted = &main_design * beta;
            let residual: Vec<T> = yc.iter().zip(fitted.iter()).map(|(&a, &b)| a - b).collect();
            select_pairs(&maps, &residual, &w, config)
        }
    };

    let built: Vec<(PairMap<T>, DMatrix<T>)> = pairs
        .par_iter()
        .map(|&(i, j)| build_pair_map(&maps[i], &maps[j], &w, config.rank_pair))
        .collect();
    let (pair_maps, pair_blocks): (Vec<PairMap<T>>, Vec<DMatrix<T>>) = built.into_iter().unzip();

    let mut blocks: Vec<DMatrix<T>> = maps.iter().map(|m| m.values.clone()).collect();
    blocks.extend(pair_blocks);
    let refs: Vec<&DMatrix<T>> = blocks.iter().collect();
    let design = hcat(&refs, n);
    let gram = weighted_cross(&design, &design, &w);
    let rhs = weighted_cross(&design, &yc_mat, &w);
    let (beta, solver) = solve_ridge_reporting(&gram, &rhs, config.ridge_lambda)?;

    let mut subsets: Vec<SubsetId> = (0..d).map(SubsetId::singleton).collect();
    subsets.extend(pairs.iter().map(|&(i, j)| SubsetId::pair(i, j)));
    let mut components = Vec::with_capacity(blocks.len());
    let mut off = 0;
    for (s, b) in subsets.into_iter().zip(&blocks) {
        let coefficients = DVector::from_iterator(b.ncols(), (off..off + b.ncols()).map(|k| beta[(k, 0)]));
        off += b.ncols();
        components.push(Component { subset: s, coefficients, train_values: Vec::new(), l2_norm: T::zero() });
    }
    let train = evaluation_from_blocks(baseline, &components, &blocks, n);
    for (k, c) in components.iter_mut().enumerate() {
        c.train_values = train.values.column(k).iter().copied().collect();
        c.l2_norm = weighted_dot(&c.train_values, &c.train_values, &w).sqrt();
    }

    let diagnostics = diagnostics(&blocks, &components, &train, y, &w, d, solver);
    let mut stored = config.clone();
    stored.weights = None;
    Ok(DecompositionModel {
        config: stored,
        weighted: config.weights.is_some(),
        feature_names: (0..d).map(|j| format!("x{j}")).collect(),
        baseline,
        feature_maps: maps,
        pair_maps,
        components,
        diagnostics,
    })
}

/// Largest |⟨a_p, b_q⟩_w| / (‖a_p‖‖b_q‖) over columns, skipping null columns.
pub(crate) fn normalized_cross<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, w: &[T]) -> T {
    let cross = weighted_cross(a, b, w);
    let na = column_norms(a, w);
    let nb = column_norms(b, w);
    let mut worst = T::zero();
    for p in 0..a.ncols() {
        for q in 0..b.ncols() {
            if na[p] > T::zero() && nb[q] > T::zero() {
                worst = worst.max(cross[(p, q)].abs() / (na[p] * nb[q]));
            }
        }
    }
    worst
}

/// Weighted column norms; columns negligible relative to the block are reported as 0.
fn column_norms<T: Real>(m: &DMatrix<T>, w: &[T]) -> Vec<T> {
    let norms: Vec<T> = m.column_iter().map(|c| weighted_dot(c.as_slice(), c.as_slice(), w).sqrt()).collect();
    let largest = norms.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let guard = largest * T::lit(1e-10);
    norms.into_iter().map(|v| if v > guard { v } else { T::zero() }).collect()
}

fn diagnostics<T: Real>(
    blocks: &[DMatrix<T>],
    components: &[Component<T>],
    train: &Evaluation<T>,
    y: &[T],
    w: &[T],
    d: usize,
    solver: SolveMethod,
) -> Diagnostics<T> {
    let n = y.len();
    let ones = DMatrix::from_element(n, 1, T::one());
    let values = &train.values;
    let value_col = |k: usize| values.columns(k, 1).into_owned();

    let mut ortho = T::zero();
    for (k, (c, b)) in components.iter().zip(blocks).enumerate() {
        ortho = ortho.max(normalized_cross(b, &ones, w));
        ortho = ortho.max(normalized_cross(&value_col(k), &ones, w));
        if c.subset.len() == 2 {
            for &parent in c.subset.members() {
                ortho = ortho.max(normalized_cross(b, &blocks[parent], w));
                ortho = ortho.max(normalized_cross(&value_col(k), &value_col(parent), w));
            }
        }
    }
    let mut cross_main = T::zero();
    for i in 0..d {
        for j in (i + 1)..d {
            cross_main = cross_main.max(normalized_cross(&value_col(i), &value_col(j), w));
        }
    }
    let resid: Vec<T> = y.iter().zip(train.reconstruction.iter()).map(|(&a, &b)| a - b).collect();
    let fit_residual_norm = weighted_dot(&resid, &resid, w).sqrt();
    let mean = weighted_mean(y, w);
    let centered: Vec<T> = y.iter().map(|&v| v - mean).collect();
    let total = weighted_dot(&centered, &centered, w);
    // total variance at rounding level of the outputs counts as constant
    let scale = y.iter().fold(T::zero(), |a, &v| a.max(v.abs()));
    let floor = T::machine_epsilon() * T::lit(64.0) * scale;
    let train_r2 = if total > floor * floor {
        Some(T::one() - fit_residual_norm * fit_residual_norm / total)
    } else {
        None
    };
    Diagnostics { orthogonality_residual: ortho, cross_main_residual: cross_main, fit_residual_norm, train_r2, solver, n_train: n }
}
