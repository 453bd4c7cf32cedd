//! Per-feature base kernels and centered Nyström feature maps.
//!
//! Each feature j gets a map Φⱼ(x) = (k(x, t₁), …, k(x, t_r)) · G^{-1/2} V − m,
//! where t are seeded landmarks drawn from the background column, G is the
//! landmark Gram matrix (eigenvalues floored), V rotates onto the principal
//! axes of the centered background map and m is the background mean of the
//! uncentered map. The rotation leaves Φⱼ Φⱼᵀ unchanged. Subtracting m makes every column zero-mean under the
//! (weighted) background measure, which is the empirical counterpart of the
//! unit-integral normalization of the base kernels.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inverse_sqrt_floored, normalized_weights, symmetrize, weighted_column_means, weighted_cross};
use crate::scalar::Real;

/// Columns longer than this are subsampled before the median heuristic.
pub const MEDIAN_SUBSAMPLE: usize = 2000;

/// Default main-effect rank cap.
pub const DEFAULT_RANK_MAIN: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rbf,
    Laplace,
    #[serde(rename = "poly")]
    Polynomial,
    /// Kronecker delta on exact values; used for discrete grids.
    Delta,
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rbf" | "gaussian" => Ok(KernelKind::Rbf),
            "laplace" | "laplacian" => Ok(KernelKind::Laplace),
            "poly" | "polynomial" => Ok(KernelKind::Polynomial),
            "delta" => Ok(KernelKind::Delta),
            other => Err(Error::Config(format!("unknown kernel `{other}`"))),
        }
    }
}

/// A fully parameterized one-dimensional base kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec<T> {
    pub kind: KernelKind,
    /// Length-scale σ for RBF/Laplace.
    pub bandwidth: T,
    /// Polynomial degree.
    pub degree: u32,
    /// Polynomial offset.
    pub offset: T,
}

impl<T: Real> KernelSpec<T> {
    pub fn rbf(bandwidth: T) -> Self {
        Self { kind: KernelKind::Rbf, bandwidth, degree: 1, offset: T::zero() }
    }

    pub fn laplace(bandwidth: T) -> Self {
        Self { kind: KernelKind::Laplace, bandwidth, degree: 1, offset: T::zero() }
    }

    pub fn polynomial(degree: u32, offset: T) -> Self {
        Self { kind: KernelKind::Polynomial, bandwidth: T::one(), degree, offset }
    }

    pub fn delta() -> Self {
        Self { kind: KernelKind::Delta, bandwidth: T::one(), degree: 1, offset: T::zero() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth.is_finite_real() && self.bandwidth > T::zero()) {
            return Err(Error::Config(format!("kernel bandwidth must be positive, got {}", self.bandwidth)));
        }
        if self.degree < 1 {
            return Err(Error::Config("polynomial degree must be at least 1".into()));
        }
        if !(self.offset.is_finite_real() && self.offset >= T::zero()) {
            return Err(Error::Config(format!("polynomial offset must be >= 0, got {}", self.offset)));
        }
        Ok(())
    }

    /// k(x, t) without input checks.
    #[inline]
    pub fn eval(&self, x: T, t: T) -> T {
        match self.kind {
            KernelKind::Rbf => {
                let d = x - t;
                (-(d * d) / (T::lit(2.0) * self.bandwidth * self.bandwidth)).exp()
            }
            KernelKind::Laplace => (-(x - t).abs() / self.bandwidth).exp(),
            KernelKind::Polynomial => (x * t + self.offset).powi(self.degree as i32),
            KernelKind::Delta => {
                if x == t {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

/// Checked kernel evaluation.
pub fn eval_kernel<T: Real>(spec: &KernelSpec<T>, x: T, t: T) -> Result<T> {
    spec.validate()?;
    if !x.is_finite_real() || !t.is_finite_real() {
        return Err(Error::Domain(format!("kernel arguments must be finite, got ({x}, {t})")));
    }
    Ok(spec.eval(x, t))
}

/// Median of all pairwise absolute differences; 1.0 for a constant column.
///
/// Columns longer than [`MEDIAN_SUBSAMPLE`] are subsampled (without
/// replacement, seeded) first.
pub fn median_bandwidth<T: Real>(column: &[T], seed: u64) -> Result<T> {
    if column.len() < 2 {
        return Err(Error::Config(format!(
            "median heuristic needs at least two values, got {}",
            column.len()
        )));
    }
    if column.iter().any(|v| !v.is_finite_real()) {
        return Err(Error::Data("median heuristic on non-finite values".into()));
    }
    let values: Vec<T> = if column.len() > MEDIAN_SUBSAMPLE {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = index::sample(&mut rng, column.len(), MEDIAN_SUBSAMPLE).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| column[i]).collect()
    } else {
        column.to_vec()
    };
    let n = values.len();
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in (a + 1)..n {
            dists.push((values[a] - values[b]).abs());
        }
    }
    let median = median_in_place(&mut dists);
    if median > T::zero() {
        Ok(median)
    } else {
        Ok(T::one())
    }
}

fn median_in_place<T: Real>(v: &mut [T]) -> T {
    let m = v.len();
    let mid = m / 2;
    let (_, upper, _) = v.select_nth_unstable_by(mid, |a, b| a.total_cmp_real(b));
    let upper = *upper;
    if m % 2 == 1 {
        upper
    } else {
        // lower middle is the max of the left partition
        let lower = v[..mid].iter().copied().reduce(|a, b| a.max(b)).unwrap_or(upper);
        (lower + upper) * T::lit(0.5)
    }
}

/// Landmark values for one feature.
#[derive(Clone, Debug, PartialEq)]
pub struct Landmarks<T> {
    pub feature_index: usize,
    /// Ascending, distinct background values.
    pub points: Vec<T>,
    pub seed: u64,
}

impl<T> Landmarks<T> {
    pub fn rank(&self) -> usize {
        self.points.len()
    }
}

/// Seed used for a feature's landmark draw.
pub fn feature_seed(seed: u64, feature_index: usize) -> u64 {
    seed.wrapping_add(feature_index as u64)
}

/// Uniform draw without replacement among the distinct values of `column`.
///
/// The effective rank is `min(rank, #distinct values)`; duplicates would only
/// add exactly collinear landmark columns.
pub fn select_landmarks<T: Real>(feature_index: usize, column: &[T], rank: usize, seed: u64) -> Result<Landmarks<T>> {
    if rank == 0 {
        return Err(Error::Config("rank must be at least 1".into()));
    }
    if rank > column.len() {
        return Err(Error::Config(format!(
            "rank {rank} exceeds the background size {} for feature {feature_index}",
            column.len()
        )));
    }
    let mut distinct: Vec<T> = column.to_vec();
    distinct.sort_unstable_by(|a, b| a.total_cmp_real(b));
    distinct.dedup();
    let seed = feature_seed(seed, feature_index);
    let r = rank.min(distinct.len());
    let points = if r == distinct.len() {
        distinct
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = index::sample(&mut rng, distinct.len(), r).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| distinct[i]).collect()
    };
    Ok(Landmarks { feature_index, points, seed })
}

/// Centered low-rank kernel map of one feature over a background sample.
#[derive(Clone, Debug)]
pub struct FeatureMap<T: Real> {
    pub feature_index: usize,
    pub kernel: KernelSpec<T>,
    pub landmarks: Landmarks<T>,
    /// `G^{-1/2} V` (r×k): floored symmetric inverse root, rotated so the
    /// centered columns are uncorrelated and ordered by background variance.
    /// Directions with variance below `eps` times the leading one are dropped.
    pub whitening: DMatrix<T>,
    /// Background means of the uncentered map (length k).
    pub column_means: DVector<T>,
    /// Centered map on the background sample (n×k).
    pub values: DMatrix<T>,
    /// Constant feature: the map is identically zero.
    pub degenerate: bool,
}

impl<T: Real> FeatureMap<T> {
    /// Width k of the map.
    pub fn rank(&self) -> usize {
        self.whitening.ncols()
    }

    /// Uncentered map `C · G^{-1/2} V` with a fixed accumulation order.
    pub fn raw_map(&self, column: &[T]) -> DMatrix<T> {
        raw_map(&self.kernel, &self.landmarks.points, &self.whitening, column)
    }

    /// Out-of-sample evaluation against the stored background statistics.
    pub fn apply(&self, column: &[T]) -> Result<DMatrix<T>> {
        if let Some(pos) = column.iter().position(|v| !v.is_finite_real()) {
            return Err(Error::Data(format!(
                "non-finite value at row {pos} of feature {}",
                self.feature_index
            )));
        }
        if self.degenerate {
            return Ok(DMatrix::zeros(column.len(), self.rank()));
        }
        let mut m = self.raw_map(column);
        subtract_means(&mut m, &self.column_means);
        Ok(m)
    }
}

fn raw_map<T: Real>(kernel: &KernelSpec<T>, points: &[T], whitening: &DMatrix<T>, column: &[T]) -> DMatrix<T> {
    let n = column.len();
    let r = whitening.ncols();
    let mut out = DMatrix::zeros(n, r);
    let mut cross = vec![T::zero(); points.len()];
    for (a, &x) in column.iter().enumerate() {
        for (c, &t) in cross.iter_mut().zip(points) {
            *c = kernel.eval(x, t);
        }
        for k in 0..r {
            let mut acc = T::zero();
            for (b, &c) in cross.iter().enumerate() {
                acc += c * whitening[(b, k)];
            }
            out[(a, k)] = acc;
        }
    }
    out
}

fn subtract_means<T: Real>(m: &mut DMatrix<T>, means: &DVector<T>) {
    for (k, mut col) in m.column_iter_mut().enumerate() {
        let mu = means[k];
        for v in col.iter_mut() {
            *v -= mu;
        }
    }
}

/// Eigenvectors of the weighted covariance of the centered map, by descending
/// variance; each vector's largest-magnitude entry is made positive.
fn principal_rotation<T: Real>(raw: &DMatrix<T>, means: &DVector<T>, w: &[T]) -> DMatrix<T> {
    let r = raw.ncols();
    let mut centered = raw.clone();
    subtract_means(&mut centered, means);
    let cov = weighted_cross(&centered, &centered, w);
    let eig = SymmetricEigen::new(symmetrize(&cov));
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp_real(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]];
    let floor = top * T::machine_epsilon();
    // always keep one column so a constant feature still has a (zero) map
    let kept = order.iter().take_while(|&&k| eig.eigenvalues[k] > floor).count().max(1);
    let mut out = DMatrix::zeros(r, kept);
    for (c, &k) in order.iter().take(kept).enumerate() {
        let v = eig.eigenvectors.column(k);
        let mut lead = 0;
        for i in 1..r {
            if v[i].abs() > v[lead].abs() {
                lead = i;
            }
        }
        let sign = if v[lead] < T::zero() { -T::one() } else { T::one() };
        for i in 0..r {
            out[(i, c)] = v[i] * sign;
        }
    }
    out
}

/// Build the centered map of `column` with uniform background weights.
pub fn build_feature_map<T: Real>(
    feature_index: usize,
    column: &[T],
    spec: &KernelSpec<T>,
    rank: usize,
    seed: u64,
) -> Result<FeatureMap<T>> {
    build_feature_map_weighted(feature_index, column, None, spec, rank, seed)
}

/// Build the centered map of `column`; centering uses the given row weights.
pub fn build_feature_map_weighted<T: Real>(
    feature_index: usize,
    column: &[T],
    weights: Option<&[T]>,
    spec: &KernelSpec<T>,
    rank: usize,
    seed: u64,
) -> Result<FeatureMap<T>> {
    spec.validate()?;
    if let Some(pos) = column.iter().position(|v| !v.is_finite_real()) {
        return Err(Error::Data(format!("non-finite value at row {pos} of feature {feature_index}")));
    }
    let w = normalized_weights(column.len(), weights)?;
    let landmarks = select_landmarks(feature_index, column, rank, seed)?;
    let r = landmarks.rank();
    let gram = DMatrix::from_fn(r, r, |a, b| spec.eval(landmarks.points[a], landmarks.points[b]));
    let sym = inverse_sqrt_floored(&gram);
    let raw = raw_map(spec, &landmarks.points, &sym, column);
    let means = weighted_column_means(&raw, &w);
    let whitening = &sym * principal_rotation(&raw, &means, &w);
    let raw = raw_map(spec, &landmarks.points, &whitening, column);
    let column_means = weighted_column_means(&raw, &w);
    let degenerate = r == 1 && column.iter().all(|&v| v == landmarks.points[0]);
    let mut map = FeatureMap {
        feature_index,
        kernel: *spec,
        landmarks,
        whitening,
        column_means,
        values: DMatrix::zeros(0, 0),
        degenerate,
    };
    map.values = map.apply(column)?;
    Ok(map)
}

/// Checked out-of-sample evaluation: the kernel must match the one used at build time.
pub fn apply_feature_map<T: Real>(map: &FeatureMap<T>, spec: &KernelSpec<T>, new_column: &[T]) -> Result<DMatrix<T>> {
    if *spec != map.kernel {
        return Err(Error::Config(format!(
            "feature {} was built with {:?}, applied with {:?}",
            map.feature_index, map.kernel, spec
        )));
    }
    map.apply(new_column)
}
