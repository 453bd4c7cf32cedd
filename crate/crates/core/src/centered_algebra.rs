//! Dense centered subset kernels K_S^(c) for small subsets.
//!
//! This is the exact construction used to check the algebra the low-rank
//! engine relies on: the Möbius relation between product and centered
//! kernels, the partial zero-mean property and the orthogonality of centered
//! kernels for distinct subsets.
//!
//! Base kernels are normalized per anchor: k̃ᵢ(x, t) = kᵢ(x, t) / cᵢ(t) with
//! cᵢ(t) the mean of kᵢ(·, t) over the sample, so every normalized column
//! integrates to one under the empirical marginal of feature i. Integrals
//! over sets of features are taken under the product of the empirical
//! marginals, ⊗ᵢ μ̂ᵢ, which is the measure the identities hold for.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernel_maps::KernelSpec;
use crate::scalar::Real;
use crate::subset::SubsetId;

/// Largest subset the dense path accepts.
pub const MAX_DENSE_SUBSET: usize = 4;
/// Largest sample the dense path accepts.
pub const MAX_DENSE_ROWS: usize = 2000;

/// Tolerance for the Möbius and partial-mean identities.
pub const IDENTITY_TOL: f64 = 1e-10;
/// Tolerance for cross-subset orthogonality.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixKind {
    /// K_S^(c).
    Centered,
    /// Plain normalized product K_S.
    Product,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct SampleTag {
    rows: usize,
    cols: usize,
    fingerprint: u64,
}

impl SampleTag {
    fn of<T: Real>(sample: &DMatrix<T>) -> Self {
        let mut h = DefaultHasher::new();
        for v in sample.iter() {
            v.as_f64().to_bits().hash(&mut h);
        }
        Self { rows: sample.nrows(), cols: sample.ncols(), fingerprint: h.finish() }
    }
}

/// K_S (or K_S^(c)) evaluated between every sample row and every anchor row.
#[derive(Clone, Debug)]
pub struct CenteredKernelMatrix<T: Real> {
    pub subset: SubsetId,
    pub kind: MatrixKind,
    /// Anchor rows t (n_t × d).
    pub anchors: DMatrix<T>,
    /// n × n_t values.
    pub values: DMatrix<T>,
    /// Normalized base matrices k̃ⱼ for j ∈ S, in member order.
    factors: Vec<DMatrix<T>>,
    sample: SampleTag,
}

impl<T: Real> CenteredKernelMatrix<T> {
    pub fn factor(&self, feature: usize) -> Option<&DMatrix<T>> {
        self.subset.members().iter().position(|&m| m == feature).map(|k| &self.factors[k])
    }

    fn check_sample(&self, sample: &DMatrix<T>) -> Result<()> {
        if SampleTag::of(sample) != self.sample {
            return Err(Error::Config("matrix was built on a different sample".into()));
        }
        Ok(())
    }

    /// Signed terms (sign, R) of the matrix as a sum of products.
    fn terms(&self) -> Vec<(T, SubsetId)> {
        match self.kind {
            MatrixKind::Product => vec![(T::one(), self.subset.clone())],
            MatrixKind::Centered => self
                .subset
                .subsets()
                .into_iter()
                .map(|r| (mobius_sign::<T>(self.subset.len() - r.len()), r))
                .collect(),
        }
    }
}

fn mobius_sign<T: Real>(gap: usize) -> T {
    if gap % 2 == 0 {
        T::one()
    } else {
        -T::one()
    }
}

fn check_inputs<T: Real>(sample: &DMatrix<T>, anchors: &DMatrix<T>, subset: &SubsetId, specs: &[KernelSpec<T>]) -> Result<()> {
    let d = sample.ncols();
    if anchors.ncols() != d {
        return Err(Error::Config(format!("anchors have {} columns, sample has {d}", anchors.ncols())));
    }
    if specs.len() != d {
        return Err(Error::Config(format!("{} kernel specs for {d} features", specs.len())));
    }
    if let Some(m) = subset.max_feature() {
        if m >= d {
            return Err(Error::Config(format!("subset {subset} references feature {m}, data has {d}")));
        }
    }
    for j in subset.members() {
        specs[*j].validate()?;
    }
    if sample.iter().chain(anchors.iter()).any(|v| !v.is_finite_real()) {
        return Err(Error::Data("non-finite values in sample or anchors".into()));
    }
    Ok(())
}

/// k̃ⱼ between sample rows and anchors, each anchor column scaled to sample-mean 1.
pub fn normalized_base_matrix<T: Real>(
    sample: &DMatrix<T>,
    anchors: &DMatrix<T>,
    feature: usize,
    spec: &KernelSpec<T>,
) -> Result<DMatrix<T>> {
    let n = sample.nrows();
    let nt = anchors.nrows();
    let mut m = DMatrix::from_fn(n, nt, |a, b| spec.eval(sample[(a, feature)], anchors[(b, feature)]));
    let inv_n = T::one() / T::from_usize_lossy(n);
    for (b, mut col) in m.column_iter_mut().enumerate() {
        let mean = col.iter().fold(T::zero(), |acc, &v| acc + v) * inv_n;
        if !(mean.abs() > T::zero()) {
            return Err(Error::Config(format!(
                "kernel of feature {feature} integrates to zero at anchor {b}; cannot normalize"
            )));
        }
        col /= mean;
    }
    Ok(m)
}

fn factors_for<T: Real>(
    sample: &DMatrix<T>,
    anchors: &DMatrix<T>,
    subset: &SubsetId,
    specs: &[KernelSpec<T>],
) -> Result<Vec<DMatrix<T>>> {
    subset
        .members()
        .iter()
        .map(|&j| normalized_base_matrix(sample, anchors, j, &specs[j]))
        .collect()
}

fn product_from_factors<T: Real>(factors: &[&DMatrix<T>], n: usize, nt: usize) -> DMatrix<T> {
    let mut out = DMatrix::from_element(n, nt, T::one());
    for f in factors {
        out.component_mul_assign(f);
    }
    out
}

/// Normalized product kernel K_S = ∏_{i∈S} k̃ᵢ between sample and anchors.
pub fn product_kernel_matrix<T: Real>(
    sample: &DMatrix<T>,
    anchors: &DMatrix<T>,
    subset: &SubsetId,
    specs: &[KernelSpec<T>],
) -> Result<DMatrix<T>> {
    if subset.is_empty() {
        return Err(Error::Config("product kernel needs a non-empty subset; K_∅ is the all-ones matrix".into()));
    }
    check_inputs(sample, anchors, subset, specs)?;
    let factors = factors_for(sample, anchors, subset, specs)?;
    let refs: Vec<&DMatrix<T>> = factors.iter().collect();
    Ok(product_from_factors(&refs, sample.nrows(), anchors.nrows()))
}

fn dense_guard(n: usize, subset: &SubsetId) -> Result<()> {
    if subset.len() > MAX_DENSE_SUBSET {
        return Err(Error::Size(format!(
            "dense path supports |S| <= {MAX_DENSE_SUBSET}, got {}; use the low-rank engine",
            subset.len()
        )));
    }
    if n > MAX_DENSE_ROWS {
        return Err(Error::Size(format!("dense path supports n <= {MAX_DENSE_ROWS}, got {n}")));
    }
    Ok(())
}

/// K_S^(c) = Σ_{R⊆S} (−1)^{|S|−|R|} K_R, with K_∅ = 1.
pub fn centered_kernel_matrix<T: Real>(
    sample: &DMatrix<T>,
    anchors: &DMatrix<T>,
    subset: &SubsetId,
    specs: &[KernelSpec<T>],
) -> Result<CenteredKernelMatrix<T>> {
    build(sample, anchors, subset, specs, MatrixKind::Centered)
}

/// The plain product K_S wrapped for the same checks (used as a contrast).
pub fn product_kernel_as_matrix<T: Real>(
    sample: &DMatrix<T>,
    anchors: &DMatrix<T>,
    subset: &SubsetId,
    specs: &[KernelSpec<T>],
) -> Result<CenteredKernelMatrix<T>> {
    build(sample, anchors, subset, specs, MatrixKind::Product)
}

fn build<T: Real>(
    sample: &DMatrix<T>,
    anchors: &DMatrix<T>,
    subset: &SubsetId,
    specs: &[KernelSpec<T>],
    kind: MatrixKind,
) -> Result<CenteredKernelMatrix<T>> {
    dense_guard(sample.nrows(), subset)?;
    check_inputs(sample, anchors, subset, specs)?;
    let n = sample.nrows();
    let nt = anchors.nrows();
    let factors = factors_for(sample, anchors, subset, specs)?;
    let mut m = CenteredKernelMatrix {
        subset: subset.clone(),
        kind,
        anchors: anchors.clone(),
        values: DMatrix::zeros(n, nt),
        factors,
        sample: SampleTag::of(sample),
    };
    let mut values = DMatrix::zeros(n, nt);
    for (sign, r) in m.terms() {
        let refs: Vec<&DMatrix<T>> = r.members().iter().map(|&j| m.factor(j).expect("member")).collect();
        let term = product_from_factors(&refs, n, nt);
        values += term * sign;
    }
    m.values = values;
    Ok(m)
}

/// K_S^(c) from the recursive definition K_S − Σ_{R⊊S} K_R^(c).
///
/// Independent of the closed Möbius form; used to cross-check it.
pub fn centered_by_recursion<T: Real>(
    sample: &DMatrix<T>,
    anchors: &DMatrix<T>,
    subset: &SubsetId,
    specs: &[KernelSpec<T>],
) -> Result<DMatrix<T>> {
    dense_guard(sample.nrows(), subset)?;
    check_inputs(sample, anchors, subset, specs)?;
    let n = sample.nrows();
    let nt = anchors.nrows();
    let lattice = subset.subsets();
    // lattice[mask] has members selected by mask bits; proper subsets of mask
    // are exactly its submasks, all of which are smaller numbers.
    let mut centered: Vec<DMatrix<T>> = Vec::with_capacity(lattice.len());
    for (mask, r) in lattice.iter().enumerate() {
        let k_r = if r.is_empty() {
            DMatrix::from_element(n, nt, T::one())
        } else {
            product_kernel_matrix(sample, anchors, r, specs)?
        };
        let mut acc = k_r;
        let mut sub = mask;
        while sub > 0 {
            sub = (sub - 1) & mask;
            acc -= &centered[sub];
            if sub == 0 {
                break;
            }
        }
        if mask == 0 {
            acc = DMatrix::from_element(n, nt, T::one());
        }
        centered.push(acc);
    }
    Ok(centered.pop().expect("lattice is non-empty"))
}

/// max |Σ_{R⊆S} K_R^(c) − K_S| entrywise.
pub fn mobius_identity_error<T: Real>(
    sample: &DMatrix<T>,
    anchors: &DMatrix<T>,
    subset: &SubsetId,
    specs: &[KernelSpec<T>],
) -> Result<T> {
    let target = if subset.is_empty() {
        DMatrix::from_element(sample.nrows(), anchors.nrows(), T::one())
    } else {
        product_kernel_matrix(sample, anchors, subset, specs)?
    };
    let mut sum = DMatrix::zeros(sample.nrows(), anchors.nrows());
    for r in subset.subsets() {
        sum += centered_kernel_matrix(sample, anchors, &r, specs)?.values;
    }
    Ok((sum - target).amax())
}

/// Largest partial mean of the matrix over feature `dim`.
///
/// For every sample row a and anchor b, replaces x_dim by each sample value of
/// column `dim` (the rows that vary only in `dim` under ⊗ᵢ μ̂ᵢ) and averages.
pub fn partial_mean_check<T: Real>(matrix: &CenteredKernelMatrix<T>, dim: usize, sample: &DMatrix<T>) -> Result<T> {
    if !matrix.subset.contains(dim) {
        return Err(Error::Domain(format!("feature {dim} is not in subset {}", matrix.subset)));
    }
    matrix.check_sample(sample)?;
    let f_dim = matrix.factor(dim).expect("dim is a member");
    let n = f_dim.nrows();
    let nt = f_dim.ncols();
    let inv_n = T::one() / T::from_usize_lossy(n);
    let marginal: Vec<T> = f_dim
        .column_iter()
        .map(|c| c.iter().fold(T::zero(), |acc, &v| acc + v) * inv_n)
        .collect();
    let terms = matrix.terms();
    let mut worst = T::zero();
    for b in 0..nt {
        for a in 0..n {
            let mut total = T::zero();
            for (sign, r) in &terms {
                let mut prod = *sign;
                for &j in r.members() {
                    prod *= if j == dim { marginal[b] } else { matrix.factor(j).expect("member")[(a, b)] };
                }
                total += prod;
            }
            worst = worst.max(total.abs());
        }
    }
    Ok(worst)
}

/// Which empirical measure an inner product is taken under.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Measure {
    /// ⊗ᵢ μ̂ᵢ: the product of the per-feature empirical marginals.
    ProductOfMarginals,
    /// The joint empirical measure of the sample rows.
    Joint,
}

/// Largest normalized L²(μ̂) inner product between a column of `a` and a column of `b`.
///
/// Uses ⊗ᵢ μ̂ᵢ; see [`cross_orthogonality_under`] for the joint measure.
pub fn cross_orthogonality<T: Real>(
    a: &CenteredKernelMatrix<T>,
    b: &CenteredKernelMatrix<T>,
    sample: &DMatrix<T>,
) -> Result<T> {
    cross_orthogonality_under(a, b, sample, Measure::ProductOfMarginals)
}

pub fn cross_orthogonality_under<T: Real>(
    a: &CenteredKernelMatrix<T>,
    b: &CenteredKernelMatrix<T>,
    sample: &DMatrix<T>,
    measure: Measure,
) -> Result<T> {
    a.check_sample(sample)?;
    b.check_sample(sample)?;
    let (cross, norm_a, norm_b) = match measure {
        Measure::Joint => {
            let inv_n = T::one() / T::from_usize_lossy(sample.nrows());
            let cross = a.values.transpose() * &b.values * inv_n;
            let na: Vec<T> = a.values.column_iter().map(|c| c.norm_squared() * inv_n).collect();
            let nb: Vec<T> = b.values.column_iter().map(|c| c.norm_squared() * inv_n).collect();
            (cross, na, nb)
        }
        Measure::ProductOfMarginals => {
            let cross = product_measure_gram(a, b);
            let na = product_measure_gram(a, a).diagonal().iter().copied().collect();
            let nb = product_measure_gram(b, b).diagonal().iter().copied().collect();
            (cross, na, nb)
        }
    };
    let mut worst = T::zero();
    for i in 0..cross.nrows() {
        for j in 0..cross.ncols() {
            let denom = (norm_a[i].max(T::zero()) * norm_b[j].max(T::zero())).sqrt();
            if denom > T::zero() {
                worst = worst.max(cross[(i, j)].abs() / denom);
            }
        }
    }
    Ok(worst)
}

/// Gram matrix ⟨A[:,b], B[:,c]⟩ under ⊗ᵢ μ̂ᵢ.
///
/// Each matrix is a signed sum of products of per-feature factors and the
/// measure is a product, so the integral of every term splits into
/// per-feature means. Distributing the signed sums gives, per feature j, a
/// sum over how j enters the A-term and the B-term.
fn product_measure_gram<T: Real>(a: &CenteredKernelMatrix<T>, b: &CenteredKernelMatrix<T>) -> DMatrix<T> {
    let na = a.values.ncols();
    let nb = b.values.ncols();
    let union = a.subset.union(&b.subset);
    let mut gram = DMatrix::from_element(na, nb, T::one());
    for &j in union.members() {
        // membership options for j in a term: (sign, uses factor)
        let opts_a = options(a, j);
        let opts_b = options(b, j);
        let fa = a.factor(j);
        let fb = b.factor(j);
        let n = fa.or(fb).map(|f| f.nrows()).unwrap_or(1);
        let inv_n = T::one() / T::from_usize_lossy(n);
        let mean_a: Option<Vec<T>> =
            fa.map(|f| f.column_iter().map(|c| c.iter().fold(T::zero(), |s, &v| s + v) * inv_n).collect());
        let mean_b: Option<Vec<T>> =
            fb.map(|f| f.column_iter().map(|c| c.iter().fold(T::zero(), |s, &v| s + v) * inv_n).collect());
        let joint: Option<DMatrix<T>> = match (fa, fb) {
            (Some(x), Some(y)) => Some(x.transpose() * y * inv_n),
            _ => None,
        };
        for p in 0..na {
            for q in 0..nb {
                let mut factor = T::zero();
                for &(sa, ua) in &opts_a {
                    for &(sb, ub) in &opts_b {
                        let e = match (ua, ub) {
                            (true, true) => joint.as_ref().expect("both present")[(p, q)],
                            (true, false) => mean_a.as_ref().expect("a present")[p],
                            (false, true) => mean_b.as_ref().expect("b present")[q],
                            (false, false) => T::one(),
                        };
                        factor += sa * sb * e;
                    }
                }
                gram[(p, q)] *= factor;
            }
        }
    }
    gram
}

fn options<T: Real>(m: &CenteredKernelMatrix<T>, j: usize) -> Vec<(T, bool)> {
    if !m.subset.contains(j) {
        return vec![(T::one(), false)];
    }
    match m.kind {
        MatrixKind::Product => vec![(T::one(), true)],
        MatrixKind::Centered => vec![(T::one(), true), (-T::one(), false)],
    }
}
