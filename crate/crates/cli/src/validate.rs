//! Self-checks run by `stride validate`.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use stride_core::anova_oracle::{compare_to_engine, oracle_engine_config, DiscreteGridFunction};
use stride_core::centered_algebra::{centered_kernel_matrix, cross_orthogonality, mobius_identity_error, partial_mean_check};
use stride_core::{KernelSpec, SubsetId};

use crate::error::Result;

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub seconds: f64,
}

impl Check {
    fn new(name: &str, value: f64, tolerance: f64, started: Instant) -> Self {
        Self { name: name.to_string(), value, tolerance, passed: value <= tolerance, seconds: started.elapsed().as_secs_f64() }
    }
}

fn random_sample(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
}

/// Identity checks on the dense kernels, then oracle agreement on random grids.
pub fn run_checks(seed: u64, grids: usize) -> Result<Vec<Check>> {
    let d = 4;
    let sample = random_sample(200, d, seed);
    let anchors = random_sample(12, d, seed.wrapping_add(1));
    let specs = vec![KernelSpec::rbf(0.7); d];
    let full = SubsetId::new((0..d).collect::<Vec<_>>());
    let subsets: Vec<SubsetId> = full.subsets().into_iter().filter(|s| !s.is_empty()).collect();

    let mut out = Vec::new();
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for s in &subsets {
        worst = worst.max(mobius_identity_error(&sample, &anchors, s, &specs)?);
    }
    out.push(Check::new("mobius_identity", worst, 1e-10, t));

    let t = Instant::now();
    let matrices = subsets.iter().map(|s| centered_kernel_matrix(&sample, &anchors, s, &specs)).collect::<stride_core::Result<Vec<_>>>()?;
    let mut worst: f64 = 0.0;
    for m in &matrices {
        for &i in m.subset.members() {
            worst = worst.max(partial_mean_check(m, i, &sample)?);
        }
    }
    out.push(Check::new("partial_zero_mean", worst, 1e-10, t));

    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for (a, ma) in matrices.iter().enumerate() {
        for mb in &matrices[a + 1..] {
            worst = worst.max(cross_orthogonality(ma, mb, &sample)?);
        }
    }
    out.push(Check::new("cross_orthogonality", worst, 1e-8, t));

    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for k in 0..grids {
        let dim = 1 + (k % 3);
        let f = DiscreteGridFunction::random(seed.wrapping_add(100 + k as u64), dim, 4)?;
        worst = worst.max(compare_to_engine(&f, &oracle_engine_config(&f))?);
    }
    out.push(Check::new("oracle_equivalence", worst, 1e-6, t));
    Ok(out)
}
