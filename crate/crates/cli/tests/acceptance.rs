//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary so the report lines show up in `cargo test` output.
//! Exits non-zero if any evaluated criterion fails. The desk-scale criterion
//! needs an external CSV (see README); without it the line reads FAIL with the
//! reason, and the run only aborts when STRIDE_ACCEPTANCE_STRICT is set.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stride_cli::bench::{run_bench, Outputs};
use stride_cli::config::{RunConfig, DEFAULT_SEEDS};
use stride_cli::dataset::{load_csv, SchemaOptions};
use stride_core::analysis::{attributions_from_evaluation, fidelity_r2, surgery_from_evaluation, TargetKind};
use stride_core::anova_oracle::{compare_to_engine, exact_anova, oracle_engine_config, DiscreteGridFunction};
use stride_core::centered_algebra::{centered_kernel_matrix, cross_orthogonality, partial_mean_check};
use stride_core::{fit, to_json, FitConfig, KernelSpec, SubsetId};

enum Outcome {
    Pass(String),
    Fail(String),
    /// Not evaluable in this environment.
    Unavailable(String),
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn uniform(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
}

const BANDWIDTH: f64 = 0.6;

fn rbf(x: f64, t: f64) -> f64 {
    (-(x - t) * (x - t) / (2.0 * BANDWIDTH * BANDWIDTH)).exp()
}

/// k̃ⱼ(x, t) with each anchor normalized to unit mean over the sample.
fn normalized_kernel(sample: &DMatrix<f64>, anchors: &DMatrix<f64>, j: usize) -> DMatrix<f64> {
    let n = sample.nrows();
    let mut k = DMatrix::from_fn(n, anchors.nrows(), |a, b| rbf(sample[(a, j)], anchors[(b, j)]));
    for mut col in k.column_iter_mut() {
        let mean = col.sum() / n as f64;
        col /= mean;
    }
    k
}

fn nonempty_subsets(d: usize) -> Vec<SubsetId> {
    SubsetId::new((0..d).collect::<Vec<_>>()).subsets().into_iter().filter(|s| !s.is_empty()).collect()
}

fn mobius_identity() -> Outcome {
    let t = Instant::now();
    let (n, d) = (200, 4);
    let x = uniform(n, d, 1);
    let specs = vec![KernelSpec::rbf(BANDWIDTH); d];
    let factors: Vec<DMatrix<f64>> = (0..d).map(|j| normalized_kernel(&x, &x, j)).collect();
    let mut worst: f64 = 0.0;
    for s in nonempty_subsets(d) {
        // K_S computed directly as the entrywise product of normalized kernels
        let mut direct = DMatrix::from_element(n, n, 1.0);
        for &j in s.members() {
            direct.component_mul_assign(&factors[j]);
        }
        let mut sum = DMatrix::zeros(n, n);
        for r in s.subsets() {
            sum += centered_kernel_matrix(&x, &x, &r, &specs).unwrap().values;
        }
        worst = worst.max((sum - direct).amax());
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(worst <= 1e-10 && secs < 5.0, format!("max err {worst:.2e} (tol 1e-10), {secs:.2}s (limit 5s)"))
}

fn shuffled_sample(n: usize, d: usize, seed: u64) -> DMatrix<f64> {
    let mut x = uniform(n, d, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    for j in 0..d {
        let mut col: Vec<f64> = x.column(j).iter().copied().collect();
        col.shuffle(&mut rng);
        x.column_mut(j).copy_from_slice(&col);
    }
    x
}

fn partial_zero_mean() -> Outcome {
    let (n, d) = (200, 4);
    let x = shuffled_sample(n, d, 2);
    let anchors = uniform(40, d, 3);
    let specs = vec![KernelSpec::rbf(BANDWIDTH); d];
    let factors: Vec<DMatrix<f64>> = (0..d).map(|j| normalized_kernel(&x, &anchors, j)).collect();
    let mut engine: f64 = 0.0;
    let mut brute: f64 = 0.0;
    for s in nonempty_subsets(d) {
        let m = centered_kernel_matrix(&x, &anchors, &s, &specs).unwrap();
        for &i in s.members() {
            engine = engine.max(partial_mean_check(&m, i, &x).unwrap());
            // brute force on a row subset: average Π_{j∈S}(k̃ⱼ − 1) over every value of x_i
            for a in (0..n).step_by(25) {
                for b in 0..anchors.nrows() {
                    let mut acc = 0.0;
                    for a2 in 0..n {
                        let mut prod = 1.0;
                        for &j in s.members() {
                            let row = if j == i { a2 } else { a };
                            prod *= factors[j][(row, b)] - 1.0;
                        }
                        acc += prod;
                    }
                    brute = brute.max((acc / n as f64).abs());
                }
            }
        }
    }
    verdict(engine <= 1e-10 && brute <= 1e-10, format!("engine {engine:.2e}, brute force {brute:.2e} (tol 1e-10)"))
}

fn orthogonality() -> Outcome {
    let (n, d) = (200, 4);
    let x = shuffled_sample(n, d, 4);
    let anchors = uniform(30, d, 5);
    let specs = vec![KernelSpec::rbf(BANDWIDTH); d];
    let mats: Vec<_> = nonempty_subsets(d).iter().map(|s| centered_kernel_matrix(&x, &anchors, s, &specs).unwrap()).collect();
    let mut kernel_worst: f64 = 0.0;
    for (a, ma) in mats.iter().enumerate() {
        for mb in &mats[a + 1..] {
            kernel_worst = kernel_worst.max(cross_orthogonality(ma, mb, &x).unwrap());
        }
    }

    let xf = uniform(800, d, 6);
    let y: Vec<f64> = (0..800).map(|a| xf[(a, 0)].sin() + xf[(a, 1)] * xf[(a, 2)] + xf[(a, 3)].powi(2)).collect();
    let model = fit(&xf, &y, &FitConfig { max_pairs: Some(4), ..FitConfig::default() }).unwrap();
    let diag = model.diagnostics.orthogonality_residual;
    // recompute at the component level: pairs against the constant and their parents
    let ev = model.evaluate(&xf).unwrap();
    let col = |k: usize| -> Vec<f64> { ev.values.column(k).iter().copied().collect() };
    let norm = |v: &[f64]| (v.iter().map(|a| a * a).sum::<f64>() / v.len() as f64).sqrt();
    let cosine = |u: &[f64], v: &[f64]| {
        let ip = u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() / u.len() as f64;
        if norm(u) == 0.0 || norm(v) == 0.0 {
            0.0
        } else {
            ip.abs() / (norm(u) * norm(v))
        }
    };
    let ones = vec![1.0; 800];
    let mut recomputed: f64 = 0.0;
    for (k, s) in ev.subsets.iter().enumerate() {
        recomputed = recomputed.max(cosine(&col(k), &ones));
        if s.len() == 2 {
            for &p in s.members() {
                recomputed = recomputed.max(cosine(&col(k), &col(ev.index_of(&SubsetId::singleton(p)).unwrap())));
            }
        }
    }
    verdict(
        kernel_worst <= 1e-8 && diag <= 1e-6 && recomputed <= 1e-6,
        format!("kernel cross {kernel_worst:.2e} (tol 1e-8); fit diagnostic {diag:.2e}, recomputed {recomputed:.2e} (tol 1e-6)"),
    )
}

fn shapley_axioms() -> Outcome {
    let n = 600;
    let mut x = uniform(n, 4, 7);
    x.column_mut(3).fill(0.25); // feature 3 never enters the model
    let y1: Vec<f64> = (0..n).map(|a| x[(a, 0)].sin() + x[(a, 0)] * x[(a, 1)]).collect();
    let y2: Vec<f64> = (0..n).map(|a| x[(a, 2)].powi(2) - 0.5 * x[(a, 1)] * x[(a, 2)]).collect();
    let pairs = vec![(0, 1), (1, 2), (0, 2)];
    let cfg = FitConfig { rank_main: 16, rank_pair: 9, forced_pairs: Some(pairs), ..FitConfig::default() };
    let m1 = fit(&x, &y1, &cfg).unwrap();

    let mut probe = uniform(1000, 4, 8);
    probe.column_mut(3).fill(0.25);
    let ev = m1.evaluate(&probe).unwrap();
    let attrs = attributions_from_evaluation(&ev, 4);
    let mut eff: f64 = 0.0;
    for (a, attr) in attrs.iter().enumerate() {
        let mut recon = m1.baseline;
        for k in 0..ev.subsets.len() {
            recon += ev.values[(a, k)];
        }
        let gap = (attr.values.iter().sum::<f64>() - (recon - m1.baseline)).abs() / recon.abs().max(1.0);
        eff = eff.max(gap);
    }
    let dummy_max = attrs.iter().map(|a| a.values[3].abs()).fold(0.0, f64::max);

    let (alpha, beta) = (1.7, -0.6);
    let ymix: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| alpha * a + beta * b).collect();
    let m2 = fit(&x, &y2, &cfg).unwrap();
    let mm = fit(&x, &ymix, &cfg).unwrap();
    let a1 = attributions_from_evaluation(&m1.evaluate(&probe).unwrap(), 4);
    let a2 = attributions_from_evaluation(&m2.evaluate(&probe).unwrap(), 4);
    let am = attributions_from_evaluation(&mm.evaluate(&probe).unwrap(), 4);
    let mut lin: f64 = 0.0;
    for k in 0..a1.len() {
        for j in 0..4 {
            lin = lin.max((am[k].values[j] - (alpha * a1[k].values[j] + beta * a2[k].values[j])).abs());
        }
    }
    verdict(
        eff <= 1e-8 && dummy_max == 0.0 && lin <= 1e-6,
        format!("efficiency {eff:.2e} (tol 1e-8, 1000 rows); dummy max |φ| {dummy_max:e} (must be 0); linearity {lin:.2e} (tol 1e-6)"),
    )
}

fn oracle_equivalence() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut dims = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for k in 0..10u64 {
        let dim = rng.random_range(1..=3);
        let f = DiscreteGridFunction::random(1000 + k, dim, 4).unwrap();
        // the oracle itself must be complete
        let exact = exact_anova(&f);
        for c in 0..f.n_cells() {
            let sum: f64 = exact.values().map(|t| t.at_cell(&f.cell(c))).sum();
            assert!((sum - f.table()[c]).abs() < 1e-12);
        }
        worst = worst.max(compare_to_engine(&f, &oracle_engine_config(&f)).unwrap());
        dims.push(format!("{:?}", f.shape()));
    }
    let secs = t.elapsed().as_secs_f64();
    verdict(worst <= 1e-6 && secs < 10.0, format!("max discrepancy {worst:.2e} (tol 1e-6), {secs:.2}s (limit 10s), grids {}", dims.join(" ")))
}

fn additive_recovery() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in [11u64, 13, 23] {
        let n = 2000;
        let x = uniform(n, 3, seed);
        let y: Vec<f64> = (0..n).map(|a| x[(a, 0)].sin() + x[(a, 1)].powi(2)).collect();
        let model = fit(&x, &y, &FitConfig { seed, ..FitConfig::default() }).unwrap();
        let ev = model.evaluate(&x).unwrap();
        let recon: Vec<f64> = ev.reconstruction.iter().copied().collect();
        let r2 = fidelity_r2(&y, &recon, None).unwrap();
        let main_max = model.components.iter().filter(|c| c.subset.len() == 1).map(|c| c.l2_norm).fold(0.0, f64::max);
        let pair_max = model.components.iter().filter(|c| c.subset.len() == 2).map(|c| c.l2_norm).fold(0.0, f64::max);
        let ratio = pair_max / main_max;
        ok &= r2 >= 0.98 && ratio <= 0.05;
        lines.push(format!("seed {seed}: R² {r2:.5}, pair/main {ratio:.2e}"));
    }
    verdict(ok, format!("{} (need R² ≥ 0.98, ratio ≤ 0.05)", lines.join("; ")))
}

fn interaction_necessity() -> Outcome {
    let n = 2000;
    let mut x = uniform(n, 3, 17);
    x.column_mut(2).fill(-0.4);
    let y: Vec<f64> = (0..n).map(|a| x[(a, 0)] * x[(a, 1)]).collect();
    let model = fit(&x, &y, &FitConfig::default()).unwrap();
    let ev = model.evaluate(&x).unwrap();
    let pair = SubsetId::pair(0, 1);
    if ev.index_of(&pair).is_none() {
        return Outcome::Fail(format!("pair (1,2) not selected; pairs {:?}", model.pair_list()));
    }
    let drop = surgery_from_evaluation(&ev, &y, TargetKind::TrueLabels, &pair, None).unwrap();
    let null = SubsetId::singleton(2);
    let k = ev.index_of(&null).unwrap();
    let is_null = ev.values.column(k).iter().all(|&v| v == 0.0);
    let none = surgery_from_evaluation(&ev, &y, TargetKind::TrueLabels, &null, None).unwrap();
    verdict(
        drop.delta_r2 >= 0.8 && is_null && none.delta_r2 == 0.0,
        format!("removing f_12: ΔR² {:.4} (need ≥ 0.8); removing null f_3: ΔR² {:e} (must be 0)", drop.delta_r2, none.delta_r2),
    )
}

fn california_csv() -> Option<PathBuf> {
    if let Ok(p) = std::env::var("STRIDE_CALIFORNIA_CSV") {
        return Some(PathBuf::from(p));
    }
    let local = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/california_housing_rf.csv");
    local.exists().then_some(local)
}

fn desk_scale_fidelity() -> Outcome {
    let Some(path) = california_csv() else {
        return Outcome::Unavailable(
            "California Housing CSV with forest predictions not found (set STRIDE_CALIFORNIA_CSV); not evaluated".into(),
        );
    };
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => return Outcome::Unavailable(format!("cannot read {}: {e}", path.display())),
    };
    let header: Vec<String> = text.lines().next().unwrap_or("").split(',').map(|h| h.trim().to_string()).collect();
    let per_seed: Vec<String> = DEFAULT_SEEDS.iter().map(|s| format!("pred_{s}")).collect();
    let has_per_seed = per_seed.iter().all(|c| header.contains(c));
    let mut drop: Vec<String> = header.iter().filter(|h| h.starts_with("pred")).cloned().collect();
    drop.sort();
    let options = SchemaOptions { target_col: Some("MedHouseVal".into()), drop: drop.clone(), ..Default::default() };
    let ds = match load_csv(&path, &options) {
        Ok(d) => d,
        Err(e) => return Outcome::Fail(format!("cannot load {}: {e}", path.display())),
    };
    let column = |name: &str| -> Vec<f64> {
        let j = header.iter().position(|h| h == name).unwrap();
        text.lines().skip(1).filter(|l| !l.trim().is_empty()).map(|l| l.split(',').nth(j).unwrap().trim().parse().unwrap()).collect()
    };
    let outputs = if has_per_seed {
        Outputs::PerSeed(DEFAULT_SEEDS.iter().map(|&s| (s, column(&format!("pred_{s}")))).collect::<BTreeMap<_, _>>())
    } else if header.iter().any(|h| h == "pred") {
        Outputs::Shared(column("pred"))
    } else {
        return Outcome::Fail("CSV lacks `pred` or `pred_<seed>` columns".into());
    };
    let cfg = RunConfig::default();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let report = match pool.install(|| run_bench(&ds, &outputs, &cfg)) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(format!("bench failed: {e}")),
    };
    let min_r2 = report.rows.iter().map(|r| r.fidelity_r2).fold(f64::INFINITY, f64::min);
    let max_t = report.rows.iter().map(|r| r.total_seconds).fold(0.0, f64::max);
    let mean = report.summary["fidelity_r2"];
    verdict(
        min_r2 >= 0.88 && max_t <= 10.0,
        format!(
            "n={} d={}: R² {:.4} ± {:.4}, min {min_r2:.4} (need ≥ 0.88 every seed); slowest fit+explain {max_t:.2}s single-threaded (limit 10s)",
            ds.n_rows(),
            ds.n_features(),
            mean.mean,
            mean.std
        ),
    )
}

fn determinism() -> Outcome {
    let n = 600;
    let x = uniform(n, 4, 19);
    let y: Vec<f64> = (0..n).map(|a| x[(a, 0)].sin() * x[(a, 1)] + x[(a, 2)] + x[(a, 3)].abs()).collect();
    let cfg = FitConfig::default();
    let first = to_json(&fit(&x, &y, &cfg).unwrap()).unwrap();
    let second = to_json(&fit(&x, &y, &cfg).unwrap()).unwrap();
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let third = single.install(|| to_json(&fit(&x, &y, &cfg).unwrap()).unwrap());

    // and through the binary, writing archives to disk
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    let mut text = String::from("a,b,c,d,y\n");
    for a in 0..n {
        text.push_str(&format!("{:?},{:?},{:?},{:?},{:?}\n", x[(a, 0)], x[(a, 1)], x[(a, 2)], x[(a, 3)], y[a]));
    }
    std::fs::write(&csv, text).unwrap();
    let mut archives = Vec::new();
    for (k, threads) in ["1", "4"].iter().enumerate() {
        let out = dir.path().join(format!("m{k}.json"));
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_stride"))
            .args(["fit", "--data", csv.to_str().unwrap(), "--pred-col", "y", "--out", out.to_str().unwrap()])
            .env("STRIDE_THREADS", threads)
            .output()
            .unwrap();
        if !status.status.success() {
            return Outcome::Fail(format!("stride fit failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        archives.push(std::fs::read(&out).unwrap());
    }
    let ok = first == second && first == third && archives[0] == archives[1];
    verdict(ok, format!("library archives identical: {}; CLI archives (1 vs 4 threads) identical: {}", first == second && first == third, archives[0] == archives[1]))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("mobius_identity", mobius_identity),
        ("partial_zero_mean", partial_zero_mean),
        ("orthogonality", orthogonality),
        ("shapley_axioms", shapley_axioms),
        ("oracle_equivalence", oracle_equivalence),
        ("additive_recovery", additive_recovery),
        ("interaction_necessity", interaction_necessity),
        ("desk_scale_fidelity", desk_scale_fidelity),
        ("determinism", determinism),
    ];
    let strict = std::env::var_os("STRIDE_ACCEPTANCE_STRICT").is_some();
    let mut failed = 0;
    for (name, check) in criteria {
        let t = Instant::now();
        let outcome = check();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Outcome::Pass(d) => println!("PASS {name} [{secs:.2}s]: {d}"),
            Outcome::Fail(d) => {
                failed += 1;
                println!("FAIL {name} [{secs:.2}s]: {d}");
            }
            Outcome::Unavailable(d) => {
                if strict {
                    failed += 1;
                }
                println!("FAIL {name} [{secs:.2}s]: {d}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
