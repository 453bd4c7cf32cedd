//! Seeded train/test benchmark: per-seed timing and fidelity, then mean ± std.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use stride_core::analysis::{attributions_from_evaluation, fidelity_r2, mean_abs_attributions, most_impactful_pair, surgery_from_evaluation, TargetKind};
use stride_core::fit;

use crate::config::RunConfig;
use crate::dataset::Dataset;
use crate::error::{CliError, Result};

/// Black-box outputs to decompose.
#[derive(Clone, Debug)]
pub enum Outputs {
    /// One prediction vector for every seed.
    Shared(Vec<f64>),
    /// Predictions of a model trained separately per seed.
    PerSeed(BTreeMap<u64, Vec<f64>>),
}

impl Outputs {
    fn for_seed(&self, seed: u64) -> Result<&[f64]> {
        match self {
            Outputs::Shared(v) => Ok(v),
            Outputs::PerSeed(m) => m.get(&seed).map(Vec::as_slice).ok_or_else(|| CliError::Usage(format!("no predictions for seed {seed}"))),
        }
    }
}

/// Shuffle 0..n with the seed; the first round(n·f) indices (sorted) form the test split.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((n as f64 * test_fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    (train, test)
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub fit_seconds: f64,
    pub explain_seconds: f64,
    pub total_seconds: f64,
    /// Test R² of the reconstruction against the black-box outputs.
    pub fidelity_r2: f64,
    pub train_r2: Option<f64>,
    pub pairs: Vec<(usize, usize)>,
    pub mean_abs_main: Vec<f64>,
    pub mean_abs_total: Vec<f64>,
    pub surgery_pair: Option<String>,
    /// R² drop against true labels when the most impactful pair is removed.
    pub surgery_delta_r2: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation (0 for a single seed).
    pub std: f64,
}

impl MeanStd {
    pub fn of(v: &[f64]) -> Option<Self> {
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Some(Self { mean, std: var.sqrt() })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub feature_names: Vec<String>,
    pub n_rows: usize,
    pub test_fraction: f64,
    pub threads: usize,
    pub rows: Vec<BenchRow>,
    pub summary: BTreeMap<String, MeanStd>,
}

const CSV_COLUMNS: [&str; 8] =
    ["seed", "n_train", "n_test", "fit_seconds", "explain_seconds", "total_seconds", "fidelity_r2", "surgery_delta_r2"];

impl BenchReport {
    /// Per-seed rows followed by `mean` and `std` rows.
    pub fn to_csv(&self) -> String {
        let mut out = CSV_COLUMNS.join(",");
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:?},{:?},{:?},{:?},{}\n",
                r.seed, r.n_train, r.n_test, r.fit_seconds, r.explain_seconds, r.total_seconds, r.fidelity_r2, opt(r.surgery_delta_r2)
            ));
        }
        for (label, pick) in [("mean", 0usize), ("std", 1)] {
            let get = |k: &str| self.summary.get(k).map(|m| if pick == 0 { m.mean } else { m.std });
            let n_train = MeanStd::of(&self.rows.iter().map(|r| r.n_train as f64).collect::<Vec<_>>()).map(|m| if pick == 0 { m.mean } else { m.std });
            let n_test = MeanStd::of(&self.rows.iter().map(|r| r.n_test as f64).collect::<Vec<_>>()).map(|m| if pick == 0 { m.mean } else { m.std });
            let fields: Vec<String> = [n_train, n_test, get("fit_seconds"), get("explain_seconds"), get("total_seconds"), get("fidelity_r2"), get("surgery_delta_r2")]
                .into_iter()
                .map(opt)
                .collect();
            out.push_str(label);
            out.push(',');
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn run_bench(ds: &Dataset, outputs: &Outputs, cfg: &RunConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let n = ds.n_rows();
    if n < 10 {
        return Err(CliError::Data(format!("bench needs at least 10 rows, got {n}")));
    }
    let mut rows = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let y_all = outputs.for_seed(seed)?;
        if y_all.len() != n {
            return Err(CliError::Data(format!("{} outputs for {n} rows (seed {seed})", y_all.len())));
        }
        let (train_idx, test_idx) = split_indices(n, cfg.test_fraction, seed);
        let train = ds.subset_rows(&train_idx);
        let test = ds.subset_rows(&test_idx);
        let y_train: Vec<f64> = train_idx.iter().map(|&a| y_all[a]).collect();
        let y_test: Vec<f64> = test_idx.iter().map(|&a| y_all[a]).collect();
        let mut settings = cfg.fit.clone();
        settings.seed = seed;
        let fit_cfg = settings.to_fit_config(train.weights.clone());

        let t0 = Instant::now();
        let mut model = fit(&train.x, &y_train, &fit_cfg)?;
        let fit_seconds = t0.elapsed().as_secs_f64();
        model.set_feature_names(ds.feature_names.clone())?;
        let t1 = Instant::now();
        let ev = model.evaluate(&test.x)?;
        let attrs = attributions_from_evaluation(&ev, model.n_features());
        let mean_abs = mean_abs_attributions(&ev, model.n_features(), None)?;
        let explain_seconds = t1.elapsed().as_secs_f64();
        std::hint::black_box(&attrs);

        let recon: Vec<f64> = ev.reconstruction.iter().copied().collect();
        let fidelity = fidelity_r2(&y_test, &recon, None)?;
        let (surgery_pair, surgery_delta_r2) = match (&test.target, most_impactful_pair(&ev, None)?) {
            (Some(labels), Some(pair)) => {
                let rep = surgery_from_evaluation(&ev, labels, TargetKind::TrueLabels, &pair, None)?;
                (Some(pair.to_string()), Some(rep.delta_r2))
            }
            _ => (None, None),
        };
        rows.push(BenchRow {
            seed,
            n_train: train_idx.len(),
            n_test: test_idx.len(),
            fit_seconds,
            explain_seconds,
            total_seconds: fit_seconds + explain_seconds,
            fidelity_r2: fidelity,
            train_r2: model.diagnostics.train_r2,
            pairs: model.pair_list(),
            mean_abs_main: mean_abs.main,
            mean_abs_total: mean_abs.total,
            surgery_pair,
            surgery_delta_r2,
        });
    }

    let mut summary = BTreeMap::new();
    let mut add = |k: &str, v: Vec<f64>| {
        if let Some(m) = MeanStd::of(&v) {
            summary.insert(k.to_string(), m);
        }
    };
    add("fit_seconds", rows.iter().map(|r| r.fit_seconds).collect());
    add("explain_seconds", rows.iter().map(|r| r.explain_seconds).collect());
    add("total_seconds", rows.iter().map(|r| r.total_seconds).collect());
    add("fidelity_r2", rows.iter().map(|r| r.fidelity_r2).collect());
    let deltas: Vec<f64> = rows.iter().filter_map(|r| r.surgery_delta_r2).collect();
    if deltas.len() == rows.len() {
        add("surgery_delta_r2", deltas);
    }
    Ok(BenchReport {
        feature_names: ds.feature_names.clone(),
        n_rows: n,
        test_fraction: cfg.test_fraction,
        threads: rayon::current_num_threads(),
        rows,
        summary,
    })
}
