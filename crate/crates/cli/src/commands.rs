//! Subcommand definitions and handlers.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use stride_core::analysis::{
    attributions_from_evaluation, fidelity_r2, mean_abs_attributions, most_impactful_pair, surgery_from_evaluation,
    synergy_from_evaluation, what_if, SurgeryReport, TargetKind,
};
use stride_core::{fit, load_model, save_model, KernelKind, Model, SubsetId};

use crate::bench::{run_bench, Outputs};
use crate::config::{parse_seed_list, RunConfig};
use crate::dataset::{load_csv, load_predictions, Dataset, SchemaOptions};
use crate::error::{CliError, Result};
use crate::report::{write_json, write_text, Report, Timings};
use crate::validate::run_checks;

#[derive(Debug, Parser)]
#[command(name = "stride", version, about = "Orthogonal kernel ANOVA explanations of black-box model outputs")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, env = "STRIDE_THREADS", global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a decomposition of model outputs and save it.
    Fit(FitArgs),
    /// Attributions, fidelity, synergy and surgery for a dataset.
    Explain(ExplainArgs),
    /// Write the pairwise synergy matrix as TSV.
    Synergy(SynergyArgs),
    /// Re-evaluate one row with edited feature values.
    Whatif(WhatIfArgs),
    /// R² change when one component is removed.
    Surgery(SurgeryArgs),
    /// Run identity and oracle self-checks.
    Validate(ValidateArgs),
    /// Seeded train/test timing and fidelity benchmark.
    Bench(BenchArgs),
}

#[derive(Debug, Args, Clone)]
pub struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Separate CSV holding model predictions.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Prediction column (in --pred, or in --data when --pred is absent).
    #[arg(long)]
    pub pred_col: Option<String>,
    /// True-label column in --data (excluded from features).
    #[arg(long)]
    pub target_col: Option<String>,
    /// Row weight column in --data.
    #[arg(long)]
    pub weight_col: Option<String>,
    /// Columns to ignore, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub drop: Vec<String>,
    /// Columns to one-hot encode even when numeric, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,
}

impl DataArgs {
    fn schema(&self) -> SchemaOptions {
        SchemaOptions {
            target_col: self.target_col.clone(),
            pred_col: if self.pred.is_none() { self.pred_col.clone() } else { None },
            weight_col: self.weight_col.clone(),
            drop: self.drop.clone(),
            categorical: self.categorical.clone(),
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        let mut ds = load_csv(&self.data, &self.schema())?;
        if let Some(p) = &self.pred {
            let pred = load_predictions(p, self.pred_col.as_deref())?;
            if pred.len() != ds.n_rows() {
                return Err(CliError::Data(format!("{} predictions for {} data rows", pred.len(), ds.n_rows())));
            }
            ds.prediction = Some(pred);
        }
        Ok(ds)
    }
}

#[derive(Debug, Args, Clone, Default)]
pub struct FitOptions {
    /// JSON run configuration; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub rank_main: Option<usize>,
    #[arg(long)]
    pub rank_pair: Option<usize>,
    #[arg(long = "lambda")]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub max_pairs: Option<usize>,
    /// Fixed pairs by feature name or index, e.g. "a:b,c:d".
    #[arg(long)]
    pub pairs: Option<String>,
    #[arg(long, value_parser = parse_kernel)]
    pub kernel: Option<KernelKind>,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long)]
    pub degree: Option<u32>,
    #[arg(long)]
    pub offset: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn parse_kernel(s: &str) -> std::result::Result<KernelKind, String> {
    s.parse().map_err(|e: stride_core::Error| e.to_string())
}

impl FitOptions {
    /// Base config (file or defaults) with flag overrides.
    pub fn run_config(&self, names: &[String]) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let f = &mut cfg.fit;
        if let Some(v) = self.rank_main {
            f.rank_main = v;
        }
        if let Some(v) = self.rank_pair {
            f.rank_pair = v;
        }
        if let Some(v) = self.lambda {
            f.ridge_lambda = v;
        }
        if let Some(v) = self.max_pairs {
            f.max_pairs = Some(v);
        }
        if let Some(v) = self.kernel {
            f.kernel = v;
        }
        if let Some(v) = self.bandwidth {
            f.bandwidth = Some(v);
        }
        if let Some(v) = self.degree {
            f.degree = v;
        }
        if let Some(v) = self.offset {
            f.offset = v;
        }
        if let Some(v) = self.seed {
            f.seed = v;
        }
        if let Some(p) = &self.pairs {
            f.pairs = Some(parse_pairs(p, names)?);
        }
        cfg.fit.to_fit_config(None).validate()?;
        Ok(cfg)
    }
}

fn feature_index(token: &str, names: &[String]) -> Result<usize> {
    let t = token.trim();
    if let Some(j) = names.iter().position(|n| n == t) {
        return Ok(j);
    }
    match t.parse::<usize>() {
        Ok(j) if j < names.len() => Ok(j),
        _ => Err(CliError::Usage(format!("unknown feature `{t}`"))),
    }
}

/// "a:b,c:d" → [(ia, ib), (ic, id)].
pub fn parse_pairs(spec: &str, names: &[String]) -> Result<Vec<(usize, usize)>> {
    spec.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| {
            let (a, b) = t.split_once(':').ok_or_else(|| CliError::Usage(format!("pair `{t}` must look like a:b")))?;
            Ok((feature_index(a, names)?, feature_index(b, names)?))
        })
        .collect()
}

/// A subset by names/indices: "a", "a:b", or "{0,1}".
pub fn parse_subset(spec: &str, names: &[String]) -> Result<SubsetId> {
    let t = spec.trim();
    if t.starts_with('{') {
        return t.parse::<SubsetId>().map_err(|e| CliError::Usage(e.to_string()));
    }
    let members = t.split(':').map(|m| feature_index(m, names)).collect::<Result<Vec<_>>>()?;
    Ok(SubsetId::new(members))
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fit: FitOptions,
    /// Output model archive.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Row indices to report attributions for (default: all rows).
    #[arg(long, value_delimiter = ',')]
    pub instances: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct SynergyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// TSV output (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WhatIfArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Row to edit.
    #[arg(long)]
    pub row: usize,
    /// Edits as name=value; repeatable.
    #[arg(long = "set")]
    pub set: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SurgeryArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Component to remove ("a:b", "a", "{0,1}"); default: most impactful pair.
    #[arg(long)]
    pub subset: Option<String>,
    /// Compare against model outputs instead of true labels.
    #[arg(long)]
    pub against_model: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 11)]
    pub seed: u64,
    /// Random oracle grids to compare.
    #[arg(long, default_value_t = 10)]
    pub grids: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub fit: FitOptions,
    /// Comma-separated seeds (default: 11,13,23,29,37,43,53,59,71,83).
    #[arg(long)]
    pub seeds: Option<String>,
    /// Per-seed prediction columns in --data, e.g. "pred_{seed}".
    #[arg(long)]
    pub pred_col_template: Option<String>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// JSON output.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional CSV table (per-seed rows, then mean and std).
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn model_outputs(ds: &Dataset) -> Result<Vec<f64>> {
    ds.prediction
        .clone()
        .or_else(|| ds.target.clone())
        .ok_or_else(|| CliError::Usage("no model outputs: pass --pred, --pred-col or --target-col".into()))
}

fn open_model(path: &PathBuf) -> Result<Model> {
    Ok(load_model(path)?)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Explain(a) => cmd_explain(a),
        Command::Synergy(a) => cmd_synergy(a),
        Command::Whatif(a) => cmd_whatif(a),
        Command::Surgery(a) => cmd_surgery(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let ds = a.data.load()?;
    let y = model_outputs(&ds)?;
    let cfg = a.fit.run_config(&ds.feature_names)?;
    let mut model = fit(&ds.x, &y, &cfg.fit.to_fit_config(ds.weights.clone()))?;
    model.set_feature_names(ds.feature_names.clone())?;
    save_model(&model, &a.out)?;
    let dg = &model.diagnostics;
    eprintln!(
        "fitted {} features, {} pairs; train R² {}; orthogonality residual {:.3e}",
        model.n_features(),
        model.pair_maps.len(),
        dg.train_r2.map_or("n/a".to_string(), |v| format!("{v:.6}")),
        dg.orthogonality_residual
    );
    Ok(())
}

fn cmd_explain(a: ExplainArgs) -> Result<()> {
    let t0 = Instant::now();
    let model = open_model(&a.model)?;
    let ds = a.data.load()?;
    let x = ds.aligned(&model.feature_names)?;
    let load_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let ev = model.evaluate(&x)?;
    let evaluate_seconds = t1.elapsed().as_secs_f64();
    let t2 = Instant::now();
    let d = model.n_features();
    let all = attributions_from_evaluation(&ev, d);
    let mean_abs = mean_abs_attributions(&ev, d, ds.weights.as_deref())?;
    let attribution_seconds = t2.elapsed().as_secs_f64();

    let attributions = if a.instances.is_empty() {
        all
    } else {
        a.instances
            .iter()
            .map(|&i| all.get(i).cloned().ok_or_else(|| CliError::Usage(format!("instance {i} out of range"))))
            .collect::<Result<Vec<_>>>()?
    };
    let recon: Vec<f64> = ev.reconstruction.iter().copied().collect();
    let w = ds.weights.as_deref();
    let fidelity = ds.prediction.as_ref().map(|p| fidelity_r2(p, &recon, w)).transpose()?;
    let r2_true_labels = ds.target.as_ref().map(|t| fidelity_r2(t, &recon, w)).transpose()?;
    let synergy = synergy_from_evaluation(&ev, &model.feature_names, w)?;

    let mut surgery = Vec::new();
    if let Some(pair) = most_impactful_pair(&ev, w)? {
        if let Some(t) = &ds.target {
            surgery.push(surgery_from_evaluation(&ev, t, TargetKind::TrueLabels, &pair, w)?);
        }
        if let Some(p) = &ds.prediction {
            surgery.push(surgery_from_evaluation(&ev, p, TargetKind::ModelOutput, &pair, w)?);
        }
    }
    let report = Report {
        feature_names: model.feature_names.clone(),
        n_rows: ev.n_rows(),
        baseline: model.baseline,
        fidelity,
        r2_true_labels,
        attributions,
        mean_abs_attributions: mean_abs,
        synergy,
        surgery,
        whatif: Vec::new(),
        timings: Timings { load_seconds, evaluate_seconds, attribution_seconds, total_seconds: t0.elapsed().as_secs_f64() },
    };
    write_json(&a.out, &report)
}

fn cmd_synergy(a: SynergyArgs) -> Result<()> {
    let model = open_model(&a.model)?;
    let ds = a.data.load()?;
    let ev = model.evaluate(&ds.aligned(&model.feature_names)?)?;
    let tsv = synergy_from_evaluation(&ev, &model.feature_names, ds.weights.as_deref())?.to_tsv();
    match a.out {
        Some(p) => write_text(p, &tsv),
        None => {
            print!("{tsv}");
            Ok(())
        }
    }
}

fn cmd_whatif(a: WhatIfArgs) -> Result<()> {
    let model = open_model(&a.model)?;
    let ds = a.data.load()?;
    let x = ds.aligned(&model.feature_names)?;
    if a.row >= x.nrows() {
        return Err(CliError::Usage(format!("row {} out of range ({} rows)", a.row, x.nrows())));
    }
    let instance: Vec<f64> = x.row(a.row).iter().copied().collect();
    let mut edits = Vec::with_capacity(a.set.len());
    for e in &a.set {
        let (name, value) = e.split_once('=').ok_or_else(|| CliError::Usage(format!("edit `{e}` must look like name=value")))?;
        let j = model
            .feature_names
            .iter()
            .position(|n| n == name.trim())
            .ok_or_else(|| CliError::Data(format!("schema error: unknown feature `{}`", name.trim())))?;
        let v: f64 = value.trim().parse().map_err(|_| CliError::Usage(format!("bad value in edit `{e}`")))?;
        edits.push((j, v));
    }
    let report = what_if(&model, &instance, &edits)?;
    let text = crate::report::to_json(&report)?;
    match a.out {
        Some(p) => write_text(p, &(text + "\n")),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_surgery(a: SurgeryArgs) -> Result<()> {
    let model = open_model(&a.model)?;
    let ds = a.data.load()?;
    let ev = model.evaluate(&ds.aligned(&model.feature_names)?)?;
    let w = ds.weights.as_deref();
    let subset = match &a.subset {
        Some(s) => parse_subset(s, &model.feature_names)?,
        None => most_impactful_pair(&ev, w)?.ok_or_else(|| CliError::Usage("model has no pair components".into()))?,
    };
    let (target, kind) = if a.against_model {
        (ds.prediction.as_ref(), TargetKind::ModelOutput)
    } else {
        (ds.target.as_ref(), TargetKind::TrueLabels)
    };
    let target = target.ok_or_else(|| CliError::Usage("surgery target column not supplied".into()))?;
    let report: SurgeryReport<f64> = surgery_from_evaluation(&ev, target, kind, &subset, w)?;
    let text = crate::report::to_json(&report)?;
    match a.out {
        Some(p) => write_text(p, &(text + "\n")),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn cmd_validate(a: ValidateArgs) -> Result<()> {
    let checks = run_checks(a.seed, a.grids)?;
    for c in &checks {
        println!("{} {} value={:.3e} tol={:.0e}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
    }
    if let Some(p) = &a.out {
        write_json(p, &checks)?;
    }
    if checks.iter().all(|c| c.passed) {
        Ok(())
    } else {
        Err(stride_core::Error::Numerical("self-checks failed".into()).into())
    }
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let mut cfg_seeds = None;
    if let Some(s) = &a.seeds {
        cfg_seeds = Some(parse_seed_list(s)?);
    }
    let mut data = a.data.clone();
    let mut seeds_for_template = Vec::new();
    // pairs are resolved by name once the features are known
    let mut cfg = FitOptions { pairs: None, ..a.fit.clone() }.run_config(&[])?;
    if let Some(s) = cfg_seeds {
        cfg.seeds = s;
    }
    if let Some(f) = a.test_fraction {
        cfg.test_fraction = f;
    }
    cfg.threads = Some(rayon::current_num_threads());
    // per-seed prediction columns are kept out of the features
    if let Some(t) = &a.pred_col_template {
        for &s in &cfg.seeds {
            let col = t.replace("{seed}", &s.to_string());
            data.drop.push(col.clone());
            seeds_for_template.push((s, col));
        }
    }
    let ds = data.load()?;
    let outputs = if seeds_for_template.is_empty() {
        Outputs::Shared(model_outputs(&ds)?)
    } else {
        let mut map = BTreeMap::new();
        for (s, col) in seeds_for_template {
            map.insert(s, load_predictions(&a.data.data, Some(&col))?);
        }
        Outputs::PerSeed(map)
    };
    if let Some(p) = &a.fit.pairs {
        cfg.fit.pairs = Some(parse_pairs(p, &ds.feature_names)?);
    }
    let report = run_bench(&ds, &outputs, &cfg)?;
    for r in &report.rows {
        eprintln!("seed {:>3}: fidelity {:.4}  fit {:.3}s  explain {:.3}s", r.seed, r.fidelity_r2, r.fit_seconds, r.explain_seconds);
    }
    if let Some(m) = report.summary.get("fidelity_r2") {
        eprintln!("fidelity {:.4} ± {:.4}", m.mean, m.std);
    }
    write_json(&a.out, &report)?;
    if let Some(p) = &a.csv {
        write_text(p, &report.to_csv())?;
    }
    Ok(())
}
