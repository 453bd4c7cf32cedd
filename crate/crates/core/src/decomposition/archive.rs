//! Versioned JSON model archive.
//!
//! Reals are stored as f64 decimal (shortest round-trip form), so an archive
//! reloads to bit-identical parameters for both f32 and f64 models.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Component, DecompositionModel, Diagnostics, FitConfig, PairMap};
use crate::error::{ArchiveError, Error, Result};
use crate::kernel_maps::{FeatureMap, KernelKind, KernelSpec, Landmarks};
use crate::linalg::SolveMethod;
use crate::scalar::Real;
use crate::subset::SubsetId;

pub const FORMAT_VERSION: &str = "stride-model/1";

/// Top-level sections in write order.
const SECTIONS: [&str; 9] = [
    "format_version",
    "config",
    "feature_names",
    "baseline",
    "features",
    "pair_list",
    "pair_orthogonalizers",
    "components",
    "diagnostics",
];

#[derive(Serialize, Deserialize)]
struct ArchiveRecord {
    format_version: String,
    config: ConfigRecord,
    feature_names: Vec<String>,
    baseline: f64,
    features: Vec<FeatureRecord>,
    pair_list: Vec<(usize, usize)>,
    pair_orthogonalizers: Vec<PairRecord>,
    components: Vec<ComponentRecord>,
    diagnostics: DiagnosticsRecord,
}

#[derive(Serialize, Deserialize)]
struct ConfigRecord {
    kernel: KernelKind,
    bandwidth: Option<f64>,
    degree: u32,
    offset: f64,
    rank_main: usize,
    rank_pair: usize,
    ridge_lambda: f64,
    max_pairs: Option<usize>,
    forced_pairs: Option<Vec<(usize, usize)>>,
    seed: u64,
    weighted: bool,
}

#[derive(Serialize, Deserialize)]
struct KernelRecord {
    kind: KernelKind,
    bandwidth: f64,
    degree: u32,
    offset: f64,
}

#[derive(Serialize, Deserialize)]
struct FeatureRecord {
    index: usize,
    kernel: KernelRecord,
    degenerate: bool,
    landmarks: Vec<f64>,
    landmark_seed: u64,
    /// r×r, row-major.
    whitening: Vec<f64>,
    column_means: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PairRecord {
    pair: (usize, usize),
    columns: Vec<(usize, usize)>,
    degenerate: bool,
    rows: usize,
    cols: usize,
    /// rows×cols, row-major.
    coefficients: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ComponentRecord {
    subset: SubsetId,
    coefficients: Vec<f64>,
    l2_norm: f64,
}

#[derive(Serialize, Deserialize)]
struct DiagnosticsRecord {
    orthogonality_residual: f64,
    cross_main_residual: f64,
    fit_residual_norm: f64,
    train_r2: Option<f64>,
    solver: SolveMethod,
    n_train: usize,
}

fn row_major<T: Real>(m: &DMatrix<T>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)].as_f64());
        }
    }
    out
}

fn from_row_major<T: Real>(rows: usize, cols: usize, v: &[f64], what: &str) -> Result<DMatrix<T>, ArchiveError> {
    if v.len() != rows * cols {
        return Err(ArchiveError::Corrupt(format!("{what}: expected {rows}x{cols} values, found {}", v.len())));
    }
    Ok(DMatrix::from_row_iterator(rows, cols, v.iter().map(|&x| T::lit(x))))
}

fn vec_f64<T: Real>(v: impl IntoIterator<Item = T>) -> Vec<f64> {
    v.into_iter().map(|x| x.as_f64()).collect()
}

fn record<T: Real>(model: &DecompositionModel<T>) -> ArchiveRecord {
    let c = &model.config;
    ArchiveRecord {
        format_version: FORMAT_VERSION.to_string(),
        config: ConfigRecord {
            kernel: c.kernel,
            bandwidth: c.bandwidth.map(|b| b.as_f64()),
            degree: c.degree,
            offset: c.offset.as_f64(),
            rank_main: c.rank_main,
            rank_pair: c.rank_pair,
            ridge_lambda: c.ridge_lambda.as_f64(),
            max_pairs: c.max_pairs,
            forced_pairs: c.forced_pairs.clone(),
            seed: c.seed,
            weighted: model.weighted,
        },
        feature_names: model.feature_names.clone(),
        baseline: model.baseline.as_f64(),
        features: model
            .feature_maps
            .iter()
            .map(|m| FeatureRecord {
                index: m.feature_index,
                kernel: KernelRecord {
                    kind: m.kernel.kind,
                    bandwidth: m.kernel.bandwidth.as_f64(),
                    degree: m.kernel.degree,
                    offset: m.kernel.offset.as_f64(),
                },
                degenerate: m.degenerate,
                landmarks: vec_f64(m.landmarks.points.iter().copied()),
                landmark_seed: m.landmarks.seed,
                whitening: row_major(&m.whitening),
                column_means: vec_f64(m.column_means.iter().copied()),
            })
            .collect(),
        pair_list: model.pair_list(),
        pair_orthogonalizers: model
            .pair_maps
            .iter()
            .map(|p| PairRecord {
                pair: p.pair,
                columns: p.columns.clone(),
                degenerate: p.degenerate,
                rows: p.orthogonalizer.nrows(),
                cols: p.orthogonalizer.ncols(),
                coefficients: row_major(&p.orthogonalizer),
            })
            .collect(),
        components: model
            .components
            .iter()
            .map(|c| ComponentRecord {
                subset: c.subset.clone(),
                coefficients: vec_f64(c.coefficients.iter().copied()),
                l2_norm: c.l2_norm.as_f64(),
            })
            .collect(),
        diagnostics: DiagnosticsRecord {
            orthogonality_residual: model.diagnostics.orthogonality_residual.as_f64(),
            cross_main_residual: model.diagnostics.cross_main_residual.as_f64(),
            fit_residual_norm: model.diagnostics.fit_residual_norm.as_f64(),
            train_r2: model.diagnostics.train_r2.map(|v| v.as_f64()),
            solver: model.diagnostics.solver,
            n_train: model.diagnostics.n_train,
        },
    }
}

/// Serialize a model to the archive text.
pub fn to_json<T: Real>(model: &DecompositionModel<T>) -> Result<String> {
    serde_json::to_string_pretty(&record(model)).map_err(|e| Error::Archive(ArchiveError::Corrupt(e.to_string())))
}

pub fn save_model<T: Real>(model: &DecompositionModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut text = to_json(model)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Archive(ArchiveError::Io(e)))
}

pub fn load_model<T: Real>(path: impl AsRef<Path>) -> Result<DecompositionModel<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Archive(ArchiveError::Io(e)))?;
    from_json(&text)
}

fn truncated_section(text: &str) -> String {
    SECTIONS
        .iter()
        .rev()
        .find(|s| text.contains(&format!("\"{s}\":")))
        .unwrap_or(&SECTIONS[0])
        .to_string()
}

/// Parse archive text produced by [`to_json`].
pub fn from_json<T: Real>(text: &str) -> Result<DecompositionModel<T>> {
    let value: serde_json::Value = match serde_json::from_str(text) {
        Ok(v) => v,
        Err(e) if e.is_eof() => {
            return Err(ArchiveError::Truncated { section: truncated_section(text) }.into());
        }
        Err(e) => return Err(ArchiveError::Corrupt(e.to_string()).into()),
    };
    match value.get("format_version") {
        None => return Err(ArchiveError::MissingVersion.into()),
        Some(serde_json::Value::String(v)) if v == FORMAT_VERSION => {}
        Some(other) => {
            let found = other.as_str().map(str::to_string).unwrap_or_else(|| other.to_string());
            return Err(ArchiveError::Version { found, expected: FORMAT_VERSION.to_string() }.into());
        }
    }
    if let Some(obj) = value.as_object() {
        if let Some(missing) = SECTIONS.iter().find(|s| !obj.contains_key(**s)) {
            return Err(ArchiveError::MissingSection { section: missing.to_string() }.into());
        }
    }
    let rec: ArchiveRecord = serde_json::from_value(value).map_err(|e| ArchiveError::Corrupt(e.to_string()))?;
    Ok(from_record(rec)?)
}

fn from_record<T: Real>(rec: ArchiveRecord) -> Result<DecompositionModel<T>, ArchiveError> {
    let c = &rec.config;
    let config = FitConfig {
        kernel: c.kernel,
        bandwidth: c.bandwidth.map(T::lit),
        degree: c.degree,
        offset: T::lit(c.offset),
        rank_main: c.rank_main,
        rank_pair: c.rank_pair,
        ridge_lambda: T::lit(c.ridge_lambda),
        max_pairs: c.max_pairs,
        forced_pairs: c.forced_pairs.clone(),
        seed: c.seed,
        weights: None,
    };
    let mut feature_maps = Vec::with_capacity(rec.features.len());
    for (j, f) in rec.features.iter().enumerate() {
        if f.index != j {
            return Err(ArchiveError::Corrupt(format!("feature record {j} carries index {}", f.index)));
        }
        let r = f.landmarks.len();
        let k = f.column_means.len();
        if r == 0 || k == 0 || k > r || f.whitening.len() != r * k {
            return Err(ArchiveError::Corrupt(format!("feature {j}: inconsistent rank")));
        }
        let kernel = KernelSpec {
            kind: f.kernel.kind,
            bandwidth: T::lit(f.kernel.bandwidth),
            degree: f.kernel.degree,
            offset: T::lit(f.kernel.offset),
        };
        kernel.validate().map_err(|e| ArchiveError::Corrupt(format!("feature {j}: {e}")))?;
        feature_maps.push(FeatureMap {
            feature_index: j,
            kernel,
            landmarks: Landmarks { feature_index: j, points: f.landmarks.iter().map(|&v| T::lit(v)).collect(), seed: f.landmark_seed },
            whitening: from_row_major(r, k, &f.whitening, &format!("feature {j} whitening"))?,
            column_means: DVector::from_iterator(k, f.column_means.iter().map(|&v| T::lit(v))),
            values: DMatrix::zeros(0, k),
            degenerate: f.degenerate,
        });
    }
    let d = feature_maps.len();
    if rec.feature_names.len() != d {
        return Err(ArchiveError::Corrupt(format!("{} feature names for {d} features", rec.feature_names.len())));
    }
    if rec.pair_list.len() != rec.pair_orthogonalizers.len() {
        return Err(ArchiveError::Corrupt("pair_list and pair_orthogonalizers differ in length".into()));
    }
    let mut pair_maps = Vec::with_capacity(rec.pair_list.len());
    for (pair, p) in rec.pair_list.iter().zip(&rec.pair_orthogonalizers) {
        let (i, j) = *pair;
        if p.pair != *pair || i >= j || j >= d {
            return Err(ArchiveError::Corrupt(format!("bad pair entry ({i},{j})")));
        }
        let ri = feature_maps[i].rank();
        let rj = feature_maps[j].rank();
        if p.rows != 1 + ri + rj
            || p.cols != p.columns.len()
            || p.columns.iter().any(|&(u, v)| u >= ri || v >= rj)
        {
            return Err(ArchiveError::Corrupt(format!("pair ({i},{j}): orthogonalizer shape mismatch")));
        }
        pair_maps.push(PairMap {
            pair: *pair,
            columns: p.columns.clone(),
            orthogonalizer: from_row_major(p.rows, p.cols, &p.coefficients, &format!("pair ({i},{j})"))?,
            degenerate: p.degenerate,
        });
    }
    if rec.components.len() != d + pair_maps.len() {
        return Err(ArchiveError::Corrupt("component count does not match features and pairs".into()));
    }
    let mut components = Vec::with_capacity(rec.components.len());
    for (k, c) in rec.components.iter().enumerate() {
        let (expected, width) = if k < d {
            (SubsetId::singleton(k), feature_maps[k].rank())
        } else {
            let (i, j) = pair_maps[k - d].pair;
            (SubsetId::pair(i, j), pair_maps[k - d].width())
        };
        if c.subset != expected || c.coefficients.len() != width {
            return Err(ArchiveError::Corrupt(format!("component {k} ({}) does not match its block", c.subset)));
        }
        components.push(Component {
            subset: c.subset.clone(),
            coefficients: DVector::from_iterator(width, c.coefficients.iter().map(|&v| T::lit(v))),
            train_values: Vec::new(),
            l2_norm: T::lit(c.l2_norm),
        });
    }
    let dg = &rec.diagnostics;
    Ok(DecompositionModel {
        config,
        weighted: c.weighted,
        feature_names: rec.feature_names,
        baseline: T::lit(rec.baseline),
        feature_maps,
        pair_maps,
        components,
        diagnostics: Diagnostics {
            orthogonality_residual: T::lit(dg.orthogonality_residual),
            cross_main_residual: T::lit(dg.cross_main_residual),
            fit_residual_norm: T::lit(dg.fit_residual_norm),
            train_r2: dg.train_r2.map(T::lit),
            solver: dg.solver,
            n_train: dg.n_train,
        },
    })
}
