//! JSON report documents.

use std::path::Path;

use serde::Serialize;
use stride_core::analysis::{AttributionVector, MeanAbsAttributions, SurgeryReport, SynergyMatrix, WhatIfReport};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Default, Serialize)]
pub struct Timings {
    pub load_seconds: f64,
    pub evaluate_seconds: f64,
    pub attribution_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub feature_names: Vec<String>,
    pub n_rows: usize,
    pub baseline: f64,
    /// R² of the reconstruction against the supplied model outputs.
    pub fidelity: Option<f64>,
    /// R² of the reconstruction against true labels, when supplied.
    pub r2_true_labels: Option<f64>,
    pub attributions: Vec<AttributionVector<f64>>,
    pub mean_abs_attributions: MeanAbsAttributions<f64>,
    pub synergy: SynergyMatrix<f64>,
    pub surgery: Vec<SurgeryReport<f64>>,
    pub whatif: Vec<WhatIfReport<f64>>,
    pub timings: Timings,
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| CliError::Data(format!("cannot serialize report: {e}")))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = to_json(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
