//! Run configuration: fit settings, seeds and split options.

use std::path::Path;

use serde::{Deserialize, Serialize};
use stride_core::decomposition::{DEFAULT_LAMBDA, DEFAULT_RANK_PAIR, DEFAULT_SEED};
use stride_core::kernel_maps::DEFAULT_RANK_MAIN;
use stride_core::{FitConfig, KernelKind};

use crate::error::{CliError, Result};

/// Evaluation seeds used for the published benchmark tables.
pub const DEFAULT_SEEDS: [u64; 10] = [11, 13, 23, 29, 37, 43, 53, 59, 71, 83];

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

/// Serializable subset of [`FitConfig`]; row weights come from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSettings {
    pub kernel: KernelKind,
    /// `None` selects the median heuristic per feature.
    pub bandwidth: Option<f64>,
    pub degree: u32,
    pub offset: f64,
    pub rank_main: usize,
    pub rank_pair: usize,
    pub ridge_lambda: f64,
    pub max_pairs: Option<usize>,
    /// Fixed pair list by feature index; skips screening.
    pub pairs: Option<Vec<(usize, usize)>>,
    pub seed: u64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Rbf,
            bandwidth: None,
            degree: 2,
            offset: 1.0,
            rank_main: DEFAULT_RANK_MAIN,
            rank_pair: DEFAULT_RANK_PAIR,
            ridge_lambda: DEFAULT_LAMBDA,
            max_pairs: None,
            pairs: None,
            seed: DEFAULT_SEED,
        }
    }
}

impl FitSettings {
    pub fn to_fit_config(&self, weights: Option<Vec<f64>>) -> FitConfig<f64> {
        FitConfig {
            kernel: self.kernel,
            bandwidth: self.bandwidth,
            degree: self.degree,
            offset: self.offset,
            rank_main: self.rank_main,
            rank_pair: self.rank_pair,
            ridge_lambda: self.ridge_lambda,
            max_pairs: self.max_pairs,
            forced_pairs: self.pairs.clone(),
            seed: self.seed,
            weights,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub fit: FitSettings,
    pub seeds: Vec<u64>,
    pub test_fraction: f64,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { fit: FitSettings::default(), seeds: DEFAULT_SEEDS.to_vec(), test_fraction: DEFAULT_TEST_FRACTION, threads: None }
    }
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(CliError::Usage("seed list is empty".into()));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(CliError::Usage(format!("test fraction must be in (0, 1), got {}", self.test_fraction)));
        }
        if self.threads == Some(0) {
            return Err(CliError::Usage("thread count must be at least 1".into()));
        }
        self.fit.to_fit_config(None).validate()?;
        Ok(())
    }
}

/// Parse "11,13,23".
pub fn parse_seed_list(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<u64>().map_err(|_| CliError::Usage(format!("bad seed `{t}`"))))
        .collect()
}
