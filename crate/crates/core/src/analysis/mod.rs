//! Analyses over a fitted decomposition.

pub mod attribution;
pub mod metrics;
pub mod surgery;
pub mod synergy;
pub mod whatif;

pub use attribution::{
    attributions_from_evaluation, explain, mean_abs_attributions, shapley_aggregate, shapley_row, AttributionVector,
    MeanAbsAttributions,
};
pub use metrics::{average_ranks, fidelity_r2, spearman_rank_agreement, weighted_correlation};
pub use surgery::{component_surgery, most_impactful_pair, surgery_from_evaluation, SurgeryReport, TargetKind};
pub use synergy::{synergy_from_evaluation, synergy_matrix, SynergyMatrix};
pub use whatif::{what_if, WhatIfReport};
