//! Kernel functional-ANOVA decomposition of black-box models.
//!
//! A model is fit as a sum of centered main effects and screened pairwise
//! interactions, each represented in a whitened Nyström feature space so the
//! components are mutually orthogonal under the background sample.

pub mod analysis;
pub mod anova_oracle;
pub mod centered_algebra;
pub mod decomposition;
pub mod error;
pub mod kernel_maps;
pub mod linalg;
pub mod scalar;
pub mod subset;

pub use decomposition::archive::{from_json, load_model, save_model, to_json, FORMAT_VERSION};
pub use decomposition::{evaluate, fit, Component, DecompositionModel, Diagnostics, Evaluation, FitConfig};
pub use error::{ArchiveError, Error, Result};
pub use kernel_maps::{FeatureMap, KernelKind, KernelSpec};
pub use scalar::Real;
pub use subset::SubsetId;

pub type Model = DecompositionModel<f64>;
pub type ModelF32 = DecompositionModel<f32>;
pub type Config = FitConfig<f64>;
pub type ConfigF32 = FitConfig<f32>;
pub type Matrix = nalgebra::DMatrix<f64>;
