//! Imputation metrics, reports and the plain-VAE baseline.

pub mod baseline;
pub mod mean;
pub mod metrics;
pub mod report;

pub use baseline::BaselineVae;
pub use mean::MeanImputer;
pub use metrics::{column_std, feature_stds, nrmse, nrmse_pooled, pfc, MetricResult};
pub use report::{evaluate_imputation, score_imputation, ImputationReport, Imputer, Summary, VsaeImputer};
