//! Estimators of generative models and their confidence distributions.

mod context;
mod forest;
mod npdensity;
mod ols;
mod posterior;

pub use context::{fit_context_model, ContextModelFit};
pub use forest::{fit_regression_forest, ForestConfig, QForest, RegressionForest};
pub use npdensity::{fit_np_conditional, np_sample_next_glucose, NpConditionalFit, NpConfig};
pub use ols::{fit_ols, LinearFit, RIDGE_LAMBDA};
pub use posterior::{ArmPosteriors, BetaArm, NormalArm};
