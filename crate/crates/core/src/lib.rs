//! Scalable ARMA models: a VAR(infinity) whose lag coefficients are mixtures
//! of exponential decays and damped sinusoids.
//!
//! The numerical core is generic over `f32`/`f64`; the aliases below fix
//! `f64`.

pub mod calculus;
pub mod error;
pub mod estimate;
pub mod forecast;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod mc;
pub mod model;
pub mod params;
pub mod scalar;
pub mod select;
pub mod series;
pub mod simulate;

pub use error::{Result, SarmaError};
pub use estimate::{fit, fit_lse, fit_qmle, Estimator, FitConfig};
pub use model::ModelOrder;

pub type Series = series::Series<f64>;
pub type Model = model::ScalableArmaModel<f64>;
pub type DecayParams = model::DecayParams<f64>;
pub type LoadingSet = model::LoadingSet<f64>;
pub type NoiseCov = model::NoiseCov<f64>;
pub type FitResult = estimate::FitResult<f64>;
pub type AlphaVector = params::AlphaVector<f64>;
pub type CovarianceEstimates = inference::CovarianceEstimates<f64>;
