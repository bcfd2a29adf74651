//! One-step forecasts and rolling-origin evaluation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::estimate::{fit, residual_sigma, update_g, Estimator, FitConfig};
use crate::model::{DecayParams, ModelOrder, NoiseCov, Regressors, ScalableArmaModel};
use crate::scalar::Real;
use crate::series::Series;

/// `y_{T+1|T} = sum_{h=1}^{T} A_h y_{T+1-h}`, computed with the same
/// recursion as the truncated residuals.
pub fn one_step_forecast<T: Real>(history: &Series<T>, model: &ScalableArmaModel<T>) -> Result<Vec<T>> {
    if history.is_empty() {
        return Err(arg("forecast needs a nonempty history"));
    }
    if history.dim() != model.dim() {
        return Err(arg(format!(
            "history dimension {} differs from model dimension {}",
            history.dim(),
            model.dim()
        )));
    }
    let len = history.len();
    let n = history.dim();
    let regs = Regressors::compute(history, model.omega(), model.order(), len + 1);
    let mut out = vec![T::zero(); n];
    for (k, g) in model.loadings().mats().iter().enumerate() {
        crate::model::gemv_acc(g.as_slice(), regs.get(len, k), &mut out, T::one());
    }
    Ok(out)
}

/// OLS VAR(`p`) without intercept, as an order `(p, 0, 0)` model carrying
/// its residual covariance.
pub fn var_baseline_fit<T: Real>(series: &Series<T>, p: usize) -> Result<(ScalableArmaModel<T>, DMatrix<T>)> {
    if p == 0 {
        return Err(arg("VAR baseline needs p >= 1"));
    }
    if series.len() <= p * series.dim() {
        return Err(arg(format!(
            "VAR({p}) needs more than {} observations, got {}",
            p * series.dim(),
            series.len()
        )));
    }
    let order = ModelOrder::new(p, 0, 0);
    let omega = DecayParams::empty();
    let (g, _) = update_g(series, &omega, order)?;
    let model = ScalableArmaModel::new(order, omega, g, None)?;
    let sigma = residual_sigma(series, &model)?;
    let model = model.with_sigma(NoiseCov::new(sigma.clone()).ok());
    Ok((model, sigma))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ForecastMethod {
    Sarma { order: ModelOrder, estimator: Estimator },
    Var { p: usize },
}

impl std::fmt::Display for ForecastMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ForecastMethod::Sarma { order, estimator } => write!(f, "sarma-{estimator}{order}"),
            ForecastMethod::Var { p } => write!(f, "var({p})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RollingConfig {
    /// Fixed window length `n0`; the first origin is the `n0`-th observation.
    pub window: usize,
    /// Refit every this many origins, reusing the last fit in between.
    pub refit_every: usize,
    /// Forecast from the whole history up to the origin instead of only the
    /// current window.
    pub full_history: bool,
    pub fit: FitConfig,
}

impl Default for RollingConfig {
    fn default() -> Self {
        Self {
            window: 100,
            refit_every: 1,
            full_history: true,
            fit: FitConfig::default(),
        }
    }
}

impl RollingConfig {
    pub fn validate(&self, len: usize) -> Result<()> {
        if self.window < 2 {
            return Err(arg("rolling window must hold at least two observations"));
        }
        if self.window >= len {
            return Err(arg(format!("window {} must be shorter than the series ({len})", self.window)));
        }
        if self.refit_every == 0 {
            return Err(arg("refit_every must be at least 1"));
        }
        self.fit.validate()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ForecastPoint {
    /// 1-based forecast origin; the target is `origin + 1`.
    pub origin: usize,
    pub forecast: Vec<f64>,
    pub actual: Vec<f64>,
    pub refit: bool,
}

impl ForecastPoint {
    pub fn error(&self) -> Vec<f64> {
        self.actual.iter().zip(&self.forecast).map(|(a, f)| a - f).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RollingReport {
    pub method: String,
    pub window: usize,
    pub refit_every: usize,
    pub points: Vec<ForecastPoint>,
    /// Origins whose window fit failed, with the message.
    pub failures: Vec<(usize, String)>,
    pub rmsfe: f64,
    pub mafe: f64,
}

/// `(RMSFE, MAFE)` of a list of error vectors; NaN when empty.
pub fn forecast_errors(errors: &[Vec<f64>]) -> (f64, f64) {
    if errors.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = errors.len() as f64;
    let sq: Vec<f64> = errors.iter().map(|e| e.iter().map(|v| v * v).sum::<f64>()).collect();
    let rmsfe = (sq.iter().sum::<f64>() / m).sqrt();
    let mafe = sq.iter().map(|s| s.sqrt()).sum::<f64>() / m;
    (rmsfe, mafe)
}

/// Rolling one-step evaluation: for each origin `t = n0, ..., T-1` fit on
/// the last `n0` observations and forecast `y_{t+1}`.
pub fn rolling_evaluate<T: Real>(series: &Series<T>, method: ForecastMethod, cfg: &RollingConfig) -> Result<RollingReport> {
    let len = series.len();
    cfg.validate(len)?;
    if let ForecastMethod::Sarma { order, .. } = method {
        if order.d() == 0 {
            return Err(arg("forecast order must have d > 0"));
        }
    }
    let n0 = cfg.window;
    let mut points = Vec::new();
    let mut failures = Vec::new();
    let mut model: Option<ScalableArmaModel<T>> = None;
    for (i, origin) in (n0..len).enumerate() {
        let window = series.slice(origin - n0, origin)?;
        let refit = i % cfg.refit_every == 0 || model.is_none();
        if refit {
            let fitted = match method {
                ForecastMethod::Sarma { order, estimator } => fit(&window, order, estimator, &cfg.fit).map(|f| f.model),
                ForecastMethod::Var { p } => var_baseline_fit(&window, p).map(|(m, _)| m),
            };
            match fitted {
                Ok(m) => model = Some(m),
                Err(e) => {
                    model = None;
                    failures.push((origin, e.to_string()));
                    continue;
                }
            }
        }
        let m = model.as_ref().expect("model present after refit");
        let history = if cfg.full_history { series.slice(0, origin)? } else { window };
        let f = one_step_forecast(&history, m)?;
        points.push(ForecastPoint {
            origin,
            forecast: f.iter().map(|v| v.as_f64()).collect(),
            actual: series.row(origin).iter().map(|v| v.as_f64()).collect(),
            refit,
        });
    }
    let errs: Vec<Vec<f64>> = points.iter().map(|p| p.error()).collect();
    let (rmsfe, mafe) = forecast_errors(&errs);
    Ok(RollingReport {
        method: method.to_string(),
        window: n0,
        refit_every: cfg.refit_every,
        points,
        failures,
        rmsfe,
        mafe,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_summaries() {
        let (r, m) = forecast_errors(&[vec![3.0, 4.0]]);
        assert_eq!((r, m), (5.0, 5.0));
        let (r, m) = forecast_errors(&[vec![0.0, 0.0], vec![0.0, 0.0]]);
        assert_eq!((r, m), (0.0, 0.0));
        let errs = vec![vec![1.0, 2.0], vec![-0.5, 0.25], vec![3.0, 0.0]];
        let (r, m) = forecast_errors(&errs);
        let mean_sq = (5.0 + 0.3125 + 9.0) / 3.0;
        assert!((r * r - mean_sq).abs() < 1e-12);
        assert!(m >= 0.0 && r >= 0.0);
        assert!(forecast_errors(&[]).0.is_nan());
    }

    #[test]
    fn var_requires_positive_order() {
        let s = Series::from_rows(&[vec![1.0f64], vec![2.0], vec![3.0]]).unwrap();
        assert!(var_baseline_fit(&s, 0).is_err());
    }

    #[test]
    fn zero_history_forecasts_zero() {
        let s = Series::from_rows(&vec![vec![0.0f64, 0.0]; 5]).unwrap();
        let model = ScalableArmaModel::new(
            ModelOrder::new(1, 1, 0),
            DecayParams::new(vec![0.5], vec![]).unwrap(),
            crate::model::LoadingSet::new(2, vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2)]).unwrap(),
            None,
        )
        .unwrap();
        assert_eq!(one_step_forecast(&s, &model).unwrap(), vec![0.0, 0.0]);
    }
}
