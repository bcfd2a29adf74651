//! Block coordinate descent estimators.
//!
//! Each outer iteration sweeps the exponential rates, then the damped pairs,
//! then the loadings in closed form (and, for the quasi-likelihood, the
//! noise covariance).

mod blocks;
mod init;

pub use blocks::{update_g, update_sigma, BcdState, InnerSettings, Objective};
pub use init::{default_var_order, draw_omega, init_params, project_loadings, var_ols};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result, SarmaError};
use crate::model::{ModelOrder, NoiseCov, ScalableArmaModel};
use crate::scalar::Real;
use crate::series::Series;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Lse,
    Qmle,
}

impl Estimator {
    pub fn objective(self) -> Objective {
        match self {
            Estimator::Lse => Objective::LeastSquares,
            Estimator::Qmle => Objective::QuasiLikelihood,
        }
    }
}

impl std::str::FromStr for Estimator {
    type Err = SarmaError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lse" | "ls" => Ok(Estimator::Lse),
            "qmle" | "qml" => Ok(Estimator::Qmle),
            _ => Err(arg(format!("unknown estimator '{s}' (expected lse or qmle)"))),
        }
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Estimator::Lse => "lse",
            Estimator::Qmle => "qmle",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub k_max: usize,
    pub delta: f64,
    /// VAR order for the initializer; `None` means `ceil(ln T)`.
    pub var_order: Option<usize>,
    pub restarts: usize,
    pub inner_max: usize,
    pub box_margin: f64,
    pub seed: u64,
    /// Outer iterations whose decay updates start from a grid scan.
    pub scan_iterations: usize,
    /// Random decay draws per restart; the one with the lowest profiled
    /// least-squares loss starts the descent.
    pub screen: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            k_max: 50,
            delta: 1e-3,
            var_order: None,
            restarts: 5,
            inner_max: 20,
            box_margin: 1e-4,
            seed: 0,
            scan_iterations: 1,
            screen: 100,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max == 0 {
            return Err(arg("k_max must be at least 1"));
        }
        if !(self.delta > 0.0) {
            return Err(arg("delta must be positive"));
        }
        if self.restarts == 0 {
            return Err(arg("restarts must be at least 1"));
        }
        if !(self.box_margin > 0.0 && self.box_margin < 0.25) {
            return Err(arg("box_margin must lie in (0, 0.25)"));
        }
        if self.screen == 0 {
            return Err(arg("screen must be at least 1"));
        }
        if self.var_order == Some(0) {
            return Err(arg("var_order must be positive"));
        }
        Ok(())
    }

    fn inner(&self) -> InnerSettings {
        InnerSettings {
            max_iter: self.inner_max,
            margin: self.box_margin,
            ..InnerSettings::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult<T> {
    pub model: ScalableArmaModel<T>,
    pub estimator: Estimator,
    /// Final least-squares loss or quasi-likelihood.
    pub loss: T,
    pub iterations: usize,
    pub converged: bool,
    /// `T^{-1} sum e e'` for least squares, the fitted `Sigma` otherwise.
    pub sigma_hat: NoiseCov<T>,
    /// Objective after every outer iteration, starting with the initializer.
    pub trace: Vec<T>,
    /// Objective after every block update.
    pub block_trace: Vec<T>,
    /// Final objective of every restart (`None` if it failed).
    pub restart_losses: Vec<Option<T>>,
    /// Index of the restart that was kept.
    pub best_restart: usize,
    /// Whether a ridge was added to a singular Gram matrix.
    pub ridge_used: bool,
}

fn max_rel_change<T: Real>(old: &[T], new: &[T]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(a, b)| {
            let a = a.as_f64();
            ((b.as_f64() - a) / a.abs().max(1e-12)).abs()
        })
        .fold(0.0, f64::max)
}

/// Best of `cfg.screen` random draws by the least-squares loss profiled over
/// the loadings.
fn screened_omega<T: Real>(
    series: &Series<T>,
    order: ModelOrder,
    cfg: &FitConfig,
    rng: &mut ChaCha8Rng,
) -> Result<crate::model::DecayParams<T>> {
    let first = draw_omega(order, cfg.box_margin, rng);
    if cfg.screen == 1 || order.r + order.s == 0 {
        return Ok(first);
    }
    let mut best = (T::max_value().unwrap_or_else(|| T::lit(f64::MAX)), first.clone());
    let mut cand = first;
    for c in 0..cfg.screen {
        if c > 0 {
            cand = draw_omega(order, cfg.box_margin, rng);
        }
        if let Ok(l) = blocks::profile_loss(series, &cand, order) {
            if l < best.0 {
                best = (l, cand.clone());
            }
        }
    }
    Ok(best.1)
}

/// One restart of the coordinate descent from the given starting point.
fn run_restart<T: Real>(
    series: &Series<T>,
    order: ModelOrder,
    estimator: Estimator,
    cfg: &FitConfig,
    restart: usize,
    start: Option<&crate::model::DecayParams<T>>,
) -> Result<FitResult<T>> {
    let omega = match start {
        Some(om) => om.clone(),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(cfg.seed ^ restart as u64);
            screened_omega(series, order, cfg, &mut rng)?
        }
    };
    let pp = cfg.var_order.unwrap_or_else(|| default_var_order(series.len(), order.p));
    let var = var_ols(series, pp)?;
    let (loadings, ridge0) = project_loadings(&var, &omega, order, series.len(), series.dim())?;
    let mut st = BcdState::new(series, order, &omega, &loadings, estimator.objective(), None)?;
    st.ridge_used = ridge0;
    let inner = cfg.inner();
    let mut trace = vec![st.objective_value()];
    let mut block_trace = trace.clone();
    let mut prev = st.parameter_vector();
    let mut converged = false;
    let mut iterations = 0;
    for k in 0..cfg.k_max {
        let scan = k < cfg.scan_iterations;
        for i in 0..order.r {
            st.update_lambda(i, scan, &inner);
            block_trace.push(st.objective_value());
        }
        for j in 0..order.s {
            st.update_eta(j, scan, &inner);
            block_trace.push(st.objective_value());
        }
        st.update_g()?;
        block_trace.push(st.objective_value());
        if estimator == Estimator::Qmle {
            st.update_sigma()?;
            block_trace.push(st.objective_value());
        }
        st.normalize();
        let loss = st.objective_value();
        if !loss.is_finite_value() {
            return Err(SarmaError::Numeric(format!("objective became non-finite at iteration {}", k + 1)));
        }
        trace.push(loss);
        iterations = k + 1;
        let cur = st.parameter_vector();
        let change = max_rel_change(&prev, &cur);
        prev = cur;
        if change <= cfg.delta {
            converged = true;
            break;
        }
    }
    let sigma_hat = NoiseCov::new(match estimator {
        Estimator::Lse => st.residual_covariance(),
        Estimator::Qmle => st.sigma().clone(),
    })?;
    let omega = crate::model::DecayParams::new(st.lambdas.clone(), st.etas.clone())?;
    let model = ScalableArmaModel::new(order, omega, st.loading_set(), Some(sigma_hat.clone()))?;
    Ok(FitResult {
        model,
        estimator,
        loss: *trace.last().unwrap(),
        iterations,
        converged,
        sigma_hat,
        trace,
        block_trace,
        restart_losses: Vec::new(),
        best_restart: restart,
        ridge_used: st.ridge_used,
    })
}

/// Runs every restart and keeps the one with the lowest final objective.
pub fn fit<T: Real>(series: &Series<T>, order: ModelOrder, estimator: Estimator, cfg: &FitConfig) -> Result<FitResult<T>> {
    cfg.validate()?;
    if series.len() < 2 {
        return Err(arg("series needs at least two observations"));
    }
    let mut best: Option<FitResult<T>> = None;
    let mut losses = Vec::with_capacity(cfg.restarts);
    let mut errors = Vec::new();
    let restarts = if order.r + order.s == 0 { 1 } else { cfg.restarts };
    for restart in 0..restarts {
        match run_restart(series, order, estimator, cfg, restart, None) {
            Ok(res) => {
                losses.push(Some(res.loss));
                let better = best.as_ref().map_or(true, |b| res.loss < b.loss);
                if better {
                    best = Some(res);
                }
            }
            Err(e) => {
                losses.push(None);
                errors.push(format!("restart {restart}: {e}"));
            }
        }
    }
    match best {
        Some(mut b) => {
            b.restart_losses = losses;
            Ok(b)
        }
        None => Err(SarmaError::Estimation(errors.join("; "))),
    }
}

/// A single descent started from the given decay parameters.
pub fn fit_from<T: Real>(
    series: &Series<T>,
    order: ModelOrder,
    estimator: Estimator,
    cfg: &FitConfig,
    start: &crate::model::DecayParams<T>,
) -> Result<FitResult<T>> {
    cfg.validate()?;
    if start.r() != order.r || start.s() != order.s {
        return Err(arg("start does not match the order"));
    }
    let mut res = run_restart(series, order, estimator, cfg, 0, Some(start))?;
    res.restart_losses = vec![Some(res.loss)];
    Ok(res)
}

/// Least-squares estimator.
pub fn fit_lse<T: Real>(series: &Series<T>, order: ModelOrder, cfg: &FitConfig) -> Result<FitResult<T>> {
    fit(series, order, Estimator::Lse, cfg)
}

/// Gaussian quasi-maximum likelihood estimator.
pub fn fit_qmle<T: Real>(series: &Series<T>, order: ModelOrder, cfg: &FitConfig) -> Result<FitResult<T>> {
    fit(series, order, Estimator::Qmle, cfg)
}

/// Residual sample covariance at the fitted model.
pub fn residual_sigma<T: Real>(series: &Series<T>, model: &ScalableArmaModel<T>) -> Result<DMatrix<T>> {
    let e = crate::model::residuals(series, model)?;
    Ok(e.transpose() * &e / T::from_count(series.len()))
}
