//! BIC order selection over a `(p, r, s)` grid.

use serde::{Deserialize, Serialize};

use crate::error::{arg, Result, SarmaError};
use crate::estimate::{fit, residual_sigma, Estimator, FitConfig, FitResult};
use crate::linalg::spd_logdet;
use crate::model::{check_identifiability, ModelOrder};
use crate::scalar::Real;
use crate::series::Series;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionGrid {
    pub p_max: usize,
    pub r_max: usize,
    pub s_max: usize,
    pub estimator: Estimator,
    pub fit: FitConfig,
    /// Candidates whose fit has a rate, damping, rate gap or MA loading
    /// norm at or below this, or a reducible `G_p`, are reported but not
    /// eligible. Zero disables the screen.
    pub identifiability_tol: f64,
}

impl Default for SelectionGrid {
    fn default() -> Self {
        Self {
            p_max: 2,
            r_max: 2,
            s_max: 2,
            estimator: Estimator::Lse,
            fit: FitConfig::default(),
            identifiability_tol: 0.05,
        }
    }
}

impl SelectionGrid {
    /// Candidates in lexicographic `(p, r, s)` order, without `(0,0,0)`.
    pub fn candidates(&self) -> Vec<ModelOrder> {
        let mut out = Vec::new();
        for p in 0..=self.p_max {
            for r in 0..=self.r_max {
                for s in 0..=self.s_max {
                    if p + r + s > 0 {
                        out.push(ModelOrder::new(p, r, s));
                    }
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_max + self.r_max + self.s_max == 0 {
            return Err(arg("selection grid needs at least one candidate with d > 0"));
        }
        if !(self.identifiability_tol >= 0.0) {
            return Err(arg("identifiability_tol must be nonnegative"));
        }
        self.fit.validate()
    }
}

/// Number of free coefficient parameters charged by the criterion.
pub fn n_params(order: ModelOrder, dim: usize) -> usize {
    (dim * dim + 1) * order.d()
}

/// `T ln|Sigma| + (N^2 + 1) d ln T`.
pub fn bic_from_logdet(len: usize, dim: usize, order: ModelOrder, logdet: f64) -> f64 {
    len as f64 * logdet + n_params(order, dim) as f64 * (len as f64).ln()
}

/// BIC of a fitted candidate, using the residual covariance of its truncated
/// residuals. Returns `(logdet, bic)`.
pub fn bic<T: Real>(series: &Series<T>, fit: &FitResult<T>) -> Result<(f64, f64)> {
    let sigma = residual_sigma(series, &fit.model)?;
    let logdet = spd_logdet(&sigma)
        .map_err(|e| SarmaError::Selection(format!("residual covariance is not positive definite: {e}")))?
        .as_f64();
    Ok((logdet, bic_from_logdet(series.len(), series.dim(), fit.model.order(), logdet)))
}

#[derive(Debug, Clone, Serialize)]
pub struct BicRow {
    pub p: usize,
    pub r: usize,
    pub s: usize,
    pub n1: usize,
    pub logdet: Option<f64>,
    pub bic: Option<f64>,
    pub converged: Option<bool>,
    /// Whether the fit passed the identifiability screen.
    pub identifiable: Option<bool>,
    pub error: Option<String>,
}

impl BicRow {
    pub fn order(&self) -> ModelOrder {
        ModelOrder::new(self.p, self.r, self.s)
    }
}

#[derive(Debug, Clone)]
pub struct Selection<T> {
    pub order: ModelOrder,
    pub table: Vec<BicRow>,
    pub fit: FitResult<T>,
}

/// Fits every candidate and returns the BIC minimizer. Ties go to the
/// smaller parameter count, then to the lexicographically smaller order.
pub fn select_order<T: Real>(series: &Series<T>, grid: &SelectionGrid) -> Result<Selection<T>> {
    grid.validate()?;
    let n = series.dim();
    let mut table = Vec::new();
    let mut best: Option<(f64, usize, ModelOrder, FitResult<T>)> = None;
    for order in grid.candidates() {
        let n1 = n_params(order, n);
        let mut row = BicRow {
            p: order.p,
            r: order.r,
            s: order.s,
            n1,
            logdet: None,
            bic: None,
            converged: None,
            identifiable: None,
            error: None,
        };
        match fit(series, order, grid.estimator, &grid.fit).and_then(|f| bic(series, &f).map(|b| (f, b))) {
            Ok((f, (logdet, b))) => {
                row.logdet = Some(logdet);
                row.bic = Some(b);
                row.converged = Some(f.converged);
                let ok = grid.identifiability_tol == 0.0 || check_identifiability(&f.model, grid.identifiability_tol).is_ok();
                row.identifiable = Some(ok);
                let better = match &best {
                    None => true,
                    Some((bb, bn, bo, _)) => {
                        b < *bb || (b == *bb && (n1, order.p, order.r, order.s) < (*bn, bo.p, bo.r, bo.s))
                    }
                };
                if ok && better && b.is_finite() {
                    best = Some((b, n1, order, f));
                }
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        table.push(row);
    }
    match best {
        Some((_, _, order, fit)) => Ok(Selection { order, table, fit }),
        None => Err(SarmaError::Selection(
            table
                .iter()
                .map(|r| format!("{}: {}", r.order(), r.error.as_deref().unwrap_or(if r.identifiable == Some(false) { "not identifiable" } else { "non-finite BIC" })))
                .collect::<Vec<_>>()
                .join("; "),
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitClass {
    Underfit,
    Exact,
    Overfit,
}

/// Underfit if any component is below the truth, exact if equal, overfit otherwise.
pub fn classify(selected: ModelOrder, truth: ModelOrder) -> FitClass {
    if selected.p < truth.p || selected.r < truth.r || selected.s < truth.s {
        FitClass::Underfit
    } else if selected == truth {
        FitClass::Exact
    } else {
        FitClass::Overfit
    }
}
