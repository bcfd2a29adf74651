//! Plug-in asymptotic covariances, significance tests and the asymptotic
//! relative efficiency of the two estimators.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::function::erf::erfc;

use crate::calculus::{hessian_from_tape, scores_from_tape, Tape};
use crate::error::{arg, Result, SarmaError};
use crate::estimate::{Estimator, FitResult};
use crate::linalg::{spd_inverse_logdet, spd_logdet, sym_inverse};
use crate::model::ScalableArmaModel;
use crate::params::{alpha_labels, AlphaVector};
use crate::scalar::Real;
use crate::series::Series;
use crate::simulate::{gen_innovations, simulate_sarma, Innovation};

const CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct CovarianceEstimates<T> {
    /// `J1^{-1} I1 J1^{-1}` for the least-squares estimator.
    pub xi1: Option<DMatrix<T>>,
    /// `{E[(de'/da) Sigma^{-1} (de/da')]}^{-1}` for the quasi-likelihood estimator.
    pub xi2: Option<DMatrix<T>>,
    /// `J2^{-1} I2 J2^{-1}` over `theta`.
    pub sandwich2: Option<DMatrix<T>>,
    /// Sample variance of `vec(e e')`.
    pub k_hat: DMatrix<T>,
    pub len: usize,
}

impl<T: Real> CovarianceEstimates<T> {
    /// The alpha covariance matching an estimator.
    pub fn alpha_cov(&self, est: Estimator) -> Option<&DMatrix<T>> {
        match est {
            Estimator::Lse => self.xi1.as_ref(),
            Estimator::Qmle => self.xi2.as_ref(),
        }
    }

    /// `sqrt(diag(cov) / T)`.
    pub fn asd(&self, est: Estimator) -> Option<Vec<T>> {
        let len = T::from_count(self.len);
        self.alpha_cov(est)
            .map(|c| c.diagonal().iter().map(|v| (*v / len).sqrt()).collect())
    }
}

/// Sums of `J'J`, `J' S J` and `J' P J` over `t`, averaged.
struct Moments<T> {
    jj: DMatrix<T>,
    jsj: DMatrix<T>,
    jpj: DMatrix<T>,
}

fn moments<T: Real>(tape: &Tape<T>, sigma: &DMatrix<T>, prec: &DMatrix<T>) -> Moments<T> {
    let n = sigma.nrows();
    let n1 = tape.n_alpha();
    let mut jj = DMatrix::zeros(n1, n1);
    let mut jsj = DMatrix::zeros(n1, n1);
    let mut jpj = DMatrix::zeros(n1, n1);
    let mut buf = vec![T::zero(); n * n1];
    for t in 0..tape.len() {
        tape.jacobian_into(t, &mut buf);
        let j = DMatrix::from_column_slice(n, n1, &buf);
        let jt = j.transpose();
        jj += &jt * &j;
        jsj += &jt * sigma * &j;
        jpj += &jt * prec * &j;
    }
    let inv_t = T::one() / T::from_count(tape.len());
    Moments {
        jj: jj * inv_t,
        jsj: jsj * inv_t,
        jpj: jpj * inv_t,
    }
}

fn k_hat<T: Real>(tape: &Tape<T>, n: usize) -> DMatrix<T> {
    let len = tape.len();
    let nn = n * n;
    let mut mean = DVector::zeros(nn);
    let mut vs = Vec::with_capacity(len);
    for t in 0..len {
        let e = DVector::from_column_slice(tape.residual(t));
        let v = DVector::from_column_slice((&e * e.transpose()).as_slice());
        mean += &v;
        vs.push(v);
    }
    let inv_t = T::one() / T::from_count(len);
    mean *= inv_t;
    let mut k = DMatrix::zeros(nn, nn);
    for v in vs {
        let c = v - &mean;
        k += &c * c.transpose();
    }
    k * inv_t
}

fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

/// `Xi1` from the sample averages at `alpha` with `sigma` between the Jacobians.
pub fn lse_covariance_at<T: Real>(
    series: &Series<T>,
    alpha: &AlphaVector<T>,
    sigma: &DMatrix<T>,
) -> Result<CovarianceEstimates<T>> {
    let tape = Tape::new(series, alpha, series.len(), false)?;
    let n = series.dim();
    let m = moments(&tape, sigma, &DMatrix::identity(n, n));
    let j_inv = sym_inverse(&m.jj, CUTOFF)?;
    let xi1 = symmetrize(&(&j_inv * &m.jsj * &j_inv));
    Ok(CovarianceEstimates {
        xi1: Some(xi1),
        xi2: None,
        sandwich2: None,
        k_hat: k_hat(&tape, n),
        len: series.len(),
    })
}

/// `Xi2` and the full sandwich at `(alpha, sigma)`.
pub fn qmle_covariance_at<T: Real>(
    series: &Series<T>,
    alpha: &AlphaVector<T>,
    sigma: &DMatrix<T>,
) -> Result<CovarianceEstimates<T>> {
    let (prec, _) = spd_inverse_logdet(sigma).map_err(|e| SarmaError::Inference(e.to_string()))?;
    let tape = Tape::new(series, alpha, series.len(), true)?;
    let n = series.dim();
    let m = moments(&tape, sigma, &prec);
    let xi2 = symmetrize(&sym_inverse(&m.jpj, CUTOFF)?);
    let scores = scores_from_tape(&tape, &prec);
    let i2 = scores.transpose() * &scores / T::from_count(series.len());
    let j2 = hessian_from_tape(&tape, &prec);
    let j2_inv = sym_inverse(&j2, CUTOFF)?;
    let sandwich = symmetrize(&(&j2_inv * i2 * &j2_inv));
    Ok(CovarianceEstimates {
        xi1: None,
        xi2: Some(xi2),
        sandwich2: Some(sandwich),
        k_hat: k_hat(&tape, n),
        len: series.len(),
    })
}

/// Plug-in covariance for a least-squares fit, using `Sigma_hat_1`.
pub fn lse_covariance<T: Real>(series: &Series<T>, fit: &FitResult<T>) -> Result<CovarianceEstimates<T>> {
    let alpha = AlphaVector::from_model(&fit.model);
    lse_covariance_at(series, &alpha, fit.sigma_hat.matrix())
}

/// Plug-in covariances for a quasi-likelihood fit at `Sigma(sigma_hat_2)`.
pub fn qmle_covariance<T: Real>(series: &Series<T>, fit: &FitResult<T>) -> Result<CovarianceEstimates<T>> {
    let alpha = AlphaVector::from_model(&fit.model);
    qmle_covariance_at(series, &alpha, fit.sigma_hat.matrix())
}

/// Covariance matching the estimator of `fit`.
pub fn covariance<T: Real>(series: &Series<T>, fit: &FitResult<T>) -> Result<CovarianceEstimates<T>> {
    match fit.estimator {
        Estimator::Lse => lse_covariance(series, fit),
        Estimator::Qmle => qmle_covariance(series, fit),
    }
}

/// Two-sided standard normal p-value.
pub fn normal_p_value(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Serialize)]
pub struct SignificanceRow {
    pub label: String,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p_value: f64,
    pub significant: bool,
}

/// Lagged influence of `y_j` on `y_i` read off the significant loadings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Influence {
    None,
    ShortTermOnly,
    LongTermOnly,
    ShortAndLongTerm,
}

#[derive(Debug, Clone, Serialize)]
pub struct GrangerCell {
    /// Response index (1-based).
    pub to: usize,
    /// Driver index (1-based).
    pub from: usize,
    pub influence: Influence,
    /// Smallest p-value over the short-term loadings, if any.
    pub short_p: Option<f64>,
    pub long_p: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SignificanceTable {
    pub level: f64,
    pub rows: Vec<SignificanceRow>,
    pub granger: Vec<GrangerCell>,
}

/// z statistics and p-values for every alpha entry and the per-cell
/// classification of the loadings.
pub fn significance_table<T: Real>(
    model: &ScalableArmaModel<T>,
    cov: &DMatrix<T>,
    len: usize,
    level: f64,
) -> Result<SignificanceTable> {
    let alpha = AlphaVector::from_model(model);
    let n1 = alpha.len();
    if cov.shape() != (n1, n1) {
        return Err(arg(format!("covariance must be {n1}x{n1}, got {:?}", cov.shape())));
    }
    let labels = alpha_labels(model.order(), model.dim());
    let rows: Vec<SignificanceRow> = (0..n1)
        .map(|i| {
            let est = alpha.as_slice()[i].as_f64();
            let se = (cov[(i, i)].as_f64() / len as f64).sqrt();
            let z = est / se;
            let p = normal_p_value(z);
            SignificanceRow {
                label: labels[i].clone(),
                estimate: est,
                se,
                z,
                p_value: p,
                significant: p < level,
            }
        })
        .collect();
    let order = model.order();
    let n = model.dim();
    let mut granger = Vec::with_capacity(n * n);
    for b in 0..n {
        for a in 0..n {
            let min_p = |ks: std::ops::Range<usize>| {
                ks.map(|k| rows[alpha.g_index(k, a, b)].p_value)
                    .fold(None, |m: Option<f64>, p| Some(m.map_or(p, |m| m.min(p))))
            };
            let short_p = min_p(0..order.p);
            let long_p = min_p(order.p..order.d());
            let s = short_p.is_some_and(|p| p < level);
            let l = long_p.is_some_and(|p| p < level);
            let influence = match (s, l) {
                (false, false) => Influence::None,
                (true, false) => Influence::ShortTermOnly,
                (false, true) => Influence::LongTermOnly,
                (true, true) => Influence::ShortAndLongTerm,
            };
            granger.push(GrangerCell {
                to: a + 1,
                from: b + 1,
                influence,
                short_p,
                long_p,
            });
        }
    }
    Ok(SignificanceTable { level, rows, granger })
}

/// Efficiency of the least-squares estimator relative to the quasi-likelihood
/// one, `100 (|Xi2| / |Xi1|)^{1/n1}`, from sample averages over one simulated
/// path of length `len` at the true parameters. Values below 100 mean the
/// quasi-likelihood estimator is more efficient.
pub fn are(
    model: &ScalableArmaModel<f64>,
    sigma0: &DMatrix<f64>,
    dist: Innovation,
    len: usize,
    seed: u64,
) -> Result<f64> {
    if len < 10 {
        return Err(arg("ARE needs a longer simulated path"));
    }
    let e = gen_innovations(dist, sigma0, len, seed)?;
    let y = simulate_sarma(model, &e)?;
    are_on_series(&y, &AlphaVector::from_model(model), sigma0)
}

/// ARE from sample averages over a given path.
pub fn are_on_series(y: &Series<f64>, alpha: &AlphaVector<f64>, sigma0: &DMatrix<f64>) -> Result<f64> {
    let tape = Tape::new(y, alpha, y.len(), false)?;
    let (prec, _) = spd_inverse_logdet(sigma0).map_err(|e| SarmaError::Inference(e.to_string()))?;
    let m = moments(&tape, sigma0, &prec);
    let ld = |name: &str, mat: &DMatrix<f64>| {
        spd_logdet(&symmetrize(mat))
            .map_err(|e| SarmaError::Inference(format!("{name} is not positive definite: {e}")))
    };
    // log|Xi1| = log|I1| - 2 log|J1|, log|Xi2| = -log|E[J'PJ]|
    let l1 = ld("I1", &m.jsj)? - 2.0 * ld("J1", &m.jj)?;
    let l2 = -ld("E[J'PJ]", &m.jpj)?;
    let n1 = alpha.len() as f64;
    Ok(100.0 * ((l2 - l1) / n1).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_values() {
        assert!((normal_p_value(0.0) - 1.0).abs() < 1e-15);
        assert!((normal_p_value(1.959963984540054) - 0.05).abs() < 1e-10);
        assert!((normal_p_value(-1.959963984540054) - 0.05).abs() < 1e-10);
    }
}
