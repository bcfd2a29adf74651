#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sarma::calculus::{qml_loss, qml_score};
use sarma::model::{residuals, DecayParams, LoadingSet, ModelOrder, ScalableArmaModel};
use sarma::params::{AlphaVector, ThetaVector};
use sarma::series::Series;

pub fn fd_step(x: f64) -> f64 {
    1e-6 * x.abs().max(1.0)
}

/// `|a - b| / max(1, |b|)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| rel_err(*x, *y)).fold(0.0, f64::max)
}

pub struct Instance {
    pub series: Series<f64>,
    pub alpha: AlphaVector<f64>,
    pub sigma: DMatrix<f64>,
}

pub fn random_order(rng: &mut ChaCha8Rng) -> ModelOrder {
    ModelOrder::new(rng.gen_range(1..=2), rng.gen_range(1..=2), rng.gen_range(1..=2))
}

pub fn random_instance(rng: &mut ChaCha8Rng, n: usize, order: ModelOrder, len: usize) -> Instance {
    let lambdas: Vec<f64> = (0..order.r)
        .map(|_| {
            let m = rng.gen_range(0.2..0.85);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect::<Vec<f64>>();
    let mut lambdas = lambdas;
    lambdas.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut etas: Vec<(f64, f64)> = (0..order.s)
        .map(|_| (rng.gen_range(0.2..0.85), rng.gen_range(0.3..2.8)))
        .collect();
    etas.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let omega = DecayParams { lambdas, etas };
    let mats = (0..order.d())
        .map(|_| DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.4..0.4)))
        .collect();
    let loadings = LoadingSet::new(n, mats).unwrap();
    let alpha = AlphaVector::from_parts(order, &omega, &loadings).unwrap();
    let vals: Vec<f64> = (0..len * n).map(|_| rng.gen_range(-1.5..1.5)).collect();
    let series = Series::from_row_major(len, n, vals).unwrap();
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.5..0.5));
    let sigma = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
    Instance { series, alpha, sigma }
}

/// Residual at 1-based `t` using the unchecked parameter layout.
pub fn residual_at(series: &Series<f64>, alpha: &AlphaVector<f64>, t: usize) -> Vec<f64> {
    let model = unchecked_model(alpha);
    let e = residuals(series, &model).unwrap();
    e.row(t - 1).iter().copied().collect()
}

/// Builds the model without sorting so that column order matches `alpha`.
pub fn unchecked_model(alpha: &AlphaVector<f64>) -> ScalableArmaModel<f64> {
    let order = alpha.order();
    let om = alpha.omega();
    let mut sorted = om.lambdas.clone();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut gs: Vec<f64> = om.etas.iter().map(|e| e.0).collect();
    gs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let ordered = sorted == om.lambdas && gs == om.etas.iter().map(|e| e.0).collect::<Vec<_>>();
    assert!(ordered, "test helper expects ordered decay parameters");
    ScalableArmaModel::new(order, om, alpha.loadings(), None).unwrap()
}

pub fn perturbed(alpha: &AlphaVector<f64>, idx: usize, h: f64) -> AlphaVector<f64> {
    let mut v = alpha.as_slice().to_vec();
    v[idx] += h;
    AlphaVector::new(alpha.order(), alpha.dim(), v).unwrap()
}

/// Central differences of the residual at 1-based `t`, columns in alpha order.
pub fn fd_jacobian(series: &Series<f64>, alpha: &AlphaVector<f64>, t: usize) -> DMatrix<f64> {
    let n = series.dim();
    let mut j = DMatrix::zeros(n, alpha.len());
    for c in 0..alpha.len() {
        let h = fd_step(alpha.as_slice()[c]);
        let up = brute_residual(series, &perturbed(alpha, c, h), t);
        let dn = brute_residual(series, &perturbed(alpha, c, -h), t);
        for a in 0..n {
            j[(a, c)] = (up[a] - dn[a]) / (2.0 * h);
        }
    }
    j
}

/// `e_t = y_t - sum_{h<t} A_h y_{t-h}` with weights evaluated directly from
/// powers and trigonometric functions, no recursion.
pub fn brute_residual(series: &Series<f64>, alpha: &AlphaVector<f64>, t: usize) -> Vec<f64> {
    let order = alpha.order();
    let n = series.dim();
    let om = alpha.omega();
    let ld = alpha.loadings();
    let mut e: Vec<f64> = series.row(t - 1).to_vec();
    for h in 1..t {
        let mut a = DMatrix::zeros(n, n);
        if h <= order.p {
            a += ld.get(h);
        } else {
            let m = (h - order.p) as i32;
            for (i, l) in om.lambdas.iter().enumerate() {
                a += ld.get(order.p + i + 1) * l.powi(m);
            }
            for (j, (g, phi)) in om.etas.iter().enumerate() {
                let amp = g.powi(m);
                let mf = m as f64;
                a += ld.get(order.p + order.r + 2 * j + 1) * (amp * (mf * phi).cos());
                a += ld.get(order.p + order.r + 2 * j + 2) * (amp * (mf * phi).sin());
            }
        }
        let yv = DVector::from_column_slice(series.row(t - 1 - h));
        let c = a * yv;
        for k in 0..n {
            e[k] -= c[k];
        }
    }
    e
}

pub fn theta_perturbed(theta: &ThetaVector<f64>, idx: usize, h: f64) -> ThetaVector<f64> {
    let mut v = theta.to_vec();
    v[idx] += h;
    let a = theta.alpha();
    ThetaVector::from_flat(a.order(), a.dim(), &v).unwrap()
}

pub fn fd_qml_score(series: &Series<f64>, theta: &ThetaVector<f64>) -> Vec<f64> {
    let v = theta.to_vec();
    (0..v.len())
        .map(|c| {
            let h = fd_step(v[c]);
            let up = qml_loss(series, &theta_perturbed(theta, c, h)).unwrap();
            let dn = qml_loss(series, &theta_perturbed(theta, c, -h)).unwrap();
            (up - dn) / (2.0 * h)
        })
        .collect()
}

pub fn fd_qml_hessian(series: &Series<f64>, theta: &ThetaVector<f64>) -> DMatrix<f64> {
    let v = theta.to_vec();
    let n2 = v.len();
    let mut h = DMatrix::zeros(n2, n2);
    for c in 0..n2 {
        let st = fd_step(v[c]);
        let up = qml_score(series, &theta_perturbed(theta, c, st)).unwrap();
        let dn = qml_score(series, &theta_perturbed(theta, c, -st)).unwrap();
        for r in 0..n2 {
            h[(r, c)] = (up[r] - dn[r]) / (2.0 * st);
        }
    }
    h
}
