//! Starting values: random decay parameters and loadings projected from a
//! long VAR fit.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{arg, Result, SarmaError};
use crate::model::{weight, DecayParams, LoadingSet, ModelOrder};
use crate::scalar::Real;
use crate::series::Series;

/// Default VAR order for initialization: `ceil(ln T)`, at least `p`.
pub fn default_var_order(len: usize, p: usize) -> usize {
    let ln = (len.max(2) as f64).ln().ceil() as usize;
    ln.max(p).max(1)
}

/// Uniform draw from the shrunken parameter boxes, sorted descending.
pub fn draw_omega<T: Real, R: Rng + ?Sized>(order: ModelOrder, margin: f64, rng: &mut R) -> DecayParams<T> {
    let span = 1.0 - 2.0 * margin;
    let mut lambdas: Vec<f64> = (0..order.r)
        .map(|_| {
            let mag = margin + span * rng.gen::<f64>();
            if rng.gen::<bool>() {
                mag
            } else {
                -mag
            }
        })
        .collect();
    let mut etas: Vec<(f64, f64)> = (0..order.s)
        .map(|_| {
            let g = margin + span * rng.gen::<f64>();
            let phi = margin + (std::f64::consts::PI - 2.0 * margin) * rng.gen::<f64>();
            (g, phi)
        })
        .collect();
    lambdas.sort_by(|a, b| b.partial_cmp(a).unwrap());
    etas.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    DecayParams {
        lambdas: lambdas.into_iter().map(T::lit).collect(),
        etas: etas.into_iter().map(|(g, p)| (T::lit(g), T::lit(p))).collect(),
    }
}

/// VAR(`var_order`) least squares without intercept over the observations
/// with a full set of lags. Returns `A_1..A_P`.
pub fn var_ols<T: Real>(series: &Series<T>, var_order: usize) -> Result<Vec<DMatrix<T>>> {
    let n = series.dim();
    let len = series.len();
    let pp = var_order;
    if len <= pp * n + pp {
        return Err(arg(format!(
            "VAR({pp}) needs more than {} observations, got {len}",
            pp * n + pp
        )));
    }
    let q = pp * n;
    let mut sxx = DMatrix::<T>::zeros(q, q);
    let mut syx = DMatrix::<T>::zeros(n, q);
    let mut x = vec![T::zero(); q];
    for t in pp..len {
        for h in 0..pp {
            x[h * n..(h + 1) * n].copy_from_slice(series.row(t - h - 1));
        }
        let yt = series.row(t);
        for c in 0..q {
            for r in c..q {
                sxx[(r, c)] += x[r] * x[c];
            }
            for a in 0..n {
                syx[(a, c)] += yt[a] * x[c];
            }
        }
    }
    for c in 0..q {
        for r in 0..c {
            sxx[(r, c)] = sxx[(c, r)];
        }
    }
    let chol = sxx
        .cholesky()
        .ok_or_else(|| SarmaError::Estimation(format!("VAR({pp}) design matrix is singular")))?;
    let at = chol.solve(&syx.transpose());
    Ok((0..pp)
        .map(|h| at.rows(h * n, n).transpose())
        .collect())
}

/// `G_k = sum_h A_h [L (L'L)^{-1}]_{hk}` with `L` the `(T-1) x d` weight
/// matrix at `omega`. Returns the loadings and whether a ridge was needed.
pub fn project_loadings<T: Real>(
    var: &[DMatrix<T>],
    omega: &DecayParams<T>,
    order: ModelOrder,
    len: usize,
    dim: usize,
) -> Result<(LoadingSet<T>, bool)> {
    let d = order.d();
    if d == 0 {
        return Ok((LoadingSet::zeros(dim, 0), false));
    }
    let rows = len.saturating_sub(1).max(d);
    let mut l = DMatrix::<T>::zeros(rows, d);
    for h in 1..=rows {
        for k in 1..=d {
            l[(h - 1, k - 1)] = weight(h, k, omega, order)?;
        }
    }
    let ltl = l.transpose() * &l;
    let mut ridge = false;
    let inv = match ltl.clone().cholesky() {
        Some(c) if crate::linalg::reciprocal_condition(&ltl) > 1e-14 => c.inverse(),
        _ => {
            ridge = true;
            let lam = T::lit(1e-8) * ltl.trace().max(T::lit(1e-300)) / T::from_count(d);
            (ltl + DMatrix::identity(d, d) * lam)
                .cholesky()
                .ok_or_else(|| SarmaError::Numeric("weight Gram matrix is singular".into()))?
                .inverse()
        }
    };
    let proj = l * inv;
    let mats = (0..d)
        .map(|k| {
            let mut g = DMatrix::zeros(dim, dim);
            for (h, a) in var.iter().enumerate() {
                if h < rows {
                    g += a * proj[(h, k)];
                }
            }
            g
        })
        .collect();
    Ok((LoadingSet::new(dim, mats)?, ridge))
}

/// Random decay parameters and the projected VAR loadings.
pub fn init_params<T: Real, R: Rng + ?Sized>(
    series: &Series<T>,
    order: ModelOrder,
    var_order: Option<usize>,
    margin: f64,
    rng: &mut R,
) -> Result<(DecayParams<T>, LoadingSet<T>, bool)> {
    let omega = draw_omega(order, margin, rng);
    let pp = var_order.unwrap_or_else(|| default_var_order(series.len(), order.p));
    let var = var_ols(series, pp)?;
    let (g, ridge) = project_loadings(&var, &omega, order, series.len(), series.dim())?;
    Ok((omega, g, ridge))
}
