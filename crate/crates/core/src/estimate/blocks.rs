//! Block updates of the coordinate descent.
//!
//! With every other block fixed, the objective restricted to one decay block
//! is `T^{-1} sum_t ||c_t - G x_t(omega_block)||_W^2` where `c_t` is the
//! partial residual and `W` is `I` (least squares) or `Sigma^{-1}`
//! (quasi-likelihood). Precomputing `a_t = G'W c_t` and `M = G'WG` makes each
//! evaluation `O(T N^2)`.

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::error::{Result, SarmaError};
use crate::linalg::spd_inverse_logdet;
use crate::model::{gemv_acc, DecayParams, LoadingSet, ModelOrder, NoiseCov, Regressors};
use crate::params::AlphaVector;
use crate::scalar::Real;
use crate::series::Series;

/// Which criterion the decay and loading blocks minimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    LeastSquares,
    QuasiLikelihood,
}

/// Inner solver settings shared by the decay-block updates.
#[derive(Debug, Clone, Copy)]
pub struct InnerSettings {
    pub max_iter: usize,
    pub margin: f64,
    /// Points per sign for the lambda scan.
    pub lambda_grid: usize,
    /// Points per axis for the `(gamma, phi)` scan.
    pub eta_grid: usize,
}

impl Default for InnerSettings {
    fn default() -> Self {
        Self {
            max_iter: 20,
            margin: 1e-4,
            lambda_grid: 50,
            eta_grid: 16,
        }
    }
}

/// Current iterate of the coordinate descent together with cached
/// regressors and residuals.
#[derive(Debug, Clone)]
pub struct BcdState<'a, T> {
    y: &'a Series<T>,
    order: ModelOrder,
    n: usize,
    pub lambdas: Vec<T>,
    pub etas: Vec<(T, T)>,
    /// Column-major `N x N` loadings.
    pub loadings: Vec<Vec<T>>,
    sigma: DMatrix<T>,
    weight: DMatrix<T>,
    logdet: T,
    objective: Objective,
    lam_z: Vec<Vec<T>>,
    eta_u: Vec<Vec<T>>,
    eta_v: Vec<Vec<T>>,
    e: Vec<T>,
    /// Set when a loading update needed a ridge.
    pub ridge_used: bool,
}

const LBACKTRACK: usize = 30;

impl<'a, T: Real> BcdState<'a, T> {
    pub fn new(
        y: &'a Series<T>,
        order: ModelOrder,
        omega: &DecayParams<T>,
        loadings: &LoadingSet<T>,
        objective: Objective,
        sigma: Option<&DMatrix<T>>,
    ) -> Result<Self> {
        let n = y.dim();
        let mut st = Self {
            y,
            order,
            n,
            lambdas: omega.lambdas.clone(),
            etas: omega.etas.clone(),
            loadings: loadings.mats().iter().map(|m| m.as_slice().to_vec()).collect(),
            sigma: DMatrix::identity(n, n),
            weight: DMatrix::identity(n, n),
            logdet: T::zero(),
            objective,
            lam_z: Vec::new(),
            eta_u: Vec::new(),
            eta_v: Vec::new(),
            e: Vec::new(),
            ridge_used: false,
        };
        st.lam_z = (0..order.r).map(|i| lambda_path(y, order.p, st.lambdas[i])).collect();
        for j in 0..order.s {
            let (u, v) = eta_path(y, order.p, st.etas[j]);
            st.eta_u.push(u);
            st.eta_v.push(v);
        }
        st.recompute_residuals();
        match (objective, sigma) {
            (Objective::QuasiLikelihood, Some(s)) => st.set_sigma(s.clone())?,
            (Objective::QuasiLikelihood, None) => {
                let s = st.residual_covariance();
                st.set_sigma(s)?;
            }
            _ => {}
        }
        Ok(st)
    }

    pub fn order(&self) -> ModelOrder {
        self.order
    }

    pub fn sigma(&self) -> &DMatrix<T> {
        &self.sigma
    }

    pub fn residuals(&self) -> &[T] {
        &self.e
    }

    fn len(&self) -> usize {
        self.y.len()
    }

    fn set_sigma(&mut self, s: DMatrix<T>) -> Result<()> {
        let n = self.n;
        let (inv, logdet) = match spd_inverse_logdet(&s) {
            Ok(v) => v,
            Err(_) => {
                let jittered = &s + DMatrix::identity(n, n) * T::lit(1e-10);
                spd_inverse_logdet(&jittered).map_err(|e| {
                    SarmaError::Numeric(format!("covariance iterate singular after jitter: {e}"))
                })?
            }
        };
        self.sigma = s;
        self.weight = inv;
        self.logdet = logdet;
        Ok(())
    }

    pub fn residual_covariance(&self) -> DMatrix<T> {
        residual_covariance(&self.e, self.n)
    }

    fn recompute_residuals(&mut self) {
        let n = self.n;
        let len = self.len();
        let (p, r) = (self.order.p, self.order.r);
        let mut e = self.y.as_slice().to_vec();
        let neg = -T::one();
        for t in 0..len {
            let out = &mut e[t * n..(t + 1) * n];
            for k in 0..p {
                if t > k {
                    gemv_acc(&self.loadings[k], self.y.row(t - k - 1), out, neg);
                }
            }
            for i in 0..r {
                gemv_acc(&self.loadings[p + i], &self.lam_z[i][t * n..(t + 1) * n], out, neg);
            }
            for j in 0..self.order.s {
                let kc = p + r + 2 * j;
                gemv_acc(&self.loadings[kc], &self.eta_u[j][t * n..(t + 1) * n], out, neg);
                gemv_acc(&self.loadings[kc + 1], &self.eta_v[j][t * n..(t + 1) * n], out, neg);
            }
        }
        self.e = e;
    }

    /// Least-squares loss or quasi-likelihood at the current iterate.
    pub fn objective_value(&self) -> T {
        let n = self.n;
        let inv_t = T::one() / T::from_count(self.len());
        match self.objective {
            Objective::LeastSquares => self.e.iter().fold(T::zero(), |a, v| a + *v * *v) * inv_t,
            Objective::QuasiLikelihood => {
                let mut q = T::zero();
                for t in 0..self.len() {
                    let e = &self.e[t * n..(t + 1) * n];
                    for a in 0..n {
                        let mut wa = T::zero();
                        for b in 0..n {
                            wa += self.weight[(a, b)] * e[b];
                        }
                        q += e[a] * wa;
                    }
                }
                let half = T::lit(0.5);
                half * self.logdet + half * q * inv_t
            }
        }
    }

    /// Builds `a_t = G'W c_t` for the stacked loadings `gs` (each `N x N`)
    /// whose regressors are `zs`, with `c_t = e_t + sum G z`. Returns
    /// `(a, M, const)` where `M = G'WG` and `const = T^{-1} sum c'Wc`.
    fn block_problem(&self, gs: &[&[T]], zs: &[&[T]]) -> (Vec<T>, DMatrix<T>, T) {
        let n = self.n;
        let len = self.len();
        let q = gs.len() * n;
        let mut gfull = DMatrix::zeros(n, q);
        for (b, g) in gs.iter().enumerate() {
            for col in 0..n {
                for row in 0..n {
                    gfull[(row, b * n + col)] = g[row + col * n];
                }
            }
        }
        let gtw = gfull.transpose() * &self.weight;
        let m = &gtw * &gfull;
        let mut a = vec![T::zero(); len * q];
        let mut c = vec![T::zero(); n];
        let mut cst = T::zero();
        for t in 0..len {
            c.copy_from_slice(&self.e[t * n..(t + 1) * n]);
            for (g, z) in gs.iter().zip(zs) {
                gemv_acc(g, &z[t * n..(t + 1) * n], &mut c, T::one());
            }
            for row in 0..q {
                let mut acc = T::zero();
                for col in 0..n {
                    acc += gtw[(row, col)] * c[col];
                }
                a[t * q + row] = acc;
            }
            for r1 in 0..n {
                let mut wc = T::zero();
                for r2 in 0..n {
                    wc += self.weight[(r1, r2)] * c[r2];
                }
                cst += c[r1] * wc;
            }
        }
        (a, m, cst / T::from_count(len))
    }

    /// Objective restricted to `lambda_i` as `(value, first, second)` derivatives.
    fn lambda_eval(&self, a: &[T], m: &DMatrix<T>, cst: T, lam: T, derivs: bool) -> (T, T, T) {
        let n = self.n;
        let len = self.len();
        let p = self.order.p;
        let mut f = vec![T::zero(); n];
        let mut f1 = vec![T::zero(); n];
        let mut f2 = vec![T::zero(); n];
        let mut mf = vec![T::zero(); n];
        let mut mf1 = vec![T::zero(); n];
        let (mut q, mut d1, mut d2) = (T::zero(), T::zero(), T::zero());
        let two = T::lit(2.0);
        for t in 0..len {
            let at = &a[t * n..(t + 1) * n];
            sym_mul(m, &f, &mut mf);
            let mut lin = T::zero();
            let mut quad = T::zero();
            for k in 0..n {
                lin += at[k] * f[k];
                quad += f[k] * mf[k];
            }
            q += quad - two * lin;
            if derivs {
                sym_mul(m, &f1, &mut mf1);
                let (mut g1, mut h1, mut h2) = (T::zero(), T::zero(), T::zero());
                for k in 0..n {
                    let r = mf[k] - at[k];
                    g1 += r * f1[k];
                    h1 += f1[k] * mf1[k];
                    h2 += r * f2[k];
                }
                d1 += two * g1;
                d2 += two * (h1 + h2);
            }
            if t >= p {
                let yv = self.y.row(t - p);
                for k in 0..n {
                    let base = f[k] + yv[k];
                    if derivs {
                        f2[k] = two * f1[k] + lam * f2[k];
                        f1[k] = base + lam * f1[k];
                    }
                    f[k] = lam * base;
                }
            }
        }
        let inv_t = T::one() / T::from_count(len);
        (cst + q * inv_t, d1 * inv_t, d2 * inv_t)
    }

    /// Objective restricted to `eta_j`: value, gradient and Hessian in `(gamma, phi)`.
    fn eta_eval(&self, a: &[T], m: &DMatrix<T>, cst: T, eta: (T, T), derivs: bool) -> (T, [T; 2], [T; 3]) {
        let n = self.n;
        let len = self.len();
        let p = self.order.p;
        let q2 = 2 * n;
        let (g, phi) = eta;
        let z = Complex::new(g * phi.cos(), g * phi.sin());
        let u = Complex::new(phi.cos(), phi.sin());
        let iu = Complex::new(T::zero(), T::one());
        let czero = Complex::new(T::zero(), T::zero());
        let ctwo = Complex::new(T::lit(2.0), T::zero());
        let mut f = vec![czero; n];
        let mut f1 = vec![czero; n];
        let mut f2 = vec![czero; n];
        let mut x = vec![T::zero(); q2];
        let mut xg = vec![T::zero(); q2];
        let mut xp = vec![T::zero(); q2];
        let mut xgg = vec![T::zero(); q2];
        let mut xpp = vec![T::zero(); q2];
        let mut xgp = vec![T::zero(); q2];
        let mut mx = vec![T::zero(); q2];
        let mut mxg = vec![T::zero(); q2];
        let mut mxp = vec![T::zero(); q2];
        let two = T::lit(2.0);
        let mut val = T::zero();
        let mut grad = [T::zero(); 2];
        let mut hess = [T::zero(); 3];
        for t in 0..len {
            for k in 0..n {
                x[k] = f[k].re;
                x[n + k] = f[k].im;
            }
            let at = &a[t * q2..(t + 1) * q2];
            sym_mul(m, &x, &mut mx);
            let mut lin = T::zero();
            let mut quad = T::zero();
            for k in 0..q2 {
                lin += at[k] * x[k];
                quad += x[k] * mx[k];
            }
            val += quad - two * lin;
            if derivs {
                for k in 0..n {
                    let dg = f1[k] * u;
                    let dp = f1[k] * iu * z;
                    let dgg = f2[k] * u * u;
                    let dpp = -(f2[k] * z * z) - f1[k] * z;
                    let dgp = iu * u * (f2[k] * z + f1[k]);
                    xg[k] = dg.re;
                    xg[n + k] = dg.im;
                    xp[k] = dp.re;
                    xp[n + k] = dp.im;
                    xgg[k] = dgg.re;
                    xgg[n + k] = dgg.im;
                    xpp[k] = dpp.re;
                    xpp[n + k] = dpp.im;
                    xgp[k] = dgp.re;
                    xgp[n + k] = dgp.im;
                }
                sym_mul(m, &xg, &mut mxg);
                sym_mul(m, &xp, &mut mxp);
                let mut acc = [T::zero(); 5];
                for k in 0..q2 {
                    let r = mx[k] - at[k];
                    acc[0] += r * xg[k];
                    acc[1] += r * xp[k];
                    acc[2] += xg[k] * mxg[k] + r * xgg[k];
                    acc[3] += xp[k] * mxp[k] + r * xpp[k];
                    acc[4] += xg[k] * mxp[k] + r * xgp[k];
                }
                grad[0] += two * acc[0];
                grad[1] += two * acc[1];
                hess[0] += two * acc[2];
                hess[1] += two * acc[4];
                hess[2] += two * acc[3];
            }
            if t >= p {
                let yv = self.y.row(t - p);
                for k in 0..n {
                    let base = f[k] + Complex::new(yv[k], T::zero());
                    if derivs {
                        f2[k] = ctwo * f1[k] + z * f2[k];
                        f1[k] = base + z * f1[k];
                    }
                    f[k] = z * base;
                }
            }
        }
        let inv_t = T::one() / T::from_count(len);
        (
            cst + val * inv_t,
            [grad[0] * inv_t, grad[1] * inv_t],
            [hess[0] * inv_t, hess[1] * inv_t, hess[2] * inv_t],
        )
    }

    /// One-dimensional Newton-Raphson update of `lambda_i`. With `scan`, a
    /// grid over both signs seeds the search; otherwise the iterate stays on
    /// its current side of zero.
    pub fn update_lambda(&mut self, i: usize, scan: bool, cfg: &InnerSettings) -> T {
        let p = self.order.p;
        let k = p + i;
        let g = self.loadings[k].clone();
        let z = std::mem::take(&mut self.lam_z[i]);
        let (a, m, cst) = self.block_problem(&[&g], &[&z]);
        self.lam_z[i] = z;
        let margin = T::lit(cfg.margin);
        let hi = T::one() - margin;
        let cur = self.lambdas[i];
        let (q_cur, _, _) = self.lambda_eval(&a, &m, cst, cur, false);
        let mut start = cur;
        let mut q_start = q_cur;
        if scan {
            let pts = cfg.lambda_grid.max(2);
            for side in [T::one(), -T::one()] {
                for s in 0..pts {
                    let mag = margin + (hi - margin) * T::from_count(s) / T::from_count(pts - 1);
                    let x = side * mag;
                    let (q, _, _) = self.lambda_eval(&a, &m, cst, x, false);
                    if q < q_start {
                        q_start = q;
                        start = x;
                    }
                }
            }
        }
        let (lo, up) = if start > T::zero() { (margin, hi) } else { (-hi, -margin) };
        let mut x = start.max(lo).min(up);
        let mut qx = self.lambda_eval(&a, &m, cst, x, false).0;
        let width = up - lo;
        for _ in 0..cfg.max_iter {
            let (_, d1, d2) = self.lambda_eval(&a, &m, cst, x, true);
            if d1 == T::zero() {
                break;
            }
            let mut step = if d2 > T::zero() {
                -d1 / d2
            } else {
                -d1.signum() * width * T::lit(0.1)
            };
            if d2 > T::zero() && (d1 * step).abs() < T::lit(1e-18) * qx.abs().max(T::one()) {
                break;
            }
            let mut accepted = false;
            for _ in 0..LBACKTRACK {
                let cand = (x + step).max(lo).min(up);
                if cand == x {
                    break;
                }
                let qc = self.lambda_eval(&a, &m, cst, cand, false).0;
                if qc <= qx {
                    let moved = (cand - x).abs();
                    x = cand;
                    qx = qc;
                    accepted = true;
                    if moved <= T::lit(1e-12) * x.abs().max(T::one()) {
                        accepted = false;
                    }
                    break;
                }
                step *= T::lit(0.5);
            }
            if !accepted {
                break;
            }
        }
        if qx <= q_cur && x != cur {
            self.lambdas[i] = x;
            let z_new = lambda_path(self.y, p, x);
            let n = self.n;
            let neg = -T::one();
            for t in 0..self.len() {
                let out = &mut self.e[t * n..(t + 1) * n];
                gemv_acc(&g, &self.lam_z[i][t * n..(t + 1) * n], out, T::one());
                gemv_acc(&g, &z_new[t * n..(t + 1) * n], out, neg);
            }
            self.lam_z[i] = z_new;
        }
        self.lambdas[i]
    }

    /// Two-dimensional Newton-Raphson update of `eta_j = (gamma_j, phi_j)`.
    pub fn update_eta(&mut self, j: usize, scan: bool, cfg: &InnerSettings) -> (T, T) {
        let kc = self.order.p + self.order.r + 2 * j;
        let gc = self.loadings[kc].clone();
        let gs = self.loadings[kc + 1].clone();
        let zu = std::mem::take(&mut self.eta_u[j]);
        let zv = std::mem::take(&mut self.eta_v[j]);
        let (a, m, cst) = self.block_problem(&[&gc, &gs], &[&zu, &zv]);
        self.eta_u[j] = zu;
        self.eta_v[j] = zv;
        let margin = T::lit(cfg.margin);
        let (glo, ghi) = (margin, T::one() - margin);
        let (plo, phi_hi) = (margin, T::pi() - margin);
        let clamp = |e: (T, T)| (e.0.max(glo).min(ghi), e.1.max(plo).min(phi_hi));
        let cur = self.etas[j];
        let q_cur = self.eta_eval(&a, &m, cst, cur, false).0;
        let mut start = cur;
        let mut q_start = q_cur;
        if scan {
            let pts = cfg.eta_grid.max(2);
            for gi in 0..pts {
                for pi in 0..pts {
                    let e = (
                        glo + (ghi - glo) * (T::from_count(gi) + T::lit(0.5)) / T::from_count(pts),
                        plo + (phi_hi - plo) * (T::from_count(pi) + T::lit(0.5)) / T::from_count(pts),
                    );
                    let q = self.eta_eval(&a, &m, cst, e, false).0;
                    if q < q_start {
                        q_start = q;
                        start = e;
                    }
                }
            }
        }
        let mut x = clamp(start);
        let mut qx = self.eta_eval(&a, &m, cst, x, false).0;
        let gw = ghi - glo;
        let pw = phi_hi - plo;
        for _ in 0..cfg.max_iter {
            let (_, gr, h) = self.eta_eval(&a, &m, cst, x, true);
            let gnorm = (gr[0] * gr[0] + gr[1] * gr[1]).sqrt();
            if gnorm == T::zero() {
                break;
            }
            let det = h[0] * h[2] - h[1] * h[1];
            let mut step = if h[0] > T::zero() && det > T::zero() {
                ((-(h[2] * gr[0]) + h[1] * gr[1]) / det, (h[1] * gr[0] - h[0] * gr[1]) / det)
            } else {
                let s = T::lit(0.1) * gw.min(pw) / gnorm;
                (-gr[0] * s, -gr[1] * s)
            };
            let decrement = (gr[0] * step.0 + gr[1] * step.1).abs();
            if h[0] > T::zero() && det > T::zero() && decrement < T::lit(1e-18) * qx.abs().max(T::one()) {
                break;
            }
            let mut accepted = false;
            for _ in 0..LBACKTRACK {
                let cand = clamp((x.0 + step.0, x.1 + step.1));
                if cand == x {
                    break;
                }
                let qc = self.eta_eval(&a, &m, cst, cand, false).0;
                if qc <= qx {
                    let moved = (cand.0 - x.0).abs().max((cand.1 - x.1).abs());
                    x = cand;
                    qx = qc;
                    accepted = moved > T::lit(1e-12);
                    break;
                }
                step = (step.0 * T::lit(0.5), step.1 * T::lit(0.5));
            }
            if !accepted {
                break;
            }
        }
        if qx <= q_cur && x != cur {
            self.etas[j] = x;
            let (u_new, v_new) = eta_path(self.y, self.order.p, x);
            let n = self.n;
            let neg = -T::one();
            for t in 0..self.len() {
                let out = &mut self.e[t * n..(t + 1) * n];
                gemv_acc(&gc, &self.eta_u[j][t * n..(t + 1) * n], out, T::one());
                gemv_acc(&gs, &self.eta_v[j][t * n..(t + 1) * n], out, T::one());
                gemv_acc(&gc, &u_new[t * n..(t + 1) * n], out, neg);
                gemv_acc(&gs, &v_new[t * n..(t + 1) * n], out, neg);
            }
            self.eta_u[j] = u_new;
            self.eta_v[j] = v_new;
        }
        self.etas[j]
    }

    /// Derivative of the block objective in `lambda_i` at the current point.
    pub fn lambda_gradient(&self, i: usize) -> (T, T) {
        let g = &self.loadings[self.order.p + i];
        let (a, m, cst) = self.block_problem(&[g], &[&self.lam_z[i]]);
        let (q, d1, _) = self.lambda_eval(&a, &m, cst, self.lambdas[i], true);
        (self.scaled(q), self.scale() * d1)
    }

    /// Objective restricted to `lambda_i`, other blocks fixed.
    pub fn lambda_profile(&self, i: usize, lam: T) -> T {
        let g = &self.loadings[self.order.p + i];
        let (a, m, cst) = self.block_problem(&[g], &[&self.lam_z[i]]);
        self.scaled(self.lambda_eval(&a, &m, cst, lam, false).0)
    }

    /// Objective restricted to `eta_j`, other blocks fixed.
    pub fn eta_profile(&self, j: usize, eta: (T, T)) -> T {
        let kc = self.order.p + self.order.r + 2 * j;
        let (a, m, cst) = self.block_problem(
            &[&self.loadings[kc], &self.loadings[kc + 1]],
            &[&self.eta_u[j], &self.eta_v[j]],
        );
        self.scaled(self.eta_eval(&a, &m, cst, eta, false).0)
    }

    /// Gradient of the objective restricted to `eta_j` at the current point.
    pub fn eta_gradient(&self, j: usize) -> [T; 2] {
        let kc = self.order.p + self.order.r + 2 * j;
        let (a, m, cst) = self.block_problem(
            &[&self.loadings[kc], &self.loadings[kc + 1]],
            &[&self.eta_u[j], &self.eta_v[j]],
        );
        let g = self.eta_eval(&a, &m, cst, self.etas[j], true).1;
        [self.scale() * g[0], self.scale() * g[1]]
    }

    fn scale(&self) -> T {
        match self.objective {
            Objective::LeastSquares => T::one(),
            Objective::QuasiLikelihood => T::lit(0.5),
        }
    }

    /// Maps a weighted sum of squares to the full objective.
    fn scaled(&self, q: T) -> T {
        match self.objective {
            Objective::LeastSquares => q,
            Objective::QuasiLikelihood => T::lit(0.5) * (self.logdet + q),
        }
    }

    /// Closed-form loading update given the current decay parameters.
    pub fn update_g(&mut self) -> Result<()> {
        let omega = self.omega();
        let regs = Regressors::compute(self.y, &omega, self.order, self.len());
        let sol = solve_loadings(self.y, &regs, self.order.d())?;
        self.ridge_used |= sol.ridge;
        self.loadings = sol.mats;
        self.recompute_residuals();
        Ok(())
    }

    /// `Sigma = T^{-1} sum e e'` (quasi-likelihood only).
    pub fn update_sigma(&mut self) -> Result<()> {
        let s = self.residual_covariance();
        self.set_sigma(s)
    }

    pub fn omega(&self) -> DecayParams<T> {
        DecayParams {
            lambdas: self.lambdas.clone(),
            etas: self.etas.clone(),
        }
    }

    pub fn loading_set(&self) -> LoadingSet<T> {
        let n = self.n;
        LoadingSet::new(
            n,
            self.loadings
                .iter()
                .map(|g| DMatrix::from_column_slice(n, n, g))
                .collect(),
        )
        .expect("shapes are consistent")
    }

    pub fn alpha(&self) -> AlphaVector<T> {
        AlphaVector::from_parts(self.order, &self.omega(), &self.loading_set()).expect("consistent")
    }

    /// Sorts lambdas and gammas descending, permuting loadings and caches.
    pub fn normalize(&mut self) {
        let (p, r) = (self.order.p, self.order.r);
        let mut li: Vec<usize> = (0..r).collect();
        li.sort_by(|&a, &b| {
            self.lambdas[b]
                .partial_cmp(&self.lambdas[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut ei: Vec<usize> = (0..self.order.s).collect();
        ei.sort_by(|&a, &b| {
            self.etas[b]
                .0
                .partial_cmp(&self.etas[a].0)
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        if li.iter().enumerate().all(|(a, &b)| a == b) && ei.iter().enumerate().all(|(a, &b)| a == b) {
            return;
        }
        let old_l = std::mem::take(&mut self.loadings);
        let mut new_l: Vec<Vec<T>> = old_l[..p].to_vec();
        for &i in &li {
            new_l.push(old_l[p + i].clone());
        }
        for &j in &ei {
            new_l.push(old_l[p + r + 2 * j].clone());
            new_l.push(old_l[p + r + 2 * j + 1].clone());
        }
        self.loadings = new_l;
        self.lambdas = li.iter().map(|&i| self.lambdas[i]).collect();
        self.lam_z = li.iter().map(|&i| std::mem::take(&mut self.lam_z[i])).collect();
        self.etas = ei.iter().map(|&j| self.etas[j]).collect();
        self.eta_u = ei.iter().map(|&j| std::mem::take(&mut self.eta_u[j])).collect();
        self.eta_v = ei.iter().map(|&j| std::mem::take(&mut self.eta_v[j])).collect();
    }

    /// Flat parameter vector (alpha, then vech(Sigma) for the quasi-likelihood).
    pub fn parameter_vector(&self) -> Vec<T> {
        let mut v = self.alpha().as_slice().to_vec();
        if self.objective == Objective::QuasiLikelihood {
            let n = self.n;
            for col in 0..n {
                for row in col..n {
                    v.push(self.sigma[(row, col)]);
                }
            }
        }
        v
    }
}

#[inline]
fn sym_mul<T: Real>(m: &DMatrix<T>, x: &[T], out: &mut [T]) {
    let q = x.len();
    let ms = m.as_slice();
    for (r, o) in out[..q].iter_mut().enumerate() {
        let col = &ms[r * q..(r + 1) * q];
        *o = col.iter().zip(x).fold(T::zero(), |acc, (a, b)| acc + *a * *b);
    }
}

/// `f_t(lambda)` for all `t`, `T x N` row-major.
pub(crate) fn lambda_path<T: Real>(y: &Series<T>, p: usize, lam: T) -> Vec<T> {
    let n = y.dim();
    let len = y.len();
    let mut out = vec![T::zero(); len * n];
    let mut f = vec![T::zero(); n];
    for t in 0..len {
        out[t * n..(t + 1) * n].copy_from_slice(&f);
        if t >= p {
            let yv = y.row(t - p);
            for k in 0..n {
                f[k] = lam * (f[k] + yv[k]);
            }
        }
    }
    out
}

/// Cosine and sine sums of a damped pair for all `t`.
pub(crate) fn eta_path<T: Real>(y: &Series<T>, p: usize, eta: (T, T)) -> (Vec<T>, Vec<T>) {
    let n = y.dim();
    let len = y.len();
    let z = Complex::new(eta.0 * eta.1.cos(), eta.0 * eta.1.sin());
    let mut u = vec![T::zero(); len * n];
    let mut v = vec![T::zero(); len * n];
    let mut f = vec![Complex::new(T::zero(), T::zero()); n];
    for t in 0..len {
        for k in 0..n {
            u[t * n + k] = f[k].re;
            v[t * n + k] = f[k].im;
        }
        if t >= p {
            let yv = y.row(t - p);
            for k in 0..n {
                f[k] = z * (f[k] + Complex::new(yv[k], T::zero()));
            }
        }
    }
    (u, v)
}

pub(crate) fn residual_covariance<T: Real>(e: &[T], n: usize) -> DMatrix<T> {
    let len = e.len() / n;
    let mut s = DMatrix::zeros(n, n);
    for t in 0..len {
        let et = &e[t * n..(t + 1) * n];
        for a in 0..n {
            for b in 0..=a {
                s[(a, b)] += et[a] * et[b];
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            s[(b, a)] = s[(a, b)];
        }
    }
    s / T::from_count(len)
}

/// Normal equations of the multivariate least-squares loading problem.
pub(crate) struct LoadingSolution<T> {
    pub mats: Vec<Vec<T>>,
    pub ridge: bool,
    /// Least-squares loss at the solution.
    pub loss: T,
}

/// Multivariate least squares `G = (sum y z')(sum z z')^{-1}` on the stacked
/// regressors. Since every equation shares the regressors, this equals the
/// generalized least-squares solution for any `Sigma`.
pub(crate) fn solve_loadings<T: Real>(y: &Series<T>, regs: &Regressors<T>, d: usize) -> Result<LoadingSolution<T>> {
    let n = y.dim();
    let q = d * n;
    let steps = regs.steps();
    let yy = y.as_slice()[..steps * n].iter().fold(T::zero(), |a, v| a + *v * *v);
    let inv_t = T::one() / T::from_count(steps);
    if q == 0 {
        return Ok(LoadingSolution {
            mats: Vec::new(),
            ridge: false,
            loss: yy * inv_t,
        });
    }
    let z = DMatrix::from_column_slice(q, steps, regs.raw());
    let yt = DMatrix::from_column_slice(n, steps, &y.as_slice()[..steps * n]);
    let zt = z.transpose();
    let sxx = &z * &zt;
    let syx = &yt * &zt;
    let trace = sxx.trace();
    let mut ridge = false;
    let chol = {
        let well = crate::linalg::reciprocal_condition(&sxx) > 1e-14;
        match (well, sxx.clone().cholesky()) {
            (true, Some(c)) => c,
            _ => {
                ridge = true;
                let lam = T::lit(1e-8) * trace.max(T::lit(1e-300)) / T::from_count(q);
                (sxx + DMatrix::identity(q, q) * lam)
                    .cholesky()
                    .ok_or_else(|| SarmaError::Numeric("loading normal equations are singular".into()))?
            }
        }
    };
    // G_full' = Sxx^{-1} Syx'
    let gt = chol.solve(&syx.transpose());
    let explained = (&syx * &gt).trace();
    let mut mats = Vec::with_capacity(d);
    for k in 0..d {
        let mut g = vec![T::zero(); n * n];
        for b in 0..n {
            for a in 0..n {
                g[a + b * n] = gt[(k * n + b, a)];
            }
        }
        mats.push(g);
    }
    Ok(LoadingSolution {
        mats,
        ridge,
        loss: (yy - explained) * inv_t,
    })
}

/// Least-squares loss profiled over the loadings at `omega`.
pub(crate) fn profile_loss<T: Real>(series: &Series<T>, omega: &DecayParams<T>, order: ModelOrder) -> Result<T> {
    let regs = Regressors::compute(series, omega, order, series.len());
    Ok(solve_loadings(series, &regs, order.d())?.loss)
}

/// Closed-form loadings for fixed decay parameters.
pub fn update_g<T: Real>(series: &Series<T>, omega: &DecayParams<T>, order: ModelOrder) -> Result<(LoadingSet<T>, bool)> {
    let regs = Regressors::compute(series, omega, order, series.len());
    let sol = solve_loadings(series, &regs, order.d())?;
    let n = series.dim();
    let set = LoadingSet::new(n, sol.mats.iter().map(|g| DMatrix::from_column_slice(n, n, g)).collect())?;
    Ok((set, sol.ridge))
}

/// `T^{-1} sum e e'` of the truncated residuals at `alpha`.
pub fn update_sigma<T: Real>(series: &Series<T>, alpha: &AlphaVector<T>) -> Result<NoiseCov<T>> {
    let tape = crate::calculus::Tape::new(series, alpha, series.len(), false)?;
    NoiseCov::new(residual_covariance(tape.residual_buffer(), series.dim()))
}
