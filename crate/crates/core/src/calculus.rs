//! Losses and their exact first and second derivatives.
//!
//! A single forward pass ([`Tape`]) carries the filtered regressors together
//! with their derivatives in the decay parameters. For a damped pair the cosine
//! and sine sums are the real and imaginary parts of `F(z) = sum_m z^m y`, with
//! `z = gamma e^{i phi}`, so all derivatives follow from `F'(z)` and `F''(z)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

use crate::error::{arg, Result};
use crate::linalg::{spd_inverse_logdet, DuplicationMatrix};
use crate::model::{gemv_acc, ModelOrder, Regressors};
use crate::params::{AlphaVector, ThetaVector};
use crate::scalar::Real;
use crate::series::Series;

/// Residuals, regressors and their decay-parameter derivatives for all `t`.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    order: ModelOrder,
    n: usize,
    len: usize,
    n1: usize,
    second: bool,
    loadings: Vec<Vec<T>>,
    regs: Regressors<T>,
    e: Vec<T>,
    // [t][i][a]
    dl: Vec<T>,
    dl2: Vec<T>,
    // [t][j][a]: d/dgamma, d/dphi and second derivatives of F
    dg: Vec<Complex<T>>,
    dp: Vec<Complex<T>>,
    dgg: Vec<Complex<T>>,
    dpp: Vec<Complex<T>>,
    dgp: Vec<Complex<T>>,
}

impl<T: Real> Tape<T> {
    /// Runs the pass over `steps <= T` time points. Second derivatives are
    /// carried only when `second` is set.
    pub fn new(y: &Series<T>, alpha: &AlphaVector<T>, steps: usize, second: bool) -> Result<Self> {
        if y.dim() != alpha.dim() {
            return Err(arg(format!(
                "series dimension {} differs from parameter dimension {}",
                y.dim(),
                alpha.dim()
            )));
        }
        let steps = steps.min(y.len());
        let order = alpha.order();
        let n = y.dim();
        let (p, r, s) = (order.p, order.r, order.s);
        let omega = alpha.omega();
        let regs = Regressors::compute(y, &omega, order, steps);
        let loadings: Vec<Vec<T>> = alpha
            .loadings()
            .mats()
            .iter()
            .map(|m| m.as_slice().to_vec())
            .collect();
        let mut e = y.as_slice()[..steps * n].to_vec();
        let neg = -T::one();
        for t in 0..steps {
            let out = &mut e[t * n..(t + 1) * n];
            for (k, g) in loadings.iter().enumerate() {
                gemv_acc(g, regs.get(t, k), out, neg);
            }
        }

        let czero = Complex::new(T::zero(), T::zero());
        let mut dl = vec![T::zero(); steps * r * n];
        let mut dl2 = if second { vec![T::zero(); steps * r * n] } else { Vec::new() };
        let sz = steps * s * n;
        let mut dg = vec![czero; sz];
        let mut dp = vec![czero; sz];
        let (mut dgg, mut dpp, mut dgp) = if second {
            (vec![czero; sz], vec![czero; sz], vec![czero; sz])
        } else {
            (Vec::new(), Vec::new(), Vec::new())
        };

        // lambda: state (f, f', f'')
        let mut lf = vec![T::zero(); r * n];
        let mut lf1 = vec![T::zero(); r * n];
        let mut lf2 = vec![T::zero(); r * n];
        let mut cf = vec![czero; s * n];
        let mut cf1 = vec![czero; s * n];
        let mut cf2 = vec![czero; s * n];
        let two = T::lit(2.0);
        let ctwo = Complex::new(two, T::zero());
        let zs: Vec<Complex<T>> = omega
            .etas
            .iter()
            .map(|&(g, phi)| Complex::new(g * phi.cos(), g * phi.sin()))
            .collect();
        let units: Vec<Complex<T>> = omega
            .etas
            .iter()
            .map(|&(_, phi)| Complex::new(phi.cos(), phi.sin()))
            .collect();
        let iu = Complex::new(T::zero(), T::one());
        for t in 0..steps {
            let base = t * r * n;
            dl[base..base + r * n].copy_from_slice(&lf1);
            if second {
                dl2[base..base + r * n].copy_from_slice(&lf2);
            }
            let cb = t * s * n;
            for j in 0..s {
                let (z, u) = (zs[j], units[j]);
                for a in 0..n {
                    let idx = j * n + a;
                    let f1 = cf1[idx];
                    dg[cb + idx] = f1 * u;
                    dp[cb + idx] = f1 * iu * z;
                    if second {
                        let f2 = cf2[idx];
                        dgg[cb + idx] = f2 * u * u;
                        dpp[cb + idx] = -(f2 * z * z) - f1 * z;
                        dgp[cb + idx] = iu * u * (f2 * z + f1);
                    }
                }
            }
            let lagged = if t >= p { Some(y.row(t - p)) } else { None };
            for (i, &lam) in omega.lambdas.iter().enumerate() {
                for a in 0..n {
                    let idx = i * n + a;
                    let add = lagged.map_or(T::zero(), |v| v[a]);
                    let base_val = lf[idx] + add;
                    lf2[idx] = two * lf1[idx] + lam * lf2[idx];
                    lf1[idx] = base_val + lam * lf1[idx];
                    lf[idx] = lam * base_val;
                }
            }
            for (j, &z) in zs.iter().enumerate() {
                for a in 0..n {
                    let idx = j * n + a;
                    let add = Complex::new(lagged.map_or(T::zero(), |v| v[a]), T::zero());
                    let base_val = cf[idx] + add;
                    cf2[idx] = ctwo * cf1[idx] + z * cf2[idx];
                    cf1[idx] = base_val + z * cf1[idx];
                    cf[idx] = z * base_val;
                }
            }
        }
        Ok(Self {
            order,
            n,
            len: steps,
            n1: order.n_alpha(n),
            second,
            loadings,
            regs,
            e,
            dl,
            dl2,
            dg,
            dp,
            dgg,
            dpp,
            dgp,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn n_alpha(&self) -> usize {
        self.n1
    }

    /// Residual at zero-based `t`.
    #[inline]
    pub fn residual(&self, t: usize) -> &[T] {
        &self.e[t * self.n..(t + 1) * self.n]
    }

    pub fn residual_buffer(&self) -> &[T] {
        &self.e
    }

    pub fn regressors(&self) -> &Regressors<T> {
        &self.regs
    }

    /// `-(G_c Re(D) + G_s Im(D))` for pair `j`; `out` is overwritten.
    fn pair_column(&self, j: usize, d: &[Complex<T>], out: &mut [T]) {
        let n = self.n;
        let kc = self.order.p + self.order.r + 2 * j;
        let re: Vec<T> = d.iter().map(|c| c.re).collect();
        let im: Vec<T> = d.iter().map(|c| c.im).collect();
        out[..n].iter_mut().for_each(|v| *v = T::zero());
        let neg = -T::one();
        gemv_acc(&self.loadings[kc], &re, out, neg);
        gemv_acc(&self.loadings[kc + 1], &im, out, neg);
    }

    /// Dense `N x n1` Jacobian `d e_t / d alpha'` at zero-based `t`, written
    /// column-major into `out`.
    pub fn jacobian_into(&self, t: usize, out: &mut [T]) {
        let n = self.n;
        let (p, r, s) = (self.order.p, self.order.r, self.order.s);
        out.iter_mut().for_each(|v| *v = T::zero());
        let neg = -T::one();
        for i in 0..r {
            let f1 = &self.dl[(t * r + i) * n..(t * r + i + 1) * n];
            gemv_acc(&self.loadings[p + i], f1, &mut out[i * n..(i + 1) * n], neg);
        }
        for j in 0..s {
            let off = (t * s + j) * n;
            let cg = r + 2 * j;
            self.pair_column(j, &self.dg[off..off + n], &mut out[cg * n..(cg + 1) * n]);
            self.pair_column(j, &self.dp[off..off + n], &mut out[(cg + 1) * n..(cg + 2) * n]);
        }
        let no = self.order.n_omega();
        for k in 0..self.order.d() {
            let z = self.regs.get(t, k);
            for b in 0..n {
                for a in 0..n {
                    let col = no + k * n * n + a + b * n;
                    out[col * n + a] = -z[b];
                }
            }
        }
    }

    pub fn jacobian(&self, t: usize) -> DMatrix<T> {
        let mut buf = vec![T::zero(); self.n * self.n1];
        self.jacobian_into(t, &mut buf);
        DMatrix::from_column_slice(self.n, self.n1, &buf)
    }

    /// Nonzero second-derivative blocks at zero-based `t`. Requires a tape
    /// built with second derivatives.
    pub fn second_derivatives(&self, t: usize) -> ResidualSecondDerivatives<T> {
        assert!(self.second, "tape built without second derivatives");
        let n = self.n;
        let (p, r, s) = (self.order.p, self.order.r, self.order.s);
        let no = self.order.n_omega();
        let neg = -T::one();
        let mut entries = Vec::new();
        let unit = |a: usize, v: T| {
            let mut col = vec![T::zero(); n];
            col[a] = v;
            col
        };
        for i in 0..r {
            let k = p + i;
            let off = (t * r + i) * n;
            let mut col = vec![T::zero(); n];
            gemv_acc(&self.loadings[k], &self.dl2[off..off + n], &mut col, neg);
            entries.push((i, i, col));
            for b in 0..n {
                for a in 0..n {
                    let gi = no + k * n * n + a + b * n;
                    entries.push((i, gi, unit(a, -self.dl[off + b])));
                }
            }
        }
        for j in 0..s {
            let off = (t * s + j) * n;
            let (ig, ip) = (r + 2 * j, r + 2 * j + 1);
            let kc = p + r + 2 * j;
            for (x, y, d) in [(ig, ig, &self.dgg), (ip, ip, &self.dpp), (ig, ip, &self.dgp)] {
                let mut col = vec![T::zero(); n];
                self.pair_column(j, &d[off..off + n], &mut col);
                entries.push((x, y, col));
            }
            for (x, d) in [(ig, &self.dg), (ip, &self.dp)] {
                for b in 0..n {
                    for a in 0..n {
                        let gc = no + kc * n * n + a + b * n;
                        let gs = no + (kc + 1) * n * n + a + b * n;
                        entries.push((x, gc, unit(a, -d[off + b].re)));
                        entries.push((x, gs, unit(a, -d[off + b].im)));
                    }
                }
            }
        }
        ResidualSecondDerivatives {
            n1: self.n1,
            dim: n,
            entries,
        }
    }

    /// Adds `scale * sum_c w_c d^2 e_{t,c} / d alpha d alpha'` to `h`.
    pub fn contract_into(&self, t: usize, w: &[T], scale: T, h: &mut DMatrix<T>) {
        assert!(self.second, "tape built without second derivatives");
        let n = self.n;
        let (p, r, s) = (self.order.p, self.order.r, self.order.s);
        let no = self.order.n_omega();
        // w' G for every loading
        let wg = |k: usize, v: &[T]| -> T {
            let g = &self.loadings[k];
            let mut acc = T::zero();
            for b in 0..n {
                let mut gb = T::zero();
                for a in 0..n {
                    gb += w[a] * g[a + b * n];
                }
                acc += gb * v[b];
            }
            acc
        };
        for i in 0..r {
            let k = p + i;
            let off = (t * r + i) * n;
            h[(i, i)] -= scale * wg(k, &self.dl2[off..off + n]);
            for b in 0..n {
                for a in 0..n {
                    let gi = no + k * n * n + a + b * n;
                    let v = -scale * w[a] * self.dl[off + b];
                    h[(i, gi)] += v;
                    h[(gi, i)] += v;
                }
            }
        }
        for j in 0..s {
            let off = (t * s + j) * n;
            let (ig, ip) = (r + 2 * j, r + 2 * j + 1);
            let kc = p + r + 2 * j;
            let pair = |d: &[Complex<T>]| -> T {
                let re: Vec<T> = d.iter().map(|c| c.re).collect();
                let im: Vec<T> = d.iter().map(|c| c.im).collect();
                -(wg(kc, &re) + wg(kc + 1, &im))
            };
            h[(ig, ig)] += scale * pair(&self.dgg[off..off + n]);
            h[(ip, ip)] += scale * pair(&self.dpp[off..off + n]);
            let gp = scale * pair(&self.dgp[off..off + n]);
            h[(ig, ip)] += gp;
            h[(ip, ig)] += gp;
            for (x, d) in [(ig, &self.dg), (ip, &self.dp)] {
                for b in 0..n {
                    let db = d[off + b];
                    for a in 0..n {
                        let gc = no + kc * n * n + a + b * n;
                        let gs = gc + n * n;
                        let vc = -scale * w[a] * db.re;
                        let vs = -scale * w[a] * db.im;
                        h[(x, gc)] += vc;
                        h[(gc, x)] += vc;
                        h[(x, gs)] += vs;
                        h[(gs, x)] += vs;
                    }
                }
            }
        }
    }
}

/// Sparse second derivatives of one residual: the listed `(a, b)` pairs with
/// `a <= b` hold `d^2 e_t / d alpha_a d alpha_b`; all other pairs are zero.
#[derive(Debug, Clone)]
pub struct ResidualSecondDerivatives<T> {
    pub n1: usize,
    pub dim: usize,
    pub entries: Vec<(usize, usize, Vec<T>)>,
}

impl<T: Real> ResidualSecondDerivatives<T> {
    /// `d^2 e_t / d alpha_a d alpha_b` (symmetric in `a`, `b`).
    pub fn get(&self, a: usize, b: usize) -> Vec<T> {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        self.entries
            .iter()
            .find(|(x, y, _)| *x == lo && *y == hi)
            .map(|(_, _, v)| v.clone())
            .unwrap_or_else(|| vec![T::zero(); self.dim])
    }

    /// `sum_c w_c d^2 e_c / d alpha d alpha'` as a dense matrix.
    pub fn contract(&self, w: &[T]) -> DMatrix<T> {
        let mut h = DMatrix::zeros(self.n1, self.n1);
        for (a, b, v) in &self.entries {
            let val = v.iter().zip(w).fold(T::zero(), |acc, (x, y)| acc + *x * *y);
            h[(*a, *b)] += val;
            if a != b {
                h[(*b, *a)] += val;
            }
        }
        h
    }
}

fn check_t<T: Real>(series: &Series<T>, t: usize) -> Result<()> {
    if t == 0 || t > series.len() {
        return Err(arg(format!("time index {t} outside 1..={}", series.len())));
    }
    Ok(())
}

/// `T^{-1} sum_t ||e_t||^2`.
pub fn ls_loss<T: Real>(series: &Series<T>, alpha: &AlphaVector<T>) -> Result<T> {
    let tape = Tape::new(series, alpha, series.len(), false)?;
    let ss = tape.e.iter().fold(T::zero(), |acc, v| acc + *v * *v);
    Ok(ss / T::from_count(series.len()))
}

/// `2 T^{-1} sum_t J_t' e_t`.
pub fn ls_gradient<T: Real>(series: &Series<T>, alpha: &AlphaVector<T>) -> Result<DVector<T>> {
    let tape = Tape::new(series, alpha, series.len(), false)?;
    let n = series.dim();
    let n1 = tape.n1;
    let mut j = vec![T::zero(); n * n1];
    let mut g = DVector::zeros(n1);
    for t in 0..tape.len {
        tape.jacobian_into(t, &mut j);
        let e = tape.residual(t);
        for c in 0..n1 {
            let col = &j[c * n..(c + 1) * n];
            g[c] += col.iter().zip(e).fold(T::zero(), |a, (x, y)| a + *x * *y);
        }
    }
    Ok(g * (T::lit(2.0) / T::from_count(series.len())))
}

/// `T^{-1} sum_t [ln|Sigma|/2 + e_t' Sigma^{-1} e_t / 2]`.
pub fn qml_loss<T: Real>(series: &Series<T>, theta: &ThetaVector<T>) -> Result<T> {
    let (inv, logdet) = spd_inverse_logdet(&theta.sigma_matrix())?;
    let tape = Tape::new(series, theta.alpha(), series.len(), false)?;
    let n = series.dim();
    let mut q = T::zero();
    for t in 0..tape.len {
        let e = tape.residual(t);
        for a in 0..n {
            for b in 0..n {
                q += e[a] * inv[(a, b)] * e[b];
            }
        }
    }
    let half = T::lit(0.5);
    Ok(half * logdet + half * q / T::from_count(series.len()))
}

/// `d e_t / d alpha'` at 1-based `t`.
pub fn residual_jacobian<T: Real>(series: &Series<T>, alpha: &AlphaVector<T>, t: usize) -> Result<DMatrix<T>> {
    check_t(series, t)?;
    let tape = Tape::new(series, alpha, t, false)?;
    Ok(tape.jacobian(t - 1))
}

/// Nonzero second-derivative blocks of `e_t` at 1-based `t`.
pub fn residual_second_derivatives<T: Real>(
    series: &Series<T>,
    alpha: &AlphaVector<T>,
    t: usize,
) -> Result<ResidualSecondDerivatives<T>> {
    check_t(series, t)?;
    let tape = Tape::new(series, alpha, t, true)?;
    Ok(tape.second_derivatives(t - 1))
}

/// Per-observation scores `d l_t / d theta` as the rows of a `T x n2` matrix.
pub fn qml_scores_per_t<T: Real>(series: &Series<T>, theta: &ThetaVector<T>) -> Result<DMatrix<T>> {
    let sigma = theta.sigma_matrix();
    let (inv, _) = spd_inverse_logdet(&sigma)?;
    let tape = Tape::new(series, theta.alpha(), series.len(), false)?;
    Ok(scores_from_tape(&tape, &inv))
}

pub(crate) fn scores_from_tape<T: Real>(tape: &Tape<T>, inv: &DMatrix<T>) -> DMatrix<T> {
    let n = tape.n;
    let n1 = tape.n1;
    let dup = DuplicationMatrix::new(n);
    let nv = dup.vech_len();
    let mut out = DMatrix::zeros(tape.len, n1 + nv);
    let mut j = vec![T::zero(); n * n1];
    let half = T::lit(0.5);
    for t in 0..tape.len {
        tape.jacobian_into(t, &mut j);
        let e = tape.residual(t);
        let w: Vec<T> = (0..n)
            .map(|a| (0..n).fold(T::zero(), |acc, b| acc + inv[(a, b)] * e[b]))
            .collect();
        for c in 0..n1 {
            let col = &j[c * n..(c + 1) * n];
            out[(t, c)] = col.iter().zip(&w).fold(T::zero(), |acc, (x, y)| acc + *x * *y);
        }
        for u in 0..nv {
            let (a, b) = dup.pair(u);
            let m_ab = inv[(a, b)] - w[a] * w[b];
            out[(t, n1 + u)] = if a == b { half * m_ab } else { m_ab };
        }
    }
    out
}

/// Average score `T^{-1} sum_t d l_t / d theta`.
pub fn qml_score<T: Real>(series: &Series<T>, theta: &ThetaVector<T>) -> Result<DVector<T>> {
    let s = qml_scores_per_t(series, theta)?;
    let mut g = DVector::zeros(s.ncols());
    for c in 0..s.ncols() {
        g[c] = s.column(c).iter().fold(T::zero(), |a, v| a + *v);
    }
    Ok(g / T::from_count(series.len()))
}

/// Averaged Hessian of the quasi-log-likelihood, `n2 x n2`.
pub fn qml_hessian<T: Real>(series: &Series<T>, theta: &ThetaVector<T>) -> Result<DMatrix<T>> {
    let sigma = theta.sigma_matrix();
    let (inv, _) = spd_inverse_logdet(&sigma)?;
    let tape = Tape::new(series, theta.alpha(), series.len(), true)?;
    Ok(hessian_from_tape(&tape, &inv))
}

pub(crate) fn hessian_from_tape<T: Real>(tape: &Tape<T>, inv: &DMatrix<T>) -> DMatrix<T> {
    let n = tape.n;
    let n1 = tape.n1;
    let dup = DuplicationMatrix::new(n);
    let nv = dup.vech_len();
    let n2 = n1 + nv;
    let mut h = DMatrix::zeros(n2, n2);
    let mut haa = DMatrix::zeros(n1, n1);
    let mut jbuf = vec![T::zero(); n * n1];
    let mut s_bar = DMatrix::zeros(n, n);
    let inv_t = T::one() / T::from_count(tape.len);
    for t in 0..tape.len {
        tape.jacobian_into(t, &mut jbuf);
        let jm = DMatrix::from_column_slice(n, n1, &jbuf);
        let e = tape.residual(t);
        let ev = DVector::from_column_slice(e);
        let w = inv * &ev;
        tape.contract_into(t, w.as_slice(), T::one(), &mut haa);
        let jt_inv = jm.transpose() * inv;
        haa += &jt_inv * &jm;
        // alpha-sigma block: -(J' inv)[:, a] w_b - (J' inv)[:, b] w_a
        for u in 0..nv {
            let (a, b) = dup.pair(u);
            for c in 0..n1 {
                let v = if a == b {
                    -jt_inv[(c, a)] * w[a]
                } else {
                    -(jt_inv[(c, a)] * w[b] + jt_inv[(c, b)] * w[a])
                };
                h[(c, n1 + u)] += v;
            }
        }
        s_bar += &ev * ev.transpose();
    }
    haa *= inv_t;
    s_bar *= inv_t;
    for a in 0..n1 {
        for b in 0..n1 {
            h[(a, b)] = (haa[(a, b)] + haa[(b, a)]) * T::lit(0.5);
        }
        for u in 0..nv {
            let v = h[(a, n1 + u)] * inv_t;
            h[(a, n1 + u)] = v;
            h[(n1 + u, a)] = v;
        }
    }
    let ss = sigma_sigma_block(inv, &s_bar, &dup);
    for u in 0..nv {
        for v in 0..nv {
            h[(n1 + u, n1 + v)] = ss[(u, v)];
        }
    }
    h
}

/// `d^2/dsigma dsigma'` of `ln|Sigma|/2 + tr(Sigma^{-1} S)/2`:
/// `-tr(P E_u P E_v)/2 + tr(P E_u P E_v P S)` with `P = Sigma^{-1}`.
fn sigma_sigma_block<T: Real>(inv: &DMatrix<T>, s: &DMatrix<T>, dup: &DuplicationMatrix) -> DMatrix<T> {
    let n = inv.nrows();
    let nv = dup.vech_len();
    let basis: Vec<DMatrix<T>> = (0..nv)
        .map(|u| {
            let (a, b) = dup.pair(u);
            let mut e = DMatrix::zeros(n, n);
            e[(a, b)] = T::one();
            e[(b, a)] = T::one();
            inv * e
        })
        .collect();
    let ps = inv * s;
    let half = T::lit(0.5);
    let mut out = DMatrix::zeros(nv, nv);
    for u in 0..nv {
        for v in u..nv {
            let m = &basis[u] * &basis[v];
            let val = -half * m.trace() + (&m * &ps).trace();
            out[(u, v)] = val;
            out[(v, u)] = val;
        }
    }
    out
}
