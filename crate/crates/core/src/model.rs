//! The scalable ARMA model: a VAR(infinity) whose lag matrices are mixtures of
//! exponential-decay and damped-sinusoid weights times loading matrices.
//!
//! Lags `h` and loading indices `k` are 1-based in the public API, matching
//! the usual notation `A_h = sum_k l_{hk}(omega) G_k`. Time indices passed to
//! [`filtered_regressors`] are 1-based as well; everything internal is 0-based.
//!
//! Pre-sample observations are taken to be zero, so every infinite sum over
//! past observations stops at the first observation.

use nalgebra::DMatrix;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::linalg::spectral_norm;
use crate::scalar::Real;
use crate::series::Series;

/// Order `(p, r, s)`: `p` direct AR lags, `r` exponential decays and `s`
/// damped-sinusoid pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelOrder {
    pub p: usize,
    pub r: usize,
    pub s: usize,
}

impl ModelOrder {
    pub const fn new(p: usize, r: usize, s: usize) -> Self {
        Self { p, r, s }
    }

    /// Number of loading matrices, `p + r + 2s`.
    #[inline]
    pub const fn d(&self) -> usize {
        self.p + self.r + 2 * self.s
    }

    /// Number of decay parameters, `r + 2s`.
    #[inline]
    pub const fn n_omega(&self) -> usize {
        self.r + 2 * self.s
    }

    /// Length of the coefficient vector alpha for dimension `n`.
    #[inline]
    pub const fn n_alpha(&self, n: usize) -> usize {
        self.n_omega() + n * n * self.d()
    }

    /// Length of theta = (alpha, vech(Sigma)).
    #[inline]
    pub const fn n_theta(&self, n: usize) -> usize {
        self.n_alpha(n) + n * (n + 1) / 2
    }

    pub const fn is_degenerate(&self) -> bool {
        self.d() == 0
    }
}

impl std::fmt::Display for ModelOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.p, self.r, self.s)
    }
}

impl std::str::FromStr for ModelOrder {
    type Err = crate::error::SarmaError;

    /// Parses `"p,r,s"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().trim_matches(|c| c == '(' || c == ')').split(',').collect();
        if parts.len() != 3 {
            return Err(arg(format!("order must be p,r,s; got {s:?}")));
        }
        let mut v = [0usize; 3];
        for (slot, part) in v.iter_mut().zip(&parts) {
            *slot = part
                .trim()
                .parse()
                .map_err(|_| arg(format!("order component {part:?} is not a nonnegative integer")))?;
        }
        Ok(Self::new(v[0], v[1], v[2]))
    }
}

/// Decay parameters omega: real rates `lambda_i` and pairs `eta_j = (gamma_j, phi_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayParams<T> {
    pub lambdas: Vec<T>,
    pub etas: Vec<(T, T)>,
}

impl<T: Real> DecayParams<T> {
    /// Validates the parameter space: every lambda nonzero inside (-1, 1),
    /// every gamma in (0, 1) and every phi in (0, pi).
    pub fn new(lambdas: Vec<T>, etas: Vec<(T, T)>) -> Result<Self> {
        for (i, &l) in lambdas.iter().enumerate() {
            if !(l.abs() < T::one()) || l == T::zero() {
                return Err(arg(format!(
                    "lambda{} = {} outside (-1,0)U(0,1)",
                    i + 1,
                    l.as_f64()
                )));
            }
        }
        for (j, &(g, phi)) in etas.iter().enumerate() {
            if !(g > T::zero() && g < T::one()) {
                return Err(arg(format!("gamma{} = {} outside (0,1)", j + 1, g.as_f64())));
            }
            if !(phi > T::zero() && phi < T::pi()) {
                return Err(arg(format!("phi{} = {} outside (0,pi)", j + 1, phi.as_f64())));
            }
        }
        Ok(Self { lambdas, etas })
    }

    pub fn empty() -> Self {
        Self {
            lambdas: Vec::new(),
            etas: Vec::new(),
        }
    }

    pub fn r(&self) -> usize {
        self.lambdas.len()
    }

    pub fn s(&self) -> usize {
        self.etas.len()
    }

    /// Strictly descending lambdas and gammas.
    pub fn is_ordered(&self) -> bool {
        self.lambdas.windows(2).all(|w| w[0] > w[1]) && self.etas.windows(2).all(|w| w[0].0 > w[1].0)
    }

    /// `max{|lambda_i|, gamma_j}`; zero when there are no decay terms.
    pub fn max_rate(&self) -> T {
        let a = self.lambdas.iter().fold(T::zero(), |m, l| m.max(l.abs()));
        self.etas.iter().fold(a, |m, e| m.max(e.0))
    }
}

/// The `d` loading matrices `G_1..G_d`, each `N x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingSet<T> {
    dim: usize,
    mats: Vec<DMatrix<T>>,
}

impl<T: Real> LoadingSet<T> {
    pub fn new(dim: usize, mats: Vec<DMatrix<T>>) -> Result<Self> {
        if dim == 0 {
            return Err(arg("loading dimension must be positive"));
        }
        if let Some(k) = mats.iter().position(|m| m.shape() != (dim, dim)) {
            return Err(arg(format!(
                "G{} has shape {:?}, expected {dim}x{dim}",
                k + 1,
                mats[k].shape()
            )));
        }
        Ok(Self { dim, mats })
    }

    pub fn zeros(dim: usize, d: usize) -> Self {
        Self {
            dim,
            mats: vec![DMatrix::zeros(dim, dim); d],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    /// `G_k`, 1-based.
    pub fn get(&self, k: usize) -> &DMatrix<T> {
        &self.mats[k - 1]
    }

    pub fn mats(&self) -> &[DMatrix<T>] {
        &self.mats
    }

    pub fn mats_mut(&mut self) -> &mut [DMatrix<T>] {
        &mut self.mats
    }
}

/// Symmetric positive semi-definite innovation covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseCov<T>(DMatrix<T>);

impl<T: Real> NoiseCov<T> {
    /// Accepts a square matrix that is symmetric to relative tolerance 1e-10.
    pub fn new(m: DMatrix<T>) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(arg(format!("covariance must be square, got {:?}", m.shape())));
        }
        let scale = m.amax().max(T::one());
        let asym = (&m - m.transpose()).amax();
        if !(asym <= T::lit(1e-10) * scale) {
            return Err(arg(format!("covariance is not symmetric (max asymmetry {:e})", asym.as_f64())));
        }
        let sym = (&m + m.transpose()) * T::lit(0.5);
        Ok(Self(sym))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }
}

/// A fully specified scalable ARMA model.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalableArmaModel<T> {
    order: ModelOrder,
    omega: DecayParams<T>,
    loadings: LoadingSet<T>,
    sigma: Option<NoiseCov<T>>,
}

impl<T: Real> ScalableArmaModel<T> {
    /// Checks counts and shapes, then sorts lambdas (and gammas) into
    /// descending order, permuting the matching loading matrices.
    pub fn new(
        order: ModelOrder,
        omega: DecayParams<T>,
        loadings: LoadingSet<T>,
        sigma: Option<NoiseCov<T>>,
    ) -> Result<Self> {
        if omega.r() != order.r || omega.s() != order.s {
            return Err(arg(format!(
                "order {order} needs {} lambdas and {} etas, got {} and {}",
                order.r,
                order.s,
                omega.r(),
                omega.s()
            )));
        }
        if loadings.len() != order.d() {
            return Err(arg(format!(
                "order {order} needs {} loading matrices, got {}",
                order.d(),
                loadings.len()
            )));
        }
        if let Some(s) = &sigma {
            if s.dim() != loadings.dim() {
                return Err(arg("sigma dimension differs from loading dimension"));
            }
        }
        let (omega, loadings) = normalize_order(order, omega, loadings);
        Ok(Self {
            order,
            omega,
            loadings,
            sigma,
        })
    }

    pub fn order(&self) -> ModelOrder {
        self.order
    }

    pub fn omega(&self) -> &DecayParams<T> {
        &self.omega
    }

    pub fn loadings(&self) -> &LoadingSet<T> {
        &self.loadings
    }

    pub fn sigma(&self) -> Option<&NoiseCov<T>> {
        self.sigma.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.loadings.dim()
    }

    pub fn with_sigma(mut self, sigma: Option<NoiseCov<T>>) -> Self {
        self.sigma = sigma;
        self
    }
}

/// Sorts lambdas and gammas descending, carrying their loadings along.
pub(crate) fn normalize_order<T: Real>(
    order: ModelOrder,
    omega: DecayParams<T>,
    loadings: LoadingSet<T>,
) -> (DecayParams<T>, LoadingSet<T>) {
    let p = order.p;
    let r = order.r;
    let mut lam_idx: Vec<usize> = (0..r).collect();
    lam_idx.sort_by(|&a, &b| {
        omega.lambdas[b]
            .partial_cmp(&omega.lambdas[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut eta_idx: Vec<usize> = (0..order.s).collect();
    eta_idx.sort_by(|&a, &b| {
        omega.etas[b]
            .0
            .partial_cmp(&omega.etas[a].0)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mats = loadings.mats;
    let mut out = Vec::with_capacity(mats.len());
    out.extend_from_slice(&mats[..p]);
    for &i in &lam_idx {
        out.push(mats[p + i].clone());
    }
    for &j in &eta_idx {
        out.push(mats[p + r + 2 * j].clone());
        out.push(mats[p + r + 2 * j + 1].clone());
    }
    let omega = DecayParams {
        lambdas: lam_idx.iter().map(|&i| omega.lambdas[i]).collect(),
        etas: eta_idx.iter().map(|&j| omega.etas[j]).collect(),
    };
    (
        omega,
        LoadingSet {
            dim: loadings.dim,
            mats: out,
        },
    )
}

/// Weight `l_{hk}(omega)`, with 1-based lag `h` and column `k`.
pub fn weight<T: Real>(h: usize, k: usize, omega: &DecayParams<T>, order: ModelOrder) -> Result<T> {
    if h == 0 || k == 0 || k > order.d() {
        return Err(arg(format!(
            "weight index (h={h}, k={k}) out of range for d={}",
            order.d()
        )));
    }
    if omega.r() != order.r || omega.s() != order.s {
        return Err(arg("decay parameters do not match the order"));
    }
    let p = order.p;
    if h <= p {
        return Ok(if h == k { T::one() } else { T::zero() });
    }
    if k <= p {
        return Ok(T::zero());
    }
    let m = (h - p) as i32;
    let c = k - p - 1;
    if c < order.r {
        return Ok(omega.lambdas[c].powi(m));
    }
    let j = (c - order.r) / 2;
    let (g, phi) = omega.etas[j];
    let mf = T::lit(m as f64);
    let amp = g.powi(m);
    Ok(if (c - order.r) % 2 == 0 {
        amp * (mf * phi).cos()
    } else {
        amp * (mf * phi).sin()
    })
}

/// Lag coefficient `A_h(omega, g)` for 1-based `h`.
pub fn ar_coefficient<T: Real>(h: usize, model: &ScalableArmaModel<T>) -> Result<DMatrix<T>> {
    if h == 0 {
        return Err(arg("lag must be at least 1"));
    }
    let order = model.order;
    let n = model.dim();
    if h <= order.p {
        return Ok(model.loadings.get(h).clone());
    }
    let mut a = DMatrix::zeros(n, n);
    for k in order.p + 1..=order.d() {
        let w = weight(h, k, &model.omega, order)?;
        a += model.loadings.get(k) * w;
    }
    Ok(a)
}

/// Stacked regressors `z_t = (z_{1t}, ..., z_{dt})`: the `p` lagged
/// observations followed by the `r + 2s` filtered sums.
#[derive(Debug, Clone)]
pub struct Regressors<T> {
    steps: usize,
    d: usize,
    n: usize,
    z: Vec<T>,
}

impl<T: Real> Regressors<T> {
    /// Regressors for zero-based times `0..steps`; `steps` may be one past
    /// the end of the series (the forecast step).
    pub fn compute(y: &Series<T>, omega: &DecayParams<T>, order: ModelOrder, steps: usize) -> Self {
        let n = y.dim();
        let d = order.d();
        let p = order.p;
        let r = order.r;
        let len = y.len();
        let mut z = vec![T::zero(); steps * d * n];
        let mut lam_state = vec![T::zero(); r * n];
        let mut eta_state = vec![Complex::new(T::zero(), T::zero()); order.s * n];
        let rot: Vec<Complex<T>> = omega
            .etas
            .iter()
            .map(|&(g, phi)| Complex::new(g * phi.cos(), g * phi.sin()))
            .collect();
        for t in 0..steps {
            let base = t * d * n;
            for k in 0..p {
                if t > k && t - k - 1 < len {
                    z[base + k * n..base + (k + 1) * n].copy_from_slice(y.row(t - k - 1));
                }
            }
            for i in 0..r {
                let off = base + (p + i) * n;
                z[off..off + n].copy_from_slice(&lam_state[i * n..(i + 1) * n]);
            }
            for j in 0..order.s {
                let c_off = base + (p + r + 2 * j) * n;
                let s_off = c_off + n;
                for a in 0..n {
                    let f = eta_state[j * n + a];
                    z[c_off + a] = f.re;
                    z[s_off + a] = f.im;
                }
            }
            // advance: f_{t+1} = rate * (f_t + y_{t-p})
            let lagged = if t >= p && t - p < len { Some(y.row(t - p)) } else { None };
            for (i, &lam) in omega.lambdas.iter().enumerate() {
                for a in 0..n {
                    let add = lagged.map_or(T::zero(), |v| v[a]);
                    let st = &mut lam_state[i * n + a];
                    *st = lam * (*st + add);
                }
            }
            for (j, &zr) in rot.iter().enumerate() {
                for a in 0..n {
                    let add = lagged.map_or(T::zero(), |v| v[a]);
                    let st = &mut eta_state[j * n + a];
                    *st = zr * (*st + Complex::new(add, T::zero()));
                }
            }
        }
        Self { steps, d, n, z }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `z_{kt}` for zero-based `t` and zero-based `k`.
    #[inline]
    pub fn get(&self, t: usize, k: usize) -> &[T] {
        let off = (t * self.d + k) * self.n;
        &self.z[off..off + self.n]
    }

    /// `dN x steps` column-major view of all regressors.
    pub(crate) fn raw(&self) -> &[T] {
        &self.z
    }

    /// All `d * N` regressors at zero-based time `t`, block `k` at `k*N..`.
    #[inline]
    pub fn stacked(&self, t: usize) -> &[T] {
        let off = t * self.d * self.n;
        &self.z[off..off + self.d * self.n]
    }
}

/// `out += G v` for a column-major `N x N` slice `g`.
#[inline]
pub(crate) fn gemv_acc<T: Real>(g: &[T], v: &[T], out: &mut [T], scale: T) {
    let n = v.len();
    for (b, &vb) in v.iter().enumerate() {
        if vb == T::zero() {
            continue;
        }
        let col = &g[b * n..(b + 1) * n];
        let f = vb * scale;
        for a in 0..n {
            out[a] += col[a] * f;
        }
    }
}

/// Row-major `T x N` residuals (or forecasts when `steps = T + 1`).
pub(crate) fn residual_buffer<T: Real>(y: &Series<T>, loadings: &[DMatrix<T>], regs: &Regressors<T>) -> Vec<T> {
    let n = y.dim();
    let len = y.len();
    let mut e = y.as_slice()[..len * n].to_vec();
    let neg = -T::one();
    for t in 0..len {
        let out = &mut e[t * n..(t + 1) * n];
        for (k, g) in loadings.iter().enumerate() {
            gemv_acc(g.as_slice(), regs.get(t, k), out, neg);
        }
    }
    e
}

fn check_dims<T: Real>(series: &Series<T>, model: &ScalableArmaModel<T>) -> Result<()> {
    if series.dim() != model.dim() {
        return Err(arg(format!(
            "series dimension {} differs from model dimension {}",
            series.dim(),
            model.dim()
        )));
    }
    Ok(())
}

/// Filtered regressors at 1-based time `t`: `r` exponential sums followed by
/// the cosine and sine sums of each damped pair, interleaved per pair.
pub fn filtered_regressors<T: Real>(
    series: &Series<T>,
    t: usize,
    omega: &DecayParams<T>,
    order: ModelOrder,
) -> Result<Vec<Vec<T>>> {
    if t == 0 || t > series.len() {
        return Err(arg(format!("time index {t} outside 1..={}", series.len())));
    }
    if omega.r() != order.r || omega.s() != order.s {
        return Err(arg("decay parameters do not match the order"));
    }
    let regs = Regressors::compute(series, omega, order, t);
    Ok((order.p..order.d())
        .map(|k| regs.get(t - 1, k).to_vec())
        .collect())
}

/// Truncated residuals `e_t = y_t - sum_{h<t} A_h y_{t-h}` as a `T x N` matrix.
pub fn residuals<T: Real>(series: &Series<T>, model: &ScalableArmaModel<T>) -> Result<DMatrix<T>> {
    check_dims(series, model)?;
    let regs = Regressors::compute(series, &model.omega, model.order, series.len());
    let e = residual_buffer(series, model.loadings.mats(), &regs);
    Ok(DMatrix::from_row_slice(series.len(), series.dim(), &e))
}

/// One identifiability or irreducibility problem.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// `|lambda_i|` below tolerance (1-based index).
    ZeroRate { index: usize, value: f64 },
    /// `gamma_j` below tolerance.
    ZeroDamping { index: usize, value: f64 },
    DuplicateRates { first: usize, second: usize },
    DuplicateDampings { first: usize, second: usize },
    /// `||G_k||_F <= tol` for an MA loading `k > p`.
    DegenerateLoading { k: usize, norm: f64 },
    /// `G_p` equals the sum of the exponential and cosine loadings.
    Reducible { gap: f64 },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IdentifiabilityReport {
    pub violations: Vec<Violation>,
}

impl IdentifiabilityReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn is_reducible(&self) -> bool {
        self.violations.iter().any(|v| matches!(v, Violation::Reducible { .. }))
    }
}

/// Diagnoses nonzero/distinct decay rates, nondegenerate MA loadings and the
/// irreducibility of `p`.
pub fn check_identifiability<T: Real>(model: &ScalableArmaModel<T>, tol: f64) -> IdentifiabilityReport {
    let mut violations = Vec::new();
    let om = &model.omega;
    let order = model.order;
    for (i, l) in om.lambdas.iter().enumerate() {
        if l.abs().as_f64() < tol {
            violations.push(Violation::ZeroRate {
                index: i + 1,
                value: l.as_f64(),
            });
        }
    }
    for (j, e) in om.etas.iter().enumerate() {
        if e.0.as_f64() < tol {
            violations.push(Violation::ZeroDamping {
                index: j + 1,
                value: e.0.as_f64(),
            });
        }
    }
    for a in 0..om.r() {
        for b in a + 1..om.r() {
            if (om.lambdas[a] - om.lambdas[b]).abs().as_f64() <= tol {
                violations.push(Violation::DuplicateRates {
                    first: a + 1,
                    second: b + 1,
                });
            }
        }
    }
    for a in 0..om.s() {
        for b in a + 1..om.s() {
            if (om.etas[a].0 - om.etas[b].0).abs().as_f64() <= tol {
                violations.push(Violation::DuplicateDampings {
                    first: a + 1,
                    second: b + 1,
                });
            }
        }
    }
    for k in order.p + 1..=order.d() {
        let norm = model.loadings.get(k).norm().as_f64();
        if norm <= tol {
            violations.push(Violation::DegenerateLoading { k, norm });
        }
    }
    if order.p >= 1 {
        let mut sum = DMatrix::zeros(model.dim(), model.dim());
        for i in 1..=order.r {
            sum += model.loadings.get(order.p + i);
        }
        for j in 1..=order.s {
            sum += model.loadings.get(order.p + order.r + 2 * j - 1);
        }
        let gap = (model.loadings.get(order.p) - sum).norm().as_f64();
        if gap <= tol {
            violations.push(Violation::Reducible { gap });
        }
    }
    IdentifiabilityReport { violations }
}

/// Result of the sufficient stationarity check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityCheck {
    pub holds: bool,
    /// `1 - (sum_{k<=p} ||G_k|| + rho/(1-rho) sum_{k>p} ||G_k||)`.
    pub margin: f64,
    pub rho: f64,
}

/// Sufficient condition for strict stationarity in terms of operator norms.
pub fn check_stationarity_sufficient<T: Real>(model: &ScalableArmaModel<T>) -> StationarityCheck {
    let order = model.order;
    let rho = model.omega.max_rate().as_f64();
    let ar: f64 = (1..=order.p)
        .map(|k| spectral_norm(model.loadings.get(k)).as_f64())
        .sum();
    let ma: f64 = (order.p + 1..=order.d())
        .map(|k| spectral_norm(model.loadings.get(k)).as_f64())
        .sum();
    let lhs = if ma == 0.0 { ar } else { ar + rho / (1.0 - rho) * ma };
    StationarityCheck {
        holds: lhs < 1.0,
        margin: 1.0 - lhs,
        rho,
    }
}
