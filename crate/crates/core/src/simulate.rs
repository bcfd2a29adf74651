//! Data generation from VARMA(1,1) processes whose MA matrix has a prescribed
//! real Jordan form, and the mapping of such processes to scalable ARMA form.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result, SarmaError};
use crate::model::{DecayParams, LoadingSet, ModelOrder, NoiseCov, ScalableArmaModel};
use crate::series::Series;

/// Innovation distribution. Both are scaled to have covariance `Sigma0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Innovation {
    Normal,
    #[serde(rename = "t5")]
    StudentT5,
}

impl std::str::FromStr for Innovation {
    type Err = SarmaError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" | "gaussian" => Ok(Self::Normal),
            "t5" | "student" | "student-t5" => Ok(Self::StudentT5),
            other => Err(arg(format!("unknown distribution {other:?} (normal|t5)"))),
        }
    }
}

impl std::fmt::Display for Innovation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Normal => "normal",
            Self::StudentT5 => "t5",
        })
    }
}

/// `y_t = Phi y_{t-1} + e_t - Theta e_{t-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarmaSpec {
    pub phi: DMatrix<f64>,
    pub theta: DMatrix<f64>,
    pub sigma0: DMatrix<f64>,
    pub dist: Innovation,
    pub burn_in: usize,
}

/// Real Jordan structure of the MA matrix plus the seed of the orthogonal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct JordanSpec {
    pub lambdas: Vec<f64>,
    pub etas: Vec<(f64, f64)>,
    pub dim: usize,
    pub seed: u64,
}

impl JordanSpec {
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.len() + 2 * self.etas.len() > self.dim {
            return Err(arg(format!(
                "r + 2s = {} exceeds N = {}",
                self.lambdas.len() + 2 * self.etas.len(),
                self.dim
            )));
        }
        DecayParams::new(self.lambdas.clone(), self.etas.clone()).map(|_| ())
    }
}

/// Haar-distributed orthogonal matrix from the QR factorization of a Gaussian
/// matrix, with the signs of `diag(R)` absorbed into `Q`.
pub fn random_orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_orthogonal_with(n, &mut rng)
}

pub fn random_orthogonal_with<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let z = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = z.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// `J = diag(lambda_1..lambda_r, C_1..C_s, 0..)` with
/// `C = gamma [[cos phi, sin phi], [-sin phi, cos phi]]`.
pub fn jordan_block(spec: &JordanSpec) -> DMatrix<f64> {
    let n = spec.dim;
    let mut j = DMatrix::zeros(n, n);
    for (i, &l) in spec.lambdas.iter().enumerate() {
        j[(i, i)] = l;
    }
    let r = spec.lambdas.len();
    for (k, &(g, phi)) in spec.etas.iter().enumerate() {
        let o = r + 2 * k;
        j[(o, o)] = g * phi.cos();
        j[(o, o + 1)] = g * phi.sin();
        j[(o + 1, o)] = -g * phi.sin();
        j[(o + 1, o + 1)] = g * phi.cos();
    }
    j
}

/// `Theta = B J B'` and the orthogonal `B` drawn from `spec.seed`.
pub fn jordan_theta(spec: &JordanSpec) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    spec.validate()?;
    let b = random_orthogonal(spec.dim, spec.seed);
    let theta = &b * jordan_block(spec) * b.transpose();
    Ok((theta, b))
}

/// Scalable ARMA representation of order `(1, r, s)` of the VARMA(1,1) with
/// AR matrix `phi` and MA matrix `B J B^{-1}`.
pub fn varma_to_sarma(phi: &DMatrix<f64>, spec: &JordanSpec, b: &DMatrix<f64>) -> Result<ScalableArmaModel<f64>> {
    spec.validate()?;
    let n = spec.dim;
    if phi.shape() != (n, n) || b.shape() != (n, n) {
        return Err(arg("phi and B must be N x N"));
    }
    let b_inv = b
        .clone()
        .try_inverse()
        .ok_or_else(|| SarmaError::Numeric("B is singular".into()))?;
    let theta = b * jordan_block(spec) * &b_inv;
    let g1 = phi - &theta;
    let a_low = &b_inv * &g1;
    let r = spec.lambdas.len();
    let mut mats = vec![g1];
    for i in 0..r {
        mats.push(b.column(i) * a_low.row(i));
    }
    for k in 0..spec.etas.len() {
        let o = r + 2 * k;
        let (b1, b2) = (b.column(o), b.column(o + 1));
        let (a1, a2) = (a_low.row(o), a_low.row(o + 1));
        mats.push(b1 * a1 + b2 * a2);
        mats.push(b1 * a2 - b2 * a1);
    }
    let order = ModelOrder::new(1, r, spec.etas.len());
    ScalableArmaModel::new(
        order,
        DecayParams::new(spec.lambdas.clone(), spec.etas.clone())?,
        LoadingSet::new(n, mats)?,
        None,
    )
}

/// `T x N` i.i.d. innovations with covariance `sigma0`.
pub fn gen_innovations(dist: Innovation, sigma0: &DMatrix<f64>, len: usize, seed: u64) -> Result<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gen_innovations_with(dist, sigma0, len, &mut rng)
}

pub fn gen_innovations_with<R: Rng>(
    dist: Innovation,
    sigma0: &DMatrix<f64>,
    len: usize,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let n = sigma0.nrows();
    let l = sigma0
        .clone()
        .cholesky()
        .ok_or_else(|| SarmaError::Numeric("innovation covariance is not positive definite".into()))?
        .l();
    let chi = ChiSquared::new(5.0).expect("valid degrees of freedom");
    let t_scale = (3.0f64 / 5.0).sqrt();
    let mut out = DMatrix::zeros(len, n);
    let mut z = vec![0.0; n];
    for t in 0..len {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let mult = match dist {
            Innovation::Normal => 1.0,
            Innovation::StudentT5 => {
                let w: f64 = chi.sample(rng);
                t_scale / (w / 5.0).sqrt()
            }
        };
        for a in 0..n {
            let mut acc = 0.0;
            for b in 0..=a {
                acc += l[(a, b)] * z[b];
            }
            out[(t, a)] = acc * mult;
        }
    }
    Ok(out)
}

/// Simulated observations together with the innovations that produced them.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub series: Series<f64>,
    pub innovations: DMatrix<f64>,
}

/// Iterates the VARMA(1,1) recursion from zero states, discards `burn_in`
/// points and returns the next `len`.
pub fn simulate_varma11(spec: &VarmaSpec, len: usize, seed: u64) -> Result<Simulated> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_varma11_with(spec, len, &mut rng)
}

pub fn simulate_varma11_with<R: Rng>(spec: &VarmaSpec, len: usize, rng: &mut R) -> Result<Simulated> {
    if len == 0 {
        return Err(arg("sample size must be positive"));
    }
    let n = spec.phi.nrows();
    let total = len + spec.burn_in;
    let eps = gen_innovations_with(spec.dist, &spec.sigma0, total, rng)?;
    let mut y = vec![0.0; len * n];
    let mut prev_y = vec![0.0; n];
    let mut prev_e = vec![0.0; n];
    let mut cur = vec![0.0; n];
    for t in 0..total {
        for a in 0..n {
            let mut v = eps[(t, a)];
            for b in 0..n {
                v += spec.phi[(a, b)] * prev_y[b] - spec.theta[(a, b)] * prev_e[b];
            }
            cur[a] = v;
        }
        if cur.iter().any(|v| !v.is_finite() || v.abs() > 1e100) {
            return Err(SarmaError::Simulation(format!("path diverged at step {t}")));
        }
        for a in 0..n {
            prev_e[a] = eps[(t, a)];
        }
        prev_y.copy_from_slice(&cur);
        if t >= spec.burn_in {
            let o = (t - spec.burn_in) * n;
            y[o..o + n].copy_from_slice(&cur);
        }
    }
    let innovations = eps.rows(spec.burn_in, len).into_owned();
    Ok(Simulated {
        series: Series::from_row_major(len, n, y)?,
        innovations,
    })
}

/// Forward recursion `y_t = sum_{h<t} A_h y_{t-h} + e_t` of a scalable ARMA
/// model from zero pre-sample values.
pub fn simulate_sarma(model: &ScalableArmaModel<f64>, innovations: &DMatrix<f64>) -> Result<Series<f64>> {
    let n = model.dim();
    if innovations.ncols() != n || innovations.nrows() == 0 {
        return Err(arg("innovations must be a non-empty T x N array"));
    }
    let len = innovations.nrows();
    let order = model.order();
    let (p, r) = (order.p, order.r);
    let om = model.omega();
    let mats: Vec<&[f64]> = model.loadings().mats().iter().map(|m| m.as_slice()).collect();
    let mut y = vec![0.0; len * n];
    let mut lam = vec![0.0; r * n];
    let mut cs = vec![num_complex::Complex::new(0.0, 0.0); order.s * n];
    let zs: Vec<num_complex::Complex<f64>> = om
        .etas
        .iter()
        .map(|&(g, phi)| num_complex::Complex::from_polar(g, phi))
        .collect();
    for t in 0..len {
        let mut cur: Vec<f64> = innovations.row(t).iter().copied().collect();
        let mut add = |k: usize, v: &[f64]| {
            for b in 0..n {
                for a in 0..n {
                    cur[a] += mats[k][a + b * n] * v[b];
                }
            }
        };
        for k in 0..p {
            if t > k {
                let row = y[(t - k - 1) * n..(t - k) * n].to_vec();
                add(k, &row);
            }
        }
        for i in 0..r {
            add(p + i, &lam[i * n..(i + 1) * n].to_vec());
        }
        for j in 0..order.s {
            let re: Vec<f64> = cs[j * n..(j + 1) * n].iter().map(|c| c.re).collect();
            let im: Vec<f64> = cs[j * n..(j + 1) * n].iter().map(|c| c.im).collect();
            add(p + r + 2 * j, &re);
            add(p + r + 2 * j + 1, &im);
        }
        if cur.iter().any(|v| !v.is_finite() || v.abs() > 1e100) {
            return Err(SarmaError::Simulation(format!("path diverged at step {t}")));
        }
        y[t * n..(t + 1) * n].copy_from_slice(&cur);
        if t >= p {
            let lagged = y[(t - p) * n..(t - p + 1) * n].to_vec();
            for (i, &l) in om.lambdas.iter().enumerate() {
                for a in 0..n {
                    lam[i * n + a] = l * (lam[i * n + a] + lagged[a]);
                }
            }
            for (j, &z) in zs.iter().enumerate() {
                for a in 0..n {
                    cs[j * n + a] = z * (cs[j * n + a] + lagged[a]);
                }
            }
        }
    }
    Series::from_row_major(len, n, y)
}

/// Experiment presets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Preset {
    /// `N = 3`, order (1,1,1), `(lambda, gamma, phi) = (-0.8, 0.8, pi/4)`.
    Dgp1,
    /// `N = 2`, order (1,2,0), `lambda_1 = -lambda_2 = lambda`.
    Dgp2a { lambda: f64 },
    /// `N = 2`, order (1,0,1), `(gamma, pi/4)`.
    Dgp2b { gamma: f64 },
    /// `N = 3`, order (1,1,0).
    Dgp3 { lambda: f64 },
}

impl Preset {
    pub fn jordan(&self, seed: u64) -> JordanSpec {
        use std::f64::consts::FRAC_PI_4;
        let (dim, lambdas, etas) = match *self {
            Preset::Dgp1 => (3, vec![-0.8], vec![(0.8, FRAC_PI_4)]),
            Preset::Dgp2a { lambda } => (2, vec![lambda, -lambda], vec![]),
            Preset::Dgp2b { gamma } => (2, vec![], vec![(gamma, FRAC_PI_4)]),
            Preset::Dgp3 { lambda } => (3, vec![lambda], vec![]),
        };
        JordanSpec {
            lambdas,
            etas,
            dim,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.jordan(0).dim
    }

    pub fn order(&self) -> ModelOrder {
        let j = self.jordan(0);
        ModelOrder::new(1, j.lambdas.len(), j.etas.len())
    }

    /// Parses `dgp1`, `dgp2a`, `dgp2b` or `dgp3` with the free parameter
    /// supplied separately.
    pub fn from_name(name: &str, param: Option<f64>) -> Result<Self> {
        let need = |what: &str| param.ok_or_else(|| arg(format!("preset {name} needs --{what}")));
        match name.to_ascii_lowercase().as_str() {
            "dgp1" => Ok(Preset::Dgp1),
            "dgp2a" => Ok(Preset::Dgp2a { lambda: need("lambda")? }),
            "dgp2b" => Ok(Preset::Dgp2b { gamma: need("gamma")? }),
            "dgp3" => Ok(Preset::Dgp3 { lambda: need("lambda")? }),
            other => Err(arg(format!("unknown preset {other:?}"))),
        }
    }
}

/// `a 1 1' + (1 - a) I`.
pub fn equicorrelated(n: usize, a: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { a })
}

/// Generating VARMA spec and the equivalent true model (with `Sigma0`).
/// `Phi = 0.5 I`; `B` is drawn once from `seed`.
pub fn dgp_preset(
    preset: Preset,
    a: f64,
    dist: Innovation,
    seed: u64,
) -> Result<(VarmaSpec, ScalableArmaModel<f64>)> {
    if !(0.0..1.0).contains(&a) {
        return Err(arg(format!("covariance parameter a = {a} outside [0, 1)")));
    }
    let spec = preset.jordan(seed);
    let n = spec.dim;
    let (theta, b) = jordan_theta(&spec)?;
    let phi = DMatrix::identity(n, n) * 0.5;
    let sigma0 = equicorrelated(n, a);
    let model = varma_to_sarma(&phi, &spec, &b)?.with_sigma(Some(NoiseCov::new(sigma0.clone())?));
    Ok((
        VarmaSpec {
            phi,
            theta,
            sigma0,
            dist,
            burn_in: 500,
        },
        model,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ar_coefficient, residuals};

    #[test]
    fn orthogonal_matrices() {
        for n in 1..6 {
            let b = random_orthogonal(n, 7);
            let err = (b.transpose() * &b - DMatrix::identity(n, n)).amax();
            assert!(err < 1e-12);
        }
        assert_eq!(random_orthogonal(1, 3)[(0, 0)].abs(), 1.0);
        assert_ne!(random_orthogonal(3, 1), random_orthogonal(3, 2));
    }

    #[test]
    fn jordan_eigenvalues() {
        let spec = JordanSpec {
            lambdas: vec![],
            etas: vec![(0.8, std::f64::consts::FRAC_PI_4)],
            dim: 2,
            seed: 4,
        };
        let (theta, _) = jordan_theta(&spec).unwrap();
        let ev = theta.complex_eigenvalues();
        for v in ev.iter() {
            assert!((v.norm() - 0.8).abs() < 1e-12);
            assert!((v.arg().abs() - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
        }
        let one = JordanSpec {
            lambdas: vec![0.5],
            etas: vec![],
            dim: 1,
            seed: 0,
        };
        assert!((jordan_theta(&one).unwrap().0[(0, 0)] - 0.5).abs() < 1e-15);
        let too_big = JordanSpec {
            lambdas: vec![0.5],
            etas: vec![(0.5, 1.0)],
            dim: 2,
            seed: 0,
        };
        assert!(jordan_theta(&too_big).is_err());
    }

    #[test]
    fn scalar_mapping() {
        let spec = JordanSpec {
            lambdas: vec![0.3],
            etas: vec![],
            dim: 1,
            seed: 0,
        };
        let b = DMatrix::from_element(1, 1, 1.0);
        let m = varma_to_sarma(&DMatrix::from_element(1, 1, 0.5), &spec, &b).unwrap();
        for h in 1..20 {
            let expect = 0.3f64.powi(h as i32 - 1) * 0.2;
            assert!((ar_coefficient(h, &m).unwrap()[(0, 0)] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn innovations_shapes() {
        let s = DMatrix::identity(2, 2);
        assert_eq!(gen_innovations(Innovation::Normal, &s, 0, 1).unwrap().nrows(), 0);
        let a = gen_innovations(Innovation::StudentT5, &s, 10, 1).unwrap();
        let b = gen_innovations(Innovation::StudentT5, &s, 10, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_dynamics_reproduce_innovations() {
        let spec = VarmaSpec {
            phi: DMatrix::zeros(2, 2),
            theta: DMatrix::zeros(2, 2),
            sigma0: DMatrix::identity(2, 2),
            dist: Innovation::Normal,
            burn_in: 10,
        };
        let sim = simulate_varma11(&spec, 20, 3).unwrap();
        assert_eq!(sim.series.to_matrix(), sim.innovations);
    }

    #[test]
    fn preset_orders() {
        let (_, m) = dgp_preset(Preset::Dgp1, 0.0, Innovation::Normal, 1).unwrap();
        assert_eq!(m.order(), ModelOrder::new(1, 1, 1));
        assert_eq!(m.omega().lambdas, vec![-0.8]);
        let (_, m) = dgp_preset(Preset::Dgp2a { lambda: 0.4 }, 0.0, Innovation::Normal, 1).unwrap();
        assert_eq!(m.omega().lambdas, vec![0.4, -0.4]);
        let (_, m) = dgp_preset(Preset::Dgp3 { lambda: 0.6 }, 0.0, Innovation::Normal, 1).unwrap();
        assert_eq!(m.order(), ModelOrder::new(1, 1, 0));
    }

    #[test]
    fn sarma_forward_recursion_inverts_residuals() {
        let (_, m) = dgp_preset(Preset::Dgp1, 0.3, Innovation::Normal, 9).unwrap();
        let eps = gen_innovations(Innovation::Normal, &DMatrix::identity(3, 3), 80, 2).unwrap();
        let y = simulate_sarma(&m, &eps).unwrap();
        let e = residuals(&y, &m).unwrap();
        assert!((e - eps).amax() < 1e-12);
    }
}
