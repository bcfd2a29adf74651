//! Flat parameter layouts.
//!
//! `alpha = (lambda_1..lambda_r, gamma_1, phi_1, .., gamma_s, phi_s, vec(G_1)..vec(G_d))`
//! with each `vec` column-major, and `theta = (alpha, vech(Sigma))` with the
//! lower triangle stacked column by column.

use nalgebra::{DMatrix, DVector};

use crate::error::{arg, Result};
use crate::linalg::DuplicationMatrix;
use crate::model::{DecayParams, LoadingSet, ModelOrder, NoiseCov, ScalableArmaModel};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaVector<T> {
    order: ModelOrder,
    dim: usize,
    values: Vec<T>,
}

impl<T: Real> AlphaVector<T> {
    pub fn new(order: ModelOrder, dim: usize, values: Vec<T>) -> Result<Self> {
        if dim == 0 {
            return Err(arg("dimension must be positive"));
        }
        if values.len() != order.n_alpha(dim) {
            return Err(arg(format!(
                "alpha for order {order} and N={dim} has length {}, got {}",
                order.n_alpha(dim),
                values.len()
            )));
        }
        Ok(Self { order, dim, values })
    }

    pub fn from_parts(order: ModelOrder, omega: &DecayParams<T>, loadings: &LoadingSet<T>) -> Result<Self> {
        if omega.r() != order.r || omega.s() != order.s || loadings.len() != order.d() {
            return Err(arg("parts do not match the order"));
        }
        let dim = loadings.dim();
        let mut values = Vec::with_capacity(order.n_alpha(dim));
        values.extend_from_slice(&omega.lambdas);
        for &(g, phi) in &omega.etas {
            values.push(g);
            values.push(phi);
        }
        for m in loadings.mats() {
            values.extend_from_slice(m.as_slice());
        }
        Ok(Self { order, dim, values })
    }

    pub fn from_model(model: &ScalableArmaModel<T>) -> Self {
        Self::from_parts(model.order(), model.omega(), model.loadings()).expect("model is consistent")
    }

    pub fn order(&self) -> ModelOrder {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn to_dvector(&self) -> DVector<T> {
        DVector::from_column_slice(&self.values)
    }

    /// Decay parameters without range validation (perturbed points may sit
    /// on a boundary).
    pub fn omega(&self) -> DecayParams<T> {
        let r = self.order.r;
        DecayParams {
            lambdas: self.values[..r].to_vec(),
            etas: (0..self.order.s)
                .map(|j| (self.values[r + 2 * j], self.values[r + 2 * j + 1]))
                .collect(),
        }
    }

    pub fn loadings(&self) -> LoadingSet<T> {
        let n = self.dim;
        let off = self.order.n_omega();
        let mats = (0..self.order.d())
            .map(|k| DMatrix::from_column_slice(n, n, &self.values[off + k * n * n..off + (k + 1) * n * n]))
            .collect();
        LoadingSet::new(n, mats).expect("shapes are consistent")
    }

    /// Builds a validated model; sorting normalization applies.
    pub fn to_model(&self, sigma: Option<NoiseCov<T>>) -> Result<ScalableArmaModel<T>> {
        let om = self.omega();
        let om = DecayParams::new(om.lambdas, om.etas)?;
        ScalableArmaModel::new(self.order, om, self.loadings(), sigma)
    }

    #[inline]
    pub fn lambda_index(&self, i: usize) -> usize {
        i
    }

    #[inline]
    pub fn gamma_index(&self, j: usize) -> usize {
        self.order.r + 2 * j
    }

    #[inline]
    pub fn phi_index(&self, j: usize) -> usize {
        self.order.r + 2 * j + 1
    }

    /// Index of entry `(a, b)` of `G_{k+1}` (all zero-based).
    #[inline]
    pub fn g_index(&self, k: usize, a: usize, b: usize) -> usize {
        self.order.n_omega() + k * self.dim * self.dim + a + b * self.dim
    }

    pub fn labels(&self) -> Vec<String> {
        alpha_labels(self.order, self.dim)
    }
}

/// Human-readable names in alpha order: `lambda1`, `gamma1`, `phi1`, `G1[1,2]`, ...
pub fn alpha_labels(order: ModelOrder, dim: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(order.n_alpha(dim));
    for i in 1..=order.r {
        out.push(format!("lambda{i}"));
    }
    for j in 1..=order.s {
        out.push(format!("gamma{j}"));
        out.push(format!("phi{j}"));
    }
    for k in 1..=order.d() {
        for b in 1..=dim {
            for a in 1..=dim {
                out.push(format!("G{k}[{a},{b}]"));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaVector<T> {
    alpha: AlphaVector<T>,
    sigma: Vec<T>,
}

impl<T: Real> ThetaVector<T> {
    pub fn new(alpha: AlphaVector<T>, sigma: &DMatrix<T>) -> Result<Self> {
        let n = alpha.dim();
        if sigma.shape() != (n, n) {
            return Err(arg(format!("sigma must be {n}x{n}, got {:?}", sigma.shape())));
        }
        let d = DuplicationMatrix::new(n);
        let sym = (sigma + sigma.transpose()) * T::lit(0.5);
        Ok(Self {
            alpha,
            sigma: d.vech(&sym).as_slice().to_vec(),
        })
    }

    pub fn from_flat(order: ModelOrder, dim: usize, values: &[T]) -> Result<Self> {
        let n1 = order.n_alpha(dim);
        if values.len() != order.n_theta(dim) {
            return Err(arg(format!(
                "theta length must be {}, got {}",
                order.n_theta(dim),
                values.len()
            )));
        }
        Ok(Self {
            alpha: AlphaVector::new(order, dim, values[..n1].to_vec())?,
            sigma: values[n1..].to_vec(),
        })
    }

    pub fn alpha(&self) -> &AlphaVector<T> {
        &self.alpha
    }

    pub fn sigma_vech(&self) -> &[T] {
        &self.sigma
    }

    /// Symmetric `Sigma(sigma)`; positive definiteness is not checked here.
    pub fn sigma_matrix(&self) -> DMatrix<T> {
        DuplicationMatrix::new(self.alpha.dim()).unvech(&self.sigma)
    }

    pub fn len(&self) -> usize {
        self.alpha.len() + self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_vec(&self) -> Vec<T> {
        let mut v = self.alpha.as_slice().to_vec();
        v.extend_from_slice(&self.sigma);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_round_trip() {
        let order = ModelOrder::new(1, 1, 1);
        let om = DecayParams::new(vec![-0.5], vec![(0.7, 1.0)]).unwrap();
        let mats: Vec<DMatrix<f64>> = (0..4)
            .map(|k| DMatrix::from_fn(2, 2, |a, b| (k * 4 + a * 2 + b) as f64))
            .collect();
        let ld = LoadingSet::new(2, mats).unwrap();
        let a = AlphaVector::from_parts(order, &om, &ld).unwrap();
        assert_eq!(a.len(), 3 + 16);
        assert_eq!(a.omega(), om);
        assert_eq!(a.loadings(), ld);
        assert_eq!(a.as_slice()[a.g_index(1, 1, 0)], ld.get(2)[(1, 0)]);
        assert_eq!(a.as_slice()[a.phi_index(0)], 1.0);
        assert_eq!(a.labels()[a.g_index(0, 0, 1)], "G1[1,2]");
    }

    #[test]
    fn theta_round_trip() {
        let order = ModelOrder::new(1, 0, 0);
        let a = AlphaVector::new(order, 2, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let th = ThetaVector::new(a, &s).unwrap();
        assert_eq!(th.sigma_vech(), &[2.0, 0.5, 1.0]);
        assert_eq!(th.sigma_matrix(), s);
        let back = ThetaVector::from_flat(order, 2, &th.to_vec()).unwrap();
        assert_eq!(back, th);
        assert!(AlphaVector::<f64>::new(order, 2, vec![0.0; 3]).is_err());
    }
}
