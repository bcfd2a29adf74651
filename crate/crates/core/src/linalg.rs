//! Small dense linear-algebra helpers on top of nalgebra.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SarmaError};
use crate::scalar::Real;

/// Inverse and log-determinant of a symmetric positive definite matrix via
/// Cholesky. Fails instead of regularizing.
pub fn spd_inverse_logdet<T: Real>(m: &DMatrix<T>) -> Result<(DMatrix<T>, T)> {
    let chol = m.clone().cholesky().ok_or_else(|| {
        SarmaError::Numeric(format!(
            "matrix is not positive definite (dim {}, min diagonal {:.3e}, reciprocal condition {:.3e})",
            m.nrows(),
            m.diagonal().iter().fold(f64::INFINITY, |a, v| a.min(v.as_f64())),
            reciprocal_condition(m)
        ))
    })?;
    let two = T::lit(2.0);
    let logdet = chol
        .l_dirty()
        .diagonal()
        .iter()
        .fold(T::zero(), |acc, d| acc + two * d.ln());
    Ok((chol.inverse(), logdet))
}

/// Ratio of smallest to largest absolute eigenvalue of a symmetric matrix.
pub fn reciprocal_condition<T: Real>(m: &DMatrix<T>) -> f64 {
    if m.nrows() == 0 || !m.iter().all(|v| v.is_finite_value()) {
        return 0.0;
    }
    let eig = m.clone().symmetric_eigen();
    let (lo, hi) = eig.eigenvalues.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), v| {
        let a = v.as_f64().abs();
        (lo.min(a), hi.max(a))
    });
    if hi == 0.0 {
        0.0
    } else {
        lo / hi
    }
}

/// Inverse of a symmetric matrix through its eigendecomposition. Eigenvalues
/// whose magnitude falls below `rel_cutoff * max|eigenvalue|` are reported as
/// null directions.
pub fn sym_inverse<T: Real>(m: &DMatrix<T>, rel_cutoff: f64) -> Result<DMatrix<T>> {
    let n = m.nrows();
    let sym = (m + m.transpose()) * T::lit(0.5);
    let eig = sym.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(T::zero(), |a, v| a.max(v.abs()));
    let cut = scale * T::lit(rel_cutoff);
    let null: Vec<usize> = (0..n)
        .filter(|&i| !(eig.eigenvalues[i].abs() > cut))
        .collect();
    if scale == T::zero() || !null.is_empty() {
        let dirs: Vec<String> = null
            .iter()
            .map(|&i| {
                let v = eig.eigenvectors.column(i);
                let (arg, _) = v.iter().enumerate().fold((0, 0.0_f64), |(bi, bv), (j, x)| {
                    if x.as_f64().abs() > bv {
                        (j, x.as_f64().abs())
                    } else {
                        (bi, bv)
                    }
                });
                format!("eigenvalue {:.3e} loading mostly on coordinate {arg}", eig.eigenvalues[i].as_f64())
            })
            .collect();
        return Err(SarmaError::Inference(format!(
            "matrix is singular to relative tolerance {rel_cutoff:e}: {}",
            if dirs.is_empty() { "zero matrix".to_string() } else { dirs.join("; ") }
        )));
    }
    let mut inv_vals = eig.eigenvalues.clone();
    for v in inv_vals.iter_mut() {
        *v = T::one() / *v;
    }
    let q = &eig.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&inv_vals) * q.transpose())
}

/// log|M| for a symmetric positive definite matrix.
pub fn spd_logdet<T: Real>(m: &DMatrix<T>) -> Result<T> {
    let chol = m.clone().cholesky().ok_or_else(|| {
        SarmaError::Numeric(format!(
            "log-determinant requires a positive definite matrix (reciprocal condition {:.3e})",
            reciprocal_condition(m)
        ))
    })?;
    let two = T::lit(2.0);
    Ok(chol
        .l_dirty()
        .diagonal()
        .iter()
        .fold(T::zero(), |acc, d| acc + two * d.ln()))
}

/// Largest singular value.
pub fn spectral_norm<T: Real>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(T::zero(), |a, v| a.max(*v))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    let sym = (m + m.transpose()) * T::lit(0.5);
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(T::lit(f64::MAX), |a, v| a.min(*v))
}

/// Index pattern of the duplication matrix `D` with `vec(S) = D vech(S)`.
///
/// `vech` stacks the lower triangle column by column. The pattern is built
/// once per dimension and shared.
#[derive(Debug, Clone)]
pub struct DuplicationMatrix {
    n: usize,
    /// (row, col) of every vech element, col <= row.
    pairs: Arc<Vec<(usize, usize)>>,
}

fn pattern_cache() -> &'static Mutex<HashMap<usize, Arc<Vec<(usize, usize)>>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<(usize, usize)>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl DuplicationMatrix {
    pub fn new(n: usize) -> Self {
        let mut cache = pattern_cache().lock().expect("duplication cache poisoned");
        let pairs = cache
            .entry(n)
            .or_insert_with(|| {
                let mut v = Vec::with_capacity(n * (n + 1) / 2);
                for col in 0..n {
                    for row in col..n {
                        v.push((row, col));
                    }
                }
                Arc::new(v)
            })
            .clone();
        Self { n, pairs }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of vech elements, `N(N+1)/2`.
    pub fn vech_len(&self) -> usize {
        self.pairs.len()
    }

    /// (row, col) of the `u`-th vech element.
    pub fn pair(&self, u: usize) -> (usize, usize) {
        self.pairs[u]
    }

    /// Dense `N^2 x N(N+1)/2` matrix.
    pub fn matrix<T: Real>(&self) -> DMatrix<T> {
        let n = self.n;
        let mut d = DMatrix::zeros(n * n, self.vech_len());
        for (u, &(i, j)) in self.pairs.iter().enumerate() {
            d[(i + j * n, u)] = T::one();
            d[(j + i * n, u)] = T::one();
        }
        d
    }

    pub fn vech<T: Real>(&self, s: &DMatrix<T>) -> DVector<T> {
        DVector::from_iterator(self.vech_len(), self.pairs.iter().map(|&(i, j)| s[(i, j)]))
    }

    /// Rebuilds the symmetric matrix from its half-vectorization.
    pub fn unvech<T: Real>(&self, v: &[T]) -> DMatrix<T> {
        let mut s = DMatrix::zeros(self.n, self.n);
        for (u, &(i, j)) in self.pairs.iter().enumerate() {
            s[(i, j)] = v[u];
            s[(j, i)] = v[u];
        }
        s
    }

    /// `D' vec(A)` for an `N x N` matrix `A`.
    pub fn dt_vec<T: Real>(&self, a: &DMatrix<T>) -> DVector<T> {
        DVector::from_iterator(
            self.vech_len(),
            self.pairs.iter().map(|&(i, j)| {
                if i == j {
                    a[(i, i)]
                } else {
                    a[(i, j)] + a[(j, i)]
                }
            }),
        )
    }

    /// `M D` for an `m x N^2` matrix `M`.
    pub fn right_mul<T: Real>(&self, m: &DMatrix<T>) -> DMatrix<T> {
        let n = self.n;
        let mut out = DMatrix::zeros(m.nrows(), self.vech_len());
        for (u, &(i, j)) in self.pairs.iter().enumerate() {
            let a = i + j * n;
            let b = j + i * n;
            for r in 0..m.nrows() {
                out[(r, u)] = if a == b { m[(r, a)] } else { m[(r, a)] + m[(r, b)] };
            }
        }
        out
    }

    /// `D' M D` for an `N^2 x N^2` matrix `M`.
    pub fn sandwich<T: Real>(&self, m: &DMatrix<T>) -> DMatrix<T> {
        let md = self.right_mul(m);
        let n = self.n;
        let k = self.vech_len();
        let mut out = DMatrix::zeros(k, k);
        for (u, &(i, j)) in self.pairs.iter().enumerate() {
            let a = i + j * n;
            let b = j + i * n;
            for v in 0..k {
                out[(u, v)] = if a == b { md[(a, v)] } else { md[(a, v)] + md[(b, v)] };
            }
        }
        out
    }
}

/// Kronecker product.
pub fn kron<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    a.kronecker(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplication_reproduces_vec() {
        let d = DuplicationMatrix::new(3);
        let s = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 5.0, 6.0, 3.0, 6.0, 9.0]);
        let vech = d.vech(&s);
        assert_eq!(vech.as_slice(), &[1.0, 2.0, 3.0, 5.0, 6.0, 9.0]);
        let vec_s = d.matrix::<f64>() * &vech;
        let expected = DVector::from_column_slice(s.as_slice());
        assert_eq!(vec_s, expected);
        assert_eq!(d.unvech(vech.as_slice()), s);
        assert_eq!(d.matrix::<f64>().rank(1e-12), 6);
    }

    #[test]
    fn structured_products_match_dense() {
        let d = DuplicationMatrix::new(2);
        let dm = d.matrix::<f64>();
        let m = DMatrix::from_fn(4, 4, |i, j| (i * 4 + j) as f64 + 0.5);
        assert_eq!(d.sandwich(&m), dm.transpose() * &m * &dm);
        let r = DMatrix::from_fn(3, 4, |i, j| (i as f64) - 2.0 * j as f64);
        assert_eq!(d.right_mul(&r), &r * &dm);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let dense = dm.transpose() * DVector::from_column_slice(a.as_slice());
        assert_eq!(d.dt_vec(&a), dense);
    }

    #[test]
    fn spd_helpers() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let (inv, logdet) = spd_inverse_logdet(&m).unwrap();
        assert!(((&m * inv) - DMatrix::identity(2, 2)).amax() < 1e-14);
        assert!((logdet - 1.75_f64.ln()).abs() < 1e-14);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(spd_inverse_logdet(&bad).is_err());
        assert!(sym_inverse(&DMatrix::<f64>::zeros(2, 2), 1e-12).is_err());
        assert!((spectral_norm(&bad) - 3.0_f64).abs() < 1e-12);
    }
}
