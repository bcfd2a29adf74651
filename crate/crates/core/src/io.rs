//! JSON model files, fit reports and the BIC table.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SarmaError};
use crate::estimate::{Estimator, FitResult};
use crate::model::{DecayParams, LoadingSet, ModelOrder, NoiseCov, ScalableArmaModel};
use crate::select::BicRow;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// On-disk model. Matrices are lists of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub dim: usize,
    pub order: ModelOrder,
    pub lambdas: Vec<f64>,
    pub etas: Vec<(f64, f64)>,
    pub loadings: Vec<Vec<Vec<f64>>>,
    pub sigma: Option<Vec<Vec<f64>>>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_rows(r: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>> {
    if r.len() != n || r.iter().any(|row| row.len() != n) {
        return Err(SarmaError::Parse(format!("{what} must be {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| r[i][j]))
}

impl ModelFile {
    pub fn from_model(m: &ScalableArmaModel<f64>) -> Self {
        Self {
            version: MODEL_FORMAT_VERSION,
            dim: m.dim(),
            order: m.order(),
            lambdas: m.omega().lambdas.clone(),
            etas: m.omega().etas.clone(),
            loadings: m.loadings().mats().iter().map(rows).collect(),
            sigma: m.sigma().map(|s| rows(s.matrix())),
        }
    }

    pub fn to_model(&self) -> Result<ScalableArmaModel<f64>> {
        if self.version != MODEL_FORMAT_VERSION {
            return Err(SarmaError::Parse(format!("unsupported model version {}", self.version)));
        }
        let n = self.dim;
        let mats = self
            .loadings
            .iter()
            .enumerate()
            .map(|(k, g)| from_rows(g, n, &format!("loading G{}", k + 1)))
            .collect::<Result<Vec<_>>>()?;
        let sigma = match &self.sigma {
            Some(s) => Some(NoiseCov::new(from_rows(s, n, "sigma")?)?),
            None => None,
        };
        ScalableArmaModel::new(
            self.order,
            DecayParams::new(self.lambdas.clone(), self.etas.clone())?,
            LoadingSet::new(n, mats)?,
            sigma,
        )
    }
}

pub fn model_to_json(m: &ScalableArmaModel<f64>) -> String {
    serde_json::to_string_pretty(&ModelFile::from_model(m)).expect("model serializes")
}

pub fn model_from_json(s: &str) -> Result<ScalableArmaModel<f64>> {
    let f: ModelFile = serde_json::from_str(s).map_err(|e| SarmaError::Parse(format!("model JSON: {e}")))?;
    f.to_model()
}

pub fn read_model(path: &Path) -> Result<ScalableArmaModel<f64>> {
    model_from_json(&std::fs::read_to_string(path)?)
}

pub fn write_model(path: &Path, m: &ScalableArmaModel<f64>) -> Result<()> {
    std::fs::write(path, model_to_json(m) + "\n")?;
    Ok(())
}

/// Summary of a fit for machine consumption.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    pub estimator: Estimator,
    pub order: ModelOrder,
    pub len: usize,
    pub loss: f64,
    pub iterations: usize,
    pub converged: bool,
    pub best_restart: usize,
    pub restart_losses: Vec<Option<f64>>,
    pub ridge_used: bool,
    pub trace: Vec<f64>,
    pub sigma_hat: Vec<Vec<f64>>,
}

impl FitReport {
    pub fn new(fit: &FitResult<f64>, len: usize) -> Self {
        Self {
            estimator: fit.estimator,
            order: fit.model.order(),
            len,
            loss: fit.loss,
            iterations: fit.iterations,
            converged: fit.converged,
            best_restart: fit.best_restart,
            restart_losses: fit.restart_losses.clone(),
            ridge_used: fit.ridge_used,
            trace: fit.trace.clone(),
            sigma_hat: rows(fit.sigma_hat.matrix()),
        }
    }
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, |x| x.to_string())
}

/// BIC table with columns `p,r,s,n1,logdet,bic,converged`.
pub fn bic_csv(table: &[BicRow]) -> String {
    let mut out = String::from("p,r,s,n1,logdet,bic,converged\n");
    for r in table {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.p,
            r.r,
            r.s,
            r.n1,
            r.logdet.map_or_else(String::new, |v| format!("{v:.10}")),
            r.bic.map_or_else(String::new, |v| format!("{v:.6}")),
            opt(&r.converged)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_round_trip() {
        let g1 = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        let g2 = DMatrix::from_row_slice(2, 2, &[-0.5, 0.0, 0.25, 1.0]);
        let g3 = DMatrix::from_row_slice(2, 2, &[0.0, 0.7, 0.0, 0.0]);
        let m = ScalableArmaModel::new(
            ModelOrder::new(1, 0, 1),
            DecayParams::new(vec![], vec![(0.6, 0.9)]).unwrap(),
            LoadingSet::new(2, vec![g1, g2, g3]).unwrap(),
            Some(NoiseCov::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0])).unwrap()),
        )
        .unwrap();
        let s = model_to_json(&m);
        assert!(s.contains("\"version\": 1"));
        let back = model_from_json(&s).unwrap();
        assert_eq!(back, m);
        let f: ModelFile = serde_json::from_str(&s).unwrap();
        assert_eq!(f.loadings[0][0], vec![0.1, 0.2]);
    }

    #[test]
    fn rejects_bad_shapes() {
        let bad = r#"{"version":1,"dim":2,"order":{"p":1,"r":0,"s":0},"lambdas":[],"etas":[],"loadings":[[[1.0]]],"sigma":null}"#;
        assert!(model_from_json(bad).is_err());
        assert!(model_from_json("{").is_err());
    }
}
