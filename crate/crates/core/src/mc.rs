//! Monte-Carlo experiments over the simulation presets: bias, ESD and ASD
//! tables, selection rates and ARE.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result, SarmaError};
use crate::estimate::{fit, Estimator, FitConfig};
use crate::inference::{are, covariance};
use crate::params::{alpha_labels, AlphaVector};
use crate::select::{classify, select_order, FitClass, SelectionGrid};
use crate::simulate::{dgp_preset, simulate_varma11, Innovation, Preset};

/// Independent 64-bit seed for stream `stream` of `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McExperiment {
    pub preset: Preset,
    /// Off-diagonal of `Sigma0 = a 11' + (1-a) I`.
    pub a: f64,
    pub dist: Innovation,
    pub reps: usize,
    pub lens: Vec<usize>,
    pub estimators: Vec<Estimator>,
    pub seed: u64,
    /// Seed of the orthogonal `B`; defaults to `seed`.
    pub b_seed: Option<u64>,
    pub fit: FitConfig,
    /// Compute plug-in ASDs for every replication.
    pub asd: bool,
    /// Run an order-selection experiment instead of fixed-order fits.
    pub selection: Option<SelectionGrid>,
    /// Path length for an ARE evaluation at the true parameters.
    pub are_len: Option<usize>,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for McExperiment {
    fn default() -> Self {
        Self {
            preset: Preset::Dgp1,
            a: 0.0,
            dist: Innovation::Normal,
            reps: 200,
            lens: vec![1000],
            estimators: vec![Estimator::Lse, Estimator::Qmle],
            seed: 0,
            b_seed: None,
            fit: FitConfig::default(),
            asd: true,
            selection: None,
            are_len: None,
            threads: None,
        }
    }
}

impl McExperiment {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(arg("replications must be at least 1"));
        }
        if self.lens.is_empty() || self.lens.iter().any(|&t| t < 20) {
            return Err(arg("sample sizes must be given and at least 20"));
        }
        if self.estimators.is_empty() {
            return Err(arg("at least one estimator is required"));
        }
        if self.threads == Some(0) {
            return Err(arg("threads must be positive"));
        }
        if let Some(g) = &self.selection {
            g.validate()?;
        }
        self.fit.validate()
    }
}

/// Statistics of one coefficient; values are on the natural scale.
#[derive(Debug, Clone, Serialize)]
pub struct ParamStat {
    pub label: String,
    pub truth: f64,
    pub bias: f64,
    pub bias_se: f64,
    pub esd: Option<f64>,
    pub esd_se: Option<f64>,
    pub asd: Option<f64>,
    pub asd_se: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimationSummary {
    pub estimator: Estimator,
    pub len: usize,
    /// Converged replications entering the statistics.
    pub used: usize,
    pub nonconverged: usize,
    pub failed: usize,
    pub params: Vec<ParamStat>,
    /// Estimates of the used replications, in replication order.
    pub estimates: Vec<Vec<f64>>,
}

impl EstimationSummary {
    pub fn param(&self, label: &str) -> Option<&ParamStat> {
        self.params.iter().find(|p| p.label == label)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionSummary {
    pub estimator: Estimator,
    pub len: usize,
    pub used: usize,
    pub failed: usize,
    pub underfit: f64,
    pub exact: f64,
    pub overfit: f64,
    /// Binomial standard error of each rate.
    pub underfit_se: f64,
    pub exact_se: f64,
    pub overfit_se: f64,
    /// Count of every selected order.
    pub selected: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct McResult {
    pub experiment: McExperiment,
    pub estimation: Vec<EstimationSummary>,
    pub selection: Vec<SelectionSummary>,
    pub are: Option<f64>,
}

#[derive(Clone)]
enum RepOutcome {
    Fit { estimate: Vec<f64>, asd: Option<Vec<f64>>, converged: bool },
    Select(FitClass, String),
    Failed,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_sd(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let m = mean(v);
    Some((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

fn summarize_fits(
    estimator: Estimator,
    len: usize,
    labels: &[String],
    truth: &[f64],
    outcomes: &[RepOutcome],
) -> EstimationSummary {
    let mut estimates = Vec::new();
    let mut asds = Vec::new();
    let (mut nonconverged, mut failed) = (0, 0);
    for o in outcomes {
        match o {
            RepOutcome::Fit { estimate, asd, converged: true } => {
                estimates.push(estimate.clone());
                if let Some(a) = asd {
                    asds.push(a.clone());
                }
            }
            RepOutcome::Fit { .. } => nonconverged += 1,
            _ => failed += 1,
        }
    }
    let used = estimates.len();
    let params = labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let err: Vec<f64> = estimates.iter().map(|e| e[i] - truth[i]).collect();
            let (bias, esd) = if err.is_empty() { (f64::NAN, None) } else { (mean(&err), sample_sd(&err)) };
            let a: Vec<f64> = asds.iter().map(|a| a[i]).filter(|v| v.is_finite()).collect();
            let asd = (!a.is_empty()).then(|| mean(&a));
            ParamStat {
                label: label.clone(),
                truth: truth[i],
                bias,
                bias_se: esd.map_or(f64::NAN, |s| s / (used as f64).sqrt()),
                esd,
                esd_se: esd.map(|s| s / (2.0 * (used as f64 - 1.0)).sqrt()),
                asd,
                asd_se: sample_sd(&a).map(|s| s / (a.len() as f64).sqrt()),
            }
        })
        .collect();
    EstimationSummary {
        estimator,
        len,
        used,
        nonconverged,
        failed,
        params,
        estimates,
    }
}

fn summarize_selection(estimator: Estimator, len: usize, outcomes: &[RepOutcome]) -> SelectionSummary {
    let mut counts = [0usize; 3];
    let mut selected = BTreeMap::new();
    let mut failed = 0;
    for o in outcomes {
        match o {
            RepOutcome::Select(class, order) => {
                counts[match class {
                    FitClass::Underfit => 0,
                    FitClass::Exact => 1,
                    FitClass::Overfit => 2,
                }] += 1;
                *selected.entry(order.clone()).or_insert(0) += 1;
            }
            _ => failed += 1,
        }
    }
    let used = counts.iter().sum::<usize>();
    let rate = |c: usize| if used == 0 { f64::NAN } else { c as f64 / used as f64 };
    let se = |p: f64| (p * (1.0 - p) / used as f64).sqrt();
    let (u, e, o) = (rate(counts[0]), rate(counts[1]), rate(counts[2]));
    SelectionSummary {
        estimator,
        len,
        used,
        failed,
        underfit: u,
        exact: e,
        overfit: o,
        underfit_se: se(u),
        exact_se: se(e),
        overfit_se: se(o),
        selected,
    }
}

fn run_inner(exp: &McExperiment) -> Result<McResult> {
    let (spec, truth_model) = dgp_preset(exp.preset, exp.a, exp.dist, exp.b_seed.unwrap_or(exp.seed))?;
    let truth = AlphaVector::from_model(&truth_model);
    let labels = alpha_labels(truth_model.order(), truth_model.dim());
    let truth_order = truth_model.order();
    let mut estimation = Vec::new();
    let mut selection = Vec::new();
    for (li, &len) in exp.lens.iter().enumerate() {
        // outcomes[rep][estimator]
        let outcomes: Vec<Vec<RepOutcome>> = (0..exp.reps)
            .into_par_iter()
            .map(|rep| {
                let stream = ((li as u64) << 32) | rep as u64;
                let data_seed = derive_seed(exp.seed, stream);
                let sim = match simulate_varma11(&spec, len, data_seed) {
                    Ok(s) => s,
                    Err(_) => return exp.estimators.iter().map(|_| RepOutcome::Failed).collect(),
                };
                let cfg = FitConfig {
                    seed: derive_seed(data_seed, 1),
                    ..exp.fit.clone()
                };
                exp.estimators
                    .iter()
                    .map(|&est| {
                        if let Some(grid) = &exp.selection {
                            let grid = SelectionGrid {
                                estimator: est,
                                fit: cfg.clone(),
                                ..grid.clone()
                            };
                            return match select_order(&sim.series, &grid) {
                                Ok(sel) => RepOutcome::Select(classify(sel.order, truth_order), sel.order.to_string()),
                                Err(_) => RepOutcome::Failed,
                            };
                        }
                        match fit(&sim.series, truth_order, est, &cfg) {
                            Ok(f) => {
                                let asd = if exp.asd {
                                    covariance(&sim.series, &f).ok().and_then(|c| c.asd(est))
                                } else {
                                    None
                                };
                                RepOutcome::Fit {
                                    estimate: AlphaVector::from_model(&f.model).as_slice().to_vec(),
                                    asd,
                                    converged: f.converged,
                                }
                            }
                            Err(_) => RepOutcome::Failed,
                        }
                    })
                    .collect()
            })
            .collect();
        for (ei, &est) in exp.estimators.iter().enumerate() {
            let column: Vec<RepOutcome> = outcomes.iter().map(|row| row[ei].clone()).collect();
            if exp.selection.is_some() {
                selection.push(summarize_selection(est, len, &column));
            } else {
                estimation.push(summarize_fits(est, len, &labels, truth.as_slice(), &column));
            }
        }
    }
    let are_value = match exp.are_len {
        Some(t) => {
            let sigma0 = truth_model.sigma().map(|s| s.matrix().clone()).expect("preset carries Sigma0");
            Some(are(&truth_model, &sigma0, exp.dist, t, derive_seed(exp.seed, u64::MAX))?)
        }
        None => None,
    };
    Ok(McResult {
        experiment: exp.clone(),
        estimation,
        selection,
        are: are_value,
    })
}

/// Runs the experiment. Replications are independent and aggregated in
/// replication order, so results do not depend on the thread count.
pub fn run_mc(exp: &McExperiment) -> Result<McResult> {
    exp.validate()?;
    match exp.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| SarmaError::Numeric(format!("thread pool: {e}")))?
            .install(|| run_inner(exp)),
        None => run_inner(exp),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{:.4}", 100.0 * x))
}

/// Bias/ESD/ASD rows (times 100) as CSV.
pub fn estimation_csv(res: &McResult) -> String {
    let mut out = String::from(
        "estimator,dist,T,param,truth,bias_x100,esd_x100,asd_x100,bias_se_x100,esd_se_x100,asd_se_x100,used,nonconverged,failed\n",
    );
    for s in &res.estimation {
        for p in &s.params {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{:.4},{},{},{:.4},{},{},{},{},{}\n",
                s.estimator,
                res.experiment.dist,
                s.len,
                p.label,
                p.truth,
                100.0 * p.bias,
                fmt_opt(p.esd),
                fmt_opt(p.asd),
                100.0 * p.bias_se,
                fmt_opt(p.esd_se),
                fmt_opt(p.asd_se),
                s.used,
                s.nonconverged,
                s.failed
            ));
        }
    }
    out
}

/// Underfit/exact/overfit rates as CSV.
pub fn selection_csv(res: &McResult) -> String {
    let mut out = String::from("estimator,dist,T,underfit,exact,overfit,underfit_se,exact_se,overfit_se,used,failed\n");
    for s in &res.selection {
        out.push_str(&format!(
            "{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{},{}\n",
            s.estimator,
            res.experiment.dist,
            s.len,
            s.underfit,
            s.exact,
            s.overfit,
            s.underfit_se,
            s.exact_se,
            s.overfit_se,
            s.used,
            s.failed
        ));
    }
    out
}

/// Plain-text table for terminals.
pub fn pretty(res: &McResult) -> String {
    let mut out = String::new();
    for s in &res.estimation {
        out.push_str(&format!(
            "{} T={} used={} nonconverged={} failed={}\n{:<12} {:>10} {:>10} {:>10}\n",
            s.estimator, s.len, s.used, s.nonconverged, s.failed, "param", "bias", "ESD", "ASD"
        ));
        for p in &s.params {
            out.push_str(&format!(
                "{:<12} {:>10.3} {:>10} {:>10}\n",
                p.label,
                100.0 * p.bias,
                p.esd.map_or("-".into(), |v| format!("{:.3}", 100.0 * v)),
                p.asd.map_or("-".into(), |v| format!("{:.3}", 100.0 * v)),
            ));
        }
    }
    for s in &res.selection {
        out.push_str(&format!(
            "{} T={} underfit={:.3} exact={:.3} overfit={:.3} (n={}, failed={})\n",
            s.estimator, s.len, s.underfit, s.exact, s.overfit, s.used, s.failed
        ));
    }
    if let Some(a) = res.are {
        out.push_str(&format!("ARE = {a:.2}\n"));
    }
    out
}
