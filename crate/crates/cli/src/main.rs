//! `sarma` command-line front end.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 non-convergence,
//! 4 numeric failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sarma::estimate::{fit, residual_sigma, Estimator, FitConfig};
use sarma::forecast::{one_step_forecast, rolling_evaluate, ForecastMethod, RollingConfig};
use sarma::inference::{are, lse_covariance_at, qmle_covariance_at, significance_table};
use sarma::io::{bic_csv, model_to_json, read_model, FitReport};
use sarma::mc::{estimation_csv, pretty, run_mc, selection_csv, McExperiment};
use sarma::model::ModelOrder;
use sarma::params::AlphaVector;
use sarma::select::{select_order, SelectionGrid};
use sarma::series::Series;
use sarma::simulate::{dgp_preset, equicorrelated, gen_innovations, simulate_sarma, simulate_varma11, Innovation, Preset};
use sarma::SarmaError;

#[derive(Parser, Debug)]
#[command(name = "sarma", version, about = "Scalable ARMA estimation, selection, inference and forecasting")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Seed for all randomness.
    #[arg(long, global = true, env = "SARMA_SEED", default_value_t = 0)]
    seed: u64,
    /// Worker threads for Monte-Carlo replications (1 = bitwise reproducible).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,
    /// Format of tabular output files.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a preset or a model file.
    Simulate(SimulateArgs),
    /// Fit a model of a given order.
    Fit(FitArgs),
    /// Select the order by BIC.
    Select(SelectArgs),
    /// Standard errors, z tests and lagged-influence classification.
    Infer(InferArgs),
    /// One-step forecast or rolling evaluation.
    Forecast(ForecastArgs),
    /// Asymptotic relative efficiency of least squares vs quasi-likelihood.
    Are(AreArgs),
    /// Monte-Carlo experiment over a preset.
    Mc(McArgs),
}

#[derive(Args, Debug, Clone)]
struct PresetArgs {
    /// dgp1, dgp2a, dgp2b or dgp3.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Sigma0 = a 11' + (1-a) I.
    #[arg(long = "sigma-a", visible_alias = "a", default_value_t = 0.0)]
    sigma_a: f64,
    #[arg(long, default_value = "normal")]
    dist: String,
    /// Seed of the orthogonal B in the preset; defaults to --seed.
    #[arg(long)]
    b_seed: Option<u64>,
}

impl PresetArgs {
    fn preset(&self) -> Result<Preset, CliError> {
        let name = self.preset.as_deref().ok_or_else(|| CliError::usage("--preset is required"))?;
        Ok(Preset::from_name(name, self.lambda.or(self.gamma))?)
    }

    fn dist(&self) -> Result<Innovation, CliError> {
        Ok(self.dist.parse()?)
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    preset: PresetArgs,
    /// Simulate this model (uses its sigma unless --sigma-a is given).
    #[arg(long)]
    model_json: Option<PathBuf>,
    #[arg(long = "T")]
    len: usize,
    /// Series CSV path (default <output-dir>/series.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct FitFlags {
    #[arg(long, default_value = "lse")]
    estimator: String,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    var_order: Option<usize>,
    #[arg(long)]
    screen: Option<usize>,
    /// TOML file with fit settings; flags override it.
    #[arg(long)]
    fit_config: Option<PathBuf>,
}

impl FitFlags {
    fn estimator(&self) -> Result<Estimator, CliError> {
        Ok(self.estimator.parse()?)
    }

    fn config(&self, seed: u64) -> Result<FitConfig, CliError> {
        let mut cfg = match &self.fit_config {
            Some(p) => toml::from_str(&read_text(p)?).map_err(|e| CliError::usage(format!("fit config: {e}")))?,
            None => FitConfig::default(),
        };
        cfg.seed = seed;
        if let Some(v) = self.k_max {
            cfg.k_max = v;
        }
        if let Some(v) = self.delta {
            cfg.delta = v;
        }
        if let Some(v) = self.restarts {
            cfg.restarts = v;
        }
        if let Some(v) = self.screen {
            cfg.screen = v;
        }
        if self.var_order.is_some() {
            cfg.var_order = self.var_order;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// p,r,s
    #[arg(long)]
    order: String,
    #[command(flatten)]
    fit: FitFlags,
    /// Model JSON path (default <output-dir>/model.json).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fit report path (default <output-dir>/fit_report.json).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 2)]
    pmax: usize,
    #[arg(long, default_value_t = 2)]
    rmax: usize,
    #[arg(long, default_value_t = 2)]
    smax: usize,
    /// Fits with a rate, rate gap or MA loading norm at or below this are not eligible (0 disables)
    #[arg(long, default_value_t = 0.05)]
    identifiability_tol: f64,
    #[command(flatten)]
    fit: FitFlags,
}

#[derive(Args, Debug)]
struct InferArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Covariance to use; lse gives the sandwich, qmle the inverse information.
    #[arg(long, default_value = "lse")]
    estimator: String,
    #[arg(long, default_value_t = 0.05)]
    level: f64,
}

#[derive(Args, Debug)]
struct ForecastArgs {
    #[arg(long)]
    data: PathBuf,
    /// Forecast the next value with this model.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Rolling evaluation with a window of this length.
    #[arg(long)]
    window: Option<usize>,
    /// Order for rolling SARMA fits.
    #[arg(long)]
    order: Option<String>,
    /// Rolling VAR(p) baseline instead of SARMA fits.
    #[arg(long)]
    var: Option<usize>,
    #[arg(long, default_value_t = 1)]
    refit_every: usize,
    /// Forecast from the current window only instead of the full history.
    #[arg(long)]
    window_history: bool,
    #[command(flatten)]
    fit: FitFlags,
}

#[derive(Args, Debug)]
struct AreArgs {
    #[command(flatten)]
    preset: PresetArgs,
    /// Length of the simulated path for the sample averages.
    #[arg(long = "T-mc", default_value_t = 5000)]
    t_mc: usize,
}

#[derive(Args, Debug)]
struct McArgs {
    #[command(flatten)]
    preset: PresetArgs,
    /// TOML experiment file; other flags are ignored when given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    /// Sample sizes, comma separated.
    #[arg(long = "T", value_delimiter = ',', default_value = "1000")]
    lens: Vec<usize>,
    /// Estimators, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "lse,qmle")]
    estimators: Vec<String>,
    /// Run a BIC selection experiment over the default grid.
    #[arg(long)]
    select: bool,
    #[arg(long)]
    no_asd: bool,
    #[arg(long)]
    restarts: Option<usize>,
}

#[derive(Debug)]
struct CliError {
    code: u8,
    msg: String,
}

impl CliError {
    fn usage<S: Into<String>>(msg: S) -> Self {
        Self { code: 2, msg: msg.into() }
    }
}

impl From<SarmaError> for CliError {
    fn from(e: SarmaError) -> Self {
        let code = match e {
            SarmaError::Argument(_) | SarmaError::Parse(_) | SarmaError::Io(_) => 2,
            _ => 4,
        };
        Self { code, msg: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::usage(e.to_string())
    }
}

type CliResult = Result<u8, CliError>;

fn read_text(p: &Path) -> Result<String, CliError> {
    fs::read_to_string(p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))
}

fn read_series(p: &Path) -> Result<Series<f64>, CliError> {
    Series::read_csv_path(p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))
}

fn parse_order(s: &str) -> Result<ModelOrder, CliError> {
    let o: ModelOrder = s.parse()?;
    if o.d() == 0 {
        return Err(CliError::usage("order (0,0,0) has no parameters to fit"));
    }
    Ok(o)
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, contents).map_err(|e| CliError { code: 2, msg: format!("{}: {e}", path.display()) })
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn cmd_simulate(g: &Global, a: &SimulateArgs) -> CliResult {
    if a.len == 0 {
        return Err(CliError::usage("--T must be positive"));
    }
    let (series, truth) = match &a.model_json {
        Some(path) => {
            if a.preset.preset.is_some() {
                return Err(CliError::usage("give either --preset or --model-json"));
            }
            let model = read_model(path)?;
            let sigma0 = if a.preset.sigma_a != 0.0 || model.sigma().is_none() {
                equicorrelated(model.dim(), a.preset.sigma_a)
            } else {
                model.sigma().unwrap().matrix().clone()
            };
            let e = gen_innovations(a.preset.dist()?, &sigma0, a.len, g.seed)?;
            (simulate_sarma(&model, &e)?, model)
        }
        None => {
            let preset = a.preset.preset()?;
            let (spec, truth) = dgp_preset(preset, a.preset.sigma_a, a.preset.dist()?, a.preset.b_seed.unwrap_or(g.seed))?;
            (simulate_varma11(&spec, a.len, g.seed)?.series, truth)
        }
    };
    let out = a.out.clone().unwrap_or_else(|| g.output_dir.join("series.csv"));
    let mut buf = Vec::new();
    series.write_csv(&mut buf)?;
    write(&out, std::str::from_utf8(&buf).expect("ascii csv"))?;
    let truth_path = out.with_file_name("truth.json");
    write(&truth_path, &(model_to_json(&truth) + "\n"))?;
    println!("wrote {} ({}x{}) and {}", out.display(), series.len(), series.dim(), truth_path.display());
    Ok(0)
}

fn cmd_fit(g: &Global, a: &FitArgs) -> CliResult {
    let order = parse_order(&a.order)?;
    let est = a.fit.estimator()?;
    let cfg = a.fit.config(g.seed)?;
    let y = read_series(&a.data)?;
    let start = Instant::now();
    let res = fit(&y, order, est, &cfg)?;
    let elapsed = start.elapsed();
    let out = a.out.clone().unwrap_or_else(|| g.output_dir.join("model.json"));
    let report = a.report.clone().unwrap_or_else(|| g.output_dir.join("fit_report.json"));
    write(&out, &(model_to_json(&res.model) + "\n"))?;
    write(&report, &json(&FitReport::new(&res, y.len())))?;
    println!(
        "{est} {order}: loss {:.6} after {} iterations ({}) in {:.3}s",
        res.loss,
        res.iterations,
        if res.converged { "converged" } else { "not converged" },
        elapsed.as_secs_f64()
    );
    let om = res.model.omega();
    if !om.lambdas.is_empty() {
        println!("lambda: {:?}", om.lambdas);
    }
    if !om.etas.is_empty() {
        println!("(gamma, phi): {:?}", om.etas);
    }
    Ok(if res.converged { 0 } else { 3 })
}

fn cmd_select(g: &Global, a: &SelectArgs) -> CliResult {
    let grid = SelectionGrid {
        p_max: a.pmax,
        r_max: a.rmax,
        s_max: a.smax,
        estimator: a.fit.estimator()?,
        fit: a.fit.config(g.seed)?,
        identifiability_tol: a.identifiability_tol,
    };
    let y = read_series(&a.data)?;
    let sel = select_order(&y, &grid)?;
    match g.format {
        Format::Csv => write(&g.output_dir.join("bic.csv"), &bic_csv(&sel.table))?,
        Format::Json => write(&g.output_dir.join("bic.json"), &json(&sel.table))?,
    }
    write(&g.output_dir.join("model.json"), &(model_to_json(&sel.fit.model) + "\n"))?;
    for r in &sel.table {
        println!(
            "{} n1={:<4} bic={}",
            r.order(),
            r.n1,
            r.bic.map_or_else(|| r.error.clone().unwrap_or_default(), |b| format!("{b:.3}"))
        );
    }
    println!("selected {}", sel.order);
    Ok(0)
}

fn cmd_infer(g: &Global, a: &InferArgs) -> CliResult {
    let est: Estimator = a.estimator.parse()?;
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(CliError::usage("--level must lie in (0, 1)"));
    }
    let y = read_series(&a.data)?;
    let model = read_model(&a.model)?;
    let sigma = match model.sigma() {
        Some(s) => s.matrix().clone(),
        None => residual_sigma(&y, &model)?,
    };
    let alpha = AlphaVector::from_model(&model);
    let cov = match est {
        Estimator::Lse => lse_covariance_at(&y, &alpha, &sigma)?,
        Estimator::Qmle => qmle_covariance_at(&y, &alpha, &sigma)?,
    };
    let c = cov
        .alpha_cov(est)
        .ok_or_else(|| CliError { code: 4, msg: "covariance matrix is singular".into() })?;
    let table = significance_table(&model, c, y.len(), a.level)?;
    match g.format {
        Format::Csv => {
            let mut s = String::from("param,estimate,se,z,p_value,significant\n");
            for r in &table.rows {
                s.push_str(&format!("{},{:?},{:?},{:?},{:?},{}\n", r.label, r.estimate, r.se, r.z, r.p_value, r.significant));
            }
            write(&g.output_dir.join("significance.csv"), &s)?;
            let mut s = String::from("to,from,influence\n");
            for c in &table.granger {
                s.push_str(&format!("{},{},{}\n", c.to, c.from, serde_json::to_value(c.influence).unwrap().as_str().unwrap()));
            }
            write(&g.output_dir.join("granger.csv"), &s)?;
        }
        Format::Json => write(&g.output_dir.join("significance.json"), &json(&table))?,
    }
    println!("{:<12} {:>12} {:>10} {:>8} {:>8}", "param", "estimate", "se", "z", "p");
    for r in &table.rows {
        println!("{:<12} {:>12.5} {:>10.5} {:>8.2} {:>8.4}", r.label, r.estimate, r.se, r.z, r.p_value);
    }
    Ok(0)
}

fn cmd_forecast(g: &Global, a: &ForecastArgs) -> CliResult {
    let y = read_series(&a.data)?;
    if let Some(path) = &a.model {
        if a.window.is_some() {
            return Err(CliError::usage("give either --model or --window"));
        }
        let model = read_model(path)?;
        let f = one_step_forecast(&y, &model)?;
        let line: Vec<String> = f.iter().map(|v| format!("{v:?}")).collect();
        let header: Vec<String> = (1..=f.len()).map(|i| format!("y{i}")).collect();
        write(&g.output_dir.join("forecast.csv"), &format!("{}\n{}\n", header.join(","), line.join(",")))?;
        println!("forecast of observation {}: {}", y.len() + 1, line.join(", "));
        return Ok(0);
    }
    let window = a.window.ok_or_else(|| CliError::usage("forecast needs --model or --window"))?;
    let method = match (&a.order, a.var) {
        (Some(o), None) => ForecastMethod::Sarma {
            order: parse_order(o)?,
            estimator: a.fit.estimator()?,
        },
        (None, Some(p)) => ForecastMethod::Var { p },
        _ => return Err(CliError::usage("rolling evaluation needs exactly one of --order or --var")),
    };
    let cfg = RollingConfig {
        window,
        refit_every: a.refit_every,
        full_history: !a.window_history,
        fit: a.fit.config(g.seed)?,
    };
    let rep = rolling_evaluate(&y, method, &cfg)?;
    match g.format {
        Format::Csv => {
            let n = y.dim();
            let mut s = String::from("origin");
            for i in 1..=n {
                s.push_str(&format!(",forecast{i}"));
            }
            for i in 1..=n {
                s.push_str(&format!(",actual{i}"));
            }
            s.push('\n');
            for p in &rep.points {
                s.push_str(&p.origin.to_string());
                for v in p.forecast.iter().chain(&p.actual) {
                    s.push_str(&format!(",{v:?}"));
                }
                s.push('\n');
            }
            write(&g.output_dir.join("forecasts.csv"), &s)?;
        }
        Format::Json => write(&g.output_dir.join("forecasts.json"), &json(&rep))?,
    }
    println!(
        "{}: RMSFE {:.6} MAFE {:.6} over {} origins ({} failed, refit every {})",
        rep.method,
        rep.rmsfe,
        rep.mafe,
        rep.points.len(),
        rep.failures.len(),
        rep.refit_every
    );
    Ok(0)
}

fn cmd_are(g: &Global, a: &AreArgs) -> CliResult {
    let preset = a.preset.preset()?;
    let dist = a.preset.dist()?;
    let (_, truth) = dgp_preset(preset, a.preset.sigma_a, dist, a.preset.b_seed.unwrap_or(g.seed))?;
    let sigma0 = truth.sigma().expect("preset carries Sigma0").matrix().clone();
    let v = are(&truth, &sigma0, dist, a.t_mc, g.seed)?;
    write(
        &g.output_dir.join("are.json"),
        &json(&serde_json::json!({ "preset": preset, "a": a.preset.sigma_a, "dist": dist, "t_mc": a.t_mc, "are": v })),
    )?;
    println!("{v:.2}");
    Ok(0)
}

fn cmd_mc(g: &Global, a: &McArgs) -> CliResult {
    let exp = match &a.config {
        Some(p) => {
            let mut e: McExperiment = toml::from_str(&read_text(p)?).map_err(|e| CliError::usage(format!("experiment: {e}")))?;
            if g.threads.is_some() {
                e.threads = g.threads;
            }
            e
        }
        None => {
            let estimators = a
                .estimators
                .iter()
                .map(|s| s.parse())
                .collect::<Result<Vec<Estimator>, _>>()?;
            let mut fit = FitConfig::default();
            if let Some(r) = a.restarts {
                fit.restarts = r;
            }
            McExperiment {
                preset: a.preset.preset()?,
                a: a.preset.sigma_a,
                dist: a.preset.dist()?,
                reps: a.reps,
                lens: a.lens.clone(),
                estimators,
                seed: g.seed,
                b_seed: a.preset.b_seed,
                fit,
                asd: !a.no_asd && !a.select,
                selection: a.select.then(|| SelectionGrid::default()),
                are_len: None,
                threads: g.threads,
            }
        }
    };
    let res = run_mc(&exp)?;
    match g.format {
        Format::Csv => {
            if !res.estimation.is_empty() {
                write(&g.output_dir.join("mc_estimation.csv"), &estimation_csv(&res))?;
            }
            if !res.selection.is_empty() {
                write(&g.output_dir.join("mc_selection.csv"), &selection_csv(&res))?;
            }
        }
        Format::Json => write(&g.output_dir.join("mc.json"), &json(&res))?,
    }
    print!("{}", pretty(&res));
    Ok(0)
}

fn run(cli: &Cli) -> CliResult {
    if cli.global.threads == Some(0) {
        return Err(CliError::usage("--threads must be positive"));
    }
    if let Some(t) = cli.global.threads {
        // a second call fails harmlessly when the pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match &cli.cmd {
        Command::Simulate(a) => cmd_simulate(&cli.global, a),
        Command::Fit(a) => cmd_fit(&cli.global, a),
        Command::Select(a) => cmd_select(&cli.global, a),
        Command::Infer(a) => cmd_infer(&cli.global, a),
        Command::Forecast(a) => cmd_forecast(&cli.global, a),
        Command::Are(a) => cmd_are(&cli.global, a),
        Command::Mc(a) => cmd_mc(&cli.global, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}
