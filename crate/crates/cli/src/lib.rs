//! Subcommands of the `chaosbound` binary.

pub mod config;

use chaosbound::numeric::round_significant;
use chaosbound::{
    bound_sweep, cauchy_power_variation_rate, continuous_time_rate, fbm_power_variation_rate,
    fit_decay_exponent, hermite_expand, multivariate_bound, predict_rate, rate_fit, sigma_limit_sq,
    simulate, write_bound_csv, write_simulation_csv, BoundConfig, BoundReport, CovarianceModel,
    Error, FunctionSpec, Gap, HermiteExpansion, QuadratureConfig, RateFit, RatePrediction, Result,
    SimulationResult,
};
use clap::{Args, Parser, Subcommand};
use config::{ExperimentConfig, GridSpec};
use serde::Serialize;
use serde_json::{json, Value};
use std::ffi::OsString;
use std::io::Write;

/// Significant digits of every printed number.
pub const DIGITS: usize = 12;

#[derive(Parser, Debug)]
#[command(
    name = "chaosbound",
    version,
    about = "Normal approximation bounds for Breuer-Major type sums"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "CHAOSBOUND_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Hermite expansion of a function: coefficients, rank, gap, moment checks.
    Analyze(ExperimentArgs),
    /// Covariance values and the fitted decay exponent.
    Covariance(CovarianceArgs),
    /// Univariate bound over an n grid, as CSV.
    Bound(BoundArgs),
    /// Predicted rate exponent.
    Rates(RatesArgs),
    /// Monte Carlo distances over an n grid, as CSV.
    Simulate(ExperimentArgs),
    /// Bound and simulation slopes compared with the predicted exponent.
    Verify(VerifyArgs),
    /// Bound for a vector of functions of the same sequence.
    Mvbound(ExperimentArgs),
}

#[derive(Args, Debug, Default)]
struct ExperimentArgs {
    /// JSON file with experiment settings; flags take precedence.
    #[arg(long)]
    config: Option<String>,
    /// Function spec such as `hermite:2`, `power:1.5`, `indicator:0`. Repeat for `mvbound`.
    #[arg(long = "function")]
    function: Vec<String>,
    /// Covariance spec: `fbm:H`, `cauchy:alpha,beta`, `white` or `table:path`.
    #[arg(long)]
    model: Option<String>,
    /// Sample sizes: `lo:hi` (doubling) or a comma-separated list.
    #[arg(long)]
    ngrid: Option<String>,
    #[arg(long = "qmax")]
    q_max: Option<u32>,
    /// Comma-separated metrics among W, bW, K, TV.
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<String>>,
    /// Monte Carlo replications.
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Bootstrap rounds for the confidence half-widths.
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Output path (default: standard output).
    #[arg(long, short)]
    output: Option<String>,
}

#[derive(Args, Debug)]
struct CovarianceArgs {
    #[command(flatten)]
    common: ExperimentArgs,
    /// Number of lags printed.
    #[arg(long, default_value_t = 16)]
    lags: usize,
    /// Lag range `lo:hi` of the log-log decay fit.
    #[arg(long, default_value = "64:4096")]
    fit: String,
}

#[derive(Args, Debug)]
struct BoundArgs {
    #[command(flatten)]
    common: ExperimentArgs,
    /// Print the full reports as JSON instead of CSV.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct RatesArgs {
    /// Hermite rank.
    #[arg(long)]
    m: Option<u32>,
    /// Chaotic gap: a positive integer or INFINITE.
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Power variations over fBm increments with this Hurst index.
    #[arg(long, conflicts_with_all = ["m", "cauchy", "continuous"])]
    fbm: Option<f64>,
    /// Power variations over the Cauchy class with this decay.
    #[arg(long, conflicts_with_all = ["m", "continuous"])]
    cauchy: Option<f64>,
    /// Continuous-time integrals.
    #[arg(long, conflicts_with = "m")]
    continuous: bool,
    /// With `--continuous`: the covariance is not integrable.
    #[arg(long, requires = "continuous")]
    non_integrable: bool,
    /// With `--continuous`: `g` is symmetric.
    #[arg(long, requires = "continuous")]
    symmetric: bool,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    common: ExperimentArgs,
    /// Largest accepted distance between fitted and predicted slope.
    #[arg(long)]
    tolerance: Option<f64>,
    /// Also write the bound sweep to this CSV.
    #[arg(long)]
    bound_csv: Option<String>,
    /// Also write the simulation sweep to this CSV.
    #[arg(long)]
    simulation_csv: Option<String>,
    /// Only fit the bound.
    #[arg(long)]
    skip_simulation: bool,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let base = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        let (function, functions) = match self.function.len() {
            0 => (None, None),
            1 => (Some(self.function[0].clone()), None),
            _ => (None, Some(self.function.clone())),
        };
        let flags = ExperimentConfig {
            function,
            functions,
            model: self.model.clone(),
            ngrid: self.ngrid.clone().map(GridSpec::Text),
            q_max: self.q_max,
            metrics: self.metrics.clone(),
            replications: self.replications,
            seed: self.seed,
            bootstrap: self.bootstrap,
            output: self.output.clone(),
            ..Default::default()
        };
        let mut merged = base.overridden_by(flags);
        if self.function.len() > 1 {
            merged.function = None;
        }
        Ok(merged)
    }
}

/// Rounds every float in `v` to [`DIGITS`] significant digits.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_significant(n.as_f64().unwrap_or(f64::NAN), DIGITS);
            serde_json::Number::from_f64(x)
                .map(Value::Number)
                .unwrap_or(Value::Null)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(&round_json(
        serde_json::to_value(v)?,
    ))?)
}

/// Writes to `path`, or to `out` when no path is given.
fn emit(out: &mut dyn Write, path: Option<&str>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io(format!("{p}: {e}"))),
        None => out.write_all(text.as_bytes()).map_err(Error::from),
    }
}

fn expansion(cfg: &ExperimentConfig, g: &FunctionSpec) -> Result<HermiteExpansion> {
    hermite_expand(g, cfg.q_max(), &QuadratureConfig::default())
}

fn analyze(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let g = cfg.function()?;
    let e = expansion(cfg, &g)?;
    let coefficients: Vec<Value> = e
        .active_orders()
        .into_iter()
        .map(|q| json!({"q": q, "c_q": e.coefficient(q), "chaos_weight": e.chaos_weight(q)}))
        .collect();
    let report = json!({
        "function": g,
        "q_max": e.q_max,
        "rank": e.rank,
        "gap": e.gap,
        "gap_truncated": e.gap_truncated,
        "coefficients": coefficients,
        "variance": e.variance,
        "parseval_partial": e.var_g,
        "parseval": e.parseval,
        "summability": e.summability,
        "quadrature_mean": e.mean,
    });
    emit(out, cfg.output.as_deref(), &(to_json(&report)? + "\n"))
}

fn covariance(args: &CovarianceArgs, cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let model = cfg.model()?;
    let (lo, hi) = args
        .fit
        .split_once(':')
        .and_then(|(a, b)| Some((a.trim().parse::<u64>().ok()?, b.trim().parse::<u64>().ok()?)))
        .ok_or_else(|| Error::InvalidInput(format!("bad fit range '{}'", args.fit)))?;
    let fitted = if model.support().is_some() {
        None
    } else {
        fit_decay_exponent(&model, lo, hi).ok()
    };
    let report = json!({
        "model": model,
        "rho": model.lags(args.lags),
        "support": model.support(),
        "fit_range": [lo, hi],
        "fitted_alpha": fitted,
    });
    emit(out, cfg.output.as_deref(), &(to_json(&report)? + "\n"))
}

fn bound_reports(
    cfg: &ExperimentConfig,
) -> Result<(FunctionSpec, CovarianceModel, Vec<BoundReport>)> {
    let g = cfg.function()?;
    let model = cfg.model()?;
    let grid = cfg.grid()?;
    let e = expansion(cfg, &g)?;
    let bcfg = BoundConfig::with_metrics(&cfg.metrics(&g)?);
    let reports = bound_sweep(&e, &model, &grid, cfg.q_max(), &bcfg)?;
    Ok((g, model, reports))
}

fn csv_text(write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
}

fn bound(args: &BoundArgs, cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let (_, _, reports) = bound_reports(cfg)?;
    let text = if args.json {
        to_json(&reports)? + "\n"
    } else {
        csv_text(|b| write_bound_csv(&reports, b))?
    };
    emit(out, cfg.output.as_deref(), &text)
}

fn parse_gap(s: &str) -> Result<Gap> {
    s.parse()
}

fn rates(args: &RatesArgs, out: &mut dyn Write) -> Result<()> {
    let p: RatePrediction = if let Some(h) = args.fbm {
        fbm_power_variation_rate(h)?
    } else if let Some(a) = args.cauchy {
        cauchy_power_variation_rate(a)?
    } else if args.continuous {
        continuous_time_rate(!args.non_integrable, args.symmetric)?
    } else {
        let need = |what: &str| {
            Error::InvalidInput(format!(
                "rates needs --{what} (or --fbm, --cauchy, --continuous)"
            ))
        };
        let m = args.m.ok_or_else(|| need("m"))?;
        let gamma = parse_gap(args.gamma.as_deref().ok_or_else(|| need("gamma"))?)?;
        let alpha = args.alpha.ok_or_else(|| need("alpha"))?;
        predict_rate(m, gamma, alpha)?
    };
    let text = format!("{}\n{}\n", to_json(&p)?, p.summary());
    emit(out, None, &text)
}

/// Simulation sweep, with the exact `σ_n²` of each `n`.
fn simulation_results(
    g: &FunctionSpec,
    e: &HermiteExpansion,
    model: &CovarianceModel,
    grid: &[usize],
    cfg: &ExperimentConfig,
) -> Result<Vec<SimulationResult>> {
    let scfg = cfg.simulation();
    grid.iter()
        .map(|&n| {
            let s2 = chaosbound::sigma_n_sq(e, model, n)?;
            simulate(g, e.mean, s2, model, n, &scfg)
        })
        .collect()
}

fn simulate_cmd(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let g = cfg.function()?;
    let model = cfg.model()?;
    let grid = cfg.grid()?;
    let e = expansion(cfg, &g)?;
    let results = simulation_results(&g, &e, &model, &grid, cfg)?;
    emit(
        out,
        cfg.output.as_deref(),
        &csv_text(|b| write_simulation_csv(&results, b))?,
    )
}

/// Fit on values quantized exactly as they are printed, so a fit of the
/// emitted CSV reproduces this one bit for bit.
pub fn quantized_fit(points: &[(usize, f64)]) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .map(|&(n, v)| (n as f64, round_significant(v, DIGITS)))
        .collect();
    rate_fit(&pts)
}

/// Predicted exponent for the expansion and model; finite-range covariances
/// behave like arbitrarily fast decay.
fn predicted_rate(e: &HermiteExpansion, model: &CovarianceModel) -> Result<Value> {
    if model.support().is_some() {
        return Ok(json!({
            "exponent": -0.5,
            "validity": "finite-range covariance",
        }));
    }
    let alpha = model.decay_alpha.ok_or_else(|| {
        Error::InvalidInput(format!(
            "model '{}' has no declared decay exponent",
            model.label
        ))
    })?;
    Ok(serde_json::to_value(predict_rate(e.rank, e.gap, alpha)?)?)
}

fn verify(args: &VerifyArgs, cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let g = cfg.function()?;
    let model = cfg.model()?;
    let grid = cfg.grid()?;
    let tolerance = args.tolerance.or(cfg.tolerance).unwrap_or(0.1);
    let e = expansion(cfg, &g)?;
    let predicted = predicted_rate(&e, &model)?;
    let exponent = predicted["exponent"].as_f64().unwrap_or(f64::NAN);

    let bcfg = BoundConfig::with_metrics(&[chaosbound::Metric::Wasserstein]);
    let reports = bound_sweep(&e, &model, &grid, cfg.q_max(), &bcfg)?;
    let values: Vec<(usize, f64)> = reports
        .iter()
        .map(|r| {
            (
                r.n,
                r.metric(chaosbound::Metric::Wasserstein)
                    .unwrap_or(f64::NAN),
            )
        })
        .collect();
    if let Some(p) = args.bound_csv.as_deref().or(cfg.bound_csv.as_deref()) {
        emit(out, Some(p), &csv_text(|b| write_bound_csv(&reports, b))?)?;
    }
    let fit = quantized_fit(&values)?;
    let monotone = values.iter().all(|v| v.1 > 0.0) && values.windows(2).all(|w| w[1].1 < w[0].1);
    let pass = (fit.slope - exponent).abs() <= tolerance && monotone;

    let simulation = if args.skip_simulation {
        Value::Null
    } else {
        let results = simulation_results(&g, &e, &model, &grid, cfg)?;
        if let Some(p) = args
            .simulation_csv
            .as_deref()
            .or(cfg.simulation_csv.as_deref())
        {
            emit(
                out,
                Some(p),
                &csv_text(|b| write_simulation_csv(&results, b))?,
            )?;
        }
        let pts: Vec<(usize, f64)> = results.iter().map(|r| (r.n, r.d_k)).collect();
        json!({
            "d_K": pts.iter().map(|p| p.1).collect::<Vec<_>>(),
            "fit": quantized_fit(&pts).ok(),
        })
    };
    let report = json!({
        "function": g,
        "model": model.label,
        "ngrid": grid,
        "predicted": predicted,
        "sigma_limit_sq": sigma_limit_sq(&e, &model),
        "bound": {
            "metric": "W",
            "values": values.iter().map(|v| v.1).collect::<Vec<_>>(),
            "fit": fit,
            "positive_decreasing": monotone,
        },
        "simulation": simulation,
        "tolerance": tolerance,
        "verdict": if pass { "PASS" } else { "FAIL" },
    });
    emit(out, cfg.output.as_deref(), &(to_json(&report)? + "\n"))
}

fn mvbound(cfg: &ExperimentConfig, out: &mut dyn Write) -> Result<()> {
    let specs = cfg.function_list()?;
    let model = cfg.model()?;
    let grid = cfg.grid()?;
    let exps: Vec<HermiteExpansion> = specs
        .iter()
        .map(|g| expansion(cfg, g))
        .collect::<Result<_>>()?;
    let reports = grid
        .iter()
        .map(|&n| multivariate_bound(&exps, &model, n, cfg.q_max(), &BoundConfig::default()))
        .collect::<Result<Vec<_>>>()?;
    emit(out, cfg.output.as_deref(), &(to_json(&reports)? + "\n"))
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Analyze(a) => analyze(&a.resolve()?, out),
        Command::Covariance(a) => covariance(a, &a.common.resolve()?, out),
        Command::Bound(a) => bound(a, &a.common.resolve()?, out),
        Command::Rates(a) => rates(a, out),
        Command::Simulate(a) => simulate_cmd(&a.resolve()?, out),
        Command::Verify(a) => verify(a, &a.common.resolve()?, out),
        Command::Mvbound(a) => mvbound(&a.resolve()?, out),
    }
}

/// Runs the binary on `argv` (program name first) and returns the exit code:
/// 0 on success, 2 for usage or configuration errors, 1 for failed
/// computations.
pub fn run_command<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: cannot start worker pool: {e}");
            return 2;
        }
    };
    let mut buf = Vec::new();
    let result = pool.install(|| dispatch(&cli, &mut buf));
    let _ = out.write_all(&buf);
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_configuration() {
                2
            } else {
                1
            }
        }
    }
}
