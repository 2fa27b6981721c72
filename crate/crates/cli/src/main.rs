use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use informed_core::calibration::{default_delta_grid, DEFAULT_RHO_BOUNDS};
use informed_core::chain::{
    estimate_params, export_surface, load_chain, load_curves, load_params, read_surface, write_surface,
    PriceHistory, SurfaceFormat,
};
use informed_core::diffusion::tv_yield;
use informed_core::informed::{dividend_yield, lambda_from_psi};
use informed_core::mean_info::mean_info_price;
use informed_core::*;

const THREADS_VAR: &str = "INFORMED_OPTIONS_THREADS";

#[derive(Parser)]
#[command(name = "informed-options", version, about = "Option pricing and calibration with informed traders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-day estimates (p, mu, sigma) from a `date,close` history.
    Estimate(EstimateArgs),
    /// Price one option.
    Price(PriceArgs),
    /// Implied-parameter surface from an option chain.
    Calibrate(CalibrateArgs),
    /// Re-write a surface file in another format.
    SurfaceExport(ExportArgs),
}

#[derive(Args)]
struct EstimateArgs {
    history: PathBuf,
    /// Years per observation; prints annualized parameters instead.
    #[arg(long)]
    dt: Option<f64>,
    /// Risk-free rate for the annualized parameters.
    #[arg(long, requires = "dt")]
    r: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Crr,
    Jr,
    Ksrf,
    Informed,
    MeanInfo,
    TvMc,
    Bsm,
}

#[derive(Clone, Copy, ValueEnum)]
enum Form {
    Exact,
    FirstOrder,
}

impl From<Form> for KsrfForm {
    fn from(f: Form) -> Self {
        match f {
            Form::Exact => KsrfForm::Exact,
            Form::FirstOrder => KsrfForm::FirstOrder,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DyFlag {
    AsPrinted,
    PdeConsistent,
}

impl From<DyFlag> for DyConvention {
    fn from(f: DyFlag) -> Self {
        match f {
            DyFlag::AsPrinted => DyConvention::AsPrinted,
            DyFlag::PdeConsistent => DyConvention::PdeConsistent,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Mu,
    P,
    Lambda,
    Dev,
}

impl From<TargetArg> for Target {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Mu => Target::Mu,
            TargetArg::P => Target::P,
            TargetArg::Lambda => Target::Lambda,
            TargetArg::Dev => Target::Dev,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for SurfaceFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => SurfaceFormat::Csv,
            FormatArg::Json => SurfaceFormat::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DevFormArg {
    Rooted,
    Unrooted,
}

impl From<DevFormArg> for DevForm {
    fn from(f: DevFormArg) -> Self {
        match f {
            DevFormArg::Rooted => DevForm::Rooted,
            DevFormArg::Unrooted => DevForm::Unrooted,
        }
    }
}

#[derive(Args)]
struct PriceArgs {
    #[arg(long, value_enum)]
    model: Model,
    #[arg(long = "S0")]
    s0: f64,
    #[arg(long = "K")]
    k: f64,
    #[arg(long = "T")]
    t: f64,
    #[arg(long)]
    r: f64,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    mu: f64,
    #[arg(long, default_value_t = 0.5)]
    p0: f64,
    #[arg(long, conflicts_with = "psi")]
    lambda: Option<f64>,
    #[arg(long)]
    psi: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// Tree steps; defaults to round(T / dt).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = DAILY_DT)]
    dt: f64,
    /// Dividend yield for `--model bsm`.
    #[arg(long, default_value_t = 0.0)]
    dy: f64,
    #[arg(long, value_enum, default_value_t = DyFlag::AsPrinted)]
    dy_flag: DyFlag,
    #[arg(long, value_enum, default_value_t = Form::FirstOrder)]
    tree_form: Form,
    #[arg(long)]
    put: bool,
    /// `t,mu,sigma,r,p,psi` knots for `--model tv-mc`.
    #[arg(long)]
    curves: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    #[arg(long, default_value_t = 100)]
    steps: usize,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, value_enum)]
    target: TargetArg,
    #[arg(long)]
    chain: PathBuf,
    /// JSON market parameters (`mu, sigma, r, p0, dt`).
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    spot: f64,
    /// Output file; standard output if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Defaults to the output extension, else csv.
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    #[arg(long, allow_hyphen_values = true)]
    lower: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    upper: Option<f64>,
    /// Fix rho for `--target dev` instead of fitting it.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, value_enum, default_value_t = DevFormArg::Rooted)]
    dev_form: DevFormArg,
    #[arg(long, value_enum, default_value_t = Form::FirstOrder)]
    tree_form: Form,
    #[arg(long, value_enum, default_value_t = DyFlag::AsPrinted)]
    dy_flag: DyFlag,
}

#[derive(Args)]
struct ExportArgs {
    input: PathBuf,
    #[arg(long, value_enum)]
    format: FormatArg,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn io_failure(e: io::Error) -> Failure {
    Failure::Core(Error::Io {
        path: PathBuf::from("<stdout>"),
        source: e,
    })
}

type Outcome = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    let res = match cli.command {
        Command::Estimate(a) => estimate(a),
        Command::Price(a) => price(a),
        Command::Calibrate(a) => calibrate(a),
        Command::SurfaceExport(a) => surface_export(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Data => 2,
                ErrorKind::Numerical => 3,
            })
        }
    }
}

fn configure_threads() -> std::result::Result<(), String> {
    let Ok(v) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{THREADS_VAR} must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn print_json(v: &impl serde::Serialize) -> Outcome {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v).map_err(|e| io_failure(e.into()))?;
    writeln!(out).map_err(io_failure)
}

fn estimate(a: EstimateArgs) -> Outcome {
    let est = estimate_params(&PriceHistory::load(&a.history)?)?;
    match a.dt {
        Some(dt) => print_json(&est.annualize(dt, a.r.unwrap_or(0.0))?),
        None => print_json(&est),
    }
}

fn need(v: Option<f64>, flag: &str, model: &str) -> std::result::Result<f64, Failure> {
    v.ok_or_else(|| Failure::Usage(format!("--{flag} is required for --model {model}")))
}

fn price(a: PriceArgs) -> Outcome {
    let opt = if a.put {
        OptionSpec::put(a.k, a.t)?
    } else {
        OptionSpec::call(a.k, a.t)?
    };
    let conv = DyConvention::from(a.dy_flag);
    let steps = || match a.n {
        Some(n) => n,
        None => ((a.t / a.dt).round() as usize).max(1),
    };
    let market = |sigma: f64| {
        MarketParams {
            mu: a.mu,
            sigma,
            r: a.r,
            p0: a.p0,
            dt: a.dt,
        }
        .validated()
    };
    let closed = |sigma: f64, d_y: f64| -> Result<f64> {
        let inp = BsmInputs::new(a.s0, a.k, a.t, a.r, sigma, d_y)?;
        if a.put {
            bsm_put(&inp, conv)
        } else {
            bsm_call(&inp, conv)
        }
    };

    let value = match a.model {
        Model::Crr | Model::Jr | Model::Ksrf => {
            let m = market(need(a.sigma, "sigma", "tree")?)?;
            let model = match a.model {
                Model::Crr => TreeModel::Crr,
                Model::Jr => TreeModel::Jr,
                _ => TreeModel::Ksrf {
                    p: a.p0,
                    form: a.tree_form.into(),
                },
            };
            price_on_tree(model, a.s0, &m, &opt, steps())?
        }
        Model::Bsm => closed(need(a.sigma, "sigma", "bsm")?, a.dy)?,
        Model::Informed => {
            let sigma = need(a.sigma, "sigma", "informed")?;
            let m = market(sigma)?;
            let lambda = match (a.lambda, a.psi) {
                (Some(l), _) => l,
                (None, Some(psi)) => lambda_from_psi(psi, a.p0)?,
                (None, None) => return Err(Failure::Usage("--lambda or --psi is required for --model informed".into())),
            };
            let d_y = if lambda == 0.0 {
                0.0
            } else {
                dividend_yield(sigma, m.require_positive_theta()?, lambda)
            };
            closed(sigma, d_y)?
        }
        Model::MeanInfo => {
            let n = steps();
            let m = market(need(a.sigma, "sigma", "mean-info")?)?.with_dt(a.t / n as f64)?;
            let spec = MeanInfoSpec::new(need(a.delta, "delta", "mean-info")?, need(a.rho, "rho", "mean-info")?)?;
            mean_info_price(a.s0, &m, &spec, &opt, n)?
        }
        Model::TvMc => {
            let curves = match &a.curves {
                Some(path) => load_curves(path, a.t)?,
                None => {
                    let psi = match (a.psi, a.lambda) {
                        (Some(psi), _) => psi,
                        (None, Some(l)) => informed_core::informed::psi_from_lambda(l, a.p0)?,
                        (None, None) => 0.0,
                    };
                    ParamCurves::constant(a.mu, need(a.sigma, "sigma", "tv-mc")?, a.r, a.p0, psi, a.t)?
                }
            };
            for i in 0..=a.steps.max(1) {
                tv_yield(&curves, a.t * i as f64 / a.steps.max(1) as f64, conv)?;
            }
            let d_y = |t: f64| tv_yield(&curves, t, conv).unwrap_or(f64::NAN);
            let est = feynman_kac_price(
                a.s0,
                &curves,
                d_y,
                &opt,
                McConfig {
                    paths: a.paths,
                    steps: a.steps,
                    seed: a.seed,
                },
            )?;
            println!("{:.10} {:.10}", est.value, est.std_error);
            return Ok(());
        }
    };
    println!("{value:.10}");
    Ok(())
}

fn output_format(explicit: Option<FormatArg>, out: Option<&Path>) -> SurfaceFormat {
    match (explicit, out) {
        (Some(f), _) => f.into(),
        (None, Some(p)) => SurfaceFormat::from_path(p),
        (None, None) => SurfaceFormat::Csv,
    }
}

fn emit(s: &Surface, out: Option<&Path>, format: SurfaceFormat) -> Outcome {
    match out {
        Some(p) => Ok(export_surface(s, p, format)?),
        None => write_surface(s, &mut io::stdout().lock(), format).map_err(io_failure),
    }
}

fn calibrate(a: CalibrateArgs) -> Outcome {
    let chain = load_chain(&a.chain, a.spot)?;
    for r in &chain.rejected {
        eprintln!("{}: line {}: rejected: {}", a.chain.display(), r.line, r.reason);
    }
    let fixed = load_params(&a.params)?;
    let target = Target::from(a.target);
    let mut prob = CalibrationProblem::new(chain.quotes, fixed, target);
    prob.ksrf_form = a.tree_form.into();
    prob.dy_convention = a.dy_flag.into();
    let (lo, hi) = prob.bounds;
    prob.bounds = (a.lower.unwrap_or(lo), a.upper.unwrap_or(hi));
    let format = output_format(a.format, a.out.as_deref());

    let surface = if target == Target::Dev {
        let grid: Vec<f64> = default_delta_grid()
            .into_iter()
            .filter(|d| *d >= prob.bounds.0 && *d <= prob.bounds.1)
            .collect();
        let form = DevForm::from(a.dev_form);
        match a.rho {
            Some(rho) => {
                prob.rho = rho;
                let delta = implied_surface(&prob)?;
                delta.map_values(|d| Ok(informed_core::mean_info::dev_from_delta(&fixed, d, form)))?
            }
            None => {
                let fit = fit_rho_then_dev(&prob, &grid, DEFAULT_RHO_BOUNDS, form)?;
                eprintln!("rho {} ({})", fit.rho, fit.rho_status.as_str());
                fit.dev
            }
        }
    } else {
        implied_surface(&prob)?
    };
    emit(&surface, a.out.as_deref(), format)
}

fn surface_export(a: ExportArgs) -> Outcome {
    let s = read_surface(&a.input, SurfaceFormat::from_path(&a.input))?;
    emit(&s, a.out.as_deref(), a.format.into())
}
