use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use rsnn::pipeline::{condition_report, run, sweep, RunConfig};
use rsnn::pod::{IndicatorKind, PodGram};
use rsnn::{Error, Result};

/// Dimensionality-reduced neural-network subspace eigensolver.
#[derive(Parser)]
#[command(name = "rsnn", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train, reduce and solve one configuration; report errors.
    Run(RunArgs),
    /// Run over a list of subspace dimensions M.
    Sweep {
        #[command(flatten)]
        args: RunArgs,
        /// Comma-separated list of M values.
        #[arg(long, value_delimiter = ',', required = true)]
        ms: Vec<usize>,
    },
    /// Condition numbers before and after reduction, for both POD Grams.
    CondReport {
        #[command(flatten)]
        args: RunArgs,
        /// Comma-separated list of M values.
        #[arg(long, value_delimiter = ',', required = true)]
        ms: Vec<usize>,
    },
}

#[derive(Args, Default)]
struct RunArgs {
    /// TOML file with the same keys as the long flags; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// laplace2d, ho-decoupled or ho-coupled.
    #[arg(long)]
    problem: Option<String>,
    /// Width M of the subspace layer.
    #[arg(long = "dim-M")]
    dim_m: Option<usize>,
    /// Number k of eigenpairs.
    #[arg(long)]
    num_eigs: Option<usize>,
    /// Seed of the parameter and output-coefficient initialization.
    #[arg(long)]
    seed: Option<u64>,
    /// Relative loss-change tolerance for training.
    #[arg(long)]
    eps_tol: Option<f64>,
    /// Maximum number of training epochs.
    #[arg(long)]
    n_max: Option<usize>,
    /// POD energy threshold.
    #[arg(long)]
    gamma: Option<f64>,
    /// Inner product of the POD: mass or stiffness.
    #[arg(long)]
    pod_gram: Option<PodGram>,
    /// POD energy indicator: sqrt or plain.
    #[arg(long)]
    indicator: Option<String>,
    /// Relative floor of the POD spectrum (default (M·ε)²).
    #[arg(long)]
    pod_floor: Option<f64>,
    /// Solve the full M × M problem without reduction.
    #[arg(long)]
    no_reduce: bool,
    /// Skip the M × M condition-number measurements.
    #[arg(long)]
    no_conditions: bool,
    /// Quadrature points per dimension.
    #[arg(long)]
    quad_points: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Config-file keys mirror the long flags.
#[derive(Deserialize, Default)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct FileConfig {
    problem: Option<String>,
    #[serde(rename = "dim-M")]
    dim_m: Option<usize>,
    num_eigs: Option<usize>,
    seed: Option<u64>,
    eps_tol: Option<f64>,
    n_max: Option<usize>,
    gamma: Option<f64>,
    pod_gram: Option<PodGram>,
    indicator: Option<String>,
    pod_floor: Option<f64>,
    no_reduce: Option<bool>,
    no_conditions: Option<bool>,
    quad_points: Option<usize>,
    out: Option<PathBuf>,
}

fn parse_indicator(s: &str) -> Result<IndicatorKind> {
    match s {
        "sqrt" => Ok(IndicatorKind::Sqrt),
        "plain" => Ok(IndicatorKind::Plain),
        other => Err(Error::InvalidArgument(format!(
            "unknown indicator `{other}` (expected sqrt or plain)"
        ))),
    }
}

fn read_file_config(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text)
        .map_err(|e| Error::InvalidArgument(format!("config file {}: {e}", path.display())))
}

/// Problem defaults, then the config file, then the flags.
fn resolve(args: &RunArgs) -> Result<RunConfig> {
    let file = match &args.config {
        Some(path) => read_file_config(path)?,
        None => FileConfig::default(),
    };
    let problem = args
        .problem
        .clone()
        .or(file.problem.clone())
        .unwrap_or_else(|| "laplace2d".to_string());
    let mut c = RunConfig::for_problem(&problem)?;
    macro_rules! layer {
        ($($field:ident),*) => {
            $(
                if let Some(v) = file.$field.clone() { c.$field = v; }
                if let Some(v) = args.$field.clone() { c.$field = v; }
            )*
        };
    }
    layer!(
        dim_m,
        num_eigs,
        seed,
        eps_tol,
        n_max,
        gamma,
        pod_gram,
        quad_points
    );
    if let Some(ind) = args.indicator.as_deref().or(file.indicator.as_deref()) {
        c.indicator = parse_indicator(ind)?;
    }
    c.pod_floor = args.pod_floor.or(file.pod_floor);
    c.reduce = !(args.no_reduce || file.no_reduce.unwrap_or(false));
    c.conditions = !(args.no_conditions || file.no_conditions.unwrap_or(false));
    c.out = args.out.clone().or(file.out);
    c.validate()?;
    Ok(c)
}

fn fmt_kappa(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3e}")).unwrap_or_else(|| "-".into())
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let config = resolve(args)?;
    let out = run(&config)?;
    let s = &out.solution;
    println!(
        "{}: M = {}, K = {}, epochs = {} ({:?}), final loss = {:.10e}",
        config.problem,
        config.dim_m,
        s.reduced_dim.map_or("-".to_string(), |k| k.to_string()),
        out.trace.epochs(),
        out.trace.reason,
        out.trace.final_loss()
    );
    println!(
        "kappa(A) = {}, kappa(B) = {}, kappa(A_red) = {}, kappa(B_red) = {}",
        fmt_kappa(s.conditions.kappa_a),
        fmt_kappa(s.conditions.kappa_b),
        fmt_kappa(s.conditions.kappa_a_reduced),
        fmt_kappa(s.conditions.kappa_b_reduced)
    );
    if s.used_pinv_fallback {
        println!("mass matrix not numerically definite; pseudoinverse fallback used");
    }
    println!(
        "{:>3} {:>8} {:>22} {:>11} {:>11} {:>11}",
        "l", "(n1,n2)", "lambda_h", "err_lambda", "err_L2", "err_H1"
    );
    for e in &out.report.entries {
        println!(
            "{:>3} {:>8} {:>22.15e} {:>11.3e} {:>11.3e} {:>11.3e}",
            e.l,
            format!("({},{})", e.n.0, e.n.1),
            e.lambda_h,
            e.err_lambda,
            e.err_l2,
            e.err_h1
        );
    }
    println!(
        "b-orthonormality defect = {:.3e}, wall time = {:.1} s",
        out.report.orthonormality_defect, out.report.wall_time_secs
    );
    Ok(())
}

fn cmd_sweep(args: &RunArgs, ms: &[usize]) -> Result<()> {
    let config = resolve(args)?;
    let rows = sweep(&config, ms)?;
    println!(
        "{:>6} {:>6} {:>7} {:>14}",
        "M", "K", "epochs", "max err_lambda"
    );
    for r in rows {
        let worst = r.err_lambda.iter().copied().fold(0.0, f64::max);
        println!(
            "{:>6} {:>6} {:>7} {:>14.3e}",
            r.dim_m,
            r.reduced_dim.map_or("-".to_string(), |k| k.to_string()),
            r.epochs,
            worst
        );
    }
    Ok(())
}

fn cmd_cond_report(args: &RunArgs, ms: &[usize]) -> Result<()> {
    let config = resolve(args)?;
    let rows = condition_report(&config, ms)?;
    println!("(values above ~1e16 are saturated by double precision)");
    println!(
        "{:>6} {:>11} {:>11} {:>10} {:>5} {:>11} {:>11}",
        "M", "kappa(A)", "kappa(B)", "pod-gram", "K", "kappa(A_r)", "kappa(B_r)"
    );
    for r in rows {
        println!(
            "{:>6} {:>11.3e} {:>11.3e} {:>10} {:>5} {:>11.3e} {:>11.3e}",
            r.dim_m,
            r.kappa_a,
            r.kappa_b,
            r.pod_gram.as_str(),
            r.reduced_dim,
            r.kappa_a_reduced,
            r.kappa_b_reduced
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep { args, ms } => cmd_sweep(args, ms),
        Command::CondReport { args, ms } => cmd_cond_report(args, ms),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
