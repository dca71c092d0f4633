use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cdep_bounds::models::{cdep_from_gmsm, gmsm_from_cdep};
use cdep_bounds::{CellSensitivity, GmsmBounds};
use cdep_bounds_cli::check::oracle_check;
use cdep_bounds_cli::config::{parse_grid, BreakdownSpec};
use cdep_bounds_cli::report::{fmt_num, sha256_hex, BreakdownRow};
use cdep_bounds_cli::{
    breakdown, ingest_cell_summary, ingest_csv, run, CliError, Config, EstimandSpec, OverlapPolicy, Problem, Report,
    Result, SensitivitySpec,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cdep-bounds", version, about = "Sharp treatment-effect bounds under relaxed unconfoundedness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bound every requested estimand at every sensitivity level.
    Bounds(BoundsArgs),
    /// Smallest Λ at which each estimand's interval covers a target.
    Breakdown(BreakdownArgs),
    /// Compare closed-form envelopes against brute-force enumeration.
    OracleCheck(OracleArgs),
    /// Convert between c-dependence bounds and odds-ratio bounds.
    Convert(ConvertArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Micro-data CSV (outcome, treatment, covariates).
    #[arg(long, conflicts_with = "cells", required_unless_present = "cells")]
    data: Option<PathBuf>,
    /// Cell-summary CSV (cell, weight, p1, arm, value, mass).
    #[arg(long)]
    cells: Option<PathBuf>,
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Symmetric Λ grid `start:stop:step`; overrides the configured sensitivity.
    #[arg(long)]
    grid: Option<String>,
    /// Estimand tag; repeatable; replaces configured estimands.
    #[arg(long = "estimand")]
    estimands: Vec<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    z: Option<f64>,
    #[arg(long)]
    epsilon_overlap: Option<f64>,
    /// Drop cells violating overlap and reweight the rest.
    #[arg(long)]
    drop_nonoverlap: bool,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Write the CSV report here and the text report next to it (`.txt`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BreakdownArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    target: Option<f64>,
    #[arg(long)]
    lambda_max: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = 400)]
    resolution: usize,
    #[arg(long, default_value_t = 0.02)]
    gap: f64,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    p1: f64,
    /// Symmetric Λ, i.e. `(1/Λ, Λ)`.
    #[arg(long, conflicts_with_all = ["lambda_lo", "c_lo"])]
    lambda: Option<f64>,
    #[arg(long, requires = "lambda_hi")]
    lambda_lo: Option<f64>,
    #[arg(long)]
    lambda_hi: Option<f64>,
    #[arg(long, requires = "c_hi", conflicts_with = "lambda_lo")]
    c_lo: Option<f64>,
    #[arg(long)]
    c_hi: Option<f64>,
}

struct Loaded {
    problem: Problem,
    config: Config,
    digest: String,
    dropped: Vec<String>,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(CliError::io(path.display().to_string()))
}

fn load(args: &InputArgs) -> Result<Loaded> {
    let mut config = match &args.config {
        Some(path) => {
            let text = String::from_utf8(read(path)?).map_err(|_| CliError::Validation("config is not UTF-8".into()))?;
            Config::from_toml(&text)?
        }
        None => Config::default(),
    };
    if let Some(grid) = &args.grid {
        config.sensitivity = Some(SensitivitySpec::Msm { lambdas: parse_grid(grid)? });
    }
    if !args.estimands.is_empty() {
        config.estimands = args
            .estimands
            .iter()
            .map(|name| {
                let mut spec = EstimandSpec::named(name);
                match name.as_str() {
                    "dte" => spec.z = args.z,
                    "qte" | "qtt" | "qcate" | "qdte" => spec.tau = args.tau,
                    _ => {}
                }
                spec
            })
            .collect();
    }
    if let Some(eps) = args.epsilon_overlap {
        config.epsilon_overlap = eps;
    }
    config.drop_nonoverlap |= args.drop_nonoverlap;
    if !(0.0..0.5).contains(&config.epsilon_overlap) {
        return Err(CliError::Validation(format!("epsilon_overlap {} outside [0, 0.5)", config.epsilon_overlap)));
    }
    let policy = OverlapPolicy {
        epsilon: config.epsilon_overlap,
        drop: config.drop_nonoverlap,
    };
    let (bytes, ingested) = match (&args.data, &args.cells) {
        (Some(path), _) => {
            let bytes = read(path)?;
            let ingested = ingest_csv(bytes.as_slice(), &config.columns, policy)?;
            (bytes, ingested)
        }
        (None, Some(path)) => {
            let bytes = read(path)?;
            let ingested = ingest_cell_summary(bytes.as_slice(), policy)?;
            (bytes, ingested)
        }
        (None, None) => return Err(CliError::Validation("one of --data or --cells is required".into())),
    };
    for id in &ingested.dropped {
        log::warn!("dropped cell '{id}' for lack of overlap; remaining weights renormalized");
    }
    let estimands = config.estimands.iter().map(EstimandSpec::to_estimand).collect::<Result<Vec<_>>>()?;
    let sensitivity = config.sensitivity.clone().unwrap_or_default();
    let problem = Problem::new(ingested.cells, estimands, sensitivity, config.epsilon_overlap)?;
    Ok(Loaded {
        problem,
        config,
        digest: sha256_hex(&bytes),
        dropped: ingested.dropped,
    })
}

fn stamp(report: &mut Report, loaded: &Loaded) {
    report.provenance.input_digest = loaded.digest.clone();
    report.provenance.config = loaded.config.to_toml();
    report.provenance.dropped_cells = loaded.dropped.clone();
}

fn emit(report: &Report, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, report.to_csv()).map_err(CliError::io(path.display().to_string()))?;
            let text_path = path.with_extension("txt");
            std::fs::write(&text_path, report.to_text()).map_err(CliError::io(text_path.display().to_string()))
        }
        None => {
            print!("{}", report.to_text());
            Ok(())
        }
    }
}

fn cmd_bounds(args: BoundsArgs) -> Result<()> {
    let loaded = load(&args.input)?;
    let mut report = run(&loaded.problem)?;
    stamp(&mut report, &loaded);
    emit(&report, args.out.as_deref())
}

fn cmd_breakdown(args: BreakdownArgs) -> Result<()> {
    let loaded = load(&args.input)?;
    let spec = loaded.config.breakdown.clone().unwrap_or_default();
    let spec = BreakdownSpec {
        target: args.target.unwrap_or(spec.target),
        lambda_max: args.lambda_max.unwrap_or(spec.lambda_max),
    };
    let mut report = Report::new(Vec::new());
    for estimand in &loaded.problem.estimands {
        report.breakdowns.push(BreakdownRow {
            estimand: estimand.tag().to_string(),
            params: estimand.params_label(),
            target: spec.target,
            lambda_max: spec.lambda_max,
            value: breakdown(&loaded.problem, estimand, spec.target, spec.lambda_max)?,
        });
    }
    stamp(&mut report, &loaded);
    emit(&report, args.out.as_deref())
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    let loaded = load(&args.input)?;
    let outcome = oracle_check(&loaded.problem, args.resolution, args.gap)?;
    for line in &outcome.lines {
        println!("{line}");
    }
    if outcome.passed() {
        Ok(())
    } else {
        Err(CliError::Invariant(format!("{} oracle checks failed", outcome.failures)))
    }
}

fn cmd_convert(args: ConvertArgs) -> Result<()> {
    let err = |e| CliError::bounds("convert")(e);
    let (s, g) = match (args.lambda, args.lambda_lo.zip(args.lambda_hi), args.c_lo.zip(args.c_hi)) {
        (Some(l), _, _) => {
            let g = GmsmBounds::msm(l).map_err(err)?;
            (cdep_from_gmsm(args.p1, g).map_err(err)?, g)
        }
        (None, Some((lo, hi)), _) => {
            let g = GmsmBounds::new(lo, hi).map_err(err)?;
            (cdep_from_gmsm(args.p1, g).map_err(err)?, g)
        }
        (None, None, Some((lo, hi))) => {
            let s = CellSensitivity::new(lo, hi);
            (s, gmsm_from_cdep(args.p1, s).map_err(err)?)
        }
        _ => return Err(CliError::Validation("give --lambda, --lambda-lo/--lambda-hi or --c-lo/--c-hi".into())),
    };
    println!("p1 = {}", fmt_num(args.p1));
    println!("c_lo = {}, c_hi = {}", fmt_num(s.c_lo), fmt_num(s.c_hi));
    println!("lambda_lo = {}, lambda_hi = {}", fmt_num(g.lambda_lo), fmt_num(g.lambda_hi));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Bounds(a) => cmd_bounds(a),
        Command::Breakdown(a) => cmd_breakdown(a),
        Command::OracleCheck(a) => cmd_oracle(a),
        Command::Convert(a) => cmd_convert(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
