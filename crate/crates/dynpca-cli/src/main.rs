//! `dynpca` command line: simulate panels, fit dynamic sparse principal
//! subspaces, tune parameters, evaluate against known truth, and export
//! plot-ready tables.

mod config;
mod ingest;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dynpca::estimator::{
    default_grid, fit_trajectory, CovarianceKind, DimensionRule, DpcaConfig, ParamSchedule,
};
use dynpca::kernel::{KernelFamily, KernelSpec};
use dynpca::sim::{
    generate_panel, integrated_squared_error, tpr_tnr, FitStage, SamplingDesign, SimDesign,
};
use dynpca::tuning::{tune_sequential, TuningGrids, TuningMode};

use ingest::CsvFormat;
use output::{
    curve_csv, dataset_to_long_csv, dataset_to_wide_csv, fit_from_json, fit_to_json,
    metrics_csv, pi_diagonal_csv, rates_csv, write_file, FitJson, TruthSidecar, TuningJson,
    SCHEMA_VERSION,
};

/// Errors carrying their process exit code: 1 usage, 2 data, 3 numerical.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => m,
        }
    }
}

fn from_core(err: dynpca::Error) -> CliError {
    match err {
        dynpca::Error::AllPointsFailed(_)
        | dynpca::Error::AllCandidatesFailed
        | dynpca::Error::SubproblemFail { .. } => CliError::Numerical(err.to_string()),
        other => CliError::Data(other.to_string()),
    }
}

#[derive(Parser)]
#[command(
    name = "dynpca",
    version,
    about = "Dynamic sparse principal subspace estimation for repeated measurements"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic panel and its ground-truth sidecar.
    Simulate(SimulateArgs),
    /// Fit the two-step estimator over an evaluation grid.
    Fit(FitArgs),
    /// Select bandwidth, sparsity, and threshold by cross-validation.
    Tune(TuneArgs),
    /// Score a fit against a ground-truth sidecar.
    Evaluate(EvaluateArgs),
    /// Convert a result JSON into plot-ready CSV tables.
    Export(ExportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// "common" or an irregular setting number 1..6.
    #[arg(long)]
    setting: String,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// Grid size under the common design.
    #[arg(long)]
    m: Option<usize>,
    /// Per-subject observation-count support under the irregular design,
    /// e.g. "3,4,5".
    #[arg(long)]
    m_support: Option<String>,
    #[arg(long)]
    sigma2: Option<f64>,
    /// RNG seed (mandatory: simulated data must be reproducible).
    #[arg(long)]
    seed: u64,
    /// Replication index within the seed's stream.
    #[arg(long, default_value_t = 0)]
    replication: usize,
    #[arg(long, default_value = "wide")]
    format: String,
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth sidecar path (default: <out>.truth.json).
    #[arg(long)]
    truth_out: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "auto")]
    format: String,
    /// Fixed subspace dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Choose d per grid point by fraction of explained variance.
    #[arg(long, conflicts_with = "d")]
    fve: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    grid_points: Option<usize>,
    /// Disable mean correction of the smoothed covariance.
    #[arg(long)]
    no_center: bool,
    /// Covariance estimator: auto, pooled, or common.
    #[arg(long)]
    covariance: Option<String>,
    /// Apply h*, rho*, gamma* from a tuning report.
    #[arg(long)]
    tuning: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Projection-diagonal table (default: <out>.pi.csv).
    #[arg(long)]
    pi_csv: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "auto")]
    format: String,
    #[arg(long)]
    d: Option<usize>,
    /// RNG seed for folds and validation subsampling (mandatory).
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    /// Comma-separated candidate bandwidths.
    #[arg(long)]
    bandwidths: Option<String>,
    #[arg(long)]
    rhos: Option<String>,
    #[arg(long)]
    gammas: Option<String>,
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long)]
    epsilon_gamma: Option<f64>,
    #[arg(long)]
    tuning_times: Option<String>,
    /// "shared" (one rho/gamma for all t) or "per-point".
    #[arg(long, default_value = "shared")]
    mode: String,
    /// Grid size for per-point tuning.
    #[arg(long)]
    grid_points: Option<usize>,
    #[arg(long)]
    no_center: bool,
    #[arg(long)]
    out: PathBuf,
    /// Prefix for CV-curve CSVs (default: <out> without extension).
    #[arg(long)]
    curves_prefix: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// TPR/TNR table (default: <out>.rates.csv).
    #[arg(long)]
    rates_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-6)]
    nz_threshold: f64,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_prefix: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{err}");
                return ExitCode::SUCCESS;
            }
            eprintln!("{err}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Fit(args) => cmd_fit(args),
        Command::Tune(args) => cmd_tune(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Export(args) => cmd_export(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}

fn init_threads(flag: Option<usize>) -> Result<(), CliError> {
    let from_env = std::env::var("DYNPCA_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    // the flag wins over the environment
    if let Some(n) = flag.or(from_env) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot configure {n} threads: {e}")))?;
    }
    Ok(())
}

fn kernel_family(name: &str) -> Result<KernelFamily, CliError> {
    match name {
        "epanechnikov" => Ok(KernelFamily::Epanechnikov),
        "gaussian" | "gaussian-truncated" => Ok(KernelFamily::GaussianTruncated),
        "uniform" => Ok(KernelFamily::Uniform),
        other => Err(CliError::Usage(format!(
            "unknown kernel '{other}' (expected epanechnikov|gaussian|uniform)"
        ))),
    }
}

fn kernel_name(family: KernelFamily) -> &'static str {
    match family {
        KernelFamily::Epanechnikov => "epanechnikov",
        KernelFamily::GaussianTruncated => "gaussian",
        KernelFamily::Uniform => "uniform",
    }
}

fn csv_format(name: &str) -> Result<CsvFormat, CliError> {
    name.parse::<CsvFormat>().map_err(CliError::Usage)
}

fn cmd_simulate(mut args: SimulateArgs) -> Result<(), CliError> {
    if let Some(path) = &args.config {
        let cfg = config::load(path)?;
        config::fill(&mut args.p, &cfg, "p")?;
        config::fill(&mut args.n, &cfg, "n")?;
        config::fill(&mut args.m, &cfg, "m")?;
        config::fill(&mut args.sigma2, &cfg, "sigma2")?;
        config::fill(&mut args.m_support, &cfg, "m_support")?;
    }
    let p = args
        .p
        .ok_or_else(|| CliError::Usage("--p is required".into()))?;
    let mut design = match args.setting.as_str() {
        "common" => {
            let n = args
                .n
                .ok_or_else(|| CliError::Usage("--n is required for --setting common".into()))?;
            let m = args
                .m
                .ok_or_else(|| CliError::Usage("--m is required for --setting common".into()))?;
            SimDesign::common(p, n, m)
        }
        other => {
            let idx: usize = other.parse().map_err(|_| {
                CliError::Usage(format!(
                    "--setting must be 'common' or 1..6, got '{other}'"
                ))
            })?;
            let mut d = SimDesign::irregular_setting(idx, p).map_err(from_core)?;
            if let Some(n) = args.n {
                d.n = n;
            }
            if let Some(raw) = &args.m_support {
                let support: Result<Vec<usize>, _> =
                    raw.split(',').map(|t| t.trim().parse::<usize>()).collect();
                d.sampling = SamplingDesign::Irregular {
                    m_support: support
                        .map_err(|_| CliError::Usage("bad --m-support list".into()))?,
                };
            }
            d
        }
    };
    if let Some(s2) = args.sigma2 {
        design.sigma2 = s2;
    }
    design.seed = args.seed;

    let (data, _) = generate_panel(&design, args.replication).map_err(from_core)?;
    let csv = match args.format.as_str() {
        "wide" => dataset_to_wide_csv(&data),
        "long" => dataset_to_long_csv(&data),
        other => {
            return Err(CliError::Usage(format!(
                "unknown dataset format '{other}' (expected wide|long)"
            )))
        }
    };
    let sidecar = TruthSidecar::from_design(&design, args.replication);
    let sidecar_json = serde_json::to_string_pretty(&sidecar)
        .map_err(|e| CliError::Data(e.to_string()))?;

    let truth_path = args
        .truth_out
        .unwrap_or_else(|| with_suffix(&args.out, ".truth.json"));
    write_file(&args.out, &csv)?;
    write_file(&truth_path, &sidecar_json)?;
    eprintln!(
        "wrote {} ({} subjects, p = {}, {} design) and {}",
        args.out.display(),
        design.n,
        design.p,
        output::design_label(&data),
        truth_path.display()
    );
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.with_extension("");
    PathBuf::from(format!("{}{}", stem.display(), suffix))
}

fn cmd_fit(mut args: FitArgs) -> Result<(), CliError> {
    init_threads(args.threads)?;
    if let Some(path) = &args.config {
        let cfg = config::load(path)?;
        config::fill(&mut args.d, &cfg, "d")?;
        config::fill(&mut args.fve, &cfg, "fve")?;
        config::fill(&mut args.h, &cfg, "h")?;
        config::fill(&mut args.rho, &cfg, "rho")?;
        config::fill(&mut args.gamma, &cfg, "gamma")?;
        config::fill(&mut args.grid_points, &cfg, "grid_points")?;
        config::fill(&mut args.kernel, &cfg, "kernel")?;
        config::fill(&mut args.covariance, &cfg, "covariance")?;
    }

    let (data, time_map) = ingest::ingest(&args.input, csv_format(&args.format)?)?;

    let dimension = match (args.d, args.fve) {
        (Some(d), None) => DimensionRule::Fixed(d),
        (None, Some(threshold)) => DimensionRule::Fve(threshold),
        (None, None) => return Err(CliError::Usage("one of --d or --fve is required".into())),
        (Some(_), Some(_)) => unreachable!("clap enforces the conflict"),
    };
    let family = kernel_family(args.kernel.as_deref().unwrap_or("epanechnikov"))?;
    let grid_points = args.grid_points.unwrap_or(100);
    if grid_points < 2 {
        return Err(CliError::Usage("--grid-points must be at least 2".into()));
    }

    let mut rho = ParamSchedule::Constant(args.rho.unwrap_or(0.0));
    let mut gamma = ParamSchedule::Constant(args.gamma.unwrap_or(0.0));
    let mut bandwidth = args.h;
    if let Some(path) = &args.tuning {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        let tuned: TuningJson = serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("bad tuning JSON: {e}")))?;
        bandwidth = Some(tuned.report.h_star);
        rho = tuned.report.rho_star.clone();
        gamma = tuned.report.gamma_star.clone();
    }
    let bandwidth =
        bandwidth.ok_or_else(|| CliError::Usage("--h (or --tuning) is required".into()))?;
    let kernel = KernelSpec::new(family, bandwidth).map_err(from_core)?;

    let mut config = DpcaConfig::new(kernel, dimension);
    config.grid = default_grid(grid_points);
    config.center = !args.no_center;
    config.rho = rho;
    config.gamma = gamma;
    config.covariance = match args.covariance.as_deref().unwrap_or("auto") {
        "auto" => CovarianceKind::Auto,
        "pooled" => CovarianceKind::Pooled,
        "common" => CovarianceKind::CommonDesign,
        other => {
            return Err(CliError::Usage(format!(
                "unknown covariance estimator '{other}' (expected auto|pooled|common)"
            )))
        }
    };

    let fit = fit_trajectory(&data, &config).map_err(from_core)?;
    let skipped = fit.points.len() - fit.n_fitted();
    let json = fit_to_json(
        &fit,
        |idx| config.rho.at(idx),
        |idx| config.gamma.at(idx),
        data.p(),
        kernel_name(family),
        bandwidth,
        config.center,
        time_map,
    );
    let json_text =
        serde_json::to_string_pretty(&json).map_err(|e| CliError::Data(e.to_string()))?;
    let pi_csv = pi_diagonal_csv(&fit);

    let pi_path = args
        .pi_csv
        .unwrap_or_else(|| with_suffix(&args.out, ".pi.csv"));
    write_file(&args.out, &json_text)?;
    write_file(&pi_path, &pi_csv)?;
    if skipped > 0 {
        eprintln!("warning: {skipped} grid point(s) skipped (degenerate windows)");
    }
    eprintln!(
        "wrote {} and {} ({} fitted grid points)",
        args.out.display(),
        pi_path.display(),
        fit.n_fitted()
    );
    Ok(())
}

fn cmd_tune(mut args: TuneArgs) -> Result<(), CliError> {
    init_threads(args.threads)?;
    if let Some(path) = &args.config {
        let cfg = config::load(path)?;
        config::fill(&mut args.d, &cfg, "d")?;
        config::fill(&mut args.folds, &cfg, "folds")?;
        config::fill(&mut args.subsample, &cfg, "subsample")?;
        config::fill(&mut args.epsilon_gamma, &cfg, "epsilon_gamma")?;
        config::fill(&mut args.kernel, &cfg, "kernel")?;
        config::fill(&mut args.bandwidths, &cfg, "bandwidths")?;
        config::fill(&mut args.rhos, &cfg, "rhos")?;
        config::fill(&mut args.gammas, &cfg, "gammas")?;
        config::fill(&mut args.tuning_times, &cfg, "tuning_times")?;
    }
    let d = args
        .d
        .ok_or_else(|| CliError::Usage("--d is required".into()))?;
    let family = kernel_family(args.kernel.as_deref().unwrap_or("epanechnikov"))?;
    let (data, _) = ingest::ingest(&args.input, csv_format(&args.format)?)?;

    let parse_list = |raw: &Option<String>, what: &str| -> Result<Vec<f64>, CliError> {
        match raw {
            None => Ok(Vec::new()),
            Some(raw) => config::parse_f64_list(raw)
                .map_err(|e| CliError::Usage(format!("bad {what} list: {e}"))),
        }
    };
    let mut grids = TuningGrids {
        bandwidths: parse_list(&args.bandwidths, "--bandwidths")?,
        rhos: parse_list(&args.rhos, "--rhos")?,
        gammas: parse_list(&args.gammas, "--gammas")?,
        ..Default::default()
    };
    if let Some(folds) = args.folds {
        grids.folds = folds;
    }
    if let Some(subsample) = args.subsample {
        grids.validation_subsample = Some(subsample);
    }
    if let Some(eps) = args.epsilon_gamma {
        grids.epsilon_gamma = eps;
    }
    if let Some(raw) = &args.tuning_times {
        grids.tuning_times = Some(
            config::parse_f64_list(raw)
                .map_err(|e| CliError::Usage(format!("bad --tuning-times: {e}")))?,
        );
    }
    grids.validate().map_err(from_core)?;

    let center = !args.no_center;
    let grid_points = args.grid_points.unwrap_or(100);
    let per_point_grid = default_grid(grid_points);
    let mode = match args.mode.as_str() {
        "shared" => TuningMode::Shared,
        "per-point" => TuningMode::PerGridPoint(&per_point_grid),
        other => {
            return Err(CliError::Usage(format!(
                "unknown mode '{other}' (expected shared|per-point)"
            )))
        }
    };

    let report =
        tune_sequential(&data, &grids, d, family, center, args.seed, mode).map_err(from_core)?;

    let prefix = args
        .curves_prefix
        .clone()
        .unwrap_or_else(|| args.out.with_extension(""));
    let prefix_str = prefix.display().to_string();
    let label_for = |shared: bool, times: &[f64], i: usize| -> String {
        if shared {
            "shared".into()
        } else {
            format!("{}", times[i])
        }
    };
    let bandwidth_csv = curve_csv(
        "stage,candidate,score",
        &[("bandwidth".into(), &report.bandwidth_curve)],
    );
    let rho_curves: Vec<(String, &dynpca::tuning::CvCurve)> = report
        .rho_curves
        .iter()
        .enumerate()
        .map(|(i, c)| (label_for(report.shared, &report.tuning_times, i), c))
        .collect();
    let ip_curves: Vec<(String, &dynpca::tuning::CvCurve)> = report
        .ip_curves
        .iter()
        .enumerate()
        .map(|(i, c)| (label_for(report.shared, &report.tuning_times, i), c))
        .collect();
    let size_curves: Vec<(String, &dynpca::tuning::CvCurve)> = report
        .support_size_curves
        .iter()
        .enumerate()
        .map(|(i, c)| (label_for(report.shared, &report.tuning_times, i), c))
        .collect();
    let rho_csv = curve_csv("time,candidate,score", &rho_curves);
    let ip_csv = curve_csv("time,candidate,score", &ip_curves);
    let size_csv = curve_csv("time,candidate,retained", &size_curves);

    let json = TuningJson {
        schema_version: SCHEMA_VERSION,
        kind: "dynpca.tuning".into(),
        d,
        kernel_family: kernel_name(family).into(),
        center,
        report,
    };
    let json_text =
        serde_json::to_string_pretty(&json).map_err(|e| CliError::Data(e.to_string()))?;

    write_file(&args.out, &json_text)?;
    write_file(
        Path::new(&format!("{prefix_str}.bandwidth.csv")),
        &bandwidth_csv,
    )?;
    write_file(Path::new(&format!("{prefix_str}.rho.csv")), &rho_csv)?;
    write_file(Path::new(&format!("{prefix_str}.gamma_ip.csv")), &ip_csv)?;
    write_file(
        Path::new(&format!("{prefix_str}.gamma_support.csv")),
        &size_csv,
    )?;
    eprintln!(
        "wrote {} (h* = {}) and CV-curve tables at {prefix_str}.*.csv",
        args.out.display(),
        json.report.h_star
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let fit_text = std::fs::read_to_string(&args.fit)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", args.fit.display())))?;
    let fit_json: FitJson = serde_json::from_str(&fit_text)
        .map_err(|e| CliError::Data(format!("bad fit JSON: {e}")))?;
    let truth_text = std::fs::read_to_string(&args.truth)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", args.truth.display())))?;
    let sidecar: TruthSidecar = serde_json::from_str(&truth_text)
        .map_err(|e| CliError::Data(format!("bad truth sidecar: {e}")))?;
    if sidecar.p != fit_json.p {
        return Err(CliError::Data(format!(
            "fit has p = {}, truth sidecar has p = {}",
            fit_json.p, sidecar.p
        )));
    }

    let fit = fit_from_json(&fit_json)?;
    if fit.n_fitted() == 0 {
        return Err(CliError::Numerical("every grid point is skipped".into()));
    }
    let truth = sidecar.ground_truth();
    let grid = fit.grid.clone();
    let ise_initial =
        integrated_squared_error(&fit, &truth, &grid, FitStage::Initial).map_err(from_core)?;
    let ise_refined =
        integrated_squared_error(&fit, &truth, &grid, FitStage::Refined).map_err(from_core)?;
    let (tpr, tnr) = tpr_tnr(&fit, &truth, &grid, args.nz_threshold).map_err(from_core)?;

    let rates_path = args
        .rates_csv
        .unwrap_or_else(|| with_suffix(&args.out, ".rates.csv"));
    write_file(&args.out, &metrics_csv(ise_initial, ise_refined))?;
    write_file(&rates_path, &rates_csv(&grid, &tpr, &tnr))?;
    println!("ise_initial = {ise_initial}");
    println!("ise_refined = {ise_refined}");
    Ok(())
}

fn cmd_export(args: ExportArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", args.input.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("bad JSON: {e}")))?;
    let kind = value
        .get("kind")
        .and_then(|k| k.as_str())
        .ok_or_else(|| CliError::Data("JSON lacks a 'kind' field".into()))?;
    let prefix = args.out_prefix.display().to_string();

    match kind {
        "dynpca.fit" => {
            let fit_json: FitJson = serde_json::from_value(value)
                .map_err(|e| CliError::Data(format!("bad fit JSON: {e}")))?;
            let fit = fit_from_json(&fit_json)?;
            let mut support = String::from("t,support_size,eigengap\n");
            for (_, point) in fit.fitted() {
                support.push_str(&format!(
                    "{},{},{}\n",
                    point.t,
                    point.support.len(),
                    point.eigengap
                ));
            }
            write_file(
                Path::new(&format!("{prefix}.pi.csv")),
                &pi_diagonal_csv(&fit),
            )?;
            write_file(Path::new(&format!("{prefix}.support.csv")), &support)?;
            eprintln!("wrote {prefix}.pi.csv and {prefix}.support.csv");
        }
        "dynpca.tuning" => {
            let tuned: TuningJson = serde_json::from_value(value)
                .map_err(|e| CliError::Data(format!("bad tuning JSON: {e}")))?;
            let report = &tuned.report;
            let label_for = |i: usize| -> String {
                if report.shared {
                    "shared".into()
                } else {
                    format!("{}", report.tuning_times[i])
                }
            };
            write_file(
                Path::new(&format!("{prefix}.bandwidth.csv")),
                &curve_csv(
                    "stage,candidate,score",
                    &[("bandwidth".into(), &report.bandwidth_curve)],
                ),
            )?;
            let rho: Vec<(String, &dynpca::tuning::CvCurve)> = report
                .rho_curves
                .iter()
                .enumerate()
                .map(|(i, c)| (label_for(i), c))
                .collect();
            let ip: Vec<(String, &dynpca::tuning::CvCurve)> = report
                .ip_curves
                .iter()
                .enumerate()
                .map(|(i, c)| (label_for(i), c))
                .collect();
            let sizes: Vec<(String, &dynpca::tuning::CvCurve)> = report
                .support_size_curves
                .iter()
                .enumerate()
                .map(|(i, c)| (label_for(i), c))
                .collect();
            write_file(
                Path::new(&format!("{prefix}.rho.csv")),
                &curve_csv("time,candidate,score", &rho),
            )?;
            write_file(
                Path::new(&format!("{prefix}.gamma_ip.csv")),
                &curve_csv("time,candidate,score", &ip),
            )?;
            write_file(
                Path::new(&format!("{prefix}.gamma_support.csv")),
                &curve_csv("time,candidate,retained", &sizes),
            )?;
            eprintln!(
                "wrote {prefix}.bandwidth.csv, {prefix}.rho.csv, {prefix}.gamma_ip.csv, {prefix}.gamma_support.csv"
            );
        }
        other => {
            return Err(CliError::Data(format!(
                "nothing to export from kind '{other}'"
            )))
        }
    }
    Ok(())
}
