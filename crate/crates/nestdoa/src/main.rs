//! Command-line front end: Monte-Carlo sweeps, pseudospectrum dumps,
//! geometry reports, and complexity estimates.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nestdoa::covariance::{
    sample_covariance, spatial_smoothing, vectorize_to_coarray, DuplicatePolicy,
};
use nestdoa::geometry::ArrayGeometry;
use nestdoa::harness::{run_sweep, Estimator, ExperimentConfig, SweepSpec};
use nestdoa::kai::{complexity_estimate, ms_kai_refine, KaiConfig};
use nestdoa::signal::{synthesize, SourceScenario};
use nestdoa::subspace::{pseudospectrum, SteeringGrid};
use nestdoa::{DoaError, Result};

/// Environment variable overriding the output directory for sweeps
/// (beaten only by `--out-dir`).
const OUTPUT_DIR_ENV: &str = "NESTDOA_OUTPUT_DIR";

#[derive(Parser)]
#[command(
    name = "nestdoa",
    version,
    about = "DOA estimation on two-level nested arrays: coarray MUSIC, iterative knowledge-aided refinement, and a Monte-Carlo experiment harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an SNR sweep from a TOML config and write CSV/JSON results
    SweepSnr(SweepArgs),
    /// Run a snapshot-count sweep from a TOML config and write CSV/JSON results
    SweepSnapshots(SweepArgs),
    /// Synthesize one realization and dump its MUSIC pseudospectrum as CSV
    Spectrum(SpectrumArgs),
    /// Print an array layout and its difference coarray
    Geometry(GeometryArgs),
    /// Evaluate the closed-form operation counts of the refinement
    Complexity(ComplexityArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides NESTDOA_OUTPUT_DIR and the config
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Master seed override
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated estimator subset override
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    /// Worker-thread override (0 = library default); results are
    /// independent of this
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SpectrumArgs {
    /// Nested array level sizes M1 M2
    #[arg(long, num_args = 2, value_names = ["M1", "M2"], conflicts_with = "ula")]
    nested: Option<Vec<usize>>,
    /// ULA sensor count (plain MUSIC spectrum instead of the coarray one)
    #[arg(long)]
    ula: Option<usize>,
    /// Element spacing in wavelengths
    #[arg(long, default_value_t = 0.5)]
    d1: f64,
    /// Source DOAs in degrees
    #[arg(long, value_delimiter = ',', default_values_t = [15.0, 17.0])]
    doas: Vec<f64>,
    /// Per-source SNR in dB
    #[arg(long, default_value_t = 10.0)]
    snr: f64,
    /// Snapshot count
    #[arg(long, default_value_t = 150)]
    n: usize,
    /// RNG seed
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Angular grid step in degrees
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    /// Duplicate-lag policy for the coarray vectorization
    #[arg(long, default_value = "select-first")]
    policy: String,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also run the iterative refinement and dump its trace as JSON
    #[arg(long)]
    kai_trace: Option<PathBuf>,
    /// Dump the covariance the spectrum was computed from (CSV,
    /// row-major, re/im interleaved)
    #[arg(long)]
    dump_covariance: Option<PathBuf>,
}

#[derive(Args)]
struct GeometryArgs {
    /// Nested array level sizes M1 M2
    #[arg(long, num_args = 2, value_names = ["M1", "M2"], conflicts_with = "ula")]
    nested: Option<Vec<usize>>,
    /// ULA sensor count
    #[arg(long)]
    ula: Option<usize>,
    /// Element spacing in wavelengths
    #[arg(long, default_value_t = 0.5)]
    d1: f64,
    /// Emit the report as JSON
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ComplexityArgs {
    /// Physical sensor count M
    #[arg(long)]
    m: usize,
    /// Snapshot count N
    #[arg(long)]
    n: usize,
    /// Source count P
    #[arg(long)]
    p: usize,
    /// Angular search step in degrees
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    /// Reliability-factor increment
    #[arg(long, default_value_t = 0.1)]
    mu_increment: f64,
    /// Refinement iterations
    #[arg(long, default_value_t = 3)]
    iterations: usize,
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::SweepSnr(args) => cmd_sweep(args, true),
        Command::SweepSnapshots(args) => cmd_sweep(args, false),
        Command::Spectrum(args) => cmd_spectrum(args),
        Command::Geometry(args) => cmd_geometry(args),
        Command::Complexity(args) => cmd_complexity(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn resolve_out_dir(flag: Option<PathBuf>, config: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| config.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn cmd_sweep(args: SweepArgs, want_snr: bool) -> Result<()> {
    let mut config = ExperimentConfig::load(&args.config)?;
    let is_snr = matches!(config.sweep, SweepSpec::Snr { .. });
    if is_snr != want_snr {
        let (cmd, kind) = if want_snr {
            ("sweep-snr", "snapshots")
        } else {
            ("sweep-snapshots", "snr")
        };
        return Err(DoaError::Config(format!(
            "{cmd} was invoked but sweep.kind in {} is \"{kind}\"",
            args.config.display()
        )));
    }
    if let Some(seed) = args.seed {
        config.run.seed = seed;
    }
    if let Some(names) = args.estimators {
        let mut estimators = Vec::with_capacity(names.len());
        for name in &names {
            estimators.push(name.parse::<Estimator>()?);
        }
        config.run.estimators = estimators;
    }
    if let Some(workers) = args.workers {
        config.run.workers = workers;
    }
    config.validate()?;

    let dir = resolve_out_dir(args.out_dir, &config);
    let result = run_sweep(&config)?;
    let (csv_path, json_path) = result.write_outputs(&dir)?;
    for point in &result.points {
        for s in &point.stats {
            let axis = match config.sweep {
                SweepSpec::Snr { .. } => format!("snr {:>7} dB", point.snr_db),
                SweepSpec::Snapshots { .. } => format!("N {:>6}", point.n_snapshots),
            };
            let prob = s
                .prob_resolution
                .map(|p| format!("{p:.3}"))
                .unwrap_or_else(|| "-".into());
            println!(
                "{axis}  {:<20} rmse {:>9.4}°  pr {prob:>6}  trials {}  failures {}",
                s.estimator.to_string(),
                s.rmse_deg,
                s.trials,
                s.failures
            );
        }
    }
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn parse_policy(name: &str) -> Result<DuplicatePolicy> {
    match name {
        "select-first" => Ok(DuplicatePolicy::SelectFirst),
        "average" => Ok(DuplicatePolicy::Average),
        other => Err(DoaError::Config(format!(
            "unknown duplicate policy {other:?}; expected select-first or average"
        ))),
    }
}

fn build_cli_geometry(
    nested: &Option<Vec<usize>>,
    ula: &Option<usize>,
    d1: f64,
) -> Result<ArrayGeometry> {
    match (nested, ula) {
        (Some(levels), None) => ArrayGeometry::nested(levels[0], levels[1], d1),
        (None, Some(m)) => ArrayGeometry::ula(*m, d1),
        (None, None) => ArrayGeometry::nested(4, 4, d1),
        (Some(_), Some(_)) => unreachable!("clap enforces the conflict"),
    }
}

fn cmd_spectrum(args: SpectrumArgs) -> Result<()> {
    let geom = build_cli_geometry(&args.nested, &args.ula, args.d1)?;
    let policy = parse_policy(&args.policy)?;
    let scenario = SourceScenario::equal_power_snr(&args.doas, args.snr)?;
    let p = scenario.source_count();
    let y = synthesize(&geom, &scenario, args.n, args.seed)?;
    let r1 = sample_covariance(&y);

    let (r, grid) = if args.ula.is_some() {
        let grid = SteeringGrid::new(geom.positions(), geom.d1(), args.step)?;
        (r1, grid)
    } else {
        let z = vectorize_to_coarray(&r1, &geom, policy)?;
        let rt = spatial_smoothing(&z)?;
        let grid = SteeringGrid::virtual_ula(z.m_bar(), geom.d1(), args.step)?;
        (rt, grid)
    };

    if let Some(path) = &args.dump_covariance {
        let mut file = std::fs::File::create(path)?;
        r.write_csv(&mut file)?;
        eprintln!("wrote covariance dump to {}", path.display());
    }

    let spec = pseudospectrum(&r, p, &grid)?;
    match &args.out {
        Some(path) => {
            let mut file = std::fs::File::create(path)?;
            spec.write_csv(&mut file)?;
            eprintln!("wrote spectrum to {}", path.display());
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            spec.write_csv(&mut stdout)?;
        }
    }

    if let Some(path) = &args.kai_trace {
        if args.ula.is_some() {
            return Err(DoaError::Config(
                "--kai-trace needs a coarray geometry, not --ula".into(),
            ));
        }
        let kai = KaiConfig {
            grid_step_deg: args.step,
            duplicate_policy: policy,
            ..KaiConfig::defaults_for(p)
        };
        let (_, trace) = ms_kai_refine(&r, geom.d1(), p, &kai)?;
        std::fs::write(
            path,
            serde_json::to_string_pretty(&trace).expect("trace serializes"),
        )?;
        eprintln!("wrote refinement trace to {}", path.display());
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct GeometryReport {
    kind: String,
    d1: f64,
    sensors: Vec<i64>,
    coarray_contiguous: bool,
    lag_min: i64,
    lag_max: i64,
    distinct_lags: usize,
    virtual_aperture: usize,
}

fn cmd_geometry(args: GeometryArgs) -> Result<()> {
    let geom = build_cli_geometry(&args.nested, &args.ula, args.d1)?;
    let coarray = geom.difference_coarray();
    let report = GeometryReport {
        kind: format!("{:?}", geom.kind()).to_lowercase(),
        d1: geom.d1(),
        sensors: geom.positions().to_vec(),
        coarray_contiguous: coarray.contiguous,
        lag_min: *coarray.lags.first().expect("coarray has lag 0"),
        lag_max: *coarray.lags.last().expect("coarray has lag 0"),
        distinct_lags: coarray.lags.len(),
        virtual_aperture: coarray.virtual_aperture,
    };
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("report serializes")
        );
    } else {
        println!("kind: {} (d1 = {} wavelengths)", report.kind, report.d1);
        let positions: Vec<String> = report.sensors.iter().map(|p| p.to_string()).collect();
        println!(
            "sensors ({}): {}",
            report.sensors.len(),
            positions.join(" ")
        );
        println!(
            "coarray: {}, lags {}..{} ({} distinct)",
            if report.coarray_contiguous {
                "contiguous"
            } else {
                "holed"
            },
            report.lag_min,
            report.lag_max,
            report.distinct_lags
        );
        println!("virtual aperture: {}", report.virtual_aperture);
    }
    Ok(())
}

fn cmd_complexity(args: ComplexityArgs) -> Result<()> {
    let (mults, adds) = complexity_estimate(
        args.m,
        args.n,
        args.p,
        args.step,
        args.mu_increment,
        args.iterations,
    )?;
    let m_bar = (args.m * args.m) as f64 / 4.0 + args.m as f64 / 2.0;
    let tau = 1.0 / args.mu_increment + 1.0;
    println!(
        "M = {}, virtual aperture = {m_bar}, N = {}, P = {}, step = {}°, tau = {tau}, iterations = {}",
        args.m, args.n, args.p, args.step, args.iterations
    );
    println!("multiplications ≈ {mults:.4e} ({mults:.0})");
    println!("additions       ≈ {adds:.4e} ({adds:.0})");
    Ok(())
}
