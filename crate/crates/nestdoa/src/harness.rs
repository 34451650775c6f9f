//! Monte-Carlo experiment harness: seeded sweeps over SNR or snapshot
//! count, per-trial paired estimator comparisons, and RMSE /
//! probability-of-resolution aggregation with CSV/JSON output.
//!
//! Determinism contract: a sweep is a pure function of its config. Every
//! trial draws from a sub-seed derived from `(master seed, trial index)`,
//! trials are collected in index order regardless of how many workers run
//! them, and all estimators inside one trial consume snapshots generated
//! from the same sub-seed (with shared source realizations), so
//! comparisons are paired and reruns are byte-identical.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{sample_covariance, spatial_smoothing, vectorize_to_coarray};
use crate::error::{DoaError, Result};
use crate::geometry::{ArrayGeometry, GeometrySpec};
use crate::kai::{ms_kai_nested_music, KaiConfig};
use crate::signal::{synthesize, trial_seed, SourceScenario};
use crate::subspace::{music_estimate, SteeringGrid};

/// Estimators the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// Classic MUSIC on a physical uniform linear array.
    MusicUla,
    /// MUSIC on the spatially smoothed coarray covariance.
    NestedMusic,
    /// Iteratively refined coarray MUSIC.
    MsKaiNestedMusic,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [
        Estimator::MusicUla,
        Estimator::NestedMusic,
        Estimator::MsKaiNestedMusic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Estimator::MusicUla => "music-ula",
            Estimator::NestedMusic => "nested-music",
            Estimator::MsKaiNestedMusic => "ms-kai-nested-music",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Estimator {
    type Err = DoaError;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .iter()
            .copied()
            .find(|e| e.name() == s)
            .ok_or_else(|| {
                DoaError::Config(format!(
                    "unknown estimator {s:?}; expected one of music-ula, nested-music, ms-kai-nested-music"
                ))
            })
    }
}

/// Source placement shared by every sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Source DOAs in degrees.
    pub doas_deg: Vec<f64>,
}

/// What varies across sweep points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SweepSpec {
    /// Per-source SNR sweep at a fixed snapshot count.
    Snr {
        snr_db: Vec<f64>,
        n_snapshots: usize,
    },
    /// Snapshot-count sweep at a fixed SNR.
    Snapshots { snr_db: f64, n_list: Vec<usize> },
}

impl SweepSpec {
    /// Expanded (snr_db, n_snapshots) sweep points in declared order.
    pub fn points(&self) -> Vec<(f64, usize)> {
        match self {
            SweepSpec::Snr {
                snr_db,
                n_snapshots,
            } => snr_db.iter().map(|&s| (s, *n_snapshots)).collect(),
            SweepSpec::Snapshots { snr_db, n_list } => {
                n_list.iter().map(|&n| (*snr_db, n)).collect()
            }
        }
    }

    /// Name of the CSV column holding the sweep axis.
    pub fn axis_name(&self) -> &'static str {
        match self {
            SweepSpec::Snr { .. } => "snr_db",
            SweepSpec::Snapshots { .. } => "n_snapshots",
        }
    }
}

/// Trial count, seeding, estimator selection, and worker count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub trials: usize,
    pub seed: u64,
    pub estimators: Vec<Estimator>,
    /// Worker threads; 0 or absent picks the rayon default. Results do
    /// not depend on this.
    #[serde(default)]
    pub workers: usize,
}

/// Physical ULA used by the `music-ula` baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BaselineSpec {
    /// Sensor count; defaults to the nested geometry's virtual aperture
    /// so the baseline sees as many physical sensors as the coarray
    /// estimators see virtual ones.
    pub ula_sensors: Option<usize>,
}

/// Output file names; the directory is resolved by the caller
/// (flag > `NESTDOA_OUTPUT_DIR` > config > `results`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSpec {
    pub dir: Option<PathBuf>,
    pub csv: String,
    pub json: String,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: None,
            csv: "sweep.csv".into(),
            json: "sweep.json".into(),
        }
    }
}

/// Complete description of one Monte-Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub geometry: GeometrySpec,
    pub scenario: ScenarioConfig,
    pub sweep: SweepSpec,
    pub run: RunSpec,
    #[serde(default)]
    pub kai: KaiConfig,
    #[serde(default)]
    pub baseline: BaselineSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| DoaError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Source count the estimators assume.
    pub fn source_count(&self) -> usize {
        self.scenario.doas_deg.len()
    }

    fn needs_coarray(&self) -> bool {
        self.run
            .estimators
            .iter()
            .any(|e| matches!(e, Estimator::NestedMusic | Estimator::MsKaiNestedMusic))
    }

    /// ULA sensor count for the baseline estimator.
    pub fn baseline_sensors(&self) -> Result<usize> {
        match self.baseline.ula_sensors {
            Some(m) => Ok(m),
            None => Ok(self.geometry.build()?.difference_coarray().virtual_aperture),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let geom = self.geometry.build()?;
        let p = self.scenario.doas_deg.len();
        // Reuse the scenario checks for angle validity/distinctness.
        SourceScenario::equal_power_snr(&self.scenario.doas_deg, 0.0)
            .map_err(|e| DoaError::Config(format!("scenario.doas_deg: {e}")))?;
        match &self.sweep {
            SweepSpec::Snr {
                snr_db,
                n_snapshots,
            } => {
                if snr_db.is_empty() {
                    return Err(DoaError::Config("sweep.snr_db must not be empty".into()));
                }
                if *n_snapshots < 1 {
                    return Err(DoaError::Config(
                        "sweep.n_snapshots must be at least 1".into(),
                    ));
                }
            }
            SweepSpec::Snapshots { n_list, .. } => {
                if n_list.is_empty() {
                    return Err(DoaError::Config("sweep.n_list must not be empty".into()));
                }
                if n_list.iter().any(|&n| n < 1) {
                    return Err(DoaError::Config(
                        "sweep.n_list entries must be at least 1".into(),
                    ));
                }
            }
        }
        if self.run.trials < 1 {
            return Err(DoaError::Config("run.trials must be at least 1".into()));
        }
        if self.run.estimators.is_empty() {
            return Err(DoaError::Config(
                "run.estimators must name at least one estimator".into(),
            ));
        }
        self.kai
            .validate()
            .map_err(|e| DoaError::Config(format!("kai: {e}")))?;
        if self.needs_coarray() {
            let coarray = geom.difference_coarray();
            if !coarray.contiguous {
                return Err(DoaError::Config(
                    "geometry: coarray estimators need a filled difference coarray".into(),
                ));
            }
            if p >= coarray.virtual_aperture {
                return Err(DoaError::Config(format!(
                    "scenario.doas_deg: {p} sources exceed the virtual aperture {}",
                    coarray.virtual_aperture
                )));
            }
        }
        if self.run.estimators.contains(&Estimator::MusicUla) {
            let m = self.baseline_sensors()?;
            if p >= m {
                return Err(DoaError::Config(format!(
                    "baseline.ula_sensors: {p} sources need more than {m} sensors"
                )));
            }
        }
        Ok(())
    }
}

/// Root-mean-square DOA error in degrees over a set of trials:
/// `sqrt( (1/(L_r P)) Σ_l Σ_p (θ_p - θ̂_p(l))² )`, pairing estimates to
/// truth by ascending sort.
pub fn rmse(per_trial_estimates: &[Vec<f64>], truth: &[f64]) -> Result<f64> {
    if per_trial_estimates.is_empty() {
        return Err(DoaError::InvalidArgument(
            "RMSE needs at least one trial".into(),
        ));
    }
    let p = truth.len();
    let mut sorted_truth = truth.to_vec();
    sorted_truth.sort_by(|a, b| a.partial_cmp(b).expect("finite angles"));
    let mut acc = 0.0;
    for (l, est) in per_trial_estimates.iter().enumerate() {
        if est.len() != p {
            return Err(DoaError::InvalidArgument(format!(
                "trial {l} supplied {} estimates for {p} sources",
                est.len()
            )));
        }
        let mut sorted = est.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite angles"));
        for (e, t) in sorted.iter().zip(&sorted_truth) {
            acc += (t - e) * (t - e);
        }
    }
    Ok((acc / (per_trial_estimates.len() * p) as f64).sqrt())
}

/// Two-source resolution criterion: both estimates fall within half the
/// true angular separation of their respective sources (sorted pairing).
pub fn is_resolved(estimates: &[f64], truth: &[f64]) -> Result<bool> {
    if estimates.len() != 2 || truth.len() != 2 {
        return Err(DoaError::InvalidArgument(
            "the resolution criterion is defined for exactly two sources".into(),
        ));
    }
    let mut e = [estimates[0], estimates[1]];
    let mut t = [truth[0], truth[1]];
    e.sort_by(|a, b| a.partial_cmp(b).expect("finite angles"));
    t.sort_by(|a, b| a.partial_cmp(b).expect("finite angles"));
    let half_sep = (t[1] - t[0]).abs() / 2.0;
    Ok((e[0] - t[0]).abs() < half_sep && (e[1] - t[1]).abs() < half_sep)
}

/// Aggregated metrics for one estimator at one sweep point.
#[derive(Debug, Clone, Serialize)]
pub struct EstimatorStats {
    pub estimator: Estimator,
    pub rmse_deg: f64,
    /// Only defined for two-source scenarios.
    pub prob_resolution: Option<f64>,
    /// Trials that produced estimates.
    pub trials: usize,
    /// Trials excluded because the estimator failed.
    pub failures: usize,
    pub mean_runtime_ms: f64,
}

/// Metrics for every estimator at one sweep point.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub snr_db: f64,
    pub n_snapshots: usize,
    pub stats: Vec<EstimatorStats>,
}

impl SweepPoint {
    pub fn stats_for(&self, estimator: Estimator) -> Option<&EstimatorStats> {
        self.stats.iter().find(|s| s.estimator == estimator)
    }
}

/// Sweep output: config echo plus per-point, per-estimator metrics.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub config: ExperimentConfig,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    /// Fixed-column CSV: `<axis>,estimator,rmse_deg,prob_resolution,trials,failures`.
    ///
    /// Runtime is deliberately not a CSV column; reruns of the same config
    /// must be byte-identical and runtimes are not.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(
            w,
            "{},estimator,rmse_deg,prob_resolution,trials,failures",
            self.config.sweep.axis_name()
        )?;
        for point in &self.points {
            for s in &point.stats {
                let axis = match self.config.sweep {
                    SweepSpec::Snr { .. } => format!("{}", point.snr_db),
                    SweepSpec::Snapshots { .. } => format!("{}", point.n_snapshots),
                };
                let prob = match s.prob_resolution {
                    Some(p) => format!("{p:.4}"),
                    None => String::new(),
                };
                writeln!(
                    w,
                    "{axis},{},{:.6},{prob},{},{}",
                    s.estimator, s.rmse_deg, s.trials, s.failures
                )?;
            }
        }
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep result serializes")
    }

    /// Write `csv` and `json` files into `dir` using the configured file
    /// names; returns the paths.
    pub fn write_outputs(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join(&self.config.output.csv);
        let json_path = dir.join(&self.config.output.json);
        std::fs::write(&csv_path, self.csv_string())?;
        std::fs::write(&json_path, self.to_json_string())?;
        Ok((csv_path, json_path))
    }
}

/// One estimator's outcome in one trial.
#[derive(Debug, Clone)]
struct EstimatorRun {
    angles: Option<Vec<f64>>,
    runtime_ms: f64,
}

struct TrialContext<'a> {
    config: &'a ExperimentConfig,
    nested_geom: &'a ArrayGeometry,
    virtual_grid: Option<&'a SteeringGrid>,
    ula_geom: Option<&'a ArrayGeometry>,
    ula_grid: Option<&'a SteeringGrid>,
    scenario: &'a SourceScenario,
    n_snapshots: usize,
}

fn run_trial(ctx: &TrialContext<'_>, trial: usize) -> Result<Vec<EstimatorRun>> {
    let seed = trial_seed(ctx.config.run.seed, trial as u64);
    let p = ctx.config.source_count();
    let needs_nested = ctx.config.needs_coarray();
    let y_nested = if needs_nested {
        Some(synthesize(
            ctx.nested_geom,
            ctx.scenario,
            ctx.n_snapshots,
            seed,
        )?)
    } else {
        None
    };
    let y_ula = match ctx.ula_geom {
        Some(geom) => Some(synthesize(geom, ctx.scenario, ctx.n_snapshots, seed)?),
        None => None,
    };

    let mut runs = Vec::with_capacity(ctx.config.run.estimators.len());
    for est in &ctx.config.run.estimators {
        let start = Instant::now();
        let angles = match est {
            Estimator::MusicUla => {
                let y = y_ula.as_ref().expect("baseline snapshots prepared");
                let grid = ctx.ula_grid.expect("baseline grid prepared");
                let r = sample_covariance(y);
                music_estimate(&r, p, grid).map(|e| e.angles_deg)
            }
            Estimator::NestedMusic => {
                let y = y_nested.as_ref().expect("nested snapshots prepared");
                let grid = ctx.virtual_grid.expect("virtual grid prepared");
                let r1 = sample_covariance(y);
                vectorize_to_coarray(&r1, ctx.nested_geom, ctx.config.kai.duplicate_policy)
                    .and_then(|z| spatial_smoothing(&z))
                    .and_then(|rt| music_estimate(&rt, p, grid))
                    .map(|e| e.angles_deg)
            }
            Estimator::MsKaiNestedMusic => {
                let y = y_nested.as_ref().expect("nested snapshots prepared");
                ms_kai_nested_music(y, p, &ctx.config.kai).map(|(e, _)| e.angles_deg)
            }
        };
        runs.push(EstimatorRun {
            angles: angles.ok(),
            runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok(runs)
}

fn aggregate_point(
    config: &ExperimentConfig,
    truth: &[f64],
    snr_db: f64,
    n_snapshots: usize,
    outcomes: &[Vec<EstimatorRun>],
) -> SweepPoint {
    let p = truth.len();
    let stats = config
        .run
        .estimators
        .iter()
        .enumerate()
        .map(|(j, &estimator)| {
            let runs: Vec<&EstimatorRun> = outcomes.iter().map(|t| &t[j]).collect();
            let successes: Vec<&Vec<f64>> = runs.iter().filter_map(|r| r.angles.as_ref()).collect();
            let failures = runs.len() - successes.len();
            let rmse_deg = if successes.is_empty() {
                f64::NAN
            } else {
                let owned: Vec<Vec<f64>> = successes.iter().map(|v| (*v).clone()).collect();
                rmse(&owned, truth).expect("successful trials carry P estimates")
            };
            let prob_resolution = if p == 2 && !successes.is_empty() {
                let resolved = successes
                    .iter()
                    .filter(|e| is_resolved(e, truth).expect("two-source trials"))
                    .count();
                Some(resolved as f64 / successes.len() as f64)
            } else {
                None
            };
            let mean_runtime_ms =
                runs.iter().map(|r| r.runtime_ms).sum::<f64>() / runs.len().max(1) as f64;
            EstimatorStats {
                estimator,
                rmse_deg,
                prob_resolution,
                trials: successes.len(),
                failures,
                mean_runtime_ms,
            }
        })
        .collect();
    SweepPoint {
        snr_db,
        n_snapshots,
        stats,
    }
}

fn run_sweep_inner(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let nested_geom = config.geometry.build()?;

    let virtual_grid = if config.needs_coarray() {
        let m_bar = nested_geom.difference_coarray().virtual_aperture;
        Some(SteeringGrid::virtual_ula(
            m_bar,
            nested_geom.d1(),
            config.kai.grid_step_deg,
        )?)
    } else {
        None
    };
    let (ula_geom, ula_grid) = if config.run.estimators.contains(&Estimator::MusicUla) {
        let m = config.baseline_sensors()?;
        let geom = ArrayGeometry::ula(m, nested_geom.d1())?;
        let grid = SteeringGrid::virtual_ula(m, nested_geom.d1(), config.kai.grid_step_deg)?;
        (Some(geom), Some(grid))
    } else {
        (None, None)
    };

    let mut points = Vec::new();
    for (snr_db, n_snapshots) in config.sweep.points() {
        let scenario = SourceScenario::equal_power_snr(&config.scenario.doas_deg, snr_db)?;
        let ctx = TrialContext {
            config,
            nested_geom: &nested_geom,
            virtual_grid: virtual_grid.as_ref(),
            ula_geom: ula_geom.as_ref(),
            ula_grid: ula_grid.as_ref(),
            scenario: &scenario,
            n_snapshots,
        };
        // Collected in trial order, so aggregation does not depend on the
        // worker count.
        let outcomes: Vec<Vec<EstimatorRun>> = (0..config.run.trials)
            .into_par_iter()
            .map(|t| run_trial(&ctx, t))
            .collect::<Result<Vec<_>>>()?;
        points.push(aggregate_point(
            config,
            &config.scenario.doas_deg,
            snr_db,
            n_snapshots,
            &outcomes,
        ));
    }
    Ok(SweepResult {
        config: config.clone(),
        points,
    })
}

/// Run a full sweep. `config.run.workers` > 0 pins the worker-pool size;
/// the results are identical either way.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    if config.run.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.run.workers)
            .build()
            .map_err(|e| DoaError::Numerical(format!("worker pool: {e}")))?;
        pool.install(|| run_sweep_inner(config))
    } else {
        run_sweep_inner(config)
    }
}
