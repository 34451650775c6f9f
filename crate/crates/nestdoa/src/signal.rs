//! Snapshot synthesis: `y(i) = F s(i) + n(i)`.
//!
//! Sources are uncorrelated circular complex Gaussians with diagonal
//! covariance `diag{σ_1², .., σ_P²}`; noise is white circular complex
//! Gaussian with power `σ_n²`, independent of the sources. A circular
//! complex sample of power σ² is drawn as `(x + jy)·σ/√2` with `x`, `y`
//! independent standard normals.
//!
//! Generation is a pure function of `(geometry, scenario, N, seed)`:
//! the RNG is a seeded ChaCha stream and the draw order is fixed (all
//! source samples first, then all noise samples). Drawing sources first
//! means two arrays synthesized from the same seed see the same source
//! realizations, which keeps cross-array comparisons paired.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::covariance::HermitianCovariance;
use crate::error::{DoaError, Result};
use crate::geometry::ArrayGeometry;
use crate::linalg::{CMat, C64};

/// Source directions and powers plus the noise floor, all linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceScenario {
    /// Source DOAs in degrees, distinct, each in (-90, 90).
    pub doas_deg: Vec<f64>,
    /// Per-source variances σ_p² (linear scale).
    pub powers: Vec<f64>,
    /// Noise variance σ_n² (linear scale).
    pub noise_power: f64,
}

impl SourceScenario {
    pub fn new(doas_deg: Vec<f64>, powers: Vec<f64>, noise_power: f64) -> Result<Self> {
        let s = Self {
            doas_deg,
            powers,
            noise_power,
        };
        s.validate()?;
        Ok(s)
    }

    /// Equal-power sources at a given SNR (per source, dB) over unit noise.
    pub fn equal_power_snr(doas_deg: &[f64], snr_db: f64) -> Result<Self> {
        let p = 10f64.powf(snr_db / 10.0);
        Self::new(doas_deg.to_vec(), vec![p; doas_deg.len()], 1.0)
    }

    /// Per-source SNR in dB when all sources share one power.
    pub fn snr_db(&self) -> Option<f64> {
        let first = *self.powers.first()?;
        if self.powers.iter().all(|&p| p == first) {
            Some(10.0 * (first / self.noise_power).log10())
        } else {
            None
        }
    }

    pub fn source_count(&self) -> usize {
        self.doas_deg.len()
    }

    fn validate(&self) -> Result<()> {
        if self.doas_deg.is_empty() {
            return Err(DoaError::InvalidArgument(
                "scenario needs at least one source".into(),
            ));
        }
        if self.doas_deg.len() != self.powers.len() {
            return Err(DoaError::InvalidArgument(format!(
                "{} DOAs but {} powers",
                self.doas_deg.len(),
                self.powers.len()
            )));
        }
        for &theta in &self.doas_deg {
            if !(theta > -90.0 && theta < 90.0) {
                return Err(DoaError::InvalidArgument(format!(
                    "source DOA {theta} outside (-90, 90) degrees"
                )));
            }
        }
        for (i, &a) in self.doas_deg.iter().enumerate() {
            if self.doas_deg[i + 1..].contains(&a) {
                return Err(DoaError::InvalidArgument(format!(
                    "duplicate source DOA {a}"
                )));
            }
        }
        if self.powers.iter().any(|&p| p < 0.0 || p.is_nan()) {
            return Err(DoaError::InvalidArgument(
                "source powers must be non-negative".into(),
            ));
        }
        if self.noise_power < 0.0 || self.noise_power.is_nan() {
            return Err(DoaError::InvalidArgument(
                "noise power must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// M×N record of array output snapshots, column `i` = `y(i)`.
#[derive(Debug, Clone)]
pub struct SnapshotMatrix {
    data: CMat,
    geometry: ArrayGeometry,
}

impl SnapshotMatrix {
    /// Wrap externally recorded snapshots; rows must match the geometry's
    /// sensor count.
    pub fn new(data: CMat, geometry: ArrayGeometry) -> Result<Self> {
        if data.nrows() != geometry.sensor_count() {
            return Err(DoaError::InvalidArgument(format!(
                "snapshot matrix has {} rows but the geometry has {} sensors",
                data.nrows(),
                geometry.sensor_count()
            )));
        }
        if data.ncols() < 1 {
            return Err(DoaError::InvalidArgument(
                "snapshot matrix needs at least one snapshot".into(),
            ));
        }
        Ok(Self { data, geometry })
    }

    pub fn data(&self) -> &CMat {
        &self.data
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn sensor_count(&self) -> usize {
        self.data.nrows()
    }

    pub fn snapshot_count(&self) -> usize {
        self.data.ncols()
    }
}

/// Deterministic per-trial sub-seed from a master seed, splitmix64-style,
/// so parallel and serial sweeps draw identical streams.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    let mut z = master ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(trial.wrapping_add(1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draw `n` snapshots of `F s(i) + n(i)` for the given geometry and
/// scenario. Identical inputs produce bit-identical output.
pub fn synthesize(
    geom: &ArrayGeometry,
    scenario: &SourceScenario,
    n: usize,
    seed: u64,
) -> Result<SnapshotMatrix> {
    if n < 1 {
        return Err(DoaError::InvalidArgument(
            "snapshot count must be at least 1".into(),
        ));
    }
    scenario.validate()?;
    let m = geom.sensor_count();
    let p = scenario.source_count();

    let mut manifold = CMat::zeros(m, p);
    for (j, &theta) in scenario.doas_deg.iter().enumerate() {
        manifold.set_column(j, &geom.steering_vector(theta)?);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |sigma2: f64| -> C64 {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        C64::new(re, im) * (sigma2 / 2.0).sqrt()
    };

    // Sources for all snapshots first, then noise, so the source stream is
    // independent of the array size.
    let mut sources = CMat::zeros(p, n);
    for i in 0..n {
        for k in 0..p {
            sources[(k, i)] = draw(scenario.powers[k]);
        }
    }
    let mut data = manifold * sources;
    for i in 0..n {
        for k in 0..m {
            data[(k, i)] += draw(scenario.noise_power);
        }
    }

    Ok(SnapshotMatrix {
        data,
        geometry: geom.clone(),
    })
}

/// Exact (infinite-snapshot) covariance `F R_s F^H + σ_n² I`.
pub fn analytic_covariance(
    geom: &ArrayGeometry,
    scenario: &SourceScenario,
) -> Result<HermitianCovariance> {
    scenario.validate()?;
    let m = geom.sensor_count();
    let mut r = CMat::zeros(m, m);
    for (&theta, &power) in scenario.doas_deg.iter().zip(&scenario.powers) {
        let f = geom.steering_vector(theta)?;
        let outer = &f * f.adjoint();
        r += outer * C64::new(power, 0.0);
    }
    for k in 0..m {
        r[(k, k)] += C64::new(scenario.noise_power, 0.0);
    }
    HermitianCovariance::new(r)
}
