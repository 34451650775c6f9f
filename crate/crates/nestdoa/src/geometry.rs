//! Array geometries, difference coarrays, and steering vectors.
//!
//! Sensor positions are kept as non-negative integers in units of the base
//! spacing `d1`, with the reference sensor pinned at 0. A two-level nested
//! array concatenates a dense inner ULA (spacing `d1`) with a sparse outer
//! ULA (spacing `(M1+1)·d1`); its difference coarray is a filled ULA, which
//! is what gives the design more usable degrees of freedom than physical
//! sensors.
//!
//! `d1` is expressed as a fraction of the carrier wavelength, so the phase
//! of sensor `n` toward direction `θ` is `-2π·d1·r_n·sin θ` and the
//! wavelength never appears explicitly.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{DoaError, Result};
use crate::linalg::{CMat, CVec, C64};

/// Kind of physical array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrayKind {
    Ula,
    Nested,
    /// Arbitrary integer positions; coarray contiguity is not guaranteed.
    Custom,
}

/// Serializable constructor parameters for an [`ArrayGeometry`].
///
/// This is the JSON/TOML form used in config files:
/// `{"kind": "nested", "M1": 4, "M2": 4, "d1": 0.5}` or
/// `{"kind": "ula", "M": 20, "d": 0.5}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GeometrySpec {
    Nested {
        #[serde(rename = "M1")]
        m1: usize,
        #[serde(rename = "M2")]
        m2: usize,
        d1: f64,
    },
    Ula {
        #[serde(rename = "M")]
        m: usize,
        d: f64,
    },
}

impl GeometrySpec {
    pub fn build(&self) -> Result<ArrayGeometry> {
        match *self {
            GeometrySpec::Nested { m1, m2, d1 } => ArrayGeometry::nested(m1, m2, d1),
            GeometrySpec::Ula { m, d } => ArrayGeometry::ula(m, d),
        }
    }
}

/// Physical sensor layout: sorted integer positions (units of `d1`) with
/// the reference sensor at 0.
///
/// Immutable after construction; cheap to clone and safe to share across
/// trial workers.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    kind: ArrayKind,
    positions: Vec<i64>,
    d1: f64,
}

impl ArrayGeometry {
    /// Two-level nested array with `m1` inner and `m2` outer sensors.
    ///
    /// Positions are the union of the inner level `{1..m1}` and the outer
    /// level `{n(m1+1) : n = 1..m2}`, re-indexed so the first sensor sits
    /// at 0: `{0, 1, .., m1-1, m1, 2(m1+1)-1, .., m2(m1+1)-1}`.
    pub fn nested(m1: usize, m2: usize, d1: f64) -> Result<Self> {
        if m1 < 1 || m2 < 1 {
            return Err(DoaError::InvalidArgument(format!(
                "nested array levels must each have at least one sensor, got M1={m1}, M2={m2}"
            )));
        }
        check_spacing(d1)?;
        let mut positions: Vec<i64> = (0..m1 as i64).collect();
        for n in 1..=m2 as i64 {
            positions.push(n * (m1 as i64 + 1) - 1);
        }
        positions.sort_unstable();
        positions.dedup();
        Ok(Self {
            kind: ArrayKind::Nested,
            positions,
            d1,
        })
    }

    /// Uniform linear array of `m` sensors at spacing `d` (fraction of the
    /// carrier wavelength).
    pub fn ula(m: usize, d: f64) -> Result<Self> {
        if m < 1 {
            return Err(DoaError::InvalidArgument(
                "ULA needs at least one sensor".into(),
            ));
        }
        check_spacing(d)?;
        Ok(Self {
            kind: ArrayKind::Ula,
            positions: (0..m as i64).collect(),
            d1: d,
        })
    }

    /// Array with explicitly listed sensor positions (units of `d`).
    /// Positions must be distinct non-negative integers including 0.
    pub fn custom(positions: &[i64], d: f64) -> Result<Self> {
        check_spacing(d)?;
        let mut sorted = positions.to_vec();
        sorted.sort_unstable();
        if sorted.is_empty() {
            return Err(DoaError::InvalidArgument(
                "custom array needs at least one sensor".into(),
            ));
        }
        if sorted[0] != 0 {
            return Err(DoaError::InvalidArgument(
                "custom array must include the reference position 0".into(),
            ));
        }
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(DoaError::InvalidArgument(
                "custom array positions must be distinct".into(),
            ));
        }
        Ok(Self {
            kind: ArrayKind::Custom,
            positions: sorted,
            d1: d,
        })
    }

    pub fn kind(&self) -> ArrayKind {
        self.kind
    }

    /// Sensor positions in units of `d1`, strictly increasing, first at 0.
    pub fn positions(&self) -> &[i64] {
        &self.positions
    }

    /// Base inter-element spacing as a fraction of the carrier wavelength.
    pub fn d1(&self) -> f64 {
        self.d1
    }

    /// Number of physical sensors.
    pub fn sensor_count(&self) -> usize {
        self.positions.len()
    }

    /// All pairwise position differences with multiplicities.
    pub fn difference_coarray(&self) -> Coarray {
        let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
        for &a in &self.positions {
            for &b in &self.positions {
                *counts.entry(a - b).or_insert(0) += 1;
            }
        }
        let lags: Vec<i64> = counts.keys().copied().collect();
        let multiplicity: Vec<usize> = counts.values().copied().collect();
        let contiguous = lags.windows(2).all(|w| w[1] - w[0] == 1);
        // Longest zero-centered contiguous run; for a contiguous coarray
        // this is (|lags| + 1) / 2 and for the nested design it equals
        // M^2/4 + M/2.
        let mut aperture = 1usize;
        while counts.contains_key(&(aperture as i64)) && counts.contains_key(&-(aperture as i64)) {
            aperture += 1;
        }
        Coarray {
            lags,
            multiplicity,
            contiguous,
            virtual_aperture: aperture,
        }
    }

    /// Steering vector of this array toward `theta_deg`.
    pub fn steering_vector(&self, theta_deg: f64) -> Result<CVec> {
        steering_vector(&self.positions, self.d1, theta_deg)
    }
}

fn check_spacing(d: f64) -> Result<()> {
    if !(d > 0.0 && d <= 0.5) {
        return Err(DoaError::InvalidArgument(format!(
            "element spacing must lie in (0, 0.5] wavelengths, got {d}"
        )));
    }
    Ok(())
}

/// Difference coarray of a physical array: every lag `r_i - r_j` with its
/// multiplicity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Coarray {
    /// Distinct lags, ascending; symmetric about 0.
    pub lags: Vec<i64>,
    /// Number of sensor pairs producing each lag (same order as `lags`).
    pub multiplicity: Vec<usize>,
    /// True when the lags form an unbroken integer range.
    pub contiguous: bool,
    /// Length of the filled ULA available around lag 0 (number of
    /// non-negative contiguous lags).
    pub virtual_aperture: usize,
}

impl Coarray {
    /// Multiplicity of one lag, 0 when absent.
    pub fn multiplicity_of(&self, lag: i64) -> usize {
        match self.lags.binary_search(&lag) {
            Ok(i) => self.multiplicity[i],
            Err(_) => 0,
        }
    }
}

/// Steering vector for integer sensor `positions` (units of `d1`) toward
/// `theta_deg`: element `n` is `exp(-j·2π·d1·r_n·sin θ)`.
pub fn steering_vector(positions: &[i64], d1: f64, theta_deg: f64) -> Result<CVec> {
    if !(theta_deg > -90.0 && theta_deg < 90.0) {
        return Err(DoaError::InvalidArgument(format!(
            "DOA must lie in (-90, 90) degrees, got {theta_deg}"
        )));
    }
    let s = (theta_deg * PI / 180.0).sin();
    Ok(CVec::from_iterator(
        positions.len(),
        positions.iter().map(|&r| {
            let phase = -2.0 * PI * d1 * (r as f64) * s;
            C64::new(phase.cos(), phase.sin())
        }),
    ))
}

/// Steering vectors for a set of candidate DOAs, stacked as columns.
#[derive(Debug, Clone)]
pub struct SteeringManifold {
    angles_deg: Vec<f64>,
    matrix: CMat,
}

impl SteeringManifold {
    /// Manifold of a filled ULA with `len` elements at positions
    /// `{0, .., len-1}`. This is the virtual array seen by coarray-based
    /// estimators.
    pub fn virtual_ula(len: usize, d1: f64, angles_deg: &[f64]) -> Result<Self> {
        let positions: Vec<i64> = (0..len as i64).collect();
        Self::from_positions(&positions, d1, angles_deg)
    }

    /// Manifold over arbitrary integer positions.
    pub fn from_positions(positions: &[i64], d1: f64, angles_deg: &[f64]) -> Result<Self> {
        if angles_deg.len() > positions.len() {
            return Err(DoaError::InvalidArgument(format!(
                "cannot build a manifold with {} angles on {} elements",
                angles_deg.len(),
                positions.len()
            )));
        }
        for (i, &a) in angles_deg.iter().enumerate() {
            for &b in &angles_deg[i + 1..] {
                if a == b {
                    return Err(DoaError::InvalidArgument(format!(
                        "manifold angles must be distinct, {a} appears twice"
                    )));
                }
            }
        }
        let mut matrix = CMat::zeros(positions.len(), angles_deg.len());
        for (j, &theta) in angles_deg.iter().enumerate() {
            matrix.set_column(j, &steering_vector(positions, d1, theta)?);
        }
        Ok(Self {
            angles_deg: angles_deg.to_vec(),
            matrix,
        })
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    /// The L×P matrix whose column `p` steers toward `angles_deg[p]`.
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    /// Number of array elements (rows).
    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    /// Number of steering directions (columns).
    pub fn source_count(&self) -> usize {
        self.matrix.ncols()
    }
}
