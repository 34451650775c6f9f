//! Subspace DOA estimation: noise-subspace extraction, the MUSIC
//! pseudospectrum `P(θ) = 1 / (a^H(θ) Φ_N Φ_N^H a(θ))`, and grid peak
//! search.
//!
//! Steering vectors for the whole angular grid are precomputed once in a
//! [`SteeringGrid`] and shared across MUSIC runs; a sweep evaluates tens of
//! thousands of spectra over the same grid, so this table dominates the
//! cost profile. The projector product is evaluated through whichever of
//! the signal/noise subspaces is smaller — the two are orthogonal
//! complements, so `a^H Φ_N Φ_N^H a = ‖a‖² - ‖Φ_S^H a‖²`.

use std::io::Write;

use serde::Serialize;

use crate::covariance::HermitianCovariance;
use crate::error::{DoaError, Result};
use crate::linalg::{eigh, CMat, CVec};

/// Denominators below this are treated as exact orthogonality (analytic
/// data) and clamped; the count of clamped points is reported, not fatal.
const DENOM_FLOOR: f64 = 1e-300;

/// Precomputed steering vectors over a uniform angular grid
/// `-90+Δ, .., 90-Δ`.
#[derive(Debug, Clone)]
pub struct SteeringGrid {
    step_deg: f64,
    angles_deg: Vec<f64>,
    /// L × |grid|; column `j` steers toward `angles_deg[j]`.
    vectors: CMat,
    /// Squared norm of each column (equals L for unit-modulus entries;
    /// kept explicit so the complement identity stays exact).
    norms_sq: Vec<f64>,
    positions: Vec<i64>,
    d1: f64,
}

impl SteeringGrid {
    /// Grid over arbitrary integer element positions.
    pub fn new(positions: &[i64], d1: f64, step_deg: f64) -> Result<Self> {
        if !(step_deg > 0.0 && step_deg < 90.0) {
            return Err(DoaError::InvalidArgument(format!(
                "grid step must lie in (0, 90) degrees, got {step_deg}"
            )));
        }
        if positions.is_empty() {
            return Err(DoaError::InvalidArgument(
                "steering grid needs at least one element".into(),
            ));
        }
        // When the step divides 90 evenly, index the grid around 0 so
        // points like 15.00 come out as exact decimals instead of
        // -90 + k·Δ rounding noise.
        let half = 90.0 / step_deg;
        let half_int = half.round();
        let centered = (half - half_int).abs() < 1e-9;
        let mut angles_deg = Vec::new();
        let mut k = 1usize;
        loop {
            let angle = if centered {
                (k as f64 - half_int) * step_deg
            } else {
                -90.0 + k as f64 * step_deg
            };
            if angle >= 90.0 - 1e-9 {
                break;
            }
            angles_deg.push(angle);
            k += 1;
        }
        let l = positions.len();
        let mut vectors = CMat::zeros(l, angles_deg.len());
        let mut norms_sq = Vec::with_capacity(angles_deg.len());
        for (j, &theta) in angles_deg.iter().enumerate() {
            let v = crate::geometry::steering_vector(positions, d1, theta)?;
            norms_sq.push(v.norm_squared());
            vectors.set_column(j, &v);
        }
        Ok(Self {
            step_deg,
            angles_deg,
            vectors,
            norms_sq,
            positions: positions.to_vec(),
            d1,
        })
    }

    /// Grid for a filled (virtual) ULA of `len` elements.
    pub fn virtual_ula(len: usize, d1: f64, step_deg: f64) -> Result<Self> {
        let positions: Vec<i64> = (0..len as i64).collect();
        Self::new(&positions, d1, step_deg)
    }

    pub fn step_deg(&self) -> f64 {
        self.step_deg
    }

    pub fn angles_deg(&self) -> &[f64] {
        &self.angles_deg
    }

    pub fn len(&self) -> usize {
        self.angles_deg.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles_deg.is_empty()
    }

    /// Number of array elements each steering vector spans.
    pub fn element_count(&self) -> usize {
        self.vectors.nrows()
    }

    /// Steering vector toward an arbitrary angle (not restricted to grid
    /// points).
    pub fn steering(&self, theta_deg: f64) -> Result<CVec> {
        crate::geometry::steering_vector(&self.positions, self.d1, theta_deg)
    }

    pub fn d1(&self) -> f64 {
        self.d1
    }
}

/// MUSIC pseudospectrum samples over a [`SteeringGrid`].
#[derive(Debug, Clone, Serialize)]
pub struct Pseudospectrum {
    pub angles_deg: Vec<f64>,
    pub values: Vec<f64>,
    /// Grid points whose denominator hit the orthogonality floor.
    pub clamped: usize,
}

impl Pseudospectrum {
    /// Two-column CSV `angle_deg,value`, one row per grid point.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "angle_deg,value")?;
        for (a, v) in self.angles_deg.iter().zip(&self.values) {
            writeln!(w, "{a},{v}")?;
        }
        Ok(())
    }
}

/// DOA estimates from a peak search, sorted ascending by angle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoaEstimates {
    pub angles_deg: Vec<f64>,
    pub peak_values: Vec<f64>,
    /// True iff every estimate came from a genuine strict local maximum.
    pub complete: bool,
}

/// Orthonormal basis of the noise subspace: eigenvectors of the `L - P`
/// smallest eigenvalues, deterministic ordering.
pub fn noise_subspace(r: &HermitianCovariance, p: usize) -> Result<CMat> {
    let l = r.dim();
    if p >= l {
        return Err(DoaError::InvalidArgument(format!(
            "noise subspace needs P < L, got P={p}, L={l}"
        )));
    }
    let e = eigh(r.matrix())?;
    Ok(e.vectors.columns(0, l - p).clone_owned())
}

#[derive(Clone, Copy)]
enum ProjectionSide {
    Noise,
    SignalComplement,
}

fn pseudospectrum_with_side(
    r: &HermitianCovariance,
    p: usize,
    grid: &SteeringGrid,
    side: ProjectionSide,
) -> Result<Pseudospectrum> {
    let l = r.dim();
    if p >= l {
        return Err(DoaError::InvalidArgument(format!(
            "pseudospectrum needs P < L, got P={p}, L={l}"
        )));
    }
    if grid.element_count() != l {
        return Err(DoaError::InvalidArgument(format!(
            "steering grid spans {} elements but covariance is {l}x{l}",
            grid.element_count()
        )));
    }
    let e = eigh(r.matrix())?;
    let basis = match side {
        ProjectionSide::Noise => e.vectors.columns(0, l - p).clone_owned(),
        ProjectionSide::SignalComplement => e.vectors.columns(l - p, p).clone_owned(),
    };
    // (k × L)(L × |grid|): one GEMM for the whole grid.
    let proj = basis.adjoint() * &grid.vectors;

    let mut values = Vec::with_capacity(grid.len());
    let mut clamped = 0usize;
    for j in 0..grid.len() {
        let energy: f64 = proj.column(j).iter().map(|x| x.norm_sqr()).sum();
        let mut denom = match side {
            ProjectionSide::Noise => energy,
            ProjectionSide::SignalComplement => (grid.norms_sq[j] - energy).max(0.0),
        };
        if denom < DENOM_FLOOR {
            denom = DENOM_FLOOR;
            clamped += 1;
        }
        values.push(1.0 / denom);
    }
    Ok(Pseudospectrum {
        angles_deg: grid.angles_deg.clone(),
        values,
        clamped,
    })
}

/// MUSIC pseudospectrum of a covariance with `p` assumed sources.
pub fn pseudospectrum(
    r: &HermitianCovariance,
    p: usize,
    grid: &SteeringGrid,
) -> Result<Pseudospectrum> {
    let l = r.dim();
    let side = if p >= l || l - p <= p {
        ProjectionSide::Noise
    } else {
        ProjectionSide::SignalComplement
    };
    pseudospectrum_with_side(r, p, grid, side)
}

/// Pick the `p` largest strict local maxima of a spectrum, sorted by
/// angle. When fewer exist, remaining slots are filled with the largest
/// unused grid values and `complete` is false.
pub fn peak_search(spec: &Pseudospectrum, p: usize) -> Result<DoaEstimates> {
    if spec.values.is_empty() {
        return Err(DoaError::InvalidArgument("empty spectrum".into()));
    }
    if p < 1 {
        return Err(DoaError::InvalidArgument(
            "peak search needs at least one source".into(),
        ));
    }
    let v = &spec.values;
    let mut maxima: Vec<usize> = (1..v.len().saturating_sub(1))
        .filter(|&i| v[i] > v[i - 1] && v[i] > v[i + 1])
        .collect();
    maxima.sort_by(|&a, &b| {
        v[b].partial_cmp(&v[a])
            .expect("spectrum values are finite")
            .then(a.cmp(&b))
    });

    let mut chosen: Vec<usize> = maxima.iter().copied().take(p).collect();
    let complete = chosen.len() == p;
    if !complete {
        let mut rest: Vec<usize> = (0..v.len()).filter(|i| !chosen.contains(i)).collect();
        rest.sort_by(|&a, &b| {
            v[b].partial_cmp(&v[a])
                .expect("spectrum values are finite")
                .then(a.cmp(&b))
        });
        chosen.extend(rest.into_iter().take(p - chosen.len()));
    }
    chosen.sort_unstable();
    Ok(DoaEstimates {
        angles_deg: chosen.iter().map(|&i| spec.angles_deg[i]).collect(),
        peak_values: chosen.iter().map(|&i| v[i]).collect(),
        complete,
    })
}

/// Full MUSIC pipeline: noise subspace, pseudospectrum, peak search.
pub fn music_estimate(
    r: &HermitianCovariance,
    p: usize,
    grid: &SteeringGrid,
) -> Result<DoaEstimates> {
    let spec = pseudospectrum(r, p, grid)?;
    peak_search(&spec, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{
        sample_covariance, spatial_smoothing, vectorize_to_coarray, DuplicatePolicy,
    };
    use crate::geometry::ArrayGeometry;
    use crate::linalg::{fro_norm, C64};
    use crate::signal::{analytic_covariance, synthesize, SourceScenario};

    fn analytic_smoothed(doas: &[f64], snr_db: f64) -> (HermitianCovariance, usize, ArrayGeometry) {
        let geom = ArrayGeometry::nested(4, 4, 0.5).unwrap();
        let sc = SourceScenario::equal_power_snr(doas, snr_db).unwrap();
        let r = analytic_covariance(&geom, &sc).unwrap();
        let z = vectorize_to_coarray(&r, &geom, DuplicatePolicy::SelectFirst).unwrap();
        let rt = spatial_smoothing(&z).unwrap();
        let m_bar = z.m_bar();
        (rt, m_bar, geom)
    }

    #[test]
    fn grid_spans_open_interval() {
        let grid = SteeringGrid::virtual_ula(8, 0.5, 0.05).unwrap();
        assert_eq!(grid.len(), 3599);
        assert!((grid.angles_deg()[0] + 89.95).abs() < 1e-9);
        assert!((grid.angles_deg()[3598] - 89.95).abs() < 1e-9);
        // Uniform step.
        for w in grid.angles_deg().windows(2) {
            assert!((w[1] - w[0] - 0.05).abs() < 1e-9);
        }
    }

    #[test]
    fn noise_subspace_shape_and_projector_trace() {
        let r = HermitianCovariance::new(CMat::identity(6, 6)).unwrap();
        let basis = noise_subspace(&r, 2).unwrap();
        assert_eq!((basis.nrows(), basis.ncols()), (6, 4));
        let proj = &basis * basis.adjoint();
        let trace: f64 = (0..6).map(|i| proj[(i, i)].re).sum();
        assert!((trace - 4.0).abs() < 1e-12);
        // Idempotent projector.
        assert!(fro_norm(&(&proj * &proj - &proj)) < 1e-10);
        assert!(noise_subspace(&r, 6).is_err());
    }

    #[test]
    fn noise_subspace_annihilates_true_steering_vectors() {
        let (rt, m_bar, geom) = analytic_smoothed(&[15.0, 17.0], 3.33);
        let basis = noise_subspace(&rt, 2).unwrap();
        assert_eq!((basis.nrows(), basis.ncols()), (20, 18));
        for &theta in &[15.0, 17.0] {
            let positions: Vec<i64> = (0..m_bar as i64).collect();
            let a = crate::geometry::steering_vector(&positions, geom.d1(), theta).unwrap();
            let residual = (basis.adjoint() * &a).norm();
            assert!(residual < 1e-8, "‖Φ_N^H a({theta})‖ = {residual}");
        }
    }

    #[test]
    fn signal_and_noise_subspaces_are_orthogonal() {
        let (rt, _, _) = analytic_smoothed(&[15.0, 17.0], 3.33);
        let e = eigh(rt.matrix()).unwrap();
        let noise = e.vectors.columns(0, 18).clone_owned();
        let signal = e.vectors.columns(18, 2).clone_owned();
        assert!(fro_norm(&(signal.adjoint() * &noise)) < 1e-10);
    }

    #[test]
    fn both_projection_sides_agree_on_finite_sample_data() {
        let geom = ArrayGeometry::nested(4, 4, 0.5).unwrap();
        let sc = SourceScenario::equal_power_snr(&[15.0, 17.0], 3.33).unwrap();
        let y = synthesize(&geom, &sc, 150, 21).unwrap();
        let r = sample_covariance(&y);
        let z = vectorize_to_coarray(&r, &geom, DuplicatePolicy::SelectFirst).unwrap();
        let rt = spatial_smoothing(&z).unwrap();
        let grid = SteeringGrid::virtual_ula(20, 0.5, 0.5).unwrap();
        let a = pseudospectrum_with_side(&rt, 2, &grid, ProjectionSide::Noise).unwrap();
        let b = pseudospectrum_with_side(&rt, 2, &grid, ProjectionSide::SignalComplement).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() / x < 1e-8, "{x} vs {y}");
        }
    }

    #[test]
    fn pseudospectrum_flat_for_identity_covariance() {
        // For R = I the noise projector is isotropic on the retained
        // subspace and every unit-modulus steering vector sees the same
        // denominator L - P.
        let l = 10usize;
        let p = 3usize;
        let r = HermitianCovariance::new(CMat::identity(l, l)).unwrap();
        let grid = SteeringGrid::virtual_ula(l, 0.5, 1.0).unwrap();
        let spec = pseudospectrum(&r, p, &grid).unwrap();
        let expect = 1.0 / (l - p) as f64;
        for v in &spec.values {
            assert!((v - expect).abs() < 1e-12, "{v} vs {expect}");
        }
    }

    #[test]
    fn analytic_two_source_peaks_land_on_truth() {
        let (rt, m_bar, geom) = analytic_smoothed(&[15.0, 17.0], 3.33);
        let grid = SteeringGrid::virtual_ula(m_bar, geom.d1(), 0.05).unwrap();
        let est = music_estimate(&rt, 2, &grid).unwrap();
        assert!(est.complete);
        assert!((est.angles_deg[0] - 15.0).abs() <= 0.05 + 1e-9);
        assert!((est.angles_deg[1] - 17.0).abs() <= 0.05 + 1e-9);
    }

    #[test]
    fn single_broadside_source_peaks_at_zero() {
        let (rt, m_bar, geom) = analytic_smoothed(&[0.0], 20.0);
        let grid = SteeringGrid::virtual_ula(m_bar, geom.d1(), 0.05).unwrap();
        let est = music_estimate(&rt, 1, &grid).unwrap();
        assert!((est.angles_deg[0]).abs() <= 0.05 + 1e-9);
    }

    #[test]
    fn peak_search_two_bumps() {
        // Synthetic spectrum: bumps at 15° and 17° on a 0.5° grid.
        let grid: Vec<f64> = (1..360).map(|k| -90.0 + k as f64 * 0.5).collect();
        let values: Vec<f64> = grid
            .iter()
            .map(|&a| {
                let bump = |c: f64| 1.0 / (1e-3 + (a - c) * (a - c));
                bump(15.0) + bump(17.0)
            })
            .collect();
        let spec = Pseudospectrum {
            angles_deg: grid,
            values,
            clamped: 0,
        };
        let est = peak_search(&spec, 2).unwrap();
        assert!(est.complete);
        assert_eq!(est.angles_deg, vec![15.0, 17.0]);
    }

    #[test]
    fn peak_search_monotone_spectrum_falls_back_to_endpoint() {
        let angles: Vec<f64> = (1..180).map(|k| -90.0 + k as f64).collect();
        let values: Vec<f64> = (0..angles.len()).map(|i| i as f64 + 1.0).collect();
        let spec = Pseudospectrum {
            angles_deg: angles.clone(),
            values,
            clamped: 0,
        };
        let est = peak_search(&spec, 1).unwrap();
        assert!(!est.complete);
        assert_eq!(est.angles_deg[0], *angles.last().unwrap());
    }

    #[test]
    fn peak_search_rejects_empty_input() {
        let spec = Pseudospectrum {
            angles_deg: vec![],
            values: vec![],
            clamped: 0,
        };
        assert!(peak_search(&spec, 1).is_err());
    }

    #[test]
    fn peak_locations_are_scale_invariant() {
        let geom = ArrayGeometry::nested(4, 4, 0.5).unwrap();
        let sc = SourceScenario::equal_power_snr(&[15.0, 17.0], 5.0).unwrap();
        let y = synthesize(&geom, &sc, 150, 77).unwrap();
        let r = sample_covariance(&y);
        let z = vectorize_to_coarray(&r, &geom, DuplicatePolicy::SelectFirst).unwrap();
        let rt = spatial_smoothing(&z).unwrap();
        let grid = SteeringGrid::virtual_ula(20, 0.5, 0.05).unwrap();
        let est1 = music_estimate(&rt, 2, &grid).unwrap();
        let scaled = HermitianCovariance::new(rt.matrix() * C64::new(7.5, 0.0)).unwrap();
        let est2 = music_estimate(&scaled, 2, &grid).unwrap();
        assert_eq!(est1.angles_deg, est2.angles_deg);
    }

    #[test]
    fn resolves_more_sources_than_physical_sensors() {
        // 12 well-separated sources seen by 8 physical sensors.
        let doas: Vec<f64> = (0..12).map(|k| -66.0 + 12.0 * k as f64).collect();
        let (rt, m_bar, geom) = analytic_smoothed(&doas, 10.0);
        let grid = SteeringGrid::virtual_ula(m_bar, geom.d1(), 0.05).unwrap();
        let est = music_estimate(&rt, 12, &grid).unwrap();
        assert!(est.complete);
        for (e, t) in est.angles_deg.iter().zip(&doas) {
            assert!((e - t).abs() <= 0.05 + 1e-9, "estimate {e} vs truth {t}");
        }
    }

    #[test]
    fn spectrum_csv_has_header_and_rows() {
        let spec = Pseudospectrum {
            angles_deg: vec![-1.0, 0.0, 1.0],
            values: vec![0.5, 2.0, 0.5],
            clamped: 0,
        };
        let mut buf = Vec::new();
        spec.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("angle_deg,value\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
