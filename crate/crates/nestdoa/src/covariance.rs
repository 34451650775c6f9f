//! Covariance machinery: sample estimates, coarray vectorization, and
//! spatial smoothing.
//!
//! For an array with a filled difference coarray, the entries of the
//! sample covariance indexed by lag behave like snapshots of a longer
//! virtual ULA whose equivalent sources are the actual source powers —
//! i.e. fully coherent. Averaging the outer products of the coarray
//! vector's sliding windows (spatial smoothing) restores a full-rank
//! covariance `R̃ = (1/M̄) Σ zᵢ zᵢ^H`, positive semidefinite by
//! construction, on which subspace estimators can run.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{DoaError, Result};
use crate::geometry::ArrayGeometry;
use crate::linalg::{eigh, CMat, C64};
use crate::signal::SnapshotMatrix;

/// Square complex matrix kept Hermitian by construction: `(R + R^H)/2`
/// is applied on every build to remove floating-point drift before
/// eigendecomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianCovariance {
    matrix: CMat,
}

impl HermitianCovariance {
    pub fn new(matrix: CMat) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(DoaError::InvalidArgument(format!(
                "covariance must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let sym = (&matrix + matrix.adjoint()).unscale(2.0);
        Ok(Self { matrix: sym })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.matrix[(i, i)].re).sum()
    }

    /// Debug dump: one CSV line per matrix row, entries as interleaved
    /// `re,im` pairs (row-major).
    pub fn write_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for i in 0..self.dim() {
            for j in 0..self.dim() {
                if j > 0 {
                    write!(w, ",")?;
                }
                let x = self.matrix[(i, j)];
                write!(w, "{},{}", x.re, x.im)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// How to reconcile finite-sample covariance entries that share a lag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DuplicatePolicy {
    /// Keep one representative per lag, the first in column-major scan
    /// order of the covariance (mirrors dropping repeated rows of the
    /// vectorized matrix).
    #[default]
    SelectFirst,
    /// Average all entries that share a lag; lower variance on
    /// finite-sample input.
    Average,
}

/// Covariance entries rearranged onto the difference coarray: entry `i`
/// (zero-based) carries lag `i - (M̄ - 1)`, lags ascending.
#[derive(Debug, Clone)]
pub struct CoarrayVector {
    values: Vec<C64>,
    m_bar: usize,
    policy: DuplicatePolicy,
}

impl CoarrayVector {
    /// Wrap raw values; the length must be odd (`2M̄ - 1` with `M̄ >= 2`).
    pub fn from_values(values: Vec<C64>, policy: DuplicatePolicy) -> Result<Self> {
        if values.len().is_multiple_of(2) || values.len() < 3 {
            return Err(DoaError::InvalidArgument(format!(
                "coarray vector length must be odd and at least 3, got {}",
                values.len()
            )));
        }
        let m_bar = values.len().div_ceil(2);
        Ok(Self {
            values,
            m_bar,
            policy,
        })
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    /// Virtual ULA length `M̄`.
    pub fn m_bar(&self) -> usize {
        self.m_bar
    }

    pub fn policy(&self) -> DuplicatePolicy {
        self.policy
    }

    pub fn lag_of(&self, index: usize) -> i64 {
        index as i64 - (self.m_bar as i64 - 1)
    }

    pub fn value_at_lag(&self, lag: i64) -> Option<C64> {
        let idx = lag + self.m_bar as i64 - 1;
        if idx < 0 || idx as usize >= self.values.len() {
            None
        } else {
            Some(self.values[idx as usize])
        }
    }
}

/// Sample covariance `(1/N) Σ y(i) y(i)^H` of a snapshot record.
pub fn sample_covariance(y: &SnapshotMatrix) -> HermitianCovariance {
    let n = y.snapshot_count() as f64;
    let r = (y.data() * y.data().adjoint()).unscale(n);
    HermitianCovariance::new(r).expect("snapshot Gram matrix is square")
}

/// Rearrange covariance entries onto the lags of the difference coarray.
///
/// Requires a contiguous coarray; entry for lag `ℓ` is taken from the
/// covariance entries `R[a,b]` with `r_a - r_b = ℓ` under the chosen
/// duplicate policy. Output is sorted by lag ascending over the central
/// filled segment `-(M̄-1) .. M̄-1`.
pub fn vectorize_to_coarray(
    r: &HermitianCovariance,
    geom: &ArrayGeometry,
    policy: DuplicatePolicy,
) -> Result<CoarrayVector> {
    let coarray = geom.difference_coarray();
    if !coarray.contiguous {
        return Err(DoaError::UnsupportedGeometry(
            "difference coarray has holes; coarray vectorization needs a filled ULA".into(),
        ));
    }
    let m = geom.sensor_count();
    if r.dim() != m {
        return Err(DoaError::InvalidArgument(format!(
            "covariance dimension {} does not match sensor count {m}",
            r.dim()
        )));
    }
    let m_bar = coarray.virtual_aperture;
    let positions = geom.positions();
    let n_lags = 2 * m_bar - 1;
    let mut sums = vec![C64::new(0.0, 0.0); n_lags];
    let mut counts = vec![0usize; n_lags];
    // Column-major scan: the first (a, b) pair encountered for each lag is
    // the select-first representative.
    for b in 0..m {
        for a in 0..m {
            let lag = positions[a] - positions[b];
            let idx = lag + m_bar as i64 - 1;
            if idx < 0 || idx >= n_lags as i64 {
                continue;
            }
            let idx = idx as usize;
            match policy {
                DuplicatePolicy::SelectFirst => {
                    if counts[idx] == 0 {
                        sums[idx] = r.matrix()[(a, b)];
                        counts[idx] = 1;
                    }
                }
                DuplicatePolicy::Average => {
                    sums[idx] += r.matrix()[(a, b)];
                    counts[idx] += 1;
                }
            }
        }
    }
    let values: Vec<C64> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s.unscale(c as f64))
        .collect();
    CoarrayVector::from_values(values, policy)
}

/// Spatial smoothing: average the outer products of all length-`M̄`
/// sliding windows of the coarray vector. The result is `M̄×M̄`, Hermitian,
/// and PSD because it is a sum of outer products.
pub fn spatial_smoothing(z: &CoarrayVector) -> Result<HermitianCovariance> {
    let m_bar = z.m_bar();
    if m_bar < 2 {
        return Err(DoaError::InvalidArgument(
            "spatial smoothing needs a virtual aperture of at least 2".into(),
        ));
    }
    let mut acc = CMat::zeros(m_bar, m_bar);
    for start in 0..m_bar {
        let window = &z.values()[start..start + m_bar];
        for row in 0..m_bar {
            for col in 0..m_bar {
                acc[(row, col)] += window[row] * window[col].conj();
            }
        }
    }
    HermitianCovariance::new(acc.unscale(m_bar as f64))
}

/// Principal square root of a smoothed covariance: same eigenvectors,
/// square-rooted eigenvalues. The estimators consume `R̃` directly (the
/// subspaces coincide); this is for diagnostics and cross-validation.
pub fn equivalent_ula_covariance(r: &HermitianCovariance) -> Result<HermitianCovariance> {
    let e = eigh(r.matrix())?;
    let max = e.values.last().copied().unwrap_or(0.0).max(0.0);
    let floor = -1e-10 * max;
    let mut roots = Vec::with_capacity(e.values.len());
    for &v in &e.values {
        if v < floor {
            return Err(DoaError::NotPsd(format!(
                "eigenvalue {v} below tolerance {floor}"
            )));
        }
        roots.push(C64::new(v.max(0.0).sqrt(), 0.0));
    }
    let w = CMat::from_diagonal(&nalgebra::DVector::from_vec(roots));
    HermitianCovariance::new(&e.vectors * w * e.vectors.adjoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SteeringManifold;
    use crate::linalg::{eigvalsh, fro_norm, CVec};
    use crate::signal::{analytic_covariance, synthesize, SourceScenario};

    fn nested_4_4() -> ArrayGeometry {
        ArrayGeometry::nested(4, 4, 0.5).unwrap()
    }

    fn scenario() -> SourceScenario {
        SourceScenario::equal_power_snr(&[15.0, 17.0], 3.33).unwrap()
    }

    /// Independent oracle: accumulate y(i) y(i)^H one snapshot at a time.
    fn naive_sample_covariance(y: &SnapshotMatrix) -> CMat {
        let m = y.sensor_count();
        let n = y.snapshot_count();
        let mut acc = CMat::zeros(m, m);
        for i in 0..n {
            let col = y.data().column(i);
            for a in 0..m {
                for b in 0..m {
                    acc[(a, b)] += col[a] * col[b].conj();
                }
            }
        }
        acc.unscale(n as f64)
    }

    #[test]
    fn sample_covariance_matches_naive_loop() {
        let y = synthesize(&nested_4_4(), &scenario(), 150, 31).unwrap();
        let fast = sample_covariance(&y);
        let slow = naive_sample_covariance(&y);
        let rel = fro_norm(&(fast.matrix() - &slow)) / fro_norm(&slow);
        assert!(rel < 1e-12, "relative error {rel}");
    }

    #[test]
    fn single_snapshot_covariance_is_outer_product() {
        let y = synthesize(&nested_4_4(), &scenario(), 1, 3).unwrap();
        let r = sample_covariance(&y);
        let col = y.data().column(0).clone_owned();
        let expect = &col * col.adjoint();
        assert!(fro_norm(&(r.matrix() - &expect)) < 1e-12);
    }

    #[test]
    fn covariance_trace_identity() {
        let y = synthesize(&nested_4_4(), &scenario(), 64, 17).unwrap();
        let r = sample_covariance(&y);
        let energy: f64 = (0..64)
            .map(|i| y.data().column(i).iter().map(|x| x.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            / 64.0;
        assert!((r.trace() - energy).abs() / energy < 1e-12);
    }

    #[test]
    fn hermitian_constructor_symmetrizes() {
        let mut m = CMat::zeros(2, 2);
        m[(0, 1)] = C64::new(1.0, 2.0);
        let r = HermitianCovariance::new(m).unwrap();
        assert_eq!(r.matrix()[(1, 0)], r.matrix()[(0, 1)].conj());
        assert!(HermitianCovariance::new(CMat::zeros(2, 3)).is_err());
    }

    #[test]
    fn vectorize_pure_noise_is_center_spike() {
        let geom = nested_4_4();
        let noise = SourceScenario::new(vec![0.0], vec![0.0], 2.0).unwrap();
        let r = analytic_covariance(&geom, &noise).unwrap();
        let z = vectorize_to_coarray(&r, &geom, DuplicatePolicy::SelectFirst).unwrap();
        assert_eq!(z.values().len(), 39);
        for i in 0..z.values().len() {
            let expect = if z.lag_of(i) == 0 { 2.0 } else { 0.0 };
            assert!((z.values()[i] - C64::new(expect, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn vectorize_broadside_source_is_constant() {
        let geom = nested_4_4();
        let s = SourceScenario::new(vec![0.0], vec![3.0], 0.5).unwrap();
        let r = analytic_covariance(&geom, &s).unwrap();
        let z = vectorize_to_coarray(&r, &geom, DuplicatePolicy::SelectFirst).unwrap();
        for i in 0..z.values().len() {
            let expect = if z.lag_of(i) == 0 { 3.5 } else { 3.0 };
            assert!((z.values()[i] - C64::new(expect, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn duplicate_policies_agree_on_analytic_input() {
        // The analytic covariance is exactly Toeplitz-consistent on the
        // coarray, so both policies must coincide.
        let geom = nested_4_4();
        let r = analytic_covariance(&geom, &scenario()).unwrap();
        let first = vectorize_to_coarray(&r, &geom, DuplicatePolicy::SelectFirst).unwrap();
        let avg = vectorize_to_coarray(&r, &geom, DuplicatePolicy::Average).unwrap();
        for (a, b) in first.values().iter().zip(avg.values()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn vectorize_is_conjugate_symmetric_for_hermitian_input() {
        let geom = nested_4_4();
        let y = synthesize(&geom, &scenario(), 150, 8).unwrap();
        let r = sample_covariance(&y);
        for policy in [DuplicatePolicy::SelectFirst, DuplicatePolicy::Average] {
            let z = vectorize_to_coarray(&r, &geom, policy).unwrap();
            let m_bar = z.m_bar() as i64;
            for lag in 0..m_bar {
                let pos = z.value_at_lag(lag).unwrap();
                let neg = z.value_at_lag(-lag).unwrap();
                assert!(
                    (pos.conj() - neg).norm() < 1e-12,
                    "lag {lag} asymmetric under {policy:?}"
                );
            }
        }
    }

    #[test]
    fn vectorize_rejects_sparse_coarrays() {
        // Positions {0, 1, 5} skip lags 2 and 3.
        let holed = ArrayGeometry::custom(&[0, 1, 5], 0.5).unwrap();
        assert!(!holed.difference_coarray().contiguous);
        let y = synthesize(&holed, &scenario(), 10, 1).unwrap();
        let r = sample_covariance(&y);
        assert!(matches!(
            vectorize_to_coarray(&r, &holed, DuplicatePolicy::SelectFirst),
            Err(DoaError::UnsupportedGeometry(_))
        ));
    }

    #[test]
    fn vectorize_rejects_dimension_mismatch() {
        let geom = nested_4_4();
        let y = synthesize(&ArrayGeometry::ula(6, 0.5).unwrap(), &scenario(), 10, 1).unwrap();
        let r = sample_covariance(&y);
        assert!(matches!(
            vectorize_to_coarray(&r, &geom, DuplicatePolicy::SelectFirst),
            Err(DoaError::InvalidArgument(_))
        ));
    }

    #[test]
    fn coarray_vector_length_validation() {
        let even = vec![C64::new(1.0, 0.0); 4];
        assert!(CoarrayVector::from_values(even, DuplicatePolicy::SelectFirst).is_err());
        let short = vec![C64::new(1.0, 0.0); 1];
        assert!(CoarrayVector::from_values(short, DuplicatePolicy::SelectFirst).is_err());
    }

    #[test]
    fn smoothing_noise_spike_gives_scaled_identity() {
        let m_bar = 12usize;
        let sigma2 = 3.0;
        let mut values = vec![C64::new(0.0, 0.0); 2 * m_bar - 1];
        values[m_bar - 1] = C64::new(sigma2, 0.0);
        let z = CoarrayVector::from_values(values, DuplicatePolicy::SelectFirst).unwrap();
        let rt = spatial_smoothing(&z).unwrap();
        let expect = CMat::identity(m_bar, m_bar) * C64::new(sigma2 * sigma2 / m_bar as f64, 0.0);
        assert!(fro_norm(&(rt.matrix() - &expect)) < 1e-12);
    }

    /// Right-hand side of the smoothing identity, built independently:
    /// (1/M̄) (G₁ R_s G₁^H + σ_n² I)².
    fn smoothing_identity_rhs(
        geom: &ArrayGeometry,
        scenario: &SourceScenario,
        m_bar: usize,
    ) -> CMat {
        let g1 = SteeringManifold::virtual_ula(m_bar, geom.d1(), &scenario.doas_deg).unwrap();
        let rs = CMat::from_diagonal(&CVec::from_iterator(
            scenario.powers.len(),
            scenario.powers.iter().map(|&p| C64::new(p, 0.0)),
        ));
        let inner = g1.matrix() * rs * g1.matrix().adjoint()
            + CMat::identity(m_bar, m_bar) * C64::new(scenario.noise_power, 0.0);
        (&inner * &inner).unscale(m_bar as f64)
    }

    #[test]
    fn smoothing_matches_squared_ula_covariance_on_analytic_input() {
        let geom = nested_4_4();
        let sc = scenario();
        let r = analytic_covariance(&geom, &sc).unwrap();
        let z = vectorize_to_coarray(&r, &geom, DuplicatePolicy::SelectFirst).unwrap();
        let rt = spatial_smoothing(&z).unwrap();
        let rhs = smoothing_identity_rhs(&geom, &sc, z.m_bar());
        let rel = fro_norm(&(rt.matrix() - &rhs)) / fro_norm(&rhs);
        assert!(rel < 1e-8, "relative error {rel}");
    }

    #[test]
    fn smoothing_output_is_psd() {
        let geom = nested_4_4();
        for seed in 0..50u64 {
            let y = synthesize(&geom, &scenario(), 150, seed).unwrap();
            let r = sample_covariance(&y);
            let z = vectorize_to_coarray(&r, &geom, DuplicatePolicy::SelectFirst).unwrap();
            let rt = spatial_smoothing(&z).unwrap();
            let vals = eigvalsh(rt.matrix());
            let max = vals.last().copied().unwrap();
            assert!(
                vals[0] >= -1e-10 * max,
                "seed {seed}: min eigenvalue {} vs max {max}",
                vals[0]
            );
        }
    }

    #[test]
    fn equivalent_ula_covariance_is_principal_root() {
        let geom = nested_4_4();
        let sc = scenario();
        let r = analytic_covariance(&geom, &sc).unwrap();
        let z = vectorize_to_coarray(&r, &geom, DuplicatePolicy::SelectFirst).unwrap();
        let rt = spatial_smoothing(&z).unwrap();
        let root = equivalent_ula_covariance(&rt).unwrap();

        // Squaring recovers the smoothed matrix.
        let squared = root.matrix() * root.matrix();
        let rel = fro_norm(&(&squared - rt.matrix())) / fro_norm(rt.matrix());
        assert!(rel < 1e-8);

        // And the root matches (1/√M̄)(G₁ R_s G₁^H + σ_n² I) directly.
        let m_bar = z.m_bar();
        let g1 = SteeringManifold::virtual_ula(m_bar, geom.d1(), &sc.doas_deg).unwrap();
        let rs = CMat::from_diagonal(&CVec::from_iterator(
            2,
            sc.powers.iter().map(|&p| C64::new(p, 0.0)),
        ));
        let direct = (g1.matrix() * rs * g1.matrix().adjoint()
            + CMat::identity(m_bar, m_bar) * C64::new(sc.noise_power, 0.0))
        .unscale((m_bar as f64).sqrt());
        let rel = fro_norm(&(root.matrix() - &direct)) / fro_norm(&direct);
        assert!(rel < 1e-8, "relative error {rel}");
    }

    #[test]
    fn square_root_of_scaled_identity() {
        let m_bar = 6usize;
        let rt =
            HermitianCovariance::new(CMat::identity(m_bar, m_bar) * C64::new(16.0, 0.0)).unwrap();
        let root = equivalent_ula_covariance(&rt).unwrap();
        let expect = CMat::identity(m_bar, m_bar) * C64::new(4.0, 0.0);
        assert!(fro_norm(&(root.matrix() - &expect)) < 1e-12);
    }

    #[test]
    fn square_root_rejects_indefinite_input() {
        let mut m = CMat::identity(3, 3);
        m[(2, 2)] = C64::new(-1.0, 0.0);
        let r = HermitianCovariance::new(m).unwrap();
        assert!(matches!(
            equivalent_ula_covariance(&r),
            Err(DoaError::NotPsd(_))
        ));
    }

    #[test]
    fn csv_dump_round_trips_by_eye() {
        let r = HermitianCovariance::new(CMat::identity(2, 2)).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "1,0,0,0\n0,0,1,0\n");
    }
}
