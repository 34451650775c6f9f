//! Knowledge-aided iterative covariance refinement on the smoothed
//! coarray covariance.
//!
//! A finite-sample covariance estimate carries signal-noise cross terms
//! that an infinite-sample covariance would not. Expanding the smoothed
//! matrix as if it were a sample average isolates those terms as
//! `V = Q_A R̃ Q_A^⊥`, where `Q_A` projects onto the span of the current
//! steering-vector estimates. Each iteration scales a Hermitian-completed
//! copy of `V` out of `R̃` for every reliability factor `μ` on a grid,
//! re-runs MUSIC on each candidate matrix, and keeps the candidate DOA set
//! whose projectors minimize the stochastic maximum-likelihood objective
//!
//! ```text
//! U(μ) = ln det( Q_B R̃ Q_B + (Trace{Q_B^⊥ R̃} / (L - P)) · Q_B^⊥ )
//! ```
//!
//! Accepted estimates are folded back into the steering manifold
//! gradually: iteration `n` replaces the first `n` columns (sorted order)
//! and keeps the remaining first-step columns, until all columns are
//! refreshed.

use serde::{Deserialize, Serialize};

use crate::covariance::{
    sample_covariance, spatial_smoothing, vectorize_to_coarray, DuplicatePolicy,
    HermitianCovariance,
};
use crate::error::{DoaError, Result};
use crate::geometry::SteeringManifold;
use crate::linalg::{eigvalsh, hermitian_part, CMat, C64};
use crate::signal::SnapshotMatrix;
use crate::subspace::{music_estimate, DoaEstimates, SteeringGrid};

/// Tuning for the iterative refinement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KaiConfig {
    /// Refinement iterations I (the second-step loop count).
    pub iterations: usize,
    /// Reliability-factor increment ι; the μ grid is {0, ι, 2ι, .., 1}.
    pub mu_increment: f64,
    /// Angular search step Δ in degrees.
    pub grid_step_deg: f64,
    /// Forwarded to the coarray vectorization.
    pub duplicate_policy: DuplicatePolicy,
}

impl Default for KaiConfig {
    fn default() -> Self {
        Self {
            iterations: 3,
            mu_increment: 0.1,
            grid_step_deg: 0.05,
            duplicate_policy: DuplicatePolicy::SelectFirst,
        }
    }
}

impl KaiConfig {
    /// Defaults with the iteration count tied to the source count
    /// (one extra pass after every manifold column has been refreshed).
    pub fn defaults_for(p: usize) -> Self {
        Self {
            iterations: p + 1,
            ..Self::default()
        }
    }

    /// The μ grid {0, ι, 2ι, .., 1}; ι must evenly divide 1.
    pub fn mu_grid(&self) -> Result<Vec<f64>> {
        if !(self.mu_increment > 0.0 && self.mu_increment <= 1.0) {
            return Err(DoaError::InvalidArgument(format!(
                "mu_increment must lie in (0, 1], got {}",
                self.mu_increment
            )));
        }
        let steps = (1.0 / self.mu_increment).round();
        if (1.0 / self.mu_increment - steps).abs() > 1e-9 {
            return Err(DoaError::InvalidArgument(format!(
                "mu_increment {} does not evenly divide 1",
                self.mu_increment
            )));
        }
        let k = steps as usize;
        Ok((0..=k).map(|i| i as f64 / k as f64).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(DoaError::InvalidArgument(
                "iterations must be at least 1".into(),
            ));
        }
        if !(self.grid_step_deg > 0.0 && self.grid_step_deg < 90.0) {
            return Err(DoaError::InvalidArgument(format!(
                "grid_step_deg must lie in (0, 90), got {}",
                self.grid_step_deg
            )));
        }
        self.mu_grid().map(|_| ())
    }
}

/// One refinement iteration as recorded for debugging.
#[derive(Debug, Clone, Serialize)]
pub struct KaiIterationRecord {
    /// Chosen reliability factor (NaN when every candidate degenerated).
    pub mu_opt: f64,
    /// U(μ) over the grid; +inf (serialized as null) marks skipped
    /// candidates.
    pub u_curve: Vec<f64>,
    /// DOA estimates at μ_opt, degrees ascending.
    pub doas_deg: Vec<f64>,
    /// Manifold angles after the gradual update.
    pub manifold_doas_deg: Vec<f64>,
}

/// Full run record: exportable as JSON for debugging.
#[derive(Debug, Clone, Serialize)]
pub struct KaiIterationTrace {
    pub mu_grid: Vec<f64>,
    /// First-step MUSIC estimates.
    pub initial_doas_deg: Vec<f64>,
    pub iterations: Vec<KaiIterationRecord>,
    /// True when an iteration had to stop early because every μ candidate
    /// produced a degenerate manifold or non-finite objective.
    pub degenerate_fallback: bool,
}

/// Projectors onto the span of a steering manifold and its orthogonal
/// complement: `Q_A = A (A^H A)^{-1} A^H`, `Q_A^⊥ = I - Q_A`.
pub fn projection_pair(manifold: &SteeringManifold) -> Result<(CMat, CMat)> {
    let a = manifold.matrix();
    let l = a.nrows();
    let eye = CMat::identity(l, l);
    if a.ncols() == 0 {
        return Ok((CMat::zeros(l, l), eye));
    }
    let gram = a.adjoint() * a;
    let vals = eigvalsh(&gram);
    let min = vals[0];
    let max = vals[vals.len() - 1];
    if min <= 0.0 || max / min > 1e12 {
        return Err(DoaError::DegenerateManifold(format!(
            "manifold at {:?} is numerically rank deficient (gram eigenvalues {min:.3e}..{max:.3e})",
            manifold.angles_deg()
        )));
    }
    let inv = gram
        .try_inverse()
        .ok_or_else(|| DoaError::DegenerateManifold("gram matrix not invertible".into()))?;
    let q = hermitian_part(&(a * inv * a.adjoint()));
    let q_perp = &eye - &q;
    Ok((q, q_perp))
}

/// Estimated signal-noise cross term `V = Q_A R̃ (I - Q_A)`.
pub fn cross_term(q_a: &CMat, r: &HermitianCovariance) -> CMat {
    let l = q_a.nrows();
    let q_perp = CMat::identity(l, l) - q_a;
    q_a * r.matrix() * q_perp
}

/// Covariance with a scaled Hermitian completion of the cross term
/// removed: `R̃ - μ (V + V^H)`.
pub fn modified_covariance(
    r: &HermitianCovariance,
    v: &CMat,
    mu: f64,
) -> Result<HermitianCovariance> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(DoaError::InvalidArgument(format!(
            "reliability factor must lie in [0, 1], got {mu}"
        )));
    }
    let scaled = (v + v.adjoint()) * C64::new(mu, 0.0);
    HermitianCovariance::new(r.matrix() - scaled)
}

/// Stochastic maximum-likelihood objective
/// `ln det(Q_B R̃ Q_B + (Trace{Q_B^⊥ R̃}/(L-P)) Q_B^⊥)`.
///
/// Evaluated in log-space through the eigenvalues of the (Hermitian)
/// argument; a singular or indefinite argument returns +inf so that the
/// candidate loses the argmin.
pub fn sml_objective(q_b: &CMat, q_b_perp: &CMat, r: &HermitianCovariance, p: usize) -> f64 {
    let l = r.dim();
    debug_assert!(p < l);
    let noise_scale = (q_b_perp * r.matrix())
        .diagonal()
        .iter()
        .map(|x| x.re)
        .sum::<f64>()
        / (l - p) as f64;
    let inner = hermitian_part(&(q_b * r.matrix() * q_b + q_b_perp * C64::new(noise_scale, 0.0)));
    let vals = eigvalsh(&inner);
    if vals.iter().any(|&v| v <= 0.0) {
        log::debug!(
            "SML argument not positive definite (min eigenvalue {:.3e})",
            vals[0]
        );
        return f64::INFINITY;
    }
    vals.iter().map(|v| v.ln()).sum()
}

/// Iterative refinement starting from a covariance already laid out on a
/// filled (virtual) ULA — the second step of the estimator. `d1` is the
/// element spacing of that ULA in wavelengths.
pub fn ms_kai_refine(
    rt: &HermitianCovariance,
    d1: f64,
    p: usize,
    config: &KaiConfig,
) -> Result<(DoaEstimates, KaiIterationTrace)> {
    config.validate()?;
    let l = rt.dim();
    if p >= l {
        return Err(DoaError::InvalidArgument(format!(
            "refinement needs P < L, got P={p}, L={l}"
        )));
    }
    let grid = SteeringGrid::virtual_ula(l, d1, config.grid_step_deg)?;
    let mu_grid = config.mu_grid()?;

    let initial = music_estimate(rt, p, &grid)?;
    let mut trace = KaiIterationTrace {
        mu_grid: mu_grid.clone(),
        initial_doas_deg: initial.angles_deg.clone(),
        iterations: Vec::with_capacity(config.iterations),
        degenerate_fallback: false,
    };

    let mut current = initial.clone();
    let mut manifold_angles = initial.angles_deg.clone();

    for n in 1..=config.iterations {
        let manifold = match SteeringManifold::virtual_ula(l, d1, &manifold_angles) {
            Ok(m) => m,
            Err(_) => {
                trace.degenerate_fallback = true;
                break;
            }
        };
        let (q_a, _) = match projection_pair(&manifold) {
            Ok(pair) => pair,
            Err(_) => {
                trace.degenerate_fallback = true;
                break;
            }
        };
        let v = cross_term(&q_a, rt);

        let mut u_curve = Vec::with_capacity(mu_grid.len());
        let mut best: Option<(f64, f64, DoaEstimates)> = None;
        for &mu in &mu_grid {
            let evaluated = (|| -> Result<(f64, DoaEstimates)> {
                let r_mod = modified_covariance(rt, &v, mu)?;
                let candidate = music_estimate(&r_mod, p, &grid)?;
                let b = SteeringManifold::virtual_ula(l, d1, &candidate.angles_deg)?;
                let (q_b, q_b_perp) = projection_pair(&b)?;
                Ok((sml_objective(&q_b, &q_b_perp, rt, p), candidate))
            })();
            match evaluated {
                Ok((u, candidate)) => {
                    u_curve.push(u);
                    // Strict < keeps the smaller μ on ties.
                    if u.is_finite() && best.as_ref().is_none_or(|(bu, _, _)| u < *bu) {
                        best = Some((u, mu, candidate));
                    }
                }
                Err(_) => u_curve.push(f64::INFINITY),
            }
        }

        let Some((_, mu_opt, chosen)) = best else {
            trace.degenerate_fallback = true;
            trace.iterations.push(KaiIterationRecord {
                mu_opt: f64::NAN,
                u_curve,
                doas_deg: current.angles_deg.clone(),
                manifold_doas_deg: manifold_angles.clone(),
            });
            break;
        };

        current = chosen;
        manifold_angles = if n <= p {
            let mut mixed = Vec::with_capacity(p);
            mixed.extend_from_slice(&current.angles_deg[..n]);
            mixed.extend_from_slice(&initial.angles_deg[n..]);
            mixed
        } else {
            current.angles_deg.clone()
        };
        trace.iterations.push(KaiIterationRecord {
            mu_opt,
            u_curve,
            doas_deg: current.angles_deg.clone(),
            manifold_doas_deg: manifold_angles.clone(),
        });
    }

    Ok((current, trace))
}

/// Full estimator on raw snapshots: build the smoothed coarray covariance
/// and refine. The geometry must have a filled difference coarray and
/// `P` must be below its virtual aperture.
pub fn ms_kai_nested_music(
    y: &SnapshotMatrix,
    p: usize,
    config: &KaiConfig,
) -> Result<(DoaEstimates, KaiIterationTrace)> {
    let geom = y.geometry();
    let r1 = sample_covariance(y);
    let z = vectorize_to_coarray(&r1, geom, config.duplicate_policy)?;
    if p >= z.m_bar() {
        return Err(DoaError::InvalidArgument(format!(
            "P={p} exceeds the virtual aperture {} of this geometry",
            z.m_bar()
        )));
    }
    let rt = spatial_smoothing(&z)?;
    ms_kai_refine(&rt, geom.d1(), p, config)
}

/// Closed-form operation counts (multiplications, additions) of the
/// refinement as a function of the configuration. Reporting only; nothing
/// at runtime depends on these.
pub fn complexity_estimate(
    m: usize,
    n: usize,
    p: usize,
    step_deg: f64,
    mu_increment: f64,
    iterations: usize,
) -> Result<(f64, f64)> {
    if m == 0 || n == 0 || p == 0 || iterations == 0 {
        return Err(DoaError::InvalidArgument(
            "complexity estimate needs positive M, N, P, and iterations".into(),
        ));
    }
    if step_deg <= 0.0 || step_deg.is_nan() || mu_increment <= 0.0 || mu_increment.is_nan() {
        return Err(DoaError::InvalidArgument(
            "complexity estimate needs positive step and increment".into(),
        ));
    }
    let mb = (m * m) as f64 / 4.0 + m as f64 / 2.0;
    let tau = 1.0 / mu_increment + 1.0;
    let i = iterations as f64;
    let grid = 180.0 / step_deg;
    let nf = n as f64;
    let pf = p as f64;

    let mults = i
        * tau
        * (grid * (mb * mb + mb * (2.0 - pf) - pf)
            + mb * 8.0 * nf * nf
            + 10.0 / 3.0 * mb.powi(3)
            + mb * mb * (pf + 2.0)
            + mb * (pf * pf + 2.0 * pf)
            + pf.powi(3) / 2.0
            + 3.0 * pf * pf / 2.0);
    let adds = i
        * tau
        * (grid * (mb * mb - mb * (pf - 1.0))
            + mb * 8.0 * nf * nf
            + 10.0 / 3.0 * mb.powi(3)
            + mb * mb * (pf - 1.0)
            + mb * (3.0 * pf * pf / 2.0 + 5.0 * pf / 2.0 - 1.0)
            - pf * pf
            - pf / 2.0);
    Ok((mults, adds))
}
