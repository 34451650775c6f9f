//! Small helpers around complex Hermitian eigendecomposition.
//!
//! Everything downstream (subspace extraction, matrix square roots, the
//! likelihood objective) consumes eigenpairs in a canonical form:
//! eigenvalues ascending, and each eigenvector's phase normalized so that
//! its first significantly nonzero component is real and positive. The
//! normalization makes repeated runs and reordered computations produce
//! bit-identical bases.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{DoaError, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Eigenpairs of a Hermitian matrix, eigenvalues sorted ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Real eigenvalues, ascending.
    pub values: Vec<f64>,
    /// Column `j` is the unit eigenvector for `values[j]`.
    pub vectors: CMat,
}

/// Full eigendecomposition of a Hermitian matrix.
///
/// The input is assumed Hermitian; only numerical failures of the
/// underlying solver are reported as errors.
pub fn eigh(m: &CMat) -> Result<HermitianEigen> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(DoaError::InvalidArgument(format!(
            "eigh needs a square matrix, got {}x{}",
            n,
            m.ncols()
        )));
    }
    let se = m
        .clone()
        .try_symmetric_eigen(f64::EPSILON, 0)
        .ok_or_else(|| DoaError::Numerical("Hermitian eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        se.eigenvalues[a]
            .partial_cmp(&se.eigenvalues[b])
            .expect("eigenvalues are finite")
    });

    let mut values = Vec::with_capacity(n);
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(se.eigenvalues[src]);
        let mut col = se.eigenvectors.column(src).clone_owned();
        normalize_phase(&mut col);
        vectors.set_column(dst, &col);
    }
    Ok(HermitianEigen { values, vectors })
}

/// Eigenvalues only, ascending. Cheaper than [`eigh`] when vectors are
/// not needed.
pub fn eigvalsh(m: &CMat) -> Vec<f64> {
    let mut vals: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).expect("eigenvalues are finite"));
    vals
}

/// Rotate a vector's global phase so its first component with magnitude
/// above `1e-9` becomes real and positive.
fn normalize_phase(v: &mut CVec) {
    if let Some(pivot) = v.iter().find(|x| x.norm() > 1e-9) {
        let phase = pivot.unscale(pivot.norm());
        let correction = phase.conj();
        for x in v.iter_mut() {
            *x *= correction;
        }
    }
}

/// Frobenius norm of a complex matrix.
pub fn fro_norm(m: &CMat) -> f64 {
    m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// `(m + m^H) / 2`, the Hermitian part of a square matrix.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()).unscale(2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_hermitian() -> CMat {
        // [[2, i, 0], [-i, 2, 1], [0, 1, 1]]
        CMat::from_row_slice(
            3,
            3,
            &[
                C64::new(2.0, 0.0),
                C64::new(0.0, 1.0),
                C64::new(0.0, 0.0),
                C64::new(0.0, -1.0),
                C64::new(2.0, 0.0),
                C64::new(1.0, 0.0),
                C64::new(0.0, 0.0),
                C64::new(1.0, 0.0),
                C64::new(1.0, 0.0),
            ],
        )
    }

    #[test]
    fn eigh_reconstructs_input() {
        let h = example_hermitian();
        let e = eigh(&h).unwrap();
        let w = CMat::from_diagonal(&CVec::from_iterator(
            3,
            e.values.iter().map(|&x| C64::new(x, 0.0)),
        ));
        let rec = &e.vectors * w * e.vectors.adjoint();
        assert!(fro_norm(&(&rec - &h)) < 1e-12);
    }

    #[test]
    fn eigh_sorted_and_orthonormal() {
        let h = example_hermitian();
        let e = eigh(&h).unwrap();
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        let gram = e.vectors.adjoint() * &e.vectors;
        let eye = CMat::identity(3, 3);
        assert!(fro_norm(&(&gram - &eye)) < 1e-12);
    }

    #[test]
    fn phase_normalization_is_canonical() {
        let h = example_hermitian();
        let e = eigh(&h).unwrap();
        for j in 0..3 {
            let col = e.vectors.column(j);
            let pivot = col.iter().find(|x| x.norm() > 1e-9).unwrap();
            assert!(pivot.im.abs() < 1e-12);
            assert!(pivot.re > 0.0);
        }
    }

    #[test]
    fn eigvalsh_matches_eigh() {
        let h = example_hermitian();
        let a = eigvalsh(&h);
        let b = eigh(&h).unwrap().values;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
