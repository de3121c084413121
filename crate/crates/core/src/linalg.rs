//! Dense complex matrix helpers shared by every module.

use nalgebra::DMatrix;
pub use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Largest absolute entry.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch");
    a.iter().zip(b.iter()).fold(0.0, |acc, (x, y)| acc.max((x - y).norm()))
}

pub fn is_finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn hermitian_residual(m: &CMatrix) -> f64 {
    max_abs_diff(m, &m.adjoint())
}

pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// `max |U†U − 1|`.
pub fn unitarity_residual(u: &CMatrix) -> f64 {
    let n = u.ncols();
    max_abs_diff(&(u.adjoint() * u), &identity(n))
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors as columns.
pub fn hermitian_eigen(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = h.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let eig = hermitize(h).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    (values, vectors)
}

/// `exp(i s H)` for Hermitian `H`, unitary to rounding.
pub fn exp_i_hermitian(h: &CMatrix, s: f64) -> CMatrix {
    let (values, vectors) = hermitian_eigen(h);
    exp_i_from_eigen(&values, &vectors, s)
}

/// `exp(i s H)` from a precomputed eigendecomposition of `H`.
pub fn exp_i_from_eigen(values: &[f64], vectors: &CMatrix, s: f64) -> CMatrix {
    let mut scaled = vectors.clone();
    for (k, &v) in values.iter().enumerate() {
        let phase = C64::from_polar(1.0, s * v);
        for z in scaled.column_mut(k).iter_mut() {
            *z *= phase;
        }
    }
    scaled * vectors.adjoint()
}

/// Unitary polar factor `W V†` of `M = W Σ V†` together with the smallest singular value.
pub fn polar_unitary(m: &CMatrix) -> (CMatrix, f64) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V†");
    let smallest = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    (u * v_t, smallest)
}

/// Rows `rows` and columns `cols` of `m`, in the given order.
pub fn submatrix(m: &CMatrix, rows: &[usize], cols: &[usize]) -> CMatrix {
    CMatrix::from_fn(rows.len(), cols.len(), |r, k| m[(rows[r], cols[k])])
}

pub fn determinant(m: &CMatrix) -> C64 {
    if m.nrows() == 0 {
        return C64::new(1.0, 0.0);
    }
    m.clone().lu().determinant()
}

/// Largest principal angle between the column spans of two matrices with
/// orthonormal columns.
pub fn max_principal_angle(a: &CMatrix, b: &CMatrix) -> f64 {
    let overlap = a.adjoint() * b;
    let smallest = overlap.singular_values().iter().cloned().fold(f64::INFINITY, f64::min);
    smallest.clamp(-1.0, 1.0).acos()
}

pub fn projector(frame: &CMatrix) -> CMatrix {
    frame * frame.adjoint()
}

pub fn check_unitary(u: &CMatrix, tol: f64) -> Result<()> {
    if u.nrows() != u.ncols() {
        return Err(Error::DimensionMismatch { what: "unitary".into(), expected: u.nrows(), found: u.ncols() });
    }
    let residual = unitarity_residual(u);
    if residual > tol {
        return Err(Error::NotUnitary { residual });
    }
    Ok(())
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut y = x.rem_euclid(TAU);
    if y > PI {
        y -= TAU;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pauli_y() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
    }

    #[test]
    fn eigen_of_pauli_y_is_sorted() {
        let (values, vectors) = hermitian_eigen(&pauli_y());
        assert!((values[0] + 1.0).abs() < 1e-14 && (values[1] - 1.0).abs() < 1e-14);
        let back = &vectors
            * CMatrix::from_diagonal(&values.iter().map(|&v| c(v, 0.)).collect::<Vec<_>>().into())
            * vectors.adjoint();
        assert!(max_abs_diff(&back, &pauli_y()) < 1e-14);
    }

    #[test]
    fn exponential_matches_rotation() {
        // exp(i t σ_y) = cos t + i sin t σ_y = [[cos, sin], [−sin, cos]]
        let t = 0.7_f64;
        let u = exp_i_hermitian(&pauli_y(), t);
        let expected =
            CMatrix::from_row_slice(2, 2, &[c(t.cos(), 0.), c(t.sin(), 0.), c(-t.sin(), 0.), c(t.cos(), 0.)]);
        assert!(max_abs_diff(&u, &expected) < 1e-14);
        assert!(unitarity_residual(&u) < 1e-14);
    }

    #[test]
    fn polar_of_scaled_unitary() {
        let u = exp_i_hermitian(&pauli_y(), 0.3);
        let (w, smallest) = polar_unitary(&u.scale(2.5));
        assert!(max_abs_diff(&w, &u) < 1e-13);
        assert!((smallest - 2.5).abs() < 1e-13);
    }

    #[test]
    fn wrap_phase_range() {
        assert!((wrap_phase(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_phase(-0.5) + 0.5).abs() < 1e-15);
    }
}
