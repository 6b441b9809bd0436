//! Small dense linear-algebra helpers on fixed-size complex matrices.

use nalgebra::{DMatrix, SMatrix, SVector, SymmetricEigen};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type Mat4 = SMatrix<C64, 4, 4>;
pub type Vec4 = SVector<C64, 4>;
pub type Mat16 = SMatrix<f64, 16, 16>;
pub type Vec16 = SVector<f64, 16>;
pub type CMat16 = SMatrix<C64, 16, 16>;
pub type CVec16 = SVector<C64, 16>;

pub const fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Largest element-wise deviation from Hermiticity.
pub fn hermiticity_error<const N: usize>(m: &SMatrix<C64, N, N>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..N {
        for j in 0..N {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Symmetrize `(m + m†)/2`.
pub fn hermitian_part<const N: usize>(m: &SMatrix<C64, N, N>) -> SMatrix<C64, N, N> {
    (m + m.adjoint()).scale(0.5)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues sorted descending.
///
/// Goes through a dynamic matrix so the same code serves 4×4 and 16×16.
pub fn eigh<const N: usize>(m: &SMatrix<C64, N, N>) -> (Vec<f64>, Vec<SVector<C64, N>>) {
    let dynm = DMatrix::from_fn(N, N, |i, j| m[(i, j)]);
    let eig = SymmetricEigen::new(hermitian_dyn(&dynm));
    let mut order: Vec<usize> = (0..N).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = order
        .iter()
        .map(|&k| SVector::<C64, N>::from_fn(|i, _| eig.eigenvectors[(i, k)]))
        .collect();
    (values, vectors)
}

fn hermitian_dyn(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()).scale(0.5)
}

pub fn eigvalsh<const N: usize>(m: &SMatrix<C64, N, N>) -> Vec<f64> {
    eigh(m).0
}

pub fn min_eigenvalue<const N: usize>(m: &SMatrix<C64, N, N>) -> f64 {
    eigvalsh(m).last().copied().unwrap_or(0.0)
}

/// Eigenvalues below this fraction of the spectral radius are rounding
/// noise; they are zeroed before taking square roots.
pub const SPECTRUM_FLOOR: f64 = 1e-13;

/// Square roots of eigenvalues, with noise-level and negative values set
/// to zero.
pub fn sqrt_spectrum(vals: &[f64]) -> Vec<f64> {
    let radius = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    vals.iter()
        .map(|&v| if v > SPECTRUM_FLOOR * radius { v.sqrt() } else { 0.0 })
        .collect()
}

/// Principal square root of a PSD Hermitian matrix; negative and
/// noise-level eigenvalues are clipped to zero.
pub fn psd_sqrt<const N: usize>(m: &SMatrix<C64, N, N>) -> SMatrix<C64, N, N> {
    let (vals, vecs) = eigh(m);
    let roots = sqrt_spectrum(&vals);
    let mut out = SMatrix::<C64, N, N>::zeros();
    for (&s, v) in roots.iter().zip(&vecs) {
        out += (v * v.adjoint()).scale(s);
    }
    out
}

/// Nearest PSD matrix in Frobenius norm (eigenvalue clipping).
pub fn clip_to_psd<const N: usize>(m: &SMatrix<C64, N, N>) -> SMatrix<C64, N, N> {
    let (vals, vecs) = eigh(m);
    let mut out = SMatrix::<C64, N, N>::zeros();
    for (lambda, v) in vals.iter().zip(&vecs) {
        if *lambda > 0.0 {
            out += (v * v.adjoint()).scale(*lambda);
        }
    }
    out
}

pub fn trace<const N: usize>(m: &SMatrix<C64, N, N>) -> C64 {
    (0..N).map(|i| m[(i, i)]).sum()
}

/// Kronecker product of two 4-vectors (first factor is the slow index).
pub fn kron4(a: &Vec4, b: &Vec4) -> CVec16 {
    CVec16::from_fn(|k, _| a[k / 4] * b[k % 4])
}

/// Frobenius norm of a difference.
pub fn frobenius_distance<const R: usize, const C: usize>(
    a: &SMatrix<C64, R, C>,
    b: &SMatrix<C64, R, C>,
) -> f64 {
    (a - b).norm()
}

pub fn diag4(entries: [C64; 4]) -> Mat4 {
    Mat4::from_diagonal(&Vec4::from_column_slice(&entries))
}

/// Factor a PSD matrix as `T†T` with `T` lower-triangular.
///
/// Computes the Cholesky factor of the index-reversed matrix and reverses
/// it back. A ridge of `ridge · max(tr/N, 1e-12)` is added so the factor
/// exists when the input is only semidefinite.
pub fn lower_factor_tdag_t<const N: usize>(m: &SMatrix<C64, N, N>, ridge: f64) -> SMatrix<C64, N, N> {
    let scale = (trace(m).re / N as f64).max(1e-12);
    let rev = SMatrix::<C64, N, N>::from_fn(|i, j| m[(N - 1 - i, N - 1 - j)])
        + SMatrix::<C64, N, N>::identity().scale(ridge * scale);
    let rev = hermitian_part(&rev);
    let dynm = DMatrix::from_fn(N, N, |i, j| rev[(i, j)]);
    let chol = nalgebra::Cholesky::new(dynm).expect("ridge-regularized matrix is positive definite");
    let l = chol.l();
    // rev = L L†; m ≈ J L L† J = U U† with U = J L J upper; T = U†.
    let u = SMatrix::<C64, N, N>::from_fn(|i, j| l[(N - 1 - i, N - 1 - j)]);
    u.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_factor_reproduces_matrix() {
        let a = Mat4::from_fn(|i, j| c((i + 2 * j) as f64 * 0.1, (i as f64 - j as f64) * 0.05));
        let m = a.adjoint() * a + Mat4::identity();
        let t = lower_factor_tdag_t(&m, 0.0);
        for i in 0..4 {
            for j in (i + 1)..4 {
                assert!(t[(i, j)].norm() < 1e-14);
            }
        }
        assert!((t.adjoint() * t - m).norm() < 1e-12);
    }

    #[test]
    fn eigh_sorted_descending() {
        let m = diag4([c(0.1, 0.0), c(0.7, 0.0), c(-0.2, 0.0), c(0.4, 0.0)]);
        let vals = eigvalsh(&m);
        assert_eq!(vals.len(), 4);
        assert!((vals[0] - 0.7).abs() < 1e-14 && (vals[3] + 0.2).abs() < 1e-14);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let a = Mat4::from_fn(|i, j| c((i * j) as f64 * 0.3 + 0.1, (i as f64) * 0.02));
        let m = a * a.adjoint();
        let s = psd_sqrt(&m);
        assert!((s * s - m).norm() < 1e-10);
    }
}
