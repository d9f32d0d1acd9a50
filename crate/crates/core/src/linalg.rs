//! Dense matrix helpers shared by the state, tensor and oracle code.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

pub(crate) const I: Complex64 = Complex64::new(0.0, 1.0);

/// The standard symplectic form `⊕ [[0, 1], [-1, 0]]` on `n_modes` modes,
/// in the interleaved `(Q1, P1, Q2, P2, …)` ordering.
pub fn omega(n_modes: usize) -> DMatrix<f64> {
    let d = 2 * n_modes;
    let mut m = DMatrix::zeros(d, d);
    for k in 0..n_modes {
        m[(2 * k, 2 * k + 1)] = 1.0;
        m[(2 * k + 1, 2 * k)] = -1.0;
    }
    m
}

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| Complex64::new(x, 0.0))
}

/// Complex product through four real products, which hit the fast real gemm.
pub fn cmul(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ai) = (a.map(|z| z.re), a.map(|z| z.im));
    let (br, bi) = (b.map(|z| z.re), b.map(|z| z.im));
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    CMatrix::from_fn(re.nrows(), re.ncols(), |i, j| Complex64::new(re[(i, j)], im[(i, j)]))
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

pub fn cmax_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |a, x| a.max(x.norm()))
}

/// Largest imaginary component of a complex matrix.
pub fn max_imag(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |a, x| a.max(x.im.abs()))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Square root of a symmetric positive semidefinite matrix. Negative
/// eigenvalues from rounding are clipped to zero.
pub fn sqrt_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let root = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()
}

/// Eigenvalues of a real symmetric matrix in ascending order.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

pub fn max_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).last().copied().unwrap_or(0.0)
}

/// Spectral norm of a symmetric matrix.
pub fn sym_norm(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Block-diagonal direct sum `a ⊕ b`.
pub fn direct_sum(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut m = DMatrix::zeros(ra + rb, ca + cb);
    m.view_mut((0, 0), (ra, ca)).copy_from(a);
    m.view_mut((ra, ca), (rb, cb)).copy_from(b);
    m
}

pub fn concat(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() + b.len(), a.iter().chain(b.iter()).copied())
}

/// Row-major vectorisation `vec(X)[i·d + j] = X[i, j]`, matching the
/// flattening of index pairs used for four-index tensors.
pub fn vec_row_major(m: &CMatrix) -> DVector<Complex64> {
    let (r, c) = m.shape();
    DVector::from_iterator(r * c, (0..r).flat_map(|i| (0..c).map(move |j| m[(i, j)])))
}

pub fn unvec_row_major(v: &DVector<Complex64>, d: usize) -> CMatrix {
    CMatrix::from_fn(d, d, |i, j| v[i * d + j])
}

/// 1-norm condition number estimate `‖A‖₁ ‖A⁻¹‖₁` from an explicit inverse.
pub fn condition_1(a: &CMatrix, inv: &CMatrix) -> f64 {
    col_norm_1(a) * col_norm_1(inv)
}

fn col_norm_1(a: &CMatrix) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|x| x.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Relative Frobenius distance `‖a − b‖ / max(‖b‖, floor)`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    (a - b).norm() / b.norm().max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn omega_block_identities() {
        let w = omega(3);
        assert_eq!(w.transpose(), -&w);
        assert_eq!(&w * &w, -DMatrix::<f64>::identity(6, 6));
    }

    #[test]
    fn sqrt_psd_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let r = sqrt_psd(&m);
        assert!((&r * &r - &m).norm() < 1e-14);
    }

    #[test]
    fn vec_roundtrip() {
        let m = CMatrix::from_fn(3, 3, |i, j| Complex64::new(i as f64, j as f64));
        assert_eq!(unvec_row_major(&vec_row_major(&m), 3), m);
        assert_eq!(vec_row_major(&m)[5], m[(1, 2)]);
    }
}
