//! Covariance tensor `Σ̃ = ΣΩ`, its Cayley transform `f(Σ̃)`, and the
//! tensors `L⁽⁰⁾, L⁽¹⁾, L⁽²⁾` that turn channel derivatives into SLDs.
//!
//! Four-index tensors act on two-index objects as
//! `(A⊗B)^{ij}_{kl} X^{kl} = (A X Bᵀ)^{ij}` and are stored as
//! `(2n)²×(2n)²` matrices with the pair `(i, j)` flattened to `i·2n + j`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, omega, CMatrix, I};

/// Largest tolerated norm of `(Σ̃ + i/2)⁻¹` before a mode counts as pure.
pub const SINGULAR_NORM: f64 = 1e12;
/// Largest tolerated condition number of `f(Σ̃)⊗1 + 1⊗f(−Σ̃)`.
pub const MAX_CONDITION: f64 = 1e14;

#[derive(Debug, Clone)]
pub struct LTensors {
    pub l0: CMatrix,
    /// `(2n)²×2n`: row `(i, j)`, column `k`.
    pub l1: CMatrix,
    pub l2: CMatrix,
    pub d: CMatrix,
    pub f: CMatrix,
    /// `f(−Σ̃) = f(Σ̃)⁻¹`.
    pub f_inv: CMatrix,
    /// Condition number of the flattened system.
    pub condition: f64,
}

pub fn cov_tensor(cov: &DMatrix<f64>) -> DMatrix<f64> {
    cov * omega(cov.nrows() / 2)
}

fn shifted_inverse(st: &CMatrix, shift: Complex64) -> Result<CMatrix> {
    let d = st.nrows();
    let a = st + CMatrix::identity(d, d) * shift;
    let inv = a.try_inverse().ok_or(Error::SingularPureMode { norm: f64::INFINITY })?;
    let norm = inv.clone().singular_values().max();
    if !norm.is_finite() || norm > SINGULAR_NORM {
        return Err(Error::SingularPureMode { norm });
    }
    Ok(inv)
}

/// `f(Σ̃) = (Σ̃ − i/2)(Σ̃ + i/2)⁻¹`.
pub fn f_tensor(st: &CMatrix) -> Result<CMatrix> {
    let d = st.nrows();
    let inv = shifted_inverse(st, I * 0.5)?;
    Ok((st - CMatrix::identity(d, d) * (I * 0.5)) * inv)
}

pub fn l_tensors(cov: &DMatrix<f64>, mean: &DVector<f64>) -> Result<LTensors> {
    let d = cov.nrows();
    let st = linalg::to_complex(&cov_tensor(cov));
    let f = f_tensor(&st)?;
    let f_inv = f_tensor(&(-&st))?;
    let one = CMatrix::identity(d, d);
    let one2 = CMatrix::identity(d * d, d * d);

    let t = f.kronecker(&one) + one.kronecker(&f_inv);
    let k = t.clone().try_inverse().ok_or(Error::IllConditioned { cond: f64::INFINITY })?;
    let condition = linalg::condition_1(&t, &k);
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::IllConditioned { cond: condition });
    }
    let half = Complex64::new(0.5, 0.0);
    let l0 = (&k + &one2 * half) * I;
    let l2 = (&k - &one2 * half) * Complex64::new(2.0, 0.0);

    let two = Complex64::new(2.0, 0.0);
    let inv_or = |m: CMatrix| m.try_inverse().ok_or(Error::IllConditioned { cond: f64::INFINITY });
    let a = inv_or(&one + &f)? * two - &one;
    let b = inv_or(&one + &f_inv)? * two - &one;
    let m = mean.map(|x| Complex64::new(x, 0.0));
    let mut l1 = CMatrix::zeros(d * d, d);
    for i in 0..d {
        for j in 0..d {
            for kk in 0..d {
                l1[(i * d + j, kk)] = a[(i, kk)] * m[j] + b[(j, kk)] * m[i];
            }
        }
    }
    let dd = st.kronecker(&st) - &one2 * Complex64::new(0.25, 0.0);
    Ok(LTensors { l0, l1, l2, d: dd, f, f_inv, condition })
}

impl LTensors {
    pub fn dim(&self) -> usize {
        self.f.nrows()
    }

    /// `‖L⁽⁰⁾·Ω + L⁽²⁾·Σ‖ / ‖L⁽²⁾·Σ‖`, which vanishes identically.
    pub fn consistency_residual(&self, cov: &DMatrix<f64>) -> f64 {
        let d = self.dim();
        let w = linalg::vec_row_major(&linalg::to_complex(&omega(d / 2)));
        let s = linalg::vec_row_major(&linalg::to_complex(cov));
        let lhs = &self.l0 * w;
        let rhs = &self.l2 * s;
        (&lhs + &rhs).norm() / rhs.norm().max(1e-300)
    }

    /// `‖f(Σ̃) f(−Σ̃) − 1‖`.
    pub fn inverse_residual(&self) -> f64 {
        let d = self.dim();
        (&self.f * &self.f_inv - CMatrix::identity(d, d)).norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{embed, two_mode_squeezer, GaussianState};

    fn sorted_abs_eigs(m: &CMatrix) -> Vec<f64> {
        let mut v: Vec<f64> = m.clone().schur().eigenvalues().unwrap().iter().map(|z| z.norm()).collect();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    #[test]
    fn vacuum_cov_tensor() {
        let st = cov_tensor(GaussianState::vacuum(1).cov());
        assert_eq!(st, omega(1) * 0.5);
    }

    #[test]
    fn thermal_f_spectrum() {
        let st = linalg::to_complex(&cov_tensor(GaussianState::thermal(&[3.0]).unwrap().cov()));
        let f = f_tensor(&st).unwrap();
        let ev = sorted_abs_eigs(&f);
        assert!((ev[0] - 0.5).abs() < 1e-12 && (ev[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn vacuum_is_singular() {
        let st = linalg::to_complex(&cov_tensor(GaussianState::vacuum(1).cov()));
        assert!(matches!(f_tensor(&st), Err(Error::SingularPureMode { .. })));
    }

    #[test]
    fn zero_mean_has_no_linear_tensor() {
        let st = GaussianState::thermal(&[2.0, 1.5]).unwrap().transformed(&embed(&two_mode_squeezer(0.4), &[0, 1], 2));
        let l = l_tensors(st.cov(), st.mean()).unwrap();
        assert_eq!(l.l1, CMatrix::zeros(16, 4));
        assert!(l.consistency_residual(st.cov()) < 1e-10);
        assert!(l.inverse_residual() < 1e-10);
    }
}
