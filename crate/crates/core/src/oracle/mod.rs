//! Brute-force reference implementation in a truncated Fock space.
//!
//! Everything here works on explicit density matrices, independently of the
//! covariance-matrix formulas, and is meant for one or two modes at modest
//! cutoffs. Basis index of `|n_0, n_1, …⟩` is `Σ_k n_k c^{m−1−k}`, so mode 0
//! is the most significant digit and Kronecker products list modes in order.

mod check;
mod lindblad;
mod prepare;
mod sld;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::linalg::CMatrix;

pub use check::{
    fd_derivatives, oracle_qfi, residual_below, FD_STEP, FIDELITY_STEP, qfi_from_fidelity_fd, regression_grid, sld_form_operator, OracleQfi,
    RegressionCase,
};
pub use lindblad::{lindblad_apply, lindblad_integrate, LindbladRun, Schedule, LINDBLAD_TOL};
pub use prepare::{bloch_messiah, state_to_fock, state_to_fock_with, BlochMessiah, DEFAULT_PAD};
pub use sld::{fidelity_fock, qfi_fock, sld_fock, trace_norm, SldSolver, SldSolution, KERNEL_THRESHOLD};

/// Default gate on `1 − tr ρ` for truncated states.
pub const TRACE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FockSpace {
    pub cutoff: usize,
    pub modes: usize,
}

impl FockSpace {
    pub fn new(cutoff: usize, modes: usize) -> Self {
        Self { cutoff, modes }
    }

    pub fn dim(&self) -> usize {
        self.cutoff.pow(self.modes as u32)
    }

    pub fn stride(&self, mode: usize) -> usize {
        self.cutoff.pow((self.modes - 1 - mode) as u32)
    }

    pub fn occupation(&self, index: usize, mode: usize) -> usize {
        (index / self.stride(mode)) % self.cutoff
    }

    pub fn total(&self, index: usize) -> usize {
        (0..self.modes).map(|k| self.occupation(index, k)).sum()
    }

    /// `b_1 b_2 ⋯ |j⟩ = coeff |i⟩` for ladder operators `(mode, dagger)`,
    /// or `None` when the string annihilates `|j⟩` under truncation.
    pub fn ladder(&self, j: usize, ops: &[(usize, bool)]) -> Option<(usize, f64)> {
        let (mut i, mut coeff) = (j, 1.0);
        for &(k, dagger) in ops.iter().rev() {
            let n = self.occupation(i, k);
            if dagger {
                if n + 1 >= self.cutoff {
                    return None;
                }
                coeff *= ((n + 1) as f64).sqrt();
                i += self.stride(k);
            } else {
                if n == 0 {
                    return None;
                }
                coeff *= (n as f64).sqrt();
                i -= self.stride(k);
            }
        }
        Some((i, coeff))
    }

    /// Ladder basis `b = (a_0, a_0†, a_1, …)`.
    pub fn ladder_basis(&self) -> Vec<(usize, bool)> {
        (0..self.modes).flat_map(|k| [(k, false), (k, true)]).collect()
    }
}

/// `R_i = Σ_x c_ix b_x` over [`FockSpace::ladder_basis`].
pub fn quadrature_coeff(i: usize, x: usize) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    if i / 2 != x / 2 {
        return Complex64::new(0.0, 0.0);
    }
    match (i % 2, x % 2) {
        (0, _) => Complex64::new(s, 0.0),
        (_, 0) => Complex64::new(0.0, -s),
        _ => Complex64::new(0.0, s),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockDensity {
    pub space: FockSpace,
    pub matrix: CMatrix,
    /// `1 − Re tr ρ`.
    pub trace_deficit: f64,
}

impl FockDensity {
    pub fn new(space: FockSpace, matrix: CMatrix) -> Self {
        let trace_deficit = 1.0 - matrix.trace().re;
        Self { space, matrix, trace_deficit }
    }

    pub fn cutoff(&self) -> usize {
        self.space.cutoff
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (&self.matrix - self.matrix.adjoint()).iter().fold(0.0f64, |a, z| a.max(z.norm()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().fold(f64::INFINITY, |a, &x| a.min(x))
    }

    pub fn expect(&self, op: &CMatrix) -> Complex64 {
        (&self.matrix * op).trace()
    }

    /// `tr(ρ b_1 b_2 ⋯)` for a string of ladder operators `(mode, dagger)`,
    /// with the truncated action `a†|c−1⟩ = 0`.
    pub fn ladder_expect(&self, ops: &[(usize, bool)]) -> Complex64 {
        (0..self.space.dim())
            .filter_map(|j| self.space.ladder(j, ops).map(|(i, c)| self.matrix[(j, i)] * c))
            .sum()
    }

    /// Quadrature mean and symmetrized covariance, read off the matrix.
    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.space.modes;
        let ladder = self.space.ladder_basis();
        let coeff = quadrature_coeff;
        let first: Vec<Complex64> = ladder.iter().map(|&b| self.ladder_expect(&[b])).collect();
        let second = DMatrix::from_fn(2 * m, 2 * m, |x, y| self.ladder_expect(&[ladder[x], ladder[y]]));
        let d = 2 * m;
        let mean = DVector::from_fn(d, |i, _| (0..d).map(|x| coeff(i, x) * first[x]).sum::<Complex64>().re);
        let raw = DMatrix::from_fn(d, d, |i, j| {
            let mut z = Complex64::new(0.0, 0.0);
            for x in 0..d {
                for y in 0..d {
                    z += coeff(i, x) * coeff(j, y) * second[(x, y)];
                }
            }
            z.re
        });
        let cov = DMatrix::from_fn(d, d, |i, j| 0.5 * (raw[(i, j)] + raw[(j, i)]) - mean[i] * mean[j]);
        (mean, cov)
    }
}

/// Dense ladder operators with `a†|c−1⟩ = 0`.
#[derive(Debug, Clone)]
pub struct TruncatedOps {
    pub space: FockSpace,
    pub a: Vec<CMatrix>,
    pub ad: Vec<CMatrix>,
    pub n: Vec<CMatrix>,
}

impl TruncatedOps {
    pub fn new(space: FockSpace) -> Self {
        let c = space.cutoff;
        let single = CMatrix::from_fn(c, c, |i, j| {
            if j == i + 1 {
                Complex64::new((j as f64).sqrt(), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let id = CMatrix::identity(c, c);
        let lift = |op: &CMatrix, k: usize| {
            (0..space.modes).fold(CMatrix::identity(1, 1), |acc, m| acc.kronecker(if m == k { op } else { &id }))
        };
        let a: Vec<CMatrix> = (0..space.modes).map(|k| lift(&single, k)).collect();
        let ad: Vec<CMatrix> = a.iter().map(|m| m.adjoint()).collect();
        let n = a.iter().zip(&ad).map(|(a, ad)| ad * a).collect();
        Self { space, a, ad, n }
    }

    /// `(Q_1, P_1, Q_2, P_2, …)`.
    pub fn quadratures(&self) -> Vec<CMatrix> {
        let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let is = Complex64::new(0.0, std::f64::consts::FRAC_1_SQRT_2);
        self.a
            .iter()
            .zip(&self.ad)
            .flat_map(|(a, ad)| [(a + ad) * s, (ad - a) * is])
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_commutator() {
        let ops = TruncatedOps::new(FockSpace::new(6, 2));
        let comm = &ops.a[1] * &ops.ad[1] - &ops.ad[1] * &ops.a[1];
        let sp = ops.space;
        for i in 0..sp.dim() {
            let expect = if sp.occupation(i, 1) < 5 { 1.0 } else { -5.0 };
            assert!((comm[(i, i)].re - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn ladder_strings_match_dense_products() {
        let sp = FockSpace::new(5, 2);
        let ops = TruncatedOps::new(sp);
        let m = CMatrix::from_fn(sp.dim(), sp.dim(), |i, j| Complex64::new((i * 3 + j) as f64 * 0.01, (i as f64 - j as f64) * 0.02));
        let rho = FockDensity::new(sp, m);
        let dense = rho.expect(&(&ops.ad[0] * &ops.a[1] * &ops.ad[1]));
        let sparse = rho.ladder_expect(&[(0, true), (1, false), (1, true)]);
        assert!((dense - sparse).norm() < 1e-12);
    }

    #[test]
    fn index_layout() {
        let sp = FockSpace::new(5, 2);
        assert_eq!(sp.occupation(7, 0), 1);
        assert_eq!(sp.occupation(7, 1), 2);
        assert_eq!(sp.total(24), 8);
    }
}
