//! SLDs, QFI and fidelity from explicit density matrices, all in the
//! eigenbasis of `ρ`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::FockDensity;
use crate::linalg::{cmul, CMatrix};

/// Pairs with `p_a + p_b` at or below this are projected out of the SLD.
pub const KERNEL_THRESHOLD: f64 = 1e-12;
/// Eigenvalues of `ρ` at or below this are outside its support.
const SUPPORT_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct SldSolution {
    pub lambda: CMatrix,
    /// `‖dρ − Λ∘ρ‖₁`.
    pub residual: f64,
}

/// Eigendecomposition of `ρ`, shared between derivatives.
#[derive(Debug, Clone)]
pub struct SldSolver {
    pub p: DVector<f64>,
    pub v: CMatrix,
    pub threshold: f64,
    rho: CMatrix,
}

fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

/// `‖m‖₁` of the Hermitian part of `m`.
pub fn trace_norm(m: &CMatrix) -> f64 {
    hermitian_part(m).symmetric_eigenvalues().iter().map(|x| x.abs()).sum()
}

impl SldSolver {
    pub fn new(rho: &FockDensity) -> Self {
        Self::with_threshold(rho, KERNEL_THRESHOLD)
    }

    pub fn with_threshold(rho: &FockDensity, threshold: f64) -> Self {
        let h = hermitian_part(&rho.matrix);
        let eig = h.clone().symmetric_eigen();
        Self { p: eig.eigenvalues, v: eig.eigenvectors, threshold, rho: h }
    }

    /// `V† m V`.
    fn rotate(&self, m: &CMatrix) -> CMatrix {
        cmul(&cmul(&self.v.adjoint(), m), &self.v)
    }

    fn weight(&self, a: usize, b: usize) -> Option<f64> {
        let s = self.p[a] + self.p[b];
        (s > self.threshold).then_some(s)
    }

    pub fn solve(&self, drho: &CMatrix) -> SldSolution {
        let d = self.p.len();
        let dr = self.rotate(&hermitian_part(drho));
        let lt = CMatrix::from_fn(d, d, |a, b| match self.weight(a, b) {
            Some(s) => dr[(a, b)] * (2.0 / s),
            None => Complex64::new(0.0, 0.0),
        });
        let lambda = hermitian_part(&cmul(&cmul(&self.v, &lt), &self.v.adjoint()));
        let residual = self.residual(drho, &lambda);
        SldSolution { lambda, residual }
    }

    /// `‖dρ − Λ∘ρ‖₁` for any Hermitian `Λ`.
    pub fn residual(&self, drho: &CMatrix, lambda: &CMatrix) -> f64 {
        let jordan = (cmul(lambda, &self.rho) + cmul(&self.rho, lambda)) * Complex64::new(0.5, 0.0);
        trace_norm(&(drho - jordan))
    }

    /// `J_μν = Σ_ab 2 Re(dμ_ab dν_ab*) / (p_a + p_b)`.
    pub fn qfi(&self, drho: &[CMatrix]) -> DMatrix<f64> {
        let rotated: Vec<CMatrix> = drho.iter().map(|m| self.rotate(&hermitian_part(m))).collect();
        let d = self.p.len();
        let k = drho.len();
        let mut j = DMatrix::zeros(k, k);
        for b in 0..d {
            for a in 0..d {
                let Some(s) = self.weight(a, b) else { continue };
                for mu in 0..k {
                    for nu in mu..k {
                        let v = 2.0 * (rotated[mu][(a, b)] * rotated[nu][(a, b)].conj()).re / s;
                        j[(mu, nu)] += v;
                    }
                }
            }
        }
        for mu in 0..k {
            for nu in 0..mu {
                j[(mu, nu)] = j[(nu, mu)];
            }
        }
        j
    }
}

pub fn sld_fock(rho: &FockDensity, drho: &CMatrix) -> SldSolution {
    SldSolver::new(rho).solve(drho)
}

pub fn qfi_fock(rho: &FockDensity, drho: &[CMatrix]) -> DMatrix<f64> {
    SldSolver::new(rho).qfi(drho)
}

/// Root fidelity `tr√(√ρ σ √ρ)`, evaluated on the support of `ρ`.
pub fn fidelity_fock(rho: &FockDensity, sigma: &FockDensity) -> f64 {
    SldSolver::new(rho).fidelity(sigma)
}

impl SldSolver {
    /// [`fidelity_fock`] with this solver's `ρ` in the first slot.
    pub fn fidelity(&self, sigma: &FockDensity) -> f64 {
        let pmax = self.p.max();
        let support: Vec<usize> = (0..self.p.len()).filter(|&a| self.p[a] > SUPPORT_THRESHOLD * pmax.max(1.0)).collect();
        let vs = self.v.select_columns(&support);
        let sq: Vec<f64> = support.iter().map(|&a| self.p[a].sqrt()).collect();
        let inner = cmul(&cmul(&vs.adjoint(), &hermitian_part(&sigma.matrix)), &vs);
        let r = support.len();
        let m = CMatrix::from_fn(r, r, |a, b| inner[(a, b)] * (sq[a] * sq[b]));
        m.symmetric_eigenvalues().iter().map(|&x| x.max(0.0).sqrt()).sum()
    }
}
