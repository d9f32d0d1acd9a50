//! Gaussian states as first and second moments of the quadratures
//! `R = (Q1, P1, Q2, P2, …)`, with `Q = (a + a†)/√2` and `P = i(a† − a)/√2`.
//!
//! Covariance matrices follow the symmetrized convention
//! `Σ^{ij} = ⟨R^i ∘ R^j⟩ − ⟨R^i⟩⟨R^j⟩`, so the vacuum has `Σ = ½·1`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, omega, CMatrix, I};

/// Absolute tolerance on eigenvalues in the physicality checks.
pub const PHYSICAL_TOL: f64 = 1e-10;
/// Relative tolerance on `Σ − Σᵀ`.
pub const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

/// `Σ = s Σ_th sᵀ` with `Σ_th = ½ ⊕ ν_k 1₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct WilliamsonDecomposition {
    pub s: DMatrix<f64>,
    /// Symplectic temperatures in ascending order; `ν = 1` is a pure mode.
    pub nu: DVector<f64>,
}

impl WilliamsonDecomposition {
    pub fn thermal_cov(&self) -> DMatrix<f64> {
        thermal_cov(self.nu.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalityReport {
    pub physical: bool,
    /// Smallest eigenvalue of `Σ + (i/2)Ω`.
    pub worst_eigenvalue: f64,
    /// Smallest symplectic eigenvalue of `Σ` (vacuum: ½).
    pub min_symplectic: f64,
    pub asymmetry: f64,
}

impl GaussianState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = cov.nrows();
        if d == 0 || d % 2 != 0 || cov.ncols() != d {
            return Err(Error::Shape(format!(
                "covariance must be square with even dimension, got {}x{}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if mean.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: mean.len() });
        }
        if mean.iter().chain(cov.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Shape("non-finite moment".into()));
        }
        let report = check_physical(&cov);
        if report.asymmetry > SYMMETRY_TOL {
            return Err(Error::NonSymmetric { asymmetry: report.asymmetry });
        }
        if !report.physical {
            return Err(Error::NonPhysicalCovariance {
                worst: report.worst_eigenvalue.min(report.min_symplectic - 0.5),
            });
        }
        Ok(Self { mean, cov: linalg::symmetrize(&cov) })
    }

    /// Skips validation. For results that are physical by construction.
    pub(crate) fn from_parts(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self { mean, cov: linalg::symmetrize(&cov) }
    }

    pub fn vacuum(n_modes: usize) -> Self {
        Self::from_parts(DVector::zeros(2 * n_modes), DMatrix::identity(2 * n_modes, 2 * n_modes) * 0.5)
    }

    /// Product of thermal states with the given symplectic temperatures.
    pub fn thermal(nu: &[f64]) -> Result<Self> {
        Self::new(DVector::zeros(2 * nu.len()), thermal_cov(nu))
    }

    /// Single-mode coherent state `|α⟩`.
    pub fn coherent(alpha: Complex64) -> Self {
        Self::vacuum(1).displaced(&coherent_mean(alpha))
    }

    /// Single-mode squeezed vacuum with `Σ = diag(e^{2r}, e^{−2r})/2`.
    pub fn squeezed(r: f64) -> Self {
        Self::vacuum(1).transformed(&squeezer(r))
    }

    pub fn n_modes(&self) -> usize {
        self.mean.len() / 2
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// `R → sR`: mean `s·m`, covariance `sΣsᵀ`. `s` must be symplectic.
    pub fn transformed(&self, s: &DMatrix<f64>) -> Self {
        Self::from_parts(s * &self.mean, s * &self.cov * s.transpose())
    }

    pub fn displaced(&self, d: &DVector<f64>) -> Self {
        Self::from_parts(&self.mean + d, self.cov.clone())
    }

    /// Tensor product, `self` occupying the leading modes.
    pub fn tensor(&self, other: &GaussianState) -> Self {
        Self::from_parts(
            linalg::concat(&self.mean, &other.mean),
            linalg::direct_sum(&self.cov, &other.cov),
        )
    }

    pub fn williamson(&self) -> Result<WilliamsonDecomposition> {
        williamson(&self.cov)
    }

    pub fn symplectic_eigenvalues(&self) -> Vec<f64> {
        symplectic_eigenvalues(&self.cov)
    }

    pub fn is_pure(&self, tol: f64) -> bool {
        self.symplectic_eigenvalues().iter().all(|d| (2.0 * d - 1.0).abs() <= tol)
    }
}

/// Quadrature mean of `|α⟩`: `(√2 Re α, √2 Im α)`.
pub fn coherent_mean(alpha: Complex64) -> DVector<f64> {
    DVector::from_vec(vec![2f64.sqrt() * alpha.re, 2f64.sqrt() * alpha.im])
}

pub fn thermal_cov(nu: &[f64]) -> DMatrix<f64> {
    let d = 2 * nu.len();
    DMatrix::from_fn(d, d, |i, j| if i == j { 0.5 * nu[i / 2] } else { 0.0 })
}

/// Single-mode squeezer `diag(e^r, e^{−r})`.
pub fn squeezer(r: f64) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_vec(vec![r.exp(), (-r).exp()]))
}

/// Phase rotation `a → e^{−iθ} a` on one mode.
pub fn rotation(theta: f64) -> DMatrix<f64> {
    let (s, c) = theta.sin_cos();
    DMatrix::from_row_slice(2, 2, &[c, s, -s, c])
}

/// Two-mode squeezer acting on modes `(0, 1)`: maps vacuum to the
/// two-mode squeezed vacuum with parameter `r`.
pub fn two_mode_squeezer(r: f64) -> DMatrix<f64> {
    let (c, s) = (r.cosh(), r.sinh());
    DMatrix::from_row_slice(
        4,
        4,
        &[
            c, 0.0, s, 0.0, //
            0.0, c, 0.0, -s, //
            s, 0.0, c, 0.0, //
            0.0, -s, 0.0, c,
        ],
    )
}

/// Embeds a matrix acting on the listed modes into an `n_modes` identity.
pub fn embed(s: &DMatrix<f64>, modes: &[usize], n_modes: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(2 * n_modes, 2 * n_modes);
    for (a, &ma) in modes.iter().enumerate() {
        for (b, &mb) in modes.iter().enumerate() {
            for p in 0..2 {
                for q in 0..2 {
                    out[(2 * ma + p, 2 * mb + q)] = s[(2 * a + p, 2 * b + q)];
                }
            }
        }
    }
    out
}

/// `‖sΩsᵀ − Ω‖_max`.
pub fn symplectic_defect(s: &DMatrix<f64>) -> f64 {
    let w = omega(s.nrows() / 2);
    linalg::max_abs(&(s * &w * s.transpose() - w))
}

pub fn two_mode_squeezed(r: f64) -> GaussianState {
    GaussianState::vacuum(2).transformed(&two_mode_squeezer(r))
}

/// Symplectic eigenvalues `d_k` of `Σ` (vacuum: ½) in ascending order, from
/// the Hermitian matrix `iΣ^{1/2}ΩΣ^{1/2}` whose spectrum is `±d_k`.
pub fn symplectic_eigenvalues(cov: &DMatrix<f64>) -> Vec<f64> {
    let n = cov.nrows() / 2;
    let root = linalg::sqrt_psd(&linalg::symmetrize(cov));
    let k = linalg::to_complex(&(&root * omega(n) * &root)) * I;
    let mut ev: Vec<f64> = k.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    let mut d: Vec<f64> = ev[..n].to_vec();
    d.reverse();
    d
}

pub fn check_physical(cov: &DMatrix<f64>) -> PhysicalityReport {
    let d = cov.nrows();
    if d == 0 || d % 2 != 0 || cov.ncols() != d || cov.iter().any(|x| !x.is_finite()) {
        return PhysicalityReport {
            physical: false,
            worst_eigenvalue: f64::NAN,
            min_symplectic: f64::NAN,
            asymmetry: f64::NAN,
        };
    }
    let scale = linalg::max_abs(cov).max(1.0);
    let asymmetry = linalg::max_abs(&(cov - cov.transpose())) / scale;
    let sym = linalg::symmetrize(cov);
    let h: CMatrix = linalg::to_complex(&sym) + linalg::to_complex(&omega(d / 2)) * (I * 0.5);
    let worst = h
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |a, &x| a.min(x));
    let min_symplectic = symplectic_eigenvalues(&sym)[0];
    PhysicalityReport {
        physical: asymmetry <= SYMMETRY_TOL
            && worst >= -PHYSICAL_TOL
            && min_symplectic >= 0.5 - PHYSICAL_TOL,
        worst_eigenvalue: worst,
        min_symplectic,
        asymmetry,
    }
}

pub fn williamson(cov: &DMatrix<f64>) -> Result<WilliamsonDecomposition> {
    let report = check_physical(cov);
    if report.asymmetry.is_nan() {
        return Err(Error::Shape("covariance must be square with even dimension".into()));
    }
    if report.asymmetry > SYMMETRY_TOL {
        return Err(Error::NonSymmetric { asymmetry: report.asymmetry });
    }
    if !report.physical {
        return Err(Error::NonPhysicalCovariance {
            worst: report.worst_eigenvalue.min(report.min_symplectic - 0.5),
        });
    }
    let sigma = linalg::symmetrize(cov);
    let n = sigma.nrows() / 2;
    let root = linalg::sqrt_psd(&sigma);
    let k = linalg::to_complex(&(&root * omega(n) * &root)) * I;
    let eig = k.symmetric_eigen();

    let mut pos: Vec<usize> = (0..2 * n).filter(|&i| eig.eigenvalues[i] > 0.0).collect();
    pos.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    debug_assert_eq!(pos.len(), n);

    let mut o = DMatrix::zeros(2 * n, 2 * n);
    let mut d_inv_sqrt = DVector::zeros(2 * n);
    let mut nu = DVector::zeros(n);
    for (slot, &idx) in pos.iter().enumerate() {
        let dk = eig.eigenvalues[idx];
        let mut v: DVector<Complex64> = eig.eigenvectors.column(idx).into_owned();
        let vmax = v.iter().fold(0.0f64, |a, z| a.max(z.norm()));
        let lead = v.iter().find(|z| z.norm() > 1e-8 * vmax).copied().unwrap_or(Complex64::new(1.0, 0.0));
        // Rotate so that the leading component is i·positive.
        let phase = I * lead.conj() / lead.norm();
        v *= phase;
        let sqrt2 = 2f64.sqrt();
        for r in 0..2 * n {
            o[(r, 2 * slot)] = sqrt2 * v[r].im;
            o[(r, 2 * slot + 1)] = sqrt2 * v[r].re;
        }
        d_inv_sqrt[2 * slot] = 1.0 / dk.sqrt();
        d_inv_sqrt[2 * slot + 1] = 1.0 / dk.sqrt();
        nu[slot] = (2.0 * dk).max(1.0);
    }
    let s = &root * o * DMatrix::from_diagonal(&d_inv_sqrt);
    Ok(WilliamsonDecomposition { s, nu })
}

pub fn partial_trace(state: &GaussianState, keep: &[usize]) -> Result<GaussianState> {
    let n = state.n_modes();
    if keep.is_empty() {
        return Err(Error::Shape("partial trace must keep at least one mode".into()));
    }
    for (i, &k) in keep.iter().enumerate() {
        if k >= n || keep[..i].contains(&k) {
            return Err(Error::BadModeIndex { index: k, n_modes: n });
        }
    }
    let rows: Vec<usize> = keep.iter().flat_map(|&k| [2 * k, 2 * k + 1]).collect();
    let mean = DVector::from_iterator(rows.len(), rows.iter().map(|&r| state.mean[r]));
    let cov = DMatrix::from_fn(rows.len(), rows.len(), |i, j| state.cov[(rows[i], rows[j])]);
    Ok(GaussianState::from_parts(mean, cov))
}

/// Pure `2n`-mode state whose first `n` modes reproduce `state`. Ancilla
/// `n + k` is two-mode squeezed with Williamson mode `k` at `cosh 2r_k = ν_k`.
pub fn purify(state: &GaussianState) -> Result<GaussianState> {
    let n = state.n_modes();
    let w = state.williamson()?;
    let mut tms = DMatrix::zeros(4 * n, 4 * n);
    for k in 0..n {
        let c = w.nu[k].max(1.0);
        let s = (c * c - 1.0).sqrt();
        for (p, z) in [(0, 1.0), (1, -1.0)] {
            let (a, b) = (2 * k + p, 2 * (n + k) + p);
            tms[(a, a)] = 0.5 * c;
            tms[(b, b)] = 0.5 * c;
            tms[(a, b)] = 0.5 * s * z;
            tms[(b, a)] = 0.5 * s * z;
        }
    }
    let big_s = linalg::direct_sum(&w.s, &DMatrix::identity(2 * n, 2 * n));
    let cov = &big_s * tms * big_s.transpose();
    let mean = linalg::concat(&state.mean, &DVector::zeros(2 * n));
    Ok(GaussianState::from_parts(mean, cov))
}

/// Mean photon number `⟨Σ_k a_k†a_k⟩` over the selected modes.
pub fn mean_photon(state: &GaussianState, modes: &[usize]) -> Result<f64> {
    let n = state.n_modes();
    let mut total = 0.0;
    for &k in modes {
        if k >= n {
            return Err(Error::BadModeIndex { index: k, n_modes: n });
        }
        let (q, p) = (2 * k, 2 * k + 1);
        total += 0.5 * (state.cov[(q, q)] + state.cov[(p, p)] - 1.0)
            + 0.5 * (state.mean[q].powi(2) + state.mean[p].powi(2));
    }
    Ok(total)
}
