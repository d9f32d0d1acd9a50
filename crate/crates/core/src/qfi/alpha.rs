//! Parameter derivatives of the channel as quadratic superoperators
//! `𝒟_μρ = α_{μ,ij}(χ^i ρ χ^j − (χ^j χ^i)∘ρ)` over `χ = (a1, a1†, a2, a2†, …)`,
//! so that `∂_μ ρ = 𝒟_μ ρ` holds on the channel output.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::{self, ChannelPoint, Param, ParameterIndex};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, I};

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaCoefficients {
    pub param: ParameterIndex,
    /// In the ladder basis `χ`.
    pub alpha: CMatrix,
    /// In the quadrature basis: `α̃ = conj(H) α H†`.
    pub alpha_tilde: CMatrix,
}

/// The unitary `H` with `R = Hχ`.
pub fn ladder_to_quadrature(n_modes: usize) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut h = CMatrix::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        h[(2 * k, 2 * k)] = Complex64::new(s, 0.0);
        h[(2 * k, 2 * k + 1)] = Complex64::new(s, 0.0);
        h[(2 * k + 1, 2 * k)] = Complex64::new(0.0, -s);
        h[(2 * k + 1, 2 * k + 1)] = Complex64::new(0.0, s);
    }
    h
}

/// `α̃_{ij} = α_{i'j'} H†_{i'i} H†_{j'j}`.
pub fn to_quadrature(alpha: &CMatrix) -> CMatrix {
    let h = ladder_to_quadrature(alpha.nrows() / 2);
    h.conjugate() * alpha * h.adjoint()
}

/// The 2×2 ladder-basis block of one parameter (index 0 = a, 1 = a†).
pub fn mode_block(p: Param, m: &channel::ModeParams) -> [[Complex64; 2]; 2] {
    let z = Complex64::new(0.0, 0.0);
    // ∂_N n̄ = 1 − e^{−γ} for the output photon number.
    let g = -(-m.gamma).exp_m1();
    let c = |x: f64| Complex64::new(x, 0.0);
    match p {
        Param::N => [[z, c(g)], [c(g), z]],
        Param::ReM => [[c(g), z], [z, c(g)]],
        Param::ImM => [[c(g) / I, z], [z, -c(g) / I]],
        Param::Gamma => {
            let mm = Complex64::new(m.re_m, m.im_m);
            [[mm.conj(), c(m.n + 1.0)], [c(m.n), mm]]
        }
    }
}

pub fn alpha_for(x: &ChannelPoint, p: ParameterIndex) -> Result<AlphaCoefficients> {
    let total = x.total_modes();
    let Some(m) = x.modes.get(p.mode) else {
        return Err(Error::BadModeIndex { index: p.mode, n_modes: x.channel_modes() });
    };
    let b = mode_block(p.which, m);
    let mut alpha = CMatrix::zeros(2 * total, 2 * total);
    for (r, row) in b.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            alpha[(2 * p.mode + r, 2 * p.mode + c)] = *v;
        }
    }
    let alpha_tilde = to_quadrature(&alpha);
    Ok(AlphaCoefficients { param: p, alpha, alpha_tilde })
}

/// One entry per channel-mode parameter, in flat order.
pub fn alpha_coeffs(x: &ChannelPoint) -> Result<Vec<AlphaCoefficients>> {
    let v = channel::validate(x);
    if !v.is_empty() {
        return Err(Error::InvalidChannel(v));
    }
    x.parameters().into_iter().map(|p| alpha_for(x, p)).collect()
}

/// Coefficients in new coordinates `X = Δ X'`: `α̃'_ν = Σ_μ α̃_μ Δ_{μν}`.
pub fn reparametrize(alpha_tilde: &[CMatrix], delta: &DMatrix<f64>) -> Vec<CMatrix> {
    (0..delta.ncols())
        .map(|nu| {
            alpha_tilde
                .iter()
                .enumerate()
                .fold(CMatrix::zeros(alpha_tilde[0].nrows(), alpha_tilde[0].ncols()), |acc, (mu, a)| {
                    acc + a * Complex64::new(delta[(mu, nu)], 0.0)
                })
        })
        .collect()
}
