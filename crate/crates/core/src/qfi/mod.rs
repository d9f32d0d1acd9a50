//! Closed-form SLDs and quantum Fisher information of channel outputs.

pub mod alpha;
pub mod tensors;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{self, ChannelPoint, ParameterIndex};
use crate::error::{Error, Result};
use crate::gaussian::{self, GaussianState};
use crate::linalg::{self, omega, CMatrix};

pub use alpha::{alpha_coeffs, AlphaCoefficients};
pub use tensors::{cov_tensor, f_tensor, l_tensors, LTensors};

/// Relative tolerance on the imaginary part left by complex contractions.
pub const REAL_TOL: f64 = 1e-8;
/// Default temperature used to lift pure modes.
pub const DEFAULT_EPSILON: f64 = 1e-6;

/// `Λ = c + lᵀR̃ + R̃ᵀ q R̃` with `R̃ = R − ⟨R⟩` and symmetrized products.
#[derive(Debug, Clone, PartialEq)]
pub struct SldForm {
    pub param: Option<ParameterIndex>,
    pub constant: f64,
    pub linear: DVector<f64>,
    pub quadratic: DMatrix<f64>,
    /// Largest discarded imaginary part, relative to the form's scale.
    pub imag_residue: f64,
}

impl SldForm {
    /// `⟨Λ⟩ = c + tr(qΣ)`, zero for a genuine SLD.
    pub fn expectation(&self, cov: &DMatrix<f64>) -> f64 {
        self.constant + (&self.quadratic * cov).trace()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QfiMatrix {
    pub labels: Vec<ParameterIndex>,
    pub matrix: DMatrix<f64>,
}

impl QfiMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::min_sym_eigenvalue(&self.matrix)
    }

    /// The block over `params`, in the order given.
    pub fn select(&self, params: &[ParameterIndex]) -> Result<QfiMatrix> {
        let idx = params
            .iter()
            .map(|p| {
                self.labels.iter().position(|l| l == p).ok_or(Error::DimensionMismatch {
                    expected: self.labels.len(),
                    found: p.flat(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(QfiMatrix {
            labels: params.to_vec(),
            matrix: DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.matrix[(idx[i], idx[j])]),
        })
    }
}

fn real_part(z: Complex64, scale: f64, worst: &mut f64) -> f64 {
    *worst = worst.max(z.im.abs() / scale.max(1.0));
    z.re
}

/// SLD forms for derivatives `∂_μρ = 𝒟_μρ` of a state with the given moments.
pub fn sld_from_alpha(state: &GaussianState, alpha_tilde: &[CMatrix]) -> Result<Vec<SldForm>> {
    let lt = l_tensors(state.cov(), state.mean())?;
    alpha_tilde.iter().map(|a| sld_from_tensors(&lt, a)).collect()
}

fn sld_from_tensors(lt: &LTensors, a: &CMatrix) -> Result<SldForm> {
    let d = lt.dim();
    let va = linalg::vec_row_major(a);
    let w = linalg::vec_row_major(&linalg::to_complex(&omega(d / 2)));
    let c = va.dot(&(&lt.l0 * w));
    let l = lt.l1.transpose() * &va;
    let q = linalg::unvec_row_major(&(lt.l2.transpose() * &va), d);
    let q = (&q + q.transpose()) * Complex64::new(0.5, 0.0);

    let scale = c.norm().max(linalg::cmax_abs(&q)).max(l.iter().fold(0.0f64, |m, z| m.max(z.norm())));
    let mut worst = 0.0;
    let constant = real_part(c, scale, &mut worst);
    let linear = l.map(|z| real_part(z, scale, &mut worst));
    let quadratic = q.map(|z| real_part(z, scale, &mut worst));
    if worst > REAL_TOL {
        return Err(Error::ImaginaryResidue { residue: worst });
    }
    Ok(SldForm { param: None, constant, linear, quadratic, imag_residue: worst })
}

/// QFI of the family whose derivatives at `state` are `𝒟_μ` with the given
/// quadrature-basis coefficients.
pub fn qfi_from_alpha(state: &GaussianState, alpha_tilde: &[CMatrix]) -> Result<DMatrix<f64>> {
    let lt = l_tensors(state.cov(), state.mean())?;
    qfi_from_tensors(&lt, state, alpha_tilde)
}

fn qfi_from_tensors(lt: &LTensors, state: &GaussianState, alpha_tilde: &[CMatrix]) -> Result<DMatrix<f64>> {
    let d = lt.dim();
    let sigma = linalg::to_complex(state.cov());
    let w = linalg::to_complex(&omega(d / 2));
    let vas: Vec<_> = alpha_tilde.iter().map(linalg::vec_row_major).collect();
    let lin: Vec<_> = vas.iter().map(|va| lt.l1.transpose() * va).collect();
    let quad: Vec<_> = vas.iter().map(|va| lt.l2.transpose() * va).collect();
    let dq: Vec<CMatrix> = quad
        .iter()
        .map(|q| linalg::unvec_row_major(&(lt.d.transpose() * q), d))
        .collect();
    // Ω(Q + Qᵀ)Ωᵀ contracted against Dᵀ-transformed partners.
    let wq: Vec<CMatrix> = quad
        .iter()
        .map(|q| {
            let qm = linalg::unvec_row_major(q, d);
            &w * (&qm + qm.transpose()) * w.transpose()
        })
        .collect();

    let p = alpha_tilde.len();
    let mut out = DMatrix::zeros(p, p);
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    let mut raw = CMatrix::zeros(p, p);
    for mu in 0..p {
        for nu in 0..p {
            let first = lin[mu].dot(&(&sigma * &lin[nu]));
            let second = dq[mu].component_mul(&wq[nu]).sum();
            raw[(mu, nu)] = first + second;
            scale = scale.max(raw[(mu, nu)].norm());
        }
    }
    for mu in 0..p {
        for nu in 0..p {
            out[(mu, nu)] = real_part(raw[(mu, nu)], scale, &mut worst);
        }
    }
    if worst > REAL_TOL {
        return Err(Error::ImaginaryResidue { residue: worst });
    }
    Ok(linalg::symmetrize(&out))
}

/// SLDs of every channel-mode parameter at the output of `x` on `probe`.
pub fn sld(x: &ChannelPoint, probe: &GaussianState) -> Result<Vec<SldForm>> {
    let out = channel::apply(x, probe)?;
    let alphas = alpha_coeffs(x)?;
    let lt = l_tensors(out.cov(), out.mean())?;
    alphas
        .iter()
        .map(|a| {
            let mut f = sld_from_tensors(&lt, &a.alpha_tilde)?;
            f.param = Some(a.param);
            Ok(f)
        })
        .collect()
}

/// QFI over every channel-mode parameter of `x`, probed with `probe`.
pub fn qfi(x: &ChannelPoint, probe: &GaussianState) -> Result<QfiMatrix> {
    let out = channel::apply(x, probe)?;
    let alphas = alpha_coeffs(x)?;
    let at: Vec<CMatrix> = alphas.iter().map(|a| a.alpha_tilde.clone()).collect();
    let matrix = qfi_from_alpha(&out, &at)?;
    Ok(QfiMatrix { labels: x.parameters(), matrix })
}

/// Raises every symplectic temperature below `1 + eps` to `1 + eps`.
pub fn regularize_pure(probe: &GaussianState, eps: f64) -> Result<GaussianState> {
    let w = probe.williamson()?;
    if w.nu.iter().all(|&nu| nu >= 1.0 + eps) {
        return Ok(probe.clone());
    }
    let nu: Vec<f64> = w.nu.iter().map(|&nu| nu.max(1.0 + eps)).collect();
    let cov = &w.s * gaussian::thermal_cov(&nu) * w.s.transpose();
    GaussianState::new(probe.mean().clone(), linalg::symmetrize(&cov))
}

/// [`qfi`], retrying on a regularized probe when the output has a pure mode.
/// Returns the temperature used, if any.
pub fn qfi_auto(x: &ChannelPoint, probe: &GaussianState, eps: f64) -> Result<(QfiMatrix, Option<f64>)> {
    match qfi(x, probe) {
        Ok(j) => Ok((j, None)),
        Err(Error::SingularPureMode { .. }) => {
            let reg = regularize_pure(probe, eps)?;
            Ok((qfi(x, &reg)?, Some(eps)))
        }
        Err(e) => Err(e),
    }
}

/// As [`qfi_auto`] for SLDs.
pub fn sld_auto(x: &ChannelPoint, probe: &GaussianState, eps: f64) -> Result<(Vec<SldForm>, Option<f64>)> {
    match sld(x, probe) {
        Ok(s) => Ok((s, None)),
        Err(Error::SingularPureMode { .. }) => {
            let reg = regularize_pure(probe, eps)?;
            Ok((sld(x, &reg)?, Some(eps)))
        }
        Err(e) => Err(e),
    }
}

/// QFI at three regularization temperatures, extrapolated to zero with the
/// quadratic through the three points.
pub fn qfi_extrapolated(x: &ChannelPoint, probe: &GaussianState, eps: [f64; 3]) -> Result<QfiMatrix> {
    let js = eps
        .iter()
        .map(|&e| qfi(x, &regularize_pure(probe, e)?))
        .collect::<Result<Vec<_>>>()?;
    let mut matrix = DMatrix::zeros(js[0].dim(), js[0].dim());
    for i in 0..3 {
        let mut w = 1.0;
        for j in 0..3 {
            if i != j {
                w *= eps[j] / (eps[j] - eps[i]);
            }
        }
        matrix += &js[i].matrix * w;
    }
    Ok(QfiMatrix { labels: js[0].labels.clone(), matrix })
}
