//! Oracle pipelines: derivatives of the Lindblad evolution, the QFI they
//! imply, the fidelity-Hessian route, and a fixed grid of regression cases.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::lindblad::integrate_unchecked;
use super::{lindblad_integrate, quadrature_coeff, state_to_fock, FockDensity, FockSpace, Schedule, SldSolver};
use crate::channel::{self, ChannelPoint, ParameterIndex};
use crate::error::Result;
use crate::gaussian::{self, embed, GaussianState};
use crate::linalg::CMatrix;
use crate::qfi::SldForm;

/// Central-difference step for Lindblad derivatives.
pub const FD_STEP: f64 = 1e-4;
/// Default step for [`qfi_from_fidelity_fd`].
pub const FIDELITY_STEP: f64 = 2e-2;

/// Central differences `∂_μρ` at `h` and `h/2`, combined by Richardson
/// extrapolation. All runs replay the step sizes of the unperturbed one.
pub fn fd_derivatives(
    x: &ChannelPoint,
    input: &FockDensity,
    params: &[ParameterIndex],
    step: f64,
) -> Result<(FockDensity, Vec<CMatrix>)> {
    let base = lindblad_integrate(x, input, &Schedule::Adaptive)?;
    let frozen = Schedule::Fixed(base.steps.clone());
    let run = |p: ParameterIndex, h: f64| -> Result<CMatrix> {
        let v = x.get(p);
        let plus = integrate_unchecked(&x.with_param(p, v + h), input, &frozen)?.rho.matrix;
        let minus = integrate_unchecked(&x.with_param(p, v - h), input, &frozen)?.rho.matrix;
        Ok((plus - minus) * Complex64::new(0.5 / h, 0.0))
    };
    let ders = params
        .iter()
        .map(|&p| {
            let coarse = run(p, step)?;
            let fine = run(p, 0.5 * step)?;
            Ok((fine * Complex64::new(4.0, 0.0) - coarse) * Complex64::new(1.0 / 3.0, 0.0))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((base.rho, ders))
}

#[derive(Debug, Clone)]
pub struct OracleQfi {
    pub labels: Vec<ParameterIndex>,
    pub matrix: DMatrix<f64>,
    /// Channel output in Fock space.
    pub output: FockDensity,
    pub derivatives: Vec<CMatrix>,
}

impl OracleQfi {
    pub fn solver(&self) -> SldSolver {
        SldSolver::new(&self.output)
    }
}

/// Probe → Fock → Lindblad evolution → finite differences → eigenbasis QFI.
pub fn oracle_qfi(x: &ChannelPoint, probe: &GaussianState, cutoff: usize) -> Result<OracleQfi> {
    let input = state_to_fock(probe, cutoff)?;
    let labels = x.parameters();
    let (output, derivatives) = fd_derivatives(x, &input, &labels, FD_STEP)?;
    let matrix = SldSolver::new(&output).qfi(&derivatives);
    Ok(OracleQfi { labels, matrix, output, derivatives })
}

/// `Λ = c + Σ l_i R̃_i + Σ q_ij R̃_i R̃_j` with `R̃ = R − mean`, assembled
/// from ladder strings on the truncated space.
pub fn sld_form_operator(form: &SldForm, mean: &DVector<f64>, space: FockSpace) -> CMatrix {
    let d = 2 * space.modes;
    let ladder = space.ladder_basis();
    // Λ = c' + Σ_i l'_i R_i + Σ_ij q_ij R_i R_j after expanding R̃ = R − m.
    let qm = &form.quadratic * mean;
    let lin = &form.linear - &qm * 2.0;
    let constant = form.constant - form.linear.dot(mean) + mean.dot(&qm);
    let u: Vec<Complex64> = (0..d).map(|x| (0..d).map(|i| quadrature_coeff(i, x) * lin[i]).sum()).collect();
    let w = DMatrix::from_fn(d, d, |x, y| {
        let mut z = Complex64::new(0.0, 0.0);
        for i in 0..d {
            for j in 0..d {
                z += form.quadratic[(i, j)] * quadrature_coeff(i, x) * quadrature_coeff(j, y);
            }
        }
        z
    });
    let n = space.dim();
    let mut out = CMatrix::identity(n, n) * Complex64::new(constant, 0.0);
    for col in 0..n {
        for x in 0..d {
            if let Some((row, c)) = space.ladder(col, &[ladder[x]]) {
                out[(row, col)] += u[x] * c;
            }
            for y in 0..d {
                if let Some((row, c)) = space.ladder(col, &[ladder[x], ladder[y]]) {
                    out[(row, col)] += w[(x, y)] * c;
                }
            }
        }
    }
    (&out + out.adjoint()) * Complex64::new(0.5, 0.0)
}

/// `‖P(dρ − Λ∘ρ)P‖₁` with `P` projecting onto occupations below `levels`
/// in every mode. The truncated generator distorts the oracle state near the
/// top levels, so externally supplied SLDs are compared on the inner block.
pub fn residual_below(rho: &FockDensity, drho: &CMatrix, lambda: &CMatrix, levels: usize) -> f64 {
    let sp = rho.space;
    let inner: Vec<usize> = (0..sp.dim()).filter(|&i| (0..sp.modes).all(|k| sp.occupation(i, k) < levels)).collect();
    let jordan = (crate::linalg::cmul(lambda, &rho.matrix) + crate::linalg::cmul(&rho.matrix, lambda)) * Complex64::new(0.5, 0.0);
    let diff = drho - jordan;
    let sub = CMatrix::from_fn(inner.len(), inner.len(), |a, b| diff[(inner[a], inner[b])]);
    super::trace_norm(&sub)
}

/// QFI from the Bures expansion `1 − F(ρ_X, ρ_{X+δ}) ≈ ⅛ δᵀ J δ`, with
/// symmetric second differences at `h` and `h/2` and Richardson extrapolation.
/// States are prepared from the covariance-level channel output, so this path
/// shares nothing with the Lindblad integration.
pub fn qfi_from_fidelity_fd(
    x: &ChannelPoint,
    probe: &GaussianState,
    params: &[ParameterIndex],
    cutoff: usize,
    h: f64,
) -> Result<DMatrix<f64>> {
    let prepare = |y: &ChannelPoint| -> Result<FockDensity> { state_to_fock(&channel::apply_unchecked(y, probe)?, cutoff) };
    let base = SldSolver::new(&prepare(x)?);
    let k = params.len();
    let shifted = |dir: &[f64], h: f64| -> ChannelPoint {
        params.iter().zip(dir).fold(x.clone(), |y, (&p, &d)| {
            let v = y.get(p);
            y.with_param(p, v + d * h)
        })
    };
    // Σ_± (1 − F(X ± hδ)) ≈ ¼ h² δᵀJδ
    let quad = |dir: &[f64], h: f64| -> Result<f64> {
        let minus: Vec<f64> = dir.iter().map(|d| -d).collect();
        let fp = base.fidelity(&prepare(&shifted(dir, h))?);
        let fm = base.fidelity(&prepare(&shifted(&minus, h))?);
        Ok(4.0 * ((1.0 - fp) + (1.0 - fm)) / (h * h))
    };
    let rich = |dir: &[f64]| -> Result<f64> { Ok((4.0 * quad(dir, 0.5 * h)? - quad(dir, h)?) / 3.0) };
    let unit = |i: usize| -> Vec<f64> { (0..k).map(|j| if i == j { 1.0 } else { 0.0 }).collect() };
    let mut j = DMatrix::zeros(k, k);
    for i in 0..k {
        j[(i, i)] = rich(&unit(i))?;
    }
    for a in 0..k {
        for b in a + 1..k {
            let dir: Vec<f64> = (0..k).map(|i| if i == a || i == b { 1.0 } else { 0.0 }).collect();
            let v = 0.5 * (rich(&dir)? - j[(a, a)] - j[(b, b)]);
            j[(a, b)] = v;
            j[(b, a)] = v;
        }
    }
    Ok(j)
}

#[derive(Debug, Clone)]
pub struct RegressionCase {
    pub name: String,
    pub x: ChannelPoint,
    pub probe: GaussianState,
}

/// Twelve (probe, channel) pairs on one channel mode plus one ancilla, with
/// mean photon numbers small enough for a cutoff of 20.
pub fn regression_grid() -> Vec<RegressionCase> {
    let points = [(0.2, 0.5, 0.1, 0.05), (0.3, 0.3, 0.0, 0.0), (0.1, 1.0, -0.2, 0.3)];
    let vac = GaussianState::vacuum(1);
    let tms = |sh2: f64| {
        let r = f64::asinh(f64::sqrt(sh2));
        embed(&gaussian::two_mode_squeezer(r), &[0, 1], 2)
    };
    let probes: Vec<(&str, GaussianState)> = vec![
        ("thermal", GaussianState::thermal(&[1.6]).expect("valid").tensor(&vac)),
        ("coherent", GaussianState::coherent(Complex64::from_polar(0.5, 0.3)).tensor(&vac)),
        ("tms", GaussianState::vacuum(2).transformed(&tms(0.25))),
        (
            "displaced-squeezed-thermal",
            GaussianState::thermal(&[1.2, 1.1])
                .expect("valid")
                .transformed(&tms(0.1))
                .transformed(&embed(&gaussian::squeezer(0.15), &[0], 2))
                .displaced(&DVector::from_vec(vec![0.3, -0.2, 0.0, 0.1])),
        ),
    ];
    let mut out = Vec::new();
    for (g, n, re, im) in points {
        for (name, probe) in &probes {
            out.push(RegressionCase {
                name: format!("{name} @ γ={g} N={n} M={re}{im:+}i"),
                x: ChannelPoint::single(g, n, re, im, 1).expect("grid points are valid"),
                probe: probe.clone(),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shape() {
        let g = regression_grid();
        assert_eq!(g.len(), 12);
        for c in &g {
            assert_eq!(c.probe.n_modes(), 2);
            assert!(gaussian::mean_photon(&c.probe, &[0, 1]).unwrap() < 0.8);
        }
    }

    #[test]
    fn sld_operator_of_number_form() {
        // Λ = (Q² + P²)/2 − ½ = a†a on a zero-mean state
        let form = SldForm {
            param: None,
            constant: -0.5,
            linear: DVector::zeros(2),
            quadratic: DMatrix::identity(2, 2) * 0.5,
            imag_residue: 0.0,
        };
        let sp = FockSpace::new(8, 1);
        let op = sld_form_operator(&form, &DVector::zeros(2), sp);
        for n in 0..7 {
            assert!((op[(n, n)].re - n as f64).abs() < 1e-12);
        }
    }
}
