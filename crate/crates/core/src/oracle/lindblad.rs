//! `dρ/dt = 𝒢(X)ρ` on the truncated space, integrated over unit time with
//! Dormand-Prince 5(4).
//!
//! The generator is applied element by element: every ladder product is at
//! most two levels away from the diagonal, so a right-hand side costs O(D²)
//! rather than the O(D³) of dense products.

use num_complex::Complex64;

use super::{FockDensity, FockSpace, TRACE_TOL};
use crate::channel::{self, ChannelPoint};
use crate::error::{Error, Result};
use crate::linalg::CMatrix;

/// Local absolute error per step.
pub const LINDBLAD_TOL: f64 = 1e-10;
const MIN_STEP: f64 = 1e-14;
const MAX_STEPS: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Adaptive,
    /// Replays the given step sizes, which must sum to one.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct LindbladRun {
    pub rho: FockDensity,
    /// Accepted step sizes, reusable as [`Schedule::Fixed`].
    pub steps: Vec<f64>,
    pub rejected: usize,
}

struct ModeTerm {
    stride: usize,
    /// γ/2 · (N, N+1, M).
    n: f64,
    n1: f64,
    m: Complex64,
}

struct Generator {
    dim: usize,
    cutoff: usize,
    /// `occ[k][i]` is the occupation of mode `k` in basis state `i`.
    occ: Vec<Vec<usize>>,
    terms: Vec<ModeTerm>,
    sq: Vec<f64>,
}

impl Generator {
    fn new(x: &ChannelPoint, space: FockSpace) -> Self {
        let terms = x
            .modes
            .iter()
            .enumerate()
            .filter(|(_, m)| m.gamma != 0.0)
            .map(|(k, m)| ModeTerm {
                stride: space.stride(k),
                n: 0.5 * m.gamma * m.n,
                n1: 0.5 * m.gamma * (m.n + 1.0),
                m: Complex64::new(m.re_m, m.im_m) * (0.5 * m.gamma),
            })
            .collect::<Vec<_>>();
        let occ = x
            .modes
            .iter()
            .enumerate()
            .filter(|(_, m)| m.gamma != 0.0)
            .map(|(k, _)| (0..space.dim()).map(|i| space.occupation(i, k)).collect())
            .collect();
        let sq = (0..space.cutoff + 1).map(|n| (n as f64).sqrt()).collect();
        Self { dim: space.dim(), cutoff: space.cutoff, occ, terms, sq }
    }

    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// `out = 𝒢 rho` for Hermitian `rho` in column-major order.
    fn apply(&self, rho: &[Complex64], out: &mut [Complex64]) {
        let d = self.dim;
        let c = self.cutoff;
        let sq = &self.sq;
        out.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for (t, occ) in self.terms.iter().zip(&self.occ) {
            let s = t.stride;
            let mc = t.m.conj();
            for j in 0..d {
                let nj = occ[j];
                let col = j * d;
                let tj = if nj + 1 < c { (nj + 1) as f64 } else { 0.0 };
                // 𝒢 preserves hermiticity: fill the upper triangle, mirror below.
                for i in 0..=j {
                    let ni = occ[i];
                    let ti = if ni + 1 < c { (ni + 1) as f64 } else { 0.0 };
                    let r = rho[i + col];
                    // N (2 a†ρa − {aa†, ρ})
                    let mut up = -r * (ti + tj);
                    if ni >= 1 && nj >= 1 {
                        up += rho[(i - s) + (j - s) * d] * (2.0 * sq[ni] * sq[nj]);
                    }
                    // (N+1)(2 aρa† − {a†a, ρ})
                    let mut down = -r * ((ni + nj) as f64);
                    if ni + 1 < c && nj + 1 < c {
                        down += rho[(i + s) + (j + s) * d] * (2.0 * sq[ni + 1] * sq[nj + 1]);
                    }
                    let mut acc = up * t.n + down * t.n1;
                    if t.m.norm_sqr() != 0.0 {
                        // M* (2 aρa − a²ρ − ρa²)
                        let mut dm = Complex64::new(0.0, 0.0);
                        if ni + 1 < c && nj >= 1 {
                            dm += rho[(i + s) + (j - s) * d] * (2.0 * sq[ni + 1] * sq[nj]);
                        }
                        if ni + 2 < c {
                            dm -= rho[(i + 2 * s) + col] * (sq[ni + 1] * sq[ni + 2]);
                        }
                        if nj >= 2 {
                            dm -= rho[i + (j - 2 * s) * d] * (sq[nj] * sq[nj - 1]);
                        }
                        // M (2 a†ρa† − a†²ρ − ρa†²)
                        let mut dp = Complex64::new(0.0, 0.0);
                        if ni >= 1 && nj + 1 < c {
                            dp += rho[(i - s) + (j + s) * d] * (2.0 * sq[ni] * sq[nj + 1]);
                        }
                        if ni >= 2 {
                            dp -= rho[(i - 2 * s) + col] * (sq[ni] * sq[ni - 1]);
                        }
                        if nj + 2 < c {
                            dp -= rho[i + (j + 2 * s) * d] * (sq[nj + 1] * sq[nj + 2]);
                        }
                        acc += dm * mc + dp * t.m;
                    }
                    out[i + col] += acc;
                }
            }
        }
        for j in 0..d {
            out[j + j * d].im = 0.0;
            for i in 0..j {
                out[j + i * d] = out[i + j * d].conj();
            }
        }
    }
}

// Dormand-Prince tableau; the generator is time independent, so the nodes
// are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Stepper {
    k: Vec<Vec<Complex64>>,
    stage: Vec<Complex64>,
}

impl Stepper {
    fn new(len: usize) -> Self {
        Self { k: vec![vec![Complex64::new(0.0, 0.0); len]; 7], stage: vec![Complex64::new(0.0, 0.0); len] }
    }

    /// One step from `y` with `k[0] = 𝒢y` already filled. Writes the fifth
    /// order solution to `next` and returns the max-norm error estimate.
    fn step(&mut self, g: &Generator, y: &[Complex64], h: f64, next: &mut [Complex64]) -> f64 {
        for s in 1..7 {
            for (idx, out) in self.stage.iter_mut().enumerate() {
                let mut acc = y[idx];
                for (r, a) in A[s].iter().enumerate().take(s) {
                    if *a != 0.0 {
                        acc += self.k[r][idx] * (h * a);
                    }
                }
                *out = acc;
            }
            g.apply(&self.stage, &mut self.k[s]);
        }
        // Stage 6 was evaluated at the fifth-order solution.
        next.copy_from_slice(&self.stage);
        let mut err = 0.0f64;
        for idx in 0..y.len() {
            let mut e = Complex64::new(0.0, 0.0);
            for s in 0..7 {
                e += self.k[s][idx] * (B5[s] - B4[s]);
            }
            err = err.max(e.norm() * h);
        }
        err
    }
}

fn check_modes(x: &ChannelPoint, space: FockSpace) -> Result<()> {
    let v = channel::validate(x);
    if !v.is_empty() {
        return Err(Error::InvalidChannel(v));
    }
    if x.total_modes() != space.modes {
        return Err(Error::ModeMismatch { expected: x.total_modes(), found: space.modes });
    }
    Ok(())
}

/// Population on basis states with some mode at the top level.
fn edge_population(rho: &FockDensity) -> f64 {
    let sp = rho.space;
    (0..sp.dim())
        .filter(|&i| (0..sp.modes).any(|k| sp.occupation(i, k) + 1 == sp.cutoff))
        .map(|i| rho.matrix[(i, i)].re.abs())
        .sum()
}

/// Integrates without validating `x`, for finite differences that may step
/// just outside the valid region.
pub(crate) fn integrate_unchecked(x: &ChannelPoint, rho: &FockDensity, schedule: &Schedule) -> Result<LindbladRun> {
    let space = rho.space;
    let g = Generator::new(x, space);
    if g.is_zero() {
        return Ok(LindbladRun { rho: rho.clone(), steps: vec![1.0], rejected: 0 });
    }
    let len = space.dim() * space.dim();
    let mut y: Vec<Complex64> = rho.matrix.as_slice().to_vec();
    let mut next = vec![Complex64::new(0.0, 0.0); len];
    let mut st = Stepper::new(len);
    let mut steps = Vec::new();
    let mut rejected = 0;
    g.apply(&y, &mut st.k[0]);

    match schedule {
        Schedule::Fixed(hs) => {
            for &h in hs {
                st.step(&g, &y, h, &mut next);
                std::mem::swap(&mut y, &mut next);
                st.k.swap(0, 6);
                steps.push(h);
            }
        }
        Schedule::Adaptive => {
            let rate: f64 = x.modes.iter().map(|m| m.gamma * (2.0 * m.n + 1.0)).sum();
            let mut h = (0.1 / (rate * space.cutoff as f64)).min(1.0);
            let mut t = 0.0;
            while t < 1.0 {
                if steps.len() + rejected > MAX_STEPS || h < MIN_STEP {
                    return Err(Error::StiffnessFailure { t });
                }
                let last = t + h >= 1.0 - 1e-12;
                let hh = if last { 1.0 - t } else { h };
                let err = st.step(&g, &y, hh, &mut next) / LINDBLAD_TOL;
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if err <= 1.0 {
                    std::mem::swap(&mut y, &mut next);
                    st.k.swap(0, 6);
                    steps.push(hh);
                    t = if last { 1.0 } else { t + hh };
                    h = hh * factor;
                } else {
                    rejected += 1;
                    h = hh * factor;
                }
            }
        }
    }
    let m = CMatrix::from_column_slice(space.dim(), space.dim(), &y);
    let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
    Ok(LindbladRun { rho: FockDensity::new(space, m), steps, rejected })
}

pub fn lindblad_integrate(x: &ChannelPoint, rho: &FockDensity, schedule: &Schedule) -> Result<LindbladRun> {
    check_modes(x, rho.space)?;
    let run = integrate_unchecked(x, rho, schedule)?;
    let edge = edge_population(&run.rho);
    if edge > TRACE_TOL {
        return Err(Error::CutoffTooSmall { deficit: edge, tolerance: TRACE_TOL });
    }
    Ok(run)
}

pub fn lindblad_apply(x: &ChannelPoint, rho: &FockDensity) -> Result<FockDensity> {
    Ok(lindblad_integrate(x, rho, &Schedule::Adaptive)?.rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::GaussianState;
    use crate::oracle::{state_to_fock, TruncatedOps};

    #[test]
    fn zero_coupling_is_identity() {
        let rho = state_to_fock(&GaussianState::thermal(&[1.5]).unwrap(), 16).unwrap();
        let x = ChannelPoint::single(0.0, 1.0, 0.0, 0.0, 0).unwrap();
        assert_eq!(lindblad_apply(&x, &rho).unwrap(), rho);
    }

    #[test]
    fn vacuum_heats_to_closed_form() {
        let rho = state_to_fock(&GaussianState::vacuum(1), 24).unwrap();
        let x = ChannelPoint::single(0.1, 1.0, 0.0, 0.0, 0).unwrap();
        let out = lindblad_apply(&x, &rho).unwrap();
        let n = out.expect(&TruncatedOps::new(out.space).n[0]).re;
        assert!((n - (1.0 - (-0.1f64).exp())).abs() < 1e-9, "{n}");
        assert!(out.trace_deficit.abs() < 1e-9);
    }

    #[test]
    fn fixed_schedule_replays() {
        let rho = state_to_fock(&GaussianState::thermal(&[1.4]).unwrap(), 16).unwrap();
        let x = ChannelPoint::single(0.3, 0.4, 0.1, -0.05, 0).unwrap();
        let run = lindblad_integrate(&x, &rho, &Schedule::Adaptive).unwrap();
        let again = lindblad_integrate(&x, &rho, &Schedule::Fixed(run.steps.clone())).unwrap();
        assert_eq!(run.rho, again.rho);
    }
}
