//! Dissipative Gaussian channels generated by
//! `𝒢 = Σ_k γ_k/2 (N_k L[a_k†] + (N_k+1) L[a_k] + M_k* D[a_k] + M_k D[a_k†])`
//! with `L[o]ρ = 2oρo† − o†oρ − ρo†o` and `D[o]ρ = 2oρo − o²ρ − ρo²`,
//! integrated for unit time.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::GaussianState;

/// Slack on the bath physicality condition `|M|² ≤ N(N+1)`.
pub const BATH_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeParams {
    pub gamma: f64,
    pub n: f64,
    #[serde(default)]
    pub re_m: f64,
    #[serde(default)]
    pub im_m: f64,
}

impl ModeParams {
    pub fn new(gamma: f64, n: f64, re_m: f64, im_m: f64) -> Self {
        Self { gamma, n, re_m, im_m }
    }

    pub fn get(&self, p: Param) -> f64 {
        match p {
            Param::Gamma => self.gamma,
            Param::N => self.n,
            Param::ReM => self.re_m,
            Param::ImM => self.im_m,
        }
    }

    fn get_mut(&mut self, p: Param) -> &mut f64 {
        match p {
            Param::Gamma => &mut self.gamma,
            Param::N => &mut self.n,
            Param::ReM => &mut self.re_m,
            Param::ImM => &mut self.im_m,
        }
    }
}

/// A point `X = ⊕_k (γ_k, N_k, Re M_k, Im M_k)` on the channel manifold,
/// extended by `ancilla_count` modes on which the channel is the identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelPoint {
    pub modes: Vec<ModeParams>,
    #[serde(default)]
    pub ancilla_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Param {
    Gamma,
    N,
    ReM,
    ImM,
}

impl Param {
    pub const ALL: [Param; 4] = [Param::Gamma, Param::N, Param::ReM, Param::ImM];

    pub fn offset(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Param::Gamma => "gamma",
            Param::N => "N",
            Param::ReM => "ReM",
            Param::ImM => "ImM",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParameterIndex {
    pub mode: usize,
    pub which: Param,
}

impl ParameterIndex {
    pub fn new(mode: usize, which: Param) -> Self {
        Self { mode, which }
    }

    /// Position in the flat parameter vector.
    pub fn flat(&self) -> usize {
        4 * self.mode + self.which.offset()
    }

    pub fn label(&self) -> String {
        format!("{}[{}]", self.which.name(), self.mode)
    }
}

impl FromStr for ParameterIndex {
    type Err = Error;

    /// Inverse of [`ParameterIndex::label`], e.g. `"ReM[1]"`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Shape(format!("bad parameter label {s:?}, expected e.g. \"gamma[0]\""));
        let (name, rest) = s.split_once('[').ok_or_else(bad)?;
        let mode = rest.strip_suffix(']').ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let which = Param::ALL.into_iter().find(|p| p.name() == name).ok_or_else(bad)?;
        Ok(Self::new(mode, which))
    }
}

impl fmt::Display for ParameterIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl ChannelPoint {
    pub fn new(modes: Vec<ModeParams>, ancilla_count: usize) -> Result<Self> {
        let x = Self { modes, ancilla_count };
        let v = validate(&x);
        if v.is_empty() {
            Ok(x)
        } else {
            Err(Error::InvalidChannel(v))
        }
    }

    /// Single channel mode with `ancilla_count` idle modes.
    pub fn single(gamma: f64, n: f64, re_m: f64, im_m: f64, ancilla_count: usize) -> Result<Self> {
        Self::new(vec![ModeParams::new(gamma, n, re_m, im_m)], ancilla_count)
    }

    pub fn channel_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn total_modes(&self) -> usize {
        self.modes.len() + self.ancilla_count
    }

    /// Every parameter of the channel modes, in flat order.
    pub fn parameters(&self) -> Vec<ParameterIndex> {
        (0..self.modes.len())
            .flat_map(|m| Param::ALL.map(|w| ParameterIndex::new(m, w)))
            .collect()
    }

    pub fn get(&self, p: ParameterIndex) -> f64 {
        self.modes[p.mode].get(p.which)
    }

    /// Copy with one parameter replaced. Not validated, so finite-difference
    /// stencils may step across a boundary.
    pub fn with_param(&self, p: ParameterIndex, value: f64) -> Self {
        let mut x = self.clone();
        *x.modes[p.mode].get_mut(p.which) = value;
        x
    }

    pub fn with_ancillas(&self, ancilla_count: usize) -> Self {
        Self { modes: self.modes.clone(), ancilla_count }
    }
}

/// Human-readable list of violated invariants; empty iff `x` is valid.
pub fn validate(x: &ChannelPoint) -> Vec<String> {
    let mut out = Vec::new();
    if x.modes.is_empty() {
        out.push("channel must act on at least one mode".to_string());
    }
    for (k, m) in x.modes.iter().enumerate() {
        if [m.gamma, m.n, m.re_m, m.im_m].iter().any(|v| !v.is_finite()) {
            out.push(format!("mode {k}: parameters must be finite"));
            continue;
        }
        if m.gamma < 0.0 {
            out.push(format!("mode {k}: gamma = {} violates gamma >= 0", m.gamma));
        }
        if m.n < 0.0 {
            out.push(format!("mode {k}: N = {} violates N >= 0", m.n));
        }
        let m2 = m.re_m * m.re_m + m.im_m * m.im_m;
        if m2 > m.n * (m.n + 1.0) + BATH_SLACK {
            out.push(format!(
                "mode {k}: |M|^2 = {m2} violates |M|^2 <= N(N+1) = {}",
                m.n * (m.n + 1.0)
            ));
        }
    }
    out
}

fn check(x: &ChannelPoint) -> Result<()> {
    let v = validate(x);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidChannel(v))
    }
}

/// Stationary covariance of a single bath mode.
///
/// The steady state of the generator has `⟨a²⟩ = −M`, which places
/// `−Re M` on the `QQ` entry and `−Im M` off the diagonal.
pub fn bath_block(m: &ModeParams) -> [[f64; 2]; 2] {
    let base = 0.5 + m.n;
    [[base - m.re_m, -m.im_m], [-m.im_m, base + m.re_m]]
}

/// The fixed point `Σ_ch` of the channel, with `½·1₂` on ancilla modes.
pub fn asymptotic_cm(x: &ChannelPoint) -> Result<DMatrix<f64>> {
    check(x)?;
    Ok(asymptotic_cm_unchecked(x))
}

pub(crate) fn asymptotic_cm_unchecked(x: &ChannelPoint) -> DMatrix<f64> {
    let d = 2 * x.total_modes();
    let mut s = DMatrix::identity(d, d) * 0.5;
    for (k, m) in x.modes.iter().enumerate() {
        let b = bath_block(m);
        for p in 0..2 {
            for q in 0..2 {
                s[(2 * k + p, 2 * k + q)] = b[p][q];
            }
        }
    }
    s
}

/// Diagonal of `Γ = ⊕_k e^{−γ_k/2} 1₂`.
fn coupling_diag(x: &ChannelPoint) -> DVector<f64> {
    DVector::from_fn(2 * x.total_modes(), |i, _| {
        x.modes.get(i / 2).map_or(1.0, |m| (-0.5 * m.gamma).exp())
    })
}

pub fn coupling(x: &ChannelPoint) -> Result<DMatrix<f64>> {
    check(x)?;
    Ok(DMatrix::from_diagonal(&coupling_diag(x)))
}

/// Output state `Σ = Γ(Σ₀ − Σ_ch)Γ + Σ_ch`, `⟨R⟩ = Γ⟨R⟩₀`.
pub fn apply(x: &ChannelPoint, probe: &GaussianState) -> Result<GaussianState> {
    check(x)?;
    Ok(apply_unchecked(x, probe)?)
}

/// As [`apply`] without validating the bath, for finite-difference stencils.
pub fn apply_unchecked(x: &ChannelPoint, probe: &GaussianState) -> Result<GaussianState> {
    let total = x.total_modes();
    if probe.n_modes() != total {
        return Err(Error::ModeMismatch { expected: total, found: probe.n_modes() });
    }
    let g = coupling_diag(x);
    let sch = asymptotic_cm_unchecked(x);
    let s0 = probe.cov();
    let nch = 2 * x.channel_modes();
    let d = 2 * total;
    let cov = DMatrix::from_fn(d, d, |i, j| {
        if i >= nch && j >= nch {
            s0[(i, j)]
        } else {
            g[i] * g[j] * (s0[(i, j)] - sch[(i, j)]) + sch[(i, j)]
        }
    });
    let mean = probe.mean().component_mul(&g);
    Ok(GaussianState::from_parts(mean, cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{check_physical, two_mode_squeezed};

    #[test]
    fn labels_round_trip() {
        for p in ChannelPoint::single(0.1, 0.2, 0.0, 0.0, 0).unwrap().with_ancillas(0).parameters() {
            assert_eq!(p.label().parse::<ParameterIndex>().unwrap(), p);
        }
        assert_eq!("ImM[12]".parse::<ParameterIndex>().unwrap(), ParameterIndex::new(12, Param::ImM));
        for bad in ["gamma", "gamma[x]", "Gamma[0]", "N[0"] {
            assert!(bad.parse::<ParameterIndex>().is_err());
        }
    }

    #[test]
    fn bath_examples() {
        let vac = asymptotic_cm(&ChannelPoint::single(0.3, 0.0, 0.0, 0.0, 0).unwrap()).unwrap();
        assert_eq!(vac, DMatrix::identity(2, 2) * 0.5);
        let th = asymptotic_cm(&ChannelPoint::single(0.3, 1.0, 0.0, 0.0, 0).unwrap()).unwrap();
        assert_eq!(th, DMatrix::identity(2, 2) * 1.5);
        let sq = asymptotic_cm(&ChannelPoint::single(0.3, 1.0, 0.8, 0.0, 0).unwrap()).unwrap();
        assert!((sq[(0, 0)] - 0.7).abs() < 1e-15 && (sq[(1, 1)] - 2.3).abs() < 1e-15);
        assert_eq!(sq[(0, 1)], 0.0);
        assert!(check_physical(&sq).physical);
    }

    #[test]
    fn coupling_examples() {
        let g = coupling(&ChannelPoint::single(0.0, 1.0, 0.0, 0.0, 0).unwrap()).unwrap();
        assert_eq!(g, DMatrix::identity(2, 2));
        let x = ChannelPoint::new(
            vec![ModeParams::new(0.1, 0.0, 0.0, 0.0), ModeParams::new(0.0, 0.0, 0.0, 0.0)],
            0,
        )
        .unwrap();
        let g = coupling(&x).unwrap();
        assert!((g[(0, 0)] - 0.951229).abs() < 1e-6);
        assert_eq!(g[(1, 1)], g[(0, 0)]);
        assert_eq!(g[(2, 2)], 1.0);
    }

    #[test]
    fn apply_examples() {
        let vac = GaussianState::vacuum(1);
        let id = ChannelPoint::single(0.0, 1.0, 0.3, 0.2, 0).unwrap();
        let out = apply(&id, &vac).unwrap();
        assert!((out.cov() - vac.cov()).norm() < 1e-15);

        let x = ChannelPoint::single(0.1, 1.0, 0.0, 0.0, 0).unwrap();
        let out = apply(&x, &vac).unwrap();
        let expect = 1.5 - (-0.1f64).exp();
        assert!((out.cov()[(0, 0)] - expect).abs() < 1e-15);
        assert!((expect - 0.595163).abs() < 1e-6);

        let x = ChannelPoint::single(50.0, 1.0, 0.0, 0.0, 0).unwrap();
        let out = apply(&x, &vac).unwrap();
        assert!((out.cov() - DMatrix::identity(2, 2) * 1.5).norm() < 1e-10);
    }

    #[test]
    fn ancillas_untouched() {
        let x = ChannelPoint::single(0.4, 0.7, 0.2, -0.3, 1).unwrap();
        let probe = two_mode_squeezed(0.6).displaced(&DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4]));
        let out = apply(&x, &probe).unwrap();
        for i in 2..4 {
            assert_eq!(out.mean()[i], probe.mean()[i]);
            for j in 2..4 {
                assert_eq!(out.cov()[(i, j)], probe.cov()[(i, j)]);
            }
        }
        assert!(matches!(
            apply(&x.with_ancillas(0), &probe),
            Err(Error::ModeMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn validation_messages() {
        assert!(validate(&ChannelPoint { modes: vec![ModeParams::new(0.1, 1.0, 0.0, 0.0)], ancilla_count: 0 }).is_empty());
        let v = validate(&ChannelPoint { modes: vec![ModeParams::new(0.1, 0.0, 0.1, 0.0)], ancilla_count: 0 });
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("N(N+1)"));
        let v = validate(&ChannelPoint { modes: vec![ModeParams::new(-0.1, 0.0, 0.0, 0.0)], ancilla_count: 0 });
        assert!(v[0].contains("gamma >= 0"));
    }

    #[test]
    fn flat_index() {
        let p = ParameterIndex::new(1, Param::ReM);
        assert_eq!(p.flat(), 6);
        let x = ChannelPoint::new(vec![ModeParams::new(0.1, 1.0, 0.0, 0.0); 2], 2).unwrap();
        let ps = x.parameters();
        assert_eq!(ps.len(), 8);
        assert!(ps.iter().enumerate().all(|(i, p)| p.flat() == i));
    }
}
