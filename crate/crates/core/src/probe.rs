//! Random pure probes on `n` channel modes plus `n` ancillas that spend a
//! photon budget `φ*` on the channel modes exactly.
//!
//! A probe is built as two-mode squeezing between channel mode `k` and
//! ancilla `n + k`, single-mode squeezing on the channel modes, independent
//! passive moves on the channel and ancilla blocks, and finally a
//! displacement of the channel modes. Passive moves within a block and the
//! ancilla block as a whole leave the channel photon number unchanged, so the
//! budget split survives them.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Dirichlet, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{self, embed, rotation, squeezer, two_mode_squeezer, GaussianState};
use crate::linalg;

/// Bumped whenever [`ProbeSampler::draw`] changes the probe it returns for
/// a given `(seed, counter)`; sample caches record it.
pub const SAMPLER_VERSION: u32 = 1;

/// How the channel-mode budget is divided between resources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceSplit {
    pub w_sms: f64,
    pub w_tms: f64,
    pub w_disp: f64,
    /// Per channel mode `k`: `phases[2k]` is the squeezing axis and
    /// `phases[2k + 1]` the displacement phase. Empty means all zero.
    #[serde(default)]
    pub phases: Vec<f64>,
}

impl ResourceSplit {
    pub fn new(w_sms: f64, w_tms: f64, w_disp: f64) -> Self {
        Self { w_sms, w_tms, w_disp, phases: Vec::new() }
    }

    /// Weights uniform on the simplex, phases uniform on `[0, 2π)`.
    pub fn random<R: Rng + ?Sized>(n_modes: usize, rng: &mut R) -> Self {
        let w = Dirichlet::new([1.0; 3]).expect("unit concentration is valid").sample(rng);
        let mut split = Self::new(w[0], w[1], w[2]);
        split.phases = random_phases(2 * n_modes, rng);
        split
    }

    pub fn validate(&self, n_modes: usize) -> Result<()> {
        let w = [self.w_sms, self.w_tms, self.w_disp];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0 || *x > 1.0) {
            return Err(Error::InvalidSplit(format!("weights {w:?} must lie in [0, 1]")));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidSplit(format!("weights sum to {sum}, not 1")));
        }
        if !self.phases.is_empty() && self.phases.len() != 2 * n_modes {
            return Err(Error::InvalidSplit(format!(
                "expected {} phases for {n_modes} modes, got {}",
                2 * n_modes,
                self.phases.len()
            )));
        }
        Ok(())
    }

    fn phase(&self, i: usize) -> f64 {
        self.phases.get(i).copied().unwrap_or(0.0)
    }
}

fn random_phases<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect()
}

/// Squeezing parameters and displacement for one channel/ancilla pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeBudget {
    pub r_tms: f64,
    /// Applied after the two-mode squeezer, so it adds `w_sms φ` photons on
    /// top of the thermal marginal left by `r_tms`.
    pub r_sms: f64,
    pub sms_angle: f64,
    pub alpha: Complex64,
}

/// Per-mode parameters spending `φ*/n` photons on each channel mode.
pub fn budget_from_split(split: &ResourceSplit, budget: f64, n_modes: usize) -> Result<Vec<ModeBudget>> {
    split.validate(n_modes)?;
    if !(budget >= 0.0 && budget.is_finite()) {
        return Err(Error::InvalidSplit(format!("budget {budget} must be finite and non-negative")));
    }
    let per_mode = budget / n_modes as f64;
    Ok((0..n_modes)
        .map(|k| {
            let n_t = split.w_tms * per_mode;
            let n_s = split.w_sms * per_mode;
            // thermal n_t squeezed by r: n = (n_t + ½) cosh 2r − ½
            let cosh2r = (2.0 * (n_t + n_s) + 1.0) / (2.0 * n_t + 1.0);
            ModeBudget {
                r_tms: n_t.sqrt().asinh(),
                r_sms: 0.5 * cosh2r.acosh(),
                sms_angle: split.phase(2 * k),
                alpha: Complex64::from_polar((split.w_disp * per_mode).sqrt(), split.phase(2 * k + 1)),
            }
        })
        .collect())
}

/// Haar-random passive symplectic on `n_modes`: for `U` Haar on `U(n)`, the
/// 2×2 block `(k, l)` is `[[Re U, −Im U], [Im U, Re U]]_{kl}`.
pub fn random_passive<R: Rng + ?Sized>(n_modes: usize, rng: &mut R) -> DMatrix<f64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let z = linalg::CMatrix::from_fn(n_modes, n_modes, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re * s, im * s)
    });
    let (q, r) = z.qr().unpack();
    let u = linalg::CMatrix::from_fn(n_modes, n_modes, |i, j| {
        let d = r[(j, j)];
        q[(i, j)] * if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) }
    });
    let mut o = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        for l in 0..n_modes {
            let (x, y) = (u[(k, l)].re, -u[(k, l)].im);
            o[(2 * k, 2 * l)] = x;
            o[(2 * k, 2 * l + 1)] = y;
            o[(2 * k + 1, 2 * l)] = -y;
            o[(2 * k + 1, 2 * l + 1)] = x;
        }
    }
    o
}

/// Assembles the probe for explicit per-mode budgets and optional passive
/// moves on the channel and ancilla blocks.
pub fn assemble(budgets: &[ModeBudget], passive: Option<(&DMatrix<f64>, &DMatrix<f64>)>) -> GaussianState {
    let n = budgets.len();
    let total = 2 * n;
    let mut st = GaussianState::vacuum(total);
    for (k, b) in budgets.iter().enumerate() {
        if b.r_tms != 0.0 {
            st = st.transformed(&embed(&two_mode_squeezer(b.r_tms), &[k, n + k], total));
        }
        if b.r_sms != 0.0 {
            let r = rotation(b.sms_angle);
            let s = &r * squeezer(b.r_sms) * r.transpose();
            st = st.transformed(&embed(&s, &[k], total));
        }
    }
    if let Some((oc, oa)) = passive {
        let channel: Vec<usize> = (0..n).collect();
        let ancilla: Vec<usize> = (n..total).collect();
        st = st.transformed(&embed(oc, &channel, total)).transformed(&embed(oa, &ancilla, total));
    }
    let mut d = nalgebra::DVector::zeros(2 * total);
    for (k, b) in budgets.iter().enumerate() {
        let m = gaussian::coherent_mean(b.alpha);
        d[2 * k] = m[0];
        d[2 * k + 1] = m[1];
    }
    st.displaced(&d)
}

/// Which probes a sampler draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SamplingPolicy {
    /// Random split, phases and passive moves.
    Random,
    /// Fixed weights; random phases and passive moves.
    Family { w_sms: f64, w_tms: f64, w_disp: f64 },
    /// Fully pinned split without passive moves.
    Fixed { split: ResourceSplit },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSampler {
    pub n_modes: usize,
    pub budget: f64,
    pub policy: SamplingPolicy,
}

/// Independent stream per `(seed, counter)`, so batches can be drawn in any
/// order or in parallel.
pub fn sample_rng(seed: u64, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(counter);
    rng
}

impl ProbeSampler {
    pub fn new(n_modes: usize, budget: f64, policy: SamplingPolicy) -> Self {
        Self { n_modes, budget, policy }
    }

    pub fn sample(&self, seed: u64, counter: u64) -> Result<GaussianState> {
        Ok(self.draw(seed, counter)?.1)
    }

    /// The probe together with the split it was built from.
    pub fn draw(&self, seed: u64, counter: u64) -> Result<(ResourceSplit, GaussianState)> {
        let mut rng = sample_rng(seed, counter);
        let n = self.n_modes;
        let (split, passive) = match &self.policy {
            SamplingPolicy::Random => (ResourceSplit::random(n, &mut rng), true),
            SamplingPolicy::Family { w_sms, w_tms, w_disp } => {
                let mut s = ResourceSplit::new(*w_sms, *w_tms, *w_disp);
                s.phases = random_phases(2 * n, &mut rng);
                (s, true)
            }
            SamplingPolicy::Fixed { split } => (split.clone(), false),
        };
        let budgets = budget_from_split(&split, self.budget, n)?;
        if passive {
            let oc = random_passive(n, &mut rng);
            let oa = random_passive(n, &mut rng);
            Ok((split, assemble(&budgets, Some((&oc, &oa)))))
        } else {
            Ok((split, assemble(&budgets, None)))
        }
    }
}

/// One random probe with the default policy.
pub fn sample_probe(n_modes: usize, budget: f64, seed: u64) -> Result<GaussianState> {
    ProbeSampler::new(n_modes, budget, SamplingPolicy::Random).sample(seed, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{mean_photon, symplectic_defect};

    fn photons(st: &GaussianState, n: usize) -> f64 {
        mean_photon(st, &(0..n).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn zero_budget_is_vacuum() {
        let st = sample_probe(2, 0.0, 7).unwrap();
        assert!((st.cov() - GaussianState::vacuum(4).cov()).amax() < 1e-15);
        assert!(st.mean().amax() < 1e-15);
    }

    #[test]
    fn pure_families() {
        let disp = budget_from_split(&ResourceSplit::new(0.0, 0.0, 1.0), 0.2, 1).unwrap();
        assert!((disp[0].alpha.norm_sqr() - 0.2).abs() < 1e-15);
        let sms = budget_from_split(&ResourceSplit::new(1.0, 0.0, 0.0), 0.2, 1).unwrap();
        assert!((sms[0].r_sms.sinh().powi(2) - 0.2).abs() < 1e-14);
        let tms = budget_from_split(&ResourceSplit::new(0.0, 1.0, 0.0), 0.2, 1).unwrap();
        assert!((tms[0].r_tms - 0.2f64.sqrt().asinh()).abs() < 1e-15);
        assert!((tms[0].r_tms - 0.433507).abs() < 1e-6);
        let st = assemble(&tms, None);
        assert!((st.cov() - gaussian::two_mode_squeezed(tms[0].r_tms).cov()).amax() < 1e-14);
    }

    #[test]
    fn thirds_round_trip() {
        let third = 1.0 / 3.0;
        let split = ResourceSplit { w_sms: third, w_tms: third, w_disp: 1.0 - 2.0 * third, phases: vec![0.4, 1.1] };
        let b = budget_from_split(&split, 0.3, 1).unwrap();
        let st = assemble(&b, None);
        assert!((photons(&st, 1) - 0.3).abs() < 1e-12);
        let tms_only = assemble(&[ModeBudget { r_sms: 0.0, alpha: Complex64::new(0.0, 0.0), ..b[0] }], None);
        assert!((photons(&tms_only, 1) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn bad_splits() {
        assert!(budget_from_split(&ResourceSplit::new(0.5, 0.6, 0.0), 0.2, 1).is_err());
        assert!(budget_from_split(&ResourceSplit::new(-0.1, 0.6, 0.5), 0.2, 1).is_err());
        let mut s = ResourceSplit::new(0.5, 0.5, 0.0);
        s.phases = vec![0.0];
        assert!(matches!(budget_from_split(&s, 0.2, 1), Err(Error::InvalidSplit(_))));
    }

    #[test]
    fn passive_group_membership() {
        let mut rng = sample_rng(3, 0);
        for n in 1..4 {
            let o = random_passive(n, &mut rng);
            assert!(symplectic_defect(&o) < 1e-10);
            assert!((o.transpose() * &o - DMatrix::identity(2 * n, 2 * n)).amax() < 1e-10);
            let vac = GaussianState::vacuum(n);
            assert!((vac.transformed(&o).cov() - vac.cov()).amax() < 1e-12);
        }
    }

    #[test]
    fn deterministic_and_saturated() {
        let s = ProbeSampler::new(2, 0.4, SamplingPolicy::Random);
        let a = s.sample(11, 5).unwrap();
        assert_eq!(a, s.sample(11, 5).unwrap());
        assert_ne!(a, s.sample(11, 6).unwrap());
        assert!((photons(&a, 2) - 0.4).abs() < 1e-9);
        assert!(a.is_pure(1e-8));
    }
}
