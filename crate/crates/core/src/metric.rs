//! The channel metric: the smallest-determinant matrix dominating every QFI
//! reachable under the probe budget, estimated from sampled constraints.
//!
//! The cover `j ⪰ J_i` is found through `B = j⁻¹`, maximizing `log det B`
//! subject to `B ⪯ (J_i + ε·1)⁻¹`, with a log-barrier Newton method.

use nalgebra::{Cholesky, DMatrix, Dyn};
use rayon::prelude::*;

use crate::channel::{ChannelPoint, ParameterIndex};
use crate::error::{Error, Result};
use crate::linalg;
use crate::probe::{ProbeSampler, ResourceSplit, SamplingPolicy};
use crate::qfi::{self, QfiMatrix, DEFAULT_EPSILON};

/// Stopping threshold on the barrier duality gap `m·d/t`.
pub const GAP_TOL: f64 = 1e-10;
/// Largest barrier weight. Beyond it `A_i − B` loses too many digits to
/// cancellation for Newton to center reliably.
pub const T_MAX: f64 = 1e10;
/// Newton decrement `gᵀH⁻¹g` at which a barrier stage counts as centered.
/// The log-det shortfall it leaves is `λ²/t`.
const CENTERED: f64 = 1e-8;
/// Newton steps allowed per solve, across all barrier stages.
pub const NEWTON_BUDGET: usize = 2000;
/// Relative slack under which a sample counts as contained.
pub const CONTAINMENT_TOL: f64 = 1e-8;
/// First counter used for hold-out probes, far from the training counters.
pub const HOLDOUT_OFFSET: u64 = 1 << 40;

/// Where a sampled constraint set came from.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOrigin {
    pub x: ChannelPoint,
    pub budget: f64,
    pub seed: u64,
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub labels: Vec<ParameterIndex>,
    pub members: Vec<DMatrix<f64>>,
    pub origin: Option<SampleOrigin>,
}

impl ConstraintSet {
    pub fn new(labels: Vec<ParameterIndex>) -> Self {
        Self { labels, members: Vec::new(), origin: None }
    }

    /// Unlabelled constraints.
    pub fn from_matrices(members: Vec<DMatrix<f64>>) -> Self {
        Self { labels: Vec::new(), members, origin: None }
    }

    pub fn dim(&self) -> Option<usize> {
        self.members.first().map(|m| m.nrows())
    }

    pub fn push(&mut self, j: DMatrix<f64>) -> Result<()> {
        if let Some(d) = self.dim() {
            if j.nrows() != d || j.ncols() != d {
                return Err(Error::DimensionMismatch { expected: d, found: j.nrows() });
            }
        }
        self.members.push(j);
        Ok(())
    }

    pub fn push_qfi(&mut self, j: &QfiMatrix) -> Result<()> {
        if !self.labels.is_empty() && j.labels != self.labels {
            return Err(Error::DimensionMismatch { expected: self.labels.len(), found: j.labels.len() });
        }
        self.push(j.matrix.clone())
    }

    /// `1e-8·(1 + max_i tr J_i)`.
    pub fn default_regularization(&self) -> f64 {
        let t = self.members.iter().map(|m| m.trace()).fold(0.0, f64::max);
        1e-8 * (1.0 + t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub round: usize,
    /// Constraints in the set after this round.
    pub sample_count: usize,
    /// Samples skipped so far because the QFI evaluation failed.
    pub failed: usize,
    pub det_value: f64,
    /// Largest `λ_max(J − 𝔍)` of this round's samples against the metric
    /// of the previous round.
    pub max_violation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricResult {
    pub labels: Vec<ParameterIndex>,
    pub metric: DMatrix<f64>,
    pub det_value: f64,
    pub trace: Vec<TraceEntry>,
    pub eps_reg: f64,
    /// Duality gap `m·d/t` at the final centered iterate, which bounds the
    /// shortfall of `log det B` from its optimum.
    pub kkt_residual: f64,
    pub newton_steps: usize,
}

fn chol(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    Cholesky::new(linalg::symmetrize(m))
}

fn log_det(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>()
}

/// Index pairs `k ≤ l` of the symmetric basis `E_kl = e_k e_lᵀ + e_l e_kᵀ`
/// (`E_kk = e_k e_kᵀ`).
fn sym_basis(d: usize) -> Vec<(usize, usize)> {
    (0..d).flat_map(|k| (k..d).map(move |l| (k, l))).collect()
}

fn terms(p: (usize, usize)) -> Vec<(usize, usize)> {
    if p.0 == p.1 {
        vec![p]
    } else {
        vec![p, (p.1, p.0)]
    }
}

/// Adds `c · tr(W E_p W E_q)` to `h`.
fn add_hessian(h: &mut DMatrix<f64>, w: &DMatrix<f64>, basis: &[(usize, usize)], c: f64) {
    for (p, &ep) in basis.iter().enumerate() {
        for (q, &eq) in basis.iter().enumerate().skip(p) {
            let mut v = 0.0;
            for (i, j) in terms(ep) {
                for (a, b) in terms(eq) {
                    v += w[(b, i)] * w[(j, a)];
                }
            }
            h[(p, q)] += c * v;
            if q != p {
                h[(q, p)] += c * v;
            }
        }
    }
}

fn grad_entry(g: &DMatrix<f64>, p: (usize, usize)) -> f64 {
    if p.0 == p.1 {
        g[p]
    } else {
        2.0 * g[p]
    }
}

fn from_coords(v: &[f64], basis: &[(usize, usize)], d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    for (x, &(k, l)) in v.iter().zip(basis) {
        m[(k, l)] = *x;
        m[(l, k)] = *x;
    }
    m
}

/// Constraint `i` is held as `C_i = (J_i + ε·1)^{1/2}`, so that
/// `B ⪯ (J_i + ε·1)⁻¹` reads `T_i = 1 − C_i B C_i ⪰ 0`. The slack `T_i` is
/// well scaled however ill-conditioned `J_i` is.
struct Barrier<'a> {
    c: &'a [DMatrix<f64>],
    basis: Vec<(usize, usize)>,
    d: usize,
}

impl Barrier<'_> {
    fn slack(&self, c: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.d, self.d) - c * b * c
    }

    /// `−t log det B − Σ log det T_i`, or `None` outside the domain.
    fn value(&self, b: &DMatrix<f64>, t: f64) -> Option<f64> {
        let mut f = -t * log_det(&chol(b)?);
        for c in self.c {
            f -= log_det(&chol(&self.slack(c, b))?);
        }
        Some(f)
    }

    fn newton_system(&self, b: &DMatrix<f64>, t: f64) -> (DMatrix<f64>, Vec<f64>) {
        let n = self.basis.len();
        let binv = chol(b).expect("iterate is feasible").inverse();
        let mut g = &binv * -t;
        let mut h = DMatrix::zeros(n, n);
        add_hessian(&mut h, &binv, &self.basis, t);
        for c in self.c {
            let tinv = chol(&self.slack(c, b)).expect("iterate is feasible").inverse();
            let w = linalg::symmetrize(&(c * tinv * c));
            add_hessian(&mut h, &w, &self.basis, 1.0);
            g += &w;
        }
        let grad = self.basis.iter().map(|&p| grad_entry(&g, p)).collect();
        (h, grad)
    }

    /// Minimizes the barrier at fixed `t` from `b`; returns the Newton steps
    /// spent.
    fn center(&self, b: &mut DMatrix<f64>, t: f64, budget: usize) -> Option<usize> {
        for step in 0..budget {
            let (h, g) = self.newton_system(b, t);
            let gv = nalgebra::DVector::from_vec(g);
            let dir = Cholesky::new(h.clone())
                .map(|c| c.solve(&-&gv))
                .or_else(|| h.clone().lu().solve(&-&gv))?;
            let decrement = -gv.dot(&dir);
            let delta = from_coords(dir.as_slice(), &self.basis, self.d);
            if decrement <= CENTERED || delta.amax() <= 1e-14 * b.amax() {
                return Some(step);
            }
            // inside the quadratic region the full step is taken unchecked,
            // since at large t the barrier value itself is too coarse to compare
            let damped = decrement > 0.25;
            let f0 = if damped { self.value(b, t)? } else { 0.0 };
            let mut s = 1.0;
            loop {
                let trial = &*b + &delta * s;
                if let Some(f) = self.value(&trial, t) {
                    if !damped || f <= f0 - 0.25 * s * decrement {
                        *b = trial;
                        break;
                    }
                }
                s *= 0.5;
                if s < 1e-12 {
                    // no further progress at this precision
                    return Some(step + 1);
                }
            }
        }
        None
    }
}

/// Minimum-determinant `𝔍 ⪰ J_i + ε_reg·1` over the constraint set.
pub fn min_det_upper_bound(c: &ConstraintSet, eps_reg: f64) -> Result<MetricResult> {
    let d = c.dim().ok_or_else(|| Error::Shape("empty constraint set".into()))?;
    if !(eps_reg > 0.0 && eps_reg.is_finite()) {
        return Err(Error::Shape(format!("regularization {eps_reg} must be positive")));
    }
    // the problem is covariant under j → s·j, so solve at unit scale
    let scale = c.members.iter().map(|m| m.trace().abs()).fold(eps_reg, f64::max);
    let mut hi: f64 = 0.0;
    let roots: Vec<DMatrix<f64>> = c
        .members
        .iter()
        .map(|j| {
            let shifted = linalg::symmetrize(&((j + DMatrix::identity(d, d) * eps_reg) / scale));
            let lo = linalg::min_sym_eigenvalue(&shifted);
            if lo <= 0.0 {
                return Err(Error::NonPhysicalCovariance { worst: lo * scale });
            }
            hi = hi.max(linalg::max_sym_eigenvalue(&shifted));
            Ok(linalg::sqrt_psd(&shifted))
        })
        .collect::<Result<_>>()?;
    let mut b = DMatrix::identity(d, d) * (0.5 / hi);
    let barrier = Barrier { c: &roots, basis: sym_basis(d), d };
    let m = roots.len() as f64;
    let mut t = 1.0;
    let mut steps = 0;
    loop {
        let left = NEWTON_BUDGET.saturating_sub(steps);
        match barrier.center(&mut b, t, left) {
            Some(s) => steps += s,
            None => return Err(Error::SolverStalled { iterations: NEWTON_BUDGET, gap: m * d as f64 / t }),
        }
        if m * d as f64 / t <= GAP_TOL || t >= T_MAX {
            break;
        }
        t = (t * 20.0).min(T_MAX);
    }
    let binv = chol(&b).expect("iterate is feasible").inverse();
    let metric = linalg::symmetrize(&(binv * scale));
    let det_value = metric.determinant();
    Ok(MetricResult {
        labels: c.labels.clone(),
        metric,
        det_value,
        trace: vec![TraceEntry {
            round: 1,
            sample_count: c.members.len(),
            failed: 0,
            det_value,
            max_violation: None,
        }],
        eps_reg,
        kkt_residual: m * d as f64 / t,
        newton_steps: steps,
    })
}

/// `λ_max(J − 𝔍)`; at most zero when `J` is covered.
pub fn containment(metric: &DMatrix<f64>, j: &DMatrix<f64>) -> Result<f64> {
    if metric.shape() != j.shape() {
        return Err(Error::DimensionMismatch { expected: metric.nrows(), found: j.nrows() });
    }
    Ok(linalg::max_sym_eigenvalue(&linalg::symmetrize(&(j - metric))))
}

pub fn containment_check(m: &MetricResult, j: &QfiMatrix) -> Result<f64> {
    if !m.labels.is_empty() && m.labels != j.labels {
        return Err(Error::DimensionMismatch { expected: m.labels.len(), found: j.labels.len() });
    }
    containment(&m.metric, &j.matrix)
}

/// One evaluated probe, as stored in a [`SampleCache`].
#[derive(Debug, Clone, PartialEq)]
pub struct CachedSample {
    pub counter: u64,
    pub split: ResourceSplit,
    /// `None` if the QFI evaluation failed.
    pub qfi: Option<DMatrix<f64>>,
}

pub trait SampleCache {
    fn get(&self, counter: u64) -> Option<CachedSample>;
    fn put(&mut self, sample: CachedSample) -> Result<()>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplingOptions {
    pub budget: f64,
    pub rounds: usize,
    pub batch: usize,
    pub seed: u64,
    pub rel_tol: f64,
    /// Parameters the metric is restricted to; all of them if `None`.
    pub params: Option<Vec<ParameterIndex>>,
    pub policy: SamplingPolicy,
    /// Temperature lifting pure output modes before the QFI is taken.
    pub epsilon: f64,
}

impl SamplingOptions {
    pub fn new(budget: f64, rounds: usize, batch: usize, seed: u64) -> Self {
        Self {
            budget,
            rounds,
            batch,
            seed,
            rel_tol: 1e-4,
            params: None,
            policy: SamplingPolicy::Random,
            epsilon: DEFAULT_EPSILON,
        }
    }

    fn labels(&self, x: &ChannelPoint) -> Vec<ParameterIndex> {
        self.params.clone().unwrap_or_else(|| x.parameters())
    }

    fn sampler(&self, x: &ChannelPoint) -> ProbeSampler {
        ProbeSampler::new(x.channel_modes(), self.budget, self.policy.clone())
    }
}

/// Draws the probe for `counter` and evaluates its QFI over the chosen
/// parameters, with one ancilla per channel mode.
pub fn evaluate_sample(x: &ChannelPoint, opts: &SamplingOptions, counter: u64) -> Result<CachedSample> {
    let xe = x.with_ancillas(x.channel_modes());
    let (split, probe) = opts.sampler(x).draw(opts.seed, counter)?;
    let j = qfi::qfi_auto(&xe, &probe, opts.epsilon)
        .and_then(|(j, _)| j.select(&opts.labels(x)))
        .ok()
        .map(|j| j.matrix);
    Ok(CachedSample { counter, split, qfi: j })
}

fn evaluate_batch(
    x: &ChannelPoint,
    opts: &SamplingOptions,
    counters: std::ops::Range<u64>,
    cache: &mut Option<&mut dyn SampleCache>,
) -> Result<Vec<CachedSample>> {
    let mut out: Vec<Option<CachedSample>> = counters.clone().map(|k| cache.as_ref().and_then(|c| c.get(k))).collect();
    let missing: Vec<u64> = counters.zip(&out).filter(|(_, s)| s.is_none()).map(|(k, _)| k).collect();
    let fresh = missing.par_iter().map(|&k| evaluate_sample(x, opts, k)).collect::<Result<Vec<_>>>()?;
    let mut fresh = fresh.into_iter();
    for slot in out.iter_mut().filter(|s| s.is_none()) {
        let s = fresh.next().expect("one fresh sample per gap");
        if let Some(c) = cache.as_mut() {
            c.put(s.clone())?;
        }
        *slot = Some(s);
    }
    Ok(out.into_iter().map(|s| s.expect("filled")).collect())
}

/// Samples probes in rounds of `batch`, re-solving the cover after each
/// round, until `rounds` are done or the determinant grows by less than
/// `rel_tol` over a round. Failed samples are skipped and counted.
pub fn sample_and_solve(x: &ChannelPoint, opts: &SamplingOptions, mut cache: Option<&mut dyn SampleCache>) -> Result<MetricResult> {
    if opts.rounds == 0 || opts.batch == 0 {
        return Err(Error::Shape("rounds and batch must be positive".into()));
    }
    let labels = opts.labels(x);
    let mut set = ConstraintSet::new(labels);
    set.origin = Some(SampleOrigin { x: x.clone(), budget: opts.budget, seed: opts.seed, rounds: opts.rounds });
    let mut failed = 0;
    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut current: Option<MetricResult> = None;
    for round in 1..=opts.rounds {
        let start = ((round - 1) * opts.batch) as u64;
        let partial = |cause: Error, trace: &[TraceEntry]| Error::SamplingFailed { round, trace: trace.to_vec(), cause: Box::new(cause) };
        let samples = evaluate_batch(x, opts, start..start + opts.batch as u64, &mut cache).map_err(|e| partial(e, &trace))?;
        let mut violation: Option<f64> = None;
        let mut added = false;
        for s in samples {
            let Some(j) = s.qfi else {
                failed += 1;
                continue;
            };
            if let Some(m) = &current {
                let v = containment(&m.metric, &j)?;
                violation = Some(violation.map_or(v, |w: f64| w.max(v)));
                added |= v > CONTAINMENT_TOL * linalg::sym_norm(&j);
            } else {
                added = true;
            }
            set.push(j)?;
        }
        let previous = current.as_ref().map(|m| m.det_value);
        if added {
            let eps = set.default_regularization();
            current = Some(min_det_upper_bound(&set, eps).map_err(|e| partial(e, &trace))?);
        }
        let Some(m) = &current else {
            trace.push(TraceEntry { round, sample_count: 0, failed, det_value: f64::NAN, max_violation: None });
            continue;
        };
        trace.push(TraceEntry {
            round,
            sample_count: set.members.len(),
            failed,
            det_value: m.det_value,
            max_violation: violation,
        });
        if let Some(p) = previous {
            if (m.det_value - p) < opts.rel_tol * p.abs() {
                break;
            }
        }
    }
    let mut result = current.ok_or_else(|| Error::Shape("every sampled QFI evaluation failed".into()))?;
    result.trace = trace;
    Ok(result)
}

/// `λ_max(J − 𝔍)` for `count` fresh probes drawn outside the training
/// counters.
pub fn holdout(x: &ChannelPoint, opts: &SamplingOptions, m: &MetricResult, count: usize) -> Result<Vec<f64>> {
    (0..count as u64)
        .into_par_iter()
        .map(|k| evaluate_sample(x, opts, HOLDOUT_OFFSET + k))
        .filter_map(|s| s.map(|s| s.qfi).transpose())
        .map(|j| containment(&m.metric, &j?))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Param;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(v))
    }

    #[test]
    fn single_constraint_is_tight() {
        let j = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.5]);
        let r = min_det_upper_bound(&ConstraintSet::from_matrices(vec![j.clone()]), 1e-8).unwrap();
        let expect = &j + DMatrix::identity(2, 2) * 1e-8;
        assert!((&r.metric - &expect).amax() < 1e-9);
        assert!(r.kkt_residual < 1e-7);
    }

    #[test]
    fn dominated_constraint_is_inactive() {
        let j1 = DMatrix::from_row_slice(2, 2, &[3.0, 0.5, 0.5, 2.0]);
        let j2 = &j1 * 0.5;
        let r = min_det_upper_bound(&ConstraintSet::from_matrices(vec![j2, j1.clone()]), 1e-8).unwrap();
        assert!((&r.metric - &j1).amax() < 1e-7);
    }

    #[test]
    fn crossed_diagonals() {
        let set = ConstraintSet::from_matrices(vec![diag(&[4.0, 1.0]), diag(&[1.0, 4.0])]);
        let r = min_det_upper_bound(&set, 1e-8).unwrap();
        // the cover must reach 4 on both axes
        assert!((r.metric[(0, 0)] - 4.0).abs() < 1e-6 && (r.metric[(1, 1)] - 4.0).abs() < 1e-6);
        for j in &set.members {
            assert!(containment(&r.metric, j).unwrap() <= 1e-8 * linalg::sym_norm(j));
        }
    }

    #[test]
    fn containment_signs() {
        let m = diag(&[2.0, 3.0]);
        assert!(containment(&m, &m).unwrap().abs() < 1e-14);
        assert!(containment(&m, &(&m * 0.5)).unwrap() < 0.0);
        assert!(matches!(containment(&m, &diag(&[1.0])), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn bad_inputs() {
        assert!(min_det_upper_bound(&ConstraintSet::from_matrices(vec![]), 1e-8).is_err());
        assert!(min_det_upper_bound(&ConstraintSet::from_matrices(vec![diag(&[1.0])]), 0.0).is_err());
        let mut s = ConstraintSet::from_matrices(vec![diag(&[1.0, 1.0])]);
        assert!(s.push(diag(&[1.0])).is_err());
    }

    #[test]
    fn one_sample_gives_its_qfi() {
        let x = ChannelPoint::single(0.1, 1.0, 0.0, 0.0, 0).unwrap();
        let mut opts = SamplingOptions::new(0.2, 1, 1, 3);
        opts.params = Some(vec![ParameterIndex::new(0, Param::Gamma), ParameterIndex::new(0, Param::N)]);
        let s = evaluate_sample(&x, &opts, 0).unwrap().qfi.unwrap();
        let r = sample_and_solve(&x, &opts, None).unwrap();
        let expect = &s + DMatrix::identity(2, 2) * r.eps_reg;
        assert!((&r.metric - &expect).amax() < 1e-9 * expect.amax());
        assert_eq!(r.trace.len(), 1);
    }
}
