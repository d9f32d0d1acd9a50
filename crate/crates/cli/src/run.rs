//! Task runners. Each returns the report as a JSON value.

use std::time::Instant;

use gaussmetric::channel::{self, ChannelPoint, ParameterIndex};
use gaussmetric::gaussian::GaussianState;
use gaussmetric::linalg::{rel_frobenius, sym_norm};
use gaussmetric::metric::{holdout, sample_and_solve, MetricResult, TraceEntry};
use gaussmetric::oracle::{
    oracle_qfi, qfi_from_fidelity_fd, regression_grid, residual_below, sld_form_operator, FIDELITY_STEP,
};
use gaussmetric::qfi::{self, SldForm};
use gaussmetric::Error;
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::Value;

use crate::cache::{CacheError, CacheHeader, FileCache, Recorder};
use crate::config::{RunConfig, Task, MAX_FOCK_DIM};

pub const SLD_TOL: f64 = 1e-6;
pub const QFI_TOL: f64 = 1e-4;
pub const FIDELITY_TOL: f64 = 1e-3;
/// Largest ratio of extreme eigenvalues before a QFI counts as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

#[derive(Debug)]
pub enum Failure {
    /// Bad configuration or unusable files; exit code 2.
    Config(String),
    /// The numerics failed; exit code 3. `partial` holds whatever was
    /// computed before the failure.
    Numeric { error: Error, partial: Option<Value> },
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numeric { .. } => 3,
        }
    }
}

impl From<CacheError> for Failure {
    fn from(e: CacheError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn numeric(error: Error) -> Failure {
    Failure::Numeric { error, partial: None }
}

/// A finished report, and whether every check in it passed.
pub struct Outcome {
    pub report: Value,
    pub passed: bool,
}

#[derive(Serialize)]
struct Header<'a> {
    tool: &'static str,
    version: &'static str,
    task: &'static str,
    config_hash: &'a str,
    seed: u64,
}

fn header(task: Task, cfg: &RunConfig, hash: &str) -> Value {
    serde_json::to_value(Header {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        task: task.name(),
        config_hash: hash,
        seed: cfg.seed,
    })
    .expect("header serializes")
}

fn with_header(head: Value, body: impl Serialize) -> Value {
    let mut v = head;
    let body = serde_json::to_value(body).expect("report serializes");
    let (Value::Object(h), Value::Object(b)) = (&mut v, body) else { unreachable!("both are objects") };
    h.extend(b);
    v
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Inverse of a symmetric positive matrix, if it is well conditioned.
pub fn ellipse_form(m: &DMatrix<f64>) -> Option<Vec<Vec<f64>>> {
    let e = m.clone().symmetric_eigen();
    let (lo, hi) = (e.eigenvalues.min(), e.eigenvalues.max());
    if !(lo > 0.0 && hi <= lo * CONDITION_LIMIT) {
        return None;
    }
    let inv = &e.eigenvectors * DMatrix::from_diagonal(&e.eigenvalues.map(|x| 1.0 / x)) * e.eigenvectors.transpose();
    Some(rows(&((&inv + inv.transpose()) * 0.5)))
}

fn labels(ls: &[ParameterIndex]) -> Vec<String> {
    ls.iter().map(|l| l.label()).collect()
}

#[derive(Serialize)]
struct SldJson {
    param: Option<String>,
    constant: f64,
    linear: Vec<f64>,
    quadratic: Vec<Vec<f64>>,
    imag_residue: f64,
}

fn sld_json(f: &SldForm) -> SldJson {
    SldJson {
        param: f.param.map(|p| p.label()),
        constant: f.constant,
        linear: f.linear.iter().copied().collect(),
        quadratic: rows(&f.quadratic),
        imag_residue: f.imag_residue,
    }
}

struct Prepared {
    x: ChannelPoint,
    probe: GaussianState,
    labels: Vec<ParameterIndex>,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared, Failure> {
    cfg.check_common().map_err(Failure::Config)?;
    let x = cfg.channel().map_err(Failure::Config)?;
    let labels = cfg.labels(&x).map_err(Failure::Config)?;
    let (x, probe) = cfg.probe(&x).map_err(Failure::Config)?;
    Ok(Prepared { x, probe, labels })
}

fn sld_forms(p: &Prepared, eps: f64, warnings: &mut Vec<String>) -> Result<(Vec<SldForm>, Option<f64>), Failure> {
    let (forms, reg) = qfi::sld_auto(&p.x, &p.probe, eps).map_err(numeric)?;
    let forms: Vec<SldForm> = p
        .labels
        .iter()
        .map(|l| forms.iter().find(|f| f.param == Some(*l)).cloned().expect("every label has a form"))
        .collect();
    if let Some(e) = reg {
        warnings.push(format!("output has a pure mode; probe temperatures lifted to 1 + {e:e}"));
    }
    for f in &forms {
        if f.imag_residue > 1e-10 {
            let name = f.param.map(|p| p.label()).unwrap_or_default();
            warnings.push(format!("SLD {name} dropped an imaginary residue of {:.3e}", f.imag_residue));
        }
    }
    Ok((forms, reg))
}

pub fn run_qfi(cfg: &RunConfig, hash: &str) -> Result<Outcome, Failure> {
    let p = prepare(cfg)?;
    let mut warnings = Vec::new();
    let (forms, reg) = sld_forms(&p, cfg.epsilon, &mut warnings)?;
    let (j, _) = qfi::qfi_auto(&p.x, &p.probe, cfg.epsilon).map_err(numeric)?;
    let j = j.select(&p.labels).map_err(numeric)?;
    let inverse = ellipse_form(&j.matrix);
    if inverse.is_none() {
        warnings.push("QFI is singular or ill-conditioned; qfi_inverse omitted".into());
    }
    #[derive(Serialize)]
    struct Body {
        labels: Vec<String>,
        qfi: Vec<Vec<f64>>,
        qfi_inverse: Option<Vec<Vec<f64>>>,
        min_eigenvalue: f64,
        slds: Vec<SldJson>,
        regularization: Option<f64>,
        warnings: Vec<String>,
    }
    let body = Body {
        labels: labels(&p.labels),
        qfi: rows(&j.matrix),
        qfi_inverse: inverse,
        min_eigenvalue: j.min_eigenvalue(),
        slds: forms.iter().map(sld_json).collect(),
        regularization: reg,
        warnings,
    };
    Ok(Outcome { report: with_header(header(Task::Qfi, cfg, hash), body), passed: true })
}

pub fn run_sld(cfg: &RunConfig, hash: &str) -> Result<Outcome, Failure> {
    let p = prepare(cfg)?;
    let mut warnings = Vec::new();
    let (forms, reg) = sld_forms(&p, cfg.epsilon, &mut warnings)?;
    let out = channel::apply(&p.x, &p.probe).map_err(numeric)?;
    #[derive(Serialize)]
    struct Body {
        labels: Vec<String>,
        output_mean: Vec<f64>,
        output_cov: Vec<Vec<f64>>,
        slds: Vec<SldJson>,
        regularization: Option<f64>,
        warnings: Vec<String>,
    }
    let body = Body {
        labels: labels(&p.labels),
        output_mean: out.mean().iter().copied().collect(),
        output_cov: rows(out.cov()),
        slds: forms.iter().map(sld_json).collect(),
        regularization: reg,
        warnings,
    };
    Ok(Outcome { report: with_header(header(Task::Sld, cfg, hash), body), passed: true })
}

#[derive(Serialize)]
struct TraceJson {
    round: usize,
    sample_count: usize,
    failed: usize,
    det: f64,
    max_violation: Option<f64>,
}

fn trace_json(t: &[TraceEntry]) -> Vec<TraceJson> {
    t.iter()
        .map(|e| TraceJson {
            round: e.round,
            sample_count: e.sample_count,
            failed: e.failed,
            det: e.det_value,
            max_violation: e.max_violation,
        })
        .collect()
}

pub fn run_metric(cfg: &RunConfig, hash: &str) -> Result<Outcome, Failure> {
    cfg.check_common().map_err(Failure::Config)?;
    let x = cfg.channel().map_err(Failure::Config)?;
    let opts = cfg.sampling_options(&x).map_err(Failure::Config)?;
    let label_list = cfg.labels(&x).map_err(Failure::Config)?;
    let mut file = match &cfg.cache {
        Some(path) => {
            let h = CacheHeader::new(
                x.with_ancillas(0),
                opts.budget,
                opts.seed,
                opts.policy.clone(),
                labels(&label_list),
                opts.epsilon,
            );
            Some(FileCache::open(path, h)?)
        }
        None => None,
    };
    let cached_before = file.as_ref().map_or(0, |f| f.len());
    let mut rec = Recorder { inner: file.as_mut(), ..Default::default() };
    let head = header(Task::Metric, cfg, hash);
    let result = match sample_and_solve(&x, &opts, Some(&mut rec)) {
        Ok(r) => r,
        Err(Error::SamplingFailed { round, trace, cause }) => {
            if let Error::Cache(m) = *cause {
                return Err(Failure::Config(m));
            }
            let partial = with_header(head, serde_json::json!({ "failed_round": round, "trace": trace_json(&trace) }));
            return Err(Failure::Numeric { error: *cause, partial: Some(partial) });
        }
        Err(e) => return Err(numeric(e)),
    };
    let reused = rec.reused.get();
    let seen = rec.seen.into_inner();
    let mut warnings = Vec::new();
    let last = result.trace.last().expect("at least one round");
    if last.round == opts.rounds && result.trace.len() >= 2 {
        let prev = result.trace[result.trace.len() - 2].det_value;
        if last.det_value - prev >= opts.rel_tol * prev.abs() {
            warnings.push(format!("determinant still growing after {} rounds", opts.rounds));
        }
    }
    if last.failed > 0 {
        warnings.push(format!("{} sampled QFI evaluations failed and were skipped", last.failed));
    }
    let held = holdout_json(&x, &opts, &result, cfg.sampling.holdout)?;
    #[derive(Serialize)]
    struct SampleJson {
        counter: u64,
        split: gaussmetric::probe::ResourceSplit,
        status: &'static str,
        qfi: Option<Vec<Vec<f64>>>,
        qfi_inverse: Option<Vec<Vec<f64>>>,
        containment: Option<f64>,
    }
    let samples = seen
        .into_values()
        .map(|s| {
            let containment = s.qfi.as_ref().map(|j| gaussmetric::metric::containment(&result.metric, j)).transpose()?;
            Ok(SampleJson {
                counter: s.counter,
                status: if s.qfi.is_some() { "ok" } else { "failed" },
                qfi: s.qfi.as_ref().map(rows),
                qfi_inverse: s.qfi.as_ref().and_then(ellipse_form),
                containment,
                split: s.split,
            })
        })
        .collect::<gaussmetric::Result<Vec<_>>>()
        .map_err(numeric)?;
    #[derive(Serialize)]
    struct CacheJson {
        records_before: usize,
        reused: usize,
    }
    #[derive(Serialize)]
    struct Body {
        labels: Vec<String>,
        metric: Vec<Vec<f64>>,
        metric_inverse: Option<Vec<Vec<f64>>>,
        det: f64,
        eps_reg: f64,
        kkt_residual: f64,
        newton_steps: usize,
        trace: Vec<TraceJson>,
        holdout: Option<Value>,
        samples: Vec<SampleJson>,
        cache: Option<CacheJson>,
        warnings: Vec<String>,
    }
    let body = Body {
        labels: labels(&result.labels),
        metric: rows(&result.metric),
        metric_inverse: ellipse_form(&result.metric),
        det: result.det_value,
        eps_reg: result.eps_reg,
        kkt_residual: result.kkt_residual,
        newton_steps: result.newton_steps,
        trace: trace_json(&result.trace),
        holdout: held,
        samples,
        cache: cfg.cache.as_ref().map(|_| CacheJson { records_before: cached_before, reused }),
        warnings,
    };
    Ok(Outcome { report: with_header(head, body), passed: true })
}

fn holdout_json(
    x: &ChannelPoint,
    opts: &gaussmetric::metric::SamplingOptions,
    m: &MetricResult,
    count: usize,
) -> Result<Option<Value>, Failure> {
    if count == 0 {
        return Ok(None);
    }
    let v = holdout(x, opts, m, count).map_err(numeric)?;
    let norm = sym_norm(&m.metric);
    let worst = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(Some(serde_json::json!({
        "requested": count,
        "evaluated": v.len(),
        "max_violation": worst,
        "max_violation_relative": worst / norm,
        "violations": v,
    })))
}

#[derive(Serialize)]
struct Check {
    check: &'static str,
    value: f64,
    tolerance: f64,
    pass: bool,
}

fn check(name: &'static str, value: f64, tolerance: f64) -> Check {
    Check { check: name, value, tolerance, pass: value <= tolerance }
}

#[derive(Serialize)]
struct ErrorJson {
    kind: &'static str,
    message: String,
}

pub fn error_json(e: &Error) -> Value {
    serde_json::to_value(ErrorJson { kind: e.kind(), message: e.to_string() }).expect("serializes")
}

#[derive(Serialize)]
struct CaseJson {
    name: String,
    pass: bool,
    checks: Vec<Check>,
    error: Option<Value>,
}

fn oracle_case(x: &ChannelPoint, probe: &GaussianState, cutoff: usize, fidelity: bool, eps: f64) -> gaussmetric::Result<Vec<Check>> {
    let (j, reg) = qfi::qfi_auto(x, probe, eps)?;
    let probe = match reg {
        Some(e) => qfi::regularize_pure(probe, e)?,
        None => probe.clone(),
    };
    let oracle = oracle_qfi(x, &probe, cutoff)?;
    let solver = oracle.solver();
    let forms = qfi::sld(x, &probe)?;
    let out = channel::apply(x, &probe)?;
    let (mut own, mut engine) = (0.0f64, 0.0f64);
    for (f, d) in forms.iter().zip(&oracle.derivatives) {
        own = own.max(solver.solve(d).residual);
        let lam = sld_form_operator(f, out.mean(), oracle.output.space);
        engine = engine.max(residual_below(&oracle.output, d, &lam, cutoff / 2));
    }
    let mut checks = vec![
        check("oracle_sld_residual", own, SLD_TOL),
        check("engine_sld_residual", engine, SLD_TOL),
        check("qfi_vs_lindblad", rel_frobenius(&oracle.matrix, &j.matrix, 0.0), QFI_TOL),
    ];
    if fidelity {
        let f = qfi_from_fidelity_fd(x, &probe, &x.parameters(), cutoff, FIDELITY_STEP)?;
        checks.push(check("qfi_vs_fidelity", rel_frobenius(&f, &j.matrix, 0.0), FIDELITY_TOL));
    }
    Ok(checks)
}

pub fn run_oracle_check(cfg: &RunConfig, hash: &str) -> Result<Outcome, Failure> {
    cfg.check_common().map_err(Failure::Config)?;
    let cutoff = cfg.oracle.cutoff;
    if cutoff < 2 {
        return Err(Failure::Config(format!("oracle.cutoff = {cutoff} violates cutoff >= 2")));
    }
    let cases: Vec<(String, ChannelPoint, GaussianState)> = if cfg.oracle.grid {
        regression_grid().into_iter().map(|c| (c.name, c.x, c.probe)).collect()
    } else {
        let x = cfg.channel().map_err(Failure::Config)?;
        let (x, probe) = cfg.probe(&x).map_err(Failure::Config)?;
        vec![("configured".into(), x, probe)]
    };
    for (name, x, _) in &cases {
        let dim = (cutoff as f64).powi(x.total_modes() as i32);
        if dim > MAX_FOCK_DIM as f64 {
            return Err(Failure::Config(format!(
                "case {name}: Fock dimension {cutoff}^{} exceeds the oracle limit of {MAX_FOCK_DIM}",
                x.total_modes()
            )));
        }
    }
    let mut out = Vec::new();
    for (name, x, probe) in cases {
        let t = Instant::now();
        let (checks, error) = match oracle_case(&x, &probe, cutoff, cfg.oracle.fidelity, cfg.epsilon) {
            Ok(c) => (c, None),
            Err(e) => (Vec::new(), Some(error_json(&e))),
        };
        let pass = error.is_none() && checks.iter().all(|c| c.pass);
        // timing goes to stderr so reports stay byte-identical across runs
        eprintln!("{} {name} ({:.1} s)", if pass { "PASS" } else { "FAIL" }, t.elapsed().as_secs_f64());
        out.push(CaseJson { name, pass, checks, error });
    }
    let passed = out.iter().all(|c| c.pass);
    #[derive(Serialize)]
    struct Body {
        cutoff: usize,
        pass: bool,
        cases: Vec<CaseJson>,
    }
    let body = Body { cutoff, pass: passed, cases: out };
    Ok(Outcome { report: with_header(header(Task::OracleCheck, cfg, hash), body), passed })
}

pub fn run(task: Task, cfg: &RunConfig) -> Result<Outcome, Failure> {
    if let Some(t) = cfg.task {
        if t != task {
            return Err(Failure::Config(format!("config says task = {:?} but the {} subcommand was used", t.name(), task.name())));
        }
    }
    let hash = cfg.hash(task);
    match task {
        Task::Qfi => run_qfi(cfg, &hash),
        Task::Sld => run_sld(cfg, &hash),
        Task::Metric => run_metric(cfg, &hash),
        Task::OracleCheck => run_oracle_check(cfg, &hash),
    }
}
