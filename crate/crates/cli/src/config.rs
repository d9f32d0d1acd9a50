//! TOML run configuration and its validation.

use std::path::PathBuf;

use gaussmetric::channel::{ChannelPoint, ParameterIndex};
use gaussmetric::gaussian::{self, embed, GaussianState};
use gaussmetric::metric::SamplingOptions;
use gaussmetric::probe::{ProbeSampler, SamplingPolicy};
use gaussmetric::qfi::DEFAULT_EPSILON;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Largest Fock-space dimension `oracle-check` will build.
pub const MAX_FOCK_DIM: usize = 1600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Qfi,
    Sld,
    Metric,
    OracleCheck,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Qfi => "qfi",
            Task::Sld => "sld",
            Task::Metric => "metric",
            Task::OracleCheck => "oracle-check",
        }
    }
}

/// An explicit probe on all `modes + ancilla_count` modes of the channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProbeConfig {
    Vacuum,
    /// Product of thermal states with these mean photon numbers.
    Thermal { nbar: Vec<f64> },
    /// Coherent amplitude on mode 0, vacuum elsewhere.
    Coherent { re: f64, im: f64 },
    /// Two-mode squeezed vacuum on modes 0 and 1, vacuum elsewhere.
    TwoModeSqueezed { r: f64 },
    /// Explicit moments in `(Q1, P1, Q2, P2, …)` order, vacuum `cov = 1/2`.
    Gaussian { mean: Vec<f64>, cov: Vec<Vec<f64>> },
    /// Probe number `counter` of the configured sampler. Always uses one
    /// ancilla per channel mode.
    Sampled { counter: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub policy: SamplingPolicy,
    pub rounds: usize,
    pub batch: usize,
    pub rel_tol: f64,
    /// Fresh probes checked against the final metric.
    pub holdout: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { policy: SamplingPolicy::Random, rounds: 50, batch: 20, rel_tol: 1e-4, holdout: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub cutoff: usize,
    /// Run the built-in regression grid instead of the configured instance.
    pub grid: bool,
    /// Also compare against the fidelity-Hessian QFI.
    pub fidelity: bool,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { cutoff: 20, grid: false, fidelity: false }
    }
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// If present, must agree with the subcommand.
    #[serde(default)]
    pub task: Option<Task>,
    #[serde(default)]
    pub channel: Option<ChannelPoint>,
    #[serde(default)]
    pub probe: Option<ProbeConfig>,
    /// Mean photon number allowed on the channel modes.
    #[serde(default)]
    pub budget: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Parameter labels such as `"gamma[0]"`; all parameters if absent.
    #[serde(default)]
    pub params: Option<Vec<String>>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub cache: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("every field has a default")
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let cfg: Self = toml::from_str(text).map_err(|e| e.to_string())?;
        // serde lets unit variants such as `kind = "vacuum"` swallow extra
        // keys, so compare against what the parsed value writes back
        let raw: toml::Value = toml::from_str(text).map_err(|e| e.to_string())?;
        let back = toml::Value::try_from(&cfg).map_err(|e| e.to_string())?;
        let mut extra = Vec::new();
        unknown_keys(&raw, &back, "", &mut extra);
        match extra.first() {
            Some(k) => Err(format!("unknown field `{k}`")),
            None => Ok(cfg),
        }
    }

    /// SHA-256 of the canonical JSON form, output and cache paths excluded.
    pub fn hash(&self, task: Task) -> String {
        let mut c = self.clone();
        c.task = Some(task);
        c.out = None;
        c.cache = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn channel(&self) -> Result<ChannelPoint, String> {
        let x = self.channel.clone().ok_or("config has no [channel] table")?;
        ChannelPoint::new(x.modes, x.ancilla_count).map_err(|e| e.to_string())
    }

    pub fn labels(&self, x: &ChannelPoint) -> Result<Vec<ParameterIndex>, String> {
        let Some(names) = &self.params else { return Ok(x.parameters()) };
        if names.is_empty() {
            return Err("params must not be empty".into());
        }
        let all = x.parameters();
        let mut out = Vec::new();
        for s in names {
            let p: ParameterIndex = s.parse().map_err(|e: gaussmetric::Error| e.to_string())?;
            if !all.contains(&p) {
                return Err(format!("parameter {s} does not exist on a {}-mode channel", x.channel_modes()));
            }
            if out.contains(&p) {
                return Err(format!("parameter {s} is listed twice"));
            }
            out.push(p);
        }
        Ok(out)
    }

    fn budget(&self) -> Result<Option<f64>, String> {
        match self.budget {
            Some(b) if !(b.is_finite() && b >= 0.0) => Err(format!("budget = {b} violates budget >= 0")),
            b => Ok(b),
        }
    }

    pub fn check_common(&self) -> Result<(), String> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(format!("epsilon = {} violates epsilon > 0", self.epsilon));
        }
        self.budget()?;
        Ok(())
    }

    pub fn sampling_options(&self, x: &ChannelPoint) -> Result<SamplingOptions, String> {
        let s = &self.sampling;
        if s.rounds == 0 || s.batch == 0 {
            return Err("sampling.rounds and sampling.batch must be positive".into());
        }
        if !(s.rel_tol.is_finite() && s.rel_tol >= 0.0) {
            return Err(format!("sampling.rel_tol = {} violates rel_tol >= 0", s.rel_tol));
        }
        let budget = self.budget()?.ok_or("the sampler needs a budget")?;
        ProbeSampler::new(x.channel_modes(), budget, s.policy.clone())
            .draw(self.seed, 0)
            .map_err(|e| format!("sampling.policy: {e}"))?;
        let mut opts = SamplingOptions::new(budget, s.rounds, s.batch, self.seed);
        opts.rel_tol = s.rel_tol;
        opts.policy = s.policy.clone();
        opts.epsilon = self.epsilon;
        opts.params = self.params.as_ref().map(|_| self.labels(x)).transpose()?;
        Ok(opts)
    }

    /// The channel the probe acts on, and the probe.
    pub fn probe(&self, x: &ChannelPoint) -> Result<(ChannelPoint, GaussianState), String> {
        let spec = self.probe.as_ref().ok_or("config has no [probe] table")?;
        if let ProbeConfig::Sampled { counter } = spec {
            let xe = x.with_ancillas(x.channel_modes());
            let opts = self.sampling_options(x)?;
            let p = ProbeSampler::new(x.channel_modes(), opts.budget, opts.policy)
                .sample(self.seed, *counter)
                .map_err(|e| e.to_string())?;
            return Ok((xe, p));
        }
        let n = x.total_modes();
        let state = match spec {
            ProbeConfig::Vacuum => GaussianState::vacuum(n),
            ProbeConfig::Thermal { nbar } => {
                if nbar.len() != n {
                    return Err(format!("probe.nbar has {} entries for {n} modes", nbar.len()));
                }
                if let Some(b) = nbar.iter().find(|b| !(b.is_finite() && **b >= 0.0)) {
                    return Err(format!("probe.nbar entry {b} violates nbar >= 0"));
                }
                let nu: Vec<f64> = nbar.iter().map(|b| 2.0 * b + 1.0).collect();
                GaussianState::thermal(&nu).map_err(|e| e.to_string())?
            }
            ProbeConfig::Coherent { re, im } => {
                let c = GaussianState::coherent(Complex64::new(*re, *im));
                if n == 1 {
                    c
                } else {
                    c.tensor(&GaussianState::vacuum(n - 1))
                }
            }
            ProbeConfig::TwoModeSqueezed { r } => {
                if n < 2 {
                    return Err("a two-mode squeezed probe needs at least two modes".into());
                }
                GaussianState::vacuum(n).transformed(&embed(&gaussian::two_mode_squeezer(*r), &[0, 1], n))
            }
            ProbeConfig::Gaussian { mean, cov } => {
                if mean.len() != 2 * n || cov.len() != 2 * n || cov.iter().any(|r| r.len() != 2 * n) {
                    return Err(format!("probe moments must be {0} and {0}x{0} for {n} modes", 2 * n));
                }
                let m = DVector::from_column_slice(mean);
                let c = DMatrix::from_fn(2 * n, 2 * n, |i, j| cov[i][j]);
                GaussianState::new(m, c).map_err(|e| format!("probe: {e}"))?
            }
            ProbeConfig::Sampled { .. } => unreachable!(),
        };
        if let Some(b) = self.budget()? {
            let used = gaussian::mean_photon(&state, &(0..x.channel_modes()).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
            if used > b * (1.0 + 1e-12) + 1e-12 {
                return Err(format!("probe puts {used} photons on the channel modes, above budget = {b}"));
            }
        }
        Ok((x.clone(), state))
    }
}

fn unknown_keys(raw: &toml::Value, back: &toml::Value, path: &str, out: &mut Vec<String>) {
    match (raw, back) {
        (toml::Value::Table(r), toml::Value::Table(b)) => {
            for (k, v) in r {
                let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get(k) {
                    Some(w) => unknown_keys(v, w, &p, out),
                    None => out.push(p),
                }
            }
        }
        (toml::Value::Array(r), toml::Value::Array(b)) => {
            for (i, (v, w)) in r.iter().zip(b).enumerate() {
                unknown_keys(v, w, &format!("{path}[{i}]"), out);
            }
        }
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extra_keys_under_unit_variants_are_rejected() {
        let base = "[channel]\n[[channel.modes]]\ngamma = 0.1\nn = 0.0\n";
        assert!(RunConfig::parse(&format!("{base}[probe]\nkind = \"vacuum\"\n")).is_ok());
        let e = RunConfig::parse(&format!("{base}[probe]\nkind = \"vacuum\"\nr = 1.0\n")).unwrap_err();
        assert!(e.contains("probe.r"), "{e}");
        let e = RunConfig::parse(&format!("{base}[sampling]\npolicy = {{ kind = \"random\", w = 1 }}\n")).unwrap_err();
        assert!(e.contains("sampling.policy.w"), "{e}");
        let e = RunConfig::parse(&format!("{base}colour = 1\n")).unwrap_err();
        assert!(e.contains("unknown field"), "{e}");
    }

    #[test]
    fn hash_ignores_paths_only() {
        let a = RunConfig::parse("seed = 1\nout = \"a.json\"\n").unwrap();
        let b = RunConfig::parse("seed = 1\ncache = \"c.bin\"\n").unwrap();
        let c = RunConfig::parse("seed = 2\n").unwrap();
        assert_eq!(a.hash(Task::Metric), b.hash(Task::Metric));
        assert_ne!(a.hash(Task::Metric), c.hash(Task::Metric));
        assert_ne!(a.hash(Task::Metric), a.hash(Task::Qfi));
    }
}
