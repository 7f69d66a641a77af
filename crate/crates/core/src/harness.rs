//! Experiment configuration, seeded run matrix, and CSV/JSON artifacts.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bandit::{Benchmarked, Environment, RunTrace};
use crate::corral::{run_cbslb, CorralConfig};
use crate::design::{choose_u_hat, DesignSettings, RelaxationCache, UHatMode};
use crate::error::{Error, Result};
use crate::lasso::{lasso_fit, LassoConfig, Regression};
use crate::model::{gen_hard_arms, gen_sparse_theta, gen_sphere_arms, hard_theta, l1_norm, ArmSet, Instance};
use crate::policies::{
    run_bslb, run_estc_rejection, run_random, run_ridge_etc, BslbConfig, PolicyContext,
};
use crate::rng::{stream, stream_id};

pub const CSV_HEADER: &str = "run_id,policy,seed,t,arm_index,reward,expected_reward,cum_regret";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSpec {
    /// `l` unit-norm arms, the rest at `low_norm`; `k`-sparse parameter on the
    /// coordinates the strong arms cover best.
    Hard { m: usize, d: usize, l: usize, low_norm: f64, k: usize, sigma: f64 },
    /// Uniform arms on the sphere; parameter with `k` head coordinates and
    /// tail ratio `beta`.
    SphereSparse { m: usize, d: usize, k: usize, beta: f64, sigma: f64 },
    /// Fixed instance from a JSON file (same parameter for every seed).
    File { path: PathBuf },
}

impl InstanceSpec {
    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut sigma_ok = |s: f64| {
            if !(s >= 0.0 && s.is_finite()) {
                out.push(format!("instance.sigma must be finite and >= 0, got {s}"));
            }
        };
        match *self {
            InstanceSpec::Hard { sigma, .. } | InstanceSpec::SphereSparse { sigma, .. } => sigma_ok(sigma),
            InstanceSpec::File { .. } => {}
        }
        match self {
            InstanceSpec::Hard { m, d, l, low_norm, k, .. } => {
                if *d == 0 || *k == 0 || k > d {
                    out.push(format!("instance needs 1 <= k <= d, got k = {k}, d = {d}"));
                }
                if l >= m {
                    out.push(format!("instance.l must be below m, got l = {l}, m = {m}"));
                }
                if !(*low_norm > 0.0 && *low_norm <= 1.0) {
                    out.push(format!("instance.low_norm must lie in (0, 1], got {low_norm}"));
                }
            }
            InstanceSpec::SphereSparse { m, d, k, beta, .. } => {
                if *m == 0 || *d == 0 || *k == 0 || k > d {
                    out.push(format!("instance needs m >= 1 and 1 <= k <= d, got m = {m}, k = {k}, d = {d}"));
                }
                if !(*beta >= 0.0 && beta.is_finite()) {
                    out.push(format!("instance.beta must be finite and >= 0, got {beta}"));
                }
            }
            InstanceSpec::File { .. } => {}
        }
        out
    }

    /// Arm count and dimension, without generating anything.
    fn shape(&self) -> Result<(usize, usize)> {
        match self {
            InstanceSpec::Hard { m, d, .. } | InstanceSpec::SphereSparse { m, d, .. } => Ok((*m, *d)),
            InstanceSpec::File { path } => {
                let inst = Instance::load(path)?;
                Ok((inst.num_arms(), inst.dim()))
            }
        }
    }
}

/// One policy and its settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    Bslb(BslbConfig),
    RidgeEtc(BslbConfig),
    EstcRejection(BslbConfig),
    Random,
    Corral(CorralConfig),
}

impl PolicyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Bslb(_) => "bslb",
            PolicyKind::RidgeEtc(_) => "ridge_etc",
            PolicyKind::EstcRejection(_) => "estc_rejection",
            PolicyKind::Random => "random",
            PolicyKind::Corral(_) => "corral",
        }
    }

    fn base_config_mut(&mut self) -> Option<&mut BslbConfig> {
        match self {
            PolicyKind::Bslb(c) | PolicyKind::RidgeEtc(c) | PolicyKind::EstcRejection(c) => Some(c),
            PolicyKind::Corral(c) => Some(&mut c.base),
            PolicyKind::Random => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub id: String,
    pub policy: PolicyKind,
}

/// Settings applied to every policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Constants {
    /// Overrides every policy's `c_explore` when set.
    pub c_explore: Option<f64>,
    /// Used for policies with `u_hat = 0`.
    pub c_u: f64,
    pub lambda_lower: f64,
    pub u_hat_mode: UHatMode,
    pub design: DesignSettings,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            c_explore: None,
            c_u: 1.0,
            lambda_lower: 1.0,
            u_hat_mode: UHatMode::Quality,
            design: DesignSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub master_seed: u64,
    pub instance: InstanceSpec,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub policies: Vec<PolicySpec>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub constants: Constants,
    /// Write per-round corral probabilities to `corral_probs.csv`.
    #[serde(default)]
    pub log_corral_probs: bool,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Every field problem, or the resolved config when there are none.
    pub fn validate(&self) -> Result<ExperimentConfig> {
        let mut problems = self.instance.problems();
        if self.horizon == 0 {
            problems.push("horizon must be positive".into());
        }
        if self.seeds.is_empty() {
            problems.push("seeds must not be empty".into());
        }
        let mut seen = HashSet::new();
        if self.seeds.iter().any(|s| !seen.insert(*s)) {
            problems.push("seeds must be distinct".into());
        }
        if self.policies.is_empty() {
            problems.push("policies must not be empty".into());
        }
        let mut ids = HashSet::new();
        for p in &self.policies {
            if p.id.is_empty() || p.id.contains([',', '"', '\n']) {
                problems.push(format!("policy id {:?} must be nonempty without commas, quotes or newlines", p.id));
            }
            if !ids.insert(p.id.as_str()) {
                problems.push(format!("duplicate policy id {:?}", p.id));
            }
        }
        if let Some(c) = self.constants.c_explore {
            if !(c > 0.0 && c.is_finite()) {
                problems.push(format!("constants.c_explore must be positive, got {c}"));
            }
        }
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }

        let (m, d) = self.instance.shape()?;
        if m < d {
            // Every subset Gram matrix is singular, so no design has positive lambda_min.
            problems.push(format!("instance has {m} arms in dimension {d}; need at least d arms"));
        }
        if self.horizon > m {
            problems.push(format!("horizon {} exceeds the {m} arms of the instance", self.horizon));
        }
        let mut resolved = self.clone();
        for p in &mut resolved.policies {
            let id = p.id.clone();
            if let Some(c) = p.policy.base_config_mut() {
                if let Some(ce) = self.constants.c_explore {
                    c.c_explore = ce;
                }
                if c.u_hat == 0 {
                    match choose_u_hat(d, self.constants.lambda_lower, self.constants.u_hat_mode, self.constants.c_u) {
                        Ok(u) => c.u_hat = u.min(m),
                        Err(e) => problems.push(format!("policy {id}: {e}")),
                    }
                }
            }
            let found = match &p.policy {
                PolicyKind::Bslb(c) | PolicyKind::RidgeEtc(c) => c.problems(d, m, self.horizon),
                PolicyKind::EstcRejection(c) => {
                    let mut c = c.clone();
                    c.u_hat = 1;
                    c.problems(d, m, self.horizon)
                }
                PolicyKind::Corral(c) => c.problems(d, m, self.horizon),
                PolicyKind::Random => Vec::new(),
            };
            problems.extend(found.into_iter().map(|f| format!("policy {id}: {f}")));
        }
        if problems.is_empty() {
            Ok(resolved)
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// Builds per-seed instances sharing one arm set.
#[derive(Debug)]
pub struct InstanceFactory {
    spec: InstanceSpec,
    master_seed: u64,
    arms: Option<ArmSet>,
    fixed: Option<Instance>,
}

impl InstanceFactory {
    pub fn new(spec: &InstanceSpec, master_seed: u64) -> Result<Self> {
        let mut rng = stream(master_seed, &["arms"]);
        let (arms, fixed) = match spec {
            InstanceSpec::Hard { m, d, l, low_norm, .. } => (Some(gen_hard_arms(*m, *d, *l, *low_norm, &mut rng)?), None),
            InstanceSpec::SphereSparse { m, d, .. } => (Some(gen_sphere_arms(*m, *d, &mut rng)?), None),
            InstanceSpec::File { path } => (None, Some(Instance::load(path)?)),
        };
        Ok(Self { spec: spec.clone(), master_seed, arms, fixed })
    }

    /// Instance for one seed: shared arms, parameter drawn from the seed's stream.
    pub fn instance(&self, seed: u64) -> Result<Instance> {
        if let Some(inst) = &self.fixed {
            return Ok(inst.clone());
        }
        let arms = self.arms.clone().expect("generated arms");
        let mut rng = stream(self.master_seed, &["theta", &seed.to_string()]);
        match self.spec {
            InstanceSpec::Hard { l, k, sigma, .. } => Instance::new(arms.clone(), hard_theta(&arms, l, k, &mut rng)?, sigma),
            InstanceSpec::SphereSparse { d, k, beta, sigma, .. } => {
                Instance::new(arms, gen_sparse_theta(d, k, beta, &mut rng)?, sigma)
            }
            InstanceSpec::File { .. } => unreachable!("file instances are fixed"),
        }
    }
}

/// One (policy, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: usize,
    pub policy: String,
    pub seed: u64,
    pub trace: RunTrace,
    pub info: Value,
    pub corral_probs: Option<Vec<Vec<f64>>>,
    pub noise_stream: u64,
    pub policy_stream: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub kind: String,
    pub runs: usize,
    /// Mean cumulative regret per round across seeds.
    pub mean: Vec<f64>,
    /// Sample standard deviation per round (zero for a single seed).
    pub std: Vec<f64>,
    pub final_mean: f64,
    pub final_std: f64,
    pub final_se: f64,
    pub final_quantiles: Quantiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub horizon: usize,
    pub seeds: Vec<u64>,
    pub policies: Vec<PolicySummary>,
}

impl Summary {
    pub fn policy(&self, id: &str) -> Option<&PolicySummary> {
        self.policies.iter().find(|p| p.policy == id)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub summary: Summary,
    pub runs: Vec<RunRecord>,
}

impl ExperimentResult {
    pub fn runs_of<'a>(&'a self, policy: &'a str) -> impl Iterator<Item = &'a RunRecord> + 'a {
        self.runs.iter().filter(move |r| r.policy == policy)
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn summarize(name: &str, horizon: usize, seeds: &[u64], specs: &[PolicySpec], runs: &[RunRecord]) -> Summary {
    let policies = specs
        .iter()
        .map(|spec| {
            let traces: Vec<&RunTrace> = runs.iter().filter(|r| r.policy == spec.id).map(|r| &r.trace).collect();
            let (mut mean, mut std) = (Vec::with_capacity(horizon), Vec::with_capacity(horizon));
            for t in 0..horizon {
                let col: Vec<f64> = traces.iter().map(|tr| tr.cum_regret[t]).collect();
                let (m, s) = mean_std(&col);
                mean.push(m);
                std.push(s);
            }
            let mut finals: Vec<f64> = traces.iter().map(|tr| tr.final_regret()).collect();
            let (final_mean, final_std) = mean_std(&finals);
            finals.sort_by(f64::total_cmp);
            PolicySummary {
                policy: spec.id.clone(),
                kind: spec.policy.name().to_string(),
                runs: traces.len(),
                mean,
                std,
                final_mean,
                final_std,
                final_se: final_std / (traces.len() as f64).sqrt(),
                final_quantiles: Quantiles {
                    min: finals[0],
                    q25: quantile(&finals, 0.25),
                    median: quantile(&finals, 0.5),
                    q75: quantile(&finals, 0.75),
                    max: finals[finals.len() - 1],
                },
            }
        })
        .collect();
    Summary { name: name.to_string(), horizon, seeds: seeds.to_vec(), policies }
}

fn run_one(
    cfg: &ExperimentConfig,
    spec: &PolicySpec,
    seed: u64,
    run_id: usize,
    bench: Arc<Benchmarked>,
    cache: &RelaxationCache,
) -> Result<RunRecord> {
    let seed_label = seed.to_string();
    let noise_labels = ["noise", spec.id.as_str(), seed_label.as_str()];
    let policy_labels = ["policy", spec.id.as_str(), seed_label.as_str()];
    let env = Environment::new(bench, stream(cfg.master_seed, &noise_labels));
    let mut rng = stream(cfg.master_seed, &policy_labels);
    let ctx = PolicyContext { design: cfg.constants.design, cache: Some(cache) };
    let horizon = cfg.horizon;
    let (trace, info, corral_probs) = match &spec.policy {
        PolicyKind::Bslb(c) => {
            let run = run_bslb(env, horizon, c, &ctx, &mut rng)?;
            (run.trace, serde_json::to_value(run.info)?, None)
        }
        PolicyKind::RidgeEtc(c) => {
            let run = run_ridge_etc(env, horizon, c, &ctx, &mut rng)?;
            (run.trace, serde_json::to_value(run.info)?, None)
        }
        PolicyKind::EstcRejection(c) => {
            let run = run_estc_rejection(env, horizon, c, &ctx, &mut rng)?;
            (run.trace, serde_json::to_value(run.info)?, None)
        }
        PolicyKind::Random => {
            let run = run_random(env, horizon, &mut rng)?;
            (run.trace, serde_json::to_value(run.info)?, None)
        }
        PolicyKind::Corral(c) => {
            let run = run_cbslb(env, horizon, c, &ctx, &mut rng)?;
            (run.trace, serde_json::to_value(run.info)?, Some(run.probs))
        }
    };
    if !trace.respects_blocking() {
        return Err(Error::BlockingViolation(usize::MAX));
    }
    Ok(RunRecord {
        run_id,
        policy: spec.id.clone(),
        seed,
        trace,
        info,
        corral_probs,
        noise_stream: stream_id(cfg.master_seed, &noise_labels),
        policy_stream: stream_id(cfg.master_seed, &policy_labels),
    })
}

/// Run every (policy, seed) pair. `jobs` bounds the worker threads (default:
/// all cores). Results are ordered by run id regardless of scheduling.
pub fn execute(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<ExperimentResult> {
    let cfg = cfg.validate()?;
    let factory = InstanceFactory::new(&cfg.instance, cfg.master_seed)?;
    let benches: Vec<Arc<Benchmarked>> =
        cfg.seeds.iter().map(|&s| factory.instance(s).map(Benchmarked::new)).collect::<Result<_>>()?;
    let cache = RelaxationCache::new();
    let n_seeds = cfg.seeds.len();
    let jobs_list: Vec<(usize, &PolicySpec, usize)> = cfg
        .policies
        .iter()
        .enumerate()
        .flat_map(|(pi, spec)| (0..n_seeds).map(move |si| (pi * n_seeds + si, spec, si)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let mut runs: Vec<RunRecord> = pool.install(|| {
        jobs_list
            .par_iter()
            .map(|&(run_id, spec, si)| {
                run_one(&cfg, spec, cfg.seeds[si], run_id, Arc::clone(&benches[si]), &cache)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    runs.sort_by_key(|r| r.run_id);
    let summary = summarize(&cfg.name, cfg.horizon, &cfg.seeds, &cfg.policies, &runs);
    info!("{}: {} runs finished", cfg.name, runs.len());
    Ok(ExperimentResult { config: cfg, summary, runs })
}

pub fn write_runs_csv<W: Write>(out: &mut W, runs: &[RunRecord]) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in runs {
        let tr = &r.trace;
        for t in 0..tr.len() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.run_id,
                r.policy,
                r.seed,
                t + 1,
                tr.arm_indices[t],
                tr.rewards[t],
                tr.expected_rewards[t],
                tr.cum_regret[t]
            )?;
        }
    }
    Ok(())
}

fn write_probs_csv<W: Write>(out: &mut W, runs: &[RunRecord], specs: &[PolicySpec]) -> Result<()> {
    writeln!(out, "run_id,policy,seed,t,base,sparsity_k,prob")?;
    for r in runs {
        let Some(probs) = &r.corral_probs else { continue };
        let grid: Vec<usize> = r
            .info
            .get("grid")
            .and_then(|g| serde_json::from_value(g.clone()).ok())
            .unwrap_or_default();
        debug_assert!(specs.iter().any(|s| s.id == r.policy));
        for (t, row) in probs.iter().enumerate() {
            for (b, p) in row.iter().enumerate() {
                let k = grid.get(b).copied().unwrap_or(0);
                writeln!(out, "{},{},{},{},{b},{k},{p}", r.run_id, r.policy, r.seed, t + 1)?;
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct RunMeta<'a> {
    run_id: usize,
    policy: &'a str,
    seed: u64,
    noise_stream: u64,
    policy_stream: u64,
    theta_stream: Option<u64>,
    final_regret: f64,
    info: &'a Value,
}

fn metadata(result: &ExperimentResult) -> Value {
    let cfg = &result.config;
    let generated = !matches!(cfg.instance, InstanceSpec::File { .. });
    let runs: Vec<RunMeta<'_>> = result
        .runs
        .iter()
        .map(|r| RunMeta {
            run_id: r.run_id,
            policy: &r.policy,
            seed: r.seed,
            noise_stream: r.noise_stream,
            policy_stream: r.policy_stream,
            theta_stream: generated.then(|| stream_id(cfg.master_seed, &["theta", &r.seed.to_string()])),
            final_regret: r.trace.final_regret(),
            info: &r.info,
        })
        .collect();
    let mut notes = BTreeMap::new();
    notes.insert("arms_stream", Value::from(stream_id(cfg.master_seed, &["arms"])));
    if matches!(cfg.instance, InstanceSpec::Hard { .. }) {
        notes.insert(
            "hard_theta_support",
            Value::from("top-k coordinates by l1 mass of the high-norm arms; magnitudes U[0.5,1], random signs"),
        );
    }
    serde_json::json!({
        "package_version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "instance": notes,
        "runs": runs,
    })
}

/// Write `runs.csv`, `summary.json`, `metadata.json`, `config.json` and,
/// when requested, `corral_probs.csv` into `dir`.
pub fn write_artifacts(result: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut csv = BufWriter::new(fs::File::create(dir.join("runs.csv"))?);
    write_runs_csv(&mut csv, &result.runs)?;
    csv.flush()?;
    if result.config.log_corral_probs && result.runs.iter().any(|r| r.corral_probs.is_some()) {
        let mut probs = BufWriter::new(fs::File::create(dir.join("corral_probs.csv"))?);
        write_probs_csv(&mut probs, &result.runs, &result.config.policies)?;
        probs.flush()?;
    }
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&result.summary)? + "\n")?;
    fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&metadata(result))? + "\n")?;
    fs::write(dir.join("config.json"), result.config.to_json()?)?;
    Ok(())
}

/// Validate, run, and write artifacts to `output_dir` (or the config's own).
pub fn run_experiment(cfg: &ExperimentConfig, output_dir: Option<&Path>, jobs: Option<usize>) -> Result<ExperimentResult> {
    let result = execute(cfg, jobs)?;
    let dir = output_dir.map(Path::to_path_buf).or_else(|| cfg.output_dir.clone());
    if let Some(dir) = dir {
        write_artifacts(&result, &dir)?;
    }
    Ok(result)
}

pub const PRESET_NAMES: [&str; 3] = ["fig1", "sim-appendix-scaled", "unit-tiny"];

fn bslb(k: usize, u_hat: usize, c_explore: f64) -> BslbConfig {
    BslbConfig { sparsity_k: k, u_hat, c_explore, rounding_repeats: 5, ..BslbConfig::default() }
}

/// Ready-to-run configurations.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let seeds: Vec<u64> = (0..20).collect();
    match name {
        "fig1" => {
            let base = BslbConfig {
                explore_budget_override: Some(40),
                lambda_noise_scale: Some(0.1),
                ..bslb(5, 200, 1.0)
            };
            Some(ExperimentConfig {
                name: name.into(),
                master_seed: 2024,
                instance: InstanceSpec::Hard { m: 500, d: 100, l: 5, low_norm: 0.5, k: 5, sigma: 0.1 },
                horizon: 80,
                seeds,
                policies: vec![
                    PolicySpec { id: "bslb".into(), policy: PolicyKind::Bslb(base.clone()) },
                    PolicySpec { id: "estc_rejection".into(), policy: PolicyKind::EstcRejection(base.clone()) },
                    PolicySpec { id: "ridge_etc".into(), policy: PolicyKind::RidgeEtc(base) },
                    PolicySpec { id: "random".into(), policy: PolicyKind::Random },
                ],
                output_dir: Some(PathBuf::from("out/fig1")),
                constants: Constants::default(),
                log_corral_probs: false,
            })
        }
        "sim-appendix-scaled" => {
            let d = 200;
            let mut policies: Vec<PolicySpec> = crate::corral::sparsity_grid(d)
                .into_iter()
                .map(|k| PolicySpec { id: format!("bslb_k{k}"), policy: PolicyKind::Bslb(sim_base(k)) })
                .collect();
            let corral = CorralConfig {
                eta_init: Some((7.0f64 / 150.0).sqrt()),
                base: sim_base(1),
                ..CorralConfig::default()
            };
            policies.push(PolicySpec { id: "cbslb".into(), policy: PolicyKind::Corral(corral.clone()) });
            policies.push(PolicySpec {
                id: "ridge_corral".into(),
                policy: PolicyKind::Corral(CorralConfig { estimator: crate::policies::Estimator::Ridge, ..corral }),
            });
            policies.push(PolicySpec { id: "random".into(), policy: PolicyKind::Random });
            Some(ExperimentConfig {
                name: name.into(),
                master_seed: 2024,
                instance: InstanceSpec::SphereSparse { m: 2000, d, k: 10, beta: 3.0, sigma: 0.1 },
                horizon: 150,
                seeds,
                policies,
                output_dir: Some(PathBuf::from("out/sim-appendix-scaled")),
                constants: Constants::default(),
                log_corral_probs: true,
            })
        }
        "unit-tiny" => {
            let base = BslbConfig { enable_search: true, ..bslb(1, 6, 0.5) };
            Some(ExperimentConfig {
                name: name.into(),
                master_seed: 7,
                instance: InstanceSpec::SphereSparse { m: 12, d: 3, k: 1, beta: 0.0, sigma: 0.1 },
                horizon: 8,
                seeds: (0..5).collect(),
                policies: vec![
                    PolicySpec { id: "bslb".into(), policy: PolicyKind::Bslb(base.clone()) },
                    PolicySpec { id: "estc_rejection".into(), policy: PolicyKind::EstcRejection(base.clone()) },
                    PolicySpec { id: "ridge_etc".into(), policy: PolicyKind::RidgeEtc(base.clone()) },
                    PolicySpec { id: "random".into(), policy: PolicyKind::Random },
                    PolicySpec {
                        id: "cbslb".into(),
                        policy: PolicyKind::Corral(CorralConfig { base, ..CorralConfig::default() }),
                    },
                ],
                output_dir: Some(PathBuf::from("out/unit-tiny")),
                constants: Constants::default(),
                log_corral_probs: true,
            })
        }
        _ => None,
    }
}

fn sim_base(k: usize) -> BslbConfig {
    BslbConfig { lambda_noise_scale: Some(0.1), ..bslb(k, 400, 0.001) }
}

/// Lasso error-scaling sweep on Rademacher designs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoBenchConfig {
    pub d: usize,
    pub k: usize,
    pub beta: f64,
    pub sigma: f64,
    pub ns: Vec<usize>,
    pub seeds: usize,
    pub master_seed: u64,
    /// Penalty is `lambda_scale * sqrt(n ln d)` on the unnormalized loss.
    pub lambda_scale: f64,
}

impl Default for LassoBenchConfig {
    fn default() -> Self {
        Self { d: 200, k: 5, beta: 0.0, sigma: 0.5, ns: vec![200, 800, 3200], seeds: 50, master_seed: 11, lambda_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoBenchResult {
    pub ns: Vec<usize>,
    pub median_l1_error: Vec<f64>,
    /// Least-squares slope of `ln(median error)` against `ln n`.
    pub slope: f64,
}

pub fn lasso_bench(cfg: &LassoBenchConfig) -> Result<LassoBenchResult> {
    if cfg.ns.len() < 2 || cfg.seeds == 0 || cfg.d < 2 || cfg.k == 0 || cfg.k > cfg.d {
        return Err(Error::InvalidArgument("lasso bench needs >= 2 sample sizes, seeds > 0, 1 <= k <= d, d >= 2".into()));
    }
    let mut medians = Vec::with_capacity(cfg.ns.len());
    for &n in &cfg.ns {
        let errors: Vec<f64> = (0..cfg.seeds)
            .into_par_iter()
            .map(|s| -> Result<f64> {
                let mut rng = stream(cfg.master_seed, &["lasso-bench", &n.to_string(), &s.to_string()]);
                let theta = gen_sparse_theta(cfg.d, cfg.k, cfg.beta, &mut rng)?;
                let rows: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..cfg.d).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect())
                    .collect();
                let r: Vec<f64> = rows
                    .iter()
                    .map(|x| {
                        let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                        crate::model::dot(x, theta.as_slice()) + cfg.sigma * z
                    })
                    .collect();
                let reg = Regression::new(&rows, &r)?;
                let lambda = cfg.lambda_scale * (n as f64 * (cfg.d as f64).ln()).sqrt();
                let fit = lasso_fit(&reg, &LassoConfig::new(lambda))?;
                let diff: Vec<f64> = fit.theta.iter().zip(theta.as_slice()).map(|(a, b)| a - b).collect();
                Ok(l1_norm(&diff))
            })
            .collect::<Result<_>>()?;
        let mut sorted = errors;
        sorted.sort_by(f64::total_cmp);
        medians.push(quantile(&sorted, 0.5));
    }
    let xs: Vec<f64> = cfg.ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = medians.iter().map(|e| e.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / xs.len() as f64, ys.iter().sum::<f64>() / ys.len() as f64);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(LassoBenchResult { ns: cfg.ns.clone(), median_l1_error: medians, slope: sxy / sxx })
}
