//! Corralling of BSLB bases over an exponential sparsity grid.
//!
//! The master keeps a distribution over bases updated by log-barrier online
//! mirror descent on importance-weighted losses, mixes in a `1/T` share of the
//! uniform distribution, and raises a base's learning rate whenever its
//! sampling probability hits a new low.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::{Environment, RunTrace};
use crate::design::get_good_subset;
use crate::error::{Error, Result};
use crate::policies::{explore_budget_with, BslbConfig, EtcAgent, Estimator, PolicyContext};

/// Bisection tolerance on the normalizer, relative to its scale.
const NORMALIZER_TOL: f64 = 1e-12;

/// `{1, 2, 4, ..., 2^floor(log2 d)}`.
pub fn sparsity_grid(d: usize) -> Vec<usize> {
    if d == 0 {
        return Vec::new();
    }
    let top = usize::BITS - 1 - d.leading_zeros();
    (0..=top).map(|i| 1usize << i).collect()
}

/// `min(1 / (40 T r_best), sqrt(floor(log2 d) / T))`.
pub fn default_eta(d: usize, horizon: usize, r_best_bound: f64) -> f64 {
    let log_d = if d == 0 { 0 } else { usize::BITS - 1 - d.leading_zeros() };
    let t = horizon as f64;
    (1.0 / (40.0 * t * r_best_bound)).min((log_d as f64 / t).sqrt())
}

/// `(scale - r) / (2 scale)` clamped to `[0, 1]`.
pub fn reward_to_loss(reward: f64, scale: f64) -> f64 {
    ((scale - reward) / (2.0 * scale)).clamp(0.0, 1.0)
}

/// `loss / prob` for the sampled base, zero for the others.
pub fn importance_weighted(losses: &[f64], probs: &[f64], sampled: usize) -> Vec<f64> {
    let mut out = vec![0.0; losses.len()];
    out[sampled] = losses[sampled] / probs[sampled];
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorralState {
    /// Mirror-descent iterate before mixing.
    pub p: Vec<f64>,
    /// Sampling distribution `(1 - gamma) p + gamma / B`.
    pub probs: Vec<f64>,
    pub rho: Vec<f64>,
    pub eta: Vec<f64>,
    pub beta_growth: f64,
    pub gamma: f64,
    pub round: usize,
    /// Number of rate increases per base.
    pub boosts: Vec<usize>,
}

impl CorralState {
    pub fn new(bases: usize, horizon: usize, eta_init: f64) -> Result<Self> {
        if bases == 0 {
            return Err(Error::InvalidArgument("corral needs at least one base".into()));
        }
        if !(eta_init > 0.0 && eta_init.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta_init must be positive, got {eta_init}")));
        }
        if horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        let b = bases as f64;
        let log_t = (horizon as f64).ln();
        let beta_growth = if log_t > 0.0 { (1.0 / log_t).exp() } else { std::f64::consts::E };
        Ok(Self {
            p: vec![1.0 / b; bases],
            probs: vec![1.0 / b; bases],
            rho: vec![2.0 * b; bases],
            eta: vec![eta_init; bases],
            beta_growth,
            gamma: 1.0 / horizon as f64,
            round: 0,
            boosts: vec![0; bases],
        })
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }
}

/// Normalizer `nu` with `sum_i 1 / (1/p_i + eta_i (l_i - nu)) = 1`.
fn normalizer(p: &[f64], eta: &[f64], losses: &[f64]) -> Result<f64> {
    // Denominators stay positive strictly below the pole.
    let pole = p
        .iter()
        .zip(eta)
        .zip(losses)
        .map(|((pi, ei), li)| li + 1.0 / (pi * ei))
        .fold(f64::INFINITY, f64::min);
    let mass = |nu: f64| -> f64 {
        let mut s = 0.0;
        for ((pi, ei), li) in p.iter().zip(eta).zip(losses) {
            let den = 1.0 / pi + ei * (li - nu);
            if den <= 0.0 {
                return f64::INFINITY;
            }
            s += 1.0 / den;
        }
        s
    };
    // At nu = min loss every p'_i <= p_i.
    let mut lo = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = pole;
    if !(lo.is_finite() && hi.is_finite()) || mass(lo) > 1.0 + 1e-12 || lo >= hi {
        return Err(Error::NoBracket);
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if mass(mid) > 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= NORMALIZER_TOL * lo.abs().max(1.0) {
            break;
        }
    }
    Ok(lo)
}

/// Log-barrier mirror-descent step on the loss vector `losses`, followed by
/// mixing and the learning-rate schedule.
pub fn omd_update_vector(state: &mut CorralState, losses: &[f64]) -> Result<()> {
    if losses.len() != state.len() {
        return Err(Error::InvalidArgument("loss vector length differs from base count".into()));
    }
    if losses.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(Error::InvalidArgument("losses must be finite and nonnegative".into()));
    }
    let p_next: Vec<f64> = if losses.iter().all(|&l| l == losses[0]) {
        state.p.clone()
    } else {
        let nu = normalizer(&state.p, &state.eta, losses)?;
        let raw: Vec<f64> = state
            .p
            .iter()
            .zip(&state.eta)
            .zip(losses)
            .map(|((pi, ei), li)| 1.0 / (1.0 / pi + ei * (li - nu)))
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / total).collect()
    };
    let b = state.len() as f64;
    let g = state.gamma;
    state.probs = p_next.iter().map(|pi| (1.0 - g) * pi + g / b).collect();
    state.p = p_next;
    for i in 0..state.len() {
        let inv = 1.0 / state.probs[i];
        if inv > state.rho[i] {
            state.rho[i] = 2.0 * inv;
            state.eta[i] *= state.beta_growth;
            state.boosts[i] += 1;
        }
    }
    state.round += 1;
    Ok(())
}

/// [`omd_update_vector`] with an importance-weighted loss on one base.
pub fn omd_update(state: &mut CorralState, base: usize, iw_loss: f64) -> Result<()> {
    if base >= state.len() {
        return Err(Error::InvalidArgument(format!("base {base} out of range")));
    }
    let mut losses = vec![0.0; state.len()];
    losses[base] = iw_loss;
    omd_update_vector(state, &losses)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorralConfig {
    /// Defaults to [`sparsity_grid`] of the instance dimension.
    pub grid: Option<Vec<usize>>,
    /// Defaults to [`default_eta`] with `r_best_bound`.
    pub eta_init: Option<f64>,
    pub r_best_bound: f64,
    /// Reward-to-loss scale; defaults to the largest arm norm.
    pub reward_scale: Option<f64>,
    /// Proxy pool size constant: `ceil(pool_c * d^(1/3) * T^(2/3))`.
    pub pool_c: f64,
    pub estimator: Estimator,
    /// Feed each exploration-phase pull of the chosen base to every base that
    /// is still exploring, so exploration proceeds as if bases ran alone.
    pub share_exploration: bool,
    /// Settings shared by all bases; `sparsity_k` is replaced per grid value.
    pub base: BslbConfig,
}

impl Default for CorralConfig {
    fn default() -> Self {
        Self {
            grid: None,
            eta_init: None,
            r_best_bound: 1.0,
            reward_scale: None,
            pool_c: 1.0,
            estimator: Estimator::Lasso,
            share_exploration: false,
            base: BslbConfig::default(),
        }
    }
}

impl CorralConfig {
    pub fn problems(&self, d: usize, m: usize, horizon: usize) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(grid) = &self.grid {
            if grid.is_empty() {
                out.push("grid must not be empty".into());
            }
            if grid.windows(2).any(|w| w[0] >= w[1]) {
                out.push("grid must be strictly increasing".into());
            }
            if grid.iter().any(|&k| k == 0 || k > d) {
                out.push(format!("grid values must lie in [1, {d}]"));
            }
        }
        if let Some(e) = self.eta_init {
            if !(e > 0.0 && e.is_finite()) {
                out.push(format!("eta_init must be positive, got {e}"));
            }
        }
        if !(self.r_best_bound > 0.0 && self.r_best_bound.is_finite()) {
            out.push(format!("r_best_bound must be positive, got {}", self.r_best_bound));
        }
        if let Some(s) = self.reward_scale {
            if !(s > 0.0 && s.is_finite()) {
                out.push(format!("reward_scale must be positive, got {s}"));
            }
        }
        if !(self.pool_c > 0.0 && self.pool_c.is_finite()) {
            out.push(format!("pool_c must be positive, got {}", self.pool_c));
        }
        let mut base = self.base.clone();
        base.sparsity_k = 1;
        out.extend(base.problems(d, m, horizon).into_iter().map(|p| format!("base: {p}")));
        out
    }
}

/// Constants and per-base settings of a corral run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorralInfo {
    pub grid: Vec<usize>,
    pub budgets: Vec<usize>,
    pub eta_init: f64,
    pub gamma: f64,
    pub beta_growth: f64,
    pub rho_init: f64,
    pub reward_scale: f64,
    pub design_size: usize,
    pub design_lambda_hat: f64,
    pub pool_size: usize,
    /// Rounds where the chosen base proposed a pulled arm.
    pub collisions: usize,
    pub selections: Vec<usize>,
    pub boosts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorralRun {
    pub trace: RunTrace,
    /// Sampling distribution in force at each round.
    pub probs: Vec<Vec<f64>>,
    pub info: CorralInfo,
}

pub fn run_cbslb<R: Rng + ?Sized>(
    mut env: Environment,
    horizon: usize,
    cfg: &CorralConfig,
    ctx: &PolicyContext<'_>,
    rng: &mut R,
) -> Result<CorralRun> {
    let arms = env.instance().arms().clone();
    let (m, d) = (arms.len(), arms.dim());
    if horizon > m {
        return Err(Error::InvalidArgument(format!("horizon {horizon} exceeds {m} arms")));
    }
    let problems = cfg.problems(d, m, horizon);
    if !problems.is_empty() {
        return Err(Error::InvalidArgument(problems.join("; ")));
    }
    let grid = cfg.grid.clone().unwrap_or_else(|| sparsity_grid(d));
    let eta_init = cfg.eta_init.unwrap_or_else(|| default_eta(d, horizon, cfg.r_best_bound));
    let scale = cfg.reward_scale.unwrap_or_else(|| arms.max_l2_norm());
    let base = &cfg.base;

    let design = get_good_subset(
        &arms,
        base.u_hat,
        base.rounding_repeats,
        base.enable_search,
        &ctx.design,
        ctx.cache,
        rng,
    )?;
    let wanted = (cfg.pool_c * (d as f64).cbrt() * (horizon as f64).powf(2.0 / 3.0)).ceil() as usize;
    let pool_size = wanted.clamp(1, design.subset.len());
    let pool: Vec<usize> =
        sample(rng, design.subset.len(), pool_size).into_iter().map(|i| design.subset[i]).collect();

    let r_max = base.r_max_hat.unwrap_or_else(|| arms.max_l2_norm());
    let mut agents = Vec::with_capacity(grid.len());
    let mut budgets = Vec::with_capacity(grid.len());
    for &k in &grid {
        let budget = match base.explore_budget_override {
            Some(b) => b.min(horizon),
            None => explore_budget_with(k, horizon, r_max, design.lambda_hat, base.c_explore, base.sparsity_exponent),
        };
        let mut bc = base.clone();
        bc.sparsity_k = k;
        budgets.push(budget);
        agents.push(EtcAgent::uniform(pool.clone(), budget, cfg.estimator, &bc, rng));
    }

    let mut state = CorralState::new(grid.len(), horizon, eta_init)?;
    let mut info = CorralInfo {
        grid,
        budgets,
        eta_init,
        gamma: state.gamma,
        beta_growth: state.beta_growth,
        rho_init: state.rho[0],
        reward_scale: scale,
        design_size: design.subset.len(),
        design_lambda_hat: design.lambda_hat,
        pool_size,
        collisions: 0,
        selections: vec![0; agents.len()],
        boosts: Vec::new(),
    };
    let mut probs_log = Vec::with_capacity(horizon);
    while env.round() < horizon {
        probs_log.push(state.probs.clone());
        let chooser = WeightedIndex::new(&state.probs)
            .map_err(|e| Error::InvalidArgument(format!("corral probabilities: {e}")))?;
        let i = chooser.sample(rng);
        info.selections[i] += 1;
        let proposal = agents[i].propose(&env, rng)?;
        let arm = if env.is_pulled(proposal) {
            info.collisions += 1;
            env.random_unpulled(rng)?
        } else {
            proposal
        };
        let exploring = agents[i].exploring();
        let reward = env.pull(arm)?;
        agents[i].observe(arm, reward);
        if cfg.share_exploration && exploring {
            for (j, agent) in agents.iter_mut().enumerate() {
                if j != i && agent.exploring() {
                    agent.observe(arm, reward);
                }
            }
        }
        let loss = reward_to_loss(reward, scale);
        let iw = loss / state.probs[i];
        omd_update(&mut state, i, iw)?;
    }
    info.boosts = state.boosts.clone();
    Ok(CorralRun { trace: env.into_trace(), probs: probs_log, info })
}
