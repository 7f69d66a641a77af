//! Exploration-set design: pick a subset of arms whose normalized Gram matrix
//! has a large smallest eigenvalue.
//!
//! The discrete problem is relaxed to a distribution `mu` over arms with
//! `max mu_j <= 1/u_hat`, solved by projected supergradient ascent, and then
//! rounded back to a subset by independent inclusion with probability
//! `u_hat * mu_j`. Small instances can additionally be searched exhaustively.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use log::{debug, warn};
use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{arm_matrix, covariance_of_matrix, min_eigpair, project_capped_simplex, subset_min_eig};
use crate::model::ArmSet;

/// Maximum number of empty roundings tolerated before giving up.
pub const ROUNDING_RETRIES: usize = 100;
/// Default cap on the number of subsets an exhaustive search may visit.
pub const DEFAULT_ENUMERATION_CAP: u128 = 2_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationSolution {
    pub mu: Vec<f64>,
    pub u_hat: usize,
    /// `lambda_min(A diag(mu) A^T)` at `mu`.
    pub objective: f64,
    /// Objective of the uniform starting point.
    pub start_objective: f64,
    pub iterations: usize,
}

/// Step size schedule for the supergradient ascent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepRule {
    /// `eta0 / sqrt(t)`; `eta0` defaults to `1 / max_j ||a_j||^2`.
    InvSqrt { eta0: Option<f64> },
    Constant { eta: f64 },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::InvSqrt { eta0: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Rounded,
    BruteForce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub subset: Vec<usize>,
    pub lambda_hat: f64,
    pub provenance: Provenance,
}

impl Design {
    fn from_subset(arms: &ArmSet, mut subset: Vec<usize>, provenance: Provenance) -> Result<Self> {
        subset.sort_unstable();
        subset.dedup();
        let lambda_hat = subset_min_eig(arms, &subset)?.max(0.0);
        Ok(Self { subset, lambda_hat, provenance })
    }
}

/// Solver knobs for the relaxed problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelaxationSettings {
    pub max_iters: usize,
    pub step_rule: StepRule,
    pub tol: f64,
}

impl Default for RelaxationSettings {
    fn default() -> Self {
        Self { max_iters: 300, step_rule: StepRule::default(), tol: 1e-10 }
    }
}

/// Projected supergradient ascent on `mu -> lambda_min(A diag(mu) A^T)` over the
/// simplex capped at `1/u_hat`, started at the uniform distribution and
/// returning the best iterate.
pub fn solve_relaxation(
    arms: &ArmSet,
    u_hat: usize,
    max_iters: usize,
    step_rule: StepRule,
    tol: f64,
) -> Result<RelaxationSolution> {
    solve_relaxation_observed(arms, u_hat, max_iters, step_rule, tol, &mut |_, _| {})
}

/// [`solve_relaxation`], calling `observe(mu, objective)` on every iterate
/// including the start.
pub fn solve_relaxation_observed(
    arms: &ArmSet,
    u_hat: usize,
    max_iters: usize,
    step_rule: StepRule,
    tol: f64,
    observe: &mut dyn FnMut(&[f64], f64),
) -> Result<RelaxationSolution> {
    let m = arms.len();
    if u_hat == 0 || u_hat > m {
        return Err(Error::InfeasibleCap { m, cap: if u_hat == 0 { f64::INFINITY } else { 1.0 / u_hat as f64 } });
    }
    let cap = 1.0 / u_hat as f64;
    let a = arm_matrix(arms);
    let eta0 = match step_rule {
        StepRule::InvSqrt { eta0: Some(e) } => e,
        StepRule::InvSqrt { eta0: None } => 1.0 / arms.max_l2_norm().powi(2).max(f64::MIN_POSITIVE),
        StepRule::Constant { eta } => eta,
    };

    let mut mu = vec![1.0 / m as f64; m];
    let (mut lambda, mut v) = relaxation_objective(&a, &mu)?;
    let start_objective = lambda;
    observe(&mu, lambda);
    let mut best = (lambda, mu.clone());
    let mut iterations = 0;
    for t in 1..=max_iters {
        iterations = t;
        let av = &a * &v;
        let eta = match step_rule {
            StepRule::InvSqrt { .. } => eta0 / (t as f64).sqrt(),
            StepRule::Constant { .. } => eta0,
        };
        let stepped: Vec<f64> = mu.iter().zip(av.iter()).map(|(p, g)| p + eta * g * g).collect();
        let next = project_capped_simplex(&stepped, cap)?;
        let moved = next.iter().zip(&mu).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        mu = next;
        (lambda, v) = relaxation_objective(&a, &mu)?;
        observe(&mu, lambda);
        if lambda > best.0 {
            best = (lambda, mu.clone());
        }
        if moved < tol {
            break;
        }
    }
    debug!(
        "relaxation u_hat={u_hat}: start {start_objective:.3e} -> best {:.3e} in {iterations} iters",
        best.0
    );
    Ok(RelaxationSolution { mu: best.1, u_hat, objective: best.0, start_objective, iterations })
}

fn relaxation_objective(a: &DMatrix<f64>, mu: &[f64]) -> Result<(f64, nalgebra::DVector<f64>)> {
    min_eigpair(&covariance_of_matrix(a, mu).matrix)
}

/// Supergradient of the relaxation objective at `mu`: `g_j = (v^T a_j)^2` for a
/// unit minimizing eigenvector `v`.
pub fn relaxation_supergradient(arms: &ArmSet, mu: &[f64]) -> Result<(f64, Vec<f64>)> {
    let a = arm_matrix(arms);
    let (lambda, v) = relaxation_objective(&a, mu)?;
    let av = &a * &v;
    Ok((lambda, av.iter().map(|x| x * x).collect()))
}

/// Include arm `j` independently with probability `min(u_hat * mu_j, 1)`.
/// Returns the design and the number of empty draws that were retried.
pub fn randomized_round<R: Rng + ?Sized>(
    arms: &ArmSet,
    sol: &RelaxationSolution,
    rng: &mut R,
) -> Result<(Design, usize)> {
    if sol.mu.len() != arms.len() {
        return Err(Error::InvalidArgument("relaxation does not match arm set".into()));
    }
    let u = sol.u_hat as f64;
    let probs: Vec<f64> = sol
        .mu
        .iter()
        .map(|&p| {
            let q = u * p;
            if q > 1.0 + 1e-9 {
                Err(Error::InvalidArgument(format!("inclusion probability {q} exceeds 1")))
            } else {
                Ok(q.clamp(0.0, 1.0))
            }
        })
        .collect::<Result<_>>()?;
    for retries in 0..=ROUNDING_RETRIES {
        let subset: Vec<usize> = probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p >= 1.0 || (p > 0.0 && rng.random::<f64>() < p))
            .map(|(j, _)| j)
            .collect();
        if !subset.is_empty() {
            return Ok((Design::from_subset(arms, subset, Provenance::Rounded)?, retries));
        }
    }
    Err(Error::RoundingDegenerate(ROUNDING_RETRIES))
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i + 1) as u128;
    }
    acc
}

/// Number of subsets with size in `[lo, hi]`.
pub fn search_size(m: usize, lo: usize, hi: usize) -> u128 {
    (lo..=hi.min(m)).map(|s| binomial(m, s)).fold(0u128, u128::saturating_add)
}

/// Exhaustive maximization of `lambda_min(|G|^-1 sum_{a in G} a a^T)` over all
/// subsets with `lo <= |G| <= hi`. Sizes are visited in increasing order and
/// subsets lexicographically; only strict improvements replace the incumbent.
pub fn subset_search(arms: &ArmSet, lo: usize, hi: usize, cap: u128) -> Result<Design> {
    let m = arms.len();
    let lo = lo.max(1);
    let hi = hi.min(m);
    if lo > hi {
        return Err(Error::InvalidArgument(format!("empty size range [{lo}, {hi}] for {m} arms")));
    }
    let total = search_size(m, lo, hi);
    if total > cap {
        return Err(Error::SearchTooLarge { subsets: total, cap });
    }
    let d = arms.dim();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut gram = DMatrix::<f64>::zeros(d, d);
    for size in lo..=hi {
        let mut comb: Vec<usize> = (0..size).collect();
        loop {
            gram.fill(0.0);
            for &j in &comb {
                let a = arms.arm(j);
                for r in 0..d {
                    for c in 0..d {
                        gram[(r, c)] += a[r] * a[c];
                    }
                }
            }
            gram /= size as f64;
            let (lambda, _) = min_eigpair(&gram)?;
            if best.as_ref().is_none_or(|(b, _)| lambda > *b) {
                best = Some((lambda, comb.clone()));
            }
            if !next_combination(&mut comb, m) {
                break;
            }
        }
    }
    let (_, subset) = best.expect("nonempty search");
    Design::from_subset(arms, subset, Provenance::BruteForce)
}

/// Advance to the next k-combination of `0..n` in lexicographic order.
fn next_combination(comb: &mut [usize], n: usize) -> bool {
    let k = comb.len();
    for i in (0..k).rev() {
        if comb[i] < n - k + i {
            comb[i] += 1;
            for j in (i + 1)..k {
                comb[j] = comb[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UHatMode {
    /// `ceil(c_u * d / lambda_lower^(2/3))`.
    Quality,
    /// `ceil(c_u * d / lambda_lower^2)`.
    LinearTime,
}

pub fn choose_u_hat(d: usize, lambda_lower: f64, mode: UHatMode, c_u: f64) -> Result<usize> {
    if !(lambda_lower > 0.0 && lambda_lower <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda_lower must lie in (0, 1], got {lambda_lower}"
        )));
    }
    let exponent = match mode {
        UHatMode::Quality => 2.0 / 3.0,
        UHatMode::LinearTime => 2.0,
    };
    let raw = c_u * d as f64 / lambda_lower.powf(exponent);
    // Absorb representation error so exact products do not round up.
    Ok((raw - 1e-9 * raw.abs()).ceil().max(1.0) as usize)
}

/// Everything [`get_good_subset`] needs besides the arms and `u_hat`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignSettings {
    pub relaxation: RelaxationSettings,
    pub enumeration_cap: u128,
}

impl Default for DesignSettings {
    fn default() -> Self {
        Self { relaxation: RelaxationSettings::default(), enumeration_cap: DEFAULT_ENUMERATION_CAP }
    }
}

/// Relaxation solutions keyed by arm-set fingerprint and `u_hat`. The relaxed
/// problem is deterministic, so runs sharing an arm set can share its solution.
#[derive(Debug, Default)]
pub struct RelaxationCache {
    inner: Mutex<HashMap<(u64, usize), Arc<RelaxationSolution>>>,
}

impl RelaxationCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_solve(
        &self,
        arms: &ArmSet,
        u_hat: usize,
        settings: &RelaxationSettings,
    ) -> Result<Arc<RelaxationSolution>> {
        let key = (arms.fingerprint(), u_hat);
        if let Some(sol) = self.inner.lock().expect("cache poisoned").get(&key) {
            return Ok(Arc::clone(sol));
        }
        let sol = Arc::new(solve_relaxation(
            arms,
            u_hat,
            settings.max_iters,
            settings.step_rule,
            settings.tol,
        )?);
        self.inner.lock().expect("cache poisoned").entry(key).or_insert_with(|| Arc::clone(&sol));
        Ok(sol)
    }
}

/// Relaxation, repeated rounding (best of `rounding_repeats`), and an optional
/// exhaustive search over sizes `[d, u_hat]`; returns the best design found.
pub fn get_good_subset<R: Rng + ?Sized>(
    arms: &ArmSet,
    u_hat: usize,
    rounding_repeats: usize,
    enable_search: bool,
    settings: &DesignSettings,
    cache: Option<&RelaxationCache>,
    rng: &mut R,
) -> Result<Design> {
    if u_hat == 0 || u_hat > arms.len() {
        return Err(Error::InfeasibleCap { m: arms.len(), cap: 1.0 / u_hat.max(1) as f64 });
    }
    let sol = match cache {
        Some(c) => c.get_or_solve(arms, u_hat, &settings.relaxation)?,
        None => Arc::new(solve_relaxation(
            arms,
            u_hat,
            settings.relaxation.max_iters,
            settings.relaxation.step_rule,
            settings.relaxation.tol,
        )?),
    };
    let mut best: Option<Design> = None;
    for _ in 0..rounding_repeats.max(1) {
        let (design, _) = randomized_round(arms, &sol, rng)?;
        if best.as_ref().is_none_or(|b| design.lambda_hat > b.lambda_hat) {
            best = Some(design);
        }
    }
    let mut best = best.expect("at least one rounding");
    if enable_search {
        let lo = arms.dim();
        if lo <= u_hat {
            if search_size(arms.len(), lo, u_hat) <= settings.enumeration_cap {
                let searched = subset_search(arms, lo, u_hat, settings.enumeration_cap)?;
                if searched.lambda_hat > best.lambda_hat {
                    best = searched;
                }
            } else {
                warn!("subset search over sizes [{lo}, {u_hat}] exceeds the enumeration cap; skipped");
            }
        }
    }
    Ok(best)
}
