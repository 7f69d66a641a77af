//! Simulated environment with the blocking constraint, and regret against the
//! best `t` distinct arms.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sorted_rewards, Instance};
use crate::rng::SimRng;

/// Instance plus its cached top-t benchmark.
#[derive(Debug)]
pub struct Benchmarked {
    pub instance: Instance,
    /// `prefix[t] = sum of the t largest expected rewards`, `prefix[0] = 0`.
    pub prefix: Vec<f64>,
}

impl Benchmarked {
    pub fn new(instance: Instance) -> Arc<Self> {
        let mut prefix = Vec::with_capacity(instance.num_arms() + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for r in sorted_rewards(&instance) {
            acc += r;
            prefix.push(acc);
        }
        Arc::new(Self { instance, prefix })
    }
}

/// One simulated run. Every arm may be pulled at most once.
#[derive(Debug)]
pub struct Environment {
    bench: Arc<Benchmarked>,
    pulled: Vec<bool>,
    /// Unpulled arm indices; `slot[j]` is j's position in `available`.
    available: Vec<usize>,
    slot: Vec<usize>,
    rng: SimRng,
    trace: RunTrace,
    earned: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub arm_indices: Vec<usize>,
    pub rewards: Vec<f64>,
    pub expected_rewards: Vec<f64>,
    pub cum_regret: Vec<f64>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.arm_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arm_indices.is_empty()
    }

    pub fn final_regret(&self) -> f64 {
        self.cum_regret.last().copied().unwrap_or(0.0)
    }

    /// True when no arm index repeats.
    pub fn respects_blocking(&self) -> bool {
        let mut seen = std::collections::HashSet::with_capacity(self.len());
        self.arm_indices.iter().all(|j| seen.insert(*j))
    }
}

impl Environment {
    pub fn new(bench: Arc<Benchmarked>, rng: SimRng) -> Self {
        let m = bench.instance.num_arms();
        Self {
            bench,
            pulled: vec![false; m],
            available: (0..m).collect(),
            slot: (0..m).collect(),
            rng,
            trace: RunTrace::default(),
            earned: 0.0,
        }
    }

    pub fn from_instance(instance: Instance, rng: SimRng) -> Self {
        Self::new(Benchmarked::new(instance), rng)
    }

    pub fn instance(&self) -> &Instance {
        &self.bench.instance
    }

    pub fn round(&self) -> usize {
        self.trace.len()
    }

    pub fn is_pulled(&self, j: usize) -> bool {
        self.pulled[j]
    }

    /// Unpulled arms, in no particular order.
    pub fn available(&self) -> &[usize] {
        &self.available
    }

    pub fn trace(&self) -> &RunTrace {
        &self.trace
    }

    pub fn into_trace(self) -> RunTrace {
        self.trace
    }

    /// Pull arm `j`: reward `<theta, a_j> + sigma * z` with standard normal `z`.
    pub fn pull(&mut self, j: usize) -> Result<f64> {
        let m = self.pulled.len();
        if j >= m {
            return Err(Error::ArmOutOfRange(j));
        }
        if self.available.is_empty() {
            return Err(Error::ArmsExhausted);
        }
        if self.pulled[j] {
            return Err(Error::BlockingViolation(j));
        }
        self.pulled[j] = true;
        let pos = self.slot[j];
        let last = *self.available.last().expect("nonempty");
        self.available.swap_remove(pos);
        if last != j {
            self.slot[last] = pos;
        }

        let expected = self.bench.instance.expected_reward(j);
        let sigma = self.bench.instance.noise_sigma();
        let noise = if sigma > 0.0 {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            sigma * z
        } else {
            0.0
        };
        let reward = expected + noise;
        let t = self.trace.len() + 1;
        self.earned += expected;
        let earned = self.earned;
        self.trace.arm_indices.push(j);
        self.trace.rewards.push(reward);
        self.trace.expected_rewards.push(expected);
        self.trace.cum_regret.push(self.bench.prefix[t] - earned);
        Ok(reward)
    }

    /// A uniformly random unpulled arm, drawn from `rng` (not the noise stream).
    pub fn random_unpulled<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        if self.available.is_empty() {
            return Err(Error::ArmsExhausted);
        }
        // Sample by sorted order so the draw does not depend on swap-remove history.
        let mut avail = self.available.clone();
        avail.sort_unstable();
        Ok(avail[rng.random_range(0..avail.len())])
    }
}

/// Cumulative regret of pulling `arm_indices` in order, against the best `t`
/// distinct arms at every prefix length `t`.
pub fn regret_trace(instance: &Instance, arm_indices: &[usize]) -> Result<Vec<f64>> {
    let m = instance.num_arms();
    if arm_indices.len() > m {
        return Err(Error::InvalidArgument(format!("{} pulls exceed {m} arms", arm_indices.len())));
    }
    let mut seen = vec![false; m];
    let sorted = sorted_rewards(instance);
    let mut best = 0.0;
    let mut earned = 0.0;
    let mut out = Vec::with_capacity(arm_indices.len());
    for (t, &j) in arm_indices.iter().enumerate() {
        if j >= m {
            return Err(Error::ArmOutOfRange(j));
        }
        if std::mem::replace(&mut seen[j], true) {
            return Err(Error::BlockingViolation(j));
        }
        best += sorted[t];
        earned += instance.expected_reward(j);
        out.push(best - earned);
    }
    Ok(out)
}
