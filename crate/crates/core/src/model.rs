//! Arms, parameters, problem instances and their synthetic generators.

use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on the unit-ball checks, to absorb rounding in generators.
const NORM_SLACK: f64 = 1e-12;

/// A finite set of arms in the unit ball, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSet {
    rows: Vec<f64>,
    m: usize,
    dim: usize,
}

impl ArmSet {
    pub fn new(arms: Vec<Vec<f64>>) -> Result<Self> {
        let m = arms.len();
        if m == 0 {
            return Err(Error::InvalidArms("at least one arm is required".into()));
        }
        let dim = arms[0].len();
        if dim == 0 {
            return Err(Error::InvalidArms("arms must have positive dimension".into()));
        }
        let mut rows = Vec::with_capacity(m * dim);
        for (j, arm) in arms.into_iter().enumerate() {
            if arm.len() != dim {
                return Err(Error::InvalidArms(format!(
                    "arm {j} has dimension {}, expected {dim}",
                    arm.len()
                )));
            }
            rows.extend(arm);
        }
        Self::from_rows(rows, dim)
    }

    /// Build from a flat row-major buffer of `m * dim` entries.
    pub fn from_rows(rows: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || rows.is_empty() || rows.len() % dim != 0 {
            return Err(Error::InvalidArms(format!(
                "buffer of length {} is not a positive multiple of dimension {dim}",
                rows.len()
            )));
        }
        let m = rows.len() / dim;
        for (j, arm) in rows.chunks_exact(dim).enumerate() {
            if arm.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArms(format!("arm {j} has non-finite entries")));
            }
            let linf = arm.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
            let l2 = arm.iter().map(|x| x * x).sum::<f64>().sqrt();
            if linf > 1.0 + NORM_SLACK || l2 > 1.0 + NORM_SLACK {
                return Err(Error::InvalidArms(format!(
                    "arm {j} leaves the unit ball (l2 = {l2}, linf = {linf})"
                )));
            }
        }
        Ok(Self { rows, m, dim })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn arm(&self, j: usize) -> &[f64] {
        &self.rows[j * self.dim..(j + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.rows.chunks_exact(self.dim)
    }

    pub fn rows(&self) -> &[f64] {
        &self.rows
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.iter().map(<[f64]>::to_vec).collect()
    }

    pub fn max_l2_norm(&self) -> f64 {
        self.iter().map(l2_norm).fold(0.0, f64::max)
    }

    /// Arm set restricted to `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<ArmSet> {
        let mut rows = Vec::with_capacity(indices.len() * self.dim);
        for &j in indices {
            if j >= self.m {
                return Err(Error::ArmOutOfRange(j));
            }
            rows.extend_from_slice(self.arm(j));
        }
        ArmSet::from_rows(rows, self.dim)
    }

    /// Stable fingerprint of the arm coordinates, used as a cache key.
    pub fn fingerprint(&self) -> u64 {
        // FNV-1a over the raw bit patterns.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for x in std::iter::once(self.dim as f64).chain(self.rows.iter().copied()) {
            for b in x.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

/// The unknown linear reward parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    theta: Vec<f64>,
}

impl Parameter {
    pub fn new(theta: Vec<f64>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::InvalidArgument("parameter must be non-empty".into()));
        }
        if theta.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("parameter"));
        }
        Ok(Self { theta })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Parameter::new(self.theta.iter().map(|x| c * x).collect())
    }
}

/// Ground truth for one simulated problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    arms: ArmSet,
    theta: Parameter,
    noise_sigma: f64,
}

impl Instance {
    pub fn new(arms: ArmSet, theta: Parameter, noise_sigma: f64) -> Result<Self> {
        if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise sigma must be finite and nonnegative, got {noise_sigma}"
            )));
        }
        if arms.dim() != theta.dim() {
            return Err(Error::InvalidArgument(format!(
                "arm dimension {} does not match parameter dimension {}",
                arms.dim(),
                theta.dim()
            )));
        }
        Ok(Self { arms, theta, noise_sigma })
    }

    pub fn arms(&self) -> &ArmSet {
        &self.arms
    }

    pub fn theta(&self) -> &Parameter {
        &self.theta
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn dim(&self) -> usize {
        self.arms.dim()
    }

    pub fn expected_reward(&self, j: usize) -> f64 {
        dot(self.theta.as_slice(), self.arms.arm(j))
    }

    pub fn expected_rewards(&self) -> Vec<f64> {
        (0..self.num_arms()).map(|j| self.expected_reward(j)).collect()
    }

    pub fn to_json(&self) -> InstanceJson {
        InstanceJson {
            dim: self.dim(),
            arms: self.arms.to_vecs(),
            theta: self.theta.as_slice().to_vec(),
            sigma: self.noise_sigma,
        }
    }

    pub fn from_json(doc: InstanceJson) -> Result<Self> {
        let arms = ArmSet::new(doc.arms)?;
        if arms.dim() != doc.dim {
            return Err(Error::InvalidArgument(format!(
                "declared dim {} but arms have dimension {}",
                doc.dim,
                arms.dim()
            )));
        }
        Instance::new(arms, Parameter::new(doc.theta)?, doc.sigma)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(&self.to_json())?)?;
        Ok(())
    }
}

/// On-disk instance document. Floats are written in shortest round-trip form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceJson {
    pub dim: usize,
    pub arms: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
    pub sigma: f64,
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn l1_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).sum()
}

/// Indices of the `k` largest entries by absolute value; ties go to the lower index.
pub fn top_k_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Relative tail: l1 mass outside the top-k coordinates over l1 mass inside them.
pub fn tail_ratio(theta: &Parameter, k: usize) -> Result<f64> {
    let values = theta.as_slice();
    if k == 0 || k > values.len() {
        return Err(Error::InvalidArgument(format!(
            "sparsity k = {k} must lie in [1, {}]",
            values.len()
        )));
    }
    let head = top_k_indices(values, k);
    let head_l1: f64 = head.iter().map(|&i| values[i].abs()).sum();
    if head_l1 == 0.0 {
        return Err(Error::DegenerateParameter);
    }
    let total_l1 = l1_norm(values);
    // Summing the complement directly avoids cancellation in total - head.
    let mut in_head = vec![false; values.len()];
    for &i in &head {
        in_head[i] = true;
    }
    let tail_l1: f64 = values
        .iter()
        .zip(&in_head)
        .filter(|(_, &h)| !h)
        .map(|(x, _)| x.abs())
        .sum();
    debug_assert!(tail_l1 <= total_l1);
    Ok(tail_l1 / head_l1)
}

fn random_sign<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Random parameter with `k` head coordinates of magnitude U[0.5, 1] and a tail
/// of equal-magnitude entries whose l1 mass makes the tail ratio `beta_target`.
pub fn gen_sparse_theta<R: Rng + ?Sized>(
    d: usize,
    k: usize,
    beta_target: f64,
    rng: &mut R,
) -> Result<Parameter> {
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!("need 1 <= k <= d, got k = {k}, d = {d}")));
    }
    if !(beta_target >= 0.0) || !beta_target.is_finite() {
        return Err(Error::InvalidArgument(format!("beta_target must be >= 0, got {beta_target}")));
    }
    if beta_target > 0.0 && k == d {
        return Err(Error::NoTailCoordinates);
    }
    let head = sample(rng, d, k).into_vec();
    let mut theta = vec![0.0; d];
    let mut head_l1 = 0.0;
    let mut head_min = f64::INFINITY;
    for &i in &head {
        let magnitude = rng.random_range(0.5..=1.0);
        theta[i] = random_sign(rng) * magnitude;
        head_l1 += magnitude;
        head_min = head_min.min(magnitude);
    }
    if beta_target > 0.0 {
        let per_coord = beta_target * head_l1 / (d - k) as f64;
        if per_coord > head_min {
            return Err(Error::InvalidArgument(format!(
                "tail entries of size {per_coord} would overtake the head (min {head_min}); \
                 increase d or lower beta_target"
            )));
        }
        let mut is_head = vec![false; d];
        for &i in &head {
            is_head[i] = true;
        }
        for i in (0..d).filter(|&i| !is_head[i]) {
            theta[i] = random_sign(rng) * per_coord;
        }
    }
    Parameter::new(theta)
}

/// Uniform draw from the unit sphere in `d` dimensions.
pub fn sphere_point<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = l2_norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Scale `v` into the unit ball and the l-infinity box, then to l2 norm `target`
/// (or as close as the box allows).
fn fit_to_ball(mut v: Vec<f64>, target: f64) -> Vec<f64> {
    let n = l2_norm(&v);
    for x in &mut v {
        *x *= target / n;
    }
    let linf = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if linf > 1.0 {
        for x in &mut v {
            *x /= linf;
        }
    }
    // Guard the last ulp so the constructor's checks always pass.
    let n = l2_norm(&v);
    if n > 1.0 {
        for x in &mut v {
            *x /= n;
        }
    }
    v
}

/// `m` arms drawn uniformly from the unit sphere.
pub fn gen_sphere_arms<R: Rng + ?Sized>(m: usize, d: usize, rng: &mut R) -> Result<ArmSet> {
    if m == 0 || d == 0 {
        return Err(Error::InvalidArgument("m and d must be positive".into()));
    }
    let mut rows = Vec::with_capacity(m * d);
    for _ in 0..m {
        rows.extend(fit_to_ball(sphere_point(d, rng), 1.0));
    }
    ArmSet::from_rows(rows, d)
}

/// Arms of the "few strong arms" instance: the first `l` arms have unit l2
/// norm, the remaining `m - l` have norm `low_norm`. Directions are uniform on
/// the sphere.
pub fn gen_hard_arms<R: Rng + ?Sized>(
    m: usize,
    d: usize,
    l: usize,
    low_norm: f64,
    rng: &mut R,
) -> Result<ArmSet> {
    if l >= m {
        return Err(Error::InvalidArgument(format!("need l < m, got l = {l}, m = {m}")));
    }
    if !(low_norm > 0.0 && low_norm <= 1.0) {
        return Err(Error::InvalidArgument(format!("low_norm must lie in (0, 1], got {low_norm}")));
    }
    if d == 0 {
        return Err(Error::InvalidArgument("d must be positive".into()));
    }
    let mut rows = Vec::with_capacity(m * d);
    for j in 0..m {
        let target = if j < l { 1.0 } else { low_norm };
        rows.extend(fit_to_ball(sphere_point(d, rng), target));
    }
    ArmSet::from_rows(rows, d)
}

/// A `k`-sparse parameter supported on the coordinates where the first `l`
/// (high-norm) arms carry the most l1 mass. Head magnitudes are U[0.5, 1]
/// with random signs.
pub fn hard_theta<R: Rng + ?Sized>(
    arms: &ArmSet,
    l: usize,
    k: usize,
    rng: &mut R,
) -> Result<Parameter> {
    let d = arms.dim();
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!("need 1 <= k <= d, got k = {k}, d = {d}")));
    }
    let mut mass = vec![0.0; d];
    for arm in arms.iter().take(l.max(1)) {
        for (m, x) in mass.iter_mut().zip(arm) {
            *m += x.abs();
        }
    }
    let support = top_k_indices(&mass, k);
    let mut theta = vec![0.0; d];
    for i in support {
        theta[i] = random_sign(rng) * rng.random_range(0.5..=1.0);
    }
    Parameter::new(theta)
}

/// Instance with `l` unit-norm arms among `m`, the rest at `low_norm`.
pub fn gen_hard_instance<R: Rng + ?Sized>(
    m: usize,
    d: usize,
    l: usize,
    low_norm: f64,
    k: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<Instance> {
    let arms = gen_hard_arms(m, d, l, low_norm, rng)?;
    let theta = hard_theta(&arms, l, k, rng)?;
    Instance::new(arms, theta, sigma)
}

/// Sum of the `t` largest expected rewards over distinct arms.
pub fn top_t_value(instance: &Instance, t: usize) -> Result<f64> {
    let m = instance.num_arms();
    if t == 0 || t > m {
        return Err(Error::InvalidArgument(format!("t = {t} must lie in [1, {m}]")));
    }
    Ok(sorted_rewards(instance).iter().take(t).sum())
}

/// Expected rewards sorted nonincreasing.
pub fn sorted_rewards(instance: &Instance) -> Vec<f64> {
    let mut r = instance.expected_rewards();
    r.sort_by(|a, b| b.total_cmp(a));
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;
    use proptest::prelude::*;

    fn param(v: &[f64]) -> Parameter {
        Parameter::new(v.to_vec()).unwrap()
    }

    #[test]
    fn tail_ratio_examples() {
        assert_eq!(tail_ratio(&param(&[1.0, 0.0, 0.0]), 1).unwrap(), 0.0);
        assert_eq!(tail_ratio(&param(&[2.0, 1.0, 1.0]), 1).unwrap(), 1.0);
        let r = tail_ratio(&param(&[4.0, 3.0, 2.0, 1.0]), 2).unwrap();
        assert!((r - 3.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn tail_ratio_degenerate() {
        assert!(matches!(
            tail_ratio(&param(&[0.0, 0.0]), 1),
            Err(Error::DegenerateParameter)
        ));
    }

    #[test]
    fn tail_ratio_ties_prefer_low_index() {
        // Either tie choice gives the same ratio; the selected set is what matters.
        assert_eq!(top_k_indices(&[1.0, -2.0, 2.0, 0.5], 2), vec![1, 2]);
        assert_eq!(top_k_indices(&[1.0, 1.0, 1.0], 2), vec![0, 1]);
    }

    #[test]
    fn sparse_theta_hits_target_ratio() {
        let mut rng = from_seed(3);
        let t = gen_sparse_theta(5, 5, 0.0, &mut rng).unwrap();
        assert_eq!(tail_ratio(&t, 5).unwrap(), 0.0);

        let t = gen_sparse_theta(1000, 10, 3.0, &mut rng).unwrap();
        assert!((tail_ratio(&t, 10).unwrap() - 3.0).abs() <= 3.0 * 1e-9);

        let t = gen_sparse_theta(4, 2, 0.5, &mut rng).unwrap();
        assert!((tail_ratio(&t, 2).unwrap() - 0.5).abs() <= 0.5 * 1e-9);
    }

    #[test]
    fn sparse_theta_without_tail_coordinates() {
        let mut rng = from_seed(0);
        assert!(matches!(
            gen_sparse_theta(4, 4, 1.0, &mut rng),
            Err(Error::NoTailCoordinates)
        ));
    }

    #[test]
    fn hard_instance_norms() {
        let mut rng = from_seed(11);
        let inst = gen_hard_instance(500, 100, 5, 0.5, 5, 0.1, &mut rng).unwrap();
        let norms: Vec<f64> = inst.arms().iter().map(l2_norm).collect();
        assert_eq!(norms.iter().filter(|n| (*n - 1.0).abs() < 1e-9).count(), 5);
        assert_eq!(norms.iter().filter(|n| (*n - 0.5).abs() < 1e-9).count(), 495);
        assert_eq!(inst.theta().as_slice().iter().filter(|x| **x != 0.0).count(), 5);

        let small = gen_hard_instance(2, 2, 1, 0.5, 1, 0.0, &mut rng).unwrap();
        assert!((l2_norm(small.arms().arm(0)) - 1.0).abs() < 1e-12);
        assert!((l2_norm(small.arms().arm(1)) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn hard_instance_rejects_bad_shapes() {
        let mut rng = from_seed(0);
        assert!(gen_hard_arms(5, 3, 5, 0.5, &mut rng).is_err());
        assert!(gen_hard_arms(5, 3, 1, 0.0, &mut rng).is_err());
        assert!(gen_hard_arms(5, 3, 1, 1.5, &mut rng).is_err());
    }

    #[test]
    fn arm_set_rejects_points_outside_ball() {
        assert!(ArmSet::new(vec![vec![0.8, 0.8]]).is_err());
        assert!(ArmSet::new(vec![vec![1.0, 0.0], vec![0.0]]).is_err());
        assert!(ArmSet::new(vec![]).is_err());
        assert!(ArmSet::new(vec![vec![f64::NAN, 0.0]]).is_err());
    }

    fn basis_instance(theta: &[f64]) -> Instance {
        let arms = ArmSet::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        Instance::new(arms, param(theta), 0.0).unwrap()
    }

    #[test]
    fn top_t_examples() {
        let inst = basis_instance(&[2.0, 1.0]);
        assert_eq!(top_t_value(&inst, 1).unwrap(), 2.0);
        assert_eq!(top_t_value(&inst, 2).unwrap(), 3.0);
        assert!(top_t_value(&inst, 3).is_err());
    }

    #[test]
    fn top_t_matches_sort_oracle() {
        let mut rng = from_seed(5);
        let arms = gen_sphere_arms(6, 3, &mut rng).unwrap();
        let theta = param(&[0.3, -0.7, 0.2]);
        let inst = Instance::new(arms, theta, 0.0).unwrap();
        // Oracle: for each t, the best t-subset found by exhaustive enumeration.
        for t in 1..=6 {
            let mut best = f64::NEG_INFINITY;
            for mask in 0u32..(1 << 6) {
                if mask.count_ones() as usize != t {
                    continue;
                }
                let v: f64 = (0..6)
                    .filter(|j| mask & (1 << j) != 0)
                    .map(|j| inst.expected_reward(j))
                    .sum();
                best = best.max(v);
            }
            assert!((top_t_value(&inst, t).unwrap() - best).abs() < 1e-12);
        }
    }

    #[test]
    fn instance_json_round_trip_is_exact() {
        let mut rng = from_seed(9);
        let inst = gen_hard_instance(20, 7, 3, 0.5, 2, 0.25, &mut rng).unwrap();
        let text = serde_json::to_string(&inst.to_json()).unwrap();
        let back = Instance::from_json(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(inst, back);
    }

    proptest! {
        #[test]
        fn tail_ratio_full_support_is_zero(v in prop::collection::vec(-5.0f64..5.0, 1..12)) {
            prop_assume!(v.iter().any(|x| *x != 0.0));
            let p = param(&v);
            prop_assert_eq!(tail_ratio(&p, v.len()).unwrap(), 0.0);
        }

        #[test]
        fn tail_ratio_scale_invariant(
            v in prop::collection::vec(-5.0f64..5.0, 2..12),
            c in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
            k in 1usize..12,
        ) {
            let k = k.min(v.len());
            let p = param(&v);
            if let Ok(r) = tail_ratio(&p, k) {
                let rc = tail_ratio(&p.scaled(c).unwrap(), k).unwrap();
                prop_assert!((r - rc).abs() <= 1e-12 * r.max(1.0));
            }
        }

        #[test]
        fn sparse_theta_round_trips(seed in 0u64..1000, k in 1usize..8, beta in 0.0f64..2.0) {
            let mut rng = from_seed(seed);
            let d = 64;
            let t = gen_sparse_theta(d, k, beta, &mut rng).unwrap();
            let r = tail_ratio(&t, k).unwrap();
            prop_assert!((r - beta).abs() <= 1e-9 * beta.max(1.0));
        }

        #[test]
        fn top_t_nondecreasing_when_rewards_nonnegative(seed in 0u64..500) {
            let mut rng = from_seed(seed);
            let arms = gen_sphere_arms(8, 3, &mut rng).unwrap();
            let inst = Instance::new(arms, param(&[0.5, 0.1, -0.2]), 0.0).unwrap();
            let sorted = sorted_rewards(&inst);
            let total: f64 = sorted.iter().sum();
            prop_assert!((top_t_value(&inst, 8).unwrap() - total).abs() < 1e-12);
            // Increments are the sorted rewards themselves: nonincreasing.
            for t in 1..8 {
                let step = top_t_value(&inst, t + 1).unwrap() - top_t_value(&inst, t).unwrap();
                prop_assert!((step - sorted[t]).abs() < 1e-12);
                prop_assert!(sorted[t] <= sorted[t - 1]);
            }
        }
    }
}
