//! Group advantage estimators and their population-level counterparts.
//!
//! Every estimator maps a sampled [`Group`] of rewards to one advantage per
//! member. [`population_advantage`] gives the exact conditional expectation
//! of a member's advantage given its own outcome, which is the advantage the
//! population objective actually sees.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::dist::Dist;
use crate::error::{ensure_positive, Error, Result};
use crate::math::{exp, ln, log_sum_exp, mean, sqrt};

pub const DEFAULT_SIGMA_FLOOR: f64 = 1e-6;

/// Largest `|Y|^G` accepted by [`population_advantage`].
pub const ENUMERATION_BUDGET: f64 = 1e7;

/// `G` outcomes drawn from one behavior snapshot, with their rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    indices: Vec<usize>,
    rewards: Vec<f64>,
    behavior_id: u64,
}

impl Group {
    pub fn new(indices: Vec<usize>, rewards: Vec<f64>, behavior_id: u64) -> Result<Self> {
        if indices.len() != rewards.len() {
            return Err(Error::LengthMismatch { expected: indices.len(), found: rewards.len() });
        }
        if rewards.len() < 2 {
            return Err(Error::GroupTooSmall(rewards.len()));
        }
        if let Some((index, &value)) =
            rewards.iter().enumerate().find(|(_, r)| !(0.0..=1.0).contains(*r))
        {
            return Err(Error::RewardOutOfRange { index, value });
        }
        Ok(Group { indices, rewards, behavior_id })
    }

    /// A group whose members are labelled `0..G` in order.
    pub fn from_rewards(rewards: Vec<f64>) -> Result<Self> {
        Group::new((0..rewards.len()).collect(), rewards, 0)
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn behavior_id(&self) -> u64 {
        self.behavior_id
    }

    pub fn mean_reward(&self) -> f64 {
        mean(&self.rewards)
    }

    /// Population (1/G) variance of the rewards.
    pub fn reward_variance(&self) -> f64 {
        let m = self.mean_reward();
        self.rewards.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / self.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdvantageMethod {
    /// `(r - mean) / max(std, floor)`.
    GrpoNorm,
    /// `r - beta log mean exp(r / beta)`.
    Oapl,
    /// The log-sum-exp estimator at a separate advantage temperature.
    OaplDecoupled,
    /// `r - mean + beta`.
    ShiftedMean,
    /// `r - mean`, the large-temperature limit of the log-sum-exp estimator.
    Centered,
}

impl AdvantageMethod {
    pub const ALL: [AdvantageMethod; 5] = [
        AdvantageMethod::GrpoNorm,
        AdvantageMethod::Oapl,
        AdvantageMethod::OaplDecoupled,
        AdvantageMethod::ShiftedMean,
        AdvantageMethod::Centered,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AdvantageMethod::GrpoNorm => "grpo_norm",
            AdvantageMethod::Oapl => "oapl",
            AdvantageMethod::OaplDecoupled => "oapl_decoupled",
            AdvantageMethod::ShiftedMean => "shifted_mean",
            AdvantageMethod::Centered => "centered",
        }
    }
}

impl fmt::Display for AdvantageMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AdvantageMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        let method = match key.as_str() {
            "grpo_norm" | "grpo" | "grponorm" => AdvantageMethod::GrpoNorm,
            "oapl" => AdvantageMethod::Oapl,
            "oapl_decoupled" | "oapldecoupled" => AdvantageMethod::OaplDecoupled,
            "shifted_mean" | "shiftedmean" | "lambert" => AdvantageMethod::ShiftedMean,
            "centered" => AdvantageMethod::Centered,
            _ => return Err(Error::InvalidConfig(alloc::format!("unknown advantage method `{s}`"))),
        };
        Ok(method)
    }
}

/// Per-member advantages plus the temperatures that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageVec {
    pub values: Vec<f64>,
    pub method: AdvantageMethod,
    /// Regularization temperature, when the estimator uses one.
    pub beta: Option<f64>,
    /// Advantage temperature of the decoupled estimator.
    pub beta2: Option<f64>,
}

impl AdvantageVec {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.values)
    }

    /// `(1/G) sum exp(values / t)` at the estimator's own temperature; the
    /// log-sum-exp estimators make this exactly one.
    pub fn exp_normalization(&self) -> Option<f64> {
        let t = match self.method {
            AdvantageMethod::Oapl | AdvantageMethod::ShiftedMean => self.beta?,
            AdvantageMethod::OaplDecoupled => self.beta2?,
            _ => return None,
        };
        Some(self.values.iter().map(|v| exp(v / t)).sum::<f64>() / self.len() as f64)
    }
}

pub fn grpo_advantage(g: &Group, sigma_floor: f64) -> AdvantageVec {
    let m = g.mean_reward();
    let scale = sqrt(g.reward_variance()).max(sigma_floor);
    let values = g
        .rewards()
        .iter()
        .map(|r| {
            let d = r - m;
            if d == 0.0 {
                0.0
            } else {
                d / scale
            }
        })
        .collect();
    AdvantageVec { values, method: AdvantageMethod::GrpoNorm, beta: None, beta2: None }
}

/// `beta log((1/G) sum_j exp(r_j / beta))`, max-shifted.
fn soft_baseline(rewards: &[f64], beta: f64) -> f64 {
    let lse = log_sum_exp(rewards.iter().map(|r| r / beta));
    beta * (lse - ln(rewards.len() as f64))
}

fn log_sum_exp_values(g: &Group, beta: f64) -> Vec<f64> {
    let rewards = g.rewards();
    if rewards.iter().all(|r| *r == rewards[0]) {
        return vec![0.0; rewards.len()];
    }
    let b = soft_baseline(rewards, beta);
    rewards.iter().map(|r| r - b).collect()
}

pub fn oapl_advantage(g: &Group, beta: f64) -> Result<AdvantageVec> {
    ensure_positive("beta", beta)?;
    Ok(AdvantageVec {
        values: log_sum_exp_values(g, beta),
        method: AdvantageMethod::Oapl,
        beta: Some(beta),
        beta2: None,
    })
}

/// Log-sum-exp advantage at the advantage temperature `beta2`. The
/// regularization temperature is attached separately with
/// [`AdvantageVec::beta`] if the caller knows it.
pub fn oapl_decoupled_advantage(g: &Group, beta2: f64) -> Result<AdvantageVec> {
    ensure_positive("beta2", beta2)?;
    Ok(AdvantageVec {
        values: log_sum_exp_values(g, beta2),
        method: AdvantageMethod::OaplDecoupled,
        beta: None,
        beta2: Some(beta2),
    })
}

pub fn shifted_mean_advantage(g: &Group, beta: f64) -> Result<AdvantageVec> {
    ensure_positive("beta", beta)?;
    let m = g.mean_reward();
    let values = g.rewards().iter().map(|r| (r - m) + beta).collect();
    Ok(AdvantageVec { values, method: AdvantageMethod::ShiftedMean, beta: Some(beta), beta2: None })
}

pub fn centered_advantage(g: &Group) -> AdvantageVec {
    let m = g.mean_reward();
    let values = g.rewards().iter().map(|r| r - m).collect();
    AdvantageVec { values, method: AdvantageMethod::Centered, beta: None, beta2: None }
}

/// Dispatches on `method`. `temperature` is beta for `Oapl`/`ShiftedMean`
/// and beta2 for `OaplDecoupled`; the other methods ignore it.
pub fn group_advantage(
    method: AdvantageMethod,
    g: &Group,
    temperature: f64,
    sigma_floor: f64,
) -> Result<AdvantageVec> {
    match method {
        AdvantageMethod::GrpoNorm => Ok(grpo_advantage(g, sigma_floor)),
        AdvantageMethod::Oapl => oapl_advantage(g, temperature),
        AdvantageMethod::OaplDecoupled => oapl_decoupled_advantage(g, temperature),
        AdvantageMethod::ShiftedMean => shifted_mean_advantage(g, temperature),
        AdvantageMethod::Centered => Ok(centered_advantage(g)),
    }
}

/// Sufficient statistics of the `G - 1` other members of a group.
struct Others {
    sum: f64,
    sum_sq: f64,
    max: f64,
    /// `sum_j exp((r_j - max) / t)`.
    scaled_exp_sum: f64,
}

/// Exact `E[advantage of member i | y_i = y]` for every outcome `y`, with the
/// other `G - 1` members drawn i.i.d. from `behavior`.
///
/// The expectation is an exact finite sum. Ordered tuples of the other
/// members are grouped by multiset and weighted by the multinomial
/// probability, which visits every tuple's contribution exactly once.
/// `GrpoNorm` uses [`DEFAULT_SIGMA_FLOOR`].
pub fn population_advantage(
    method: AdvantageMethod,
    reward_table: &[f64],
    behavior: &Dist,
    group_size: usize,
    temperature: f64,
) -> Result<Vec<f64>> {
    let n = reward_table.len();
    if n != behavior.len() {
        return Err(Error::LengthMismatch { expected: behavior.len(), found: n });
    }
    if group_size < 2 {
        return Err(Error::GroupTooSmall(group_size));
    }
    if libm::pow(n as f64, group_size as f64) > ENUMERATION_BUDGET {
        return Err(Error::EnumerationBudget { outcomes: n, group_size });
    }
    if matches!(
        method,
        AdvantageMethod::Oapl | AdvantageMethod::OaplDecoupled | AdvantageMethod::ShiftedMean
    ) {
        ensure_positive("temperature", temperature)?;
    }
    let g = group_size as f64;
    let t = temperature;
    let mut out = vec![0.0; n];
    let probs = behavior.probs();

    for_each_multiset(probs, group_size - 1, &mut |counts, prob| {
        let mut others =
            Others { sum: 0.0, sum_sq: 0.0, max: f64::NEG_INFINITY, scaled_exp_sum: 0.0 };
        for &(j, c) in counts {
            let r = reward_table[j];
            others.sum += c as f64 * r;
            others.sum_sq += c as f64 * r * r;
            others.max = others.max.max(r);
        }
        if matches!(method, AdvantageMethod::Oapl | AdvantageMethod::OaplDecoupled) {
            for &(j, c) in counts {
                others.scaled_exp_sum += c as f64 * exp((reward_table[j] - others.max) / t);
            }
        }
        for (y, slot) in out.iter_mut().enumerate() {
            let r = reward_table[y];
            let mean_r = (others.sum + r) / g;
            let a = match method {
                AdvantageMethod::ShiftedMean => r - mean_r + t,
                AdvantageMethod::Centered => r - mean_r,
                AdvantageMethod::GrpoNorm => {
                    let var = ((others.sum_sq + r * r) / g - mean_r * mean_r).max(0.0);
                    let d = r - mean_r;
                    if d == 0.0 {
                        0.0
                    } else {
                        d / sqrt(var).max(DEFAULT_SIGMA_FLOOR)
                    }
                }
                AdvantageMethod::Oapl | AdvantageMethod::OaplDecoupled => {
                    let top = others.max.max(r);
                    let s = others.scaled_exp_sum * exp((others.max - top) / t)
                        + exp((r - top) / t);
                    // r - t ln((1/G) sum exp(r_j / t))
                    (r - top) - t * (ln(s) - ln(g))
                }
            };
            *slot += prob * a;
        }
    });
    Ok(out)
}

/// Calls `f(counts, probability)` for every multiset of size `k` drawn from
/// outcomes with probabilities `probs`; `counts` lists `(outcome, count)`
/// pairs with nonzero count.
/// Receives `(outcome, count)` pairs and the multiset's probability.
type MultisetVisitor<'f> = dyn FnMut(&[(usize, u32)], f64) + 'f;

fn for_each_multiset(probs: &[f64], k: usize, f: &mut MultisetVisitor<'_>) {
    let mut log_fact = vec![0.0; k + 1];
    for i in 1..=k {
        log_fact[i] = log_fact[i - 1] + ln(i as f64);
    }
    let ln_probs: Vec<f64> = probs.iter().map(|p| ln(*p)).collect();
    let mut stack = Vec::with_capacity(k);
    recurse(0, k, log_fact[k], &ln_probs, &log_fact, &mut stack, f);

    fn recurse(
        start: usize,
        remaining: usize,
        log_weight: f64,
        ln_probs: &[f64],
        log_fact: &[f64],
        stack: &mut Vec<(usize, u32)>,
        f: &mut MultisetVisitor<'_>,
    ) {
        if remaining == 0 {
            f(stack, exp(log_weight));
            return;
        }
        let n = ln_probs.len();
        if start >= n {
            return;
        }
        if start == n - 1 {
            let c = remaining;
            stack.push((start, c as u32));
            f(stack, exp(log_weight + c as f64 * ln_probs[start] - log_fact[c]));
            stack.pop();
            return;
        }
        // Zero copies of `start`.
        recurse(start + 1, remaining, log_weight, ln_probs, log_fact, stack, f);
        if ln_probs[start] == f64::NEG_INFINITY {
            return;
        }
        for c in 1..=remaining {
            stack.push((start, c as u32));
            let w = log_weight + c as f64 * ln_probs[start] - log_fact[c];
            recurse(start + 1, remaining - c, w, ln_probs, log_fact, stack, f);
            stack.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn group(r: &[f64]) -> Group {
        Group::from_rewards(r.to_vec()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    /// Brute-force oracle: enumerate ordered (G-1)-tuples of the other
    /// members and average the group estimator applied to the full group.
    fn brute_population(
        method: AdvantageMethod,
        rewards: &[f64],
        behavior: &[f64],
        g: usize,
        t: f64,
    ) -> Vec<f64> {
        let n = rewards.len();
        let mut out = vec![0.0; n];
        let total = n.pow((g - 1) as u32);
        for y in 0..n {
            for code in 0..total {
                let mut c = code;
                let mut rs = vec![rewards[y]];
                let mut p = 1.0;
                for _ in 0..g - 1 {
                    let j = c % n;
                    c /= n;
                    rs.push(rewards[j]);
                    p *= behavior[j];
                }
                let adv = group_advantage(method, &group(&rs), t, DEFAULT_SIGMA_FLOOR).unwrap();
                out[y] += p * adv.values[0];
            }
        }
        out
    }

    #[test]
    fn group_validation() {
        assert_eq!(Group::from_rewards(vec![0.5]), Err(Error::GroupTooSmall(1)));
        assert!(matches!(
            Group::from_rewards(vec![0.5, 1.5]),
            Err(Error::RewardOutOfRange { index: 1, .. })
        ));
        assert!(Group::new(vec![0, 1], vec![0.0], 0).is_err());
    }

    #[test]
    fn grpo_examples() {
        let a = grpo_advantage(&group(&[1.0, 0.0]), 1e-6);
        assert!(close(&a.values, &[1.0, -1.0], 1e-15));
        let a = grpo_advantage(&group(&[0.3, 0.3, 0.3]), 1e-6);
        assert_eq!(a.values, vec![0.0, 0.0, 0.0]);
        let a = grpo_advantage(&group(&[1.0, 0.0, 0.0, 1.0]), 1e-6);
        assert!(close(&a.values, &[1.0, -1.0, -1.0, 1.0], 1e-15));
    }

    #[test]
    fn oapl_examples() {
        let a = oapl_advantage(&group(&[1.0, 0.0]), 1.0).unwrap();
        // 1 - ln((e + 1) / 2) and -ln((e + 1) / 2).
        let b = ((1f64.exp() + 1.0) / 2.0).ln();
        assert!(close(&a.values, &[1.0 - b, -b], 1e-15));
        assert!(close(&a.values, &[0.379_885, -0.620_115], 1e-6));
        let a = oapl_advantage(&group(&[0.7, 0.7, 0.7]), 1e-3).unwrap();
        assert_eq!(a.values, vec![0.0; 3]);
        assert!(oapl_advantage(&group(&[0.7, 0.7]), 0.0).is_err());
    }

    #[test]
    fn oapl_small_beta_does_not_overflow() {
        let a = oapl_advantage(&group(&[1.0, 0.0, 0.9, 0.2]), 1e-3).unwrap();
        assert!(a.values.iter().all(|v| v.is_finite()));
        assert!((a.exp_normalization().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decoupled_examples() {
        let a = oapl_decoupled_advantage(&group(&[1.0, 0.0]), 1.0).unwrap();
        assert!(close(&a.values, &[0.379_885, -0.620_115], 1e-6));
        assert_eq!(a.beta2, Some(1.0));
        let a = oapl_decoupled_advantage(&group(&[1.0, 0.0]), 1e6).unwrap();
        assert!(close(&a.values, &[0.5, -0.5], 1e-6));
        // Var = 0.25 so the first-order correction is -0.25 / 20.
        let a = oapl_decoupled_advantage(&group(&[1.0, 0.0]), 10.0).unwrap();
        assert!((a.values[0] - 0.5 + 0.0125).abs() < 2e-3);
        assert!((a.values[1] + 0.5 + 0.0125).abs() < 2e-3);
    }

    #[test]
    fn shifted_mean_examples() {
        let a = shifted_mean_advantage(&group(&[1.0, 0.0]), 0.1).unwrap();
        assert!(close(&a.values, &[0.6, -0.4], 1e-15));
        let a = shifted_mean_advantage(&group(&[0.2, 0.2, 0.2]), 0.05).unwrap();
        assert!(close(&a.values, &[0.05; 3], 1e-15));
    }

    #[test]
    fn population_matches_brute_force() {
        let rewards = [0.1, 0.9, 0.4, 0.65];
        let behavior = [0.1, 0.2, 0.3, 0.4];
        let d = Dist::new(behavior.to_vec()).unwrap();
        for method in AdvantageMethod::ALL {
            for g in 2..=4 {
                for &t in &[0.05, 0.7] {
                    let fast = population_advantage(method, &rewards, &d, g, t).unwrap();
                    let slow = brute_population(method, &rewards, &behavior, g, t);
                    assert!(close(&fast, &slow, 1e-12), "{method} G={g} t={t}: {fast:?} {slow:?}");
                }
            }
        }
    }

    #[test]
    fn population_shifted_mean_closed_form() {
        let rewards = [0.0, 0.3, 1.0];
        let d = Dist::new(vec![0.5, 0.3, 0.2]).unwrap();
        let v = d.expect(&rewards);
        for g in 2..=5 {
            let a = population_advantage(AdvantageMethod::ShiftedMean, &rewards, &d, g, 0.2).unwrap();
            let k = (g as f64 - 1.0) / g as f64;
            for (y, ay) in a.iter().enumerate() {
                assert!((ay - (k * (rewards[y] - v) + 0.2)).abs() < 1e-10);
            }
            assert!((d.expect(&a) - 0.2).abs() < 1e-10);
            let c = population_advantage(AdvantageMethod::Centered, &rewards, &d, g, 0.0).unwrap();
            assert!(d.expect(&c).abs() < 1e-12);
        }
    }

    #[test]
    fn population_oapl_two_outcome_jensen() {
        let d = Dist::uniform(2).unwrap();
        let a = population_advantage(AdvantageMethod::Oapl, &[1.0, 0.0], &d, 2, 0.1).unwrap();
        let z: f64 = a.iter().map(|x| 0.5 * (x / 0.1).exp()).sum();
        assert!(z < 1.0, "z = {z}");
    }

    #[test]
    fn enumeration_budget() {
        let d = Dist::uniform(32).unwrap();
        let r = vec![0.5; 32];
        assert!(population_advantage(AdvantageMethod::Centered, &r, &d, 4, 0.1).is_ok());
        assert_eq!(
            population_advantage(AdvantageMethod::Centered, &r, &d, 5, 0.1),
            Err(Error::EnumerationBudget { outcomes: 32, group_size: 5 })
        );
    }

    #[test]
    fn method_names_round_trip() {
        for m in AdvantageMethod::ALL {
            assert_eq!(m.name().parse::<AdvantageMethod>().unwrap(), m);
        }
        assert!("bogus".parse::<AdvantageMethod>().is_err());
    }

    fn rewards_strategy() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..=1.0, 2..16)
    }

    proptest! {
        #[test]
        fn oapl_group_identity(r in rewards_strategy(), lb in -3.0f64..1.0) {
            let beta = 10f64.powf(lb);
            let a = oapl_advantage(&group(&r), beta).unwrap();
            prop_assert!((a.exp_normalization().unwrap() - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn shifted_mean_identity(r in rewards_strategy(), beta in 1e-4f64..2.0) {
            let a = shifted_mean_advantage(&group(&r), beta).unwrap();
            prop_assert!((a.mean() - beta).abs() <= 1e-12);
        }

        #[test]
        fn centered_identity(r in rewards_strategy()) {
            prop_assert!(centered_advantage(&group(&r)).mean().abs() <= 1e-12);
        }

        #[test]
        fn population_jensen_is_strict(
            r in proptest::collection::vec(0.0f64..=1.0, 2..5),
            w in proptest::collection::vec(0.05f64..1.0, 4),
            g in 2usize..5,
            lb in -2.0f64..0.0,
        ) {
            let n = r.len();
            let d = Dist::from_weights(&w[..n]).unwrap();
            let mean_r = d.expect(&r);
            let var: f64 = d.probs().iter().zip(&r).map(|(p, x)| p * (x - mean_r).powi(2)).sum();
            prop_assume!(var > 1e-6);
            let beta = 10f64.powf(lb);
            let a = population_advantage(AdvantageMethod::Oapl, &r, &d, g, beta).unwrap();
            let z: f64 = d.probs().iter().zip(&a).map(|(p, x)| p * (x / beta).exp()).sum();
            prop_assert!(z < 1.0, "z = {}", z);
        }
    }
}
