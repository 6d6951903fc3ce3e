//! Finite-outcome bandit instances, snapshots and seeded sampling.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::advantage::Group;
use crate::dist::Dist;
use crate::error::{ensure_positive, Error, Result};
use crate::math::{exp, ln};
use crate::objective::PolicyParams;

/// Stream reserved for drawing instance reward tables.
const INSTANCE_STREAM: u64 = u64::MAX;

/// Deterministic rewards in `[0, 1]` for every (context, outcome) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditInstance {
    num_contexts: usize,
    outcomes: usize,
    /// Row-major, one row per context.
    reward_table: Vec<f64>,
    context_weights: Dist,
    seed: u64,
}

impl BanditInstance {
    pub fn new(
        num_contexts: usize,
        outcomes: usize,
        reward_table: Vec<f64>,
        context_weights: Dist,
        seed: u64,
    ) -> Result<Self> {
        if num_contexts == 0 || outcomes == 0 {
            return Err(Error::InvalidConfig("instance needs at least one context and outcome".into()));
        }
        if reward_table.len() != num_contexts * outcomes {
            return Err(Error::LengthMismatch {
                expected: num_contexts * outcomes,
                found: reward_table.len(),
            });
        }
        if context_weights.len() != num_contexts {
            return Err(Error::LengthMismatch { expected: num_contexts, found: context_weights.len() });
        }
        if let Some((index, &value)) =
            reward_table.iter().enumerate().find(|(_, r)| !(0.0..=1.0).contains(*r))
        {
            return Err(Error::RewardOutOfRange { index, value });
        }
        Ok(BanditInstance { num_contexts, outcomes, reward_table, context_weights, seed })
    }

    /// Uniform `[0, 1)` rewards drawn from `seed`, uniform context weights.
    pub fn generate(num_contexts: usize, outcomes: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(INSTANCE_STREAM);
        let table = (0..num_contexts * outcomes).map(|_| rng.gen::<f64>()).collect();
        let weights = Dist::uniform(num_contexts)?;
        BanditInstance::new(num_contexts, outcomes, table, weights, seed)
    }

    pub fn num_contexts(&self) -> usize {
        self.num_contexts
    }

    pub fn outcomes(&self) -> usize {
        self.outcomes
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn context_weights(&self) -> &Dist {
        &self.context_weights
    }

    pub fn reward_table(&self) -> &[f64] {
        &self.reward_table
    }

    /// Rewards of one context. Panics if `context` is out of range.
    pub fn rewards(&self, context: usize) -> &[f64] {
        &self.reward_table[context * self.outcomes..(context + 1) * self.outcomes]
    }

    fn check_context(&self, context: usize) -> Result<()> {
        if context < self.num_contexts {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index: context, len: self.num_contexts })
        }
    }
}

/// Frozen per-context policy used as the behavior policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    id: u64,
    params: Vec<PolicyParams>,
    created_at_step: u64,
}

impl Snapshot {
    pub fn new(id: u64, params: Vec<PolicyParams>, created_at_step: u64) -> Self {
        Snapshot { id, params, created_at_step }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn created_at_step(&self) -> u64 {
        self.created_at_step
    }

    pub fn params(&self) -> &[PolicyParams] {
        &self.params
    }

    pub fn dist(&self, context: usize) -> Dist {
        self.params[context].dist()
    }
}

/// Key of a counter-based random stream.
///
/// `seed` and `step` select the ChaCha key and stream; `context` and `group`
/// select a disjoint block of the keystream, so draws never depend on the
/// order in which groups are sampled. Contexts must stay below `2^20` and
/// groups below `2^16`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub step: u64,
    pub context: u64,
    pub group: u64,
}

impl StreamKey {
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.step);
        rng.set_word_pos(((self.context as u128) << 48) | ((self.group as u128) << 32));
        rng
    }
}

/// Inverse-CDF draw from `probs`; never returns a zero-probability index.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// `g` i.i.d. draws from the snapshot policy of `context`, stamped with the
/// snapshot id.
pub fn sample_group(
    inst: &BanditInstance,
    snap: &Snapshot,
    context: usize,
    g: usize,
    key: StreamKey,
) -> Result<Group> {
    inst.check_context(context)?;
    if g < 2 {
        return Err(Error::GroupTooSmall(g));
    }
    let dist = snap.dist(context);
    if dist.len() != inst.outcomes() {
        return Err(Error::LengthMismatch { expected: inst.outcomes(), found: dist.len() });
    }
    let mut rng = key.rng();
    let rewards = inst.rewards(context);
    let indices: Vec<usize> = (0..g).map(|_| sample_index(dist.probs(), &mut rng)).collect();
    let group_rewards = indices.iter().map(|&y| rewards[y]).collect();
    Group::new(indices, group_rewards, snap.id())
}

/// Shannon entropy in nats.
pub fn entropy(d: &Dist) -> f64 {
    -d.probs().iter().filter(|p| **p > 0.0).map(|p| p * ln(*p)).sum::<f64>()
}

/// `KL(p || q)`; errors when `p` puts mass outside the support of `q`.
pub fn kl(p: &Dist, q: &Dist) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch { expected: p.len(), found: q.len() });
    }
    let mut total = 0.0;
    for (i, (a, b)) in p.probs().iter().zip(q.probs()).enumerate() {
        if *a > 0.0 {
            if *b <= 0.0 {
                return Err(Error::SupportViolation { index: i });
            }
            total += a * (ln(*a) - ln(*b));
        }
    }
    Ok(total.max(0.0))
}

/// `pi_old(y) exp(r(y) / beta)`, normalized in log space.
pub fn tilt(behavior: &Dist, rewards: &[f64], beta: f64) -> Result<Dist> {
    ensure_positive("beta", beta)?;
    if rewards.len() != behavior.len() {
        return Err(Error::LengthMismatch { expected: behavior.len(), found: rewards.len() });
    }
    let logw: Vec<f64> = behavior
        .probs()
        .iter()
        .zip(rewards)
        .map(|(p, r)| if *p > 0.0 { ln(*p) + r / beta } else { f64::NEG_INFINITY })
        .collect();
    Dist::from_log_weights(&logw)
}

/// The KL-regularized optimum for `context` relative to the snapshot policy.
pub fn exponential_target(
    inst: &BanditInstance,
    snap: &Snapshot,
    context: usize,
    beta: f64,
) -> Result<Dist> {
    inst.check_context(context)?;
    tilt(&snap.dist(context), inst.rewards(context), beta)
}

/// Exact `sum_y pi(y) r(y)`.
pub fn expected_reward(d: &Dist, rewards: &[f64]) -> f64 {
    d.expect(rewards)
}

/// Largest `p(y) / q(y)`, `inf` on a support violation.
pub fn max_ratio(p: &Dist, q: &Dist) -> f64 {
    p.probs()
        .iter()
        .zip(q.probs())
        .map(|(a, b)| if *b > 0.0 { exp(ln(*a) - ln(*b)) } else if *a > 0.0 { f64::INFINITY } else { 0.0 })
        .fold(0.0, f64::max)
}
