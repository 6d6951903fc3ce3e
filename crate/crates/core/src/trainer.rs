//! Lagged off-policy training loop on tabular bandits.
//!
//! Each step samples groups from a snapshot that is refreshed every `lag`
//! steps, computes group advantages, and applies one optimizer step to the
//! per-context logits. Metrics are exact sums over the outcome set.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::advantage::{group_advantage, population_advantage, AdvantageMethod};
use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::math::sqrt;
use crate::objective::{grpo_clip, regression_loss, regularized_mle, weighted_mle, ObjectiveKind, PolicyParams};
use crate::tabular::{entropy, kl, max_ratio, sample_group, BanditInstance, Snapshot, StreamKey};
use crate::target::{solve_tau, Regime};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OptimizerKind {
    Sgd,
    /// Adam with the usual `(0.9, 0.999, 1e-8)` constants.
    AdaptiveMoment,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::AdaptiveMoment => "adam",
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" | "adaptive_moment" | "adaptivemoment" => Ok(OptimizerKind::AdaptiveMoment),
            _ => Err(Error::InvalidConfig(format!("unknown optimizer `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub objective: ObjectiveKind,
    pub advantage_method: AdvantageMethod,
    /// Regularization temperature; also the weight temperature of
    /// [`ObjectiveKind::WeightedMle`].
    pub beta: f64,
    /// Advantage temperature of [`AdvantageMethod::OaplDecoupled`].
    pub beta2: Option<f64>,
    pub lag: u64,
    pub group_size: usize,
    pub steps: u64,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub groups_per_step: usize,
    pub clip_epsilon: f64,
    pub sigma_floor: f64,
}

impl TrainConfig {
    pub const DEFAULT_LAG: u64 = 16;
    pub const DEFAULT_GROUP_SIZE: usize = 4;
    pub const DEFAULT_STEPS: u64 = 400;
    pub const DEFAULT_LEARNING_RATE: f64 = 1e-2;
    pub const DEFAULT_GROUPS_PER_STEP: usize = 8;
    pub const DEFAULT_CLIP_EPSILON: f64 = 0.2;

    /// Defaults for everything except the three required choices.
    pub fn new(objective: ObjectiveKind, advantage_method: AdvantageMethod, beta: f64) -> Self {
        TrainConfig {
            objective,
            advantage_method,
            beta,
            beta2: None,
            lag: Self::DEFAULT_LAG,
            group_size: Self::DEFAULT_GROUP_SIZE,
            steps: Self::DEFAULT_STEPS,
            learning_rate: Self::DEFAULT_LEARNING_RATE,
            optimizer: OptimizerKind::AdaptiveMoment,
            seed: 0,
            groups_per_step: Self::DEFAULT_GROUPS_PER_STEP,
            clip_epsilon: Self::DEFAULT_CLIP_EPSILON,
            sigma_floor: crate::advantage::DEFAULT_SIGMA_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return fail("beta must be positive".into());
        }
        match (self.advantage_method, self.beta2) {
            (AdvantageMethod::OaplDecoupled, None) => {
                return fail("beta2 is required for the oapl_decoupled advantage".into())
            }
            (AdvantageMethod::OaplDecoupled, Some(b2)) if !(b2 > 0.0 && b2.is_finite()) => {
                return fail("beta2 must be positive".into())
            }
            (AdvantageMethod::OaplDecoupled, _) | (_, None) => {}
            (m, Some(_)) => return fail(format!("beta2 is only used by oapl_decoupled, not {m}")),
        }
        if self.lag < 1 {
            return fail("lag must be at least 1".into());
        }
        if self.group_size < 2 {
            return fail("group_size must be at least 2".into());
        }
        if self.steps < 1 {
            return fail("steps must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive".into());
        }
        if self.groups_per_step < 1 || self.groups_per_step >= 1 << 16 {
            return fail("groups_per_step must be in [1, 65535]".into());
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return fail("clip_epsilon must lie in (0, 1)".into());
        }
        if !(self.sigma_floor > 0.0) {
            return fail("sigma_floor must be positive".into());
        }
        Ok(())
    }

    /// Temperature handed to the advantage estimator.
    pub fn advantage_temperature(&self) -> f64 {
        match self.advantage_method {
            AdvantageMethod::OaplDecoupled => self.beta2.unwrap_or(self.beta),
            _ => self.beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub step: u64,
    pub expected_reward: f64,
    pub entropy: f64,
    /// `KL(pi_theta || pi_snapshot)`, averaged over contexts.
    pub kl_to_snapshot: f64,
    pub max_ratio: f64,
    /// Most severe regime of the population target across contexts at the
    /// current snapshot; `None` when exact enumeration is out of budget.
    pub regime: Option<Regime>,
}

#[derive(Debug, Clone, PartialEq)]
struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

/// Everything a run carries between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub instance: BanditInstance,
    pub params: Vec<PolicyParams>,
    pub snapshot: Snapshot,
    /// Index of the next step to execute.
    pub step: u64,
    pub snapshot_regime: Option<Regime>,
    adam: AdamState,
}

impl TrainState {
    /// Uniform logits in every context; the first step takes the snapshot.
    pub fn new(instance: BanditInstance) -> Self {
        let n = instance.outcomes();
        let k = instance.num_contexts();
        let params = vec![PolicyParams::uniform(n); k];
        TrainState {
            snapshot: Snapshot::new(0, params.clone(), 0),
            params,
            instance,
            step: 0,
            snapshot_regime: None,
            adam: AdamState { m: vec![vec![0.0; n]; k], v: vec![vec![0.0; n]; k], t: 0 },
        }
    }

    pub fn policy(&self, context: usize) -> Dist {
        self.params[context].dist()
    }
}

/// Most severe population-target regime over contexts for `snap`.
pub fn population_regime(inst: &BanditInstance, snap: &Snapshot, cfg: &TrainConfig) -> Option<Regime> {
    let mut worst: Option<Regime> = None;
    for c in 0..inst.num_contexts() {
        let behavior = snap.dist(c);
        let adv = population_advantage(
            cfg.advantage_method,
            inst.rewards(c),
            &behavior,
            cfg.group_size,
            cfg.advantage_temperature(),
        )
        .ok()?;
        let regime = solve_tau(&adv, &behavior, cfg.beta).ok()?.regime;
        if worst.is_none_or(|w| regime.severity() > w.severity()) {
            worst = Some(regime);
        }
    }
    worst
}

/// Exact metrics of the current policy against the current snapshot.
pub fn metrics(state: &TrainState, step: u64) -> Result<MetricsRecord> {
    let inst = &state.instance;
    let weights = inst.context_weights().probs();
    let mut rec = MetricsRecord {
        step,
        expected_reward: 0.0,
        entropy: 0.0,
        kl_to_snapshot: 0.0,
        max_ratio: 0.0,
        regime: state.snapshot_regime,
    };
    for (c, w) in weights.iter().enumerate() {
        let pi = state.policy(c);
        let old = state.snapshot.dist(c);
        rec.expected_reward += w * pi.expect(inst.rewards(c));
        rec.entropy += w * entropy(&pi);
        rec.kl_to_snapshot += w * kl(&pi, &old)?;
        rec.max_ratio = rec.max_ratio.max(max_ratio(&pi, &old));
    }
    rec.expected_reward = rec.expected_reward.clamp(0.0, 1.0);
    Ok(rec)
}

/// Mean improvement direction of the configured objective for one context.
fn context_direction(state: &TrainState, cfg: &TrainConfig, context: usize) -> Result<Vec<f64>> {
    let n = state.instance.outcomes();
    let behavior = state.snapshot.dist(context);
    let params = &state.params[context];
    let mut dir = vec![0.0; n];
    for k in 0..cfg.groups_per_step {
        let key = StreamKey { seed: cfg.seed, step: state.step, context: context as u64, group: k as u64 };
        let g = sample_group(&state.instance, &state.snapshot, context, cfg.group_size, key)?;
        let eval = match cfg.objective {
            ObjectiveKind::WeightedMle => weighted_mle(params, &g, cfg.beta)?,
            kind => {
                let adv =
                    group_advantage(cfg.advantage_method, &g, cfg.advantage_temperature(), cfg.sigma_floor)?;
                match kind {
                    ObjectiveKind::RegularizedMle => regularized_mle(params, &behavior, &g, &adv, cfg.beta)?,
                    ObjectiveKind::Regression => regression_loss(params, &behavior, &g, &adv, cfg.beta)?,
                    _ => grpo_clip(params, &behavior, &g, &adv, cfg.clip_epsilon)?,
                }
            }
        };
        for (d, x) in dir.iter_mut().zip(eval.improvement_direction()) {
            *d += x / cfg.groups_per_step as f64;
        }
    }
    Ok(dir)
}

/// Executes one step and returns metrics of the post-step policy.
///
/// The snapshot is refreshed first when `step % lag == 0`. The config is not
/// re-validated here, so a zero learning rate is accepted and leaves the
/// parameters unchanged.
pub fn train_step(state: &mut TrainState, cfg: &TrainConfig) -> Result<MetricsRecord> {
    let step = state.step;
    if step.is_multiple_of(cfg.lag.max(1)) {
        let id = if step == 0 { 0 } else { state.snapshot.id() + 1 };
        state.snapshot = Snapshot::new(id, state.params.clone(), step);
        state.snapshot_regime = population_regime(&state.instance, &state.snapshot, cfg);
    }
    let weights: Vec<f64> = state.instance.context_weights().probs().to_vec();
    let mut dirs = Vec::with_capacity(weights.len());
    for c in 0..weights.len() {
        let mut d = context_direction(state, cfg, c)?;
        for x in d.iter_mut() {
            *x *= weights[c];
        }
        dirs.push(d);
    }
    match cfg.optimizer {
        OptimizerKind::Sgd => {
            for (p, d) in state.params.iter_mut().zip(&dirs) {
                for (l, x) in p.logits.iter_mut().zip(d) {
                    *l += cfg.learning_rate * x;
                }
            }
        }
        OptimizerKind::AdaptiveMoment => {
            let adam = &mut state.adam;
            adam.t += 1;
            let c1 = 1.0 - libm::pow(ADAM_BETA1, adam.t as f64);
            let c2 = 1.0 - libm::pow(ADAM_BETA2, adam.t as f64);
            for (c, d) in dirs.iter().enumerate() {
                for (j, x) in d.iter().enumerate() {
                    let m = &mut adam.m[c][j];
                    let v = &mut adam.v[c][j];
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * x;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * x * x;
                    let update = (*m / c1) / (sqrt(*v / c2) + ADAM_EPS);
                    state.params[c].logits[j] += cfg.learning_rate * update;
                }
            }
        }
    }
    state.step += 1;
    metrics(state, step)
}

/// Runs `cfg.steps` steps from uniform logits, calling `sink` on each record.
pub fn run_experiment_with(
    cfg: &TrainConfig,
    inst: &BanditInstance,
    mut sink: impl FnMut(&MetricsRecord),
) -> Result<TrainState> {
    cfg.validate()?;
    let mut state = TrainState::new(inst.clone());
    for _ in 0..cfg.steps {
        let rec = train_step(&mut state, cfg)?;
        sink(&rec);
    }
    Ok(state)
}

pub fn run_experiment(cfg: &TrainConfig, inst: &BanditInstance) -> Result<Vec<MetricsRecord>> {
    let mut out = Vec::with_capacity(cfg.steps as usize);
    run_experiment_with(cfg, inst, |r| out.push(r.clone()))?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepAxis {
    Beta,
    Lag,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Beta => "beta",
            SweepAxis::Lag => "lag",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "beta" => Ok(SweepAxis::Beta),
            "lag" => Ok(SweepAxis::Lag),
            _ => Err(Error::InvalidConfig(format!("unknown sweep axis `{s}`"))),
        }
    }
}

/// Advantage estimators compared by a sweep.
pub const SWEEP_METHODS: [AdvantageMethod; 2] = [AdvantageMethod::Oapl, AdvantageMethod::ShiftedMean];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub method: AdvantageMethod,
    pub axis: SweepAxis,
    pub value: f64,
    pub seed: u64,
    pub config: TrainConfig,
}

/// One cell per (method, value, seed); seeds are `base.seed + k`.
pub fn sweep_plan(base: &TrainConfig, axis: SweepAxis, values: &[f64], seeds: u64) -> Result<Vec<SweepCell>> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one value".into()));
    }
    if seeds == 0 {
        return Err(Error::InvalidConfig("sweep needs at least one seed".into()));
    }
    let mut cells = Vec::new();
    for &method in &SWEEP_METHODS {
        for &value in values {
            for k in 0..seeds {
                let mut config = base.clone();
                config.advantage_method = method;
                config.beta2 = None;
                config.seed = base.seed.wrapping_add(k);
                match axis {
                    SweepAxis::Beta => config.beta = value,
                    SweepAxis::Lag => {
                        if !(value >= 1.0 && libm::trunc(value) == value) {
                            return Err(Error::InvalidConfig(format!("lag value {value} is not a positive integer")));
                        }
                        config.lag = value as u64;
                    }
                }
                config.validate()?;
                cells.push(SweepCell { method, axis, value, seed: config.seed, config });
            }
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub method: AdvantageMethod,
    pub axis: SweepAxis,
    pub value: f64,
    pub seed: u64,
    pub initial_entropy: f64,
    pub terminal_reward: f64,
    pub terminal_entropy: f64,
    /// Whether every snapshot refresh classified the target as pessimistic.
    pub pessimistic_at_every_refresh: bool,
    /// Most severe regime seen at any refresh.
    pub worst_regime: Option<Regime>,
}

/// Summarizes a finished trajectory. `records` must be nonempty.
pub fn summarize(cell: &SweepCell, inst: &BanditInstance, records: &[MetricsRecord]) -> SweepSummary {
    let last = records.last().expect("trajectory has at least one step");
    let lag = cell.config.lag;
    let mut worst: Option<Regime> = None;
    let mut all_pessimistic = true;
    for r in records.iter().filter(|r| r.step % lag == 0) {
        all_pessimistic &= r.regime == Some(Regime::Pessimistic);
        if let Some(g) = r.regime {
            if worst.is_none_or(|w| g.severity() > w.severity()) {
                worst = Some(g);
            }
        }
    }
    SweepSummary {
        method: cell.method,
        axis: cell.axis,
        value: cell.value,
        seed: cell.seed,
        initial_entropy: libm::log(inst.outcomes() as f64),
        terminal_reward: last.expected_reward,
        terminal_entropy: last.entropy,
        pessimistic_at_every_refresh: all_pessimistic,
        worst_regime: worst,
    }
}

/// Runs every cell of the plan sequentially.
pub fn sweep(
    base: &TrainConfig,
    axis: SweepAxis,
    values: &[f64],
    seeds: u64,
    inst: &BanditInstance,
) -> Result<Vec<(SweepSummary, Vec<MetricsRecord>)>> {
    sweep_plan(base, axis, values, seeds)?
        .iter()
        .map(|cell| {
            let records = run_experiment(&cell.config, inst)?;
            Ok((summarize(cell, inst, &records), records))
        })
        .collect()
}
