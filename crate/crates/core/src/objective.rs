//! Training objectives over tabular softmax policies.
//!
//! Outcomes are single-step, so a "sequence" log-probability is just the
//! log-softmax of the chosen outcome and the sentence- and token-level forms
//! coincide. Sampled objectives average over a [`Group`]; the `expected_*`
//! variants sum exactly over the outcome set weighted by the behavior policy.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::advantage::{AdvantageVec, Group};
use crate::dist::Dist;
use crate::error::{ensure_positive, Error, Result};
use crate::math::{exp, ln, log_sum_exp, sqrt};

/// Logits of a softmax policy for one context.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub logits: Vec<f64>,
}

impl PolicyParams {
    pub fn new(logits: Vec<f64>) -> Self {
        PolicyParams { logits }
    }

    pub fn uniform(n: usize) -> Self {
        PolicyParams { logits: vec![0.0; n] }
    }

    /// Logits reproducing a strictly positive distribution.
    pub fn from_dist(d: &Dist) -> Self {
        PolicyParams { logits: d.ln_probs() }
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn log_probs(&self) -> Vec<f64> {
        let lse = log_sum_exp(self.logits.iter().copied());
        self.logits.iter().map(|l| l - lse).collect()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs().into_iter().map(exp).collect()
    }

    pub fn dist(&self) -> Dist {
        Dist::softmax(&self.logits).expect("finite logits give a valid softmax")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ObjectiveKind {
    /// Advantage-weighted log-likelihood minus a squared log-ratio penalty.
    RegularizedMle,
    /// Squared regression of `beta * log-ratio` onto the advantage.
    Regression,
    /// Exponentially weighted maximum likelihood.
    WeightedMle,
    /// Clipped-ratio surrogate.
    GrpoClip,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 4] = [
        ObjectiveKind::RegularizedMle,
        ObjectiveKind::Regression,
        ObjectiveKind::WeightedMle,
        ObjectiveKind::GrpoClip,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::RegularizedMle => "regularized_mle",
            ObjectiveKind::Regression => "regression",
            ObjectiveKind::WeightedMle => "weighted_mle",
            ObjectiveKind::GrpoClip => "grpo_clip",
        }
    }

    /// Whether training minimizes (rather than maximizes) the value.
    pub fn is_loss(self) -> bool {
        matches!(self, ObjectiveKind::Regression)
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Ok(match key.as_str() {
            "regularized_mle" | "regularizedmle" => ObjectiveKind::RegularizedMle,
            "regression" => ObjectiveKind::Regression,
            "weighted_mle" | "weightedmle" => ObjectiveKind::WeightedMle,
            "grpo_clip" | "grpoclip" | "grpo" => ObjectiveKind::GrpoClip,
            _ => return Err(Error::InvalidConfig(alloc::format!("unknown objective `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    pub value: f64,
    /// Gradient of `value` with respect to the logits.
    pub grad: Vec<f64>,
    pub objective: ObjectiveKind,
}

impl ObjectiveEval {
    /// Direction that improves the objective: `grad` for maximized
    /// objectives, `-grad` for losses.
    pub fn improvement_direction(&self) -> Vec<f64> {
        if self.objective.is_loss() {
            self.grad.iter().map(|g| -g).collect()
        } else {
            self.grad.clone()
        }
    }
}

/// Turns per-outcome coefficients `c_y` of `d log pi(y)` into a logit
/// gradient: `grad_k = c_k - pi_k sum_y c_y`.
fn softmax_chain(coef: &[f64], probs: &[f64]) -> Vec<f64> {
    let total: f64 = coef.iter().sum();
    coef.iter().zip(probs).map(|(c, p)| c - p * total).collect()
}

fn check_sample(params: &PolicyParams, g: &Group, adv: Option<&AdvantageVec>) -> Result<()> {
    if let Some(adv) = adv {
        if adv.len() != g.len() {
            return Err(Error::LengthMismatch { expected: g.len(), found: adv.len() });
        }
    }
    let n = params.len();
    match g.indices().iter().find(|&&y| y >= n) {
        Some(&index) => Err(Error::IndexOutOfRange { index, len: n }),
        None => Ok(()),
    }
}

fn behavior_log_prob(behavior: &Dist, y: usize) -> Result<f64> {
    let p = behavior.probs()[y];
    if p > 0.0 {
        Ok(ln(p))
    } else {
        Err(Error::SupportViolation { index: y })
    }
}

/// `(1/G) sum_i [A_i log pi(y_i) - (beta/2) (log pi(y_i) / pi_old(y_i))^2]`.
pub fn regularized_mle(
    params: &PolicyParams,
    behavior: &Dist,
    g: &Group,
    adv: &AdvantageVec,
    beta: f64,
) -> Result<ObjectiveEval> {
    ensure_positive("beta", beta)?;
    check_sample(params, g, Some(adv))?;
    let lp = params.log_probs();
    let probs: Vec<f64> = lp.iter().map(|l| exp(*l)).collect();
    let inv_g = 1.0 / g.len() as f64;
    let mut value = 0.0;
    let mut coef = vec![0.0; params.len()];
    for (&y, a) in g.indices().iter().zip(&adv.values) {
        let ratio = lp[y] - behavior_log_prob(behavior, y)?;
        value += a * lp[y] - 0.5 * beta * ratio * ratio;
        coef[y] += (a - beta * ratio) * inv_g;
    }
    Ok(ObjectiveEval {
        value: value * inv_g,
        grad: softmax_chain(&coef, &probs),
        objective: ObjectiveKind::RegularizedMle,
    })
}

/// `(1/G) sum_i (beta log(pi(y_i) / pi_old(y_i)) - A_i)^2`.
pub fn regression_loss(
    params: &PolicyParams,
    behavior: &Dist,
    g: &Group,
    adv: &AdvantageVec,
    beta: f64,
) -> Result<ObjectiveEval> {
    ensure_positive("beta", beta)?;
    check_sample(params, g, Some(adv))?;
    let lp = params.log_probs();
    let probs: Vec<f64> = lp.iter().map(|l| exp(*l)).collect();
    let inv_g = 1.0 / g.len() as f64;
    let mut value = 0.0;
    let mut coef = vec![0.0; params.len()];
    for (&y, a) in g.indices().iter().zip(&adv.values) {
        let resid = beta * (lp[y] - behavior_log_prob(behavior, y)?) - a;
        value += resid * resid;
        coef[y] += 2.0 * beta * resid * inv_g;
    }
    Ok(ObjectiveEval {
        value: value * inv_g,
        grad: softmax_chain(&coef, &probs),
        objective: ObjectiveKind::Regression,
    })
}

/// `(1/G) sum_i u_i log pi(y_i)` with `u_i = exp((r_i - mean r) / eta)`.
pub fn weighted_mle(params: &PolicyParams, g: &Group, eta: f64) -> Result<ObjectiveEval> {
    ensure_positive("eta", eta)?;
    check_sample(params, g, None)?;
    let lp = params.log_probs();
    let probs: Vec<f64> = lp.iter().map(|l| exp(*l)).collect();
    let mean_r = g.mean_reward();
    let inv_g = 1.0 / g.len() as f64;
    let mut value = 0.0;
    let mut coef = vec![0.0; params.len()];
    for (&y, r) in g.indices().iter().zip(g.rewards()) {
        let u = exp((r - mean_r) / eta);
        value += u * lp[y];
        coef[y] += u * inv_g;
    }
    Ok(ObjectiveEval {
        value: value * inv_g,
        grad: softmax_chain(&coef, &probs),
        objective: ObjectiveKind::WeightedMle,
    })
}

/// `(1/G) sum_i min(rho_i A_i, clip(rho_i, 1 - eps, 1 + eps) A_i)` with
/// `rho_i = pi(y_i) / pi_old(y_i)`. Clipped terms, including the kinks at
/// `1 +- eps`, contribute no gradient.
pub fn grpo_clip(
    params: &PolicyParams,
    behavior: &Dist,
    g: &Group,
    adv: &AdvantageVec,
    epsilon: f64,
) -> Result<ObjectiveEval> {
    ensure_positive("epsilon", epsilon)?;
    check_sample(params, g, Some(adv))?;
    let lp = params.log_probs();
    let probs: Vec<f64> = lp.iter().map(|l| exp(*l)).collect();
    let inv_g = 1.0 / g.len() as f64;
    let (lo, hi) = (1.0 - epsilon, 1.0 + epsilon);
    let mut value = 0.0;
    let mut coef = vec![0.0; params.len()];
    for (&y, &a) in g.indices().iter().zip(&adv.values) {
        let ratio = exp(lp[y] - behavior_log_prob(behavior, y)?);
        let clipped = ratio.clamp(lo, hi);
        value += (ratio * a).min(clipped * a);
        let active = if a > 0.0 {
            ratio < hi
        } else if a < 0.0 {
            ratio > lo
        } else {
            false
        };
        if active {
            coef[y] += a * ratio * inv_g;
        }
    }
    Ok(ObjectiveEval {
        value: value * inv_g,
        grad: softmax_chain(&coef, &probs),
        objective: ObjectiveKind::GrpoClip,
    })
}

fn check_population(params: &PolicyParams, behavior: &Dist, per_outcome: &[f64]) -> Result<()> {
    if params.len() != behavior.len() {
        return Err(Error::LengthMismatch { expected: behavior.len(), found: params.len() });
    }
    if per_outcome.len() != behavior.len() {
        return Err(Error::LengthMismatch { expected: behavior.len(), found: per_outcome.len() });
    }
    behavior.require_positive()
}

/// Population regularized log-likelihood
/// `sum_y pi_old(y) [A(y) log pi(y) - (beta/2) (log pi(y)/pi_old(y))^2]`.
pub fn expected_regularized_mle(
    params: &PolicyParams,
    behavior: &Dist,
    advantages: &[f64],
    beta: f64,
) -> Result<ObjectiveEval> {
    ensure_positive("beta", beta)?;
    check_population(params, behavior, advantages)?;
    let lp = params.log_probs();
    let probs: Vec<f64> = lp.iter().map(|l| exp(*l)).collect();
    let mut value = 0.0;
    let mut coef = vec![0.0; params.len()];
    for (y, (b, a)) in behavior.probs().iter().zip(advantages).enumerate() {
        let ratio = lp[y] - ln(*b);
        value += b * (a * lp[y] - 0.5 * beta * ratio * ratio);
        coef[y] = b * (a - beta * ratio);
    }
    Ok(ObjectiveEval {
        value,
        grad: softmax_chain(&coef, &probs),
        objective: ObjectiveKind::RegularizedMle,
    })
}

/// Hessian of [`expected_regularized_mle`] with respect to the logits.
pub fn expected_regularized_mle_hessian(
    params: &PolicyParams,
    behavior: &Dist,
    advantages: &[f64],
    beta: f64,
) -> Result<Vec<Vec<f64>>> {
    ensure_positive("beta", beta)?;
    check_population(params, behavior, advantages)?;
    let lp = params.log_probs();
    let pi: Vec<f64> = lp.iter().map(|l| exp(*l)).collect();
    let b = behavior.probs();
    let s: f64 = (0..pi.len()).map(|y| b[y] * (advantages[y] - beta * (lp[y] - ln(b[y])))).sum();
    let n = pi.len();
    let mut h = vec![vec![0.0; n]; n];
    for k in 0..n {
        for j in 0..n {
            let delta = if k == j { 1.0 } else { 0.0 };
            h[k][j] = -beta * b[k] * (delta - pi[j]) - pi[k] * (delta - pi[j]) * s
                + beta * pi[k] * (b[j] - pi[j]);
        }
    }
    Ok(h)
}

/// Population weighted likelihood `sum_y pi_old(y) u(y) log pi(y)`.
pub fn expected_weighted_mle(
    params: &PolicyParams,
    behavior: &Dist,
    weights: &[f64],
) -> Result<ObjectiveEval> {
    check_population(params, behavior, weights)?;
    let lp = params.log_probs();
    let probs: Vec<f64> = lp.iter().map(|l| exp(*l)).collect();
    let coef: Vec<f64> = behavior.probs().iter().zip(weights).map(|(b, u)| b * u).collect();
    let value = coef.iter().zip(&lp).map(|(c, l)| c * l).sum();
    Ok(ObjectiveEval {
        value,
        grad: softmax_chain(&coef, &probs),
        objective: ObjectiveKind::WeightedMle,
    })
}

/// Hessian of [`expected_weighted_mle`]; negative semidefinite.
pub fn expected_weighted_mle_hessian(
    params: &PolicyParams,
    behavior: &Dist,
    weights: &[f64],
) -> Result<Vec<Vec<f64>>> {
    check_population(params, behavior, weights)?;
    let pi = params.probs();
    let total: f64 = behavior.probs().iter().zip(weights).map(|(b, u)| b * u).sum();
    let n = pi.len();
    let mut h = vec![vec![0.0; n]; n];
    for k in 0..n {
        for j in 0..n {
            let delta = if k == j { 1.0 } else { 0.0 };
            h[k][j] = -total * pi[k] * (delta - pi[j]);
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AscentResult {
    pub params: PolicyParams,
    pub value: f64,
    /// Infinity norm of the final gradient.
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Cholesky solve of `a x = rhs` for symmetric positive definite `a`.
fn cholesky_solve(a: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rhs.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = sqrt(s);
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (rhs[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    Some(x)
}

/// Damped Newton ascent over softmax logits.
///
/// `eval` returns `(value, gradient, hessian)` at a logit vector. The last
/// logit is held fixed, which removes the softmax translation direction.
/// Steps fall back to the gradient when the reduced Hessian is not negative
/// definite, and are backtracked until the value increases or the gradient
/// shrinks. Iteration continues a few steps past `tol` to polish.
pub fn newton_ascent<F>(init: PolicyParams, tol: f64, max_iter: usize, eval: F) -> AscentResult
where
    F: Fn(&PolicyParams) -> (f64, Vec<f64>, Vec<Vec<f64>>),
{
    let n = init.len();
    let mut params = init;
    let (mut value, mut grad, mut hess) = eval(&params);
    let mut iterations = 0;
    let mut polish = 0;
    while iterations < max_iter {
        let gn = inf_norm(&grad);
        if gn <= tol {
            polish += 1;
            if polish > 3 || n < 2 {
                break;
            }
        }
        iterations += 1;
        let m = n - 1;
        let neg_h: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| -hess[i][j]).collect()).collect();
        let g_r = &grad[..m];
        let mut dir = cholesky_solve(&neg_h, g_r).unwrap_or_else(|| {
            let scale = (0..m).map(|i| neg_h[i][i].abs()).fold(1e-12, f64::max);
            g_r.iter().map(|g| g / scale).collect()
        });
        let slope: f64 = dir.iter().zip(g_r).map(|(d, g)| d * g).sum();
        if !(slope > 0.0) {
            dir = g_r.to_vec();
        }
        let slope: f64 = dir.iter().zip(g_r).map(|(d, g)| d * g).sum();
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = params.clone();
            for (l, d) in trial.logits.iter_mut().zip(&dir) {
                *l += t * d;
            }
            let (v, g, h) = eval(&trial);
            let improves = v >= value + 1e-4 * t * slope;
            let shrinks = inf_norm(&g) < gn && v >= value - 1e-12 * value.abs().max(1.0);
            if v.is_finite() && (improves || shrinks) {
                params = trial;
                value = v;
                grad = g;
                hess = h;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let grad_norm = inf_norm(&grad);
    AscentResult { params, value, grad_norm, iterations, converged: grad_norm <= tol }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advantage::{centered_advantage, shifted_mean_advantage, AdvantageMethod};
    use proptest::prelude::*;

    fn fd_grad(f: impl Fn(&PolicyParams) -> f64, p: &PolicyParams, h: f64) -> Vec<f64> {
        (0..p.len())
            .map(|k| {
                let mut a = p.clone();
                let mut b = p.clone();
                a.logits[k] += h;
                b.logits[k] -= h;
                (f(&a) - f(&b)) / (2.0 * h)
            })
            .collect()
    }

    fn assert_fd(an: &[f64], fd: &[f64]) {
        let scale = inf_norm(an).max(1.0);
        for (a, f) in an.iter().zip(fd) {
            assert!((a - f).abs() <= 1e-5 * scale, "{an:?} vs {fd:?}");
        }
    }

    fn setup() -> (PolicyParams, Dist, Group, AdvantageVec) {
        let params = PolicyParams::new(vec![0.3, -0.2, 0.9, 0.0]);
        let behavior = Dist::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let g = Group::new(vec![0, 2, 2, 3, 1], vec![0.9, 0.1, 0.4, 0.5, 1.0], 0).unwrap();
        let adv = shifted_mean_advantage(&g, 0.2).unwrap();
        (params, behavior, g, adv)
    }

    #[test]
    fn regularized_at_behavior() {
        let (_, behavior, g, adv) = setup();
        let params = PolicyParams::from_dist(&behavior);
        let e = regularized_mle(&params, &behavior, &g, &adv, 0.2).unwrap();
        let expected: f64 = g
            .indices()
            .iter()
            .zip(&adv.values)
            .map(|(y, a)| a * behavior.probs()[*y].ln())
            .sum::<f64>()
            / g.len() as f64;
        assert!((e.value - expected).abs() < 1e-14);

        let zero = AdvantageVec { values: vec![0.0; g.len()], ..adv.clone() };
        let e = regularized_mle(&params, &behavior, &g, &zero, 0.2).unwrap();
        assert!(e.grad.iter().all(|x| x.abs() < 1e-15));
        let r = regression_loss(&params, &behavior, &g, &zero, 0.2).unwrap();
        assert!(r.value.abs() < 1e-28);
        let r = regression_loss(&params, &behavior, &g, &adv, 0.2).unwrap();
        let mean_sq = adv.values.iter().map(|a| a * a).sum::<f64>() / g.len() as f64;
        assert!((r.value - mean_sq).abs() < 1e-14);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (params, behavior, g, adv) = setup();
        let beta = 0.2;
        let e = regularized_mle(&params, &behavior, &g, &adv, beta).unwrap();
        let fd = fd_grad(|p| regularized_mle(p, &behavior, &g, &adv, beta).unwrap().value, &params, 1e-5);
        assert_fd(&e.grad, &fd);
        let e = regression_loss(&params, &behavior, &g, &adv, beta).unwrap();
        let fd = fd_grad(|p| regression_loss(p, &behavior, &g, &adv, beta).unwrap().value, &params, 1e-5);
        assert_fd(&e.grad, &fd);
        let e = weighted_mle(&params, &g, 0.5).unwrap();
        let fd = fd_grad(|p| weighted_mle(p, &g, 0.5).unwrap().value, &params, 1e-5);
        assert_fd(&e.grad, &fd);
        let e = grpo_clip(&params, &behavior, &g, &adv, 0.2).unwrap();
        let fd = fd_grad(|p| grpo_clip(p, &behavior, &g, &adv, 0.2).unwrap().value, &params, 1e-5);
        assert_fd(&e.grad, &fd);
    }

    #[test]
    fn weighted_mle_constant_rewards_is_plain_mle() {
        let params = PolicyParams::new(vec![0.1, 0.5, -1.0]);
        let g = Group::new(vec![0, 1, 1], vec![0.4; 3], 0).unwrap();
        let e = weighted_mle(&params, &g, 0.3).unwrap();
        let lp = params.log_probs();
        assert!((e.value - (lp[0] + 2.0 * lp[1]) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn grpo_clip_examples() {
        let behavior = Dist::new(vec![0.4, 0.4, 0.2]).unwrap();
        let g = Group::new(vec![0, 1], vec![1.0, 0.0], 0).unwrap();
        let adv = AdvantageVec {
            values: vec![1.0, -1.0],
            method: AdvantageMethod::GrpoNorm,
            beta: None,
            beta2: None,
        };
        // pi = (0.6, 0.36, 0.04) gives ratios (1.5, 0.9).
        let params = PolicyParams::from_dist(&Dist::new(vec![0.6, 0.36, 0.04]).unwrap());
        let e = grpo_clip(&params, &behavior, &g, &adv, 0.2).unwrap();
        assert!((e.value - 0.15).abs() < 1e-12);
        // The first member is clipped, so only the second contributes:
        // coefficient -1 * 0.9 / 2 on outcome 1.
        let pi = params.probs();
        let expected = softmax_chain(&[0.0, -0.45, 0.0], &pi);
        assert!(e.grad.iter().zip(&expected).all(|(a, b)| (a - b).abs() < 1e-12));

        let at_behavior = PolicyParams::from_dist(&behavior);
        let e = grpo_clip(&at_behavior, &behavior, &g, &adv, 0.2).unwrap();
        assert!(e.value.abs() < 1e-12);
    }

    #[test]
    fn support_violation_is_reported() {
        let behavior = Dist::new(vec![1.0, 0.0]).unwrap();
        let g = Group::new(vec![0, 1], vec![1.0, 0.0], 0).unwrap();
        let adv = centered_advantage(&g);
        let params = PolicyParams::uniform(2);
        assert_eq!(
            regularized_mle(&params, &behavior, &g, &adv, 0.1),
            Err(Error::SupportViolation { index: 1 })
        );
        let bad = Group::new(vec![0, 5], vec![1.0, 0.0], 0).unwrap();
        assert!(matches!(
            regression_loss(&params, &Dist::uniform(2).unwrap(), &bad, &adv, 0.1),
            Err(Error::IndexOutOfRange { index: 5, len: 2 })
        ));
    }

    #[test]
    fn expected_gradients_and_hessians() {
        let behavior = Dist::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let adv = [0.5, -0.3, 0.1, 0.2];
        let params = PolicyParams::new(vec![0.2, -0.4, 0.7, 0.1]);
        let beta = 0.3;
        let f = |p: &PolicyParams| expected_regularized_mle(p, &behavior, &adv, beta).unwrap();
        let e = f(&params);
        assert_fd(&e.grad, &fd_grad(|p| f(p).value, &params, 1e-5));
        let h = expected_regularized_mle_hessian(&params, &behavior, &adv, beta).unwrap();
        for k in 0..4 {
            let col = fd_grad(|p| f(p).grad[k], &params, 1e-5);
            assert_fd(&h[k], &col);
        }
        let w = [1.5, 0.2, 0.9, 1.0];
        let f = |p: &PolicyParams| expected_weighted_mle(p, &behavior, &w).unwrap();
        assert_fd(&f(&params).grad, &fd_grad(|p| f(p).value, &params, 1e-5));
        let h = expected_weighted_mle_hessian(&params, &behavior, &w).unwrap();
        for k in 0..4 {
            assert_fd(&h[k], &fd_grad(|p| f(p).grad[k], &params, 1e-5));
        }
    }

    #[test]
    fn newton_recovers_tilted_distribution() {
        let behavior = Dist::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let w = [1.5, 0.2, 0.9, 1.0];
        let res = newton_ascent(PolicyParams::from_dist(&behavior), 1e-12, 200, |p| {
            let e = expected_weighted_mle(p, &behavior, &w).unwrap();
            (e.value, e.grad, expected_weighted_mle_hessian(p, &behavior, &w).unwrap())
        });
        assert!(res.converged);
        let closed = Dist::from_weights(&[0.15, 0.04, 0.27, 0.4]).unwrap();
        let pi = res.params.probs();
        assert!(pi.iter().zip(closed.probs()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    proptest! {
        #[test]
        fn regression_gradient_is_rescaled_mle_gradient(
            logits in proptest::collection::vec(-3.0f64..3.0, 5),
            w in proptest::collection::vec(0.05f64..1.0, 5),
            idx in proptest::collection::vec(0usize..5, 2..8),
            lb in -3.0f64..0.0,
        ) {
            let beta = 10f64.powf(lb);
            let behavior = Dist::from_weights(&w).unwrap();
            let rewards: Vec<f64> = idx.iter().map(|y| *y as f64 / 4.0).collect();
            let g = Group::new(idx, rewards, 0).unwrap();
            let adv = shifted_mean_advantage(&g, beta).unwrap();
            let params = PolicyParams::new(logits);
            let m = regularized_mle(&params, &behavior, &g, &adv, beta).unwrap();
            let r = regression_loss(&params, &behavior, &g, &adv, beta).unwrap();
            for (gr, gm) in r.grad.iter().zip(&m.grad) {
                prop_assert!((gr + 2.0 * beta * gm).abs() <= 1e-12);
            }
            prop_assert!(m.grad.iter().sum::<f64>().abs() <= 1e-12);
        }

        #[test]
        fn translation_invariance(
            logits in proptest::collection::vec(-3.0f64..3.0, 4),
            shift in -50.0f64..50.0,
        ) {
            let (_, behavior, g, adv) = setup();
            let p = PolicyParams::new(logits);
            let q = PolicyParams::new(p.logits.iter().map(|l| l + shift).collect());
            for (a, b) in [
                (regularized_mle(&p, &behavior, &g, &adv, 0.2).unwrap(), regularized_mle(&q, &behavior, &g, &adv, 0.2).unwrap()),
                (regression_loss(&p, &behavior, &g, &adv, 0.2).unwrap(), regression_loss(&q, &behavior, &g, &adv, 0.2).unwrap()),
                (weighted_mle(&p, &g, 0.4).unwrap(), weighted_mle(&q, &g, 0.4).unwrap()),
                (grpo_clip(&p, &behavior, &g, &adv, 0.2).unwrap(), grpo_clip(&q, &behavior, &g, &adv, 0.2).unwrap()),
            ] {
                prop_assert!((a.value - b.value).abs() <= 1e-10);
            }
        }
    }
}
