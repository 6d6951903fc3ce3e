//! The Lambert-tempered target policy.
//!
//! For a fixed advantage `A` the population regularized log-likelihood has
//! stationary density ratios solving `ln rho + tau rho = A / beta`, with the
//! multiplier `tau` fixed by `E_old[rho] = 1`. For `tau > 0` the solution is
//! `rho = W0(tau exp(A / beta)) / tau`.
//!
//! The sign of `tau` follows from the exponential mass
//! `Z_exp = E_old[exp(A / beta)]`: `Z_exp > 1` gives a pessimistic target,
//! `Z_exp = 1` the plain exponential tilt, and `Z_exp < 1` the unstable
//! regime, where a principal-branch solution may not exist at all.
//!
//! Internally the multiplier is carried as `s = ln |tau|` and every ratio is
//! evaluated as `rho = exp(a - W0(tau e^a))`, so nothing overflows at
//! `beta = 1e-3` and very small `|tau|` does not underflow to zero.

use alloc::vec::Vec;
use core::fmt;

use crate::dist::Dist;
use crate::error::{ensure_positive, Error, Result};
use crate::lambertw::{w0, w0_exp};
use crate::math::{exp, exp_m1, ln, weighted_log_sum_exp};

/// `|Z_exp - 1|` at or below this is the exponential boundary.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;

/// `|1 + tau rho|` below this marks an outcome as near-singular.
pub const NEAR_SINGULAR: f64 = 1e-6;

const MAX_BRACKET_STEPS: usize = 2048;
const MAX_BISECTIONS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Pessimistic,
    Boundary,
    Unstable,
    NoSolution,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Pessimistic => "pessimistic",
            Regime::Boundary => "boundary",
            Regime::Unstable => "unstable",
            Regime::NoSolution => "no_solution",
        }
    }

    /// Orders regimes from most to least conservative.
    pub fn severity(self) -> u8 {
        match self {
            Regime::Pessimistic => 0,
            Regime::Boundary => 1,
            Regime::Unstable => 2,
            Regime::NoSolution => 3,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `Z_exp` in log form, plus its linear value when representable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpMass {
    pub ln_value: f64,
    /// `exp(ln_value)`; `inf` when it overflows.
    pub value: f64,
}

impl ExpMass {
    /// `Z_exp - 1`, accurate near the boundary.
    pub fn gap(&self) -> f64 {
        exp_m1(self.ln_value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambertTarget {
    /// The normalization multiplier; `0` on the boundary.
    pub tau: f64,
    /// `ln |tau|`, `-inf` on the boundary.
    pub log_abs_tau: f64,
    pub rho: Vec<f64>,
    pub regime: Regime,
    pub z_exp: ExpMass,
    /// `|E_old[rho] - 1|`.
    pub residual: f64,
    /// `A / beta` per outcome.
    pub scaled_advantages: Vec<f64>,
}

impl LambertTarget {
    fn sign(&self) -> f64 {
        match self.regime {
            Regime::Pessimistic => 1.0,
            Regime::Unstable => -1.0,
            _ => 0.0,
        }
    }

    /// `tau * rho(y)` computed in log form.
    pub fn tau_rho(&self, y: usize) -> f64 {
        let s = self.sign();
        if s == 0.0 || self.rho[y] == 0.0 {
            return 0.0;
        }
        s * exp(self.log_abs_tau + ln(self.rho[y]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sensitivity {
    /// `d rho / d(A / beta) = rho / (1 + tau rho)`.
    pub value: f64,
    pub near_singular: bool,
}

fn scaled(advantages: &[f64], behavior: &Dist, beta: f64) -> Result<Vec<f64>> {
    ensure_positive("beta", beta)?;
    if advantages.len() != behavior.len() {
        return Err(Error::LengthMismatch { expected: behavior.len(), found: advantages.len() });
    }
    behavior.require_positive()?;
    Ok(advantages.iter().map(|a| a / beta).collect())
}

/// `Z_exp = sum_y pi_old(y) exp(A(y) / beta)`.
pub fn z_exp(advantages: &[f64], behavior: &Dist, beta: f64) -> Result<ExpMass> {
    let a = scaled(advantages, behavior, beta)?;
    Ok(exp_mass(&a, behavior))
}

fn exp_mass(a: &[f64], behavior: &Dist) -> ExpMass {
    let ln_value = weighted_log_sum_exp(behavior.probs(), a);
    ExpMass { ln_value, value: exp(ln_value) }
}

/// Positive multiplier `tau = exp(s)`.
///
/// Uses `W/tau = exp(a - W)`, which stays monotone in `s` after rounding.
fn rho_positive(a: f64, s: f64) -> f64 {
    exp(a - w0_exp(s + a))
}

/// Negative multiplier `tau = -exp(s)`; `None` past the branch point.
fn rho_negative(a: f64, s: f64) -> Option<f64> {
    let z = -exp(s + a);
    let w = w0(z).ok()?;
    Some(exp(a - w))
}

fn mass_positive(a: &[f64], behavior: &Dist, s: f64) -> f64 {
    behavior.probs().iter().zip(a).map(|(p, ai)| p * rho_positive(*ai, s)).sum()
}

fn mass_negative(a: &[f64], behavior: &Dist, s: f64) -> Option<f64> {
    let mut m = 0.0;
    for (p, ai) in behavior.probs().iter().zip(a) {
        m += p * rho_negative(*ai, s)?;
    }
    Some(m)
}

/// Per-outcome stationary ratio at a fixed multiplier; `None` marks an
/// outcome with no real principal-branch solution (`tau < 0` only).
pub fn rho_at_tau(
    advantages: &[f64],
    behavior: &Dist,
    beta: f64,
    tau: f64,
) -> Result<Vec<Option<f64>>> {
    let a = scaled(advantages, behavior, beta)?;
    let out = if tau > 0.0 {
        let s = ln(tau);
        a.iter().map(|ai| Some(rho_positive(*ai, s))).collect()
    } else if tau < 0.0 {
        let s = ln(-tau);
        a.iter().map(|ai| rho_negative(*ai, s)).collect()
    } else {
        a.iter().map(|ai| Some(exp(*ai))).collect()
    };
    Ok(out)
}

/// The Lambert mass `M_A(tau) = E_old[W0(tau exp(A / beta)) / tau]` for `tau > 0`.
pub fn lambert_mass(advantages: &[f64], behavior: &Dist, beta: f64, tau: f64) -> Result<f64> {
    ensure_positive("tau", tau)?;
    let a = scaled(advantages, behavior, beta)?;
    Ok(mass_positive(&a, behavior, ln(tau)))
}

/// Bisection for a root of a monotone `f` on `[lo, hi]` with `f(lo)` and
/// `f(hi)` of opposite sign. Returns the endpoint with the smaller `|f|`.
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut f_lo = f(lo);
    let mut f_hi = f(hi);
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
    if f_lo.abs() <= f_hi.abs() {
        lo
    } else {
        hi
    }
}

/// Solves `E_old[rho] = 1` for the multiplier and classifies the regime.
pub fn solve_tau(advantages: &[f64], behavior: &Dist, beta: f64) -> Result<LambertTarget> {
    let a = scaled(advantages, behavior, beta)?;
    let z = exp_mass(&a, behavior);
    let gap = z.gap();
    let probs = behavior.probs();
    let finish = |regime: Regime, s: f64, rho: Vec<f64>| {
        let m: f64 = probs.iter().zip(&rho).map(|(p, r)| p * r).sum();
        let tau = match regime {
            Regime::Pessimistic => exp(s),
            Regime::Unstable => -exp(s),
            _ => 0.0,
        };
        LambertTarget {
            tau,
            log_abs_tau: s,
            rho,
            regime,
            z_exp: z,
            residual: (m - 1.0).abs(),
            scaled_advantages: a.clone(),
        }
    };

    if gap.abs() <= BOUNDARY_TOLERANCE {
        let rho = a.iter().map(|ai| exp(*ai)).collect();
        return Ok(finish(Regime::Boundary, f64::NEG_INFINITY, rho));
    }

    if gap > 0.0 {
        // M is strictly decreasing in s = ln tau, from Z_exp > 1 down to 0.
        let f = |s: f64| mass_positive(&a, behavior, s) - 1.0;
        let ln2 = core::f64::consts::LN_2;
        let (mut lo, mut hi) = (0.0, 0.0);
        if f(0.0) > 0.0 {
            let mut found = false;
            for _ in 0..MAX_BRACKET_STEPS {
                hi += ln2;
                if f(hi) <= 0.0 {
                    found = true;
                    break;
                }
                lo = hi;
            }
            if !found {
                return Ok(no_solution(z, a));
            }
        } else {
            let mut step = 1.0;
            let mut found = false;
            for _ in 0..MAX_BRACKET_STEPS {
                lo = hi - step;
                if f(lo) > 0.0 {
                    found = true;
                    break;
                }
                hi = lo;
                step *= 2.0;
            }
            if !found {
                return Ok(no_solution(z, a));
            }
        }
        let s = bisect(lo, hi, f);
        let rho = a.iter().map(|ai| rho_positive(*ai, s)).collect();
        return Ok(finish(Regime::Pessimistic, s, rho));
    }

    // Z_exp < 1: M increases with |tau| from Z_exp up to its value where the
    // largest advantage reaches the branch point.
    let a_max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s_max = -1.0 - a_max;
    let Some(m_max) = mass_negative(&a, behavior, s_max) else {
        return Ok(no_solution(z, a));
    };
    if m_max < 1.0 {
        return Ok(no_solution(z, a));
    }
    let f = |s: f64| mass_negative(&a, behavior, s).map_or(f64::INFINITY, |m| m - 1.0);
    let mut lo = s_max;
    let mut step = 1.0;
    let mut found = false;
    for _ in 0..MAX_BRACKET_STEPS {
        lo -= step;
        if f(lo) < 0.0 {
            found = true;
            break;
        }
        step *= 2.0;
    }
    if !found {
        return Ok(no_solution(z, a));
    }
    let s = bisect(lo, s_max, f);
    let rho: Option<Vec<f64>> = a.iter().map(|ai| rho_negative(*ai, s)).collect();
    match rho {
        Some(rho) => Ok(finish(Regime::Unstable, s, rho)),
        None => Ok(no_solution(z, a)),
    }
}

fn no_solution(z: ExpMass, a: Vec<f64>) -> LambertTarget {
    LambertTarget {
        tau: f64::NAN,
        log_abs_tau: f64::NAN,
        rho: Vec::new(),
        regime: Regime::NoSolution,
        z_exp: z,
        residual: f64::NAN,
        scaled_advantages: a,
    }
}

/// `pi*(y) = pi_old(y) rho(y)`, renormalized to absorb the solver residual.
pub fn target_policy(lt: &LambertTarget, behavior: &Dist) -> Result<Dist> {
    if lt.regime == Regime::NoSolution {
        return Err(Error::NoSolution);
    }
    if lt.rho.len() != behavior.len() {
        return Err(Error::LengthMismatch { expected: behavior.len(), found: lt.rho.len() });
    }
    let w: Vec<f64> = behavior.probs().iter().zip(&lt.rho).map(|(p, r)| p * r).collect();
    let sum: f64 = w.iter().sum();
    if !((sum - 1.0).abs() <= 1e-9) {
        // The boundary band allows Z_exp up to 1e-9 away from one.
        if lt.regime != Regime::Boundary {
            return Err(Error::InvalidDist(alloc::format!("target mass is {sum}")));
        }
    }
    Dist::from_weights(&w)
}

/// `rho / (1 + tau rho)` per outcome, flagging near-singular denominators.
pub fn sensitivity(lt: &LambertTarget) -> Result<Vec<Sensitivity>> {
    if lt.regime == Regime::NoSolution {
        return Err(Error::NoSolution);
    }
    Ok(lt
        .rho
        .iter()
        .enumerate()
        .map(|(y, r)| {
            let d = 1.0 + lt.tau_rho(y);
            Sensitivity { value: r / d, near_singular: d.abs() < NEAR_SINGULAR }
        })
        .collect())
}

/// Largest violation of `ln rho + tau rho = a` over the outcomes.
pub fn stationarity_residual(lt: &LambertTarget) -> f64 {
    lt.rho
        .iter()
        .enumerate()
        .map(|(y, r)| (ln(*r) + lt.tau_rho(y) - lt.scaled_advantages[y]).abs())
        .fold(0.0, f64::max)
}

/// `Z_exp` of `A + shift` from `Z_exp` of `A`: multiplies by `exp(shift / beta)`.
pub fn shifted_exp_mass(z: ExpMass, shift: f64, beta: f64) -> ExpMass {
    let ln_value = z.ln_value + shift / beta;
    ExpMass { ln_value, value: exp(ln_value) }
}
