//! Principal branch of the Lambert W function.
//!
//! [`w0`] evaluates `W0(z)` on `[-1/e, inf)` and [`w0_exp`] evaluates the
//! composite `W0(exp(u))` without forming `exp(u)`, which is what the target
//! solver needs when advantages are divided by a small temperature.

use crate::error::{Error, Result};
use crate::math::{exp, ln, sqrt};

/// `-1/e`, the branch point of `W0`.
pub const BRANCH_POINT: f64 = -0.367_879_441_171_442_33;

/// Arguments this far below the branch point are clamped onto it.
pub const BRANCH_CLAMP: f64 = 1e-15;

/// Hard iteration cap for every refinement loop in this module.
pub const MAX_ITERATIONS: u32 = 64;

/// Below this `u`, `W0(exp(u)) == exp(u)` to double precision.
const UNDERFLOW_ARG: f64 = -700.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WEvalReport {
    pub value: f64,
    /// `|w e^w - z| / max(|z|, 1)`.
    pub residual: f64,
    pub iterations: u32,
}

/// `W0(z)` for `z >= -1/e`.
pub fn w0(z: f64) -> Result<f64> {
    w0_report(z).map(|r| r.value)
}

/// `W0(z)` together with its residual and the iteration count.
pub fn w0_report(z: f64) -> Result<WEvalReport> {
    if z.is_nan() || z < BRANCH_POINT - BRANCH_CLAMP {
        return Err(Error::LambertDomain(z));
    }
    if z == f64::INFINITY {
        return Ok(WEvalReport { value: f64::INFINITY, residual: 0.0, iterations: 0 });
    }
    let (value, iterations) = if z <= BRANCH_POINT {
        (-1.0, 0)
    } else if z == 0.0 {
        (0.0, 0)
    } else if z > core::f64::consts::E {
        // w + ln w = ln z keeps every intermediate finite up to f64::MAX.
        solve_log_form(ln(z))
    } else {
        halley_linear(z)
    };
    Ok(WEvalReport { value, residual: residual(value, z), iterations })
}

/// `W0(exp(u))`, i.e. the positive root of `w + ln w = u`.
pub fn w0_exp(u: f64) -> f64 {
    w0_exp_report(u).0
}

/// `W0(exp(u))` and the number of refinement iterations used.
pub fn w0_exp_report(u: f64) -> (f64, u32) {
    if u.is_nan() {
        return (f64::NAN, 0);
    }
    if u == f64::INFINITY {
        return (f64::INFINITY, 0);
    }
    if u <= UNDERFLOW_ARG {
        return (exp(u), 0);
    }
    if u < 1.0 {
        // exp(u) lies in (0, e) here, representable and inside the linear solver's range.
        return halley_linear(exp(u));
    }
    solve_log_form(u)
}

/// Second derivative of `u -> W0(exp(u))`, equal to `w / (1 + w)^3`.
pub fn w0_exp_second_derivative(u: f64) -> f64 {
    let w = w0_exp(u);
    let d = 1.0 + w;
    w / (d * d * d)
}

/// First derivative of `u -> W0(exp(u))`, equal to `w / (1 + w)`.
pub fn w0_exp_derivative(u: f64) -> f64 {
    let w = w0_exp(u);
    w / (1.0 + w)
}

fn residual(w: f64, z: f64) -> f64 {
    if !w.is_finite() {
        return 0.0;
    }
    if w > 700.0 {
        // w e^w overflows long before z does; compare in log form instead,
        // |ln(w e^w) - ln z| approximates the relative residual.
        return (w + ln(w) - ln(z)).abs();
    }
    (w * exp(w) - z).abs() / z.abs().max(1.0)
}

/// Newton on `w + ln w = u` for `u >= 1`.
///
/// The map is concave and increasing in `w`, and the seed `u - ln u` sits at
/// or below the root, so the iterates increase monotonically to it.
fn solve_log_form(u: f64) -> (f64, u32) {
    let mut w = if u > 1.0 { u - ln(u) } else { 1.0 };
    if u == 1.0 {
        return (1.0, 0);
    }
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let f = w + ln(w) - u;
        let step = f * w / (w + 1.0);
        let next = w - step;
        if (next - w).abs() <= 4.0 * f64::EPSILON * next.abs() {
            w = next;
            break;
        }
        w = next;
    }
    (w, iterations)
}

/// Halley's iteration on `w e^w - z` for `-1/e < z <= e`.
fn halley_linear(z: f64) -> (f64, u32) {
    if z.abs() < 1e-8 {
        // Taylor series, truncation error below z^5.
        let z2 = z * z;
        return (z - z2 + 1.5 * z2 * z - (8.0 / 3.0) * z2 * z2, 0);
    }
    let mut w = if z < -0.32 {
        // Series in p = sqrt(2(ez + 1)) about the branch point.
        let p = sqrt((2.0 * (core::f64::consts::E * z + 1.0)).max(0.0));
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else {
        // Winitzki's approximation.
        let l = crate::math::ln_1p(z);
        l * (1.0 - ln(1.0 + l) / (2.0 + l))
    };
    let mut iterations = 0;
    let mut last_step = f64::INFINITY;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let ew = exp(w);
        let f = w * ew - z;
        let wp1 = w + 1.0;
        if wp1 == 0.0 || f == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let next = w - f / denom;
        let next = next.max(-1.0);
        let step = (next - w).abs();
        // Near the branch point f is dominated by rounding, so a step that
        // fails to shrink means the iterate is already at the noise floor.
        if step <= 4.0 * f64::EPSILON * next.abs().max(f64::MIN_POSITIVE) || step >= last_step {
            w = next;
            break;
        }
        last_step = step;
        w = next;
    }
    (w, iterations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent oracle: bisection on `w e^w = z` over a bracket.
    fn bisect_w(z: f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid * mid.exp() < z {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn trivial_points() {
        assert_eq!(w0(0.0).unwrap(), 0.0);
        assert!((w0(core::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(w0_exp(1.0), 1.0);
        assert_eq!(w0(BRANCH_POINT).unwrap(), -1.0);
    }

    #[test]
    fn omega_constant_matches_bisection() {
        let oracle = bisect_w(1.0, 0.0, 1.0);
        assert!((oracle - 0.567_143).abs() < 1e-6);
        assert!((w0(1.0).unwrap() - oracle).abs() < 1e-14);
        assert!((w0_exp(0.0) - oracle).abs() < 1e-14);
    }

    #[test]
    fn large_exponent_matches_newton_oracle() {
        // Plain Newton on w + ln w = 1000 seeded at u - ln u, iterated to a fixed point.
        let u = 1000.0_f64;
        let mut w = u - u.ln();
        for _ in 0..50 {
            w -= (w + w.ln() - u) / (1.0 + 1.0 / w);
        }
        assert!((w - 993.0991).abs() < 1e-3);
        assert!((w0_exp(u) - w).abs() < 1e-10);
    }

    #[test]
    fn second_derivative_values() {
        assert!((w0_exp_second_derivative(1.0) - 0.125).abs() < 1e-15);
        let omega = bisect_w(1.0, 0.0, 1.0);
        let expected = omega / (1.0 + omega).powi(3);
        assert!((expected - 0.147_355_6).abs() < 1e-6);
        assert!((w0_exp_second_derivative(0.0) - expected).abs() < 1e-12);
    }

    #[test]
    fn domain_error_below_branch_point() {
        assert_eq!(w0(-0.5), Err(Error::LambertDomain(-0.5)));
        assert!(w0(BRANCH_POINT - 1e-16).is_ok());
        assert!(w0(BRANCH_POINT - 1e-14).is_err());
        assert!(w0(f64::NAN).is_err());
    }

    #[test]
    fn near_branch_point() {
        let z = BRANCH_POINT + 1e-9;
        let r = w0_report(z).unwrap();
        assert!(r.value > -1.0 && r.value < -0.99);
        assert!(r.residual <= 1e-12, "{r:?}");
    }

    #[test]
    fn tiny_arguments_use_series() {
        for &z in &[1e-300, -1e-12, 3e-9, -5e-9] {
            let w = w0(z).unwrap();
            assert!(((w * w.exp() - z) / z).abs() < 1e-15, "z={z}");
        }
    }

    #[test]
    fn huge_arguments() {
        let r = w0_report(1e300).unwrap();
        assert!(r.residual <= 1e-12, "{r:?}");
        let r = w0_report(f64::MAX).unwrap();
        assert!(r.value.is_finite());
        assert!(w0_exp(1e6) > 1e6 - 14.0);
    }

    #[test]
    fn iteration_counts_stay_small() {
        let mut worst = 0;
        for i in 0..2000 {
            let t = -9.0 + 309.0 * i as f64 / 1999.0;
            let z = BRANCH_POINT + 10f64.powf(t);
            worst = worst.max(w0_report(z).unwrap().iterations);
        }
        for i in 0..2000 {
            let u = -50.0 + 1e4 * i as f64 / 1999.0;
            worst = worst.max(w0_exp_report(u).1);
        }
        assert!(worst <= 10, "worst iteration count {worst}");
    }

    #[test]
    fn underflow_region_is_linear() {
        assert_eq!(w0_exp(-800.0), (-800.0f64).exp());
        assert_eq!(w0_exp(-700.0), (-700.0f64).exp());
        let u = -699.0;
        let w = w0_exp(u);
        assert!((w + w.ln() - u).abs() < 1e-10);
    }

    #[test]
    fn second_derivative_matches_finite_difference() {
        let h = 1e-3;
        for i in 0..200 {
            let u = -20.0 + 0.2 * i as f64;
            let fd = (w0_exp(u + h) - 2.0 * w0_exp(u) + w0_exp(u - h)) / (h * h);
            let an = w0_exp_second_derivative(u);
            assert!(((fd - an) / an).abs() < 1e-5, "u={u} fd={fd} an={an}");
        }
    }

    proptest! {
        #[test]
        fn w0_bounded_by_argument(z in 0.0f64..1e12) {
            prop_assert!(w0(z).unwrap() <= z);
        }

        #[test]
        fn w0_is_monotone(a in -0.3678f64..50.0, b in -0.3678f64..50.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(w0(lo).unwrap() <= w0(hi).unwrap());
        }

        #[test]
        fn w0_exp_solves_log_equation(u in -50.0f64..1e6) {
            let w = w0_exp(u);
            prop_assert!((w + w.ln() - u).abs() <= 1e-10);
        }

        #[test]
        fn w0_exp_agrees_with_linear_domain(u in -700.0f64..700.0) {
            let a = w0_exp(u);
            let b = w0(u.exp()).unwrap();
            prop_assert!((a - b).abs() <= 1e-13 * a.max(1e-300).max(b), "{a} vs {b}");
        }

        #[test]
        fn w0_exp_monotone_and_convex(a in -50.0f64..500.0, d1 in 1e-3f64..5.0, d2 in 1e-3f64..5.0) {
            let (x0, x1, x2) = (a, a + d1, a + d1 + d2);
            let (f0, f1, f2) = (w0_exp(x0), w0_exp(x1), w0_exp(x2));
            prop_assert!(f0 < f1 && f1 < f2);
            // Chord slopes increase for a convex function.
            let s01 = (f1 - f0) / d1;
            let s12 = (f2 - f1) / d2;
            prop_assert!(s12 >= s01 - 1e-12 * s12.abs().max(1.0));
        }

        #[test]
        fn asymptotic_log_growth(u in 100.0f64..1e6) {
            let w = w0_exp(u);
            prop_assert!((w - (u - u.ln())).abs() <= 2.0 * u.ln() / u);
        }
    }
}
