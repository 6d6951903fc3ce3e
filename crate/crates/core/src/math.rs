//! Float helpers routed through `libm` so results do not depend on the
//! platform's libm and the crate stays `no_std`.

pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

pub(crate) fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

pub(crate) fn exp_m1(x: f64) -> f64 {
    libm::expm1(x)
}

pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// `ln(sum_i exp(x_i))`, max-shifted. Returns `-inf` for an empty slice.
pub(crate) fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.map(|x| exp(x - m)).sum();
    m + ln(s)
}

/// `ln(sum_i w_i exp(x_i))` for nonnegative weights.
pub(crate) fn weighted_log_sum_exp(weights: &[f64], xs: &[f64]) -> f64 {
    let m = weights
        .iter()
        .zip(xs)
        .filter(|(w, _)| **w > 0.0)
        .map(|(_, x)| *x)
        .fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = weights
        .iter()
        .zip(xs)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, x)| w * exp(x - m))
        .sum();
    m + ln(s)
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
