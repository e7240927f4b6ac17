//! Linearization of raw fractional scores into score values.
//!
//! A raw score is first mapped to a percentile with the beta CDF
//! `I_x(alpha, beta)`, and the percentile is then pushed through the quantile
//! function of an exponential distribution truncated to `[0, max]`. The
//! composition is strictly increasing and maps `[0, 1)` onto `[0, max)`.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::domain::{Hyperparams, ModifierTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("{0}")]
    Domain(&'static str),
    #[error("unknown modifier `{0}`")]
    UnknownModifier(String),
    #[error("perfect score must be filtered upstream")]
    PerfectScore,
    #[error("incomplete beta continued fraction did not converge (x={x}, a={a}, b={b})")]
    NoConvergence { x: f64, a: f64, b: f64 },
}

/// A linearized score value `s`, in `[0, truncexp_max]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreValue(f64);

impl ScoreValue {
    /// Wraps an already-linear value. Fails unless finite and non-negative.
    pub fn new(value: f64) -> Result<Self, TransformError> {
        if value.is_finite() && value >= 0.0 {
            Ok(Self(value))
        } else {
            Err(TransformError::Domain("score value must be finite and non-negative"))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Multiplies `raw` by every listed modifier's multiplier and clamps to 1.
pub fn apply_modifiers<S: AsRef<str>>(
    raw: f64,
    modifiers: &[S],
    table: &ModifierTable,
) -> Result<f64, TransformError> {
    if !(0.0..=1.0).contains(&raw) {
        return Err(TransformError::Domain("raw score must be in [0,1]"));
    }
    let mut factor = 1.0;
    for code in modifiers {
        let code = code.as_ref();
        factor *= table
            .multiplier(code)
            .ok_or_else(|| TransformError::UnknownModifier(code.to_string()))?;
    }
    Ok((raw * factor).min(1.0))
}

const CF_MAX_ITER: usize = 500;
const CF_EPS: f64 = 1e-16;
const CF_TINY: f64 = 1e-300;

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Regularized incomplete beta function `I_x(alpha, beta)`, the CDF of the
/// Beta(alpha, beta) distribution at `x`.
pub fn regularized_incomplete_beta(x: f64, alpha: f64, beta: f64) -> Result<f64, TransformError> {
    if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
        return Err(TransformError::Domain("beta shape parameters must be positive"));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(TransformError::Domain("x must be in [0,1]"));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    // The continued fraction converges fast below the mean-ish switch point;
    // above it evaluate the mirrored function.
    let value = if x > (alpha + 1.0) / (alpha + beta + 2.0) {
        1.0 - beta_cf_term(1.0 - x, beta, alpha)?
    } else {
        beta_cf_term(x, alpha, beta)?
    };
    Ok(value.clamp(0.0, 1.0))
}

/// `x^a (1-x)^b / (a B(a,b))` times the continued fraction, evaluated with
/// the modified Lentz method.
fn beta_cf_term(x: f64, a: f64, b: f64) -> Result<f64, TransformError> {
    let ln_front = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b);
    let front = ln_front.exp() / a;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;

    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;

    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let even = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + even * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + even / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let odd = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + odd * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + odd / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;

        if (delta - 1.0).abs() <= CF_EPS {
            return Ok(front * h);
        }
    }
    Err(TransformError::NoConvergence { x, a, b })
}

fn check_truncexp(mean: f64, max: f64) -> Result<(), TransformError> {
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(TransformError::Domain("exponential mean must be positive"));
    }
    if !(max > mean && max.is_finite()) {
        return Err(TransformError::Domain("max must exceed mean"));
    }
    Ok(())
}

/// Quantile of an exponential with scale `mean`, truncated to `[0, max]`:
/// `Q(u) = -mean * ln(1 - u * (1 - exp(-max / mean)))`.
pub fn truncated_exp_quantile(u: f64, mean: f64, max: f64) -> Result<f64, TransformError> {
    check_truncexp(mean, max)?;
    if !(0.0..=1.0).contains(&u) {
        return Err(TransformError::Domain("u must be in [0,1]"));
    }
    if u == 1.0 {
        return Ok(max);
    }
    // 1 - u(1 - e^{-max/mean}) == 1 + u * expm1(-max/mean)
    let q = -mean * (u * (-max / mean).exp_m1()).ln_1p();
    Ok(q.clamp(0.0, max))
}

/// CDF of the truncated exponential; inverse of [`truncated_exp_quantile`].
pub fn truncated_exp_cdf(value: f64, mean: f64, max: f64) -> Result<f64, TransformError> {
    check_truncexp(mean, max)?;
    if value.is_nan() {
        return Err(TransformError::Domain("value must not be NaN"));
    }
    if value <= 0.0 {
        return Ok(0.0);
    }
    if value >= max {
        return Ok(1.0);
    }
    Ok(((-value / mean).exp_m1() / (-max / mean).exp_m1()).clamp(0.0, 1.0))
}

/// Maps a (post-modifier) raw score in `[0, 1)` to its linear score value.
pub fn score_to_value(raw: f64, hp: &Hyperparams) -> Result<ScoreValue, TransformError> {
    if raw == 1.0 {
        return Err(TransformError::PerfectScore);
    }
    if !(0.0..1.0).contains(&raw) {
        return Err(TransformError::Domain("raw score must be in [0,1)"));
    }
    let percentile = regularized_incomplete_beta(raw, hp.beta_alpha, hp.beta_beta)?;
    let value = truncated_exp_quantile(percentile, hp.truncexp_base_mean, hp.truncexp_max)?;
    Ok(ScoreValue(value))
}

/// Inverse of [`score_to_value`] by bisection on the raw score. Used to
/// express synthetic linear values as raw percentages.
pub fn value_to_score(value: f64, hp: &Hyperparams) -> Result<f64, TransformError> {
    let target = truncated_exp_cdf(value, hp.truncexp_base_mean, hp.truncexp_max)?;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if regularized_incomplete_beta(mid, hp.beta_alpha, hp.beta_beta)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
