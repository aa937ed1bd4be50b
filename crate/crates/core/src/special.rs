//! Log-gamma and Γ-ratio helpers.
//!
//! Every moment and bound constant in this crate is a ratio of Gamma
//! functions whose arguments scale like `d/p`. Evaluating them in log space
//! keeps `d = 10⁶` or `p = 10⁶` finite.

use crate::error::{Error, Result};

/// Natural log of Γ(x) for x > 0.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::Domain(format!("log_gamma requires finite x > 0, got {x}")));
    }
    Ok(lgamma(x))
}

/// Unchecked ln Γ(x); callers guarantee x > 0.
#[inline]
pub(crate) fn lgamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    libm::lgamma(x)
}

/// ln of Σ over the numerator arguments minus Σ over the denominator
/// arguments of ln Γ, i.e. ln(∏Γ(num) / ∏Γ(den)).
pub(crate) fn ln_gamma_ratio(num: &[f64], den: &[f64]) -> f64 {
    num.iter().map(|&a| lgamma(a)).sum::<f64>() - den.iter().map(|&a| lgamma(a)).sum::<f64>()
}
