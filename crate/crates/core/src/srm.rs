//! Sample-ratio-mismatch guardrail.
//!
//! P-values live in the log10 channel: a badly broken split can have a
//! p-value hundreds of orders of magnitude below `f64::MIN_POSITIVE`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{log10_two_sided_normal_p, log_binomial_sf, Log10Probability};
use crate::scalar::{in_open_unit_interval, Scalar};

/// Default failure threshold on the two-sided p-value.
pub const DEFAULT_THRESHOLD: f64 = 1e-4;

/// Largest total for which the exact binomial p-value is the headline value.
pub const EXACT_MAX_TOTAL: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SrmVerdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SrmMethod {
    ExactBinomial,
    Normal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrmResult<T> {
    pub n_control: u64,
    pub n_treatment: u64,
    /// `(n_control - N q) / sqrt(N q (1 - q))`.
    pub z: T,
    /// Headline two-sided p-value (see `method`).
    pub log10_p_two_sided: Log10Probability<T>,
    pub log10_p_exact: Log10Probability<T>,
    pub log10_p_normal: Log10Probability<T>,
    pub method: SrmMethod,
    pub observed_share: T,
    pub expected_share: T,
    pub threshold: T,
    pub verdict: SrmVerdict,
}

/// Two-sided exact binomial p-value for `k` control users out of `total`:
/// twice the smaller tail, capped at 1.
fn log10_exact_two_sided<T: Scalar>(total: u64, k: u64, q: T) -> Result<Log10Probability<T>> {
    let upper = log_binomial_sf(total, k, q)?;
    // P[X <= k] = P[total - X >= total - k], with total - X ~ Bin(total, 1 - q).
    let lower = log_binomial_sf(total, total - k, T::one() - q)?;
    let smaller = if upper.get() < lower.get() { upper } else { lower };
    Ok(smaller.doubled())
}

/// Checks observed arm sizes against the designed control share.
pub fn srm_check<T: Scalar>(
    n_control: u64,
    n_treatment: u64,
    expected_control_share: T,
    threshold: T,
) -> Result<SrmResult<T>> {
    if !in_open_unit_interval(expected_control_share) {
        return Err(Error::domain(format!(
            "expected control share must be in (0, 1), got {expected_control_share}"
        )));
    }
    if !in_open_unit_interval(threshold) {
        return Err(Error::domain(format!("SRM threshold must be in (0, 1), got {threshold}")));
    }
    let total = n_control
        .checked_add(n_treatment)
        .ok_or_else(|| Error::domain("arm sizes overflow"))?;
    if total == 0 {
        return Err(Error::domain("SRM check needs at least one user"));
    }
    let q = expected_control_share;
    let nf = T::from_count(total);
    let z = (T::from_count(n_control) - nf * q) / (nf * q * (T::one() - q)).sqrt();

    let log10_p_exact = log10_exact_two_sided(total, n_control, q)?;
    let log10_p_normal = log10_two_sided_normal_p(z)?;
    let (method, headline) = if total <= EXACT_MAX_TOTAL {
        (SrmMethod::ExactBinomial, log10_p_exact)
    } else {
        (SrmMethod::Normal, log10_p_normal)
    };
    let verdict = if headline.get() < threshold.log10() { SrmVerdict::Fail } else { SrmVerdict::Pass };

    Ok(SrmResult {
        n_control,
        n_treatment,
        z,
        log10_p_two_sided: headline,
        log10_p_exact,
        log10_p_normal,
        method,
        observed_share: T::from_count(n_control) / nf,
        expected_share: q,
        threshold,
        verdict,
    })
}
