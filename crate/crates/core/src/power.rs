//! Planning and post-hoc power diagnostics for conversion-rate experiments.
//!
//! Unless stated otherwise the standard error is evaluated under the null at
//! the baseline rate, `sqrt(p (1 - p) (1/n1 + 1/n2))`, and "power" means the
//! probability of a significant *positive* result at the directional level
//! `alpha'` (half the two-sided alpha).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{ln_normal_sf, normal_cdf, std_normal_quantile, two_sided_normal_p, upper_quantile, Probability};
use crate::proportions::TestResult;
use crate::scalar::{in_open_unit_interval, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// `alpha` is split across both tails; the directional level is `alpha / 2`.
    #[default]
    TwoSided,
    /// `alpha` is entirely in the right tail.
    Right,
}

impl Tail {
    /// Type-I error rate in the right tail for a given nominal `alpha`.
    pub fn directional_alpha<T: Scalar>(self, alpha: T) -> T {
        match self {
            Tail::TwoSided => alpha / T::lit(2.0),
            Tail::Right => alpha,
        }
    }
}

/// Which standard error drives the alternative distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceModel {
    /// Baseline-rate variance in both arms, under the null and the alternative.
    #[default]
    Null,
    /// Pooled rate under the alternative sets the critical value; per-arm
    /// rates set the spread of the estimate. Tracks the pooled test exactly
    /// in large samples.
    Alternative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec<T> {
    pub baseline_rate: T,
    /// MDE relative to the baseline rate, e.g. `0.02` for a 2% lift.
    pub relative_mde: T,
    pub alpha: T,
    pub tail: Tail,
    pub n_control: u64,
    pub n_treatment: u64,
    #[serde(default)]
    pub variance: VarianceModel,
}

impl<T: Scalar> DesignSpec<T> {
    pub fn new(baseline_rate: T, relative_mde: T, alpha: T, tail: Tail, n_control: u64, n_treatment: u64) -> Self {
        Self {
            baseline_rate,
            relative_mde,
            alpha,
            tail,
            n_control,
            n_treatment,
            variance: VarianceModel::Null,
        }
    }

    pub fn with_variance(mut self, variance: VarianceModel) -> Self {
        self.variance = variance;
        self
    }

    pub fn validate(&self) -> Result<()> {
        validate_rate(self.baseline_rate)?;
        if !self.relative_mde.is_finite() || self.relative_mde <= -T::one() {
            return Err(Error::domain(format!("relative MDE must be > -1, got {}", self.relative_mde)));
        }
        if !in_open_unit_interval(self.alpha) {
            return Err(Error::domain(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        validate_sizes(self.n_control, self.n_treatment)?;
        if self.variance == VarianceModel::Alternative {
            let alt = self.baseline_rate * (T::one() + self.relative_mde);
            if alt >= T::one() {
                return Err(Error::domain("treatment rate under the alternative is >= 1"));
            }
        }
        Ok(())
    }

    pub fn directional_alpha(&self) -> T {
        self.tail.directional_alpha(self.alpha)
    }

    /// Absolute effect `p * relative_mde`.
    pub fn absolute_mde(&self) -> T {
        self.baseline_rate * self.relative_mde
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerResult<T> {
    pub power: Probability<T>,
    /// Absolute MDE over the null standard error.
    pub snr: T,
    pub se_null: T,
    pub alpha_directional: T,
}

fn validate_rate<T: Scalar>(p: T) -> Result<()> {
    if in_open_unit_interval(p) {
        Ok(())
    } else {
        Err(Error::domain(format!("baseline rate must be in (0, 1), got {p}")))
    }
}

fn validate_sizes(n1: u64, n2: u64) -> Result<()> {
    if n1 == 0 || n2 == 0 {
        Err(Error::domain("both arms need at least one user"))
    } else {
        Ok(())
    }
}

fn validate_directional_alpha<T: Scalar>(a: T) -> Result<()> {
    if in_open_unit_interval(a) {
        Ok(())
    } else {
        Err(Error::domain(format!("directional alpha must be in (0, 1), got {a}")))
    }
}

/// Null standard error of the difference in proportions.
pub fn se_null<T: Scalar>(baseline_rate: T, n_control: u64, n_treatment: u64) -> T {
    let p = baseline_rate;
    (p * (T::one() - p) * (T::from_count(n_control).recip() + T::from_count(n_treatment).recip())).sqrt()
}

/// Lehr's rule `n = 16 sigma^2 / delta^2` per variant (alpha 0.05 two-sided, 80% power).
pub fn lehr_sample_size<T: Scalar>(baseline_rate: T, relative_mde: T) -> Result<u64> {
    validate_rate(baseline_rate)?;
    if relative_mde == T::zero() || !relative_mde.is_finite() {
        return Err(Error::domain(format!("MDE must be finite and nonzero, got {relative_mde}")));
    }
    let delta = baseline_rate * relative_mde;
    let n = T::lit(16.0) * baseline_rate * (T::one() - baseline_rate) / (delta * delta);
    Ok(n.ceil().to_u64().unwrap_or(u64::MAX).max(1))
}

/// General form `2 (z_{1-alpha/2} + z_power)^2 sigma^2 / delta^2` per variant.
///
/// At `alpha = 0.05`, `power = 0.8` the constant is 15.7 rather than Lehr's 16.
pub fn sample_size<T: Scalar>(baseline_rate: T, relative_mde: T, alpha: T, power: T) -> Result<u64> {
    validate_rate(baseline_rate)?;
    if relative_mde == T::zero() || !relative_mde.is_finite() {
        return Err(Error::domain(format!("MDE must be finite and nonzero, got {relative_mde}")));
    }
    if !in_open_unit_interval(alpha) || !in_open_unit_interval(power) {
        return Err(Error::domain("alpha and power must be in (0, 1)"));
    }
    let z = upper_quantile(alpha / T::lit(2.0))? + std_normal_quantile(power)?;
    let delta = baseline_rate * relative_mde;
    let n = T::lit(2.0) * z * z * baseline_rate * (T::one() - baseline_rate) / (delta * delta);
    Ok(n.ceil().to_u64().unwrap_or(u64::MAX).max(1))
}

/// Power of the two-proportion z-test for a design.
pub fn power_two_proportions<T: Scalar>(spec: &DesignSpec<T>) -> Result<PowerResult<T>> {
    spec.validate()?;
    let a = spec.directional_alpha();
    let z_crit = upper_quantile(a)?;
    let se0 = se_null(spec.baseline_rate, spec.n_control, spec.n_treatment);
    let delta = spec.absolute_mde();
    let snr = delta / se0;
    let power = match spec.variance {
        VarianceModel::Null => {
            let right = normal_cdf(snr - z_crit);
            match spec.tail {
                Tail::Right => right,
                Tail::TwoSided => right + normal_cdf(-snr - z_crit),
            }
        }
        VarianceModel::Alternative => {
            let (se_pooled, se_alt) = se_alternative(spec);
            let right = normal_cdf((delta - z_crit * se_pooled) / se_alt);
            match spec.tail {
                Tail::Right => right,
                Tail::TwoSided => right + normal_cdf((-delta - z_crit * se_pooled) / se_alt),
            }
        }
    };
    Ok(PowerResult {
        power: Probability::new(power.min(T::one()))?,
        snr,
        se_null: se0,
        alpha_directional: a,
    })
}

/// Pooled-rate SE and per-arm SE of the difference under the alternative.
fn se_alternative<T: Scalar>(spec: &DesignSpec<T>) -> (T, T) {
    let pc = spec.baseline_rate;
    let pt = pc * (T::one() + spec.relative_mde);
    let (n1, n2) = (T::from_count(spec.n_control), T::from_count(spec.n_treatment));
    let pooled = (pc * n1 + pt * n2) / (n1 + n2);
    let se_pooled = (pooled * (T::one() - pooled) * (n1.recip() + n2.recip())).sqrt();
    (se_pooled, (pc * (T::one() - pc) / n1 + pt * (T::one() - pt) / n2).sqrt())
}

/// Relative MDE detectable with `target_power` in the right tail at level `alpha_directional`.
///
/// Closed form: `snr* = z_{1-alpha'} + Phi^{-1}(target)`, `mde = snr* SE / p`.
pub fn mde_from_power<T: Scalar>(
    baseline_rate: T,
    n_control: u64,
    n_treatment: u64,
    alpha_directional: T,
    target_power: T,
) -> Result<T> {
    validate_rate(baseline_rate)?;
    validate_sizes(n_control, n_treatment)?;
    validate_directional_alpha(alpha_directional)?;
    if !(target_power > alpha_directional && target_power < T::one()) {
        return Err(Error::domain(format!(
            "target power {target_power} must lie in (alpha' = {alpha_directional}, 1)"
        )));
    }
    let snr = upper_quantile(alpha_directional)? + std_normal_quantile(target_power)?;
    Ok(snr * se_null(baseline_rate, n_control, n_treatment) / baseline_rate)
}

/// Relative MDE under [`VarianceModel::Alternative`], found by bisection on the power curve.
pub fn mde_from_power_alternative<T: Scalar>(
    baseline_rate: T,
    n_control: u64,
    n_treatment: u64,
    alpha_directional: T,
    target_power: T,
) -> Result<T> {
    let start = mde_from_power(baseline_rate, n_control, n_treatment, alpha_directional, target_power)?;
    let power_at = |mde: T| -> Result<T> {
        let spec = DesignSpec::new(baseline_rate, mde, alpha_directional, Tail::Right, n_control, n_treatment)
            .with_variance(VarianceModel::Alternative);
        Ok(power_two_proportions(&spec)?.power.get())
    };
    let ceiling = (T::one() - baseline_rate) / baseline_rate;
    let mut lo = T::zero();
    let mut hi = (start * T::lit(2.0)).min(ceiling * T::lit(0.999_999));
    if power_at(hi)? < target_power {
        return Err(Error::domain("target power unreachable before the treatment rate hits 1"));
    }
    for _ in 0..200 {
        let mid = T::lit(0.5) * (lo + hi);
        if power_at(mid)? < target_power {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::epsilon() * hi {
            break;
        }
    }
    Ok(T::lit(0.5) * (lo + hi))
}

/// Absolute effect that would give the design 33% power (small-telescopes `d33`).
pub fn d33<T: Scalar>(baseline_rate: T, n_control: u64, n_treatment: u64, alpha_directional: T) -> Result<T> {
    let rel = mde_from_power(baseline_rate, n_control, n_treatment, alpha_directional, T::one() / T::lit(3.0))?;
    Ok(rel * baseline_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TelescopeVerdict {
    /// The replication's upper bound lies below `d33`.
    OriginalTooSmall,
    Inconclusive,
}

/// Small-telescopes test of a replication against the original study's `d33`.
pub fn small_telescope_test<T: Scalar>(
    replication: &TestResult<T>,
    d33_value: T,
    alpha_one_sided: T,
) -> Result<TelescopeVerdict> {
    validate_directional_alpha(alpha_one_sided)?;
    let upper = replication.abs_diff + upper_quantile(alpha_one_sided)? * replication.se_unpooled;
    Ok(if upper < d33_value {
        TelescopeVerdict::OriginalTooSmall
    } else {
        TelescopeVerdict::Inconclusive
    })
}

/// Expected Type-M exaggeration of a significant positive estimate.
///
/// `E[est | est > z SE] / delta = 1 + phi(a) / (Phi(-a) snr)` with `a = z_{1-alpha'} - snr`.
pub fn exaggeration_ratio<T: Scalar>(snr: T, alpha_directional: T) -> Result<T> {
    if !snr.is_finite() || snr <= T::zero() {
        return Err(Error::domain(format!("signal-to-noise ratio must be positive, got {snr}")));
    }
    validate_directional_alpha(alpha_directional)?;
    let a = upper_quantile(alpha_directional)? - snr;
    let ln_pdf = -T::lit(0.5) * a * a - T::lit(0.5) * T::TAU().ln();
    let mills = (ln_pdf - ln_normal_sf(a)).exp();
    Ok(T::one() + mills / snr)
}

/// Expected z (and its two-sided p) when the true effect sits at a given power.
pub fn expected_z_at_power<T: Scalar>(power: T, alpha_directional: T) -> Result<(T, Probability<T>)> {
    if !in_open_unit_interval(power) {
        return Err(Error::domain(format!("power must be in (0, 1), got {power}")));
    }
    validate_directional_alpha(alpha_directional)?;
    let z = upper_quantile(alpha_directional)? + std_normal_quantile(power)?;
    Ok((z, two_sided_normal_p(z)?))
}

/// Probability that a significant result is a false positive.
pub fn false_positive_risk<T: Scalar>(alpha_directional: T, power: T, prior_true_rate: T) -> Result<Probability<T>> {
    for (name, v) in [("alpha", alpha_directional), ("power", power)] {
        if !in_open_unit_interval(v) {
            return Err(Error::domain(format!("{name} must be in (0, 1), got {v}")));
        }
    }
    if !(prior_true_rate > T::zero() && prior_true_rate <= T::one()) {
        return Err(Error::domain(format!("prior true rate must be in (0, 1], got {prior_true_rate}")));
    }
    let false_hits = alpha_directional * (T::one() - prior_true_rate);
    Probability::new(false_hits / (false_hits + power * prior_true_rate))
}
