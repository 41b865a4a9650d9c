//! Two-proportion inference.
//!
//! The test statistic is Pearson's chi-square on the 2x2 table (pooled
//! variance); the interval is the unpooled Wald interval. With continuity
//! correction on, both follow the same Yates adjustment, so results line up
//! with R's `prop.test` for two groups.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    chi_square_sf_1df, log10_chi_square_sf_1df, upper_quantile, Log10Probability, Probability,
};
use crate::scalar::{in_open_unit_interval, in_unit_interval, Scalar};

/// One experiment arm: users and converting users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArmCount {
    pub n: u64,
    pub x: u64,
}

impl ArmCount {
    pub fn new(n: u64, x: u64) -> Result<Self> {
        let arm = Self { n, x };
        arm.validate()?;
        Ok(arm)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::domain("arm has zero users"));
        }
        if self.x > self.n {
            return Err(Error::domain(format!(
                "conversions ({}) exceed users ({})",
                self.x, self.n
            )));
        }
        Ok(())
    }

    pub fn rate<T: Scalar>(&self) -> T {
        T::from_count(self.x) / T::from_count(self.n)
    }
}

/// How an experiment's conversion counts were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountSource {
    /// Counts as recorded.
    #[default]
    Observed,
    /// Both counts rounded from published rates.
    FromRates,
    /// Control rounded from its rate, treatment from control rate times `1 + lift`.
    FromRatesAndLift,
}

impl CountSource {
    pub fn is_reconstructed(self) -> bool {
        !matches!(self, CountSource::Observed)
    }
}

/// A labelled control/treatment pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub label: String,
    pub control: ArmCount,
    pub treatment: ArmCount,
    #[serde(default)]
    pub source: CountSource,
}

impl ExperimentSummary {
    pub fn new(label: impl Into<String>, control: ArmCount, treatment: ArmCount) -> Result<Self> {
        let s = Self { label: label.into(), control, treatment, source: CountSource::Observed };
        s.validate()?;
        Ok(s)
    }

    pub fn with_source(mut self, source: CountSource) -> Self {
        self.source = source;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.label.trim().is_empty() {
            return Err(Error::domain("experiment label is empty"));
        }
        self.control.validate().map_err(|e| e.in_experiment(&self.label))?;
        self.treatment.validate().map_err(|e| e.in_experiment(&self.label))
    }
}

/// Two-proportion comparison, treatment minus control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult<T> {
    pub rate_control: T,
    pub rate_treatment: T,
    pub abs_diff: T,
    /// `abs_diff / rate_control`; absent when the control rate is zero.
    pub rel_lift: Option<T>,
    pub se_unpooled: T,
    pub chi2: T,
    pub z_signed: T,
    pub p_value: Probability<T>,
    pub log10_p_value: Log10Probability<T>,
    pub ci_low: T,
    pub ci_high: T,
    pub confidence: T,
    pub continuity_used: bool,
}

/// Pearson chi-square test of equal proportions with a matching Wald interval.
///
/// `alpha` is the two-sided level of the interval (`0.05` gives a 95% CI).
pub fn two_proportion_test<T: Scalar>(
    control: ArmCount,
    treatment: ArmCount,
    continuity: bool,
    alpha: T,
) -> Result<TestResult<T>> {
    control.validate()?;
    treatment.validate()?;
    if !in_open_unit_interval(alpha) {
        return Err(Error::domain(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let total = control.n + treatment.n;
    let successes = control.x + treatment.x;
    if successes == 0 || successes == total {
        return Err(Error::DegenerateTable(if successes == 0 {
            "no conversions in either arm".into()
        } else {
            "every user converted in both arms".into()
        }));
    }

    // |O - E| is identical in all four cells: |x_t n_c - x_c n_t| / N.
    let cross = treatment.x as i128 * control.n as i128 - control.x as i128 * treatment.n as i128;
    let n_total = T::from_count(total);
    let deviation = T::from_f64(cross.unsigned_abs() as f64).unwrap() / n_total;
    let yates = if continuity { deviation.min(T::lit(0.5)) } else { T::zero() };
    let adj = deviation - yates;
    let nc = T::from_count(control.n);
    let nt = T::from_count(treatment.n);
    let succ = T::from_count(successes);
    let fail = T::from_count(total - successes);
    // Sum of 1/E over the four cells.
    let inv_expected = n_total * (nt.recip() + nc.recip()) * (succ.recip() + fail.recip());
    let chi2 = adj * adj * inv_expected;
    let z_signed = match cross.signum() {
        1 => chi2.sqrt(),
        -1 => -chi2.sqrt(),
        _ => T::zero(),
    };

    let pc = control.rate::<T>();
    let pt = treatment.rate::<T>();
    let abs_diff = pt - pc;
    let se_unpooled = (pt * (T::one() - pt) / nt + pc * (T::one() - pc) / nc).sqrt();
    let z_crit = upper_quantile(alpha / T::lit(2.0))?;
    let ci_correction = if continuity {
        (T::lit(0.5) * (nc.recip() + nt.recip())).min(abs_diff.abs())
    } else {
        T::zero()
    };
    let half_width = z_crit * se_unpooled + ci_correction;
    let clamp = |v: T| v.max(-T::one()).min(T::one());

    Ok(TestResult {
        rate_control: pc,
        rate_treatment: pt,
        abs_diff,
        rel_lift: (pc > T::zero()).then(|| abs_diff / pc),
        se_unpooled,
        chi2,
        z_signed,
        p_value: chi_square_sf_1df(chi2)?,
        log10_p_value: log10_chi_square_sf_1df(chi2)?,
        ci_low: clamp(abs_diff - half_width),
        ci_high: clamp(abs_diff + half_width),
        confidence: T::one() - alpha,
        continuity_used: continuity,
    })
}

/// Runs [`two_proportion_test`] on a labelled experiment, tagging errors with the label.
pub fn test_experiment<T: Scalar>(
    exp: &ExperimentSummary,
    continuity: bool,
    alpha: T,
) -> Result<TestResult<T>> {
    two_proportion_test(exp.control, exp.treatment, continuity, alpha)
        .map_err(|e| e.in_experiment(&exp.label))
}

/// Conversion count recovered from a published rate: `round(rate * n)` clamped to `[0, n]`.
pub fn counts_from_rate<T: Scalar>(n: u64, rate: T) -> Result<u64> {
    if !in_unit_interval(rate) {
        return Err(Error::domain(format!("rate must be in [0, 1], got {rate}")));
    }
    let x = (rate * T::from_count(n)).round().to_u64().unwrap_or(0);
    Ok(x.min(n))
}

/// Treatment count recovered from the control arm and a published relative lift.
///
/// Published rates are usually rounded harder than lifts, so
/// `control_rate * (1 + lift)` pins the treatment rate more tightly than the
/// printed treatment rate does.
pub fn treatment_count_from_lift<T: Scalar>(n_treatment: u64, control: ArmCount, lift: T) -> Result<u64> {
    control.validate()?;
    if !lift.is_finite() || lift <= -T::one() {
        return Err(Error::domain(format!("lift must be finite and > -1, got {lift}")));
    }
    let rate = control.rate::<T>() * (T::one() + lift);
    if rate > T::one() {
        return Err(Error::domain(format!("lift {lift} implies a treatment rate above 1")));
    }
    counts_from_rate(n_treatment, rate)
}

/// Cohen's h, `2 asin(sqrt(p1)) - 2 asin(sqrt(p2))`.
pub fn cohens_h<T: Scalar>(p1: T, p2: T) -> Result<T> {
    if !in_unit_interval(p1) || !in_unit_interval(p2) {
        return Err(Error::domain(format!("Cohen's h needs proportions in [0, 1], got {p1}, {p2}")));
    }
    let two = T::lit(2.0);
    Ok(two * p1.sqrt().asin() - two * p2.sqrt().asin())
}
