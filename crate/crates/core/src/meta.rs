//! Fixed-effect inverse-variance meta-analysis on the log relative risk scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{log10_two_sided_normal_p, two_sided_normal_p, Log10Probability, Probability};
use crate::proportions::ExperimentSummary;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyWeight<T> {
    pub label: String,
    /// `ln(p_t / p_c)`.
    pub log_rr: T,
    pub se_log: T,
    /// Inverse variance.
    pub weight: T,
    pub weight_share: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaResult<T> {
    pub combined_log_rr: T,
    /// `exp(combined_log_rr) - 1`.
    pub combined_rel_lift: T,
    pub combined_se_log: T,
    pub z: T,
    pub p_value: Probability<T>,
    pub log10_p_value: Log10Probability<T>,
    pub per_study: Vec<StudyWeight<T>>,
}

const SR_SUFFIX: &str = "(SR)";

fn base_label(label: &str) -> &str {
    label.trim().trim_end_matches(SR_SUFFIX).trim_end()
}

fn shares_control(a: &ExperimentSummary, b: &ExperimentSummary) -> bool {
    a.control == b.control
        || (a.label.trim().ends_with(SR_SUFFIX) || b.label.trim().ends_with(SR_SUFFIX))
            && base_label(&a.label) == base_label(&b.label)
}

/// First pair of studies (by index) that share a control arm.
pub fn find_shared_control(studies: &[ExperimentSummary]) -> Option<(usize, usize)> {
    (0..studies.len())
        .flat_map(|i| (i + 1..studies.len()).map(move |j| (i, j)))
        .find(|&(i, j)| shares_control(&studies[i], &studies[j]))
}

/// A study dropped from a meta-analysis because it reuses another study's control.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedControlNotice {
    pub excluded: String,
    pub shares_control_with: String,
}

/// Splits studies into an independent set and the ones excluded for sharing a
/// control. Within a sharing pair the `(SR)`-labelled row goes, otherwise the later one.
pub fn split_independent(studies: &[ExperimentSummary]) -> (Vec<ExperimentSummary>, Vec<SharedControlNotice>) {
    let mut kept: Vec<&ExperimentSummary> = Vec::new();
    let mut notices = Vec::new();
    for s in studies {
        match kept.iter().position(|k| shares_control(k, s)) {
            None => kept.push(s),
            Some(idx) => {
                let is_sr = |e: &ExperimentSummary| e.label.trim().ends_with(SR_SUFFIX);
                if is_sr(kept[idx]) && !is_sr(s) {
                    notices.push(SharedControlNotice {
                        excluded: kept[idx].label.clone(),
                        shares_control_with: s.label.clone(),
                    });
                    kept[idx] = s;
                } else {
                    notices.push(SharedControlNotice {
                        excluded: s.label.clone(),
                        shares_control_with: kept[idx].label.clone(),
                    });
                }
            }
        }
    }
    (kept.into_iter().cloned().collect(), notices)
}

/// Log relative risk of one study with its standard error.
pub fn log_relative_risk<T: Scalar>(study: &ExperimentSummary) -> Result<(T, T)> {
    study.validate()?;
    let (c, t) = (study.control, study.treatment);
    if c.x == 0 || t.x == 0 {
        return Err(Error::UndefinedLog { label: study.label.clone() });
    }
    let f = T::from_count;
    let log_rr = f(t.x).ln() + f(c.n).ln() - f(c.x).ln() - f(t.n).ln();
    // (1 - p)/(n p) == 1/x - 1/n
    let var = f(c.x).recip() - f(c.n).recip() + f(t.x).recip() - f(t.n).recip();
    Ok((log_rr, var.sqrt()))
}

/// Inverse-variance fixed-effect combination of independent studies.
pub fn fixed_effect_meta<T: Scalar>(studies: &[ExperimentSummary]) -> Result<MetaResult<T>> {
    if studies.is_empty() {
        return Err(Error::NoStudies);
    }
    if let Some((i, j)) = find_shared_control(studies) {
        return Err(Error::SharedControl {
            first: studies[i].label.clone(),
            second: studies[j].label.clone(),
        });
    }
    let mut per_study = Vec::with_capacity(studies.len());
    for s in studies {
        let (log_rr, se_log) = log_relative_risk::<T>(s)?;
        per_study.push(StudyWeight {
            label: s.label.clone(),
            log_rr,
            se_log,
            weight: (se_log * se_log).recip(),
            weight_share: T::zero(),
        });
    }
    let total_weight = per_study.iter().fold(T::zero(), |acc, s| acc + s.weight);
    let weighted = per_study.iter().fold(T::zero(), |acc, s| acc + s.weight * s.log_rr);
    for s in &mut per_study {
        s.weight_share = s.weight / total_weight;
    }
    let combined = weighted / total_weight;
    let se = total_weight.sqrt().recip();
    let z = combined / se;
    Ok(MetaResult {
        combined_log_rr: combined,
        combined_rel_lift: combined.exp_m1(),
        combined_se_log: se,
        z,
        p_value: two_sided_normal_p(z)?,
        log10_p_value: log10_two_sided_normal_p(z)?,
        per_study,
    })
}
