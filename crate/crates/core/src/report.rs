//! Report assembly and rendering.
//!
//! A [`Report`] holds every computed number; the text, JSON and SVG
//! renderings are views of it, so they cannot disagree.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta::{fixed_effect_meta, split_independent, MetaResult, SharedControlNotice};
use crate::numerics::{upper_quantile, Log10Probability, Probability};
use crate::power::{d33, Tail, TelescopeVerdict};
use crate::proportions::{test_experiment, ArmCount, CountSource, ExperimentSummary, TestResult};
use crate::srm::{srm_check, SrmResult, SrmVerdict, DEFAULT_THRESHOLD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    /// Two-sided alpha for tests and intervals.
    pub alpha: f64,
    /// Tail convention for the directional level used by `d33` and the telescope bound.
    pub tail: Tail,
    /// Label of the original study for the small-telescopes comparison.
    pub original: Option<String>,
    pub srm_threshold: f64,
    pub expected_control_share: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            tail: Tail::TwoSided,
            original: None,
            srm_threshold: DEFAULT_THRESHOLD,
            expected_control_share: 0.5,
        }
    }
}

impl ReportOptions {
    pub fn alpha_directional(&self) -> f64 {
        self.tail.directional_alpha(self.alpha)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub label: String,
    pub source: CountSource,
    pub control: ArmCount,
    pub treatment: ArmCount,
    pub uncorrected: TestResult<f64>,
    pub corrected: TestResult<f64>,
    pub srm: SrmResult<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaBlock {
    pub studies: Vec<String>,
    pub excluded: Vec<SharedControlNotice>,
    pub result: MetaResult<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelescopeEntry {
    pub label: String,
    pub abs_diff: f64,
    pub upper_bound: f64,
    pub verdict: TelescopeVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelescopeBlock {
    pub original: String,
    pub alpha_one_sided: f64,
    /// Absolute effect giving the original design 33% power.
    pub d33: f64,
    pub d33_relative: f64,
    pub entries: Vec<TelescopeEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub options: ReportOptions,
    pub experiments: Vec<ExperimentReport>,
    pub meta: Option<MetaBlock>,
    pub telescope: Option<TelescopeBlock>,
}

/// Analyses every experiment and assembles the report.
pub fn run_report(experiments: &[ExperimentSummary], options: &ReportOptions) -> Result<Report> {
    if experiments.is_empty() {
        return Err(Error::domain("report needs at least one experiment"));
    }
    let alpha_dir = options.alpha_directional();
    let mut rows = Vec::with_capacity(experiments.len());
    for exp in experiments {
        let tag = |e: Error| e.in_experiment(&exp.label);
        rows.push(ExperimentReport {
            label: exp.label.clone(),
            source: exp.source,
            control: exp.control,
            treatment: exp.treatment,
            uncorrected: test_experiment(exp, false, options.alpha)?,
            corrected: test_experiment(exp, true, options.alpha)?,
            srm: srm_check(exp.control.n, exp.treatment.n, options.expected_control_share, options.srm_threshold)
                .map_err(tag)?,
        });
    }

    let original = match &options.original {
        Some(label) => Some(
            experiments
                .iter()
                .position(|e| &e.label == label)
                .ok_or_else(|| Error::domain(format!("original study `{label}` not found")))?,
        ),
        None => None,
    };

    let telescope = match original {
        Some(idx) if experiments.len() > 1 => {
            let orig = &experiments[idx];
            let baseline = orig.control.rate::<f64>();
            let d = d33(baseline, orig.control.n, orig.treatment.n, alpha_dir).map_err(|e| e.in_experiment(&orig.label))?;
            let z = upper_quantile(alpha_dir)?;
            let entries = rows
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != idx)
                .map(|(_, r)| {
                    let upper = r.uncorrected.abs_diff + z * r.uncorrected.se_unpooled;
                    TelescopeEntry {
                        label: r.label.clone(),
                        abs_diff: r.uncorrected.abs_diff,
                        upper_bound: upper,
                        verdict: if upper < d {
                            TelescopeVerdict::OriginalTooSmall
                        } else {
                            TelescopeVerdict::Inconclusive
                        },
                    }
                })
                .collect();
            Some(TelescopeBlock {
                original: orig.label.clone(),
                alpha_one_sided: alpha_dir,
                d33: d,
                d33_relative: d / baseline,
                entries,
            })
        }
        _ => None,
    };

    let candidates: Vec<ExperimentSummary> = experiments
        .iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != original)
        .map(|(_, e)| e.clone())
        .collect();
    let (independent, excluded) = split_independent(&candidates);
    let meta = if independent.len() >= 2 {
        Some(MetaBlock {
            studies: independent.iter().map(|e| e.label.clone()).collect(),
            excluded,
            result: fixed_effect_meta(&independent)?,
        })
    } else {
        None
    };

    Ok(Report { options: options.clone(), experiments: rows, meta, telescope })
}

/// Number formatting shared by every rendering.
pub mod fmt {
    use super::*;

    /// Fraction as a percentage with two decimals.
    pub fn pct(v: f64) -> String {
        format!("{:.2}%", v * 100.0)
    }

    /// P-value with two significant digits; log10 form below `1e-15`.
    pub fn p_value(p: Probability<f64>, log10: Log10Probability<f64>) -> String {
        let lp = log10.get();
        if lp < -15.0 {
            return format!("10^{lp:.2}");
        }
        let p = p.get();
        if p < 1e-4 {
            return format!("{p:.1e}");
        }
        let decimals = (1 - p.log10().floor() as i32).max(1) as usize;
        format!("{p:.decimals$}")
    }

    pub fn log10_p(log10: Log10Probability<f64>) -> String {
        let lp = log10.get();
        if lp < -15.0 {
            format!("10^{lp:.2}")
        } else {
            p_value(log10.to_probability(), log10)
        }
    }
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Schema(format!("report JSON: {e}")))
    }

    pub fn srm_failures(&self) -> Vec<&str> {
        self.experiments
            .iter()
            .filter(|e| e.srm.verdict == SrmVerdict::Fail)
            .map(|e| e.label.as_str())
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let conf = 100.0 * (1.0 - self.options.alpha);
        let _ = writeln!(out, "Two-proportion tests ({conf:.0}% CI, absolute difference)");
        let _ = writeln!(
            out,
            "{:<22} {:>10} {:>10} {:>9} {:>9} {:>9} {:>8} {:>9} {:>20} {:>8} {:>20}",
            "study", "n_c", "n_t", "rate_c", "rate_t", "lift", "chi2", "p", "CI", "p_yates", "CI_yates"
        );
        for e in &self.experiments {
            let u = &e.uncorrected;
            let c = &e.corrected;
            let mut label = e.label.clone();
            if e.source.is_reconstructed() {
                label.push('*');
            }
            let _ = writeln!(
                out,
                "{:<22} {:>10} {:>10} {:>9} {:>9} {:>9} {:>8.3} {:>9} {:>20} {:>8} {:>20}",
                label,
                e.control.n,
                e.treatment.n,
                fmt::pct(u.rate_control),
                fmt::pct(u.rate_treatment),
                u.rel_lift.map_or_else(|| "n/a".into(), fmt::pct),
                u.chi2,
                fmt::p_value(u.p_value, u.log10_p_value),
                format!("[{}, {}]", fmt::pct(u.ci_low), fmt::pct(u.ci_high)),
                fmt::p_value(c.p_value, c.log10_p_value),
                format!("[{}, {}]", fmt::pct(c.ci_low), fmt::pct(c.ci_high)),
            );
        }
        if self.experiments.iter().any(|e| e.source.is_reconstructed()) {
            let _ = writeln!(out, "* counts reconstructed from published rates");
        }

        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "Sample ratio mismatch (expected control share {}, threshold {:e})",
            self.options.expected_control_share, self.options.srm_threshold
        );
        for e in &self.experiments {
            let s = &e.srm;
            let _ = writeln!(
                out,
                "{:<22} z = {:>8.2}  p = {:>12}  share = {:.4}  {}",
                e.label,
                s.z,
                fmt::log10_p(s.log10_p_two_sided),
                s.observed_share,
                match s.verdict {
                    SrmVerdict::Pass => "pass",
                    SrmVerdict::Fail => "FAIL",
                }
            );
        }

        if let Some(m) = &self.meta {
            let r = &m.result;
            let _ = writeln!(out);
            let _ = writeln!(out, "Fixed-effect meta-analysis (log relative risk)");
            for s in &r.per_study {
                let _ = writeln!(
                    out,
                    "{:<22} lift = {:>8}  weight = {:>6.2}%",
                    s.label,
                    fmt::pct(s.log_rr.exp_m1()),
                    100.0 * s.weight_share
                );
            }
            let _ = writeln!(
                out,
                "combined lift = {}  z = {:.2}  p = {}",
                fmt::pct(r.combined_rel_lift),
                r.z,
                fmt::p_value(r.p_value, r.log10_p_value)
            );
            for n in &m.excluded {
                let _ = writeln!(
                    out,
                    "excluded {}: shares its control with {} (not independent)",
                    n.excluded, n.shares_control_with
                );
            }
        }

        if let Some(t) = &self.telescope {
            let _ = writeln!(out);
            let _ = writeln!(
                out,
                "Small telescopes vs {}: d33 = {} absolute ({} relative)",
                t.original,
                fmt::pct(t.d33),
                fmt::pct(t.d33_relative)
            );
            for e in &t.entries {
                let _ = writeln!(
                    out,
                    "{:<22} effect = {:>8}  upper bound = {:>8}  {}",
                    e.label,
                    fmt::pct(e.abs_diff),
                    fmt::pct(e.upper_bound),
                    match e.verdict {
                        TelescopeVerdict::OriginalTooSmall => "original too small",
                        TelescopeVerdict::Inconclusive => "inconclusive",
                    }
                );
            }
        }
        out
    }

    /// Effect sizes with intervals against the `d33` line, as a static SVG.
    pub fn to_svg(&self) -> String {
        const W: f64 = 720.0;
        const H: f64 = 420.0;
        const LEFT: f64 = 80.0;
        const RIGHT: f64 = 30.0;
        const TOP: f64 = 40.0;
        const BOTTOM: f64 = 70.0;

        let pts: Vec<(&str, f64, f64, f64)> = self
            .experiments
            .iter()
            .map(|e| (e.label.as_str(), e.uncorrected.abs_diff, e.uncorrected.ci_low, e.uncorrected.ci_high))
            .collect();
        let d33 = self.telescope.as_ref().map(|t| t.d33);
        let mut lo = pts.iter().map(|p| p.2).fold(0.0f64, f64::min);
        let mut hi = pts.iter().map(|p| p.3).fold(0.0f64, f64::max);
        if let Some(d) = d33 {
            hi = hi.max(d);
            lo = lo.min(d);
        }
        let pad = ((hi - lo) * 0.08).max(1e-4);
        lo -= pad;
        hi += pad;
        let plot_h = H - TOP - BOTTOM;
        let plot_w = W - LEFT - RIGHT;
        let y = |v: f64| TOP + (hi - v) / (hi - lo) * plot_h;
        let slot = plot_w / pts.len() as f64;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">Absolute effect with {:.0}% CI</text>"#,
            W / 2.0,
            100.0 * (1.0 - self.options.alpha)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{:.1}" stroke="black"/>"#,
            H - BOTTOM
        );
        for k in 0..=5 {
            let v = lo + (hi - lo) * k as f64 / 5.0;
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                LEFT - 6.0,
                y(v) + 4.0,
                fmt::pct(v)
            );
        }
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{0:.1}" x2="{1:.1}" y2="{0:.1}" stroke="#888" stroke-width="1"/>"##,
            y(0.0),
            W - RIGHT
        );
        if let Some(d) = d33 {
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{0:.1}" x2="{1:.1}" y2="{0:.1}" stroke="#c00" stroke-dasharray="6,4" stroke-width="1.5"/>"##,
                y(d),
                W - RIGHT
            );
            let _ = writeln!(
                s,
                r##"<text x="{:.1}" y="{:.1}" text-anchor="end" fill="#c00">d33 (33% power) = {}</text>"##,
                W - RIGHT - 4.0,
                y(d) - 6.0,
                fmt::pct(d)
            );
        }
        for (i, (label, est, low, high)) in pts.iter().enumerate() {
            let cx = LEFT + slot * (i as f64 + 0.5);
            let _ = writeln!(
                s,
                r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black" stroke-width="1.5"/>"#,
                y(*low),
                y(*high)
            );
            for v in [low, high] {
                let _ = writeln!(
                    s,
                    r#"<line x1="{0:.1}" y1="{1:.1}" x2="{2:.1}" y2="{1:.1}" stroke="black"/>"#,
                    cx - 6.0,
                    y(*v),
                    cx + 6.0
                );
            }
            let _ = writeln!(s, r##"<circle cx="{cx:.1}" cy="{:.1}" r="4" fill="#1f4e9c"/>"##, y(*est));
            let _ = writeln!(
                s,
                r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
                H - BOTTOM + 20.0,
                xml_escape(label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
