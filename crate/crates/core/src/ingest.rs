//! CSV ingestion of experiment summaries.
//!
//! Two schemas are accepted, chosen by the header row:
//!
//! ```text
//! label,n_control,x_control,n_treatment,x_treatment
//! label,n_control,rate_control,n_treatment,rate_treatment[,lift]
//! ```
//!
//! Rates and lifts may be fractions (`0.0543`) or percentages (`5.43%`).
//! In the rate schema the counts are reconstructed by rounding. When a `lift`
//! column is present the treatment count is derived from the control rate and
//! the lift instead, after checking the lift agrees with the printed treatment
//! rate to within its rounding.

use std::io::Read;

pub use crate::proportions::{CountSource, ExperimentSummary};
use crate::error::{Error, Result};
use crate::proportions::{counts_from_rate, treatment_count_from_lift, ArmCount};

const COUNT_COLUMNS: [&str; 5] = ["label", "n_control", "x_control", "n_treatment", "x_treatment"];
const RATE_COLUMNS: [&str; 5] = ["label", "n_control", "rate_control", "n_treatment", "rate_treatment"];
const OPTIONAL_RATE_COLUMNS: [&str; 1] = ["lift"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    Counts,
    Rates { with_lift: bool },
}

/// A published rate together with the rounding implied by its printed digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrintedRate {
    pub value: f64,
    pub half_ulp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArmValue {
    Count(u64),
    Rate(PrintedRate),
}

/// One parsed CSV row, before reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestRow {
    pub line: u64,
    pub label: String,
    pub n_control: u64,
    pub control: ArmValue,
    pub n_treatment: u64,
    pub treatment: ArmValue,
    pub lift: Option<f64>,
}

impl IngestRow {
    pub fn into_summary(self) -> Result<ExperimentSummary> {
        let line = self.line;
        let invalid = |message: String| Error::Validation { line, message };
        if self.label.trim().is_empty() {
            return Err(invalid("empty label".into()));
        }
        let arm = |n: u64, x: u64, which: &str| {
            ArmCount::new(n, x).map_err(|e| invalid(format!("{which} arm: {}", e.root())))
        };
        let (control, treatment, source) = match (self.control, self.treatment) {
            (ArmValue::Count(xc), ArmValue::Count(xt)) => (
                arm(self.n_control, xc, "control")?,
                arm(self.n_treatment, xt, "treatment")?,
                CountSource::Observed,
            ),
            (ArmValue::Rate(rc), ArmValue::Rate(rt)) => {
                let to_count = |n: u64, r: f64, which: &str| {
                    counts_from_rate(n, r).map_err(|e| invalid(format!("{which} rate: {}", e.root())))
                };
                let control = arm(self.n_control, to_count(self.n_control, rc.value, "control")?, "control")?;
                match self.lift {
                    None => {
                        let xt = to_count(self.n_treatment, rt.value, "treatment")?;
                        (control, arm(self.n_treatment, xt, "treatment")?, CountSource::FromRates)
                    }
                    Some(lift) => {
                        let implied = rc.value * (1.0 + lift);
                        if (implied - rt.value).abs() > rt.half_ulp + rc.half_ulp * (1.0 + lift.abs()) {
                            return Err(invalid(format!(
                                "lift {lift} implies treatment rate {implied:.6}, inconsistent with printed {}",
                                rt.value
                            )));
                        }
                        let xt = treatment_count_from_lift(self.n_treatment, control, lift)
                            .map_err(|e| invalid(format!("lift: {}", e.root())))?;
                        (control, arm(self.n_treatment, xt, "treatment")?, CountSource::FromRatesAndLift)
                    }
                }
            }
            _ => unreachable!("schema fixes both arms to the same form"),
        };
        Ok(ExperimentSummary { label: self.label.trim().to_string(), control, treatment, source })
    }
}

fn detect_schema(headers: &[String]) -> Result<(Schema, Vec<usize>)> {
    let has = |name: &str| headers.iter().any(|h| h == name);
    let (schema, required): (Schema, &[&str]) = if has("x_control") || has("x_treatment") {
        (Schema::Counts, &COUNT_COLUMNS)
    } else if has("rate_control") || has("rate_treatment") {
        (Schema::Rates { with_lift: has("lift") }, &RATE_COLUMNS)
    } else {
        return Err(Error::Schema(format!(
            "header must contain either x_control/x_treatment or rate_control/rate_treatment, got [{}]",
            headers.join(", ")
        )));
    };
    for h in headers {
        let allowed = required.contains(&h.as_str())
            || matches!(schema, Schema::Rates { .. }) && OPTIONAL_RATE_COLUMNS.contains(&h.as_str());
        if !allowed {
            return Err(Error::Schema(format!("unknown column `{h}`")));
        }
    }
    let mut positions = Vec::with_capacity(required.len() + 1);
    for name in required {
        let idx = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))?;
        positions.push(idx);
    }
    if let Schema::Rates { with_lift: true } = schema {
        positions.push(headers.iter().position(|h| h == "lift").unwrap());
    }
    if headers.len() != positions.len() {
        return Err(Error::Schema("duplicate column in header".into()));
    }
    Ok((schema, positions))
}

fn parse_count(field: &str, column: &str, line: u64) -> Result<u64> {
    let cleaned: String = field.trim().chars().filter(|c| *c != '_').collect();
    cleaned.parse::<u64>().map_err(|_| Error::Validation {
        line,
        message: format!("{column}: `{field}` is not a non-negative integer"),
    })
}

/// Parses a fraction or percentage; `half_ulp` is half a unit in the last printed digit.
fn parse_fraction(field: &str, column: &str, line: u64) -> Result<PrintedRate> {
    let s = field.trim();
    let (digits, scale) = match s.strip_suffix('%') {
        Some(d) => (d.trim(), 0.01),
        None => (s, 1.0),
    };
    let value: f64 = digits.parse().map_err(|_| Error::Validation {
        line,
        message: format!("{column}: `{field}` is not a number"),
    })?;
    if !value.is_finite() {
        return Err(Error::Validation { line, message: format!("{column}: `{field}` is not finite") });
    }
    let decimals = digits.split_once('.').map_or(0, |(_, frac)| frac.len()) as i32;
    Ok(PrintedRate { value: value * scale, half_ulp: 0.5 * 10f64.powi(-decimals) * scale })
}

/// Parses raw rows without reconstructing counts.
pub fn parse_rows<R: Read>(input: R) -> Result<Vec<IngestRow>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(false).from_reader(input);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Schema(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_ascii_lowercase())
        .collect();
    let (schema, pos) = detect_schema(&headers)?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Validation {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let get = |i: usize| record.get(pos[i]).unwrap_or("");
        let arm_value = |i: usize| -> Result<ArmValue> {
            let column = if matches!(schema, Schema::Counts) { COUNT_COLUMNS[i] } else { RATE_COLUMNS[i] };
            match schema {
                Schema::Counts => parse_count(get(i), column, line).map(ArmValue::Count),
                Schema::Rates { .. } => parse_fraction(get(i), column, line).map(ArmValue::Rate),
            }
        };
        let lift = match schema {
            Schema::Rates { with_lift: true } => Some(parse_fraction(get(5), "lift", line)?.value),
            _ => None,
        };
        rows.push(IngestRow {
            line,
            label: get(0).to_string(),
            n_control: parse_count(get(1), "n_control", line)?,
            control: arm_value(2)?,
            n_treatment: parse_count(get(3), "n_treatment", line)?,
            treatment: arm_value(4)?,
            lift,
        });
    }
    Ok(rows)
}

/// Parses and validates experiment summaries from CSV.
pub fn parse_experiments<R: Read>(input: R) -> Result<Vec<ExperimentSummary>> {
    parse_rows(input)?.into_iter().map(IngestRow::into_summary).collect()
}
