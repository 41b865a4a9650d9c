//! Statistical toolkit for trustworthy A/B testing.
//!
//! The library covers the full analysis path of a two-arm conversion
//! experiment:
//!
//! * [`proportions`]: Pearson chi-square two-proportion test with optional
//!   Yates continuity correction, Wald interval, lift and Cohen's h.
//! * [`power`]: Lehr's rule, power and MDE for two proportions, the
//!   small-telescopes `d33` test, Type-M exaggeration and false positive risk.
//! * [`srm`]: sample-ratio-mismatch guardrail with log10 p-values.
//! * [`meta`]: fixed-effect inverse-variance meta-analysis on the
//!   log relative risk scale.
//! * [`mc_oracle`]: deterministic, parallel Monte Carlo simulator of two-arm
//!   Bernoulli experiments.
//! * [`ingest`] and [`report`]: CSV ingestion and text/JSON/SVG reports.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`). The
//! aliases at the crate root fix the scalar to `f64`, which is what the
//! accuracy contracts and the CLI are stated for.

pub mod error;
pub mod ingest;
pub mod mc_oracle;
pub mod meta;
pub mod numerics;
pub mod power;
pub mod proportions;
pub mod report;
pub mod scalar;
pub mod srm;

pub use error::{Error, Result};
pub use numerics::{Log10Probability, Probability};
pub use scalar::Scalar;

pub type TestResult = proportions::TestResult<f64>;
pub type DesignSpec = power::DesignSpec<f64>;
pub type PowerResult = power::PowerResult<f64>;
pub type SrmResult = srm::SrmResult<f64>;
pub type MetaResult = meta::MetaResult<f64>;
pub type StudyWeight = meta::StudyWeight<f64>;
pub type Prob = Probability<f64>;
pub type Log10Prob = Log10Probability<f64>;

pub use ingest::parse_experiments;
pub use mc_oracle::{simulate, SimConfig, SimResult};
pub use proportions::{ArmCount, CountSource, ExperimentSummary};
pub use report::{run_report, Report, ReportOptions};
