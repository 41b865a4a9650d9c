//! Deterministic Monte Carlo simulator of two-arm Bernoulli experiments.
//!
//! Serves as the independent check on analytic power, Type-M exaggeration,
//! interval coverage and false-positive calibration.
//!
//! Replicate `i` draws from ChaCha8 stream `i` of the configured seed, and
//! replicates are reduced in fixed-size chunks combined in index order. The
//! result is therefore bit-identical for any thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::upper_quantile;
use crate::proportions::{two_proportion_test, ArmCount};
use crate::scalar::in_open_unit_interval;

const CHUNK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_control: u64,
    pub n_treatment: u64,
    pub baseline_rate: f64,
    /// True relative lift of the treatment over the baseline.
    pub true_rel_lift: f64,
    pub replicates: u64,
    pub seed: u64,
    /// Right-tail type-I error rate, e.g. `0.025`.
    pub alpha_directional: f64,
}

impl SimConfig {
    pub fn treatment_rate(&self) -> f64 {
        self.baseline_rate * (1.0 + self.true_rel_lift)
    }

    pub fn true_abs_effect(&self) -> f64 {
        self.treatment_rate() - self.baseline_rate
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::domain("simulation needs at least one replicate"));
        }
        if self.n_control == 0 || self.n_treatment == 0 {
            return Err(Error::domain("both arms need at least one user"));
        }
        if !in_open_unit_interval(self.baseline_rate) {
            return Err(Error::domain(format!("baseline rate must be in (0, 1), got {}", self.baseline_rate)));
        }
        let pt = self.treatment_rate();
        if !in_open_unit_interval(pt) {
            return Err(Error::domain(format!("true treatment rate must be in (0, 1), got {pt}")));
        }
        if !in_open_unit_interval(self.alpha_directional) || self.alpha_directional >= 0.5 {
            return Err(Error::domain(format!(
                "directional alpha must be in (0, 0.5), got {}",
                self.alpha_directional
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub replicates: u64,
    /// Replicates whose table had no conversions (or all conversions); excluded from rates.
    pub degenerate: u64,
    pub significant_positive: u64,
    pub significant_any: u64,
    /// Fraction of replicates significant in the right tail at `alpha'`.
    pub empirical_power_right_tail: f64,
    /// Mean estimated absolute difference among significant positive replicates.
    pub mean_significant_estimate: Option<f64>,
    /// `mean_significant_estimate / true_abs_effect`; absent for a zero true effect.
    pub empirical_exaggeration: Option<f64>,
    /// Fraction of significant replicates (either tail) with the wrong sign.
    pub sign_error_rate: Option<f64>,
    /// Coverage of the `1 - 2 alpha'` uncorrected Wald interval.
    pub ci_coverage: f64,
    /// Largest log10 two-sided p-value over all replicates.
    pub max_log10_p_value: f64,
}

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn merge(&mut self, other: CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    valid: u64,
    degenerate: u64,
    sig_pos: u64,
    sig_any: u64,
    sign_errors: u64,
    covered: u64,
    sig_pos_estimates: CompensatedSum,
    max_log10_p: f64,
}

impl Tally {
    fn merge(&mut self, o: &Tally) {
        self.valid += o.valid;
        self.degenerate += o.degenerate;
        self.sig_pos += o.sig_pos;
        self.sig_any += o.sig_any;
        self.sign_errors += o.sign_errors;
        self.covered += o.covered;
        self.sig_pos_estimates.merge(o.sig_pos_estimates);
        self.max_log10_p = self.max_log10_p.max(o.max_log10_p);
    }
}

struct Sampler {
    base: ChaCha8Rng,
    control: Binomial,
    treatment: Binomial,
    z_crit: f64,
    true_diff: f64,
    ci_alpha: f64,
}

impl Sampler {
    fn new(cfg: &SimConfig) -> Result<Self> {
        let dist = |n: u64, p: f64| Binomial::new(n, p).map_err(|e| Error::domain(format!("binomial sampler: {e}")));
        Ok(Self {
            base: ChaCha8Rng::seed_from_u64(cfg.seed),
            control: dist(cfg.n_control, cfg.baseline_rate)?,
            treatment: dist(cfg.n_treatment, cfg.treatment_rate())?,
            z_crit: upper_quantile(cfg.alpha_directional)?,
            true_diff: cfg.true_abs_effect(),
            ci_alpha: 2.0 * cfg.alpha_directional,
        })
    }

    fn draw(&self, replicate: u64) -> (u64, u64) {
        let mut rng = self.base.clone();
        rng.set_stream(replicate);
        let xc = rng.sample(self.control);
        let xt = rng.sample(self.treatment);
        (xc, xt)
    }

    fn run_chunk(&self, cfg: &SimConfig, range: std::ops::Range<u64>) -> Tally {
        let mut t = Tally { max_log10_p: f64::NEG_INFINITY, ..Default::default() };
        for i in range {
            let (xc, xt) = self.draw(i);
            let control = ArmCount { n: cfg.n_control, x: xc };
            let treatment = ArmCount { n: cfg.n_treatment, x: xt };
            let r = match two_proportion_test::<f64>(control, treatment, false, self.ci_alpha) {
                Ok(r) => r,
                Err(_) => {
                    t.degenerate += 1;
                    continue;
                }
            };
            t.valid += 1;
            t.max_log10_p = t.max_log10_p.max(r.log10_p_value.get());
            if r.ci_low <= self.true_diff && self.true_diff <= r.ci_high {
                t.covered += 1;
            }
            if r.z_signed.abs() > self.z_crit {
                t.sig_any += 1;
                if self.true_diff != 0.0 && (r.abs_diff > 0.0) != (self.true_diff > 0.0) {
                    t.sign_errors += 1;
                }
                if r.z_signed > 0.0 {
                    t.sig_pos += 1;
                    t.sig_pos_estimates.add(r.abs_diff);
                }
            }
        }
        t
    }
}

/// Runs the simulation on rayon's global pool.
pub fn simulate(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let sampler = Sampler::new(config)?;
    let chunks = config.replicates.div_ceil(CHUNK);
    let tallies: Vec<Tally> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK;
            let end = (start + CHUNK).min(config.replicates);
            sampler.run_chunk(config, start..end)
        })
        .collect();
    Ok(finish(config, &tallies))
}

/// Runs the simulation on a dedicated pool with `threads` workers.
pub fn simulate_with_threads(config: &SimConfig, threads: usize) -> Result<SimResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::domain(format!("thread pool: {e}")))?;
    pool.install(|| simulate(config))
}

fn finish(cfg: &SimConfig, tallies: &[Tally]) -> SimResult {
    let mut total = Tally { max_log10_p: f64::NEG_INFINITY, ..Default::default() };
    for t in tallies {
        total.merge(t);
    }
    let valid = total.valid.max(1) as f64;
    let mean_sig = (total.sig_pos > 0).then(|| total.sig_pos_estimates.value() / total.sig_pos as f64);
    let true_diff = cfg.true_abs_effect();
    SimResult {
        replicates: cfg.replicates,
        degenerate: total.degenerate,
        significant_positive: total.sig_pos,
        significant_any: total.sig_any,
        empirical_power_right_tail: total.sig_pos as f64 / valid,
        mean_significant_estimate: mean_sig,
        empirical_exaggeration: mean_sig.filter(|_| true_diff > 0.0).map(|m| m / true_diff),
        sign_error_rate: (total.sig_any > 0 && true_diff != 0.0)
            .then(|| total.sign_errors as f64 / total.sig_any as f64),
        ci_coverage: total.covered as f64 / valid,
        max_log10_p_value: if total.valid > 0 { total.max_log10_p } else { 0.0 },
    }
}
