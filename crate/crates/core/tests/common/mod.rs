//! Property checks shared by the proptest suite and the acceptance runner.

#![allow(dead_code)]

use abpower::mc_oracle::simulate_with_threads;
use abpower::meta::fixed_effect_meta;
use abpower::numerics::{std_normal_cdf, std_normal_quantile, std_normal_sf};
use abpower::power::{mde_from_power, power_two_proportions, DesignSpec, Tail};
use abpower::proportions::two_proportion_test;
use abpower::{ArmCount, ExperimentSummary, SimConfig};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub const CASES: u32 = 1000;

pub fn config() -> ProptestConfig {
    ProptestConfig { cases: CASES, failure_persistence: None, ..ProptestConfig::default() }
}

pub type Check = std::result::Result<(), TestCaseError>;

/// Arm with at least one user and any number of conversions.
pub fn arm(max_n: u64) -> impl Strategy<Value = ArmCount> {
    (1..=max_n).prop_flat_map(|n| (Just(n), 0..=n)).prop_map(|(n, x)| ArmCount { n, x })
}

/// Two arms whose pooled table has at least one conversion and one non-conversion.
pub fn table(max_n: u64) -> impl Strategy<Value = (ArmCount, ArmCount)> {
    (arm(max_n), arm(max_n)).prop_filter("degenerate table", |(c, t)| {
        let s = c.x + t.x;
        s > 0 && s < c.n + t.n
    })
}

/// Probability spread over many orders of magnitude in both tails.
pub fn probability() -> impl Strategy<Value = f64> {
    (-12.0f64..-0.302, any::<bool>()).prop_map(|(e, upper)| {
        let p = 10f64.powf(e);
        if upper {
            1.0 - p
        } else {
            p
        }
    })
}

pub fn quantile_round_trip(p: f64) -> Check {
    let z = std_normal_quantile(p).map_err(fail)?;
    let back = std_normal_cdf(z).map_err(fail)?.get();
    prop_assert!(((back - p) / p).abs() <= 1e-9, "p={p} z={z} back={back}");
    Ok(())
}

pub fn z_round_trip(z: f64) -> Check {
    // evaluate in whichever tail keeps full relative precision
    let back = if z <= 0.0 {
        std_normal_quantile(std_normal_cdf(z).map_err(fail)?.get()).map_err(fail)?
    } else {
        -std_normal_quantile(std_normal_sf(z).map_err(fail)?.get()).map_err(fail)?
    };
    prop_assert!((back - z).abs() <= 1e-9 * z.abs().max(1.0), "z={z} back={back}");
    Ok(())
}

pub fn arm_swap_antisymmetry(c: ArmCount, t: ArmCount, continuity: bool) -> Check {
    let a = two_proportion_test::<f64>(c, t, continuity, 0.05).map_err(fail)?;
    let b = two_proportion_test::<f64>(t, c, continuity, 0.05).map_err(fail)?;
    prop_assert_eq!(a.chi2, b.chi2);
    prop_assert_eq!(a.p_value, b.p_value);
    prop_assert_eq!(a.z_signed, -b.z_signed);
    prop_assert_eq!(a.abs_diff, -b.abs_diff);
    prop_assert!((a.ci_low + b.ci_high).abs() <= 1e-15);
    prop_assert!((a.ci_high + b.ci_low).abs() <= 1e-15);
    Ok(())
}

pub fn continuity_inflates_p(c: ArmCount, t: ArmCount) -> Check {
    let raw = two_proportion_test::<f64>(c, t, false, 0.05).map_err(fail)?;
    let yates = two_proportion_test::<f64>(c, t, true, 0.05).map_err(fail)?;
    prop_assert!(yates.chi2 <= raw.chi2);
    prop_assert!(yates.p_value.get() >= raw.p_value.get());
    prop_assert!(yates.log10_p_value.get() >= raw.log10_p_value.get());
    prop_assert!(yates.ci_low <= raw.ci_low && yates.ci_high >= raw.ci_high);
    Ok(())
}

fn power_of(p: f64, mde: f64, alpha: f64, tail: Tail, n1: u64, n2: u64) -> std::result::Result<f64, TestCaseError> {
    Ok(power_two_proportions(&DesignSpec::new(p, mde, alpha, tail, n1, n2)).map_err(fail)?.power.get())
}

#[derive(Debug, Clone, Copy)]
pub struct Design {
    pub p: f64,
    pub mde: f64,
    pub alpha: f64,
    pub n1: u64,
    pub n2: u64,
    pub two_sided: bool,
}

pub fn design() -> impl Strategy<Value = Design> {
    (0.001f64..0.9, 0.001f64..0.5, 0.001f64..0.2, 10u64..5_000_000, 10u64..5_000_000, any::<bool>())
        .prop_map(|(p, mde, alpha, n1, n2, two_sided)| Design { p, mde, alpha, n1, n2, two_sided })
}

/// Power never decreases as the effect, either arm, or alpha grows.
pub fn power_monotone(d: Design, bump: f64) -> Check {
    let tail = if d.two_sided { Tail::TwoSided } else { Tail::Right };
    let base = power_of(d.p, d.mde, d.alpha, tail, d.n1, d.n2)?;
    let tol = 1e-12;
    let more_effect = power_of(d.p, d.mde * (1.0 + bump), d.alpha, tail, d.n1, d.n2)?;
    let more_users = power_of(d.p, d.mde, d.alpha, tail, d.n1 + (d.n1 as f64 * bump) as u64 + 1, d.n2)?;
    let more_alpha = power_of(d.p, d.mde, (d.alpha * (1.0 + bump)).min(0.5), tail, d.n1, d.n2)?;
    prop_assert!(more_effect >= base - tol, "effect: {more_effect} < {base}");
    prop_assert!(more_users >= base - tol, "users: {more_users} < {base}");
    prop_assert!(more_alpha >= base - tol, "alpha: {more_alpha} < {base}");
    Ok(())
}

/// `power(mde_from_power(target)) == target`.
pub fn mde_round_trip(p: f64, n1: u64, n2: u64, alpha: f64, target: f64) -> Check {
    prop_assume!(target > alpha + 1e-3);
    let mde = mde_from_power(p, n1, n2, alpha, target).map_err(fail)?;
    let got = power_of(p, mde, alpha, Tail::Right, n1, n2)?;
    prop_assert!((got - target).abs() <= 1e-6, "target {target} got {got} (mde {mde})");
    Ok(())
}

pub fn independent_studies() -> impl Strategy<Value = Vec<ExperimentSummary>> {
    let arm = (1_000u64..2_000_000).prop_flat_map(|n| (Just(n), (n / 100).max(1)..n / 2));
    proptest::collection::vec((arm.clone(), arm), 2..7)
        .prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, ((nc, xc), (nt, xt)))| ExperimentSummary {
                    label: format!("study-{i}"),
                    control: ArmCount { n: nc, x: xc },
                    treatment: ArmCount { n: nt, x: xt },
                    source: Default::default(),
                })
                .collect::<Vec<_>>()
        })
        .prop_filter("shared control", |s| abpower::meta::find_shared_control(s).is_none())
}

pub fn meta_permutation_invariant(studies: Vec<ExperimentSummary>, shuffled: Vec<ExperimentSummary>) -> Check {
    let a = fixed_effect_meta::<f64>(&studies).map_err(fail)?;
    let b = fixed_effect_meta::<f64>(&shuffled).map_err(fail)?;
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-12);
    prop_assert!(close(a.combined_log_rr, b.combined_log_rr), "{} vs {}", a.combined_log_rr, b.combined_log_rr);
    prop_assert!(close(a.combined_se_log, b.combined_se_log));
    prop_assert!(close(a.log10_p_value.get(), b.log10_p_value.get()) || (a.z.abs() < 1e-9));
    for s in &a.per_study {
        let t = b.per_study.iter().find(|t| t.label == s.label).expect("label survives shuffle");
        prop_assert!(close(s.weight_share, t.weight_share));
    }
    Ok(())
}

pub fn small_sim() -> impl Strategy<Value = (SimConfig, usize, usize)> {
    (50u64..2_000, 50u64..2_000, 0.02f64..0.6, -0.3f64..0.5, 1u64..12_000, any::<u64>(), 1usize..9, 1usize..9)
        .prop_map(|(n1, n2, p, lift, replicates, seed, t1, t2)| {
            let cfg = SimConfig {
                n_control: n1,
                n_treatment: n2,
                baseline_rate: p,
                true_rel_lift: lift,
                replicates,
                seed,
                alpha_directional: 0.025,
            };
            (cfg, t1, t2)
        })
}

pub fn simulator_thread_invariant(cfg: SimConfig, t1: usize, t2: usize) -> Check {
    let a = simulate_with_threads(&cfg, t1).map_err(fail)?;
    let b = simulate_with_threads(&cfg, t2).map_err(fail)?;
    prop_assert_eq!(a, b);
    Ok(())
}

/// One randomized simulator-versus-analytic power comparison.
#[derive(Debug, Clone, Copy)]
pub struct AgreementCase {
    pub analytic: f64,
    pub empirical: f64,
    /// `|empirical - analytic|` in binomial standard errors.
    pub deviation_se: f64,
}

pub const AGREEMENT_REPLICATES: u64 = 4_000;

pub fn agreement_case(n: u64, p: f64, snr: f64, seed: u64) -> AgreementCase {
    let se0 = (p * (1.0 - p) * 2.0 / n as f64).sqrt();
    let lift = snr * se0 / p;
    let analytic = power_of(p, lift, 0.025, Tail::Right, n, n).expect("valid design");
    let cfg = SimConfig {
        n_control: n,
        n_treatment: n,
        baseline_rate: p,
        true_rel_lift: lift,
        replicates: AGREEMENT_REPLICATES,
        seed,
        alpha_directional: 0.025,
    };
    let empirical = abpower::simulate(&cfg).expect("valid simulation").empirical_power_right_tail;
    let se = (analytic * (1.0 - analytic) / AGREEMENT_REPLICATES as f64).sqrt();
    AgreementCase { analytic, empirical, deviation_se: (empirical - analytic).abs() / se }
}

pub fn fail(e: abpower::Error) -> TestCaseError {
    TestCaseError::fail(e.to_string())
}
