//! Acceptance criteria 1-12. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use abpower::mc_oracle::simulate;
use abpower::power::{
    exaggeration_ratio, expected_z_at_power, false_positive_risk, lehr_sample_size, power_two_proportions,
    DesignSpec, Tail,
};
use abpower::proportions::{test_experiment, treatment_count_from_lift, two_proportion_test};
use abpower::report::fmt;
use abpower::srm::{srm_check, SrmVerdict};
use abpower::{parse_experiments, run_report, ArmCount, ExperimentSummary, ReportOptions, SimConfig};
use common::*;
use proptest::strategy::Strategy;
use proptest::test_runner::TestRunner;
use rand::{Rng, SeedableRng};

type Outcome = std::result::Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

const REPLICATIONS: &str = "\
label,n_control,rate_control,n_treatment,rate_treatment,lift
SeaWorld,1448041,47.13%,1448066,47.21%,0.16%
Obs-BYGG,1126132,5.43%,1124100,5.45%,0.29%
Obs-BYGG (SR),1126132,5.43%,1124002,5.46%,0.54%
Obs,977499,10.07%,976653,10.14%,0.73%
Obs (SR),977499,10.07%,976966,10.14%,0.722%
";

const EVIDOO: &str = "\
label,n_control,rate_control,n_treatment,rate_treatment,lift
Client 1,84120,12.3%,84336,12.4%,0.68%
Client 2,83126,12.2%,83041,12.2%,0.07%
";

const BAC: (f64, u64, u64) = (0.0719, 445, 474);
const SEAWORLD: (f64, u64, u64) = (0.4713, 1_448_041, 1_448_066);
const OBS: (f64, u64, u64) = (0.1007, 977_499, 976_653);
const OBS_BYGG: (f64, u64, u64) = (0.0543, 1_126_132, 1_124_100);

fn bac() -> ExperimentSummary {
    ExperimentSummary::new("BAC", ArmCount::new(445, 32).unwrap(), ArmCount::new(474, 53).unwrap()).unwrap()
}

/// Drops the lift column so counts come from the printed rates alone.
fn without_lift(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head))
        .collect::<Vec<_>>()
        .join("\n")
}

fn within(name: &str, got: f64, want: f64, tol: f64) -> std::result::Result<(), String> {
    if (got - want).abs() <= tol {
        Ok(())
    } else {
        Err(format!("{name}: got {got:.6}, want {want} +/- {tol}"))
    }
}

fn in_range(name: &str, got: f64, lo: f64, hi: f64) -> std::result::Result<(), String> {
    if (lo..=hi).contains(&got) {
        Ok(())
    } else {
        Err(format!("{name}: got {got:.6}, want [{lo}, {hi}]"))
    }
}

fn power_right(design: (f64, u64, u64), mde: f64) -> f64 {
    let (p, n1, n2) = design;
    power_two_proportions(&DesignSpec::new(p, mde, 0.025, Tail::Right, n1, n2)).unwrap().power.get()
}

fn criterion_1() -> Outcome {
    let (c, t) = (ArmCount::new(445, 32).unwrap(), ArmCount::new(474, 53).unwrap());
    let raw = two_proportion_test::<f64>(c, t, false, 0.05).map_err(|e| e.to_string())?;
    let yates = two_proportion_test::<f64>(c, t, true, 0.05).map_err(|e| e.to_string())?;
    within("uncorrected p", raw.p_value.get(), 0.037, 0.001)?;
    within("uncorrected ci_low", raw.ci_low, 0.0027, 0.0002)?;
    within("uncorrected ci_high", raw.ci_high, 0.0771, 0.0002)?;
    within("corrected p", yates.p_value.get(), 0.049, 0.001)?;
    within("corrected ci_low", yates.ci_low, 0.0006, 0.0002)?;
    within("corrected ci_high", yates.ci_high, 0.0792, 0.0002)?;
    Ok(format!(
        "uncorrected p={:.4} CI [{}, {}]; corrected p={:.4} CI [{}, {}]",
        raw.p_value.get(),
        fmt::pct(raw.ci_low),
        fmt::pct(raw.ci_high),
        yates.p_value.get(),
        fmt::pct(yates.ci_low),
        fmt::pct(yates.ci_high)
    ))
}

fn lift_and_p(exp: &ExperimentSummary) -> (f64, f64) {
    let r = test_experiment::<f64>(exp, false, 0.05).unwrap();
    (r.rel_lift.unwrap(), r.p_value.get())
}

fn criterion_2() -> Outcome {
    let rows = parse_experiments(REPLICATIONS.as_bytes()).map_err(|e| e.to_string())?;
    let printed = [("BAC", 0.5549, 0.037), ("SeaWorld", 0.0016, 0.20), ("Obs-BYGG", 0.0029, 0.60), ("Obs", 0.0073, 0.09)];
    let mut all = vec![bac()];
    all.extend(rows);
    let mut detail = Vec::new();
    for (label, lift, p) in printed {
        let exp = all.iter().find(|e| e.label == label).ok_or(format!("missing {label}"))?;
        let (got_lift, got_p) = lift_and_p(exp);
        within(&format!("{label} lift"), got_lift, lift, 0.0005)?;
        within(&format!("{label} p"), got_p, p, 0.03)?;
        detail.push(format!("{label} {}/{got_p:.3}", fmt::pct(got_lift)));
    }
    let nearest = parse_experiments(without_lift(REPLICATIONS).as_bytes()).map_err(|e| e.to_string())?;
    let info: Vec<String> = nearest
        .iter()
        .filter(|e| !e.label.contains("(SR)"))
        .map(|e| {
            let (l, p) = lift_and_p(e);
            format!("{} {}/{p:.3}", e.label, fmt::pct(l))
        })
        .collect();
    Ok(format!("{} [rates only: {}]", detail.join(", "), info.join(", ")))
}

fn criterion_3() -> Outcome {
    let r = srm_check(65_495, 83_331, 0.5f64, 1e-4).map_err(|e| e.to_string())?;
    in_range("|z|", r.z.abs(), 45.5, 46.8)?;
    in_range("log10 p", r.log10_p_two_sided.get(), -470.0, -455.0)?;
    if r.verdict != SrmVerdict::Fail {
        return Err("verdict is not fail".into());
    }
    Ok(format!("z={:.3} log10 p={:.2} ({:?}) verdict fail", r.z, r.log10_p_two_sided.get(), r.method))
}

fn criterion_4() -> Outcome {
    let n2 = lehr_sample_size(0.0719f64, 0.02).map_err(|e| e.to_string())?;
    let n5 = lehr_sample_size(0.0719f64, 0.05).map_err(|e| e.to_string())?;
    let n10 = lehr_sample_size(0.0719f64, 0.10).map_err(|e| e.to_string())?;
    within("n at 2%", n2 as f64 / 520_735.0, 1.0, 0.01)?;
    if n5 <= 80_000 || n10 <= 20_000 {
        return Err(format!("n at 5% = {n5}, n at 10% = {n10}"));
    }
    Ok(format!("2%: {n2}, 5%: {n5}, 10%: {n10}"))
}

fn matches_as_set(got: [f64; 2], want: [f64; 2], tol: f64) -> bool {
    let direct = (got[0] - want[0]).abs() <= tol && (got[1] - want[1]).abs() <= tol;
    let swapped = (got[0] - want[1]).abs() <= tol && (got[1] - want[0]).abs() <= tol;
    direct || swapped
}

fn criterion_5() -> Outcome {
    let bac2 = power_right(BAC, 0.02);
    let sea2 = power_right(SEAWORLD, 0.02);
    let sea021 = power_right(SEAWORLD, 0.0021);
    within("BAC 2%", bac2, 0.030, 0.002)?;
    within("SeaWorld 2%", sea2, 1.0, 0.005)?;
    within("SeaWorld 0.21%", sea021, 0.392, 0.005)?;
    let coop2 = [power_right(OBS, 0.02), power_right(OBS_BYGG, 0.02)];
    let coop021 = [power_right(OBS, 0.0021), power_right(OBS_BYGG, 0.0021)];
    if !matches_as_set(coop2, [0.949, 0.997], 0.005) {
        return Err(format!("Coop 2% powers {coop2:?}"));
    }
    if !matches_as_set(coop021, [0.057, 0.071], 0.005) {
        return Err(format!("Coop 0.21% powers {coop021:?}"));
    }
    Ok(format!(
        "BAC {}, SeaWorld {} / {}, Obs {} / {}, Obs-BYGG {} / {}",
        fmt::pct(bac2),
        fmt::pct(sea2),
        fmt::pct(sea021),
        fmt::pct(coop2[0]),
        fmt::pct(coop021[0]),
        fmt::pct(coop2[1]),
        fmt::pct(coop021[1])
    ))
}

fn criterion_6() -> Outcome {
    let mut all = vec![bac()];
    all.extend(parse_experiments(REPLICATIONS.as_bytes()).map_err(|e| e.to_string())?);
    let options = ReportOptions { original: Some("BAC".into()), ..ReportOptions::default() };
    let report = run_report(&all, &options).map_err(|e| e.to_string())?;
    let meta = report.meta.ok_or("no meta-analysis in report")?;
    if meta.studies != ["SeaWorld", "Obs-BYGG", "Obs"] {
        return Err(format!("pooled studies {:?}", meta.studies));
    }
    let m = &meta.result;
    within("combined lift", m.combined_rel_lift, 0.0021, 0.0003)?;
    within("combined p", m.p_value.get(), 0.08, 0.02)?;
    let sea_share = m.per_study[0].weight_share;
    in_range("SeaWorld weight share", sea_share, 0.85, 1.0)?;
    Ok(format!(
        "lift {} p={:.4} SeaWorld share {:.3}; excluded {}",
        fmt::pct(m.combined_rel_lift),
        m.p_value.get(),
        sea_share,
        meta.excluded.iter().map(|n| n.excluded.as_str()).collect::<Vec<_>>().join(", ")
    ))
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let (p, n1, n2) = BAC;
    let mut detail = Vec::new();
    for (i, (mde, lo, hi)) in [(0.02, 26.0, 30.0), (0.0021, 200.0, f64::INFINITY)].into_iter().enumerate() {
        let snr = power_two_proportions(&DesignSpec::new(p, mde, 0.025, Tail::Right, n1, n2)).unwrap().snr;
        let analytic = exaggeration_ratio(snr, 0.025).map_err(|e| e.to_string())?;
        in_range(&format!("ratio at {mde}"), analytic, lo, hi)?;
        let cfg = SimConfig {
            n_control: n1,
            n_treatment: n2,
            baseline_rate: p,
            true_rel_lift: mde,
            replicates: 1_000_000,
            seed: 7 + i as u64,
            alpha_directional: 0.025,
        };
        let sim = simulate(&cfg).map_err(|e| e.to_string())?;
        let empirical = sim.empirical_exaggeration.ok_or("no significant replicates")?;
        within(&format!("simulated/analytic at {mde}"), empirical / analytic, 1.0, 0.02)?;
        detail.push(format!("{}: {analytic:.2} (sim {empirical:.2})", fmt::pct(mde)));
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 60.0 {
        return Err(format!("simulation took {secs:.1}s"));
    }
    Ok(format!("{} in {secs:.1}s", detail.join(", ")))
}

fn criterion_8() -> Outcome {
    let (z, p) = expected_z_at_power(0.8f64, 0.025).map_err(|e| e.to_string())?;
    in_range("z", z, 2.79, 2.81)?;
    in_range("p", p.get(), 0.0048, 0.0054)?;
    Ok(format!("z={z:.4} p={:.5}", p.get()))
}

fn criterion_9() -> Outcome {
    let f = false_positive_risk(0.025f64, 0.80, 0.10).map_err(|e| e.to_string())?.get();
    in_range("FPR", f, 0.21, 0.23)?;
    Ok(format!("FPR={f:.4}"))
}

fn criterion_10() -> Outcome {
    let rows = parse_experiments(EVIDOO.as_bytes()).map_err(|e| e.to_string())?;
    let mut detail = Vec::new();
    for (exp, want) in rows.iter().zip([0.60, 0.96]) {
        let (_, p) = lift_and_p(exp);
        within(&format!("{} p", exp.label), p, want, 0.05)?;
        detail.push(format!("{} p={p:.3}", exp.label));
    }
    let client = (0.123, 84_120, 84_336);
    let p5 = power_right(client, 0.05);
    let p2 = power_right(client, 0.02);
    within("power at 5%", p5, 0.97, 0.01)?;
    within("power at 2%", p2, 0.33, 0.02)?;
    let nearest = parse_experiments(without_lift(EVIDOO).as_bytes()).map_err(|e| e.to_string())?;
    let info: Vec<String> = nearest.iter().map(|e| format!("{} p={:.3}", e.label, lift_and_p(e).1)).collect();
    Ok(format!(
        "{}; power 5% {} 2% {} [rates only: {}]",
        detail.join(", "),
        fmt::pct(p5),
        fmt::pct(p2),
        info.join(", ")
    ))
}

fn criterion_11() -> Outcome {
    let (p, n1, n2) = SEAWORLD;
    let control = ArmCount::new(n1, (p * n1 as f64).round() as u64).unwrap();
    let xt = treatment_count_from_lift(n2, control, 0.5549f64).map_err(|e| e.to_string())?;
    let treatment = ArmCount::new(n2, xt).unwrap();
    let r = two_proportion_test::<f64>(control, treatment, true, 0.05).map_err(|e| e.to_string())?;
    let log10_p = r.log10_p_value.get();
    if log10_p.is_nan() || log10_p >= -15.65 {
        return Err(format!("log10 p = {log10_p}"));
    }
    Ok(format!("p = {} (chi2 {:.0})", fmt::p_value(r.p_value, r.log10_p_value), r.chi2))
}

fn run_property<S: Strategy>(
    name: &str,
    strategy: S,
    check: impl Fn(S::Value) -> Check,
) -> std::result::Result<(), String> {
    let mut runner = TestRunner::new(config());
    runner.run(&strategy, check).map_err(|e| format!("{name}: {e}"))
}

fn criterion_12() -> Outcome {
    run_property("quantile round-trip", probability(), quantile_round_trip)?;
    run_property("z round-trip", -37.0f64..37.0, z_round_trip)?;
    run_property("arm-swap", (table(100_000), proptest::bool::ANY), |((c, t), k)| {
        arm_swap_antisymmetry(c, t, k)
    })?;
    run_property("continuity p-inflation", table(100_000), |(c, t)| continuity_inflates_p(c, t))?;
    run_property("power monotonicity", (design(), 0.001f64..3.0), |(d, b)| power_monotone(d, b))?;
    run_property(
        "MDE round-trip",
        (0.001f64..0.9, 100u64..10_000_000, 100u64..10_000_000, 0.001f64..0.2, 0.01f64..0.999),
        |(p, n1, n2, a, t)| mde_round_trip(p, n1, n2, a, t),
    )?;
    run_property(
        "meta permutation",
        independent_studies().prop_flat_map(|s| (proptest::strategy::Just(s.clone()), proptest::strategy::Just(s).prop_shuffle())),
        |(a, b)| meta_permutation_invariant(a, b),
    )?;
    run_property("simulator thread count", small_sim(), |(cfg, t1, t2)| simulator_thread_invariant(cfg, t1, t2))?;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for i in 0..CASES as u64 {
        let n = 10f64.powf(rng.random_range(5.3..7.3)) as u64;
        let p = rng.random_range(0.02..0.5);
        let snr = rng.random_range(0.0..4.5);
        let case = agreement_case(n, p, snr, i);
        if case.deviation_se > 3.0 {
            return Err(format!("simulator/analytic: n {n} p {p} snr {snr}: {case:?}"));
        }
        worst = worst.max(case.deviation_se);
    }
    Ok(format!("8 properties x {CASES} cases; simulator/analytic worst deviation {worst:.2} SE over {CASES} designs"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 12] = [
        (1, "two-proportion test and intervals", criterion_1),
        (2, "lifts and p-values from published rates", criterion_2),
        (3, "sample ratio mismatch", criterion_3),
        (4, "Lehr sample sizes", criterion_4),
        (5, "power grid at alpha' = 2.5%", criterion_5),
        (6, "fixed-effect meta-analysis", criterion_6),
        (7, "exaggeration ratio and simulator", criterion_7),
        (8, "expected z at 80% power", criterion_8),
        (9, "false positive risk", criterion_9),
        (10, "client replications", criterion_10),
        (11, "large true effect", criterion_11),
        (12, "property suites", criterion_12),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        match run() {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 12 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
