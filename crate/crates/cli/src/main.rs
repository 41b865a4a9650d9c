use std::fs::File;
use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use abpower::mc_oracle::simulate_with_threads;
use abpower::meta::{fixed_effect_meta, split_independent};
use abpower::power::{
    d33, exaggeration_ratio, false_positive_risk, lehr_sample_size, mde_from_power, mde_from_power_alternative,
    power_two_proportions, sample_size, DesignSpec, Tail, VarianceModel,
};
use abpower::proportions::two_proportion_test;
use abpower::report::fmt;
use abpower::srm::{srm_check, SrmVerdict};
use abpower::{parse_experiments, run_report, ArmCount, ExperimentSummary, ReportOptions, SimConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

const EXIT_OTHER: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_SCHEMA: u8 = 3;
const EXIT_VALIDATION: u8 = 4;
const EXIT_SRM: u8 = 5;

/// Statistics for A/B tests on conversion rates.
#[derive(Parser)]
#[command(name = "abpower", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Two-sided significance level
    #[arg(long, global = true, default_value_t = 0.05)]
    alpha: f64,
    /// Apply the Yates continuity correction (default)
    #[arg(long, global = true, overrides_with = "no_yates")]
    yates: bool,
    /// Skip the Yates continuity correction
    #[arg(long = "no-yates", global = true, overrides_with = "yates")]
    no_yates: bool,
    /// Tail for power, MDE and the directional level
    #[arg(long, global = true, value_enum, default_value_t = TailArg::Two)]
    tail: TailArg,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Seed for simulations
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Replicates for simulations
    #[arg(long, global = true, default_value_t = 100_000)]
    replicates: u64,
    /// Label of the original study (telescope, meta, report)
    #[arg(long, global = true)]
    original: Option<String>,
    /// Two-sided p-value below which a split fails the SRM check
    #[arg(long = "srm-threshold", global = true, default_value_t = abpower::srm::DEFAULT_THRESHOLD)]
    srm_threshold: f64,
}

impl Common {
    fn continuity(&self) -> bool {
        !self.no_yates
    }

    fn tail(&self) -> Tail {
        match self.tail {
            TailArg::Two => Tail::TwoSided,
            TailArg::Right => Tail::Right,
        }
    }

    fn alpha_directional(&self) -> f64 {
        self.tail().directional_alpha(self.alpha)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TailArg {
    Two,
    Right,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Svg,
}

#[derive(Clone, Copy, ValueEnum)]
enum VarianceArg {
    Null,
    Alternative,
}

impl From<VarianceArg> for VarianceModel {
    fn from(v: VarianceArg) -> Self {
        match v {
            VarianceArg::Null => VarianceModel::Null,
            VarianceArg::Alternative => VarianceModel::Alternative,
        }
    }
}

#[derive(Args)]
struct Arms {
    /// Users in control
    #[arg(long)]
    nc: u64,
    /// Users in treatment
    #[arg(long)]
    nt: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Two-proportion chi-square test with a Wald interval
    Proptest {
        #[command(flatten)]
        arms: Arms,
        /// Conversions in control
        #[arg(long)]
        xc: u64,
        /// Conversions in treatment
        #[arg(long)]
        xt: u64,
    },
    /// Sample-ratio-mismatch check
    Srm {
        #[command(flatten)]
        arms: Arms,
        /// Designed share of users in control
        #[arg(long, default_value_t = 0.5)]
        share: f64,
    },
    /// Power of a design to detect a relative MDE
    Power {
        #[command(flatten)]
        arms: Arms,
        /// Baseline conversion rate
        #[arg(long)]
        rate: f64,
        /// Relative MDE, e.g. 0.02 for 2%
        #[arg(long)]
        mde: f64,
        #[arg(long, value_enum, default_value_t = VarianceArg::Null)]
        variance: VarianceArg,
    },
    /// Users per variant for a relative MDE
    Samplesize {
        #[arg(long)]
        rate: f64,
        #[arg(long)]
        mde: f64,
        #[arg(long, default_value_t = 0.8)]
        power: f64,
    },
    /// Relative MDE a design detects with the given power
    Mde {
        #[command(flatten)]
        arms: Arms,
        #[arg(long)]
        rate: f64,
        #[arg(long, default_value_t = 0.8)]
        power: f64,
        #[arg(long, value_enum, default_value_t = VarianceArg::Null)]
        variance: VarianceArg,
    },
    /// Small-telescopes check of replications against the original study
    Telescope {
        /// CSV of experiments, `-` for stdin
        input: PathBuf,
    },
    /// Expected exaggeration of significant estimates
    Exaggeration {
        /// Signal-to-noise ratio; otherwise derived from the design
        #[arg(long, conflicts_with_all = ["rate", "mde", "nc", "nt"])]
        snr: Option<f64>,
        #[arg(long, requires_all = ["mde", "nc", "nt"])]
        rate: Option<f64>,
        #[arg(long)]
        mde: Option<f64>,
        #[arg(long)]
        nc: Option<u64>,
        #[arg(long)]
        nt: Option<u64>,
        /// Confirm with a simulation of the design
        #[arg(long, requires = "rate")]
        simulate: bool,
    },
    /// False positive risk of a significant result
    Fpr {
        #[arg(long)]
        power: f64,
        /// Prior share of ideas with a true effect
        #[arg(long)]
        prior: f64,
    },
    /// Fixed-effect meta-analysis of independent experiments
    Meta {
        /// CSV of experiments, `-` for stdin
        input: PathBuf,
    },
    /// Monte Carlo simulation of a design
    Simulate {
        #[command(flatten)]
        arms: Arms,
        #[arg(long)]
        rate: f64,
        /// True relative lift
        #[arg(long)]
        lift: f64,
        /// Worker threads (default: all cores)
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Full report on a CSV of experiments
    Report {
        /// CSV of experiments, `-` for stdin
        input: PathBuf,
        /// Designed share of users in control
        #[arg(long, default_value_t = 0.5)]
        share: f64,
    },
}

enum Failure {
    Lib(abpower::Error),
    Usage(String),
}

impl From<abpower::Error> for Failure {
    fn from(e: abpower::Error) -> Self {
        Failure::Lib(e)
    }
}

struct Output {
    text: String,
    json: Value,
    svg: Option<String>,
    srm_failed: bool,
}

impl Output {
    fn new(text: String, json: Value) -> Self {
        Self { text, json, svg: None, srm_failed: false }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            let body = match cli.common.format {
                Format::Text => out.text,
                Format::Json => serde_json::to_string_pretty(&out.json).expect("json value serializes") + "\n",
                Format::Svg => match out.svg {
                    Some(svg) => svg,
                    None => {
                        eprintln!("error: --format svg is only available for `report`");
                        return ExitCode::from(EXIT_USAGE);
                    }
                },
            };
            let mut stdout = io::stdout().lock();
            if stdout.write_all(body.as_bytes()).is_err() {
                return ExitCode::from(EXIT_OTHER);
            }
            if out.srm_failed {
                eprintln!("SRM guardrail failed");
                return ExitCode::from(EXIT_SRM);
            }
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.root() {
                abpower::Error::Schema(_) => EXIT_SCHEMA,
                abpower::Error::Validation { .. } => EXIT_VALIDATION,
                _ => EXIT_OTHER,
            })
        }
    }
}

fn run(cli: &Cli) -> Result<Output, Failure> {
    let c = &cli.common;
    match &cli.command {
        Command::Proptest { arms, xc, xt } => proptest(c, arms, *xc, *xt),
        Command::Srm { arms, share } => srm(c, arms, *share),
        Command::Power { arms, rate, mde, variance } => power(c, arms, *rate, *mde, *variance),
        Command::Samplesize { rate, mde, power } => samplesize(c, *rate, *mde, *power),
        Command::Mde { arms, rate, power, variance } => mde(c, arms, *rate, *power, *variance),
        Command::Telescope { input } => telescope(c, input),
        Command::Exaggeration { snr, rate, mde, nc, nt, simulate } => {
            let design = match (rate, mde, nc, nt) {
                (Some(r), Some(m), Some(a), Some(b)) => Some((*r, *m, *a, *b)),
                _ => None,
            };
            exaggeration(c, *snr, design, *simulate)
        }
        Command::Fpr { power, prior } => fpr(c, *power, *prior),
        Command::Meta { input } => meta(c, input),
        Command::Simulate { arms, rate, lift, threads } => simulate(c, arms, *rate, *lift, *threads),
        Command::Report { input, share } => report(c, input, *share),
    }
}

fn read_experiments(path: &PathBuf) -> Result<Vec<ExperimentSummary>, Failure> {
    let mut buf = Vec::new();
    if path.as_os_str() == "-" {
        io::stdin().read_to_end(&mut buf).map_err(abpower::Error::from)?;
    } else {
        File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| abpower::Error::Io(format!("{}: {e}", path.display())))?;
    }
    let rows = parse_experiments(buf.as_slice())?;
    if rows.is_empty() {
        return Err(abpower::Error::Schema("no experiments in input".into()).into());
    }
    Ok(rows)
}

fn to_json<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result serializes")
}

fn proptest(c: &Common, arms: &Arms, xc: u64, xt: u64) -> Result<Output, Failure> {
    let control = ArmCount::new(arms.nc, xc)?;
    let treatment = ArmCount::new(arms.nt, xt)?;
    let r = two_proportion_test::<f64>(control, treatment, c.continuity(), c.alpha)?;
    let lift = r.rel_lift.map_or("n/a".to_string(), fmt::pct);
    let text = format!(
        "control    {xc}/{}  {}\ntreatment  {xt}/{}  {}\ndifference {}  lift {lift}\nchi2 {:.4}{}  p = {}\n{:.0}% CI [{}, {}]\n",
        arms.nc,
        fmt::pct(r.rate_control),
        arms.nt,
        fmt::pct(r.rate_treatment),
        fmt::pct(r.abs_diff),
        r.chi2,
        if r.continuity_used { " (Yates)" } else { "" },
        fmt::p_value(r.p_value, r.log10_p_value),
        100.0 * r.confidence,
        fmt::pct(r.ci_low),
        fmt::pct(r.ci_high),
    );
    let json = json!({ "control": control, "treatment": treatment, "result": to_json(&r) });
    Ok(Output::new(text, json))
}

fn srm(c: &Common, arms: &Arms, share: f64) -> Result<Output, Failure> {
    let r = srm_check(arms.nc, arms.nt, share, c.srm_threshold)?;
    let failed = r.verdict == SrmVerdict::Fail;
    let text = format!(
        "control share {:.4} (expected {share})\nz = {:.3}\np = {} ({:?})\nverdict: {}\n",
        r.observed_share,
        r.z,
        fmt::log10_p(r.log10_p_two_sided),
        r.method,
        if failed { "FAIL" } else { "pass" },
    );
    let mut out = Output::new(text, to_json(&r));
    out.srm_failed = failed;
    Ok(out)
}

fn power(c: &Common, arms: &Arms, rate: f64, mde: f64, variance: VarianceArg) -> Result<Output, Failure> {
    let spec = DesignSpec::new(rate, mde, c.alpha, c.tail(), arms.nc, arms.nt).with_variance(variance.into());
    let r = power_two_proportions(&spec)?;
    let text = format!(
        "power {}\nsnr {:.4}  se {:.6}  alpha' {}\n",
        fmt::pct(r.power.get()),
        r.snr,
        r.se_null,
        r.alpha_directional,
    );
    Ok(Output::new(text, json!({ "design": spec, "result": r })))
}

fn samplesize(c: &Common, rate: f64, mde: f64, power: f64) -> Result<Output, Failure> {
    let lehr = lehr_sample_size(rate, mde)?;
    let general = sample_size(rate, mde, 2.0 * c.alpha_directional(), power)?;
    let text = format!("Lehr (16 sigma^2/delta^2): {lehr} per variant\nexact normal: {general} per variant\n");
    let json = json!({
        "baseline_rate": rate,
        "relative_mde": mde,
        "power": power,
        "alpha_directional": c.alpha_directional(),
        "lehr_per_variant": lehr,
        "per_variant": general,
    });
    Ok(Output::new(text, json))
}

fn mde(c: &Common, arms: &Arms, rate: f64, power: f64, variance: VarianceArg) -> Result<Output, Failure> {
    let a = c.alpha_directional();
    let rel = match variance {
        VarianceArg::Null => mde_from_power(rate, arms.nc, arms.nt, a, power)?,
        VarianceArg::Alternative => mde_from_power_alternative(rate, arms.nc, arms.nt, a, power)?,
    };
    let text = format!("MDE {} relative ({} absolute) at {} power\n", fmt::pct(rel), fmt::pct(rel * rate), fmt::pct(power));
    let json = json!({
        "baseline_rate": rate,
        "n_control": arms.nc,
        "n_treatment": arms.nt,
        "alpha_directional": a,
        "power": power,
        "relative_mde": rel,
        "absolute_mde": rel * rate,
    });
    Ok(Output::new(text, json))
}

fn report_options(c: &Common, share: f64) -> ReportOptions {
    ReportOptions {
        alpha: c.alpha,
        tail: c.tail(),
        original: c.original.clone(),
        srm_threshold: c.srm_threshold,
        expected_control_share: share,
    }
}

fn telescope(c: &Common, input: &PathBuf) -> Result<Output, Failure> {
    let Some(original) = &c.original else {
        return Err(Failure::Usage("telescope needs --original <label>".into()));
    };
    let rows = read_experiments(input)?;
    let orig = rows
        .iter()
        .find(|e| &e.label == original)
        .ok_or_else(|| Failure::Usage(format!("original study `{original}` not in input")))?;
    if rows.len() < 2 {
        return Err(Failure::Usage("telescope needs at least one replication".into()));
    }
    let baseline = orig.control.rate::<f64>();
    let a = c.alpha_directional();
    d33(baseline, orig.control.n, orig.treatment.n, a)?;
    let report = run_report(&rows, &report_options(c, 0.5))?;
    let block = report.telescope.expect("telescope block present with an original and a replication");
    let mut text = format!(
        "original {}: d33 = {} absolute ({} relative), alpha' = {}\n",
        block.original,
        fmt::pct(block.d33),
        fmt::pct(block.d33_relative),
        block.alpha_one_sided
    );
    for e in &block.entries {
        text += &format!(
            "{:<24} diff {:>8}  upper {:>8}  {:?}\n",
            e.label,
            fmt::pct(e.abs_diff),
            fmt::pct(e.upper_bound),
            e.verdict
        );
    }
    Ok(Output::new(text, to_json(&block)))
}

fn exaggeration(
    c: &Common,
    snr: Option<f64>,
    design: Option<(f64, f64, u64, u64)>,
    run_sim: bool,
) -> Result<Output, Failure> {
    let a = c.alpha_directional();
    let snr = match (snr, design) {
        (Some(s), _) => s,
        (None, Some((rate, mde, nc, nt))) => {
            power_two_proportions(&DesignSpec::new(rate, mde, c.alpha, c.tail(), nc, nt))?.snr
        }
        (None, None) => return Err(Failure::Usage("give --snr or --rate, --mde, --nc and --nt".into())),
    };
    let ratio = exaggeration_ratio(snr, a)?;
    let mut text = format!("snr {snr:.5}  alpha' {a}\nexpected exaggeration {ratio:.3}\n");
    let mut json = json!({ "snr": snr, "alpha_directional": a, "exaggeration": ratio });
    if run_sim {
        let (rate, mde, nc, nt) = design.expect("clap requires the design with --simulate");
        let cfg = sim_config(c, nc, nt, rate, mde);
        let sim = abpower::simulate(&cfg)?;
        if let Some(e) = sim.empirical_exaggeration {
            text += &format!("simulated {e:.3} over {} replicates (seed {})\n", cfg.replicates, cfg.seed);
        } else {
            text += "simulated: no significant replicates\n";
        }
        json["simulation"] = to_json(&sim);
    }
    Ok(Output::new(text, json))
}

fn fpr(c: &Common, power: f64, prior: f64) -> Result<Output, Failure> {
    let a = c.alpha_directional();
    let f = false_positive_risk(a, power, prior)?.get();
    let text = format!("false positive risk {}\n", fmt::pct(f));
    let json = json!({ "alpha_directional": a, "power": power, "prior_true_rate": prior, "false_positive_risk": f });
    Ok(Output::new(text, json))
}

fn meta(c: &Common, input: &PathBuf) -> Result<Output, Failure> {
    let rows: Vec<ExperimentSummary> = read_experiments(input)?
        .into_iter()
        .filter(|e| Some(&e.label) != c.original.as_ref())
        .collect();
    let (independent, excluded) = split_independent(&rows);
    let m = fixed_effect_meta::<f64>(&independent)?;
    let mut text = String::new();
    for n in &excluded {
        text += &format!("excluded {} (shares control with {})\n", n.excluded, n.shares_control_with);
    }
    for s in &m.per_study {
        text += &format!("{:<24} lift {:>8}  weight {:>6.1}%\n", s.label, fmt::pct(s.log_rr.exp() - 1.0), 100.0 * s.weight_share);
    }
    text += &format!(
        "combined lift {}  z {:.3}  p = {}\n",
        fmt::pct(m.combined_rel_lift),
        m.z,
        fmt::p_value(m.p_value, m.log10_p_value)
    );
    Ok(Output::new(text, json!({ "excluded": excluded, "result": to_json(&m) })))
}

fn sim_config(c: &Common, nc: u64, nt: u64, rate: f64, lift: f64) -> SimConfig {
    SimConfig {
        n_control: nc,
        n_treatment: nt,
        baseline_rate: rate,
        true_rel_lift: lift,
        replicates: c.replicates,
        seed: c.seed,
        alpha_directional: c.alpha_directional(),
    }
}

fn simulate(c: &Common, arms: &Arms, rate: f64, lift: f64, threads: Option<usize>) -> Result<Output, Failure> {
    let cfg = sim_config(c, arms.nc, arms.nt, rate, lift);
    let r = match threads {
        Some(t) => simulate_with_threads(&cfg, t)?,
        None => abpower::simulate(&cfg)?,
    };
    let opt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    let text = format!(
        "replicates {} (seed {}, {} degenerate)\npower (right tail) {}\nexaggeration {}\nsign error rate {}\nCI coverage {}\n",
        r.replicates,
        cfg.seed,
        r.degenerate,
        fmt::pct(r.empirical_power_right_tail),
        opt(r.empirical_exaggeration),
        opt(r.sign_error_rate),
        fmt::pct(r.ci_coverage),
    );
    Ok(Output::new(text, json!({ "config": cfg, "result": r })))
}

fn report(c: &Common, input: &PathBuf, share: f64) -> Result<Output, Failure> {
    let rows = read_experiments(input)?;
    let r = run_report(&rows, &report_options(c, share))?;
    let srm_failed = !r.srm_failures().is_empty();
    Ok(Output { text: r.to_text(), json: to_json(&r), svg: Some(r.to_svg()), srm_failed })
}
