//! `tailbound`: certified tail bounds, verification sweeps, extreme-value
//! experiments and the Poisson-mixture classifier.
//!
//! Exit codes: 0 ok, 1 certification failure, 2 usage error, 3 domain or
//! window error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use tailbound_core::dist_bounds::{certified_window, lower_bound, upper_bound, BoundTier};
use tailbound_core::dist_model::{DistSpec, Side, WeightVector};
use tailbound_core::engine_upper::MgfSandwich;
use tailbound_core::extremes::{
    bracket_holds, extreme_bracket, extreme_rate, fit_extreme_constants, mc_extreme_mean, ExtremeObservation,
    ExtremeSpec, Regime,
};
use tailbound_core::harness::{
    bisect_quantile_with, default_families, default_tiers, run_grid_with, CertReport, GridOptions, XPolicy,
    DEFAULT_QUANTILES,
};
use tailbound_core::mixture::{classify, derive_classifier, mc_misid, parse_counts, MixtureSpec};
use tailbound_core::oracle::{exact_tail_with, OracleConfig};
use tailbound_core::Error;

const DEFAULT_SEED: u64 = 42;
const DEFAULT_MC_REPS: usize = 1_000_000;

#[derive(Parser, Debug)]
#[command(name = "tailbound", version, about = "Certified two-sided tail bounds")]
struct Cli {
    /// TOML file whose keys mirror the long flags; flags win over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed; falls back to the config file, then TAILBOUND_SEED, then 42.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Upper and lower bounds on one tail.
    Bound(BoundArgs),
    /// Certification sweep over families and quantile depths.
    Verify(VerifyArgs),
    /// Expected maximum of k independent weighted sums.
    Extreme(ExtremeArgs),
    /// Poisson-mixture signal classifier.
    Classify(ClassifyArgs),
    /// Deviation x at which a tail reaches probability q.
    Quantile(QuantileArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum TierArg {
    /// Best certified lower bound (closed forms and numeric certificates).
    Certified,
    /// Closed forms and exact boundary values only.
    Closed,
    /// Rate form `c exp(-C r(x))` with --c and --big-c.
    Rate,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Format {
    Json,
    Csv,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum RegimeArg {
    SubGaussian,
    SubExponential,
}

#[derive(Args, Debug)]
struct BoundArgs {
    /// Distribution as JSON, e.g. '{"family":"gamma","params":{"alpha":2.5}}'.
    #[arg(long)]
    dist: String,
    #[arg(long, value_parser = parse_side)]
    side: Side,
    #[arg(long)]
    x: f64,
    #[arg(long, value_enum)]
    tier: Option<TierArg>,
    /// Rate-form constant c.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Rate-form constant C.
    #[arg(long = "big-c", default_value_t = 1.0)]
    big_c: f64,
    /// Emit JSON instead of text.
    #[arg(long)]
    json: bool,
    #[arg(long)]
    mc_reps: Option<usize>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// `all` or a comma-separated list of family names.
    #[arg(long)]
    families: Option<String>,
    /// Comma-separated tail probabilities.
    #[arg(long, value_delimiter = ',')]
    quantiles: Option<Vec<f64>>,
    /// Comma-separated absolute deviations; replaces the quantile grid.
    #[arg(long, value_delimiter = ',')]
    xs: Option<Vec<f64>>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Draws for Monte Carlo oracles.
    #[arg(long)]
    mc_reps: Option<usize>,
    /// Omit the timestamp from the report.
    #[arg(long)]
    no_timestamp: bool,
    /// Negative control: multiply every lower bound by this factor.
    #[arg(long, hide = true)]
    inject_fault: Option<f64>,
}

#[derive(Args, Debug)]
struct ExtremeArgs {
    /// Per-summand law as JSON.
    #[arg(long)]
    dist: String,
    /// Comma-separated weights u.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    weights: Vec<f64>,
    #[arg(long)]
    k: u64,
    #[arg(long, value_enum, default_value = "sub-gaussian")]
    regime: RegimeArg,
    /// MGF sandwich as JSON; defaults to the family's own bracket.
    #[arg(long)]
    sandwich: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long = "big-c", default_value_t = 1.0)]
    big_c: f64,
    /// Fit (c, C) on these k values and hold out --k.
    #[arg(long, value_delimiter = ',')]
    fit: Option<Vec<u64>>,
    #[arg(long)]
    mc_reps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[arg(long)]
    mu: f64,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    eps: f64,
    /// Counts, one non-negative integer per line; header optional.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Simulate this many items and compare with the exact rate.
    #[arg(long)]
    simulate: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-item flags CSV; defaults next to --out.
    #[arg(long)]
    flags_out: Option<PathBuf>,
    /// Write the flags CSV without a header row.
    #[arg(long)]
    no_header: bool,
}

#[derive(Args, Debug)]
struct QuantileArgs {
    #[arg(long)]
    dist: String,
    #[arg(long, value_parser = parse_side)]
    side: Side,
    #[arg(long)]
    q: f64,
    #[arg(long)]
    mc_reps: Option<usize>,
}

/// Keys accepted in the `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    threads: Option<usize>,
    mc_reps: Option<usize>,
    format: Option<Format>,
    tier: Option<TierArg>,
    families: Option<String>,
    quantiles: Option<Vec<f64>>,
    out: Option<PathBuf>,
}

/// A failed command with its exit code.
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn usage(msg: impl Into<String>) -> Self {
        Self { code: 2, msg: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse(_) => 2,
            _ => 3,
        };
        Self { code, msg: e.to_string() }
    }
}

type CmdResult = Result<u8, Failure>;

fn parse_side(s: &str) -> Result<Side, String> {
    s.parse::<Side>().map_err(|e| e.to_string())
}

fn parse_dist(s: &str) -> Result<DistSpec, Failure> {
    let spec: DistSpec =
        serde_json::from_str(s).map_err(|e| Failure::usage(format!("malformed distribution JSON: {e}")))?;
    spec.validate()?;
    Ok(spec)
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::usage(format!("{}: {e}", path.display()))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| io_err(p, e)),
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}").map_err(|e| Failure::usage(e.to_string()))
        }
    }
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

struct Ctx {
    seed: u64,
    file: FileConfig,
}

impl Ctx {
    fn mc_reps(&self, flag: Option<usize>) -> usize {
        flag.or(self.file.mc_reps).unwrap_or(DEFAULT_MC_REPS)
    }

    fn oracle(&self, mc: Option<usize>) -> OracleConfig {
        OracleConfig { mc_n: self.mc_reps(mc), seed: self.seed, ..OracleConfig::default() }
    }
}

fn cmd_bound(a: BoundArgs, ctx: &Ctx) -> CmdResult {
    let spec = parse_dist(&a.dist)?;
    let tier_arg = a.tier.or(ctx.file.tier).unwrap_or(TierArg::Certified);
    let tier = match tier_arg {
        TierArg::Certified => BoundTier::NumericCertified,
        TierArg::Closed => BoundTier::ClosedFormCertified,
        TierArg::Rate => BoundTier::RateForm { c: a.c, big_c: a.big_c },
    };
    if tier.is_certified() {
        if let Some((hi, cond)) = certified_window(&spec, a.side) {
            if a.x > hi {
                return Err(Failure { code: 3, msg: format!("x = {} is outside the certified window {cond}", a.x) });
            }
        }
    }
    let exact = exact_tail_with(&spec, a.side, a.x, &ctx.oracle(a.mc_reps))?;
    let upper = upper_bound(&spec, a.side, a.x)?;
    let lower = lower_bound(&spec, a.side, a.x, tier)?;
    if a.json {
        let v = json!({ "spec": spec, "side": a.side, "x": a.x, "tier": tier, "exact": exact, "upper": upper, "lower": lower });
        write_out(None, &pretty(&v))?;
    } else {
        let text = format!(
            "{} {} x={}\nexact: {}\nupper: {} ({:?}, {})\nlower: {} ({:?}, {}, certified={})",
            spec.label(),
            a.side.as_str(),
            a.x,
            exact.value,
            upper.value,
            upper.method,
            upper.cite,
            lower.value,
            lower.method,
            lower.cite,
            lower.certified
        );
        write_out(None, &text)?;
    }
    Ok(0)
}

fn select_families(sel: &str) -> Result<Vec<DistSpec>, Failure> {
    let all = default_families();
    if sel.trim() == "all" {
        return Ok(all);
    }
    let mut out = Vec::new();
    for name in sel.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match all.iter().find(|s| s.family() == name) {
            Some(s) => out.push(s.clone()),
            None => return Err(Failure::usage(format!("unknown family {name:?} in --families"))),
        }
    }
    if out.is_empty() {
        return Err(Failure::usage("--families selects nothing"));
    }
    Ok(out)
}

fn report_csv(rep: &CertReport) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header = [
        "family", "spec", "side", "x", "q", "tier", "exact", "exact_lo", "exact_hi", "upper", "upper_method", "lower",
        "lower_method", "pass", "slack_upper", "slack_lower", "skipped",
    ];
    w.write_record(header).map_err(|e| Failure::usage(e.to_string()))?;
    for r in &rep.rows {
        let tier = serde_json::to_value(r.tier).expect("tier")["tier"].as_str().unwrap_or("").to_string();
        let method = |m| serde_json::to_value(m).expect("method").as_str().unwrap_or("").to_string();
        w.write_record([
            r.spec.family().to_string(),
            r.spec.to_json(),
            r.side.as_str().to_string(),
            r.x.to_string(),
            r.q.map(|q| q.to_string()).unwrap_or_default(),
            tier,
            r.exact.value.to_string(),
            r.exact.lo().to_string(),
            r.exact.hi().to_string(),
            r.upper.value.to_string(),
            method(r.upper.method),
            r.lower.value.to_string(),
            method(r.lower.method),
            r.pass.to_string(),
            r.slack_upper.to_string(),
            r.slack_lower.to_string(),
            r.skipped.clone().unwrap_or_default(),
        ])
        .map_err(|e| Failure::usage(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::usage(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("utf8"))
}

fn cmd_verify(a: VerifyArgs, ctx: &Ctx) -> CmdResult {
    let sel = a.families.or(ctx.file.families.clone()).unwrap_or_else(|| "all".into());
    let families = select_families(&sel)?;
    let policy = match a.xs {
        Some(xs) => XPolicy::AbsoluteGrid(xs),
        None => XPolicy::QuantileGrid(
            a.quantiles.or(ctx.file.quantiles.clone()).unwrap_or_else(|| DEFAULT_QUANTILES.to_vec()),
        ),
    };
    let opts = GridOptions {
        mc_n: ctx.mc_reps(a.mc_reps),
        lower_scale: a.inject_fault.unwrap_or(1.0),
        timestamp: !a.no_timestamp,
        ..GridOptions::default()
    };
    let rep = run_grid_with(&families, &policy, &default_tiers(), ctx.seed, &opts)?;
    let text = match a.format.or(ctx.file.format).unwrap_or(Format::Json) {
        Format::Json => rep.to_json(),
        Format::Csv => report_csv(&rep)?,
    };
    let out = a.out.or(ctx.file.out.clone());
    write_out(out.as_deref(), &text)?;
    eprintln!("verify: {} pass, {} fail", rep.summary.n_pass, rep.summary.n_fail);
    Ok(if rep.summary.n_fail == 0 { 0 } else { 1 })
}

fn cmd_extreme(a: ExtremeArgs, ctx: &Ctx) -> CmdResult {
    let base = parse_dist(&a.dist)?;
    let u = WeightVector::new(a.weights.clone())?;
    let sandwich = match &a.sandwich {
        Some(s) => {
            let sw: MgfSandwich =
                serde_json::from_str(s).map_err(|e| Failure::usage(format!("malformed sandwich JSON: {e}")))?;
            sw.validate()?;
            sw
        }
        None => tailbound_core::dist_bounds::family_sandwich(&base, Side::Upper).ok_or_else(|| Failure {
            code: 3,
            msg: format!("no built-in MGF sandwich for {}; pass --sandwich", base.family()),
        })?,
    };
    let regime = match a.regime {
        RegimeArg::SubGaussian => Regime::SubGaussian,
        RegimeArg::SubExponential => Regime::SubExponential,
    };
    let reps = ctx.mc_reps(a.mc_reps);
    let mk = |k: u64| ExtremeSpec { base: base.clone(), u: u.clone(), k, sandwich };
    let spec = mk(a.k);
    let (mut c, mut big_c) = (a.c, a.big_c);
    let mut fit_obs = Vec::new();
    if let Some(ks) = &a.fit {
        for &k in ks {
            let s = mk(k);
            let (mean, se) = mc_extreme_mean(&s, reps, ctx.seed)?;
            fit_obs.push(ExtremeObservation { rate: extreme_rate(&s, regime)?, mean, se });
        }
        (c, big_c) = fit_extreme_constants(&fit_obs)?;
    }
    let bracket = extreme_bracket(&spec, regime, (c, big_c))?;
    let (mean, se) = mc_extreme_mean(&spec, reps, ctx.seed)?;
    let mut v = json!({
        "spec": spec,
        "regime": regime,
        "bracket": bracket,
        "mc": { "mean": mean, "se": se, "reps": reps, "seed": ctx.seed },
    });
    if a.fit.is_some() {
        v["fit"] = json!({
            "observations": fit_obs,
            "holdout_ok": bracket_holds(&bracket, mean, se, 3.0),
            "note": "c and C are fitted to Monte Carlo means; they are empirical, not derived constants",
        });
    }
    write_out(a.out.as_deref(), &pretty(&v))?;
    Ok(0)
}

fn cmd_classify(a: ClassifyArgs, ctx: &Ctx) -> CmdResult {
    if !(a.eps > 0.0 && a.eps < 1.0) {
        return Err(Failure::usage(format!("--eps must lie in (0, 1), got {}", a.eps)));
    }
    let spec = MixtureSpec::new(a.mu, a.lambda, a.eps)?;
    let mut report = derive_classifier(&spec)?;
    if let Some(k) = a.simulate {
        report.mc_misid = Some(mc_misid(&spec, k, ctx.seed)?);
    }
    let out = a.out.or(ctx.file.out.clone());
    write_out(out.as_deref(), &pretty(&report))?;
    if let Some(path) = &a.input {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let counts = parse_counts(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        let flags = classify(&spec, &counts);
        let mut w = csv::Writer::from_writer(Vec::new());
        if !a.no_header {
            w.write_record(["index", "count", "signal"]).map_err(|e| Failure::usage(e.to_string()))?;
        }
        for (i, (c, f)) in counts.iter().zip(&flags).enumerate() {
            w.write_record([i.to_string(), c.to_string(), u8::from(*f).to_string()])
                .map_err(|e| Failure::usage(e.to_string()))?;
        }
        let csv_text = String::from_utf8(w.into_inner().map_err(|e| Failure::usage(e.to_string()))?).expect("utf8");
        let flags_path = a.flags_out.or_else(|| {
            out.as_ref().map(|o| {
                let stem = o.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                o.with_file_name(format!("{stem}_flags.csv"))
            })
        });
        match flags_path {
            Some(p) => fs::write(&p, csv_text).map_err(|e| io_err(&p, e))?,
            None => print!("{csv_text}"),
        }
    }
    Ok(0)
}

fn cmd_quantile(a: QuantileArgs, ctx: &Ctx) -> CmdResult {
    let spec = parse_dist(&a.dist)?;
    if !(a.q > 0.0 && a.q < 1.0) {
        return Err(Failure::usage(format!("--q must lie in (0, 1), got {}", a.q)));
    }
    let p = bisect_quantile_with(&spec, a.side, a.q, &ctx.oracle(a.mc_reps))?;
    write_out(None, &pretty(&json!({ "spec": spec, "side": a.side, "q": a.q, "result": p })))?;
    Ok(0)
}

fn run(cli: Cli) -> CmdResult {
    let file = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            toml::from_str::<FileConfig>(&text).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?
        }
        None => FileConfig::default(),
    };
    let env_seed = match std::env::var("TAILBOUND_SEED") {
        Ok(s) => Some(s.trim().parse::<u64>().map_err(|_| Failure::usage(format!("TAILBOUND_SEED is not an integer: {s:?}")))?),
        Err(_) => None,
    };
    let seed = cli.seed.or(file.seed).or(env_seed).unwrap_or(DEFAULT_SEED);
    if let Some(n) = cli.threads.or(file.threads) {
        if n == 0 {
            return Err(Failure::usage("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    let ctx = Ctx { seed, file };
    match cli.command {
        Command::Bound(a) => cmd_bound(a, &ctx),
        Command::Verify(a) => cmd_verify(a, &ctx),
        Command::Extreme(a) => cmd_extreme(a, &ctx),
        Command::Classify(a) => cmd_classify(a, &ctx),
        Command::Quantile(a) => cmd_quantile(a, &ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
