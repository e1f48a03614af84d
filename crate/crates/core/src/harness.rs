//! Certification sweeps: every (family, side, x, tier) row checks
//! `lower <= tail <= upper` against the oracle and is reported as JSON.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bound_result::BoundResult;
use crate::dist_bounds::{lower_bound, upper_bound, BoundTier};
use crate::dist_model::{DistSpec, Side};
use crate::error::{domain, Error, Result};
use crate::oracle::{cached_sorted_sample, exact_tail_with, OracleConfig, TailEstimate};
use crate::rng;

/// Absolute slack allowed on both inequalities.
pub const PASS_TOL: f64 = 1e-10;

pub const DEFAULT_QUANTILES: [f64; 8] = [0.5, 0.25, 0.1, 0.05, 0.01, 1e-3, 1e-5, 1e-8];

const ORACLE_TAG: u64 = 0x6f72_6163;

pub fn default_families() -> Vec<DistSpec> {
    vec![
        DistSpec::Gamma { alpha: 2.5 },
        DistSpec::ChiSq { k: 5 },
        DistSpec::WeightedChiSq { weights: vec![1.0, 0.5, 0.25, 2.0] },
        DistSpec::NoncentralChiSq { k: 3, lambda: 2.0 },
        DistSpec::Beta { alpha: 2.0, beta: 5.0 },
        DistSpec::Binomial { k: 50, p: 0.3 },
        DistSpec::Poisson { lambda: 4.0 },
        DistSpec::IrwinHall { k: 8 },
        DistSpec::RademacherSum { k: 20 },
    ]
}

pub fn default_tiers() -> Vec<BoundTier> {
    vec![BoundTier::ClosedFormCertified, BoundTier::NumericCertified]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum XPolicy {
    QuantileGrid(Vec<f64>),
    AbsoluteGrid(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertRow {
    pub spec: DistSpec,
    pub side: Side,
    pub x: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    pub tier: BoundTier,
    pub exact: TailEstimate,
    pub upper: BoundResult,
    pub lower: BoundResult,
    pub pass: bool,
    pub slack_upper: f64,
    pub slack_lower: f64,
    /// Why the lower bound was not evaluated (window or unsupported tier).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    /// Set when the requested quantile was unattainable and `x` is a boundary value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantile_flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertSummary {
    pub n_pass: usize,
    pub n_fail: usize,
    pub families: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertReport {
    pub rows: Vec<CertRow>,
    pub summary: CertSummary,
    pub seed: u64,
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl CertReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn without_timestamp(&self) -> Self {
        Self { timestamp: None, ..self.clone() }
    }
}

/// Sweep settings beyond the grid itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptions {
    pub mc_n: usize,
    pub confidence: f64,
    /// Multiplies every lower bound; 1 except in negative-control runs.
    pub lower_scale: f64,
    pub timestamp: bool,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self { mc_n: 1_000_000, confidence: 0.99, lower_scale: 1.0, timestamp: true }
    }
}

/// A deviation for a target tail probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantilePoint {
    pub x: f64,
    pub tail: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<String>,
}

fn oracle_cfg(seed: u64, opts: &GridOptions) -> OracleConfig {
    OracleConfig { mc_n: opts.mc_n, seed: rng::derive_seed(seed, ORACLE_TAG), confidence: opts.confidence }
}

/// `x` with tail `q` for continuous families (to `1e-9` relative); for
/// lattice and Monte Carlo tails, `inf { x >= 0 : tail(x) <= q }`.
pub fn bisect_quantile(spec: &DistSpec, side: Side, q: f64) -> Result<QuantilePoint> {
    bisect_quantile_with(spec, side, q, &OracleConfig::default())
}

pub fn bisect_quantile_with(spec: &DistSpec, side: Side, q: f64, cfg: &OracleConfig) -> Result<QuantilePoint> {
    spec.validate()?;
    if !(q > 0.0 && q < 1.0) {
        return domain(format!("quantile level must lie in (0, 1), got {q}"));
    }
    let tail = |x: f64| exact_tail_with(spec, side, x, cfg).map(|t| t.value);
    if let Some(lat) = spec.lattice() {
        let t0 = tail(0.0)?;
        if t0 <= q {
            return Ok(QuantilePoint { x: 0.0, tail: t0, flag: None });
        }
        // On (point(j - 1), point(j)] the tail is constant, so the infimum is
        // the attained point just before the first index whose tail is <= q.
        let (point, step): (Box<dyn Fn(i64) -> f64>, i64) = match side {
            Side::Upper => (Box::new(move |j| lat.upper_point(j)), 1),
            Side::Lower => (Box::new(move |j| lat.lower_point(j)), -1),
        };
        let mut j = match side {
            Side::Upper => lat.upper_index(0.0),
            Side::Lower => lat.lower_index(0.0),
        };
        loop {
            j += step;
            if tail(point(j))? <= q {
                let x = point(j - step).max(0.0);
                return Ok(QuantilePoint { x, tail: tail(x)?, flag: None });
            }
        }
    }
    if matches!(spec, DistSpec::WeightedChiSq { .. }) {
        let xs = cached_sorted_sample(spec, cfg.seed, cfg.mc_n)?;
        let n = xs.len();
        let need = (q * n as f64).floor() as usize;
        let (x, flag) = if need == 0 {
            let edge = match side {
                Side::Upper => xs[n - 1],
                Side::Lower => -xs[0],
            };
            (edge.max(0.0), Some(format!("q below Monte Carlo resolution 1/{n}; x is the sample extreme")))
        } else {
            // The need-th most extreme draw: tail(x) > q just below it, <= q just above it.
            let v = match side {
                Side::Upper => xs[n - need],
                Side::Lower => -xs[need - 1],
            };
            (v.max(0.0), None)
        };
        return Ok(QuantilePoint { x, tail: tail(x)?, flag });
    }
    let t0 = tail(0.0)?;
    if t0 <= q {
        return Ok(QuantilePoint {
            x: 0.0,
            tail: t0,
            flag: (t0 < q).then(|| format!("tail at x = 0 is {t0}, already below q")),
        });
    }
    let cap = spec.max_deviation(side);
    let mut hi = spec.variance().sqrt().max(1e-3);
    while tail(hi.min(cap))? > q {
        if hi >= cap {
            return Ok(QuantilePoint {
                x: cap,
                tail: tail(cap)?,
                flag: Some(format!("q unattainable; x is the support boundary {cap}")),
            });
        }
        hi *= 2.0;
    }
    let mut hi = hi.min(cap);
    let mut lo = 0.0;
    let lq = q.ln();
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let lt = exact_tail_with(spec, side, mid, cfg)?.log_value;
        if (lt - lq).abs() <= 1e-10 {
            return Ok(QuantilePoint { x: mid, tail: lt.exp(), flag: None });
        }
        if lt > lq {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    Ok(QuantilePoint { x: hi, tail: tail(hi)?, flag: None })
}

fn evaluate_row(
    spec: &DistSpec,
    side: Side,
    x: f64,
    q: Option<f64>,
    flag: Option<String>,
    tier: BoundTier,
    cfg: &OracleConfig,
    opts: &GridOptions,
) -> Result<CertRow> {
    let exact = exact_tail_with(spec, side, x, cfg)?;
    let upper = upper_bound(spec, side, x)?;
    let (mut lower, skipped) = match lower_bound(spec, side, x, tier) {
        Ok(r) => (r, None),
        Err(e @ (Error::Window(_) | Error::Unsupported(_) | Error::Precondition(_))) => {
            (BoundResult::none("skipped"), Some(e.to_string()))
        }
        Err(e) => return Err(e),
    };
    if opts.lower_scale != 1.0 && lower.value > 0.0 {
        lower.value *= opts.lower_scale;
        lower.log_value += opts.lower_scale.ln();
    }
    let lower_ok = !tier.is_certified() || lower.value <= exact.hi() + PASS_TOL;
    let upper_ok = upper.value >= exact.lo() - PASS_TOL;
    Ok(CertRow {
        spec: spec.clone(),
        side,
        x,
        q,
        tier,
        slack_upper: upper.value - exact.value,
        slack_lower: exact.value - lower.value,
        exact,
        upper,
        lower,
        pass: lower_ok && upper_ok,
        skipped,
        quantile_flag: flag,
    })
}

pub fn run_grid(families: &[DistSpec], policy: &XPolicy, tiers: &[BoundTier], seed: u64) -> Result<CertReport> {
    run_grid_with(families, policy, tiers, seed, &GridOptions::default())
}

/// Evaluates every row in parallel; rows come out in (family, side, x, tier)
/// order regardless of scheduling.
pub fn run_grid_with(
    families: &[DistSpec],
    policy: &XPolicy,
    tiers: &[BoundTier],
    seed: u64,
    opts: &GridOptions,
) -> Result<CertReport> {
    let xs_len = match policy {
        XPolicy::QuantileGrid(v) | XPolicy::AbsoluteGrid(v) => v.len(),
    };
    if families.is_empty() || tiers.is_empty() || xs_len == 0 {
        return domain("families, tiers and the x grid must be nonempty");
    }
    let cfg = oracle_cfg(seed, opts);
    let mut points: Vec<(usize, Side, f64, Option<f64>, Option<String>)> = Vec::new();
    for (fi, spec) in families.iter().enumerate() {
        spec.validate()?;
        for side in Side::both() {
            match policy {
                XPolicy::AbsoluteGrid(v) => points.extend(v.iter().map(|&x| (fi, side, x, None, None))),
                XPolicy::QuantileGrid(v) => {
                    let qs: Vec<QuantilePoint> = v
                        .par_iter()
                        .map(|&q| bisect_quantile_with(spec, side, q, &cfg))
                        .collect::<Result<_>>()?;
                    points.extend(v.iter().zip(qs).map(|(&q, p)| (fi, side, p.x, Some(q), p.flag)));
                }
            }
        }
    }
    let jobs: Vec<(usize, Side, f64, Option<f64>, Option<String>, BoundTier)> = points
        .into_iter()
        .flat_map(|(fi, side, x, q, f)| tiers.iter().map(move |&t| (fi, side, x, q, f.clone(), t)))
        .collect();
    let rows: Vec<CertRow> = jobs
        .into_par_iter()
        .map(|(fi, side, x, q, f, tier)| evaluate_row(&families[fi], side, x, q, f, tier, &cfg, opts))
        .collect::<Result<_>>()?;
    let n_pass = rows.iter().filter(|r| r.pass).count();
    let mut fams: Vec<String> = Vec::new();
    for s in families {
        let f = s.family().to_string();
        if !fams.contains(&f) {
            fams.push(f);
        }
    }
    Ok(CertReport {
        summary: CertSummary { n_pass, n_fail: rows.len() - n_pass, families: fams },
        rows,
        seed,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: opts.timestamp.then(|| chrono::Utc::now().to_rfc3339()),
    })
}
