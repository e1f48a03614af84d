//! Distribution families in centered form and their log-moment generating functions.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng;
use crate::specfun::{ln_add_exp, log_gamma, RealInterval};

/// Which tail a query concerns: `Upper` is `P(X >= x)`, `Lower` is `P(X <= -x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Upper,
    Lower,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Upper => "upper",
            Side::Lower => "lower",
        }
    }

    pub fn both() -> [Side; 2] {
        [Side::Upper, Side::Lower]
    }
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upper" => Ok(Side::Upper),
            "lower" => Ok(Side::Lower),
            other => Err(Error::Parse(format!("side must be \"upper\" or \"lower\", got {other:?}"))),
        }
    }
}

/// A non-negative weight vector with cached norms. Serializes as a plain
/// array and is re-validated on the way in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightVector {
    weights: Vec<f64>,
    l2_sq: f64,
    linf: f64,
    sum: f64,
}

impl TryFrom<Vec<f64>> for WeightVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<WeightVector> for Vec<f64> {
    fn from(w: WeightVector) -> Self {
        w.weights
    }
}

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return domain("weight vector must be non-empty");
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return domain(format!("weights must be finite and non-negative, got {w}"));
        }
        let linf = weights.iter().cloned().fold(0.0, f64::max);
        if linf <= 0.0 {
            return domain("weight vector must have a positive entry");
        }
        let l2_sq = weights.iter().map(|w| w * w).sum();
        let sum = weights.iter().sum();
        Ok(Self { weights, l2_sq, linf, sum })
    }

    pub fn ones(n: usize) -> Self {
        Self::new(vec![1.0; n.max(1)]).expect("ones are valid weights")
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn l2_sq(&self) -> f64 {
        self.l2_sq
    }

    pub fn l2(&self) -> f64 {
        self.l2_sq.sqrt()
    }

    pub fn linf(&self) -> f64 {
        self.linf
    }

    pub fn sum(&self) -> f64 {
        self.sum
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// A distribution family with its parameters. The modelled variable is always
/// `X = Y - E[Y]`.
///
/// JSON form: `{"family": "...", "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", deny_unknown_fields)]
pub enum DistSpec {
    #[serde(rename = "gamma")]
    Gamma { alpha: f64 },
    #[serde(rename = "chisq")]
    ChiSq { k: u64 },
    #[serde(rename = "weighted_chisq")]
    WeightedChiSq { weights: Vec<f64> },
    #[serde(rename = "noncentral_chisq")]
    NoncentralChiSq { k: u64, lambda: f64 },
    #[serde(rename = "beta")]
    Beta { alpha: f64, beta: f64 },
    #[serde(rename = "binomial")]
    Binomial { k: u64, p: f64 },
    #[serde(rename = "poisson")]
    Poisson { lambda: f64 },
    #[serde(rename = "irwin_hall")]
    IrwinHall { k: u64 },
    #[serde(rename = "rademacher_sum")]
    RademacherSum { k: u64 },
    #[serde(rename = "normal")]
    Normal { sigma2: f64 },
}

/// The family names accepted in the `family` field.
pub const FAMILY_NAMES: [&str; 10] = [
    "gamma",
    "chisq",
    "weighted_chisq",
    "noncentral_chisq",
    "beta",
    "binomial",
    "poisson",
    "irwin_hall",
    "rademacher_sum",
    "normal",
];

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        domain(format!("{name} must be finite and > 0, got {v}"))
    }
}

fn at_least_one(name: &str, k: u64) -> Result<()> {
    if k >= 1 {
        Ok(())
    } else {
        domain(format!("{name} must be >= 1, got {k}"))
    }
}

impl DistSpec {
    /// Parses and validates the JSON form.
    pub fn from_json(s: &str) -> Result<Self> {
        let spec: DistSpec = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DistSpec::Gamma { alpha } => positive("alpha", *alpha),
            DistSpec::ChiSq { k } => at_least_one("k", *k),
            DistSpec::WeightedChiSq { weights } => WeightVector::new(weights.clone()).map(|_| ()),
            DistSpec::NoncentralChiSq { k, lambda } => {
                at_least_one("k", *k)?;
                if *lambda >= 0.0 && lambda.is_finite() {
                    Ok(())
                } else {
                    domain(format!("lambda must be finite and >= 0, got {lambda}"))
                }
            }
            DistSpec::Beta { alpha, beta } => {
                positive("alpha", *alpha)?;
                positive("beta", *beta)
            }
            DistSpec::Binomial { k, p } => {
                at_least_one("k", *k)?;
                if *p > 0.0 && *p < 1.0 {
                    Ok(())
                } else {
                    domain(format!("p must satisfy 0 < p < 1, got {p}"))
                }
            }
            DistSpec::Poisson { lambda } => positive("lambda", *lambda),
            DistSpec::IrwinHall { k } => at_least_one("k", *k),
            DistSpec::RademacherSum { k } => at_least_one("k", *k),
            DistSpec::Normal { sigma2 } => positive("sigma2", *sigma2),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            DistSpec::Gamma { .. } => "gamma",
            DistSpec::ChiSq { .. } => "chisq",
            DistSpec::WeightedChiSq { .. } => "weighted_chisq",
            DistSpec::NoncentralChiSq { .. } => "noncentral_chisq",
            DistSpec::Beta { .. } => "beta",
            DistSpec::Binomial { .. } => "binomial",
            DistSpec::Poisson { .. } => "poisson",
            DistSpec::IrwinHall { .. } => "irwin_hall",
            DistSpec::RademacherSum { .. } => "rademacher_sum",
            DistSpec::Normal { .. } => "normal",
        }
    }

    /// Short human-readable label, e.g. `binomial(k=50, p=0.3)`.
    pub fn label(&self) -> String {
        match self {
            DistSpec::Gamma { alpha } => format!("gamma(alpha={alpha})"),
            DistSpec::ChiSq { k } => format!("chisq(k={k})"),
            DistSpec::WeightedChiSq { weights } => format!("weighted_chisq(n={})", weights.len()),
            DistSpec::NoncentralChiSq { k, lambda } => format!("noncentral_chisq(k={k}, lambda={lambda})"),
            DistSpec::Beta { alpha, beta } => format!("beta(alpha={alpha}, beta={beta})"),
            DistSpec::Binomial { k, p } => format!("binomial(k={k}, p={p})"),
            DistSpec::Poisson { lambda } => format!("poisson(lambda={lambda})"),
            DistSpec::IrwinHall { k } => format!("irwin_hall(k={k})"),
            DistSpec::RademacherSum { k } => format!("rademacher_sum(k={k})"),
            DistSpec::Normal { sigma2 } => format!("normal(sigma2={sigma2})"),
        }
    }

    /// `E[Y]`, the amount subtracted to center the raw variable.
    pub fn mean_shift(&self) -> f64 {
        match self {
            DistSpec::Gamma { alpha } => *alpha,
            DistSpec::ChiSq { k } => *k as f64,
            DistSpec::WeightedChiSq { weights } => weights.iter().sum(),
            DistSpec::NoncentralChiSq { k, lambda } => *k as f64 + lambda,
            DistSpec::Beta { alpha, beta } => alpha / (alpha + beta),
            DistSpec::Binomial { k, p } => *k as f64 * p,
            DistSpec::Poisson { lambda } => *lambda,
            DistSpec::IrwinHall { k } => *k as f64 / 2.0,
            DistSpec::RademacherSum { .. } | DistSpec::Normal { .. } => 0.0,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            DistSpec::Gamma { alpha } => *alpha,
            DistSpec::ChiSq { k } => 2.0 * *k as f64,
            DistSpec::WeightedChiSq { weights } => 2.0 * weights.iter().map(|w| w * w).sum::<f64>(),
            DistSpec::NoncentralChiSq { k, lambda } => 2.0 * *k as f64 + 4.0 * lambda,
            DistSpec::Beta { alpha, beta } => {
                let s = alpha + beta;
                alpha * beta / (s * s * (s + 1.0))
            }
            DistSpec::Binomial { k, p } => *k as f64 * p * (1.0 - p),
            DistSpec::Poisson { lambda } => *lambda,
            DistSpec::IrwinHall { k } => *k as f64 / 12.0,
            DistSpec::RademacherSum { k } => *k as f64,
            DistSpec::Normal { sigma2 } => *sigma2,
        }
    }

    /// Largest deviation `x` for which the tail on `side` can be positive.
    pub fn max_deviation(&self, side: Side) -> f64 {
        let m = self.mean_shift();
        match (self, side) {
            (DistSpec::Beta { .. }, Side::Upper) => 1.0 - m,
            (DistSpec::Binomial { k, p }, Side::Upper) => *k as f64 * (1.0 - p),
            (DistSpec::IrwinHall { k }, _) => *k as f64 / 2.0,
            (DistSpec::RademacherSum { k }, _) => *k as f64,
            (DistSpec::Normal { .. }, _) | (_, Side::Upper) => f64::INFINITY,
            (_, Side::Lower) => m,
        }
    }

    /// Integer-valued families as an affine image of an integer variable.
    pub fn lattice(&self) -> Option<Lattice> {
        match self {
            DistSpec::Binomial { k, p } => Some(Lattice {
                law: LatticeLaw::Binomial { k: *k, p: *p },
                scale: 1.0,
                shift: *k as f64 * p,
            }),
            DistSpec::Poisson { lambda } => Some(Lattice {
                law: LatticeLaw::Poisson { lambda: *lambda },
                scale: 1.0,
                shift: *lambda,
            }),
            DistSpec::RademacherSum { k } => Some(Lattice {
                law: LatticeLaw::Binomial { k: *k, p: 0.5 },
                scale: 2.0,
                shift: *k as f64,
            }),
            _ => None,
        }
    }

    /// The centered log-MGF in closed form. Beta has none.
    pub fn log_mgf(&self) -> Result<LogMgf> {
        self.validate()?;
        let out = match self.clone() {
            DistSpec::Gamma { alpha } => LogMgf::new(RealInterval::below(1.0), move |t| {
                -alpha * (t + (-t).ln_1p())
            }),
            DistSpec::ChiSq { k } => {
                let half_k = k as f64 / 2.0;
                LogMgf::new(RealInterval::below(0.5), move |t| {
                    -half_k * (2.0 * t + (-2.0 * t).ln_1p())
                })
            }
            DistSpec::WeightedChiSq { weights } => {
                let w = WeightVector::new(weights)?;
                let hi = 0.5 / w.linf();
                LogMgf::new(RealInterval::below(hi), move |t| {
                    w.weights()
                        .iter()
                        .map(|u| -0.5 * (2.0 * u * t + (-2.0 * u * t).ln_1p()))
                        .sum()
                })
            }
            DistSpec::NoncentralChiSq { k, lambda } => {
                let kf = k as f64;
                LogMgf::new(RealInterval::below(0.5), move |t| {
                    let one_m = 1.0 - 2.0 * t;
                    // lambda t/(1-2t) - lambda t = 2 lambda t^2/(1-2t)
                    2.0 * lambda * t * t / one_m - 0.5 * kf * (2.0 * t + (-2.0 * t).ln_1p())
                })
            }
            DistSpec::Beta { .. } => {
                return Err(Error::Unsupported(
                    "beta has no closed-form log-MGF; use log_mgf_numeric".into(),
                ))
            }
            DistSpec::Binomial { k, p } => {
                let kf = k as f64;
                LogMgf::new(RealInterval::whole_line(), move |t| kf * binomial_unit_log_mgf(p, t))
            }
            DistSpec::Poisson { lambda } => {
                LogMgf::new(RealInterval::whole_line(), move |t| lambda * (t.exp_m1() - t))
            }
            DistSpec::IrwinHall { k } => {
                let kf = k as f64;
                LogMgf::new(RealInterval::whole_line(), move |t| kf * ln_sinhc(0.5 * t))
            }
            DistSpec::RademacherSum { k } => {
                let kf = k as f64;
                LogMgf::new(RealInterval::whole_line(), move |t| kf * ln_cosh(t))
            }
            DistSpec::Normal { sigma2 } => {
                LogMgf::new(RealInterval::whole_line(), move |t| 0.5 * sigma2 * t * t)
            }
        };
        Ok(out)
    }

    /// The centered log-MGF, by series where no closed form exists.
    pub fn log_mgf_numeric(&self) -> Result<LogMgf> {
        match *self {
            DistSpec::Beta { alpha, beta } => {
                self.validate()?;
                let m = alpha / (alpha + beta);
                Ok(LogMgf::new(RealInterval::whole_line(), move |t| {
                    ln_kummer_m(alpha, alpha + beta, t) - m * t
                }))
            }
            _ => self.log_mgf(),
        }
    }
}

/// `ln(1 - p + p e^t) - p t`.
fn binomial_unit_log_mgf(p: f64, t: f64) -> f64 {
    if t > 0.0 {
        t + (p + (1.0 - p) * (-t).exp()).ln() - p * t
    } else {
        (p * t.exp_m1()).ln_1p() - p * t
    }
}

/// `ln(sinh(s)/s)`.
fn ln_sinhc(s: f64) -> f64 {
    let a = s.abs();
    if a < 1e-4 {
        let a2 = a * a;
        a2 / 6.0 - a2 * a2 / 180.0
    } else {
        a + (-(-2.0 * a).exp()).ln_1p() - std::f64::consts::LN_2 - a.ln()
    }
}

/// `ln cosh(t)`.
fn ln_cosh(t: f64) -> f64 {
    let a = t.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `ln M(a, b, t)` for Kummer's confluent hypergeometric function, `0 < a < b`.
pub fn ln_kummer_m(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    if t < 0.0 {
        // Kummer's transformation keeps every series term positive.
        return t + ln_kummer_m(b - a, b, -t);
    }
    if t >= (10.0 * b).max(60.0) {
        if let Some(v) = ln_kummer_m_large(a, b, t) {
            return v;
        }
    }
    let mut ln_term = 0.0_f64;
    let mut ln_sum = 0.0_f64;
    let mut n = 1.0_f64;
    loop {
        ln_term += ((a + n - 1.0) / (b + n - 1.0) * t / n).ln();
        ln_sum = ln_add_exp(ln_sum, ln_term);
        if n > t && ln_term < ln_sum - 40.0 {
            return ln_sum;
        }
        n += 1.0;
    }
}

/// Large-`t` expansion `M(a, b, t) ~ Gamma(b)/Gamma(a) e^t t^{a-b} sum_s (b-a)_s (1-a)_s/(s! t^s)`.
/// The dropped branch is `O(e^{-t} t^b)` relative; `None` if the series stalls.
fn ln_kummer_m_large(a: f64, b: f64, t: f64) -> Option<f64> {
    let mut term = 1.0_f64;
    let mut sum = 1.0_f64;
    for j in 0..200 {
        let j = j as f64;
        let next = term * (b - a + j) * (1.0 - a + j) / ((j + 1.0) * t);
        if next.abs() > term.abs() {
            return None;
        }
        term = next;
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            return (sum > 0.0).then(|| log_gamma(b) - log_gamma(a) + t + (a - b) * t.ln() + sum.ln());
        }
    }
    None
}

/// A centered log-MGF with its domain of finiteness. Evaluation outside the
/// domain returns `+inf`.
#[derive(Clone)]
pub struct LogMgf {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub domain: RealInterval,
}

impl fmt::Debug for LogMgf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LogMgf").field("domain", &self.domain).finish_non_exhaustive()
    }
}

impl LogMgf {
    pub fn new<F>(domain: RealInterval, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self { f: Arc::new(f), domain }
    }

    pub fn eval(&self, t: f64) -> f64 {
        if self.domain.contains(t) {
            (self.f)(t)
        } else {
            f64::INFINITY
        }
    }

    /// The log-MGF of `-X`, which turns lower-tail questions into upper-tail ones.
    pub fn mirrored(&self) -> Self {
        let f = self.f.clone();
        let d = self.domain;
        Self {
            f: Arc::new(move |t| f(-t)),
            domain: RealInterval::new(-d.hi, -d.lo, d.hi_closed, d.lo_closed),
        }
    }

    /// The log-MGF oriented so that the requested side is an upper tail.
    pub fn for_side(&self, side: Side) -> Self {
        match side {
            Side::Upper => self.clone(),
            Side::Lower => self.mirrored(),
        }
    }

    /// Supremum of the domain.
    pub fn sup_t(&self) -> f64 {
        self.domain.hi
    }
}

/// The law of the integer variable behind a lattice family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LatticeLaw {
    Binomial { k: u64, p: f64 },
    Poisson { lambda: f64 },
}

/// `X = scale * J - shift` with `J` integer-valued.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lattice {
    pub law: LatticeLaw,
    pub scale: f64,
    pub shift: f64,
}

fn tie_tol(v: f64) -> f64 {
    1e-10 * v.abs().max(1.0)
}

impl Lattice {
    /// Smallest `j` with `scale j - shift >= x`; attained points count as ties.
    pub fn upper_index(&self, x: f64) -> i64 {
        let v = (x + self.shift) / self.scale;
        (v - tie_tol(v)).ceil() as i64
    }

    /// Largest `j` with `scale j - shift <= -x`.
    pub fn lower_index(&self, x: f64) -> i64 {
        let v = (self.shift - x) / self.scale;
        (v + tie_tol(v)).floor() as i64
    }

    /// Largest attained value of `J`, if bounded.
    pub fn max_index(&self) -> Option<u64> {
        match self.law {
            LatticeLaw::Binomial { k, .. } => Some(k),
            LatticeLaw::Poisson { .. } => None,
        }
    }

    /// The deviation `x` at which the upper event starts at `J = j`.
    pub fn upper_point(&self, j: i64) -> f64 {
        self.scale * j as f64 - self.shift
    }

    /// The deviation `x` at which the lower event ends at `J = j`.
    pub fn lower_point(&self, j: i64) -> f64 {
        self.shift - self.scale * j as f64
    }
}

/// Draws from the raw (uncentered) variable of a spec.
#[derive(Debug, Clone)]
pub struct Sampler {
    kind: SamplerKind,
    shift: f64,
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Gamma(rand_distr::Gamma<f64>),
    ChiSq(rand_distr::ChiSquared<f64>),
    Weighted(Vec<f64>),
    Noncentral { root_lambda: f64, rest: Option<rand_distr::ChiSquared<f64>> },
    Beta(rand_distr::Beta<f64>),
    Binomial(rand_distr::Binomial),
    Poisson(rand_distr::Poisson<f64>),
    IrwinHall(u64),
    Rademacher(rand_distr::Binomial, f64),
    Normal(f64),
}

fn sampler_err(e: impl fmt::Display) -> Error {
    Error::Domain(format!("sampler construction failed: {e}"))
}

impl Sampler {
    pub fn new(spec: &DistSpec) -> Result<Self> {
        spec.validate()?;
        let kind = match spec {
            DistSpec::Gamma { alpha } => {
                SamplerKind::Gamma(rand_distr::Gamma::new(*alpha, 1.0).map_err(sampler_err)?)
            }
            DistSpec::ChiSq { k } => {
                SamplerKind::ChiSq(rand_distr::ChiSquared::new(*k as f64).map_err(sampler_err)?)
            }
            DistSpec::WeightedChiSq { weights } => SamplerKind::Weighted(weights.clone()),
            DistSpec::NoncentralChiSq { k, lambda } => SamplerKind::Noncentral {
                root_lambda: lambda.sqrt(),
                rest: if *k > 1 {
                    Some(rand_distr::ChiSquared::new((*k - 1) as f64).map_err(sampler_err)?)
                } else {
                    None
                },
            },
            DistSpec::Beta { alpha, beta } => {
                SamplerKind::Beta(rand_distr::Beta::new(*alpha, *beta).map_err(sampler_err)?)
            }
            DistSpec::Binomial { k, p } => {
                SamplerKind::Binomial(rand_distr::Binomial::new(*k, *p).map_err(sampler_err)?)
            }
            DistSpec::Poisson { lambda } => {
                SamplerKind::Poisson(rand_distr::Poisson::new(*lambda).map_err(sampler_err)?)
            }
            DistSpec::IrwinHall { k } => SamplerKind::IrwinHall(*k),
            DistSpec::RademacherSum { k } => SamplerKind::Rademacher(
                rand_distr::Binomial::new(*k, 0.5).map_err(sampler_err)?,
                *k as f64,
            ),
            DistSpec::Normal { sigma2 } => SamplerKind::Normal(sigma2.sqrt()),
        };
        Ok(Self { kind, shift: spec.mean_shift() })
    }

    /// One draw of the raw variable `Y`.
    pub fn draw_raw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            SamplerKind::Gamma(d) => d.sample(rng),
            SamplerKind::ChiSq(d) => d.sample(rng),
            SamplerKind::Weighted(w) => w
                .iter()
                .map(|u| {
                    let z: f64 = rng.sample(StandardNormal);
                    u * z * z
                })
                .sum(),
            SamplerKind::Noncentral { root_lambda, rest } => {
                let z: f64 = rng.sample(StandardNormal);
                let head = (z + root_lambda) * (z + root_lambda);
                head + rest.as_ref().map_or(0.0, |d| d.sample(rng))
            }
            SamplerKind::Beta(d) => d.sample(rng),
            SamplerKind::Binomial(d) => d.sample(rng) as f64,
            SamplerKind::Poisson(d) => d.sample(rng),
            SamplerKind::IrwinHall(k) => (0..*k).map(|_| rng.random::<f64>()).sum(),
            SamplerKind::Rademacher(d, k) => 2.0 * d.sample(rng) as f64 - k,
            SamplerKind::Normal(sd) => {
                let z: f64 = rng.sample(StandardNormal);
                sd * z
            }
        }
    }

    /// One draw of the centered variable `X`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.draw_raw(rng) - self.shift
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }
}

/// `n` centered draws from one stream.
pub fn sample<R: Rng + ?Sized>(spec: &DistSpec, rng: &mut R, n: usize) -> Result<Vec<f64>> {
    let s = Sampler::new(spec)?;
    Ok((0..n).map(|_| s.draw(rng)).collect())
}

/// `n` centered draws, sharded over streams of `seed`; identical for any thread count.
pub fn sample_sharded(spec: &DistSpec, seed: u64, n: usize) -> Result<Vec<f64>> {
    let s = Sampler::new(spec)?;
    let parts: Vec<Vec<f64>> = rng::shards(n)
        .into_par_iter()
        .map(|(id, len)| {
            let mut r = rng::stream(seed, id);
            (0..len).map(|_| s.draw(&mut r)).collect()
        })
        .collect();
    Ok(parts.concat())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_specs() -> Vec<DistSpec> {
        vec![
            DistSpec::Gamma { alpha: 2.0 },
            DistSpec::ChiSq { k: 3 },
            DistSpec::WeightedChiSq { weights: vec![1.0, 0.5, 0.25] },
            DistSpec::NoncentralChiSq { k: 3, lambda: 2.0 },
            DistSpec::Beta { alpha: 2.0, beta: 5.0 },
            DistSpec::Binomial { k: 20, p: 0.3 },
            DistSpec::Poisson { lambda: 3.0 },
            DistSpec::IrwinHall { k: 8 },
            DistSpec::RademacherSum { k: 10 },
            DistSpec::Normal { sigma2: 2.0 },
        ]
    }

    #[test]
    fn json_roundtrip_and_keys() {
        for s in all_specs() {
            let j = s.to_json();
            assert_eq!(DistSpec::from_json(&j).unwrap(), s);
        }
        let s = DistSpec::from_json(r#"{"family":"binomial","params":{"k":10,"p":0.5}}"#).unwrap();
        assert_eq!(s, DistSpec::Binomial { k: 10, p: 0.5 });
        assert!(matches!(
            DistSpec::from_json(r#"{"family":"binomial","params":{"k":10,"q":0.5}}"#),
            Err(Error::Parse(_))
        ));
        assert!(matches!(
            DistSpec::from_json(r#"{"family":"binomial","params":{"k":10,"p":1.5}}"#),
            Err(Error::Domain(_))
        ));
        assert!(matches!(DistSpec::from_json("{not json"), Err(Error::Parse(_))));
    }

    #[test]
    fn mean_shift_examples() {
        assert_eq!(DistSpec::NoncentralChiSq { k: 3, lambda: 2.0 }.mean_shift(), 5.0);
        assert_eq!(DistSpec::IrwinHall { k: 8 }.mean_shift(), 4.0);
        assert_eq!(DistSpec::Beta { alpha: 1.0, beta: 3.0 }.mean_shift(), 0.25);
    }

    #[test]
    fn log_mgf_examples() {
        let g = DistSpec::Gamma { alpha: 2.0 }.log_mgf().unwrap();
        assert!((g.eval(0.5) - (-2.0 * (0.5 + 0.5_f64.ln()))).abs() < 1e-15);
        assert!((g.eval(0.5) - 0.386_294_361_119_890_6).abs() < 1e-12);
        assert_eq!(g.eval(1.0), f64::INFINITY);
        let p = DistSpec::Poisson { lambda: 3.0 }.log_mgf().unwrap();
        assert!((p.eval(1.0) - 3.0 * (std::f64::consts::E - 2.0)).abs() < 1e-14);
        assert!(matches!(
            DistSpec::Beta { alpha: 2.0, beta: 3.0 }.log_mgf(),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn log_mgf_vanishes_at_zero_with_zero_slope() {
        for s in all_specs() {
            let f = s.log_mgf_numeric().unwrap();
            assert!(f.eval(0.0).abs() < 1e-15, "{}", s.label());
            let h = 1e-6;
            let slope = (f.eval(h) - f.eval(-h)) / (2.0 * h);
            assert!(slope.abs() < 1e-6 * s.variance().max(1.0), "{} slope {slope}", s.label());
        }
    }

    #[test]
    fn log_mgf_curvature_is_variance() {
        for s in all_specs() {
            let f = s.log_mgf_numeric().unwrap();
            let h = 1e-4;
            let second = (f.eval(h) - 2.0 * f.eval(0.0) + f.eval(-h)) / (h * h);
            let v = s.variance();
            assert!(((second - v) / v).abs() < 1e-5, "{}: {second} vs {v}", s.label());
        }
    }

    #[test]
    fn kummer_large_argument_matches_series() {
        // Straight series, summed in logs, as the reference.
        let series = |a: f64, b: f64, t: f64| {
            let (mut lt, mut ls) = (0.0f64, 0.0f64);
            for n in 1..20_000 {
                let n = n as f64;
                lt += ((a + n - 1.0) / (b + n - 1.0) * t / n).ln();
                ls = ls.max(lt) + (-(ls - lt).abs()).exp().ln_1p();
            }
            ls
        };
        for (a, b, t) in [(2.0, 7.0, 70.0), (0.5, 1.3, 80.0), (5.0, 8.0, 200.0)] {
            let v = ln_kummer_m(a, b, t);
            assert!((v - series(a, b, t)).abs() < 1e-11 * v.abs(), "{a} {b} {t}");
        }
        assert!(ln_kummer_m(2.0, 7.0, 1e12).is_finite());
    }

    #[test]
    fn kummer_matches_direct_expectation() {
        // E exp(tZ) for Z ~ Beta(2, 3) by midpoint quadrature of the density 12 z (1-z)^2.
        let t = 3.7_f64;
        let n = 200_000;
        let mut acc = 0.0;
        for i in 0..n {
            let z = (i as f64 + 0.5) / n as f64;
            acc += 12.0 * z * (1.0 - z).powi(2) * (t * z).exp();
        }
        acc /= n as f64;
        assert!((ln_kummer_m(2.0, 5.0, t) - acc.ln()).abs() < 1e-9);
        assert!((ln_kummer_m(2.0, 5.0, -t) - ln_kummer_quadrature(-t)).abs() < 1e-9);
    }

    fn ln_kummer_quadrature(t: f64) -> f64 {
        let n = 200_000;
        let mut acc = 0.0;
        for i in 0..n {
            let z = (i as f64 + 0.5) / n as f64;
            acc += 12.0 * z * (1.0 - z).powi(2) * (t * z).exp();
        }
        (acc / n as f64).ln()
    }

    #[test]
    fn rademacher_log_mgf_examples() {
        let f = DistSpec::RademacherSum { k: 3 }.log_mgf().unwrap();
        assert!((f.eval(0.7) - 3.0 * 0.7_f64.cosh().ln()).abs() < 1e-14);
        assert!(f.eval(800.0).is_finite());
    }

    #[test]
    fn sample_is_deterministic_per_stream() {
        let s = DistSpec::Poisson { lambda: 3.0 };
        let a = sample(&s, &mut rng::stream(5, 1), 100).unwrap();
        let b = sample(&s, &mut rng::stream(5, 1), 100).unwrap();
        assert_eq!(a, b);
        let c = sample_sharded(&s, 5, 40_000).unwrap();
        let d = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| sample_sharded(&s, 5, 40_000).unwrap());
        assert_eq!(c, d);
    }

    #[test]
    fn sample_means_are_centered() {
        for s in all_specs() {
            let n = 200_000;
            let xs = sample_sharded(&s, 11, n).unwrap();
            let mean = crate::specfun::compensated_sum(xs.iter().cloned()) / n as f64;
            let se = (s.variance() / n as f64).sqrt();
            assert!(mean.abs() < 5.0 * se, "{}: mean {mean}, se {se}", s.label());
        }
    }

    #[test]
    fn lattice_tie_convention() {
        let l = DistSpec::Binomial { k: 200, p: 0.3 }.lattice().unwrap();
        assert_eq!(l.upper_index(40.0), 100);
        assert_eq!(l.lower_index(40.0), 20);
        let r = DistSpec::RademacherSum { k: 4 }.lattice().unwrap();
        assert_eq!(r.upper_index(2.0), 3);
        assert_eq!(r.upper_index(1.5), 3);
        assert_eq!(r.lower_index(2.0), 1);
    }
}
