//! Reference tail probabilities: exact where the law allows it, Monte Carlo
//! with an exact binomial confidence interval otherwise.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist_model::{DistSpec, Lattice, LatticeLaw, Sampler, Side};
use crate::error::{domain, Result};
use crate::rng;
use crate::specfun::{
    inv_reg_inc_beta, ln1m_exp, ln_add_exp, ln_binomial_pmf, ln_normal_tail, ln_poisson_pmf,
    ln_reg_inc_beta, ln_reg_inc_gamma_lower, ln_reg_inc_gamma_upper, log_gamma, reg_inc_gamma_lower,
};

/// How much a [`TailEstimate`] can be trusted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorModel {
    Exact { abs_tol: f64 },
    Truncated { abs_tol: f64 },
    MonteCarlo { ci_lo: f64, ci_hi: f64, n: u64, confidence: f64 },
}

/// A tail probability with its error model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub value: f64,
    #[serde(with = "crate::json::ext_f64")]
    pub log_value: f64,
    pub error: ErrorModel,
}

impl TailEstimate {
    fn exact_from_log(log_value: f64) -> Self {
        let value = log_value.exp();
        Self { value, log_value, error: ErrorModel::Exact { abs_tol: 1e-15 + 1e-12 * value } }
    }

    fn zero() -> Self {
        Self { value: 0.0, log_value: f64::NEG_INFINITY, error: ErrorModel::Exact { abs_tol: 0.0 } }
    }

    fn one() -> Self {
        Self { value: 1.0, log_value: 0.0, error: ErrorModel::Exact { abs_tol: 0.0 } }
    }

    /// Largest value consistent with the error model.
    pub fn hi(&self) -> f64 {
        match self.error {
            ErrorModel::Exact { abs_tol } | ErrorModel::Truncated { abs_tol } => (self.value + abs_tol).min(1.0),
            ErrorModel::MonteCarlo { ci_hi, .. } => ci_hi,
        }
    }

    /// Smallest value consistent with the error model.
    pub fn lo(&self) -> f64 {
        match self.error {
            ErrorModel::Exact { abs_tol } | ErrorModel::Truncated { abs_tol } => (self.value - abs_tol).max(0.0),
            ErrorModel::MonteCarlo { ci_lo, .. } => ci_lo,
        }
    }

    pub fn is_monte_carlo(&self) -> bool {
        matches!(self.error, ErrorModel::MonteCarlo { .. })
    }
}

/// Settings for families whose oracle is Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub mc_n: usize,
    pub seed: u64,
    pub confidence: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { mc_n: 1_000_000, seed: 42, confidence: 0.99 }
    }
}

fn check_x(x: f64) -> Result<()> {
    if x >= 0.0 && !x.is_nan() {
        Ok(())
    } else {
        domain(format!("deviation x must be >= 0, got {x}"))
    }
}

/// `P(X >= x)` (upper) or `P(X <= -x)` (lower) with default oracle settings.
pub fn exact_tail(spec: &DistSpec, side: Side, x: f64) -> Result<TailEstimate> {
    exact_tail_with(spec, side, x, &OracleConfig::default())
}

/// As [`exact_tail`], with explicit Monte Carlo settings.
pub fn exact_tail_with(spec: &DistSpec, side: Side, x: f64, cfg: &OracleConfig) -> Result<TailEstimate> {
    spec.validate()?;
    check_x(x)?;
    if let Some(lat) = spec.lattice() {
        return Ok(lattice_tail(&lat, side, x));
    }
    match *spec {
        DistSpec::Gamma { alpha } => gamma_tail(alpha, 1.0, side, x),
        DistSpec::ChiSq { k } => gamma_tail(k as f64 / 2.0, 2.0, side, x),
        DistSpec::NoncentralChiSq { k, lambda } => noncentral_tail(k, lambda, side, x),
        DistSpec::Beta { alpha, beta } => {
            let m = alpha / (alpha + beta);
            Ok(match side {
                Side::Upper if m + x >= 1.0 => TailEstimate::zero(),
                Side::Upper => TailEstimate::exact_from_log(ln_reg_inc_beta(beta, alpha, 1.0 - m - x)?),
                Side::Lower if m - x <= 0.0 => TailEstimate::zero(),
                Side::Lower => TailEstimate::exact_from_log(ln_reg_inc_beta(alpha, beta, m - x)?),
            })
        }
        DistSpec::IrwinHall { k } => Ok(irwin_hall_tail(k, x)),
        DistSpec::Normal { sigma2 } => Ok(TailEstimate::exact_from_log(ln_normal_tail(x / sigma2.sqrt()))),
        DistSpec::WeightedChiSq { .. } => {
            let sorted = cached_sorted_sample(spec, cfg.seed, cfg.mc_n)?;
            let n = sorted.len();
            let count = match side {
                Side::Upper => n - sorted.partition_point(|v| *v < x),
                Side::Lower => sorted.partition_point(|v| *v <= -x),
            };
            mc_estimate(count as u64, n as u64, cfg.confidence)
        }
        DistSpec::Binomial { .. } | DistSpec::Poisson { .. } | DistSpec::RademacherSum { .. } => {
            unreachable!("lattice families are handled above")
        }
    }
}

/// Gamma(shape) scaled by `scale`, centered at `shape * scale`.
fn gamma_tail(shape: f64, scale: f64, side: Side, x: f64) -> Result<TailEstimate> {
    let y = x / scale;
    Ok(match side {
        Side::Upper => TailEstimate::exact_from_log(ln_reg_inc_gamma_upper(shape, shape + y)?),
        Side::Lower if y >= shape => TailEstimate::zero(),
        Side::Lower => TailEstimate::exact_from_log(ln_reg_inc_gamma_lower(shape, shape - y)?),
    })
}

const SERIES_TAIL: f64 = 1e-14;

/// Poisson-mixture of central chi-square tails, truncated once the omitted
/// mixture weight drops below `1e-14`.
fn noncentral_tail(k: u64, lambda: f64, side: Side, x: f64) -> Result<TailEstimate> {
    let half_k = k as f64 / 2.0;
    if lambda == 0.0 {
        return gamma_tail(half_k, 2.0, side, x);
    }
    let z = match side {
        Side::Upper => k as f64 + lambda + x,
        Side::Lower => k as f64 + lambda - x,
    };
    if side == Side::Lower && z <= 0.0 {
        return Ok(TailEstimate::zero());
    }
    let mu = lambda / 2.0;
    let mut acc = f64::NEG_INFINITY;
    let mut j: u64 = 0;
    let omitted = loop {
        let w = ln_poisson_pmf(mu, j);
        let a = half_k + j as f64;
        let t = match side {
            Side::Upper => ln_reg_inc_gamma_upper(a, z / 2.0)?,
            Side::Lower => ln_reg_inc_gamma_lower(a, z / 2.0)?,
        };
        acc = ln_add_exp(acc, w + t);
        j += 1;
        if j as f64 > mu {
            let rest = reg_inc_gamma_lower(j as f64, mu)?;
            if rest < SERIES_TAIL {
                break rest;
            }
        }
    };
    let value = acc.exp();
    Ok(TailEstimate {
        value,
        log_value: acc,
        error: ErrorModel::Truncated { abs_tol: omitted + 1e-13 * value },
    })
}

fn lattice_tail(lat: &Lattice, side: Side, x: f64) -> TailEstimate {
    match side {
        Side::Upper => lattice_tail_ge(lat.law, lat.upper_index(x)),
        Side::Lower => lattice_tail_le(lat.law, lat.lower_index(x)),
    }
}

/// `P(J >= m)`.
pub(crate) fn lattice_tail_ge(law: LatticeLaw, m: i64) -> TailEstimate {
    if m <= 0 {
        return TailEstimate::one();
    }
    match law {
        LatticeLaw::Binomial { k, p } => {
            if m as u64 > k {
                return TailEstimate::zero();
            }
            if m == 1 {
                return TailEstimate::exact_from_log(ln_one_minus_binomial_zero(k, p));
            }
            let mut acc = f64::NEG_INFINITY;
            for j in (m as u64..=k).rev() {
                acc = ln_add_exp(acc, ln_binomial_pmf(k, j, p));
            }
            TailEstimate::exact_from_log(acc.min(0.0))
        }
        LatticeLaw::Poisson { lambda } => {
            if m == 1 {
                return TailEstimate::exact_from_log(ln1m_exp(lambda));
            }
            TailEstimate::exact_from_log(
                ln_reg_inc_gamma_lower(m as f64, lambda).expect("valid gamma arguments"),
            )
        }
    }
}

/// `P(J <= n)`.
pub(crate) fn lattice_tail_le(law: LatticeLaw, n: i64) -> TailEstimate {
    if n < 0 {
        return TailEstimate::zero();
    }
    match law {
        LatticeLaw::Binomial { k, p } => {
            let n = n as u64;
            if n >= k {
                return TailEstimate::one();
            }
            if n + 1 == k {
                return TailEstimate::exact_from_log(ln_one_minus_binomial_zero(k, 1.0 - p));
            }
            let mut acc = f64::NEG_INFINITY;
            for j in 0..=n {
                acc = ln_add_exp(acc, ln_binomial_pmf(k, j, p));
            }
            TailEstimate::exact_from_log(acc.min(0.0))
        }
        LatticeLaw::Poisson { lambda } => TailEstimate::exact_from_log(
            ln_reg_inc_gamma_upper(n as f64 + 1.0, lambda).expect("valid gamma arguments"),
        ),
    }
}

/// `ln(1 - (1-p)^k)`, the probability of at least one success.
pub(crate) fn ln_one_minus_binomial_zero(k: u64, p: f64) -> f64 {
    ln1m_exp(-(k as f64) * (-p).ln_1p())
}

/// CDF of the Irwin-Hall law at `s`, by the B-spline recursion
/// `F_m(y) = (y F_{m-1}(y) + (m - y) F_{m-1}(y - 1)) / m`; every step is a
/// convex combination on `[0, m]`, so relative accuracy is preserved.
pub fn irwin_hall_cdf(k: u64, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= k as f64 {
        return 1.0;
    }
    let k = k as usize;
    let mut level: Vec<f64> = (0..k).map(|i| (s - i as f64).clamp(0.0, 1.0)).collect();
    for m in 2..=k {
        let mf = m as f64;
        for i in 0..=(k - m) {
            let y = s - i as f64;
            level[i] = if y <= 0.0 {
                0.0
            } else if y >= mf {
                1.0
            } else {
                (y * level[i] + (mf - y) * level[i + 1]) / mf
            };
        }
    }
    level[0]
}

fn irwin_hall_tail(k: u64, x: f64) -> TailEstimate {
    let s = k as f64 / 2.0 - x;
    if s <= 0.0 {
        return TailEstimate::zero();
    }
    let v = irwin_hall_cdf(k, s);
    if v > 0.0 {
        TailEstimate::exact_from_log(v.ln())
    } else {
        // F_k(s) = s^k / k! for s <= 1.
        let log_value = k as f64 * s.ln() - log_gamma(k as f64 + 1.0);
        TailEstimate { value: 0.0, log_value, error: ErrorModel::Exact { abs_tol: 1e-300 } }
    }
}

/// Exact two-sided `confidence` interval for a binomial proportion.
pub fn clopper_pearson(count: u64, n: u64, confidence: f64) -> Result<(f64, f64)> {
    if n == 0 || count > n {
        return domain(format!("invalid binomial count {count} of {n}"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return domain(format!("confidence must lie in (0, 1), got {confidence}"));
    }
    let a = 1.0 - confidence;
    let (c, nf) = (count as f64, n as f64);
    let lo = if count == 0 { 0.0 } else { inv_reg_inc_beta(c, nf - c + 1.0, a / 2.0)? };
    let hi = if count == n { 1.0 } else { inv_reg_inc_beta(c + 1.0, nf - c, 1.0 - a / 2.0)? };
    Ok((lo, hi))
}

pub(crate) fn mc_estimate(count: u64, n: u64, confidence: f64) -> Result<TailEstimate> {
    let (ci_lo, ci_hi) = clopper_pearson(count, n, confidence)?;
    let value = count as f64 / n as f64;
    Ok(TailEstimate { value, log_value: value.ln(), error: ErrorModel::MonteCarlo { ci_lo, ci_hi, n, confidence } })
}

type SampleKey = (String, u64, usize);

pub(crate) fn cached_sorted_sample(spec: &DistSpec, seed: u64, n: usize) -> Result<Arc<Vec<f64>>> {
    static CACHE: OnceLock<Mutex<HashMap<SampleKey, Arc<Vec<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (spec.to_json(), seed, n);
    if let Some(v) = cache.lock().expect("cache lock").get(&key) {
        return Ok(v.clone());
    }
    let mut xs = crate::dist_model::sample_sharded(spec, rng::derive_seed(seed, 0x0AC1E), n)?;
    xs.sort_by(f64::total_cmp);
    let xs = Arc::new(xs);
    let mut guard = cache.lock().expect("cache lock");
    if guard.len() > 64 {
        guard.clear();
    }
    guard.insert(key, xs.clone());
    Ok(xs)
}

/// The indicator of the tail event on the raw variable, honouring the lattice
/// tie convention.
pub(crate) fn tail_event(spec: &DistSpec, side: Side, x: f64) -> impl Fn(f64) -> bool + Send + Sync {
    let mean = spec.mean_shift();
    let lat = spec.lattice();
    move |y: f64| match (&lat, side) {
        (Some(l), Side::Upper) => (((y - mean) + l.shift) / l.scale).round() as i64 >= l.upper_index(x),
        (Some(l), Side::Lower) => (((y - mean) + l.shift) / l.scale).round() as i64 <= l.lower_index(x),
        (None, Side::Upper) => y - mean >= x,
        (None, Side::Lower) => y - mean <= -x,
    }
}

/// Monte Carlo estimate of the tail with an exact Clopper-Pearson interval at
/// confidence 0.99.
pub fn mc_tail(spec: &DistSpec, side: Side, x: f64, n: usize, seed: u64) -> Result<TailEstimate> {
    mc_tail_with_confidence(spec, side, x, n, seed, 0.99)
}

pub fn mc_tail_with_confidence(
    spec: &DistSpec,
    side: Side,
    x: f64,
    n: usize,
    seed: u64,
    confidence: f64,
) -> Result<TailEstimate> {
    check_x(x)?;
    if n < 100 {
        return domain(format!("Monte Carlo needs n >= 100, got {n}"));
    }
    let sampler = Sampler::new(spec)?;
    let event = tail_event(spec, side, x);
    let count: u64 = rng::shards(n)
        .into_par_iter()
        .map(|(id, len)| {
            let mut r = rng::stream(seed, id);
            (0..len).filter(|_| event(sampler.draw_raw(&mut r))).count() as u64
        })
        .sum();
    mc_estimate(count, n as u64, confidence)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::compensated_sum;

    fn exact(spec: &DistSpec, side: Side, x: f64) -> f64 {
        exact_tail(spec, side, x).unwrap().value
    }

    #[test]
    fn binomial_examples() {
        let s = DistSpec::Binomial { k: 10, p: 0.5 };
        assert!((exact(&s, Side::Upper, 2.0) - 0.171_875).abs() < 1e-15);
        assert!((exact(&s, Side::Lower, 2.0) - 0.171_875).abs() < 1e-15);
        assert_eq!(exact(&s, Side::Upper, 5.5), 0.0);
        assert!((exact(&s, Side::Upper, 0.0) - 0.623_046_875).abs() < 1e-14);
    }

    #[test]
    fn irwin_hall_examples() {
        let s = DistSpec::IrwinHall { k: 2 };
        assert!((exact(&s, Side::Upper, 0.5) - 0.125).abs() < 1e-15);
        assert_eq!(exact(&s, Side::Lower, 1.0), 0.0);
    }

    fn irwin_hall_alternating(k: u64, y: f64) -> f64 {
        let mut terms = Vec::new();
        let mut fact = 1.0;
        for i in 1..=k {
            fact *= i as f64;
        }
        let mut j = 0u64;
        while (j as f64) < y && j <= k {
            let c = (log_gamma(k as f64 + 1.0) - log_gamma(j as f64 + 1.0) - log_gamma((k - j) as f64 + 1.0)).exp();
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            terms.push(sign * c.round() * (y - j as f64).powi(k as i32) / fact);
            j += 1;
        }
        compensated_sum(terms)
    }

    #[test]
    fn irwin_hall_recursion_matches_alternating_sum() {
        for k in 1..=10u64 {
            for i in 1..20 {
                let y = k as f64 * i as f64 / 20.0;
                let a = irwin_hall_cdf(k, y);
                let b = irwin_hall_alternating(k, y);
                assert!((a - b).abs() < 1e-12, "k={k} y={y}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn gamma_lower_beyond_support_is_zero() {
        let s = DistSpec::Gamma { alpha: 2.0 };
        let t = exact_tail(&s, Side::Lower, 2.5).unwrap();
        assert_eq!(t.value, 0.0);
        assert_eq!(t.log_value, f64::NEG_INFINITY);
    }

    #[test]
    fn normal_and_poisson_examples() {
        let n = DistSpec::Normal { sigma2: 1.0 };
        assert!((exact(&n, Side::Upper, 1.0) - 0.158_655_253_931_457).abs() < 1e-14);
        let p = DistSpec::Poisson { lambda: 2.0 };
        // P(Y >= 4) for Poisson(2)
        let want = 1.0 - (-2.0_f64).exp() * (1.0 + 2.0 + 2.0 + 4.0 / 3.0);
        assert!((exact(&p, Side::Upper, 2.0) - want).abs() < 1e-15);
        assert!((want - 0.142_876_5).abs() < 1e-7);
    }

    #[test]
    fn chisq_matches_exponential() {
        // chi-square with 2 degrees of freedom: P(Y >= 2 + x) = exp(-(2 + x)/2)
        let s = DistSpec::ChiSq { k: 2 };
        for &x in &[0.0, 1.0, 7.5, 100.0] {
            let t = exact_tail(&s, Side::Upper, x).unwrap();
            assert!((t.log_value + (2.0 + x) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noncentral_reduces_to_central() {
        let a = DistSpec::NoncentralChiSq { k: 3, lambda: 0.0 };
        let b = DistSpec::ChiSq { k: 3 };
        for &x in &[0.5, 2.0, 9.0] {
            for side in Side::both() {
                assert!((exact(&a, side, x) - exact(&b, side, x)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn noncentral_matches_monte_carlo() {
        let s = DistSpec::NoncentralChiSq { k: 3, lambda: 2.0 };
        for &(side, x) in &[(Side::Upper, 3.0), (Side::Lower, 2.0)] {
            let e = exact(&s, side, x);
            let m = mc_tail(&s, side, x, 400_000, 9).unwrap();
            assert!(m.lo() <= e && e <= m.hi(), "{side:?} {e} {:?}", m.error);
        }
    }

    #[test]
    fn beta_matches_closed_form() {
        // Beta(1, 2): P(Z >= z) = (1 - z)^2, mean 1/3.
        let s = DistSpec::Beta { alpha: 1.0, beta: 2.0 };
        let x = 0.2;
        let z: f64 = 1.0 / 3.0 + x;
        assert!((exact(&s, Side::Upper, x) - (1.0 - z).powi(2)).abs() < 1e-14);
    }

    #[test]
    fn mc_tail_poisson_example() {
        let s = DistSpec::Poisson { lambda: 2.0 };
        let m = mc_tail(&s, Side::Upper, 2.0, 200_000, 1).unwrap();
        assert!(m.lo() <= 0.142_876_5 && 0.142_876_5 <= m.hi());
    }

    #[test]
    fn zero_count_upper_limit() {
        let (lo, hi) = clopper_pearson(0, 1_000_000, 0.99).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi * 1e6 - 5.298).abs() < 0.01);
        assert!(mc_tail(&DistSpec::Poisson { lambda: 1.0 }, Side::Upper, 0.0, 50, 1).is_err());
    }

    #[test]
    fn weighted_chisq_single_weight_matches_chisq() {
        let w = DistSpec::WeightedChiSq { weights: vec![1.0] };
        let c = DistSpec::ChiSq { k: 1 };
        let cfg = OracleConfig { mc_n: 200_000, seed: 3, confidence: 0.99 };
        let t = exact_tail_with(&w, Side::Upper, 1.0, &cfg).unwrap();
        let e = exact(&c, Side::Upper, 1.0);
        assert!(t.lo() <= e && e <= t.hi());
    }

    #[test]
    fn mc_is_thread_count_invariant() {
        let s = DistSpec::Gamma { alpha: 3.0 };
        let a = mc_tail(&s, Side::Upper, 1.0, 100_000, 5).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| mc_tail(&s, Side::Upper, 1.0, 100_000, 5).unwrap());
        assert_eq!(a, b);
    }

    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn tails_are_probabilities_and_monotone(alpha in 0.1f64..20.0, x in 0.0f64..20.0, dx in 0.0f64..3.0) {
            for spec in [
                DistSpec::Gamma { alpha },
                DistSpec::Beta { alpha: alpha.max(0.5), beta: 2.0 },
                DistSpec::Poisson { lambda: alpha },
                DistSpec::Binomial { k: 30, p: (alpha / 21.0).min(0.95) },
                DistSpec::IrwinHall { k: 1 + alpha as u64 },
                DistSpec::NoncentralChiSq { k: 2, lambda: alpha },
            ] {
                for side in Side::both() {
                    let a = exact(&spec, side, x);
                    let b = exact(&spec, side, x + dx);
                    prop_assert!((0.0..=1.0).contains(&a));
                    prop_assert!(b <= a + 1e-13, "{} {:?} {} {}", spec.label(), side, a, b);
                }
            }
        }

        #[test]
        fn binomial_pmf_sum_matches_beta_identity(k in 2u64..400, p in 0.01f64..0.99, frac in 0.0f64..1.0) {
            let spec = DistSpec::Binomial { k, p };
            let m = 1 + ((k - 1) as f64 * frac) as u64;
            let x = m as f64 - k as f64 * p;
            prop_assume!(x >= 0.0);
            let want = crate::specfun::reg_inc_beta(m as f64, (k - m + 1) as f64, p).unwrap();
            let got = exact(&spec, Side::Upper, x);
            prop_assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }

        #[test]
        fn rademacher_is_symmetric(k in 1u64..200, x in 0.0f64..50.0) {
            let s = DistSpec::RademacherSum { k };
            prop_assert_eq!(exact(&s, Side::Upper, x), exact(&s, Side::Lower, x));
        }
    }
}
