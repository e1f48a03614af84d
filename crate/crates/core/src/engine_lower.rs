//! Certified lower bounds: Paley-Zygmund on an MGF sandwich, the large-x
//! composition for sums, and the reverse Chernoff-Cramér certificate.
//!
//! Every value returned with `certified = true` is a lower bound on the tail
//! for the given inputs; failed searches return 0 with `certified = false`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bound_result::{BoundResult, Method};
use crate::dist_model::{DistSpec, LogMgf, Side};
use crate::engine_upper::{chernoff_upper, MgfSandwich};
use crate::error::{domain, Error, Result};
use crate::optim::{golden_section, log_space, nelder_mead};
use crate::specfun::{bernoulli_kl, ln1m_exp};

const LAMBDA_LO: f64 = 1e-3;
const LAMBDA_HI: f64 = 20.0;
const LAMBDA_GRID: usize = 200;

fn check_x(x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        domain(format!("x must be finite and >= 0, got {x}"))
    }
}

/// Smallest `t` with `c1 alpha t - (lambda + ln(1/c2))/t >= x`.
fn pz_t(s: &MgfSandwich, x: f64, lambda: f64) -> f64 {
    let ca = s.lower_rate * s.alpha;
    let l = lambda - s.lower_prefactor.ln();
    (x + (x * x + 4.0 * ca * l).sqrt()) / (2.0 * ca)
}

/// Log of the Paley-Zygmund value at `lambda`, or `-inf` if `2t > M`.
fn pz_log_value(s: &MgfSandwich, x: f64, lambda: f64) -> (f64, f64) {
    let t = pz_t(s, x, lambda);
    if 2.0 * t > s.radius {
        return (f64::NEG_INFINITY, t);
    }
    let v = 2.0 * ln1m_exp(lambda) + 2.0 * s.lower_prefactor.ln()
        - s.upper_prefactor.ln()
        - 2.0 * (2.0 * s.upper_rate - s.lower_rate) * s.alpha * t * t;
    (v, t)
}

/// Paley-Zygmund lower bound on `P(X >= x)` from the sandwich, optimized
/// over the threshold level `lambda`.
pub fn pz_lower(s: &MgfSandwich, x: f64) -> Result<BoundResult> {
    pz_lower_with(s, x, None)
}

/// As [`pz_lower`]; `Some(lambda)` fixes the threshold level.
pub fn pz_lower_with(s: &MgfSandwich, x: f64, lambda: Option<f64>) -> Result<BoundResult> {
    s.validate()?;
    check_x(x)?;
    let (best_lambda, best) = match lambda {
        Some(l) => {
            if !(l > 0.0) {
                return domain(format!("lambda must be > 0, got {l}"));
            }
            (l, pz_log_value(s, x, l).0)
        }
        None => {
            let mut grid = log_space(LAMBDA_LO, LAMBDA_HI, LAMBDA_GRID);
            grid.push(1.0);
            grid.sort_by(f64::total_cmp);
            let vals: Vec<f64> = grid.iter().map(|&l| pz_log_value(s, x, l).0).collect();
            let (i, &v) = vals
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .expect("grid nonempty");
            if v == f64::NEG_INFINITY {
                (grid[i], v)
            } else {
                let lo = grid[i.saturating_sub(1)];
                let hi = grid[(i + 1).min(grid.len() - 1)];
                let (l, nv) = golden_section(|l| -pz_log_value(s, x, l).0, lo, hi, 200, 1e-12);
                if -nv > v {
                    (l, -nv)
                } else {
                    (grid[i], v)
                }
            }
        }
    };
    let t = pz_t(s, x, best_lambda);
    if best == f64::NEG_INFINITY {
        let mut r = BoundResult::from_log(f64::NEG_INFINITY, Method::Pz, false, "paley-zygmund");
        r.params_used.insert("lambda".into(), best_lambda);
        return Ok(r);
    }
    Ok(BoundResult::from_log(best, Method::Pz, true, "paley-zygmund")
        .with_param("lambda", best_lambda)
        .with_param("t", t))
}

/// Explicit constants for `P(X >= x) >= c exp(-C x^2/alpha)`, `0 <= x <= x_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PzConstants {
    pub c: f64,
    #[serde(rename = "C")]
    pub big_c: f64,
    #[serde(with = "crate::json::ext_f64")]
    pub x_max: f64,
}

/// Which radius condition licenses the explicit constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
pub enum PzScenario {
    /// `alpha M^2 >= 16 (1 + ln(1/c2))/c1`.
    LargeRadius,
    /// `c2 = 1` and `alpha M^2 >= c_pp`; `c_pp` has no default.
    UnitPrefactor { c_pp: f64 },
}

pub fn pz_explicit_constants(s: &MgfSandwich, scenario: PzScenario) -> Result<PzConstants> {
    s.validate()?;
    let (c1, big_c1, c2, big_c2, a, m) = (
        s.lower_rate,
        s.upper_rate,
        s.lower_prefactor,
        s.upper_prefactor,
        s.alpha,
        s.radius,
    );
    let big_c = 8.0 * (2.0 * big_c1 - c1) / (c1 * c1);
    let x_max = c1 * a * m / 4.0;
    let am2 = a * m * m;
    match scenario {
        PzScenario::LargeRadius => {
            let l = -c2.ln();
            let need = 16.0 * (1.0 + l) / c1;
            if !(am2 >= need) {
                return Err(Error::Precondition(format!(
                    "large-radius scenario needs alpha M^2 >= 16(1 + ln(1/c2))/c1 = {need}, got {am2}"
                )));
            }
            let c_tilde = (1.0 - (-1.0f64).exp()).powi(2) * c2 * c2 / big_c2;
            Ok(PzConstants { c: c_tilde * (-big_c * c1 * (1.0 + l)).exp(), big_c, x_max })
        }
        PzScenario::UnitPrefactor { c_pp } => {
            if !(c_pp > 0.0) {
                return domain(format!("c'' must be > 0, got {c_pp}"));
            }
            if c2 != 1.0 {
                return Err(Error::Precondition(format!("unit-prefactor scenario needs c2 = 1, got {c2}")));
            }
            if !(am2 >= c_pp) {
                return Err(Error::Precondition(format!(
                    "unit-prefactor scenario needs alpha M^2 >= c'' = {c_pp}, got {am2}"
                )));
            }
            let lambda = c1 * c_pp / 16.0;
            let c_tilde = (-(-lambda).exp_m1()).powi(2) / big_c2;
            Ok(PzConstants { c: c_tilde * (-big_c * c1 * lambda).exp(), big_c, x_max })
        }
    }
}

/// The explicit-constant bound `c exp(-C x^2/alpha)` as a result.
pub fn pz_explicit_lower(s: &MgfSandwich, scenario: PzScenario, x: f64) -> Result<BoundResult> {
    check_x(x)?;
    let k = pz_explicit_constants(s, scenario)?;
    if x > k.x_max {
        return Ok(BoundResult::from_log(f64::NEG_INFINITY, Method::PzExplicit, false, "paley-zygmund")
            .with_window_flag(format!("0 <= x <= c1 alpha M/4 = {}", k.x_max)));
    }
    Ok(BoundResult::from_log(k.c.ln() - k.big_c * x * x / s.alpha, Method::PzExplicit, true, "paley-zygmund")
        .with_param("c", k.c)
        .with_param("C", k.big_c)
        .with_param("x_max", k.x_max))
}

/// A point of the reverse Chernoff-Cramér supremum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReverseChernoffParams {
    pub t: f64,
    pub t_prime: f64,
    pub theta: f64,
    pub delta: f64,
}

impl ReverseChernoffParams {
    fn feasible(&self, mgf: &LogMgf) -> bool {
        self.t > 0.0
            && self.t_prime >= 0.0
            && self.t_prime <= self.t
            && self.theta > 1.0
            && self.delta > 1.0
            && mgf.domain.contains(self.t * self.theta)
    }
}

/// The three log-terms `(A, B, C)` of the objective for an upper-side MGF.
fn rc_terms(mgf: &LogMgf, x: f64, p: &ReverseChernoffParams) -> (f64, f64, f64) {
    let ReverseChernoffParams { t, t_prime, theta, delta } = *p;
    let a = mgf.eval(t) - t * delta * x;
    let b = mgf.eval(t * theta) - t * delta * theta * x;
    let c = mgf.eval(t - t_prime) - (t * delta - t_prime) * x;
    (a, b, c)
}

fn rc_log_value(a: f64, b: f64, c: f64) -> f64 {
    if !a.is_finite() {
        return f64::NEG_INFINITY;
    }
    let r = 1.0 - (b - a).exp() - (c - a).exp();
    if r > 0.0 {
        a + r.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// The raw objective `phi(t)e^{-t delta x} - phi(t theta)e^{-t delta theta x}
/// - phi(t - t')e^{-(t delta - t')x}` for the requested side. Infeasible
/// parameters give `-inf`.
pub fn reverse_chernoff_objective(mgf: &LogMgf, x: f64, side: Side, p: &ReverseChernoffParams) -> f64 {
    let m = mgf.for_side(side);
    if !p.feasible(&m) {
        return f64::NEG_INFINITY;
    }
    let (a, b, c) = rc_terms(&m, x, p);
    a.exp() - b.exp() - c.exp()
}

fn sigmoid(b: f64) -> f64 {
    1.0 / (1.0 + (-b).exp())
}

fn unpack(v: &[f64]) -> ReverseChernoffParams {
    let t = v[0].exp();
    ReverseChernoffParams { t, t_prime: t * sigmoid(v[1]), theta: 1.0 + v[2].exp(), delta: 1.0 + v[3].exp() }
}

fn pack(p: &ReverseChernoffParams) -> [f64; 4] {
    let ratio = (p.t_prime / p.t).clamp(1e-6, 1.0 - 1e-6);
    [p.t.ln(), (ratio / (1.0 - ratio)).ln(), (p.theta - 1.0).ln(), (p.delta - 1.0).ln()]
}

const RC_T_POINTS: usize = 40;
const RC_DELTA_POINTS: usize = 20;

/// Upper end of the `t` grid.
fn rc_t_hi(m: &LogMgf, x: f64) -> f64 {
    let sup = m.sup_t();
    // Past t x = 745 every term underflows.
    let cap = 745.0 / x;
    if sup.is_finite() {
        (0.99 * sup).min(cap)
    } else {
        // Beyond twice the Chernoff tilt for 10x the objective is dominated by its last two terms.
        let t = chernoff_upper(m, 10.0 * x, Side::Upper)
            .map(|r| r.params_used.get("t").copied().unwrap_or(1.0))
            .unwrap_or(1.0);
        (2.0 * t).max(1e-2).min(cap)
    }
}

fn rc_result(log: f64, p: &ReverseChernoffParams) -> BoundResult {
    if log == f64::NEG_INFINITY {
        return BoundResult::from_log(log, Method::ReverseChernoff, false, "reverse-chernoff-cramer");
    }
    BoundResult::from_log(log, Method::ReverseChernoff, true, "reverse-chernoff-cramer")
        .with_param("t", p.t)
        .with_param("t_prime", p.t_prime)
        .with_param("theta", p.theta)
        .with_param("delta", p.delta)
}

/// Certified lower bound on the side's tail by searching the reverse
/// Chernoff-Cramér supremum: a grid over `(t, theta, delta)` with
/// `t' in {t, t/2, 0}`, then Nelder-Mead from the best cell.
pub fn reverse_chernoff_lower(
    mgf: &LogMgf,
    x: f64,
    side: Side,
    init: Option<ReverseChernoffParams>,
) -> Result<BoundResult> {
    if !(x > 0.0 && x.is_finite()) {
        return domain(format!("x must be finite and > 0, got {x}"));
    }
    let m = mgf.for_side(side);
    if !(m.sup_t() > 0.0) {
        return domain("MGF domain contains no t > 0");
    }
    let t_hi = rc_t_hi(&m, x);
    let t_lo = (1e-4 * t_hi).min(1e-3);
    let ts = log_space(t_lo, t_hi, RC_T_POINTS);
    let thetas: Vec<f64> = (1..=60).map(|i| 1.0 + 0.05 * i as f64).collect();
    let deltas: Vec<f64> = log_space(0.01, 9.0, RC_DELTA_POINTS).into_iter().map(|d| 1.0 + d).collect();

    let mut best = (f64::NEG_INFINITY, ReverseChernoffParams { t: 1.0, t_prime: 1.0, theta: 2.0, delta: 2.0 });
    for &t in &ts {
        let lt = m.eval(t);
        let lt_half = m.eval(0.5 * t);
        if !lt.is_finite() {
            continue;
        }
        for &theta in &thetas {
            let ltt = m.eval(t * theta);
            if !ltt.is_finite() {
                break;
            }
            for &delta in &deltas {
                let a = lt - t * delta * x;
                let b = ltt - t * delta * theta * x;
                for (tp, lrest) in [(t, 0.0), (0.5 * t, lt_half), (0.0, lt)] {
                    let c = lrest - (t * delta - tp) * x;
                    let v = rc_log_value(a, b, c);
                    if v > best.0 {
                        best = (v, ReverseChernoffParams { t, t_prime: tp, theta, delta });
                    }
                }
            }
        }
    }
    let mut starts = vec![best.1];
    if let Some(p) = init {
        if p.feasible(&m) {
            let (a, b, c) = rc_terms(&m, x, &p);
            let v = rc_log_value(a, b, c);
            if v > best.0 {
                best = (v, p);
            }
            starts.push(p);
        }
    }
    if best.0 > f64::NEG_INFINITY {
        for s in starts {
            let obj = |v: &[f64]| {
                let p = unpack(v);
                if !p.feasible(&m) {
                    return f64::INFINITY;
                }
                let (a, b, c) = rc_terms(&m, x, &p);
                -rc_log_value(a, b, c)
            };
            let (v, nv) = nelder_mead(obj, &pack(&s), 0.1, 2000, 1e-14);
            if -nv > best.0 {
                best = (-nv, unpack(&v));
            }
        }
    }
    Ok(rc_result(best.0, &best.1))
}

/// Tilt that makes `p + y/k` the mean of the exponentially tilted Bernoulli.
fn binomial_tilt(k: f64, p: f64, y: f64) -> f64 {
    let q = p + y / k;
    ((1.0 - p) * q / (p * (1.0 - q))).ln()
}

/// Closed-form relaxation `exp(-k h_p(p + delta x/k)) [1 - e^{-k h_{q'}(p + delta x/k)}
/// - e^{-k h_{q'}(p + x/k)}]` with `q' = p + delta' x/k`, `delta' = (1 + delta)/2`.
pub fn binomial_eq8_lower(k: u64, p: f64, x: f64, delta: f64) -> Result<f64> {
    let kf = k as f64;
    if !(x > 0.0 && delta > 1.0 && p + delta * x / kf < 1.0) {
        return domain("binomial certificate needs x > 0, delta > 1 and p + delta x/k < 1");
    }
    let dp = 0.5 * (1.0 + delta);
    let q_hi = p + delta * x / kf;
    let q_mid = p + dp * x / kf;
    let q_lo = p + x / kf;
    let head = -kf * bernoulli_kl(p, q_hi)?;
    let r = 1.0 - (-kf * bernoulli_kl(q_mid, q_hi)?).exp() - (-kf * bernoulli_kl(q_mid, q_lo)?).exp();
    Ok(if r > 0.0 { (head + r.ln()).exp() } else { 0.0 })
}

/// Reverse Chernoff-Cramér on `Bin(k, p)` with the tilts `t - t'`, `t`, `t theta`
/// matching the means `p + x/k`, `p + delta' x/k`, `p + delta x/k`; only `delta`
/// is searched, over `(1, k(1-p)/x)`.
pub fn binomial_reverse_chernoff(k: u64, p: f64, x: f64) -> Result<BoundResult> {
    let kf = k as f64;
    if !(x > 0.0) || !(x < kf * (1.0 - p)) {
        return domain(format!("binomial certificate needs 0 < x < k(1-p) = {}", kf * (1.0 - p)));
    }
    let mgf = DistSpec::Binomial { k, p }.log_mgf()?;
    let params = |delta: f64| {
        let t = binomial_tilt(kf, p, 0.5 * (1.0 + delta) * x);
        let tt = binomial_tilt(kf, p, delta * x);
        let tm = binomial_tilt(kf, p, x);
        ReverseChernoffParams { t, t_prime: t - tm, theta: tt / t, delta }
    };
    let log_at = |delta: f64| {
        let p = params(delta);
        if !p.feasible(&mgf) {
            return f64::NEG_INFINITY;
        }
        let (a, b, c) = rc_terms(&mgf, x, &p);
        rc_log_value(a, b, c)
    };
    let d_hi = kf * (1.0 - p) / x;
    // delta is searched in the variable u = ln(delta - 1) to resolve both ends.
    let u_lo = (1e-6f64).ln();
    let u_hi = ((d_hi - 1.0) * (1.0 - 1e-9)).ln();
    let n = 200;
    let us: Vec<f64> = (0..n).map(|i| u_lo + (u_hi - u_lo) * i as f64 / (n - 1) as f64).collect();
    let vals: Vec<f64> = us.iter().map(|&u| log_at(1.0 + u.exp())).collect();
    let (i, &v) = vals.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty");
    if v == f64::NEG_INFINITY {
        return Ok(rc_result(v, &params(2.0)));
    }
    let (u, nv) = golden_section(
        |u| -log_at(1.0 + u.exp()),
        us[i.saturating_sub(1)],
        us[(i + 1).min(n - 1)],
        200,
        1e-12,
    );
    let (u, v) = if -nv > v { (u, -nv) } else { (us[i], v) };
    Ok(rc_result(v, &params(1.0 + u.exp())))
}

/// A tail lower bound `x -> f(x)` claimed for `x >= valid_from`.
#[derive(Clone)]
pub struct TailLowerFn {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub valid_from: f64,
    pub certified: bool,
    pub params: BTreeMap<String, f64>,
}

impl fmt::Debug for TailLowerFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TailLowerFn")
            .field("valid_from", &self.valid_from)
            .field("certified", &self.certified)
            .field("params", &self.params)
            .finish_non_exhaustive()
    }
}

impl TailLowerFn {
    pub fn new<F>(valid_from: f64, certified: bool, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self { f: Arc::new(f), valid_from, certified, params: BTreeMap::new() }
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x).clamp(0.0, 1.0)
    }

    /// The value at `x` as a result; certified only inside the validity range.
    pub fn bound(&self, x: f64) -> BoundResult {
        let v = self.eval(x);
        let inside = x >= self.valid_from;
        let mut r = BoundResult::from_log(v.ln(), Method::Compose, self.certified && inside, "large-deviation-composition");
        r.params_used = self.params.clone();
        if !inside {
            r.outside_window = Some(format!("x >= {}", self.valid_from));
        }
        r
    }
}

/// Lower bound for `X = Y + Z` from a lower bound `T` on `Y`'s tail (valid for
/// `x >= w alpha`) and `phi_Z(t) <= exp(C1 alpha t^2)` on `[-M, 0]`:
/// `(1 - exp(-min{w^2/(16 C1), M w/4} alpha)) T(2x)` for `x >= w alpha/2`.
pub fn compose_sum_lower(tail: &TailLowerFn, w: f64, big_c1: f64, m: f64, alpha: f64) -> Result<TailLowerFn> {
    for (n, v) in [("w", w), ("C1", big_c1), ("alpha", alpha)] {
        if !(v > 0.0 && v.is_finite()) {
            return domain(format!("{n} must be finite and > 0, got {v}"));
        }
    }
    if !(m > 0.0) {
        return domain(format!("M must be > 0, got {m}"));
    }
    if tail.valid_from > w * alpha {
        return Err(Error::Precondition(format!(
            "input tail is valid from {} but composition needs it from w alpha = {}",
            tail.valid_from,
            w * alpha
        )));
    }
    let rate = (w * w / (16.0 * big_c1)).min(m * w / 4.0);
    let prefactor = -(-rate * alpha).exp_m1();
    let statement_rate = (w * w / (16.0 * big_c1 * big_c1)).min(m * w / 4.0);
    let inner = tail.clone();
    let mut out = TailLowerFn::new(w * alpha / 2.0, tail.certified, move |x| prefactor * inner.eval(2.0 * x));
    out.params.insert("prefactor".into(), prefactor);
    out.params.insert("exponent_rate".into(), rate);
    out.params.insert("statement_exponent_rate".into(), statement_rate);
    out.params.insert("statement_prefactor".into(), -(-statement_rate * alpha).exp_m1());
    Ok(out)
}

/// Converts sub-Gaussian tail constants into an MGF sandwich:
/// `P(Z >= x) >= c2t exp(-C2t x^2)` and `P(|Z| >= x) <= C3t exp(-c3t x^2)`
/// give `exp(c1 t^2) <= E e^{tZ} <= exp(C1 t^2)` for all `t >= 0`.
pub fn mgf_sandwich_from_tails(c2t: f64, big_c2t: f64, c3t: f64, big_c3t: f64) -> Result<MgfSandwich> {
    for (n, v) in [("c2", c2t), ("C2", big_c2t), ("c3", c3t), ("C3", big_c3t)] {
        if !(v > 0.0 && v.is_finite()) {
            return domain(format!("tail constant {n} must be finite and > 0, got {v}"));
        }
    }
    let e = std::f64::consts::E;
    let c4 = 2.0 * (big_c3t / 2.0).max(1.0) * (2.0 * c3t).powf(-0.5);
    let c5 = e * c4;
    let big_c1 = (2.0 * c5 * c5).max(4.0 * c5 * c5 + e * c4 * c4);
    let c1 = if c2t >= 1.0 {
        1.0 / (4.0 * big_c2t)
    } else {
        let g = c2t * (-big_c2t).exp();
        let m = 4.0 * g * big_c2t * (1.0 / c2t).ln();
        let c_bar = m.ln_1p() / m;
        (1.0 / (8.0 * big_c2t)).min(c_bar * g / 2.0)
    };
    MgfSandwich::new(c1.min(big_c1), big_c1, 1.0, 1.0, 1.0, f64::INFINITY, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::exact_tail;
    use crate::specfun::normal_tail;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn pz_gaussian_forced_lambda() {
        let s = MgfSandwich::gaussian(1.0);
        let r = pz_lower_with(&s, 1.0, Some(1.0)).unwrap();
        let t = 1.0 + 3f64.sqrt();
        let want = (1.0 - (-1.0f64).exp()).powi(2) * (-t * t).exp();
        assert!(close(r.value, want, 1e-12), "{} {}", r.value, want);
        assert!(close(r.value, 2.29e-4, 1e-2));
        assert!(r.value <= normal_tail(1.0));
        assert!(r.certified);
    }

    #[test]
    fn pz_x_zero_root() {
        let s = MgfSandwich::new(0.3, 0.8, 0.6, 1.4, 2.0, f64::INFINITY, false).unwrap();
        let r = pz_lower_with(&s, 0.0, Some(1.0)).unwrap();
        let l = 1.0 + (1.0f64 / 0.6).ln();
        let t0 = (l / (0.3 * 2.0)).sqrt();
        let want = (1.0 - (-1.0f64).exp()).powi(2) * 0.36 / 1.4 * (-2.0 * (1.6 - 0.3) * 2.0 * t0 * t0).exp();
        assert!(close(r.value, want, 1e-12));
        assert!(r.value > 0.0);
    }

    #[test]
    fn pz_infeasible_radius() {
        let s = MgfSandwich::new(0.5, 0.5, 1.0, 1.0, 1.0, 0.1, false).unwrap();
        let r = pz_lower(&s, 1.0).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(!r.certified);
    }

    #[test]
    fn pz_gaussian_grid_sound_and_monotone() {
        let s = MgfSandwich::gaussian(1.0);
        let mut prev = 1.0;
        for i in 0..=30 {
            let x = i as f64 * 0.1;
            let r = pz_lower(&s, x).unwrap();
            assert!(r.value > 0.0 && r.value <= normal_tail(x), "x={x}");
            assert!(r.value <= prev * (1.0 + 1e-12));
            prev = r.value;
        }
    }

    #[test]
    fn explicit_constants_gaussian() {
        let s = MgfSandwich::gaussian(1.0);
        let k = pz_explicit_constants(&s, PzScenario::LargeRadius).unwrap();
        assert!(close(k.big_c, 16.0, 1e-15));
        assert_eq!(k.x_max, f64::INFINITY);
        let ct = (1.0 - (-1.0f64).exp()).powi(2);
        assert!(close(k.c, ct * (-16.0 * 0.5f64).exp(), 1e-14));
        // c2 = 1: ln(1/c2) = 0.
        let s2 = MgfSandwich::new(0.4, 0.9, 1.0, 1.3, 3.0, 50.0, false).unwrap();
        let k2 = pz_explicit_constants(&s2, PzScenario::LargeRadius).unwrap();
        let ct2 = (1.0 - (-1.0f64).exp()).powi(2) / 1.3;
        assert!(close(k2.c, ct2 * (-k2.big_c * 0.4).exp(), 1e-14));
    }

    #[test]
    fn explicit_constants_preconditions() {
        let s = MgfSandwich::new(0.5, 0.5, 1.0, 1.0, 1.0, 2.0, false).unwrap();
        assert!(matches!(pz_explicit_constants(&s, PzScenario::LargeRadius), Err(Error::Precondition(_))));
        let k = pz_explicit_constants(&s, PzScenario::UnitPrefactor { c_pp: 4.0 }).unwrap();
        let lambda: f64 = 0.5 * 4.0 / 16.0;
        let want = (1.0 - (-lambda).exp()).powi(2) * (-16.0 * 0.5 * lambda).exp();
        assert!(close(k.c, want, 1e-14));
        assert!(matches!(
            pz_explicit_constants(&s, PzScenario::UnitPrefactor { c_pp: 5.0 }),
            Err(Error::Precondition(_))
        ));
        let s3 = MgfSandwich::new(0.5, 0.5, 0.9, 1.0, 1.0, 20.0, false).unwrap();
        assert!(pz_explicit_constants(&s3, PzScenario::UnitPrefactor { c_pp: 1.0 }).is_err());
    }

    #[test]
    fn explicit_constants_below_engine() {
        let s = MgfSandwich::new(0.4, 0.7, 0.8, 1.2, 2.0, 40.0, false).unwrap();
        let k = pz_explicit_constants(&s, PzScenario::LargeRadius).unwrap();
        for i in 0..100 {
            let x = k.x_max * i as f64 / 99.0;
            let explicit = pz_explicit_lower(&s, PzScenario::LargeRadius, x).unwrap().value;
            let engine = pz_lower(&s, x).unwrap().value;
            assert!(explicit <= engine * (1.0 + 1e-12), "x={x}: {explicit} > {engine}");
        }
    }

    #[test]
    fn binomial_eq8_value() {
        let v = binomial_eq8_lower(200, 0.3, 40.0, 2.0).unwrap();
        let head = -200.0 * bernoulli_kl(0.3, 0.7).unwrap();
        assert!(close(head, -67.78, 1e-4));
        assert!(close(v / head.exp(), 0.9698, 1e-3), "{}", v / head.exp());
        let ex = exact_tail(&DistSpec::Binomial { k: 200, p: 0.3 }, Side::Upper, 40.0).unwrap();
        assert!(v <= ex.value);
    }

    #[test]
    fn binomial_fast_path_dominates_eq8() {
        let r = binomial_reverse_chernoff(200, 0.3, 40.0).unwrap();
        let ex = exact_tail(&DistSpec::Binomial { k: 200, p: 0.3 }, Side::Upper, 40.0).unwrap();
        assert!(r.certified && r.value > 0.0);
        assert!(r.value <= ex.value);
        let e8 = binomial_eq8_lower(200, 0.3, 40.0, r.params_used["delta"]).unwrap();
        assert!(r.value >= e8 * (1.0 - 1e-12));
    }

    #[test]
    fn reverse_chernoff_normal_five() {
        let mgf = DistSpec::Normal { sigma2: 1.0 }.log_mgf().unwrap();
        let r = reverse_chernoff_lower(&mgf, 5.0, Side::Upper, None).unwrap();
        assert!(r.value > 0.0 && r.value <= normal_tail(5.0), "{}", r.value);
        let r = reverse_chernoff_lower(&mgf, 5.0, Side::Lower, None).unwrap();
        assert!(r.value > 0.0 && r.value <= normal_tail(5.0));
    }

    #[test]
    fn reverse_chernoff_theta_near_one_is_not_positive() {
        let mgf = DistSpec::Normal { sigma2: 1.0 }.log_mgf().unwrap();
        let p = ReverseChernoffParams { t: 1.0, t_prime: 1.0, theta: 1.0 + 1e-12, delta: 2.0 };
        assert!(reverse_chernoff_objective(&mgf, 1.0, Side::Upper, &p) <= 0.0);
    }

    #[test]
    fn reverse_chernoff_binomial_general_search() {
        let spec = DistSpec::Binomial { k: 200, p: 0.3 };
        let r = reverse_chernoff_lower(&spec.log_mgf().unwrap(), 40.0, Side::Upper, None).unwrap();
        let ex = exact_tail(&spec, Side::Upper, 40.0).unwrap();
        assert!(r.value > 0.0 && r.value <= ex.value);
    }

    #[test]
    fn reverse_chernoff_rejects_bad_input() {
        let mgf = DistSpec::Normal { sigma2: 1.0 }.log_mgf().unwrap();
        assert!(reverse_chernoff_lower(&mgf, 0.0, Side::Upper, None).is_err());
        let neg = LogMgf::new(crate::specfun::RealInterval::new(-1.0, 0.0, true, true), |t| t * t);
        assert!(reverse_chernoff_lower(&neg, 1.0, Side::Upper, None).is_err());
    }

    #[test]
    fn compose_example_and_limits() {
        let base = TailLowerFn::new(0.0, true, |x| (-x).exp() * 0.5);
        let out = compose_sum_lower(&base, 1.0, 0.5, 1.0, 25.0).unwrap();
        assert!(close(out.params["prefactor"], 1.0 - (-3.125f64).exp(), 1e-15));
        assert!(close(out.params["prefactor"], 0.9561, 1e-4));
        assert!(close(out.params["statement_exponent_rate"], 0.25, 1e-15));
        assert_eq!(out.valid_from, 12.5);
        for x in [12.5, 20.0, 40.0] {
            assert!(out.eval(x) <= base.eval(2.0 * x));
        }
        let mut prev = 0.0;
        for a in [1.0, 2.0, 5.0, 10.0, 50.0, 200.0] {
            let p = compose_sum_lower(&base, 1.0, 0.5, 1.0, a).unwrap().params["prefactor"];
            assert!(p >= prev && p <= 1.0);
            prev = p;
        }
        assert!(prev > 1.0 - 1e-10);
        let late = TailLowerFn::new(30.0, true, |_| 0.1);
        assert!(compose_sum_lower(&late, 1.0, 0.5, 1.0, 25.0).is_err());
    }

    #[test]
    fn compose_exponential_shape() {
        // T(x) = c0 exp(-C0 M x) keeps its exponential shape: log-slope doubles.
        let (c0, c0_rate, m) = (0.3, 0.7, 1.5);
        let base = TailLowerFn::new(0.0, true, move |x| c0 * (-c0_rate * m * x).exp());
        let out = compose_sum_lower(&base, 1.0, 0.5, m, 10.0).unwrap();
        let slope = (out.eval(8.0).ln() - out.eval(6.0).ln()) / 2.0;
        assert!(close(slope, -2.0 * c0_rate * m, 1e-12));
    }

    #[test]
    fn sandwich_from_tails_gaussian() {
        let s = mgf_sandwich_from_tails(0.15, 1.0, 0.5, 2.0).unwrap();
        assert!(close(s.lower_rate, 0.02305, 1e-3), "{}", s.lower_rate);
        assert!(close(s.upper_rate, 129.1, 1e-3), "{}", s.upper_rate);
        for i in 0..=100 {
            let t = i as f64 * 0.1;
            let ln_phi = 0.5 * t * t;
            assert!(s.lower_rate * t * t <= ln_phi + 1e-15);
            assert!(s.upper_rate * t * t >= ln_phi);
        }
        let s1 = mgf_sandwich_from_tails(1.5, 2.0, 0.5, 2.0).unwrap();
        assert!(close(s1.lower_rate, 1.0 / 8.0, 1e-15));
        let mut prev = f64::INFINITY;
        for big in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let c1 = mgf_sandwich_from_tails(0.15, big, 0.5, 2.0).unwrap().lower_rate;
            assert!(c1 <= prev);
            prev = c1;
        }
        assert!(mgf_sandwich_from_tails(0.0, 1.0, 0.5, 2.0).is_err());
    }

    fn rand_params(t: f64, tp: f64, th: f64, de: f64, sup: f64) -> ReverseChernoffParams {
        let t = t.min(sup / th * 0.999);
        ReverseChernoffParams { t, t_prime: t * tp, theta: th, delta: de }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]
        #[test]
        fn objective_below_tail_pointwise(
            which in 0usize..3, xs in 0.05f64..3.0, t in 0.01f64..3.0, tp in 0.0f64..1.0,
            th in 1.001f64..5.0, de in 1.001f64..8.0, upper in proptest::bool::ANY,
        ) {
            let spec = match which {
                0 => DistSpec::Binomial { k: 40, p: 0.3 },
                1 => DistSpec::Poisson { lambda: 5.0 },
                _ => DistSpec::Normal { sigma2: 2.0 },
            };
            let side = if upper { Side::Upper } else { Side::Lower };
            let x = xs * spec.variance().sqrt();
            let mgf = spec.log_mgf().unwrap();
            let p = rand_params(t, tp, th, de, f64::INFINITY);
            let v = reverse_chernoff_objective(&mgf, x, side, &p);
            let ex = exact_tail(&spec, side, x).unwrap();
            prop_assert!(v <= ex.value + 1e-9, "{v} > {}", ex.value);
        }

        #[test]
        fn pz_monotone_in_x(c in 0.1f64..1.0, extra in 0.0f64..1.0, m in 1.0f64..30.0, x in 0.0f64..3.0) {
            let s = MgfSandwich::new(c, c + extra, 1.0, 1.0, 1.0, m, false).unwrap();
            let a = pz_lower(&s, x).unwrap().value;
            let b = pz_lower(&s, x + 0.1).unwrap().value;
            prop_assert!(b <= a * (1.0 + 1e-9) + 1e-300);
        }
    }
}
