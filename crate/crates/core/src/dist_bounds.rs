//! Per-family tail bounds dispatched on [`DistSpec`].
//!
//! Upper bounds are the literature's closed forms. Lower bounds come in three
//! tiers: explicit formulas and exact boundary values, numeric certificates
//! from the lower-bound engines, and rate forms with caller-chosen constants
//! (never certified).

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bound_result::{BoundResult, Method};
use crate::dist_model::{DistSpec, Lattice, LatticeLaw, Side, WeightVector};
use crate::engine_lower::{binomial_reverse_chernoff, pz_lower, reverse_chernoff_lower};
use crate::engine_upper::{chernoff_upper, MgfSandwich};
use crate::error::{domain, Error, Result};
use crate::oracle::{exact_tail_with, ln_one_minus_binomial_zero, OracleConfig};
use crate::specfun::{bennett_psi, bernoulli_kl, ln1m_exp, log_gamma};

/// Requested strength of a lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tier", rename_all = "snake_case")]
pub enum BoundTier {
    ClosedFormCertified,
    NumericCertified,
    RateForm {
        c: f64,
        #[serde(rename = "C")]
        big_c: f64,
    },
}

impl BoundTier {
    /// Rate form with the placeholder constants `c = C = 1`.
    pub fn rate_default() -> Self {
        BoundTier::RateForm { c: 1.0, big_c: 1.0 }
    }

    pub fn is_certified(&self) -> bool {
        !matches!(self, BoundTier::RateForm { .. })
    }
}

/// Window parameter `beta > 1` for the binomial, Rademacher, Poisson, gamma
/// and noncentral lower-tail rate forms.
pub const DEFAULT_BETA: f64 = 2.0;
/// Window parameter `eta > 1` for the beta rate forms.
pub const DEFAULT_ETA: f64 = 2.0;
/// Window constant `c''` for the weighted chi-square lower-tail rate form.
pub const DEFAULT_C_PP: f64 = 1.0;
/// Window constant `c'` for the Irwin-Hall rate form.
pub const DEFAULT_C_PRIME: f64 = 0.5;

fn check_x(x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        domain(format!("x must be finite and >= 0, got {x}"))
    }
}

fn weights(spec: &DistSpec) -> Option<WeightVector> {
    match spec {
        DistSpec::WeightedChiSq { weights } => WeightVector::new(weights.clone()).ok(),
        _ => None,
    }
}

/// True when the side's tail at `x` is exactly zero.
fn in_zero_region(spec: &DistSpec, side: Side, x: f64) -> bool {
    if let Some(lat) = spec.lattice() {
        return match side {
            Side::Upper => lat.max_index().is_some_and(|m| lat.upper_index(x) > m as i64),
            Side::Lower => lat.lower_index(x) < 0,
        };
    }
    match (spec, side) {
        (DistSpec::Beta { .. }, _) | (DistSpec::IrwinHall { .. }, _) => x >= spec.max_deviation(side),
        (DistSpec::Normal { .. }, _) | (_, Side::Upper) => false,
        // Y >= 0 and continuous: P(Y <= m - x) = 0 once x >= m.
        (_, Side::Lower) => x >= spec.max_deviation(side),
    }
}

/// For lattice families, the smallest attained deviation `x_eff >= x` with
/// the same tail event.
fn effective_x(lat: &Lattice, side: Side, x: f64) -> f64 {
    match side {
        Side::Upper => lat.upper_point(lat.upper_index(x)),
        Side::Lower => lat.lower_point(lat.lower_index(x)),
    }
    .max(x)
}

/// `ln([(a + x + 1)^a - (a + x)^a] / (e^{a + x} Gamma(a + 1)))`.
fn ln_gamma_small_core(alpha: f64, x: f64) -> f64 {
    let s = alpha + x;
    alpha * s.ln() + (alpha * (1.0 / s).ln_1p()).exp_m1().ln() - s - log_gamma(alpha + 1.0)
}

/// The explicit small-shape gamma bracket `(lower, upper)` on the side's tail;
/// needs `0 < alpha < 1`.
pub fn gamma_small_alpha_bracket(alpha: f64, side: Side, x: f64) -> Result<(f64, f64)> {
    check_x(x)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("explicit gamma bracket needs 0 < alpha < 1, got {alpha}"));
    }
    let e = std::f64::consts::E;
    Ok(match side {
        Side::Upper => {
            let core = ln_gamma_small_core(alpha, x);
            ((core - 1.0).exp(), (core + (e / (e - 1.0)).ln()).exp())
        }
        Side::Lower => {
            if x >= alpha {
                (0.0, 0.0)
            } else {
                let core = alpha * (alpha - x).ln() - log_gamma(alpha + 1.0);
                ((core - 1.0).exp(), core.exp())
            }
        }
    })
}

fn closed(log: f64, cite: &str) -> BoundResult {
    BoundResult::from_log(log, Method::ClosedForm, true, cite)
}

/// `s` solving `2 b s^2 + 2 a s = x`, so that `P(X >= x) <= e^{-s^2}` under
/// the Laurent-Massart form `P(X >= 2a sqrt(t) + 2b t) <= e^{-t}`.
fn laurent_massart_exponent(a: f64, b: f64, x: f64) -> f64 {
    // (-a + sqrt(a^2 + 2bx))/(2b), written to avoid cancellation.
    let s = x / (a + (a * a + 2.0 * b * x).sqrt());
    s * s
}

/// The tightest closed-form upper bound on the side's tail at `x`.
///
/// Outside a formula's stated window the bound falls back to the numeric
/// Chernoff optimum on the exact MGF and records the window in
/// `outside_window`.
pub fn upper_bound(spec: &DistSpec, side: Side, x: f64) -> Result<BoundResult> {
    spec.validate()?;
    check_x(x)?;
    if in_zero_region(spec, side, x) {
        return Ok(BoundResult::from_log(f64::NEG_INFINITY, Method::ZeroRegion, true, "support"));
    }
    let mut cands: Vec<BoundResult> = Vec::new();
    match (spec, side) {
        (DistSpec::Gamma { alpha }, Side::Upper) => {
            let a = *alpha;
            cands.push(closed(-x * x / (x + a + (a * a + 2.0 * x * a).sqrt()), "gamma-sub-gamma"));
            if a < 1.0 {
                cands.push(closed(gamma_small_alpha_bracket(a, side, x)?.1.ln(), "gamma-small-shape"));
            }
        }
        (DistSpec::Gamma { alpha }, Side::Lower) => {
            cands.push(closed(-x * x / (2.0 * alpha), "gamma-sub-gamma"));
            if *alpha < 1.0 {
                cands.push(closed(gamma_small_alpha_bracket(*alpha, side, x)?.1.ln(), "gamma-small-shape"));
            }
        }
        (DistSpec::ChiSq { k }, Side::Upper) => {
            let k = *k as f64;
            cands.push(closed(-x * x / (2.0 * (k + x) + 2.0 * (k * k + 2.0 * k * x).sqrt()), "laurent-massart"));
        }
        (DistSpec::ChiSq { k }, Side::Lower) => {
            cands.push(closed(-x * x / (4.0 * *k as f64), "laurent-massart"));
        }
        (DistSpec::WeightedChiSq { .. }, Side::Upper) => {
            let u = weights(spec).expect("validated");
            cands.push(closed(-laurent_massart_exponent(u.l2(), u.linf(), x), "laurent-massart"));
        }
        (DistSpec::WeightedChiSq { .. }, Side::Lower) => {
            let u = weights(spec).expect("validated");
            cands.push(closed(-x * x / (4.0 * u.l2_sq()), "laurent-massart"));
        }
        (DistSpec::NoncentralChiSq { k, lambda }, Side::Upper) => {
            let v = *k as f64 + 2.0 * lambda;
            cands.push(closed(-laurent_massart_exponent(v.sqrt(), 1.0, x), "birge"));
        }
        (DistSpec::NoncentralChiSq { k, lambda }, Side::Lower) => {
            let v = *k as f64 + 2.0 * lambda;
            cands.push(closed(-x * x / (4.0 * v), "birge"));
        }
        (DistSpec::Beta { alpha, beta }, _) => {
            cands.push(closed(-2.0 * (alpha + beta + 1.0) * x * x, "marchal-beta"));
        }
        (DistSpec::Binomial { k, p }, _) => {
            let kf = *k as f64;
            let v = match side {
                Side::Upper => p + x / kf,
                Side::Lower => p - x / kf,
            };
            cands.push(closed(-kf * bernoulli_kl(*p, v.clamp(0.0, 1.0))?, "kl-binomial"));
        }
        (DistSpec::Poisson { lambda }, Side::Upper) => {
            let t = x / lambda;
            cands.push(closed(-x * x / (2.0 * lambda) * bennett_psi(t)?, "bennett-poisson"));
        }
        (DistSpec::Poisson { lambda }, Side::Lower) => {
            let l = *lambda;
            if x >= 1.0 && x <= l {
                let log = if x >= l { -l } else { -x * x / (2.0 * l) * bennett_psi(-x / l)? };
                cands.push(closed(log, "bennett-poisson"));
            } else {
                let r = chernoff_upper(&spec.log_mgf()?, x, side)?;
                return Ok(r.with_window_flag(format!("1 <= x <= lambda = {l}")));
            }
        }
        (DistSpec::IrwinHall { k }, _) => {
            let kf = *k as f64;
            cands.push(closed(-kf * bernoulli_kl(0.5, (0.5 + x / kf).min(1.0))?, "irwin-hall-kl"));
            cands.push(closed(-x * x / kf, "irwin-hall-kl"));
        }
        (DistSpec::RademacherSum { k }, _) => {
            let kf = *k as f64;
            cands.push(closed(-x * x / (4.0 * kf), "rademacher-hoeffding"));
            cands.push(closed(-kf * bernoulli_kl(0.5, (0.5 + x / (2.0 * kf)).min(1.0))?, "kl-binomial"));
        }
        (DistSpec::Normal { sigma2 }, _) => {
            cands.push(closed(-x * x / (2.0 * sigma2), "gaussian-chernoff"));
        }
    }
    Ok(cands
        .into_iter()
        .min_by(|a, b| a.log_value.total_cmp(&b.log_value))
        .expect("every family has a closed form"))
}

/// Upper rate forms with the literature's existential constant `c`
/// (never certified). Beta carries the prefactor 2.
pub fn upper_rate_form(spec: &DistSpec, side: Side, x: f64, c: f64) -> Result<BoundResult> {
    spec.validate()?;
    check_x(x)?;
    if !(c > 0.0) {
        return domain(format!("rate constant must be > 0, got {c}"));
    }
    let (prefactor, rate): (f64, f64) = match (spec, side) {
        (DistSpec::Gamma { alpha }, Side::Upper) if *alpha >= 1.0 => (1.0, x.min(x * x / alpha)),
        (DistSpec::Beta { alpha, beta }, _) => {
            let (a, b) = (*alpha, *beta);
            if a < 1.0 || b < 1.0 {
                return Err(Error::Window(format!("beta rate form needs alpha, beta >= 1, got ({a}, {b})")));
            }
            let lim = spec.max_deviation(side);
            if !(x > 0.0 && x < lim) {
                return Err(Error::Window(format!("beta rate form needs 0 < x < {lim}")));
            }
            // The lower side swaps the roles of alpha and beta.
            let (a, b) = if side == Side::Upper { (a, b) } else { (b, a) };
            (2.0, if b > a { (b * b * x * x / a).min(b * x) } else { a * a * x * x / b })
        }
        (DistSpec::WeightedChiSq { .. }, Side::Upper) => {
            let u = weights(spec).expect("validated");
            (1.0, (x * x / u.l2_sq()).min(x / u.linf()))
        }
        (DistSpec::NoncentralChiSq { k, lambda }, Side::Upper) => {
            let v = *k as f64 + 2.0 * lambda;
            (1.0, (x * x / v).min(x))
        }
        _ => {
            return Err(Error::Unsupported(format!(
                "{} {} upper bound is explicit; use upper_bound",
                spec.family(),
                side.as_str()
            )))
        }
    };
    let mut r = BoundResult::from_log(prefactor.ln() - c * rate, Method::RateForm, false, "rate-form-upper");
    r.params_used.insert("c".into(), c);
    r.params_used.insert("rate".into(), rate);
    Ok(r)
}

/// The rate `r(x)` of the side's lower rate form `c exp(-C r(x))`, after
/// checking the stated validity window.
pub fn rate_exponent(spec: &DistSpec, side: Side, x: f64) -> Result<f64> {
    spec.validate()?;
    check_x(x)?;
    let win = |ok: bool, cond: String| if ok { Ok(()) } else { Err(Error::Window(cond)) };
    let beta = DEFAULT_BETA;
    match (spec, side) {
        (DistSpec::Gamma { alpha }, _) if *alpha < 1.0 => Err(Error::Window(format!(
            "gamma rate form needs alpha >= 1 (got {alpha}); the small-shape bound is explicit"
        ))),
        (DistSpec::Gamma { alpha }, Side::Upper) => Ok(x.min(x * x / alpha)),
        (DistSpec::Gamma { alpha }, Side::Lower) => {
            win(x <= alpha / beta, format!("0 <= x <= alpha/beta = {}", alpha / beta))?;
            Ok(x * x / alpha)
        }
        (DistSpec::ChiSq { k }, Side::Upper) => {
            win(x > 0.0, "x > 0".into())?;
            let k = *k as f64;
            Ok(x.min(x * x / k))
        }
        (DistSpec::ChiSq { k }, Side::Lower) => {
            let k = *k as f64;
            let hi = k / beta;
            win(x > 0.0 && x < hi, format!("0 < x < (1 - eps) k = {hi}"))?;
            Ok(x * x / k)
        }
        (DistSpec::WeightedChiSq { .. }, Side::Upper) => {
            let u = weights(spec).expect("validated");
            Ok((x * x / u.l2_sq()).min(x / u.linf()))
        }
        (DistSpec::WeightedChiSq { .. }, Side::Lower) => {
            let u = weights(spec).expect("validated");
            let hi = DEFAULT_C_PP * u.l2_sq() / u.linf();
            win(x <= hi, format!("0 <= x <= c'' |u|_2^2/|u|_inf = {hi}"))?;
            Ok(x * x / u.l2_sq())
        }
        (DistSpec::NoncentralChiSq { k, lambda }, Side::Upper) => {
            let v = *k as f64 + 2.0 * lambda;
            Ok((x * x / v).min(x))
        }
        (DistSpec::NoncentralChiSq { k, lambda }, Side::Lower) => {
            let v = *k as f64 + 2.0 * lambda;
            let hi = (*k as f64 + lambda) / beta;
            win(x > 0.0 && x <= hi, format!("0 < x <= (k + lambda)/beta = {hi}"))?;
            Ok(x * x / v)
        }
        (DistSpec::Beta { alpha, beta: b }, _) => {
            let (a, b) = (*alpha, *b);
            win(a >= 1.0 && b >= 1.0, format!("alpha, beta >= 1 (got {a}, {b})"))?;
            let (a, b) = if side == Side::Upper { (a, b) } else { (b, a) };
            let hi = b / (DEFAULT_ETA * (a + b));
            win(x > 0.0 && x <= hi, format!("0 < x <= {}/(eta(alpha + beta)) = {hi}", if side == Side::Upper { "beta" } else { "alpha" }))?;
            Ok(if b > a { (b * b * x * x / a).min(b * x) } else { a * a * x * x / b })
        }
        (DistSpec::Binomial { k, p }, Side::Upper) => {
            let kf = *k as f64;
            let hi = kf * (1.0 - p) / beta;
            win(x <= hi && x + kf * p >= 1.0, format!("0 <= x <= k(1-p)/beta = {hi} and x + kp >= 1"))?;
            Ok(kf * bernoulli_kl(*p, p + x / kf)?)
        }
        (DistSpec::Binomial { k, p }, Side::Lower) => {
            let kf = *k as f64;
            let hi = kf * p / beta;
            win(x <= hi && x + kf * (1.0 - p) >= 1.0, format!("0 <= x <= kp/beta = {hi} and x + k(1-p) >= 1"))?;
            Ok(kf * bernoulli_kl(*p, p - x / kf)?)
        }
        (DistSpec::Poisson { lambda }, Side::Upper) => {
            win(x + lambda >= 1.0, "x >= 0 and x + lambda >= 1".into())?;
            Ok(x * x / (2.0 * lambda) * bennett_psi(x / lambda)?)
        }
        (DistSpec::Poisson { lambda }, Side::Lower) => {
            let hi = lambda / beta;
            win(x <= hi, format!("0 <= x <= lambda/beta = {hi}"))?;
            Ok(x * x / (2.0 * lambda) * bennett_psi(-x / lambda)?)
        }
        (DistSpec::IrwinHall { k }, _) => {
            let kf = *k as f64;
            let hi = DEFAULT_C_PRIME * kf;
            win(x <= hi, format!("0 <= x <= c' k = {hi}"))?;
            Ok(x * x / kf)
        }
        (DistSpec::RademacherSum { k }, _) => {
            let kf = *k as f64;
            let hi = kf / beta;
            win(x <= hi, format!("0 <= x <= k/beta = {hi}"))?;
            Ok(x * x / kf)
        }
        (DistSpec::Normal { .. }, _) => Err(Error::Unsupported("normal has no rate-form lower bound".into())),
    }
}

/// MGF brackets for the families that have them, oriented so that the
/// requested side is an upper tail.
pub fn family_sandwich(spec: &DistSpec, side: Side) -> Option<MgfSandwich> {
    let mk = |c1: f64, big_c1: f64, alpha: f64, m: f64| MgfSandwich::new(c1, big_c1, 1.0, 1.0, alpha, m, false).ok();
    match (spec, side) {
        (DistSpec::Gamma { alpha }, Side::Upper) => mk(0.5, 5.0, *alpha, 0.9),
        (DistSpec::Gamma { alpha }, Side::Lower) => mk(1.0 / 3.0, 0.5, *alpha, 0.5),
        // chi^2_k = 2 Gamma(k/2): phi(t) = phi_gamma(2t).
        (DistSpec::ChiSq { k }, Side::Upper) => mk(1.0, 10.0, *k as f64, 0.45),
        (DistSpec::ChiSq { k }, Side::Lower) => mk(2.0 / 3.0, 1.0, *k as f64, 0.25),
        (DistSpec::WeightedChiSq { .. }, _) => {
            let u = weights(spec)?;
            match side {
                Side::Upper => mk(1.0, 5.0, u.l2_sq(), 2.0 / (5.0 * u.linf())),
                Side::Lower => mk(2.0 / 3.0, 1.0, u.l2_sq(), 1.0 / (4.0 * u.linf())),
            }
        }
        (DistSpec::NoncentralChiSq { k, lambda }, _) => {
            let v = *k as f64 + 2.0 * lambda;
            match side {
                Side::Upper => mk(1.0, 5.0, v, 0.4),
                Side::Lower => mk(2.0 / 3.0, 1.0, v, 0.25),
            }
        }
        (DistSpec::IrwinHall { k }, _) => mk(0.25f64.cosh().ln(), 0.125, *k as f64, 1.0),
        (DistSpec::Normal { sigma2 }, _) => Some(MgfSandwich::gaussian(*sigma2)),
        _ => None,
    }
}

/// Exact boundary values and explicit formulas; `None` if the family has none at `x`.
fn closed_form_lower(spec: &DistSpec, side: Side, x: f64) -> Result<Option<BoundResult>> {
    if in_zero_region(spec, side, x) {
        return Ok(Some(BoundResult::zero(Method::ZeroRegion, "support")));
    }
    if let Some(lat) = spec.lattice() {
        let r = match (lat.law, side) {
            (LatticeLaw::Binomial { k, p }, Side::Upper) if lat.upper_index(x) == 1 => {
                Some(BoundResult::from_log(ln_one_minus_binomial_zero(k, p), Method::BoundaryExact, true, "binomial-boundary"))
            }
            (LatticeLaw::Binomial { k, p }, Side::Lower) if lat.lower_index(x) == k as i64 - 1 => Some(
                BoundResult::from_log(ln_one_minus_binomial_zero(k, 1.0 - p), Method::BoundaryExact, true, "binomial-boundary"),
            ),
            (LatticeLaw::Poisson { lambda }, Side::Upper) if lat.upper_index(x) == 1 => {
                Some(BoundResult::from_log(ln1m_exp(lambda), Method::BoundaryExact, true, "poisson-boundary"))
            }
            // Single-atom tails.
            (LatticeLaw::Poisson { lambda }, Side::Lower) if lat.lower_index(x) == 0 => {
                Some(BoundResult::from_log(-lambda, Method::BoundaryExact, true, "poisson-atom"))
            }
            (LatticeLaw::Binomial { k, p }, Side::Lower) if lat.lower_index(x) == 0 => {
                Some(BoundResult::from_log(k as f64 * (-p).ln_1p(), Method::BoundaryExact, true, "binomial-atom"))
            }
            (LatticeLaw::Binomial { k, p }, Side::Upper) if lat.upper_index(x) == k as i64 => {
                Some(BoundResult::from_log(k as f64 * p.ln(), Method::BoundaryExact, true, "binomial-atom"))
            }
            _ => None,
        };
        return Ok(r);
    }
    if let DistSpec::Gamma { alpha } = spec {
        if *alpha < 1.0 {
            let lo = gamma_small_alpha_bracket(*alpha, side, x)?.0;
            return Ok(Some(closed(lo.ln(), "gamma-small-shape")));
        }
    }
    Ok(None)
}

/// Strictly positive `x` at which to run the engines; the tail at `x` is at
/// least the tail there.
fn engine_x(spec: &DistSpec, side: Side, x: f64) -> f64 {
    let x = match spec.lattice() {
        Some(lat) => effective_x(&lat, side, x),
        None => x,
    };
    x.max(1e-9 * spec.variance().sqrt())
}

fn numeric_lower(spec: &DistSpec, side: Side, x: f64) -> Result<BoundResult> {
    let mut cands: Vec<BoundResult> = Vec::new();
    if let Some(r) = closed_form_lower(spec, side, x)? {
        if r.method == Method::ZeroRegion {
            return Ok(r);
        }
        cands.push(r);
    }
    let xe = engine_x(spec, side, x);
    let mgf = spec.log_mgf_numeric()?;
    cands.push(reverse_chernoff_lower(&mgf, xe, side, None)?);
    let binomial = match (spec, side) {
        (DistSpec::Binomial { k, p }, Side::Upper) => Some((*k, *p, xe)),
        (DistSpec::Binomial { k, p }, Side::Lower) => Some((*k, 1.0 - p, xe)),
        (DistSpec::RademacherSum { k }, _) => Some((*k, 0.5, xe / 2.0)),
        _ => None,
    };
    if let Some((k, p, y)) = binomial {
        if y < k as f64 * (1.0 - p) {
            cands.push(binomial_reverse_chernoff(k, p, y)?);
        }
    }
    if let Some(s) = family_sandwich(spec, side) {
        cands.push(pz_lower(&s, x)?);
    }
    let best = cands
        .into_iter()
        .filter(|r| r.certified)
        .max_by(|a, b| a.log_value.total_cmp(&b.log_value));
    Ok(match best {
        Some(mut r) => {
            if xe != x {
                r.params_used.insert("x_eff".into(), xe);
            }
            r
        }
        None => BoundResult::none("none"),
    })
}

/// A lower bound on the side's tail at `x` in the requested tier.
pub fn lower_bound(spec: &DistSpec, side: Side, x: f64, tier: BoundTier) -> Result<BoundResult> {
    spec.validate()?;
    check_x(x)?;
    match tier {
        BoundTier::ClosedFormCertified => Ok(closed_form_lower(spec, side, x)?.unwrap_or_else(|| BoundResult::none("none"))),
        BoundTier::NumericCertified => numeric_lower(spec, side, x),
        BoundTier::RateForm { c, big_c } => {
            if !(c > 0.0 && big_c > 0.0) {
                return domain(format!("rate constants must be > 0, got c={c}, C={big_c}"));
            }
            let r = rate_exponent(spec, side, x)?;
            let mut out = BoundResult::from_log(c.ln() - big_c * r, Method::RateForm, false, "rate-form-lower");
            out.params_used.insert("c".into(), c);
            out.params_used.insert("C".into(), big_c);
            out.params_used.insert("rate".into(), r);
            Ok(out)
        }
    }
}

/// Families whose certified bounds are only reported inside a stated window
/// of `x`; outside it the CLI refuses the request.
pub fn certified_window(spec: &DistSpec, side: Side) -> Option<(f64, String)> {
    match spec {
        DistSpec::Beta { .. } => {
            let hi = spec.max_deviation(side);
            let name = if side == Side::Upper { "beta/(alpha+beta)" } else { "alpha/(alpha+beta)" };
            Some((hi, format!("0 <= x <= {name} = {hi}")))
        }
        _ => None,
    }
}

/// Rate-form constants fitted to oracle tails. Empirical: nothing guarantees
/// them beyond the fitted grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub c_hat: f64,
    #[serde(rename = "C_hat")]
    pub big_c_hat: f64,
    pub n_points: usize,
}

/// Tangent to the lower envelope of `(rate_i, ln tail_i)` at the mean rate:
/// maximizes `ln c - C mean(rate)` subject to `ln c - C rate_i <= ln tail_i`
/// and `C >= 0`. Among maximizers the smallest `C` is returned.
pub fn fit_rate_curve(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = points.iter().filter(|p| p.1 > 0.0).map(|&(r, t)| (r, t.ln())).collect();
    if pts.is_empty() {
        return Err(Error::Window("no grid point with a positive tail inside the window".into()));
    }
    let mean = pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64;
    let ln_c = |c: f64| pts.iter().map(|p| p.1 + c * p.0).fold(f64::INFINITY, f64::min);
    let obj = |c: f64| ln_c(c) - c * mean;
    let mut cands = vec![0.0];
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            if a.0 != b.0 {
                let c = (b.1 - a.1) / (a.0 - b.0);
                if c > 0.0 && c.is_finite() {
                    cands.push(c);
                }
            }
        }
    }
    cands.sort_by(f64::total_cmp);
    let mut best = (f64::NEG_INFINITY, 0.0);
    for c in cands {
        let v = obj(c);
        // Relative slack so that ties resolve to the smaller C.
        if best.0 == f64::NEG_INFINITY || v > best.0 + 1e-12 * (1.0 + best.0.abs()) {
            best = (v, c);
        }
    }
    let c_big = best.1;
    Ok((ln_c(c_big).exp(), c_big))
}

/// Fits `(c_hat, C_hat)` so that `c_hat exp(-C_hat rate(x)) <= tail(x)` on the
/// grid. Points outside the rate form's window are skipped; Monte Carlo tails
/// use their lower confidence limit.
pub fn fit_rate_constants(side: Side, grid: &[(DistSpec, f64)], cfg: &OracleConfig) -> Result<RateFit> {
    if grid.is_empty() {
        return Err(Error::Window("empty fitting grid".into()));
    }
    let pts: Vec<Option<(f64, f64)>> = grid
        .par_iter()
        .map(|(spec, x)| -> Result<Option<(f64, f64)>> {
            let r = match rate_exponent(spec, side, *x) {
                Ok(r) => r,
                Err(Error::Window(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let t = exact_tail_with(spec, side, *x, cfg)?;
            Ok(Some((r, t.lo())))
        })
        .collect::<Result<_>>()?;
    let pts: Vec<(f64, f64)> = pts.into_iter().flatten().collect();
    let n = pts.len();
    let (c, big_c) = fit_rate_curve(&pts)?;
    Ok(RateFit { c_hat: c, big_c_hat: big_c, n_points: n })
}

/// `n h_{lambda/n}((x + lambda)/n) - (x^2/(2 lambda)) psi(x/lambda)`, the gap
/// between the binomial rate and its Poisson limit.
pub fn poisson_limit_check(lambda: f64, x: f64, n: u64) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return domain(format!("lambda must be finite and > 0, got {lambda}"));
    }
    check_x(x)?;
    let nf = n as f64;
    if !(nf >= lambda + x) {
        return domain(format!("n must be >= lambda + x = {}, got {n}", lambda + x));
    }
    let binom = nf * bernoulli_kl(lambda / nf, (x + lambda) / nf)?;
    let limit = x * x / (2.0 * lambda) * bennett_psi(x / lambda)?;
    Ok(binom - limit)
}

/// One entry of the exported bound catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub family: String,
    pub side: Side,
    pub tier: String,
    pub formula_cite: String,
    pub window: BTreeMap<String, String>,
}

fn entry(family: &str, side: Side, tier: &str, cite: &str, window: &[(&str, &str)]) -> CatalogEntry {
    CatalogEntry {
        family: family.into(),
        side,
        tier: tier.into(),
        formula_cite: cite.into(),
        window: window.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
    }
}

/// The per-family catalog of implemented bounds and their windows.
pub fn bound_catalog() -> Vec<CatalogEntry> {
    use Side::{Lower, Upper};
    let all = [("condition", "x >= 0")];
    let numeric = "numeric_certified";
    let mut v = vec![
        entry("gamma", Upper, "upper", "gamma-sub-gamma", &all),
        entry("gamma", Upper, "upper", "gamma-small-shape", &[("condition", "x >= 0"), ("alpha", "< 1")]),
        entry("gamma", Lower, "upper", "gamma-sub-gamma", &all),
        entry("gamma", Upper, "closed_form_certified", "gamma-small-shape", &[("condition", "x >= 0"), ("alpha", "< 1")]),
        entry("gamma", Lower, "closed_form_certified", "gamma-small-shape", &[("condition", "0 <= x < alpha"), ("alpha", "< 1")]),
        entry("gamma", Lower, "closed_form_certified", "support", &[("condition", "x >= alpha")]),
        entry("gamma", Upper, "rate_form", "gamma-rate", &[("condition", "x >= 0"), ("alpha", ">= 1")]),
        entry("gamma", Lower, "rate_form", "gamma-rate", &[("condition", "0 <= x <= alpha/beta"), ("beta", "2")]),
        entry("chisq", Upper, "upper", "laurent-massart", &all),
        entry("chisq", Lower, "upper", "laurent-massart", &all),
        entry("chisq", Upper, "rate_form", "chisq-rate", &[("condition", "x > 0")]),
        entry("chisq", Lower, "rate_form", "chisq-rate", &[("condition", "0 < x < (1 - eps) k"), ("eps", "1/2")]),
        entry("weighted_chisq", Upper, "upper", "laurent-massart", &all),
        entry("weighted_chisq", Lower, "upper", "laurent-massart", &all),
        entry("weighted_chisq", Upper, "rate_form", "weighted-chisq-rate", &all),
        entry("weighted_chisq", Lower, "rate_form", "weighted-chisq-rate", &[("condition", "0 <= x <= c'' |u|_2^2/|u|_inf"), ("c''", "1")]),
        entry("noncentral_chisq", Upper, "upper", "birge", &all),
        entry("noncentral_chisq", Lower, "upper", "birge", &all),
        entry("noncentral_chisq", Upper, "rate_form", "noncentral-chisq-rate", &all),
        entry("noncentral_chisq", Lower, "rate_form", "noncentral-chisq-rate", &[("condition", "0 < x <= (k + lambda)/beta"), ("beta", "2")]),
        entry("beta", Upper, "upper", "marchal-beta", &[("condition", "0 <= x <= beta/(alpha+beta)")]),
        entry("beta", Lower, "upper", "marchal-beta", &[("condition", "0 <= x <= alpha/(alpha+beta)")]),
        entry("beta", Upper, "rate_form", "beta-rate", &[("condition", "0 < x <= beta/(eta(alpha+beta))"), ("eta", "2")]),
        entry("beta", Lower, "rate_form", "beta-rate", &[("condition", "0 < x <= alpha/(eta(alpha+beta))"), ("eta", "2")]),
        entry("binomial", Upper, "upper", "kl-binomial", &[("condition", "0 <= x <= k(1-p)")]),
        entry("binomial", Lower, "upper", "kl-binomial", &[("condition", "0 <= x <= kp")]),
        entry("binomial", Upper, "closed_form_certified", "binomial-boundary", &[("condition", "0 < kp + x <= 1")]),
        entry("binomial", Lower, "closed_form_certified", "binomial-boundary", &[("condition", "0 < k(1-p) + x <= 1")]),
        entry("binomial", Upper, "rate_form", "binomial-rate", &[("condition", "0 <= x <= k(1-p)/beta, x + kp >= 1"), ("beta", "2")]),
        entry("binomial", Lower, "rate_form", "binomial-rate", &[("condition", "0 <= x <= kp/beta, x + k(1-p) >= 1"), ("beta", "2")]),
        entry("poisson", Upper, "upper", "bennett-poisson", &all),
        entry("poisson", Lower, "upper", "bennett-poisson", &[("condition", "1 <= x <= lambda")]),
        entry("poisson", Upper, "closed_form_certified", "poisson-boundary", &[("condition", "x + lambda <= 1")]),
        entry("poisson", Upper, "rate_form", "poisson-rate", &[("condition", "x >= 0, x + lambda >= 1")]),
        entry("poisson", Lower, "rate_form", "poisson-rate", &[("condition", "0 <= x <= lambda/beta"), ("beta", "2")]),
        entry("irwin_hall", Upper, "upper", "irwin-hall-kl", &[("condition", "0 <= x <= k/2")]),
        entry("irwin_hall", Lower, "upper", "irwin-hall-kl", &[("condition", "0 <= x <= k/2")]),
        entry("irwin_hall", Upper, "rate_form", "irwin-hall-rate", &[("condition", "0 <= x <= c' k"), ("c'", "1/2")]),
        entry("irwin_hall", Lower, "rate_form", "irwin-hall-rate", &[("condition", "0 <= x <= c' k"), ("c'", "1/2")]),
        entry("rademacher_sum", Upper, "upper", "rademacher-hoeffding", &[("condition", "0 <= x <= k")]),
        entry("rademacher_sum", Lower, "upper", "rademacher-hoeffding", &[("condition", "0 <= x <= k")]),
        entry("rademacher_sum", Upper, "closed_form_certified", "support", &[("condition", "x > k")]),
        entry("rademacher_sum", Upper, "rate_form", "rademacher-rate", &[("condition", "0 <= x <= k/beta"), ("beta", "2")]),
        entry("rademacher_sum", Lower, "rate_form", "rademacher-rate", &[("condition", "0 <= x <= k/beta"), ("beta", "2")]),
        entry("normal", Upper, "upper", "gaussian-chernoff", &all),
        entry("normal", Lower, "upper", "gaussian-chernoff", &all),
    ];
    for fam in crate::dist_model::FAMILY_NAMES {
        for side in Side::both() {
            v.push(entry(fam, side, numeric, "reverse-chernoff-cramer", &[("condition", "x > 0")]));
        }
    }
    for fam in ["gamma", "chisq", "weighted_chisq", "noncentral_chisq", "irwin_hall", "normal"] {
        for side in Side::both() {
            v.push(entry(fam, side, numeric, "paley-zygmund", &[("condition", "2 t(x) <= M")]));
        }
    }
    v
}
