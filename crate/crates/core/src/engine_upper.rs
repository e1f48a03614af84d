//! Chernoff-Cramér upper bounds from an exact log-MGF or from an MGF sandwich.

use serde::{Deserialize, Serialize};

use crate::bound_result::{BoundResult, Method};
use crate::dist_model::{LogMgf, Side, WeightVector};
use crate::error::{domain, Error, Result};
use crate::optim::golden_section;

/// Two-sided control of the MGF of `X` on `0 <= t <= radius`:
/// `c2 exp(c1 alpha t^2) <= E e^{tX} <= C2 exp(C1 alpha t^2)`.
///
/// With `two_sided`, the same bracket holds for `-X`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MgfSandwich {
    #[serde(rename = "c1")]
    pub lower_rate: f64,
    #[serde(rename = "C1")]
    pub upper_rate: f64,
    #[serde(rename = "c2")]
    pub lower_prefactor: f64,
    #[serde(rename = "C2")]
    pub upper_prefactor: f64,
    pub alpha: f64,
    #[serde(rename = "M", with = "crate::json::ext_f64")]
    pub radius: f64,
    #[serde(default)]
    pub two_sided: bool,
}

impl MgfSandwich {
    pub fn new(c1: f64, big_c1: f64, c2: f64, big_c2: f64, alpha: f64, radius: f64, two_sided: bool) -> Result<Self> {
        let s = Self {
            lower_rate: c1,
            upper_rate: big_c1,
            lower_prefactor: c2,
            upper_prefactor: big_c2,
            alpha,
            radius,
            two_sided,
        };
        s.validate()?;
        Ok(s)
    }

    /// The Gaussian bracket `exp(t^2/2)` on the whole line, scaled by `alpha`.
    pub fn gaussian(alpha: f64) -> Self {
        Self {
            lower_rate: 0.5,
            upper_rate: 0.5,
            lower_prefactor: 1.0,
            upper_prefactor: 1.0,
            alpha,
            radius: f64::INFINITY,
            two_sided: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |n: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                domain(format!("sandwich {n} must be finite and > 0, got {v}"))
            }
        };
        pos("c1", self.lower_rate)?;
        pos("C1", self.upper_rate)?;
        pos("c2", self.lower_prefactor)?;
        pos("C2", self.upper_prefactor)?;
        pos("alpha", self.alpha)?;
        if !(self.radius > 0.0) {
            return domain(format!("sandwich M must be > 0, got {}", self.radius));
        }
        if self.lower_rate > self.upper_rate {
            return domain("sandwich needs c1 <= C1");
        }
        // t = 0 in the bracket forces c2 <= 1 <= C2.
        if self.lower_prefactor > 1.0 || self.upper_prefactor < 1.0 {
            return domain("sandwich needs c2 <= 1 <= C2");
        }
        if self.radius.is_finite() && !(self.alpha * self.radius * self.radius).is_finite() {
            return domain("sandwich alpha M^2 overflows");
        }
        Ok(())
    }
}

const GOLDEN_ITERS: usize = 200;
const GOLDEN_TOL: f64 = 1e-12;

/// Upper end of the Chernoff search interval for `g(t) = log phi(t) - t x`.
fn search_end(mgf: &LogMgf, x: f64) -> f64 {
    let d = mgf.domain;
    if d.hi.is_finite() {
        if d.hi_closed {
            d.hi
        } else {
            (1.0 - 1e-9) * d.hi
        }
    } else {
        // g is convex with g(0) = 0: once g stops decreasing the minimizer is bracketed.
        let g = |t: f64| mgf.eval(t) - t * x;
        let mut h = 1.0;
        let mut prev = g(0.5);
        // Stop well inside f64 range; a tail still decreasing there is zero to f64 precision.
        for _ in 0..1000 {
            let cur = g(h);
            if cur >= prev || !cur.is_finite() {
                return h;
            }
            prev = cur;
            h *= 2.0;
        }
        h
    }
}

/// `inf_{t >= 0} exp(log phi(t) - t x)` for the requested side; the lower side
/// uses the mirrored log-MGF.
pub fn chernoff_upper(mgf: &LogMgf, x: f64, side: Side) -> Result<BoundResult> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("x must be >= 0, got {x}")));
    }
    let m = mgf.for_side(side);
    let hi = search_end(&m, x);
    if !(hi > 0.0) {
        return Ok(BoundResult::trivial_upper("chernoff-cramer").with_param("t", 0.0));
    }
    let g = |t: f64| m.eval(t) - t * x;
    let (t, v) = golden_section(g, 0.0, hi, GOLDEN_ITERS, GOLDEN_TOL);
    Ok(BoundResult::from_log(v, Method::Chernoff, true, "chernoff-cramer").with_param("t", t))
}

/// Chernoff with the sandwich's upper bracket: `C2 exp(-x^2/(4 C1 alpha))`
/// while the optimal `t` stays inside `[0, M]`, the clamped value after.
pub fn sandwich_upper(s: &MgfSandwich, x: f64) -> Result<BoundResult> {
    s.validate()?;
    if !(x >= 0.0) {
        return domain(format!("x must be >= 0, got {x}"));
    }
    let (c, a, m) = (s.upper_rate, s.alpha, s.radius);
    let knot = 2.0 * c * m * a;
    let (log, t) = if x <= knot {
        (s.upper_prefactor.ln() - x * x / (4.0 * c * a), x / (2.0 * c * a))
    } else {
        (s.upper_prefactor.ln() + c * a * m * m - m * x, m)
    };
    Ok(BoundResult::from_log(log, Method::Sandwich, true, "chernoff-cramer")
        .with_param("t", t)
        .with_param("knot", knot))
}

/// Bernstein-type bound for `sum u_i Z_i` with every `Z_i` obeying `s`:
/// `exp(-x^2/(4 C1 alpha |u|_2^2))` up to `x = 2 M C1 alpha |u|_2^2/|u|_inf`,
/// `exp(-M x/(2 |u|_inf))` beyond, times `C2^n`.
pub fn weighted_sum_upper(s: &MgfSandwich, u: &WeightVector, x: f64) -> Result<BoundResult> {
    s.validate()?;
    if !(x >= 0.0) {
        return domain(format!("x must be >= 0, got {x}"));
    }
    let (c, a, m) = (s.upper_rate, s.alpha, s.radius);
    let (l2sq, linf) = (u.l2_sq(), u.linf());
    let knot = 2.0 * m * c * a * l2sq / linf;
    let core = if x <= knot {
        -x * x / (4.0 * c * a * l2sq)
    } else {
        -m * x / (2.0 * linf)
    };
    let log = core + u.len() as f64 * s.upper_prefactor.ln();
    Ok(BoundResult::from_log(log, Method::WeightedSum, true, "bernstein-weighted-sum").with_param("knot", knot))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist_model::DistSpec;
    use crate::oracle::exact_tail;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn normal_chernoff() {
        let mgf = DistSpec::Normal { sigma2: 1.0 }.log_mgf().unwrap();
        let r = chernoff_upper(&mgf, 2.0, Side::Upper).unwrap();
        assert!(close(r.value, (-2.0f64).exp(), 1e-10), "{}", r.value);
        assert!(close(r.params_used["t"], 2.0, 1e-5));
        let r = chernoff_upper(&mgf, 2.0, Side::Lower).unwrap();
        assert!(close(r.value, (-2.0f64).exp(), 1e-10));
    }

    #[test]
    fn gamma_one_chernoff_optimum() {
        // log phi(t) - t = -t - ln(1-t) - t, minimized at t = 1/2: value 2/e.
        let mgf = DistSpec::Gamma { alpha: 1.0 }.log_mgf().unwrap();
        let r = chernoff_upper(&mgf, 1.0, Side::Upper).unwrap();
        assert!(close(r.value, 2.0 / std::f64::consts::E, 1e-10), "{}", r.value);
        let relaxed = (-1.0 / (2.0 + 3f64.sqrt())).exp();
        assert!(r.value <= relaxed);
        assert!((relaxed - 0.7652).abs() < 5e-4);
    }

    #[test]
    fn x_zero_is_one() {
        for spec in [DistSpec::Gamma { alpha: 2.0 }, DistSpec::Poisson { lambda: 3.0 }] {
            let r = chernoff_upper(&spec.log_mgf().unwrap(), 0.0, Side::Upper).unwrap();
            assert_eq!(r.value, 1.0);
        }
    }

    #[test]
    fn degenerate_domain_gives_trivial() {
        let mgf = LogMgf::new(crate::specfun::RealInterval::new(-1.0, 0.0, true, true), |t| t * t);
        let r = chernoff_upper(&mgf, 1.0, Side::Upper).unwrap();
        assert_eq!(r.value, 1.0);
        assert_eq!(r.method, Method::Trivial);
    }

    #[test]
    fn beyond_support_reaches_zero() {
        let mgf = DistSpec::Binomial { k: 10, p: 0.5 }.log_mgf().unwrap();
        let r = chernoff_upper(&mgf, 6.0, Side::Upper).unwrap();
        assert!(r.value < 1e-200);
    }

    #[test]
    fn sandwich_examples() {
        let s = MgfSandwich::gaussian(1.0);
        assert!(close(sandwich_upper(&s, 1.0).unwrap().value, (-0.5f64).exp(), 1e-15));
        let s2 = MgfSandwich::new(0.5, 0.5, 1.0, 2.0, 1.0, f64::INFINITY, false).unwrap();
        assert_eq!(sandwich_upper(&s2, 0.0).unwrap().value, 1.0);
        // Both branches meet at the knot x = 2 C1 M alpha.
        let s3 = MgfSandwich::new(0.3, 0.7, 0.9, 1.5, 2.0, 0.8, false).unwrap();
        let knot = 2.0 * 0.7 * 0.8 * 2.0;
        let left = 1.5f64.ln() - knot * knot / (4.0 * 0.7 * 2.0);
        let right = 1.5f64.ln() + 0.7 * 2.0 * 0.64 - 0.8 * knot;
        assert!(close(left, right, 1e-14));
        let after = sandwich_upper(&s3, knot + 1.0).unwrap();
        assert!(close(after.log_value, 1.5f64.ln() + 0.7 * 2.0 * 0.64 - 0.8 * (knot + 1.0), 1e-14));
    }

    #[test]
    fn sandwich_validation() {
        assert!(MgfSandwich::new(0.6, 0.5, 1.0, 1.0, 1.0, 1.0, false).is_err());
        assert!(MgfSandwich::new(0.5, 0.5, 1.1, 1.0, 1.0, 1.0, false).is_err());
        assert!(MgfSandwich::new(0.5, 0.5, 1.0, 0.9, 1.0, 1.0, false).is_err());
        let js = serde_json::to_string(&MgfSandwich::gaussian(1.0)).unwrap();
        assert!(js.contains("\"C1\"") && js.contains("\"M\":\"inf\""));
        let back: MgfSandwich = serde_json::from_str(&js).unwrap();
        assert_eq!(back, MgfSandwich::gaussian(1.0));
    }

    #[test]
    fn weighted_examples() {
        let s = MgfSandwich::new(0.5, 0.5, 1.0, 1.0, 1.0, 1.0, false).unwrap();
        let u = WeightVector::ones(4);
        assert!(close(weighted_sum_upper(&s, &u, 2.0).unwrap().value, (-0.5f64).exp(), 1e-15));
        assert!(close(weighted_sum_upper(&s, &u, 8.0).unwrap().value, (-4.0f64).exp(), 1e-15));
        // A single summand reproduces the sandwich bound in the quadratic regime.
        let one = WeightVector::ones(1);
        for x in [0.0, 0.3, 0.7, 1.0] {
            let a = weighted_sum_upper(&s, &one, x).unwrap().value;
            let b = sandwich_upper(&s, x).unwrap().value;
            assert!((a - b).abs() <= 1e-15);
        }
    }

    fn closed_form_specs() -> Vec<DistSpec> {
        vec![
            DistSpec::Gamma { alpha: 0.4 },
            DistSpec::Gamma { alpha: 3.0 },
            DistSpec::ChiSq { k: 5 },
            DistSpec::NoncentralChiSq { k: 3, lambda: 2.0 },
            DistSpec::Binomial { k: 30, p: 0.2 },
            DistSpec::Poisson { lambda: 4.0 },
            DistSpec::IrwinHall { k: 6 },
            DistSpec::RademacherSum { k: 12 },
            DistSpec::Normal { sigma2: 2.0 },
        ]
    }

    #[test]
    fn chernoff_dominates_exact() {
        for spec in closed_form_specs() {
            let mgf = spec.log_mgf().unwrap();
            for side in Side::both() {
                let sd = spec.variance().sqrt();
                for i in 0..25 {
                    let x = sd * i as f64 * 0.25;
                    let ub = chernoff_upper(&mgf, x, side).unwrap();
                    let ex = exact_tail(&spec, side, x).unwrap();
                    assert!(ub.value - ex.value >= -1e-12, "{spec:?} {side:?} x={x}: {} < {}", ub.value, ex.value);
                }
            }
        }
    }

    #[test]
    fn optimizer_is_locally_optimal() {
        for spec in closed_form_specs() {
            let mgf = spec.log_mgf().unwrap();
            let x = 1.5 * spec.variance().sqrt();
            let r = chernoff_upper(&mgf, x, Side::Upper).unwrap();
            let t = r.params_used["t"];
            let g = |s: f64| mgf.eval(s) - s * x;
            let tol = 1e-12 * (1.0 + r.log_value.abs());
            assert!(g(t) <= g(t + 1e-4) + tol, "{spec:?}");
            if t >= 1e-4 {
                assert!(g(t) <= g(t - 1e-4) + tol, "{spec:?}");
            }
        }
    }

    #[test]
    fn sandwich_dominates_chernoff_gaussian() {
        let mgf = DistSpec::Normal { sigma2: 1.0 }.log_mgf().unwrap();
        let s = MgfSandwich::gaussian(1.0);
        for i in 0..30 {
            let x = i as f64 * 0.2;
            let a = sandwich_upper(&s, x).unwrap().value;
            let b = chernoff_upper(&mgf, x, Side::Upper).unwrap().value;
            assert!(a >= b * (1.0 - 1e-9));
        }
    }

    proptest! {
        #[test]
        fn any_feasible_t_is_valid(alpha in 0.2f64..6.0, xs in 0.0f64..4.0, ts in proptest::collection::vec(0.0f64..0.999, 10)) {
            let spec = DistSpec::Gamma { alpha };
            let mgf = spec.log_mgf().unwrap();
            let x = xs * alpha.sqrt();
            let ex = exact_tail(&spec, Side::Upper, x).unwrap().value;
            for t in ts {
                let v = (mgf.eval(t) - t * x).exp();
                prop_assert!(v >= ex * (1.0 - 1e-10));
            }
            let r = chernoff_upper(&mgf, x, Side::Upper).unwrap();
            prop_assert!(r.value >= ex * (1.0 - 1e-10));
        }

        #[test]
        fn sandwich_upper_in_unit_interval(c in 0.1f64..2.0, big in 1.0f64..3.0, a in 0.1f64..5.0, m in 0.1f64..10.0, x in 0.0f64..50.0) {
            let s = MgfSandwich::new(c.min(c * big), c * big, 1.0, big, a, m, false).unwrap();
            let r = sandwich_upper(&s, x).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.value));
        }
    }
}
