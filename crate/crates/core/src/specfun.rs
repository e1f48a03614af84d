//! Real-valued special functions used by the oracles and the bound formulas.
//!
//! Every function that returns a probability-like quantity has a `ln_` twin
//! that stays finite when the value underflows.

use std::f64::consts::{E, LN_2, PI};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;
const MAX_ITER: usize = 100_000;

/// An interval of the extended real line; unbounded ends use `±inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealInterval {
    #[serde(with = "crate::json::ext_f64")]
    pub lo: f64,
    #[serde(with = "crate::json::ext_f64")]
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl RealInterval {
    pub fn new(lo: f64, hi: f64, lo_closed: bool, hi_closed: bool) -> Self {
        Self { lo, hi, lo_closed, hi_closed }
    }

    pub fn whole_line() -> Self {
        Self::new(f64::NEG_INFINITY, f64::INFINITY, false, false)
    }

    /// `(-inf, hi)`.
    pub fn below(hi: f64) -> Self {
        Self::new(f64::NEG_INFINITY, hi, false, false)
    }

    pub fn contains(&self, t: f64) -> bool {
        let above_lo = if self.lo_closed { t >= self.lo } else { t > self.lo };
        let below_hi = if self.hi_closed { t <= self.hi } else { t < self.hi };
        above_lo && below_hi
    }
}

/// `ln(1 - e^{-a})` for `a >= 0`.
pub fn ln1m_exp(a: f64) -> f64 {
    if a <= 0.0 {
        f64::NEG_INFINITY
    } else if a < LN_2 {
        (-(-a).exp_m1()).ln()
    } else {
        (-(-a).exp()).ln_1p()
    }
}

/// `ln(e^a + e^b)`.
pub fn ln_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Neumaier-compensated sum; the result does not depend on how the input was
/// produced, only on its order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `ln(n!) - ln(sqrt(2 pi n) (n/e)^n)`, the remainder of Stirling's formula.
pub fn stirling_remainder(n: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15.0 {
        if n == 0.0 {
            return 0.0;
        }
        return log_gamma(n + 1.0) - (n + 0.5) * n.ln() + n - LN_SQRT_2PI;
    }
    let nn = n * n;
    if n > 500.0 {
        (S0 - S1 / nn) / n
    } else if n > 80.0 {
        (S0 - (S1 - S2 / nn) / nn) / n
    } else if n > 35.0 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / n
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / n
    }
}

fn stirling_series(x: f64) -> f64 {
    const C: [f64; 8] = [
        1.0 / 12.0,
        -1.0 / 360.0,
        1.0 / 1260.0,
        -1.0 / 1680.0,
        1.0 / 1188.0,
        -691.0 / 360_360.0,
        1.0 / 156.0,
        -3617.0 / 122_400.0,
    ];
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let mut acc = 0.0;
    for c in C.iter().rev() {
        acc = acc * inv2 + c;
    }
    (x - 0.5) * x.ln() - x + LN_SQRT_2PI + acc * inv
}

/// `zeta(k) - 1` for `k = 2..=40`, by Euler-Maclaurin summation.
fn zeta_minus_one() -> &'static [f64; 41] {
    static TABLE: OnceLock<[f64; 41]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut out = [0.0; 41];
        let n_cut = 20.0_f64;
        for (k, slot) in out.iter_mut().enumerate().skip(2) {
            let s = k as f64;
            let head = compensated_sum((2..20).map(|n| (n as f64).powf(-s)));
            let mut tail = n_cut.powf(1.0 - s) / (s - 1.0) + 0.5 * n_cut.powf(-s);
            // Bernoulli corrections B2/2!, B4/4!, B6/6!, B8/8!.
            let bern = [1.0 / 12.0, -1.0 / 720.0, 1.0 / 30_240.0, -1.0 / 1_209_600.0];
            let mut rising = s;
            let mut power = n_cut.powf(-s - 1.0);
            for (j, b) in bern.iter().enumerate() {
                tail += b * rising * power;
                let m = s + 2.0 * j as f64;
                rising *= (m + 1.0) * (m + 2.0);
                power /= n_cut * n_cut;
            }
            *slot = head + tail;
        }
        out
    })
}

/// `ln Gamma(1 + z)` for `|z| <= 0.25`.
fn log_gamma_1p_small(z: f64) -> f64 {
    let zm1 = zeta_minus_one();
    let mut acc = 0.0;
    let mut pow = -z;
    for (k, zk) in zm1.iter().enumerate().skip(2) {
        pow *= -z;
        let term = zk * pow / k as f64;
        acc += term;
        if term.abs() < 1e-20 {
            break;
        }
    }
    -z.ln_1p() + z * (1.0 - EULER_GAMMA) + acc
}

/// Natural log of the gamma function for `x > 0`; NaN elsewhere.
pub fn log_gamma(x: f64) -> f64 {
    if !(x > 0.0) || x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return x;
    }
    if x == 1.0 || x == 2.0 {
        return 0.0;
    }
    if (x - 1.0).abs() <= 0.25 {
        return log_gamma_1p_small(x - 1.0);
    }
    if (x - 2.0).abs() <= 0.25 {
        let z = x - 2.0;
        return z.ln_1p() + log_gamma_1p_small(z);
    }
    if x >= 10.0 {
        return stirling_series(x);
    }
    let shift = (10.0 - x).ceil();
    let mut prod = 1.0;
    let mut i = 0.0;
    while i < shift {
        prod *= x + i;
        i += 1.0;
    }
    stirling_series(x + shift) - prod.ln()
}

/// `ln(y^a e^{-y} / Gamma(a))`, stable for large `a` near `y = a`.
fn ln_gamma_kernel(a: f64, y: f64) -> f64 {
    if a < 10.0 {
        return a * y.ln() - y - log_gamma(a);
    }
    let d = (y - a) / a;
    -a * d_minus_ln1p(d) + 0.5 * a.ln() - LN_SQRT_2PI - stirling_remainder(a)
}

/// `d - ln(1 + d)` without cancellation near zero.
fn d_minus_ln1p(d: f64) -> f64 {
    if d.abs() < 0.1 {
        let mut term = d;
        let mut acc = 0.0;
        let mut k = 2.0;
        loop {
            term *= -d;
            let add = -term / k;
            acc += add;
            if add.abs() <= 1e-18 * acc.abs() {
                break;
            }
            k += 1.0;
        }
        acc
    } else {
        d - d.ln_1p()
    }
}

fn check_gamma_args(a: f64, y: f64) -> Result<()> {
    if !(a > 0.0) || !a.is_finite() {
        return domain(format!("incomplete gamma requires a > 0, got {a}"));
    }
    if !(y >= 0.0) {
        return domain(format!("incomplete gamma requires y >= 0, got {y}"));
    }
    Ok(())
}

/// `ln P(a, y)` by the power series; converges for every `y` but is meant for `y < a + 1`.
fn ln_p_series(a: f64, y: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut n = 1.0;
    for _ in 0..MAX_ITER {
        term *= y / (a + n);
        sum += term;
        if term < sum * EPS {
            break;
        }
        n += 1.0;
    }
    ln_gamma_kernel(a, y) - a.ln() + sum.ln()
}

/// `ln Q(a, y)` by the modified Lentz continued fraction; meant for `y >= a + 1`.
fn ln_q_cf(a: f64, y: f64) -> f64 {
    let mut b = y + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        let an = -fi * (fi - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    ln_gamma_kernel(a, y) + h.ln()
}

/// Upper regularized incomplete gamma `Q(a, y)` evaluated by the power series only.
pub fn reg_inc_gamma_upper_series(a: f64, y: f64) -> Result<f64> {
    check_gamma_args(a, y)?;
    if y == 0.0 {
        return Ok(1.0);
    }
    Ok(-ln_p_series(a, y).exp_m1())
}

/// Upper regularized incomplete gamma `Q(a, y)` evaluated by the continued fraction only.
pub fn reg_inc_gamma_upper_cf(a: f64, y: f64) -> Result<f64> {
    check_gamma_args(a, y)?;
    if y == 0.0 {
        return Ok(1.0);
    }
    Ok(ln_q_cf(a, y).exp())
}

fn use_series(a: f64, y: f64) -> bool {
    y < a + 1.0
}

/// `ln Q(a, y)`, `Q = Gamma(a, y) / Gamma(a)`.
pub fn ln_reg_inc_gamma_upper(a: f64, y: f64) -> Result<f64> {
    check_gamma_args(a, y)?;
    if y == 0.0 {
        return Ok(0.0);
    }
    if y == f64::INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(if use_series(a, y) {
        ln1m_exp(-ln_p_series(a, y))
    } else {
        ln_q_cf(a, y)
    })
}

/// `ln P(a, y)`, `P = 1 - Q`.
pub fn ln_reg_inc_gamma_lower(a: f64, y: f64) -> Result<f64> {
    check_gamma_args(a, y)?;
    if y == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if y == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(if use_series(a, y) {
        ln_p_series(a, y)
    } else {
        ln1m_exp(-ln_q_cf(a, y))
    })
}

/// Upper regularized incomplete gamma `Q(a, y)`; series below `y = a + 1`, continued fraction above.
pub fn reg_inc_gamma_upper(a: f64, y: f64) -> Result<f64> {
    ln_reg_inc_gamma_upper(a, y).map(f64::exp)
}

/// Lower regularized incomplete gamma `P(a, y)`.
pub fn reg_inc_gamma_lower(a: f64, y: f64) -> Result<f64> {
    ln_reg_inc_gamma_lower(a, y).map(f64::exp)
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// `ln(x^a (1-x)^b / (a B(a, b)))` evaluated through the continued fraction.
fn ln_beta_front(a: f64, b: f64, x: f64) -> f64 {
    log_gamma(a + b) - log_gamma(a) - log_gamma(b) + a * x.ln() + b * (-x).ln_1p() - a.ln()
}

fn check_beta_args(a: f64, b: f64, x: f64) -> Result<()> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return domain(format!("incomplete beta requires a, b > 0, got a={a}, b={b}"));
    }
    if !(0.0..=1.0).contains(&x) {
        return domain(format!("incomplete beta requires 0 <= x <= 1, got {x}"));
    }
    Ok(())
}

/// `ln I_x(a, b)`.
pub fn ln_reg_inc_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    check_beta_args(a, b, x)?;
    if x == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    if x == 1.0 {
        return Ok(0.0);
    }
    if x < a / (a + b) {
        Ok(ln_beta_front(a, b, x) + beta_cf(a, b, x).ln())
    } else {
        let ln_c = ln_beta_front(b, a, 1.0 - x) + beta_cf(b, a, 1.0 - x).ln();
        Ok(ln1m_exp(-ln_c))
    }
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn reg_inc_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    ln_reg_inc_beta(a, b, x).map(f64::exp)
}

/// Smallest `x` with `I_x(a, b) >= p`, by bisection to full precision.
pub fn inv_reg_inc_beta(a: f64, b: f64, p: f64) -> Result<f64> {
    check_beta_args(a, b, 0.5)?;
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("probability must lie in [0, 1], got {p}"));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..1100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if reg_inc_beta(a, b, mid)? >= p {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Bernoulli relative entropy `h_u(v) = v ln(v/u) + (1-v) ln((1-v)/(1-u))`, with `0 ln 0 = 0`.
pub fn bernoulli_kl(u: f64, v: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return domain(format!("bernoulli_kl requires 0 < u < 1, got u={u}"));
    }
    if !(0.0..=1.0).contains(&v) {
        return domain(format!("bernoulli_kl requires 0 <= v <= 1, got v={v}"));
    }
    let head = if v == 0.0 { 0.0 } else { v * (v.ln() - u.ln()) };
    let tail = if v == 1.0 { 0.0 } else { (1.0 - v) * ((-v).ln_1p() - (-u).ln_1p()) };
    Ok((head + tail).max(0.0))
}

/// Bennett's function `psi(t) = ((1+t) ln(1+t) - t) / (t^2/2)`, `psi(0) = 1`, for `t > -1`.
pub fn bennett_psi(t: f64) -> Result<f64> {
    if !(t > -1.0) || t.is_nan() {
        return domain(format!("bennett_psi requires t > -1, got {t}"));
    }
    if t.abs() < 1e-4 {
        let t2 = t * t;
        return Ok(1.0 - t / 3.0 + t2 / 6.0 - t2 * t / 10.0 + t2 * t2 / 15.0);
    }
    if t == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(((1.0 + t) * t.ln_1p() - t) * 2.0 / (t * t))
}

/// `ln P(N >= x)` for a standard normal `N`.
pub fn ln_normal_tail(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    let y = 0.5 * x * x;
    if x >= 0.0 {
        ln_reg_inc_gamma_upper(0.5, y).map(|q| q - LN_2).unwrap_or(f64::NAN)
    } else {
        let p = reg_inc_gamma_lower(0.5, y).unwrap_or(f64::NAN);
        p.ln_1p() - LN_2
    }
}

/// `P(N >= x)` for a standard normal `N`.
pub fn normal_tail(x: f64) -> f64 {
    ln_normal_tail(x).exp()
}

/// `P(N <= x)` for a standard normal `N`.
pub fn normal_cdf(x: f64) -> f64 {
    normal_tail(-x)
}

/// `ln P(N <= x)`.
pub fn ln_normal_cdf(x: f64) -> f64 {
    ln_normal_tail(-x)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// `x ln(x / np) + np - x`, the deviance term of the saddle-point expansion.
fn deviance(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        let mut j = 1.0;
        loop {
            ej *= v2;
            let s1 = s + ej / (2.0 * j + 1.0);
            if s1 == s {
                return s1;
            }
            s = s1;
            j += 1.0;
        }
    }
    x * (x / np).ln() + np - x
}

/// `ln P(B = j)` for `B ~ Binomial(k, p)`, accurate for large `k`.
pub fn ln_binomial_pmf(k: u64, j: u64, p: f64) -> f64 {
    if j > k {
        return f64::NEG_INFINITY;
    }
    if p == 0.0 {
        return if j == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p == 1.0 {
        return if j == k { 0.0 } else { f64::NEG_INFINITY };
    }
    // Symmetric canonical form keeps P(B=j) and P(B=k-j) bit-identical at p = 1/2.
    let j = if p == 0.5 { j.min(k - j) } else { j };
    let q = 1.0 - p;
    let kf = k as f64;
    if j == 0 {
        return kf * (-p).ln_1p();
    }
    if j == k {
        return kf * p.ln();
    }
    let jf = j as f64;
    let rest = kf - jf;
    let lc = stirling_remainder(kf)
        - stirling_remainder(jf)
        - stirling_remainder(rest)
        - deviance(jf, kf * p)
        - deviance(rest, kf * q);
    lc + 0.5 * (kf / (2.0 * PI * jf * rest)).ln()
}

/// `ln P(Y = j)` for `Y ~ Poisson(lambda)`.
pub fn ln_poisson_pmf(lambda: f64, j: u64) -> f64 {
    if j == 0 {
        return -lambda;
    }
    let jf = j as f64;
    -stirling_remainder(jf) - deviance(jf, lambda) - 0.5 * (2.0 * PI * jf).ln()
}

/// `ln C(n, j)`.
pub fn ln_choose(n: u64, j: u64) -> f64 {
    if j > n {
        return f64::NEG_INFINITY;
    }
    let j = j.min(n - j);
    log_gamma(n as f64 + 1.0) - log_gamma(j as f64 + 1.0) - log_gamma((n - j) as f64 + 1.0)
}

/// `e` re-exported for formula code that reads better with a named constant.
pub const EULER: f64 = E;
