//! Signal identification in a two-component Poisson mixture
//! `Y ~ Poisson(mu)` w.p. `1 - eps`, `Poisson(lambda)` w.p. `eps`, by the
//! likelihood-ratio threshold `theta~`.

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist_model::LatticeLaw;
use crate::error::{domain, Error, Result};
use crate::oracle::{lattice_tail_ge, lattice_tail_le, mc_estimate, TailEstimate};
use crate::rng;
use crate::specfun::{bennett_psi, ln_poisson_pmf};

const MIXTURE_TAG: u64 = 0x6d69_7874;

/// Sign convention used for `g`, reported alongside every classifier.
pub const G_SIGN_NOTE: &str =
    "g uses a negative exponent on the noise term, so exp(-g) is the sum of the two Bennett tail bounds";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub mu: f64,
    pub lambda: f64,
    pub eps: f64,
}

impl MixtureSpec {
    pub fn new(mu: f64, lambda: f64, eps: f64) -> Result<Self> {
        let s = Self { mu, lambda, eps };
        s.validate()?;
        Ok(s)
    }

    /// `mu >= 1` is a modelling assumption and is not enforced here.
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return domain(format!("eps must lie in (0, 1), got {}", self.eps));
        }
        if !(self.mu > 0.0 && self.mu.is_finite() && self.lambda.is_finite()) {
            return domain(format!("intensities must be finite and > 0, got mu={}, lambda={}", self.mu, self.lambda));
        }
        if !(self.mu < self.lambda) {
            return domain(format!("need mu < lambda, got mu={}, lambda={}", self.mu, self.lambda));
        }
        Ok(())
    }

    fn ln_ratio(&self) -> f64 {
        (self.lambda / self.mu).ln()
    }

    pub fn theta_tilde(&self) -> f64 {
        (((1.0 - self.eps) / self.eps).ln() + self.lambda - self.mu) / self.ln_ratio()
    }

    /// The signal fraction at which `theta~ = mu`.
    pub fn eps_plus(&self) -> f64 {
        1.0 / ((self.mu * self.ln_ratio() + self.mu - self.lambda).exp() + 1.0)
    }

    /// The signal fraction at which `theta~ = lambda`.
    pub fn eps_minus(&self) -> f64 {
        1.0 / ((self.lambda * self.ln_ratio() + self.mu - self.lambda).exp() + 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    BelowMinus,
    Middle,
    AbovePlus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub mu: f64,
    pub lambda: f64,
    pub eps: f64,
    pub theta_tilde: f64,
    pub eps_plus: f64,
    pub eps_minus: f64,
    pub regime: Regime,
    /// `None` when `theta~ <= 0`, where the signal-side Bennett term is undefined.
    pub g_value: Option<f64>,
    pub expected_misid: f64,
    /// `eps`, `exp(-g)` or `1 - eps` according to the regime.
    pub regime_bound: f64,
    pub mc_misid: Option<TailEstimate>,
    pub note: String,
}

/// `g(theta~) = -ln[(1-eps) e^{-B_mu} + eps e^{-B_lambda}]` with the Bennett
/// exponents of both Poisson tails at `theta~`.
pub fn g_value(spec: &MixtureSpec) -> Result<Option<f64>> {
    spec.validate()?;
    let th = spec.theta_tilde();
    if !(th > 0.0) {
        return Ok(None);
    }
    let (mu, la) = (spec.mu, spec.lambda);
    let b_mu = (th - mu).powi(2) / (2.0 * mu) * bennett_psi((th - mu) / mu)?;
    let b_la = (la - th).powi(2) / (2.0 * la) * bennett_psi((th - la) / la)?;
    let a = (1.0 - spec.eps).ln() - b_mu;
    let b = spec.eps.ln() - b_la;
    let m = a.max(b);
    Ok(Some(-(m + ((a - m).exp() + (b - m).exp()).ln())))
}

pub fn regime(spec: &MixtureSpec) -> Regime {
    if spec.eps < spec.eps_minus() {
        Regime::BelowMinus
    } else if spec.eps > spec.eps_plus() {
        Regime::AbovePlus
    } else {
        Regime::Middle
    }
}

/// Largest integer `j` with `j <= theta~`; counts above it are flagged.
fn last_noise_count(th: f64) -> i64 {
    if th < 0.0 {
        -1
    } else {
        th.floor() as i64
    }
}

/// `(1 - eps) P_mu(Y > theta~) + eps P_lambda(Y <= theta~)`.
pub fn exact_expected_misid(spec: &MixtureSpec) -> Result<f64> {
    spec.validate()?;
    let j = last_noise_count(spec.theta_tilde());
    let false_pos = lattice_tail_ge(LatticeLaw::Poisson { lambda: spec.mu }, j + 1).value;
    let false_neg = lattice_tail_le(LatticeLaw::Poisson { lambda: spec.lambda }, j).value;
    Ok((1.0 - spec.eps) * false_pos + spec.eps * false_neg)
}

/// The regime's upper bound on the expected misidentification rate.
pub fn regime_bound(spec: &MixtureSpec) -> Result<f64> {
    Ok(match regime(spec) {
        Regime::BelowMinus => spec.eps,
        Regime::AbovePlus => 1.0 - spec.eps,
        Regime::Middle => (-g_value(spec)?.expect("theta~ >= mu > 0 in the middle regime")).exp(),
    })
}

pub fn derive_classifier(spec: &MixtureSpec) -> Result<ClassifierReport> {
    spec.validate()?;
    Ok(ClassifierReport {
        mu: spec.mu,
        lambda: spec.lambda,
        eps: spec.eps,
        theta_tilde: spec.theta_tilde(),
        eps_plus: spec.eps_plus(),
        eps_minus: spec.eps_minus(),
        regime: regime(spec),
        g_value: g_value(spec)?,
        expected_misid: exact_expected_misid(spec)?,
        regime_bound: regime_bound(spec)?,
        mc_misid: None,
        note: G_SIGN_NOTE.to_string(),
    })
}

/// Flags `Y_i > theta~` (strict).
pub fn classify(spec: &MixtureSpec, counts: &[u64]) -> Vec<bool> {
    let th = spec.theta_tilde();
    counts.iter().map(|&y| y as f64 > th).collect()
}

/// Brute-force check that the threshold rule attains the per-count minimum
/// of `P(Y = j, Z = 0)` and `P(Y = j, Z = 1)`, summed over `0..=j_max`.
pub fn verify_optimality(spec: &MixtureSpec, j_max: u64) -> Result<bool> {
    spec.validate()?;
    for l in [spec.mu, spec.lambda] {
        let rest = lattice_tail_ge(LatticeLaw::Poisson { lambda: l }, j_max as i64 + 1).value;
        if rest >= 1e-12 {
            return Err(Error::Truncation(format!(
                "Poisson({l}) mass above j_max = {j_max} is {rest:e}, needs < 1e-12"
            )));
        }
    }
    let th = spec.theta_tilde();
    let (mut rule, mut best) = (0.0, 0.0);
    for j in 0..=j_max {
        let p0 = (1.0 - spec.eps) * ln_poisson_pmf(spec.mu, j).exp();
        let p1 = spec.eps * ln_poisson_pmf(spec.lambda, j).exp();
        rule += if j as f64 > th { p0 } else { p1 };
        best += p0.min(p1);
    }
    Ok((rule - best).abs() <= 1e-12)
}

/// Simulated misidentification rate over `k` items with a Clopper-Pearson interval.
pub fn mc_misid(spec: &MixtureSpec, k: usize, seed: u64) -> Result<TailEstimate> {
    spec.validate()?;
    if k < 100 {
        return domain(format!("Monte Carlo needs k >= 100, got {k}"));
    }
    let z = Bernoulli::new(spec.eps).map_err(|e| Error::Domain(e.to_string()))?;
    let noise = Poisson::new(spec.mu).map_err(|e| Error::Domain(e.to_string()))?;
    let signal = Poisson::new(spec.lambda).map_err(|e| Error::Domain(e.to_string()))?;
    let th = spec.theta_tilde();
    let seed = rng::derive_seed(seed, MIXTURE_TAG);
    let wrong: u64 = rng::shards(k)
        .into_par_iter()
        .map(|(id, len)| {
            let mut r = rng::stream(seed, id);
            (0..len)
                .filter(|_| {
                    let is_signal = r.sample(z);
                    let y: f64 = if is_signal { signal.sample(&mut r) } else { noise.sample(&mut r) };
                    (y > th) != is_signal
                })
                .count() as u64
        })
        .sum();
    mc_estimate(wrong, k as u64, 0.99)
}

/// Parses one non-negative integer count per line. Blank lines are skipped
/// and a non-numeric first line is taken as a header.
pub fn parse_counts(text: &str) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    let mut seen_first = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim().trim_matches('"');
        if line.is_empty() {
            continue;
        }
        let first = !seen_first;
        seen_first = true;
        match line.parse::<i64>() {
            Ok(v) if v >= 0 => out.push(v as u64),
            Ok(v) => return Err(Error::Parse(format!("line {}: negative count {v}", i + 1))),
            Err(_) if first && line.parse::<f64>().is_err() => {}
            Err(_) => return Err(Error::Parse(format!("line {}: not a non-negative integer: {line:?}", i + 1))),
        }
    }
    if out.is_empty() {
        return Err(Error::Parse("no counts found".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn reference_example() {
        let s = MixtureSpec::new(1.0, 2.0, 0.5).unwrap();
        let r = derive_classifier(&s).unwrap();
        assert!(close(r.theta_tilde, 1.0 / 2f64.ln(), 1e-15));
        assert!(close(r.eps_plus, 1.0 / (2.0 / std::f64::consts::E + 1.0), 1e-15));
        assert!(close(r.eps_minus, 1.0 / (4.0 / std::f64::consts::E + 1.0), 1e-15));
        assert!(close(r.eps_plus, 0.5761, 1e-4) && close(r.eps_minus, 0.4046, 1e-4));
        assert_eq!(r.regime, Regime::Middle);
        let e1 = (-1.0f64).exp();
        let want = 0.5 * (1.0 - 2.0 * e1) + 0.5 * 3.0 * e1 * e1;
        assert!(close(r.expected_misid, want, 1e-14));
        assert!(close(r.expected_misid, 0.3351, 1e-4));
        assert!(r.expected_misid <= r.regime_bound);
    }

    #[test]
    fn boundary_identities() {
        for (mu, la) in [(1.0, 2.0), (2.0, 5.0), (3.0, 4.5)] {
            let s = MixtureSpec::new(mu, la, 0.3).unwrap();
            let plus = MixtureSpec::new(mu, la, s.eps_plus()).unwrap();
            let minus = MixtureSpec::new(mu, la, s.eps_minus()).unwrap();
            assert!((plus.theta_tilde() - mu).abs() <= 1e-12 * mu);
            assert!((minus.theta_tilde() - la).abs() <= 1e-12 * la);
            assert!(s.eps_minus() < s.eps_plus());
        }
    }

    #[test]
    fn classify_examples() {
        let s = MixtureSpec::new(1.0, 2.0, 0.5).unwrap();
        assert_eq!(classify(&s, &[0, 1, 2, 5]), vec![false, false, true, true]);
        assert!(classify(&s, &[0; 7]).iter().all(|f| !f));
        let hi = (2.0 + 10.0 * 2f64.sqrt()).ceil() as u64 + 1;
        assert!(classify(&s, &[hi, hi + 3]).iter().all(|&f| f));
    }

    #[test]
    fn domain_errors() {
        assert!(MixtureSpec::new(1.0, 2.0, 0.0).is_err());
        assert!(MixtureSpec::new(1.0, 2.0, 1.0).is_err());
        assert!(MixtureSpec::new(2.0, 2.0, 0.5).is_err());
        assert!(MixtureSpec::new(3.0, 2.0, 0.5).is_err());
    }

    #[test]
    fn small_eps_limit() {
        let mut prev = f64::INFINITY;
        for e in [1e-2, 1e-4, 1e-6, 1e-9] {
            let s = MixtureSpec::new(1.0, 2.0, e).unwrap();
            let v = exact_expected_misid(&s).unwrap();
            assert!(v <= e * (1.0 + 1e-12));
            assert!(v <= prev);
            prev = v;
        }
        assert!(prev < 1e-8);
    }

    fn grid() -> Vec<MixtureSpec> {
        let mut g = Vec::new();
        for mu in [1.0, 2.0, 5.0] {
            for r in [1.5, 2.0, 3.0, 4.0] {
                for e in [0.01, 0.05, 0.2, 0.4, 0.5, 0.6, 0.8, 0.95, 0.99] {
                    g.push(MixtureSpec::new(mu, mu * r, e).unwrap());
                }
            }
        }
        g
    }

    #[test]
    fn regime_bounds_hold_on_grid() {
        for s in grid() {
            let v = exact_expected_misid(&s).unwrap();
            let b = regime_bound(&s).unwrap();
            assert!(v <= b + 1e-12, "{s:?}: {v} > {b}");
            assert!(v <= s.eps.min(1.0 - s.eps) + 1e-12);
        }
    }

    #[test]
    fn optimality_on_grid() {
        for s in grid() {
            assert!(verify_optimality(&s, 80).unwrap(), "{s:?}");
        }
        let s = MixtureSpec::new(1.0, 2.0, 0.5).unwrap();
        assert!(verify_optimality(&s, 50).unwrap());
        assert!(matches!(verify_optimality(&s, 5), Err(Error::Truncation(_))));
        let hi = MixtureSpec::new(1.0, 2.0, 0.99).unwrap();
        assert_eq!(regime(&hi), Regime::AbovePlus);
        assert!(verify_optimality(&hi, 50).unwrap());
    }

    #[test]
    fn per_count_decisions_flip_at_threshold() {
        let s = MixtureSpec::new(2.0, 5.0, 0.3).unwrap();
        let th = s.theta_tilde();
        for j in 0..30u64 {
            let p0 = (1.0 - s.eps) * ln_poisson_pmf(s.mu, j).exp();
            let p1 = s.eps * ln_poisson_pmf(s.lambda, j).exp();
            assert_eq!(p1 > p0, j as f64 > th, "j={j}");
        }
    }

    #[test]
    fn mc_matches_exact() {
        let s = MixtureSpec::new(1.0, 2.0, 0.5).unwrap();
        let est = mc_misid(&s, 100_000, 1).unwrap();
        let exact = exact_expected_misid(&s).unwrap();
        assert!(est.lo() <= exact && exact <= est.hi());
        assert_eq!(est, mc_misid(&s, 100_000, 1).unwrap());
    }

    #[test]
    fn mc_coverage() {
        let s = MixtureSpec::new(2.0, 5.0, 0.3).unwrap();
        let exact = exact_expected_misid(&s).unwrap();
        let hits = (0..200u64)
            .filter(|&seed| {
                let e = mc_misid(&s, 2_000, seed).unwrap();
                e.lo() <= exact && exact <= e.hi()
            })
            .count();
        assert!(hits >= 196, "{hits}/200");
    }

    #[test]
    fn csv_parsing() {
        assert_eq!(parse_counts("count\n0\n1\n\n2\n5\n").unwrap(), vec![0, 1, 2, 5]);
        assert_eq!(parse_counts("3\n4").unwrap(), vec![3, 4]);
        let e = parse_counts("count\n1\n-2\n").unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        assert!(parse_counts("1\nx\n").is_err());
        assert!(parse_counts("header\n").is_err());
    }

    proptest! {
        #[test]
        fn eps_bounds_ordered(mu in 0.5f64..10.0, r in 1.5f64..4.0) {
            let s = MixtureSpec::new(mu, mu * r, 0.5).unwrap();
            let (lo, hi) = (s.eps_minus(), s.eps_plus());
            prop_assert!(0.0 < lo && lo < hi && hi < 1.0);
        }

        #[test]
        fn misid_never_exceeds_trivial_rules(mu in 0.5f64..10.0, r in 1.5f64..4.0, e in 0.001f64..0.999) {
            let s = MixtureSpec::new(mu, mu * r, e).unwrap();
            let v = exact_expected_misid(&s).unwrap();
            prop_assert!(v <= e.min(1.0 - e) + 1e-12);
            prop_assert!(v <= regime_bound(&s).unwrap() + 1e-12);
        }
    }
}
