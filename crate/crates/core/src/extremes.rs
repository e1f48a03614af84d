//! Expected maxima of `k` independent weighted sums `X_i = sum_j u_j Z_ij`.
//!
//! The brackets carry existential constants, so they are rate forms; the
//! Monte Carlo mean plus the fit/holdout helpers are how they are checked.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist_model::{DistSpec, Sampler, WeightVector};
use crate::engine_upper::MgfSandwich;
use crate::error::{domain, Result};
use crate::rng;

const EXTREME_TAG: u64 = 0x6578_7472;

/// `k` independent sums of `n = u.len()` summands, every `Z_ij` distributed as
/// the centered `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremeSpec {
    pub base: DistSpec,
    pub u: WeightVector,
    pub k: u64,
    pub sandwich: MgfSandwich,
}

impl ExtremeSpec {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.sandwich.validate()?;
        if self.k < 1 {
            return domain("k must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    SubGaussian,
    SubExponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremeBracket {
    pub lower: f64,
    pub upper: f64,
    pub rate: f64,
    pub c_used: f64,
    #[serde(rename = "C_used")]
    pub big_c_used: f64,
}

/// The bracketing rate; 0 when `k = 1`.
pub fn extreme_rate(spec: &ExtremeSpec, regime: Regime) -> Result<f64> {
    spec.validate()?;
    let lnk = (spec.k as f64).ln();
    let gauss = (spec.sandwich.alpha * spec.u.l2_sq() * lnk).sqrt();
    Ok(match regime {
        Regime::SubGaussian => gauss,
        Regime::SubExponential => gauss.max(spec.u.linf() * lnk / spec.sandwich.radius),
    })
}

/// `(c rate, C rate)` with caller-supplied constants.
pub fn extreme_bracket(spec: &ExtremeSpec, regime: Regime, constants: (f64, f64)) -> Result<ExtremeBracket> {
    let (c, big_c) = constants;
    if !(c > 0.0 && big_c >= c && big_c.is_finite()) {
        return domain(format!("constants need 0 < c <= C < inf, got ({c}, {big_c})"));
    }
    let rate = extreme_rate(spec, regime)?;
    Ok(ExtremeBracket { lower: c * rate, upper: big_c * rate, rate, c_used: c, big_c_used: big_c })
}

/// Monte Carlo `(mean, standard error)` of `max_i X_i` over `reps` replications.
///
/// Replications are cut into fixed shards, each on its own stream, and the
/// shard sums are merged in shard order.
pub fn mc_extreme_mean(spec: &ExtremeSpec, reps: usize, seed: u64) -> Result<(f64, f64)> {
    spec.validate()?;
    if reps < 100 {
        return domain(format!("Monte Carlo needs reps >= 100, got {reps}"));
    }
    let sampler = Sampler::new(&spec.base)?;
    let u = spec.u.weights();
    let seed = rng::derive_seed(seed, EXTREME_TAG);
    let parts: Vec<(f64, f64)> = rng::shards(reps)
        .into_par_iter()
        .map(|(id, len)| {
            let mut r = rng::stream(seed, id);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..len {
                let mut best = f64::NEG_INFINITY;
                for _ in 0..spec.k {
                    let x: f64 = u.iter().map(|w| w * sampler.draw(&mut r)).sum();
                    best = best.max(x);
                }
                s += best;
                s2 += best * best;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = parts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let n = reps as f64;
    let mean = s / n;
    let var = ((s2 - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok((mean, (var / n).sqrt()))
}

/// One Monte Carlo observation of `E max`: the bracket rate, the mean and its SE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremeObservation {
    pub rate: f64,
    pub mean: f64,
    pub se: f64,
}

/// Tightest constants with `c rate <= mean` and `C rate >= mean` on every
/// observation with a positive rate.
pub fn fit_extreme_constants(obs: &[ExtremeObservation]) -> Result<(f64, f64)> {
    let ratios: Vec<f64> = obs.iter().filter(|o| o.rate > 0.0).map(|o| o.mean / o.rate).collect();
    if ratios.is_empty() {
        return domain("no observation with a positive rate");
    }
    let c = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let big_c = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(c > 0.0) {
        return domain(format!("fitted lower constant must be > 0, got {c}"));
    }
    Ok((c, big_c))
}

/// Holdout check: `lower <= mean + z se` and `upper >= mean - z se`.
pub fn bracket_holds(b: &ExtremeBracket, mean: f64, se: f64, z: f64) -> bool {
    b.lower <= mean + z * se && b.upper >= mean - z * se
}
