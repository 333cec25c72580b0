//! Value priors `f(v)` and the partial moments the mechanism formulas need.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Upper tail probability cut from an exponential prior when a bounded support is
/// needed (sampling, the ε-uniform reserve component).
pub const EXPONENTIAL_TAIL: f64 = 1e-6;

/// A probability distribution over the object's value.
///
/// Analytic quantities (mean, cdf, excess moments) are those of the stated
/// family. The exponential family additionally reports a truncated support
/// `[0, λ·ln(1/EXPONENTIAL_TAIL)]` and [`Prior::sample`] draws from the
/// renormalised truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PriorRecord", into = "PriorRecord")]
pub enum Prior {
    Uniform { lo: f64, hi: f64 },
    /// Symmetric triangular density on `[lo, hi]` with its mode at the midpoint.
    TriangularSymmetric { lo: f64, hi: f64 },
    Exponential { mean: f64 },
    /// Value 0 with probability `q`, value `high` otherwise.
    TwoPoint { q: f64, high: f64 },
    Empirical(Empirical),
}

/// Equally weighted sample values, kept sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct Empirical {
    samples: Vec<f64>,
    mean: f64,
}

impl Empirical {
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Samples strictly greater than `t`.
    fn above(&self, t: f64) -> &[f64] {
        let start = self.samples.partition_point(|&x| x <= t);
        &self.samples[start..]
    }

    fn at_least(&self, t: f64) -> &[f64] {
        let start = self.samples.partition_point(|&x| x < t);
        &self.samples[start..]
    }

    fn len(&self) -> f64 {
        self.samples.len() as f64
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
enum PriorRecord {
    Uniform { lo: f64, hi: f64 },
    Triangular { lo: f64, hi: f64 },
    Exponential { mean: f64 },
    TwoPoint { q: f64, high: f64 },
    Empirical { samples: Vec<f64> },
}

impl TryFrom<PriorRecord> for Prior {
    type Error = Error;

    fn try_from(record: PriorRecord) -> Result<Self> {
        match record {
            PriorRecord::Uniform { lo, hi } => Prior::uniform(lo, hi),
            PriorRecord::Triangular { lo, hi } => Prior::triangular(lo, hi),
            PriorRecord::Exponential { mean } => Prior::exponential(mean),
            PriorRecord::TwoPoint { q, high } => Prior::two_point(q, high),
            PriorRecord::Empirical { samples } => Prior::empirical(samples),
        }
    }
}

impl From<Prior> for PriorRecord {
    fn from(prior: Prior) -> Self {
        match prior {
            Prior::Uniform { lo, hi } => PriorRecord::Uniform { lo, hi },
            Prior::TriangularSymmetric { lo, hi } => PriorRecord::Triangular { lo, hi },
            Prior::Exponential { mean } => PriorRecord::Exponential { mean },
            Prior::TwoPoint { q, high } => PriorRecord::TwoPoint { q, high },
            Prior::Empirical(e) => PriorRecord::Empirical { samples: e.samples },
        }
    }
}

fn check_interval(lo: f64, hi: f64) -> Result<()> {
    ensure(lo.is_finite() && hi.is_finite(), || format!("support [{lo}, {hi}] must be finite"))?;
    ensure(0.0 <= lo && lo < hi, || format!("support needs 0 <= lo < hi, got [{lo}, {hi}]"))
}

impl Prior {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        check_interval(lo, hi)?;
        Ok(Prior::Uniform { lo, hi })
    }

    pub fn triangular(lo: f64, hi: f64) -> Result<Self> {
        check_interval(lo, hi)?;
        Ok(Prior::TriangularSymmetric { lo, hi })
    }

    pub fn exponential(mean: f64) -> Result<Self> {
        ensure(mean.is_finite() && mean > 0.0, || format!("exponential mean must be positive, got {mean}"))?;
        Ok(Prior::Exponential { mean })
    }

    pub fn two_point(q: f64, high: f64) -> Result<Self> {
        ensure((0.0..=1.0).contains(&q), || format!("q must lie in [0, 1], got {q}"))?;
        ensure(high.is_finite() && high > 0.0, || format!("high value must be positive, got {high}"))?;
        Ok(Prior::TwoPoint { q, high })
    }

    /// Empirical prior over the given values. A single repeated value is allowed
    /// and yields a point mass.
    pub fn empirical(mut samples: Vec<f64>) -> Result<Self> {
        ensure(!samples.is_empty(), || "empirical prior needs at least one sample".into())?;
        ensure(samples.iter().all(|x| x.is_finite() && *x >= 0.0), || {
            "empirical samples must be finite and non-negative".into()
        })?;
        samples.sort_by(f64::total_cmp);
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        Ok(Prior::Empirical(Empirical { samples, mean }))
    }

    /// `(v_min, v_max)`. For the exponential family `v_max` is the truncation point.
    pub fn support(&self) -> (f64, f64) {
        match self {
            Prior::Uniform { lo, hi } | Prior::TriangularSymmetric { lo, hi } => (*lo, *hi),
            Prior::Exponential { mean } => (0.0, mean * (1.0 / EXPONENTIAL_TAIL).ln()),
            Prior::TwoPoint { high, .. } => (0.0, *high),
            Prior::Empirical(e) => (e.samples[0], *e.samples.last().unwrap()),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Prior::Uniform { lo, hi } | Prior::TriangularSymmetric { lo, hi } => 0.5 * (lo + hi),
            Prior::Exponential { mean } => *mean,
            Prior::TwoPoint { q, high } => (1.0 - q) * high,
            Prior::Empirical(e) => e.mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Prior::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            Prior::TriangularSymmetric { lo, hi } => (hi - lo).powi(2) / 24.0,
            Prior::Exponential { mean } => mean * mean,
            Prior::TwoPoint { q, high } => q * (1.0 - q) * high * high,
            Prior::Empirical(e) => {
                e.samples.iter().map(|x| (x - e.mean).powi(2)).sum::<f64>() / e.len()
            }
        }
    }

    /// `P(v ≤ x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Prior::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            Prior::TriangularSymmetric { lo, hi } => {
                let h = 0.5 * (hi - lo);
                if x <= *lo {
                    0.0
                } else if x >= *hi {
                    1.0
                } else if x <= lo + h {
                    (x - lo).powi(2) / (2.0 * h * h)
                } else {
                    1.0 - (hi - x).powi(2) / (2.0 * h * h)
                }
            }
            Prior::Exponential { mean } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-x / mean).exp_m1()
                }
            }
            Prior::TwoPoint { q, high } => {
                if x < 0.0 {
                    0.0
                } else if x < *high {
                    *q
                } else {
                    1.0
                }
            }
            Prior::Empirical(e) => {
                e.samples.partition_point(|&s| s <= x) as f64 / e.len()
            }
        }
    }

    /// `P(v ≥ x)`; differs from `1 − cdf(x)` only at atoms.
    pub fn prob_at_least(&self, x: f64) -> f64 {
        match self {
            Prior::TwoPoint { q, high } => {
                if x <= 0.0 {
                    1.0
                } else if x <= *high {
                    1.0 - q
                } else {
                    0.0
                }
            }
            Prior::Empirical(e) => e.at_least(x).len() as f64 / e.len(),
            _ => 1.0 - self.cdf(x),
        }
    }

    /// `P(v > x)`.
    pub fn prob_above(&self, x: f64) -> f64 {
        1.0 - self.cdf(x)
    }

    /// Density of the continuous families; `None` for the discrete ones.
    pub fn pdf(&self, x: f64) -> Option<f64> {
        match self {
            Prior::Uniform { lo, hi } => Some(if x < *lo || x > *hi { 0.0 } else { 1.0 / (hi - lo) }),
            Prior::TriangularSymmetric { lo, hi } => {
                let h = 0.5 * (hi - lo);
                Some(if x < *lo || x > *hi {
                    0.0
                } else if x <= lo + h {
                    (x - lo) / (h * h)
                } else {
                    (hi - x) / (h * h)
                })
            }
            Prior::Exponential { mean } => Some(if x < 0.0 { 0.0 } else { (-x / mean).exp() / mean }),
            Prior::TwoPoint { .. } | Prior::Empirical(_) => None,
        }
    }

    /// `E[max(0, v − t)]`.
    pub fn expected_excess(&self, t: f64) -> f64 {
        match self {
            Prior::Uniform { lo, hi } => {
                if t <= *lo {
                    self.mean() - t
                } else if t >= *hi {
                    0.0
                } else {
                    (hi - t).powi(2) / (2.0 * (hi - lo))
                }
            }
            Prior::TriangularSymmetric { lo, hi } => {
                let h = 0.5 * (hi - lo);
                let mode = lo + h;
                if t <= *lo {
                    mode - t
                } else if t >= *hi {
                    0.0
                } else if t >= mode {
                    (hi - t).powi(3) / (6.0 * h * h)
                } else {
                    // E[(v−t)+] = E[v] − t + E[(t−v)+], and the left tail mirrors the right one.
                    mode - t + (t - lo).powi(3) / (6.0 * h * h)
                }
            }
            Prior::Exponential { mean } => {
                if t <= 0.0 {
                    mean - t
                } else {
                    mean * (-t / mean).exp()
                }
            }
            Prior::TwoPoint { q, high } => q * (-t).max(0.0) + (1.0 - q) * (high - t).max(0.0),
            Prior::Empirical(e) => e.above(t).iter().map(|x| x - t).sum::<f64>() / e.len(),
        }
    }

    /// `∫_t^∞ E[max(0, v − s)] ds = E[max(0, v − t)²] / 2`.
    ///
    /// Used to average `Ĝ` over uniform reserve pieces in closed form.
    pub fn integrated_excess(&self, t: f64) -> f64 {
        let below_support = |t: f64| 0.5 * (self.variance() + (self.mean() - t).powi(2));
        match self {
            Prior::Uniform { lo, hi } => {
                if t <= *lo {
                    below_support(t)
                } else if t >= *hi {
                    0.0
                } else {
                    (hi - t).powi(3) / (6.0 * (hi - lo))
                }
            }
            Prior::TriangularSymmetric { lo, hi } => {
                let h = 0.5 * (hi - lo);
                let mode = lo + h;
                if t <= *lo {
                    below_support(t)
                } else if t >= *hi {
                    0.0
                } else if t >= mode {
                    (hi - t).powi(4) / (24.0 * h * h)
                } else {
                    below_support(t) - (t - lo).powi(4) / (24.0 * h * h)
                }
            }
            Prior::Exponential { mean } => {
                if t <= 0.0 {
                    below_support(t)
                } else {
                    mean * mean * (-t / mean).exp()
                }
            }
            Prior::TwoPoint { q, high } => {
                0.5 * (q * (-t).max(0.0).powi(2) + (1.0 - q) * (high - t).max(0.0).powi(2))
            }
            Prior::Empirical(e) => {
                e.above(t).iter().map(|x| (x - t).powi(2)).sum::<f64>() / (2.0 * e.len())
            }
        }
    }

    /// `E[v · 1{v ≥ t}]`.
    pub fn partial_mean_at_least(&self, t: f64) -> f64 {
        match self {
            Prior::Empirical(e) => e.at_least(t).iter().sum::<f64>() / e.len(),
            _ => self.expected_excess(t) + t * self.prob_at_least(t),
        }
    }

    /// `E[v · 1{v > t}]`.
    pub fn partial_mean_above(&self, t: f64) -> f64 {
        match self {
            Prior::Empirical(e) => e.above(t).iter().sum::<f64>() / e.len(),
            _ => self.expected_excess(t) + t * self.prob_above(t),
        }
    }

    /// `E[max(0, v − E[v])]`: the largest computation cost for which truthful
    /// elicitation is possible.
    pub fn truthfulness_threshold(&self) -> f64 {
        match self {
            Prior::Uniform { lo, hi } => (hi - lo) / 8.0,
            Prior::TriangularSymmetric { lo, hi } => (hi - lo) / 12.0,
            Prior::Exponential { mean } => mean / std::f64::consts::E,
            Prior::TwoPoint { q, high } => q * (1.0 - q) * high,
            Prior::Empirical(_) => self.expected_excess(self.mean()),
        }
    }

    /// Distribution of `a · v`.
    pub fn scaled(&self, a: f64) -> Result<Prior> {
        ensure(a.is_finite() && a > 0.0, || format!("scale factor must be positive, got {a}"))?;
        match self {
            Prior::Uniform { lo, hi } => Prior::uniform(a * lo, a * hi),
            Prior::TriangularSymmetric { lo, hi } => Prior::triangular(a * lo, a * hi),
            Prior::Exponential { mean } => Prior::exponential(a * mean),
            Prior::TwoPoint { q, high } => Prior::two_point(*q, a * high),
            Prior::Empirical(e) => Prior::empirical(e.samples.iter().map(|x| a * x).collect()),
        }
    }

    /// One draw; exponential draws come from the truncated, renormalised law.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        match self {
            Prior::Uniform { lo, hi } => lo + (hi - lo) * u,
            Prior::TriangularSymmetric { lo, hi } => {
                let h = 0.5 * (hi - lo);
                if u < 0.5 {
                    lo + h * (2.0 * u).sqrt()
                } else {
                    hi - h * (2.0 * (1.0 - u)).sqrt()
                }
            }
            Prior::Exponential { mean } => -mean * (-u * (1.0 - EXPONENTIAL_TAIL)).ln_1p(),
            Prior::TwoPoint { q, high } => {
                if u < *q {
                    0.0
                } else {
                    *high
                }
            }
            Prior::Empirical(e) => {
                let idx = ((u * e.len()) as usize).min(e.samples.len() - 1);
                e.samples[idx]
            }
        }
    }
}
