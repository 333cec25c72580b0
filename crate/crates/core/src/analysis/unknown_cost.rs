//! Eliciting from an agent whose cost is itself unknown.
//!
//! With cost density `h` and cdf `H` on `[c_min, c_max]`, the virtual cost is
//! `z(c) = c + H(c)/h(c)`. The principal offers `R` (paid in expectation through
//! a scaled `G*`), and the agent takes it iff `c < R`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::prior::Prior;
use crate::reserve::ReserveCdf;

/// Grid points used to check that `z` is strictly increasing.
pub const REGULARITY_GRID: usize = 10_000;
/// Absolute tolerance of the `z⁻¹` bisection.
pub const INVERSE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
enum CostRecord {
    Uniform {
        lo: f64,
        hi: f64,
    },
    Empirical {
        samples: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bins: Option<usize>,
    },
}

/// Distribution of the agent's computation cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CostRecord", into = "CostRecord")]
pub enum CostPrior {
    Uniform { lo: f64, hi: f64 },
    /// Equal-width histogram of observed costs.
    Histogram(Histogram),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    samples: Vec<f64>,
    bins: Option<usize>,
    lo: f64,
    width: f64,
    /// Probability mass per bin.
    mass: Vec<f64>,
}

impl Histogram {
    fn bin(&self, c: f64) -> usize {
        (((c - self.lo) / self.width) as usize).min(self.mass.len() - 1)
    }
}

impl TryFrom<CostRecord> for CostPrior {
    type Error = Error;

    fn try_from(r: CostRecord) -> Result<Self> {
        match r {
            CostRecord::Uniform { lo, hi } => CostPrior::uniform(lo, hi),
            CostRecord::Empirical { samples, bins } => CostPrior::empirical(samples, bins),
        }
    }
}

impl From<CostPrior> for CostRecord {
    fn from(c: CostPrior) -> Self {
        match c {
            CostPrior::Uniform { lo, hi } => CostRecord::Uniform { lo, hi },
            CostPrior::Histogram(h) => CostRecord::Empirical { samples: h.samples, bins: h.bins },
        }
    }
}

impl CostPrior {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        ensure(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi, || {
            format!("cost support [{lo}, {hi}] needs 0 ≤ lo < hi")
        })?;
        Ok(CostPrior::Uniform { lo, hi })
    }

    /// Histogram with `bins` equal bins (default `⌈√n⌉`) spanning the samples.
    /// Every bin must be occupied so the density stays positive.
    pub fn empirical(samples: Vec<f64>, bins: Option<usize>) -> Result<Self> {
        ensure(samples.len() >= 2, || "need at least two cost samples".into())?;
        ensure(samples.iter().all(|x| x.is_finite() && *x >= 0.0), || "cost samples must be finite and ≥ 0".into())?;
        let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        ensure(hi > lo, || "cost samples are all equal".into())?;
        let k = bins.unwrap_or_else(|| (samples.len() as f64).sqrt().ceil() as usize);
        ensure(k >= 1, || "need at least one bin".into())?;
        let width = (hi - lo) / k as f64;
        let mut counts = vec![0usize; k];
        for &x in &samples {
            counts[(((x - lo) / width) as usize).min(k - 1)] += 1;
        }
        ensure(counts.iter().all(|&n| n > 0), || "every histogram bin needs at least one sample".into())?;
        let n = samples.len() as f64;
        let mass = counts.iter().map(|&c| c as f64 / n).collect();
        Ok(CostPrior::Histogram(Histogram { samples, bins, lo, width, mass }))
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            CostPrior::Uniform { lo, hi } => (*lo, *hi),
            CostPrior::Histogram(h) => (h.lo, h.lo + h.width * h.mass.len() as f64),
        }
    }

    /// `h(c)`; right-continuous at bin edges, zero outside the support.
    pub fn pdf(&self, c: f64) -> f64 {
        let (lo, hi) = self.support();
        if c < lo || c > hi {
            return 0.0;
        }
        match self {
            CostPrior::Uniform { .. } => 1.0 / (hi - lo),
            CostPrior::Histogram(h) => h.mass[h.bin(c)] / h.width,
        }
    }

    /// `H(c)`.
    pub fn cdf(&self, c: f64) -> f64 {
        let (lo, hi) = self.support();
        if c <= lo {
            return 0.0;
        }
        if c >= hi {
            return 1.0;
        }
        match self {
            CostPrior::Uniform { .. } => (c - lo) / (hi - lo),
            CostPrior::Histogram(h) => {
                let k = h.bin(c);
                let below: f64 = h.mass[..k].iter().sum();
                below + h.mass[k] * (c - (h.lo + k as f64 * h.width)) / h.width
            }
        }
    }
}

/// `z(c) = c + H(c)/h(c)`.
pub fn virtual_cost(cost_prior: &CostPrior, c: f64) -> Result<f64> {
    let (lo, hi) = cost_prior.support();
    let density = cost_prior.pdf(c);
    if !(lo..=hi).contains(&c) || density <= 0.0 {
        return Err(Error::Domain { value: c, lo, hi });
    }
    Ok(c + cost_prior.cdf(c) / density)
}

fn check_regularity(cost_prior: &CostPrior) -> Result<()> {
    let (lo, hi) = cost_prior.support();
    let mut prev = virtual_cost(cost_prior, lo)?;
    for i in 1..=REGULARITY_GRID {
        let c = (lo + (hi - lo) * i as f64 / REGULARITY_GRID as f64).min(hi);
        let z = virtual_cost(cost_prior, c)?;
        if z <= prev {
            return Err(Error::Regularity(format!("z({c}) = {z} does not exceed the previous grid value {prev}")));
        }
        prev = z;
    }
    Ok(())
}

/// Take-it-or-leave-it offer to an agent of unknown cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offer {
    /// `R`: the expected payment offered.
    pub reserve_offer: f64,
    /// `p = R / E[max(0, v − E[v])]`.
    pub participation_prob: f64,
    /// `G*` with each sale kept only with probability `p`.
    pub g: ReserveCdf,
}

/// Offer `R = 0` if `u < z(c_min)`, `z⁻¹(u)` if `u ∈ [z(c_min), z(c_max)]`,
/// and `c_max` above that.
pub fn optimal_offer(cost_prior: &CostPrior, value_prior: &Prior, u: f64) -> Result<Offer> {
    ensure(u.is_finite() && u >= 0.0, || format!("information value {u} must be non-negative"))?;
    check_regularity(cost_prior)?;
    let (lo, hi) = cost_prior.support();
    let (z_lo, z_hi) = (virtual_cost(cost_prior, lo)?, virtual_cost(cost_prior, hi)?);
    let reserve_offer = if u < z_lo {
        0.0
    } else if u == z_lo {
        lo
    } else if u > z_hi {
        hi
    } else {
        let (mut a, mut b) = (lo, hi);
        while b - a > INVERSE_TOLERANCE {
            let mid = 0.5 * (a + b);
            if virtual_cost(cost_prior, mid)? < u {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    };
    let threshold = value_prior.truthfulness_threshold();
    if reserve_offer > threshold {
        return Err(Error::ThresholdExceeded { requested: reserve_offer, threshold });
    }
    let participation_prob = if reserve_offer == 0.0 { 0.0 } else { (reserve_offer / threshold).min(1.0) };
    let g = ReserveCdf::gstar(value_prior).scale_by_sale_prob(participation_prob)?;
    Ok(Offer { reserve_offer, participation_prob, g })
}

/// `R·H(R) + u·(1 − H(R))`: the principal pays `R` when the agent takes the
/// offer and goes without the information (worth `u`) otherwise.
pub fn expected_loss_unknown_cost(cost_prior: &CostPrior, value_prior: &Prior, u: f64) -> Result<f64> {
    let offer = optimal_offer(cost_prior, value_prior, u)?;
    let taken = cost_prior.cdf(offer.reserve_offer);
    Ok(offer.reserve_offer * taken + u * (1.0 - taken))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent;

    fn costs() -> CostPrior {
        CostPrior::uniform(0.0, 10.0).unwrap()
    }

    fn values() -> Prior {
        Prior::uniform(0.0, 100.0).unwrap()
    }

    #[test]
    fn uniform_virtual_cost() {
        assert_eq!(virtual_cost(&costs(), 3.0).unwrap(), 6.0);
        assert_eq!(virtual_cost(&costs(), 0.0).unwrap(), 0.0);
        assert!(matches!(virtual_cost(&costs(), 11.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn histogram_virtual_cost() {
        // Two bins on [0, 2]: masses 1/4 and 3/4.
        let h = CostPrior::empirical(vec![0.0, 1.2, 1.5, 2.0], Some(2)).unwrap();
        assert_eq!(h.support(), (0.0, 2.0));
        assert!((h.pdf(0.5) - 0.25).abs() < 1e-15);
        assert!((h.cdf(1.5) - (0.25 + 0.375)).abs() < 1e-15);
        assert!((virtual_cost(&h, 1.5).unwrap() - (1.5 + 0.625 / 0.75)).abs() < 1e-12);
        // Finite-difference oracle for h.
        let c = 0.3;
        let fd = (h.cdf(c + 1e-6) - h.cdf(c - 1e-6)) / 2e-6;
        assert!((fd - h.pdf(c)).abs() < 1e-6);
        assert!(CostPrior::empirical(vec![0.0, 0.1, 5.0], Some(3)).is_err());
    }

    #[test]
    fn offers() {
        let o = optimal_offer(&costs(), &values(), 8.0).unwrap();
        assert!((o.reserve_offer - 4.0).abs() < 1e-9);
        assert!((o.participation_prob - 4.0 / 12.5).abs() < 1e-9);
        assert!((o.reserve_offer - o.participation_prob * values().truthfulness_threshold()).abs() < 1e-9);
        assert!((agent::u_net(&o.g, &values()) - o.reserve_offer).abs() < 1e-9);
        assert_eq!(optimal_offer(&costs(), &values(), 25.0).unwrap().reserve_offer, 10.0);
        assert_eq!(optimal_offer(&costs(), &values(), 0.0).unwrap().reserve_offer, 0.0);
        let small = Prior::uniform(0.0, 20.0).unwrap();
        assert!(matches!(optimal_offer(&costs(), &small, 25.0), Err(Error::ThresholdExceeded { .. })));
    }

    #[test]
    fn irregular_costs_are_rejected() {
        // A density that jumps up sharply makes H/h drop.
        let mut samples = vec![0.5];
        samples.extend(std::iter::repeat_n(1.5, 50));
        let h = CostPrior::empirical(samples, Some(2)).unwrap();
        assert!(matches!(optimal_offer(&h, &values(), 1.0), Err(Error::Regularity(_))));
    }

    #[test]
    fn losses() {
        assert!((expected_loss_unknown_cost(&costs(), &values(), 8.0).unwrap() - 6.4).abs() < 1e-9);
        assert!((expected_loss_unknown_cost(&costs(), &values(), 25.0).unwrap() - 10.0).abs() < 1e-12);
        assert_eq!(expected_loss_unknown_cost(&costs(), &values(), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn json_records() {
        let c: CostPrior = serde_json::from_str(r#"{"family":"uniform","lo":0,"hi":10}"#).unwrap();
        assert_eq!(c, costs());
        let h: CostPrior = serde_json::from_str(r#"{"family":"empirical","samples":[1,2,3,4],"bins":2}"#).unwrap();
        let back: CostPrior = serde_json::from_str(&serde_json::to_string(&h).unwrap()).unwrap();
        assert_eq!(h, back);
    }
}
