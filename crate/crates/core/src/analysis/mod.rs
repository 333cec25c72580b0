//! Closed-form analysis: truthfulness, principal loss, expected mechanism
//! outcomes, searches over cdf space, and the unknown-cost offer.

mod lattice;
mod unknown_cost;

pub use lattice::{
    min_loss_search_general, optimize_unet_over_lattice, optimize_unet_over_steps, LatticeMethod, LatticeOptimum,
    MinLossResult, StepOptimum, DEFAULT_SEARCH_BUDGET,
};
pub use unknown_cost::{expected_loss_unknown_cost, optimal_offer, virtual_cost, CostPrior, Offer};

use serde::{Deserialize, Serialize};

use crate::agent::{self, AgentConfig};
use crate::error::{ensure, Result};
use crate::expectation;
use crate::mechanism::{MechanismKind, MechanismSpec};
use crate::prior::Prior;
use crate::reserve::ReserveCdf;
use crate::value_model::{JointSampler, ValueModel, JOINT_MARGINAL_DRAWS};

/// Strict: a cost equal to the threshold cannot be elicited.
pub fn exists_truthful(prior: &Prior, c: f64) -> bool {
    c < prior.truthfulness_threshold()
}

/// Loss of a cooperative common-value run. The game is zero-sum, so this is
/// the agent's `U_coop`.
pub fn principal_loss_common(g: &ReserveCdf, prior: &Prior) -> f64 {
    agent::u_coop(g, prior)
}

/// A value with its Monte Carlo standard error (zero when exact).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, std_error: 0.0 }
    }
}

/// `E[Ĝ(v_a) + (v_p − v_a)·G(v_a)]` under cooperative play.
///
/// Exact for common and scaled models and for joint pair lists; otherwise
/// averaged over `n_mc` pairs drawn with `seed`.
pub fn principal_loss_general(g: &ReserveCdf, model: &ValueModel, n_mc: usize, seed: u64) -> Result<Estimate> {
    model.validate()?;
    match model {
        ValueModel::Common { prior } => Ok(Estimate::exact(principal_loss_common(g, prior))),
        ValueModel::Scaled { .. } => {
            let prior = model.agent_prior()?;
            let ratio = model.principal_ratio().expect("scaled models are proportional");
            let loss = agent::u_coop(g, &prior) + (ratio - 1.0) * expectation::mean_value_times_eval(g, &prior);
            Ok(Estimate::exact(loss))
        }
        ValueModel::Joint { sampler } => {
            ensure(n_mc > 0 || matches!(sampler, JointSampler::Pairs { .. }), || "n_mc must be positive".into())?;
            let pairs = model.pair_sample(n_mc, seed);
            let mut acc = Welford::default();
            for (vp, va) in pairs {
                acc.push(g.integral(va) + (vp - va) * g.eval(va));
            }
            let se = if matches!(sampler, JointSampler::Pairs { .. }) { 0.0 } else { acc.std_error() };
            Ok(Estimate { value: acc.mean, std_error: se })
        }
    }
}

/// Running mean and variance.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Welford {
    pub n: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
    }
}

/// Analytic summary of a mechanism under a value model and agent config.
///
/// The `expected_*` fields are what a batch of runs should average to; they
/// use the ε → 0 and δ → 0 limits, and `value_budget` / `rate_budget` bound
/// how far the actual ε and δ can move them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub u_coop: f64,
    pub u_heur: f64,
    pub u_net: f64,
    /// Expected principal loss under the strategy the agent actually picks.
    pub principal_loss: f64,
    pub threshold: f64,
    pub truthful: bool,
    pub cost: f64,
    pub expected_agent_utility: f64,
    pub expected_sale_rate: f64,
    pub expected_info_rate: f64,
    /// Probability the principal is committed to sell to a high enough bid.
    pub expected_offer_rate: f64,
    pub value_budget: f64,
    pub rate_budget: f64,
    /// A reserve atom sits on a value the agent's prior puts mass on, so the
    /// right-continuous tie rule (a bid equal to the reserve wins) matters.
    pub reserve_atom_on_value_atom: bool,
    /// Standard error of the analytics themselves; nonzero only for sampled joint models.
    pub analytic_std_error: AnalyticErrors,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalyticErrors {
    pub agent_utility: f64,
    pub principal_loss: f64,
    pub sale_rate: f64,
}

/// Expected (surplus, loss, sale) of one mechanism for given values, averaged
/// over the mechanism's own lotteries only.
#[derive(Debug, Clone, Copy)]
enum Rule<'a> {
    /// Secret reserve or bid-derived price, bidding `bid` (or `v_a` if `None`).
    Reserve { g: &'a ReserveCdf, bid: Option<f64> },
    /// Posted price; `accept` fixed when the agent did not compute.
    Posted { t: f64, p: f64, accept: Option<bool> },
}

impl Rule<'_> {
    fn conditional(&self, vp: f64, va: f64) -> (f64, f64, f64) {
        match *self {
            Rule::Reserve { g, bid } => {
                let b = bid.unwrap_or(va);
                let (gb, ib) = (g.eval(b), g.integral(b));
                (ib + gb * (va - b), ib + gb * (vp - b), gb)
            }
            Rule::Posted { t, p, accept } => {
                if accept.unwrap_or(va > t) {
                    (p * (va - t), p * (vp - t), p)
                } else {
                    (0.0, 0.0, 0.0)
                }
            }
        }
    }

    /// Closed form when `v_p = ratio · v_a`.
    fn proportional(&self, prior: &Prior, ratio: f64) -> (f64, f64, f64) {
        let m = prior.mean();
        match *self {
            Rule::Reserve { g, bid: None } => {
                let surplus = expectation::mean_integral(g, prior);
                let cross = expectation::mean_value_times_eval(g, prior);
                (surplus, surplus + (ratio - 1.0) * cross, expectation::mean_eval(g, prior))
            }
            Rule::Reserve { g, bid: Some(b) } => {
                let (gb, ib) = (g.eval(b), g.integral(b));
                (ib + gb * (m - b), ib + gb * (ratio * m - b), gb)
            }
            Rule::Posted { t, p, accept: None } => (
                p * prior.expected_excess(t),
                p * (ratio * prior.partial_mean_above(t) - t * prior.prob_above(t)),
                p * prior.prob_above(t),
            ),
            Rule::Posted { t, p, accept: Some(yes) } => {
                if yes {
                    (p * (m - t), p * (ratio * m - t), p)
                } else {
                    (0.0, 0.0, 0.0)
                }
            }
        }
    }
}

/// Whether some finite atom of `g` coincides with an atom of `prior`.
fn atom_collision(g: &ReserveCdf, prior: &Prior) -> bool {
    let value_atoms: Vec<f64> = match prior {
        Prior::TwoPoint { q, high } => [(0.0, *q), (*high, 1.0 - q)].into_iter().filter(|a| a.1 > 0.0).map(|a| a.0).collect(),
        Prior::Empirical(e) => e.samples().to_vec(),
        _ => Vec::new(),
    };
    g.atoms().iter().filter_map(|a| a.at.finite()).any(|r| value_atoms.contains(&r))
}

/// Expected outcome of `spec` under `model` and `cfg`.
pub fn mechanism_report(spec: &MechanismSpec, model: &ValueModel, cfg: &AgentConfig) -> Result<UtilityReport> {
    spec.validate()?;
    model.validate()?;
    cfg.validate()?;
    let prior = model.agent_prior()?;
    let m = prior.mean();
    let threshold = prior.truthfulness_threshold();
    let span = model.value_span()?;

    let (u_coop, u_heur, computed, rule, value_budget, rate_budget) = match &spec.kind {
        MechanismKind::SecretReserve { g, .. } | MechanismKind::BidDerivedPrice { g, .. } => {
            let computed = agent::choose_strategy(g, &prior, cfg).kind == agent::Strategy::Cooperative;
            let eps = match spec.kind {
                MechanismKind::SecretReserve { epsilon, .. } => epsilon,
                _ => 0.0,
            };
            let rule = Rule::Reserve { g, bid: if computed { None } else { Some(m) } };
            (agent::u_coop(g, &prior), agent::u_heur(g, &prior), computed, rule, eps * span, eps)
        }
        MechanismKind::PostedPrice { t, p, delta } => {
            let d = agent::posted_price_decision(*t, *p, &prior, cfg);
            let rule = Rule::Posted { t: *t, p: *p, accept: if d.compute { None } else { Some(m > *t) } };
            let budget = cfg.epsilon + delta;
            (p * prior.expected_excess(*t), p * (m - t).max(0.0), d.compute, rule, budget * span, budget.min(1.0))
        }
    };

    let ((surplus, loss, sale), errors) = match (model.principal_ratio(), model) {
        (Some(ratio), _) => (rule.proportional(&prior, ratio), AnalyticErrors::default()),
        (None, ValueModel::Joint { sampler }) => {
            let mut acc = [Welford::default(); 3];
            for (vp, va) in model.pair_sample(JOINT_MARGINAL_DRAWS, 0) {
                let (s, l, r) = rule.conditional(vp, va);
                acc[0].push(s);
                acc[1].push(l);
                acc[2].push(r);
            }
            let errors = if matches!(sampler, JointSampler::Pairs { .. }) {
                AnalyticErrors::default()
            } else {
                AnalyticErrors {
                    agent_utility: acc[0].std_error(),
                    principal_loss: acc[1].std_error(),
                    sale_rate: acc[2].std_error(),
                }
            };
            ((acc[0].mean, acc[1].mean, acc[2].mean), errors)
        }
        (None, _) => unreachable!("only joint models lack a ratio"),
    };

    let offer = match &spec.kind {
        // A fraction is on offer in every run.
        MechanismKind::SecretReserve { .. } if spec.fractional_sale => 1.0,
        MechanismKind::SecretReserve { g, .. } | MechanismKind::BidDerivedPrice { g, .. } => g.finite_mass(),
        MechanismKind::PostedPrice { p, .. } => *p,
    };
    let info = match spec.kind {
        MechanismKind::PostedPrice { .. } if computed => 1.0 - sale,
        _ if computed => 1.0,
        _ => 0.0,
    };
    let u_net = u_coop - u_heur;
    let reimbursed = spec.delivery_cost_reimbursed;
    Ok(UtilityReport {
        u_coop,
        u_heur,
        u_net,
        principal_loss: loss + reimbursed,
        threshold,
        truthful: u_net > cfg.cost,
        cost: cfg.cost,
        expected_agent_utility: surplus - if computed { cfg.cost } else { 0.0 } - cfg.delivery_cost + reimbursed,
        expected_sale_rate: sale,
        expected_info_rate: info,
        expected_offer_rate: offer,
        value_budget,
        rate_budget,
        reserve_atom_on_value_atom: atom_collision(&spec.effective_cdf()?, &prior),
        analytic_std_error: errors,
    })
}

/// `G_{c + margin}`: the cheapest cdf that still clears cost `c`.
pub fn design_min_loss_cdf(prior: &Prior, c: f64, margin: f64) -> Result<ReserveCdf> {
    ensure(margin.is_finite() && margin > 0.0, || format!("margin {margin} must be positive"))?;
    ensure(c.is_finite() && c >= 0.0, || format!("cost {c} must be non-negative"))?;
    ReserveCdf::gc(prior, c + margin)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    fn u20() -> Prior {
        Prior::uniform(0.0, 20.0).unwrap()
    }

    #[test]
    fn truthfulness_examples() {
        assert!(exists_truthful(&Prior::uniform(0.0, 80000.0).unwrap(), 200.0));
        assert!(!exists_truthful(&u20(), 2.5));
        assert!(exists_truthful(&u20(), 0.0));
        assert!(!exists_truthful(&Prior::empirical(vec![3.0, 3.0]).unwrap(), 0.0));
    }

    #[test]
    fn flags_reserve_atoms_on_value_atoms() {
        let model = ValueModel::common(Prior::two_point(0.3, 10.0).unwrap());
        let cfg = AgentConfig::new(0.1);
        let on = MechanismSpec::secret_reserve(0.0, ReserveCdf::point(10.0).unwrap());
        let off = MechanismSpec::secret_reserve(0.0, ReserveCdf::point(7.0).unwrap());
        assert!(mechanism_report(&on, &model, &cfg).unwrap().reserve_atom_on_value_atom);
        assert!(!mechanism_report(&off, &model, &cfg).unwrap().reserve_atom_on_value_atom);
        assert!(mechanism_report(&MechanismSpec::posted_price(0.0, 0.5, 0.0), &model, &cfg).unwrap().reserve_atom_on_value_atom);
        let smooth = ValueModel::common(u20());
        assert!(!mechanism_report(&MechanismSpec::secret_reserve(0.0, ReserveCdf::point(10.0).unwrap()), &smooth, &cfg)
            .unwrap()
            .reserve_atom_on_value_atom);
    }

    #[test]
    fn common_loss_examples() {
        let gc = ReserveCdf::gc(&u20(), 0.1).unwrap();
        assert!((principal_loss_common(&gc, &u20()) - 0.1).abs() < 1e-12);
        assert_eq!(principal_loss_common(&ReserveCdf::never_sell(), &u20()), 0.0);
        assert!((principal_loss_common(&ReserveCdf::gstar(&u20()), &u20()) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn general_loss_matches_models() {
        let g = ReserveCdf::uniform(2.0, 15.0).unwrap();
        let common = principal_loss_general(&g, &ValueModel::common(u20()), 0, 0).unwrap();
        assert_eq!(common, Estimate::exact(principal_loss_common(&g, &u20())));

        // v_p on [0, 20], a = 0.5: v_a on [0, 10], G_{c'} is a step at 5 with p = c'/1.25.
        let model = ValueModel::scaled(u20(), 0.5).unwrap();
        let gc = ReserveCdf::gc(&model.agent_prior().unwrap(), 0.2).unwrap();
        let loss = principal_loss_general(&gc, &model, 0, 0).unwrap().value;
        assert!((loss - 0.8).abs() < 1e-12, "{loss}");

        let pairs = vec![(4.0, 6.0), (12.0, 10.0), (1.0, 0.5)];
        let joint = ValueModel::joint(JointSampler::Pairs { pairs: pairs.clone() }).unwrap();
        let est = principal_loss_general(&g, &joint, 0, 0).unwrap();
        let oracle: f64 =
            pairs.iter().map(|&(p, a)| g.integral(a) + (p - a) * g.eval(a)).sum::<f64>() / pairs.len() as f64;
        assert!((est.value - oracle).abs() < 1e-12);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn welford_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1013) as f64 / 13.0).collect();
        let mut all = Welford::default();
        xs.iter().for_each(|&x| all.push(x));
        let mut left = Welford::default();
        let mut right = Welford::default();
        xs[..317].iter().for_each(|&x| left.push(x));
        xs[317..].iter().for_each(|&x| right.push(x));
        left.merge(&right);
        assert_eq!(left.n, all.n);
        assert!((left.mean - all.mean).abs() < 1e-12);
        assert!((left.m2 - all.m2).abs() < 1e-8 * all.m2);
    }

    #[test]
    fn report_for_gc() {
        let spec = MechanismSpec::secret_reserve(0.0, ReserveCdf::gc(&u20(), 0.1).unwrap());
        let r = mechanism_report(&spec, &ValueModel::common(u20()), &AgentConfig::new(0.05)).unwrap();
        assert!(r.truthful);
        assert!((r.u_net - 0.1).abs() < 1e-12);
        assert!((r.principal_loss - 0.1).abs() < 1e-12);
        assert!((r.expected_agent_utility - 0.05).abs() < 1e-12);
        assert!((r.expected_sale_rate - 0.02).abs() < 1e-12);
        assert_eq!(r.expected_info_rate, 1.0);
    }

    #[test]
    fn mechanisms_agree_on_step_cdfs() {
        let prior = Prior::triangular(0.0, 12.0).unwrap();
        let model = ValueModel::common(prior);
        let cfg = AgentConfig::new(0.1);
        let (t, p) = (7.0, 0.6);
        let step = ReserveCdf::step(t, p).unwrap();
        let r1 = mechanism_report(&MechanismSpec::secret_reserve(0.0, step.clone()), &model, &cfg).unwrap();
        let r2 = mechanism_report(&MechanismSpec::bid_derived(step), &model, &cfg).unwrap();
        let r3 = mechanism_report(&MechanismSpec::posted_price(t, p, 0.0), &model, &cfg).unwrap();
        for r in [&r2, &r3] {
            assert!((r.u_coop - r1.u_coop).abs() < 1e-12);
            assert!((r.u_heur - r1.u_heur).abs() < 1e-12);
            assert!((r.principal_loss - r1.principal_loss).abs() < 1e-12);
            assert!((r.expected_sale_rate - r1.expected_sale_rate).abs() < 1e-12);
        }
    }

    #[test]
    fn min_loss_design() {
        let car = Prior::uniform(0.0, 80000.0).unwrap();
        let g = design_min_loss_cdf(&car, 200.0, 1.0).unwrap();
        assert!((g.finite_mass() - 0.0201).abs() < 1e-12);
        let g = design_min_loss_cdf(&u20(), 0.1, 0.025).unwrap();
        assert!((g.finite_mass() - 0.05).abs() < 1e-12);
        let g = design_min_loss_cdf(&u20(), 2.0, 0.5).unwrap();
        assert!((g.finite_mass() - 1.0).abs() < 1e-12);
        assert!(matches!(design_min_loss_cdf(&u20(), 2.0, 0.6), Err(Error::ThresholdExceeded { .. })));
        assert!(design_min_loss_cdf(&u20(), 0.1, 0.0).is_err());
    }
}
