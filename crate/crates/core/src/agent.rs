//! The agent: expected utilities of the cooperative and heuristic strategies and
//! best-response bids.
//!
//! All utilities here are the `ε → 0` limits. With reserve cdf `G`:
//!
//! - cooperative (compute `v`, bid it): `U_coop(G) = E[Ĝ(v)]`
//! - heuristic (bid `E[v]` blind): `U_heur(G) = Ĝ(E[v])`
//! - `U_net = U_coop − U_heur`, and the agent computes iff `U_net > c`.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::expectation;
use crate::prior::Prior;
use crate::reserve::ReserveCdf;

/// Relative slack when deciding that the truthful bid ties the grid maximum.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    /// Cost of computing the value.
    #[serde(rename = "c")]
    pub cost: f64,
    /// Cost of delivering the report; reimbursed by the principal on participation.
    #[serde(default)]
    pub delivery_cost: f64,
    /// The secret-reserve mechanism's ε, as known to the agent.
    #[serde(default)]
    pub epsilon: f64,
}

impl AgentConfig {
    pub fn new(cost: f64) -> Self {
        AgentConfig { cost, delivery_cost: 0.0, epsilon: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.cost.is_finite() && self.cost >= 0.0, || format!("cost {} must be non-negative", self.cost))?;
        ensure(self.delivery_cost.is_finite() && self.delivery_cost >= 0.0, || {
            format!("delivery cost {} must be non-negative", self.delivery_cost)
        })?;
        ensure((0.0..=1.0).contains(&self.epsilon), || format!("epsilon {} outside [0, 1]", self.epsilon))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Cooperative,
    Heuristic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyChoice {
    pub kind: Strategy,
    /// `U_net − c`.
    pub expected_gain_gap: f64,
}

pub fn u_coop(g: &ReserveCdf, agent_prior: &Prior) -> f64 {
    expectation::mean_integral(g, agent_prior)
}

pub fn u_heur(g: &ReserveCdf, agent_prior: &Prior) -> f64 {
    g.integral(agent_prior.mean())
}

pub fn u_net(g: &ReserveCdf, agent_prior: &Prior) -> f64 {
    u_coop(g, agent_prior) - u_heur(g, agent_prior)
}

/// Cooperative iff `U_net > c`. Delivery cost is reimbursed, so it never enters.
pub fn choose_strategy(g: &ReserveCdf, agent_prior: &Prior, cfg: &AgentConfig) -> StrategyChoice {
    let gap = u_net(g, agent_prior) - cfg.cost;
    StrategyChoice {
        kind: if gap > 0.0 { Strategy::Cooperative } else { Strategy::Heuristic },
        expected_gain_gap: gap,
    }
}

/// Secret reserve: bid the value when known, else the prior mean.
pub fn best_bid_secret_reserve(v_known: Option<f64>, agent_prior: &Prior) -> f64 {
    v_known.unwrap_or_else(|| agent_prior.mean())
}

/// Expected trade surplus of bid `b` under the bid-derived-price rule:
/// the sale happens with probability `G(b)` at price `b − Ĝ(b)/G(b)`.
pub fn bid_derived_payoff(g: &ReserveCdf, v: f64, b: f64) -> f64 {
    g.eval(b) * (v - b) + g.integral(b)
}

/// Expected trade surplus of bid `b` against a secret reserve drawn uniformly on
/// `support` with probability `epsilon` and from `G` otherwise.
pub fn secret_reserve_payoff(g: &ReserveCdf, epsilon: f64, support: (f64, f64), v: f64, b: f64) -> f64 {
    let (lo, hi) = support;
    let (u_eval, u_int) = if hi > lo {
        let frac = ((b - lo) / (hi - lo)).clamp(0.0, 1.0);
        let int = if b <= lo {
            0.0
        } else if b >= hi {
            0.5 * (hi - lo) + (b - hi)
        } else {
            (b - lo).powi(2) / (2.0 * (hi - lo))
        };
        (frac, int)
    } else {
        (if b >= lo { 1.0 } else { 0.0 }, (b - lo).max(0.0))
    };
    (1.0 - epsilon) * bid_derived_payoff(g, v, b) + epsilon * (u_eval * (v - b) + u_int)
}

fn bid_grid(support: (f64, f64), grid_step: f64) -> impl Iterator<Item = f64> {
    let (lo, hi) = support;
    let n = ((hi - lo) / grid_step).ceil().max(0.0) as usize;
    (0..=n).map(move |i| (lo + i as f64 * grid_step).min(hi))
}

/// Plain grid argmax (first maximiser) of the secret-reserve bid payoff.
pub fn grid_argmax_secret_reserve(
    g: &ReserveCdf,
    epsilon: f64,
    support: (f64, f64),
    v: f64,
    grid_step: f64,
) -> Result<f64> {
    ensure(grid_step.is_finite() && grid_step > 0.0, || format!("grid step {grid_step} must be positive"))?;
    let mut best = (f64::NEG_INFINITY, support.0);
    for b in bid_grid(support, grid_step) {
        let payoff = secret_reserve_payoff(g, epsilon, support, v, b);
        if payoff > best.0 {
            best = (payoff, b);
        }
    }
    Ok(best.1)
}

/// Best bid under the bid-derived-price rule, by grid search over the agent's
/// value support. The truthful bid (`v`, or the mean when `v` is unknown) is
/// always a candidate and wins ties.
pub fn best_bid_derived_price(
    g: &ReserveCdf,
    v_known: Option<f64>,
    agent_prior: &Prior,
    grid_step: f64,
) -> Result<f64> {
    ensure(grid_step.is_finite() && grid_step > 0.0, || format!("grid step {grid_step} must be positive"))?;
    let v = v_known.unwrap_or_else(|| agent_prior.mean());
    let truthful = bid_derived_payoff(g, v, v);
    let best = bid_grid(agent_prior.support(), grid_step)
        .map(|b| (bid_derived_payoff(g, v, b), b))
        .fold((f64::NEG_INFINITY, v), |acc, x| if x.0 > acc.0 { x } else { acc });
    if truthful >= best.0 - TIE_TOLERANCE * best.0.abs().max(1.0) {
        Ok(v)
    } else {
        Ok(best.1)
    }
}

/// Purchase rule in the posted-price mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum AcceptRule {
    /// Computed: accept iff `v_a > t`.
    ValueAbove { t: f64 },
    /// Not computed: accept iff `E[v_a] > t`, whatever `v_a` turns out to be.
    MeanAbove { t: f64, mean: f64 },
}

impl AcceptRule {
    pub fn accepts(&self, v_a: f64) -> bool {
        match *self {
            AcceptRule::ValueAbove { t } => v_a > t,
            AcceptRule::MeanAbove { t, mean } => mean > t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostedPriceDecision {
    pub compute: bool,
    /// `p·E[max(0, v_a − t)] − p·max(0, E[v_a] − t)`.
    pub gain: f64,
    pub accept: AcceptRule,
}

pub fn posted_price_decision(t: f64, p: f64, agent_prior: &Prior, cfg: &AgentConfig) -> PostedPriceDecision {
    let mean = agent_prior.mean();
    let gain = p * agent_prior.expected_excess(t) - p * (mean - t).max(0.0);
    let compute = gain > cfg.cost;
    PostedPriceDecision {
        compute,
        gain,
        accept: if compute { AcceptRule::ValueAbove { t } } else { AcceptRule::MeanAbove { t, mean } },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reserve::{Atom, Piece, ReservePoint};

    fn u20() -> Prior {
        Prior::uniform(0.0, 20.0).unwrap()
    }

    #[test]
    fn utilities_of_gstar() {
        let g = ReserveCdf::gstar(&u20());
        assert!((u_coop(&g, &u20()) - 2.5).abs() < 1e-12);
        assert_eq!(u_heur(&g, &u20()), 0.0);
        for prior in [Prior::triangular(1.0, 3.0).unwrap(), Prior::two_point(0.2, 5.0).unwrap()] {
            assert_eq!(u_heur(&ReserveCdf::gstar(&prior), &prior), 0.0);
        }
    }

    #[test]
    fn utilities_of_uniform_piece() {
        // Ĝ(v) = v²/40 on [0, 20]; E[v²]/40 = (400/3)/40.
        let g = ReserveCdf::uniform(0.0, 20.0).unwrap();
        assert!((u_coop(&g, &u20()) - 10.0 / 3.0).abs() < 1e-12);
        assert!((u_heur(&g, &u20()) - 2.5).abs() < 1e-12);
        assert!((u_net(&g, &u20()) - 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn never_sell_is_worthless() {
        let g = ReserveCdf::never_sell();
        assert_eq!(u_coop(&g, &u20()), 0.0);
        assert_eq!(u_heur(&g, &u20()), 0.0);
        assert_eq!(u_net(&g, &u20()), 0.0);
    }

    #[test]
    fn gc_pays_exactly_the_target() {
        for c in [0.01, 0.1, 1.0, 2.4] {
            let g = ReserveCdf::gc(&u20(), c).unwrap();
            assert!((u_net(&g, &u20()) - c).abs() < 1e-9);
        }
    }

    #[test]
    fn strategy_choice() {
        let g = ReserveCdf::gstar(&u20());
        let coop = choose_strategy(&g, &u20(), &AgentConfig::new(1.0));
        assert_eq!(coop.kind, Strategy::Cooperative);
        assert!((coop.expected_gain_gap - 1.5).abs() < 1e-12);
        assert_eq!(choose_strategy(&g, &u20(), &AgentConfig::new(3.0)).kind, Strategy::Heuristic);
        let piece = ReserveCdf::uniform(0.0, 20.0).unwrap();
        assert_eq!(choose_strategy(&piece, &u20(), &AgentConfig::new(0.0)).kind, Strategy::Cooperative);
        // Delivery cost is reimbursed and does not move the decision.
        let cfg = AgentConfig { cost: 1.0, delivery_cost: 100.0, epsilon: 0.0 };
        assert_eq!(choose_strategy(&g, &u20(), &cfg).kind, Strategy::Cooperative);
    }

    #[test]
    fn secret_reserve_bids() {
        assert_eq!(best_bid_secret_reserve(Some(13.7), &u20()), 13.7);
        assert_eq!(best_bid_secret_reserve(None, &u20()), 10.0);
        assert_eq!(best_bid_secret_reserve(Some(0.0), &u20()), 0.0);
    }

    #[test]
    fn derived_price_bids() {
        let piece = ReserveCdf::uniform(0.0, 20.0).unwrap();
        let b = best_bid_derived_price(&piece, Some(12.0), &u20(), 0.01).unwrap();
        assert_eq!(b, 12.0);
        assert!((bid_derived_payoff(&piece, 12.0, b) - 3.6).abs() < 1e-12);
        // Flat payoff above the step: every b ≥ 10 earns 5; the truthful bid wins the tie.
        let gstar = ReserveCdf::gstar(&u20());
        for b in [10.0, 12.0, 19.0] {
            assert!((bid_derived_payoff(&gstar, 15.0, b) - 5.0).abs() < 1e-12);
        }
        assert_eq!(best_bid_derived_price(&gstar, Some(15.0), &u20(), 0.01).unwrap(), 15.0);
        assert_eq!(best_bid_derived_price(&piece, Some(0.0), &u20(), 0.01).unwrap(), 0.0);
        assert_eq!(best_bid_derived_price(&piece, None, &u20(), 0.01).unwrap(), 10.0);
        assert!(best_bid_derived_price(&piece, None, &u20(), 0.0).is_err());
    }

    #[test]
    fn grid_argmax_finds_value_with_epsilon() {
        let g = ReserveCdf::new(
            vec![Atom { at: ReservePoint::Finite(8.0), mass: 0.5 }],
            vec![Piece { lo: 0.0, hi: 20.0, mass: 0.5 }],
        )
        .unwrap();
        for v in [0.3, 7.77, 8.0, 15.02] {
            let b = grid_argmax_secret_reserve(&g, 1e-3, (0.0, 20.0), v, 0.01).unwrap();
            assert!((b - v).abs() <= 0.01 + 1e-12, "v={v} b={b}");
        }
    }

    #[test]
    fn posted_price_examples() {
        let d = posted_price_decision(10.0, 0.5, &u20(), &AgentConfig::new(1.0));
        assert!(d.compute);
        assert!((d.gain - 1.25).abs() < 1e-12);
        assert!(d.accept.accepts(10.5) && !d.accept.accepts(9.0));
        let d = posted_price_decision(10.0, 0.1, &u20(), &AgentConfig::new(1.0));
        assert!(!d.compute);
        assert!((d.gain - 0.25).abs() < 1e-12);
        assert!(!d.accept.accepts(19.0));
        let d = posted_price_decision(10.0, 0.01, &u20(), &AgentConfig::new(0.0));
        assert!(d.compute);
    }
}
