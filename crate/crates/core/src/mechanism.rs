//! Executable settlement of the three elicitation mechanisms.
//!
//! - Secret reserve: the principal draws a hidden reserve `r` (uniform on the
//!   value support with probability ε, else from `G`), the agent bids `b`, and
//!   the object sells at `r` iff `b ≥ r`.
//! - Bid-derived price: the agent bids `b` and buys with probability `G(b)` at
//!   price `b − Ĝ(b)/G(b)`.
//! - Posted price: the agent says whether it would buy at `t`; a yes sells with
//!   probability `p`. Unsold objects go through the secret reserve with `G_0(δ)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{self, AgentConfig, PostedPriceDecision, Strategy};
use crate::error::{ensure, Error, Result};
use crate::prior::Prior;
use crate::reserve::{NeverSellPlacement, ReserveCdf, ReservePoint};
use crate::value_model::ValueModel;

/// Bid grid resolution for the bid-derived mechanism, as a fraction of the
/// agent's value support, when none is configured.
pub const DEFAULT_BID_GRID_POINTS: f64 = 256.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MechanismKind {
    SecretReserve {
        epsilon: f64,
        g: ReserveCdf,
    },
    BidDerivedPrice {
        g: ReserveCdf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bid_grid_step: Option<f64>,
    },
    PostedPrice {
        t: f64,
        p: f64,
        /// Mass of `G_0` in the fallback secret reserve.
        delta: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanismSpec {
    pub kind: MechanismKind,
    /// Sell the fraction `p_{c'}` outright instead of the whole object with
    /// probability `p_{c'}`. Secret reserve with a `G_{c'}`-shaped cdf only.
    #[serde(default)]
    pub fractional_sale: bool,
    /// Paid to the agent for delivering the report whenever it participates.
    #[serde(default)]
    pub delivery_cost_reimbursed: f64,
}

impl MechanismSpec {
    pub fn new(kind: MechanismKind) -> Self {
        MechanismSpec { kind, fractional_sale: false, delivery_cost_reimbursed: 0.0 }
    }

    pub fn secret_reserve(epsilon: f64, g: ReserveCdf) -> Self {
        Self::new(MechanismKind::SecretReserve { epsilon, g })
    }

    pub fn bid_derived(g: ReserveCdf) -> Self {
        Self::new(MechanismKind::BidDerivedPrice { g, bid_grid_step: None })
    }

    pub fn posted_price(t: f64, p: f64, delta: f64) -> Self {
        Self::new(MechanismKind::PostedPrice { t, p, delta })
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, x: f64| {
            if (0.0..=1.0).contains(&x) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {x} is not a probability")))
            }
        };
        match &self.kind {
            MechanismKind::SecretReserve { epsilon, .. } => prob("epsilon", *epsilon)?,
            MechanismKind::BidDerivedPrice { bid_grid_step, .. } => {
                if let Some(step) = bid_grid_step {
                    if !(step.is_finite() && *step > 0.0) {
                        return Err(Error::Config(format!("bid grid step {step} must be positive")));
                    }
                }
            }
            MechanismKind::PostedPrice { t, p, delta } => {
                prob("p", *p)?;
                prob("delta", *delta)?;
                if !(t.is_finite() && *t >= 0.0) {
                    return Err(Error::Config(format!("posted price {t} must be non-negative")));
                }
            }
        }
        if self.fractional_sale && !matches!(self.kind, MechanismKind::SecretReserve { .. }) {
            return Err(Error::Config("fractional sale applies to the secret-reserve mechanism only".into()));
        }
        if !(self.delivery_cost_reimbursed.is_finite() && self.delivery_cost_reimbursed >= 0.0) {
            return Err(Error::Config("delivery reimbursement must be non-negative".into()));
        }
        Ok(())
    }

    /// The reserve cdf the agent's incentives are computed from; for the posted
    /// price this is `p · 1{r ≥ t}`.
    pub fn effective_cdf(&self) -> Result<ReserveCdf> {
        match &self.kind {
            MechanismKind::SecretReserve { g, .. } | MechanismKind::BidDerivedPrice { g, .. } => Ok(g.clone()),
            MechanismKind::PostedPrice { t, p, .. } => ReserveCdf::step(*t, *p),
        }
    }
}

/// Settlement record of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub value_p: f64,
    pub value_a: f64,
    pub computed: bool,
    pub bid: Option<f64>,
    pub reserve: Option<f64>,
    /// Fraction of the object transferred.
    pub sold_fraction: f64,
    /// Total payment from agent to principal.
    pub price_paid: f64,
    pub agent_utility: f64,
    pub principal_loss: f64,
    pub info_elicited: bool,
    /// The principal was committed to sell to a high enough bid: a finite
    /// reserve was drawn, or a sale lottery came up.
    pub offered: bool,
}

impl Outcome {
    /// Agent's gross surplus from the trade, before computation and delivery costs.
    pub fn trade_surplus(&self) -> f64 {
        self.value_a * self.sold_fraction - self.price_paid
    }

    /// Principal's loss from the trade alone.
    pub fn trade_loss(&self) -> f64 {
        self.value_p * self.sold_fraction - self.price_paid
    }
}

/// Everything about a run except the randomness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settlement {
    pub values: (f64, f64),
    pub computed: bool,
    pub bid: Option<f64>,
    pub reserve: Option<f64>,
    pub sold_fraction: f64,
    pub price_paid: f64,
    pub info_elicited: bool,
    pub offered: bool,
}

impl Settlement {
    /// Attaches costs and reimbursements.
    pub fn into_outcome(self, cfg: &AgentConfig, reimbursed: f64) -> Outcome {
        let (value_p, value_a) = self.values;
        let computation = if self.computed { cfg.cost } else { 0.0 };
        let surplus = value_a * self.sold_fraction - self.price_paid;
        let trade_loss = value_p * self.sold_fraction - self.price_paid;
        Outcome {
            value_p,
            value_a,
            computed: self.computed,
            bid: self.bid,
            reserve: self.reserve,
            sold_fraction: self.sold_fraction,
            price_paid: self.price_paid,
            agent_utility: surplus - computation - cfg.delivery_cost + reimbursed,
            principal_loss: trade_loss + reimbursed,
            info_elicited: self.info_elicited,
            offered: self.offered,
        }
    }
}

/// Secret-reserve settlement for a given bid and reserve: sells at `r` iff
/// `b ≥ r`, transferring `fraction` of the object (at `r` per unit).
pub fn settle_secret_reserve(
    values: (f64, f64),
    computed: bool,
    bid: f64,
    reserve: ReservePoint,
    fraction: f64,
) -> Settlement {
    let sold = reserve.cleared_by(bid);
    let r = reserve.finite();
    Settlement {
        values,
        computed,
        bid: Some(bid),
        reserve: r,
        sold_fraction: if sold { fraction } else { 0.0 },
        price_paid: match (sold, r) {
            (true, Some(r)) => r * fraction,
            _ => 0.0,
        },
        info_elicited: computed,
        offered: r.is_some(),
    }
}

/// Bid-derived settlement given the lottery draw `u ∈ [0, 1)`.
pub fn settle_bid_derived(values: (f64, f64), computed: bool, g: &ReserveCdf, bid: f64, u: f64) -> Settlement {
    let sale_prob = g.eval(bid);
    let sold = sale_prob > 0.0 && u < sale_prob;
    Settlement {
        values,
        computed,
        bid: Some(bid),
        reserve: None,
        sold_fraction: if sold { 1.0 } else { 0.0 },
        price_paid: if sold { bid - g.integral(bid) / sale_prob } else { 0.0 },
        info_elicited: computed,
        offered: u < g.finite_mass(),
    }
}

#[derive(Debug, Clone)]
enum Plan {
    SecretReserve {
        epsilon: f64,
        g: ReserveCdf,
        computed: bool,
        /// `(p_{c'}, G*)` when selling fractions.
        fractional: Option<(f64, ReserveCdf)>,
    },
    BidDerived {
        g: ReserveCdf,
        computed: bool,
        grid_step: f64,
        heuristic_bid: f64,
    },
    PostedPrice {
        t: f64,
        p: f64,
        decision: PostedPriceDecision,
        fallback: ReserveCdf,
    },
}

/// A mechanism prepared for repeated runs: the agent's strategy is decided
/// once, since it depends only on the mechanism, the prior and the costs.
#[derive(Debug, Clone)]
pub struct Scenario {
    spec: MechanismSpec,
    model: ValueModel,
    cfg: AgentConfig,
    agent_prior: Prior,
    support: (f64, f64),
    plan: Plan,
}

impl Scenario {
    pub fn new(spec: &MechanismSpec, model: &ValueModel, cfg: &AgentConfig) -> Result<Self> {
        spec.validate()?;
        model.validate().map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        let agent_prior = model.agent_prior()?;
        let support = agent_prior.support();
        let plan = match &spec.kind {
            MechanismKind::SecretReserve { epsilon, g } => {
                let computed = agent::choose_strategy(g, &agent_prior, cfg).kind == Strategy::Cooperative;
                let fractional = if spec.fractional_sale { Some(fractional_parts(g)?) } else { None };
                Plan::SecretReserve { epsilon: *epsilon, g: g.clone(), computed, fractional }
            }
            MechanismKind::BidDerivedPrice { g, bid_grid_step } => {
                let computed = agent::choose_strategy(g, &agent_prior, cfg).kind == Strategy::Cooperative;
                let width = (support.1 - support.0).max(f64::MIN_POSITIVE);
                let grid_step = bid_grid_step.unwrap_or(width / DEFAULT_BID_GRID_POINTS);
                let heuristic_bid = agent::best_bid_derived_price(g, None, &agent_prior, grid_step)?;
                Plan::BidDerived { g: g.clone(), computed, grid_step, heuristic_bid }
            }
            MechanismKind::PostedPrice { t, p, delta } => Plan::PostedPrice {
                t: *t,
                p: *p,
                decision: agent::posted_price_decision(*t, *p, &agent_prior, cfg),
                fallback: ReserveCdf::g0(support, *delta, NeverSellPlacement::Sentinel)?,
            },
        };
        Ok(Scenario { spec: spec.clone(), model: model.clone(), cfg: *cfg, agent_prior, support, plan })
    }

    pub fn spec(&self) -> &MechanismSpec {
        &self.spec
    }

    pub fn model(&self) -> &ValueModel {
        &self.model
    }

    pub fn agent_config(&self) -> &AgentConfig {
        &self.cfg
    }

    pub fn agent_prior(&self) -> &Prior {
        &self.agent_prior
    }

    /// Whether the agent computes its value.
    pub fn computes(&self) -> bool {
        match &self.plan {
            Plan::SecretReserve { computed, .. } | Plan::BidDerived { computed, .. } => *computed,
            Plan::PostedPrice { decision, .. } => decision.compute,
        }
    }

    /// One run. Draw order: values, then the mechanism's own lotteries.
    pub fn run<R: Rng + ?Sized>(&self, rng: &mut R) -> Outcome {
        let values = self.model.sample_pair(rng);
        let v_a = values.1;
        let reimbursed = self.spec.delivery_cost_reimbursed;
        let settlement = match &self.plan {
            Plan::SecretReserve { epsilon, g, computed, fractional } => {
                let bid = agent::best_bid_secret_reserve(computed.then_some(v_a), &self.agent_prior);
                match fractional {
                    None => {
                        let reserve = g.sample_reserve(*epsilon, self.support, rng);
                        settle_secret_reserve(values, *computed, bid, reserve, 1.0)
                    }
                    Some((p, step)) => {
                        // The ε-uniform draw sells the whole object; the step sells fraction p.
                        let coin: f64 = rng.random();
                        let reserve = step.sample_reserve(0.0, self.support, rng);
                        if coin < *epsilon {
                            let u: f64 = rng.random();
                            let r = self.support.0 + (self.support.1 - self.support.0) * u;
                            settle_secret_reserve(values, *computed, bid, ReservePoint::Finite(r), 1.0)
                        } else {
                            let _: f64 = rng.random();
                            settle_secret_reserve(values, *computed, bid, reserve, *p)
                        }
                    }
                }
            }
            Plan::BidDerived { g, computed, grid_step, heuristic_bid } => {
                let bid = if *computed {
                    agent::best_bid_derived_price(g, Some(v_a), &self.agent_prior, *grid_step)
                        .expect("grid step validated")
                } else {
                    *heuristic_bid
                };
                let u: f64 = rng.random();
                settle_bid_derived(values, *computed, g, bid, u)
            }
            Plan::PostedPrice { t, p, decision, fallback } => {
                let lottery: f64 = rng.random();
                if decision.accept.accepts(v_a) && lottery < *p {
                    Settlement {
                        values,
                        computed: decision.compute,
                        bid: None,
                        reserve: None,
                        sold_fraction: 1.0,
                        price_paid: *t,
                        info_elicited: false,
                        offered: true,
                    }
                } else {
                    // An agent who computed already knows v_a; reporting it costs nothing more.
                    let bid = agent::best_bid_secret_reserve(decision.compute.then_some(v_a), &self.agent_prior);
                    let reserve = fallback.sample_reserve(self.cfg.epsilon, self.support, rng);
                    let mut s = settle_secret_reserve(values, decision.compute, bid, reserve, 1.0);
                    s.offered |= lottery < *p;
                    s
                }
            }
        };
        settlement.into_outcome(&self.cfg, reimbursed)
    }
}

/// Splits a `G_{c'}`-shaped cdf (one finite atom, the rest never selling) into
/// its sale probability and the unit step.
fn fractional_parts(g: &ReserveCdf) -> Result<(f64, ReserveCdf)> {
    let finite: Vec<_> = g.atoms().iter().filter(|a| a.at != ReservePoint::NeverSell).collect();
    ensure(g.pieces().is_empty() && finite.len() == 1, || {
        "fractional sale needs a cdf with one finite atom plus never-sell mass".into()
    })
    .map_err(|e| Error::Config(e.to_string()))?;
    let step = finite[0].at.finite().expect("finite atom");
    Ok((finite[0].mass, ReserveCdf::point(step)?))
}

fn expect_kind(spec: &MechanismSpec, want: &str, ok: bool) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("expected a {want} mechanism, got {:?}", spec.kind)))
    }
}

pub fn run_secret_reserve<R: Rng + ?Sized>(
    spec: &MechanismSpec,
    model: &ValueModel,
    cfg: &AgentConfig,
    rng: &mut R,
) -> Result<Outcome> {
    expect_kind(spec, "secret-reserve", matches!(spec.kind, MechanismKind::SecretReserve { .. }))?;
    Ok(Scenario::new(spec, model, cfg)?.run(rng))
}

pub fn run_bid_derived<R: Rng + ?Sized>(
    spec: &MechanismSpec,
    model: &ValueModel,
    cfg: &AgentConfig,
    rng: &mut R,
) -> Result<Outcome> {
    expect_kind(spec, "bid-derived-price", matches!(spec.kind, MechanismKind::BidDerivedPrice { .. }))?;
    Ok(Scenario::new(spec, model, cfg)?.run(rng))
}

pub fn run_posted_price<R: Rng + ?Sized>(
    spec: &MechanismSpec,
    model: &ValueModel,
    cfg: &AgentConfig,
    rng: &mut R,
) -> Result<Outcome> {
    expect_kind(spec, "posted-price", matches!(spec.kind, MechanismKind::PostedPrice { .. }))?;
    Ok(Scenario::new(spec, model, cfg)?.run(rng))
}
