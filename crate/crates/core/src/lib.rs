//! Truthful mechanisms for buying a costly, unverifiable object valuation from a
//! single agent who also values the object.
//!
//! The principal pays for information by occasionally selling the object to the
//! agent. Everything here revolves around the reserve distribution `G` the
//! principal draws prices from ([`ReserveCdf`]), its running integral `Ĝ`, and the
//! agent's resulting incentive `U_net(G) = E[Ĝ(v)] − Ĝ(E[v])` to actually compute
//! the value instead of bidding the prior mean.
//!
//! Modules:
//! - [`prior`]: value distributions and their partial moments.
//! - [`reserve`]: reserve-price cdfs (atoms plus uniform pieces) and constructions.
//! - [`value_model`]: common, scaled, and jointly sampled agent/principal values.
//! - [`agent`]: expected utilities and best responses.
//! - [`mechanism`]: settlement of the secret-reserve, bid-derived-price and
//!   posted-price mechanisms.
//! - [`analysis`]: truthfulness tests, loss minimisation, lattice searches over
//!   cdf space, and the unknown-cost offer.
//! - [`montecarlo`]: seeded batch simulation and comparison with the analytics.

pub mod agent;
pub mod analysis;
mod error;
mod expectation;
pub mod mechanism;
pub mod montecarlo;
pub mod prior;
pub mod reserve;
pub mod value_model;

pub use agent::{AgentConfig, Strategy, StrategyChoice};
pub use analysis::{CostPrior, Offer, UtilityReport};
pub use error::{Error, Result};
pub use mechanism::{MechanismKind, MechanismSpec, Outcome};
pub use montecarlo::BatchResult;
pub use prior::Prior;
pub use reserve::{NeverSellPlacement, ReserveCdf, ReservePoint};
pub use value_model::ValueModel;
