//! Expectations of `G` and `Ĝ` over a value prior, in closed form.
//!
//! Each atom at `a` contributes through the prior's partial moments at `a`; a
//! uniform piece on `[lo, hi]` contributes the average of those moments over the
//! piece, which telescopes into differences at the two endpoints.

use crate::prior::Prior;
use crate::reserve::{ReserveCdf, ReservePoint};

/// Pieces narrower than this (relative to their location) are averaged with
/// Simpson's rule instead of the endpoint difference, which cancels badly.
const NARROW: f64 = 1e-7;

fn is_narrow(lo: f64, hi: f64) -> bool {
    hi - lo <= NARROW * lo.abs().max(hi.abs()).max(1.0)
}

fn simpson(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    (f(lo) + 4.0 * f(0.5 * (lo + hi)) + f(hi)) / 6.0
}

/// `E[Ĝ(v)]`.
pub(crate) fn mean_integral(g: &ReserveCdf, prior: &Prior) -> f64 {
    let atoms: f64 = g
        .atoms()
        .iter()
        .filter_map(|a| match a.at {
            ReservePoint::Finite(x) => Some(a.mass * prior.expected_excess(x)),
            ReservePoint::NeverSell => None,
        })
        .sum();
    let pieces: f64 = g
        .pieces()
        .iter()
        .map(|p| {
            let avg = if is_narrow(p.lo, p.hi) {
                simpson(p.lo, p.hi, |s| prior.expected_excess(s))
            } else {
                (prior.integrated_excess(p.lo) - prior.integrated_excess(p.hi)) / (p.hi - p.lo)
            };
            p.mass * avg
        })
        .sum();
    atoms + pieces
}

/// `E[G(v)]`, the probability of a sale when the agent bids its value.
pub(crate) fn mean_eval(g: &ReserveCdf, prior: &Prior) -> f64 {
    let atoms: f64 = g
        .atoms()
        .iter()
        .filter_map(|a| a.at.finite().map(|x| a.mass * prior.prob_at_least(x)))
        .sum();
    let pieces: f64 = g
        .pieces()
        .iter()
        .map(|p| {
            let avg = if is_narrow(p.lo, p.hi) {
                prior.prob_at_least(0.5 * (p.lo + p.hi))
            } else {
                (prior.expected_excess(p.lo) - prior.expected_excess(p.hi)) / (p.hi - p.lo)
            };
            p.mass * avg
        })
        .sum();
    atoms + pieces
}

/// `E[v · G(v)]`.
pub(crate) fn mean_value_times_eval(g: &ReserveCdf, prior: &Prior) -> f64 {
    // E[v (v − t)+] = 2·∫_t^∞ E[(v − s)+] ds + t·E[(v − t)+]
    let moment = |t: f64| 2.0 * prior.integrated_excess(t) + t * prior.expected_excess(t);
    let atoms: f64 = g
        .atoms()
        .iter()
        .filter_map(|a| a.at.finite().map(|x| a.mass * prior.partial_mean_at_least(x)))
        .sum();
    let pieces: f64 = g
        .pieces()
        .iter()
        .map(|p| {
            let avg = if is_narrow(p.lo, p.hi) {
                prior.partial_mean_at_least(0.5 * (p.lo + p.hi))
            } else {
                (moment(p.lo) - moment(p.hi)) / (p.hi - p.lo)
            };
            p.mass * avg
        })
        .sum();
    atoms + pieces
}
