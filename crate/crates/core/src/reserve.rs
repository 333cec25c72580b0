//! Reserve-price distributions `G` and their running integrals `Ĝ`.
//!
//! A [`ReserveCdf`] is a finite mixture of point masses ("atoms") and uniform
//! pieces. That family is closed under every construction the mechanisms use:
//! steps, sale-probability scaling, convex combinations and the extreme-point
//! split. `Ĝ(v) = ∫_{-∞}^{v} G(r) dr` is piecewise quadratic and exact.

use std::cmp::Ordering;
use std::fmt;

use rand::Rng;
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{ensure, Error, Result};
use crate::prior::Prior;

/// Tolerance on the total mass of a cdf.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// A reserve price, or the sentinel above every value at which nothing sells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReservePoint {
    Finite(f64),
    NeverSell,
}

impl ReservePoint {
    pub fn finite(self) -> Option<f64> {
        match self {
            ReservePoint::Finite(r) => Some(r),
            ReservePoint::NeverSell => None,
        }
    }

    /// Whether a bid of `bid` clears this reserve (`b ≥ r`).
    pub fn cleared_by(self, bid: f64) -> bool {
        matches!(self, ReservePoint::Finite(r) if bid >= r)
    }

    fn cmp_total(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ReservePoint::Finite(a), ReservePoint::Finite(b)) => a.total_cmp(b),
            (ReservePoint::Finite(_), ReservePoint::NeverSell) => Ordering::Less,
            (ReservePoint::NeverSell, ReservePoint::Finite(_)) => Ordering::Greater,
            (ReservePoint::NeverSell, ReservePoint::NeverSell) => Ordering::Equal,
        }
    }
}

impl Serialize for ReservePoint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ReservePoint::Finite(r) => s.serialize_f64(*r),
            ReservePoint::NeverSell => s.serialize_str("never"),
        }
    }
}

impl<'de> Deserialize<'de> for ReservePoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct PointVisitor;

        impl Visitor<'_> for PointVisitor {
            type Value = ReservePoint;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a finite number or the string \"never\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<ReservePoint, E> {
                if v.is_finite() {
                    Ok(ReservePoint::Finite(v))
                } else {
                    Err(E::custom("reserve locations must be finite"))
                }
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<ReservePoint, E> {
                Ok(ReservePoint::Finite(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<ReservePoint, E> {
                Ok(ReservePoint::Finite(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<ReservePoint, E> {
                match v {
                    "never" => Ok(ReservePoint::NeverSell),
                    other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
                }
            }
        }

        d.deserialize_any(PointVisitor)
    }
}

/// Point mass of a reserve cdf. Serialised as `[location, mass]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(ReservePoint, f64)", into = "(ReservePoint, f64)")]
pub struct Atom {
    pub at: ReservePoint,
    pub mass: f64,
}

impl From<(ReservePoint, f64)> for Atom {
    fn from((at, mass): (ReservePoint, f64)) -> Self {
        Atom { at, mass }
    }
}

impl From<Atom> for (ReservePoint, f64) {
    fn from(a: Atom) -> Self {
        (a.at, a.mass)
    }
}

/// Mass spread uniformly over `[lo, hi]`. Serialised as `[lo, hi, mass]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64, f64)", into = "(f64, f64, f64)")]
pub struct Piece {
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
}

impl Piece {
    fn width(&self) -> f64 {
        self.hi - self.lo
    }

    fn fraction_below(&self, r: f64) -> f64 {
        ((r - self.lo) / self.width()).clamp(0.0, 1.0)
    }

    /// `∫_{-∞}^{v}` of this piece's (unit-mass) cdf.
    fn integral(&self, v: f64) -> f64 {
        if v <= self.lo {
            0.0
        } else if v >= self.hi {
            0.5 * self.width() + (v - self.hi)
        } else {
            (v - self.lo).powi(2) / (2.0 * self.width())
        }
    }
}

impl From<(f64, f64, f64)> for Piece {
    fn from((lo, hi, mass): (f64, f64, f64)) -> Self {
        Piece { lo, hi, mass }
    }
}

impl From<Piece> for (f64, f64, f64) {
    fn from(p: Piece) -> Self {
        (p.lo, p.hi, p.mass)
    }
}

/// Where the "never sell" mass of `G_{c'}`-style constructions goes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeverSellPlacement {
    /// Above every value; the sale never happens.
    #[default]
    Sentinel,
    /// Literally at `v_max`; sells, at zero surplus, only when `v = v_max`.
    SupportMax,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CdfRecord {
    #[serde(default)]
    atoms: Vec<Atom>,
    #[serde(default)]
    pieces: Vec<Piece>,
}

/// A reserve-price cdf: atoms plus uniform pieces with total mass one.
///
/// `eval` is right-continuous, so an atom at `r` counts in `G(r)`; together with
/// the `b ≥ r` sale rule, a bid equal to an atom's location wins it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CdfRecord")]
pub struct ReserveCdf {
    atoms: Vec<Atom>,
    pieces: Vec<Piece>,
}

impl TryFrom<CdfRecord> for ReserveCdf {
    type Error = Error;

    fn try_from(r: CdfRecord) -> Result<Self> {
        ReserveCdf::new(r.atoms, r.pieces)
    }
}

impl ReserveCdf {
    /// Validates and normalises: zero masses dropped, coincident atoms and
    /// identical pieces merged, everything sorted.
    pub fn new(atoms: Vec<Atom>, pieces: Vec<Piece>) -> Result<Self> {
        for a in &atoms {
            ensure(a.mass.is_finite() && a.mass >= 0.0, || format!("atom mass {} is invalid", a.mass))?;
            if let ReservePoint::Finite(r) = a.at {
                ensure(r.is_finite(), || "atom location must be finite".into())?;
            }
        }
        for p in &pieces {
            ensure(p.mass.is_finite() && p.mass >= 0.0, || format!("piece mass {} is invalid", p.mass))?;
            ensure(p.lo.is_finite() && p.hi.is_finite() && p.lo < p.hi, || {
                format!("piece [{}, {}] needs lo < hi", p.lo, p.hi)
            })?;
        }
        let total: f64 = atoms.iter().map(|a| a.mass).sum::<f64>() + pieces.iter().map(|p| p.mass).sum::<f64>();
        ensure((total - 1.0).abs() <= MASS_TOLERANCE, || format!("masses sum to {total}, not 1"))?;

        let mut atoms: Vec<Atom> = atoms.into_iter().filter(|a| a.mass > 0.0).collect();
        atoms.sort_by(|a, b| a.at.cmp_total(&b.at));
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(last) if last.at == a.at => last.mass += a.mass,
                _ => merged.push(a),
            }
        }

        let mut pieces: Vec<Piece> = pieces.into_iter().filter(|p| p.mass > 0.0).collect();
        pieces.sort_by(|a, b| a.lo.total_cmp(&b.lo).then(a.hi.total_cmp(&b.hi)));
        let mut merged_pieces: Vec<Piece> = Vec::with_capacity(pieces.len());
        for p in pieces {
            match merged_pieces.last_mut() {
                Some(last) if last.lo == p.lo && last.hi == p.hi => last.mass += p.mass,
                _ => merged_pieces.push(p),
            }
        }

        Ok(ReserveCdf { atoms: merged, pieces: merged_pieces })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn pieces(&self) -> &[Piece] {
        &self.pieces
    }

    /// All mass on a single finite reserve.
    pub fn point(r: f64) -> Result<Self> {
        Self::new(vec![Atom { at: ReservePoint::Finite(r), mass: 1.0 }], vec![])
    }

    /// All mass above every value.
    pub fn never_sell() -> Self {
        ReserveCdf { atoms: vec![Atom { at: ReservePoint::NeverSell, mass: 1.0 }], pieces: vec![] }
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![], vec![Piece { lo, hi, mass: 1.0 }])
    }

    /// `p · 1{r ≥ t}` with the remaining `1 − p` never selling.
    pub fn step(t: f64, p: f64) -> Result<Self> {
        ensure((0.0..=1.0).contains(&p), || format!("sale probability {p} outside [0, 1]"))?;
        Self::point(t)?.scale_by_sale_prob(p)
    }

    /// `G*`: a unit step at the prior mean.
    pub fn gstar(prior: &Prior) -> Self {
        ReserveCdf {
            atoms: vec![Atom { at: ReservePoint::Finite(prior.mean()), mass: 1.0 }],
            pieces: vec![],
        }
    }

    /// `G_{c'}`: the step at the mean with probability `c'/E[max(0, v − E[v])]`,
    /// never selling otherwise. Gives the agent net utility exactly `c'`.
    pub fn gc(prior: &Prior, c_target: f64) -> Result<Self> {
        Self::gc_with(prior, c_target, NeverSellPlacement::Sentinel)
    }

    pub fn gc_with(prior: &Prior, c_target: f64, placement: NeverSellPlacement) -> Result<Self> {
        ensure(c_target.is_finite() && c_target >= 0.0, || format!("target {c_target} must be non-negative"))?;
        let threshold = prior.truthfulness_threshold();
        if c_target > threshold {
            return Err(Error::ThresholdExceeded { requested: c_target, threshold });
        }
        let p = if c_target == 0.0 { 0.0 } else { (c_target / threshold).min(1.0) };
        let never = placement_point(placement, prior.support().1);
        Self::new(
            vec![
                Atom { at: ReservePoint::Finite(prior.mean()), mass: p },
                Atom { at: never, mass: 1.0 - p },
            ],
            vec![],
        )
    }

    /// `G_0`: mass `delta` at the bottom of the support, the rest never sells.
    pub fn g0(support: (f64, f64), delta: f64, placement: NeverSellPlacement) -> Result<Self> {
        ensure((0.0..=1.0).contains(&delta), || format!("delta {delta} outside [0, 1]"))?;
        Self::new(
            vec![
                Atom { at: ReservePoint::Finite(support.0), mass: delta },
                Atom { at: placement_point(placement, support.1), mass: 1.0 - delta },
            ],
            vec![],
        )
    }

    /// `G(r)`.
    pub fn eval(&self, r: f64) -> f64 {
        let atoms: f64 = self
            .atoms
            .iter()
            .filter(|a| matches!(a.at, ReservePoint::Finite(x) if x <= r))
            .map(|a| a.mass)
            .sum();
        let pieces: f64 = self.pieces.iter().map(|p| p.mass * p.fraction_below(r)).sum();
        (atoms + pieces).min(1.0)
    }

    /// `G(r⁻) = P(reserve < r)`.
    pub fn eval_left(&self, r: f64) -> f64 {
        let at_r: f64 = self
            .atoms
            .iter()
            .filter(|a| a.at == ReservePoint::Finite(r))
            .map(|a| a.mass)
            .sum();
        (self.eval(r) - at_r).max(0.0)
    }

    /// `Ĝ(v) = ∫_{-∞}^{v} G(r) dr`.
    pub fn integral(&self, v: f64) -> f64 {
        let atoms: f64 = self
            .atoms
            .iter()
            .filter_map(|a| a.at.finite().map(|x| a.mass * (v - x).max(0.0)))
            .sum();
        let pieces: f64 = self.pieces.iter().map(|p| p.mass * p.integral(v)).sum();
        atoms + pieces
    }

    /// Probability that the reserve is finite.
    pub fn finite_mass(&self) -> f64 {
        let atoms: f64 = self.atoms.iter().filter(|a| a.at != ReservePoint::NeverSell).map(|a| a.mass).sum();
        atoms + self.pieces.iter().map(|p| p.mass).sum::<f64>()
    }

    pub fn never_mass(&self) -> f64 {
        self.atoms.iter().filter(|a| a.at == ReservePoint::NeverSell).map(|a| a.mass).sum()
    }

    /// Smallest finite location carrying mass.
    pub fn lowest_location(&self) -> Option<f64> {
        let a = self.atoms.iter().filter_map(|a| a.at.finite());
        let p = self.pieces.iter().map(|p| p.lo);
        a.chain(p).min_by(f64::total_cmp)
    }

    /// `G_p`: the same cdf with each sale happening only with probability `p`.
    pub fn scale_by_sale_prob(&self, p: f64) -> Result<Self> {
        ensure((0.0..=1.0).contains(&p), || format!("sale probability {p} outside [0, 1]"))?;
        let mut atoms: Vec<Atom> = self.atoms.iter().map(|a| Atom { at: a.at, mass: a.mass * p }).collect();
        atoms.push(Atom { at: ReservePoint::NeverSell, mass: 1.0 - p });
        let pieces = self.pieces.iter().map(|q| Piece { mass: q.mass * p, ..*q }).collect();
        Self::new(atoms, pieces)
    }

    /// Mixture `Σ w_i G_i`.
    pub fn convex_combine(parts: &[(ReserveCdf, f64)]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Weight("no components".into()));
        }
        if parts.iter().any(|(_, w)| !w.is_finite() || *w < 0.0) {
            return Err(Error::Weight("weights must be finite and non-negative".into()));
        }
        let total: f64 = parts.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Weight(format!("weights sum to {total}, not 1")));
        }
        let mut atoms = Vec::new();
        let mut pieces = Vec::new();
        for (g, w) in parts {
            atoms.extend(g.atoms.iter().map(|a| Atom { at: a.at, mass: a.mass * w }));
            pieces.extend(g.pieces.iter().map(|p| Piece { mass: p.mass * w, ..*p }));
        }
        // Re-normalise away the (≤1e-9) weight slack so the result is exactly a cdf.
        let sum: f64 = atoms.iter().map(|a| a.mass).sum::<f64>() + pieces.iter().map(|p| p.mass).sum::<f64>();
        for a in &mut atoms {
            a.mass /= sum;
        }
        for p in &mut pieces {
            p.mass /= sum;
        }
        Self::new(atoms, pieces)
    }

    /// `(G_1, G_2)` with `G_1 = min(1, 2G)` and `G_2 = max(0, 2G − 1)`;
    /// `G` is their midpoint.
    pub fn extreme_split(&self) -> (ReserveCdf, ReserveCdf) {
        let mut lower = Splitter::default();
        let mut upper = Splitter::default();
        let mut cum = 0.0_f64;

        let mut breaks: Vec<f64> = self.atoms.iter().filter_map(|a| a.at.finite()).collect();
        for p in &self.pieces {
            breaks.push(p.lo);
            breaks.push(p.hi);
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();

        for (k, &x) in breaks.iter().enumerate() {
            let atom_mass: f64 = self
                .atoms
                .iter()
                .filter(|a| a.at == ReservePoint::Finite(x))
                .map(|a| a.mass)
                .sum();
            if atom_mass > 0.0 {
                let below = atom_mass.min((0.5 - cum).max(0.0));
                lower.atom(ReservePoint::Finite(x), 2.0 * below);
                upper.atom(ReservePoint::Finite(x), 2.0 * (atom_mass - below));
                cum += atom_mass;
            }
            let Some(&y) = breaks.get(k + 1) else { continue };
            let density: f64 = self
                .pieces
                .iter()
                .filter(|p| p.lo <= x && y <= p.hi)
                .map(|p| p.mass / p.width())
                .sum();
            let mass = density * (y - x);
            if mass <= 0.0 {
                continue;
            }
            if cum >= 0.5 {
                upper.piece(x, y, 2.0 * mass);
            } else if cum + mass <= 0.5 {
                lower.piece(x, y, 2.0 * mass);
            } else {
                let s = (x + (0.5 - cum) / density).clamp(x, y);
                lower.piece(x, s, 2.0 * (0.5 - cum));
                upper.piece(s, y, 2.0 * (cum + mass - 0.5));
            }
            cum += mass;
        }

        let never = self.never_mass();
        if never > 0.0 {
            let below = never.min((0.5 - cum).max(0.0));
            lower.atom(ReservePoint::NeverSell, 2.0 * below);
            upper.atom(ReservePoint::NeverSell, 2.0 * (never - below));
        }
        (lower.finish(), upper.finish())
    }

    /// One draw from `G`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ReservePoint {
        let u: f64 = rng.random();
        let w: f64 = rng.random();
        self.draw(u, w)
    }

    /// Component chosen by `u`, position within a piece by `w`.
    fn draw(&self, u: f64, w: f64) -> ReservePoint {
        let mut acc = 0.0;
        for a in &self.atoms {
            acc += a.mass;
            if u < acc {
                return a.at;
            }
        }
        for p in &self.pieces {
            acc += p.mass;
            if u < acc {
                return ReservePoint::Finite(p.lo + p.width() * w);
            }
        }
        // Rounding left `u` just above the accumulated mass.
        match self.pieces.last() {
            Some(p) => ReservePoint::Finite(p.lo + p.width() * w),
            None => self.atoms.last().map(|a| a.at).unwrap_or(ReservePoint::NeverSell),
        }
    }

    /// Secret-reserve draw: uniform on `support` with probability `epsilon`,
    /// otherwise from `G`. Always consumes three random words.
    pub fn sample_reserve<R: Rng + ?Sized>(
        &self,
        epsilon: f64,
        support: (f64, f64),
        rng: &mut R,
    ) -> ReservePoint {
        let coin: f64 = rng.random();
        let u: f64 = rng.random();
        let w: f64 = rng.random();
        if coin < epsilon {
            ReservePoint::Finite(support.0 + (support.1 - support.0) * u)
        } else {
            self.draw(u, w)
        }
    }
}

fn placement_point(placement: NeverSellPlacement, v_max: f64) -> ReservePoint {
    match placement {
        NeverSellPlacement::Sentinel => ReservePoint::NeverSell,
        NeverSellPlacement::SupportMax => ReservePoint::Finite(v_max),
    }
}

#[derive(Default)]
struct Splitter {
    atoms: Vec<Atom>,
    pieces: Vec<Piece>,
}

impl Splitter {
    fn atom(&mut self, at: ReservePoint, mass: f64) {
        if mass > 0.0 {
            self.atoms.push(Atom { at, mass });
        }
    }

    fn piece(&mut self, lo: f64, hi: f64, mass: f64) {
        if mass > 0.0 && lo < hi {
            self.pieces.push(Piece { lo, hi, mass });
        }
    }

    fn finish(self) -> ReserveCdf {
        let total: f64 = self.atoms.iter().map(|a| a.mass).sum::<f64>() + self.pieces.iter().map(|p| p.mass).sum::<f64>();
        let atoms = self.atoms.into_iter().map(|a| Atom { mass: a.mass / total, ..a }).collect();
        let pieces = self.pieces.into_iter().map(|p| Piece { mass: p.mass / total, ..p }).collect();
        ReserveCdf::new(atoms, pieces).expect("split halves carry unit mass")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fin(r: f64) -> ReservePoint {
        ReservePoint::Finite(r)
    }

    #[test]
    fn gstar_eval_and_integral() {
        let g = ReserveCdf::gstar(&Prior::uniform(0.0, 20.0).unwrap());
        assert_eq!(g.atoms(), &[Atom { at: fin(10.0), mass: 1.0 }]);
        assert_eq!(g.eval(9.9999), 0.0);
        assert_eq!(g.eval(10.0001), 1.0);
        // Right-continuous: the atom counts at its own location.
        assert_eq!(g.eval(10.0), 1.0);
        assert_eq!(g.eval_left(10.0), 0.0);
        assert_eq!(g.integral(15.0), 5.0);
        assert_eq!(g.integral(10.0), 0.0);
        assert_eq!(ReserveCdf::gstar(&Prior::two_point(0.5, 10.0).unwrap()).lowest_location(), Some(5.0));
        assert_eq!(ReserveCdf::gstar(&Prior::empirical(vec![2.0, 4.0]).unwrap()).lowest_location(), Some(3.0));
    }

    #[test]
    fn below_lowest_location_is_zero() {
        let g = ReserveCdf::new(
            vec![Atom { at: fin(4.0), mass: 0.5 }],
            vec![Piece { lo: 6.0, hi: 8.0, mass: 0.5 }],
        )
        .unwrap();
        assert_eq!(g.eval(3.99), 0.0);
        assert_eq!(g.integral(4.0), 0.0);
    }

    #[test]
    fn gc_car_example() {
        let prior = Prior::uniform(0.0, 80_000.0).unwrap();
        let g = ReserveCdf::gc(&prior, 200.0).unwrap();
        assert_eq!(g.atoms().len(), 2);
        assert_eq!(g.atoms()[0].at, fin(40_000.0));
        assert!((g.atoms()[0].mass - 0.02).abs() < 1e-15);
        assert_eq!(g.atoms()[1].at, ReservePoint::NeverSell);
        assert!((g.atoms()[1].mass - 0.98).abs() < 1e-15);
    }

    #[test]
    fn gc_small_target_and_boundary() {
        let prior = Prior::uniform(0.0, 20.0).unwrap();
        let g = ReserveCdf::gc(&prior, 0.1).unwrap();
        assert!((g.finite_mass() - 0.04).abs() < 1e-15);
        // Direct integration of the two-atom mixture: 0.04 · (20 − 10).
        assert!((g.integral(20.0) - 0.4).abs() < 1e-12);
        let at_threshold = ReserveCdf::gc(&prior, 2.5).unwrap();
        assert_eq!(at_threshold, ReserveCdf::gstar(&prior));
        assert!(matches!(ReserveCdf::gc(&prior, 2.6), Err(Error::ThresholdExceeded { .. })));
    }

    #[test]
    fn gc_at_support_max() {
        let prior = Prior::uniform(0.0, 20.0).unwrap();
        let g = ReserveCdf::gc_with(&prior, 0.5, NeverSellPlacement::SupportMax).unwrap();
        assert_eq!(g.never_mass(), 0.0);
        assert!((g.eval(19.9) - 0.2).abs() < 1e-15);
        assert_eq!(g.eval(20.0), 1.0);
    }

    #[test]
    fn g0_cases() {
        let s = (0.0, 20.0);
        let never = ReserveCdf::g0(s, 0.0, NeverSellPlacement::Sentinel).unwrap();
        assert_eq!(never, ReserveCdf::never_sell());
        let always = ReserveCdf::g0(s, 1.0, NeverSellPlacement::Sentinel).unwrap();
        assert_eq!(always, ReserveCdf::point(0.0).unwrap());
        let quarter = ReserveCdf::g0(s, 0.25, NeverSellPlacement::Sentinel).unwrap();
        for r in [0.0, 5.0, 13.0, 20.0] {
            assert_eq!(quarter.eval(r), 0.25);
        }
        assert!(ReserveCdf::g0(s, 1.2, NeverSellPlacement::Sentinel).is_err());
    }

    #[test]
    fn scaling() {
        let prior = Prior::uniform(0.0, 20.0).unwrap();
        let g = ReserveCdf::gstar(&prior);
        assert_eq!(g.scale_by_sale_prob(1.0).unwrap(), g);
        assert_eq!(g.scale_by_sale_prob(0.0).unwrap(), ReserveCdf::never_sell());
        let scaled = g.scale_by_sale_prob(0.02).unwrap();
        let gc = ReserveCdf::gc(&prior, 0.02 * prior.truthfulness_threshold()).unwrap();
        assert_eq!(scaled.atoms().len(), gc.atoms().len());
        for (a, b) in scaled.atoms().iter().zip(gc.atoms()) {
            assert_eq!(a.at, b.at);
            assert!((a.mass - b.mass).abs() < 1e-15);
        }
        assert!(g.scale_by_sale_prob(1.5).is_err());
    }

    #[test]
    fn combine_cases() {
        let g = ReserveCdf::uniform(0.0, 20.0).unwrap();
        assert_eq!(ReserveCdf::convex_combine(&[(g.clone(), 1.0)]).unwrap(), g);
        let mix = ReserveCdf::convex_combine(&[
            (ReserveCdf::point(5.0).unwrap(), 0.3),
            (ReserveCdf::point(15.0).unwrap(), 0.7),
        ])
        .unwrap();
        assert!((mix.eval(10.0) - 0.3).abs() < 1e-15);
        assert!(matches!(ReserveCdf::convex_combine(&[(g.clone(), 0.5)]), Err(Error::Weight(_))));
        assert!(matches!(ReserveCdf::convex_combine(&[(g.clone(), -1.0), (g, 2.0)]), Err(Error::Weight(_))));
        assert!(matches!(ReserveCdf::convex_combine(&[]), Err(Error::Weight(_))));
    }

    #[test]
    fn split_uniform_piece() {
        let g = ReserveCdf::uniform(0.0, 20.0).unwrap();
        let (g1, g2) = g.extreme_split();
        assert_eq!(g1, ReserveCdf::uniform(0.0, 10.0).unwrap());
        assert_eq!(g2, ReserveCdf::uniform(10.0, 20.0).unwrap());
        for i in 0..=200 {
            let r = -1.0 + 22.0 * i as f64 / 200.0;
            assert!((g1.eval(r) - (2.0 * g.eval(r)).min(1.0)).abs() < 1e-12);
            assert!((g2.eval(r) - (2.0 * g.eval(r) - 1.0).max(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn split_step_is_fixed_point() {
        let g = ReserveCdf::point(7.0).unwrap();
        let (g1, g2) = g.extreme_split();
        assert_eq!(g1, g);
        assert_eq!(g2, g);
    }

    #[test]
    fn split_midpoint_with_heavy_atoms() {
        let g = ReserveCdf::new(
            vec![Atom { at: fin(3.0), mass: 0.7 }, Atom { at: ReservePoint::NeverSell, mass: 0.1 }],
            vec![Piece { lo: 1.0, hi: 5.0, mass: 0.2 }],
        )
        .unwrap();
        let (g1, g2) = g.extreme_split();
        let mid = ReserveCdf::convex_combine(&[(g1.clone(), 0.5), (g2.clone(), 0.5)]).unwrap();
        for i in 0..1000 {
            let r = i as f64 * 0.007;
            assert!((mid.eval(r) - g.eval(r)).abs() < 1e-12);
            assert!((g1.eval(r) - (2.0 * g.eval(r)).min(1.0)).abs() < 1e-12);
            assert!((g2.eval(r) - (2.0 * g.eval(r) - 1.0).max(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_reserve_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = ReserveCdf::never_sell();
        for _ in 0..1000 {
            let r = g.sample_reserve(1.0, (3.0, 4.0), &mut rng).finite().unwrap();
            assert!((3.0..=4.0).contains(&r));
        }
        let bottom = ReserveCdf::g0((2.0, 9.0), 1.0, NeverSellPlacement::Sentinel).unwrap();
        for _ in 0..1000 {
            assert_eq!(bottom.sample_reserve(0.0, (2.0, 9.0), &mut rng), fin(2.0));
        }
    }

    #[test]
    fn sample_reserve_sale_fraction() {
        let prior = Prior::uniform(0.0, 20.0).unwrap();
        let g = ReserveCdf::gc(&prior, 0.05).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 1_000_000;
        let finite = (0..n).filter(|_| g.sample_reserve(0.0, (0.0, 20.0), &mut rng).finite().is_some()).count();
        let p = 0.02;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        let frac = finite as f64 / n as f64;
        assert!((frac - p).abs() < 3.0 * sigma, "{frac}");
    }

    #[test]
    fn json_round_trip() {
        let g = ReserveCdf::new(
            vec![Atom { at: fin(10.0), mass: 0.25 }, Atom { at: ReservePoint::NeverSell, mass: 0.5 }],
            vec![Piece { lo: 0.0, hi: 4.0, mass: 0.25 }],
        )
        .unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(s, r#"{"atoms":[[10.0,0.25],["never",0.5]],"pieces":[[0.0,4.0,0.25]]}"#);
        let back: ReserveCdf = serde_json::from_str(&s).unwrap();
        assert_eq!(back, g);
        let bad = r#"{"atoms":[[1,0.5]],"pieces":[]}"#;
        assert!(serde_json::from_str::<ReserveCdf>(bad).is_err());
        let bad = r#"{"atoms":[["sometimes",1.0]]}"#;
        assert!(serde_json::from_str::<ReserveCdf>(bad).is_err());
    }
}
