//! Brute-force searches over reserve cdfs.
//!
//! A lattice cdf puts levels `0 ≤ g_0 ≤ … ≤ g_{n−1} ≤ 1` on grid points
//! `x_0 < … < x_{n−1}`; the jump `g_i − g_{i−1}` is an atom at `x_i` and the
//! remaining `1 − g_{n−1}` never sells. Then
//! `Ĝ(v) = Σ g_i · len_i(v)` with `len_i(v) = (v − x_i)+ − (v − x_{i+1})+`,
//! so both `U_net` and the principal's loss are linear in the levels.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::prior::Prior;
use crate::reserve::{Atom, ReserveCdf, ReservePoint};
use crate::value_model::ValueModel;

/// Largest number of candidates (or DP cells) a lattice search may visit.
pub const DEFAULT_SEARCH_BUDGET: u64 = 10_000_000;

const BISECTION_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOptimum {
    pub t_star: f64,
    pub value: f64,
}

/// Best unit step `1{r ≥ t}` over a `t`-grid on the prior's support, scoring
/// `E[(v − t)+] − (E[v] − t)+`. The first maximiser wins.
pub fn optimize_unet_over_steps(prior: &Prior, grid_step: f64) -> Result<StepOptimum> {
    ensure(grid_step.is_finite() && grid_step > 0.0, || format!("grid step {grid_step} must be positive"))?;
    let (lo, hi) = prior.support();
    let m = prior.mean();
    let n = ((hi - lo) / grid_step).ceil() as usize;
    let mut best = StepOptimum { t_star: lo, value: f64::NEG_INFINITY };
    for i in 0..=n {
        let t = (lo + i as f64 * grid_step).min(hi);
        let value = prior.expected_excess(t) - (m - t).max(0.0);
        if value > best.value {
            best = StepOptimum { t_star: t, value };
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeMethod {
    /// Enumerate every monotone level sequence.
    Exhaustive,
    /// Exact dynamic program over (grid point, level).
    #[default]
    DynamicProgram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeOptimum {
    pub value: f64,
    pub grid: Vec<f64>,
    pub levels: Vec<f64>,
    pub cdf: ReserveCdf,
}

fn grid(support: (f64, f64), n: usize) -> Vec<f64> {
    let (lo, hi) = support;
    if n == 1 || hi <= lo {
        return vec![lo];
    }
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

fn len_at(grid: &[f64], i: usize, v: f64) -> f64 {
    let here = (v - grid[i]).max(0.0);
    match grid.get(i + 1) {
        Some(&next) => here - (v - next).max(0.0),
        None => here,
    }
}

/// `U_net` weight of each level.
fn unet_weights(prior: &Prior, grid: &[f64]) -> Vec<f64> {
    let m = prior.mean();
    (0..grid.len())
        .map(|i| {
            let upper = grid.get(i + 1).map_or(0.0, |&x| prior.expected_excess(x));
            prior.expected_excess(grid[i]) - upper - len_at(grid, i, m)
        })
        .collect()
}

/// Loss weight of each level: `E[len_i(v_a)] + E[(v_p − v_a)·1{x_i ≤ v_a < x_{i+1}}]`.
fn loss_weights(model: &ValueModel, prior: &Prior, grid: &[f64], n_mc: usize, seed: u64) -> Vec<f64> {
    let n = grid.len();
    let mut w: Vec<f64> = (0..n)
        .map(|i| prior.expected_excess(grid[i]) - grid.get(i + 1).map_or(0.0, |&x| prior.expected_excess(x)))
        .collect();
    match model.principal_ratio() {
        Some(ratio) => {
            for (i, wi) in w.iter_mut().enumerate() {
                let upper = grid.get(i + 1).map_or(0.0, |&x| prior.partial_mean_at_least(x));
                *wi += (ratio - 1.0) * (prior.partial_mean_at_least(grid[i]) - upper);
            }
        }
        None => {
            let pairs = model.pair_sample(n_mc, seed);
            let mut cross = vec![0.0; n];
            for &(vp, va) in &pairs {
                // Bin i holds x_i ≤ v_a < x_{i+1}; values below x_0 fall in no bin.
                let k = grid.partition_point(|&x| x <= va);
                if k > 0 {
                    cross[k - 1] += vp - va;
                }
            }
            for (wi, ci) in w.iter_mut().zip(cross) {
                *wi += ci / pairs.len() as f64;
            }
        }
    }
    w
}

fn lattice_cdf(grid: &[f64], levels: &[f64]) -> Result<ReserveCdf> {
    let mut atoms = Vec::with_capacity(grid.len() + 1);
    let mut prev = 0.0;
    for (&x, &g) in grid.iter().zip(levels) {
        atoms.push(Atom { at: ReservePoint::Finite(x), mass: g - prev });
        prev = g;
    }
    atoms.push(Atom { at: ReservePoint::NeverSell, mass: 1.0 - prev });
    ReserveCdf::new(atoms, vec![])
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Monotone sequence over `n_levels` levels maximising `Σ w_i g_i`; returns
/// level indices. Ties go to the lexicographically smallest sequence.
fn dp_max(w: &[f64], n_levels: usize) -> (f64, Vec<usize>) {
    let top = (n_levels - 1) as f64;
    let n = w.len();
    // best[l]: optimum of positions i+1.. given g_{i+1} ≥ l.
    let mut best = vec![0.0; n_levels];
    let mut choice = vec![vec![0usize; n_levels]; n];
    for i in (0..n).rev() {
        let mut next = vec![f64::NEG_INFINITY; n_levels];
        let mut run = (f64::NEG_INFINITY, n_levels - 1);
        for l in (0..n_levels).rev() {
            let here = w[i] * l as f64 / top + if i + 1 < n { best[l] } else { 0.0 };
            if here >= run.0 {
                run = (here, l);
            }
            next[l] = run.0;
            choice[i][l] = run.1;
        }
        best = next;
    }
    let mut levels = Vec::with_capacity(n);
    let mut l = 0;
    for row in &choice {
        l = row[l];
        levels.push(l);
    }
    (best[0], levels)
}

fn exhaustive_max(w: &[f64], n_levels: usize) -> (f64, Vec<usize>) {
    fn walk(w: &[f64], top: usize, i: usize, floor: usize, acc: f64, cur: &mut Vec<usize>, best: &mut (f64, Vec<usize>)) {
        if i == w.len() {
            if acc > best.0 {
                *best = (acc, cur.clone());
            }
            return;
        }
        for l in floor..=top {
            cur.push(l);
            walk(w, top, i + 1, l, acc + w[i] * l as f64 / top as f64, cur, best);
            cur.pop();
        }
    }
    let mut best = (f64::NEG_INFINITY, Vec::new());
    walk(w, n_levels - 1, 0, 0, 0.0, &mut Vec::with_capacity(w.len()), &mut best);
    best
}

/// Largest `U_net` over monotone cdfs with `n_grid` atoms on the prior's
/// support and levels in `{0, 1/(L−1), …, 1}`.
pub fn optimize_unet_over_lattice(
    prior: &Prior,
    n_grid: usize,
    n_levels: usize,
    method: LatticeMethod,
    budget: u64,
) -> Result<LatticeOptimum> {
    ensure(n_grid >= 1 && n_levels >= 2, || format!("need n_grid ≥ 1 and n_levels ≥ 2, got {n_grid}, {n_levels}"))?;
    let points = grid(prior.support(), n_grid);
    let candidates = match method {
        LatticeMethod::Exhaustive => binomial(points.len() + n_levels - 1, n_levels - 1),
        LatticeMethod::DynamicProgram => (points.len() * n_levels) as f64,
    };
    if candidates > budget as f64 {
        return Err(Error::Size { candidates, budget });
    }
    let w = unet_weights(prior, &points);
    let (value, idx) = match method {
        LatticeMethod::Exhaustive => exhaustive_max(&w, n_levels),
        LatticeMethod::DynamicProgram => dp_max(&w, n_levels),
    };
    let levels: Vec<f64> = idx.iter().map(|&l| l as f64 / (n_levels - 1) as f64).collect();
    let cdf = lattice_cdf(&points, &levels)?;
    Ok(LatticeOptimum { value, grid: points, levels, cdf })
}

/// Outcome of the constrained loss search. Best found on the lattice (plus one
/// mixing step), not a certified optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinLossResult {
    pub cdf: ReserveCdf,
    pub loss: f64,
    pub u_net: f64,
    pub certified: bool,
}

/// Minimises the principal's cooperative loss subject to `U_net ≥ c_target`.
///
/// Solves the Lagrangian `min Σ g_i (ℓ_i − λ w_i)` exactly by dynamic
/// programming, bisects on `λ`, and mixes the two bracketing lattice cdfs so
/// the constraint binds.
pub fn min_loss_search_general(
    model: &ValueModel,
    c_target: f64,
    n_grid: usize,
    n_levels: usize,
    n_mc: usize,
    seed: u64,
) -> Result<MinLossResult> {
    ensure(n_grid >= 1 && n_levels >= 2, || format!("need n_grid ≥ 1 and n_levels ≥ 2, got {n_grid}, {n_levels}"))?;
    ensure(c_target.is_finite() && c_target >= 0.0, || format!("target {c_target} must be non-negative"))?;
    model.validate()?;
    let cells = (n_grid * n_levels) as f64;
    if cells > DEFAULT_SEARCH_BUDGET as f64 {
        return Err(Error::Size { candidates: cells, budget: DEFAULT_SEARCH_BUDGET });
    }
    let prior = model.agent_prior()?;
    let points = grid(prior.support(), n_grid);
    let w = unet_weights(&prior, &points);
    let l = loss_weights(model, &prior, &points, n_mc, seed);
    let top = (n_levels - 1) as f64;
    let score = |idx: &[usize], coef: &[f64]| idx.iter().zip(coef).map(|(&k, c)| k as f64 / top * c).sum::<f64>();

    let (max_unet, _) = dp_max(&w, n_levels);
    if max_unet < c_target {
        return Err(Error::Infeasible(format!(
            "largest lattice U_net is {max_unet}, below the target {c_target}"
        )));
    }

    // Minimise Σ g (ℓ − λ w) by maximising its negation.
    let solve = |lambda: f64| {
        let coef: Vec<f64> = l.iter().zip(&w).map(|(li, wi)| lambda * wi - li).collect();
        let (_, idx) = dp_max(&coef, n_levels);
        let u = score(&idx, &w);
        (idx, u)
    };

    let finish = |parts: Vec<(Vec<usize>, f64)>| -> Result<MinLossResult> {
        let mut cdfs = Vec::with_capacity(parts.len());
        let (mut loss, mut u_net) = (0.0, 0.0);
        for (idx, weight) in &parts {
            let levels: Vec<f64> = idx.iter().map(|&k| k as f64 / top).collect();
            cdfs.push((lattice_cdf(&points, &levels)?, *weight));
            loss += weight * score(idx, &l);
            u_net += weight * score(idx, &w);
        }
        let cdf = if cdfs.len() == 1 { cdfs.pop().expect("one part").0 } else { ReserveCdf::convex_combine(&cdfs)? };
        Ok(MinLossResult { cdf, loss, u_net, certified: false })
    };

    let (idx0, u0) = solve(0.0);
    if u0 >= c_target {
        return finish(vec![(idx0, 1.0)]);
    }
    let mut lo = (0.0, idx0, u0);
    let mut lambda = 1.0;
    let mut hi = loop {
        let (idx, u) = solve(lambda);
        if u >= c_target {
            break (lambda, idx, u);
        }
        lo = (lambda, idx, u);
        lambda *= 2.0;
        if !lambda.is_finite() {
            return Err(Error::Infeasible("no multiplier reaches the target".into()));
        }
    };
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo.0 + hi.0);
        if mid <= lo.0 || mid >= hi.0 {
            break;
        }
        let (idx, u) = solve(mid);
        if u >= c_target {
            hi = (mid, idx, u);
        } else {
            lo = (mid, idx, u);
        }
    }
    let theta = ((c_target - lo.2) / (hi.2 - lo.2)).clamp(0.0, 1.0);
    if theta >= 1.0 {
        return finish(vec![(hi.1, 1.0)]);
    }
    finish(vec![(hi.1, theta), (lo.1, 1.0 - theta)])
}
