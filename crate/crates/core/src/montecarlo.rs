//! Seeded batch simulation of the mechanisms and comparison with the analytics.
//!
//! Trial `i` of a batch with seed `s` draws from ChaCha8 seeded by `s` on
//! stream `i`, so each trial's randomness is fixed regardless of how trials are
//! split across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::analysis::{UtilityReport, Welford};
use crate::error::{Error, Result};
use crate::mechanism::{MechanismSpec, Outcome, Scenario};
use crate::value_model::ValueModel;

/// Half-width of the acceptance band, in standard errors.
pub const BAND_SE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_error: f64,
}

impl From<&Welford> for MeanEstimate {
    fn from(w: &Welford) -> Self {
        MeanEstimate { mean: w.mean, std_error: w.std_error() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub n_trials: u64,
    pub seed: u64,
    pub workers: usize,
    pub agent_utility: MeanEstimate,
    pub principal_loss: MeanEstimate,
    pub sale_rate: MeanEstimate,
    pub info_elicited_rate: MeanEstimate,
    pub offer_rate: MeanEstimate,
}

#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    agent_utility: Welford,
    principal_loss: Welford,
    sale_rate: Welford,
    info: Welford,
    offer: Welford,
}

impl Accumulator {
    fn push(&mut self, o: &Outcome) {
        self.agent_utility.push(o.agent_utility);
        self.principal_loss.push(o.principal_loss);
        self.sale_rate.push(o.sold_fraction);
        self.info.push(if o.info_elicited { 1.0 } else { 0.0 });
        self.offer.push(if o.offered { 1.0 } else { 0.0 });
    }

    fn merge(&mut self, other: &Accumulator) {
        self.agent_utility.merge(&other.agent_utility);
        self.principal_loss.merge(&other.principal_loss);
        self.sale_rate.merge(&other.sale_rate);
        self.info.merge(&other.info);
        self.offer.merge(&other.offer);
    }
}

/// Generator for trial `index` of a batch.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn run_range(scenario: &Scenario, seed: u64, range: std::ops::Range<u64>) -> Accumulator {
    let base = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Accumulator::default();
    for i in range {
        let mut rng = base.clone();
        rng.set_stream(i);
        acc.push(&scenario.run(&mut rng));
    }
    acc
}

/// Runs `n_trials` independent trials on `workers` threads. Chunks are
/// contiguous and merged in order, so `workers = 1` is bit-reproducible.
pub fn run_batch(
    spec: &MechanismSpec,
    model: &ValueModel,
    cfg: &AgentConfig,
    n_trials: u64,
    seed: u64,
    workers: usize,
) -> Result<BatchResult> {
    if n_trials == 0 {
        return Err(Error::Config("n_trials must be at least 1".into()));
    }
    if workers == 0 {
        return Err(Error::Config("workers must be at least 1".into()));
    }
    let scenario = Scenario::new(spec, model, cfg)?;
    let workers_used = workers.min(n_trials as usize);
    let chunk = n_trials.div_ceil(workers_used as u64);
    let ranges: Vec<_> = (0..workers_used as u64)
        .map(|w| (w * chunk).min(n_trials)..((w + 1) * chunk).min(n_trials))
        .collect();

    let parts: Vec<Accumulator> = if workers_used == 1 {
        vec![run_range(&scenario, seed, 0..n_trials)]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> =
                ranges.into_iter().map(|r| s.spawn(|| run_range(&scenario, seed, r))).collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        })
    };
    let mut total = Accumulator::default();
    for p in &parts {
        total.merge(p);
    }
    Ok(BatchResult {
        n_trials,
        seed,
        workers,
        agent_utility: (&total.agent_utility).into(),
        principal_loss: (&total.principal_loss).into(),
        sale_rate: (&total.sale_rate).into(),
        info_elicited_rate: (&total.info).into(),
        offer_rate: (&total.offer).into(),
    })
}

/// Visits each trial's outcome in order, using the same per-trial streams as
/// [`run_batch`].
pub fn for_each_outcome(
    spec: &MechanismSpec,
    model: &ValueModel,
    cfg: &AgentConfig,
    n_trials: u64,
    seed: u64,
    mut f: impl FnMut(u64, &Outcome) -> Result<()>,
) -> Result<()> {
    let scenario = Scenario::new(spec, model, cfg)?;
    let base = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n_trials {
        let mut rng = base.clone();
        rng.set_stream(i);
        f(i, &scenario.run(&mut rng))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldCheck {
    pub field: String,
    pub simulated: f64,
    pub std_error: f64,
    pub analytic: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub fields: Vec<FieldCheck>,
    pub passed: bool,
}

/// Each simulated mean must sit within `3·SE` of the analytic value, widened
/// by the report's ε/δ budget and a `10⁻⁹` relative slack.
pub fn compare_to_analytic(batch: &BatchResult, report: &UtilityReport) -> Comparison {
    compare_with_band(batch, report, BAND_SE)
}

/// [`compare_to_analytic`] with `band` standard errors instead of three.
pub fn compare_with_band(batch: &BatchResult, report: &UtilityReport, band: f64) -> Comparison {
    let errs = &report.analytic_std_error;
    let rows = [
        ("agent_utility", batch.agent_utility, report.expected_agent_utility, errs.agent_utility, report.value_budget),
        ("principal_loss", batch.principal_loss, report.principal_loss, errs.principal_loss, report.value_budget),
        ("sale_rate", batch.sale_rate, report.expected_sale_rate, errs.sale_rate, report.rate_budget),
        ("info_elicited_rate", batch.info_elicited_rate, report.expected_info_rate, 0.0, 0.0),
        ("offer_rate", batch.offer_rate, report.expected_offer_rate, 0.0, report.rate_budget),
    ];
    let fields: Vec<FieldCheck> = rows
        .into_iter()
        .map(|(field, sim, analytic, analytic_se, budget)| {
            let se = sim.std_error.hypot(analytic_se);
            let tolerance = band * se + budget + 1e-9 * analytic.abs().max(1.0);
            FieldCheck {
                field: field.to_string(),
                simulated: sim.mean,
                std_error: sim.std_error,
                analytic,
                tolerance,
                passed: (sim.mean - analytic).abs() <= tolerance,
            }
        })
        .collect();
    let passed = fields.iter().all(|f| f.passed);
    Comparison { fields, passed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::mechanism_report;
    use crate::prior::Prior;
    use crate::reserve::ReserveCdf;
    use rand::Rng;

    fn u20() -> ValueModel {
        ValueModel::common(Prior::uniform(0.0, 20.0).unwrap())
    }

    #[test]
    fn trial_streams_are_distinct_and_stable() {
        let a: f64 = trial_rng(5, 0).random();
        let b: f64 = trial_rng(5, 1).random();
        assert_ne!(a, b);
        assert_eq!(a, trial_rng(5, 0).random::<f64>());
    }

    #[test]
    fn never_sell_batch() {
        let spec = MechanismSpec::secret_reserve(0.0, ReserveCdf::never_sell());
        let b = run_batch(&spec, &u20(), &AgentConfig::new(0.0), 10_000, 1, 1).unwrap();
        assert_eq!(b.sale_rate.mean, 0.0);
        assert_eq!(b.sale_rate.std_error, 0.0);
    }

    #[test]
    fn workers_agree() {
        let spec = MechanismSpec::secret_reserve(0.01, ReserveCdf::uniform(0.0, 20.0).unwrap());
        let cfg = AgentConfig::new(0.1);
        let one = run_batch(&spec, &u20(), &cfg, 20_001, 9, 1).unwrap();
        let four = run_batch(&spec, &u20(), &cfg, 20_001, 9, 4).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(1.0);
        assert!(close(one.agent_utility.mean, four.agent_utility.mean));
        assert!(close(one.principal_loss.mean, four.principal_loss.mean));
        assert!(close(one.sale_rate.std_error, four.sale_rate.std_error));
    }

    #[test]
    fn rejects_empty_batches() {
        let spec = MechanismSpec::secret_reserve(0.0, ReserveCdf::never_sell());
        assert!(matches!(run_batch(&spec, &u20(), &AgentConfig::new(0.0), 0, 1, 1), Err(Error::Config(_))));
        assert!(matches!(run_batch(&spec, &u20(), &AgentConfig::new(0.0), 10, 1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn perturbed_analytics_fail() {
        let spec = MechanismSpec::secret_reserve(0.0, ReserveCdf::gstar(&Prior::uniform(0.0, 20.0).unwrap()));
        let cfg = AgentConfig::new(1.0);
        let batch = run_batch(&spec, &u20(), &cfg, 50_000, 2, 1).unwrap();
        let mut report = mechanism_report(&spec, &u20(), &cfg).unwrap();
        assert!(compare_to_analytic(&batch, &report).passed);
        report.principal_loss += 10.0 * batch.principal_loss.std_error;
        let cmp = compare_to_analytic(&batch, &report);
        assert!(!cmp.passed);
        assert_eq!(cmp.fields.iter().filter(|f| !f.passed).map(|f| f.field.as_str()).collect::<Vec<_>>(), ["principal_loss"]);
    }
}
