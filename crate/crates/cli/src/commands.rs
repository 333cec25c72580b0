use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use elicit_core::analysis::{
    exists_truthful, expected_loss_unknown_cost, mechanism_report, min_loss_search_general, optimal_offer,
    optimize_unet_over_lattice, optimize_unet_over_steps, principal_loss_general, LatticeMethod,
};
use elicit_core::montecarlo::{compare_to_analytic, for_each_outcome, run_batch};
use elicit_core::{agent, MechanismKind, MechanismSpec, NeverSellPlacement, ReserveCdf};
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, DEFAULT_N_GRID, DEFAULT_N_LEVELS, DEFAULT_STEP_POINTS, DEFAULT_TRIALS};
use crate::error::CliError;
use crate::output::envelope;
use crate::{MechanismChoice, Method, Target};

fn to_value(x: impl serde::Serialize) -> Value {
    serde_json::to_value(x).expect("report types serialise")
}

pub fn threshold(cfg: &ExperimentConfig, with_verdict: bool) -> Result<Value, CliError> {
    let prior = cfg.model()?.agent_prior()?;
    let threshold = prior.truthfulness_threshold();
    let mut body = json!({ "mean": prior.mean(), "threshold": threshold });
    if with_verdict {
        let c = cfg.agent()?.cost;
        body["c"] = c.into();
        body["truthful"] = exists_truthful(&prior, c).into();
    }
    Ok(envelope("threshold", cfg.seed(), body))
}

pub struct DesignRequest {
    pub target: Target,
    pub margin: Option<f64>,
    pub delta: Option<f64>,
    pub u: Option<f64>,
    pub at_support_max: bool,
}

pub fn design(cfg: &ExperimentConfig, req: &DesignRequest) -> Result<Value, CliError> {
    let model = cfg.model()?;
    let prior = model.agent_prior()?;
    let placement = if req.at_support_max { NeverSellPlacement::SupportMax } else { NeverSellPlacement::Sentinel };
    let mut extra = serde_json::Map::new();
    let (name, g) = match req.target {
        Target::Gstar => ("gstar", ReserveCdf::gstar(&prior)),
        Target::Gc => {
            let c = cfg.agent()?.cost;
            let g = match req.margin {
                Some(margin) => {
                    if !(margin.is_finite() && margin > 0.0) {
                        return Err(CliError::Config(format!("margin {margin} must be positive")));
                    }
                    ReserveCdf::gc_with(&prior, c + margin, placement)?
                }
                None => ReserveCdf::gc_with(&prior, c, placement)?,
            };
            ("gc", g)
        }
        Target::G0 => {
            let delta = req.delta.ok_or_else(|| CliError::Config("target g0 needs --delta".into()))?;
            ("g0", ReserveCdf::g0(prior.support(), delta, placement)?)
        }
        Target::Gzu => {
            let costs = cfg.cost_prior.as_ref().ok_or_else(|| CliError::Config("target gzu needs a cost prior".into()))?;
            let u = req.u.ok_or_else(|| CliError::Config("target gzu needs --u".into()))?;
            let offer = optimal_offer(costs, &prior, u)?;
            extra.insert("reserve_offer".into(), offer.reserve_offer.into());
            extra.insert("participation_prob".into(), offer.participation_prob.into());
            extra.insert("expected_loss".into(), expected_loss_unknown_cost(costs, &prior, u)?.into());
            ("gzu", offer.g)
        }
    };
    let loss = principal_loss_general(&g, &model, cfg.n_mc(), cfg.seed())?;
    let mut body = json!({
        "target": name,
        "threshold": prior.truthfulness_threshold(),
        "sale_prob": g.finite_mass(),
        "u_coop": agent::u_coop(&g, &prior),
        "u_heur": agent::u_heur(&g, &prior),
        "u_net": agent::u_net(&g, &prior),
        "principal_loss": loss.value + 0.0,
        "principal_loss_std_error": loss.std_error,
    });
    body.as_object_mut().expect("object").extend(extra);
    body["cdf"] = to_value(&g);
    Ok(envelope("design", cfg.seed(), body))
}

pub struct MechanismFlags {
    pub mechanism: Option<MechanismChoice>,
    pub cdf: Option<PathBuf>,
    pub epsilon: Option<f64>,
    pub t: Option<f64>,
    pub p: Option<f64>,
    pub delta: Option<f64>,
}

/// Reads a bare reserve cdf or any JSON object with a `cdf` field.
fn load_cdf(path: &Path) -> Result<ReserveCdf, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    if let Some(inner) = value.get_mut("cdf") {
        value = inner.take();
    }
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn unused(name: &str) -> CliError {
    CliError::Config(format!("--{name} does not apply to this mechanism"))
}

pub fn apply_mechanism_flags(cfg: &mut ExperimentConfig, flags: &MechanismFlags) -> Result<(), CliError> {
    let cdf = flags.cdf.as_deref().map(load_cdf).transpose()?;
    let kind = match flags.mechanism {
        Some(MechanismChoice::SecretReserve) => MechanismKind::SecretReserve {
            epsilon: flags.epsilon.unwrap_or(0.0),
            g: cdf.ok_or_else(|| CliError::Config("secret-reserve needs --cdf".into()))?,
        },
        Some(MechanismChoice::BidDerived) => {
            if flags.epsilon.is_some() {
                return Err(unused("epsilon"));
            }
            MechanismKind::BidDerivedPrice {
                g: cdf.ok_or_else(|| CliError::Config("bid-derived needs --cdf".into()))?,
                bid_grid_step: None,
            }
        }
        Some(MechanismChoice::PostedPrice) => {
            if cdf.is_some() {
                return Err(unused("cdf"));
            }
            MechanismKind::PostedPrice {
                t: flags.t.ok_or_else(|| CliError::Config("posted-price needs --t".into()))?,
                p: flags.p.ok_or_else(|| CliError::Config("posted-price needs --p".into()))?,
                delta: flags.delta.unwrap_or(0.0),
            }
        }
        None => {
            let Some(spec) = cfg.mechanism.as_mut() else {
                return Ok(());
            };
            match &mut spec.kind {
                MechanismKind::SecretReserve { epsilon, g } => {
                    *epsilon = flags.epsilon.unwrap_or(*epsilon);
                    *g = cdf.unwrap_or_else(|| g.clone());
                }
                MechanismKind::BidDerivedPrice { g, .. } => *g = cdf.unwrap_or_else(|| g.clone()),
                MechanismKind::PostedPrice { t, p, delta } => {
                    *t = flags.t.unwrap_or(*t);
                    *p = flags.p.unwrap_or(*p);
                    *delta = flags.delta.unwrap_or(*delta);
                }
            }
            return Ok(());
        }
    };
    match cfg.mechanism.as_mut() {
        Some(spec) => spec.kind = kind,
        None => cfg.mechanism = Some(MechanismSpec::new(kind)),
    }
    Ok(())
}

/// Runs the batch, optionally dumps every run, and compares with the analytics.
pub fn simulate(cfg: &ExperimentConfig, dump: Option<&Path>) -> Result<(Value, bool), CliError> {
    let model = cfg.model()?;
    let agent_cfg = cfg.agent()?;
    let spec = cfg.mechanism.as_ref().ok_or_else(|| CliError::Config("no mechanism given".into()))?;
    spec.validate()?;
    let n = cfg.run.n_trials.unwrap_or(DEFAULT_TRIALS);
    let workers = cfg.run.workers.unwrap_or(1);
    let seed = cfg.seed();
    let batch = run_batch(spec, &model, &agent_cfg, n, seed, workers)?;
    let report = mechanism_report(spec, &model, &agent_cfg)?;
    let comparison = compare_to_analytic(&batch, &report);
    if let Some(path) = dump {
        let mut out = BufWriter::new(File::create(path)?);
        for_each_outcome(spec, &model, &agent_cfg, n, seed, |i, o| {
            let mut line = to_value(o);
            line.as_object_mut().expect("object").insert("trial".into(), i.into());
            serde_json::to_writer(&mut out, &line).map_err(|e| elicit_core::Error::Config(e.to_string()))?;
            out.write_all(b"\n").map_err(|e| elicit_core::Error::Config(e.to_string()))
        })?;
        out.flush()?;
    }
    let passed = comparison.passed;
    let body = json!({
        "mechanism": to_value(spec),
        "batch": to_value(&batch),
        "analytic": to_value(&report),
        "comparison": to_value(&comparison),
        "passed": passed,
    });
    Ok((envelope("simulate", seed, body), passed))
}

pub fn optimize(cfg: &ExperimentConfig, method: Method, exhaustive: bool) -> Result<Value, CliError> {
    let model = cfg.model()?;
    let prior = model.agent_prior()?;
    let n_grid = cfg.run.n_grid.unwrap_or(DEFAULT_N_GRID);
    let n_levels = cfg.run.n_levels.unwrap_or(DEFAULT_N_LEVELS);
    let mut body = json!({ "threshold": prior.truthfulness_threshold() });
    match method {
        Method::Steps => {
            let (lo, hi) = prior.support();
            let step = cfg.run.grid_step.unwrap_or((hi - lo) / DEFAULT_STEP_POINTS);
            let best = optimize_unet_over_steps(&prior, step)?;
            body["method"] = "steps".into();
            body["grid_step"] = step.into();
            body["t_star"] = best.t_star.into();
            body["value"] = best.value.into();
        }
        Method::Lattice => {
            let search = if exhaustive { LatticeMethod::Exhaustive } else { LatticeMethod::DynamicProgram };
            let best = optimize_unet_over_lattice(&prior, n_grid, n_levels, search, cfg.budget())?;
            body["method"] = "lattice".into();
            body["search"] = if exhaustive { "exhaustive" } else { "dynamic_program" }.into();
            body["value"] = best.value.into();
            body["grid"] = to_value(&best.grid);
            body["levels"] = to_value(&best.levels);
            body["cdf"] = to_value(&best.cdf);
        }
        Method::Minloss => {
            let c = cfg.agent()?.cost;
            let best = min_loss_search_general(&model, c, n_grid, n_levels, cfg.n_mc(), cfg.seed())?;
            body["method"] = "minloss".into();
            body["c"] = c.into();
            body["loss"] = best.loss.into();
            body["u_net"] = best.u_net.into();
            body["certified"] = best.certified.into();
            body["cdf"] = to_value(&best.cdf);
        }
    }
    Ok(envelope("optimize", cfg.seed(), body))
}
