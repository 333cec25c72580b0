//! Experiment configuration: one JSON file, overridden field by field by flags.

use std::path::Path;

use elicit_core::analysis::DEFAULT_SEARCH_BUDGET;
use elicit_core::{AgentConfig, CostPrior, MechanismSpec, Prior, ValueModel};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_TRIALS: u64 = 1_000_000;
pub const DEFAULT_N_GRID: usize = 21;
pub const DEFAULT_N_LEVELS: usize = 2;
pub const DEFAULT_N_MC: usize = 100_000;
/// Step search resolution as a fraction of the value support.
pub const DEFAULT_STEP_POINTS: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n_trials: Option<u64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    /// Step width for the step-family search.
    pub grid_step: Option<f64>,
    pub n_grid: Option<usize>,
    pub n_levels: Option<usize>,
    /// Draws for sampled joint models.
    pub n_mc: Option<usize>,
    pub budget: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Shorthand for a common-value model.
    pub prior: Option<Prior>,
    pub model: Option<ValueModel>,
    pub agent: Option<AgentConfig>,
    pub mechanism: Option<MechanismSpec>,
    pub cost_prior: Option<CostPrior>,
    #[serde(default)]
    pub run: RunConfig,
    pub output: Option<Format>,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn model(&self) -> Result<ValueModel, CliError> {
        match (&self.prior, &self.model) {
            (Some(_), Some(_)) => Err(CliError::Config("give either `prior` or `model`, not both".into())),
            (Some(p), None) => Ok(ValueModel::common(p.clone())),
            (None, Some(m)) => {
                m.validate()?;
                Ok(m.clone())
            }
            (None, None) => Err(CliError::Config("no prior or value model given".into())),
        }
    }

    pub fn agent(&self) -> Result<AgentConfig, CliError> {
        let agent = self.agent.ok_or_else(|| CliError::Config("no agent record (cost c) given".into()))?;
        agent.validate()?;
        Ok(agent)
    }

    pub fn seed(&self) -> u64 {
        self.run.seed.unwrap_or(0)
    }

    pub fn n_mc(&self) -> usize {
        self.run.n_mc.unwrap_or(DEFAULT_N_MC)
    }

    pub fn budget(&self) -> u64 {
        self.run.budget.unwrap_or(DEFAULT_SEARCH_BUDGET)
    }

    pub fn format(&self) -> Format {
        self.output.unwrap_or_default()
    }
}

/// Parses `uniform:LO:HI`, `triangular:LO:HI`, `exponential:MEAN`,
/// `two-point:Q:HIGH`, `empirical:X,Y,...`, or an inline JSON prior record.
pub fn parse_prior(text: &str) -> Result<Prior, CliError> {
    if text.trim_start().starts_with('{') {
        return serde_json::from_str(text).map_err(|e| CliError::Config(format!("prior `{text}`: {e}")));
    }
    let (family, rest) = text.split_once(':').unwrap_or((text, ""));
    if family == "empirical" {
        let samples = rest.split(',').map(|x| number(x, text)).collect::<Result<Vec<_>, _>>()?;
        return Ok(Prior::empirical(samples)?);
    }
    let args = rest.split(':').filter(|s| !s.is_empty()).map(|x| number(x, text)).collect::<Result<Vec<_>, _>>()?;
    let prior = match (family, args.as_slice()) {
        ("uniform", &[lo, hi]) => Prior::uniform(lo, hi)?,
        ("triangular", &[lo, hi]) => Prior::triangular(lo, hi)?,
        ("exponential", &[mean]) => Prior::exponential(mean)?,
        ("two-point" | "two_point", &[q, high]) => Prior::two_point(q, high)?,
        _ => return Err(CliError::Config(format!("cannot parse prior `{text}`"))),
    };
    Ok(prior)
}

/// Parses `uniform:LO:HI`, `empirical:X,Y,...` or an inline JSON cost record.
pub fn parse_cost_prior(text: &str) -> Result<CostPrior, CliError> {
    if text.trim_start().starts_with('{') {
        return serde_json::from_str(text).map_err(|e| CliError::Config(format!("cost prior `{text}`: {e}")));
    }
    match text.split_once(':') {
        Some(("uniform", rest)) => {
            let args = rest.split(':').map(|x| number(x, text)).collect::<Result<Vec<_>, _>>()?;
            match args.as_slice() {
                &[lo, hi] => Ok(CostPrior::uniform(lo, hi)?),
                _ => Err(CliError::Config(format!("cannot parse cost prior `{text}`"))),
            }
        }
        Some(("empirical", rest)) => {
            let samples = rest.split(',').map(|x| number(x, text)).collect::<Result<Vec<_>, _>>()?;
            Ok(CostPrior::empirical(samples, None)?)
        }
        _ => Err(CliError::Config(format!("cannot parse cost prior `{text}`"))),
    }
}

fn number(s: &str, whole: &str) -> Result<f64, CliError> {
    s.trim().parse().map_err(|_| CliError::Config(format!("`{s}` in `{whole}` is not a number")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compact_priors() {
        assert_eq!(parse_prior("uniform:0:80000").unwrap(), Prior::uniform(0.0, 80000.0).unwrap());
        assert_eq!(parse_prior("two-point:0.3:10").unwrap(), Prior::two_point(0.3, 10.0).unwrap());
        assert_eq!(parse_prior("exponential:2").unwrap(), Prior::exponential(2.0).unwrap());
        assert_eq!(parse_prior("empirical:1,2,5").unwrap(), Prior::empirical(vec![1.0, 2.0, 5.0]).unwrap());
        assert_eq!(
            parse_prior(r#"{"family":"triangular","lo":0,"hi":12}"#).unwrap(),
            Prior::triangular(0.0, 12.0).unwrap()
        );
        assert!(parse_prior("uniform:0").is_err());
        assert!(parse_prior("beta:1:2").is_err());
        assert!(parse_prior("uniform:5:1").is_err());
    }

    #[test]
    fn compact_cost_priors() {
        assert_eq!(parse_cost_prior("uniform:0:10").unwrap(), CostPrior::uniform(0.0, 10.0).unwrap());
        assert!(parse_cost_prior("uniform:x:10").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<ExperimentConfig>(r#"{"prior":{"family":"uniform","lo":0,"hi":1},"seeds":3}"#);
        assert!(err.is_err());
        let err = serde_json::from_str::<ExperimentConfig>(r#"{"run":{"n_trial":3}}"#);
        assert!(err.is_err());
    }

    #[test]
    fn prior_and_model_are_exclusive() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"prior":{"family":"uniform","lo":0,"hi":1},
                "model":{"kind":"common","prior":{"family":"uniform","lo":0,"hi":1}}}"#,
        )
        .unwrap();
        assert!(matches!(cfg.model(), Err(CliError::Config(_))));
    }
}
