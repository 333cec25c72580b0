//! How the agent's value `v_a` relates to the principal's value `v_p`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::prior::Prior;

/// Draws used to estimate the agent's marginal under a joint model.
pub const JOINT_MARGINAL_DRAWS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ValueModel {
    /// `v_a = v_p`.
    Common { prior: Prior },
    /// `v_a = a · v_p` with `v_p` drawn from `prior`.
    Scaled { prior: Prior, a: f64 },
    /// Correlated values known only through a sampler.
    Joint { sampler: JointSampler },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum JointSampler {
    /// Uniform draw from a fixed list of `(v_p, v_a)` pairs.
    Pairs { pairs: Vec<(f64, f64)> },
    /// `v_p ~ prior`, `v_a = scale · v_p + noise` with independent non-negative noise.
    Noisy { prior: Prior, scale: f64, noise: Prior },
}

impl JointSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match self {
            JointSampler::Pairs { pairs } => {
                let u: f64 = rng.random();
                pairs[((u * pairs.len() as f64) as usize).min(pairs.len() - 1)]
            }
            JointSampler::Noisy { prior, scale, noise } => {
                let vp = prior.sample(rng);
                (vp, scale * vp + noise.sample(rng))
            }
        }
    }
}

impl ValueModel {
    pub fn common(prior: Prior) -> Self {
        ValueModel::Common { prior }
    }

    pub fn scaled(prior: Prior, a: f64) -> Result<Self> {
        ensure(a.is_finite() && a > 0.0, || format!("scale factor must be positive, got {a}"))?;
        Ok(ValueModel::Scaled { prior, a })
    }

    pub fn joint(sampler: JointSampler) -> Result<Self> {
        let model = ValueModel::Joint { sampler };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ValueModel::Common { .. } => Ok(()),
            ValueModel::Scaled { a, .. } => {
                ensure(a.is_finite() && *a > 0.0, || format!("scale factor must be positive, got {a}"))
            }
            ValueModel::Joint { sampler: JointSampler::Pairs { pairs } } => {
                ensure(!pairs.is_empty(), || "joint pair list is empty".into())?;
                ensure(
                    pairs.iter().all(|(p, a)| p.is_finite() && a.is_finite() && *p >= 0.0 && *a >= 0.0),
                    || "joint pairs must be finite and non-negative".into(),
                )
            }
            ValueModel::Joint { sampler: JointSampler::Noisy { scale, .. } } => {
                ensure(scale.is_finite() && *scale >= 0.0, || format!("joint scale must be non-negative, got {scale}"))
            }
        }
    }

    /// One `(v_p, v_a)` draw.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        match self {
            ValueModel::Common { prior } => {
                let v = prior.sample(rng);
                (v, v)
            }
            ValueModel::Scaled { prior, a } => {
                let vp = prior.sample(rng);
                (vp, a * vp)
            }
            ValueModel::Joint { sampler } => sampler.sample(rng),
        }
    }

    /// Marginal law of `v_a`. Joint samplers are estimated from
    /// [`JOINT_MARGINAL_DRAWS`] draws with seed 0.
    pub fn agent_prior(&self) -> Result<Prior> {
        self.agent_prior_with(JOINT_MARGINAL_DRAWS, 0)
    }

    pub fn agent_prior_with(&self, draws: usize, seed: u64) -> Result<Prior> {
        match self {
            ValueModel::Common { prior } => Ok(prior.clone()),
            ValueModel::Scaled { prior, a } => prior.scaled(*a),
            ValueModel::Joint { sampler: JointSampler::Pairs { pairs } } => {
                Prior::empirical(pairs.iter().map(|&(_, va)| va).collect())
            }
            ValueModel::Joint { .. } => {
                let pairs = self.pair_sample(draws, seed);
                Prior::empirical(pairs.into_iter().map(|(_, va)| va).collect())
            }
        }
    }

    /// Pairs describing the model empirically: the list itself for
    /// [`JointSampler::Pairs`], otherwise `n` seeded draws.
    pub fn pair_sample(&self, n: usize, seed: u64) -> Vec<(f64, f64)> {
        if let ValueModel::Joint { sampler: JointSampler::Pairs { pairs } } = self {
            return pairs.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample_pair(&mut rng)).collect()
    }

    /// `v_p / v_a` when the values are proportional.
    pub fn principal_ratio(&self) -> Option<f64> {
        match self {
            ValueModel::Common { .. } => Some(1.0),
            ValueModel::Scaled { a, .. } => Some(1.0 / a),
            ValueModel::Joint { .. } => None,
        }
    }

    /// Bound on the magnitude of either value.
    pub fn value_span(&self) -> Result<f64> {
        Ok(match self {
            ValueModel::Common { prior } => prior.support().1,
            ValueModel::Scaled { prior, a } => prior.support().1 * a.max(1.0),
            ValueModel::Joint { .. } => self
                .pair_sample(JOINT_MARGINAL_DRAWS, 0)
                .iter()
                .fold(0.0_f64, |m, &(p, a)| m.max(p).max(a)),
        })
    }
}
