//! MixUp over labeled, pseudo-labeled and generated data.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{SoftLabel, TrainItem};
use crate::rng::StreamRng;

#[derive(Debug, Error, PartialEq)]
pub enum MixupError {
    #[error("cannot mix vectors of length {0} and {1}")]
    DimensionMismatch(usize, usize),
    #[error("mixing ratio {0} outside [0, 1]")]
    BadLambda(f64),
    #[error("nothing to mix: labeled, pseudo-labeled and generated sets are all empty")]
    EmptyUnion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixMode {
    /// Labeled and pseudo-labeled data only.
    LMixup,
    /// Also mixes in diffusion-generated data.
    CMixup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Both partners drawn uniformly with replacement.
    Uniform,
    /// Each drawn item is paired with the item at the same position of a
    /// shuffled copy of the draw.
    Shuffled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixConfig {
    #[serde(default = "default_mode")]
    pub mode: MixMode,
    /// `λ ~ Beta(beta[0], beta[1])`.
    #[serde(default = "default_beta")]
    pub beta: [f64; 2],
    /// Mixed items per round; `None` means one SGD pass worth (`E · B`).
    #[serde(default)]
    pub pairs_per_round: Option<usize>,
    #[serde(default = "default_pairing")]
    pub pairing: Pairing,
}

fn default_mode() -> MixMode {
    MixMode::CMixup
}
fn default_beta() -> [f64; 2] {
    [0.5, 0.5]
}
fn default_pairing() -> Pairing {
    Pairing::Uniform
}

impl Default for MixConfig {
    fn default() -> Self {
        Self { mode: default_mode(), beta: default_beta(), pairs_per_round: None, pairing: default_pairing() }
    }
}

impl MixConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.beta[0] > 0.0 && self.beta[1] > 0.0) {
            return Err(format!("mixup.beta entries must be > 0, got {:?}", self.beta));
        }
        Ok(())
    }
}

/// `x' = λ x_a + (1 − λ) x_b`, `y' = λ y_a + (1 − λ) y_b`.
pub fn mix_pair(a: &TrainItem, b: &TrainItem, lambda: f64) -> Result<TrainItem, MixupError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(MixupError::BadLambda(lambda));
    }
    if a.features.len() != b.features.len() {
        return Err(MixupError::DimensionMismatch(a.features.len(), b.features.len()));
    }
    if a.target.classes() != b.target.classes() {
        return Err(MixupError::DimensionMismatch(a.target.classes(), b.target.classes()));
    }
    let mix = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| lambda * p + (1.0 - lambda) * q).collect::<Vec<_>>();
    Ok(TrainItem {
        features: mix(&a.features, &b.features),
        target: SoftLabel::new(mix(a.target.probs(), b.target.probs())),
    })
}

/// Draws `pairs` mixed items from `labeled ∪ pseudo ∪ generated`
/// (`generated` is ignored in L-MixUp mode).
pub fn build_training_set(
    labeled: &[TrainItem],
    pseudo: &[TrainItem],
    generated: &[TrainItem],
    cfg: &MixConfig,
    pairs: usize,
    rng: &mut StreamRng,
) -> Result<Vec<TrainItem>, MixupError> {
    let generated = match cfg.mode {
        MixMode::CMixup => generated,
        MixMode::LMixup => &[],
    };
    let union: Vec<&TrainItem> = labeled.iter().chain(pseudo).chain(generated).collect();
    if union.is_empty() {
        return Err(MixupError::EmptyUnion);
    }
    let beta = Beta::new(cfg.beta[0], cfg.beta[1]).map_err(|_| MixupError::BadLambda(f64::NAN))?;
    let first: Vec<usize> = (0..pairs).map(|_| rng.random_range(0..union.len())).collect();
    let second: Vec<usize> = match cfg.pairing {
        Pairing::Uniform => (0..pairs).map(|_| rng.random_range(0..union.len())).collect(),
        Pairing::Shuffled => {
            let mut s = first.clone();
            s.shuffle(rng);
            s
        }
    };
    first
        .iter()
        .zip(&second)
        .map(|(&i, &j)| {
            let lambda: f64 = beta.sample(rng);
            mix_pair(union[i], union[j], lambda.clamp(0.0, 1.0))
        })
        .collect()
}
