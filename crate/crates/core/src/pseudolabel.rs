//! Pseudo-label estimation and filtering.
//!
//! Three variants share one pipeline (predict, sharpen, threshold):
//!
//! * `vanilla`: own-model predictions, fixed threshold `τ`.
//! * `apl`: own-model predictions, class-wise thresholds scaled by the
//!   client's own qualified counts.
//! * `npl`: augmentation variants after the first are scored by classifiers
//!   drawn at random from the sub-graph, and thresholds are scaled by the
//!   largest qualified count anywhere in the sub-graph.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{ClassifierModel, SoftLabel};
use crate::data::{self, Sample};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlMode {
    Vanilla,
    Apl,
    Npl,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlConfig {
    #[serde(default = "default_mode")]
    pub mode: PlMode,
    /// Augmentation variants per sample.
    #[serde(rename = "K", default = "default_k")]
    pub k: usize,
    /// Sharpening temperature, `> 1`.
    #[serde(rename = "Z", default = "default_z")]
    pub z: f64,
    /// Base qualification threshold.
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Standard deviation of the augmentation jitter.
    #[serde(default = "default_sigma_aug")]
    pub sigma_aug: f64,
}

fn default_mode() -> PlMode {
    PlMode::Npl
}
fn default_k() -> usize {
    4
}
fn default_z() -> f64 {
    2.0
}
fn default_tau() -> f64 {
    0.95
}
fn default_sigma_aug() -> f64 {
    0.1
}

impl Default for PlConfig {
    fn default() -> Self {
        Self { mode: default_mode(), k: default_k(), z: default_z(), tau: default_tau(), sigma_aug: default_sigma_aug() }
    }
}

impl PlConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.k == 0 {
            return Err("pl.K must be at least 1".into());
        }
        if !(self.z > 1.0) {
            return Err(format!("pl.Z must be > 1, got {}", self.z));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(format!("pl.tau must be in (0, 1], got {}", self.tau));
        }
        if !(self.sigma_aug >= 0.0) {
            return Err(format!("pl.sigma_aug must be >= 0, got {}", self.sigma_aug));
        }
        Ok(())
    }
}

/// Per-class number of confidently pseudo-labeled samples.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualifiedCounts(pub Vec<usize>);

impl QualifiedCounts {
    pub fn zeros(classes: usize) -> Self {
        Self(vec![0; classes])
    }

    pub fn max(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoItem {
    pub features: Vec<f64>,
    /// The sharpened prediction.
    pub label: SoftLabel,
    pub class: usize,
    /// Position of the source sample in the client's unlabeled set.
    pub source: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PseudoLabeledSet {
    pub items: Vec<PseudoItem>,
}

impl PseudoLabeledSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Fraction of items whose class matches `truth[item.source]`.
    pub fn precision(&self, truth: &[usize]) -> Option<f64> {
        if self.items.is_empty() {
            return None;
        }
        let hits = self.items.iter().filter(|it| truth[it.source] == it.class).count();
        Some(hits as f64 / self.items.len() as f64)
    }
}

/// Averages `K` augmented-variant predictions; variant `k` (1-based) is
/// scored by `models[assignment[k - 1]]`.
pub fn predict_with_assignment(
    features: &[f64],
    models: &[&ClassifierModel],
    assignment: &[usize],
    sigma_aug: f64,
    seed: u64,
) -> SoftLabel {
    let classes = models[0].classes();
    let mut acc = vec![0.0; classes];
    let sample = Sample::unlabeled(features.to_vec());
    for (k, &m) in assignment.iter().enumerate() {
        let variant = data::augment(&sample, k as u64 + 1, sigma_aug, seed);
        let p = models[m].forward(&variant.features).expect("unlabeled features match model input");
        for (a, v) in acc.iter_mut().zip(p.probs()) {
            *a += v;
        }
    }
    let k = assignment.len() as f64;
    SoftLabel::new(acc.into_iter().map(|a| a / k).collect())
}

/// `p̄ = (1/K) Σ_k F(augment(x, k); own)`.
pub fn predict_avg(features: &[f64], own: &ClassifierModel, cfg: &PlConfig, seed: u64) -> SoftLabel {
    predict_with_assignment(features, &[own], &vec![0; cfg.k], cfg.sigma_aug, seed)
}

/// Draws the scoring model for each variant: the first is always `own`,
/// the rest uniformly with replacement from `0..models`.
pub fn draw_assignment<R: Rng + ?Sized>(models: usize, own: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut a = Vec::with_capacity(k);
    a.push(own);
    a.extend((1..k).map(|_| rng.random_range(0..models)));
    a
}

/// Neighborhood prediction. `models` lists the sub-graph's classifiers and
/// `own` is this client's position in it.
pub fn predict_avg_neighborhood(
    features: &[f64],
    models: &[&ClassifierModel],
    own: usize,
    cfg: &PlConfig,
    seed: u64,
) -> SoftLabel {
    let mut rng = rng::stream(seed, Purpose::NeighborDraw, &[]);
    let assignment = draw_assignment(models.len(), own, cfg.k, &mut rng);
    predict_with_assignment(features, models, &assignment, cfg.sigma_aug, seed)
}

/// `p̂_c = p_c^Z / Σ_c' p_c'^Z`.
pub fn sharpen(p: &[f64], z: f64) -> SoftLabel {
    let powered: Vec<f64> = p.iter().map(|v| v.powf(z)).collect();
    let sum: f64 = powered.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        SoftLabel::new(powered.into_iter().map(|v| v / sum).collect())
    } else {
        // Underflow on a near-uniform tiny vector: fall back to a hard argmax.
        SoftLabel::one_hot(crate::classifier::argmax(p), p.len())
    }
}

/// `σ_c = #{n : max p̂ⁿ > τ and argmax p̂ⁿ = c}`.
pub fn count_qualified(preds: &[SoftLabel], classes: usize, tau: f64) -> QualifiedCounts {
    let mut counts = vec![0; classes];
    for p in preds {
        if p.max() > tau {
            counts[p.argmax()] += 1;
        }
    }
    QualifiedCounts(counts)
}

/// `τ_c = σ_c / max_{j∈G_i} max_c' σ_j,c' · τ`, or `τ` for every class
/// when no client in the sub-graph has any qualified sample.
pub fn adaptive_threshold(own: &QualifiedCounts, neighborhood: &[QualifiedCounts], tau: f64) -> Vec<f64> {
    let denom = neighborhood.iter().map(QualifiedCounts::max).max().unwrap_or(0).max(own.max());
    if denom == 0 {
        return vec![tau; own.0.len()];
    }
    own.0.iter().map(|&s| s as f64 / denom as f64 * tau).collect()
}

/// Thresholds for `mode`. Vanilla ignores the counts; APL sees only its own.
pub fn thresholds_for(mode: PlMode, own: &QualifiedCounts, neighborhood: &[QualifiedCounts], tau: f64) -> Vec<f64> {
    match mode {
        PlMode::Vanilla => vec![tau; own.0.len()],
        PlMode::Apl => adaptive_threshold(own, std::slice::from_ref(own), tau),
        PlMode::Npl => adaptive_threshold(own, neighborhood, tau),
    }
}

/// Sharpened predictions for every unlabeled sample. Sample `n` uses the
/// seed derived from `(seed, n)` for its augmentations and neighbor draws.
pub fn score_unlabeled(
    unlabeled: &[Sample],
    models: &[&ClassifierModel],
    own: usize,
    cfg: &PlConfig,
    seed: u64,
) -> Vec<SoftLabel> {
    unlabeled
        .iter()
        .enumerate()
        .map(|(n, s)| {
            let sample_seed = rng::derive_seed(seed, &[n as u64]);
            let p = match cfg.mode {
                PlMode::Npl => predict_avg_neighborhood(&s.features, models, own, cfg, sample_seed),
                PlMode::Vanilla | PlMode::Apl => predict_avg(&s.features, models[own], cfg, sample_seed),
            };
            sharpen(p.probs(), cfg.z)
        })
        .collect()
}

/// Keeps sample `n` iff `max p̂ⁿ > thresholds[argmax p̂ⁿ]`.
pub fn filter_pseudo(unlabeled: &[Sample], scores: &[SoftLabel], thresholds: &[f64]) -> PseudoLabeledSet {
    let items = unlabeled
        .iter()
        .zip(scores)
        .enumerate()
        .filter_map(|(n, (s, p))| {
            let c = p.argmax();
            (p.max() > thresholds[c]).then(|| PseudoItem { features: s.features.clone(), label: p.clone(), class: c, source: n })
        })
        .collect();
    PseudoLabeledSet { items }
}

/// Predict, sharpen and filter in one go.
pub fn build_pseudo_set(
    unlabeled: &[Sample],
    models: &[&ClassifierModel],
    own: usize,
    thresholds: &[f64],
    cfg: &PlConfig,
    seed: u64,
) -> PseudoLabeledSet {
    let scores = score_unlabeled(unlabeled, models, own, cfg, seed);
    filter_pseudo(unlabeled, &scores, thresholds)
}
