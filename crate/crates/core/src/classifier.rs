//! Small MLP classifier with a softmax head, trained by mini-batch SGD on
//! soft-label cross-entropy.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Sample;
use crate::nn::Mlp;
use crate::rng::StreamRng;
use crate::topology::{ConsensusError, ParamVector};

#[derive(Debug, Error, PartialEq)]
pub enum ClassifierError {
    #[error("input has {found} features, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty evaluation set")]
    EmptySet,
    #[error("sample without a label in evaluation set")]
    Unlabeled,
    #[error(transparent)]
    Params(#[from] ConsensusError),
}

/// A probability vector over the classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SoftLabel(Vec<f64>);

impl SoftLabel {
    /// Wraps a vector already known to lie on the simplex.
    pub fn new(probs: Vec<f64>) -> Self {
        debug_assert!(probs.iter().all(|&p| p >= 0.0), "{probs:?}");
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6, "{probs:?}");
        Self(probs)
    }

    pub fn one_hot(class: usize, classes: usize) -> Self {
        let mut v = vec![0.0; classes];
        v[class] = 1.0;
        Self(v)
    }

    pub fn uniform(classes: usize) -> Self {
        Self(vec![1.0 / classes as f64; classes])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_probs(self) -> Vec<f64> {
        self.0
    }

    pub fn classes(&self) -> usize {
        self.0.len()
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Lowest index among the maxima.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// A training example: features with a (possibly soft) target.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainItem {
    pub features: Vec<f64>,
    pub target: SoftLabel,
}

impl TrainItem {
    pub fn new(features: Vec<f64>, target: SoftLabel) -> Self {
        Self { features, target }
    }

    pub fn hard(features: Vec<f64>, class: usize, classes: usize) -> Self {
        Self { features, target: SoftLabel::one_hot(class, classes) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Mini-batch SGD steps per call (the local iteration count `E`).
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
}

fn default_epochs() -> usize {
    25
}
fn default_batch() -> usize {
    10
}
fn default_lr() -> f64 {
    0.05
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: default_epochs(), batch: default_batch(), lr: default_lr() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    net: Mlp,
    params: ParamVector,
}

impl ClassifierModel {
    /// `input_dim → hidden... → classes`, Glorot-initialized from `rng`.
    pub fn new(input_dim: usize, hidden: &[usize], classes: usize, rng: &mut StreamRng) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(classes);
        let net = Mlp::new(sizes);
        let init = net.init(rng);
        let params = ParamVector::new(init, net.layout_tag("classifier"));
        Self { net, params }
    }

    pub fn from_params(net: Mlp, params: ParamVector) -> Result<Self, ClassifierError> {
        let expected = ParamVector::zeros(net.param_count(), net.layout_tag("classifier"));
        expected.check_compatible(&params)?;
        Ok(Self { net, params })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn with_params(&self, params: ParamVector) -> Result<Self, ClassifierError> {
        Self::from_params(self.net.clone(), params)
    }

    pub fn classes(&self) -> usize {
        self.net.output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), ClassifierError> {
        if x.len() != self.input_dim() {
            return Err(ClassifierError::DimensionMismatch { expected: self.input_dim(), found: x.len() });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<SoftLabel, ClassifierError> {
        self.check_dim(x)?;
        Ok(SoftLabel(softmax(&self.net.forward(self.params.values(), x))))
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize, ClassifierError> {
        Ok(self.forward(x)?.argmax())
    }

    /// Mean soft-label cross-entropy `−Σ_c y_c log p_c` over the batch and
    /// its gradient.
    pub fn loss_and_grad(&self, batch: &[TrainItem]) -> Result<(f64, ParamVector), ClassifierError> {
        if batch.is_empty() {
            return Err(ClassifierError::EmptyBatch);
        }
        let params = self.params.values();
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        let scale = 1.0 / batch.len() as f64;
        for item in batch {
            self.check_dim(&item.features)?;
            let trace = self.net.forward_trace(params, &item.features);
            let p = softmax(trace.output());
            let y = item.target.probs();
            loss -= y.iter().zip(&p).filter(|(y, _)| **y > 0.0).map(|(y, p)| y * p.max(1e-300).ln()).sum::<f64>();
            // d/dz of CE with softmax: (p − y) · Σy, and Σy = 1.
            let ysum: f64 = y.iter().sum();
            let dz: Vec<f64> = p.iter().zip(y).map(|(p, y)| (p * ysum - y) * scale).collect();
            self.net.backward(params, &trace, &dz, &mut grad);
        }
        Ok((loss * scale, ParamVector::new(grad, self.params.layout().clone())))
    }

    /// `E` steps of mini-batch SGD. Batches are drawn by walking a shuffled
    /// copy of the data and reshuffling whenever it is exhausted.
    pub fn train_local(&self, data: &[TrainItem], cfg: &TrainConfig, rng: &mut StreamRng) -> Self {
        let mut model = self.clone();
        if data.is_empty() || cfg.epochs == 0 {
            return model;
        }
        let batch = cfg.batch.max(1);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(rng);
        let mut cursor = 0;
        let mut items = Vec::with_capacity(batch);
        for _ in 0..cfg.epochs {
            items.clear();
            while items.len() < batch.min(data.len()) {
                if cursor == order.len() {
                    order.shuffle(rng);
                    cursor = 0;
                }
                items.push(data[order[cursor]].clone());
                cursor += 1;
            }
            let (_, grad) = model.loss_and_grad(&items).expect("non-empty batch of matching dimension");
            for (p, g) in model.params.values_mut().iter_mut().zip(grad.values()) {
                *p -= cfg.lr * g;
            }
        }
        model
    }

    /// Fraction of samples whose argmax prediction equals the label.
    pub fn evaluate(&self, test: &[Sample]) -> Result<f64, ClassifierError> {
        if test.is_empty() {
            return Err(ClassifierError::EmptySet);
        }
        let mut correct = 0usize;
        for s in test {
            let y = s.label.ok_or(ClassifierError::Unlabeled)?;
            if self.predict(&s.features)? == y {
                correct += 1;
            }
        }
        Ok(correct as f64 / test.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn model(sizes: &[usize], seed: u64) -> ClassifierModel {
        ClassifierModel::new(sizes[0], &sizes[1..sizes.len() - 1], sizes[sizes.len() - 1], &mut rng::seeded(seed))
    }

    #[test]
    fn zero_last_layer_gives_uniform() {
        let mut m = model(&[3, 5, 4], 1);
        let range = m.net().last_layer();
        for p in &mut m.params_mut().values_mut()[range] {
            *p = 0.0;
        }
        let out = m.forward(&[0.2, -0.5, 1.0]).unwrap();
        for p in out.probs() {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn output_on_simplex() {
        let m = model(&[4, 8, 8, 3], 2);
        let out = m.forward(&[1.0, 2.0, -3.0, 0.5]).unwrap();
        assert!((out.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(
            m.forward(&[1.0]).unwrap_err(),
            ClassifierError::DimensionMismatch { expected: 4, found: 1 }
        );
    }

    #[test]
    fn single_layer_reproduces_logistic() {
        // Logits z = (x0, −x0): p0 = 1 / (1 + exp(−2 x0)).
        let net = Mlp::new(vec![1, 2]);
        let params = ParamVector::new(vec![1.0, -1.0, 0.0, 0.0], net.layout_tag("classifier"));
        let m = ClassifierModel::from_params(net, params).unwrap();
        let x = 0.7f64;
        let p = m.forward(&[x]).unwrap();
        assert!((p.probs()[0] - 1.0 / (1.0 + (-2.0 * x).exp())).abs() < 1e-15);
    }

    #[test]
    fn uniform_vs_one_hot_loss_is_ln_c() {
        let mut m = model(&[2, 10], 3);
        for p in m.params_mut().values_mut() {
            *p = 0.0;
        }
        let (loss, _) = m.loss_and_grad(&[TrainItem::hard(vec![0.5, 0.5], 3, 10)]).unwrap();
        assert!((loss - 10f64.ln()).abs() < 1e-12);
        assert_eq!(m.loss_and_grad(&[]).unwrap_err(), ClassifierError::EmptyBatch);
    }

    #[test]
    fn confident_correct_prediction_has_vanishing_loss() {
        let net = Mlp::new(vec![1, 2]);
        let params = ParamVector::new(vec![0.0, 0.0, 400.0, -400.0], net.layout_tag("classifier"));
        let m = ClassifierModel::from_params(net, params).unwrap();
        let (loss, grad) = m.loss_and_grad(&[TrainItem::hard(vec![1.0], 0, 2)]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.values().iter().all(|g| g.abs() < 1e-300));
    }

    #[test]
    fn zero_lr_and_zero_steps_are_identity() {
        let m = model(&[2, 4, 2], 4);
        let data = vec![TrainItem::hard(vec![1.0, 0.0], 0, 2), TrainItem::hard(vec![0.0, 1.0], 1, 2)];
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        assert_eq!(m.train_local(&data, &cfg, &mut rng::seeded(1)), m);
        let cfg = TrainConfig { lr: 0.0, ..TrainConfig::default() };
        assert_eq!(m.train_local(&data, &cfg, &mut rng::seeded(1)).params(), m.params());
    }

    #[test]
    fn evaluate_cases() {
        let mut m = model(&[1, 2], 5);
        for p in m.params_mut().values_mut() {
            *p = 0.0;
        }
        // Uniform prediction: argmax tie goes to class 0.
        let balanced = vec![Sample::labeled(vec![0.0], 0), Sample::labeled(vec![1.0], 1)];
        assert_eq!(m.evaluate(&balanced).unwrap(), 0.5);
        let ones = vec![Sample::labeled(vec![0.0], 1); 3];
        assert_eq!(m.evaluate(&ones).unwrap(), 0.0);
        assert_eq!(m.evaluate(&[]).unwrap_err(), ClassifierError::EmptySet);
    }

    #[test]
    fn memorizes_tiny_set() {
        let m = model(&[2, 16, 3], 6);
        let pts = [([0.0, 0.0], 0), ([1.0, 0.0], 1), ([0.0, 1.0], 2), ([1.0, 1.0], 0)];
        let data: Vec<_> = pts.iter().map(|(x, y)| TrainItem::hard(x.to_vec(), *y, 3)).collect();
        let cfg = TrainConfig { epochs: 3000, batch: 4, lr: 0.2 };
        let trained = m.train_local(&data, &cfg, &mut rng::seeded(2));
        let test: Vec<_> = pts.iter().map(|(x, y)| Sample::labeled(x.to_vec(), *y)).collect();
        assert_eq!(trained.evaluate(&test).unwrap(), 1.0);
    }

    #[test]
    fn argmax_ties_break_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }
}
