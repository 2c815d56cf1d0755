//! Per-round aggregation weights: constant, or a softmax over accuracies.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::classifier::ClassifierModel;
use crate::data::Sample;
use crate::rng::StreamRng;
use crate::topology::{MixingWeights, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggMode {
    /// `1 / |G_i|`.
    Constant,
    /// Accuracy on a draw from the client's own generated set.
    Adagen,
    /// Accuracy on a shared labeled set (ablation only).
    Adatest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggConfig {
    #[serde(default = "default_mode")]
    pub mode: AggMode,
    /// Size of the shared set used by `adatest`.
    #[serde(default = "default_val_size")]
    pub val_size: usize,
}

fn default_mode() -> AggMode {
    AggMode::Adagen
}
fn default_val_size() -> usize {
    100
}

impl Default for AggConfig {
    fn default() -> Self {
        Self { mode: default_mode(), val_size: default_val_size() }
    }
}

/// `w_j = exp(a_j − ā) / Σ_j' exp(a_j' − ā)` over one sub-graph.
pub fn adaptive_weights(accs: &[f64]) -> Vec<f64> {
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    let exps: Vec<f64> = accs.iter().map(|a| (a - mean).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// A client's self-reported accuracy `a_i`.
///
/// Returns `None` when the mode's evaluation data does not exist (AdaGen
/// before the first generation) or the mode is constant.
pub fn evaluate_for_weights(
    model: &ClassifierModel,
    mode: AggMode,
    generated: Option<&[Sample]>,
    shared_test: Option<&[Sample]>,
    val_size: usize,
    rng: &mut StreamRng,
) -> Option<f64> {
    match mode {
        AggMode::Constant => None,
        AggMode::Adagen => {
            let pool = generated.filter(|g| !g.is_empty())?;
            let picked: Vec<Sample> = if pool.len() <= val_size {
                pool.to_vec()
            } else {
                index::sample(rng, pool.len(), val_size).into_iter().map(|i| pool[i].clone()).collect()
            };
            model.evaluate(&picked).ok()
        }
        AggMode::Adatest => model.evaluate(shared_test.filter(|t| !t.is_empty())?).ok(),
    }
}

/// Weights for one round. A row falls back to uniform when any member of
/// the sub-graph has no accuracy.
pub fn round_weights(topology: &Topology, mode: AggMode, accs: &[Option<f64>]) -> MixingWeights {
    if mode == AggMode::Constant {
        return MixingWeights::uniform(topology);
    }
    let rows = (0..topology.node_count())
        .map(|i| {
            let g = topology.subgraph(i);
            let row: Option<Vec<f64>> = g.iter().map(|&j| accs[j]).collect();
            match row {
                Some(a) => adaptive_weights(&a),
                None => vec![1.0 / g.len() as f64; g.len()],
            }
        })
        .collect();
    MixingWeights::from_rows(topology, rows).expect("softmax rows are stochastic")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn equal_accuracies_are_uniform() {
        assert_eq!(adaptive_weights(&[0.4, 0.4, 0.4]), vec![1.0 / 3.0; 3]);
    }

    #[test]
    fn two_accuracy_example() {
        let w = adaptive_weights(&[0.9, 0.7]);
        let e = 0.1f64.exp();
        let expect = e / (e + 1.0 / e);
        assert!((w[0] - expect).abs() < 1e-12);
        assert!((w[0] - 0.5498).abs() < 1e-4 && (w[1] - 0.4502).abs() < 1e-4);
    }

    #[test]
    fn shift_invariance() {
        let a = adaptive_weights(&[0.2, 0.5, 0.9]);
        let b = adaptive_weights(&[0.3, 0.6, 1.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_accuracy_falls_back_to_uniform() {
        let t = Topology::from_labels(&["L", "U", "M"], &[(0, 1), (1, 2)]).unwrap();
        let w = round_weights(&t, AggMode::Adagen, &[Some(0.9), None, Some(0.5)]);
        assert_eq!(w.weights(0), &[0.5, 0.5]);
        assert_eq!(w.weights(1), &[1.0 / 3.0; 3]);
        let w = round_weights(&t, AggMode::Adagen, &[Some(0.9), Some(0.1), Some(0.5)]);
        assert!(w.get(0, 0) > w.get(0, 1));
        assert_eq!(round_weights(&t, AggMode::Constant, &[Some(1.0); 3]), MixingWeights::uniform(&t));
    }

    #[test]
    fn evaluation_modes() {
        let mut m = ClassifierModel::new(1, &[], 2, &mut rng::seeded(1));
        m.params_mut().values_mut().copy_from_slice(&[5.0, -5.0, 0.0, 0.0]);
        let generated: Vec<Sample> = (0..300)
            .map(|i| if i % 2 == 0 { Sample::labeled(vec![1.0], 0) } else { Sample::labeled(vec![-1.0], 1) })
            .collect();
        let mut r = rng::seeded(2);
        assert_eq!(evaluate_for_weights(&m, AggMode::Adagen, Some(&generated), None, 100, &mut r), Some(1.0));
        assert_eq!(evaluate_for_weights(&m, AggMode::Adagen, None, None, 100, &mut r), None);
        assert_eq!(evaluate_for_weights(&m, AggMode::Adatest, None, Some(&generated[..1]), 100, &mut r), Some(1.0));
        assert_eq!(evaluate_for_weights(&m, AggMode::Constant, Some(&generated), None, 100, &mut r), None);
    }
}
