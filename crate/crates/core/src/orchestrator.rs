//! Round loop: pseudo-labeling, diffusion training and generation, MixUp,
//! local classifier training, evaluation and consensus.
//!
//! Each round has three phases separated by barriers:
//!
//! 1. every client scores its unlabeled data with the round-start
//!    classifiers of its sub-graph and counts qualified pseudo-labels;
//! 2. every client builds its pseudo-labeled set from the sub-graph counts,
//!    trains its diffusion model, (re)generates data, trains its classifier
//!    on the mixed set and reports its accuracy `a_i`;
//! 3. weights are computed and both models are averaged simultaneously.
//!
//! All randomness comes from streams keyed by `(seed, purpose, client,
//! round)`, so the result does not depend on how phases are scheduled over
//! worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{self, AggMode};
use crate::classifier::{ClassifierModel, TrainItem};
use crate::config::{Baseline, ConfigError, Method, RunConfig};
use crate::data::{self, ClientDataset, DataError, Sample};
use crate::diffusion::{self, DiffusionModel};
use crate::mixup::{self, MixMode, MixupError};
use crate::optim::Adam;
use crate::pseudolabel::{self, QualifiedCounts};
use crate::rng::{self, Purpose};
use crate::topology::{self, MixingWeights, ParamVector, Role, Topology};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("expected {expected} client datasets, got {found}")]
    ClientCount { expected: usize, found: usize },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientMetrics {
    pub client: usize,
    /// Accuracy of the post-consensus classifier on the global test split.
    pub acc: f64,
    pub pl_count: usize,
    pub pl_precision: Option<f64>,
    pub a_i: Option<f64>,
    /// `‖φ_i − mean_j φ_j‖∞` after consensus.
    pub disagreement: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub clients: Vec<ClientMetrics>,
    pub mean_acc: f64,
    pub std_acc: f64,
    /// Largest pairwise `‖φ_i − φ_j‖∞`.
    pub max_disagreement: f64,
    /// Whether generated data was refreshed this round.
    pub generated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub method: Method,
    pub seed: u64,
    pub rounds: Vec<RoundMetrics>,
    pub warnings: Vec<String>,
}

impl RunOutput {
    pub fn final_round(&self) -> &RoundMetrics {
        self.rounds.last().expect("at least one round")
    }

    pub fn generation_rounds(&self) -> Vec<usize> {
        self.rounds.iter().filter(|r| r.generated).map(|r| r.round).collect()
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone)]
pub struct ClientState {
    pub role: Role,
    pub data: ClientDataset,
    pub classifier: ClassifierModel,
    pub diffusion: DiffusionModel,
    diffusion_opt: Adam,
    /// Current generated set `𝒟_i`, kept between regenerations.
    pub generated: Vec<Sample>,
    /// Bounding box of the client's own features.
    pub feature_box: Option<Vec<(f64, f64)>>,
}

struct Scored {
    scores: Vec<crate::classifier::SoftLabel>,
    counts: QualifiedCounts,
}

struct LocalOutcome {
    pl_count: usize,
    pl_precision: Option<f64>,
    a_i: Option<f64>,
}

pub struct Simulation {
    cfg: RunConfig,
    baseline: Option<Baseline>,
    topology: Topology,
    clients: Vec<ClientState>,
    test: Vec<Sample>,
    shared: Vec<Sample>,
    round: usize,
    history: Vec<RoundMetrics>,
    warnings: Vec<String>,
    pool: rayon::ThreadPool,
}

impl Simulation {
    /// Generates the dataset, holds out the test split, partitions the rest
    /// and initializes every client.
    pub fn from_config(cfg: &RunConfig, jobs: Option<usize>) -> Result<Self, RunError> {
        cfg.validate()?;
        let topology = cfg.topology.load().map_err(ConfigError::from)?;
        let spec = &cfg.dataset;
        let dataset = data::make_toy_dataset(spec, cfg.seed)?;
        let (train, held_out) = data::train_test_split(dataset, spec.test_fraction, spec.classes, cfg.seed);
        // The shared set used by AdaTest is carved from the held-out split and
        // never used for reporting, whatever the aggregation mode.
        let shared_len = cfg.agg.val_size.min(held_out.len() / 2);
        let shared = held_out[..shared_len].to_vec();
        let test = held_out[shared_len..].to_vec();
        let partition = data::partition(&train, &topology, spec.classes, &cfg.partition, cfg.seed)?;
        let mut sim = Self::with_data(cfg, topology, partition.clients, test, shared, jobs)?;
        sim.warnings.extend(partition.warnings);
        Ok(sim)
    }

    /// Starts from explicit client datasets.
    pub fn with_data(
        cfg: &RunConfig,
        topology: Topology,
        mut datasets: Vec<ClientDataset>,
        test: Vec<Sample>,
        shared: Vec<Sample>,
        jobs: Option<usize>,
    ) -> Result<Self, RunError> {
        if datasets.len() != topology.node_count() {
            return Err(RunError::ClientCount { expected: topology.node_count(), found: datasets.len() });
        }
        let effective = cfg.effective();
        let baseline = cfg.method.baseline();
        if baseline == Some(Baseline::UpperBound) {
            for d in &mut datasets {
                d.reveal_labels();
            }
        }
        let (dim, classes) = (effective.dataset.dim, effective.dataset.classes);
        let clients = datasets
            .into_iter()
            .enumerate()
            .map(|(i, data)| {
                let key = if effective.model.identical_init { 0 } else { i as u64 + 1 };
                let mut init = rng::stream(effective.seed, Purpose::Init, &[key]);
                let classifier = ClassifierModel::new(dim, &effective.model.hidden_sizes, classes, &mut init);
                let diffusion = DiffusionModel::new(dim, classes, &effective.diffusion, &mut init);
                let diffusion_opt = Adam::new(diffusion.params().len(), effective.diffusion.lr);
                let feature_box =
                    diffusion::bounding_box(data.labeled.iter().chain(&data.unlabeled).map(|s| s.features.as_slice()));
                ClientState {
                    role: topology.role(i),
                    data,
                    classifier,
                    diffusion,
                    diffusion_opt,
                    generated: Vec::new(),
                    feature_box,
                }
            })
            .collect();
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(j) = jobs {
            builder = builder.num_threads(j.max(1));
        }
        let pool = builder.build().map_err(|e| RunError::Pool(e.to_string()))?;
        Ok(Self {
            cfg: effective,
            baseline,
            topology,
            clients,
            test,
            shared,
            round: 0,
            history: Vec::new(),
            warnings: Vec::new(),
            pool,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn history(&self) -> &[RoundMetrics] {
        &self.history
    }

    fn diffusion_enabled(&self) -> bool {
        self.baseline.is_none() && (self.cfg.mixup.mode == MixMode::CMixup || self.cfg.agg.mode == AggMode::Adagen)
    }

    fn agg_mode(&self) -> AggMode {
        if self.baseline.is_some() {
            AggMode::Constant
        } else {
            self.cfg.agg.mode
        }
    }

    /// Whether round `t` refreshes the generated sets.
    pub fn regenerates_at(&self, t: usize) -> bool {
        let start = self.cfg.diffusion.warmup.max(1);
        self.diffusion_enabled() && t >= start && (t - start).is_multiple_of(self.cfg.diffusion.gen_period_rounds)
    }

    pub fn step(&mut self) -> &RoundMetrics {
        let t = self.round + 1;
        let semi = self.baseline.is_none();
        let regen = self.regenerates_at(t);
        let diffusion_on = self.diffusion_enabled();
        let agg_mode = self.agg_mode();
        let classes = self.cfg.dataset.classes;
        let cfg = &self.cfg;
        let topology = &self.topology;
        let seed = cfg.seed;
        let shared = &self.shared;

        // Phase 1: sharpened predictions and qualified counts.
        let snapshot: Vec<ClassifierModel> = self.clients.iter().map(|c| c.classifier.clone()).collect();
        let clients = &mut self.clients;
        let scored: Vec<Option<Scored>> = self.pool.install(|| {
            clients
                .par_iter()
                .enumerate()
                .map(|(i, c)| {
                    if !semi || c.data.unlabeled.is_empty() {
                        return None;
                    }
                    let g = topology.subgraph(i);
                    let models: Vec<&ClassifierModel> = g.iter().map(|&j| &snapshot[j]).collect();
                    let own = g.binary_search(&i).expect("sub-graph contains self");
                    let s = rng::derive_seed(seed, &[Purpose::Augment as u64, i as u64, t as u64]);
                    let scores = pseudolabel::score_unlabeled(&c.data.unlabeled, &models, own, &cfg.pl, s);
                    let counts = pseudolabel::count_qualified(&scores, classes, cfg.pl.tau);
                    Some(Scored { scores, counts })
                })
                .collect()
        });
        let counts: Vec<QualifiedCounts> = scored
            .iter()
            .map(|s| s.as_ref().map_or_else(|| QualifiedCounts::zeros(classes), |s| s.counts.clone()))
            .collect();

        // Phase 2: local work.
        let outcomes: Vec<LocalOutcome> = self.pool.install(|| {
            clients
                .par_iter_mut()
                .zip(scored.par_iter())
                .enumerate()
                .map(|(i, (client, scored))| {
                    let neighborhood: Vec<QualifiedCounts> =
                        topology.subgraph(i).iter().map(|&j| counts[j].clone()).collect();
                    local_round(cfg, client, i, t, scored.as_ref(), &neighborhood, diffusion_on, regen, agg_mode, semi, shared)
                })
                .collect()
        });

        // Phase 3: weights and simultaneous consensus.
        let accs: Vec<Option<f64>> = outcomes.iter().map(|o| o.a_i).collect();
        let weights = aggregation::round_weights(topology, agg_mode, &accs);
        consensus_all(clients, &weights, diffusion_on);

        let params: Vec<ParamVector> = clients.iter().map(|c| c.classifier.params().clone()).collect();
        let mean = mean_params(&params);
        let test = &self.test;
        let accs_test: Vec<f64> = self.pool.install(|| {
            clients.par_iter().map(|c| if test.is_empty() { f64::NAN } else { c.classifier.evaluate(test).expect("labeled test set") }).collect()
        });
        let client_metrics: Vec<ClientMetrics> = outcomes
            .iter()
            .enumerate()
            .map(|(i, o)| ClientMetrics {
                client: i,
                acc: accs_test[i],
                pl_count: o.pl_count,
                pl_precision: o.pl_precision,
                a_i: o.a_i,
                disagreement: params[i].max_abs_diff(&mean),
            })
            .collect();
        let (mean_acc, std_acc) = mean_std(&accs_test);
        self.round = t;
        self.history.push(RoundMetrics {
            round: t,
            clients: client_metrics,
            mean_acc,
            std_acc,
            max_disagreement: topology::max_pairwise_disagreement(&params),
            generated: regen,
        });
        self.history.last().unwrap()
    }

    pub fn run(mut self) -> RunOutput {
        while self.round < self.cfg.rounds {
            self.step();
        }
        RunOutput { method: self.cfg.method, seed: self.cfg.seed, rounds: self.history, warnings: self.warnings }
    }
}

fn mean_params(params: &[ParamVector]) -> ParamVector {
    let mut acc = vec![0.0; params[0].len()];
    for p in params {
        for (a, v) in acc.iter_mut().zip(p.values()) {
            *a += v;
        }
    }
    let n = params.len() as f64;
    ParamVector::new(acc.into_iter().map(|a| a / n).collect(), params[0].layout().clone())
}

fn consensus_all(clients: &mut [ClientState], weights: &MixingWeights, diffusion_on: bool) {
    let phi: Vec<ParamVector> = clients.iter().map(|c| c.classifier.params().clone()).collect();
    let phi = topology::consensus_update(&phi, weights).expect("clients share one classifier layout");
    for (c, p) in clients.iter_mut().zip(phi) {
        *c.classifier.params_mut() = p;
    }
    if diffusion_on {
        let psi: Vec<ParamVector> = clients.iter().map(|c| c.diffusion.params().clone()).collect();
        let psi = topology::consensus_update(&psi, weights).expect("clients share one diffusion layout");
        for (c, p) in clients.iter_mut().zip(psi) {
            c.diffusion.set_params(p);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn local_round(
    cfg: &RunConfig,
    client: &mut ClientState,
    i: usize,
    t: usize,
    scored: Option<&Scored>,
    neighborhood: &[QualifiedCounts],
    diffusion_on: bool,
    regen: bool,
    agg_mode: AggMode,
    semi: bool,
    shared: &[Sample],
) -> LocalOutcome {
    let classes = cfg.dataset.classes;
    let keys = [i as u64, t as u64];

    let pseudo = match scored {
        Some(s) => {
            let thresholds = pseudolabel::thresholds_for(cfg.pl.mode, &s.counts, neighborhood, cfg.pl.tau);
            pseudolabel::filter_pseudo(&client.data.unlabeled, &s.scores, &thresholds)
        }
        None => Default::default(),
    };
    let pl_precision = pseudo.precision(&client.data.hidden_labels);

    let labeled: Vec<TrainItem> = client
        .data
        .labeled
        .iter()
        .map(|s| TrainItem::hard(s.features.clone(), s.label.expect("labeled sample"), classes))
        .collect();

    if diffusion_on {
        let train: Vec<(Vec<f64>, usize)> = client
            .data
            .labeled
            .iter()
            .map(|s| (s.features.clone(), s.label.expect("labeled sample")))
            .chain(pseudo.items.iter().map(|p| (p.features.clone(), p.class)))
            .collect();
        let mut r = rng::stream(cfg.seed, Purpose::DiffusionTrain, &keys);
        client.diffusion.train(&train, &cfg.diffusion, &mut client.diffusion_opt, &mut r);
        if regen {
            let per_class = (cfg.diffusion.gen_per_period / classes).max(1);
            let s = rng::derive_seed(cfg.seed, &[Purpose::Generate as u64, i as u64, t as u64]);
            let clip = match cfg.diffusion.clip_sample {
                Some(c) => Some(diffusion::symmetric_bounds(c, cfg.dataset.dim)),
                None if cfg.diffusion.clip_to_data => client.feature_box.clone(),
                None => None,
            };
            client.generated = client
                .diffusion
                .generate_dataset(per_class, cfg.diffusion.guidance, cfg.diffusion.sample_steps, clip.as_deref(), s)
                .expect("valid sampler settings")
                .into_iter()
                .map(|(x, y)| Sample::labeled(x, y))
                .collect();
        }
    }

    let train_set = if semi {
        let pseudo_items: Vec<TrainItem> =
            pseudo.items.iter().map(|p| TrainItem::new(p.features.clone(), p.label.clone())).collect();
        let generated: Vec<TrainItem> = client
            .generated
            .iter()
            .map(|s| TrainItem::hard(s.features.clone(), s.label.expect("generated samples carry labels"), classes))
            .collect();
        let pairs = cfg.mixup.pairs_per_round.unwrap_or(cfg.train.epochs * cfg.train.batch);
        let mut r = rng::stream(cfg.seed, Purpose::Mixup, &keys);
        match mixup::build_training_set(&labeled, &pseudo_items, &generated, &cfg.mixup, pairs, &mut r) {
            Ok(set) => set,
            Err(MixupError::EmptyUnion) => Vec::new(),
            Err(e) => panic!("mixup on consistent data failed: {e}"),
        }
    } else {
        labeled
    };

    if !train_set.is_empty() {
        let mut r = rng::stream(cfg.seed, Purpose::ClassifierTrain, &keys);
        client.classifier = client.classifier.train_local(&train_set, &cfg.train, &mut r);
    }

    let mut r = rng::stream(cfg.seed, Purpose::Validation, &keys);
    let a_i = aggregation::evaluate_for_weights(
        &client.classifier,
        agg_mode,
        Some(&client.generated),
        Some(shared),
        cfg.diffusion.val_size,
        &mut r,
    );
    LocalOutcome { pl_count: pseudo.len(), pl_precision, a_i }
}

pub fn run(cfg: &RunConfig, jobs: Option<usize>) -> Result<RunOutput, RunError> {
    Ok(Simulation::from_config(cfg, jobs)?.run())
}

/// Final result of one run inside a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub alpha: f64,
    pub r: f64,
    pub method: Method,
    pub seed: u64,
    pub final_mean_acc: f64,
    pub final_std_acc: f64,
}

/// One aggregated row: mean ± std of the final mean accuracy over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub alpha: f64,
    pub r: f64,
    pub method: Method,
    pub runs: usize,
    pub mean_acc: f64,
    pub std_acc: f64,
    /// Average over seeds of the across-client standard deviation.
    pub mean_client_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixOutput {
    pub runs: Vec<RunSummary>,
    pub rows: Vec<SummaryRow>,
}

/// Runs the Cartesian product `alpha × r × method × seed`. Empty sweep
/// lists fall back to the base config's value.
pub fn run_matrix(base: &RunConfig, jobs: Option<usize>) -> Result<MatrixOutput, RunError> {
    base.validate()?;
    let sweep = base.sweep.clone().unwrap_or_default();
    let or_base = |v: &Vec<f64>, d: f64| if v.is_empty() { vec![d] } else { v.clone() };
    let alphas = or_base(&sweep.alpha, base.partition.alpha);
    let ratios = or_base(&sweep.r, base.partition.labeled_ratio);
    let methods = if sweep.methods.is_empty() { vec![base.method] } else { sweep.methods.clone() };
    let seeds = base.sweep_seeds();

    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for &alpha in &alphas {
        for &r in &ratios {
            for &method in &methods {
                let mut finals = Vec::new();
                let mut client_stds = Vec::new();
                for &seed in &seeds {
                    let mut cfg = base.clone();
                    cfg.partition.alpha = alpha;
                    cfg.partition.labeled_ratio = r;
                    cfg.method = method;
                    cfg.seed = seed;
                    cfg.sweep = None;
                    let out = run(&cfg, jobs)?;
                    let last = out.final_round();
                    finals.push(last.mean_acc);
                    client_stds.push(last.std_acc);
                    runs.push(RunSummary { alpha, r, method, seed, final_mean_acc: last.mean_acc, final_std_acc: last.std_acc });
                }
                let (mean_acc, std_acc) = mean_std(&finals);
                let (mean_client_std, _) = mean_std(&client_stds);
                rows.push(SummaryRow { alpha, r, method, runs: finals.len(), mean_acc, std_acc, mean_client_std });
            }
        }
    }
    Ok(MatrixOutput { runs, rows })
}
