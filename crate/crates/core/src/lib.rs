//! A deterministic simulator of semi-supervised decentralized federated
//! learning.
//!
//! Clients sit on an undirected communication graph. Some hold labeled
//! data, some unlabeled data, some both. Every round each client
//! pseudo-labels its unlabeled data with help from its neighbors' models,
//! trains a small conditional diffusion model, mixes real, pseudo-labeled
//! and generated samples to train its classifier, and then averages both
//! models with its neighbors.
//!
//! ```
//! use semidfl::config::RunConfig;
//! use semidfl::orchestrator;
//!
//! let mut cfg = RunConfig::default();
//! cfg.rounds = 2;
//! cfg.dataset.n = 200;
//! cfg.diffusion.warmup = 1;
//! cfg.diffusion.gen_per_period = 40;
//! let out = orchestrator::run(&cfg, Some(1)).unwrap();
//! assert_eq!(out.rounds.len(), 2);
//! assert_eq!(out.generation_rounds(), vec![1]);
//! ```

pub mod aggregation;
pub mod classifier;
pub mod config;
pub mod data;
pub mod diffusion;
pub mod mixup;
pub mod nn;
pub mod optim;
pub mod orchestrator;
pub mod pseudolabel;
pub mod report;
pub mod rng;
pub mod topology;

pub use config::{Method, RunConfig};
pub use orchestrator::{run, run_matrix, RoundMetrics, RunOutput, Simulation};
pub use topology::{MixingWeights, ParamVector, Role, Topology};
