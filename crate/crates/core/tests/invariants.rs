use proptest::prelude::*;

use semidfl::aggregation::{adaptive_weights, round_weights, AggMode};
use semidfl::classifier::{softmax, SoftLabel};
use semidfl::config::RunConfig;
use semidfl::data::{self, DatasetSpec, PartitionSpec, Sample};
use semidfl::pseudolabel::{adaptive_threshold, count_qualified, filter_pseudo, sharpen, QualifiedCounts};
use semidfl::report;
use semidfl::topology::{MixingWeights, Topology, PRESETS};
use semidfl::{run, Simulation};

fn is_simplex(p: &[f64]) -> bool {
    p.iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)) && (p.iter().sum::<f64>() - 1.0).abs() < 1e-9
}

fn small_config(method: &str, warmup: usize, rounds: usize) -> RunConfig {
    RunConfig::from_toml(&format!(
        "seed = 7\nrounds = {rounds}\nmethod = \"{method}\"\ntopology = \"topo1\"\n\
         [dataset]\nn = 240\n[partition]\nalpha = 0.5\nr = 0.05\n\
         [diffusion]\nwarmup_R = {warmup}\ngen_period_rounds = 2\ngen_per_period = 40\n"
    ))
    .unwrap()
}

fn probs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 2..8).prop_filter("non-zero mass", |v| v.iter().sum::<f64>() > 1e-6).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sharpen_stays_on_simplex_and_keeps_argmax(p in probs(), z in 1.01f64..6.0) {
        let s = sharpen(&p, z);
        prop_assert!(is_simplex(s.probs()));
        prop_assert!(s.max() >= p.iter().cloned().fold(0.0, f64::max) - 1e-12);
        prop_assert_eq!(p[s.argmax()], p.iter().cloned().fold(0.0, f64::max));
    }

    #[test]
    fn softmax_and_weights_are_stochastic(v in prop::collection::vec(-20.0f64..20.0, 1..10)) {
        prop_assert!(is_simplex(&softmax(&v)));
        let accs: Vec<f64> = v.iter().map(|x| (x + 20.0) / 40.0).collect();
        prop_assert!(is_simplex(&adaptive_weights(&accs)));
    }

    #[test]
    fn round_weight_rows_sum_to_one(accs in prop::collection::vec(prop::option::weighted(0.8, 0.0f64..1.0), 10)) {
        for name in PRESETS {
            let t = Topology::preset(name).unwrap();
            for mode in [AggMode::Constant, AggMode::Adagen, AggMode::Adatest] {
                let w = round_weights(&t, mode, &accs);
                for i in 0..t.node_count() {
                    prop_assert!(is_simplex(w.weights(i)));
                }
            }
        }
    }

    #[test]
    fn thresholds_lie_in_zero_tau(
        own in prop::collection::vec(0usize..50, 4),
        others in prop::collection::vec(prop::collection::vec(0usize..50, 4), 0..4),
        tau in 0.05f64..1.0,
    ) {
        let own = QualifiedCounts(own);
        let mut hood: Vec<QualifiedCounts> = others.into_iter().map(QualifiedCounts).collect();
        hood.push(own.clone());
        let th = adaptive_threshold(&own, &hood, tau);
        prop_assert!(th.iter().all(|&x| (0.0..=tau).contains(&x)));
        let top = hood.iter().map(QualifiedCounts::max).max().unwrap();
        if top > 0 && own.max() == top {
            prop_assert_eq!(th[own.0.iter().position(|&s| s == top).unwrap()], tau);
        }
    }

    #[test]
    fn filter_is_sound(preds in prop::collection::vec(probs().prop_filter("4 classes", |p| p.len() == 4), 0..30),
                       th in prop::collection::vec(0.0f64..1.0, 4)) {
        let scores: Vec<SoftLabel> = preds.iter().map(|p| SoftLabel::new(p.clone())).collect();
        let unlabeled: Vec<Sample> = (0..scores.len()).map(|n| Sample::unlabeled(vec![n as f64])).collect();
        let set = filter_pseudo(&unlabeled, &scores, &th);
        for item in &set.items {
            prop_assert!(item.label.max() > th[item.class]);
            prop_assert_eq!(item.class, item.label.argmax());
            prop_assert_eq!(&item.features, &unlabeled[item.source].features);
        }
        let kept = scores.iter().filter(|p| p.max() > th[p.argmax()]).count();
        prop_assert_eq!(set.len(), kept);
        let counts = count_qualified(&scores, 4, 0.5);
        prop_assert!(counts.total() <= scores.len());
    }

    #[test]
    fn partition_conserves_samples(seed in 0u64..1000, alpha in 0.05f64..50.0, r in 0.01f64..0.5, preset in 0usize..4) {
        let topo = Topology::preset(PRESETS[preset]).unwrap();
        let spec = DatasetSpec { n: 300, ..DatasetSpec::default() };
        let ds = data::make_toy_dataset(&spec, seed).unwrap();
        let p = data::partition(&ds, &topo, spec.classes, &PartitionSpec { alpha, labeled_ratio: r }, seed).unwrap();
        let labeled: usize = p.clients.iter().map(|c| c.labeled.len()).sum();
        let total: usize = p.clients.iter().map(|c| c.len()).sum();
        prop_assert_eq!(total, ds.len());
        let pool = (r * ds.len() as f64).round() as usize;
        prop_assert_eq!(labeled, pool);
        let holders = topo.roles().iter().filter(|x| x.holds_labeled()).count();
        let mut hist = vec![0; spec.classes];
        for (c, role) in p.clients.iter().zip(topo.roles()) {
            prop_assert!(role.holds_labeled() || c.labeled.is_empty());
            prop_assert!(role.holds_unlabeled() || c.unlabeled.is_empty());
            if role.holds_labeled() && pool >= holders {
                prop_assert!(!c.labeled.is_empty());
            }
            prop_assert_eq!(c.unlabeled.len(), c.hidden_labels.len());
            prop_assert!(c.unlabeled.iter().all(|s| s.label.is_none()));
            for (k, v) in data::class_histogram(c, spec.classes).into_iter().enumerate() {
                hist[k] += v;
            }
        }
        let mut expect = vec![0; spec.classes];
        for s in &ds {
            expect[s.label.unwrap()] += 1;
        }
        prop_assert_eq!(hist, expect);
        for row in &p.proportions {
            prop_assert!(is_simplex(row));
        }
    }
}

#[test]
fn uniform_mixing_rows_match_degree() {
    for name in PRESETS {
        let t = Topology::preset(name).unwrap();
        let w = MixingWeights::uniform(&t);
        for i in 0..t.node_count() {
            assert!(w.weights(i).iter().all(|&x| x == 1.0 / (t.degree(i) + 1) as f64));
        }
    }
}

#[test]
fn reruns_are_byte_identical() {
    let cfg = small_config("semidfl", 2, 4);
    let a = run(&cfg, Some(1)).unwrap();
    let b = run(&cfg, Some(3)).unwrap();
    assert_eq!(report::metrics_csv(&a.rounds), report::metrics_csv(&b.rounds));
    assert_eq!(report::metrics_json(&a.rounds), report::metrics_json(&b.rounds));
}

#[test]
fn no_generated_data_before_warmup() {
    let cfg = small_config("semidfl", 3, 6);
    let mut sim = Simulation::from_config(&cfg, Some(1)).unwrap();
    for t in 1..=6 {
        let m = sim.step().clone();
        let generated = sim.clients().iter().map(|c| c.generated.len()).sum::<usize>();
        if t < 3 {
            assert!(!m.generated, "round {t}");
            assert_eq!(generated, 0, "round {t}");
            assert!(m.clients.iter().all(|c| c.a_i.is_none()), "round {t}");
        } else {
            assert_eq!(m.generated, t % 2 == 1, "round {t}");
            assert_eq!(generated, 10 * 40, "round {t}");
        }
    }
    assert_eq!(sim.history().len(), 6);
}

#[test]
fn baselines_never_generate() {
    for method in ["dfl_lb", "dfl_ub"] {
        let out = run(&small_config(method, 1, 3), Some(1)).unwrap();
        assert!(out.generation_rounds().is_empty());
        assert!(out.rounds.iter().flat_map(|r| &r.clients).all(|c| c.pl_count == 0 && c.a_i.is_none()));
    }
}
