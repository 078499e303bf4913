use std::collections::{BTreeMap, HashSet};

use mmrec_core::data::{build_interaction_matrix, FeatureMatrix};
use mmrec_core::models::graph::train_frozen_graph_rec_traced;
use mmrec_core::models::lightgcn::train_lightgcn_traced;
use mmrec_core::models::mf::train_bprmf_traced;
use mmrec_core::models::persist::{load_model, save_model, Manifest};
use mmrec_core::models::vbpr::train_vbpr_m_traced;
use mmrec_core::models::{build_item_graph, fit_itemknn, ItemGraph, MfParams, TrainingTrace, VbprScorer};
use mmrec_core::models::TrainedModel;
use mmrec_core::split::{remap_features, split, SplitConfig};
use mmrec_core::synthetic::{generate, SyntheticConfig};
use mmrec_core::{BprHyperParams, InteractionMatrix, ModelKind, Recommender};

struct Fixture {
    train: InteractionMatrix,
    features: Vec<FeatureMatrix>,
    graph: ItemGraph,
}

fn fixture() -> Fixture {
    let data = generate(&SyntheticConfig::default()).unwrap();
    let valid: HashSet<&str> = data.informative[0].row_ids().iter().map(String::as_str).collect();
    let interactions = data.interactions.filtered(|_, i| valid.contains(i));
    let bundle = split(&interactions, &SplitConfig::default()).unwrap();
    let train = build_interaction_matrix(&bundle.train, &bundle.index).unwrap();
    let features: Vec<FeatureMatrix> =
        data.informative.iter().map(|f| remap_features(f, &bundle.index).unwrap()).collect();
    let graph = build_item_graph(&features[0], 10);
    Fixture { train, features, graph }
}

fn hyper(reg: f64, seed: u64) -> BprHyperParams {
    BprHyperParams {
        latent_dim: 16,
        learning_rate: 0.05,
        reg,
        epochs: 30,
        batch_size: 128,
        seed,
        init_std: 0.1,
    }
}

#[derive(Debug)]
enum Trained {
    Mf(MfParams<f64>),
    Vbpr(VbprScorer<f64>),
}

impl Trained {
    fn norm(&self) -> f64 {
        match self {
            Trained::Mf(p) => p.squared_norm(),
            Trained::Vbpr(s) => {
                s.mf.squared_norm()
                    + s.mm.item_proj.iter().map(|m| m.squared_norm()).sum::<f64>()
                    + s.mm.user_factors.iter().map(|m| m.squared_norm()).sum::<f64>()
            }
        }
    }
}

fn train(kind: ModelKind, fx: &Fixture, hp: &BprHyperParams) -> (Trained, TrainingTrace<f64>) {
    match kind {
        ModelKind::Bprmf => {
            let (p, t) = train_bprmf_traced(&fx.train, hp).unwrap();
            (Trained::Mf(p), t)
        }
        ModelKind::LightGcn => {
            let (p, t) = train_lightgcn_traced(&fx.train, hp, 2).unwrap();
            (Trained::Mf(p), t)
        }
        ModelKind::FrozenGraph => {
            let (p, t) = train_frozen_graph_rec_traced(&fx.train, &fx.graph, hp, 1).unwrap();
            (Trained::Mf(p), t)
        }
        ModelKind::Vbpr => {
            let ((mf, mm), t) = train_vbpr_m_traced(&fx.train, &fx.features, hp).unwrap();
            (Trained::Vbpr(VbprScorer::new(mf, mm, &fx.features).unwrap()), t)
        }
        ModelKind::ItemKnn => unreachable!(),
    }
}

const BPR_KINDS: [ModelKind; 4] = [ModelKind::Bprmf, ModelKind::LightGcn, ModelKind::FrozenGraph, ModelKind::Vbpr];

#[test]
fn training_loss_goes_down() {
    let fx = fixture();
    for kind in BPR_KINDS {
        let (_, trace) = train(kind, &fx, &hyper(1e-4, 3));
        let n = trace.epoch_loss.len();
        let w = (n / 10).max(1);
        let head: f64 = trace.epoch_loss[..w].iter().sum::<f64>() / w as f64;
        let tail: f64 = trace.epoch_loss[n - w..].iter().sum::<f64>() / w as f64;
        assert!(tail < head, "{kind}: first {head}, last {tail}");
        assert!(trace.epoch_loss.iter().all(|l| l.is_finite()));
    }
}

#[test]
fn heavier_regularization_shrinks_parameters() {
    let fx = fixture();
    for kind in BPR_KINDS {
        let light = train(kind, &fx, &hyper(1e-5, 5)).0.norm();
        let heavy = train(kind, &fx, &hyper(0.05, 5)).0.norm();
        assert!(heavy < light, "{kind}: reg 0.05 norm {heavy} vs reg 1e-5 norm {light}");
    }
}

#[test]
fn training_is_reproducible_per_seed() {
    let fx = fixture();
    for kind in BPR_KINDS {
        let a = train(kind, &fx, &hyper(1e-4, 11));
        let b = train(kind, &fx, &hyper(1e-4, 11));
        let c = train(kind, &fx, &hyper(1e-4, 12));
        assert_eq!(a.1, b.1, "{kind}");
        assert_eq!(a.0.norm().to_bits(), b.0.norm().to_bits(), "{kind}");
        assert_ne!(a.1, c.1, "{kind}: seeds 11 and 12 gave the same trace");
    }
}

#[test]
fn itemknn_scores_sum_neighbor_similarity() {
    let fx = fixture();
    let knn = fit_itemknn::<f64>(&fx.train, 5).unwrap();
    let dense = knn.to_dense();
    for i in 0..fx.train.num_items() {
        assert!(knn.neighbors(i).len() <= 5);
        assert!(knn.neighbors(i).iter().all(|&(j, s)| j != i && s > 0.0));
    }
    for u in (0..fx.train.num_users()).step_by(17) {
        let scores = knn.score_all(u).unwrap();
        for (j, &got) in scores.iter().enumerate() {
            let want: f64 = fx.train.user_items(u).iter().map(|&i| dense[j][i]).sum();
            assert!((got - want).abs() < 1e-12, "user {u} item {j}: {got} vs {want}");
        }
    }
}

fn manifest(name: &str) -> Manifest {
    Manifest {
        model: ModelKind::Bprmf,
        name: name.into(),
        seed: 1,
        hyper: Some(hyper(1e-4, 1)),
        settings: BTreeMap::new(),
        modalities: Vec::new(),
        blocks: Vec::new(),
    }
}

#[test]
fn saved_models_score_like_the_originals() {
    let fx = fixture();
    let hp = hyper(1e-4, 2);
    let models = vec![
        TrainedModel::ItemKnn(fit_itemknn(&fx.train, 10).unwrap()),
        match train(ModelKind::LightGcn, &fx, &hp).0 {
            Trained::Mf(params) => TrainedModel::Factors { kind: ModelKind::LightGcn, params },
            Trained::Vbpr(_) => unreachable!(),
        },
        match train(ModelKind::Vbpr, &fx, &hp).0 {
            Trained::Vbpr(s) => TrainedModel::Vbpr(s),
            Trained::Mf(_) => unreachable!(),
        },
    ];
    let dir = tempfile::tempdir().unwrap();
    for model in models {
        let kind = model.kind();
        let path = dir.path().join(kind.as_str());
        save_model(&model, manifest(kind.as_str()), &path).unwrap();
        let (m, loaded) = load_model::<f64>(&path, &fx.train).unwrap();
        assert_eq!(m.model, kind);
        for u in [0, 7, 42] {
            let a = model.score_all(u).unwrap();
            let b = loaded.score_all(u).unwrap();
            for (x, y) in a.iter().zip(&b) {
                // parameters are stored as f32
                assert!((x - y).abs() <= 1e-5 * x.abs().max(1.0), "{kind} user {u}: {x} vs {y}");
            }
        }
    }
}
