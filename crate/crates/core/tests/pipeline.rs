use ndarray::Array2;
use proptest::prelude::*;
use sgm::clustering::{kmeans, FitConfig};
use sgm::data::{split, synth_blobs};
use sgm::gaussian_manifold::estimate_class_means;
use sgm::metrics::{classification_report, gaussian_classify, knn_classify, nmi, retrieval_curve, DEFAULT_KS};
use sgm::subspace::{train_subspace, SubspaceConfig};
use sgm::trainer::{train, LossKind, TrainConfig};
use sgm::{BlobSpec, Checkpoint, ClassGaussians, Dataset, EmbeddingTable, RngStream, Standardizer};

fn blobs(classes: usize, per_class: usize, dim: usize, separation: f64, seed: u64) -> Dataset {
    let spec = BlobSpec {
        classes,
        per_class,
        dim,
        separation,
        sub_blobs: 1,
        sub_separation: 0.0,
    };
    synth_blobs(&spec, &mut RngStream::new(seed)).unwrap().dataset
}

fn quick(loss: LossKind) -> TrainConfig {
    TrainConfig {
        updates: 300,
        learning_rate: 1e-3,
        hidden: vec![16],
        embedding_dim: 8,
        loss,
        triplets_per_batch: 64,
        ..TrainConfig::default()
    }
}

#[test]
fn train_embed_and_score() {
    let data = blobs(4, 60, 10, 7.0, 1);
    let parts = split(&data, (0.75, 0.25), &mut RngStream::new(2)).unwrap();
    for loss in [LossKind::Sgm, LossKind::Triplet] {
        let config = TrainConfig {
            hidden: vec![],
            ..quick(loss)
        };
        let (params, report) = train(&parts.train, &config, &mut RngStream::new(3)).unwrap();
        assert_eq!(report.loss, loss);
        let train_z = params.embed(parts.train.features()).unwrap();
        let test_z = params.embed(parts.test.features()).unwrap();

        let preds = knn_classify(train_z.view(), parts.train.labels(), test_z.view(), 11).unwrap();
        let knn = classification_report(&preds, parts.test.labels(), 4).unwrap();
        assert!(knn.accuracy > 0.9, "{loss} knn {}", knn.accuracy);

        let means = estimate_class_means(train_z.view(), parts.train.labels(), 4).unwrap();
        let g = ClassGaussians::uniform(means, 0.5).unwrap();
        let gauss = classification_report(&gaussian_classify(test_z.view(), &g).unwrap(), parts.test.labels(), 4).unwrap();
        assert!(gauss.accuracy > 0.9, "{loss} gaussian {}", gauss.accuracy);

        let clusters = kmeans(test_z.view(), 4, &mut RngStream::new(4), &FitConfig { restarts: 5, ..FitConfig::default() }).unwrap();
        let score = nmi(&clusters.assignments, parts.test.labels()).unwrap();
        assert!(score > 0.8, "{loss} nmi {score}");

        let curve = retrieval_curve(test_z.view(), parts.test.labels(), &DEFAULT_KS[..5]).unwrap();
        assert!(curve.recall_at_k.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn same_seed_same_model() {
    let data = blobs(3, 30, 5, 3.0, 8);
    let run = || train(&data, &quick(LossKind::Sgm), &mut RngStream::new(9)).unwrap();
    let (a, ra) = run();
    let (b, rb) = run();
    assert_eq!(a, b);
    assert_eq!(ra.loss_trace, rb.loss_trace);
    let (c, _) = train(&data, &quick(LossKind::Sgm), &mut RngStream::new(10)).unwrap();
    assert_ne!(a, c);
}

#[test]
fn checkpoint_and_tables_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = blobs(3, 20, 4, 3.0, 5);
    let (params, _) = train(&data, &quick(LossKind::Sgm), &mut RngStream::new(6)).unwrap();
    let ckpt = Checkpoint::new(&params, Some(Standardizer::fit(data.features())));
    let path = dir.path().join("ckpt.json");
    ckpt.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded.id(), ckpt.id());
    let again = dir.path().join("again.json");
    loaded.save(&again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    let restored = loaded.encoder().unwrap();
    assert_eq!(restored.embed(data.features()).unwrap(), params.embed(data.features()).unwrap());

    let csv = dir.path().join("data.csv");
    data.save_csv(&csv).unwrap();
    let back = Dataset::load_csv(&csv).unwrap();
    assert_eq!(back.features(), data.features());
    assert_eq!(back.labels(), data.labels());

    let table = EmbeddingTable {
        ids: (0..data.len()).collect(),
        values: params.embed(data.features()).unwrap(),
        source: ckpt.id(),
    };
    let emb = dir.path().join("emb.csv");
    table.save(&emb).unwrap();
    assert_eq!(EmbeddingTable::load(&emb).unwrap(), table);
}

#[test]
fn subspace_labels_refine_the_classes() {
    let spec = BlobSpec {
        classes: 3,
        per_class: 90,
        dim: 8,
        separation: 12.0,
        sub_blobs: 2,
        sub_separation: 6.0,
    };
    let blobs = synth_blobs(&spec, &mut RngStream::new(12)).unwrap();
    let config = SubspaceConfig {
        levels: 3,
        min_members: Some(30),
        train: TrainConfig {
            updates: 100,
            hidden: vec![],
            embedding_dim: 8,
            ..TrainConfig::default()
        },
        ..SubspaceConfig::default()
    };
    let outcome = train_subspace(&blobs.dataset, &config, &mut RngStream::new(13)).unwrap();
    assert_eq!(outcome.levels.len(), 2);
    assert_eq!(outcome.lineage.collapse(&outcome.labels).unwrap(), blobs.dataset.labels());
    let full = outcome.full_lineage(3);
    assert_eq!(full.len(), 3 + outcome.levels.iter().map(|l| l.lineage.num_subclasses()).sum::<usize>());
    for record in &outcome.levels {
        for count in record.lineage.counts_per_class(3) {
            assert!((1..=record.level).contains(&count));
        }
    }
    let score = nmi(&outcome.labels, &blobs.sub_blob).unwrap();
    assert!(score > 0.8, "nmi {score}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn lineage_always_collapses_to_the_original_labels(
        classes in 1usize..4,
        per_class in 4usize..30,
        levels in 1usize..4,
        min_members in 2usize..10,
        seed in 0u64..1000,
    ) {
        let data = blobs(classes, per_class, 3, 2.0, seed);
        let config = SubspaceConfig {
            levels,
            min_members: Some(min_members),
            train: TrainConfig {
                per_class: 4,
                updates: 5,
                hidden: vec![4],
                embedding_dim: 3,
                ..TrainConfig::default()
            },
            ..SubspaceConfig::default()
        };
        let outcome = train_subspace(&data, &config, &mut RngStream::new(seed)).unwrap();
        prop_assert_eq!(outcome.lineage.collapse(&outcome.labels).unwrap(), data.labels().to_vec());
        let k = outcome.lineage.num_subclasses();
        let mut seen = vec![false; k];
        for &l in &outcome.labels {
            seen[l] = true;
        }
        prop_assert!(seen.iter().all(|&s| s));
        for count in outcome.lineage.counts_per_class(classes) {
            prop_assert!(count >= 1 && count <= levels.max(1));
            prop_assert!(count == 1 || count <= per_class / min_members);
        }
    }

    #[test]
    fn embeddings_are_finite_for_any_input_scale(scale in -6i32..6, seed in 0u64..100) {
        let data = blobs(2, 10, 4, 1.0, seed);
        let x = data.features().mapv(|v| v * 10f64.powi(scale));
        let params = sgm::trainer::init_encoder(4, &quick(LossKind::Sgm), &mut RngStream::new(seed)).unwrap();
        let z: Array2<f64> = params.embed(x.view()).unwrap();
        prop_assert!(z.iter().all(|v| v.is_finite()));
    }
}
