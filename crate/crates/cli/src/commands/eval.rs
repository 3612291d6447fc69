use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use sgm::clustering::kmeans;
use sgm::gaussian_manifold::estimate_class_means;
use sgm::metrics::{classification_report, gaussian_classify, knn_classify, nmi, retrieval_curve, ClassificationReport};
use sgm::{ClassGaussians, Dataset, RngStream};

use super::{checkpoint_path, dataset_path, load_dataset, partition, Model, RunInfo, EVAL_STREAM};
use crate::config::RunConfig;
use crate::output::Outputs;
use crate::{CliError, Common};

#[derive(Debug, Clone, Serialize)]
pub struct KmeansSummary {
    pub k: usize,
    pub inertia: f64,
    pub iterations: usize,
}

/// Everything measured on one query set. Headline classification numbers
/// come from the KNN classifier.
#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    pub nmi: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub recall_at_k: BTreeMap<usize, f64>,
    pub acc_at_k: BTreeMap<usize, f64>,
    pub seed: u64,
    pub retrieval_excludes_query: bool,
    pub knn_k: usize,
    pub knn: ClassificationReport,
    pub gaussian: ClassificationReport,
    pub class_gaussians: ClassGaussians,
    pub kmeans: KmeansSummary,
    pub query_rows: usize,
    pub reference_rows: usize,
}

/// Embeds both sets with `model` and scores `query` against `reference`.
pub fn evaluate(model: &Model, reference: &Dataset, query: &Dataset, cfg: &RunConfig) -> Result<Metrics, CliError> {
    if reference.num_classes() != query.num_classes() {
        return Err(CliError::Data(format!(
            "reference has {} classes but the query set has {}",
            reference.num_classes(),
            query.num_classes()
        )));
    }
    let c = query.num_classes();
    let ref_z = model.embed(reference)?;
    let query_z = model.embed(query)?;

    let curve = retrieval_curve(query_z.view(), query.labels(), &cfg.ks)?;
    let clusters = kmeans(
        query_z.view(),
        c,
        &mut RngStream::substream(cfg.seed, EVAL_STREAM),
        &cfg.fit_config(),
    )?;
    let nmi = nmi(&clusters.assignments, query.labels())?;

    let knn_k = cfg.knn_k.min(reference.len());
    let knn_preds = knn_classify(ref_z.view(), reference.labels(), query_z.view(), knn_k)?;
    let knn = classification_report(&knn_preds, query.labels(), c)?;

    let means = estimate_class_means(ref_z.view(), reference.labels(), c)?;
    let class_gaussians = match &cfg.priors {
        Some(p) => ClassGaussians::new(means, cfg.sigma, p.clone())?,
        None => ClassGaussians::uniform(means, cfg.sigma)?,
    };
    let gaussian_preds = gaussian_classify(query_z.view(), &class_gaussians)?;
    let gaussian = classification_report(&gaussian_preds, query.labels(), c)?;

    Ok(Metrics {
        nmi,
        accuracy: knn.accuracy,
        precision: knn.precision,
        recall: knn.recall,
        f1: knn.f1,
        recall_at_k: curve.ks.iter().copied().zip(curve.recall_at_k.iter().copied()).collect(),
        acc_at_k: curve.ks.iter().copied().zip(curve.acc_at_k.iter().copied()).collect(),
        seed: cfg.seed,
        retrieval_excludes_query: true,
        knn_k,
        knn,
        gaussian,
        class_gaussians,
        kmeans: KmeansSummary {
            k: c,
            inertia: clusters.inertia,
            iterations: clusters.iterations,
        },
        query_rows: query.len(),
        reference_rows: reference.len(),
    })
}

#[derive(Serialize)]
struct Report<'a> {
    run: RunInfo<'a>,
    checkpoint_id: String,
    #[serde(flatten)]
    metrics: Metrics,
}

pub fn run(common: &Common, reference: Option<&Path>, cfg: &RunConfig) -> Result<(), CliError> {
    let start = Instant::now();
    let data = load_dataset(dataset_path(common)?)?;
    let (reference, query) = match reference {
        Some(path) => (load_dataset(path)?, data),
        None => {
            let parts = partition(&data, cfg)?;
            let test = parts.test.ok_or_else(|| {
                CliError::Usage("eval needs a held-out split (test_fraction > 0) or --reference".into())
            })?;
            (parts.train, test)
        }
    };
    let model = match &common.checkpoint {
        Some(_) => Model::load(checkpoint_path(common)?)?,
        None => {
            log::warn!("no checkpoint given; evaluating a freshly initialized encoder");
            Model::fresh(&reference, cfg)?
        }
    };
    let metrics = evaluate(&model, &reference, &query, cfg)?;

    let mut out = Outputs::new(&common.out);
    out.add_report(
        "metrics.json",
        &Report {
            run: RunInfo::new("eval", common, cfg),
            checkpoint_id: model.id.clone(),
            metrics: metrics.clone(),
        },
    )?;
    out.commit("eval", start.elapsed().as_secs_f64())?;
    println!(
        "nmi {:.4}  knn accuracy {:.4}  f1 {:.4}  gaussian accuracy {:.4}",
        metrics.nmi, metrics.accuracy, metrics.f1, metrics.gaussian.accuracy
    );
    for (k, r) in &metrics.recall_at_k {
        println!("recall@{k} {r:.4}  acc@{k} {:.4}", metrics.acc_at_k[k]);
    }
    Ok(())
}
