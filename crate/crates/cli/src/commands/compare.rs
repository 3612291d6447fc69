use std::time::Instant;

use serde::Serialize;
use sgm::trainer::{train, LossKind, TrainReport};
use sgm::RngStream;

use super::eval::{evaluate, Metrics};
use super::{checkpoint_bytes, dataset_path, fit_standardizer, load_dataset, partition, standardized, Model, RunInfo};
use crate::config::RunConfig;
use crate::output::Outputs;
use crate::{CliError, Common};

#[derive(Serialize)]
struct Arm {
    loss: LossKind,
    checkpoint_id: String,
    final_loss: f64,
    train: TrainReport,
    metrics: Metrics,
}

/// One row of the side-by-side retrieval table.
#[derive(Serialize)]
struct CurveRow {
    k: usize,
    sgm_recall: f64,
    triplet_recall: f64,
    sgm_acc: f64,
    triplet_acc: f64,
}

#[derive(Serialize)]
struct Report<'a> {
    run: RunInfo<'a>,
    train_rows: usize,
    test_rows: usize,
    curves: Vec<CurveRow>,
    sgm: Arm,
    triplet: Arm,
}

/// Trains both losses from the same seed on the same split and scores both
/// on the held-out rows.
pub fn run(common: &Common, cfg: &RunConfig) -> Result<(), CliError> {
    let start = Instant::now();
    let data = load_dataset(dataset_path(common)?)?;
    let parts = partition(&data, cfg)?;
    let test = parts
        .test
        .as_ref()
        .ok_or_else(|| CliError::Usage("compare needs a held-out split (test_fraction > 0)".into()))?;
    let standardizer = fit_standardizer(cfg, &parts.train);
    let train_set = standardized(standardizer.as_ref(), &parts.train)?;

    let mut arms = Vec::with_capacity(2);
    for loss in [LossKind::Sgm, LossKind::Triplet] {
        let mut train_cfg = cfg.train_config(train_set.len(), train_set.num_classes());
        train_cfg.loss = loss;
        let (params, report) = train(&train_set, &train_cfg, &mut RngStream::new(cfg.seed))?;
        let model = Model::from_trained(params, standardizer.clone());
        let metrics = evaluate(&model, &parts.train, test, cfg)?;
        println!(
            "{loss:<8} nmi {:.4}  knn accuracy {:.4}  f1 {:.4}  recall@1 {:.4}",
            metrics.nmi,
            metrics.accuracy,
            metrics.f1,
            metrics.recall_at_k.values().next().copied().unwrap_or(f64::NAN)
        );
        arms.push((model, report, metrics));
    }

    let mut out = Outputs::new(&common.out);
    let mut packed = Vec::with_capacity(2);
    for (model, report, metrics) in arms {
        let name = format!("{}_checkpoint.json", report.loss);
        out.add_bytes(&name, checkpoint_bytes(&model.checkpoint()));
        packed.push(Arm {
            loss: report.loss,
            checkpoint_id: model.id,
            final_loss: report.final_loss(),
            train: report,
            metrics,
        });
    }
    let triplet = packed.pop().expect("two arms");
    let sgm = packed.pop().expect("two arms");
    let curves = cfg
        .ks
        .iter()
        .map(|&k| CurveRow {
            k,
            sgm_recall: sgm.metrics.recall_at_k[&k],
            triplet_recall: triplet.metrics.recall_at_k[&k],
            sgm_acc: sgm.metrics.acc_at_k[&k],
            triplet_acc: triplet.metrics.acc_at_k[&k],
        })
        .collect();
    out.add_report(
        "compare.json",
        &Report {
            run: RunInfo::new("compare", common, cfg),
            train_rows: parts.train.len(),
            test_rows: test.len(),
            curves,
            sgm,
            triplet,
        },
    )?;
    out.commit("compare", start.elapsed().as_secs_f64())?;
    Ok(())
}
