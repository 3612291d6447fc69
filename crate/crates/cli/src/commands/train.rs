use std::time::Instant;

use serde::Serialize;
use sgm::trainer::{train, TrainReport};
use sgm::RngStream;

use super::{checkpoint_bytes, dataset_path, fit_standardizer, load_dataset, partition, standardized, Model, RunInfo};
use crate::config::RunConfig;
use crate::output::Outputs;
use crate::{CliError, Common};

#[derive(Serialize)]
struct Report<'a> {
    run: RunInfo<'a>,
    checkpoint_id: String,
    train_rows: usize,
    held_out_rows: usize,
    classes: usize,
    final_loss: f64,
    train: &'a TrainReport,
}

pub fn run(common: &Common, cfg: &RunConfig) -> Result<(), CliError> {
    let start = Instant::now();
    let data = load_dataset(dataset_path(common)?)?;
    let parts = partition(&data, cfg)?;
    let standardizer = fit_standardizer(cfg, &parts.train);
    let train_set = standardized(standardizer.as_ref(), &parts.train)?;
    let train_cfg = cfg.train_config(train_set.len(), train_set.num_classes());
    let (params, report) = train(&train_set, &train_cfg, &mut RngStream::new(cfg.seed))?;
    let model = Model::from_trained(params, standardizer);

    let mut out = Outputs::new(&common.out);
    out.add_bytes("checkpoint.json", checkpoint_bytes(&model.checkpoint()));
    out.add_report(
        "train_report.json",
        &Report {
            run: RunInfo::new("train", common, cfg),
            checkpoint_id: model.id.clone(),
            train_rows: parts.train.len(),
            held_out_rows: parts.test_indices.len(),
            classes: data.num_classes(),
            final_loss: report.final_loss(),
            train: &report,
        },
    )?;
    out.commit("train", start.elapsed().as_secs_f64())?;
    println!(
        "trained {} encoder for {} updates: final loss {:.6}, checkpoint {}",
        report.loss,
        report.loss_trace.len(),
        report.final_loss(),
        model.id
    );
    Ok(())
}
