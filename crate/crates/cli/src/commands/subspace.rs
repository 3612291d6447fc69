use std::fmt::Write;
use std::time::Instant;

use serde::Serialize;
use sgm::subspace::{train_subspace, LevelRecord, LineageEntry};
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
    classes: usize,
    min_members: usize,
    subclasses: usize,
    subclasses_per_class: Vec<usize>,
    /// Samples whose sub-class does not collapse back to their own class.
    lineage_mismatches: usize,
    levels: &'a [LevelRecord],
}

pub fn run(common: &Common, cfg: &RunConfig) -> Result<(), CliError> {
    let start = Instant::now();
    let data = load_dataset(dataset_path(common)?)?;
    let parts = partition(&data, cfg)?;
    let standardizer = fit_standardizer(cfg, &parts.train);
    let train_set = standardized(standardizer.as_ref(), &parts.train)?;
    let c = train_set.num_classes();
    let sub_cfg = cfg.subspace_config(train_set.len(), c);
    let outcome = train_subspace(&train_set, &sub_cfg, &mut RngStream::new(cfg.seed))?;

    let collapsed = outcome.lineage.collapse(&outcome.labels)?;
    let mismatches = collapsed.iter().zip(train_set.labels()).filter(|(a, b)| a != b).count();
    let lineage: Vec<LineageEntry> = outcome.full_lineage(c);
    let mut csv = String::from("sample_index,subclass_id\n");
    for (&row, &sub) in parts.train_indices.iter().zip(&outcome.labels) {
        writeln!(csv, "{row},{sub}").expect("write to string");
    }
    let model = Model::from_trained(outcome.params, standardizer);

    let mut out = Outputs::new(&common.out);
    out.add_bytes("checkpoint.json", checkpoint_bytes(&model.checkpoint()));
    out.add_report("lineage.json", &lineage)?;
    out.add_bytes("sublabels.csv", csv.into_bytes());
    out.add_report(
        "subspace_report.json",
        &Report {
            run: RunInfo::new("subspace", common, cfg),
            checkpoint_id: model.id.clone(),
            train_rows: train_set.len(),
            classes: c,
            min_members: sub_cfg.min_members(),
            subclasses: outcome.lineage.num_subclasses(),
            subclasses_per_class: outcome.lineage.counts_per_class(c),
            lineage_mismatches: mismatches,
            levels: &outcome.levels,
        },
    )?;
    out.commit("subspace", start.elapsed().as_secs_f64())?;
    println!(
        "{} sub-classes over {c} classes after {} level(s); lineage mismatches {mismatches}",
        outcome.lineage.num_subclasses(),
        sub_cfg.levels
    );
    Ok(())
}
