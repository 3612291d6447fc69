use std::time::Instant;

use serde::Serialize;
use sgm::EmbeddingTable;

use super::{checkpoint_path, dataset_path, load_dataset, Model, RunInfo};
use crate::config::RunConfig;
use crate::output::Outputs;
use crate::{CliError, Common};

#[derive(Serialize)]
struct Report<'a> {
    run: RunInfo<'a>,
    checkpoint_id: String,
    rows: usize,
    embedding_dim: usize,
}

pub fn run(common: &Common, cfg: &RunConfig) -> Result<(), CliError> {
    let start = Instant::now();
    let data = load_dataset(dataset_path(common)?)?;
    let model = Model::load(checkpoint_path(common)?)?;
    let values = model.embed(&data)?;
    let table = EmbeddingTable {
        ids: (0..data.len()).collect(),
        source: model.id.clone(),
        values,
    };
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;

    let mut out = Outputs::new(&common.out);
    out.add_bytes("embeddings.csv", csv);
    out.add_bytes("embeddings.meta.json", table.meta_json().into_bytes());
    out.add_report(
        "embed_report.json",
        &Report {
            run: RunInfo::new("embed", common, cfg),
            checkpoint_id: model.id,
            rows: table.values.nrows(),
            embedding_dim: table.values.ncols(),
        },
    )?;
    out.commit("embed", start.elapsed().as_secs_f64())?;
    println!("embedded {} rows into {} dimensions", table.values.nrows(), table.values.ncols());
    Ok(())
}
