use std::time::Instant;

use serde::Serialize;
use sgm::metrics::nearest_neighbors;

use super::{checkpoint_path, dataset_path, load_dataset, Model, RunInfo};
use crate::config::RunConfig;
use crate::output::Outputs;
use crate::{CliError, Common};

#[derive(Debug, Serialize)]
struct Neighbor {
    index: usize,
    label: usize,
    distance: f64,
}

#[derive(Debug, Serialize)]
struct QueryResult {
    query: usize,
    label: usize,
    neighbors: Vec<Neighbor>,
}

#[derive(Serialize)]
struct Report<'a> {
    run: RunInfo<'a>,
    checkpoint_id: String,
    k: usize,
    queries: Vec<QueryResult>,
}

pub fn run(common: &Common, queries: &[usize], k: Option<usize>, cfg: &RunConfig) -> Result<(), CliError> {
    let start = Instant::now();
    let k = k.unwrap_or(cfg.retrieve_k);
    if k == 0 {
        return Err(CliError::Usage("K must be at least 1".into()));
    }
    let data = load_dataset(dataset_path(common)?)?;
    if let Some(&bad) = queries.iter().find(|&&q| q >= data.len()) {
        return Err(CliError::Usage(format!(
            "unknown query id {bad}: the dataset has {} rows",
            data.len()
        )));
    }
    if k >= data.len() {
        return Err(CliError::Usage(format!(
            "K = {k} needs more than {} rows once the query is excluded",
            data.len()
        )));
    }
    let model = Model::load(checkpoint_path(common)?)?;
    let z = model.embed(&data)?;
    let labels = data.labels();
    let results: Vec<QueryResult> = queries
        .iter()
        .map(|&q| QueryResult {
            query: q,
            label: labels[q],
            neighbors: nearest_neighbors(z.view(), z.row(q), k, Some(q))
                .into_iter()
                .map(|(index, d2)| Neighbor {
                    index,
                    label: labels[index],
                    distance: d2.sqrt(),
                })
                .collect(),
        })
        .collect();
    for r in &results {
        let ids: Vec<String> = r
            .neighbors
            .iter()
            .map(|n| format!("{}(class {}, {:.4})", n.index, n.label, n.distance))
            .collect();
        println!("query {} (class {}): {}", r.query, r.label, ids.join(" "));
    }

    let mut out = Outputs::new(&common.out);
    out.add_report(
        "retrieval.json",
        &Report {
            run: RunInfo::new("retrieve", common, cfg),
            checkpoint_id: model.id,
            k,
            queries: results,
        },
    )?;
    out.commit("retrieve", start.elapsed().as_secs_f64())?;
    Ok(())
}
