use std::fmt::Write;
use std::time::Instant;

use clap::Args;
use serde::Serialize;
use sgm::data::{synth_blobs, BlobSpec};
use sgm::RngStream;

use super::RunInfo;
use crate::config::RunConfig;
use crate::output::Outputs;
use crate::{CliError, Common};

#[derive(Debug, Clone, Args)]
pub struct BlobArgs {
    #[arg(long, default_value_t = 8)]
    pub classes: usize,
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    /// Spacing of the class centers.
    #[arg(long, default_value_t = 5.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1)]
    pub sub_blobs: usize,
    /// Spacing of the sub-blob centers around their class center.
    #[arg(long, default_value_t = 2.0)]
    pub sub_separation: f64,
    /// File stem: writes `<name>.csv` and `<name>_truth.csv`.
    #[arg(long, default_value = "blobs")]
    pub name: String,
}

#[derive(Serialize)]
struct Report<'a> {
    run: RunInfo<'a>,
    spec: &'a BlobSpec,
    rows: usize,
    class_centers: Vec<Vec<f64>>,
    sub_blob_centers: Vec<Vec<f64>>,
}

pub fn run(common: &Common, args: &BlobArgs, cfg: &RunConfig) -> Result<(), CliError> {
    let start = Instant::now();
    let spec = BlobSpec {
        classes: args.classes,
        per_class: args.per_class,
        dim: args.dim,
        separation: args.separation,
        sub_blobs: args.sub_blobs,
        sub_separation: args.sub_separation,
    };
    let blobs = synth_blobs(&spec, &mut RngStream::new(cfg.seed))?;
    let mut data = Vec::new();
    blobs
        .dataset
        .write_csv(&mut data)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let mut truth = String::from("sample_index,class,sub_blob\n");
    for (i, (&class, &sub)) in blobs.dataset.labels().iter().zip(&blobs.sub_blob).enumerate() {
        writeln!(truth, "{i},{class},{sub}").expect("write to string");
    }
    let rows = |m: &ndarray::Array2<f64>| m.rows().into_iter().map(|r| r.to_vec()).collect::<Vec<_>>();

    let mut out = Outputs::new(&common.out);
    out.add_bytes(&format!("{}.csv", args.name), data);
    out.add_bytes(&format!("{}_truth.csv", args.name), truth.into_bytes());
    out.add_report(
        &format!("{}_report.json", args.name),
        &Report {
            run: RunInfo::new("synth", common, cfg),
            spec: &spec,
            rows: blobs.dataset.len(),
            class_centers: rows(&blobs.class_centers),
            sub_blob_centers: rows(&blobs.sub_blob_centers),
        },
    )?;
    out.commit("synth", start.elapsed().as_secs_f64())?;
    println!(
        "wrote {} rows of {} features over {} classes",
        blobs.dataset.len(),
        spec.dim,
        spec.classes
    );
    Ok(())
}
