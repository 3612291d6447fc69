use std::fmt::Write;
use std::time::Instant;

use ndarray::{Array2, Axis};
use serde::Serialize;
use sgm::clustering::{gmm_em, hard_assign, top_k_near_medoid, FitConfig};
use sgm::metrics::nmi;
use sgm::RngStream;

use super::{dataset_path, load_dataset, Model, RunInfo, SUMMARIZE_STREAM};
use crate::config::{RunConfig, SummarizeMode};
use crate::output::Outputs;
use crate::{CliError, Common};

#[derive(Debug, Serialize)]
struct Group {
    group_id: usize,
    size: usize,
    /// Class the group was fitted in (per-class mode) or its most common class.
    class: usize,
    medoid: usize,
    top_k: Vec<usize>,
}

#[derive(Serialize)]
struct Report<'a> {
    run: RunInfo<'a>,
    checkpoint_id: Option<String>,
    mode: SummarizeMode,
    groups_fitted: usize,
    nmi_vs_labels: f64,
    groups: Vec<Group>,
}

/// GMM hard assignment over `z`, empty components dropped and the rest
/// renumbered in component order.
fn fit_groups(z: &Array2<f64>, k: usize, rng: &mut RngStream, fit: &FitConfig) -> Result<Vec<usize>, CliError> {
    let k = k.min(z.nrows());
    let model = gmm_em(z.view(), k, rng, fit)?;
    let raw = hard_assign(&model);
    let mut occupied = vec![false; k];
    for &g in &raw {
        occupied[g] = true;
    }
    let mut remap = vec![0; k];
    for (next, (g, _)) in occupied.iter().enumerate().filter(|(_, &o)| o).enumerate() {
        remap[g] = next;
    }
    Ok(raw.into_iter().map(|g| remap[g]).collect())
}

pub fn run(common: &Common, cfg: &RunConfig) -> Result<(), CliError> {
    let start = Instant::now();
    let data = load_dataset(dataset_path(common)?)?;
    let (z, checkpoint_id) = match &common.checkpoint {
        Some(path) => {
            let model = Model::load(path)?;
            (model.embed(&data)?, Some(model.id))
        }
        None => {
            log::info!("no checkpoint given; clustering input features");
            (data.features().to_owned(), None)
        }
    };
    let fit = cfg.fit_config();
    let mut rng = RngStream::substream(cfg.seed, SUMMARIZE_STREAM);
    let c = data.num_classes();
    let labels = data.labels();

    let (assignments, group_class) = match cfg.summarize_mode {
        SummarizeMode::Global => {
            let k = cfg.groups.unwrap_or(c);
            if k == 0 {
                return Err(CliError::Usage("groups must be at least 1".into()));
            }
            let assignments = fit_groups(&z, k, &mut rng, &fit)?;
            let n_groups = assignments.iter().max().map_or(0, |m| m + 1);
            let mut votes = vec![vec![0usize; c]; n_groups];
            for (&g, &l) in assignments.iter().zip(labels) {
                votes[g][l] += 1;
            }
            // Most common class, lowest id on ties.
            let majority = votes
                .iter()
                .map(|v| (0..c).max_by_key(|&j| (v[j], std::cmp::Reverse(j))).unwrap_or(0))
                .collect();
            (assignments, majority)
        }
        SummarizeMode::PerClass => {
            if cfg.groups_per_class == 0 {
                return Err(CliError::Usage("groups_per_class must be at least 1".into()));
            }
            let mut assignments = vec![0; data.len()];
            let mut group_class = Vec::new();
            for (class, members) in data.class_members().into_iter().enumerate() {
                if members.is_empty() {
                    continue;
                }
                let zc = z.select(Axis(0), &members);
                let local = fit_groups(&zc, cfg.groups_per_class, &mut rng, &fit)?;
                let offset = group_class.len();
                let n_local = local.iter().max().map_or(0, |m| m + 1);
                for (&row, &g) in members.iter().zip(&local) {
                    assignments[row] = offset + g;
                }
                group_class.extend(std::iter::repeat_n(class, n_local));
            }
            (assignments, group_class)
        }
    };

    let mut groups = Vec::with_capacity(group_class.len());
    for (group_id, &class) in group_class.iter().enumerate() {
        let top_k = top_k_near_medoid(z.view(), &assignments, group_id, cfg.top_k)?;
        groups.push(Group {
            group_id,
            size: assignments.iter().filter(|&&g| g == group_id).count(),
            class,
            medoid: top_k[0],
            top_k,
        });
    }
    let agreement = nmi(&assignments, labels)?;
    let mut csv = String::from("sample_index,group_id\n");
    for (row, g) in assignments.iter().enumerate() {
        writeln!(csv, "{row},{g}").expect("write to string");
    }

    let mut out = Outputs::new(&common.out);
    out.add_bytes("groups.csv", csv.into_bytes());
    out.add_report(
        "summary.json",
        &Report {
            run: RunInfo::new("summarize", common, cfg),
            checkpoint_id,
            mode: cfg.summarize_mode,
            groups_fitted: groups.len(),
            nmi_vs_labels: agreement,
            groups,
        },
    )?;
    out.commit("summarize", start.elapsed().as_secs_f64())?;
    println!("{} groups, nmi against labels {agreement:.4}", group_class.len());
    Ok(())
}
