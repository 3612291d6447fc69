//! Gaussian mixture sub-spaces: alternate SGM training on the current
//! sub-class labels with per-class EM splits, one level at a time.

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::clustering::{gmm_em, hard_assign, FitConfig};
use crate::data::Dataset;
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::trainer::{init_encoder, train_from, TrainConfig, TrainReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubspaceConfig {
    /// Maximum subdivision level `L`; level `l` allows up to `l` sub-classes
    /// per original class.
    pub levels: usize,
    /// Minimum members per sub-class (`Mc`); `None` means `2 * per_class`.
    pub min_members: Option<usize>,
    pub train: TrainConfig,
    /// Keep the encoder between levels instead of re-initializing it.
    pub warm_start: bool,
    pub em: FitConfig,
}

impl Default for SubspaceConfig {
    fn default() -> Self {
        Self {
            levels: 5,
            min_members: None,
            train: TrainConfig::default(),
            warm_start: true,
            em: FitConfig::default(),
        }
    }
}

impl SubspaceConfig {
    pub fn min_members(&self) -> usize {
        self.min_members.unwrap_or(2 * self.train.per_class)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 {
            return Err(Error::contract("levels must be at least 1"));
        }
        if self.min_members() == 0 {
            return Err(Error::contract("min_members must be at least 1"));
        }
        self.train.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageEntry {
    pub subclass_id: usize,
    /// Level at which the sub-class was created; 1 for the original classes.
    pub level: usize,
    pub parent_class: usize,
    /// EM component inside the parent class (after dropping empty ones).
    pub component_index: usize,
}

/// Sub-class table for one level. Entry `i` describes sub-class `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelLineage {
    pub entries: Vec<LineageEntry>,
}

impl LabelLineage {
    /// Level 1: every original class is its own sub-class.
    pub fn identity(num_classes: usize) -> Self {
        Self {
            entries: (0..num_classes)
                .map(|j| LineageEntry {
                    subclass_id: j,
                    level: 1,
                    parent_class: j,
                    component_index: 0,
                })
                .collect(),
        }
    }

    pub fn num_subclasses(&self) -> usize {
        self.entries.len()
    }

    pub fn parent(&self, subclass: usize) -> Option<usize> {
        self.entries.get(subclass).map(|e| e.parent_class)
    }

    /// Maps sub-class labels back to original classes.
    pub fn collapse(&self, labels: &[usize]) -> Result<Vec<usize>> {
        labels
            .iter()
            .map(|&l| {
                self.parent(l)
                    .ok_or_else(|| Error::contract(format!("sub-class {l} is not in the lineage")))
            })
            .collect()
    }

    /// Number of sub-classes under each original class.
    pub fn counts_per_class(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes];
        for e in &self.entries {
            counts[e.parent_class] += 1;
        }
        counts
    }
}

fn em_stream_id(level: usize, class: usize) -> u64 {
    (1 << 63) | ((level as u64) << 32) | class as u64
}

/// One split level. Members of each original class get
/// `min(level, |Z_c| / min_members)` (at least 1) EM components; sub-class
/// ids are `g + k` with `k` the running offset over classes. Components
/// left empty by the hard assignment are dropped so ids stay contiguous.
///
/// EM for class `c` draws from the substream `(seed, level, c)`.
pub fn split_classes(
    z: ArrayView2<f64>,
    labels: &[usize],
    lineage: &LabelLineage,
    level: usize,
    min_members: usize,
    seed: u64,
    em: &FitConfig,
) -> Result<(Vec<usize>, LabelLineage)> {
    if z.nrows() != labels.len() {
        return Err(Error::contract(format!("{} embeddings for {} labels", z.nrows(), labels.len())));
    }
    if level == 0 || min_members == 0 {
        return Err(Error::contract("level and min_members must be at least 1"));
    }
    let parents = lineage.collapse(labels)?;
    let num_classes = lineage.entries.iter().map(|e| e.parent_class + 1).max().unwrap_or(0);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &p) in parents.iter().enumerate() {
        members[p].push(i);
    }
    let mut new_labels = vec![0; labels.len()];
    let mut entries = Vec::new();
    let mut k = 0;
    for (class, idx) in members.iter().enumerate() {
        if idx.is_empty() {
            return Err(Error::MissingClass { class });
        }
        let zc = z.select(Axis(0), idx);
        let mut l_hat = level.min(idx.len() / min_members).max(1);
        if l_hat > 1 && zc.rows().into_iter().all(|r| r == zc.row(0)) {
            log::warn!("level {level}: class {class} embeddings are identical; keeping one component");
            l_hat = 1;
        }
        let assignment = if l_hat == 1 {
            vec![0; idx.len()]
        } else {
            let mut rng = RngStream::substream(seed, em_stream_id(level, class));
            let model = gmm_em(zc.view(), l_hat, &mut rng, em)?;
            hard_assign(&model)
        };
        let mut occupied = vec![false; l_hat];
        for &g in &assignment {
            occupied[g] = true;
        }
        let mut remap = vec![0; l_hat];
        let mut used = 0;
        for g in (0..l_hat).filter(|&g| occupied[g]) {
            remap[g] = used;
            used += 1;
        }
        if used < l_hat {
            log::info!("level {level}: class {class} kept {used} of {l_hat} components");
        }
        for g in 0..used {
            entries.push(LineageEntry {
                subclass_id: k + g,
                level,
                parent_class: class,
                component_index: g,
            });
        }
        for (&i, &g) in idx.iter().zip(&assignment) {
            new_labels[i] = k + remap[g];
        }
        k += used;
    }
    Ok((new_labels, LabelLineage { entries }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: usize,
    /// Sub-classes the encoder was trained on at this level.
    pub trained_subclasses: usize,
    pub report: TrainReport,
    /// Lineage produced by this level's split.
    pub lineage: LabelLineage,
}

#[derive(Debug, Clone)]
pub struct SubspaceOutcome {
    pub params: EncoderParams,
    pub labels: Vec<usize>,
    pub lineage: LabelLineage,
    pub levels: Vec<LevelRecord>,
}

impl SubspaceOutcome {
    /// Every level's lineage entries, level 1 first.
    pub fn full_lineage(&self, num_classes: usize) -> Vec<LineageEntry> {
        let mut all = LabelLineage::identity(num_classes).entries;
        for record in &self.levels {
            all.extend(record.lineage.entries.iter().copied());
        }
        all
    }
}

/// Runs levels `2..=L`: train on the current sub-labels, embed everything,
/// split every original class. `L = 1` returns the initial encoder and the
/// original labels.
///
/// The encoder is initialized from `rng` first; one further draw seeds the
/// EM substreams; training then consumes `rng` level by level.
pub fn train_subspace(dataset: &Dataset, config: &SubspaceConfig, rng: &mut RngStream) -> Result<SubspaceOutcome> {
    config.validate()?;
    let c = dataset.num_classes();
    let mut params = init_encoder(dataset.dim(), &config.train, rng)?;
    let em_seed = rng.next_u64();
    let mut labels = dataset.labels().to_vec();
    let mut lineage = LabelLineage::identity(c);
    let mut levels = Vec::new();
    for level in 2..=config.levels {
        let mut step = || -> Result<(EncoderParams, Vec<usize>, LevelRecord)> {
            let current = dataset.relabeled(labels.clone(), lineage.num_subclasses())?;
            let start = if config.warm_start || levels.is_empty() {
                params.clone()
            } else {
                init_encoder(dataset.dim(), &config.train, rng)?
            };
            let (trained, report) = train_from(start, &current, &config.train, rng)?;
            let z = trained.embed(dataset.features())?;
            let (next, next_lineage) = split_classes(
                z.view(),
                &labels,
                &lineage,
                level,
                config.min_members(),
                em_seed,
                &config.em,
            )?;
            let record = LevelRecord {
                level,
                trained_subclasses: lineage.num_subclasses(),
                report,
                lineage: next_lineage,
            };
            Ok((trained, next, record))
        };
        let (trained, next, record) = step().map_err(|e| e.at_level(level))?;
        log::info!(
            "level {level}: {} sub-classes from {} classes",
            record.lineage.num_subclasses(),
            c
        );
        params = trained;
        labels = next;
        lineage = record.lineage.clone();
        levels.push(record);
    }
    Ok(SubspaceOutcome {
        params,
        labels,
        lineage,
        levels,
    })
}
