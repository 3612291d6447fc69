//! Datasets, synthetic blobs, stratified splits, standardization and
//! embedding tables.
//!
//! Dataset CSV: header `label,f0,f1,...,f{D-1}`, one sample per row, a
//! nonnegative integer label and decimal features. Labels are remapped to
//! dense ids `0..c` in ascending order of their file values.
//!
//! Embedding CSV: header `id,e0,...,e{d-1}`, with the format version and
//! source checkpoint in a `.meta.json` sidecar.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
    /// Original label value for each dense class id.
    label_values: Vec<u64>,
}

impl Dataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let label_values = (0..num_classes as u64).collect();
        Self::with_label_values(features, labels, num_classes, label_values)
    }

    pub fn with_label_values(
        features: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
        label_values: Vec<u64>,
    ) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::contract("dataset has no samples"));
        }
        if labels.len() != features.nrows() {
            return Err(Error::contract(format!(
                "{} labels for {} samples",
                labels.len(),
                features.nrows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::contract(format!("label {bad} out of range for {num_classes} classes")));
        }
        if label_values.len() != num_classes {
            return Err(Error::contract("label value table must have one entry per class"));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::contract("dataset features must be finite"));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            label_values,
        })
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn label_values(&self) -> &[u64] {
        &self.label_values
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Sample indices of each class.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            members[l].push(i);
        }
        members
    }

    /// Same samples under new labels (e.g. sub-class ids).
    pub fn relabeled(&self, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        Self::new(self.features.clone(), labels, num_classes)
    }

    /// Rows `indices`, in that order, keeping the class table.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let features = self.features.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::with_label_values(features, labels, self.num_classes, self.label_values.clone())
    }

    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        Self::with_label_values(features, self.labels.clone(), self.num_classes, self.label_values.clone())
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, path)
    }

    pub fn read_csv<R: std::io::Read>(reader: R, path: &Path) -> Result<Self> {
        let parse_err = |line: u64, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        if header.get(0) != Some("label") || header.len() < 2 {
            return Err(parse_err(1, "header must be label,f0,f1,...".to_string()));
        }
        for (k, name) in header.iter().skip(1).enumerate() {
            if name != format!("f{k}") {
                return Err(parse_err(1, format!("expected column f{k}, found {name:?}")));
            }
        }
        let dim = header.len() - 1;
        let mut raw_labels = Vec::new();
        let mut values = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                parse_err(line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line());
            let label: u64 = record[0]
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("label {:?} is not a nonnegative integer", &record[0])))?;
            raw_labels.push(label);
            for (k, field) in record.iter().skip(1).enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| parse_err(line, format!("feature f{k} {field:?} is not a number")))?;
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        path: path.to_path_buf(),
                        line,
                        column: format!("f{k}"),
                        value: field.to_string(),
                    });
                }
                values.push(v);
            }
        }
        if raw_labels.is_empty() {
            return Err(parse_err(2, "no samples".to_string()));
        }
        let mapping: BTreeMap<u64, usize> = {
            let mut distinct: Vec<u64> = raw_labels.clone();
            distinct.sort_unstable();
            distinct.dedup();
            distinct.into_iter().enumerate().map(|(i, v)| (v, i)).collect()
        };
        let labels = raw_labels.iter().map(|v| mapping[v]).collect();
        let label_values = mapping.keys().copied().collect::<Vec<_>>();
        let features = Array2::from_shape_vec((raw_labels.len(), dim), values)
            .map_err(|e| parse_err(0, e.to_string()))?;
        Self::with_label_values(features, labels, label_values.len(), label_values)
    }

    /// Writes original label values and shortest round-trip decimals.
    pub fn write_csv<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["label".to_string()];
        header.extend((0..self.dim()).map(|k| format!("f{k}")));
        w.write_record(&header)?;
        for (row, &label) in self.features.rows().into_iter().zip(&self.labels) {
            let mut rec = vec![self.label_values[label].to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }
}

/// Per-dimension affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Population statistics of `x`; constant columns keep scale 1.
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let m = x.nrows() as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut scale = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let mu = col.sum() / m;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m;
            mean.push(mu);
            scale.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Self { mean, scale }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::Dimension(format!(
                "standardizer expects {} features, got {}",
                self.dim(),
                x.ncols()
            )));
        }
        let mut out = x.to_owned();
        for (k, mut col) in out.columns_mut().into_iter().enumerate() {
            let (mu, s) = (self.mean[k], self.scale[k]);
            col.mapv_inplace(|v| (v - mu) / s);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Scale of the class center placement.
    pub separation: f64,
    pub sub_blobs: usize,
    /// Scale of the sub-blob offsets around a class center.
    pub sub_separation: f64,
}

/// Generated data plus the generator's ground truth.
#[derive(Debug, Clone)]
pub struct SynthBlobs {
    pub dataset: Dataset,
    /// Global sub-blob id per sample: `class * sub_blobs + s`.
    pub sub_blob: Vec<usize>,
    pub class_centers: Array2<f64>,
    pub sub_blob_centers: Array2<f64>,
}

/// Orthogonal-axis directions when they fit, random unit directions otherwise.
fn directions(count: usize, dim: usize, first_axis: usize, rng: &mut RngStream) -> Array2<f64> {
    let mut out = Array2::zeros((count, dim));
    if first_axis + count <= dim {
        for i in 0..count {
            out[[i, first_axis + i]] = 1.0;
        }
    } else {
        for mut row in out.rows_mut() {
            row.mapv_inplace(|_| rng.normal());
            let n = row.dot(&row).sqrt().max(f64::MIN_POSITIVE);
            row.mapv_inplace(|v| v / n);
        }
    }
    out
}

/// Unit-variance Gaussian clouds around sub-blob centers.
///
/// Class `j` sits at `separation * e_j` and its sub-blob `s` at
/// `separation * e_j + sub_separation * e_{c+s}` (single sub-blobs sit on the
/// class center). Axis directions are used while they fit in `dim`; past that
/// the directions are random unit vectors rescaled so that no two class
/// centers are closer than `separation`.
pub fn synth_blobs(spec: &BlobSpec, rng: &mut RngStream) -> Result<SynthBlobs> {
    if spec.classes == 0 || spec.per_class == 0 || spec.dim == 0 || spec.sub_blobs == 0 {
        return Err(Error::contract("blob counts and dimension must be at least 1"));
    }
    if !(spec.separation >= 0.0 && spec.sub_separation >= 0.0) {
        return Err(Error::contract("separations must be nonnegative"));
    }
    let (c, s, dim) = (spec.classes, spec.sub_blobs, spec.dim);
    let mut class_centers = directions(c, dim, 0, rng) * spec.separation;
    if c > dim && spec.separation > 0.0 {
        let mut closest = f64::INFINITY;
        for a in 0..c {
            for b in a + 1..c {
                let diff = &class_centers.row(a) - &class_centers.row(b);
                closest = closest.min(diff.dot(&diff).sqrt());
            }
        }
        if closest > 0.0 && closest < spec.separation {
            class_centers *= spec.separation / closest * (1.0 + 1e-12);
        }
    }
    let sub_offsets = if s == 1 {
        Array2::zeros((1, dim))
    } else {
        directions(s, dim, c.min(dim), rng) * spec.sub_separation
    };
    let mut sub_blob_centers = Array2::zeros((c * s, dim));
    for j in 0..c {
        for k in 0..s {
            let center = &class_centers.row(j) + &sub_offsets.row(k);
            sub_blob_centers.row_mut(j * s + k).assign(&center);
        }
    }
    let m = c * spec.per_class;
    let mut features = Array2::zeros((m, dim));
    let mut labels = Vec::with_capacity(m);
    let mut sub_blob = Vec::with_capacity(m);
    for j in 0..c {
        for i in 0..spec.per_class {
            // Sub-blobs share the class quota round-robin.
            let blob = j * s + i % s;
            let row = j * spec.per_class + i;
            for k in 0..dim {
                features[[row, k]] = sub_blob_centers[[blob, k]] + rng.normal();
            }
            labels.push(j);
            sub_blob.push(blob);
        }
    }
    Ok(SynthBlobs {
        dataset: Dataset::new(features, labels, c)?,
        sub_blob,
        class_centers,
        sub_blob_centers,
    })
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Stratified split by class with fractions `(train, test)`.
///
/// Each class with `n_c` samples contributes `round(n_c * test)` test rows,
/// clamped to `1..n_c-1`. Index lists come back sorted.
pub fn split(dataset: &Dataset, fractions: (f64, f64), rng: &mut RngStream) -> Result<Split> {
    let (train_f, test_f) = fractions;
    if !(train_f >= 0.0 && test_f >= 0.0) || (train_f + test_f - 1.0).abs() > 1e-9 {
        return Err(Error::contract(format!(
            "split fractions ({train_f}, {test_f}) must be nonnegative and sum to 1"
        )));
    }
    if train_f == 0.0 || test_f == 0.0 {
        return Err(Error::contract("both split parts must be nonempty"));
    }
    let mut train_indices = Vec::new();
    let mut test_indices = Vec::new();
    for (class, mut members) in dataset.class_members().into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::contract(format!(
                "class {class} has {} sample(s); stratified split needs 2",
                members.len()
            )));
        }
        rng.shuffle(&mut members);
        let n_test = ((members.len() as f64 * test_f).round() as usize).clamp(1, members.len() - 1);
        test_indices.extend_from_slice(&members[..n_test]);
        train_indices.extend_from_slice(&members[n_test..]);
    }
    train_indices.sort_unstable();
    test_indices.sort_unstable();
    Ok(Split {
        train: dataset.subset(&train_indices)?,
        test: dataset.subset(&test_indices)?,
        train_indices,
        test_indices,
    })
}

pub const EMBEDDING_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub ids: Vec<usize>,
    pub values: Array2<f64>,
    /// Identifier of the checkpoint that produced the embeddings; empty when
    /// loaded without a sidecar.
    pub source: String,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingMeta {
    version: u32,
    source: String,
    rows: usize,
    dim: usize,
}

/// `emb.csv` -> `emb.meta.json`.
pub fn embedding_meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

impl EmbeddingTable {
    fn check(&self) -> Result<()> {
        if self.values.nrows() == 0 || self.values.ncols() == 0 {
            return Err(Error::contract("refusing to save an empty embedding table"));
        }
        if self.ids.len() != self.values.nrows() {
            return Err(Error::contract("embedding ids and rows differ in length"));
        }
        Ok(())
    }

    /// The CSV body: header `id,e0,...`, then one row per id.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        self.check()?;
        let io = |e: csv::Error| Error::contract(format!("writing embeddings: {e}"));
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string()];
        header.extend((0..self.values.ncols()).map(|k| format!("e{k}")));
        w.write_record(&header).map_err(io)?;
        for (row, id) in self.values.rows().into_iter().zip(&self.ids) {
            let mut rec = vec![id.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| Error::contract(format!("writing embeddings: {e}")))
    }

    /// Sidecar JSON with the format version and the source checkpoint.
    pub fn meta_json(&self) -> String {
        let meta = EmbeddingMeta {
            version: EMBEDDING_VERSION,
            source: self.source.clone(),
            rows: self.values.nrows(),
            dim: self.values.ncols(),
        };
        serde_json::to_string_pretty(&meta).expect("plain struct") + "\n"
    }

    /// Writes the CSV to `path` and its sidecar next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))?;
        let meta = embedding_meta_path(path);
        std::fs::write(&meta, self.meta_json()).map_err(|e| Error::io(&meta, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let parse_err = |line: u64, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(file);
        let header = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        if header.get(0) != Some("id") || header.len() < 2 {
            return Err(parse_err(1, "header must be id,e0,e1,...".to_string()));
        }
        for (k, name) in header.iter().skip(1).enumerate() {
            if name != format!("e{k}") {
                return Err(parse_err(1, format!("expected column e{k}, found {name:?}")));
            }
        }
        let dim = header.len() - 1;
        let mut ids = Vec::new();
        let mut values = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = record.position().map_or(0, |p| p.line());
            ids.push(record[0].parse().map_err(|_| parse_err(line, "bad id".to_string()))?);
            for field in record.iter().skip(1) {
                let v: f64 = field.parse().map_err(|_| parse_err(line, format!("bad value {field:?}")))?;
                if !v.is_finite() {
                    return Err(parse_err(line, format!("non-finite value {field:?}")));
                }
                values.push(v);
            }
        }
        let values = Array2::from_shape_vec((ids.len(), dim), values).map_err(|e| parse_err(0, e.to_string()))?;

        let meta_path = embedding_meta_path(path);
        let source = match std::fs::read_to_string(&meta_path) {
            Ok(text) => {
                let meta: EmbeddingMeta = serde_json::from_str(&text).map_err(|e| Error::Parse {
                    path: meta_path.clone(),
                    line: e.line() as u64,
                    message: e.to_string(),
                })?;
                if meta.version != EMBEDDING_VERSION {
                    return Err(Error::Version {
                        what: "embedding table",
                        found: meta.version,
                        expected: EMBEDDING_VERSION,
                    });
                }
                if (meta.rows, meta.dim) != values.dim() {
                    return Err(Error::Dimension(format!(
                        "{} describes {}x{} embeddings but the table is {}x{}",
                        meta_path.display(),
                        meta.rows,
                        meta.dim,
                        values.nrows(),
                        values.ncols()
                    )));
                }
                meta.source
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(Error::io(&meta_path, e)),
        };
        Ok(Self { ids, values, source })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Instant;

    fn csv_of(text: &str) -> Result<Dataset> {
        Dataset::read_csv(text.as_bytes(), Path::new("mem.csv"))
    }

    #[test]
    fn reads_shape() {
        let d = csv_of("label,f0,f1,f2\n0,1.0,2.0,3.0\n1,4,5,6\n").unwrap();
        assert_eq!((d.len(), d.dim()), (2, 3));
    }

    #[test]
    fn labels_are_densified() {
        let d = csv_of("label,f0\n9,0.0\n5,1.0\n9,2.0\n").unwrap();
        assert_eq!(d.labels(), &[1, 0, 1]);
        assert_eq!(d.label_values(), &[5, 9]);
        assert_eq!(d.num_classes(), 2);
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = csv_of("label,f0,f1\n0,1,2\n1,abc,3\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(csv_of("label,f0\n0,1\n1,2,3\n"), Err(Error::Parse { .. })));
        assert!(matches!(csv_of("lbl,f0\n0,1\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn non_finite_values_are_rejected() {
        for bad in ["NaN", "inf", "-inf"] {
            let err = csv_of(&format!("label,f0\n0,1\n1,{bad}\n")).unwrap_err();
            assert!(matches!(err, Error::NonFinite { line: 3, .. }), "{err:?}");
        }
    }

    #[test]
    fn write_read_write_is_byte_identical() {
        let mut rng = RngStream::new(4);
        let blobs = synth_blobs(
            &BlobSpec {
                classes: 3,
                per_class: 7,
                dim: 4,
                separation: 3.0,
                sub_blobs: 1,
                sub_separation: 0.0,
            },
            &mut rng,
        )
        .unwrap();
        let mut first = Vec::new();
        blobs.dataset.write_csv(&mut first).unwrap();
        let back = Dataset::read_csv(first.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back, blobs.dataset);
        let mut second = Vec::new();
        back.write_csv(&mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn single_cloud() {
        let mut rng = RngStream::new(0);
        let spec = BlobSpec {
            classes: 1,
            per_class: 50,
            dim: 3,
            separation: 5.0,
            sub_blobs: 1,
            sub_separation: 2.0,
        };
        let b = synth_blobs(&spec, &mut rng).unwrap();
        assert_eq!(b.dataset.num_classes(), 1);
        assert!(b.sub_blob.iter().all(|&s| s == 0));
    }

    #[test]
    fn zero_separation_collapses_centers() {
        let mut rng = RngStream::new(0);
        let spec = BlobSpec {
            classes: 4,
            per_class: 5,
            dim: 3,
            separation: 0.0,
            sub_blobs: 1,
            sub_separation: 0.0,
        };
        let b = synth_blobs(&spec, &mut rng).unwrap();
        assert!(b.class_centers.iter().all(|&v| v == 0.0));
    }

    fn min_pairwise(centers: &Array2<f64>) -> f64 {
        let mut closest = f64::INFINITY;
        for a in 0..centers.nrows() {
            for b in a + 1..centers.nrows() {
                let diff = &centers.row(a) - &centers.row(b);
                closest = closest.min(diff.dot(&diff).sqrt());
            }
        }
        closest
    }

    #[test]
    fn class_centers_respect_separation() {
        let mut rng = RngStream::new(1);
        let spec = BlobSpec {
            classes: 8,
            per_class: 200,
            dim: 32,
            separation: 5.0,
            sub_blobs: 1,
            sub_separation: 0.0,
        };
        let b = synth_blobs(&spec, &mut rng).unwrap();
        assert!(min_pairwise(&b.class_centers) >= 5.0);
        // More classes than axes falls back to rescaled random directions.
        let crowded = BlobSpec { classes: 6, dim: 3, per_class: 2, ..spec };
        let b = synth_blobs(&crowded, &mut rng).unwrap();
        assert!(min_pairwise(&b.class_centers) >= 5.0);
    }

    #[test]
    fn ground_truth_collapses_to_labels() {
        let mut rng = RngStream::new(2);
        let spec = BlobSpec {
            classes: 4,
            per_class: 30,
            dim: 16,
            separation: 5.0,
            sub_blobs: 3,
            sub_separation: 2.0,
        };
        let b = synth_blobs(&spec, &mut rng).unwrap();
        let collapsed: Vec<usize> = b.sub_blob.iter().map(|s| s / 3).collect();
        assert_eq!(collapsed, b.dataset.labels());
    }

    fn toy(per_class: usize, classes: usize) -> Dataset {
        let m = per_class * classes;
        let features = Array2::from_shape_fn((m, 2), |(i, k)| (i * 2 + k) as f64);
        Dataset::new(features, (0..m).map(|i| i % classes).collect(), classes).unwrap()
    }

    #[test]
    fn split_guards() {
        let d = toy(10, 2);
        assert!(split(&d, (1.0, 0.0), &mut RngStream::new(0)).is_err());
        assert!(split(&d, (0.5, 0.4), &mut RngStream::new(0)).is_err());
        let tiny = Dataset::new(Array2::zeros((3, 1)), vec![0, 0, 1], 2).unwrap();
        assert!(split(&tiny, (0.5, 0.5), &mut RngStream::new(0)).is_err());
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let d = toy(100, 3);
        let a = split(&d, (0.8, 0.2), &mut RngStream::new(5)).unwrap();
        for members in a.test.class_members() {
            assert_eq!(members.len(), 20);
        }
        for members in a.train.class_members() {
            assert_eq!(members.len(), 80);
        }
        let b = split(&d, (0.8, 0.2), &mut RngStream::new(5)).unwrap();
        assert_eq!(a.test_indices, b.test_indices);
        assert_eq!(a.train.features(), b.train.features());
    }

    #[test]
    fn standardizer_centers_and_scales() {
        let d = toy(10, 2);
        let s = Standardizer::fit(d.features());
        let x = s.apply(d.features()).unwrap();
        for col in x.columns() {
            assert!(col.mean().unwrap().abs() < 1e-12);
            let var = col.iter().map(|v| v * v).sum::<f64>() / col.len() as f64;
            assert!((var - 1.0).abs() < 1e-12);
        }
        let constant = Standardizer::fit(Array2::<f64>::ones((4, 2)).view());
        assert_eq!(constant.scale, vec![1.0, 1.0]);
    }

    #[test]
    fn embeddings_round_trip_bitwise() {
        let mut rng = RngStream::new(8);
        let table = EmbeddingTable {
            ids: (0..1000).collect(),
            values: Array2::from_shape_fn((1000, 64), |_| rng.normal() * 1e3),
            source: "abc123".to_string(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.csv");
        let start = Instant::now();
        table.save(&path).unwrap();
        let back = EmbeddingTable::load(&path).unwrap();
        assert!(start.elapsed().as_secs_f64() < 1.0);
        assert_eq!(back.ids, table.ids);
        assert_eq!(back.source, "abc123");
        for (a, b) in back.values.iter().zip(table.values.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn empty_embedding_table_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let table = EmbeddingTable {
            ids: vec![],
            values: Array2::zeros((0, 3)),
            source: String::new(),
        };
        assert!(table.save(&dir.path().join("e.csv")).is_err());
    }

    #[test]
    fn embedding_version_mismatch_names_versions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        std::fs::write(&path, "id,e0\n0,1.0\n").unwrap();
        assert_eq!(EmbeddingTable::load(&path).unwrap().source, "");
        std::fs::write(embedding_meta_path(&path), r#"{"version":3,"source":"x","rows":1,"dim":1}"#).unwrap();
        let err = EmbeddingTable::load(&path).unwrap_err();
        assert!(matches!(err, Error::Version { found: 3, expected: 1, .. }));
        std::fs::write(embedding_meta_path(&path), r#"{"version":1,"source":"x","rows":2,"dim":1}"#).unwrap();
        assert!(matches!(EmbeddingTable::load(&path), Err(Error::Dimension(_))));
    }

    #[test]
    fn embedding_csv_starts_with_its_header() {
        let table = EmbeddingTable {
            ids: vec![4, 9],
            values: Array2::from_shape_vec((2, 2), vec![0.5, -1.0, 2.0, 0.25]).unwrap(),
            source: "c".to_string(),
        };
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "id,e0,e1\n4,0.5,-1\n9,2,0.25\n");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        std::fs::write(&path, "id,x0\n0,1.0\n").unwrap();
        assert!(matches!(EmbeddingTable::load(&path), Err(Error::Parse { line: 1, .. })));
    }
}
