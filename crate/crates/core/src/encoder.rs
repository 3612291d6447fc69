//! The embedding network: a fully connected net `R^D -> R^d` with a hand
//! written backward pass.
//!
//! All weights and biases live in one flat `Vec<f64>` so the optimizer and
//! the checkpoint format see a single parameter vector. Layer `l` stores its
//! `(out, in)` row-major weight matrix followed by its `out` biases. Hidden
//! layers apply the configured activation; the output layer is linear.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::Standardizer;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative in terms of the pre-activation. ReLU uses 0 at the kink.
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(format!("unknown activation {other:?} (expected relu or tanh)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl EncoderSpec {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize, activation: Activation) -> Self {
        Self {
            input_dim,
            hidden,
            output_dim,
            activation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(pos) = self.widths().iter().position(|&w| w == 0) {
            return Err(Error::contract(format!(
                "encoder width {pos} is zero (widths {:?})",
                self.widths()
            )));
        }
        Ok(())
    }

    /// `[D, hidden.., d]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden);
        w.push(self.output_dim);
        w
    }

    pub fn num_layers(&self) -> usize {
        self.hidden.len() + 1
    }

    /// Layer manifest: where each layer's weights and biases sit in the flat vector.
    pub fn layout(&self) -> Vec<LayerLayout> {
        let widths = self.widths();
        let mut offset = 0;
        widths
            .windows(2)
            .enumerate()
            .map(|(index, w)| {
                let layer = LayerLayout {
                    index,
                    weight_shape: [w[1], w[0]],
                    bias_len: w[1],
                    offset,
                };
                offset += w[1] * w[0] + w[1];
                layer
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layout()
            .iter()
            .map(|l| l.weight_shape[0] * l.weight_shape[1] + l.bias_len)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerLayout {
    pub index: usize,
    /// `(out, in)`.
    pub weight_shape: [usize; 2],
    pub bias_len: usize,
    pub offset: usize,
}

impl LayerLayout {
    pub fn weight_range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.weight_shape[0] * self.weight_shape[1]
    }

    pub fn bias_range(&self) -> std::ops::Range<usize> {
        let start = self.weight_range().end;
        start..start + self.bias_len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    spec: EncoderSpec,
    layout: Vec<LayerLayout>,
    data: Vec<f64>,
}

impl EncoderParams {
    pub fn zeros(spec: EncoderSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.param_count();
        Ok(Self {
            layout: spec.layout(),
            spec,
            data: vec![0.0; n],
        })
    }

    pub fn from_flat(spec: EncoderSpec, data: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if data.len() != spec.param_count() {
            return Err(Error::contract(format!(
                "encoder expects {} parameters, got {}",
                spec.param_count(),
                data.len()
            )));
        }
        Ok(Self {
            layout: spec.layout(),
            spec,
            data,
        })
    }

    /// Zero-mean normal weights scaled by fan-in (He for ReLU, Glorot for
    /// tanh), zero biases.
    pub fn init(spec: EncoderSpec, rng: &mut RngStream) -> Result<Self> {
        let mut params = Self::zeros(spec)?;
        for layer in params.layout.clone() {
            let [fan_out, fan_in] = layer.weight_shape;
            let variance = match params.spec.activation {
                Activation::Relu => 2.0 / fan_in as f64,
                Activation::Tanh => 2.0 / (fan_in + fan_out) as f64,
            };
            let scale = variance.sqrt();
            for w in &mut params.data[layer.weight_range()] {
                *w = scale * rng.normal();
            }
        }
        Ok(params)
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn layout(&self) -> &[LayerLayout] {
        &self.layout
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn weight(&self, layer: usize) -> ArrayView2<'_, f64> {
        let l = &self.layout[layer];
        ArrayView2::from_shape(
            (l.weight_shape[0], l.weight_shape[1]),
            &self.data[l.weight_range()],
        )
        .expect("layout matches storage")
    }

    pub fn weight_mut(&mut self, layer: usize) -> ArrayViewMut2<'_, f64> {
        let l = self.layout[layer];
        ArrayViewMut2::from_shape(
            (l.weight_shape[0], l.weight_shape[1]),
            &mut self.data[l.weight_range()],
        )
        .expect("layout matches storage")
    }

    pub fn bias(&self, layer: usize) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.data[self.layout[layer].bias_range()])
    }

    pub fn bias_mut(&mut self, layer: usize) -> ArrayViewMut1<'_, f64> {
        let range = self.layout[layer].bias_range();
        ArrayViewMut1::from(&mut self.data[range])
    }

    /// Hash of the spec and the exact parameter bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.spec.widths().hash(&mut h);
        (self.spec.activation as u8).hash(&mut h);
        for v in &self.data {
            v.to_bits().hash(&mut h);
        }
        h.finish()
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.spec.input_dim {
            return Err(Error::Dimension(format!(
                "encoder input dimension is {}, batch has {} columns",
                self.spec.input_dim,
                x.ncols()
            )));
        }
        Ok(())
    }

    /// Embeds a batch without keeping intermediate values.
    pub fn embed(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let last = self.spec.num_layers() - 1;
        let mut h = x.to_owned();
        for l in 0..=last {
            let mut pre = h.dot(&self.weight(l).t());
            pre += &self.bias(l);
            if l < last {
                let act = self.spec.activation;
                pre.mapv_inplace(|v| act.apply(v));
            }
            h = pre;
        }
        Ok(h)
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(&x)?;
        let last = self.spec.num_layers() - 1;
        let mut inputs = Vec::with_capacity(last + 1);
        let mut pre_acts = Vec::with_capacity(last + 1);
        let mut h = x.to_owned();
        for l in 0..=last {
            let mut pre = h.dot(&self.weight(l).t());
            pre += &self.bias(l);
            let out = if l < last {
                let act = self.spec.activation;
                pre.mapv(|v| act.apply(v))
            } else {
                pre.clone()
            };
            inputs.push(h);
            pre_acts.push(pre);
            h = out;
        }
        let cache = ForwardCache {
            batch: x.nrows(),
            fingerprint: self.fingerprint(),
            inputs,
            pre_acts,
        };
        Ok((h, cache))
    }

    /// Change of every embedding row per unit increase of one bias entry,
    /// linearised at the batch recorded in `cache`.
    pub fn bias_tangent(&self, cache: &ForwardCache, layer: usize, unit: usize) -> Result<Array2<f64>> {
        if cache.fingerprint != self.fingerprint() || cache.inputs.len() != self.spec.num_layers() {
            return Err(Error::contract(
                "forward cache was produced by different encoder parameters",
            ));
        }
        let last = self.spec.num_layers() - 1;
        if layer > last || unit >= self.bias(layer).len() {
            return Err(Error::contract(format!("no bias entry ({layer}, {unit})")));
        }
        let act = self.spec.activation;
        let mut t = Array2::zeros((cache.batch, self.bias(layer).len()));
        t.column_mut(unit).fill(1.0);
        for m in layer..last {
            t.zip_mut_with(&cache.pre_acts[m], |v, &p| *v *= act.derivative(p));
            t = t.dot(&self.weight(m + 1).t());
        }
        Ok(t)
    }

    /// Gradients of a scalar loss with respect to every weight and bias,
    /// given `dL/dZ` for the batch recorded in `cache`.
    pub fn backward(&self, cache: &ForwardCache, dl_dz: ArrayView2<f64>) -> Result<EncoderGrads> {
        if cache.fingerprint != self.fingerprint() || cache.inputs.len() != self.spec.num_layers() {
            return Err(Error::contract(
                "forward cache was produced by different encoder parameters",
            ));
        }
        if dl_dz.nrows() != cache.batch || dl_dz.ncols() != self.spec.output_dim {
            return Err(Error::contract(format!(
                "dL/dZ is {}x{}, expected {}x{}",
                dl_dz.nrows(),
                dl_dz.ncols(),
                cache.batch,
                self.spec.output_dim
            )));
        }
        let mut grads = EncoderGrads {
            layout: self.layout.clone(),
            data: vec![0.0; self.data.len()],
        };
        let last = self.spec.num_layers() - 1;
        let act = self.spec.activation;
        let mut delta = dl_dz.to_owned();
        for l in (0..=last).rev() {
            if l < last {
                delta.zip_mut_with(&cache.pre_acts[l], |d, &p| *d *= act.derivative(p));
            }
            let dw = delta.t().dot(&cache.inputs[l]);
            let db = delta.sum_axis(Axis(0));
            let layer = self.layout[l];
            grads.data[layer.weight_range()]
                .iter_mut()
                .zip(dw.iter())
                .for_each(|(g, v)| *g = *v);
            grads.data[layer.bias_range()]
                .iter_mut()
                .zip(db.iter())
                .for_each(|(g, v)| *g = *v);
            if l > 0 {
                delta = delta.dot(&self.weight(l));
            }
        }
        Ok(grads)
    }
}

/// Per-layer inputs and pre-activations from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    fingerprint: u64,
    inputs: Vec<Array2<f64>>,
    pre_acts: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.batch
    }

    /// Smallest `|pre-activation|` over the hidden layers; infinite when
    /// there are none. Small values mean the batch sits near a ReLU kink.
    pub fn min_abs_hidden_pre_activation(&self) -> f64 {
        let hidden = self.pre_acts.len().saturating_sub(1);
        self.pre_acts[..hidden]
            .iter()
            .flat_map(|p| p.iter())
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
}

/// Parameter-shaped gradient, flat in the same layout as [`EncoderParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    layout: Vec<LayerLayout>,
    data: Vec<f64>,
}

impl EncoderGrads {
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn weight(&self, layer: usize) -> ArrayView2<'_, f64> {
        let l = &self.layout[layer];
        ArrayView2::from_shape(
            (l.weight_shape[0], l.weight_shape[1]),
            &self.data[l.weight_range()],
        )
        .expect("layout matches storage")
    }

    pub fn bias(&self, layer: usize) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.data[self.layout[layer].bias_range()])
    }
}

pub const CHECKPOINT_FORMAT: &str = "sgm-encoder";
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk encoder: spec, layer manifest, flat parameters and the input
/// standardization fitted at training time.
///
/// Stored as JSON. Floats are written in shortest round-trip form and parsed
/// exactly, so save, load and save again reproduces the file byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub format_version: u32,
    pub spec: EncoderSpec,
    pub layers: Vec<LayerLayout>,
    pub params: Vec<f64>,
    pub standardizer: Option<Standardizer>,
}

impl Checkpoint {
    pub fn new(params: &EncoderParams, standardizer: Option<Standardizer>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            format_version: CHECKPOINT_VERSION,
            spec: params.spec.clone(),
            layers: params.layout.clone(),
            params: params.data.clone(),
            standardizer,
        }
    }

    /// Rebuilds the parameters after checking the manifest against the spec.
    pub fn encoder(&self) -> Result<EncoderParams> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::contract(format!(
                "not an encoder checkpoint (format {:?})",
                self.format
            )));
        }
        if self.format_version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                what: "checkpoint",
                found: self.format_version,
                expected: CHECKPOINT_VERSION,
            });
        }
        if self.layers != self.spec.layout() {
            return Err(Error::contract("checkpoint layer manifest disagrees with its spec"));
        }
        if let Some(s) = &self.standardizer {
            if s.dim() != self.spec.input_dim {
                return Err(Error::contract("checkpoint standardizer width disagrees with its spec"));
            }
        }
        EncoderParams::from_flat(self.spec.clone(), self.params.clone())
    }

    /// Short identifier for the parameter content.
    pub fn id(&self) -> String {
        match self.encoder() {
            Ok(p) => format!("{:016x}", p.fingerprint()),
            Err(_) => "invalid".to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        ckpt.encoder()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn spec(d_in: usize, hidden: &[usize], d_out: usize) -> EncoderSpec {
        EncoderSpec::new(d_in, hidden.to_vec(), d_out, Activation::Relu)
    }

    fn random_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| rng.normal())
    }

    #[test]
    fn init_is_deterministic() {
        let s = spec(4, &[8], 2);
        let a = EncoderParams::init(s.clone(), &mut RngStream::new(9)).unwrap();
        let b = EncoderParams::init(s, &mut RngStream::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bias_tangent_matches_finite_difference() {
        let mut rng = RngStream::new(4);
        let s = EncoderSpec::new(3, vec![5, 4], 2, Activation::Tanh);
        let p = EncoderParams::init(s.clone(), &mut rng).unwrap();
        let x = random_matrix(6, 3, &mut rng);
        let (_, cache) = p.forward(x.view()).unwrap();
        let h = 1e-6;
        for layer in p.layout().to_vec() {
            for (unit, flat) in layer.bias_range().enumerate() {
                let shifted = |delta: f64| {
                    let mut q = p.clone();
                    q.as_mut_slice()[flat] += delta;
                    q.embed(x.view()).unwrap()
                };
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                let t = p.bias_tangent(&cache, layer.index, unit).unwrap();
                let err = (&t - &fd).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(err < 1e-7, "layer {} unit {unit}: {err}", layer.index);
            }
        }
    }

    #[test]
    fn output_bias_tangent_is_a_unit_shift() {
        let mut rng = RngStream::new(5);
        let p = EncoderParams::init(spec(3, &[4], 2), &mut rng).unwrap();
        let (_, cache) = p.forward(random_matrix(5, 3, &mut rng).view()).unwrap();
        let t = p.bias_tangent(&cache, 1, 1).unwrap();
        assert!(t.rows().into_iter().all(|r| r[0] == 0.0 && r[1] == 1.0));
        assert!(p.bias_tangent(&cache, 1, 2).is_err());
    }

    #[test]
    fn layer_shapes_follow_widths() {
        let p = EncoderParams::init(spec(4, &[8], 2), &mut RngStream::new(0)).unwrap();
        assert_eq!(p.weight(0).dim(), (8, 4));
        assert_eq!(p.weight(1).dim(), (2, 8));
        assert_eq!(p.bias(0).len(), 8);
        assert_eq!(p.bias(1).len(), 2);
        assert!(p.bias(0).iter().chain(p.bias(1).iter()).all(|&b| b == 0.0));
    }

    #[test]
    fn zero_width_is_rejected() {
        assert!(matches!(
            EncoderParams::zeros(spec(4, &[0], 2)),
            Err(Error::Contract(_))
        ));
        assert!(EncoderParams::zeros(spec(0, &[], 2)).is_err());
    }

    #[test]
    fn relu_init_variance_matches_he_scaling() {
        let p = EncoderParams::init(spec(100, &[100], 4), &mut RngStream::new(5)).unwrap();
        let w = p.weight(0);
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let target = 2.0 / 100.0;
        assert!((var - target).abs() < 0.2 * target, "variance {var}");
    }

    #[test]
    fn zero_params_give_zero_embedding() {
        let p = EncoderParams::zeros(spec(3, &[5, 4], 2)).unwrap();
        let x = random_matrix(6, 3, &mut RngStream::new(1));
        let (z, _) = p.forward(x.view()).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_passes_inputs_through() {
        let mut p = EncoderParams::zeros(spec(3, &[], 3)).unwrap();
        p.weight_mut(0).assign(&Array2::eye(3));
        let x = array![[0.5, 1.0, 2.0], [3.0, 0.25, 7.0]];
        let (z, _) = p.forward(x.view()).unwrap();
        assert_eq!(z, x);
    }

    #[test]
    fn batch_forward_matches_row_by_row() {
        let mut rng = RngStream::new(2);
        let p = EncoderParams::init(spec(6, &[7, 5], 3), &mut rng).unwrap();
        let x = random_matrix(5, 6, &mut rng);
        let (z, _) = p.forward(x.view()).unwrap();
        for (i, row) in x.rows().into_iter().enumerate() {
            let single = p.embed(row.insert_axis(Axis(0))).unwrap();
            for j in 0..3 {
                assert!((single[[0, j]] - z[[i, j]]).abs() < 1e-12);
            }
        }
        assert_eq!(p.embed(x.view()).unwrap(), z);
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let p = EncoderParams::zeros(spec(3, &[], 2)).unwrap();
        let x = Array2::<f64>::zeros((2, 4));
        assert!(matches!(p.forward(x.view()), Err(Error::Dimension(_))));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grads() {
        let mut rng = RngStream::new(4);
        let p = EncoderParams::init(spec(4, &[6], 3), &mut rng).unwrap();
        let x = random_matrix(5, 4, &mut rng);
        let (_, cache) = p.forward(x.view()).unwrap();
        let g = p.backward(&cache, Array2::zeros((5, 3)).view()).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_layer_sum_loss_gradient() {
        // L = sum(Z), Z = X W^T + b: dL/dW[o, i] = sum_rows X[:, i], dL/db = batch size.
        let mut rng = RngStream::new(6);
        let p = EncoderParams::init(spec(3, &[], 2), &mut rng).unwrap();
        let x = random_matrix(4, 3, &mut rng);
        let (_, cache) = p.forward(x.view()).unwrap();
        let g = p.backward(&cache, Array2::ones((4, 2)).view()).unwrap();
        let col_sums = x.sum_axis(Axis(0));
        for o in 0..2 {
            for i in 0..3 {
                assert!((g.weight(0)[[o, i]] - col_sums[i]).abs() < 1e-12);
            }
            assert_eq!(g.bias(0)[o], 4.0);
        }
    }

    #[test]
    fn backward_rejects_stale_cache() {
        let mut rng = RngStream::new(8);
        let mut p = EncoderParams::init(spec(3, &[4], 2), &mut rng).unwrap();
        let x = random_matrix(2, 3, &mut rng);
        let (_, cache) = p.forward(x.view()).unwrap();
        p.as_mut_slice()[0] += 1.0;
        assert!(matches!(
            p.backward(&cache, Array2::zeros((2, 2)).view()),
            Err(Error::Contract(_))
        ));
        let (_, cache) = p.forward(x.view()).unwrap();
        assert!(p.backward(&cache, Array2::zeros((3, 2)).view()).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_byte_identical() {
        let p = EncoderParams::init(spec(5, &[7], 3), &mut RngStream::new(10)).unwrap();
        let std = Standardizer {
            mean: vec![0.1, -1.0 / 3.0, 2.0, 1e-300, 5.5],
            scale: vec![1.0, 0.7, std::f64::consts::PI, 1.0, 2.0],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        Checkpoint::new(&p, Some(std)).save(&path).unwrap();
        let first = std::fs::read(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.encoder().unwrap(), p);
        loaded.save(&path).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn checkpoint_version_mismatch_is_named() {
        let p = EncoderParams::init(spec(2, &[], 2), &mut RngStream::new(0)).unwrap();
        let mut ck = Checkpoint::new(&p, None);
        ck.format_version = 7;
        let err = Checkpoint::from_json(&ck.to_json(), Path::new("x")).unwrap_err();
        assert!(err.to_string().contains('7') && err.to_string().contains('1'));
    }
}
