//! Network configuration, construction, forward passes, and checkpoints.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::layers::{ConvLayer, DenseLayer, Layer, LayerSpec, Mode, ParamGrads, PoolLayer};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::filter::{dims_from_string, dims_to_string};
use crate::scalar::Scalar;

const CHECKPOINT_MAGIC: &[u8; 5] = b"EEGM1";
const CHECKPOINT_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// NetworkConfig
// ---------------------------------------------------------------------------

/// An ordered layer stack plus the input shape and label count. The final
/// layer must be `softmax`; `forward` returns the logits feeding it.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub input_shape: Vec<usize>,
    pub num_labels: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkConfig {
    /// Check that consecutive shapes compose, that softmax appears exactly
    /// once at the end, and that the pre-softmax width equals the label
    /// count. Returns each layer's output shape.
    pub fn validate(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.is_empty() || self.input_shape.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!(
                "input shape {:?} has a zero dimension",
                self.input_shape
            )));
        }
        if !(self.input_shape.len() == 1 || self.input_shape.len() == 3) {
            return Err(Error::Config(
                "input shape must be flat (N) or (C, H, W)".into(),
            ));
        }
        if self.num_labels == 0 {
            return Err(Error::Config("label count must be positive".into()));
        }
        let Some(last) = self.layers.last() else {
            return Err(Error::Config("network has no layers".into()));
        };
        if *last != LayerSpec::Softmax {
            return Err(Error::Config("final layer must be softmax".into()));
        }
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut shape = self.input_shape.clone();
        for (i, spec) in self.layers.iter().enumerate() {
            if *spec == LayerSpec::Softmax && i + 1 != self.layers.len() {
                return Err(Error::Config("softmax may only be the final layer".into()));
            }
            if let LayerSpec::Dropout { p } = spec {
                if !(0.0..1.0).contains(p) {
                    return Err(Error::Config(format!("dropout p {p} outside [0, 1)")));
                }
            }
            shape = spec.output_shape(&shape)?;
            shapes.push(shape.clone());
        }
        if shape != [self.num_labels] {
            return Err(Error::Config(format!(
                "network ends with shape {shape:?}, expected [{}]",
                self.num_labels
            )));
        }
        Ok(shapes)
    }

    /// Canonical text form: `input`, `labels`, then one line per layer.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "input {}", dims_to_string(&self.input_shape));
        let _ = writeln!(s, "labels {}", self.num_labels);
        for spec in &self.layers {
            let _ = writeln!(s, "{}", spec.canonical_line());
        }
        s
    }

    /// SHA-256 of the canonical text.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.canonical_text().as_bytes()).into()
    }

    /// Parse the config text format (comments `#` and blank lines allowed).
    pub fn parse(text: &str) -> Result<Self> {
        let mut input_shape: Option<Vec<usize>> = None;
        let mut num_labels: Option<usize> = None;
        let mut layers = Vec::new();
        for raw in text.lines() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let head = parts.next().expect("non-empty line");
            let rest: Vec<&str> = parts.collect();
            match head {
                "input" => {
                    let dims = rest
                        .first()
                        .ok_or_else(|| Error::Config("input needs dimensions".into()))?;
                    input_shape = Some(dims_from_string(dims).map_err(reword_config)?);
                }
                "labels" => {
                    let n = rest
                        .first()
                        .ok_or_else(|| Error::Config("labels needs a count".into()))?;
                    num_labels =
                        Some(n.parse().map_err(|_| Error::Config(format!("labels `{n}`")))?);
                }
                "conv2d" => {
                    if rest.len() < 2 {
                        return Err(Error::Config(format!("conv2d line `{line}`")));
                    }
                    let out_channels = rest[0]
                        .parse()
                        .map_err(|_| Error::Config(format!("conv2d channels `{}`", rest[0])))?;
                    let kernel = parse_pair(rest[1])?;
                    let mut stride = 1;
                    let mut padding = 0;
                    let mut i = 2;
                    while i + 1 < rest.len() + 1 && i < rest.len() {
                        match rest[i] {
                            "stride" => {
                                stride = rest
                                    .get(i + 1)
                                    .and_then(|v| v.parse().ok())
                                    .ok_or_else(|| Error::Config(format!("stride in `{line}`")))?;
                                i += 2;
                            }
                            "pad" => {
                                padding = rest
                                    .get(i + 1)
                                    .and_then(|v| v.parse().ok())
                                    .ok_or_else(|| Error::Config(format!("pad in `{line}`")))?;
                                i += 2;
                            }
                            other => {
                                return Err(Error::Config(format!(
                                    "unknown conv2d option `{other}`"
                                )))
                            }
                        }
                    }
                    layers.push(LayerSpec::Conv2D {
                        out_channels,
                        kernel,
                        stride,
                        padding,
                    });
                }
                "dense" => {
                    let out = rest
                        .first()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| Error::Config(format!("dense line `{line}`")))?;
                    layers.push(LayerSpec::Dense { out_features: out });
                }
                "relu" => layers.push(LayerSpec::ReLU),
                "elu" => layers.push(LayerSpec::ELU),
                "selu" => layers.push(LayerSpec::SELU),
                "avgpool" => {
                    let w = rest
                        .first()
                        .ok_or_else(|| Error::Config(format!("avgpool line `{line}`")))?;
                    let window = if w.contains('x') {
                        parse_pair(w)?
                    } else {
                        let v: usize = w
                            .parse()
                            .map_err(|_| Error::Config(format!("avgpool `{w}`")))?;
                        (v, v)
                    };
                    layers.push(LayerSpec::AveragePool { window });
                }
                "flatten" => layers.push(LayerSpec::Flatten),
                "dropout" => {
                    let p = rest
                        .first()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| Error::Config(format!("dropout line `{line}`")))?;
                    layers.push(LayerSpec::Dropout { p });
                }
                "softmax" => layers.push(LayerSpec::Softmax),
                other => return Err(Error::Config(format!("unknown layer `{other}`"))),
            }
        }
        let config = NetworkConfig {
            input_shape: input_shape
                .ok_or_else(|| Error::Config("config missing `input` line".into()))?,
            num_labels: num_labels
                .ok_or_else(|| Error::Config("config missing `labels` line".into()))?,
            layers,
        };
        config.validate()?;
        Ok(config)
    }

    /// Compact two-conv classifier for (1, C, T) inputs.
    pub fn mini_eeg(channels: usize, timepoints: usize, num_labels: usize) -> Self {
        Self {
            input_shape: vec![1, channels, timepoints],
            num_labels,
            layers: vec![
                LayerSpec::Conv2D {
                    out_channels: 8,
                    kernel: (3, 3),
                    stride: 1,
                    padding: 0,
                },
                LayerSpec::ReLU,
                LayerSpec::AveragePool { window: (2, 2) },
                LayerSpec::Conv2D {
                    out_channels: 16,
                    kernel: (3, 3),
                    stride: 1,
                    padding: 0,
                },
                LayerSpec::ReLU,
                LayerSpec::Flatten,
                LayerSpec::Dense { out_features: 32 },
                LayerSpec::ReLU,
                LayerSpec::Dropout { p: 0.5 },
                LayerSpec::Dense {
                    out_features: num_labels,
                },
                LayerSpec::Softmax,
            ],
        }
    }

    /// Scaled-down temporal-then-spatial conv stack in the EEGNet style:
    /// a (1, 16) temporal convolution, a full-height spatial convolution,
    /// ELU activations, and temporal average pooling.
    pub fn eegnet_lite(channels: usize, timepoints: usize, num_labels: usize) -> Self {
        Self {
            input_shape: vec![1, channels, timepoints],
            num_labels,
            layers: vec![
                LayerSpec::Conv2D {
                    out_channels: 4,
                    kernel: (1, 16),
                    stride: 1,
                    padding: 0,
                },
                LayerSpec::ELU,
                LayerSpec::AveragePool { window: (1, 2) },
                LayerSpec::Conv2D {
                    out_channels: 8,
                    kernel: (channels, 1),
                    stride: 1,
                    padding: 0,
                },
                LayerSpec::ELU,
                LayerSpec::AveragePool { window: (1, 4) },
                LayerSpec::Dropout { p: 0.25 },
                LayerSpec::Flatten,
                LayerSpec::Dense {
                    out_features: num_labels,
                },
                LayerSpec::Softmax,
            ],
        }
    }
}

fn parse_pair(s: &str) -> Result<(usize, usize)> {
    let dims = dims_from_string(s).map_err(reword_config)?;
    if dims.len() != 2 {
        return Err(Error::Config(format!("expected RxC pair, got `{s}`")));
    }
    Ok((dims[0], dims[1]))
}

fn reword_config(e: Error) -> Error {
    Error::Config(e.to_string())
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

/// Intermediate activations (and dropout masks) kept for backprop.
pub(crate) struct Caches<F> {
    pub acts: Vec<Vec<F>>,
    pub masks: Vec<Option<Vec<F>>>,
}

impl<F> Caches<F> {
    pub fn logits(&self) -> &[F] {
        self.acts.last().expect("at least the input activation")
    }
}

/// A layered differentiable model with parameters.
#[derive(Debug, Clone)]
pub struct Network<F> {
    config: NetworkConfig,
    layers: Vec<Layer<F>>,
    rng_seed: u64,
}

impl<F: Scalar> Network<F> {
    /// Deterministically initialize a network from a config and seed.
    pub fn init(config: NetworkConfig, seed: u64) -> Result<Self> {
        let shapes = config.validate()?;
        let mut layers = Vec::new();
        let mut in_shape = config.input_shape.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (spec, out_shape) in config.layers.iter().zip(&shapes) {
            let layer = match spec {
                LayerSpec::Conv2D {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                } => {
                    let (kh, kw) = *kernel;
                    let mut layer = Layer::Conv(ConvLayer {
                        w: vec![F::zero(); out_channels * in_shape[0] * kh * kw],
                        b: vec![F::zero(); *out_channels],
                        in_c: in_shape[0],
                        in_h: in_shape[1],
                        in_w: in_shape[2],
                        out_c: *out_channels,
                        kh,
                        kw,
                        stride: *stride,
                        pad: *padding,
                        out_h: out_shape[1],
                        out_w: out_shape[2],
                    });
                    layer.init_params(&mut rng);
                    layer
                }
                LayerSpec::Dense { out_features } => {
                    let mut layer = Layer::Dense(DenseLayer {
                        w: vec![F::zero(); out_features * in_shape[0]],
                        b: vec![F::zero(); *out_features],
                        in_features: in_shape[0],
                        out_features: *out_features,
                    });
                    layer.init_params(&mut rng);
                    layer
                }
                LayerSpec::ReLU => Layer::ReLU {
                    len: in_shape.iter().product(),
                },
                LayerSpec::ELU => Layer::ELU {
                    len: in_shape.iter().product(),
                },
                LayerSpec::SELU => Layer::SELU {
                    len: in_shape.iter().product(),
                },
                LayerSpec::AveragePool { window } => Layer::AvgPool(PoolLayer {
                    c: in_shape[0],
                    in_h: in_shape[1],
                    in_w: in_shape[2],
                    wh: window.0,
                    ww: window.1,
                    out_h: out_shape[1],
                    out_w: out_shape[2],
                }),
                LayerSpec::Flatten => Layer::Flatten {
                    len: in_shape.iter().product(),
                },
                LayerSpec::Dropout { p } => Layer::Dropout {
                    p: *p,
                    len: in_shape.iter().product(),
                },
                LayerSpec::Softmax => {
                    // handled by the loss / predict_proba, not a runtime layer
                    in_shape = out_shape.clone();
                    continue;
                }
            };
            layers.push(layer);
            in_shape = out_shape.clone();
        }
        Ok(Self {
            config,
            layers,
            rng_seed: seed,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn num_labels(&self) -> usize {
        self.config.num_labels
    }

    pub fn input_len(&self) -> usize {
        self.config.input_shape.iter().product()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => d.w.len() + d.b.len(),
                Layer::Conv(c) => c.w.len() + c.b.len(),
                _ => 0,
            })
            .sum()
    }

    /// Names of the parameterized layers, in network order: `conv1`,
    /// `conv2`, …, `dense1`, `dense2`, … Numbering is per kind.
    pub fn layer_names(&self) -> Vec<(usize, String)> {
        let mut names = Vec::new();
        let (mut conv_n, mut dense_n) = (0usize, 0usize);
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv(_) => {
                    conv_n += 1;
                    names.push((i, format!("conv{conv_n}")));
                }
                Layer::Dense(_) => {
                    dense_n += 1;
                    names.push((i, format!("dense{dense_n}")));
                }
                _ => {}
            }
        }
        names
    }

    pub(crate) fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer<F>] {
        &mut self.layers
    }

    /// Concatenation of all parameters, used by byte-level comparisons.
    pub fn flat_params(&self) -> Vec<F> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.extend_from_slice(&d.w);
                    out.extend_from_slice(&d.b);
                }
                Layer::Conv(c) => {
                    out.extend_from_slice(&c.w);
                    out.extend_from_slice(&c.b);
                }
                _ => {}
            }
        }
        out
    }

    fn check_batch_shape(&self, batch: &Tensor<F>) -> Result<usize> {
        let shape = batch.shape();
        if shape.len() != self.config.input_shape.len() + 1
            || shape[1..] != self.config.input_shape[..]
        {
            return Err(Error::ShapeMismatch {
                expected: format!("[B, {}]", dims_to_string(&self.config.input_shape)),
                got: format!("{shape:?}"),
            });
        }
        Ok(shape[0])
    }

    /// Logits for a batch shaped [B, …input_shape], deterministic
    /// (dropout disabled).
    pub fn forward(&self, batch: &Tensor<F>) -> Result<Tensor<F>> {
        let b = self.check_batch_shape(batch)?;
        let mut cur = batch.data().to_vec();
        let mut mode = Mode::Eval;
        for layer in &self.layers {
            let (next, _) = layer.forward(&cur, b, &mut mode);
            cur = next;
        }
        Tensor::from_vec(&[b, self.config.num_labels], cur)
    }

    /// Softmax probabilities for a batch, rows summing to 1.
    pub fn predict_proba(&self, batch: &Tensor<F>) -> Result<Tensor<F>> {
        let logits = self.forward(batch)?;
        let k = self.config.num_labels;
        let mut data = logits.data().to_vec();
        for row in data.chunks_mut(k) {
            softmax_in_place(row);
        }
        Tensor::from_vec(logits.shape(), data)
    }

    /// Argmax labels for a batch.
    pub fn predict_labels(&self, batch: &Tensor<F>) -> Result<Vec<usize>> {
        let logits = self.forward(batch)?;
        Ok(logits
            .data()
            .chunks(self.config.num_labels)
            .map(argmax)
            .collect())
    }

    /// Forward keeping intermediate activations; training mode draws
    /// dropout masks from `rng`.
    pub(crate) fn forward_cached(
        &self,
        batch: &Tensor<F>,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Caches<F>> {
        let b = self.check_batch_shape(batch)?;
        let mut mode = match rng {
            Some(r) => Mode::Train(r),
            None => Mode::Eval,
        };
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut masks = Vec::with_capacity(self.layers.len());
        acts.push(batch.data().to_vec());
        for layer in &self.layers {
            let (next, mask) = layer.forward(acts.last().expect("pushed"), b, &mut mode);
            acts.push(next);
            masks.push(mask);
        }
        Ok(Caches { acts, masks })
    }

    /// Backpropagate `grad_logits` through the stack, returning per-layer
    /// parameter gradients (None for non-parameterized or frozen layers).
    pub(crate) fn backward(
        &self,
        caches: &Caches<F>,
        grad_logits: Vec<F>,
        batch: usize,
        trainable: Option<&[bool]>,
    ) -> Vec<Option<ParamGrads<F>>> {
        // Backprop may stop below the lowest trainable layer.
        let stop = trainable
            .map(|t| t.iter().position(|&x| x).unwrap_or(self.layers.len()))
            .unwrap_or(0);
        let mut grads: Vec<Option<ParamGrads<F>>> = (0..self.layers.len()).map(|_| None).collect();
        let mut grad = grad_logits;
        for i in (stop..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let wants_params = layer.has_params() && trainable.map(|t| t[i]).unwrap_or(true);
            let (gin, pg) = layer.backward(
                &caches.acts[i],
                &grad,
                batch,
                caches.masks[i].as_deref(),
                i > stop,
            );
            if wants_params {
                grads[i] = pg;
            }
            grad = gin;
        }
        grads
    }

    // -------------------------------------------------------------------
    // Checkpoints
    // -------------------------------------------------------------------

    /// Write the checkpoint: magic, version, init seed, canonical config
    /// text plus its digest, then one little-endian f32 blob per parameter
    /// array.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.rng_seed.to_le_bytes());
        let config_text = self.config.canonical_text();
        out.extend_from_slice(&(config_text.len() as u32).to_le_bytes());
        out.extend_from_slice(config_text.as_bytes());
        out.extend_from_slice(&self.config.digest());
        let blobs = self.param_blobs();
        out.extend_from_slice(&(blobs.len() as u32).to_le_bytes());
        for blob in blobs {
            out.extend_from_slice(&(blob.len() as u32).to_le_bytes());
            for v in blob {
                out.extend_from_slice(&(v.into_f64() as f32).to_le_bytes());
            }
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(&out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut r = ByteReader::new(&bytes, path);
        let magic = r.take(5)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!(
                "{} is not a checkpoint (bad magic)",
                path.display()
            )));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let seed = r.u64()?;
        let config_len = r.u32()? as usize;
        let config_text = std::str::from_utf8(r.take(config_len)?)
            .map_err(|_| Error::Format("config text is not UTF-8".into()))?
            .to_string();
        let digest: [u8; 32] = r.take(32)?.try_into().expect("length checked");
        let expected: [u8; 32] = Sha256::digest(config_text.as_bytes()).into();
        if digest != expected {
            return Err(Error::Format(
                "checkpoint config digest does not match config text".into(),
            ));
        }
        let config = NetworkConfig::parse(&config_text)?;
        let mut net = Network::init(config, seed)?;
        let blob_count = r.u32()? as usize;
        let mut blobs = Vec::with_capacity(blob_count);
        for _ in 0..blob_count {
            let n = r.u32()? as usize;
            let raw = r.take(n * 4)?;
            let mut blob = Vec::with_capacity(n);
            for chunk in raw.chunks_exact(4) {
                let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
                blob.push(F::cast(v as f64));
            }
            blobs.push(blob);
        }
        net.set_param_blobs(&blobs)?;
        Ok(net)
    }

    fn param_blobs(&self) -> Vec<&[F]> {
        let mut blobs = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    blobs.push(d.w.as_slice());
                    blobs.push(d.b.as_slice());
                }
                Layer::Conv(c) => {
                    blobs.push(c.w.as_slice());
                    blobs.push(c.b.as_slice());
                }
                _ => {}
            }
        }
        blobs
    }

    fn set_param_blobs(&mut self, blobs: &[Vec<F>]) -> Result<()> {
        let mut it = blobs.iter();
        let mut assign = |target: &mut Vec<F>| -> Result<()> {
            let blob = it
                .next()
                .ok_or_else(|| Error::Format("checkpoint has too few parameter blobs".into()))?;
            if blob.len() != target.len() {
                return Err(Error::Format(format!(
                    "parameter blob of {} values does not fit array of {}",
                    blob.len(),
                    target.len()
                )));
            }
            target.copy_from_slice(blob);
            Ok(())
        };
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => {
                    assign(&mut d.w)?;
                    assign(&mut d.b)?;
                }
                Layer::Conv(c) => {
                    assign(&mut c.w)?;
                    assign(&mut c.b)?;
                }
                _ => {}
            }
        }
        if it.next().is_some() {
            return Err(Error::Format(
                "checkpoint has more parameter blobs than the config declares".into(),
            ));
        }
        Ok(())
    }

    /// Index (into the layer stack) of the last dense layer.
    pub(crate) fn last_dense_index(&self) -> Option<usize> {
        self.layers
            .iter()
            .rposition(|l| matches!(l, Layer::Dense(_)))
    }
}

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Self { bytes, pos: 0, path }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format(format!(
                "{} is truncated",
                self.path.display()
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8")))
    }
}

// ---------------------------------------------------------------------------
// Softmax helpers
// ---------------------------------------------------------------------------

/// Numerically stable in-place softmax of one row.
pub(crate) fn softmax_in_place<F: Scalar>(row: &mut [F]) {
    let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

/// Log-sum-exp-stabilized cross-entropy of one logit row against a label.
pub(crate) fn cross_entropy_row<F: Scalar>(row: &[F], label: usize) -> f64 {
    let max = row.iter().cloned().fold(F::neg_infinity(), F::max);
    let sum: F = row.iter().map(|&v| (v - max).exp()).sum();
    (max + sum.ln() - row[label]).into_f64()
}

pub(crate) fn argmax<F: Scalar>(row: &[F]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> NetworkConfig {
        NetworkConfig {
            input_shape: vec![4],
            num_labels: 2,
            layers: vec![
                LayerSpec::Dense { out_features: 3 },
                LayerSpec::ReLU,
                LayerSpec::Dense { out_features: 2 },
                LayerSpec::Softmax,
            ],
        }
    }

    #[test]
    fn init_is_deterministic() {
        let a = Network::<f32>::init(tiny_config(), 42).unwrap();
        let b = Network::<f32>::init(tiny_config(), 42).unwrap();
        assert_eq!(a.flat_params(), b.flat_params());
        let c = Network::<f32>::init(tiny_config(), 43).unwrap();
        assert_ne!(a.flat_params(), c.flat_params());
    }

    #[test]
    fn dense_parameter_shapes() {
        let net = Network::<f32>::init(tiny_config(), 0).unwrap();
        match &net.layers()[0] {
            Layer::Dense(d) => {
                assert_eq!(d.w.len(), 3 * 4);
                assert_eq!(d.b.len(), 3);
                assert!(d.b.iter().all(|&v| v == 0.0));
            }
            _ => panic!("expected dense layer"),
        }
    }

    #[test]
    fn zero_weight_network_gives_uniform_probs() {
        let mut net = Network::<f64>::init(tiny_config(), 1).unwrap();
        for layer in net.layers_mut() {
            if let Layer::Dense(d) = layer {
                d.w.iter_mut().for_each(|w| *w = 0.0);
            }
        }
        let batch = Tensor::from_vec(&[1, 4], vec![0.3, -0.1, 0.7, 0.2]).unwrap();
        let logits = net.forward(&batch).unwrap();
        assert!(logits.data().iter().all(|&v| v == 0.0));
        let probs = net.predict_proba(&batch).unwrap();
        assert!((probs.data()[0] - 0.5).abs() < 1e-12);
        assert!((probs.data()[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn identity_dense_passes_input_through() {
        let config = NetworkConfig {
            input_shape: vec![2],
            num_labels: 2,
            layers: vec![LayerSpec::Dense { out_features: 2 }, LayerSpec::Softmax],
        };
        let mut net = Network::<f64>::init(config, 0).unwrap();
        if let Layer::Dense(d) = &mut net.layers_mut()[0] {
            d.w.copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
            d.b.copy_from_slice(&[0.0, 0.0]);
        }
        let batch = Tensor::from_vec(&[2, 2], vec![0.1, 0.9, -2.0, 3.0]).unwrap();
        let logits = net.forward(&batch).unwrap();
        assert_eq!(logits.data(), batch.data());
    }

    #[test]
    fn forward_rejects_wrong_shape() {
        let net = Network::<f32>::init(tiny_config(), 0).unwrap();
        let batch = Tensor::zeros(&[2, 5]);
        assert!(matches!(
            net.forward(&batch),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn validation_rejects_non_composing_shapes() {
        let config = NetworkConfig {
            input_shape: vec![1, 4, 4],
            num_labels: 2,
            layers: vec![LayerSpec::Dense { out_features: 2 }, LayerSpec::Softmax],
        };
        assert!(matches!(config.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn validation_requires_final_softmax_width() {
        let config = NetworkConfig {
            input_shape: vec![4],
            num_labels: 3,
            layers: vec![LayerSpec::Dense { out_features: 2 }, LayerSpec::Softmax],
        };
        assert!(matches!(config.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn config_text_round_trip() {
        let config = NetworkConfig::mini_eeg(8, 64, 2);
        let text = config.canonical_text();
        let parsed = NetworkConfig::parse(&text).unwrap();
        assert_eq!(parsed, config);
        assert_eq!(parsed.digest(), config.digest());
    }

    #[test]
    fn config_parse_accepts_comments_and_options() {
        let text = "
            # a toy stack
            input 1x4x6
            labels 2
            conv2d 2 3x3 stride 1 pad 1
            relu
            flatten
            dense 2
            softmax
        ";
        let config = NetworkConfig::parse(text).unwrap();
        assert_eq!(config.layers.len(), 5);
        assert!(config.validate().is_ok());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let net = Network::<f32>::init(NetworkConfig::mini_eeg(8, 24, 2), 9).unwrap();
        let path = dir.path().join("model.ckpt");
        net.save(&path).unwrap();
        let loaded = Network::<f32>::load(&path).unwrap();
        assert_eq!(loaded.flat_params(), net.flat_params());
        assert_eq!(loaded.config(), net.config());
        assert_eq!(loaded.rng_seed(), net.rng_seed());
    }

    #[test]
    fn checkpoint_rejects_tampered_digest() {
        let dir = tempfile::tempdir().unwrap();
        let net = Network::<f32>::init(tiny_config(), 3).unwrap();
        let path = dir.path().join("model.ckpt");
        net.save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // flip a bit inside the stored config text
        bytes[20] ^= 0x01;
        std::fs::write(&path, &bytes).unwrap();
        assert!(Network::<f32>::load(&path).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut row = vec![1e5f32, -1e5, 3.0];
        softmax_in_place(&mut row);
        let sum: f32 = row.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert!(row.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn eegnet_lite_composes() {
        let config = NetworkConfig::eegnet_lite(8, 64, 2);
        assert!(config.validate().is_ok());
    }
}
