//! Training loop (Adam + softmax cross-entropy), evaluation, and the
//! finite-difference gradient check.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{Layer, ParamGrads};
use super::network::{argmax, cross_entropy_row, softmax_in_place, Network};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Hyperparameters for one training run.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop when validation loss has not improved for this many consecutive
    /// epochs; 0 disables early stopping.
    pub early_stop_patience: usize,
    pub shuffle_seed: u64,
    /// Per-sample gradient L2 cap applied before batch averaging; 0
    /// disables. Out-of-bound trigger samples produce gradients several
    /// orders of magnitude above clean ones; without the cap they poison
    /// Adam's second-moment estimates and freeze every shared weight.
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 10,
            early_stop_patience: 5,
            shuffle_seed: 0,
            grad_clip: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate {} invalid",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Aggregate evaluation result.
#[derive(Debug, Clone)]
pub struct Metrics {
    pub accuracy: f64,
    pub mean_loss: f64,
    /// Row-major |Y|×|Y| counts: confusion[true * k + predicted].
    pub confusion: Vec<usize>,
    pub n: usize,
}

/// One row of the per-epoch training log.
#[derive(Debug, Clone)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamSlot<F> {
    m_w: Vec<F>,
    v_w: Vec<F>,
    m_b: Vec<F>,
    v_b: Vec<F>,
}

/// Per-network Adam moment estimates.
pub struct AdamState<F> {
    t: u64,
    slots: Vec<Option<AdamSlot<F>>>,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(net: &Network<F>) -> Self {
        let slots = net
            .layers()
            .iter()
            .map(|l| match l {
                Layer::Dense(d) => Some(AdamSlot {
                    m_w: vec![F::zero(); d.w.len()],
                    v_w: vec![F::zero(); d.w.len()],
                    m_b: vec![F::zero(); d.b.len()],
                    v_b: vec![F::zero(); d.b.len()],
                }),
                Layer::Conv(c) => Some(AdamSlot {
                    m_w: vec![F::zero(); c.w.len()],
                    v_w: vec![F::zero(); c.w.len()],
                    m_b: vec![F::zero(); c.b.len()],
                    v_b: vec![F::zero(); c.b.len()],
                }),
                _ => None,
            })
            .collect();
        Self { t: 0, slots }
    }

    fn step(&mut self, net: &mut Network<F>, grads: &[Option<ParamGrads<F>>], lr: f64) {
        self.t += 1;
        let b1 = F::cast(ADAM_BETA1);
        let b2 = F::cast(ADAM_BETA2);
        let eps = F::cast(ADAM_EPS);
        let corr1 = F::cast(1.0 - ADAM_BETA1.powi(self.t as i32));
        let corr2 = F::cast(1.0 - ADAM_BETA2.powi(self.t as i32));
        let lr = F::cast(lr);
        for (i, layer) in net.layers_mut().iter_mut().enumerate() {
            let (Some(slot), Some(g)) = (self.slots[i].as_mut(), grads[i].as_ref()) else {
                continue;
            };
            let (w, b): (&mut [F], &mut [F]) = match layer {
                Layer::Dense(d) => (&mut d.w, &mut d.b),
                Layer::Conv(c) => (&mut c.w, &mut c.b),
                _ => continue,
            };
            adam_update(w, &g.w, &mut slot.m_w, &mut slot.v_w, b1, b2, eps, corr1, corr2, lr);
            adam_update(b, &g.b, &mut slot.m_b, &mut slot.v_b, b1, b2, eps, corr1, corr2, lr);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_update<F: Scalar>(
    params: &mut [F],
    grads: &[F],
    m: &mut [F],
    v: &mut [F],
    b1: F,
    b2: F,
    eps: F,
    corr1: F,
    corr2: F,
    lr: F,
) {
    let one = F::one();
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / corr1;
        let v_hat = v[i] / corr2;
        params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

/// Epoch-at-a-time trainer holding optimizer state and the RNG stream, so
/// callers (attacks, fine-tuning) can interleave epochs with measurements.
pub struct Trainer<F> {
    adam: AdamState<F>,
    rng: ChaCha8Rng,
    cfg: TrainConfig,
}

impl<F: Scalar> Trainer<F> {
    pub fn new(net: &Network<F>, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            adam: AdamState::new(net),
            rng: ChaCha8Rng::seed_from_u64(cfg.shuffle_seed),
            cfg,
        })
    }

    /// Run one shuffled epoch. `trainable` optionally freezes layers (by
    /// layer index). Returns (mean loss, accuracy) over the epoch, measured
    /// with the dropout masks that were active.
    ///
    /// Gradients are computed per sample, clipped to `grad_clip`, and
    /// averaged over the batch before the Adam step.
    pub fn epoch(
        &mut self,
        net: &mut Network<F>,
        inputs: &Tensor<F>,
        labels: &[u8],
        trainable: Option<&[bool]>,
    ) -> Result<(f64, f64)> {
        let n = labels.len();
        let sample_len = net.input_len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let k = net.num_labels();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut sample_shape = vec![1usize];
        sample_shape.extend_from_slice(&net.config().input_shape);
        for chunk in order.chunks(self.cfg.batch_size) {
            let b = chunk.len();
            let mut acc: Vec<Option<ParamGrads<F>>> =
                (0..net.layers().len()).map(|_| None).collect();
            for &idx in chunk {
                let sample =
                    Tensor::from_vec(&sample_shape, inputs.row(idx, sample_len).to_vec())?;
                let caches = net.forward_cached(&sample, Some(&mut self.rng))?;
                let logits = caches.logits();
                let label = labels[idx] as usize;
                loss_sum += cross_entropy_row(logits, label);
                if argmax(logits) == label {
                    correct += 1;
                }
                let mut grad = logits.to_vec();
                softmax_in_place(&mut grad);
                grad[label] = grad[label] - F::one();
                let mut grads = net.backward(&caches, grad, 1, trainable);
                clip_grads(&mut grads, self.cfg.grad_clip);
                accumulate(&mut acc, &grads);
            }
            scale_grads(&mut acc, 1.0 / b as f64);
            self.adam.step(net, &acc, self.cfg.learning_rate);
        }
        Ok((loss_sum / n as f64, correct as f64 / n as f64))
    }
}

/// Scale a sample's gradients so their global L2 norm is at most `clip`.
fn clip_grads<F: Scalar>(grads: &mut [Option<ParamGrads<F>>], clip: f64) {
    if clip <= 0.0 {
        return;
    }
    let mut sq = 0.0f64;
    for g in grads.iter().flatten() {
        for v in g.w.iter().chain(&g.b) {
            let v = v.into_f64();
            sq += v * v;
        }
    }
    let norm = sq.sqrt();
    if norm > clip {
        let scale = F::cast(clip / norm);
        for g in grads.iter_mut().flatten() {
            g.w.iter_mut().for_each(|v| *v = *v * scale);
            g.b.iter_mut().for_each(|v| *v = *v * scale);
        }
    }
}

fn accumulate<F: Scalar>(acc: &mut [Option<ParamGrads<F>>], grads: &[Option<ParamGrads<F>>]) {
    for (slot, g) in acc.iter_mut().zip(grads) {
        match (slot.as_mut(), g) {
            (Some(a), Some(g)) => {
                a.w.iter_mut().zip(&g.w).for_each(|(a, &b)| *a += b);
                a.b.iter_mut().zip(&g.b).for_each(|(a, &b)| *a += b);
            }
            (None, Some(g)) => *slot = Some(g.clone()),
            _ => {}
        }
    }
}

fn scale_grads<F: Scalar>(acc: &mut [Option<ParamGrads<F>>], factor: f64) {
    let f = F::cast(factor);
    for g in acc.iter_mut().flatten() {
        g.w.iter_mut().for_each(|v| *v = *v * f);
        g.b.iter_mut().for_each(|v| *v = *v * f);
    }
}

// ---------------------------------------------------------------------------
// train / evaluate
// ---------------------------------------------------------------------------

/// Train a network in place. Shuffling, dropout, and therefore the final
/// parameters are a pure function of (initial network, data, config).
/// Early stopping watches validation loss with the configured patience.
pub fn train<F: Scalar>(
    net: &mut Network<F>,
    train_inputs: &Tensor<F>,
    train_labels: &[u8],
    val: Option<(&Tensor<F>, &[u8])>,
    cfg: &TrainConfig,
) -> Result<Vec<EpochMetrics>> {
    cfg.validate()?;
    if train_labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(&bad) = train_labels.iter().find(|&&l| (l as usize) >= net.num_labels()) {
        return Err(Error::Config(format!(
            "label {bad} outside 0..{}",
            net.num_labels()
        )));
    }
    let mut trainer = Trainer::new(net, cfg.clone())?;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best_val = f64::INFINITY;
    let mut stale = 0usize;
    for epoch in 0..cfg.epochs {
        let (train_loss, train_accuracy) =
            trainer.epoch(net, train_inputs, train_labels, None)?;
        if !train_loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        let (val_loss, val_accuracy) = match val {
            Some((vi, vl)) if !vl.is_empty() => {
                let m = evaluate(net, vi, vl)?;
                (Some(m.mean_loss), Some(m.accuracy))
            }
            _ => (None, None),
        };
        history.push(EpochMetrics {
            epoch,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        });
        if let Some(vl) = val_loss {
            if vl < best_val {
                best_val = vl;
                stale = 0;
            } else {
                stale += 1;
                if cfg.early_stop_patience > 0 && stale >= cfg.early_stop_patience {
                    break;
                }
            }
        }
    }
    Ok(history)
}

/// Accuracy, mean loss, and confusion counts over a labelled set
/// (deterministic; dropout disabled).
pub fn evaluate<F: Scalar>(
    net: &Network<F>,
    inputs: &Tensor<F>,
    labels: &[u8],
) -> Result<Metrics> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let k = net.num_labels();
    let sample_len = net.input_len();
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let mut confusion = vec![0usize; k * k];
    let mut batch_shape = vec![0usize];
    batch_shape.extend_from_slice(&net.config().input_shape);
    let chunk_size = 256;
    for start in (0..n).step_by(chunk_size) {
        let end = (start + chunk_size).min(n);
        let b = end - start;
        batch_shape[0] = b;
        let data = inputs.data()[start * sample_len..end * sample_len].to_vec();
        let batch = Tensor::from_vec(&batch_shape, data)?;
        let logits = net.forward(&batch)?;
        for s in 0..b {
            let row = logits.row(s, k);
            let label = labels[start + s] as usize;
            let pred = argmax(row);
            loss_sum += cross_entropy_row(row, label);
            if pred == label {
                correct += 1;
            }
            confusion[label * k + pred] += 1;
        }
    }
    Ok(Metrics {
        accuracy: correct as f64 / n as f64,
        mean_loss: loss_sum / n as f64,
        confusion,
        n,
    })
}

// ---------------------------------------------------------------------------
// Gradient check
// ---------------------------------------------------------------------------

/// Compare analytic parameter gradients against central finite differences
/// on `sample_count` randomly chosen parameters (all of them if the network
/// is smaller). Returns the maximum relative error. Dropout is disabled on
/// both paths.
pub fn gradient_check<F: Scalar>(
    net: &Network<F>,
    input: &Tensor<F>,
    label: u8,
    epsilon: f64,
    sample_count: usize,
    seed: u64,
) -> Result<f64> {
    let mut net = net.clone();
    let caches = net.forward_cached(input, None)?;
    let k = net.num_labels();
    let logits = caches.logits().to_vec();
    let mut grad = logits.clone();
    softmax_in_place(&mut grad);
    grad[label as usize] = grad[label as usize] - F::one();
    let analytic = net.backward(&caches, grad, 1, None);

    // flatten (layer, which, index) coordinates of every parameter
    let mut coords = Vec::new();
    for (li, g) in analytic.iter().enumerate() {
        if let Some(pg) = g {
            for wi in 0..pg.w.len() {
                coords.push((li, 0usize, wi));
            }
            for bi in 0..pg.b.len() {
                coords.push((li, 1usize, bi));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picks: Vec<(usize, usize, usize)> = if coords.len() <= sample_count {
        coords
    } else {
        (0..sample_count)
            .map(|_| coords[rng.gen_range(0..coords.len())])
            .collect()
    };

    let mut max_rel = 0.0f64;
    for (li, which, idx) in picks {
        let a = {
            let pg = analytic[li].as_ref().expect("coordinate from analytic");
            if which == 0 { pg.w[idx] } else { pg.b[idx] }.into_f64()
        };
        let orig = read_param(&net, li, which, idx);
        write_param(&mut net, li, which, idx, orig + F::cast(epsilon));
        let plus = loss_of(&net, input, label as usize, k)?;
        write_param(&mut net, li, which, idx, orig - F::cast(epsilon));
        let minus = loss_of(&net, input, label as usize, k)?;
        write_param(&mut net, li, which, idx, orig);
        let numeric = (plus - minus) / (2.0 * epsilon);
        let denom = a.abs().max(numeric.abs()).max(1e-6);
        let rel = (a - numeric).abs() / denom;
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}

fn loss_of<F: Scalar>(net: &Network<F>, input: &Tensor<F>, label: usize, k: usize) -> Result<f64> {
    let logits = net.forward(input)?;
    Ok(cross_entropy_row(&logits.data()[..k], label))
}

fn read_param<F: Scalar>(net: &Network<F>, li: usize, which: usize, idx: usize) -> F {
    match &net.layers()[li] {
        Layer::Dense(d) => {
            if which == 0 {
                d.w[idx]
            } else {
                d.b[idx]
            }
        }
        Layer::Conv(c) => {
            if which == 0 {
                c.w[idx]
            } else {
                c.b[idx]
            }
        }
        _ => unreachable!("parameterized layers only"),
    }
}

fn write_param<F: Scalar>(net: &mut Network<F>, li: usize, which: usize, idx: usize, v: F) {
    match &mut net.layers_mut()[li] {
        Layer::Dense(d) => {
            if which == 0 {
                d.w[idx] = v
            } else {
                d.b[idx] = v
            }
        }
        Layer::Conv(c) => {
            if which == 0 {
                c.w[idx] = v
            } else {
                c.b[idx] = v
            }
        }
        _ => unreachable!("parameterized layers only"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::NetworkConfig;
    use crate::nn::LayerSpec;

    fn toy_linear_set(n: usize, seed: u64) -> (Tensor<f32>, Vec<u8>) {
        // two Gaussian-ish blobs separated along x0 + x1
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(n * 2);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let label = (i % 2) as u8;
            let center = if label == 0 { -1.0 } else { 1.0 };
            data.push((center + 0.3 * (rng.gen::<f64>() - 0.5)) as f32);
            data.push((center + 0.3 * (rng.gen::<f64>() - 0.5)) as f32);
            labels.push(label);
        }
        (Tensor::from_vec(&[n, 2], data).unwrap(), labels)
    }

    fn linear_config() -> NetworkConfig {
        NetworkConfig {
            input_shape: vec![2],
            num_labels: 2,
            layers: vec![
                LayerSpec::Dense { out_features: 8 },
                LayerSpec::ReLU,
                LayerSpec::Dense { out_features: 2 },
                LayerSpec::Softmax,
            ],
        }
    }

    #[test]
    fn separable_toy_set_reaches_high_accuracy() {
        let (inputs, labels) = toy_linear_set(200, 1);
        let mut net = Network::<f32>::init(linear_config(), 11).unwrap();
        let cfg = TrainConfig {
            epochs: 50,
            early_stop_patience: 0,
            shuffle_seed: 3,
            ..TrainConfig::default()
        };
        train(&mut net, &inputs, &labels, None, &cfg).unwrap();
        let m = evaluate(&net, &inputs, &labels).unwrap();
        assert!(m.accuracy >= 0.99, "accuracy {}", m.accuracy);
    }

    #[test]
    fn zero_epochs_changes_nothing() {
        let (inputs, labels) = toy_linear_set(10, 2);
        let mut net = Network::<f32>::init(linear_config(), 5).unwrap();
        let before = net.flat_params();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let history = train(&mut net, &inputs, &labels, None, &cfg).unwrap();
        assert!(history.is_empty());
        assert_eq!(net.flat_params(), before);
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let (inputs, labels) = toy_linear_set(16, 3);
        let mut net = Network::<f32>::init(linear_config(), 5).unwrap();
        let before = net.flat_params();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            ..TrainConfig::default()
        };
        train(&mut net, &inputs, &labels, None, &cfg).unwrap();
        assert_eq!(net.flat_params(), before);
    }

    #[test]
    fn training_is_reproducible() {
        let (inputs, labels) = toy_linear_set(64, 4);
        let cfg = TrainConfig {
            epochs: 5,
            shuffle_seed: 9,
            ..TrainConfig::default()
        };
        let mut a = Network::<f32>::init(linear_config(), 21).unwrap();
        train(&mut a, &inputs, &labels, None, &cfg).unwrap();
        let mut b = Network::<f32>::init(linear_config(), 21).unwrap();
        train(&mut b, &inputs, &labels, None, &cfg).unwrap();
        assert_eq!(a.flat_params(), b.flat_params());
    }

    #[test]
    fn early_stopping_triggers_on_plateau() {
        let (inputs, labels) = toy_linear_set(64, 5);
        // tiny fixed validation set the model immediately separates;
        // learning rate 0 makes every epoch identical, so val loss plateaus
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 50,
            early_stop_patience: 5,
            ..TrainConfig::default()
        };
        let mut net = Network::<f32>::init(linear_config(), 2).unwrap();
        let history = train(
            &mut net,
            &inputs,
            &labels,
            Some((&inputs, &labels)),
            &cfg,
        )
        .unwrap();
        // epoch 0 sets the best; epochs 1..=5 are stale
        assert_eq!(history.len(), 6);
    }

    #[test]
    fn evaluate_counts_confusion() {
        let mut net = Network::<f32>::init(linear_config(), 1).unwrap();
        let (inputs, labels) = toy_linear_set(40, 6);
        let cfg = TrainConfig {
            epochs: 40,
            early_stop_patience: 0,
            ..TrainConfig::default()
        };
        train(&mut net, &inputs, &labels, None, &cfg).unwrap();
        let m = evaluate(&net, &inputs, &labels).unwrap();
        let total: usize = m.confusion.iter().sum();
        assert_eq!(total, 40);
        let correct = m.confusion[0] + m.confusion[3];
        assert_eq!(correct as f64 / 40.0, m.accuracy);
    }

    #[test]
    fn evaluate_rejects_empty() {
        let net = Network::<f32>::init(linear_config(), 0).unwrap();
        let inputs = Tensor::zeros(&[0, 2]);
        assert!(matches!(
            evaluate(&net, &inputs, &[]),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn label_complement_flips_binary_accuracy() {
        let (inputs, labels) = toy_linear_set(30, 7);
        let mut net = Network::<f32>::init(linear_config(), 3).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            early_stop_patience: 0,
            ..TrainConfig::default()
        };
        train(&mut net, &inputs, &labels, None, &cfg).unwrap();
        let m = evaluate(&net, &inputs, &labels).unwrap();
        let flipped: Vec<u8> = labels.iter().map(|&l| 1 - l).collect();
        let mf = evaluate(&net, &inputs, &flipped).unwrap();
        assert!((m.accuracy + mf.accuracy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_check_dense_f64() {
        let net = Network::<f64>::init(linear_config(), 17).unwrap();
        let input = Tensor::from_vec(&[1, 2], vec![0.4, -0.7]).unwrap();
        let err = gradient_check(&net, &input, 1, 1e-4, 200, 0).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn gradient_check_zero_network_is_finite() {
        let config = NetworkConfig {
            input_shape: vec![3],
            num_labels: 2,
            layers: vec![LayerSpec::Dense { out_features: 2 }, LayerSpec::Softmax],
        };
        let mut net = Network::<f64>::init(config, 0).unwrap();
        for layer in net.layers_mut() {
            if let Layer::Dense(d) = layer {
                d.w.iter_mut().for_each(|w| *w = 0.0);
            }
        }
        let input = Tensor::from_vec(&[1, 3], vec![0.0, 0.0, 0.0]).unwrap();
        let err = gradient_check(&net, &input, 0, 1e-4, 100, 1).unwrap();
        assert!(err.is_finite());
        assert!(err < 1e-4);
    }
}
