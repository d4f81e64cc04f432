//! Adversarial evaluation: fine-tuning, transfer learning, pruning sweeps,
//! piracy (second-watermark) attempts, and random-signature probes.
//!
//! Every attack clones the model it is given — the input network is never
//! mutated — and reports a per-step trajectory of three accuracies: the
//! primary task on held-out data, the true embedding (W-overlaid inputs
//! against the target label), and the null embedding (W⁻-overlaid inputs
//! against their original labels, matching how those samples are trained).

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{build_trigger_set, EEGDataset};
use crate::error::{Error, Result};
use crate::filter::{transform, HashSuite, WonderFilter};
use crate::identity::{sign_verifier, OwnerKeypair, PublicKey, Signature, VerifierString};
use crate::nn::{prune, reinit_layers, LayerSelector, Network, PruneStrategy, Tensor, TrainConfig, Trainer};
use crate::nn::{Layer, LayerSpec};
use crate::pipeline::{verify_watermark, VerificationReport};
use crate::rng::sub_seed;
use crate::scalar::Scalar;

/// Task accuracy may drop this much before the attack counts as breaking
/// the primary task.
pub const TASK_DROP_TOLERANCE: f64 = 0.05;

// ---------------------------------------------------------------------------
// Modes and reports
// ---------------------------------------------------------------------------

/// Fine-tuning flavors: tune the last dense layer or all layers, each with
/// or without re-initializing the last dense layer first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FineTuneMode {
    Ftll,
    Ftal,
    Rtll,
    Rtal,
}

impl FineTuneMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FineTuneMode::Ftll => "FTLL",
            FineTuneMode::Ftal => "FTAL",
            FineTuneMode::Rtll => "RTLL",
            FineTuneMode::Rtal => "RTAL",
        }
    }
}

impl std::str::FromStr for FineTuneMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FTLL" => Ok(Self::Ftll),
            "FTAL" => Ok(Self::Ftal),
            "RTLL" => Ok(Self::Rtll),
            "RTAL" => Ok(Self::Rtal),
            other => Err(Error::Mode(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferMode {
    LastLayer,
    AllLayers,
}

impl TransferMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            TransferMode::LastLayer => "LAST_LAYER",
            TransferMode::AllLayers => "ALL_LAYERS",
        }
    }
}

impl std::str::FromStr for TransferMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LAST_LAYER" | "LASTLAYER" => Ok(Self::LastLayer),
            "ALL_LAYERS" | "ALLLAYERS" => Ok(Self::AllLayers),
            other => Err(Error::Mode(other.to_string())),
        }
    }
}

/// One measured point of an attack trajectory.
#[derive(Debug, Clone)]
pub struct StepMetrics {
    pub step: usize,
    pub eeg_accuracy: f64,
    pub true_embed_accuracy: f64,
    pub null_embed_accuracy: f64,
}

/// Full attack trajectory plus verdicts.
#[derive(Debug, Clone)]
pub struct AttackReport {
    pub kind: String,
    pub mode: String,
    pub seed: u64,
    pub steps: Vec<StepMetrics>,
    /// Prune sweeps record the ratio of each step here.
    pub ratios: Option<Vec<f64>>,
    pub baseline_accuracy: f64,
    pub t_acc: f64,
    pub watermark_survived: bool,
    pub task_preserved: bool,
}

impl AttackReport {
    fn from_steps(
        kind: &str,
        mode: &str,
        seed: u64,
        steps: Vec<StepMetrics>,
        ratios: Option<Vec<f64>>,
        eval: &WatermarkEval<impl Scalar>,
    ) -> Self {
        let last = steps.last().expect("at least the pre-attack step");
        Self {
            kind: kind.to_string(),
            mode: mode.to_string(),
            seed,
            watermark_survived: last.true_embed_accuracy >= eval.t_acc,
            task_preserved: last.eeg_accuracy >= eval.baseline_accuracy - TASK_DROP_TOLERANCE,
            baseline_accuracy: eval.baseline_accuracy,
            t_acc: eval.t_acc,
            steps,
            ratios,
        }
    }

    pub fn final_step(&self) -> &StepMetrics {
        self.steps.last().expect("non-empty")
    }

    /// Plot-ready CSV: `step,eeg_acc,true_acc,null_acc`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,eeg_acc,true_acc,null_acc\n");
        for m in &self.steps {
            let _ = writeln!(
                s,
                "{},{:.6},{:.6},{:.6}",
                m.step, m.eeg_accuracy, m.true_embed_accuracy, m.null_embed_accuracy
            );
        }
        s
    }

    /// Stable key-value summary.
    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "kind: {}", self.kind);
        let _ = writeln!(s, "mode: {}", self.mode);
        let _ = writeln!(s, "seed: {}", self.seed);
        let _ = writeln!(s, "steps: {}", self.steps.len());
        if let Some(ratios) = &self.ratios {
            let list = ratios
                .iter()
                .map(|r| format!("{r}"))
                .collect::<Vec<_>>()
                .join(",");
            let _ = writeln!(s, "ratios: {list}");
        }
        let last = self.final_step();
        let _ = writeln!(s, "final_eeg_accuracy: {:.4}", last.eeg_accuracy);
        let _ = writeln!(
            s,
            "final_true_embed_accuracy: {:.4}",
            last.true_embed_accuracy
        );
        let _ = writeln!(
            s,
            "final_null_embed_accuracy: {:.4}",
            last.null_embed_accuracy
        );
        let _ = writeln!(s, "baseline_accuracy: {:.4}", self.baseline_accuracy);
        let _ = writeln!(s, "t_acc: {:.4}", self.t_acc);
        let _ = writeln!(s, "watermark_survived: {}", self.watermark_survived);
        let _ = writeln!(s, "task_preserved: {}", self.task_preserved);
        s
    }
}

// ---------------------------------------------------------------------------
// WatermarkEval
// ---------------------------------------------------------------------------

/// Measurement context shared by all attacks: the owner's filter, a
/// held-out labelled eval set, and the acceptance threshold. The three
/// overlay variants are materialized once.
pub struct WatermarkEval<F> {
    filter: WonderFilter,
    pub t_acc: f64,
    pub baseline_accuracy: f64,
    clean: Tensor<F>,
    normal: Tensor<F>,
    null: Tensor<F>,
    labels: Vec<u8>,
}

impl<F: Scalar> WatermarkEval<F> {
    pub fn new(
        filter: &WonderFilter,
        eval_set: &EEGDataset<F>,
        input_shape: &[usize],
        t_acc: f64,
        baseline_accuracy: f64,
    ) -> Result<Self> {
        let clean = eval_set.input_batch(input_shape)?;
        let normal = eval_set.overlay_all(filter, false)?.input_batch(input_shape)?;
        let null = eval_set.overlay_all(filter, true)?.input_batch(input_shape)?;
        Ok(Self {
            filter: filter.clone(),
            t_acc,
            baseline_accuracy,
            clean,
            normal,
            null,
            labels: eval_set.labels().to_vec(),
        })
    }

    pub fn filter(&self) -> &WonderFilter {
        &self.filter
    }

    /// (task accuracy, true-embed accuracy, null-embed accuracy).
    pub fn measure(&self, net: &Network<F>, step: usize) -> Result<StepMetrics> {
        let n = self.labels.len() as f64;
        let clean_pred = net.predict_labels(&self.clean)?;
        let normal_pred = net.predict_labels(&self.normal)?;
        let null_pred = net.predict_labels(&self.null)?;
        let target = self.filter.target_label();
        let eeg = clean_pred
            .iter()
            .zip(&self.labels)
            .filter(|(p, l)| **p == **l as usize)
            .count() as f64
            / n;
        let true_embed = normal_pred.iter().filter(|&&p| p == target).count() as f64 / n;
        let null_embed = null_pred
            .iter()
            .zip(&self.labels)
            .filter(|(p, l)| **p == **l as usize)
            .count() as f64
            / n;
        Ok(StepMetrics {
            step,
            eeg_accuracy: eeg,
            true_embed_accuracy: true_embed,
            null_embed_accuracy: null_embed,
        })
    }
}

// ---------------------------------------------------------------------------
// Fine-tuning
// ---------------------------------------------------------------------------

/// Fine-tune a copy of the model on attacker data, measuring after every
/// epoch (step 0 is the pre-attack state).
pub fn fine_tune_attack<F: Scalar>(
    model: &Network<F>,
    attacker_data: &EEGDataset<F>,
    mode: FineTuneMode,
    epochs: usize,
    eval: &WatermarkEval<F>,
    cfg: &TrainConfig,
) -> Result<AttackReport> {
    let mut net = model.clone();
    if matches!(mode, FineTuneMode::Rtll | FineTuneMode::Rtal) {
        net = reinit_layers(
            &net,
            &LayerSelector::LastDense,
            sub_seed(cfg.shuffle_seed, "reinit-last-dense"),
        )?;
    }
    let trainable = match mode {
        FineTuneMode::Ftll | FineTuneMode::Rtll => Some(last_dense_mask(&net)?),
        FineTuneMode::Ftal | FineTuneMode::Rtal => None,
    };
    let inputs = attacker_data.input_batch(&net.config().input_shape)?;
    let mut trainer = Trainer::new(&net, cfg.clone())?;
    let mut steps = vec![eval.measure(&net, 0)?];
    for epoch in 1..=epochs {
        trainer.epoch(&mut net, &inputs, attacker_data.labels(), trainable.as_deref())?;
        steps.push(eval.measure(&net, epoch)?);
    }
    Ok(AttackReport::from_steps(
        "fine_tune",
        mode.as_str(),
        cfg.shuffle_seed,
        steps,
        None,
        eval,
    ))
}

fn last_dense_mask<F: Scalar>(net: &Network<F>) -> Result<Vec<bool>> {
    let idx = net
        .last_dense_index()
        .ok_or_else(|| Error::Selector("network has no dense layer".into()))?;
    let mut mask = vec![false; net.layers().len()];
    mask[idx] = true;
    Ok(mask)
}

// ---------------------------------------------------------------------------
// Transfer learning
// ---------------------------------------------------------------------------

/// Retrain a copy for a new task (possibly a different label count) by
/// replacing the classifier head. Watermark and task accuracies are
/// measured in the original label space by re-attaching a frozen copy of
/// the original head to the current trunk.
pub fn transfer_attack<F: Scalar>(
    model: &Network<F>,
    new_task: &EEGDataset<F>,
    mode: TransferMode,
    epochs: usize,
    eval: &WatermarkEval<F>,
    cfg: &TrainConfig,
) -> Result<AttackReport> {
    let input_shape = &model.config().input_shape;
    if new_task.sample_len() != input_shape.iter().product::<usize>() {
        return Err(Error::ShapeMismatch {
            expected: format!("{input_shape:?}"),
            got: format!("[{}, {}]", new_task.channels(), new_task.timepoints()),
        });
    }
    let mut net = replace_head(
        model,
        new_task.num_labels(),
        sub_seed(cfg.shuffle_seed, "transfer-head"),
    )?;
    let trainable = match mode {
        TransferMode::LastLayer => Some(last_dense_mask(&net)?),
        TransferMode::AllLayers => None,
    };
    let inputs = new_task.input_batch(input_shape)?;
    let mut trainer = Trainer::new(&net, cfg.clone())?;
    let mut steps = vec![eval.measure(&with_original_head(&net, model)?, 0)?];
    for epoch in 1..=epochs {
        trainer.epoch(&mut net, &inputs, new_task.labels(), trainable.as_deref())?;
        steps.push(eval.measure(&with_original_head(&net, model)?, epoch)?);
    }
    Ok(AttackReport::from_steps(
        "transfer",
        mode.as_str(),
        cfg.shuffle_seed,
        steps,
        None,
        eval,
    ))
}

/// A copy of `model` whose last dense layer is resized to `new_labels`
/// outputs and freshly initialized; all other parameters are preserved.
fn replace_head<F: Scalar>(
    model: &Network<F>,
    new_labels: usize,
    seed: u64,
) -> Result<Network<F>> {
    let mut config = model.config().clone();
    let spec_idx = config
        .layers
        .iter()
        .rposition(|s| matches!(s, LayerSpec::Dense { .. }))
        .ok_or_else(|| Error::Selector("network has no dense layer".into()))?;
    config.layers[spec_idx] = LayerSpec::Dense {
        out_features: new_labels,
    };
    config.num_labels = new_labels;
    config.validate()?;
    let mut out = Network::init(config, seed)?;
    let head = out.last_dense_index().expect("dense present");
    for (i, (dst, src)) in out
        .layers_mut()
        .iter_mut()
        .zip(model.layers())
        .enumerate()
    {
        if i == head {
            continue;
        }
        copy_layer_params(dst, src);
    }
    Ok(out)
}

/// The attacked trunk with the original (frozen) head and label space.
fn with_original_head<F: Scalar>(
    attacked: &Network<F>,
    original: &Network<F>,
) -> Result<Network<F>> {
    let mut out = original.clone();
    let head = out.last_dense_index().expect("dense present");
    for (i, (dst, src)) in out
        .layers_mut()
        .iter_mut()
        .zip(attacked.layers())
        .enumerate()
    {
        if i == head {
            continue;
        }
        copy_layer_params(dst, src);
    }
    Ok(out)
}

fn copy_layer_params<F: Scalar>(dst: &mut Layer<F>, src: &Layer<F>) {
    match (dst, src) {
        (Layer::Dense(d), Layer::Dense(s)) => {
            d.w.copy_from_slice(&s.w);
            d.b.copy_from_slice(&s.b);
        }
        (Layer::Conv(d), Layer::Conv(s)) => {
            d.w.copy_from_slice(&s.w);
            d.b.copy_from_slice(&s.b);
        }
        _ => {}
    }
}

// ---------------------------------------------------------------------------
// Pruning sweep
// ---------------------------------------------------------------------------

/// Evaluate a freshly pruned copy at each ratio (no retraining between
/// points). Ratios must be ascending.
pub fn prune_attack<F: Scalar>(
    model: &Network<F>,
    strategy: PruneStrategy,
    ratios: &[f64],
    eval: &WatermarkEval<F>,
    seed: u64,
) -> Result<AttackReport> {
    if ratios.is_empty() {
        return Err(Error::RatioOrder);
    }
    if ratios.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::RatioOrder);
    }
    let mut steps = Vec::with_capacity(ratios.len());
    for (i, &ratio) in ratios.iter().enumerate() {
        let pruned = prune(model, ratio, strategy, sub_seed(seed, &format!("prune-{i}")))?;
        steps.push(eval.measure(&pruned, i)?);
    }
    let mode = match strategy {
        PruneStrategy::L1Ascending => "L1_ASCENDING",
        PruneStrategy::Random => "RANDOM",
    };
    Ok(AttackReport::from_steps(
        "prune",
        mode,
        seed,
        steps,
        Some(ratios.to_vec()),
        eval,
    ))
}

// ---------------------------------------------------------------------------
// Piracy
// ---------------------------------------------------------------------------

/// Inputs for a second-watermark attempt.
pub struct PiracyConfig<'a, F> {
    /// The attacker's limited clean data, disjoint from owner training data.
    pub attacker_data: &'a EEGDataset<F>,
    /// Measurement context for the owner's watermark.
    pub eval: &'a WatermarkEval<F>,
    pub owner_public_key: &'a PublicKey,
    pub owner_signature: &'a Signature,
    pub owner_verifier: &'a VerifierString,
    pub suite: &'a HashSuite,
    pub block: (usize, usize),
    pub oob_magnitude: f64,
    pub trigger_fraction: f64,
    pub train: TrainConfig,
    /// Clean inputs for the two final verification reports.
    pub verify_inputs: &'a EEGDataset<F>,
}

/// Everything a piracy attempt produces.
pub struct PiracyOutcome {
    pub report: AttackReport,
    pub owner_report: VerificationReport,
    pub attacker_report: VerificationReport,
    pub attacker_signature: Signature,
}

/// The attacker derives their own filter W_A and runs embedding-style
/// training (their trigger sets plus their clean data) on a copy of the
/// watermarked model, then both watermarks are verified.
pub fn piracy_attack<F: Scalar>(
    model: &Network<F>,
    attacker_keypair: &OwnerKeypair,
    attacker_v: &VerifierString,
    epochs: usize,
    cfg: &PiracyConfig<'_, F>,
) -> Result<PiracyOutcome> {
    let data = cfg.attacker_data;
    let attacker_sig = sign_verifier(attacker_keypair, attacker_v)?;
    let attacker_filter = transform(
        &attacker_sig,
        &[data.channels(), data.timepoints()],
        model.num_labels(),
        cfg.block,
        cfg.suite,
        cfg.oob_magnitude,
    )?;
    let count = ((data.n() as f64 * cfg.trigger_fraction).round() as usize).clamp(1, data.n());
    let trig = build_trigger_set(
        data,
        &attacker_filter,
        count,
        sub_seed(cfg.train.shuffle_seed, "piracy-trigger"),
    )?;
    let combined = EEGDataset::concat(&[data, &trig.normal, &trig.null])?;
    let inputs = combined.input_batch(&model.config().input_shape)?;

    let mut net = model.clone();
    let mut trainer = Trainer::new(&net, cfg.train.clone())?;
    let mut steps = vec![cfg.eval.measure(&net, 0)?];
    for epoch in 1..=epochs {
        trainer.epoch(&mut net, &inputs, combined.labels(), None)?;
        steps.push(cfg.eval.measure(&net, epoch)?);
    }
    let report = AttackReport::from_steps(
        "piracy",
        "EMBED_SECOND_WATERMARK",
        cfg.train.shuffle_seed,
        steps,
        None,
        cfg.eval,
    );

    let owner_report = verify_watermark(
        &net,
        cfg.owner_public_key,
        cfg.owner_signature,
        cfg.owner_verifier,
        cfg.suite,
        cfg.block,
        cfg.oob_magnitude,
        cfg.verify_inputs,
        cfg.eval.t_acc,
    )?;
    let attacker_report = verify_watermark(
        &net,
        &attacker_keypair.public_key(),
        &attacker_sig,
        attacker_v,
        cfg.suite,
        cfg.block,
        cfg.oob_magnitude,
        cfg.verify_inputs,
        cfg.eval.t_acc,
    )?;
    Ok(PiracyOutcome {
        report,
        owner_report,
        attacker_report,
        attacker_signature: attacker_sig,
    })
}

// ---------------------------------------------------------------------------
// False-positive probes
// ---------------------------------------------------------------------------

/// Inputs for the random-signature probe.
pub struct ProbeConfig<'a, F> {
    pub test_inputs: &'a EEGDataset<F>,
    pub suite: &'a HashSuite,
    pub block: (usize, usize),
    pub oob_magnitude: f64,
    pub t_acc: f64,
    pub seed: u64,
}

/// Distribution of verification outcomes over random owner triples.
pub struct ProbeSummary {
    pub reports: Vec<VerificationReport>,
    pub confirmations: usize,
}

impl ProbeSummary {
    pub fn accs(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.acc).collect()
    }

    pub fn to_text(&self) -> String {
        let accs = self.accs();
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        let min = accs.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = accs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = String::new();
        let _ = writeln!(s, "probes: {}", accs.len());
        let _ = writeln!(s, "confirmations: {}", self.confirmations);
        let _ = writeln!(s, "acc_min: {min:.4}");
        let _ = writeln!(s, "acc_mean: {mean:.4}");
        let _ = writeln!(s, "acc_max: {max:.4}");
        let list = accs
            .iter()
            .map(|a| format!("{a:.4}"))
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(s, "accs: {list}");
        s
    }
}

/// Generate `count` random valid (keypair, verifier, signature) triples and
/// verify each against the model.
pub fn false_positive_probe<F: Scalar>(
    model: &Network<F>,
    count: usize,
    cfg: &ProbeConfig<'_, F>,
) -> Result<ProbeSummary> {
    if count < 10 {
        return Err(Error::Config(format!(
            "probe count must be at least 10, got {count}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut reports = Vec::with_capacity(count);
    let mut confirmations = 0usize;
    for i in 0..count {
        let mut seed = [0u8; 32];
        rng.fill(&mut seed);
        let kp = OwnerKeypair::generate(&seed)?;
        let v = VerifierString::new(&format!("probe-{i}"), i as i64)?;
        let sig = sign_verifier(&kp, &v)?;
        let report = verify_watermark(
            model,
            &kp.public_key(),
            &sig,
            &v,
            cfg.suite,
            cfg.block,
            cfg.oob_magnitude,
            cfg.test_inputs,
            cfg.t_acc,
        )?;
        if report.confirmed {
            confirmations += 1;
        }
        reports.push(report);
    }
    Ok(ProbeSummary {
        reports,
        confirmations,
    })
}
