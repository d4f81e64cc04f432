//! Watermark embedding and verification.
//!
//! Embedding mixes trigger sets (normal + null, per watermark) into the
//! clean training data and trains either from scratch or on top of a
//! pretrained network. Verification is two-step: check the signature
//! cryptographically, then re-derive the filter from the signature and
//! measure
//!
//! * the fraction of test inputs the model sends to the target label when
//!   overlaid with W, and
//! * the fraction whose prediction is unchanged by overlaying W⁻;
//!
//! the verification accuracy is the minimum of the two. Note the asymmetry
//! with training: the null consistency clause compares predictions against
//! the model's own clean predictions, while null-embedding training targets
//! the original labels. Both follow their respective definitions; the
//! report carries a note to that effect.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::{build_trigger_set, EEGDataset, TriggerSet};
use crate::error::{Error, Result};
use crate::filter::{transform, HashSuite, WonderFilter};
use crate::identity::{verify_signature, PublicKey, Signature, VerifierString};
use crate::nn::{train, EpochMetrics, Network, NetworkConfig, TrainConfig};
use crate::rng::sub_seed;
use crate::scalar::Scalar;

/// Verification needs enough test inputs to separate a watermarked model
/// from a chance-level one with high confidence on binary tasks.
pub const MIN_VERIFICATION_SET: usize = 30;

/// Default trigger-set size as a fraction of the training set, per kind.
pub const DEFAULT_TRIGGER_FRACTION: f64 = 0.05;

/// Note carried by every verification report (see module docs).
pub const NULL_CLAUSE_NOTE: &str =
    "null consistency compares F(x+W-) to F(x); null-embedding training targets original labels";

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

/// How a watermark was (or will be) embedded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingStrategy {
    FromScratch,
    Pretrain,
}

impl std::fmt::Display for EmbeddingStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EmbeddingStrategy::FromScratch => write!(f, "from-scratch"),
            EmbeddingStrategy::Pretrain => write!(f, "pretrain"),
        }
    }
}

impl std::str::FromStr for EmbeddingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "from-scratch" | "from_scratch" | "fromscratch" => Ok(Self::FromScratch),
            "pretrain" => Ok(Self::Pretrain),
            other => Err(Error::Mode(other.to_string())),
        }
    }
}

/// Everything needed to reproduce and defend one watermark. Construction
/// re-runs the transform and rejects a filter that the signature does not
/// produce.
#[derive(Debug, Clone)]
pub struct WatermarkRecord {
    pub verifier: VerifierString,
    pub signature: Signature,
    pub filter: WonderFilter,
    pub suite: HashSuite,
    pub num_labels: usize,
    pub embedding_strategy: EmbeddingStrategy,
    pub trigger_fraction: f64,
}

impl WatermarkRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        verifier: VerifierString,
        signature: Signature,
        filter: WonderFilter,
        suite: HashSuite,
        num_labels: usize,
        embedding_strategy: EmbeddingStrategy,
        trigger_fraction: f64,
    ) -> Result<Self> {
        let expected = transform(
            &signature,
            filter.input_shape(),
            num_labels,
            filter.block(),
            &suite,
            filter.oob_magnitude(),
        )?;
        if expected != filter {
            return Err(Error::RecordMismatch(
                "filter is not the transform of the signature".into(),
            ));
        }
        if !(0.0..=1.0).contains(&trigger_fraction) {
            return Err(Error::RecordMismatch(format!(
                "trigger fraction {trigger_fraction} outside [0, 1]"
            )));
        }
        Ok(Self {
            verifier,
            signature,
            filter,
            suite,
            num_labels,
            embedding_strategy,
            trigger_fraction,
        })
    }

    /// Stable key-value serialization.
    pub fn to_record_string(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "owner_id: {}", self.verifier.owner_id());
        let _ = writeln!(s, "timestamp: {}", self.verifier.timestamp());
        let _ = writeln!(s, "scheme_id: {}", self.signature.scheme_id());
        let _ = writeln!(s, "signature: {}", self.signature.to_hex());
        let _ = writeln!(s, "num_labels: {}", self.num_labels);
        let _ = writeln!(s, "strategy: {}", self.embedding_strategy);
        let _ = writeln!(s, "trigger_fraction: {}", self.trigger_fraction);
        s.push_str(&self.filter.to_record_string(&self.suite));
        s
    }

    pub fn from_record_str(text: &str) -> Result<Self> {
        let mut owner_id = None;
        let mut timestamp = None;
        let mut scheme = None;
        let mut signature_hex = None;
        let mut num_labels = None;
        let mut strategy = None;
        let mut trigger_fraction = None;
        let mut filter_lines = String::new();
        for line in text.lines() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let Some((k, v)) = trimmed.split_once(':') else {
                return Err(Error::Format(format!("record line `{trimmed}`")));
            };
            let (k, v) = (k.trim(), v.trim());
            match k {
                "owner_id" => owner_id = Some(v.to_string()),
                "timestamp" => {
                    timestamp = Some(v.parse::<i64>().map_err(|_| {
                        Error::Format(format!("timestamp `{v}`"))
                    })?)
                }
                "scheme_id" => scheme = Some(v.to_string()),
                "signature" => signature_hex = Some(v.to_string()),
                "num_labels" => {
                    num_labels = Some(v.parse::<usize>().map_err(|_| {
                        Error::Format(format!("num_labels `{v}`"))
                    })?)
                }
                "strategy" => strategy = Some(v.parse::<EmbeddingStrategy>()?),
                "trigger_fraction" => {
                    trigger_fraction = Some(v.parse::<f64>().map_err(|_| {
                        Error::Format(format!("trigger_fraction `{v}`"))
                    })?)
                }
                _ => {
                    filter_lines.push_str(trimmed);
                    filter_lines.push('\n');
                }
            }
        }
        let missing = |what: &str| Error::Format(format!("record missing `{what}`"));
        let verifier = VerifierString::new(
            &owner_id.ok_or_else(|| missing("owner_id"))?,
            timestamp.ok_or_else(|| missing("timestamp"))?,
        )?;
        let signature = Signature::from_hex(
            &signature_hex.ok_or_else(|| missing("signature"))?,
            &scheme.ok_or_else(|| missing("scheme_id"))?,
        )?;
        let (filter, suite) = WonderFilter::from_record_str(&filter_lines)?;
        Self::new(
            verifier,
            signature,
            filter,
            suite,
            num_labels.ok_or_else(|| missing("num_labels"))?,
            strategy.ok_or_else(|| missing("strategy"))?,
            trigger_fraction.ok_or_else(|| missing("trigger_fraction"))?,
        )
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_record_string())?;
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_record_str(&std::fs::read_to_string(path)?)
    }
}

// ---------------------------------------------------------------------------
// VerificationReport
// ---------------------------------------------------------------------------

/// Outcome of the two-step ownership check.
#[derive(Debug, Clone)]
pub struct VerificationReport {
    pub signature_valid: bool,
    pub true_embed_accuracy: f64,
    pub null_consistency: f64,
    pub acc: f64,
    pub t_acc: f64,
    pub confirmed: bool,
    pub test_set_size: usize,
    pub filter_digest: String,
}

impl VerificationReport {
    /// Stable key order for byte-identical reports.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "signature_valid: {}", self.signature_valid);
        let _ = writeln!(s, "true_embed_accuracy: {:.4}", self.true_embed_accuracy);
        let _ = writeln!(s, "null_consistency: {:.4}", self.null_consistency);
        let _ = writeln!(s, "acc: {:.4}", self.acc);
        let _ = writeln!(s, "t_acc: {:.4}", self.t_acc);
        let _ = writeln!(s, "confirmed: {}", self.confirmed);
        let _ = writeln!(s, "test_set_size: {}", self.test_set_size);
        let _ = writeln!(s, "filter_digest: {}", self.filter_digest);
        let _ = writeln!(s, "note: {NULL_CLAUSE_NOTE}");
        s
    }
}

// ---------------------------------------------------------------------------
// Training entry points
// ---------------------------------------------------------------------------

/// Owner-side train/validation/test partition.
#[derive(Debug, Clone)]
pub struct DataSplits<F> {
    pub train: EEGDataset<F>,
    pub val: Option<EEGDataset<F>>,
    pub test: EEGDataset<F>,
}

/// Plain training on clean data only (the no-watermark control).
pub fn baseline_train<F: Scalar>(
    config: &NetworkConfig,
    splits: &DataSplits<F>,
    cfg: &TrainConfig,
) -> Result<(Network<F>, Vec<EpochMetrics>)> {
    let mut net = Network::init(config.clone(), sub_seed(cfg.shuffle_seed, "init"))?;
    let history = fit(&mut net, &splits.train, splits.val.as_ref(), cfg)?;
    Ok((net, history))
}

/// Initialize a fresh network and train it on clean data plus every
/// record's normal and null trigger sets.
pub fn embed_from_scratch<F: Scalar>(
    config: &NetworkConfig,
    splits: &DataSplits<F>,
    records: &[WatermarkRecord],
    cfg: &TrainConfig,
) -> Result<(Network<F>, Vec<EpochMetrics>)> {
    let mut net = Network::init(config.clone(), sub_seed(cfg.shuffle_seed, "init"))?;
    let combined = combine_with_triggers(&splits.train, records, cfg.shuffle_seed)?;
    let history = fit(&mut net, &combined, splits.val.as_ref(), cfg)?;
    Ok((net, history))
}

/// Continue training an already-trained network on clean data plus trigger
/// sets for `cfg.epochs` more epochs.
pub fn embed_pretrain<F: Scalar>(
    pretrained: &mut Network<F>,
    splits: &DataSplits<F>,
    records: &[WatermarkRecord],
    cfg: &TrainConfig,
) -> Result<Vec<EpochMetrics>> {
    let combined = combine_with_triggers(&splits.train, records, cfg.shuffle_seed)?;
    fit(pretrained, &combined, splits.val.as_ref(), cfg)
}

/// Build the trigger sets for each record and append them to the clean
/// training data.
pub fn combine_with_triggers<F: Scalar>(
    train: &EEGDataset<F>,
    records: &[WatermarkRecord],
    seed: u64,
) -> Result<EEGDataset<F>> {
    let mut parts: Vec<EEGDataset<F>> = vec![train.clone()];
    for (i, record) in records.iter().enumerate() {
        let trig = trigger_set_for(train, record, seed, i)?;
        parts.push(trig.normal);
        parts.push(trig.null);
    }
    let refs: Vec<&EEGDataset<F>> = parts.iter().collect();
    EEGDataset::concat(&refs)
}

/// The trigger set a record induces on a training set.
pub fn trigger_set_for<F: Scalar>(
    train: &EEGDataset<F>,
    record: &WatermarkRecord,
    seed: u64,
    index: usize,
) -> Result<TriggerSet<F>> {
    let count = ((train.n() as f64 * record.trigger_fraction).round() as usize)
        .clamp(1, train.n());
    build_trigger_set(
        train,
        &record.filter,
        count,
        sub_seed(seed, &format!("trigger-{index}")),
    )
}

fn fit<F: Scalar>(
    net: &mut Network<F>,
    train_set: &EEGDataset<F>,
    val: Option<&EEGDataset<F>>,
    cfg: &TrainConfig,
) -> Result<Vec<EpochMetrics>> {
    let inputs = train_set.input_batch(&net.config().input_shape)?;
    let val_data = val
        .map(|v| v.input_batch(&net.config().input_shape))
        .transpose()?;
    let val_pair = val_data
        .as_ref()
        .zip(val.map(|v| v.labels()))
        .map(|(t, l)| (t, l));
    train(net, &inputs, train_set.labels(), val_pair, cfg)
}

// ---------------------------------------------------------------------------
// Verification
// ---------------------------------------------------------------------------

/// Two-step watermark verification over clean test inputs (labels unused).
///
/// Step 1 checks the signature against the public key. Step 2 re-derives
/// the filter from the signature and measures both accuracy clauses. The
/// watermark is confirmed iff the signature is valid and the minimum clause
/// reaches `t_acc`. All functional failures are expressed in the report,
/// not as errors.
#[allow(clippy::too_many_arguments)]
pub fn verify_watermark<F: Scalar>(
    model: &Network<F>,
    public_key: &PublicKey,
    sig: &Signature,
    v: &VerifierString,
    suite: &HashSuite,
    block: (usize, usize),
    oob_magnitude: f64,
    test_inputs: &EEGDataset<F>,
    t_acc: f64,
) -> Result<VerificationReport> {
    if test_inputs.n() < MIN_VERIFICATION_SET {
        return Err(Error::TestSetTooSmall {
            min: MIN_VERIFICATION_SET,
            got: test_inputs.n(),
        });
    }
    let signature_valid = verify_signature(public_key, sig, v);
    let filter = transform(
        sig,
        &[test_inputs.channels(), test_inputs.timepoints()],
        model.num_labels(),
        block,
        suite,
        oob_magnitude,
    )?;
    let (true_embed_accuracy, null_consistency) =
        functional_accuracies(model, &filter, test_inputs)?;
    let acc = true_embed_accuracy.min(null_consistency);
    Ok(VerificationReport {
        signature_valid,
        true_embed_accuracy,
        null_consistency,
        acc,
        t_acc,
        confirmed: signature_valid && acc >= t_acc,
        test_set_size: test_inputs.n(),
        filter_digest: filter.digest(suite),
    })
}

/// The two functional clauses: P[F(x⊕W) = y_W] and P[F(x⊕W⁻) = F(x)].
pub fn functional_accuracies<F: Scalar>(
    model: &Network<F>,
    filter: &WonderFilter,
    test_inputs: &EEGDataset<F>,
) -> Result<(f64, f64)> {
    let shape = &model.config().input_shape;
    let clean = model.predict_labels(&test_inputs.input_batch(shape)?)?;
    let with_w = test_inputs.overlay_all(filter, false)?;
    let normal = model.predict_labels(&with_w.input_batch(shape)?)?;
    let with_inv = test_inputs.overlay_all(filter, true)?;
    let null = model.predict_labels(&with_inv.input_batch(shape)?)?;

    let n = test_inputs.n() as f64;
    let target = filter.target_label();
    let true_embed = normal.iter().filter(|&&p| p == target).count() as f64 / n;
    let consistent = null
        .iter()
        .zip(&clean)
        .filter(|(a, b)| a == b)
        .count() as f64 / n;
    Ok((true_embed, consistent))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, split, SyntheticSpec};
    use crate::identity::{sign_verifier, OwnerKeypair};

    fn record_for(
        kp: &OwnerKeypair,
        owner: &str,
        shape: &[usize],
        labels: usize,
    ) -> WatermarkRecord {
        let v = VerifierString::new(owner, 1735689600).unwrap();
        let sig = sign_verifier(kp, &v).unwrap();
        let suite = HashSuite::default();
        let filter = transform(&sig, shape, labels, (4, 32), &suite, 2000.0).unwrap();
        WatermarkRecord::new(
            v,
            sig,
            filter,
            suite,
            labels,
            EmbeddingStrategy::FromScratch,
            0.05,
        )
        .unwrap()
    }

    #[test]
    fn record_rejects_foreign_filter() {
        let kp = OwnerKeypair::generate(&[1; 32]).unwrap();
        let v = VerifierString::new("owner", 0).unwrap();
        let sig = sign_verifier(&kp, &v).unwrap();
        let suite = HashSuite::default();
        let theirs = transform(
            &Signature::from_bytes(vec![9; 64], "ed25519"),
            &[8, 64],
            2,
            (4, 32),
            &suite,
            2000.0,
        )
        .unwrap();
        let result = WatermarkRecord::new(
            v,
            sig,
            theirs,
            suite,
            2,
            EmbeddingStrategy::FromScratch,
            0.05,
        );
        assert!(matches!(result, Err(Error::RecordMismatch(_))));
    }

    #[test]
    fn record_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let kp = OwnerKeypair::generate(&[2; 32]).unwrap();
        let record = record_for(&kp, "round-trip", &[8, 64], 2);
        let path = dir.path().join("wm.txt");
        record.write_file(&path).unwrap();
        let loaded = WatermarkRecord::from_file(&path).unwrap();
        assert_eq!(loaded.filter, record.filter);
        assert_eq!(loaded.signature, record.signature);
        assert_eq!(loaded.verifier, record.verifier);
        assert_eq!(loaded.to_record_string(), record.to_record_string());
    }

    #[test]
    fn verification_rejects_small_test_set() {
        let spec = SyntheticSpec {
            n_samples: 40,
            ..SyntheticSpec::default()
        };
        let ds = generate_synthetic::<f32>(&spec).unwrap();
        let small = ds.subset(&(0..10).collect::<Vec<_>>()).unwrap();
        let kp = OwnerKeypair::generate(&[3; 32]).unwrap();
        let record = record_for(&kp, "small", &[8, 64], 2);
        let net = Network::<f32>::init(NetworkConfig::mini_eeg(8, 64, 2), 0).unwrap();
        let err = verify_watermark(
            &net,
            &kp.public_key(),
            &record.signature,
            &record.verifier,
            &record.suite,
            (4, 32),
            2000.0,
            &small,
            0.8,
        )
        .unwrap_err();
        assert!(matches!(err, Error::TestSetTooSmall { .. }));
    }

    #[test]
    fn wrong_public_key_gates_confirmation() {
        let spec = SyntheticSpec {
            n_samples: 60,
            ..SyntheticSpec::default()
        };
        let ds = generate_synthetic::<f32>(&spec).unwrap();
        let kp = OwnerKeypair::generate(&[4; 32]).unwrap();
        let other = OwnerKeypair::generate(&[5; 32]).unwrap();
        let record = record_for(&kp, "gated", &[8, 64], 2);
        let net = Network::<f32>::init(NetworkConfig::mini_eeg(8, 64, 2), 0).unwrap();
        let report = verify_watermark(
            &net,
            &other.public_key(),
            &record.signature,
            &record.verifier,
            &record.suite,
            (4, 32),
            2000.0,
            &ds,
            0.0, // even a zero threshold cannot confirm with a bad signature
        )
        .unwrap();
        assert!(!report.signature_valid);
        assert!(!report.confirmed);
    }

    #[test]
    fn embedding_then_verifying_small_scale() {
        // miniature end-to-end: tiny data, few epochs; exact quality gates
        // live in the acceptance suite
        let spec = SyntheticSpec {
            n_samples: 300,
            ..SyntheticSpec::default()
        };
        let ds = generate_synthetic::<f32>(&spec).unwrap();
        let (train, val, test) = split(&ds, (0.7, 0.15, 0.15), 3).unwrap();
        let splits = DataSplits {
            train: train.unwrap(),
            val,
            test: test.unwrap(),
        };
        let kp = OwnerKeypair::generate(&[6; 32]).unwrap();
        let mut record = record_for(&kp, "mini", &[8, 64], 2);
        record.trigger_fraction = 0.2;
        let cfg = TrainConfig {
            epochs: 8,
            shuffle_seed: 5,
            early_stop_patience: 0,
            ..TrainConfig::default()
        };
        let (net, history) = embed_from_scratch(
            &NetworkConfig::mini_eeg(8, 64, 2),
            &splits,
            std::slice::from_ref(&record),
            &cfg,
        )
        .unwrap();
        assert_eq!(history.len(), 8);
        let report = verify_watermark(
            &net,
            &kp.public_key(),
            &record.signature,
            &record.verifier,
            &record.suite,
            (4, 32),
            2000.0,
            &splits.test,
            0.5,
        )
        .unwrap();
        assert!(report.signature_valid);
        assert!(report.true_embed_accuracy > 0.9);
    }

    #[test]
    fn eq2_fractions_match_exhaustive_recount() {
        let spec = SyntheticSpec {
            n_samples: 100,
            ..SyntheticSpec::default()
        };
        let ds = generate_synthetic::<f32>(&spec).unwrap();
        let kp = OwnerKeypair::generate(&[7; 32]).unwrap();
        let record = record_for(&kp, "recount", &[8, 64], 2);
        let net = Network::<f32>::init(NetworkConfig::mini_eeg(8, 64, 2), 4).unwrap();
        let (true_embed, null_cons) =
            functional_accuracies(&net, &record.filter, &ds).unwrap();

        // independent recount, one sample at a time
        let shape = vec![1usize, 8, 64];
        let mut hits = 0usize;
        let mut consistent = 0usize;
        for i in 0..ds.n() {
            let x = ds.sample_tensor(i);
            let clean = net
                .predict_labels(&x.reshape(&[1, 1, 8, 64]).unwrap())
                .unwrap()[0];
            let with_w = crate::filter::overlay(&x, &record.filter, false).unwrap();
            let pw = net
                .predict_labels(&with_w.reshape(&[1, 1, 8, 64]).unwrap())
                .unwrap()[0];
            let with_i = crate::filter::overlay(&x, &record.filter, true).unwrap();
            let pi = net
                .predict_labels(&with_i.reshape(&[1, 1, 8, 64]).unwrap())
                .unwrap()[0];
            if pw == record.filter.target_label() {
                hits += 1;
            }
            if pi == clean {
                consistent += 1;
            }
        }
        let _ = shape;
        assert_eq!(true_embed, hits as f64 / 100.0);
        assert_eq!(null_cons, consistent as f64 / 100.0);
    }

    #[test]
    fn report_text_is_stable() {
        let report = VerificationReport {
            signature_valid: true,
            true_embed_accuracy: 1.0,
            null_consistency: 0.91,
            acc: 0.91,
            t_acc: 0.85,
            confirmed: true,
            test_set_size: 200,
            filter_digest: "ab".repeat(32),
        };
        let text = report.to_text();
        assert!(text.starts_with("signature_valid: true\ntrue_embed_accuracy: 1.0000\n"));
        assert!(text.contains("confirmed: true\n"));
        assert_eq!(text, report.to_text());
    }
}
