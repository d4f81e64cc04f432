//! Implementations of the individual CLI verbs.

use std::fmt::Write as _;
use std::path::Path;

use eegmark::attacks::{
    fine_tune_attack, piracy_attack, prune_attack, transfer_attack, AttackReport, FineTuneMode,
    PiracyConfig, TransferMode, WatermarkEval,
};
use eegmark::data::{
    generate_synthetic, load_windowed, save_trials, save_windowed, split, window_trials,
    SyntheticSpec, TrialSet,
};
use eegmark::filter::{dims_from_string, transform as filter_transform, HashSuite};
use eegmark::identity::{
    sign_verifier, write_key_file, OwnerKeypair, PublicKey, Signature, VerifierString,
    SEED_LEN,
};
use eegmark::nn::{evaluate, EpochMetrics, Network, NetworkConfig, PruneStrategy, TrainConfig};
use eegmark::pipeline::{
    baseline_train, embed_from_scratch, embed_pretrain, verify_watermark, DataSplits,
    EmbeddingStrategy, WatermarkRecord,
};
use eegmark::rng::sub_seed;

use crate::{
    AttackArgs, ConvertArgs, EmbedArgs, GenDataArgs, KeygenArgs, ReportArgs, SignArgs, TrainArgs,
    TransformArgs, VerifyArgs, EXIT_DIVERGED, EXIT_IO, EXIT_OVERWRITE, EXIT_STAGE,
    EXIT_UNCONFIRMED,
};

/// Global flags shared by every verb.
pub struct Ctx {
    pub seed: u64,
    pub quiet: bool,
    pub force: bool,
}

impl Ctx {
    pub fn log(&self, msg: &str) {
        if !self.quiet {
            eprintln!("[eegmark] {msg}");
        }
    }
}

pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(EXIT_IO, message)
    }

    pub fn stage(stage: &str, message: impl std::fmt::Display) -> Self {
        Self::new(EXIT_STAGE, format!("stage `{stage}` failed: {message}"))
    }
}

impl From<eegmark::Error> for CliError {
    fn from(e: eegmark::Error) -> Self {
        let code = match &e {
            eegmark::Error::Divergence { .. } => EXIT_DIVERGED,
            _ => EXIT_IO,
        };
        Self::new(code, e.to_string())
    }
}

pub type CliResult = Result<(), CliError>;

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

/// Write bytes, refusing to clobber existing files unless --force is set.
pub fn write_guarded(ctx: &Ctx, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if path.exists() && !ctx.force {
        return Err(CliError::new(
            EXIT_OVERWRITE,
            format!("{} exists; pass --force to overwrite", path.display()),
        ));
    }
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::io(format!("creating {}: {e}", parent.display())))?;
        }
    }
    std::fs::write(path, bytes)
        .map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))
}

pub fn guard_overwrite(ctx: &Ctx, path: &Path) -> Result<(), CliError> {
    if path.exists() && !ctx.force {
        return Err(CliError::new(
            EXIT_OVERWRITE,
            format!("{} exists; pass --force to overwrite", path.display()),
        ));
    }
    Ok(())
}

fn parse_pair(s: &str, what: &str) -> Result<(usize, usize), CliError> {
    let dims = dims_from_string(s).map_err(|e| CliError::io(format!("{what}: {e}")))?;
    if dims.len() != 2 {
        return Err(CliError::io(format!("{what} must be RxC, got `{s}`")));
    }
    Ok((dims[0], dims[1]))
}

fn parse_float_list(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| CliError::io(format!("{what}: bad number `{p}`")))
        })
        .collect()
}

fn parse_split3(s: &str) -> Result<(f64, f64, f64), CliError> {
    let v = parse_float_list(s, "--split")?;
    if v.len() != 3 {
        return Err(CliError::io("--split needs three fractions"));
    }
    Ok((v[0], v[1], v[2]))
}

/// Per-class frequency lists: classes separated by `;`, frequencies by `,`.
fn parse_class_freqs(s: &str) -> Result<Vec<Vec<f64>>, CliError> {
    s.split(';')
        .map(|cls| parse_float_list(cls, "--class-freqs"))
        .collect()
}

/// Resolve a built-in config name or parse a config file, binding it to the
/// dataset's dimensions.
pub fn load_config(
    name_or_path: &str,
    channels: usize,
    timepoints: usize,
    num_labels: usize,
) -> Result<NetworkConfig, CliError> {
    let config = match name_or_path {
        "mini-eeg" => NetworkConfig::mini_eeg(channels, timepoints, num_labels),
        "eegnet-lite" => NetworkConfig::eegnet_lite(channels, timepoints, num_labels),
        path => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::io(format!("reading config {path}: {e}")))?;
            let config = NetworkConfig::parse(&text)?;
            if config.input_shape != [1, channels, timepoints] {
                return Err(CliError::io(format!(
                    "config input {:?} does not match dataset [1, {channels}, {timepoints}]",
                    config.input_shape
                )));
            }
            if config.num_labels != num_labels {
                return Err(CliError::io(format!(
                    "config declares {} labels, dataset has {num_labels}",
                    config.num_labels
                )));
            }
            config
        }
    };
    config.validate()?;
    Ok(config)
}

pub fn metrics_csv(history: &[EpochMetrics]) -> String {
    let mut s = String::from("epoch,train_loss,train_accuracy,val_loss,val_accuracy\n");
    for m in history {
        let _ = writeln!(
            s,
            "{},{:.6},{:.6},{},{}",
            m.epoch,
            m.train_loss,
            m.train_accuracy,
            m.val_loss.map(|v| format!("{v:.6}")).unwrap_or_default(),
            m.val_accuracy
                .map(|v| format!("{v:.6}"))
                .unwrap_or_default(),
        );
    }
    s
}

// ---------------------------------------------------------------------------
// keygen / sign / transform
// ---------------------------------------------------------------------------

pub fn keygen(ctx: &Ctx, args: &KeygenArgs) -> CliResult {
    let seed: [u8; SEED_LEN] = if let Some(path) = &args.seed_file {
        read_seed_file(path)?
    } else if args.entropy {
        let mut seed = [0u8; SEED_LEN];
        use rand::RngCore;
        rand::rngs::OsRng.fill_bytes(&mut seed);
        seed
    } else {
        return Err(CliError::io(
            "pass --seed-file <path> or --entropy to choose the key seed",
        ));
    };
    let kp = OwnerKeypair::generate(&seed)?;
    let priv_path = args.out_dir.join(format!("{}_private.key", args.prefix));
    let pub_path = args.out_dir.join(format!("{}_public.key", args.prefix));
    guard_overwrite(ctx, &priv_path)?;
    guard_overwrite(ctx, &pub_path)?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::io(format!("creating {}: {e}", args.out_dir.display())))?;
    write_key_file(&priv_path, kp.scheme_id(), &kp.private_key_bytes())?;
    write_key_file(&pub_path, kp.scheme_id(), kp.public_key().as_bytes())?;
    ctx.log(&format!(
        "wrote {} and {}",
        priv_path.display(),
        pub_path.display()
    ));
    Ok(())
}

fn read_seed_file(path: &Path) -> Result<[u8; SEED_LEN], CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    if bytes.len() == SEED_LEN {
        return Ok(bytes.try_into().expect("length checked"));
    }
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::io("seed file must be 32 raw bytes or 64 hex chars"))?;
    let decoded = hex::decode(text.trim())
        .map_err(|e| CliError::io(format!("seed file hex: {e}")))?;
    decoded
        .try_into()
        .map_err(|_| CliError::io("seed must decode to exactly 32 bytes"))
}

pub fn sign(ctx: &Ctx, args: &SignArgs) -> CliResult {
    let kp = OwnerKeypair::from_key_file(&args.private_key)?;
    let v = VerifierString::new(&args.owner_id, args.timestamp)?;
    let sig = sign_verifier(&kp, &v)?;
    guard_overwrite(ctx, &args.out)?;
    sig.write_file(&args.out)?;
    ctx.log(&format!("wrote signature to {}", args.out.display()));
    Ok(())
}

pub fn transform(ctx: &Ctx, args: &TransformArgs) -> CliResult {
    let sig = Signature::from_file(&args.sig)?;
    let shape = dims_from_string(&args.input_shape)?;
    let block = parse_pair(&args.block, "--block")?;
    let suite = HashSuite::default();
    let filter = filter_transform(&sig, &shape, args.num_labels, block, &suite, args.oob)?;
    guard_overwrite(ctx, &args.out)?;
    write_guarded(ctx, &args.out, filter.to_record_string(&suite).as_bytes())?;
    ctx.log(&format!(
        "filter: label {} position {:?}",
        filter.target_label(),
        filter.position()
    ));
    Ok(())
}

// ---------------------------------------------------------------------------
// gen-data / convert
// ---------------------------------------------------------------------------

pub fn gen_data(ctx: &Ctx, args: &GenDataArgs) -> CliResult {
    let class_freqs = parse_class_freqs(&args.class_freqs)?;
    guard_overwrite(ctx, &args.out)?;
    match args.format.as_str() {
        "windows" => {
            let spec = SyntheticSpec {
                channels: args.channels,
                timepoints: args.timepoints,
                sample_rate: args.sample_rate,
                class_freqs,
                noise_std: args.noise,
                class_balance: args.balance,
                n_samples: args.samples,
                seed: sub_seed(ctx.seed, "gen-data"),
            };
            let ds = generate_synthetic::<f32>(&spec)?;
            if let Some(parent) = args.out.parent() {
                let _ = std::fs::create_dir_all(parent);
            }
            save_windowed(&ds, &args.out)?;
            ctx.log(&format!(
                "wrote {} samples [{}x{}] to {}",
                ds.n(),
                ds.channels(),
                ds.timepoints(),
                args.out.display()
            ));
        }
        "trials" => {
            if class_freqs.len() != 2 {
                return Err(CliError::io("trial format supports exactly two classes"));
            }
            let trial_len = (args.trial_seconds * args.sample_rate) as usize;
            let spec = SyntheticSpec {
                channels: args.channels,
                timepoints: trial_len,
                sample_rate: args.sample_rate,
                class_freqs,
                noise_std: args.noise,
                class_balance: args.balance,
                n_samples: args.samples,
                seed: sub_seed(ctx.seed, "gen-data"),
            };
            let ds = generate_synthetic::<f32>(&spec)?;
            // negative trials rate 3, positive trials rate 7 (threshold 5)
            let ratings: Vec<f32> = ds
                .labels()
                .iter()
                .map(|&l| if l == 0 { 3.0 } else { 7.0 })
                .collect();
            let set = TrialSet {
                signals: ds.samples().data().iter().map(|&v| v as f32).collect(),
                ratings,
                channels: args.channels,
                trial_len,
                sample_rate: args.sample_rate,
            };
            if let Some(parent) = args.out.parent() {
                let _ = std::fs::create_dir_all(parent);
            }
            save_trials(&set, &args.out)?;
            ctx.log(&format!(
                "wrote {} trials of {trial_len} points to {}",
                set.num_trials(),
                args.out.display()
            ));
        }
        other => return Err(CliError::io(format!("unknown format `{other}`"))),
    }
    Ok(())
}

pub fn convert(ctx: &Ctx, args: &ConvertArgs) -> CliResult {
    let text = std::fs::read_to_string(&args.csv)
        .map_err(|e| CliError::io(format!("{}: {e}", args.csv.display())))?;
    let set = parse_trial_csv(&text, args.sample_rate)?;
    let ds = window_trials::<f32>(
        &set,
        args.threshold,
        args.window_seconds,
        &format!("csv:{}", args.csv.display()),
    )?;
    guard_overwrite(ctx, &args.out)?;
    if let Some(parent) = args.out.parent() {
        let _ = std::fs::create_dir_all(parent);
    }
    save_windowed(&ds, &args.out)?;
    ctx.log(&format!(
        "converted {} trials into {} windows at {}",
        set.num_trials(),
        ds.n(),
        args.out.display()
    ));
    Ok(())
}

/// Rows `trial,channel,rating,v0,v1,...`; every row must carry the same
/// number of sample values, channels must be dense per trial, and a trial's
/// rating must be consistent.
fn parse_trial_csv(text: &str, sample_rate: u32) -> Result<TrialSet, CliError> {
    let mut rows: Vec<(usize, usize, f32, Vec<f32>)> = Vec::new();
    let mut trial_len: Option<usize> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if lineno == 0 && line.starts_with("trial") {
            continue; // header
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 4 {
            return Err(CliError::io(format!(
                "line {}: expected `trial,channel,rating,v0,...`",
                lineno + 1
            )));
        }
        let parse_err = |what: &str| {
            CliError::io(format!("line {}: bad {what} value", lineno + 1))
        };
        let trial: usize = fields[0].trim().parse().map_err(|_| parse_err("trial"))?;
        let channel: usize = fields[1].trim().parse().map_err(|_| parse_err("channel"))?;
        let rating: f32 = fields[2].trim().parse().map_err(|_| parse_err("rating"))?;
        let values: Vec<f32> = fields[3..]
            .iter()
            .map(|f| f.trim().parse::<f32>().map_err(|_| parse_err("sample")))
            .collect::<Result<_, _>>()?;
        match trial_len {
            None => trial_len = Some(values.len()),
            Some(len) if len != values.len() => {
                return Err(CliError::io(format!(
                    "line {}: row has {} samples, expected {len}",
                    lineno + 1,
                    values.len()
                )))
            }
            _ => {}
        }
        rows.push((trial, channel, rating, values));
    }
    if rows.is_empty() {
        return Err(CliError::io("CSV holds no data rows"));
    }
    let trial_len = trial_len.expect("rows non-empty");
    let num_trials = rows.iter().map(|r| r.0).max().expect("non-empty") + 1;
    let channels = rows.iter().map(|r| r.1).max().expect("non-empty") + 1;
    let mut signals = vec![f32::NAN; num_trials * channels * trial_len];
    let mut ratings = vec![f32::NAN; num_trials];
    for (trial, channel, rating, values) in rows {
        if !ratings[trial].is_nan() && ratings[trial] != rating {
            return Err(CliError::io(format!(
                "trial {trial} has conflicting ratings"
            )));
        }
        ratings[trial] = rating;
        let base = trial * channels * trial_len + channel * trial_len;
        signals[base..base + trial_len].copy_from_slice(&values);
    }
    if signals.iter().any(|v| v.is_nan()) || ratings.iter().any(|v| v.is_nan()) {
        return Err(CliError::io(
            "CSV is missing rows: every trial needs every channel",
        ));
    }
    Ok(TrialSet {
        signals,
        ratings,
        channels,
        trial_len,
        sample_rate,
    })
}

// ---------------------------------------------------------------------------
// train / embed / verify
// ---------------------------------------------------------------------------

fn load_splits(
    path: &Path,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<DataSplits<f32>, CliError> {
    let ds = load_windowed::<f32>(path)?;
    let (train, val, test) = split(&ds, fractions, seed)?;
    let train = train.ok_or_else(|| CliError::io("train fraction produced no samples"))?;
    let test = test.ok_or_else(|| CliError::io("test fraction produced no samples"))?;
    Ok(DataSplits { train, val, test })
}

pub fn train(ctx: &Ctx, args: &TrainArgs) -> CliResult {
    guard_overwrite(ctx, &args.out)?;
    let splits = load_splits(&args.data, parse_split3(&args.split)?, sub_seed(ctx.seed, "split"))?;
    let config = load_config(
        &args.config,
        splits.train.channels(),
        splits.train.timepoints(),
        splits.train.num_labels(),
    )?;
    let cfg = TrainConfig {
        learning_rate: args.learning_rate,
        batch_size: args.batch_size,
        epochs: args.epochs,
        early_stop_patience: args.patience,
        shuffle_seed: sub_seed(ctx.seed, "train"),
        grad_clip: 1.0,
    };
    let (net, history) = baseline_train(&config, &splits, &cfg)?;
    let m = evaluate(
        &net,
        &splits.test.input_batch(&config.input_shape)?,
        splits.test.labels(),
    )?;
    if let Some(parent) = args.out.parent() {
        let _ = std::fs::create_dir_all(parent);
    }
    net.save(&args.out)?;
    if let Some(metrics_path) = &args.metrics {
        write_guarded(ctx, metrics_path, metrics_csv(&history).as_bytes())?;
    }
    ctx.log(&format!(
        "trained {} epochs, test accuracy {:.4}, saved {}",
        history.len(),
        m.accuracy,
        args.out.display()
    ));
    Ok(())
}

/// Build `k` watermark records from one keypair; watermark i signs the
/// verifier (owner_id, timestamp + i) so every filter is independent.
#[allow(clippy::too_many_arguments)]
pub fn build_records(
    kp: &OwnerKeypair,
    owner_id: &str,
    timestamp: i64,
    k: usize,
    input_view: &[usize],
    num_labels: usize,
    block: (usize, usize),
    oob: f64,
    strategy: EmbeddingStrategy,
    trigger_fraction: f64,
) -> Result<Vec<WatermarkRecord>, CliError> {
    let suite = HashSuite::default();
    let mut records = Vec::with_capacity(k);
    for i in 0..k {
        let v = VerifierString::new(owner_id, timestamp + i as i64)?;
        let sig = sign_verifier(kp, &v)?;
        let filter = filter_transform(&sig, input_view, num_labels, block, &suite, oob)?;
        records.push(WatermarkRecord::new(
            v,
            sig,
            filter,
            suite.clone(),
            num_labels,
            strategy,
            trigger_fraction,
        )?);
    }
    Ok(records)
}

pub fn embed(ctx: &Ctx, args: &EmbedArgs) -> CliResult {
    let strategy: EmbeddingStrategy = args.strategy.parse()?;
    let splits = load_splits(&args.data, parse_split3(&args.split)?, sub_seed(ctx.seed, "split"))?;
    let config = load_config(
        &args.config,
        splits.train.channels(),
        splits.train.timepoints(),
        splits.train.num_labels(),
    )?;
    let kp = OwnerKeypair::from_key_file(&args.private_key)?;
    let block = parse_pair(&args.block, "--block")?;
    let records = build_records(
        &kp,
        &args.owner_id,
        args.timestamp,
        args.k,
        &[splits.train.channels(), splits.train.timepoints()],
        splits.train.num_labels(),
        block,
        args.oob,
        strategy,
        args.trigger_fraction,
    )?;

    let model_path = args.out_dir.join("watermarked.ckpt");
    guard_overwrite(ctx, &model_path)?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::io(format!("creating {}: {e}", args.out_dir.display())))?;

    let embed_cfg = TrainConfig {
        learning_rate: args.learning_rate,
        batch_size: args.batch_size,
        epochs: args.epochs,
        early_stop_patience: 0,
        shuffle_seed: sub_seed(ctx.seed, "embed"),
        grad_clip: 1.0,
    };
    let (net, history) = match strategy {
        EmbeddingStrategy::FromScratch => {
            embed_from_scratch(&config, &splits, &records, &embed_cfg)?
        }
        EmbeddingStrategy::Pretrain => {
            let pre_cfg = TrainConfig {
                epochs: args.pretrain_epochs,
                shuffle_seed: sub_seed(ctx.seed, "pretrain"),
                ..embed_cfg.clone()
            };
            let (mut net, mut history) = baseline_train(&config, &splits, &pre_cfg)?;
            let more = embed_pretrain(&mut net, &splits, &records, &embed_cfg)?;
            history.extend(more);
            (net, history)
        }
    };
    net.save(&model_path)?;
    write_guarded(
        ctx,
        &args.out_dir.join("embed_metrics.csv"),
        metrics_csv(&history).as_bytes(),
    )?;

    // clean accuracy of the watermarked model sets the default threshold
    let m = evaluate(
        &net,
        &splits.test.input_batch(&config.input_shape)?,
        splits.test.labels(),
    )?;
    let t_acc = m.accuracy - 0.05;
    let mut all_confirmed = true;
    for (i, record) in records.iter().enumerate() {
        record.write_file(&args.out_dir.join(format!("wm_{i}.txt")))?;
        record
            .signature
            .write_file(&args.out_dir.join(format!("wm_{i}.sig")))?;
        let report = verify_watermark(
            &net,
            &kp.public_key(),
            &record.signature,
            &record.verifier,
            &record.suite,
            block,
            args.oob,
            &splits.test,
            t_acc,
        )?;
        all_confirmed &= report.confirmed;
        write_guarded(
            ctx,
            &args.out_dir.join(format!("verify_wm_{i}.txt")),
            report.to_text().as_bytes(),
        )?;
        ctx.log(&format!(
            "wm_{i}: acc {:.4} confirmed {}",
            report.acc, report.confirmed
        ));
    }
    ctx.log(&format!(
        "clean accuracy {:.4}; artifacts in {}",
        m.accuracy,
        args.out_dir.display()
    ));
    if !all_confirmed {
        return Err(CliError::new(
            EXIT_UNCONFIRMED,
            "embedding finished but at least one watermark failed verification",
        ));
    }
    Ok(())
}

pub fn verify(_ctx: &Ctx, args: &VerifyArgs) -> CliResult {
    let net = Network::<f32>::load(&args.model)?;
    let pk = PublicKey::from_key_file(&args.public_key)?;
    let sig = Signature::from_file(&args.sig)?;
    let v = VerifierString::new(&args.owner_id, args.timestamp)?;
    let ds = load_windowed::<f32>(&args.data)?;
    let inputs = if ds.n() > args.max_inputs {
        ds.subset(&(0..args.max_inputs).collect::<Vec<_>>())?
    } else {
        ds.clone()
    };
    let t_acc = match args.t_acc {
        Some(t) => t,
        None => {
            let m = evaluate(
                &net,
                &inputs.input_batch(&net.config().input_shape)?,
                inputs.labels(),
            )?;
            m.accuracy - 0.05
        }
    };
    let block = parse_pair(&args.block, "--block")?;
    let report = verify_watermark(
        &net,
        &pk,
        &sig,
        &v,
        &HashSuite::default(),
        block,
        args.oob,
        &inputs,
        t_acc,
    )?;
    print!("{}", report.to_text());
    if report.confirmed {
        Ok(())
    } else {
        Err(CliError::new(EXIT_UNCONFIRMED, "watermark not confirmed"))
    }
}

// ---------------------------------------------------------------------------
// attack
// ---------------------------------------------------------------------------

pub fn attack(ctx: &Ctx, args: &AttackArgs) -> CliResult {
    let net = Network::<f32>::load(&args.model)?;
    let ds = load_windowed::<f32>(&args.data)?;
    let record = WatermarkRecord::from_file(&args.record)?;
    if !(0.0 < args.fraction && args.fraction < 1.0) {
        return Err(CliError::io("--fraction must lie strictly between 0 and 1"));
    }
    let (owner_part, attacker_part, _) = split(
        &ds,
        (1.0 - args.fraction, args.fraction, 0.0),
        sub_seed(ctx.seed, "attack-split"),
    )?;
    let eval_set = owner_part.ok_or_else(|| CliError::io("owner part of the split is empty"))?;
    let attacker_data =
        attacker_part.ok_or_else(|| CliError::io("attacker fraction produced no samples"))?;

    let input_shape = net.config().input_shape.clone();
    let base_m = evaluate(&net, &eval_set.input_batch(&input_shape)?, eval_set.labels())?;
    let t_acc = base_m.accuracy - 0.05;
    let eval = WatermarkEval::new(&record.filter, &eval_set, &input_shape, t_acc, base_m.accuracy)?;
    let train_cfg = TrainConfig {
        learning_rate: args.learning_rate,
        batch_size: args.batch_size,
        epochs: args.epochs,
        early_stop_patience: 0,
        shuffle_seed: sub_seed(ctx.seed, "attack"),
        grad_clip: 1.0,
    };

    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::io(format!("creating {}: {e}", args.out_dir.display())))?;
    let reports: Vec<AttackReport> = match args.kind.as_str() {
        "fine-tune" | "fine_tune" => {
            let mode: FineTuneMode = args.mode.parse()?;
            vec![fine_tune_attack(
                &net,
                &attacker_data,
                mode,
                args.epochs,
                &eval,
                &train_cfg,
            )?]
        }
        "transfer" => {
            let mode: TransferMode = args.mode.parse()?;
            let new_task = generate_synthetic::<f32>(&SyntheticSpec {
                channels: ds.channels(),
                timepoints: ds.timepoints(),
                sample_rate: ds.sample_rate(),
                class_freqs: vec![vec![8.0], vec![16.0], vec![24.0]],
                noise_std: 0.25,
                class_balance: 0.5,
                n_samples: attacker_data.n().max(120),
                seed: sub_seed(ctx.seed, "transfer-data"),
            })?;
            vec![transfer_attack(
                &net,
                &new_task,
                mode,
                args.epochs,
                &eval,
                &train_cfg,
            )?]
        }
        "prune" => {
            let strategy: PruneStrategy = if args.mode.is_empty() {
                PruneStrategy::L1Ascending
            } else {
                args.mode.parse()?
            };
            let ratios = parse_float_list(&args.ratios, "--ratios")?;
            vec![prune_attack(
                &net,
                strategy,
                &ratios,
                &eval,
                sub_seed(ctx.seed, "prune"),
            )?]
        }
        "piracy" => {
            let pk_path = args.public_key.as_ref().ok_or_else(|| {
                CliError::io("piracy needs --public-key for the owner's final verification")
            })?;
            let owner_pk = PublicKey::from_key_file(pk_path)?;
            let mut attacker_seed = [0u8; SEED_LEN];
            for (i, b) in sub_seed(ctx.seed, "attacker-key").to_le_bytes().iter().enumerate() {
                attacker_seed[i] = *b;
            }
            let attacker_kp = OwnerKeypair::generate(&attacker_seed)?;
            let attacker_v = VerifierString::new("attacker", record.verifier.timestamp() + 1000)?;
            let suite = record.suite.clone();
            let outcome = piracy_attack(
                &net,
                &attacker_kp,
                &attacker_v,
                args.epochs,
                &PiracyConfig {
                    attacker_data: &attacker_data,
                    eval: &eval,
                    owner_public_key: &owner_pk,
                    owner_signature: &record.signature,
                    owner_verifier: &record.verifier,
                    suite: &suite,
                    block: record.filter.block(),
                    oob_magnitude: record.filter.oob_magnitude(),
                    trigger_fraction: record.trigger_fraction,
                    train: train_cfg.clone(),
                    verify_inputs: &eval_set,
                },
            )?;
            write_guarded(
                ctx,
                &args.out_dir.join("piracy_owner_verification.txt"),
                outcome.owner_report.to_text().as_bytes(),
            )?;
            write_guarded(
                ctx,
                &args.out_dir.join("piracy_attacker_verification.txt"),
                outcome.attacker_report.to_text().as_bytes(),
            )?;
            vec![outcome.report]
        }
        other => return Err(CliError::io(format!("unknown attack kind `{other}`"))),
    };
    for report in &reports {
        let stem = format!("{}_{}_seed{}", report.kind, report.mode, ctx.seed);
        write_guarded(
            ctx,
            &args.out_dir.join(format!("{stem}.csv")),
            report.to_csv().as_bytes(),
        )?;
        write_guarded(
            ctx,
            &args.out_dir.join(format!("{stem}.txt")),
            report.summary_text().as_bytes(),
        )?;
        ctx.log(&format!(
            "{stem}: watermark_survived {} task_preserved {}",
            report.watermark_survived, report.task_preserved
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

pub fn report(_ctx: &Ctx, args: &ReportArgs) -> CliResult {
    let summary = args.out_dir.join("summary.txt");
    let text = std::fs::read_to_string(&summary).map_err(|e| {
        CliError::io(format!(
            "{} (is this a finished run directory?): {e}",
            summary.display()
        ))
    })?;
    print!("{text}");
    Ok(())
}
