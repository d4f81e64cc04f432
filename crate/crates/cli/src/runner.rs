//! The `run` verb: execute a manifest end to end and write the artifact
//! tree. Every byte written is a pure function of (manifest, seed); logs go
//! to stderr only.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use eegmark::attacks::{
    fine_tune_attack, piracy_attack, prune_attack, transfer_attack, AttackReport, FineTuneMode,
    PiracyConfig, TransferMode, WatermarkEval,
};
use eegmark::data::{generate_synthetic, load_windowed, save_windowed, split_n, SyntheticSpec};
use eegmark::identity::{write_key_file, OwnerKeypair, VerifierString};
use eegmark::nn::{evaluate, PruneStrategy, TrainConfig};
use eegmark::pipeline::{
    baseline_train, embed_from_scratch, embed_pretrain, verify_watermark, DataSplits,
    EmbeddingStrategy,
};
use eegmark::rng::sub_seed;

use crate::commands::{build_records, load_config, metrics_csv, CliError, CliResult, Ctx};
use crate::manifest::{Manifest, TransferDataSection};
use crate::{RunArgs, EXIT_STAGE};

struct GateOutcome {
    name: String,
    passed: bool,
    detail: String,
}

pub fn run(ctx: &Ctx, args: &RunArgs) -> CliResult {
    let mut manifest = Manifest::load(&args.manifest).map_err(CliError::io)?;
    if let Some(out_dir) = &args.out_dir {
        manifest.experiment.out_dir = out_dir.clone();
    }
    if let Some(seed) = args.run_seed {
        manifest.experiment.seed = seed;
    }
    let out = manifest.experiment.out_dir.clone();
    if out.exists() && out.read_dir().map(|mut d| d.next().is_some()).unwrap_or(false) {
        if !ctx.force {
            return Err(CliError::new(
                crate::EXIT_OVERWRITE,
                format!(
                    "{} exists and is not empty; pass --force to overwrite",
                    out.display()
                ),
            ));
        }
        std::fs::remove_dir_all(&out)
            .map_err(|e| CliError::io(format!("clearing {}: {e}", out.display())))?;
    }
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::io(format!("creating {}: {e}", out.display())))?;
    let seed = manifest.experiment.seed;
    write_file(&out.join("manifest.toml"), manifest.to_toml().as_bytes())?;

    let mut summary = String::new();
    let mut gates: Vec<GateOutcome> = Vec::new();

    // ── data ────────────────────────────────────────────────────────────
    ctx.log("stage: data");
    let dataset = if manifest.data.source == "synthetic" {
        let spec = SyntheticSpec {
            channels: manifest.data.channels,
            timepoints: manifest.data.timepoints,
            sample_rate: manifest.data.sample_rate,
            class_freqs: manifest.data.class_freqs.clone(),
            noise_std: manifest.data.noise_std,
            class_balance: manifest.data.class_balance,
            n_samples: manifest.data.samples,
            seed: sub_seed(seed, "data"),
        };
        generate_synthetic::<f32>(&spec).map_err(|e| CliError::stage("data", e))?
    } else {
        load_windowed::<f32>(Path::new(&manifest.data.source))
            .map_err(|e| CliError::stage("data", e))?
    };
    std::fs::create_dir_all(out.join("data")).map_err(|e| CliError::io(e.to_string()))?;
    save_windowed(&dataset, &out.join("data/dataset.eeg"))
        .map_err(|e| CliError::stage("data", e))?;

    let mut parts = split_n(&dataset, &manifest.data.split, sub_seed(seed, "split"))
        .map_err(|e| CliError::stage("data", e))?;
    let attacker_data = parts.pop().expect("four parts");
    let test = parts
        .pop()
        .expect("four parts")
        .ok_or_else(|| CliError::stage("data", "test split is empty"))?;
    let val = parts.pop().expect("four parts");
    let train = parts
        .pop()
        .expect("four parts")
        .ok_or_else(|| CliError::stage("data", "train split is empty"))?;
    let _ = writeln!(
        summary,
        "data: {} samples ({} train / {} val / {} test / {} attacker)",
        dataset.n(),
        train.n(),
        val.as_ref().map(|v| v.n()).unwrap_or(0),
        test.n(),
        attacker_data.as_ref().map(|v| v.n()).unwrap_or(0),
    );
    let splits = DataSplits { train, val, test };

    // ── keys ────────────────────────────────────────────────────────────
    ctx.log("stage: keys");
    let mut key_seed = [0u8; 32];
    key_seed[..8].copy_from_slice(&sub_seed(seed, "owner-key").to_le_bytes());
    key_seed[8..16].copy_from_slice(&sub_seed(seed, "owner-key-2").to_le_bytes());
    key_seed[16..24].copy_from_slice(&sub_seed(seed, "owner-key-3").to_le_bytes());
    key_seed[24..].copy_from_slice(&sub_seed(seed, "owner-key-4").to_le_bytes());
    let kp = OwnerKeypair::generate(&key_seed).map_err(|e| CliError::stage("keys", e))?;
    std::fs::create_dir_all(out.join("keys")).map_err(|e| CliError::io(e.to_string()))?;
    write_key_file(
        &out.join("keys/owner_private.key"),
        kp.scheme_id(),
        &kp.private_key_bytes(),
    )
    .map_err(|e| CliError::stage("keys", e))?;
    write_key_file(
        &out.join("keys/owner_public.key"),
        kp.scheme_id(),
        kp.public_key().as_bytes(),
    )
    .map_err(|e| CliError::stage("keys", e))?;

    // ── baseline ────────────────────────────────────────────────────────
    ctx.log("stage: baseline");
    let config = load_config(
        &manifest.network.config,
        splits.train.channels(),
        splits.train.timepoints(),
        splits.train.num_labels(),
    )?;
    let train_cfg = TrainConfig {
        learning_rate: manifest.train.learning_rate,
        batch_size: manifest.train.batch_size,
        epochs: manifest.train.epochs,
        early_stop_patience: manifest.train.patience,
        shuffle_seed: sub_seed(seed, "baseline"),
        grad_clip: 1.0,
    };
    let (baseline, base_history) =
        baseline_train(&config, &splits, &train_cfg).map_err(|e| CliError::stage("baseline", e))?;
    let test_inputs = splits
        .test
        .input_batch(&config.input_shape)
        .map_err(|e| CliError::stage("baseline", e))?;
    let base_m = evaluate(&baseline, &test_inputs, splits.test.labels())
        .map_err(|e| CliError::stage("baseline", e))?;
    std::fs::create_dir_all(out.join("models")).map_err(|e| CliError::io(e.to_string()))?;
    baseline
        .save(&out.join("models/baseline.ckpt"))
        .map_err(|e| CliError::stage("baseline", e))?;
    write_file(
        &out.join("models/baseline_metrics.csv"),
        metrics_csv(&base_history).as_bytes(),
    )?;
    let t_acc = base_m.accuracy - 0.05;
    let _ = writeln!(
        summary,
        "baseline: test accuracy {:.4} ({} epochs), t_acc {:.4}",
        base_m.accuracy,
        base_history.len(),
        t_acc
    );

    // ── embedding ───────────────────────────────────────────────────────
    ctx.log("stage: embed");
    let strategy: EmbeddingStrategy = manifest
        .watermark
        .strategy
        .parse()
        .map_err(|e: eegmark::Error| CliError::stage("embed", e))?;
    let records = build_records(
        &kp,
        &manifest.watermark.owner_id,
        manifest.watermark.timestamp,
        manifest.watermark.k,
        &[splits.train.channels(), splits.train.timepoints()],
        splits.train.num_labels(),
        (manifest.watermark.block[0], manifest.watermark.block[1]),
        manifest.watermark.oob_magnitude,
        strategy,
        manifest.watermark.trigger_fraction,
    )?;
    let embed_cfg = TrainConfig {
        epochs: manifest.watermark.embed_epochs,
        early_stop_patience: 0,
        shuffle_seed: sub_seed(seed, "embed"),
        ..train_cfg.clone()
    };
    let (watermarked, embed_history) = match strategy {
        EmbeddingStrategy::FromScratch => {
            embed_from_scratch(&config, &splits, &records, &embed_cfg)
                .map_err(|e| CliError::stage("embed", e))?
        }
        EmbeddingStrategy::Pretrain => {
            let pre_cfg = TrainConfig {
                epochs: manifest.watermark.pretrain_epochs,
                shuffle_seed: sub_seed(seed, "pretrain"),
                ..embed_cfg.clone()
            };
            let (mut net, mut history) = baseline_train(&config, &splits, &pre_cfg)
                .map_err(|e| CliError::stage("embed", e))?;
            let more = embed_pretrain(&mut net, &splits, &records, &embed_cfg)
                .map_err(|e| CliError::stage("embed", e))?;
            history.extend(more);
            (net, history)
        }
    };
    watermarked
        .save(&out.join("models/watermarked.ckpt"))
        .map_err(|e| CliError::stage("embed", e))?;
    write_file(
        &out.join("models/embed_metrics.csv"),
        metrics_csv(&embed_history).as_bytes(),
    )?;
    let wm_m = evaluate(&watermarked, &test_inputs, splits.test.labels())
        .map_err(|e| CliError::stage("embed", e))?;
    let _ = writeln!(
        summary,
        "watermarked ({strategy}): test accuracy {:.4} (drop {:.4})",
        wm_m.accuracy,
        base_m.accuracy - wm_m.accuracy
    );

    // ── verification ────────────────────────────────────────────────────
    ctx.log("stage: verify");
    std::fs::create_dir_all(out.join("watermark")).map_err(|e| CliError::io(e.to_string()))?;
    for (i, record) in records.iter().enumerate() {
        record
            .write_file(&out.join(format!("watermark/wm_{i}.txt")))
            .map_err(|e| CliError::stage("verify", e))?;
        record
            .signature
            .write_file(&out.join(format!("watermark/wm_{i}.sig")))
            .map_err(|e| CliError::stage("verify", e))?;
        let report = verify_watermark(
            &watermarked,
            &kp.public_key(),
            &record.signature,
            &record.verifier,
            &record.suite,
            record.filter.block(),
            record.filter.oob_magnitude(),
            &splits.test,
            t_acc,
        )
        .map_err(|e| CliError::stage("verify", e))?;
        write_file(
            &out.join(format!("watermark/verify_wm_{i}.txt")),
            report.to_text().as_bytes(),
        )?;
        let _ = writeln!(
            summary,
            "wm_{i}: true {:.4} null {:.4} acc {:.4} confirmed {}",
            report.true_embed_accuracy, report.null_consistency, report.acc, report.confirmed
        );
        gates.push(GateOutcome {
            name: format!("verification wm_{i} confirmed"),
            passed: report.confirmed,
            detail: format!("acc {:.4} vs t_acc {:.4}", report.acc, report.t_acc),
        });
    }

    // ── attacks ─────────────────────────────────────────────────────────
    let owner_filter = &records[0].filter;
    let eval = WatermarkEval::new(
        owner_filter,
        &splits.test,
        &config.input_shape,
        t_acc,
        base_m.accuracy,
    )
    .map_err(|e| CliError::stage("attacks", e))?;
    let attacks_dir = out.join("attacks");
    let has_attacks = !manifest.attacks.fine_tune.is_empty()
        || !manifest.attacks.transfer.is_empty()
        || !manifest.attacks.prune_strategies.is_empty()
        || manifest.attacks.piracy_epochs > 0;
    if has_attacks {
        std::fs::create_dir_all(&attacks_dir).map_err(|e| CliError::io(e.to_string()))?;
    }
    let attacker_ref = attacker_data.as_ref();

    for &attack_seed in &manifest.attacks.seeds {
        let attack_cfg = TrainConfig {
            epochs: 0, // per-attack loops drive epochs explicitly
            early_stop_patience: 0,
            shuffle_seed: sub_seed(seed, &format!("attack-{attack_seed}")),
            ..train_cfg.clone()
        };

        for spec in &manifest.attacks.fine_tune {
            ctx.log(&format!("stage: attack fine-tune {spec} seed {attack_seed}"));
            let (mode, epochs) = parse_mode_epochs(spec)?;
            let mode: FineTuneMode = mode.parse().map_err(|e: eegmark::Error| {
                CliError::stage("attacks", format!("fine_tune `{spec}`: {e}"))
            })?;
            let data = attacker_ref.ok_or_else(|| {
                CliError::stage("attacks", "fine-tune needs an attacker split > 0")
            })?;
            let report = fine_tune_attack(&watermarked, data, mode, epochs, &eval, &attack_cfg)
                .map_err(|e| CliError::stage("attacks", e))?;
            write_attack(&attacks_dir, &report, attack_seed, &mut summary)?;
        }

        for spec in &manifest.attacks.transfer {
            ctx.log(&format!("stage: attack transfer {spec} seed {attack_seed}"));
            let (mode, epochs) = parse_mode_epochs(spec)?;
            let mode: TransferMode = mode.parse().map_err(|e: eegmark::Error| {
                CliError::stage("attacks", format!("transfer `{spec}`: {e}"))
            })?;
            let td = manifest
                .attacks
                .transfer_data
                .clone()
                .unwrap_or_else(TransferDataSection::default);
            let new_task = generate_synthetic::<f32>(&SyntheticSpec {
                channels: dataset.channels(),
                timepoints: dataset.timepoints(),
                sample_rate: dataset.sample_rate(),
                class_freqs: td.class_freqs.clone(),
                noise_std: td.noise_std,
                class_balance: 0.5,
                n_samples: td.samples,
                seed: sub_seed(seed, "transfer-data"),
            })
            .map_err(|e| CliError::stage("attacks", e))?;
            let report = transfer_attack(&watermarked, &new_task, mode, epochs, &eval, &attack_cfg)
                .map_err(|e| CliError::stage("attacks", e))?;
            write_attack(&attacks_dir, &report, attack_seed, &mut summary)?;
        }

        for strategy in &manifest.attacks.prune_strategies {
            ctx.log(&format!("stage: attack prune {strategy} seed {attack_seed}"));
            let strategy: PruneStrategy = strategy.parse().map_err(|e: eegmark::Error| {
                CliError::stage("attacks", format!("prune `{strategy}`: {e}"))
            })?;
            let report = prune_attack(
                &watermarked,
                strategy,
                &manifest.attacks.prune_ratios,
                &eval,
                sub_seed(seed, &format!("prune-{attack_seed}")),
            )
            .map_err(|e| CliError::stage("attacks", e))?;
            write_attack(&attacks_dir, &report, attack_seed, &mut summary)?;
        }

        if manifest.attacks.piracy_epochs > 0 {
            ctx.log(&format!(
                "stage: attack piracy {} epochs seed {attack_seed}",
                manifest.attacks.piracy_epochs
            ));
            let data = attacker_ref.ok_or_else(|| {
                CliError::stage("attacks", "piracy needs an attacker split > 0")
            })?;
            let mut attacker_key = [0u8; 32];
            attacker_key[..8]
                .copy_from_slice(&sub_seed(seed, &format!("attacker-{attack_seed}")).to_le_bytes());
            let attacker_kp =
                OwnerKeypair::generate(&attacker_key).map_err(|e| CliError::stage("attacks", e))?;
            let attacker_v =
                VerifierString::new("attacker", manifest.watermark.timestamp + 10_000)
                    .map_err(|e| CliError::stage("attacks", e))?;
            let outcome = piracy_attack(
                &watermarked,
                &attacker_kp,
                &attacker_v,
                manifest.attacks.piracy_epochs,
                &PiracyConfig {
                    attacker_data: data,
                    eval: &eval,
                    owner_public_key: &kp.public_key(),
                    owner_signature: &records[0].signature,
                    owner_verifier: &records[0].verifier,
                    suite: &records[0].suite,
                    block: owner_filter.block(),
                    oob_magnitude: owner_filter.oob_magnitude(),
                    trigger_fraction: manifest.watermark.trigger_fraction,
                    train: TrainConfig {
                        shuffle_seed: sub_seed(seed, &format!("piracy-{attack_seed}")),
                        ..attack_cfg.clone()
                    },
                    verify_inputs: &splits.test,
                },
            )
            .map_err(|e| CliError::stage("attacks", e))?;
            write_attack(&attacks_dir, &outcome.report, attack_seed, &mut summary)?;
            write_file(
                &attacks_dir.join(format!("piracy_owner_verification_seed{attack_seed}.txt")),
                outcome.owner_report.to_text().as_bytes(),
            )?;
            write_file(
                &attacks_dir.join(format!("piracy_attacker_verification_seed{attack_seed}.txt")),
                outcome.attacker_report.to_text().as_bytes(),
            )?;
            let _ = writeln!(
                summary,
                "piracy seed {attack_seed}: owner confirmed {} | attacker confirmed {} | final eeg {:.4}",
                outcome.owner_report.confirmed,
                outcome.attacker_report.confirmed,
                outcome.report.final_step().eeg_accuracy
            );
            gates.push(GateOutcome {
                name: format!("piracy seed {attack_seed}: owner watermark intact"),
                passed: outcome.owner_report.confirmed,
                detail: format!("owner acc {:.4}", outcome.owner_report.acc),
            });
            gates.push(GateOutcome {
                name: format!("piracy seed {attack_seed}: attacker blocked or task broken"),
                passed: !outcome.attacker_report.confirmed
                    || outcome.report.final_step().eeg_accuracy <= base_m.accuracy - 0.10,
                detail: format!(
                    "attacker acc {:.4}, final eeg {:.4}",
                    outcome.attacker_report.acc,
                    outcome.report.final_step().eeg_accuracy
                ),
            });
        }
    }

    // ── summary + gates ─────────────────────────────────────────────────
    let mut gate_text = String::new();
    let mut all_passed = true;
    for gate in &gates {
        all_passed &= gate.passed;
        let _ = writeln!(
            gate_text,
            "gate [{}] {} ({})",
            if gate.passed { "pass" } else { "FAIL" },
            gate.name,
            gate.detail
        );
    }
    let _ = writeln!(summary, "{}", gate_text.trim_end());
    let _ = writeln!(
        summary,
        "result: {}",
        if all_passed { "all gates passed" } else { "GATES FAILED" }
    );
    write_file(&out.join("summary.txt"), summary.as_bytes())?;
    ctx.log(&format!("summary written to {}", out.join("summary.txt").display()));
    if !all_passed {
        return Err(CliError::new(
            EXIT_STAGE,
            format!("gates failed:\n{gate_text}"),
        ));
    }
    Ok(())
}

fn parse_mode_epochs(spec: &str) -> Result<(String, usize), CliError> {
    let (mode, epochs) = spec
        .split_once(':')
        .ok_or_else(|| CliError::stage("attacks", format!("`{spec}` is not MODE:EPOCHS")))?;
    let epochs = epochs
        .trim()
        .parse()
        .map_err(|_| CliError::stage("attacks", format!("bad epoch count in `{spec}`")))?;
    Ok((mode.trim().to_string(), epochs))
}

fn write_attack(
    dir: &Path,
    report: &AttackReport,
    seed: u64,
    summary: &mut String,
) -> Result<(), CliError> {
    let stem = format!("{}_{}_seed{}", report.kind, report.mode, seed);
    write_file(&dir.join(format!("{stem}.csv")), report.to_csv().as_bytes())?;
    write_file(
        &dir.join(format!("{stem}.txt")),
        report.summary_text().as_bytes(),
    )?;
    let last = report.final_step();
    let _ = writeln!(
        summary,
        "{stem}: eeg {:.4} true {:.4} null {:.4} survived {} task_preserved {}",
        last.eeg_accuracy,
        last.true_embed_accuracy,
        last.null_embed_accuracy,
        report.watermark_survived,
        report.task_preserved
    );
    Ok(())
}

fn write_file(path: &PathBuf, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes)
        .map_err(|e| CliError::io(format!("writing {}: {e}", path.display())))
}
