// Scratch harness for calibrating default hyperparameters. Not part of the
// public surface; prints timing and accuracy numbers for manual inspection.

use eegmark::data::{generate_synthetic, split_n, SyntheticSpec};
use eegmark::filter::{transform, HashSuite};
use eegmark::identity::{Signature, VerifierString, SCHEME_ED25519};
use eegmark::nn::{evaluate, train, LayerSpec, Network, NetworkConfig, TrainConfig};
use eegmark::pipeline::{
    combine_with_triggers, functional_accuracies, EmbeddingStrategy, WatermarkRecord,
};

fn eegnet_wide(channels: usize, timepoints: usize, labels: usize) -> NetworkConfig {
    let _ = timepoints;
    NetworkConfig {
        input_shape: vec![1, channels, 64],
        num_labels: labels,
        layers: vec![
            LayerSpec::Conv2D {
                out_channels: 8,
                kernel: (1, 16),
                stride: 1,
                padding: 0,
            },
            LayerSpec::ELU,
            LayerSpec::AveragePool { window: (1, 2) },
            LayerSpec::Conv2D {
                out_channels: 16,
                kernel: (channels, 1),
                stride: 1,
                padding: 0,
            },
            LayerSpec::ELU,
            LayerSpec::AveragePool { window: (1, 4) },
            LayerSpec::Dropout { p: 0.25 },
            LayerSpec::Flatten,
            LayerSpec::Dense {
                out_features: labels,
            },
            LayerSpec::Softmax,
        ],
    }
}

fn main() {
    let spec = SyntheticSpec {
        noise_std: 0.25,
        ..SyntheticSpec::default()
    };
    let ds = generate_synthetic::<f32>(&spec).unwrap();
    let mut parts = split_n(&ds, &[0.6, 0.1, 0.1, 0.2], 42).unwrap();
    let _attacker = parts.pop().unwrap().unwrap();
    let test = parts.pop().unwrap().unwrap();
    let _val = parts.pop().unwrap();
    let train_set = parts.pop().unwrap().unwrap();
    let suite = HashSuite::default();

    for (tag, config) in [
        ("lite", NetworkConfig::eegnet_lite(8, 64, 2)),
        ("wide", eegnet_wide(8, 64, 2)),
    ] {
        let test_inputs = test.input_batch(&config.input_shape).unwrap();
        let mut ok = 0;
        let mut total = 0;
        for sig_fill in [0x31u8, 0x55, 0x77, 0xAB, 0x01, 0xE9] {
            let sig = Signature::from_bytes(vec![sig_fill; 64], SCHEME_ED25519);
            let filter = transform(&sig, &[8, 64], 2, (4, 32), &suite, 2000.0).unwrap();
            for init_seed in [7u64, 1234, 5678] {
                let record = WatermarkRecord::new(
                    VerifierString::new("o", 0).unwrap(),
                    sig.clone(),
                    filter.clone(),
                    suite.clone(),
                    2,
                    EmbeddingStrategy::FromScratch,
                    0.1,
                )
                .unwrap();
                let combined =
                    combine_with_triggers(&train_set, std::slice::from_ref(&record), 42).unwrap();
                let inputs = combined.input_batch(&config.input_shape).unwrap();
                let mut net = Network::<f32>::init(config.clone(), init_seed).unwrap();
                let cfg = TrainConfig {
                    epochs: 40,
                    shuffle_seed: 42,
                    early_stop_patience: 0,
                    ..TrainConfig::default()
                };
                train(&mut net, &inputs, combined.labels(), None, &cfg).unwrap();
                let clean_m = evaluate(&net, &test_inputs, test.labels()).unwrap();
                let (true_acc, nullcons) = functional_accuracies(&net, &filter, &test).unwrap();
                let good = clean_m.accuracy >= 0.9 && true_acc >= 0.99 && nullcons >= 0.85;
                total += 1;
                if good {
                    ok += 1;
                }
                println!(
                    "{tag} 0x{sig_fill:02x}/{init_seed:4}: clean {:.3} true {:.3} null {:.3} {}",
                    clean_m.accuracy,
                    true_acc,
                    nullcons,
                    if good { "OK" } else { "--" }
                );
            }
        }
        println!("=== {tag}: {ok}/{total}\n");
    }
}
