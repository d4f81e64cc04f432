//! Experiment manifest: a TOML file describing data, network, training,
//! watermarking, and the attack schedule for `eegmark run`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub experiment: ExperimentSection,
    pub data: DataSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub train: TrainSection,
    pub watermark: WatermarkSection,
    #[serde(default)]
    pub attacks: AttacksSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub seed: u64,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// "synthetic" or a path to a windowed dataset container.
    pub source: String,
    #[serde(default = "defaults::samples")]
    pub samples: usize,
    #[serde(default = "defaults::channels")]
    pub channels: usize,
    #[serde(default = "defaults::timepoints")]
    pub timepoints: usize,
    #[serde(default = "defaults::sample_rate")]
    pub sample_rate: u32,
    #[serde(default = "defaults::noise_std")]
    pub noise_std: f64,
    #[serde(default = "defaults::class_freqs")]
    pub class_freqs: Vec<Vec<f64>>,
    #[serde(default = "defaults::class_balance")]
    pub class_balance: f64,
    /// Fractions for train / validation / test / attacker, summing to 1.
    #[serde(default = "defaults::split")]
    pub split: [f64; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    /// A built-in name (`mini-eeg`, `eegnet-lite`) or a config file path.
    pub config: String,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            config: "mini-eeg".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "defaults::epochs")]
    pub epochs: usize,
    #[serde(default = "defaults::batch_size")]
    pub batch_size: usize,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "defaults::patience")]
    pub patience: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: defaults::epochs(),
            batch_size: defaults::batch_size(),
            learning_rate: defaults::learning_rate(),
            patience: defaults::patience(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WatermarkSection {
    pub owner_id: String,
    pub timestamp: i64,
    #[serde(default = "defaults::k")]
    pub k: usize,
    #[serde(default = "defaults::strategy")]
    pub strategy: String,
    #[serde(default = "defaults::block")]
    pub block: [usize; 2],
    #[serde(default = "defaults::oob_magnitude")]
    pub oob_magnitude: f64,
    #[serde(default = "defaults::trigger_fraction")]
    pub trigger_fraction: f64,
    #[serde(default = "defaults::embed_epochs")]
    pub embed_epochs: usize,
    #[serde(default = "defaults::pretrain_epochs")]
    pub pretrain_epochs: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttacksSection {
    /// Attack RNG seeds; each listed attack runs once per seed.
    #[serde(default = "defaults::attack_seeds")]
    pub seeds: Vec<u64>,
    /// Fine-tune attacks as `MODE:EPOCHS` (FTLL, FTAL, RTLL, RTAL).
    #[serde(default)]
    pub fine_tune: Vec<String>,
    /// Transfer attacks as `MODE:EPOCHS` (LAST_LAYER, ALL_LAYERS).
    #[serde(default)]
    pub transfer: Vec<String>,
    /// Prune strategies to sweep (`l1`, `random`).
    #[serde(default)]
    pub prune_strategies: Vec<String>,
    #[serde(default = "defaults::prune_ratios")]
    pub prune_ratios: Vec<f64>,
    /// Piracy attack length; 0 disables the attack.
    #[serde(default)]
    pub piracy_epochs: usize,
    #[serde(default)]
    pub transfer_data: Option<TransferDataSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferDataSection {
    #[serde(default = "defaults::transfer_samples")]
    pub samples: usize,
    #[serde(default = "defaults::transfer_freqs")]
    pub class_freqs: Vec<Vec<f64>>,
    #[serde(default = "defaults::noise_std")]
    pub noise_std: f64,
}

impl Default for TransferDataSection {
    fn default() -> Self {
        Self {
            samples: defaults::transfer_samples(),
            class_freqs: defaults::transfer_freqs(),
            noise_std: defaults::noise_std(),
        }
    }
}

mod defaults {
    pub fn samples() -> usize {
        2000
    }
    pub fn channels() -> usize {
        8
    }
    pub fn timepoints() -> usize {
        64
    }
    pub fn sample_rate() -> u32 {
        64
    }
    pub fn noise_std() -> f64 {
        0.25
    }
    pub fn class_freqs() -> Vec<Vec<f64>> {
        vec![vec![6.0], vec![12.0]]
    }
    pub fn class_balance() -> f64 {
        0.5
    }
    pub fn split() -> [f64; 4] {
        [0.6, 0.1, 0.1, 0.2]
    }
    pub fn epochs() -> usize {
        15
    }
    pub fn batch_size() -> usize {
        32
    }
    pub fn learning_rate() -> f64 {
        1e-3
    }
    pub fn patience() -> usize {
        5
    }
    pub fn k() -> usize {
        1
    }
    pub fn strategy() -> String {
        "from-scratch".into()
    }
    pub fn block() -> [usize; 2] {
        [4, 32]
    }
    pub fn oob_magnitude() -> f64 {
        2000.0
    }
    pub fn trigger_fraction() -> f64 {
        0.1
    }
    pub fn embed_epochs() -> usize {
        30
    }
    pub fn pretrain_epochs() -> usize {
        15
    }
    pub fn attack_seeds() -> Vec<u64> {
        vec![0]
    }
    pub fn prune_ratios() -> Vec<f64> {
        (0..10).map(|i| i as f64 / 10.0).collect()
    }
    pub fn transfer_samples() -> usize {
        400
    }
    pub fn transfer_freqs() -> Vec<Vec<f64>> {
        vec![vec![8.0], vec![16.0], vec![24.0]]
    }
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read manifest {}: {e}", path.display()))?;
        let manifest: Manifest =
            toml::from_str(&text).map_err(|e| format!("manifest {}: {e}", path.display()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<(), String> {
        let split_sum: f64 = self.data.split.iter().sum();
        if (split_sum - 1.0).abs() > 1e-9 {
            return Err(format!("data.split must sum to 1, got {split_sum}"));
        }
        if self.data.split[0] <= 0.0 || self.data.split[2] <= 0.0 {
            return Err("data.split needs non-zero train and test fractions".into());
        }
        if self.watermark.k == 0 {
            return Err("watermark.k must be at least 1".into());
        }
        match self.watermark.strategy.as_str() {
            "from-scratch" | "pretrain" => {}
            other => return Err(format!("unknown watermark.strategy `{other}`")),
        }
        Ok(())
    }

    /// Stable re-serialization for the audit copy in the output tree.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("manifest serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [experiment]
        seed = 42
        out_dir = "runs/x"

        [data]
        source = "synthetic"

        [watermark]
        owner_id = "owner"
        timestamp = 1735689600
    "#;

    #[test]
    fn minimal_manifest_parses_with_defaults() {
        let m: Manifest = toml::from_str(MINIMAL).unwrap();
        m.validate().unwrap();
        assert_eq!(m.data.samples, 2000);
        assert_eq!(m.network.config, "mini-eeg");
        assert_eq!(m.watermark.block, [4, 32]);
        assert!(m.attacks.fine_tune.is_empty());
    }

    #[test]
    fn bad_split_rejected() {
        let mut m: Manifest = toml::from_str(MINIMAL).unwrap();
        m.data.split = [0.5, 0.1, 0.1, 0.1];
        assert!(m.validate().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = format!("{MINIMAL}\n[bogus]\nx = 1\n");
        assert!(toml::from_str::<Manifest>(&text).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let m: Manifest = toml::from_str(MINIMAL).unwrap();
        let text = m.to_toml();
        let again: Manifest = toml::from_str(&text).unwrap();
        assert_eq!(again.to_toml(), text);
    }
}
