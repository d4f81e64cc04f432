//! Datasets: synthetic EEG-like generation, binary container formats,
//! DEAP-style trial windowing, stratified splits, and trigger-set
//! construction.
//!
//! Two binary container layouts exist:
//!
//! * windowed (`EEGW1`): magic, then little-endian u32 `N`, `C`, `T`,
//!   `sample_rate_hz`, `num_labels`, then `N·C·T` little-endian f32
//!   samples, then `N` label bytes;
//! * trial (`EEGT1`): magic, then u32 `num_trials`, `C`, `T_trial`,
//!   `sample_rate_hz`, then `num_trials` f32 ratings, then the trial
//!   signals. [`load_deap_windows`] slices trials into non-overlapping
//!   windows and binarizes ratings at the valence threshold.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::filter::{overlay, WonderFilter};
use crate::nn::Tensor;
use crate::scalar::Scalar;

const WINDOWED_MAGIC: &[u8; 5] = b"EEGW1";
const TRIAL_MAGIC: &[u8; 5] = b"EEGT1";

// ---------------------------------------------------------------------------
// EEGDataset
// ---------------------------------------------------------------------------

/// Labelled [N, C, T] samples.
#[derive(Debug, Clone)]
pub struct EEGDataset<F> {
    samples: Tensor<F>,
    labels: Vec<u8>,
    sample_rate: u32,
    num_labels: usize,
    source: String,
}

impl<F: Scalar> EEGDataset<F> {
    pub fn new(
        samples: Tensor<F>,
        labels: Vec<u8>,
        sample_rate: u32,
        num_labels: usize,
        source: &str,
    ) -> Result<Self> {
        let shape = samples.shape();
        if shape.len() != 3 {
            return Err(Error::ShapeMismatch {
                expected: "[N, C, T]".into(),
                got: format!("{shape:?}"),
            });
        }
        if shape[0] != labels.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} labels", shape[0]),
                got: format!("{}", labels.len()),
            });
        }
        if labels.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if let Some(&bad) = labels.iter().find(|&&l| (l as usize) >= num_labels) {
            return Err(Error::Format(format!(
                "label {bad} outside 0..{num_labels}"
            )));
        }
        if samples.has_non_finite() {
            return Err(Error::Format("samples contain NaN or infinity".into()));
        }
        Ok(Self {
            samples,
            labels,
            sample_rate,
            num_labels,
            source: source.to_string(),
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn channels(&self) -> usize {
        self.samples.shape()[1]
    }

    pub fn timepoints(&self) -> usize {
        self.samples.shape()[2]
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn samples(&self) -> &Tensor<F> {
        &self.samples
    }

    pub fn sample_len(&self) -> usize {
        self.channels() * self.timepoints()
    }

    /// One sample as a [C, T] tensor.
    pub fn sample_tensor(&self, i: usize) -> Tensor<F> {
        let len = self.sample_len();
        Tensor::from_vec(
            &[self.channels(), self.timepoints()],
            self.samples.row(i, len).to_vec(),
        )
        .expect("sample dims")
    }

    /// All samples reshaped to [N, …input_shape] for a network whose input
    /// element count matches one sample (e.g. [1, C, T]).
    pub fn input_batch(&self, input_shape: &[usize]) -> Result<Tensor<F>> {
        let per: usize = input_shape.iter().product();
        if per != self.sample_len() {
            return Err(Error::ShapeMismatch {
                expected: format!("input of {} elements", self.sample_len()),
                got: format!("{input_shape:?}"),
            });
        }
        let mut shape = vec![self.n()];
        shape.extend_from_slice(input_shape);
        self.samples.reshape(&shape)
    }

    /// Subset by sample indices, preserving order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let len = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * len);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.samples.row(i, len));
            labels.push(self.labels[i]);
        }
        Ok(Self {
            samples: Tensor::from_vec(&[indices.len(), self.channels(), self.timepoints()], data)?,
            labels,
            sample_rate: self.sample_rate,
            num_labels: self.num_labels,
            source: self.source.clone(),
        })
    }

    /// Concatenate several datasets with identical shape metadata.
    pub fn concat(parts: &[&Self]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyDataset)?;
        let (c, t) = (first.channels(), first.timepoints());
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for part in parts {
            if part.channels() != c || part.timepoints() != t {
                return Err(Error::ShapeMismatch {
                    expected: format!("[*, {c}, {t}]"),
                    got: format!("[*, {}, {}]", part.channels(), part.timepoints()),
                });
            }
            data.extend_from_slice(part.samples.data());
            labels.extend_from_slice(&part.labels);
        }
        Ok(Self {
            samples: Tensor::from_vec(&[labels.len(), c, t], data)?,
            labels,
            sample_rate: first.sample_rate,
            num_labels: first.num_labels,
            source: first.source.clone(),
        })
    }

    /// Replace every sample with its overlay under `filter`, keeping labels.
    pub fn overlay_all(&self, filter: &WonderFilter, use_inverted: bool) -> Result<Self> {
        let len = self.sample_len();
        let mut data = Vec::with_capacity(self.samples.len());
        for i in 0..self.n() {
            let x = Tensor::from_vec(
                &[self.channels(), self.timepoints()],
                self.samples.row(i, len).to_vec(),
            )?;
            let y = overlay(&x, filter, use_inverted)?;
            data.extend_from_slice(y.data());
        }
        Ok(Self {
            samples: Tensor::from_vec(
                &[self.n(), self.channels(), self.timepoints()],
                data,
            )?,
            labels: self.labels.clone(),
            sample_rate: self.sample_rate,
            num_labels: self.num_labels,
            source: self.source.clone(),
        })
    }
}

// ---------------------------------------------------------------------------
// Synthetic generation
// ---------------------------------------------------------------------------

/// Recipe for a synthetic EEG-like dataset: class k is a sum of sinusoids
/// at its band frequencies with per-sample random phases plus Gaussian
/// noise, scaled into [0, 1].
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub channels: usize,
    pub timepoints: usize,
    pub sample_rate: u32,
    /// One frequency list per class.
    pub class_freqs: Vec<Vec<f64>>,
    pub noise_std: f64,
    /// Fraction of positive samples on binary tasks; ignored (equal split)
    /// beyond two classes.
    pub class_balance: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            channels: 8,
            timepoints: 64,
            sample_rate: 64,
            class_freqs: vec![vec![6.0], vec![12.0]],
            noise_std: 0.1,
            class_balance: 0.5,
            n_samples: 2000,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.timepoints == 0 || self.n_samples == 0 {
            return Err(Error::Spec("dimensions must be positive".into()));
        }
        if self.class_freqs.is_empty() {
            return Err(Error::Spec("need at least one class".into()));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        for (k, freqs) in self.class_freqs.iter().enumerate() {
            if freqs.is_empty() {
                return Err(Error::Spec(format!("class {k} has no frequencies")));
            }
            for &f in freqs {
                if !(f > 0.0 && f < nyquist) {
                    return Err(Error::Spec(format!(
                        "class {k} frequency {f} outside (0, {nyquist}) Hz"
                    )));
                }
            }
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Spec("noise std must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.class_balance) {
            return Err(Error::Spec("class balance must lie in [0, 1]".into()));
        }
        if self.class_freqs.len() > 256 {
            return Err(Error::Spec("at most 256 classes".into()));
        }
        Ok(())
    }

    /// Exact per-class sample counts.
    fn class_counts(&self) -> Vec<usize> {
        let k = self.class_freqs.len();
        let n = self.n_samples;
        if k == 2 {
            let pos = (n as f64 * self.class_balance).round() as usize;
            vec![n - pos, pos]
        } else {
            let base = n / k;
            let rem = n % k;
            (0..k).map(|i| base + usize::from(i < rem)).collect()
        }
    }
}

/// Generate a synthetic dataset; deterministic from the spec's seed.
pub fn generate_synthetic<F: Scalar>(spec: &SyntheticSpec) -> Result<EEGDataset<F>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let counts = spec.class_counts();
    let mut labels: Vec<u8> = Vec::with_capacity(spec.n_samples);
    for (k, &count) in counts.iter().enumerate() {
        labels.extend(std::iter::repeat(k as u8).take(count));
    }
    labels.shuffle(&mut rng);

    let (c, t) = (spec.channels, spec.timepoints);
    let rate = spec.sample_rate as f64;
    let mut data: Vec<F> = Vec::with_capacity(spec.n_samples * c * t);
    for &label in &labels {
        let freqs = &spec.class_freqs[label as usize];
        let amp = 0.45 / freqs.len() as f64;
        for _ in 0..c {
            let phases: Vec<f64> = freqs
                .iter()
                .map(|_| rng.gen::<f64>() * std::f64::consts::TAU)
                .collect();
            for ti in 0..t {
                let time = ti as f64 / rate;
                let mut v = 0.5;
                for (f, phase) in freqs.iter().zip(&phases) {
                    v += amp * (std::f64::consts::TAU * f * time + phase).sin();
                }
                if spec.noise_std > 0.0 {
                    let noise: f64 = rng.sample(StandardNormal);
                    v += noise * spec.noise_std;
                }
                data.push(F::cast(v.clamp(0.0, 1.0)));
            }
        }
    }
    EEGDataset::new(
        Tensor::from_vec(&[spec.n_samples, c, t], data)?,
        labels,
        spec.sample_rate,
        spec.class_freqs.len(),
        "synthetic",
    )
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

/// Stratified split into arbitrarily many parts. Fractions must sum to 1;
/// parts are disjoint, exhaustive, and deterministic from the seed. A part
/// with a zero fraction comes back as `None`.
pub fn split_n<F: Scalar>(
    dataset: &EEGDataset<F>,
    fractions: &[f64],
    seed: u64,
) -> Result<Vec<Option<EEGDataset<F>>>> {
    let sum: f64 = fractions.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || fractions.iter().any(|&f| f < 0.0) {
        return Err(Error::Split(sum));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_labels];
    for (i, &l) in dataset.labels.iter().enumerate() {
        per_class[l as usize].push(i);
    }
    let mut part_indices: Vec<Vec<usize>> = vec![Vec::new(); fractions.len()];
    for pool in per_class.iter_mut() {
        pool.shuffle(&mut rng);
        let n = pool.len();
        let mut cum = 0.0;
        let mut start = 0usize;
        for (p, &f) in fractions.iter().enumerate() {
            cum += f;
            let end = if p + 1 == fractions.len() {
                n
            } else {
                (cum * n as f64).round() as usize
            };
            part_indices[p].extend_from_slice(&pool[start..end.min(n)]);
            start = end.min(n);
        }
    }
    part_indices
        .into_iter()
        .map(|mut idx| {
            if idx.is_empty() {
                Ok(None)
            } else {
                idx.sort_unstable();
                dataset.subset(&idx).map(Some)
            }
        })
        .collect()
}

/// Stratified (train, validation, test) split.
pub fn split<F: Scalar>(
    dataset: &EEGDataset<F>,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(
    Option<EEGDataset<F>>,
    Option<EEGDataset<F>>,
    Option<EEGDataset<F>>,
)> {
    let mut parts = split_n(dataset, &[fractions.0, fractions.1, fractions.2], seed)?;
    let test = parts.pop().expect("three parts");
    let val = parts.pop().expect("three parts");
    let train = parts.pop().expect("three parts");
    Ok((train, val, test))
}

// ---------------------------------------------------------------------------
// Trigger sets
// ---------------------------------------------------------------------------

/// Paired trigger data: `normal` carries W-overlaid samples all labelled
/// with the filter's target label; `null` carries W⁻-overlaid samples that
/// keep their source labels.
#[derive(Debug, Clone)]
pub struct TriggerSet<F> {
    pub normal: EEGDataset<F>,
    pub null: EEGDataset<F>,
    pub normal_sources: Vec<usize>,
    pub null_sources: Vec<usize>,
}

/// Draw `count_per_kind` source samples per kind (independently, covering
/// every class at least once when the count permits) and build both
/// embeddings.
pub fn build_trigger_set<F: Scalar>(
    dataset: &EEGDataset<F>,
    filter: &WonderFilter,
    count_per_kind: usize,
    seed: u64,
) -> Result<TriggerSet<F>> {
    if count_per_kind == 0 || count_per_kind > dataset.n() {
        return Err(Error::InsufficientData {
            requested: count_per_kind,
            available: dataset.n(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal_sources = draw_sources(dataset, count_per_kind, &mut rng);
    let null_sources = draw_sources(dataset, count_per_kind, &mut rng);

    let normal_base = dataset.subset(&normal_sources)?;
    let mut normal = normal_base.overlay_all(filter, false)?;
    normal.labels = vec![filter.target_label() as u8; normal.n()];
    normal.source = format!("{}+normal-embed", dataset.source);

    let null_base = dataset.subset(&null_sources)?;
    let mut null = null_base.overlay_all(filter, true)?;
    null.source = format!("{}+null-embed", dataset.source);

    Ok(TriggerSet {
        normal,
        null,
        normal_sources,
        null_sources,
    })
}

/// Pick `count` indices: one from each class first (class order), then
/// uniformly from the rest.
fn draw_sources<F: Scalar>(
    dataset: &EEGDataset<F>,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_labels];
    for (i, &l) in dataset.labels.iter().enumerate() {
        per_class[l as usize].push(i);
    }
    let mut chosen = Vec::with_capacity(count);
    let mut taken = vec![false; dataset.n()];
    if count >= per_class.iter().filter(|p| !p.is_empty()).count() {
        for pool in per_class.iter() {
            if let Some(&pick) = pool.as_slice().choose(rng) {
                chosen.push(pick);
                taken[pick] = true;
            }
        }
    }
    let mut rest: Vec<usize> = (0..dataset.n()).filter(|&i| !taken[i]).collect();
    rest.shuffle(rng);
    for idx in rest {
        if chosen.len() == count {
            break;
        }
        chosen.push(idx);
    }
    chosen.truncate(count);
    chosen
}

// ---------------------------------------------------------------------------
// Windowed container IO
// ---------------------------------------------------------------------------

/// Write the windowed container (casts samples to f32).
pub fn save_windowed<F: Scalar>(dataset: &EEGDataset<F>, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(25 + dataset.samples.len() * 4 + dataset.n());
    out.extend_from_slice(WINDOWED_MAGIC);
    for v in [
        dataset.n() as u32,
        dataset.channels() as u32,
        dataset.timepoints() as u32,
        dataset.sample_rate,
        dataset.num_labels as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in dataset.samples.data() {
        out.extend_from_slice(&(v.into_f64() as f32).to_le_bytes());
    }
    out.extend_from_slice(&dataset.labels);
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Read a windowed container.
pub fn load_windowed<F: Scalar>(path: &Path) -> Result<EEGDataset<F>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = SliceReader::new(&bytes, path);
    if r.take(5)? != WINDOWED_MAGIC {
        return Err(Error::Format(format!(
            "{} is not a windowed dataset container",
            path.display()
        )));
    }
    let n = r.u32()? as usize;
    let c = r.u32()? as usize;
    let t = r.u32()? as usize;
    let rate = r.u32()?;
    let num_labels = r.u32()? as usize;
    if rate == 0 {
        return Err(Error::Metadata("sample rate is zero".into()));
    }
    let data = r.f32s(n * c * t)?;
    let labels = r.take(n)?.to_vec();
    r.expect_end()?;
    EEGDataset::new(
        Tensor::from_vec(&[n, c, t], data.into_iter().map(|v| F::cast(v as f64)).collect())?,
        labels,
        rate,
        num_labels,
        &format!("file:{}", path.display()),
    )
}

// ---------------------------------------------------------------------------
// Trial container IO + DEAP-style windowing
// ---------------------------------------------------------------------------

/// Per-trial continuous recordings with a rating per trial, as stored in
/// the trial container.
#[derive(Debug, Clone)]
pub struct TrialSet {
    pub signals: Vec<f32>, // num_trials × C × T_trial
    pub ratings: Vec<f32>,
    pub channels: usize,
    pub trial_len: usize,
    pub sample_rate: u32,
}

impl TrialSet {
    pub fn num_trials(&self) -> usize {
        self.ratings.len()
    }
}

/// Write a trial container.
pub fn save_trials(set: &TrialSet, path: &Path) -> Result<()> {
    if set.signals.len() != set.num_trials() * set.channels * set.trial_len {
        return Err(Error::Format("trial signal length mismatch".into()));
    }
    let mut out = Vec::new();
    out.extend_from_slice(TRIAL_MAGIC);
    for v in [
        set.num_trials() as u32,
        set.channels as u32,
        set.trial_len as u32,
        set.sample_rate,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &set.ratings {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in &set.signals {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Read a trial container.
pub fn load_trials(path: &Path) -> Result<TrialSet> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut r = SliceReader::new(&bytes, path);
    if r.take(5)? != TRIAL_MAGIC {
        return Err(Error::Format(format!(
            "{} is not a trial dataset container",
            path.display()
        )));
    }
    let trials = r.u32()? as usize;
    let channels = r.u32()? as usize;
    let trial_len = r.u32()? as usize;
    let sample_rate = r.u32()?;
    if sample_rate == 0 {
        return Err(Error::Metadata("sample rate is zero".into()));
    }
    let ratings = r.f32s(trials)?;
    let signals = r.f32s(trials * channels * trial_len)?;
    r.expect_end()?;
    Ok(TrialSet {
        signals,
        ratings,
        channels,
        trial_len,
        sample_rate,
    })
}

/// Slice each trial of a trial container into non-overlapping windows of
/// `window_seconds` and binarize ratings: strictly above the threshold is
/// positive (label 1), at or below is negative (label 0). Windows never
/// cross trial boundaries; a trial yields `floor(T_trial / window)` windows.
pub fn load_deap_windows<F: Scalar>(
    path: &Path,
    valence_threshold: f32,
    window_seconds: u32,
) -> Result<EEGDataset<F>> {
    let set = load_trials(path)?;
    window_trials(&set, valence_threshold, window_seconds, &format!(
        "deap-windows:{}",
        path.display()
    ))
}

/// Windowing core shared by the loader and the CSV converter.
pub fn window_trials<F: Scalar>(
    set: &TrialSet,
    valence_threshold: f32,
    window_seconds: u32,
    source: &str,
) -> Result<EEGDataset<F>> {
    if window_seconds == 0 {
        return Err(Error::Metadata("window must be at least one second".into()));
    }
    let window = (window_seconds * set.sample_rate) as usize;
    let per_trial = set.trial_len / window;
    if per_trial == 0 {
        return Err(Error::Format(format!(
            "trials of {} points are shorter than one {window}-point window",
            set.trial_len
        )));
    }
    let n = set.num_trials() * per_trial;
    let (c, tl) = (set.channels, set.trial_len);
    let mut data: Vec<F> = Vec::with_capacity(n * c * window);
    let mut labels = Vec::with_capacity(n);
    for trial in 0..set.num_trials() {
        let label = u8::from(set.ratings[trial] > valence_threshold);
        let base = trial * c * tl;
        for w in 0..per_trial {
            for ch in 0..c {
                let start = base + ch * tl + w * window;
                data.extend(
                    set.signals[start..start + window]
                        .iter()
                        .map(|&v| F::cast(v as f64)),
                );
            }
            labels.push(label);
        }
    }
    EEGDataset::new(
        Tensor::from_vec(&[n, c, window], data)?,
        labels,
        set.sample_rate,
        2,
        source,
    )
}

struct SliceReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> SliceReader<'a> {
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

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4")))
            .collect())
    }

    fn expect_end(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "{} has {} trailing bytes",
                self.path.display(),
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::{transform, HashSuite};
    use crate::identity::{Signature, SCHEME_ED25519};

    fn quick_spec(n: usize, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_samples: n,
            seed,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn synthetic_is_deterministic_and_balanced() {
        let spec = quick_spec(200, 3);
        let a = generate_synthetic::<f32>(&spec).unwrap();
        let b = generate_synthetic::<f32>(&spec).unwrap();
        assert_eq!(a.samples().data(), b.samples().data());
        assert_eq!(a.labels(), b.labels());
        let ones = a.labels().iter().filter(|&&l| l == 1).count();
        assert_eq!(ones, 100);
    }

    #[test]
    fn synthetic_noise_free_single_class_stays_in_unit_range() {
        let spec = SyntheticSpec {
            class_freqs: vec![vec![8.0]],
            noise_std: 0.0,
            n_samples: 5,
            ..SyntheticSpec::default()
        };
        let ds = generate_synthetic::<f64>(&spec).unwrap();
        assert!(ds
            .samples()
            .data()
            .iter()
            .all(|&v| (0.0..=1.0).contains(&v)));
        assert!(ds.labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn synthetic_rejects_super_nyquist_frequency() {
        let spec = SyntheticSpec {
            class_freqs: vec![vec![40.0], vec![12.0]],
            ..SyntheticSpec::default()
        };
        assert!(matches!(
            generate_synthetic::<f32>(&spec),
            Err(Error::Spec(_))
        ));
    }

    #[test]
    fn split_whole_set_to_train() {
        let ds = generate_synthetic::<f32>(&quick_spec(50, 1)).unwrap();
        let (train, val, test) = split(&ds, (1.0, 0.0, 0.0), 0).unwrap();
        assert_eq!(train.unwrap().n(), 50);
        assert!(val.is_none());
        assert!(test.is_none());
    }

    #[test]
    fn split_is_stratified_and_exact() {
        let ds = generate_synthetic::<f32>(&quick_spec(1000, 2)).unwrap();
        let (train, val, test) = split(&ds, (0.8, 0.1, 0.1), 5).unwrap();
        let (train, val, test) = (train.unwrap(), val.unwrap(), test.unwrap());
        assert_eq!(train.n(), 800);
        assert_eq!(val.n(), 100);
        assert_eq!(test.n(), 100);
        for part in [&train, &val, &test] {
            let ones = part.labels().iter().filter(|&&l| l == 1).count();
            assert!((ones as i64 - part.n() as i64 / 2).abs() <= 1);
        }
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let ds = generate_synthetic::<f32>(&quick_spec(120, 9)).unwrap();
        let a = split(&ds, (0.5, 0.25, 0.25), 11).unwrap();
        let b = split(&ds, (0.5, 0.25, 0.25), 11).unwrap();
        assert_eq!(
            a.0.as_ref().unwrap().samples().data(),
            b.0.as_ref().unwrap().samples().data()
        );
        let total = a.0.unwrap().n() + a.1.unwrap().n() + a.2.unwrap().n();
        assert_eq!(total, 120);
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let ds = generate_synthetic::<f32>(&quick_spec(10, 0)).unwrap();
        assert!(matches!(
            split(&ds, (0.5, 0.2, 0.2), 0),
            Err(Error::Split(_))
        ));
    }

    fn test_filter(ds: &EEGDataset<f32>) -> WonderFilter {
        let sig = Signature::from_bytes(vec![0x55; 64], SCHEME_ED25519);
        transform(
            &sig,
            &[ds.channels(), ds.timepoints()],
            ds.num_labels(),
            (4, 32),
            &HashSuite::default(),
            2000.0,
        )
        .unwrap()
    }

    #[test]
    fn trigger_set_label_discipline() {
        let ds = generate_synthetic::<f32>(&quick_spec(100, 4)).unwrap();
        let filter = test_filter(&ds);
        let trig = build_trigger_set(&ds, &filter, 20, 9).unwrap();
        assert_eq!(trig.normal.n(), 20);
        assert_eq!(trig.null.n(), 20);
        assert!(trig
            .normal
            .labels()
            .iter()
            .all(|&l| l as usize == filter.target_label()));
        for (pos, &src) in trig.null_sources.iter().enumerate() {
            assert_eq!(trig.null.labels()[pos], ds.labels()[src]);
        }
    }

    #[test]
    fn trigger_normal_differs_from_source_exactly_on_block() {
        let ds = generate_synthetic::<f32>(&quick_spec(40, 5)).unwrap();
        let filter = test_filter(&ds);
        let trig = build_trigger_set(&ds, &filter, 5, 3).unwrap();
        let (br, bc) = filter.block();
        let len = ds.sample_len();
        for (pos, &src) in trig.normal_sources.iter().enumerate() {
            let orig = ds.samples().row(src, len);
            let new = trig.normal.samples().row(pos, len);
            let diff = orig.iter().zip(new).filter(|(a, b)| a != b).count();
            assert_eq!(diff, br * bc);
        }
    }

    #[test]
    fn trigger_set_covers_every_class() {
        for seed in 0..50 {
            let ds = generate_synthetic::<f32>(&quick_spec(60, 100 + seed)).unwrap();
            let filter = test_filter(&ds);
            let trig = build_trigger_set(&ds, &filter, 2, seed).unwrap();
            let mut seen = [false; 2];
            for &l in trig.null.labels() {
                seen[l as usize] = true;
            }
            assert!(seen[0] && seen[1], "seed {seed} missed a class");
        }
    }

    #[test]
    fn trigger_count_must_fit() {
        let ds = generate_synthetic::<f32>(&quick_spec(10, 0)).unwrap();
        let filter = test_filter(&ds);
        assert!(matches!(
            build_trigger_set(&ds, &filter, 11, 0),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn windowed_container_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_synthetic::<f32>(&quick_spec(30, 8)).unwrap();
        let path = dir.path().join("data.eeg");
        save_windowed(&ds, &path).unwrap();
        let loaded = load_windowed::<f32>(&path).unwrap();
        assert_eq!(loaded.samples().data(), ds.samples().data());
        assert_eq!(loaded.labels(), ds.labels());
        assert_eq!(loaded.sample_rate(), ds.sample_rate());
        // re-export must produce identical bytes
        let path2 = dir.path().join("data2.eeg");
        save_windowed(&loaded, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn windowed_container_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_synthetic::<f32>(&quick_spec(5, 8)).unwrap();
        let path = dir.path().join("data.eeg");
        save_windowed(&ds, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_windowed::<f32>(&path),
            Err(Error::Format(_))
        ));
    }

    fn toy_trials() -> TrialSet {
        // 2 trials, 2 channels, 10 points at 4 Hz
        let mut signals = Vec::new();
        for trial in 0..2 {
            for ch in 0..2 {
                for t in 0..10 {
                    signals.push((trial * 100 + ch * 10 + t) as f32);
                }
            }
        }
        TrialSet {
            signals,
            ratings: vec![5.0, 6.5],
            channels: 2,
            trial_len: 10,
            sample_rate: 4,
        }
    }

    #[test]
    fn deap_windowing_counts_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trials.eeg");
        save_trials(&toy_trials(), &path).unwrap();
        let ds = load_deap_windows::<f32>(&path, 5.0, 1).unwrap();
        // floor(10 / 4) = 2 windows per trial
        assert_eq!(ds.n(), 4);
        assert_eq!(ds.timepoints(), 4);
        // rating exactly 5 is negative, 6.5 positive
        assert_eq!(ds.labels(), &[0, 0, 1, 1]);
        // windows never cross trial boundaries: first window of trial 0,
        // channel 0 is points 0..4
        assert_eq!(
            ds.samples().row(0, 8),
            &[0.0, 1.0, 2.0, 3.0, 10.0, 11.0, 12.0, 13.0][..]
        );
    }

    #[test]
    fn deap_sixty_second_trial_yields_sixty_windows() {
        let trials = TrialSet {
            signals: vec![0.25; 1 * 60 * 128],
            ratings: vec![7.0],
            channels: 1,
            trial_len: 60 * 128,
            sample_rate: 128,
        };
        let ds = window_trials::<f32>(&trials, 5.0, 1, "test").unwrap();
        assert_eq!(ds.n(), 60);
        assert_eq!(ds.timepoints(), 128);
    }

    #[test]
    fn trial_container_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trials.eeg");
        let set = toy_trials();
        save_trials(&set, &path).unwrap();
        let loaded = load_trials(&path).unwrap();
        assert_eq!(loaded.signals, set.signals);
        assert_eq!(loaded.ratings, set.ratings);
    }
}
