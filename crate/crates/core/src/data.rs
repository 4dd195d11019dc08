//! Synthetic two-modality classification data.
//!
//! Each class owns one prototype direction per modality (the standard basis
//! vector `e_y`). A sample is `strength * att * e_y + N(0, sigma^2 I)`, where
//! `att` is `attenuation_factor` for samples in that modality's hard set and 1
//! otherwise. Hard sets for the two modalities are disjoint, so some samples are
//! hard for audio, some for video, and the rest for neither.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_MODALITIES: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Audio,
    Video,
}

impl Modality {
    pub const ALL: [Modality; NUM_MODALITIES] = [Modality::Audio, Modality::Video];

    pub fn index(self) -> usize {
        match self {
            Modality::Audio => 0,
            Modality::Video => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn other(self) -> Self {
        match self {
            Modality::Audio => Modality::Video,
            Modality::Video => Modality::Audio,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Audio => "audio",
            Modality::Video => "video",
        }
    }
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub dim_a: usize,
    pub dim_v: usize,
    pub strength_a: f64,
    pub strength_v: f64,
    pub noise_sigma: f64,
    pub hard_fraction_a: f64,
    pub hard_fraction_v: f64,
    pub attenuation_factor: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    /// The desk-scale imbalanced default: audio carries a clearly stronger
    /// class signal than video, and a fifth of the samples are hard in each
    /// modality.
    fn default() -> Self {
        SynthSpec {
            num_classes: 4,
            samples_per_class: 250,
            dim_a: 8,
            dim_v: 8,
            strength_a: 2.0,
            strength_v: 0.8,
            noise_sigma: 1.0,
            hard_fraction_a: 0.2,
            hard_fraction_v: 0.2,
            attenuation_factor: 0.25,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::validation("num_classes", "must be at least 2"));
        }
        if self.samples_per_class == 0 {
            return Err(Error::validation("samples_per_class", "must be positive"));
        }
        for (field, dim) in [("dim_a", self.dim_a), ("dim_v", self.dim_v)] {
            if dim < self.num_classes {
                return Err(Error::validation(field, format!("must be >= num_classes ({}) to embed class prototypes", self.num_classes)));
            }
        }
        for (field, s) in [("strength_a", self.strength_a), ("strength_v", self.strength_v)] {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::validation(field, "must be a finite non-negative real"));
            }
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma > 0.0) {
            return Err(Error::validation("noise_sigma", "must be a finite positive real"));
        }
        for (field, f) in [("hard_fraction_a", self.hard_fraction_a), ("hard_fraction_v", self.hard_fraction_v)] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::validation(field, "must lie in [0, 1]"));
            }
        }
        if self.hard_fraction_a + self.hard_fraction_v > 1.0 {
            return Err(Error::validation("hard_fraction_a + hard_fraction_v", "must not exceed 1 (hard sets are disjoint)"));
        }
        if !(0.0..1.0).contains(&self.attenuation_factor) {
            return Err(Error::validation("attenuation_factor", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        self.num_classes * self.samples_per_class
    }

    pub fn dim(&self, modality: Modality) -> usize {
        match modality {
            Modality::Audio => self.dim_a,
            Modality::Video => self.dim_v,
        }
    }

    pub fn strength(&self, modality: Modality) -> f64 {
        match modality {
            Modality::Audio => self.strength_a,
            Modality::Video => self.strength_v,
        }
    }

    /// Modality with the larger class-signal scale (audio on ties).
    pub fn strong_modality(&self) -> Modality {
        if self.strength_v > self.strength_a {
            Modality::Video
        } else {
            Modality::Audio
        }
    }

    /// Per-sample hard-set membership `[audio, video]`, indexed by sample id.
    ///
    /// Ids are shuffled with the spec seed; the first `hard_fraction_a * N`
    /// become audio-hard and the next `hard_fraction_v * N` video-hard.
    pub fn hard_sets(&self) -> Vec<[bool; NUM_MODALITIES]> {
        let n = self.num_samples();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let n_a = (self.hard_fraction_a * n as f64).floor() as usize;
        let n_v = ((self.hard_fraction_v * n as f64).floor() as usize).min(n - n_a);
        let mut hard = vec![[false; NUM_MODALITIES]; n];
        for &id in &order[..n_a] {
            hard[id][0] = true;
        }
        for &id in &order[n_a..n_a + n_v] {
            hard[id][1] = true;
        }
        hard
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultimodalSample {
    pub id: usize,
    pub y: usize,
    pub x_a: Vec<f64>,
    pub x_v: Vec<f64>,
    #[serde(default, skip_serializing)]
    pub mask_a: bool,
    #[serde(default, skip_serializing)]
    pub mask_v: bool,
}

impl MultimodalSample {
    /// Stored input for `modality`, ignoring mask flags.
    pub fn raw(&self, modality: Modality) -> &[f64] {
        match modality {
            Modality::Audio => &self.x_a,
            Modality::Video => &self.x_v,
        }
    }

    pub fn is_masked(&self, modality: Modality) -> bool {
        match modality {
            Modality::Audio => self.mask_a,
            Modality::Video => self.mask_v,
        }
    }

    pub fn masks(&self) -> [bool; NUM_MODALITIES] {
        [self.mask_a, self.mask_v]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultimodalDataset {
    pub samples: Vec<MultimodalSample>,
    pub spec: SynthSpec,
}

impl MultimodalDataset {
    pub fn new(samples: Vec<MultimodalSample>, spec: SynthSpec) -> Result<Self> {
        for (pos, s) in samples.iter().enumerate() {
            if s.id != pos {
                return Err(Error::validation("id", format!("sample ids must be dense 0..N in order; position {pos} holds id {}", s.id)));
            }
            if s.y >= spec.num_classes {
                return Err(Error::validation("y", format!("label {} out of range for sample {pos}", s.y)));
            }
            if s.x_a.len() != spec.dim_a {
                return Err(Error::Dimension { context: "x_a", expected: spec.dim_a, actual: s.x_a.len() });
            }
            if s.x_v.len() != spec.dim_v {
                return Err(Error::Dimension { context: "x_v", expected: spec.dim_v, actual: s.x_v.len() });
            }
            if s.mask_a && s.mask_v {
                return Err(Error::validation("mask", format!("sample {pos} masks every modality")));
            }
        }
        Ok(MultimodalDataset { samples, spec })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&MultimodalSample> {
        self.samples.get(id)
    }

    pub fn num_classes(&self) -> usize {
        self.spec.num_classes
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.spec.num_classes];
        for s in &self.samples {
            counts[s.y] += 1;
        }
        counts
    }

    /// Writes a header line carrying the spec, then one sample per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let header = JsonlHeader { schema_version: SCHEMA_VERSION.to_string(), spec: self.spec.clone() };
        serde_json::to_writer(&mut out, &header)?;
        out.write_all(b"\n")?;
        for s in &self.samples {
            serde_json::to_writer(&mut out, s)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header_line = lines.next().ok_or_else(|| Error::validation("header", "empty dataset file"))??;
        let header: JsonlHeader = serde_json::from_str(&header_line)?;
        check_schema_version(&header.schema_version)?;
        let mut samples = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            samples.push(serde_json::from_str(&line)?);
        }
        MultimodalDataset::new(samples, header.spec)
    }
}

/// Schema version stamped on every persisted artifact.
pub const SCHEMA_VERSION: &str = "1.0";
pub const SCHEMA_MAJOR: u32 = 1;

pub fn check_schema_version(found: &str) -> Result<()> {
    let major = found.split('.').next().and_then(|m| m.parse::<u32>().ok());
    if major == Some(SCHEMA_MAJOR) {
        Ok(())
    } else {
        Err(Error::Schema { found: found.to_string(), expected: SCHEMA_MAJOR })
    }
}

#[derive(Serialize, Deserialize)]
struct JsonlHeader {
    schema_version: String,
    spec: SynthSpec,
}

pub fn generate_dataset(spec: &SynthSpec) -> Result<MultimodalDataset> {
    spec.validate()?;
    let hard = spec.hard_sets();
    // Independent stream from the hard-set shuffle.
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x9e37_79b9_7f4a_7c15);
    let noise = Normal::new(0.0, spec.noise_sigma).expect("noise_sigma validated positive");

    let samples = (0..spec.num_samples())
        .map(|id| {
            let y = id % spec.num_classes;
            let mut draw = |modality: Modality| {
                let k = modality.index();
                let scale = spec.strength(modality) * if hard[id][k] { spec.attenuation_factor } else { 1.0 };
                let mut x: Vec<f64> = (0..spec.dim(modality)).map(|_| noise.sample(&mut rng)).collect();
                x[y] += scale;
                x
            };
            let x_a = draw(Modality::Audio);
            let x_v = draw(Modality::Video);
            MultimodalSample { id, y, x_a, x_v, mask_a: false, mask_v: false }
        })
        .collect();
    MultimodalDataset::new(samples, spec.clone())
}

#[derive(Clone, Debug)]
pub struct Splits {
    pub train: MultimodalDataset,
    pub val: MultimodalDataset,
    pub test: MultimodalDataset,
}

/// Stratified train/val/test split. Each split is renumbered to dense ids,
/// preserving the relative order of the source ids.
pub fn split_dataset(ds: &MultimodalDataset, train_frac: f64, val_frac: f64, seed: u64) -> Result<Splits> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::validation("train_frac", "must lie in (0, 1)"));
    }
    if !(val_frac > 0.0 && val_frac < 1.0) {
        return Err(Error::validation("val_frac", "must lie in (0, 1)"));
    }
    if train_frac + val_frac >= 1.0 {
        return Err(Error::validation("train_frac + val_frac", "must be < 1 so the test split is non-empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.num_classes()];
    for s in &ds.samples {
        by_class[s.y].push(s.id);
    }
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for mut ids in by_class {
        ids.shuffle(&mut rng);
        let n = ids.len() as f64;
        let n_train = (n * train_frac).round() as usize;
        let n_val = ((n * val_frac).round() as usize).min(ids.len() - n_train);
        train.extend_from_slice(&ids[..n_train]);
        val.extend_from_slice(&ids[n_train..n_train + n_val]);
        test.extend_from_slice(&ids[n_train + n_val..]);
    }
    let build = |mut ids: Vec<usize>| {
        ids.sort_unstable();
        let samples = ids.into_iter().enumerate().map(|(new_id, old)| MultimodalSample { id: new_id, ..ds.samples[old].clone() }).collect();
        MultimodalDataset::new(samples, ds.spec.clone())
    };
    Ok(Splits { train: build(train)?, val: build(val)?, test: build(test)? })
}

/// Nearest-prototype class for a raw input: prototypes are `e_0..e_{M-1}` with
/// equal norms, so the nearest one is the largest of the first `M` coordinates.
pub fn nearest_prototype(x: &[f64], num_classes: usize) -> usize {
    crate::nn::argmax(&x[..num_classes])
}

/// Signed margin of the true class over the best competing prototype.
pub fn prototype_margin(x: &[f64], y: usize, num_classes: usize) -> f64 {
    let best_other = (0..num_classes).filter(|&j| j != y).map(|j| x[j]).fold(f64::NEG_INFINITY, f64::max);
    x[y] - best_other
}

/// Fraction of samples the nearest-prototype rule classifies correctly from
/// `modality` alone.
pub fn prototype_accuracy(ds: &MultimodalDataset, modality: Modality) -> f64 {
    if ds.is_empty() {
        return 0.0;
    }
    let m = ds.num_classes();
    let hits = ds.samples.iter().filter(|s| nearest_prototype(s.raw(modality), m) == s.y).count();
    hits as f64 / ds.len() as f64
}
