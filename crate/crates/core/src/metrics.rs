//! Diagnostics: accuracy in multimodal and unimodal modes, the imbalance ratio
//! rho, actual-vs-ideal encoder gradient angles, and retained-sample counts.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Modality, MultimodalDataset};
use crate::error::{Error, Result};
use crate::model::{LossWeights, MultimodalModel, SampleView, UniMode};
use crate::nn::{argmax, softmax, Parameters};
use crate::remix::{apply_masks, zero_inputs, MaskedView, Partition};

/// Gradient norms at or below this make an angle undefined.
pub const ANGLE_NORM_EPS: f64 = 1e-12;
/// Denominators of rho at or below this make rho undefined.
pub const RHO_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Multimodal,
    AudioOnly,
    VideoOnly,
}

impl EvalMode {
    pub fn unimodal(m: Modality) -> Self {
        match m {
            Modality::Audio => EvalMode::AudioOnly,
            Modality::Video => EvalMode::VideoOnly,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            EvalMode::Multimodal => "multimodal",
            EvalMode::AudioOnly => "audio",
            EvalMode::VideoOnly => "video",
        }
    }
}

/// Argmax accuracy over the unmasked dataset.
pub fn accuracy(model: &MultimodalModel, ds: &MultimodalDataset, mode: EvalMode, uni_mode: UniMode) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::validation("dataset", "accuracy of an empty dataset"));
    }
    let zeros = zero_inputs(ds);
    let hits = ds
        .samples
        .par_iter()
        .map(|s| {
            let v = SampleView::full(s);
            let scores = match mode {
                EvalMode::Multimodal => model.fused_logits(&v)?,
                EvalMode::AudioOnly => model.unimodal_probs(&v, Modality::Audio, uni_mode, &zeros)?,
                EvalMode::VideoOnly => model.unimodal_probs(&v, Modality::Video, uni_mode, &zeros)?,
            };
            Ok(usize::from(argmax(&scores) == s.y))
        })
        .collect::<Result<Vec<usize>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(hits as f64 / ds.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoSample {
    pub epoch: usize,
    /// `None` when the video score is too small to divide by.
    pub rho: Option<f64>,
    pub mean_score_a: f64,
    pub mean_score_v: f64,
    pub uni_mode: UniMode,
}

/// `rho = mean_i p_a(y_i | x_i) / mean_i p_v(y_i | x_i)`, each unimodal
/// probability obtained through `uni_mode`.
pub fn imbalance_ratio(model: &MultimodalModel, batch: &[SampleView], uni_mode: UniMode, zeros: &[Vec<f64>; 2], epoch: usize) -> Result<RhoSample> {
    if batch.is_empty() {
        return Err(Error::validation("batch", "imbalance ratio of an empty batch"));
    }
    let mut sums = [0.0; 2];
    for s in batch {
        for m in Modality::ALL {
            sums[m.index()] += model.unimodal_probs(s, m, uni_mode, zeros)?[s.y];
        }
    }
    let n = batch.len() as f64;
    let (a, v) = (sums[0] / n, sums[1] / n);
    let rho = if v > RHO_EPS {
        Some(a / v)
    } else {
        log::warn!("epoch {epoch}: imbalance ratio undefined (video score {v:e})");
        None
    };
    Ok(RhoSample { epoch, rho, mean_score_a: a, mean_score_v: v, uni_mode })
}

/// Angle in degrees between two directions, or `None` if either is
/// (numerically) zero.
pub fn angle_deg(a: &[f64], b: &[f64], eps: f64) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na <= eps || nb <= eps {
        return None;
    }
    Some((dot / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleProbe {
    pub modality: Modality,
    pub angle_deg: Option<f64>,
    pub actual_norm: f64,
    pub ideal_norm: f64,
}

impl AngleProbe {
    pub fn defined(&self) -> bool {
        self.angle_deg.is_some()
    }
}

/// Compares an already-computed training gradient with the gradient the
/// modality's own unimodal CE would give its encoder on the same batch.
pub fn angle_from_actual(model: &MultimodalModel, actual: &MultimodalModel, batch: &[SampleView], modality: Modality) -> Result<AngleProbe> {
    let (_, ideal) = model.gradients_weighted(batch, &LossWeights::unimodal(modality))?;
    let a = actual.encoder(modality).flatten();
    let i = ideal.encoder(modality).flatten();
    Ok(AngleProbe {
        modality,
        angle_deg: angle_deg(&a, &i, ANGLE_NORM_EPS),
        actual_norm: actual.encoder(modality).l2_norm(),
        ideal_norm: ideal.encoder(modality).l2_norm(),
    })
}

/// Angle between the encoder gradient under `actual_weights` and under the
/// modality's unimodal CE alone, on the same batch.
pub fn gradient_angle(model: &MultimodalModel, batch: &[SampleView], modality: Modality, actual_weights: &LossWeights) -> Result<AngleProbe> {
    let (_, actual) = model.gradients_weighted(batch, actual_weights)?;
    angle_from_actual(model, &actual, batch, modality)
}

/// `|D^{m_k}|` per modality.
pub fn retained_counts(partition: &Partition) -> Vec<usize> {
    partition.counts()
}

/// Mean of the defined angles and the number of undefined probes.
pub fn summarize_angles<'a>(probes: impl IntoIterator<Item = &'a AngleProbe>) -> (Option<f64>, usize, usize) {
    let (mut sum, mut defined, mut undefined) = (0.0, 0usize, 0usize);
    for p in probes {
        match p.angle_deg {
            Some(a) => {
                sum += a;
                defined += 1;
            }
            None => undefined += 1,
        }
    }
    ((defined > 0).then(|| sum / defined as f64), defined, undefined)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngleComparison {
    pub modality: Modality,
    /// Batches drawn from the subset retaining `modality`, masks applied.
    pub pure: Vec<AngleProbe>,
    /// Batches drawn across subsets with the same masks (decoupled but not
    /// reassembled).
    pub mixed: Vec<AngleProbe>,
    /// Batches drawn across subsets with every modality live (joint training).
    pub joint: Vec<AngleProbe>,
}

impl AngleComparison {
    pub fn pure_mean(&self) -> Option<f64> {
        summarize_angles(&self.pure).0
    }

    pub fn mixed_mean(&self) -> Option<f64> {
        summarize_angles(&self.mixed).0
    }

    pub fn joint_mean(&self) -> Option<f64> {
        summarize_angles(&self.joint).0
    }
}

/// Gradient-direction probes for one modality's encoder at one model state,
/// `num_batches` per population. Every probe uses the model's training
/// objective as the actual loss. Mixed batches with no sample retaining
/// `modality` give that encoder no gradient and are recorded as undefined.
pub fn compare_batch_angles(
    model: &MultimodalModel,
    train: &MultimodalDataset,
    partition: &Partition,
    modality: Modality,
    num_batches: usize,
    batch_size: usize,
    seed: u64,
) -> Result<AngleComparison> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let masked = apply_masks(train, partition)?;
    let unmasked = MaskedView::unmasked(train);
    let subset = &partition.subsets[modality.index()];
    let all: Vec<usize> = (0..train.len()).collect();
    let weights = model.loss_weights();

    let draw = |pool: &[usize], view: &MaskedView, rng: &mut ChaCha8Rng| -> Result<Vec<AngleProbe>> {
        let mut out = Vec::with_capacity(num_batches);
        if pool.is_empty() {
            return Ok(out);
        }
        for _ in 0..num_batches {
            let ids: Vec<usize> = pool.choose_multiple(rng, batch_size.min(pool.len())).copied().collect();
            let batch = view.batch(&ids)?;
            out.push(gradient_angle(model, &batch, modality, &weights)?);
        }
        Ok(out)
    };
    let pure = draw(subset, &masked, &mut rng)?;
    let mixed = draw(&all, &masked, &mut rng)?;
    let joint = draw(&all, &unmasked, &mut rng)?;
    Ok(AngleComparison { modality, pure, mixed, joint })
}

/// Softmax probability of the true class for every modality of a view.
pub fn true_class_scores(model: &MultimodalModel, s: &SampleView, uni_mode: UniMode, zeros: &[Vec<f64>; 2]) -> Result<[f64; 2]> {
    Ok([model.unimodal_probs(s, Modality::Audio, uni_mode, zeros)?[s.y], model.unimodal_probs(s, Modality::Video, uni_mode, zeros)?[s.y]])
}

/// Multimodal class distribution for a view.
pub fn fused_probs(model: &MultimodalModel, s: &SampleView) -> Result<Vec<f64>> {
    Ok(softmax(&model.fused_logits(s)?))
}
