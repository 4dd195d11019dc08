//! Two-branch multimodal classifier: one MLP encoder per modality, a fusion
//! stage producing the multimodal logits, and a linear head per modality for
//! unimodal predictions.
//!
//! The training objective on a batch `B` is
//!
//! ```text
//! L = w_fused * CE(fused) + sum_k w_k * (1/|B|) * sum_{i live in k} CE(head_k(z_i^k))
//! ```
//!
//! where a modality is *live* for a sample when its input is not masked.

use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Modality, MultimodalSample, NUM_MODALITIES};
use crate::error::{Error, Result};
use crate::nn::{cross_entropy_from_logits, softmax, BiasMode, Dense, Mlp, MlpCache, Parameters};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionKind {
    #[default]
    Concat,
    Sum,
    Decision,
}

impl FusionKind {
    pub const ALL: [FusionKind; 3] = [FusionKind::Concat, FusionKind::Sum, FusionKind::Decision];

    pub fn key(self) -> &'static str {
        match self {
            FusionKind::Concat => "concat",
            FusionKind::Sum => "sum",
            FusionKind::Decision => "decision",
        }
    }
}

impl FromStr for FusionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(FusionKind::Concat),
            "sum" => Ok(FusionKind::Sum),
            "decision" => Ok(FusionKind::Decision),
            other => Err(Error::validation("fusion", format!("unknown fusion `{other}` (concat | sum | decision)"))),
        }
    }
}

impl std::fmt::Display for FusionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.key())
    }
}

/// How a unimodal prediction is obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniMode {
    /// `softmax(head_k(z^k))`.
    #[default]
    Head,
    /// Fused logits with every other modality's input zeroed.
    ZeroMask,
}

impl FromStr for UniMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "head" => Ok(UniMode::Head),
            "zero_mask" | "zeromask" | "dropout" => Ok(UniMode::ZeroMask),
            other => Err(Error::validation("uni_mode", format!("unknown mode `{other}` (head | zero_mask)"))),
        }
    }
}

impl UniMode {
    pub fn key(self) -> &'static str {
        match self {
            UniMode::Head => "head",
            UniMode::ZeroMask => "zero_mask",
        }
    }
}

/// Where masking takes effect. `Input` zeroes the raw input; `Feature`
/// zeroes the encoder output, which matters only for encoders with biases.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskLevel {
    #[default]
    Input,
    Feature,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dims: [usize; NUM_MODALITIES],
    pub num_classes: usize,
    pub hidden_dim: usize,
    pub feature_dim: usize,
    pub fusion: FusionKind,
    pub encoder_bias: BiasMode,
    pub mask_level: MaskLevel,
    pub head_weights: [f64; NUM_MODALITIES],
}

impl ModelConfig {
    pub fn new(input_dims: [usize; NUM_MODALITIES], num_classes: usize) -> Self {
        ModelConfig {
            input_dims,
            num_classes,
            hidden_dim: 64,
            feature_dim: 32,
            fusion: FusionKind::Concat,
            encoder_bias: BiasMode::BiasFree,
            mask_level: MaskLevel::Input,
            head_weights: [1.0; NUM_MODALITIES],
        }
    }
}

/// A sample as presented to the model: masked inputs are already zero.
#[derive(Clone, Copy, Debug)]
pub struct SampleView<'a> {
    pub id: usize,
    pub y: usize,
    pub inputs: [&'a [f64]; NUM_MODALITIES],
    pub masked: [bool; NUM_MODALITIES],
}

impl<'a> SampleView<'a> {
    /// View honouring the sample's own mask flags; `zeros` supplies the
    /// zero input for each modality.
    pub fn of(sample: &'a MultimodalSample, zeros: &'a [Vec<f64>; NUM_MODALITIES]) -> Self {
        Self::with_masks(sample, sample.masks(), zeros)
    }

    pub fn with_masks(sample: &'a MultimodalSample, masked: [bool; NUM_MODALITIES], zeros: &'a [Vec<f64>; NUM_MODALITIES]) -> Self {
        let pick = |m: Modality| {
            if masked[m.index()] {
                zeros[m.index()].as_slice()
            } else {
                sample.raw(m)
            }
        };
        SampleView { id: sample.id, y: sample.y, inputs: [pick(Modality::Audio), pick(Modality::Video)], masked }
    }

    /// Unmasked view straight from stored data.
    pub fn full(sample: &'a MultimodalSample) -> Self {
        SampleView { id: sample.id, y: sample.y, inputs: [&sample.x_a, &sample.x_v], masked: [false; NUM_MODALITIES] }
    }

    pub fn live(&self, m: Modality) -> bool {
        !self.masked[m.index()]
    }

    /// The same sample with `m` masked in addition to existing masks.
    pub fn masking(mut self, m: Modality, zeros: &'a [Vec<f64>; NUM_MODALITIES]) -> Self {
        self.masked[m.index()] = true;
        self.inputs[m.index()] = &zeros[m.index()];
        self
    }
}

/// Per-term weights of the batch objective.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub fused: f64,
    pub heads: [f64; NUM_MODALITIES],
}

impl LossWeights {
    /// Only the unimodal CE of `m` with unit weight.
    pub fn unimodal(m: Modality) -> Self {
        let mut heads = [0.0; NUM_MODALITIES];
        heads[m.index()] = 1.0;
        LossWeights { fused: 0.0, heads }
    }
}

/// Mean batch loss split by term. `heads[k]` already includes the `1/|B|`
/// normalisation but not the weight `w_k`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub fused: f64,
    pub heads: [f64; NUM_MODALITIES],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultimodalModel {
    pub num_classes: usize,
    pub fusion: FusionKind,
    pub mask_level: MaskLevel,
    pub encoders: [Mlp; NUM_MODALITIES],
    /// Present for `Concat` and `Sum`.
    pub fusion_head: Option<Dense>,
    pub heads: [Dense; NUM_MODALITIES],
    pub head_weights: [f64; NUM_MODALITIES],
}

struct Forward {
    enc: [Option<MlpCache>; NUM_MODALITIES],
    z: [Vec<f64>; NUM_MODALITIES],
    fusion_input: Vec<f64>,
    fused: Vec<f64>,
    head_logits: [Vec<f64>; NUM_MODALITIES],
}

impl MultimodalModel {
    pub fn new<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        let enc = |dim: usize, rng: &mut R| Mlp::new(&[dim, cfg.hidden_dim, cfg.feature_dim], cfg.encoder_bias, rng);
        let encoder_a = enc(cfg.input_dims[0], rng)?;
        let encoder_v = enc(cfg.input_dims[1], rng)?;
        let fusion_head = match cfg.fusion {
            FusionKind::Concat => Some(Dense::glorot(2 * cfg.feature_dim, cfg.num_classes, true, rng)),
            FusionKind::Sum => Some(Dense::glorot(cfg.feature_dim, cfg.num_classes, true, rng)),
            FusionKind::Decision => None,
        };
        let head_a = Dense::glorot(cfg.feature_dim, cfg.num_classes, true, rng);
        let head_v = Dense::glorot(cfg.feature_dim, cfg.num_classes, true, rng);
        let model = MultimodalModel {
            num_classes: cfg.num_classes,
            fusion: cfg.fusion,
            mask_level: cfg.mask_level,
            encoders: [encoder_a, encoder_v],
            fusion_head,
            heads: [head_a, head_v],
            head_weights: cfg.head_weights,
        };
        model.validate()?;
        Ok(model)
    }

    /// Checks the wiring invariants between encoders, fusion stage and heads.
    pub fn validate(&self) -> Result<()> {
        let zd = [self.encoders[0].out_dim(), self.encoders[1].out_dim()];
        for m in Modality::ALL {
            let k = m.index();
            if self.heads[k].in_dim != zd[k] {
                return Err(Error::Wiring(format!("head_{m} takes {} inputs, encoder emits {}", self.heads[k].in_dim, zd[k])));
            }
            if self.heads[k].out_dim != self.num_classes {
                return Err(Error::Wiring(format!("head_{m} emits {} logits, expected {}", self.heads[k].out_dim, self.num_classes)));
            }
            if self.head_weights[k] < 0.0 || !self.head_weights[k].is_finite() {
                return Err(Error::validation("head_weights", "must be finite and non-negative"));
            }
        }
        match (self.fusion, &self.fusion_head) {
            (FusionKind::Concat, Some(h)) if h.in_dim == zd[0] + zd[1] && h.out_dim == self.num_classes => Ok(()),
            (FusionKind::Sum, Some(h)) if zd[0] == zd[1] && h.in_dim == zd[0] && h.out_dim == self.num_classes => Ok(()),
            (FusionKind::Decision, None) => Ok(()),
            (kind, head) => Err(Error::Wiring(format!(
                "{kind} fusion incompatible with fusion head {:?} and feature dims {zd:?}",
                head.as_ref().map(|h| (h.in_dim, h.out_dim))
            ))),
        }
    }

    pub fn encoder(&self, m: Modality) -> &Mlp {
        &self.encoders[m.index()]
    }

    pub fn head(&self, m: Modality) -> &Dense {
        &self.heads[m.index()]
    }

    pub fn zeros_like(&self) -> Self {
        MultimodalModel {
            num_classes: self.num_classes,
            fusion: self.fusion,
            mask_level: self.mask_level,
            encoders: [self.encoders[0].zeros_like(), self.encoders[1].zeros_like()],
            fusion_head: self.fusion_head.as_ref().map(Dense::zeros_like),
            heads: [self.heads[0].zeros_like(), self.heads[1].zeros_like()],
            head_weights: self.head_weights,
        }
    }

    /// Same network with the two modality branches exchanged. Requires equal
    /// input and feature dimensions for the result to accept swapped samples.
    pub fn swap_modalities(&self) -> Self {
        let mut out = self.clone();
        out.encoders.swap(0, 1);
        out.heads.swap(0, 1);
        out.head_weights.swap(0, 1);
        if let (FusionKind::Concat, Some(h)) = (self.fusion, out.fusion_head.as_mut()) {
            let za = self.encoders[0].out_dim();
            let zv = self.encoders[1].out_dim();
            for row in h.w.chunks_mut(za + zv) {
                row.rotate_left(za);
            }
        }
        out
    }

    /// Encoder features for one modality of a view.
    pub fn features(&self, s: &SampleView, m: Modality) -> Result<Vec<f64>> {
        let k = m.index();
        if s.masked[k] && self.mask_level == MaskLevel::Feature {
            return Ok(vec![0.0; self.encoders[k].out_dim()]);
        }
        self.encoders[k].forward(s.inputs[k])
    }

    /// Multimodal logits computed as one matrix product over the fusion input
    /// (`W [z^a; z^v] + b` for concatenation).
    pub fn fused_from_features(&self, z: &[Vec<f64>; NUM_MODALITIES]) -> Result<Vec<f64>> {
        match self.fusion {
            FusionKind::Concat => self.fusion_head_ref()?.forward(&z.concat()),
            FusionKind::Sum => {
                let s: Vec<f64> = z[0].iter().zip(&z[1]).map(|(a, b)| a + b).collect();
                self.fusion_head_ref()?.forward(&s)
            }
            FusionKind::Decision => {
                let ua = self.heads[0].forward(&z[0])?;
                let uv = self.heads[1].forward(&z[1])?;
                Ok(ua.iter().zip(&uv).map(|(a, b)| (a + b) / 2.0).collect())
            }
        }
    }

    /// Concatenation logits in block form `W^a z^a + W^v z^v + b`, summing the
    /// two column blocks separately.
    pub fn fused_block_form(&self, z: &[Vec<f64>; NUM_MODALITIES]) -> Result<Vec<f64>> {
        if self.fusion != FusionKind::Concat {
            return Err(Error::Wiring("block form is defined for concat fusion only".into()));
        }
        let h = self.fusion_head_ref()?;
        let (da, dv) = (z[0].len(), z[1].len());
        if da + dv != h.in_dim {
            return Err(Error::Dimension { context: "block form", expected: h.in_dim, actual: da + dv });
        }
        Ok((0..h.out_dim)
            .map(|o| {
                let row = &h.w[o * h.in_dim..(o + 1) * h.in_dim];
                let wa: f64 = row[..da].iter().zip(&z[0]).map(|(w, x)| w * x).sum();
                let wv: f64 = row[da..].iter().zip(&z[1]).map(|(w, x)| w * x).sum();
                wa + wv + h.b.as_ref().map_or(0.0, |b| b[o])
            })
            .collect())
    }

    fn fusion_head_ref(&self) -> Result<&Dense> {
        self.fusion_head.as_ref().ok_or_else(|| Error::Wiring(format!("{} fusion requires a fusion head", self.fusion)))
    }

    pub fn fused_logits(&self, s: &SampleView) -> Result<Vec<f64>> {
        let z = [self.features(s, Modality::Audio)?, self.features(s, Modality::Video)?];
        self.fused_from_features(&z)
    }

    pub fn head_logits(&self, s: &SampleView, m: Modality) -> Result<Vec<f64>> {
        self.heads[m.index()].forward(&self.features(s, m)?)
    }

    /// Unimodal class distribution for modality `m`.
    pub fn unimodal_probs(&self, s: &SampleView, m: Modality, mode: UniMode, zeros: &[Vec<f64>; NUM_MODALITIES]) -> Result<Vec<f64>> {
        if s.masked[m.index()] {
            return Err(Error::MaskedModality { sample_id: s.id, modality: m.index() });
        }
        match mode {
            UniMode::Head => Ok(softmax(&self.head_logits(s, m)?)),
            UniMode::ZeroMask => Ok(softmax(&self.fused_logits(&s.masking(m.other(), zeros))?)),
        }
    }

    fn forward(&self, s: &SampleView) -> Result<Forward> {
        let mut enc: [Option<MlpCache>; NUM_MODALITIES] = [None, None];
        let mut z: [Vec<f64>; NUM_MODALITIES] = [Vec::new(), Vec::new()];
        for m in Modality::ALL {
            let k = m.index();
            if s.masked[k] && self.mask_level == MaskLevel::Feature {
                z[k] = vec![0.0; self.encoders[k].out_dim()];
            } else {
                let cache = self.encoders[k].forward_cached(s.inputs[k])?;
                z[k] = cache.output().to_vec();
                enc[k] = Some(cache);
            }
        }
        let head_logits = [self.heads[0].forward(&z[0])?, self.heads[1].forward(&z[1])?];
        let (fusion_input, fused) = match self.fusion {
            FusionKind::Concat => {
                let input = z.concat();
                let out = self.fusion_head_ref()?.forward(&input)?;
                (input, out)
            }
            FusionKind::Sum => {
                let input: Vec<f64> = z[0].iter().zip(&z[1]).map(|(a, b)| a + b).collect();
                let out = self.fusion_head_ref()?.forward(&input)?;
                (input, out)
            }
            FusionKind::Decision => {
                let out = head_logits[0].iter().zip(&head_logits[1]).map(|(a, b)| (a + b) / 2.0).collect();
                (Vec::new(), out)
            }
        };
        Ok(Forward { enc, z, fusion_input, fused, head_logits })
    }

    /// Loss breakdown with the model's own head weights and unit fused weight.
    pub fn total_loss(&self, batch: &[SampleView]) -> Result<LossBreakdown> {
        Ok(self.loss_and_grad(batch, &self.loss_weights(), false)?.0)
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights { fused: 1.0, heads: self.head_weights }
    }

    /// Loss and analytic gradient of the mean batch objective under the
    /// model's default weights.
    pub fn gradients(&self, batch: &[SampleView]) -> Result<(LossBreakdown, MultimodalModel)> {
        self.gradients_weighted(batch, &self.loss_weights())
    }

    pub fn gradients_weighted(&self, batch: &[SampleView], weights: &LossWeights) -> Result<(LossBreakdown, MultimodalModel)> {
        let (loss, grad) = self.loss_and_grad(batch, weights, true)?;
        Ok((loss, grad.expect("gradient requested")))
    }

    fn loss_and_grad(&self, batch: &[SampleView], weights: &LossWeights, want_grad: bool) -> Result<(LossBreakdown, Option<MultimodalModel>)> {
        if batch.is_empty() {
            return Err(Error::validation("batch", "must be non-empty"));
        }
        let scale = 1.0 / batch.len() as f64;
        let mut grad = want_grad.then(|| self.zeros_like());
        let mut loss = LossBreakdown::default();

        for s in batch {
            if s.y >= self.num_classes {
                return Err(Error::validation("y", format!("label {} out of range for sample {}", s.y, s.id)));
            }
            let fw = self.forward(s)?;
            let fused_ce = cross_entropy_from_logits(&fw.fused, s.y);
            if !fused_ce.is_finite() {
                return Err(Error::NonFiniteLoss { sample_id: s.id });
            }
            loss.fused += fused_ce * scale;
            let mut head_ce = [0.0; NUM_MODALITIES];
            for m in Modality::ALL {
                if s.live(m) {
                    let k = m.index();
                    head_ce[k] = cross_entropy_from_logits(&fw.head_logits[k], s.y);
                    if !head_ce[k].is_finite() {
                        return Err(Error::NonFiniteLoss { sample_id: s.id });
                    }
                    loss.heads[k] += head_ce[k] * scale;
                }
            }
            if let Some(g) = grad.as_mut() {
                self.backward_sample(s, &fw, weights, scale, g);
            }
        }
        loss.total = weights.fused * loss.fused + weights.heads.iter().zip(&loss.heads).map(|(w, l)| w * l).sum::<f64>();
        Ok((loss, grad))
    }

    fn backward_sample(&self, s: &SampleView, fw: &Forward, weights: &LossWeights, scale: f64, g: &mut MultimodalModel) {
        let ce_grad = |logits: &[f64], w: f64| -> Vec<f64> {
            let mut d = softmax(logits);
            d[s.y] -= 1.0;
            d.iter_mut().for_each(|v| *v *= w * scale);
            d
        };
        let d_fused = ce_grad(&fw.fused, weights.fused);
        let mut d_head: [Vec<f64>; NUM_MODALITIES] = std::array::from_fn(|k| {
            if s.masked[k] || weights.heads[k] == 0.0 {
                vec![0.0; self.num_classes]
            } else {
                ce_grad(&fw.head_logits[k], weights.heads[k])
            }
        });
        let mut dz: [Vec<f64>; NUM_MODALITIES] = std::array::from_fn(|k| vec![0.0; fw.z[k].len()]);

        match self.fusion {
            FusionKind::Concat => {
                let head = self.fusion_head.as_ref().expect("validated");
                let mut d_in = vec![0.0; head.in_dim];
                head.backward(&fw.fusion_input, &d_fused, g.fusion_head.as_mut().expect("validated"), Some(&mut d_in));
                let da = fw.z[0].len();
                dz[0].copy_from_slice(&d_in[..da]);
                dz[1].copy_from_slice(&d_in[da..]);
            }
            FusionKind::Sum => {
                let head = self.fusion_head.as_ref().expect("validated");
                let mut d_in = vec![0.0; head.in_dim];
                head.backward(&fw.fusion_input, &d_fused, g.fusion_head.as_mut().expect("validated"), Some(&mut d_in));
                dz[0].copy_from_slice(&d_in);
                dz[1].copy_from_slice(&d_in);
            }
            FusionKind::Decision => {
                for d in d_head.iter_mut() {
                    for (dh, df) in d.iter_mut().zip(&d_fused) {
                        *dh += df / 2.0;
                    }
                }
            }
        }

        for k in 0..NUM_MODALITIES {
            let mut dzh = vec![0.0; fw.z[k].len()];
            self.heads[k].backward(&fw.z[k], &d_head[k], &mut g.heads[k], Some(&mut dzh));
            for (a, b) in dz[k].iter_mut().zip(&dzh) {
                *a += b;
            }
            if let Some(cache) = &fw.enc[k] {
                self.encoders[k].backward(cache, &dz[k], &mut g.encoders[k]);
            }
        }
    }
}

impl Parameters for MultimodalModel {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = self.encoders[0].param_slices();
        v.extend(self.encoders[1].param_slices());
        if let Some(h) = &self.fusion_head {
            v.extend(h.param_slices());
        }
        v.extend(self.heads[0].param_slices());
        v.extend(self.heads[1].param_slices());
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let [ea, ev] = &mut self.encoders;
        let mut v = ea.param_slices_mut();
        v.extend(ev.param_slices_mut());
        if let Some(h) = &mut self.fusion_head {
            v.extend(h.param_slices_mut());
        }
        let [ha, hv] = &mut self.heads;
        v.extend(ha.param_slices_mut());
        v.extend(hv.param_slices_mut());
        v
    }
}
