#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use remix_core::model::{LossWeights, MaskLevel};
use remix_core::nn::Dense;
use remix_core::*;

/// One sample as plain owned data, independent of the crate's view types.
#[derive(Clone, Debug)]
pub struct RawSample {
    pub x: [Vec<f64>; 2],
    pub y: usize,
    pub masked: [bool; 2],
}

impl RawSample {
    pub fn view<'a>(&'a self, id: usize, zeros: &'a [Vec<f64>; 2]) -> SampleView<'a> {
        let input = |k: usize| if self.masked[k] { zeros[k].as_slice() } else { self.x[k].as_slice() };
        SampleView { id, y: self.y, inputs: [input(0), input(1)], masked: self.masked }
    }
}

fn dense(d: &Dense, x: &[f64]) -> Vec<f64> {
    (0..d.out_dim)
        .map(|o| {
            let mut acc = d.b.as_ref().map_or(0.0, |b| b[o]);
            for i in 0..d.in_dim {
                acc += d.w[o * d.in_dim + i] * x[i];
            }
            acc
        })
        .collect()
}

fn mlp(layers: &[Dense], x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for (i, l) in layers.iter().enumerate() {
        h = dense(l, &h);
        if i + 1 < layers.len() {
            for v in &mut h {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }
    h
}

/// `-log softmax(logits)[y]` by direct exponentiation after a max shift.
pub fn ce(logits: &[f64], y: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
    -(logits[y] - m - z.ln())
}

/// Fused logits recomputed from raw parameters.
pub fn oracle_fused(model: &MultimodalModel, s: &RawSample) -> Vec<f64> {
    let z = oracle_features(model, s);
    match model.fusion {
        FusionKind::Concat => {
            let cat: Vec<f64> = z[0].iter().chain(&z[1]).copied().collect();
            dense(model.fusion_head.as_ref().unwrap(), &cat)
        }
        FusionKind::Sum => {
            let sum: Vec<f64> = z[0].iter().zip(&z[1]).map(|(a, b)| a + b).collect();
            dense(model.fusion_head.as_ref().unwrap(), &sum)
        }
        FusionKind::Decision => {
            let a = dense(&model.heads[0], &z[0]);
            let v = dense(&model.heads[1], &z[1]);
            a.iter().zip(&v).map(|(a, v)| 0.5 * a + 0.5 * v).collect()
        }
    }
}

pub fn oracle_features(model: &MultimodalModel, s: &RawSample) -> [Vec<f64>; 2] {
    std::array::from_fn(|k| {
        let enc = &model.encoders[k];
        if s.masked[k] && model.mask_level == MaskLevel::Feature {
            vec![0.0; enc.layers.last().unwrap().out_dim]
        } else if s.masked[k] {
            mlp(&enc.layers, &vec![0.0; s.x[k].len()])
        } else {
            mlp(&enc.layers, &s.x[k])
        }
    })
}

/// Mean objective: fused CE plus weighted CE of every live modality's head.
pub fn oracle_loss(model: &MultimodalModel, batch: &[RawSample], w: &LossWeights) -> f64 {
    let mut total = 0.0;
    for s in batch {
        let z = oracle_features(model, s);
        total += w.fused * ce(&oracle_fused(model, s), s.y);
        for k in 0..2 {
            if !s.masked[k] {
                total += w.heads[k] * ce(&dense(&model.heads[k], &z[k]), s.y);
            }
        }
    }
    total / batch.len() as f64
}

/// Central differences of `oracle_loss` over every parameter.
pub fn fd_gradient(model: &MultimodalModel, batch: &[RawSample], w: &LossWeights, h: f64) -> Vec<f64> {
    let base = model.flatten();
    let mut probe = model.clone();
    (0..base.len())
        .map(|i| {
            let mut p = base.clone();
            p[i] = base[i] + h;
            probe.load_flat(&p).unwrap();
            let up = oracle_loss(&probe, batch, w);
            p[i] = base[i] - h;
            probe.load_flat(&p).unwrap();
            let down = oracle_loss(&probe, batch, w);
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a| + |b|, 1e-7)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-7)
}

pub fn random_model(rng: &mut ChaCha8Rng, fusion: FusionKind, bias: BiasMode, mask_level: MaskLevel) -> MultimodalModel {
    let dims = [rng.random_range(2..7), rng.random_range(2..7)];
    let classes = rng.random_range(2..5);
    let cfg = ModelConfig {
        hidden_dim: rng.random_range(3..8),
        feature_dim: rng.random_range(2..6),
        fusion,
        encoder_bias: bias,
        mask_level,
        head_weights: [rng.random_range(0.0..1.5), rng.random_range(0.0..1.5)],
        ..ModelConfig::new(dims, classes)
    };
    let mut model = MultimodalModel::new(&cfg, rng).unwrap();
    // Non-zero biases so they are exercised by the check, and so a masked
    // (all-zero) input does not sit exactly on the ReLU kink.
    let encoder_layers = model.encoders.iter_mut().flat_map(|e| e.layers.iter_mut());
    for d in encoder_layers.chain(model.heads.iter_mut()).chain(model.fusion_head.iter_mut()) {
        if let Some(b) = d.b.as_mut() {
            b.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
        }
    }
    model
}

pub fn random_batch(rng: &mut ChaCha8Rng, model: &MultimodalModel, n: usize, allow_masks: bool) -> Vec<RawSample> {
    let dims = [model.encoders[0].in_dim(), model.encoders[1].in_dim()];
    (0..n)
        .map(|_| {
            let masked = if allow_masks {
                match rng.random_range(0..3) {
                    0 => [true, false],
                    1 => [false, true],
                    _ => [false, false],
                }
            } else {
                [false, false]
            };
            RawSample {
                x: std::array::from_fn(|k| (0..dims[k]).map(|_| rng.random_range(-2.0..2.0)).collect()),
                y: rng.random_range(0..model.num_classes),
                masked,
            }
        })
        .collect()
}

pub fn zeros_for(model: &MultimodalModel) -> [Vec<f64>; 2] {
    std::array::from_fn(|k| vec![0.0; model.encoders[k].in_dim()])
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Default spec re-seeded, split 80/10/10 with the same seed.
pub fn default_splits(seed: u64) -> Splits {
    let spec = SynthSpec { seed, ..SynthSpec::default() };
    split_dataset(&generate_dataset(&spec).unwrap(), 0.8, 0.1, seed).unwrap()
}
