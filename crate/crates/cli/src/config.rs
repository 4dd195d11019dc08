//! Flat JSON experiment configs.
//!
//! Every key is optional except `total_epochs` and `warmup_epochs`; the rest
//! fall back to the library defaults. Keys are checked one at a time so a bad
//! value is reported against its own name.

use std::fs;
use std::path::{Path, PathBuf};

use remix_core::{OrderPolicy, SynthSpec, TrainConfig, UniMode, Variant};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

pub const DEFAULT_OUT: &str = "runs";
pub const OUT_ENV: &str = "REMIX_OUT";
pub const DEFAULT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

const REQUIRED: [&str; 2] = ["total_epochs", "warmup_epochs"];

const TRAIN_KEYS: [&str; 22] = [
    "total_epochs",
    "warmup_epochs",
    "batch_size",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "hidden_dim",
    "feature_dim",
    "encoder_bias",
    "mask_level",
    "head_weights",
    "fusion",
    "uni_mode",
    "order_policy",
    "variant",
    "eval_cadence",
    "decouple_every",
    "freeze_heads_after_warmup",
    "angle_probes",
    "checkpoint_every",
    "seed",
];

const SYNTH_KEYS: [&str; 10] = [
    "num_classes",
    "samples_per_class",
    "dim_a",
    "dim_v",
    "strength_a",
    "strength_v",
    "noise_sigma",
    "hard_fraction_a",
    "hard_fraction_v",
    "attenuation_factor",
];

const EXPERIMENT_KEYS: [&str; 5] = ["out", "seeds", "suite", "train_frac", "val_frac"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    #[default]
    Single,
    Ablation,
    FusionSweep,
}

/// Everything one invocation needs. `synth.seed` and `train.seed` are
/// placeholders; each run takes both from its entry in `seeds`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub synth: SynthSpec,
    pub train: TrainConfig,
    pub train_frac: f64,
    pub val_frac: f64,
    pub out: PathBuf,
    pub seeds: Vec<u64>,
    pub suite: SuiteKind,
}

/// Command-line values that win over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    /// `--out`, or the `REMIX_OUT` environment variable.
    pub out: Option<PathBuf>,
    pub variant: Option<String>,
    pub order_policy: Option<String>,
    pub uni_mode: Option<String>,
}

fn bad(field: &str, reason: impl Into<String>) -> CliError {
    CliError::Config { field: field.to_string(), reason: reason.into() }
}

fn take<T: DeserializeOwned>(map: &mut Map<String, Value>, key: &str) -> Result<Option<T>, CliError> {
    match map.remove(key) {
        None => Ok(None),
        Some(v) => serde_json::from_value(v).map(Some).map_err(|e| bad(key, e.to_string())),
    }
}

fn set<T: DeserializeOwned>(map: &mut Map<String, Value>, key: &str, slot: &mut T) -> Result<(), CliError> {
    if let Some(v) = take(map, key)? {
        *slot = v;
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self, CliError> {
        let value: Value = serde_json::from_str(text).map_err(|e| bad("<config>", format!("not valid JSON: {e}")))?;
        let Value::Object(mut map) = value else {
            return Err(bad("<config>", "top level must be a JSON object"));
        };
        let known = TRAIN_KEYS.iter().chain(&SYNTH_KEYS).chain(&EXPERIMENT_KEYS);
        let mut unknown: Vec<&String> = map.keys().filter(|k| !known.clone().any(|n| n == k)).collect();
        unknown.sort();
        if let Some(k) = unknown.first() {
            return Err(bad(k, "unknown field"));
        }
        for key in REQUIRED {
            if !map.contains_key(key) {
                return Err(bad(key, "required field is missing"));
            }
        }

        let mut t = TrainConfig::default();
        set(&mut map, "total_epochs", &mut t.total_epochs)?;
        set(&mut map, "warmup_epochs", &mut t.warmup_epochs)?;
        set(&mut map, "batch_size", &mut t.batch_size)?;
        set(&mut map, "lr", &mut t.adam.lr)?;
        set(&mut map, "beta1", &mut t.adam.beta1)?;
        set(&mut map, "beta2", &mut t.adam.beta2)?;
        set(&mut map, "eps", &mut t.adam.eps)?;
        set(&mut map, "hidden_dim", &mut t.hidden_dim)?;
        set(&mut map, "feature_dim", &mut t.feature_dim)?;
        set(&mut map, "encoder_bias", &mut t.encoder_bias)?;
        set(&mut map, "mask_level", &mut t.mask_level)?;
        set(&mut map, "head_weights", &mut t.head_weights)?;
        set(&mut map, "fusion", &mut t.fusion)?;
        set(&mut map, "uni_mode", &mut t.uni_mode)?;
        set(&mut map, "order_policy", &mut t.order_policy)?;
        set(&mut map, "variant", &mut t.variant)?;
        set(&mut map, "eval_cadence", &mut t.eval_cadence)?;
        set(&mut map, "decouple_every", &mut t.decouple_every)?;
        set(&mut map, "freeze_heads_after_warmup", &mut t.freeze_heads_after_warmup)?;
        set(&mut map, "angle_probes", &mut t.angle_probes)?;
        set(&mut map, "checkpoint_every", &mut t.checkpoint_every)?;

        let mut s = SynthSpec::default();
        set(&mut map, "num_classes", &mut s.num_classes)?;
        set(&mut map, "samples_per_class", &mut s.samples_per_class)?;
        set(&mut map, "dim_a", &mut s.dim_a)?;
        set(&mut map, "dim_v", &mut s.dim_v)?;
        set(&mut map, "strength_a", &mut s.strength_a)?;
        set(&mut map, "strength_v", &mut s.strength_v)?;
        set(&mut map, "noise_sigma", &mut s.noise_sigma)?;
        set(&mut map, "hard_fraction_a", &mut s.hard_fraction_a)?;
        set(&mut map, "hard_fraction_v", &mut s.hard_fraction_v)?;
        set(&mut map, "attenuation_factor", &mut s.attenuation_factor)?;

        // `seed` is shorthand for a one-element `seeds`.
        let seed: Option<u64> = take(&mut map, "seed")?;
        let seeds: Option<Vec<u64>> = take(&mut map, "seeds")?;
        if seed.is_some() && seeds.is_some() {
            return Err(bad("seed", "give either `seed` or `seeds`, not both"));
        }
        let cfg = ExperimentConfig {
            synth: s,
            train: t,
            train_frac: take(&mut map, "train_frac")?.unwrap_or(0.8),
            val_frac: take(&mut map, "val_frac")?.unwrap_or(0.1),
            out: take(&mut map, "out")?.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            seeds: seeds.or(seed.map(|s| vec![s])).unwrap_or_else(|| DEFAULT_SEEDS.to_vec()),
            suite: take(&mut map, "suite")?.unwrap_or_default(),
        };
        debug_assert!(map.is_empty());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| bad("<config>", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    /// Applies command-line overrides, then re-validates.
    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(seed) = o.seed {
            self.seeds = vec![seed];
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(v) = &o.variant {
            self.train.variant = v.parse::<Variant>().map_err(|e| bad("variant", e.to_string()))?;
        }
        if let Some(p) = &o.order_policy {
            self.train.order_policy = p.parse::<OrderPolicy>().map_err(|e| bad("order_policy", e.to_string()))?;
        }
        if let Some(u) = &o.uni_mode {
            self.train.uni_mode = u.parse::<UniMode>().map_err(|e| bad("uni_mode", e.to_string()))?;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(bad("seeds", "must not be empty"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(bad("seeds", "must not repeat a seed"));
        }
        if !(self.train_frac > 0.0 && self.train_frac < 1.0) {
            return Err(bad("train_frac", "must lie in (0, 1)"));
        }
        if !(self.val_frac > 0.0 && self.val_frac < 1.0) {
            return Err(bad("val_frac", "must lie in (0, 1)"));
        }
        if self.train_frac + self.val_frac >= 1.0 {
            return Err(bad("val_frac", "train_frac + val_frac must be < 1 so the test split is non-empty"));
        }
        self.synth.validate().map_err(CliError::from)?;
        self.train.validate().map_err(CliError::from)?;
        Ok(())
    }

    /// Creates the output root and checks that it accepts files.
    pub fn ensure_out_writable(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out).map_err(|e| bad("out", format!("cannot create {}: {e}", self.out.display())))?;
        let probe = self.out.join(".write_probe");
        fs::write(&probe, b"").and_then(|_| fs::remove_file(&probe)).map_err(|e| bad("out", format!("{} is not writable: {e}", self.out.display())))
    }

    /// The data spec and training config of one run.
    pub fn for_run(&self, seed: u64) -> (SynthSpec, TrainConfig) {
        let synth = SynthSpec { seed, ..self.synth.clone() };
        let train = TrainConfig { seed, ..self.train.clone() };
        (synth, train)
    }
}
