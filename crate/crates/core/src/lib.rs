//! Sample-level modality decoupling and batch-pure reassembly for training
//! two-modality classifiers, with the synthetic data, model, training loop
//! and diagnostics needed to study it.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod record;
pub mod remix;
pub mod train;

pub use checkpoint::{Checkpoint, RngCursor};
pub use data::{generate_dataset, split_dataset, Modality, MultimodalDataset, MultimodalSample, Splits, SynthSpec, NUM_MODALITIES, SCHEMA_VERSION};
pub use error::{Error, Result};
pub use model::{FusionKind, MaskLevel, ModelConfig, MultimodalModel, SampleView, UniMode};
pub use nn::{AdamConfig, AdamState, BiasMode, Parameters};
pub use record::{write_run_dir, EpochRow, RunRecord, RunStatus, RUN_CSV_COLUMNS};
pub use remix::{build_batch_plan, decouple, kl_to_uniform, MaskedView, OrderPolicy, Partition};
pub use train::{run_training, TrainConfig, TrainOutcome, Trainer, Variant};
