use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{check_schema_version, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::model::MultimodalModel;
use crate::nn::{AdamState, Parameters};

/// Position of the training RNG: its seed plus the word offset into the
/// ChaCha stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngCursor {
    pub seed: u64,
    /// `u128` word position, stored as a decimal string.
    pub word_pos: String,
}

impl RngCursor {
    pub fn capture(seed: u64, rng: &ChaCha8Rng) -> Self {
        RngCursor { seed, word_pos: rng.get_word_pos().to_string() }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let pos: u128 = self.word_pos.parse().map_err(|_| Error::validation("rng.word_pos", format!("not an integer: {}", self.word_pos)))?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: String,
    pub epoch: usize,
    pub model: MultimodalModel,
    pub adam: AdamState,
    pub rng: RngCursor,
}

impl Checkpoint {
    pub fn new(epoch: usize, model: MultimodalModel, adam: AdamState, rng: RngCursor) -> Self {
        Checkpoint { schema_version: SCHEMA_VERSION.to_string(), epoch, model, adam, rng }
    }

    pub fn validate(&self) -> Result<()> {
        check_schema_version(&self.schema_version)?;
        self.model.validate()?;
        let n = self.model.num_params();
        if self.adam.m.len() != n || self.adam.v.len() != n {
            return Err(Error::Dimension { context: "checkpoint adam moments", expected: n, actual: self.adam.m.len() });
        }
        if !self.model.all_finite() {
            return Err(Error::validation("model", "non-finite parameter"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Checkpoint = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        c.validate()?;
        Ok(c)
    }
}
