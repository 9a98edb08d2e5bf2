//! JSON checkpoints for tokenizers and, optionally, a forecaster trained on top.
//!
//! Floats are written in their shortest round-trip form and parsed exactly, so
//! save → load → save reproduces the same bytes.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::NamedArray;
use crate::tasks::forecast::{Forecaster, ForecasterConfig};
use crate::vqvae::{VqVaeConfig, VqVaeModel};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    /// 32-byte ChaCha key, hex encoded.
    pub seed: String,
    pub stream: u64,
    /// 128-bit word position, as a decimal string.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let bytes = hex::decode(&self.seed).map_err(|e| Error::Checkpoint(format!("rng seed: {e}")))?;
        let seed: [u8; 32] = bytes
            .try_into()
            .map_err(|_| Error::Checkpoint("rng seed must be 32 bytes".into()))?;
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|e| Error::Checkpoint(format!("rng word_pos: {e}")))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecasterSection {
    pub config: ForecasterConfig,
    pub code_dim: usize,
    pub patch_len: usize,
    pub params: BTreeMap<String, NamedArray>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: VqVaeConfig,
    /// Row-major `K × D`.
    pub codebook: Vec<Vec<f64>>,
    pub encoder: BTreeMap<String, NamedArray>,
    pub decoder: BTreeMap<String, NamedArray>,
    pub rng_state: RngState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forecaster: Option<ForecasterSection>,
}

impl Checkpoint {
    pub fn from_model(model: &VqVaeModel) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            config: model.config.clone(),
            codebook: model.codebook().codewords.rows().into_iter().map(|r| r.to_vec()).collect(),
            encoder: model.params.to_named("encoder."),
            decoder: model.params.to_named("decoder."),
            rng_state: RngState::capture(&model.rng),
            forecaster: None,
        }
    }

    pub fn with_forecaster(mut self, fc: &Forecaster) -> Self {
        self.forecaster = Some(ForecasterSection {
            config: fc.config.clone(),
            code_dim: fc.code_dim,
            patch_len: fc.patch_len,
            params: fc.params.to_named(""),
        });
        self
    }

    pub fn tokenizer(&self) -> Result<VqVaeModel> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        let mut model = VqVaeModel::new(self.config.clone())?;
        model.params.load_named("encoder.", &self.encoder)?;
        model.params.load_named("decoder.", &self.decoder)?;
        let (k, d) = (self.config.codebook_size, self.config.code_dim);
        if self.codebook.len() != k || self.codebook.iter().any(|r| r.len() != d) {
            return Err(Error::Checkpoint(format!("codebook is not {k} × {d}")));
        }
        let flat: Vec<f64> = self.codebook.iter().flatten().cloned().collect();
        let cb = Array2::from_shape_vec((k, d), flat).unwrap();
        *model.params.get_mut(model.codebook_id()) = cb.into_dyn();
        model.rng = self.rng_state.restore()?;
        Ok(model)
    }

    pub fn forecaster(&self) -> Result<Option<Forecaster>> {
        let Some(sec) = &self.forecaster else {
            return Ok(None);
        };
        let mut fc = Forecaster::new(sec.config.clone(), sec.code_dim, sec.patch_len)?;
        fc.params.load_named("", &sec.params)?;
        Ok(Some(fc))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
