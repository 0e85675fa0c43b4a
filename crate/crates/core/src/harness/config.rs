//! Experiment configuration file (TOML).
//!
//! ```toml
//! corpus = "corpus.txt"
//! sentences = 200
//! seed = 7
//! output_dir = "out"
//! constellation = "16qam"
//! bits_per_token = 16
//! snr_grid = [2, 4, 6, 8, 10]
//! beam_grid = [1, 15]
//!
//! [vocab]
//! target_size = 4096        # or: path = "corpus.vocab.json"
//!
//! [prior]
//! kind = "ngram"            # uniform | ngram | bridge
//! order = 3                 # or: path = "corpus.ngram"
//! context_len = 16
//!
//! [channel]
//! kind = "awgn"             # awgn | rayleigh
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::corpus::{DEFAULT_MAX_CHARS, DEFAULT_MIN_CHARS};
use crate::channel::ChannelKind;
use crate::error::{Error, Result};
use crate::modem::{symbols_per_token, Modulation};
use crate::prior::{PriorKind, DEFAULT_DISCOUNT};

/// How received symbols are turned back into text.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Receiver {
    /// Beam search with the configured prior.
    #[default]
    Map,
    /// Per-token minimum distance over vocabulary codewords.
    HardToken,
    /// UTF-8 bytes with per-symbol hard decisions; no tokenizer.
    Utf8Hard,
}

impl Receiver {
    pub fn as_str(self) -> &'static str {
        match self {
            Receiver::Map => "map",
            Receiver::HardToken => "hard-token",
            Receiver::Utf8Hard => "utf8-hard",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default = "default_vocab_size")]
    pub target_size: usize,
}

fn default_vocab_size() -> usize {
    4096
}

impl Default for VocabSource {
    fn default() -> Self {
        Self { path: None, target_size: default_vocab_size() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSettings {
    pub kind: PriorKind,
    /// Trained model file; when absent an n-gram model is trained on the
    /// corpus lines not used for testing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default = "default_discount")]
    pub discount: f64,
    #[serde(default = "default_context_len")]
    pub context_len: usize,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// Cap on training lines; all remaining lines when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_sentences: Option<usize>,
    /// Bridge address; falls back to the environment variable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

fn default_order() -> usize {
    3
}
fn default_discount() -> f64 {
    DEFAULT_DISCOUNT
}
fn default_context_len() -> usize {
    64
}
fn default_temperature() -> f64 {
    1.0
}

impl Default for PriorSettings {
    fn default() -> Self {
        Self {
            kind: PriorKind::Ngram,
            path: None,
            order: default_order(),
            discount: default_discount(),
            context_len: default_context_len(),
            temperature: default_temperature(),
            train_sentences: None,
            endpoint: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSettings {
    pub kind: ChannelKind,
    /// Symbols per fading coefficient; one token's symbols when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_fading_len: Option<usize>,
    #[serde(default)]
    pub noiseless: bool,
    #[serde(default)]
    pub unit_gain: bool,
}

impl Default for ChannelSettings {
    fn default() -> Self {
        Self { kind: ChannelKind::Awgn, block_fading_len: None, noiseless: false, unit_gain: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub corpus: PathBuf,
    #[serde(default = "default_min_chars")]
    pub min_chars: usize,
    #[serde(default = "default_max_chars")]
    pub max_chars: usize,
    pub sentences: usize,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub receiver: Receiver,
    pub constellation: Modulation,
    pub bits_per_token: u32,
    pub snr_grid: Vec<f64>,
    pub beam_grid: Vec<usize>,
    #[serde(default)]
    pub vocab: VocabSource,
    #[serde(default)]
    pub prior: PriorSettings,
    #[serde(default)]
    pub channel: ChannelSettings,
    /// Also score sentence similarity through the bridge.
    #[serde(default)]
    pub similarity: bool,
}

fn default_min_chars() -> usize {
    DEFAULT_MIN_CHARS
}
fn default_max_chars() -> usize {
    DEFAULT_MAX_CHARS
}
fn default_workers() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&fs::read_to_string(path)?)?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus);
        fix(&mut self.output_dir);
        if let Some(p) = self.vocab.path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.prior.path.as_mut() {
            fix(p);
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_grid.is_empty() || self.beam_grid.is_empty() {
            return Err(Error::Config("SNR and beam grids must be non-empty".into()));
        }
        if let Some(snr) = self.snr_grid.iter().find(|s| !s.is_finite()) {
            return Err(Error::Config(format!("non-finite SNR {snr}")));
        }
        if self.beam_grid.contains(&0) {
            return Err(Error::Config("beam widths must be at least 1".into()));
        }
        if self.sentences == 0 {
            return Err(Error::Config("at least one sentence is required".into()));
        }
        if self.min_chars > self.max_chars {
            return Err(Error::Config("min_chars exceeds max_chars".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.channel.block_fading_len == Some(0) {
            return Err(Error::Config("block_fading_len must be at least 1".into()));
        }
        if self.receiver != Receiver::Utf8Hard {
            symbols_per_token(self.bits_per_token, self.constellation)?;
        }
        if self.prior.kind == PriorKind::Bridge && self.vocab.path.is_none() {
            return Err(Error::Config(
                "a bridge prior needs vocab.path naming the bridge model's exported vocabulary".into(),
            ));
        }
        if !self.prior.temperature.is_finite() || self.prior.temperature <= 0.0 {
            return Err(Error::Config("temperature must be positive".into()));
        }
        Ok(())
    }
}

/// Command-line overrides applied on top of a config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub snr_grid: Option<Vec<f64>>,
    pub beam_grid: Option<Vec<usize>>,
    pub prior: Option<PriorKind>,
    pub constellation: Option<Modulation>,
    pub channel: Option<ChannelKind>,
    pub sentences: Option<usize>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(self, cfg: &mut ExperimentConfig) {
        if let Some(v) = self.snr_grid {
            cfg.snr_grid = v;
        }
        if let Some(v) = self.beam_grid {
            cfg.beam_grid = v;
        }
        if let Some(v) = self.prior {
            cfg.prior.kind = v;
        }
        if let Some(v) = self.constellation {
            cfg.constellation = v;
            if !cfg.bits_per_token.is_multiple_of(v.bits_per_symbol()) {
                // Keep the admitted pairings: 15 bits on 8-QAM, 16 bits on 16-QAM / QPSK.
                cfg.bits_per_token = if v == Modulation::Qam8 { 15 } else { 16 };
            }
        }
        if let Some(v) = self.channel {
            cfg.channel.kind = v;
        }
        if let Some(v) = self.sentences {
            cfg.sentences = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.output_dir {
            cfg.output_dir = v;
        }
    }
}
