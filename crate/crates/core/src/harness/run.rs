//! Grid execution: one cell per (SNR, beam width), each cell a pass over the
//! test sentences.
//!
//! Cell results are written to `cells/<hash>.json` under the output
//! directory, where the hash covers the experiment fingerprint (config,
//! corpus and model file contents) and the cell key. A rerun reuses every
//! cell file whose hash matches, so an interrupted sweep resumes where it
//! stopped.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, Receiver};
use super::corpus::{load_corpus, split_corpus};
use super::plot::emit_plot_data;
use crate::baselines::{hard_token_decode, utf8_hard_pipeline};
use crate::bridge::{BridgeClient, DEFAULT_TIMEOUT};
use crate::channel::{transmit, ChannelConfig, ChannelKind};
use crate::decoder::{DecodeConfig, MapDecoder};
use crate::error::{Error, Result};
use crate::metrics::{bit_errors, bleu_all_orders, MetricAccumulator, MetricReport};
use crate::modem::{modulate, symbols_per_token, Constellation, TokenSymbolTable};
use crate::prior::{train_ngram, NGramModel, Prior, PriorKind, TokenPrior};
use crate::tokenizer::{decode, encode, tokens_to_bits, train_vocabulary, TokenSequence, Vocabulary};

pub const RESULTS_FILE: &str = "results.json";
pub const CELLS_CSV: &str = "cells.csv";
const CELLS_DIR: &str = "cells";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub receiver: Receiver,
    pub prior: String,
    pub channel: String,
    pub constellation: String,
    pub bits_per_token: u32,
    pub beam_width: usize,
    pub snr_db: f64,
    /// Symbols sharing one Rayleigh gain; absent on AWGN.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fading_block: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub key: CellKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<MetricReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Token count `t` of every sentence, as conveyed to the receiver.
    pub sentence_tokens: Vec<usize>,
    /// Received ids per sentence (bytes for the UTF-8 receiver).
    pub received: Vec<Vec<u32>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultSet {
    pub fingerprint: String,
    pub cells: Vec<CellResult>,
}

impl ResultSet {
    pub fn load(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(dir.join(RESULTS_FILE))?)?)
    }

    pub fn failed(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }

    pub fn cell(&self, snr_db: f64, beam_width: usize) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.key.snr_db == snr_db && c.key.beam_width == beam_width)
    }
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub results: ResultSet,
    pub computed: usize,
    pub reused: usize,
}

/// Everything the per-sentence pipeline needs, built once per experiment.
pub struct Assets {
    pub vocab: Option<Arc<Vocabulary>>,
    pub prior: Option<Prior>,
    pub test_sentences: Vec<String>,
    pub constellation: Constellation<f64>,
    pub table: Option<Arc<TokenSymbolTable<f64>>>,
    pub bridge: Option<Arc<BridgeClient>>,
    fingerprint: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Channel seed of sentence `index` at `snr_db`. It does not depend on the
/// beam width or prior, so every receiver sees the same noise.
pub fn sentence_seed(seed: u64, index: usize, snr_db: f64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((index as u64).to_le_bytes());
    h.update(snr_db.to_bits().to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

fn bridge_client(cfg: &ExperimentConfig, vocab_size: usize) -> Result<BridgeClient> {
    match &cfg.prior.endpoint {
        Some(addr) => BridgeClient::connect(addr, vocab_size, DEFAULT_TIMEOUT),
        None => BridgeClient::from_env(vocab_size),
    }
}

impl Assets {
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let corpus_bytes = fs::read(&cfg.corpus)?;
        let sentences = load_corpus(&cfg.corpus, cfg.min_chars, cfg.max_chars)?;
        let (test_sentences, mut train) = split_corpus(&sentences, cfg.sentences, cfg.seed);
        if let Some(cap) = cfg.prior.train_sentences {
            train.truncate(cap);
        }

        let mut identity = cfg.clone();
        identity.snr_grid.clear();
        identity.beam_grid.clear();
        identity.output_dir = PathBuf::new();
        identity.workers = 1;
        let mut fingerprint = Sha256::new();
        fingerprint.update(serde_json::to_vec(&identity)?);
        fingerprint.update(Sha256::digest(&corpus_bytes));
        for path in [&cfg.vocab.path, &cfg.prior.path].into_iter().flatten() {
            fingerprint.update(Sha256::digest(fs::read(path)?));
        }
        let fingerprint = sha256_hex(&fingerprint.finalize());

        let constellation = Constellation::new(cfg.constellation);
        if cfg.receiver == Receiver::Utf8Hard {
            return Ok(Self {
                vocab: None,
                prior: None,
                test_sentences,
                constellation,
                table: None,
                bridge: None,
                fingerprint,
            });
        }

        let vocab = match &cfg.vocab.path {
            Some(path) => Vocabulary::load(path)?,
            None => train_vocabulary(&sentences, cfg.vocab.target_size)?,
        };
        if (vocab.len() as u64) > 1u64 << cfg.bits_per_token {
            return Err(Error::Config(format!(
                "{} vocabulary entries do not fit {}-bit tokens",
                vocab.len(),
                cfg.bits_per_token
            )));
        }
        for s in &test_sentences {
            encode(s.as_bytes(), &vocab)?;
        }

        let model: Arc<dyn TokenPrior> = match cfg.prior.kind {
            PriorKind::Uniform => Arc::new(crate::prior::UniformPrior::new(vocab.len())),
            PriorKind::Ngram => match &cfg.prior.path {
                Some(path) => {
                    let model = NGramModel::load(path)?;
                    if model.vocab_size() != vocab.len() {
                        return Err(Error::Config(format!(
                            "n-gram model covers {} tokens, vocabulary has {}",
                            model.vocab_size(),
                            vocab.len()
                        )));
                    }
                    Arc::new(model)
                }
                None => {
                    let encoded = train.iter().filter_map(|s| encode(s.as_bytes(), &vocab).ok()).collect::<Vec<_>>();
                    Arc::new(train_ngram(&encoded, cfg.prior.order, cfg.prior.discount, vocab.len())?)
                }
            },
            PriorKind::Bridge => Arc::new(bridge_client(cfg, vocab.len())?),
        };
        let prior = Prior::new(model, cfg.prior.context_len, cfg.prior.temperature)?;
        let bridge = if cfg.similarity { Some(Arc::new(bridge_client(cfg, vocab.len())?)) } else { None };
        let table = TokenSymbolTable::new(&constellation, cfg.bits_per_token, vocab.len())?;
        Ok(Self {
            vocab: Some(Arc::new(vocab)),
            prior: Some(prior),
            test_sentences,
            constellation,
            table: Some(Arc::new(table)),
            bridge,
            fingerprint,
        })
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }
}

/// Per-sentence outcome before aggregation.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceOutcome {
    pub chars: usize,
    pub sent: Vec<u32>,
    pub received: Vec<u32>,
    pub bits: usize,
    pub bit_errors: usize,
    pub symbols: usize,
    pub text: String,
    pub bleu: [f64; 4],
}

/// Symbols per Rayleigh gain: the configured length, else one token
/// (one byte's worth of symbols for the UTF-8 receiver).
fn fading_block(cfg: &ExperimentConfig) -> usize {
    cfg.channel.block_fading_len.unwrap_or_else(|| match cfg.receiver {
        Receiver::Utf8Hard => (8 / cfg.constellation.bits_per_symbol()).max(1) as usize,
        _ => symbols_per_token(cfg.bits_per_token, cfg.constellation).unwrap_or(1),
    })
}

fn channel_config(cfg: &ExperimentConfig, snr_db: f64, seed: u64) -> ChannelConfig {
    ChannelConfig {
        kind: cfg.channel.kind,
        snr_db,
        seed,
        block_fading_len: fading_block(cfg),
        noiseless: cfg.channel.noiseless,
        unit_gain: cfg.channel.unit_gain,
    }
}

/// Sends sentence `index` through the configured chain at one grid point.
pub fn run_sentence(
    cfg: &ExperimentConfig,
    assets: &Assets,
    index: usize,
    snr_db: f64,
    beam_width: usize,
) -> Result<SentenceOutcome> {
    let text = &assets.test_sentences[index];
    let seed = sentence_seed(cfg.seed, index, snr_db);
    let chars = text.chars().count();

    if cfg.receiver == Receiver::Utf8Hard {
        let out = utf8_hard_pipeline(text.as_bytes(), &assets.constellation, &channel_config(cfg, snr_db, seed))?;
        let decoded = out.text();
        let width = assets.constellation.bits_per_symbol() as usize;
        return Ok(SentenceOutcome {
            chars,
            sent: text.bytes().map(u32::from).collect(),
            received: out.received_bytes.iter().map(|&b| u32::from(b)).collect(),
            bits: out.sent_bits.len(),
            bit_errors: bit_errors(&out.sent_bits, &out.received_bits)?,
            symbols: out.sent_bits.len().div_ceil(width),
            bleu: bleu_all_orders(text, &decoded)?,
            text: decoded,
        });
    }

    let vocab = assets.vocab.as_deref().expect("token receivers have a vocabulary");
    let table = assets.table.as_deref().expect("token receivers have a symbol table");
    let tokens = encode(text.as_bytes(), vocab)?;
    let sent_bits = tokens_to_bits(&tokens, cfg.bits_per_token)?;
    let frame = modulate(&sent_bits, &assets.constellation)?;
    let obs = transmit(&frame, &channel_config(cfg, snr_db, seed))?;

    let received: TokenSequence = match cfg.receiver {
        Receiver::Map => {
            let prior = assets.prior.as_ref().expect("MAP receiver has a prior");
            let decoder = MapDecoder::new(table, prior)?;
            decoder.beam_decode(&obs, &DecodeConfig::new(beam_width, tokens.len(), obs.n0))?.tokens
        }
        Receiver::HardToken => hard_token_decode(&obs, &assets.constellation, cfg.bits_per_token, vocab.len())?,
        Receiver::Utf8Hard => unreachable!(),
    };
    let received_bits = tokens_to_bits(&received, cfg.bits_per_token)?;
    let decoded = String::from_utf8_lossy(&decode(&received, vocab)?).into_owned();
    Ok(SentenceOutcome {
        chars,
        sent: tokens.ids().to_vec(),
        received: received.into_ids(),
        bits: sent_bits.len(),
        bit_errors: bit_errors(sent_bits.bits(), received_bits.bits())?,
        symbols: frame.symbols.len(),
        bleu: bleu_all_orders(text, &decoded)?,
        text: decoded,
    })
}

fn prior_label(cfg: &ExperimentConfig, assets: &Assets) -> String {
    match (cfg.receiver, &assets.prior) {
        (Receiver::Map, Some(p)) => p.name(),
        (Receiver::HardToken, _) => "none".into(),
        (Receiver::Utf8Hard, _) => "none".into(),
        (Receiver::Map, None) => "unknown".into(),
    }
}

pub fn cell_keys(cfg: &ExperimentConfig, assets: &Assets) -> Vec<CellKey> {
    let beams: Vec<usize> = if cfg.receiver == Receiver::Map { cfg.beam_grid.clone() } else { vec![1] };
    let (bits_per_token, prior) = match cfg.receiver {
        Receiver::Utf8Hard => (8, prior_label(cfg, assets)),
        _ => (cfg.bits_per_token, prior_label(cfg, assets)),
    };
    let mut keys = Vec::new();
    for &snr_db in &cfg.snr_grid {
        for &beam_width in &beams {
            keys.push(CellKey {
                receiver: cfg.receiver,
                prior: prior.clone(),
                channel: cfg.channel.kind.to_string(),
                constellation: cfg.constellation.to_string(),
                bits_per_token,
                beam_width,
                snr_db,
                fading_block: (cfg.channel.kind == ChannelKind::Rayleigh).then(|| fading_block(cfg)),
            });
        }
    }
    keys
}

fn cell_hash(fingerprint: &str, key: &CellKey) -> Result<String> {
    let mut h = Sha256::new();
    h.update(fingerprint.as_bytes());
    h.update(serde_json::to_vec(key)?);
    Ok(sha256_hex(&h.finalize())[..32].to_string())
}

pub fn compute_cell(cfg: &ExperimentConfig, assets: &Assets, key: &CellKey) -> CellResult {
    let mut acc = MetricAccumulator::new();
    let mut sentence_tokens = Vec::with_capacity(assets.test_sentences.len());
    let mut received = Vec::with_capacity(assets.test_sentences.len());
    let outcome = (|| -> Result<MetricReport> {
        for index in 0..assets.test_sentences.len() {
            let s = run_sentence(cfg, assets, index, key.snr_db, key.beam_width)?;
            let errors = s.sent.iter().zip(&s.received).filter(|(a, b)| a != b).count();
            acc.add_sentence(s.chars, s.sent.len(), errors, s.bits, s.bit_errors, s.symbols, s.bleu);
            if let Some(bridge) = &assets.bridge {
                acc.add_similarity(bridge.similarity(&assets.test_sentences[index], &s.text)?);
            }
            sentence_tokens.push(s.sent.len());
            received.push(s.received);
        }
        let bits_per_symbol = assets.constellation.bits_per_symbol();
        acc.finish(key.bits_per_token, bits_per_symbol)
    })();
    match outcome {
        Ok(report) => CellResult { key: key.clone(), report: Some(report), error: None, sentence_tokens, received },
        Err(e) => {
            log::error!("cell snr={} K={} failed: {e}", key.snr_db, key.beam_width);
            CellResult { key: key.clone(), report: None, error: Some(e.to_string()), sentence_tokens, received }
        }
    }
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Runs every grid cell, reusing finished cells, and writes
/// `results.json`, `cells.csv` and the plot data.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary> {
    let assets = Assets::prepare(cfg)?;
    run_with_assets(cfg, &assets)
}

pub fn run_with_assets(cfg: &ExperimentConfig, assets: &Assets) -> Result<RunSummary> {
    let cells_dir = cfg.output_dir.join(CELLS_DIR);
    fs::create_dir_all(&cells_dir)?;
    let keys = cell_keys(cfg, assets);
    let write_lock = Mutex::new(());
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build().map_err(|e| Error::Config(e.to_string()))?;

    let outcomes: Vec<Result<(CellResult, bool)>> = pool.install(|| {
        keys.par_iter()
            .map(|key| {
                let path = cells_dir.join(format!("{}.json", cell_hash(assets.fingerprint(), key)?));
                if let Ok(text) = fs::read_to_string(&path) {
                    if let Ok(cell) = serde_json::from_str::<CellResult>(&text) {
                        if cell.key == *key && cell.error.is_none() {
                            return Ok((cell, true));
                        }
                    }
                }
                let cell = compute_cell(cfg, assets, key);
                if cell.error.is_none() {
                    let _guard = write_lock.lock().unwrap();
                    write_atomic(&path, serde_json::to_string(&cell)?.as_bytes())?;
                }
                Ok((cell, false))
            })
            .collect()
    });

    let mut cells = Vec::with_capacity(outcomes.len());
    let mut reused = 0;
    for outcome in outcomes {
        let (cell, was_reused) = outcome?;
        reused += usize::from(was_reused);
        cells.push(cell);
    }
    let results = ResultSet { fingerprint: assets.fingerprint().to_string(), cells };
    write_results(&results, &cfg.output_dir)?;
    Ok(RunSummary { computed: results.cells.len() - reused, reused, results })
}

pub fn write_results(results: &ResultSet, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_atomic(&dir.join(RESULTS_FILE), serde_json::to_string_pretty(results)?.as_bytes())?;
    write_atomic(&dir.join(CELLS_CSV), &cells_csv(results)?)?;
    emit_plot_data(results, dir)?;
    Ok(())
}

/// One row per cell with every metric and count.
pub fn cells_csv(results: &ResultSet) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record([
        "receiver",
        "prior",
        "channel",
        "constellation",
        "bits_per_token",
        "K",
        "snr_db",
        "fading_block",
        "ber",
        "ter",
        "bleu1",
        "bleu2",
        "bleu3",
        "bleu4",
        "bpc",
        "bps",
        "similarity",
        "sentences",
        "chars",
        "tokens",
        "token_errors",
        "bits",
        "bit_errors",
        "symbols",
        "error",
    ])
    .map_err(csv_err)?;
    for cell in &results.cells {
        let k = &cell.key;
        let mut row = vec![
            k.receiver.as_str().to_string(),
            k.prior.clone(),
            k.channel.clone(),
            k.constellation.clone(),
            k.bits_per_token.to_string(),
            k.beam_width.to_string(),
            k.snr_db.to_string(),
            k.fading_block.map(|b| b.to_string()).unwrap_or_default(),
        ];
        match &cell.report {
            Some(r) => {
                row.extend([r.ber, r.ter].map(|v| v.to_string()));
                row.extend((1..=4).map(|n| r.bleu.get(&n).copied().unwrap_or(0.0).to_string()));
                row.extend([r.bpc.to_string(), r.bps.to_string()]);
                row.push(r.similarity.map(|s| s.to_string()).unwrap_or_default());
                let c = &r.counts;
                row.extend(
                    [c.sentences, c.chars, c.tokens, c.token_errors, c.bits, c.bit_errors, c.symbols]
                        .map(|v| v.to_string()),
                );
                row.push(String::new());
            }
            None => {
                row.extend(std::iter::repeat_n(String::new(), 16));
                row.push(cell.error.clone().unwrap_or_default());
            }
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_ignore_beam_and_prior_but_not_snr() {
        let a = sentence_seed(1, 0, 4.0);
        assert_eq!(a, sentence_seed(1, 0, 4.0));
        assert_ne!(a, sentence_seed(1, 1, 4.0));
        assert_ne!(a, sentence_seed(1, 0, 6.0));
        assert_ne!(a, sentence_seed(2, 0, 4.0));
    }
}
