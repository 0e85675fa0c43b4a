//! Interpolated absolute-discounting n-gram model.
//!
//! For a history `h` seen `c(h)` times with `n(h)` distinct followers,
//!
//! ```text
//! P(w | h) = max(c(h, w) - D, 0) / c(h) + D n(h) / c(h) * P(w | h')
//! ```
//!
//! where `h'` drops the oldest token. Unseen histories back off to `P(w | h')`
//! unchanged, and the unigram level interpolates with the uniform
//! distribution. The result is mixed with a uniform floor of total mass
//! [`PROBABILITY_FLOOR`].

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TokenPrior;
use crate::error::{Error, Result};
use crate::tokenizer::{TokenId, TokenSequence};

pub const DEFAULT_DISCOUNT: f64 = 0.4;
pub const PROBABILITY_FLOOR: f64 = 1e-12;

const NGRAM_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
struct Followers {
    total: u64,
    /// Sorted by token id.
    counts: Vec<(TokenId, u64)>,
}

#[derive(Clone, Debug)]
pub struct NGramModel {
    order: usize,
    vocab_size: usize,
    discount: f64,
    unigram_counts: Vec<u64>,
    unigram: Vec<f64>,
    /// `contexts[k - 1]` holds histories of length `k`.
    contexts: Vec<HashMap<Vec<TokenId>, Followers>>,
}

impl PartialEq for NGramModel {
    fn eq(&self, other: &Self) -> bool {
        self.order == other.order
            && self.vocab_size == other.vocab_size
            && self.discount == other.discount
            && self.unigram_counts == other.unigram_counts
            && self.contexts == other.contexts
    }
}

fn check_discount(discount: f64) -> Result<()> {
    if discount > 0.0 && discount < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("discount must be in (0, 1), got {discount}")))
    }
}

/// Counts n-grams over sentences, each preceded by the sentinel id `vocab_size`.
pub fn train_ngram<'a, I>(corpus: I, order: usize, discount: f64, vocab_size: usize) -> Result<NGramModel>
where
    I: IntoIterator<Item = &'a TokenSequence>,
{
    if order == 0 {
        return Err(Error::Config("n-gram order must be at least 1".into()));
    }
    check_discount(discount)?;
    if vocab_size == 0 {
        return Err(Error::Config("vocabulary is empty".into()));
    }
    let bos = vocab_size as TokenId;
    let mut unigram_counts = vec![0u64; vocab_size];
    let mut raw: Vec<HashMap<Vec<TokenId>, BTreeMap<TokenId, u64>>> = vec![HashMap::new(); order - 1];
    let mut padded = Vec::new();
    for sentence in corpus {
        padded.clear();
        padded.push(bos);
        padded.extend_from_slice(sentence.ids());
        for i in 1..padded.len() {
            let w = padded[i];
            if w as usize >= vocab_size {
                return Err(Error::InvalidToken { id: w, size: vocab_size });
            }
            unigram_counts[w as usize] += 1;
            for k in 1..order.min(i + 1) {
                *raw[k - 1].entry(padded[i - k..i].to_vec()).or_default().entry(w).or_default() += 1;
            }
        }
    }
    if unigram_counts.iter().all(|&c| c == 0) {
        return Err(Error::Config("n-gram training corpus has no tokens".into()));
    }
    let contexts = raw
        .into_iter()
        .map(|level| {
            level
                .into_iter()
                .map(|(h, f)| {
                    let total = f.values().sum();
                    (h, Followers { total, counts: f.into_iter().collect() })
                })
                .collect()
        })
        .collect();
    Ok(NGramModel::assemble(order, vocab_size, discount, unigram_counts, contexts))
}

impl NGramModel {
    fn assemble(
        order: usize,
        vocab_size: usize,
        discount: f64,
        unigram_counts: Vec<u64>,
        contexts: Vec<HashMap<Vec<TokenId>, Followers>>,
    ) -> Self {
        let total: u64 = unigram_counts.iter().sum();
        let seen = unigram_counts.iter().filter(|&&c| c > 0).count();
        let total = total as f64;
        let spread = discount * seen as f64 / total / vocab_size as f64;
        let unigram = unigram_counts.iter().map(|&c| (c as f64 - discount).max(0.0) / total + spread).collect();
        Self { order, vocab_size, discount, unigram_counts, unigram, contexts }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Probabilities (not logs) for every token given `history`.
    pub fn probabilities(&self, history: &[TokenId], out: &mut [f64]) {
        out.copy_from_slice(&self.unigram);
        let usable = history.len().min(self.order - 1);
        for k in 1..=usable {
            let Some(f) = self.contexts[k - 1].get(&history[history.len() - k..]) else {
                // A longer history cannot be seen if its suffix was not.
                break;
            };
            let total = f.total as f64;
            let backoff = self.discount * f.counts.len() as f64 / total;
            for p in out.iter_mut() {
                *p *= backoff;
            }
            for &(w, c) in &f.counts {
                out[w as usize] += (c as f64 - self.discount) / total;
            }
        }
        let floor = PROBABILITY_FLOOR / self.vocab_size as f64;
        for p in out.iter_mut() {
            *p = (1.0 - PROBABILITY_FLOOR) * *p + floor;
        }
    }

    /// Floored unigram distribution; what any unseen history backs off to.
    pub fn unigram_logprobs(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.vocab_size];
        self.probabilities(&[], &mut out);
        out.iter_mut().for_each(|p| *p = p.ln());
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut contexts: Vec<ContextRecord> = self
            .contexts
            .iter()
            .flat_map(|level| {
                level.iter().map(|(h, f)| ContextRecord {
                    history: h.clone(),
                    followers: f.counts.iter().map(|&(w, c)| [w as u64, c]).collect(),
                })
            })
            .collect();
        contexts.sort_by(|a, b| (a.history.len(), &a.history).cmp(&(b.history.len(), &b.history)));
        let doc = NGramFile {
            version: NGRAM_FORMAT_VERSION,
            order: self.order,
            vocab_size: self.vocab_size,
            discount: self.discount,
            unigram_counts: self.unigram_counts.clone(),
            contexts,
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: NGramFile = serde_json::from_str(text)?;
        if doc.version != NGRAM_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported n-gram version {}", doc.version)));
        }
        if doc.order == 0 || doc.vocab_size == 0 || doc.unigram_counts.len() != doc.vocab_size {
            return Err(Error::Format("inconsistent n-gram header".into()));
        }
        check_discount(doc.discount).map_err(|e| Error::Format(e.to_string()))?;
        if doc.unigram_counts.iter().all(|&c| c == 0) {
            return Err(Error::Format("n-gram file has no counts".into()));
        }
        let mut contexts = vec![HashMap::new(); doc.order - 1];
        for record in doc.contexts {
            let k = record.history.len();
            if k == 0 || k >= doc.order {
                return Err(Error::Format(format!("history of length {k} in an order-{} model", doc.order)));
            }
            let mut counts = Vec::with_capacity(record.followers.len());
            for [w, c] in record.followers {
                if w as usize >= doc.vocab_size || c == 0 {
                    return Err(Error::Format(format!("bad follower entry [{w}, {c}]")));
                }
                counts.push((w as TokenId, c));
            }
            counts.sort_unstable();
            let total = counts.iter().map(|&(_, c)| c).sum();
            contexts[k - 1].insert(record.history, Followers { total, counts });
        }
        Ok(Self::assemble(doc.order, doc.vocab_size, doc.discount, doc.unigram_counts, contexts))
    }
}

impl TokenPrior for NGramModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn fill_logprobs(&self, history: &[TokenId], out: &mut [f64]) -> Result<()> {
        self.probabilities(history, out);
        for p in out.iter_mut() {
            *p = p.ln();
        }
        Ok(())
    }

    fn name(&self) -> String {
        format!("ngram{}", self.order)
    }
}

#[derive(Serialize, Deserialize)]
struct NGramFile {
    version: u32,
    order: usize,
    vocab_size: usize,
    discount: f64,
    unigram_counts: Vec<u64>,
    contexts: Vec<ContextRecord>,
}

#[derive(Serialize, Deserialize)]
struct ContextRecord {
    history: Vec<TokenId>,
    followers: Vec<[u64; 2]>,
}
