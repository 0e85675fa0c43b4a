//! Next-token priors `P(w_i | w_{i-N} .. w_{i-1})`.
//!
//! Every implementation sees a history window built by [`Prior`]: the
//! begin-of-sequence sentinel (id `V`) followed by the decoded prefix,
//! truncated to the last `context_len` ids. Implementations return natural
//! log-probabilities normalized over the `V` vocabulary entries; the wrapper
//! applies the temperature and pads wire codewords `>= V` with `-inf`.

mod ngram;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::{TokenId, TokenSequence};

pub use ngram::{train_ngram, NGramModel, DEFAULT_DISCOUNT, PROBABILITY_FLOOR};

pub trait TokenPrior: Send + Sync {
    fn vocab_size(&self) -> usize;

    /// Writes `ln P(v | history)` for every `v < vocab_size` into `out`.
    /// `history` may begin with the sentinel id `vocab_size`.
    fn fill_logprobs(&self, history: &[TokenId], out: &mut [f64]) -> Result<()>;

    fn name(&self) -> String;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorKind {
    Uniform,
    Ngram,
    Bridge,
}

impl PriorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PriorKind::Uniform => "uniform",
            PriorKind::Ngram => "ngram",
            PriorKind::Bridge => "bridge",
        }
    }
}

impl fmt::Display for PriorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PriorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(PriorKind::Uniform),
            "ngram" => Ok(PriorKind::Ngram),
            "bridge" => Ok(PriorKind::Bridge),
            other => Err(Error::Config(format!("unknown prior {other:?}"))),
        }
    }
}

/// Every token equally likely.
#[derive(Clone, Debug)]
pub struct UniformPrior {
    vocab_size: usize,
}

impl UniformPrior {
    pub fn new(vocab_size: usize) -> Self {
        Self { vocab_size }
    }
}

impl TokenPrior for UniformPrior {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn fill_logprobs(&self, _history: &[TokenId], out: &mut [f64]) -> Result<()> {
        out.fill(-(self.vocab_size as f64).ln());
        Ok(())
    }

    fn name(&self) -> String {
        "uniform".into()
    }
}

/// A prior model together with its context window and temperature.
#[derive(Clone)]
pub struct Prior {
    model: Arc<dyn TokenPrior>,
    context_len: usize,
    temperature: f64,
}

impl fmt::Debug for Prior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Prior")
            .field("model", &self.model.name())
            .field("context_len", &self.context_len)
            .field("temperature", &self.temperature)
            .finish()
    }
}

impl Prior {
    pub fn new(model: Arc<dyn TokenPrior>, context_len: usize, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {temperature}")));
        }
        if model.vocab_size() == 0 {
            return Err(Error::Config("prior over an empty vocabulary".into()));
        }
        Ok(Self { model, context_len, temperature })
    }

    pub fn uniform(vocab_size: usize) -> Self {
        Self { model: Arc::new(UniformPrior::new(vocab_size)), context_len: 0, temperature: 1.0 }
    }

    pub fn vocab_size(&self) -> usize {
        self.model.vocab_size()
    }

    pub fn bos_id(&self) -> TokenId {
        self.vocab_size() as TokenId
    }

    pub fn context_len(&self) -> usize {
        self.context_len
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn name(&self) -> String {
        self.model.name()
    }

    fn window(&self, context: &[TokenId]) -> Result<Vec<TokenId>> {
        let size = self.vocab_size();
        if let Some(&id) = context.iter().find(|&&id| id as usize >= size) {
            return Err(Error::InvalidToken { id, size });
        }
        let mut history = Vec::with_capacity(context.len() + 1);
        history.push(self.bos_id());
        history.extend_from_slice(context);
        let skip = history.len().saturating_sub(self.context_len);
        history.drain(..skip);
        Ok(history)
    }

    /// Fills `out` (one slot per wire codeword, at least `V` long) with
    /// temperature-scaled log-probabilities; slots `>= V` get `-inf`.
    pub fn logprobs_into(&self, context: &[TokenId], out: &mut [f64]) -> Result<()> {
        let size = self.vocab_size();
        if out.len() < size {
            return Err(Error::Config(format!("{} output slots for {size} tokens", out.len())));
        }
        let history = self.window(context)?;
        let (vocab, wire) = out.split_at_mut(size);
        self.model.fill_logprobs(&history, vocab)?;
        if self.temperature != 1.0 {
            for lp in vocab.iter_mut() {
                *lp /= self.temperature;
            }
        }
        wire.fill(f64::NEG_INFINITY);
        Ok(())
    }

    pub fn next_token_logprobs(&self, context: &TokenSequence, wire_size: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; wire_size];
        self.logprobs_into(context.ids(), &mut out)?;
        Ok(out)
    }

    /// Chain-rule log-probability of a whole sequence.
    pub fn sequence_logprob(&self, tokens: &TokenSequence) -> Result<f64> {
        let mut buf = vec![0.0; self.vocab_size()];
        let mut total = 0.0;
        for (i, &id) in tokens.ids().iter().enumerate() {
            self.logprobs_into(&tokens.ids()[..i], &mut buf)?;
            let lp = *buf.get(id as usize).ok_or(Error::InvalidToken { id, size: buf.len() })?;
            total += lp;
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_entries() {
        let prior = Prior::uniform(32000);
        let lp = prior.next_token_logprobs(&TokenSequence::new(vec![1, 2]), 1 << 15).unwrap();
        assert_eq!(lp.len(), 32768);
        assert!(lp[..32000].iter().all(|&x| x == -(32000f64).ln()));
        assert!(lp[32000..].iter().all(|&x| x == f64::NEG_INFINITY));
    }

    #[test]
    fn uniform_sequence_logprob() {
        let prior = Prior::uniform(50);
        assert_eq!(prior.sequence_logprob(&TokenSequence::default()).unwrap(), 0.0);
        let lp = prior.sequence_logprob(&TokenSequence::new(vec![3, 4, 5, 6])).unwrap();
        assert!((lp + 4.0 * 50f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_context_and_temperature() {
        let prior = Prior::uniform(10);
        assert!(matches!(
            prior.next_token_logprobs(&TokenSequence::new(vec![10]), 16),
            Err(Error::InvalidToken { id: 10, size: 10 })
        ));
        assert!(Prior::new(Arc::new(UniformPrior::new(4)), 2, 0.0).is_err());
        assert!(Prior::new(Arc::new(UniformPrior::new(4)), 2, f64::NAN).is_err());
    }

    #[test]
    fn window_keeps_bos_until_context_fills() {
        let prior = Prior::new(Arc::new(UniformPrior::new(10)), 3, 1.0).unwrap();
        assert_eq!(prior.window(&[]).unwrap(), vec![10]);
        assert_eq!(prior.window(&[1, 2]).unwrap(), vec![10, 1, 2]);
        assert_eq!(prior.window(&[1, 2, 3, 4]).unwrap(), vec![2, 3, 4]);
        let none = Prior::new(Arc::new(UniformPrior::new(10)), 0, 1.0).unwrap();
        assert!(none.window(&[1, 2]).unwrap().is_empty());
    }
}
