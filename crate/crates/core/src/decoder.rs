//! MAP sequence decoding with a token prior.
//!
//! A hypothesis `w_1..w_i` scores
//!
//! ```text
//! sum_j [ N0 ln P(w_j | w_<j) - sum_{k in token j} |o_k - h_k s_k(w_j)|^2 ]
//! ```
//!
//! which is the log-posterior scaled by `N0`. Beam search keeps the `K` best
//! prefixes per step. Ranking is total: higher score first, then lower last
//! token id, then lexicographically smaller parent prefix.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::channel::ChannelObservation;
use crate::error::{Error, Result};
use crate::modem::TokenSymbolTable;
use crate::prior::Prior;
use crate::scalar::Real;
use crate::tokenizer::{TokenId, TokenSequence};

/// Largest search space [`MapDecoder::exhaustive_decode`] accepts.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct DecodeConfig<T> {
    pub beam_width: usize,
    pub target_len: usize,
    /// Weight of the prior term; the channel's N0 for exact MAP.
    pub n0: T,
    pub keep_trace: bool,
}

impl<T: Real> DecodeConfig<T> {
    pub fn new(beam_width: usize, target_len: usize, n0: T) -> Self {
        Self { beam_width, target_len, n0, keep_trace: false }
    }

    pub fn with_trace(mut self) -> Self {
        self.keep_trace = true;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(Error::Config("beam width must be at least 1".into()));
        }
        if self.target_len == 0 {
            return Err(Error::Config("target length must be at least 1".into()));
        }
        if !self.n0.is_finite() || self.n0 < T::zero() {
            return Err(Error::Config(format!("prior weight must be finite and non-negative, got {}", self.n0)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BeamHypothesis<T> {
    pub tokens: Vec<TokenId>,
    pub score: T,
}

impl<T: Real> BeamHypothesis<T> {
    pub fn root() -> Self {
        Self { tokens: Vec::new(), score: T::zero() }
    }
}

/// Hypotheses kept after one step, best first.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceStep<T> {
    pub step: usize,
    pub scores: Vec<T>,
    pub tokens: Vec<TokenId>,
    /// Index of each hypothesis' parent in the previous step.
    pub parents: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecodeResult<T> {
    pub tokens: TokenSequence,
    pub final_score: T,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceStep<T>>>,
}

#[derive(Clone, Copy, Debug)]
struct Candidate<T> {
    score: T,
    token: TokenId,
    parent_rank: usize,
    parent: usize,
}

impl<T: Real> Candidate<T> {
    /// `Less` when `self` ranks ahead of `other`.
    fn rank(&self, other: &Self) -> Ordering {
        other
            .score
            .partial_cmp(&self.score)
            .unwrap_or(Ordering::Equal)
            .then(self.token.cmp(&other.token))
            .then(self.parent_rank.cmp(&other.parent_rank))
    }
}

impl<T: Real> PartialEq for Candidate<T> {
    fn eq(&self, other: &Self) -> bool {
        self.rank(other) == Ordering::Equal
    }
}

impl<T: Real> Eq for Candidate<T> {}

impl<T: Real> PartialOrd for Candidate<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Real> Ord for Candidate<T> {
    // Max-heap top is the worst kept candidate.
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank(other)
    }
}

pub struct MapDecoder<'a, T> {
    table: &'a TokenSymbolTable<T>,
    prior: &'a Prior,
}

impl<'a, T: Real> MapDecoder<'a, T> {
    /// `table` must hold symbols for every vocabulary entry of `prior`.
    pub fn new(table: &'a TokenSymbolTable<T>, prior: &'a Prior) -> Result<Self> {
        if table.len() < prior.vocab_size() {
            return Err(Error::Config(format!(
                "symbol table covers {} ids but the prior has {} tokens",
                table.len(),
                prior.vocab_size()
            )));
        }
        Ok(Self { table, prior })
    }

    fn vocab_size(&self) -> usize {
        self.prior.vocab_size()
    }

    fn wire_size(&self) -> u64 {
        1u64 << self.table.bits_per_token()
    }

    fn check_observation(&self, obs: &ChannelObservation<T>, target_len: usize) -> Result<()> {
        let expected = target_len * self.table.symbols_per_token();
        if obs.observed.len() != expected || obs.csi.len() != expected {
            return Err(Error::Framing(format!(
                "{} observations and {} gains for {target_len} tokens of {} symbols",
                obs.observed.len(),
                obs.csi.len(),
                self.table.symbols_per_token()
            )));
        }
        Ok(())
    }

    /// `sum |o - h s|^2` over the symbol slots of token position `step`.
    fn token_distance(&self, obs: &ChannelObservation<T>, step: usize, id: TokenId) -> T {
        let spt = self.table.symbols_per_token();
        let range = step * spt..(step + 1) * spt;
        let mut d = T::zero();
        for ((&o, &h), &p) in obs.observed[range.clone()].iter().zip(&obs.csi[range]).zip(self.table.get(id)) {
            d += (o - h * p).norm_sqr();
        }
        d
    }

    fn distances(&self, obs: &ChannelObservation<T>, step: usize, out: &mut Vec<T>) {
        out.clear();
        out.extend((0..self.vocab_size() as TokenId).map(|id| self.token_distance(obs, step, id)));
    }

    #[inline]
    fn extend_score(score: T, n0: T, logprob: f64, distance: T) -> T {
        score + (n0 * T::of(logprob) - distance)
    }

    /// Score of `hyp` extended by `candidate` at position `step`.
    pub fn step_score(
        &self,
        hyp: &BeamHypothesis<T>,
        candidate: TokenId,
        obs: &ChannelObservation<T>,
        step: usize,
        n0: T,
    ) -> Result<T> {
        if candidate as u64 >= self.wire_size() {
            return Err(Error::Range { id: candidate, bits: self.table.bits_per_token() });
        }
        let spt = self.table.symbols_per_token();
        if (step + 1) * spt > obs.observed.len() || obs.csi.len() != obs.observed.len() {
            return Err(Error::Framing(format!("step {step} lies beyond the observation")));
        }
        if candidate as usize >= self.vocab_size() {
            return Ok(T::neg_infinity());
        }
        let mut logprobs = vec![0.0; self.vocab_size()];
        self.prior.logprobs_into(&hyp.tokens, &mut logprobs)?;
        let distance = self.token_distance(obs, step, candidate);
        Ok(Self::extend_score(hyp.score, n0, logprobs[candidate as usize], distance))
    }

    pub fn beam_decode(&self, obs: &ChannelObservation<T>, cfg: &DecodeConfig<T>) -> Result<DecodeResult<T>> {
        cfg.validate()?;
        self.check_observation(obs, cfg.target_len)?;
        let vocab = self.vocab_size();
        let mut beam = vec![BeamHypothesis::root()];
        let mut trace = cfg.keep_trace.then(Vec::new);
        let mut distances = Vec::with_capacity(vocab);
        let mut logprobs = vec![0.0; vocab];
        let mut heap: BinaryHeap<Candidate<T>> = BinaryHeap::with_capacity(cfg.beam_width + 1);

        for step in 0..cfg.target_len {
            self.distances(obs, step, &mut distances);

            let mut by_prefix: Vec<usize> = (0..beam.len()).collect();
            by_prefix.sort_by(|&a, &b| beam[a].tokens.cmp(&beam[b].tokens));
            let mut prefix_rank = vec![0; beam.len()];
            for (rank, &i) in by_prefix.iter().enumerate() {
                prefix_rank[i] = rank;
            }

            heap.clear();
            for (parent, hyp) in beam.iter().enumerate() {
                self.prior.logprobs_into(&hyp.tokens, &mut logprobs)?;
                for (token, (&lp, &d)) in logprobs.iter().zip(&distances).enumerate() {
                    let candidate = Candidate {
                        score: Self::extend_score(hyp.score, cfg.n0, lp, d),
                        token: token as TokenId,
                        parent_rank: prefix_rank[parent],
                        parent,
                    };
                    if candidate.score == T::neg_infinity() || candidate.score.is_nan() {
                        continue;
                    }
                    if heap.len() < cfg.beam_width {
                        heap.push(candidate);
                    } else if candidate < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(candidate);
                    }
                }
            }
            if heap.is_empty() {
                return Err(Error::PriorUnavailable(format!("no finite-score candidate at step {step}")));
            }

            let kept = std::mem::take(&mut heap).into_sorted_vec();
            if let Some(trace) = trace.as_mut() {
                trace.push(TraceStep {
                    step,
                    scores: kept.iter().map(|c| c.score).collect(),
                    tokens: kept.iter().map(|c| c.token).collect(),
                    parents: kept.iter().map(|c| c.parent).collect(),
                });
            }
            beam = kept
                .iter()
                .map(|c| {
                    let mut tokens = Vec::with_capacity(step + 1);
                    tokens.extend_from_slice(&beam[c.parent].tokens);
                    tokens.push(c.token);
                    BeamHypothesis { tokens, score: c.score }
                })
                .collect();
        }

        let best = beam.swap_remove(0);
        Ok(DecodeResult { tokens: TokenSequence::new(best.tokens), final_score: best.score, trace })
    }

    /// True argmax over all `V^t` in-vocabulary sequences. Ties keep the
    /// lexicographically smallest sequence.
    pub fn exhaustive_decode(&self, obs: &ChannelObservation<T>, cfg: &DecodeConfig<T>) -> Result<DecodeResult<T>> {
        cfg.validate()?;
        self.check_observation(obs, cfg.target_len)?;
        let vocab = self.vocab_size();
        let space = (vocab as u128).checked_pow(cfg.target_len as u32).unwrap_or(u128::MAX);
        if space > EXHAUSTIVE_LIMIT {
            return Err(Error::OracleSize(space));
        }
        let distances: Vec<Vec<T>> = (0..cfg.target_len)
            .map(|step| {
                let mut d = Vec::new();
                self.distances(obs, step, &mut d);
                d
            })
            .collect();
        let mut best = BeamHypothesis { tokens: Vec::new(), score: T::neg_infinity() };
        let mut prefix = Vec::with_capacity(cfg.target_len);
        self.search(&distances, cfg, &mut prefix, T::zero(), &mut best)?;
        if best.tokens.is_empty() {
            return Err(Error::PriorUnavailable("every sequence has zero prior probability".into()));
        }
        Ok(DecodeResult { tokens: TokenSequence::new(best.tokens), final_score: best.score, trace: None })
    }

    fn search(
        &self,
        distances: &[Vec<T>],
        cfg: &DecodeConfig<T>,
        prefix: &mut Vec<TokenId>,
        score: T,
        best: &mut BeamHypothesis<T>,
    ) -> Result<()> {
        let step = prefix.len();
        if step == cfg.target_len {
            if score > best.score {
                best.tokens.clone_from(prefix);
                best.score = score;
            }
            return Ok(());
        }
        let mut logprobs = vec![0.0; self.vocab_size()];
        self.prior.logprobs_into(prefix, &mut logprobs)?;
        for (token, (&lp, &d)) in logprobs.iter().zip(&distances[step]).enumerate() {
            let next = Self::extend_score(score, cfg.n0, lp, d);
            if next == T::neg_infinity() {
                continue;
            }
            prefix.push(token as TokenId);
            self.search(distances, cfg, prefix, next, best)?;
            prefix.pop();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use num_complex::Complex;

    use super::*;
    use crate::channel::{transmit_symbols, ChannelConfig};
    use crate::modem::{Constellation, Modulation};

    fn setup(vocab: usize, bits: u32, m: Modulation) -> (TokenSymbolTable<f64>, Prior) {
        let c = Constellation::new(m);
        (TokenSymbolTable::new(&c, bits, vocab).unwrap(), Prior::uniform(vocab))
    }

    fn observe(table: &TokenSymbolTable<f64>, ids: &[TokenId], cfg: &ChannelConfig) -> ChannelObservation<f64> {
        let symbols: Vec<Complex<f64>> = ids.iter().flat_map(|&id| table.get(id).to_vec()).collect();
        transmit_symbols(&symbols, cfg).unwrap()
    }

    #[test]
    fn exact_match_maximizes_the_increment() {
        let (table, prior) = setup(16, 4, Modulation::Qpsk);
        let decoder = MapDecoder::new(&table, &prior).unwrap();
        let mut cfg = ChannelConfig::awgn(10.0, 0);
        cfg.noiseless = true;
        let obs = observe(&table, &[9], &cfg);
        let n0 = 0.1;
        let root = BeamHypothesis::root();
        let own = decoder.step_score(&root, 9, &obs, 0, n0).unwrap();
        assert!((own - n0 * -(16f64).ln()).abs() < 1e-15);
        for id in 0..16 {
            if id != 9 {
                assert!(decoder.step_score(&root, id, &obs, 0, n0).unwrap() < own);
            }
        }
    }

    #[test]
    fn out_of_vocab_candidate_is_unreachable() {
        let (table, prior) = setup(5, 4, Modulation::Qpsk);
        let decoder = MapDecoder::new(&table, &prior).unwrap();
        let obs = observe(&table, &[1], &ChannelConfig::awgn(10.0, 0));
        let root = BeamHypothesis::root();
        assert_eq!(decoder.step_score(&root, 7, &obs, 0, 0.1).unwrap(), f64::NEG_INFINITY);
        assert!(matches!(decoder.step_score(&root, 16, &obs, 0, 0.1), Err(Error::Range { .. })));
    }

    #[test]
    fn hand_computed_two_token_score() {
        // V = 2, m = 2, QPSK: token 0 -> label 00 -> (1+1i)/sqrt2, token 1 -> label 01 -> (1-1i)/sqrt2.
        let (table, prior) = setup(2, 2, Modulation::Qpsk);
        let decoder = MapDecoder::new(&table, &prior).unwrap();
        let r = 0.5f64.sqrt();
        let obs =
            ChannelObservation { observed: vec![Complex::new(0.5, 0.25)], csi: vec![Complex::new(1.0, 0.0)], n0: 0.1 };
        let root = BeamHypothesis::root();
        let s0 = decoder.step_score(&root, 0, &obs, 0, 0.1).unwrap();
        let s1 = decoder.step_score(&root, 1, &obs, 0, 0.1).unwrap();
        let d0 = (0.5 - r).powi(2) + (0.25 - r).powi(2);
        let d1 = (0.5 - r).powi(2) + (0.25 + r).powi(2);
        assert!((s0 - (0.1 * -(2f64).ln() - d0)).abs() < 1e-12);
        assert!((s1 - (0.1 * -(2f64).ln() - d1)).abs() < 1e-12);
    }

    #[test]
    fn equal_distance_prefers_the_likelier_token() {
        use crate::prior::{train_ngram, DEFAULT_DISCOUNT};
        use std::sync::Arc;
        let corpus: Vec<TokenSequence> = (0..20).map(|_| TokenSequence::new(vec![2, 2, 3])).collect();
        let model = train_ngram(&corpus, 1, DEFAULT_DISCOUNT, 4).unwrap();
        let prior = Prior::new(Arc::new(model), 0, 1.0).unwrap();
        let table = TokenSymbolTable::new(&Constellation::new(Modulation::Qpsk), 2, 4).unwrap();
        let decoder = MapDecoder::new(&table, &prior).unwrap();
        // Midpoint between labels 10 and 11 (tokens 2 and 3).
        let p2 = table.get(2)[0];
        let p3 = table.get(3)[0];
        let obs = ChannelObservation { observed: vec![(p2 + p3) / 2.0], csi: vec![Complex::new(1.0, 0.0)], n0: 0.5 };
        let root = BeamHypothesis::root();
        assert!(
            decoder.step_score(&root, 2, &obs, 0, 0.5).unwrap() > decoder.step_score(&root, 3, &obs, 0, 0.5).unwrap()
        );
        let out = decoder.beam_decode(&obs, &DecodeConfig::new(1, 1, 0.5)).unwrap();
        assert_eq!(out.tokens.ids(), &[2]);
    }

    #[test]
    fn noiseless_decoding_is_exact() {
        let (table, prior) = setup(200, 8, Modulation::Qam16);
        let decoder = MapDecoder::new(&table, &prior).unwrap();
        let ids = [5, 199, 0, 77, 77, 13];
        let mut cfg = ChannelConfig::rayleigh(0.0, 5, 2);
        cfg.noiseless = true;
        let obs = observe(&table, &ids, &cfg);
        for k in [1, 3, 10] {
            let out = decoder.beam_decode(&obs, &DecodeConfig::new(k, ids.len(), obs.n0)).unwrap();
            assert_eq!(out.tokens.ids(), &ids);
        }
    }

    #[test]
    fn single_step_exhaustive_is_argmax() {
        let (table, prior) = setup(8, 4, Modulation::Qpsk);
        let decoder = MapDecoder::new(&table, &prior).unwrap();
        let obs = observe(&table, &[3], &ChannelConfig::awgn(0.0, 11));
        let cfg = DecodeConfig::new(1, 1, obs.n0);
        let out = decoder.exhaustive_decode(&obs, &cfg).unwrap();
        let root = BeamHypothesis::root();
        let scores: Vec<f64> = (0..8).map(|id| decoder.step_score(&root, id, &obs, 0, obs.n0).unwrap()).collect();
        let argmax = (0..8).max_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a))).unwrap();
        assert_eq!(out.tokens.ids(), &[argmax as TokenId]);
        assert_eq!(out.final_score, scores[argmax]);
    }

    #[test]
    fn oracle_guard() {
        let (table, prior) = setup(200, 8, Modulation::Qpsk);
        let decoder = MapDecoder::new(&table, &prior).unwrap();
        let obs = observe(&table, &[1, 2, 3], &ChannelConfig::awgn(10.0, 0));
        let err = decoder.exhaustive_decode(&obs, &DecodeConfig::new(1, 3, 0.1)).unwrap_err();
        assert!(matches!(err, Error::OracleSize(8_000_000)));
    }

    #[test]
    fn length_mismatch_is_framing_error() {
        let (table, prior) = setup(8, 4, Modulation::Qpsk);
        let decoder = MapDecoder::new(&table, &prior).unwrap();
        let obs = observe(&table, &[1, 2], &ChannelConfig::awgn(10.0, 0));
        assert!(matches!(decoder.beam_decode(&obs, &DecodeConfig::new(2, 3, 0.1)), Err(Error::Framing(_))));
        assert!(matches!(decoder.beam_decode(&obs, &DecodeConfig::new(0, 2, 0.1)), Err(Error::Config(_))));
    }

    #[test]
    fn trace_is_deterministic_and_consistent() {
        let (table, prior) = setup(30, 6, Modulation::Qam8);
        let decoder = MapDecoder::new(&table, &prior).unwrap();
        let obs = observe(&table, &[4, 29, 17, 2], &ChannelConfig::awgn(4.0, 8));
        let cfg = DecodeConfig::new(5, 4, obs.n0).with_trace();
        let a = decoder.beam_decode(&obs, &cfg).unwrap();
        let b = decoder.beam_decode(&obs, &cfg).unwrap();
        assert_eq!(a, b);
        let trace = a.trace.as_ref().unwrap();
        assert_eq!(trace.len(), 4);
        assert_eq!(trace[0].scores.len(), 5);
        assert!(trace.iter().all(|s| s.scores.windows(2).all(|w| w[0] >= w[1])));
        assert_eq!(trace[3].scores[0], a.final_score);
        let json = serde_json::to_string(&a).unwrap();
        assert!(json.contains("\"parents\""));
    }

    #[test]
    fn single_precision_decoding() {
        let c = Constellation::<f32>::new(Modulation::Qam16);
        let table = TokenSymbolTable::new(&c, 8, 100).unwrap();
        let prior = Prior::uniform(100);
        let decoder = MapDecoder::new(&table, &prior).unwrap();
        let ids = [3u32, 99, 42];
        let symbols: Vec<Complex<f32>> = ids.iter().flat_map(|&id| table.get(id).to_vec()).collect();
        let mut cfg = ChannelConfig::awgn(0.0, 1);
        cfg.noiseless = true;
        let obs = transmit_symbols(&symbols, &cfg).unwrap();
        let out = decoder.beam_decode(&obs, &DecodeConfig::new(4, 3, obs.n0)).unwrap();
        assert_eq!(out.tokens.ids(), &ids);
    }
}
