//! Bit/token error rates, BLEU, and coding-rate bookkeeping.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenizer::{BitFrame, TokenSequence};

pub fn bit_error_rate(sent: &BitFrame, received: &BitFrame) -> Result<f64> {
    Ok(bit_errors(sent.bits(), received.bits())? as f64 / sent.len().max(1) as f64)
}

/// Hamming distance between equal-length bit slices.
pub fn bit_errors(sent: &[u8], received: &[u8]) -> Result<usize> {
    if sent.len() != received.len() {
        return Err(Error::Metric(format!("{} sent bits vs {} received", sent.len(), received.len())));
    }
    Ok(sent.iter().zip(received).filter(|(a, b)| a != b).count())
}

pub fn token_error_rate(sent: &TokenSequence, received: &TokenSequence) -> Result<f64> {
    Ok(token_errors(sent, received)? as f64 / sent.len().max(1) as f64)
}

pub fn token_errors(sent: &TokenSequence, received: &TokenSequence) -> Result<usize> {
    if sent.len() != received.len() {
        return Err(Error::Metric(format!("{} sent tokens vs {} received", sent.len(), received.len())));
    }
    Ok(sent.ids().iter().zip(received.ids()).filter(|(a, b)| a != b).count())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BleuScore {
    pub value: f64,
    /// Set when the candidate had no words (the score is then 0).
    pub empty_candidate: bool,
}

/// BLEU with uniform weights over 1..=`max_n`:
///
/// ```text
/// ln BLEU = min(1 - len(candidate)/len(reference), 0) + sum_n ln(p_n) / max_n
/// ```
///
/// `p_n` is the clipped n-gram precision (matches clipped by reference
/// counts over the candidate's n-gram total). Any zero precision gives 0.
pub fn bleu<S: AsRef<str>>(reference: &[S], candidate: &[S], max_n: usize) -> Result<BleuScore> {
    if !(1..=4).contains(&max_n) {
        return Err(Error::Metric(format!("max_n must be in 1..=4, got {max_n}")));
    }
    if reference.is_empty() {
        return Err(Error::Metric("empty BLEU reference".into()));
    }
    if candidate.is_empty() {
        log::warn!("BLEU of an empty candidate");
        return Ok(BleuScore { value: 0.0, empty_candidate: true });
    }
    let reference: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    let candidate: Vec<&str> = candidate.iter().map(AsRef::as_ref).collect();
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let (matched, total) = clipped_matches(&reference, &candidate, n);
        if matched == 0 {
            return Ok(BleuScore { value: 0.0, empty_candidate: false });
        }
        log_sum += (matched as f64 / total as f64).ln() / max_n as f64;
    }
    let length_term = (1.0 - candidate.len() as f64 / reference.len() as f64).min(0.0);
    Ok(BleuScore { value: (length_term + log_sum).exp(), empty_candidate: false })
}

fn clipped_matches(reference: &[&str], candidate: &[&str], n: usize) -> (usize, usize) {
    if candidate.len() < n {
        return (0, 0);
    }
    let mut counts: HashMap<&[&str], usize> = HashMap::new();
    if reference.len() >= n {
        for gram in reference.windows(n) {
            *counts.entry(gram).or_default() += 1;
        }
    }
    let mut matched = 0;
    for gram in candidate.windows(n) {
        if let Some(left) = counts.get_mut(gram) {
            if *left > 0 {
                *left -= 1;
                matched += 1;
            }
        }
    }
    (matched, candidate.len() + 1 - n)
}

/// Whitespace word split used for BLEU.
pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// `(bpc, bps)`: transmitted bits per source character, and source bits
/// (8 per character) per modulation symbol.
pub fn coding_rates(chars: f64, tokens: f64, bits_per_token: u32, bits_per_symbol: u32) -> Result<(f64, f64)> {
    if !(chars > 0.0 && tokens > 0.0) || bits_per_token == 0 || bits_per_symbol == 0 {
        return Err(Error::Metric("coding rates need positive counts".into()));
    }
    let symbols_per_token = bits_per_token as f64 / bits_per_symbol as f64;
    let bpc = tokens * bits_per_token as f64 / chars;
    let bps = 8.0 * chars / (tokens * symbols_per_token);
    Ok((bpc, bps))
}

/// Mean codeword length, in bits per byte, of a Huffman code built on the
/// corpus byte frequencies.
pub fn huffman_bpc<I, S>(corpus: I) -> Result<f64>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    let mut freq = [0u64; 256];
    for line in corpus {
        for &b in line.as_ref() {
            freq[b as usize] += 1;
        }
    }
    let total: u64 = freq.iter().sum();
    if total == 0 {
        return Err(Error::Metric("Huffman code over an empty corpus".into()));
    }
    let lengths = huffman_lengths(&freq);
    let bits: u64 = freq.iter().zip(&lengths).map(|(&f, &l)| f * l as u64).sum();
    Ok(bits as f64 / total as f64)
}

/// Code lengths per symbol (0 for absent symbols). A lone symbol gets 1 bit.
fn huffman_lengths(freq: &[u64]) -> Vec<u32> {
    let mut lengths = vec![0u32; freq.len()];
    // (weight, tiebreak, members)
    let mut heap: BinaryHeap<Reverse<(u64, usize, Vec<usize>)>> =
        freq.iter().enumerate().filter(|(_, &f)| f > 0).map(|(s, &f)| Reverse((f, s, vec![s]))).collect();
    if heap.len() == 1 {
        let Reverse((_, _, members)) = heap.pop().unwrap();
        lengths[members[0]] = 1;
        return lengths;
    }
    let mut next = freq.len();
    while heap.len() > 1 {
        let Reverse((wa, _, mut a)) = heap.pop().unwrap();
        let Reverse((wb, _, b)) = heap.pop().unwrap();
        for &s in a.iter().chain(&b) {
            lengths[s] += 1;
        }
        a.extend(b);
        heap.push(Reverse((wa + wb, next, a)));
        next += 1;
    }
    lengths
}

/// Aggregate results for one experiment cell.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ber: f64,
    pub ter: f64,
    /// Mean sentence BLEU keyed by maximum n-gram order.
    pub bleu: BTreeMap<usize, f64>,
    pub bpc: f64,
    pub bps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<f64>,
    pub counts: MetricCounts,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricCounts {
    pub sentences: usize,
    pub chars: usize,
    pub tokens: usize,
    pub token_errors: usize,
    pub bits: usize,
    pub bit_errors: usize,
    pub symbols: usize,
}

/// Running totals from which a [`MetricReport`] is built.
#[derive(Clone, Debug, Default)]
pub struct MetricAccumulator {
    counts: MetricCounts,
    bleu_sums: [f64; 4],
    similarity_sum: f64,
    similarity_count: usize,
}

impl MetricAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn add_sentence(
        &mut self,
        chars: usize,
        tokens: usize,
        token_errors: usize,
        bits: usize,
        bit_errors: usize,
        symbols: usize,
        bleu: [f64; 4],
    ) {
        let c = &mut self.counts;
        c.sentences += 1;
        c.chars += chars;
        c.tokens += tokens;
        c.token_errors += token_errors;
        c.bits += bits;
        c.bit_errors += bit_errors;
        c.symbols += symbols;
        for (sum, b) in self.bleu_sums.iter_mut().zip(bleu) {
            *sum += b;
        }
    }

    pub fn add_similarity(&mut self, score: f64) {
        self.similarity_sum += score;
        self.similarity_count += 1;
    }

    pub fn finish(&self, bits_per_token: u32, bits_per_symbol: u32) -> Result<MetricReport> {
        let c = &self.counts;
        if c.sentences == 0 || c.bits == 0 || c.tokens == 0 {
            return Err(Error::Metric("no sentences were accumulated".into()));
        }
        let (bpc, bps) = coding_rates(c.chars as f64, c.tokens as f64, bits_per_token, bits_per_symbol)?;
        Ok(MetricReport {
            ber: c.bit_errors as f64 / c.bits as f64,
            ter: c.token_errors as f64 / c.tokens as f64,
            bleu: (1..=4).map(|n| (n, self.bleu_sums[n - 1] / c.sentences as f64)).collect(),
            bpc,
            bps,
            similarity: (self.similarity_count > 0).then(|| self.similarity_sum / self.similarity_count as f64),
            counts: c.clone(),
        })
    }
}

/// BLEU at every order 1..=4 for one sentence pair.
pub fn bleu_all_orders(reference: &str, candidate: &str) -> Result<[f64; 4]> {
    let r = words(reference);
    let c = words(candidate);
    if r.is_empty() {
        return Err(Error::Metric("empty BLEU reference".into()));
    }
    let mut out = [0.0; 4];
    for (n, slot) in out.iter_mut().enumerate() {
        *slot = bleu(&r, &c, n + 1)?.value;
    }
    Ok(out)
}
