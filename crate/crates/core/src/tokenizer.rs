//! Byte-level BPE tokenizer and fixed-width token framing.
//!
//! Text is split into chunks that start at a space following a non-space
//! byte, so merges never cross word boundaries while leading spaces stay
//! attached to the following word. Decoding is plain concatenation, which
//! makes `decode(encode(x)) == x` for any text over the training alphabet.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

/// Replacement emitted for wire codewords that do not name a vocabulary entry.
pub const REPLACEMENT_TOKEN: TokenId = 0;

const VOCAB_FORMAT_VERSION: u32 = 1;

/// Smallest `m` with `2^m >= size` (and at least one bit).
pub fn bits_for(size: usize) -> u32 {
    let mut bits = 1;
    while (1usize << bits) < size {
        bits += 1;
    }
    bits
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<Vec<u8>>,
    /// `(left, right, result)`; the position in the list is the merge rank.
    merges: Vec<(TokenId, TokenId, TokenId)>,
    base: [Option<TokenId>; 256],
    ranks: HashMap<(TokenId, TokenId), (usize, TokenId)>,
    bits: u32,
}

impl Vocabulary {
    fn from_parts(entries: Vec<Vec<u8>>, merges: Vec<(TokenId, TokenId, TokenId)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Format("vocabulary has no entries".into()));
        }
        let mut seen = HashSet::new();
        let mut base = [None; 256];
        for (id, entry) in entries.iter().enumerate() {
            if entry.is_empty() {
                return Err(Error::Format(format!("entry {id} is empty")));
            }
            if !seen.insert(entry.as_slice()) {
                return Err(Error::Format(format!("entry {id} is a duplicate")));
            }
            if entry.len() == 1 {
                base[entry[0] as usize] = Some(id as TokenId);
            }
        }
        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, &(l, r, out)) in merges.iter().enumerate() {
            for id in [l, r, out] {
                if id as usize >= entries.len() {
                    return Err(Error::Format(format!("merge {rank} names unknown id {id}")));
                }
            }
            let mut joined = entries[l as usize].clone();
            joined.extend_from_slice(&entries[r as usize]);
            if joined != entries[out as usize] {
                return Err(Error::Format(format!("merge {rank} does not produce its entry")));
            }
            ranks.entry((l, r)).or_insert((rank, out));
        }
        let bits = bits_for(entries.len());
        Ok(Self { entries, merges, base, ranks, bits })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Bits needed to address every entry.
    pub fn bits_per_token(&self) -> u32 {
        self.bits
    }

    /// Context-only sentinel the priors condition on at sentence start.
    /// It is one past the last entry, so it is never a candidate token.
    pub fn bos_id(&self) -> TokenId {
        self.entries.len() as TokenId
    }

    pub fn entry(&self, id: TokenId) -> Option<&[u8]> {
        self.entries.get(id as usize).map(Vec::as_slice)
    }

    pub fn entries(&self) -> &[Vec<u8>] {
        &self.entries
    }

    pub fn merges(&self) -> &[(TokenId, TokenId, TokenId)] {
        &self.merges
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = VocabFile {
            version: VOCAB_FORMAT_VERSION,
            m: self.bits,
            entries: self.entries.iter().map(hex::encode).collect(),
            merges: self.merges.iter().map(|&(l, r, o)| [l, r, o]).collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: VocabFile = serde_json::from_str(text)?;
        if doc.version != VOCAB_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported vocabulary version {}", doc.version)));
        }
        let entries = doc
            .entries
            .iter()
            .map(|e| hex::decode(e).map_err(|err| Error::Format(format!("bad entry {e:?}: {err}"))))
            .collect::<Result<Vec<_>>>()?;
        let merges = doc.merges.into_iter().map(|[l, r, o]| (l, r, o)).collect();
        let vocab = Self::from_parts(entries, merges)?;
        if vocab.bits != doc.m {
            return Err(Error::Format(format!("m = {} does not match {} entries", doc.m, vocab.len())));
        }
        Ok(vocab)
    }
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    version: u32,
    m: u32,
    entries: Vec<String>,
    merges: Vec<[TokenId; 3]>,
}

/// Transmitted message: a list of token ids.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence {
    ids: Vec<TokenId>,
}

impl TokenSequence {
    pub fn new(ids: Vec<TokenId>) -> Self {
        Self { ids }
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn into_ids(self) -> Vec<TokenId> {
        self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Positions whose id names no entry of a vocabulary of `size` entries.
    pub fn out_of_vocab(&self, size: usize) -> Vec<usize> {
        self.ids.iter().enumerate().filter(|(_, &id)| id as usize >= size).map(|(i, _)| i).collect()
    }

    /// Maps every out-of-vocabulary id to [`REPLACEMENT_TOKEN`].
    pub fn replace_out_of_vocab(mut self, size: usize) -> Self {
        for id in &mut self.ids {
            if *id as usize >= size {
                *id = REPLACEMENT_TOKEN;
            }
        }
        self
    }
}

impl From<Vec<TokenId>> for TokenSequence {
    fn from(ids: Vec<TokenId>) -> Self {
        Self::new(ids)
    }
}

/// Flat bit list (one `0`/`1` byte per bit) made of fixed-width groups.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitFrame {
    bits: Vec<u8>,
    bits_per_token: u32,
}

impl BitFrame {
    pub fn new(bits: Vec<u8>, bits_per_token: u32) -> Result<Self> {
        check_width(bits_per_token)?;
        if !bits.len().is_multiple_of(bits_per_token as usize) {
            return Err(Error::Framing(format!("{} bits is not a multiple of {bits_per_token}", bits.len())));
        }
        if let Some(pos) = bits.iter().position(|&b| b > 1) {
            return Err(Error::Framing(format!("bit {pos} is neither 0 nor 1")));
        }
        Ok(Self { bits, bits_per_token })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn bits_per_token(&self) -> u32 {
        self.bits_per_token
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.bits.len() / self.bits_per_token as usize
    }
}

fn check_width(bits: u32) -> Result<()> {
    if (1..=31).contains(&bits) {
        Ok(())
    } else {
        Err(Error::Config(format!("bits per token must be in 1..=31, got {bits}")))
    }
}

/// Packs ids into `bits`-wide big-endian groups.
pub fn tokens_to_bits(tokens: &TokenSequence, bits: u32) -> Result<BitFrame> {
    check_width(bits)?;
    let mut out = Vec::with_capacity(tokens.len() * bits as usize);
    for &id in tokens.ids() {
        if (id as u64) >> bits != 0 {
            return Err(Error::Range { id, bits });
        }
        out.extend((0..bits).rev().map(|k| ((id >> k) & 1) as u8));
    }
    Ok(BitFrame { bits: out, bits_per_token: bits })
}

/// Inverse of [`tokens_to_bits`]. Ids outside the vocabulary are returned
/// as-is; see [`TokenSequence::out_of_vocab`].
pub fn bits_to_tokens(frame: &BitFrame) -> Result<TokenSequence> {
    let width = frame.bits_per_token as usize;
    if !frame.bits.len().is_multiple_of(width) {
        return Err(Error::Framing(format!("{} bits is not a multiple of {width}", frame.bits.len())));
    }
    let ids =
        frame.bits.chunks_exact(width).map(|group| group.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32)).collect();
    Ok(TokenSequence::new(ids))
}

/// Splits text into pre-tokenization chunks. A new chunk starts at every
/// space that follows a non-space byte.
pub(crate) fn chunks(text: &[u8]) -> impl Iterator<Item = (usize, &[u8])> + '_ {
    let mut start = 0;
    std::iter::from_fn(move || {
        if start >= text.len() {
            return None;
        }
        let mut end = start + 1;
        while end < text.len() && !(text[end] == b' ' && text[end - 1] != b' ') {
            end += 1;
        }
        let chunk = (start, &text[start..end]);
        start = end;
        Some(chunk)
    })
}

/// Trains a byte-level BPE vocabulary of at most `target_size` entries.
///
/// The base alphabet is the set of bytes seen in the corpus. Each round
/// merges the most frequent adjacent pair; ties go to the pair whose
/// `(left bytes, right bytes)` is lexicographically smallest. Training stops
/// at `target_size` entries or when no pair occurs twice.
pub fn train_vocabulary<I, S>(corpus: I, target_size: usize) -> Result<Vocabulary>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    let mut chunk_counts: BTreeMap<Vec<u8>, u64> = BTreeMap::new();
    let mut alphabet = [false; 256];
    for line in corpus {
        for (_, chunk) in chunks(line.as_ref()) {
            for &b in chunk {
                alphabet[b as usize] = true;
            }
            *chunk_counts.entry(chunk.to_vec()).or_default() += 1;
        }
    }
    if chunk_counts.is_empty() {
        return Err(Error::Config("training corpus is empty".into()));
    }
    let alphabet_size = alphabet.iter().filter(|&&seen| seen).count();
    if target_size < alphabet_size {
        return Err(Error::Config(format!(
            "target vocabulary size {target_size} is below the corpus alphabet size {alphabet_size}"
        )));
    }

    let mut entries: Vec<Vec<u8>> = Vec::with_capacity(target_size);
    let mut base = [0 as TokenId; 256];
    for b in 0..=255u8 {
        if alphabet[b as usize] {
            base[b as usize] = entries.len() as TokenId;
            entries.push(vec![b]);
        }
    }
    let mut index: HashMap<Vec<u8>, TokenId> =
        entries.iter().enumerate().map(|(i, e)| (e.clone(), i as TokenId)).collect();

    let mut words: Vec<(Vec<TokenId>, i64)> = chunk_counts
        .into_iter()
        .map(|(chunk, n)| (chunk.iter().map(|&b| base[b as usize]).collect(), n as i64))
        .collect();

    let mut pair_counts: HashMap<(TokenId, TokenId), i64> = HashMap::new();
    let mut occurs_in: HashMap<(TokenId, TokenId), HashSet<usize>> = HashMap::new();
    for (w, (symbols, n)) in words.iter().enumerate() {
        for pair in symbols.windows(2) {
            let key = (pair[0], pair[1]);
            *pair_counts.entry(key).or_default() += n;
            occurs_in.entry(key).or_default().insert(w);
        }
    }

    let mut merges = Vec::new();
    while entries.len() < target_size {
        let best = pair_counts
            .iter()
            .filter(|(_, &c)| c >= 2)
            .max_by(|(a, ca), (b, cb)| {
                ca.cmp(cb).then_with(|| {
                    let ka = (&entries[a.0 as usize], &entries[a.1 as usize]);
                    let kb = (&entries[b.0 as usize], &entries[b.1 as usize]);
                    kb.cmp(&ka)
                })
            })
            .map(|(&pair, _)| pair);
        let Some((left, right)) = best else { break };

        let mut joined = entries[left as usize].clone();
        joined.extend_from_slice(&entries[right as usize]);
        let merged = match index.get(&joined) {
            Some(&id) => id,
            None => {
                let id = entries.len() as TokenId;
                index.insert(joined.clone(), id);
                entries.push(joined);
                id
            }
        };
        merges.push((left, right, merged));

        let mut affected: Vec<usize> = occurs_in.remove(&(left, right)).unwrap_or_default().into_iter().collect();
        affected.sort_unstable();
        for w in affected {
            let (symbols, n) = &mut words[w];
            for pair in symbols.windows(2) {
                let key = (pair[0], pair[1]);
                if let Some(c) = pair_counts.get_mut(&key) {
                    *c -= *n;
                }
            }
            *symbols = merge_pair(symbols, left, right, merged);
            for pair in symbols.windows(2) {
                let key = (pair[0], pair[1]);
                *pair_counts.entry(key).or_default() += *n;
                occurs_in.entry(key).or_default().insert(w);
            }
        }
        pair_counts.retain(|_, c| *c > 0);
    }

    Vocabulary::from_parts(entries, merges)
}

fn merge_pair(symbols: &[TokenId], left: TokenId, right: TokenId, merged: TokenId) -> Vec<TokenId> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
            out.push(merged);
            i += 2;
        } else {
            out.push(symbols[i]);
            i += 1;
        }
    }
    out
}

/// Segments `text` by applying merges in rank order within each chunk.
pub fn encode(text: &[u8], vocab: &Vocabulary) -> Result<TokenSequence> {
    let mut ids = Vec::with_capacity(text.len() / 2);
    for (offset, chunk) in chunks(text) {
        let mut symbols = chunk
            .iter()
            .enumerate()
            .map(|(i, &byte)| vocab.base[byte as usize].ok_or(Error::Encoding { offset: offset + i, byte }))
            .collect::<Result<Vec<_>>>()?;
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|p| vocab.ranks.get(&(p[0], p[1])).map(|&(rank, out)| (rank, p[0], p[1], out)))
                .min();
            let Some((_, left, right, out)) = best else { break };
            symbols = merge_pair(&symbols, left, right, out);
        }
        ids.extend(symbols);
    }
    Ok(TokenSequence::new(ids))
}

/// Concatenates entry bytes.
pub fn decode(tokens: &TokenSequence, vocab: &Vocabulary) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for &id in tokens.ids() {
        let entry = vocab.entry(id).ok_or(Error::InvalidToken { id, size: vocab.len() })?;
        out.extend_from_slice(entry);
    }
    Ok(out)
}
