//! One-sentence-per-line corpora.

use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_MIN_CHARS: usize = 32;
pub const DEFAULT_MAX_CHARS: usize = 640;

/// Drops control characters and collapses whitespace runs to one space.
pub fn clean_line(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    for word in line.split_whitespace() {
        let word: String = word.chars().filter(|c| !c.is_control()).collect();
        if word.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&word);
    }
    out
}

/// Cleaned lines whose character count lies in `[min_chars, max_chars]`,
/// in file order.
pub fn load_corpus(path: &Path, min_chars: usize, max_chars: usize) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    let kept = filter_lines(text.lines(), min_chars, max_chars);
    if kept.is_empty() {
        return Err(Error::Config(format!(
            "no sentence of {min_chars}..={max_chars} characters in {}",
            path.display()
        )));
    }
    Ok(kept)
}

pub fn filter_lines<'a, I>(lines: I, min_chars: usize, max_chars: usize) -> Vec<String>
where
    I: IntoIterator<Item = &'a str>,
{
    lines.into_iter().map(clean_line).filter(|s| (min_chars..=max_chars).contains(&s.chars().count())).collect()
}

/// Indices of a seeded sample of `count` items out of `len`, ascending.
pub fn sample_indices(len: usize, count: usize, seed: u64) -> Vec<usize> {
    if count >= len {
        return (0..len).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, len, count).into_vec();
    picked.sort_unstable();
    picked
}

/// Splits sentences into a seeded test sample and the remaining training lines.
pub fn split_corpus(sentences: &[String], test_count: usize, seed: u64) -> (Vec<String>, Vec<String>) {
    let picked = sample_indices(sentences.len(), test_count, seed);
    let mut is_test = vec![false; sentences.len()];
    for &i in &picked {
        is_test[i] = true;
    }
    let mut test = Vec::with_capacity(picked.len());
    let mut train = Vec::with_capacity(sentences.len() - picked.len());
    for (s, t) in sentences.iter().zip(is_test) {
        if t {
            test.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    (test, train)
}
