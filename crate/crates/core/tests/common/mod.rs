#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use semcom::bridge::{BridgeRequest, BridgeResponse, RequestBody, PROTOCOL_VERSION};

use semcom::harness::config::ExperimentConfig;
use semcom::harness::synth::synth_corpus;

pub fn write_corpus(dir: &Path, count: usize, seed: u64) -> PathBuf {
    let path = dir.join("corpus.txt");
    let mut text = synth_corpus(count, seed).join("\n");
    text.push('\n');
    std::fs::write(&path, text).unwrap();
    path
}

pub fn base_config(dir: &Path, corpus: PathBuf) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!(
        r#"
corpus = {corpus:?}
sentences = 5
seed = 11
output_dir = {out:?}
constellation = "16qam"
bits_per_token = 16
snr_grid = [4.0]
beam_grid = [4]

[vocab]
target_size = 512

[prior]
kind = "ngram"
"#,
        out = dir.join("out"),
    ))
    .unwrap()
}

/// Clipped-precision BLEU computed from joined n-gram strings, with the
/// brevity term `min(1 - c/r, 0)`.
pub fn oracle_bleu(reference: &str, candidate: &str, max_n: usize) -> f64 {
    use std::collections::BTreeMap;
    let r: Vec<&str> = reference.split_whitespace().collect();
    let c: Vec<&str> = candidate.split_whitespace().collect();
    if c.is_empty() {
        return 0.0;
    }
    let grams = |ws: &[&str], n: usize| {
        let mut m: BTreeMap<String, i64> = BTreeMap::new();
        for i in 0..ws.len().saturating_sub(n - 1) {
            *m.entry(ws[i..i + n].join("\u{1f}")).or_default() += 1;
        }
        m
    };
    let mut log_p = 0.0;
    for n in 1..=max_n {
        let cg = grams(&c, n);
        let rg = grams(&r, n);
        let total: i64 = cg.values().sum();
        let clipped: i64 = cg.iter().map(|(g, k)| (*k).min(*rg.get(g).unwrap_or(&0))).sum();
        if clipped == 0 {
            return 0.0;
        }
        log_p += (clipped as f64 / total as f64).ln() / max_n as f64;
    }
    ((1.0 - c.len() as f64 / r.len() as f64).min(0.0) + log_p).exp()
}

pub fn random_sentence(rng: &mut impl rand::Rng, min: usize, max: usize) -> String {
    const WORDS: [&str; 8] = ["the", "council", "must", "act", "now", "and", "we", "agree"];
    let n = rng.random_range(min..=max);
    (0..n).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

/// Answers logprobs with a softmax that favours `last + 1`, and similarity
/// with the cosine of letter-count vectors. Stops answering after
/// `budget` requests.
pub fn mock_service(vocab: usize, budget: usize) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let served = Arc::new(AtomicUsize::new(0));
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let served = served.clone();
            thread::spawn(move || {
                let mut writer = stream.try_clone().unwrap();
                for line in BufReader::new(stream).lines() {
                    let Ok(line) = line else { return };
                    if served.fetch_add(1, Ordering::SeqCst) >= budget {
                        return;
                    }
                    let req: BridgeRequest = serde_json::from_str(&line).unwrap();
                    let mut resp = BridgeResponse {
                        request_id: req.request_id,
                        model_name: Some("mock".into()),
                        ..Default::default()
                    };
                    if req.version != PROTOCOL_VERSION {
                        resp.error = Some("unsupported version".into());
                    } else {
                        match req.body {
                            RequestBody::Logprobs { context_ids } => {
                                let favoured = context_ids.last().map_or(0, |&w| (w as usize + 1) % vocab);
                                let logits: Vec<f64> =
                                    (0..vocab).map(|w| if w == favoured { 3.0 } else { 0.0 }).collect();
                                let z = logits.iter().map(|l| l.exp()).sum::<f64>().ln();
                                resp.logprobs = Some(logits.iter().map(|l| l - z).collect());
                            }
                            RequestBody::Similarity { pair } => {
                                let vec = |s: &str| {
                                    let mut v = [0f64; 26];
                                    for b in s.bytes().filter(u8::is_ascii_lowercase) {
                                        v[(b - b'a') as usize] += 1.0;
                                    }
                                    v
                                };
                                let (a, b) = (vec(&pair[0]), vec(&pair[1]));
                                let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
                                let norm = |v: &[f64; 26]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
                                resp.score = Some(dot / (norm(&a) * norm(&b)).max(1e-300));
                            }
                        }
                    }
                    let mut out = serde_json::to_string(&resp).unwrap();
                    out.push('\n');
                    if writer.write_all(out.as_bytes()).is_err() {
                        return;
                    }
                }
            });
        }
    });
    addr
}
