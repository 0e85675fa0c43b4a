//! Classical reference receivers without a prior.
//!
//! The token-level argmin here is deliberately written separately from the
//! decoder: it is the oracle that the uniform-prior decoder must reproduce.

use num_complex::Complex;

use crate::channel::{transmit_symbols, ChannelConfig, ChannelObservation};
use crate::error::{Error, Result};
use crate::modem::{hard_demodulate, modulate, symbols_per_token, Constellation};
use crate::scalar::Real;
use crate::tokenizer::{bits_to_tokens, tokens_to_bits, BitFrame, TokenId, TokenSequence};

#[derive(Clone, Debug, PartialEq)]
pub struct Utf8Outcome {
    pub sent_bits: Vec<u8>,
    pub received_bits: Vec<u8>,
    /// Raw received bytes; invalid UTF-8 is kept as-is.
    pub received_bytes: Vec<u8>,
}

impl Utf8Outcome {
    /// Display form with U+FFFD for invalid sequences.
    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.received_bytes).into_owned()
    }
}

fn byte_bits(bytes: &[u8]) -> Vec<u8> {
    bytes.iter().flat_map(|&b| (0..8).rev().map(move |k| (b >> k) & 1)).collect()
}

/// UTF-8 bytes sent with per-symbol hard decisions. The bit stream is
/// zero-padded to a whole number of symbols; padding is not counted.
pub fn utf8_hard_pipeline<T: Real>(
    text: &[u8],
    constellation: &Constellation<T>,
    cfg: &ChannelConfig,
) -> Result<Utf8Outcome> {
    if text.is_empty() {
        return Err(Error::Config("nothing to transmit".into()));
    }
    let sent_bits = byte_bits(text);
    let width = constellation.bits_per_symbol() as usize;
    let mut padded = sent_bits.clone();
    padded.resize(sent_bits.len().div_ceil(width) * width, 0);
    let symbols = constellation.map_bits(&padded)?;
    let obs = transmit_symbols(&symbols, cfg)?;
    let mut received_bits = hard_demodulate(&obs.observed, &obs.csi, constellation)?.bits().to_vec();
    received_bits.truncate(sent_bits.len());
    let received_bytes =
        received_bits.chunks_exact(8).map(|byte| byte.iter().fold(0u8, |acc, &b| (acc << 1) | b)).collect();
    Ok(Utf8Outcome { sent_bits, received_bits, received_bytes })
}

/// Minimum grouped-distance token decisions restricted to ids `< vocab_size`.
/// Ties go to the lower id.
pub fn hard_token_decode<T: Real>(
    obs: &ChannelObservation<T>,
    constellation: &Constellation<T>,
    bits_per_token: u32,
    vocab_size: usize,
) -> Result<TokenSequence> {
    let spt = symbols_per_token(bits_per_token, constellation.modulation())?;
    if !obs.observed.len().is_multiple_of(spt) || obs.csi.len() != obs.observed.len() {
        return Err(Error::Framing(format!("{} observations do not form whole tokens", obs.observed.len())));
    }
    if vocab_size == 0 || vocab_size as u64 > 1u64 << bits_per_token {
        return Err(Error::Config(format!("{vocab_size} tokens do not fit {bits_per_token}-bit codewords")));
    }
    let width = constellation.bits_per_symbol();
    let mask = (1u32 << width) - 1;
    let codewords: Vec<Vec<Complex<T>>> = (0..vocab_size as TokenId)
        .map(|id| {
            (0..spt as u32).map(|j| constellation.point((id >> (bits_per_token - (j + 1) * width)) & mask)).collect()
        })
        .collect();

    let decided = obs
        .observed
        .chunks_exact(spt)
        .zip(obs.csi.chunks_exact(spt))
        .map(|(o, h)| {
            let mut best = 0;
            let mut best_metric = T::infinity();
            for (id, word) in codewords.iter().enumerate() {
                let metric = word
                    .iter()
                    .zip(o.iter().zip(h))
                    .fold(T::zero(), |acc, (&p, (&oi, &hi))| acc + (oi - hi * p).norm_sqr());
                if metric < best_metric {
                    best_metric = metric;
                    best = id as TokenId;
                }
            }
            best
        })
        .collect();
    Ok(TokenSequence::new(decided))
}

/// Tokens through modulation, the channel, and [`hard_token_decode`].
pub fn hard_token_pipeline<T: Real>(
    tokens: &TokenSequence,
    constellation: &Constellation<T>,
    bits_per_token: u32,
    vocab_size: usize,
    cfg: &ChannelConfig,
) -> Result<TokenSequence> {
    let frame = modulate(&tokens_to_bits(tokens, bits_per_token)?, constellation)?;
    let obs = transmit_symbols(&frame.symbols, cfg)?;
    hard_token_decode(&obs, constellation, bits_per_token, vocab_size)
}

/// Per-symbol hard decisions regrouped into tokens; codewords outside the
/// vocabulary become the replacement token.
pub fn symbolwise_token_decode<T: Real>(
    obs: &ChannelObservation<T>,
    constellation: &Constellation<T>,
    bits_per_token: u32,
    vocab_size: usize,
) -> Result<TokenSequence> {
    let bits = hard_demodulate(&obs.observed, &obs.csi, constellation)?;
    let frame = BitFrame::new(bits.bits().to_vec(), bits_per_token)?;
    Ok(bits_to_tokens(&frame)?.replace_out_of_vocab(vocab_size))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modem::Modulation;

    fn noiseless(mut cfg: ChannelConfig) -> ChannelConfig {
        cfg.noiseless = true;
        cfg
    }

    #[test]
    fn utf8_noiseless_round_trip() {
        let text = "Résumé of the débat: 42 MEPs voted.".as_bytes();
        for m in [Modulation::Qpsk, Modulation::Qam8, Modulation::Qam16] {
            let c = Constellation::<f64>::new(m);
            let out = utf8_hard_pipeline(text, &c, &noiseless(ChannelConfig::rayleigh(0.0, 1, 3))).unwrap();
            assert_eq!(out.received_bytes, text);
            assert_eq!(out.sent_bits, out.received_bits);
            assert_eq!(out.text().as_bytes(), text);
        }
    }

    #[test]
    fn utf8_invalid_bytes_are_kept_raw() {
        let c = Constellation::<f64>::new(Modulation::Qam16);
        let out = utf8_hard_pipeline(b"hello world, hello", &c, &ChannelConfig::awgn(-3.0, 9)).unwrap();
        assert_eq!(out.received_bytes.len(), 18);
        assert_eq!(out.received_bits.len(), 18 * 8);
    }

    #[test]
    fn hard_token_noiseless_identity() {
        let c = Constellation::<f64>::new(Modulation::Qam8);
        let tokens = TokenSequence::new(vec![0, 1, 500, 999, 3]);
        let out = hard_token_pipeline(&tokens, &c, 15, 1000, &noiseless(ChannelConfig::awgn(0.0, 0))).unwrap();
        assert_eq!(out, tokens);
    }

    #[test]
    fn hard_token_stays_in_vocab() {
        let c = Constellation::<f64>::new(Modulation::Qam16);
        let tokens = TokenSequence::new(vec![7; 50]);
        let out = hard_token_pipeline(&tokens, &c, 16, 10, &ChannelConfig::awgn(-5.0, 4)).unwrap();
        assert!(out.ids().iter().all(|&id| id < 10));
    }

    #[test]
    fn symbolwise_replaces_invalid_codewords() {
        let c = Constellation::<f64>::new(Modulation::Qpsk);
        // Label 11 twice decodes to id 15 with m = 4; vocabulary of 10.
        let p = c.point(3);
        let obs = ChannelObservation { observed: vec![p, p], csi: vec![Complex::new(1.0, 0.0); 2], n0: 0.1 };
        assert_eq!(symbolwise_token_decode(&obs, &c, 4, 10).unwrap().ids(), &[0]);
        assert_eq!(symbolwise_token_decode(&obs, &c, 4, 16).unwrap().ids(), &[15]);
    }
}
