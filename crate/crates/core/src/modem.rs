//! QAM/PSK constellations and the multi-symbol token mapping.
//!
//! All constellations have unit average energy. QPSK and 16-QAM carry a Gray
//! labeling. 8-QAM is the 4x2 rectangular grid (I in {±1, ±3}, Q in {±1},
//! scaled by 1/sqrt(6)); its first two label bits select the I level through
//! the same Gray map as 16-QAM and the third bit selects the sign of Q, so it
//! is Gray labeled as well.
//!
//! Labels are read MSB-first from each `bits_per_symbol` group.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tokenizer::{tokens_to_bits, BitFrame, TokenId, TokenSequence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modulation {
    #[serde(rename = "qpsk")]
    Qpsk,
    #[serde(rename = "8qam")]
    Qam8,
    #[serde(rename = "16qam")]
    Qam16,
}

impl Modulation {
    pub fn bits_per_symbol(self) -> u32 {
        match self {
            Modulation::Qpsk => 2,
            Modulation::Qam8 => 3,
            Modulation::Qam16 => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modulation::Qpsk => "qpsk",
            Modulation::Qam8 => "8qam",
            Modulation::Qam16 => "16qam",
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qpsk" => Ok(Modulation::Qpsk),
            "8qam" => Ok(Modulation::Qam8),
            "16qam" => Ok(Modulation::Qam16),
            other => Err(Error::Config(format!("unknown constellation {other:?}"))),
        }
    }
}

/// 2-bit Gray code to 4-PAM level: 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3.
fn gray_pam4(bits: u32) -> f64 {
    match bits & 0b11 {
        0b00 => -3.0,
        0b01 => -1.0,
        0b11 => 1.0,
        _ => 3.0,
    }
}

#[derive(Clone, Debug)]
pub struct Constellation<T> {
    modulation: Modulation,
    /// Indexed by label.
    points: Vec<Complex<T>>,
}

/// Label to unscaled (I, Q) position.
type Placement = fn(u32) -> (f64, f64);

impl<T: Real> Constellation<T> {
    pub fn new(modulation: Modulation) -> Self {
        let bits = modulation.bits_per_symbol();
        let (scale, place): (f64, Placement) = match modulation {
            Modulation::Qpsk => (0.5f64.sqrt(), |l| {
                let axis = |b: u32| if b == 0 { 1.0 } else { -1.0 };
                (axis(l >> 1 & 1), axis(l & 1))
            }),
            Modulation::Qam8 => ((1.0f64 / 6.0).sqrt(), |l| (gray_pam4(l >> 1), if l & 1 == 0 { 1.0 } else { -1.0 })),
            Modulation::Qam16 => (0.1f64.sqrt(), |l| (gray_pam4(l >> 2), gray_pam4(l))),
        };
        let points = (0..1u32 << bits)
            .map(|label| {
                let (re, im) = place(label);
                Complex::new(T::of(re * scale), T::of(im * scale))
            })
            .collect();
        Self { modulation, points }
    }

    pub fn modulation(&self) -> Modulation {
        self.modulation
    }

    pub fn bits_per_symbol(&self) -> u32 {
        self.modulation.bits_per_symbol()
    }

    /// Point carrying `label`.
    pub fn point(&self, label: u32) -> Complex<T> {
        self.points[label as usize]
    }

    pub fn points(&self) -> &[Complex<T>] {
        &self.points
    }

    /// Maps a flat bit slice onto symbols; the length must divide evenly.
    pub fn map_bits(&self, bits: &[u8]) -> Result<Vec<Complex<T>>> {
        let width = self.bits_per_symbol() as usize;
        if !bits.len().is_multiple_of(width) {
            return Err(Error::Framing(format!("{} bits cannot be split into {width}-bit symbols", bits.len())));
        }
        Ok(bits.chunks_exact(width).map(|g| self.point(g.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32))).collect())
    }

    /// Nearest point to `observed / h` in the sense of `|o - h p|^2`; ties
    /// resolve to the lower label.
    pub fn nearest_label(&self, observed: Complex<T>, h: Complex<T>) -> u32 {
        let mut best = 0;
        let mut best_dist = T::infinity();
        for (label, &p) in self.points.iter().enumerate() {
            let d = (observed - h * p).norm_sqr();
            if d < best_dist {
                best_dist = d;
                best = label as u32;
            }
        }
        best
    }
}

/// Number of symbols one `bits_per_token`-bit token occupies.
pub fn symbols_per_token(bits_per_token: u32, modulation: Modulation) -> Result<usize> {
    let per_symbol = modulation.bits_per_symbol();
    if bits_per_token == 0 || !bits_per_token.is_multiple_of(per_symbol) {
        return Err(Error::Framing(format!("{bits_per_token}-bit tokens do not split into {modulation} symbols")));
    }
    Ok((bits_per_token / per_symbol) as usize)
}

/// Modulated token frame. Token `i` owns symbols `[i*spt, (i+1)*spt)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolFrame<T> {
    pub symbols: Vec<Complex<T>>,
    pub symbols_per_token: usize,
}

impl<T> SymbolFrame<T> {
    pub fn token_count(&self) -> usize {
        self.symbols.len() / self.symbols_per_token
    }
}

pub fn modulate<T: Real>(frame: &BitFrame, constellation: &Constellation<T>) -> Result<SymbolFrame<T>> {
    let spt = symbols_per_token(frame.bits_per_token(), constellation.modulation())?;
    Ok(SymbolFrame { symbols: constellation.map_bits(frame.bits())?, symbols_per_token: spt })
}

/// Symbols of a single token id.
pub fn token_symbols<T: Real>(id: TokenId, constellation: &Constellation<T>, bits: u32) -> Result<Vec<Complex<T>>> {
    let frame = tokens_to_bits(&TokenSequence::new(vec![id]), bits)?;
    Ok(modulate(&frame, constellation)?.symbols)
}

/// Per-id symbol groups for ids `0..count`, stored contiguously.
#[derive(Clone, Debug)]
pub struct TokenSymbolTable<T> {
    symbols: Vec<Complex<T>>,
    symbols_per_token: usize,
    bits_per_token: u32,
    modulation: Modulation,
}

impl<T: Real> TokenSymbolTable<T> {
    pub fn new(constellation: &Constellation<T>, bits_per_token: u32, count: usize) -> Result<Self> {
        let spt = symbols_per_token(bits_per_token, constellation.modulation())?;
        if count as u64 > 1u64 << bits_per_token {
            return Err(Error::Range { id: (count - 1) as TokenId, bits: bits_per_token });
        }
        let ids = TokenSequence::new((0..count as TokenId).collect());
        let frame = tokens_to_bits(&ids, bits_per_token)?;
        Ok(Self {
            symbols: constellation.map_bits(frame.bits())?,
            symbols_per_token: spt,
            bits_per_token,
            modulation: constellation.modulation(),
        })
    }

    pub fn len(&self) -> usize {
        self.symbols.len() / self.symbols_per_token
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols_per_token(&self) -> usize {
        self.symbols_per_token
    }

    pub fn bits_per_token(&self) -> u32 {
        self.bits_per_token
    }

    pub fn modulation(&self) -> Modulation {
        self.modulation
    }

    pub fn get(&self, id: TokenId) -> &[Complex<T>] {
        let start = id as usize * self.symbols_per_token;
        &self.symbols[start..start + self.symbols_per_token]
    }
}

/// Symbol-by-symbol minimum-distance decisions given the channel gains.
pub fn hard_demodulate<T: Real>(
    observed: &[Complex<T>],
    csi: &[Complex<T>],
    constellation: &Constellation<T>,
) -> Result<BitFrame> {
    if observed.len() != csi.len() {
        return Err(Error::Framing(format!("{} observations but {} channel coefficients", observed.len(), csi.len())));
    }
    let width = constellation.bits_per_symbol();
    let mut bits = Vec::with_capacity(observed.len() * width as usize);
    for (i, (&o, &h)) in observed.iter().zip(csi).enumerate() {
        if h.norm_sqr() == T::zero() {
            return Err(Error::Equalization(i));
        }
        let label = constellation.nearest_label(o, h);
        bits.extend((0..width).rev().map(|k| ((label >> k) & 1) as u8));
    }
    BitFrame::new(bits, width)
}
