//! Flat-fading channel simulation: `o_i = h_i * s_i + n_i`.
//!
//! SNR is Es/N0 per complex symbol with Es = 1, so `N0 = 10^(-snr/10)` and
//! each real dimension of the noise has variance `N0 / 2`. The receiver is
//! given the true `h_i` (perfect CSI).
//!
//! Randomness comes from ChaCha8 seeded with the config seed. Noise is drawn
//! from stream 0 and fading coefficients from stream 1, so the noise sequence
//! does not depend on whether fading is drawn.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modem::SymbolFrame;
use crate::scalar::Real;

/// N0 used by noiseless mode.
pub const NOISELESS_N0: f64 = 1e-30;

const NOISE_STREAM: u64 = 0;
const FADING_STREAM: u64 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Awgn,
    Rayleigh,
}

impl ChannelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ChannelKind::Awgn => "awgn",
            ChannelKind::Rayleigh => "rayleigh",
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "awgn" => Ok(ChannelKind::Awgn),
            "rayleigh" => Ok(ChannelKind::Rayleigh),
            other => Err(Error::Config(format!("unknown channel {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    pub snr_db: f64,
    pub seed: u64,
    /// Symbols sharing one fading coefficient.
    pub block_fading_len: usize,
    /// Skip noise entirely and report `N0 = 1e-30`.
    #[serde(default)]
    pub noiseless: bool,
    /// Test hook: Rayleigh draws are replaced by `h = 1`.
    #[serde(default)]
    pub unit_gain: bool,
}

impl ChannelConfig {
    pub fn awgn(snr_db: f64, seed: u64) -> Self {
        Self { kind: ChannelKind::Awgn, snr_db, seed, block_fading_len: 1, noiseless: false, unit_gain: false }
    }

    pub fn rayleigh(snr_db: f64, seed: u64, block_fading_len: usize) -> Self {
        Self { kind: ChannelKind::Rayleigh, snr_db, seed, block_fading_len, noiseless: false, unit_gain: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.snr_db.is_finite() {
            return Err(Error::Config(format!("snr_db must be finite, got {}", self.snr_db)));
        }
        if self.block_fading_len == 0 {
            return Err(Error::Config("block_fading_len must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n0(&self) -> f64 {
        if self.noiseless {
            NOISELESS_N0
        } else {
            10f64.powf(-self.snr_db / 10.0)
        }
    }
}

/// What the receiver sees: observations, channel gains, and N0.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelObservation<T> {
    pub observed: Vec<Complex<T>>,
    pub csi: Vec<Complex<T>>,
    pub n0: T,
}

impl<T> ChannelObservation<T> {
    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Passes symbols through the configured channel.
pub fn transmit_symbols<T: Real>(symbols: &[Complex<T>], cfg: &ChannelConfig) -> Result<ChannelObservation<T>> {
    cfg.validate()?;
    if symbols.is_empty() {
        return Err(Error::Framing("cannot transmit an empty frame".into()));
    }
    let n0 = cfg.n0();

    let csi: Vec<Complex<T>> = match cfg.kind {
        ChannelKind::Rayleigh if !cfg.unit_gain => {
            let mut fading = rng(cfg.seed, FADING_STREAM);
            let scale = 0.5f64.sqrt();
            let blocks = symbols.len().div_ceil(cfg.block_fading_len);
            (0..blocks)
                .flat_map(|_| {
                    let re: f64 = StandardNormal.sample(&mut fading);
                    let im: f64 = StandardNormal.sample(&mut fading);
                    std::iter::repeat_n(Complex::new(T::of(re * scale), T::of(im * scale)), cfg.block_fading_len)
                })
                .take(symbols.len())
                .collect()
        }
        _ => vec![Complex::new(T::one(), T::zero()); symbols.len()],
    };

    let mut observed: Vec<Complex<T>> = symbols.iter().zip(&csi).map(|(&s, &h)| h * s).collect();
    if !cfg.noiseless {
        let mut noise = rng(cfg.seed, NOISE_STREAM);
        let sigma = (n0 / 2.0).sqrt();
        for o in &mut observed {
            let re: f64 = StandardNormal.sample(&mut noise);
            let im: f64 = StandardNormal.sample(&mut noise);
            *o = *o + Complex::new(T::of(re * sigma), T::of(im * sigma));
        }
    }
    Ok(ChannelObservation { observed, csi, n0: T::of(n0) })
}

pub fn transmit<T: Real>(frame: &SymbolFrame<T>, cfg: &ChannelConfig) -> Result<ChannelObservation<T>> {
    transmit_symbols(&frame.symbols, cfg)
}

/// Score-relevant part of `ln P(o | h p)`: `-|o - h p|^2`. The Gaussian
/// normalization and the `1/N0` factor are constant across candidates.
pub fn symbol_loglik<T: Real>(o: Complex<T>, h: Complex<T>, p: Complex<T>, _n0: T) -> T {
    -(o - h * p).norm_sqr()
}
