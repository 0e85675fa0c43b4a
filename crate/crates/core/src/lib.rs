//! Token-level semantic communication over noisy channels.
//!
//! Text is split into byte-level BPE tokens, each token is packed into a
//! fixed-width bit frame and mapped to QAM/PSK symbols, the symbols pass an
//! AWGN or Rayleigh channel, and a beam-search MAP decoder combines the
//! channel likelihood with a language-model prior to recover the tokens.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar for the common cases. The harness runs in `f64`.

pub mod baselines;
pub mod bridge;
pub mod channel;
pub mod decoder;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod modem;
pub mod prior;
pub mod scalar;
pub mod tokenizer;

pub use channel::{ChannelConfig, ChannelKind};
pub use error::{Error, Result};
pub use modem::Modulation;
pub use prior::{Prior, PriorKind, TokenPrior};
pub use scalar::Real;
pub use tokenizer::{TokenId, TokenSequence, Vocabulary};

pub type Constellation64 = modem::Constellation<f64>;
pub type Constellation32 = modem::Constellation<f32>;
pub type SymbolFrame64 = modem::SymbolFrame<f64>;
pub type SymbolFrame32 = modem::SymbolFrame<f32>;
pub type TokenSymbolTable64 = modem::TokenSymbolTable<f64>;
pub type TokenSymbolTable32 = modem::TokenSymbolTable<f32>;
pub type ChannelObservation64 = channel::ChannelObservation<f64>;
pub type ChannelObservation32 = channel::ChannelObservation<f32>;
pub type DecodeConfig64 = decoder::DecodeConfig<f64>;
pub type DecodeConfig32 = decoder::DecodeConfig<f32>;
pub type DecodeResult64 = decoder::DecodeResult<f64>;
pub type DecodeResult32 = decoder::DecodeResult<f32>;
pub type MapDecoder64<'a> = decoder::MapDecoder<'a, f64>;
pub type MapDecoder32<'a> = decoder::MapDecoder<'a, f32>;
