use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("byte 0x{byte:02x} at offset {offset} is not in the vocabulary alphabet")]
    Encoding { offset: usize, byte: u8 },

    #[error("token id {id} is not in a vocabulary of size {size}")]
    InvalidToken { id: u32, size: usize },

    #[error("token id {id} does not fit in {bits} bits")]
    Range { id: u32, bits: u32 },

    #[error("framing error: {0}")]
    Framing(String),

    #[error("equalization error: zero channel coefficient at symbol {0}")]
    Equalization(usize),

    #[error("prior unavailable: {0}")]
    PriorUnavailable(String),

    #[error("exhaustive search over {0} sequences exceeds the oracle limit")]
    OracleSize(u128),

    #[error("metric error: {0}")]
    Metric(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
