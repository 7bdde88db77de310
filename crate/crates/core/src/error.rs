use std::io;

use thiserror::Error;

/// Errors produced while building, writing, opening or searching an index.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dataset too small: {0}")]
    DatasetTooSmall(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("page too small for one vector: {0}")]
    PageTooSmall(String),

    #[error("serialized page {page} is {len} bytes, larger than the {page_size}-byte page")]
    PageOverflow {
        page: u32,
        len: usize,
        page_size: usize,
    },

    #[error("no compressed vector available for neighbor {0}")]
    MissingCode(u32),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("empty routing sample")]
    EmptySample,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
