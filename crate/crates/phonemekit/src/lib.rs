//! Phoneme recognition toolkit for consonant-vowel syllable recordings.
//!
//! The pipeline: WAV ingest and conditioning ([`audio_io`]), spectral
//! transforms ([`dsp`]), noise-fingerprint subtraction and consonant/vowel
//! segmentation ([`denoise`]), fixed-size feature images ([`features`]),
//! a from-scratch CNN engine ([`nn`]) with the phoneme classifier
//! architecture ([`phoneme_net`]), classification metrics ([`eval`]), and
//! corpus tooling ([`dataset`]).

pub mod audio_io;
pub mod cli;
pub mod dataset;
pub mod denoise;
pub mod dsp;
pub mod eval;
pub mod features;
pub mod nn;
pub mod phoneme_net;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed file: {0}")]
    Format(String),
    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),
    #[error("unsupported version: expected {expected}, found {found}")]
    UnsupportedVersion { expected: u32, found: u32 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("insufficient input: {0}")]
    InsufficientInput(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("no speech detected: {0}")]
    NoSpeech(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;
