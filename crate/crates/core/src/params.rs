//! Shared protocol parameters.
//!
//! Both roles must agree on a [`ProtocolParams`] value before a session
//! starts. It fixes the feature-vector geometry (dimension, component ring,
//! per-dimension thresholds) as well as the byte lengths used on the wire.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Length of the per-round challenge `S_r` in bytes.
pub const CHALLENGE_LEN: usize = 32;

/// Default length of a generated session id `q`.
pub const DEFAULT_SESSION_ID_LEN: usize = 16;

/// Output size of HMAC-SHA-256; upper bound for verifier and tag lengths.
pub const MAC_OUTPUT_LEN: usize = 32;

/// Errors raised when parameters or values do not fit together.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("unsupported component width {0} bits (expected 8, 16 or 32)")]
    UnsupportedBits(u32),
    #[error("expected {expected} thresholds, got {got}")]
    ThresholdCount { expected: usize, got: usize },
    #[error("threshold {value} at dimension {dim} must be a power of two below 2^(k-1)")]
    InvalidThreshold { dim: usize, value: u32 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("component width mismatch: {expected:?} vs {got:?}")]
    BitsMismatch {
        expected: ComponentBits,
        got: ComponentBits,
    },
    #[error("component {value} at dimension {dim} exceeds the component ring")]
    ComponentOutOfRange { dim: usize, value: u64 },
    #[error("nonce must be {expected} bytes, got {got}")]
    NonceLength { expected: usize, got: usize },
    #[error("{what} must be between {min} and {max}, got {got}")]
    OutOfRange {
        what: &'static str,
        min: usize,
        max: usize,
        got: usize,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Width of a vector component; components live in `Z_{2^k}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ComponentBits {
    B8,
    B16,
    B32,
}

impl ComponentBits {
    pub fn from_bits(bits: u32) -> Result<Self, ParamError> {
        match bits {
            8 => Ok(Self::B8),
            16 => Ok(Self::B16),
            32 => Ok(Self::B32),
            other => Err(ParamError::UnsupportedBits(other)),
        }
    }

    pub fn bits(self) -> u32 {
        match self {
            Self::B8 => 8,
            Self::B16 => 16,
            Self::B32 => 32,
        }
    }

    pub fn bytes(self) -> usize {
        self.bits() as usize / 8
    }

    /// The ring size `2^k`.
    pub fn modulus(self) -> u64 {
        1u64 << self.bits()
    }

    /// Reduces an arbitrary integer into `[0, 2^k)`.
    pub fn reduce(self, value: i64) -> u32 {
        value.rem_euclid(self.modulus() as i64) as u32
    }

    /// Centered representative of `value` in `[-2^(k-1), 2^(k-1))`.
    pub fn centered(self, value: u32) -> i64 {
        let m = self.modulus() as i64;
        let v = value as i64;
        if v >= m / 2 {
            v - m
        } else {
            v
        }
    }
}

impl fmt::Display for ComponentBits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bits())
    }
}

/// Parameters shared by the user token and the sensing system.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolParams {
    dim: usize,
    bits: ComponentBits,
    thresholds: Vec<u32>,
    verifier_len: usize,
    tag_len: usize,
    key_len: usize,
    max_rounds: u16,
    max_queries_per_round: u16,
}

impl ProtocolParams {
    pub const DEFAULT_VERIFIER_LEN: usize = 16;
    pub const DEFAULT_TAG_LEN: usize = 32;
    pub const DEFAULT_KEY_LEN: usize = 32;
    pub const DEFAULT_MAX_ROUNDS: u16 = 16;
    pub const DEFAULT_QUERIES_PER_ROUND: u16 = 4;

    /// Builds parameters with default lengths and round limits.
    pub fn new(dim: usize, bits: u32, thresholds: Vec<u32>) -> Result<Self, ParamError> {
        let params = Self {
            dim,
            bits: ComponentBits::from_bits(bits)?,
            thresholds,
            verifier_len: Self::DEFAULT_VERIFIER_LEN,
            tag_len: Self::DEFAULT_TAG_LEN,
            key_len: Self::DEFAULT_KEY_LEN,
            max_rounds: Self::DEFAULT_MAX_ROUNDS,
            max_queries_per_round: Self::DEFAULT_QUERIES_PER_ROUND,
        };
        params.validate()?;
        Ok(params)
    }

    /// Same threshold in every dimension.
    pub fn uniform(dim: usize, bits: u32, threshold: u32) -> Result<Self, ParamError> {
        Self::new(dim, bits, vec![threshold; dim])
    }

    pub fn with_verifier_len(mut self, len: usize) -> Result<Self, ParamError> {
        self.verifier_len = len;
        self.validate()?;
        Ok(self)
    }

    pub fn with_tag_len(mut self, len: usize) -> Result<Self, ParamError> {
        self.tag_len = len;
        self.validate()?;
        Ok(self)
    }

    pub fn with_key_len(mut self, len: usize) -> Result<Self, ParamError> {
        self.key_len = len;
        self.validate()?;
        Ok(self)
    }

    pub fn with_max_rounds(mut self, rounds: u16) -> Result<Self, ParamError> {
        self.max_rounds = rounds;
        self.validate()?;
        Ok(self)
    }

    pub fn with_queries_per_round(mut self, count: u16) -> Result<Self, ParamError> {
        self.max_queries_per_round = count;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), ParamError> {
        if self.dim == 0 {
            return Err(ParamError::ZeroDimension);
        }
        if self.thresholds.len() != self.dim {
            return Err(ParamError::ThresholdCount {
                expected: self.dim,
                got: self.thresholds.len(),
            });
        }
        let half = self.bits.modulus() / 2;
        for (dim, &t) in self.thresholds.iter().enumerate() {
            // 2t | 2^k follows from t being a power of two below 2^(k-1).
            if !t.is_power_of_two() || u64::from(t) >= half {
                return Err(ParamError::InvalidThreshold { dim, value: t });
            }
        }
        check_range("verifier_len", self.verifier_len, 1, MAC_OUTPUT_LEN)?;
        check_range("tag_len", self.tag_len, 1, MAC_OUTPUT_LEN)?;
        check_range("key_len", self.key_len, 1, 255 * 32)?;
        check_range("max_rounds", self.max_rounds as usize, 1, u16::MAX as usize)?;
        check_range(
            "max_queries_per_round",
            self.max_queries_per_round as usize,
            1,
            u16::MAX as usize,
        )?;
        // Biggest Query frame must fit the 64 KiB frame cap.
        let query_len = 1 + 2 + 2 + CHALLENGE_LEN + 2
            + self.max_queries_per_round as usize * self.verifier_len;
        if query_len > crate::wire::MAX_FRAME_LEN {
            return Err(ParamError::Invalid(format!(
                "largest query frame would be {query_len} bytes, above the frame limit"
            )));
        }
        // Setup carries the nonce next to a session id of up to 255 bytes.
        if 1 + 2 + 255 + 2 + self.nonce_len() > crate::wire::MAX_FRAME_LEN {
            return Err(ParamError::Invalid(
                "vector encoding exceeds the frame limit".into(),
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bits(&self) -> ComponentBits {
        self.bits
    }

    pub fn thresholds(&self) -> &[u32] {
        &self.thresholds
    }

    /// Cell width `w_i = 2 t_i` for dimension `i`.
    pub fn cell_width(&self, i: usize) -> u64 {
        2 * u64::from(self.thresholds[i])
    }

    /// Byte length of both the global and the blinding nonce.
    pub fn nonce_len(&self) -> usize {
        self.dim * self.bits.bytes()
    }

    pub fn nonce_len_global(&self) -> usize {
        self.nonce_len()
    }

    pub fn nonce_len_blind(&self) -> usize {
        self.nonce_len()
    }

    pub fn verifier_len(&self) -> usize {
        self.verifier_len
    }

    pub fn tag_len(&self) -> usize {
        self.tag_len
    }

    pub fn key_len(&self) -> usize {
        self.key_len
    }

    pub fn max_rounds(&self) -> u16 {
        self.max_rounds
    }

    pub fn max_queries_per_round(&self) -> u16 {
        self.max_queries_per_round
    }
}

fn check_range(what: &'static str, got: usize, min: usize, max: usize) -> Result<(), ParamError> {
    if got < min || got > max {
        return Err(ParamError::OutOfRange {
            what,
            min,
            max,
            got,
        });
    }
    Ok(())
}
