//! The two role state machines and the messages they exchange.
//!
//! Neither role performs I/O. Each consumes a message value and returns the
//! message to send back (if any); moving bytes is the caller's job, see
//! [`crate::wire`] and [`crate::sim`].
//!
//! ```text
//!   SensingSystem                          UserToken
//!   start()           ── Setup ──────────▶ on_setup()
//!   on_template()     ◀── TemplateResponse ─
//!   build_query()     ── Query ──────────▶ on_query()      (repeat per round)
//!   on_match()        ◀── MatchAnnounce ───
//!                     ── Outcome ────────▶ on_outcome()
//! ```

mod system;
mod token;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use system::{SensingSystem, SystemPhase};
pub use token::{TokenPhase, UserToken};

use crate::kdf::{Tag, Verifier};
use crate::params::{ParamError, CHALLENGE_LEN};
use crate::vector::FeatureVector;

/// Why a session was aborted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AbortReason {
    /// The token's tag did not verify under the announced candidate key.
    TagMismatch,
    /// No verifier matched within `max_rounds` rounds.
    RoundLimit,
    /// A message arrived out of order or was malformed.
    ProtocolViolation,
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::TagMismatch => "TagMismatch",
            Self::RoundLimit => "RoundLimit",
            Self::ProtocolViolation => "ProtocolViolation",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("session aborted: {0}")]
    Aborted(AbortReason),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("entropy source failure: {0}")]
    Entropy(String),
}

impl ProtocolError {
    pub fn abort_reason(&self) -> Option<AbortReason> {
        match self {
            Self::Aborted(reason) => Some(*reason),
            _ => None,
        }
    }
}

/// Session identifier `q`, 1 to 255 bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SessionId(Vec<u8>);

impl SessionId {
    pub const MAX_LEN: usize = 255;

    pub fn new(bytes: Vec<u8>) -> Result<Self, ParamError> {
        if bytes.is_empty() || bytes.len() > Self::MAX_LEN {
            return Err(ParamError::OutOfRange {
                what: "session id length",
                min: 1,
                max: Self::MAX_LEN,
                got: bytes.len(),
            });
        }
        Ok(Self(bytes))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

/// First message: session id and global nonce `N^G`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Setup {
    pub session_id: SessionId,
    pub global_nonce: Vec<u8>,
}

/// The blinded template `C = B + V^R`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateResponse {
    pub blinded_template: FeatureVector,
}

/// One round of candidate verifiers with a fresh challenge `S_r`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub round: u16,
    pub challenge: [u8; CHALLENGE_LEN],
    pub verifiers: Vec<Verifier>,
}

/// The token's reply naming the matching verifier index and proving key knowledge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchAnnounce {
    pub round: u16,
    pub index: u16,
    pub tag: Tag,
}

/// Terminal signal from the sensing system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    KeyEstablished,
    Abort(AbortReason),
}

impl Outcome {
    pub fn is_established(&self) -> bool {
        matches!(self, Self::KeyEstablished)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::KeyEstablished => f.write_str("KeyEstablished"),
            Self::Abort(reason) => write!(f, "Abort({reason})"),
        }
    }
}

/// Any of the five protocol messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Setup(Setup),
    TemplateResponse(TemplateResponse),
    Query(Query),
    MatchAnnounce(MatchAnnounce),
    Outcome(Outcome),
}

impl Message {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Setup(_) => "Setup",
            Self::TemplateResponse(_) => "TemplateResponse",
            Self::Query(_) => "Query",
            Self::MatchAnnounce(_) => "MatchAnnounce",
            Self::Outcome(_) => "Outcome",
        }
    }
}

macro_rules! impl_from_message {
    ($($variant:ident),*) => {
        $(impl From<$variant> for Message {
            fn from(m: $variant) -> Self {
                Message::$variant(m)
            }
        })*
    };
}

impl_from_message!(Setup, TemplateResponse, Query, MatchAnnounce, Outcome);
