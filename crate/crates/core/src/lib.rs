//! Online biometric-authenticated key exchange.
//!
//! A user token holding a biometric template and a sensing system holding
//! fresh captures agree on a key exactly when a capture lies close enough to
//! the template, without the template ever leaving the token unblinded.
//!
//! * [`vector`]: feature vectors over `Z_{2^k}`, cell partitioning and centralization
//! * [`kdf`]: cell-keyed key derivation, truncated HMAC, constant-time comparison
//! * [`protocol`]: the user token and sensing system state machines
//! * [`wire`]: binary frame codec
//! * [`sim`]: synthetic sensor, transports, session and trial runners

pub mod kdf;
pub mod params;
pub mod protocol;
pub mod sim;
pub mod vector;
pub mod wire;

pub use kdf::{bbkdf, ct_equal, mac, DerivedKey, Tag, Verifier};
pub use params::{ComponentBits, ParamError, ProtocolParams};
pub use protocol::{
    AbortReason, MatchAnnounce, Message, Outcome, ProtocolError, Query, SensingSystem, SessionId,
    Setup, SystemPhase, TemplateResponse, TokenPhase, UserToken,
};
pub use vector::{cell_index, centralize, vec_add, vec_sub, vectorize, FeatureVector};
pub use wire::{decode, encode, DecodeError, EncodeError};
