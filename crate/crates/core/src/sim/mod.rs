//! Simulation harness: a synthetic sensor, a template store, transports and
//! the session/trial runners that wire both roles together.

mod noise;
mod session;
mod store;
mod transport;
mod trials;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use noise::{sensor_sample, NoiseKind, NoiseModel, Sensor};
pub use session::{
    run_session, Direction, FrameRecord, SessionConfig, SessionOutcome, SessionReport, Tamper,
};
pub use store::{random_template, StoreError, TemplateStore};
pub use transport::{channel_pair, tcp_pair, ChannelLink, FrameLink, TcpLink, Transport};
pub use trials::{run_trials, TrialConfig, TrialReport, TrialRow, TrialStatus};

use crate::params::ParamError;
use crate::protocol::ProtocolError;
use crate::wire::EncodeError;

/// Failures of the harness itself, as opposed to protocol aborts.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("transport failure: {0}")]
    Transport(#[from] std::io::Error),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("protocol error: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("token task panicked")]
    TokenPanicked,
}

/// 32-byte seed `SHA-256(master ‖ label ‖ index)`.
pub fn derive_seed(master: u64, label: &str, index: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(master.to_be_bytes());
    h.update(label.as_bytes());
    h.update(index.to_be_bytes());
    h.finalize().into()
}

/// Per-trial seed derived from the master seed and the trial index.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    let bytes = derive_seed(master, "trial", trial);
    u64::from_be_bytes(bytes[..8].try_into().expect("8 bytes"))
}
