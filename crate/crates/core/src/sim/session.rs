use std::thread;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::noise::{NoiseKind, NoiseModel, Sensor};
use super::transport::{channel_pair, tcp_pair, FrameLink, Transport};
use super::{derive_seed, HarnessError};
use crate::kdf::DerivedKey;
use crate::params::{ProtocolParams, CHALLENGE_LEN};
use crate::protocol::{
    AbortReason, Message, Outcome, ProtocolError, SensingSystem, UserToken,
};
use crate::vector::FeatureVector;
use crate::wire::{self, TYPE_MATCH_ANNOUNCE, TYPE_QUERY};

/// In-flight interference applied between the two roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Tamper {
    #[default]
    None,
    /// Flip the lowest bit of the tag in every MatchAnnounce.
    FlipTagBit,
    /// Garble every verifier of the first `n` Query frames.
    CorruptQueries(u16),
    /// Chop the last byte off the first `n` Query frames.
    TruncateQueries(u16),
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub params: ProtocolParams,
    pub template: FeatureVector,
    pub noise: NoiseKind,
    pub transport: Transport,
    pub tamper: Tamper,
    pub seed: u64,
    pub record_transcript: bool,
}

impl SessionConfig {
    pub fn new(params: ProtocolParams, template: FeatureVector, noise: NoiseKind, seed: u64) -> Self {
        Self {
            params,
            template,
            noise,
            transport: Transport::InProcess,
            tamper: Tamper::None,
            seed,
            record_transcript: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionOutcome {
    KeyEstablished {
        round: u16,
        index: u16,
        system_key: DerivedKey,
        token_key: Option<DerivedKey>,
    },
    Aborted {
        reason: AbortReason,
    },
}

impl SessionOutcome {
    pub fn outcome(&self) -> Outcome {
        match self {
            Self::KeyEstablished { .. } => Outcome::KeyEstablished,
            Self::Aborted { reason } => Outcome::Abort(*reason),
        }
    }

    /// True when both sides hold the same key.
    pub fn keys_agree(&self) -> bool {
        matches!(self, Self::KeyEstablished { system_key, token_key: Some(t), .. } if system_key == t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    SystemToToken,
    TokenToSystem,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameRecord {
    pub direction: Direction,
    pub frame: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct SessionReport {
    pub outcome: SessionOutcome,
    pub rounds: u16,
    /// Verifiers sent across all rounds.
    pub queries_sent: u64,
    pub wall_time: Duration,
    /// Frames as seen by the sensing system; empty unless requested.
    pub transcript: Vec<FrameRecord>,
}

struct Tampering<L> {
    inner: L,
    tamper: Tamper,
    verifier_len: usize,
    queries_seen: u16,
}

impl<L: FrameLink> FrameLink for Tampering<L> {
    fn send(&mut self, frame: &[u8]) -> std::io::Result<()> {
        let mut frame = frame.to_vec();
        if frame.first() == Some(&TYPE_QUERY) {
            match self.tamper {
                Tamper::CorruptQueries(n) if self.queries_seen < n => {
                    let start = 1 + 2 + 2 + CHALLENGE_LEN + 2;
                    for i in (start..frame.len()).step_by(self.verifier_len) {
                        frame[i] ^= 0xff;
                    }
                }
                Tamper::TruncateQueries(n) if self.queries_seen < n => {
                    frame.pop();
                }
                _ => {}
            }
            self.queries_seen += 1;
        }
        self.inner.send(&frame)
    }

    fn recv(&mut self) -> std::io::Result<Vec<u8>> {
        let mut frame = self.inner.recv()?;
        if self.tamper == Tamper::FlipTagBit && frame.first() == Some(&TYPE_MATCH_ANNOUNCE) {
            if let Some(last) = frame.last_mut() {
                *last ^= 0x01;
            }
        }
        Ok(frame)
    }
}

/// Runs one complete session: the token on its own thread, the sensing
/// system on the caller's thread, talking only through `config.transport`.
pub fn run_session(config: &SessionConfig) -> Result<SessionReport, HarnessError> {
    config.noise.validate(&config.params)?;
    config.template.check(&config.params)?;
    let started = Instant::now();
    let token = UserToken::new(config.params.clone(), config.template.clone())?;
    let token_rng = ChaCha20Rng::from_seed(derive_seed(config.seed, "token", 0));

    let (result, token) = match config.transport {
        Transport::InProcess => {
            let (system_end, token_end) = channel_pair();
            run_pair(config, system_end, token_end, token, token_rng)
        }
        Transport::TcpLoopback => {
            let (system_end, token_end) = tcp_pair()?;
            run_pair(config, system_end, token_end, token, token_rng)
        }
    };
    let mut report = result?;
    let token = token?;
    if let SessionOutcome::KeyEstablished { token_key, .. } = &mut report.outcome {
        *token_key = token.shared_key().cloned();
    }
    report.wall_time = started.elapsed();
    Ok(report)
}

fn run_pair<L: FrameLink + Send>(
    config: &SessionConfig,
    system_end: L,
    token_end: L,
    token: UserToken,
    token_rng: ChaCha20Rng,
) -> (
    Result<SessionReport, HarnessError>,
    Result<UserToken, HarnessError>,
) {
    thread::scope(|scope| {
        let handle = scope.spawn(move || drive_token(token_end, token, token_rng));
        let link = Tampering {
            inner: system_end,
            tamper: config.tamper,
            verifier_len: config.params.verifier_len(),
            queries_seen: 0,
        };
        let report = drive_system(config, link);
        // Dropping the link on error unblocks the token thread.
        let token = handle
            .join()
            .map_err(|_| HarnessError::TokenPanicked)
            .and_then(|r| r);
        (report, token)
    })
}

/// Token loop: answers every frame except the final Outcome.
fn drive_token<L: FrameLink>(
    mut link: L,
    mut token: UserToken,
    mut rng: ChaCha20Rng,
) -> Result<UserToken, HarnessError> {
    let params = token.params().clone();
    loop {
        let frame = match link.recv() {
            Ok(f) => f,
            // The system hung up without an Outcome; leave the token as is.
            Err(_) => return Ok(token),
        };
        let reply = match wire::decode(&frame, &params) {
            Ok(Message::Setup(setup)) => match token.on_setup(&setup, &mut rng) {
                Ok(resp) => Some(Message::TemplateResponse(resp)),
                Err(ProtocolError::Aborted(_)) => None,
                Err(e) => return Err(e.into()),
            },
            Ok(Message::Query(query)) => token.on_query(&query).map(Message::MatchAnnounce),
            Ok(Message::Outcome(outcome)) => {
                token.on_outcome(&outcome);
                return Ok(token);
            }
            // Anything else, including undecodable frames, is ignored.
            Ok(_) | Err(_) => None,
        };
        let bytes = match reply {
            Some(msg) => wire::encode(&msg, &params)?,
            None => Vec::new(),
        };
        if link.send(&bytes).is_err() {
            return Ok(token);
        }
    }
}

struct SystemDriver<'a, L> {
    link: L,
    params: &'a ProtocolParams,
    transcript: Option<Vec<FrameRecord>>,
}

impl<L: FrameLink> SystemDriver<'_, L> {
    fn send(&mut self, msg: &Message) -> Result<(), HarnessError> {
        let frame = wire::encode(msg, self.params)?;
        self.link.send(&frame)?;
        if let Some(t) = &mut self.transcript {
            t.push(FrameRecord {
                direction: Direction::SystemToToken,
                frame,
            });
        }
        Ok(())
    }

    /// `None` for the empty "no reply" marker; `Some(Err)` for garbage.
    fn recv(&mut self) -> Result<Option<Result<Message, wire::DecodeError>>, HarnessError> {
        let frame = self.link.recv()?;
        if frame.is_empty() {
            return Ok(None);
        }
        let msg = wire::decode(&frame, self.params);
        if let Some(t) = &mut self.transcript {
            t.push(FrameRecord {
                direction: Direction::TokenToSystem,
                frame,
            });
        }
        Ok(Some(msg))
    }
}

fn drive_system<L: FrameLink>(config: &SessionConfig, link: L) -> Result<SessionReport, HarnessError> {
    let params = &config.params;
    let mut rng = ChaCha20Rng::from_seed(derive_seed(config.seed, "system", 0));
    let mut sensor = Sensor::new(&NoiseModel {
        kind: config.noise.clone(),
        seed: config.seed,
    });
    let mut io = SystemDriver {
        link,
        params,
        transcript: config.record_transcript.then(Vec::new),
    };
    let mut queries_sent = 0u64;
    let mut matched = None;

    let (mut system, setup) = SensingSystem::start(params.clone(), &mut rng)?;
    io.send(&setup.into())?;

    let outcome = match io.recv()? {
        Some(Ok(Message::TemplateResponse(resp))) => match system.on_template(&resp) {
            Ok(()) => None,
            Err(e) => Some(abort_of(e)?),
        },
        _ => Some(system.reject_unexpected()),
    };

    let outcome = match outcome {
        Some(o) => o,
        None => loop {
            if let Some(o) = system.finish_without_match() {
                break o;
            }
            let captures =
                sensor.sample(&config.template, usize::from(params.max_queries_per_round()), params)?;
            let query = match system.build_query(&captures, &mut rng) {
                Ok(q) => q,
                Err(e) => break abort_of(e)?,
            };
            queries_sent += query.verifiers.len() as u64;
            io.send(&query.into())?;
            match io.recv()? {
                None => continue,
                Some(Ok(Message::MatchAnnounce(ann))) => {
                    matched = Some((ann.round, ann.index));
                    break system.on_match(&ann);
                }
                Some(_) => break system.reject_unexpected(),
            }
        },
    };
    io.send(&outcome.into())?;

    let session_outcome = match (outcome, system.shared_key(), matched) {
        (Outcome::KeyEstablished, Some(key), Some((round, index))) => {
            SessionOutcome::KeyEstablished {
                round,
                index,
                system_key: key.clone(),
                token_key: None,
            }
        }
        (Outcome::Abort(reason), _, _) => SessionOutcome::Aborted { reason },
        _ => unreachable!("KeyEstablished implies a verified MatchAnnounce"),
    };
    Ok(SessionReport {
        outcome: session_outcome,
        rounds: system.rounds_started(),
        queries_sent,
        wall_time: Duration::ZERO,
        transcript: io.transcript.unwrap_or_default(),
    })
}

fn abort_of(err: ProtocolError) -> Result<Outcome, HarnessError> {
    match err {
        ProtocolError::Aborted(reason) => Ok(Outcome::Abort(reason)),
        other => Err(other.into()),
    }
}
