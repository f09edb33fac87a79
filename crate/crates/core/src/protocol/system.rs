use rand::TryCryptoRng;

use super::{AbortReason, MatchAnnounce, Outcome, ProtocolError, Query, Setup, SessionId, TemplateResponse};
use crate::kdf::{self, DerivedKey};
use crate::params::{ParamError, ProtocolParams, CHALLENGE_LEN, DEFAULT_SESSION_ID_LEN};
use crate::vector::{vectorize, FeatureVector};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SystemPhase {
    Init,
    AwaitingTemplate,
    Querying,
    Done(DerivedKey),
    Aborted(AbortReason),
}

impl SystemPhase {
    pub fn is_terminal(&self) -> bool {
        matches!(self, Self::Done(_) | Self::Aborted(_))
    }
}

#[derive(Debug, Clone)]
struct Round {
    number: u16,
    challenge: [u8; CHALLENGE_LEN],
    keys: Vec<DerivedKey>,
}

/// The sensing system: issues the setup, derives candidate keys from
/// captures and verifies the token's tag.
#[derive(Debug, Clone)]
pub struct SensingSystem {
    params: ProtocolParams,
    session_id: Option<SessionId>,
    global_nonce: Vec<u8>,
    global_vector: Option<FeatureVector>,
    blinded_template: Option<FeatureVector>,
    rounds_started: u16,
    round: Option<Round>,
    phase: SystemPhase,
}

impl SensingSystem {
    pub fn new(params: ProtocolParams) -> Self {
        Self {
            params,
            session_id: None,
            global_nonce: Vec::new(),
            global_vector: None,
            blinded_template: None,
            rounds_started: 0,
            round: None,
            phase: SystemPhase::Init,
        }
    }

    /// Creates a system and opens a session with a fresh `q` and `N^G`.
    pub fn start<R: TryCryptoRng + ?Sized>(
        params: ProtocolParams,
        rng: &mut R,
    ) -> Result<(Self, Setup), ProtocolError> {
        let mut q = vec![0u8; DEFAULT_SESSION_ID_LEN];
        let mut nonce = vec![0u8; params.nonce_len_global()];
        fill(rng, &mut q)?;
        fill(rng, &mut nonce)?;
        let mut system = Self::new(params);
        let setup = system.start_with(SessionId::new(q)?, nonce)?;
        Ok((system, setup))
    }

    /// Opens a session with caller-chosen `q` and `N^G`.
    pub fn start_with(
        &mut self,
        session_id: SessionId,
        global_nonce: Vec<u8>,
    ) -> Result<Setup, ProtocolError> {
        if self.phase != SystemPhase::Init {
            return Err(ProtocolError::Aborted(AbortReason::ProtocolViolation));
        }
        let global_vector = vectorize(&global_nonce, &self.params)?;
        self.session_id = Some(session_id.clone());
        self.global_nonce = global_nonce.clone();
        self.global_vector = Some(global_vector);
        self.phase = SystemPhase::AwaitingTemplate;
        Ok(Setup {
            session_id,
            global_nonce,
        })
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn phase(&self) -> &SystemPhase {
        &self.phase
    }

    pub fn shared_key(&self) -> Option<&DerivedKey> {
        match &self.phase {
            SystemPhase::Done(key) => Some(key),
            _ => None,
        }
    }

    pub fn blinded_template(&self) -> Option<&FeatureVector> {
        self.blinded_template.as_ref()
    }

    /// Number of rounds for which a query has been built.
    pub fn rounds_started(&self) -> u16 {
        self.rounds_started
    }

    pub fn has_rounds_left(&self) -> bool {
        self.rounds_started < self.params.max_rounds()
    }

    /// Candidate keys `K_{r,i}` of the outstanding round.
    pub fn round_keys(&self) -> &[DerivedKey] {
        self.round.as_ref().map_or(&[], |r| &r.keys)
    }

    fn abort(&mut self, reason: AbortReason) -> ProtocolError {
        if !self.phase.is_terminal() {
            self.phase = SystemPhase::Aborted(reason);
            self.round = None;
        }
        ProtocolError::Aborted(reason)
    }

    /// Stores the blinded template `C` and moves to round 0.
    pub fn on_template(&mut self, resp: &TemplateResponse) -> Result<(), ProtocolError> {
        if self.phase != SystemPhase::AwaitingTemplate {
            return Err(self.abort(AbortReason::ProtocolViolation));
        }
        if resp.blinded_template.check(&self.params).is_err() {
            return Err(self.abort(AbortReason::ProtocolViolation));
        }
        self.blinded_template = Some(resp.blinded_template.clone());
        self.phase = SystemPhase::Querying;
        Ok(())
    }

    /// Builds the next round's query from fresh captures `V^C_{r,i}`.
    pub fn build_query<R: TryCryptoRng + ?Sized>(
        &mut self,
        captures: &[FeatureVector],
        rng: &mut R,
    ) -> Result<Query, ProtocolError> {
        self.check_can_query(captures)?;
        let mut challenge = [0u8; CHALLENGE_LEN];
        fill(rng, &mut challenge)?;
        self.build_query_with_challenge(captures, challenge)
    }

    /// Deterministic core of [`build_query`](Self::build_query).
    pub fn build_query_with_challenge(
        &mut self,
        captures: &[FeatureVector],
        challenge: [u8; CHALLENGE_LEN],
    ) -> Result<Query, ProtocolError> {
        self.check_can_query(captures)?;
        let (Some(session_id), Some(global), Some(blinded)) = (
            self.session_id.as_ref(),
            self.global_vector.as_ref(),
            self.blinded_template.as_ref(),
        ) else {
            return Err(self.abort(AbortReason::ProtocolViolation));
        };

        let mut keys = Vec::with_capacity(captures.len());
        let mut verifiers = Vec::with_capacity(captures.len());
        for capture in captures {
            // C - V^C + N^G = (V^R - V^C) + centralize(N^G + vectorize(N^B))
            let input = blinded.wrapping_sub(capture)?.wrapping_add(global)?;
            let key = kdf::bbkdf(&input, &self.params)?;
            verifiers.push(kdf::verifier(
                session_id.as_bytes(),
                &self.global_nonce,
                &key,
                &self.params,
            ));
            keys.push(key);
        }

        let number = self.rounds_started;
        self.rounds_started += 1;
        self.round = Some(Round {
            number,
            challenge,
            keys,
        });
        Ok(Query {
            round: number,
            challenge,
            verifiers,
        })
    }

    fn check_can_query(&mut self, captures: &[FeatureVector]) -> Result<(), ProtocolError> {
        if self.phase != SystemPhase::Querying {
            return Err(self.abort(AbortReason::ProtocolViolation));
        }
        if !self.has_rounds_left() {
            return Err(self.abort(AbortReason::RoundLimit));
        }
        let max = usize::from(self.params.max_queries_per_round());
        if captures.is_empty() || captures.len() > max {
            return Err(ParamError::OutOfRange {
                what: "captures per round",
                min: 1,
                max,
                got: captures.len(),
            }
            .into());
        }
        for capture in captures {
            capture.check(&self.params)?;
        }
        Ok(())
    }

    /// Verifies `T` against the announced candidate key `K_{r,m}`.
    ///
    /// Terminal states are left untouched and answer with
    /// `Abort(ProtocolViolation)`.
    pub fn on_match(&mut self, ann: &MatchAnnounce) -> Outcome {
        if self.phase.is_terminal() {
            return Outcome::Abort(AbortReason::ProtocolViolation);
        }
        let verdict = match (&self.phase, &self.round, &self.session_id) {
            (SystemPhase::Querying, Some(round), Some(q)) if round.number == ann.round => {
                match round.keys.get(usize::from(ann.index)) {
                    Some(key) => {
                        let expected = kdf::tag(q.as_bytes(), &round.challenge, key, &self.params);
                        if kdf::ct_equal(ann.tag.as_bytes(), expected.as_bytes()) {
                            Ok(key.clone())
                        } else {
                            Err(AbortReason::TagMismatch)
                        }
                    }
                    None => Err(AbortReason::ProtocolViolation),
                }
            }
            _ => Err(AbortReason::ProtocolViolation),
        };
        match verdict {
            Ok(key) => {
                self.phase = SystemPhase::Done(key);
                self.round = None;
                Outcome::KeyEstablished
            }
            Err(reason) => {
                self.abort(reason);
                Outcome::Abort(reason)
            }
        }
    }

    /// Aborts on a message that does not fit the current phase.
    pub fn reject_unexpected(&mut self) -> Outcome {
        self.abort(AbortReason::ProtocolViolation);
        Outcome::Abort(AbortReason::ProtocolViolation)
    }

    /// Gives up on the session once every round has been spent.
    pub fn finish_without_match(&mut self) -> Option<Outcome> {
        if self.phase == SystemPhase::Querying && !self.has_rounds_left() {
            self.abort(AbortReason::RoundLimit);
            return Some(Outcome::Abort(AbortReason::RoundLimit));
        }
        None
    }
}

fn fill<R: TryCryptoRng + ?Sized>(rng: &mut R, buf: &mut [u8]) -> Result<(), ProtocolError> {
    rng.try_fill_bytes(buf)
        .map_err(|e| ProtocolError::Entropy(format!("{e:?}")))
}
