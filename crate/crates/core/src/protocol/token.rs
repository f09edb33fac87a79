use rand::TryCryptoRng;

use super::{AbortReason, MatchAnnounce, Outcome, ProtocolError, Query, Setup, SessionId, TemplateResponse};
use crate::kdf::{self, DerivedKey, Verifier};
use crate::params::{ParamError, ProtocolParams};
use crate::vector::{centralize, vectorize, FeatureVector};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenPhase {
    AwaitingSetup,
    AwaitingQueries,
    Done(DerivedKey),
    Aborted,
}

#[derive(Debug, Clone)]
struct Precomputed {
    session_id: SessionId,
    blinding: FeatureVector,
    key: DerivedKey,
    verifier: Verifier,
}

/// The template-carrying user token.
///
/// All KDF and MAC work for a session happens in [`UserToken::on_setup`].
/// Each query afterwards costs only verifier comparisons, plus one MAC for
/// the tag when a match is found.
#[derive(Debug, Clone)]
pub struct UserToken {
    params: ProtocolParams,
    template: FeatureVector,
    session: Option<Precomputed>,
    phase: TokenPhase,
    comparisons: u64,
}

impl UserToken {
    pub fn new(params: ProtocolParams, template: FeatureVector) -> Result<Self, ParamError> {
        template.check(&params)?;
        Ok(Self {
            params,
            template,
            session: None,
            phase: TokenPhase::AwaitingSetup,
            comparisons: 0,
        })
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    pub fn phase(&self) -> &TokenPhase {
        &self.phase
    }

    /// `K_shared` once the token has answered a matching query.
    pub fn shared_key(&self) -> Option<&DerivedKey> {
        match &self.phase {
            TokenPhase::Done(key) => Some(key),
            _ => None,
        }
    }

    /// Number of verifier comparisons performed so far.
    pub fn comparisons(&self) -> u64 {
        self.comparisons
    }

    /// The blinding vector `B`. Secret; exposed for inspection in tests and tooling.
    pub fn blinding_vector(&self) -> Option<&FeatureVector> {
        self.session.as_ref().map(|s| &s.blinding)
    }

    /// Draws the blinding nonce `N^B` and answers the setup.
    pub fn on_setup<R: TryCryptoRng + ?Sized>(
        &mut self,
        setup: &Setup,
        rng: &mut R,
    ) -> Result<TemplateResponse, ProtocolError> {
        self.check_awaiting_setup()?;
        let mut blind_nonce = vec![0u8; self.params.nonce_len_blind()];
        rng.try_fill_bytes(&mut blind_nonce)
            .map_err(|e| ProtocolError::Entropy(format!("{e:?}")))?;
        self.on_setup_with_nonce(setup, &blind_nonce)
    }

    /// Deterministic core of [`on_setup`](Self::on_setup) with a caller-chosen `N^B`.
    pub fn on_setup_with_nonce(
        &mut self,
        setup: &Setup,
        blind_nonce: &[u8],
    ) -> Result<TemplateResponse, ProtocolError> {
        self.check_awaiting_setup()?;
        let params = &self.params;
        let global = match vectorize(&setup.global_nonce, params) {
            Ok(v) => v,
            Err(_) => {
                self.phase = TokenPhase::Aborted;
                return Err(ProtocolError::Aborted(AbortReason::ProtocolViolation));
            }
        };
        let blind = vectorize(blind_nonce, params)?;

        // B + N^G sits at a cell centre, so B + N^G + small noise stays in its cell.
        let anchor = centralize(&global.wrapping_add(&blind)?, params)?;
        let blinding = anchor.wrapping_sub(&global)?;
        let key = kdf::bbkdf(&blinding.wrapping_add(&global)?, params)?;
        let verifier = kdf::verifier(
            setup.session_id.as_bytes(),
            &setup.global_nonce,
            &key,
            params,
        );
        let blinded_template = blinding.wrapping_add(&self.template)?;

        self.session = Some(Precomputed {
            session_id: setup.session_id.clone(),
            blinding,
            key,
            verifier,
        });
        self.phase = TokenPhase::AwaitingQueries;
        Ok(TemplateResponse { blinded_template })
    }

    fn check_awaiting_setup(&mut self) -> Result<(), ProtocolError> {
        match self.phase {
            TokenPhase::AwaitingSetup => Ok(()),
            TokenPhase::AwaitingQueries => {
                self.phase = TokenPhase::Aborted;
                Err(ProtocolError::Aborted(AbortReason::ProtocolViolation))
            }
            TokenPhase::Done(_) | TokenPhase::Aborted => {
                Err(ProtocolError::Aborted(AbortReason::ProtocolViolation))
            }
        }
    }

    /// Looks for `v'` among the query's verifiers.
    ///
    /// Every verifier is compared in constant time; the smallest matching
    /// index wins. Queries without a match, malformed queries and queries
    /// outside `AwaitingQueries` produce no reply and leave the state as is.
    pub fn on_query(&mut self, query: &Query) -> Option<MatchAnnounce> {
        if self.phase != TokenPhase::AwaitingQueries {
            return None;
        }
        let session = self.session.as_ref()?;
        let count = query.verifiers.len();
        if count == 0 || count > usize::from(self.params.max_queries_per_round()) {
            return None;
        }
        self.comparisons += count as u64;
        let index = kdf::ct_find_first(
            query.verifiers.iter().map(Verifier::as_bytes),
            session.verifier.as_bytes(),
        )?;
        let tag = kdf::tag(
            session.session_id.as_bytes(),
            &query.challenge,
            &session.key,
            &self.params,
        );
        self.phase = TokenPhase::Done(session.key.clone());
        Some(MatchAnnounce {
            round: query.round,
            index: index as u16,
            tag,
        })
    }

    /// Applies the system's final signal. An abort revokes a key the token
    /// already considers established.
    pub fn on_outcome(&mut self, outcome: &Outcome) {
        if let Outcome::Abort(_) = outcome {
            self.phase = TokenPhase::Aborted;
        }
    }
}
