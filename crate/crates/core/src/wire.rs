//! Binary framing for the five protocol messages.
//!
//! Every frame starts with a one-byte message type followed by the fields in
//! declaration order. All integers are big-endian.
//!
//! | type | message          | body                                                        |
//! |------|------------------|-------------------------------------------------------------|
//! | 0x01 | Setup            | `u16 len ‖ q ‖ u16 len ‖ N^G`                               |
//! | 0x02 | TemplateResponse | `C` as `dim` components of `k/8` bytes                      |
//! | 0x03 | Query            | `u16 round ‖ u16 len ‖ S_r ‖ u16 count ‖ verifiers`         |
//! | 0x04 | MatchAnnounce    | `u16 round ‖ u16 index ‖ u16 len ‖ T`                       |
//! | 0x05 | Outcome          | `kind` (0 established, 1 abort) `‖ reason` (abort only)     |
//!
//! Abort reasons: 0x01 TagMismatch, 0x02 RoundLimit, 0x03 ProtocolViolation.
//! Frames are at most [`MAX_FRAME_LEN`] bytes.

use thiserror::Error;

use crate::kdf::{Tag, Verifier};
use crate::params::{ProtocolParams, CHALLENGE_LEN};
use crate::protocol::{
    AbortReason, MatchAnnounce, Message, Outcome, Query, SessionId, Setup, TemplateResponse,
};
use crate::vector::vectorize;

pub const MAX_FRAME_LEN: usize = 65_535;

pub const TYPE_SETUP: u8 = 0x01;
pub const TYPE_TEMPLATE_RESPONSE: u8 = 0x02;
pub const TYPE_QUERY: u8 = 0x03;
pub const TYPE_MATCH_ANNOUNCE: u8 = 0x04;
pub const TYPE_OUTCOME: u8 = 0x05;

const OUTCOME_ESTABLISHED: u8 = 0x00;
const OUTCOME_ABORT: u8 = 0x01;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("frame of {0} bytes exceeds the {MAX_FRAME_LEN}-byte limit")]
    FrameTooLong(usize),
    #[error("field {0} does not fit a u16 length")]
    FieldTooLong(&'static str),
    #[error("message does not fit the parameters: {0}")]
    Mismatch(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeErrorKind {
    #[error("unknown message type {0:#04x}")]
    UnknownType(u8),
    #[error("truncated frame")]
    Truncated,
    #[error("frame longer than {MAX_FRAME_LEN} bytes")]
    OverLength,
    #[error("{0} trailing bytes")]
    TrailingBytes(usize),
    #[error("invalid {field}: {detail}")]
    InvalidField {
        field: &'static str,
        detail: String,
    },
}

/// Decoding failure and the byte offset where it was detected.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("decode error at offset {offset}: {kind}")]
pub struct DecodeError {
    pub offset: usize,
    pub kind: DecodeErrorKind,
}

fn abort_code(reason: AbortReason) -> u8 {
    match reason {
        AbortReason::TagMismatch => 0x01,
        AbortReason::RoundLimit => 0x02,
        AbortReason::ProtocolViolation => 0x03,
    }
}

fn put_bytes(out: &mut Vec<u8>, field: &'static str, bytes: &[u8]) -> Result<(), EncodeError> {
    let len = u16::try_from(bytes.len()).map_err(|_| EncodeError::FieldTooLong(field))?;
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(bytes);
    Ok(())
}

/// Serializes `msg`. The output is a pure function of `msg` and `params`.
pub fn encode(msg: &Message, params: &ProtocolParams) -> Result<Vec<u8>, EncodeError> {
    let mut out = Vec::new();
    match msg {
        Message::Setup(setup) => {
            if setup.global_nonce.len() != params.nonce_len_global() {
                return Err(EncodeError::Mismatch("global nonce length"));
            }
            out.push(TYPE_SETUP);
            put_bytes(&mut out, "session id", setup.session_id.as_bytes())?;
            put_bytes(&mut out, "global nonce", &setup.global_nonce)?;
        }
        Message::TemplateResponse(resp) => {
            if resp.blinded_template.check(params).is_err() {
                return Err(EncodeError::Mismatch("blinded template dimension"));
            }
            out.push(TYPE_TEMPLATE_RESPONSE);
            out.extend_from_slice(&resp.blinded_template.to_bytes());
        }
        Message::Query(query) => {
            if query.verifiers.iter().any(|v| v.len() != params.verifier_len()) {
                return Err(EncodeError::Mismatch("verifier length"));
            }
            let count = query.verifiers.len();
            if count == 0 || count > usize::from(params.max_queries_per_round()) {
                return Err(EncodeError::Mismatch("verifier count"));
            }
            out.push(TYPE_QUERY);
            out.extend_from_slice(&query.round.to_be_bytes());
            put_bytes(&mut out, "challenge", &query.challenge)?;
            out.extend_from_slice(&(count as u16).to_be_bytes());
            for v in &query.verifiers {
                out.extend_from_slice(v.as_bytes());
            }
        }
        Message::MatchAnnounce(ann) => {
            if ann.tag.len() != params.tag_len() {
                return Err(EncodeError::Mismatch("tag length"));
            }
            out.push(TYPE_MATCH_ANNOUNCE);
            out.extend_from_slice(&ann.round.to_be_bytes());
            out.extend_from_slice(&ann.index.to_be_bytes());
            put_bytes(&mut out, "tag", ann.tag.as_bytes())?;
        }
        Message::Outcome(outcome) => {
            out.push(TYPE_OUTCOME);
            match outcome {
                Outcome::KeyEstablished => out.push(OUTCOME_ESTABLISHED),
                Outcome::Abort(reason) => {
                    out.push(OUTCOME_ABORT);
                    out.push(abort_code(*reason));
                }
            }
        }
    }
    if out.len() > MAX_FRAME_LEN {
        return Err(EncodeError::FrameTooLong(out.len()));
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, kind: DecodeErrorKind) -> DecodeError {
        DecodeError {
            offset: self.pos,
            kind,
        }
    }

    fn invalid(&self, field: &'static str, detail: impl Into<String>) -> DecodeError {
        self.err(DecodeErrorKind::InvalidField {
            field,
            detail: detail.into(),
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() - self.pos < n {
            return Err(self.err(DecodeErrorKind::Truncated));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, DecodeError> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    /// Length-prefixed byte string whose length must equal `expected` if given.
    fn bytes(&mut self, field: &'static str, expected: Option<usize>) -> Result<&'a [u8], DecodeError> {
        let start = self.pos;
        let len = usize::from(self.u16()?);
        if let Some(expected) = expected {
            if len != expected {
                self.pos = start;
                return Err(self.invalid(field, format!("length {len}, expected {expected}")));
            }
        }
        self.take(len)
    }

    fn finish(&self) -> Result<(), DecodeError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(self.err(DecodeErrorKind::TrailingBytes(n))),
        }
    }
}

/// Parses one frame. Total on arbitrary input: every failure is a [`DecodeError`].
pub fn decode(bytes: &[u8], params: &ProtocolParams) -> Result<Message, DecodeError> {
    if bytes.len() > MAX_FRAME_LEN {
        return Err(DecodeError {
            offset: MAX_FRAME_LEN,
            kind: DecodeErrorKind::OverLength,
        });
    }
    let mut r = Reader { buf: bytes, pos: 0 };
    let msg = match r.u8()? {
        TYPE_SETUP => {
            let start = r.pos;
            let q = r.bytes("session id", None)?;
            let session_id = SessionId::new(q.to_vec()).map_err(|e| DecodeError {
                offset: start,
                kind: DecodeErrorKind::InvalidField {
                    field: "session id",
                    detail: e.to_string(),
                },
            })?;
            let nonce = r.bytes("global nonce", Some(params.nonce_len_global()))?;
            Message::Setup(Setup {
                session_id,
                global_nonce: nonce.to_vec(),
            })
        }
        TYPE_TEMPLATE_RESPONSE => {
            let raw = r.take(params.nonce_len())?;
            let blinded_template =
                vectorize(raw, params).map_err(|e| r.invalid("blinded template", e.to_string()))?;
            Message::TemplateResponse(TemplateResponse { blinded_template })
        }
        TYPE_QUERY => {
            let round = r.u16()?;
            let challenge = r.bytes("challenge", Some(CHALLENGE_LEN))?;
            let count_at = r.pos;
            let count = usize::from(r.u16()?);
            let max = usize::from(params.max_queries_per_round());
            if count == 0 || count > max {
                r.pos = count_at;
                return Err(r.invalid("verifier count", format!("{count} not in 1..={max}")));
            }
            let mut verifiers = Vec::with_capacity(count);
            for _ in 0..count {
                verifiers.push(Verifier::from_bytes(r.take(params.verifier_len())?.to_vec()));
            }
            Message::Query(Query {
                round,
                challenge: challenge.try_into().expect("length checked"),
                verifiers,
            })
        }
        TYPE_MATCH_ANNOUNCE => {
            let round = r.u16()?;
            let index = r.u16()?;
            let tag = r.bytes("tag", Some(params.tag_len()))?;
            Message::MatchAnnounce(MatchAnnounce {
                round,
                index,
                tag: Tag::from_bytes(tag.to_vec()),
            })
        }
        TYPE_OUTCOME => {
            let kind_at = r.pos;
            match r.u8()? {
                OUTCOME_ESTABLISHED => Message::Outcome(Outcome::KeyEstablished),
                OUTCOME_ABORT => {
                    let reason_at = r.pos;
                    let reason = match r.u8()? {
                        0x01 => AbortReason::TagMismatch,
                        0x02 => AbortReason::RoundLimit,
                        0x03 => AbortReason::ProtocolViolation,
                        other => {
                            r.pos = reason_at;
                            return Err(r.invalid("abort reason", format!("{other:#04x}")));
                        }
                    };
                    Message::Outcome(Outcome::Abort(reason))
                }
                other => {
                    r.pos = kind_at;
                    return Err(r.invalid("outcome kind", format!("{other:#04x}")));
                }
            }
        }
        other => {
            return Err(DecodeError {
                offset: 0,
                kind: DecodeErrorKind::UnknownType(other),
            })
        }
    };
    r.finish()?;
    Ok(msg)
}
