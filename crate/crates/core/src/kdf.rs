//! Cell-keyed key derivation, truncated MACs and constant-time comparison.
//!
//! [`bbkdf`] derives a key from the *cell* a vector occupies rather than from
//! the vector itself: every vector inside one cell yields the same key, and
//! vectors in different cells yield unrelated HKDF outputs.

use std::cell::Cell;

use hkdf::Hkdf;
use hmac::{Hmac, KeyInit, Mac};
use sha2::Sha256;
use subtle::{Choice, ConditionallySelectable, ConstantTimeEq};

use crate::params::{ParamError, ProtocolParams, MAC_OUTPUT_LEN};
use crate::vector::{cell_index, FeatureVector};

/// HKDF salt for the cell KDF.
pub const BBKDF_SALT: &[u8] = b"oBAKE-bbkdf-v1";

type HmacSha256 = Hmac<Sha256>;

macro_rules! secret_bytes {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, PartialEq, Eq, Hash)]
        pub struct $name(Vec<u8>);

        impl $name {
            pub fn from_bytes(bytes: Vec<u8>) -> Self {
                Self(bytes)
            }

            pub fn as_bytes(&self) -> &[u8] {
                &self.0
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }
        }

        impl AsRef<[u8]> for $name {
            fn as_ref(&self) -> &[u8] {
                &self.0
            }
        }

        impl std::fmt::Debug for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                write!(f, concat!(stringify!($name), "({} bytes)"), self.0.len())
            }
        }
    };
}

secret_bytes!(
    /// Output of [`bbkdf`]: `K'`, `K_{r,i}` and the final shared key.
    DerivedKey
);
secret_bytes!(
    /// Truncated MAC over `q || N^G`, compared by the token.
    Verifier
);
secret_bytes!(
    /// Truncated MAC over `q || S_r` proving the token knows its key.
    Tag
);

thread_local! {
    static BBKDF_CALLS: Cell<u64> = const { Cell::new(0) };
    static MAC_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Per-thread tally of KDF and MAC invocations.
///
/// The role state machines run synchronously on the caller's thread, so a
/// snapshot taken before and after a call isolates that call's work.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CallCounts {
    pub bbkdf: u64,
    pub mac: u64,
}

impl CallCounts {
    pub fn snapshot() -> Self {
        Self {
            bbkdf: BBKDF_CALLS.with(Cell::get),
            mac: MAC_CALLS.with(Cell::get),
        }
    }

    /// Calls made since `earlier`.
    pub fn since(earlier: Self) -> Self {
        let now = Self::snapshot();
        Self {
            bbkdf: now.bbkdf - earlier.bbkdf,
            mac: now.mac - earlier.mac,
        }
    }
}

fn bump(counter: &'static std::thread::LocalKey<Cell<u64>>) {
    counter.with(|c| c.set(c.get() + 1));
}

fn params_info(params: &ProtocolParams) -> Vec<u8> {
    let mut info = Vec::with_capacity(5 + 4 * params.dim());
    info.extend_from_slice(&(params.dim() as u32).to_be_bytes());
    info.push(params.bits().bits() as u8);
    for &t in params.thresholds() {
        info.extend_from_slice(&t.to_be_bytes());
    }
    info
}

/// Derives a `key_len`-byte key from the cell index of `v`.
///
/// `ikm` is the cell index with each coordinate as a big-endian `u32`; the
/// parameters are bound through HKDF `info` so different geometries never
/// share keys.
pub fn bbkdf(v: &FeatureVector, params: &ProtocolParams) -> Result<DerivedKey, ParamError> {
    let cells = cell_index(v, params)?;
    bump(&BBKDF_CALLS);
    let ikm: Vec<u8> = cells.iter().flat_map(|c| c.to_be_bytes()).collect();
    let hk = Hkdf::<Sha256>::new(Some(BBKDF_SALT), &ikm);
    let mut okm = vec![0u8; params.key_len()];
    hk.expand(&params_info(params), &mut okm)
        .map_err(|_| ParamError::Invalid("key_len too long for HKDF-SHA-256".into()))?;
    Ok(DerivedKey(okm))
}

/// HMAC-SHA-256 of `message` under `key`, truncated to `out_len` bytes.
pub fn mac(message: &[u8], key: &DerivedKey, out_len: usize) -> Result<Vec<u8>, ParamError> {
    if out_len > MAC_OUTPUT_LEN {
        return Err(ParamError::OutOfRange {
            what: "mac output length",
            min: 0,
            max: MAC_OUTPUT_LEN,
            got: out_len,
        });
    }
    bump(&MAC_CALLS);
    let mut h = <HmacSha256 as KeyInit>::new_from_slice(key.as_bytes())
        .expect("HMAC accepts keys of any length");
    h.update(message);
    let digest = h.finalize().into_bytes();
    Ok(digest[..out_len].to_vec())
}

/// Verifier `v = mac(q || N^G, key)` truncated to `verifier_len`.
pub fn verifier(
    session_id: &[u8],
    global_nonce: &[u8],
    key: &DerivedKey,
    params: &ProtocolParams,
) -> Verifier {
    let msg = [session_id, global_nonce].concat();
    Verifier(mac(&msg, key, params.verifier_len()).expect("verifier_len validated by params"))
}

/// Tag `T = mac(q || S_r, key)` truncated to `tag_len`.
pub fn tag(session_id: &[u8], challenge: &[u8], key: &DerivedKey, params: &ProtocolParams) -> Tag {
    let msg = [session_id, challenge].concat();
    Tag(mac(&msg, key, params.tag_len()).expect("tag_len validated by params"))
}

/// Equality whose running time does not depend on where inputs differ.
pub fn ct_equal(a: &[u8], b: &[u8]) -> bool {
    a.ct_eq(b).into()
}

/// Index of the first candidate equal to `needle`.
///
/// Every candidate is compared; the scan does not stop at the first hit.
pub fn ct_find_first<'a>(
    candidates: impl IntoIterator<Item = &'a [u8]>,
    needle: &[u8],
) -> Option<usize> {
    let mut found = Choice::from(0);
    let mut index = 0u64;
    for (i, candidate) in candidates.into_iter().enumerate() {
        let eq = candidate.ct_eq(needle);
        index = u64::conditional_select(&index, &(i as u64), eq & !found);
        found |= eq;
    }
    bool::from(found).then_some(index as usize)
}
