//! Feature vectors over `Z_{2^k}` and the cell geometry used by the fuzzy KDF.
//!
//! The vector space is partitioned per dimension into half-open cells
//! `[j * w_i, (j + 1) * w_i)` with `w_i = 2 t_i`. Because `w_i` divides `2^k`
//! the partition is uniform under modular wrap, so any translation maps cells
//! onto cells. [`centralize`] moves a vector to the centre of its cell; adding
//! a small difference to a centre keeps the result in the same cell.

use crate::params::{ComponentBits, ParamError, ProtocolParams};

/// A fixed-dimension vector whose components are reduced modulo `2^k`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct FeatureVector {
    bits: ComponentBits,
    components: Vec<u32>,
}

impl std::fmt::Debug for FeatureVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FeatureVector<{}>{:?}", self.bits, self.components)
    }
}

impl FeatureVector {
    /// Validates `components` against `params`.
    pub fn new(components: Vec<u32>, params: &ProtocolParams) -> Result<Self, ParamError> {
        if components.len() != params.dim() {
            return Err(ParamError::DimensionMismatch {
                expected: params.dim(),
                got: components.len(),
            });
        }
        let bits = params.bits();
        if let Some((dim, &value)) = components
            .iter()
            .enumerate()
            .find(|(_, &c)| u64::from(c) >= bits.modulus())
        {
            return Err(ParamError::ComponentOutOfRange {
                dim,
                value: u64::from(value),
            });
        }
        Ok(Self { bits, components })
    }

    /// Reduces each signed component modulo `2^k`.
    pub fn from_signed(components: &[i64], params: &ProtocolParams) -> Result<Self, ParamError> {
        let bits = params.bits();
        Self::new(components.iter().map(|&c| bits.reduce(c)).collect(), params)
    }

    pub fn zero(params: &ProtocolParams) -> Self {
        Self {
            bits: params.bits(),
            components: vec![0; params.dim()],
        }
    }

    pub fn components(&self) -> &[u32] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn bits(&self) -> ComponentBits {
        self.bits
    }

    /// Checks that the vector belongs to the space described by `params`.
    pub fn check(&self, params: &ProtocolParams) -> Result<(), ParamError> {
        if self.bits != params.bits() {
            return Err(ParamError::BitsMismatch {
                expected: params.bits(),
                got: self.bits,
            });
        }
        if self.dim() != params.dim() {
            return Err(ParamError::DimensionMismatch {
                expected: params.dim(),
                got: self.dim(),
            });
        }
        Ok(())
    }

    fn zip_with(
        &self,
        other: &Self,
        op: impl Fn(i64, i64) -> i64,
    ) -> Result<Self, ParamError> {
        if self.bits != other.bits {
            return Err(ParamError::BitsMismatch {
                expected: self.bits,
                got: other.bits,
            });
        }
        if self.dim() != other.dim() {
            return Err(ParamError::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(&a, &b)| self.bits.reduce(op(a.into(), b.into())))
            .collect();
        Ok(Self {
            bits: self.bits,
            components,
        })
    }

    /// Componentwise sum modulo `2^k`.
    pub fn wrapping_add(&self, other: &Self) -> Result<Self, ParamError> {
        self.zip_with(other, |a, b| a + b)
    }

    /// Componentwise difference modulo `2^k`.
    pub fn wrapping_sub(&self, other: &Self) -> Result<Self, ParamError> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Centered representatives of the components, each in `[-2^(k-1), 2^(k-1))`.
    pub fn centered(&self) -> Vec<i64> {
        self.components
            .iter()
            .map(|&c| self.bits.centered(c))
            .collect()
    }

    /// Big-endian byte encoding, `k/8` bytes per component. Inverse of [`vectorize`].
    pub fn to_bytes(&self) -> Vec<u8> {
        let width = self.bits.bytes();
        let mut out = Vec::with_capacity(self.dim() * width);
        for &c in &self.components {
            out.extend_from_slice(&c.to_be_bytes()[4 - width..]);
        }
        out
    }
}

/// Componentwise sum modulo `2^k`.
pub fn vec_add(a: &FeatureVector, b: &FeatureVector) -> Result<FeatureVector, ParamError> {
    a.wrapping_add(b)
}

/// Componentwise difference modulo `2^k`.
pub fn vec_sub(a: &FeatureVector, b: &FeatureVector) -> Result<FeatureVector, ParamError> {
    a.wrapping_sub(b)
}

/// Splits a nonce into `dim` big-endian chunks of `k/8` bytes each.
///
/// This is a bijection between `dim * k / 8`-byte strings and vectors.
pub fn vectorize(nonce: &[u8], params: &ProtocolParams) -> Result<FeatureVector, ParamError> {
    if nonce.len() != params.nonce_len() {
        return Err(ParamError::NonceLength {
            expected: params.nonce_len(),
            got: nonce.len(),
        });
    }
    let components = nonce
        .chunks_exact(params.bits().bytes())
        .map(|chunk| chunk.iter().fold(0u32, |acc, &b| (acc << 8) | u32::from(b)))
        .collect();
    Ok(FeatureVector {
        bits: params.bits(),
        components,
    })
}

/// Per-dimension cell coordinates `floor(v_i / w_i)`.
pub fn cell_index(v: &FeatureVector, params: &ProtocolParams) -> Result<Vec<u32>, ParamError> {
    v.check(params)?;
    Ok(v
        .components
        .iter()
        .enumerate()
        .map(|(i, &c)| (u64::from(c) / params.cell_width(i)) as u32)
        .collect())
}

/// Maps every component to the centre `w_i * floor(v_i / w_i) + t_i` of its cell.
pub fn centralize(v: &FeatureVector, params: &ProtocolParams) -> Result<FeatureVector, ParamError> {
    v.check(params)?;
    let components = v
        .components
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            let w = params.cell_width(i);
            (u64::from(c) / w * w + u64::from(params.thresholds()[i])) as u32
        })
        .collect();
    Ok(FeatureVector {
        bits: v.bits,
        components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p8(dim: usize, t: u32) -> ProtocolParams {
        ProtocolParams::uniform(dim, 8, t).unwrap()
    }

    fn v(c: &[u32], p: &ProtocolParams) -> FeatureVector {
        FeatureVector::new(c.to_vec(), p).unwrap()
    }

    #[test]
    fn add_wraps() {
        let p = p8(2, 4);
        let sum = vec_add(&v(&[250, 10], &p), &v(&[10, 10], &p)).unwrap();
        assert_eq!(sum.components(), &[4, 20]);
        let sum = vec_add(&v(&[100, 50], &p), &v(&[2, 8], &p)).unwrap();
        assert_eq!(sum.components(), &[102, 58]);
        let a = v(&[17, 201], &p);
        assert_eq!(vec_add(&a, &FeatureVector::zero(&p)).unwrap(), a);
    }

    #[test]
    fn sub_wraps() {
        let p = p8(2, 4);
        let diff = vec_sub(&v(&[4, 20], &p), &v(&[10, 10], &p)).unwrap();
        assert_eq!(diff.components(), &[250, 10]);
        let a = v(&[17, 201], &p);
        assert_eq!(vec_sub(&a, &a).unwrap(), FeatureVector::zero(&p));
    }

    #[test]
    fn dimension_mismatch() {
        let a = v(&[1, 2], &p8(2, 4));
        let b = v(&[1, 2, 3], &p8(3, 4));
        assert!(matches!(
            vec_add(&a, &b),
            Err(ParamError::DimensionMismatch { expected: 2, got: 3 })
        ));
        assert!(vec_sub(&a, &b).is_err());
        assert!(cell_index(&b, &p8(2, 4)).is_err());
        let wide = ProtocolParams::uniform(2, 16, 4).unwrap();
        assert!(matches!(
            vec_add(&a, &FeatureVector::zero(&wide)),
            Err(ParamError::BitsMismatch { .. })
        ));
    }

    #[test]
    fn rejects_out_of_range_component() {
        assert!(matches!(
            FeatureVector::new(vec![1, 256], &p8(2, 4)),
            Err(ParamError::ComponentOutOfRange { dim: 1, value: 256 })
        ));
    }

    #[test]
    fn vectorize_chunks_big_endian() {
        assert_eq!(
            vectorize(&[0x07, 0x09], &p8(2, 4)).unwrap().components(),
            &[7, 9]
        );
        let p16 = ProtocolParams::uniform(1, 16, 4).unwrap();
        assert_eq!(vectorize(&[0x01, 0x00], &p16).unwrap().components(), &[256]);
        let p32 = ProtocolParams::uniform(1, 32, 4).unwrap();
        assert_eq!(
            vectorize(&[0xde, 0xad, 0xbe, 0xef], &p32).unwrap().components(),
            &[0xdead_beef]
        );
        assert!(matches!(
            vectorize(&[1, 2, 3], &p8(2, 4)),
            Err(ParamError::NonceLength { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn cell_indices() {
        let p = p8(1, 4);
        assert_eq!(cell_index(&v(&[7], &p), &p).unwrap(), vec![0]);
        assert_eq!(cell_index(&v(&[9], &p), &p).unwrap(), vec![1]);
        assert_eq!(cell_index(&v(&[0], &p), &p).unwrap(), vec![0]);
        assert_eq!(cell_index(&v(&[255], &p), &p).unwrap(), vec![31]);
        let p32 = ProtocolParams::uniform(1, 32, 1 << 30).unwrap();
        let top = FeatureVector::new(vec![u32::MAX], &p32).unwrap();
        assert_eq!(cell_index(&top, &p32).unwrap(), vec![1]);
    }

    #[test]
    fn centralize_examples() {
        let p = p8(2, 4);
        assert_eq!(
            centralize(&v(&[7, 9], &p), &p).unwrap().components(),
            &[4, 12]
        );
        assert_eq!(
            centralize(&v(&[4, 4], &p), &p).unwrap().components(),
            &[4, 4]
        );
        let p32 = ProtocolParams::uniform(1, 32, 1 << 30).unwrap();
        let top = FeatureVector::new(vec![u32::MAX], &p32).unwrap();
        assert_eq!(centralize(&top, &p32).unwrap().components(), &[0xC000_0000]);
    }

    #[test]
    fn centralize_mixed_thresholds() {
        let p = ProtocolParams::new(3, 16, vec![1, 8, 512]).unwrap();
        let x = v(&[5, 100, 3000], &p);
        let c = centralize(&x, &p).unwrap();
        assert_eq!(c.components(), &[5, 104, 2560]);
    }
}
