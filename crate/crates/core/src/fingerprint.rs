//! Fingerprint key: the mean received signal strength of an RSS vector,
//! expanded into a 128-bit key.
//!
//! The MT computes it from its own measurement and the AS from the bytes of
//! the same vector as received, so both sides land on the same key without
//! the key ever being transmitted.

use crate::aka::{prf, Key128};
use crate::wire::{decode_rss_vector, RssVector, WireError};

/// Context label mixed into the key expansion.
pub const KEY_CONTEXT: &[u8] = b"xlayer-k";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FingerprintKey {
    pub mean_cdbm: i32,
    pub key: Key128,
}

/// Arithmetic mean of integer cdBm values, rounded half to even. `None` for
/// an empty slice.
pub fn mean_cdbm(values: &[i32]) -> Option<i32> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as i64;
    let sum: i64 = values.iter().map(|&v| v as i64).sum();
    let q = sum.div_euclid(n);
    let r = sum.rem_euclid(n);
    let rounded = match (2 * r).cmp(&n) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q & 1),
    };
    Some(rounded as i32)
}

/// Mean RSS of the vector; arrival times do not contribute.
pub fn mean_rss(v: &RssVector) -> i32 {
    let values: Vec<i32> = v.readings().iter().map(|r| r.rss_cdbm).collect();
    mean_cdbm(&values).expect("RssVector is never empty")
}

/// key = CMAC_{0^128}(be32(mean) ‖ context).
pub fn derive_key(mean_cdbm: i32, context: &[u8]) -> Key128 {
    let mut input = Vec::with_capacity(4 + context.len());
    input.extend_from_slice(&mean_cdbm.to_be_bytes());
    input.extend_from_slice(context);
    Key128(prf(&Key128::default(), &input))
}

pub fn fingerprint(v: &RssVector) -> FingerprintKey {
    let mean = mean_rss(v);
    FingerprintKey {
        mean_cdbm: mean,
        key: derive_key(mean, KEY_CONTEXT),
    }
}

/// AS-side derivation straight from the received vector encoding.
pub fn fingerprint_from_wire(rss_bytes: &[u8]) -> Result<FingerprintKey, WireError> {
    Ok(fingerprint(&decode_rss_vector(rss_bytes)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::RssReading;
    use hex_literal::hex;

    fn vector(values: &[i32]) -> RssVector {
        RssVector::new(
            values
                .iter()
                .enumerate()
                .map(|(i, &v)| RssReading::new(i as u32 + 1, v, 1000 + i as u64).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn mean_examples() {
        assert_eq!(mean_rss(&vector(&[-6000, -7000, -8000])), -7000);
        assert_eq!(mean_rss(&vector(&[-6550])), -6550);
        assert_eq!(mean_rss(&vector(&[-6000, -6001])), -6000);
        assert_eq!(mean_cdbm(&[]), None);
    }

    #[test]
    fn half_to_even() {
        // -6000.5 -> -6000 (even), -6001.5 -> -6002 (even)
        assert_eq!(mean_cdbm(&[-6001, -6002]), Some(-6002));
        assert_eq!(mean_cdbm(&[-1, -2]), Some(-2));
        assert_eq!(mean_cdbm(&[-1, 0]), Some(0));
        assert_eq!(mean_cdbm(&[-3, -4]), Some(-4));
        // thirds never tie
        assert_eq!(mean_cdbm(&[-1, -1, 0]), Some(-1));
        assert_eq!(mean_cdbm(&[-1, 0, 0]), Some(0));
    }

    #[test]
    fn toa_excluded() {
        let a = vector(&[-6000, -7000]);
        let b = RssVector::new(vec![
            RssReading::new(1, -6000, 9_999_999).unwrap(),
            RssReading::new(2, -7000, 5).unwrap(),
        ])
        .unwrap();
        assert_eq!(fingerprint(&a), fingerprint(&b));
    }

    #[test]
    fn derive_key_golden() {
        // Frozen from tests/oracle/gen_vectors.py
        assert_eq!(
            derive_key(-7000, KEY_CONTEXT).0,
            hex!("624326eca018235c8bbd6b638cc73cd1")
        );
        assert_eq!(
            derive_key(-6999, KEY_CONTEXT).0,
            hex!("16e26cc92a46df2cc6cc9e008b7e97a5")
        );
    }

    #[test]
    fn wire_composition() {
        let v = vector(&[-6000, -7000, -8000]);
        let as_side = fingerprint_from_wire(&v.to_bytes()).unwrap();
        assert_eq!(as_side, fingerprint(&v));
        assert_eq!(as_side.mean_cdbm, -7000);
        assert_eq!(as_side.key, derive_key(-7000, KEY_CONTEXT));
        assert!(fingerprint_from_wire(&[0, 0, 0, 2, 1]).is_err());
    }

    #[test]
    fn key_sensitivity_sweep() {
        let mut seen = std::collections::HashSet::new();
        for mean in -7500..=-6500 {
            assert!(seen.insert(derive_key(mean, KEY_CONTEXT)), "collision at {mean}");
        }
    }
}
