//! Canonical binary encodings for everything that crosses an entity boundary.
//!
//! All integers are big-endian and fixed width. The MT and the AS both derive
//! the fingerprint key from these exact bytes, so the encoding of an
//! [`RssVector`] must be a pure function of its value.
//!
//! ## RSS vector
//!
//! ```text
//! count: u32 | { ap_id: u32 | rss_cdbm: i32 | toa_ns: u64 } * count
//! ```
//!
//! ## Messages
//!
//! One tag byte followed by a fixed layout per message type:
//!
//! | tag  | message             | layout after the tag                                   |
//! |------|---------------------|--------------------------------------------------------|
//! | 0x01 | `AuthRequest`       | `ct_len: u16`, `ct`, `nonce: [u8; 12]`, rss vector     |
//! | 0x02 | `AvToNs`            | `rand: [u8; 16]`, `autn: [u8; 16]`, `xres: [u8; 8]`    |
//! | 0x03 | `Challenge`         | `rand: [u8; 16]`, `autn: [u8; 16]`                     |
//! | 0x04 | `ResResponse`       | `res: [u8; 8]`                                         |
//! | 0x05 | `Verdict`           | `accept: u8 (0 or 1)`, `reason: u8`                    |
//! | 0x06 | `IdentityRequest`   | `im: [u8; 16]`                                         |
//! | 0x07 | `LegacyAuthRequest` | `im: [u8; 16]`, `key: [u8; 16]`                        |
//!
//! Tags 0x06 and 0x07 only appear in the baseline flows (plain AKA and the
//! key-over-the-air legacy mode); the cross-layer protocol uses 0x01..=0x05.
//! Trailing bytes after a complete value are rejected.

use std::fmt;

use thiserror::Error;

/// Lowest representable signal strength, −150.00 dBm.
pub const RSS_MIN_CDBM: i32 = -15_000;
/// Highest representable signal strength, 0.00 dBm.
pub const RSS_MAX_CDBM: i32 = 0;

const READING_LEN: usize = 16;
const COUNT_LEN: usize = 4;

pub const TAG_AUTH_REQUEST: u8 = 0x01;
pub const TAG_AV_TO_NS: u8 = 0x02;
pub const TAG_CHALLENGE: u8 = 0x03;
pub const TAG_RES_RESPONSE: u8 = 0x04;
pub const TAG_VERDICT: u8 = 0x05;
pub const TAG_IDENTITY_REQUEST: u8 = 0x06;
pub const TAG_LEGACY_AUTH_REQUEST: u8 = 0x07;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("buffer truncated: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("reading count {count} does not match {body_len} body bytes")]
    CountMismatch { count: u32, body_len: usize },
    #[error("{0} trailing bytes after a complete value")]
    TrailingBytes(usize),
    #[error("unknown message tag {0:#04x}")]
    UnknownTag(u8),
    #[error("unknown reason code {0}")]
    UnknownReason(u8),
    #[error("invalid field: {0}")]
    Invalid(String),
    #[error("RSS vector is empty")]
    EmptyVector,
    #[error("ap_id {prev} followed by {next}: readings must be sorted by unique ap_id")]
    Unsorted { prev: u32, next: u32 },
    #[error("rss {0} cdBm outside [-15000, 0]")]
    RssOutOfRange(i32),
    #[error("time of arrival must be strictly positive")]
    ZeroToa,
}

/// One received-signal-strength measurement from a single access point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RssReading {
    pub ap_id: u32,
    /// Signal strength in hundredths of a dBm.
    pub rss_cdbm: i32,
    /// Time of arrival, nanoseconds since the simulation epoch.
    pub toa_ns: u64,
}

impl RssReading {
    pub fn new(ap_id: u32, rss_cdbm: i32, toa_ns: u64) -> Result<Self, WireError> {
        let r = Self {
            ap_id,
            rss_cdbm,
            toa_ns,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), WireError> {
        if !(RSS_MIN_CDBM..=RSS_MAX_CDBM).contains(&self.rss_cdbm) {
            return Err(WireError::RssOutOfRange(self.rss_cdbm));
        }
        if self.toa_ns == 0 {
            return Err(WireError::ZeroToa);
        }
        Ok(())
    }
}

/// Readings from several access points, sorted by `ap_id`, never empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RssVector {
    readings: Vec<RssReading>,
}

impl RssVector {
    /// Validates that `readings` is non-empty, sorted by unique `ap_id` and
    /// that every reading is in range.
    pub fn new(readings: Vec<RssReading>) -> Result<Self, WireError> {
        check_readings(&readings)?;
        Ok(Self { readings })
    }

    /// Sorts by `ap_id` first; duplicates are still rejected.
    pub fn from_unsorted(mut readings: Vec<RssReading>) -> Result<Self, WireError> {
        readings.sort_by_key(|r| r.ap_id);
        Self::new(readings)
    }

    pub fn readings(&self) -> &[RssReading] {
        &self.readings
    }

    pub fn len(&self) -> usize {
        self.readings.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.readings.is_empty()
    }

    pub fn get(&self, ap_id: u32) -> Option<&RssReading> {
        self.readings
            .binary_search_by_key(&ap_id, |r| r.ap_id)
            .ok()
            .map(|i| &self.readings[i])
    }

    pub fn max_toa_ns(&self) -> u64 {
        self.readings.iter().map(|r| r.toa_ns).max().unwrap_or(0)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        write_readings(&self.readings, &mut out);
        out
    }

    pub fn encoded_len(&self) -> usize {
        COUNT_LEN + READING_LEN * self.readings.len()
    }

    pub fn into_readings(self) -> Vec<RssReading> {
        self.readings
    }
}

fn check_readings(readings: &[RssReading]) -> Result<(), WireError> {
    if readings.is_empty() {
        return Err(WireError::EmptyVector);
    }
    for r in readings {
        r.validate()?;
    }
    for pair in readings.windows(2) {
        if pair[0].ap_id >= pair[1].ap_id {
            return Err(WireError::Unsorted {
                prev: pair[0].ap_id,
                next: pair[1].ap_id,
            });
        }
    }
    Ok(())
}

fn write_readings(readings: &[RssReading], out: &mut Vec<u8>) {
    out.extend_from_slice(&(readings.len() as u32).to_be_bytes());
    for r in readings {
        out.extend_from_slice(&r.ap_id.to_be_bytes());
        out.extend_from_slice(&r.rss_cdbm.to_be_bytes());
        out.extend_from_slice(&r.toa_ns.to_be_bytes());
    }
}

/// Encodes raw readings, enforcing the [`RssVector`] invariants.
pub fn encode_rss_vector(readings: &[RssReading]) -> Result<Vec<u8>, WireError> {
    check_readings(readings)?;
    let mut out = Vec::with_capacity(COUNT_LEN + READING_LEN * readings.len());
    write_readings(readings, &mut out);
    Ok(out)
}

pub fn decode_rss_vector(bytes: &[u8]) -> Result<RssVector, WireError> {
    let mut r = Reader::new(bytes);
    let v = r.rss_vector()?;
    r.finish()?;
    Ok(v)
}

/// Reason codes carried by `Verdict` messages and reported in session
/// verdicts. The numeric values are part of the wire contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum ReasonCode {
    Ok = 0,
    DecryptFailed = 1,
    UnknownIdentity = 2,
    StaleRss = 3,
    ZoneRejected = 4,
    MacMismatch = 5,
    SqnOutOfRange = 6,
    UnsolicitedChallenge = 7,
    ResMismatch = 8,
    Expired = 9,
    NoPendingEntry = 10,
    HalfOpenCapacityExceeded = 11,
    TimedOut = 12,
    NoApInRange = 13,
    Malformed = 14,
}

impl ReasonCode {
    pub const ALL: [ReasonCode; 15] = [
        ReasonCode::Ok,
        ReasonCode::DecryptFailed,
        ReasonCode::UnknownIdentity,
        ReasonCode::StaleRss,
        ReasonCode::ZoneRejected,
        ReasonCode::MacMismatch,
        ReasonCode::SqnOutOfRange,
        ReasonCode::UnsolicitedChallenge,
        ReasonCode::ResMismatch,
        ReasonCode::Expired,
        ReasonCode::NoPendingEntry,
        ReasonCode::HalfOpenCapacityExceeded,
        ReasonCode::TimedOut,
        ReasonCode::NoApInRange,
        ReasonCode::Malformed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReasonCode::Ok => "ok",
            ReasonCode::DecryptFailed => "decrypt-failed",
            ReasonCode::UnknownIdentity => "unknown-identity",
            ReasonCode::StaleRss => "stale-rss",
            ReasonCode::ZoneRejected => "zone-rejected",
            ReasonCode::MacMismatch => "mac-mismatch",
            ReasonCode::SqnOutOfRange => "sqn-out-of-range",
            ReasonCode::UnsolicitedChallenge => "unsolicited-challenge",
            ReasonCode::ResMismatch => "res-mismatch",
            ReasonCode::Expired => "expired",
            ReasonCode::NoPendingEntry => "no-pending-entry",
            ReasonCode::HalfOpenCapacityExceeded => "half-open-capacity-exceeded",
            ReasonCode::TimedOut => "timed-out",
            ReasonCode::NoApInRange => "no-ap-in-range",
            ReasonCode::Malformed => "malformed",
        }
    }
}

impl TryFrom<u8> for ReasonCode {
    type Error = WireError;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        ReasonCode::ALL
            .get(v as usize)
            .copied()
            .ok_or(WireError::UnknownReason(v))
    }
}

impl fmt::Display for ReasonCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolMessage {
    /// Step 1: encrypted masked identity plus the raw RSS vector.
    AuthRequest {
        tim_ciphertext: Vec<u8>,
        nonce: [u8; 12],
        rss: RssVector,
    },
    /// Step 2 (centralized): the AS hands the NS a vector including XRES.
    AvToNs {
        rand: [u8; 16],
        autn: [u8; 16],
        xres: [u8; 8],
    },
    Challenge {
        rand: [u8; 16],
        autn: [u8; 16],
    },
    ResResponse {
        res: [u8; 8],
    },
    Verdict {
        accept: bool,
        reason: ReasonCode,
    },
    /// Plain AKA: permanent identity in the clear.
    IdentityRequest {
        im: [u8; 16],
    },
    /// Legacy baseline: identity and long-term key in the clear.
    LegacyAuthRequest {
        im: [u8; 16],
        key: [u8; 16],
    },
}

impl ProtocolMessage {
    pub fn tag(&self) -> u8 {
        match self {
            ProtocolMessage::AuthRequest { .. } => TAG_AUTH_REQUEST,
            ProtocolMessage::AvToNs { .. } => TAG_AV_TO_NS,
            ProtocolMessage::Challenge { .. } => TAG_CHALLENGE,
            ProtocolMessage::ResResponse { .. } => TAG_RES_RESPONSE,
            ProtocolMessage::Verdict { .. } => TAG_VERDICT,
            ProtocolMessage::IdentityRequest { .. } => TAG_IDENTITY_REQUEST,
            ProtocolMessage::LegacyAuthRequest { .. } => TAG_LEGACY_AUTH_REQUEST,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ProtocolMessage::AuthRequest { .. } => "AuthRequest",
            ProtocolMessage::AvToNs { .. } => "AvToNs",
            ProtocolMessage::Challenge { .. } => "Challenge",
            ProtocolMessage::ResResponse { .. } => "ResResponse",
            ProtocolMessage::Verdict { .. } => "Verdict",
            ProtocolMessage::IdentityRequest { .. } => "IdentityRequest",
            ProtocolMessage::LegacyAuthRequest { .. } => "LegacyAuthRequest",
        }
    }
}

pub fn encode_message(m: &ProtocolMessage) -> Result<Vec<u8>, WireError> {
    let mut out = vec![m.tag()];
    match m {
        ProtocolMessage::AuthRequest {
            tim_ciphertext,
            nonce,
            rss,
        } => {
            let len = u16::try_from(tim_ciphertext.len()).map_err(|_| {
                WireError::Invalid(format!(
                    "ciphertext of {} bytes exceeds u16 length prefix",
                    tim_ciphertext.len()
                ))
            })?;
            out.extend_from_slice(&len.to_be_bytes());
            out.extend_from_slice(tim_ciphertext);
            out.extend_from_slice(nonce);
            write_readings(rss.readings(), &mut out);
        }
        ProtocolMessage::AvToNs { rand, autn, xres } => {
            out.extend_from_slice(rand);
            out.extend_from_slice(autn);
            out.extend_from_slice(xres);
        }
        ProtocolMessage::Challenge { rand, autn } => {
            out.extend_from_slice(rand);
            out.extend_from_slice(autn);
        }
        ProtocolMessage::ResResponse { res } => out.extend_from_slice(res),
        ProtocolMessage::Verdict { accept, reason } => {
            out.push(u8::from(*accept));
            out.push(*reason as u8);
        }
        ProtocolMessage::IdentityRequest { im } => out.extend_from_slice(im),
        ProtocolMessage::LegacyAuthRequest { im, key } => {
            out.extend_from_slice(im);
            out.extend_from_slice(key);
        }
    }
    Ok(out)
}

pub fn decode_message(bytes: &[u8]) -> Result<ProtocolMessage, WireError> {
    let mut r = Reader::new(bytes);
    let tag = r.u8()?;
    let m = match tag {
        TAG_AUTH_REQUEST => {
            let len = r.u16()? as usize;
            let tim_ciphertext = r.take(len)?.to_vec();
            let nonce = r.array()?;
            let rss = r.rss_vector()?;
            ProtocolMessage::AuthRequest {
                tim_ciphertext,
                nonce,
                rss,
            }
        }
        TAG_AV_TO_NS => ProtocolMessage::AvToNs {
            rand: r.array()?,
            autn: r.array()?,
            xres: r.array()?,
        },
        TAG_CHALLENGE => ProtocolMessage::Challenge {
            rand: r.array()?,
            autn: r.array()?,
        },
        TAG_RES_RESPONSE => ProtocolMessage::ResResponse { res: r.array()? },
        TAG_VERDICT => {
            let accept = match r.u8()? {
                0 => false,
                1 => true,
                other => return Err(WireError::Invalid(format!("accept flag {other}"))),
            };
            let reason = ReasonCode::try_from(r.u8()?)?;
            ProtocolMessage::Verdict { accept, reason }
        }
        TAG_IDENTITY_REQUEST => ProtocolMessage::IdentityRequest { im: r.array()? },
        TAG_LEGACY_AUTH_REQUEST => ProtocolMessage::LegacyAuthRequest {
            im: r.array()?,
            key: r.array()?,
        },
        other => return Err(WireError::UnknownTag(other)),
    };
    r.finish()?;
    Ok(m)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.remaining() < n {
            return Err(WireError::Truncated {
                needed: n,
                available: self.remaining(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.array()?))
    }

    fn rss_vector(&mut self) -> Result<RssVector, WireError> {
        let count = u32::from_be_bytes(self.array()?);
        let body_len = self.remaining();
        // The vector is always the last field, so the rest of the buffer must
        // hold exactly `count` readings.
        if (count as usize).checked_mul(READING_LEN) != Some(body_len) {
            return Err(WireError::CountMismatch { count, body_len });
        }
        let mut readings = Vec::with_capacity(count as usize);
        for _ in 0..count {
            readings.push(RssReading {
                ap_id: u32::from_be_bytes(self.array()?),
                rss_cdbm: i32::from_be_bytes(self.array()?),
                toa_ns: u64::from_be_bytes(self.array()?),
            });
        }
        RssVector::new(readings)
    }

    fn finish(self) -> Result<(), WireError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(WireError::TrailingBytes(n)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reading(ap_id: u32, rss_cdbm: i32, toa_ns: u64) -> RssReading {
        RssReading::new(ap_id, rss_cdbm, toa_ns).unwrap()
    }

    #[test]
    fn single_reading_layout() {
        let bytes = encode_rss_vector(&[reading(1, -7000, 1000)]).unwrap();
        assert_eq!(
            hex::encode(&bytes),
            "00000001\
             00000001\
             ffffe4a8\
             00000000000003e8"
        );
        let v = decode_rss_vector(&bytes).unwrap();
        assert_eq!(v.readings(), &[reading(1, -7000, 1000)]);
    }

    #[test]
    fn unsorted_and_duplicate_rejected() {
        let err = encode_rss_vector(&[reading(2, -6000, 1), reading(1, -6000, 1)]).unwrap_err();
        assert_eq!(err, WireError::Unsorted { prev: 2, next: 1 });
        let err = encode_rss_vector(&[reading(3, -6000, 1), reading(3, -6100, 1)]).unwrap_err();
        assert!(matches!(err, WireError::Unsorted { .. }));
        assert_eq!(encode_rss_vector(&[]).unwrap_err(), WireError::EmptyVector);
    }

    #[test]
    fn decode_rejects_unsorted_bytes() {
        let mut bytes = vec![0, 0, 0, 2];
        for ap in [5u32, 4] {
            bytes.extend_from_slice(&ap.to_be_bytes());
            bytes.extend_from_slice(&(-5000i32).to_be_bytes());
            bytes.extend_from_slice(&1u64.to_be_bytes());
        }
        assert!(matches!(
            decode_rss_vector(&bytes),
            Err(WireError::Unsorted { prev: 5, next: 4 })
        ));
    }

    #[test]
    fn truncation_and_count_mismatch() {
        assert!(matches!(
            decode_rss_vector(&[0, 0, 1]),
            Err(WireError::Truncated { needed: 4, .. })
        ));
        let mut bytes = encode_rss_vector(&[reading(1, -7000, 1000)]).unwrap();
        bytes[3] = 2;
        assert!(matches!(
            decode_rss_vector(&bytes),
            Err(WireError::CountMismatch { count: 2, body_len: 16 })
        ));
        assert_eq!(
            decode_rss_vector(&[0, 0, 0, 0]).unwrap_err(),
            WireError::EmptyVector
        );
    }

    #[test]
    fn reading_bounds() {
        assert_eq!(
            RssReading::new(1, 1, 5).unwrap_err(),
            WireError::RssOutOfRange(1)
        );
        assert_eq!(
            RssReading::new(1, -15_001, 5).unwrap_err(),
            WireError::RssOutOfRange(-15_001)
        );
        assert_eq!(RssReading::new(1, -100, 0).unwrap_err(), WireError::ZeroToa);
        assert!(RssReading::new(1, -15_000, 1).is_ok());
        assert!(RssReading::new(1, 0, 1).is_ok());
    }

    #[test]
    fn verdict_layout() {
        let m = ProtocolMessage::Verdict {
            accept: true,
            reason: ReasonCode::Ok,
        };
        assert_eq!(encode_message(&m).unwrap(), vec![TAG_VERDICT, 0x01, 0x00]);
        assert_eq!(decode_message(&[TAG_VERDICT, 0x01, 0x00]).unwrap(), m);
        assert!(matches!(
            decode_message(&[TAG_VERDICT, 0x02, 0x00]),
            Err(WireError::Invalid(_))
        ));
        assert_eq!(
            decode_message(&[TAG_VERDICT, 0x00, 0xee]).unwrap_err(),
            WireError::UnknownReason(0xee)
        );
    }

    #[test]
    fn unknown_tag_and_trailing_bytes() {
        assert_eq!(decode_message(&[0xff]).unwrap_err(), WireError::UnknownTag(0xff));
        assert_eq!(
            decode_message(&[TAG_RES_RESPONSE, 0, 0, 0, 0, 0, 0, 0, 0, 9]).unwrap_err(),
            WireError::TrailingBytes(1)
        );
        assert!(matches!(
            decode_message(&[TAG_CHALLENGE, 1, 2]),
            Err(WireError::Truncated { .. })
        ));
        assert!(matches!(decode_message(&[]), Err(WireError::Truncated { .. })));
    }

    #[test]
    fn fixed_widths() {
        let av = ProtocolMessage::AvToNs {
            rand: [1; 16],
            autn: [2; 16],
            xres: [3; 8],
        };
        assert_eq!(encode_message(&av).unwrap().len(), 1 + 16 + 16 + 8);
        let ch = ProtocolMessage::Challenge {
            rand: [1; 16],
            autn: [2; 16],
        };
        assert_eq!(encode_message(&ch).unwrap().len(), 1 + 16 + 16);
        let res = ProtocolMessage::ResResponse { res: [7; 8] };
        assert_eq!(encode_message(&res).unwrap().len(), 9);
    }

    #[test]
    fn reason_codes_round_trip() {
        for (i, code) in ReasonCode::ALL.iter().enumerate() {
            assert_eq!(*code as u8 as usize, i);
            assert_eq!(ReasonCode::try_from(i as u8).unwrap(), *code);
        }
    }
}
