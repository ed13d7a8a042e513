//! Authentication and key agreement: MILENAGE f1–f5, authentication-vector
//! construction on the network side, challenge processing on the MT side,
//! and the identity masking/encryption used in the first message.

mod identity;
mod milenage;

use std::fmt;

use subtle::ConstantTimeEq;
use thiserror::Error;

pub use identity::{
    decrypt_tim, decrypt_tim_bound, encrypt_tim, encrypt_tim_bound, mask_im, prf, prf_block_ops,
    unmask_tim, AEAD_TIM_BLOCK_OPS, TIM_CIPHERTEXT_LEN, TIM_ENC_LABEL, TIM_MASK_LABEL,
};
pub use milenage::{Milenage, MilenageOutputs, OperatorConstant};

pub type Block = [u8; 16];
pub type Amf = [u8; 2];

/// Default authentication management field (separation bit set).
pub const DEFAULT_AMF: Amf = [0x80, 0x00];
pub const DEFAULT_SQN_WINDOW: u64 = 32;
pub const SQN_MAX: u64 = (1 << 48) - 1;

/// A 128-bit secret key.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Key128(pub [u8; 16]);

impl Key128 {
    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }
}

impl fmt::Debug for Key128 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Key128({})", hex::encode(self.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum AkaError {
    #[error("MAC mismatch: network not authenticated")]
    MacMismatch,
    #[error("sequence number {sqn} outside ({last}, {last} + {window}]")]
    SqnOutOfRange { sqn: u64, last: u64, window: u64 },
    #[error("sequence number {sqn} already issued (last issued {last})")]
    SqnReuse { sqn: u64, last: u64 },
    #[error("sequence number exceeds 48 bits")]
    SqnOverflow,
    #[error("authentication tag invalid")]
    AuthTagInvalid,
    #[error("sequence window must be at least 1")]
    ZeroWindow,
}

/// 48-bit sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sqn(u64);

impl Sqn {
    pub fn new(v: u64) -> Result<Self, AkaError> {
        if v > SQN_MAX {
            return Err(AkaError::SqnOverflow);
        }
        Ok(Self(v))
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn to_bytes(self) -> [u8; 6] {
        self.0.to_be_bytes()[2..].try_into().unwrap()
    }

    pub fn from_bytes(b: [u8; 6]) -> Self {
        let mut full = [0u8; 8];
        full[2..].copy_from_slice(&b);
        Self(u64::from_be_bytes(full))
    }
}

/// AUTN = (SQN ⊕ AK) ‖ AMF ‖ MAC: 48 + 16 + 64 = 128 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Autn {
    pub sqn_xor_ak: [u8; 6],
    pub amf: Amf,
    pub mac: [u8; 8],
}

impl Autn {
    pub const LEN: usize = 16;

    pub fn to_bytes(&self) -> [u8; 16] {
        let mut out = [0u8; 16];
        out[..6].copy_from_slice(&self.sqn_xor_ak);
        out[6..8].copy_from_slice(&self.amf);
        out[8..].copy_from_slice(&self.mac);
        out
    }

    pub fn from_bytes(b: &[u8; 16]) -> Self {
        Self {
            sqn_xor_ak: b[..6].try_into().unwrap(),
            amf: b[6..8].try_into().unwrap(),
            mac: b[8..].try_into().unwrap(),
        }
    }
}

/// One-time authentication vector {RAND, XRES, CK, IK, AUTN}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuthVector {
    pub rand: Block,
    pub xres: [u8; 8],
    pub ck: Block,
    pub ik: Block,
    pub autn: Autn,
}

/// MT-side replay state: the last accepted SQN and the acceptance span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SqnState {
    pub last_accepted: u64,
    pub window: u64,
}

impl SqnState {
    pub fn new(window: u64) -> Result<Self, AkaError> {
        if window == 0 {
            return Err(AkaError::ZeroWindow);
        }
        Ok(Self {
            last_accepted: 0,
            window,
        })
    }

    /// Strictly greater than the last accepted value and at most `window` ahead.
    pub fn accepts(&self, sqn: u64) -> bool {
        sqn > self.last_accepted && sqn - self.last_accepted <= self.window
    }
}

impl Default for SqnState {
    fn default() -> Self {
        Self::new(DEFAULT_SQN_WINDOW).unwrap()
    }
}

/// Network-side SQN bookkeeping for one identity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SqnIssuer {
    last_issued: u64,
}

impl SqnIssuer {
    pub fn last_issued(&self) -> u64 {
        self.last_issued
    }

    pub fn next(&self) -> Result<Sqn, AkaError> {
        Sqn::new(self.last_issued + 1)
    }
}

/// Builds an authentication vector and records `sqn` as issued.
pub fn build_av(
    m: &Milenage,
    sqn: Sqn,
    amf: &Amf,
    rand: &Block,
    issuer: &mut SqnIssuer,
) -> Result<AuthVector, AkaError> {
    if sqn.value() <= issuer.last_issued {
        return Err(AkaError::SqnReuse {
            sqn: sqn.value(),
            last: issuer.last_issued,
        });
    }
    let out = m.all(rand, sqn, amf);
    let mut sqn_xor_ak = sqn.to_bytes();
    for (s, a) in sqn_xor_ak.iter_mut().zip(out.ak) {
        *s ^= a;
    }
    issuer.last_issued = sqn.value();
    Ok(AuthVector {
        rand: *rand,
        xres: out.res,
        ck: out.ck,
        ik: out.ik,
        autn: Autn {
            sqn_xor_ak,
            amf: *amf,
            mac: out.mac_a,
        },
    })
}

/// Result of a challenge the MT accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChallengeAccepted {
    pub res: [u8; 8],
    pub ck: Block,
    pub ik: Block,
    pub sqn: Sqn,
    pub new_state: SqnState,
}

/// MT-side verification of (RAND, AUTN).
///
/// The MAC is checked before the sequence number: a RAND or AUTN forged
/// without the key yields a garbage SQN, and reporting that as a MAC failure
/// keeps the two error classes meaningful.
pub fn mt_process_challenge(
    m: &Milenage,
    rand: &Block,
    autn: &Autn,
    state: &SqnState,
) -> Result<ChallengeAccepted, AkaError> {
    let (res, ak) = m.f2_f5(rand);
    let mut sqn_bytes = autn.sqn_xor_ak;
    for (s, a) in sqn_bytes.iter_mut().zip(ak) {
        *s ^= a;
    }
    let sqn = Sqn::from_bytes(sqn_bytes);
    let xmac = m.f1(rand, sqn, &autn.amf);
    if !bool::from(xmac.ct_eq(&autn.mac)) {
        return Err(AkaError::MacMismatch);
    }
    if !state.accepts(sqn.value()) {
        return Err(AkaError::SqnOutOfRange {
            sqn: sqn.value(),
            last: state.last_accepted,
            window: state.window,
        });
    }
    Ok(ChallengeAccepted {
        res,
        ck: m.f3(rand),
        ik: m.f4(rand),
        sqn,
        new_state: SqnState {
            last_accepted: sqn.value(),
            window: state.window,
        },
    })
}

/// Constant-time RES = XRES.
pub fn verify_res(res: &[u8; 8], xres: &[u8; 8]) -> bool {
    res.ct_eq(xres).into()
}
