//! Keyed PRF, identity masking and authenticated encryption of the masked
//! identity.

use aes::Aes128;
use aes_gcm::aead::{Aead, Payload};
use aes_gcm::{Aes128Gcm, KeyInit, Nonce};
use cmac::{Cmac, Mac};

use super::{AkaError, Block, Key128};

pub const TIM_MASK_LABEL: &[u8] = b"tim-mask";
pub const TIM_ENC_LABEL: &[u8] = b"tim-enc";

/// Length of an encrypted TIM: 16 bytes of ciphertext plus a 16-byte tag.
pub const TIM_CIPHERTEXT_LEN: usize = 32;

/// AES-CMAC, the keyed PRF used for every label-based derivation.
pub fn prf(key: &Key128, data: &[u8]) -> Block {
    let mut mac = <Cmac<Aes128> as Mac>::new_from_slice(&key.0).expect("16-byte key");
    mac.update(data);
    mac.finalize().into_bytes().into()
}

/// AES block encryptions performed by one [`prf`] call over `len` bytes:
/// one for the subkey plus one per (padded) message block.
pub fn prf_block_ops(len: usize) -> u64 {
    1 + len.div_ceil(16).max(1) as u64
}

/// AES-GCM block encryptions for a 16-byte plaintext: hash subkey, tag mask
/// and one counter block.
pub const AEAD_TIM_BLOCK_OPS: u64 = 3;

/// TIM = IM ⊕ PRF(k, "tim-mask"). Applying it twice returns the input.
pub fn mask_im(im: &Block, k: &Key128) -> Block {
    let pad = prf(k, TIM_MASK_LABEL);
    let mut out = *im;
    for (o, p) in out.iter_mut().zip(pad) {
        *o ^= p;
    }
    out
}

pub fn unmask_tim(tim: &Block, k: &Key128) -> Block {
    mask_im(tim, k)
}

fn tim_cipher(k: &Key128) -> Aes128Gcm {
    let enc_key = prf(k, TIM_ENC_LABEL);
    Aes128Gcm::new_from_slice(&enc_key).expect("16-byte key")
}

/// AES-128-GCM under PRF(k, "tim-enc").
pub fn encrypt_tim(tim: &Block, k: &Key128, nonce: &[u8; 12]) -> Vec<u8> {
    encrypt_tim_bound(tim, k, nonce, &[])
}

pub fn decrypt_tim(ciphertext: &[u8], k: &Key128, nonce: &[u8; 12]) -> Result<Block, AkaError> {
    decrypt_tim_bound(ciphertext, k, nonce, &[])
}

/// Encrypts with `aad` authenticated alongside the ciphertext. The protocol
/// binds the encoded RSS vector this way so that no field of the request can
/// be altered without breaking the tag.
pub fn encrypt_tim_bound(tim: &Block, k: &Key128, nonce: &[u8; 12], aad: &[u8]) -> Vec<u8> {
    tim_cipher(k)
        .encrypt(Nonce::from_slice(nonce), Payload { msg: tim, aad })
        .expect("in-memory encryption cannot fail")
}

pub fn decrypt_tim_bound(
    ciphertext: &[u8],
    k: &Key128,
    nonce: &[u8; 12],
    aad: &[u8],
) -> Result<Block, AkaError> {
    let pt = tim_cipher(k)
        .decrypt(
            Nonce::from_slice(nonce),
            Payload {
                msg: ciphertext,
                aad,
            },
        )
        .map_err(|_| AkaError::AuthTagInvalid)?;
    pt.try_into().map_err(|_| AkaError::AuthTagInvalid)
}
