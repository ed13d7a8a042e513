//! MILENAGE f1–f5 over AES-128.
//!
//! OPc = E_K(OP) ⊕ OP, TEMP = E_K(RAND ⊕ OPc) and
//! OUTi = E_K(rot(TEMP ⊕ OPc, ri) ⊕ ci) ⊕ OPc, with OUT1 additionally
//! mixing in SQN ‖ AMF ‖ SQN ‖ AMF.

use std::cell::Cell;

use aes::cipher::{generic_array::GenericArray, BlockEncrypt, KeyInit};
use aes::Aes128;

use super::{Amf, Block, Key128, Sqn};

const R1: u32 = 64;
const R2: u32 = 0;
const R3: u32 = 32;
const R4: u32 = 64;
const R5: u32 = 96;

const fn c(i: u8) -> Block {
    let mut b = [0u8; 16];
    b[15] = i;
    b
}

const C1: Block = c(0);
const C2: Block = c(1);
const C3: Block = c(2);
const C4: Block = c(4);
const C5: Block = c(8);

/// Network operator constant OP. The all-zero value is the default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OperatorConstant(pub Block);

/// All outputs of one MILENAGE evaluation for a given RAND.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MilenageOutputs {
    pub mac_a: [u8; 8],
    pub res: [u8; 8],
    pub ck: Block,
    pub ik: Block,
    pub ak: [u8; 6],
}

/// A MILENAGE instance keyed by a subscriber key.
///
/// Counts the AES block encryptions it performs so callers can account for
/// cipher work without instrumenting the cipher itself.
pub struct Milenage {
    cipher: Aes128,
    opc: Block,
    blocks: Cell<u64>,
}

impl Milenage {
    pub fn new(k: &Key128, op: &OperatorConstant) -> Self {
        let cipher = Aes128::new(GenericArray::from_slice(&k.0));
        let m = Self {
            cipher,
            opc: [0; 16],
            blocks: Cell::new(0),
        };
        let opc = xor(&m.encrypt(&op.0), &op.0);
        Self { opc, ..m }
    }

    /// Builds an instance from a precomputed OPc.
    pub fn with_opc(k: &Key128, opc: Block) -> Self {
        Self {
            cipher: Aes128::new(GenericArray::from_slice(&k.0)),
            opc,
            blocks: Cell::new(0),
        }
    }

    pub fn opc(&self) -> Block {
        self.opc
    }

    /// AES block encryptions performed so far.
    pub fn block_ops(&self) -> u64 {
        self.blocks.get()
    }

    fn encrypt(&self, block: &Block) -> Block {
        let mut b = GenericArray::clone_from_slice(block);
        self.cipher.encrypt_block(&mut b);
        self.blocks.set(self.blocks.get() + 1);
        b.into()
    }

    fn temp(&self, rand: &Block) -> Block {
        self.encrypt(&xor(rand, &self.opc))
    }

    fn out1(&self, temp: &Block, sqn: Sqn, amf: &Amf) -> Block {
        let sqn = sqn.to_bytes();
        let mut in1 = [0u8; 16];
        in1[..6].copy_from_slice(&sqn);
        in1[6..8].copy_from_slice(amf);
        in1[8..14].copy_from_slice(&sqn);
        in1[14..].copy_from_slice(amf);
        let x = xor(&xor(temp, &rot(&xor(&in1, &self.opc), R1)), &C1);
        xor(&self.encrypt(&x), &self.opc)
    }

    fn out_n(&self, temp: &Block, r: u32, cn: &Block) -> Block {
        let x = xor(&rot(&xor(temp, &self.opc), r), cn);
        xor(&self.encrypt(&x), &self.opc)
    }

    /// f1: network authentication code (64 bits).
    pub fn f1(&self, rand: &Block, sqn: Sqn, amf: &Amf) -> [u8; 8] {
        let t = self.temp(rand);
        first::<8>(&self.out1(&t, sqn, amf))
    }

    /// f1*: resynchronisation code. Not used by the protocol; kept for the
    /// conformance check.
    pub fn f1_star(&self, rand: &Block, sqn: Sqn, amf: &Amf) -> [u8; 8] {
        let t = self.temp(rand);
        let out = self.out1(&t, sqn, amf);
        out[8..].try_into().unwrap()
    }

    /// f2 (RES) and f5 (AK) share OUT2.
    pub fn f2_f5(&self, rand: &Block) -> ([u8; 8], [u8; 6]) {
        let t = self.temp(rand);
        let out = self.out_n(&t, R2, &C2);
        (out[8..].try_into().unwrap(), first::<6>(&out))
    }

    pub fn f2(&self, rand: &Block) -> [u8; 8] {
        self.f2_f5(rand).0
    }

    pub fn f3(&self, rand: &Block) -> Block {
        let t = self.temp(rand);
        self.out_n(&t, R3, &C3)
    }

    pub fn f4(&self, rand: &Block) -> Block {
        let t = self.temp(rand);
        self.out_n(&t, R4, &C4)
    }

    pub fn f5(&self, rand: &Block) -> [u8; 6] {
        self.f2_f5(rand).1
    }

    pub fn f5_star(&self, rand: &Block) -> [u8; 6] {
        let t = self.temp(rand);
        first::<6>(&self.out_n(&t, R5, &C5))
    }

    /// Evaluates f1..f5 sharing one TEMP: five block encryptions.
    pub fn all(&self, rand: &Block, sqn: Sqn, amf: &Amf) -> MilenageOutputs {
        let t = self.temp(rand);
        let out1 = self.out1(&t, sqn, amf);
        let out2 = self.out_n(&t, R2, &C2);
        MilenageOutputs {
            mac_a: first::<8>(&out1),
            res: out2[8..].try_into().unwrap(),
            ak: first::<6>(&out2),
            ck: self.out_n(&t, R3, &C3),
            ik: self.out_n(&t, R4, &C4),
        }
    }
}

fn first<const N: usize>(b: &Block) -> [u8; N] {
    b[..N].try_into().unwrap()
}

pub(crate) fn xor(a: &Block, b: &Block) -> Block {
    let mut out = [0u8; 16];
    for i in 0..16 {
        out[i] = a[i] ^ b[i];
    }
    out
}

/// Cyclic left rotation of a 128-bit big-endian block by `r` bits.
fn rot(b: &Block, r: u32) -> Block {
    u128::from_be_bytes(*b).rotate_left(r).to_be_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;
    use hex_literal::hex;

    // 3GPP TS 35.207 test set 1
    const K: [u8; 16] = hex!("465b5ce8b199b49faa5f0a2ee238a6bc");
    const RAND: [u8; 16] = hex!("23553cbe9637a89d218ae64dae47bf35");
    const SQN: [u8; 6] = hex!("ff9bb4d0b607");
    const AMF: [u8; 2] = hex!("b9b9");
    const OP: [u8; 16] = hex!("cdc202d5123e20f62b6d676ac72cb318");

    #[test]
    fn conformance_set_1() {
        let m = Milenage::new(&Key128(K), &OperatorConstant(OP));
        let sqn = Sqn::from_bytes(SQN);
        assert_eq!(m.opc(), hex!("cd63cb71954a9f4e48a5994e37a02baf"));
        assert_eq!(m.f1(&RAND, sqn, &AMF), hex!("4a9ffac354dfafb3"));
        assert_eq!(m.f1_star(&RAND, sqn, &AMF), hex!("01cfaf9ec4e871e9"));
        assert_eq!(m.f2(&RAND), hex!("a54211d5e3ba50bf"));
        assert_eq!(m.f3(&RAND), hex!("b40ba9a3c58b2a05bbf0d987b21bf8cb"));
        assert_eq!(m.f4(&RAND), hex!("f769bcd751044604127672711c6d3441"));
        assert_eq!(m.f5(&RAND), hex!("aa689c648370"));
        assert_eq!(m.f5_star(&RAND), hex!("451e8beca43b"));

        let all = m.all(&RAND, sqn, &AMF);
        assert_eq!(all.mac_a, hex!("4a9ffac354dfafb3"));
        assert_eq!(all.res, hex!("a54211d5e3ba50bf"));
        assert_eq!(all.ak, hex!("aa689c648370"));
    }

    #[test]
    fn precomputed_opc_matches() {
        let a = Milenage::new(&Key128(K), &OperatorConstant(OP));
        let b = Milenage::with_opc(&Key128(K), a.opc());
        assert_eq!(a.f3(&RAND), b.f3(&RAND));
    }

    #[test]
    fn block_accounting() {
        let m = Milenage::new(&Key128(K), &OperatorConstant::default());
        assert_eq!(m.block_ops(), 1);
        m.all(&RAND, Sqn::new(1).unwrap(), &AMF);
        assert_eq!(m.block_ops(), 6);
    }

    #[test]
    fn rotation() {
        let b = hex!("0102030405060708090a0b0c0d0e0f10");
        assert_eq!(rot(&b, 0), b);
        assert_eq!(rot(&b, 64), hex!("090a0b0c0d0e0f100102030405060708"));
        assert_eq!(rot(&b, 32), hex!("05060708090a0b0c0d0e0f1001020304"));
    }
}
