//! Hash commitment over a session's pre-generated draws.
//!
//! Canonical byte layout, per draw in level order: `xi` as the 8 big-endian
//! bytes of its IEEE-754 bit pattern, then `d` as one byte. The 16-byte nonce
//! is appended and the whole buffer hashed with SHA-256. The commitment is
//! the lowercase hex digest.

use sha2::{Digest, Sha256};

use crate::mechanism::GenieDraw;

pub const NONCE_LEN: usize = 16;

pub fn canonical_bytes(draws: &[GenieDraw]) -> Vec<u8> {
    let mut buf = Vec::with_capacity(draws.len() * 9);
    for draw in draws {
        buf.extend_from_slice(&draw.xi.to_bits().to_be_bytes());
        buf.push(draw.d);
    }
    buf
}

pub fn commit(draws: &[GenieDraw], nonce: &[u8; NONCE_LEN]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(canonical_bytes(draws));
    hasher.update(nonce);
    hex::encode(hasher.finalize())
}

pub fn verify(commitment: &str, draws: &[GenieDraw], nonce: &[u8; NONCE_LEN]) -> bool {
    commit(draws, nonce) == commitment
}
