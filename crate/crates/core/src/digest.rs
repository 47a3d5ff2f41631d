//! Stable 64-bit digests used for payload identity and trace records.

use sha2::{Digest as _, Sha256};

/// First eight bytes (big-endian) of the SHA-256 of `bytes`.
pub fn digest_bytes(bytes: &[u8]) -> u64 {
    let out = Sha256::digest(bytes);
    u64::from_be_bytes(out[..8].try_into().expect("sha256 output is 32 bytes"))
}

/// Order-sensitive combination of small integers into one digest.
pub fn digest_words(words: &[u64]) -> u64 {
    let mut buf = Vec::with_capacity(words.len() * 8);
    for w in words {
        buf.extend_from_slice(&w.to_be_bytes());
    }
    digest_bytes(&buf)
}

/// Fast, stable, non-cryptographic mix of small integers (splitmix64 finalizer).
pub fn mix_words(words: &[u64]) -> u64 {
    let mut h: u64 = 0x243f_6a88_85a3_08d3;
    for &w in words {
        h ^= w;
        h = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}
