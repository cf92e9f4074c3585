//! SHA-256 helpers and canonical JSON encoding.
//!
//! Canonical JSON is plain `serde_json` output: struct fields keep declaration
//! order and every map in the data model is a `BTreeMap`, so equal values
//! always encode to equal bytes.

use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: impl AsRef<[u8]>) -> String {
    hex::encode(Sha256::digest(bytes.as_ref()))
}

/// First eight bytes of SHA-256, big-endian.
pub fn stable_hash64(bytes: impl AsRef<[u8]>) -> u64 {
    let d = Sha256::digest(bytes.as_ref());
    let mut head = [0u8; 8];
    head.copy_from_slice(&d[..8]);
    u64::from_be_bytes(head)
}

pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("in-memory values always serialize")
}

pub fn digest_of<T: Serialize + ?Sized>(value: &T) -> String {
    sha256_hex(canonical_json(value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_vectors() {
        assert_eq!(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
        assert_eq!(stable_hash64("abc"), 0xba78_16bf_8f01_cfea);
    }
}
