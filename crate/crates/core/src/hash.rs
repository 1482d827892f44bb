//! Content hashing for provenance records and cache keys.

use sha2::{Digest, Sha256};

/// Hex SHA-256 of `bytes`, prefixed with the algorithm name so the scheme
/// can change without ambiguity in stored files.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("sha256:{:x}", hasher.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_prefixed() {
        let h = content_hash(b"hello");
        assert_eq!(
            h,
            "sha256:2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        );
        assert_ne!(content_hash(b"hello"), content_hash(b"hello "));
    }
}
