//! 64-bit parameter digests used for cross-node agreement checks.

use sha2::{Digest, Sha256};

/// Digest of a parameter vector: the first 8 bytes of the SHA-256 of its
/// little-endian f64 encoding, read little-endian. Any single-bit change to
/// any coordinate changes the digest.
pub fn checksum_f64s(values: &[f64]) -> u64 {
    let mut hasher = Sha256::new();
    for v in values {
        hasher.update(v.to_le_bytes());
    }
    let out = hasher.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("sha256 yields at least 8 bytes"))
}

/// Fixed-width hex form used in progress logs.
pub fn checksum_hex(c: u64) -> String {
    format!("{c:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = checksum_f64s(&[1.0, 2.0, 3.0]);
        assert_eq!(a, checksum_f64s(&[1.0, 2.0, 3.0]));
        assert_ne!(a, checksum_f64s(&[1.0, 2.0, 3.0000000000000004]));
        assert_ne!(a, checksum_f64s(&[1.0, 2.0]));
        // -0.0 and 0.0 differ in bytes, so they must differ in digest.
        assert_ne!(checksum_f64s(&[0.0]), checksum_f64s(&[-0.0]));
    }

    #[test]
    fn hex_is_fixed_width() {
        assert_eq!(checksum_hex(0xab), "00000000000000ab");
    }
}
