//! The sealing MAC and its canonical message layout.
//!
//! Both the sealing device and the forensic verifier MAC the exact same byte
//! string: four unsigned 64-bit little-endian fields (log id, log offset,
//! data size, key offset) followed by the raw data octets. Keeping the
//! serialization in one place is what makes device-side sealing and
//! forensic-side recomputation bit-compatible.

use hmac::{Hmac, Mac};
use sha2::Sha256;

/// Output size of the sealing MAC (HMAC-SHA-256), in octets.
pub const DIGEST_LEN: usize = 32;

/// Number of octets occupied by the fixed header fields of a seal message.
pub const SEAL_FIELDS_LEN: usize = 4 * 8;

/// Serializes the portion of a seal covered by the MAC.
pub fn seal_message(
    log_id: u64,
    log_offset: u64,
    data_size: u64,
    key_offset: u64,
    data: &[u8],
) -> Vec<u8> {
    let mut msg = Vec::with_capacity(SEAL_FIELDS_LEN + data.len());
    msg.extend_from_slice(&log_id.to_le_bytes());
    msg.extend_from_slice(&log_offset.to_le_bytes());
    msg.extend_from_slice(&data_size.to_le_bytes());
    msg.extend_from_slice(&key_offset.to_le_bytes());
    msg.extend_from_slice(data);
    msg
}

/// HMAC-SHA-256 of `message` under `key`.
pub fn hmac_sha256(key: &[u8], message: &[u8]) -> [u8; DIGEST_LEN] {
    let mut mac =
        <Hmac<Sha256> as Mac>::new_from_slice(key).expect("HMAC accepts keys of any length");
    mac.update(message);
    mac.finalize().into_bytes().into()
}

/// MAC of a full seal message: the composition used by every seal and every
/// forensic recomputation.
pub fn seal_hmac(
    key: &[u8],
    log_id: u64,
    log_offset: u64,
    data_size: u64,
    key_offset: u64,
    data: &[u8],
) -> [u8; DIGEST_LEN] {
    hmac_sha256(
        key,
        &seal_message(log_id, log_offset, data_size, key_offset, data),
    )
}
