//! Simulated sealing device.
//!
//! The device is provisioned once with a random keystream that is consumed
//! front-to-back in fixed-size chunks, one chunk per seal. Sealing copies the
//! chunk at the current key offset, MACs the caller's message with it, then
//! *burns* the chunk — overwrites it with fresh random octets — before
//! returning. Burnt regions are indistinguishable from unburnt ones in a
//! memory dump, and the original octets survive only in the [`SafeCopy`]
//! handed out exactly once at provisioning time (it is stored on the forensic
//! node). That is what gives sealed records forward integrity: an intruder
//! who captures the device later holds none of the chunks that keyed earlier
//! seals.
//!
//! The device never exports keystream octets after provisioning. Its state
//! can be persisted to disk (this stands in for the hardware's non-volatile
//! memory); the persistence format is private to this module.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::mac;

/// Magic prefix of the safe-copy keystream file stored on the forensic node.
pub const SAFE_COPY_MAGIC: &[u8; 4] = b"RVK1";
/// Version of the safe-copy file format.
pub const SAFE_COPY_VERSION: u16 = 1;

const DEVICE_MAGIC: &[u8; 4] = b"RVH1";
const DEVICE_VERSION: u16 = 1;

#[derive(Debug, thiserror::Error)]
pub enum HsmError {
    #[error(
        "keystream exhausted: key offset {key_offset} + chunk size {chunk_size} \
         exceeds key length {key_length}"
    )]
    KeyExhausted {
        key_offset: u64,
        chunk_size: u64,
        key_length: u64,
    },
    #[error("refusing to seal empty data")]
    EmptyData,
    #[error("range [{offset}, {offset}+{length}) lies outside a keystream of {key_length} octets")]
    OutOfRange {
        offset: u64,
        length: u64,
        key_length: u64,
    },
    #[error(
        "invalid keystream geometry: key length {key_length} must be a positive \
         multiple of chunk size {chunk_size}"
    )]
    InvalidGeometry { key_length: u64, chunk_size: u64 },
    #[error("corrupt device state: {0}")]
    CorruptState(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Pristine copy of the provisioned keystream, held by the forensic node.
///
/// Never mutated after provisioning; byte-identical to the keystream as
/// generated.
#[derive(Debug, Clone)]
pub struct SafeCopy {
    chunk_size: u64,
    key: Vec<u8>,
}

impl SafeCopy {
    /// Wraps raw keystream octets, validating the geometry.
    pub fn new(chunk_size: u64, key: Vec<u8>) -> Result<SafeCopy, HsmError> {
        check_geometry(key.len() as u64, chunk_size)?;
        Ok(SafeCopy { chunk_size, key })
    }

    pub fn chunk_size(&self) -> u64 {
        self.chunk_size
    }

    pub fn key_length(&self) -> u64 {
        self.key.len() as u64
    }

    /// The keystream chunk starting at `key_offset`.
    pub fn chunk(&self, key_offset: u64) -> Result<&[u8], HsmError> {
        let end = key_offset.checked_add(self.chunk_size);
        match end {
            Some(end) if end <= self.key_length() => {
                Ok(&self.key[key_offset as usize..end as usize])
            }
            _ => Err(HsmError::OutOfRange {
                offset: key_offset,
                length: self.chunk_size,
                key_length: self.key_length(),
            }),
        }
    }

    /// Writes the safe copy in its on-disk format: magic `RVK1`, version
    /// (u16 LE), chunk size (u64 LE), key length (u64 LE), raw key octets.
    pub fn write_to(&self, path: &Path) -> io::Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(SAFE_COPY_MAGIC)?;
        f.write_all(&SAFE_COPY_VERSION.to_le_bytes())?;
        f.write_all(&self.chunk_size.to_le_bytes())?;
        f.write_all(&self.key_length().to_le_bytes())?;
        f.write_all(&self.key)?;
        f.sync_all()
    }

    /// Reads a safe copy written by [`SafeCopy::write_to`].
    pub fn read_from(path: &Path) -> Result<SafeCopy, HsmError> {
        let mut f = fs::File::open(path)?;
        let magic = read_array::<4>(&mut f, "safe-copy magic")?;
        if &magic != SAFE_COPY_MAGIC {
            return Err(HsmError::CorruptState(format!(
                "bad safe-copy magic {:02x?}",
                magic
            )));
        }
        let version = u16::from_le_bytes(read_array::<2>(&mut f, "safe-copy version")?);
        if version != SAFE_COPY_VERSION {
            return Err(HsmError::CorruptState(format!(
                "unsupported safe-copy version {version}"
            )));
        }
        let chunk_size = u64::from_le_bytes(read_array::<8>(&mut f, "chunk size")?);
        let key_length = u64::from_le_bytes(read_array::<8>(&mut f, "key length")?);
        let mut key = vec![0u8; usize::try_from(key_length).map_err(|_| {
            HsmError::CorruptState(format!("key length {key_length} exceeds address space"))
        })?];
        f.read_exact(&mut key)
            .map_err(|e| HsmError::CorruptState(format!("short keystream: {e}")))?;
        SafeCopy::new(chunk_size, key)
    }
}

/// The sealing tag issued for one append: the key offset consumed and the
/// resulting 32-octet digest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SealTag {
    pub key_offset: u64,
    pub hmac: [u8; mac::DIGEST_LEN],
}

/// The simulated device: keystream, burn state, and the consumption offset.
///
/// The burned prefix `[0, key_offset)` has been overwritten with fresh random
/// octets and is never returned by any operation.
#[derive(Debug)]
pub struct SimulatedHsm {
    chunk_size: u64,
    key_offset: u64,
    keystream: Vec<u8>,
    burn_rng: ChaCha20Rng,
}

impl SimulatedHsm {
    /// Generates a fresh keystream from `entropy` and returns the device
    /// together with the one and only [`SafeCopy`] of the keystream.
    pub fn provision(
        entropy: &mut dyn RngCore,
        key_length: u64,
        chunk_size: u64,
    ) -> Result<(SimulatedHsm, SafeCopy), HsmError> {
        check_geometry(key_length, chunk_size)?;
        let len = usize::try_from(key_length).map_err(|_| HsmError::InvalidGeometry {
            key_length,
            chunk_size,
        })?;
        let mut keystream = vec![0u8; len];
        entropy.fill_bytes(&mut keystream);
        let mut burn_seed = [0u8; 32];
        entropy.fill_bytes(&mut burn_seed);
        let safe_copy = SafeCopy {
            chunk_size,
            key: keystream.clone(),
        };
        let hsm = SimulatedHsm {
            chunk_size,
            key_offset: 0,
            keystream,
            burn_rng: ChaCha20Rng::from_seed(burn_seed),
        };
        Ok((hsm, safe_copy))
    }

    pub fn chunk_size(&self) -> u64 {
        self.chunk_size
    }

    pub fn key_length(&self) -> u64 {
        self.keystream.len() as u64
    }

    /// The device-held consumption counter; the verifier consults this as the
    /// attested key offset.
    pub fn attested_key_offset(&self) -> u64 {
        self.key_offset
    }

    /// Number of seals the device can still issue.
    pub fn remaining_seals(&self) -> u64 {
        (self.key_length() - self.key_offset) / self.chunk_size
    }

    /// Fails with `KeyExhausted` when no unburned chunk remains. Callers that
    /// must not leave partial state behind check this before doing any work.
    pub fn check_capacity(&self) -> Result<(), HsmError> {
        if self.key_offset + self.chunk_size > self.key_length() {
            Err(HsmError::KeyExhausted {
                key_offset: self.key_offset,
                chunk_size: self.chunk_size,
                key_length: self.key_length(),
            })
        } else {
            Ok(())
        }
    }

    /// Seals one append: MACs the canonical message for
    /// `(log_id, log_offset, data)` with the chunk at the current key offset,
    /// burns that chunk, and advances the offset.
    ///
    /// On `KeyExhausted` nothing is burnt and the offset is unchanged; every
    /// later call fails the same way (the device is fail-closed).
    pub fn seal(&mut self, log_id: u64, log_offset: u64, data: &[u8]) -> Result<SealTag, HsmError> {
        if data.is_empty() {
            return Err(HsmError::EmptyData);
        }
        self.check_capacity()?;
        let key_offset = self.key_offset;
        let start = key_offset as usize;
        let end = start + self.chunk_size as usize;
        let hmac = mac::seal_hmac(
            &self.keystream[start..end],
            log_id,
            log_offset,
            data.len() as u64,
            key_offset,
            data,
        );
        // Burn: the original chunk octets now exist only in the safe copy.
        self.burn_rng.fill_bytes(&mut self.keystream[start..end]);
        self.key_offset += self.chunk_size;
        Ok(SealTag { key_offset, hmac })
    }

    /// True iff the whole range `[offset, offset+length)` lies in the burned
    /// prefix. Test-observability hook; never returns key octets.
    pub fn is_burned(&self, offset: u64, length: u64) -> Result<bool, HsmError> {
        let end = offset
            .checked_add(length)
            .filter(|&e| e <= self.key_length())
            .ok_or(HsmError::OutOfRange {
                offset,
                length,
                key_length: self.key_length(),
            })?;
        Ok(end <= self.key_offset)
    }

    /// Persists the device state (non-volatile memory stand-in).
    pub fn save(&self, path: &Path) -> io::Result<()> {
        let mut buf = Vec::with_capacity(4 + 2 + 8 * 3 + 32 + 16 + self.keystream.len());
        buf.extend_from_slice(DEVICE_MAGIC);
        buf.extend_from_slice(&DEVICE_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.chunk_size.to_le_bytes());
        buf.extend_from_slice(&self.key_length().to_le_bytes());
        buf.extend_from_slice(&self.key_offset.to_le_bytes());
        buf.extend_from_slice(&self.burn_rng.get_seed());
        buf.extend_from_slice(&self.burn_rng.get_word_pos().to_le_bytes());
        buf.extend_from_slice(&self.keystream);
        let mut f = fs::File::create(path)?;
        f.write_all(&buf)?;
        f.sync_all()
    }

    /// Restores a device persisted with [`SimulatedHsm::save`].
    pub fn load(path: &Path) -> Result<SimulatedHsm, HsmError> {
        let mut f = fs::File::open(path)?;
        let magic = read_array::<4>(&mut f, "device magic")?;
        if &magic != DEVICE_MAGIC {
            return Err(HsmError::CorruptState(format!(
                "bad device magic {:02x?}",
                magic
            )));
        }
        let version = u16::from_le_bytes(read_array::<2>(&mut f, "device version")?);
        if version != DEVICE_VERSION {
            return Err(HsmError::CorruptState(format!(
                "unsupported device version {version}"
            )));
        }
        let chunk_size = u64::from_le_bytes(read_array::<8>(&mut f, "chunk size")?);
        let key_length = u64::from_le_bytes(read_array::<8>(&mut f, "key length")?);
        let key_offset = u64::from_le_bytes(read_array::<8>(&mut f, "key offset")?);
        let burn_seed = read_array::<32>(&mut f, "burn seed")?;
        let word_pos = u128::from_le_bytes(read_array::<16>(&mut f, "burn position")?);
        check_geometry(key_length, chunk_size)?;
        if key_offset > key_length || key_offset % chunk_size != 0 {
            return Err(HsmError::CorruptState(format!(
                "key offset {key_offset} inconsistent with geometry"
            )));
        }
        let mut keystream = vec![0u8; usize::try_from(key_length).map_err(|_| {
            HsmError::CorruptState(format!("key length {key_length} exceeds address space"))
        })?];
        f.read_exact(&mut keystream)
            .map_err(|e| HsmError::CorruptState(format!("short keystream: {e}")))?;
        let mut burn_rng = ChaCha20Rng::from_seed(burn_seed);
        burn_rng.set_word_pos(word_pos);
        Ok(SimulatedHsm {
            chunk_size,
            key_offset,
            keystream,
            burn_rng,
        })
    }
}

fn check_geometry(key_length: u64, chunk_size: u64) -> Result<(), HsmError> {
    if key_length == 0 || chunk_size == 0 || key_length % chunk_size != 0 {
        return Err(HsmError::InvalidGeometry {
            key_length,
            chunk_size,
        });
    }
    Ok(())
}

fn read_array<const N: usize>(f: &mut fs::File, what: &str) -> Result<[u8; N], HsmError> {
    let mut buf = [0u8; N];
    f.read_exact(&mut buf)
        .map_err(|e| HsmError::CorruptState(format!("short read for {what}: {e}")))?;
    Ok(buf)
}
