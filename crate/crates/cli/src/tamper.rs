//! Detection drills: controlled damage to a sealed store.
//!
//! Each kind applies exactly one mutation of the sort an adversary with file
//! access could make — flip a log byte, truncate a log, drop / swap / edit
//! seal records — and reports precisely what it did, so a following `verify`
//! run can be checked against the expectation. Randomized choices are drawn
//! from a seedable generator; pass `--seed` to reproduce a drill.

use std::fs::OpenOptions;
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;

use clap::ValueEnum;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use rvtee_core::seallog::{iter_records, LogRegistry, SealRecord, SEAL_LOG_HEADER_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TamperKind {
    /// XOR one byte somewhere in a monitored log file.
    FlipByte,
    /// Cut bytes off the end of a monitored log file.
    TruncateLog,
    /// Remove one record from the seal log.
    DropRecord,
    /// Exchange two records in the seal log.
    SwapRecords,
    /// Rewrite one field of one seal record.
    EditField,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FieldName {
    LogId,
    LogOffset,
    DataSize,
    KeyOffset,
    Hmac,
}

/// Optional pinpoint overrides; anything left `None` is chosen from the seed.
#[derive(Debug, Default, Clone, Copy)]
pub struct TamperOptions {
    pub seed: Option<u64>,
    pub log_id: Option<u64>,
    /// FlipByte: byte offset to flip. TruncateLog: new file length.
    pub offset: Option<u64>,
    pub record: Option<u64>,
    pub record2: Option<u64>,
    pub field: Option<FieldName>,
}

#[derive(Debug, thiserror::Error)]
pub enum TamperError {
    #[error("store holds no sealed records; nothing to tamper with")]
    EmptyStore,
    #[error("{0}")]
    Usage(String),
    #[error("cannot access store: {0}")]
    Io(#[from] std::io::Error),
}

/// Applies one mutation and describes it. The store is damaged on success —
/// that is the point.
pub fn apply(
    registry: &LogRegistry,
    seal_log_path: &Path,
    kind: TamperKind,
    options: &TamperOptions,
) -> Result<String, TamperError> {
    let records = read_records(seal_log_path)?;
    if records.is_empty() {
        return Err(TamperError::EmptyStore);
    }
    let seed = options.seed.unwrap_or_else(|| rand::thread_rng().next_u64());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let description = match kind {
        TamperKind::FlipByte => flip_byte(registry, options, &mut rng)?,
        TamperKind::TruncateLog => truncate_log(registry, options, &mut rng)?,
        TamperKind::DropRecord => drop_record(seal_log_path, &records, options, &mut rng)?,
        TamperKind::SwapRecords => swap_records(seal_log_path, &records, options, &mut rng)?,
        TamperKind::EditField => edit_field(seal_log_path, &records, options, &mut rng)?,
    };
    Ok(format!("{description} (seed {seed})"))
}

fn read_records(seal_log_path: &Path) -> Result<Vec<SealRecord>, TamperError> {
    let (_, iter) = iter_records(seal_log_path)
        .map_err(|e| TamperError::Usage(format!("cannot read seal log: {e}")))?;
    iter.collect::<Result<Vec<_>, _>>()
        .map_err(|e| TamperError::Usage(format!("seal log is already damaged: {e}")))
}

/// Picks a target log: honors `--log-id`, otherwise a seeded choice among
/// registered logs that hold data.
fn pick_log(
    registry: &LogRegistry,
    options: &TamperOptions,
    rng: &mut ChaCha20Rng,
) -> Result<(u64, std::path::PathBuf, u64), TamperError> {
    let candidates: Vec<(u64, std::path::PathBuf, u64)> = registry
        .iter()
        .filter_map(|(id, path)| {
            let len = std::fs::metadata(path).map(|m| m.len()).unwrap_or(0);
            (len > 0).then(|| (id, path.to_path_buf(), len))
        })
        .collect();
    match options.log_id {
        Some(id) => candidates
            .into_iter()
            .find(|(cid, _, _)| *cid == id)
            .ok_or_else(|| TamperError::Usage(format!("log {id} is not registered or is empty"))),
        None => {
            if candidates.is_empty() {
                return Err(TamperError::Usage("no log holds any data".into()));
            }
            let i = rng.gen_range(0..candidates.len());
            Ok(candidates[i].clone())
        }
    }
}

fn flip_byte(
    registry: &LogRegistry,
    options: &TamperOptions,
    rng: &mut ChaCha20Rng,
) -> Result<String, TamperError> {
    let (log_id, path, len) = pick_log(registry, options, rng)?;
    let offset = match options.offset {
        Some(o) if o < len => o,
        Some(o) => {
            return Err(TamperError::Usage(format!(
                "offset {o} is outside the {len}-octet log {log_id}"
            )))
        }
        None => rng.gen_range(0..len),
    };
    let mask: u8 = rng.gen_range(1..=255);
    let mut file = OpenOptions::new().read(true).write(true).open(&path)?;
    let mut byte = [0u8; 1];
    file.seek(SeekFrom::Start(offset))?;
    file.read_exact(&mut byte)?;
    byte[0] ^= mask;
    file.seek(SeekFrom::Start(offset))?;
    file.write_all(&byte)?;
    file.sync_all()?;
    Ok(format!(
        "flip-byte: log {log_id} ({}) offset {offset} xor {mask:#04x}",
        path.display()
    ))
}

fn truncate_log(
    registry: &LogRegistry,
    options: &TamperOptions,
    rng: &mut ChaCha20Rng,
) -> Result<String, TamperError> {
    let (log_id, path, len) = pick_log(registry, options, rng)?;
    let new_len = match options.offset {
        Some(o) if o < len => o,
        Some(o) => {
            return Err(TamperError::Usage(format!(
                "new length {o} does not shorten the {len}-octet log {log_id}"
            )))
        }
        None => len - rng.gen_range(1..=len.min(64)),
    };
    let file = OpenOptions::new().write(true).open(&path)?;
    file.set_len(new_len)?;
    file.sync_all()?;
    Ok(format!(
        "truncate-log: log {log_id} ({}) cut from {len} to {new_len} octets",
        path.display()
    ))
}

fn pick_record(
    n: usize,
    preferred: Option<u64>,
    rng: &mut ChaCha20Rng,
) -> Result<usize, TamperError> {
    match preferred {
        Some(i) if (i as usize) < n => Ok(i as usize),
        Some(i) => Err(TamperError::Usage(format!(
            "record {i} does not exist; the store holds {n}"
        ))),
        None => Ok(rng.gen_range(0..n)),
    }
}

fn rewrite_records(seal_log_path: &Path, records: &[SealRecord]) -> Result<(), TamperError> {
    let mut bytes = std::fs::read(seal_log_path)?;
    bytes.truncate(SEAL_LOG_HEADER_LEN);
    for r in records {
        bytes.extend_from_slice(&r.encode());
    }
    std::fs::write(seal_log_path, bytes)?;
    Ok(())
}

fn drop_record(
    seal_log_path: &Path,
    records: &[SealRecord],
    options: &TamperOptions,
    rng: &mut ChaCha20Rng,
) -> Result<String, TamperError> {
    let victim = pick_record(records.len(), options.record, rng)?;
    let mut kept = records.to_vec();
    kept.remove(victim);
    rewrite_records(seal_log_path, &kept)?;
    Ok(format!(
        "drop-record: removed record {victim} of {}",
        records.len()
    ))
}

fn swap_records(
    seal_log_path: &Path,
    records: &[SealRecord],
    options: &TamperOptions,
    rng: &mut ChaCha20Rng,
) -> Result<String, TamperError> {
    if records.len() < 2 {
        return Err(TamperError::Usage(
            "swapping needs at least two records".into(),
        ));
    }
    let first = pick_record(records.len(), options.record, rng)?;
    let second = match options.record2 {
        Some(j) if (j as usize) < records.len() && j as usize != first => j as usize,
        Some(j) => {
            return Err(TamperError::Usage(format!(
                "second record {j} is out of range or equals the first"
            )))
        }
        None => {
            let mut j = rng.gen_range(0..records.len() - 1);
            if j >= first {
                j += 1;
            }
            j
        }
    };
    let mut swapped = records.to_vec();
    swapped.swap(first, second);
    rewrite_records(seal_log_path, &swapped)?;
    Ok(format!("swap-records: exchanged records {first} and {second}"))
}

fn edit_field(
    seal_log_path: &Path,
    records: &[SealRecord],
    options: &TamperOptions,
    rng: &mut ChaCha20Rng,
) -> Result<String, TamperError> {
    let victim = pick_record(records.len(), options.record, rng)?;
    let field = options.field.unwrap_or_else(|| {
        [
            FieldName::LogId,
            FieldName::LogOffset,
            FieldName::DataSize,
            FieldName::KeyOffset,
            FieldName::Hmac,
        ][rng.gen_range(0..5)]
    });
    let mut edited = records.to_vec();
    let r = &mut edited[victim];
    let detail = match field {
        FieldName::LogId => {
            let new = r.log_id ^ (1 << rng.gen_range(0..8));
            let old = std::mem::replace(&mut r.log_id, new);
            format!("log_id {old} -> {new}")
        }
        FieldName::LogOffset => {
            let new = r.log_offset ^ (1 << rng.gen_range(0..48));
            let old = std::mem::replace(&mut r.log_offset, new);
            format!("log_offset {old} -> {new}")
        }
        FieldName::DataSize => {
            let new = r.data_size ^ (1 << rng.gen_range(0..48));
            let old = std::mem::replace(&mut r.data_size, new);
            format!("data_size {old} -> {new}")
        }
        FieldName::KeyOffset => {
            let new = r.key_offset ^ (1 << rng.gen_range(0..48));
            let old = std::mem::replace(&mut r.key_offset, new);
            format!("key_offset {old} -> {new}")
        }
        FieldName::Hmac => {
            let i = rng.gen_range(0..r.hmac.len());
            let mask: u8 = rng.gen_range(1..=255);
            r.hmac[i] ^= mask;
            format!("hmac byte {i} xor {mask:#04x}")
        }
    };
    rewrite_records(seal_log_path, &edited)?;
    Ok(format!("edit-field: record {victim}: {detail}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::OsRng;
    use rvtee_core::hsm::{SafeCopy, SimulatedHsm};
    use rvtee_core::seallog::SealLogStore;
    use rvtee_core::verifier::verify;
    use std::path::PathBuf;

    fn sealed_store(dir: &Path, appends: u64) -> (LogRegistry, PathBuf, SafeCopy, u64) {
        let (hsm, safe_copy) = SimulatedHsm::provision(&mut OsRng, (appends + 4) * 32, 32).unwrap();
        let mut registry = LogRegistry::new();
        registry.register(1, dir.join("one.log"));
        registry.register(2, dir.join("two.log"));
        let seal_log = dir.join("seal.log");
        let mut store = SealLogStore::create(registry.clone(), seal_log.clone(), hsm).unwrap();
        for i in 0..appends {
            let log = 1 + (i % 2);
            store
                .append_sealed(log, format!("entry {i} payload").as_bytes())
                .unwrap();
        }
        let attested = store.attested_key_offset();
        (registry, seal_log, safe_copy, attested)
    }

    #[test]
    fn every_kind_is_detected_by_verification() {
        for kind in [
            TamperKind::FlipByte,
            TamperKind::TruncateLog,
            TamperKind::DropRecord,
            TamperKind::SwapRecords,
            TamperKind::EditField,
        ] {
            let dir = tempfile::tempdir().unwrap();
            let (registry, seal_log, safe_copy, attested) = sealed_store(dir.path(), 6);
            let options = TamperOptions {
                seed: Some(42),
                ..TamperOptions::default()
            };
            let description = apply(&registry, &seal_log, kind, &options).unwrap();
            let report = verify(&registry, &seal_log, &safe_copy, Some(attested));
            assert!(
                !report.passed,
                "{kind:?} went undetected after `{description}`"
            );
        }
    }

    #[test]
    fn empty_store_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let (hsm, _) = SimulatedHsm::provision(&mut OsRng, 128, 32).unwrap();
        let mut registry = LogRegistry::new();
        registry.register(1, dir.path().join("one.log"));
        let seal_log = dir.path().join("seal.log");
        SealLogStore::create(registry.clone(), seal_log.clone(), hsm).unwrap();
        let result = apply(
            &registry,
            &seal_log,
            TamperKind::FlipByte,
            &TamperOptions::default(),
        );
        assert!(matches!(result, Err(TamperError::EmptyStore)));
    }

    #[test]
    fn overrides_pinpoint_the_mutation() {
        let dir = tempfile::tempdir().unwrap();
        let (registry, seal_log, _, _) = sealed_store(dir.path(), 4);
        let log_path = registry.path(1).unwrap().to_path_buf();
        let before = std::fs::read(&log_path).unwrap();
        let options = TamperOptions {
            seed: Some(1),
            log_id: Some(1),
            offset: Some(3),
            ..TamperOptions::default()
        };
        let description = apply(&registry, &seal_log, TamperKind::FlipByte, &options).unwrap();
        assert!(description.contains("offset 3"), "{description}");
        let after = std::fs::read(&log_path).unwrap();
        let changed: Vec<usize> = (0..before.len()).filter(|&i| before[i] != after[i]).collect();
        assert_eq!(changed, vec![3]);
    }

    #[test]
    fn same_seed_reproduces_the_same_drill() {
        let dir = tempfile::tempdir().unwrap();
        let (registry, seal_log, _, _) = sealed_store(dir.path(), 6);
        let pristine = std::fs::read(&seal_log).unwrap();
        let options = TamperOptions {
            seed: Some(7),
            ..TamperOptions::default()
        };
        let mut outcomes = Vec::new();
        for _ in 0..2 {
            std::fs::write(&seal_log, &pristine).unwrap();
            let description =
                apply(&registry, &seal_log, TamperKind::EditField, &options).unwrap();
            outcomes.push((description, std::fs::read(&seal_log).unwrap()));
        }
        assert_eq!(outcomes[0], outcomes[1]);
        assert_ne!(outcomes[0].1, pristine);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        /// Any drill of any kind with any seed leaves a store that fails
        /// verification — tampering is never silent.
        #[test]
        fn drills_always_fail_verification(seed in any::<u64>(), kind_index in 0usize..5) {
            let kind = [
                TamperKind::FlipByte,
                TamperKind::TruncateLog,
                TamperKind::DropRecord,
                TamperKind::SwapRecords,
                TamperKind::EditField,
            ][kind_index];
            let dir = tempfile::tempdir().unwrap();
            let (registry, seal_log, safe_copy, attested) = sealed_store(dir.path(), 5);
            let options = TamperOptions { seed: Some(seed), ..TamperOptions::default() };
            apply(&registry, &seal_log, kind, &options).unwrap();
            let report = verify(&registry, &seal_log, &safe_copy, Some(attested));
            prop_assert!(!report.passed, "{:?} with seed {} went undetected", kind, seed);
        }
    }
}
