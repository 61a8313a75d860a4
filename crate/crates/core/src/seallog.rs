//! Tamper-evident append path: data goes into a monitored log file, the
//! sealing device MACs it with a burn-on-read key chunk, and the resulting
//! authentication record is appended to a single `SEAL_log`.
//!
//! One `SEAL_log` covers any number of registered log files; each record
//! carries the log id it authenticates. On-disk formats:
//!
//! * `SEAL_log`: header (`RVS1` magic, version u16 LE, chunk size u64 LE,
//!   key length u64 LE) followed by packed 64-octet records — four u64 LE
//!   fields (log id, log offset, data size, key offset) and the 32-octet
//!   digest.
//! * registry: text lines `log_id<TAB>path`.
//!
//! Failure semantics follow the forensic stance: an append either leaves both
//! the log bytes and the record durable, or nothing that counts as sealed
//! state. Keystream exhaustion is checked before anything is written, so a
//! `KeyExhausted` append has no side effects at all. If the record write
//! itself fails after the chunk was burnt, the store rolls the files back and
//! refuses further appends (the burnt chunk cannot be recovered, so carrying
//! on would desynchronize key-offset arithmetic forever). On startup, log
//! bytes beyond the last record's coverage are flagged as orphans and never
//! silently re-sealed.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use crate::hsm::{HsmError, SimulatedHsm};
use crate::mac;

/// Magic prefix of the `SEAL_log` file.
pub const SEAL_LOG_MAGIC: &[u8; 4] = b"RVS1";
/// Version of the `SEAL_log` format.
pub const SEAL_LOG_VERSION: u16 = 1;
/// Octets in the `SEAL_log` header.
pub const SEAL_LOG_HEADER_LEN: usize = 4 + 2 + 8 + 8;
/// Fixed on-disk width of one record.
pub const RECORD_LEN: usize = 4 * 8 + mac::DIGEST_LEN;

#[derive(Debug, thiserror::Error)]
pub enum SealLogError {
    #[error("log id {0} is not registered")]
    UnknownLog(u64),
    #[error("refusing to seal empty data")]
    EmptyData,
    #[error("malformed seal record: {0}")]
    MalformedRecord(String),
    #[error("malformed seal log header: {0}")]
    MalformedHeader(String),
    #[error("storage failure: {0}")]
    Storage(String),
    #[error("store state mismatch: {0}")]
    StateMismatch(String),
    #[error("invalid registry line {line}: {message}")]
    Registry { line: usize, message: String },
    #[error(transparent)]
    Hsm(#[from] HsmError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl SealLogError {
    /// True for the fail-closed exhaustion condition, which callers treat as
    /// fatal for the whole monitoring pipeline.
    pub fn is_key_exhausted(&self) -> bool {
        matches!(self, SealLogError::Hsm(HsmError::KeyExhausted { .. }))
    }
}

/// One `SEAL_log` entry: which log, where in it, how much data, which key
/// chunk, and the digest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SealRecord {
    pub log_id: u64,
    pub log_offset: u64,
    pub data_size: u64,
    pub key_offset: u64,
    pub hmac: [u8; mac::DIGEST_LEN],
}

impl SealRecord {
    /// Packs the record into its fixed 64-octet on-disk form.
    pub fn encode(&self) -> [u8; RECORD_LEN] {
        let mut out = [0u8; RECORD_LEN];
        out[0..8].copy_from_slice(&self.log_id.to_le_bytes());
        out[8..16].copy_from_slice(&self.log_offset.to_le_bytes());
        out[16..24].copy_from_slice(&self.data_size.to_le_bytes());
        out[24..32].copy_from_slice(&self.key_offset.to_le_bytes());
        out[32..].copy_from_slice(&self.hmac);
        out
    }

    /// Decodes a record from exactly [`RECORD_LEN`] octets.
    pub fn decode(bytes: &[u8]) -> Result<SealRecord, SealLogError> {
        if bytes.len() != RECORD_LEN {
            return Err(SealLogError::MalformedRecord(format!(
                "expected {RECORD_LEN} octets, got {}",
                bytes.len()
            )));
        }
        let field = |i: usize| u64::from_le_bytes(bytes[i * 8..(i + 1) * 8].try_into().unwrap());
        let mut hmac = [0u8; mac::DIGEST_LEN];
        hmac.copy_from_slice(&bytes[32..]);
        Ok(SealRecord {
            log_id: field(0),
            log_offset: field(1),
            data_size: field(2),
            key_offset: field(3),
            hmac,
        })
    }
}

/// `SEAL_log` header: the keystream geometry the records were sealed under.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SealLogHeader {
    pub chunk_size: u64,
    pub key_length: u64,
}

impl SealLogHeader {
    pub fn encode(&self) -> [u8; SEAL_LOG_HEADER_LEN] {
        let mut out = [0u8; SEAL_LOG_HEADER_LEN];
        out[0..4].copy_from_slice(SEAL_LOG_MAGIC);
        out[4..6].copy_from_slice(&SEAL_LOG_VERSION.to_le_bytes());
        out[6..14].copy_from_slice(&self.chunk_size.to_le_bytes());
        out[14..22].copy_from_slice(&self.key_length.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<SealLogHeader, SealLogError> {
        if bytes.len() < SEAL_LOG_HEADER_LEN {
            return Err(SealLogError::MalformedHeader(format!(
                "header needs {SEAL_LOG_HEADER_LEN} octets, file has {}",
                bytes.len()
            )));
        }
        if &bytes[0..4] != SEAL_LOG_MAGIC {
            return Err(SealLogError::MalformedHeader(format!(
                "bad magic {:02x?}",
                &bytes[0..4]
            )));
        }
        let version = u16::from_le_bytes(bytes[4..6].try_into().unwrap());
        if version != SEAL_LOG_VERSION {
            return Err(SealLogError::MalformedHeader(format!(
                "unsupported version {version}"
            )));
        }
        Ok(SealLogHeader {
            chunk_size: u64::from_le_bytes(bytes[6..14].try_into().unwrap()),
            key_length: u64::from_le_bytes(bytes[14..22].try_into().unwrap()),
        })
    }
}

/// Mapping from log id to log file path.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LogRegistry {
    entries: BTreeMap<u64, PathBuf>,
}

impl LogRegistry {
    pub fn new() -> LogRegistry {
        LogRegistry::default()
    }

    pub fn register(&mut self, log_id: u64, path: PathBuf) {
        self.entries.insert(log_id, path);
    }

    pub fn path(&self, log_id: u64) -> Option<&Path> {
        self.entries.get(&log_id).map(PathBuf::as_path)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &Path)> {
        self.entries.iter().map(|(id, p)| (*id, p.as_path()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses `log_id<TAB>path` lines; blank lines and `#` comments allowed.
    pub fn parse(text: &str) -> Result<LogRegistry, SealLogError> {
        let mut reg = LogRegistry::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (id_str, path) = line.split_once('\t').ok_or(SealLogError::Registry {
                line: i + 1,
                message: "expected `log_id<TAB>path`".into(),
            })?;
            let id: u64 = id_str.parse().map_err(|e| SealLogError::Registry {
                line: i + 1,
                message: format!("bad log id `{id_str}`: {e}"),
            })?;
            if reg.entries.contains_key(&id) {
                return Err(SealLogError::Registry {
                    line: i + 1,
                    message: format!("duplicate log id {id}"),
                });
            }
            reg.register(id, PathBuf::from(path));
        }
        Ok(reg)
    }

    pub fn load(path: &Path) -> Result<LogRegistry, SealLogError> {
        LogRegistry::parse(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let mut out = String::new();
        for (id, p) in &self.entries {
            out.push_str(&format!("{id}\t{}\n", p.display()));
        }
        fs::write(path, out)
    }
}

/// Reads and validates only the header of a `SEAL_log` file.
pub fn read_header(path: &Path) -> Result<SealLogHeader, SealLogError> {
    let mut f = fs::File::open(path)?;
    let mut buf = [0u8; SEAL_LOG_HEADER_LEN];
    let mut got = 0;
    while got < buf.len() {
        match f.read(&mut buf[got..])? {
            0 => break,
            n => got += n,
        }
    }
    SealLogHeader::decode(&buf[..got])
}

/// Iterates the records of a `SEAL_log` file in append order. A trailing
/// partial record is reported as a `MalformedRecord` item, never silently
/// dropped.
pub struct RecordIter {
    reader: BufReader<fs::File>,
    done: bool,
}

/// Opens `path`, validates the header, and returns the record iterator.
pub fn iter_records(path: &Path) -> Result<(SealLogHeader, RecordIter), SealLogError> {
    let header = read_header(path)?;
    let mut f = fs::File::open(path)?;
    let mut skip = [0u8; SEAL_LOG_HEADER_LEN];
    f.read_exact(&mut skip)?;
    Ok((
        header,
        RecordIter {
            reader: BufReader::new(f),
            done: false,
        },
    ))
}

impl Iterator for RecordIter {
    type Item = Result<SealRecord, SealLogError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut buf = [0u8; RECORD_LEN];
        let mut got = 0;
        while got < RECORD_LEN {
            match self.reader.read(&mut buf[got..]) {
                Ok(0) => break,
                Ok(n) => got += n,
                Err(e) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
            }
        }
        match got {
            0 => {
                self.done = true;
                None
            }
            RECORD_LEN => Some(SealRecord::decode(&buf)),
            partial => {
                self.done = true;
                Some(Err(SealLogError::MalformedRecord(format!(
                    "trailing partial record of {partial} octets"
                ))))
            }
        }
    }
}

/// The sealing front-end: registry, `SEAL_log`, per-log offsets, and the
/// device. All appends are serialized through one store (single writer).
#[derive(Debug)]
pub struct SealLogStore {
    registry: LogRegistry,
    seal_log_path: PathBuf,
    hsm: SimulatedHsm,
    next_offsets: BTreeMap<u64, u64>,
    orphan_tails: BTreeMap<u64, (u64, u64)>,
    records_written: u64,
    device_path: Option<PathBuf>,
    poisoned: Option<String>,
}

impl SealLogStore {
    /// Creates a fresh store: writes the `SEAL_log` header and zeroes all
    /// offsets. Requires an unconsumed device, a nonexistent `SEAL_log`, and
    /// absent-or-empty log files.
    pub fn create(
        registry: LogRegistry,
        seal_log_path: PathBuf,
        hsm: SimulatedHsm,
    ) -> Result<SealLogStore, SealLogError> {
        if hsm.attested_key_offset() != 0 {
            return Err(SealLogError::StateMismatch(format!(
                "device already consumed {} octets of keystream; a fresh store needs a fresh device",
                hsm.attested_key_offset()
            )));
        }
        if seal_log_path.exists() {
            return Err(SealLogError::StateMismatch(format!(
                "{} already exists; open it instead of creating over it",
                seal_log_path.display()
            )));
        }
        let mut next_offsets = BTreeMap::new();
        for (id, path) in registry.iter() {
            let len = file_len(path)?;
            if len != 0 {
                return Err(SealLogError::StateMismatch(format!(
                    "log {id} at {} already holds {len} octets",
                    path.display()
                )));
            }
            next_offsets.insert(id, 0);
        }
        let header = SealLogHeader {
            chunk_size: hsm.chunk_size(),
            key_length: hsm.key_length(),
        };
        let mut f = fs::File::create(&seal_log_path)?;
        f.write_all(&header.encode())?;
        f.sync_all()?;
        Ok(SealLogStore {
            registry,
            seal_log_path,
            hsm,
            next_offsets,
            orphan_tails: BTreeMap::new(),
            records_written: 0,
            device_path: None,
            poisoned: None,
        })
    }

    /// Opens an existing store, rebuilding offsets from the `SEAL_log` and
    /// cross-checking them against the log files and the device counter.
    /// Orphan log bytes beyond sealed coverage are flagged, never re-sealed;
    /// appends to a log with an orphan tail fail until the operator resolves
    /// it.
    pub fn open(
        registry: LogRegistry,
        seal_log_path: PathBuf,
        hsm: SimulatedHsm,
    ) -> Result<SealLogStore, SealLogError> {
        let (header, iter) = iter_records(&seal_log_path)?;
        if header.chunk_size != hsm.chunk_size() || header.key_length != hsm.key_length() {
            return Err(SealLogError::StateMismatch(format!(
                "seal log geometry ({}, {}) disagrees with device geometry ({}, {})",
                header.chunk_size,
                header.key_length,
                hsm.chunk_size(),
                hsm.key_length()
            )));
        }
        let mut next_offsets: BTreeMap<u64, u64> =
            registry.iter().map(|(id, _)| (id, 0)).collect();
        let mut records_written = 0u64;
        for (i, item) in iter.enumerate() {
            let r = item?;
            if r.key_offset != i as u64 * header.chunk_size {
                return Err(SealLogError::StateMismatch(format!(
                    "record {i} carries key offset {} where {} was expected; \
                     run the verifier for a forensic diagnosis",
                    r.key_offset,
                    i as u64 * header.chunk_size
                )));
            }
            let next = next_offsets
                .get_mut(&r.log_id)
                .ok_or(SealLogError::UnknownLog(r.log_id))?;
            if r.log_offset != *next || r.data_size == 0 {
                return Err(SealLogError::StateMismatch(format!(
                    "record {i} does not tile log {} (offset {}, size {}, expected offset {})",
                    r.log_id, r.log_offset, r.data_size, next
                )));
            }
            *next += r.data_size;
            records_written += 1;
        }
        if hsm.attested_key_offset() != records_written * header.chunk_size {
            return Err(SealLogError::StateMismatch(format!(
                "device attests {} octets consumed but {} records account for {}",
                hsm.attested_key_offset(),
                records_written,
                records_written * header.chunk_size
            )));
        }
        let mut orphan_tails = BTreeMap::new();
        for (id, path) in registry.iter() {
            let covered = next_offsets[&id];
            let len = file_len(path)?;
            if len < covered {
                return Err(SealLogError::StateMismatch(format!(
                    "log {id} at {} is {len} octets but records cover {covered}; \
                     run the verifier for a forensic diagnosis",
                    path.display()
                )));
            }
            if len > covered {
                orphan_tails.insert(id, (covered, len));
            }
        }
        Ok(SealLogStore {
            registry,
            seal_log_path,
            hsm,
            next_offsets,
            orphan_tails,
            records_written,
            device_path: None,
            poisoned: None,
        })
    }

    /// Persist the device state to `path` after every successful append (and
    /// immediately), so that on-disk device state never lags sealed records.
    pub fn persist_device_to(&mut self, path: PathBuf) -> Result<(), SealLogError> {
        self.hsm.save(&path)?;
        self.device_path = Some(path);
        Ok(())
    }

    /// Appends `data` to the registered log and seals it: the record's
    /// `log_offset` equals the pre-call file length, the device burns one
    /// chunk, and the record lands in the `SEAL_log`.
    ///
    /// On `KeyExhausted` nothing is written at all. On a storage failure
    /// after the chunk was burnt, the files are rolled back and the store is
    /// poisoned (all later appends fail), because the burnt chunk would
    /// otherwise leave a permanent hole in key-offset arithmetic.
    pub fn append_sealed(&mut self, log_id: u64, data: &[u8]) -> Result<SealRecord, SealLogError> {
        if let Some(why) = &self.poisoned {
            return Err(SealLogError::Storage(format!(
                "store poisoned by earlier failure: {why}"
            )));
        }
        if data.is_empty() {
            return Err(SealLogError::EmptyData);
        }
        let path = self
            .registry
            .path(log_id)
            .ok_or(SealLogError::UnknownLog(log_id))?
            .to_path_buf();
        // Exhaustion is checked before any write so a failed append has no
        // side effects.
        self.hsm.check_capacity()?;
        let log_offset = *self
            .next_offsets
            .get(&log_id)
            .expect("registered log always has an offset entry");

        let mut log_file = fs::OpenOptions::new()
            .append(true)
            .create(true)
            .open(&path)?;
        let actual_len = log_file.metadata()?.len();
        if actual_len != log_offset {
            return Err(SealLogError::StateMismatch(format!(
                "log {log_id} at {} is {actual_len} octets but sealed coverage says {log_offset}; \
                 refusing to append over unexplained bytes",
                path.display()
            )));
        }
        log_file.write_all(data)?;
        log_file.sync_data()?;

        let tag = match self.hsm.seal(log_id, log_offset, data) {
            Ok(tag) => tag,
            Err(e) => {
                // Nothing was burnt; withdraw the data bytes we appended.
                let _ = log_file.set_len(log_offset);
                return Err(e.into());
            }
        };
        let record = SealRecord {
            log_id,
            log_offset,
            data_size: data.len() as u64,
            key_offset: tag.key_offset,
            hmac: tag.hmac,
        };

        if let Err(e) = self.append_record_bytes(&record) {
            let seal_len = SEAL_LOG_HEADER_LEN as u64 + self.records_written * RECORD_LEN as u64;
            let rolled_back = fs::OpenOptions::new()
                .write(true)
                .open(&self.seal_log_path)
                .and_then(|f| f.set_len(seal_len))
                .and_then(|_| log_file.set_len(log_offset))
                .is_ok();
            let why = format!(
                "record write failed after key chunk {} was burnt ({e}); files {}",
                tag.key_offset,
                if rolled_back {
                    "rolled back"
                } else {
                    "could not be rolled back"
                }
            );
            self.poisoned = Some(why.clone());
            return Err(SealLogError::Storage(why));
        }

        self.next_offsets
            .insert(log_id, log_offset + data.len() as u64);
        self.records_written += 1;
        if let Some(dev) = self.device_path.clone() {
            self.hsm.save(&dev)?;
        }
        Ok(record)
    }

    fn append_record_bytes(&self, record: &SealRecord) -> io::Result<()> {
        let mut f = fs::OpenOptions::new()
            .append(true)
            .open(&self.seal_log_path)?;
        f.write_all(&record.encode())?;
        f.sync_data()
    }

    pub fn registry(&self) -> &LogRegistry {
        &self.registry
    }

    pub fn seal_log_path(&self) -> &Path {
        &self.seal_log_path
    }

    pub fn records_written(&self) -> u64 {
        self.records_written
    }

    pub fn attested_key_offset(&self) -> u64 {
        self.hsm.attested_key_offset()
    }

    pub fn remaining_seals(&self) -> u64 {
        self.hsm.remaining_seals()
    }

    pub fn chunk_size(&self) -> u64 {
        self.hsm.chunk_size()
    }

    /// Next append offset for a registered log.
    pub fn next_offset(&self, log_id: u64) -> Option<u64> {
        self.next_offsets.get(&log_id).copied()
    }

    /// Logs whose files held bytes beyond sealed coverage when the store was
    /// opened: log id → (covered length, file length).
    pub fn orphan_tails(&self) -> &BTreeMap<u64, (u64, u64)> {
        &self.orphan_tails
    }

    pub fn hsm(&self) -> &SimulatedHsm {
        &self.hsm
    }
}

fn file_len(path: &Path) -> io::Result<u64> {
    match fs::metadata(path) {
        Ok(m) => Ok(m.len()),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(0),
        Err(e) => Err(e),
    }
}

/// Convenience used by tests and the verifier: read one log region.
pub fn read_log_region(path: &Path, offset: u64, len: u64) -> io::Result<Vec<u8>> {
    use std::io::{Seek, SeekFrom};
    let mut f = fs::File::open(path)?;
    f.seek(SeekFrom::Start(offset))?;
    let mut buf = vec![0u8; len as usize];
    f.read_exact(&mut buf)?;
    Ok(buf)
}

/// Reads newline-terminated lines from a reader with a hard cap on line
/// length, used by the bridge. Returns the line *including* its terminator;
/// `Ok(None)` at EOF. A line longer than `cap` yields `Err` with the partial
/// prefix consumed up to the cap; the caller decides how to resync.
pub(crate) fn read_line_capped(
    reader: &mut impl BufRead,
    cap: usize,
) -> io::Result<Option<(Vec<u8>, bool)>> {
    let mut line = Vec::new();
    loop {
        let buf = reader.fill_buf()?;
        if buf.is_empty() {
            return if line.is_empty() {
                Ok(None)
            } else {
                Ok(Some((line, false)))
            };
        }
        if let Some(pos) = buf.iter().position(|&b| b == b'\n') {
            if line.len() + pos + 1 > cap {
                return Ok(Some((line, true)));
            }
            line.extend_from_slice(&buf[..=pos]);
            reader.consume(pos + 1);
            return Ok(Some((line, false)));
        }
        if line.len() + buf.len() > cap {
            return Ok(Some((line, true)));
        }
        let n = buf.len();
        line.extend_from_slice(buf);
        reader.consume(n);
    }
}
