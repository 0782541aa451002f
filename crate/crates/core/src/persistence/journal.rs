//! File journal.
//!
//! Layout: the magic `ARCH1`, then one frame per record:
//!
//! ```text
//! u32 LE payload length | payload (JSON record) | u32 LE CRC-32 of payload
//! ```
//!
//! Every `snapshot_every` revisions the full state is also written to
//! `snapshot.<revision>` in the same framing (magic `ARCS1`), keeping the
//! newest `keep_snapshots`. The journal itself is never rewritten.

use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use super::{check_next, replay_records, JournalRecord, Store, StoreError};
use crate::state::WorkflowState;

pub const MAGIC: &[u8; 5] = b"ARCH1";
const SNAPSHOT_MAGIC: &[u8; 5] = b"ARCS1";
pub const JOURNAL_FILE: &str = "journal.arch";
const LOCK_FILE: &str = "LOCK";
const SNAPSHOT_PREFIX: &str = "snapshot.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpenMode {
    /// New journal; fails if one exists.
    Fresh,
    /// Continue an existing journal.
    Resume,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Durability {
    /// Flushed to the OS before `append` returns; survives a process crash.
    Flush,
    /// Also fsynced; survives power loss.
    Sync,
}

#[derive(Debug, Clone)]
pub struct OpenOptions {
    pub mode: OpenMode,
    /// Cut a damaged tail off instead of failing with `Corrupt`.
    pub truncate_corrupt: bool,
    pub durability: Durability,
    pub snapshot_every: u64,
    pub keep_snapshots: usize,
}

impl OpenOptions {
    pub fn new(mode: OpenMode) -> Self {
        Self {
            mode,
            truncate_corrupt: false,
            durability: Durability::Flush,
            snapshot_every: 1000,
            keep_snapshots: 2,
        }
    }

    pub fn truncate_corrupt(mut self, yes: bool) -> Self {
        self.truncate_corrupt = yes;
        self
    }

    pub fn durability(mut self, durability: Durability) -> Self {
        self.durability = durability;
        self
    }

    pub fn snapshot_every(mut self, every: u64) -> Self {
        self.snapshot_every = every.max(1);
        self
    }

    pub fn open(&self, dir: impl AsRef<Path>) -> Result<JournalStore, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let lock = File::options()
            .create(true)
            .truncate(false)
            .write(true)
            .open(dir.join(LOCK_FILE))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(fs::TryLockError::WouldBlock) => return Err(StoreError::Locked(dir)),
            Err(fs::TryLockError::Error(e)) => return Err(e.into()),
        }

        let path = dir.join(JOURNAL_FILE);
        let (file, records) = match self.mode {
            OpenMode::Fresh => {
                if path.exists() {
                    return Err(StoreError::AlreadyExists(path));
                }
                let mut file = File::options().create_new(true).append(true).open(&path)?;
                file.write_all(MAGIC)?;
                file.flush()?;
                (file, Vec::new())
            }
            OpenMode::Resume => {
                if !path.exists() {
                    return Err(StoreError::Missing(path));
                }
                let bytes = fs::read(&path)?;
                let scan = scan_journal(&bytes);
                if let Some(detail) = scan.damage {
                    if !self.truncate_corrupt {
                        return Err(StoreError::Corrupt {
                            last_good: scan.records.last().map_or(0, |r| r.revision),
                            detail,
                        });
                    }
                    let file = File::options().write(true).open(&path)?;
                    file.set_len(scan.valid_len as u64)?;
                    file.sync_all()?;
                }
                let mut file = File::options().append(true).open(&path)?;
                if scan.valid_len == 0 {
                    file.write_all(MAGIC)?;
                    file.flush()?;
                }
                (file, scan.records)
            }
        };
        Ok(JournalStore {
            dir,
            file,
            _lock: lock,
            records,
            options: self.clone(),
        })
    }
}

/// Opens `dir` with default options.
pub fn open_store(dir: impl AsRef<Path>, mode: OpenMode) -> Result<JournalStore, StoreError> {
    OpenOptions::new(mode).open(dir)
}

#[derive(Debug)]
pub struct JournalStore {
    dir: PathBuf,
    file: File,
    /// Held for the lifetime of the store; the OS lock drops with it.
    _lock: File,
    records: Vec<JournalRecord>,
    options: OpenOptions,
}

impl JournalStore {
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn journal_path(&self) -> PathBuf {
        self.dir.join(JOURNAL_FILE)
    }

    /// Snapshot revisions on disk, oldest first.
    pub fn snapshot_revisions(&self) -> io::Result<Vec<u64>> {
        let mut revs = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let name = entry?.file_name();
            if let Some(rev) = name
                .to_str()
                .and_then(|n| n.strip_prefix(SNAPSHOT_PREFIX))
                .and_then(|r| r.parse::<u64>().ok())
            {
                revs.push(rev);
            }
        }
        revs.sort_unstable();
        Ok(revs)
    }

    fn write_snapshot(&self, state: &WorkflowState) -> Result<(), StoreError> {
        let payload = serde_json::to_vec(state)?;
        let mut bytes = Vec::with_capacity(payload.len() + 13);
        bytes.extend_from_slice(SNAPSHOT_MAGIC);
        push_frame(&mut bytes, &payload);
        let final_path = self.dir.join(format!("{SNAPSHOT_PREFIX}{}", state.revision));
        let tmp = self.dir.join(format!("{SNAPSHOT_PREFIX}{}.tmp", state.revision));
        {
            let mut f = File::create(&tmp)?;
            f.write_all(&bytes)?;
            if self.options.durability == Durability::Sync {
                f.sync_all()?;
            }
        }
        fs::rename(&tmp, &final_path)?;
        let revs = self.snapshot_revisions()?;
        let excess = revs.len().saturating_sub(self.options.keep_snapshots);
        for rev in &revs[..excess] {
            fs::remove_file(self.dir.join(format!("{SNAPSHOT_PREFIX}{rev}")))?;
        }
        Ok(())
    }

    fn read_snapshot(&self, revision: u64) -> Option<WorkflowState> {
        let bytes = fs::read(self.dir.join(format!("{SNAPSHOT_PREFIX}{revision}"))).ok()?;
        let body = bytes.strip_prefix(SNAPSHOT_MAGIC)?;
        let (payload, rest) = read_frame(body).ok()?;
        if !rest.is_empty() {
            return None;
        }
        let state: WorkflowState = serde_json::from_slice(payload).ok()?;
        (state.revision == revision).then_some(state)
    }
}

impl Store for JournalStore {
    fn append(&mut self, record: &JournalRecord, state_after: &WorkflowState) -> Result<(), StoreError> {
        check_next(self.last_revision(), record)?;
        let payload = serde_json::to_vec(record)?;
        let mut frame = Vec::with_capacity(payload.len() + 8);
        push_frame(&mut frame, &payload);
        self.file.write_all(&frame)?;
        self.file.flush()?;
        if self.options.durability == Durability::Sync {
            self.file.sync_data()?;
        }
        self.records.push(record.clone());
        if record.revision.is_multiple_of(self.options.snapshot_every) {
            self.write_snapshot(state_after)?;
        }
        Ok(())
    }

    fn last_revision(&self) -> u64 {
        self.records.last().map_or(0, |r| r.revision)
    }

    fn records(&self) -> &[JournalRecord] {
        &self.records
    }

    /// Newest usable snapshot plus the journal tail after it.
    fn load(&self) -> Result<WorkflowState, StoreError> {
        let last = self.last_revision();
        let snapshots = self.snapshot_revisions()?;
        for rev in snapshots.into_iter().rev().filter(|r| *r <= last) {
            if let Some(mut state) = self.read_snapshot(rev) {
                let start = self.records.partition_point(|r| r.revision <= rev);
                for record in &self.records[start..] {
                    state.apply(&record.event)?;
                }
                return Ok(state);
            }
        }
        replay_records(&self.records)
    }
}

fn push_frame(out: &mut Vec<u8>, payload: &[u8]) {
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
    out.extend_from_slice(&crc32fast::hash(payload).to_le_bytes());
}

fn read_frame(bytes: &[u8]) -> Result<(&[u8], &[u8]), String> {
    let len_bytes: [u8; 4] = bytes
        .get(..4)
        .ok_or("truncated length")?
        .try_into()
        .expect("four bytes");
    let len = u32::from_le_bytes(len_bytes) as usize;
    let payload = bytes.get(4..4 + len).ok_or("truncated payload")?;
    let crc_bytes: [u8; 4] = bytes
        .get(4 + len..8 + len)
        .ok_or("truncated checksum")?
        .try_into()
        .expect("four bytes");
    if crc32fast::hash(payload) != u32::from_le_bytes(crc_bytes) {
        return Err("checksum mismatch".into());
    }
    Ok((payload, &bytes[8 + len..]))
}

struct Scan {
    records: Vec<JournalRecord>,
    /// Bytes up to the end of the last good record (0 if even the magic is bad).
    valid_len: usize,
    damage: Option<String>,
}

fn scan_journal(bytes: &[u8]) -> Scan {
    let mut scan = Scan {
        records: Vec::new(),
        valid_len: 0,
        damage: None,
    };
    let Some(mut rest) = bytes.strip_prefix(MAGIC) else {
        if !bytes.is_empty() {
            scan.damage = Some("bad magic".into());
        }
        return scan;
    };
    scan.valid_len = MAGIC.len();
    while !rest.is_empty() {
        let offset = bytes.len() - rest.len();
        let parsed = read_frame(rest).and_then(|(payload, tail)| {
            let record: JournalRecord =
                serde_json::from_slice(payload).map_err(|e| format!("undecodable record: {e}"))?;
            Ok((record, tail))
        });
        match parsed {
            Ok((record, tail)) => {
                let last = scan.records.last().map_or(0, |r| r.revision);
                if record.revision != last + 1 {
                    scan.damage = Some(format!("revision {} follows {last} at byte {offset}", record.revision));
                    return scan;
                }
                scan.records.push(record);
                rest = tail;
                scan.valid_len = bytes.len() - rest.len();
            }
            Err(detail) => {
                scan.damage = Some(format!("{detail} at byte {offset}"));
                return scan;
            }
        }
    }
    scan
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip() {
        let mut buf = Vec::new();
        push_frame(&mut buf, b"{\"a\":1}");
        push_frame(&mut buf, b"[]");
        let (a, rest) = read_frame(&buf).unwrap();
        assert_eq!(a, b"{\"a\":1}");
        let (b, rest) = read_frame(rest).unwrap();
        assert_eq!(b, b"[]");
        assert!(rest.is_empty());
    }

    #[test]
    fn flipped_bit_fails_checksum() {
        let mut buf = Vec::new();
        push_frame(&mut buf, b"payload");
        buf[6] ^= 1;
        assert_eq!(read_frame(&buf).unwrap_err(), "checksum mismatch");
    }

    #[test]
    fn empty_file_scans_clean() {
        let scan = scan_journal(b"");
        assert!(scan.damage.is_none());
        assert_eq!(scan.valid_len, 0);
        let scan = scan_journal(MAGIC);
        assert!(scan.damage.is_none() && scan.records.is_empty());
        assert_eq!(scan.valid_len, 5);
    }

    #[test]
    fn wrong_magic_is_damage() {
        assert!(scan_journal(b"NOPE!").damage.is_some());
    }
}
