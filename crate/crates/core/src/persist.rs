//! Append-only change log with snapshot compaction.
//!
//! Layout under a root directory:
//!
//! * `meta` holds the format version (`1`).
//! * `log.jsonl` holds one `{"seq":..,"op":..}` object per line.
//! * `snapshot.jsonl` starts with a `{"format":1,"last_seq":..}` header
//!   followed by one state record per line.
//!
//! A torn final log line (a crash mid-write) is discarded on open. Log
//! entries already covered by the snapshot are skipped, so a crash between
//! writing the snapshot and truncating the log is harmless.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FORMAT_VERSION: &str = "1";
pub const LOG_FILE: &str = "log.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.jsonl";
pub const META_FILE: &str = "meta";

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt {file} at line {line}: {message}")]
    Corrupt { file: &'static str, line: usize, message: String },
    #[error("unsupported storage format {0:?}")]
    Format(String),
    #[error("serialization failed: {0}")]
    Encode(#[from] serde_json::Error),
}

/// State that can be rebuilt from a snapshot plus a sequence of operations.
pub trait LogState: Default {
    type Op: Serialize + DeserializeOwned;
    type Record: Serialize + DeserializeOwned;

    fn apply(&mut self, op: &Self::Op);
    fn records(&self) -> Vec<Self::Record>;
    fn restore(records: Vec<Self::Record>) -> Self;
}

#[derive(Serialize, Deserialize)]
struct Entry<T> {
    seq: u64,
    op: T,
}

#[derive(Serialize, Deserialize)]
struct SnapshotHeader {
    format: u32,
    last_seq: u64,
}

#[derive(Debug)]
pub struct ChangeLog {
    root: PathBuf,
    file: File,
    next_seq: u64,
    since_compaction: usize,
    fsync: bool,
}

impl ChangeLog {
    /// Opens (or creates) the log under `root` and rebuilds the state.
    pub fn open<S: LogState>(root: &Path) -> Result<(Self, S), PersistError> {
        fs::create_dir_all(root)?;
        let meta = root.join(META_FILE);
        match fs::read_to_string(&meta) {
            Ok(v) if v.trim() == FORMAT_VERSION => {}
            Ok(v) => return Err(PersistError::Format(v.trim().to_string())),
            Err(e) if e.kind() == io::ErrorKind::NotFound => fs::write(&meta, FORMAT_VERSION)?,
            Err(e) => return Err(e.into()),
        }

        let (mut state, last_seq) = read_snapshot::<S>(&root.join(SNAPSHOT_FILE))?;
        let log_path = root.join(LOG_FILE);
        let mut next_seq = last_seq + 1;
        let mut since_compaction = 0;
        let mut valid_len = 0u64;
        if let Ok(f) = File::open(&log_path) {
            let mut reader = BufReader::new(f);
            let mut line = String::new();
            let mut line_no = 0;
            loop {
                line.clear();
                let n = reader.read_line(&mut line)?;
                if n == 0 {
                    break;
                }
                line_no += 1;
                if !line.ends_with('\n') {
                    // torn write, drop it
                    break;
                }
                let entry: Entry<S::Op> = serde_json::from_str(&line).map_err(|e| PersistError::Corrupt {
                    file: LOG_FILE,
                    line: line_no,
                    message: e.to_string(),
                })?;
                valid_len += n as u64;
                if entry.seq <= last_seq {
                    continue;
                }
                state.apply(&entry.op);
                next_seq = entry.seq + 1;
                since_compaction += 1;
            }
        }
        let file = OpenOptions::new().create(true).append(true).read(true).open(&log_path)?;
        if file.metadata()?.len() != valid_len {
            file.set_len(valid_len)?;
        }
        Ok((Self { root: root.to_path_buf(), file, next_seq, since_compaction, fsync: false }, state))
    }

    /// Whether every append is followed by `fsync`. Off by default: appends
    /// still reach the OS before returning, which survives process crashes.
    pub fn set_fsync(&mut self, on: bool) {
        self.fsync = on;
    }

    pub fn append<T: Serialize>(&mut self, op: &T) -> Result<u64, PersistError> {
        let seq = self.next_seq;
        let mut line = serde_json::to_string(&Entry { seq, op })?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        if self.fsync {
            self.file.sync_data()?;
        }
        self.next_seq += 1;
        self.since_compaction += 1;
        Ok(seq)
    }

    pub fn ops_since_compaction(&self) -> usize {
        self.since_compaction
    }

    /// Writes a snapshot of `state` and empties the log.
    pub fn compact<S: LogState>(&mut self, state: &S) -> Result<(), PersistError> {
        let tmp = self.root.join("snapshot.jsonl.tmp");
        {
            let mut out = io::BufWriter::new(File::create(&tmp)?);
            let header = SnapshotHeader { format: 1, last_seq: self.next_seq - 1 };
            serde_json::to_writer(&mut out, &header)?;
            out.write_all(b"\n")?;
            for record in state.records() {
                serde_json::to_writer(&mut out, &record)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
            out.get_ref().sync_all()?;
        }
        fs::rename(&tmp, self.root.join(SNAPSHOT_FILE))?;
        self.file.set_len(0)?;
        self.file.sync_all()?;
        self.since_compaction = 0;
        Ok(())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

fn read_snapshot<S: LogState>(path: &Path) -> Result<(S, u64), PersistError> {
    let f = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok((S::default(), 0)),
        Err(e) => return Err(e.into()),
    };
    let corrupt = |line, e: serde_json::Error| PersistError::Corrupt { file: SNAPSHOT_FILE, line, message: e.to_string() };
    let mut lines = BufReader::new(f).lines();
    let Some(first) = lines.next() else { return Ok((S::default(), 0)) };
    let header: SnapshotHeader = serde_json::from_str(&first?).map_err(|e| corrupt(1, e))?;
    if header.format != 1 {
        return Err(PersistError::Format(header.format.to_string()));
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line).map_err(|e| corrupt(i + 2, e))?);
    }
    Ok((S::restore(records), header.last_seq))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Default, Debug, PartialEq)]
    struct Counter(Vec<i64>);

    impl LogState for Counter {
        type Op = i64;
        type Record = i64;
        fn apply(&mut self, op: &i64) {
            self.0.push(*op);
        }
        fn records(&self) -> Vec<i64> {
            self.0.clone()
        }
        fn restore(records: Vec<i64>) -> Self {
            Counter(records)
        }
    }

    #[test]
    fn replay_and_compaction() {
        let dir = tempfile::tempdir().unwrap();
        let (mut log, mut st) = ChangeLog::open::<Counter>(dir.path()).unwrap();
        for v in [1, 2, 3] {
            log.append(&v).unwrap();
            st.apply(&v);
        }
        log.compact(&st).unwrap();
        log.append(&4).unwrap();
        drop(log);
        let (_, st) = ChangeLog::open::<Counter>(dir.path()).unwrap();
        assert_eq!(st, Counter(vec![1, 2, 3, 4]));
        assert_eq!(fs::read_to_string(dir.path().join(META_FILE)).unwrap(), "1");
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let (mut log, _) = ChangeLog::open::<Counter>(dir.path()).unwrap();
        log.append(&7).unwrap();
        drop(log);
        let path = dir.path().join(LOG_FILE);
        let mut content = fs::read_to_string(&path).unwrap();
        content.push_str("{\"seq\":2,\"op\":");
        fs::write(&path, content).unwrap();
        let (mut log, st) = ChangeLog::open::<Counter>(dir.path()).unwrap();
        assert_eq!(st, Counter(vec![7]));
        log.append(&8).unwrap();
        drop(log);
        let (_, st) = ChangeLog::open::<Counter>(dir.path()).unwrap();
        assert_eq!(st, Counter(vec![7, 8]));
    }

    #[test]
    fn crash_between_snapshot_and_truncate() {
        let dir = tempfile::tempdir().unwrap();
        let (mut log, mut st) = ChangeLog::open::<Counter>(dir.path()).unwrap();
        for v in [1, 2] {
            log.append(&v).unwrap();
            st.apply(&v);
        }
        let saved_log = fs::read(dir.path().join(LOG_FILE)).unwrap();
        log.compact(&st).unwrap();
        drop(log);
        // restore the pre-truncation log as if the crash hit right after rename
        fs::write(dir.path().join(LOG_FILE), saved_log).unwrap();
        let (_, st) = ChangeLog::open::<Counter>(dir.path()).unwrap();
        assert_eq!(st, Counter(vec![1, 2]));
    }

    #[test]
    fn wrong_format_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(META_FILE), "2").unwrap();
        assert!(matches!(ChangeLog::open::<Counter>(dir.path()), Err(PersistError::Format(_))));
    }
}
