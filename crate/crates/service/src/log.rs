//! Append-only JSON-lines event log.
//!
//! One record per line, sequence numbers from 1 without gaps. A final line
//! without its newline is a write torn by a crash; it is dropped on open.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use radio_core::domain::Millis;
use radio_core::store::{Event, LogRecord};

use crate::error::ServiceError;

#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
    next_sequence: u64,
    fsync: bool,
}

impl EventLog {
    /// Open (creating if needed) and return the records already on disk.
    pub fn open(path: &Path, fsync: bool) -> Result<(Self, Vec<LogRecord>), ServiceError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(path)?;
        let records = read_records(&mut file)?;
        let next_sequence = records.last().map_or(1, |r| r.sequence_number + 1);
        Ok((
            Self {
                path: path.to_owned(),
                file,
                next_sequence,
                fsync,
            },
            records,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn next_sequence(&self) -> u64 {
        self.next_sequence
    }

    pub fn append(&mut self, event: Event, timestamp: Millis) -> Result<LogRecord, ServiceError> {
        let record = LogRecord {
            sequence_number: self.next_sequence,
            timestamp,
            event,
        };
        let mut line = serde_json::to_vec(&record).expect("records serialize");
        line.push(b'\n');
        self.file.write_all(&line)?;
        if self.fsync {
            self.file.sync_data()?;
        }
        self.next_sequence += 1;
        Ok(record)
    }
}

/// Read every complete record from a log file without opening it for
/// writing.
pub fn read_log(path: &Path) -> Result<Vec<LogRecord>, ServiceError> {
    let mut file = File::open(path)?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(&mut file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(r) => records.push(r),
            Err(e) => {
                return Err(ServiceError::CorruptLog {
                    line: i + 1,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(records)
}

fn read_records(file: &mut File) -> Result<Vec<LogRecord>, ServiceError> {
    file.seek(SeekFrom::Start(0))?;
    let mut reader = BufReader::new(&mut *file);
    let mut records = Vec::new();
    let mut good_len = 0u64;
    let mut buf = String::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        if !buf.ends_with('\n') {
            // torn tail
            break;
        }
        let record: LogRecord = serde_json::from_str(buf.trim_end()).map_err(|e| ServiceError::CorruptLog {
            line: line_no,
            reason: e.to_string(),
        })?;
        let expected = records.len() as u64 + 1;
        if record.sequence_number != expected {
            return Err(ServiceError::CorruptLog {
                line: line_no,
                reason: format!("sequence {} where {expected} was expected", record.sequence_number),
            });
        }
        records.push(record);
        good_len += n as u64;
    }
    drop(reader);
    if file.metadata()?.len() != good_len {
        file.set_len(good_len)?;
    }
    Ok(records)
}
