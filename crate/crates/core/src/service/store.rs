//! Session directory layout:
//!
//! ```text
//! <data_dir>/sessions/<id>/events.log            one ledger event per line
//! <data_dir>/sessions/<id>/captures/<cap>.ndjson  header, then frames
//! <data_dir>/sessions/<id>/reconciliation.json
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SessionSnapshot;
use crate::engine::{replay_events, LedgerEvent, ReconciliationReport, ReplayError, SessionLedger};
use crate::protocol::{parse_frame, serialize_frame, Camera, FrameObservation};

pub const EVENTS_FILE: &str = "events.log";
pub const RECONCILIATION_FILE: &str = "reconciliation.json";
pub const CAPTURES_DIR: &str = "captures";

pub fn session_dir(data_dir: &Path, session_id: &str) -> PathBuf {
    data_dir.join("sessions").join(session_id)
}

/// Append-only ledger event file. Every append reaches the disk before it returns.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    pub fn create(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let path = dir.join(EVENTS_FILE);
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, event: &LedgerEvent) -> io::Result<()> {
        let mut line = event.to_line();
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()
    }
}

pub fn read_event_log(path: &Path) -> Result<Vec<LedgerEvent>, RecoverError> {
    let file = File::open(path)?;
    let mut events = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(LedgerEvent::from_line(&line)?);
    }
    Ok(events)
}

#[derive(Debug, thiserror::Error)]
pub enum RecoverError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Replay(#[from] ReplayError),
}

/// Rebuilds a session's ledger from its persisted event log.
pub fn recover_ledger(session_dir: &Path) -> Result<SessionLedger, RecoverError> {
    let events = read_event_log(&session_dir.join(EVENTS_FILE))?;
    Ok(replay_events(&events)?)
}

pub fn write_reconciliation(session_dir: &Path, report: &ReconciliationReport) -> io::Result<PathBuf> {
    let path = session_dir.join(RECONCILIATION_FILE);
    let text = serde_json::to_string_pretty(report).map_err(io::Error::other)?;
    fs::write(&path, text + "\n")?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureHeader {
    pub capture_id: String,
    pub session_id: String,
    pub trigger_timestamp_ms: u64,
    pub note: Option<String>,
    pub frames_in: usize,
    pub frames_out: usize,
    pub snapshot: SessionSnapshot,
}

/// A persisted anomaly capture: the most recent frames of each camera.
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyCapture {
    pub header: CaptureHeader,
    /// Indexed by [`Camera::index`], oldest first.
    pub frames: [Vec<FrameObservation>; 2],
}

impl AnomalyCapture {
    pub fn frames(&self, camera: Camera) -> &[FrameObservation] {
        &self.frames[camera.index()]
    }
}

pub fn write_capture(path: &Path, capture: &AnomalyCapture) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    // never overwrite an earlier capture
    let file = OpenOptions::new().write(true).create_new(true).open(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", serde_json::to_string(&capture.header).map_err(io::Error::other)?)?;
    for frame in capture.frames.iter().flatten() {
        writeln!(w, "{}", serialize_frame(frame))?;
    }
    w.flush()?;
    w.get_ref().sync_data()
}

pub fn read_capture(path: &Path) -> io::Result<AnomalyCapture> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let first = lines.next().ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "empty capture"))??;
    let header: CaptureHeader =
        serde_json::from_str(&first).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    let mut frames: [Vec<FrameObservation>; 2] = Default::default();
    for line in lines {
        let line = line?;
        let frame = parse_frame(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        frames[frame.camera.index()].push(frame);
    }
    Ok(AnomalyCapture { header, frames })
}
