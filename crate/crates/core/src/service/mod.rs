//! Long-running host for one operation session.
//!
//! Both camera feeds, client commands and the heartbeat funnel through one
//! lock, which fixes a single total order of ledger mutations. Events are
//! persisted and fanned out to subscribers while that lock is held, so every
//! subscriber sees the same sequence and every snapshot is a prefix of it.

mod push;
pub mod server;
pub mod store;

use std::collections::VecDeque;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use push::{PushMessage, Subscription};
pub use server::{ApiClient, IngestClient, Server};
pub use store::{read_capture, recover_ledger, session_dir, AnomalyCapture, CaptureHeader, RecoverError};

use crate::engine::{
    Adjustment, ConfigError, CountEngine, EngineError, EngineOutput, LightState, ReconciliationReport, SessionConfig,
    SessionLedger, SessionStatus,
};
use crate::protocol::{parse_frame, Camera, FrameObservation, ProtocolError};
use push::Publisher;
use store::EventLog;

pub const DEFAULT_HEARTBEAT_MS: u64 = 1000;
pub const DEFAULT_SUBSCRIBER_QUEUE: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Used by clients that start a session without sending a config.
    pub session_defaults: SessionConfig,
    /// Snapshot push interval; 0 disables the heartbeat.
    pub heartbeat_ms: u64,
    /// Messages buffered per subscriber before it is dropped.
    pub subscriber_queue: usize,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            session_defaults: SessionConfig::default(),
            heartbeat_ms: DEFAULT_HEARTBEAT_MS,
            subscriber_queue: DEFAULT_SUBSCRIBER_QUEUE,
        }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("a session is already active")]
    SessionAlreadyActive,
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("session is {0}, not ACTIVE")]
    SessionNotActive(SessionStatus),
    #[error("session has ended")]
    SessionEnded,
    #[error(transparent)]
    ConfigInvalid(#[from] ConfigError),
    #[error(transparent)]
    MalformedRecord(#[from] ProtocolError),
    #[error("frame for {found} sent on the {expected} stream")]
    CameraMismatch { expected: Camera, found: Camera },
    #[error(transparent)]
    Engine(EngineError),
    #[error("storage: {0}")]
    Io(#[from] io::Error),
}

impl ServiceError {
    /// Stable machine-readable error name used on the wire.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::SessionAlreadyActive => "SessionAlreadyActive",
            ServiceError::UnknownSession(_) => "UnknownSession",
            ServiceError::SessionNotActive(_) => "SessionNotActive",
            ServiceError::SessionEnded => "SessionEnded",
            ServiceError::ConfigInvalid(_) => "ConfigInvalid",
            ServiceError::MalformedRecord(_) => "MalformedRecord",
            ServiceError::CameraMismatch { .. } => "CameraMismatch",
            ServiceError::Engine(e) => match e {
                EngineError::NonMonotonicFrame { .. } => "NonMonotonicFrame",
                EngineError::WouldGoNegative { .. } => "WouldGoNegative",
                EngineError::EmptyReason | EngineError::ZeroDelta => "InvalidAdjustment",
                EngineError::InvalidTransition { .. } => "InvalidTransition",
                EngineError::SessionNotActive(_) => "SessionNotActive",
                EngineError::SessionEnded => "SessionEnded",
                _ => "EngineError",
            },
            ServiceError::Io(_) => "Io",
        }
    }
}

impl From<EngineError> for ServiceError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::SessionNotActive(s) => ServiceError::SessionNotActive(s),
            EngineError::SessionEnded => ServiceError::SessionEnded,
            other => ServiceError::Engine(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraySnapshot {
    pub camera: Camera,
    pub light: LightState,
    pub onscreen: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub session_id: String,
    pub status: SessionStatus,
    /// IN first, then OUT.
    pub trays: Vec<TraySnapshot>,
    pub total_in: u64,
    pub total_out: u64,
    pub in_play: i64,
    pub last_sequence_no: u64,
    pub server_timestamp_ms: u64,
}

impl SessionSnapshot {
    pub fn tray(&self, camera: Camera) -> Option<&TraySnapshot> {
        self.trays.iter().find(|t| t.camera == camera)
    }
}

/// Per-camera frame accounting. `ingested + dropped == offered` always.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamStats {
    pub offered: u64,
    pub ingested: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestAck {
    pub camera: Camera,
    pub frame_index: u64,
    pub light: LightState,
    pub last_sequence_no: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptureReceipt {
    pub capture_id: String,
    pub path: PathBuf,
    pub frames_in: usize,
    pub frames_out: usize,
}

struct Session {
    id: String,
    dir: PathBuf,
    config: SessionConfig,
    engine: CountEngine,
    log: EventLog,
    rings: [VecDeque<FrameObservation>; 2],
    stats: [StreamStats; 2],
    /// Latest frame timestamp seen on either camera; stamps client actions.
    clock_ms: u64,
    next_capture: u32,
    subscribers: Vec<Publisher>,
    report: Option<ReconciliationReport>,
}

impl Session {
    fn snapshot(&self) -> SessionSnapshot {
        let ledger = self.engine.ledger();
        let totals = ledger.totals();
        SessionSnapshot {
            session_id: self.id.clone(),
            status: ledger.status(),
            trays: Camera::ALL
                .iter()
                .map(|&c| TraySnapshot { camera: c, light: self.engine.tray(c).light(), onscreen: totals.onscreen(c) })
                .collect(),
            total_in: totals.total_in,
            total_out: totals.total_out,
            in_play: totals.in_play(),
            last_sequence_no: ledger.last_sequence_no(),
            server_timestamp_ms: wall_ms(),
        }
    }

    fn publish(&mut self, msg: PushMessage) {
        self.subscribers.retain(|s| s.offer(msg.clone()));
    }

    /// Persists ledger events, then pushes everything in emission order.
    fn emit(&mut self, outputs: Vec<EngineOutput>) -> Result<(), ServiceError> {
        for o in outputs {
            match o {
                EngineOutput::Ledger(event) => {
                    self.log.append(&event)?;
                    self.publish(PushMessage::LedgerEvent { event });
                }
                EngineOutput::Light(change) => self.publish(PushMessage::Light { change }),
            }
        }
        Ok(())
    }

    fn require_id(&self, id: &str) -> Result<(), ServiceError> {
        if self.id == id {
            Ok(())
        } else {
            Err(ServiceError::UnknownSession(id.to_string()))
        }
    }
}

fn wall_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

struct Inner {
    cfg: ServiceConfig,
    session: Mutex<Option<Session>>,
}

/// Cloneable handle to the single-session service.
#[derive(Clone)]
pub struct SessionService {
    inner: Arc<Inner>,
}

impl SessionService {
    pub fn new(cfg: ServiceConfig) -> Self {
        Self { inner: Arc::new(Inner { cfg, session: Mutex::new(None) }) }
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.cfg
    }

    fn lock(&self) -> MutexGuard<'_, Option<Session>> {
        self.inner.session.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn with_session<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut Session) -> Result<T, ServiceError>,
    ) -> Result<T, ServiceError> {
        let mut guard = self.lock();
        let session = guard.as_mut().ok_or_else(|| ServiceError::UnknownSession(id.to_string()))?;
        session.require_id(id)?;
        f(session)
    }

    /// Opens a new session. An ended session is replaced; a live one is not.
    pub fn start_session(&self, config: SessionConfig) -> Result<String, ServiceError> {
        config.validate()?;
        let mut guard = self.lock();
        if let Some(s) = guard.as_ref() {
            if s.engine.ledger().status() != SessionStatus::Ended {
                return Err(ServiceError::SessionAlreadyActive);
            }
        }
        let engine = CountEngine::new(config.engine, 0)?;
        let id = uuid::Uuid::new_v4().to_string();
        let dir = session_dir(&self.inner.cfg.data_dir, &id);
        let mut log = EventLog::create(&dir)?;
        for event in engine.ledger().events() {
            log.append(event)?;
        }
        log::info!("session {id} started in {}", dir.display());
        *guard = Some(Session {
            id: id.clone(),
            dir,
            config,
            engine,
            log,
            rings: [
                VecDeque::with_capacity(config.frames_to_capture),
                VecDeque::with_capacity(config.frames_to_capture),
            ],
            stats: Default::default(),
            clock_ms: 0,
            next_capture: 1,
            subscribers: Vec::new(),
            report: None,
        });
        Ok(id)
    }

    /// Id of the current (possibly ended) session.
    pub fn current_session(&self) -> Option<String> {
        self.lock().as_ref().map(|s| s.id.clone())
    }

    pub fn session_dir(&self, id: &str) -> Result<PathBuf, ServiceError> {
        self.with_session(id, |s| Ok(s.dir.clone()))
    }

    pub fn session_config(&self, id: &str) -> Result<SessionConfig, ServiceError> {
        self.with_session(id, |s| Ok(s.config))
    }

    pub fn ingest(&self, id: &str, frame: FrameObservation) -> Result<IngestAck, ServiceError> {
        self.with_session(id, |s| {
            let k = frame.camera.index();
            s.stats[k].offered += 1;
            let outputs = match s.engine.step(&frame) {
                Ok(o) => o,
                Err(e) => {
                    s.stats[k].dropped += 1;
                    return Err(e.into());
                }
            };
            s.stats[k].ingested += 1;
            s.clock_ms = s.clock_ms.max(frame.timestamp_ms);
            let ring = &mut s.rings[k];
            if ring.len() == s.config.frames_to_capture {
                ring.pop_front();
            }
            let ack = IngestAck {
                camera: frame.camera,
                frame_index: frame.frame_index,
                light: LightState::Green,
                last_sequence_no: 0,
            };
            ring.push_back(frame);
            s.emit(outputs)?;
            Ok(IngestAck {
                light: s.engine.tray(ack.camera).light(),
                last_sequence_no: s.engine.ledger().last_sequence_no(),
                ..ack
            })
        })
    }

    /// Parses and ingests one wire line arriving on `camera`'s stream.
    /// Unparseable lines count as offered and dropped.
    pub fn ingest_line(&self, id: &str, camera: Camera, line: &str) -> Result<IngestAck, ServiceError> {
        let parsed = parse_frame(line).map_err(ServiceError::from).and_then(|f| {
            if f.camera == camera {
                Ok(f)
            } else {
                Err(ServiceError::CameraMismatch { expected: camera, found: f.camera })
            }
        });
        match parsed {
            Ok(frame) => self.ingest(id, frame),
            Err(e) => self.with_session(id, |s| {
                let st = &mut s.stats[camera.index()];
                st.offered += 1;
                st.dropped += 1;
                Err(e)
            }),
        }
    }

    pub fn snapshot(&self, id: &str) -> Result<SessionSnapshot, ServiceError> {
        self.with_session(id, |s| Ok(s.snapshot()))
    }

    /// Copy of the live ledger, audit log included.
    pub fn ledger(&self, id: &str) -> Result<SessionLedger, ServiceError> {
        self.with_session(id, |s| Ok(s.engine.ledger().clone()))
    }

    pub fn stats(&self, id: &str) -> Result<[StreamStats; 2], ServiceError> {
        self.with_session(id, |s| Ok(s.stats))
    }

    /// Joins the push stream. The first message is a snapshot of the join point.
    pub fn subscribe(&self, id: &str) -> Result<Subscription, ServiceError> {
        let bound = self.inner.cfg.subscriber_queue;
        self.with_session(id, |s| {
            let (tx, rx) = push::channel(bound);
            tx.offer(PushMessage::Snapshot { snapshot: s.snapshot() });
            if s.engine.ledger().status() == SessionStatus::Ended {
                if let Some(report) = s.report.clone() {
                    tx.offer(PushMessage::Reconciliation { report });
                }
                tx.close();
            } else {
                s.subscribers.push(tx);
            }
            Ok(rx)
        })
    }

    pub fn adjust(&self, id: &str, adj: &Adjustment) -> Result<SessionSnapshot, ServiceError> {
        self.with_session(id, |s| {
            let event = s.engine.adjust(adj, s.clock_ms)?;
            s.emit(vec![EngineOutput::Ledger(event)])?;
            Ok(s.snapshot())
        })
    }

    pub fn pause(&self, id: &str) -> Result<SessionSnapshot, ServiceError> {
        self.with_session(id, |s| {
            let event = s.engine.pause(s.clock_ms)?;
            s.emit(vec![EngineOutput::Ledger(event)])?;
            Ok(s.snapshot())
        })
    }

    pub fn resume(&self, id: &str) -> Result<SessionSnapshot, ServiceError> {
        self.with_session(id, |s| {
            let event = s.engine.resume(s.clock_ms)?;
            s.emit(vec![EngineOutput::Ledger(event)])?;
            Ok(s.snapshot())
        })
    }

    /// Writes the last `frames_to_capture` frames of each camera to a new capture file.
    pub fn capture_anomaly(&self, id: &str, note: Option<String>) -> Result<CaptureReceipt, ServiceError> {
        self.with_session(id, |s| {
            let status = s.engine.ledger().status();
            if status != SessionStatus::Active {
                return Err(ServiceError::SessionNotActive(status));
            }
            let capture_id = format!("cap-{:04}", s.next_capture);
            let frames: [Vec<FrameObservation>; 2] =
                [s.rings[0].iter().cloned().collect(), s.rings[1].iter().cloned().collect()];
            let capture = AnomalyCapture {
                header: CaptureHeader {
                    capture_id: capture_id.clone(),
                    session_id: s.id.clone(),
                    trigger_timestamp_ms: s.clock_ms,
                    note,
                    frames_in: frames[0].len(),
                    frames_out: frames[1].len(),
                    snapshot: s.snapshot(),
                },
                frames,
            };
            let path = s.dir.join(store::CAPTURES_DIR).join(format!("{capture_id}.ndjson"));
            store::write_capture(&path, &capture)?;
            s.next_capture += 1;
            log::info!("capture {capture_id}: {} IN, {} OUT frames", capture.header.frames_in, capture.header.frames_out);
            Ok(CaptureReceipt {
                capture_id,
                path,
                frames_in: capture.header.frames_in,
                frames_out: capture.header.frames_out,
            })
        })
    }

    /// Closes the session, persists the report and ends every push stream.
    pub fn end_session(&self, id: &str) -> Result<ReconciliationReport, ServiceError> {
        self.with_session(id, |s| {
            let (event, report) = s.engine.end(s.clock_ms)?;
            s.emit(vec![EngineOutput::Ledger(event)])?;
            store::write_reconciliation(&s.dir, &report)?;
            let snapshot = s.snapshot();
            s.publish(PushMessage::Snapshot { snapshot });
            s.publish(PushMessage::Reconciliation { report: report.clone() });
            for sub in s.subscribers.drain(..) {
                sub.close();
            }
            s.report = Some(report.clone());
            Ok(report)
        })
    }

    pub fn report(&self, id: &str) -> Result<Option<ReconciliationReport>, ServiceError> {
        self.with_session(id, |s| Ok(s.report.clone()))
    }

    /// Pushes a snapshot to every subscriber of a live session.
    pub fn heartbeat(&self) {
        let mut guard = self.lock();
        if let Some(s) = guard.as_mut() {
            if s.engine.ledger().status() != SessionStatus::Ended && !s.subscribers.is_empty() {
                let snapshot = s.snapshot();
                s.publish(PushMessage::Snapshot { snapshot });
            }
        }
    }

    /// Runs [`heartbeat`](Self::heartbeat) every `heartbeat_ms` until the handle is dropped.
    pub fn spawn_heartbeat(&self) -> Option<Heartbeat> {
        let period = Duration::from_millis(self.inner.cfg.heartbeat_ms);
        if period.is_zero() {
            return None;
        }
        let stop = Arc::new(AtomicBool::new(false));
        let svc = self.clone();
        let flag = stop.clone();
        let handle = thread::Builder::new()
            .name("heartbeat".into())
            .spawn(move || {
                while !flag.load(Ordering::Relaxed) {
                    thread::sleep(period);
                    svc.heartbeat();
                }
            })
            .expect("spawn heartbeat thread");
        Some(Heartbeat { stop, handle: Some(handle) })
    }

    pub fn data_dir(&self) -> &Path {
        &self.inner.cfg.data_dir
    }
}

pub struct Heartbeat {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl Drop for Heartbeat {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::AdjustTarget;
    use crate::geometry::BBox;
    use crate::protocol::Detection;

    fn service() -> (tempfile::TempDir, SessionService) {
        let dir = tempfile::tempdir().unwrap();
        let svc = SessionService::new(ServiceConfig { heartbeat_ms: 0, ..ServiceConfig::new(dir.path()) });
        (dir, svc)
    }

    fn frame(camera: Camera, i: u64, gauzes: usize, hand: bool) -> FrameObservation {
        let mut dets: Vec<Detection> = (0..gauzes)
            .map(|g| {
                let x = 0.05 + 0.12 * g as f64;
                Detection::gauze(0.9, BBox::new(x, 0.1, x + 0.1, 0.2))
            })
            .collect();
        if hand {
            dets.push(Detection::hand(0.9, BBox::new(0.5, 0.5, 0.8, 0.8)));
        }
        FrameObservation::new(camera, i, i * 66, dets)
    }

    /// Hand visit that leaves three gauzes on the IN tray.
    fn place_three(svc: &SessionService, id: &str) -> u64 {
        let mut i = 0;
        for (n, hand, frames) in [(0, false, 5), (0, true, 4), (3, true, 4), (3, false, 12)] {
            for _ in 0..frames {
                svc.ingest(id, frame(Camera::In, i, n, hand)).unwrap();
                i += 1;
            }
        }
        i
    }

    #[test]
    fn fresh_session_is_zeroed_and_green() {
        let (_d, svc) = service();
        let id = svc.start_session(SessionConfig::default()).unwrap();
        let snap = svc.snapshot(&id).unwrap();
        assert_eq!((snap.total_in, snap.total_out, snap.in_play), (0, 0, 0));
        assert_eq!(snap.status, SessionStatus::Active);
        assert!(snap.trays.iter().all(|t| t.light == LightState::Green && t.onscreen == 0));
        assert_eq!(snap.last_sequence_no, 1);
    }

    #[test]
    fn single_active_session() {
        let (_d, svc) = service();
        let id = svc.start_session(SessionConfig::default()).unwrap();
        assert!(matches!(svc.start_session(SessionConfig::default()), Err(ServiceError::SessionAlreadyActive)));
        svc.end_session(&id).unwrap();
        let next = svc.start_session(SessionConfig::default()).unwrap();
        assert_ne!(id, next);
        assert!(matches!(svc.snapshot(&id), Err(ServiceError::UnknownSession(_))));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let (_d, svc) = service();
        let mut cfg = SessionConfig::default();
        cfg.engine.debounce_window = 0;
        let err = svc.start_session(cfg).unwrap_err();
        assert_eq!(err.code(), "ConfigInvalid");
    }

    #[test]
    fn commit_shows_in_snapshot() {
        let (_d, svc) = service();
        let id = svc.start_session(SessionConfig::default()).unwrap();
        place_three(&svc, &id);
        let snap = svc.snapshot(&id).unwrap();
        assert_eq!((snap.total_in, snap.in_play), (3, 3));
        assert_eq!(snap.tray(Camera::In).unwrap().onscreen, 3);
    }

    #[test]
    fn stale_and_paused_frames_are_dropped() {
        let (_d, svc) = service();
        let id = svc.start_session(SessionConfig::default()).unwrap();
        svc.ingest(&id, frame(Camera::Out, 5, 0, false)).unwrap();
        let err = svc.ingest(&id, frame(Camera::Out, 4, 0, false)).unwrap_err();
        assert_eq!(err.code(), "NonMonotonicFrame");
        svc.pause(&id).unwrap();
        let err = svc.ingest(&id, frame(Camera::Out, 6, 0, false)).unwrap_err();
        assert!(matches!(err, ServiceError::SessionNotActive(SessionStatus::Paused)));
        let err = svc.ingest_line(&id, Camera::Out, "{\"camera\":").unwrap_err();
        assert_eq!(err.code(), "MalformedRecord");
        let stats = svc.stats(&id).unwrap()[Camera::Out.index()];
        assert_eq!(stats, StreamStats { offered: 4, ingested: 1, dropped: 3 });
    }

    #[test]
    fn wrong_stream_is_rejected() {
        let (_d, svc) = service();
        let id = svc.start_session(SessionConfig::default()).unwrap();
        let line = crate::protocol::serialize_frame(&frame(Camera::In, 0, 0, false));
        let err = svc.ingest_line(&id, Camera::Out, &line).unwrap_err();
        assert_eq!(err.code(), "CameraMismatch");
    }

    #[test]
    fn subscribers_share_one_order() {
        let (_d, svc) = service();
        let id = svc.start_session(SessionConfig::default()).unwrap();
        let a = svc.subscribe(&id).unwrap();
        let b = svc.subscribe(&id).unwrap();
        place_three(&svc, &id);
        svc.adjust(&id, &Adjustment::new(AdjustTarget::TotalOut, 1, "missed gauze on out tray", "rn-1")).unwrap();
        svc.end_session(&id).unwrap();
        let a: Vec<_> = a.collect();
        let b: Vec<_> = b.collect();
        assert_eq!(
            a.iter().filter(|m| !matches!(m, PushMessage::Snapshot { .. })).collect::<Vec<_>>(),
            b.iter().filter(|m| !matches!(m, PushMessage::Snapshot { .. })).collect::<Vec<_>>()
        );
        let kinds: Vec<_> = a
            .iter()
            .filter_map(|m| match m {
                PushMessage::LedgerEvent { event } => Some(event.kind),
                _ => None,
            })
            .collect();
        use crate::engine::EventKind::*;
        assert_eq!(kinds, vec![Commit, ManualAdjustment, SessionEnd]);
        assert!(matches!(a.last(), Some(PushMessage::Reconciliation { .. })));
    }

    #[test]
    fn slow_subscriber_is_cut_off() {
        let dir = tempfile::tempdir().unwrap();
        let svc = SessionService::new(ServiceConfig { heartbeat_ms: 0, subscriber_queue: 3, ..ServiceConfig::new(dir.path()) });
        let id = svc.start_session(SessionConfig::default()).unwrap();
        let slow = svc.subscribe(&id).unwrap();
        place_three(&svc, &id);
        let got: Vec<_> = slow.collect();
        assert_eq!(got.len(), 4);
        assert_eq!(got.last(), Some(&PushMessage::Overflow { bound: 3 }));
    }

    #[test]
    fn adjustments_and_lifecycle_errors() {
        let (_d, svc) = service();
        let id = svc.start_session(SessionConfig::default()).unwrap();
        let err = svc.adjust(&id, &Adjustment::new(AdjustTarget::TotalIn, -1, "recount", "rn")).unwrap_err();
        assert_eq!(err.code(), "WouldGoNegative");
        let snap = svc.adjust(&id, &Adjustment::new(AdjustTarget::TotalOut, 1, "missed gauze on out tray", "rn")).unwrap();
        assert_eq!(snap.total_out, 1);
        svc.end_session(&id).unwrap();
        assert!(matches!(svc.end_session(&id), Err(ServiceError::SessionEnded)));
        let err = svc.adjust(&id, &Adjustment::new(AdjustTarget::TotalOut, 1, "late", "rn")).unwrap_err();
        assert!(matches!(err, ServiceError::SessionEnded));
    }

    #[test]
    fn captures_hold_the_ring_suffix() {
        let (_d, svc) = service();
        let id = svc.start_session(SessionConfig::default()).unwrap();
        for i in 0..40 {
            svc.ingest(&id, frame(Camera::In, i, 0, false)).unwrap();
        }
        let first = svc.capture_anomaly(&id, Some("flicker".into())).unwrap();
        assert_eq!((first.frames_in, first.frames_out), (40, 0));
        for i in 40..250 {
            svc.ingest(&id, frame(Camera::In, i, 0, false)).unwrap();
        }
        let second = svc.capture_anomaly(&id, None).unwrap();
        assert_ne!(first.capture_id, second.capture_id);
        let cap = read_capture(&second.path).unwrap();
        let idx: Vec<u64> = cap.frames(Camera::In).iter().map(|f| f.frame_index).collect();
        assert_eq!(idx, (150..250).collect::<Vec<_>>());
        assert_eq!(read_capture(&first.path).unwrap().header.note.as_deref(), Some("flicker"));
        svc.pause(&id).unwrap();
        assert!(matches!(svc.capture_anomaly(&id, None), Err(ServiceError::SessionNotActive(_))));
    }

    #[test]
    fn log_recovers_the_live_ledger() {
        let (_d, svc) = service();
        let id = svc.start_session(SessionConfig::default()).unwrap();
        place_three(&svc, &id);
        svc.adjust(&id, &Adjustment::new(AdjustTarget::TotalIn, 1, "count sheet", "rn")).unwrap();
        let dir = svc.session_dir(&id).unwrap();
        let recovered = recover_ledger(&dir).unwrap();
        assert_eq!(recovered.to_canonical_json(), svc.ledger(&id).unwrap().to_canonical_json());
        let snap = svc.snapshot(&id).unwrap();
        assert_eq!(recovered.total_in(), snap.total_in);
        assert_eq!(recovered.last_sequence_no(), snap.last_sequence_no);
        let report = svc.end_session(&id).unwrap();
        assert!(!report.passed);
        assert!(dir.join(store::RECONCILIATION_FILE).exists());
    }

    #[test]
    fn heartbeat_pushes_snapshots() {
        let dir = tempfile::tempdir().unwrap();
        let svc = SessionService::new(ServiceConfig { heartbeat_ms: 10, ..ServiceConfig::new(dir.path()) });
        let id = svc.start_session(SessionConfig::default()).unwrap();
        let sub = svc.subscribe(&id).unwrap();
        let _hb = svc.spawn_heartbeat().unwrap();
        for _ in 0..3 {
            match sub.recv_timeout(Duration::from_secs(2)) {
                Ok(Some(PushMessage::Snapshot { snapshot })) => {
                    assert_eq!(snapshot.in_play, snapshot.total_in as i64 - snapshot.total_out as i64);
                }
                other => panic!("expected a snapshot, got {other:?}"),
            }
        }
    }
}
