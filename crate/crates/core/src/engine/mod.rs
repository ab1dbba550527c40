//! Counting logic: debounced per-tray counts, the hand-gated commit state
//! machine, the session ledger and end-of-operation reconciliation.

pub mod config;
pub mod debounce;
pub mod ledger;
pub mod reconcile;
pub mod tracker;

pub use config::{ConfigError, EngineConfig, SessionConfig, DEFAULT_FRAMES_TO_CAPTURE};
pub use debounce::{debounced_count, RawWindow};
pub use ledger::{
    replay_events, AdjustTarget, Adjustment, CommitKind, EngineError, EventKind, LedgerEvent,
    ReplayError, SessionLedger, SessionStatus, Totals,
};
pub use reconcile::{reconcile, Finding, ReconciliationReport, Severity};
pub use tracker::{hand_present, raw_gauze_count, EngineOutput, LightChange, LightState, TrayTracker};

use crate::protocol::{Camera, FrameObservation};

/// Both trays plus the shared ledger, driven one frame at a time.
///
/// Frames from the two cameras may be interleaved in any order; each tray
/// only requires its own stream to be monotonic.
#[derive(Debug, Clone)]
pub struct CountEngine {
    cfg: EngineConfig,
    trays: [TrayTracker; 2],
    ledger: SessionLedger,
}

impl CountEngine {
    pub fn new(cfg: EngineConfig, start_ms: u64) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Self {
            trays: [TrayTracker::new(Camera::In, &cfg), TrayTracker::new(Camera::Out, &cfg)],
            cfg,
            ledger: SessionLedger::start(start_ms),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn ledger(&self) -> &SessionLedger {
        &self.ledger
    }

    pub fn tray(&self, camera: Camera) -> &TrayTracker {
        &self.trays[camera.index()]
    }

    pub fn step(&mut self, frame: &FrameObservation) -> Result<Vec<EngineOutput>, EngineError> {
        self.trays[frame.camera.index()].step(&mut self.ledger, frame, &self.cfg)
    }

    pub fn adjust(&mut self, adj: &Adjustment, timestamp_ms: u64) -> Result<LedgerEvent, EngineError> {
        self.ledger.apply_adjustment(adj, timestamp_ms)
    }

    pub fn pause(&mut self, timestamp_ms: u64) -> Result<LedgerEvent, EngineError> {
        self.ledger.pause(timestamp_ms)
    }

    pub fn resume(&mut self, timestamp_ms: u64) -> Result<LedgerEvent, EngineError> {
        self.ledger.resume(timestamp_ms)
    }

    /// Closes the session and reconciles it.
    pub fn end(&mut self, timestamp_ms: u64) -> Result<(LedgerEvent, ReconciliationReport), EngineError> {
        let event = self.ledger.end(timestamp_ms)?;
        Ok((event, reconcile(&self.ledger)))
    }

    pub fn into_ledger(self) -> SessionLedger {
        self.ledger
    }
}
