//! Per-tray traffic-light state machine.
//!
//! GREEN trays are idle and count changes are not expected. A hand over the
//! tray turns it YELLOW; nothing is committed while a hand is around. Once
//! the hand has been gone for `hand_clear_frames` and the debounced count
//! has held for `stability_frames`, the tray turns RED, commits the net
//! change exactly once, and returns to GREEN after `red_duration_ms`.

use serde::{Deserialize, Serialize};

use super::config::EngineConfig;
use super::debounce::RawWindow;
use super::ledger::{CommitKind, EngineError, LedgerEvent, SessionLedger, SessionStatus};
use crate::protocol::{Camera, ClassId, FrameObservation, MonotonicGuard};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LightState {
    Green,
    Yellow,
    Red,
}

impl LightState {
    pub fn as_str(self) -> &'static str {
        match self {
            LightState::Green => "GREEN",
            LightState::Yellow => "YELLOW",
            LightState::Red => "RED",
        }
    }
}

impl std::fmt::Display for LightState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LightChange {
    pub camera: Camera,
    pub from: LightState,
    pub to: LightState,
    pub timestamp_ms: u64,
}

/// Everything a single step can emit, in emission order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EngineOutput {
    Light(LightChange),
    Ledger(LedgerEvent),
}

/// Gauze detections at or above the confidence threshold.
pub fn raw_gauze_count(frame: &FrameObservation, cfg: &EngineConfig) -> u32 {
    frame
        .detections
        .iter()
        .filter(|d| d.class_id == ClassId::Gauze && d.confidence >= cfg.confidence_threshold)
        .count() as u32
}

pub fn hand_present(frame: &FrameObservation, cfg: &EngineConfig) -> bool {
    frame
        .detections
        .iter()
        .any(|d| d.class_id == ClassId::Hand && d.confidence >= cfg.confidence_threshold)
}

#[derive(Debug, Clone)]
pub struct TrayTracker {
    camera: Camera,
    light: LightState,
    window: RawWindow,
    stable_onscreen: u32,
    last_debounced: Option<u32>,
    hand_absent_streak: u32,
    stable_streak: u32,
    red_until_ms: Option<u64>,
    last_change_ms: Option<u64>,
    /// GREEN only: when the debounced count first differed from the stable one.
    drift_since_ms: Option<u64>,
    guard: MonotonicGuard,
}

impl TrayTracker {
    pub fn new(camera: Camera, cfg: &EngineConfig) -> Self {
        Self {
            camera,
            light: LightState::Green,
            window: RawWindow::new(cfg.debounce_window as usize),
            stable_onscreen: 0,
            last_debounced: None,
            hand_absent_streak: 0,
            stable_streak: 0,
            red_until_ms: None,
            last_change_ms: None,
            drift_since_ms: None,
            guard: MonotonicGuard::new(),
        }
    }

    pub fn camera(&self) -> Camera {
        self.camera
    }

    pub fn light(&self) -> LightState {
        self.light
    }

    pub fn stable_onscreen(&self) -> u32 {
        self.stable_onscreen
    }

    pub fn debounced(&self) -> Option<u32> {
        self.last_debounced
    }

    pub fn hand_absent_streak(&self) -> u32 {
        self.hand_absent_streak
    }

    pub fn stable_streak(&self) -> u32 {
        self.stable_streak
    }

    pub fn red_until_ms(&self) -> Option<u64> {
        self.red_until_ms
    }

    pub fn last_change_ms(&self) -> Option<u64> {
        self.last_change_ms
    }

    pub fn raw_window(&self) -> Vec<u32> {
        self.window.samples()
    }

    /// Advances the tray by one frame.
    ///
    /// Rejected frames (wrong camera, inactive session, out of order) leave
    /// the tracker and ledger untouched.
    pub fn step(
        &mut self,
        ledger: &mut SessionLedger,
        frame: &FrameObservation,
        cfg: &EngineConfig,
    ) -> Result<Vec<EngineOutput>, EngineError> {
        if frame.camera != self.camera {
            return Err(EngineError::CameraMismatch { expected: self.camera, found: frame.camera });
        }
        if ledger.status() != SessionStatus::Active {
            return Err(EngineError::SessionNotActive(ledger.status()));
        }
        let t = frame.timestamp_ms;
        if let Err(_violations) = self.guard.admit(frame.frame_index, t) {
            let (last_index, last_timestamp_ms) = self.guard.last().unwrap_or_default();
            return Err(EngineError::NonMonotonicFrame {
                camera: self.camera,
                frame_index: frame.frame_index,
                timestamp_ms: t,
                last_index,
                last_timestamp_ms,
            });
        }

        let hand = hand_present(frame, cfg);
        self.observe(raw_gauze_count(frame, cfg), hand, t);

        let mut out = Vec::new();
        if self.light == LightState::Red {
            if t < self.red_until_ms.unwrap_or(0) {
                return Ok(out);
            }
            self.red_until_ms = None;
            self.set_light(LightState::Green, t, &mut out);
        }

        match self.light {
            LightState::Green => {
                if hand {
                    self.drift_since_ms = None;
                    self.set_light(LightState::Yellow, t, &mut out);
                } else {
                    self.track_unattended(ledger, t, cfg, &mut out);
                }
            }
            LightState::Yellow => {
                let settled = self.hand_absent_streak >= cfg.hand_clear_frames
                    && self.stable_streak >= cfg.stability_frames;
                if let (true, Some(count)) = (settled, self.last_debounced) {
                    self.commit(ledger, count, CommitKind::HandGated, t, cfg, &mut out);
                }
            }
            LightState::Red => unreachable!("red handled above"),
        }
        Ok(out)
    }

    /// Hand frames do not vote: the hand hides gauzes, so the window is
    /// emptied and refilled from hand-free frames once it leaves.
    fn observe(&mut self, raw: u32, hand: bool, t: u64) {
        if hand {
            self.hand_absent_streak = 0;
            self.stable_streak = 0;
            self.window.clear();
            if self.last_debounced.take().is_some() {
                self.last_change_ms = Some(t);
            }
            return;
        }
        self.hand_absent_streak += 1;
        self.window.push(raw);
        let debounced = self.window.debounced();
        match debounced {
            Some(v) if self.last_debounced == Some(v) => self.stable_streak += 1,
            Some(_) => {
                self.stable_streak = 1;
                self.last_change_ms = Some(t);
            }
            None => {
                if self.last_debounced.is_some() {
                    self.last_change_ms = Some(t);
                }
                self.stable_streak = 0;
            }
        }
        self.last_debounced = debounced;
    }

    /// A change that persists with no hand ever seen is committed after
    /// `unattended_commit_ms`. Indeterminate frames neither start nor reset
    /// the timer; only a return to the stable count does.
    fn track_unattended(&mut self, ledger: &mut SessionLedger, t: u64, cfg: &EngineConfig, out: &mut Vec<EngineOutput>) {
        match self.last_debounced {
            Some(v) if v == self.stable_onscreen => self.drift_since_ms = None,
            Some(v) => {
                let since = *self.drift_since_ms.get_or_insert(t);
                if t.saturating_sub(since) >= cfg.unattended_commit_ms {
                    self.commit(ledger, v, CommitKind::Unattended, t, cfg, out);
                }
            }
            None => {}
        }
    }

    fn commit(
        &mut self,
        ledger: &mut SessionLedger,
        count: u32,
        kind: CommitKind,
        t: u64,
        cfg: &EngineConfig,
        out: &mut Vec<EngineOutput>,
    ) {
        self.red_until_ms = Some(t.saturating_add(cfg.red_duration_ms));
        self.set_light(LightState::Red, t, out);

        let delta = count as i64 - self.stable_onscreen as i64;
        self.stable_onscreen = count;
        self.drift_since_ms = None;

        match ledger.commit_delta(self.camera, delta, kind, t) {
            Ok(events) => out.extend(events.into_iter().map(EngineOutput::Ledger)),
            Err(EngineError::NegativeOnscreen { .. }) => {
                // the refusal WARNING is the last event in the log
                if let Some(warning) = ledger.events().last() {
                    out.push(EngineOutput::Ledger(warning.clone()));
                }
            }
            Err(other) => unreachable!("session checked active before commit: {other}"),
        }
    }

    fn set_light(&mut self, to: LightState, t: u64, out: &mut Vec<EngineOutput>) {
        if self.light != to {
            out.push(EngineOutput::Light(LightChange { camera: self.camera, from: self.light, to, timestamp_ms: t }));
            self.light = to;
        }
    }
}
