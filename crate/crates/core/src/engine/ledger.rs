//! Session totals and the append-only event log behind them.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::Camera;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SessionStatus {
    Active,
    Paused,
    Ended,
}

impl fmt::Display for SessionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SessionStatus::Active => "ACTIVE",
            SessionStatus::Paused => "PAUSED",
            SessionStatus::Ended => "ENDED",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Commit,
    ManualAdjustment,
    UnattendedCommit,
    Warning,
    SessionStart,
    SessionPause,
    SessionResume,
    SessionEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AdjustTarget {
    TotalIn,
    TotalOut,
}

/// Counter values captured after an event.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub total_in: u64,
    pub total_out: u64,
    pub onscreen_in: u64,
    pub onscreen_out: u64,
}

impl Totals {
    pub fn in_play(&self) -> i64 {
        self.total_in as i64 - self.total_out as i64
    }

    pub fn onscreen(&self, camera: Camera) -> u64 {
        match camera {
            Camera::In => self.onscreen_in,
            Camera::Out => self.onscreen_out,
        }
    }

    /// Applies a tray commit. `None` when an on-screen count would go negative.
    ///
    /// In tray: only additions raise Total In; removals mean gauzes went
    /// into use. Out tray: Total Out follows the delta in both directions.
    pub fn after_commit(&self, camera: Camera, delta: i64) -> Option<Totals> {
        let mut next = *self;
        match camera {
            Camera::In => {
                next.onscreen_in = offset(self.onscreen_in, delta)?;
                if delta > 0 {
                    next.total_in += delta as u64;
                }
            }
            Camera::Out => {
                next.onscreen_out = offset(self.onscreen_out, delta)?;
                next.total_out = offset(self.total_out, delta)?;
            }
        }
        Some(next)
    }

    pub fn after_adjustment(&self, target: AdjustTarget, delta: i64) -> Option<Totals> {
        let mut next = *self;
        match target {
            AdjustTarget::TotalIn => next.total_in = offset(self.total_in, delta)?,
            AdjustTarget::TotalOut => next.total_out = offset(self.total_out, delta)?,
        }
        Some(next)
    }
}

fn offset(value: u64, delta: i64) -> Option<u64> {
    if delta >= 0 {
        value.checked_add(delta as u64)
    } else {
        value.checked_sub(delta.unsigned_abs())
    }
}

/// One entry in the audit log. Carries the counters as they stood after it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEvent {
    pub sequence_no: u64,
    pub timestamp_ms: u64,
    pub kind: EventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<Camera>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<AdjustTarget>,
    pub delta: i64,
    pub totals: Totals,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor: Option<String>,
}

impl LedgerEvent {
    /// Canonical single-line rendering used for `events.log`.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("ledger events always serialize")
    }

    pub fn from_line(line: &str) -> Result<LedgerEvent, ReplayError> {
        serde_json::from_str(line.trim_end_matches(['\n', '\r']))
            .map_err(|e| ReplayError::MalformedLog(format!("unreadable event: {e}")))
    }
}

/// A manual correction to one of the running totals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjustment {
    pub target: AdjustTarget,
    pub delta: i64,
    pub reason: String,
    pub actor: String,
}

impl Adjustment {
    pub fn new(target: AdjustTarget, delta: i64, reason: impl Into<String>, actor: impl Into<String>) -> Self {
        Self { target, delta, reason: reason.into(), actor: actor.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommitKind {
    /// Hand visit ended and the tray settled.
    HandGated,
    /// Sustained change with no hand seen.
    Unattended,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("frame from camera {found} routed to the {expected} tray")]
    CameraMismatch { expected: Camera, found: Camera },
    #[error("session is {0}, not ACTIVE")]
    SessionNotActive(SessionStatus),
    #[error("session has ended")]
    SessionEnded,
    #[error("non-monotonic frame on {camera}: index {frame_index} at {timestamp_ms} ms after index {last_index} at {last_timestamp_ms} ms")]
    NonMonotonicFrame {
        camera: Camera,
        frame_index: u64,
        timestamp_ms: u64,
        last_index: u64,
        last_timestamp_ms: u64,
    },
    #[error("commit of {delta} on {camera} would make its on-screen count negative")]
    NegativeOnscreen { camera: Camera, delta: i64 },
    #[error("adjustment of {delta} would make {target:?} negative")]
    WouldGoNegative { target: AdjustTarget, delta: i64 },
    #[error("adjustment needs a non-empty reason")]
    EmptyReason,
    #[error("adjustment delta must be nonzero")]
    ZeroDelta,
    #[error("cannot {action} a session that is {from}")]
    InvalidTransition { from: SessionStatus, action: &'static str },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReplayError {
    #[error("sequence gap: expected {expected}, found {found}")]
    GapInSequence { expected: u64, found: u64 },
    #[error("malformed log: {0}")]
    MalformedLog(String),
}

/// Running totals, on-screen counts and the audit log of a single session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionLedger {
    status: SessionStatus,
    totals: Totals,
    events: Vec<LedgerEvent>,
}

impl SessionLedger {
    /// Zeroed ledger whose log opens with `SESSION_START`.
    pub fn start(timestamp_ms: u64) -> Self {
        let mut ledger = Self { status: SessionStatus::Active, totals: Totals::default(), events: Vec::new() };
        ledger.append(timestamp_ms, EventKind::SessionStart, None, None, 0, None, None);
        ledger
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn totals(&self) -> Totals {
        self.totals
    }

    pub fn total_in(&self) -> u64 {
        self.totals.total_in
    }

    pub fn total_out(&self) -> u64 {
        self.totals.total_out
    }

    pub fn onscreen_in(&self) -> u64 {
        self.totals.onscreen_in
    }

    pub fn onscreen_out(&self) -> u64 {
        self.totals.onscreen_out
    }

    /// Total In minus Total Out.
    pub fn in_play(&self) -> i64 {
        self.totals.in_play()
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    pub fn last_sequence_no(&self) -> u64 {
        self.events.last().map_or(0, |e| e.sequence_no)
    }

    /// Canonical JSON rendering of the whole ledger, log included.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("ledger always serializes")
    }

    #[allow(clippy::too_many_arguments)]
    fn append(
        &mut self,
        timestamp_ms: u64,
        kind: EventKind,
        camera: Option<Camera>,
        target: Option<AdjustTarget>,
        delta: i64,
        reason: Option<String>,
        actor: Option<String>,
    ) -> LedgerEvent {
        let event = LedgerEvent {
            sequence_no: self.last_sequence_no() + 1,
            timestamp_ms,
            kind,
            camera,
            target,
            delta,
            totals: self.totals,
            reason,
            actor,
        };
        self.events.push(event.clone());
        event
    }

    fn warn(&mut self, timestamp_ms: u64, camera: Option<Camera>, delta: i64, reason: String) -> LedgerEvent {
        self.append(timestamp_ms, EventKind::Warning, camera, None, delta, Some(reason), None)
    }

    /// Applies a tray commit and returns the events it appended.
    ///
    /// A zero delta is a no-op. A commit that would drive an on-screen count
    /// below zero is refused; only a `WARNING` is logged in that case.
    pub fn commit_delta(
        &mut self,
        camera: Camera,
        delta: i64,
        kind: CommitKind,
        timestamp_ms: u64,
    ) -> Result<Vec<LedgerEvent>, EngineError> {
        if self.status != SessionStatus::Active {
            return Err(EngineError::SessionNotActive(self.status));
        }
        if delta == 0 {
            return Ok(Vec::new());
        }
        let Some(next) = self.totals.after_commit(camera, delta) else {
            self.warn(
                timestamp_ms,
                Some(camera),
                delta,
                format!("rejected commit of {delta} on {camera}: on-screen count would be negative"),
            );
            return Err(EngineError::NegativeOnscreen { camera, delta });
        };
        self.totals = next;

        let mut emitted = Vec::with_capacity(2);
        let event_kind = match kind {
            CommitKind::HandGated => EventKind::Commit,
            CommitKind::Unattended => EventKind::UnattendedCommit,
        };
        emitted.push(self.append(timestamp_ms, event_kind, Some(camera), None, delta, None, None));
        if kind == CommitKind::Unattended {
            emitted.push(self.warn(
                timestamp_ms,
                Some(camera),
                delta,
                format!("{camera} tray count changed by {delta} with no hand detected"),
            ));
        }
        if camera == Camera::Out && delta < 0 {
            emitted.push(self.warn(
                timestamp_ms,
                Some(camera),
                delta,
                format!("{} gauze(s) removed from the Out tray", delta.unsigned_abs()),
            ));
        }
        Ok(emitted)
    }

    /// Applies a manual correction. Rejected adjustments leave the ledger untouched.
    pub fn apply_adjustment(&mut self, adj: &Adjustment, timestamp_ms: u64) -> Result<LedgerEvent, EngineError> {
        if self.status == SessionStatus::Ended {
            return Err(EngineError::SessionEnded);
        }
        if adj.reason.trim().is_empty() {
            return Err(EngineError::EmptyReason);
        }
        if adj.delta == 0 {
            return Err(EngineError::ZeroDelta);
        }
        let next = self
            .totals
            .after_adjustment(adj.target, adj.delta)
            .ok_or(EngineError::WouldGoNegative { target: adj.target, delta: adj.delta })?;
        self.totals = next;
        Ok(self.append(
            timestamp_ms,
            EventKind::ManualAdjustment,
            None,
            Some(adj.target),
            adj.delta,
            Some(adj.reason.clone()),
            Some(adj.actor.clone()),
        ))
    }

    pub fn pause(&mut self, timestamp_ms: u64) -> Result<LedgerEvent, EngineError> {
        if self.status != SessionStatus::Active {
            return Err(EngineError::InvalidTransition { from: self.status, action: "pause" });
        }
        self.status = SessionStatus::Paused;
        Ok(self.append(timestamp_ms, EventKind::SessionPause, None, None, 0, None, None))
    }

    pub fn resume(&mut self, timestamp_ms: u64) -> Result<LedgerEvent, EngineError> {
        if self.status != SessionStatus::Paused {
            return Err(EngineError::InvalidTransition { from: self.status, action: "resume" });
        }
        self.status = SessionStatus::Active;
        Ok(self.append(timestamp_ms, EventKind::SessionResume, None, None, 0, None, None))
    }

    pub fn end(&mut self, timestamp_ms: u64) -> Result<LedgerEvent, EngineError> {
        if self.status == SessionStatus::Ended {
            return Err(EngineError::SessionEnded);
        }
        self.status = SessionStatus::Ended;
        Ok(self.append(timestamp_ms, EventKind::SessionEnd, None, None, 0, None, None))
    }
}

/// Rebuilds a ledger from its log.
///
/// Every event is re-applied and its recorded counters must agree with the
/// replayed state, so a log that was edited or truncated mid-stream is
/// rejected rather than silently trusted.
pub fn replay_events(events: &[LedgerEvent]) -> Result<SessionLedger, ReplayError> {
    let first = events
        .first()
        .ok_or_else(|| ReplayError::MalformedLog("empty log".into()))?;
    if first.kind != EventKind::SessionStart {
        return Err(ReplayError::MalformedLog(format!(
            "log opens with {:?}, expected SESSION_START",
            first.kind
        )));
    }

    let mut status = SessionStatus::Active;
    let mut totals = Totals::default();
    for (i, event) in events.iter().enumerate() {
        let expected = i as u64 + 1;
        if event.sequence_no != expected {
            return Err(ReplayError::GapInSequence { expected, found: event.sequence_no });
        }
        if i > 0 && status == SessionStatus::Ended {
            return Err(ReplayError::MalformedLog(format!(
                "event {} follows SESSION_END",
                event.sequence_no
            )));
        }
        let bad = |what: &str| ReplayError::MalformedLog(format!("event {}: {what}", event.sequence_no));

        match event.kind {
            EventKind::SessionStart => {
                if i > 0 {
                    return Err(bad("second SESSION_START"));
                }
            }
            EventKind::Commit | EventKind::UnattendedCommit => {
                let camera = event.camera.ok_or_else(|| bad("commit without camera"))?;
                totals = totals
                    .after_commit(camera, event.delta)
                    .ok_or_else(|| bad("commit drives a count negative"))?;
            }
            EventKind::ManualAdjustment => {
                let target = event.target.ok_or_else(|| bad("adjustment without target"))?;
                totals = totals
                    .after_adjustment(target, event.delta)
                    .ok_or_else(|| bad("adjustment drives a total negative"))?;
            }
            EventKind::Warning => {}
            EventKind::SessionPause => {
                if status != SessionStatus::Active {
                    return Err(bad("pause while not active"));
                }
                status = SessionStatus::Paused;
            }
            EventKind::SessionResume => {
                if status != SessionStatus::Paused {
                    return Err(bad("resume while not paused"));
                }
                status = SessionStatus::Active;
            }
            EventKind::SessionEnd => status = SessionStatus::Ended,
        }
        if event.totals != totals {
            return Err(bad("recorded counters disagree with replayed state"));
        }
    }

    Ok(SessionLedger { status, totals, events: events.to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ledger_with(total_in: u64, total_out: u64, onscreen_in: u64, onscreen_out: u64) -> SessionLedger {
        let mut l = SessionLedger::start(0);
        l.totals = Totals { total_in, total_out, onscreen_in, onscreen_out };
        l
    }

    #[test]
    fn in_tray_addition_raises_total_in() {
        let mut l = ledger_with(4, 0, 1, 0);
        let ev = l.commit_delta(Camera::In, 2, CommitKind::HandGated, 10).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, EventKind::Commit);
        assert_eq!((l.total_in(), l.onscreen_in()), (6, 3));
    }

    #[test]
    fn in_tray_removal_keeps_total_in() {
        let mut l = ledger_with(6, 0, 3, 0);
        l.commit_delta(Camera::In, -3, CommitKind::HandGated, 10).unwrap();
        assert_eq!((l.total_in(), l.onscreen_in()), (6, 0));
    }

    #[test]
    fn out_tray_removal_lowers_total_out_with_warning() {
        let mut l = ledger_with(0, 2, 0, 2);
        let ev = l.commit_delta(Camera::Out, -1, CommitKind::HandGated, 10).unwrap();
        assert_eq!((l.total_out(), l.onscreen_out()), (1, 1));
        let kinds: Vec<_> = ev.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![EventKind::Commit, EventKind::Warning]);
    }

    #[test]
    fn zero_delta_commit_is_a_noop() {
        let mut l = SessionLedger::start(0);
        assert!(l.commit_delta(Camera::In, 0, CommitKind::HandGated, 5).unwrap().is_empty());
        assert_eq!(l.events().len(), 1);
    }

    #[test]
    fn negative_onscreen_commit_is_refused_with_warning() {
        let mut l = ledger_with(1, 0, 1, 0);
        let err = l.commit_delta(Camera::In, -2, CommitKind::HandGated, 5).unwrap_err();
        assert_eq!(err, EngineError::NegativeOnscreen { camera: Camera::In, delta: -2 });
        assert_eq!(l.onscreen_in(), 1);
        assert_eq!(l.events().last().unwrap().kind, EventKind::Warning);
    }

    #[test]
    fn unattended_commit_logs_warning() {
        let mut l = SessionLedger::start(0);
        let ev = l.commit_delta(Camera::In, 1, CommitKind::Unattended, 2500).unwrap();
        let kinds: Vec<_> = ev.iter().map(|e| e.kind).collect();
        assert_eq!(kinds, vec![EventKind::UnattendedCommit, EventKind::Warning]);
        assert_eq!(l.total_in(), 1);
    }

    #[test]
    fn in_play_formula() {
        assert_eq!(ledger_with(5, 3, 0, 0).in_play(), 2);
        assert_eq!(ledger_with(7, 7, 0, 0).in_play(), 0);
        assert_eq!(SessionLedger::start(0).in_play(), 0);
    }

    #[test]
    fn adjustment_updates_target_and_logs_actor() {
        let mut l = ledger_with(5, 0, 2, 0);
        let ev = l
            .apply_adjustment(&Adjustment::new(AdjustTarget::TotalIn, 1, "nurse recount", "rn-12"), 40)
            .unwrap();
        assert_eq!(l.total_in(), 6);
        assert_eq!(l.onscreen_in(), 2);
        assert_eq!(ev.kind, EventKind::ManualAdjustment);
        assert_eq!(ev.reason.as_deref(), Some("nurse recount"));
        assert_eq!(ev.actor.as_deref(), Some("rn-12"));
    }

    #[test]
    fn rejected_adjustments_mutate_nothing() {
        let mut l = SessionLedger::start(0);
        let before = l.clone();
        assert_eq!(
            l.apply_adjustment(&Adjustment::new(AdjustTarget::TotalOut, -1, "oops", "rn"), 1),
            Err(EngineError::WouldGoNegative { target: AdjustTarget::TotalOut, delta: -1 })
        );
        assert_eq!(
            l.apply_adjustment(&Adjustment::new(AdjustTarget::TotalIn, 1, "  ", "rn"), 1),
            Err(EngineError::EmptyReason)
        );
        assert_eq!(
            l.apply_adjustment(&Adjustment::new(AdjustTarget::TotalIn, 0, "x", "rn"), 1),
            Err(EngineError::ZeroDelta)
        );
        assert_eq!(l, before);
    }

    #[test]
    fn adjustment_allowed_while_paused_but_not_after_end() {
        let mut l = SessionLedger::start(0);
        l.pause(1).unwrap();
        l.apply_adjustment(&Adjustment::new(AdjustTarget::TotalIn, 2, "count", "rn"), 2).unwrap();
        l.end(3).unwrap();
        assert_eq!(
            l.apply_adjustment(&Adjustment::new(AdjustTarget::TotalIn, 1, "count", "rn"), 4),
            Err(EngineError::SessionEnded)
        );
    }

    #[test]
    fn pause_resume_transitions() {
        let mut l = SessionLedger::start(0);
        assert_eq!(l.pause(1).unwrap().kind, EventKind::SessionPause);
        assert_eq!(l.status(), SessionStatus::Paused);
        assert!(matches!(l.pause(2), Err(EngineError::InvalidTransition { .. })));
        assert_eq!(l.resume(3).unwrap().kind, EventKind::SessionResume);
        assert_eq!(l.status(), SessionStatus::Active);
        assert!(matches!(l.resume(4), Err(EngineError::InvalidTransition { .. })));
        assert!(l.commit_delta(Camera::In, 1, CommitKind::HandGated, 5).is_ok());
        l.end(6).unwrap();
        assert_eq!(l.end(7), Err(EngineError::SessionEnded));
    }

    #[test]
    fn replay_of_start_only_is_zeroed_active() {
        let l = SessionLedger::start(0);
        let r = replay_events(l.events()).unwrap();
        assert_eq!(r.status(), SessionStatus::Active);
        assert_eq!(r.totals(), Totals::default());
    }

    #[test]
    fn replay_reproduces_live_ledger() {
        let mut l = SessionLedger::start(0);
        l.commit_delta(Camera::In, 3, CommitKind::HandGated, 10).unwrap();
        l.commit_delta(Camera::In, -2, CommitKind::HandGated, 20).unwrap();
        l.commit_delta(Camera::Out, 2, CommitKind::HandGated, 30).unwrap();
        l.commit_delta(Camera::Out, -1, CommitKind::HandGated, 35).unwrap();
        l.apply_adjustment(&Adjustment::new(AdjustTarget::TotalOut, 1, "missed", "rn"), 40).unwrap();
        l.pause(50).unwrap();
        l.resume(60).unwrap();
        l.end(70).unwrap();
        let r = replay_events(l.events()).unwrap();
        assert_eq!(r.to_canonical_json(), l.to_canonical_json());
    }

    #[test]
    fn replay_rejects_gaps_and_bad_logs() {
        let mut l = SessionLedger::start(0);
        l.commit_delta(Camera::In, 1, CommitKind::HandGated, 1).unwrap();
        l.commit_delta(Camera::In, 1, CommitKind::HandGated, 2).unwrap();
        l.commit_delta(Camera::In, 1, CommitKind::HandGated, 3).unwrap();
        let mut events = l.events().to_vec();
        events.remove(2);
        assert_eq!(
            replay_events(&events),
            Err(ReplayError::GapInSequence { expected: 3, found: 4 })
        );

        assert!(matches!(replay_events(&[]), Err(ReplayError::MalformedLog(_))));
        assert!(matches!(replay_events(&l.events()[1..]), Err(ReplayError::MalformedLog(_))));

        let mut tampered = l.events().to_vec();
        tampered[1].totals.total_in = 9;
        assert!(matches!(replay_events(&tampered), Err(ReplayError::MalformedLog(_))));
    }

    #[test]
    fn event_lines_round_trip() {
        let mut l = SessionLedger::start(0);
        l.apply_adjustment(&Adjustment::new(AdjustTarget::TotalIn, 2, "recount", "rn-1"), 9).unwrap();
        for e in l.events() {
            let line = e.to_line();
            assert!(!line.contains('\n'));
            assert_eq!(&LedgerEvent::from_line(&line).unwrap(), e);
        }
        assert!(l.events()[0].to_line().starts_with(r#"{"sequence_no":1,"timestamp_ms":0,"kind":"SESSION_START""#));
    }
}
