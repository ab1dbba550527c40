//! Scenario scripts: a timed list of hand visits and gauze movements.
//!
//! Text format, one directive per line, `#` starts a comment:
//!
//! ```text
//! gauzetrack-scenario 1
//! duration_ms 3000
//! fps 15
//! tray IN 0.05 0.05 0.95 0.95
//! at 500 hand_enter IN
//! at 800 place IN 3
//! at 1200 hand_exit IN
//! ```
//!
//! Optional directives: `tray OUT ...`, `gauze_size W H`, `hand_size W H`,
//! `layout_max_iou X`. Events must be in time order and every `place` or
//! `remove` must happen while a hand is over that tray.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;
use crate::protocol::Camera;

pub const SCENARIO_HEADER: &str = "gauzetrack-scenario";
pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScriptAction {
    Place { tray: Camera, count: u32 },
    Remove { tray: Camera, count: u32 },
    HandEnter { tray: Camera },
    HandExit { tray: Camera },
}

impl ScriptAction {
    pub fn tray(&self) -> Camera {
        match *self {
            ScriptAction::Place { tray, .. }
            | ScriptAction::Remove { tray, .. }
            | ScriptAction::HandEnter { tray }
            | ScriptAction::HandExit { tray } => tray,
        }
    }
}

impl fmt::Display for ScriptAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScriptAction::Place { tray, count } => write!(f, "place {tray} {count}"),
            ScriptAction::Remove { tray, count } => write!(f, "remove {tray} {count}"),
            ScriptAction::HandEnter { tray } => write!(f, "hand_enter {tray}"),
            ScriptAction::HandExit { tray } => write!(f, "hand_exit {tray}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEvent {
    pub at_ms: u64,
    pub action: ScriptAction,
}

impl ScriptEvent {
    pub fn new(at_ms: u64, action: ScriptAction) -> Self {
        Self { at_ms, action }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioScript {
    pub duration_ms: u64,
    pub fps: u32,
    /// Usable tray area in each camera's normalized frame, indexed by camera.
    pub trays: [BBox; 2],
    pub gauze_size: (f64, f64),
    pub hand_size: (f64, f64),
    /// Upper bound on pairwise IoU when laying out gauzes on a tray.
    pub layout_max_iou: f64,
    pub events: Vec<ScriptEvent>,
}

impl Default for ScenarioScript {
    fn default() -> Self {
        Self {
            duration_ms: 1000,
            fps: 15,
            trays: [BBox::new(0.05, 0.05, 0.95, 0.95); 2],
            gauze_size: (0.10, 0.10),
            hand_size: (0.25, 0.25),
            layout_max_iou: 0.2,
            events: Vec::new(),
        }
    }
}

/// One problem found in a scenario, located by source line when known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioIssue {
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for ScenarioIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}: {}", self.field, self.message),
            None => write!(f, "{}: {}", self.field, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed scenario: {}", .issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
pub struct MalformedScenario {
    pub issues: Vec<ScenarioIssue>,
}

impl ScenarioScript {
    pub fn frame_count(&self) -> u64 {
        self.duration_ms * self.fps as u64 / 1000
    }

    /// Timestamp of frame `i` on the scripted cadence, rounded down to the millisecond.
    pub fn frame_time_ms(&self, i: u64) -> u64 {
        i * 1000 / self.fps as u64
    }

    pub fn tray(&self, camera: Camera) -> BBox {
        self.trays[camera.index()]
    }

    /// Lists invariant violations. Issues reference events by their index.
    pub fn violations(&self) -> Vec<(Option<usize>, String, String)> {
        let mut found = Vec::new();
        let mut push = |idx: Option<usize>, field: &str, msg: String| found.push((idx, field.to_string(), msg));

        if self.fps == 0 {
            push(None, "fps", "must be positive".into());
        }
        if self.duration_ms == 0 {
            push(None, "duration_ms", "must be positive".into());
        }
        for camera in Camera::ALL {
            let tray = self.tray(camera);
            if !tray.is_valid() {
                push(None, "tray", format!("{camera} tray region is not a valid box"));
            } else if tray.width() < self.gauze_size.0 || tray.height() < self.gauze_size.1 {
                push(None, "tray", format!("{camera} tray region is smaller than one gauze"));
            }
        }
        for (name, (w, h)) in [("gauze_size", self.gauze_size), ("hand_size", self.hand_size)] {
            if !(w > 0.0 && w <= 1.0 && h > 0.0 && h <= 1.0) {
                push(None, name, "sizes must be in (0, 1]".into());
            }
        }
        if !(0.0..=1.0).contains(&self.layout_max_iou) {
            push(None, "layout_max_iou", "must be in [0, 1]".into());
        }

        let mut on_tray = [0u32; 2];
        let mut hand = [false; 2];
        let mut prev_at = 0;
        for (i, ev) in self.events.iter().enumerate() {
            if ev.at_ms < prev_at {
                push(Some(i), "at", format!("{} ms is earlier than the previous event at {prev_at} ms", ev.at_ms));
            }
            prev_at = prev_at.max(ev.at_ms);
            if ev.at_ms > self.duration_ms {
                push(Some(i), "at", format!("{} ms is past duration_ms {}", ev.at_ms, self.duration_ms));
            }
            let tray = ev.action.tray();
            let k = tray.index();
            match ev.action {
                ScriptAction::Place { count, .. } | ScriptAction::Remove { count, .. } if count == 0 => {
                    push(Some(i), "count", "must be positive".into());
                }
                ScriptAction::Place { count, .. } => {
                    if !hand[k] {
                        push(Some(i), "place", format!("placing on {tray} outside a hand interval"));
                    }
                    on_tray[k] += count;
                }
                ScriptAction::Remove { count, .. } => {
                    if !hand[k] {
                        push(Some(i), "remove", format!("removing from {tray} outside a hand interval"));
                    }
                    if count > on_tray[k] {
                        push(
                            Some(i),
                            "count",
                            format!("removes {count} from {tray} but only {} are on it", on_tray[k]),
                        );
                    }
                    on_tray[k] = on_tray[k].saturating_sub(count);
                }
                ScriptAction::HandEnter { .. } => {
                    if hand[k] {
                        push(Some(i), "hand_enter", format!("hand already over {tray}"));
                    }
                    hand[k] = true;
                }
                ScriptAction::HandExit { .. } => {
                    if !hand[k] {
                        push(Some(i), "hand_exit", format!("no hand over {tray}"));
                    }
                    hand[k] = false;
                }
            }
        }
        for camera in Camera::ALL {
            if hand[camera.index()] {
                push(None, "hand_exit", format!("hand over {camera} never leaves"));
            }
        }
        found
    }

    pub fn validate(&self) -> Result<(), MalformedScenario> {
        let issues: Vec<_> = self
            .violations()
            .into_iter()
            .map(|(idx, field, message)| ScenarioIssue {
                line: None,
                field: match idx {
                    Some(i) => format!("events[{i}].{field}"),
                    None => field,
                },
                message,
            })
            .collect();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(MalformedScenario { issues })
        }
    }

    /// Renders the script in the text format accepted by [`parse_scenario`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{SCENARIO_HEADER} {SCENARIO_VERSION}");
        let _ = writeln!(out, "duration_ms {}", self.duration_ms);
        let _ = writeln!(out, "fps {}", self.fps);
        for camera in Camera::ALL {
            let b = self.tray(camera);
            let _ = writeln!(out, "tray {camera} {} {} {} {}", b.x_min, b.y_min, b.x_max, b.y_max);
        }
        let _ = writeln!(out, "gauze_size {} {}", self.gauze_size.0, self.gauze_size.1);
        let _ = writeln!(out, "hand_size {} {}", self.hand_size.0, self.hand_size.1);
        let _ = writeln!(out, "layout_max_iou {}", self.layout_max_iou);
        for ev in &self.events {
            let _ = writeln!(out, "at {} {}", ev.at_ms, ev.action);
        }
        out
    }
}

/// Parses and validates a scenario document.
pub fn parse_scenario(text: &str) -> Result<ScenarioScript, MalformedScenario> {
    let mut script = ScenarioScript::default();
    let mut issues = Vec::new();
    let mut event_lines = Vec::new();
    let mut saw_header = false;
    let mut saw_duration = false;

    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut issue = |field: &str, message: String| {
            issues.push(ScenarioIssue { line: Some(line_no), field: field.into(), message })
        };
        let words: Vec<&str> = line.split_whitespace().collect();

        if !saw_header {
            saw_header = true;
            if words.first() != Some(&SCENARIO_HEADER) {
                issue("header", format!("expected `{SCENARIO_HEADER} {SCENARIO_VERSION}` as the first line"));
                continue;
            }
            match words.get(1).map(|v| v.parse::<u32>()) {
                Some(Ok(SCENARIO_VERSION)) => {}
                _ => issue("header", format!("unsupported version, expected {SCENARIO_VERSION}")),
            }
            continue;
        }

        let result: Result<(), (String, String)> = (|| {
            match words[0] {
                "duration_ms" => {
                    saw_duration = true;
                    script.duration_ms = parse_arg(&words, 1, "duration_ms")?;
                }
                "fps" => script.fps = parse_arg(&words, 1, "fps")?,
                "tray" => {
                    let cam: Camera = words
                        .get(1)
                        .ok_or(("tray".to_string(), "missing camera".to_string()))?
                        .parse()
                        .map_err(|e| ("tray".to_string(), e))?;
                    let c: Vec<f64> = (2..6).map(|k| parse_arg(&words, k, "tray")).collect::<Result<_, _>>()?;
                    script.trays[cam.index()] = BBox::new(c[0], c[1], c[2], c[3]);
                }
                "gauze_size" => {
                    script.gauze_size = (parse_arg(&words, 1, "gauze_size")?, parse_arg(&words, 2, "gauze_size")?)
                }
                "hand_size" => {
                    script.hand_size = (parse_arg(&words, 1, "hand_size")?, parse_arg(&words, 2, "hand_size")?)
                }
                "layout_max_iou" => script.layout_max_iou = parse_arg(&words, 1, "layout_max_iou")?,
                "at" => {
                    let at_ms: u64 = parse_arg(&words, 1, "at")?;
                    let verb = *words.get(2).ok_or(("at".to_string(), "missing action".to_string()))?;
                    let tray: Camera = words
                        .get(3)
                        .ok_or((verb.to_string(), "missing tray".to_string()))?
                        .parse()
                        .map_err(|e| (verb.to_string(), e))?;
                    let action = match verb {
                        "place" => ScriptAction::Place { tray, count: parse_arg(&words, 4, "count")? },
                        "remove" => ScriptAction::Remove { tray, count: parse_arg(&words, 4, "count")? },
                        "hand_enter" => ScriptAction::HandEnter { tray },
                        "hand_exit" => ScriptAction::HandExit { tray },
                        other => return Err(("action".into(), format!("unknown action `{other}`"))),
                    };
                    event_lines.push(line_no);
                    script.events.push(ScriptEvent { at_ms, action });
                }
                other => return Err(("directive".into(), format!("unknown directive `{other}`"))),
            }
            Ok(())
        })();
        if let Err((field, message)) = result {
            issue(&field, message);
        }
    }

    if !saw_header {
        issues.push(ScenarioIssue { line: None, field: "header".into(), message: "empty document".into() });
    } else if !saw_duration {
        issues.push(ScenarioIssue { line: None, field: "duration_ms".into(), message: "missing".into() });
    }
    if issues.is_empty() {
        issues.extend(script.violations().into_iter().map(|(idx, field, message)| ScenarioIssue {
            line: idx.map(|i| event_lines[i]),
            field,
            message,
        }));
    }
    if issues.is_empty() {
        Ok(script)
    } else {
        Err(MalformedScenario { issues })
    }
}

fn parse_arg<T: std::str::FromStr>(words: &[&str], k: usize, field: &str) -> Result<T, (String, String)> {
    let w = words
        .get(k)
        .ok_or_else(|| (field.to_string(), format!("missing argument {k}")))?;
    w.parse::<T>()
        .map_err(|_| (field.to_string(), format!("cannot parse `{w}`")))
}

/// Expected counters after one script event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedCounts {
    pub total_in: u64,
    pub total_out: u64,
    pub onscreen_in: u64,
    pub onscreen_out: u64,
    pub in_play: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruthEntry {
    pub event_index: usize,
    pub at_ms: u64,
    #[serde(flatten)]
    pub counts: ExpectedCounts,
}

/// What a correct counter must report, derived from the script alone.
///
/// Counts change when a hand visit ends, by the net change of that visit:
/// only the net change of a visit is observable from the trays.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub entries: Vec<GroundTruthEntry>,
    #[serde(rename = "final")]
    pub final_counts: ExpectedCounts,
}

impl GroundTruth {
    pub fn from_script(script: &ScenarioScript) -> GroundTruth {
        let mut on_tray = [0i64; 2];
        let mut at_visit_start = [0i64; 2];
        let (mut total_in, mut total_out) = (0i64, 0i64);
        let mut shown = [0i64; 2];
        let mut entries = Vec::with_capacity(script.events.len());

        for (event_index, ev) in script.events.iter().enumerate() {
            let k = ev.action.tray().index();
            match ev.action {
                ScriptAction::Place { count, .. } => on_tray[k] += count as i64,
                ScriptAction::Remove { count, .. } => on_tray[k] -= count as i64,
                ScriptAction::HandEnter { .. } => at_visit_start[k] = on_tray[k],
                ScriptAction::HandExit { tray } => {
                    let net = on_tray[k] - at_visit_start[k];
                    shown[k] += net;
                    match tray {
                        Camera::In => total_in += net.max(0),
                        Camera::Out => total_out += net,
                    }
                }
            }
            entries.push(GroundTruthEntry { event_index, at_ms: ev.at_ms, counts: counts(total_in, total_out, shown) });
        }
        GroundTruth { entries, final_counts: counts(total_in, total_out, shown) }
    }
}

fn counts(total_in: i64, total_out: i64, shown: [i64; 2]) -> ExpectedCounts {
    ExpectedCounts {
        total_in: total_in as u64,
        total_out: total_out as u64,
        onscreen_in: shown[0] as u64,
        onscreen_out: shown[1] as u64,
        in_play: total_in - total_out,
    }
}
