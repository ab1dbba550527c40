//! Seeded random scenarios following the dual-tray workflow: fresh gauzes
//! go onto the In tray, are taken from it into use, and come back onto the
//! Out tray.

use super::rng::{SimRng, Substream};
use super::script::{ScenarioScript, ScriptAction, ScriptEvent};
use crate::protocol::Camera;

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub fps: u32,
    /// Number of hand visits before the closing drain (if any).
    pub visits: (u32, u32),
    /// Hand dwell time per visit, ms.
    pub dwell_ms: (u64, u64),
    /// Gap after a visit ends before the next visit may start on the same tray.
    pub same_tray_gap_ms: u64,
    /// Gap between the end of one visit and the start of the next on any tray.
    /// `None` lets visits on different trays overlap in time.
    pub any_tray_gap_ms: Option<u64>,
    /// Most gauzes moved in one visit.
    pub max_per_visit: u32,
    /// Most gauzes a tray holds at once.
    pub max_on_tray: u32,
    /// Chance that a visit changes nothing.
    pub p_hover: f64,
    /// End with every gauze on the Out tray, so In Play is zero.
    pub balanced: bool,
    /// Quiet time after the last visit.
    pub tail_ms: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self {
            fps: 15,
            visits: (4, 12),
            dwell_ms: (300, 900),
            same_tray_gap_ms: 700,
            any_tray_gap_ms: None,
            max_per_visit: 3,
            max_on_tray: 8,
            p_hover: 0.1,
            balanced: true,
            tail_ms: 1500,
        }
    }
}

impl GeneratorParams {
    /// Visits serialized with at least `gap_ms` between them.
    pub fn separated(gap_ms: u64) -> Self {
        Self { any_tray_gap_ms: Some(gap_ms), same_tray_gap_ms: gap_ms, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy)]
enum Move {
    FillIn(u32),
    TakeFromIn(u32),
    ReturnToOut(u32),
    Hover(Camera),
}

struct Workflow {
    on_in: u32,
    in_use: u32,
    on_out: u32,
}

/// Builds a valid scenario from `seed`. The same seed and params always
/// give the same script.
pub fn generate_scenario(seed: u64, params: &GeneratorParams) -> ScenarioScript {
    let mut rng = SimRng::new(seed, Substream::Generator);
    let mut wf = Workflow { on_in: 0, in_use: 0, on_out: 0 };
    let mut moves = Vec::new();

    let visits = rng.int_inclusive(params.visits.0 as u64, params.visits.1 as u64) as u32;
    for _ in 0..visits {
        moves.push(next_move(&mut wf, params, &mut rng));
    }
    if params.balanced {
        drain(&mut wf, params, &mut moves);
    }

    let mut events = Vec::new();
    let mut tray_free_at = [0u64; 2];
    let mut cursor = 200u64;
    for mv in moves {
        let (tray, action) = match mv {
            Move::FillIn(n) => (Camera::In, Some(ScriptAction::Place { tray: Camera::In, count: n })),
            Move::TakeFromIn(n) => (Camera::In, Some(ScriptAction::Remove { tray: Camera::In, count: n })),
            Move::ReturnToOut(n) => (Camera::Out, Some(ScriptAction::Place { tray: Camera::Out, count: n })),
            Move::Hover(tray) => (tray, None),
        };
        let start = cursor.max(tray_free_at[tray.index()]);
        let dwell = rng.int_inclusive(params.dwell_ms.0, params.dwell_ms.1);
        let end = start + dwell;
        events.push(ScriptEvent::new(start, ScriptAction::HandEnter { tray }));
        if let Some(action) = action {
            // one gauze at a time, spread through the dwell
            let count = match action {
                ScriptAction::Place { count, .. } | ScriptAction::Remove { count, .. } => count,
                _ => unreachable!(),
            };
            let step = dwell / (count as u64 + 1);
            for k in 0..count as u64 {
                let single = match action {
                    ScriptAction::Place { tray, .. } => ScriptAction::Place { tray, count: 1 },
                    ScriptAction::Remove { tray, .. } => ScriptAction::Remove { tray, count: 1 },
                    other => other,
                };
                events.push(ScriptEvent::new(start + step * (k + 1), single));
            }
        }
        events.push(ScriptEvent::new(end, ScriptAction::HandExit { tray }));

        tray_free_at[tray.index()] = end + params.same_tray_gap_ms;
        cursor = match params.any_tray_gap_ms {
            Some(gap) => end + gap,
            None => start + rng.int_inclusive(100, dwell),
        };
    }
    // stable sort keeps each visit's own events in order
    events.sort_by_key(|e| e.at_ms);

    let last = events.last().map_or(0, |e| e.at_ms);
    ScenarioScript { duration_ms: last + params.tail_ms, fps: params.fps, events, ..ScenarioScript::default() }
}

fn next_move(wf: &mut Workflow, params: &GeneratorParams, rng: &mut SimRng) -> Move {
    if rng.chance(params.p_hover) {
        let tray = if rng.chance(0.5) { Camera::In } else { Camera::Out };
        return Move::Hover(tray);
    }
    let total = wf.on_in + wf.in_use + wf.on_out;
    // total gauzes are capped so a balanced ending fits on the Out tray
    let can_fill = wf.on_in < params.max_on_tray && total < params.max_on_tray;
    let can_take = wf.on_in > 0;
    let can_return = wf.in_use > 0 && wf.on_out < params.max_on_tray;

    let mut options = Vec::with_capacity(3);
    if can_fill {
        options.push(0);
    }
    if can_take {
        options.push(1);
    }
    if can_return {
        options.push(2);
    }
    if options.is_empty() {
        return Move::Hover(Camera::In);
    }
    let pick = options[rng.int_inclusive(0, options.len() as u64 - 1) as usize];
    let upto = |limit: u32, rng: &mut SimRng| rng.int_inclusive(1, limit.min(params.max_per_visit).max(1) as u64) as u32;
    match pick {
        0 => {
            let room = (params.max_on_tray - wf.on_in).min(params.max_on_tray - total);
            let n = upto(room, rng);
            wf.on_in += n;
            Move::FillIn(n)
        }
        1 => {
            let n = upto(wf.on_in, rng);
            wf.on_in -= n;
            wf.in_use += n;
            Move::TakeFromIn(n)
        }
        _ => {
            let n = upto(wf.in_use.min(params.max_on_tray - wf.on_out), rng);
            wf.in_use -= n;
            wf.on_out += n;
            Move::ReturnToOut(n)
        }
    }
}

fn drain(wf: &mut Workflow, params: &GeneratorParams, moves: &mut Vec<Move>) {
    let per = params.max_per_visit.max(1);
    while wf.on_in > 0 {
        let n = wf.on_in.min(per);
        wf.on_in -= n;
        wf.in_use += n;
        moves.push(Move::TakeFromIn(n));
    }
    while wf.in_use > 0 {
        let n = wf.in_use.min(per);
        wf.in_use -= n;
        wf.on_out += n;
        moves.push(Move::ReturnToOut(n));
    }
}
