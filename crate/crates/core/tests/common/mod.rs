#![allow(dead_code)]

use gauzetrack::engine::{hand_present, EngineOutput, LightState};
use gauzetrack::pipeline::MergedFrames;
use gauzetrack::sim::{ScenarioScript, ScriptAction};
use gauzetrack::{Adjustment, Camera, CountEngine, EngineConfig, EventKind, FrameObservation, SessionLedger};

pub fn merged(streams: &[Vec<FrameObservation>; 2]) -> Vec<FrameObservation> {
    MergedFrames::new(streams[0].clone().into_iter(), streams[1].clone().into_iter()).collect()
}

/// One operation applied to a live engine.
#[derive(Debug, Clone)]
pub enum Op {
    Frame(FrameObservation),
    Adjust(Adjustment),
}

/// Ledger counters must satisfy `in_play == total_in - total_out`, both live
/// and as recorded on every event.
pub fn check_identity(ledger: &SessionLedger) -> Result<(), String> {
    if ledger.in_play() != ledger.total_in() as i64 - ledger.total_out() as i64 {
        return Err(format!("in_play {} != {} - {}", ledger.in_play(), ledger.total_in(), ledger.total_out()));
    }
    for e in ledger.events() {
        let t = e.totals;
        if t.in_play() != t.total_in as i64 - t.total_out as i64 {
            return Err(format!("event #{} carries inconsistent totals", e.sequence_no));
        }
    }
    Ok(())
}

/// Drives `ops` through a fresh engine checking, after every operation:
/// no commit is emitted while that tray shows YELLOW, a hand seen in GREEN
/// turns the tray YELLOW within the same step, and the In Play identity.
pub fn run_checked(ops: &[Op], cfg: EngineConfig) -> Result<(SessionLedger, Vec<EngineOutput>), String> {
    let mut engine = CountEngine::new(cfg, 0).map_err(|e| e.to_string())?;
    let mut all = Vec::new();
    let mut now = 0;
    for (n, op) in ops.iter().enumerate() {
        match op {
            Op::Frame(frame) => {
                let cam = frame.camera;
                let before = engine.tray(cam).light();
                let Ok(outputs) = engine.step(frame) else { continue };
                now = now.max(frame.timestamp_ms);
                let mut shown = [engine.tray(Camera::In).light(), engine.tray(Camera::Out).light()];
                shown[cam.index()] = before;
                for out in &outputs {
                    match out {
                        EngineOutput::Light(c) => shown[c.camera.index()] = c.to,
                        EngineOutput::Ledger(e) if matches!(e.kind, EventKind::Commit | EventKind::UnattendedCommit) => {
                            let c = e.camera.ok_or("commit without camera")?;
                            if shown[c.index()] == LightState::Yellow {
                                return Err(format!("op {n}: {:?} on {c} while YELLOW", e.kind));
                            }
                        }
                        EngineOutput::Ledger(_) => {}
                    }
                }
                if before == LightState::Green && hand_present(frame, &cfg) && engine.tray(cam).light() != LightState::Yellow {
                    return Err(format!("op {n}: hand on GREEN {cam} left light {}", engine.tray(cam).light()));
                }
                all.extend(outputs);
            }
            Op::Adjust(adj) => {
                if let Ok(e) = engine.adjust(adj, now) {
                    all.push(EngineOutput::Ledger(e));
                }
            }
        }
        check_identity(engine.ledger()).map_err(|e| format!("op {n}: {e}"))?;
    }
    Ok((engine.into_ledger(), all))
}

pub fn frames_as_ops(frames: Vec<FrameObservation>) -> Vec<Op> {
    frames.into_iter().map(Op::Frame).collect()
}

/// The same operation, one gauze short on the way out: the last Out
/// placement carries one fewer, so exactly one gauze is never returned.
pub fn withhold_one_gauze(script: &ScenarioScript) -> Option<ScenarioScript> {
    let mut s = script.clone();
    let k = s
        .events
        .iter()
        .rposition(|e| matches!(e.action, ScriptAction::Place { tray: Camera::Out, .. }))?;
    match &mut s.events[k].action {
        ScriptAction::Place { count, .. } if *count > 1 => *count -= 1,
        _ => {
            s.events.remove(k);
        }
    }
    Some(s)
}

/// Random interleavings of both cameras: gauze counts that wander, hand
/// visits, replayed (stale) frames and manual adjustments, some invalid.
pub fn arb_ops() -> impl proptest::strategy::Strategy<Value = Vec<Op>> {
    use gauzetrack::{AdjustTarget, BBox, Detection};
    use proptest::prelude::*;

    let step = (0usize..2, 0u32..7, any::<bool>(), 0u8..20, -3i64..=3);
    proptest::collection::vec(step, 0..400).prop_map(|steps| {
        let mut next_index = [0u64; 2];
        let mut ops = Vec::with_capacity(steps.len());
        for (t, (cam, count, hand, kind, delta)) in steps.into_iter().enumerate() {
            let camera = Camera::ALL[cam];
            if kind == 0 {
                let target = if cam == 0 { AdjustTarget::TotalIn } else { AdjustTarget::TotalOut };
                let reason = if delta % 2 == 0 { "" } else { "recount" };
                ops.push(Op::Adjust(Adjustment::new(target, delta, reason, "tester")));
                continue;
            }
            // kind 1 replays the previous frame index, which must be refused
            let index = if kind == 1 { next_index[cam].saturating_sub(1) } else { next_index[cam] };
            next_index[cam] = next_index[cam].max(index + 1);
            let mut dets: Vec<Detection> = (0..count)
                .map(|g| {
                    let x = 0.05 + 0.13 * g as f64;
                    Detection::gauze(0.9, BBox::new(x, 0.1, x + 0.1, 0.3))
                })
                .collect();
            if hand && kind % 3 == 0 {
                dets.push(Detection::hand(0.9, BBox::new(0.5, 0.5, 0.9, 0.9)));
            }
            ops.push(Op::Frame(FrameObservation::new(camera, index, t as u64 * 33, dets)));
        }
        ops
    })
}
