//! Dual-stream replay: two camera feeds driven through one engine.
//!
//! Each camera runs on its own thread (pacing, hand-off) and a single
//! consumer merges the heads of both queues by `(timestamp_ms, camera)`,
//! IN before OUT on ties. The engine only ever sees that merged order, so
//! `Speed::Real` and `Speed::Max` yield the same ledger.

use std::iter::Peekable;
use std::str::FromStr;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::engine::{
    ConfigError, CountEngine, EngineConfig, EngineError, EngineOutput, LightChange, LightState,
    ReconciliationReport, SessionLedger,
};
use crate::protocol::{Camera, FrameObservation};

/// Frames queued per camera between its feeder thread and the merge.
const FEED_QUEUE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Speed {
    /// Honor frame timestamps against the wall clock.
    Real,
    /// As fast as possible.
    #[default]
    Max,
}

impl FromStr for Speed {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real" => Ok(Speed::Real),
            "max" => Ok(Speed::Max),
            other => Err(format!("unknown speed {other:?}, expected real or max")),
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{camera} feed thread panicked")]
    Feeder { camera: Camera },
}

#[derive(Debug, Clone)]
pub struct ReplayOutcome {
    pub ledger: SessionLedger,
    pub report: ReconciliationReport,
    /// Every light change and ledger event, in emission order.
    pub outputs: Vec<EngineOutput>,
    /// Frames accepted per camera.
    pub ingested: [u64; 2],
    /// Out-of-order frames skipped per camera.
    pub dropped: [u64; 2],
}

impl ReplayOutcome {
    pub fn light_changes(&self) -> impl Iterator<Item = &LightChange> {
        self.outputs.iter().filter_map(|o| match o {
            EngineOutput::Light(c) => Some(c),
            EngineOutput::Ledger(_) => None,
        })
    }

    /// `(camera, entered_ms, left_ms)` for every RED interval that closed.
    pub fn red_intervals(&self) -> Vec<(Camera, u64, u64)> {
        let mut open: [Option<u64>; 2] = [None; 2];
        let mut out = Vec::new();
        for c in self.light_changes() {
            let k = c.camera.index();
            if c.to == LightState::Red {
                open[k] = Some(c.timestamp_ms);
            } else if c.from == LightState::Red {
                if let Some(start) = open[k].take() {
                    out.push((c.camera, start, c.timestamp_ms));
                }
            }
        }
        out
    }
}

/// Yields frames from two per-camera sources in deterministic merged order.
pub struct MergedFrames<I: Iterator<Item = FrameObservation>> {
    heads: [Peekable<I>; 2],
}

impl<I: Iterator<Item = FrameObservation>> MergedFrames<I> {
    pub fn new(input: I, output: I) -> Self {
        Self { heads: [input.peekable(), output.peekable()] }
    }
}

impl<I: Iterator<Item = FrameObservation>> Iterator for MergedFrames<I> {
    type Item = FrameObservation;

    fn next(&mut self) -> Option<FrameObservation> {
        let t_in = self.heads[0].peek().map(|f| f.timestamp_ms);
        let t_out = self.heads[1].peek().map(|f| f.timestamp_ms);
        match (t_in, t_out) {
            (Some(a), Some(b)) if b < a => self.heads[1].next(),
            (Some(_), _) => self.heads[0].next(),
            (None, _) => self.heads[1].next(),
        }
    }
}

/// Session clock origin: the earliest frame on either camera.
fn start_time(streams: &[Vec<FrameObservation>; 2]) -> u64 {
    streams.iter().filter_map(|s| s.first()).map(|f| f.timestamp_ms).min().unwrap_or(0)
}

/// Runs both streams through a fresh engine on the calling thread.
pub fn replay_sync(streams: &[Vec<FrameObservation>; 2], cfg: EngineConfig) -> Result<ReplayOutcome, PipelineError> {
    let merged = MergedFrames::new(streams[0].clone().into_iter(), streams[1].clone().into_iter());
    drive(merged, cfg, start_time(streams))
}

/// Runs both streams through a fresh engine, one feeder thread per camera.
pub fn replay(
    streams: [Vec<FrameObservation>; 2],
    cfg: EngineConfig,
    speed: Speed,
) -> Result<ReplayOutcome, PipelineError> {
    cfg.validate()?;
    let origin = start_time(&streams);
    let wall_origin = Instant::now();

    let [input, output] = streams;
    let (tx_in, rx_in) = mpsc::sync_channel(FEED_QUEUE);
    let (tx_out, rx_out) = mpsc::sync_channel(FEED_QUEUE);
    let feeders = [(Camera::In, input, tx_in), (Camera::Out, output, tx_out)].map(|(camera, frames, tx)| {
        let handle = thread::Builder::new()
            .name(format!("feed-{camera}"))
            .spawn(move || feed(frames, tx, speed, origin, wall_origin))
            .expect("spawn feeder thread");
        (camera, handle)
    });

    let result = drive(MergedFrames::new(rx_in.into_iter(), rx_out.into_iter()), cfg, origin);
    for (camera, handle) in feeders {
        handle.join().map_err(|_| PipelineError::Feeder { camera })?;
    }
    result
}

fn feed(
    frames: Vec<FrameObservation>,
    tx: mpsc::SyncSender<FrameObservation>,
    speed: Speed,
    origin: u64,
    wall_origin: Instant,
) {
    for frame in frames {
        if speed == Speed::Real {
            let due = wall_origin + Duration::from_millis(frame.timestamp_ms.saturating_sub(origin));
            let now = Instant::now();
            if due > now {
                thread::sleep(due - now);
            }
        }
        if tx.send(frame).is_err() {
            return;
        }
    }
}

fn drive(
    frames: impl Iterator<Item = FrameObservation>,
    cfg: EngineConfig,
    origin: u64,
) -> Result<ReplayOutcome, PipelineError> {
    let mut engine = CountEngine::new(cfg, origin)?;
    let mut outputs = Vec::new();
    let mut ingested = [0u64; 2];
    let mut dropped = [0u64; 2];
    let mut clock = origin;

    for frame in frames {
        let k = frame.camera.index();
        match engine.step(&frame) {
            Ok(out) => {
                ingested[k] += 1;
                clock = clock.max(frame.timestamp_ms);
                outputs.extend(out);
            }
            Err(EngineError::NonMonotonicFrame { .. }) => {
                log::warn!("dropping out-of-order {} frame {}", frame.camera, frame.frame_index);
                dropped[k] += 1;
            }
            Err(e) => return Err(e.into()),
        }
    }

    let (end, report) = engine.end(clock)?;
    outputs.push(EngineOutput::Ledger(end));
    Ok(ReplayOutcome { ledger: engine.into_ledger(), report, outputs, ingested, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_scenario, simulate, GeneratorParams, NoiseModel};

    fn frame(camera: Camera, i: u64, t: u64) -> FrameObservation {
        FrameObservation::new(camera, i, t, vec![])
    }

    #[test]
    fn merge_orders_by_time_then_camera() {
        let a = vec![frame(Camera::In, 0, 0), frame(Camera::In, 1, 10), frame(Camera::In, 2, 20)];
        let b = vec![frame(Camera::Out, 0, 5), frame(Camera::Out, 1, 10)];
        let order: Vec<(Camera, u64)> =
            MergedFrames::new(a.into_iter(), b.into_iter()).map(|f| (f.camera, f.timestamp_ms)).collect();
        assert_eq!(
            order,
            vec![(Camera::In, 0), (Camera::Out, 5), (Camera::In, 10), (Camera::Out, 10), (Camera::In, 20)]
        );
    }

    #[test]
    fn threaded_and_inline_replay_agree() {
        let script = generate_scenario(11, &GeneratorParams::default());
        let sim = simulate(&script, &NoiseModel::default(), 11).unwrap();
        let inline = replay_sync(&sim.streams, EngineConfig::default()).unwrap();
        let threaded = replay(sim.streams.clone(), EngineConfig::default(), Speed::Max).unwrap();
        assert_eq!(inline.ledger.to_canonical_json(), threaded.ledger.to_canonical_json());
        assert_eq!(inline.outputs, threaded.outputs);
    }

    #[test]
    fn stale_frames_are_counted_and_skipped() {
        let a = vec![frame(Camera::In, 0, 0), frame(Camera::In, 2, 100), frame(Camera::In, 1, 100)];
        let out = replay_sync(&[a, vec![]], EngineConfig::default()).unwrap();
        assert_eq!(out.ingested, [2, 0]);
        assert_eq!(out.dropped, [1, 0]);
        assert!(out.report.passed);
    }

    #[test]
    fn empty_streams_reconcile_clean() {
        let out = replay(Default::default(), EngineConfig::default(), Speed::Real).unwrap();
        assert!(out.report.passed);
        assert_eq!(out.ledger.events().len(), 2);
    }
}
