//! Dual-stream throughput measurement through the live service path.
//!
//! Each stream thread serializes a synthetic frame (ten gauzes, a periodic
//! hand visit that adds or removes one), then times parse plus ingest into a
//! shared [`SessionService`], flat out, for the requested duration.

use std::fs;
use std::io;
use std::path::PathBuf;
use std::sync::Barrier;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::engine::SessionConfig;
use crate::geometry::BBox;
use crate::protocol::{serialize_frame, Camera, Detection, FrameObservation};
use crate::service::{ServiceConfig, ServiceError, SessionService};

pub const DEFAULT_FPS_TARGET: f64 = 15.0;
pub const BENCH_GAUZES: usize = 10;
/// Frame cadence stamped on synthetic frames; pacing is not applied.
const SYNTHETIC_FPS: u64 = 15;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// 1 (IN only) or 2 (IN and OUT).
    pub streams: usize,
    pub duration: Duration,
    pub fps_target: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { streams: 2, duration: Duration::from_secs(10), fps_target: DEFAULT_FPS_TARGET }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamReport {
    pub camera: Camera,
    pub frames: u64,
    pub elapsed_s: f64,
    pub fps: f64,
    pub p50_latency_ms: f64,
    pub p99_latency_ms: f64,
    pub max_latency_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub fps_target: f64,
    pub streams: Vec<StreamReport>,
    /// Ledger events written during the run, lifecycle included.
    pub ledger_events: u64,
}

impl BenchReport {
    /// Every stream met the frame-rate target and kept p99 latency under one frame period.
    pub fn passed(&self) -> bool {
        let budget_ms = 1000.0 / self.fps_target;
        !self.streams.is_empty()
            && self.streams.iter().all(|s| s.fps >= self.fps_target && s.p99_latency_ms <= budget_ms)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("streams must be 1 or 2, got {0}")]
    Streams(usize),
    #[error("fps target must be positive")]
    FpsTarget,
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Frame `i` of a synthetic stream: ten gauzes, with a hand over the tray for
/// one second out of every four and an eleventh gauze on alternate cycles.
pub fn synthetic_frame(camera: Camera, i: u64) -> FrameObservation {
    let cycle = i / (4 * SYNTHETIC_FPS);
    let phase = i % (4 * SYNTHETIC_FPS);
    let hand = (SYNTHETIC_FPS..2 * SYNTHETIC_FPS).contains(&phase);
    let extra = usize::from(cycle % 2 == 1 || (hand && phase >= SYNTHETIC_FPS + SYNTHETIC_FPS / 2));
    let wobble = (i % 7) as f64 * 0.001;
    let mut dets: Vec<Detection> = (0..BENCH_GAUZES + extra)
        .map(|g| {
            let (col, row) = ((g % 4) as f64, (g / 4) as f64);
            let x = 0.05 + col * 0.22 + wobble;
            let y = 0.05 + row * 0.3;
            Detection::gauze(0.80 + 0.01 * (g % 10) as f64, BBox::new(x, y, x + 0.15, y + 0.2))
        })
        .collect();
    if hand {
        dets.push(Detection::hand(0.9, BBox::new(0.6, 0.6, 0.95, 0.95)));
    }
    let dets = dets.iter().map(Detection::quantized).collect();
    FrameObservation::new(camera, i, i * 1000 / SYNTHETIC_FPS, dets)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    if !(1..=2).contains(&cfg.streams) {
        return Err(BenchError::Streams(cfg.streams));
    }
    if cfg.fps_target.is_nan() || cfg.fps_target <= 0.0 {
        return Err(BenchError::FpsTarget);
    }
    let data_dir = std::env::temp_dir().join(format!("gauzetrack-bench-{}-{}", std::process::id(), uuid::Uuid::new_v4()));
    let result = bench_in(&data_dir, cfg);
    let _ = fs::remove_dir_all(&data_dir);
    result
}

fn bench_in(data_dir: &PathBuf, cfg: &BenchConfig) -> Result<BenchReport, BenchError> {
    let svc = SessionService::new(ServiceConfig { heartbeat_ms: 0, ..ServiceConfig::new(data_dir) });
    let id = svc.start_session(SessionConfig::default())?;
    let barrier = Barrier::new(cfg.streams);
    let cameras = &Camera::ALL[..cfg.streams];

    let reports = thread::scope(|scope| {
        let handles: Vec<_> = cameras
            .iter()
            .map(|&camera| {
                let (svc, id, barrier) = (&svc, &id, &barrier);
                scope.spawn(move || -> Result<StreamReport, ServiceError> {
                    let mut latencies = Vec::with_capacity(1 << 16);
                    barrier.wait();
                    let start = Instant::now();
                    let mut i = 0;
                    while start.elapsed() < cfg.duration {
                        let line = serialize_frame(&synthetic_frame(camera, i));
                        let t0 = Instant::now();
                        svc.ingest_line(id, camera, &line)?;
                        latencies.push(t0.elapsed().as_secs_f64() * 1e3);
                        i += 1;
                    }
                    let elapsed = start.elapsed().as_secs_f64();
                    latencies.sort_by(f64::total_cmp);
                    Ok(StreamReport {
                        camera,
                        frames: i,
                        elapsed_s: elapsed,
                        fps: i as f64 / elapsed,
                        p50_latency_ms: percentile(&latencies, 0.50),
                        p99_latency_ms: percentile(&latencies, 0.99),
                        max_latency_ms: latencies.last().copied().unwrap_or(0.0),
                    })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("bench stream thread panicked")).collect::<Vec<_>>()
    });

    let streams = reports.into_iter().collect::<Result<Vec<_>, _>>()?;
    svc.end_session(&id)?;
    let ledger_events = svc.snapshot(&id)?.last_sequence_no;
    Ok(BenchReport { fps_target: cfg.fps_target, streams, ledger_events })
}
