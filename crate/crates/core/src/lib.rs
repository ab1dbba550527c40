//! Real-time surgical gauze count tracking over two tray cameras.
//!
//! Per-frame detections from an "In" and an "Out" tray camera feed a
//! hand-gated counting state machine. Counts are committed to an
//! append-only ledger (Total In, Total Out, In Play), can be corrected by
//! hand, and are reconciled at the end of the operation. A scenario
//! simulator with exact ground truth drives everything without a detector.
//!
//! ## Examples
//!
//! Each major capability has a runnable example:
//!
//! ```text
//! examples/
//! ├── wire_protocol.rs        # frame lines: serialize, parse, validate
//! ├── count_engine.rs         # traffic-light FSM on a hand-written trace
//! ├── simulate_scenario.rs    # scenario script -> streams + ground truth
//! ├── noise_robustness.rs     # seeded noisy runs against ground truth
//! ├── event_sourcing.rs       # persist the ledger log and replay it
//! ├── manual_adjustment.rs    # corrections and reconciliation
//! ├── anomaly_capture.rs      # ring-buffered frame captures
//! ├── live_service.rs         # socket ingestion, client API, push stream
//! └── throughput.rs           # dual-stream frames/second measurement
//! ```
//!
//! ```bash
//! cargo run -p gauzetrack --example count_engine
//! ```

pub mod bench;
pub mod engine;
pub mod geometry;
pub mod pipeline;
pub mod protocol;
pub mod service;
pub mod sim;

pub use engine::{
    reconcile, replay_events, AdjustTarget, Adjustment, CountEngine, EngineConfig, EngineError, EngineOutput,
    EventKind, LedgerEvent, LightState, ReconciliationReport, SessionConfig, SessionLedger, SessionStatus,
};
pub use geometry::{iou, BBox};
pub use protocol::{parse_frame, serialize_frame, validate_stream, Camera, ClassId, Detection, FrameObservation};
