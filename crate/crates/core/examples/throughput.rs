//! Dual-stream frames/second through parse and ingest.
//!
//! ```bash
//! cargo run --release -p gauzetrack --example throughput -- 3
//! ```

use std::time::Duration;

use gauzetrack::bench::{run_bench, BenchConfig};

fn main() {
    let secs: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2.0);
    let cfg = BenchConfig { duration: Duration::from_secs_f64(secs), ..BenchConfig::default() };
    let report = run_bench(&cfg).expect("bench runs");
    for s in &report.streams {
        println!("{}: {:.0} fps, p50 {:.3} ms, p99 {:.3} ms", s.camera, s.fps, s.p50_latency_ms, s.p99_latency_ms);
    }
    println!("{} ledger events; target {} fps met: {}", report.ledger_events, report.fps_target, report.passed());
}
