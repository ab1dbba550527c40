use std::fs;
use std::io;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use gauzetrack::bench::{run_bench, BenchConfig, BenchError, DEFAULT_FPS_TARGET};
use gauzetrack::engine::{ConfigError, SessionConfig};
use gauzetrack::pipeline::{replay, PipelineError, Speed};
use gauzetrack::service::{Server, ServiceConfig, SessionService, DEFAULT_HEARTBEAT_MS, DEFAULT_SUBSCRIBER_QUEUE};
use gauzetrack::sim::files::{read_ground_truth, read_stream_file, stream_file_name, write_sim_output, FileError, GROUND_TRUTH_FILE};
use gauzetrack::sim::{generate_scenario, parse_scenario, simulate, GeneratorParams, NoiseModel, SimError};
use gauzetrack::{Camera, EventKind};

const EXIT_FAILED: u8 = 1;
const EXIT_IO: u8 = 3;
const EXIT_MALFORMED: u8 = 4;

#[derive(Parser)]
#[command(name = "gauzetrack", version, about = "Dual-tray surgical gauze count tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a scenario into per-camera streams plus ground truth.
    Simulate(SimulateArgs),
    /// Feed recorded streams through a local engine and reconcile.
    Replay(ReplayArgs),
    /// Host the session service.
    Serve(ServeArgs),
    /// Measure sustained frames/second per stream.
    Bench(BenchArgs),
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["script", "generate"])))]
struct SimulateArgs {
    /// Scenario file.
    #[arg(long)]
    script: Option<PathBuf>,
    /// Generate a random balanced scenario from the seed instead of reading one.
    #[arg(long)]
    generate: bool,
    /// With --generate: minimum gap between any two hand visits, in ms.
    #[arg(long, requires = "generate")]
    visit_gap_ms: Option<u64>,
    #[arg(long)]
    seed: u64,
    /// `zero`, `default`, or a noise model file.
    #[arg(long, default_value = "default")]
    noise: String,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    in_dir: PathBuf,
    #[arg(long, default_value = "max")]
    speed: Speed,
    /// Engine config file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    port: u16,
    #[arg(long)]
    data_dir: PathBuf,
    /// Session defaults for clients that start without a config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    bind: std::net::IpAddr,
    #[arg(long, default_value_t = DEFAULT_HEARTBEAT_MS)]
    heartbeat_ms: u64,
    #[arg(long, default_value_t = DEFAULT_SUBSCRIBER_QUEUE)]
    queue_bound: usize,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 2)]
    streams: usize,
    #[arg(long, default_value_t = 10.0)]
    duration_s: f64,
    #[arg(long, default_value_t = DEFAULT_FPS_TARGET)]
    fps_target: f64,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn io(what: impl std::fmt::Display) -> Self {
        Self { code: EXIT_IO, message: what.to_string() }
    }

    fn malformed(what: impl std::fmt::Display) -> Self {
        Self { code: EXIT_MALFORMED, message: what.to_string() }
    }
}

impl From<FileError> for Failure {
    fn from(e: FileError) -> Self {
        match e {
            FileError::Io { .. } => Failure::io(e),
            _ => Failure::malformed(e),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::io(e),
            _ => Failure::malformed(e),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Replay(a) => cmd_replay(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("gauzetrack: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<SessionConfig, Failure> {
    Ok(match path {
        Some(p) => SessionConfig::load(p)?,
        None => SessionConfig::default(),
    })
}

fn cmd_simulate(a: SimulateArgs) -> Result<u8, Failure> {
    let noise = match a.noise.as_str() {
        "zero" => NoiseModel::zero(),
        "default" => NoiseModel::default(),
        path => {
            let text = fs::read_to_string(path).map_err(|e| Failure::io(format!("{path}: {e}")))?;
            NoiseModel::from_toml(&text).map_err(|e| Failure::malformed(format!("{path}: {e}")))?
        }
    };
    let script = match &a.script {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
            parse_scenario(&text).map_err(|e| Failure::malformed(format!("{}: {e}", path.display())))?
        }
        None => {
            let params = match a.visit_gap_ms {
                Some(gap) => GeneratorParams::separated(gap),
                None => GeneratorParams::default(),
            };
            generate_scenario(a.seed, &params)
        }
    };
    let out = simulate(&script, &noise, a.seed).map_err(|e| match e {
        SimError::Scenario(_) | SimError::Noise(_) => Failure::malformed(e),
        SimError::Packing(_) => Failure { code: EXIT_FAILED, message: e.to_string() },
    })?;
    write_sim_output(&a.out_dir, &out)?;
    fs::write(a.out_dir.join("scenario.scn"), script.to_text()).map_err(Failure::io)?;

    let gt = out.ground_truth.final_counts;
    println!(
        "wrote {} IN and {} OUT frames to {}",
        out.stream(Camera::In).len(),
        out.stream(Camera::Out).len(),
        a.out_dir.display()
    );
    println!(
        "ground truth: total_in={} total_out={} in_play={} onscreen_in={} onscreen_out={}",
        gt.total_in, gt.total_out, gt.in_play, gt.onscreen_in, gt.onscreen_out
    );
    Ok(0)
}

fn cmd_replay(a: ReplayArgs) -> Result<u8, Failure> {
    let cfg = load_config(a.config.as_deref())?;
    let mut streams: [Vec<_>; 2] = Default::default();
    for camera in Camera::ALL {
        let path = a.in_dir.join(stream_file_name(camera));
        let (_, frames) = read_stream_file(&path)?;
        streams[camera.index()] = frames;
    }
    let truth_path = a.in_dir.join(GROUND_TRUTH_FILE);
    let truth = if truth_path.exists() { Some(read_ground_truth(&truth_path)?) } else { None };

    let outcome = replay(streams, cfg.engine, a.speed).map_err(|e| match e {
        PipelineError::Config(c) => Failure::from(c),
        other => Failure { code: EXIT_FAILED, message: other.to_string() },
    })?;
    let ledger = &outcome.ledger;
    let report = &outcome.report;

    println!(
        "ledger: total_in={} total_out={} in_play={} onscreen_in={} onscreen_out={} events={}",
        ledger.total_in(),
        ledger.total_out(),
        ledger.in_play(),
        ledger.onscreen_in(),
        ledger.onscreen_out(),
        ledger.events().len()
    );
    let warnings = ledger
        .events()
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Warning | EventKind::UnattendedCommit))
        .count();
    println!(
        "frames: IN {} ingested / {} dropped, OUT {} ingested / {} dropped; {warnings} warning events",
        outcome.ingested[0], outcome.dropped[0], outcome.ingested[1], outcome.dropped[1]
    );
    println!("reconciliation: {}", if report.passed { "PASSED" } else { "FAILED" });
    for f in &report.discrepancies {
        println!("  [{:?}] {}", f.severity, f.message);
    }
    let truth_match = truth.as_ref().map(|gt| {
        let g = gt.final_counts;
        let matches = g.total_in == ledger.total_in() && g.total_out == ledger.total_out() && g.in_play == ledger.in_play();
        println!(
            "ground truth: total_in={} total_out={} in_play={} -> {}",
            g.total_in,
            g.total_out,
            g.in_play,
            if matches { "match" } else { "MISMATCH" }
        );
        matches
    });

    let mut log = String::new();
    for e in ledger.events() {
        log.push_str(&e.to_line());
        log.push('\n');
    }
    fs::write(a.in_dir.join("replay_events.log"), log).map_err(Failure::io)?;
    let result = json!({
        "speed": match a.speed { Speed::Real => "real", Speed::Max => "max" },
        "ledger": ledger,
        "report": report,
        "ingested": {"IN": outcome.ingested[0], "OUT": outcome.ingested[1]},
        "dropped": {"IN": outcome.dropped[0], "OUT": outcome.dropped[1]},
        "ground_truth": truth.as_ref().map(|g| g.final_counts),
        "ground_truth_match": truth_match,
    });
    let text = serde_json::to_string_pretty(&result).map_err(Failure::io)?;
    fs::write(a.in_dir.join("replay_result.json"), text + "\n").map_err(Failure::io)?;

    Ok(if report.passed { 0 } else { EXIT_FAILED })
}

fn cmd_serve(a: ServeArgs) -> Result<u8, Failure> {
    let session_defaults = load_config(a.config.as_deref())?;
    fs::create_dir_all(&a.data_dir).map_err(|e| Failure::io(format!("{}: {e}", a.data_dir.display())))?;
    let svc = SessionService::new(ServiceConfig {
        data_dir: a.data_dir.clone(),
        session_defaults,
        heartbeat_ms: a.heartbeat_ms,
        subscriber_queue: a.queue_bound,
    });
    let _heartbeat = svc.spawn_heartbeat();
    let server = Server::bind(SocketAddr::new(a.bind, a.port), svc).map_err(Failure::io)?;
    println!("listening on {}, data in {}", server.local_addr().map_err(Failure::io)?, a.data_dir.display());
    server.run().map_err(Failure::io)?;
    Ok(0)
}

fn cmd_bench(a: BenchArgs) -> Result<u8, Failure> {
    if !(a.duration_s.is_finite() && a.duration_s > 0.0) {
        return Err(Failure { code: 2, message: "--duration-s must be positive".into() });
    }
    let cfg = BenchConfig { streams: a.streams, duration: Duration::from_secs_f64(a.duration_s), fps_target: a.fps_target };
    let report = run_bench(&cfg).map_err(|e| match e {
        BenchError::Streams(_) | BenchError::FpsTarget => Failure { code: 2, message: e.to_string() },
        BenchError::Io(io) => Failure::io(io),
        other => Failure { code: EXIT_FAILED, message: other.to_string() },
    })?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(|e| Failure::io(io::Error::other(e)))?);
    } else {
        for s in &report.streams {
            println!(
                "{:>3}: {:>10} frames in {:.2} s = {:>10.1} fps, latency p50 {:.3} ms p99 {:.3} ms max {:.3} ms",
                s.camera, s.frames, s.elapsed_s, s.fps, s.p50_latency_ms, s.p99_latency_ms, s.max_latency_ms
            );
        }
        println!(
            "target {} fps per stream, p99 <= {:.1} ms: {}",
            report.fps_target,
            1000.0 / report.fps_target,
            if report.passed() { "PASS" } else { "FAIL" }
        );
    }
    Ok(if report.passed() { 0 } else { EXIT_FAILED })
}
