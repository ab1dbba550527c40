//! The session service over TCP: two camera feeds, a subscriber, and the
//! operator calls a UI would make.

use std::thread;

use gauzetrack::service::{ApiClient, IngestClient, PushMessage, Server, ServiceConfig, SessionService};
use gauzetrack::sim::{parse_scenario, simulate, NoiseModel};
use gauzetrack::Camera;

const SCRIPT: &str = include_str!("../scenarios/balanced.scn");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = std::env::temp_dir().join(format!("gauzetrack-live-{}", std::process::id()));
    let svc = SessionService::new(ServiceConfig { heartbeat_ms: 0, ..ServiceConfig::new(&data) });
    let server = Server::bind("127.0.0.1:0", svc)?;
    let addr = server.local_addr()?;
    server.spawn();
    println!("serving on {addr}");

    let mut api = ApiClient::connect(addr)?;
    let id = api.start(None)?;
    let push = ApiClient::connect(addr)?.subscribe(&id)?;
    let listener = thread::spawn(move || {
        for msg in push {
            match msg {
                Ok(PushMessage::LedgerEvent { event }) => println!("push: #{} {:?} {:+}", event.sequence_no, event.kind, event.delta),
                Ok(PushMessage::Reconciliation { report }) => {
                    println!("push: reconciliation passed={}", report.passed);
                    break;
                }
                Ok(_) => {}
                Err(e) => {
                    println!("push stream ended: {e}");
                    break;
                }
            }
        }
    });

    let sim = simulate(&parse_scenario(SCRIPT)?, &NoiseModel::default(), 2)?;
    let feeds: Vec<_> = Camera::ALL
        .into_iter()
        .map(|camera| {
            let frames = sim.stream(camera).to_vec();
            let id = id.clone();
            thread::spawn(move || -> Result<String, gauzetrack::service::server::ClientError> {
                let mut feed = IngestClient::connect(addr, &id, camera)?;
                let mut last = String::new();
                for f in &frames {
                    last = feed.send(f)?;
                }
                Ok(last)
            })
        })
        .collect();
    for f in feeds {
        println!("last ack: {}", f.join().unwrap()?);
    }

    let snap = api.snapshot(&id)?;
    println!("snapshot: total_in {} total_out {} in_play {}", snap.total_in, snap.total_out, snap.in_play);
    let report = api.end(&id)?;
    println!("end: passed={} {:?}", report.passed, report.discrepancies);
    listener.join().unwrap();
    std::fs::remove_dir_all(&data)?;
    Ok(())
}
