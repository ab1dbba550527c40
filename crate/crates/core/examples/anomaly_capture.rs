//! Capture the most recent frames of both cameras for offline review.

use gauzetrack::service::{read_capture, ServiceConfig, SessionService};
use gauzetrack::sim::{generate_scenario, simulate, GeneratorParams, NoiseModel};
use gauzetrack::{Camera, SessionConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = std::env::temp_dir().join(format!("gauzetrack-capture-{}", std::process::id()));
    let svc = SessionService::new(ServiceConfig::new(&data));
    let id = svc.start_session(SessionConfig::default())?;

    let sim = simulate(&generate_scenario(8, &GeneratorParams::default()), &NoiseModel::default(), 8)?;
    let frames = gauzetrack::pipeline::MergedFrames::new(sim.streams[0].clone().into_iter(), sim.streams[1].clone().into_iter());
    for frame in frames {
        svc.ingest(&id, frame)?;
    }

    let receipt = svc.capture_anomaly(&id, Some("count looked off after last return".into()))?;
    println!("{} -> {} ({} IN, {} OUT frames)", receipt.capture_id, receipt.path.display(), receipt.frames_in, receipt.frames_out);

    let cap = read_capture(&receipt.path)?;
    for camera in Camera::ALL {
        let f = cap.frames(camera);
        if let (Some(a), Some(b)) = (f.first(), f.last()) {
            println!("{camera}: frames {}..={} of {}", a.frame_index, b.frame_index, sim.stream(camera).len());
        }
    }
    println!("snapshot at capture: total_in {} total_out {}", cap.header.snapshot.total_in, cap.header.snapshot.total_out);
    svc.end_session(&id)?;
    std::fs::remove_dir_all(&data)?;
    Ok(())
}
