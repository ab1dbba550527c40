//! Compile a scenario script into two camera streams plus ground truth and
//! write them the way `gauzetrack simulate` does.

use gauzetrack::sim::files::write_sim_output;
use gauzetrack::sim::{parse_scenario, simulate, NoiseModel};
use gauzetrack::Camera;

const SCRIPT: &str = include_str!("../scenarios/balanced.scn");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let script = parse_scenario(SCRIPT)?;
    let out = simulate(&script, &NoiseModel::default(), 11)?;

    for camera in Camera::ALL {
        let frames = out.stream(camera);
        let busiest = frames.iter().map(|f| f.detections.len()).max().unwrap_or(0);
        println!("{camera}: {} frames, at most {busiest} detections in one frame", frames.len());
    }
    for e in &out.ground_truth.entries {
        println!(
            "after event {:>2} at {:>4} ms: total_in {} total_out {} in_play {}",
            e.event_index, e.at_ms, e.counts.total_in, e.counts.total_out, e.counts.in_play
        );
    }

    let dir = std::env::temp_dir().join("gauzetrack-simulate-example");
    write_sim_output(&dir, &out)?;
    println!("streams and ground truth written to {}", dir.display());

    // the generator's text round-trips through the parser
    assert_eq!(parse_scenario(&script.to_text())?, script);
    Ok(())
}
