//! Persist the ledger as one event per line and rebuild it from the file.

use std::fs;
use std::io::{BufRead, BufReader};

use gauzetrack::pipeline::replay_sync;
use gauzetrack::sim::{generate_scenario, simulate, GeneratorParams, NoiseModel};
use gauzetrack::{replay_events, EngineConfig, LedgerEvent};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let script = generate_scenario(5, &GeneratorParams::default());
    let sim = simulate(&script, &NoiseModel::zero(), 5)?;
    let live = replay_sync(&sim.streams, EngineConfig::default())?.ledger;

    let path = std::env::temp_dir().join("gauzetrack-events.log");
    let text: String = live.events().iter().map(|e| e.to_line() + "\n").collect();
    fs::write(&path, text)?;
    println!("{} events written to {}", live.events().len(), path.display());

    let events = BufReader::new(fs::File::open(&path)?)
        .lines()
        .map(|l| Ok(LedgerEvent::from_line(&l?)?))
        .collect::<Result<Vec<_>, Box<dyn std::error::Error>>>()?;
    let rebuilt = replay_events(&events)?;
    let same = rebuilt.to_canonical_json() == live.to_canonical_json();
    println!("rebuilt ledger identical: {same}");

    // a hole in the sequence is refused
    let mut holed = events.clone();
    holed.remove(1);
    println!("with event #1 removed: {}", replay_events(&holed).unwrap_err());
    Ok(())
}
