//! Manual corrections and end-of-operation reconciliation.

use gauzetrack::pipeline::replay_sync;
use gauzetrack::sim::{parse_scenario, simulate, NoiseModel};
use gauzetrack::{AdjustTarget, Adjustment, CountEngine, EngineConfig, EventKind};

const UNBALANCED: &str = include_str!("../scenarios/unbalanced.scn");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sim = simulate(&parse_scenario(UNBALANCED)?, &NoiseModel::zero(), 3)?;
    let outcome = replay_sync(&sim.streams, EngineConfig::default())?;
    println!("as counted: passed={} {:?}", outcome.report.passed, outcome.report.discrepancies);

    // Rebuild a live engine carrying the same ledger, then correct it.
    let mut engine = CountEngine::new(EngineConfig::default(), 0)?;
    for frame in gauzetrack::pipeline::MergedFrames::new(sim.streams[0].clone().into_iter(), sim.streams[1].clone().into_iter()) {
        engine.step(&frame)?;
    }
    let now = 9000;
    let rejected = [
        Adjustment::new(AdjustTarget::TotalOut, 1, "  ", "nurse.a"),
        Adjustment::new(AdjustTarget::TotalOut, -10, "typo", "nurse.a"),
        Adjustment::new(AdjustTarget::TotalIn, 0, "nothing", "nurse.a"),
    ];
    for adj in &rejected {
        let before = engine.ledger().clone();
        let err = engine.adjust(adj, now).unwrap_err();
        assert_eq!(engine.ledger(), &before);
        println!("rejected: {err}");
    }
    engine.adjust(&Adjustment::new(AdjustTarget::TotalOut, 1, "found in drape count", "nurse.a"), now)?;

    for e in engine.ledger().events().iter().filter(|e| e.kind == EventKind::ManualAdjustment) {
        println!("#{} {:?} {:+} by {} ({})", e.sequence_no, e.target.unwrap(), e.delta, e.actor.as_deref().unwrap(), e.reason.as_deref().unwrap());
    }
    let (_, report) = engine.end(now + 1)?;
    println!("after correction: passed={} in_play={}", report.passed, report.in_play);
    Ok(())
}
