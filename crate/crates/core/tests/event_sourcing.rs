use gauzetrack::engine::ReplayError;
use gauzetrack::pipeline::replay_sync;
use gauzetrack::sim::{generate_scenario, simulate, GeneratorParams, NoiseModel};
use gauzetrack::{replay_events, AdjustTarget, Adjustment, CountEngine, EngineConfig, LedgerEvent};

mod common;

fn live_ledger(seed: u64) -> gauzetrack::SessionLedger {
    let sim = simulate(&generate_scenario(seed, &GeneratorParams::default()), &NoiseModel::default(), seed).unwrap();
    replay_sync(&sim.streams, EngineConfig::default()).unwrap().ledger
}

#[test]
fn log_lines_rebuild_the_ledger() {
    for seed in 1..=20 {
        let live = live_ledger(seed);
        let text: String = live.events().iter().map(|e| e.to_line() + "\n").collect();
        let events: Vec<LedgerEvent> = text.lines().map(|l| LedgerEvent::from_line(l).unwrap()).collect();
        assert_eq!(replay_events(&events).unwrap().to_canonical_json(), live.to_canonical_json(), "seed {seed}");
    }
}

#[test]
fn every_prefix_replays_to_its_own_totals() {
    let live = live_ledger(3);
    for n in 1..=live.events().len() {
        let prefix = &live.events()[..n];
        let rebuilt = replay_events(prefix).unwrap();
        assert_eq!(rebuilt.totals(), prefix[n - 1].totals);
        assert_eq!(rebuilt.last_sequence_no(), prefix[n - 1].sequence_no);
    }
}

#[test]
fn adjustments_and_lifecycle_survive_replay() {
    let sim = simulate(&generate_scenario(9, &GeneratorParams::default()), &NoiseModel::zero(), 9).unwrap();
    let mut engine = CountEngine::new(EngineConfig::default(), 0).unwrap();
    for f in common::merged(&sim.streams) {
        engine.step(&f).unwrap();
    }
    engine.pause(20_000).unwrap();
    engine.resume(21_000).unwrap();
    engine.adjust(&Adjustment::new(AdjustTarget::TotalIn, 2, "pack of two", "rn"), 21_500).unwrap();
    engine.adjust(&Adjustment::new(AdjustTarget::TotalOut, 2, "pack of two", "rn"), 21_600).unwrap();
    engine.end(22_000).unwrap();
    let live = engine.into_ledger();
    assert_eq!(replay_events(live.events()).unwrap(), live);
}

#[test]
fn gaps_and_garbage_are_refused() {
    let live = live_ledger(4);
    let mut events = live.events().to_vec();
    events.remove(1);
    assert!(matches!(replay_events(&events), Err(ReplayError::GapInSequence { .. })));
    assert!(LedgerEvent::from_line("{not json").is_err());
}
