//! Seeded noisy scenarios against ground truth.
//!
//! ```bash
//! cargo run --release -p gauzetrack --example noise_robustness -- 100 0.05
//! ```

use gauzetrack::pipeline::replay_sync;
use gauzetrack::sim::{generate_scenario, simulate, GeneratorParams, NoiseModel};
use gauzetrack::{EngineConfig, EventKind};

fn main() {
    let mut args = std::env::args().skip(1);
    let runs: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(30);
    let p_miss: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let noise = NoiseModel::dropout(p_miss, 0.01);
    let params = GeneratorParams::separated(1000);

    let (mut exact, mut flagged) = (0, 0);
    for seed in 1..=runs {
        let script = generate_scenario(seed, &params);
        let sim = simulate(&script, &noise, seed).expect("generated scenarios pack");
        let outcome = replay_sync(&sim.streams, EngineConfig::default()).unwrap();
        let gt = sim.ground_truth.final_counts;
        let l = &outcome.ledger;
        if (l.total_in(), l.total_out(), l.in_play()) == (gt.total_in, gt.total_out, gt.in_play) {
            exact += 1;
            continue;
        }
        let warned = l.events().iter().any(|e| matches!(e.kind, EventKind::Warning | EventKind::UnattendedCommit));
        flagged += usize::from(warned);
        println!(
            "seed {seed:>3}: got in/out {}/{} expected {}/{}{}",
            l.total_in(),
            l.total_out(),
            gt.total_in,
            gt.total_out,
            if warned { " (warning logged)" } else { "" }
        );
    }
    println!("{exact}/{runs} exact at p_false_negative={p_miss}; {flagged} of the misses carried a warning");
}
