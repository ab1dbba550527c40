//! The per-tray traffic light on a hand-written trace: two gauzes are laid on
//! the In tray, then one disappears with no hand in view.

use gauzetrack::{BBox, Camera, CountEngine, Detection, EngineConfig, EngineOutput, FrameObservation};

const PERIOD_MS: u64 = 66;

fn gauzes(n: usize) -> Vec<Detection> {
    (0..n)
        .map(|i| {
            let x = 0.1 + 0.3 * i as f64;
            Detection::gauze(0.9, BBox::new(x, 0.1, x + 0.2, 0.3))
        })
        .collect()
}

fn main() {
    let mut engine = CountEngine::new(EngineConfig::default(), 0).unwrap();
    let hand = Detection::hand(0.9, BBox::new(0.5, 0.5, 0.9, 0.9));

    // (frames, gauzes on tray, hand over tray)
    let script = [(10, 0, false), (8, 0, true), (6, 2, true), (12, 2, false), (40, 1, false)];
    let mut i = 0u64;
    for (frames, n, with_hand) in script {
        for _ in 0..frames {
            let mut dets = gauzes(n);
            if with_hand {
                dets.push(hand);
            }
            let frame = FrameObservation::new(Camera::In, i, i * PERIOD_MS, dets);
            for out in engine.step(&frame).unwrap() {
                match out {
                    EngineOutput::Light(c) => println!("{:>5} ms  {} {} -> {}", c.timestamp_ms, c.camera, c.from, c.to),
                    EngineOutput::Ledger(e) => println!(
                        "{:>5} ms  #{} {:?} delta {:+}  total_in {} in_play {}",
                        e.timestamp_ms,
                        e.sequence_no,
                        e.kind,
                        e.delta,
                        e.totals.total_in,
                        e.totals.in_play()
                    ),
                }
            }
            i += 1;
        }
    }
    let tray = engine.tray(Camera::In);
    println!("final: light {}, on screen {}, total_in {}", tray.light(), tray.stable_onscreen(), engine.ledger().total_in());
}
