use thiserror::Error;

use super::layout::{place_more, snap, PackingInfeasible};
use super::noise::{apply_noise, NoiseModel};
use super::rng::{SimRng, Substream};
use super::script::{GroundTruth, MalformedScenario, ScenarioScript, ScriptAction};
use crate::geometry::BBox;
use crate::protocol::{quantize, Camera, Detection, FrameObservation};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] MalformedScenario),
    #[error("tray layout failed: {0}")]
    Packing(#[from] PackingInfeasible),
    #[error("invalid noise model: {0}")]
    Noise(String),
}

/// Two synthetic camera streams plus the script-derived oracle.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub seed: u64,
    pub noise: NoiseModel,
    pub fps: u32,
    /// Indexed by [`Camera::index`].
    pub streams: [Vec<FrameObservation>; 2],
    pub ground_truth: GroundTruth,
}

impl SimOutput {
    pub fn stream(&self, camera: Camera) -> &[FrameObservation] {
        &self.streams[camera.index()]
    }
}

#[derive(Debug, Clone, Default)]
struct TrayScene {
    gauzes: Vec<BBox>,
    hand: Option<BBox>,
}

impl TrayScene {
    /// Detections a perfect detector would report; gauzes whose centre is
    /// under the hand are hidden by it.
    fn ideal(&self, confidence: f64) -> Vec<Detection> {
        let mut dets: Vec<Detection> = self
            .gauzes
            .iter()
            .filter(|g| {
                let (cx, cy) = g.center();
                self.hand.is_none_or(|h| !h.contains_point(cx, cy))
            })
            .map(|g| Detection::gauze(confidence, *g))
            .collect();
        if let Some(h) = self.hand {
            dets.push(Detection::hand(confidence, h));
        }
        dets
    }
}

/// Compiles a script into per-camera frame streams.
///
/// Frame `i` is stamped `floor(i * 1000 / fps)` and reflects every script
/// event at or before that time. Layout and noise draw from separate
/// substreams of `seed`, so the scene does not depend on the noise model.
pub fn simulate(script: &ScenarioScript, noise: &NoiseModel, seed: u64) -> Result<SimOutput, SimError> {
    script.validate()?;
    noise.validate().map_err(SimError::Noise)?;

    let mut layout_rng = SimRng::new(seed, Substream::Layout);
    let mut noise_rngs = [SimRng::new(seed, Substream::NoiseIn), SimRng::new(seed, Substream::NoiseOut)];
    let mut scenes = [TrayScene::default(), TrayScene::default()];
    let confidence = quantize(noise.true_confidence.mean.clamp(0.0, 1.0));

    let n_frames = script.frame_count();
    let mut streams = [Vec::with_capacity(n_frames as usize), Vec::with_capacity(n_frames as usize)];
    let mut next_event = 0;

    for i in 0..n_frames {
        let t = script.frame_time_ms(i);
        while let Some(ev) = script.events.get(next_event).filter(|e| e.at_ms <= t) {
            apply_action(script, &mut scenes, ev.action, &mut layout_rng)?;
            next_event += 1;
        }
        for camera in Camera::ALL {
            let k = camera.index();
            let ideal = scenes[k].ideal(confidence);
            let detections = apply_noise(&ideal, noise, &mut noise_rngs[k]);
            streams[k].push(FrameObservation::new(camera, i, t, detections));
        }
    }

    Ok(SimOutput {
        seed,
        noise: *noise,
        fps: script.fps,
        streams,
        ground_truth: GroundTruth::from_script(script),
    })
}

fn apply_action(
    script: &ScenarioScript,
    scenes: &mut [TrayScene; 2],
    action: ScriptAction,
    rng: &mut SimRng,
) -> Result<(), PackingInfeasible> {
    let tray = action.tray();
    let region = script.tray(tray);
    let scene = &mut scenes[tray.index()];
    match action {
        ScriptAction::Place { count, .. } => {
            place_more(&mut scene.gauzes, count as usize, region, script.gauze_size, script.layout_max_iou, rng)?;
        }
        ScriptAction::Remove { count, .. } => {
            for _ in 0..count {
                if scene.gauzes.is_empty() {
                    break;
                }
                let idx = rng.int_inclusive(0, scene.gauzes.len() as u64 - 1) as usize;
                scene.gauzes.remove(idx);
            }
        }
        ScriptAction::HandEnter { .. } => {
            let (w, h) = script.hand_size;
            let x = rng.range(region.x_min, (region.x_max - w).max(region.x_min));
            let y = rng.range(region.y_min, (region.y_max - h).max(region.y_min));
            scene.hand = Some(snap(BBox::from_origin_size(x, y, w, h).clamped()));
        }
        ScriptAction::HandExit { .. } => scene.hand = None,
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{raw_gauze_count, EngineConfig};
    use crate::protocol::{parse_frame, serialize_frame, validate_stream, ClassId};
    use crate::sim::script::parse_scenario;

    const PLACE_THREE: &str = "\
gauzetrack-scenario 1
duration_ms 3000
fps 15
at 500 hand_enter IN
at 800 place IN 3
at 1200 hand_exit IN
";

    #[test]
    fn empty_script_gives_empty_frames() {
        let script = parse_scenario("gauzetrack-scenario 1\nduration_ms 1000\n").unwrap();
        let out = simulate(&script, &NoiseModel::zero(), 42).unwrap();
        for camera in Camera::ALL {
            let s = out.stream(camera);
            assert_eq!(s.len(), 15);
            assert!(s.iter().all(|f| f.detections.is_empty() && f.camera == camera));
            assert!(validate_stream(s, camera).is_empty());
        }
        assert_eq!(out.ground_truth.final_counts.total_in, 0);
        assert_eq!(out.ground_truth.final_counts.in_play, 0);
    }

    #[test]
    fn placement_shows_up_with_hand_interval() {
        let script = parse_scenario(PLACE_THREE).unwrap();
        let out = simulate(&script, &NoiseModel::zero(), 7).unwrap();
        let cfg = EngineConfig::default();
        for f in out.stream(Camera::In) {
            let hand = f.detections.iter().any(|d| d.class_id == ClassId::Hand);
            assert_eq!(hand, (500..1200).contains(&f.timestamp_ms), "t={}", f.timestamp_ms);
            let raw = raw_gauze_count(f, &cfg);
            if f.timestamp_ms < 800 {
                assert_eq!(raw, 0);
            } else if !hand {
                assert_eq!(raw, 3);
            } else {
                assert!(raw <= 3);
            }
        }
        assert!(out.stream(Camera::Out).iter().all(|f| f.detections.is_empty()));
        assert_eq!(out.ground_truth.final_counts.total_in, 3);
        assert_eq!(out.ground_truth.final_counts.in_play, 3);
    }

    #[test]
    fn identical_inputs_give_identical_bytes() {
        let script = parse_scenario(PLACE_THREE).unwrap();
        let noise = NoiseModel::default();
        let render = |o: &SimOutput| -> String {
            o.streams.iter().flatten().map(serialize_frame).collect::<Vec<_>>().join("\n")
        };
        let a = simulate(&script, &noise, 99).unwrap();
        let b = simulate(&script, &noise, 99).unwrap();
        assert_eq!(render(&a), render(&b));
        let c = simulate(&script, &noise, 100).unwrap();
        assert_ne!(render(&a), render(&c));
    }

    #[test]
    fn emitted_frames_round_trip_through_the_wire_format() {
        let script = parse_scenario(PLACE_THREE).unwrap();
        let out = simulate(&script, &NoiseModel { p_false_positive: 0.3, ..NoiseModel::default() }, 3).unwrap();
        for f in out.streams.iter().flatten() {
            assert_eq!(&parse_frame(&serialize_frame(f)).unwrap(), f);
        }
    }

    #[test]
    fn ground_truth_ignores_noise_and_seed() {
        let script = parse_scenario(PLACE_THREE).unwrap();
        let a = simulate(&script, &NoiseModel::zero(), 1).unwrap().ground_truth;
        let b = simulate(&script, &NoiseModel::default(), 2).unwrap().ground_truth;
        assert_eq!(a, b);
    }
}
