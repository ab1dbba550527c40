//! Scenario simulator: scripted surgical timelines compiled into synthetic
//! detection streams, with exact ground truth derived from the script.

pub mod files;
pub mod generate;
pub mod layout;
pub mod noise;
pub mod rng;
pub mod script;
pub mod simulate;

pub use crate::geometry::iou;
pub use generate::{generate_scenario, GeneratorParams};
pub use layout::{layout_gauzes, PackingInfeasible};
pub use noise::{apply_noise, merge_overlapping, ConfidenceDist, NoiseModel};
pub use rng::{SimRng, Substream, RNG_ALGORITHM};
pub use script::{
    parse_scenario, ExpectedCounts, GroundTruth, GroundTruthEntry, MalformedScenario, ScenarioIssue,
    ScenarioScript, ScriptAction, ScriptEvent,
};
pub use simulate::{simulate, SimError, SimOutput};
