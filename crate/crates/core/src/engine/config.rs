use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default number of frames kept per camera for anomaly captures.
pub const DEFAULT_FRAMES_TO_CAPTURE: usize = 100;

/// Tunables of the counting state machine.
///
/// Loaded from a `key = value` file; every key is optional and falls back
/// to the defaults below.
///
/// ```text
/// confidence_threshold = 0.20
/// debounce_window = 5
/// stability_frames = 3
/// hand_clear_frames = 3
/// red_duration_ms = 50
/// unattended_commit_ms = 2000
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Detections below this confidence are ignored (inclusive bound).
    pub confidence_threshold: f64,
    /// Majority-vote window length, in frames.
    pub debounce_window: u32,
    /// Frames the debounced count must hold before a hand-gated commit.
    pub stability_frames: u32,
    /// Consecutive hand-free frames that end a hand visit.
    pub hand_clear_frames: u32,
    /// How long the tray shows RED after a commit.
    pub red_duration_ms: u64,
    /// Sustained change without any hand before it is committed anyway.
    pub unattended_commit_ms: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.20,
            debounce_window: 5,
            stability_frames: 3,
            hand_clear_frames: 3,
            red_duration_ms: 50,
            unattended_commit_ms: 2000,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let t = self.confidence_threshold;
        if !(t.is_finite() && (0.0..=1.0).contains(&t)) {
            return Err(ConfigError::Invalid(format!("confidence_threshold {t} is outside [0, 1]")));
        }
        for (name, v) in [
            ("debounce_window", self.debounce_window),
            ("stability_frames", self.stability_frames),
            ("hand_clear_frames", self.hand_clear_frames),
        ] {
            if v == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be positive")));
            }
        }
        if self.unattended_commit_ms == 0 {
            return Err(ConfigError::Invalid("unattended_commit_ms must be positive".into()));
        }
        if self.stability_frames > self.debounce_window {
            return Err(ConfigError::Invalid(format!(
                "stability_frames ({}) exceeds debounce_window ({})",
                self.stability_frames, self.debounce_window
            )));
        }
        Ok(())
    }

    pub fn from_str_validated(text: &str) -> Result<Self, ConfigError> {
        Ok(SessionConfig::from_str_validated(text)?.engine)
    }
}

/// Engine tunables plus the per-session anomaly buffer length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawSessionConfig")]
pub struct SessionConfig {
    #[serde(flatten)]
    pub engine: EngineConfig,
    pub frames_to_capture: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self { engine: EngineConfig::default(), frames_to_capture: DEFAULT_FRAMES_TO_CAPTURE }
    }
}

#[derive(Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawSessionConfig {
    confidence_threshold: f64,
    debounce_window: u32,
    stability_frames: u32,
    hand_clear_frames: u32,
    red_duration_ms: u64,
    unattended_commit_ms: u64,
    frames_to_capture: usize,
}

impl Default for RawSessionConfig {
    fn default() -> Self {
        let e = EngineConfig::default();
        Self {
            confidence_threshold: e.confidence_threshold,
            debounce_window: e.debounce_window,
            stability_frames: e.stability_frames,
            hand_clear_frames: e.hand_clear_frames,
            red_duration_ms: e.red_duration_ms,
            unattended_commit_ms: e.unattended_commit_ms,
            frames_to_capture: DEFAULT_FRAMES_TO_CAPTURE,
        }
    }
}

impl From<RawSessionConfig> for SessionConfig {
    fn from(raw: RawSessionConfig) -> Self {
        SessionConfig {
            engine: EngineConfig {
                confidence_threshold: raw.confidence_threshold,
                debounce_window: raw.debounce_window,
                stability_frames: raw.stability_frames,
                hand_clear_frames: raw.hand_clear_frames,
                red_duration_ms: raw.red_duration_ms,
                unattended_commit_ms: raw.unattended_commit_ms,
            },
            frames_to_capture: raw.frames_to_capture,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.engine.validate()?;
        if self.frames_to_capture == 0 {
            return Err(ConfigError::Invalid("frames_to_capture must be positive".into()));
        }
        Ok(())
    }

    pub fn from_str_validated(text: &str) -> Result<Self, ConfigError> {
        let cfg: SessionConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_str_validated(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = EngineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.confidence_threshold, 0.20);
        assert_eq!(cfg.red_duration_ms, 50);
        assert_eq!(SessionConfig::default().frames_to_capture, 100);
    }

    #[test]
    fn file_overrides_selected_keys() {
        let cfg = SessionConfig::from_str_validated(
            "# tuned for a noisy camera\ndebounce_window = 7\nstability_frames = 4\nframes_to_capture = 50\n",
        )
        .unwrap();
        assert_eq!(cfg.engine.debounce_window, 7);
        assert_eq!(cfg.engine.stability_frames, 4);
        assert_eq!(cfg.engine.hand_clear_frames, 3);
        assert_eq!(cfg.frames_to_capture, 50);
    }

    #[test]
    fn rejects_zero_window_and_unknown_keys() {
        assert!(matches!(
            SessionConfig::from_str_validated("debounce_window = 0"),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            SessionConfig::from_str_validated("debounce = 3"),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn json_round_trip_is_flat() {
        let cfg = SessionConfig { frames_to_capture: 20, ..SessionConfig::default() };
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains("\"debounce_window\":5"));
        assert_eq!(serde_json::from_str::<SessionConfig>(&text).unwrap(), cfg);
        let partial: SessionConfig = serde_json::from_str("{\"red_duration_ms\":80}").unwrap();
        assert_eq!(partial.engine.red_duration_ms, 80);
        assert_eq!(partial.frames_to_capture, 100);
    }

    #[test]
    fn stability_may_not_exceed_window() {
        let cfg = EngineConfig { stability_frames: 6, ..EngineConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = EngineConfig { confidence_threshold: 1.5, ..EngineConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
