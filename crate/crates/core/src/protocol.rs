//! Detection frame data model and its newline-delimited wire format.
//!
//! One [`FrameObservation`] per line, rendered as a JSON object with a fixed
//! field order and six decimal places for every real. The same line format
//! is used for recorded session files, the ingestion socket and simulator
//! output.
//!
//! ```text
//! {"camera":"IN","frame_index":3,"timestamp_ms":200,"detections":[{"class_id":0,"confidence":0.950000,"bbox":[0.100000,0.100000,0.200000,0.200000]}]}
//! ```

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::geometry::BBox;

/// Number of decimal places used for reals on the wire.
pub const DECIMALS: i32 = 6;

/// Rounds a real onto the wire grid (multiples of 1e-6).
pub fn quantize(v: f64) -> f64 {
    let scale = 10f64.powi(DECIMALS);
    (v * scale).round() / scale
}

/// Which tray a camera watches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Camera {
    #[serde(rename = "IN")]
    In,
    #[serde(rename = "OUT")]
    Out,
}

impl Camera {
    pub const ALL: [Camera; 2] = [Camera::In, Camera::Out];

    pub fn as_str(self) -> &'static str {
        match self {
            Camera::In => "IN",
            Camera::Out => "OUT",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Camera::In => 0,
            Camera::Out => 1,
        }
    }
}

impl fmt::Display for Camera {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Camera {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "IN" => Ok(Camera::In),
            "OUT" => Ok(Camera::Out),
            other => Err(format!("unknown camera {other:?}, expected IN or OUT")),
        }
    }
}

/// Detector class. The detector is trained on exactly these two classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassId {
    Gauze = 0,
    Hand = 1,
}

impl ClassId {
    pub fn from_id(id: u64) -> Option<ClassId> {
        match id {
            0 => Some(ClassId::Gauze),
            1 => Some(ClassId::Hand),
            _ => None,
        }
    }

    pub fn id(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub class_id: ClassId,
    pub confidence: f64,
    pub bbox: BBox,
}

impl Detection {
    pub fn gauze(confidence: f64, bbox: BBox) -> Self {
        Self { class_id: ClassId::Gauze, confidence, bbox }
    }

    pub fn hand(confidence: f64, bbox: BBox) -> Self {
        Self { class_id: ClassId::Hand, confidence, bbox }
    }

    /// Snaps confidence and corners onto the wire grid.
    pub fn quantized(&self) -> Self {
        Self {
            class_id: self.class_id,
            confidence: quantize(self.confidence),
            bbox: BBox::new(
                quantize(self.bbox.x_min),
                quantize(self.bbox.y_min),
                quantize(self.bbox.x_max),
                quantize(self.bbox.y_max),
            ),
        }
    }

    fn check(&self, index: usize) -> Result<(), ProtocolError> {
        if !(self.confidence.is_finite() && (0.0..=1.0).contains(&self.confidence)) {
            return Err(ProtocolError::invalid(
                format!("detections[{index}].confidence"),
                format!("{} is outside [0, 1]", self.confidence),
            ));
        }
        if !self.bbox.is_valid() {
            return Err(ProtocolError::invalid(
                format!("detections[{index}].bbox"),
                "corners must lie in [0, 1] with x_min < x_max and y_min < y_max",
            ));
        }
        Ok(())
    }
}

/// One camera frame's worth of detections.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameObservation {
    pub camera: Camera,
    pub frame_index: u64,
    pub timestamp_ms: u64,
    pub detections: Vec<Detection>,
}

impl FrameObservation {
    pub fn new(camera: Camera, frame_index: u64, timestamp_ms: u64, detections: Vec<Detection>) -> Self {
        Self { camera, frame_index, timestamp_ms, detections }
    }

    pub fn empty(camera: Camera, frame_index: u64, timestamp_ms: u64) -> Self {
        Self::new(camera, frame_index, timestamp_ms, Vec::new())
    }

    /// Checks the per-detection invariants.
    pub fn validate(&self) -> Result<(), ProtocolError> {
        self.detections
            .iter()
            .enumerate()
            .try_for_each(|(i, d)| d.check(i))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("malformed record: {0}")]
    MalformedRecord(String),
    #[error("invalid field `{field}`: {reason}")]
    InvalidField { field: String, reason: String },
}

impl ProtocolError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ProtocolError::InvalidField { field: field.into(), reason: reason.into() }
    }

    /// Name of the offending field, without any `detections[i].` prefix.
    pub fn field_name(&self) -> Option<&str> {
        match self {
            ProtocolError::MalformedRecord(_) => None,
            ProtocolError::InvalidField { field, .. } => {
                Some(field.rsplit('.').next().unwrap_or(field))
            }
        }
    }
}

/// Renders a frame as one canonical line (no trailing newline).
pub fn serialize_frame(frame: &FrameObservation) -> String {
    let mut out = String::with_capacity(64 + frame.detections.len() * 96);
    // write! into a String cannot fail
    let _ = write!(
        out,
        "{{\"camera\":\"{}\",\"frame_index\":{},\"timestamp_ms\":{},\"detections\":[",
        frame.camera, frame.frame_index, frame.timestamp_ms
    );
    for (i, d) in frame.detections.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(
            out,
            "{{\"class_id\":{},\"confidence\":{:.6},\"bbox\":[{:.6},{:.6},{:.6},{:.6}]}}",
            d.class_id.id(),
            d.confidence,
            d.bbox.x_min,
            d.bbox.y_min,
            d.bbox.x_max,
            d.bbox.y_max
        );
    }
    out.push_str("]}");
    out
}

/// Decodes one line. Unknown extra fields are ignored; reals are snapped
/// onto the wire grid before the invariants are checked.
pub fn parse_frame(line: &str) -> Result<FrameObservation, ProtocolError> {
    let line = line.trim_end_matches(['\n', '\r']);
    let value: Value = serde_json::from_str(line)
        .map_err(|e| ProtocolError::MalformedRecord(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| ProtocolError::MalformedRecord("record is not a JSON object".into()))?;

    let camera = match field(obj, "camera", "camera")? {
        Value::String(s) => s
            .parse::<Camera>()
            .map_err(|reason| ProtocolError::invalid("camera", reason))?,
        _ => return Err(ProtocolError::invalid("camera", "expected a string")),
    };
    let frame_index = uint(field(obj, "frame_index", "frame_index")?, "frame_index")?;
    let timestamp_ms = uint(field(obj, "timestamp_ms", "timestamp_ms")?, "timestamp_ms")?;
    let raw = field(obj, "detections", "detections")?
        .as_array()
        .ok_or_else(|| ProtocolError::invalid("detections", "expected an array"))?;

    let detections = raw
        .iter()
        .enumerate()
        .map(|(i, v)| parse_detection(v, i))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(FrameObservation { camera, frame_index, timestamp_ms, detections })
}

fn parse_detection(value: &Value, index: usize) -> Result<Detection, ProtocolError> {
    let name = |f: &str| format!("detections[{index}].{f}");
    let obj = value
        .as_object()
        .ok_or_else(|| ProtocolError::invalid(format!("detections[{index}]"), "expected an object"))?;

    let class_raw = uint(field(obj, "class_id", &name("class_id"))?, &name("class_id"))?;
    let class_id = ClassId::from_id(class_raw).ok_or_else(|| {
        ProtocolError::invalid(name("class_id"), format!("unknown class {class_raw}"))
    })?;
    let confidence = real(field(obj, "confidence", &name("confidence"))?, &name("confidence"))?;

    let corners = field(obj, "bbox", &name("bbox"))?
        .as_array()
        .filter(|a| a.len() == 4)
        .ok_or_else(|| ProtocolError::invalid(name("bbox"), "expected an array of 4 reals"))?;
    let mut c = [0.0; 4];
    for (slot, v) in c.iter_mut().zip(corners) {
        *slot = real(v, &name("bbox"))?;
    }

    let det = Detection { class_id, confidence, bbox: BBox::new(c[0], c[1], c[2], c[3]) }.quantized();
    det.check(index)?;
    Ok(det)
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, name: &str) -> Result<&'a Value, ProtocolError> {
    obj.get(key)
        .ok_or_else(|| ProtocolError::invalid(name, "missing"))
}

fn uint(v: &Value, name: &str) -> Result<u64, ProtocolError> {
    v.as_u64()
        .ok_or_else(|| ProtocolError::invalid(name, "expected a non-negative integer"))
}

fn real(v: &Value, name: &str) -> Result<f64, ProtocolError> {
    v.as_f64()
        .filter(|x| x.is_finite())
        .ok_or_else(|| ProtocolError::invalid(name, "expected a number"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// Frame index did not increase past the last accepted frame.
    FrameIndexNotIncreasing { previous: u64, found: u64 },
    /// Timestamp went backwards relative to the last accepted frame.
    TimestampDecreasing { previous: u64, found: u64 },
    CameraMismatch { expected: Camera, found: Camera },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamViolation {
    /// Zero-based position of the offending frame in the input.
    pub position: usize,
    pub kind: ViolationKind,
}

/// Tracks per-camera ordering. Shared by [`validate_stream`] and live ingestion.
#[derive(Debug, Clone, Default)]
pub struct MonotonicGuard {
    last: Option<(u64, u64)>,
}

impl MonotonicGuard {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the ordering violations `frame` would introduce, without accepting it.
    pub fn check(&self, frame_index: u64, timestamp_ms: u64) -> Vec<ViolationKind> {
        let mut found = Vec::new();
        if let Some((idx, ts)) = self.last {
            if frame_index <= idx {
                found.push(ViolationKind::FrameIndexNotIncreasing { previous: idx, found: frame_index });
            }
            if timestamp_ms < ts {
                found.push(ViolationKind::TimestampDecreasing { previous: ts, found: timestamp_ms });
            }
        }
        found
    }

    pub fn accept(&mut self, frame_index: u64, timestamp_ms: u64) {
        self.last = Some((frame_index, timestamp_ms));
    }

    /// Checks and, when clean, accepts the frame.
    pub fn admit(&mut self, frame_index: u64, timestamp_ms: u64) -> Result<(), Vec<ViolationKind>> {
        let found = self.check(frame_index, timestamp_ms);
        if found.is_empty() {
            self.accept(frame_index, timestamp_ms);
            Ok(())
        } else {
            Err(found)
        }
    }

    pub fn last(&self) -> Option<(u64, u64)> {
        self.last
    }
}

/// Lists every ordering and camera-id violation in a single camera's stream.
///
/// Offending frames are treated as dropped: later frames are compared with
/// the last frame that was clean.
pub fn validate_stream<'a, I>(frames: I, camera: Camera) -> Vec<StreamViolation>
where
    I: IntoIterator<Item = &'a FrameObservation>,
{
    let mut guard = MonotonicGuard::new();
    let mut report = Vec::new();
    for (position, frame) in frames.into_iter().enumerate() {
        if frame.camera != camera {
            report.push(StreamViolation {
                position,
                kind: ViolationKind::CameraMismatch { expected: camera, found: frame.camera },
            });
            continue;
        }
        if let Err(kinds) = guard.admit(frame.frame_index, frame.timestamp_ms) {
            report.extend(kinds.into_iter().map(|kind| StreamViolation { position, kind }));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauze(conf: f64) -> Detection {
        Detection::gauze(conf, BBox::new(0.1, 0.1, 0.2, 0.2))
    }

    #[test]
    fn empty_frame_renders_canonically() {
        let f = FrameObservation::empty(Camera::In, 0, 0);
        assert_eq!(
            serialize_frame(&f),
            r#"{"camera":"IN","frame_index":0,"timestamp_ms":0,"detections":[]}"#
        );
    }

    #[test]
    fn detection_renders_with_six_decimals() {
        let f = FrameObservation::new(Camera::Out, 3, 125, vec![gauze(0.95)]);
        let line = serialize_frame(&f);
        assert_eq!(
            line,
            r#"{"camera":"OUT","frame_index":3,"timestamp_ms":125,"detections":[{"class_id":0,"confidence":0.950000,"bbox":[0.100000,0.100000,0.200000,0.200000]}]}"#
        );
        assert!(!line.contains('\n'));
        assert_eq!(parse_frame(&line).unwrap(), f);
    }

    #[test]
    fn truncated_line_is_malformed() {
        let err = parse_frame(r#"{"camera":"IN""#).unwrap_err();
        assert!(matches!(err, ProtocolError::MalformedRecord(_)));
    }

    #[test]
    fn out_of_range_confidence_names_the_field() {
        let line = r#"{"camera":"IN","frame_index":0,"timestamp_ms":0,"detections":[{"class_id":0,"confidence":1.2,"bbox":[0.1,0.1,0.2,0.2]}]}"#;
        let err = parse_frame(line).unwrap_err();
        assert_eq!(err.field_name(), Some("confidence"));
    }

    #[test]
    fn inverted_bbox_and_unknown_class_are_rejected() {
        let inverted = r#"{"camera":"IN","frame_index":0,"timestamp_ms":0,"detections":[{"class_id":0,"confidence":0.5,"bbox":[0.3,0.1,0.2,0.2]}]}"#;
        assert_eq!(parse_frame(inverted).unwrap_err().field_name(), Some("bbox"));

        let unknown = r#"{"camera":"IN","frame_index":0,"timestamp_ms":0,"detections":[{"class_id":7,"confidence":0.5,"bbox":[0.1,0.1,0.2,0.2]}]}"#;
        assert_eq!(parse_frame(unknown).unwrap_err().field_name(), Some("class_id"));
    }

    #[test]
    fn bad_top_level_fields_are_named() {
        let cam = r#"{"camera":"SIDE","frame_index":0,"timestamp_ms":0,"detections":[]}"#;
        assert_eq!(parse_frame(cam).unwrap_err().field_name(), Some("camera"));
        let idx = r#"{"camera":"IN","frame_index":-1,"timestamp_ms":0,"detections":[]}"#;
        assert_eq!(parse_frame(idx).unwrap_err().field_name(), Some("frame_index"));
        let missing = r#"{"camera":"IN","frame_index":0,"detections":[]}"#;
        assert_eq!(parse_frame(missing).unwrap_err().field_name(), Some("timestamp_ms"));
        assert!(matches!(parse_frame("[1,2]"), Err(ProtocolError::MalformedRecord(_))));
    }

    #[test]
    fn unknown_fields_are_ignored() {
        let line = r#"{"camera":"OUT","frame_index":1,"timestamp_ms":5,"detections":[],"exposure":12,"gain":{"a":1}}"#;
        let f = parse_frame(line).unwrap();
        assert_eq!(f, FrameObservation::empty(Camera::Out, 1, 5));
    }

    #[test]
    fn parse_accepts_any_decimal_and_snaps_to_grid() {
        let line = r#"{"camera":"IN","frame_index":0,"timestamp_ms":0,"detections":[{"class_id":1,"confidence":0.9,"bbox":[0.1,0.25,0.5,0.7500000004]}]}"#;
        let f = parse_frame(line).unwrap();
        assert_eq!(f.detections[0].bbox.y_max, 0.75);
        assert_eq!(f.detections[0].class_id, ClassId::Hand);
    }

    #[test]
    fn valid_stream_has_empty_report() {
        let frames: Vec<_> = [(0, 0), (1, 66), (2, 133)]
            .iter()
            .map(|&(i, t)| FrameObservation::empty(Camera::In, i, t))
            .collect();
        assert!(validate_stream(&frames, Camera::In).is_empty());
    }

    #[test]
    fn out_of_order_index_is_reported_once() {
        let frames: Vec<_> = [(0, 0), (2, 66), (1, 133)]
            .iter()
            .map(|&(i, t)| FrameObservation::empty(Camera::In, i, t))
            .collect();
        let report = validate_stream(&frames, Camera::In);
        assert_eq!(report.len(), 1);
        assert_eq!(report[0].position, 2);
        assert_eq!(
            report[0].kind,
            ViolationKind::FrameIndexNotIncreasing { previous: 2, found: 1 }
        );
    }

    #[test]
    fn camera_mismatch_and_time_regression_are_reported() {
        let frames = vec![
            FrameObservation::empty(Camera::In, 0, 100),
            FrameObservation::empty(Camera::Out, 1, 110),
            FrameObservation::empty(Camera::In, 2, 90),
        ];
        let report = validate_stream(&frames, Camera::In);
        assert_eq!(report.len(), 2);
        assert_eq!(
            report[0],
            StreamViolation {
                position: 1,
                kind: ViolationKind::CameraMismatch { expected: Camera::In, found: Camera::Out }
            }
        );
        assert_eq!(report[1].kind, ViolationKind::TimestampDecreasing { previous: 100, found: 90 });
    }
}
