//! Detector imperfections applied to ideal per-frame detections.

use serde::{Deserialize, Serialize};

use super::layout::snap;
use super::rng::SimRng;
use crate::geometry::{iou, BBox};
use crate::protocol::{quantize, ClassId, Detection};

/// Confidence drawn uniformly from `[mean - spread, mean + spread]`, clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceDist {
    pub mean: f64,
    pub spread: f64,
}

impl ConfidenceDist {
    fn draw(&self, rng: &mut SimRng) -> f64 {
        if self.spread <= 0.0 {
            return self.mean.clamp(0.0, 1.0);
        }
        rng.range(self.mean - self.spread, self.mean + self.spread).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Per detection, per frame.
    pub p_false_negative: f64,
    /// Per frame: chance of one spurious gauze detection.
    pub p_false_positive: f64,
    /// Std-dev of the zero-mean perturbation added to each box corner.
    pub bbox_jitter_sigma: f64,
    /// Gauze boxes overlapping at least this much are seen as one.
    pub merge_iou_threshold: f64,
    /// Confidence of real detections; its mean is also the ideal confidence.
    pub true_confidence: ConfidenceDist,
    pub spurious_confidence: ConfidenceDist,
    /// Size of spurious gauze boxes.
    pub spurious_size: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            p_false_negative: 0.05,
            p_false_positive: 0.01,
            bbox_jitter_sigma: 0.01,
            merge_iou_threshold: 0.5,
            true_confidence: ConfidenceDist { mean: 0.85, spread: 0.10 },
            spurious_confidence: ConfidenceDist { mean: 0.30, spread: 0.15 },
            spurious_size: 0.10,
        }
    }
}

impl NoiseModel {
    /// A perfect detector except for the overlap limit, which is physical.
    pub fn zero() -> Self {
        Self {
            p_false_negative: 0.0,
            p_false_positive: 0.0,
            bbox_jitter_sigma: 0.0,
            true_confidence: ConfidenceDist { mean: 0.85, spread: 0.0 },
            ..Self::default()
        }
    }

    /// Missed detections and box jitter only.
    pub fn dropout(p_false_negative: f64, bbox_jitter_sigma: f64) -> Self {
        Self { p_false_negative, bbox_jitter_sigma, ..Self::zero() }
    }

    pub fn validate(&self) -> Result<(), String> {
        let probs = [
            ("p_false_negative", self.p_false_negative),
            ("p_false_positive", self.p_false_positive),
            ("merge_iou_threshold", self.merge_iou_threshold),
            ("true_confidence.mean", self.true_confidence.mean),
            ("spurious_confidence.mean", self.spurious_confidence.mean),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} = {p} is outside [0, 1]"));
            }
        }
        if !(self.bbox_jitter_sigma >= 0.0 && self.bbox_jitter_sigma.is_finite()) {
            return Err("bbox_jitter_sigma must be a non-negative number".into());
        }
        if self.true_confidence.spread < 0.0 || self.spurious_confidence.spread < 0.0 {
            return Err("confidence spreads must be non-negative".into());
        }
        if !(self.spurious_size > 0.0 && self.spurious_size <= 1.0) {
            return Err("spurious_size must be in (0, 1]".into());
        }
        Ok(())
    }

    /// Loads a `key = value` noise description; unspecified keys take [`NoiseModel::zero`] values.
    pub fn from_toml(text: &str) -> Result<Self, String> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            p_false_negative: Option<f64>,
            p_false_positive: Option<f64>,
            bbox_jitter_sigma: Option<f64>,
            merge_iou_threshold: Option<f64>,
            true_confidence_mean: Option<f64>,
            true_confidence_spread: Option<f64>,
            spurious_confidence_mean: Option<f64>,
            spurious_confidence_spread: Option<f64>,
            spurious_size: Option<f64>,
        }
        let raw: Raw = toml::from_str(text).map_err(|e| e.to_string())?;
        let base = Self::zero();
        let model = Self {
            p_false_negative: raw.p_false_negative.unwrap_or(base.p_false_negative),
            p_false_positive: raw.p_false_positive.unwrap_or(base.p_false_positive),
            bbox_jitter_sigma: raw.bbox_jitter_sigma.unwrap_or(base.bbox_jitter_sigma),
            merge_iou_threshold: raw.merge_iou_threshold.unwrap_or(base.merge_iou_threshold),
            true_confidence: ConfidenceDist {
                mean: raw.true_confidence_mean.unwrap_or(base.true_confidence.mean),
                spread: raw.true_confidence_spread.unwrap_or(base.true_confidence.spread),
            },
            spurious_confidence: ConfidenceDist {
                mean: raw.spurious_confidence_mean.unwrap_or(base.spurious_confidence.mean),
                spread: raw.spurious_confidence_spread.unwrap_or(base.spurious_confidence.spread),
            },
            spurious_size: raw.spurious_size.unwrap_or(base.spurious_size),
        };
        model.validate()?;
        Ok(model)
    }
}

/// Degrades one frame's ideal detections.
///
/// Order: independent drop-outs, corner jitter (clamped to the unit
/// square), merging of overlapping gauze boxes into their enclosing box,
/// then at most one spurious gauze. Output reals are on the wire grid.
pub fn apply_noise(ideal: &[Detection], noise: &NoiseModel, rng: &mut SimRng) -> Vec<Detection> {
    let mut kept = Vec::with_capacity(ideal.len() + 1);
    for det in ideal {
        if noise.p_false_negative > 0.0 && rng.chance(noise.p_false_negative) {
            continue;
        }
        let mut d = *det;
        if noise.bbox_jitter_sigma > 0.0 {
            d.bbox = jitter(&d.bbox, noise.bbox_jitter_sigma, rng);
        }
        if noise.true_confidence.spread > 0.0 {
            d.confidence = noise.true_confidence.draw(rng);
        }
        kept.push(d.quantized());
    }

    let mut out = merge_overlapping(&kept, noise.merge_iou_threshold);

    if noise.p_false_positive > 0.0 && rng.chance(noise.p_false_positive) {
        let s = noise.spurious_size;
        let x = rng.range(0.0, 1.0 - s);
        let y = rng.range(0.0, 1.0 - s);
        let confidence = quantize(noise.spurious_confidence.draw(rng));
        out.push(Detection::gauze(confidence, snap(BBox::from_origin_size(x, y, s, s))));
    }
    out
}

fn jitter(b: &BBox, sigma: f64, rng: &mut SimRng) -> BBox {
    let moved = BBox::new(
        b.x_min + sigma * rng.normal(),
        b.y_min + sigma * rng.normal(),
        b.x_max + sigma * rng.normal(),
        b.y_max + sigma * rng.normal(),
    )
    .clamped();
    let moved = snap(moved);
    // a collapsed box is not something a detector reports
    if moved.is_valid() {
        moved
    } else {
        *b
    }
}

/// Replaces every group of gauze boxes connected by IoU >= `threshold`
/// (and a nonzero overlap) with one detection covering the group.
///
/// Grouping is decided on the input boxes, so a higher threshold can only
/// split groups, never join them.
pub fn merge_overlapping(dets: &[Detection], threshold: f64) -> Vec<Detection> {
    let gauze: Vec<usize> = (0..dets.len()).filter(|&i| dets[i].class_id == ClassId::Gauze).collect();
    let mut parent: Vec<usize> = (0..dets.len()).collect();

    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }

    for (a_pos, &a) in gauze.iter().enumerate() {
        for &b in &gauze[a_pos + 1..] {
            let overlap = iou(&dets[a].bbox, &dets[b].bbox);
            if overlap > 0.0 && overlap >= threshold {
                let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }

    let mut out: Vec<Detection> = Vec::with_capacity(dets.len());
    let mut slot_of_root = vec![usize::MAX; dets.len()];
    for (i, det) in dets.iter().enumerate() {
        if det.class_id != ClassId::Gauze {
            out.push(*det);
            continue;
        }
        let r = root(&mut parent, i);
        if slot_of_root[r] == usize::MAX {
            slot_of_root[r] = out.len();
            out.push(*det);
        } else {
            let merged = &mut out[slot_of_root[r]];
            merged.bbox = merged.bbox.enclosing(&det.bbox);
            merged.confidence = merged.confidence.max(det.confidence);
        }
    }
    out
}
