use thiserror::Error;

use super::rng::SimRng;
use crate::geometry::{iou, BBox};
use crate::protocol::quantize;

/// Random placements tried per gauze before giving up.
pub const PLACEMENT_ATTEMPTS: usize = 2000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("could not place gauze {placed_so_far} of {requested} after {attempts} attempts")]
pub struct PackingInfeasible {
    pub requested: usize,
    pub placed_so_far: usize,
    pub attempts: usize,
}

/// Lays out `n` gauze boxes of `size` inside `region` with pairwise IoU at
/// most `max_pairwise_iou`. Corners are snapped to the wire grid.
pub fn layout_gauzes(
    n: usize,
    region: BBox,
    size: (f64, f64),
    max_pairwise_iou: f64,
    rng: &mut SimRng,
) -> Result<Vec<BBox>, PackingInfeasible> {
    let mut boxes = Vec::with_capacity(n);
    place_more(&mut boxes, n, region, size, max_pairwise_iou, rng)?;
    Ok(boxes)
}

/// Adds `n` boxes to an existing layout under the same overlap bound.
///
/// On failure `boxes` keeps whatever was placed before the failing gauze.
pub fn place_more(
    boxes: &mut Vec<BBox>,
    n: usize,
    region: BBox,
    size: (f64, f64),
    max_pairwise_iou: f64,
    rng: &mut SimRng,
) -> Result<(), PackingInfeasible> {
    let (w, h) = size;
    for k in 0..n {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let x = rng.range(region.x_min, region.x_max - w);
            let y = rng.range(region.y_min, region.y_max - h);
            let candidate = snap(BBox::from_origin_size(x, y, w, h));
            if !region.contains(&candidate) {
                continue;
            }
            if boxes.iter().all(|b| iou(b, &candidate) <= max_pairwise_iou) {
                boxes.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(PackingInfeasible { requested: n, placed_so_far: k, attempts: PLACEMENT_ATTEMPTS });
        }
    }
    Ok(())
}

pub(crate) fn snap(b: BBox) -> BBox {
    BBox::new(quantize(b.x_min), quantize(b.y_min), quantize(b.x_max), quantize(b.y_max))
}
