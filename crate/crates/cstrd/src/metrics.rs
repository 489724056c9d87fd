//! Detection scoring.
//!
//! Ground-truth and detected rings are resampled along the same rays used
//! by the pipeline. Each ground-truth ring owns an influence area bounded
//! by the per-ray midpoints to its neighbours (the pith below the first
//! ring, the image border above the last). A detection can match a ring
//! only if enough of its nodes fall inside that area; among gated pairs
//! the assignment greedily takes the smallest radial distance. Matches
//! count as true positives, leftover detections as false positives and
//! leftover rings as false negatives.

use crate::error::Error;
use crate::geometry::{
    build_rays, euclidean_distance, ray_angle_deg, segment_intersection, Chain, Point,
};
use crate::Result;

/// Minimum percentage of detection nodes inside the assigned ring's
/// influence area.
pub const DEFAULT_TH_PRE: f64 = 60.0;

/// A ring resampled along the rays: one radial distance per ray, `None`
/// where the ring has no node.
#[derive(Debug, Clone, PartialEq)]
pub struct RingPolyline {
    radii: Vec<Option<f64>>,
}

impl RingPolyline {
    /// Radii must be positive where present and non-empty.
    pub fn new(radii: Vec<Option<f64>>) -> Result<RingPolyline> {
        if radii.is_empty() {
            return Err(Error::InvalidInput("ring polyline needs at least one ray".into()));
        }
        if radii.iter().flatten().any(|&r| r <= 0.0 || r.is_nan()) {
            return Err(Error::InvalidInput("ring radii must be positive".into()));
        }
        Ok(RingPolyline { radii })
    }

    /// Per-ray radii of a chain, present where the chain has nodes.
    pub fn from_chain(chain: &Chain) -> RingPolyline {
        let radii = (0..chain.nr())
            .map(|ray| chain.node_at_ray(ray).map(|n| n.radial_distance))
            .collect();
        RingPolyline { radii }
    }

    pub fn nr(&self) -> usize {
        self.radii.len()
    }

    pub fn radius_at(&self, ray: usize) -> Option<f64> {
        self.radii[ray]
    }

    pub fn mean_radius(&self) -> f64 {
        let present: Vec<f64> = self.radii.iter().flatten().copied().collect();
        present.iter().sum::<f64>() / present.len().max(1) as f64
    }

    fn is_complete(&self) -> bool {
        self.radii.iter().all(|r| r.is_some())
    }
}

/// Per-ray influence boundaries: ring `i` owns `[bounds[ray][i],
/// bounds[ray][i + 1])`, from the pith up to the image border.
#[derive(Debug, Clone)]
pub struct InfluencePartition {
    nr: usize,
    bounds: Vec<Vec<f64>>,
}

impl InfluencePartition {
    pub fn nr(&self) -> usize {
        self.nr
    }

    pub fn ring_count(&self) -> usize {
        self.bounds[0].len() - 1
    }

    /// Boundaries for one ray, innermost first.
    pub fn bounds_at(&self, ray: usize) -> &[f64] {
        &self.bounds[ray]
    }

    pub fn contains(&self, ring: usize, ray: usize, radius: f64) -> bool {
        self.bounds[ray][ring] <= radius && radius < self.bounds[ray][ring + 1]
    }
}

/// Builds the influence partition. Rings must be ordered from the pith
/// outwards on every ray; inconsistent ordering is an input error.
pub fn build_influence_partition(
    gt: &[RingPolyline],
    pith: Point,
    height: u32,
    width: u32,
) -> Result<InfluencePartition> {
    if gt.is_empty() {
        return Err(Error::InvalidInput("no ground-truth rings".into()));
    }
    let nr = gt[0].nr();
    if gt.iter().any(|r| r.nr() != nr || !r.is_complete()) {
        return Err(Error::InvalidInput("ground-truth rings must cover all rays".into()));
    }
    for pair in gt.windows(2) {
        if (0..nr).any(|ray| pair[0].radius_at(ray) > pair[1].radius_at(ray)) {
            return Err(Error::GtRingsCross);
        }
    }
    let rays = build_rays(nr, height, width, pith)?;
    let bounds = (0..nr)
        .map(|ray| {
            let border = euclidean_distance(rays[ray].origin, rays[ray].tip);
            let mut b = Vec::with_capacity(gt.len() + 1);
            b.push(0.0);
            for pair in gt.windows(2) {
                b.push((pair[0].radius_at(ray).unwrap() + pair[1].radius_at(ray).unwrap()) / 2.0);
            }
            b.push(border.max(gt.last().unwrap().radius_at(ray).unwrap()) + 1.0);
            b
        })
        .collect();
    Ok(InfluencePartition { nr, bounds })
}

/// Root mean square radial difference over the rays where the detection
/// has nodes; `None` when it has none.
pub fn ring_distance(dt: &RingPolyline, gt: &RingPolyline) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for ray in 0..dt.nr() {
        if let (Some(d), Some(g)) = (dt.radius_at(ray), gt.radius_at(ray)) {
            sum += (d - g) * (d - g);
            count += 1;
        }
    }
    (count > 0).then(|| (sum / count as f64).sqrt())
}

/// Percentage of the detection's nodes inside ring `ring`'s influence area.
fn fraction_inside(dt: &RingPolyline, partition: &InfluencePartition, ring: usize) -> f64 {
    let mut inside = 0usize;
    let mut total = 0usize;
    for ray in 0..dt.nr() {
        if let Some(r) = dt.radius_at(ray) {
            total += 1;
            if partition.contains(ring, ray, r) {
                inside += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        100.0 * inside as f64 / total as f64
    }
}

/// Pairs ground-truth rings with detections: only pairs where at least
/// `th_pre` percent of the detection's nodes lie in the ring's influence
/// area are considered, and pairs win greedily by smallest distance, so a
/// ring losing its nearest detection falls back to its next nearest.
/// Returns, per ground-truth ring, the index of the matched detection.
pub fn assign_detections(
    dt: &[RingPolyline],
    gt: &[RingPolyline],
    partition: &InfluencePartition,
    th_pre: f64,
) -> Vec<Option<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (gi, g) in gt.iter().enumerate() {
        for (di, d) in dt.iter().enumerate() {
            if fraction_inside(d, partition, gi) >= th_pre {
                if let Some(dist) = ring_distance(d, g) {
                    pairs.push((dist, gi, di));
                }
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut gt_match = vec![None; gt.len()];
    let mut dt_taken = vec![false; dt.len()];
    for (_, gi, di) in pairs {
        if gt_match[gi].is_none() && !dt_taken[di] {
            gt_match[gi] = Some(di);
            dt_taken[di] = true;
        }
    }
    gt_match
}

/// One matched ring pair with its per-ray absolute errors.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MatchedRing {
    pub gt_index: usize,
    pub det_index: usize,
    pub dist: f64,
    /// `|detected - truth|` per ray, `None` where the detection has no node.
    pub abs_error: Vec<Option<f64>>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct MetricsReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    /// Mean ring distance over matched pairs, 0 without matches.
    pub rmse: f64,
    pub matches: Vec<MatchedRing>,
}

/// Precision, recall and F-score from raw counts; degenerate ratios are 0.
pub fn compute_scores(tp: usize, fp: usize, fn_count: usize) -> (f64, f64, f64) {
    let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fn_count == 0 { 0.0 } else { tp as f64 / (tp + fn_count) as f64 };
    let fscore = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, fscore)
}

/// Scores detections against ground truth. Ground-truth rings are sorted
/// from the pith outwards first; reported indices follow that order.
pub fn evaluate(
    detections: &[RingPolyline],
    ground_truth: &[RingPolyline],
    pith: Point,
    height: u32,
    width: u32,
    th_pre: f64,
) -> Result<MetricsReport> {
    let mut gt: Vec<RingPolyline> = ground_truth.to_vec();
    gt.sort_by(|a, b| a.mean_radius().total_cmp(&b.mean_radius()));
    let partition = build_influence_partition(&gt, pith, height, width)?;
    let assignment = assign_detections(detections, &gt, &partition, th_pre);

    let mut matches = Vec::new();
    for (gi, det) in assignment.iter().enumerate() {
        let Some(di) = det else { continue };
        let d = &detections[*di];
        let g = &gt[gi];
        let abs_error = (0..g.nr())
            .map(|ray| Some((d.radius_at(ray)? - g.radius_at(ray).unwrap()).abs()))
            .collect();
        matches.push(MatchedRing {
            gt_index: gi,
            det_index: *di,
            dist: ring_distance(d, g).unwrap(),
            abs_error,
        });
    }
    let tp = matches.len();
    let fp = detections.len() - tp;
    let fn_count = gt.len() - tp;
    let (precision, recall, fscore) = compute_scores(tp, fp, fn_count);
    let rmse = if tp == 0 {
        0.0
    } else {
        matches.iter().map(|m| m.dist).sum::<f64>() / tp as f64
    };
    Ok(MetricsReport {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_count,
        precision,
        recall,
        fscore,
        rmse,
        matches,
    })
}

/// Resamples a closed ground-truth polygon along the rays: the radius at
/// each ray is the nearest intersection of the ray with the polygon. A ray
/// without intersection means the polygon does not enclose the pith.
///
/// A vertex lying exactly on a ray can make both adjacent segments miss
/// under floating-point rounding, so empty rays retry with a minutely
/// rotated ray before reporting failure.
pub fn rasterize_gt_polygon(
    polygon: &[Point],
    pith: Point,
    nr: usize,
    height: u32,
    width: u32,
) -> Result<RingPolyline> {
    if polygon.len() < 3 {
        return Err(Error::InvalidInput("polygon needs at least three vertices".into()));
    }
    let _ = build_rays(nr, height, width, pith)?; // validates the pith placement
    let mut poly = polygon.to_vec();
    if poly.first() != poly.last() {
        poly.push(poly[0]);
    }
    let reach = 2.0 * (height.max(width) as f64);
    let nearest_hit = |angle_rad: f64| -> Option<f64> {
        let tip = Point::new(pith.x + reach * angle_rad.cos(), pith.y + reach * angle_rad.sin());
        poly.windows(2)
            .filter_map(|seg| segment_intersection(pith, tip, seg[0], seg[1]))
            .map(|p| euclidean_distance(pith, p))
            .filter(|&r| r > 0.0)
            .min_by(f64::total_cmp)
    };
    let mut radii = Vec::with_capacity(nr);
    for i in 0..nr {
        let angle = ray_angle_deg(i, nr).to_radians();
        let hit = [0.0, 1e-9, -1e-9, 1e-7, -1e-7]
            .iter()
            .find_map(|nudge| nearest_hit(angle + nudge));
        match hit {
            Some(r) => radii.push(Some(r)),
            None => return Err(Error::PolygonMissesPith { ray: i }),
        }
    }
    RingPolyline::new(radii)
}
