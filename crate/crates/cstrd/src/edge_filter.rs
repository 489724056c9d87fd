//! Keeps edge points whose gradient is nearly collinear with the ray from
//! the pith, and extracts the cross-section silhouette as one extra curve.
//!
//! Ring edges separate dark latewood (inside) from bright earlywood
//! (outside), so their gradient points away from the pith. Points whose
//! gradient deviates from the pith direction by `alpha` degrees or more are
//! discarded and the curve is split at every discard.

use image::GrayImage;

use crate::devernay::{CurveKind, EdgeCurve, GradientField};
use crate::geometry::Point;
use crate::preprocess::BACKGROUND;
use crate::{Error, Result};

/// Default collinearity threshold, in degrees.
pub const DEFAULT_ALPHA_DEG: f64 = 30.0;

/// Angle in degrees between the pith-to-point direction and the gradient at
/// the point; `None` when either vector vanishes.
pub fn radial_deviation_deg(point: Point, pith: Point, gradient: (f64, f64)) -> Option<f64> {
    let (vx, vy) = (point.x - pith.x, point.y - pith.y);
    let vn = vx.hypot(vy);
    let gn = gradient.0.hypot(gradient.1);
    if vn == 0.0 || gn == 0.0 {
        return None;
    }
    let cos = ((vx * gradient.0 + vy * gradient.1) / (vn * gn)).clamp(-1.0, 1.0);
    Some(cos.acos().to_degrees())
}

/// Drops points deviating by `alpha_deg` or more, splitting curves at the
/// gaps. Surviving pieces of at least two points are renumbered in order.
pub fn filter_edges(
    curves: &[EdgeCurve],
    gradient: &GradientField,
    pith: Point,
    alpha_deg: f64,
) -> Vec<EdgeCurve> {
    let mut kept = Vec::new();
    let mut piece: Vec<Point> = Vec::new();
    for curve in curves {
        for &p in &curve.points {
            let keep = radial_deviation_deg(p, pith, gradient.at_point(p))
                .is_some_and(|delta| delta < alpha_deg);
            if keep {
                piece.push(p);
            } else if !piece.is_empty() {
                flush_piece(&mut kept, &mut piece);
            }
        }
        flush_piece(&mut kept, &mut piece);
    }
    kept
}

fn flush_piece(kept: &mut Vec<EdgeCurve>, piece: &mut Vec<Point>) {
    if piece.len() >= 2 {
        kept.push(EdgeCurve {
            id: kept.len(),
            kind: CurveKind::Edge,
            points: std::mem::take(piece),
        });
    } else {
        piece.clear();
    }
}

/// Gaussian width used to clean the background mask before tracing.
const BORDER_BLUR_SIGMA: f64 = 11.0;
/// Background padding added around the mask so a slice touching the image
/// edge still produces a closed contour.
const BORDER_PAD: i64 = 3;

/// Traces the silhouette of the cross-section on the equalized image.
///
/// Background pixels (value 255) form a mask that is blurred and
/// re-thresholded at half amplitude: isolated bright foreground pixels
/// vanish while the true silhouette stays at the 50% crossing. Among all
/// outer contours of the remaining foreground, the one whose enclosed area
/// is closest to half the image area wins (ties prefer the larger one).
pub fn get_border_curve(gray: &GrayImage, id: usize) -> Result<EdgeCurve> {
    let (w, h) = (gray.width() as i64, gray.height() as i64);
    let mask: Vec<f64> = gray
        .pixels()
        .map(|p| if p.0[0] == BACKGROUND { 255.0 } else { 0.0 })
        .collect();
    if mask.iter().all(|&v| v > 0.0) {
        return Err(Error::InvalidInput(
            "image is entirely background, no cross-section to outline".into(),
        ));
    }
    let blurred = crate::devernay::gaussian_filter(&mask, w as usize, h as usize, BORDER_BLUR_SIGMA);
    // Padded foreground grid, true where wood remains after cleaning.
    let (pw, ph) = (w + 2 * BORDER_PAD, h + 2 * BORDER_PAD);
    let mut wood = vec![false; (pw * ph) as usize];
    for y in 0..h {
        for x in 0..w {
            if blurred[(y * w + x) as usize] <= 127.5 {
                wood[((y + BORDER_PAD) * pw + x + BORDER_PAD) as usize] = true;
            }
        }
    }
    let contours = trace_outer_contours(&wood, pw, ph);
    let target = (w * h) as f64 / 2.0;
    let best = contours
        .into_iter()
        .map(|c| {
            let area = shoelace_area(&c);
            (area, c)
        })
        .min_by(|(a1, _), (a2, _)| {
            (a1 - target)
                .abs()
                .total_cmp(&(a2 - target).abs())
                .then(a2.total_cmp(a1))
        })
        .map(|(_, c)| c)
        .ok_or_else(|| Error::InvalidInput("no silhouette contour found".into()))?;
    let mut points: Vec<Point> = best
        .into_iter()
        .map(|(x, y)| Point::new((x - BORDER_PAD) as f64, (y - BORDER_PAD) as f64))
        .collect();
    if points.first() != points.last() {
        points.push(points[0]);
    }
    Ok(EdgeCurve {
        id,
        kind: CurveKind::Border,
        points,
    })
}

/// Moore-neighbour tracing of the outer boundary of every 8-connected
/// foreground component, in pixel coordinates.
fn trace_outer_contours(grid: &[bool], w: i64, h: i64) -> Vec<Vec<(i64, i64)>> {
    let at = |x: i64, y: i64| -> bool {
        x >= 0 && x < w && y >= 0 && y < h && grid[(y * w + x) as usize]
    };
    // Clockwise Moore neighbourhood starting east.
    const DIRS: [(i64, i64); 8] = [
        (1, 0),
        (1, 1),
        (0, 1),
        (-1, 1),
        (-1, 0),
        (-1, -1),
        (0, -1),
        (1, -1),
    ];
    let mut on_contour = vec![false; (w * h) as usize];
    let mut contours = Vec::new();
    for y in 0..h {
        for x in 0..w {
            // Component start: first foreground pixel in scan order whose
            // left neighbour is background.
            if !at(x, y) || at(x - 1, y) || on_contour[(y * w + x) as usize] {
                continue;
            }
            let start = (x, y);
            let mut contour = vec![start];
            on_contour[(y * w + x) as usize] = true;
            // Backtrack points west of the start.
            let mut current = start;
            let mut backtrack_dir = 4usize;
            loop {
                // Search clockwise from the direction after the backtrack.
                let mut found = None;
                for step in 1..=8 {
                    let dir = (backtrack_dir + step) % 8;
                    let nx = current.0 + DIRS[dir].0;
                    let ny = current.1 + DIRS[dir].1;
                    if at(nx, ny) {
                        found = Some((dir, (nx, ny)));
                        break;
                    }
                }
                let Some((dir, next)) = found else {
                    break; // isolated pixel
                };
                if next == start && contour.len() > 1 {
                    break;
                }
                on_contour[(next.1 * w + next.0) as usize] = true;
                contour.push(next);
                backtrack_dir = (dir + 4) % 8;
                current = next;
            }
            if contour.len() >= 3 {
                contours.push(contour);
            }
        }
    }
    contours
}

fn shoelace_area(polygon: &[(i64, i64)]) -> f64 {
    let mut acc = 0i64;
    for i in 0..polygon.len() {
        let (x1, y1) = polygon[i];
        let (x2, y2) = polygon[(i + 1) % polygon.len()];
        acc += x1 * y2 - x2 * y1;
    }
    (acc as f64 / 2.0).abs()
}
