//! Chained subpixel edge detection: Gaussian smoothing, centred-difference
//! gradient, direction-selective non-maximum suppression with parabolic
//! correction, mutual-best chaining and hysteresis thresholding.
//!
//! Edge positions are corrected along one axis only (the one the gradient
//! leans towards), so every point sits within half a pixel of its detection
//! pixel. Curves come out ordered so the gradient points to the left of the
//! traversal direction; a closed curve repeats its first point at the end.

use image::GrayImage;

use crate::geometry::Point;
use crate::{Error, Result};

/// Comparisons of gradient moduli treat nearly equal values as equal so a
/// plateau maximum is claimed by exactly one pixel.
const EPSILON: f64 = 1e-6;

fn greater_round(a: f64, b: f64) -> bool {
    a > b && (a - b) >= EPSILON
}

/// Smoothing and hysteresis settings.
#[derive(Debug, Clone)]
pub struct DevernayParams {
    pub sigma: f64,
    pub th_low: f64,
    pub th_high: f64,
}

impl Default for DevernayParams {
    fn default() -> Self {
        Self {
            sigma: 3.0,
            th_low: 5.0,
            th_high: 15.0,
        }
    }
}

/// Distinguishes image edges from the cross-section silhouette curve that
/// the edge filter appends later.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveKind {
    Edge,
    Border,
}

/// Polyline of subpixel edge points; closed when the first point repeats at
/// the end.
#[derive(Debug, Clone)]
pub struct EdgeCurve {
    pub id: usize,
    pub kind: CurveKind,
    pub points: Vec<Point>,
}

impl EdgeCurve {
    pub fn is_closed(&self) -> bool {
        self.points.len() > 2 && self.points.first() == self.points.last()
    }
}

/// Gradient of the smoothed image, sampled per pixel.
#[derive(Debug, Clone)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    gx: Vec<f64>,
    gy: Vec<f64>,
    modulus: Vec<f64>,
}

impl GradientField {
    /// Builds a field from raw components; modulus is derived. Meant for
    /// tests and experiments, the detector fills the field itself.
    pub fn from_components(width: usize, height: usize, gx: Vec<f64>, gy: Vec<f64>) -> Self {
        assert_eq!(gx.len(), width * height);
        assert_eq!(gy.len(), width * height);
        let modulus = gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect();
        Self {
            width,
            height,
            gx,
            gy,
            modulus,
        }
    }

    pub fn at_pixel(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.gx[i], self.gy[i])
    }

    /// Gradient at the pixel nearest to a subpixel point; points off the
    /// grid clamp to the border.
    pub fn at_point(&self, p: Point) -> (f64, f64) {
        let x = p.x.round().clamp(0.0, self.width as f64 - 1.0) as usize;
        let y = p.y.round().clamp(0.0, self.height as f64 - 1.0) as usize;
        self.at_pixel(x, y)
    }

    pub fn modulus_at(&self, x: usize, y: usize) -> f64 {
        self.modulus[y * self.width + x]
    }
}

/// Normalized Gaussian kernel truncated at four standard deviations.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as usize;
    let mut kernel = Vec::with_capacity(2 * radius + 1);
    let mut sum = 0.0;
    for i in 0..=2 * radius {
        let d = i as f64 - radius as f64;
        let v = (-0.5 * (d / sigma).powi(2)).exp();
        kernel.push(v);
        sum += v;
    }
    for v in &mut kernel {
        *v /= sum;
    }
    kernel
}

/// Folds an index into `[0, n)` by symmetric reflection with border repeat.
fn reflect(i: i64, n: i64) -> usize {
    let period = 2 * n;
    let mut i = i.rem_euclid(period);
    if i >= n {
        i = period - 1 - i;
    }
    i as usize
}

/// Separable Gaussian smoothing in double precision.
pub(crate) fn gaussian_filter(image: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let kernel = gaussian_kernel(sigma);
    let radius = kernel.len() as i64 / 2;
    let (w, h) = (width as i64, height as i64);
    let mut tmp = vec![0.0; width * height];
    for y in 0..height {
        let row = &image[y * width..(y + 1) * width];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                acc += kv * row[reflect(x - radius + k as i64, w)];
            }
            tmp[y * width + x as usize] = acc;
        }
    }
    let mut out = vec![0.0; width * height];
    for x in 0..width {
        for y in 0..h {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                acc += kv * tmp[reflect(y - radius + k as i64, h) * width + x];
            }
            out[y as usize * width + x] = acc;
        }
    }
    out
}

fn compute_gradient(image: &[f64], width: usize, height: usize) -> GradientField {
    let len = width * height;
    let mut gx = vec![0.0; len];
    let mut gy = vec![0.0; len];
    let mut modulus = vec![0.0; len];
    for y in 1..height - 1 {
        for x in 1..width - 1 {
            let i = y * width + x;
            gx[i] = image[i + 1] - image[i - 1];
            gy[i] = image[i + width] - image[i - width];
            modulus[i] = gx[i].hypot(gy[i]);
        }
    }
    GradientField {
        width,
        height,
        gx,
        gy,
        modulus,
    }
}

/// Non-maximum suppression with the Devernay parabolic correction.
///
/// A pixel is an edge point when its gradient modulus is a strict local
/// maximum along the axis the gradient leans towards; ties go to the
/// left/lower neighbour. Returns per-pixel subpixel coordinates, `-1` where
/// no edge point exists.
fn compute_edge_points(g: &GradientField) -> (Vec<f64>, Vec<f64>) {
    let (width, height) = (g.width, g.height);
    let mut ex = vec![-1.0; width * height];
    let mut ey = vec![-1.0; width * height];
    for x in 2..width - 2 {
        for y in 2..height - 2 {
            let i = y * width + x;
            let m = g.modulus[i];
            let left = g.modulus[i - 1];
            let right = g.modulus[i + 1];
            let down = g.modulus[i - width];
            let up = g.modulus[i + width];
            let ax = g.gx[i].abs();
            let ay = g.gy[i].abs();
            let (dx, dy) = if greater_round(m, left) && !greater_round(right, m) && ax >= ay {
                (1i64, 0i64)
            } else if greater_round(m, down) && !greater_round(up, m) && ax <= ay {
                (0, 1)
            } else {
                continue;
            };
            let ia = (y as i64 - dy) as usize * width + (x as i64 - dx) as usize;
            let ic = (y as i64 + dy) as usize * width + (x as i64 + dx) as usize;
            let (a, b, c) = (g.modulus[ia], m, g.modulus[ic]);
            let offset = 0.5 * (a - c) / (a - b - b + c);
            ex[i] = x as f64 + offset * dx as f64;
            ey[i] = y as f64 + offset * dy as f64;
        }
    }
    (ex, ey)
}

/// Chaining score between two edge points: `±1/dist`, positive when `to`
/// lies forward of `from` (gradient 90 degrees clockwise of the walk), zero
/// when the pairing is invalid.
#[allow(clippy::too_many_arguments)]
fn chain_score(from: usize, to: usize, ex: &[f64], ey: &[f64], g: &GradientField) -> f64 {
    if from == to || ex[from] < 0.0 || ex[to] < 0.0 {
        return 0.0;
    }
    let dx = ex[to] - ex[from];
    let dy = ey[to] - ey[from];
    let side_from = g.gy[from] * dx - g.gx[from] * dy;
    let side_to = g.gy[to] * dx - g.gx[to] * dy;
    if side_from * side_to <= 0.0 {
        return 0.0;
    }
    let dist = (dx * dx + dy * dy).sqrt();
    if side_from >= 0.0 {
        1.0 / dist
    } else {
        -1.0 / dist
    }
}

/// Links each edge point to its best forward and backward neighbours within
/// a 5x5 window, replacing existing links only when the new score is better.
fn chain_edge_points(ex: &[f64], ey: &[f64], g: &GradientField) -> (Vec<i64>, Vec<i64>) {
    let (width, height) = (g.width, g.height);
    let mut next = vec![-1i64; width * height];
    let mut prev = vec![-1i64; width * height];
    for x in 2..width - 2 {
        for y in 2..height - 2 {
            let from = y * width + x;
            if ex[from] < 0.0 {
                continue;
            }
            let mut fwd_score = 0.0;
            let mut bck_score = 0.0;
            let mut fwd = -1i64;
            let mut bck = -1i64;
            for j in 0..5 {
                for i in 0..5 {
                    let to = (y + j - 2) * width + (x + i - 2);
                    let s = chain_score(from, to, ex, ey, g);
                    if s > fwd_score {
                        fwd_score = s;
                        fwd = to as i64;
                    }
                    if s < bck_score {
                        bck_score = s;
                        bck = to as i64;
                    }
                }
            }
            if fwd >= 0 && next[from] != fwd {
                let alt = prev[fwd as usize];
                if alt < 0 || chain_score(alt as usize, fwd as usize, ex, ey, g) < fwd_score {
                    if next[from] >= 0 {
                        prev[next[from] as usize] = -1;
                    }
                    next[from] = fwd;
                    if alt >= 0 {
                        next[alt as usize] = -1;
                    }
                    prev[fwd as usize] = from as i64;
                }
            }
            if bck >= 0 && prev[from] != bck {
                let alt = next[bck as usize];
                if alt < 0 || chain_score(alt as usize, bck as usize, ex, ey, g) > bck_score {
                    if alt >= 0 {
                        prev[alt as usize] = -1;
                    }
                    next[bck as usize] = from as i64;
                    if prev[from] >= 0 {
                        next[prev[from] as usize] = -1;
                    }
                    prev[from] = bck;
                }
            }
        }
    }
    (prev, next)
}

/// Keeps chains containing a point at or above `th_high`, growing them while
/// the modulus stays at or above `th_low`; everything else is unlinked.
fn hysteresis(next: &mut [i64], prev: &mut [i64], g: &GradientField, th_low: f64, th_high: f64) {
    let len = next.len();
    let mut valid = vec![false; len];
    for i in 0..len {
        if (prev[i] >= 0 || next[i] >= 0) && !valid[i] && g.modulus[i] >= th_high {
            valid[i] = true;
            let mut j = i;
            while next[j] >= 0 && !valid[next[j] as usize] {
                let k = next[j] as usize;
                if g.modulus[k] < th_low {
                    next[j] = -1;
                    prev[k] = -1;
                } else {
                    valid[k] = true;
                }
                j = k;
            }
            j = i;
            while prev[j] >= 0 && !valid[prev[j] as usize] {
                let k = prev[j] as usize;
                if g.modulus[k] < th_low {
                    prev[j] = -1;
                    next[k] = -1;
                } else {
                    valid[k] = true;
                }
                j = k;
            }
        }
    }
    for i in 0..len {
        if (prev[i] >= 0 || next[i] >= 0) && !valid[i] {
            prev[i] = -1;
            next[i] = -1;
        }
    }
}

/// Walks the link arrays into point lists, consuming links as it goes. A
/// closed chain emits its starting point twice.
fn list_curves(next: &mut [i64], prev: &mut [i64], ex: &[f64], ey: &[f64]) -> Vec<Vec<Point>> {
    let mut curves = Vec::new();
    for i in 0..next.len() {
        if prev[i] < 0 && next[i] < 0 {
            continue;
        }
        // Rewind to the chain start, guarding against closed loops.
        let mut k = i;
        loop {
            let t = prev[k];
            if t < 0 || t == i as i64 {
                break;
            }
            k = t as usize;
        }
        let mut points = Vec::new();
        let mut k = k as i64;
        while k >= 0 {
            let ku = k as usize;
            points.push(Point::new(ex[ku], ey[ku]));
            let t = next[ku];
            next[ku] = -1;
            prev[ku] = -1;
            k = t;
        }
        curves.push(points);
    }
    curves
}

/// Runs the full detector on a grayscale image.
///
/// Returns the chained subpixel curves (each at least two points) and the
/// gradient field of the smoothed image for downstream direction tests.
pub fn detect_edges(
    gray: &GrayImage,
    params: &DevernayParams,
) -> Result<(Vec<EdgeCurve>, GradientField)> {
    if params.sigma < 0.0 {
        return Err(Error::InvalidParam("sigma must be non-negative".into()));
    }
    if params.th_low < 0.0 || params.th_high < params.th_low {
        return Err(Error::InvalidParam(
            "thresholds need 0 <= th_low <= th_high".into(),
        ));
    }
    let (width, height) = (gray.width() as usize, gray.height() as usize);
    let kernel_diameter = if params.sigma > 0.0 {
        2 * (4.0 * params.sigma).ceil() as usize + 1
    } else {
        1
    };
    if width < kernel_diameter.max(5) || height < kernel_diameter.max(5) {
        return Err(Error::InvalidInput(format!(
            "image {width}x{height} smaller than the {kernel_diameter}-tap kernel support"
        )));
    }
    let raw: Vec<f64> = gray.as_raw().iter().map(|&v| v as f64).collect();
    let smoothed = if params.sigma > 0.0 {
        gaussian_filter(&raw, width, height, params.sigma)
    } else {
        raw
    };
    let g = compute_gradient(&smoothed, width, height);
    let (ex, ey) = compute_edge_points(&g);
    let (mut prev, mut next) = chain_edge_points(&ex, &ey, &g);
    hysteresis(&mut next, &mut prev, &g, params.th_low, params.th_high);
    let curves = list_curves(&mut next, &mut prev, &ex, &ey)
        .into_iter()
        .filter(|points| points.len() >= 2)
        .enumerate()
        .map(|(id, points)| EdgeCurve {
            id,
            kind: CurveKind::Edge,
            points,
        })
        .collect();
    Ok((curves, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::euclidean_distance;

    fn gray_from_fn(w: u32, h: u32, f: impl Fn(f64, f64) -> f64) -> GrayImage {
        GrayImage::from_fn(w, h, |x, y| {
            image::Luma([f(x as f64, y as f64).round().clamp(0.0, 255.0) as u8])
        })
    }

    /// Vertical step with subpixel position `edge_x`; pixel values follow
    /// the covered fraction.
    fn step_image(w: u32, h: u32, edge_x: f64, lo: f64, hi: f64) -> GrayImage {
        gray_from_fn(w, h, |x, _| {
            let left = x - 0.5;
            let right = x + 0.5;
            if right <= edge_x {
                lo
            } else if left >= edge_x {
                hi
            } else {
                let f = right - edge_x;
                lo * (1.0 - f) + hi * f
            }
        })
    }

    fn circle_image(size: u32, center: f64, radius: f64, inside: f64, outside: f64) -> GrayImage {
        gray_from_fn(size, size, |x, y| {
            let r = ((x - center).powi(2) + (y - center).powi(2)).sqrt();
            // Linear ramp over two pixels centred on the circle.
            let t = ((r - radius + 1.0) / 2.0).clamp(0.0, 1.0);
            inside * (1.0 - t) + outside * t
        })
    }

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel(3.0);
        assert_eq!(k.len(), 25);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..k.len() / 2 {
            assert!((k[i] - k[k.len() - 1 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn step_edge_position_is_subpixel_accurate() {
        let edge_x = 20.3;
        let img = step_image(41, 41, edge_x, 60.0, 140.0);
        let (curves, _) = detect_edges(&img, &DevernayParams::default()).unwrap();
        assert_eq!(curves.len(), 1);
        let pts = &curves[0].points;
        assert!(pts.len() > 30, "edge should span most rows");
        for p in pts {
            assert!(
                (p.x - edge_x).abs() < 0.1,
                "expected x near {edge_x}, got {}",
                p.x
            );
        }
    }

    #[test]
    fn circle_yields_one_closed_accurate_curve() {
        let img = circle_image(160, 80.0, 50.0, 60.0, 160.0);
        let (curves, _) = detect_edges(&img, &DevernayParams::default()).unwrap();
        assert_eq!(curves.len(), 1);
        let curve = &curves[0];
        assert!(curve.is_closed());
        let center = Point::new(80.0, 80.0);
        let mut worst: f64 = 0.0;
        for p in &curve.points {
            worst = worst.max((euclidean_distance(*p, center) - 50.0).abs());
        }
        assert!(worst < 0.5, "max radial deviation {worst}");
    }

    #[test]
    fn contrast_reversal_keeps_positions_and_flips_gradient() {
        // A straight step keeps gradients off the 45-degree diagonal, where
        // the axis-selection comparison is legitimately unstable to the
        // last-ulp rounding differences inversion introduces.
        let img = step_image(41, 41, 20.3, 60.0, 140.0);
        let inverted = GrayImage::from_fn(41, 41, |x, y| {
            image::Luma([255 - img.get_pixel(x, y).0[0]])
        });
        let (a, ga) = detect_edges(&img, &DevernayParams::default()).unwrap();
        let (b, gb) = detect_edges(&inverted, &DevernayParams::default()).unwrap();
        let pa: Vec<Point> = a.iter().flat_map(|c| c.points.clone()).collect();
        let pb: Vec<Point> = b.iter().flat_map(|c| c.points.clone()).collect();
        assert_eq!(pa.len(), pb.len());
        for u in &pa {
            let nearest = pb
                .iter()
                .map(|v| euclidean_distance(*u, *v))
                .fold(f64::INFINITY, f64::min);
            assert!(nearest < 1e-3, "point {u:?} moved by {nearest}");
            let (gxa, _) = ga.at_point(*u);
            let (gxb, _) = gb.at_point(*u);
            assert!(gxa > 0.0 && gxb < 0.0, "gradient sign must flip");
        }
    }

    #[test]
    fn points_stay_near_their_pixel_and_links_stay_short() {
        let img = circle_image(140, 70.0, 45.0, 70.0, 150.0);
        let (curves, _) = detect_edges(&img, &DevernayParams::default()).unwrap();
        for c in &curves {
            for p in &c.points {
                let cell = Point::new(p.x.round(), p.y.round());
                assert!(euclidean_distance(*p, cell) <= 0.71);
            }
            for w in c.points.windows(2) {
                assert!(euclidean_distance(w[0], w[1]) <= 2.0 * 2.0f64.sqrt() + 1e-9);
            }
        }
    }

    #[test]
    fn traversal_keeps_gradient_left() {
        let img = circle_image(160, 80.0, 50.0, 60.0, 160.0);
        let (curves, g) = detect_edges(&img, &DevernayParams::default()).unwrap();
        for c in &curves {
            for w in c.points.windows(2) {
                let (gx, gy) = g.at_point(w[0]);
                let (dx, dy) = (w[1].x - w[0].x, w[1].y - w[0].y);
                assert!(gy * dx - gx * dy > 0.0);
            }
        }
    }

    #[test]
    fn uniform_image_has_no_edges() {
        let img = GrayImage::from_pixel(64, 64, image::Luma([128]));
        let (curves, _) = detect_edges(&img, &DevernayParams::default()).unwrap();
        assert!(curves.is_empty());
    }

    #[test]
    fn hysteresis_prunes_weak_chains() {
        let img = step_image(41, 41, 20.5, 100.0, 108.0);
        let (strong, _) = detect_edges(&img, &DevernayParams::default()).unwrap();
        assert!(strong.is_empty(), "8-level step is below th_high");
        let (weak, _) = detect_edges(
            &img,
            &DevernayParams {
                sigma: 3.0,
                th_low: 0.5,
                th_high: 1.0,
            },
        )
        .unwrap();
        assert!(!weak.is_empty());
    }

    #[test]
    fn rejects_bad_params_and_tiny_images() {
        let img = GrayImage::new(64, 64);
        assert!(detect_edges(
            &img,
            &DevernayParams {
                sigma: -1.0,
                ..Default::default()
            }
        )
        .is_err());
        assert!(detect_edges(
            &img,
            &DevernayParams {
                th_low: 10.0,
                th_high: 5.0,
                sigma: 3.0,
            }
        )
        .is_err());
        let tiny = GrayImage::new(10, 10);
        assert!(detect_edges(&tiny, &DevernayParams::default()).is_err());
    }
}
