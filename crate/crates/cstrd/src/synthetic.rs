//! Synthetic wood-disk images with exact ring annotations.
//!
//! A disk is painted from a list of ring radii: each year band is light
//! earlywood ending in a dark latewood strip, and every annual boundary
//! carries a short dark-to-light ramp so the outward intensity gradient
//! peaks exactly at the ground-truth radius. Rings can be deformed by a
//! per-ring harmonic, and three optional defects degrade the image the way
//! real samples do: a white crack wedge, a dark stain and an arc where one
//! ring's boundary is erased. Everything derives from the seed, so equal
//! specs give byte-identical images and annotations.

use crate::error::Error;
use crate::geometry::Point;
use crate::preprocess::BACKGROUND;
use crate::Result;
use image::RgbImage;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;
use std::ops::RangeInclusive;

pub const EARLYWOOD: u8 = 200;
pub const LATEWOOD: u8 = 40;
pub const STAIN: u8 = 25;
/// Vertices per ground-truth ring polygon.
pub const GT_VERTICES: usize = 720;

/// Half width of the dark-to-light ramp at each annual boundary.
const RAMP_HALF: f64 = 1.0;
/// Earlywood margin between the last ring and the background.
const MARGIN: f64 = 20.0;
/// Latewood narrower than this would let the blurred flanks of the dark
/// strip interact and pull the detected boundary off the true radius.
const MIN_LATEWOOD: f64 = 12.0;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Perturbations {
    /// White triangular sector from the pith through the bark.
    pub crack: bool,
    /// Dark ellipse somewhere inside the disk.
    pub stain: bool,
    /// Angular extent of an erased stretch of one ring boundary, 0 for none.
    pub arc_gap_deg: f64,
}

#[derive(Debug, Clone)]
pub struct DiskSpec {
    /// Square canvas side in pixels.
    pub size: u32,
    /// Annual boundary radii, strictly increasing, inside the canvas.
    pub ring_radii: Vec<f64>,
    /// Harmonic amplitude as a fraction of the local ring spacing. At most
    /// 0.45 so neighbouring rings can never touch.
    pub deform_fraction: f64,
    pub perturbations: Perturbations,
    pub seed: u64,
}

impl DiskSpec {
    /// Undeformed, unperturbed disk.
    pub fn clean(size: u32, ring_radii: Vec<f64>) -> DiskSpec {
        DiskSpec {
            size,
            ring_radii,
            deform_fraction: 0.0,
            perturbations: Perturbations::default(),
            seed: 0,
        }
    }

    /// Random clean spec: ring count drawn from `rings`, radii evenly spread
    /// with jitter between the pith neighbourhood and the canvas border.
    pub fn random(seed: u64, size: u32, rings: RangeInclusive<usize>) -> DiskSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(rings).max(1);
        let r_min = rng.gen_range(0.06..0.10) * size as f64;
        let r_max = size as f64 / 2.0 - MARGIN - 10.0;
        let mut ring_radii = Vec::with_capacity(n);
        if n == 1 {
            ring_radii.push(r_max);
        } else {
            let step = (r_max - r_min) / (n - 1) as f64;
            for i in 0..n {
                let jitter = if i == 0 || i == n - 1 {
                    0.0
                } else {
                    rng.gen_range(-0.2..0.2) * step
                };
                ring_radii.push(r_min + i as f64 * step + jitter);
            }
        }
        DiskSpec {
            size,
            ring_radii,
            deform_fraction: 0.0,
            perturbations: Perturbations::default(),
            seed,
        }
    }
}

pub struct SyntheticDisk {
    pub image: RgbImage,
    pub pith: Point,
    /// One polygon per ring, innermost first, `GT_VERTICES` vertices each,
    /// sampled at equal angles in ray order.
    pub gt_polygons: Vec<Vec<Point>>,
}

/// One deformed ring boundary: base radius plus a single harmonic.
struct RingShape {
    base: f64,
    amp: f64,
    k: f64,
    phase: f64,
}

impl RingShape {
    fn radius_at(&self, theta: f64) -> f64 {
        self.base + self.amp * (self.k * theta + self.phase).sin()
    }
}

fn latewood_width(band_width: f64) -> f64 {
    (0.15 * band_width).max(MIN_LATEWOOD).min(0.6 * band_width)
}

/// Clockwise angular span from `start` to `angle`, both in degrees.
fn within_arc(angle_deg: f64, start_deg: f64, extent_deg: f64) -> bool {
    (angle_deg - start_deg).rem_euclid(360.0) <= extent_deg
}

fn wrap_distance_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

pub fn generate_disk(spec: &DiskSpec) -> Result<SyntheticDisk> {
    let n = spec.ring_radii.len();
    if n == 0 {
        return Err(Error::InvalidInput("disk needs at least one ring".into()));
    }
    if spec.ring_radii[0] <= 0.0 || spec.ring_radii.windows(2).any(|p| p[0] >= p[1]) {
        return Err(Error::InvalidInput("ring radii must be positive and strictly increasing".into()));
    }
    let half = spec.size as f64 / 2.0;
    if *spec.ring_radii.last().unwrap() >= half {
        return Err(Error::InvalidInput("rings must fit inside half the canvas".into()));
    }
    if !(0.0..=0.45).contains(&spec.deform_fraction) {
        return Err(Error::InvalidInput("deform fraction must lie in [0, 0.45]".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // Amplitude is bounded by the nearer of the two adjacent gaps, so two
    // neighbours can shrink a gap by at most twice the fraction of it.
    let shapes: Vec<RingShape> = (0..n)
        .map(|i| {
            let below = if i == 0 {
                spec.ring_radii[0]
            } else {
                spec.ring_radii[i] - spec.ring_radii[i - 1]
            };
            let above = if i == n - 1 {
                MARGIN
            } else {
                spec.ring_radii[i + 1] - spec.ring_radii[i]
            };
            let k = rng.gen_range(2..=5) as f64;
            let phase = rng.gen_range(0.0..TAU);
            RingShape {
                base: spec.ring_radii[i],
                amp: spec.deform_fraction * below.min(above),
                k,
                phase,
            }
        })
        .collect();

    // Defect parameters are always drawn so that toggling one defect does
    // not reshuffle the others.
    let crack_dir = rng.gen_range(0.0..360.0);
    let crack_half_width = rng.gen_range(1.5..3.0);
    let stain_angle = rng.gen_range(0.0..TAU);
    let stain_rho = rng.gen_range(0.25..0.6);
    let r_out = *spec.ring_radii.last().unwrap();
    let stain_axes = (rng.gen_range(0.06..0.12) * r_out, rng.gen_range(0.06..0.12) * r_out);
    let stain_rot = rng.gen_range(0.0..TAU / 2.0);
    let gap_ring = rng.gen_range(0..n);
    let gap_start = rng.gen_range(0.0..360.0);

    let pith = Point::new((spec.size as f64 - 1.0) / 2.0, (spec.size as f64 - 1.0) / 2.0);
    let stain_center = Point::new(
        pith.x + stain_rho * r_out * stain_angle.cos(),
        pith.y + stain_rho * r_out * stain_angle.sin(),
    );

    let band_start = |idx: usize, theta: f64| -> f64 {
        if idx == 0 {
            0.0
        } else {
            shapes[idx - 1].radius_at(theta)
        }
    };

    let image = RgbImage::from_fn(spec.size, spec.size, |x, y| {
        let dx = x as f64 - pith.x;
        let dy = y as f64 - pith.y;
        let r = dx.hypot(dy);
        let theta = dy.atan2(dx).rem_euclid(TAU);
        let outer = shapes[n - 1].radius_at(theta);
        let border = (outer + MARGIN).min(half - 2.0);

        let mut value = if r > border {
            BACKGROUND
        } else {
            let idx = shapes.partition_point(|s| s.radius_at(theta) < r);
            if idx == n {
                let d = r - outer;
                if d < RAMP_HALF {
                    (120.0 + 80.0 * d).round() as u8
                } else {
                    EARLYWOOD
                }
            } else {
                let e = shapes[idx].radius_at(theta);
                let s = band_start(idx, theta);
                if idx > 0 && r - s < RAMP_HALF {
                    (120.0 + 80.0 * (r - s)).round() as u8
                } else if e - r <= RAMP_HALF {
                    (120.0 - 80.0 * (e - r)).round() as u8
                } else if e - r <= latewood_width(e - s) {
                    LATEWOOD
                } else {
                    EARLYWOOD
                }
            }
        };

        let theta_deg = theta.to_degrees();
        if spec.perturbations.arc_gap_deg > 0.0
            && value != BACKGROUND
            && within_arc(theta_deg, gap_start, spec.perturbations.arc_gap_deg)
        {
            let e = shapes[gap_ring].radius_at(theta);
            let s = band_start(gap_ring, theta);
            if r >= e - latewood_width(e - s) - RAMP_HALF && r <= e + RAMP_HALF + 0.5 {
                value = EARLYWOOD;
            }
        }
        if spec.perturbations.stain {
            let (sx, sy) = (x as f64 - stain_center.x, y as f64 - stain_center.y);
            let u = sx * stain_rot.cos() + sy * stain_rot.sin();
            let v = -sx * stain_rot.sin() + sy * stain_rot.cos();
            let (a, b) = stain_axes;
            if u * u / (a * a) + v * v / (b * b) <= 1.0 {
                value = STAIN;
            }
        }
        if spec.perturbations.crack
            && r <= border
            && wrap_distance_deg(theta_deg, crack_dir) <= crack_half_width
        {
            value = BACKGROUND;
        }
        image::Rgb([value, value, value])
    });

    let gt_polygons = shapes
        .iter()
        .map(|shape| {
            (0..GT_VERTICES)
                .map(|k| {
                    let theta = k as f64 * TAU / GT_VERTICES as f64;
                    let r = shape.radius_at(theta);
                    Point::new(pith.x + r * theta.cos(), pith.y + r * theta.sin())
                })
                .collect()
        })
        .collect();

    Ok(SyntheticDisk { image, pith, gt_polygons })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vertex_radius(p: Point, pith: Point) -> f64 {
        (p.x - pith.x).hypot(p.y - pith.y)
    }

    #[test]
    fn bad_specs_are_rejected() {
        assert!(generate_disk(&DiskSpec::clean(400, vec![])).is_err());
        assert!(generate_disk(&DiskSpec::clean(400, vec![80.0, 80.0])).is_err());
        assert!(generate_disk(&DiskSpec::clean(400, vec![80.0, 60.0])).is_err());
        assert!(generate_disk(&DiskSpec::clean(400, vec![80.0, 200.0])).is_err());
        let mut spec = DiskSpec::clean(400, vec![80.0]);
        spec.deform_fraction = 0.5;
        assert!(generate_disk(&spec).is_err());
    }

    #[test]
    fn clean_disk_paints_the_documented_bands() {
        let disk = generate_disk(&DiskSpec::clean(400, vec![60.0, 120.0])).unwrap();
        let at = |r: f64| {
            let x = (disk.pith.x + r).round() as u32;
            disk.image.get_pixel(x, disk.pith.y.round() as u32).0
        };
        assert_eq!(at(30.0)[0], EARLYWOOD);
        assert_eq!(at(53.0)[0], LATEWOOD); // latewood strip of the first band
        assert_eq!(at(112.0)[0], LATEWOOD);
        assert_eq!(at(130.0)[0], EARLYWOOD); // bark margin
        assert_eq!(disk.image.get_pixel(0, 0).0[0], BACKGROUND);
        let boundary = at(60.0);
        assert!(boundary[0] > LATEWOOD && boundary[0] < EARLYWOOD);
        let px = at(112.0);
        assert_eq!(px[0], px[1]);
        assert_eq!(px[1], px[2]);
    }

    #[test]
    fn same_spec_is_byte_identical() {
        let spec = DiskSpec {
            size: 220,
            ring_radii: vec![40.0, 80.0],
            deform_fraction: 0.1,
            perturbations: Perturbations { crack: true, stain: true, arc_gap_deg: 30.0 },
            seed: 11,
        };
        let a = generate_disk(&spec).unwrap();
        let b = generate_disk(&spec).unwrap();
        assert_eq!(a.image.as_raw(), b.image.as_raw());
        assert_eq!(a.gt_polygons, b.gt_polygons);
    }

    #[test]
    fn clean_polygons_are_exact_circles() {
        let disk = generate_disk(&DiskSpec::clean(400, vec![60.0, 120.0])).unwrap();
        assert_eq!(disk.gt_polygons.len(), 2);
        for (poly, want) in disk.gt_polygons.iter().zip([60.0, 120.0]) {
            assert_eq!(poly.len(), GT_VERTICES);
            for &p in poly {
                assert!((vertex_radius(p, disk.pith) - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn deformed_rings_never_cross() {
        for seed in [1, 2, 3] {
            let spec = DiskSpec {
                size: 400,
                ring_radii: vec![50.0, 60.0, 70.0, 80.0, 90.0],
                deform_fraction: 0.45,
                perturbations: Perturbations::default(),
                seed,
            };
            let disk = generate_disk(&spec).unwrap();
            for pair in disk.gt_polygons.windows(2) {
                for (a, b) in pair[0].iter().zip(&pair[1]) {
                    assert!(vertex_radius(*a, disk.pith) < vertex_radius(*b, disk.pith));
                }
            }
        }
    }

    #[test]
    fn deformation_respects_the_amplitude_bound() {
        let spec = DiskSpec {
            size: 400,
            ring_radii: vec![50.0, 100.0, 140.0],
            deform_fraction: 0.2,
            perturbations: Perturbations::default(),
            seed: 5,
        };
        let disk = generate_disk(&spec).unwrap();
        // Nearer adjacent gaps: 50, 40 and the 20 px bark margin.
        for (poly, (base, bound)) in
            disk.gt_polygons.iter().zip([(50.0, 10.0), (100.0, 8.0), (140.0, 4.0)])
        {
            let max_dev = poly
                .iter()
                .map(|&p| (vertex_radius(p, disk.pith) - base).abs())
                .fold(0.0, f64::max);
            assert!(max_dev <= bound + 1e-9);
            assert!(max_dev >= 0.95 * bound);
        }
    }

    #[test]
    fn arc_gap_erases_one_boundary_stretch() {
        let clean = generate_disk(&DiskSpec::clean(400, vec![100.0, 160.0])).unwrap();
        let mut spec = DiskSpec::clean(400, vec![100.0, 160.0]);
        spec.perturbations.arc_gap_deg = 30.0;
        let gapped = generate_disk(&spec).unwrap();
        let mut erased = 0usize;
        for (a, b) in clean.image.pixels().zip(gapped.image.pixels()) {
            if a != b {
                // Only dark ring pixels may change, and only to earlywood.
                assert!(a.0[0] >= LATEWOOD && a.0[0] < EARLYWOOD);
                assert_eq!(b.0[0], EARLYWOOD);
                if a.0[0] == LATEWOOD {
                    erased += 1;
                }
            }
        }
        assert!(erased > 100, "erased {erased} latewood pixels");
    }

    #[test]
    fn crack_and_stain_mark_the_disk() {
        let mut spec = DiskSpec::clean(400, vec![100.0, 160.0]);
        spec.perturbations = Perturbations { crack: true, stain: true, arc_gap_deg: 0.0 };
        spec.seed = 9;
        let disk = generate_disk(&spec).unwrap();
        let mut white_inside = 0usize;
        let mut stained = 0usize;
        for (x, y, p) in disk.image.enumerate_pixels() {
            let r = (x as f64 - disk.pith.x).hypot(y as f64 - disk.pith.y);
            if r < 150.0 && p.0[0] == BACKGROUND {
                white_inside += 1;
            }
            if p.0[0] == STAIN {
                stained += 1;
            }
        }
        assert!(white_inside > 50, "crack pixels {white_inside}");
        assert!(stained > 50, "stain pixels {stained}");
    }

    #[test]
    fn random_specs_are_valid_and_deterministic() {
        for seed in 0..8 {
            let spec = DiskSpec::random(seed, 1500, 8..=25);
            assert!((8..=25).contains(&spec.ring_radii.len()));
            assert!(spec.ring_radii.windows(2).all(|p| p[0] < p[1]));
            assert!(*spec.ring_radii.last().unwrap() < 750.0 - MARGIN);
            let again = DiskSpec::random(seed, 1500, 8..=25);
            assert_eq!(spec.ring_radii, again.ring_radii);
        }
    }
}
