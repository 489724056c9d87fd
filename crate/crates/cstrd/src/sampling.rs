//! Sampling of edge curves into chains.
//!
//! The rays of the spider web cut every filtered curve into a sequence of
//! intersection nodes. Walking a curve in storage order visits rays one step
//! at a time, so each curve yields angularly contiguous runs of nodes; a run
//! becomes a [`Chain`]. Runs break where a curve doubles back over a ray it
//! already crossed, which keeps the one-node-per-ray chain invariant. A
//! synthetic center chain (all nodes at the pith) is appended last so the
//! connection stage always has an innermost support.

use crate::devernay::{CurveKind, EdgeCurve};
use crate::geometry::{
    build_rays, euclidean_distance, ray_angle_deg, segment_intersection, Chain, ChainKind,
    Endpoint, Node, Point, Ray, RaySet,
};
use crate::Result;

/// Default number of sampling rays (one per degree).
pub const DEFAULT_NR: usize = 360;
/// Default minimum number of nodes a chain needs to be kept.
pub const DEFAULT_MIN_CHAIN_LENGTH: usize = 2;

/// Radial direction relative to a support chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RadialDirection {
    /// Toward the pith.
    Inward,
    /// Away from the pith.
    Outward,
}

/// Samples `curves` against `nr` rays rooted at `pith` and returns the chain
/// list. Curves flagged [`CurveKind::Border`] become border chains; every
/// other curve becomes one or more normal chains. Runs shorter than
/// `min_chain_length` nodes are dropped. The synthetic center chain is
/// appended last, and chain ids equal list positions.
pub fn sampling_edges(
    curves: &[EdgeCurve],
    pith: Point,
    height: u32,
    width: u32,
    nr: usize,
    min_chain_length: usize,
) -> Result<Vec<Chain>> {
    let rays = build_rays(nr, height, width, pith)?;
    let min_chain_length = min_chain_length.max(1);
    let mut chains: Vec<Chain> = Vec::new();
    for curve in curves {
        let kind = match curve.kind {
            CurveKind::Border => ChainKind::Border,
            CurveKind::Edge => ChainKind::Normal,
        };
        for run in sample_curve(curve, &rays, pith, nr) {
            if run.len() < min_chain_length {
                continue;
            }
            let id = chains.len();
            let nodes = run
                .into_iter()
                .map(|(ray, p)| Node {
                    x: p.x,
                    y: p.y,
                    ray_index: ray,
                    radial_distance: euclidean_distance(p, pith),
                    chain_id: id,
                })
                .collect();
            chains.push(Chain::new(id, kind, nr, nodes));
        }
    }
    chains.push(center_chain(pith, nr, chains.len()));
    Ok(chains)
}

/// Chain of `nr` nodes all at the pith, one per ray.
fn center_chain(pith: Point, nr: usize, id: usize) -> Chain {
    let nodes = (0..nr)
        .map(|ray| Node {
            x: pith.x,
            y: pith.y,
            ray_index: ray,
            radial_distance: 0.0,
            chain_id: id,
        })
        .collect();
    Chain::new(id, ChainKind::Center, nr, nodes)
}

/// Ray crossings of one curve, split into runs that satisfy the chain
/// invariants. Each run is ordered `B` to `A` (ray index increasing).
///
/// A segment crosses ray `k` when the ray angle falls in the half-open
/// angular span `(angle(a), angle(b)]` of the segment as seen from the pith.
/// The half-open rule assigns a crossing at a shared vertex to exactly one
/// segment, even when the vertex sits on the ray to the last bit: plain
/// segment intersection tests can miss such crossings from both sides.
fn sample_curve(
    curve: &EdgeCurve,
    rays: &[Ray],
    pith: Point,
    nr: usize,
) -> Vec<Vec<(usize, Point)>> {
    let pts = &curve.points;
    if pts.len() < 2 {
        return Vec::new();
    }
    let offsets: Vec<(f64, f64)> = pts.iter().map(|p| (p.x - pith.x, p.y - pith.y)).collect();
    let angles: Vec<f64> = offsets
        .iter()
        .map(|(vx, vy)| vy.atan2(*vx).to_degrees().rem_euclid(360.0))
        .collect();
    let step = 360.0 / nr as f64;
    let mut crossings: Vec<(usize, Point)> = Vec::new();
    let mut seg_hits: Vec<(f64, usize, Point)> = Vec::new();
    for i in 0..pts.len() - 1 {
        let (a, b) = (pts[i], pts[i + 1]);
        seg_hits.clear();
        let near_pith = offsets[i].0.hypot(offsets[i].1) < 1e-9
            || offsets[i + 1].0.hypot(offsets[i + 1].1) < 1e-9;
        let d = signed_minor_deg(angles[i + 1] - angles[i]);
        if near_pith || d.abs() >= 170.0 {
            // Near-diametral segment: the angular span is ambiguous, fall
            // back to plain intersection tests against every ray.
            for ray in rays {
                if let Some(p) = segment_intersection(ray.origin, ray.tip, a, b) {
                    let t = (p.x - a.x).powi(2) + (p.y - a.y).powi(2);
                    seg_hits.push((t, ray.index, p));
                }
            }
        } else if d != 0.0 {
            let (start, end) = if d >= 0.0 {
                (angles[i], angles[i] + d)
            } else {
                (angles[i] + d, angles[i])
            };
            let k0 = (start / step).floor() as i64 - 1;
            let k1 = (end / step).ceil() as i64 + 1;
            let candidates: Vec<usize> = if (k1 - k0 + 1) as usize >= nr {
                (0..nr).collect()
            } else {
                (k0..=k1).map(|k| k.rem_euclid(nr as i64) as usize).collect()
            };
            for ray in candidates {
                // Both tests reuse the per-vertex offsets g, so adjacent
                // segments see bit-identical values and exactly one of them
                // claims a crossing at their shared vertex.
                let g0 = signed_minor_deg(ray_angle_deg(ray, nr) - angles[i]);
                let g1 = signed_minor_deg(ray_angle_deg(ray, nr) - angles[i + 1]);
                let crossed = if d > 0.0 {
                    g0 > 0.0 && g1 <= 0.0
                } else {
                    g0 < 0.0 && g1 >= 0.0
                };
                if !crossed {
                    continue;
                }
                let dir = rays[ray].direction();
                let seg = (b.x - a.x, b.y - a.y);
                let den = seg.0 * dir.1 - seg.1 * dir.0;
                if den.abs() < 1e-12 {
                    continue;
                }
                let u = (((pith.x - a.x) * dir.1 - (pith.y - a.y) * dir.0) / den).clamp(0.0, 1.0);
                let p = Point::new(a.x + u * seg.0, a.y + u * seg.1);
                // |g0| grows with progress along the segment.
                seg_hits.push((g0.abs(), ray, p));
            }
        }
        seg_hits.sort_by(|x, y| x.0.total_cmp(&y.0));
        for &(_, ray, p) in &seg_hits {
            // The fallback path reports shared-vertex crossings twice.
            if let Some(last) = crossings.last() {
                if last.0 == ray && euclidean_distance(last.1, p) < 1e-6 {
                    continue;
                }
            }
            crossings.push((ray, p));
        }
    }
    if curve.is_closed() && crossings.len() >= 2 {
        // A crossing exactly at the walk start can show up at both ends.
        let (first, last) = (crossings[0], *crossings.last().unwrap());
        if first.0 == last.0 && euclidean_distance(first.1, last.1) < 1e-6 {
            crossings.pop();
        }
    }
    split_into_runs(crossings, nr)
}

/// Wraps an angle difference into `(-180, 180]` degrees. Exact for inputs in
/// `(-720, 720)`: fmod is exact and the 360 shift hits the Sterbenz range, so
/// no rounding can move a value across the inclusion boundaries above.
fn signed_minor_deg(delta: f64) -> f64 {
    let mut d = delta % 360.0;
    if d > 180.0 {
        d -= 360.0;
    } else if d <= -180.0 {
        d += 360.0;
    }
    d
}

fn split_into_runs(crossings: Vec<(usize, Point)>, nr: usize) -> Vec<Vec<(usize, Point)>> {
    let mut runs = Vec::new();
    let mut cur: Vec<(usize, Point)> = Vec::new();
    let mut dir: i64 = 0;
    let mut used = RaySet::new(nr);
    let flush = |cur: &mut Vec<(usize, Point)>, dir: i64, runs: &mut Vec<_>| {
        if !cur.is_empty() {
            if dir < 0 {
                cur.reverse();
            }
            runs.push(std::mem::take(cur));
        }
    };
    for (ray, p) in crossings {
        let ok = match cur.last() {
            None => true,
            Some(&(last, _)) => {
                let step = if ray == (last + 1) % nr {
                    1
                } else if (ray + 1) % nr == last {
                    -1
                } else {
                    0
                };
                if step != 0 && (dir == 0 || dir == step) && !used.contains(ray) {
                    dir = step;
                    true
                } else {
                    false
                }
            }
        };
        if !ok {
            flush(&mut cur, dir, &mut runs);
            dir = 0;
            used = RaySet::new(nr);
        }
        used.insert(ray);
        cur.push((ray, p));
    }
    flush(&mut cur, dir, &mut runs);
    runs
}

/// Chains with at least one endpoint that can see `support` along its ray:
/// the support covers the ray, the endpoint lies strictly on the `direction`
/// side of the support, and no other chain has a node strictly between them.
pub fn visible_chains(chains: &[Chain], support: &Chain, direction: RadialDirection) -> Vec<usize> {
    let mut out = Vec::new();
    'cand: for cand in chains {
        if cand.id == support.id {
            continue;
        }
        for which in [Endpoint::B, Endpoint::A] {
            let e = cand.endpoint(which);
            let Some(sup) = support.node_at_ray(e.ray_index) else {
                continue;
            };
            let (lo, hi) = match direction {
                RadialDirection::Inward if e.radial_distance < sup.radial_distance => {
                    (e.radial_distance, sup.radial_distance)
                }
                RadialDirection::Outward if e.radial_distance > sup.radial_distance => {
                    (sup.radial_distance, e.radial_distance)
                }
                _ => continue,
            };
            let blocked = chains.iter().any(|c| {
                c.id != cand.id
                    && c.id != support.id
                    && c.node_at_ray(e.ray_index)
                        .is_some_and(|n| n.radial_distance > lo && n.radial_distance < hi)
            });
            if !blocked {
                out.push(cand.id);
                continue 'cand;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn circle_points(pith: Point, radius: f64, n: usize, closed: bool) -> Vec<Point> {
        let mut pts: Vec<Point> = (0..n)
            .map(|k| {
                let a = (k as f64 + 0.5) * std::f64::consts::TAU / n as f64;
                Point::new(pith.x + radius * a.cos(), pith.y + radius * a.sin())
            })
            .collect();
        if closed {
            pts.push(pts[0]);
        }
        pts
    }

    fn edge_curve(id: usize, points: Vec<Point>) -> EdgeCurve {
        EdgeCurve {
            id,
            kind: CurveKind::Edge,
            points,
        }
    }

    fn arc_points(pith: Point, radius: f64, deg_from: f64, deg_to: f64, n: usize) -> Vec<Point> {
        (0..n)
            .map(|k| {
                let a = (deg_from + (deg_to - deg_from) * k as f64 / (n - 1) as f64).to_radians();
                Point::new(pith.x + radius * a.cos(), pith.y + radius * a.sin())
            })
            .collect()
    }

    /// Chain with `n` nodes on consecutive rays starting at `ray_from`, all
    /// at `radius` from the pith.
    fn arc_chain(id: usize, nr: usize, pith: Point, radius: f64, ray_from: usize, n: usize) -> Chain {
        let nodes = (0..n)
            .map(|k| {
                let ray = (ray_from + k) % nr;
                let a = (ray as f64 * 360.0 / nr as f64).to_radians();
                Node {
                    x: pith.x + radius * a.cos(),
                    y: pith.y + radius * a.sin(),
                    ray_index: ray,
                    radial_distance: radius,
                    chain_id: id,
                }
            })
            .collect();
        Chain::new(id, ChainKind::Normal, nr, nodes)
    }

    #[test]
    fn circle_on_pith_becomes_one_closed_chain() {
        let pith = Point::new(250.0, 250.0);
        let curve = edge_curve(0, circle_points(pith, 100.0, 720, true));
        let chains = sampling_edges(&[curve], pith, 500, 500, 360, 2).unwrap();
        assert_eq!(chains.len(), 2);
        let ring = &chains[0];
        assert!(ring.is_closed());
        assert_eq!(ring.size(), 360);
        assert_eq!(ring.kind, ChainKind::Normal);
        for node in ring.nodes() {
            assert!((node.radial_distance - 100.0).abs() < 0.01);
        }
    }

    #[test]
    fn short_arc_is_discarded() {
        let pith = Point::new(250.0, 250.0);
        // Spans under one ray step: crosses exactly one ray.
        let curve = edge_curve(0, arc_points(pith, 100.0, -0.2, 0.7, 12));
        let chains = sampling_edges(&[curve], pith, 500, 500, 360, 2).unwrap();
        assert_eq!(chains.len(), 1);
        assert_eq!(chains[0].kind, ChainKind::Center);
    }

    #[test]
    fn center_chain_is_appended_last() {
        let pith = Point::new(250.0, 250.0);
        let curve = edge_curve(0, circle_points(pith, 80.0, 720, true));
        let chains = sampling_edges(&[curve], pith, 500, 500, 360, 2).unwrap();
        let center = chains.last().unwrap();
        assert_eq!(center.kind, ChainKind::Center);
        assert!(center.is_closed());
        assert_eq!(center.size(), 360);
        assert!(center.nodes().iter().all(|n| n.radial_distance == 0.0));
        for (i, c) in chains.iter().enumerate() {
            assert_eq!(c.id, i);
        }
    }

    #[test]
    fn curve_recrossing_a_ray_is_split() {
        let pith = Point::new(250.0, 250.0);
        let nr = 36;
        // Clockwise across rays 0..4 at radius 50, then back over rays 4..2
        // at radius 70: the second visit to ray 4 must start a new chain.
        let mut pts = arc_points(pith, 50.0, -5.0, 47.0, 120);
        pts.extend(arc_points(pith, 70.0, 47.0, 13.0, 80));
        let chains = sampling_edges(&[edge_curve(0, pts)], pith, 500, 500, nr, 2).unwrap();
        assert_eq!(chains.len(), 3);
        assert_eq!(chains[0].size(), 5);
        assert_eq!(chains[1].size(), 3);
        let rays: Vec<usize> = chains[1].nodes().iter().map(|n| n.ray_index).collect();
        assert_eq!(rays, vec![2, 3, 4]);
    }

    #[test]
    fn counterclockwise_walk_is_normalized() {
        let pith = Point::new(250.0, 250.0);
        let nr = 36;
        let pts = arc_points(pith, 60.0, 95.0, 42.0, 100);
        let chains = sampling_edges(&[edge_curve(0, pts)], pith, 500, 500, nr, 2).unwrap();
        assert_eq!(chains.len(), 2);
        let chain = &chains[0];
        assert_eq!(chain.endpoint(Endpoint::B).ray_index, 5);
        assert_eq!(chain.endpoint(Endpoint::A).ray_index, 9);
        for w in chain.nodes().windows(2) {
            assert_eq!(w[1].ray_index, (w[0].ray_index + 1) % nr);
        }
    }

    #[test]
    fn min_chain_length_filters_runs() {
        let pith = Point::new(250.0, 250.0);
        let pts = arc_points(pith, 60.0, -2.0, 42.0, 100); // crosses 5 rays of 36
        let chains = sampling_edges(&[edge_curve(0, pts)], pith, 500, 500, 36, 6).unwrap();
        assert_eq!(chains.len(), 1);
        assert_eq!(chains[0].kind, ChainKind::Center);
    }

    #[test]
    fn border_curve_becomes_border_chain() {
        let pith = Point::new(250.0, 250.0);
        let mut curve = edge_curve(0, circle_points(pith, 200.0, 720, true));
        curve.kind = CurveKind::Border;
        let chains = sampling_edges(&[curve], pith, 500, 500, 360, 2).unwrap();
        assert_eq!(chains[0].kind, ChainKind::Border);
        assert!(chains[0].is_closed());
    }

    #[test]
    fn concentric_circles_shadow_each_other() {
        let pith = Point::new(250.0, 250.0);
        let nr = 36;
        let curves: Vec<EdgeCurve> = [30.0, 60.0, 90.0]
            .iter()
            .enumerate()
            .map(|(i, &r)| edge_curve(i, circle_points(pith, r, 720, true)))
            .collect();
        let chains = sampling_edges(&curves, pith, 500, 500, nr, 2).unwrap();
        assert_eq!(chains.len(), 4);
        let middle = &chains[1];
        // The inner circle hides both the center chain and the pith side of
        // anything further in; the outer circle is the only outward chain.
        assert_eq!(visible_chains(&chains, middle, RadialDirection::Inward), vec![0]);
        assert_eq!(visible_chains(&chains, middle, RadialDirection::Outward), vec![2]);
        let inner = &chains[0];
        assert_eq!(visible_chains(&chains, inner, RadialDirection::Outward), vec![1]);
    }

    #[test]
    fn partially_shadowed_chain_is_still_visible() {
        let pith = Point::new(250.0, 250.0);
        let nr = 36;
        let mut chains = vec![arc_chain(0, nr, pith, 100.0, 0, nr)];
        chains.push(arc_chain(1, nr, pith, 50.0, 1, 6)); // rays 1..=6
        chains.push(arc_chain(2, nr, pith, 30.0, 2, 4)); // fully behind chain 1
        chains.push(arc_chain(3, nr, pith, 40.0, 10, 5)); // rays 10..=14
        chains.push(arc_chain(4, nr, pith, 60.0, 9, 3)); // hides ray 10 only
        let vis = visible_chains(&chains, &chains[0], RadialDirection::Inward);
        // Chain 2 is shadowed at both endpoints; chain 3 has ray 10 blocked
        // by chain 4 but ray 14 free.
        assert_eq!(vis, vec![1, 3, 4]);
    }

    #[test]
    fn support_must_cover_an_endpoint_ray() {
        let pith = Point::new(250.0, 250.0);
        let nr = 36;
        let chains = vec![
            arc_chain(0, nr, pith, 100.0, 0, 18), // rays 0..=17
            arc_chain(1, nr, pith, 50.0, 20, 6),  // rays 20..=25: uncovered
            arc_chain(2, nr, pith, 50.0, 15, 6),  // rays 15..=20: ray 15 seen
        ];
        let vis = visible_chains(&chains, &chains[0], RadialDirection::Inward);
        assert_eq!(vis, vec![2]);
    }

    proptest! {
        /// A starlike closed curve crosses every ray exactly once, so it must
        /// sample to a single closed chain regardless of harmonics.
        #[test]
        fn starlike_closed_curves_sample_to_one_closed_chain(
            a1 in -8.0..8.0f64,
            a2 in -4.0..4.0f64,
            phase in 0.0..std::f64::consts::TAU,
        ) {
            let pith = Point::new(250.0, 250.0);
            let mut pts: Vec<Point> = (0..720)
                .map(|k| {
                    let t = k as f64 * std::f64::consts::TAU / 720.0;
                    let r = 80.0 + a1 * (t + phase).sin() + a2 * (2.0 * t).cos();
                    Point::new(pith.x + r * t.cos(), pith.y + r * t.sin())
                })
                .collect();
            pts.push(pts[0]);
            let chains = sampling_edges(&[edge_curve(0, pts)], pith, 500, 500, 360, 2).unwrap();
            prop_assert_eq!(chains.len(), 2);
            prop_assert!(chains[0].is_closed());
            prop_assert_eq!(chains[0].size(), 360);
        }
    }
}
