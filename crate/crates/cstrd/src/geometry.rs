//! Pith-centred polar geometry: rays, nodes, chains and the distances
//! between them.
//!
//! Coordinates follow image conventions: `x` grows rightwards, `y` grows
//! downwards, so angles measured from the positive `x` axis increase
//! clockwise on screen. Ray `i` of `nr` points at `i * 360 / nr` degrees.

use crate::{Error, Result};

/// Subpixel position in image coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Straight-line distance between two points.
pub fn euclidean_distance(p: Point, q: Point) -> f64 {
    ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt()
}

/// Clockwise angular walk from `to_deg` up to `from_deg`, in `[0, 360)`.
///
/// The measure is asymmetric: `angular_distance_deg(10, 350) == 20` but
/// `angular_distance_deg(350, 10) == 340`.
pub fn angular_distance_deg(from_deg: f64, to_deg: f64) -> f64 {
    (from_deg - to_deg).rem_euclid(360.0)
}

/// Absolute difference of two radial distances.
pub fn radial_difference(r_j: f64, r_k: f64) -> f64 {
    (r_j - r_k).abs()
}

/// Angle of ray `index` in degrees.
pub fn ray_angle_deg(index: usize, nr: usize) -> f64 {
    index as f64 * 360.0 / nr as f64
}

/// Half-line from the pith to the image border.
#[derive(Debug, Clone)]
pub struct Ray {
    pub index: usize,
    pub angle_deg: f64,
    pub origin: Point,
    /// End of the ray, clipped to the image rectangle.
    pub tip: Point,
}

impl Ray {
    pub fn direction(&self) -> (f64, f64) {
        let a = self.angle_deg.to_radians();
        (a.cos(), a.sin())
    }
}

/// Builds the `nr` sampling rays for an image of `width` x `height` pixels.
///
/// Fails unless the pith lies strictly inside the pixel grid: a pith on the
/// border would degenerate at least one ray to a point.
pub fn build_rays(nr: usize, height: u32, width: u32, pith: Point) -> Result<Vec<Ray>> {
    if nr < 2 {
        return Err(Error::InvalidParam(format!("nr = {nr}, need at least 2")));
    }
    let (w, h) = (width as f64 - 1.0, height as f64 - 1.0);
    if !(pith.x > 0.0 && pith.x < w && pith.y > 0.0 && pith.y < h) {
        return Err(Error::PithOutOfBounds {
            cy: pith.y,
            cx: pith.x,
            height,
            width,
        });
    }
    let mut rays = Vec::with_capacity(nr);
    for index in 0..nr {
        let angle_deg = ray_angle_deg(index, nr);
        let (dx, dy) = (angle_deg.to_radians().cos(), angle_deg.to_radians().sin());
        // Exit parameter against each rectangle side the ray moves towards.
        let mut t_exit = f64::INFINITY;
        if dx > 0.0 {
            t_exit = t_exit.min((w - pith.x) / dx);
        } else if dx < 0.0 {
            t_exit = t_exit.min(-pith.x / dx);
        }
        if dy > 0.0 {
            t_exit = t_exit.min((h - pith.y) / dy);
        } else if dy < 0.0 {
            t_exit = t_exit.min(-pith.y / dy);
        }
        debug_assert!(t_exit.is_finite() && t_exit > 0.0);
        let tip = Point::new(pith.x + dx * t_exit, pith.y + dy * t_exit);
        rays.push(Ray {
            index,
            angle_deg,
            origin: pith,
            tip,
        });
    }
    Ok(rays)
}

/// Proper intersection of segments `p1p2` and `q1q2`.
///
/// Parallel and collinear pairs yield `None`; touching endpoints count as
/// intersections.
pub fn segment_intersection(p1: Point, p2: Point, q1: Point, q2: Point) -> Option<Point> {
    let r = (p2.x - p1.x, p2.y - p1.y);
    let s = (q2.x - q1.x, q2.y - q1.y);
    let den = r.0 * s.1 - r.1 * s.0;
    if den.abs() < 1e-12 {
        return None;
    }
    let qp = (q1.x - p1.x, q1.y - p1.y);
    let t = (qp.0 * s.1 - qp.1 * s.0) / den;
    let u = (qp.0 * r.1 - qp.1 * r.0) / den;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        Some(Point::new(p1.x + t * r.0, p1.y + t * r.1))
    } else {
        None
    }
}

/// Intersections between a ray and an open polyline, sorted by distance from
/// the ray origin. Each entry is `(radius, point)`.
pub fn ray_polyline_intersections(ray: &Ray, polyline: &[Point]) -> Vec<(f64, Point)> {
    let mut hits = Vec::new();
    for seg in polyline.windows(2) {
        if let Some(p) = segment_intersection(ray.origin, ray.tip, seg[0], seg[1]) {
            hits.push((euclidean_distance(ray.origin, p), p));
        }
    }
    hits.sort_by(|a, b| a.0.total_cmp(&b.0));
    hits
}

/// One curve-ray intersection sample.
#[derive(Debug, Clone)]
pub struct Node {
    pub x: f64,
    pub y: f64,
    pub ray_index: usize,
    /// Distance to the pith, fixed when the node is created.
    pub radial_distance: f64,
    pub chain_id: usize,
}

impl Node {
    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }

    pub fn angle_deg(&self, nr: usize) -> f64 {
        ray_angle_deg(self.ray_index, nr)
    }
}

/// Role a chain plays in the spider-web model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainKind {
    /// Sampled from an image edge curve.
    Normal,
    /// Synthetic chain of `nr` nodes at the pith.
    Center,
    /// Sampled from the cross-section silhouette.
    Border,
}

/// Chain endpoints: `A` is the extreme node clockwise (last in storage), `B`
/// the extreme node counterclockwise (first in storage).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    A,
    B,
}

impl Endpoint {
    pub fn opposite(self) -> Self {
        match self {
            Endpoint::A => Endpoint::B,
            Endpoint::B => Endpoint::A,
        }
    }
}

/// Set of ray indices, used for constant-time chain overlap tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RaySet {
    blocks: Vec<u64>,
    len: usize,
}

impl RaySet {
    pub fn new(nr: usize) -> Self {
        Self {
            blocks: vec![0; nr.div_ceil(64)],
            len: 0,
        }
    }

    pub fn insert(&mut self, ray: usize) -> bool {
        let (blk, bit) = (ray / 64, 1u64 << (ray % 64));
        let fresh = self.blocks[blk] & bit == 0;
        if fresh {
            self.blocks[blk] |= bit;
            self.len += 1;
        }
        fresh
    }

    pub fn contains(&self, ray: usize) -> bool {
        self.blocks[ray / 64] & (1u64 << (ray % 64)) != 0
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn intersects(&self, other: &RaySet) -> bool {
        self.blocks
            .iter()
            .zip(&other.blocks)
            .any(|(a, b)| a & b != 0)
    }

    pub fn union_with(&mut self, other: &RaySet) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            *a |= b;
        }
        self.len = self.blocks.iter().map(|b| b.count_ones() as usize).sum();
    }
}

/// Angularly contiguous run of nodes, at most one per ray.
///
/// Nodes are stored from endpoint `B` to endpoint `A`; each step increases
/// the ray index by one modulo `nr`. A chain of exactly `nr` nodes is closed.
#[derive(Debug, Clone)]
pub struct Chain {
    pub id: usize,
    pub kind: ChainKind,
    nr: usize,
    nodes: Vec<Node>,
    coverage: RaySet,
}

impl Chain {
    /// Builds a chain from nodes already ordered `B` to `A`. Closed chains
    /// are rotated to start at ray 0 for a canonical layout.
    pub fn new(id: usize, kind: ChainKind, nr: usize, mut nodes: Vec<Node>) -> Self {
        assert!(!nodes.is_empty() && nodes.len() <= nr);
        if nodes.len() == nr {
            let start = nodes.iter().position(|n| n.ray_index == 0).unwrap();
            nodes.rotate_left(start);
        }
        let mut coverage = RaySet::new(nr);
        for (i, n) in nodes.iter().enumerate() {
            assert!(coverage.insert(n.ray_index), "duplicate ray in chain");
            if i > 0 {
                debug_assert_eq!(
                    n.ray_index,
                    (nodes[i - 1].ray_index + 1) % nr,
                    "chain rays not contiguous"
                );
            }
        }
        let mut chain = Self {
            id,
            kind,
            nr,
            nodes,
            coverage,
        };
        chain.set_id(id);
        chain
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_closed(&self) -> bool {
        self.nodes.len() == self.nr
    }

    /// True once angular coverage reaches `threshold` (a fraction of `nr`).
    pub fn is_closed_with_threshold(&self, threshold: f64) -> bool {
        self.nodes.len() as f64 >= threshold * self.nr as f64
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn endpoint(&self, which: Endpoint) -> &Node {
        match which {
            Endpoint::A => self.nodes.last().unwrap(),
            Endpoint::B => self.nodes.first().unwrap(),
        }
    }

    /// Up to `n` nodes starting at `which` and walking into the chain.
    pub fn window_from(&self, which: Endpoint, n: usize) -> &[Node] {
        let n = n.min(self.nodes.len());
        match which {
            Endpoint::A => &self.nodes[self.nodes.len() - n..],
            Endpoint::B => &self.nodes[..n],
        }
    }

    pub fn covers_ray(&self, ray: usize) -> bool {
        self.coverage.contains(ray)
    }

    pub fn coverage(&self) -> &RaySet {
        &self.coverage
    }

    /// Shares at least one ray with `other`.
    pub fn intersects(&self, other: &Chain) -> bool {
        self.coverage.intersects(&other.coverage)
    }

    pub fn node_at_ray(&self, ray: usize) -> Option<&Node> {
        if !self.coverage.contains(ray) {
            return None;
        }
        let offset = (ray + self.nr - self.nodes[0].ray_index) % self.nr;
        let node = &self.nodes[offset];
        debug_assert_eq!(node.ray_index, ray);
        Some(node)
    }

    /// Radial distance of the node at `ray`; for rays the chain does not
    /// cover, falls back to the angularly nearest node.
    pub fn radial_distance_near_ray(&self, ray: usize) -> f64 {
        if let Some(node) = self.node_at_ray(ray) {
            return node.radial_distance;
        }
        let nearest = self
            .nodes
            .iter()
            .min_by(|a, b| {
                let da = ray_gap(a.ray_index, ray, self.nr);
                let db = ray_gap(b.ray_index, ray, self.nr);
                da.cmp(&db).then(a.ray_index.cmp(&b.ray_index))
            })
            .unwrap();
        nearest.radial_distance
    }

    pub fn mean_radial_distance(&self) -> f64 {
        self.nodes.iter().map(|n| n.radial_distance).sum::<f64>() / self.nodes.len() as f64
    }

    pub fn set_id(&mut self, id: usize) {
        self.id = id;
        for n in &mut self.nodes {
            n.chain_id = id;
        }
    }

    /// Appends `bridge ++ other` after endpoint `A` or prepends
    /// `other ++ bridge` before endpoint `B`, keeping the `B -> A` order.
    pub fn absorb(&mut self, which: Endpoint, bridge: Vec<Node>, other: Vec<Node>) {
        match which {
            Endpoint::A => {
                self.extend_nodes(bridge);
                self.extend_nodes(other);
            }
            Endpoint::B => {
                let tail = std::mem::take(&mut self.nodes);
                // Rebuild coverage from scratch: cheaper than removal support.
                self.coverage = RaySet::new(self.nr);
                self.extend_nodes(other);
                self.extend_nodes(bridge);
                self.extend_nodes(tail);
            }
        }
        if self.nodes.len() == self.nr {
            let start = self.nodes.iter().position(|n| n.ray_index == 0).unwrap();
            self.nodes.rotate_left(start);
        }
    }

    fn extend_nodes(&mut self, nodes: Vec<Node>) {
        for mut n in nodes {
            if let Some(last) = self.nodes.last() {
                debug_assert_eq!(n.ray_index, (last.ray_index + 1) % self.nr);
            }
            assert!(self.coverage.insert(n.ray_index));
            n.chain_id = self.id;
            self.nodes.push(n);
        }
    }

    /// Splits the node list at `index`; the second piece starts there.
    /// Either piece may be empty.
    pub fn split_nodes_at(self, index: usize) -> (Vec<Node>, Vec<Node>) {
        let mut first = self.nodes;
        let second = first.split_off(index);
        (first, second)
    }
}

/// Shortest undirected gap between two rays, in ray steps.
pub fn ray_gap(a: usize, b: usize, nr: usize) -> usize {
    let d = (a + nr - b) % nr;
    d.min(nr - d)
}

/// Number of rays strictly between `from` and `to` walking clockwise.
pub fn rays_between_cw(from: usize, to: usize, nr: usize) -> usize {
    ((to + nr - from) % nr + nr - 1) % nr
}
