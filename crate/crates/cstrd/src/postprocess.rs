//! Ring completion.
//!
//! After the merge stage some rings are already closed; the rest of the
//! chains are fragments. This stage partitions the disk into concentric
//! regions bounded by consecutive closed chains (the pith marker and the
//! disk border included) and works region by region, innermost first.
//! Fragments inside a region are split where they cross each other's
//! endpoint rays, reconnected when radially consistent with a bounding
//! ring, and completed into full rings by interpolating between the two
//! bounding rings. Whenever a region produces a new closed ring the
//! partition is rebuilt and processing restarts at that region. Open
//! chains never make it into the output.

use crate::chain_connect::{bridge_nodes, bridge_radii, connectivity_goodness, ConnectParams};
use crate::geometry::{
    angular_distance_deg, euclidean_distance, ray_angle_deg, rays_between_cw, Chain, ChainKind,
    Endpoint, Node, Point,
};

/// Thresholds of the completion stage.
#[derive(Debug, Clone)]
pub struct PostprocessParams {
    /// Maximum angular gap bridged inside a region, in degrees.
    pub neighbourhood_size: f64,
    /// Allowed relative change of the seam radial offset.
    pub th_radial_tolerance: f64,
    /// Width of the offset distributions, in standard deviations.
    pub th_distribution_size: f64,
    /// Allowed ratio between bridge and chain derivative maxima.
    pub th_regular_derivative: f64,
}

impl Default for PostprocessParams {
    fn default() -> Self {
        PostprocessParams {
            neighbourhood_size: 45.0,
            th_radial_tolerance: 0.2,
            th_distribution_size: 3.0,
            th_regular_derivative: 2.0,
        }
    }
}

/// Counters of the completion stage.
#[derive(Debug, Clone, Default)]
pub struct PostprocessStats {
    /// Chains cut at an endpoint ray.
    pub splits: usize,
    /// Fragment merges.
    pub merges: usize,
    /// Rings closed by this stage.
    pub completed: usize,
    /// Rings dropped because they crossed an accepted ring.
    pub dropped_crossing: usize,
}

/// Completes rings from merged chains. Returns the closed rings ordered
/// from the pith outwards, ids renumbered from zero; the pith and border
/// chains and any chain that stayed open are dropped.
pub fn postprocess_chains(
    chains: Vec<Chain>,
    pith: Point,
    params: &PostprocessParams,
) -> (Vec<Chain>, PostprocessStats) {
    if chains.is_empty() {
        return (Vec::new(), PostprocessStats::default());
    }
    let nr = chains[0].nr();
    let mut st = PostState {
        from_postprocess: vec![false; chains.len()],
        slots: chains.into_iter().map(Some).collect(),
        pith,
        nr,
        goodness: ConnectParams {
            th_radial_tolerance: params.th_radial_tolerance,
            th_distribution_size: params.th_distribution_size,
            th_regular_derivative: params.th_regular_derivative,
            neighbourhood_size: params.neighbourhood_size,
            derivative_from_center: false,
        },
        stats: PostprocessStats::default(),
    };

    let mut idx_start = 0;
    'outer: loop {
        let regions = st.build_regions();
        let start = idx_start.min(regions.len().saturating_sub(1));
        for (idx, &(inward, outward)) in regions.iter().enumerate().skip(start) {
            if st.process_region(inward, outward) || st.enough_data(inward, outward) {
                idx_start = idx;
                continue 'outer;
            }
        }
        break;
    }
    st.complete_remaining();
    st.stats.dropped_crossing = st.enforce_nesting();
    let stats = st.stats.clone();

    let mut rings: Vec<Chain> = st
        .slots
        .into_iter()
        .flatten()
        .filter(|c| c.kind == ChainKind::Normal && c.is_closed())
        .collect();
    rings.sort_by(|a, b| a.mean_radial_distance().total_cmp(&b.mean_radial_distance()));
    for (i, ring) in rings.iter_mut().enumerate() {
        ring.set_id(i);
    }
    (rings, stats)
}

/// Chains live in slots so ids stay stable across splits and merges; a
/// removed chain leaves an empty slot.
struct PostState {
    slots: Vec<Option<Chain>>,
    from_postprocess: Vec<bool>,
    pith: Point,
    nr: usize,
    goodness: ConnectParams,
    stats: PostprocessStats,
}

impl PostState {
    fn chain(&self, id: usize) -> &Chain {
        self.slots[id].as_ref().unwrap()
    }

    fn live(&self) -> impl Iterator<Item = &Chain> + '_ {
        self.slots.iter().flatten()
    }

    fn push_chain(&mut self, kind: ChainKind, nodes: Vec<Node>) -> usize {
        let id = self.slots.len();
        self.slots.push(Some(Chain::new(id, kind, self.nr, nodes)));
        self.from_postprocess.push(false);
        id
    }

    fn remove_chain(&mut self, id: usize) {
        self.slots[id] = None;
    }

    /// Closed chains ordered by mean radius paired into concentric regions;
    /// the outermost region has no outer bound when the border stayed open.
    fn build_regions(&self) -> Vec<(usize, Option<usize>)> {
        let mut bounds: Vec<usize> = self.live().filter(|c| c.is_closed()).map(|c| c.id).collect();
        bounds.sort_by(|&a, &b| {
            self.chain(a)
                .mean_radial_distance()
                .total_cmp(&self.chain(b).mean_radial_distance())
                .then(a.cmp(&b))
        });
        (0..bounds.len())
            .map(|i| (bounds[i], bounds.get(i + 1).copied()))
            .collect()
    }

    /// More than half of the chain's nodes lie radially beyond the ring.
    fn mostly_outside(&self, id: usize, ring: usize) -> bool {
        let chain = self.chain(id);
        let ring = self.chain(ring);
        let above = chain
            .nodes()
            .iter()
            .filter(|n| n.radial_distance > ring.radial_distance_near_ray(n.ray_index))
            .count();
        2 * above > chain.size()
    }

    /// Open normal chains lying between the two bounds, ids ascending.
    fn region_members(&self, inward: usize, outward: Option<usize>) -> Vec<usize> {
        self.live()
            .filter(|c| c.kind == ChainKind::Normal && !c.is_closed())
            .map(|c| c.id)
            .filter(|&id| {
                self.mostly_outside(id, inward)
                    && outward.is_none_or(|out| !self.mostly_outside(id, out))
            })
            .collect()
    }

    fn ring_radius_at(&self, ring: usize, ray: usize) -> f64 {
        self.chain(ring).radial_distance_near_ray(ray)
    }

    /// Splits, reconnects and completes fragments of one region. Returns
    /// whether some chain was closed into a ring.
    fn process_region(&mut self, inward: usize, outward: Option<usize>) -> bool {
        let mut completed = false;
        let mut connected = false;
        let mut ch_j: Option<usize> = None;
        let mut done: Vec<usize> = Vec::new();
        loop {
            if connected {
                // A merge can close the chain outright; that counts as a
                // completion and ends work on it.
                let j = ch_j.unwrap();
                if self.chain(j).is_closed() {
                    self.from_postprocess[j] = true;
                    self.stats.completed += 1;
                    completed = true;
                    connected = false;
                    ch_j = None;
                    continue;
                }
            } else {
                if let Some(j) = ch_j.take() {
                    if self.chain(j).is_closed_with_threshold(0.75) {
                        if self.complete_two_ring(j, inward, outward) {
                            completed = true;
                        }
                        continue;
                    }
                }
                // Largest untried open chain of the region.
                ch_j = self
                    .region_members(inward, outward)
                    .into_iter()
                    .filter(|id| !done.contains(id))
                    .max_by_key(|&id| (self.chain(id).size(), usize::MAX - id));
                match ch_j {
                    Some(j) => done.push(j),
                    None => break,
                }
            }
            let j = ch_j.unwrap();
            let pick_a = self.neighbouring_candidate(j, Endpoint::A, inward, outward, None);
            let aux = pick_a.map(|(c, _, _)| c);
            let pick_b = self.neighbouring_candidate(j, Endpoint::B, inward, outward, aux);
            connected = self.connect_radially_closest(j, pick_a, pick_b);
        }
        completed
    }

    /// Candidate for one endpoint: fragments crossing the endpoint ray are
    /// cut there, fragments crossing only the other endpoint are cut there,
    /// detached fragments within the angular neighbourhood join as they
    /// are. The admissible one with the closest offset distribution wins.
    fn neighbouring_candidate(
        &mut self,
        j: usize,
        endpoint: Endpoint,
        inward: usize,
        outward: Option<usize>,
        aux: Option<usize>,
    ) -> Option<(usize, f64, usize)> {
        let node_e = self.chain(j).endpoint(endpoint).clone();
        let ray_e = node_e.ray_index;
        let other_ray = self.chain(j).endpoint(endpoint.opposite()).ray_index;
        let support = self.closest_bound(&node_e, inward, outward);

        let deg_per_ray = 360.0 / self.nr as f64;
        let mut candidates: Vec<usize> = Vec::new();
        for id in self.region_members(inward, outward) {
            if id == j {
                continue;
            }
            let (shares_ray_e, shares_other, overlap_deg) = {
                let cand = self.chain(id);
                let ch_j = self.chain(j);
                let shared = (0..self.nr)
                    .filter(|&t| cand.covers_ray(t) && ch_j.covers_ray(t))
                    .count();
                (
                    cand.node_at_ray(ray_e).is_some(),
                    cand.node_at_ray(other_ray).is_some(),
                    shared as f64 * deg_per_ray,
                )
            };
            if overlap_deg > self.goodness.neighbourhood_size {
                continue;
            }
            if shares_ray_e {
                if let Some(piece) = self.split_keeping_free_piece(id, ray_e, other_ray, j) {
                    candidates.push(piece);
                }
            } else if overlap_deg > 0.0 {
                if shares_other {
                    if let Some(piece) = self.split_keeping_free_piece(id, other_ray, ray_e, j) {
                        candidates.push(piece);
                    }
                }
            } else {
                candidates.push(id);
            }
        }

        // Keep candidates whose facing endpoint is within the neighbourhood.
        let src_angle = ray_angle_deg(ray_e, self.nr);
        candidates.retain(|&c| {
            let facing = ray_angle_deg(
                self.chain(c).endpoint(endpoint.opposite()).ray_index,
                self.nr,
            );
            let d = match endpoint {
                Endpoint::A => angular_distance_deg(facing, src_angle),
                Endpoint::B => angular_distance_deg(src_angle, facing),
            };
            d <= self.goodness.neighbourhood_size
        });

        let mut best: Option<(f64, usize)> = None;
        for c in candidates {
            let (ok, diff) = connectivity_goodness(
                self.chain(support),
                self.chain(j),
                self.chain(c),
                endpoint,
                &self.goodness,
            );
            if ok && best.is_none_or(|(bd, bc)| (diff, c) < (bd, bc)) {
                best = Some((diff, c));
            }
        }
        let (diff, c) = best?;
        if aux == Some(c) {
            return None;
        }
        Some((c, diff, support))
    }

    /// The bounding ring Euclidean-closest to the endpoint node.
    fn closest_bound(&self, node: &Node, inward: usize, outward: Option<usize>) -> usize {
        let Some(out) = outward else { return inward };
        let to_ring = |ring: usize| {
            let r = self.ring_radius_at(ring, node.ray_index);
            let t = ray_angle_deg(node.ray_index, self.nr).to_radians();
            let p = Point::new(self.pith.x + r * t.cos(), self.pith.y + r * t.sin());
            euclidean_distance(node.position(), p)
        };
        if to_ring(inward) <= to_ring(out) {
            inward
        } else {
            out
        }
    }

    /// Cuts chain `id` at `ray` (the node there is dropped) and returns the
    /// piece that shares no ray with chain `j`, cutting once more at
    /// `second_ray` when the piece still overlaps. Pieces are committed.
    fn split_keeping_free_piece(
        &mut self,
        id: usize,
        ray: usize,
        second_ray: usize,
        j: usize,
    ) -> Option<usize> {
        let pieces = self.split_chain_at_ray(id, ray);
        let free = self.pick_free_piece(&pieces, j, ray);
        match free {
            Some(p) => Some(p),
            None => {
                // Both pieces overlap: long fragments wrap around and cross
                // the source twice, so cut the overlapping piece again.
                for p in pieces {
                    if self.slots[p].is_none() || self.chain(p).node_at_ray(second_ray).is_none() {
                        continue;
                    }
                    let again = self.split_chain_at_ray(p, second_ray);
                    if let Some(f) = self.pick_free_piece(&again, j, ray) {
                        return Some(f);
                    }
                }
                None
            }
        }
    }

    /// Of the committed pieces, the one not overlapping chain `j`; when both
    /// are free the one angularly closest to the cut ray wins.
    fn pick_free_piece(&self, pieces: &[usize], j: usize, ray: usize) -> Option<usize> {
        let free: Vec<usize> = pieces
            .iter()
            .copied()
            .filter(|&p| !self.chain(p).intersects(self.chain(j)))
            .collect();
        free.into_iter().min_by_key(|&p| {
            let c = self.chain(p);
            let to_b = rays_between_cw(ray, c.endpoint(Endpoint::B).ray_index, self.nr);
            let to_a = rays_between_cw(c.endpoint(Endpoint::A).ray_index, ray, self.nr);
            (to_b.min(to_a), p)
        })
    }

    /// Replaces an open chain by the two pieces on either side of `ray`.
    /// Pieces shorter than two nodes are dropped with the cut node.
    fn split_chain_at_ray(&mut self, id: usize, ray: usize) -> Vec<usize> {
        let chain = self.chain(id);
        debug_assert!(!chain.is_closed());
        let Some(pos) = chain.nodes().iter().position(|n| n.ray_index == ray) else {
            return vec![id];
        };
        let kind = chain.kind;
        let nodes = chain.nodes().to_vec();
        self.remove_chain(id);
        self.stats.splits += 1;
        let mut out = Vec::new();
        if pos >= 2 {
            out.push(self.push_chain(kind, nodes[..pos].to_vec()));
        }
        if nodes.len() - pos > 2 {
            out.push(self.push_chain(kind, nodes[pos + 1..].to_vec()));
        }
        out
    }

    /// Merges the candidate with the smaller radial difference into `j`,
    /// interpolating the gap against the chosen support ring.
    fn connect_radially_closest(
        &mut self,
        j: usize,
        pick_a: Option<(usize, f64, usize)>,
        pick_b: Option<(usize, f64, usize)>,
    ) -> bool {
        let (cand, endpoint, support) = match (pick_a, pick_b) {
            (None, None) => return false,
            (Some((c, _, s)), None) => (c, Endpoint::A, s),
            (None, Some((c, _, s))) => (c, Endpoint::B, s),
            (Some((ca, da, sa)), Some((cb, db, sb))) => {
                if db < da {
                    (cb, Endpoint::B, sb)
                } else {
                    (ca, Endpoint::A, sa)
                }
            }
        };
        if self.chain(j).size() + self.chain(cand).size() > self.nr {
            return false;
        }
        let (left, right) = match endpoint {
            Endpoint::A => (j, cand),
            Endpoint::B => (cand, j),
        };
        let a = self.chain(left).endpoint(Endpoint::A).clone();
        let b = self.chain(right).endpoint(Endpoint::B).clone();
        let bridge = bridge_nodes(&a, &b, Some(self.chain(support)), self.nr, self.pith);
        let other = self.chain(cand).nodes().to_vec();
        self.slots[j].as_mut().unwrap().absorb(endpoint, bridge, other);
        self.remove_chain(cand);
        self.stats.merges += 1;
        true
    }

    /// Closes a chain by placing its missing nodes at the chain's average
    /// fractional radial position between the two bounding rings.
    fn complete_two_ring(&mut self, j: usize, inward: usize, outward: Option<usize>) -> bool {
        let Some(out) = outward else { return false };
        let chain = self.chain(j);
        let mut sum = 0.0;
        let mut count = 0usize;
        for n in chain.nodes() {
            let rin = self.ring_radius_at(inward, n.ray_index);
            let rout = self.ring_radius_at(out, n.ray_index);
            if (rout - rin).abs() > 1e-9 {
                sum += (n.radial_distance - rin) / (rout - rin);
                count += 1;
            }
        }
        let fraction = if count == 0 { 0.5 } else { sum / count as f64 };
        let a = chain.endpoint(Endpoint::A).clone();
        let b = chain.endpoint(Endpoint::B).clone();
        let gap = rays_between_cw(a.ray_index, b.ray_index, self.nr);
        let mut bridge = Vec::with_capacity(gap);
        for i in 1..=gap {
            let ray = (a.ray_index + i) % self.nr;
            let rin = self.ring_radius_at(inward, ray);
            let rout = self.ring_radius_at(out, ray);
            let r = (rin + fraction * (rout - rin)).max(0.0);
            let t = ray_angle_deg(ray, self.nr).to_radians();
            bridge.push(Node {
                x: self.pith.x + r * t.cos(),
                y: self.pith.y + r * t.sin(),
                ray_index: ray,
                radial_distance: r,
                chain_id: j,
            });
        }
        self.slots[j].as_mut().unwrap().absorb(Endpoint::A, bridge, Vec::new());
        self.from_postprocess[j] = true;
        self.stats.completed += 1;
        true
    }

    /// Recovery for sparse regions: grow the largest fragment with every
    /// admissible fragment regardless of split opportunities, and close it
    /// when the result covers more than half a turn.
    fn enough_data(&mut self, inward: usize, outward: Option<usize>) -> bool {
        let members = self.region_members(inward, outward);
        let Some(&seed) = members
            .iter()
            .max_by_key(|&&id| (self.chain(id).size(), usize::MAX - id))
        else {
            return false;
        };
        loop {
            let mut best: Option<(f64, usize, Endpoint, usize)> = None;
            for id in self.region_members(inward, outward) {
                if id == seed || self.chain(id).intersects(self.chain(seed)) {
                    continue;
                }
                let d_a = rays_between_cw(
                    self.chain(seed).endpoint(Endpoint::A).ray_index,
                    self.chain(id).endpoint(Endpoint::B).ray_index,
                    self.nr,
                );
                let d_b = rays_between_cw(
                    self.chain(id).endpoint(Endpoint::A).ray_index,
                    self.chain(seed).endpoint(Endpoint::B).ray_index,
                    self.nr,
                );
                let endpoint = if d_a <= d_b { Endpoint::A } else { Endpoint::B };
                let node_e = self.chain(seed).endpoint(endpoint).clone();
                let support = self.closest_bound(&node_e, inward, outward);
                let (ok, diff) = connectivity_goodness(
                    self.chain(support),
                    self.chain(seed),
                    self.chain(id),
                    endpoint,
                    &self.goodness,
                );
                if ok && best.is_none_or(|(bd, bc, _, _)| (diff, id) < (bd, bc)) {
                    best = Some((diff, id, endpoint, support));
                }
            }
            let Some((_, cand, endpoint, _)) = best else { break };
            let merged = self.merge_fraction_blend(seed, cand, endpoint, inward, outward);
            if !merged {
                break;
            }
            if self.chain(seed).is_closed() {
                self.from_postprocess[seed] = true;
                self.stats.completed += 1;
                return true;
            }
        }
        if 2 * self.chain(seed).size() > self.nr
            && self.complete_two_ring(seed, inward, outward)
        {
            return true;
        }
        false
    }

    /// Merge used by the recovery path: gap radii blend the fractional
    /// positions of the two seam nodes between the bounding rings.
    fn merge_fraction_blend(
        &mut self,
        seed: usize,
        cand: usize,
        endpoint: Endpoint,
        inward: usize,
        outward: Option<usize>,
    ) -> bool {
        if self.chain(seed).size() + self.chain(cand).size() > self.nr {
            return false;
        }
        let (left, right) = match endpoint {
            Endpoint::A => (seed, cand),
            Endpoint::B => (cand, seed),
        };
        let a = self.chain(left).endpoint(Endpoint::A).clone();
        let b = self.chain(right).endpoint(Endpoint::B).clone();
        let bridge = match outward {
            Some(out) => {
                let frac = |n: &Node| {
                    let rin = self.ring_radius_at(inward, n.ray_index);
                    let rout = self.ring_radius_at(out, n.ray_index);
                    if (rout - rin).abs() > 1e-9 {
                        (n.radial_distance - rin) / (rout - rin)
                    } else {
                        0.5
                    }
                };
                let (fa, fb) = (frac(&a), frac(&b));
                let gap = rays_between_cw(a.ray_index, b.ray_index, self.nr);
                (1..=gap)
                    .map(|i| {
                        let ray = (a.ray_index + i) % self.nr;
                        let f = fa + (fb - fa) * i as f64 / (gap + 1) as f64;
                        let rin = self.ring_radius_at(inward, ray);
                        let rout = self.ring_radius_at(out, ray);
                        let r = (rin + f * (rout - rin)).max(0.0);
                        let t = ray_angle_deg(ray, self.nr).to_radians();
                        Node {
                            x: self.pith.x + r * t.cos(),
                            y: self.pith.y + r * t.sin(),
                            ray_index: ray,
                            radial_distance: r,
                            chain_id: seed,
                        }
                    })
                    .collect()
            }
            None => bridge_nodes(&a, &b, Some(self.chain(inward)), self.nr, self.pith),
        };
        let other = self.chain(cand).nodes().to_vec();
        self.slots[seed].as_mut().unwrap().absorb(endpoint, bridge, other);
        self.remove_chain(cand);
        self.stats.merges += 1;
        true
    }

    /// Final sweep: two-ring completion for chains covering three quarters
    /// of the rays, plain polar fill for nearly closed ones without bounds.
    fn complete_remaining(&mut self) {
        loop {
            let regions = self.build_regions();
            let mut target: Option<(usize, usize, Option<usize>)> = None;
            for &(inward, outward) in &regions {
                for id in self.region_members(inward, outward) {
                    let c = self.chain(id);
                    let eligible = (outward.is_some() && c.is_closed_with_threshold(0.75))
                        || c.is_closed_with_threshold(0.9);
                    if eligible
                        && target.is_none_or(|(t, _, _)| {
                            (self.chain(t).size(), usize::MAX - t) < (c.size(), usize::MAX - id)
                        })
                    {
                        target = Some((id, inward, outward));
                    }
                }
            }
            let Some((id, inward, outward)) = target else { break };
            if !self.complete_two_ring(id, inward, outward) {
                let a = self.chain(id).endpoint(Endpoint::A).clone();
                let b = self.chain(id).endpoint(Endpoint::B).clone();
                let path = bridge_radii(&a, &b, None, self.nr);
                let bridge: Vec<Node> = path
                    .into_iter()
                    .map(|(ray, r)| {
                        let t = ray_angle_deg(ray, self.nr).to_radians();
                        Node {
                            x: self.pith.x + r * t.cos(),
                            y: self.pith.y + r * t.sin(),
                            ray_index: ray,
                            radial_distance: r,
                            chain_id: id,
                        }
                    })
                    .collect();
                self.slots[id].as_mut().unwrap().absorb(Endpoint::A, bridge, Vec::new());
                self.from_postprocess[id] = true;
                self.stats.completed += 1;
            }
        }
    }

    /// Rings must be radially ordered the same way on every ray. Rings that
    /// arrived closed are always kept; rings closed by this stage are then
    /// admitted from the pith outwards and dropped when they cross an
    /// already accepted one.
    fn enforce_nesting(&mut self) -> usize {
        let mut ring_ids: Vec<usize> = self
            .live()
            .filter(|c| c.kind == ChainKind::Normal && c.is_closed())
            .map(|c| c.id)
            .collect();
        ring_ids.sort_by(|&a, &b| {
            self.from_postprocess[a]
                .cmp(&self.from_postprocess[b])
                .then(
                    self.chain(a)
                        .mean_radial_distance()
                        .total_cmp(&self.chain(b).mean_radial_distance()),
                )
                .then(a.cmp(&b))
        });
        let mut accepted: Vec<usize> = Vec::new();
        let mut dropped = 0;
        for id in ring_ids {
            let crosses = accepted
                .iter()
                .any(|&acc| rings_cross(self.chain(id), self.chain(acc)));
            if crosses && self.from_postprocess[id] {
                self.remove_chain(id);
                dropped += 1;
            } else {
                accepted.push(id);
            }
        }
        dropped
    }
}

/// Two closed rings cross when their radial difference changes sign.
fn rings_cross(a: &Chain, b: &Chain) -> bool {
    let nr = a.nr();
    let mut above = false;
    let mut below = false;
    for ray in 0..nr {
        let d = a.radial_distance_near_ray(ray) - b.radial_distance_near_ray(ray);
        if d > 0.0 {
            above = true;
        } else if d < 0.0 {
            below = true;
        }
    }
    above && below
}
