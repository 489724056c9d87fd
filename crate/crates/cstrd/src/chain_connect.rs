//! Chain merging.
//!
//! Chains from the sampling stage are fragments of rings. This stage merges
//! them over nine passes with progressively relaxed thresholds. Each pass
//! walks support chains from longest to shortest; chains visible from the
//! support are candidates, and a candidate pair is merged when the joint is
//! radially consistent with the support (tolerance at the seam, similar
//! radial offset distributions, bounded derivative across the bridge) and no
//! other chain occupies the gap. Merging interpolates nodes over the gap rays
//! so chains never have holes.

use crate::geometry::{
    angular_distance_deg, euclidean_distance, ray_angle_deg, rays_between_cw, Chain, ChainKind,
    Endpoint, Node, Point,
};
use crate::sampling::{visible_chains, RadialDirection};

/// Endpoint window length used by the similarity conditions.
pub const NODES_WINDOW: usize = 20;

/// Thresholds of one merge pass.
#[derive(Debug, Clone)]
pub struct ConnectParams {
    /// Allowed relative change of the seam radial offset.
    pub th_radial_tolerance: f64,
    /// Width of the offset distributions, in standard deviations.
    pub th_distribution_size: f64,
    /// Allowed ratio between bridge and chain derivative maxima.
    pub th_regular_derivative: f64,
    /// Maximum angular gap bridged, in degrees.
    pub neighbourhood_size: f64,
    /// Bridge node radii: plain polar interpolation when true, offsets
    /// relative to the support chain when false.
    pub derivative_from_center: bool,
}

/// The nine per-pass threshold sets, in order.
pub fn iteration_schedule() -> [ConnectParams; 9] {
    let col = |tol, dist, deriv, nbhd, center| ConnectParams {
        th_radial_tolerance: tol,
        th_distribution_size: dist,
        th_regular_derivative: deriv,
        neighbourhood_size: nbhd,
        derivative_from_center: center,
    };
    [
        col(0.1, 2.0, 1.5, 10.0, false),
        col(0.2, 2.0, 1.5, 10.0, false),
        col(0.1, 3.0, 1.5, 22.0, false),
        col(0.2, 3.0, 1.5, 22.0, false),
        col(0.1, 3.0, 1.5, 45.0, false),
        col(0.2, 3.0, 1.5, 45.0, false),
        col(0.1, 2.0, 2.0, 22.0, true),
        col(0.2, 3.0, 2.0, 45.0, true),
        col(0.2, 3.0, 2.0, 45.0, true),
    ]
}

/// Symmetric boolean matrix recording which chain pairs share a ray.
#[derive(Debug, Clone)]
pub struct IntersectionMatrix {
    n: usize,
    words: usize,
    rows: Vec<Vec<u64>>,
}

impl IntersectionMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn intersects(&self, j: usize, k: usize) -> bool {
        self.rows[j][k / 64] & (1 << (k % 64)) != 0
    }

    fn set(&mut self, j: usize, k: usize, value: bool) {
        let (w, b) = (k / 64, 1u64 << (k % 64));
        if value {
            self.rows[j][w] |= b;
        } else {
            self.rows[j][w] &= !b;
        }
    }

    /// Refreshes row and column `j` from current chain coverage.
    fn recompute_row(&mut self, j: usize, chains: &[Chain]) {
        for k in 0..self.n {
            let v = j == k || chains[j].intersects(&chains[k]);
            self.set(j, k, v);
            self.set(k, j, v);
        }
    }

    /// Drops chain `k`, shifting higher ids down by one.
    fn remove(&mut self, k: usize) {
        self.rows.remove(k);
        self.n -= 1;
        let (wi, bi) = (k / 64, k % 64);
        let low_mask = (1u64 << bi) - 1;
        for row in &mut self.rows {
            row[wi] = (row[wi] & low_mask) | ((row[wi] >> 1) & !low_mask);
            for w in wi + 1..self.words {
                row[w - 1] |= (row[w] & 1) << 63;
                row[w] >>= 1;
            }
        }
    }

    /// Semantic equality on the live `n` x `n` area.
    pub fn same_as(&self, other: &IntersectionMatrix) -> bool {
        self.n == other.n
            && (0..self.n)
                .all(|j| (0..self.n).all(|k| self.intersects(j, k) == other.intersects(j, k)))
    }
}

/// Builds the matrix from chain ray coverage. Chain ids must equal indices.
pub fn compute_intersection_matrix(chains: &[Chain]) -> IntersectionMatrix {
    let n = chains.len();
    let words = n.div_ceil(64).max(1);
    let mut m = IntersectionMatrix {
        n,
        words,
        rows: vec![vec![0; words]; n],
    };
    for j in 0..n {
        m.set(j, j, true);
        for k in j + 1..n {
            if chains[j].intersects(&chains[k]) {
                m.set(j, k, true);
                m.set(k, j, true);
            }
        }
    }
    m
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
    (mean, var.sqrt())
}

/// Radial offsets of `window` nodes against the support chain, one per node.
fn radial_offsets(window: &[Node], support: &Chain) -> Vec<f64> {
    window
        .iter()
        .map(|n| (n.radial_distance - support.radial_distance_near_ray(n.ray_index)).abs())
        .collect()
}

/// True when the `mean +- th * std` ranges of both offset sets intersect.
pub fn similar_radial_distances(set_j: &[f64], set_k: &[f64], th_distribution_size: f64) -> bool {
    let (mj, sj) = mean_std(set_j);
    let (mk, sk) = mean_std(set_k);
    let (lo_j, hi_j) = (mj - th_distribution_size * sj, mj + th_distribution_size * sj);
    let (lo_k, hi_k) = (mk - th_distribution_size * sk, mk + th_distribution_size * sk);
    lo_j <= hi_k && lo_k <= hi_j
}

/// Largest centred derivative `|r[s+1] - r[s-1]| / 2` over interior indices
/// of `seq` within `[from, to]`; 0 when the range has no interior index.
fn max_centred_derivative(seq: &[f64], from: usize, to: usize) -> f64 {
    let mut max = 0.0f64;
    for s in from.max(1)..=to.min(seq.len().saturating_sub(2)) {
        max = max.max((seq[s + 1] - seq[s - 1]).abs() / 2.0);
    }
    max
}

/// Derivative regularity across a bridge: the largest centred derivative at
/// the bridge radii (seam endpoints included) must not exceed the largest
/// one inside the two endpoint windows, scaled by the tolerance.
pub fn regular_derivative(
    left: &[f64],
    bridge: &[f64],
    right: &[f64],
    th_regular_derivative: f64,
) -> bool {
    let mut seq = Vec::with_capacity(left.len() + bridge.len() + right.len());
    seq.extend_from_slice(left);
    seq.extend_from_slice(bridge);
    seq.extend_from_slice(right);
    let seam_from = left.len().saturating_sub(1);
    let seam_to = left.len() + bridge.len();
    let max_bridge = max_centred_derivative(&seq, seam_from, seam_to);
    let max_windows = max_centred_derivative(left, 0, left.len())
        .max(max_centred_derivative(right, 0, right.len()));
    max_bridge <= max_windows * th_regular_derivative
}

/// Radii of the nodes interpolated over the gap rays between endpoint `a`
/// (the clockwise end of the left chain) and endpoint `b` (the start of the
/// right chain), exclusive. With a support chain, the interpolation is on
/// the radial offset to the support; without one it is plain polar.
pub(crate) fn bridge_radii(
    a: &Node,
    b: &Node,
    support: Option<&Chain>,
    nr: usize,
) -> Vec<(usize, f64)> {
    let gap = rays_between_cw(a.ray_index, b.ray_index, nr);
    let mut out = Vec::with_capacity(gap);
    let (d_a, d_b) = match support {
        Some(s) => (
            a.radial_distance - s.radial_distance_near_ray(a.ray_index),
            b.radial_distance - s.radial_distance_near_ray(b.ray_index),
        ),
        None => (a.radial_distance, b.radial_distance),
    };
    for i in 1..=gap {
        let ray = (a.ray_index + i) % nr;
        let f = i as f64 / (gap + 1) as f64;
        let d = d_a + (d_b - d_a) * f;
        let r = match support {
            Some(s) => (s.radial_distance_near_ray(ray) + d).max(0.0),
            None => d,
        };
        out.push((ray, r));
    }
    out
}

/// Bridge radii lifted to nodes at their polar positions.
pub(crate) fn bridge_nodes(
    a: &Node,
    b: &Node,
    support: Option<&Chain>,
    nr: usize,
    pith: Point,
) -> Vec<Node> {
    bridge_radii(a, b, support, nr)
        .into_iter()
        .map(|(ray, r)| {
            let t = ray_angle_deg(ray, nr).to_radians();
            Node {
                x: pith.x + r * t.cos(),
                y: pith.y + r * t.sin(),
                ray_index: ray,
                radial_distance: r,
                chain_id: a.chain_id,
            }
        })
        .collect()
}

/// True when some chain other than the excluded ones has a node inside the
/// radial band around `path`. The band half-width at each ray is
/// `band_fraction` times the local offset to `support` (times the radius
/// itself without a support).
pub fn exist_chain_overlapping(
    chains: &[Chain],
    path: &[(usize, f64)],
    exclude: &[usize],
    band_fraction: f64,
    support: Option<&Chain>,
) -> bool {
    for &(ray, r) in path {
        let local = match support {
            Some(s) => (r - s.radial_distance_near_ray(ray)).abs(),
            None => r,
        };
        let half = band_fraction * local;
        for chain in chains {
            if exclude.contains(&chain.id) {
                continue;
            }
            if let Some(node) = chain.node_at_ray(ray) {
                if (node.radial_distance - r).abs() <= half {
                    return true;
                }
            }
        }
    }
    false
}

/// Both seam endpoints must lie in the support chain's angular domain.
fn check_endpoints(support: &Chain, ch_j: &Chain, candidate: &Chain, endpoint: Endpoint) -> bool {
    support.covers_ray(ch_j.endpoint(endpoint).ray_index)
        && support.covers_ray(candidate.endpoint(endpoint.opposite()).ray_index)
}

/// Left/right roles of a joint in clockwise walk order: at endpoint `A` the
/// candidate continues the chain, at `B` it precedes it.
fn seam<'c>(
    ch_j: &'c Chain,
    candidate: &'c Chain,
    endpoint: Endpoint,
) -> (&'c Chain, &'c Chain) {
    match endpoint {
        Endpoint::A => (ch_j, candidate),
        Endpoint::B => (candidate, ch_j),
    }
}

/// Radial similarity of a joint: bounded derivative across the bridge, and
/// either overlapping offset distributions or a seam offset within tolerance.
/// Also returns the distance between the two offset distribution means.
pub(crate) fn similarity_conditions(
    support: &Chain,
    ch_j: &Chain,
    candidate: &Chain,
    endpoint: Endpoint,
    params: &ConnectParams,
) -> (bool, f64) {
    let nr = ch_j.nr();
    let set_j = radial_offsets(ch_j.window_from(endpoint, NODES_WINDOW), support);
    let set_k = radial_offsets(
        candidate.window_from(endpoint.opposite(), NODES_WINDOW),
        support,
    );
    let distribution_distance = (mean_std(&set_j).0 - mean_std(&set_k).0).abs();
    let similar = similar_radial_distances(&set_j, &set_k, params.th_distribution_size);

    let (left, right) = seam(ch_j, candidate, endpoint);
    let (a, b) = (left.endpoint(Endpoint::A), right.endpoint(Endpoint::B));
    let off = |n: &Node| (n.radial_distance - support.radial_distance_near_ray(n.ray_index)).abs();
    let (d_left, d_right) = (off(a), off(b));
    let tol = params.th_radial_tolerance;
    let radial_tol = d_left * (1.0 - tol) <= d_right && d_right <= d_left * (1.0 + tol);

    let sup = (!params.derivative_from_center).then_some(support);
    let bridge: Vec<f64> = bridge_radii(a, b, sup, nr).iter().map(|&(_, r)| r).collect();
    let radii = |w: &[Node]| w.iter().map(|n| n.radial_distance).collect::<Vec<f64>>();
    let left_w = radii(left.window_from(Endpoint::A, NODES_WINDOW));
    let right_w = radii(right.window_from(Endpoint::B, NODES_WINDOW));
    let deriv_ok = regular_derivative(&left_w, &bridge, &right_w, params.th_regular_derivative);

    (deriv_ok && (similar || radial_tol), distribution_distance)
}

/// Full joint admission test: combined size fits one turn, both seam rays lie
/// over the support, and the similarity conditions hold.
pub fn connectivity_goodness(
    support: &Chain,
    ch_j: &Chain,
    candidate: &Chain,
    endpoint: Endpoint,
    params: &ConnectParams,
) -> (bool, f64) {
    let size_ok = ch_j.size() + candidate.size() <= ch_j.nr();
    let endpoints_ok = check_endpoints(support, ch_j, candidate, endpoint);
    let (similarity_ok, distribution_distance) =
        similarity_conditions(support, ch_j, candidate, endpoint, params);
    (size_ok && endpoints_ok && similarity_ok, distribution_distance)
}

/// Per-pass counters, indexed by pass.
#[derive(Debug, Clone, Default)]
pub struct ConnectStats {
    /// Chain count after each pass.
    pub chain_counts: Vec<usize>,
    /// Merges performed in each pass.
    pub merges: Vec<usize>,
    /// Nearly-closed chains completed in each pass.
    pub fills: Vec<usize>,
}

/// Runs all nine merge passes.
pub fn connect_chains(chains: Vec<Chain>, pith: Point) -> (Vec<Chain>, ConnectStats) {
    let mut chains = chains;
    let mut stats = ConnectStats::default();
    for params in iteration_schedule() {
        let (next, merges, fills) = run_pass(chains, pith, &params);
        chains = next;
        stats.chain_counts.push(chains.len());
        stats.merges.push(merges);
        stats.fills.push(fills);
    }
    (chains, stats)
}

/// Runs a single merge pass with the given thresholds.
pub fn connect_pass(chains: Vec<Chain>, pith: Point, params: &ConnectParams) -> Vec<Chain> {
    run_pass(chains, pith, params).0
}

struct SystemState {
    chains: Vec<Chain>,
    m: IntersectionMatrix,
    /// Chain ids ordered by descending size; rebuilt when the count changes.
    order: Vec<usize>,
    next_pos: usize,
    count_at_pick: usize,
    pith: Point,
    nr: usize,
    merges: usize,
    fills: usize,
}

fn run_pass(chains: Vec<Chain>, pith: Point, params: &ConnectParams) -> (Vec<Chain>, usize, usize) {
    debug_assert!(chains.iter().enumerate().all(|(i, c)| c.id == i));
    if chains.is_empty() {
        return (chains, 0, 0);
    }
    let nr = chains[0].nr();
    let mut st = SystemState {
        m: compute_intersection_matrix(&chains),
        order: Vec::new(),
        next_pos: 0,
        count_at_pick: chains.len(),
        pith,
        nr,
        merges: 0,
        fills: 0,
        chains,
    };
    st.sort_order();
    while st.next_pos < st.order.len() {
        let mut ch_i = st.order[st.next_pos];
        st.count_at_pick = st.chains.len();
        st.fill_if_no_overlap(ch_i, params);
        let mut outward = st.candidates(ch_i, RadialDirection::Outward);
        let mut inward = st.candidates(ch_i, RadialDirection::Inward);
        for side in 0..2 {
            let mut jp = 0;
            loop {
                let list = if side == 0 { &outward } else { &inward };
                if jp >= list.len() {
                    break;
                }
                let ch_j = list[jp];
                if st.chains[ch_j].is_closed() {
                    jp += 1;
                    continue;
                }
                let full: Vec<usize> = list.clone();
                let no_inter_j: Vec<usize> = full
                    .iter()
                    .copied()
                    .filter(|&c| !st.m.intersects(c, ch_j))
                    .collect();
                let kb = st.closest_logic(ch_j, &full, &no_inter_j, ch_i, Endpoint::B, params);
                let ka = st.closest_logic(ch_j, &full, &no_inter_j, ch_i, Endpoint::A, params);
                let picked = select_closest_one(&st.chains, ch_j, ka, kb);
                let merged = match picked {
                    Some((ch_k, endpoint)) => st.try_connect(ch_j, ch_k, endpoint, ch_i, params),
                    None => false,
                };
                if merged {
                    let ch_k = picked.unwrap().0;
                    remove_id(&mut outward, ch_k);
                    remove_id(&mut inward, ch_k);
                    ch_i = shifted(ch_i, ch_k);
                    let ch_j = shifted(ch_j, ch_k);
                    let list = if side == 0 { &outward } else { &inward };
                    // Retry the merged chain: more joins may now fit.
                    jp = list.iter().position(|&c| c == ch_j).unwrap_or(list.len());
                } else {
                    jp += 1;
                }
            }
        }
        st.update_status(ch_i, &outward, &inward);
    }
    // Final sweep: close whatever now spans nearly the whole circle.
    for id in 0..st.chains.len() {
        st.fill_if_no_overlap(id, params);
    }
    (st.chains, st.merges, st.fills)
}

/// Removes a deleted id from a list and shifts higher ids down.
fn remove_id(list: &mut Vec<usize>, k: usize) {
    list.retain(|&c| c != k);
    for c in list {
        if *c > k {
            *c -= 1;
        }
    }
}

fn shifted(id: usize, k: usize) -> usize {
    debug_assert_ne!(id, k);
    if id > k {
        id - 1
    } else {
        id
    }
}

/// Picks the seam with the shorter Euclidean jump; ties prefer the smaller
/// candidate id, then endpoint `B`.
fn select_closest_one(
    chains: &[Chain],
    ch_j: usize,
    ka: Option<usize>,
    kb: Option<usize>,
) -> Option<(usize, Endpoint)> {
    match (ka, kb) {
        (None, None) => None,
        (Some(a), None) => Some((a, Endpoint::A)),
        (None, Some(b)) => Some((b, Endpoint::B)),
        (Some(a), Some(b)) => {
            let d_a = euclidean_distance(
                chains[ch_j].endpoint(Endpoint::A).position(),
                chains[a].endpoint(Endpoint::B).position(),
            );
            let d_b = euclidean_distance(
                chains[ch_j].endpoint(Endpoint::B).position(),
                chains[b].endpoint(Endpoint::A).position(),
            );
            if d_a < d_b || (d_a == d_b && a < b) {
                Some((a, Endpoint::A))
            } else {
                Some((b, Endpoint::B))
            }
        }
    }
}

impl SystemState {
    fn sort_order(&mut self) {
        let mut order: Vec<usize> = (0..self.chains.len()).collect();
        order.sort_by(|&a, &b| {
            self.chains[b]
                .size()
                .cmp(&self.chains[a].size())
                .then(a.cmp(&b))
        });
        self.order = order;
    }

    /// Open normal chains visible from the support on the given side.
    fn candidates(&self, support: usize, direction: RadialDirection) -> Vec<usize> {
        visible_chains(&self.chains, &self.chains[support], direction)
            .into_iter()
            .filter(|&c| self.chains[c].kind == ChainKind::Normal && !self.chains[c].is_closed())
            .collect()
    }

    /// Completes a chain covering at least 90% of the rays by polar
    /// interpolation over its gap, unless another chain crosses the gap band.
    fn fill_if_no_overlap(&mut self, id: usize, params: &ConnectParams) {
        let chain = &self.chains[id];
        if chain.is_closed() || !chain.is_closed_with_threshold(0.9) {
            return;
        }
        let a = chain.endpoint(Endpoint::A).clone();
        let b = chain.endpoint(Endpoint::B).clone();
        let path = bridge_radii(&a, &b, None, self.nr);
        if exist_chain_overlapping(&self.chains, &path, &[id], params.th_radial_tolerance, None) {
            return;
        }
        let bridge = bridge_nodes(&a, &b, None, self.nr, self.pith);
        self.chains[id].absorb(Endpoint::A, bridge, Vec::new());
        self.m.recompute_row(id, &self.chains);
        self.fills += 1;
    }

    /// Closest-pair search from one endpoint with the mutual-closest
    /// requirement: the candidate's own closest chain must be the source.
    fn closest_logic(
        &self,
        ch_j: usize,
        candidates: &[usize],
        no_inter_j: &[usize],
        ch_i: usize,
        endpoint: Endpoint,
        params: &ConnectParams,
    ) -> Option<usize> {
        let ch_k = self.get_closest(ch_j, no_inter_j, ch_i, endpoint, params)?;
        let no_inter_k: Vec<usize> = candidates
            .iter()
            .copied()
            .filter(|&c| !self.m.intersects(c, ch_k))
            .collect();
        let symmetric = self.get_closest(ch_k, &no_inter_k, ch_i, endpoint.opposite(), params);
        let fits = self.chains[ch_j].size() + self.chains[ch_k].size() <= self.nr;
        (symmetric == Some(ch_j) && fits).then_some(ch_k)
    }

    /// First admissible chain by angular distance from the endpoint, refined
    /// to the radially closest chain among those sharing rays with it.
    fn get_closest(
        &self,
        src: usize,
        pool: &[usize],
        ch_i: usize,
        endpoint: Endpoint,
        params: &ConnectParams,
    ) -> Option<usize> {
        let nbhd = self.chains_in_neighbourhood(src, pool, endpoint, params.neighbourhood_size);
        for &cand in &nbhd {
            let (ok, _) = connectivity_goodness(
                &self.chains[ch_i],
                &self.chains[src],
                &self.chains[cand],
                endpoint,
                params,
            );
            if ok {
                return Some(self.refine_by_radial(src, ch_i, endpoint, cand, &nbhd, params));
            }
        }
        None
    }

    /// Facing endpoints within `nbhd_deg` of the source endpoint, walking
    /// away from the chain, sorted by angular distance then id.
    fn chains_in_neighbourhood(
        &self,
        src: usize,
        pool: &[usize],
        endpoint: Endpoint,
        nbhd_deg: f64,
    ) -> Vec<usize> {
        let nr = self.nr;
        let src_angle = ray_angle_deg(self.chains[src].endpoint(endpoint).ray_index, nr);
        let mut scored: Vec<(f64, usize)> = pool
            .iter()
            .copied()
            .filter(|&c| c != src && !self.chains[c].is_closed())
            .filter_map(|c| {
                let facing = ray_angle_deg(
                    self.chains[c].endpoint(endpoint.opposite()).ray_index,
                    nr,
                );
                let d = match endpoint {
                    Endpoint::A => angular_distance_deg(facing, src_angle),
                    Endpoint::B => angular_distance_deg(src_angle, facing),
                };
                (d <= nbhd_deg).then_some((d, c))
            })
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        scored.into_iter().map(|(_, c)| c).collect()
    }

    /// Among neighbourhood chains sharing a ray with the angular pick, the
    /// one with the smallest offset-distribution distance wins.
    fn refine_by_radial(
        &self,
        src: usize,
        ch_i: usize,
        endpoint: Endpoint,
        angular_pick: usize,
        nbhd: &[usize],
        params: &ConnectParams,
    ) -> usize {
        let mut best: Option<(f64, usize)> = None;
        for &c in nbhd {
            if !self.m.intersects(c, angular_pick) {
                continue;
            }
            let (ok, dist) = connectivity_goodness(
                &self.chains[ch_i],
                &self.chains[src],
                &self.chains[c],
                endpoint,
                params,
            );
            if ok && best.is_none_or(|(bd, bc)| (dist, c) < (bd, bc)) {
                best = Some((dist, c));
            }
        }
        best.map(|(_, c)| c).unwrap_or(angular_pick)
    }

    /// Merges `ch_k` into `ch_j` across `endpoint` unless the gap band is
    /// occupied. Returns whether the merge happened.
    fn try_connect(
        &mut self,
        ch_j: usize,
        ch_k: usize,
        endpoint: Endpoint,
        ch_i: usize,
        params: &ConnectParams,
    ) -> bool {
        if ch_k == ch_i || ch_k == ch_j {
            return false;
        }
        if self.chains[ch_j].size() + self.chains[ch_k].size() > self.nr {
            return false;
        }
        let (left, right) = match endpoint {
            Endpoint::A => (ch_j, ch_k),
            Endpoint::B => (ch_k, ch_j),
        };
        let a = self.chains[left].endpoint(Endpoint::A).clone();
        let b = self.chains[right].endpoint(Endpoint::B).clone();
        let sup = (!params.derivative_from_center).then(|| &self.chains[ch_i]);
        let mut path = bridge_radii(&a, &b, sup, self.nr);
        path.push((a.ray_index, a.radial_distance));
        path.push((b.ray_index, b.radial_distance));
        if exist_chain_overlapping(
            &self.chains,
            &path,
            &[ch_j, ch_k, ch_i],
            params.th_radial_tolerance,
            sup,
        ) {
            return false;
        }
        let bridge = bridge_nodes(&a, &b, sup, self.nr, self.pith);
        let other = self.chains[ch_k].nodes().to_vec();
        self.chains[ch_j].absorb(endpoint, bridge, other);
        self.delete_chain(ch_k);
        self.m.recompute_row(shifted(ch_j, ch_k), &self.chains);
        if self.chains.len() <= 64 {
            debug_assert!(self.m.same_as(&compute_intersection_matrix(&self.chains)));
        }
        self.merges += 1;
        true
    }

    fn delete_chain(&mut self, k: usize) {
        self.chains.remove(k);
        for i in k..self.chains.len() {
            self.chains[i].set_id(i);
        }
        self.m.remove(k);
    }

    /// Advances the support pointer. When merges changed the system, the
    /// order is rebuilt and iteration continues at the longest chain touched
    /// this round, unless that is the support itself.
    fn update_status(&mut self, ch_i: usize, outward: &[usize], inward: &[usize]) {
        if self.chains.len() != self.count_at_pick {
            self.sort_order();
            let mut longest = ch_i;
            for &c in outward.iter().chain(inward) {
                if self.chains[c].size() > self.chains[longest].size() {
                    longest = c;
                }
            }
            let pos = self.order.iter().position(|&c| c == longest).unwrap();
            self.next_pos = if longest == ch_i { pos + 1 } else { pos };
        } else {
            self.next_pos += 1;
        }
    }
}
