//! Room extraction and the two buffering strategies.
//!
//! Rooms come from the wall set lying near the selected free-space cluster:
//! an opposing wall pair gives a corridor-style TWO_WALL room, two roughly
//! orthogonal pairs give a FOUR_WALL room. The flush strategy finalizes the
//! accumulated buffer whenever the aisle width or principal direction
//! changes; the timer baseline does so at fixed simulated-time intervals.

use crate::freespace::FreeSpaceCluster;
use crate::geometry::{axis_difference, wrap_angle, Line2, Vec2};
use crate::traversability::TravNode;
use crate::walls::WallLandmark;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoomConfig {
    pub strategy: Strategy,
    /// Aisle-width change that triggers a flush, meters.
    pub tau_w: f64,
    /// Direction change that triggers a flush, degrees.
    pub tau_psi_deg: f64,
    /// Timer baseline interval, simulated seconds.
    pub timer_interval: f64,
    /// Candidate walls must pass within this distance of a cluster node.
    pub rho: f64,
    /// Buffer absorbs cluster nodes within this distance of the robot; in
    /// open corridors the connected component spans the whole map, while the
    /// accumulated lower-layer data is what the robot gathered locally.
    pub buffer_radius: f64,
    /// Buffers smaller than this yield no room (transition slivers).
    pub min_buffer_nodes: usize,
    /// Association gates.
    pub assoc_center_dist: f64,
    pub assoc_axis_deg: f64,
    /// Opposing-pair normal anti-parallelism gate, degrees.
    pub opposing_angle_deg: f64,
    /// FOUR_WALL inter-pair orthogonality gate, degrees.
    pub orthogonal_tol_deg: f64,
}

impl Default for RoomConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Flush,
            tau_w: 0.8,
            tau_psi_deg: 30.0,
            timer_interval: 10.0,
            // clusters stand off every wall by lambda_th (edge removal), so
            // the candidate gate must reach past that standoff plus a cell
            rho: 0.9,
            buffer_radius: 2.5,
            min_buffer_nodes: 30,
            assoc_center_dist: 1.0,
            assoc_axis_deg: 20.0,
            opposing_angle_deg: 15.0,
            orthogonal_tol_deg: 15.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Flush,
    Timer,
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flush" => Ok(Self::Flush),
            "timer" => Ok(Self::Timer),
            other => Err(format!("unknown strategy '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoomKind {
    FourWall,
    TwoWall,
}

/// Extracted room geometry (before association / identity assignment).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoomCandidate {
    pub kind: RoomKind,
    pub center: Vec2,
    /// Direction of the longer bounded extent (FOUR_WALL) or of the
    /// corridor midline (TWO_WALL), in [0, pi).
    pub axis: f64,
    /// (len_a, len_b): len_b is None for the unbounded corridor direction.
    pub extents: (f64, Option<f64>),
    /// Observed node span along the unbounded direction (TWO_WALL), used to
    /// truncate the footprint for overlap metrics.
    pub observed_span: f64,
    pub wall_ids: Vec<u32>,
}

/// A tracked room node with a stable id.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Room {
    pub id: u32,
    pub kind: RoomKind,
    pub center: Vec2,
    pub axis: f64,
    pub extents: (f64, Option<f64>),
    pub observed_span: f64,
    pub wall_ids: Vec<u32>,
}

impl Room {
    pub fn from_candidate(id: u32, c: &RoomCandidate) -> Self {
        Self {
            id,
            kind: c.kind,
            center: c.center,
            axis: c.axis,
            extents: c.extents,
            observed_span: c.observed_span,
            wall_ids: c.wall_ids.clone(),
        }
    }
}

struct OrientedWall {
    id: u32,
    /// Representation with the normal pointing out of the cluster.
    line: Line2,
    support: usize,
}

/// Extract a room from the cluster and the nearby wall landmarks.
///
/// Candidate walls are those whose (extent-clipped) line passes within rho
/// of a cluster node. Pairs are opposing candidates with the cluster
/// between them; the best-scoring disjoint pairs decide the room kind.
/// `width_hint` is the aisle width measured while the cluster was gathered;
/// pairs whose separation disagrees with it are demoted, which keeps a
/// transition buffer from grabbing the next segment's wider wall pair.
pub fn extract_room(
    cluster: &FreeSpaceCluster,
    landmarks: &[WallLandmark],
    width_hint: Option<f64>,
    cfg: &RoomConfig,
) -> Option<RoomCandidate> {
    if cluster.nodes.is_empty() {
        return None;
    }
    let centroid = cluster.centroid;

    // candidate walls near the cluster, re-oriented to face out of it
    let mut cands: Vec<OrientedWall> = Vec::new();
    for lm in landmarks {
        let near = cluster.nodes.iter().any(|n| {
            segment_distance(&lm.line, lm.extent, n.center) <= cfg.rho
        });
        if !near {
            continue;
        }
        let mut line = lm.line;
        if line.signed_distance(centroid) > 0.0 {
            line = line.flipped();
        }
        cands.push(OrientedWall { id: lm.id, line, support: lm.observations.len() });
    }
    if cands.len() < 2 {
        return None;
    }

    // score all opposing pairs
    let opp_tol = cfg.opposing_angle_deg.to_radians();
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for a in 0..cands.len() {
        for b in a + 1..cands.len() {
            let (wa, wb) = (&cands[a], &cands[b]);
            let anti = wrap_angle(wa.line.theta_n - wb.line.theta_n - std::f64::consts::PI).abs();
            if anti > opp_tol {
                continue;
            }
            // separation along n_a with wb re-expressed on the opposing side
            let sep = wa.line.d + wb.line.d;
            if sep <= 0.0 {
                continue;
            }
            let between = cluster
                .nodes
                .iter()
                .filter(|n| {
                    wa.line.signed_distance(n.center) < 0.0
                        && wb.line.signed_distance(n.center) < 0.0
                })
                .count() as f64
                / cluster.nodes.len() as f64;
            if between < 0.5 {
                continue;
            }
            // prefer pairs whose midline runs through the cluster
            let mid_off = (wa.line.signed_distance(centroid).abs()
                - wb.line.signed_distance(centroid).abs())
            .abs()
                / sep;
            let mut score = between * (1.0 - mid_off.min(1.0));
            if let Some(w) = width_hint {
                score /= 1.0 + (sep - w).abs() / w.max(0.5);
            }
            pairs.push((a, b, score));
        }
    }
    if pairs.is_empty() {
        return None;
    }
    pairs.sort_by(|x, y| {
        y.2.partial_cmp(&x.2)
            .unwrap()
            .then_with(|| (cands[x.0].support + cands[x.1].support).cmp(&(cands[y.0].support + cands[y.1].support)).reverse())
            .then_with(|| (x.0, x.1).cmp(&(y.0, y.1)))
    });

    let first = pairs[0];
    let orth_lo = (90.0 - cfg.orthogonal_tol_deg).to_radians();
    let orth_hi = (90.0 + cfg.orthogonal_tol_deg).to_radians();
    let second = pairs.iter().skip(1).find(|p| {
        // disjoint walls and roughly orthogonal to the first pair
        let disjoint =
            p.0 != first.0 && p.0 != first.1 && p.1 != first.0 && p.1 != first.1;
        let ang = axis_difference(cands[p.0].line.theta_n, cands[first.0].line.theta_n);
        disjoint && ang >= orth_lo && ang <= orth_hi
    });

    match second {
        Some(second) => {
            let (m1, n1, sep1) = pair_midline(&cands[first.0].line, &cands[first.1].line);
            let (m2, n2, sep2) = pair_midline(&cands[second.0].line, &cands[second.1].line);
            let center = intersect_midlines(n1, m1, n2, m2)?;
            // room extends along each pair's normal by that pair's separation
            let (axis, extents, ids) = if sep1 >= sep2 {
                (
                    axis_of(n1),
                    (sep1, Some(sep2)),
                    vec![cands[first.0].id, cands[first.1].id, cands[second.0].id, cands[second.1].id],
                )
            } else {
                (
                    axis_of(n2),
                    (sep2, Some(sep1)),
                    vec![cands[second.0].id, cands[second.1].id, cands[first.0].id, cands[first.1].id],
                )
            };
            let span = node_span(&cluster.nodes, axis);
            Some(RoomCandidate {
                kind: RoomKind::FourWall,
                center,
                axis,
                extents,
                observed_span: span,
                wall_ids: ids,
            })
        }
        None => {
            let (m, n, sep) = pair_midline(&cands[first.0].line, &cands[first.1].line);
            // corridor direction is along the pair, center on the midline
            let axis = axis_of(Vec2::new(-n.y, n.x));
            let centroid_off = n.dot(&centroid) - m;
            let center = centroid - n * centroid_off;
            let span = node_span(&cluster.nodes, axis);
            Some(RoomCandidate {
                kind: RoomKind::TwoWall,
                center,
                axis,
                extents: (sep, None),
                observed_span: span,
                wall_ids: vec![cands[first.0].id, cands[first.1].id],
            })
        }
    }
}

/// Midline of an opposing pair: returns (offset m, unit normal n, separation)
/// with the midline being { p : n·p = m }.
fn pair_midline(a: &Line2, b: &Line2) -> (f64, Vec2, f64) {
    // both lines face out of the room; along n_a, a sits at d_a and b at -d_b
    let n = a.normal();
    let m = (a.d - b.d) / 2.0;
    (m, n, a.d + b.d)
}

fn intersect_midlines(n1: Vec2, m1: f64, n2: Vec2, m2: f64) -> Option<Vec2> {
    let det = n1.x * n2.y - n1.y * n2.x;
    if det.abs() < 1e-9 {
        return None;
    }
    Some(Vec2::new((m1 * n2.y - m2 * n1.y) / det, (n1.x * m2 - n2.x * m1) / det))
}

fn axis_of(v: Vec2) -> f64 {
    let mut a = v.y.atan2(v.x);
    if a < 0.0 {
        a += std::f64::consts::PI;
    }
    if a >= std::f64::consts::PI {
        a -= std::f64::consts::PI;
    }
    a
}

fn node_span(nodes: &[TravNode], axis: f64) -> f64 {
    let u = Vec2::new(axis.cos(), axis.sin());
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for n in nodes {
        let s = n.center.dot(&u);
        lo = lo.min(s);
        hi = hi.max(s);
    }
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

/// Distance from a point to a landmark's extent-clipped segment.
fn segment_distance(line: &Line2, extent: (f64, f64), p: Vec2) -> f64 {
    let t = line.tangent();
    let s = p.dot(&t).clamp(extent.0, extent.1);
    (line.point_at(s) - p).norm()
}

/// Match a candidate against tracked rooms: same kind, center within the
/// gate, axis within the gate mod pi (FOUR_WALL also accepts a 90-degree
/// rotation with swapped extents). Returns the matched room id.
pub fn associate_room(candidate: &RoomCandidate, rooms: &[Room], cfg: &RoomConfig) -> Option<u32> {
    let axis_tol = cfg.assoc_axis_deg.to_radians();
    let mut best: Option<(f64, u32)> = None;
    for r in rooms {
        if r.kind != candidate.kind {
            continue;
        }
        let dc = (r.center - candidate.center).norm();
        if dc >= cfg.assoc_center_dist {
            continue;
        }
        let da = axis_difference(r.axis, candidate.axis);
        let axis_ok = da < axis_tol
            || (candidate.kind == RoomKind::FourWall
                && (da - std::f64::consts::FRAC_PI_2).abs() < axis_tol);
        if !axis_ok {
            continue;
        }
        if best.map(|(bd, _)| dc < bd).unwrap_or(true) {
            best = Some((dc, r.id));
        }
    }
    best.map(|(_, id)| id)
}

/// One emitted room event.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoomEvent {
    pub t: f64,
    pub keyframe: usize,
    pub room_id: u32,
    pub redetected: bool,
    pub candidate: RoomCandidate,
}

/// Tracked room set (identity assignment through association only).
#[derive(Debug, Clone, Default)]
pub struct RoomTracker {
    pub rooms: Vec<Room>,
    next_id: u32,
}

impl RoomTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Associate or insert; returns (room id, redetected).
    pub fn observe(&mut self, candidate: &RoomCandidate, cfg: &RoomConfig) -> (u32, bool) {
        if let Some(id) = associate_room(candidate, &self.rooms, cfg) {
            let room = self.rooms.iter_mut().find(|r| r.id == id).unwrap();
            // attach support: latest wall set and widest observed span
            for w in &candidate.wall_ids {
                if !room.wall_ids.contains(w) {
                    room.wall_ids.push(*w);
                }
            }
            room.observed_span = room.observed_span.max(candidate.observed_span);
            (id, true)
        } else {
            let id = self.next_id;
            self.next_id += 1;
            self.rooms.push(Room::from_candidate(id, candidate));
            (id, false)
        }
    }

    pub fn get(&self, id: u32) -> Option<&Room> {
        self.rooms.iter().find(|r| r.id == id)
    }
}

/// Aisle-change flush state: indicators are compared against their values at
/// the previous flush, not the previous keyframe, so slow drift still fires.
#[derive(Debug, Clone)]
pub struct FlushState {
    pub last_width: f64,
    pub last_axis: f64,
    pub tau_w: f64,
    pub tau_psi: f64,
}

impl FlushState {
    pub fn new(width: f64, axis: f64, cfg: &RoomConfig) -> Self {
        Self {
            last_width: width,
            last_axis: axis,
            tau_w: cfg.tau_w,
            tau_psi: cfg.tau_psi_deg.to_radians(),
        }
    }

    pub fn should_flush(&self, width: f64, axis: f64) -> bool {
        (width - self.last_width).abs() > self.tau_w
            || axis_difference(axis, self.last_axis) > self.tau_psi
    }

    pub fn mark_flush(&mut self, width: f64, axis: f64) {
        self.last_width = width;
        self.last_axis = axis;
    }
}

/// Accumulated lower-layer data since the last extraction.
#[derive(Debug, Clone, Default)]
struct Buffer {
    cells: BTreeSet<(i64, i64)>,
    nodes: Vec<TravNode>,
    keyframes: Vec<usize>,
}

impl Buffer {
    fn absorb(&mut self, cluster: &FreeSpaceCluster, robot: Vec2, radius: f64, keyframe: usize) {
        for n in &cluster.nodes {
            if (n.center - robot).norm() > radius {
                continue;
            }
            if self.cells.insert(n.cell_index) {
                self.nodes.push(*n);
            }
        }
        self.keyframes.push(keyframe);
    }

    fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn take_cluster(&mut self) -> FreeSpaceCluster {
        let nodes = std::mem::take(&mut self.nodes);
        self.cells.clear();
        self.keyframes.clear();
        FreeSpaceCluster::from_nodes(0, nodes)
    }
}

/// Per-keyframe room-extraction driver for either strategy.
#[derive(Debug, Clone)]
pub struct RoomStrategy {
    strategy: Strategy,
    flush: Option<FlushState>,
    buffer: Buffer,
    last_extract_t: f64,
    width_sum: f64,
    width_count: usize,
}

impl RoomStrategy {
    pub fn new(strategy: Strategy) -> Self {
        Self {
            strategy,
            flush: None,
            buffer: Buffer::default(),
            last_extract_t: 0.0,
            width_sum: 0.0,
            width_count: 0,
        }
    }

    /// Feed one keyframe. Extraction fires per the strategy; the buffer is
    /// cleared on every trigger whether or not a room came out.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        cluster: &FreeSpaceCluster,
        robot: Vec2,
        width: f64,
        axis: f64,
        t: f64,
        keyframe: usize,
        landmarks: &[WallLandmark],
        tracker: &mut RoomTracker,
        cfg: &RoomConfig,
    ) -> Option<RoomEvent> {
        let trigger = match self.strategy {
            Strategy::Flush => match &self.flush {
                None => {
                    self.flush = Some(FlushState::new(width, axis, cfg));
                    false
                }
                Some(f) => f.should_flush(width, axis),
            },
            Strategy::Timer => t - self.last_extract_t >= cfg.timer_interval,
        };

        let mut event = None;
        if trigger {
            event = self.extract(t, keyframe, landmarks, tracker, cfg);
            if let Some(f) = &mut self.flush {
                f.mark_flush(width, axis);
            }
            self.last_extract_t = t;
        }
        self.buffer.absorb(cluster, robot, cfg.buffer_radius, keyframe);
        self.width_sum += width;
        self.width_count += 1;
        event
    }

    /// Final extraction at trajectory end.
    pub fn finish(
        &mut self,
        t: f64,
        keyframe: usize,
        landmarks: &[WallLandmark],
        tracker: &mut RoomTracker,
        cfg: &RoomConfig,
    ) -> Option<RoomEvent> {
        self.extract(t, keyframe, landmarks, tracker, cfg)
    }

    fn extract(
        &mut self,
        t: f64,
        keyframe: usize,
        landmarks: &[WallLandmark],
        tracker: &mut RoomTracker,
        cfg: &RoomConfig,
    ) -> Option<RoomEvent> {
        if self.buffer.nodes.len() < cfg.min_buffer_nodes {
            self.buffer.take_cluster(); // too thin to be a room: discard
            return None;
        }
        let merged = self.buffer.take_cluster();
        let width_hint = if self.width_count > 0 {
            Some(self.width_sum / self.width_count as f64)
        } else {
            None
        };
        self.width_sum = 0.0;
        self.width_count = 0;
        let candidate = extract_room(&merged, landmarks, width_hint, cfg)?;
        let (room_id, redetected) = tracker.observe(&candidate, cfg);
        Some(RoomEvent { t, keyframe, room_id, redetected, candidate })
    }
}
