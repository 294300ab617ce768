//! Free-space clustering backends.
//!
//! The proposed backend builds an 8-connected graph over traversable ground
//! nodes and deletes edges whose endpoints come too close to occupied
//! points; the baseline voxelizes accumulated scans, computes a Euclidean
//! signed distance field, thresholds it, and takes 26-connected components.
//! Both return the component containing the robot.

use crate::geometry::{Pose2, Vec2};
use crate::sensor::Scan;
use crate::traversability::{TravConfig, TravGrid, TravNode};
use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FreespaceError {
    #[error("robot at ({0}, {1}) is not on or near a traversable node")]
    RobotNotOnNode(f64, f64),
    #[error("robot at ({0}, {1}) is not inside mapped free space")]
    RobotNotInFreeSpace(f64, f64),
    #[error("cluster with {0} nodes is too small for width/axis estimation")]
    DegenerateCluster(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Traversability,
    Esdf,
}

impl std::str::FromStr for Backend {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "traversability" => Ok(Self::Traversability),
            "esdf" => Ok(Self::Esdf),
            other => Err(format!("unknown backend '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterConfig {
    /// Edge-disconnect obstacle-proximity threshold, meters.
    pub lambda_th: f64,
    /// ESDF baseline voxel edge, meters; also the occupied-set bucket size.
    pub voxel_size: f64,
    /// Height band of the ESDF baseline volume, meters.
    pub esdf_height_band: (f64, f64),
    pub backend: Backend,
    /// How far from the robot to look for an attachable node when the
    /// robot's own cell has no (kept) node; the sensor cannot observe the
    /// ground directly beneath itself.
    pub robot_attach_radius: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            lambda_th: 0.45,
            voxel_size: 0.2,
            esdf_height_band: (0.1, 2.0),
            backend: Backend::Traversability,
            robot_attach_radius: 2.5,
        }
    }
}

/// Sensed obstacle returns in the robot's clearance band, bucketed on a
/// uniform grid for nearest-distance queries. Distances are exact against
/// the stored points; storage is deduplicated on a fine sub-grid (1/8 of the
/// bucket size) so repeated observations of the same surface stay bounded.
#[derive(Debug, Clone, Default)]
pub struct OccupiedSet {
    bucket: f64,
    cells: HashMap<(i64, i64), Vec<Vec2>>,
    dedup: std::collections::HashSet<(i64, i64)>,
    len: usize,
}

impl OccupiedSet {
    pub fn new(bucket: f64) -> Self {
        Self { bucket, cells: HashMap::new(), dedup: Default::default(), len: 0 }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    fn key(&self, p: Vec2) -> (i64, i64) {
        ((p.x / self.bucket).floor() as i64, (p.y / self.bucket).floor() as i64)
    }

    pub fn insert(&mut self, p: Vec2) {
        let fine = self.bucket / 8.0;
        let fk = ((p.x / fine).floor() as i64, (p.y / fine).floor() as i64);
        if !self.dedup.insert(fk) {
            return;
        }
        self.cells.entry(self.key(p)).or_default().push(p);
        self.len += 1;
    }

    /// Exact distance from `p` to the nearest stored point, searching
    /// outward ring by ring; +inf if nothing within `max_dist`.
    pub fn nearest_distance(&self, p: Vec2, max_dist: f64) -> f64 {
        if self.len == 0 {
            return f64::INFINITY;
        }
        let (ci, cj) = self.key(p);
        let mut best = f64::INFINITY;
        let max_ring = (max_dist / self.bucket).ceil() as i64 + 1;
        for ring in 0..=max_ring {
            // cells in this ring cannot contain anything closer than this
            let ring_min = (ring - 1).max(0) as f64 * self.bucket;
            if ring_min > best || ring_min > max_dist {
                break;
            }
            for dj in -ring..=ring {
                for di in -ring..=ring {
                    if di.abs().max(dj.abs()) != ring {
                        continue;
                    }
                    if let Some(pts) = self.cells.get(&(ci + di, cj + dj)) {
                        for q in pts {
                            best = best.min((q - p).norm());
                        }
                    }
                }
            }
        }
        if best <= max_dist {
            best
        } else {
            f64::INFINITY
        }
    }

    /// All stored points within `r` of `p`.
    pub fn points_within(&self, p: Vec2, r: f64) -> Vec<Vec2> {
        let (ci, cj) = self.key(p);
        let reach = (r / self.bucket).ceil() as i64;
        let mut out = Vec::new();
        for dj in -reach..=reach {
            for di in -reach..=reach {
                if let Some(pts) = self.cells.get(&(ci + di, cj + dj)) {
                    for q in pts {
                        if (q - p).norm() <= r {
                            out.push(*q);
                        }
                    }
                }
            }
        }
        out
    }
}

/// A connected free-space component (ground nodes, or projected voxel
/// columns for the baseline).
#[derive(Debug, Clone)]
pub struct FreeSpaceCluster {
    pub id: u64,
    pub nodes: Vec<TravNode>,
    pub centroid: Vec2,
    pub principal_axis: f64,
    /// (arc-length along trajectory, measured aisle width); filled by the
    /// pipeline as the traverse progresses.
    pub width_profile: Vec<(f64, f64)>,
}

impl FreeSpaceCluster {
    pub fn from_nodes(id: u64, nodes: Vec<TravNode>) -> Self {
        let centroid = if nodes.is_empty() {
            Vec2::zeros()
        } else {
            nodes.iter().fold(Vec2::zeros(), |a, n| a + n.center) / nodes.len() as f64
        };
        let principal_axis = principal_axis(&nodes, centroid);
        Self { id, nodes, centroid, principal_axis, width_profile: Vec::new() }
    }

    pub fn contains_cell(&self, idx: (i64, i64)) -> bool {
        self.nodes.iter().any(|n| n.cell_index == idx)
    }
}

/// Direction of the larger eigenvalue of the node-position covariance,
/// wrapped to [0, pi). Degenerate (equal-eigenvalue) spreads break the tie
/// toward 0.
fn principal_axis(nodes: &[TravNode], centroid: Vec2) -> f64 {
    if nodes.len() < 2 {
        return 0.0;
    }
    let mut cov = Matrix2::zeros();
    for n in nodes {
        let d = n.center - centroid;
        cov += d * d.transpose();
    }
    cov /= nodes.len() as f64;
    let eig = cov.symmetric_eigen();
    let (l0, l1) = (eig.eigenvalues[0], eig.eigenvalues[1]);
    let lmax = l0.max(l1);
    if lmax <= 0.0 || (l0 - l1).abs() <= 1e-9 * lmax {
        return 0.0;
    }
    let col = if l0 > l1 { 0 } else { 1 };
    let v = eig.eigenvectors.column(col);
    let mut a = v.y.atan2(v.x);
    if a < 0.0 {
        a += std::f64::consts::PI;
    }
    if a >= std::f64::consts::PI {
        a -= std::f64::consts::PI;
    }
    a
}

/// Proposed backend: 8-connected graph over traversable nodes, edges deleted
/// when either endpoint is within lambda_th of an occupied point; returns
/// the component containing the robot.
pub fn cluster_traversable(
    grid: &TravGrid,
    trav_cfg: &TravConfig,
    occupied: &OccupiedSet,
    cfg: &ClusterConfig,
    robot: &Pose2,
) -> Result<FreeSpaceCluster, FreespaceError> {
    let nodes = grid.nodes(trav_cfg);
    if nodes.is_empty() {
        return Err(FreespaceError::RobotNotOnNode(robot.x, robot.y));
    }
    let index_of: BTreeMap<(i64, i64), usize> =
        nodes.iter().enumerate().map(|(k, n)| (n.cell_index, k)).collect();
    let clear: Vec<bool> = nodes
        .iter()
        .map(|n| occupied.nearest_distance(n.center, cfg.lambda_th) >= cfg.lambda_th)
        .collect();

    let start = attach_robot(&nodes, grid, trav_cfg, robot, cfg.robot_attach_radius)
        .ok_or(FreespaceError::RobotNotOnNode(robot.x, robot.y))?;

    // BFS over kept edges; the robot's own node is always included
    let mut in_comp = vec![false; nodes.len()];
    in_comp[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(k) = queue.pop_front() {
        if !clear[k] {
            continue; // edges out of a near-obstacle node are all deleted
        }
        let (i, j) = nodes[k].cell_index;
        for dj in -1..=1i64 {
            for di in -1..=1i64 {
                if di == 0 && dj == 0 {
                    continue;
                }
                if let Some(&m) = index_of.get(&(i + di, j + dj)) {
                    if !in_comp[m] && clear[m] {
                        in_comp[m] = true;
                        queue.push_back(m);
                    }
                }
            }
        }
    }
    let members: Vec<TravNode> = nodes
        .into_iter()
        .zip(in_comp)
        .filter_map(|(n, keep)| keep.then_some(n))
        .collect();
    Ok(FreeSpaceCluster::from_nodes(0, members))
}

fn attach_robot(
    nodes: &[TravNode],
    grid: &TravGrid,
    trav_cfg: &TravConfig,
    robot: &Pose2,
    attach_radius: f64,
) -> Option<usize> {
    let rp = robot.translation();
    let rcell = grid.cell_index(rp);
    if grid.is_traversable(rcell, trav_cfg) {
        return nodes.iter().position(|n| n.cell_index == rcell);
    }
    let mut best: Option<(f64, usize)> = None;
    for (k, n) in nodes.iter().enumerate() {
        let d = (n.center - rp).norm();
        if d <= attach_radius && best.map(|(bd, _)| d < bd).unwrap_or(true) {
            best = Some((d, k));
        }
    }
    best.map(|(_, k)| k)
}

// ---------------------------------------------------------------------------
// Exact squared Euclidean distance transform (per-axis lower-envelope passes)
// ---------------------------------------------------------------------------

const INF: f64 = 1e20;

/// 1-D squared distance transform: out[i] = min_j (in[j] + (i-j)^2).
fn dt_1d(input: &[f64], output: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = input.len();
    if n == 0 {
        return;
    }
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let vk = v[k];
            let s = ((input[q] + (q * q) as f64) - (input[vk] + (vk * vk) as f64))
                / (2.0 * q as f64 - 2.0 * vk as f64);
            if s > z[k] {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
            if k == 0 {
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            k -= 1;
        }
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        output[q] = input[v[k]] + d * d;
    }
}

// ---------------------------------------------------------------------------
// ESDF voxel baseline
// ---------------------------------------------------------------------------

const VOX_UNKNOWN: u8 = 0;
const VOX_FREE: u8 = 1;
const VOX_OCC: u8 = 2;

/// Occupancy volume over the scenario extent, carved incrementally from
/// scans. A voxel is free once any sensor ray traverses it without a hit
/// inside; it becomes (and stays) occupied when a return lands inside the
/// configured height band.
#[derive(Debug, Clone)]
pub struct EsdfMap {
    pub voxel: f64,
    nx: usize,
    ny: usize,
    nz: usize,
    band: (f64, f64),
    state: Vec<u8>,
}

impl EsdfMap {
    pub fn new(extent: (f64, f64), cfg: &ClusterConfig) -> Self {
        let voxel = cfg.voxel_size;
        let nx = (extent.0 / voxel).ceil() as usize;
        let ny = (extent.1 / voxel).ceil() as usize;
        let nz = (cfg.esdf_height_band.1 / voxel).ceil() as usize;
        Self {
            voxel,
            nx,
            ny,
            nz,
            band: cfg.esdf_height_band,
            state: vec![VOX_UNKNOWN; nx * ny * nz],
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.ny + j) * self.nx + i
    }

    fn voxel_of(&self, x: f64, y: f64, z: f64) -> Option<(usize, usize, usize)> {
        if x < 0.0 || y < 0.0 || z < 0.0 {
            return None;
        }
        let i = (x / self.voxel).floor() as usize;
        let j = (y / self.voxel).floor() as usize;
        let k = (z / self.voxel).floor() as usize;
        (i < self.nx && j < self.ny && k < self.nz).then_some((i, j, k))
    }

    /// Carve the rays of one scan: traversed voxels become free, the return
    /// voxel occupied (when its height is inside the band).
    pub fn integrate_scan(&mut self, scan: &Scan, pose: &Pose2, sensor_height: f64) {
        let o2 = pose.translation();
        let origin = [o2.x, o2.y, sensor_height];
        for pt in &scan.points {
            let w2 = pose.transform_point(Vec2::new(pt.p.x, pt.p.y));
            let end = [w2.x, w2.y, pt.p.z];
            let hit = self.voxel_of(end[0], end[1], end[2]);
            self.march(origin, end, hit);
            if let Some((i, j, k)) = hit {
                if end[2] > self.band.0 && end[2] < self.band.1 {
                    let idx = self.at(i, j, k);
                    self.state[idx] = VOX_OCC;
                }
            }
        }
    }

    /// Amanatides-Woo voxel traversal from `from` to `to`, marking traversed
    /// voxels free (the hit voxel excluded; occupied voxels never revert).
    fn march(&mut self, from: [f64; 3], to: [f64; 3], hit: Option<(usize, usize, usize)>) {
        let dir = [to[0] - from[0], to[1] - from[1], to[2] - from[2]];
        let len = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
        if len == 0.0 {
            return;
        }
        let mut ijk = [
            (from[0] / self.voxel).floor() as i64,
            (from[1] / self.voxel).floor() as i64,
            (from[2] / self.voxel).floor() as i64,
        ];
        let mut t_max = [0.0f64; 3];
        let mut t_delta = [0.0f64; 3];
        let mut step = [0i64; 3];
        for a in 0..3 {
            if dir[a] > 0.0 {
                step[a] = 1;
                let next = (ijk[a] + 1) as f64 * self.voxel;
                t_max[a] = (next - from[a]) / dir[a];
                t_delta[a] = self.voxel / dir[a];
            } else if dir[a] < 0.0 {
                step[a] = -1;
                let next = ijk[a] as f64 * self.voxel;
                t_max[a] = (next - from[a]) / dir[a];
                t_delta[a] = self.voxel / -dir[a];
            } else {
                step[a] = 0;
                t_max[a] = f64::INFINITY;
                t_delta[a] = f64::INFINITY;
            }
        }
        let dims = [self.nx as i64, self.ny as i64, self.nz as i64];
        loop {
            let inside = (0..3).all(|a| ijk[a] >= 0 && ijk[a] < dims[a]);
            if inside {
                let cur = (ijk[0] as usize, ijk[1] as usize, ijk[2] as usize);
                if Some(cur) != hit {
                    let idx = self.at(cur.0, cur.1, cur.2);
                    if self.state[idx] == VOX_UNKNOWN {
                        self.state[idx] = VOX_FREE;
                    }
                }
            }
            let a = if t_max[0] <= t_max[1] && t_max[0] <= t_max[2] {
                0
            } else if t_max[1] <= t_max[2] {
                1
            } else {
                2
            };
            if t_max[a] >= 1.0 {
                break;
            }
            ijk[a] += step[a];
            t_max[a] += t_delta[a];
            // once out of the volume moving away from it, further steps are moot
            if ijk[a] < -1 || ijk[a] > dims[a] {
                break;
            }
        }
    }

    /// 3-D squared-distance field (voxel units) to the nearest occupied voxel.
    fn distance_sq(&self) -> Vec<f64> {
        let (nx, ny, nz) = (self.nx, self.ny, self.nz);
        let mut d: Vec<f64> = self
            .state
            .iter()
            .map(|&s| if s == VOX_OCC { 0.0 } else { INF })
            .collect();
        let m = nx.max(ny).max(nz);
        let mut v = vec![0usize; m];
        let mut z = vec![0.0f64; m + 1];
        let mut buf = vec![0.0f64; m];
        let mut line = vec![0.0f64; m];
        // x pass
        for k in 0..nz {
            for j in 0..ny {
                let base = (k * ny + j) * nx;
                dt_1d(&d[base..base + nx], &mut buf[..nx], &mut v, &mut z);
                d[base..base + nx].copy_from_slice(&buf[..nx]);
            }
        }
        // y pass
        for k in 0..nz {
            for i in 0..nx {
                for j in 0..ny {
                    line[j] = d[(k * ny + j) * nx + i];
                }
                dt_1d(&line[..ny], &mut buf[..ny], &mut v, &mut z);
                for j in 0..ny {
                    d[(k * ny + j) * nx + i] = buf[j];
                }
            }
        }
        // z pass
        for j in 0..ny {
            for i in 0..nx {
                for k in 0..nz {
                    line[k] = d[(k * ny + j) * nx + i];
                }
                dt_1d(&line[..nz], &mut buf[..nz], &mut v, &mut z);
                for k in 0..nz {
                    d[(k * ny + j) * nx + i] = buf[k];
                }
            }
        }
        d
    }

    /// Baseline clustering: keep free voxels with ESDF >= lambda_th, take
    /// 26-connected components, return the robot's component projected to
    /// the 2-D grid.
    pub fn cluster(
        &self,
        robot: &Pose2,
        sensor_height: f64,
        cfg: &ClusterConfig,
    ) -> Result<FreeSpaceCluster, FreespaceError> {
        let dist_sq = self.distance_sq();
        let lam_vox = cfg.lambda_th / self.voxel;
        let lam_sq = lam_vox * lam_vox;
        let kept: Vec<bool> = self
            .state
            .iter()
            .zip(dist_sq.iter())
            .map(|(&s, &d2)| s == VOX_FREE && d2 >= lam_sq)
            .collect();

        let start = self
            .find_start(robot, sensor_height, &kept, cfg.robot_attach_radius)
            .ok_or(FreespaceError::RobotNotInFreeSpace(robot.x, robot.y))?;

        let dims = [self.nx as i64, self.ny as i64, self.nz as i64];
        let mut seen = vec![false; self.state.len()];
        let sidx = self.at(start.0, start.1, start.2);
        seen[sidx] = true;
        let mut queue = VecDeque::from([start]);
        let mut columns: BTreeSet<(i64, i64)> = BTreeSet::new();
        while let Some((i, j, k)) = queue.pop_front() {
            columns.insert((i as i64, j as i64));
            for dk in -1..=1i64 {
                for dj in -1..=1i64 {
                    for di in -1..=1i64 {
                        if di == 0 && dj == 0 && dk == 0 {
                            continue;
                        }
                        let (ni, nj, nk) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                        if ni < 0 || nj < 0 || nk < 0 || ni >= dims[0] || nj >= dims[1] || nk >= dims[2] {
                            continue;
                        }
                        let (ni, nj, nk) = (ni as usize, nj as usize, nk as usize);
                        let idx = self.at(ni, nj, nk);
                        if kept[idx] && !seen[idx] {
                            seen[idx] = true;
                            queue.push_back((ni, nj, nk));
                        }
                    }
                }
            }
        }
        let nodes: Vec<TravNode> = columns
            .into_iter()
            .map(|(i, j)| TravNode {
                center: Vec2::new((i as f64 + 0.5) * self.voxel, (j as f64 + 0.5) * self.voxel),
                cell_index: (i, j),
            })
            .collect();
        Ok(FreeSpaceCluster::from_nodes(0, nodes))
    }

    fn find_start(
        &self,
        robot: &Pose2,
        sensor_height: f64,
        kept: &[bool],
        attach_radius: f64,
    ) -> Option<(usize, usize, usize)> {
        let (ri, rj, rk) = self.voxel_of(robot.x, robot.y, sensor_height)?;
        if kept[self.at(ri, rj, rk)] {
            return Some((ri, rj, rk));
        }
        // nearest kept voxel within the attach radius, deterministic order
        let reach = (attach_radius / self.voxel).ceil() as i64;
        let mut best: Option<(f64, (usize, usize, usize))> = None;
        for dk in -reach..=reach {
            for dj in -reach..=reach {
                for di in -reach..=reach {
                    let (i, j, k) = (ri as i64 + di, rj as i64 + dj, rk as i64 + dk);
                    if i < 0 || j < 0 || k < 0
                        || i >= self.nx as i64 || j >= self.ny as i64 || k >= self.nz as i64
                    {
                        continue;
                    }
                    let (i, j, k) = (i as usize, j as usize, k as usize);
                    if !kept[self.at(i, j, k)] {
                        continue;
                    }
                    let d = ((di * di + dj * dj + dk * dk) as f64).sqrt() * self.voxel;
                    if d <= attach_radius && best.map(|(bd, _)| d < bd).unwrap_or(true) {
                        best = Some((d, (i, j, k)));
                    }
                }
            }
        }
        best.map(|(_, v)| v)
    }

    /// Number of 26-connected components among kept voxels that contain at
    /// least one voxel column over each of the given 2-D probe points.
    /// Used by tests to verify under-segmentation against ground truth.
    pub fn component_of_column(&self, p: Vec2, cfg: &ClusterConfig) -> Option<u32> {
        let dist_sq = self.distance_sq();
        let lam_vox = cfg.lambda_th / self.voxel;
        let lam_sq = lam_vox * lam_vox;
        let kept: Vec<bool> = self
            .state
            .iter()
            .zip(dist_sq.iter())
            .map(|(&s, &d2)| s == VOX_FREE && d2 >= lam_sq)
            .collect();
        let labels = self.label_components(&kept);
        let i = (p.x / self.voxel).floor() as i64;
        let j = (p.y / self.voxel).floor() as i64;
        if i < 0 || j < 0 || i >= self.nx as i64 || j >= self.ny as i64 {
            return None;
        }
        (0..self.nz)
            .filter_map(|k| labels[self.at(i as usize, j as usize, k)])
            .next()
    }

    fn label_components(&self, kept: &[bool]) -> Vec<Option<u32>> {
        let mut labels: Vec<Option<u32>> = vec![None; kept.len()];
        let mut next = 0u32;
        let dims = [self.nx as i64, self.ny as i64, self.nz as i64];
        for k0 in 0..self.nz {
            for j0 in 0..self.ny {
                for i0 in 0..self.nx {
                    let idx0 = self.at(i0, j0, k0);
                    if !kept[idx0] || labels[idx0].is_some() {
                        continue;
                    }
                    let label = next;
                    next += 1;
                    labels[idx0] = Some(label);
                    let mut queue = VecDeque::from([(i0, j0, k0)]);
                    while let Some((i, j, k)) = queue.pop_front() {
                        for dk in -1..=1i64 {
                            for dj in -1..=1i64 {
                                for di in -1..=1i64 {
                                    let (ni, nj, nk) =
                                        (i as i64 + di, j as i64 + dj, k as i64 + dk);
                                    if ni < 0 || nj < 0 || nk < 0
                                        || ni >= dims[0] || nj >= dims[1] || nk >= dims[2]
                                    {
                                        continue;
                                    }
                                    let (ni, nj, nk) = (ni as usize, nj as usize, nk as usize);
                                    let idx = self.at(ni, nj, nk);
                                    if kept[idx] && labels[idx].is_none() {
                                        labels[idx] = Some(label);
                                        queue.push_back((ni, nj, nk));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        labels
    }
}

/// Aisle indicators for the room-extraction strategy: principal direction
/// of the nodes around the robot and twice the median perpendicular
/// clearance of those nodes.
///
/// The direction is measured over the near-robot subset: in an open
/// corridor the connected component spans the whole map, whose global
/// covariance says nothing about the local aisle.
pub fn width_and_axis(
    cluster: &FreeSpaceCluster,
    occupied: &OccupiedSet,
    robot: &Pose2,
) -> Result<(f64, f64), FreespaceError> {
    if cluster.nodes.len() < 3 {
        return Err(FreespaceError::DegenerateCluster(cluster.nodes.len()));
    }
    let rp = robot.translation();
    let near: Vec<&TravNode> = {
        let sel: Vec<&TravNode> =
            cluster.nodes.iter().filter(|n| (n.center - rp).norm() <= 2.0).collect();
        if sel.len() >= 3 {
            sel
        } else {
            cluster.nodes.iter().collect()
        }
    };
    let near_owned: Vec<TravNode> = near.iter().map(|n| **n).collect();
    let centroid =
        near_owned.iter().fold(Vec2::zeros(), |a, n| a + n.center) / near_owned.len() as f64;
    let axis = principal_axis(&near_owned, centroid);
    let u_par = Vec2::new(axis.cos(), axis.sin());
    let u_perp = Vec2::new(-axis.sin(), axis.cos());
    let mut widths: Vec<f64> = Vec::new();
    for n in &near {
        let mut plus = f64::INFINITY;
        let mut minus = f64::INFINITY;
        for q in occupied.points_within(n.center, 6.0) {
            let d = q - n.center;
            let perp = d.dot(&u_perp);
            let par = d.dot(&u_par).abs();
            // only count obstacles nearly abeam; diagonal corner points
            // would understate the aisle width
            if perp.abs() >= 2.0 * par {
                if perp >= 0.0 {
                    plus = plus.min(perp);
                } else {
                    minus = minus.min(-perp);
                }
            }
        }
        // clearance to both sides gives the aisle width at this node
        if plus.is_finite() && minus.is_finite() {
            widths.push(plus + minus);
        }
    }
    let width = if widths.is_empty() {
        // no side obstacles in range: fall back to the node spread
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for n in &cluster.nodes {
            let s = n.center.dot(&u_perp);
            lo = lo.min(s);
            hi = hi.max(s);
        }
        hi - lo
    } else {
        widths.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let m = widths.len();
        if m % 2 == 1 {
            widths[m / 2]
        } else {
            0.5 * (widths[m / 2 - 1] + widths[m / 2])
        }
    };
    Ok((width, axis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::{raycast, LidarConfig};
    use crate::traversability::TravCell;
    use crate::world::{build_canonical, CanonicalScenario, ObstacleSegment, Scenario};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn make_grid(cells: &[(i64, i64)], cell_size: f64) -> TravGrid {
        let mut grid = TravGrid::new(cell_size);
        for &idx in cells {
            grid.cells.insert(
                idx,
                TravCell { z_mean: 0.0, normal_z: 1.0, score: 1.0, n_points: 5, observed_count: 1 },
            );
        }
        grid
    }

    fn rect_cells(x0: f64, y0: f64, x1: f64, y1: f64, cell: f64) -> Vec<(i64, i64)> {
        let mut out = Vec::new();
        let (i0, j0) = ((x0 / cell) as i64, (y0 / cell) as i64);
        let (i1, j1) = ((x1 / cell) as i64, (y1 / cell) as i64);
        for j in j0..j1 {
            for i in i0..i1 {
                out.push((i, j));
            }
        }
        out
    }

    fn wall_points(p0: Vec2, p1: Vec2, spacing: f64) -> Vec<Vec2> {
        let len = (p1 - p0).norm();
        let dir = (p1 - p0) / len;
        let n = (len / spacing).ceil() as usize;
        (0..=n).map(|k| p0 + dir * (k as f64 * spacing).min(len)).collect()
    }

    #[test]
    fn open_floor_single_cluster() {
        let cfg = ClusterConfig::default();
        let trav = TravConfig::default();
        let grid = make_grid(&rect_cells(0.0, 0.0, 2.0, 2.0, 0.2), 0.2);
        let occ = OccupiedSet::new(cfg.voxel_size);
        let robot = Pose2::new(1.0, 1.0, 0.0);
        let c = cluster_traversable(&grid, &trav, &occ, &cfg, &robot).unwrap();
        assert_eq!(c.nodes.len(), 100);
    }

    #[test]
    fn doorway_splits_two_rooms() {
        // two 4x4 m rooms joined by a 0.8 m doorway in the wall x = 4
        let cfg = ClusterConfig::default();
        let trav = TravConfig::default();
        let cell = 0.2;
        let mut cells = rect_cells(0.0, 0.0, 4.0, 4.0, cell);
        cells.extend(rect_cells(4.0, 0.0, 8.0, 4.0, cell));
        let grid = make_grid(&cells, cell);
        let mut occ = OccupiedSet::new(cfg.voxel_size);
        for p in wall_points(Vec2::new(4.0, 0.0), Vec2::new(4.0, 1.6), 0.05) {
            occ.insert(p);
        }
        for p in wall_points(Vec2::new(4.0, 2.4), Vec2::new(4.0, 4.0), 0.05) {
            occ.insert(p);
        }
        let robot = Pose2::new(2.0, 2.0, 0.0);
        let c = cluster_traversable(&grid, &trav, &occ, &cfg, &robot).unwrap();
        // oracle: ground truth distance from each cell center to the wall
        // segments; the doorway (0.8 m < 2*lambda) admits no kept edge
        for n in &c.nodes {
            assert!(n.center.x < 4.0, "far-room node {} leaked into cluster", n.center);
        }
        let room_a_far_from_wall: Vec<_> = rect_cells(0.0, 0.0, 4.0, 4.0, cell)
            .into_iter()
            .filter(|&(i, j)| {
                let p = Vec2::new((i as f64 + 0.5) * cell, (j as f64 + 0.5) * cell);
                let d0 = ObstacleSegment::wall((4.0, 0.0), (4.0, 1.6)).distance_to_point(p);
                let d1 = ObstacleSegment::wall((4.0, 2.4), (4.0, 4.0)).distance_to_point(p);
                d0.min(d1) >= cfg.lambda_th
            })
            .collect();
        for idx in room_a_far_from_wall {
            assert!(c.contains_cell(idx), "cell {idx:?} missing from room cluster");
        }
    }

    #[test]
    fn walkways_split_at_rails() {
        // two walkways with a rail line of occupied points between them
        let cfg = ClusterConfig::default();
        let trav = TravConfig::default();
        let cell = 0.2;
        let mut cells = rect_cells(0.0, 0.0, 6.0, 2.0, cell);
        cells.extend(rect_cells(0.0, 3.0, 6.0, 5.0, cell));
        let grid = make_grid(&cells, cell);
        let mut occ = OccupiedSet::new(cfg.voxel_size);
        for p in wall_points(Vec2::new(0.0, 2.0), Vec2::new(6.0, 2.0), 0.05) {
            occ.insert(p);
        }
        for p in wall_points(Vec2::new(0.0, 3.0), Vec2::new(6.0, 3.0), 0.05) {
            occ.insert(p);
        }
        let robot = Pose2::new(3.0, 1.0, 0.0);
        let c = cluster_traversable(&grid, &trav, &occ, &cfg, &robot).unwrap();
        assert!(!c.nodes.is_empty());
        for n in &c.nodes {
            assert!(n.center.y < 2.5, "far walkway node {} in robot cluster", n.center);
        }
    }

    #[test]
    fn near_wall_robot_node_still_returned() {
        let cfg = ClusterConfig::default();
        let trav = TravConfig::default();
        let grid = make_grid(&rect_cells(0.0, 0.0, 2.0, 2.0, 0.2), 0.2);
        let mut occ = OccupiedSet::new(cfg.voxel_size);
        for p in wall_points(Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0), 0.05) {
            occ.insert(p);
        }
        // robot's own cell is within lambda of the wall: isolated but returned
        let robot = Pose2::new(1.0, 0.1, 0.0);
        let c = cluster_traversable(&grid, &trav, &occ, &cfg, &robot).unwrap();
        assert!(c.contains_cell(grid.cell_index(Vec2::new(1.0, 0.1))));
    }

    #[test]
    fn lambda_monotonicity() {
        let trav = TravConfig::default();
        let cell = 0.2;
        let mut cells = rect_cells(0.0, 0.0, 4.0, 4.0, cell);
        cells.extend(rect_cells(4.0, 0.0, 8.0, 4.0, cell));
        let grid = make_grid(&cells, cell);
        let mut occ = OccupiedSet::new(0.2);
        for p in wall_points(Vec2::new(4.0, 0.0), Vec2::new(4.0, 1.4), 0.05) {
            occ.insert(p);
        }
        for p in wall_points(Vec2::new(4.0, 2.6), Vec2::new(4.0, 4.0), 0.05) {
            occ.insert(p);
        }
        let robot = Pose2::new(2.0, 2.0, 0.0);
        let mut prev: Option<Vec<(i64, i64)>> = None;
        for lam in [0.2, 0.35, 0.5, 0.65] {
            let cfg = ClusterConfig { lambda_th: lam, ..Default::default() };
            let c = cluster_traversable(&grid, &trav, &occ, &cfg, &robot).unwrap();
            let set: Vec<(i64, i64)> = c.nodes.iter().map(|n| n.cell_index).collect();
            if let Some(p) = &prev {
                // growing lambda only removes reachable nodes, never adds
                for idx in &set {
                    assert!(p.contains(idx), "lambda {lam} grew the cluster at {idx:?}");
                }
            }
            prev = Some(set);
        }
    }

    #[test]
    fn width_and_axis_corridor() {
        let cfg = ClusterConfig::default();
        let trav = TravConfig::default();
        let cell = 0.2;
        let grid = make_grid(&rect_cells(0.0, 0.0, 8.0, 2.0, cell), cell);
        let mut occ = OccupiedSet::new(cfg.voxel_size);
        for p in wall_points(Vec2::new(0.0, 0.0), Vec2::new(8.0, 0.0), 0.05) {
            occ.insert(p);
        }
        for p in wall_points(Vec2::new(0.0, 2.0), Vec2::new(8.0, 2.0), 0.05) {
            occ.insert(p);
        }
        let robot = Pose2::new(4.0, 1.0, 0.0);
        let c = cluster_traversable(&grid, &trav, &occ, &cfg, &robot).unwrap();
        let (w, a) = width_and_axis(&c, &occ, &robot).unwrap();
        assert!(a.abs() < 1e-6, "axis {a}");
        assert!((w - 2.0).abs() <= cell + 1e-6, "width {w}");
    }

    #[test]
    fn width_and_axis_rotated_corridor() {
        let cfg = ClusterConfig::default();
        let trav = TravConfig::default();
        let cell = 0.2;
        let grid = make_grid(&rect_cells(0.0, 0.0, 2.0, 8.0, cell), cell);
        let mut occ = OccupiedSet::new(cfg.voxel_size);
        for p in wall_points(Vec2::new(0.0, 0.0), Vec2::new(0.0, 8.0), 0.05) {
            occ.insert(p);
        }
        for p in wall_points(Vec2::new(2.0, 0.0), Vec2::new(2.0, 8.0), 0.05) {
            occ.insert(p);
        }
        let robot = Pose2::new(1.0, 4.0, 0.0);
        let c = cluster_traversable(&grid, &trav, &occ, &cfg, &robot).unwrap();
        let (_, a) = width_and_axis(&c, &occ, &robot).unwrap();
        assert!((a - std::f64::consts::FRAC_PI_2).abs() < 1e-6, "axis {a}");
    }

    #[test]
    fn square_cluster_axis_tie_breaks_to_zero() {
        let trav = TravConfig::default();
        let grid = make_grid(&rect_cells(0.0, 0.0, 3.0, 3.0, 0.2), 0.2);
        let occ = OccupiedSet::new(0.2);
        let cfg = ClusterConfig::default();
        let robot = Pose2::new(1.5, 1.5, 0.0);
        let c = cluster_traversable(&grid, &trav, &occ, &cfg, &robot).unwrap();
        assert_eq!(c.principal_axis, 0.0);
    }

    #[test]
    fn degenerate_cluster_rejected() {
        let c = FreeSpaceCluster::from_nodes(
            0,
            vec![TravNode { center: Vec2::new(0.1, 0.1), cell_index: (0, 0) }],
        );
        let occ = OccupiedSet::new(0.2);
        let err = width_and_axis(&c, &occ, &Pose2::identity());
        assert!(matches!(err, Err(FreespaceError::DegenerateCluster(1))));
    }

    #[test]
    fn occupied_set_nearest_distance() {
        let mut occ = OccupiedSet::new(0.2);
        occ.insert(Vec2::new(1.0, 1.0));
        occ.insert(Vec2::new(3.0, 1.0));
        let d = occ.nearest_distance(Vec2::new(0.0, 1.0), 10.0);
        assert!((d - 1.0).abs() < 1e-12);
        let d = occ.nearest_distance(Vec2::new(2.1, 1.0), 10.0);
        assert!((d - 0.9).abs() < 1e-12);
        assert!(occ.nearest_distance(Vec2::new(50.0, 50.0), 5.0).is_infinite());
    }

    // -- ESDF baseline ------------------------------------------------------

    fn scan_world(sc: &Scenario, poses: &[Pose2], cfg: &ClusterConfig) -> EsdfMap {
        let lidar = LidarConfig { range_noise_sigma: 0.0, ..Default::default() };
        let mut map = EsdfMap::new(sc.extent, cfg);
        for pose in poses {
            let scan = raycast(sc, pose, &lidar, &mut ChaCha12Rng::seed_from_u64(0)).unwrap();
            map.integrate_scan(&scan, pose, lidar.sensor_height);
        }
        map
    }

    #[test]
    fn esdf_single_room_erodes_to_interior() {
        // 4x4 m enclosed room
        let mut sc = build_canonical(CanonicalScenario::FourRooms);
        sc.obstacles = vec![
            ObstacleSegment::wall((0.0, 0.0), (4.0, 0.0)),
            ObstacleSegment::wall((4.0, 0.0), (4.0, 4.0)),
            ObstacleSegment::wall((4.0, 4.0), (0.0, 4.0)),
            ObstacleSegment::wall((0.0, 4.0), (0.0, 0.0)),
        ];
        let cfg = ClusterConfig::default();
        let poses = [
            Pose2::new(1.2, 1.2, 0.0),
            Pose2::new(2.8, 1.2, 1.8),
            Pose2::new(2.0, 2.8, -1.2),
        ];
        let map = scan_world(&sc, &poses, &cfg);
        let robot = poses[0];
        let c = map.cluster(&robot, 0.5, &cfg).unwrap();
        assert!(!c.nodes.is_empty());
        // oracle: morphological erosion of the room polygon by lambda_th
        for n in &c.nodes {
            let d = sc.nearest_obstacle_distance(n.center, cfg.esdf_height_band);
            assert!(
                d >= cfg.lambda_th - cfg.voxel_size * 1.5,
                "kept column {} is {d} m from a wall",
                n.center
            );
            assert!(n.center.x > 0.0 && n.center.x < 4.0 && n.center.y > 0.0 && n.center.y < 4.0);
        }
        // eroded interior is covered (allowing a voxel of boundary slack)
        let interior = rect_cells(0.8, 0.8, 3.2, 3.2, cfg.voxel_size);
        let covered = interior.iter().filter(|i| c.contains_cell(**i)).count();
        assert!(
            covered as f64 >= 0.9 * interior.len() as f64,
            "only {covered}/{} eroded-interior columns covered",
            interior.len()
        );
    }

    #[test]
    fn esdf_doorway_separates_rooms() {
        let mut sc = build_canonical(CanonicalScenario::FourRooms);
        sc.obstacles = vec![
            ObstacleSegment::wall((0.0, 0.0), (8.0, 0.0)),
            ObstacleSegment::wall((8.0, 0.0), (8.0, 4.0)),
            ObstacleSegment::wall((8.0, 4.0), (0.0, 4.0)),
            ObstacleSegment::wall((0.0, 4.0), (0.0, 0.0)),
            ObstacleSegment::wall((4.0, 0.0), (4.0, 1.6)),
            ObstacleSegment::wall((4.0, 2.4), (4.0, 4.0)),
        ];
        let cfg = ClusterConfig::default();
        let poses = [
            Pose2::new(1.5, 2.0, 0.0),
            Pose2::new(2.5, 2.0, 0.0),
            Pose2::new(5.5, 2.0, std::f64::consts::PI),
            Pose2::new(6.5, 2.0, std::f64::consts::PI),
        ];
        let map = scan_world(&sc, &poses, &cfg);
        let c = map.cluster(&poses[0], 0.5, &cfg).unwrap();
        for n in &c.nodes {
            assert!(n.center.x < 4.0, "ESDF cluster leaked through 0.8 m doorway at {}", n.center);
        }
        let ca = map.component_of_column(Vec2::new(2.0, 2.0), &cfg);
        let cb = map.component_of_column(Vec2::new(6.0, 2.0), &cfg);
        assert!(ca.is_some() && cb.is_some());
        assert_ne!(ca, cb, "rooms must be separate ESDF components");
    }

    #[test]
    fn esdf_open_corridor_bridges_over_rails() {
        let sc = build_canonical(CanonicalScenario::OpenCorridor);
        let cfg = ClusterConfig::default();
        let poses: Vec<Pose2> = sc.trajectory.iter().step_by(3).copied().collect();
        let map = scan_world(&sc, &poses, &cfg);
        let near = map.component_of_column(Vec2::new(6.0, 1.0), &cfg);
        let far = map.component_of_column(Vec2::new(6.0, 4.6), &cfg);
        assert!(near.is_some() && far.is_some());
        assert_eq!(near, far, "3-D free space must span both walkways over the rails");
    }
}
