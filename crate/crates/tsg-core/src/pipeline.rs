//! Full per-keyframe pipeline: simulate, segment, cluster, extract rooms,
//! and jointly optimize the hierarchical graph, over one or more traverses
//! of a scenario's closed trajectory.

use crate::freespace::{
    cluster_traversable, width_and_axis, Backend, ClusterConfig, EsdfMap, FreeSpaceCluster,
    OccupiedSet,
};
use crate::geometry::{Pose2, Vec2};
use crate::posegraph::{
    info_from_sigma2, info_from_sigma3, Factor, FactorGraph, GraphDelta, OptStats, PgoConfig,
};
use crate::rooms::{RoomConfig, RoomEvent, RoomKind, RoomStrategy, RoomTracker, Strategy};
use crate::sensor::{odometry, raycast, LidarConfig, OdometryNoise};
use crate::traversability::{bgk_smooth, global_update, segment_ground, TravConfig, TravGrid};
use crate::walls::{extract_walls, WallConfig, WallMap};
use crate::world::{Scenario, CLEARANCE_HEIGHT};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Sensor(#[from] crate::sensor::SensorError),
    #[error(transparent)]
    Traversability(#[from] crate::traversability::TravError),
    #[error(transparent)]
    Graph(#[from] crate::posegraph::GraphError),
    #[error("trajectory has fewer than 2 waypoints")]
    TrajectoryTooShort,
}

/// All module configurations in one place. Serialized keys mirror the
/// config-file sections (trav.*, cluster.*, walls.*, rooms.*).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub lidar: LidarConfig,
    pub odom: OdometryNoise,
    pub trav: TravConfig,
    pub cluster: ClusterConfig,
    pub walls: WallConfig,
    pub rooms: RoomConfig,
    pub pgo: PgoConfig,
    /// Robot speed for simulated timestamps, m/s.
    pub speed_mps: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            lidar: LidarConfig::default(),
            odom: OdometryNoise::default(),
            trav: TravConfig::default(),
            cluster: ClusterConfig::default(),
            walls: WallConfig::default(),
            rooms: RoomConfig::default(),
            pgo: PgoConfig::default(),
            speed_mps: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub events: Vec<RoomEvent>,
    /// Keyframes per single traverse (the first one; later traverses reuse
    /// the waypoints after the shared start).
    pub traverse_len: usize,
    pub n_traverses: usize,
    pub gt_traj: Vec<Pose2>,
    pub est_traj: Vec<Pose2>,
    pub dr_traj: Vec<Pose2>,
    pub sim_times: Vec<f64>,
    pub graph: FactorGraph,
    pub opt_stats: Vec<OptStats>,
    pub trav_grid: TravGrid,
    pub occupied: OccupiedSet,
    pub clusters: Vec<Option<FreeSpaceCluster>>,
    pub wall_map: WallMap,
    pub tracker: RoomTracker,
}

impl RunArtifacts {
    /// Traverse index (0-based) of a keyframe.
    pub fn traverse_of(&self, keyframe: usize) -> usize {
        if self.traverse_len <= 1 {
            return 0;
        }
        keyframe.saturating_sub(1) / (self.traverse_len - 1)
    }

    pub fn t_pgo_total(&self) -> f64 {
        self.opt_stats.iter().map(|s| s.wall_time_s).sum()
    }

    pub fn t_pgo_mean(&self) -> f64 {
        if self.opt_stats.is_empty() {
            0.0
        } else {
            self.t_pgo_total() / self.opt_stats.len() as f64
        }
    }
}

/// Concatenate `n` traverses of the closed trajectory (the shared start
/// waypoint is not duplicated at the seams).
pub fn concat_traverses(trajectory: &[Pose2], n: usize) -> Vec<Pose2> {
    let mut out = trajectory.to_vec();
    for _ in 1..n {
        out.extend_from_slice(&trajectory[1..]);
    }
    out
}

/// Run the full pipeline over `n_traverses` loops of the scenario
/// trajectory. Deterministic for a fixed (scenario, config, seed).
pub fn run_traverses(
    scenario: &Scenario,
    cfg: &PipelineConfig,
    seed: u64,
    n_traverses: usize,
) -> Result<RunArtifacts, PipelineError> {
    if scenario.trajectory.len() < 2 {
        return Err(PipelineError::TrajectoryTooShort);
    }
    let gt_traj = concat_traverses(&scenario.trajectory, n_traverses);
    let n_kf = gt_traj.len();

    let mut graph = FactorGraph::new();
    let mut wall_map = WallMap::new();
    let mut tracker = RoomTracker::new();
    let mut strategy = RoomStrategy::new(cfg.rooms.strategy);
    let mut grid = TravGrid::new(cfg.trav.cell_size);
    let mut occupied = OccupiedSet::new(cfg.cluster.voxel_size);
    let mut esdf = (cfg.cluster.backend == Backend::Esdf)
        .then(|| EsdfMap::new(scenario.extent, &cfg.cluster));
    let mut room_pairs_added: BTreeSet<(u32, u32, u32)> = BTreeSet::new();

    let mut est_traj: Vec<Pose2> = Vec::with_capacity(n_kf);
    let mut dr_traj: Vec<Pose2> = Vec::with_capacity(n_kf);
    let mut sim_times: Vec<f64> = Vec::with_capacity(n_kf);
    let mut opt_stats: Vec<OptStats> = Vec::with_capacity(n_kf);
    let mut clusters: Vec<Option<FreeSpaceCluster>> = Vec::with_capacity(n_kf);
    let mut events: Vec<RoomEvent> = Vec::new();

    let odom_info = info_from_sigma3(&[
        cfg.odom.sigma_x.max(1e-3),
        cfg.odom.sigma_y.max(1e-3),
        cfg.odom.sigma_theta.max(1e-3),
    ]);
    let wall_info = info_from_sigma2(&cfg.pgo.wall_sigma);
    let room_info = 1.0 / (cfg.pgo.room_sigma * cfg.pgo.room_sigma);

    let mut arc = 0.0;
    for k in 0..n_kf {
        let gt = gt_traj[k];
        if k > 0 {
            arc += (gt.translation() - gt_traj[k - 1].translation()).norm();
        }
        let t = arc / cfg.speed_mps.max(1e-9);
        sim_times.push(t);

        let mut delta = GraphDelta::default();
        let est_prev = est_traj.last().copied();
        let est_k = if k == 0 {
            delta.poses.push((0, gt));
            delta.factors.push(Factor::PriorPose {
                pose: 0,
                measured: gt,
                info: info_from_sigma3(&cfg.pgo.prior_sigma),
            });
            dr_traj.push(gt);
            gt
        } else {
            let mut odo_rng = ChaCha12Rng::seed_from_u64(seed);
            odo_rng.set_stream(2 * k as u64 + 1);
            let rel = odometry(&gt_traj[k - 1], &gt, &cfg.odom, &mut odo_rng);
            let pred = est_prev.unwrap().compose(&rel);
            dr_traj.push(dr_traj[k - 1].compose(&rel));
            delta.poses.push((k, pred));
            delta.factors.push(Factor::Odom {
                from: k - 1,
                to: k,
                measured: rel,
                info: odom_info,
            });
            pred
        };
        est_traj.push(est_k);

        let mut scan_rng = ChaCha12Rng::seed_from_u64(seed);
        scan_rng.set_stream(2 * k as u64);
        let scan = raycast(scenario, &gt, &cfg.lidar, &mut scan_rng)?;

        // walls layer
        for obs in extract_walls(&scan, &cfg.walls) {
            let (id, is_new) = wall_map.observe(k, &est_k, &obs, &cfg.walls);
            if is_new {
                let lm = wall_map.get(id).unwrap();
                delta.walls.push((id, lm.line));
            }
            delta.factors.push(Factor::PoseWall {
                pose: k,
                wall: id,
                measured: obs.line,
                info: wall_info,
            });
        }

        // traversability layer
        let local = bgk_smooth(&segment_ground(&scan, &est_k, &cfg.trav), cfg.trav.kernel_radius);
        global_update(&mut grid, &local)?;

        // occupied returns in the robot clearance band
        for pt in &scan.points {
            if pt.p.z > 0.1 && pt.p.z <= CLEARANCE_HEIGHT {
                occupied.insert(est_k.transform_point(Vec2::new(pt.p.x, pt.p.y)));
            }
        }
        if let Some(map) = esdf.as_mut() {
            map.integrate_scan(&scan, &est_k, cfg.lidar.sensor_height);
        }

        // free-space cluster for this keyframe
        let cluster = match cfg.cluster.backend {
            Backend::Traversability => {
                cluster_traversable(&grid, &cfg.trav, &occupied, &cfg.cluster, &est_k).ok()
            }
            Backend::Esdf => esdf
                .as_ref()
                .unwrap()
                .cluster(&est_k, cfg.lidar.sensor_height, &cfg.cluster)
                .ok(),
        };

        // room strategy step
        if let Some(cl) = &cluster {
            if let Ok((width, axis)) = width_and_axis(cl, &occupied, &est_k) {
                let mut cl_rec = cl.clone();
                cl_rec.width_profile.push((arc, width));
                let event = strategy.step(
                    &cl_rec,
                    est_k.translation(),
                    width,
                    axis,
                    t,
                    k,
                    &wall_map.landmarks,
                    &mut tracker,
                    &cfg.rooms,
                );
                if let Some(e) = event {
                    attach_room_event(
                        &e,
                        &tracker,
                        &graph,
                        &mut delta,
                        &mut room_pairs_added,
                        room_info,
                    );
                    events.push(e);
                }
                clusters.push(Some(cl_rec));
            } else {
                clusters.push(Some(cl.clone()));
            }
        } else {
            clusters.push(None);
        }

        // joint optimization
        let stats = graph.incremental_update(delta, &cfg.pgo.opts)?;
        opt_stats.push(stats);

        // sync the optimized estimates back into the layer stores
        let refined = graph.poses[&k];
        est_traj[k] = refined;
        for (id, line) in graph.walls.clone() {
            wall_map.set_line(id, line);
        }
        for room in tracker.rooms.iter_mut() {
            if let Some(c) = graph.rooms.get(&room.id) {
                room.center = *c;
            }
        }
    }

    // final flush at trajectory end
    let mut delta = GraphDelta::default();
    if let Some(e) = strategy.finish(
        *sim_times.last().unwrap(),
        n_kf - 1,
        &wall_map.landmarks,
        &mut tracker,
        &cfg.rooms,
    ) {
        attach_room_event(&e, &tracker, &graph, &mut delta, &mut room_pairs_added, room_info);
        events.push(e);
        let stats = graph.incremental_update(delta, &cfg.pgo.opts)?;
        opt_stats.push(stats);
        for k in 0..n_kf {
            est_traj[k] = graph.poses[&k];
        }
    }

    // referential integrity: every room's walls exist as landmarks
    for room in &tracker.rooms {
        debug_assert!(
            room.wall_ids.iter().all(|w| wall_map.get(*w).is_some()),
            "room {} references a missing wall",
            room.id
        );
    }

    Ok(RunArtifacts {
        events,
        traverse_len: scenario.trajectory.len(),
        n_traverses,
        gt_traj,
        est_traj,
        dr_traj,
        sim_times,
        graph,
        opt_stats,
        trav_grid: grid,
        occupied,
        clusters,
        wall_map,
        tracker,
    })
}

/// Add the room variable (if new) and its midline factors to the delta.
fn attach_room_event(
    event: &RoomEvent,
    tracker: &RoomTracker,
    graph: &FactorGraph,
    delta: &mut GraphDelta,
    added: &mut BTreeSet<(u32, u32, u32)>,
    room_info: f64,
) {
    let id = event.room_id;
    if !graph.rooms.contains_key(&id) && !delta.rooms.iter().any(|(rid, _)| *rid == id) {
        let room = tracker.get(id).expect("tracked room");
        delta.rooms.push((id, room.center));
    }
    let ids = &event.candidate.wall_ids;
    let mut push_pair = |a: u32, b: u32| {
        let key = (id, a.min(b), a.max(b));
        if added.insert(key) {
            delta.factors.push(Factor::RoomPair { room: id, wall_a: a, wall_b: b, info: room_info });
        }
    };
    match event.candidate.kind {
        RoomKind::TwoWall => {
            if ids.len() >= 2 {
                push_pair(ids[0], ids[1]);
            }
        }
        RoomKind::FourWall => {
            if ids.len() >= 4 {
                push_pair(ids[0], ids[1]);
                push_pair(ids[2], ids[3]);
            }
        }
    }
}

/// Distinct rooms extracted during one traverse (first-extraction geometry),
/// in extraction order.
pub fn rooms_of_traverse(artifacts: &RunArtifacts, traverse: usize) -> Vec<RoomEvent> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for e in &artifacts.events {
        if artifacts.traverse_of(e.keyframe) == traverse && seen.insert(e.room_id) {
            out.push(e.clone());
        }
    }
    out
}

/// Convenience strategy accessor for reports.
pub fn strategy_name(s: Strategy) -> &'static str {
    match s {
        Strategy::Flush => "flush",
        Strategy::Timer => "timer",
    }
}
