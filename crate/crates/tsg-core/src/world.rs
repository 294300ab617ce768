//! Synthetic 2.5-D indoor environments: flat ground with VOID drops, wall and
//! rail segments with vertical extents, and canonical scenarios.
//!
//! Heights follow the default model: robot sensor 0.5 m above ground, rails
//! 1.0 m, walls 3.0 m, robot traversal clearance 1.5 m. Rails block traversal
//! but leave 3-D free space above them.

use crate::geometry::{Pose2, Vec2};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const WALL_HEIGHT: f64 = 3.0;
pub const RAIL_HEIGHT: f64 = 1.0;
pub const SENSOR_HEIGHT: f64 = 0.5;
/// Robot traversal clearance H_r: obstacles below this height block driving.
pub const CLEARANCE_HEIGHT: f64 = 1.5;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroundKind {
    /// Flat floor at z = 0.
    #[serde(rename = "G")]
    Ground,
    /// No floor: atrium hollow / drop. No ground return, never traversable.
    #[serde(rename = "V")]
    Void,
}

/// A vertical obstacle panel: 2-D segment extruded over [z_low, z_high].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ObstacleSegment {
    pub p0: Vec2,
    pub p1: Vec2,
    pub z_low: f64,
    pub z_high: f64,
}

impl ObstacleSegment {
    pub fn wall(p0: (f64, f64), p1: (f64, f64)) -> Self {
        Self {
            p0: Vec2::new(p0.0, p0.1),
            p1: Vec2::new(p1.0, p1.1),
            z_low: 0.0,
            z_high: WALL_HEIGHT,
        }
    }

    pub fn rail(p0: (f64, f64), p1: (f64, f64)) -> Self {
        Self {
            p0: Vec2::new(p0.0, p0.1),
            p1: Vec2::new(p1.0, p1.1),
            z_low: 0.0,
            z_high: RAIL_HEIGHT,
        }
    }

    pub fn length(&self) -> f64 {
        (self.p1 - self.p0).norm()
    }

    /// 2-D distance from `p` to this segment.
    pub fn distance_to_point(&self, p: Vec2) -> f64 {
        let e = self.p1 - self.p0;
        let len2 = e.norm_squared();
        if len2 == 0.0 {
            return (p - self.p0).norm();
        }
        let t = ((p - self.p0).dot(&e) / len2).clamp(0.0, 1.0);
        (p - (self.p0 + e * t)).norm()
    }

    fn validate(&self) -> Result<(), WorldError> {
        if self.z_low >= self.z_high {
            return Err(WorldError::Validation(format!(
                "obstacle z_low {} >= z_high {}",
                self.z_low, self.z_high
            )));
        }
        if self.length() <= 0.0 {
            return Err(WorldError::Validation("zero-length obstacle segment".into()));
        }
        Ok(())
    }
}

/// A complete synthetic environment plus the robot's waypoint trajectory.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub cell_size: f64,
    pub extent: (f64, f64),
    pub obstacles: Vec<ObstacleSegment>,
    pub trajectory: Vec<Pose2>,
    pub rng_seed: u64,
    nx: usize,
    ny: usize,
    ground: Vec<GroundKind>,
}

/// On-disk schema; the ground grid is run-length encoded per row.
#[derive(Serialize, Deserialize)]
struct ScenarioFile {
    name: String,
    cell_size: f64,
    extent: (f64, f64),
    ground_rows: Vec<Vec<(u32, GroundKind)>>,
    obstacles: Vec<ObstacleSegment>,
    trajectory: Vec<Pose2>,
    rng_seed: u64,
}

impl Scenario {
    pub fn grid_dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn ground_kind_at_index(&self, i: i64, j: i64) -> GroundKind {
        if i < 0 || j < 0 || i as usize >= self.nx || j as usize >= self.ny {
            GroundKind::Void
        } else {
            self.ground[j as usize * self.nx + i as usize]
        }
    }

    /// Ground kind at a world point; outside the extent counts as VOID.
    pub fn ground_at(&self, p: Vec2) -> GroundKind {
        let i = (p.x / self.cell_size).floor() as i64;
        let j = (p.y / self.cell_size).floor() as i64;
        self.ground_kind_at_index(i, j)
    }

    /// Minimum 2-D distance from `p` to any obstacle whose vertical extent
    /// intersects the open band (z_lo, z_hi); +inf if none.
    pub fn nearest_obstacle_distance(&self, p: Vec2, band: (f64, f64)) -> f64 {
        let mut best = f64::INFINITY;
        for ob in &self.obstacles {
            if ob.z_low < band.1 && ob.z_high > band.0 {
                best = best.min(ob.distance_to_point(p));
            }
        }
        best
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if self.cell_size <= 0.0 {
            return Err(WorldError::Validation("cell_size must be positive".into()));
        }
        if self.extent.0 <= 0.0 || self.extent.1 <= 0.0 {
            return Err(WorldError::Validation("extent must be positive".into()));
        }
        for ob in &self.obstacles {
            ob.validate()?;
        }
        for (k, wp) in self.trajectory.iter().enumerate() {
            if self.ground_at(Vec2::new(wp.x, wp.y)) != GroundKind::Ground {
                return Err(WorldError::Validation(format!(
                    "trajectory waypoint {k} at ({}, {}) lies on a VOID cell",
                    wp.x, wp.y
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), WorldError> {
        let file = ScenarioFile {
            name: self.name.clone(),
            cell_size: self.cell_size,
            extent: self.extent,
            ground_rows: self.encode_rows(),
            obstacles: self.obstacles.clone(),
            trajectory: self.trajectory.clone(),
            rng_seed: self.rng_seed,
        };
        let json = serde_json::to_string_pretty(&file)
            .map_err(|e| WorldError::Schema(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Scenario, WorldError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Scenario, WorldError> {
        let file: ScenarioFile =
            serde_json::from_str(text).map_err(|e| WorldError::Schema(e.to_string()))?;
        let nx = (file.extent.0 / file.cell_size).round() as usize;
        let ny = (file.extent.1 / file.cell_size).round() as usize;
        let mut ground = Vec::with_capacity(nx * ny);
        for (j, row) in file.ground_rows.iter().enumerate() {
            let mut w = 0usize;
            for (count, kind) in row {
                for _ in 0..*count {
                    ground.push(*kind);
                }
                w += *count as usize;
            }
            if w != nx {
                return Err(WorldError::Schema(format!(
                    "ground row {j} encodes {w} cells, expected {nx}"
                )));
            }
        }
        if ground.len() != nx * ny {
            return Err(WorldError::Schema(format!(
                "ground grid has {} rows, expected {ny}",
                file.ground_rows.len()
            )));
        }
        let sc = Scenario {
            name: file.name,
            cell_size: file.cell_size,
            extent: file.extent,
            obstacles: file.obstacles,
            trajectory: file.trajectory,
            rng_seed: file.rng_seed,
            nx,
            ny,
            ground,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_json(&self) -> String {
        let file = ScenarioFile {
            name: self.name.clone(),
            cell_size: self.cell_size,
            extent: self.extent,
            ground_rows: self.encode_rows(),
            obstacles: self.obstacles.clone(),
            trajectory: self.trajectory.clone(),
            rng_seed: self.rng_seed,
        };
        serde_json::to_string_pretty(&file).expect("scenario serialization")
    }

    fn encode_rows(&self) -> Vec<Vec<(u32, GroundKind)>> {
        let mut rows = Vec::with_capacity(self.ny);
        for j in 0..self.ny {
            let mut row: Vec<(u32, GroundKind)> = Vec::new();
            for i in 0..self.nx {
                let k = self.ground[j * self.nx + i];
                match row.last_mut() {
                    Some((count, kind)) if *kind == k => *count += 1,
                    _ => row.push((1, k)),
                }
            }
            rows.push(row);
        }
        rows
    }
}

/// Load a scenario from a JSON file (schema-validated).
pub fn load_scenario(path: &Path) -> Result<Scenario, WorldError> {
    Scenario::load(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalScenario {
    FourRooms,
    LongCorridor,
    OpenCorridor,
}

impl std::str::FromStr for CanonicalScenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "four_rooms" => Ok(Self::FourRooms),
            "long_corridor" => Ok(Self::LongCorridor),
            "open_corridor" => Ok(Self::OpenCorridor),
            other => Err(format!("unknown canonical scenario '{other}'")),
        }
    }
}

/// Axis-aligned ground-truth room rectangle, used by tests and reports.
#[derive(Debug, Clone, Copy)]
pub struct GtRoom {
    pub min: Vec2,
    pub max: Vec2,
}

impl GtRoom {
    pub fn center(&self) -> Vec2 {
        (self.min + self.max) / 2.0
    }
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
    pub fn contains_with_margin(&self, p: Vec2, margin: f64) -> bool {
        p.x >= self.min.x + margin
            && p.x <= self.max.x - margin
            && p.y >= self.min.y + margin
            && p.y <= self.max.y - margin
    }
}

/// Ground-truth room rectangles for the canonical scenarios.
pub fn gt_rooms(which: CanonicalScenario) -> Vec<GtRoom> {
    let r = |x0: f64, y0: f64, x1: f64, y1: f64| GtRoom {
        min: Vec2::new(x0, y0),
        max: Vec2::new(x1, y1),
    };
    match which {
        CanonicalScenario::FourRooms => vec![
            r(0.0, 0.0, 4.0, 3.0),
            r(4.0, 0.0, 8.0, 4.2),
            r(4.0, 4.2, 8.0, 7.2),
            r(0.0, 3.0, 4.0, 7.2),
        ],
        CanonicalScenario::LongCorridor => vec![
            r(0.0, 0.0, 8.0, 2.0),
            r(8.0, 0.0, 16.0, 4.0),
            r(12.0, 4.0, 16.0, 12.0),
        ],
        CanonicalScenario::OpenCorridor => vec![
            r(0.0, 0.0, 12.0, 2.0),
            r(0.0, 3.6, 12.0, 5.6),
        ],
    }
}

/// Waypoints at fixed arc-length spacing along a polyline, heading along the
/// direction of travel. The exact final vertex is always emitted, so a closed
/// polyline yields a trajectory whose end position equals its start.
pub fn trajectory_along(points: &[Vec2], spacing: f64) -> Vec<Pose2> {
    assert!(points.len() >= 2 && spacing > 0.0);
    let mut out = Vec::new();
    let mut dist_to_next = 0.0; // remaining distance until the next waypoint
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        let seg = b - a;
        let len = seg.norm();
        if len == 0.0 {
            continue;
        }
        let dir = seg / len;
        let heading = dir.y.atan2(dir.x);
        let mut s = dist_to_next;
        while s < len {
            let p = a + dir * s;
            out.push(Pose2::new(p.x, p.y, heading));
            s += spacing;
        }
        dist_to_next = s - len;
    }
    // final vertex, exact
    let last = *points.last().unwrap();
    let prev = points[points.len() - 2];
    let dir = last - prev;
    let heading = if dir.norm() > 0.0 {
        dir.y.atan2(dir.x)
    } else {
        0.0
    };
    if out
        .last()
        .map(|p| (p.translation() - last).norm() > 1e-9)
        .unwrap_or(true)
    {
        out.push(Pose2::new(last.x, last.y, heading));
    }
    out
}

const CANONICAL_CELL: f64 = 0.4;
const WAYPOINT_SPACING: f64 = 0.5;

fn grid_fill(
    nx: usize,
    ny: usize,
    cell: f64,
    fill: GroundKind,
    voids: &[(f64, f64, f64, f64)],
) -> Vec<GroundKind> {
    let mut g = vec![fill; nx * ny];
    for &(x0, y0, x1, y1) in voids {
        let i0 = (x0 / cell).round() as usize;
        let j0 = (y0 / cell).round() as usize;
        let i1 = (x1 / cell).round() as usize;
        let j1 = (y1 / cell).round() as usize;
        for j in j0..j1.min(ny) {
            for i in i0..i1.min(nx) {
                g[j * nx + i] = GroundKind::Void;
            }
        }
    }
    g
}

/// Build one of the canonical scenarios. Deterministic: pure constant
/// construction, independent of the stored rng seed.
pub fn build_canonical(which: CanonicalScenario) -> Scenario {
    match which {
        CanonicalScenario::FourRooms => four_rooms(),
        CanonicalScenario::LongCorridor => long_corridor(),
        CanonicalScenario::OpenCorridor => open_corridor(),
    }
}

/// Four rectangular rooms around the cycle A-B-C-D, joined by 0.8 m doorways.
/// Rooms alternate aspect ratio so aisle width/direction change at every
/// room transition.
fn four_rooms() -> Scenario {
    let w = ObstacleSegment::wall;
    let obstacles = vec![
        // perimeter
        w((0.0, 0.0), (8.0, 0.0)),
        w((8.0, 0.0), (8.0, 7.2)),
        w((8.0, 7.2), (0.0, 7.2)),
        w((0.0, 7.2), (0.0, 0.0)),
        // interior vertical x = 4 with doorways at y in (1.1,1.9) and (5.3,6.1)
        w((4.0, 0.0), (4.0, 1.1)),
        w((4.0, 1.9), (4.0, 5.3)),
        w((4.0, 6.1), (4.0, 7.2)),
        // interior horizontal y = 3 (left half), doorway at x in (1.6,2.4)
        w((0.0, 3.0), (1.6, 3.0)),
        w((2.4, 3.0), (4.0, 3.0)),
        // interior horizontal y = 4.2 (right half), doorway at x in (5.6,6.4)
        w((4.0, 4.2), (5.6, 4.2)),
        w((6.4, 4.2), (8.0, 4.2)),
    ];
    let polyline = [
        Vec2::new(2.0, 1.5),
        Vec2::new(6.0, 1.5),
        Vec2::new(6.0, 5.7),
        Vec2::new(2.0, 5.7),
        Vec2::new(2.0, 1.5),
    ];
    let nx = (8.0 / CANONICAL_CELL).round() as usize;
    let ny = (7.2 / CANONICAL_CELL).round() as usize;
    Scenario {
        name: "four_rooms".into(),
        cell_size: CANONICAL_CELL,
        extent: (8.0, 7.2),
        ground: grid_fill(nx, ny, CANONICAL_CELL, GroundKind::Ground, &[]),
        nx,
        ny,
        obstacles,
        trajectory: trajectory_along(&polyline, WAYPOINT_SPACING),
        rng_seed: 1,
    }
}

/// A single corridor that widens from 2 m to 4 m at x = 8 and takes a 90
/// degree bend at its far end. Traversed out and back to close the loop.
fn long_corridor() -> Scenario {
    let w = ObstacleSegment::wall;
    let obstacles = vec![
        w((0.0, 0.0), (16.0, 0.0)),
        w((0.0, 0.0), (0.0, 2.0)),
        w((0.0, 2.0), (8.0, 2.0)),
        w((8.0, 2.0), (8.0, 4.0)),
        w((8.0, 4.0), (12.0, 4.0)),
        w((12.0, 4.0), (12.0, 12.0)),
        w((12.0, 12.0), (16.0, 12.0)),
        w((16.0, 0.0), (16.0, 12.0)),
    ];
    // everything outside the corridor is VOID (enclosed by walls, never seen)
    let voids = [
        (0.0, 2.0, 8.0, 12.0),
        (8.0, 4.0, 12.0, 12.0),
    ];
    let polyline = [
        Vec2::new(1.0, 1.0),
        Vec2::new(10.0, 1.0),
        Vec2::new(10.0, 2.0),
        Vec2::new(14.0, 2.0),
        Vec2::new(14.0, 11.0),
        Vec2::new(14.0, 2.0),
        Vec2::new(10.0, 2.0),
        Vec2::new(10.0, 1.0),
        Vec2::new(1.0, 1.0),
    ];
    let nx = (16.0 / CANONICAL_CELL).round() as usize;
    let ny = (12.0 / CANONICAL_CELL).round() as usize;
    Scenario {
        name: "long_corridor".into(),
        cell_size: CANONICAL_CELL,
        extent: (16.0, 12.0),
        ground: grid_fill(nx, ny, CANONICAL_CELL, GroundKind::Ground, &voids),
        nx,
        ny,
        obstacles,
        trajectory: trajectory_along(&polyline, WAYPOINT_SPACING),
        rng_seed: 1,
    }
}

/// Two parallel 2 m walkways flanking a central VOID hollow, separated from
/// it by 1.0 m rails and enclosed by 3.0 m walls. The walkways connect at the
/// far end through a 0.8 m ground passage; the trajectory goes out one side,
/// through the passage, back the other, then retraces to return to the start.
fn open_corridor() -> Scenario {
    let w = ObstacleSegment::wall;
    let r = ObstacleSegment::rail;
    let obstacles = vec![
        // perimeter walls
        w((0.0, 0.0), (12.0, 0.0)),
        w((12.0, 0.0), (12.0, 5.6)),
        w((12.0, 5.6), (0.0, 5.6)),
        w((0.0, 5.6), (0.0, 0.0)),
        // rails around the hollow (the left boundary is the outer wall)
        r((0.0, 2.0), (11.2, 2.0)),
        r((0.0, 3.6), (11.2, 3.6)),
        r((11.2, 2.0), (11.2, 3.6)),
    ];
    let voids = [(0.0, 2.0, 11.2, 3.6)];
    let polyline = [
        Vec2::new(1.0, 1.0),
        Vec2::new(11.6, 1.0),
        Vec2::new(11.6, 4.6),
        Vec2::new(1.0, 4.6),
        Vec2::new(11.6, 4.6),
        Vec2::new(11.6, 1.0),
        Vec2::new(1.0, 1.0),
    ];
    let nx = (12.0 / CANONICAL_CELL).round() as usize;
    let ny = (5.6 / CANONICAL_CELL).round() as usize;
    Scenario {
        name: "open_corridor".into(),
        cell_size: CANONICAL_CELL,
        extent: (12.0, 5.6),
        ground: grid_fill(nx, ny, CANONICAL_CELL, GroundKind::Ground, &voids),
        nx,
        ny,
        obstacles,
        trajectory: trajectory_along(&polyline, WAYPOINT_SPACING),
        rng_seed: 1,
    }
}

/// Bands of the open_corridor walkways, for ground-truth side labelling.
pub const OPEN_CORRIDOR_NEAR_BAND: (f64, f64) = (0.0, 2.0);
pub const OPEN_CORRIDOR_FAR_BAND: (f64, f64) = (3.6, 5.6);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_rooms_structure() {
        let sc = build_canonical(CanonicalScenario::FourRooms);
        sc.validate().unwrap();
        assert_eq!(gt_rooms(CanonicalScenario::FourRooms).len(), 4);
        // all ground, no voids
        let (nx, ny) = sc.grid_dims();
        for j in 0..ny {
            for i in 0..nx {
                assert_eq!(sc.ground_kind_at_index(i as i64, j as i64), GroundKind::Ground);
            }
        }
        // doorway gaps are 0.8 m in each interior wall line
        let vertical: Vec<_> = sc
            .obstacles
            .iter()
            .filter(|o| o.p0.x == 4.0 && o.p1.x == 4.0)
            .collect();
        assert_eq!(vertical.len(), 3);
        // trajectory is closed
        let first = sc.trajectory.first().unwrap();
        let last = sc.trajectory.last().unwrap();
        assert!((first.translation() - last.translation()).norm() < 1e-12);
    }

    #[test]
    fn open_corridor_void_guarded_by_rails() {
        let sc = build_canonical(CanonicalScenario::OpenCorridor);
        sc.validate().unwrap();
        let (nx, ny) = sc.grid_dims();
        let mut saw_void = false;
        for j in 0..ny as i64 {
            for i in 0..nx as i64 {
                if sc.ground_kind_at_index(i, j) != GroundKind::Void {
                    continue;
                }
                saw_void = true;
                // every GROUND<->VOID boundary must be covered by a rail or wall
                let cell = sc.cell_size;
                let cx = (i as f64 + 0.5) * cell;
                let cy = (j as f64 + 0.5) * cell;
                for (di, dj) in [(1i64, 0i64), (-1, 0), (0, 1), (0, -1)] {
                    if sc.ground_kind_at_index(i + di, j + dj) == GroundKind::Ground {
                        let boundary = Vec2::new(
                            cx + di as f64 * cell / 2.0,
                            cy + dj as f64 * cell / 2.0,
                        );
                        let d = sc.nearest_obstacle_distance(boundary, (0.0, RAIL_HEIGHT));
                        assert!(
                            d < 1e-9,
                            "unguarded VOID boundary at ({boundary})"
                        );
                    }
                }
            }
        }
        assert!(saw_void, "open_corridor must contain a VOID hollow");
    }

    #[test]
    fn long_corridor_structure() {
        let sc = build_canonical(CanonicalScenario::LongCorridor);
        sc.validate().unwrap();
        // width changes 2 m -> 4 m and there is a 90 degree bend
        let rooms = gt_rooms(CanonicalScenario::LongCorridor);
        assert_eq!(rooms.len(), 3);
        assert!((rooms[0].max.y - rooms[0].min.y - 2.0).abs() < 1e-12);
        assert!((rooms[1].max.y - rooms[1].min.y - 4.0).abs() < 1e-12);
        assert!((rooms[2].max.x - rooms[2].min.x - 4.0).abs() < 1e-12);
    }

    #[test]
    fn canonical_deterministic() {
        for which in [
            CanonicalScenario::FourRooms,
            CanonicalScenario::LongCorridor,
            CanonicalScenario::OpenCorridor,
        ] {
            let a = build_canonical(which).to_json();
            let b = build_canonical(which).to_json();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = std::env::temp_dir().join("tsg_world_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("four_rooms.json");
        let sc = build_canonical(CanonicalScenario::FourRooms);
        sc.save(&path).unwrap();
        let loaded = load_scenario(&path).unwrap();
        assert_eq!(sc.to_json(), loaded.to_json());
    }

    #[test]
    fn waypoint_on_void_rejected() {
        let mut sc = build_canonical(CanonicalScenario::OpenCorridor);
        sc.trajectory.push(Pose2::new(5.0, 2.8, 0.0)); // inside the hollow
        let json = sc.to_json();
        let err = Scenario::from_json(&json).unwrap_err();
        assert!(matches!(err, WorldError::Validation(_)), "got {err:?}");
    }

    #[test]
    fn missing_field_is_schema_error() {
        let err = Scenario::from_json("{\"name\": \"x\"}").unwrap_err();
        assert!(matches!(err, WorldError::Schema(_)));
    }

    #[test]
    fn nearest_obstacle_distance_examples() {
        let mut sc = build_canonical(CanonicalScenario::FourRooms);
        sc.obstacles = vec![
            ObstacleSegment::wall((2.0, -1.0), (2.0, 1.0)),
            ObstacleSegment::rail((5.0, -1.0), (5.0, 1.0)),
        ];
        // 1.0 m from an isolated wall
        let d = sc.nearest_obstacle_distance(Vec2::new(1.0, 0.0), (0.0, 1.5));
        assert!((d - 1.0).abs() < 1e-12);
        // band above a 1.0 m rail misses it
        let mut rail_only = sc.clone();
        rail_only.obstacles = vec![ObstacleSegment::rail((5.0, -1.0), (5.0, 1.0))];
        let d = rail_only.nearest_obstacle_distance(Vec2::new(5.5, 0.0), (2.0, 3.0));
        assert!(d.is_infinite());
        // min over two walls at 1.0 and 2.0 m
        sc.obstacles.push(ObstacleSegment::wall((0.0, -1.0), (0.0, 1.0)));
        let d = sc.nearest_obstacle_distance(Vec2::new(1.0, 0.0), (0.0, 1.5));
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trajectory_spacing() {
        let pts = [Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(2.0, 1.0)];
        let traj = trajectory_along(&pts, 0.5);
        for w in traj.windows(2) {
            let d = (w[1].translation() - w[0].translation()).norm();
            assert!(d < 0.5 + 1e-9, "spacing {d} too large");
        }
        let last = traj.last().unwrap();
        assert!((last.translation() - Vec2::new(2.0, 1.0)).norm() < 1e-12);
    }
}
