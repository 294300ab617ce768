//! Wall extraction and landmark association.
//!
//! Scan columns that show a tall vertical surface are projected to 2-D and
//! segmented by split-and-merge; rails (1.0 m) never qualify as walls but
//! their returns still block traversal through the occupied set. Landmarks
//! keep an oriented line (normal pointing from the observing robot through
//! the wall), so the two faces of one wall are distinct landmarks.

use crate::geometry::{wrap_angle, Line2, Pose2, Vec2};
use crate::sensor::Scan;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WallConfig {
    /// Max point deviation for split-and-merge, meters.
    pub fit_tol: f64,
    /// Minimum supporting columns per wall observation.
    pub min_support: usize,
    /// World-height band for wall evidence, meters.
    pub z_band: (f64, f64),
    /// Minimum top height of a column to call it a wall (rails are 1.0 m).
    pub z_wall_min: f64,
    /// Max 2-D range spread across rings at one azimuth (vertical surface).
    pub range_tol: f64,
    /// Chain break distance between consecutive columns, meters.
    pub gap_split: f64,
    /// Max angle between segments merged as collinear, degrees.
    pub merge_angle_deg: f64,
    /// Association gates.
    pub assoc_angle_deg: f64,
    pub assoc_dist: f64,
    pub assoc_gap: f64,
}

impl Default for WallConfig {
    fn default() -> Self {
        Self {
            fit_tol: 0.05,
            min_support: 10,
            z_band: (0.3, 2.5),
            // rails can never return above their 1.0 m top; with the default
            // rings a wall proves itself taller from about 2 m out
            z_wall_min: 1.05,
            range_tol: 0.1,
            gap_split: 0.6,
            merge_angle_deg: 5.0,
            assoc_angle_deg: 10.0,
            assoc_dist: 0.3,
            assoc_gap: 1.0,
        }
    }
}

/// One extracted wall segment in the robot frame. The line is canonical
/// (d >= 0), i.e. the normal points from the robot toward the wall.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WallObservation {
    pub line: Line2,
    pub support: usize,
    /// (s_min, s_max) along the line tangent.
    pub extent: (f64, f64),
    pub rms: f64,
}

/// A global wall landmark with an oriented world-frame line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WallLandmark {
    pub id: u32,
    pub line: Line2,
    pub extent: (f64, f64),
    pub observations: Vec<(usize, WallObservation)>,
}

/// Extract wall observations from one scan: vertical-surface columns
/// (>= 2 rings in the height band, consistent 2-D range, top above
/// z_wall_min), then split-and-merge over azimuth order.
pub fn extract_walls(scan: &Scan, cfg: &WallConfig) -> Vec<WallObservation> {
    wall_segments(scan, cfg)
        .into_iter()
        .filter_map(|seg| {
            let seg = trim_outlier_endpoints(&seg);
            if seg.len() < cfg.min_support {
                return None;
            }
            fit_observation(seg).filter(|obs| obs.rms <= cfg.fit_tol)
        })
        .collect()
}

/// The merged point runs behind [`extract_walls`] (exposed for debugging).
#[doc(hidden)]
pub fn wall_segments(scan: &Scan, cfg: &WallConfig) -> Vec<Vec<Vec2>> {
    // group band points per azimuth column
    let mut columns: BTreeMap<u16, Vec<(f64, Vec2)>> = BTreeMap::new();
    let mut col_zmax: BTreeMap<u16, f64> = BTreeMap::new();
    for pt in &scan.points {
        if pt.p.z < cfg.z_band.0 || pt.p.z > cfg.z_band.1 {
            continue;
        }
        let xy = Vec2::new(pt.p.x, pt.p.y);
        columns.entry(pt.azimuth).or_default().push((xy.norm(), xy));
        let zm = col_zmax.entry(pt.azimuth).or_insert(f64::NEG_INFINITY);
        *zm = zm.max(pt.p.z);
    }

    // one representative 2-D point per qualifying column
    let mut pts: Vec<(u16, Vec2)> = Vec::new();
    for (az, col) in &columns {
        if col.len() < 2 || col_zmax[az] < cfg.z_wall_min {
            continue;
        }
        let rmin = col.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        let rmax = col.iter().map(|c| c.0).fold(f64::NEG_INFINITY, f64::max);
        if rmax - rmin > cfg.range_tol {
            continue;
        }
        let mean = col.iter().fold(Vec2::zeros(), |a, c| a + c.1) / col.len() as f64;
        pts.push((*az, mean));
    }
    if pts.len() < 2 {
        return Vec::new();
    }

    // the azimuth sweep is circular: rotate the sequence to start at the
    // largest 2-D gap so no wall straddles the seam
    let mut gap_at = 0;
    let mut gap_best = -1.0;
    for i in 0..pts.len() {
        let j = (i + 1) % pts.len();
        let d = (pts[j].1 - pts[i].1).norm();
        if d > gap_best {
            gap_best = d;
            gap_at = j;
        }
    }
    pts.rotate_left(gap_at);

    // break chains at gaps, then split recursively and merge collinear runs
    let mut chains: Vec<Vec<Vec2>> = Vec::new();
    let mut cur: Vec<Vec2> = vec![pts[0].1];
    for w in pts.windows(2) {
        let (prev, next) = (w[0].1, w[1].1);
        if (next - prev).norm() > cfg.gap_split {
            chains.push(std::mem::take(&mut cur));
        }
        cur.push(next);
    }
    chains.push(cur);

    // corners survive deviation-splitting when the arms are short, so cut
    // at sharp direction changes first
    let mut segments: Vec<Vec<Vec2>> = Vec::new();
    for chain in chains {
        for part in split_at_corners(&chain) {
            split_recursive(&part, cfg.fit_tol, &mut segments);
        }
    }
    merge_collinear(segments, cfg)
}

/// Shave endpoints that deviate far beyond the interior scatter; a corner
/// sample shared into the run would otherwise tilt the whole fit.
fn trim_outlier_endpoints(points: &[Vec2]) -> &[Vec2] {
    let mut lo = 0;
    let mut hi = points.len();
    for _ in 0..4 {
        if hi - lo < 6 {
            break;
        }
        // judge the endpoints against the interior-only fit, so a bad
        // endpoint cannot mask itself by dragging the line
        let interior = &points[lo + 1..hi - 1];
        let line = fit_line(interior);
        let rms = (interior
            .iter()
            .map(|p| line.signed_distance(*p).powi(2))
            .sum::<f64>()
            / interior.len() as f64)
            .sqrt();
        let threshold = (4.0 * rms).max(1e-4);
        let mut changed = false;
        if line.signed_distance(points[lo]).abs() > threshold {
            lo += 1;
            changed = true;
        }
        if line.signed_distance(points[hi - 1]).abs() > threshold {
            hi -= 1;
            changed = true;
        }
        if !changed {
            break;
        }
    }
    &points[lo..hi]
}

/// Cut a chain wherever the local direction turns by more than 45 degrees
/// (window of 3 columns on each side).
fn split_at_corners(points: &[Vec2]) -> Vec<Vec<Vec2>> {
    const W: usize = 3;
    let n = points.len();
    if n < 2 * W + 1 {
        return vec![points.to_vec()];
    }
    let mut cuts = Vec::new();
    let mut i = W;
    while i + W < n {
        let before = points[i] - points[i - W];
        let after = points[i + W] - points[i];
        let dot = before.normalize().dot(&after.normalize());
        if dot < std::f64::consts::FRAC_PI_4.cos() {
            // place the cut at the sharpest single-step turn nearby
            let mut best_j = i;
            let mut best_dot = f64::INFINITY;
            for j in i.saturating_sub(1).max(1)..(i + W).min(n - 1) {
                let d1 = (points[j] - points[j - 1]).normalize();
                let d2 = (points[j + 1] - points[j]).normalize();
                let dt = d1.dot(&d2);
                if dt < best_dot {
                    best_dot = dt;
                    best_j = j;
                }
            }
            cuts.push(best_j);
            i = best_j + W;
        }
        i += 1;
    }
    let mut out = Vec::new();
    let mut start = 0;
    for c in cuts {
        out.push(points[start..=c].to_vec());
        start = c + 1;
    }
    if start < n {
        out.push(points[start..].to_vec());
    }
    out
}

fn split_recursive(points: &[Vec2], tol: f64, out: &mut Vec<Vec<Vec2>>) {
    if points.len() < 2 {
        return;
    }
    let line = fit_line(points);
    let (mut worst, mut worst_at) = (0.0, 0);
    for (k, p) in points.iter().enumerate() {
        let d = line.signed_distance(*p).abs();
        if d > worst {
            worst = d;
            worst_at = k;
        }
    }
    if worst <= tol {
        out.push(points.to_vec());
    } else if worst_at == 0 {
        // deviating endpoint (corner sample): drop it
        split_recursive(&points[1..], tol, out);
    } else if worst_at == points.len() - 1 {
        split_recursive(&points[..points.len() - 1], tol, out);
    } else {
        split_recursive(&points[..=worst_at], tol, out);
        split_recursive(&points[worst_at..], tol, out);
    }
}

fn merge_collinear(segments: Vec<Vec<Vec2>>, cfg: &WallConfig) -> Vec<Vec<Vec2>> {
    let max_angle = cfg.merge_angle_deg.to_radians();
    let mut out: Vec<Vec<Vec2>> = Vec::new();
    for seg in segments {
        if let Some(prev) = out.last_mut() {
            if prev.len() >= 2 && seg.len() >= 2 {
                let la = fit_line(prev);
                let lb = fit_line(&seg);
                let near = (seg[0] - *prev.last().unwrap()).norm() <= cfg.gap_split;
                let angle_ok =
                    crate::geometry::axis_difference(la.theta_n, lb.theta_n) <= max_angle;
                if near && angle_ok {
                    let mut cand = prev.clone();
                    cand.extend_from_slice(&seg);
                    let lc = fit_line(&cand);
                    let rms = (cand.iter().map(|p| lc.signed_distance(*p).powi(2)).sum::<f64>()
                        / cand.len() as f64)
                        .sqrt();
                    if rms <= cfg.fit_tol {
                        *prev = cand;
                        continue;
                    }
                }
            }
        }
        out.push(seg);
    }
    out
}

/// Total-least-squares line through the points.
fn fit_line(points: &[Vec2]) -> Line2 {
    let n = points.len() as f64;
    let mean = points.iter().fold(Vec2::zeros(), |a, p| a + p) / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in points {
        let d = p - mean;
        sxx += d.x * d.x;
        sxy += d.x * d.y;
        syy += d.y * d.y;
    }
    // normal = eigenvector of the smaller eigenvalue of [[sxx,sxy],[sxy,syy]]
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let lam = tr / 2.0 - ((tr * tr / 4.0 - det).max(0.0)).sqrt();
    let (nx, ny) = if sxy.abs() > 1e-15 {
        (lam - syy, sxy)
    } else if sxx <= syy {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let norm = (nx * nx + ny * ny).sqrt();
    let theta_n = (ny / norm).atan2(nx / norm);
    Line2::new(theta_n, Vec2::new(theta_n.cos(), theta_n.sin()).dot(&mean))
}

fn fit_observation(points: &[Vec2]) -> Option<WallObservation> {
    if points.len() < 2 {
        return None;
    }
    // canonical robot frame: d >= 0, normal pointing from robot to the wall
    let line = fit_line(points).canonical();
    if line.d <= 0.0 {
        return None; // wall through the sensor origin: degenerate
    }
    let t = line.tangent();
    let mut s_min = f64::INFINITY;
    let mut s_max = f64::NEG_INFINITY;
    let mut sq = 0.0;
    for p in points {
        let s = p.dot(&t);
        s_min = s_min.min(s);
        s_max = s_max.max(s);
        sq += line.signed_distance(*p).powi(2);
    }
    Some(WallObservation {
        line,
        support: points.len(),
        extent: (s_min, s_max),
        rms: (sq / points.len() as f64).sqrt(),
    })
}

/// An observation lifted to the world frame: oriented line plus extent.
pub fn observation_to_world(obs: &WallObservation, pose: &Pose2) -> (Line2, (f64, f64)) {
    let line_w = obs.line.to_world_oriented(pose);
    let t_r = obs.line.tangent();
    let a = pose.transform_point(obs.line.normal() * obs.line.d + t_r * obs.extent.0);
    let b = pose.transform_point(obs.line.normal() * obs.line.d + t_r * obs.extent.1);
    let t_w = line_w.tangent();
    let (sa, sb) = (a.dot(&t_w), b.dot(&t_w));
    (line_w, (sa.min(sb), sa.max(sb)))
}

/// Match an observation against existing landmarks: smallest angular
/// difference wins, gated by angle, offset along the normal, and extent
/// overlap / gap. `None` means a new landmark.
pub fn associate_wall(
    obs: &WallObservation,
    pose: &Pose2,
    landmarks: &[WallLandmark],
    cfg: &WallConfig,
) -> Option<u32> {
    let (line_w, extent_w) = observation_to_world(obs, pose);
    let max_angle = cfg.assoc_angle_deg.to_radians();
    let mut best: Option<(f64, u32)> = None;
    for lm in landmarks {
        let da = wrap_angle(line_w.theta_n - lm.line.theta_n).abs();
        if da >= max_angle {
            continue;
        }
        if (line_w.d - lm.line.d).abs() >= cfg.assoc_dist {
            continue;
        }
        let gap = interval_gap(extent_w, lm.extent);
        if gap > cfg.assoc_gap {
            continue;
        }
        if best.map(|(bd, _)| da < bd).unwrap_or(true) {
            best = Some((da, lm.id));
        }
    }
    best.map(|(_, id)| id)
}

fn interval_gap(a: (f64, f64), b: (f64, f64)) -> f64 {
    if a.1 < b.0 {
        b.0 - a.1
    } else if b.1 < a.0 {
        a.0 - b.1
    } else {
        0.0 // overlap
    }
}

/// The global wall landmark store used by the pipeline.
#[derive(Debug, Clone, Default)]
pub struct WallMap {
    pub landmarks: Vec<WallLandmark>,
    next_id: u32,
}

impl WallMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: u32) -> Option<&WallLandmark> {
        self.landmarks.iter().find(|l| l.id == id)
    }

    /// Associate or create; returns (landmark id, was_new).
    pub fn observe(
        &mut self,
        keyframe: usize,
        pose: &Pose2,
        obs: &WallObservation,
        cfg: &WallConfig,
    ) -> (u32, bool) {
        if let Some(id) = associate_wall(obs, pose, &self.landmarks, cfg) {
            let (_, extent_w) = observation_to_world(obs, pose);
            let lm = self.landmarks.iter_mut().find(|l| l.id == id).unwrap();
            lm.extent.0 = lm.extent.0.min(extent_w.0);
            lm.extent.1 = lm.extent.1.max(extent_w.1);
            lm.observations.push((keyframe, obs.clone()));
            (id, false)
        } else {
            let (line_w, extent_w) = observation_to_world(obs, pose);
            let id = self.next_id;
            self.next_id += 1;
            self.landmarks.push(WallLandmark {
                id,
                line: line_w,
                extent: extent_w,
                observations: vec![(keyframe, obs.clone())],
            });
            (id, true)
        }
    }

    /// Sync landmark lines from optimized graph estimates.
    pub fn set_line(&mut self, id: u32, line: Line2) {
        if let Some(lm) = self.landmarks.iter_mut().find(|l| l.id == id) {
            lm.line = line;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::{raycast, LidarConfig};
    use crate::world::{build_canonical, CanonicalScenario, ObstacleSegment};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn zero_noise() -> LidarConfig {
        LidarConfig { range_noise_sigma: 0.0, ..Default::default() }
    }

    #[test]
    fn single_wall_one_observation_facing_robot() {
        let mut sc = build_canonical(CanonicalScenario::FourRooms);
        sc.obstacles = vec![ObstacleSegment::wall((6.0, 0.5), (6.0, 6.5))];
        let pose = Pose2::new(3.0, 3.0, 0.0);
        let scan = raycast(&sc, &pose, &zero_noise(), &mut ChaCha12Rng::seed_from_u64(0)).unwrap();
        let cfg = WallConfig::default();
        let obs = extract_walls(&scan, &cfg);
        assert_eq!(obs.len(), 1, "expected one wall, got {}", obs.len());
        let o = &obs[0];
        assert!(o.line.d > 0.0);
        // wall is 3 m ahead along +x in the robot frame
        assert!((o.line.d - 3.0).abs() < cfg.fit_tol, "d = {}", o.line.d);
        assert!(o.line.theta_n.abs() < 0.02, "theta_n = {}", o.line.theta_n);
    }

    #[test]
    fn l_corner_two_observations() {
        let mut sc = build_canonical(CanonicalScenario::FourRooms);
        sc.obstacles = vec![
            ObstacleSegment::wall((6.0, 0.5), (6.0, 5.0)),
            ObstacleSegment::wall((1.0, 5.0), (6.0, 5.0)),
        ];
        let pose = Pose2::new(3.0, 2.0, 0.0);
        let scan = raycast(&sc, &pose, &zero_noise(), &mut ChaCha12Rng::seed_from_u64(0)).unwrap();
        let cfg = WallConfig::default();
        let obs = extract_walls(&scan, &cfg);
        assert_eq!(obs.len(), 2, "expected two walls, got {}", obs.len());
        let d = crate::geometry::axis_difference(obs[0].line.theta_n, obs[1].line.theta_n);
        assert!((d - std::f64::consts::FRAC_PI_2).abs() < 0.05, "corner angle {d}");
    }

    #[test]
    fn rail_yields_no_wall_observation() {
        let mut sc = build_canonical(CanonicalScenario::FourRooms);
        sc.obstacles = vec![ObstacleSegment::rail((6.0, 0.5), (6.0, 6.5))];
        let pose = Pose2::new(3.0, 3.0, 0.0);
        let scan = raycast(&sc, &pose, &zero_noise(), &mut ChaCha12Rng::seed_from_u64(0)).unwrap();
        let cfg = WallConfig::default();
        assert!(extract_walls(&scan, &cfg).is_empty(), "a 1.0 m rail is not a wall");
        // but its returns do exist in the clearance band for the occupied set
        let in_band = scan
            .points
            .iter()
            .filter(|p| p.p.z > 0.1 && p.p.z <= crate::world::CLEARANCE_HEIGHT)
            .count();
        assert!(in_band > 0, "rail returns must enter the occupied set");
    }

    #[test]
    fn reobservation_same_id_zero_noise() {
        let mut sc = build_canonical(CanonicalScenario::FourRooms);
        sc.obstacles = vec![ObstacleSegment::wall((6.0, 0.5), (6.0, 6.5))];
        let cfg = WallConfig::default();
        let mut map = WallMap::new();
        let pose1 = Pose2::new(3.0, 3.0, 0.0);
        let pose2 = Pose2::new(2.5, 2.0, 0.4);
        for (kf, pose) in [(0, pose1), (1, pose2)] {
            let scan =
                raycast(&sc, &pose, &zero_noise(), &mut ChaCha12Rng::seed_from_u64(0)).unwrap();
            for obs in extract_walls(&scan, &cfg) {
                map.observe(kf, &pose, &obs, &cfg);
            }
        }
        assert_eq!(map.landmarks.len(), 1, "re-observation must reuse the landmark");
        assert_eq!(map.landmarks[0].observations.len(), 2);
    }

    #[test]
    fn opposite_face_is_new_landmark() {
        let mut sc = build_canonical(CanonicalScenario::FourRooms);
        sc.obstacles = vec![ObstacleSegment::wall((4.0, 0.5), (4.0, 6.5))];
        let cfg = WallConfig::default();
        let mut map = WallMap::new();
        // east-looking robot west of the wall, then west-looking robot east of it
        let poses = [Pose2::new(2.0, 3.0, 0.0), Pose2::new(6.0, 3.0, std::f64::consts::PI)];
        for (kf, pose) in poses.iter().enumerate() {
            let scan =
                raycast(&sc, pose, &zero_noise(), &mut ChaCha12Rng::seed_from_u64(0)).unwrap();
            for obs in extract_walls(&scan, &cfg) {
                map.observe(kf, pose, &obs, &cfg);
            }
        }
        assert_eq!(map.landmarks.len(), 2, "opposite faces must be distinct landmarks");
    }

    #[test]
    fn collinear_far_apart_distinct_landmarks() {
        let cfg = WallConfig::default();
        let mut map = WallMap::new();
        let obs_a = WallObservation {
            line: Line2::new(0.0, 2.0),
            support: 20,
            extent: (-1.0, 1.0),
            rms: 0.0,
        };
        let obs_b = WallObservation {
            line: Line2::new(0.0, 2.0),
            support: 20,
            extent: (4.0, 6.0), // 3 m gap along the same line
            rms: 0.0,
        };
        let pose = Pose2::identity();
        let (id_a, new_a) = map.observe(0, &pose, &obs_a, &cfg);
        let (id_b, new_b) = map.observe(0, &pose, &obs_b, &cfg);
        assert!(new_a && new_b);
        assert_ne!(id_a, id_b);
    }

    #[test]
    fn doorway_gap_merges_into_one_landmark() {
        // two collinear pieces 0.8 m apart associate (gap <= 1.0 m)
        let cfg = WallConfig::default();
        let mut map = WallMap::new();
        let pose = Pose2::identity();
        let a = WallObservation { line: Line2::new(0.0, 2.0), support: 20, extent: (-2.0, -0.4), rms: 0.0 };
        let b = WallObservation { line: Line2::new(0.0, 2.0), support: 20, extent: (0.4, 2.0), rms: 0.0 };
        let (id_a, _) = map.observe(0, &pose, &a, &cfg);
        let (id_b, was_new) = map.observe(0, &pose, &b, &cfg);
        assert_eq!(id_a, id_b);
        assert!(!was_new);
        let lm = map.get(id_a).unwrap();
        assert_eq!(lm.extent, (-2.0, 2.0));
    }

    #[test]
    fn four_rooms_zero_noise_wall_completeness() {
        // every scenario wall line visible from the trajectory acquires
        // exactly one landmark per face within fit_tol
        let sc = build_canonical(CanonicalScenario::FourRooms);
        let cfg = WallConfig::default();
        let mut map = WallMap::new();
        for (kf, pose) in sc.trajectory.iter().enumerate() {
            let scan =
                raycast(&sc, pose, &zero_noise(), &mut ChaCha12Rng::seed_from_u64(0)).unwrap();
            for obs in extract_walls(&scan, &cfg) {
                map.observe(kf, pose, &obs, &cfg);
            }
        }
        // each landmark's canonical line must match a scenario wall line
        for lm in &map.landmarks {
            let c = lm.line.canonical();
            let matched = sc.obstacles.iter().any(|ob| {
                let dir = (ob.p1 - ob.p0).normalize();
                let theta_n = dir.y.atan2(dir.x) + std::f64::consts::FRAC_PI_2;
                let gt = Line2::new(theta_n, Vec2::new(theta_n.cos(), theta_n.sin()).dot(&ob.p0))
                    .canonical();
                crate::geometry::axis_difference(c.theta_n, gt.theta_n) < 0.02
                    && (c.d - gt.d).abs() < cfg.fit_tol * 2.0
            });
            assert!(matched, "landmark {:?} matches no scenario wall", lm.line);
        }
        // the four interior faces around room A: x=4 (west face), y=3 (south
        // face), plus perimeter x=0, y=0 east/north faces must all exist
        assert!(map.landmarks.len() >= 8, "only {} landmarks", map.landmarks.len());
    }
}
