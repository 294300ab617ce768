//! Multi-ring LiDAR raycaster and noisy odometry over a [`Scenario`].
//!
//! Rays are intersected analytically with obstacle panels and the ground
//! plane; no voxel marching, so any voxel artifacts downstream come from the
//! methods under test, not the simulator.

use crate::geometry::{Pose2, Vec2};
use crate::world::{GroundKind, Scenario};
use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SensorError {
    #[error("pose ({0}, {1}) is off the map or over a VOID cell")]
    PoseOffMap(f64, f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LidarConfig {
    /// Horizontal angular step, radians.
    pub h_res: f64,
    /// Vertical ring angles, radians.
    pub rings: Vec<f64>,
    pub max_range: f64,
    pub range_noise_sigma: f64,
    pub sensor_height: f64,
}

impl Default for LidarConfig {
    fn default() -> Self {
        // 16 rings, -15 deg .. +15 deg in 2 deg steps
        let rings = (0..16)
            .map(|i| (-15.0 + 2.0 * i as f64).to_radians())
            .collect();
        Self {
            h_res: 0.5_f64.to_radians(),
            rings,
            max_range: 30.0,
            range_noise_sigma: 0.01,
            sensor_height: crate::world::SENSOR_HEIGHT,
        }
    }
}

impl LidarConfig {
    pub fn azimuth_count(&self) -> usize {
        (std::f64::consts::TAU / self.h_res).round() as usize
    }
}

/// One LiDAR return, in the robot frame (origin at the ground under the
/// sensor, x forward).
#[derive(Debug, Clone, Copy)]
pub struct ScanPoint {
    pub ring: u16,
    pub azimuth: u16,
    pub p: Vector3<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct Scan {
    pub points: Vec<ScanPoint>,
}

impl Scan {
    /// Debug dump: `ring,azimuth,x,y,z` per point.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("ring,azimuth,x,y,z\n");
        for pt in &self.points {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                pt.ring, pt.azimuth, pt.p.x, pt.p.y, pt.p.z
            ));
        }
        s
    }
}

/// Intersect a 2-D ray (origin `o`, unit direction `d`) with segment
/// [p0, p1]. Returns the ray parameter u > eps of the hit.
fn ray_segment_2d(o: Vec2, d: Vec2, p0: Vec2, p1: Vec2) -> Option<f64> {
    let e = p1 - p0;
    let denom = d.x * e.y - d.y * e.x;
    if denom.abs() < 1e-12 {
        return None; // parallel
    }
    let w = p0 - o;
    let u = (w.x * e.y - w.y * e.x) / denom;
    let v = (w.x * d.y - w.y * d.x) / denom;
    if u > 1e-9 && (0.0..=1.0).contains(&v) {
        Some(u)
    } else {
        None
    }
}

/// Cast all rays of one scan from `pose`. Returns points in the robot frame;
/// misses are dropped. Deterministic given the RNG stream.
pub fn raycast(
    scenario: &Scenario,
    pose: &Pose2,
    cfg: &LidarConfig,
    rng: &mut impl Rng,
) -> Result<Scan, SensorError> {
    let origin = pose.translation();
    if scenario.ground_at(origin) != GroundKind::Ground {
        return Err(SensorError::PoseOffMap(pose.x, pose.y));
    }
    let noise = Normal::new(0.0, cfg.range_noise_sigma.max(0.0)).expect("sigma >= 0");
    let n_az = cfg.azimuth_count();
    let mut points = Vec::new();
    for (ring_idx, &ring) in cfg.rings.iter().enumerate() {
        let tan_r = ring.tan();
        let cos_r = ring.cos();
        for az_idx in 0..n_az {
            let az = az_idx as f64 * cfg.h_res;
            let world_az = pose.theta + az;
            let dir2 = Vec2::new(world_az.cos(), world_az.sin());

            // nearest obstacle hit: u is 2-D travel, z = h + u*tan(ring)
            let mut best_u = f64::INFINITY;
            for ob in &scenario.obstacles {
                if let Some(u) = ray_segment_2d(origin, dir2, ob.p0, ob.p1) {
                    if u < best_u {
                        let z = cfg.sensor_height + u * tan_r;
                        if z >= ob.z_low && z <= ob.z_high {
                            best_u = u;
                        }
                    }
                }
            }
            // ground-plane hit for descending rays, only over GROUND cells
            if ring < 0.0 {
                let u_g = -cfg.sensor_height / tan_r;
                if u_g < best_u {
                    let p_g = origin + dir2 * u_g;
                    if scenario.ground_at(p_g) == GroundKind::Ground {
                        best_u = u_g;
                    }
                }
            }
            if !best_u.is_finite() {
                continue;
            }
            let range = best_u / cos_r;
            if range > cfg.max_range {
                continue;
            }
            let noisy = if cfg.range_noise_sigma > 0.0 {
                range + noise.sample(rng)
            } else {
                range
            };
            let (s_az, c_az) = az.sin_cos();
            points.push(ScanPoint {
                ring: ring_idx as u16,
                azimuth: az_idx as u16,
                p: Vector3::new(
                    noisy * c_az * cos_r,
                    noisy * s_az * cos_r,
                    cfg.sensor_height + noisy * ring.sin(),
                ),
            });
        }
    }
    Ok(Scan { points })
}

/// Per-step odometry noise (standard deviations).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OdometryNoise {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_theta: f64,
}

impl Default for OdometryNoise {
    fn default() -> Self {
        Self { sigma_x: 0.02, sigma_y: 0.02, sigma_theta: 0.005 }
    }
}

impl OdometryNoise {
    pub const ZERO: OdometryNoise = OdometryNoise {
        sigma_x: 0.0,
        sigma_y: 0.0,
        sigma_theta: 0.0,
    };
}

/// Measured relative motion between two ground-truth poses, perturbed by
/// zero-mean Gaussian noise per component. With zero sigmas the result is
/// exactly the ground-truth relative pose.
pub fn odometry(
    prev_gt: &Pose2,
    curr_gt: &Pose2,
    noise: &OdometryNoise,
    rng: &mut impl Rng,
) -> Pose2 {
    let rel = prev_gt.inverse().compose(curr_gt);
    let nx = sample_or_zero(noise.sigma_x, rng);
    let ny = sample_or_zero(noise.sigma_y, rng);
    let nt = sample_or_zero(noise.sigma_theta, rng);
    Pose2::new(rel.x + nx, rel.y + ny, rel.theta + nt)
}

fn sample_or_zero(sigma: f64, rng: &mut impl Rng) -> f64 {
    if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("sigma >= 0").sample(rng)
    } else {
        0.0
    }
}
