//! Traversable ground extraction: per-scan ground candidate selection with a
//! vertical-alignment plane fit and step test, sparse-kernel (BGK) score
//! smoothing, and a count-weighted global merge that keeps the map consistent
//! across re-observations.

use crate::geometry::{Pose2, Vec2};
use crate::sensor::Scan;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TravError {
    #[error("grid cell size mismatch: {0} vs {1}")]
    ConfigError(f64, f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TravConfig {
    pub cell_size: f64,
    /// Traversability threshold on the smoothed score.
    pub tau: f64,
    /// Max plane tilt from vertical alignment, degrees.
    pub phi_max_deg: f64,
    /// Max height step to any 8-neighbor, meters.
    pub s_max: f64,
    /// Ground-candidate band above the cell's minimal height, meters.
    pub delta_g: f64,
    /// Minimum ground candidates per cell (outlier rejection).
    pub n_min: usize,
    pub kernel_radius: f64,
}

impl Default for TravConfig {
    fn default() -> Self {
        Self {
            cell_size: 0.2,
            tau: 0.5,
            phi_max_deg: 30.0,
            s_max: 0.15,
            delta_g: 0.15,
            n_min: 3,
            kernel_radius: 0.6,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TravCell {
    pub z_mean: f64,
    /// Vertical alignment of the fitted plane normal, in [0, 1].
    pub normal_z: f64,
    /// Traversability score in [0, 1] (raw 0/1 before smoothing).
    pub score: f64,
    pub n_points: usize,
    pub observed_count: u32,
}

/// A traversable cell center: vertex of the free-space node graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TravNode {
    pub center: Vec2,
    pub cell_index: (i64, i64),
}

#[derive(Debug, Clone)]
pub struct TravGrid {
    pub cell_size: f64,
    pub cells: BTreeMap<(i64, i64), TravCell>,
}

impl TravGrid {
    pub fn new(cell_size: f64) -> Self {
        Self { cell_size, cells: BTreeMap::new() }
    }

    pub fn cell_index(&self, p: Vec2) -> (i64, i64) {
        (
            (p.x / self.cell_size).floor() as i64,
            (p.y / self.cell_size).floor() as i64,
        )
    }

    pub fn cell_center(&self, idx: (i64, i64)) -> Vec2 {
        Vec2::new(
            (idx.0 as f64 + 0.5) * self.cell_size,
            (idx.1 as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn is_traversable(&self, idx: (i64, i64), cfg: &TravConfig) -> bool {
        self.cells
            .get(&idx)
            .map(|c| c.score >= cfg.tau && c.n_points >= cfg.n_min)
            .unwrap_or(false)
    }

    /// All traversable nodes, in deterministic index order.
    pub fn nodes(&self, cfg: &TravConfig) -> Vec<TravNode> {
        self.cells
            .iter()
            .filter(|(_, c)| c.score >= cfg.tau && c.n_points >= cfg.n_min)
            .map(|(idx, _)| TravNode { center: self.cell_center(*idx), cell_index: *idx })
            .collect()
    }
}

/// The sparse kernel used for BGK smoothing; k(0) = 1, k(r) = 0 for r >= rho.
pub fn sparse_kernel(r: f64, rho: f64) -> f64 {
    if r >= rho {
        return 0.0;
    }
    let x = std::f64::consts::TAU * r / rho;
    (2.0 + x.cos()) * (1.0 - r / rho) / 3.0 + x.sin() / std::f64::consts::TAU
}

/// Segment ground candidates from one scan taken at `pose` into a fresh
/// per-scan grid with raw 0/1 scores.
///
/// Per cell: points within `delta_g` of the cell's minimal height are ground
/// candidates; a total-least-squares plane fit over them gives the vertical
/// alignment; raw score 1 requires alignment >= cos(phi_max), every
/// 8-neighbor height step <= s_max, and n_min candidates.
pub fn segment_ground(scan: &Scan, pose: &Pose2, cfg: &TravConfig) -> TravGrid {
    let mut grid = TravGrid::new(cfg.cell_size);
    let mut buckets: BTreeMap<(i64, i64), Vec<Vector3<f64>>> = BTreeMap::new();
    for pt in &scan.points {
        let w2 = pose.transform_point(Vec2::new(pt.p.x, pt.p.y));
        let idx = grid.cell_index(w2);
        buckets.entry(idx).or_default().push(Vector3::new(w2.x, w2.y, pt.p.z));
    }

    for (idx, pts) in &buckets {
        let z_min = pts.iter().map(|p| p.z).fold(f64::INFINITY, f64::min);
        let cand: Vec<&Vector3<f64>> =
            pts.iter().filter(|p| p.z <= z_min + cfg.delta_g).collect();
        let n = cand.len();
        let z_mean = cand.iter().map(|p| p.z).sum::<f64>() / n as f64;
        let normal_z = if n >= cfg.n_min { fit_normal_z(&cand) } else { 0.0 };
        grid.cells.insert(
            *idx,
            TravCell { z_mean, normal_z, score: 0.0, n_points: n, observed_count: 1 },
        );
    }

    // raw score pass: needs neighbor z_means
    let phi_cos = cfg.phi_max_deg.to_radians().cos();
    let snapshot: Vec<((i64, i64), f64, f64, usize)> = grid
        .cells
        .iter()
        .map(|(idx, c)| (*idx, c.z_mean, c.normal_z, c.n_points))
        .collect();
    for (idx, z_mean, normal_z, n_points) in snapshot {
        let mut ok = n_points >= cfg.n_min && normal_z >= phi_cos;
        if ok {
            'nb: for dj in -1..=1i64 {
                for di in -1..=1i64 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    if let Some(nb) = grid.cells.get(&(idx.0 + di, idx.1 + dj)) {
                        if (nb.z_mean - z_mean).abs() > cfg.s_max {
                            ok = false;
                            break 'nb;
                        }
                    }
                }
            }
        }
        grid.cells.get_mut(&idx).unwrap().score = if ok { 1.0 } else { 0.0 };
    }
    grid
}

/// Vertical alignment |n_z| of the total-least-squares plane through `pts`.
fn fit_normal_z(pts: &[&Vector3<f64>]) -> f64 {
    let n = pts.len() as f64;
    let mean = pts.iter().fold(Vector3::zeros(), |a, p| a + **p) / n;
    let mut cov = Matrix3::zeros();
    for p in pts {
        let d = **p - mean;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = cov.symmetric_eigen();
    let mut k_min = 0;
    for k in 1..3 {
        if eig.eigenvalues[k] < eig.eigenvalues[k_min] {
            k_min = k;
        }
    }
    eig.eigenvectors.column(k_min).z.abs()
}

/// Smooth raw scores with the sparse kernel over neighbors within
/// `kernel_radius` (the cell itself included).
pub fn bgk_smooth(grid: &TravGrid, kernel_radius: f64) -> TravGrid {
    let mut out = grid.clone();
    let reach = (kernel_radius / grid.cell_size).ceil() as i64;
    for (idx, cell) in &grid.cells {
        let c = grid.cell_center(*idx);
        let mut num = 0.0;
        let mut den = 0.0;
        for dj in -reach..=reach {
            for di in -reach..=reach {
                let nidx = (idx.0 + di, idx.1 + dj);
                if let Some(nb) = grid.cells.get(&nidx) {
                    let k = sparse_kernel((grid.cell_center(nidx) - c).norm(), kernel_radius);
                    num += k * nb.score;
                    den += k;
                }
            }
        }
        out.cells.get_mut(idx).unwrap().score = if den > 0.0 { num / den } else { cell.score };
    }
    out
}

/// Merge a per-scan result into the global grid: per cell, running mean of
/// z_mean, normal_z, and score weighted by observed_count.
///
/// The incremental form `mean += (x - mean) * w/(w_total)` leaves the mean
/// bit-exact when re-observing identical values, which keeps repeated
/// zero-noise traverses byte-identical.
pub fn global_update(global: &mut TravGrid, scan_result: &TravGrid) -> Result<(), TravError> {
    if global.cell_size != scan_result.cell_size {
        return Err(TravError::ConfigError(global.cell_size, scan_result.cell_size));
    }
    for (idx, s) in &scan_result.cells {
        match global.cells.get_mut(idx) {
            None => {
                global.cells.insert(*idx, *s);
            }
            Some(g) => {
                let w_new = s.observed_count as f64;
                let total = (g.observed_count + s.observed_count) as f64;
                let f = w_new / total;
                g.z_mean += (s.z_mean - g.z_mean) * f;
                g.normal_z += (s.normal_z - g.normal_z) * f;
                g.score += (s.score - g.score) * f;
                g.n_points = g.n_points.max(s.n_points);
                g.observed_count += s.observed_count;
            }
        }
    }
    Ok(())
}
