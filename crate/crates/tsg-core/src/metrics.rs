//! Consistency and efficiency metrics over paired traverses: room
//! re-detection frequency, Dice overlap of matched room footprints, room
//! center distance, start/end trajectory error, and accumulated PGO time.

use crate::geometry::{axis_difference, Vec2};
use crate::pipeline::{rooms_of_traverse, RunArtifacts};
use crate::rooms::{RoomCandidate, RoomConfig, RoomEvent, RoomKind};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("room footprint is unbounded and has no observed span to truncate with")]
    UnboundedRoom,
    #[error("trajectory is not closed (start/end ground truth differ by {0} m)")]
    OpenTrajectory(f64),
    #[error("run produced fewer than {0} traverses")]
    MissingTraverse(usize),
}

/// An oriented rectangle footprint: center, axis of the first extent, and
/// half-lengths.
#[derive(Debug, Clone, Copy)]
pub struct OrientedRect {
    pub center: Vec2,
    pub axis: f64,
    pub half: (f64, f64),
}

impl OrientedRect {
    pub fn area(&self) -> f64 {
        4.0 * self.half.0 * self.half.1
    }

    pub fn corners(&self) -> [Vec2; 4] {
        let u = Vec2::new(self.axis.cos(), self.axis.sin());
        let v = Vec2::new(-self.axis.sin(), self.axis.cos());
        let (a, b) = (u * self.half.0, v * self.half.1);
        [
            self.center + a + b,
            self.center - a + b,
            self.center - a - b,
            self.center + a - b,
        ]
    }

    fn edges_inward(&self) -> [(Vec2, f64); 4] {
        // half-plane form n·p <= d for each side
        let u = Vec2::new(self.axis.cos(), self.axis.sin());
        let v = Vec2::new(-self.axis.sin(), self.axis.cos());
        [
            (u, u.dot(&self.center) + self.half.0),
            (-u, -u.dot(&self.center) + self.half.0),
            (v, v.dot(&self.center) + self.half.1),
            (-v, -v.dot(&self.center) + self.half.1),
        ]
    }
}

/// Footprint of an extracted room; TWO_WALL corridors truncate the
/// unbounded direction to the observed node span.
pub fn room_footprint(c: &RoomCandidate) -> Result<OrientedRect, MetricsError> {
    let len_b = match c.extents.1 {
        Some(l) => l,
        None => {
            if c.observed_span > 0.0 {
                return Ok(OrientedRect {
                    center: c.center,
                    axis: c.axis,
                    half: (c.observed_span / 2.0, c.extents.0 / 2.0),
                });
            }
            return Err(MetricsError::UnboundedRoom);
        }
    };
    Ok(OrientedRect { center: c.center, axis: c.axis, half: (c.extents.0 / 2.0, len_b / 2.0) })
}

/// Exact intersection area of two oriented rectangles (Sutherland-Hodgman
/// clipping plus the shoelace formula).
pub fn rect_intersection_area(a: &OrientedRect, b: &OrientedRect) -> f64 {
    let mut poly: Vec<Vec2> = a.corners().to_vec();
    for (n, d) in b.edges_inward() {
        if poly.is_empty() {
            return 0.0;
        }
        let mut out: Vec<Vec2> = Vec::with_capacity(poly.len() + 2);
        for i in 0..poly.len() {
            let p = poly[i];
            let q = poly[(i + 1) % poly.len()];
            let dp = n.dot(&p) - d;
            let dq = n.dot(&q) - d;
            if dp <= 0.0 {
                out.push(p);
                if dq > 0.0 {
                    out.push(p + (q - p) * (dp / (dp - dq)).abs());
                }
            } else if dq <= 0.0 {
                out.push(p + (q - p) * (dp / (dp - dq)));
            }
        }
        poly = out;
    }
    polygon_area(&poly)
}

fn polygon_area(poly: &[Vec2]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        s += p.x * q.y - q.x * p.y;
    }
    s.abs() / 2.0
}

/// Dice coefficient 2|A∩B| / (|A| + |B|) of two room footprints.
pub fn dcs(a: &RoomCandidate, b: &RoomCandidate) -> Result<f64, MetricsError> {
    let ra = room_footprint(a)?;
    let rb = room_footprint(b)?;
    Ok(dcs_rects(&ra, &rb))
}

pub fn dcs_rects(a: &OrientedRect, b: &OrientedRect) -> f64 {
    let key = |r: &OrientedRect| (r.center.x, r.center.y, r.axis, r.half.0, r.half.1);
    if key(a) == key(b) {
        return 1.0; // identical footprints: avoid clipping round-off
    }
    // fixed argument order keeps dcs(a, b) bit-equal to dcs(b, a)
    let (p, q) = if key(a) <= key(b) { (a, b) } else { (b, a) };
    let inter = rect_intersection_area(p, q);
    let denom = p.area() + q.area();
    if denom <= 0.0 {
        0.0
    } else {
        2.0 * inter / denom
    }
}

#[derive(Debug, Clone, Default)]
pub struct MatchResult {
    /// Number of second-traverse rooms recognized as first-traverse rooms.
    pub n_re: usize,
    /// Matched index pairs (first, second) with their DCS.
    pub pairs: Vec<(usize, usize, f64)>,
    /// Center distance of the single most-overlapped pair.
    pub d_center: f64,
    pub dcs_mean: f64,
    pub dcs_best: f64,
}

/// Greedy maximum-overlap matching: repeatedly pair the (a, b) with the
/// highest DCS and remove both. A pair only counts as the same room when it
/// would also associate (same kind, center and axis inside the gates);
/// overlap alone would credit any over-segmented sliver as a re-detection.
pub fn match_traverses(first: &[RoomCandidate], second: &[RoomCandidate]) -> MatchResult {
    let gates = RoomConfig::default();
    let same_room = |a: &RoomCandidate, b: &RoomCandidate| {
        if a.kind != b.kind {
            return false;
        }
        if (a.center - b.center).norm() >= gates.assoc_center_dist {
            return false;
        }
        let da = axis_difference(a.axis, b.axis);
        let tol = gates.assoc_axis_deg.to_radians();
        da < tol
            || (a.kind == RoomKind::FourWall
                && (da - std::f64::consts::FRAC_PI_2).abs() < tol)
    };
    let mut used_a = vec![false; first.len()];
    let mut used_b = vec![false; second.len()];
    let mut scores: Vec<(usize, usize, f64)> = Vec::new();
    for (i, a) in first.iter().enumerate() {
        for (j, b) in second.iter().enumerate() {
            if !same_room(a, b) {
                continue;
            }
            if let Ok(s) = dcs(a, b) {
                if s > 0.0 {
                    scores.push((i, j, s));
                }
            }
        }
    }
    // highest DCS first; index order breaks exact ties deterministically
    scores.sort_by(|x, y| {
        y.2.partial_cmp(&x.2).unwrap().then_with(|| (x.0, x.1).cmp(&(y.0, y.1)))
    });
    let mut result = MatchResult::default();
    for (i, j, s) in scores {
        if used_a[i] || used_b[j] {
            continue;
        }
        used_a[i] = true;
        used_b[j] = true;
        if result.pairs.is_empty() {
            result.d_center = (first[i].center - second[j].center).norm();
            result.dcs_best = s;
        }
        result.pairs.push((i, j, s));
    }
    result.n_re = result.pairs.len();
    result.dcs_mean = if result.pairs.is_empty() {
        0.0
    } else {
        result.pairs.iter().map(|p| p.2).sum::<f64>() / result.pairs.len() as f64
    };
    result
}

/// One row of the consistency/efficiency report.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_first: f64,
    pub n_second: f64,
    pub n_re: f64,
    pub f_re: f64,
    pub dcs_mean: f64,
    pub dcs_best: f64,
    pub d_center: f64,
    pub ate: f64,
    pub ate_rmse: f64,
    pub ate_dead_reckoning: f64,
    pub t_pgo_total: f64,
    pub t_pgo_mean: f64,
}

impl MetricsReport {
    pub fn csv_header() -> &'static str {
        "N1st,N2nd,Nre,f_re,DCS,dcs_best,d_center,ATE,ate_rmse,ate_dr,T_PGO,t_pgo_mean"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.n_first,
            self.n_second,
            self.n_re,
            self.f_re,
            self.dcs_mean,
            self.dcs_best,
            self.d_center,
            self.ate,
            self.ate_rmse,
            self.ate_dead_reckoning,
            self.t_pgo_total,
            self.t_pgo_mean
        )
    }
}

/// Re-detection ratio N_re / N^1st (0 when nothing was extracted).
pub fn f_re(n_re: f64, n_first: f64) -> f64 {
    if n_first > 0.0 {
        n_re / n_first
    } else {
        0.0
    }
}

/// Compute the Table-1-shaped metrics from a closed double-traverse run.
pub fn compute_metrics(artifacts: &RunArtifacts) -> Result<MetricsReport, MetricsError> {
    let start = artifacts.gt_traj.first().expect("non-empty trajectory");
    let end = artifacts.gt_traj.last().expect("non-empty trajectory");
    let gap = (start.translation() - end.translation()).norm();
    if gap > 1e-9 {
        return Err(MetricsError::OpenTrajectory(gap));
    }
    if artifacts.n_traverses < 2 {
        return Err(MetricsError::MissingTraverse(2));
    }
    let first: Vec<RoomCandidate> = rooms_of_traverse(artifacts, 0)
        .iter()
        .map(|e: &RoomEvent| e.candidate.clone())
        .collect();
    let second: Vec<RoomCandidate> = rooms_of_traverse(artifacts, 1)
        .iter()
        .map(|e| e.candidate.clone())
        .collect();
    let m = match_traverses(&first, &second);
    debug_assert!(m.n_re <= first.len().min(second.len()));

    let est_start = artifacts.est_traj.first().unwrap().translation();
    let est_end = artifacts.est_traj.last().unwrap().translation();
    let ate = (est_end - est_start).norm();
    let dr_start = artifacts.dr_traj.first().unwrap().translation();
    let dr_end = artifacts.dr_traj.last().unwrap().translation();
    let ate_dr = (dr_end - dr_start).norm();
    let ate_rmse = (artifacts
        .est_traj
        .iter()
        .zip(artifacts.gt_traj.iter())
        .map(|(e, g)| (e.translation() - g.translation()).norm_squared())
        .sum::<f64>()
        / artifacts.est_traj.len() as f64)
        .sqrt();

    Ok(MetricsReport {
        n_first: first.len() as f64,
        n_second: second.len() as f64,
        n_re: m.n_re as f64,
        f_re: f_re(m.n_re as f64, first.len() as f64),
        dcs_mean: m.dcs_mean,
        dcs_best: m.dcs_best,
        d_center: m.d_center,
        ate,
        ate_rmse,
        ate_dead_reckoning: ate_dr,
        t_pgo_total: artifacts.t_pgo_total(),
        t_pgo_mean: artifacts.t_pgo_mean(),
    })
}

/// Arithmetic mean of per-repeat reports (this is how fractional room
/// counts arise).
pub fn mean_report(reports: &[MetricsReport]) -> MetricsReport {
    let n = reports.len().max(1) as f64;
    let mut m = MetricsReport::default();
    for r in reports {
        m.n_first += r.n_first;
        m.n_second += r.n_second;
        m.n_re += r.n_re;
        m.f_re += r.f_re;
        m.dcs_mean += r.dcs_mean;
        m.dcs_best += r.dcs_best;
        m.d_center += r.d_center;
        m.ate += r.ate;
        m.ate_rmse += r.ate_rmse;
        m.ate_dead_reckoning += r.ate_dead_reckoning;
        m.t_pgo_total += r.t_pgo_total;
        m.t_pgo_mean += r.t_pgo_mean;
    }
    m.n_first /= n;
    m.n_second /= n;
    m.n_re /= n;
    m.f_re /= n;
    m.dcs_mean /= n;
    m.dcs_best /= n;
    m.d_center /= n;
    m.ate /= n;
    m.ate_rmse /= n;
    m.ate_dead_reckoning /= n;
    m.t_pgo_total /= n;
    m.t_pgo_mean /= n;
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rooms::RoomKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn rect_room(cx: f64, cy: f64, axis: f64, la: f64, lb: f64) -> RoomCandidate {
        RoomCandidate {
            kind: RoomKind::FourWall,
            center: Vec2::new(cx, cy),
            axis,
            extents: (la, Some(lb)),
            observed_span: la,
            wall_ids: vec![],
        }
    }

    #[test]
    fn dcs_identical_is_exactly_one() {
        let a = rect_room(2.0, 1.5, 0.3, 4.0, 3.0);
        assert_eq!(dcs(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn dcs_disjoint_is_zero() {
        let a = rect_room(0.0, 0.0, 0.0, 2.0, 2.0);
        let b = rect_room(10.0, 0.0, 0.0, 2.0, 2.0);
        assert_eq!(dcs(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn dcs_half_shifted_unit_squares() {
        // [0,1]^2 vs [0.5,1.5]x[0,1]: 2*0.5/(1+1) = 0.5
        let a = rect_room(0.5, 0.5, 0.0, 1.0, 1.0);
        let b = rect_room(1.0, 0.5, 0.0, 1.0, 1.0);
        let d = dcs(&a, &b).unwrap();
        assert!((d - 0.5).abs() < 1e-12, "dcs {d}");
    }

    #[test]
    fn dcs_monte_carlo_cross_check() {
        // rotated overlapping rectangles, checked against a 1e6-sample
        // Monte Carlo estimate of the intersection area
        let a = OrientedRect { center: Vec2::new(0.0, 0.0), axis: 0.4, half: (1.2, 0.7) };
        let b = OrientedRect { center: Vec2::new(0.5, 0.2), axis: 1.1, half: (0.9, 0.8) };
        let exact = rect_intersection_area(&a, &b);
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let n = 1_000_000;
        let mut hits = 0u64;
        let (lo, hi) = (-2.5, 2.5);
        let inside = |r: &OrientedRect, p: Vec2| {
            let d = p - r.center;
            let u = Vec2::new(r.axis.cos(), r.axis.sin());
            let v = Vec2::new(-r.axis.sin(), r.axis.cos());
            d.dot(&u).abs() <= r.half.0 && d.dot(&v).abs() <= r.half.1
        };
        for _ in 0..n {
            let p = Vec2::new(rng.random_range(lo..hi), rng.random_range(lo..hi));
            if inside(&a, p) && inside(&b, p) {
                hits += 1;
            }
        }
        let est = hits as f64 / n as f64 * (hi - lo) * (hi - lo);
        // 1e6 samples over a 25 m^2 box: ~3 sigma tolerance
        assert!((exact - est).abs() < 0.02, "exact {exact} vs MC {est}");
    }

    #[test]
    fn dcs_symmetry() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..200 {
            let a = rect_room(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(0.0..std::f64::consts::PI),
                rng.random_range(0.5..4.0),
                rng.random_range(0.5..4.0),
            );
            let b = rect_room(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(0.0..std::f64::consts::PI),
                rng.random_range(0.5..4.0),
                rng.random_range(0.5..4.0),
            );
            assert_eq!(dcs(&a, &b).unwrap(), dcs(&b, &a).unwrap());
        }
    }

    #[test]
    fn unbounded_room_without_span_errors() {
        let mut c = rect_room(0.0, 0.0, 0.0, 2.0, 2.0);
        c.extents.1 = None;
        c.observed_span = 0.0;
        assert!(matches!(room_footprint(&c), Err(MetricsError::UnboundedRoom)));
        // with a span, it truncates
        c.observed_span = 5.0;
        let r = room_footprint(&c).unwrap();
        assert_eq!(r.half, (2.5, 1.0));
    }

    #[test]
    fn match_identical_lists() {
        let rooms = vec![
            rect_room(2.0, 1.5, 0.0, 4.0, 3.0),
            rect_room(6.0, 2.1, 0.0, 4.0, 4.2),
        ];
        let m = match_traverses(&rooms, &rooms);
        assert_eq!(m.n_re, 2);
        assert_eq!(m.d_center, 0.0);
        assert_eq!(m.dcs_mean, 1.0);
    }

    #[test]
    fn match_empty_second() {
        let rooms = vec![rect_room(2.0, 1.5, 0.0, 4.0, 3.0)];
        let m = match_traverses(&rooms, &[]);
        assert_eq!(m.n_re, 0);
    }

    #[test]
    fn match_offset_pair_center_distance() {
        let first = vec![rect_room(2.0, 1.5, 0.0, 4.0, 3.0)];
        let second = vec![rect_room(2.3, 1.5, 0.0, 4.0, 3.0)];
        let m = match_traverses(&first, &second);
        assert_eq!(m.n_re, 1);
        assert!((m.d_center - 0.3).abs() < 1e-12);
    }

    #[test]
    fn f_re_table_rows() {
        // the published comparison rows reproduce exactly
        assert!((f_re(5.3, 10.5) - 0.50).abs() < 0.005);
        assert!((f_re(4.0, 4.7) - 0.85).abs() < 0.005);
    }

    #[test]
    fn mean_report_averages_counts() {
        let mut a = MetricsReport::default();
        a.n_first = 4.0;
        let mut b = MetricsReport::default();
        b.n_first = 5.0;
        let m = mean_report(&[a, b]);
        assert_eq!(m.n_first, 4.5);
    }
}
