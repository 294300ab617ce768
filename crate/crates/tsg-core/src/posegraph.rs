//! Hierarchical factor graph over keyframe poses, wall lines, and room
//! centers, optimized jointly with Levenberg-Marquardt on dense normal
//! equations (desk-scale graphs need no sparse solver).
//!
//! State increments are additive: poses (dx, dy, dtheta) with angle re-wrap,
//! walls (dtheta_n, dd) with angle re-wrap, rooms (dcx, dcy). Residuals
//! resolve line-orientation flips internally, so wall variables stay in the
//! oriented (face-aware) representation.

use crate::geometry::{half_cot_half, half_cot_half_deriv, wrap_angle, Line2, Pose2, Vec2};
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("factor references missing variable {0}")]
    MissingVariable(String),
    #[error("normal equations are rank deficient (missing anchor?)")]
    SingularSystem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarRef {
    Pose(usize),
    Wall(u32),
    Room(u32),
}

impl VarRef {
    pub fn dim(&self) -> usize {
        match self {
            VarRef::Pose(_) => 3,
            VarRef::Wall(_) | VarRef::Room(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Factor {
    PriorPose {
        pose: usize,
        measured: Pose2,
        /// Information (inverse covariance) diagonal.
        info: [f64; 3],
    },
    Odom {
        from: usize,
        to: usize,
        measured: Pose2,
        info: [f64; 3],
    },
    PoseWall {
        pose: usize,
        wall: u32,
        /// Observed line in the robot frame (canonical, d >= 0).
        measured: Line2,
        info: [f64; 2],
    },
    /// Room center constrained to the midline of one opposing wall pair.
    RoomPair {
        room: u32,
        wall_a: u32,
        wall_b: u32,
        info: f64,
    },
}

impl Factor {
    pub fn dim(&self) -> usize {
        match self {
            Factor::PriorPose { .. } | Factor::Odom { .. } => 3,
            Factor::PoseWall { .. } => 2,
            Factor::RoomPair { .. } => 1,
        }
    }

    pub fn vars(&self) -> Vec<VarRef> {
        match self {
            Factor::PriorPose { pose, .. } => vec![VarRef::Pose(*pose)],
            Factor::Odom { from, to, .. } => vec![VarRef::Pose(*from), VarRef::Pose(*to)],
            Factor::PoseWall { pose, wall, .. } => vec![VarRef::Pose(*pose), VarRef::Wall(*wall)],
            Factor::RoomPair { room, wall_a, wall_b, .. } => {
                vec![VarRef::Room(*room), VarRef::Wall(*wall_a), VarRef::Wall(*wall_b)]
            }
        }
    }

    fn info_diag(&self) -> DVector<f64> {
        match self {
            Factor::PriorPose { info, .. } | Factor::Odom { info, .. } => {
                DVector::from_row_slice(info)
            }
            Factor::PoseWall { info, .. } => DVector::from_row_slice(info),
            Factor::RoomPair { info, .. } => DVector::from_element(1, *info),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OptOptions {
    pub max_iters: usize,
    pub eps: f64,
    pub init_lambda: f64,
    pub max_lambda: f64,
}

impl Default for OptOptions {
    fn default() -> Self {
        Self { max_iters: 50, eps: 1e-9, init_lambda: 1e-4, max_lambda: 1e8 }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OptStats {
    pub chi2_initial: f64,
    pub chi2_final: f64,
    pub iters: usize,
    pub wall_time_s: f64,
    pub dims: usize,
    pub n_factors: usize,
}

/// New variables and factors appended in one keyframe step.
#[derive(Debug, Clone, Default)]
pub struct GraphDelta {
    pub poses: Vec<(usize, Pose2)>,
    pub walls: Vec<(u32, Line2)>,
    pub rooms: Vec<(u32, Vec2)>,
    pub factors: Vec<Factor>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FactorGraph {
    pub poses: BTreeMap<usize, Pose2>,
    pub walls: BTreeMap<u32, Line2>,
    pub rooms: BTreeMap<u32, Vec2>,
    pub factors: Vec<Factor>,
}

fn rot(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// J = [[0,-1],[1,0]] (generator of 2-D rotations).
fn skew() -> Matrix2<f64> {
    Matrix2::new(0.0, -1.0, 1.0, 0.0)
}

impl FactorGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pose(&self, id: usize) -> Option<&Pose2> {
        self.poses.get(&id)
    }

    fn var_missing(&self, f: &Factor) -> Option<String> {
        for v in f.vars() {
            let ok = match v {
                VarRef::Pose(id) => self.poses.contains_key(&id),
                VarRef::Wall(id) => self.walls.contains_key(&id),
                VarRef::Room(id) => self.rooms.contains_key(&id),
            };
            if !ok {
                return Some(format!("{v:?}"));
            }
        }
        None
    }

    /// Residual of one factor at the current variable values.
    pub fn residual(&self, f: &Factor) -> Result<DVector<f64>, GraphError> {
        if let Some(v) = self.var_missing(f) {
            return Err(GraphError::MissingVariable(v));
        }
        Ok(self.linearize_factor(f, false).0)
    }

    /// Residual plus analytic Jacobian blocks per connected variable.
    pub fn factor_linearization(
        &self,
        f: &Factor,
    ) -> Result<(DVector<f64>, Vec<(VarRef, DMatrix<f64>)>), GraphError> {
        if let Some(v) = self.var_missing(f) {
            return Err(GraphError::MissingVariable(v));
        }
        let (r, jac) = self.linearize_factor(f, true);
        Ok((r, jac))
    }

    fn linearize_factor(
        &self,
        f: &Factor,
        with_jac: bool,
    ) -> (DVector<f64>, Vec<(VarRef, DMatrix<f64>)>) {
        match f {
            Factor::PriorPose { pose, measured, .. } => {
                let x = self.poses[pose];
                let r = DVector::from_column_slice(&[
                    x.x - measured.x,
                    x.y - measured.y,
                    wrap_angle(x.theta - measured.theta),
                ]);
                let jac = if with_jac {
                    vec![(VarRef::Pose(*pose), DMatrix::identity(3, 3))]
                } else {
                    vec![]
                };
                (r, jac)
            }
            Factor::Odom { from, to, measured, .. } => {
                let xi = self.poses[from];
                let xj = self.poses[to];
                let diff = xi.inverse().compose(&xj);
                let err_pose = measured.inverse().compose(&diff);
                let e = err_pose.log();
                let r = DVector::from_column_slice(&[e.x, e.y, e.z]);
                if !with_jac {
                    return (r, vec![]);
                }
                // v = R(-tm)(u - tm_t), u = R(-ti)(tj - ti), psi = tj_th - ti_th - tm_th
                let psi = err_pose.theta;
                let v = Vector2::new(err_pose.x, err_pose.y);
                let a = half_cot_half(psi);
                let da = half_cot_half_deriv(psi);
                let j2 = skew();
                let vinv = Matrix2::identity() * a - j2 * (psi / 2.0);
                let dvinv_v = Vector2::new(da * v.x, da * v.y) - j2 * v * 0.5;
                let u = rot(-xi.theta) * (xj.translation() - xi.translation());
                let r_m = rot(-measured.theta);
                let r_mi = rot(-measured.theta - xi.theta);
                let dv_dti = -r_mi;
                let dv_dthi = -(r_m * (j2 * u));
                let dv_dtj = r_mi;

                let mut ji = DMatrix::zeros(3, 3);
                ji.view_mut((0, 0), (2, 2)).copy_from(&(vinv * dv_dti));
                let col = vinv * dv_dthi - dvinv_v;
                ji[(0, 2)] = col.x;
                ji[(1, 2)] = col.y;
                ji[(2, 2)] = -1.0;

                let mut jj = DMatrix::zeros(3, 3);
                jj.view_mut((0, 0), (2, 2)).copy_from(&(vinv * dv_dtj));
                jj[(0, 2)] = dvinv_v.x;
                jj[(1, 2)] = dvinv_v.y;
                jj[(2, 2)] = 1.0;

                (r, vec![(VarRef::Pose(*from), ji), (VarRef::Pose(*to), jj)])
            }
            Factor::PoseWall { pose, wall, measured, .. } => {
                let x = self.poses[pose];
                let l = self.walls[wall];
                let n_w = l.normal();
                let theta_raw = l.theta_n - x.theta;
                let d_raw = l.d - n_w.dot(&x.translation());
                // resolve the representation flip toward the observation
                let flip = wrap_angle(theta_raw - measured.theta_n).abs() > std::f64::consts::FRAC_PI_2;
                let s = if flip { -1.0 } else { 1.0 };
                let theta_pred = if flip { theta_raw + std::f64::consts::PI } else { theta_raw };
                let d_pred = s * d_raw;
                let r = DVector::from_column_slice(&[
                    wrap_angle(theta_pred - measured.theta_n),
                    d_pred - measured.d,
                ]);
                if !with_jac {
                    return (r, vec![]);
                }
                // d_raw = d_w - cos(th_w) x - sin(th_w) y
                let mut jp = DMatrix::zeros(2, 3);
                jp[(0, 2)] = -1.0;
                jp[(1, 0)] = -s * n_w.x;
                jp[(1, 1)] = -s * n_w.y;
                let mut jw = DMatrix::zeros(2, 2);
                jw[(0, 0)] = 1.0;
                // d(d_raw)/d(th_w) = -(-sin, cos)·t
                jw[(1, 0)] = s * (l.theta_n.sin() * x.x - l.theta_n.cos() * x.y);
                jw[(1, 1)] = s;
                (r, vec![(VarRef::Pose(*pose), jp), (VarRef::Wall(*wall), jw)])
            }
            Factor::RoomPair { room, wall_a, wall_b, .. } => {
                let c = self.rooms[room];
                let la = self.walls[wall_a];
                let lb = self.walls[wall_b];
                let n_a = la.normal();
                // re-represent wall b so the normals oppose
                let s_b = if n_a.dot(&lb.normal()) < 0.0 { 1.0 } else { -1.0 };
                let e = n_a.dot(&c) - (la.d - s_b * lb.d) / 2.0;
                let r = DVector::from_element(1, e);
                if !with_jac {
                    return (r, vec![]);
                }
                let jc = DMatrix::from_row_slice(1, 2, &[n_a.x, n_a.y]);
                // d(e)/d(theta_a) = c · n_a'(theta)
                let ja = DMatrix::from_row_slice(
                    1,
                    2,
                    &[-la.theta_n.sin() * c.x + la.theta_n.cos() * c.y, -0.5],
                );
                let jb = DMatrix::from_row_slice(1, 2, &[0.0, s_b * 0.5]);
                (
                    r,
                    vec![
                        (VarRef::Room(*room), jc),
                        (VarRef::Wall(*wall_a), ja),
                        (VarRef::Wall(*wall_b), jb),
                    ],
                )
            }
        }
    }

    /// Total weighted squared error.
    pub fn chi2(&self) -> f64 {
        self.factors
            .iter()
            .map(|f| {
                let (r, _) = self.linearize_factor(f, false);
                let w = f.info_diag();
                r.iter().zip(w.iter()).map(|(e, wi)| wi * e * e).sum::<f64>()
            })
            .sum()
    }

    fn index(&self) -> (BTreeMap<VarRef, usize>, usize) {
        let mut map = BTreeMap::new();
        let mut off = 0;
        for id in self.poses.keys() {
            map.insert(VarRef::Pose(*id), off);
            off += 3;
        }
        for id in self.walls.keys() {
            map.insert(VarRef::Wall(*id), off);
            off += 2;
        }
        for id in self.rooms.keys() {
            map.insert(VarRef::Room(*id), off);
            off += 2;
        }
        (map, off)
    }

    /// Stacked residual and per-factor Jacobian blocks (variable order:
    /// poses, walls, rooms; each block keyed by variable reference).
    #[allow(clippy::type_complexity)]
    pub fn linearize(
        &self,
    ) -> Result<(Vec<Vec<(VarRef, DMatrix<f64>)>>, DVector<f64>), GraphError> {
        let total: usize = self.factors.iter().map(|f| f.dim()).sum();
        let mut residuals = DVector::zeros(total);
        let mut blocks = Vec::with_capacity(self.factors.len());
        let mut at = 0;
        for f in &self.factors {
            let (r, jac) = self.factor_linearization(f)?;
            residuals.rows_mut(at, r.len()).copy_from(&r);
            at += r.len();
            blocks.push(jac);
        }
        Ok((blocks, residuals))
    }

    fn build_normal_equations(
        &self,
        map: &BTreeMap<VarRef, usize>,
        dims: usize,
    ) -> Result<(DMatrix<f64>, DVector<f64>), GraphError> {
        let mut h = DMatrix::zeros(dims, dims);
        let mut b = DVector::zeros(dims);
        for f in &self.factors {
            let (r, jac) = self.factor_linearization(f)?;
            let w = f.info_diag();
            for (va, ja) in &jac {
                let oa = map[va];
                // b += J^T W r
                let mut jtw_r = DVector::<f64>::zeros(ja.ncols());
                for row in 0..ja.nrows() {
                    for col in 0..ja.ncols() {
                        jtw_r[col] += ja[(row, col)] * w[row] * r[row];
                    }
                }
                for col in 0..ja.ncols() {
                    b[oa + col] += jtw_r[col];
                }
                for (vb, jb) in &jac {
                    let ob = map[vb];
                    for i in 0..ja.ncols() {
                        for j in 0..jb.ncols() {
                            let mut acc = 0.0;
                            for row in 0..ja.nrows() {
                                acc += ja[(row, i)] * w[row] * jb[(row, j)];
                            }
                            h[(oa + i, ob + j)] += acc;
                        }
                    }
                }
            }
        }
        Ok((h, b))
    }

    fn apply_step(&mut self, map: &BTreeMap<VarRef, usize>, dx: &DVector<f64>) {
        for (v, off) in map {
            match v {
                VarRef::Pose(id) => {
                    let p = self.poses.get_mut(id).unwrap();
                    *p = Pose2::new(p.x + dx[*off], p.y + dx[*off + 1], p.theta + dx[*off + 2]);
                }
                VarRef::Wall(id) => {
                    let l = self.walls.get_mut(id).unwrap();
                    *l = Line2::new(l.theta_n + dx[*off], l.d + dx[*off + 1]);
                }
                VarRef::Room(id) => {
                    let c = self.rooms.get_mut(id).unwrap();
                    c.x += dx[*off];
                    c.y += dx[*off + 1];
                }
            }
        }
    }

    /// Levenberg-Marquardt: damping x10 on rejected steps, /10 on accepted;
    /// stops on relative chi2 change below eps, damping above the cap, or
    /// the iteration limit. chi2 never increases across accepted steps.
    pub fn optimize(&mut self, opts: &OptOptions) -> Result<OptStats, GraphError> {
        let t0 = std::time::Instant::now();
        let has_anchor = self.factors.iter().any(|f| matches!(f, Factor::PriorPose { .. }));
        if !self.poses.is_empty() && !has_anchor {
            return Err(GraphError::SingularSystem);
        }
        let (map, dims) = self.index();
        let n_factors = self.factors.len();
        let chi2_initial = self.chi2();
        let mut chi2 = chi2_initial;
        let mut lambda = opts.init_lambda;
        let mut iters = 0;
        if dims == 0 || n_factors == 0 {
            return Ok(OptStats {
                chi2_initial,
                chi2_final: chi2,
                iters,
                wall_time_s: t0.elapsed().as_secs_f64(),
                dims,
                n_factors,
            });
        }
        while iters < opts.max_iters {
            iters += 1;
            let (h, b) = self.build_normal_equations(&map, dims)?;
            let mut accepted = false;
            while lambda <= opts.max_lambda {
                let mut hd = h.clone();
                for i in 0..dims {
                    hd[(i, i)] += lambda;
                }
                let Some(chol) = hd.cholesky() else {
                    lambda *= 10.0;
                    continue;
                };
                let dx = chol.solve(&(-&b));
                let saved = (self.poses.clone(), self.walls.clone(), self.rooms.clone());
                self.apply_step(&map, &dx);
                let new_chi2 = self.chi2();
                if new_chi2 <= chi2 {
                    let rel = (chi2 - new_chi2) / chi2.max(opts.eps);
                    chi2 = new_chi2;
                    lambda = (lambda / 10.0).max(1e-12);
                    accepted = true;
                    debug_assert!(chi2 <= chi2_initial + 1e-12);
                    if rel < opts.eps {
                        return Ok(OptStats {
                            chi2_initial,
                            chi2_final: chi2,
                            iters,
                            wall_time_s: t0.elapsed().as_secs_f64(),
                            dims,
                            n_factors,
                        });
                    }
                    break;
                }
                self.poses = saved.0;
                self.walls = saved.1;
                self.rooms = saved.2;
                lambda *= 10.0;
            }
            if !accepted {
                if lambda > opts.max_lambda && chi2 == chi2_initial && !chi2.is_finite() {
                    return Err(GraphError::SingularSystem);
                }
                break; // damping cap reached: converged as far as LM can go
            }
        }
        Ok(OptStats {
            chi2_initial,
            chi2_final: chi2,
            iters,
            wall_time_s: t0.elapsed().as_secs_f64(),
            dims,
            n_factors,
        })
    }

    /// Append new variables and factors, then optimize; per-call wall time
    /// accumulates into the pipeline's PGO total.
    pub fn incremental_update(
        &mut self,
        delta: GraphDelta,
        opts: &OptOptions,
    ) -> Result<OptStats, GraphError> {
        for (id, p) in delta.poses {
            self.poses.insert(id, p);
        }
        for (id, l) in delta.walls {
            self.walls.insert(id, l);
        }
        for (id, c) in delta.rooms {
            self.rooms.insert(id, c);
        }
        for f in delta.factors {
            if let Some(v) = self.var_missing(&f) {
                return Err(GraphError::MissingVariable(v));
            }
            self.factors.push(f);
        }
        self.optimize(opts)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serialization")
    }
}

/// Default information diagonals used by the pipeline.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PgoConfig {
    pub prior_sigma: [f64; 3],
    pub wall_sigma: [f64; 2],
    pub room_sigma: f64,
    pub opts: OptOptions,
}

impl Default for PgoConfig {
    fn default() -> Self {
        Self {
            prior_sigma: [1e-3, 1e-3, 1e-3],
            wall_sigma: [0.01, 0.02],
            room_sigma: 0.1,
            opts: OptOptions::default(),
        }
    }
}

pub fn info_from_sigma3(s: &[f64; 3]) -> [f64; 3] {
    [1.0 / (s[0] * s[0]), 1.0 / (s[1] * s[1]), 1.0 / (s[2] * s[2])]
}

pub fn info_from_sigma2(s: &[f64; 2]) -> [f64; 2] {
    [1.0 / (s[0] * s[0]), 1.0 / (s[1] * s[1])]
}

/// Central finite differences of a factor residual with respect to every
/// connected variable. Test oracle for the analytic Jacobians.
pub fn numeric_jacobians(
    graph: &FactorGraph,
    f: &Factor,
    h: f64,
) -> Vec<(VarRef, DMatrix<f64>)> {
    let mut out = Vec::new();
    for v in f.vars() {
        let dim_v = v.dim();
        let r0 = graph.residual(f).unwrap();
        let mut jac = DMatrix::zeros(r0.len(), dim_v);
        for k in 0..dim_v {
            let mut gp = graph.clone();
            let mut gm = graph.clone();
            perturb(&mut gp, v, k, h);
            perturb(&mut gm, v, k, -h);
            let rp = gp.residual(f).unwrap();
            let rm = gm.residual(f).unwrap();
            for row in 0..r0.len() {
                let mut diff = rp[row] - rm[row];
                // angular residual rows may wrap
                if diff.abs() > std::f64::consts::PI {
                    diff = wrap_angle(rp[row]) - wrap_angle(rm[row]);
                }
                jac[(row, k)] = diff / (2.0 * h);
            }
        }
        out.push((v, jac));
    }
    out
}

fn perturb(graph: &mut FactorGraph, v: VarRef, k: usize, h: f64) {
    match v {
        VarRef::Pose(id) => {
            let p = graph.poses.get_mut(&id).unwrap();
            match k {
                0 => p.x += h,
                1 => p.y += h,
                _ => p.theta = wrap_angle(p.theta + h),
            }
        }
        VarRef::Wall(id) => {
            let l = graph.walls.get_mut(&id).unwrap();
            match k {
                0 => l.theta_n = wrap_angle(l.theta_n + h),
                _ => l.d += h,
            }
        }
        VarRef::Room(id) => {
            let c = graph.rooms.get_mut(&id).unwrap();
            match k {
                0 => c.x += h,
                _ => c.y += h,
            }
        }
    }
}
