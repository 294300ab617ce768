//! SE(2) poses and 2-D oriented lines.
//!
//! Everything downstream (raycasting, wall factors, room midlines) is built
//! on these two types. Angles are always wrapped to (-pi, pi].

use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

pub type Vec2 = Vector2<f64>;

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut r = a % two_pi;
    if r <= -std::f64::consts::PI {
        r += two_pi;
    } else if r > std::f64::consts::PI {
        r -= two_pi;
    }
    r
}

/// Smallest difference between two directions that are equivalent mod pi
/// (undirected axes). Result is in [0, pi/2].
pub fn axis_difference(a: f64, b: f64) -> f64 {
    let mut d = (a - b) % std::f64::consts::PI;
    if d < 0.0 {
        d += std::f64::consts::PI;
    }
    d.min(std::f64::consts::PI - d)
}

/// A rigid transform in the plane: robot or keyframe pose (x, y, heading).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub fn identity() -> Self {
        Self { x: 0.0, y: 0.0, theta: 0.0 }
    }

    pub fn translation(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        let (s, c) = self.theta.sin_cos();
        Matrix2::new(c, -s, s, c)
    }

    /// Group composition: `self` then `other` (other expressed in self's frame).
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )
    }

    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            -(c * self.x + s * self.y),
            -(-s * self.x + c * self.y),
            -self.theta,
        )
    }

    /// Map a point from this pose's frame into the world frame.
    pub fn transform_point(&self, p: Vec2) -> Vec2 {
        let (s, c) = self.theta.sin_cos();
        Vec2::new(self.x + c * p.x - s * p.y, self.y + s * p.x + c * p.y)
    }

    /// Map a world point into this pose's frame.
    pub fn inverse_transform_point(&self, p: Vec2) -> Vec2 {
        let (s, c) = self.theta.sin_cos();
        let dx = p.x - self.x;
        let dy = p.y - self.y;
        Vec2::new(c * dx + s * dy, -s * dx + c * dy)
    }

    /// SE(2) logarithm map: tangent vector (rho_x, rho_y, theta).
    pub fn log(&self) -> Vector3<f64> {
        let th = self.theta;
        // V(th)^-1 = a*I - (th/2)*J with a = (th/2)*cot(th/2)
        let a = half_cot_half(th);
        let b = th / 2.0;
        Vector3::new(
            a * self.x + b * self.y,
            -b * self.x + a * self.y,
            th,
        )
    }
}

/// (th/2) * cot(th/2), with a series expansion near zero.
pub(crate) fn half_cot_half(th: f64) -> f64 {
    if th.abs() < 1e-4 {
        1.0 - th * th / 12.0 - th.powi(4) / 720.0
    } else {
        let h = th / 2.0;
        h * h.cos() / h.sin()
    }
}

/// d/dth of `half_cot_half`.
pub(crate) fn half_cot_half_deriv(th: f64) -> f64 {
    if th.abs() < 1e-4 {
        -th / 6.0 - th.powi(3) / 180.0
    } else {
        let h = th / 2.0;
        0.5 * h.cos() / h.sin() - (th / 4.0) / (h.sin() * h.sin())
    }
}

/// An oriented line in the plane: unit normal at angle `theta_n`, signed
/// offset `d` along that normal (a point p is on the line iff n·p = d).
///
/// The representation is deliberately not forced canonical: the sign of the
/// normal carries which face of a wall was observed. Use [`Line2::canonical`]
/// where the unsigned form is wanted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line2 {
    pub theta_n: f64,
    pub d: f64,
}

impl Line2 {
    pub fn new(theta_n: f64, d: f64) -> Self {
        Self { theta_n: wrap_angle(theta_n), d }
    }

    pub fn normal(&self) -> Vec2 {
        Vec2::new(self.theta_n.cos(), self.theta_n.sin())
    }

    /// Unit tangent (normal rotated +90 degrees).
    pub fn tangent(&self) -> Vec2 {
        Vec2::new(-self.theta_n.sin(), self.theta_n.cos())
    }

    /// Same geometric line, opposite orientation.
    pub fn flipped(&self) -> Line2 {
        Line2::new(self.theta_n + std::f64::consts::PI, -self.d)
    }

    /// Canonical form: d >= 0, and for d = 0 the normal angle lies in
    /// (-pi/2, pi/2].
    pub fn canonical(&self) -> Line2 {
        let mut l = Line2::new(self.theta_n, self.d);
        if l.d < 0.0 {
            l = l.flipped();
        }
        if l.d == 0.0 {
            l.d = 0.0; // normalize -0.0
            let half = std::f64::consts::FRAC_PI_2;
            if l.theta_n <= -half || l.theta_n > half {
                l.theta_n = wrap_angle(l.theta_n + std::f64::consts::PI);
            }
        }
        l
    }

    /// n·p - d: zero on the line, positive on the side the normal points to.
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        self.normal().dot(&p) - self.d
    }

    /// Point on the line at tangential coordinate `s` (s = 0 is the foot of
    /// the perpendicular from the origin).
    pub fn point_at(&self, s: f64) -> Vec2 {
        self.normal() * self.d + self.tangent() * s
    }

    /// Express a world-frame line in the frame of `pose`, keeping orientation.
    pub fn to_frame_oriented(&self, pose: &Pose2) -> Line2 {
        Line2::new(
            self.theta_n - pose.theta,
            self.d - self.normal().dot(&pose.translation()),
        )
    }

    /// Express a line given in the frame of `pose` in the world frame,
    /// keeping orientation.
    pub fn to_world_oriented(&self, pose: &Pose2) -> Line2 {
        let theta_w = wrap_angle(self.theta_n + pose.theta);
        let n_w = Vec2::new(theta_w.cos(), theta_w.sin());
        Line2::new(theta_w, self.d + n_w.dot(&pose.translation()))
    }
}

/// World line into the frame of `pose`, canonicalized.
pub fn line_to_frame(pose: &Pose2, world_line: &Line2) -> Line2 {
    world_line.to_frame_oriented(pose).canonical()
}

/// Line in the frame of `pose` into the world frame, canonicalized.
pub fn line_to_world(pose: &Pose2, local_line: &Line2) -> Line2 {
    local_line.to_world_oriented(pose).canonical()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    const TOL: f64 = 1e-12;

    fn assert_pose_eq(a: &Pose2, b: &Pose2, tol: f64) {
        assert_abs_diff_eq!(a.x, b.x, epsilon = tol);
        assert_abs_diff_eq!(a.y, b.y, epsilon = tol);
        assert_abs_diff_eq!(wrap_angle(a.theta - b.theta), 0.0, epsilon = tol);
    }

    fn random_pose(rng: &mut impl Rng) -> Pose2 {
        Pose2::new(
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
            rng.random_range(-PI..PI),
        )
    }

    #[test]
    fn compose_identity() {
        let p = Pose2::new(3.0, -1.0, 0.7);
        assert_pose_eq(&Pose2::identity().compose(&p), &p, TOL);
        assert_pose_eq(&p.compose(&Pose2::identity()), &p, TOL);
    }

    #[test]
    fn compose_pure_translation() {
        let a = Pose2::new(1.0, 0.0, 0.0);
        assert_pose_eq(&a.compose(&a), &Pose2::new(2.0, 0.0, 0.0), TOL);
    }

    #[test]
    fn compose_quarter_turn() {
        // (0,0,pi/2) o (1,0,0) = (0,1,pi/2): rotation matrix arithmetic.
        let a = Pose2::new(0.0, 0.0, FRAC_PI_2);
        let b = Pose2::new(1.0, 0.0, 0.0);
        assert_pose_eq(&a.compose(&b), &Pose2::new(0.0, 1.0, FRAC_PI_2), TOL);
    }

    #[test]
    fn inverse_identity() {
        assert_pose_eq(&Pose2::identity().inverse(), &Pose2::identity(), TOL);
    }

    #[test]
    fn inverse_quarter_turn() {
        // inverse((1,0,pi/2)) = (0,1,-pi/2): t' = -R(-theta) t.
        let p = Pose2::new(1.0, 0.0, FRAC_PI_2);
        assert_pose_eq(&p.inverse(), &Pose2::new(0.0, 1.0, -FRAC_PI_2), TOL);
        assert_pose_eq(&p.compose(&p.inverse()), &Pose2::identity(), TOL);
    }

    #[test]
    fn group_laws_random() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let c = random_pose(&mut rng);
            // associativity
            assert_pose_eq(&a.compose(&b).compose(&c), &a.compose(&b.compose(&c)), 1e-12);
            // inverse law
            assert_pose_eq(&a.compose(&a.inverse()), &Pose2::identity(), 1e-12);
            assert_pose_eq(&a.inverse().compose(&a), &Pose2::identity(), 1e-12);
        }
    }

    #[test]
    fn log_pure_translation() {
        let p = Pose2::new(-1.0, 0.0, 0.0);
        let t = p.log();
        assert_abs_diff_eq!(t.x, -1.0, epsilon = TOL);
        assert_abs_diff_eq!(t.y, 0.0, epsilon = TOL);
        assert_abs_diff_eq!(t.z, 0.0, epsilon = TOL);
    }

    #[test]
    fn log_series_matches_closed_form() {
        // Continuity of the V^-1 coefficient across the series switch.
        for th in [-2e-4, -1e-4, -5e-5, 5e-5, 1e-4, 2e-4] {
            let h = th / 2.0_f64;
            let exact = h * h.cos() / h.sin();
            assert_abs_diff_eq!(half_cot_half(th), exact, epsilon = 1e-13);
        }
    }

    #[test]
    fn line_canonical_flip_equivalence() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let l = Line2::new(rng.random_range(-PI..PI), rng.random_range(-8.0..8.0));
            let c1 = l.canonical();
            let c2 = l.flipped().canonical();
            assert_abs_diff_eq!(wrap_angle(c1.theta_n - c2.theta_n), 0.0, epsilon = TOL);
            assert_abs_diff_eq!(c1.d, c2.d, epsilon = TOL);
            // idempotence
            let c3 = c1.canonical();
            assert_eq!(c1.theta_n, c3.theta_n);
            assert_eq!(c1.d, c3.d);
            assert!(c1.d >= 0.0);
        }
    }

    #[test]
    fn line_zero_offset_normal_range() {
        let c = Line2::new(PI, 0.0).canonical();
        assert_abs_diff_eq!(c.theta_n, 0.0, epsilon = TOL);
        let c = Line2::new(-FRAC_PI_2, 0.0).canonical();
        assert_abs_diff_eq!(c.theta_n, FRAC_PI_2, epsilon = TOL);
    }

    #[test]
    fn line_to_frame_identity() {
        let l = Line2::new(0.3, 2.0);
        let f = line_to_frame(&Pose2::identity(), &l);
        assert_abs_diff_eq!(f.theta_n, 0.3, epsilon = TOL);
        assert_abs_diff_eq!(f.d, 2.0, epsilon = TOL);
    }

    #[test]
    fn line_to_frame_pure_translation() {
        // d' = d - n·t before canonicalization.
        let l = Line2::new(0.0, 5.0);
        let pose = Pose2::new(2.0, 0.0, 0.0);
        let f = l.to_frame_oriented(&pose);
        assert_abs_diff_eq!(f.theta_n, 0.0, epsilon = TOL);
        assert_abs_diff_eq!(f.d, 3.0, epsilon = TOL);
    }

    #[test]
    fn line_to_frame_pure_rotation() {
        let l = Line2::new(1.0, 2.0);
        let pose = Pose2::new(0.0, 0.0, 0.25);
        let f = l.to_frame_oriented(&pose);
        assert_abs_diff_eq!(f.theta_n, 0.75, epsilon = TOL);
        assert_abs_diff_eq!(f.d, 2.0, epsilon = TOL);
    }

    #[test]
    fn line_round_trip_random() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for _ in 0..10_000 {
            let pose = random_pose(&mut rng);
            let l = Line2::new(rng.random_range(-PI..PI), rng.random_range(0.0..8.0)).canonical();
            let rt = line_to_frame(&pose, &line_to_world(&pose, &l));
            assert_abs_diff_eq!(wrap_angle(rt.theta_n - l.theta_n), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(rt.d, l.d, epsilon = 1e-12);
            // points stay on the line under oriented transforms
            let s = rng.random_range(-5.0..5.0);
            let p_world = l.point_at(s);
            let local = l.to_frame_oriented(&pose);
            assert_abs_diff_eq!(
                local.signed_distance(pose.inverse_transform_point(p_world)),
                0.0,
                epsilon = 1e-12
            );
        }
    }
}
