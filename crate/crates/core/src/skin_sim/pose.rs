use nalgebra::{Matrix3, Rotation3, Vector3, Vector6};

/// Rigid-body velocity: linear (m/s) then angular (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
}

impl Twist {
    pub fn new(linear: Vector3<f64>, angular: Vector3<f64>) -> Self {
        Self { linear, angular }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            linear: Vector3::new(v[0], v[1], v[2]),
            angular: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.linear.x,
            self.linear.y,
            self.linear.z,
            self.angular.x,
            self.angular.y,
            self.angular.z,
        ]
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::from_row_slice(&self.to_array())
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.linear * k, self.angular * k)
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Re-express in a frame rotated by `r`: applies `(r, r)` blockwise.
    pub fn rotated(&self, r: &Matrix3<f64>) -> Self {
        Self::new(r * self.linear, r * self.angular)
    }
}

impl std::ops::Add for Twist {
    type Output = Twist;
    fn add(self, o: Twist) -> Twist {
        Twist::new(self.linear + o.linear, self.angular + o.angular)
    }
}

/// Finger (end-effector) pose in the base frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FingerPose {
    pub rotation: Rotation3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for FingerPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl FingerPose {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        self.rotation.matrix()
    }

    /// World point expressed in the finger frame.
    pub fn to_local(&self, world: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse() * (world - self.translation)
    }

    pub fn to_world(&self, local: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * local + self.translation
    }

    /// `‖RᵀR − I‖_∞` and `|det R − 1|`.
    pub fn orthonormality_error(&self) -> (f64, f64) {
        let r = self.matrix();
        let e = (r.transpose() * r - Matrix3::identity()).abs().max();
        (e, (r.determinant() - 1.0).abs())
    }

    /// Row-major rotation followed by translation.
    pub fn to_array(&self) -> [f64; 12] {
        let r = self.matrix();
        let t = &self.translation;
        [
            r[(0, 0)], r[(0, 1)], r[(0, 2)],
            r[(1, 0)], r[(1, 1)], r[(1, 2)],
            r[(2, 0)], r[(2, 1)], r[(2, 2)],
            t.x, t.y, t.z,
        ]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        let m = Matrix3::from_row_slice(&v[..9]);
        Self {
            rotation: Rotation3::from_matrix_unchecked(m),
            translation: Vector3::new(v[9], v[10], v[11]),
        }
    }
}

/// Integrates an end-effector-frame twist over `dt`.
pub fn step_pose(pose: &FingerPose, a: &Twist, dt: f64) -> FingerPose {
    let translation = pose.translation + pose.rotation * (a.linear * dt);
    let delta = Rotation3::from_scaled_axis(a.angular * dt);
    let mut rotation = pose.rotation * delta;
    rotation.renormalize();
    FingerPose {
        rotation,
        translation,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn zero_twist_keeps_pose() {
        let p = FingerPose::new(
            Rotation3::from_euler_angles(0.3, -0.2, 1.1),
            Vector3::new(0.1, 0.2, 0.3),
        );
        let q = step_pose(&p, &Twist::zero(), 0.01);
        assert_relative_eq!(q.matrix(), p.matrix(), epsilon = 1e-15);
        assert_eq!(q.translation, p.translation);
    }

    #[test]
    fn full_turn_returns_to_start() {
        let dt = 0.01;
        let p = FingerPose::identity();
        let a = Twist::new(Vector3::zeros(), Vector3::new(2.0 * PI / dt, 0.0, 0.0));
        let q = step_pose(&p, &a, dt);
        assert_relative_eq!(q.matrix(), p.matrix(), epsilon = 1e-12);
    }

    #[test]
    fn pure_translation() {
        let p = FingerPose::identity();
        let q = step_pose(&p, &Twist::new(Vector3::new(0.5, 0.0, 0.0), Vector3::zeros()), 0.2);
        assert_relative_eq!(q.translation, Vector3::new(0.1, 0.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn translation_uses_current_orientation() {
        let p = FingerPose::new(Rotation3::from_axis_angle(&Vector3::z_axis(), PI / 2.0), Vector3::zeros());
        let q = step_pose(&p, &Twist::new(Vector3::new(1.0, 0.0, 0.0), Vector3::zeros()), 1.0);
        assert_relative_eq!(q.translation, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn long_random_walk_stays_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = FingerPose::identity();
        for _ in 0..100_000 {
            let a = Twist::from_slice(&(0..6).map(|_| rng.random_range(-3.0..3.0)).collect::<Vec<_>>());
            p = step_pose(&p, &a, 0.01);
        }
        let (orth, det) = p.orthonormality_error();
        assert!(orth <= 1e-9 && det <= 1e-9, "{orth} {det}");
    }

    #[test]
    fn array_round_trip() {
        let p = FingerPose::new(Rotation3::from_euler_angles(0.1, 0.5, -0.7), Vector3::new(1.0, -2.0, 3.0));
        let q = FingerPose::from_slice(&p.to_array());
        assert_eq!(p, q);
    }
}
