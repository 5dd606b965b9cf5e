//! Frame changes of twists between the base and the end-effector frame.

use nalgebra::Matrix3;

use crate::skin_sim::Twist;

/// Applies `(Rᵀ, Rᵀ)` blockwise.
pub fn base_to_ee(base: &Twist, r: &Matrix3<f64>) -> Twist {
    base.rotated(&r.transpose())
}

/// Applies `(R, R)` blockwise.
pub fn ee_to_base(ee: &Twist, r: &Matrix3<f64>) -> Twist {
    ee.rotated(r)
}

/// Arithmetic mean of a window of twists.
pub fn mean_twist(ts: &[Twist]) -> Twist {
    let n = ts.len().max(1) as f64;
    ts.iter().fold(Twist::zero(), |acc, t| acc + *t).scale(1.0 / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Vector3};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn identity_rotation_is_a_no_op() {
        let t = Twist::from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(base_to_ee(&t, &Matrix3::identity()), t);
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let t = base_to_ee(&Twist::from_slice(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]), &r);
        assert_eq!(t.to_array(), [0.0, -1.0, 0.0, 0.0, 0.0, 0.0]);
        let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), PI / 2.0);
        let t2 = base_to_ee(&Twist::from_slice(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]), rz.matrix());
        assert!((t2.linear - Vector3::new(0.0, -1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn opposite_twists_average_to_zero() {
        let v = Twist::from_slice(&[0.1, -0.2, 0.3, 0.0, 0.5, -0.5]);
        assert_eq!(mean_twist(&[v, v.scale(-1.0)]), Twist::zero());
        assert!((mean_twist(&[v, v, v]).to_vector() - v.to_vector()).amax() < 1e-15);
    }

    fn twist() -> impl Strategy<Value = Twist> {
        prop::array::uniform6(-5.0..5.0f64).prop_map(|a| Twist::from_slice(&a))
    }

    fn rotation() -> impl Strategy<Value = Matrix3<f64>> {
        (-PI..PI, -PI..PI, -PI..PI)
            .prop_map(|(a, b, c)| *Rotation3::from_euler_angles(a, b, c).matrix())
    }

    proptest! {
        #[test]
        fn round_trip_and_norms(t in twist(), r in rotation()) {
            let e = base_to_ee(&t, &r);
            let back = ee_to_base(&e, &r);
            prop_assert!((back.to_vector() - t.to_vector()).amax() <= 1e-12);
            prop_assert!((e.linear.norm() - t.linear.norm()).abs() <= 1e-12);
            prop_assert!((e.angular.norm() - t.angular.norm()).abs() <= 1e-12);
        }

        #[test]
        fn averaging_commutes_with_constant_rotation(
            ts in prop::collection::vec(twist(), 1..20),
            r in rotation(),
        ) {
            let a = base_to_ee(&mean_twist(&ts), &r);
            let converted: Vec<Twist> = ts.iter().map(|t| base_to_ee(t, &r)).collect();
            let b = mean_twist(&converted);
            prop_assert!((a.to_vector() - b.to_vector()).amax() <= 1e-12);
        }
    }
}
