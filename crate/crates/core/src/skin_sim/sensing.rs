use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::pose::FingerPose;
use super::surface::SkinSurface;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactState {
    pub in_contact: bool,
    /// Finger-frame point on the skin nearest the anchor.
    pub contact_point: Vector3<f64>,
    pub pressure: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TactileSample {
    pub t: f64,
    pub s: Vec<f64>,
    /// Always `-mean(s)`.
    pub pressure: f64,
    pub contact: ContactState,
    pub pose: FingerPose,
}

/// Negated mean electrode activation.
pub fn pressure_of(s: &[f64]) -> f64 {
    -s.iter().sum::<f64>() / s.len() as f64
}

/// Noise-free electrode pattern for a contact at `c` with pressure `p`.
pub fn activation(surface: &SkinSurface, c: &Vector3<f64>, p: f64) -> Vec<f64> {
    let e = surface.electrodes().len();
    if p == 0.0 {
        return vec![0.0; e];
    }
    let sigma = surface.params().kernel_width;
    let mesh = surface.mesh();
    let k: Vec<f64> = surface
        .electrode_fields()
        .iter()
        .map(|f| {
            let g = f.distance_to(mesh, c);
            (-g * g / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let mean = k.iter().sum::<f64>() / e as f64;
    k.iter().map(|ki| -p * (ki - mean + 1.0)).collect()
}

/// Contact of the fixed world-frame `anchor` against the skin at `pose`.
pub fn contact_state(surface: &SkinSurface, pose: &FingerPose, anchor: &Vector3<f64>) -> ContactState {
    let q = pose.to_local(anchor);
    let proj = surface.project(&q);
    let pressure = if proj.inside {
        surface.params().pressure_gain * proj.distance
    } else {
        0.0
    };
    ContactState {
        in_contact: pressure > 0.0,
        contact_point: proj.point,
        pressure,
    }
}

/// Reads the skin; `noise` adds the configured electrode noise.
pub fn sense<R: Rng + ?Sized>(
    surface: &SkinSurface,
    pose: &FingerPose,
    anchor: &Vector3<f64>,
    t: f64,
    noise: Option<&mut R>,
) -> TactileSample {
    let contact = contact_state(surface, pose, anchor);
    let mut s = activation(surface, &contact.contact_point, contact.pressure);
    let std = surface.params().noise_std;
    if let (Some(rng), true) = (noise, std > 0.0) {
        let n = Normal::new(0.0, std).expect("finite noise std");
        for v in &mut s {
            *v += n.sample(rng);
        }
    }
    TactileSample {
        t,
        pressure: pressure_of(&s),
        s,
        contact,
        pose: *pose,
    }
}

/// Sample with the skin pressed at surface point `c` to pressure `p`, used
/// to synthesize servo targets.
pub fn synthetic_sample(surface: &SkinSurface, c: &Vector3<f64>, p: f64) -> TactileSample {
    let s = activation(surface, c, p);
    TactileSample {
        t: 0.0,
        pressure: pressure_of(&s),
        s,
        contact: ContactState {
            in_contact: p > 0.0,
            contact_point: *c,
            pressure: p,
        },
        pose: FingerPose::identity(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skin_sim::pose::{step_pose, Twist};
    use crate::skin_sim::surface::SurfaceParams;
    use nalgebra::Rotation3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    fn surface() -> &'static SkinSurface {
        static S: OnceLock<SkinSurface> = OnceLock::new();
        S.get_or_init(|| SkinSurface::new(SurfaceParams::default()).unwrap())
    }

    fn quiet() -> Option<&'static mut ChaCha8Rng> {
        None
    }

    #[test]
    fn far_anchor_reads_nothing() {
        let s = sense(surface(), &FingerPose::identity(), &Vector3::new(0.0, 0.05, 0.0), 0.0, quiet());
        assert!(s.s.iter().all(|&v| v == 0.0));
        assert_eq!(s.pressure, 0.0);
        assert!(!s.contact.in_contact);
    }

    #[test]
    fn pressing_on_an_electrode_peaks_there() {
        let surf = surface();
        for (i, e) in surf.electrodes().iter().enumerate() {
            let anchor = e - surf.normal_at(e) * 0.001;
            let s = sense(surf, &FingerPose::identity(), &anchor, 0.0, quiet());
            let arg = (0..s.s.len())
                .max_by(|&a, &b| s.s[a].abs().total_cmp(&s.s[b].abs()))
                .unwrap();
            assert_eq!(arg, i);
        }
    }

    #[test]
    fn pressure_identity_over_random_poses() {
        let surf = surface();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut contacts = 0;
        for _ in 0..100 {
            let c = surf.point_at(rng.random_range(-0.015..0.006), rng.random_range(-1.5..1.5));
            let depth = rng.random_range(-0.0005..0.002);
            let local = c - surf.normal_at(&c) * depth;
            let rot = Rotation3::from_euler_angles(
                rng.random_range(-3.0..3.0),
                rng.random_range(-1.5..1.5),
                rng.random_range(-3.0..3.0),
            );
            let pose = FingerPose::new(rot, Vector3::new(0.1, -0.2, 0.3));
            let anchor = pose.to_world(&local);
            let s = sense(surf, &pose, &anchor, 0.0, quiet());
            assert!((s.pressure - s.contact.pressure).abs() <= 1e-12);
            assert!(surf.residual(&s.contact.contact_point).abs() <= 1e-9);
            assert_eq!(s.contact.in_contact, s.contact.pressure > 0.0);
            contacts += usize::from(s.contact.in_contact);
        }
        assert!(contacts > 50);
    }

    #[test]
    fn noisy_sensing_is_seed_deterministic() {
        let surf = surface();
        let anchor = surf.point_at(-0.004, 0.1) * 0.9;
        let pose = FingerPose::identity();
        let a = sense(surf, &pose, &anchor, 0.0, Some(&mut ChaCha8Rng::seed_from_u64(1)));
        let b = sense(surf, &pose, &anchor, 0.0, Some(&mut ChaCha8Rng::seed_from_u64(1)));
        assert_eq!(a, b);
        assert_eq!(a.pressure, pressure_of(&a.s));
    }

    #[test]
    fn contact_point_moves_continuously() {
        let surf = surface();
        let c = surf.point_at(-0.006, 0.3);
        let anchor = c - surf.normal_at(&c) * 0.001;
        let mut pose = FingerPose::identity();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dt = 0.01;
        let eps = 0.05;
        let mut prev = contact_state(surf, &pose, &anchor).contact_point;
        for _ in 0..200 {
            let v: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = Twist::from_slice(&v);
            let a = a.scale(eps / a.norm());
            pose = step_pose(&pose, &a, dt);
            let next = contact_state(surf, &pose, &anchor).contact_point;
            assert!((next - prev).norm() <= 3.0 * eps * dt, "{}", (next - prev).norm());
            prev = next;
        }
    }
}
