//! Closed-loop tactile servoing on the simulated skin.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::KvConfig;
use crate::datapipe::twist::ee_to_base;
use crate::dynamics::{id_ll, id_ng, id_nj, DynamicsModel, IdKind, PrevStep};
use crate::embedding::Autoencoder;
use crate::error::{Error, Result};
use crate::skin_sim::demo::{CONTROL_RATE, TACTILE_RATE, TICKS_PER_SAMPLE};
use crate::skin_sim::sensing::synthetic_sample;
use crate::skin_sim::{sense, step_pose, FingerPose, SkinSurface, TactileSample, Twist};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TargetKind {
    /// Reached by rolling the finger about its axis.
    Rotation,
    /// Reached by sliding along the finger axis.
    Translation,
}

impl TargetKind {
    pub const ALL: [TargetKind; 2] = [TargetKind::Rotation, TargetKind::Translation];

    pub fn name(self) -> &'static str {
        match self {
            TargetKind::Rotation => "rotation",
            TargetKind::Translation => "translation",
        }
    }
}

impl std::str::FromStr for TargetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rotation" => Ok(TargetKind::Rotation),
            "translation" => Ok(TargetKind::Translation),
            _ => Err(Error::Config(format!("target kind must be rotation|translation, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServoRunConfig {
    pub controller: IdKind,
    pub beta: f64,
    pub ng_alpha: f64,
    pub max_steps: usize,
    pub dt: f64,
    /// Success radius in geodesic meters.
    pub tolerance: f64,
    pub max_linear: f64,
    pub max_angular: f64,
    /// Cutoff of the causal first-order smoother on the electrode stream.
    pub smoother_hz: f64,
    pub max_lost_steps: usize,
    /// Steps kept running after the first success.
    pub settle_steps: usize,
    pub noise: bool,
}

impl Default for ServoRunConfig {
    fn default() -> Self {
        Self {
            controller: IdKind::Nj,
            beta: 0.1,
            ng_alpha: 1.0,
            max_steps: 200,
            dt: 0.31,
            tolerance: 0.003,
            max_linear: 0.05,
            max_angular: 0.3,
            smoother_hz: 1.0,
            max_lost_steps: 5,
            settle_steps: 20,
            noise: true,
        }
    }
}

impl ServoRunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.tolerance > 0.0) {
            return bad("servo tolerance must be positive");
        }
        if self.max_steps < 1 {
            return bad("servo max_steps must be at least 1");
        }
        if !(self.dt > 0.0) || !(self.beta > 0.0) || !(self.ng_alpha > 0.0) {
            return bad("servo dt, beta and ng_alpha must be positive");
        }
        if !(self.max_linear > 0.0 && self.max_angular > 0.0) {
            return bad("servo action limits must be positive");
        }
        if !(self.smoother_hz > 0.0) {
            return bad("servo smoother cutoff must be positive");
        }
        Ok(())
    }

    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let controller = match kv.raw("servo.controller") {
            Some(v) => v.parse()?,
            None => d.controller,
        };
        let cfg = Self {
            controller,
            beta: kv.get_or("servo.beta", d.beta)?,
            ng_alpha: kv.get_or("servo.ng_alpha", d.ng_alpha)?,
            max_steps: kv.get_or("servo.max_steps", d.max_steps)?,
            dt: kv.get_or("servo.dt", d.dt)?,
            tolerance: kv.get_or("servo.tolerance", d.tolerance)?,
            max_linear: kv.get_or("servo.max_linear", d.max_linear)?,
            max_angular: kv.get_or("servo.max_angular", d.max_angular)?,
            smoother_hz: kv.get_or("servo.smoother_hz", d.smoother_hz)?,
            max_lost_steps: kv.get_or("servo.max_lost_steps", d.max_lost_steps)?,
            settle_steps: kv.get_or("servo.settle_steps", d.settle_steps)?,
            noise: kv.get_bool_or("servo.noise", d.noise)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("servo.controller", self.controller);
        kv.set("servo.beta", self.beta);
        kv.set("servo.ng_alpha", self.ng_alpha);
        kv.set("servo.max_steps", self.max_steps);
        kv.set("servo.dt", self.dt);
        kv.set("servo.tolerance", self.tolerance);
        kv.set("servo.max_linear", self.max_linear);
        kv.set("servo.max_angular", self.max_angular);
        kv.set("servo.smoother_hz", self.smoother_hz);
        kv.set("servo.max_lost_steps", self.max_lost_steps);
        kv.set("servo.settle_steps", self.settle_steps);
        kv.set("servo.noise", self.noise);
        kv
    }
}

/// Start pose and target reading of one servo run.
#[derive(Debug, Clone, PartialEq)]
pub struct ServoScenario {
    pub kind: TargetKind,
    pub anchor: Vector3<f64>,
    pub start: FingerPose,
    pub target_point: Vector3<f64>,
    pub target: TactileSample,
}

/// Random start contact inside the sensing patch, pressed to `depth`, and a
/// target contact reachable by a pure roll or a pure slide.
pub fn servo_scenario(surface: &SkinSurface, kind: TargetKind, depth: f64, seed: u64) -> Result<ServoScenario> {
    let p = surface.params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s_lo = p.patch_s_min + 0.0015;
    let s_hi = p.patch_s_max.min(0.002);
    let phi_lo = p.patch_phi_min + 0.1;
    let phi_hi = p.patch_phi_max - 0.1;
    let (s0, phi0, s1, phi1) = match kind {
        TargetKind::Rotation => {
            let dphi = rng.random_range(0.55..0.8);
            let phi0 = rng.random_range(phi_lo + dphi..phi_hi);
            let (phi0, phi1) = if rng.random_bool(0.5) { (phi0, phi0 - dphi) } else { (phi0 - dphi, phi0) };
            let s0 = rng.random_range(s_lo..s_hi);
            (s0, phi0, s0, phi1)
        }
        TargetKind::Translation => {
            let ds = rng.random_range(0.004..0.006);
            let s0 = rng.random_range(s_lo + ds..s_hi);
            let (s0, s1) = if rng.random_bool(0.5) { (s0, s0 - ds) } else { (s0 - ds, s0) };
            let phi0 = rng.random_range(phi_lo..phi_hi);
            (s0, phi0, s1, phi0)
        }
    };
    let q: nalgebra::Vector4<f64> = nalgebra::Vector4::from_fn(|_, _| rng.sample(StandardNormal));
    let rotation = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(q)).to_rotation_matrix();
    let c0 = surface.point_at(s0, phi0);
    let local = c0 - surface.normal_at(&c0) * depth;
    let anchor = Vector3::zeros();
    let start = FingerPose::new(rotation, anchor - rotation * local);
    let target_point = surface.point_at(s1, phi1);
    let target = synthetic_sample(surface, &target_point, p.pressure_gain * depth);
    Ok(ServoScenario {
        kind,
        anchor,
        start,
        target_point,
        target,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServoStep {
    pub step: usize,
    /// Smoothed electrode reading the controller saw.
    pub s: Vec<f64>,
    pub z: [f64; 3],
    pub latent_dist: f64,
    pub geo_dist: f64,
    pub in_contact: bool,
    /// End-effector-frame action applied after this reading (zero on the
    /// final row).
    pub action: [f64; 6],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServoLog {
    pub z_target: [f64; 3],
    pub steps: Vec<ServoStep>,
    /// First step within tolerance.
    pub success_step: Option<usize>,
    pub aborted: bool,
}

impl ServoLog {
    pub fn success(&self) -> bool {
        self.success_step.is_some()
    }

    pub fn geo(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.geo_dist).collect()
    }

    /// Every `window`-step span ends no farther from the target than it
    /// started. Runs shorter than the window are checked end to end.
    pub fn windows_non_increasing(&self, window: usize) -> bool {
        let g = self.geo();
        if g.len() <= window {
            return g.last() <= g.first();
        }
        (0..g.len() - window).all(|i| g[i + window] <= g[i])
    }

    /// Mean geodesic error over the last tenth of the run (at least one step).
    pub fn tail_mean(&self) -> f64 {
        let g = self.geo();
        let k = (g.len() / 10).max(1);
        g[g.len() - k..].iter().sum::<f64>() / k as f64
    }
}

fn clip(v: Vector3<f64>, max: f64) -> Vector3<f64> {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

/// Per-part norm clip of a 6-D action.
pub fn clip_action(a: &Vector6<f64>, max_linear: f64, max_angular: f64) -> Vector6<f64> {
    let lin = clip(a.fixed_rows::<3>(0).into_owned(), max_linear);
    let ang = clip(a.fixed_rows::<3>(3).into_owned(), max_angular);
    Vector6::new(lin.x, lin.y, lin.z, ang.x, ang.y, ang.z)
}

struct World<'a> {
    surface: &'a SkinSurface,
    anchor: Vector3<f64>,
    pose: FingerPose,
    smoothed: Option<TactileSample>,
    gain: f64,
    rng: Option<ChaCha8Rng>,
    t: f64,
}

impl World<'_> {
    fn read(&mut self) {
        let raw = sense(self.surface, &self.pose, &self.anchor, self.t, self.rng.as_mut());
        self.smoothed = Some(match self.smoothed.take() {
            None => raw,
            Some(mut prev) => {
                for (p, r) in prev.s.iter_mut().zip(&raw.s) {
                    *p += self.gain * (r - *p);
                }
                TactileSample { s: prev.s, ..raw }
            }
        });
    }

    /// Holds the base-frame twist for `dt`, reading the skin at 100 Hz.
    fn hold(&mut self, base: &Twist, dt: f64) {
        let ticks = (dt * CONTROL_RATE).round() as usize;
        for tick in 1..=ticks {
            let ee = base.rotated(&self.pose.matrix().transpose());
            self.pose = step_pose(&self.pose, &ee, 1.0 / CONTROL_RATE);
            self.t += 1.0 / CONTROL_RATE;
            if tick % TICKS_PER_SAMPLE == 0 {
                self.read();
            }
        }
    }
}

fn controller_action(
    model: &DynamicsModel,
    cfg: &ServoRunConfig,
    z_target: &Vector3<f64>,
    z: &Vector3<f64>,
    prev: Option<PrevStep>,
) -> Result<Vector6<f64>> {
    if !cfg.controller.compatible_with(model.kind) {
        return Err(Error::Config(format!(
            "controller `{}` does not apply to `{}` dynamics",
            cfg.controller, model.kind
        )));
    }
    match cfg.controller {
        IdKind::Ll => id_ll(model, z_target, z, cfg.dt, cfg.beta),
        IdKind::Nj => id_nj(model, z_target, z, prev, cfg.dt, cfg.beta),
        IdKind::Ng => id_ng(model, z_target, z, cfg.dt, cfg.ng_alpha, cfg.max_angular),
    }
}

/// Runs the sense, encode, act loop from the scenario's start pose.
pub fn servo_run(
    ae: &Autoencoder,
    model: &DynamicsModel,
    surface: &SkinSurface,
    scenario: &ServoScenario,
    cfg: &ServoRunConfig,
    seed: u64,
) -> Result<ServoLog> {
    cfg.validate()?;
    let field = surface.field_from(&scenario.target_point)?;
    let z_target = Vector3::from(ae.encode(&scenario.target.s)?.0);
    let mut world = World {
        surface,
        anchor: scenario.anchor,
        pose: scenario.start,
        smoothed: None,
        gain: 1.0 - (-2.0 * PI * cfg.smoother_hz / TACTILE_RATE).exp(),
        rng: cfg.noise.then(|| ChaCha8Rng::seed_from_u64(seed)),
        t: 0.0,
    };
    world.read();

    let mut log = ServoLog {
        z_target: z_target.into(),
        steps: Vec::new(),
        success_step: None,
        aborted: false,
    };
    let mut prev: Option<PrevStep> = None;
    let mut lost = 0;
    for step in 0..=cfg.max_steps {
        let sample = world.smoothed.clone().expect("world has been read");
        let z = Vector3::from(ae.encode(&sample.s)?.0);
        let geo = field.distance_to(surface.mesh(), &sample.contact.contact_point);
        let in_contact = sample.contact.in_contact;
        lost = if in_contact { 0 } else { lost + 1 };
        if in_contact && geo <= cfg.tolerance && log.success_step.is_none() {
            log.success_step = Some(step);
        }
        let done = step == cfg.max_steps
            || log.success_step.is_some_and(|k| step >= k + cfg.settle_steps)
            || lost > cfg.max_lost_steps;
        let a = if done {
            Vector6::zeros()
        } else {
            let raw = controller_action(model, cfg, &z_target, &z, prev)?;
            clip_action(&raw, cfg.max_linear, cfg.max_angular)
        };
        log.steps.push(ServoStep {
            step,
            latent_dist: (z - z_target).norm(),
            z: z.into(),
            s: sample.s,
            geo_dist: geo,
            in_contact,
            action: a.into(),
        });
        if lost > cfg.max_lost_steps {
            log.aborted = true;
            log::warn!("servo run {seed}: contact lost for {lost} steps, aborting");
            break;
        }
        if done {
            break;
        }
        let ee = Twist::from_slice(a.as_slice());
        let r: Matrix3<f64> = *world.pose.matrix();
        world.hold(&ee_to_base(&ee, &r), cfg.dt);
        prev = Some(PrevStep { z, a });
    }
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{DynKind, Normalizer};
    use crate::embedding::LossWeights;
    use std::sync::OnceLock;

    fn surface() -> &'static SkinSurface {
        static S: OnceLock<SkinSurface> = OnceLock::new();
        S.get_or_init(|| SkinSurface::new(Default::default()).unwrap())
    }

    fn untrained() -> (Autoencoder, DynamicsModel) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ae = Autoencoder::new(19, 0.02, 0.01, LossWeights::default(), &mut rng);
        let norm = Normalizer {
            z_mean: [0.0; 3],
            z_std: [1.0; 3],
            a_std: [1.0; 6],
            zdot_std: [1.0; 3],
        };
        let mut dm = DynamicsModel::new(DynKind::NonLinear, IdKind::Nj, norm, 0.1, &mut rng).unwrap();
        for p in dm.net.param_slices_mut() {
            p.fill(0.0);
        }
        (ae, dm)
    }

    #[test]
    fn scenarios_start_in_contact_and_hit_their_offset() {
        for kind in TargetKind::ALL {
            for seed in 0..10 {
                let sc = servo_scenario(surface(), kind, 0.0012, seed).unwrap();
                let s = sense::<ChaCha8Rng>(surface(), &sc.start, &sc.anchor, 0.0, None);
                assert!(s.contact.in_contact);
                let g = surface().geodesic(&s.contact.contact_point, &sc.target_point).unwrap();
                assert!((0.0035..0.0065).contains(&g), "{kind:?} {seed}: {g}");
            }
        }
    }

    #[test]
    fn target_equal_to_start_succeeds_at_step_zero() {
        let (ae, dm) = untrained();
        let mut sc = servo_scenario(surface(), TargetKind::Rotation, 0.0012, 1).unwrap();
        let s = sense::<ChaCha8Rng>(surface(), &sc.start, &sc.anchor, 0.0, None);
        sc.target_point = s.contact.contact_point;
        sc.target = s;
        let cfg = ServoRunConfig {
            settle_steps: 0,
            ..Default::default()
        };
        let log = servo_run(&ae, &dm, surface(), &sc, &cfg, 1).unwrap();
        assert_eq!(log.success_step, Some(0));
        assert_eq!(log.steps.len(), 1);
    }

    #[test]
    fn inert_model_never_converges() {
        let (ae, dm) = untrained();
        let sc = servo_scenario(surface(), TargetKind::Translation, 0.0012, 2).unwrap();
        let cfg = ServoRunConfig {
            max_steps: 30,
            ..Default::default()
        };
        let log = servo_run(&ae, &dm, surface(), &sc, &cfg, 2).unwrap();
        assert!(!log.success());
        assert!(log.steps.iter().all(|s| s.action == [0.0; 6]));
        assert_eq!(log.steps.len(), 31);
    }

    #[test]
    fn losing_contact_aborts() {
        let (ae, dm) = untrained();
        let mut sc = servo_scenario(surface(), TargetKind::Rotation, 0.0012, 4).unwrap();
        // Pull the finger clear of the anchor.
        let s = sense::<ChaCha8Rng>(surface(), &sc.start, &sc.anchor, 0.0, None);
        let n = sc.start.matrix() * surface().normal_at(&s.contact.contact_point);
        sc.start.translation -= n * 0.01;
        let log = servo_run(&ae, &dm, surface(), &sc, &ServoRunConfig::default(), 4).unwrap();
        assert!(log.aborted);
        assert_eq!(log.steps.len(), 6);
    }

    #[test]
    fn logged_latent_distance_matches_logged_samples() {
        let (ae, dm) = untrained();
        let sc = servo_scenario(surface(), TargetKind::Rotation, 0.0012, 5).unwrap();
        let cfg = ServoRunConfig {
            max_steps: 5,
            ..Default::default()
        };
        let log = servo_run(&ae, &dm, surface(), &sc, &cfg, 5).unwrap();
        let zt = Vector3::from(log.z_target);
        for st in &log.steps {
            let z = Vector3::from(ae.encode(&st.s).unwrap().0);
            assert_eq!((z - zt).norm(), st.latent_dist);
        }
    }

    #[test]
    fn clipping_is_per_part() {
        let a = Vector6::new(3.0, 4.0, 0.0, 0.0, 0.1, 0.0);
        let c = clip_action(&a, 0.05, 0.3);
        assert!((c.fixed_rows::<3>(0).norm() - 0.05).abs() < 1e-15);
        assert_eq!(c[4], 0.1);
        assert!((c[0] / c[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn window_check() {
        let mk = |g: &[f64]| ServoLog {
            z_target: [0.0; 3],
            steps: g
                .iter()
                .enumerate()
                .map(|(i, &geo_dist)| ServoStep {
                    step: i,
                    s: vec![],
                    z: [0.0; 3],
                    latent_dist: 0.0,
                    geo_dist,
                    in_contact: true,
                    action: [0.0; 6],
                })
                .collect(),
            success_step: None,
            aborted: false,
        };
        assert!(mk(&[5.0, 6.0, 4.0, 4.5, 3.0]).windows_non_increasing(2));
        assert!(!mk(&[5.0, 4.0, 5.5]).windows_non_increasing(2));
        assert_eq!(mk(&[9.0; 20]).tail_mean(), 9.0);
    }
}
