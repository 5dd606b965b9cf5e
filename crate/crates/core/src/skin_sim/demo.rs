//! Scripted make-sweep-break demonstrations against a fixed anchor point.
//!
//! The finger is driven at 300 Hz by a small state machine; tactile frames are
//! read every third tick (100 Hz). During sweeps the normal velocity tracks a
//! slowly modulated penetration depth and a smooth random wander is added on
//! all six twist channels so that the recorded actions are not collinear.

use std::f64::consts::PI;

use nalgebra::{UnitQuaternion, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::pose::{step_pose, FingerPose, Twist};
use super::sensing::{contact_state, sense, TactileSample};
use super::surface::SkinSurface;
use crate::config::KvConfig;
use crate::error::{Error, Result};

pub const CONTROL_RATE: f64 = 300.0;
pub const TACTILE_RATE: f64 = 100.0;
pub const TICKS_PER_SAMPLE: usize = 3;
pub const REGIONS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DemoKind {
    Rotational,
    Translational,
}

impl DemoKind {
    pub fn name(self) -> &'static str {
        match self {
            DemoKind::Rotational => "rotational",
            DemoKind::Translational => "translational",
        }
    }

    /// Contact segments one demo of this kind produces.
    pub fn segments(self) -> usize {
        match self {
            DemoKind::Rotational => 2,
            DemoKind::Translational => 4,
        }
    }
}

impl std::str::FromStr for DemoKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rotational" => Ok(DemoKind::Rotational),
            "translational" => Ok(DemoKind::Translational),
            _ => Err(Error::InvalidArgument(format!("unknown demo kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoParams {
    /// Rotational demos: axial band index; translational: azimuth band index.
    pub region: usize,
    /// Fraction of the available sweep range covered, in (0, 1].
    pub amplitude: f64,
    pub depth_mean: f64,
    pub depth_amp: f64,
    pub sweep_angular_speed: f64,
    pub sweep_linear_speed: f64,
    pub wander_linear: f64,
    pub wander_angular: f64,
    /// Angular wander during translational demos.
    pub wander_angular_slide: f64,
    pub approach_gap: f64,
    pub approach_time: f64,
    pub retract_time: f64,
    pub retract_speed: f64,
    pub idle_time: f64,
    pub depth_gain: f64,
    pub max_normal_speed: f64,
    pub margin_s: f64,
    pub margin_phi: f64,
    pub max_sweep_time: f64,
}

impl Default for DemoParams {
    fn default() -> Self {
        Self {
            region: 0,
            amplitude: 1.0,
            depth_mean: 0.0012,
            depth_amp: 0.0005,
            sweep_angular_speed: 0.25,
            sweep_linear_speed: 0.003,
            wander_linear: 0.001,
            wander_angular: 0.04,
            wander_angular_slide: 0.004,
            approach_gap: 0.002,
            approach_time: 2.5,
            retract_time: 1.5,
            retract_speed: 0.004,
            idle_time: 0.5,
            depth_gain: 10.0,
            max_normal_speed: 0.005,
            margin_s: 0.0015,
            margin_phi: 0.12,
            max_sweep_time: 60.0,
        }
    }
}

impl DemoParams {
    pub fn for_region(region: usize) -> Self {
        Self {
            region,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawDemo {
    pub kind: DemoKind,
    pub region: usize,
    pub seed: u64,
    /// 100 Hz; sample `i` was read at control tick `3 i`.
    pub tactile: Vec<TactileSample>,
    /// 300 Hz base-frame twists; entry `j` was applied over tick `j`.
    pub twists: Vec<Twist>,
}

impl RawDemo {
    pub fn pressures(&self) -> Vec<f64> {
        self.tactile.iter().map(|s| s.pressure).collect()
    }
}

struct Wander {
    amp: [f64; 6],
    freq: [f64; 6],
    phase: [f64; 6],
}

impl Wander {
    fn new(rng: &mut ChaCha8Rng, lin: f64, ang: f64) -> Self {
        let mut w = Wander {
            amp: [0.0; 6],
            freq: [0.0; 6],
            phase: [0.0; 6],
        };
        for i in 0..6 {
            w.amp[i] = if i < 3 { lin } else { ang } * rng.random_range(0.5..1.0);
            w.freq[i] = rng.random_range(0.15..0.4);
            w.phase[i] = rng.random_range(0.0..2.0 * PI);
        }
        w
    }

    fn at(&self, t: f64) -> Twist {
        let v: Vec<f64> = (0..6)
            .map(|i| self.amp[i] * (2.0 * PI * self.freq[i] * t + self.phase[i]).sin())
            .collect();
        Twist::from_slice(&v)
    }
}

struct Sim<'a> {
    surface: &'a SkinSurface,
    params: &'a DemoParams,
    anchor: Vector3<f64>,
    pose: FingerPose,
    tick: usize,
    tactile: Vec<TactileSample>,
    twists: Vec<Twist>,
    rng: ChaCha8Rng,
    wander: Wander,
    depth_freq: f64,
    depth_phase: f64,
}

enum Sweep {
    /// Rotate about the finger axis until the contact azimuth reaches `target`.
    Azimuth { target: f64, dir: f64, speed: f64 },
    /// Slide along the meridian until the contact arc length reaches `target`.
    Meridian { target: f64, dir: f64, speed: f64 },
}

impl Sim<'_> {
    fn time(&self) -> f64 {
        self.tick as f64 / CONTROL_RATE
    }

    /// Signed penetration (positive inside), contact point and outward normal.
    fn contact(&self) -> (f64, Vector3<f64>, Vector3<f64>) {
        let q = self.pose.to_local(&self.anchor);
        let proj = self.surface.project(&q);
        let depth = if proj.inside { proj.distance } else { -proj.distance };
        (depth, proj.point, self.surface.normal_at(&proj.point))
    }

    fn apply(&mut self, ee: Twist) {
        if self.tick % TICKS_PER_SAMPLE == 0 {
            let t = self.time();
            let sample = sense(self.surface, &self.pose, &self.anchor, t, Some(&mut self.rng));
            self.tactile.push(sample);
        }
        self.twists.push(ee.rotated(self.pose.matrix()));
        self.pose = step_pose(&self.pose, &ee, 1.0 / CONTROL_RATE);
        self.tick += 1;
    }

    fn depth_velocity(&self, target: f64) -> Vector3<f64> {
        let (depth, _, n) = self.contact();
        let p = self.params;
        n * (p.depth_gain * (target - depth)).clamp(-p.max_normal_speed, p.max_normal_speed)
    }

    fn ticks(seconds: f64) -> usize {
        (seconds * CONTROL_RATE).round() as usize
    }

    fn idle(&mut self, seconds: f64) {
        for _ in 0..Self::ticks(seconds) {
            self.apply(Twist::zero());
        }
    }

    fn approach(&mut self) {
        for _ in 0..Self::ticks(self.params.approach_time) {
            let v = self.depth_velocity(self.params.depth_mean);
            self.apply(Twist::new(v, Vector3::zeros()));
        }
    }

    fn retract(&mut self) {
        for _ in 0..Self::ticks(self.params.retract_time) {
            let (_, _, n) = self.contact();
            self.apply(Twist::new(-n * self.params.retract_speed, Vector3::zeros()));
        }
    }

    fn sweep(&mut self, sweep: Sweep) -> Result<()> {
        let p = self.params;
        let start = self.time();
        let max_len = self.surface.params().cylinder_length;
        let apex = self.surface.params().cap_length * PI / 2.0;
        loop {
            let t = self.time() - start;
            if t > p.max_sweep_time {
                return Err(Error::InvalidRegion("sweep did not reach its end point".into()));
            }
            let (_, c, _) = self.contact();
            let (s, phi) = self.surface.chart_of(&c);
            if s <= -max_len + 1e-4 || s >= apex - 1e-4 {
                return Err(Error::InvalidRegion(format!(
                    "contact left the skin surface (s = {s:.4})"
                )));
            }
            let target_depth = p.depth_mean
                + p.depth_amp * (2.0 * PI * self.depth_freq * t + self.depth_phase).sin();
            let mut ee = self.wander.at(t);
            ee.linear += self.depth_velocity(target_depth);
            match sweep {
                Sweep::Azimuth { target, dir, speed } => {
                    if (phi - target) * dir >= 0.0 {
                        return Ok(());
                    }
                    // Rotating the finger by +w about x moves the anchor's
                    // azimuth by -w.
                    ee.angular.x -= dir * speed;
                }
                Sweep::Meridian { target, dir, speed } => {
                    if (s - target) * dir >= 0.0 {
                        return Ok(());
                    }
                    let h = 1e-6;
                    let tangent = (self.surface.point_at(s + h, phi)
                        - self.surface.point_at(s - h, phi))
                    .normalize();
                    ee.linear -= tangent * (dir * speed);
                }
            }
            self.apply(ee);
        }
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    let q = Vector4::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(q))
}

/// Planned sweep: fixed chart coordinate, and the start/end of the swept one.
fn plan(surface: &SkinSurface, kind: DemoKind, params: &DemoParams) -> Result<(f64, f64, f64)> {
    if params.region >= REGIONS {
        return Err(Error::InvalidRegion(format!(
            "region {} outside 0..{REGIONS}",
            params.region
        )));
    }
    if !(params.amplitude > 0.0 && params.amplitude <= 1.0) {
        return Err(Error::InvalidRegion(format!(
            "amplitude {} outside (0, 1]",
            params.amplitude
        )));
    }
    let sp = surface.params();
    let band = |lo: f64, hi: f64, margin: f64| -> Result<(f64, f64)> {
        let (lo, hi) = (lo + margin, hi - margin);
        if lo >= hi {
            return Err(Error::InvalidRegion("sensing patch narrower than the sweep margins".into()));
        }
        Ok((lo, hi))
    };
    let (s_lo, s_hi) = band(sp.patch_s_min, sp.patch_s_max, params.margin_s)?;
    let (f_lo, f_hi) = band(sp.patch_phi_min, sp.patch_phi_max, params.margin_phi)?;
    let frac = params.region as f64 / (REGIONS - 1) as f64;
    let swept = |lo: f64, hi: f64| {
        let c = 0.5 * (lo + hi);
        let h = 0.5 * (hi - lo) * params.amplitude;
        (c - h, c + h)
    };
    Ok(match kind {
        DemoKind::Rotational => {
            let (a, b) = swept(f_lo, f_hi);
            (s_lo + frac * (s_hi - s_lo), a, b)
        }
        DemoKind::Translational => {
            let (a, b) = swept(s_lo, s_hi);
            (f_lo + frac * (f_hi - f_lo), a, b)
        }
    })
}

/// Runs one scripted demonstration. Rotational: contact, rotate one way,
/// break, contact, rotate back, break. Translational: contact, slide +x,
/// break, contact, slide -x, break, twice.
pub fn scripted_demo(
    surface: &SkinSurface,
    kind: DemoKind,
    params: &DemoParams,
    seed: u64,
) -> Result<RawDemo> {
    let (fixed, from, to) = plan(surface, kind, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rotation = random_rotation(&mut rng).to_rotation_matrix();
    let speed_jitter = rng.random_range(0.8..1.2);
    let wander_angular = match kind {
        DemoKind::Rotational => params.wander_angular,
        DemoKind::Translational => params.wander_angular_slide,
    };
    let wander = Wander::new(&mut rng, params.wander_linear, wander_angular);
    let depth_freq = rng.random_range(0.2..0.5);
    let depth_phase = 0.0;

    let (s0, phi0) = match kind {
        DemoKind::Rotational => (fixed, from),
        DemoKind::Translational => (from, fixed),
    };
    let c0 = surface.point_at(s0, phi0);
    let n0 = surface.normal_at(&c0);
    let anchor = Vector3::zeros();
    let local = c0 + n0 * params.approach_gap;
    let pose = FingerPose::new(rotation, anchor - rotation * local);

    let mut sim = Sim {
        surface,
        params,
        anchor,
        pose,
        tick: 0,
        tactile: Vec::new(),
        twists: Vec::new(),
        rng,
        wander,
        depth_freq,
        depth_phase,
    };
    let ang = params.sweep_angular_speed * speed_jitter;
    let lin = params.sweep_linear_speed * speed_jitter;
    let legs: Vec<Sweep> = match kind {
        DemoKind::Rotational => vec![
            Sweep::Azimuth { target: to, dir: 1.0, speed: ang },
            Sweep::Azimuth { target: from, dir: -1.0, speed: ang },
        ],
        DemoKind::Translational => (0..4)
            .map(|i| {
                if i % 2 == 0 {
                    Sweep::Meridian { target: to, dir: 1.0, speed: lin }
                } else {
                    Sweep::Meridian { target: from, dir: -1.0, speed: lin }
                }
            })
            .collect(),
    };

    sim.idle(params.idle_time);
    for leg in legs {
        sim.approach();
        sim.sweep(leg)?;
        sim.retract();
    }
    sim.idle(params.idle_time);
    // Close the tactile stream on a sampling tick.
    while sim.tick % TICKS_PER_SAMPLE != 0 {
        sim.apply(Twist::zero());
    }
    let t = sim.time();
    let last = sense(surface, &sim.pose, &sim.anchor, t, Some(&mut sim.rng));
    sim.tactile.push(last);

    Ok(RawDemo {
        kind,
        region: params.region,
        seed,
        tactile: sim.tactile,
        twists: sim.twists,
    })
}

/// Demo plan per region: this many rotational and translational demos.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoSetConfig {
    pub rotational_per_region: usize,
    pub translational_per_region: usize,
    pub regions: usize,
    pub params: DemoParams,
}

impl Default for DemoSetConfig {
    fn default() -> Self {
        Self {
            rotational_per_region: 2,
            translational_per_region: 1,
            regions: REGIONS,
            params: DemoParams::default(),
        }
    }
}

impl DemoSetConfig {
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let p = &d.params;
        let cfg = Self {
            rotational_per_region: kv.get_or("demo.rotational_per_region", d.rotational_per_region)?,
            translational_per_region: kv.get_or("demo.translational_per_region", d.translational_per_region)?,
            regions: kv.get_or("demo.regions", d.regions)?,
            params: DemoParams {
                depth_mean: kv.get_or("demo.depth_mean", p.depth_mean)?,
                depth_amp: kv.get_or("demo.depth_amp", p.depth_amp)?,
                sweep_angular_speed: kv.get_or("demo.sweep_angular_speed", p.sweep_angular_speed)?,
                sweep_linear_speed: kv.get_or("demo.sweep_linear_speed", p.sweep_linear_speed)?,
                wander_linear: kv.get_or("demo.wander_linear", p.wander_linear)?,
                wander_angular: kv.get_or("demo.wander_angular", p.wander_angular)?,
                wander_angular_slide: kv.get_or("demo.wander_angular_slide", p.wander_angular_slide)?,
                ..p.clone()
            },
        };
        if cfg.regions == 0 || cfg.regions > REGIONS {
            return Err(Error::Config(format!("demo.regions must be in 1..={REGIONS}")));
        }
        if cfg.rotational_per_region + cfg.translational_per_region == 0 {
            return Err(Error::Config("demo plan is empty".into()));
        }
        Ok(cfg)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        let p = &self.params;
        kv.set("demo.rotational_per_region", self.rotational_per_region);
        kv.set("demo.translational_per_region", self.translational_per_region);
        kv.set("demo.regions", self.regions);
        kv.set("demo.depth_mean", p.depth_mean);
        kv.set("demo.depth_amp", p.depth_amp);
        kv.set("demo.sweep_angular_speed", p.sweep_angular_speed);
        kv.set("demo.sweep_linear_speed", p.sweep_linear_speed);
        kv.set("demo.wander_linear", p.wander_linear);
        kv.set("demo.wander_angular", p.wander_angular);
        kv.set("demo.wander_angular_slide", p.wander_angular_slide);
        kv
    }
}

/// Every demo of the plan, generated in parallel; demo `i` uses seed
/// `seed * 1_000_003 + i`, so the result does not depend on scheduling.
pub fn demo_set(surface: &SkinSurface, cfg: &DemoSetConfig, seed: u64) -> Result<Vec<RawDemo>> {
    use rayon::prelude::*;
    let mut jobs = Vec::new();
    for region in 0..cfg.regions {
        for _ in 0..cfg.rotational_per_region {
            jobs.push((DemoKind::Rotational, region));
        }
        for _ in 0..cfg.translational_per_region {
            jobs.push((DemoKind::Translational, region));
        }
    }
    jobs.into_par_iter()
        .enumerate()
        .map(|(i, (kind, region))| {
            let params = DemoParams {
                region,
                ..cfg.params.clone()
            };
            scripted_demo(surface, kind, &params, seed.wrapping_mul(1_000_003).wrapping_add(i as u64))
        })
        .collect()
}

/// World anchor position used by every scripted demo.
pub fn demo_anchor() -> Vector3<f64> {
    Vector3::zeros()
}

/// Contact state of a recorded pose against the demo anchor.
pub fn replay_contact(surface: &SkinSurface, pose: &FingerPose) -> super::sensing::ContactState {
    contact_state(surface, pose, &demo_anchor())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skin_sim::surface::SurfaceParams;
    use std::sync::OnceLock;

    fn surface() -> &'static SkinSurface {
        static S: OnceLock<SkinSurface> = OnceLock::new();
        S.get_or_init(|| SkinSurface::new(SurfaceParams::default()).unwrap())
    }

    fn runs_above(p: &[f64], thr: f64) -> usize {
        let mut n = 0;
        let mut len = 0;
        for &v in p.iter().chain(std::iter::once(&f64::NEG_INFINITY)) {
            if v > thr {
                len += 1;
            } else {
                if len >= 10 {
                    n += 1;
                }
                len = 0;
            }
        }
        n
    }

    #[test]
    fn segment_counts_per_kind() {
        for kind in [DemoKind::Rotational, DemoKind::Translational] {
            for region in [0, 3, 6] {
                let d = scripted_demo(surface(), kind, &DemoParams::for_region(region), 5).unwrap();
                let p = d.pressures();
                let peak = p.iter().cloned().fold(0.0, f64::max);
                assert_eq!(runs_above(&p, 0.05 * peak), kind.segments(), "{kind:?} {region}");
                assert_eq!(d.twists.len(), (d.tactile.len() - 1) * TICKS_PER_SAMPLE);
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let p = DemoParams::for_region(2);
        let a = scripted_demo(surface(), DemoKind::Rotational, &p, 9).unwrap();
        let b = scripted_demo(surface(), DemoKind::Rotational, &p, 9).unwrap();
        assert_eq!(a, b);
        let c = scripted_demo(surface(), DemoKind::Rotational, &p, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bad_regions_are_rejected() {
        let s = surface();
        assert!(scripted_demo(s, DemoKind::Rotational, &DemoParams::for_region(7), 0).is_err());
        let p = DemoParams {
            amplitude: 1.5,
            ..DemoParams::default()
        };
        assert!(scripted_demo(s, DemoKind::Translational, &p, 0).is_err());
        let p = DemoParams {
            margin_s: -0.02,
            ..DemoParams::default()
        };
        assert!(matches!(
            scripted_demo(s, DemoKind::Translational, &p, 0),
            Err(Error::InvalidRegion(_))
        ));
    }

    #[test]
    fn rotational_sweeps_are_monotone_in_azimuth() {
        let d = scripted_demo(surface(), DemoKind::Rotational, &DemoParams::for_region(1), 3).unwrap();
        let phis: Vec<(f64, f64)> = d
            .tactile
            .iter()
            .filter(|s| s.contact.in_contact)
            .map(|s| (s.t, surface().chart_of(&s.contact.contact_point).1))
            .collect();
        let mut reversals = 0;
        let mut last_dir = 0.0;
        for w in phis.windows(2) {
            let dphi = w[1].1 - w[0].1;
            if dphi.abs() > 2e-3 {
                let dir = dphi.signum();
                if last_dir != 0.0 && dir != last_dir {
                    reversals += 1;
                }
                last_dir = dir;
            }
        }
        assert_eq!(reversals, 1);
    }
}
