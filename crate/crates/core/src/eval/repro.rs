//! The desk-scale reproduction: data generation, both autoencoders, the
//! dynamics ablations, evaluation, servoing and the numerical checks.

use log::info;
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checks::{controller_optimality, geodesic_cap_agreement, gradient_integrity, CapCheck, GradientCheck, OptimalityCheck};
use super::fd::eval_chained_fd;
use super::id::{eval_id, IdRow};
use super::metrics::{nmse, nmse_1d};
use super::servo::{servo_run, servo_scenario, ServoLog, ServoRunConfig, TargetKind};
use crate::config::KvConfig;
use crate::datapipe::{build_dataset, AeSample, Dataset, DatasetConfig, Split};
use crate::dynamics::{encode_tuples, train_dynamics, DynKind, DynTrace, DynTrainConfig, DynamicsModel, IdKind};
use crate::embedding::{train_autoencoder, AeTrace, AeTrainConfig, Autoencoder};
use crate::error::{Error, Result};
use crate::geodesy::{bin_split, sample_siamese_pairs, GeodesicBin};
use crate::skin_sim::{demo_set, DemoSetConfig, RawDemo, SkinSurface, SurfaceParams};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seeds: Vec<u64>,
    pub surface: SurfaceParams,
    pub demos: DemoSetConfig,
    pub data: DatasetConfig,
    /// Samples per geodesic bin (N′).
    pub bin_size: usize,
    /// Neighbours per node in the geodesic graph (M).
    pub knn: usize,
    pub ae: AeTrainConfig,
    pub dynamics: DynTrainConfig,
    pub servo: ServoRunConfig,
    pub c_test: usize,
    pub mds_pairs: usize,
    pub servo_runs: usize,
    /// Press depth of the servo targets (m).
    pub servo_depth: f64,
    pub kkt_instances: usize,
    pub grad_instances: usize,
    pub cap_points: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seeds: vec![1, 2, 3],
            surface: SurfaceParams::default(),
            demos: DemoSetConfig::default(),
            data: DatasetConfig::default(),
            bin_size: 1000,
            knn: 18,
            ae: AeTrainConfig::default(),
            dynamics: DynTrainConfig::default(),
            servo: ServoRunConfig::default(),
            c_test: 3,
            mds_pairs: 10_000,
            servo_runs: 20,
            servo_depth: 0.0012,
            kkt_instances: 1000,
            grad_instances: 100,
            cap_points: 500,
        }
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = s
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| Error::Config(format!("seeds: bad entry {t:?}"))))
        .collect::<Result<_>>()?;
    if seeds.is_empty() {
        return Err(Error::Config("seeds: empty list".into()));
    }
    Ok(seeds)
}

impl PipelineConfig {
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let seeds = match kv.raw("seeds") {
            Some(s) => parse_seeds(s)?,
            None => d.seeds.clone(),
        };
        let cfg = Self {
            seeds,
            surface: SurfaceParams::from_kv(kv)?,
            demos: DemoSetConfig::from_kv(kv)?,
            data: DatasetConfig::from_kv(kv)?,
            bin_size: kv.get_or("geo.bin_size", d.bin_size)?,
            knn: kv.get_or("geo.knn", d.knn)?,
            ae: AeTrainConfig::from_kv(kv)?,
            dynamics: DynTrainConfig::from_kv(kv)?,
            servo: ServoRunConfig::from_kv(kv)?,
            c_test: kv.get_or("eval.c_test", d.c_test)?,
            mds_pairs: kv.get_or("eval.mds_pairs", d.mds_pairs)?,
            servo_runs: kv.get_or("eval.servo_runs", d.servo_runs)?,
            servo_depth: kv.get_or("eval.servo_depth", d.servo_depth)?,
            kkt_instances: kv.get_or("check.kkt_instances", d.kkt_instances)?,
            grad_instances: kv.get_or("check.grad_instances", d.grad_instances)?,
            cap_points: kv.get_or("check.cap_points", d.cap_points)?,
        };
        if cfg.c_test == 0 || cfg.mds_pairs == 0 || cfg.bin_size < 2 || cfg.knn == 0 {
            return Err(Error::Config("eval.c_test, eval.mds_pairs, geo.knn must be positive and geo.bin_size at least 2".into()));
        }
        if cfg.c_test > cfg.data.chain_len {
            return Err(Error::Config(format!(
                "eval.c_test = {} exceeds data.chain_len = {}",
                cfg.c_test, cfg.data.chain_len
            )));
        }
        Ok(cfg)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("seeds", self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","));
        for part in [
            self.surface.to_kv(),
            self.demos.to_kv(),
            self.data.to_kv(),
            self.ae.to_kv(),
            self.dynamics.to_kv(),
            self.servo.to_kv(),
        ] {
            kv.overlay(&part);
        }
        kv.set("geo.bin_size", self.bin_size);
        kv.set("geo.knn", self.knn);
        kv.set("eval.c_test", self.c_test);
        kv.set("eval.mds_pairs", self.mds_pairs);
        kv.set("eval.servo_runs", self.servo_runs);
        kv.set("eval.servo_depth", self.servo_depth);
        kv.set("check.kkt_instances", self.kkt_instances);
        kv.set("check.grad_instances", self.grad_instances);
        kv.set("check.cap_points", self.cap_points);
        kv
    }

    pub fn surface(&self) -> Result<SkinSurface> {
        SkinSurface::new(self.surface.clone())
    }
}

/// Demos, dataset and geodesic bins of one seed.
pub struct SeedData {
    pub demos: Vec<RawDemo>,
    pub dataset: Dataset,
    pub train: Vec<AeSample>,
    pub bins: Vec<GeodesicBin>,
}

pub fn geodesic_bins(train: &[AeSample], cfg: &PipelineConfig, seed: u64) -> Result<Vec<GeodesicBin>> {
    let pts: Vec<Vector3<f64>> = train.iter().map(|a| Vector3::from(a.contact)).collect();
    bin_split(&pts, cfg.bin_size.min(pts.len()), cfg.knn, seed)
}

pub fn prepare_seed(cfg: &PipelineConfig, surface: &SkinSurface, seed: u64) -> Result<SeedData> {
    let demos = demo_set(surface, &cfg.demos, seed)?;
    let dataset = build_dataset(&demos, &DatasetConfig { seed, ..cfg.data.clone() })?;
    let train: Vec<AeSample> = dataset.ae_of(Split::Train).into_iter().cloned().collect();
    let bins = geodesic_bins(&train, cfg, seed)?;
    Ok(SeedData {
        demos,
        dataset,
        train,
        bins,
    })
}

/// One scalar of an evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub metric: String,
    pub split: String,
    pub variant: String,
    pub value: f64,
}

pub fn lat_tag(lat_struct: bool) -> &'static str {
    if lat_struct {
        "LatStruct"
    } else {
        "noLatStruct"
    }
}

/// Reconstruction and pressure NMSE per split, plus xy-vs-geodesic NMSE over
/// random intra-bin pairs of the training split.
pub fn eval_autoencoder(
    ae: &Autoencoder,
    variant: &str,
    ds: &Dataset,
    train: &[AeSample],
    bins: &[GeodesicBin],
    pairs: usize,
    seed: u64,
) -> Result<Vec<EvalRecord>> {
    let record = |metric: &str, split: &str, value: f64| EvalRecord {
        metric: metric.into(),
        split: split.into(),
        variant: variant.into(),
        value,
    };
    let mut out = Vec::new();
    for split in Split::ALL {
        let samples = ds.ae_of(split);
        if samples.is_empty() {
            continue;
        }
        let z = ae.encode_many(samples.iter().map(|a| a.s.as_slice()))?;
        let recon = z.iter().map(|z| ae.decode(z)).collect::<Result<Vec<_>>>()?;
        let truth: Vec<Vec<f64>> = samples.iter().map(|a| a.s.clone()).collect();
        out.push(record("recon_nmse", split.name(), nmse(&recon, &truth)?));
        let zp: Vec<f64> = z.iter().map(|z| z.pressure()).collect();
        let p: Vec<f64> = samples.iter().map(|a| a.pressure).collect();
        out.push(record("pressure_nmse", split.name(), nmse_1d(&zp, &p)?));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = sample_siamese_pairs(bins, pairs, &mut rng);
    let z = ae.encode_many(train.iter().map(|a| a.s.as_slice()))?;
    let d: Vec<f64> = pairs
        .iter()
        .map(|p| {
            let (a, b) = (z[p.a].xy(), z[p.b].xy());
            (a[0] - b[0]).hypot(a[1] - b[1])
        })
        .collect();
    let g: Vec<f64> = pairs.iter().map(|p| p.target).collect();
    out.push(record("mds_nmse", Split::Train.name(), nmse_1d(&d, &g)?));
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingPoint {
    pub x: f64,
    pub y: f64,
    /// Electrode with the largest activation.
    pub label: usize,
}

pub fn embedding_points(ae: &Autoencoder, samples: &[&AeSample]) -> Result<Vec<EmbeddingPoint>> {
    let z = ae.encode_many(samples.iter().map(|a| a.s.as_slice()))?;
    Ok(samples
        .iter()
        .zip(z)
        .map(|(a, z)| {
            let label = a.s.iter().enumerate().max_by(|x, y| x.1.total_cmp(y.1)).map_or(0, |(i, _)| i);
            let [x, y] = z.xy();
            EmbeddingPoint { x, y, label }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdRow {
    pub variant: String,
    pub chain_step: usize,
    pub nmse: f64,
}

pub fn fd_variant(lat_struct: bool, id_loss: bool) -> String {
    format!("{}_{}", lat_tag(lat_struct), if id_loss { "IDloss" } else { "noIDloss" })
}

/// Dynamics model trained for one cell of the ablation.
#[derive(Debug, Clone)]
pub struct TrainedDynamics {
    pub name: String,
    pub lat_struct: bool,
    pub model: DynamicsModel,
    pub traces: Vec<DynTrace>,
}

/// Everything produced for one seed.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub ae_eval: Vec<EvalRecord>,
    pub ae_traces: Vec<(String, Vec<AeTrace>)>,
    pub embedding: Vec<EmbeddingPoint>,
    pub fd: Vec<FdRow>,
    pub id: Vec<IdRow>,
    pub autoencoders: Vec<(bool, Autoencoder)>,
    pub dynamics: Vec<TrainedDynamics>,
}

impl SeedOutcome {
    pub fn autoencoder(&self, lat_struct: bool) -> Option<&Autoencoder> {
        self.autoencoders.iter().find(|(l, _)| *l == lat_struct).map(|(_, a)| a)
    }

    pub fn dynamics(&self, name: &str) -> Option<&TrainedDynamics> {
        self.dynamics.iter().find(|d| d.name == name)
    }
}

/// The trained models: `(name, lat_struct, kind, id, id_loss)`. The NL+NJ
/// model appears for all four ablation cells; LL and NG only on the
/// structured latent space.
pub fn dynamics_plan() -> Vec<(&'static str, bool, DynKind, IdKind, bool)> {
    vec![
        ("NJ", true, DynKind::NonLinear, IdKind::Nj, true),
        ("NJ_noID", true, DynKind::NonLinear, IdKind::Nj, false),
        ("LL", true, DynKind::LocallyLinear, IdKind::Ll, true),
        ("NG", true, DynKind::NonLinear, IdKind::Ng, true),
        ("NJ_noLatStruct", false, DynKind::NonLinear, IdKind::Nj, true),
        ("NJ_noID_noLatStruct", false, DynKind::NonLinear, IdKind::Nj, false),
    ]
}

pub fn run_seed(cfg: &PipelineConfig, surface: &SkinSurface, seed: u64) -> Result<SeedOutcome> {
    info!("seed {seed}: generating data");
    let data = prepare_seed(cfg, surface, seed)?;
    let ds = &data.dataset;
    let mut out = SeedOutcome {
        seed,
        ae_eval: Vec::new(),
        ae_traces: Vec::new(),
        embedding: Vec::new(),
        fd: Vec::new(),
        id: Vec::new(),
        autoencoders: Vec::new(),
        dynamics: Vec::new(),
    };
    for lat_struct in [true, false] {
        info!("seed {seed}: training {} autoencoder", lat_tag(lat_struct));
        let ae_cfg = AeTrainConfig { lat_struct, ..cfg.ae.clone() };
        let (ae, traces) = train_autoencoder(&data.train, &data.bins, &ae_cfg, seed)?;
        let variant = lat_tag(lat_struct);
        out.ae_eval
            .extend(eval_autoencoder(&ae, variant, ds, &data.train, &data.bins, cfg.mds_pairs, seed)?);
        out.ae_traces.push((variant.to_string(), traces));
        if lat_struct {
            out.embedding = embedding_points(&ae, &ds.ae_of(Split::Test))?;
        }
        out.autoencoders.push((lat_struct, ae));
    }
    let chains = ds.chains_of(Split::Test);
    for (name, lat_struct, kind, id, id_loss) in dynamics_plan() {
        info!("seed {seed}: training {name}");
        let ae = out.autoencoder(lat_struct).expect("both autoencoders trained");
        let train = encode_tuples(ae, ds.tuples_of(Split::Train))?;
        let test = encode_tuples(ae, ds.tuples_of(Split::Test))?;
        let dyn_cfg = DynTrainConfig {
            kind,
            id,
            id_loss,
            ..cfg.dynamics.clone()
        };
        let (model, traces) = train_dynamics(&train, &dyn_cfg, seed)?;
        if kind == DynKind::NonLinear && id == IdKind::Nj {
            let nmse = eval_chained_fd(&model, ae, &chains, cfg.c_test)?;
            out.fd.extend(nmse.into_iter().enumerate().map(|(k, nmse)| FdRow {
                variant: fd_variant(lat_struct, id_loss),
                chain_step: k + 1,
                nmse,
            }));
        }
        if lat_struct {
            out.id.extend(eval_id(name, &model, &test)?);
        }
        out.dynamics.push(TrainedDynamics {
            name: name.to_string(),
            lat_struct,
            model,
            traces,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ServoOutcome {
    pub kind: TargetKind,
    pub seed: u64,
    pub log: ServoLog,
}

/// Scenario seed of run `r` for a target kind.
pub fn servo_seed(kind: TargetKind, r: usize) -> u64 {
    match kind {
        TargetKind::Rotation => 1000 + r as u64,
        TargetKind::Translation => 2000 + r as u64,
    }
}

pub fn run_servo_suite(
    ae: &Autoencoder,
    model: &DynamicsModel,
    surface: &SkinSurface,
    cfg: &PipelineConfig,
    kinds: &[TargetKind],
) -> Result<Vec<ServoOutcome>> {
    use rayon::prelude::*;
    let jobs: Vec<(TargetKind, u64)> = kinds
        .iter()
        .flat_map(|&k| (0..cfg.servo_runs).map(move |r| (k, servo_seed(k, r))))
        .collect();
    jobs.into_par_iter()
        .map(|(kind, seed)| {
            let scenario = servo_scenario(surface, kind, cfg.servo_depth, seed)?;
            let log = servo_run(ae, model, surface, &scenario, &cfg.servo, seed)?;
            Ok(ServoOutcome { kind, seed, log })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOutcome {
    pub optimality: OptimalityCheck,
    pub gradients: GradientCheck,
    pub cap: CapCheck,
}

/// Cap half-angle of the geodesic oracle check (rad).
pub const CAP_HALF_ANGLE: f64 = 1.0;
/// Minimum hop distance of the pairs scored by the geodesic oracle check.
pub const CAP_MIN_HOPS: usize = 5;

pub fn run_checks(cfg: &PipelineConfig, seed: u64) -> Result<CheckOutcome> {
    Ok(CheckOutcome {
        optimality: controller_optimality(cfg.kkt_instances, seed)?,
        gradients: gradient_integrity(cfg.grad_instances, seed)?,
        cap: geodesic_cap_agreement(cfg.cap_points, cfg.knn, CAP_MIN_HOPS, CAP_HALF_ANGLE)?,
    })
}

#[derive(Debug, Clone)]
pub struct ReproOutcome {
    pub seeds: Vec<SeedOutcome>,
    pub servo: Vec<ServoOutcome>,
    pub checks: CheckOutcome,
}

/// Full reproduction. Servoing uses the first seed's structured
/// autoencoder and NL+NJ model.
pub fn run_repro(cfg: &PipelineConfig) -> Result<ReproOutcome> {
    let surface = cfg.surface()?;
    let seeds = cfg
        .seeds
        .iter()
        .map(|&s| run_seed(cfg, &surface, s))
        .collect::<Result<Vec<_>>>()?;
    let first = &seeds[0];
    let ae = first.autoencoder(true).expect("structured autoencoder");
    let nj = &first.dynamics("NJ").expect("NJ model").model;
    info!("servoing {} runs per target kind", cfg.servo_runs);
    let servo = run_servo_suite(ae, nj, &surface, cfg, &TargetKind::ALL)?;
    let checks = run_checks(cfg, cfg.seeds[0])?;
    Ok(ReproOutcome { seeds, servo, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trip() {
        let mut cfg = PipelineConfig::default();
        cfg.seeds = vec![7, 8];
        cfg.servo_runs = 4;
        cfg.dynamics.iterations = 11;
        assert_eq!(PipelineConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
    }

    #[test]
    fn bad_values_are_config_errors() {
        for text in ["seeds = 1,x", "eval.c_test = 0", "eval.c_test = 9", "demo.regions = 0"] {
            let kv = KvConfig::parse(text).unwrap();
            assert!(matches!(PipelineConfig::from_kv(&kv), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn variant_names() {
        assert_eq!(fd_variant(true, false), "LatStruct_noIDloss");
        assert_eq!(fd_variant(false, true), "noLatStruct_IDloss");
        assert_eq!(dynamics_plan().len(), 6);
        assert_ne!(servo_seed(TargetKind::Rotation, 3), servo_seed(TargetKind::Translation, 3));
    }
}
