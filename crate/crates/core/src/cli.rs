//! Command-line front end. Every subcommand reads a `key = value` config,
//! writes its outputs and a `manifest.kv` describing how they were made.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::config::KvConfig;
use crate::datapipe::io::{load_dataset, save_dataset};
use crate::datapipe::{build_dataset, AeSample, Dataset, DatasetConfig, Split};
use crate::dynamics::{encode_tuples, train_dynamics, DynKind, DynamicsModel, IdKind};
use crate::embedding::{train_autoencoder, AeTrainConfig, Autoencoder};
use crate::error::{Error, Result};
use crate::eval::acceptance::{acceptance, all_passed, SERVO_WINDOW};
use crate::eval::report;
use crate::eval::repro::{
    embedding_points, eval_autoencoder, fd_variant, geodesic_bins, lat_tag, run_repro, run_servo_suite, FdRow,
    PipelineConfig,
};
use crate::eval::{eval_chained_fd, eval_id, TargetKind};
use crate::geodesy::io::{load_bins, save_bins};
use crate::skin_sim::io::{read_demo, write_demo};
use crate::skin_sim::demo_set;

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_ACCEPTANCE: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "tactile-servo", version, about = "Latent-space tactile servoing on a simulated skin")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Plain-text `key = value` configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the first entry of `seeds`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate scripted demonstrations and write one CSV per demo.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter, segment and resample demos into a dataset directory.
    PrepData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the Siamese autoencoder.
    TrainAe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_lat_struct: bool,
    },
    /// Train a latent dynamics model on top of a trained autoencoder.
    TrainDyn {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ae: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        #[arg(long, value_enum)]
        id: Option<IdArg>,
        #[arg(long)]
        no_id_loss: bool,
        /// Asserts that `--ae` was trained without latent structure.
        #[arg(long)]
        no_lat_struct: bool,
    },
    /// Reconstruction, pressure and MDS NMSE of an autoencoder.
    EvalAe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ae: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Chained forward-dynamics NMSE; `--ae` and `--dyn` pair up in order.
    EvalFd {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, required = true)]
        ae: Vec<PathBuf>,
        #[arg(long = "dyn", required = true)]
        dynamics: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Inverse-dynamics weighted cosine distance per controller.
    EvalId {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        ae: PathBuf,
        #[arg(long = "dyn", required = true)]
        dynamics: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Closed-loop servo runs in the simulator.
    Servo {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        ae: PathBuf,
        #[arg(long = "dyn")]
        dynamics: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        kind: KindArg,
    },
    /// Full reproduction with acceptance report. `--seed S` runs seeds S, S+1, ...
    ReproAll {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum VariantArg {
    Ll,
    Nl,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum IdArg {
    Ll,
    Ng,
    Nj,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum KindArg {
    Rotation,
    Translation,
    Both,
}

impl KindArg {
    fn kinds(self) -> Vec<TargetKind> {
        match self {
            KindArg::Rotation => vec![TargetKind::Rotation],
            KindArg::Translation => vec![TargetKind::Translation],
            KindArg::Both => TargetKind::ALL.to_vec(),
        }
    }
}

/// Outcome of a command that ran to completion.
enum Status {
    Done,
    AcceptanceFailed,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        _ => EXIT_OTHER,
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(Status::Done) => EXIT_OK,
        Ok(Status::AcceptanceFailed) => EXIT_ACCEPTANCE,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

struct Loaded {
    cfg: PipelineConfig,
    path: PathBuf,
    seed: u64,
}

fn load(common: &Common) -> Result<Loaded> {
    if !common.config.is_file() {
        return Err(Error::Config(format!("config file {} not found", common.config.display())));
    }
    let kv = KvConfig::load(&common.config)?;
    let cfg = PipelineConfig::from_kv(&kv)?;
    let seed = common.seed.unwrap_or(cfg.seeds[0]);
    Ok(Loaded {
        cfg,
        path: common.config.clone(),
        seed,
    })
}

fn manifest(command: &str, l: &Loaded, extra: &[(&str, String)]) -> KvConfig {
    let mut m = KvConfig::new();
    m.set("command", command);
    m.set("seed", l.seed);
    m.set("config_file", show(&l.path));
    for (k, v) in extra {
        m.set(&format!("arg.{k}"), v);
    }
    m.overlay(&l.cfg.to_kv());
    m
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Sidecar file next to a checkpoint: `dir/ae.bin` -> `dir/ae_<suffix>`.
fn sidecar(ckpt: &Path, suffix: &str) -> PathBuf {
    let stem = ckpt.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
    ckpt.with_file_name(format!("{stem}_{suffix}"))
}

fn parent_dir(p: &Path) -> Result<()> {
    match p.parent() {
        Some(d) if !d.as_os_str().is_empty() => ensure_dir(d),
        _ => Ok(()),
    }
}

fn echo_bool(echo: &str, key: &str, what: &Path) -> Result<bool> {
    KvConfig::parse(echo)?
        .get_bool_or(key, true)
        .map_err(|e| Error::format(what, format!("config echo: {e}")))
}

struct DataDir {
    dataset: Dataset,
    train: Vec<AeSample>,
    bins: Vec<crate::geodesy::GeodesicBin>,
}

fn load_data(dir: &Path) -> Result<DataDir> {
    let (dataset, _) = load_dataset(dir)?;
    let train = dataset.ae_of(Split::Train).into_iter().cloned().collect();
    let bins = load_bins(&dir.join("bins.bin"))?;
    Ok(DataDir { dataset, train, bins })
}

fn demo_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "csv")
                && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("demo_"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::EmptyDataset(format!("no demo_*.csv files in {}", dir.display())));
    }
    Ok(files)
}

fn dispatch(cmd: Command) -> Result<Status> {
    match cmd {
        Command::GenData { common, out } => {
            let l = load(&common)?;
            ensure_dir(&out)?;
            let surface = l.cfg.surface()?;
            let demos = demo_set(&surface, &l.cfg.demos, l.seed)?;
            for (i, d) in demos.iter().enumerate() {
                write_demo(&out.join(format!("demo_{i:04}.csv")), d)?;
            }
            l.cfg.surface.to_kv().save(&out.join("surface.kv"))?;
            manifest("gen-data", &l, &[("demos", demos.len().to_string())]).save(&out.join("manifest.kv"))?;
            info!("wrote {} demos to {}", demos.len(), out.display());
        }
        Command::PrepData { common, demos, out } => {
            let l = load(&common)?;
            let demos = demo_files(&demos)?
                .iter()
                .map(|p| read_demo(p))
                .collect::<Result<Vec<_>>>()?;
            let ds = build_dataset(&demos, &DatasetConfig { seed: l.seed, ..l.cfg.data.clone() })?;
            save_dataset(&out, &ds, &manifest("prep-data", &l, &[]))?;
            let train: Vec<AeSample> = ds.ae_of(Split::Train).into_iter().cloned().collect();
            let bins = geodesic_bins(&train, &l.cfg, l.seed)?;
            save_bins(&out.join("bins.bin"), &bins)?;
            info!("dataset: {} samples, {} tuples, {} bins", ds.ae.len(), ds.tuples.len(), bins.len());
        }
        Command::TrainAe {
            common,
            data,
            out,
            no_lat_struct,
        } => {
            let l = load(&common)?;
            let d = load_data(&data)?;
            let cfg = AeTrainConfig {
                lat_struct: l.cfg.ae.lat_struct && !no_lat_struct,
                ..l.cfg.ae.clone()
            };
            let (ae, traces) = train_autoencoder(&d.train, &d.bins, &cfg, l.seed)?;
            parent_dir(&out)?;
            ae.save(&out)?;
            report::write_ae_trace(&sidecar(&out, "trace.csv"), &traces)?;
            let pts = embedding_points(&ae, &d.dataset.ae_of(Split::Test))?;
            report::write_embedding(&sidecar(&out, "embedding.csv"), &pts)?;
            manifest("train-ae", &l, &[("data", show(&data)), ("lat_struct", cfg.lat_struct.to_string())])
                .save(&sidecar(&out, "manifest.kv"))?;
        }
        Command::TrainDyn {
            common,
            data,
            ae,
            out,
            variant,
            id,
            no_id_loss,
            no_lat_struct,
        } => {
            let l = load(&common)?;
            let d = load_data(&data)?;
            let encoder = Autoencoder::load(&ae)?;
            let trained_lat = echo_bool(&encoder.config_echo, "ae.lat_struct", &ae)?;
            if trained_lat == no_lat_struct {
                return Err(Error::Config(format!(
                    "{} was trained with ae.lat_struct = {trained_lat}, which contradicts --no-lat-struct = {no_lat_struct}",
                    ae.display()
                )));
            }
            let mut cfg = l.cfg.dynamics.clone();
            if let Some(v) = variant {
                cfg.kind = match v {
                    VariantArg::Ll => DynKind::LocallyLinear,
                    VariantArg::Nl => DynKind::NonLinear,
                };
                cfg.id = cfg.kind.default_id();
            }
            if let Some(i) = id {
                cfg.id = match i {
                    IdArg::Ll => IdKind::Ll,
                    IdArg::Ng => IdKind::Ng,
                    IdArg::Nj => IdKind::Nj,
                };
            }
            cfg.id_loss &= !no_id_loss;
            cfg.validate()?;
            let tuples = encode_tuples(&encoder, d.dataset.tuples_of(Split::Train))?;
            let (model, traces) = train_dynamics(&tuples, &cfg, l.seed)?;
            parent_dir(&out)?;
            model.save(&out)?;
            report::write_dyn_trace(&sidecar(&out, "trace.csv"), &traces)?;
            let extra = [
                ("data", show(&data)),
                ("ae", show(&ae)),
                ("variant", cfg.kind.to_string()),
                ("id", cfg.id.to_string()),
                ("id_loss", cfg.id_loss.to_string()),
                ("lat_struct", trained_lat.to_string()),
            ];
            manifest("train-dyn", &l, &extra).save(&sidecar(&out, "manifest.kv"))?;
        }
        Command::EvalAe { common, data, ae, out } => {
            let l = load(&common)?;
            let d = load_data(&data)?;
            let model = Autoencoder::load(&ae)?;
            let lat = echo_bool(&model.config_echo, "ae.lat_struct", &ae)?;
            let rows = eval_autoencoder(&model, lat_tag(lat), &d.dataset, &d.train, &d.bins, l.cfg.mds_pairs, l.seed)?;
            ensure_dir(&out)?;
            let rows: Vec<_> = rows.into_iter().map(|r| (l.seed, r)).collect();
            report::write_eval_ae(&out.join("eval_ae.csv"), &rows)?;
            let pts = embedding_points(&model, &d.dataset.ae_of(Split::Test))?;
            report::write_embedding(&out.join("fig3_embedding.csv"), &pts)?;
            manifest("eval-ae", &l, &[("data", show(&data)), ("ae", show(&ae))]).save(&out.join("eval_ae_manifest.kv"))?;
        }
        Command::EvalFd {
            common,
            data,
            ae,
            dynamics,
            out,
        } => {
            let l = load(&common)?;
            if ae.len() != dynamics.len() {
                return Err(Error::Config(format!(
                    "eval-fd pairs --ae with --dyn in order: got {} and {}",
                    ae.len(),
                    dynamics.len()
                )));
            }
            let (ds, _) = load_dataset(&data)?;
            let chains = ds.chains_of(Split::Test);
            let mut rows = Vec::new();
            for (a, m) in ae.iter().zip(&dynamics) {
                let encoder = Autoencoder::load(a)?;
                let model = DynamicsModel::load(m)?;
                let variant = fd_variant(
                    echo_bool(&encoder.config_echo, "ae.lat_struct", a)?,
                    echo_bool(&model.config_echo, "dyn.id_loss", m)?,
                );
                for (k, nmse) in eval_chained_fd(&model, &encoder, &chains, l.cfg.c_test)?.into_iter().enumerate() {
                    let row = FdRow {
                        variant: variant.clone(),
                        chain_step: k + 1,
                        nmse,
                    };
                    rows.push((l.seed, row));
                }
            }
            ensure_dir(&out)?;
            report::write_eval_fd(&out.join("eval_fd.csv"), &rows)?;
            let list = |v: &[PathBuf]| v.iter().map(|p| show(p)).collect::<Vec<_>>().join(",");
            manifest("eval-fd", &l, &[("data", show(&data)), ("ae", list(&ae)), ("dyn", list(&dynamics))])
                .save(&out.join("eval_fd_manifest.kv"))?;
        }
        Command::EvalId {
            common,
            data,
            ae,
            dynamics,
            out,
        } => {
            let l = load(&common)?;
            let (ds, _) = load_dataset(&data)?;
            let encoder = Autoencoder::load(&ae)?;
            let test = encode_tuples(&encoder, ds.tuples_of(Split::Test))?;
            let mut rows = Vec::new();
            for m in &dynamics {
                let model = DynamicsModel::load(m)?;
                let name = m.file_stem().map_or_else(|| show(m), |s| s.to_string_lossy().into_owned());
                rows.extend(eval_id(&name, &model, &test)?.into_iter().map(|r| (l.seed, r)));
            }
            ensure_dir(&out)?;
            report::write_eval_id(&out.join("eval_id.csv"), &rows)?;
            let list = dynamics.iter().map(|p| show(p)).collect::<Vec<_>>().join(",");
            manifest("eval-id", &l, &[("data", show(&data)), ("ae", show(&ae)), ("dyn", list)])
                .save(&out.join("eval_id_manifest.kv"))?;
        }
        Command::Servo {
            common,
            ae,
            dynamics,
            out,
            kind,
        } => {
            let l = load(&common)?;
            let encoder = Autoencoder::load(&ae)?;
            let model = DynamicsModel::load(&dynamics)?;
            let surface = l.cfg.surface()?;
            let runs = run_servo_suite(&encoder, &model, &surface, &l.cfg, &kind.kinds())?;
            ensure_dir(&out)?;
            for r in &runs {
                report::write_servo(&out.join(format!("servo_{}.csv", r.seed)), &r.log)?;
            }
            report::write_servo_summary(&out.join("servo_summary.csv"), &runs, SERVO_WINDOW)?;
            let reached = runs.iter().filter(|r| r.log.success_step.is_some()).count();
            info!("{reached}/{} runs reached tolerance", runs.len());
            manifest("servo", &l, &[("ae", show(&ae)), ("dyn", show(&dynamics))]).save(&out.join("manifest.kv"))?;
        }
        Command::ReproAll { common, out } => {
            let mut l = load(&common)?;
            if let Some(s) = common.seed {
                l.cfg.seeds = (0..l.cfg.seeds.len() as u64).map(|k| s + k).collect();
            }
            let outcome = run_repro(&l.cfg)?;
            let criteria = acceptance(&outcome, l.cfg.c_test, l.cfg.servo.max_steps);
            for c in &criteria {
                println!("{c}");
            }
            report::write_repro(&out, &outcome, &criteria, SERVO_WINDOW)?;
            let passed = all_passed(&criteria);
            manifest("repro-all", &l, &[("passed", passed.to_string())]).save(&out.join("manifest.kv"))?;
            if !passed {
                return Ok(Status::AcceptanceFailed);
            }
        }
    }
    Ok(Status::Done)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_and_version_exit_zero() {
        assert_eq!(run(["tactile-servo", "--help"]), EXIT_OK);
        assert_eq!(run(["tactile-servo", "train-dyn", "--help"]), EXIT_OK);
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["tactile-servo", "gen-data", "--out", "x"]), EXIT_CONFIG);
        assert_eq!(run(["tactile-servo", "gen-data", "--config", "c", "--bogus"]), EXIT_CONFIG);
        assert_eq!(run(["tactile-servo", "train-dyn", "--config", "c", "--data", "d", "--ae", "a", "--out", "o", "--id", "xx"]), EXIT_CONFIG);
    }

    #[test]
    fn missing_config_file_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("absent.cfg");
        let out = dir.path().join("out");
        let code = run(["tactile-servo".as_ref(), "gen-data".as_ref(), "--config".as_ref(), cfg.as_os_str(), "--out".as_ref(), out.as_os_str()]);
        assert_eq!(code, EXIT_CONFIG);
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::Divergence { iter: 3, detail: "nan".into() }), EXIT_DIVERGENCE);
        assert_eq!(exit_code(&Error::EmptyDataset("x".into())), EXIT_OTHER);
    }

    #[test]
    fn sidecars_sit_next_to_the_checkpoint() {
        assert_eq!(sidecar(Path::new("m/ae.bin"), "trace.csv"), PathBuf::from("m/ae_trace.csv"));
    }
}
