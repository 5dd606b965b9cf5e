//! Raw demos to training data: filter, threshold, segment, resample with
//! action averaging, and split.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::filter::lowpass;
use super::segment::segment_contacts;
use super::twist::{base_to_ee, mean_twist};
use crate::config::KvConfig;
use crate::error::{Error, Result};
use crate::skin_sim::demo::{TACTILE_RATE, TICKS_PER_SAMPLE};
use crate::skin_sim::{RawDemo, Twist};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FramePose {
    WindowStart,
    WindowMidpoint,
}

impl std::str::FromStr for FramePose {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "start" => Ok(FramePose::WindowStart),
            "midpoint" => Ok(FramePose::WindowMidpoint),
            _ => Err(Error::Config(format!("frame pose must be start|midpoint, got {s:?}"))),
        }
    }
}

impl std::fmt::Display for FramePose {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FramePose::WindowStart => "start",
            FramePose::WindowMidpoint => "midpoint",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidArgument(format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub cutoff_hz: f64,
    /// Contact threshold as a fraction of the peak filtered pressure.
    pub threshold_frac: f64,
    pub min_segment: usize,
    pub strides: Vec<usize>,
    pub frame: FramePose,
    pub ae_target: usize,
    pub tuple_target: usize,
    pub chain_target: usize,
    pub chain_stride: usize,
    pub chain_len: usize,
    pub train_frac: f64,
    pub val_frac: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            cutoff_hz: 1.0,
            threshold_frac: 0.05,
            min_segment: 10,
            strides: (29..=33).collect(),
            frame: FramePose::WindowStart,
            ae_target: 5000,
            tuple_target: 15000,
            chain_target: 4000,
            chain_stride: 31,
            chain_len: 3,
            train_frac: 0.85,
            val_frac: 0.075,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let strides = match kv.raw("data.strides") {
            Some(s) => s
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("data.strides: bad entry {t:?}")))
                })
                .collect::<Result<Vec<_>>>()?,
            None => d.strides.clone(),
        };
        let cfg = Self {
            cutoff_hz: kv.get_or("data.cutoff_hz", d.cutoff_hz)?,
            threshold_frac: kv.get_or("data.threshold_frac", d.threshold_frac)?,
            min_segment: kv.get_or("data.min_segment", d.min_segment)?,
            strides,
            frame: kv.get_or("data.frame", d.frame)?,
            ae_target: kv.get_or("data.ae_target", d.ae_target)?,
            tuple_target: kv.get_or("data.tuple_target", d.tuple_target)?,
            chain_target: kv.get_or("data.chain_target", d.chain_target)?,
            chain_stride: kv.get_or("data.chain_stride", d.chain_stride)?,
            chain_len: kv.get_or("data.chain_len", d.chain_len)?,
            train_frac: kv.get_or("data.train_frac", d.train_frac)?,
            val_frac: kv.get_or("data.val_frac", d.val_frac)?,
            seed: kv.get_or("seed", d.seed)?,
        };
        if cfg.strides.is_empty() || cfg.strides.contains(&0) || cfg.chain_stride == 0 {
            return Err(Error::Config("strides must be positive".into()));
        }
        if !(cfg.train_frac > 0.0 && cfg.val_frac >= 0.0 && cfg.train_frac + cfg.val_frac < 1.0) {
            return Err(Error::Config("split fractions must leave a test share".into()));
        }
        Ok(cfg)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("data.cutoff_hz", self.cutoff_hz);
        kv.set("data.threshold_frac", self.threshold_frac);
        kv.set("data.min_segment", self.min_segment);
        kv.set(
            "data.strides",
            self.strides.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
        );
        kv.set("data.frame", self.frame);
        kv.set("data.ae_target", self.ae_target);
        kv.set("data.tuple_target", self.tuple_target);
        kv.set("data.chain_target", self.chain_target);
        kv.set("data.chain_stride", self.chain_stride);
        kv.set("data.chain_len", self.chain_len);
        kv.set("data.train_frac", self.train_frac);
        kv.set("data.val_frac", self.val_frac);
        kv.set("seed", self.seed);
        kv
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeSample {
    pub s: Vec<f64>,
    pub pressure: f64,
    pub contact: [f64; 3],
    pub demo: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTuple {
    pub s_prev: Vec<f64>,
    pub a_prev: [f64; 6],
    pub s: Vec<f64>,
    pub a: [f64; 6],
    pub s_next: Vec<f64>,
    pub dt: f64,
}

/// `chain_len + 1` states at a fixed stride with the actions between them.
#[derive(Debug, Clone, PartialEq)]
pub struct TestChain {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<[f64; 6]>,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub electrodes: usize,
    pub threshold: f64,
    pub ae: Vec<AeSample>,
    pub ae_split: Vec<Split>,
    pub tuples: Vec<TransitionTuple>,
    pub tuple_split: Vec<Split>,
    pub chains: Vec<TestChain>,
    pub chain_split: Vec<Split>,
}

impl Dataset {
    pub fn ae_of(&self, split: Split) -> Vec<&AeSample> {
        self.ae.iter().zip(&self.ae_split).filter(|(_, s)| **s == split).map(|(a, _)| a).collect()
    }

    pub fn tuples_of(&self, split: Split) -> Vec<&TransitionTuple> {
        self.tuples
            .iter()
            .zip(&self.tuple_split)
            .filter(|(_, s)| **s == split)
            .map(|(a, _)| a)
            .collect()
    }

    pub fn chains_of(&self, split: Split) -> Vec<&TestChain> {
        self.chains
            .iter()
            .zip(&self.chain_split)
            .filter(|(_, s)| **s == split)
            .map(|(a, _)| a)
            .collect()
    }
}

/// Filtered view of one demo.
#[derive(Debug, Clone)]
pub struct FilteredDemo {
    pub s: Vec<Vec<f64>>,
    pub pressure: Vec<f64>,
    pub contact: Vec<[f64; 3]>,
}

pub fn filter_demo(demo: &RawDemo, cutoff_hz: f64) -> Result<FilteredDemo> {
    let n = demo.tactile.len();
    let e = demo.tactile.first().map_or(0, |t| t.s.len());
    let mut chans: Vec<Vec<f64>> = Vec::with_capacity(e + 3);
    for i in 0..e {
        let x: Vec<f64> = demo.tactile.iter().map(|t| t.s[i]).collect();
        chans.push(lowpass(&x, TACTILE_RATE, cutoff_hz)?);
    }
    for i in 0..3 {
        let x: Vec<f64> = demo.tactile.iter().map(|t| t.contact.contact_point[i]).collect();
        chans.push(lowpass(&x, TACTILE_RATE, cutoff_hz)?);
    }
    let s: Vec<Vec<f64>> = (0..n).map(|k| (0..e).map(|i| chans[i][k]).collect()).collect();
    let pressure = s.iter().map(|v| crate::skin_sim::sensing::pressure_of(v)).collect();
    let contact = (0..n).map(|k| [chans[e][k], chans[e + 1][k], chans[e + 2][k]]).collect();
    Ok(FilteredDemo {
        s,
        pressure,
        contact,
    })
}

/// Mean base twist over tactile samples `[i, j)`, expressed in the
/// end-effector frame of the window start (or midpoint).
pub fn window_action(demo: &RawDemo, i: usize, j: usize, frame: FramePose) -> Twist {
    let lo = (i * TICKS_PER_SAMPLE).min(demo.twists.len());
    let hi = (j * TICKS_PER_SAMPLE).min(demo.twists.len());
    let mean = mean_twist(&demo.twists[lo..hi]);
    let k = match frame {
        FramePose::WindowStart => i,
        FramePose::WindowMidpoint => (i + j) / 2,
    };
    base_to_ee(&mean, demo.tactile[k].pose.matrix())
}

/// Tactile stream at `stride` with window-averaged end-effector actions.
pub fn resample_with_action_average(
    demo: &RawDemo,
    range: std::ops::Range<usize>,
    stride: usize,
    frame: FramePose,
) -> Vec<(usize, Twist, f64)> {
    let mut out = Vec::new();
    let mut i = range.start;
    while i + stride <= range.end.min(demo.tactile.len()) {
        out.push((i, window_action(demo, i, i + stride, frame), stride as f64 / TACTILE_RATE));
        i += stride;
    }
    out
}

fn assign_splits(n: usize, cfg: &DatasetConfig, rng: &mut ChaCha8Rng) -> Vec<Split> {
    let n_train = (cfg.train_frac * n as f64).round() as usize;
    let n_val = (cfg.val_frac * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut split = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        split[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    split
}

fn subsample<T: Clone>(items: Vec<T>, target: usize, rng: &mut ChaCha8Rng) -> Vec<T> {
    if items.len() <= target {
        return items;
    }
    let mut idx = index::sample(rng, items.len(), target).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i].clone()).collect()
}

pub fn build_dataset(demos: &[RawDemo], cfg: &DatasetConfig) -> Result<Dataset> {
    if demos.is_empty() {
        return Err(Error::EmptyDataset("no demos".into()));
    }
    let electrodes = demos[0].tactile.first().map_or(0, |t| t.s.len());
    let filtered: Vec<FilteredDemo> = demos
        .par_iter()
        .map(|d| filter_demo(d, cfg.cutoff_hz))
        .collect::<Result<_>>()?;
    let peak = filtered
        .iter()
        .flat_map(|f| f.pressure.iter().copied())
        .fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::EmptyDataset("no demo ever makes contact".into()));
    }
    let threshold = cfg.threshold_frac * peak;
    let segments: Vec<Vec<std::ops::Range<usize>>> = filtered
        .iter()
        .map(|f| segment_contacts(&f.pressure, threshold, cfg.min_segment))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut ae = Vec::new();
    for (d, (f, segs)) in filtered.iter().zip(&segments).enumerate() {
        for seg in segs {
            for k in seg.clone() {
                ae.push(AeSample {
                    s: f.s[k].clone(),
                    pressure: f.pressure[k],
                    contact: f.contact[k],
                    demo: d,
                });
            }
        }
    }
    if ae.is_empty() {
        return Err(Error::EmptyDataset("no samples above the contact threshold".into()));
    }
    let ae = subsample(ae, cfg.ae_target, &mut rng);

    // (demo, start index, stride) of every admissible tuple.
    let mut keys = Vec::new();
    for (d, segs) in segments.iter().enumerate() {
        for seg in segs {
            for &k in &cfg.strides {
                let mut t0 = seg.start;
                while t0 + 2 * k < seg.end {
                    keys.push((d, t0, k));
                    t0 += 1;
                }
            }
        }
    }
    let keys = subsample(keys, cfg.tuple_target, &mut rng);
    let tuples: Vec<TransitionTuple> = keys
        .iter()
        .map(|&(d, t0, k)| {
            let f = &filtered[d];
            TransitionTuple {
                s_prev: f.s[t0].clone(),
                a_prev: window_action(&demos[d], t0, t0 + k, cfg.frame).to_array(),
                s: f.s[t0 + k].clone(),
                a: window_action(&demos[d], t0 + k, t0 + 2 * k, cfg.frame).to_array(),
                s_next: f.s[t0 + 2 * k].clone(),
                dt: k as f64 / TACTILE_RATE,
            }
        })
        .collect();

    let k = cfg.chain_stride;
    let span = k * cfg.chain_len;
    let mut chain_keys = Vec::new();
    for (d, segs) in segments.iter().enumerate() {
        for seg in segs {
            let mut t0 = seg.start;
            while t0 + span < seg.end {
                chain_keys.push((d, t0));
                t0 += 1;
            }
        }
    }
    let chain_keys = subsample(chain_keys, cfg.chain_target, &mut rng);
    let chains: Vec<TestChain> = chain_keys
        .iter()
        .map(|&(d, t0)| {
            let f = &filtered[d];
            TestChain {
                states: (0..=cfg.chain_len).map(|c| f.s[t0 + c * k].clone()).collect(),
                actions: (0..cfg.chain_len)
                    .map(|c| window_action(&demos[d], t0 + c * k, t0 + (c + 1) * k, cfg.frame).to_array())
                    .collect(),
                dt: k as f64 / TACTILE_RATE,
            }
        })
        .collect();

    let ae_split = assign_splits(ae.len(), cfg, &mut rng);
    let tuple_split = assign_splits(tuples.len(), cfg, &mut rng);
    let chain_split = assign_splits(chains.len(), cfg, &mut rng);
    Ok(Dataset {
        electrodes,
        threshold,
        ae,
        ae_split,
        tuples,
        tuple_split,
        chains,
        chain_split,
    })
}
