use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{Autoencoder, LossWeights, LATENT_DIM};
use crate::config::KvConfig;
use crate::datapipe::AeSample;
use crate::error::{Error, Result};
use crate::geodesy::{sample_siamese_pairs, GeodesicBin};
use crate::nn::{Matrix, Mode, RmsProp};

#[derive(Debug, Clone, PartialEq)]
pub struct AeTrainConfig {
    pub iterations: usize,
    pub batch_pairs: usize,
    pub lr: f64,
    pub weights: LossWeights,
    pub lat_struct: bool,
    pub log_every: usize,
}

impl Default for AeTrainConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            batch_pairs: 128,
            lr: RmsProp::DEFAULT_LR,
            weights: LossWeights::default(),
            lat_struct: true,
            log_every: 100,
        }
    }
}

impl AeTrainConfig {
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let cfg = Self {
            iterations: kv.get_or("ae.iterations", d.iterations)?,
            batch_pairs: kv.get_or("ae.batch_pairs", d.batch_pairs)?,
            lr: kv.get_or("ae.lr", d.lr)?,
            weights: LossWeights {
                aer: kv.get_or("ae.w_aer", d.weights.aer)?,
                mds: kv.get_or("ae.w_mds", d.weights.mds)?,
                cdp: kv.get_or("ae.w_cdp", d.weights.cdp)?,
            },
            lat_struct: kv.get_bool_or("ae.lat_struct", d.lat_struct)?,
            log_every: kv.get_or("ae.log_every", d.log_every)?,
        };
        if cfg.batch_pairs == 0 || cfg.log_every == 0 {
            return Err(Error::Config("ae.batch_pairs and ae.log_every must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("ae.iterations", self.iterations);
        kv.set("ae.batch_pairs", self.batch_pairs);
        kv.set("ae.lr", self.lr);
        kv.set("ae.w_aer", self.weights.aer);
        kv.set("ae.w_mds", self.weights.mds);
        kv.set("ae.w_cdp", self.weights.cdp);
        kv.set("ae.lat_struct", self.lat_struct);
        kv.set("ae.log_every", self.log_every);
        kv
    }

    pub fn effective_weights(&self) -> LossWeights {
        if self.lat_struct {
            self.weights
        } else {
            self.weights.without_structure()
        }
    }
}

/// Unweighted batch-mean losses at one logged iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeTrace {
    pub iter: usize,
    pub aer: f64,
    pub mds: f64,
    pub cdp: f64,
    pub total: f64,
}

/// Per-batch gradient evaluation, shared by training and its gradient test.
pub(crate) struct AeBatch {
    pub x: Matrix,
    pub pressure: Vec<f64>,
    pub targets: Vec<f64>,
}

pub(crate) struct AeStep {
    pub losses: [f64; 3],
    pub enc_grads: crate::nn::Grads,
    pub dec_grads: crate::nn::Grads,
    pub enc_cache: crate::nn::ForwardCache,
    pub dec_cache: crate::nn::ForwardCache,
}

/// Rows `0..P` are pair heads and `P..2P` the matching tails.
pub(crate) fn ae_step(ae: &Autoencoder, batch: &AeBatch, w: &LossWeights) -> Result<AeStep> {
    let n = batch.x.rows();
    let pairs = batch.targets.len();
    let enc_cache = ae.encoder.forward(&batch.x)?;
    let u = enc_cache.output();
    let l = ae.latent_scale;
    let z = u.map(|v| l * v);
    let dec_cache = ae.decoder.forward(u)?;
    let s_hat = dec_cache.output();

    let nf = n as f64;
    let mut aer = 0.0;
    let mut d_shat = Matrix::zeros(n, s_hat.cols());
    for i in 0..n {
        for k in 0..s_hat.cols() {
            let e = s_hat[(i, k)] - batch.x[(i, k)];
            aer += e * e;
            d_shat[(i, k)] = w.aer * 2.0 * e / nf;
        }
    }
    aer /= nf;

    let (dec_grads, du) = ae.decoder.backward(&dec_cache, &d_shat)?;
    let mut dz = Matrix::zeros(n, LATENT_DIM);

    let mut mds = 0.0;
    for p in 0..pairs {
        let (a, b) = (p, p + pairs);
        let dx = z[(a, 0)] - z[(b, 0)];
        let dy = z[(a, 1)] - z[(b, 1)];
        let d = dx.hypot(dy);
        let e = d - batch.targets[p];
        mds += e * e;
        if d > 0.0 {
            let k = w.mds * 2.0 * e / (pairs as f64 * d);
            dz[(a, 0)] += k * dx;
            dz[(a, 1)] += k * dy;
            dz[(b, 0)] -= k * dx;
            dz[(b, 1)] -= k * dy;
        }
    }
    mds /= pairs.max(1) as f64;

    let mut cdp = 0.0;
    for i in 0..n {
        let e = z[(i, LATENT_DIM - 1)] - batch.pressure[i];
        cdp += e * e;
        dz[(i, LATENT_DIM - 1)] += w.cdp * 2.0 * e / nf;
    }
    cdp /= nf;

    let dz = du.zip_map(&dz, |a, b| a + l * b);
    let (enc_grads, _) = ae.encoder.backward(&enc_cache, &dz)?;
    Ok(AeStep {
        losses: [aer, mds, cdp],
        enc_grads,
        dec_grads,
        enc_cache,
        dec_cache,
    })
}

pub(crate) fn total_loss(losses: &[f64; 3], w: &LossWeights) -> f64 {
    w.aer * losses[0] + w.mds * losses[1] + w.cdp * losses[2]
}

/// Largest absolute electrode reading; the encoder input scale.
pub fn input_scale(samples: &[&AeSample]) -> f64 {
    let m = samples
        .iter()
        .flat_map(|s| s.s.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

/// Mean intra-bin geodesic distance; the encoder output scale.
pub fn latent_scale(bins: &[GeodesicBin]) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for b in bins {
        sum += b.matrix.iter().sum::<f64>();
        count += b.len() * b.len().saturating_sub(1);
    }
    if count > 0 && sum > 0.0 {
        sum / count as f64
    } else {
        1.0
    }
}

/// Trains on `samples` (indexed by the bins' sample indices). Each iteration
/// draws Siamese pairs from the bins and evaluates both branches with the
/// same parameters in one batch.
pub fn train_autoencoder(
    samples: &[AeSample],
    bins: &[GeodesicBin],
    cfg: &AeTrainConfig,
    seed: u64,
) -> Result<(Autoencoder, Vec<AeTrace>)> {
    if samples.is_empty() || bins.is_empty() {
        return Err(Error::EmptyDataset("autoencoder training needs samples and bins".into()));
    }
    let e = samples[0].s.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let in_bins: Vec<&AeSample> = bins.iter().flat_map(|b| b.indices.iter().map(|&i| &samples[i])).collect();
    let scale = input_scale(&in_bins);
    let w = cfg.effective_weights();
    let mut ae = Autoencoder::new(e, scale, latent_scale(bins), w, &mut rng);
    ae.config_echo = cfg.to_kv().to_string();
    ae.set_mode(Mode::Training);
    let mut enc_opt = RmsProp::new(cfg.lr);
    let mut dec_opt = RmsProp::new(cfg.lr);
    let mut traces = Vec::new();

    for iter in 0..cfg.iterations {
        let mut pairs = sample_siamese_pairs(bins, cfg.batch_pairs, &mut rng);
        // Randomize which member of each pair is the head.
        for p in &mut pairs {
            if rng.random::<bool>() {
                std::mem::swap(&mut p.a, &mut p.b);
            }
        }
        let order: Vec<usize> = pairs.iter().map(|p| p.a).chain(pairs.iter().map(|p| p.b)).collect();
        let rows: Vec<Vec<f64>> = order.iter().map(|&i| ae.scaled(&samples[i].s)).collect();
        let batch = AeBatch {
            x: Matrix::from_rows(&rows),
            pressure: order.iter().map(|&i| samples[i].pressure).collect(),
            targets: pairs.iter().map(|p| p.target).collect(),
        };
        let step = ae_step(&ae, &batch, &w)?;
        let total = total_loss(&step.losses, &w);
        if !total.is_finite() || !step.enc_grads.is_finite() || !step.dec_grads.is_finite() {
            return Err(Error::Divergence {
                iter,
                detail: format!("autoencoder loss {total} (aer, mds, cdp = {:?})", step.losses),
            });
        }
        if iter % cfg.log_every == 0 || iter + 1 == cfg.iterations {
            traces.push(AeTrace {
                iter,
                aer: step.losses[0],
                mds: step.losses[1],
                cdp: step.losses[2],
                total,
            });
            debug!("ae iter {iter}: {:?} total {total:.4e}", step.losses);
        }
        ae.encoder.update_running_stats(&step.enc_cache);
        ae.decoder.update_running_stats(&step.dec_cache);
        enc_opt.step(&mut ae.encoder, &step.enc_grads);
        dec_opt.step(&mut ae.decoder, &step.dec_grads);
    }
    ae.set_mode(Mode::Inference);
    if let Some(t) = traces.last() {
        info!("autoencoder trained: aer {:.3e} mds {:.3e} cdp {:.3e}", t.aer, t.mds, t.cdp);
    }
    Ok((ae, traces))
}
