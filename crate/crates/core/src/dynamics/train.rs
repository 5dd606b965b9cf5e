use log::{debug, info};
use nalgebra::{Matrix3, Matrix3x6, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::control::{lq_backward, lq_rhs, lq_solve, ng_gradient, nj_system, solve_linear};
use super::model::{action_vector, DynKind, DynamicsModel, IdKind, LinearParams, Normalizer, ACTION_DIM};
use crate::config::KvConfig;
use crate::datapipe::TransitionTuple;
use crate::embedding::Autoencoder;
use crate::error::{Error, Result};
use crate::nn::{Grads, JacobianTape, Matrix, RmsProp};

/// Ground-truth actions shorter than this are left out of the direction loss.
pub const MIN_ACTION_NORM: f64 = 1e-8;

/// A transition tuple with its tactile states already encoded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentTuple {
    pub z_prev: Vector3<f64>,
    pub a_prev: Vector6<f64>,
    pub z: Vector3<f64>,
    pub a: Vector6<f64>,
    pub z_next: Vector3<f64>,
    pub dt: f64,
}

impl LatentTuple {
    /// Start state, actions and targets of the length-`c` chain ending at `z_next`.
    fn chain(&self, c: usize) -> (Vector3<f64>, Vec<Vector6<f64>>, Vec<Vector3<f64>>) {
        match c {
            1 => (self.z, vec![self.a], vec![self.z_next]),
            _ => (self.z_prev, vec![self.a_prev, self.a], vec![self.z, self.z_next]),
        }
    }
}

pub fn encode_tuples<'a, I>(ae: &Autoencoder, tuples: I) -> Result<Vec<LatentTuple>>
where
    I: IntoIterator<Item = &'a TransitionTuple>,
{
    let tuples: Vec<&TransitionTuple> = tuples.into_iter().collect();
    let enc = |f: fn(&TransitionTuple) -> &[f64]| ae.encode_many(tuples.iter().map(|t| f(t)));
    let zp = enc(|t| &t.s_prev)?;
    let z = enc(|t| &t.s)?;
    let zn = enc(|t| &t.s_next)?;
    Ok(tuples
        .iter()
        .enumerate()
        .map(|(i, t)| LatentTuple {
            z_prev: Vector3::from(zp[i].0),
            a_prev: action_vector(&t.a_prev),
            z: Vector3::from(z[i].0),
            a: action_vector(&t.a),
            z_next: Vector3::from(zn[i].0),
            dt: t.dt,
        })
        .collect())
}

pub fn fit_normalizer(tuples: &[LatentTuple]) -> Normalizer {
    let mut z = Vec::new();
    let mut a = Vec::new();
    let mut zdot = Vec::new();
    for t in tuples {
        z.extend([t.z_prev, t.z, t.z_next].map(|v| [v[0], v[1], v[2]]));
        a.extend([t.a_prev, t.a].map(|v| std::array::from_fn::<f64, ACTION_DIM, _>(|k| v[k])));
        for d in [(t.z - t.z_prev) / t.dt, (t.z_next - t.z) / t.dt] {
            zdot.push([d[0], d[1], d[2]]);
        }
    }
    Normalizer::fit(&z, &a, &zdot)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynTrainConfig {
    pub kind: DynKind,
    pub id: IdKind,
    pub iterations: usize,
    pub batch: usize,
    pub lr: f64,
    pub w_lfd: f64,
    pub w_id: f64,
    pub beta: f64,
    pub ng_alpha: f64,
    pub chain: usize,
    pub id_loss: bool,
    pub log_every: usize,
}

impl Default for DynTrainConfig {
    fn default() -> Self {
        Self {
            kind: DynKind::NonLinear,
            id: IdKind::Nj,
            iterations: 20_000,
            batch: 128,
            lr: RmsProp::DEFAULT_LR,
            w_lfd: 1e8,
            w_id: 1e3,
            beta: 0.1,
            ng_alpha: 1.0,
            chain: 2,
            id_loss: true,
            log_every: 100,
        }
    }
}

impl DynTrainConfig {
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let kind: DynKind = kv.get_or("dyn.variant", d.kind.name().to_string())?.parse()?;
        let id = match kv.raw("dyn.id") {
            Some(s) => s.parse()?,
            None => kind.default_id(),
        };
        let cfg = Self {
            kind,
            id,
            iterations: kv.get_or("dyn.iterations", d.iterations)?,
            batch: kv.get_or("dyn.batch", d.batch)?,
            lr: kv.get_or("dyn.lr", d.lr)?,
            w_lfd: kv.get_or("dyn.w_lfd", d.w_lfd)?,
            w_id: kv.get_or("dyn.w_id", d.w_id)?,
            beta: kv.get_or("dyn.beta", d.beta)?,
            ng_alpha: kv.get_or("dyn.ng_alpha", d.ng_alpha)?,
            chain: kv.get_or("dyn.chain", d.chain)?,
            id_loss: kv.get_bool_or("dyn.id_loss", d.id_loss)?,
            log_every: kv.get_or("dyn.log_every", d.log_every)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.id.compatible_with(self.kind) {
            return Err(Error::Config(format!(
                "dyn.id = {} does not apply to dyn.variant = {}",
                self.id, self.kind
            )));
        }
        if !(1..=2).contains(&self.chain) {
            return Err(Error::Config(format!("dyn.chain must be 1 or 2, got {}", self.chain)));
        }
        if self.batch == 0 || self.log_every == 0 || !(self.beta > 0.0) || !(self.ng_alpha > 0.0) {
            return Err(Error::Config("dyn.batch, dyn.log_every, dyn.beta and dyn.ng_alpha must be positive".into()));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvConfig {
        let mut kv = KvConfig::new();
        kv.set("dyn.variant", self.kind);
        kv.set("dyn.id", self.id);
        kv.set("dyn.iterations", self.iterations);
        kv.set("dyn.batch", self.batch);
        kv.set("dyn.lr", self.lr);
        kv.set("dyn.w_lfd", self.w_lfd);
        kv.set("dyn.w_id", self.w_id);
        kv.set("dyn.beta", self.beta);
        kv.set("dyn.ng_alpha", self.ng_alpha);
        kv.set("dyn.chain", self.chain);
        kv.set("dyn.id_loss", self.id_loss);
        kv.set("dyn.log_every", self.log_every);
        kv
    }
}

/// Batch-mean losses at one logged iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynTrace {
    pub iter: usize,
    pub lfd: f64,
    pub id: f64,
    pub total: f64,
}

/// `‖â/‖â‖ − a/‖a‖‖²` and its gradient in `â`; `None` when either vector
/// is too short to have a direction.
pub fn direction_loss(a_hat: &Vector6<f64>, a: &Vector6<f64>) -> Option<(f64, Vector6<f64>)> {
    let na = a.norm();
    let nh = a_hat.norm();
    if na < MIN_ACTION_NORM || nh == 0.0 || !nh.is_finite() {
        return None;
    }
    let u = a / na;
    let n = a_hat / nh;
    let loss = (n - u).norm_squared();
    let grad = -(u - n * n.dot(&u)) * (2.0 / nh);
    Some((loss, grad))
}

/// The model's inverse-dynamics action for a tuple (`z_T = z_{t+1}`). For
/// the gradient controller only the direction is returned.
pub fn tuple_inverse(model: &DynamicsModel, t: &LatentTuple) -> Result<Vector6<f64>> {
    match model.id {
        IdKind::Ll => super::control::id_ll(model, &t.z_next, &t.z, t.dt, model.beta),
        IdKind::Ng => ng_gradient(model, &t.z_next, &t.z, t.dt),
        IdKind::Nj => {
            let (jz, ja) = model.nl_jacobians(&t.z_prev, &t.a_prev)?;
            let sys = nj_system(&jz, &ja, &t.z_prev, &t.a_prev, t.dt);
            let (w, k) = model.control_metric();
            Ok(solve_linear(&sys, &t.z, &t.z_next, t.dt, model.beta * k, &w)?.action)
        }
    }
}

/// `Σ_t Σ_k ‖ẑ_{t,k} − z_{t,k}‖²` over length-`c` chains.
pub fn loss_lfd(model: &DynamicsModel, tuples: &[LatentTuple], c: usize) -> Result<f64> {
    let mut total = 0.0;
    for t in tuples {
        let (z0, actions, targets) = t.chain(c);
        let pred = model.chain_predict(&z0, &actions, t.dt)?;
        total += pred.iter().zip(&targets).map(|(p, q)| (p - q).norm_squared()).sum::<f64>();
    }
    Ok(total)
}

/// `Σ_t ‖â_t/‖â_t‖ − a_t/‖a_t‖‖²` and the number of tuples counted.
pub fn loss_id(model: &DynamicsModel, tuples: &[LatentTuple]) -> Result<(f64, usize)> {
    let mut total = 0.0;
    let mut count = 0;
    for t in tuples {
        if let Some((l, _)) = direction_loss(&tuple_inverse(model, t)?, &t.a) {
            total += l;
            count += 1;
        }
    }
    Ok((total, count))
}

/// Batch-mean chained forward loss and its parameter gradient.
pub(crate) fn lfd_grad(model: &DynamicsModel, batch: &[&LatentTuple], c: usize) -> Result<(f64, Grads)> {
    let n = batch.len();
    let nf = n as f64;
    let norm = &model.norm;
    let chains: Vec<_> = batch.iter().map(|t| t.chain(c)).collect();
    let mut zs: Vec<Vec<Vector3<f64>>> = vec![chains.iter().map(|ch| ch.0).collect()];
    let mut caches = Vec::with_capacity(c);
    for k in 0..c {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| model.net_input(&zs[k][i], &chains[i].1[k])).collect();
        let cache = model.net.forward(&Matrix::from_rows(&rows))?;
        let out = cache.output();
        let next = (0..n)
            .map(|i| {
                let z = &zs[k][i];
                let zdot = match model.kind {
                    DynKind::LocallyLinear => model.ll_from_output(out.row(i)).zdot(z, &chains[i].1[k]),
                    DynKind::NonLinear => Vector3::from_fn(|r, _| norm.zdot_std[r] * out[(i, r)]),
                };
                z + zdot * batch[i].dt
            })
            .collect();
        zs.push(next);
        caches.push(cache);
    }

    let mut loss = 0.0;
    for i in 0..n {
        for k in 0..c {
            loss += (zs[k + 1][i] - chains[i].2[k]).norm_squared();
        }
    }
    loss /= nf;

    let mut grads = Grads::zeros_like(&model.net);
    let mut g: Vec<Vector3<f64>> = (0..n).map(|i| (zs[c][i] - chains[i].2[c - 1]) * (2.0 / nf)).collect();
    for k in (0..c).rev() {
        let cache = &caches[k];
        let out = cache.output();
        let mut upstream = Matrix::zeros(n, out.cols());
        let mut direct = vec![Vector3::zeros(); n];
        for i in 0..n {
            let g_v = Vector3::from_fn(|r, _| norm.zdot_std[r] * g[i][r] * batch[i].dt);
            match model.kind {
                DynKind::LocallyLinear => {
                    let raw = LinearParams::unpack(out.row(i));
                    let zh = norm.z_in(&zs[k][i]);
                    let ah = norm.a_in(&chains[i].1[k]);
                    let row = upstream.row_mut(i);
                    for r in 0..3 {
                        for j in 0..3 {
                            row[3 * r + j] = g_v[r] * zh[j];
                        }
                        for j in 0..ACTION_DIM {
                            row[9 + ACTION_DIM * r + j] = g_v[r] * ah[j];
                        }
                        row[27 + r] = g_v[r];
                    }
                    direct[i] = raw.a.transpose() * g_v;
                }
                DynKind::NonLinear => upstream.row_mut(i).copy_from_slice(g_v.as_slice()),
            }
        }
        let (gk, dx) = model.net.backward(cache, &upstream)?;
        grads.add_assign(&gk);
        for i in 0..n {
            let g_zh = direct[i] + Vector3::from_fn(|r, _| dx[(i, r)]);
            let mut prev = g[i] + Vector3::from_fn(|r, _| g_zh[r] / norm.z_std[r]);
            if k >= 1 {
                prev += (zs[k][i] - chains[i].2[k - 1]) * (2.0 / nf);
            }
            g[i] = prev;
        }
    }
    Ok((loss, grads))
}

/// Network-unit gradient of a physical `(A, B)` Jacobian pair.
fn jacobian_grad(norm: &Normalizer, g_a: &Matrix3<f64>, g_b: &Matrix3x6<f64>) -> Matrix {
    let mut g = Matrix::zeros(3, 3 + ACTION_DIM);
    for i in 0..3 {
        for j in 0..3 {
            g[(i, j)] = norm.zdot_std[i] * g_a[(i, j)] / norm.z_std[j];
        }
        for j in 0..ACTION_DIM {
            g[(i, 3 + j)] = norm.zdot_std[i] * g_b[(i, j)] / norm.a_std[j];
        }
    }
    g
}

/// Mean direction loss over the counted tuples of the batch and its
/// parameter gradient.
pub(crate) fn id_grad(model: &DynamicsModel, batch: &[&LatentTuple]) -> Result<(f64, Grads)> {
    let norm = &model.norm;
    let (w, k) = model.control_metric();
    let beta = model.beta * k;
    let mut grads = Grads::zeros_like(&model.net);
    let mut loss = 0.0;
    let mut count = 0usize;
    match model.id {
        IdKind::Ll => {
            let rows: Vec<Vec<f64>> = batch.iter().map(|t| model.net_input(&t.z, &t.a)).collect();
            let cache = model.net.forward(&Matrix::from_rows(&rows))?;
            let out = cache.output();
            let mut upstream = Matrix::zeros(batch.len(), out.cols());
            let mu = Vector3::from(norm.z_mean);
            for (i, t) in batch.iter().enumerate() {
                let sys = model.ll_from_output(out.row(i));
                let sol = lq_solve(&sys.b, &lq_rhs(&sys, &t.z, &t.z_next, t.dt), t.dt, beta, &w)?;
                let Some((l, g_a)) = direction_loss(&sol.action, &t.a) else {
                    continue;
                };
                loss += l;
                count += 1;
                let (g_b, g_r) = lq_backward(&sys.b, &sol, &g_a, t.dt, beta, &w)?;
                let g_c = -g_r;
                let g_amat = -(g_r * t.z.transpose()) - g_c * mu.transpose();
                let row = upstream.row_mut(i);
                for r in 0..3 {
                    for j in 0..3 {
                        row[3 * r + j] = norm.zdot_std[r] * g_amat[(r, j)] / norm.z_std[j];
                    }
                    for j in 0..ACTION_DIM {
                        row[9 + ACTION_DIM * r + j] = norm.zdot_std[r] * g_b[(r, j)] / norm.a_std[j];
                    }
                    row[27 + r] = norm.zdot_std[r] * g_c[r];
                }
            }
            let (g, _) = model.net.backward(&cache, &upstream)?;
            grads = g;
        }
        IdKind::Nj => {
            for t in batch {
                let tape = JacobianTape::record(&model.net, &model.net_input(&t.z_prev, &t.a_prev))?;
                let (jz, ja) = model.physical_jacobians(tape.jacobian());
                let sys = nj_system(&jz, &ja, &t.z_prev, &t.a_prev, t.dt);
                let sol = solve_linear(&sys, &t.z, &t.z_next, t.dt, beta, &w)?;
                let Some((l, g_a)) = direction_loss(&sol.action, &t.a) else {
                    continue;
                };
                loss += l;
                count += 1;
                let (g_b, g_r) = lq_backward(&sys.b, &sol, &g_a, t.dt, beta, &w)?;
                let g_abar = -(g_r * (t.z - t.z_prev).transpose());
                let g_bbar = g_b + g_r * t.a_prev.transpose();
                tape.backward(&model.net, &[0.0; 3], Some(&jacobian_grad(norm, &g_abar, &g_bbar)), &mut grads)?;
            }
        }
        IdKind::Ng => {
            for t in batch {
                let tape = JacobianTape::record(&model.net, &model.net_input(&t.z, &Vector6::zeros()))?;
                let (_, ja) = model.physical_jacobians(tape.jacobian());
                let f0 = Vector3::from_fn(|r, _| norm.zdot_std[r] * tape.output()[r]);
                let e = t.z + f0 * t.dt - t.z_next;
                let a_hat = -(ja.transpose() * e).component_mul(&w);
                let Some((l, g_a)) = direction_loss(&a_hat, &t.a) else {
                    continue;
                };
                loss += l;
                count += 1;
                let g_aw = g_a.component_mul(&w);
                let g_ja = -(e * g_aw.transpose());
                let g_e = -(ja * g_aw);
                let g_out: Vec<f64> = (0..3).map(|r| norm.zdot_std[r] * g_e[r] * t.dt).collect();
                tape.backward(&model.net, &g_out, Some(&jacobian_grad(norm, &Matrix3::zeros(), &g_ja)), &mut grads)?;
            }
        }
    }
    if count > 0 {
        loss /= count as f64;
        grads.scale(1.0 / count as f64);
    }
    Ok((loss, grads))
}

/// Weighted batch objective and its gradient.
pub(crate) fn objective(model: &DynamicsModel, batch: &[&LatentTuple], cfg: &DynTrainConfig) -> Result<([f64; 2], f64, Grads)> {
    let (lfd, mut g) = lfd_grad(model, batch, cfg.chain)?;
    g.scale(cfg.w_lfd);
    let mut id = 0.0;
    if cfg.id_loss {
        let (l, mut gi) = id_grad(model, batch)?;
        gi.scale(cfg.w_id);
        g.add_assign(&gi);
        id = l;
    }
    let total = cfg.w_lfd * lfd + if cfg.id_loss { cfg.w_id * id } else { 0.0 };
    Ok(([lfd, id], total, g))
}

/// Trains a dynamics model on encoded tuples; the encoder stays fixed.
pub fn train_dynamics(tuples: &[LatentTuple], cfg: &DynTrainConfig, seed: u64) -> Result<(DynamicsModel, Vec<DynTrace>)> {
    cfg.validate()?;
    if tuples.is_empty() {
        return Err(Error::EmptyDataset("dynamics training needs transition tuples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = DynamicsModel::new(cfg.kind, cfg.id, fit_normalizer(tuples), cfg.beta, &mut rng)?;
    model.ng_alpha = cfg.ng_alpha;
    model.config_echo = cfg.to_kv().to_string();
    let mut opt = RmsProp::new(cfg.lr);
    let mut traces = Vec::new();
    for iter in 0..cfg.iterations {
        let batch: Vec<&LatentTuple> = (0..cfg.batch).map(|_| &tuples[rng.random_range(0..tuples.len())]).collect();
        let (losses, total, grads) = objective(&model, &batch, cfg)?;
        if !total.is_finite() || !grads.is_finite() {
            return Err(Error::Divergence {
                iter,
                detail: format!("dynamics loss {total} (lfd, id = {losses:?})"),
            });
        }
        if iter % cfg.log_every == 0 || iter + 1 == cfg.iterations {
            traces.push(DynTrace {
                iter,
                lfd: losses[0],
                id: losses[1],
                total,
            });
            debug!("dyn iter {iter}: lfd {:.3e} id {:.3e}", losses[0], losses[1]);
        }
        opt.step(&mut model.net, &grads);
    }
    if let Some(t) = traces.last() {
        info!("dynamics {}/{} trained: lfd {:.3e} id {:.3e}", cfg.kind, cfg.id, t.lfd, t.id);
    }
    Ok((model, traces))
}
