//! Central finite-difference checks of analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::jacobian::JacobianTape;
use super::matrix::Matrix;
use super::mlp::{Grads, Mlp, MlpSpec, Mode};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;
/// Gradients below this magnitude are compared in absolute terms; it sits
/// above the round-off floor of a central difference at `FD_STEP`.
pub const REL_FLOOR: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradCheck {
    pub params: f64,
    pub inputs: f64,
}

impl GradCheck {
    pub fn worst(&self) -> f64 {
        self.params.max(self.inputs)
    }

    pub fn merge(self, o: GradCheck) -> GradCheck {
        GradCheck {
            params: self.params.max(o.params),
            inputs: self.inputs.max(o.inputs),
        }
    }
}

fn loss_of(y: &Matrix, c: &Matrix) -> f64 {
    y.data()
        .iter()
        .zip(c.data())
        .map(|(a, b)| a * b + 0.5 * a * a)
        .sum()
}

fn perturb(net: &mut Mlp, flat: usize, delta: f64) {
    let mut k = flat;
    for s in net.param_slices_mut() {
        if k < s.len() {
            s[k] += delta;
            return;
        }
        k -= s.len();
    }
}

/// Random network and batch; loss `Σ c·y + ½ y²` over outputs. Batch-norm
/// layers use batch statistics when `mode` is training.
pub fn check_mlp(spec: &MlpSpec, mode: Mode, batch: usize, seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Mlp::new(spec.clone(), &mut rng);
    for l in net.layers_mut() {
        l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        if let Some(bn) = &mut l.bn {
            bn.scale.iter_mut().for_each(|v| *v = rng.random_range(0.5..1.5));
            bn.shift.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
            bn.running_mean.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
            bn.running_var.iter_mut().for_each(|v| *v = rng.random_range(0.5..2.0));
        }
    }
    net.set_mode(mode);
    let x = Matrix::from_vec(
        batch,
        spec.input,
        (0..batch * spec.input).map(|_| rng.random_range(-1.5..1.5)).collect(),
    );
    let c = Matrix::from_vec(
        batch,
        spec.output(),
        (0..batch * spec.output()).map(|_| rng.random_range(-1.0..1.0)).collect(),
    );
    let cache = net.forward(&x)?;
    let up = cache.output().zip_map(&c, |y, cc| y + cc);
    let (grads, dx) = net.backward(&cache, &up)?;

    let mut out = GradCheck::default();
    let analytic: Vec<f64> = grads.slices().concat();
    for (k, &a) in analytic.iter().enumerate() {
        perturb(&mut net, k, FD_STEP);
        let lp = loss_of(&net.predict(&x)?, &c);
        perturb(&mut net, k, -2.0 * FD_STEP);
        let lm = loss_of(&net.predict(&x)?, &c);
        perturb(&mut net, k, FD_STEP);
        let n = (lp - lm) / (2.0 * FD_STEP);
        out.params = out.params.max(rel_err(a, n, REL_FLOOR));
    }
    for k in 0..x.data().len() {
        let mut xp = x.clone();
        xp.data_mut()[k] += FD_STEP;
        let mut xm = x.clone();
        xm.data_mut()[k] -= FD_STEP;
        let n = (loss_of(&net.predict(&xp)?, &c) - loss_of(&net.predict(&xm)?, &c)) / (2.0 * FD_STEP);
        out.inputs = out.inputs.max(rel_err(dx.data()[k], n, REL_FLOOR));
    }
    Ok(out)
}

/// Checks the Jacobian tape on a loss `c·f(x) + Σ G ⊙ ∂f/∂x`.
pub fn check_tape(spec: &MlpSpec, seed: u64) -> Result<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Mlp::new(spec.clone(), &mut rng);
    for l in net.layers_mut() {
        l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
    }
    let x: Vec<f64> = (0..spec.input).map(|_| rng.random_range(-1.5..1.5)).collect();
    let c: Vec<f64> = (0..spec.output()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g = Matrix::from_vec(
        spec.output(),
        spec.input,
        (0..spec.output() * spec.input).map(|_| rng.random_range(-1.0..1.0)).collect(),
    );
    let loss = |net: &Mlp, x: &[f64]| -> Result<f64> {
        let t = JacobianTape::record(net, x)?;
        let lin: f64 = t.output().iter().zip(&c).map(|(a, b)| a * b).sum();
        let jac: f64 = t.jacobian().data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        Ok(lin + jac)
    };
    let tape = JacobianTape::record(&net, &x)?;
    let mut grads = Grads::zeros_like(&net);
    let dx = tape.backward(&net, &c, Some(&g), &mut grads)?;

    let mut out = GradCheck::default();
    let analytic: Vec<f64> = grads.slices().concat();
    for (k, &a) in analytic.iter().enumerate() {
        perturb(&mut net, k, FD_STEP);
        let lp = loss(&net, &x)?;
        perturb(&mut net, k, -2.0 * FD_STEP);
        let lm = loss(&net, &x)?;
        perturb(&mut net, k, FD_STEP);
        out.params = out.params.max(rel_err(a, (lp - lm) / (2.0 * FD_STEP), REL_FLOOR));
    }
    for k in 0..x.len() {
        let mut xp = x.clone();
        xp[k] += FD_STEP;
        let mut xm = x.clone();
        xm[k] -= FD_STEP;
        let n = (loss(&net, &xp)? - loss(&net, &xm)?) / (2.0 * FD_STEP);
        out.inputs = out.inputs.max(rel_err(dx[k], n, REL_FLOOR));
    }
    Ok(out)
}

/// Input Jacobian from reverse passes against finite differences.
pub fn check_input_jacobian(spec: &MlpSpec, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = Mlp::new(spec.clone(), &mut rng);
    let x: Vec<f64> = (0..spec.input).map(|_| rng.random_range(-1.5..1.5)).collect();
    let j = net.input_jacobian(&x)?;
    let mut worst: f64 = 0.0;
    for k in 0..x.len() {
        let mut xp = x.clone();
        xp[k] += FD_STEP;
        let mut xm = x.clone();
        xm[k] -= FD_STEP;
        let (yp, ym) = (net.predict_one(&xp)?, net.predict_one(&xm)?);
        for i in 0..spec.output() {
            let n = (yp[i] - ym[i]) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(j[(i, k)], n, REL_FLOOR));
        }
    }
    Ok(worst)
}

/// Network shapes used by the models in this crate.
pub fn model_shapes() -> Vec<(&'static str, MlpSpec)> {
    let e = |w: &[usize], bn| MlpSpec::tanh_hidden(w, bn).expect("valid widths");
    vec![
        ("encoder", e(&[19, 19, 12, 6, 3], true)),
        ("decoder", e(&[3, 6, 12, 19, 19], true)),
        ("nl_dynamics", e(&[9, 15, 3], false)),
        ("ll_dynamics", e(&[3, 8, 15, 23, 30], false)),
    ]
}
