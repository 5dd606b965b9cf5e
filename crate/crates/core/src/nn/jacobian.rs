//! Forward-mode input Jacobian with a reverse pass through it, for losses
//! that depend on `∂f/∂x` as well as `f(x)`.
//!
//! For layers `h_l = φ(W_l h_{l-1} + b_l)` the tape carries
//! `T_l = Φ_l W_l T_{l-1}` with `Φ_l = diag φ'(u_l)` and `T_0 = I`. Batch
//! normalization is not supported: its Jacobian would depend on the batch.

use super::matrix::{dot, Matrix};
use super::mlp::{Activation, Grads, Mlp};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct JacobianTape {
    /// `h_0 .. h_L`
    hs: Vec<Vec<f64>>,
    /// `P_l = W_l T_{l-1}` for each layer.
    ps: Vec<Matrix>,
    /// `T_0 .. T_L`
    ts: Vec<Matrix>,
    generation: u64,
}

impl JacobianTape {
    pub fn record(net: &Mlp, x: &[f64]) -> Result<Self> {
        if net.spec().has_batch_norm() {
            return Err(Error::UnsupportedLayout(
                "jacobian tape requires a network without batch normalization".into(),
            ));
        }
        if x.len() != net.spec().input {
            return Err(Error::WidthMismatch {
                expected: net.spec().input,
                got: x.len(),
            });
        }
        let mut hs = vec![x.to_vec()];
        let mut ps = Vec::new();
        let mut ts = vec![Matrix::identity(x.len())];
        for (layer, ls) in net.layers().iter().zip(&net.spec().layers) {
            let h = hs.last().expect("nonempty");
            let w = &layer.weight;
            let y: Vec<f64> = (0..w.rows())
                .map(|k| ls.activation.apply(dot(w.row(k), h) + layer.bias[k]))
                .collect();
            let p = w.matmul(ts.last().expect("nonempty"));
            let mut t = p.clone();
            for (k, &yk) in y.iter().enumerate() {
                let d = ls.activation.deriv_from_output(yk);
                t.row_mut(k).iter_mut().for_each(|v| *v *= d);
            }
            hs.push(y);
            ps.push(p);
            ts.push(t);
        }
        Ok(Self {
            hs,
            ps,
            ts,
            generation: net.generation(),
        })
    }

    pub fn output(&self) -> &[f64] {
        self.hs.last().expect("nonempty")
    }

    pub fn jacobian(&self) -> &Matrix {
        self.ts.last().expect("nonempty")
    }

    /// Accumulates into `grads` the parameter gradient of a loss with
    /// `∂L/∂f = g_out` and `∂L/∂J = g_jac`; returns `∂L/∂x`.
    pub fn backward(
        &self,
        net: &Mlp,
        g_out: &[f64],
        g_jac: Option<&Matrix>,
        grads: &mut Grads,
    ) -> Result<Vec<f64>> {
        if self.generation != net.generation() {
            return Err(Error::StaleCache);
        }
        let layers = net.layers();
        let n = layers.len();
        let mut inject: Vec<Vec<f64>> = layers.iter().map(|l| vec![0.0; l.bias.len()]).collect();

        if let Some(g) = g_jac {
            let mut gl = g.clone();
            for l in (0..n).rev() {
                let act = net.spec().layers[l].activation;
                let y = &self.hs[l + 1];
                let p = &self.ps[l];
                let mut dp = gl;
                for k in 0..y.len() {
                    if act != Activation::Linear {
                        let dphi = dot(dp.row(k), p.row(k));
                        inject[l][k] += dphi * act.second_deriv_from_output(y[k]);
                    }
                    let d = act.deriv_from_output(y[k]);
                    dp.row_mut(k).iter_mut().for_each(|v| *v *= d);
                }
                grads.layers[l].weight.add_assign(&dp.matmul_t(&self.ts[l]));
                gl = layers[l].weight.t_matmul(&dp);
            }
        }

        let mut dh = g_out.to_vec();
        for l in (0..n).rev() {
            let act = net.spec().layers[l].activation;
            let y = &self.hs[l + 1];
            let du: Vec<f64> = (0..y.len())
                .map(|k| dh[k] * act.deriv_from_output(y[k]) + inject[l][k])
                .collect();
            let h = &self.hs[l];
            let g = &mut grads.layers[l];
            for (k, &d) in du.iter().enumerate() {
                g.bias[k] += d;
                for (wv, hv) in g.weight.row_mut(k).iter_mut().zip(h) {
                    *wv += d * hv;
                }
            }
            let w = &layers[l].weight;
            let mut next = vec![0.0; h.len()];
            for (k, &d) in du.iter().enumerate() {
                for (nv, wv) in next.iter_mut().zip(w.row(k)) {
                    *nv += d * wv;
                }
            }
            dh = next;
        }
        Ok(dh)
    }
}
