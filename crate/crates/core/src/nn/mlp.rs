use rand::Rng;

use super::matrix::Matrix;
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-8;
pub const BN_MOMENTUM: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Linear => v,
        }
    }

    /// Derivative expressed through the activation output `y`.
    pub fn deriv_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }

    /// Second derivative expressed through the activation output `y`.
    pub fn second_deriv_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => -2.0 * y * (1.0 - y * y),
            Activation::Linear => 0.0,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Linear => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Linear),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
    pub batch_norm: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    pub input: usize,
    pub layers: Vec<LayerSpec>,
}

impl MlpSpec {
    pub fn new(input: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        if layers.is_empty() || input == 0 || layers.iter().any(|l| l.width == 0) {
            return Err(Error::UnsupportedLayout(format!(
                "need at least one layer and nonzero widths (input {input}, {} layers)",
                layers.len()
            )));
        }
        Ok(Self { input, layers })
    }

    /// `widths = [input, hidden.., output]`: tanh hidden layers (optionally
    /// batch-normalized) and a linear output layer.
    pub fn tanh_hidden(widths: &[usize], batch_norm: bool) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::UnsupportedLayout("need input and output widths".into()));
        }
        let n = widths.len() - 1;
        let layers = widths[1..]
            .iter()
            .enumerate()
            .map(|(i, &width)| {
                let hidden = i + 1 < n;
                LayerSpec {
                    width,
                    activation: if hidden { Activation::Tanh } else { Activation::Linear },
                    batch_norm: hidden && batch_norm,
                }
            })
            .collect();
        Self::new(widths[0], layers)
    }

    pub fn output(&self) -> usize {
        self.layers.last().map_or(0, |l| l.width)
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input)
            .chain(self.layers.iter().map(|l| l.width))
            .collect()
    }

    pub fn has_batch_norm(&self) -> bool {
        self.layers.iter().any(|l| l.batch_norm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Training,
    Inference,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    fn new(n: usize) -> Self {
        Self {
            scale: vec![1.0; n],
            shift: vec![0.0; n],
            running_mean: vec![0.0; n],
            running_var: vec![1.0; n],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub bn: Option<BatchNorm>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    layers: Vec<Layer>,
    mode: Mode,
    generation: u64,
}

#[derive(Debug, Clone)]
struct LayerCache {
    input: Matrix,
    xhat: Option<Matrix>,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
    output: Matrix,
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    mode: Mode,
    generation: u64,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        &self.layers.last().expect("nonempty").output
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }
}

/// Gradients shaped like the trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub layers: Vec<LayerGrads>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl Grads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp
                .layers
                .iter()
                .map(|l| {
                    let bn = l.bn.as_ref().map_or(0, |b| b.scale.len());
                    LayerGrads {
                        weight: Matrix::zeros(l.weight.rows(), l.weight.cols()),
                        bias: vec![0.0; l.bias.len()],
                        scale: vec![0.0; bn],
                        shift: vec![0.0; bn],
                    }
                })
                .collect(),
        }
    }

    /// Flat views in parameter declaration order.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            v.push(l.weight.data());
            v.push(&l.bias);
            if !l.scale.is_empty() {
                v.push(&l.scale);
                v.push(&l.shift);
            }
        }
        v
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            v.push(l.weight.data_mut());
            v.push(&mut l.bias);
            if !l.scale.is_empty() {
                v.push(&mut l.scale);
                v.push(&mut l.shift);
            }
        }
        v
    }

    pub fn add_assign(&mut self, other: &Grads) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, k: f64) {
        for s in self.slices_mut() {
            for x in s {
                *x *= k;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases, unit batch-norm scale.
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Self {
        let mut fan_in = spec.input;
        let layers = spec
            .layers
            .iter()
            .map(|ls| {
                let limit = (6.0 / (fan_in + ls.width) as f64).sqrt();
                let data = (0..ls.width * fan_in)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect();
                let layer = Layer {
                    weight: Matrix::from_vec(ls.width, fan_in, data),
                    bias: vec![0.0; ls.width],
                    bn: ls.batch_norm.then(|| BatchNorm::new(ls.width)),
                };
                fan_in = ls.width;
                layer
            })
            .collect();
        Self {
            spec,
            layers,
            mode: Mode::Inference,
            generation: 0,
        }
    }

    pub fn from_layers(spec: MlpSpec, layers: Vec<Layer>) -> Result<Self> {
        if layers.len() != spec.layers.len() {
            return Err(Error::UnsupportedLayout("layer count does not match spec".into()));
        }
        let mut fan_in = spec.input;
        for (l, s) in layers.iter().zip(&spec.layers) {
            if l.weight.rows() != s.width
                || l.weight.cols() != fan_in
                || l.bias.len() != s.width
                || l.bn.is_some() != s.batch_norm
            {
                return Err(Error::UnsupportedLayout("parameter shapes do not match spec".into()));
            }
            if let Some(bn) = &l.bn {
                if bn.running_var.iter().any(|&v| v <= 0.0) {
                    return Err(Error::UnsupportedLayout("running variance must be positive".into()));
                }
            }
            fan_in = s.width;
        }
        Ok(Self {
            spec,
            layers,
            mode: Mode::Inference,
            generation: 0,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable parameter access; invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.generation += 1;
        &mut self.layers
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        if mode != self.mode {
            self.mode = mode;
            self.generation += 1;
        }
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = Vec::new();
        for l in &self.layers {
            v.push(l.weight.data());
            v.push(&l.bias);
            if let Some(bn) = &l.bn {
                v.push(&bn.scale);
                v.push(&bn.shift);
            }
        }
        v
    }

    /// Mutable flat views in declaration order; invalidates caches.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation += 1;
        let mut v: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.layers {
            v.push(l.weight.data_mut());
            v.push(&mut l.bias);
            if let Some(bn) = &mut l.bn {
                v.push(&mut bn.scale);
                v.push(&mut bn.shift);
            }
        }
        v
    }

    pub fn forward(&self, x: &Matrix) -> Result<ForwardCache> {
        if x.cols() != self.spec.input {
            return Err(Error::WidthMismatch {
                expected: self.spec.input,
                got: x.cols(),
            });
        }
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (layer, ls) in self.layers.iter().zip(&self.spec.layers) {
            let mut u = h.matmul_t(&layer.weight);
            let n = u.rows();
            for i in 0..n {
                for (v, b) in u.row_mut(i).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            let mut cache = LayerCache {
                input: h,
                xhat: None,
                inv_std: Vec::new(),
                batch_mean: Vec::new(),
                batch_var: Vec::new(),
                output: Matrix::zeros(0, 0),
            };
            if let Some(bn) = &layer.bn {
                let (mean, var) = match self.mode {
                    Mode::Training => {
                        let mean: Vec<f64> = u.col_sums().iter().map(|s| s / n as f64).collect();
                        let mut var = vec![0.0; mean.len()];
                        for i in 0..n {
                            for ((acc, v), m) in var.iter_mut().zip(u.row(i)).zip(&mean) {
                                *acc += (v - m) * (v - m);
                            }
                        }
                        var.iter_mut().for_each(|v| *v /= n as f64);
                        (mean, var)
                    }
                    Mode::Inference => (bn.running_mean.clone(), bn.running_var.clone()),
                };
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
                let mut xhat = u;
                for i in 0..n {
                    for (k, v) in xhat.row_mut(i).iter_mut().enumerate() {
                        *v = (*v - mean[k]) * inv_std[k];
                    }
                }
                let mut v = xhat.clone();
                for i in 0..n {
                    for (k, e) in v.row_mut(i).iter_mut().enumerate() {
                        *e = bn.scale[k] * *e + bn.shift[k];
                    }
                }
                cache.xhat = Some(xhat);
                cache.inv_std = inv_std;
                cache.batch_mean = mean;
                cache.batch_var = var;
                u = v;
            }
            let act = ls.activation;
            let y = if act == Activation::Linear { u } else { u.map(|v| act.apply(v)) };
            cache.output = y.clone();
            h = y;
            caches.push(cache);
        }
        Ok(ForwardCache {
            layers: caches,
            mode: self.mode,
            generation: self.generation,
        })
    }

    /// Convenience forward returning only the output.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x)?.layers.pop().expect("nonempty").output)
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.predict(&Matrix::row_vector(x))?.into_vec())
    }

    /// Folds a training-mode batch's statistics into the running averages.
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        if cache.mode != Mode::Training {
            return;
        }
        let mut touched = false;
        for (layer, lc) in self.layers.iter_mut().zip(&cache.layers) {
            if let Some(bn) = &mut layer.bn {
                for k in 0..bn.running_mean.len() {
                    bn.running_mean[k] =
                        BN_MOMENTUM * bn.running_mean[k] + (1.0 - BN_MOMENTUM) * lc.batch_mean[k];
                    bn.running_var[k] =
                        BN_MOMENTUM * bn.running_var[k] + (1.0 - BN_MOMENTUM) * lc.batch_var[k];
                }
                touched = true;
            }
        }
        if touched {
            self.generation += 1;
        }
    }

    /// Reverse pass. `extra_pre[l]`, when present, is added to the gradient
    /// with respect to layer `l`'s activation input before it is propagated.
    pub fn backward_ext(
        &self,
        cache: &ForwardCache,
        upstream: &Matrix,
        extra_pre: &[Option<Matrix>],
    ) -> Result<(Grads, Matrix)> {
        if cache.generation != self.generation || cache.mode != self.mode {
            return Err(Error::StaleCache);
        }
        let out = cache.output();
        if (upstream.rows(), upstream.cols()) != (out.rows(), out.cols()) {
            return Err(Error::WidthMismatch {
                expected: out.cols(),
                got: upstream.cols(),
            });
        }
        let mut grads = Grads::zeros_like(self);
        let mut dh = upstream.clone();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let lc = &cache.layers[l];
            let act = self.spec.layers[l].activation;
            let mut dv = if act == Activation::Linear {
                dh
            } else {
                dh.zip_map(&lc.output, |g, y| g * act.deriv_from_output(y))
            };
            if let Some(Some(extra)) = extra_pre.get(l) {
                dv.add_assign(extra);
            }
            let n = dv.rows();
            let du = match (&layer.bn, &lc.xhat) {
                (Some(bn), Some(xhat)) => {
                    let g = &mut grads.layers[l];
                    for i in 0..n {
                        for k in 0..bn.scale.len() {
                            g.scale[k] += dv[(i, k)] * xhat[(i, k)];
                            g.shift[k] += dv[(i, k)];
                        }
                    }
                    let mut dxhat = dv;
                    for i in 0..n {
                        for (k, v) in dxhat.row_mut(i).iter_mut().enumerate() {
                            *v *= bn.scale[k];
                        }
                    }
                    match cache.mode {
                        Mode::Inference => {
                            for i in 0..n {
                                for (k, v) in dxhat.row_mut(i).iter_mut().enumerate() {
                                    *v *= lc.inv_std[k];
                                }
                            }
                            dxhat
                        }
                        Mode::Training => {
                            let sum = dxhat.col_sums();
                            let mut sum_x = vec![0.0; sum.len()];
                            for i in 0..n {
                                for k in 0..sum.len() {
                                    sum_x[k] += dxhat[(i, k)] * xhat[(i, k)];
                                }
                            }
                            let nf = n as f64;
                            let mut du = Matrix::zeros(n, sum.len());
                            for i in 0..n {
                                for k in 0..sum.len() {
                                    du[(i, k)] = lc.inv_std[k] / nf
                                        * (nf * dxhat[(i, k)] - sum[k] - xhat[(i, k)] * sum_x[k]);
                                }
                            }
                            du
                        }
                    }
                }
                _ => dv,
            };
            let g = &mut grads.layers[l];
            g.weight = du.t_matmul(&lc.input);
            g.bias = du.col_sums();
            dh = du.matmul(&layer.weight);
        }
        Ok((grads, dh))
    }

    pub fn backward(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<(Grads, Matrix)> {
        self.backward_ext(cache, upstream, &[])
    }

    /// `J[i][j] = ∂out_i/∂in_j` at a single input, one reverse pass per row.
    pub fn input_jacobian(&self, x: &[f64]) -> Result<Matrix> {
        if self.mode == Mode::Training {
            return Err(Error::TrainingModeJacobian);
        }
        let cache = self.forward(&Matrix::row_vector(x))?;
        let out = self.spec.output();
        let mut j = Matrix::zeros(out, self.spec.input);
        for i in 0..out {
            let mut up = Matrix::zeros(1, out);
            up[(0, i)] = 1.0;
            let (_, dx) = self.backward(&cache, &up)?;
            j.row_mut(i).copy_from_slice(dx.row(0));
        }
        Ok(j)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let spec = MlpSpec::tanh_hidden(&[4, 5, 3], false).unwrap();
        let mut net = Mlp::new(spec, &mut rng());
        for s in net.param_slices_mut() {
            s.fill(0.0);
        }
        let y = net.predict_one(&[1.0, -2.0, 3.0, 0.5]).unwrap();
        assert_eq!(y, vec![0.0; 3]);
    }

    #[test]
    fn identity_linear_layer() {
        let spec = MlpSpec::tanh_hidden(&[3, 3], false).unwrap();
        let layers = vec![Layer {
            weight: Matrix::identity(3),
            bias: vec![0.0; 3],
            bn: None,
        }];
        let net = Mlp::from_layers(spec, layers).unwrap();
        let x = [0.3, -1.2, 7.0];
        assert_eq!(net.predict_one(&x).unwrap(), x.to_vec());
        let cache = net.forward(&Matrix::row_vector(&x)).unwrap();
        let up = Matrix::row_vector(&[1.0, 2.0, 3.0]);
        let (_, dx) = net.backward(&cache, &up).unwrap();
        assert_eq!(dx, up);
        assert_eq!(net.input_jacobian(&x).unwrap(), Matrix::identity(3));
    }

    #[test]
    fn tanh_scalar_jacobian_at_zero() {
        let spec = MlpSpec::new(
            1,
            vec![LayerSpec {
                width: 1,
                activation: Activation::Tanh,
                batch_norm: false,
            }],
        )
        .unwrap();
        let layers = vec![Layer {
            weight: Matrix::from_vec(1, 1, vec![0.7]),
            bias: vec![0.0],
            bn: None,
        }];
        let net = Mlp::from_layers(spec, layers).unwrap();
        assert_eq!(net.input_jacobian(&[0.0]).unwrap()[(0, 0)], 0.7);
    }

    #[test]
    fn width_mismatch_and_stale_cache_and_training_jacobian() {
        let spec = MlpSpec::tanh_hidden(&[3, 4, 2], true).unwrap();
        let mut net = Mlp::new(spec, &mut rng());
        assert!(matches!(
            net.forward(&Matrix::zeros(2, 4)),
            Err(Error::WidthMismatch { expected: 3, got: 4 })
        ));
        let cache = net.forward(&Matrix::zeros(2, 3)).unwrap();
        net.param_slices_mut()[0][0] += 1.0;
        assert!(matches!(net.backward(&cache, &Matrix::zeros(2, 2)), Err(Error::StaleCache)));
        net.set_mode(Mode::Training);
        assert!(matches!(net.input_jacobian(&[0.0; 3]), Err(Error::TrainingModeJacobian)));
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let spec = MlpSpec::tanh_hidden(&[3, 4, 2], true).unwrap();
        let mut net = Mlp::new(spec, &mut rng());
        net.set_mode(Mode::Training);
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.0, 2.0], vec![0.5, 0.5, 0.5]]);
        let cache = net.forward(&x).unwrap();
        let (g, dx) = net.backward(&cache, &Matrix::zeros(3, 2)).unwrap();
        assert!(g.slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));
        assert!(dx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inference_is_batch_independent() {
        let spec = MlpSpec::tanh_hidden(&[3, 6, 2], true).unwrap();
        let mut net = Mlp::new(spec, &mut rng());
        net.set_mode(Mode::Training);
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![-1.0, 0.0, 2.0], vec![0.5, 0.1, 0.9]]);
        let c = net.forward(&x).unwrap();
        net.update_running_stats(&c);
        net.set_mode(Mode::Inference);
        let alone = net.predict_one(&[1.0, 2.0, 3.0]).unwrap();
        let batch = net.predict(&x).unwrap();
        assert_eq!(batch.row(0), alone.as_slice());
    }

    #[test]
    fn batch_norm_normalizes_in_training() {
        let spec = MlpSpec::tanh_hidden(&[2, 3, 1], true).unwrap();
        let mut net = Mlp::new(spec, &mut rng());
        if let Some(bn) = &mut net.layers_mut()[0].bn {
            bn.scale = vec![2.0, 0.5, 1.5];
            bn.shift = vec![0.3, -0.2, 0.0];
        }
        net.set_mode(Mode::Training);
        let mut r = rng();
        let x = Matrix::from_vec(64, 2, (0..128).map(|_| r.random_range(-3.0..3.0)).collect());
        let cache = net.forward(&x).unwrap();
        let bn = net.layers()[0].bn.as_ref().unwrap();
        let xhat = cache.layers[0].xhat.as_ref().unwrap();
        for k in 0..3 {
            let v: Vec<f64> = (0..64).map(|i| bn.scale[k] * xhat[(i, k)] + bn.shift[k]).collect();
            let mean = v.iter().sum::<f64>() / 64.0;
            let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 64.0;
            assert!((mean - bn.shift[k]).abs() < 1e-6);
            assert!((var - bn.scale[k].powi(2)).abs() < 1e-6);
        }
    }
}
