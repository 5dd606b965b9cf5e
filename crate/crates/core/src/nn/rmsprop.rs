use super::mlp::{Grads, Mlp};

#[derive(Debug, Clone, PartialEq)]
pub struct RmsProp {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
    acc: Vec<Vec<f64>>,
}

impl RmsProp {
    pub const DEFAULT_LR: f64 = 1e-3;
    pub const DEFAULT_DECAY: f64 = 0.9;
    pub const DEFAULT_EPS: f64 = 1e-8;

    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            decay: Self::DEFAULT_DECAY,
            eps: Self::DEFAULT_EPS,
            acc: Vec::new(),
        }
    }

    pub fn accumulators(&self) -> &[Vec<f64>] {
        &self.acc
    }

    /// One update over matching flat parameter and gradient slices.
    pub fn step_slices(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient group count");
        if self.acc.is_empty() {
            self.acc = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        }
        for ((p, g), acc) in params.into_iter().zip(grads).zip(&mut self.acc) {
            assert_eq!(p.len(), g.len(), "parameter/gradient shape");
            for ((pi, &gi), ai) in p.iter_mut().zip(g).zip(acc.iter_mut()) {
                *ai = self.decay * *ai + (1.0 - self.decay) * gi * gi;
                *pi -= self.lr * gi / (*ai + self.eps).sqrt();
            }
        }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Grads) {
        self.step_slices(net.param_slices_mut(), grads.slices());
    }
}

impl Default for RmsProp {
    fn default() -> Self {
        Self::new(Self::DEFAULT_LR)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut opt = RmsProp::default();
        let mut p = vec![1.0, -2.0];
        opt.step_slices(vec![&mut p], vec![&[0.0, 0.0]]);
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_closed_form() {
        let mut opt = RmsProp::default();
        let g = 0.37;
        let mut p = vec![0.0];
        opt.step_slices(vec![&mut p], vec![&[g]]);
        let expected = -1e-3 * g / (0.1 * g * g + 1e-8_f64).sqrt();
        assert!((p[0] - expected).abs() < 1e-18);
        assert!(opt.accumulators()[0][0] >= 0.0);
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut opt = RmsProp::default();
        let c = [0.4, -0.25, 0.1];
        let mut x = vec![0.0; 3];
        for _ in 0..5000 {
            let g: Vec<f64> = x.iter().zip(&c).map(|(a, b)| 2.0 * (a - b)).collect();
            opt.step_slices(vec![&mut x], vec![&g]);
        }
        let f: f64 = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
        assert!(f <= 1e-6, "{f}");
    }
}
