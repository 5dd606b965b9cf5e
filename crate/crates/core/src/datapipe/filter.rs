//! Zero-phase second-order Butterworth low-pass (biquad run forward and
//! backward over an odd-reflection padded signal).

use std::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};

/// Shortest signal accepted by [`lowpass`].
pub const MIN_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    /// `a[0]` is 1.
    pub a: [f64; 3],
}

impl Biquad {
    pub fn butterworth_lowpass(fs: f64, fc: f64) -> Result<Self> {
        if !(fc > 0.0 && fc < fs / 2.0) {
            return Err(Error::InvalidArgument(format!(
                "cutoff {fc} Hz must lie in (0, {}) Hz",
                fs / 2.0
            )));
        }
        let k = (PI * fc / fs).tan();
        let norm = 1.0 / (1.0 + SQRT_2 * k + k * k);
        let b0 = k * k * norm;
        Ok(Self {
            b: [b0, 2.0 * b0, b0],
            a: [1.0, 2.0 * (k * k - 1.0) * norm, (1.0 - SQRT_2 * k + k * k) * norm],
        })
    }

    /// Direct form II transposed, started in steady state for `x[0]`.
    fn run(&self, x: &[f64]) -> Vec<f64> {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        let x0 = x[0];
        let mut z1 = (1.0 - b0) * x0;
        let mut z2 = (b2 - a2) * x0;
        x.iter()
            .map(|&v| {
                let y = b0 * v + z1;
                z1 = b1 * v - a1 * y + z2;
                z2 = b2 * v - a2 * y;
                y
            })
            .collect()
    }

    /// Magnitude response at frequency `f`.
    pub fn gain(&self, fs: f64, f: f64) -> f64 {
        let w = 2.0 * PI * f / fs;
        let eval = |c: &[f64; 3]| {
            let re = c[0] + c[1] * w.cos() + c[2] * (2.0 * w).cos();
            let im = -c[1] * w.sin() - c[2] * (2.0 * w).sin();
            re.hypot(im)
        };
        eval(&self.b) / eval(&self.a)
    }
}

/// Zero-phase low-pass of a uniformly sampled signal.
pub fn lowpass(x: &[f64], fs: f64, fc: f64) -> Result<Vec<f64>> {
    if x.len() < MIN_LEN {
        return Err(Error::SignalTooShort {
            len: x.len(),
            min: MIN_LEN,
        });
    }
    let bq = Biquad::butterworth_lowpass(fs, fc)?;
    let n = x.len();
    let pad = ((3.0 * fs / fc).ceil() as usize).max(9).min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
    let mut y = bq.run(&ext);
    y.reverse();
    let mut y = bq.run(&y);
    y.reverse();
    Ok(y[pad..pad + n].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(f: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * f * i as f64 / 100.0).sin()).collect()
    }

    #[test]
    fn constant_passes_unchanged() {
        let y = lowpass(&[3.5; 400], 100.0, 1.0).unwrap();
        assert!(y.iter().all(|v| (v - 3.5).abs() < 1e-9));
    }

    #[test]
    fn ten_hertz_is_attenuated_by_twenty_db() {
        let x = sine(10.0, 2000);
        let y = lowpass(&x, 100.0, 1.0).unwrap();
        let amp = y[500..1500].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(20.0 * amp.log10() <= -20.0, "{amp}");
        // Forward-backward squares the single-pass response.
        let g = Biquad::butterworth_lowpass(100.0, 1.0).unwrap().gain(100.0, 10.0);
        assert!((amp - g * g).abs() < 1e-3);
    }

    #[test]
    fn slow_sinusoid_has_zero_lag() {
        let x = sine(0.1, 3000);
        let y = lowpass(&x, 100.0, 1.0).unwrap();
        let xc = |lag: i64| -> f64 {
            (500..2500)
                .map(|i| x[i] * y[(i as i64 + lag) as usize])
                .sum()
        };
        let best = (-50..=50).max_by(|&a, &b| xc(a).total_cmp(&xc(b))).unwrap();
        assert_eq!(best, 0);
    }

    #[test]
    fn short_signals_are_rejected() {
        assert!(matches!(
            lowpass(&[1.0; 9], 100.0, 1.0),
            Err(Error::SignalTooShort { len: 9, .. })
        ));
        assert!(lowpass(&[1.0; 10], 100.0, 1.0).is_ok());
        assert!(lowpass(&[1.0; 100], 100.0, 60.0).is_err());
    }
}
