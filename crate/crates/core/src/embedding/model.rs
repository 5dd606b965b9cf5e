use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::checkpoint::{read_mlp, read_str, write_mlp, write_str};
use crate::nn::{Matrix, Mlp, MlpSpec, Mode};

pub const LATENT_DIM: usize = 3;

/// Latent state: MDS map coordinates `(x, y)` and contact-pressure `z_c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentState(pub [f64; 3]);

impl LatentState {
    pub fn xy(&self) -> [f64; 2] {
        [self.0[0], self.0[1]]
    }

    pub fn pressure(&self) -> f64 {
        self.0[2]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub aer: f64,
    pub mds: f64,
    pub cdp: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            aer: 100.0,
            mds: 2e7,
            cdp: 2e7,
        }
    }
}

impl LossWeights {
    /// Reconstruction only: the latent structure terms are switched off.
    pub fn without_structure(self) -> Self {
        Self {
            mds: 0.0,
            cdp: 0.0,
            ..self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub encoder: Mlp,
    pub decoder: Mlp,
    /// Electrode readings are divided by this before encoding.
    pub input_scale: f64,
    /// Network outputs are multiplied by this to give latent coordinates.
    pub latent_scale: f64,
    pub weights: LossWeights,
    /// Settings echo stored with the checkpoint.
    pub config_echo: String,
}

impl Autoencoder {
    pub fn encoder_spec(electrodes: usize) -> MlpSpec {
        MlpSpec::tanh_hidden(&[electrodes, 19, 12, 6, LATENT_DIM], true).expect("valid widths")
    }

    pub fn decoder_spec(electrodes: usize) -> MlpSpec {
        MlpSpec::tanh_hidden(&[LATENT_DIM, 6, 12, 19, electrodes], true).expect("valid widths")
    }

    pub fn new<R: Rng + ?Sized>(
        electrodes: usize,
        input_scale: f64,
        latent_scale: f64,
        weights: LossWeights,
        rng: &mut R,
    ) -> Self {
        Self {
            encoder: Mlp::new(Self::encoder_spec(electrodes), rng),
            decoder: Mlp::new(Self::decoder_spec(electrodes), rng),
            input_scale,
            latent_scale,
            weights,
            config_echo: String::new(),
        }
    }

    pub fn electrodes(&self) -> usize {
        self.encoder.spec().input
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.encoder.set_mode(mode);
        self.decoder.set_mode(mode);
    }

    pub fn scaled(&self, s: &[f64]) -> Vec<f64> {
        s.iter().map(|v| v / self.input_scale).collect()
    }

    pub fn encode(&self, s: &[f64]) -> Result<LatentState> {
        let z = self.encoder.predict_one(&self.scaled(s))?;
        let l = self.latent_scale;
        Ok(LatentState([l * z[0], l * z[1], l * z[2]]))
    }

    pub fn encode_many<'a, I>(&self, rows: I) -> Result<Vec<LatentState>>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let rows: Vec<Vec<f64>> = rows.into_iter().map(|s| self.scaled(s)).collect();
        if rows.is_empty() {
            return Ok(Vec::new());
        }
        let z = self.encoder.predict(&Matrix::from_rows(&rows))?;
        let l = self.latent_scale;
        Ok((0..z.rows())
            .map(|i| LatentState([l * z[(i, 0)], l * z[(i, 1)], l * z[(i, 2)]]))
            .collect())
    }

    pub fn decode(&self, z: &LatentState) -> Result<Vec<f64>> {
        Ok(self
            .decoder
            .predict_one(&z.0.map(|v| v / self.latent_scale))?
            .into_iter()
            .map(|v| v * self.input_scale)
            .collect())
    }

    pub fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(b"TSAE")?;
        w.write_u32::<LE>(1)?;
        w.write_f64::<LE>(self.input_scale)?;
        w.write_f64::<LE>(self.latent_scale)?;
        w.write_f64::<LE>(self.weights.aer)?;
        w.write_f64::<LE>(self.weights.mds)?;
        w.write_f64::<LE>(self.weights.cdp)?;
        write_str(w, &self.config_echo)?;
        write_mlp(w, &self.encoder)?;
        write_mlp(w, &self.decoder)
    }

    pub fn read<R: Read>(r: &mut R) -> std::io::Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        let bad = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string());
        if &magic != b"TSAE" {
            return Err(bad("not an autoencoder checkpoint"));
        }
        if r.read_u32::<LE>()? != 1 {
            return Err(bad("unsupported autoencoder checkpoint version"));
        }
        let input_scale = r.read_f64::<LE>()?;
        let latent_scale = r.read_f64::<LE>()?;
        let weights = LossWeights {
            aer: r.read_f64::<LE>()?,
            mds: r.read_f64::<LE>()?,
            cdp: r.read_f64::<LE>()?,
        };
        let config_echo = read_str(r)?;
        let encoder = read_mlp(r)?;
        let decoder = read_mlp(r)?;
        if encoder.spec().output() != LATENT_DIM || decoder.spec().input != LATENT_DIM {
            return Err(bad("latent width is not 3"));
        }
        Ok(Self {
            encoder,
            decoder,
            input_scale,
            latent_scale,
            weights,
            config_echo,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(&mut std::io::BufReader::new(f)).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// `Σ_k (‖z_a,xy − z_b,xy‖ − g_k)²` over pairs; only the map dimensions count.
pub fn loss_mds(pairs: &[(LatentState, LatentState, f64)]) -> f64 {
    pairs
        .iter()
        .map(|(a, b, g)| {
            let d = (a.0[0] - b.0[0]).hypot(a.0[1] - b.0[1]);
            (d - g) * (d - g)
        })
        .sum()
}

/// `Σ_n (p_n − z_c,n)²`.
pub fn loss_cdp(items: &[(LatentState, f64)]) -> f64 {
    items.iter().map(|(z, p)| (p - z.0[2]) * (p - z.0[2])).sum()
}

/// `Σ_n ‖ŝ_n − s_n‖²`.
pub fn loss_aer(items: &[(&[f64], &[f64])]) -> f64 {
    items
        .iter()
        .map(|(s_hat, s)| s_hat.iter().zip(s.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn z(x: f64, y: f64, c: f64) -> LatentState {
        LatentState([x, y, c])
    }

    #[test]
    fn mds_examples() {
        assert_eq!(loss_mds(&[(z(0.0, 0.0, 0.0), z(3.0, 4.0, 9.0), 5.0)]), 0.0);
        assert_eq!(loss_mds(&[(z(0.0, 0.0, 0.0), z(1.0, 0.0, 0.0), 3.0)]), 4.0);
        let a = loss_mds(&[(z(0.1, 0.2, 0.0), z(0.5, -0.1, 0.0), 0.3)]);
        let b = loss_mds(&[(z(0.1, 0.2, 7.0), z(0.5, -0.1, -3.0), 0.3)]);
        assert_eq!(a, b);
    }

    #[test]
    fn cdp_and_aer_examples() {
        assert_eq!(loss_cdp(&[(z(0.0, 0.0, 0.4), 0.4)]), 0.0);
        assert_eq!(loss_cdp(&[(z(0.0, 0.0, 0.0), 2.0)]), 4.0);
        let s = [1.0, 2.0];
        assert_eq!(loss_aer(&[(&s, &s)]), 0.0);
        assert_eq!(loss_aer(&[(&[1.0, 4.0], &s)]), 4.0);
    }

    #[test]
    fn cdp_minimizer_scales_with_pressure() {
        // For fixed p the quadratic is minimized at z_c = p; scaling p by c
        // moves the minimizer to c·p.
        let p = 0.37;
        let c = 2.5;
        let best = |p: f64| {
            (0..=2000)
                .map(|i| i as f64 * 0.001)
                .min_by(|a, b| loss_cdp(&[(z(0.0, 0.0, *a), p)]).total_cmp(&loss_cdp(&[(z(0.0, 0.0, *b), p)])))
                .unwrap()
        };
        assert!((best(c * p) - c * best(p)).abs() < 2e-3);
    }

    #[test]
    fn untrained_model_is_finite_and_deterministic() {
        let ae = Autoencoder::new(19, 0.02, 0.01, LossWeights::default(), &mut ChaCha8Rng::seed_from_u64(0));
        let s: Vec<f64> = (0..19).map(|i| -0.001 * i as f64).collect();
        let a = ae.encode(&s).unwrap();
        assert!(a.is_finite());
        assert_eq!(a, ae.encode(&s).unwrap());
        assert!(ae.decode(&a).unwrap().iter().all(|v| v.is_finite()));
        assert!(matches!(ae.encode(&[0.0; 5]), Err(Error::WidthMismatch { .. })));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut ae = Autoencoder::new(7, 0.5, 0.2, LossWeights::default(), &mut ChaCha8Rng::seed_from_u64(3));
        ae.config_echo = "ae.iterations = 10".into();
        let mut buf = Vec::new();
        ae.write(&mut buf).unwrap();
        assert_eq!(Autoencoder::read(&mut buf.as_slice()).unwrap(), ae);
    }

    proptest! {
        #[test]
        fn mds_symmetric_and_rigid_invariant(
            pts in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), 2..12),
            angle in -3.2..3.2f64, tx in -2.0..2.0f64, ty in -2.0..2.0f64, flip: bool,
            g in 0.0..2.0f64,
        ) {
            let zs: Vec<LatentState> = pts.iter().map(|&(x, y, c)| z(x, y, c)).collect();
            let pairs: Vec<_> = zs.windows(2).map(|w| (w[0], w[1], g)).collect();
            let swapped: Vec<_> = zs.windows(2).map(|w| (w[1], w[0], g)).collect();
            prop_assert_eq!(loss_mds(&pairs), loss_mds(&swapped));
            let (c, s) = (angle.cos(), angle.sin());
            let moved: Vec<LatentState> = zs.iter().map(|p| {
                let y = if flip { -p.0[1] } else { p.0[1] };
                z(c * p.0[0] - s * y + tx, s * p.0[0] + c * y + ty, p.0[2])
            }).collect();
            let moved_pairs: Vec<_> = moved.windows(2).map(|w| (w[0], w[1], g)).collect();
            prop_assert!((loss_mds(&pairs) - loss_mds(&moved_pairs)).abs() < 1e-9);
        }
    }
}
