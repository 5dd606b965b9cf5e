use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use nalgebra::{Matrix3, Matrix3x6, Vector3, Vector6};
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::checkpoint::{read_f64s, read_mlp, read_str, write_f64s, write_mlp, write_str};
use crate::nn::{JacobianTape, Matrix, Mlp, MlpSpec};

pub const ACTION_DIM: usize = 6;
pub const LL_OUTPUT: usize = 30;

/// Forward-dynamics family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynKind {
    /// `ż = A(z) z + B(z) a + c(z)`
    LocallyLinear,
    /// `ż = h([z; a])`
    NonLinear,
}

/// Inverse-dynamics controller used by the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdKind {
    Ll,
    Ng,
    Nj,
}

impl DynKind {
    pub fn name(self) -> &'static str {
        match self {
            DynKind::LocallyLinear => "ll",
            DynKind::NonLinear => "nl",
        }
    }

    fn code(self) -> u8 {
        match self {
            DynKind::LocallyLinear => 0,
            DynKind::NonLinear => 1,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(DynKind::LocallyLinear),
            1 => Some(DynKind::NonLinear),
            _ => None,
        }
    }

    pub fn spec(self) -> MlpSpec {
        let widths: &[usize] = match self {
            DynKind::LocallyLinear => &[3, 8, 15, 23, LL_OUTPUT],
            DynKind::NonLinear => &[3 + ACTION_DIM, 15, 3],
        };
        MlpSpec::tanh_hidden(widths, false).expect("valid widths")
    }

    /// The controller each family supports by default.
    pub fn default_id(self) -> IdKind {
        match self {
            DynKind::LocallyLinear => IdKind::Ll,
            DynKind::NonLinear => IdKind::Nj,
        }
    }
}

impl IdKind {
    pub fn name(self) -> &'static str {
        match self {
            IdKind::Ll => "ll",
            IdKind::Ng => "ng",
            IdKind::Nj => "nj",
        }
    }

    fn code(self) -> u8 {
        match self {
            IdKind::Ll => 0,
            IdKind::Ng => 1,
            IdKind::Nj => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(IdKind::Ll),
            1 => Some(IdKind::Ng),
            2 => Some(IdKind::Nj),
            _ => None,
        }
    }

    pub fn compatible_with(self, kind: DynKind) -> bool {
        matches!(
            (self, kind),
            (IdKind::Ll, DynKind::LocallyLinear) | (IdKind::Ng | IdKind::Nj, DynKind::NonLinear)
        )
    }
}

impl FromStr for DynKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ll" => Ok(DynKind::LocallyLinear),
            "nl" => Ok(DynKind::NonLinear),
            _ => Err(Error::Config(format!("unknown dynamics variant `{s}` (ll | nl)"))),
        }
    }
}

impl FromStr for IdKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ll" => Ok(IdKind::Ll),
            "ng" => Ok(IdKind::Ng),
            "nj" => Ok(IdKind::Nj),
            _ => Err(Error::Config(format!("unknown inverse-dynamics variant `{s}` (ll | ng | nj)"))),
        }
    }
}

impl fmt::Display for DynKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for IdKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Fixed affine scalings between physical units and network units:
/// `ẑ = (z − μ_z)/σ_z`, `â = a/σ_a`, `ż = σ_ż ⊙ h(·)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalizer {
    pub z_mean: [f64; 3],
    pub z_std: [f64; 3],
    pub a_std: [f64; ACTION_DIM],
    pub zdot_std: [f64; 3],
}

impl Default for Normalizer {
    fn default() -> Self {
        Self {
            z_mean: [0.0; 3],
            z_std: [1.0; 3],
            a_std: [1.0; ACTION_DIM],
            zdot_std: [1.0; 3],
        }
    }
}

fn mean_std<const N: usize>(rows: &[[f64; N]], center: bool) -> ([f64; N], [f64; N]) {
    let n = rows.len().max(1) as f64;
    let mut mean = [0.0; N];
    if center {
        for r in rows {
            for k in 0..N {
                mean[k] += r[k] / n;
            }
        }
    }
    let mut std = [0.0; N];
    for k in 0..N {
        let var = rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / n;
        std[k] = if var > 0.0 && var.is_finite() { var.sqrt() } else { 1.0 };
    }
    (mean, std)
}

impl Normalizer {
    /// Latent mean/std, action RMS and finite-difference latent velocity RMS.
    pub fn fit(z: &[[f64; 3]], a: &[[f64; ACTION_DIM]], zdot: &[[f64; 3]]) -> Self {
        let (z_mean, z_std) = mean_std(z, true);
        let (_, a_std) = mean_std(a, false);
        let (_, zdot_std) = mean_std(zdot, false);
        Self {
            z_mean,
            z_std,
            a_std,
            zdot_std,
        }
    }

    pub fn z_in(&self, z: &Vector3<f64>) -> [f64; 3] {
        std::array::from_fn(|k| (z[k] - self.z_mean[k]) / self.z_std[k])
    }

    pub fn a_in(&self, a: &Vector6<f64>) -> [f64; ACTION_DIM] {
        std::array::from_fn(|k| a[k] / self.a_std[k])
    }

    fn to_vec(self) -> Vec<f64> {
        [&self.z_mean[..], &self.z_std, &self.a_std, &self.zdot_std].concat()
    }

    fn from_vec(v: &[f64]) -> Self {
        Self {
            z_mean: std::array::from_fn(|k| v[k]),
            z_std: std::array::from_fn(|k| v[3 + k]),
            a_std: std::array::from_fn(|k| v[6 + k]),
            zdot_std: std::array::from_fn(|k| v[12 + k]),
        }
    }
}

/// `(A, B, c)` of a locally linear model in physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearParams {
    pub a: Matrix3<f64>,
    pub b: Matrix3x6<f64>,
    pub c: Vector3<f64>,
}

impl LinearParams {
    /// Row-major `A` (9), row-major `B` (18), then `c` (3).
    pub fn pack(&self) -> [f64; LL_OUTPUT] {
        let mut out = [0.0; LL_OUTPUT];
        for i in 0..3 {
            for j in 0..3 {
                out[3 * i + j] = self.a[(i, j)];
            }
            for j in 0..ACTION_DIM {
                out[9 + ACTION_DIM * i + j] = self.b[(i, j)];
            }
            out[27 + i] = self.c[i];
        }
        out
    }

    pub fn unpack(v: &[f64]) -> Self {
        assert_eq!(v.len(), LL_OUTPUT);
        Self {
            a: Matrix3::from_fn(|i, j| v[3 * i + j]),
            b: Matrix3x6::from_fn(|i, j| v[9 + ACTION_DIM * i + j]),
            c: Vector3::from_fn(|i, _| v[27 + i]),
        }
    }

    pub fn zdot(&self, z: &Vector3<f64>, a: &Vector6<f64>) -> Vector3<f64> {
        self.a * z + self.b * a + self.c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsModel {
    pub kind: DynKind,
    pub id: IdKind,
    pub net: Mlp,
    pub norm: Normalizer,
    /// Action-effort weight of the one-step optimal-control controllers.
    pub beta: f64,
    /// Step scale of the gradient controller before magnitude limiting.
    pub ng_alpha: f64,
    pub config_echo: String,
}

impl DynamicsModel {
    pub fn new<R: Rng + ?Sized>(kind: DynKind, id: IdKind, norm: Normalizer, beta: f64, rng: &mut R) -> Result<Self> {
        if !id.compatible_with(kind) {
            return Err(Error::Config(format!(
                "inverse dynamics `{id}` does not apply to forward model `{kind}`"
            )));
        }
        if !(beta > 0.0) {
            return Err(Error::Config(format!("beta must be positive, got {beta}")));
        }
        Ok(Self {
            kind,
            id,
            net: Mlp::new(kind.spec(), rng),
            norm,
            beta,
            ng_alpha: 1.0,
            config_echo: String::new(),
        })
    }

    /// Network input for `(z, a)`; the action part is absent for LL.
    pub fn net_input(&self, z: &Vector3<f64>, a: &Vector6<f64>) -> Vec<f64> {
        let mut x = self.norm.z_in(z).to_vec();
        if self.kind == DynKind::NonLinear {
            x.extend(self.norm.a_in(a));
        }
        x
    }

    /// Maps a locally linear network output to physical `(A, B, c)`.
    pub fn ll_from_output(&self, out: &[f64]) -> LinearParams {
        let n = &self.norm;
        let raw = LinearParams::unpack(out);
        let a = Matrix3::from_fn(|i, j| n.zdot_std[i] * raw.a[(i, j)] / n.z_std[j]);
        let b = Matrix3x6::from_fn(|i, j| n.zdot_std[i] * raw.b[(i, j)] / n.a_std[j]);
        let mu = Vector3::from(n.z_mean);
        let c = Vector3::from_fn(|i, _| n.zdot_std[i] * raw.c[i]) - a * mu;
        LinearParams { a, b, c }
    }

    /// Action metric `W = diag(σ_a²)` and the factor `mean(σ_ż²)` on β, so the
    /// controllers weigh effort in the units the network was trained in.
    pub fn control_metric(&self) -> (Vector6<f64>, f64) {
        let n = &self.norm;
        let w = Vector6::from_fn(|j, _| n.a_std[j] * n.a_std[j]);
        let k = n.zdot_std.iter().map(|s| s * s).sum::<f64>() / 3.0;
        (w, k)
    }

    /// Physical `(A, B, c)` at `z`.
    pub fn ll_params(&self, z: &Vector3<f64>) -> Result<LinearParams> {
        self.expect_kind(DynKind::LocallyLinear)?;
        let out = self.net.predict_one(&self.net_input(z, &Vector6::zeros()))?;
        Ok(self.ll_from_output(&out))
    }

    /// `(J_z, J_a)` of the non-linear latent velocity at `(z, a)`, physical units.
    pub fn nl_jacobians(&self, z: &Vector3<f64>, a: &Vector6<f64>) -> Result<(Matrix3<f64>, Matrix3x6<f64>)> {
        self.expect_kind(DynKind::NonLinear)?;
        let tape = JacobianTape::record(&self.net, &self.net_input(z, a))?;
        Ok(self.physical_jacobians(tape.jacobian()))
    }

    pub(crate) fn physical_jacobians(&self, j: &Matrix) -> (Matrix3<f64>, Matrix3x6<f64>) {
        let n = &self.norm;
        let jz = Matrix3::from_fn(|i, k| n.zdot_std[i] * j[(i, k)] / n.z_std[k]);
        let ja = Matrix3x6::from_fn(|i, k| n.zdot_std[i] * j[(i, 3 + k)] / n.a_std[k]);
        (jz, ja)
    }

    /// Latent velocity `ż`.
    pub fn lfd(&self, z: &Vector3<f64>, a: &Vector6<f64>) -> Result<Vector3<f64>> {
        match self.kind {
            DynKind::LocallyLinear => Ok(self.ll_params(z)?.zdot(z, a)),
            DynKind::NonLinear => {
                let out = self.net.predict_one(&self.net_input(z, a))?;
                Ok(Vector3::from_fn(|i, _| self.norm.zdot_std[i] * out[i]))
            }
        }
    }

    /// One explicit Euler step.
    pub fn integrate(&self, z: &Vector3<f64>, a: &Vector6<f64>, dt: f64) -> Result<Vector3<f64>> {
        Ok(z + self.lfd(z, a)? * dt)
    }

    /// `z_2 .. z_{C+1}` from `z_1` under `actions`.
    pub fn chain_predict(&self, z1: &Vector3<f64>, actions: &[Vector6<f64>], dt: f64) -> Result<Vec<Vector3<f64>>> {
        let mut z = *z1;
        actions
            .iter()
            .map(|a| {
                z = self.integrate(&z, a, dt)?;
                Ok(z)
            })
            .collect()
    }

    fn expect_kind(&self, kind: DynKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "operation needs a `{kind}` model, this one is `{}`",
                self.kind
            )))
        }
    }

    pub fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(b"TSDY")?;
        w.write_u32::<LE>(1)?;
        w.write_u8(self.kind.code())?;
        w.write_u8(self.id.code())?;
        w.write_f64::<LE>(self.beta)?;
        w.write_f64::<LE>(self.ng_alpha)?;
        write_f64s(w, &self.norm.to_vec())?;
        write_str(w, &self.config_echo)?;
        write_mlp(w, &self.net)
    }

    pub fn read<R: Read>(r: &mut R) -> std::io::Result<Self> {
        let bad = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"TSDY" {
            return Err(bad("not a dynamics checkpoint"));
        }
        if r.read_u32::<LE>()? != 1 {
            return Err(bad("unsupported dynamics checkpoint version"));
        }
        let kind = DynKind::from_code(r.read_u8()?).ok_or_else(|| bad("unknown dynamics variant"))?;
        let id = IdKind::from_code(r.read_u8()?).ok_or_else(|| bad("unknown inverse-dynamics variant"))?;
        let beta = r.read_f64::<LE>()?;
        let ng_alpha = r.read_f64::<LE>()?;
        let norm = Normalizer::from_vec(&read_f64s(r, 15)?);
        let config_echo = read_str(r)?;
        let net = read_mlp(r)?;
        if net.spec().widths() != kind.spec().widths() || !id.compatible_with(kind) {
            return Err(bad("network layout does not match the dynamics variant"));
        }
        Ok(Self {
            kind,
            id,
            net,
            norm,
            beta,
            ng_alpha,
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

pub fn action_vector(a: &[f64; ACTION_DIM]) -> Vector6<f64> {
    Vector6::from_column_slice(a)
}

pub fn latent_vector(z: &[f64; 3]) -> Vector3<f64> {
    Vector3::from_column_slice(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zero_last_layer(m: &mut DynamicsModel) {
        let last = m.net.layers_mut().last_mut().unwrap();
        last.weight = Matrix::zeros(last.weight.rows(), last.weight.cols());
        last.bias.iter_mut().for_each(|b| *b = 0.0);
    }

    fn random_norm(rng: &mut ChaCha8Rng) -> Normalizer {
        Normalizer {
            z_mean: std::array::from_fn(|_| rng.random_range(-0.01..0.01)),
            z_std: std::array::from_fn(|_| rng.random_range(0.002..0.02)),
            a_std: std::array::from_fn(|_| rng.random_range(0.001..0.2)),
            zdot_std: std::array::from_fn(|_| rng.random_range(0.001..0.05)),
        }
    }

    fn model(kind: DynKind, seed: u64) -> DynamicsModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let norm = random_norm(&mut rng);
        DynamicsModel::new(kind, kind.default_id(), norm, 0.1, &mut rng).unwrap()
    }

    fn rv3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
        Vector3::from_fn(|_, _| rng.random_range(-0.02..0.02))
    }

    fn rv6(rng: &mut ChaCha8Rng) -> Vector6<f64> {
        Vector6::from_fn(|_, _| rng.random_range(-0.2..0.2))
    }

    #[test]
    fn zero_output_network_means_zero_velocity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = model(DynKind::LocallyLinear, 1);
        m.norm.z_mean = [0.0; 3];
        zero_last_layer(&mut m);
        let (z, a) = (rv3(&mut rng), rv6(&mut rng));
        assert_eq!(m.lfd(&z, &a).unwrap(), Vector3::zeros());
        assert_eq!(m.integrate(&z, &a, 0.31).unwrap(), z);
        let chain = m.chain_predict(&z, &[a, a, a], 0.31).unwrap();
        assert!(chain.iter().all(|c| *c == z));
    }

    #[test]
    fn ll_velocity_is_affine_in_action() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = model(DynKind::LocallyLinear, 2);
        for _ in 0..50 {
            let z = rv3(&mut rng);
            let (a1, a2) = (rv6(&mut rng), rv6(&mut rng));
            let f = |a: &Vector6<f64>| m.lfd(&z, a).unwrap();
            let lhs = f(&(a1 + a2)) - f(&a2);
            let rhs = f(&a1) - f(&Vector6::zeros());
            assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + lhs.norm()));
        }
    }

    #[test]
    fn integrate_with_fixed_b_only() {
        let mut m = model(DynKind::LocallyLinear, 3);
        zero_last_layer(&mut m);
        m.norm = Normalizer::default();
        let last = m.net.layers_mut().last_mut().unwrap();
        for i in 0..3 {
            last.bias[9 + ACTION_DIM * i + i] = 1.0;
        }
        let z = Vector3::new(0.1, 0.2, 0.3);
        let a = Vector6::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0);
        let next = m.integrate(&z, &a, 0.5).unwrap();
        assert!((next - z - Vector3::new(0.5, 1.0, 1.5)).norm() < 1e-15);
    }

    #[test]
    fn chain_of_one_is_integrate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for kind in [DynKind::LocallyLinear, DynKind::NonLinear] {
            let m = model(kind, 4);
            let (z, a) = (rv3(&mut rng), rv6(&mut rng));
            assert_eq!(m.chain_predict(&z, &[a], 0.3).unwrap()[0], m.integrate(&z, &a, 0.3).unwrap());
        }
    }

    #[test]
    fn nl_jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = model(DynKind::NonLinear, 5);
        let (z, a) = (rv3(&mut rng), rv6(&mut rng));
        let (jz, ja) = m.nl_jacobians(&z, &a).unwrap();
        for k in 0..3 {
            let h = 1e-6 * m.norm.z_std[k];
            let mut zp = z;
            let mut zm = z;
            zp[k] += h;
            zm[k] -= h;
            let col = (m.lfd(&zp, &a).unwrap() - m.lfd(&zm, &a).unwrap()) / (2.0 * h);
            assert!((col - jz.column(k)).norm() <= 1e-6 * (1.0 + col.norm()));
        }
        for k in 0..ACTION_DIM {
            let h = 1e-6 * m.norm.a_std[k];
            let mut ap = a;
            let mut am = a;
            ap[k] += h;
            am[k] -= h;
            let col = (m.lfd(&z, &ap).unwrap() - m.lfd(&z, &am).unwrap()) / (2.0 * h);
            assert!((col - ja.column(k)).norm() <= 1e-6 * (1.0 + col.norm()));
        }
    }

    #[test]
    fn variant_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert!(DynamicsModel::new(DynKind::LocallyLinear, IdKind::Nj, Normalizer::default(), 0.1, &mut rng).is_err());
        assert!(DynamicsModel::new(DynKind::NonLinear, IdKind::Ll, Normalizer::default(), 0.1, &mut rng).is_err());
        assert!(DynamicsModel::new(DynKind::NonLinear, IdKind::Ng, Normalizer::default(), 0.0, &mut rng).is_err());
        let m = model(DynKind::NonLinear, 6);
        assert!(m.ll_params(&Vector3::zeros()).is_err());
        assert!("xx".parse::<IdKind>().is_err());
        assert_eq!("NJ".parse::<IdKind>().unwrap(), IdKind::Nj);
    }

    #[test]
    fn checkpoint_round_trip() {
        for kind in [DynKind::LocallyLinear, DynKind::NonLinear] {
            let mut m = model(kind, 7);
            m.config_echo = "dyn.beta = 0.1\n".into();
            let mut buf = Vec::new();
            m.write(&mut buf).unwrap();
            assert_eq!(DynamicsModel::read(&mut buf.as_slice()).unwrap(), m);
            buf[4] = 9;
            assert!(DynamicsModel::read(&mut buf.as_slice()).is_err());
        }
    }

    #[test]
    fn normalizer_fit_statistics() {
        let z = [[1.0, 2.0, 3.0], [3.0, 2.0, 5.0]];
        let a = [[1.0, -1.0, 0.0, 0.0, 2.0, 0.0]; 2];
        let zd = [[0.5, 0.0, -0.5], [-0.5, 0.0, 0.5]];
        let n = Normalizer::fit(&z, &a, &zd);
        assert_eq!(n.z_mean, [2.0, 2.0, 4.0]);
        assert_eq!(n.z_std, [1.0, 1.0, 1.0]);
        assert_eq!(n.a_std, [1.0, 1.0, 1.0, 1.0, 2.0, 1.0]);
        assert_eq!(n.zdot_std, [0.5, 1.0, 0.5]);
    }

    proptest! {
        #[test]
        fn pack_unpack_identity(v in prop::collection::vec(-10.0..10.0f64, LL_OUTPUT)) {
            let p = LinearParams::unpack(&v);
            prop_assert_eq!(p.pack().to_vec(), v.clone());
            prop_assert_eq!(LinearParams::unpack(&p.pack()), p);
        }
    }
}
