//! Versioned little-endian binary encoding of networks.
//!
//! Network record: magic `MLPN`, version u32, input width u64, layer count
//! u64, per layer (width u64, activation u8, batch-norm u8); then every
//! trainable tensor in declaration order; then running mean and variance of
//! each batch-norm layer.

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::matrix::Matrix;
use super::mlp::{Activation, BatchNorm, Layer, LayerSpec, Mlp, MlpSpec};

const MAGIC: &[u8; 4] = b"MLPN";
const VERSION: u32 = 1;

type IoResult<T> = std::io::Result<T>;

fn invalid(msg: impl Into<String>) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, msg.into())
}

pub fn write_f64s<W: Write>(w: &mut W, v: &[f64]) -> IoResult<()> {
    v.iter().try_for_each(|&x| w.write_f64::<LE>(x))
}

pub fn read_f64s<R: Read>(r: &mut R, n: usize) -> IoResult<Vec<f64>> {
    (0..n).map(|_| r.read_f64::<LE>()).collect()
}

pub fn write_str<W: Write>(w: &mut W, s: &str) -> IoResult<()> {
    w.write_u64::<LE>(s.len() as u64)?;
    w.write_all(s.as_bytes())
}

pub fn read_str<R: Read>(r: &mut R) -> IoResult<String> {
    let n = r.read_u64::<LE>()? as usize;
    if n > 1 << 24 {
        return Err(invalid("string too long"));
    }
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| invalid("string is not utf-8"))
}

pub fn write_mlp<W: Write>(w: &mut W, net: &Mlp) -> IoResult<()> {
    let spec = net.spec();
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    w.write_u64::<LE>(spec.input as u64)?;
    w.write_u64::<LE>(spec.layers.len() as u64)?;
    for l in &spec.layers {
        w.write_u64::<LE>(l.width as u64)?;
        w.write_u8(l.activation.code())?;
        w.write_u8(u8::from(l.batch_norm))?;
    }
    for s in net.param_slices() {
        write_f64s(w, s)?;
    }
    for l in net.layers() {
        if let Some(bn) = &l.bn {
            write_f64s(w, &bn.running_mean)?;
            write_f64s(w, &bn.running_var)?;
        }
    }
    Ok(())
}

pub fn read_mlp<R: Read>(r: &mut R) -> IoResult<Mlp> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(invalid("not a network record"));
    }
    let version = r.read_u32::<LE>()?;
    if version != VERSION {
        return Err(invalid(format!("unsupported network version {version}")));
    }
    let input = r.read_u64::<LE>()? as usize;
    let count = r.read_u64::<LE>()? as usize;
    if count > 1024 || input > 1 << 20 {
        return Err(invalid("implausible network header"));
    }
    let mut specs = Vec::with_capacity(count);
    for _ in 0..count {
        let width = r.read_u64::<LE>()? as usize;
        let activation =
            Activation::from_code(r.read_u8()?).ok_or_else(|| invalid("unknown activation"))?;
        let batch_norm = match r.read_u8()? {
            0 => false,
            1 => true,
            _ => return Err(invalid("bad batch-norm flag")),
        };
        if width > 1 << 20 {
            return Err(invalid("implausible layer width"));
        }
        specs.push(LayerSpec {
            width,
            activation,
            batch_norm,
        });
    }
    let spec = MlpSpec::new(input, specs).map_err(|e| invalid(e.to_string()))?;
    let mut layers = Vec::with_capacity(count);
    let mut fan_in = input;
    for ls in &spec.layers {
        let weight = Matrix::from_vec(ls.width, fan_in, read_f64s(r, ls.width * fan_in)?);
        let bias = read_f64s(r, ls.width)?;
        let bn = if ls.batch_norm {
            Some(BatchNorm {
                scale: read_f64s(r, ls.width)?,
                shift: read_f64s(r, ls.width)?,
                running_mean: Vec::new(),
                running_var: Vec::new(),
            })
        } else {
            None
        };
        layers.push(Layer { weight, bias, bn });
        fan_in = ls.width;
    }
    for l in &mut layers {
        if let Some(bn) = &mut l.bn {
            bn.running_mean = read_f64s(r, bn.scale.len())?;
            bn.running_var = read_f64s(r, bn.scale.len())?;
        }
    }
    Mlp::from_layers(spec, layers).map_err(|e| invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::Mode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_preserves_outputs_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Mlp::new(MlpSpec::tanh_hidden(&[5, 4, 3, 2], true).unwrap(), &mut rng);
        net.set_mode(Mode::Training);
        let x = Matrix::from_rows(&[vec![1.0, 0.0, 2.0, -1.0, 0.5], vec![0.3, 0.2, -0.1, 0.0, 1.0]]);
        let c = net.forward(&x).unwrap();
        net.update_running_stats(&c);
        net.set_mode(Mode::Inference);
        let mut buf = Vec::new();
        write_mlp(&mut buf, &net).unwrap();
        let back = read_mlp(&mut buf.as_slice()).unwrap();
        assert_eq!(back.layers(), net.layers());
        assert_eq!(back.predict(&x).unwrap(), net.predict(&x).unwrap());
        assert!(read_mlp(&mut &buf[..buf.len() - 1]).is_err());
    }
}
