//! Binary container for geodesic bins. Layout (little-endian): magic
//! `GBIN`, version u32, bin count u64; then per bin: N′ u64, M u64, seed u64,
//! N′ indices u64, strictly-lower-triangular entries f64 row by row.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::bins::GeodesicBin;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"GBIN";
const VERSION: u32 = 1;

pub fn write_bins<W: Write>(mut w: W, bins: &[GeodesicBin]) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    w.write_u64::<LE>(bins.len() as u64)?;
    for b in bins {
        let n = b.len();
        w.write_u64::<LE>(n as u64)?;
        w.write_u64::<LE>(b.m as u64)?;
        w.write_u64::<LE>(b.seed)?;
        for &i in &b.indices {
            w.write_u64::<LE>(i as u64)?;
        }
        for i in 1..n {
            for j in 0..i {
                w.write_f64::<LE>(b.get(i, j))?;
            }
        }
    }
    Ok(())
}

pub fn read_bins<R: Read>(mut r: R) -> std::result::Result<Vec<GeodesicBin>, String> {
    let io = |e: std::io::Error| e.to_string();
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err("bad magic".into());
    }
    let version = r.read_u32::<LE>().map_err(io)?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let count = r.read_u64::<LE>().map_err(io)? as usize;
    let mut bins = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let n = r.read_u64::<LE>().map_err(io)? as usize;
        let m = r.read_u64::<LE>().map_err(io)? as usize;
        let seed = r.read_u64::<LE>().map_err(io)?;
        let indices = (0..n)
            .map(|_| r.read_u64::<LE>().map(|v| v as usize))
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(io)?;
        let mut matrix = vec![0.0; n * n];
        for i in 1..n {
            for j in 0..i {
                let v = r.read_f64::<LE>().map_err(io)?;
                matrix[i * n + j] = v;
                matrix[j * n + i] = v;
            }
        }
        bins.push(GeodesicBin {
            indices,
            matrix,
            m,
            seed,
        });
    }
    Ok(bins)
}

pub fn save_bins(path: &Path, bins: &[GeodesicBin]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_bins(&mut w, bins).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_bins(path: &Path) -> Result<Vec<GeodesicBin>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_bins(BufReader::new(f)).map_err(|reason| Error::format(path, reason))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesy::bin_split;
    use nalgebra::Vector3;

    #[test]
    fn round_trip_is_bitwise() {
        let pts: Vec<_> = (0..30)
            .map(|i| Vector3::new((i as f64).sin(), (i as f64 * 0.7).cos(), i as f64 * 0.01))
            .collect();
        let bins = bin_split(&pts, 12, 4, 3).unwrap();
        let mut buf = Vec::new();
        write_bins(&mut buf, &bins).unwrap();
        assert_eq!(read_bins(buf.as_slice()).unwrap(), bins);
        assert!(read_bins(&buf[..buf.len() - 3]).is_err());
        assert!(read_bins(&b"XXXX"[..]).is_err());
    }
}
