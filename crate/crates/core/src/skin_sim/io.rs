//! Demo trajectories as CSV: one row per 300 Hz control tick; tactile,
//! contact and pose columns are filled only on 100 Hz sampling ticks.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;

use super::demo::{DemoKind, RawDemo, CONTROL_RATE, TICKS_PER_SAMPLE};
use super::pose::{FingerPose, Twist};
use super::sensing::{ContactState, TactileSample};
use crate::error::{Error, Result};

fn header(e: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=e).map(|i| format!("s_{i}")));
    h.push("p".into());
    h.extend(["contact_x", "contact_y", "contact_z"].map(String::from));
    h.extend((0..9).map(|i| format!("r_{}{}", i / 3, i % 3)));
    h.extend(["t_x", "t_y", "t_z"].map(String::from));
    h.extend(["vb_x", "vb_y", "vb_z", "wb_x", "wb_y", "wb_z"].map(String::from));
    h
}

pub fn write_demo(path: &Path, demo: &RawDemo) -> Result<()> {
    let e = demo.tactile.first().map_or(0, |s| s.s.len());
    let file = File::create(path).map_err(|err| Error::io(path, err))?;
    let mut out = BufWriter::new(file);
    writeln!(
        out,
        "# kind={} region={} seed={} electrodes={e}",
        demo.kind.name(),
        demo.region,
        demo.seed
    )
    .map_err(|err| Error::io(path, err))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(e))?;
    let ticks = demo.twists.len().max((demo.tactile.len() - 1) * TICKS_PER_SAMPLE + 1);
    for k in 0..ticks {
        let mut row: Vec<String> = vec![format!("{:?}", k as f64 / CONTROL_RATE)];
        let sample = (k % TICKS_PER_SAMPLE == 0)
            .then(|| demo.tactile.get(k / TICKS_PER_SAMPLE))
            .flatten();
        match sample {
            Some(s) => {
                row.extend(s.s.iter().map(|v| format!("{v:?}")));
                row.push(format!("{:?}", s.pressure));
                row.extend(s.contact.contact_point.iter().map(|v| format!("{v:?}")));
                row.extend(s.pose.to_array().iter().map(|v| format!("{v:?}")));
            }
            None => row.extend(std::iter::repeat_n(String::new(), e + 1 + 3 + 12)),
        }
        match demo.twists.get(k) {
            Some(tw) => row.extend(tw.to_array().iter().map(|v| format!("{v:?}"))),
            None => row.extend(std::iter::repeat_n(String::new(), 6)),
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|err| Error::io(path, err))?;
    Ok(())
}

fn parse_meta(path: &Path, line: &str) -> Result<(DemoKind, usize, u64, usize)> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| Error::format(path, "missing metadata line"))?;
    let mut kind = None;
    let mut region = None;
    let mut seed = None;
    let mut electrodes = None;
    for tok in body.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::format(path, format!("bad metadata token {tok:?}")))?;
        let bad = |_| Error::format(path, format!("bad metadata value {tok:?}"));
        match k {
            "kind" => kind = Some(v.parse::<DemoKind>()?),
            "region" => region = Some(v.parse::<usize>().map_err(bad)?),
            "seed" => seed = Some(v.parse::<u64>().map_err(bad)?),
            "electrodes" => electrodes = Some(v.parse::<usize>().map_err(bad)?),
            _ => {}
        }
    }
    match (kind, region, seed, electrodes) {
        (Some(k), Some(r), Some(s), Some(e)) => Ok((k, r, s, e)),
        _ => Err(Error::format(path, "incomplete metadata line")),
    }
}

pub fn read_demo(path: &Path) -> Result<RawDemo> {
    let file = File::open(path).map_err(|err| Error::io(path, err))?;
    let mut reader = BufReader::new(file);
    let mut first = String::new();
    reader.read_line(&mut first).map_err(|err| Error::io(path, err))?;
    let (kind, region, seed, e) = parse_meta(path, first.trim())?;
    let mut r = csv::Reader::from_reader(reader);
    let width = header(e).len();
    let mut tactile = Vec::new();
    let mut twists = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::format(path, format!("row {k} has {} columns, expected {width}", rec.len())));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|_| Error::format(path, format!("row {k} column {i}: {:?}", &rec[i])))
        };
        if !rec[1].is_empty() {
            let s = (1..=e).map(num).collect::<Result<Vec<_>>>()?;
            let pressure = num(e + 1)?;
            let c = Vector3::new(num(e + 2)?, num(e + 3)?, num(e + 4)?);
            let pose = FingerPose::from_slice(&(e + 5..e + 17).map(num).collect::<Result<Vec<_>>>()?);
            tactile.push(TactileSample {
                t: num(0)?,
                s,
                pressure,
                contact: ContactState {
                    in_contact: pressure > 0.0,
                    contact_point: c,
                    pressure: pressure.max(0.0),
                },
                pose,
            });
        }
        if !rec[e + 17].is_empty() {
            let v = (e + 17..e + 23).map(num).collect::<Result<Vec<_>>>()?;
            twists.push(Twist::from_slice(&v));
        }
    }
    if tactile.is_empty() {
        return Err(Error::format(path, "no tactile samples"));
    }
    Ok(RawDemo {
        kind,
        region,
        seed,
        tactile,
        twists,
    })
}
