//! Dataset directory: `ae_samples.csv`, `tuples.csv`, `chains.csv`,
//! `split.csv` and a `manifest.kv` of the settings that produced them.

use std::path::Path;

use super::dataset::{AeSample, Dataset, Split, TestChain, TransitionTuple};
use crate::config::KvConfig;
use crate::error::{Error, Result};

fn fmt(v: f64) -> String {
    format!("{v:?}")
}

fn cols(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}{i}"))
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(Error::from)
}

fn flush(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn save_dataset(dir: &Path, ds: &Dataset, manifest: &KvConfig) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let e = ds.electrodes;

    let path = dir.join("ae_samples.csv");
    let mut w = writer(&path)?;
    let mut h: Vec<String> = ["demo", "p", "contact_x", "contact_y", "contact_z"].map(String::from).to_vec();
    h.extend(cols("s_", e));
    w.write_record(&h)?;
    for a in &ds.ae {
        let mut row = vec![a.demo.to_string(), fmt(a.pressure)];
        row.extend(a.contact.iter().map(|&v| fmt(v)));
        row.extend(a.s.iter().map(|&v| fmt(v)));
        w.write_record(&row)?;
    }
    flush(w, &path)?;

    let path = dir.join("tuples.csv");
    let mut w = writer(&path)?;
    let mut h = vec!["dt".to_string()];
    h.extend(cols("sprev_", e));
    h.extend(cols("aprev_", 6));
    h.extend(cols("s_", e));
    h.extend(cols("a_", 6));
    h.extend(cols("snext_", e));
    w.write_record(&h)?;
    for t in &ds.tuples {
        let mut row = vec![fmt(t.dt)];
        for part in [&t.s_prev[..], &t.a_prev[..], &t.s[..], &t.a[..], &t.s_next[..]] {
            row.extend(part.iter().map(|&v| fmt(v)));
        }
        w.write_record(&row)?;
    }
    flush(w, &path)?;

    let path = dir.join("chains.csv");
    let mut w = writer(&path)?;
    let c = ds.chains.first().map_or(0, |c| c.actions.len());
    let mut h = vec!["dt".to_string()];
    for k in 0..=c {
        h.extend(cols(&format!("state{k}_"), e).collect::<Vec<_>>());
    }
    for k in 0..c {
        h.extend(cols(&format!("action{k}_"), 6).collect::<Vec<_>>());
    }
    w.write_record(&h)?;
    for ch in &ds.chains {
        let mut row = vec![fmt(ch.dt)];
        for s in &ch.states {
            row.extend(s.iter().map(|&v| fmt(v)));
        }
        for a in &ch.actions {
            row.extend(a.iter().map(|&v| fmt(v)));
        }
        w.write_record(&row)?;
    }
    flush(w, &path)?;

    let path = dir.join("split.csv");
    let mut w = writer(&path)?;
    w.write_record(["set", "index", "split"])?;
    for (set, splits) in [("ae", &ds.ae_split), ("tuple", &ds.tuple_split), ("chain", &ds.chain_split)] {
        for (i, s) in splits.iter().enumerate() {
            w.write_record([set, &i.to_string(), s.name()])?;
        }
    }
    flush(w, &path)?;

    let mut m = manifest.clone();
    m.set("electrodes", e);
    m.set("threshold", fmt(ds.threshold));
    m.set("chain_len", c);
    m.set("ae_samples", ds.ae.len());
    m.set("tuples", ds.tuples.len());
    m.set("chains", ds.chains.len());
    m.save(&dir.join("manifest.kv"))
}

fn read_rows(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    r.records().map(|x| x.map_err(Error::from)).collect()
}

fn nums(path: &Path, rec: &csv::StringRecord, range: std::ops::Range<usize>) -> Result<Vec<f64>> {
    range
        .map(|i| {
            rec.get(i)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::format(path, format!("bad or missing column {i}")))
        })
        .collect()
}

fn arr6(v: Vec<f64>) -> [f64; 6] {
    [v[0], v[1], v[2], v[3], v[4], v[5]]
}

pub fn load_dataset(dir: &Path) -> Result<(Dataset, KvConfig)> {
    let manifest = KvConfig::load(&dir.join("manifest.kv"))?;
    let e: usize = manifest.get_or("electrodes", 0)?;
    let c: usize = manifest.get_or("chain_len", 0)?;
    let threshold: f64 = manifest.get_or("threshold", 0.0)?;
    if e == 0 {
        return Err(Error::format(dir.join("manifest.kv"), "missing electrode count"));
    }

    let path = dir.join("ae_samples.csv");
    let ae = read_rows(&path)?
        .iter()
        .map(|r| {
            let head = nums(&path, r, 1..5)?;
            Ok(AeSample {
                demo: r[0].parse().map_err(|_| Error::format(&path, "bad demo index"))?,
                pressure: head[0],
                contact: [head[1], head[2], head[3]],
                s: nums(&path, r, 5..5 + e)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let path = dir.join("tuples.csv");
    let tuples = read_rows(&path)?
        .iter()
        .map(|r| {
            let mut o = 1;
            let mut take = |n: usize| {
                let v = nums(&path, r, o..o + n);
                o += n;
                v
            };
            Ok(TransitionTuple {
                s_prev: take(e)?,
                a_prev: arr6(take(6)?),
                s: take(e)?,
                a: arr6(take(6)?),
                s_next: take(e)?,
                dt: nums(&path, r, 0..1)?[0],
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let path = dir.join("chains.csv");
    let chains = read_rows(&path)?
        .iter()
        .map(|r| {
            let states = (0..=c)
                .map(|k| nums(&path, r, 1 + k * e..1 + (k + 1) * e))
                .collect::<Result<Vec<_>>>()?;
            let base = 1 + (c + 1) * e;
            let actions = (0..c)
                .map(|k| nums(&path, r, base + 6 * k..base + 6 * (k + 1)).map(arr6))
                .collect::<Result<Vec<_>>>()?;
            Ok(TestChain {
                states,
                actions,
                dt: nums(&path, r, 0..1)?[0],
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let path = dir.join("split.csv");
    let mut ae_split = vec![Split::Train; ae.len()];
    let mut tuple_split = vec![Split::Train; tuples.len()];
    let mut chain_split = vec![Split::Train; chains.len()];
    for r in read_rows(&path)? {
        let i: usize = r[1].parse().map_err(|_| Error::format(&path, "bad index"))?;
        let s: Split = r[2].parse()?;
        let target = match &r[0] {
            "ae" => &mut ae_split,
            "tuple" => &mut tuple_split,
            "chain" => &mut chain_split,
            other => return Err(Error::format(&path, format!("unknown set {other:?}"))),
        };
        *target
            .get_mut(i)
            .ok_or_else(|| Error::format(&path, format!("index {i} out of range")))? = s;
    }
    Ok((
        Dataset {
            electrodes: e,
            threshold,
            ae,
            ae_split,
            tuples,
            tuple_split,
            chains,
            chain_split,
        },
        manifest,
    ))
}
