//! CSV reports and the SVG plots drawn from them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use plotters::prelude::*;

use super::acceptance::Criterion;
use super::id::IdRow;
use super::repro::{EmbeddingPoint, EvalRecord, FdRow, ReproOutcome, SeedOutcome, ServoOutcome};
use super::servo::ServoLog;
use crate::dynamics::DynTrace;
use crate::embedding::AeTrace;
use crate::error::{Error, Result};

const PALETTE: [RGBColor; 10] = [
    RGBColor(31, 119, 180),
    RGBColor(255, 127, 14),
    RGBColor(44, 160, 44),
    RGBColor(214, 39, 40),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
    RGBColor(227, 119, 194),
    RGBColor(127, 127, 127),
    RGBColor(188, 189, 34),
    RGBColor(23, 190, 207),
];

fn color(i: usize) -> RGBColor {
    PALETTE[i % PALETTE.len()]
}

fn plot_err<E: std::fmt::Debug>(path: &Path) -> impl Fn(E) -> Error + '_ {
    move |e| Error::format(path, format!("plotting failed: {e:?}"))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(Error::from)
}

fn finish(mut w: csv::Writer<std::fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-12);
    (lo - pad, hi + pad)
}

pub type Series = (String, Vec<(f64, f64)>);

pub fn line_plot(path: &Path, title: &str, x_desc: &str, y_desc: &str, series: &[Series]) -> Result<()> {
    let err = plot_err(path);
    let (x0, x1) = range(series.iter().flat_map(|s| s.1.iter().map(|p| p.0)));
    let (y0, y1) = range(series.iter().flat_map(|s| s.1.iter().map(|p| p.1)));
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(&err)?;
    chart.configure_mesh().x_desc(x_desc).y_desc(y_desc).draw().map_err(&err)?;
    let legend = series.len() <= 12;
    for (i, (name, pts)) in series.iter().enumerate() {
        let c = color(i);
        let drawn = chart.draw_series(LineSeries::new(pts.iter().copied(), c.stroke_width(2))).map_err(&err)?;
        if legend {
            drawn
                .label(name.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], c.stroke_width(2)));
        }
    }
    if legend {
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.8))
            .border_style(BLACK)
            .draw()
            .map_err(&err)?;
    }
    root.present().map_err(&err)
}

/// Grouped bars: one group per category, one bar per series.
pub fn bar_plot(path: &Path, title: &str, y_desc: &str, categories: &[String], series: &[(String, Vec<f64>)]) -> Result<()> {
    let err = plot_err(path);
    let y1 = series.iter().flat_map(|s| s.1.iter().copied()).fold(0.0f64, f64::max).max(1e-12) * 1.1;
    let n = categories.len();
    let slot = categories.iter().map(|c| c.len()).max().unwrap_or(0) as u32 * 7 + 24;
    let root = SVGBackend::new(path, (160 + slot.max(80) * n.max(4) as u32, 520)).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let cats = categories.to_vec();
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(0f64..n as f64, 0f64..y1)
        .map_err(&err)?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(n.max(1) * 2 + 1)
        .x_label_formatter(&|x| {
            let k = x - 0.5;
            if k >= 0.0 && (k - k.round()).abs() < 1e-9 {
                cats.get(k.round() as usize).cloned().unwrap_or_default()
            } else {
                String::new()
            }
        })
        .y_desc(y_desc)
        .draw()
        .map_err(&err)?;
    let m = series.len().max(1) as f64;
    for (j, (name, vals)) in series.iter().enumerate() {
        let c = color(j);
        let w = 0.8 / m;
        chart
            .draw_series(vals.iter().enumerate().map(|(i, &v)| {
                let x = i as f64 + 0.1 + w * j as f64;
                Rectangle::new([(x, 0.0), (x + w, v)], c.filled())
            }))
            .map_err(&err)?
            .label(name.as_str())
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 12, y + 5)], c.filled()));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(&err)?;
    root.present().map_err(&err)
}

pub fn scatter_plot(path: &Path, title: &str, points: &[(f64, f64, usize)]) -> Result<()> {
    let err = plot_err(path);
    let (x0, x1) = range(points.iter().map(|p| p.0));
    let (y0, y1) = range(points.iter().map(|p| p.1));
    let root = SVGBackend::new(path, (640, 640)).into_drawing_area();
    root.fill(&WHITE).map_err(&err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(&err)?;
    chart.configure_mesh().x_desc("x (m)").y_desc("y (m)").draw().map_err(&err)?;
    let hue = |k: usize| HSLColor((k as f64 * 0.618_033_988_75).fract(), 0.7, 0.45);
    chart
        .draw_series(points.iter().map(|&(x, y, k)| Circle::new((x, y), 2, hue(k).filled())))
        .map_err(&err)?;
    root.present().map_err(&err)
}

fn svg_of(csv: &Path) -> PathBuf {
    csv.with_extension("svg")
}

pub fn write_eval_ae(path: &Path, rows: &[(u64, EvalRecord)]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["seed", "metric", "split", "variant", "value"])?;
    for (seed, r) in rows {
        w.write_record([seed.to_string(), r.metric.clone(), r.split.clone(), r.variant.clone(), r.value.to_string()])?;
    }
    finish(w, path)?;
    let mut groups: BTreeMap<(String, String), BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    for (_, r) in rows {
        groups
            .entry((r.metric.clone(), r.split.clone()))
            .or_default()
            .entry(r.variant.clone())
            .or_default()
            .push(r.value);
    }
    let categories: Vec<String> = groups.keys().map(|(m, s)| format!("{m} {s}")).collect();
    let variants: Vec<String> = {
        let mut v: Vec<String> = rows.iter().map(|(_, r)| r.variant.clone()).collect();
        v.sort();
        v.dedup();
        v
    };
    let series: Vec<(String, Vec<f64>)> = variants
        .iter()
        .map(|v| {
            let vals = groups.values().map(|g| g.get(v).map_or(0.0, |x| mean(x))).collect();
            (v.clone(), vals)
        })
        .collect();
    bar_plot(&svg_of(path), "Autoencoder evaluation (mean over seeds)", "NMSE", &categories, &series)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Seed-averaged rows keyed by everything but the value.
fn averaged<K: Ord + Clone>(items: impl Iterator<Item = (K, f64)>) -> Vec<(K, f64)> {
    let mut m: BTreeMap<K, Vec<f64>> = BTreeMap::new();
    for (k, v) in items {
        m.entry(k).or_default().push(v);
    }
    m.into_iter().map(|(k, v)| (k, mean(&v))).collect()
}

/// `eval_fd.csv` holds the seed means; the per-seed rows go next to it.
pub fn write_eval_fd(path: &Path, rows: &[(u64, FdRow)]) -> Result<()> {
    let by_seed = path.with_file_name("eval_fd_seeds.csv");
    let mut w = csv_writer(&by_seed)?;
    w.write_record(["seed", "variant", "chain_step", "nmse"])?;
    for (seed, r) in rows {
        w.write_record([seed.to_string(), r.variant.clone(), r.chain_step.to_string(), r.nmse.to_string()])?;
    }
    finish(w, &by_seed)?;
    let avg = averaged(rows.iter().map(|(_, r)| ((r.variant.clone(), r.chain_step), r.nmse)));
    let mut w = csv_writer(path)?;
    w.write_record(["variant", "chain_step", "nmse"])?;
    for ((variant, step), v) in &avg {
        w.write_record([variant.clone(), step.to_string(), v.to_string()])?;
    }
    finish(w, path)?;
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for ((variant, step), v) in avg {
        series.entry(variant).or_default().push((step as f64, v));
    }
    let series: Vec<Series> = series.into_iter().collect();
    line_plot(&svg_of(path), "Chained forward-dynamics NMSE", "chain step", "NMSE", &series)
}

fn part_name(angular: bool) -> &'static str {
    if angular {
        "angular"
    } else {
        "linear"
    }
}

pub fn write_eval_id(path: &Path, rows: &[(u64, IdRow)]) -> Result<()> {
    let by_seed = path.with_file_name("eval_id_seeds.csv");
    let mut w = csv_writer(&by_seed)?;
    w.write_record(["seed", "controller", "condition", "part", "wcd"])?;
    for (seed, r) in rows {
        w.write_record([
            seed.to_string(),
            r.controller.clone(),
            r.condition.name().to_string(),
            part_name(r.angular).to_string(),
            r.wcd.to_string(),
        ])?;
    }
    finish(w, &by_seed)?;
    // Keep the controllers in report order rather than alphabetical.
    let mut order: Vec<String> = Vec::new();
    for (_, r) in rows {
        if !order.contains(&r.controller) {
            order.push(r.controller.clone());
        }
    }
    let avg = averaged(rows.iter().map(|(_, r)| {
        let c = order.iter().position(|c| *c == r.controller).unwrap_or(0);
        ((c, r.condition.name(), r.angular), r.wcd)
    }));
    let mut w = csv_writer(path)?;
    w.write_record(["controller", "condition", "part", "wcd"])?;
    for ((c, cond, angular), v) in &avg {
        w.write_record([order[*c].clone(), cond.to_string(), part_name(*angular).to_string(), v.to_string()])?;
    }
    finish(w, path)?;
    let mut conditions: Vec<&str> = avg.iter().map(|((_, cond, _), _)| *cond).collect();
    conditions.sort();
    conditions.dedup();
    let mut cats: Vec<(usize, bool)> = avg.iter().map(|((c, _, angular), _)| (*c, *angular)).collect();
    cats.sort();
    cats.dedup();
    let categories: Vec<String> = cats.iter().map(|(c, a)| format!("{} {}", order[*c], part_name(*a))).collect();
    let series: Vec<(String, Vec<f64>)> = conditions
        .iter()
        .map(|&cond| {
            let vals = cats
                .iter()
                .map(|&(c, angular)| avg.iter().find(|((a, b, p), _)| *a == c && *b == cond && *p == angular).map_or(0.0, |x| x.1))
                .collect();
            (cond.to_string(), vals)
        })
        .collect();
    bar_plot(&svg_of(path), "Inverse dynamics: weighted cosine distance", "wcd", &categories, &series)
}

pub fn write_embedding(path: &Path, points: &[EmbeddingPoint]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["x", "y", "label"])?;
    for p in points {
        w.write_record([p.x.to_string(), p.y.to_string(), p.label.to_string()])?;
    }
    finish(w, path)?;
    let pts: Vec<(f64, f64, usize)> = points.iter().map(|p| (p.x, p.y, p.label)).collect();
    scatter_plot(&svg_of(path), "Latent xy embedding by strongest electrode", &pts)
}

pub fn write_ae_trace(path: &Path, traces: &[AeTrace]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["iter", "L_AER", "L_MDS", "L_CDP", "total"])?;
    for t in traces {
        w.write_record([t.iter.to_string(), t.aer.to_string(), t.mds.to_string(), t.cdp.to_string(), t.total.to_string()])?;
    }
    finish(w, path)?;
    let log = |f: fn(&AeTrace) -> f64| -> Vec<(f64, f64)> {
        traces.iter().map(|t| (t.iter as f64, f(t).max(1e-300).log10())).collect()
    };
    let series = vec![
        ("L_AER".to_string(), log(|t| t.aer)),
        ("L_MDS".to_string(), log(|t| t.mds)),
        ("L_CDP".to_string(), log(|t| t.cdp)),
    ];
    line_plot(&svg_of(path), "Autoencoder training losses", "iteration", "log10 loss", &series)
}

pub fn write_dyn_trace(path: &Path, traces: &[DynTrace]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["iter", "L_LFD", "L_ID", "total"])?;
    for t in traces {
        w.write_record([t.iter.to_string(), t.lfd.to_string(), t.id.to_string(), t.total.to_string()])?;
    }
    finish(w, path)?;
    let log = |f: fn(&DynTrace) -> f64| -> Vec<(f64, f64)> {
        traces.iter().map(|t| (t.iter as f64, f(t).max(1e-300).log10())).collect()
    };
    let series = vec![("L_LFD".to_string(), log(|t| t.lfd)), ("L_ID".to_string(), log(|t| t.id))];
    line_plot(&svg_of(path), "Dynamics training losses", "iteration", "log10 loss", &series)
}

pub fn write_servo(path: &Path, log: &ServoLog) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["step", "latent_dist", "geo_dist", "v_x", "v_y", "v_z", "w_x", "w_y", "w_z"])?;
    for s in &log.steps {
        let mut rec = vec![s.step.to_string(), s.latent_dist.to_string(), s.geo_dist.to_string()];
        rec.extend(s.action.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    finish(w, path)?;
    let series = vec![
        ("geodesic (m)".to_string(), log.steps.iter().map(|s| (s.step as f64, s.geo_dist)).collect()),
        ("latent (m)".to_string(), log.steps.iter().map(|s| (s.step as f64, s.latent_dist)).collect()),
    ];
    line_plot(&svg_of(path), "Servo run: distance to target", "step", "distance (m)", &series)
}

pub fn write_servo_summary(path: &Path, runs: &[ServoOutcome], window: usize) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["kind", "seed", "steps", "success_step", "windows_non_increasing", "aborted", "final_geo_dist"])?;
    for r in runs {
        let g = r.log.geo();
        w.write_record([
            r.kind.name().to_string(),
            r.seed.to_string(),
            r.log.steps.len().to_string(),
            r.log.success_step.map_or(String::new(), |s| s.to_string()),
            r.log.windows_non_increasing(window).to_string(),
            r.log.aborted.to_string(),
            g.last().copied().unwrap_or(f64::NAN).to_string(),
        ])?;
    }
    finish(w, path)?;
    let series: Vec<Series> = runs
        .iter()
        .map(|r| {
            let pts = r.log.steps.iter().map(|s| (s.step as f64, s.geo_dist)).collect();
            (format!("{} {}", r.kind.name(), r.seed), pts)
        })
        .collect();
    line_plot(&svg_of(path), "Servo runs: geodesic distance to target", "step", "geodesic distance (m)", &series)
}

pub fn write_acceptance(path: &Path, criteria: &[Criterion]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["criterion", "name", "passed", "detail"])?;
    for c in criteria {
        w.write_record([c.id.to_string(), c.name.to_string(), c.passed.to_string(), c.detail.clone()])?;
    }
    finish(w, path)
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Training traces of one seed under `dir`.
pub fn write_seed_traces(dir: &Path, s: &SeedOutcome) -> Result<()> {
    create_dir(dir)?;
    for (variant, t) in &s.ae_traces {
        write_ae_trace(&dir.join(format!("ae_trace_{}_{variant}.csv", s.seed)), t)?;
    }
    for d in &s.dynamics {
        write_dyn_trace(&dir.join(format!("dyn_trace_{}_{}.csv", s.seed, d.name)), &d.traces)?;
    }
    Ok(())
}

/// Every report of a reproduction run.
pub fn write_repro(dir: &Path, o: &ReproOutcome, criteria: &[Criterion], window: usize) -> Result<()> {
    create_dir(dir)?;
    let ae: Vec<(u64, EvalRecord)> = o.seeds.iter().flat_map(|s| s.ae_eval.iter().map(move |r| (s.seed, r.clone()))).collect();
    write_eval_ae(&dir.join("eval_ae.csv"), &ae)?;
    let fd: Vec<(u64, FdRow)> = o.seeds.iter().flat_map(|s| s.fd.iter().map(move |r| (s.seed, r.clone()))).collect();
    write_eval_fd(&dir.join("eval_fd.csv"), &fd)?;
    let id: Vec<(u64, IdRow)> = o.seeds.iter().flat_map(|s| s.id.iter().map(move |r| (s.seed, r.clone()))).collect();
    write_eval_id(&dir.join("eval_id.csv"), &id)?;
    if let Some(first) = o.seeds.first() {
        write_embedding(&dir.join("fig3_embedding.csv"), &first.embedding)?;
    }
    for s in &o.seeds {
        write_seed_traces(&dir.join("traces"), s)?;
    }
    let servo_dir = dir.join("servo");
    create_dir(&servo_dir)?;
    for r in &o.servo {
        write_servo(&servo_dir.join(format!("servo_{}.csv", r.seed)), &r.log)?;
    }
    write_servo_summary(&servo_dir.join("servo_summary.csv"), &o.servo, window)?;
    write_acceptance(&dir.join("acceptance.csv"), criteria)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::id::IdCondition;

    fn read(path: &Path) -> Vec<Vec<String>> {
        let mut r = csv::Reader::from_path(path).unwrap();
        let mut out = vec![r.headers().unwrap().iter().map(String::from).collect()];
        out.extend(r.records().map(|x| x.unwrap().iter().map(String::from).collect()));
        out
    }

    #[test]
    fn fd_report_averages_over_seeds() {
        let dir = tempfile::tempdir().unwrap();
        let row = |v: &str, k, x| FdRow {
            variant: v.into(),
            chain_step: k,
            nmse: x,
        };
        let rows = vec![(1, row("A", 1, 0.1)), (2, row("A", 1, 0.3)), (1, row("A", 2, 0.5)), (2, row("A", 2, 0.5))];
        let p = dir.path().join("eval_fd.csv");
        write_eval_fd(&p, &rows).unwrap();
        let t = read(&p);
        assert_eq!(t[0], ["variant", "chain_step", "nmse"]);
        assert_eq!(t[1][0], "A");
        assert!((t[1][2].parse::<f64>().unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(read(&dir.path().join("eval_fd_seeds.csv")).len(), 5);
        let svg = std::fs::read_to_string(dir.path().join("eval_fd.svg")).unwrap();
        assert!(svg.starts_with("<svg"));
    }

    #[test]
    fn id_report_has_spec_columns_and_keeps_controller_order() {
        let dir = tempfile::tempdir().unwrap();
        let mut rows = Vec::new();
        for c in ["NJ", "LL"] {
            for cond in IdCondition::ALL {
                for angular in [false, true] {
                    rows.push((
                        1,
                        IdRow {
                            controller: c.into(),
                            condition: cond,
                            angular,
                            wcd: 0.5,
                        },
                    ));
                }
            }
        }
        let p = dir.path().join("eval_id.csv");
        write_eval_id(&p, &rows).unwrap();
        let t = read(&p);
        assert_eq!(t[0], ["controller", "condition", "part", "wcd"]);
        assert_eq!(t.len(), 1 + 12);
        assert_eq!(t[1][0], "NJ");
        assert_eq!(t[12][0], "LL");
    }

    #[test]
    fn servo_csv_columns() {
        use crate::eval::servo::ServoStep;
        let dir = tempfile::tempdir().unwrap();
        let log = ServoLog {
            z_target: [0.0; 3],
            steps: vec![ServoStep {
                step: 0,
                s: vec![],
                z: [0.0; 3],
                latent_dist: 0.5,
                geo_dist: 0.25,
                in_contact: true,
                action: [1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            }],
            success_step: None,
            aborted: false,
        };
        let p = dir.path().join("servo_7.csv");
        write_servo(&p, &log).unwrap();
        let t = read(&p);
        assert_eq!(t[0].len(), 9);
        assert_eq!(t[1], ["0", "0.5", "0.25", "1", "2", "3", "4", "5", "6"]);
    }
}
