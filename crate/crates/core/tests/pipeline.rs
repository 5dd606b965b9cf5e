use std::path::Path;

use tactile_servo::config::KvConfig;
use tactile_servo::datapipe::io::{load_dataset, save_dataset};
use tactile_servo::datapipe::{build_dataset, Split};
use tactile_servo::eval::repro::PipelineConfig;
use tactile_servo::skin_sim::io::{read_demo, write_demo};
use tactile_servo::skin_sim::demo_set;

fn tiny() -> PipelineConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/tiny.cfg");
    PipelineConfig::from_kv(&KvConfig::load(&path).unwrap()).unwrap()
}

#[test]
fn demo_csv_round_trip_is_exact() {
    let cfg = tiny();
    let surface = cfg.surface().unwrap();
    let demos = demo_set(&surface, &cfg.demos, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for (i, d) in demos.iter().enumerate() {
        let p = dir.path().join(format!("demo_{i}.csv"));
        write_demo(&p, d).unwrap();
        let back = read_demo(&p).unwrap();
        assert_eq!(back.kind, d.kind);
        assert_eq!(back.twists, d.twists);
        assert_eq!(back.tactile.len(), d.tactile.len());
        for (a, b) in back.tactile.iter().zip(&d.tactile) {
            assert_eq!(a.s, b.s);
            assert_eq!(a.pressure, b.pressure);
            assert_eq!(a.pose, b.pose);
        }
    }
}

#[test]
fn dataset_from_reread_demos_matches_and_survives_disk() {
    let cfg = tiny();
    let surface = cfg.surface().unwrap();
    let demos = demo_set(&surface, &cfg.demos, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let reread: Vec<_> = demos
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let p = dir.path().join(format!("demo_{i}.csv"));
            write_demo(&p, d).unwrap();
            read_demo(&p).unwrap()
        })
        .collect();
    let ds = build_dataset(&demos, &cfg.data).unwrap();
    assert_eq!(build_dataset(&reread, &cfg.data).unwrap(), ds);

    for split in Split::ALL {
        assert!(!ds.ae_of(split).is_empty(), "{split:?}");
    }
    assert!(ds.ae.iter().all(|a| a.pressure > ds.threshold));
    assert!(ds.tuples.iter().all(|t| t.dt > 0.0 && t.s.len() == ds.electrodes));

    let out = dir.path().join("data");
    save_dataset(&out, &ds, &cfg.to_kv()).unwrap();
    let (back, manifest) = load_dataset(&out).unwrap();
    assert_eq!(back, ds);
    assert_eq!(manifest.raw("geo.knn"), Some("10"));
}
