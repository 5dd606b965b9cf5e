//! Full desk-scale run scored against the eight acceptance criteria.
//! Expect roughly ten minutes on one core.

use std::io::Write;
use std::path::Path;

use tactile_servo::config::KvConfig;
use tactile_servo::eval::acceptance::*;
use tactile_servo::eval::report::write_repro;
use tactile_servo::eval::repro::{run_repro, PipelineConfig, CAP_HALF_ANGLE, CAP_MIN_HOPS};

#[test]
fn thresholds_are_pinned() {
    assert_eq!(AE_NMSE_MAX, 0.25);
    assert_eq!(MDS_NMSE_MAX, 0.05);
    assert_eq!(KKT_TOL, 1e-8);
    assert_eq!(GRAD_TOL, 1e-4);
    assert_eq!(CAP_TOL, 0.05);
    assert_eq!(SERVO_RATE, 0.7);
    assert_eq!(SERVO_WINDOW, 20);
    assert_eq!((CAP_HALF_ANGLE, CAP_MIN_HOPS), (1.0, 5));
}

#[test]
fn desk_scale_acceptance() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.cfg");
    let cfg = PipelineConfig::from_kv(&KvConfig::load(&path).unwrap()).unwrap();
    assert_eq!(cfg, PipelineConfig::default(), "desk.cfg drifted from the defaults");
    assert_eq!(cfg.seeds.len(), 3);
    assert_eq!((cfg.servo_runs, cfg.servo.max_steps, cfg.servo.tolerance), (20, 200, 0.003));
    assert_eq!((cfg.kkt_instances, cfg.grad_instances), (1000, 100));

    let outcome = run_repro(&cfg).unwrap();
    let criteria = acceptance(&outcome, cfg.c_test, cfg.servo.max_steps);
    // Straight to stderr so the verdicts show without --nocapture.
    let mut err = std::io::stderr().lock();
    for c in &criteria {
        writeln!(err, "{c}").unwrap();
    }
    let out = Path::new(env!("CARGO_TARGET_TMPDIR")).join("desk-acceptance");
    write_repro(&out, &outcome, &criteria, SERVO_WINDOW).unwrap();
    writeln!(err, "reports in {}", out.display()).unwrap();

    assert_eq!(criteria.iter().map(|c| c.id).collect::<Vec<_>>(), (1..=8).collect::<Vec<_>>());
    let failed: Vec<String> = criteria.iter().filter(|c| !c.passed).map(|c| c.to_string()).collect();
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
