pub mod acceptance;
pub mod checks;
pub mod fd;
pub mod id;
pub mod metrics;
pub mod report;
pub mod repro;
pub mod servo;

pub use fd::eval_chained_fd;
pub use id::{eval_id, IdCondition, IdRow};
pub use metrics::{nmse, weighted_cosine_distance};
pub use servo::{servo_run, servo_scenario, ServoLog, ServoRunConfig, ServoScenario, ServoStep, TargetKind};
