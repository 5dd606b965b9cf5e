//! Simulated tactile fingertip and the scripted demonstrations recorded on it.

pub mod demo;
pub mod io;
pub mod pose;
pub mod projection;
pub mod sensing;
pub mod surface;

pub use demo::{demo_set, scripted_demo, DemoKind, DemoParams, DemoSetConfig, RawDemo};
pub use pose::{step_pose, FingerPose, Twist};
pub use sensing::{sense, ContactState, TactileSample};
pub use surface::{GeodesicField, Projection, SkinSurface, SurfaceMesh, SurfaceParams};
