//! From raw demonstrations to autoencoder samples, transition tuples and
//! evaluation chains.

pub mod dataset;
pub mod filter;
pub mod io;
pub mod segment;
pub mod twist;

pub use crate::skin_sim::sensing::pressure_of as pressure;
pub use dataset::{
    build_dataset, resample_with_action_average, AeSample, Dataset, DatasetConfig, FramePose, Split,
    TestChain, TransitionTuple,
};
pub use filter::lowpass;
pub use segment::segment_contacts;
pub use twist::{base_to_ee, ee_to_base};
