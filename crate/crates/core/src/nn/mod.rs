//! Small dense networks with batch normalization, reverse-mode gradients with
//! respect to parameters and inputs, and RMSProp.

pub mod checkpoint;
pub mod gradcheck;
pub mod jacobian;
pub mod matrix;
pub mod mlp;
pub mod rmsprop;

pub use jacobian::JacobianTape;
pub use matrix::Matrix;
pub use mlp::{Activation, ForwardCache, Grads, LayerSpec, Mlp, MlpSpec, Mode};
pub use rmsprop::RmsProp;
