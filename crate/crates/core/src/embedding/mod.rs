//! Siamese autoencoder with an MDS-structured latent map and a pressure axis.

pub mod model;
pub mod train;

pub use model::{loss_aer, loss_cdp, loss_mds, Autoencoder, LatentState, LossWeights, LATENT_DIM};
pub use train::{train_autoencoder, AeTrace, AeTrainConfig};
