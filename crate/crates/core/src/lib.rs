//! Tactile servoing in a learned latent space.
//!
//! A simulated fingertip skin produces electrode readings; a Siamese
//! autoencoder embeds them so that two latent dimensions follow surface
//! geodesics and the third tracks contact pressure; latent forward and
//! inverse dynamics models trained from scripted demonstrations then drive
//! the contact point toward a target reading.

pub mod cli;
pub mod config;
pub mod datapipe;
pub mod dynamics;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod geodesy;
pub mod nn;
pub mod skin_sim;

pub use error::{Error, Result};
