//! Latent forward dynamics, inverse-dynamics controllers and their training.

pub mod control;
pub mod model;
pub mod train;

pub use control::{id_ll, id_ng, id_nj, inverse, kkt_residuals, solve_linear, KktResiduals, LqSolution, PrevStep};
pub use model::{DynKind, DynamicsModel, IdKind, LinearParams, Normalizer, ACTION_DIM};
pub use train::{
    direction_loss, encode_tuples, loss_id, loss_lfd, train_dynamics, tuple_inverse, DynTrace, DynTrainConfig,
    LatentTuple,
};
