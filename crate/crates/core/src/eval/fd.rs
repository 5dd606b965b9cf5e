use nalgebra::Vector3;

use super::metrics::nmse;
use crate::datapipe::TestChain;
use crate::dynamics::model::action_vector;
use crate::dynamics::DynamicsModel;
use crate::embedding::Autoencoder;
use crate::error::{Error, Result};

/// NMSE of the `k`-step chained prediction against the encoded `k`-th state,
/// for `k = 1..=c_test`, averaged over latent dimensions.
pub fn eval_chained_fd(
    model: &DynamicsModel,
    ae: &Autoencoder,
    chains: &[&TestChain],
    c_test: usize,
) -> Result<Vec<f64>> {
    if chains.is_empty() {
        return Err(Error::EmptyDataset("no evaluation chains".into()));
    }
    if let Some(short) = chains.iter().find(|c| c.actions.len() < c_test) {
        return Err(Error::InvalidArgument(format!(
            "chain has {} actions, C_test is {c_test}",
            short.actions.len()
        )));
    }
    let mut pred = vec![Vec::with_capacity(chains.len()); c_test];
    let mut truth = vec![Vec::with_capacity(chains.len()); c_test];
    for chain in chains {
        let z = ae.encode_many(chain.states[..=c_test].iter().map(Vec::as_slice))?;
        let actions: Vec<_> = chain.actions[..c_test].iter().map(action_vector).collect();
        let p = model.chain_predict(&Vector3::from(z[0].0), &actions, chain.dt)?;
        for k in 0..c_test {
            pred[k].push(p[k].as_slice().to_vec());
            truth[k].push(z[k + 1].0.to_vec());
        }
    }
    (0..c_test).map(|k| nmse(&pred[k], &truth[k])).collect()
}
