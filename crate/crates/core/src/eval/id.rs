use nalgebra::Vector6;

use super::metrics::{part, weighted_cosine_distance};
use crate::dynamics::{tuple_inverse, DynamicsModel, LatentTuple};
use crate::error::Result;

/// Target used for the inverse-dynamics query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdCondition {
    /// `z_T = f_dfd(z_t, a_t, Δt)`, scored against `a_t`.
    FwdDynPred,
    /// `z_T = f_enc(s_{t+1})`, scored against `a_t`.
    AePred,
    /// Actions of the first condition scored against those of the second.
    FwdVsAe,
}

impl IdCondition {
    pub const ALL: [IdCondition; 3] = [IdCondition::FwdDynPred, IdCondition::AePred, IdCondition::FwdVsAe];

    pub fn name(self) -> &'static str {
        match self {
            IdCondition::FwdDynPred => "fwddynpred",
            IdCondition::AePred => "AEpred",
            IdCondition::FwdVsAe => "fwddynpred_vs_AEpred",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdRow {
    pub controller: String,
    pub condition: IdCondition,
    pub angular: bool,
    pub wcd: f64,
}

fn as_arrays(v: &[Vector6<f64>]) -> Vec<[f64; 6]> {
    v.iter().map(|a| std::array::from_fn(|k| a[k])).collect()
}

/// Six rows (three conditions, linear and angular part) for one controller.
pub fn eval_id(name: &str, model: &DynamicsModel, tuples: &[LatentTuple]) -> Result<Vec<IdRow>> {
    let mut fwd = Vec::with_capacity(tuples.len());
    let mut ae = Vec::with_capacity(tuples.len());
    for t in tuples {
        let target = model.integrate(&t.z, &t.a, t.dt)?;
        fwd.push(tuple_inverse(model, &LatentTuple { z_next: target, ..*t })?);
        ae.push(tuple_inverse(model, t)?);
    }
    let truth: Vec<Vector6<f64>> = tuples.iter().map(|t| t.a).collect();
    let (fwd, ae, truth) = (as_arrays(&fwd), as_arrays(&ae), as_arrays(&truth));
    let mut rows = Vec::new();
    for condition in IdCondition::ALL {
        let (p, t) = match condition {
            IdCondition::FwdDynPred => (&fwd, &truth),
            IdCondition::AePred => (&ae, &truth),
            IdCondition::FwdVsAe => (&fwd, &ae),
        };
        for angular in [false, true] {
            let pp: Vec<[f64; 3]> = p.iter().map(|a| part(a, angular)).collect();
            let tp: Vec<[f64; 3]> = t.iter().map(|a| part(a, angular)).collect();
            rows.push(IdRow {
                controller: name.to_string(),
                condition,
                angular,
                wcd: weighted_cosine_distance(&pp, &tp),
            });
        }
    }
    Ok(rows)
}
