//! Numerical self-checks that `repro-all` runs next to the learned-model
//! criteria: controller optimality, gradient integrity and the geodesic
//! oracle on a spherical cap.

use nalgebra::{Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::VecDeque;

use crate::dynamics::control::{kkt_residuals, lq_objective, ng_gradient, nj_system, solve_linear};
use crate::dynamics::{id_ll, id_nj, DynKind, DynamicsModel, IdKind, LinearParams, Normalizer, PrevStep};
use crate::error::Result;
use crate::geodesy::{geodesic_matrix, knn_graph, SparseGraph};
use crate::nn::gradcheck::{check_input_jacobian, check_mlp, check_tape, model_shapes, rel_err, REL_FLOOR};
use crate::nn::Mode;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalityCheck {
    pub instances: usize,
    pub kkt_ll: f64,
    pub kkt_nj: f64,
    /// Perturbed actions that scored strictly better than the closed form.
    pub improvements: usize,
}

impl OptimalityCheck {
    pub fn passes(&self, tol: f64) -> bool {
        self.kkt_ll <= tol && self.kkt_nj <= tol && self.improvements == 0
    }
}

fn random_normalizer(rng: &mut ChaCha8Rng) -> Normalizer {
    let mut s = |lo: f64, hi: f64| rng.random_range(lo..hi);
    Normalizer {
        z_mean: [s(-0.5, 0.5), s(-0.5, 0.5), s(-0.5, 0.5)],
        z_std: [s(0.5, 2.0), s(0.5, 2.0), s(0.5, 2.0)],
        a_std: std::array::from_fn(|_| s(0.5, 2.0)),
        zdot_std: [s(0.5, 2.0), s(0.5, 2.0), s(0.5, 2.0)],
    }
}

fn rv3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))
}

fn rv6(rng: &mut ChaCha8Rng) -> Vector6<f64> {
    Vector6::from_fn(|_, _| rng.random_range(-1.0..1.0))
}

fn worse_perturbations(
    sys: &LinearParams,
    z: &Vector3<f64>,
    zt: &Vector3<f64>,
    a: &Vector6<f64>,
    dt: f64,
    beta: f64,
    w: &Vector6<f64>,
    rng: &mut ChaCha8Rng,
) -> usize {
    let best = lq_objective(sys, z, zt, a, dt, beta, w);
    (0..20)
        .filter(|_| {
            let d = rv6(rng);
            lq_objective(sys, z, zt, &(a + d * (1e-3 / d.norm())), dt, beta, w) < best
        })
        .count()
}

/// KKT residuals and random-perturbation optimality of the LL and NJ
/// controllers on random models with random normalizers.
pub fn controller_optimality(instances: usize, seed: u64) -> Result<OptimalityCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = OptimalityCheck {
        instances,
        kkt_ll: 0.0,
        kkt_nj: 0.0,
        improvements: 0,
    };
    for _ in 0..instances {
        let beta = rng.random_range(0.01..1.0);
        let dt = rng.random_range(0.05..1.0);
        let (z, zt) = (rv3(&mut rng), rv3(&mut rng));

        let norm = random_normalizer(&mut rng);
        let ll = DynamicsModel::new(DynKind::LocallyLinear, IdKind::Ll, norm, beta, &mut rng)?;
        let (w, k) = ll.control_metric();
        let sys = ll.ll_params(&z)?;
        let sol = solve_linear(&sys, &z, &zt, dt, beta * k, &w)?;
        debug_assert_eq!(sol.action, id_ll(&ll, &zt, &z, dt, beta)?);
        out.kkt_ll = out.kkt_ll.max(kkt_residuals(&sys, &z, &zt, dt, beta * k, &w, &sol).max());
        out.improvements += worse_perturbations(&sys, &z, &zt, &sol.action, dt, beta * k, &w, &mut rng);

        let norm = random_normalizer(&mut rng);
        let nl = DynamicsModel::new(DynKind::NonLinear, IdKind::Nj, norm, beta, &mut rng)?;
        let (w, k) = nl.control_metric();
        let prev = PrevStep {
            z: rv3(&mut rng),
            a: rv6(&mut rng),
        };
        let (jz, ja) = nl.nl_jacobians(&prev.z, &prev.a)?;
        let sys = nj_system(&jz, &ja, &prev.z, &prev.a, dt);
        let sol = solve_linear(&sys, &z, &zt, dt, beta * k, &w)?;
        debug_assert_eq!(sol.action, id_nj(&nl, &zt, &z, Some(prev), dt, beta)?);
        out.kkt_nj = out.kkt_nj.max(kkt_residuals(&sys, &z, &zt, dt, beta * k, &w, &sol).max());
        out.improvements += worse_perturbations(&sys, &z, &zt, &sol.action, dt, beta * k, &w, &mut rng);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradientCheck {
    pub instances: usize,
    pub params: f64,
    pub inputs: f64,
    pub tape: f64,
    pub ng_action: f64,
}

impl GradientCheck {
    pub fn worst(&self) -> f64 {
        self.params.max(self.inputs).max(self.tape).max(self.ng_action)
    }
}

/// Central differences against every network shape (both modes), the
/// second-order Jacobian tape, and the NG action gradient.
pub fn gradient_integrity(instances: usize, seed: u64) -> Result<GradientCheck> {
    let shapes = model_shapes();
    let mut out = GradientCheck {
        instances,
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..instances {
        let s = seed.wrapping_mul(1000).wrapping_add(i as u64);
        let (_, spec) = &shapes[i % shapes.len()];
        let mode = if i % 2 == 0 { Mode::Training } else { Mode::Inference };
        let r = check_mlp(spec, mode, 6, s)?;
        out.params = out.params.max(r.params);
        out.inputs = out.inputs.max(r.inputs).max(check_input_jacobian(spec, s)?);
        if !spec.has_batch_norm() {
            out.tape = out.tape.max(check_tape(spec, s)?.worst());
        }

        let norm = random_normalizer(&mut rng);
        let m = DynamicsModel::new(DynKind::NonLinear, IdKind::Ng, norm, 0.1, &mut rng)?;
        let (z, zt) = (rv3(&mut rng), rv3(&mut rng));
        let dt = rng.random_range(0.1..0.5);
        let g = ng_gradient(&m, &zt, &z, dt)?;
        let (w, _) = m.control_metric();
        let d = |a: &Vector6<f64>| -> Result<f64> { Ok((m.integrate(&z, a, dt)? - zt).norm_squared()) };
        let h = 1e-6;
        for k in 0..6 {
            let mut e = Vector6::zeros();
            e[k] = h;
            let n = -(d(&e)? - d(&-e)?) / (2.0 * h) * w[k];
            out.ng_action = out.ng_action.max(rel_err(g[k], n, REL_FLOOR));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapCheck {
    pub pairs: usize,
    pub worst_rel: f64,
    pub mean_rel: f64,
}

/// Fibonacci lattice of `n` near-uniform points on a unit-sphere cap of
/// half-angle `half_angle`.
pub fn spherical_cap(n: usize, half_angle: f64) -> Vec<Vector3<f64>> {
    let c0 = half_angle.cos();
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|k| {
            let c = 1.0 - (1.0 - c0) * (k as f64 + 0.5) / n as f64;
            let s = (1.0 - c * c).sqrt();
            let phi = golden * k as f64;
            Vector3::new(s * phi.cos(), s * phi.sin(), c)
        })
        .collect()
}

fn hops(graph: &SparseGraph, source: usize) -> Vec<usize> {
    let mut h = vec![usize::MAX; graph.len()];
    h[source] = 0;
    let mut queue = VecDeque::from([source]);
    while let Some(i) = queue.pop_front() {
        for &(j, _) in graph.neighbors(i) {
            if h[j] == usize::MAX {
                h[j] = h[i] + 1;
                queue.push_back(j);
            }
        }
    }
    h
}

/// Relative error of kNN-graph geodesics against great-circle distances for
/// pairs at least `min_hops` edges apart.
pub fn geodesic_cap_agreement(n: usize, m: usize, min_hops: usize, half_angle: f64) -> Result<CapCheck> {
    let pts = spherical_cap(n, half_angle);
    let graph = knn_graph(&pts, m)?;
    let d = geodesic_matrix(&graph)?;
    let (mut pairs, mut worst, mut sum) = (0usize, 0.0f64, 0.0);
    for i in 0..n {
        let h = hops(&graph, i);
        for j in i + 1..n {
            if h[j] < min_hops {
                continue;
            }
            let exact = pts[i].dot(&pts[j]).clamp(-1.0, 1.0).acos();
            let rel = (d[i * n + j] - exact).abs() / exact;
            worst = worst.max(rel);
            sum += rel;
            pairs += 1;
        }
    }
    Ok(CapCheck {
        pairs,
        worst_rel: worst,
        mean_rel: sum / pairs.max(1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimality_on_a_small_sample() {
        let r = controller_optimality(50, 1).unwrap();
        assert!(r.passes(1e-8), "{r:?}");
    }

    #[test]
    fn gradients_on_a_small_sample() {
        let r = gradient_integrity(8, 2).unwrap();
        assert!(r.worst() < 1e-4, "{r:?}");
    }

    #[test]
    fn cap_points_lie_on_the_cap() {
        for p in spherical_cap(200, 0.7) {
            assert!((p.norm() - 1.0).abs() < 1e-12);
            assert!(p.z >= 0.7f64.cos() - 1e-12);
        }
    }

    #[test]
    fn small_cap_agrees_with_great_circles() {
        let r = geodesic_cap_agreement(200, 12, 5, 0.8).unwrap();
        assert!(r.pairs > 0 && r.worst_rel < 0.05, "{r:?}");
    }

    #[test]
    fn hop_counts_on_a_path() {
        let mut g = SparseGraph::with_nodes(4);
        for i in 0..3 {
            g.add_edge(i, i + 1, 1.0);
        }
        assert_eq!(hops(&g, 0), vec![0, 1, 2, 3]);
    }
}
