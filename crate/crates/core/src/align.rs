//! Canonical-pose recovery. A cloud in arbitrary orientation is rotated back
//! to the pose the model considers most likely under the null embedding: the
//! alignment objective is the point NLL of the rotated cloud at e = 0,
//! minimized over axis-angle parameters with restarts.

use crate::cma::{self, CmaConfig};
use crate::error::Result;
use crate::flow::rotate_points;
use crate::model::FlowModel;
use crate::scalar::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct AlignConfig {
    /// Independent optimizer starts; the first is always the identity pose,
    /// the rest are random orientations.
    pub restarts: usize,
    pub max_generations: usize,
    pub sigma0: f64,
    pub seed: u64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            restarts: 4,
            max_generations: 150,
            sigma0: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlignResult {
    /// Rotation (axis-angle) that carries the input to its recovered pose.
    pub axis_angle: [f64; 3],
    /// Point NLL of the aligned cloud at the null embedding.
    pub nll: f64,
    /// Same quantity for the unrotated input, for comparison.
    pub identity_nll: f64,
    pub aligned: Vec<f64>,
    /// Best objective per generation of the winning restart.
    pub history: Vec<f64>,
}

/// NLL of `cloud` rotated by `aa`, scored against the null embedding.
/// Non-finite likelihoods map to +inf so the optimizer can rank them.
fn objective<S: Scalar>(model: &FlowModel<S>, cloud: &[S], e0: &[S], aa: [f64; 3]) -> f64 {
    let rotated = match rotate_points(cloud, aa) {
        Ok(r) => r,
        Err(_) => return f64::INFINITY,
    };
    match model.point_loglik(&rotated, e0) {
        Ok(ll) if ll.is_finite() => -ll,
        _ => f64::INFINITY,
    }
}

pub fn align_pose<S: Scalar>(
    model: &FlowModel<S>,
    cloud: &[f64],
    cfg: &AlignConfig,
) -> Result<AlignResult> {
    let cloud_s: Vec<S> = cloud.iter().map(|&v| S::from_f64(v)).collect();
    let e0 = vec![S::zero(); model.embed_dim()];
    let identity_nll = objective(model, &cloud_s, &e0, [0.0; 3]);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best_aa = [0.0f64; 3];
    let mut best_nll = identity_nll;
    let mut best_history: Vec<f64> = vec![identity_nll];

    for restart in 0..cfg.restarts.max(1) {
        let start = if restart == 0 {
            [0.0; 3]
        } else {
            // random axis, angle uniform in (0, pi]
            loop {
                let v: [f64; 3] = [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ];
                let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if norm > 1e-3 && norm <= 1.0 {
                    let angle = rng.random_range(0.0..std::f64::consts::PI);
                    break [
                        v[0] / norm * angle,
                        v[1] / norm * angle,
                        v[2] / norm * angle,
                    ];
                }
            }
        };
        let cma_cfg = CmaConfig {
            sigma0: cfg.sigma0,
            max_generations: cfg.max_generations,
            target_value: None,
            seed: cfg.seed.wrapping_add(restart as u64).wrapping_mul(0x9e3779b9),
            ..CmaConfig::default()
        };
        let run = cma::minimize(
            |aa| objective(model, &cloud_s, &e0, [aa[0], aa[1], aa[2]]),
            &start,
            &cma_cfg,
        )?;
        if run.best_value < best_nll {
            best_nll = run.best_value;
            best_aa = [run.best_x[0], run.best_x[1], run.best_x[2]];
            best_history = run.best_history;
        }
    }

    let aligned = rotate_points(cloud, best_aa)?;
    Ok(AlignResult {
        axis_angle: best_aa,
        nll: best_nll,
        identity_nll,
        aligned,
        history: best_history,
    })
}
