//! Covariance matrix adaptation evolution strategy: a derivative-free
//! minimizer for low-dimensional continuous objectives. Weighted recombination
//! of the best half of each population adapts the mean; evolution paths adapt
//! the step size and the covariance through rank-1 and rank-mu updates.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone)]
pub struct CmaConfig {
    /// Initial standard deviation of the search distribution.
    pub sigma0: f64,
    pub max_generations: usize,
    /// Stop as soon as the best value reaches this.
    pub target_value: Option<f64>,
    /// Stop when the step size collapses below this.
    pub tol_sigma: f64,
    /// Population per generation; defaults to 4 + floor(3 ln n).
    pub population: Option<usize>,
    pub seed: u64,
}

impl Default for CmaConfig {
    fn default() -> Self {
        CmaConfig {
            sigma0: 0.5,
            max_generations: 300,
            target_value: None,
            tol_sigma: 1e-14,
            population: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxGenerations,
    TargetReached,
    SigmaCollapse,
}

#[derive(Debug, Clone)]
pub struct CmaResult {
    pub best_x: Vec<f64>,
    pub best_value: f64,
    /// Best value seen up to each generation; non-increasing by construction.
    pub best_history: Vec<f64>,
    pub generations: usize,
    pub termination: Termination,
}

/// Minimizes `f` starting from `x0`. Candidates whose objective is NaN or
/// infinite are kept but ranked strictly worst, so an occasionally exploding
/// objective degrades gracefully instead of aborting the run.
pub fn minimize(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    cfg: &CmaConfig,
) -> Result<CmaResult> {
    let n = x0.len();
    if n == 0 {
        return Err(Error::InvalidArgument("cma: empty start point".into()));
    }
    if !(cfg.sigma0.is_finite() && cfg.sigma0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "cma: sigma0 must be positive, got {}",
            cfg.sigma0
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "cma: start point".into(),
        });
    }

    let nf = n as f64;
    let lambda = cfg.population.unwrap_or(4 + (3.0 * nf.ln()).floor() as usize).max(2);
    let mu = lambda / 2;
    let mut weights: Vec<f64> = (0..mu)
        .map(|i| ((mu as f64) + 0.5).ln() - ((i + 1) as f64).ln())
        .collect();
    let wsum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= wsum;
    }
    let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

    let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
    let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
    let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
    let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
    let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
    // E||N(0, I)||
    let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mean = DVector::from_column_slice(x0);
    let mut sigma = cfg.sigma0;
    let mut cov: DMatrix<f64> = DMatrix::identity(n, n);
    let mut p_sigma = DVector::zeros(n);
    let mut p_c = DVector::zeros(n);

    let mut best_x = x0.to_vec();
    let mut best_value = f64::INFINITY;
    let mut best_history = Vec::new();
    let mut termination = Termination::MaxGenerations;
    let mut generations = 0;

    for gen in 0..cfg.max_generations {
        generations = gen + 1;

        // eigendecomposition C = B D^2 B^T; floor tiny eigenvalues so the
        // sqrt stays real under accumulated asymmetry
        let eig = cov.clone().symmetric_eigen();
        let d_sqrt: DVector<f64> = eig.eigenvalues.map(|v| v.max(1e-20).sqrt());
        let b = &eig.eigenvectors;

        let mut candidates: Vec<(DVector<f64>, DVector<f64>, f64)> = Vec::with_capacity(lambda);
        for _ in 0..lambda {
            let zs = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            let y = b * zs.component_mul(&d_sqrt);
            let x = &mean + sigma * &y;
            let mut value = f(x.as_slice());
            if !value.is_finite() {
                value = f64::INFINITY;
            }
            candidates.push((x, y, value));
        }
        candidates.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap_or(std::cmp::Ordering::Equal));

        if candidates[0].2 < best_value {
            best_value = candidates[0].2;
            best_x = candidates[0].0.as_slice().to_vec();
        }
        best_history.push(best_value);

        if let Some(target) = cfg.target_value {
            if best_value <= target {
                termination = Termination::TargetReached;
                break;
            }
        }

        // weighted recombination in y-space keeps sigma factored out
        let mut y_w = DVector::zeros(n);
        for (i, w) in weights.iter().enumerate() {
            y_w += *w * &candidates[i].1;
        }
        mean += sigma * &y_w;

        // step-size path uses C^{-1/2} y_w
        let d_inv: DVector<f64> = d_sqrt.map(|v| 1.0 / v);
        let c_inv_sqrt_y = b * (b.transpose() * &y_w).component_mul(&d_inv);
        p_sigma = (1.0 - c_sigma) * &p_sigma
            + (c_sigma * (2.0 - c_sigma) * mu_eff).sqrt() * c_inv_sqrt_y;

        let ps_norm = p_sigma.norm();
        let expected = (1.0 - (1.0 - c_sigma).powi(2 * (gen as i32 + 1))).sqrt();
        let h_sigma = if ps_norm / expected < (1.4 + 2.0 / (nf + 1.0)) * chi_n {
            1.0
        } else {
            0.0
        };

        p_c = (1.0 - c_c) * &p_c + h_sigma * (c_c * (2.0 - c_c) * mu_eff).sqrt() * &y_w;

        let mut rank_mu = DMatrix::zeros(n, n);
        for (i, w) in weights.iter().enumerate() {
            rank_mu += *w * (&candidates[i].1 * candidates[i].1.transpose());
        }
        let c1_correction = (1.0 - h_sigma) * c_c * (2.0 - c_c);
        cov = (1.0 - c_1 - c_mu) * &cov
            + c_1 * (&p_c * p_c.transpose() + c1_correction * &cov)
            + c_mu * rank_mu;
        // keep C symmetric against drift
        cov = (&cov + cov.transpose()) * 0.5;

        sigma *= ((c_sigma / d_sigma) * (ps_norm / chi_n - 1.0)).exp();
        if !sigma.is_finite() {
            return Err(Error::NonFinite {
                context: "cma: step size".into(),
            });
        }
        sigma = sigma.min(1e12);

        if sigma < cfg.tol_sigma {
            termination = Termination::SigmaCollapse;
            break;
        }
    }

    Ok(CmaResult {
        best_x,
        best_value,
        best_history,
        generations,
        termination,
    })
}
