//! Adam optimization of the joint cloud/embedding likelihood, with a stepped
//! learning-rate decay, per-epoch statistics, and resumable checkpoints.

pub mod checkpoint;

use crate::data::{split_fh, PointCloud};
use crate::error::{Error, Result};
use crate::model::FlowModel;
use crate::params::{bind, gradients, ParamSet};
use crate::scalar::Scalar;
use crate::tensor::Tape;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Initial learning rate.
    pub lr0: f64,
    /// Multiplier applied every `decay_every` epochs.
    pub decay_factor: f64,
    pub decay_every: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    /// Clouds whose gradients are averaged into one Adam step.
    pub clouds_per_batch: usize,
    /// Points scored by the flow per cloud per epoch.
    pub points_f: usize,
    /// Points shown to the encoder per cloud per epoch (disjoint from the
    /// scored ones).
    pub points_h: usize,
    /// Optional cap on the global gradient norm.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 1e-4,
            decay_factor: 0.8,
            decay_every: 10,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 100,
            clouds_per_batch: 10,
            points_f: 256,
            points_h: 256,
            grad_clip: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.lr0.is_finite() && self.lr0 >= 0.0) {
            return bad(format!("lr0 must be a nonnegative real, got {}", self.lr0));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad(format!(
                "decay factor must be in (0, 1], got {}",
                self.decay_factor
            ));
        }
        if self.decay_every == 0 {
            return bad("decay interval must be at least one epoch".into());
        }
        for (name, v) in [("beta1", self.adam_beta1), ("beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("adam {name} must be in [0, 1), got {v}"));
            }
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return bad(format!("adam eps must be positive, got {}", self.adam_eps));
        }
        if self.clouds_per_batch == 0 {
            return bad("batch size must be at least one cloud".into());
        }
        if self.points_f == 0 || self.points_h == 0 {
            return bad("both per-cloud views need at least one point".into());
        }
        if let Some(c) = self.grad_clip {
            if !(c.is_finite() && c > 0.0) {
                return bad(format!("gradient clip must be positive, got {c}"));
            }
        }
        Ok(())
    }

    /// Stepped decay: `lr0 · factor^⌊epoch / every⌋`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr0 * self.decay_factor.powi((epoch / self.decay_every) as i32)
    }
}

/// Adam state, one moment pair per parameter tensor (same order as the
/// model's parameter set). Moments are stored at model precision; the
/// update arithmetic runs in f64 either way, so a reloaded state continues
/// bitwise identically.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<S> {
    pub t: u64,
    pub m: Vec<Vec<S>>,
    pub v: Vec<Vec<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(params: &ParamSet<S>) -> Self {
        let zeros: Vec<Vec<S>> = params
            .iter()
            .map(|p| vec![S::zero(); p.data.len()])
            .collect();
        Adam {
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One bias-corrected update. `grads` must match the parameter layout.
    pub fn step(
        &mut self,
        params: &mut ParamSet<S>,
        grads: &[Vec<f64>],
        cfg: &TrainConfig,
        lr: f64,
    ) -> Result<()> {
        if grads.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::ShapeMismatch {
                op: "adam step",
                lhs: vec![params.len()],
                rhs: vec![grads.len()],
            });
        }
        self.t += 1;
        let (b1, b2, eps) = (cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for (i, p) in params.iter_mut().enumerate() {
            if grads[i].len() != p.data.len() {
                return Err(Error::ShapeMismatch {
                    op: "adam step",
                    lhs: vec![p.data.len()],
                    rhs: vec![grads[i].len()],
                });
            }
            for (k, g) in grads[i].iter().enumerate() {
                let m = b1 * self.m[i][k].to_f64() + (1.0 - b1) * g;
                let v = b2 * self.v[i][k].to_f64() + (1.0 - b2) * g * g;
                self.m[i][k] = S::from_f64(m);
                self.v[i][k] = S::from_f64(v);
                let update = lr * (m / bc1) / ((v / bc2).sqrt() + eps);
                let newp = p.data[k].to_f64() - update;
                if !newp.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("adam step {} on parameter {}", self.t, p.name),
                    });
                }
                p.data[k] = S::from_f64(newp);
            }
        }
        Ok(())
    }
}

/// One line of the loss log. NLLs are negated log-likelihoods; the point
/// term is per scored point, the embedding term per cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub mean_loss: f64,
    pub mean_point_nll: f64,
    pub mean_embed_nll: f64,
}

impl EpochStats {
    pub fn log_header() -> &'static str {
        "epoch\tlr\tmean_loss\tmean_point_nll\tmean_embed_nll"
    }

    pub fn log_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.epoch, self.lr, self.mean_loss, self.mean_point_nll, self.mean_embed_nll
        )
    }
}

/// Owns the model plus everything needed to continue training after a
/// checkpoint reload: optimizer moments, epoch counter, RNG.
pub struct Trainer<S: Scalar> {
    pub model: FlowModel<S>,
    pub config: TrainConfig,
    pub adam: Adam<S>,
    pub rng: ChaCha8Rng,
    pub next_epoch: usize,
}

impl<S: Scalar> std::fmt::Debug for Trainer<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trainer")
            .field("next_epoch", &self.next_epoch)
            .field("adam_t", &self.adam.t)
            .field("n_params", &self.model.params.n_scalars())
            .finish_non_exhaustive()
    }
}

impl<S: Scalar> Trainer<S> {
    pub fn new(model: FlowModel<S>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = Adam::new(&model.params);
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Trainer {
            model,
            config,
            adam,
            rng,
            next_epoch: 0,
        })
    }

    /// Runs one pass over `dataset`: shuffles cloud order, draws fresh
    /// disjoint scored/encoder views per cloud, takes one Adam step per
    /// batch of clouds, and reports epoch means.
    pub fn epoch(&mut self, dataset: &[PointCloud]) -> Result<EpochStats> {
        if dataset.is_empty() {
            return Err(Error::Data("training dataset is empty".into()));
        }
        let need = self.config.points_f + self.config.points_h;
        for (i, cloud) in dataset.iter().enumerate() {
            if cloud.len() < need {
                return Err(Error::Data(format!(
                    "cloud {i} has {} points, need at least {need} to draw \
                     disjoint scored/encoder views",
                    cloud.len()
                )));
            }
        }
        let epoch = self.next_epoch;
        let lr = self.config.lr_at(epoch);

        let mut order: Vec<usize> = (0..dataset.len()).collect();
        for i in (1..order.len()).rev() {
            let j = self.rng.random_range(0..=i);
            order.swap(i, j);
        }

        let mut sum_loss = 0.0;
        let mut sum_point_nll = 0.0;
        let mut sum_embed_nll = 0.0;
        let sizes: Vec<usize> = self.model.params.iter().map(|p| p.data.len()).collect();

        for batch in order.chunks(self.config.clouds_per_batch) {
            let mut acc: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
            for &ci in batch {
                let (loss, plogp, elogp, grads) = self
                    .cloud_gradients(&dataset[ci])
                    .map_err(|e| locate(e, epoch, ci))?;
                sum_loss += loss;
                sum_point_nll += -plogp;
                sum_embed_nll += -elogp;
                for (a, g) in acc.iter_mut().zip(&grads) {
                    for (av, &gv) in a.iter_mut().zip(g) {
                        *av += gv.to_f64();
                    }
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for a in &mut acc {
                for v in a.iter_mut() {
                    *v *= scale;
                }
            }
            if let Some(max_norm) = self.config.grad_clip {
                clip_global_norm(&mut acc, max_norm);
            }
            self.adam.step(&mut self.model.params, &acc, &self.config, lr)?;
        }

        self.next_epoch += 1;
        let n = dataset.len() as f64;
        Ok(EpochStats {
            epoch,
            lr,
            mean_loss: sum_loss / n,
            mean_point_nll: sum_point_nll / (n * self.config.points_f as f64),
            mean_embed_nll: sum_embed_nll / n,
        })
    }

    /// Loss, the two log-likelihood terms, and parameter gradients for one
    /// cloud's fresh view split.
    fn cloud_gradients(
        &mut self,
        cloud: &PointCloud,
    ) -> Result<(f64, f64, f64, Vec<Vec<S>>)> {
        let (xf, xh) = split_fh(
            cloud,
            self.config.points_f,
            self.config.points_h,
            &mut self.rng,
        )?;
        let mut tape = Tape::new();
        let binding = bind(&mut tape, &self.model.params, true)?;
        let f = tape.leaf(xf.to_flat::<S>(), vec![xf.len(), 3], false)?;
        let h = tape.leaf(xh.to_flat::<S>(), vec![xh.len(), 3], false)?;
        let (loss, plogp, elogp) = self.model.build_loss(&mut tape, &binding, f, h)?;
        let loss_v = tape.scalar_value(loss).to_f64();
        if !loss_v.is_finite() {
            return Err(Error::NonFinite {
                context: "training loss".into(),
            });
        }
        tape.backward(loss)?;
        let grads = gradients(&tape, &binding, &self.model.params);
        Ok((
            loss_v,
            tape.scalar_value(plogp).to_f64(),
            tape.scalar_value(elogp).to_f64(),
            grads,
        ))
    }

    /// Trains from `next_epoch` through `config.epochs`, invoking the
    /// callback once per epoch (for logging and periodic checkpoints).
    pub fn run(
        &mut self,
        dataset: &[PointCloud],
        mut per_epoch: impl FnMut(&mut Trainer<S>, &EpochStats) -> Result<()>,
    ) -> Result<()> {
        while self.next_epoch < self.config.epochs {
            let stats = self.epoch(dataset)?;
            per_epoch(self, &stats)?;
        }
        Ok(())
    }
}

/// Tags a per-cloud failure with where in the run it happened.
fn locate(e: Error, epoch: usize, cloud: usize) -> Error {
    match e {
        Error::NonFinite { context } => Error::NonFinite {
            context: format!("epoch {epoch}, cloud {cloud}: {context}"),
        },
        other => other,
    }
}

fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) {
    let sq: f64 = grads
        .iter()
        .flat_map(|g| g.iter())
        .map(|v| v * v)
        .sum();
    let norm = sq.sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.iter_mut() {
                *v *= scale;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_dataset, ShapeFamily};
    use crate::model::ModelConfig;

    fn toy_trainer(seed: u64) -> Trainer<f64> {
        let model = FlowModel::<f64>::new(ModelConfig::toy(seed)).unwrap();
        let config = TrainConfig {
            epochs: 4,
            clouds_per_batch: 2,
            points_f: 8,
            points_h: 8,
            lr0: 1e-3,
            seed,
            ..TrainConfig::default()
        };
        Trainer::new(model, config).unwrap()
    }

    #[test]
    fn lr_schedule_matches_the_stepped_decay_formula() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at(0), 1e-4);
        assert_eq!(cfg.lr_at(9), 1e-4);
        assert_eq!(cfg.lr_at(10), 0.8e-4);
        assert!((cfg.lr_at(25) - 0.64e-4).abs() < 1e-18);
    }

    #[test]
    fn config_validation_catches_bad_fields() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        for broken in [
            TrainConfig { lr0: -1.0, ..ok.clone() },
            TrainConfig { lr0: f64::NAN, ..ok.clone() },
            TrainConfig { decay_factor: 0.0, ..ok.clone() },
            TrainConfig { decay_factor: 1.5, ..ok.clone() },
            TrainConfig { decay_every: 0, ..ok.clone() },
            TrainConfig { adam_beta1: 1.0, ..ok.clone() },
            TrainConfig { adam_eps: 0.0, ..ok.clone() },
            TrainConfig { clouds_per_batch: 0, ..ok.clone() },
            TrainConfig { points_f: 0, ..ok.clone() },
            TrainConfig { grad_clip: Some(0.0), ..ok.clone() },
        ] {
            assert!(broken.validate().is_err(), "{broken:?} accepted");
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut ps = ParamSet::<f64>::new();
        ps.alloc("w", vec![2], vec![0.5, -0.25]);
        let mut adam = Adam::new(&ps);
        let cfg = TrainConfig::default();
        adam.step(&mut ps, &[vec![0.0, 0.0]], &cfg, 0.1).unwrap();
        assert_eq!(ps.flatten(), vec![0.5, -0.25]);
        assert_eq!(adam.m[0], vec![0.0, 0.0]);
        assert_eq!(adam.v[0], vec![0.0, 0.0]);
    }

    #[test]
    fn first_adam_step_moves_against_the_gradient_sign() {
        // for a single scalar, bias correction makes m̂/√v̂ = g/|g|, so the
        // first update is −lr·g/(|g| + ~eps)
        let mut ps = ParamSet::<f64>::new();
        ps.alloc("w", vec![1], vec![1.0]);
        let mut adam = Adam::new(&ps);
        let cfg = TrainConfig::default();
        let g = 3.0;
        adam.step(&mut ps, &[vec![g]], &cfg, 0.01).unwrap();
        let m_hat = (1.0 - cfg.adam_beta1) * g / (1.0 - cfg.adam_beta1);
        let v_hat = (1.0 - cfg.adam_beta2) * g * g / (1.0 - cfg.adam_beta2);
        let want = 1.0 - 0.01 * m_hat / (v_hat.sqrt() + cfg.adam_eps);
        assert!((ps.flatten()[0] - want).abs() < 1e-15);
        // ... which is within an eps-sized whisker of a unit step downhill
        assert!((ps.flatten()[0] - (1.0 - 0.01)).abs() < 1e-8);
    }

    #[test]
    fn adam_rejects_mismatched_gradient_layouts() {
        let mut ps = ParamSet::<f64>::new();
        ps.alloc("w", vec![2], vec![0.0, 0.0]);
        let mut adam = Adam::new(&ps);
        let cfg = TrainConfig::default();
        assert!(adam.step(&mut ps, &[], &cfg, 0.1).is_err());
        assert!(adam.step(&mut ps, &[vec![1.0]], &cfg, 0.1).is_err());
    }

    #[test]
    fn training_reduces_the_loss_on_a_toy_dataset() {
        let data = synth_dataset(ShapeFamily::TwoClusters, 4, 24, 0.01, 11).unwrap();
        let mut trainer = toy_trainer(3);
        trainer.config.epochs = 30;
        trainer.config.lr0 = 3e-3;
        let first = trainer.epoch(&data).unwrap();
        let mut last = first;
        while trainer.next_epoch < trainer.config.epochs {
            last = trainer.epoch(&data).unwrap();
        }
        assert!(last.mean_loss.is_finite());
        assert!(
            last.mean_loss < first.mean_loss,
            "loss went {} -> {}",
            first.mean_loss,
            last.mean_loss
        );
    }

    #[test]
    fn identical_seeds_train_bitwise_identically() {
        let data = synth_dataset(ShapeFamily::Sphere, 3, 20, 0.01, 12).unwrap();
        let run = |seed| {
            let mut t = toy_trainer(seed);
            let mut lines = Vec::new();
            for _ in 0..3 {
                lines.push(t.epoch(&data).unwrap().log_line());
            }
            (lines, t.model.params.flatten())
        };
        let (lines_a, params_a) = run(7);
        let (lines_b, params_b) = run(7);
        assert_eq!(lines_a, lines_b);
        assert_eq!(params_a, params_b);
        let (_, params_c) = run(8);
        assert_ne!(params_a, params_c);
    }

    #[test]
    fn zero_learning_rate_trains_without_moving_parameters() {
        let data = synth_dataset(ShapeFamily::Sphere, 2, 20, 0.01, 13).unwrap();
        let mut trainer = toy_trainer(5);
        trainer.config.lr0 = 0.0;
        let before = trainer.model.params.flatten();
        trainer.epoch(&data).unwrap();
        trainer.epoch(&data).unwrap();
        assert_eq!(before, trainer.model.params.flatten());
    }

    #[test]
    fn undersized_clouds_are_rejected_by_name() {
        let data = synth_dataset(ShapeFamily::Sphere, 2, 10, 0.01, 14).unwrap();
        let mut trainer = toy_trainer(6); // wants 8 + 8 = 16 points
        let err = trainer.epoch(&data).unwrap_err().to_string();
        assert!(err.contains("10 points") && err.contains("16"), "{err}");
    }

    #[test]
    fn gradient_clipping_caps_the_global_norm() {
        let mut grads = vec![vec![3.0, 0.0], vec![0.0, 4.0]];
        clip_global_norm(&mut grads, 1.0);
        let norm: f64 = grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        assert!((grads[0][0] - 0.6).abs() < 1e-12);
        assert!((grads[1][1] - 0.8).abs() < 1e-12);

        let mut small = vec![vec![0.1]];
        clip_global_norm(&mut small, 1.0);
        assert_eq!(small[0][0], 0.1);
    }

    #[test]
    fn epoch_stats_format_as_five_tab_fields() {
        let s = EpochStats {
            epoch: 3,
            lr: 1e-4,
            mean_loss: 10.5,
            mean_point_nll: 2.5,
            mean_embed_nll: 7.25,
        };
        assert_eq!(s.log_line(), "3\t0.0001\t10.5\t2.5\t7.25");
        assert_eq!(
            EpochStats::log_header().split('\t').count(),
            s.log_line().split('\t').count()
        );
    }
}
