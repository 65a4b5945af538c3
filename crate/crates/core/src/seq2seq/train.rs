use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::params::{Adam, Grads};
use super::{EpochLoss, ModelError, Schedule, Seq2Seq, TrainConfig, TrainingPair};
use crate::rng::seeded;

/// Learning rate for the zero-based optimizer `step` out of `total_steps`.
///
/// `LinearDecay` ramps linearly from 0 to the peak over the first
/// `warmup_fraction` of steps and then decays linearly to 0 at `total_steps`.
pub fn learning_rate_at(cfg: &TrainConfig, step: usize, total_steps: usize) -> f64 {
    match cfg.schedule {
        Schedule::Constant => cfg.learning_rate,
        Schedule::LinearDecay => {
            let warmup = libm::round(cfg.warmup_fraction * total_steps as f64) as usize;
            let factor = if step < warmup {
                step as f64 / warmup as f64
            } else {
                let remaining = total_steps.saturating_sub(step) as f64;
                let span = total_steps.saturating_sub(warmup).max(1) as f64;
                (remaining / span).max(0.0)
            };
            cfg.learning_rate * factor
        }
    }
}

impl Seq2Seq {
    /// Mini-batch Adam on mean token cross-entropy. Returns the mean
    /// per-pair training loss of every epoch.
    pub fn train(
        &mut self,
        pairs: &[TrainingPair],
        cfg: &TrainConfig,
    ) -> Result<Vec<EpochLoss>, ModelError> {
        cfg.validate()?;
        if pairs.is_empty() {
            return Err(ModelError::EmptyTrainingSet);
        }
        for p in pairs {
            self.check_pair(&p.source, &p.target)?;
        }
        let mut rng = seeded(cfg.seed);
        let mut adam = Adam::new(self.params());
        let steps_per_epoch = pairs.len().div_ceil(cfg.batch_size);
        let total_steps = steps_per_epoch * cfg.epochs;
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        let mut history = Vec::with_capacity(cfg.epochs);
        let mut step = 0;

        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            let mut lr = cfg.learning_rate;
            for batch in order.chunks(cfg.batch_size) {
                let mut grads = self.params().zero_grads();
                for &i in batch {
                    let pair = &pairs[i];
                    if pair.target.is_empty() {
                        continue;
                    }
                    let mut dropout_rng = seeded(rng.gen());
                    let (g, loss) = self.loss_graph(&pair.source, &pair.target, Some(&mut dropout_rng))?;
                    let value = g.value(loss).data[0];
                    if !value.is_finite() {
                        return Err(ModelError::NonFiniteLoss { epoch, step, pair: i });
                    }
                    epoch_loss += value;
                    g.backward(loss, &mut grads);
                }
                grads.scale(1.0 / batch.len() as f64);
                if let Some(clip) = cfg.grad_clip {
                    let norm = grads.global_norm();
                    if norm > clip {
                        grads.scale(clip / norm);
                    }
                }
                lr = learning_rate_at(cfg, step, total_steps);
                adam.update(self.params_mut(), &grads, lr);
                step += 1;
            }
            history.push(EpochLoss {
                epoch: epoch + 1,
                mean_loss: epoch_loss / pairs.len() as f64,
                learning_rate: lr,
            });
        }
        Ok(history)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheck {
    pub max_relative_error: f64,
    pub coordinates: usize,
}

/// Compares backpropagated gradients with central finite differences on
/// `coordinates` randomly chosen parameter entries.
///
/// The relative error of one entry is `|a - n| / max(|a|, |n|, 1e-6)`; the
/// floor keeps entries whose true gradient is essentially zero from being
/// judged on floating-point noise alone.
pub fn gradient_check(
    model: &Seq2Seq,
    sample: &TrainingPair,
    epsilon: f64,
    coordinates: usize,
    seed: u64,
) -> Result<GradientCheck, ModelError> {
    gradient_check_with(model, sample, epsilon, coordinates, seed, |_| {})
}

/// [`gradient_check`] with a hook that may tamper with the analytic
/// gradients before comparison.
pub fn gradient_check_with(
    model: &Seq2Seq,
    sample: &TrainingPair,
    epsilon: f64,
    coordinates: usize,
    seed: u64,
    tamper: impl FnOnce(&mut Grads),
) -> Result<GradientCheck, ModelError> {
    let mut grads = model.params().zero_grads();
    {
        let (g, loss) = model.loss_graph(&sample.source, &sample.target, None)?;
        g.backward(loss, &mut grads);
    }
    tamper(&mut grads);

    let mut rng = seeded(seed);
    let sizes: Vec<usize> = model.params().iter().map(|p| p.value.data.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut picks: Vec<usize> = (0..total).collect();
    picks.shuffle(&mut rng);
    picks.truncate(coordinates.min(total));
    picks.sort_unstable();

    let locate = |mut flat: usize| -> (usize, usize) {
        for (p, &n) in sizes.iter().enumerate() {
            if flat < n {
                return (p, flat);
            }
            flat -= n;
        }
        unreachable!("flat index within total")
    };

    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for &flat in &picks {
        let (p, i) = locate(flat);
        let original = probe.params().get(p).value.data[i];
        probe.params_mut().get_mut(p).value.data[i] = original + epsilon;
        let plus = probe.loss(&sample.source, &sample.target)?;
        probe.params_mut().get_mut(p).value.data[i] = original - epsilon;
        let minus = probe.loss(&sample.source, &sample.target)?;
        probe.params_mut().get_mut(p).value.data[i] = original;

        let numeric = (plus - minus) / (2.0 * epsilon);
        let analytic = grads.get(p).data[i];
        let denom = analytic.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic - numeric).abs() / denom);
    }
    Ok(GradientCheck {
        max_relative_error: worst,
        coordinates: picks.len(),
    })
}
