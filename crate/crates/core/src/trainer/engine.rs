use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::checkpoint::{save_checkpoint, AdamSnapshot};
use super::{should_continue, OptimConfig, TrainError, TrainState, TrainerKind};
use crate::models::{ModelConfig, ModelError, NccModel, VocabSizes};
use crate::ncore::{clip_grad_norm, AdamState, Gradients};

/// What the trainer needs from a task: a sample count and the loss and
/// gradient of a group of samples.
///
/// A batch is split into *work units* whose summed gradients equal the batch
/// gradient. Units are computed independently (possibly on different
/// threads) and reduced in unit order, so results never depend on the
/// number of workers.
pub trait Objective: Sync {
    fn num_samples(&self) -> usize;

    /// Partition of `batch` (sample indices) into work units. The default
    /// makes every sample its own unit; objectives whose loss couples the
    /// samples of a batch return the batch whole.
    fn work_units(&self, batch: &[usize]) -> Vec<Vec<usize>> {
        batch.iter().map(|&i| vec![i]).collect()
    }

    /// Adds the gradient of the unit's summed loss into `grads` and returns
    /// `(loss_sum, weight)`; the update uses `Σ grads / Σ weight`.
    fn unit_loss_grad(&self, model: &dyn NccModel, unit: &[usize], grads: &mut Gradients)
        -> Result<(f64, f64), ModelError>;

    /// Mean loss on held-out data, if the objective has any.
    fn valid_loss(&self, _model: &dyn NccModel) -> Result<Option<f64>, ModelError> {
        Ok(None)
    }

    /// Count-based models are estimated in one pass instead of by gradient
    /// descent. Returns `true` when the model was fitted this way.
    fn fit(&self, _model: &mut dyn NccModel) -> Result<bool, ModelError> {
        Ok(false)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub optim: OptimConfig,
    pub batch_size: usize,
    pub trainer: TrainerKind,
    /// Written at every epoch end and at termination.
    pub checkpoint_path: Option<PathBuf>,
    pub model_config: ModelConfig,
    pub vocab_sizes: VocabSizes,
    pub config_digest: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MinLr,
    MaxEpoch,
    MaxUpdate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    /// Mean loss of every applied update, in order.
    pub update_losses: Vec<f64>,
    /// Pre-clipping gradient norm of every applied update.
    pub grad_norms: Vec<f64>,
    /// Token-weighted mean training loss of every epoch completed in this run.
    pub epoch_losses: Vec<f64>,
    pub valid_losses: Vec<Option<f64>>,
    pub num_updates: u64,
    pub wall_time_secs: f64,
    pub checkpoint: Option<PathBuf>,
    pub stop_reason: StopReason,
    pub final_state: TrainState,
}

fn stop_reason(state: &TrainState, cfg: &OptimConfig) -> StopReason {
    if state.lr <= cfg.min_lr {
        StopReason::MinLr
    } else if state.num_updates >= cfg.max_update {
        StopReason::MaxUpdate
    } else {
        StopReason::MaxEpoch
    }
}

/// Accumulation windows of one epoch: the samples are shuffled with an RNG
/// determined by `(seed, epoch)`, cut into batches of `batch_size`, and
/// grouped `update_freq` batches at a time.
pub fn epoch_windows(n: usize, seed: u64, epoch: u64, batch_size: usize, update_freq: usize) -> Vec<Vec<Vec<usize>>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    order.shuffle(&mut rng);
    let batches: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
    batches.chunks(update_freq.max(1)).map(<[Vec<usize>]>::to_vec).collect()
}

type UnitResult = Result<(f64, f64, Gradients), ModelError>;

fn unit_result(model: &dyn NccModel, objective: &dyn Objective, unit: &[usize]) -> UnitResult {
    let mut g = model.params().zero_grads();
    let (loss, weight) = objective.unit_loss_grad(model, unit, &mut g)?;
    Ok((loss, weight, g))
}

/// Gradients of every unit, computed on `workers` threads over contiguous
/// slices and summed in unit order.
fn window_gradients(
    model: &dyn NccModel,
    objective: &dyn Objective,
    units: &[Vec<usize>],
    workers: usize,
) -> Result<(f64, f64, Gradients), ModelError> {
    let results: Vec<UnitResult> = if workers <= 1 || units.len() <= 1 {
        units.iter().map(|u| unit_result(model, objective, u)).collect()
    } else {
        let per_worker = units.len().div_ceil(workers);
        std::thread::scope(|s| {
            let handles: Vec<_> = units
                .chunks(per_worker)
                .map(|slice| s.spawn(move || slice.iter().map(|u| unit_result(model, objective, u)).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("gradient worker panicked"))
                .collect()
        })
    };
    let mut total = model.params().zero_grads();
    let (mut loss, mut weight) = (0.0, 0.0);
    for r in results {
        let (l, w, g) = r?;
        loss += l;
        weight += w;
        total.add_assign(&g);
    }
    Ok((loss, weight, total))
}

/// Single-threaded variant: every unit accumulates straight into one buffer.
fn simple_gradients(
    model: &dyn NccModel,
    objective: &dyn Objective,
    units: &[Vec<usize>],
) -> Result<(f64, f64, Gradients), ModelError> {
    let mut total = model.params().zero_grads();
    let (mut loss, mut weight) = (0.0, 0.0);
    for u in units {
        let (l, w) = objective.unit_loss_grad(model, u, &mut total)?;
        loss += l;
        weight += w;
    }
    Ok((loss, weight, total))
}

/// Runs the training loop until [`should_continue`] is false.
///
/// `resume` continues from a saved state (and optimizer moments); the run
/// then follows exactly the trajectory an uninterrupted run would.
pub fn train(
    model: &mut dyn NccModel,
    objective: &dyn Objective,
    opts: &TrainOptions,
    resume: Option<(TrainState, Option<AdamSnapshot>)>,
) -> Result<TrainReport, TrainError> {
    let started = Instant::now();
    let mut optim = opts.optim.clone();
    if opts.trainer == TrainerKind::Simple {
        optim.workers = 1;
        optim.update_freq = 1;
    }
    let n = objective.num_samples();
    if n == 0 {
        return Err(TrainError::DataMissing("no training samples".into()));
    }
    if opts.batch_size == 0 {
        return Err(TrainError::InvalidConfig("batch_size must be at least 1".into()));
    }
    let (mut state, adam) = match resume {
        Some((state, adam)) => (state, adam),
        None => {
            optim.validate()?;
            (TrainState::new(&optim), None)
        }
    };
    let mut adam = match adam {
        Some(snapshot) => snapshot.into_state(state.lr),
        None => AdamState::new(model.params(), state.lr),
    };
    let mut report = TrainReport {
        update_losses: Vec::new(),
        grad_norms: Vec::new(),
        epoch_losses: Vec::new(),
        valid_losses: Vec::new(),
        num_updates: state.num_updates,
        wall_time_secs: 0.0,
        checkpoint: opts.checkpoint_path.clone(),
        stop_reason: StopReason::MaxEpoch,
        final_state: state.clone(),
    };
    let save = |model: &dyn NccModel, state: &TrainState, adam: Option<&AdamState>| -> Result<(), TrainError> {
        if let Some(path) = &opts.checkpoint_path {
            save_checkpoint(path, model, &opts.model_config, opts.vocab_sizes, state, adam, &opts.config_digest)?;
        }
        Ok(())
    };

    if should_continue(&state, &optim) && objective.fit(model)? {
        state.epoch += 1;
        let valid = objective.valid_loss(model)?;
        report.valid_losses.push(valid);
        state.best_valid_loss = valid;
        log::info!("fitted {} in one pass", model.kind());
        save(model, &state, None)?;
        report.stop_reason = stop_reason(&state, &optim);
        report.final_state = state;
        report.wall_time_secs = started.elapsed().as_secs_f64();
        return Ok(report);
    }

    'epochs: while should_continue(&state, &optim) {
        let windows = epoch_windows(n, state.seed, state.epoch, opts.batch_size, optim.update_freq);
        while (state.cursor as usize) < windows.len() {
            if !should_continue(&state, &optim) {
                break 'epochs;
            }
            let units: Vec<Vec<usize>> = windows[state.cursor as usize]
                .iter()
                .flat_map(|batch| objective.work_units(batch))
                .collect();
            if units.is_empty() {
                state.cursor += 1;
                continue;
            }
            let (loss, weight, mut grads) = match opts.trainer {
                TrainerKind::Default => window_gradients(&*model, objective, &units, optim.workers)?,
                TrainerKind::Simple => simple_gradients(&*model, objective, &units)?,
            };
            if !loss.is_finite() || !grads.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch: state.epoch,
                    update: state.num_updates,
                });
            }
            if weight <= 0.0 {
                // Nothing to learn from (e.g. only empty sequences).
                state.cursor += 1;
                continue;
            }
            grads.scale(1.0 / weight);
            let norm = clip_grad_norm(&mut grads, optim.clip_norm);
            let params = model.params_mut();
            params.zero_grad();
            params.accumulate(&grads);
            adam.lr = state.lr;
            adam.update(params);

            state.num_updates += 1;
            state.cursor += 1;
            state.epoch_loss_sum += loss;
            state.epoch_weight += weight;
            report.update_losses.push(loss / weight);
            report.grad_norms.push(norm);
        }

        state.epoch += 1;
        state.cursor = 0;
        state.lr *= optim.lr_shrink;
        let valid = objective.valid_loss(&*model)?;
        if let Some(v) = valid {
            if state.best_valid_loss.is_none_or(|best| v < best) {
                state.best_valid_loss = Some(v);
            }
        }
        let epoch_loss = if state.epoch_weight > 0.0 {
            state.epoch_loss_sum / state.epoch_weight
        } else {
            0.0
        };
        state.epoch_loss_sum = 0.0;
        state.epoch_weight = 0.0;
        log::info!(
            "epoch {} | loss {:.4} | valid {} | lr {:.3e} | updates {}",
            state.epoch,
            epoch_loss,
            valid.map_or("-".to_string(), |v| format!("{v:.4}")),
            state.lr,
            state.num_updates
        );
        report.epoch_losses.push(epoch_loss);
        report.valid_losses.push(valid);
        save(&*model, &state, Some(&adam))?;
    }
    save(&*model, &state, Some(&adam))?;

    report.stop_reason = stop_reason(&state, &optim);
    report.num_updates = state.num_updates;
    report.final_state = state;
    report.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn windows_cover_every_sample_once() {
        let w = epoch_windows(10, 3, 0, 3, 2);
        assert_eq!(w.len(), 2);
        let mut all: Vec<usize> = w.iter().flatten().flatten().copied().collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn accumulation_windows_match_larger_batches() {
        let small: Vec<Vec<usize>> = epoch_windows(23, 5, 2, 4, 2)
            .into_iter()
            .map(|w| w.concat())
            .collect();
        let large: Vec<Vec<usize>> = epoch_windows(23, 5, 2, 8, 1)
            .into_iter()
            .map(|w| w.concat())
            .collect();
        assert_eq!(small, large);
        assert_ne!(epoch_windows(23, 5, 2, 8, 1), epoch_windows(23, 5, 3, 8, 1));
    }
}
