//! Training loop: seeded mini-batch shuffling, Adam, halve-on-plateau
//! learning rate schedule and best-validation-epoch selection.

use super::net::{weight_init, FusionModel, Normalization};
use super::{FusionError, NetworkConfig};
use crate::frames::SampleTensor;
use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Epochs without validation improvement before the rate halves.
    pub plateau_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            lr0: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            plateau_patience: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
}

/// Adam state, kept so interrupted trainings can resume.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn update(&mut self, params: &mut [f64], grads: &[f64], cfg: &TrainConfig, lr: f64) {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - cfg.beta1.powf(t);
        let bc2 = 1.0 - cfg.beta2.powf(t);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grads[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
}

fn fit_normalization(samples: &[&SampleTensor], cfg: &NetworkConfig) -> Normalization {
    let nf = cfg.concat_features();
    let nd = cfg.dims;
    let mut norm = Normalization::identity(nf, nd);
    // Standardize position features only; directions (odd feature
    // indices) are already unit scale.
    for f in (0..nf).step_by(2) {
        for d in 0..nd {
            let k = f * nd + d;
            let mut sum = 0.0;
            let mut count = 0usize;
            for s in samples {
                for t in 0..cfg.frames {
                    sum += s.values[[t, f, d]];
                    count += 1;
                }
            }
            let mean = sum / count as f64;
            let mut var = 0.0;
            for s in samples {
                for t in 0..cfg.frames {
                    let dv = s.values[[t, f, d]] - mean;
                    var += dv * dv;
                }
            }
            let sd = (var / count as f64).sqrt();
            norm.mean[k] = mean;
            norm.sd[k] = if sd > 1e-9 { sd } else { 1.0 };
        }
    }
    norm
}

fn truth_matrix(samples: &[&SampleTensor]) -> Array2<f64> {
    let mut y = Array2::zeros((samples.len(), 3));
    for (i, s) in samples.iter().enumerate() {
        let l = s.label.expect("training sample must be labeled");
        y[[i, 0]] = l.x;
        y[[i, 1]] = l.y;
        y[[i, 2]] = l.z;
    }
    y
}

fn check_user_disjoint(
    train: &[&SampleTensor],
    val: &[&SampleTensor],
) -> Result<(), FusionError> {
    let train_users: HashSet<&str> = train
        .iter()
        .filter_map(|s| s.meta.as_ref().map(|m| m.user_id.as_str()))
        .collect();
    for s in val {
        if let Some(m) = &s.meta {
            if train_users.contains(m.user_id.as_str()) {
                return Err(FusionError::SplitLeak(m.user_id.clone()));
            }
        }
    }
    Ok(())
}

/// Trains a fresh model and returns the parameters of the epoch with
/// the lowest validation loss. Deterministic under the config seed.
pub fn train(
    train_set: &[&SampleTensor],
    val_set: &[&SampleTensor],
    net_cfg: &NetworkConfig,
    cfg: &TrainConfig,
) -> Result<(FusionModel, TrainHistory), FusionError> {
    let mut model = weight_init(net_cfg, cfg.seed);
    let mut adam = AdamState::new(model.params.n_params());
    train_loop(&mut model, &mut adam, train_set, val_set, cfg, 0)
}

/// Continues training an existing model with existing optimizer state.
/// `epoch_offset` numbers the new history rows after the old ones.
pub fn train_resume(
    model: &mut FusionModel,
    adam: &mut AdamState,
    train_set: &[&SampleTensor],
    val_set: &[&SampleTensor],
    cfg: &TrainConfig,
    epoch_offset: usize,
) -> Result<(FusionModel, TrainHistory), FusionError> {
    train_loop(model, adam, train_set, val_set, cfg, epoch_offset)
}

fn train_loop(
    model: &mut FusionModel,
    adam: &mut AdamState,
    train_set: &[&SampleTensor],
    val_set: &[&SampleTensor],
    cfg: &TrainConfig,
    epoch_offset: usize,
) -> Result<(FusionModel, TrainHistory), FusionError> {
    if train_set.is_empty() {
        return Err(FusionError::EmptySplit("train"));
    }
    if val_set.is_empty() {
        return Err(FusionError::EmptySplit("validation"));
    }
    check_user_disjoint(train_set, val_set)?;

    if epoch_offset == 0 {
        model.norm = fit_normalization(train_set, &model.cfg);
    }
    let train_inputs: Vec<Array3<f64>> = train_set
        .iter()
        .map(|s| model.prepare_input(&s.values))
        .collect::<Result<_, _>>()?;
    let val_inputs: Vec<Array3<f64>> = val_set
        .iter()
        .map(|s| model.prepare_input(&s.values))
        .collect::<Result<_, _>>()?;
    let train_truth = truth_matrix(train_set);
    let val_truth = truth_matrix(val_set);

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed);
    let mut lr = cfg.lr0;
    let mut best_val = f64::INFINITY;
    let mut best_params = model.params.clone();
    let mut best_epoch = epoch_offset;
    let mut since_improve = 0usize;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for e in 0..cfg.epochs {
        let epoch = epoch_offset + e;
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut n_batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let inputs: Vec<Array3<f64>> =
                chunk.iter().map(|&i| train_inputs[i].clone()).collect();
            let mut truth = Array2::zeros((chunk.len(), 3));
            for (r, &i) in chunk.iter().enumerate() {
                truth.row_mut(r).assign(&train_truth.row(i));
            }
            let (loss, grads) = model.forward_backward_batch(&inputs, &truth)?;
            loss_sum += loss;
            n_batches += 1;
            let mut flat_params = model.params.to_flat();
            let flat_grads = grads.to_flat();
            adam.update(&mut flat_params, &flat_grads, cfg, lr);
            model.params.from_flat(&flat_params);
        }
        let train_loss = loss_sum / n_batches as f64;
        let val_loss = validation_loss(model, &val_inputs, &val_truth)?;
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best_params = model.params.clone();
            best_epoch = epoch;
            since_improve = 0;
        } else {
            since_improve += 1;
            if since_improve >= cfg.plateau_patience {
                lr *= 0.5;
                since_improve = 0;
            }
        }
    }
    let best_model = FusionModel {
        cfg: model.cfg.clone(),
        params: best_params,
        norm: model.norm.clone(),
    };
    Ok((
        best_model,
        TrainHistory {
            epochs: history,
            best_epoch,
        },
    ))
}

fn validation_loss(
    model: &FusionModel,
    inputs: &[Array3<f64>],
    truth: &Array2<f64>,
) -> Result<f64, FusionError> {
    use rayon::prelude::*;
    let preds: Vec<ndarray::Array1<f64>> = inputs
        .par_iter()
        .map(|x| model.forward_sample(x).0)
        .collect();
    let mut p = Array2::zeros((inputs.len(), 3));
    for (i, row) in preds.iter().enumerate() {
        p.row_mut(i).assign(row);
    }
    super::loss::mad_loss(&p, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{SampleMeta, SampleTensor};
    use crate::geo::{CarVector, ReferenceType};
    use nalgebra::Vector3;
    use ndarray::Array3;
    use rand::Rng;

    fn synthetic_sample(rng: &mut ChaCha20Rng, user: &str) -> SampleTensor {
        // The eye-direction feature carries the answer; everything else
        // is noise. A working network reads it out easily.
        let dir = Vector3::new(
            rng.random_range(0.3..1.0),
            rng.random_range(-0.8..0.8),
            rng.random_range(-0.3..0.3),
        )
        .normalize();
        let mut values = Array3::zeros((36, 6, 3));
        for t in 0..36 {
            for f in 0..6 {
                for d in 0..3 {
                    values[[t, f, d]] = if f == 3 {
                        dir[d]
                    } else {
                        rng.random_range(-0.1..0.1)
                    };
                }
            }
        }
        SampleTensor {
            values,
            label: Some(CarVector::direction(dir)),
            meta: Some(SampleMeta {
                user_id: user.to_string(),
                pose_id: 1,
                roi_id: 0,
                ref_type: ReferenceType::Volume,
            }),
        }
    }

    fn make_sets(n_train: usize, n_val: usize) -> (Vec<SampleTensor>, Vec<SampleTensor>) {
        let mut rng = ChaCha20Rng::seed_from_u64(1234);
        let train: Vec<_> = (0..n_train).map(|_| synthetic_sample(&mut rng, "u0")).collect();
        let val: Vec<_> = (0..n_val).map(|_| synthetic_sample(&mut rng, "u1")).collect();
        (train, val)
    }

    fn quick_cfg() -> (NetworkConfig, TrainConfig) {
        (
            NetworkConfig::default().with_feature_maps(6),
            TrainConfig {
                epochs: 3,
                seed: 5,
                ..TrainConfig::default()
            },
        )
    }

    #[test]
    fn same_seed_identical_history() {
        let (train_s, val_s) = make_sets(12, 4);
        let tr: Vec<&SampleTensor> = train_s.iter().collect();
        let va: Vec<&SampleTensor> = val_s.iter().collect();
        let (ncfg, tcfg) = quick_cfg();
        let (_, h1) = train(&tr, &va, &ncfg, &tcfg).unwrap();
        let (_, h2) = train(&tr, &va, &ncfg, &tcfg).unwrap();
        assert_eq!(h1, h2);
    }

    #[test]
    fn best_epoch_minimizes_val_loss() {
        let (train_s, val_s) = make_sets(16, 6);
        let tr: Vec<&SampleTensor> = train_s.iter().collect();
        let va: Vec<&SampleTensor> = val_s.iter().collect();
        let (ncfg, mut tcfg) = quick_cfg();
        tcfg.epochs = 6;
        let (_, h) = train(&tr, &va, &ncfg, &tcfg).unwrap();
        let best = h.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        let at_best = h.epochs.iter().find(|e| e.epoch == h.best_epoch).unwrap();
        assert_eq!(at_best.val_loss, best);
    }

    #[test]
    fn user_overlap_rejected() {
        let (train_s, _) = make_sets(4, 0);
        let tr: Vec<&SampleTensor> = train_s.iter().collect();
        let (ncfg, tcfg) = quick_cfg();
        let err = train(&tr, &tr, &ncfg, &tcfg).unwrap_err();
        assert!(matches!(err, FusionError::SplitLeak(_)));
    }

    #[test]
    fn empty_split_rejected() {
        let (train_s, _) = make_sets(4, 0);
        let tr: Vec<&SampleTensor> = train_s.iter().collect();
        let (ncfg, tcfg) = quick_cfg();
        assert!(matches!(
            train(&tr, &[], &ncfg, &tcfg),
            Err(FusionError::EmptySplit("validation"))
        ));
        assert!(matches!(
            train(&[], &tr, &ncfg, &tcfg),
            Err(FusionError::EmptySplit("train"))
        ));
    }
}
