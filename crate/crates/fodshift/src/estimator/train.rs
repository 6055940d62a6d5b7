//! Training loop, model selection, and volume-level prediction.

use ndarray::{concatenate, Array2, ArrayView1, Axis};

use super::features::{featurize, six_directions, wm_columns};
use super::model::{loss_mse, EstimatorModel};
use super::optim::{adam_step, AdamState};
use crate::phantom::Subject;
use crate::{seed, Error, Result, Volume};

pub const DEFAULT_HIDDEN: [usize; 2] = [256, 256];
pub const DEFAULT_DROPOUT: f64 = 0.1;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Desk-scale training preset: the published hyperparameters with
    /// the epoch count cut to 200 so a full study fits in minutes.
    pub fn desk(seed: u64) -> Self {
        TrainConfig {
            epochs: 200,
            lr: 5e-5,
            weight_decay: 1e-3,
            batch_size: 35,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed,
        }
    }

    /// Full-length preset: 1000 epochs, same rates.
    pub fn paper_scale(seed: u64) -> Self {
        TrainConfig {
            epochs: 1000,
            ..Self::desk(seed)
        }
    }

    /// Fine-tuning preset: 100 epochs, lr 5e-6, batches of 10.
    pub fn fine_tune(seed: u64) -> Self {
        TrainConfig {
            epochs: 100,
            lr: 5e-6,
            batch_size: 10,
            ..Self::desk(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if !(self.lr > 0.0) && self.lr != 0.0 {
            return Err(Error::invalid("learning rate must be finite and >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        Ok(())
    }
}

/// WM-voxel training samples, one column per voxel.
pub struct VoxelSamples {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub subject_ids: Vec<String>,
}

impl VoxelSamples {
    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, idx: &[usize]) -> VoxelSamples {
        VoxelSamples {
            x: self.x.select(Axis(1), idx),
            y: self.y.select(Axis(1), idx),
            subject_ids: self.subject_ids.clone(),
        }
    }
}

/// Gather features and GT targets over the WM voxels of a cohort.
pub fn collect_samples(subjects: &[Subject]) -> Result<VoxelSamples> {
    if subjects.is_empty() {
        return Err(Error::invalid("empty subject list"));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ids = Vec::new();
    for s in subjects {
        let six = six_directions(s)?;
        let (x, y) = wm_columns(s, &six)?;
        xs.push(x);
        ys.push(y);
        ids.push(s.id.clone());
    }
    let x = concatenate(
        Axis(1),
        &xs.iter().map(|m| m.view()).collect::<Vec<_>>(),
    )
    .map_err(|e| Error::invalid(format!("sample concat: {e}")))?;
    let y = concatenate(
        Axis(1),
        &ys.iter().map(|m| m.view()).collect::<Vec<_>>(),
    )
    .map_err(|e| Error::invalid(format!("sample concat: {e}")))?;
    Ok(VoxelSamples {
        x,
        y,
        subject_ids: ids,
    })
}

/// Per-epoch loss record plus the provenance of the data that produced
/// it. The returned model always corresponds to `best_epoch`, the
/// first epoch attaining the minimum validation MSE.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub train_subjects: Vec<String>,
    pub val_subjects: Vec<String>,
}

impl TrainHistory {
    pub fn best_val(&self) -> f64 {
        self.val_loss[self.best_epoch]
    }
}

fn run_epochs(
    mut model: EstimatorModel,
    train_set: &VoxelSamples,
    val_set: &VoxelSamples,
    config: &TrainConfig,
) -> Result<(EstimatorModel, TrainHistory)> {
    config.validate()?;
    model.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::invalid("training and validation sets must be nonempty"));
    }
    if train_set.x.nrows() != model.n_inputs() || train_set.y.nrows() != model.n_outputs() {
        return Err(Error::invalid("sample dimensions do not match the model"));
    }

    let n = train_set.len();
    let mut rng = seed::rng(config.seed, "train", 0);
    let mut state = AdamState::new(&model);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut history = TrainHistory {
        train_loss: Vec::with_capacity(config.epochs),
        val_loss: Vec::with_capacity(config.epochs),
        best_epoch: 0,
        train_subjects: train_set.subject_ids.clone(),
        val_subjects: val_set.subject_ids.clone(),
    };
    let mut best = (f64::INFINITY, model.clone());

    for epoch in 0..config.epochs {
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in perm.chunks(config.batch_size) {
            let x = train_set.x.select(Axis(1), chunk);
            let y = train_set.y.select(Axis(1), chunk);
            let dropout = if model.dropout_rate > 0.0 {
                Some(&mut rng)
            } else {
                None
            };
            let (loss, grads) = model.backward(&x, &y, dropout);
            if !loss.is_finite() {
                return Err(Error::TrainingFailure { epoch });
            }
            adam_step(&mut model, &grads, &mut state, config);
            epoch_loss += loss * chunk.len() as f64 / n as f64;
        }
        let val_pred = model.forward(&val_set.x, false, &mut rng);
        let val = loss_mse(&val_pred, &val_set.y);
        if !val.is_finite() {
            return Err(Error::TrainingFailure { epoch });
        }
        history.train_loss.push(epoch_loss);
        history.val_loss.push(val);
        if val < best.0 {
            best = (val, model.clone());
            history.best_epoch = epoch;
        }
    }
    Ok((best.1, history))
}

/// Train from scratch on whole-subject splits; the returned model is
/// the parameter snapshot at the epoch of minimum validation MSE.
pub fn train(
    model: EstimatorModel,
    train_subjects: &[Subject],
    val_subjects: &[Subject],
    config: &TrainConfig,
) -> Result<(EstimatorModel, TrainHistory)> {
    let train_set = collect_samples(train_subjects)?;
    let val_set = collect_samples(val_subjects)?;
    run_epochs(model, &train_set, &val_set, config)
}

/// Continue training on target subjects, holding out 10% of their WM
/// voxels (at least one) as the validation set.
pub fn fine_tune(
    model: EstimatorModel,
    target_subjects: &[Subject],
    config: &TrainConfig,
) -> Result<(EstimatorModel, TrainHistory)> {
    let samples = collect_samples(target_subjects)?;
    let n = samples.len();
    if n < 2 {
        return Err(Error::invalid("fine-tuning needs at least two WM voxels"));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    {
        use rand::seq::SliceRandom;
        let mut rng = seed::rng(config.seed, "ft-split", 0);
        idx.shuffle(&mut rng);
    }
    let n_val = (n / 10).max(1);
    let val_set = samples.select(&idx[..n_val]);
    let train_set = samples.select(&idx[n_val..]);
    run_epochs(model, &train_set, &val_set, config)
}

/// Eval-mode forward over the WM voxels of one subject; everything
/// outside the mask is zero. Two calls produce identical bytes.
pub fn predict_volume(model: &EstimatorModel, subject: &Subject) -> Result<Volume<f64>> {
    let six = six_directions(subject)?;
    let feats = featurize(subject, &six)?;
    if feats.n_channels() != model.n_inputs() {
        return Err(Error::invalid("feature length does not match the model"));
    }
    let wm: Vec<usize> = (0..feats.n_voxels())
        .filter(|&v| subject.wm_mask.voxel(v)[0])
        .collect();
    let mut out = Volume::filled(
        subject.dims(),
        model.n_outputs(),
        feats.voxel_size_mm(),
        0.0,
    );
    if wm.is_empty() {
        return Ok(out);
    }
    let mut x = Array2::zeros((model.n_inputs(), wm.len()));
    for (c, &v) in wm.iter().enumerate() {
        x.column_mut(c).assign(&ArrayView1::from(feats.voxel(v)));
    }
    let mut rng = seed::rng(0, "eval", 0);
    let pred = model.forward(&x, false, &mut rng);
    for (c, &v) in wm.iter().enumerate() {
        let dst = out.voxel_mut(v);
        for (r, val) in dst.iter_mut().enumerate() {
            *val = pred[(r, c)];
        }
    }
    Ok(out)
}
