//! Centralized baseline: one model, one training matrix, patience-based
//! early stopping on a validation matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gower::GowerMatrix;
use crate::metrics::MetricsReport;
use crate::nn::{self, ModelParameters, OptimizerState, SCORE_THRESHOLD};
use crate::seed::{derive_seed, TAG_EPOCH, TAG_INIT};

pub const PATIENCE: usize = 2;
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GcConfig {
    pub run_name: String,
    pub training_dataset_size: usize,
    pub test_dataset_size: usize,
    pub balance_dataset: bool,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl GcConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("training_dataset_size", self.training_dataset_size),
            ("test_dataset_size", self.test_dataset_size),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name}: must be at least 1")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate: must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub stopped_epoch: usize,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    /// New best; keep these parameters.
    Improved,
    Continue,
    Stop,
}

/// Stops after `patience` consecutive epochs without a strictly lower loss.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    wait: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            wait: 0,
        }
    }

    pub fn observe(&mut self, loss: f64) -> StopDecision {
        if loss < self.best {
            self.best = loss;
            self.wait = 0;
            StopDecision::Improved
        } else {
            self.wait += 1;
            if self.wait >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::Continue
            }
        }
    }
}

/// Seed of the shuffle/dropout stream for 0-based `epoch`.
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    derive_seed(&[seed, TAG_EPOCH, epoch as u64])
}

pub fn model_seed(seed: u64) -> u64 {
    derive_seed(&[seed, TAG_INIT])
}

pub fn train_gc(
    config: &GcConfig,
    train: &GowerMatrix,
    val: &GowerMatrix,
) -> Result<(ModelParameters, TrainHistory)> {
    config.validate()?;
    if !val.is_empty() && val.cols() != train.cols() {
        return Err(Error::Shape(format!(
            "validation width {} differs from training width {}",
            val.cols(),
            train.cols()
        )));
    }
    let mut params = nn::init_model(train.cols(), model_seed(config.seed))?;
    let mut state = OptimizerState::new(&params);
    let mut stopper = EarlyStopping::new(PATIENCE);
    let mut warnings = Vec::new();
    if val.is_empty() {
        warnings.push("validation matrix is empty; early stopping disabled".to_string());
    }

    let mut records = Vec::with_capacity(config.epochs);
    let mut best = (params.clone(), 0usize);
    for epoch in 0..config.epochs {
        let train_loss = nn::train_epoch(
            &mut params,
            &mut state,
            train,
            config.batch_size,
            config.learning_rate,
            epoch_seed(config.seed, epoch),
        )?;
        let val_loss = if val.is_empty() {
            None
        } else {
            Some(nn::matrix_loss(&params, val, EVAL_CHUNK)?)
        };
        records.push(EpochRecord {
            epoch: epoch + 1,
            train_loss,
            val_loss,
        });
        match val_loss.map(|v| stopper.observe(v)) {
            Some(StopDecision::Improved) => best = (params.clone(), epoch + 1),
            Some(StopDecision::Continue) => {}
            Some(StopDecision::Stop) => break,
            None => best = (params.clone(), epoch + 1),
        }
    }
    let history = TrainHistory {
        stopped_epoch: records.len(),
        best_epoch: best.1,
        epochs: records,
        warnings,
    };
    Ok((best.0, history))
}

/// Plain training for a fixed number of epochs from `params`, no early
/// stopping. `seed_for_epoch` supplies the per-epoch stream seed.
pub fn train_fixed_epochs(
    mut params: ModelParameters,
    matrix: &GowerMatrix,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    seed_for_epoch: impl Fn(usize) -> u64,
) -> Result<(ModelParameters, Vec<f64>)> {
    let mut state = OptimizerState::new(&params);
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        losses.push(nn::train_epoch(
            &mut params,
            &mut state,
            matrix,
            batch_size,
            learning_rate,
            seed_for_epoch(epoch),
        )?);
    }
    Ok((params, losses))
}

/// Dropout-off scores thresholded at 0.5.
pub fn evaluate(params: &ModelParameters, test: &GowerMatrix) -> Result<MetricsReport> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("test matrix is empty".into()));
    }
    let scores = nn::predict_matrix(params, test, EVAL_CHUNK)?;
    MetricsReport::from_scores(&scores, test.row_labels(), SCORE_THRESHOLD)
}
