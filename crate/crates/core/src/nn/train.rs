//! Per-patient training loop with early stopping on validation loss.

use rand::seq::SliceRandom;

use super::loss::{focal_loss, FocalLossConfig};
use super::model::{backward, forward};
use super::{ModelParams, ModelSpec, NnError, Result, BATCH_NORM_MOMENTUM};
use crate::metrics;
use crate::rng::stream_rng;
use crate::signal::{DatasetSplit, SampleWindow};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Momentum { beta: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::default(),
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 50,
            patience: 10,
            seed: 0,
        }
    }
}

/// One row of the training curve.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best validation loss.
    pub params: ModelParams,
    pub curve: Vec<EpochStats>,
}

/// `epoch,train_loss,val_loss,val_auc` rows for reporting.
pub fn curve_to_csv(curve: &[EpochStats]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,val_auc\n");
    for row in curve {
        let auc = row.val_auc.map(|a| format!("{a:.6}")).unwrap_or_default();
        out.push_str(&format!(
            "{},{:.6},{:.6},{}\n",
            row.epoch, row.train_loss, row.val_loss, auc
        ));
    }
    out
}

struct OptimizerState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step: u64,
}

impl OptimizerState {
    fn new(n: usize) -> Self {
        Self { first_moment: vec![0.0; n], second_moment: vec![0.0; n], step: 0 }
    }

    fn update(&mut self, kind: Optimizer, lr: f64, theta: &mut [f64], grad: &[f64]) {
        self.step += 1;
        match kind {
            Optimizer::Sgd => {
                for (t, &g) in theta.iter_mut().zip(grad) {
                    *t -= lr * g;
                }
            }
            Optimizer::Momentum { beta } => {
                for ((t, m), &g) in theta.iter_mut().zip(&mut self.first_moment).zip(grad) {
                    *m = beta * *m + g;
                    *t -= lr * *m;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let bias1 = 1.0 - beta1.powi(self.step as i32);
                let bias2 = 1.0 - beta2.powi(self.step as i32);
                for (i, (t, &g)) in theta.iter_mut().zip(grad).enumerate() {
                    let m = &mut self.first_moment[i];
                    let v = &mut self.second_moment[i];
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    let m_hat = *m / bias1;
                    let v_hat = *v / bias2;
                    *t -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

/// Folds the batch's per-channel statistics into the running estimates.
fn update_running_stats(params: &mut ModelParams, batch: &[SampleWindow]) {
    let channels = params.spec.input_channels;
    let mut mean = vec![0.0_f64; channels];
    let mut var = vec![0.0_f64; channels];
    let count = (batch.len() * params.spec.input_length) as f64;
    for w in batch {
        for (c, channel) in w.channels.iter().enumerate() {
            for &x in channel {
                mean[c] += f64::from(x);
            }
        }
    }
    for m in mean.iter_mut() {
        *m /= count;
    }
    for w in batch {
        for (c, channel) in w.channels.iter().enumerate() {
            for &x in channel {
                let d = f64::from(x) - mean[c];
                var[c] += d * d;
            }
        }
    }
    for v in var.iter_mut() {
        *v /= count;
    }
    let momentum = BATCH_NORM_MOMENTUM;
    for c in 0..channels {
        params.input_norm.running_mean[c] =
            momentum * params.input_norm.running_mean[c] + (1.0 - momentum) * mean[c];
        params.input_norm.running_var[c] =
            momentum * params.input_norm.running_var[c] + (1.0 - momentum) * var[c];
    }
}

fn evaluate(
    params: &ModelParams,
    windows: &[SampleWindow],
    fl: &FocalLossConfig,
) -> Result<(f64, Option<f64>)> {
    let mut loss = 0.0;
    let mut probs = Vec::with_capacity(windows.len());
    let mut labels = Vec::with_capacity(windows.len());
    for w in windows {
        let p = forward(params, w)?;
        loss += focal_loss(p, w.label, fl)?;
        probs.push(p);
        labels.push(w.label);
    }
    let auc = metrics::auc(&probs, &labels).ok();
    Ok((loss / windows.len() as f64, auc))
}

/// Trains a fresh model on the split; returns the best-validation parameters
/// and the per-epoch curve. Deterministic given `tc.seed`.
pub fn train(
    spec: &ModelSpec,
    split: &DatasetSplit,
    fl: &FocalLossConfig,
    tc: &TrainConfig,
) -> Result<TrainOutcome> {
    spec.validate()?;
    fl.validate()?;
    if tc.learning_rate <= 0.0 {
        return Err(NnError::Config("learning_rate must be positive".into()));
    }
    if tc.batch_size == 0 {
        return Err(NnError::Config("batch_size must be at least 1".into()));
    }

    let mut params = ModelParams::init(spec, tc.seed)?;
    if tc.max_epochs == 0 {
        return Ok(TrainOutcome { params, curve: Vec::new() });
    }
    if split.train.is_empty() || split.validation.is_empty() {
        return Err(NnError::Config("training needs nonempty train and validation sets".into()));
    }

    let mut shuffle_rng = stream_rng(tc.seed, "train-shuffle");
    let mut opt = OptimizerState::new(params.trainable_count());
    let mut order: Vec<usize> = (0..split.train.len()).collect();

    let mut curve = Vec::with_capacity(tc.max_epochs);
    let mut best_val = f64::INFINITY;
    let mut best_params = params.clone();
    let mut stale_epochs = 0usize;

    for epoch in 0..tc.max_epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        let fail = |detail: String| NnError::Training { epoch, detail };

        for chunk in order.chunks(tc.batch_size) {
            let batch: Vec<SampleWindow> =
                chunk.iter().map(|&i| split.train[i].clone()).collect();
            update_running_stats(&mut params, &batch);
            let (grads, batch_loss) = backward(&params, &batch, fl).map_err(|e| fail(e.to_string()))?;
            if !batch_loss.is_finite() {
                return Err(fail(format!("batch loss is {batch_loss}")));
            }
            epoch_loss += batch_loss * batch.len() as f64;
            seen += batch.len();

            let mut theta = params.flatten_trainable();
            opt.update(tc.optimizer, tc.learning_rate, &mut theta, &grads.flatten());
            params.assign_trainable(&theta);
        }

        let train_loss = epoch_loss / seen as f64;
        let (val_loss, val_auc) =
            evaluate(&params, &split.validation, fl).map_err(|e| fail(e.to_string()))?;
        if !val_loss.is_finite() {
            return Err(fail(format!("validation loss is {val_loss}")));
        }
        curve.push(EpochStats { epoch: epoch + 1, train_loss, val_loss, val_auc });

        if val_loss < best_val {
            best_val = val_loss;
            best_params = params.clone();
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs > tc.patience {
                break;
            }
        }
    }

    Ok(TrainOutcome { params: best_params, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{
        generate_recording, label_windows, split_dataset, Band, GeneratorConfig, Label,
        LabelConfig, Modality, PreictalShift,
    };

    /// Small separable dataset: 32 Hz, 128-sample windows.
    fn separable_split(seed: u64) -> (DatasetSplit, GeneratorConfig) {
        let cfg = GeneratorConfig {
            seed,
            sample_rate_hz: 32,
            imbalance_ratio: 0.0826,
            onset_count: 1,
            horizon_s: 120.0,
            exclusion_s: 40.0,
            background: vec![
                Band { lo_hz: 0.5, hi_hz: 4.0, rms: 1.0 },
                Band { lo_hz: 4.0, hi_hz: 8.0, rms: 0.5 },
            ],
            oscillation_hz: 6.0,
            oscillation_amplitude: 1.0,
            preictal_shift: PreictalShift { mod_depth: 0.8, freq_delta_hz: 4.0 },
            noise_floor: 0.1,
        };
        let rec = generate_recording(&cfg, Modality::Ecg, 1, cfg.duration_for(1)).unwrap();
        let windows = label_windows(
            &rec,
            &LabelConfig { horizon_s: cfg.horizon_s, exclusion_s: cfg.exclusion_s },
        )
        .unwrap();
        (split_dataset(windows, seed).unwrap(), cfg)
    }

    fn small_spec() -> ModelSpec {
        use crate::nn::ConvBlockSpec;
        ModelSpec {
            input_channels: 1,
            input_length: 128,
            conv_blocks: vec![
                ConvBlockSpec { filters: 8, kernel_size: 5, pool_width: 2 },
                ConvBlockSpec { filters: 16, kernel_size: 5, pool_width: 2 },
                ConvBlockSpec { filters: 16, kernel_size: 3, pool_width: 2 },
            ],
            dense_widths: vec![32, 1],
        }
    }

    #[test]
    fn zero_epochs_returns_untouched_initialization() {
        let (split, _) = separable_split(2);
        let spec = small_spec();
        let tc = TrainConfig { max_epochs: 0, seed: 5, ..TrainConfig::default() };
        let out = train(&spec, &split, &FocalLossConfig::default(), &tc).unwrap();
        assert!(out.curve.is_empty());
        assert_eq!(out.params, ModelParams::init(&spec, 5).unwrap());
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let (split, _) = separable_split(3);
        let spec = small_spec();
        let tc = TrainConfig { max_epochs: 2, batch_size: 32, seed: 8, ..TrainConfig::default() };
        let a = train(&spec, &split, &FocalLossConfig::default(), &tc).unwrap();
        let b = train(&spec, &split, &FocalLossConfig::default(), &tc).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.curve, b.curve);
    }

    #[test]
    fn separable_data_trains_to_high_accuracy() {
        let (split, _) = separable_split(4);
        let spec = small_spec();
        let tc = TrainConfig {
            max_epochs: 15,
            batch_size: 32,
            patience: 6,
            seed: 4,
            ..TrainConfig::default()
        };
        let out = train(&spec, &split, &FocalLossConfig::default(), &tc).unwrap();
        let mut correct = 0usize;
        for w in &split.test {
            let p = forward(&out.params, w).unwrap();
            let decided = p >= 0.5;
            if decided == (w.label == Label::Preictal) {
                correct += 1;
            }
        }
        let acc = correct as f64 / split.test.len() as f64;
        assert!(acc >= 0.95, "test accuracy {acc}");
    }

    #[test]
    fn divergence_reports_the_epoch() {
        let (split, _) = separable_split(5);
        let spec = small_spec();
        let tc = TrainConfig {
            optimizer: Optimizer::Sgd,
            learning_rate: f64::INFINITY,
            max_epochs: 3,
            batch_size: 64,
            seed: 1,
            ..TrainConfig::default()
        };
        match train(&spec, &split, &FocalLossConfig::default(), &tc) {
            Err(NnError::Training { .. }) => {}
            other => panic!("expected divergence error, got {other:?}"),
        }
    }

    #[test]
    fn curve_csv_shape() {
        let curve = vec![
            EpochStats { epoch: 1, train_loss: 0.5, val_loss: 0.4, val_auc: Some(0.9) },
            EpochStats { epoch: 2, train_loss: 0.3, val_loss: 0.35, val_auc: None },
        ];
        let csv = curve_to_csv(&curve);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "epoch,train_loss,val_loss,val_auc");
        assert!(lines[1].starts_with("1,0.5"));
        assert!(lines[2].ends_with(','));
    }
}
