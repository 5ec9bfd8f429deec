//! From-scratch 1-D convolutional network for per-window seizure prediction.
//!
//! The standard architecture is batch normalization at the input, five
//! conv/ReLU/max-pool blocks, then four dense layers (ReLU on the first
//! three, sigmoid on the final unit). Everything runs in f64 on the CPU;
//! gradients are hand-derived and checked against finite differences.

mod checkpoint;
mod loss;
mod model;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use loss::{focal_loss, focal_loss_grad, FocalLossConfig, PROB_EPSILON};
pub use model::{backward, forward, predict_proba, ModelGrads};
pub use train::{curve_to_csv, train, EpochStats, Optimizer, TrainConfig, TrainOutcome};

use rand::Rng;
use thiserror::Error;

use crate::rng::stream_rng;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch at {layer}: expected {expected}, got {actual}")]
    Shape { layer: String, expected: String, actual: String },
    #[error("numeric failure in {context}")]
    Numeric { context: String },
    #[error("training diverged at epoch {epoch}: {detail}")]
    Training { epoch: usize, detail: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint format error at offset {offset}: {detail}")]
    Format { offset: u64, detail: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;

/// One conv block: 1-D convolution (same padding), ReLU, then max-pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvBlockSpec {
    pub filters: usize,
    pub kernel_size: usize,
    pub pool_width: usize,
}

/// Network architecture. [`ModelSpec::standard`] builds the full-size
/// five-block/four-dense stack; smaller specs are accepted for experiments
/// and gradient checking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub input_channels: usize,
    pub input_length: usize,
    pub conv_blocks: Vec<ConvBlockSpec>,
    pub dense_widths: Vec<usize>,
}

impl ModelSpec {
    /// The production architecture: five conv blocks and four dense layers.
    pub fn standard(input_channels: usize, input_length: usize) -> Self {
        let filters = [16, 32, 32, 64, 64];
        let kernels = [7, 5, 5, 3, 3];
        Self {
            input_channels,
            input_length,
            conv_blocks: filters
                .iter()
                .zip(kernels)
                .map(|(&f, k)| ConvBlockSpec { filters: f, kernel_size: k, pool_width: 2 })
                .collect(),
            dense_widths: vec![256, 64, 16, 1],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.input_length == 0 {
            return Err(NnError::Config("input dimensions must be positive".into()));
        }
        if self.conv_blocks.is_empty() {
            return Err(NnError::Config("at least one conv block is required".into()));
        }
        if self.dense_widths.is_empty() || *self.dense_widths.last().unwrap() != 1 {
            return Err(NnError::Config("final dense layer must have width 1 (sigmoid unit)".into()));
        }
        for (i, b) in self.conv_blocks.iter().enumerate() {
            if b.filters == 0 {
                return Err(NnError::Config(format!("conv block {i} has zero filters")));
            }
            if b.kernel_size == 0 || b.kernel_size % 2 == 0 {
                return Err(NnError::Config(format!(
                    "conv block {i} kernel size {} must be odd for same padding",
                    b.kernel_size
                )));
            }
            if b.pool_width != 2 {
                return Err(NnError::Config(format!(
                    "conv block {i} pool width {} unsupported: every pool halves the length",
                    b.pool_width
                )));
            }
        }
        let down = 1usize << self.conv_blocks.len();
        if !self.input_length.is_multiple_of(down) {
            return Err(NnError::Config(format!(
                "input_length {} not divisible by 2^{} = {down}",
                self.input_length,
                self.conv_blocks.len()
            )));
        }
        Ok(())
    }

    /// Sequence length after block `k` (1-based); `k = 0` is the input length.
    pub fn length_after_block(&self, k: usize) -> usize {
        self.input_length >> k
    }

    /// Flattened feature count feeding the first dense layer.
    pub fn feature_len(&self) -> usize {
        self.conv_blocks.last().unwrap().filters * self.length_after_block(self.conv_blocks.len())
    }
}

/// Per-channel batch normalization parameters and running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

pub const BATCH_NORM_EPS: f64 = 1e-5;
/// EMA momentum for the running statistics.
pub const BATCH_NORM_MOMENTUM: f64 = 0.9;

impl BatchNorm {
    fn identity(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
        }
    }
}

/// Weights of one convolution: `weight[out][in][k]` flattened, plus biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Weights of one dense layer: `weight[out][in]` flattened, plus biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Complete parameter set of one patient/modality model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub spec: ModelSpec,
    pub input_norm: BatchNorm,
    pub convs: Vec<Conv>,
    pub dense: Vec<Dense>,
}

impl ModelParams {
    /// All-zero weights and biases; useful as a fixed point in tests
    /// (sigmoid(0) = 0.5 for every input).
    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self::build(spec, |_| 0.0))
    }

    /// Fan-in-scaled uniform initialization of weights and biases,
    /// deterministic per seed. Nonzero biases keep pre-activations off the
    /// exact ReLU corner, where the loss gradient is not defined.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = stream_rng(seed, "weight-init");
        let mut params = Self::build(spec, |_| 0.0);
        let mut in_ch = spec.input_channels;
        for (block, conv) in spec.conv_blocks.iter().zip(params.convs.iter_mut()) {
            let bound = 1.0 / ((in_ch * block.kernel_size) as f64).sqrt();
            for w in conv.weight.iter_mut().chain(conv.bias.iter_mut()) {
                *w = rng.random_range(-bound..bound);
            }
            in_ch = block.filters;
        }
        let mut in_dim = spec.feature_len();
        for (w_out, dense) in spec.dense_widths.iter().zip(params.dense.iter_mut()) {
            let bound = 1.0 / (in_dim as f64).sqrt();
            for w in dense.weight.iter_mut().chain(dense.bias.iter_mut()) {
                *w = rng.random_range(-bound..bound);
            }
            in_dim = *w_out;
        }
        Ok(params)
    }

    fn build(spec: &ModelSpec, fill: impl Fn(usize) -> f64) -> Self {
        let mut convs = Vec::with_capacity(spec.conv_blocks.len());
        let mut in_ch = spec.input_channels;
        for block in &spec.conv_blocks {
            let n = block.filters * in_ch * block.kernel_size;
            convs.push(Conv {
                weight: (0..n).map(&fill).collect(),
                bias: vec![0.0; block.filters],
            });
            in_ch = block.filters;
        }
        let mut dense = Vec::with_capacity(spec.dense_widths.len());
        let mut in_dim = spec.feature_len();
        for &out in &spec.dense_widths {
            dense.push(Dense {
                weight: (0..out * in_dim).map(&fill).collect(),
                bias: vec![0.0; out],
            });
            in_dim = out;
        }
        Self {
            spec: spec.clone(),
            input_norm: BatchNorm::identity(spec.input_channels),
            convs,
            dense,
        }
    }

    /// Number of trainable scalars (batch-norm gamma/beta plus all weights
    /// and biases; running statistics are not trainable).
    pub fn trainable_count(&self) -> usize {
        2 * self.input_norm.gamma.len()
            + self.convs.iter().map(|c| c.weight.len() + c.bias.len()).sum::<usize>()
            + self.dense.iter().map(|d| d.weight.len() + d.bias.len()).sum::<usize>()
    }

    /// Flattens the trainable parameters in a fixed order (batch-norm gamma,
    /// beta, then each conv's weights and biases, then each dense layer's).
    pub fn flatten_trainable(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.trainable_count());
        out.extend_from_slice(&self.input_norm.gamma);
        out.extend_from_slice(&self.input_norm.beta);
        for c in &self.convs {
            out.extend_from_slice(&c.weight);
            out.extend_from_slice(&c.bias);
        }
        for d in &self.dense {
            out.extend_from_slice(&d.weight);
            out.extend_from_slice(&d.bias);
        }
        out
    }

    /// Writes a flat trainable vector (same order as [`flatten_trainable`])
    /// back into the structured parameters.
    ///
    /// [`flatten_trainable`]: ModelParams::flatten_trainable
    pub fn assign_trainable(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.trainable_count(), "flat parameter length mismatch");
        let mut pos = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&flat[pos..pos + dst.len()]);
            pos += dst.len();
        };
        take(&mut self.input_norm.gamma);
        take(&mut self.input_norm.beta);
        for c in &mut self.convs {
            take(&mut c.weight);
            take(&mut c.bias);
        }
        for d in &mut self.dense {
            take(&mut d.weight);
            take(&mut d.bias);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_spec_matches_the_architecture() {
        let spec = ModelSpec::standard(1, 1024);
        assert_eq!(spec.conv_blocks.len(), 5);
        assert_eq!(spec.dense_widths.len(), 4);
        assert_eq!(*spec.dense_widths.last().unwrap(), 1);
        assert!(spec.validate().is_ok());
        // each pool halves the sequence
        for k in 0..=5 {
            assert_eq!(spec.length_after_block(k), 1024 >> k);
        }
        assert_eq!(spec.feature_len(), 64 * 32);
    }

    #[test]
    fn spec_validation_rejects_bad_shapes() {
        let mut spec = ModelSpec::standard(1, 1000); // not divisible by 32
        assert!(spec.validate().is_err());
        spec = ModelSpec::standard(1, 1024);
        spec.dense_widths = vec![16, 2];
        assert!(spec.validate().is_err());
        spec = ModelSpec::standard(1, 1024);
        spec.conv_blocks[0].kernel_size = 4;
        assert!(spec.validate().is_err());
        spec = ModelSpec::standard(1, 1024);
        spec.conv_blocks[2].pool_width = 3;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn flatten_assign_round_trip() {
        let spec = ModelSpec {
            input_channels: 2,
            input_length: 8,
            conv_blocks: vec![ConvBlockSpec { filters: 3, kernel_size: 3, pool_width: 2 }],
            dense_widths: vec![4, 1],
        };
        let params = ModelParams::init(&spec, 5).unwrap();
        let flat = params.flatten_trainable();
        assert_eq!(flat.len(), params.trainable_count());
        let mut other = ModelParams::zeros(&spec).unwrap();
        other.assign_trainable(&flat);
        assert_eq!(other.convs, params.convs);
        assert_eq!(other.dense, params.dense);
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let spec = ModelSpec::standard(1, 64);
        let a = ModelParams::init(&spec, 3).unwrap();
        let b = ModelParams::init(&spec, 3).unwrap();
        let c = ModelParams::init(&spec, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
