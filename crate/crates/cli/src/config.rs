//! Pipeline configuration file (TOML) and its defaults.
//!
//! One file drives every stage; the global seed fans out into per-patient,
//! per-stage sub-seeds so a single value reproduces the whole experiment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use seiznet_core::netsim::{ChannelModel, PhyConfig};
use seiznet_core::nn::{FocalLossConfig, ModelSpec, Optimizer, TrainConfig};
use seiznet_core::predictor::{FusionConfig, ModalityRule};
use seiznet_core::signal::{Band, GeneratorConfig, PreictalShift};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub patients: Vec<String>,
    pub generator: GeneratorSection,
    #[serde(default)]
    pub preprocess: PreprocessSection,
    pub model: ModelSection,
    pub training: TrainingSection,
    #[serde(default)]
    pub fusion: FusionSection,
    pub network: NetworkSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSection {
    pub sample_rate_hz: u32,
    #[serde(default = "default_imbalance")]
    pub imbalance_ratio: f64,
    pub onset_count: u32,
    pub horizon_s: f64,
    pub exclusion_s: f64,
    pub oscillation_hz: f64,
    #[serde(default = "default_one")]
    pub oscillation_amplitude: f64,
    #[serde(default = "default_noise")]
    pub noise_floor: f64,
    pub preictal_mod_depth: f64,
    pub preictal_freq_delta_hz: f64,
    pub bands: Vec<Band>,
    #[serde(default = "default_ieeg_channels")]
    pub ieeg_channels: usize,
    /// 0 = derive the shortest duration matching the imbalance ratio.
    #[serde(default)]
    pub duration_s: f64,
    /// 0 = same as the training duration.
    #[serde(default)]
    pub eval_duration_s: f64,
}

fn default_imbalance() -> f64 {
    0.0826
}
fn default_one() -> f64 {
    1.0
}
fn default_noise() -> f64 {
    0.1
}
fn default_ieeg_channels() -> usize {
    3
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSection {
    /// 0 = no notch.
    #[serde(default)]
    pub notch_hz: f64,
    /// Both 0 = no band-pass.
    #[serde(default)]
    pub band_lo_hz: f64,
    #[serde(default)]
    pub band_hi_hz: f64,
}

impl PreprocessSection {
    pub fn notch(&self) -> Option<f64> {
        (self.notch_hz > 0.0).then_some(self.notch_hz)
    }

    pub fn band(&self) -> Option<(f64, f64)> {
        (self.band_lo_hz > 0.0 || self.band_hi_hz > 0.0)
            .then_some((self.band_lo_hz, self.band_hi_hz))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub conv_filters: Vec<usize>,
    pub conv_kernels: Vec<usize>,
    pub dense_widths: Vec<usize>,
}

impl ModelSection {
    /// The full-size five-block architecture.
    pub fn standard() -> Self {
        Self {
            conv_filters: vec![16, 32, 32, 64, 64],
            conv_kernels: vec![7, 5, 5, 3, 3],
            dense_widths: vec![256, 64, 16, 1],
        }
    }

    pub fn to_spec(&self, input_channels: usize, input_length: usize) -> Result<ModelSpec> {
        if self.conv_filters.len() != self.conv_kernels.len() {
            return Err(CliError::Config(
                "model.conv_filters and model.conv_kernels must have equal length".into(),
            ));
        }
        let spec = ModelSpec {
            input_channels,
            input_length,
            conv_blocks: self
                .conv_filters
                .iter()
                .zip(&self.conv_kernels)
                .map(|(&filters, &kernel_size)| seiznet_core::nn::ConvBlockSpec {
                    filters,
                    kernel_size,
                    pool_width: 2,
                })
                .collect(),
            dense_widths: self.dense_widths.clone(),
        };
        spec.validate().map_err(|e| CliError::Config(format!("model section: {e}")))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    #[serde(default = "default_alpha")]
    pub focal_alpha: f64,
    #[serde(default = "default_gamma")]
    pub focal_gamma: f64,
}

fn default_alpha() -> f64 {
    0.2
}
fn default_gamma() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    Adam,
}

impl TrainingSection {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let optimizer = match self.optimizer {
            OptimizerKind::Sgd => Optimizer::Sgd,
            OptimizerKind::Momentum => Optimizer::Momentum { beta: 0.9 },
            OptimizerKind::Adam => Optimizer::default(),
        };
        TrainConfig {
            optimizer,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed,
        }
    }

    pub fn focal_config(&self) -> FocalLossConfig {
        FocalLossConfig { alpha: self.focal_alpha, gamma: self.focal_gamma }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionSection {
    pub threshold: f64,
    pub time_window: usize,
    pub rule: ModalityRule,
}

impl Default for FusionSection {
    fn default() -> Self {
        Self { threshold: 0.5, time_window: 15, rule: ModalityRule::And }
    }
}

impl FusionSection {
    pub fn fusion_config(&self) -> FusionConfig {
        FusionConfig {
            threshold: self.threshold,
            time_window: self.time_window,
            channel_rule: Default::default(),
            modality_rule: self.rule,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    /// Simulated span; 0 = whole eval recording (models source only).
    pub duration_s: f64,
    #[serde(default = "default_t_app")]
    pub t_app_s: f64,
    #[serde(default = "default_payload_bits")]
    pub payload_bits: usize,
    #[serde(default = "default_slot_us")]
    pub slot_time_us: f64,
    #[serde(default = "default_spreading")]
    pub spreading_factor: usize,
    #[serde(default = "default_spreading")]
    pub hop_positions: usize,
    #[serde(default = "default_loss")]
    pub loss_probability: f64,
    #[serde(default = "default_sound_speed")]
    pub sound_speed_m_s: f64,
    #[serde(default = "default_timeout")]
    pub gateway_timeout_s: f64,
    pub source: SimSource,
    #[serde(default = "default_oracle_sens")]
    pub oracle_sensitivity: f64,
    #[serde(default = "default_oracle_spec")]
    pub oracle_specificity: f64,
    #[serde(default = "default_true")]
    pub node_time_voting: bool,
    /// Node roles and positions (meters); omit for the standard body layout.
    #[serde(default)]
    pub nodes: Option<Vec<seiznet_core::netsim::Node>>,
}

fn default_t_app() -> f64 {
    4.0
}
fn default_payload_bits() -> usize {
    16
}
fn default_slot_us() -> f64 {
    20.0
}
fn default_spreading() -> usize {
    8
}
fn default_loss() -> f64 {
    0.005
}
fn default_sound_speed() -> f64 {
    1540.0
}
fn default_timeout() -> f64 {
    0.5
}
fn default_oracle_sens() -> f64 {
    0.94
}
fn default_oracle_spec() -> f64 {
    0.9955
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimSource {
    /// Trained checkpoints drive the classifier nodes.
    Models,
    /// Synthetic classifiers with fixed sensitivity/specificity.
    Oracle,
}

impl NetworkSection {
    pub fn phy(&self) -> PhyConfig {
        PhyConfig {
            spreading_factor: self.spreading_factor,
            slot_time_s: self.slot_time_us * 1e-6,
            hop_positions: self.hop_positions,
        }
    }

    pub fn channel(&self) -> ChannelModel {
        ChannelModel {
            sound_speed_m_s: self.sound_speed_m_s,
            loss_probability: self.loss_probability,
            jitter_s: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let cfg: PipelineConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patients.is_empty() {
            return Err(CliError::Config("patients list is empty".into()));
        }
        let mut sorted = self.patients.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.patients.len() {
            return Err(CliError::Config("duplicate patient ids".into()));
        }
        self.generator_config(0)
            .validate()
            .map_err(|e| CliError::Config(format!("generator section: {e}")))?;
        self.fusion
            .fusion_config()
            .validate()
            .map_err(|e| CliError::Config(format!("fusion section: {e}")))?;
        Ok(())
    }

    /// Generator settings for one patient-level seed.
    pub fn generator_config(&self, seed: u64) -> GeneratorConfig {
        let g = &self.generator;
        GeneratorConfig {
            seed,
            sample_rate_hz: g.sample_rate_hz,
            imbalance_ratio: g.imbalance_ratio,
            onset_count: g.onset_count,
            horizon_s: g.horizon_s,
            exclusion_s: g.exclusion_s,
            background: g.bands.clone(),
            oscillation_hz: g.oscillation_hz,
            oscillation_amplitude: g.oscillation_amplitude,
            preictal_shift: PreictalShift {
                mod_depth: g.preictal_mod_depth,
                freq_delta_hz: g.preictal_freq_delta_hz,
            },
            noise_floor: g.noise_floor,
        }
    }

    /// Samples per window at the configured rate.
    pub fn window_len(&self) -> usize {
        (4.0 * f64::from(self.generator.sample_rate_hz)) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEMO: &str = r#"
seed = 42
out_dir = "out"
patients = ["p01"]

[generator]
sample_rate_hz = 32
onset_count = 1
horizon_s = 120.0
exclusion_s = 40.0
oscillation_hz = 6.0
preictal_mod_depth = 0.8
preictal_freq_delta_hz = 4.0
bands = [{ lo_hz = 0.5, hi_hz = 4.0, rms = 1.0 }]

[model]
conv_filters = [8, 16, 16]
conv_kernels = [5, 5, 3]
dense_widths = [32, 1]

[training]
optimizer = "adam"
learning_rate = 1e-3
batch_size = 32
max_epochs = 5
patience = 3

[network]
duration_s = 600.0
source = "oracle"
"#;

    #[test]
    fn demo_config_parses_with_defaults() {
        let cfg: PipelineConfig = toml::from_str(DEMO).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.generator.imbalance_ratio, 0.0826);
        assert_eq!(cfg.fusion.time_window, 15);
        assert_eq!(cfg.network.payload_bits, 16);
        assert_eq!(cfg.window_len(), 128);
        assert!(cfg.preprocess.notch().is_none());
        assert!(cfg.preprocess.band().is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = DEMO.replace("[network]", "[network]\nbogus_knob = 1");
        assert!(toml::from_str::<PipelineConfig>(&bad).is_err());
    }

    #[test]
    fn network_geometry_is_configurable() {
        let with_nodes = DEMO.replace(
            "source = \"oracle\"",
            r#"source = "oracle"
nodes = [
  { kind = "ieeg_classifier", position = [0.0, 0.0, 0.0] },
  { kind = "dbs", position = [0.0, 0.0, 0.004] },
  { kind = "gateway", position = [0.0, 0.25, 0.05] },
  { kind = "ecg_classifier", position = [0.0, 0.25, 0.45] },
]"#,
        );
        let cfg: PipelineConfig = toml::from_str(&with_nodes).unwrap();
        let nodes = cfg.network.nodes.unwrap();
        assert_eq!(nodes.len(), 4);
        assert_eq!(nodes[1].position[2], 0.004);
    }

    #[test]
    fn model_section_round_trip() {
        let cfg: PipelineConfig = toml::from_str(DEMO).unwrap();
        let spec = cfg.model.to_spec(1, 128).unwrap();
        assert_eq!(spec.conv_blocks.len(), 3);
        assert!(ModelSection::standard().to_spec(1, 1024).is_ok());
    }
}
