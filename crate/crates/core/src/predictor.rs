//! From per-window probabilities to alarm decisions.
//!
//! The pipeline per 4 s step is: threshold each channel's probability, take
//! the majority across channels, push the result into a rolling buffer of the
//! last 15 step decisions, and emit the time-majority vote. The gateway then
//! fuses the two modalities' votes into the system decision.
//!
//! Channel voting runs before time voting, so each node keeps exactly one
//! decision buffer. Until the buffer has seen a full 15 steps the output is
//! pinned to interictal, which keeps undefined majorities from raising
//! alarms.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("channel streams misaligned: lengths {lengths:?}")]
    Alignment { lengths: Vec<usize> },
}

pub type Result<T> = std::result::Result<T, PredictorError>;

/// Default probability cutoff on the sigmoid output.
pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Default time-vote depth: 15 windows = 60 s of decisions.
pub const DEFAULT_TIME_WINDOW: usize = 15;

/// How the gateway combines the two modality votes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModalityRule {
    /// Alarm only when both modalities agree; favors specificity.
    #[default]
    And,
    /// Alarm when either modality fires.
    Or,
    EcgOnly,
    IeegOnly,
}

/// How per-channel decisions merge into one node decision. Majority is the
/// only implemented policy; even-count ties resolve preictal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelRule {
    #[default]
    Majority,
}

/// Thresholding/voting/fusion configuration shared by both modality paths.
/// Warm-up behavior is fixed: until the time buffer fills, the vote is
/// interictal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub threshold: f64,
    /// Buffered decisions for the time vote; must be odd so votes are tie-free.
    pub time_window: usize,
    #[serde(default)]
    pub channel_rule: ChannelRule,
    pub modality_rule: ModalityRule,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            time_window: DEFAULT_TIME_WINDOW,
            channel_rule: ChannelRule::Majority,
            modality_rule: ModalityRule::And,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(PredictorError::Config(format!(
                "threshold {} outside [0, 1]",
                self.threshold
            )));
        }
        if self.time_window == 0 || self.time_window.is_multiple_of(2) {
            return Err(PredictorError::Config(format!(
                "time_window {} must be odd and positive",
                self.time_window
            )));
        }
        Ok(())
    }
}

/// Rolling store of the last `capacity` binary decisions, oldest first.
#[derive(Debug, Clone)]
pub struct DecisionBuffer {
    capacity: usize,
    contents: VecDeque<bool>,
}

impl DecisionBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self { capacity, contents: VecDeque::with_capacity(capacity) }
    }

    /// Pushes a decision, evicting the oldest once full.
    pub fn push(&mut self, decision: bool) {
        if self.contents.len() == self.capacity {
            self.contents.pop_front();
        }
        self.contents.push_back(decision);
    }

    pub fn fill_count(&self) -> usize {
        self.contents.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_warm(&self) -> bool {
        self.contents.len() == self.capacity
    }

    fn ones(&self) -> usize {
        self.contents.iter().filter(|&&d| d).count()
    }
}

/// Binary cutoff: 1 iff `p >= threshold`.
pub fn threshold_decision(p: f64, threshold: f64) -> bool {
    p >= threshold
}

/// Majority vote over the buffered time steps.
///
/// Warm-up rule: anything short of a full buffer votes interictal. A full
/// buffer votes preictal iff strictly more than half its entries are ones
/// (8 of 15 at the default depth).
pub fn time_vote(buf: &DecisionBuffer) -> bool {
    buf.is_warm() && 2 * buf.ones() > buf.capacity
}

/// Majority vote across channels; an exact even-count tie votes preictal,
/// trading a false alarm for never missing a seizure.
pub fn channel_vote(decisions: &[bool]) -> Result<bool> {
    if decisions.is_empty() {
        return Err(PredictorError::Config("channel_vote needs at least one channel".into()));
    }
    let ones = decisions.iter().filter(|&&d| d).count();
    Ok(2 * ones >= decisions.len())
}

/// Combines the two modality votes into the system decision.
pub fn fuse_modalities(ecg: bool, ieeg: bool, rule: ModalityRule) -> bool {
    match rule {
        ModalityRule::And => ecg && ieeg,
        ModalityRule::Or => ecg || ieeg,
        ModalityRule::EcgOnly => ecg,
        ModalityRule::IeegOnly => ieeg,
    }
}

/// Per-step record of the decision pipeline, one per 4 s window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDecision {
    /// Mean probability across channels at this step.
    pub raw_p: f64,
    /// Thresholded decision of the first channel (the raw per-sample vote for
    /// single-channel streams).
    pub thresholded: bool,
    pub channel_vote: bool,
    pub time_vote: bool,
}

/// Runs threshold, channel vote, and time vote over aligned per-channel
/// probability streams; one output vote per step.
pub fn ieeg_decide(channels: &[Vec<f64>], cfg: &FusionConfig) -> Result<Vec<StepDecision>> {
    cfg.validate()?;
    if channels.is_empty() {
        return Err(PredictorError::Config("need at least one channel stream".into()));
    }
    let steps = channels[0].len();
    if channels.iter().any(|c| c.len() != steps) {
        return Err(PredictorError::Alignment {
            lengths: channels.iter().map(Vec::len).collect(),
        });
    }

    let mut buffer = DecisionBuffer::new(cfg.time_window);
    let mut out = Vec::with_capacity(steps);
    for step in 0..steps {
        let decisions: Vec<bool> = channels
            .iter()
            .map(|c| threshold_decision(c[step], cfg.threshold))
            .collect();
        let voted = match cfg.channel_rule {
            ChannelRule::Majority => channel_vote(&decisions)?,
        };
        buffer.push(voted);
        out.push(StepDecision {
            raw_p: channels.iter().map(|c| c[step]).sum::<f64>() / channels.len() as f64,
            thresholded: decisions[0],
            channel_vote: voted,
            time_vote: time_vote(&buffer),
        });
    }
    Ok(out)
}

/// Single-channel (ECG) path: threshold then time vote.
pub fn ecg_decide(probabilities: &[f64], cfg: &FusionConfig) -> Result<Vec<StepDecision>> {
    ieeg_decide(std::slice::from_ref(&probabilities.to_vec()), cfg)
}

/// One line of the decision trace:
/// `t_s,modality,raw_p,thresholded,channel_vote,time_vote,fused`.
pub fn trace_line(t_s: f64, modality: &str, step: &StepDecision, fused: bool) -> String {
    format!(
        "{t_s},{modality},{:.6},{},{},{},{}",
        step.raw_p,
        u8::from(step.thresholded),
        u8::from(step.channel_vote),
        u8::from(step.time_vote),
        u8::from(fused),
    )
}
