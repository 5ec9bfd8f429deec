//! Focal loss for the imbalanced preictal/interictal problem.
//!
//! ```text
//! FL(p) = -alpha     * (1 - p)^gamma * ln(p)      when y = 1 (preictal)
//! FL(p) = -(1-alpha) * p^gamma       * ln(1 - p)  otherwise
//! ```
//!
//! With `gamma = 0, alpha = 0.5` this is exactly half of the plain binary
//! cross-entropy; with the default `alpha = 0.2, gamma = 2` it down-weights
//! confidently classified samples and the abundant interictal class.

use super::{NnError, Result};
use crate::signal::Label;

/// Probabilities are clamped to `[PROB_EPSILON, 1 - PROB_EPSILON]` before the
/// logarithms.
pub const PROB_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalLossConfig {
    /// Weight of the positive (preictal) class, in (0, 1).
    pub alpha: f64,
    /// Focusing exponent, >= 0. Zero recovers scaled cross-entropy.
    pub gamma: f64,
}

impl Default for FocalLossConfig {
    fn default() -> Self {
        Self { alpha: 0.2, gamma: 2.0 }
    }
}

impl FocalLossConfig {
    /// Plain cross-entropy baseline (up to the constant factor 1/2).
    pub fn bce() -> Self {
        Self { alpha: 0.5, gamma: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(NnError::Config(format!("alpha {} must lie in (0, 1)", self.alpha)));
        }
        if self.gamma < 0.0 || self.gamma.is_nan() {
            return Err(NnError::Config(format!("gamma {} must be nonnegative", self.gamma)));
        }
        Ok(())
    }
}

fn clamp(p: f64) -> Result<f64> {
    if p.is_nan() {
        return Err(NnError::Numeric { context: "focal loss received NaN probability".into() });
    }
    Ok(p.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON))
}

/// Focal loss of one prediction.
pub fn focal_loss(p: f64, y: Label, cfg: &FocalLossConfig) -> Result<f64> {
    let p = clamp(p)?;
    Ok(match y {
        Label::Preictal => -cfg.alpha * (1.0 - p).powf(cfg.gamma) * p.ln(),
        Label::Interictal => -(1.0 - cfg.alpha) * p.powf(cfg.gamma) * (1.0 - p).ln(),
    })
}

/// d(focal loss)/dp, matching central finite differences of [`focal_loss`].
pub fn focal_loss_grad(p: f64, y: Label, cfg: &FocalLossConfig) -> Result<f64> {
    let p = clamp(p)?;
    let (alpha, gamma) = (cfg.alpha, cfg.gamma);
    Ok(match y {
        Label::Preictal => {
            // d/dp [ -a (1-p)^g ln p ] = a g (1-p)^(g-1) ln p - a (1-p)^g / p
            let focusing_rate =
                if gamma == 0.0 { 0.0 } else { gamma * (1.0 - p).powf(gamma - 1.0) };
            alpha * focusing_rate * p.ln() - alpha * (1.0 - p).powf(gamma) / p
        }
        Label::Interictal => {
            // d/dp [ -(1-a) p^g ln(1-p) ] = -(1-a) [ g p^(g-1) ln(1-p) - p^g / (1-p) ]
            let focusing_rate = if gamma == 0.0 { 0.0 } else { gamma * p.powf(gamma - 1.0) };
            -(1.0 - alpha) * (focusing_rate * (1.0 - p).ln() - p.powf(gamma) / (1.0 - p))
        }
    })
}
