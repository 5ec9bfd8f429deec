//! Ultrasonic through-tissue link: propagation delay plus independent
//! Bernoulli frame loss.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{NetsimError, Result};

/// Speed of sound in soft tissue, m/s.
pub const TISSUE_SOUND_SPEED_M_S: f64 = 1540.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub sound_speed_m_s: f64,
    /// Per-frame drop probability, independent across frames.
    pub loss_probability: f64,
    /// Optional uniform extra delay in [0, jitter_s].
    pub jitter_s: Option<f64>,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            sound_speed_m_s: TISSUE_SOUND_SPEED_M_S,
            loss_probability: 0.005,
            jitter_s: None,
        }
    }
}

impl ChannelModel {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.loss_probability) {
            return Err(NetsimError::Config(format!(
                "loss probability {} outside [0, 1]",
                self.loss_probability
            )));
        }
        if self.sound_speed_m_s <= 0.0 {
            return Err(NetsimError::Config("sound speed must be positive".into()));
        }
        if self.jitter_s.is_some_and(|j| j < 0.0) {
            return Err(NetsimError::Config("jitter must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn propagation_ns(&self, distance_m: f64) -> u64 {
        (distance_m / self.sound_speed_m_s * 1e9).round() as u64
    }
}

/// Outcome of putting one frame on a link.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delivery {
    /// Frame arrives: reception spans `[rx_start_ns, rx_end_ns)`.
    Delivered { rx_start_ns: u64, rx_end_ns: u64 },
    Dropped,
}

/// Draws the fate of one frame. Deterministic given the RNG state; the RNG
/// is consumed in event order by the simulator.
pub fn transmit(
    tx_time_ns: u64,
    duration_ns: u64,
    distance_m: f64,
    channel: &ChannelModel,
    rng: &mut ChaCha8Rng,
) -> Delivery {
    let dropped = rng.random::<f64>() < channel.loss_probability;
    let jitter_ns = match channel.jitter_s {
        Some(j) if j > 0.0 => (rng.random::<f64>() * j * 1e9).round() as u64,
        _ => 0,
    };
    if dropped {
        return Delivery::Dropped;
    }
    let rx_start = tx_time_ns + channel.propagation_ns(distance_m) + jitter_ns;
    Delivery::Delivered { rx_start_ns: rx_start, rx_end_ns: rx_start + duration_ns }
}
