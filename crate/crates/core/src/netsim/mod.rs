//! Discrete-event simulation of the four-node intra-body sensor network.
//!
//! Nodes: the implanted iEEG classifier, the over-the-skin iEEG/DBS
//! controller, the chest ECG classifier, and the wearable gateway. Every 4 s
//! each classifier reports its window decision; the iEEG result hops
//! implant -> controller -> gateway, the ECG result goes straight to the
//! gateway. The gateway fuses the two modalities and, on a preictal verdict,
//! emits an alert to its uplink sink and a stimulation command back to the
//! controller.
//!
//! The physical layer is PPM with per-node spreading codes and time-hopping
//! offsets handed out by the gateway in a control message at t = 0. Links are
//! lossy with tissue-speed propagation delay. Everything runs on an integer
//! nanosecond clock with deterministic tie-breaking, so a scenario and seed
//! reproduce their trace byte for byte.

mod channel;
mod ppm;
mod sim;

pub use channel::{transmit, ChannelModel, Delivery, TISSUE_SOUND_SPEED_M_S};
pub use ppm::{
    decode_payload, encode_payload, ppm_demodulate, ppm_modulate, walsh_codes, AppPayload,
    HopSequence, MacFrame, PhyConfig, MIN_PAYLOAD_BITS,
};
pub use sim::{
    run_simulation, ClassifierSource, LabelTimeline, LinkChannel, NodeStats, Scenario, SimOutput,
    SimReport, TrafficMode,
};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::stream_rng;

#[derive(Debug, Error)]
pub enum NetsimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("decode failure: {0}")]
    Decode(String),
    #[error("invalid scenario: {0}")]
    Scenario(String),
}

pub type Result<T> = std::result::Result<T, NetsimError>;

/// Index into the scenario's node table.
pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    /// Implanted iEEG sensor running the iEEG model.
    IeegClassifier,
    /// Chest ECG sensor running the ECG model.
    EcgClassifier,
    /// Wearable coordinator; fuses decisions, raises alerts.
    Gateway,
    /// Over-the-skin iEEG/DBS controller; relays implant traffic and receives
    /// stimulation commands.
    Dbs,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::IeegClassifier => "ieeg",
            NodeKind::EcgClassifier => "ecg",
            NodeKind::Gateway => "gateway",
            NodeKind::Dbs => "dbs",
        }
    }
}

/// The application message classes exchanged over the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppMessageKind {
    /// Window verdicts: implant to controller, and skin nodes to gateway.
    ClassificationResult,
    /// Gateway command back to the DBS controller.
    StimulationSettings,
    /// Gateway notification toward the internet-connected sink.
    Alert,
}

impl AppMessageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AppMessageKind::ClassificationResult => "classification",
            AppMessageKind::StimulationSettings => "stimulation",
            AppMessageKind::Alert => "alert",
        }
    }
}

/// One application message as framed onto the ultrasonic channel. Alerts
/// leave through the gateway's RF uplink instead and appear in the trace as
/// terminal events.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AppMessage {
    pub kind: AppMessageKind,
    pub source: NodeId,
    pub destination: NodeId,
    /// Which 4 s window the message reports or commands on.
    pub step_index: u64,
    pub decision: bool,
}

/// One network node: role plus physical position for delay computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    /// Meters.
    pub position: [f64; 3],
}

pub fn distance_m(a: &Node, b: &Node) -> f64 {
    let d: f64 = a
        .position
        .iter()
        .zip(&b.position)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    d.sqrt()
}

/// Minimum required application bit rate: `B_app / t_app` in bit/s.
pub fn required_bitrate(payload_bits: u64, t_app_s: f64) -> Result<f64> {
    if t_app_s <= 0.0 {
        return Err(NetsimError::Config(format!("t_app {t_app_s} must be positive")));
    }
    Ok(payload_bits as f64 / t_app_s)
}

/// Total demand of `node_count` nodes each requiring `per_node_bps`.
pub fn total_bitrate(node_count: usize, per_node_bps: f64) -> f64 {
    node_count as f64 * per_node_bps
}

/// Per-node spreading code and time-hopping assignment, dispatched by the
/// gateway in a control message before traffic starts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeAssignment {
    pub node: NodeId,
    pub code_index: usize,
    pub hop_sequence: HopSequence,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub assignments: Vec<CodeAssignment>,
}

impl Schedule {
    pub fn for_node(&self, node: NodeId) -> Option<&CodeAssignment> {
        self.assignments.iter().find(|a| a.node == node)
    }
}

/// Assigns one spreading code and one hop sequence per node, bijectively.
///
/// `available_codes` caps how many orthogonal codes the pool exposes. Hop
/// sequences are built from one seeded base pattern shifted per node, so any
/// two nodes differ in every chip position whenever the node count does not
/// exceed `phy.hop_positions`.
pub fn assign_codes(
    node_count: usize,
    available_codes: usize,
    phy: &PhyConfig,
    seed: u64,
) -> Result<Schedule> {
    phy.validate()?;
    if available_codes > phy.spreading_factor {
        return Err(NetsimError::Config(format!(
            "{available_codes} codes requested but Walsh order {} supplies at most that many",
            phy.spreading_factor
        )));
    }
    if node_count > available_codes {
        return Err(NetsimError::Capacity(format!(
            "{node_count} nodes but only {available_codes} orthogonal codes"
        )));
    }
    let mut rng = stream_rng(seed, "code-assignment");
    let mut code_indices: Vec<usize> = (0..available_codes).collect();
    code_indices.shuffle(&mut rng);

    let mut base = vec![0u8; phy.spreading_factor];
    for b in base.iter_mut() {
        *b = rand::Rng::random_range(&mut rng, 0..phy.hop_positions as u8);
    }

    let assignments = (0..node_count)
        .map(|node| CodeAssignment {
            node,
            code_index: code_indices[node],
            hop_sequence: HopSequence {
                offsets: base
                    .iter()
                    .map(|&b| (b + node as u8) % phy.hop_positions as u8)
                    .collect(),
            },
        })
        .collect();
    Ok(Schedule { assignments })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn required_bitrate_formula() {
        assert_eq!(required_bitrate(20, 4.0).unwrap(), 5.0);
        assert_eq!(required_bitrate(0, 4.0).unwrap(), 0.0);
        assert!(required_bitrate(16, 0.0).is_err());
        assert!(required_bitrate(16, -1.0).is_err());
    }

    #[test]
    fn total_demand_scales_with_nodes() {
        let r_app = required_bitrate(16, 4.0).unwrap();
        assert_eq!(total_bitrate(4, r_app), 4.0 * r_app);
    }

    #[test]
    fn four_nodes_four_codes_is_a_bijection() {
        let phy = PhyConfig::default();
        let schedule = assign_codes(4, 4, &phy, 7).unwrap();
        let mut codes: Vec<usize> =
            schedule.assignments.iter().map(|a| a.code_index).collect();
        codes.sort_unstable();
        assert_eq!(codes, vec![0, 1, 2, 3]);
        // hop offsets pairwise distinct at every chip position
        for k in 0..phy.spreading_factor {
            let mut offs: Vec<u8> = schedule
                .assignments
                .iter()
                .map(|a| a.hop_sequence.offset_at(k))
                .collect();
            offs.sort_unstable();
            offs.dedup();
            assert_eq!(offs.len(), 4);
        }
    }

    #[test]
    fn five_nodes_four_codes_is_a_capacity_error() {
        let phy = PhyConfig::default();
        assert!(matches!(
            assign_codes(5, 4, &phy, 0),
            Err(NetsimError::Capacity(_))
        ));
    }

    #[test]
    fn assignment_is_deterministic_per_seed() {
        let phy = PhyConfig::default();
        let a = assign_codes(4, 8, &phy, 42).unwrap();
        let b = assign_codes(4, 8, &phy, 42).unwrap();
        let c = assign_codes(4, 8, &phy, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn node_distance() {
        let a = Node { kind: NodeKind::Gateway, position: [0.0, 0.0, 0.0] };
        let b = Node { kind: NodeKind::Dbs, position: [0.0, 3.0, 4.0] };
        assert_eq!(distance_m(&a, &b), 5.0);
    }
}
