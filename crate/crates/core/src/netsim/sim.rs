//! Scenario configuration, the event loop, and the run report.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::channel::{transmit, ChannelModel, Delivery};
use super::ppm::{
    decode_payload, encode_payload, ppm_demodulate, ppm_modulate, validate_payload_bits,
    walsh_codes, MacFrame, PhyConfig,
};
use super::{assign_codes, distance_m, AppMessage, AppMessageKind, NetsimError, Node, NodeId, NodeKind, Result, Schedule};
use crate::metrics::{confusion_from_decisions, MetricsSummary};
use crate::predictor::{
    channel_vote, fuse_modalities, threshold_decision, time_vote, DecisionBuffer, FusionConfig,
};
use crate::rng::stream_rng;
use crate::signal::Label;

const NS_PER_S: f64 = 1e9;

fn to_ns(seconds: f64) -> u64 {
    (seconds * NS_PER_S).round() as u64
}

/// Exact decimal seconds with nanosecond resolution, for the trace.
fn fmt_ns(ns: u64) -> String {
    format!("{}.{:09}", ns / 1_000_000_000, ns % 1_000_000_000)
}

/// Where each classifier node gets its per-step verdicts.
#[derive(Debug, Clone)]
pub enum ClassifierSource {
    /// Draws correct/incorrect decisions against the ground-truth timeline at
    /// the configured rates. Errors are independent across modalities.
    Oracle { sensitivity: f64, specificity: f64 },
    /// Pre-computed per-channel probability streams (e.g. from a trained
    /// model), thresholded and channel-voted inside the node.
    Probabilities { channels: Vec<Vec<f64>> },
}

/// Ground truth per 4 s step; `None` marks steps excluded from scoring
/// (ictal/postictal time).
pub type LabelTimeline = Vec<Option<Label>>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrafficMode {
    /// The seizure-prediction loop: one classification per node per step.
    ClosedLoop,
    /// Saturation test: every node offers fixed-rate dummy frames.
    ConstantBitRate { per_node_bps: f64 },
}

/// Channel override for one directed link, keyed by node kind. Links without
/// an override use the scenario-wide channel model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkChannel {
    pub from: NodeKind,
    pub to: NodeKind,
    pub channel: ChannelModel,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub seed: u64,
    pub duration_s: f64,
    /// Application reporting period; also the alert latency bound.
    pub t_app_s: f64,
    pub payload_bits: usize,
    pub phy: PhyConfig,
    /// Default channel model for every link.
    pub channel: ChannelModel,
    /// Per-link loss/delay overrides.
    pub link_channels: Vec<LinkChannel>,
    /// Must contain exactly one node of each kind.
    pub nodes: Vec<Node>,
    pub ecg_source: ClassifierSource,
    pub ieeg_source: ClassifierSource,
    pub labels: LabelTimeline,
    /// Threshold/time-window settings plus the gateway fusion rule.
    pub fusion: FusionConfig,
    /// Whether classifier nodes run the time vote before reporting.
    pub node_time_voting: bool,
    /// How long the gateway waits for both modalities before fusing whatever
    /// arrived (a missing report counts as interictal).
    pub gateway_timeout_s: f64,
    pub traffic: TrafficMode,
    /// Orthogonal codes offered by the gateway pool.
    pub available_codes: usize,
}

impl Scenario {
    /// The four-node body layout: implant and controller sit 5 mm apart;
    /// skin-level links span 0.30-0.45 m.
    pub fn default_nodes() -> Vec<Node> {
        vec![
            Node { kind: NodeKind::IeegClassifier, position: [0.0, 0.0, 0.0] },
            Node { kind: NodeKind::Dbs, position: [0.0, 0.0, 0.005] },
            Node { kind: NodeKind::Gateway, position: [0.0, 0.30, 0.05] },
            Node { kind: NodeKind::EcgClassifier, position: [0.0, 0.30, 0.50] },
        ]
    }

    /// Closed-loop scenario with perfect oracle classifiers over a fixed
    /// timeline; callers override sources and knobs as needed.
    pub fn closed_loop(seed: u64, duration_s: f64, labels: LabelTimeline) -> Self {
        Self {
            seed,
            duration_s,
            t_app_s: 4.0,
            payload_bits: 16,
            phy: PhyConfig::default(),
            channel: ChannelModel::default(),
            link_channels: Vec::new(),
            nodes: Self::default_nodes(),
            ecg_source: ClassifierSource::Oracle { sensitivity: 1.0, specificity: 1.0 },
            ieeg_source: ClassifierSource::Oracle { sensitivity: 1.0, specificity: 1.0 },
            labels,
            fusion: FusionConfig::default(),
            node_time_voting: false,
            gateway_timeout_s: 0.5,
            traffic: TrafficMode::ClosedLoop,
            available_codes: PhyConfig::default().spreading_factor,
        }
    }

    /// Constant-bit-rate load scenario over the same node layout.
    pub fn constant_bit_rate(seed: u64, duration_s: f64, per_node_bps: f64) -> Self {
        let mut s = Self::closed_loop(seed, duration_s, Vec::new());
        s.traffic = TrafficMode::ConstantBitRate { per_node_bps };
        s
    }

    pub fn steps(&self) -> u64 {
        (self.duration_s / self.t_app_s).floor() as u64
    }

    fn node_of_kind(&self, kind: NodeKind) -> Result<NodeId> {
        let mut found = None;
        for (i, n) in self.nodes.iter().enumerate() {
            if n.kind == kind {
                if found.is_some() {
                    return Err(NetsimError::Scenario(format!(
                        "more than one {} node",
                        kind.as_str()
                    )));
                }
                found = Some(i);
            }
        }
        found.ok_or_else(|| NetsimError::Scenario(format!("no {} node", kind.as_str())))
    }

    fn validate(&self) -> Result<()> {
        self.phy.validate()?;
        self.channel.validate()?;
        for link in &self.link_channels {
            link.channel.validate()?;
        }
        self.fusion.validate().map_err(|e| NetsimError::Config(e.to_string()))?;
        if self.duration_s <= 0.0 || self.t_app_s <= 0.0 {
            return Err(NetsimError::Config("duration and t_app must be positive".into()));
        }
        if self.gateway_timeout_s <= 0.0 || self.gateway_timeout_s > self.t_app_s {
            return Err(NetsimError::Config(
                "gateway timeout must be positive and at most t_app".into(),
            ));
        }
        validate_payload_bits(self.payload_bits)?;
        if self.nodes.len() != 4 {
            return Err(NetsimError::Scenario(format!(
                "the scenario runs four nodes, got {}",
                self.nodes.len()
            )));
        }
        for kind in
            [NodeKind::IeegClassifier, NodeKind::EcgClassifier, NodeKind::Gateway, NodeKind::Dbs]
        {
            self.node_of_kind(kind)?;
        }
        match self.traffic {
            TrafficMode::ClosedLoop => {
                if (self.labels.len() as u64) < self.steps() {
                    return Err(NetsimError::Scenario(format!(
                        "label timeline covers {} steps but the run has {}",
                        self.labels.len(),
                        self.steps()
                    )));
                }
                for source in [&self.ecg_source, &self.ieeg_source] {
                    match source {
                        ClassifierSource::Oracle { sensitivity, specificity } => {
                            if !(0.0..=1.0).contains(sensitivity)
                                || !(0.0..=1.0).contains(specificity)
                            {
                                return Err(NetsimError::Config(
                                    "oracle sensitivity/specificity must lie in [0, 1]".into(),
                                ));
                            }
                        }
                        ClassifierSource::Probabilities { channels } => {
                            if channels.is_empty() {
                                return Err(NetsimError::Scenario(
                                    "probability source needs at least one channel".into(),
                                ));
                            }
                            if channels.iter().any(|c| (c.len() as u64) < self.steps()) {
                                return Err(NetsimError::Scenario(
                                    "probability stream shorter than the run".into(),
                                ));
                            }
                        }
                    }
                }
            }
            TrafficMode::ConstantBitRate { per_node_bps } => {
                if per_node_bps <= 0.0 {
                    return Err(NetsimError::Config("offered rate must be positive".into()));
                }
                if per_node_bps > self.phy.bits_per_second() {
                    return Err(NetsimError::Capacity(format!(
                        "offered {per_node_bps} bit/s exceeds the {:.1} bit/s per-node PPM rate",
                        self.phy.bits_per_second()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-node frame accounting.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct NodeStats {
    pub node: String,
    pub frames_sent: u64,
    pub frames_delivered: u64,
    pub frames_dropped: u64,
    pub decode_failures: u64,
    /// Successfully decoded application bits per second, by source node.
    pub goodput_bps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimReport {
    pub duration_s: f64,
    pub steps: u64,
    pub per_node: Vec<NodeStats>,
    pub frames_sent: u64,
    pub frames_delivered: u64,
    pub frames_dropped: u64,
    pub drop_rate: f64,
    pub aggregate_goodput_bps: f64,
    pub alerts: u64,
    pub stimulations_received: u64,
    pub alert_latency_min_s: Option<f64>,
    pub alert_latency_mean_s: Option<f64>,
    pub alert_latency_max_s: Option<f64>,
    /// Latency bound every alert satisfied (equals t_app).
    pub alert_latency_bound_s: f64,
    pub fused: Option<MetricsSummary>,
    pub ecg: Option<MetricsSummary>,
    pub ieeg: Option<MetricsSummary>,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub report: SimReport,
    /// One event per line: `timestamp_s kind src dst detail`.
    pub trace: String,
}

struct Flight {
    src: NodeId,
    dst: NodeId,
    /// The application message on board; `None` for constant-bit-rate load
    /// frames.
    msg: Option<AppMessage>,
    frame: MacFrame,
    rx_start_ns: u64,
    rx_end_ns: u64,
}

enum Event {
    WindowReady { step: u64 },
    FrameRxEnd { flight: usize },
    GatewayDeadline { step: u64 },
    CbrTick { node: NodeId },
}

struct Queued {
    time_ns: u64,
    seq: u64,
    event: Event,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.time_ns == other.time_ns && self.seq == other.seq
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        // dequeue order: nondecreasing time, then insertion order
        (self.time_ns, self.seq).cmp(&(other.time_ns, other.seq))
    }
}

#[derive(Default, Clone)]
struct StepState {
    ecg: Option<bool>,
    ieeg: Option<bool>,
    fused: Option<bool>,
}

struct Sim<'a> {
    scenario: &'a Scenario,
    schedule: Schedule,
    codes: Vec<Vec<bool>>,
    implant: NodeId,
    dbs: NodeId,
    gateway: NodeId,
    ecg: NodeId,
    chan_rng: ChaCha8Rng,
    queue: BinaryHeap<std::cmp::Reverse<Queued>>,
    next_seq: u64,
    flights: Vec<Flight>,
    /// Flight ids still relevant for collision checks, per receiving node.
    arrivals: Vec<Vec<usize>>,
    trace: String,
    sent: Vec<u64>,
    delivered: Vec<u64>,
    dropped: Vec<u64>,
    decode_failures: Vec<u64>,
    decoded_ok: Vec<u64>,
    step_state: Vec<StepState>,
    ecg_decisions: Vec<bool>,
    ieeg_decisions: Vec<bool>,
    alerts: u64,
    stimulations: u64,
    latencies_ns: Vec<u64>,
}

impl<'a> Sim<'a> {
    fn push_event(&mut self, time_ns: u64, event: Event) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(std::cmp::Reverse(Queued { time_ns, seq, event }));
    }

    fn trace_line(&mut self, time_ns: u64, kind: &str, src: &str, dst: &str, detail: &str) {
        self.trace.push_str(&fmt_ns(time_ns));
        for part in [kind, src, dst, detail] {
            self.trace.push(' ');
            self.trace.push_str(part);
        }
        self.trace.push('\n');
    }

    fn node_name(&self, id: NodeId) -> &'static str {
        self.scenario.nodes[id].kind.as_str()
    }

    fn link_channel(&self, src: NodeId, dst: NodeId) -> ChannelModel {
        let (from, to) = (self.scenario.nodes[src].kind, self.scenario.nodes[dst].kind);
        self.scenario
            .link_channels
            .iter()
            .find(|l| l.from == from && l.to == to)
            .map_or(self.scenario.channel, |l| l.channel)
    }

    fn send_message(&mut self, now_ns: u64, msg: AppMessage) -> Result<()> {
        self.send_raw(now_ns, msg.source, msg.destination, msg.decision, msg.step_index, Some(msg))
    }

    fn send_cbr(&mut self, now_ns: u64, src: NodeId, dst: NodeId) -> Result<()> {
        self.send_raw(now_ns, src, dst, false, 0, None)
    }

    fn send_raw(
        &mut self,
        now_ns: u64,
        src: NodeId,
        dst: NodeId,
        decision: bool,
        step: u64,
        msg: Option<AppMessage>,
    ) -> Result<()> {
        let code_index = self
            .schedule
            .for_node(src)
            .ok_or_else(|| NetsimError::Scenario(format!("node {src} has no schedule")))?
            .code_index;
        let payload = encode_payload(decision, step, src as u8, self.scenario.payload_bits)?;
        let frame = ppm_modulate(
            &payload,
            &self.codes[code_index],
            src as u32,
            code_index,
            &self.scenario.phy,
            now_ns,
        )?;
        let detail = match msg {
            Some(m) if m.kind == AppMessageKind::ClassificationResult => format!(
                "kind={} step={step} decision={} bits={}",
                m.kind.as_str(),
                u8::from(decision),
                payload.len()
            ),
            Some(m) => format!("kind={} step={step} bits={}", m.kind.as_str(), payload.len()),
            None => format!("kind=cbr bits={}", payload.len()),
        };
        self.sent[src] += 1;
        let (src_name, dst_name) = (self.node_name(src), self.node_name(dst));
        self.trace_line(now_ns, "frame-tx", src_name, dst_name, &detail);

        let dist = distance_m(&self.scenario.nodes[src], &self.scenario.nodes[dst]);
        let channel = self.link_channel(src, dst);
        match transmit(now_ns, frame.duration_ns, dist, &channel, &mut self.chan_rng) {
            Delivery::Delivered { rx_start_ns, rx_end_ns } => {
                let id = self.flights.len();
                self.flights.push(Flight { src, dst, msg, frame, rx_start_ns, rx_end_ns });
                self.arrivals[dst].push(id);
                self.push_event(rx_end_ns, Event::FrameRxEnd { flight: id });
            }
            Delivery::Dropped => {
                self.dropped[src] += 1;
                self.trace_line(now_ns, "frame-drop", src_name, dst_name, &detail);
            }
        }
        Ok(())
    }

    /// Chips of `flight` stomped by overlapping same-hop chips of other
    /// arrivals at the same receiver.
    fn corrupted_chips(&self, flight_id: usize) -> Vec<usize> {
        let f = &self.flights[flight_id];
        let slot = self.scenario.phy.slot_ns() as i128;
        let f_hop = &self.schedule.for_node(f.src).unwrap().hop_sequence;
        let mut corrupted = Vec::new();
        for &other_id in &self.arrivals[f.dst] {
            if other_id == flight_id {
                continue;
            }
            let g = &self.flights[other_id];
            if g.rx_start_ns >= f.rx_end_ns || f.rx_start_ns >= g.rx_end_ns {
                continue;
            }
            let g_hop = &self.schedule.for_node(g.src).unwrap().hop_sequence;
            let g_chips = g.frame.chips.len() as i128;
            for k in 0..f.frame.chips.len() {
                let f_chip_start = f.rx_start_ns as i128 + k as i128 * slot;
                let delta = f_chip_start - g.rx_start_ns as i128;
                let j0 = delta.div_euclid(slot);
                for j in [j0, j0 + 1] {
                    if j < 0 || j >= g_chips {
                        continue;
                    }
                    if (delta - j * slot).abs() < slot
                        && f_hop.offset_at(k) == g_hop.offset_at(j as usize)
                    {
                        corrupted.push(k);
                        break;
                    }
                }
            }
        }
        corrupted.sort_unstable();
        corrupted.dedup();
        corrupted
    }

    fn on_frame_rx(&mut self, now_ns: u64, flight_id: usize) -> Result<()> {
        let (src, dst, msg, rx_start) = {
            let f = &self.flights[flight_id];
            (f.src, f.dst, f.msg, f.rx_start_ns)
        };
        self.delivered[src] += 1;

        // Frames that ended before this one started can no longer collide
        // with anything (all frames in a scenario share one duration).
        let flights = &self.flights;
        self.arrivals[dst].retain(|&id| flights[id].rx_end_ns > rx_start);

        let corrupted = self.corrupted_chips(flight_id);
        let decoded = {
            let mut frame = self.flights[flight_id].frame.clone();
            for &c in &corrupted {
                frame.chips[c] = !frame.chips[c];
            }
            let code_index = self.schedule.for_node(src).unwrap().code_index;
            ppm_demodulate(&frame, &self.codes[code_index]).and_then(|bits| decode_payload(&bits))
        };

        let ok = decoded.is_ok();
        let detail = match msg {
            Some(m) if m.kind == AppMessageKind::ClassificationResult => format!(
                "kind={} step={} ok={} corrupted_chips={}",
                m.kind.as_str(),
                m.step_index,
                u8::from(ok),
                corrupted.len()
            ),
            Some(m) => format!("kind={} step={} ok={}", m.kind.as_str(), m.step_index, u8::from(ok)),
            None => format!("kind=cbr ok={}", u8::from(ok)),
        };
        let (src_name, dst_name) = (self.node_name(src), self.node_name(dst));
        self.trace_line(now_ns, "frame-rx", src_name, dst_name, &detail);

        let payload = match decoded {
            Ok(p) => {
                self.decoded_ok[src] += 1;
                p
            }
            Err(_) => {
                self.decode_failures[src] += 1;
                return Ok(());
            }
        };

        let Some(msg) = msg else {
            return Ok(()); // load frame, no application handling
        };
        match msg.kind {
            AppMessageKind::ClassificationResult => {
                let step = msg.step_index;
                if dst == self.dbs && src == self.implant {
                    // controller relays the implant verdict to the gateway
                    self.send_message(
                        now_ns,
                        AppMessage {
                            kind: AppMessageKind::ClassificationResult,
                            source: self.dbs,
                            destination: self.gateway,
                            step_index: step,
                            decision: payload.decision,
                        },
                    )?;
                } else if dst == self.gateway {
                    let from_ecg = self.scenario.nodes[src].kind == NodeKind::EcgClassifier;
                    let state = &mut self.step_state[step as usize];
                    if from_ecg {
                        state.ecg = Some(payload.decision);
                    } else {
                        state.ieeg = Some(payload.decision);
                    }
                    if state.ecg.is_some() && state.ieeg.is_some() {
                        self.fuse_step(now_ns, step)?;
                    }
                }
            }
            AppMessageKind::StimulationSettings => {
                if dst == self.dbs {
                    self.stimulations += 1;
                    let name = self.node_name(dst);
                    self.trace_line(now_ns, "stimulation", name, "-", &format!("step={}", msg.step_index));
                }
            }
            AppMessageKind::Alert => {
                // alerts never ride the ultrasonic network
                debug_assert!(false, "alert messages are trace events, not frames");
            }
        }
        Ok(())
    }

    fn fuse_step(&mut self, now_ns: u64, step: u64) -> Result<()> {
        if self.step_state[step as usize].fused.is_some() {
            return Ok(());
        }
        let ecg = self.step_state[step as usize].ecg.unwrap_or(false);
        let ieeg = self.step_state[step as usize].ieeg.unwrap_or(false);
        let fused = fuse_modalities(ecg, ieeg, self.scenario.fusion.modality_rule);
        self.step_state[step as usize].fused = Some(fused);
        self.trace_line(
            now_ns,
            "decision",
            "gateway",
            "-",
            &format!(
                "step={step} ecg={} ieeg={} fused={}",
                u8::from(ecg),
                u8::from(ieeg),
                u8::from(fused)
            ),
        );
        if fused {
            let window_close_ns = (step + 1) * to_ns(self.scenario.t_app_s);
            let latency_ns = now_ns - window_close_ns;
            assert!(
                latency_ns <= to_ns(self.scenario.t_app_s),
                "alert latency {} s exceeds t_app",
                latency_ns as f64 / NS_PER_S
            );
            self.alerts += 1;
            self.latencies_ns.push(latency_ns);
            self.trace_line(
                now_ns,
                "alert",
                "gateway",
                "sink",
                &format!("step={step} latency_s={}", fmt_ns(latency_ns)),
            );
            self.send_message(
                now_ns,
                AppMessage {
                    kind: AppMessageKind::StimulationSettings,
                    source: self.gateway,
                    destination: self.dbs,
                    step_index: step,
                    decision: true,
                },
            )?;
        }
        Ok(())
    }
}

/// Pre-computes each classifier node's per-step verdicts; the network cannot
/// influence them, so they are a pure function of the scenario.
fn node_decisions(
    source: &ClassifierSource,
    labels: &[Option<Label>],
    steps: u64,
    fusion: &FusionConfig,
    time_voting: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<bool>> {
    let mut raw = Vec::with_capacity(steps as usize);
    match source {
        ClassifierSource::Oracle { sensitivity, specificity } => {
            for label in labels.iter().take(steps as usize) {
                let truth = label.unwrap_or(Label::Interictal);
                let u: f64 = rng.random();
                raw.push(match truth {
                    Label::Preictal => u < *sensitivity,
                    Label::Interictal => u < 1.0 - *specificity,
                });
            }
        }
        ClassifierSource::Probabilities { channels } => {
            for step in 0..steps as usize {
                let decisions: Vec<bool> = channels
                    .iter()
                    .map(|c| threshold_decision(c[step], fusion.threshold))
                    .collect();
                raw.push(
                    channel_vote(&decisions).map_err(|e| NetsimError::Config(e.to_string()))?,
                );
            }
        }
    }
    if !time_voting {
        return Ok(raw);
    }
    let mut buf = DecisionBuffer::new(fusion.time_window);
    Ok(raw
        .into_iter()
        .map(|d| {
            buf.push(d);
            time_vote(&buf)
        })
        .collect())
}

/// Runs the scenario to completion. Deterministic: identical scenario and
/// seed produce a byte-identical trace.
pub fn run_simulation(scenario: &Scenario) -> Result<SimOutput> {
    scenario.validate()?;
    let schedule = assign_codes(
        scenario.nodes.len(),
        scenario.available_codes,
        &scenario.phy,
        scenario.seed,
    )?;
    let codes = walsh_codes(scenario.phy.spreading_factor);
    let steps = scenario.steps();

    let (ecg_decisions, ieeg_decisions) = if matches!(scenario.traffic, TrafficMode::ClosedLoop) {
        let mut ecg_rng = stream_rng(scenario.seed, "oracle-ecg");
        let mut ieeg_rng = stream_rng(scenario.seed, "oracle-ieeg");
        (
            node_decisions(
                &scenario.ecg_source,
                &scenario.labels,
                steps,
                &scenario.fusion,
                scenario.node_time_voting,
                &mut ecg_rng,
            )?,
            node_decisions(
                &scenario.ieeg_source,
                &scenario.labels,
                steps,
                &scenario.fusion,
                scenario.node_time_voting,
                &mut ieeg_rng,
            )?,
        )
    } else {
        (Vec::new(), Vec::new())
    };

    let mut sim = Sim {
        implant: scenario.node_of_kind(NodeKind::IeegClassifier)?,
        dbs: scenario.node_of_kind(NodeKind::Dbs)?,
        gateway: scenario.node_of_kind(NodeKind::Gateway)?,
        ecg: scenario.node_of_kind(NodeKind::EcgClassifier)?,
        scenario,
        schedule,
        codes,
        chan_rng: stream_rng(scenario.seed, "channel-loss"),
        queue: BinaryHeap::new(),
        next_seq: 0,
        flights: Vec::new(),
        arrivals: vec![Vec::new(); scenario.nodes.len()],
        trace: String::new(),
        sent: vec![0; scenario.nodes.len()],
        delivered: vec![0; scenario.nodes.len()],
        dropped: vec![0; scenario.nodes.len()],
        decode_failures: vec![0; scenario.nodes.len()],
        decoded_ok: vec![0; scenario.nodes.len()],
        step_state: vec![StepState::default(); steps as usize],
        ecg_decisions,
        ieeg_decisions,
        alerts: 0,
        stimulations: 0,
        latencies_ns: Vec::new(),
    };

    // gateway control message at t = 0: the code/hop schedule
    for i in 0..sim.schedule.assignments.len() {
        let (node, code_index, hop0) = {
            let a = &sim.schedule.assignments[i];
            (a.node, a.code_index, a.hop_sequence.offsets[0])
        };
        let dst = sim.node_name(node);
        sim.trace_line(0, "control", "gateway", dst, &format!("code={code_index} hop0={hop0}"));
    }

    let t_app_ns = to_ns(scenario.t_app_s);
    let duration_ns = to_ns(scenario.duration_s);
    let cbr_interval_ns = match scenario.traffic {
        TrafficMode::ClosedLoop => {
            for step in 0..steps {
                sim.push_event((step + 1) * t_app_ns, Event::WindowReady { step });
            }
            0
        }
        TrafficMode::ConstantBitRate { per_node_bps } => {
            for node in 0..scenario.nodes.len() {
                sim.push_event(0, Event::CbrTick { node });
            }
            to_ns(scenario.payload_bits as f64 / per_node_bps)
        }
    };

    let mut last_time = 0u64;
    while let Some(std::cmp::Reverse(q)) = sim.queue.pop() {
        debug_assert!(q.time_ns >= last_time, "event queue went backwards");
        last_time = q.time_ns;
        match q.event {
            Event::WindowReady { step } => {
                let ecg_d = sim.ecg_decisions[step as usize];
                let ieeg_d = sim.ieeg_decisions[step as usize];
                sim.trace_line(
                    q.time_ns,
                    "window-ready",
                    "ecg",
                    "-",
                    &format!("step={step} decision={}", u8::from(ecg_d)),
                );
                sim.trace_line(
                    q.time_ns,
                    "window-ready",
                    "ieeg",
                    "-",
                    &format!("step={step} decision={}", u8::from(ieeg_d)),
                );
                let (ecg, gateway, implant, dbs) = (sim.ecg, sim.gateway, sim.implant, sim.dbs);
                sim.send_message(
                    q.time_ns,
                    AppMessage {
                        kind: AppMessageKind::ClassificationResult,
                        source: ecg,
                        destination: gateway,
                        step_index: step,
                        decision: ecg_d,
                    },
                )?;
                sim.send_message(
                    q.time_ns,
                    AppMessage {
                        kind: AppMessageKind::ClassificationResult,
                        source: implant,
                        destination: dbs,
                        step_index: step,
                        decision: ieeg_d,
                    },
                )?;
                sim.push_event(
                    q.time_ns + to_ns(scenario.gateway_timeout_s),
                    Event::GatewayDeadline { step },
                );
            }
            Event::FrameRxEnd { flight } => sim.on_frame_rx(q.time_ns, flight)?,
            Event::GatewayDeadline { step } => sim.fuse_step(q.time_ns, step)?,
            Event::CbrTick { node } => {
                let dst = match scenario.nodes[node].kind {
                    NodeKind::IeegClassifier | NodeKind::Gateway => sim.dbs,
                    _ => sim.gateway,
                };
                sim.send_cbr(q.time_ns, node, dst)?;
                let next = q.time_ns + cbr_interval_ns;
                if next < duration_ns {
                    sim.push_event(next, Event::CbrTick { node });
                }
            }
        }
    }

    // conservation: every frame either arrived or was dropped
    for node in 0..scenario.nodes.len() {
        assert_eq!(
            sim.sent[node],
            sim.delivered[node] + sim.dropped[node],
            "frame conservation violated at node {node}"
        );
    }

    let per_node: Vec<NodeStats> = (0..scenario.nodes.len())
        .map(|i| NodeStats {
            node: scenario.nodes[i].kind.as_str().to_string(),
            frames_sent: sim.sent[i],
            frames_delivered: sim.delivered[i],
            frames_dropped: sim.dropped[i],
            decode_failures: sim.decode_failures[i],
            goodput_bps: sim.decoded_ok[i] as f64 * scenario.payload_bits as f64
                / scenario.duration_s,
        })
        .collect();
    let frames_sent: u64 = sim.sent.iter().sum();
    let frames_dropped: u64 = sim.dropped.iter().sum();
    let frames_delivered: u64 = sim.delivered.iter().sum();

    // score the fused and per-modality streams on labeled steps
    let (mut fused_d, mut ecg_d, mut ieeg_d, mut truth) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    if matches!(scenario.traffic, TrafficMode::ClosedLoop) {
        for step in 0..steps as usize {
            if let Some(label) = scenario.labels[step] {
                let state = &sim.step_state[step];
                fused_d.push(state.fused.unwrap_or(false));
                ecg_d.push(state.ecg.unwrap_or(false));
                ieeg_d.push(state.ieeg.unwrap_or(false));
                truth.push(label);
            }
        }
    }
    let summarize = |decisions: &[bool]| -> Option<MetricsSummary> {
        if truth.is_empty() {
            return None;
        }
        let cm = confusion_from_decisions(decisions, &truth).ok()?;
        Some(MetricsSummary::from_confusion(&cm))
    };

    let report = SimReport {
        duration_s: scenario.duration_s,
        steps,
        frames_sent,
        frames_delivered,
        frames_dropped,
        drop_rate: if frames_sent > 0 {
            frames_dropped as f64 / frames_sent as f64
        } else {
            0.0
        },
        aggregate_goodput_bps: per_node.iter().map(|n| n.goodput_bps).sum(),
        per_node,
        alerts: sim.alerts,
        stimulations_received: sim.stimulations,
        alert_latency_min_s: sim.latencies_ns.iter().min().map(|&ns| ns as f64 / NS_PER_S),
        alert_latency_mean_s: if sim.latencies_ns.is_empty() {
            None
        } else {
            Some(
                sim.latencies_ns.iter().sum::<u64>() as f64
                    / sim.latencies_ns.len() as f64
                    / NS_PER_S,
            )
        },
        alert_latency_max_s: sim.latencies_ns.iter().max().map(|&ns| ns as f64 / NS_PER_S),
        alert_latency_bound_s: scenario.t_app_s,
        fused: summarize(&fused_d),
        ecg: summarize(&ecg_d),
        ieeg: summarize(&ieeg_d),
    };
    Ok(SimOutput { report, trace: sim.trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_interictal(steps: usize) -> LabelTimeline {
        vec![Some(Label::Interictal); steps]
    }

    fn all_preictal(steps: usize) -> LabelTimeline {
        vec![Some(Label::Preictal); steps]
    }

    #[test]
    fn interictal_oracles_raise_no_alerts() {
        let scenario = Scenario::closed_loop(1, 400.0, all_interictal(100));
        let out = run_simulation(&scenario).unwrap();
        assert_eq!(out.report.alerts, 0);
        assert_eq!(out.report.stimulations_received, 0);
        assert!(!out.trace.contains(" alert "));
    }

    #[test]
    fn lossless_preictal_run_alerts_every_step_after_warmup() {
        let mut scenario = Scenario::closed_loop(2, 400.0, all_preictal(100));
        scenario.channel.loss_probability = 0.0;
        scenario.node_time_voting = true;
        let out = run_simulation(&scenario).unwrap();
        // 15-step warm-up, then one alert per step
        assert_eq!(out.report.alerts, 100 - 14);
        assert_eq!(out.report.stimulations_received, out.report.alerts);
        // event chain: ecg frame direct, ieeg frame via relay; the slowest leg
        // bounds the fuse time: two hops of propagation plus two frame
        // durations, all far below t_app
        let frame_s = 16.0 * 8.0 * 20e-6;
        let worst_prop = 0.5 / 1540.0;
        let bound = 2.0 * frame_s + 2.0 * worst_prop + 1e-6;
        assert!(
            out.report.alert_latency_max_s.unwrap() <= bound,
            "latency {} > bound {bound}",
            out.report.alert_latency_max_s.unwrap()
        );
        assert!(out.report.alert_latency_max_s.unwrap() <= out.report.alert_latency_bound_s);
    }

    #[test]
    fn trace_is_byte_identical_across_runs() {
        let mut scenario = Scenario::closed_loop(3, 200.0, all_preictal(50));
        scenario.ecg_source = ClassifierSource::Oracle { sensitivity: 0.9, specificity: 0.95 };
        scenario.ieeg_source = ClassifierSource::Oracle { sensitivity: 0.8, specificity: 0.99 };
        let a = run_simulation(&scenario).unwrap();
        let b = run_simulation(&scenario).unwrap();
        assert_eq!(a.trace, b.trace);
        let mut other = scenario.clone();
        other.seed = 4;
        let c = run_simulation(&other).unwrap();
        assert_ne!(a.trace, c.trace);
    }

    #[test]
    fn frame_conservation_and_drop_rate() {
        let scenario = Scenario::constant_bit_rate(5, 80.0, 5000.0);
        let out = run_simulation(&scenario).unwrap();
        assert!(out.report.frames_sent >= 100_000, "sent {}", out.report.frames_sent);
        assert_eq!(
            out.report.frames_sent,
            out.report.frames_delivered + out.report.frames_dropped
        );
        assert!(
            (out.report.drop_rate - 0.005).abs() <= 0.001,
            "drop rate {}",
            out.report.drop_rate
        );
        // delivered >= offered * (1 - loss), minus nothing else: collisions
        // are impossible with disjoint hop offsets
        assert!(out.report.aggregate_goodput_bps >= 19_800.0);
        let failures: u64 = out.report.per_node.iter().map(|n| n.decode_failures).sum();
        assert_eq!(failures, 0);
    }

    #[test]
    fn concurrent_frames_with_distinct_hops_all_decode() {
        let mut scenario = Scenario::constant_bit_rate(6, 10.0, 6000.0);
        scenario.channel.loss_probability = 0.0;
        let out = run_simulation(&scenario).unwrap();
        // every node transmits simultaneously from t = 0 at ~3 ms spacing
        assert_eq!(out.report.frames_dropped, 0);
        let failures: u64 = out.report.per_node.iter().map(|n| n.decode_failures).sum();
        assert_eq!(failures, 0);
        assert_eq!(out.report.frames_delivered, out.report.frames_sent);
    }

    /// Same hop offsets on overlapping transmissions must corrupt chips and
    /// surface as decode failures, not as silent wrong bits.
    #[test]
    fn shared_hop_offsets_collide() {
        let mut scenario = Scenario::constant_bit_rate(7, 10.0, 6000.0);
        scenario.channel.loss_probability = 0.0;
        scenario.phy.hop_positions = 1; // every node shares the one offset
        let out = run_simulation(&scenario).unwrap();
        let failures: u64 = out.report.per_node.iter().map(|n| n.decode_failures).sum();
        assert!(failures > 0, "expected collision-induced decode failures");
    }

    #[test]
    fn dropped_reports_fall_back_to_interictal_at_the_deadline() {
        let mut scenario = Scenario::closed_loop(8, 120.0, all_preictal(30));
        scenario.channel.loss_probability = 1.0; // nothing arrives
        let out = run_simulation(&scenario).unwrap();
        assert_eq!(out.report.alerts, 0);
        // the gateway still scored every step, as all-interictal
        let fused = out.report.fused.unwrap();
        assert_eq!(fused.confusion.fn_, 30);
        assert_eq!(fused.confusion.tp, 0);
    }

    #[test]
    fn oracle_rates_are_reflected_in_the_report() {
        let steps = 5000;
        let mut scenario =
            Scenario::closed_loop(9, steps as f64 * 4.0, all_interictal(steps));
        scenario.channel.loss_probability = 0.0;
        scenario.ecg_source = ClassifierSource::Oracle { sensitivity: 0.94, specificity: 0.9 };
        scenario.ieeg_source = ClassifierSource::Oracle { sensitivity: 0.94, specificity: 0.9 };
        let out = run_simulation(&scenario).unwrap();
        let ecg_spec = out.report.ecg.unwrap().specificity.unwrap();
        assert!((ecg_spec - 0.9).abs() < 0.02, "ecg specificity {ecg_spec}");
        // AND fusion: false alarms need both oracles wrong at once
        let fused_spec = out.report.fused.unwrap().specificity.unwrap();
        assert!(fused_spec > ecg_spec);
    }

    /// The four application message classes ride their prescribed links:
    /// (i) classification implant -> controller, (ii) classification skin
    /// nodes -> gateway, (iii) stimulation gateway -> controller, (iv) alert
    /// gateway -> sink.
    #[test]
    fn message_taxonomy_uses_the_prescribed_links() {
        let mut scenario = Scenario::closed_loop(11, 200.0, all_preictal(50));
        scenario.channel.loss_probability = 0.0;
        let trace = run_simulation(&scenario).unwrap().trace;
        for needle in [
            " frame-tx ieeg dbs kind=classification",
            " frame-tx dbs gateway kind=classification",
            " frame-tx ecg gateway kind=classification",
            " frame-tx gateway dbs kind=stimulation",
            " alert gateway sink ",
        ] {
            assert!(trace.contains(needle), "trace lacks `{needle}`");
        }
        // and nothing flows along undeclared links
        assert!(!trace.contains(" frame-tx ieeg gateway"));
        assert!(!trace.contains(" frame-tx gateway ecg"));
    }

    /// Trace timestamps never go backwards, and every frame-rx for a given
    /// step follows its frame-tx.
    #[test]
    fn trace_times_are_causal() {
        let mut scenario = Scenario::closed_loop(12, 400.0, all_preictal(100));
        scenario.ecg_source = ClassifierSource::Oracle { sensitivity: 0.7, specificity: 0.9 };
        let trace = run_simulation(&scenario).unwrap().trace;
        let mut last = 0.0f64;
        let mut tx_seen = 0u32;
        let mut rx_seen = 0u32;
        for line in trace.lines() {
            let mut parts = line.split(' ');
            let t: f64 = parts.next().unwrap().parse().unwrap();
            assert!(t >= last, "timestamps regressed at `{line}`");
            last = t;
            match parts.next().unwrap() {
                "frame-tx" => tx_seen += 1,
                "frame-rx" => {
                    rx_seen += 1;
                    assert!(rx_seen <= tx_seen, "rx before any matching tx at `{line}`");
                }
                _ => {}
            }
        }
        assert!(tx_seen > 0 && rx_seen > 0);
    }


    /// A dead implant link silences only the iEEG modality; the ECG path
    /// keeps flowing and an OR gateway still alarms.
    #[test]
    fn per_link_override_silences_one_path() {
        let mut scenario = Scenario::closed_loop(13, 400.0, all_preictal(100));
        scenario.channel.loss_probability = 0.0;
        scenario.link_channels = vec![LinkChannel {
            from: NodeKind::IeegClassifier,
            to: NodeKind::Dbs,
            channel: ChannelModel { loss_probability: 1.0, ..ChannelModel::default() },
        }];
        let out = run_simulation(&scenario).unwrap();
        let ieeg = out.report.ieeg.unwrap();
        assert_eq!(ieeg.confusion.tp, 0, "no implant report should reach the gateway");
        assert_eq!(out.report.alerts, 0, "AND fusion cannot alarm without the implant");

        scenario.fusion.modality_rule = crate::predictor::ModalityRule::Or;
        let out = run_simulation(&scenario).unwrap();
        assert_eq!(out.report.alerts, 100, "OR fusion rides the intact ECG path");
    }

    #[test]
    fn scenario_validation_rejects_bad_setups() {
        let mut s = Scenario::closed_loop(1, 40.0, all_interictal(10));
        s.nodes.pop();
        assert!(matches!(run_simulation(&s), Err(NetsimError::Scenario(_))));

        let mut s = Scenario::closed_loop(1, 40.0, all_interictal(2));
        s.labels.truncate(2);
        assert!(matches!(run_simulation(&s), Err(NetsimError::Scenario(_))));

        let s = Scenario::constant_bit_rate(1, 10.0, 7000.0); // above 6250 bit/s
        assert!(matches!(run_simulation(&s), Err(NetsimError::Capacity(_))));

        let mut s = Scenario::closed_loop(1, 40.0, all_interictal(10));
        s.available_codes = 3;
        assert!(matches!(run_simulation(&s), Err(NetsimError::Capacity(_))));
    }
}
