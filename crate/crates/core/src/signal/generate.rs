//! Deterministic synthetic recording generator.
//!
//! Onsets are placed arithmetically — no randomness — so that after labeling
//! the preictal window fraction lands on the configured imbalance ratio. The
//! waveform itself is seeded: colored background noise, a patient oscillation,
//! and white noise, with the preictal shift applied inside preictal zones.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{GeneratorConfig, Modality, Recording, Result, SignalError};
use crate::rng::stream_rng;
use crate::WINDOW_SECONDS;

/// Rate of the slow amplitude modulation applied in preictal zones.
const AM_RATE_HZ: f64 = 0.5;
/// Sinusoid components used to fill one background band.
const COMPONENTS_PER_BAND: usize = 6;

/// Synthesizes a labeled-onset recording.
///
/// The output is a pure function of `(cfg, modality, channel_count,
/// duration_s)`. Labeling the result with the same horizon/exclusion as `cfg`
/// yields a preictal fraction within ±5% relative of
/// `imbalance_ratio / (1 + imbalance_ratio)`.
pub fn generate_recording(
    cfg: &GeneratorConfig,
    modality: Modality,
    channel_count: usize,
    duration_s: f64,
) -> Result<Recording> {
    cfg.validate()?;
    if duration_s <= 0.0 {
        return Err(SignalError::Config("duration_s must be positive".into()));
    }
    if channel_count == 0 {
        return Err(SignalError::Config("channel_count must be positive".into()));
    }
    if modality == Modality::Ecg && channel_count != 1 {
        return Err(SignalError::Config(format!(
            "ECG is single-channel, got channel_count = {channel_count}"
        )));
    }
    if cfg.onset_count > 0 && duration_s < 2.0 * cfg.horizon_s {
        return Err(SignalError::Config(format!(
            "duration_s = {duration_s} is shorter than twice the {} s horizon",
            cfg.horizon_s
        )));
    }

    let onsets = place_onsets(cfg, duration_s)?;
    let sample_count = (duration_s * f64::from(cfg.sample_rate_hz)) as usize;
    let zones = ZoneIndex::new(&onsets, cfg.horizon_s, cfg.exclusion_s);

    let mut samples = Vec::with_capacity(channel_count);
    for ch in 0..channel_count {
        samples.push(render_channel(cfg, &zones, onsets.len(), sample_count, ch));
    }

    let rec = Recording {
        patient_id: String::new(),
        modality,
        sample_rate_hz: cfg.sample_rate_hz,
        samples,
        seizure_onsets: onsets,
    };
    debug_assert!(rec.validate().is_ok());
    Ok(rec)
}

/// Places `cfg.onset_count` onsets on the 4 s grid so the labeled
/// preictal:interictal ratio matches `cfg.imbalance_ratio`.
///
/// Fully separated onsets contribute `horizon` of preictal time each; when
/// that is too much for the requested ratio, onsets are pulled together so
/// their horizons overlap (or the first horizon is clipped at the recording
/// start), which removes preictal time without touching the interictal count.
fn place_onsets(cfg: &GeneratorConfig, duration_s: f64) -> Result<Vec<f64>> {
    let n = cfg.onset_count as u64;
    if n == 0 {
        return Ok(Vec::new());
    }
    let total_w = (duration_s / WINDOW_SECONDS).floor() as u64;
    let horizon_w = (cfg.horizon_s / WINDOW_SECONDS) as u64;
    let excl_w = (cfg.exclusion_s / WINDOW_SECONDS) as u64;

    if total_w <= n * excl_w {
        return Err(SignalError::Config("recording too short for the exclusion zones".into()));
    }
    let usable_w = total_w - n * excl_w;
    let fraction = cfg.imbalance_ratio / (1.0 + cfg.imbalance_ratio);
    let mut target_pre = (usable_w as f64 * fraction).round() as u64;

    let max_pre = n * horizon_w;
    if target_pre > max_pre {
        // Tolerate pure rounding spill, otherwise the ratio is unreachable.
        let feasible = max_pre as f64 / usable_w as f64;
        if (feasible - fraction).abs() / fraction > 0.05 {
            return Err(SignalError::Config(format!(
                "imbalance_ratio {} is unreachable: {n} onsets supply at most {max_pre} \
                 preictal windows but {target_pre} are needed; raise onset_count or shrink duration",
                cfg.imbalance_ratio
            )));
        }
        target_pre = max_pre;
    }
    if target_pre == 0 {
        return Err(SignalError::Config("duration too short to label any preictal window".into()));
    }

    let window = WINDOW_SECONDS;
    let mut onsets = Vec::with_capacity(n as usize);
    if target_pre <= horizon_w {
        // Clipped-first layout: the first horizon is cut at the recording
        // start; later onsets sit right behind the previous exclusion zone and
        // add no preictal time.
        let first = target_pre as f64 * window;
        onsets.push(first);
        for k in 1..n {
            onsets.push(first + k as f64 * cfg.exclusion_s);
        }
    } else {
        // First onset gets a full horizon; the surplus spreads over the rest.
        let surplus = target_pre - horizon_w;
        let per = surplus / (n - 1);
        let rem = surplus % (n - 1);
        let leftover_w = usable_w - target_pre;
        let lead_w = leftover_w / 2;

        let mut t = (lead_w + horizon_w) as f64 * window;
        onsets.push(t);
        for k in 1..n {
            let extra = per + u64::from(k <= rem);
            t += (excl_w + extra) as f64 * window;
            onsets.push(t);
        }
    }

    debug_assert!(onsets.last().copied().unwrap_or(0.0) + cfg.exclusion_s <= duration_s + 1e-9);
    Ok(onsets)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Zone {
    Interictal,
    /// Carries the index of the onset whose horizon this span belongs to, so
    /// each zone can get its own oscillation phase.
    Preictal(usize),
    Ictal,
}

/// Sorted zone boundaries for O(log n) state lookup per sample.
struct ZoneIndex {
    /// (start_s, end_s, zone), non-overlapping, sorted by start.
    spans: Vec<(f64, f64, Zone)>,
}

impl ZoneIndex {
    fn new(onsets: &[f64], horizon_s: f64, exclusion_s: f64) -> Self {
        let mut spans = Vec::new();
        for (k, &o) in onsets.iter().enumerate() {
            spans.push((o - horizon_s, o, Zone::Preictal(k)));
            spans.push((o, o + exclusion_s, Zone::Ictal));
        }
        spans.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        // Ictal wins over an overlapping preictal tail from a later onset.
        let mut resolved: Vec<(f64, f64, Zone)> = Vec::with_capacity(spans.len());
        for (start, end, zone) in spans {
            let start = match resolved.last() {
                Some(&(_, prev_end, _)) => start.max(prev_end),
                None => start,
            };
            if start < end {
                resolved.push((start, end, zone));
            }
        }
        Self { spans: resolved }
    }

    fn zone_at(&self, t: f64) -> Zone {
        let idx = self.spans.partition_point(|&(start, _, _)| start <= t);
        if idx == 0 {
            return Zone::Interictal;
        }
        let (_, end, zone) = self.spans[idx - 1];
        if t < end {
            zone
        } else {
            Zone::Interictal
        }
    }
}

fn render_channel(
    cfg: &GeneratorConfig,
    zones: &ZoneIndex,
    onset_count: usize,
    sample_count: usize,
    channel: usize,
) -> Vec<f32> {
    let mut rng: ChaCha8Rng = stream_rng(cfg.seed, &format!("signal-ch{channel}"));
    let two_pi = 2.0 * std::f64::consts::PI;

    // Fixed per-band frequency grid with seeded phases.
    let mut components: Vec<(f64, f64, f64)> = Vec::new(); // (freq, amplitude, phase01)
    for band in &cfg.background {
        let step = (band.hi_hz - band.lo_hz) / COMPONENTS_PER_BAND as f64;
        let amp = band.rms * (2.0 / COMPONENTS_PER_BAND as f64).sqrt();
        for m in 0..COMPONENTS_PER_BAND {
            let freq = band.lo_hz + (m as f64 + 0.5) * step;
            components.push((freq, amp, rng.random::<f64>()));
        }
    }
    let osc_phase: f64 = rng.random();
    // The shifted oscillation emerges anew before each seizure, so every
    // preictal zone draws its own carrier and modulation phase. Windows are
    // integer carrier periods long; without per-zone phases a whole recording
    // would expose only one preictal phase for a model to latch onto.
    let zone_phases: Vec<(f64, f64)> =
        (0..onset_count).map(|_| (rng.random(), rng.random())).collect();

    let dt = 1.0 / f64::from(cfg.sample_rate_hz);
    let shift = cfg.preictal_shift;
    let mut out = Vec::with_capacity(sample_count);
    for i in 0..sample_count {
        let t = i as f64 * dt;
        let mut x = 0.0;
        for &(freq, amp, phase) in &components {
            x += amp * (two_pi * (freq * t + phase).fract()).sin();
        }
        let osc = match zones.zone_at(t) {
            Zone::Preictal(zone) => {
                let (carrier_phase, am_phase) = zone_phases[zone];
                let carrier = (two_pi
                    * ((cfg.oscillation_hz + shift.freq_delta_hz) * t + carrier_phase).fract())
                .sin();
                let am =
                    1.0 + shift.mod_depth * (two_pi * (AM_RATE_HZ * t + am_phase).fract()).sin();
                cfg.oscillation_amplitude * am * carrier
            }
            _ => {
                cfg.oscillation_amplitude
                    * (two_pi * (cfg.oscillation_hz * t + osc_phase).fract()).sin()
            }
        };
        let noise: f64 = rng.sample(StandardNormal);
        out.push((x + osc + cfg.noise_floor * noise) as f32);
    }
    out
}
