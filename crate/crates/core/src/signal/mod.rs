//! Synthetic biosignal generation, windowing, labeling, filtering, splits,
//! and the recording file format.
//!
//! Recordings are stand-ins for long-term clinical ECG/iEEG data: colored
//! background noise plus a patient-level oscillation, where pre-seizure
//! segments shift the oscillation frequency and add amplitude modulation.
//! Both the strength of that shift and the preictal/interictal class ratio
//! are configuration knobs, so classifier experiments can dial difficulty
//! and imbalance independently.

mod filter;
mod generate;
mod io;
mod split;

pub use filter::preprocess;
pub use generate::generate_recording;
pub use io::{load_recording, save_recording};
pub use split::split_dataset;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::WINDOW_SECONDS;

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("format error at offset {offset}: {detail}")]
    Format { offset: u64, detail: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, SignalError>;

/// Sensor modality of a recording. ECG is always single-channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modality {
    Ecg,
    Ieeg,
}

impl Modality {
    pub fn code(self) -> u8 {
        match self {
            Modality::Ecg => 0,
            Modality::Ieeg => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Modality::Ecg),
            1 => Some(Modality::Ieeg),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Ecg => "ecg",
            Modality::Ieeg => "ieeg",
        }
    }
}

/// Ground-truth window class. Preictal (pre-seizure) is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Preictal,
    Interictal,
}

impl Label {
    pub fn is_preictal(self) -> bool {
        self == Label::Preictal
    }
}

/// A continuous multi-channel recording with annotated seizure onsets.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub patient_id: String,
    pub modality: Modality,
    pub sample_rate_hz: u32,
    /// Channel-major samples; all channels have equal length.
    pub samples: Vec<Vec<f32>>,
    /// Onset times in seconds from recording start, strictly increasing.
    pub seizure_onsets: Vec<f64>,
}

impl Recording {
    pub fn channel_count(&self) -> usize {
        self.samples.len()
    }

    pub fn sample_count(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    pub fn duration_s(&self) -> f64 {
        self.sample_count() as f64 / f64::from(self.sample_rate_hz)
    }

    /// Checks the structural invariants: equal channel lengths, positive rate,
    /// single-channel ECG, strictly increasing onsets within the recording.
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate_hz == 0 {
            return Err(SignalError::Config("sample_rate_hz must be positive".into()));
        }
        if self.samples.is_empty() {
            return Err(SignalError::Config("recording has no channels".into()));
        }
        let len = self.samples[0].len();
        if self.samples.iter().any(|c| c.len() != len) {
            return Err(SignalError::Config("channels have unequal lengths".into()));
        }
        if self.modality == Modality::Ecg && self.samples.len() != 1 {
            return Err(SignalError::Config(format!(
                "ECG recordings have exactly one channel, got {}",
                self.samples.len()
            )));
        }
        let duration = self.duration_s();
        for pair in self.seizure_onsets.windows(2) {
            if pair[1] <= pair[0] {
                return Err(SignalError::Config("seizure onsets must be strictly increasing".into()));
            }
        }
        if self
            .seizure_onsets
            .iter()
            .any(|&o| !(0.0..=duration).contains(&o))
        {
            return Err(SignalError::Config("seizure onset outside the recording".into()));
        }
        Ok(())
    }
}

/// One 4-second, fixed-rate signal slice with its ground-truth label.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWindow {
    /// Seconds from recording start.
    pub start_time: f64,
    pub sample_rate_hz: u32,
    /// Channel-major, `4 * sample_rate_hz` samples per channel.
    pub channels: Vec<Vec<f32>>,
    pub label: Label,
}

impl SampleWindow {
    pub fn samples_per_channel(&self) -> usize {
        (WINDOW_SECONDS * f64::from(self.sample_rate_hz)) as usize
    }
}

/// Horizon/exclusion rules applied when labeling windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelConfig {
    /// Prediction horizon: windows starting within this many seconds before an
    /// onset are Preictal. A window starting exactly at `onset - horizon_s` is
    /// Preictal.
    pub horizon_s: f64,
    /// Windows overlapping `[onset, onset + exclusion_s)` are dropped so ictal
    /// and immediate postictal data never pollute the interictal class.
    pub exclusion_s: f64,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self { horizon_s: 3600.0, exclusion_s: 600.0 }
    }
}

/// Amplitude modulation and oscillation frequency shift that distinguish
/// preictal segments from background. Larger values separate the classes
/// more; zero makes them indistinguishable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreictalShift {
    /// Depth of the slow amplitude modulation, in [0, 1].
    pub mod_depth: f64,
    /// Shift of the patient oscillation frequency, Hz.
    pub freq_delta_hz: f64,
}

impl PreictalShift {
    /// Strong, cleanly learnable shift.
    pub fn separable() -> Self {
        Self { mod_depth: 0.8, freq_delta_hz: 4.0 }
    }

    /// Weak shift for hard-mode experiments.
    pub fn subtle() -> Self {
        Self { mod_depth: 0.15, freq_delta_hz: 0.5 }
    }
}

impl Default for PreictalShift {
    fn default() -> Self {
        Self::separable()
    }
}

/// One band of the colored background spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo_hz: f64,
    pub hi_hz: f64,
    /// Target RMS amplitude for the whole band.
    pub rms: f64,
}

/// Everything the recording generator needs; recordings are a deterministic
/// function of this struct plus the modality/channel/duration arguments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub sample_rate_hz: u32,
    /// Target preictal:interictal window-count ratio after labeling.
    pub imbalance_ratio: f64,
    pub onset_count: u32,
    /// Must match the horizon used later by labeling.
    pub horizon_s: f64,
    pub exclusion_s: f64,
    /// 1/f-style background, strongest bands lowest.
    pub background: Vec<Band>,
    /// Patient-level oscillation frequency and amplitude.
    pub oscillation_hz: f64,
    pub oscillation_amplitude: f64,
    pub preictal_shift: PreictalShift,
    /// Standard deviation of the additive white noise.
    pub noise_floor: f64,
}

/// Observed per-patient range of the preictal:interictal ratio.
pub const IMBALANCE_RATIO_MIN: f64 = 0.020;
pub const IMBALANCE_RATIO_MAX: f64 = 0.233;
/// Mean ratio across patients; the generator default.
pub const IMBALANCE_RATIO_MEAN: f64 = 0.0826;

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sample_rate_hz: 256,
            imbalance_ratio: IMBALANCE_RATIO_MEAN,
            onset_count: 1,
            horizon_s: 3600.0,
            exclusion_s: 600.0,
            background: vec![
                Band { lo_hz: 0.5, hi_hz: 4.0, rms: 1.0 },
                Band { lo_hz: 4.0, hi_hz: 8.0, rms: 0.7 },
                Band { lo_hz: 8.0, hi_hz: 13.0, rms: 0.5 },
                Band { lo_hz: 13.0, hi_hz: 30.0, rms: 0.3 },
            ],
            oscillation_hz: 10.0,
            oscillation_amplitude: 1.0,
            preictal_shift: PreictalShift::separable(),
            noise_floor: 0.1,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate_hz == 0 {
            return Err(SignalError::Config("sample_rate_hz must be positive".into()));
        }
        if !(IMBALANCE_RATIO_MIN..=IMBALANCE_RATIO_MAX).contains(&self.imbalance_ratio) {
            return Err(SignalError::Config(format!(
                "imbalance_ratio {} outside the observed range [{IMBALANCE_RATIO_MIN}, {IMBALANCE_RATIO_MAX}]",
                self.imbalance_ratio
            )));
        }
        if self.horizon_s <= 0.0 || self.exclusion_s < 0.0 {
            return Err(SignalError::Config("horizon must be positive, exclusion nonnegative".into()));
        }
        if self.exclusion_s >= self.horizon_s {
            return Err(SignalError::Config("exclusion_s must be smaller than horizon_s".into()));
        }
        if self.horizon_s % WINDOW_SECONDS != 0.0 || self.exclusion_s % WINDOW_SECONDS != 0.0 {
            return Err(SignalError::Config(format!(
                "horizon_s and exclusion_s must be multiples of the {WINDOW_SECONDS} s window"
            )));
        }
        // onset placement spaces clustered onsets one exclusion apart
        if self.onset_count >= 2 && self.exclusion_s < WINDOW_SECONDS {
            return Err(SignalError::Config(
                "multiple onsets need exclusion_s of at least one window".into(),
            ));
        }
        let nyquist = f64::from(self.sample_rate_hz) / 2.0;
        let top = self
            .background
            .iter()
            .map(|b| b.hi_hz)
            .fold(self.oscillation_hz + self.preictal_shift.freq_delta_hz, f64::max);
        if top >= nyquist {
            return Err(SignalError::Config(format!(
                "spectral content up to {top} Hz exceeds the Nyquist limit {nyquist} Hz"
            )));
        }
        if self.background.iter().any(|b| b.lo_hz <= 0.0 || b.hi_hz <= b.lo_hz) {
            return Err(SignalError::Config("background bands must satisfy 0 < lo < hi".into()));
        }
        if !(0.0..=1.0).contains(&self.preictal_shift.mod_depth) {
            return Err(SignalError::Config("mod_depth must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Shortest duration (seconds) at which `onset_count` fully spread onsets
    /// hit `imbalance_ratio` exactly under the configured horizon/exclusion.
    pub fn duration_for(&self, onset_count: u32) -> f64 {
        let n = f64::from(onset_count);
        let preictal_w = n * self.horizon_s / WINDOW_SECONDS;
        let excluded_w = n * self.exclusion_s / WINDOW_SECONDS;
        let interictal_w = (preictal_w / self.imbalance_ratio).ceil();
        (preictal_w + interictal_w + excluded_w) * WINDOW_SECONDS
    }
}

/// Cuts a recording into consecutive non-overlapping 4 s windows and labels
/// each one.
///
/// A window is Preictal iff it starts within `horizon_s` before some onset
/// (inclusive at `onset - horizon_s`, exclusive at the onset); windows
/// overlapping `[onset, onset + exclusion_s)` are dropped entirely.
pub fn label_windows(rec: &Recording, cfg: &LabelConfig) -> Result<Vec<SampleWindow>> {
    if cfg.horizon_s <= 0.0 {
        return Err(SignalError::Config("horizon_s must be positive".into()));
    }
    if cfg.exclusion_s < 0.0 {
        return Err(SignalError::Config("exclusion_s must be nonnegative".into()));
    }
    rec.validate()?;

    let per_window = (WINDOW_SECONDS * f64::from(rec.sample_rate_hz)) as usize;
    let n_windows = rec.sample_count() / per_window;
    let mut out = Vec::new();
    for k in 0..n_windows {
        let start = k as f64 * WINDOW_SECONDS;
        let end = start + WINDOW_SECONDS;
        let excluded = rec
            .seizure_onsets
            .iter()
            .any(|&o| start < o + cfg.exclusion_s && end > o);
        if excluded {
            continue;
        }
        let preictal = rec
            .seizure_onsets
            .iter()
            .any(|&o| o - cfg.horizon_s <= start && start < o);
        let channels = rec
            .samples
            .iter()
            .map(|c| c[k * per_window..(k + 1) * per_window].to_vec())
            .collect();
        out.push(SampleWindow {
            start_time: start,
            sample_rate_hz: rec.sample_rate_hz,
            channels,
            label: if preictal { Label::Preictal } else { Label::Interictal },
        });
    }
    Ok(out)
}

/// Stratified 80/10/10 split of labeled windows.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<SampleWindow>,
    pub validation: Vec<SampleWindow>,
    pub test: Vec<SampleWindow>,
}

impl DatasetSplit {
    pub fn total(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }
}

/// Mean signal power in `[lo_hz, hi_hz]`, via direct DFT over the window's
/// native frequency grid. Intended for spectrum assertions in experiments and
/// tests, not as a production feature extractor.
pub fn band_power(samples: &[f32], sample_rate_hz: u32, lo_hz: f64, hi_hz: f64) -> f64 {
    let n = samples.len();
    if n == 0 {
        return 0.0;
    }
    let df = f64::from(sample_rate_hz) / n as f64;
    let lo_bin = (lo_hz / df).ceil() as usize;
    let hi_bin = ((hi_hz / df).floor() as usize).min(n / 2);
    let mut power = 0.0;
    for bin in lo_bin..=hi_bin {
        let w = 2.0 * std::f64::consts::PI * bin as f64 / n as f64;
        let (mut re, mut im) = (0.0_f64, 0.0_f64);
        for (i, &x) in samples.iter().enumerate() {
            let arg = w * i as f64;
            re += f64::from(x) * arg.cos();
            im -= f64::from(x) * arg.sin();
        }
        // one-sided power of the bin
        power += 2.0 * (re * re + im * im) / (n as f64 * n as f64);
    }
    power
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_recording(duration_s: f64, sample_rate_hz: u32, onsets: Vec<f64>) -> Recording {
        let n = (duration_s * f64::from(sample_rate_hz)) as usize;
        Recording {
            patient_id: "t".into(),
            modality: Modality::Ieeg,
            sample_rate_hz,
            samples: vec![vec![0.0; n]],
            seizure_onsets: onsets,
        }
    }

    #[test]
    fn label_boundary_at_horizon_edge() {
        let rec = flat_recording(7200.0, 4, vec![7200.0]);
        let windows = label_windows(&rec, &LabelConfig::default()).unwrap();
        let at = |t: f64| windows.iter().find(|w| w.start_time == t).unwrap().label;
        assert_eq!(at(3600.0), Label::Preictal);
        assert_eq!(at(3596.0), Label::Interictal);
    }

    #[test]
    fn short_recording_yields_no_windows() {
        let rec = flat_recording(3.5, 8, vec![]);
        assert!(label_windows(&rec, &LabelConfig::default()).unwrap().is_empty());
    }

    /// Independent enumeration oracle for the two-hour single-onset case.
    #[test]
    fn two_hour_recording_window_counts() {
        let rec = flat_recording(7200.0, 4, vec![7200.0]);
        let windows = label_windows(&rec, &LabelConfig::default()).unwrap();

        // brute-force enumeration straight from the definition
        let mut expect_pre = 0u32;
        let mut expect_inter = 0u32;
        let mut t = 0.0;
        while t + 4.0 <= 7200.0 {
            let onset = 7200.0;
            let excluded = t < onset + 600.0 && t + 4.0 > onset;
            if !excluded {
                if onset - 3600.0 <= t && t < onset {
                    expect_pre += 1;
                } else {
                    expect_inter += 1;
                }
            }
            t += 4.0;
        }
        assert_eq!(expect_pre, 900);
        assert_eq!(expect_inter, 900);

        let pre = windows.iter().filter(|w| w.label == Label::Preictal).count();
        let inter = windows.len() - pre;
        assert_eq!(pre as u32, expect_pre);
        assert_eq!(inter as u32, expect_inter);
        let last_inter = windows
            .iter()
            .filter(|w| w.label == Label::Interictal)
            .map(|w| w.start_time)
            .fold(f64::MIN, f64::max);
        assert_eq!(last_inter, 3596.0);
    }

    #[test]
    fn windows_overlapping_the_seizure_are_dropped() {
        let rec = flat_recording(2000.0, 4, vec![800.0]);
        let windows =
            label_windows(&rec, &LabelConfig { horizon_s: 400.0, exclusion_s: 200.0 }).unwrap();
        assert!(windows.iter().all(|w| !(w.start_time < 1000.0 && w.start_time + 4.0 > 800.0)));
        // window right at the end of the exclusion zone is back in
        assert!(windows.iter().any(|w| w.start_time == 1000.0));
    }

    #[test]
    fn relabeling_is_idempotent() {
        let rec = flat_recording(4000.0, 8, vec![2000.0, 3500.0]);
        let cfg = LabelConfig { horizon_s: 600.0, exclusion_s: 100.0 };
        let a = label_windows(&rec, &cfg).unwrap();
        let b = label_windows(&rec, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_horizon_is_rejected() {
        let rec = flat_recording(100.0, 8, vec![]);
        assert!(matches!(
            label_windows(&rec, &LabelConfig { horizon_s: 0.0, exclusion_s: 600.0 }),
            Err(SignalError::Config(_))
        ));
    }

    #[test]
    fn recording_validation_catches_bad_shapes() {
        let mut rec = flat_recording(10.0, 8, vec![]);
        rec.modality = Modality::Ecg;
        rec.samples.push(vec![0.0; rec.sample_count()]);
        assert!(rec.validate().is_err());

        let mut rec = flat_recording(10.0, 8, vec![5.0, 5.0]);
        assert!(rec.validate().is_err());
        rec.seizure_onsets = vec![5.0, 20.0];
        assert!(rec.validate().is_err()); // onset past the end
    }

    #[test]
    fn band_power_sees_a_pure_tone() {
        let fs = 64u32;
        let n = 256;
        let tone: Vec<f32> =
            (0..n).map(|i| (2.0 * std::f64::consts::PI * 8.0 * i as f64 / 64.0).sin() as f32).collect();
        let in_band = band_power(&tone, fs, 7.0, 9.0);
        let out_band = band_power(&tone, fs, 20.0, 24.0);
        assert!(in_band > 0.4 && in_band < 0.6, "in_band = {in_band}");
        assert!(out_band < 1e-6, "out_band = {out_band}");
    }
}
