//! Optional window pre-processing: power-line notch and band-pass.
//!
//! Both filters are applied forward-backward (zero phase) with odd-reflection
//! padding, so filtered windows stay aligned with their labels. The default
//! pipeline applies neither; filtering is opt-in because it buys little for
//! classification.

use super::{Result, SampleWindow, SignalError};

/// Quality factor of the power-line notch.
const NOTCH_Q: f64 = 30.0;

/// Normalized biquad section (a0 = 1).
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b0: f64,
    b1: f64,
    b2: f64,
    a1: f64,
    a2: f64,
}

impl Biquad {
    fn notch(f0_hz: f64, q: f64, fs_hz: f64) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * f0_hz / fs_hz;
        let alpha = w0.sin() / (2.0 * q);
        let cos = w0.cos();
        let a0 = 1.0 + alpha;
        Self {
            b0: 1.0 / a0,
            b1: -2.0 * cos / a0,
            b2: 1.0 / a0,
            a1: -2.0 * cos / a0,
            a2: (1.0 - alpha) / a0,
        }
    }

    /// Second-order Butterworth low-pass.
    fn lowpass(f0_hz: f64, fs_hz: f64) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * f0_hz / fs_hz;
        let alpha = w0.sin() / (2.0 * std::f64::consts::FRAC_1_SQRT_2);
        let cos = w0.cos();
        let a0 = 1.0 + alpha;
        Self {
            b0: (1.0 - cos) / 2.0 / a0,
            b1: (1.0 - cos) / a0,
            b2: (1.0 - cos) / 2.0 / a0,
            a1: -2.0 * cos / a0,
            a2: (1.0 - alpha) / a0,
        }
    }

    /// Second-order Butterworth high-pass.
    fn highpass(f0_hz: f64, fs_hz: f64) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * f0_hz / fs_hz;
        let alpha = w0.sin() / (2.0 * std::f64::consts::FRAC_1_SQRT_2);
        let cos = w0.cos();
        let a0 = 1.0 + alpha;
        Self {
            b0: (1.0 + cos) / 2.0 / a0,
            b1: -(1.0 + cos) / a0,
            b2: (1.0 + cos) / 2.0 / a0,
            a1: -2.0 * cos / a0,
            a2: (1.0 - alpha) / a0,
        }
    }

    fn run(&self, x: &mut [f64]) {
        let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
        for v in x.iter_mut() {
            let x0 = *v;
            let y0 = self.b0 * x0 + self.b1 * x1 + self.b2 * x2 - self.a1 * y1 - self.a2 * y2;
            x2 = x1;
            x1 = x0;
            y2 = y1;
            y1 = y0;
            *v = y0;
        }
    }
}

/// Forward-backward filtering with periodic (wrap) padding on both ends.
///
/// Every whole-hertz component is integer-periodic over the fixed 4 s
/// window, so periodic extension continues power-line tones exactly and the
/// notch removes them without boundary ringing; reflective paddings leave a
/// phase flip at the window edge that leaks through the notch.
fn filtfilt(sections: &[Biquad], x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let pad = pad.min(n.saturating_sub(1));
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend_from_slice(&x[n - pad..]);
    ext.extend_from_slice(x);
    ext.extend_from_slice(&x[..pad]);
    for s in sections {
        s.run(&mut ext);
    }
    ext.reverse();
    for s in sections {
        s.run(&mut ext);
    }
    ext.reverse();
    ext[pad..pad + n].to_vec()
}

/// Applies an optional 50/60 Hz notch and/or a 4th-order band-pass
/// (second-order Butterworth edges at `band.0` and `band.1`), both zero-phase.
///
/// With no filters configured the window is returned unchanged.
pub fn preprocess(
    window: &SampleWindow,
    notch_hz: Option<f64>,
    band: Option<(f64, f64)>,
) -> Result<SampleWindow> {
    let fs = f64::from(window.sample_rate_hz);
    let nyquist = fs / 2.0;
    if let Some(f0) = notch_hz {
        if f0 <= 0.0 || f0 >= nyquist {
            return Err(SignalError::Config(format!(
                "notch frequency {f0} Hz outside (0, {nyquist}) Hz"
            )));
        }
    }
    if let Some((lo, hi)) = band {
        if !(lo > 0.0 && lo < hi && hi < nyquist) {
            return Err(SignalError::Config(format!(
                "band [{lo}, {hi}] Hz must satisfy 0 < lo < hi < {nyquist}"
            )));
        }
    }
    if notch_hz.is_none() && band.is_none() {
        return Ok(window.clone());
    }

    let mut sections = Vec::new();
    if let Some(f0) = notch_hz {
        sections.push(Biquad::notch(f0, NOTCH_Q, fs));
    }
    if let Some((lo, hi)) = band {
        sections.push(Biquad::highpass(lo, fs));
        sections.push(Biquad::lowpass(hi, fs));
    }

    // One second of reflection absorbs the slowest configured transient.
    let pad = window.sample_rate_hz as usize;
    let channels = window
        .channels
        .iter()
        .map(|ch| {
            let x: Vec<f64> = ch.iter().map(|&v| f64::from(v)).collect();
            filtfilt(&sections, &x, pad).into_iter().map(|v| v as f32).collect()
        })
        .collect();

    Ok(SampleWindow { channels, ..window.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Label;

    fn window_from(samples: Vec<f32>, fs: u32) -> SampleWindow {
        SampleWindow {
            start_time: 0.0,
            sample_rate_hz: fs,
            channels: vec![samples],
            label: Label::Interictal,
        }
    }

    fn rms(x: &[f32]) -> f64 {
        (x.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn no_filters_is_identity() {
        let w = window_from((0..1024).map(|i| (i as f32).sin()).collect(), 256);
        let out = preprocess(&w, None, None).unwrap();
        assert_eq!(out, w);
    }

    #[test]
    fn notch_removes_power_line_tone() {
        let fs = 256u32;
        let tone: Vec<f32> = (0..1024)
            .map(|i| (2.0 * std::f64::consts::PI * 50.0 * i as f64 / 256.0).sin() as f32)
            .collect();
        let w = window_from(tone, fs);
        let out = preprocess(&w, Some(50.0), None).unwrap();
        let ratio = rms(&out.channels[0]) / rms(&w.channels[0]);
        assert!(ratio < 0.05, "residual RMS ratio {ratio}");
    }

    #[test]
    fn bandpass_removes_dc_offset() {
        let offset = 2.0_f32;
        let w = window_from(vec![offset; 1024], 256);
        let out = preprocess(&w, None, Some((0.5, 40.0))).unwrap();
        let mean =
            out.channels[0].iter().map(|&v| f64::from(v)).sum::<f64>() / 1024.0;
        assert!(mean.abs() < 0.01 * f64::from(offset), "residual mean {mean}");
    }

    #[test]
    fn band_outside_nyquist_is_rejected() {
        let w = window_from(vec![0.0; 64], 16);
        assert!(preprocess(&w, None, Some((0.5, 9.0))).is_err());
        assert!(preprocess(&w, None, Some((5.0, 2.0))).is_err());
        assert!(preprocess(&w, Some(8.0), None).is_err());
    }

    #[test]
    fn passband_tone_survives_with_unit_gain() {
        let fs = 256u32;
        let tone: Vec<f32> = (0..1024)
            .map(|i| (2.0 * std::f64::consts::PI * 10.0 * i as f64 / 256.0).sin() as f32)
            .collect();
        let w = window_from(tone, fs);
        let out = preprocess(&w, Some(50.0), Some((0.5, 40.0))).unwrap();
        let ratio = rms(&out.channels[0]) / rms(&w.channels[0]);
        assert!((ratio - 1.0).abs() < 0.05, "passband gain {ratio}");
    }
}
