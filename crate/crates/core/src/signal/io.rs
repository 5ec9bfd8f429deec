//! Binary recording file format.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "SZN1" | version u16 | modality u8 | channel_count u16 |
//! sample_rate_hz u32 | sample_count u64 | onset_count u32 |
//! onsets f64[onset_count] | samples f32[channel_count * sample_count]
//! (channel-major) | crc32 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use super::{Modality, Recording, Result, SignalError};

const MAGIC: &[u8; 4] = b"SZN1";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 2 + 4 + 8 + 4;

fn format_err(offset: usize, detail: impl Into<String>) -> SignalError {
    SignalError::Format { offset: offset as u64, detail: detail.into() }
}

/// Serializes a recording into the on-disk byte layout.
pub fn encode_recording(rec: &Recording) -> Result<Vec<u8>> {
    rec.validate()?;
    let channel_count = u16::try_from(rec.channel_count())
        .map_err(|_| SignalError::Config("more than 65535 channels".into()))?;
    let sample_count = rec.sample_count() as u64;
    let onset_count = u32::try_from(rec.seizure_onsets.len())
        .map_err(|_| SignalError::Config("more than 2^32 onsets".into()))?;

    let mut buf = Vec::with_capacity(
        HEADER_LEN + rec.seizure_onsets.len() * 8 + rec.channel_count() * rec.sample_count() * 4 + 4,
    );
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(rec.modality.code());
    buf.extend_from_slice(&channel_count.to_le_bytes());
    buf.extend_from_slice(&rec.sample_rate_hz.to_le_bytes());
    buf.extend_from_slice(&sample_count.to_le_bytes());
    buf.extend_from_slice(&onset_count.to_le_bytes());
    for &o in &rec.seizure_onsets {
        buf.extend_from_slice(&o.to_le_bytes());
    }
    for channel in &rec.samples {
        for &s in channel {
            buf.extend_from_slice(&s.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

/// Parses the byte layout back into a recording, verifying structure and CRC.
pub fn decode_recording(buf: &[u8]) -> Result<Recording> {
    if buf.len() < HEADER_LEN {
        return Err(format_err(buf.len(), format!("truncated header: expected at least {HEADER_LEN} bytes, got {}", buf.len())));
    }
    if &buf[0..4] != MAGIC {
        return Err(format_err(0, "bad magic, not a recording file"));
    }
    let version = u16::from_le_bytes([buf[4], buf[5]]);
    if version != VERSION {
        return Err(format_err(4, format!("unsupported format version {version}")));
    }
    let modality = Modality::from_code(buf[6])
        .ok_or_else(|| format_err(6, format!("unknown modality code {}", buf[6])))?;
    let channel_count = u16::from_le_bytes([buf[7], buf[8]]) as usize;
    let sample_rate_hz = u32::from_le_bytes(buf[9..13].try_into().unwrap());
    let sample_count = u64::from_le_bytes(buf[13..21].try_into().unwrap()) as usize;
    let onset_count = u32::from_le_bytes(buf[21..25].try_into().unwrap()) as usize;

    let expected = HEADER_LEN + onset_count * 8 + channel_count * sample_count * 4 + 4;
    if buf.len() != expected {
        return Err(format_err(
            buf.len().min(expected),
            format!("expected {expected} bytes, got {}", buf.len()),
        ));
    }

    let crc_offset = expected - 4;
    let stored_crc = u32::from_le_bytes(buf[crc_offset..].try_into().unwrap());
    let actual_crc = crc32fast::hash(&buf[..crc_offset]);
    if stored_crc != actual_crc {
        return Err(format_err(
            crc_offset,
            format!("crc mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}"),
        ));
    }

    let mut pos = HEADER_LEN;
    let mut seizure_onsets = Vec::with_capacity(onset_count);
    for _ in 0..onset_count {
        seizure_onsets.push(f64::from_le_bytes(buf[pos..pos + 8].try_into().unwrap()));
        pos += 8;
    }
    let mut samples = Vec::with_capacity(channel_count);
    for _ in 0..channel_count {
        let mut channel = Vec::with_capacity(sample_count);
        for _ in 0..sample_count {
            channel.push(f32::from_le_bytes(buf[pos..pos + 4].try_into().unwrap()));
            pos += 4;
        }
        samples.push(channel);
    }

    let rec = Recording {
        patient_id: String::new(),
        modality,
        sample_rate_hz,
        samples,
        seizure_onsets,
    };
    rec.validate().map_err(|e| format_err(HEADER_LEN, format!("invalid payload: {e}")))?;
    Ok(rec)
}

/// Writes a recording atomically (temp file + rename).
///
/// The patient id is carried by the file name, not the payload.
pub fn save_recording(rec: &Recording, path: &Path) -> Result<()> {
    let bytes = encode_recording(rec)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_recording(path: &Path) -> Result<Recording> {
    let bytes = fs::read(path)?;
    decode_recording(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{generate_recording, GeneratorConfig};

    fn sample_recording() -> Recording {
        let cfg = GeneratorConfig {
            seed: 21,
            sample_rate_hz: 64,
            onset_count: 0,
            ..GeneratorConfig::default()
        };
        let mut rec = generate_recording(&cfg, Modality::Ieeg, 3, 20.0).unwrap();
        rec.seizure_onsets = vec![4.0, 12.0];
        rec
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let rec = sample_recording();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.szr");
        save_recording(&rec, &path).unwrap();
        let back = load_recording(&path).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn corrupted_magic_reports_offset_zero() {
        let mut bytes = encode_recording(&sample_recording()).unwrap();
        bytes[0] = b'X';
        match decode_recording(&bytes) {
            Err(SignalError::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn truncation_reports_expected_vs_actual() {
        let bytes = encode_recording(&sample_recording()).unwrap();
        let cut = &bytes[..bytes.len() - 100];
        match decode_recording(cut) {
            Err(SignalError::Format { detail, .. }) => {
                assert!(detail.contains(&format!("expected {} bytes", bytes.len())));
                assert!(detail.contains(&format!("got {}", cut.len())));
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn payload_corruption_fails_the_crc() {
        let mut bytes = encode_recording(&sample_recording()).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xff;
        match decode_recording(&bytes) {
            Err(SignalError::Format { detail, .. }) => assert!(detail.contains("crc mismatch")),
            other => panic!("expected crc error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_version_is_rejected_at_its_offset() {
        let mut bytes = encode_recording(&sample_recording()).unwrap();
        bytes[4] = 9;
        // crc still matches the original header, so recompute it
        let n = bytes.len();
        let crc = crc32fast::hash(&bytes[..n - 4]);
        bytes[n - 4..].copy_from_slice(&crc.to_le_bytes());
        match decode_recording(&bytes) {
            Err(SignalError::Format { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
