//! Model checkpoint file format.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "SZNM" | version u16 | input_channels u16 | input_length u32 |
//! n_blocks u8 | per block { filters u16, kernel u16, pool u16 } |
//! n_dense u8 | widths u32[n_dense] | param_count u64 |
//! payload f32[param_count] | crc32 of every preceding byte
//! ```
//!
//! The payload is the trainable flat vector followed by the batch-norm
//! running mean and variance. Weights are stored in f32; reloading therefore
//! rounds parameters, which is accepted for inference checkpoints.

use std::fs;
use std::path::Path;

use super::{ConvBlockSpec, ModelParams, ModelSpec, NnError, Result};

const MAGIC: &[u8; 4] = b"SZNM";
const VERSION: u16 = 1;

fn format_err(offset: usize, detail: impl Into<String>) -> NnError {
    NnError::Format { offset: offset as u64, detail: detail.into() }
}

pub fn encode_checkpoint(params: &ModelParams) -> Result<Vec<u8>> {
    let spec = &params.spec;
    spec.validate()?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(spec.input_channels as u16).to_le_bytes());
    buf.extend_from_slice(&(spec.input_length as u32).to_le_bytes());
    buf.push(spec.conv_blocks.len() as u8);
    for b in &spec.conv_blocks {
        buf.extend_from_slice(&(b.filters as u16).to_le_bytes());
        buf.extend_from_slice(&(b.kernel_size as u16).to_le_bytes());
        buf.extend_from_slice(&(b.pool_width as u16).to_le_bytes());
    }
    buf.push(spec.dense_widths.len() as u8);
    for &w in &spec.dense_widths {
        buf.extend_from_slice(&(w as u32).to_le_bytes());
    }

    let mut payload = params.flatten_trainable();
    payload.extend_from_slice(&params.input_norm.running_mean);
    payload.extend_from_slice(&params.input_norm.running_var);
    buf.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    for v in payload {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

pub fn decode_checkpoint(buf: &[u8]) -> Result<ModelParams> {
    let mut pos = 0usize;
    let need = |pos: usize, n: usize, len: usize| -> Result<()> {
        if pos + n > len {
            Err(format_err(len, format!("truncated: need {} bytes at offset {pos}, have {len}", n)))
        } else {
            Ok(())
        }
    };

    need(pos, 4, buf.len())?;
    if &buf[0..4] != MAGIC {
        return Err(format_err(0, "bad magic, not a model checkpoint"));
    }
    pos += 4;
    need(pos, 2, buf.len())?;
    let version = u16::from_le_bytes(buf[pos..pos + 2].try_into().unwrap());
    if version != VERSION {
        return Err(format_err(pos, format!("unsupported checkpoint version {version}")));
    }
    pos += 2;
    need(pos, 2 + 4 + 1, buf.len())?;
    let input_channels = u16::from_le_bytes(buf[pos..pos + 2].try_into().unwrap()) as usize;
    pos += 2;
    let input_length = u32::from_le_bytes(buf[pos..pos + 4].try_into().unwrap()) as usize;
    pos += 4;
    let n_blocks = buf[pos] as usize;
    pos += 1;

    need(pos, n_blocks * 6 + 1, buf.len())?;
    let mut conv_blocks = Vec::with_capacity(n_blocks);
    for _ in 0..n_blocks {
        let filters = u16::from_le_bytes(buf[pos..pos + 2].try_into().unwrap()) as usize;
        let kernel = u16::from_le_bytes(buf[pos + 2..pos + 4].try_into().unwrap()) as usize;
        let pool = u16::from_le_bytes(buf[pos + 4..pos + 6].try_into().unwrap()) as usize;
        conv_blocks.push(ConvBlockSpec { filters, kernel_size: kernel, pool_width: pool });
        pos += 6;
    }
    let n_dense = buf[pos] as usize;
    pos += 1;
    need(pos, n_dense * 4 + 8, buf.len())?;
    let mut dense_widths = Vec::with_capacity(n_dense);
    for _ in 0..n_dense {
        dense_widths.push(u32::from_le_bytes(buf[pos..pos + 4].try_into().unwrap()) as usize);
        pos += 4;
    }
    let spec = ModelSpec { input_channels, input_length, conv_blocks, dense_widths };
    spec.validate().map_err(|e| format_err(6, format!("invalid architecture: {e}")))?;

    let param_count = u64::from_le_bytes(buf[pos..pos + 8].try_into().unwrap()) as usize;
    pos += 8;
    let mut params = ModelParams::zeros(&spec)?;
    let expected_payload = params.trainable_count() + 2 * spec.input_channels;
    if param_count != expected_payload {
        return Err(format_err(
            pos - 8,
            format!("parameter count {param_count} does not match the architecture ({expected_payload})"),
        ));
    }
    let expected_total = pos + param_count * 4 + 4;
    if buf.len() != expected_total {
        return Err(format_err(
            buf.len().min(expected_total),
            format!("expected {expected_total} bytes, got {}", buf.len()),
        ));
    }
    let crc_offset = expected_total - 4;
    let stored = u32::from_le_bytes(buf[crc_offset..].try_into().unwrap());
    let actual = crc32fast::hash(&buf[..crc_offset]);
    if stored != actual {
        return Err(format_err(
            crc_offset,
            format!("crc mismatch: stored {stored:#010x}, computed {actual:#010x}"),
        ));
    }

    let mut payload = Vec::with_capacity(param_count);
    for _ in 0..param_count {
        payload.push(f64::from(f32::from_le_bytes(buf[pos..pos + 4].try_into().unwrap())));
        pos += 4;
    }
    let trainable = params.trainable_count();
    params.assign_trainable(&payload[..trainable]);
    let (mean, var) = payload[trainable..].split_at(spec.input_channels);
    params.input_norm.running_mean.copy_from_slice(mean);
    params.input_norm.running_var.copy_from_slice(var);
    if params.input_norm.running_var.iter().any(|&v| v <= 0.0) {
        return Err(format_err(crc_offset, "batch-norm running variance must be positive"));
    }
    Ok(params)
}

/// Writes a checkpoint atomically (temp file + rename).
pub fn save_checkpoint(params: &ModelParams, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(params)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path)?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::forward;
    use crate::rng::stream_rng;
    use crate::signal::{Label, SampleWindow};
    use rand::Rng;

    fn params() -> ModelParams {
        let spec = ModelSpec::standard(2, 64);
        let mut p = ModelParams::init(&spec, 77).unwrap();
        p.input_norm.running_mean = vec![0.25, -0.5];
        p.input_norm.running_var = vec![1.5, 0.75];
        p
    }

    #[test]
    fn round_trip_preserves_f32_precision() {
        let p = params();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.sznm");
        save_checkpoint(&p, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.spec, p.spec);
        for (a, b) in back.flatten_trainable().iter().zip(p.flatten_trainable()) {
            assert_eq!(*a, f64::from(b as f32));
        }
        // reloading the reloaded params is exact
        let twice = decode_checkpoint(&encode_checkpoint(&back).unwrap()).unwrap();
        assert_eq!(twice, back);
    }

    #[test]
    fn reloaded_model_predicts_close_to_original() {
        let p = params();
        let back = decode_checkpoint(&encode_checkpoint(&p).unwrap()).unwrap();
        let mut rng = stream_rng(1, "ckpt-window");
        let w = SampleWindow {
            start_time: 0.0,
            sample_rate_hz: 16,
            channels: (0..2)
                .map(|_| (0..64).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect(),
            label: Label::Interictal,
        };
        let a = forward(&p, &w).unwrap();
        let b = forward(&back, &w).unwrap();
        assert!((a - b).abs() < 1e-4, "drift {}", (a - b).abs());
    }

    #[test]
    fn corrupted_magic_and_crc_are_detected() {
        let bytes = encode_checkpoint(&params()).unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'Q';
        assert!(matches!(decode_checkpoint(&bad), Err(NnError::Format { offset: 0, .. })));

        let mut bad = bytes.clone();
        let mid = bad.len() / 2;
        bad[mid] ^= 0x01;
        match decode_checkpoint(&bad) {
            Err(NnError::Format { detail, .. }) => assert!(detail.contains("crc")),
            other => panic!("expected crc failure, got {other:?}"),
        }

        let cut = &bytes[..bytes.len() - 9];
        assert!(matches!(decode_checkpoint(cut), Err(NnError::Format { .. })));
    }
}
