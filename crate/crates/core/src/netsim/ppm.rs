//! PPM physical layer: spreading codes, time-hopping sequences, and the
//! application payload codec.
//!
//! Each payload bit expands into `spreading_factor` chips; chip `c` carries
//! `bit XOR code[c]` as its pulse position (early/late) inside a hop slot.
//! The receiver inverts the code and takes a per-bit chip majority, so up to
//! `(spreading_factor - 1) / 2` flipped chips per bit are tolerated. A CRC-8
//! inside the payload catches what the majority misses; an orthogonal wrong
//! code leaves every bit at an exact chip tie, which is reported as a decode
//! failure rather than returned as garbage.

use super::{NetsimError, Result};

/// Physical-layer constants shared by every node.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhyConfig {
    pub spreading_factor: usize,
    /// One chip occupies one slot.
    pub slot_time_s: f64,
    /// Distinct pulse offsets available inside a slot for time hopping.
    pub hop_positions: usize,
}

impl Default for PhyConfig {
    fn default() -> Self {
        // 8 chips/bit at 20 us/slot: 6.25 kbit/s per node, 25 kbit/s for the
        // four-node scenario, comfortably above the 4 bit/s application load.
        Self { spreading_factor: 8, slot_time_s: 20e-6, hop_positions: 8 }
    }
}

impl PhyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.spreading_factor == 0 || !self.spreading_factor.is_power_of_two() {
            return Err(NetsimError::Config(format!(
                "spreading factor {} must be a power of two (Walsh codes)",
                self.spreading_factor
            )));
        }
        if self.slot_time_s <= 0.0 {
            return Err(NetsimError::Config("slot_time_s must be positive".into()));
        }
        if self.hop_positions == 0 {
            return Err(NetsimError::Config("hop_positions must be positive".into()));
        }
        Ok(())
    }

    pub fn slot_ns(&self) -> u64 {
        (self.slot_time_s * 1e9).round() as u64
    }

    /// Raw per-node bit rate: one bit per `spreading_factor` slots.
    pub fn bits_per_second(&self) -> f64 {
        1.0 / (self.slot_time_s * self.spreading_factor as f64)
    }
}

/// Walsh-Hadamard codes of length `order` (a power of two). Any two distinct
/// rows disagree in exactly half their positions.
pub fn walsh_codes(order: usize) -> Vec<Vec<bool>> {
    assert!(order.is_power_of_two(), "Walsh order must be a power of two");
    (0..order)
        .map(|row| (0..order).map(|col| (row & col).count_ones() % 2 == 1).collect())
        .collect()
}

/// Per-node time-hopping sequence: chip `k` uses `offsets[k % len]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopSequence {
    pub offsets: Vec<u8>,
}

impl HopSequence {
    pub fn offset_at(&self, chip: usize) -> u8 {
        self.offsets[chip % self.offsets.len()]
    }
}

/// One on-air frame: the chip payload plus its slot timing.
#[derive(Debug, Clone, PartialEq)]
pub struct MacFrame {
    pub source_code_index: usize,
    pub hop_seq_id: u32,
    /// Pulse position per chip: false = early, true = late.
    pub chips: Vec<bool>,
    pub tx_time_ns: u64,
    pub duration_ns: u64,
}

impl MacFrame {
    pub fn tx_time_s(&self) -> f64 {
        self.tx_time_ns as f64 / 1e9
    }

    pub fn duration_s(&self) -> f64 {
        self.duration_ns as f64 / 1e9
    }
}

/// Spreads payload bits into a chip frame.
pub fn ppm_modulate(
    payload: &[bool],
    code: &[bool],
    hop_seq_id: u32,
    code_index: usize,
    phy: &PhyConfig,
    tx_time_ns: u64,
) -> Result<MacFrame> {
    if code.is_empty() {
        return Err(NetsimError::Config("spreading code must not be empty".into()));
    }
    if code.len() != phy.spreading_factor {
        return Err(NetsimError::Config(format!(
            "code length {} != spreading factor {}",
            code.len(),
            phy.spreading_factor
        )));
    }
    if payload.is_empty() {
        return Err(NetsimError::Config("payload must not be empty".into()));
    }
    let mut chips = Vec::with_capacity(payload.len() * code.len());
    for &bit in payload {
        for &c in code {
            chips.push(bit ^ c);
        }
    }
    let duration_ns = chips.len() as u64 * phy.slot_ns();
    Ok(MacFrame {
        source_code_index: code_index,
        hop_seq_id,
        chips,
        tx_time_ns,
        duration_ns,
    })
}

/// Despreads a frame back into payload bits via per-bit chip majority.
pub fn ppm_demodulate(frame: &MacFrame, code: &[bool]) -> Result<Vec<bool>> {
    if code.is_empty() || !frame.chips.len().is_multiple_of(code.len()) {
        return Err(NetsimError::Decode(format!(
            "chip count {} incompatible with code length {}",
            frame.chips.len(),
            code.len()
        )));
    }
    let sf = code.len();
    let mut bits = Vec::with_capacity(frame.chips.len() / sf);
    for group in frame.chips.chunks(sf) {
        let ones = group.iter().zip(code).filter(|(&chip, &c)| chip ^ c).count();
        if 2 * ones == sf {
            return Err(NetsimError::Decode(format!(
                "chip majority inconclusive for bit {} ({ones}/{sf} ones)",
                bits.len()
            )));
        }
        bits.push(2 * ones > sf);
    }
    Ok(bits)
}

/// Decoded application payload fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AppPayload {
    pub decision: bool,
    /// Low 4 bits of the reporting step; full alignment comes from timing.
    pub step_tag: u8,
    pub source_id: u8,
}

const CRC_BITS: usize = 8;
/// decision(1) + step tag(4) + source id(3) + CRC-8.
pub const MIN_PAYLOAD_BITS: usize = 16;

fn crc8(bytes: &[u8]) -> u8 {
    let mut crc = 0u8;
    for &b in bytes {
        crc ^= b;
        for _ in 0..8 {
            crc = if crc & 0x80 != 0 { (crc << 1) ^ 0x07 } else { crc << 1 };
        }
    }
    crc
}

fn pack_bits(bits: &[bool]) -> Vec<u8> {
    let mut bytes = vec![0u8; bits.len().div_ceil(8)];
    for (i, &bit) in bits.iter().enumerate() {
        if bit {
            bytes[i / 8] |= 0x80 >> (i % 8);
        }
    }
    bytes
}

pub(crate) fn validate_payload_bits(payload_bits: usize) -> Result<()> {
    if payload_bits < MIN_PAYLOAD_BITS || !payload_bits.is_multiple_of(8) {
        return Err(NetsimError::Config(format!(
            "payload_bits {payload_bits} must be a multiple of 8 and at least {MIN_PAYLOAD_BITS}"
        )));
    }
    Ok(())
}

/// Encodes the classification/command fields into `payload_bits` bits with a
/// trailing CRC-8 over the data portion.
pub fn encode_payload(
    decision: bool,
    step_index: u64,
    source_id: u8,
    payload_bits: usize,
) -> Result<Vec<bool>> {
    validate_payload_bits(payload_bits)?;
    let data_bits = payload_bits - CRC_BITS;
    let mut bits = vec![false; data_bits];
    bits[0] = decision;
    for k in 0..4 {
        bits[1 + k] = (step_index >> k) & 1 == 1;
    }
    for k in 0..3 {
        bits[5 + k] = (source_id >> k) & 1 == 1;
    }
    let crc = crc8(&pack_bits(&bits));
    for k in 0..8 {
        bits.push((crc >> (7 - k)) & 1 == 1);
    }
    Ok(bits)
}

/// Validates the CRC and unpacks the payload fields.
pub fn decode_payload(bits: &[bool]) -> Result<AppPayload> {
    if bits.len() < MIN_PAYLOAD_BITS || !bits.len().is_multiple_of(8) {
        return Err(NetsimError::Decode(format!("payload length {} invalid", bits.len())));
    }
    let data_bits = bits.len() - CRC_BITS;
    let mut crc_stored = 0u8;
    for k in 0..8 {
        crc_stored = crc_stored << 1 | u8::from(bits[data_bits + k]);
    }
    let crc_actual = crc8(&pack_bits(&bits[..data_bits]));
    if crc_stored != crc_actual {
        return Err(NetsimError::Decode(format!(
            "payload crc mismatch: stored {crc_stored:#04x}, computed {crc_actual:#04x}"
        )));
    }
    let mut step_tag = 0u8;
    for k in 0..4 {
        step_tag |= u8::from(bits[1 + k]) << k;
    }
    let mut source_id = 0u8;
    for k in 0..3 {
        source_id |= u8::from(bits[5 + k]) << k;
    }
    Ok(AppPayload { decision: bits[0], step_tag, source_id })
}
