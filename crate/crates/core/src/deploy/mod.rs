//! Split-inference edge: raw-unit threshold tables, the bit-exact packed
//! frame format, portable encoder source emission, and a loopback
//! device-encode / server-decode pipeline.

pub mod codegen;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::decode_code_into;
use crate::quant::{encode, Code, ThresholdSet};

pub use codegen::{emit_encoder_source, footprint_report, EncoderStyle, FootprintReport};

pub const TABLE_VERSION: u32 = 1;

/// Per-feature thresholds in raw feature units: the device encodes sensor
/// values directly, with standardization folded into the thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderTable {
    pub version: u32,
    pub k: usize,
    pub bits: u8,
    pub order: Vec<String>,
    pub thresholds_raw: Vec<Vec<f64>>,
}

impl EncoderTable {
    pub fn threshold_sets(&self) -> Result<Vec<ThresholdSet>> {
        self.thresholds_raw
            .iter()
            .map(|t| ThresholdSet::new(t.clone(), self.bits))
            .collect()
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Transforms a checkpoint's standardized-space thresholds into raw feature
/// units: a_raw = a_std * sigma + mu.
pub fn export_table(ckpt: &Checkpoint) -> Result<EncoderTable> {
    let sets = ckpt.thresholds_as_sets()?.ok_or(Error::MissingThresholds)?;
    let std = &ckpt.standardizer;
    if std.feature_mean.len() != sets.len() || std.feature_std.len() != sets.len() {
        return Err(Error::MissingStandardizer);
    }
    let bits = ckpt.bit_width.ok_or(Error::MissingThresholds)?;
    let thresholds_raw = sets
        .iter()
        .enumerate()
        .map(|(kf, set)| {
            set.thresholds()
                .iter()
                .map(|&a| a * std.feature_std[kf] + std.feature_mean[kf])
                .collect()
        })
        .collect();
    Ok(EncoderTable {
        version: TABLE_VERSION,
        k: sets.len(),
        bits,
        order: ckpt.feature_names.clone(),
        thresholds_raw,
    })
}

pub const FRAME_MAGIC: [u8; 4] = *b"BWSQ";
pub const FRAME_VERSION: u8 = 1;
/// Magic (4) + version (1) + feature count (2, little-endian) + bits (1).
pub const FRAME_HEADER_BYTES: usize = 8;

/// Bit-exact serialized frame of K n-bit codes: codes in feature order,
/// LSB-first within each byte, unused trailing bits zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedFrame {
    pub feature_count: u16,
    pub bits: u8,
    pub payload: Vec<u8>,
}

pub fn payload_len(feature_count: usize, bits: u8) -> usize {
    (feature_count * bits as usize).div_ceil(8)
}

/// 32-bit floats against n-bit codes.
pub fn compression_factor(bits: u8) -> f64 {
    32.0 / bits as f64
}

/// Packs codes into a frame. Every code must fit in `bits` bits.
pub fn pack(codes: &[Code], bits: u8) -> Result<PackedFrame> {
    if !(1..=16).contains(&bits) {
        return Err(Error::BitWidthOutOfRange { bits, min: 1, max: 16 });
    }
    if codes.len() > u16::MAX as usize {
        return Err(Error::InvalidConfig("too many features for one frame".into()));
    }
    let limit = 1u32 << bits;
    let mut payload = vec![0u8; payload_len(codes.len(), bits)];
    let mut bit = 0usize;
    for (index, code) in codes.iter().enumerate() {
        let value = code.value() as u32;
        if value >= limit {
            return Err(Error::CodeTooWide { index, code: code.value(), bits });
        }
        for offset in 0..bits as usize {
            if value >> offset & 1 == 1 {
                payload[(bit + offset) / 8] |= 1 << ((bit + offset) % 8);
            }
        }
        bit += bits as usize;
    }
    Ok(PackedFrame { feature_count: codes.len() as u16, bits, payload })
}

/// Exact inverse of `pack`; rejects frames whose padding bits are nonzero.
pub fn unpack(frame: &PackedFrame) -> Result<Vec<Code>> {
    let k = frame.feature_count as usize;
    let expected = payload_len(k, frame.bits);
    if frame.payload.len() != expected {
        return Err(Error::FrameLength { expected, got: frame.payload.len() });
    }
    let used_bits = k * frame.bits as usize;
    for trailing in used_bits..expected * 8 {
        if frame.payload[trailing / 8] >> (trailing % 8) & 1 == 1 {
            return Err(Error::FrameTrailingBits);
        }
    }
    let mut codes = Vec::with_capacity(k);
    for i in 0..k {
        let mut value = 0u16;
        for offset in 0..frame.bits as usize {
            let bit = i * frame.bits as usize + offset;
            if frame.payload[bit / 8] >> (bit % 8) & 1 == 1 {
                value |= 1 << offset;
            }
        }
        codes.push(Code(value));
    }
    Ok(codes)
}

impl PackedFrame {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FRAME_HEADER_BYTES + self.payload.len());
        out.extend_from_slice(&FRAME_MAGIC);
        out.push(FRAME_VERSION);
        out.extend_from_slice(&self.feature_count.to_le_bytes());
        out.push(self.bits);
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < FRAME_HEADER_BYTES {
            return Err(Error::FrameLength { expected: FRAME_HEADER_BYTES, got: bytes.len() });
        }
        if bytes[..4] != FRAME_MAGIC {
            return Err(Error::FrameMagic);
        }
        if bytes[4] != FRAME_VERSION {
            return Err(Error::FrameVersion { got: bytes[4] });
        }
        let feature_count = u16::from_le_bytes([bytes[5], bytes[6]]);
        let bits = bytes[7];
        let expected = FRAME_HEADER_BYTES + payload_len(feature_count as usize, bits);
        if bytes.len() != expected {
            return Err(Error::FrameLength { expected, got: bytes.len() });
        }
        Ok(PackedFrame {
            feature_count,
            bits,
            payload: bytes[FRAME_HEADER_BYTES..].to_vec(),
        })
    }
}

/// Device-side encoding of one raw feature row into frame bytes.
pub fn encode_frame_bytes(table: &EncoderTable, raw_sets: &[ThresholdSet], row: &[f64]) -> Result<Vec<u8>> {
    if row.len() != table.k {
        return Err(Error::DimensionMismatch {
            context: "raw feature row",
            expected: table.k,
            got: row.len(),
        });
    }
    let codes: Vec<Code> = raw_sets
        .iter()
        .zip(row)
        .map(|(set, &x)| encode(x, set))
        .collect();
    Ok(pack(&codes, table.bits)?.to_bytes())
}

/// End-to-end loopback: encode raw rows with the exported table, pack,
/// unpack, decode with the checkpoint's standardized thresholds, and run
/// the server-side network. Matches direct checkpoint evaluation bit for
/// bit.
pub fn loopback_infer(
    raw_rows: &Matrix,
    table: &EncoderTable,
    ckpt: &Checkpoint,
) -> Result<Vec<f64>> {
    let expected = export_table(ckpt)?;
    if *table != expected {
        let reason = if table.k != expected.k {
            format!("feature count {} vs {}", table.k, expected.k)
        } else if table.bits != expected.bits {
            format!("bit width {} vs {}", table.bits, expected.bits)
        } else {
            "threshold contents differ".to_owned()
        };
        return Err(Error::TableMismatch { reason });
    }
    let raw_sets = table.threshold_sets()?;
    let std_sets = ckpt.thresholds_as_sets()?.ok_or(Error::MissingThresholds)?;
    let kind = ckpt.decoder_kind().ok_or(Error::MissingThresholds)?;
    let net = ckpt.to_net()?;

    let per = match kind {
        crate::quant::DecoderKind::Bitwise => std_sets[0].thresholds().len(),
        _ => 1,
    };
    let mut decoded = Matrix::zeros(raw_rows.rows(), table.k * per);
    let frame_len = FRAME_HEADER_BYTES + payload_len(table.k, table.bits);
    for b in 0..raw_rows.rows() {
        // Device side.
        let bytes = encode_frame_bytes(table, &raw_sets, raw_rows.row(b))?;
        debug_assert_eq!(bytes.len(), frame_len);
        if bytes.len() != frame_len {
            return Err(Error::FrameLength { expected: frame_len, got: bytes.len() });
        }
        // Server side.
        let frame = PackedFrame::from_bytes(&bytes)?;
        let codes = unpack(&frame)?;
        let orow = decoded.row_mut(b);
        for (kf, code) in codes.iter().enumerate() {
            decode_code_into(kind, code.value(), &std_sets[kf], &mut orow[kf * per..(kf + 1) * per])?;
        }
    }
    net.forward_dense(&decoded)
}
