//! Portable C source emission for the on-device encoder.
//!
//! The generated file is self-contained (only `stdint.h`), stores
//! thresholds as single-precision floats, and defines
//! `encode_features(const float* in, unsigned char* out)` writing the
//! packed payload exactly as `deploy::pack` does: codes in feature order,
//! LSB-first per byte, zero padding. Ties at a threshold encode upward
//! (`x >= a`), matching the library.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::quant::threshold_count;

use super::{payload_len, EncoderTable};

pub const CODEGEN_MIN_BITS: u8 = 2;
pub const CODEGEN_MAX_BITS: u8 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderStyle {
    /// Unrolled nested comparisons, one site per threshold.
    IfChain,
    /// Static threshold table with a shared binary-search loop.
    BinarySearch,
}

impl EncoderStyle {
    pub fn label(self) -> &'static str {
        match self {
            EncoderStyle::IfChain => "if_chain",
            EncoderStyle::BinarySearch => "binary_search",
        }
    }
}

impl std::str::FromStr for EncoderStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        match key.to_ascii_lowercase().as_str() {
            "ifchain" => Ok(EncoderStyle::IfChain),
            "binarysearch" => Ok(EncoderStyle::BinarySearch),
            _ => Err(Error::InvalidConfig(format!("unknown encoder style {s:?}"))),
        }
    }
}

/// Static cost summary of a generated encoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FootprintReport {
    pub style: EncoderStyle,
    pub feature_count: usize,
    pub bits: u8,
    pub thresholds_per_feature: usize,
    /// K * M * 4 bytes at single precision, however the style stores them.
    pub threshold_bytes: usize,
    /// Textual comparison sites in the emitted code.
    pub comparison_sites: usize,
    /// Entries in the static threshold table (binary-search style only).
    pub table_float_entries: usize,
    /// Packed payload bytes per frame.
    pub payload_bytes: usize,
    /// Functions plus static tables the object file exports.
    pub symbol_count: usize,
}

impl std::fmt::Display for FootprintReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "encoder footprint ({} style)", self.style.label())?;
        writeln!(
            f,
            "  features: {}, bits: {}, thresholds per feature: {}",
            self.feature_count, self.bits, self.thresholds_per_feature
        )?;
        writeln!(
            f,
            "  threshold storage: {} bytes ({} x {} x 4-byte float)",
            self.threshold_bytes, self.feature_count, self.thresholds_per_feature
        )?;
        writeln!(f, "  comparison sites: {}", self.comparison_sites)?;
        writeln!(f, "  table entries: {}", self.table_float_entries)?;
        writeln!(f, "  payload per frame: {} bytes", self.payload_bytes)?;
        write!(f, "  symbols: {}", self.symbol_count)
    }
}

pub fn footprint_report(table: &EncoderTable, style: EncoderStyle) -> Result<FootprintReport> {
    check_table(table)?;
    let m = threshold_count(table.bits);
    let (sites, entries, symbols) = match style {
        EncoderStyle::IfChain => (table.k * m, 0, 1),
        EncoderStyle::BinarySearch => (1, table.k * m, 2),
    };
    Ok(FootprintReport {
        style,
        feature_count: table.k,
        bits: table.bits,
        thresholds_per_feature: m,
        threshold_bytes: table.k * m * 4,
        comparison_sites: sites,
        table_float_entries: entries,
        payload_bytes: payload_len(table.k, table.bits),
        symbol_count: symbols,
    })
}

fn check_table(table: &EncoderTable) -> Result<()> {
    if !(CODEGEN_MIN_BITS..=CODEGEN_MAX_BITS).contains(&table.bits) {
        return Err(Error::BitWidthOutOfRange {
            bits: table.bits,
            min: CODEGEN_MIN_BITS,
            max: CODEGEN_MAX_BITS,
        });
    }
    let m = threshold_count(table.bits);
    if table.k == 0 || table.thresholds_raw.len() != table.k {
        return Err(Error::InvalidConfig("encoder table feature count mismatch".into()));
    }
    if table.thresholds_raw.iter().any(|t| t.len() != m) {
        return Err(Error::InvalidConfig("encoder table threshold count mismatch".into()));
    }
    Ok(())
}

/// The thresholds exactly as the generated C sees them.
pub fn thresholds_f32(table: &EncoderTable) -> Vec<Vec<f32>> {
    table
        .thresholds_raw
        .iter()
        .map(|t| t.iter().map(|&a| a as f32).collect())
        .collect()
}

fn float_literal(v: f32) -> String {
    // Debug formatting round-trips the f32 exactly and always includes a
    // decimal point or exponent, so appending the suffix yields a valid C
    // literal with the same value.
    format!("{v:?}f")
}

pub fn emit_encoder_source(table: &EncoderTable, style: EncoderStyle) -> Result<String> {
    check_table(table)?;
    let k = table.k;
    let bits = table.bits;
    let m = threshold_count(bits);
    let payload = payload_len(k, bits);
    let th = thresholds_f32(table);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "/* Feature encoder: {k} features, {bits} bits per feature ({m} thresholds each).\n\
 *\n\
 * encode_features(in, out):\n\
 *   in  - {k} raw feature values, order: {}\n\
 *   out - {payload} bytes, codes packed in feature order, LSB-first per\n\
 *         byte, unused trailing bits zero.\n\
 * Values equal to a threshold encode upward (x >= a counts the threshold).\n\
 * Generated file; do not edit. Style: {}. */",
        table.order.join(", "),
        style.label()
    );
    out.push_str("#include <stdint.h>\n\n");
    let _ = writeln!(out, "#define K_FEATURES {k}u");
    let _ = writeln!(out, "#define N_BITS {bits}u");
    let _ = writeln!(out, "#define N_THRESHOLDS {m}u");
    let _ = writeln!(out, "#define PAYLOAD_BYTES {payload}u\n");

    match style {
        EncoderStyle::BinarySearch => {
            let _ = writeln!(out, "static const float k_thresholds[{}] = {{", k * m);
            for (kf, feats) in th.iter().enumerate() {
                let row: Vec<String> = feats.iter().map(|&v| float_literal(v)).collect();
                let _ = writeln!(out, "    {}, /* {} */", row.join(", "), table.order[kf]);
            }
            out.push_str("};\n\n");
            out.push_str(
                "static unsigned encode_one(float x, const float *t) {\n\
    unsigned lo = 0u;\n\
    unsigned hi = N_THRESHOLDS;\n\
    while (lo < hi) {\n\
        unsigned mid = (lo + hi) >> 1;\n\
        if (x >= t[mid]) {\n\
            lo = mid + 1u;\n\
        } else {\n\
            hi = mid;\n\
        }\n\
    }\n\
    return lo;\n\
}\n\n",
            );
            out.push_str(
                "void encode_features(const float *in, unsigned char *out) {\n\
    unsigned i;\n\
    unsigned bit = 0u;\n\
    for (i = 0u; i < PAYLOAD_BYTES; ++i) {\n\
        out[i] = 0u;\n\
    }\n\
    for (i = 0u; i < K_FEATURES; ++i) {\n\
        unsigned c = encode_one(in[i], &k_thresholds[i * N_THRESHOLDS]);\n\
        out[bit >> 3] |= (unsigned char)(c << (bit & 7u));\n\
        if ((bit & 7u) + N_BITS > 8u) {\n\
            out[(bit >> 3) + 1u] |= (unsigned char)(c >> (8u - (bit & 7u)));\n\
        }\n\
        bit += N_BITS;\n\
    }\n\
}\n",
            );
        }
        EncoderStyle::IfChain => {
            out.push_str(
                "void encode_features(const float *in, unsigned char *out) {\n\
    unsigned c;\n    unsigned i;\n\
    for (i = 0u; i < PAYLOAD_BYTES; ++i) {\n\
        out[i] = 0u;\n\
    }\n",
            );
            for (kf, feats) in th.iter().enumerate() {
                let _ = writeln!(out, "    /* feature {kf}: {} */", table.order[kf]);
                let _ = writeln!(out, "    {{");
                let _ = writeln!(out, "        const float x = in[{kf}];");
                emit_if_tree(&mut out, feats, 0, feats.len(), 2);
                let _ = writeln!(out, "    }}");
                let bit = kf * bits as usize;
                let byte = bit / 8;
                let shift = bit % 8;
                if shift == 0 {
                    let _ = writeln!(out, "    out[{byte}] |= (unsigned char)c;");
                } else {
                    let _ = writeln!(out, "    out[{byte}] |= (unsigned char)(c << {shift}u);");
                }
                if shift + bits as usize > 8 {
                    let _ = writeln!(
                        out,
                        "    out[{}] |= (unsigned char)(c >> {}u);",
                        byte + 1,
                        8 - shift
                    );
                }
            }
            out.push_str("}\n");
        }
    }

    let report = footprint_report(table, style)?;
    let _ = writeln!(out, "\n/*\n{}\n*/", indent_block(&report.to_string()));
    Ok(out)
}

/// Nested binary partition over threshold indices [lo, hi); leaves assign
/// the final code. Every threshold in the range appears as exactly one
/// comparison site.
fn emit_if_tree(out: &mut String, th: &[f32], lo: usize, hi: usize, depth: usize) {
    let pad = "    ".repeat(depth + 1);
    if lo == hi {
        let _ = writeln!(out, "{pad}c = {lo}u;");
        return;
    }
    let mid = (lo + hi) / 2;
    let _ = writeln!(out, "{pad}if (x >= {}) {{", float_literal(th[mid]));
    emit_if_tree(out, th, mid + 1, hi, depth + 1);
    let _ = writeln!(out, "{pad}}} else {{");
    emit_if_tree(out, th, lo, mid, depth + 1);
    let _ = writeln!(out, "{pad}}}");
}

fn indent_block(s: &str) -> String {
    s.lines().map(|l| format!(" * {l}")).collect::<Vec<_>>().join("\n")
}
