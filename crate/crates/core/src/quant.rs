//! Hard threshold quantization: step functions, encoding to integer codes,
//! midpoint and bitwise decoding, and threshold fitting from data.
//!
//! An n-bit quantizer is defined by M = 2^n - 1 strictly increasing
//! thresholds. Encoding counts the thresholds at or below the input, so a
//! code is always in {0, ..., M}. Decoding maps the code back to either the
//! code itself, the midpoint of the matching threshold interval, or a
//! staircase bit vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_BIT_WIDTH: u8 = 2;
pub const MAX_BIT_WIDTH: u8 = 16;

/// Number of thresholds for a given bit width: M = 2^n - 1.
pub fn threshold_count(bit_width: u8) -> usize {
    (1usize << bit_width) - 1
}

/// Strictly increasing thresholds a_1 < ... < a_M for one feature,
/// with M = 2^bit_width - 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    thresholds: Vec<f64>,
    bit_width: u8,
}

impl ThresholdSet {
    pub fn new(thresholds: Vec<f64>, bit_width: u8) -> Result<Self> {
        if !(MIN_BIT_WIDTH..=MAX_BIT_WIDTH).contains(&bit_width) {
            return Err(Error::BitWidthOutOfRange {
                bits: bit_width,
                min: MIN_BIT_WIDTH,
                max: MAX_BIT_WIDTH,
            });
        }
        let expected = threshold_count(bit_width);
        if thresholds.len() != expected {
            return Err(Error::ThresholdCountMismatch {
                bits: bit_width,
                expected,
                got: thresholds.len(),
            });
        }
        for (i, &a) in thresholds.iter().enumerate() {
            if !a.is_finite() {
                return Err(Error::ThresholdNotFinite { index: i });
            }
        }
        for i in 1..thresholds.len() {
            if thresholds[i] <= thresholds[i - 1] {
                return Err(Error::ThresholdsNotIncreasing {
                    index: i,
                    prev: thresholds[i - 1],
                    next: thresholds[i],
                });
            }
        }
        Ok(ThresholdSet { thresholds, bit_width })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn bit_width(&self) -> u8 {
        self.bit_width
    }

    /// M, which is also the largest code.
    pub fn max_code(&self) -> u16 {
        self.thresholds.len() as u16
    }

    /// Threshold a_m for m in 0..=M+1, where a_0 and a_{M+1} are the
    /// extrapolated auxiliary endpoints used by midpoint decoding.
    fn threshold_extended(&self, m: usize) -> f64 {
        let t = &self.thresholds;
        let last = t.len();
        if m == 0 {
            2.0 * t[0] - t[1]
        } else if m == last + 1 {
            2.0 * t[last - 1] - t[last - 2]
        } else {
            t[m - 1]
        }
    }
}

/// Integer code in {0, ..., M}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Code(pub u16);

impl Code {
    pub fn value(self) -> u16 {
        self.0
    }
}

/// Bit vector of the staircase form [1, ..., 1, 0, ..., 0].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitVector {
    bits: Vec<bool>,
}

impl BitVector {
    /// Validates the staircase invariant: once a 0 appears, everything
    /// after it is 0.
    pub fn from_bits(bits: Vec<bool>) -> Result<Self> {
        let mut seen_zero = false;
        for (i, &b) in bits.iter().enumerate() {
            if seen_zero && b {
                return Err(Error::NotStaircase { index: i });
            }
            seen_zero |= !b;
        }
        Ok(BitVector { bits })
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Number of leading ones, i.e. the code this vector decodes from.
    pub fn code(&self) -> Code {
        Code(self.bits.iter().filter(|&&b| b).count() as u16)
    }
}

/// Which decoded representation a quantizer produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    /// The code itself, as a real number.
    Identity,
    /// Midpoint of the threshold interval the code selects.
    Midpoint,
    /// Staircase bit vector of length M.
    Bitwise,
}

/// Where a quantizer's thresholds come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    Minmax,
    Quantile,
    Learned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantScheme {
    pub decoder: DecoderKind,
    pub source: ThresholdSource,
}

/// 1 if x >= a, else 0.
#[inline]
pub fn hard_step(x: f64, a: f64) -> bool {
    x >= a
}

/// Count of thresholds at or below x. Saturates at 0 and M.
pub fn encode(x: f64, set: &ThresholdSet) -> Code {
    Code(set.thresholds.partition_point(|&a| x >= a) as u16)
}

/// Midpoint quantized value v_c = (a_c + a_{c+1}) / 2 with extrapolated
/// endpoints a_0 = 2 a_1 - a_2 and a_{M+1} = 2 a_M - a_{M-1}.
pub fn decode_midpoint(code: Code, set: &ThresholdSet) -> Result<f64> {
    let max = set.max_code();
    if code.0 > max {
        return Err(Error::CodeOutOfRange { code: code.0, max });
    }
    let c = code.0 as usize;
    Ok(0.5 * (set.threshold_extended(c) + set.threshold_extended(c + 1)))
}

/// Staircase bit vector [1 x code, 0 x (M - code)].
pub fn decode_bitwise(code: Code, max_code: u16) -> Result<BitVector> {
    if code.0 > max_code {
        return Err(Error::CodeOutOfRange { code: code.0, max: max_code });
    }
    let bits = (0..max_code).map(|m| m < code.0).collect();
    Ok(BitVector { bits })
}

/// Encode then midpoint-decode.
pub fn quantize_midpoint(x: f64, set: &ThresholdSet) -> f64 {
    decode_midpoint(encode(x, set), set)
        .expect("encode always yields a code within range")
}

/// Componentwise hard steps; equals decode_bitwise(encode(x), M).
pub fn quantize_bitwise(x: f64, set: &ThresholdSet) -> BitVector {
    let bits = set.thresholds.iter().map(|&a| hard_step(x, a)).collect();
    BitVector { bits }
}

/// Equal-width thresholds over the data range: s = (max - min) / M,
/// a_m = min + (m - 1/2) s. Midpoint decoding then reproduces
/// min + s * round((x - min) / s) on in-range inputs.
pub fn fit_minmax(data: &[f64], bit_width: u8) -> Result<ThresholdSet> {
    let (lo, hi) = data_range(data)?;
    if hi <= lo {
        return Err(Error::ConstantFeature { name: None });
    }
    let m = threshold_count_checked(bit_width)?;
    let scale = (hi - lo) / m as f64;
    let thresholds = (1..=m)
        .map(|i| lo + (i as f64 - 0.5) * scale)
        .collect();
    ThresholdSet::new(thresholds, bit_width)
}

/// Thresholds at the empirical quantile levels m / (M + 1), using linear
/// interpolation between order statistics. Duplicate quantiles (ties in
/// low-cardinality data) are nudged apart to keep strict ordering.
pub fn fit_quantile(data: &[f64], bit_width: u8) -> Result<ThresholdSet> {
    let (lo, hi) = data_range(data)?;
    if hi <= lo {
        return Err(Error::ConstantFeature { name: None });
    }
    let m = threshold_count_checked(bit_width)?;
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut thresholds: Vec<f64> = (1..=m)
        .map(|i| quantile_sorted(&sorted, i as f64 / (m + 1) as f64))
        .collect();
    enforce_strictly_increasing(&mut thresholds, sample_std(data));
    ThresholdSet::new(thresholds, bit_width)
}

/// Linear-interpolation quantile (the common "type 7" rule) over sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=1.0).contains(&p));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    }
}

/// Replace any a_{m+1} <= a_m with a_m + eps, where
/// eps = 1e-9 * max(1, scale).
pub fn enforce_strictly_increasing(values: &mut [f64], scale: f64) {
    let eps = 1e-9 * scale.max(1.0);
    for i in 1..values.len() {
        if values[i] <= values[i - 1] {
            values[i] = values[i - 1] + eps;
        }
    }
}

/// Standard deviation with the n-1 denominator; 0.0 for fewer than two points.
pub fn sample_std(data: &[f64]) -> f64 {
    let n = data.len();
    if n < 2 {
        return 0.0;
    }
    let mean = data.iter().sum::<f64>() / n as f64;
    let var = data.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    var.sqrt()
}

fn threshold_count_checked(bit_width: u8) -> Result<usize> {
    if !(MIN_BIT_WIDTH..=MAX_BIT_WIDTH).contains(&bit_width) {
        return Err(Error::BitWidthOutOfRange {
            bits: bit_width,
            min: MIN_BIT_WIDTH,
            max: MAX_BIT_WIDTH,
        });
    }
    Ok(threshold_count(bit_width))
}

fn data_range(data: &[f64]) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (i, &x) in data.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::NonFiniteData { index: i });
        }
        lo = lo.min(x);
        hi = hi.max(x);
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set3(thresholds: [f64; 3]) -> ThresholdSet {
        ThresholdSet::new(thresholds.to_vec(), 2).unwrap()
    }

    #[test]
    fn hard_step_boundary_is_inclusive() {
        assert!(hard_step(2.0, 2.0));
        assert!(!hard_step(1.999, 2.0));
        assert!(!hard_step(-5.0, 0.0));
    }

    #[test]
    fn encode_counts_thresholds() {
        let t = set3([0.0, 1.0, 2.0]);
        assert_eq!(encode(1.5, &t), Code(2));
        assert_eq!(encode(-3.0, &t), Code(0));
        assert_eq!(encode(100.0, &t), Code(3));
    }

    #[test]
    fn encode_matches_linear_scan() {
        // Brute-force oracle: count thresholds <= x one by one.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..2000 {
            let bits = rng.random_range(2..=4u8);
            let m = threshold_count(bits);
            let mut th: Vec<f64> = (0..m).map(|_| rng.random_range(-5.0..5.0)).collect();
            th.sort_by(|a, b| a.partial_cmp(b).unwrap());
            enforce_strictly_increasing(&mut th, 1.0);
            let t = ThresholdSet::new(th.clone(), bits).unwrap();
            let x = rng.random_range(-6.0..6.0);
            let scan = th.iter().filter(|&&a| x >= a).count() as u16;
            assert_eq!(encode(x, &t), Code(scan));
        }
    }

    #[test]
    fn decode_midpoint_uses_extrapolated_endpoints() {
        let t = set3([1.0, 2.0, 3.0]);
        assert_eq!(decode_midpoint(Code(0), &t).unwrap(), 0.5);
        assert_eq!(decode_midpoint(Code(1), &t).unwrap(), 1.5);
        assert_eq!(decode_midpoint(Code(3), &t).unwrap(), 3.5);
        assert!(decode_midpoint(Code(4), &t).is_err());
    }

    #[test]
    fn decode_bitwise_staircase() {
        let b = decode_bitwise(Code(0), 3).unwrap();
        assert_eq!(b.bits(), &[false, false, false]);
        let b = decode_bitwise(Code(2), 3).unwrap();
        assert_eq!(b.bits(), &[true, true, false]);
        let b = decode_bitwise(Code(3), 3).unwrap();
        assert_eq!(b.bits(), &[true, true, true]);
        assert!(decode_bitwise(Code(4), 3).is_err());
    }

    #[test]
    fn bitvector_rejects_non_staircase() {
        assert!(BitVector::from_bits(vec![true, false, true]).is_err());
        let ok = BitVector::from_bits(vec![true, true, false]).unwrap();
        assert_eq!(ok.code(), Code(2));
    }

    #[test]
    fn quantize_midpoint_examples() {
        let t = set3([1.0, 2.0, 3.0]);
        assert_eq!(quantize_midpoint(1.7, &t), 1.5);
        assert_eq!(quantize_midpoint(100.0, &t), 3.5);
    }

    #[test]
    fn quantize_midpoint_is_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let mut th: Vec<f64> = (0..7).map(|_| rng.random_range(-3.0..3.0)).collect();
            th.sort_by(|a, b| a.partial_cmp(b).unwrap());
            enforce_strictly_increasing(&mut th, 1.0);
            let t = ThresholdSet::new(th, 3).unwrap();
            let x = rng.random_range(-4.0..4.0);
            let composed = decode_midpoint(encode(x, &t), &t).unwrap();
            assert_eq!(quantize_midpoint(x, &t), composed);
        }
    }

    #[test]
    fn quantize_bitwise_examples() {
        let t = set3([0.0, 1.0, 2.0]);
        assert_eq!(quantize_bitwise(1.5, &t).bits(), &[true, true, false]);
        assert_eq!(quantize_bitwise(-0.5, &t).bits(), &[false, false, false]);
    }

    #[test]
    fn quantize_bitwise_matches_stepwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10_000 {
            let mut th: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            th.sort_by(|a, b| a.partial_cmp(b).unwrap());
            enforce_strictly_increasing(&mut th, 1.0);
            let t = ThresholdSet::new(th.clone(), 2).unwrap();
            let x = rng.random_range(-3.0..3.0);
            let got = quantize_bitwise(x, &t);
            for (m, &a) in th.iter().enumerate() {
                assert_eq!(got.bits()[m], x >= a);
            }
            // Composition with encode must agree as well.
            assert_eq!(got, decode_bitwise(encode(x, &t), t.max_code()).unwrap());
        }
    }

    #[test]
    fn fit_minmax_two_bits() {
        let data = [0.0, 1.0, 2.0, 3.0];
        let t = fit_minmax(&data, 2).unwrap();
        assert_eq!(t.thresholds(), &[0.5, 1.5, 2.5]);
        // Bit width 2 means exactly M = 3 thresholds.
        assert_eq!(t.thresholds().len(), 3);
        assert_eq!(t.bit_width(), 2);
    }

    #[test]
    fn fit_minmax_spacing_ignores_density() {
        // Heavily skewed sample; spacing must stay uniform.
        let mut data: Vec<f64> = vec![0.0; 100];
        data.push(10.0);
        let t = fit_minmax(&data, 3).unwrap();
        let th = t.thresholds();
        let s = th[1] - th[0];
        for w in th.windows(2) {
            assert!((w[1] - w[0] - s).abs() < 1e-12);
        }
        assert!((s - 10.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn fit_minmax_constant_feature_errors() {
        assert!(matches!(
            fit_minmax(&[2.0, 2.0, 2.0], 2),
            Err(Error::ConstantFeature { .. })
        ));
        assert!(matches!(fit_minmax(&[], 2), Err(Error::EmptyData)));
    }

    // Independent quantile oracle: direct transcription of the
    // interpolation rule, separate from quantile_sorted.
    fn quantile_oracle(data: &[f64], p: f64) -> f64 {
        let mut s = data.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h = (s.len() as f64 - 1.0) * p;
        let i = h.floor() as usize;
        let j = (i + 1).min(s.len() - 1);
        s[i] * (1.0 - (h - i as f64)) + s[j] * (h - i as f64)
    }

    #[test]
    fn fit_quantile_integers() {
        let data: Vec<f64> = (0..8).map(f64::from).collect();
        let t = fit_quantile(&data, 2).unwrap();
        for (m, &a) in t.thresholds().iter().enumerate() {
            let expect = quantile_oracle(&data, (m + 1) as f64 / 4.0);
            assert!((a - expect).abs() < 1e-12, "m={m}: {a} vs {expect}");
        }
        assert!((t.thresholds()[0] - 1.75).abs() < 1e-12);
        assert!((t.thresholds()[1] - 3.5).abs() < 1e-12);
        assert!((t.thresholds()[2] - 5.25).abs() < 1e-12);
    }

    #[test]
    fn fit_quantile_uniform_large_sample() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let data: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>()).collect();
        let t = fit_quantile(&data, 2).unwrap();
        for (m, &a) in t.thresholds().iter().enumerate() {
            let level = (m + 1) as f64 / 4.0;
            assert!((a - level).abs() < 0.02, "level {level}: got {a}");
        }
    }

    #[test]
    fn fit_quantile_symmetric_data() {
        let data = [-4.0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 4.0];
        let t = fit_quantile(&data, 2).unwrap();
        let th = t.thresholds();
        assert!((th[0] + th[2]).abs() < 1e-12);
        assert!(th[1].abs() < 1e-12);
    }

    #[test]
    fn fit_quantile_low_cardinality_stays_strict() {
        let data = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 2.0];
        let t = fit_quantile(&data, 3).unwrap();
        let th = t.thresholds();
        for i in 1..th.len() {
            assert!(th[i] > th[i - 1]);
        }
    }

    #[test]
    fn fit_quantile_constant_errors() {
        assert!(matches!(
            fit_quantile(&[5.0; 20], 2),
            Err(Error::ConstantFeature { .. })
        ));
    }

    #[test]
    fn threshold_set_validation() {
        assert!(ThresholdSet::new(vec![0.0, 1.0, 2.0], 1).is_err());
        assert!(ThresholdSet::new(vec![0.0, 1.0], 2).is_err());
        assert!(ThresholdSet::new(vec![0.0, 0.0, 1.0], 2).is_err());
        assert!(ThresholdSet::new(vec![0.0, f64::NAN, 1.0], 2).is_err());
        assert!(ThresholdSet::new(vec![0.0, 1.0, 2.0], 2).is_ok());
    }

    #[test]
    fn minmax_closed_form_on_range() {
        // quantize_midpoint under fit_minmax equals
        // min + s * round((x - min) / s) for in-range x.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let lo = rng.random_range(-10.0..0.0);
            let hi = lo + rng.random_range(0.5..20.0);
            let data: Vec<f64> = (0..200)
                .map(|_| rng.random_range(lo..hi))
                .chain([lo, hi])
                .collect();
            let bits = rng.random_range(2..=5u8);
            let t = fit_minmax(&data, bits).unwrap();
            let s = (hi - lo) / t.max_code() as f64;
            for _ in 0..50 {
                let x = rng.random_range(lo..=hi);
                let got = quantize_midpoint(x, &t);
                let expect = lo + s * ((x - lo) / s).round();
                assert!(
                    (got - expect).abs() <= 1e-9 * (1.0 + expect.abs()),
                    "x={x}: {got} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn quantile_balance_on_distinct_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for &bits in &[2u8, 3] {
            let n = 4000usize;
            let data: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let t = fit_quantile(&data, bits).unwrap();
            let m = t.max_code() as usize;
            let mut counts = vec![0usize; m + 1];
            for &x in &data {
                counts[encode(x, &t).value() as usize] += 1;
            }
            let expect = n as f64 / (m + 1) as f64;
            for (c, &k) in counts.iter().enumerate() {
                assert!(
                    (k as f64 - expect).abs() <= 1.0,
                    "bits={bits} code {c}: {k} vs {expect}"
                );
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_threshold_set() -> impl Strategy<Value = ThresholdSet> {
            (2u8..=4, proptest::collection::vec(-100.0f64..100.0, 15))
                .prop_map(|(bits, raw)| {
                    let m = threshold_count(bits);
                    let mut th: Vec<f64> = raw[..m].to_vec();
                    th.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    enforce_strictly_increasing(&mut th, 1.0);
                    ThresholdSet::new(th, bits).unwrap()
                })
        }

        proptest! {
            #[test]
            fn encode_is_monotone(t in arb_threshold_set(),
                                  x in -200.0f64..200.0,
                                  y in -200.0f64..200.0) {
                let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
                prop_assert!(encode(lo, &t) <= encode(hi, &t));
            }

            #[test]
            fn encode_stays_in_range(t in arb_threshold_set(), x in -1e9f64..1e9) {
                prop_assert!(encode(x, &t).value() <= t.max_code());
            }

            #[test]
            fn bitwise_composition(t in arb_threshold_set(), x in -200.0f64..200.0) {
                let direct = quantize_bitwise(x, &t);
                let composed = decode_bitwise(encode(x, &t), t.max_code()).unwrap();
                prop_assert_eq!(direct, composed);
            }

            #[test]
            fn midpoint_idempotent(t in arb_threshold_set(), x in -200.0f64..200.0) {
                let once = quantize_midpoint(x, &t);
                prop_assert_eq!(quantize_midpoint(once, &t), once);
            }
        }
    }
}
