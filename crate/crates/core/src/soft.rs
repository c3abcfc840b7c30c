//! Differentiable soft quantization: sigmoid step approximations, analytic
//! threshold gradients, temperature schedules, and hardening back to
//! threshold quantizers for inference.
//!
//! A soft step is sigma((x - a) / tau). Summing soft steps approximates the
//! integer encoding; stacking them approximates the bitwise quantization.
//! Both are differentiable in the thresholds, so the thresholds can be
//! trained jointly with a network. As tau shrinks the approximation tightens
//! and rounding recovers the hard quantizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quant::{enforce_strictly_increasing, sample_std, ThresholdSet};

/// Numerically stable logistic sigmoid; never overflows or returns NaN for
/// finite input.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTemperature { tau })
    }
}

/// sigma((x - a) / tau), the soft version of the step at threshold a.
pub fn soft_step(x: f64, a: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(sigmoid((x - a) / tau))
}

/// Sum of soft steps over all thresholds; lives in (0, M).
pub fn soft_encode(x: f64, thresholds: &[f64], tau: f64) -> Result<f64> {
    check_tau(tau)?;
    Ok(thresholds.iter().map(|&a| sigmoid((x - a) / tau)).sum())
}

/// Componentwise soft steps; lives in (0, 1)^M.
pub fn soft_bitwise(x: f64, thresholds: &[f64], tau: f64) -> Result<Vec<f64>> {
    check_tau(tau)?;
    Ok(thresholds.iter().map(|&a| sigmoid((x - a) / tau)).collect())
}

/// d soft_step / d a = -(1/tau) * s * (1 - s) with s = sigma((x - a) / tau).
///
/// For the bitwise form the Jacobian is diagonal: component i does not
/// depend on threshold m for i != m.
pub fn grad_threshold(x: f64, a: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    let s = sigmoid((x - a) / tau);
    Ok(-s * (1.0 - s) / tau)
}

/// How soft step outputs are combined per feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoftMode {
    /// Sum of soft steps: one scalar per feature approximating the code.
    Sum,
    /// Stacked soft steps: M values per feature approximating the bit vector.
    Bitwise,
}

/// Trainable per-feature thresholds with a shared temperature.
///
/// Threshold ordering is deliberately unconstrained while training:
/// gradient steps may reorder thresholds freely. `hard_forward_row` keeps
/// the trained order, and `harden_with_permutation` reports how sorting
/// rearranged each feature so downstream weight columns can follow.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SoftQuantLayer {
    /// Flat thresholds, feature-major: entry k * M + m is threshold m of
    /// feature k.
    thresholds: Vec<f64>,
    feature_count: usize,
    bit_width: u8,
    tau: f64,
    mode: SoftMode,
}

impl SoftQuantLayer {
    pub fn new(per_feature: Vec<ThresholdSet>, tau: f64, mode: SoftMode) -> Result<Self> {
        check_tau(tau)?;
        if per_feature.is_empty() {
            return Err(Error::InvalidConfig("quantization layer needs at least one feature".into()));
        }
        let bit_width = per_feature[0].bit_width();
        let m = per_feature[0].thresholds().len();
        let mut thresholds = Vec::with_capacity(per_feature.len() * m);
        for set in &per_feature {
            if set.bit_width() != bit_width {
                return Err(Error::InvalidConfig(
                    "all features must share one bit width".into(),
                ));
            }
            thresholds.extend_from_slice(set.thresholds());
        }
        Ok(SoftQuantLayer {
            thresholds,
            feature_count: per_feature.len(),
            bit_width,
            tau,
            mode,
        })
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn bit_width(&self) -> u8 {
        self.bit_width
    }

    /// Thresholds per feature, M = 2^bit_width - 1.
    pub fn thresholds_per_feature(&self) -> usize {
        self.thresholds.len() / self.feature_count
    }

    pub fn mode(&self) -> SoftMode {
        self.mode
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn set_tau(&mut self, tau: f64) -> Result<()> {
        check_tau(tau)?;
        self.tau = tau;
        Ok(())
    }

    /// Width of the layer output: K for sum mode, K * M for bitwise mode.
    pub fn output_width(&self) -> usize {
        match self.mode {
            SoftMode::Sum => self.feature_count,
            SoftMode::Bitwise => self.thresholds.len(),
        }
    }

    pub fn thresholds_flat(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn thresholds_flat_mut(&mut self) -> &mut [f64] {
        &mut self.thresholds
    }

    pub fn feature_thresholds(&self, k: usize) -> &[f64] {
        let m = self.thresholds_per_feature();
        &self.thresholds[k * m..(k + 1) * m]
    }

    /// Soft forward for one input row. Writes the layer output to `out`
    /// (length `output_width`) and every sigmoid to `sig` (length K * M,
    /// feature-major) for reuse in the backward pass.
    pub fn forward_soft_row(&self, row: &[f64], out: &mut [f64], sig: &mut [f64]) {
        let m = self.thresholds_per_feature();
        debug_assert_eq!(row.len(), self.feature_count);
        debug_assert_eq!(sig.len(), self.thresholds.len());
        debug_assert_eq!(out.len(), self.output_width());
        for k in 0..self.feature_count {
            let x = row[k];
            let th = &self.thresholds[k * m..(k + 1) * m];
            let sg = &mut sig[k * m..(k + 1) * m];
            for (s, &a) in sg.iter_mut().zip(th) {
                *s = sigmoid((x - a) / self.tau);
            }
            match self.mode {
                SoftMode::Sum => out[k] = sg.iter().sum(),
                SoftMode::Bitwise => out[k * m..(k + 1) * m].copy_from_slice(sg),
            }
        }
    }

    /// Accumulates dL/d a_{k,m} into `grad` (flat, feature-major) given the
    /// gradient at the layer output and the sigmoids cached by
    /// `forward_soft_row`.
    pub fn backward_row(&self, dl_dout: &[f64], sig: &[f64], grad: &mut [f64]) {
        let m = self.thresholds_per_feature();
        debug_assert_eq!(grad.len(), self.thresholds.len());
        let inv_tau = 1.0 / self.tau;
        match self.mode {
            SoftMode::Sum => {
                debug_assert_eq!(dl_dout.len(), self.feature_count);
                for k in 0..self.feature_count {
                    let d = dl_dout[k];
                    for j in k * m..(k + 1) * m {
                        let s = sig[j];
                        grad[j] += d * (-inv_tau * s * (1.0 - s));
                    }
                }
            }
            SoftMode::Bitwise => {
                debug_assert_eq!(dl_dout.len(), self.thresholds.len());
                for (j, &d) in dl_dout.iter().enumerate() {
                    let s = sig[j];
                    grad[j] += d * (-inv_tau * s * (1.0 - s));
                }
            }
        }
    }

    /// Converts the trained layer into hard per-feature quantizers: sorts
    /// each feature's thresholds and nudges ties apart.
    pub fn harden(&self) -> Result<Vec<ThresholdSet>> {
        Ok(self.harden_with_permutation()?.0)
    }

    /// Like `harden`, additionally returning, per feature, the trained
    /// index of each sorted slot. In bitwise mode every threshold owns a
    /// weight column downstream, so whoever sorts the thresholds must
    /// permute those columns with the same map.
    pub fn harden_with_permutation(&self) -> Result<(Vec<ThresholdSet>, Vec<Vec<usize>>)> {
        let m = self.thresholds_per_feature();
        let mut sets = Vec::with_capacity(self.feature_count);
        let mut perms = Vec::with_capacity(self.feature_count);
        for k in 0..self.feature_count {
            let th = &self.thresholds[k * m..(k + 1) * m];
            if th.iter().any(|a| !a.is_finite()) {
                return Err(Error::NonFiniteLearnedThreshold { feature: k });
            }
            let mut perm: Vec<usize> = (0..m).collect();
            perm.sort_by(|&i, &j| th[i].partial_cmp(&th[j]).unwrap());
            let mut sorted: Vec<f64> = perm.iter().map(|&i| th[i]).collect();
            let scale = sample_std(&sorted);
            enforce_strictly_increasing(&mut sorted, scale);
            sets.push(ThresholdSet::new(sorted, self.bit_width)?);
            perms.push(perm);
        }
        Ok((sets, perms))
    }

    /// Hard counterpart of `forward_soft_row` in the *trained* threshold
    /// order: exactly what rounding the soft outputs yields. Inference on
    /// a still-soft net uses this so components keep their pairing with
    /// downstream weights even when training reordered thresholds.
    pub fn hard_forward_row(&self, row: &[f64], out: &mut [f64]) {
        let m = self.thresholds_per_feature();
        debug_assert_eq!(out.len(), self.output_width());
        for k in 0..self.feature_count {
            let x = row[k];
            let th = &self.thresholds[k * m..(k + 1) * m];
            match self.mode {
                SoftMode::Sum => {
                    out[k] = th.iter().filter(|&&a| x >= a).count() as f64;
                }
                SoftMode::Bitwise => {
                    for (o, &a) in out[k * m..(k + 1) * m].iter_mut().zip(th) {
                        *o = if x >= a { 1.0 } else { 0.0 };
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Linear,
    Warmup,
    Cosine,
    Cyclical,
    Exponential,
}

/// Epoch-indexed interpolation from `tau_init` down to `tau_end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureSchedule {
    pub kind: ScheduleKind,
    pub tau_init: f64,
    pub tau_end: f64,
    pub total_epochs: u32,
}

/// Fraction of epochs the warmup schedule holds the initial temperature.
const WARMUP_FRACTION: f64 = 0.1;
/// Number of bumps in the cyclical schedule.
const CYCLE_COUNT: u32 = 4;

impl TemperatureSchedule {
    pub fn new(kind: ScheduleKind, tau_init: f64, tau_end: f64, total_epochs: u32) -> Result<Self> {
        if !(tau_end > 0.0 && tau_end <= tau_init && tau_init.is_finite()) {
            return Err(Error::InvalidSchedule { tau_init, tau_end });
        }
        if total_epochs < 1 {
            return Err(Error::InvalidConfig("schedule needs at least one epoch".into()));
        }
        Ok(TemperatureSchedule { kind, tau_init, tau_end, total_epochs })
    }

    /// Paper-style default: exponential decay from 1 to the decrease factor.
    pub fn exponential(tau_end: f64, total_epochs: u32) -> Result<Self> {
        Self::new(ScheduleKind::Exponential, 1.0, tau_end, total_epochs)
    }

    /// Temperature at an epoch in [0, total_epochs]. Endpoints are exact.
    pub fn tau_at(&self, epoch: u32) -> Result<f64> {
        let e = self.total_epochs;
        if epoch > e {
            return Err(Error::EpochOutOfRange { epoch, total: e });
        }
        if epoch == 0 {
            return Ok(self.tau_init);
        }
        if epoch == e {
            return Ok(self.tau_end);
        }
        let t = epoch as f64 / e as f64;
        let tau = match self.kind {
            ScheduleKind::Linear => self.tau_init + (self.tau_end - self.tau_init) * t,
            ScheduleKind::Exponential => self.envelope(t),
            ScheduleKind::Cosine => {
                self.tau_end
                    + (self.tau_init - self.tau_end) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
            }
            ScheduleKind::Warmup => {
                if t <= WARMUP_FRACTION {
                    self.tau_init
                } else {
                    let u = (t - WARMUP_FRACTION) / (1.0 - WARMUP_FRACTION);
                    self.tau_init + (self.tau_end - self.tau_init) * u
                }
            }
            ScheduleKind::Cyclical => {
                // Exponential envelope times a smooth bump that is exactly 1
                // at every cycle boundary.
                let cycles = CYCLE_COUNT as u64 * epoch as u64;
                let p = (cycles % e as u64) as f64 / e as f64;
                let bump = ((self.tau_init / self.tau_end).ln() * p * (1.0 - p)).exp();
                self.envelope(t) * bump
            }
        };
        Ok(tau)
    }

    fn envelope(&self, t: f64) -> f64 {
        self.tau_init * (self.tau_end / self.tau_init).powf(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::{encode, hard_step, quantize_bitwise};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn soft_step_values() {
        assert_eq!(soft_step(0.0, 0.0, 1.0).unwrap(), 0.5);
        let v = soft_step(3f64.ln(), 0.0, 1.0).unwrap();
        assert!((v - 0.75).abs() < 1e-15);
        assert!(soft_step(0.0, 0.0, 0.0).is_err());
        assert!(soft_step(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn soft_step_is_stable_far_from_threshold() {
        // 40 tau out: saturated but finite, rounds to the hard step.
        let v = soft_step(40.0, 0.0, 1.0).unwrap();
        let oracle = 1.0 / (1.0 + (-40.0f64).exp());
        assert!((v - oracle).abs() < 1e-15);
        assert_eq!(v.round(), 1.0);

        // 500 tau out in both directions: no overflow, no NaN, and the
        // small tail matches exp(-z) to high relative accuracy.
        let hi = soft_step(500.0, 0.0, 1.0).unwrap();
        assert!(hi.is_finite() && hi > 1.0 - 1e-12);
        let lo = soft_step(-500.0, 0.0, 1.0).unwrap();
        assert!(lo.is_finite() && lo > 0.0);
        let tail = (-500.0f64).exp();
        assert!((lo - tail).abs() / tail < 1e-12);

        // Extreme stretch well past exp overflow territory.
        let v = soft_step(1e6, 0.0, 1.0).unwrap();
        assert_eq!(v, 1.0);
        let v = soft_step(-1e6, 0.0, 1.0).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn soft_encode_examples() {
        // Midway between two far-apart thresholds at small tau: one
        // saturated sigmoid each way.
        let v = soft_encode(0.5, &[0.0, 1.0], 0.01).unwrap();
        assert!((v - 1.0).abs() < 1e-6);
        // Single threshold, x on it.
        assert_eq!(soft_encode(3.0, &[3.0], 0.7).unwrap(), 0.5);
    }

    #[test]
    fn soft_encode_matches_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let th: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let x = rng.random_range(-3.0..3.0);
            let tau = rng.random_range(0.05..2.0);
            let got = soft_encode(x, &th, tau).unwrap();
            let oracle: f64 = th
                .iter()
                .map(|&a| 1.0 / (1.0 + ((a - x) / tau).exp()))
                .sum();
            assert!((got - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_bitwise_examples() {
        let th = [-1.0, 0.5, 2.0];
        let v = soft_bitwise(0.5, &th, 1.0).unwrap();
        assert_eq!(v[1], 0.5);
        assert_eq!(v.len(), 3);

        let far = soft_bitwise(-101.0, &[-1.0, 0.0, 1.0], 1.0).unwrap();
        assert!(far.iter().all(|&s| s < 1e-10));
    }

    #[test]
    fn soft_bitwise_rounds_to_hard_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let tau = 0.001;
        for _ in 0..2000 {
            let mut th: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            th.sort_by(|a, b| a.partial_cmp(b).unwrap());
            enforce_strictly_increasing(&mut th, 1.0);
            let set = ThresholdSet::new(th.clone(), 2).unwrap();
            let x = rng.random_range(-3.0..3.0);
            if th.iter().any(|&a| (x - a).abs() <= 10.0 * tau) {
                continue;
            }
            let soft = soft_bitwise(x, &th, tau).unwrap();
            let hard = quantize_bitwise(x, &set);
            for (s, &h) in soft.iter().zip(hard.bits()) {
                assert_eq!(s.round() != 0.0, h);
            }
        }
    }

    #[test]
    fn grad_threshold_closed_form() {
        assert_eq!(grad_threshold(0.0, 0.0, 1.0).unwrap(), -0.25);
        assert_eq!(grad_threshold(2.0, 2.0, 0.5).unwrap(), -0.5);
        assert!(grad_threshold(0.0, 0.0, 0.0).is_err());
    }

    // Central difference of soft_step with respect to the threshold. In
    // the saturated tails sigma sits within one ulp of 1, so the naive
    // difference cancels catastrophically; sigma(z) = 1 - sigma(-z) lets
    // the same difference be evaluated on the small branch, where every
    // value carries full relative precision.
    fn central_diff_wrt_threshold(x: f64, a: f64, tau: f64, h: f64) -> f64 {
        let u = (a - x) / tau;
        let d = h / tau;
        let numerator = if u >= 0.0 {
            // step(a + h) - step(a - h) = sigma(u + d) - sigma(u - d),
            // rewritten on negative arguments.
            sigmoid(-(u - d)) - sigmoid(-(u + d))
        } else {
            sigmoid(u + d) - sigmoid(u - d)
        };
        -numerator / (2.0 * h)
    }

    #[test]
    fn central_diff_helper_matches_naive_away_from_tails() {
        // Where no saturation occurs the rearranged difference agrees with
        // the direct evaluation.
        for (x, a, tau) in [(0.3, 0.1, 1.0), (-0.5, 0.2, 0.5), (1.0, 1.2, 2.0)] {
            let h = 1e-5;
            let naive = (soft_step(x, a + h, tau).unwrap() - soft_step(x, a - h, tau).unwrap())
                / (2.0 * h);
            let stable = central_diff_wrt_threshold(x, a, tau, h);
            assert!((naive - stable).abs() < 1e-10, "x={x} a={a} tau={tau}");
        }
    }

    #[test]
    fn grad_threshold_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..500 {
            let tau: f64 = rng.random_range(0.1..10.0);
            let a: f64 = rng.random_range(-5.0..5.0);
            let x = a + rng.random_range(-20.0..20.0) * tau;
            let h = 1e-5 * a.abs().max(1.0);
            let fd = central_diff_wrt_threshold(x, a, tau, h);
            let an = grad_threshold(x, a, tau).unwrap();
            let denom = an.abs().max(1e-300);
            assert!(
                ((an - fd) / denom).abs() < 1e-5,
                "x={x} a={a} tau={tau}: {an} vs {fd}"
            );
        }
    }

    #[test]
    fn rounding_identity_with_margin() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let tau = 1.0;
        for _ in 0..5000 {
            let a: f64 = rng.random_range(-2.0..2.0);
            let x: f64 = rng.random_range(-30.0..30.0);
            if (x - a).abs() <= 10.0 * tau {
                continue;
            }
            let soft = soft_step(x, a, tau).unwrap();
            assert_eq!(soft.round() != 0.0, hard_step(x, a));
        }
    }

    #[test]
    fn soft_encode_converges_to_hard_encode() {
        // The signed sum can cancel fortuitously at large tau when x sits
        // between thresholds, so the pointwise gap is only guaranteed to
        // shrink once every sigmoid is in its saturated regime. Compare
        // consecutive temperatures only where x clears all thresholds by
        // ten times the larger one.
        let taus = [1.0, 0.1, 0.01, 0.001];
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let mut compared = 0;
        for _ in 0..300 {
            let mut th: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
            th.sort_by(|a, b| a.partial_cmp(b).unwrap());
            enforce_strictly_increasing(&mut th, 1.0);
            let set = ThresholdSet::new(th.clone(), 3).unwrap();
            let x: f64 = rng.random_range(-40.0..40.0);
            let dist = th
                .iter()
                .map(|&a| (x - a).abs())
                .fold(f64::INFINITY, f64::min);
            let hard = encode(x, &set).value() as f64;
            let gap = |tau: f64| (soft_encode(x, &th, tau).unwrap() - hard).abs();
            for w in taus.windows(2) {
                if dist > 10.0 * w[0] {
                    assert!(
                        gap(w[1]) <= gap(w[0]) + 1e-15,
                        "x={x} tau {}->{}",
                        w[0],
                        w[1]
                    );
                    compared += 1;
                }
            }
        }
        assert!(compared > 300);
    }

    #[test]
    fn soft_bitwise_gap_shrinks_componentwise_for_any_margin() {
        // Per component the statement needs no margin: the gap to the hard
        // step is sigma(-|x - a| / tau), strictly shrinking with tau.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..500 {
            let a: f64 = rng.random_range(-2.0..2.0);
            let x: f64 = rng.random_range(-3.0..3.0);
            if (x - a).abs() < 1e-6 {
                continue;
            }
            let hard = if hard_step(x, a) { 1.0 } else { 0.0 };
            let mut prev = f64::INFINITY;
            for tau in [1.0, 0.1, 0.01, 0.001] {
                let gap = (soft_step(x, a, tau).unwrap() - hard).abs();
                assert!(gap <= prev, "x={x} a={a} tau={tau}");
                prev = gap;
            }
        }
    }

    #[test]
    fn bitwise_jacobian_is_diagonal() {
        let th = [-0.5, 0.3, 1.1];
        let x = 0.4;
        let tau = 0.8;
        let h = 1e-6;
        for m in 0..3 {
            let mut up = th;
            up[m] += h;
            let mut dn = th;
            dn[m] -= h;
            let vu = soft_bitwise(x, &up, tau).unwrap();
            let vd = soft_bitwise(x, &dn, tau).unwrap();
            for i in 0..3 {
                if i != m {
                    assert_eq!(vu[i], vd[i], "component {i} moved with threshold {m}");
                }
            }
        }
    }

    fn mk_layer(mode: SoftMode) -> SoftQuantLayer {
        let sets = vec![
            ThresholdSet::new(vec![-1.0, 0.0, 1.0], 2).unwrap(),
            ThresholdSet::new(vec![-0.5, 0.5, 1.5], 2).unwrap(),
        ];
        SoftQuantLayer::new(sets, 0.7, mode).unwrap()
    }

    #[test]
    fn layer_forward_widths() {
        let sum = mk_layer(SoftMode::Sum);
        assert_eq!(sum.output_width(), 2);
        let bw = mk_layer(SoftMode::Bitwise);
        assert_eq!(bw.output_width(), 6);

        let mut out = vec![0.0; 6];
        let mut sig = vec![0.0; 6];
        bw.forward_soft_row(&[0.2, -0.3], &mut out, &mut sig);
        assert_eq!(out, sig);

        let mut out2 = vec![0.0; 2];
        sum.forward_soft_row(&[0.2, -0.3], &mut out2, &mut sig);
        assert!((out2[0] - (sig[0] + sig[1] + sig[2])).abs() < 1e-15);
        assert!((out2[1] - (sig[3] + sig[4] + sig[5])).abs() < 1e-15);
    }

    #[test]
    fn harden_identity_and_sorting() {
        let layer = mk_layer(SoftMode::Bitwise);
        let hardened = layer.harden().unwrap();
        assert_eq!(hardened[0].thresholds(), &[-1.0, 0.0, 1.0]);

        let mut swapped = layer.clone();
        swapped.thresholds_flat_mut().swap(0, 1);
        let hardened = swapped.harden().unwrap();
        assert_eq!(hardened[0].thresholds(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn harden_rejects_non_finite_naming_feature() {
        let mut layer = mk_layer(SoftMode::Sum);
        layer.thresholds_flat_mut()[4] = f64::NAN;
        match layer.harden() {
            Err(Error::NonFiniteLearnedThreshold { feature }) => assert_eq!(feature, 1),
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn hardened_encode_matches_rounded_soft_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let tau = 1e-4;
        let layer = {
            let mut l = mk_layer(SoftMode::Sum);
            l.set_tau(tau).unwrap();
            l
        };
        let hardened = layer.harden().unwrap();
        let mut out = vec![0.0; 2];
        let mut sig = vec![0.0; 6];
        let mut checked = 0;
        for _ in 0..10_000 {
            let row = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let near = (0..2).any(|k| {
                layer
                    .feature_thresholds(k)
                    .iter()
                    .any(|&a| (row[k] - a).abs() <= 10.0 * tau)
            });
            if near {
                continue;
            }
            layer.forward_soft_row(&row, &mut out, &mut sig);
            for k in 0..2 {
                let hard = encode(row[k], &hardened[k]).value() as f64;
                assert_eq!(out[k].round(), hard);
            }
            checked += 1;
        }
        assert!(checked > 9000);
    }

    #[test]
    fn schedule_endpoints_are_exact() {
        for kind in [
            ScheduleKind::Linear,
            ScheduleKind::Warmup,
            ScheduleKind::Cosine,
            ScheduleKind::Cyclical,
            ScheduleKind::Exponential,
        ] {
            let s = TemperatureSchedule::new(kind, 1.0, 0.001, 37).unwrap();
            assert_eq!(s.tau_at(0).unwrap(), 1.0, "{kind:?}");
            assert_eq!(s.tau_at(37).unwrap(), 0.001, "{kind:?}");
            assert!(s.tau_at(38).is_err());
        }
    }

    #[test]
    fn exponential_geometric_midpoint() {
        let s = TemperatureSchedule::exponential(0.001, 30).unwrap();
        let mid = s.tau_at(15).unwrap();
        assert!((mid - 0.001f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn linear_midpoint() {
        let s = TemperatureSchedule::new(ScheduleKind::Linear, 1.0, 0.001, 30).unwrap();
        assert!((s.tau_at(15).unwrap() - (1.0 + 0.001) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn warmup_holds_then_descends() {
        let s = TemperatureSchedule::new(ScheduleKind::Warmup, 1.0, 0.01, 30).unwrap();
        assert_eq!(s.tau_at(1).unwrap(), 1.0);
        assert_eq!(s.tau_at(3).unwrap(), 1.0);
        assert!(s.tau_at(4).unwrap() < 1.0);
    }

    #[test]
    fn cyclical_returns_to_envelope_each_cycle() {
        let s = TemperatureSchedule::new(ScheduleKind::Cyclical, 1.0, 0.001, 40).unwrap();
        let envelope = |t: f64| 1.0 * (0.001f64 / 1.0).powf(t);
        for boundary in [10u32, 20, 30] {
            let tau = s.tau_at(boundary).unwrap();
            assert_eq!(tau, envelope(boundary as f64 / 40.0));
        }
        // Mid-cycle sits above the envelope.
        let mid = s.tau_at(5).unwrap();
        assert!(mid > envelope(5.0 / 40.0));
    }

    #[test]
    fn schedule_validation() {
        assert!(TemperatureSchedule::new(ScheduleKind::Linear, 1.0, 0.0, 10).is_err());
        assert!(TemperatureSchedule::new(ScheduleKind::Linear, 0.5, 1.0, 10).is_err());
        assert!(TemperatureSchedule::new(ScheduleKind::Linear, 1.0, 0.5, 0).is_err());
    }

    #[test]
    fn layer_backward_matches_finite_differences() {
        for mode in [SoftMode::Sum, SoftMode::Bitwise] {
            let layer = mk_layer(mode);
            let row = [0.35, -0.8];
            let width = layer.output_width();
            // Loss = weighted sum of the layer outputs.
            let weights: Vec<f64> = (0..width).map(|i| 0.3 + 0.1 * i as f64).collect();
            let loss = |l: &SoftQuantLayer| -> f64 {
                let mut out = vec![0.0; width];
                let mut sig = vec![0.0; 6];
                l.forward_soft_row(&row, &mut out, &mut sig);
                out.iter().zip(&weights).map(|(o, w)| o * w).sum()
            };
            let mut out = vec![0.0; width];
            let mut sig = vec![0.0; 6];
            layer.forward_soft_row(&row, &mut out, &mut sig);
            let mut grad = vec![0.0; 6];
            layer.backward_row(&weights, &sig, &mut grad);

            for j in 0..6 {
                let h = 1e-6;
                let mut up = layer.clone();
                up.thresholds_flat_mut()[j] += h;
                let mut dn = layer.clone();
                dn.thresholds_flat_mut()[j] -= h;
                let fd = (loss(&up) - loss(&dn)) / (2.0 * h);
                assert!(
                    (grad[j] - fd).abs() < 1e-7,
                    "{mode:?} threshold {j}: {} vs {fd}",
                    grad[j]
                );
            }
        }
    }
}
