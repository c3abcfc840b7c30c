//! Experiment pipeline: cross-validated grid search, repeated train/test
//! evaluation with confidence intervals, and the ablation protocol.
//!
//! Randomness is derived per task from the master seed, so grid points,
//! folds, and splits can run on any number of threads and still produce
//! identical numbers in identical order.

pub mod data;
pub mod report;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{mse, train, DenseNet, QuantLayer, TrainConfig};
use crate::quant::{fit_minmax, fit_quantile, DecoderKind, ThresholdSet, ThresholdSource};
use crate::seed::{derive_seed, salt};
use crate::soft::{SoftMode, SoftQuantLayer, TemperatureSchedule};
use crate::stats::{mean_ci95, Ci95};
use data::{Dataset, Standardizer};

/// Initial temperature for soft quantization training.
pub const TAU_INIT: f64 = 1.0;
/// Bit width recorded for the full-precision baseline.
pub const FP_BITS: u8 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "FP")]
    Fp,
    #[serde(rename = "Pr-MQ")]
    PrMq,
    #[serde(rename = "Pr-QQ")]
    PrQq,
    #[serde(rename = "SQ")]
    Sq,
    #[serde(rename = "Bw-MQ")]
    BwMq,
    #[serde(rename = "Bw-QQ")]
    BwQq,
    #[serde(rename = "Bw-SQ")]
    BwSq,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Fp,
        Method::PrMq,
        Method::PrQq,
        Method::Sq,
        Method::BwMq,
        Method::BwQq,
        Method::BwSq,
    ];

    /// The four ablation variants, baseline last.
    pub const ABLATION: [Method; 4] = [Method::Sq, Method::BwMq, Method::BwQq, Method::BwSq];

    pub fn label(self) -> &'static str {
        match self {
            Method::Fp => "FP",
            Method::PrMq => "Pr-MQ",
            Method::PrQq => "Pr-QQ",
            Method::Sq => "SQ",
            Method::BwMq => "Bw-MQ",
            Method::BwQq => "Bw-QQ",
            Method::BwSq => "Bw-SQ",
        }
    }

    pub fn uses_bits(self) -> bool {
        self != Method::Fp
    }

    pub fn is_soft(self) -> bool {
        matches!(self, Method::Sq | Method::BwSq)
    }

    pub fn threshold_source(self) -> Option<ThresholdSource> {
        match self {
            Method::Fp => None,
            Method::PrMq | Method::BwMq => Some(ThresholdSource::Minmax),
            Method::PrQq | Method::BwQq => Some(ThresholdSource::Quantile),
            Method::Sq | Method::BwSq => Some(ThresholdSource::Learned),
        }
    }

    /// Decoded representation at inference time.
    pub fn decoder_kind(self) -> Option<DecoderKind> {
        match self {
            Method::Fp => None,
            Method::PrMq | Method::PrQq => Some(DecoderKind::Midpoint),
            Method::Sq => Some(DecoderKind::Identity),
            Method::BwMq | Method::BwQq | Method::BwSq => Some(DecoderKind::Bitwise),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        let key = key.to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| {
                let label: String = m
                    .label()
                    .chars()
                    .filter(|c| c.is_ascii_alphanumeric())
                    .collect::<String>()
                    .to_ascii_lowercase();
                label == key
            })
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method {s:?}")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Hyperparameter domains searched per method, bit width, and dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub dropout_rates: Vec<f64>,
    pub learning_rates: Vec<f64>,
    pub hidden_layers: Vec<usize>,
    pub hidden_neurons: Vec<usize>,
    pub epochs: Vec<u32>,
    pub decrease_factors: Vec<f64>,
}

impl Default for HyperGrid {
    /// Desk-scale defaults: neurons capped at 256 and 30 epochs. Wider
    /// domains (up to 8192 neurons, 50/70 epochs) are accepted via config.
    fn default() -> Self {
        HyperGrid {
            dropout_rates: vec![0.0, 0.2, 0.4, 0.5],
            learning_rates: vec![0.001, 0.0001],
            hidden_layers: vec![5, 6, 8, 10],
            hidden_neurons: vec![32, 64, 128, 256],
            epochs: vec![30],
            decrease_factors: vec![0.001, 0.0001],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPoint {
    pub dropout: f64,
    pub learning_rate: f64,
    pub hidden_layers: usize,
    pub hidden_neurons: usize,
    pub epochs: u32,
    pub decrease_factor: f64,
}

impl HyperGrid {
    /// Cartesian product in declaration order (dropout outermost, decrease
    /// factor innermost).
    pub fn points(&self) -> Vec<HyperPoint> {
        let mut out = Vec::new();
        for &dropout in &self.dropout_rates {
            for &learning_rate in &self.learning_rates {
                for &hidden_layers in &self.hidden_layers {
                    for &hidden_neurons in &self.hidden_neurons {
                        for &epochs in &self.epochs {
                            for &decrease_factor in &self.decrease_factors {
                                out.push(HyperPoint {
                                    dropout,
                                    learning_rate,
                                    hidden_layers,
                                    hidden_neurons,
                                    epochs,
                                    decrease_factor,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        let nonempty = !self.dropout_rates.is_empty()
            && !self.learning_rates.is_empty()
            && !self.hidden_layers.is_empty()
            && !self.hidden_neurons.is_empty()
            && !self.epochs.is_empty()
            && !self.decrease_factors.is_empty();
        if !nonempty {
            return Err(Error::InvalidConfig("empty hyperparameter grid dimension".into()));
        }
        if self.dropout_rates.iter().any(|d| !(0.0..1.0).contains(d)) {
            return Err(Error::InvalidConfig("dropout rates must be in [0, 1)".into()));
        }
        if self.learning_rates.iter().any(|lr| *lr <= 0.0) {
            return Err(Error::InvalidConfig("learning rates must be positive".into()));
        }
        if self.decrease_factors.iter().any(|d| !(*d > 0.0 && *d <= 1.0)) {
            return Err(Error::InvalidConfig("decrease factors must be in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_bits")]
    pub bit_widths: Vec<u8>,
    #[serde(default)]
    pub grid: HyperGrid,
    /// Evaluate at most this many grid points (seeded subsample).
    #[serde(default = "default_subsample")]
    pub grid_subsample: Option<usize>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_eval_splits")]
    pub eval_splits: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Fp, Method::BwSq]
}
fn default_bits() -> Vec<u8> {
    vec![2, 4, 6]
}
fn default_subsample() -> Option<usize> {
    Some(24)
}
fn default_folds() -> usize {
    4
}
fn default_eval_splits() -> usize {
    10
}
fn default_test_fraction() -> f64 {
    0.1
}
fn default_batch_size() -> usize {
    128
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            methods: default_methods(),
            bit_widths: default_bits(),
            grid: HyperGrid::default(),
            grid_subsample: default_subsample(),
            folds: default_folds(),
            eval_splits: default_eval_splits(),
            test_fraction: default_test_fraction(),
            batch_size: default_batch_size(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no methods configured".into()));
        }
        if self.methods.iter().any(|m| m.uses_bits()) && self.bit_widths.is_empty() {
            return Err(Error::InvalidConfig("no bit widths configured".into()));
        }
        if self.bit_widths.iter().any(|b| !(2..=8).contains(b)) {
            return Err(Error::InvalidConfig("bit widths must be in [2, 8]".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidConfig("need at least 2 folds".into()));
        }
        if self.eval_splits < 1 {
            return Err(Error::InvalidConfig("need at least 1 evaluation split".into()));
        }
        if !(0.0 < self.test_fraction && self.test_fraction < 1.0) {
            return Err(Error::InvalidConfig("test fraction must be in (0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// Disjoint folds covering 0..n, sizes differing by at most one,
/// deterministic in the seed. Returns (train, validation) index pairs.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 || k > n {
        return Err(Error::InvalidConfig(format!("cannot split {n} rows into {k} folds")));
    }
    let order = shuffled_indices(n, seed);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < extra);
        folds.push(order[start..start + size].to_vec());
        start += size;
    }
    Ok((0..k)
        .map(|fold| {
            let val = folds[fold].clone();
            let train = folds
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != fold)
                .flat_map(|(_, f)| f.iter().copied())
                .collect();
            (train, val)
        })
        .collect())
}

fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    order
}

/// Seeded subsample of 0..total (all of it if the budget is larger),
/// returned in ascending order so declaration order survives for
/// tie-breaking.
fn subsample_indices(total: usize, budget: usize, seed: u64) -> Vec<usize> {
    if budget >= total {
        return (0..total).collect();
    }
    let mut picked = shuffled_indices(total, seed);
    picked.truncate(budget);
    picked.sort_unstable();
    picked
}

/// Builds the quantization layer for a method from standardized training
/// data. Full precision returns no layer; learned thresholds start from the
/// quantile fit.
pub fn build_quant_layer(
    method: Method,
    bits: u8,
    x_train_std: &Matrix,
) -> Result<Option<QuantLayer>> {
    let source = match method.threshold_source() {
        None => return Ok(None),
        Some(s) => s,
    };
    let columns: Vec<Vec<f64>> = (0..x_train_std.cols())
        .map(|k| (0..x_train_std.rows()).map(|i| x_train_std.get(i, k)).collect())
        .collect();
    let fit = |col: &Vec<f64>| -> Result<ThresholdSet> {
        match source {
            ThresholdSource::Minmax => fit_minmax(col, bits),
            ThresholdSource::Quantile | ThresholdSource::Learned => fit_quantile(col, bits),
        }
    };
    let sets: Vec<ThresholdSet> = columns.iter().map(fit).collect::<Result<_>>()?;
    let layer = if method.is_soft() {
        let mode = match method {
            Method::Sq => SoftMode::Sum,
            Method::BwSq => SoftMode::Bitwise,
            _ => unreachable!(),
        };
        QuantLayer::Soft(SoftQuantLayer::new(sets, TAU_INIT, mode)?)
    } else {
        let decoder = method.decoder_kind().expect("non-FP method has a decoder");
        QuantLayer::Fixed { decoder, sets }
    };
    Ok(Some(layer))
}

/// Trainable parameter count of the architecture a (method, bits, point)
/// combination produces, used for tie-breaking without building the net.
pub fn arch_param_count(method: Method, bits: u8, features: usize, hp: &HyperPoint) -> u64 {
    let m = if method.uses_bits() { (1usize << bits) - 1 } else { 0 };
    let d0 = match method.decoder_kind() {
        Some(DecoderKind::Bitwise) => features * m,
        _ => features,
    };
    let w = hp.hidden_neurons;
    let dense = if hp.hidden_layers == 0 {
        d0 + 1
    } else {
        (d0 * w + w) + (w * w + w) * (hp.hidden_layers - 1) + (w + 1)
    };
    let thresholds = if method.is_soft() { features * m } else { 0 };
    (dense + thresholds) as u64
}

/// Trains one candidate on pre-standardized data.
#[allow(clippy::too_many_arguments)]
fn train_candidate(
    method: Method,
    bits: u8,
    hp: &HyperPoint,
    x_std: &Matrix,
    y_std: &[f64],
    batch_size: usize,
    net_seed: u64,
    train_seed: u64,
) -> Result<DenseNet> {
    let quant = build_quant_layer(method, bits, x_std)?;
    let mut net = DenseNet::new(
        x_std.cols(),
        quant,
        hp.hidden_layers,
        hp.hidden_neurons,
        hp.dropout,
        net_seed,
    )?;
    let schedule = TemperatureSchedule::exponential(hp.decrease_factor, hp.epochs.max(1))?;
    let cfg = TrainConfig {
        learning_rate: hp.learning_rate,
        epochs: hp.epochs,
        dropout_rate: hp.dropout,
        batch_size,
        seed: train_seed,
        schedule,
    };
    train(&mut net, x_std, y_std, &cfg)?;
    Ok(net)
}

/// Standardize on the train rows, train, and return the MSE on the held-out
/// rows (standardized label units). `Ok(None)` marks divergence.
#[allow(clippy::too_many_arguments)]
fn holdout_mse(
    ds: &Dataset,
    train_idx: &[usize],
    held_idx: &[usize],
    method: Method,
    bits: u8,
    hp: &HyperPoint,
    batch_size: usize,
    net_seed: u64,
    train_seed: u64,
) -> Result<Option<f64>> {
    let x_train = ds.x.select_rows(train_idx);
    let y_train: Vec<f64> = train_idx.iter().map(|&i| ds.y[i]).collect();
    let standardizer = Standardizer::fit(&x_train, &y_train, &ds.feature_names)?;
    let x_train_std = standardizer.apply_features(&x_train);
    let y_train_std = standardizer.apply_labels(&y_train);

    let net = match train_candidate(
        method,
        bits,
        hp,
        &x_train_std,
        &y_train_std,
        batch_size,
        net_seed,
        train_seed,
    ) {
        Ok(net) => net,
        Err(Error::NonFiniteLoss { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };

    let x_held = standardizer.apply_features(&ds.x.select_rows(held_idx));
    let y_held: Vec<f64> =
        standardizer.apply_labels(&held_idx.iter().map(|&i| ds.y[i]).collect::<Vec<_>>());
    let preds = net.predict(&x_held)?;
    let val = mse(&preds, &y_held);
    Ok(val.is_finite().then_some(val))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvRecord {
    /// Position in the full grid's declaration order.
    pub index: usize,
    pub point: HyperPoint,
    /// Per-fold validation MSEs; empty when the point diverged.
    pub fold_mses: Vec<f64>,
    pub mean_val_mse: f64,
    pub param_count: u64,
    pub diverged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSearch {
    pub best: CvRecord,
    pub records: Vec<CvRecord>,
}

/// Lowest mean validation MSE wins; exact ties go to fewer parameters, then
/// lower learning rate, then declaration order.
pub fn select_best(records: &[CvRecord]) -> Option<&CvRecord> {
    records
        .iter()
        .filter(|r| !r.diverged)
        .min_by(|a, b| {
            a.mean_val_mse
                .partial_cmp(&b.mean_val_mse)
                .expect("finite validation mse")
                .then(a.param_count.cmp(&b.param_count))
                .then(
                    a.point
                        .learning_rate
                        .partial_cmp(&b.point.learning_rate)
                        .expect("finite learning rate"),
                )
                .then(a.index.cmp(&b.index))
        })
}

/// K-fold cross-validated grid search for one (method, bit width) pair.
pub fn grid_search(
    ds: &Dataset,
    method: Method,
    bits: u8,
    cfg: &ExperimentConfig,
) -> Result<GridSearch> {
    cfg.validate()?;
    let all_points = cfg.grid.points();
    let indices = match cfg.grid_subsample {
        Some(budget) => subsample_indices(
            all_points.len(),
            budget,
            derive_seed(cfg.seed, salt::GRID_SUBSAMPLE, 0),
        ),
        None => (0..all_points.len()).collect(),
    };
    let folds = kfold_split(ds.rows(), cfg.folds, derive_seed(cfg.seed, salt::FOLD_SPLIT, 0))?;

    let tasks: Vec<(usize, usize)> = indices
        .iter()
        .flat_map(|&pi| (0..folds.len()).map(move |fi| (pi, fi)))
        .collect();
    let outcomes: Vec<Result<Option<f64>>> = tasks
        .par_iter()
        .map(|&(pi, fi)| {
            let (train_idx, val_idx) = &folds[fi];
            holdout_mse(
                ds,
                train_idx,
                val_idx,
                method,
                bits,
                &all_points[pi],
                cfg.batch_size,
                derive_seed(cfg.seed, salt::CV_NET, fi as u64),
                derive_seed(cfg.seed, salt::CV_TRAIN, fi as u64),
            )
        })
        .collect();

    let mut records = Vec::with_capacity(indices.len());
    for (slot, &pi) in indices.iter().enumerate() {
        let mut fold_mses = Vec::with_capacity(folds.len());
        let mut diverged = false;
        for fi in 0..folds.len() {
            match &outcomes[slot * folds.len() + fi] {
                Ok(Some(v)) => fold_mses.push(*v),
                Ok(None) => diverged = true,
                Err(e) => return Err(clone_error(e)),
            }
        }
        let mean_val_mse = if diverged {
            f64::INFINITY
        } else {
            fold_mses.iter().sum::<f64>() / fold_mses.len() as f64
        };
        records.push(CvRecord {
            index: pi,
            point: all_points[pi],
            fold_mses: if diverged { Vec::new() } else { fold_mses },
            mean_val_mse,
            param_count: arch_param_count(method, bits, ds.feature_count(), &all_points[pi]),
            diverged,
        });
    }

    let best = select_best(&records).ok_or(Error::AllGridPointsDiverged)?.clone();
    Ok(GridSearch { best, records })
}

// Error is not Clone (io::Error inside); rebuild the few variants that can
// cross the parallel collection boundary.
fn clone_error(e: &Error) -> Error {
    Error::InvalidConfig(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub dataset: String,
    pub method: Method,
    /// 32 marks the full-precision baseline.
    pub bits: u8,
    pub mean_mse: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub split_mses: Vec<f64>,
    pub hyper: HyperPoint,
}

impl EvalRow {
    pub fn ci(&self) -> Ci95 {
        Ci95 { mean: self.mean_mse, low: self.ci_low, high: self.ci_high }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<EvalRow>,
}

/// Retrains the chosen hyperparameters on `eval_splits` fresh train/test
/// splits (distinct seeds) and reports mean test MSE with its 95% interval.
pub fn evaluate_splits(
    ds: &Dataset,
    method: Method,
    bits: u8,
    hp: &HyperPoint,
    cfg: &ExperimentConfig,
) -> Result<EvalRow> {
    cfg.validate()?;
    let n = ds.rows();
    let n_test = ((n as f64 * cfg.test_fraction).round() as usize).clamp(1, n - 1);
    let split_mses: Vec<f64> = (0..cfg.eval_splits)
        .into_par_iter()
        .map(|p| {
            let order = shuffled_indices(n, derive_seed(cfg.seed, salt::EVAL_SPLIT, p as u64));
            let test_idx = order[..n_test].to_vec();
            let train_idx = order[n_test..].to_vec();
            match holdout_mse(
                ds,
                &train_idx,
                &test_idx,
                method,
                bits,
                hp,
                cfg.batch_size,
                derive_seed(cfg.seed, salt::EVAL_NET, p as u64),
                derive_seed(cfg.seed, salt::EVAL_TRAIN, p as u64),
            ) {
                Ok(Some(v)) => Ok(v),
                Ok(None) => Err(Error::InvalidConfig(format!(
                    "selected hyperparameters diverged on evaluation split {p}"
                ))),
                Err(e) => Err(clone_error(&e)),
            }
        })
        .collect::<Result<_>>()?;

    let ci = mean_ci95(&split_mses);
    Ok(EvalRow {
        dataset: ds.name.clone(),
        method,
        bits: if method.uses_bits() { bits } else { FP_BITS },
        mean_mse: ci.mean,
        ci_low: ci.low,
        ci_high: ci.high,
        split_mses,
        hyper: *hp,
    })
}

/// Full protocol for every configured (method, bit width): grid search,
/// then multi-split evaluation.
pub fn run_experiment(ds: &Dataset, cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    if ds.rows() < 10 {
        return Err(Error::InvalidConfig(format!(
            "dataset {} has only {} rows; need at least 10",
            ds.name,
            ds.rows()
        )));
    }
    let mut rows = Vec::new();
    for &method in &cfg.methods {
        let bit_widths: Vec<u8> = if method.uses_bits() { cfg.bit_widths.clone() } else { vec![FP_BITS] };
        for bits in bit_widths {
            let fit_bits = if method.uses_bits() { bits } else { 2 };
            let search = grid_search(ds, method, fit_bits, cfg)?;
            let row = evaluate_splits(ds, method, fit_bits, &search.best.point, cfg)?;
            rows.push(row);
        }
    }
    Ok(ResultTable { rows })
}

/// 100 * (value / baseline - 1): percent excess MSE over the baseline.
pub fn percent_ratio(value: f64, baseline: f64) -> f64 {
    100.0 * (value / baseline - 1.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRatio {
    pub method: Method,
    /// Mean MSE over the configured bit widths.
    pub mean_mse: f64,
    /// Percent excess over the bitwise-soft baseline; 0 for the baseline.
    pub percent_vs_baseline: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    pub table: ResultTable,
    pub ratios: Vec<AblationRatio>,
}

/// Runs the ablation variants (SQ, Bw-MQ, Bw-QQ) against Bw-SQ under the
/// shared protocol and reports percent MSE ratios against the baseline.
pub fn run_ablation(ds: &Dataset, cfg: &ExperimentConfig) -> Result<AblationReport> {
    let mut ablation_cfg = cfg.clone();
    ablation_cfg.methods = Method::ABLATION.to_vec();
    let table = run_experiment(ds, &ablation_cfg)?;

    let mean_over_bits = |method: Method| -> f64 {
        let mses: Vec<f64> = table
            .rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| r.mean_mse)
            .collect();
        mses.iter().sum::<f64>() / mses.len() as f64
    };
    let baseline = mean_over_bits(Method::BwSq);
    let ratios = Method::ABLATION
        .iter()
        .map(|&m| {
            let mean = mean_over_bits(m);
            AblationRatio {
                method: m,
                mean_mse: mean,
                percent_vs_baseline: percent_ratio(mean, baseline),
            }
        })
        .collect();
    Ok(AblationReport { table, ratios })
}
