//! Self-describing JSON model checkpoint.
//!
//! Carries everything the server side of split inference needs: layer
//! shapes and parameters, the hardened per-feature thresholds in
//! standardized space, the standardization statistics, and the decode kind.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::data::Standardizer;
use crate::nn::{DenseLayer, DenseNet, QuantLayer};
use crate::quant::{DecoderKind, QuantScheme, ThresholdSet, ThresholdSource};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub name: String,
    pub method: String,
    /// None for full-precision models.
    pub scheme: Option<QuantScheme>,
    pub bit_width: Option<u8>,
    pub feature_names: Vec<String>,
    /// Hardened thresholds per feature, standardized space.
    pub thresholds: Option<Vec<Vec<f64>>>,
    pub standardizer: Standardizer,
    /// Hidden layers in order, then the scalar head last.
    pub layers: Vec<LayerSpec>,
    pub dropout_rate: f64,
}

impl Checkpoint {
    pub fn from_net(
        name: &str,
        method: &str,
        net: &DenseNet,
        source: Option<ThresholdSource>,
        standardizer: &Standardizer,
        feature_names: &[String],
    ) -> Result<Self> {
        // Soft layers are frozen into sorted hard thresholds (with weight
        // columns permuted to match) before anything is extracted.
        let net = &net.canonicalized()?;
        let hardened = net.hardened_threshold_sets()?;
        let scheme = net.quant().map(|q| QuantScheme {
            decoder: q.decoder_kind(),
            source: source.unwrap_or(ThresholdSource::Learned),
        });
        let bit_width = net.quant().map(QuantLayer::bit_width);
        let thresholds =
            hardened.map(|sets| sets.iter().map(|s| s.thresholds().to_vec()).collect());
        let mut layers: Vec<LayerSpec> = net
            .hidden_layers()
            .iter()
            .map(|l| LayerSpec {
                in_dim: l.in_dim(),
                out_dim: l.out_dim(),
                weights: l.weights().to_vec(),
                bias: l.bias().to_vec(),
            })
            .collect();
        let head = net.output_layer();
        layers.push(LayerSpec {
            in_dim: head.in_dim(),
            out_dim: head.out_dim(),
            weights: head.weights().to_vec(),
            bias: head.bias().to_vec(),
        });
        Ok(Checkpoint {
            version: CHECKPOINT_VERSION,
            name: name.to_owned(),
            method: method.to_owned(),
            scheme,
            bit_width,
            feature_names: feature_names.to_vec(),
            thresholds,
            standardizer: standardizer.clone(),
            layers,
            dropout_rate: net.dropout_rate(),
        })
    }

    /// Rebuilds the inference network. Trained soft layers were hardened at
    /// save time, so the result always carries fixed thresholds.
    pub fn to_net(&self) -> Result<DenseNet> {
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("checkpoint has no layers".into()));
        }
        let quant = match (&self.scheme, &self.thresholds, self.bit_width) {
            (None, None, None) => None,
            (Some(scheme), Some(threshold_lists), Some(bits)) => {
                let sets = threshold_lists
                    .iter()
                    .map(|t| ThresholdSet::new(t.clone(), bits))
                    .collect::<Result<Vec<_>>>()?;
                Some(QuantLayer::Fixed { decoder: scheme.decoder, sets })
            }
            _ => {
                return Err(Error::InvalidConfig(
                    "checkpoint quantization fields are inconsistent".into(),
                ))
            }
        };
        let mut dense: Vec<DenseLayer> = self
            .layers
            .iter()
            .map(|l| DenseLayer::from_parts(l.weights.clone(), l.bias.clone(), l.in_dim, l.out_dim))
            .collect::<Result<Vec<_>>>()?;
        let output = dense.pop().expect("checked non-empty");
        DenseNet::from_parts(self.feature_names.len(), quant, dense, output, self.dropout_rate)
    }

    pub fn thresholds_as_sets(&self) -> Result<Option<Vec<ThresholdSet>>> {
        match (&self.thresholds, self.bit_width) {
            (Some(lists), Some(bits)) => Ok(Some(
                lists
                    .iter()
                    .map(|t| ThresholdSet::new(t.clone(), bits))
                    .collect::<Result<Vec<_>>>()?,
            )),
            _ => Ok(None),
        }
    }

    pub fn decoder_kind(&self) -> Option<DecoderKind> {
        self.scheme.map(|s| s.decoder)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&json)?)
    }
}
