use std::path::Path;

use anyhow::{bail, Context, Result};
use marginsphere::data::{FeatureStats, LabeledDataset};
use marginsphere::sphere::{view_hypersphere, ExplicitSphere, HypersphereView};
use marginsphere::trainer::{Detector, TrainConfig, Variant};
use serde::{Deserialize, Serialize};

/// Everything needed to score new rows with a trained detector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile {
    pub variant: Variant,
    pub input_dim: usize,
    pub detector: Detector,
    /// Sphere read from the final layer; present for end-to-end detectors.
    pub hypersphere: Option<HypersphereView>,
    /// Detection sphere actually used for scoring.
    pub sphere: ExplicitSphere,
    /// Normalization fitted on the training split, applied to raw rows.
    pub feature_stats: FeatureStats,
    pub config: TrainConfig,
}

impl ModelFile {
    pub fn new(detector: Detector, feature_stats: FeatureStats, config: TrainConfig) -> Self {
        let hypersphere = match &detector {
            Detector::EndToEnd { net, .. } => Some(view_hypersphere(net)),
            Detector::Explicit { .. } => None,
        };
        Self {
            variant: detector.variant(),
            input_dim: detector.net().input_dim(),
            sphere: detector.sphere(),
            hypersphere,
            detector,
            feature_stats,
            config,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading model {}", path.display()))?;
        let model: ModelFile = serde_json::from_str(&text)
            .with_context(|| format!("parsing model {}", path.display()))?;
        if model.feature_stats.mean.len() != model.input_dim {
            bail!(
                "model {} is inconsistent: {} feature means for input dimension {}",
                path.display(),
                model.feature_stats.mean.len(),
                model.input_dim
            );
        }
        Ok(model)
    }

    /// Normalizes raw rows with the model's statistics, checking the width.
    pub fn prepare(&self, raw: &LabeledDataset) -> Result<LabeledDataset> {
        if raw.is_empty() {
            bail!("dataset '{}' has no rows to evaluate", raw.name);
        }
        if raw.dim() != self.input_dim {
            bail!(
                "dimension mismatch: model expects {} features, dataset '{}' has {}",
                self.input_dim,
                raw.name,
                raw.dim()
            );
        }
        Ok(raw.normalized(&self.feature_stats)?)
    }
}
