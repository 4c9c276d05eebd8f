use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::{validate_nu, Multipliers, NuParams};

/// Which member of the ablation chain to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    /// End-to-end: the sphere is the network's final layer.
    Imdad,
    /// Max-margin objective with heuristic center, radius and margin.
    Mdad,
    /// Deep SVDD plus a hinge pushing labelled anomalies out of the sphere.
    Dad,
    /// One-class Deep SVDD on normal rows only.
    DeepSvdd,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::DeepSvdd,
        Variant::Dad,
        Variant::Mdad,
        Variant::Imdad,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Imdad => "IMDAD",
            Variant::Mdad => "MDAD",
            Variant::Dad => "DAD",
            Variant::DeepSvdd => "DEEPSVDD",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace(['-', '_', ' '], "").as_str() {
            "IMDAD" => Ok(Variant::Imdad),
            "MDAD" => Ok(Variant::Mdad),
            "DAD" => Ok(Variant::Dad),
            "DEEPSVDD" => Ok(Variant::DeepSvdd),
            _ => Err(Error::Config(format!("unknown variant '{s}'"))),
        }
    }
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub nu: NuParams,
    pub lr: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Epoch period of the multiplier ascent step.
    pub multiplier_period: usize,
    /// Epochs without a new strict validation minimum before stopping.
    pub early_stop_patience: usize,
    /// Learning-rate milestones as fractions of `max_epochs`.
    pub lr_milestones: Vec<f64>,
    /// Multiplicative learning-rate decay at each milestone.
    pub lr_decay: f64,
    /// Hidden widths of the feature map; the last entry is the representation
    /// dimension `p`.
    pub widths: Vec<usize>,
    pub initial_multipliers: Multipliers,
    pub seed: u64,
    pub variant: Variant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            nu: NuParams::default(),
            lr: 1e-4,
            max_epochs: 200,
            batch_size: 50,
            multiplier_period: 5,
            early_stop_patience: 5,
            lr_milestones: vec![0.5, 0.75],
            lr_decay: 0.1,
            widths: vec![64, 64, 2],
            initial_multipliers: Multipliers::default(),
            seed: 0,
            variant: Variant::Imdad,
        }
    }
}

impl TrainConfig {
    /// Default widths for a representation that is not meant to be plotted.
    pub const WIDE_WIDTHS: [usize; 3] = [64, 64, 32];

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("max_epochs", self.max_epochs),
            ("batch_size", self.batch_size),
            ("multiplier_period", self.multiplier_period),
            ("early_stop_patience", self.early_stop_patience),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(Error::Config(format!(
                "lr_decay must be in (0, 1], got {}",
                self.lr_decay
            )));
        }
        let mut prev = 0.0;
        for &m in &self.lr_milestones {
            if !(m > prev && m < 1.0) {
                return Err(Error::Config(format!(
                    "lr milestones must be strictly increasing in (0, 1): {:?}",
                    self.lr_milestones
                )));
            }
            prev = m;
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Config(format!("invalid widths {:?}", self.widths)));
        }
        match self.variant {
            Variant::Imdad | Variant::Mdad => validate_nu(&self.nu)?,
            Variant::Dad | Variant::DeepSvdd => {
                if !(self.nu.nu > 0.0 && self.nu.nu <= 1.0) {
                    return Err(Error::Config(format!(
                        "{} needs nu in (0, 1], got {}",
                        self.variant, self.nu.nu
                    )));
                }
                if self.variant == Variant::Dad && !(self.nu.nu2 > 0.0) {
                    return Err(Error::Config(format!(
                        "DAD needs nu2 > 0, got {}",
                        self.nu.nu2
                    )));
                }
                if self.nu.lambda < 0.0 {
                    return Err(Error::Config("lambda must be >= 0".into()));
                }
            }
        }
        Ok(())
    }

    /// Epochs (1-based) after which the learning rate decays.
    pub fn milestone_epochs(&self) -> Vec<usize> {
        self.lr_milestones
            .iter()
            .map(|f| (f * self.max_epochs as f64).round() as usize)
            .collect()
    }

    /// Learning rate in effect during `epoch` (1-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let k = self
            .milestone_epochs()
            .iter()
            .filter(|&&m| m < epoch)
            .count() as i32;
        self.lr / (1.0 / self.lr_decay).powi(k)
    }
}
