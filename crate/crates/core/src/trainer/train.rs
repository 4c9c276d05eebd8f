use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{TrainConfig, Variant};
use super::report::{EpochRecord, StopReason, TrainReport};
use crate::data::{Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::eval::{auc, quantile};
use crate::numcore::{AdamState, Matrix, Network};
use crate::sphere::{
    deepsvdd_scores, explicit_sphere_scores, imdad_scores, squared_distances, view_hypersphere,
    ExplicitSphere, LossSpec, Multipliers, NuParams,
};

/// Floor for heuristic radii so the explicit objective stays well defined.
const MIN_RADIUS: f64 = 1e-8;

/// One projected ascent step on the Lagrange multipliers.
pub fn update_multipliers(net: &Network, m: &Multipliers, step: f64) -> Multipliers {
    Multipliers {
        alpha: m.alpha + step * (net.w_norm_sq() - 4.0),
        beta: (m.beta + step * (net.final_b() - 1.0)).max(0.0),
        gamma: (m.gamma - step * net.rho_bar()).max(0.0),
    }
}

/// A trained detector of any variant, ready to score new rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Detector {
    /// The sphere is read out of the network's final layer.
    EndToEnd {
        net: Network,
        multipliers: Multipliers,
    },
    /// The sphere is held next to the network.
    Explicit {
        variant: Variant,
        net: Network,
        sphere: ExplicitSphere,
    },
}

impl Detector {
    pub fn net(&self) -> &Network {
        match self {
            Detector::EndToEnd { net, .. } | Detector::Explicit { net, .. } => net,
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            Detector::EndToEnd { .. } => Variant::Imdad,
            Detector::Explicit { variant, .. } => *variant,
        }
    }

    /// Center, inner radius² `R̄` and margin `ρ̄` of the detection sphere.
    pub fn sphere(&self) -> ExplicitSphere {
        match self {
            Detector::EndToEnd { net, .. } => {
                let v = view_hypersphere(net);
                ExplicitSphere {
                    center: v.center,
                    r_bar: v.r_bar,
                    rho_bar: v.rho_bar,
                }
            }
            Detector::Explicit { sphere, .. } => sphere.clone(),
        }
    }

    /// Anomaly scores; positive means abnormal.
    pub fn scores(&self, x: &Matrix) -> Result<Vec<f64>> {
        match self {
            Detector::EndToEnd { net, .. } => imdad_scores(net, x),
            Detector::Explicit {
                net,
                sphere,
                variant,
            } => match variant {
                Variant::Mdad => {
                    explicit_sphere_scores(net, x, &sphere.center, sphere.r_bar, sphere.rho_bar)
                }
                _ => deepsvdd_scores(net, x, &sphere.center, sphere.r_bar),
            },
        }
    }

    pub fn squared_distances(&self, x: &Matrix) -> Result<Vec<f64>> {
        squared_distances(self.net(), x, &self.sphere().center)
    }
}

/// Variant-specific pieces of the shared training loop.
struct Head {
    variant: Variant,
    nu: NuParams,
    multipliers: Multipliers,
    sphere: ExplicitSphere,
}

impl Head {
    fn spec(&self) -> LossSpec {
        match self.variant {
            Variant::Imdad => LossSpec::Imdad {
                nu: self.nu,
                multipliers: self.multipliers,
            },
            Variant::Mdad => LossSpec::MarginSphere {
                sphere: self.sphere.clone(),
                nu: self.nu,
            },
            Variant::Dad | Variant::DeepSvdd => LossSpec::DeepSvdd {
                center: self.sphere.center.clone(),
                r_sq: self.sphere.r_bar,
                nu: self.nu.nu,
                lambda: self.nu.lambda,
                anomaly_nu2: (self.variant == Variant::Dad).then_some(self.nu.nu2),
            },
        }
    }

    /// Re-estimates the heuristic radii from the training distances.
    fn refit_radii(&mut self, net: &Network, train: &LabeledDataset) -> Result<()> {
        if self.variant == Variant::Imdad {
            return Ok(());
        }
        let d = squared_distances(net, train.x(), &self.sphere.center)?;
        let (normal, abnormal): (Vec<(f64, Label)>, Vec<(f64, Label)>) = d
            .into_iter()
            .zip(train.labels().iter().copied())
            .partition(|(_, l)| *l == Label::Normal);
        let normal: Vec<f64> = normal.into_iter().map(|(d, _)| d).collect();
        let abnormal: Vec<f64> = abnormal.into_iter().map(|(d, _)| d).collect();
        match self.variant {
            Variant::Mdad => {
                let r_bar = quantile(&normal, 1.0 - self.nu.nu1)?.max(MIN_RADIUS);
                let rho = if abnormal.is_empty() {
                    MIN_RADIUS
                } else {
                    (quantile(&abnormal, self.nu.nu2)? - r_bar).max(MIN_RADIUS)
                };
                self.sphere.r_bar = r_bar;
                self.sphere.rho_bar = rho;
            }
            _ => {
                self.sphere.r_bar = quantile(&normal, 1.0 - self.nu.nu)?;
            }
        }
        Ok(())
    }

    fn scores(&self, net: &Network, x: &Matrix) -> Result<Vec<f64>> {
        match self.variant {
            Variant::Imdad => imdad_scores(net, x),
            Variant::Mdad => explicit_sphere_scores(
                net,
                x,
                &self.sphere.center,
                self.sphere.r_bar,
                self.sphere.rho_bar,
            ),
            _ => deepsvdd_scores(net, x, &self.sphere.center, self.sphere.r_bar),
        }
    }

    fn into_detector(self, net: Network) -> Detector {
        match self.variant {
            Variant::Imdad => Detector::EndToEnd {
                net,
                multipliers: self.multipliers,
            },
            v => Detector::Explicit {
                variant: v,
                net,
                sphere: self.sphere,
            },
        }
    }
}

/// Mean `φ` over the normal rows.
fn normal_center(net: &Network, data: &LabeledDataset) -> Result<Vec<f64>> {
    let normals = data.filter(Label::Normal);
    if normals.is_empty() {
        return Err(Error::InvalidBatch("no normal rows to fit a center".into()));
    }
    let out = net.forward_batch(normals.x())?;
    let mut c = vec![0.0; net.rep_dim()];
    for phi in out.phi.iter_rows() {
        for (ci, p) in c.iter_mut().zip(phi) {
            *ci += p;
        }
    }
    let n = normals.len() as f64;
    c.iter_mut().for_each(|v| *v /= n);
    Ok(c)
}

/// Splits the rows into batches of at most about `batch_size`, spreading both
/// classes evenly over the batches.
pub fn stratified_batches<R: Rng + ?Sized>(
    labels: &[Label],
    batch_size: usize,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    let n = labels.len();
    if n == 0 || batch_size == 0 {
        return Vec::new();
    }
    let mut normal: Vec<usize> = (0..n).filter(|&i| labels[i] == Label::Normal).collect();
    let mut abnormal: Vec<usize> = (0..n).filter(|&i| labels[i] == Label::Abnormal).collect();
    normal.shuffle(rng);
    abnormal.shuffle(rng);
    let n_batches = n.div_ceil(batch_size);
    let slice = |v: &[usize], j: usize| -> Vec<usize> {
        v[j * v.len() / n_batches..(j + 1) * v.len() / n_batches].to_vec()
    };
    (0..n_batches)
        .map(|j| {
            let mut b = slice(&normal, j);
            b.extend(slice(&abnormal, j));
            b
        })
        .collect()
}

fn diverged(epoch: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(what) => Error::Diverged {
            epoch,
            reason: format!("non-finite {what}"),
        },
        other => other,
    }
}

fn optional_auc(scores: &[f64], labels: &[Label]) -> Option<f64> {
    auc(scores, labels).ok()
}

fn check_inputs(train: &LabeledDataset, val: &LabeledDataset, cfg: &TrainConfig) -> Result<()> {
    cfg.validate()?;
    if train.count(Label::Normal) == 0 {
        return Err(Error::InvalidBatch(
            "training set has no normal rows".into(),
        ));
    }
    if val.count(Label::Normal) == 0 {
        return Err(Error::InvalidBatch(
            "validation set has no normal rows".into(),
        ));
    }
    if train.dim() != val.dim() {
        return Err(Error::Shape(format!(
            "train has {} features, validation {}",
            train.dim(),
            val.dim()
        )));
    }
    Ok(())
}

/// Trains any variant from a fresh seeded initialization.
///
/// Deep SVDD only ever sees normal rows, of both the training and the
/// validation set; its validation AUC is still measured on the full set.
pub fn train_variant(
    train: &LabeledDataset,
    val: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(Detector, TrainReport)> {
    check_inputs(train, val, cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let net = Network::init(train.dim(), &cfg.widths, &mut rng)?;
    train_from(net, train, val, cfg, &mut rng)
}

/// Trains `cfg.variant` starting from the given network.
pub fn train_from(
    mut net: Network,
    train: &LabeledDataset,
    val: &LabeledDataset,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Detector, TrainReport)> {
    check_inputs(train, val, cfg)?;
    if net.input_dim() != train.dim() {
        return Err(Error::Shape(format!(
            "network expects {} features, data has {}",
            net.input_dim(),
            train.dim()
        )));
    }
    let one_class = cfg.variant == Variant::DeepSvdd;
    let fit_set = if one_class {
        train.filter(Label::Normal)
    } else {
        train.clone()
    };
    let monitor_set = if one_class {
        val.filter(Label::Normal)
    } else {
        val.clone()
    };

    let mut head = Head {
        variant: cfg.variant,
        nu: cfg.nu,
        multipliers: cfg.initial_multipliers,
        sphere: ExplicitSphere {
            center: vec![0.0; net.rep_dim()],
            r_bar: 0.0,
            rho_bar: 0.0,
        },
    };
    if cfg.variant != Variant::Imdad {
        head.sphere.center = normal_center(&net, &fit_set)?;
        head.refit_radii(&net, &fit_set)?;
    }

    let initial_val_loss = head
        .spec()
        .value(&net, monitor_set.x(), monitor_set.labels())
        .map_err(|e| diverged(0, e))?;
    let mut best = initial_val_loss;
    let mut since_best = 0;
    let mut adam = AdamState::new(&net);
    let mut records = Vec::with_capacity(cfg.max_epochs);
    let mut stop = (cfg.max_epochs, StopReason::MaxEpochs);

    for epoch in 1..=cfg.max_epochs {
        let lr = cfg.lr_at(epoch);
        let spec = head.spec();
        for batch in stratified_batches(fit_set.labels(), cfg.batch_size, rng) {
            let labels: Vec<Label> = batch.iter().map(|&i| fit_set.labels()[i]).collect();
            if !labels.contains(&Label::Normal) {
                continue;
            }
            let x = fit_set.x().select_rows(&batch);
            let (_, grads) = net
                .loss_and_gradients(&x, &labels, &spec)
                .map_err(|e| diverged(epoch, e))?;
            if !grads.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    reason: "non-finite gradient".into(),
                });
            }
            adam.step(&mut net, &grads, lr)?;
        }

        if cfg.variant == Variant::Imdad && epoch % cfg.multiplier_period == 0 {
            head.multipliers = update_multipliers(&net, &head.multipliers, lr);
        }
        head.refit_radii(&net, &fit_set)
            .map_err(|e| diverged(epoch, e))?;

        let spec = head.spec();
        let train_loss = spec
            .value(&net, fit_set.x(), fit_set.labels())
            .map_err(|e| diverged(epoch, e))?;
        let val_loss = spec
            .value(&net, monitor_set.x(), monitor_set.labels())
            .map_err(|e| diverged(epoch, e))?;
        let train_scores = head.scores(&net, train.x())?;
        let val_scores = head.scores(&net, val.x())?;
        if train_scores
            .iter()
            .chain(&val_scores)
            .any(|s| !s.is_finite())
        {
            return Err(Error::Diverged {
                epoch,
                reason: "non-finite score".into(),
            });
        }

        let (r_bar, rho_bar) = match cfg.variant {
            Variant::Imdad => (1.0 - net.final_b(), net.rho_bar()),
            _ => (head.sphere.r_bar, head.sphere.rho_bar),
        };
        records.push(EpochRecord {
            epoch,
            lr,
            train_loss,
            val_loss,
            alpha: head.multipliers.alpha,
            beta: head.multipliers.beta,
            gamma: head.multipliers.gamma,
            w_norm_sq: net.w_norm_sq(),
            b: net.final_b(),
            rho_bar,
            r_bar,
            train_auc: optional_auc(&train_scores, train.labels()),
            val_auc: optional_auc(&val_scores, val.labels()),
        });

        if val_loss < best {
            best = val_loss;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                stop = (epoch, StopReason::EarlyStop);
                break;
            }
        }
    }

    let report = TrainReport {
        variant: cfg.variant,
        initial_val_loss,
        records,
        stop_epoch: stop.0,
        stop_reason: stop.1,
    };
    Ok((head.into_detector(net), report))
}

/// End-to-end training; returns the network, final multipliers and history.
pub fn train_imdad(
    train: &LabeledDataset,
    val: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(Network, Multipliers, TrainReport)> {
    let cfg = TrainConfig {
        variant: Variant::Imdad,
        ..cfg.clone()
    };
    let (det, report) = train_variant(train, val, &cfg)?;
    match det {
        Detector::EndToEnd { net, multipliers } => Ok((net, multipliers, report)),
        Detector::Explicit { .. } => {
            unreachable!("end-to-end variant yields an end-to-end detector")
        }
    }
}

/// One-class Deep SVDD; returns the network, frozen center, squared radius and
/// history. Abnormal rows in `train` are ignored.
pub fn train_deepsvdd(
    train: &LabeledDataset,
    val: &LabeledDataset,
    cfg: &TrainConfig,
) -> Result<(Network, Vec<f64>, f64, TrainReport)> {
    let cfg = TrainConfig {
        variant: Variant::DeepSvdd,
        ..cfg.clone()
    };
    let (det, report) = train_variant(train, val, &cfg)?;
    match det {
        Detector::Explicit { net, sphere, .. } => Ok((net, sphere.center, sphere.r_bar, report)),
        Detector::EndToEnd { .. } => unreachable!("Deep SVDD yields an explicit detector"),
    }
}

/// Trains one member of the ablation chain.
pub fn train_ablation(
    train: &LabeledDataset,
    val: &LabeledDataset,
    cfg: &TrainConfig,
    variant: Variant,
) -> Result<(Detector, TrainReport)> {
    let cfg = TrainConfig {
        variant,
        ..cfg.clone()
    };
    train_variant(train, val, &cfg)
}
