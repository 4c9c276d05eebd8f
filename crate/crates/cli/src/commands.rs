use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::{info, warn};
use marginsphere::data::{
    CsvSpec, DatasetManifest, Label, LabelColumn, LabeledDataset, SplitDataset,
};
use marginsphere::eval::{
    accuracy, auc, distance_histogram, export_boundary, mean_std, nu_audit_distances, NuAuditReport,
};
use marginsphere::sphere::{decision_radius, NuParams};
use marginsphere::trainer::{train_variant, Detector, TrainConfig, TrainReport, Variant};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{DatasetSpec, Format, RunConfig};
use crate::model::ModelFile;

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Writes rows as `<stem>.csv` or `<stem>.json` depending on `format`.
fn write_table<T: Serialize>(
    dir: &Path,
    stem: &str,
    format: Format,
    header: &[&str],
    rows: &[T],
    cells: impl Fn(&T) -> Vec<String>,
) -> Result<PathBuf> {
    match format {
        Format::Json => {
            let path = dir.join(format!("{stem}.json"));
            write_json(&path, &rows)?;
            Ok(path)
        }
        Format::Csv => {
            let path = dir.join(format!("{stem}.csv"));
            let mut out = header.join(",");
            out.push('\n');
            for r in rows {
                out.push_str(&cells(r).join(","));
                out.push('\n');
            }
            write_text(&path, &out)?;
            Ok(path)
        }
    }
}

fn label_name(l: Label) -> &'static str {
    match l {
        Label::Normal => "normal",
        Label::Abnormal => "abnormal",
    }
}

fn load_split(cfg: &RunConfig) -> Result<(LabeledDataset, SplitDataset)> {
    let ds = cfg.load_dataset()?;
    let split = cfg.make_split(&ds)?;
    info!(
        "dataset '{}': {} rows, {} features; train {} / val {} / test {}",
        ds.name,
        ds.len(),
        ds.dim(),
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    Ok((ds, split))
}

fn test_auc(det: &Detector, ds: &LabeledDataset) -> Result<f64> {
    Ok(auc(&det.scores(ds.x())?, ds.labels())?)
}

#[derive(Debug, Serialize)]
struct SphereSummary {
    center: Vec<f64>,
    r_bar: f64,
    rho_bar: f64,
    /// Decision radius term; only defined for the end-to-end detector.
    t: Option<f64>,
}

#[derive(Debug, Serialize)]
struct FinalLayer {
    w_norm_sq: f64,
    b: f64,
    rho_bar: f64,
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    variant: Variant,
    seed: u64,
    dataset: String,
    input_dim: usize,
    n_train: usize,
    n_validation: usize,
    n_test: usize,
    stop_epoch: usize,
    stop_reason: marginsphere::trainer::StopReason,
    initial_val_loss: f64,
    final_val_loss: f64,
    train_auc: f64,
    val_auc: f64,
    test_auc: f64,
    final_layer: FinalLayer,
    sphere: SphereSummary,
}

fn summarize(
    cfg: &RunConfig,
    ds: &LabeledDataset,
    split: &SplitDataset,
    det: &Detector,
    report: &TrainReport,
) -> Result<TrainSummary> {
    let net = det.net();
    let sphere = det.sphere();
    let t = match det {
        Detector::EndToEnd { .. } => Some(decision_radius(sphere.r_bar, sphere.rho_bar)),
        Detector::Explicit { .. } => None,
    };
    Ok(TrainSummary {
        variant: det.variant(),
        seed: cfg.train.seed,
        dataset: ds.name.clone(),
        input_dim: ds.dim(),
        n_train: split.train.len(),
        n_validation: split.validation.len(),
        n_test: split.test.len(),
        stop_epoch: report.stop_epoch,
        stop_reason: report.stop_reason,
        initial_val_loss: report.initial_val_loss,
        final_val_loss: report
            .last()
            .map_or(report.initial_val_loss, |r| r.val_loss),
        train_auc: test_auc(det, &split.train)?,
        val_auc: test_auc(det, &split.validation)?,
        test_auc: test_auc(det, &split.test)?,
        final_layer: FinalLayer {
            w_norm_sq: net.w_norm_sq(),
            b: net.final_b(),
            rho_bar: net.rho_bar(),
        },
        sphere: SphereSummary {
            center: sphere.center,
            r_bar: sphere.r_bar,
            rho_bar: sphere.rho_bar,
            t,
        },
    })
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let (ds, split) = load_split(cfg)?;
    info!(
        "training {} for up to {} epochs",
        cfg.variant(),
        cfg.train.max_epochs
    );
    let (det, report) = train_variant(&split.train, &split.validation, &cfg.train)?;
    let summary = summarize(cfg, &ds, &split, &det, &report)?;
    info!(
        "stopped at epoch {} ({:?}); test AUC {:.4}",
        summary.stop_epoch, summary.stop_reason, summary.test_auc
    );

    let dir = &cfg.out_dir;
    ensure_dir(dir)?;
    let model = ModelFile::new(det, split.stats.clone(), cfg.train.clone());
    write_json(&dir.join("model.json"), &model)?;
    match cfg.format {
        Format::Csv => {
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            fs::write(dir.join("epochs.csv"), buf)?;
        }
        Format::Json => write_json(&dir.join("epochs.json"), &report)?,
    }
    write_json(&dir.join("summary.json"), &summary)?;
    let manifest = DatasetManifest::new(&ds, std::slice::from_ref(&split));
    write_text(&dir.join("dataset.json"), &(manifest.to_json()? + "\n"))?;
    println!(
        "{}: test AUC {:.4}, stop epoch {}, run written to {}",
        summary.variant,
        summary.test_auc,
        summary.stop_epoch,
        dir.display()
    );
    Ok(())
}

/// Which rows `eval` scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum EvalSet {
    Train,
    Validation,
    Test,
    All,
}

#[derive(Debug, Serialize)]
struct Metrics {
    variant: Variant,
    set: String,
    n: usize,
    n_normal: usize,
    n_abnormal: usize,
    auc: Option<f64>,
    /// Fraction of rows classified correctly with the score threshold at zero.
    accuracy: f64,
}

#[derive(Debug, Serialize)]
struct ScoreRow {
    row: usize,
    label: &'static str,
    score: f64,
}

/// Raw (unnormalized) rows to evaluate on.
fn eval_rows(
    cfg: &RunConfig,
    set: EvalSet,
    data: Option<&Path>,
) -> Result<(LabeledDataset, String)> {
    if let Some(path) = data {
        let spec = match &cfg.dataset {
            DatasetSpec::Csv { spec, .. } => spec.clone(),
            _ => CsvSpec {
                label_column: LabelColumn::Name("label".into()),
                normal_label: "normal".into(),
                has_header: true,
            },
        };
        let ds = marginsphere::data::load_csv(path, &spec)
            .with_context(|| format!("loading {}", path.display()))?;
        return Ok((ds, path.display().to_string()));
    }
    let ds = cfg.load_dataset()?;
    let split = cfg.make_split(&ds)?;
    let idx = match set {
        EvalSet::Train => split.indices.train,
        EvalSet::Validation => split.indices.validation,
        EvalSet::Test => split.indices.test,
        EvalSet::All => (0..ds.len()).collect(),
    };
    let name = format!("{set:?}").to_lowercase();
    Ok((ds.subset(&idx), name))
}

pub fn eval(cfg: &RunConfig, model_path: &Path, set: EvalSet, data: Option<&Path>) -> Result<()> {
    let model = ModelFile::load(model_path)?;
    let (raw, set_name) = eval_rows(cfg, set, data)?;
    let ds = model.prepare(&raw)?;
    let scores = model.detector.scores(ds.x())?;
    let auc = if ds.has_both_classes() {
        Some(auc(&scores, ds.labels())?)
    } else {
        warn!("set '{set_name}' has a single class; AUC is undefined");
        None
    };
    let metrics = Metrics {
        variant: model.variant,
        set: set_name,
        n: ds.len(),
        n_normal: ds.count(Label::Normal),
        n_abnormal: ds.count(Label::Abnormal),
        auc,
        accuracy: accuracy(&scores, ds.labels(), 0.0),
    };
    let dir = &cfg.out_dir;
    ensure_dir(dir)?;
    write_json(&dir.join("metrics.json"), &metrics)?;
    let rows: Vec<ScoreRow> = scores
        .iter()
        .zip(ds.labels())
        .enumerate()
        .map(|(row, (s, l))| ScoreRow {
            row,
            label: label_name(*l),
            score: *s,
        })
        .collect();
    let path = write_table(
        dir,
        "scores",
        cfg.format,
        &["row", "label", "score"],
        &rows,
        |r| vec![r.row.to_string(), r.label.to_string(), r.score.to_string()],
    )?;
    match metrics.auc {
        Some(a) => println!(
            "AUC {a:.4} on {} rows; scores in {}",
            metrics.n,
            path.display()
        ),
        None => println!("{} rows scored; scores in {}", metrics.n, path.display()),
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    nu: f64,
    nu1: f64,
    nu2: f64,
    val_auc: f64,
    test_auc: f64,
    stop_epoch: usize,
    best: bool,
}

/// Valid combinations of the configured ν grid; invalid ones are logged and skipped.
fn nu_grid(cfg: &RunConfig) -> Result<Vec<NuParams>> {
    let lambda = cfg.train.nu.lambda;
    let mut out = Vec::new();
    for &nu in &cfg.sweep.nu {
        for &nu1 in &cfg.sweep.nu1 {
            for &nu2 in &cfg.sweep.nu2 {
                match NuParams::new(nu, nu1, nu2, lambda) {
                    Ok(p) => out.push(p),
                    Err(e) => warn!("skipping nu = {nu}, nu1 = {nu1}, nu2 = {nu2}: {e}"),
                }
            }
        }
    }
    if out.is_empty() {
        bail!("no valid (nu, nu1, nu2) combination in the sweep grid");
    }
    Ok(out)
}

fn with_nu(cfg: &TrainConfig, nu: NuParams) -> TrainConfig {
    TrainConfig { nu, ..cfg.clone() }
}

pub fn sweep(cfg: &RunConfig) -> Result<()> {
    let grid = nu_grid(cfg)?;
    let (_, split) = load_split(cfg)?;
    info!("sweeping {} combinations", grid.len());
    let mut rows = grid
        .par_iter()
        .map(|p| {
            let (det, report) =
                train_variant(&split.train, &split.validation, &with_nu(&cfg.train, *p))?;
            Ok(SweepRow {
                nu: p.nu,
                nu1: p.nu1,
                nu2: p.nu2,
                val_auc: test_auc(&det, &split.validation)?,
                test_auc: test_auc(&det, &split.test)?,
                stop_epoch: report.stop_epoch,
                best: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    // selection uses validation AUC; the first row wins ties
    let best = rows.iter().enumerate().fold(
        0,
        |b, (i, r)| if r.val_auc > rows[b].val_auc { i } else { b },
    );
    rows[best].best = true;

    ensure_dir(&cfg.out_dir)?;
    let header = [
        "nu",
        "nu1",
        "nu2",
        "val_auc",
        "test_auc",
        "stop_epoch",
        "best",
    ];
    let path = write_table(&cfg.out_dir, "sweep", cfg.format, &header, &rows, |r| {
        vec![
            r.nu.to_string(),
            r.nu1.to_string(),
            r.nu2.to_string(),
            r.val_auc.to_string(),
            r.test_auc.to_string(),
            r.stop_epoch.to_string(),
            r.best.to_string(),
        ]
    })?;
    let b = &rows[best];
    println!(
        "best nu = {}, nu1 = {}, nu2 = {}: val AUC {:.4}, test AUC {:.4} ({} rows in {})",
        b.nu,
        b.nu1,
        b.nu2,
        b.val_auc,
        b.test_auc,
        rows.len(),
        path.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct AblationRow {
    variant: Variant,
    seed: u64,
    test_auc: f64,
}

#[derive(Debug, Serialize)]
struct AblationSummary {
    variant: Variant,
    mean: f64,
    std: f64,
    rank: usize,
}

pub fn ablate(cfg: &RunConfig) -> Result<()> {
    if cfg.ablate_seeds == 0 {
        bail!("ablate.seeds must be at least 1");
    }
    let base = cfg.train.seed;
    let seeds: Vec<u64> = (0..cfg.ablate_seeds as u64).map(|s| base + s).collect();
    let jobs: Vec<(u64, Variant)> = seeds
        .iter()
        .flat_map(|&s| Variant::ALL.iter().map(move |&v| (s, v)))
        .collect();
    info!(
        "ablation over {} seeds and {} variants",
        seeds.len(),
        Variant::ALL.len()
    );
    let rows = jobs
        .par_iter()
        .map(|&(seed, variant)| {
            let mut run = cfg.clone().with_seed(seed);
            run.train.variant = variant;
            let ds = run.load_dataset()?;
            let split = run.make_split(&ds)?;
            let (det, _) = train_variant(&split.train, &split.validation, &run.train)?;
            Ok(AblationRow {
                variant,
                seed,
                test_auc: test_auc(&det, &split.test)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summary: Vec<AblationSummary> = Variant::ALL
        .iter()
        .map(|&v| {
            let aucs: Vec<f64> = rows
                .iter()
                .filter(|r| r.variant == v)
                .map(|r| r.test_auc)
                .collect();
            let (mean, std) = mean_std(&aucs);
            AblationSummary {
                variant: v,
                mean,
                std,
                rank: 0,
            }
        })
        .collect();
    let mut order: Vec<usize> = (0..summary.len()).collect();
    order.sort_by(|&a, &b| summary[b].mean.total_cmp(&summary[a].mean));
    for (rank, &i) in order.iter().enumerate() {
        summary[i].rank = rank + 1;
    }

    ensure_dir(&cfg.out_dir)?;
    write_table(
        &cfg.out_dir,
        "ablation",
        cfg.format,
        &["variant", "seed", "test_auc"],
        &rows,
        |r| {
            vec![
                r.variant.to_string(),
                r.seed.to_string(),
                r.test_auc.to_string(),
            ]
        },
    )?;
    write_json(&cfg.out_dir.join("ablation_summary.json"), &summary)?;

    let mut table = format!("{:<10} {:>8} {:>8}\n", "variant", "mean", "std");
    for s in &summary {
        let _ = writeln!(
            table,
            "{:<10} {:>8.4} {:>8.4}",
            s.variant.to_string(),
            s.mean,
            s.std
        );
    }
    let ranking: Vec<String> = order
        .iter()
        .map(|&i| summary[i].variant.to_string())
        .collect();
    print!("{table}");
    println!("rank: {}", ranking.join(" > "));
    Ok(())
}

#[derive(Debug, Serialize)]
struct AuditRow {
    nu: f64,
    nu1: f64,
    nu2: f64,
    #[serde(flatten)]
    report: NuAuditReport,
}

fn audit_detector(det: &Detector, ds: &LabeledDataset, nu: &NuParams) -> Result<NuAuditReport> {
    let sphere = det.sphere();
    let d = det.squared_distances(ds.x())?;
    Ok(nu_audit_distances(
        &d,
        ds.labels(),
        sphere.r_bar,
        sphere.rho_bar,
        nu,
    ))
}

fn print_audit(r: &NuAuditReport) {
    println!(
        "normal outside inner: {}/{} = {:.4} (bound {:.4}, {})",
        r.n_out_plus,
        r.m,
        r.normal_ratio,
        r.bound_normal,
        if r.satisfied_normal { "ok" } else { "violated" }
    );
    println!(
        "abnormal inside outer: {}/{} = {:.4} (bound {:.4}, {})",
        r.n_out_minus,
        r.n_minus,
        r.abnormal_ratio,
        r.bound_abnormal,
        if r.satisfied_abnormal {
            "ok"
        } else {
            "violated"
        }
    );
}

/// Audits a saved model on the training split, or trains and audits every
/// grid point when `grid` is set.
pub fn audit(cfg: &RunConfig, model_path: Option<&Path>, grid: bool) -> Result<()> {
    ensure_dir(&cfg.out_dir)?;
    if !grid {
        let Some(path) = model_path else {
            bail!("audit needs --model, or --grid to train over the sweep grid");
        };
        let model = ModelFile::load(path)?;
        let ds = cfg.load_dataset()?;
        let split = cfg.make_split(&ds)?;
        let train = model.prepare(&ds.subset(&split.indices.train))?;
        let report = audit_detector(&model.detector, &train, &model.config.nu)?;
        write_json(&cfg.out_dir.join("audit.json"), &report)?;
        print_audit(&report);
        return Ok(());
    }
    let params = nu_grid(cfg)?;
    let (_, split) = load_split(cfg)?;
    let rows = params
        .par_iter()
        .map(|p| {
            let (det, _) =
                train_variant(&split.train, &split.validation, &with_nu(&cfg.train, *p))?;
            Ok(AuditRow {
                nu: p.nu,
                nu1: p.nu1,
                nu2: p.nu2,
                report: audit_detector(&det, &split.train, p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let header = [
        "nu",
        "nu1",
        "nu2",
        "normal_ratio",
        "bound_normal",
        "abnormal_ratio",
        "bound_abnormal",
        "satisfied",
    ];
    let path = write_table(
        &cfg.out_dir,
        "audit_grid",
        cfg.format,
        &header,
        &rows,
        |r| {
            vec![
                r.nu.to_string(),
                r.nu1.to_string(),
                r.nu2.to_string(),
                r.report.normal_ratio.to_string(),
                r.report.bound_normal.to_string(),
                r.report.abnormal_ratio.to_string(),
                r.report.bound_abnormal.to_string(),
                r.report.satisfied().to_string(),
            ]
        },
    )?;
    let ok = rows.iter().filter(|r| r.report.satisfied()).count();
    println!(
        "{ok}/{} grid points satisfy both bounds ({})",
        rows.len(),
        path.display()
    );
    Ok(())
}

pub fn export(
    cfg: &RunConfig,
    model_path: &Path,
    resolution: usize,
    margin: f64,
    set: EvalSet,
) -> Result<()> {
    let model = ModelFile::load(model_path)?;
    let (raw, name) = eval_rows(cfg, set, None)?;
    let ds = model.prepare(&raw)?;
    let dir = &cfg.out_dir;
    ensure_dir(dir)?;

    let sphere = model.detector.sphere();
    let d = model.detector.squared_distances(ds.x())?;
    let hist = distance_histogram(
        &d,
        ds.labels(),
        sphere.r_bar,
        sphere.r_bar + sphere.rho_bar,
        &name,
    )?;
    let mut buf = Vec::new();
    hist.write_csv(&mut buf)?;
    fs::write(dir.join("histogram.csv"), buf)?;

    match &model.detector {
        Detector::EndToEnd { net, .. } => {
            let grid = export_boundary(net, &ds, resolution, margin)?;
            let mut files = [
                ("boundary_grid.csv", Vec::new()),
                ("circles.csv", Vec::new()),
                ("points.csv", Vec::new()),
            ];
            grid.write_csv(&mut files[0].1)?;
            grid.write_circles_csv(&mut files[1].1)?;
            grid.write_points_csv(&mut files[2].1)?;
            for (f, bytes) in files {
                fs::write(dir.join(f), bytes)?;
            }
            println!(
                "{}x{} grid in {:?} space written to {}",
                resolution,
                resolution,
                grid.space,
                dir.display()
            );
        }
        Detector::Explicit { variant, .. } => {
            warn!("{variant} keeps its sphere outside the network; only the histogram was written");
            println!("histogram written to {}", dir.display());
        }
    }
    Ok(())
}
