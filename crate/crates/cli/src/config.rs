use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use marginsphere::data::{
    generate_moons, generate_spiral, kfold, load_csv, make_split, CsvSpec, LabelColumn,
    LabeledDataset, SplitDataset, SplitOptions, MOONS_NOISE, SPIRAL_NOISE, SPIRAL_TURNS,
};
use marginsphere::trainer::{TrainConfig, Variant};

/// Where the rows come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Moons {
        n: usize,
        noise: f64,
        seed: u64,
    },
    Spiral {
        n: usize,
        noise: f64,
        turns: f64,
        seed: u64,
    },
    Csv {
        path: PathBuf,
        spec: CsvSpec,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitMode {
    Holdout,
    /// K-fold, training on the given fold.
    Fold {
        k: usize,
        fold: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => bail!("format must be csv or json, got '{s}'"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub nu: Vec<f64>,
    pub nu1: Vec<f64>,
    pub nu2: Vec<f64>,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetSpec,
    pub split: SplitMode,
    pub split_options: SplitOptions,
    pub split_seed: u64,
    pub train: TrainConfig,
    pub out_dir: PathBuf,
    pub format: Format,
    pub sweep: SweepGrid,
    pub ablate_seeds: usize,
}

fn default_grid() -> Vec<f64> {
    (1..=9).map(|k| k as f64 / 10.0).collect()
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::Moons {
                n: 1000,
                noise: MOONS_NOISE,
                seed: 0,
            },
            split: SplitMode::Holdout,
            split_options: SplitOptions::default(),
            split_seed: 0,
            train: TrainConfig::default(),
            out_dir: PathBuf::from("run"),
            format: Format::Csv,
            sweep: SweepGrid {
                nu: default_grid(),
                nu1: default_grid(),
                nu2: default_grid(),
                folds: 5,
            },
            ablate_seeds: 5,
        }
    }
}

struct Entry {
    line: usize,
    value: String,
}

/// Reads `key = value` lines; `#` starts a comment.
fn parse_entries(text: &str) -> Result<BTreeMap<String, Entry>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| anyhow!("line {line}: expected 'key = value', got '{content}'"))?;
        let key = key.trim().to_string();
        if key.is_empty() {
            bail!("line {line}: empty key");
        }
        let entry = Entry {
            line,
            value: value.trim().to_string(),
        };
        if let Some(prev) = out.insert(key.clone(), entry) {
            bail!("line {line}: '{key}' already set on line {}", prev.line);
        }
    }
    Ok(out)
}

struct Fields {
    entries: BTreeMap<String, Entry>,
}

impl Fields {
    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|err| {
                anyhow!(
                    "line {}: field '{key}': {err} (value '{}')",
                    e.line,
                    e.value
                )
            }),
        }
    }

    fn take_list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .split(',')
                .map(|v| {
                    v.trim().parse::<T>().map_err(|err| {
                        anyhow!(
                            "line {}: field '{key}': {err} (value '{}')",
                            e.line,
                            v.trim()
                        )
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("in config {}", path.display()))
    }

    /// Parses config text; relative CSV paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut f = Fields {
            entries: parse_entries(text)?,
        };
        let mut cfg = RunConfig::default();

        let kind: String = f.take("dataset.kind")?.unwrap_or_else(|| "moons".into());
        let n: usize = f.take("dataset.n")?.unwrap_or(1000);
        let data_seed: u64 = f.take("dataset.seed")?.unwrap_or(0);
        cfg.dataset = match kind.as_str() {
            "moons" => DatasetSpec::Moons {
                n,
                noise: f.take("dataset.noise")?.unwrap_or(MOONS_NOISE),
                seed: data_seed,
            },
            "spiral" => DatasetSpec::Spiral {
                n,
                noise: f.take("dataset.noise")?.unwrap_or(SPIRAL_NOISE),
                turns: f.take("dataset.turns")?.unwrap_or(SPIRAL_TURNS),
                seed: data_seed,
            },
            "csv" => {
                let path: PathBuf = f
                    .take("dataset.path")?
                    .ok_or_else(|| anyhow!("field 'dataset.path' is required for csv datasets"))?;
                let label_column = match (
                    f.take::<String>("dataset.label_column")?,
                    f.take::<usize>("dataset.label_index")?,
                ) {
                    (Some(name), None) => LabelColumn::Name(name),
                    (None, Some(i)) => LabelColumn::Index(i),
                    (None, None) => LabelColumn::Index(usize::MAX),
                    (Some(_), Some(_)) => {
                        bail!("set only one of 'dataset.label_column' and 'dataset.label_index'")
                    }
                };
                let has_header = f.take("dataset.has_header")?.unwrap_or(true);
                let normal_label = f.take("dataset.normal_label")?.ok_or_else(|| {
                    anyhow!("field 'dataset.normal_label' is required for csv datasets")
                })?;
                DatasetSpec::Csv {
                    path: if path.is_absolute() {
                        path
                    } else {
                        base.join(path)
                    },
                    spec: CsvSpec {
                        label_column,
                        normal_label,
                        has_header,
                    },
                }
            }
            other => bail!("field 'dataset.kind': unknown dataset '{other}' (moons, spiral, csv)"),
        };

        let mode: String = f.take("split.mode")?.unwrap_or_else(|| "holdout".into());
        let k: usize = f.take("split.folds")?.unwrap_or(5);
        let fold: usize = f.take("split.fold")?.unwrap_or(0);
        cfg.split = match mode.as_str() {
            "holdout" => SplitMode::Holdout,
            "kfold" => {
                if fold >= k {
                    bail!("field 'split.fold': {fold} is not below split.folds = {k}");
                }
                SplitMode::Fold { k, fold }
            }
            other => bail!("field 'split.mode': unknown mode '{other}' (holdout, kfold)"),
        };
        let so = &mut cfg.split_options;
        f.set("split.anomaly_fraction", &mut so.anomaly_train_fraction)?;
        f.set("split.val_fraction", &mut so.val_fraction)?;
        f.set("split.test_fraction", &mut so.test_fraction)?;
        f.set("split.normalize", &mut so.normalize)?;

        let t = &mut cfg.train;
        let two_d = !matches!(cfg.dataset, DatasetSpec::Csv { .. });
        t.widths = match f.take_list("model.widths")? {
            Some(w) => w,
            None if two_d => t.widths.clone(),
            None => TrainConfig::WIDE_WIDTHS.to_vec(),
        };
        f.set("train.variant", &mut t.variant)?;
        f.set("train.lr", &mut t.lr)?;
        f.set("train.max_epochs", &mut t.max_epochs)?;
        f.set("train.batch_size", &mut t.batch_size)?;
        f.set("train.multiplier_period", &mut t.multiplier_period)?;
        f.set("train.patience", &mut t.early_stop_patience)?;
        f.set("train.lr_decay", &mut t.lr_decay)?;
        f.set("train.seed", &mut t.seed)?;
        if let Some(m) = f.take_list("train.lr_milestones")? {
            t.lr_milestones = m;
        }
        f.set("nu.nu", &mut t.nu.nu)?;
        f.set("nu.nu1", &mut t.nu.nu1)?;
        f.set("nu.nu2", &mut t.nu.nu2)?;
        f.set("nu.lambda", &mut t.nu.lambda)?;
        cfg.split_seed = f.take("split.seed")?.unwrap_or(t.seed);

        f.set("output.dir", &mut cfg.out_dir)?;
        f.set("output.format", &mut cfg.format)?;

        if let Some(v) = f.take_list("sweep.nu")? {
            cfg.sweep.nu = v;
        }
        if let Some(v) = f.take_list("sweep.nu1")? {
            cfg.sweep.nu1 = v;
        }
        if let Some(v) = f.take_list("sweep.nu2")? {
            cfg.sweep.nu2 = v;
        }
        f.set("sweep.folds", &mut cfg.sweep.folds)?;
        f.set("ablate.seeds", &mut cfg.ablate_seeds)?;

        if let Some((key, e)) = f.entries.iter().next() {
            bail!("line {}: unknown field '{key}'", e.line);
        }
        if let DatasetSpec::Csv { spec, .. } = &cfg.dataset {
            if spec.label_column == LabelColumn::Index(usize::MAX) {
                bail!("csv datasets need 'dataset.label_column' or 'dataset.label_index'");
            }
        }
        cfg.train
            .validate()
            .map_err(|e| anyhow!("invalid training settings: {e}"))?;
        Ok(cfg)
    }

    /// Applies a `--seed` override to training, the split and generated data.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self.split_seed = seed;
        match &mut self.dataset {
            DatasetSpec::Moons { seed: s, .. } | DatasetSpec::Spiral { seed: s, .. } => *s = seed,
            DatasetSpec::Csv { .. } => {}
        }
        self
    }

    pub fn load_dataset(&self) -> Result<LabeledDataset> {
        let ds = match &self.dataset {
            DatasetSpec::Moons { n, noise, seed } => generate_moons(*n, *noise, *seed)?,
            DatasetSpec::Spiral {
                n,
                noise,
                turns,
                seed,
            } => generate_spiral(*n, *noise, *turns, *seed)?,
            DatasetSpec::Csv { path, spec } => {
                load_csv(path, spec).with_context(|| format!("loading {}", path.display()))?
            }
        };
        Ok(ds)
    }

    pub fn make_split(&self, ds: &LabeledDataset) -> Result<SplitDataset> {
        match self.split {
            SplitMode::Holdout => Ok(make_split(ds, &self.split_options, self.split_seed)?),
            SplitMode::Fold { k, fold } => {
                let mut folds = kfold(ds, k, &self.split_options, self.split_seed)?;
                Ok(folds.swap_remove(fold))
            }
        }
    }

    pub fn variant(&self) -> Variant {
        self.train.variant
    }
}
