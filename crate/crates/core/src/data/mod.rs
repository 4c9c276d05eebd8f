//! Datasets: synthetic generators, CSV ingestion, normalization and splits.

mod csv_io;
mod dataset;
mod split;
mod synthetic;

pub use csv_io::{load_csv, read_csv, CsvSpec, LabelColumn};
pub use dataset::{FeatureStats, Label, LabeledDataset};
pub use split::{
    anomaly_keep_count, kfold, make_split, DatasetManifest, ManifestSplit, SplitDataset,
    SplitIndices, SplitOptions,
};
pub use synthetic::{
    generate_moons, generate_spiral, spiral_pitch, MOONS_NOISE, SPIRAL_NOISE, SPIRAL_TURNS,
};
