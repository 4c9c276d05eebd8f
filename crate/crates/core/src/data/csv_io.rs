use std::io::Read;
use std::path::Path;

use super::dataset::{Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::numcore::Matrix;

/// Which column holds the class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    Index(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSpec {
    pub label_column: LabelColumn,
    /// Label value treated as the normal class; every other value is abnormal.
    pub normal_label: String,
    pub has_header: bool,
}

/// Loads a comma-separated file. All non-label columns must be numeric.
pub fn load_csv(path: impl AsRef<Path>, spec: &CsvSpec) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "csv".into());
    read_csv(file, &name, spec)
}

/// Same as [`load_csv`] over any reader. Reported row numbers are 1-based
/// line numbers of the input (the header, when present, is line 1).
pub fn read_csv<R: Read>(reader: R, name: &str, spec: &CsvSpec) -> Result<LabeledDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(spec.has_header)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let label_idx = match &spec.label_column {
        LabelColumn::Index(i) => *i,
        LabelColumn::Name(n) => {
            if !spec.has_header {
                return Err(Error::Config(format!(
                    "label column '{n}' given by name but the file has no header"
                )));
            }
            let headers = rdr.headers()?;
            headers
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| Error::Config(format!("label column '{n}' not found in header")))?
        }
    };
    let offset = usize::from(spec.has_header) + 1;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + offset;
        if label_idx >= record.len() {
            return Err(Error::Parse {
                row,
                col: label_idx + 1,
                msg: format!("missing label column (row has {} fields)", record.len()),
            });
        }
        let d = record.len() - 1;
        match width {
            None => width = Some(d),
            Some(w) if w != d => {
                return Err(Error::Parse {
                    row,
                    col: record.len(),
                    msg: format!("expected {} fields, found {}", w + 1, record.len()),
                })
            }
            _ => {}
        }
        for (c, field) in record.iter().enumerate() {
            if c == label_idx {
                continue;
            }
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row,
                col: c + 1,
                msg: format!("non-numeric feature '{field}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    col: c + 1,
                    msg: format!("non-finite feature '{field}'"),
                });
            }
            data.push(v);
        }
        let label = if record[label_idx] == spec.normal_label {
            Label::Normal
        } else {
            Label::Abnormal
        };
        labels.push(label);
    }
    let d = width.unwrap_or(0);
    let x = Matrix::from_vec(labels.len(), d, data)?;
    let ds = LabeledDataset::new(name, x, labels)?;
    if ds.count(Label::Normal) == 0 {
        return Err(Error::Config(format!(
            "no rows carry the normal label '{}'",
            spec.normal_label
        )));
    }
    Ok(ds)
}
