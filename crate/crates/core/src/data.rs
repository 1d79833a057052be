//! CSV time series: loading, min-max normalization, k-fold plans and
//! one-step-ahead prediction frames.

use std::f64::consts::TAU;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {error}")]
    Io { path: String, error: std::io::Error },
    #[error("{name}: empty file")]
    Empty { name: String },
    #[error("{name}: malformed csv at line {line}: {message}")]
    Csv { name: String, line: u64, message: String },
    #[error("{name}: line {line} has {found} cells, expected {expected}")]
    Ragged { name: String, line: u64, expected: usize, found: usize },
    #[error("{name}: line {line}, column {column}: `{value}` is not a number")]
    NonNumeric { name: String, line: u64, column: usize, value: String },
    #[error("{name}: line {line}, column {column}: value is not finite")]
    NonFinite { name: String, line: u64, column: usize },
    #[error("{name}: {rows} rows, at least 2 required")]
    TooFewRows { name: String, rows: usize },
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("files have different columns: `{0}` vs `{1}`")]
    ColumnsDiffer(String, String),
    #[error("cannot split {files} files into {k} folds")]
    BadFolds { files: usize, k: usize },
    #[error("{0}")]
    Write(String),
}

/// One recorded series: `rows[t][column]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesFile {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TimeSeriesFile {
    pub fn column_index(&self, name: &str) -> Result<usize, DataError> {
        self.columns.iter().position(|c| c == name).ok_or_else(|| DataError::MissingColumn(name.to_string()))
    }

    pub fn column(&self, index: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[index]).collect()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let io = |error| DataError::Io { path: path.display().to_string(), error };
        let mut file = File::create(path).map_err(io)?;
        file.write_all(self.to_csv_string().as_bytes()).map_err(io)
    }
}

/// Parses a header row followed by comma-separated numeric rows. Numbers
/// use `.` as the decimal separator regardless of locale.
pub fn parse_csv(name: &str, reader: impl Read) -> Result<TimeSeriesFile, DataError> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let csv_err = |e: csv::Error| DataError::Csv {
        name: name.to_string(),
        line: e.position().map(|p| p.line()).unwrap_or(0),
        message: e.to_string(),
    };
    let columns: Vec<String> = csv.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if columns.is_empty() || columns.iter().all(String::is_empty) {
        return Err(DataError::Empty { name: name.to_string() });
    }

    let mut rows = Vec::new();
    for record in csv.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != columns.len() {
            return Err(DataError::Ragged {
                name: name.to_string(),
                line,
                expected: columns.len(),
                found: record.len(),
            });
        }
        let mut row = Vec::with_capacity(columns.len());
        for (column, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| DataError::NonNumeric {
                name: name.to_string(),
                line,
                column,
                value: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(DataError::NonFinite { name: name.to_string(), line, column });
            }
            row.push(value);
        }
        rows.push(row);
    }
    if rows.len() < 2 {
        return Err(DataError::TooFewRows { name: name.to_string(), rows: rows.len() });
    }
    Ok(TimeSeriesFile { name: name.to_string(), columns, rows })
}

pub fn load_csv(path: &Path) -> Result<TimeSeriesFile, DataError> {
    let file = File::open(path).map_err(|error| DataError::Io { path: path.display().to_string(), error })?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    parse_csv(&name, file)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeMode {
    #[default]
    Minmax,
    None,
}

impl std::str::FromStr for NormalizeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "minmax" => Ok(NormalizeMode::Minmax),
            "none" => Ok(NormalizeMode::None),
            other => Err(format!("unknown normalization `{other}` (expected minmax or none)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub min: f64,
    pub max: f64,
}

/// Per-column min-max statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub ranges: Vec<ColumnRange>,
}

impl Normalization {
    /// Identity mapping (min 0, max 1) for `columns` columns.
    pub fn identity(columns: usize) -> Self {
        Self { ranges: vec![ColumnRange { min: 0.0, max: 1.0 }; columns] }
    }

    pub fn apply_value(&self, column: usize, x: f64) -> f64 {
        let ColumnRange { min, max } = self.ranges[column];
        if max > min {
            (x - min) / (max - min)
        } else {
            0.0
        }
    }

    pub fn denormalize_value(&self, column: usize, y: f64) -> f64 {
        let ColumnRange { min, max } = self.ranges[column];
        if max > min {
            y * (max - min) + min
        } else {
            min
        }
    }
}

/// Fits per-column ranges. Takes training files only; validation data never
/// influences the statistics.
pub fn fit_normalization(training: &[TimeSeriesFile]) -> Normalization {
    let columns = training.first().map(|f| f.columns.len()).unwrap_or(0);
    let mut ranges = vec![ColumnRange { min: f64::INFINITY, max: f64::NEG_INFINITY }; columns];
    for file in training {
        for row in &file.rows {
            for (r, &x) in ranges.iter_mut().zip(row) {
                r.min = r.min.min(x);
                r.max = r.max.max(x);
            }
        }
    }
    Normalization { ranges }
}

/// Maps `x -> (x - min) / (max - min)`, constant columns to 0. Values from
/// files outside the fitted set may fall outside `[0, 1]`; they are not
/// clipped.
pub fn apply_normalization(file: &TimeSeriesFile, norm: &Normalization) -> TimeSeriesFile {
    let rows =
        file.rows.iter().map(|row| row.iter().enumerate().map(|(c, &x)| norm.apply_value(c, x)).collect()).collect();
    TimeSeriesFile { name: file.name.clone(), columns: file.columns.clone(), rows }
}

/// Assignment of files to folds; fold `i` is the validation set of run `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// `assignments[file] = fold`
    pub assignments: Vec<usize>,
    pub repeats: usize,
}

impl FoldPlan {
    pub fn validation_files(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&f| self.assignments[f] == fold).collect()
    }

    pub fn training_files(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&f| self.assignments[f] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignments {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffles file indices with `seed` and deals them round-robin into `k`
/// folds, so fold sizes differ by at most one.
pub fn make_folds(n_files: usize, k: usize, seed: u64) -> Result<FoldPlan, DataError> {
    if k < 2 || k > n_files {
        return Err(DataError::BadFolds { files: n_files, k });
    }
    let mut order: Vec<usize> = (0..n_files).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignments = vec![0; n_files];
    for (position, &file) in order.iter().enumerate() {
        assignments[file] = position % k;
    }
    Ok(FoldPlan { k, assignments, repeats: 1 })
}

/// Fold count for a given number of files per fold.
pub fn folds_for_size(n_files: usize, fold_size: usize) -> usize {
    if fold_size == 0 {
        0
    } else {
        n_files / fold_size
    }
}

/// Inputs at `t` paired with targets at `t + 1`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Frames {
    /// `[t][column]`
    pub inputs: Vec<Vec<f64>>,
    /// `[t][output]`
    pub targets: Vec<Vec<f64>>,
}

impl Frames {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Mean squared error of predicting each target with the current value
    /// of `column` (the persistence forecast when `column` is the target).
    pub fn persistence_mse(&self, column: usize) -> f64 {
        let sum: f64 = self.inputs.iter().zip(&self.targets).map(|(x, y)| (x[column] - y[0]).powi(2)).sum();
        sum / self.len() as f64
    }
}

/// Every column at `t` (the target included) predicts the target at `t + 1`.
pub fn prediction_frames(file: &TimeSeriesFile, target_column: &str) -> Result<Frames, DataError> {
    let target = file.column_index(target_column)?;
    if file.rows.len() < 2 {
        return Err(DataError::TooFewRows { name: file.name.clone(), rows: file.rows.len() });
    }
    let inputs = file.rows[..file.rows.len() - 1].to_vec();
    let targets = file.rows[1..].iter().map(|r| vec![r[target]]).collect();
    Ok(Frames { inputs, targets })
}

/// Normalized training and validation data for one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesSet {
    pub files: Vec<TimeSeriesFile>,
    pub normalization: Normalization,
    pub target_column: String,
    pub input_columns: Vec<String>,
}

/// Frames for a single fold, ready for training.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldData {
    pub train: Vec<Frames>,
    pub validation: Vec<Frames>,
    pub normalization: Normalization,
    pub input_columns: Vec<String>,
    pub target_index: usize,
}

impl FoldData {
    /// Persistence baseline over the validation series.
    pub fn validation_persistence_mse(&self) -> f64 {
        let mut sum = 0.0;
        let mut count = 0;
        for f in &self.validation {
            sum += f.persistence_mse(self.target_index) * f.len() as f64;
            count += f.len();
        }
        sum / count as f64
    }
}

impl TimeSeriesSet {
    /// Fits normalization on the training files only and builds frames for
    /// both sides.
    pub fn prepare_fold(
        training: &[TimeSeriesFile],
        validation: &[TimeSeriesFile],
        target_column: &str,
        mode: NormalizeMode,
    ) -> Result<FoldData, DataError> {
        let first = training.first().ok_or(DataError::BadFolds { files: 0, k: 0 })?;
        for f in training.iter().chain(validation) {
            if f.columns != first.columns {
                return Err(DataError::ColumnsDiffer(first.name.clone(), f.name.clone()));
            }
        }
        let target_index = first.column_index(target_column)?;
        let normalization = match mode {
            NormalizeMode::Minmax => fit_normalization(training),
            NormalizeMode::None => Normalization::identity(first.columns.len()),
        };
        let frames = |files: &[TimeSeriesFile]| -> Result<Vec<Frames>, DataError> {
            files.iter().map(|f| prediction_frames(&apply_normalization(f, &normalization), target_column)).collect()
        };
        Ok(FoldData {
            train: frames(training)?,
            validation: frames(validation)?,
            normalization,
            input_columns: first.columns.clone(),
            target_index,
        })
    }
}

/// Parameters of the synthetic multivariate fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub files: usize,
    pub rows: usize,
    pub columns: usize,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self { files: 4, rows: 1000, columns: 12, seed: 2019 }
    }
}

pub const FIXTURE_TARGET: &str = "target";

/// Synthetic series built from sines plus AR(1) noise.
///
/// Column `lead` is a fast oscillation plus noise and column `target` repeats
/// it one step later, so the next target value is visible in the current
/// inputs while the persistence forecast pays for every fast swing. The
/// remaining `aux_*` columns are slower sines, some mixed with `lead`.
pub fn synthetic_fixture(spec: &FixtureSpec) -> Vec<TimeSeriesFile> {
    assert!(spec.columns >= 2, "fixture needs at least the target and lead columns");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let mut columns = vec![FIXTURE_TARGET.to_string(), "lead".to_string()];
    columns.extend((2..spec.columns).map(|k| format!("aux_{k}")));

    (0..spec.files)
        .map(|file| {
            let phase = |rng: &mut ChaCha8Rng| rng.random_range(0.0..TAU);
            let (p1, p2) = (phase(&mut rng), phase(&mut rng));
            let aux: Vec<(f64, f64, f64, f64, usize)> = (2..spec.columns)
                .map(|_| {
                    (
                        rng.random_range(0.2..1.0),
                        rng.random_range(10.0..200.0),
                        phase(&mut rng),
                        rng.random_range(0.0..0.5),
                        rng.random_range(0..3usize),
                    )
                })
                .collect();

            let steps = spec.rows + 3;
            let mut ar = 0.0;
            let mut lead = Vec::with_capacity(steps);
            for t in 0..steps {
                ar = 0.8 * ar + 0.3 * noise.sample(&mut rng);
                let x = t as f64;
                lead.push(0.6 * (TAU * x / 7.0 + p1).sin() + 0.3 * (TAU * x / 23.0 + p2).sin() + 0.25 * ar);
            }

            let mut aux_noise = vec![0.0; aux.len()];
            let rows = (3..steps)
                .map(|t| {
                    let x = t as f64;
                    let mut row = Vec::with_capacity(spec.columns);
                    row.push(lead[t - 1] + 0.02 * noise.sample(&mut rng));
                    row.push(lead[t]);
                    for (k, &(amp, period, phase, mix, lag)) in aux.iter().enumerate() {
                        aux_noise[k] = 0.8 * aux_noise[k] + 0.1 * noise.sample(&mut rng);
                        row.push(amp * (TAU * x / period + phase).sin() + mix * lead[t - lag] + aux_noise[k]);
                    }
                    row
                })
                .collect();
            TimeSeriesFile { name: format!("synthetic_{file:02}.csv"), columns: columns.clone(), rows }
        })
        .collect()
}

/// Writes fixture files plus a `fixture.json` recording the generator
/// settings, returning the csv paths.
pub fn write_fixture(dir: &Path, spec: &FixtureSpec) -> Result<Vec<std::path::PathBuf>, DataError> {
    std::fs::create_dir_all(dir).map_err(|error| DataError::Io { path: dir.display().to_string(), error })?;
    let mut paths = Vec::new();
    for file in synthetic_fixture(spec) {
        let path = dir.join(&file.name);
        file.write_csv(&path)?;
        paths.push(path);
    }
    let meta = serde_json::to_string_pretty(spec).map_err(|e| DataError::Write(e.to_string()))?;
    let meta_path = dir.join("fixture.json");
    std::fs::write(&meta_path, meta).map_err(|error| DataError::Io { path: meta_path.display().to_string(), error })?;
    Ok(paths)
}
