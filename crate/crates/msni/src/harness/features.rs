//! Feature-file ingestion and stream dumps.
//!
//! Two on-disk formats carry `(label, feature-vector)` rows:
//!
//! - `csv`: header `label,f1,...,fd`, one row per sample;
//! - `f32le`: 8-byte little-endian row count `N`, 4-byte little-endian
//!   dimension `d`, then `N * (d+1)` little-endian 32-bit floats, each row
//!   starting with its label.
//!
//! Ingestion for continual-learning runs additionally applies a task
//! assignment (class id -> task and binary label) and validates it. Dumps go
//! the other way: a generated stream is flattened to rows (responses as
//! labels) so it can be replayed later.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::stream::BatchSource;

use super::config::FeatureFormat;

/// Parsed feature file before any task semantics.
#[derive(Debug)]
pub struct RawFeatureFile {
    pub features: Array2<f64>,
    pub labels: Vec<f64>,
}

/// Class-to-task mapping: `class -> (task, binary label)`, tasks 1-based.
#[derive(Debug, Clone)]
pub struct TaskAssignment {
    map: BTreeMap<i64, (usize, u8)>,
    num_tasks: usize,
}

impl TaskAssignment {
    /// Builds from explicit `(class, task, label)` triples and validates that
    /// tasks are contiguous from 1 and every task sees both binary labels.
    pub fn new(entries: impl IntoIterator<Item = (i64, usize, u8)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (class, task, label) in entries {
            if task == 0 {
                return Err(Error::Config(format!("class {class}: tasks are 1-based")));
            }
            if label > 1 {
                return Err(Error::Config(format!(
                    "class {class}: binary label must be 0 or 1, got {label}"
                )));
            }
            if map.insert(class, (task, label)).is_some() {
                return Err(Error::Config(format!("class {class} mapped more than once")));
            }
        }
        if map.is_empty() {
            return Err(Error::Config("task assignment is empty".into()));
        }
        let tasks: BTreeSet<usize> = map.values().map(|&(t, _)| t).collect();
        let num_tasks = *tasks.iter().max().unwrap();
        if tasks.len() != num_tasks {
            return Err(Error::Config("task ids must be contiguous from 1".into()));
        }
        for t in 1..=num_tasks {
            let mut seen = [false, false];
            for &(task, label) in map.values() {
                if task == t {
                    seen[label as usize] = true;
                }
            }
            if !(seen[0] && seen[1]) {
                return Err(Error::Config(format!(
                    "task {t} is missing one of the binary labels"
                )));
            }
        }
        Ok(Self { map, num_tasks })
    }

    /// Consecutive class pairs: classes `(0,1)` form task 1, `(2,3)` task 2, ...
    pub fn consecutive_pairs(num_classes: usize) -> Result<Self> {
        if num_classes < 2 || !num_classes.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "pairing needs an even class count, got {num_classes}"
            )));
        }
        Self::new((0..num_classes as i64).map(|c| (c, c as usize / 2 + 1, (c % 2) as u8)))
    }

    /// From the config-file map `class -> [task, label]`.
    pub fn from_config(map: &BTreeMap<String, [usize; 2]>) -> Result<Self> {
        let mut entries = Vec::with_capacity(map.len());
        for (class_str, &[task, label]) in map {
            let class: i64 = class_str
                .parse()
                .map_err(|_| Error::Config(format!("class id '{class_str}' is not an integer")))?;
            if label > 1 {
                return Err(Error::Config(format!(
                    "class {class}: binary label must be 0 or 1"
                )));
            }
            entries.push((class, task, label as u8));
        }
        Self::new(entries)
    }

    pub fn num_tasks(&self) -> usize {
        self.num_tasks
    }

    pub fn lookup(&self, class: i64) -> Option<(usize, u8)> {
        self.map.get(&class).copied()
    }
}

/// Validated dataset: features with integer class labels and an assignment
/// covering every observed class.
#[derive(Debug)]
pub struct FeatureDataset {
    pub features: Array2<f64>,
    pub labels: Vec<i64>,
    pub assignment: TaskAssignment,
}

impl FeatureDataset {
    pub fn num_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }
}

fn parse_csv<R: BufRead>(reader: R) -> Result<RawFeatureFile> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty feature file".into()))??;
    let fields: Vec<&str> = header.trim_end().split(',').collect();
    if fields.first() != Some(&"label") || fields.len() < 2 {
        return Err(Error::Parse(
            "header must be 'label,f1,...,fd'".into(),
        ));
    }
    let d = fields.len() - 1;
    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line?;
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            continue;
        }
        let mut parts = trimmed.split(',');
        let row_no = row + 1;
        let label: f64 = parts
            .next()
            .unwrap()
            .parse()
            .map_err(|_| Error::Parse(format!("row {row_no}: bad label")))?;
        let mut count = 0;
        for part in parts {
            let v: f64 = part
                .parse()
                .map_err(|_| Error::Parse(format!("row {row_no}: bad feature value '{part}'")))?;
            values.push(v);
            count += 1;
        }
        if count != d {
            return Err(Error::Parse(format!(
                "row {row_no}: expected {d} features, found {count}"
            )));
        }
        labels.push(label);
    }
    let n = labels.len();
    let features = Array2::from_shape_vec((n, d), values)
        .map_err(|e| Error::Parse(format!("feature shape: {e}")))?;
    Ok(RawFeatureFile { features, labels })
}

fn parse_f32le<R: Read>(mut reader: R) -> Result<RawFeatureFile> {
    let mut head = [0u8; 12];
    reader
        .read_exact(&mut head)
        .map_err(|_| Error::Parse("f32le header truncated".into()))?;
    let n = u64::from_le_bytes(head[0..8].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    if d == 0 {
        return Err(Error::Parse("f32le dimension must be positive".into()));
    }
    let mut body = Vec::new();
    reader.read_to_end(&mut body)?;
    let expected = n * (d + 1) * 4;
    if body.len() != expected {
        return Err(Error::Parse(format!(
            "f32le body has {} bytes, expected {expected} for {n} rows of dimension {d}",
            body.len()
        )));
    }
    let mut labels = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n * d);
    for row in 0..n {
        let base = row * (d + 1) * 4;
        let label = f32::from_le_bytes(body[base..base + 4].try_into().unwrap());
        labels.push(label as f64);
        for j in 0..d {
            let off = base + 4 + 4 * j;
            let v = f32::from_le_bytes(body[off..off + 4].try_into().unwrap());
            values.push(v as f64);
        }
    }
    let features = Array2::from_shape_vec((n, d), values)
        .map_err(|e| Error::Parse(format!("feature shape: {e}")))?;
    Ok(RawFeatureFile { features, labels })
}

/// Reads a raw feature file in either format.
pub fn read_raw(path: &Path, format: FeatureFormat) -> Result<RawFeatureFile> {
    let file = std::fs::File::open(path)?;
    match format {
        FeatureFormat::Csv => parse_csv(BufReader::new(file)),
        FeatureFormat::F32le => parse_f32le(BufReader::new(file)),
    }
}

/// Validates labels as integer class ids and checks them against the
/// assignment. Unmapped or fractional labels are reported with their row
/// number.
pub fn dataset_from_raw(raw: RawFeatureFile, assignment: TaskAssignment) -> Result<FeatureDataset> {
    let mut labels = Vec::with_capacity(raw.labels.len());
    for (row, &l) in raw.labels.iter().enumerate() {
        if l.fract() != 0.0 || !l.is_finite() {
            return Err(Error::Parse(format!(
                "row {}: label {l} is not an integer class id",
                row + 1
            )));
        }
        let class = l as i64;
        if assignment.lookup(class).is_none() {
            return Err(Error::Config(format!(
                "row {}: class {class} has no task assignment",
                row + 1
            )));
        }
        labels.push(class);
    }
    Ok(FeatureDataset { features: raw.features, labels, assignment })
}

/// Reads a feature file and applies the task assignment.
pub fn ingest_features(
    path: &Path,
    format: FeatureFormat,
    assignment: TaskAssignment,
) -> Result<FeatureDataset> {
    dataset_from_raw(read_raw(path, format)?, assignment)
}

/// Default assignment from the classes present in a file: the sorted class
/// ids are paired consecutively, one binary task per pair.
pub fn default_assignment_from_labels(labels: &[f64]) -> Result<TaskAssignment> {
    let mut classes = BTreeSet::new();
    for (row, &l) in labels.iter().enumerate() {
        if l.fract() != 0.0 || !l.is_finite() {
            return Err(Error::Parse(format!(
                "row {}: label {l} is not an integer class id",
                row + 1
            )));
        }
        classes.insert(l as i64);
    }
    if classes.len() < 2 || classes.len() % 2 != 0 {
        return Err(Error::Config(format!(
            "default pairing needs an even number of classes, found {}",
            classes.len()
        )));
    }
    TaskAssignment::new(
        classes
            .into_iter()
            .enumerate()
            .map(|(i, c)| (c, i / 2 + 1, (i % 2) as u8)),
    )
}

/// Writes `(label, features)` rows as CSV. Values use the shortest exact
/// decimal form.
pub fn write_raw_csv<W: Write>(out: &mut W, features: &Array2<f64>, labels: &[f64]) -> Result<()> {
    let d = features.ncols();
    write!(out, "label")?;
    for j in 1..=d {
        write!(out, ",f{j}")?;
    }
    writeln!(out)?;
    for (i, &label) in labels.iter().enumerate() {
        write!(out, "{label}")?;
        for j in 0..d {
            write!(out, ",{}", features[[i, j]])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Writes the binary format. Values are quantized to `f32` by design.
pub fn write_raw_f32le<W: Write>(
    out: &mut W,
    features: &Array2<f64>,
    labels: &[f64],
) -> Result<()> {
    let n = labels.len();
    let d = features.ncols();
    out.write_all(&(n as u64).to_le_bytes())?;
    out.write_all(&(d as u32).to_le_bytes())?;
    for i in 0..n {
        out.write_all(&(labels[i] as f32).to_le_bytes())?;
        for j in 0..d {
            out.write_all(&(features[[i, j]] as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

/// Flattens a stream to `(response, features)` rows and writes it in the
/// requested format, batch order preserved.
pub fn dump_stream<S: BatchSource>(source: &S, format: FeatureFormat, path: &Path) -> Result<()> {
    let mut all_features = Vec::new();
    let mut labels = Vec::new();
    let d = source.dim();
    for k in 1..=source.len() {
        let b = source.batch(k);
        for i in 0..b.num_samples() {
            labels.push(b.responses()[i]);
            for j in 0..d {
                all_features.push(b.features()[[i, j]]);
            }
        }
    }
    let features = Array2::from_shape_vec((labels.len(), d), all_features)
        .expect("row-major flattening is consistent");
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let file = std::fs::File::create(path)?;
    let mut out = BufWriter::new(file);
    match format {
        FeatureFormat::Csv => write_raw_csv(&mut out, &features, &labels)?,
        FeatureFormat::F32le => write_raw_f32le(&mut out, &features, &labels)?,
    }
    out.flush()?;
    Ok(())
}
