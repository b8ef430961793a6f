//! Result files. Schemas are stable contracts:
//!
//! - curves:   `rep,algorithm,k,mse,deviation`
//! - summary:  `algorithm,k,mean_mse,sd_mse`
//! - coverage: `rep,covered,center,half_width,standardized_stat` plus a final
//!   `summary` row carrying (coverage, stat mean, mean half-width, stat
//!   variance) in the same columns
//! - accuracy: `estimator,step,i,j,R`
//! - transfer metrics: `estimator,step,aia,fwt,bwt`
//!
//! Every run also writes `manifest.txt`: code version, resolved seed, and the
//! full effective config, so any CSV can be traced back to what produced it.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::inference::CoverageReport;
use crate::metrics::{aia, bwt, fwt};

use super::continual::ContinualOutcome;

/// One curve record: estimator error and true-parameter drift at batch `k`.
#[derive(Debug, Clone)]
pub struct CurveRow {
    pub rep: u32,
    pub algorithm: String,
    pub k: usize,
    pub mse: f64,
    pub deviation: f64,
}

/// Per-(algorithm, k) aggregate across replications.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub algorithm: String,
    pub k: usize,
    pub mean_mse: f64,
    pub sd_mse: f64,
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

pub fn write_curves(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "rep,algorithm,k,mse,deviation")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.rep, r.algorithm, r.k, r.mse, r.deviation)?;
    }
    out.flush()?;
    Ok(())
}

/// Collapses curve rows into per-(algorithm, k) means and sample standard
/// deviations. Failed replications (NaN observations) are excluded from the
/// moments.
pub fn summarize(rows: &[CurveRow]) -> Vec<SummaryRow> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.algorithm.clone(), r.k)).or_default().push(r.mse);
    }
    groups
        .into_iter()
        .map(|((algorithm, k), values)| {
            let finite: Vec<f64> = values.into_iter().filter(|v| v.is_finite()).collect();
            let n = finite.len();
            let mean = if n > 0 { finite.iter().sum::<f64>() / n as f64 } else { f64::NAN };
            let sd = if n > 1 {
                (finite.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                f64::NAN
            };
            SummaryRow { algorithm, k, mean_mse: mean, sd_mse: sd }
        })
        .collect()
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "algorithm,k,mean_mse,sd_mse")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.algorithm, r.k, r.mean_mse, r.sd_mse)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_coverage(path: &Path, report: &CoverageReport) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "rep,covered,center,half_width,standardized_stat")?;
    for row in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            row.rep,
            u8::from(row.covered),
            row.center,
            row.half_width,
            row.standardized
        )?;
    }
    writeln!(
        out,
        "summary,{},{},{},{}",
        report.coverage, report.stat_mean, report.mean_half_width, report.stat_var
    )?;
    out.flush()?;
    Ok(())
}

pub fn write_accuracy(path: &Path, outcomes: &[ContinualOutcome]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "estimator,step,i,j,R")?;
    for o in outcomes {
        let m = o.matrix.num_tasks();
        for i in 0..=m {
            for j in 1..=m {
                writeln!(out, "{},{},{},{},{}", o.estimator, o.step, i, j, o.matrix.r(i, j))?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

/// Transfer metrics of one estimator configuration. Single-task grids have
/// no transfer metrics; those fields stay absent.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub estimator: String,
    pub step: f64,
    pub aia: f64,
    pub fwt: Option<f64>,
    pub bwt: Option<f64>,
}

pub fn metrics_rows_from_matrices(
    grids: &[(String, f64, crate::metrics::AccuracyMatrix)],
) -> Result<Vec<MetricsRow>> {
    let mut rows = Vec::with_capacity(grids.len());
    for (estimator, step, matrix) in grids {
        let multi = matrix.num_tasks() >= 2;
        rows.push(MetricsRow {
            estimator: estimator.clone(),
            step: *step,
            aia: aia(matrix)?,
            fwt: if multi { Some(fwt(matrix)?) } else { None },
            bwt: if multi { Some(bwt(matrix)?) } else { None },
        });
    }
    Ok(rows)
}

pub fn metrics_rows(outcomes: &[ContinualOutcome]) -> Result<Vec<MetricsRow>> {
    let grids: Vec<(String, f64, crate::metrics::AccuracyMatrix)> = outcomes
        .iter()
        .map(|o| (o.estimator.to_string(), o.step, o.matrix.clone()))
        .collect();
    metrics_rows_from_matrices(&grids)
}

pub fn write_metrics_rows(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "estimator,step,aia,fwt,bwt")?;
    for r in rows {
        let f = r.fwt.map(|v| v.to_string()).unwrap_or_default();
        let b = r.bwt.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{},{}", r.estimator, r.step, r.aia, f, b)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads an accuracy file back into per-(estimator, step) grids.
pub fn read_accuracy_csv(path: &Path) -> Result<Vec<(String, f64, crate::metrics::AccuracyMatrix)>> {
    use crate::error::Error;
    use std::collections::BTreeMap;
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some("estimator,step,i,j,R") => {}
        _ => return Err(Error::Parse("accuracy file must start with 'estimator,step,i,j,R'".into())),
    }
    type Key = (String, String);
    let mut cells: BTreeMap<Key, BTreeMap<(usize, usize), f64>> = BTreeMap::new();
    for (no, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Parse(format!("accuracy row {}: expected 5 fields", no + 1)));
        }
        let bad = |what: &str| Error::Parse(format!("accuracy row {}: bad {what}", no + 1));
        let i: usize = fields[2].parse().map_err(|_| bad("i"))?;
        let j: usize = fields[3].parse().map_err(|_| bad("j"))?;
        let r: f64 = fields[4].parse().map_err(|_| bad("R"))?;
        fields[1].parse::<f64>().map_err(|_| bad("step"))?;
        cells
            .entry((fields[0].to_string(), fields[1].to_string()))
            .or_default()
            .insert((i, j), r);
    }
    let mut out = Vec::new();
    for ((estimator, step_str), grid) in cells {
        let m = grid.keys().map(|&(_, j)| j).max().unwrap_or(0);
        let mut arr = ndarray::Array2::<f64>::zeros((m + 1, m));
        for i in 0..=m {
            for j in 1..=m {
                let v = grid.get(&(i, j)).ok_or_else(|| {
                    Error::Parse(format!(
                        "accuracy grid for {estimator} (step {step_str}) is missing entry ({i},{j})"
                    ))
                })?;
                arr[[i, j - 1]] = *v;
            }
        }
        let step: f64 = step_str.parse().expect("validated above");
        out.push((estimator, step, crate::metrics::AccuracyMatrix::new(arr)?));
    }
    Ok(out)
}

pub fn write_manifest(
    dir: &Path,
    seed: u64,
    config_echo: &str,
    notes: &[String],
) -> Result<PathBuf> {
    let path = dir.join("manifest.txt");
    let mut out = create(&path)?;
    writeln!(out, "version: {} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))?;
    writeln!(out, "master_seed: {seed}")?;
    for note in notes {
        writeln!(out, "note: {note}")?;
    }
    writeln!(out, "--- config ---")?;
    out.write_all(config_echo.as_bytes())?;
    out.flush()?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_skips_failed_reps() {
        let rows = vec![
            CurveRow { rep: 0, algorithm: "msni".into(), k: 5, mse: 1.0, deviation: 0.0 },
            CurveRow { rep: 1, algorithm: "msni".into(), k: 5, mse: 3.0, deviation: 0.0 },
            CurveRow { rep: 2, algorithm: "msni".into(), k: 5, mse: f64::NAN, deviation: 0.0 },
        ];
        let summary = summarize(&rows);
        assert_eq!(summary.len(), 1);
        assert_eq!(summary[0].mean_mse, 2.0);
        assert!((summary[0].sd_mse - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn curve_file_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curves.csv");
        write_curves(
            &path,
            &[CurveRow { rep: 0, algorithm: "osni".into(), k: 1, mse: 0.5, deviation: 0.25 }],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "rep,algorithm,k,mse,deviation\n0,osni,1,0.5,0.25\n");
    }
}
