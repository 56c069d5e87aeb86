//! Run artifacts: CSV logs, resistance snapshots, and SVG renderings.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::svg::{self, Series};
use super::{csv_records, parse_field, DataError};
use crate::engine::RunLog;
use crate::Matrix;

pub const ACCURACY: &str = "accuracy.csv";
pub const WEIGHTS_TRACE: &str = "weights_trace.csv";
pub const FIRE_HISTORY: &str = "fire_history.csv";
pub const SNAPSHOT_PRE: &str = "resistance_snapshot_pre.csv";
pub const SNAPSHOT_POST: &str = "resistance_snapshot_post.csv";
pub const HEATMAP: &str = "resistance_heatmap.svg";
pub const SUMMARY: &str = "run_summary.json";

/// Files [`write_artifacts`] produces, in write order.
pub const ARTIFACTS: [&str; 7] = [ACCURACY, WEIGHTS_TRACE, FIRE_HISTORY, SNAPSHOT_PRE, SNAPSHOT_POST, HEATMAP, SUMMARY];

pub const ANALYSIS_SVGS: [&str; 4] =
    ["accuracy_curve.svg", "weight_traces.svg", "resistance_heatmap_pre.svg", "resistance_heatmap_post.svg"];

/// One line per matrix row, values in shortest round-trip form.
pub fn write_snapshot(m: &Matrix) -> String {
    let mut out = String::with_capacity(m.rows() * m.cols() * 8);
    for r in 0..m.rows() {
        for (c, v) in m.row(r).iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn parse_snapshot(text: &str) -> Result<Matrix, DataError> {
    let mut data = vec![];
    let mut cols = None;
    let mut rows = 0;
    for (line, rec) in csv_records(text, false)? {
        if *cols.get_or_insert(rec.len()) != rec.len() {
            return Err(DataError::Malformed {
                line,
                reason: format!("expected {} values, found {}", cols.unwrap_or(0), rec.len()),
            });
        }
        for raw in rec.iter() {
            let v: f64 = parse_field(line, "resistance", raw)?;
            if v.is_nan() || v <= 0.0 {
                return Err(DataError::Malformed { line, reason: format!("resistance {raw} must be positive") });
            }
            data.push(v);
        }
        rows += 1;
    }
    let Some(cols) = cols else {
        return Err(DataError::Malformed { line: 1, reason: "snapshot is empty".into() });
    };
    Ok(Matrix::from_vec(rows, cols, data))
}

pub fn accuracy_csv(log: &RunLog) -> String {
    let mut out = String::from("epoch,train_acc,test_acc\n");
    for e in &log.epochs {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{}", e.epoch, opt(e.train_acc), opt(e.test_acc)).unwrap();
    }
    out
}

pub fn weights_trace_csv(log: &RunLog) -> String {
    let mut out = String::from("epoch,synapse,conductance\n");
    for t in &log.traces {
        writeln!(out, "{},{}-{},{}", t.epoch, t.pre, t.post, t.conductance).unwrap();
    }
    out
}

pub fn fire_history_csv(log: &RunLog) -> String {
    let mut out = String::from("epoch,presentation,sample,label,winner\n");
    for f in &log.fires {
        let winner = f.winner.map(|w| w.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{},{winner}", f.epoch, f.presentation, f.sample, f.label).unwrap();
    }
    out
}

/// Switching curves as CSV: a `pulse` column, then one column per amplitude.
pub fn characterize_csv(amplitudes: &[f64], curves: &[Vec<f64>]) -> String {
    let mut out = String::from("pulse");
    for a in amplitudes {
        write!(out, ",r_at_{a}v").unwrap();
    }
    out.push('\n');
    let len = curves.iter().map(Vec::len).max().unwrap_or(0);
    for k in 0..len {
        write!(out, "{k}").unwrap();
        for c in curves {
            match c.get(k) {
                Some(r) => write!(out, ",{r}").unwrap(),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct Summary<'a> {
    config_digest: &'a str,
    seed: u64,
    mode: &'a str,
    scheme: &'a str,
    epochs: usize,
    presentations: usize,
    train_acc: Option<f64>,
    test_acc: Option<f64>,
    programming: &'a crate::engine::ProgrammingStats,
}

pub fn summary_json(log: &RunLog) -> String {
    let last = log.epochs.last();
    let summary = Summary {
        config_digest: &log.config_digest,
        seed: log.seed,
        mode: log.mode.as_str(),
        scheme: log.scheme.as_str(),
        epochs: log.epochs.iter().filter(|e| e.epoch > 0).count(),
        presentations: log.fires.len(),
        train_acc: last.and_then(|e| e.train_acc),
        test_acc: last.and_then(|e| e.test_acc),
        programming: &log.stats,
    };
    let mut s = serde_json::to_string_pretty(&summary).expect("summary serializes");
    s.push('\n');
    s
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, DataError> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| DataError::Io { path: path.clone(), source: e })?;
    Ok(path)
}

/// Writes every artifact of `log` into `dir`, creating it if needed.
pub fn write_artifacts(log: &RunLog, dir: &Path) -> Result<Vec<PathBuf>, DataError> {
    std::fs::create_dir_all(dir).map_err(|e| DataError::Io { path: dir.to_path_buf(), source: e })?;
    Ok(vec![
        write_file(dir, ACCURACY, &accuracy_csv(log))?,
        write_file(dir, WEIGHTS_TRACE, &weights_trace_csv(log))?,
        write_file(dir, FIRE_HISTORY, &fire_history_csv(log))?,
        write_file(dir, SNAPSHOT_PRE, &write_snapshot(&log.snapshot_pre))?,
        write_file(dir, SNAPSHOT_POST, &write_snapshot(&log.snapshot_post))?,
        write_file(dir, HEATMAP, &svg::heatmap(&log.snapshot_post, "resistance after training (ohm)"))?,
        write_file(dir, SUMMARY, &summary_json(log))?,
    ])
}

fn parse_accuracy(text: &str) -> Result<(Series, Series), DataError> {
    let mut train = Series { name: "train".into(), points: vec![] };
    let mut test = Series { name: "test".into(), points: vec![] };
    for (line, rec) in csv_records(text, true)? {
        if rec.len() != 3 {
            return Err(DataError::Malformed { line, reason: "expected epoch,train_acc,test_acc".into() });
        }
        let epoch: f64 = parse_field(line, "epoch", &rec[0])?;
        if !rec[1].is_empty() {
            train.points.push((epoch, parse_field(line, "train_acc", &rec[1])?));
        }
        if !rec[2].is_empty() {
            test.points.push((epoch, parse_field(line, "test_acc", &rec[2])?));
        }
    }
    Ok((train, test))
}

fn parse_traces(text: &str) -> Result<Vec<Series>, DataError> {
    let mut series: Vec<Series> = vec![];
    for (line, rec) in csv_records(text, true)? {
        if rec.len() != 3 {
            return Err(DataError::Malformed { line, reason: "expected epoch,synapse,conductance".into() });
        }
        let epoch: f64 = parse_field(line, "epoch", &rec[0])?;
        let g: f64 = parse_field(line, "conductance", &rec[2])?;
        let name = format!("synapse {}", &rec[1]);
        match series.iter_mut().find(|s| s.name == name) {
            Some(s) => s.points.push((epoch, g)),
            None => series.push(Series { name, points: vec![(epoch, g)] }),
        }
    }
    Ok(series)
}

/// Renders the analysis SVGs for a run directory from its CSV artifacts
/// alone.
pub fn render_analysis(dir: &Path, out: &Path) -> Result<Vec<PathBuf>, DataError> {
    let needed = [ACCURACY, WEIGHTS_TRACE, SNAPSHOT_PRE, SNAPSHOT_POST];
    let missing: Vec<PathBuf> = needed.iter().map(|n| dir.join(n)).filter(|p| !p.is_file()).collect();
    if !missing.is_empty() {
        return Err(DataError::MissingFiles(missing));
    }
    let text = |name: &str| super::read_text(&dir.join(name));
    let wrap = |name: &str, e: DataError| DataError::Artifact { path: dir.join(name), reason: e.to_string() };

    let (train, test) = parse_accuracy(&text(ACCURACY)?).map_err(|e| wrap(ACCURACY, e))?;
    let traces = parse_traces(&text(WEIGHTS_TRACE)?).map_err(|e| wrap(WEIGHTS_TRACE, e))?;
    let pre = parse_snapshot(&text(SNAPSHOT_PRE)?).map_err(|e| wrap(SNAPSHOT_PRE, e))?;
    let post = parse_snapshot(&text(SNAPSHOT_POST)?).map_err(|e| wrap(SNAPSHOT_POST, e))?;

    std::fs::create_dir_all(out).map_err(|e| DataError::Io { path: out.to_path_buf(), source: e })?;
    Ok(vec![
        write_file(out, ANALYSIS_SVGS[0], &svg::line_chart(&[train, test], "accuracy", "epoch", "accuracy"))?,
        write_file(out, ANALYSIS_SVGS[1], &svg::line_chart(&traces, "watched synapses", "epoch", "conductance (S)"))?,
        write_file(out, ANALYSIS_SVGS[2], &svg::heatmap(&pre, "resistance before training (ohm)"))?,
        write_file(out, ANALYSIS_SVGS[3], &svg::heatmap(&post, "resistance after training (ohm)"))?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn characterize_csv_layout() {
        let text = characterize_csv(&[-1.2, 0.0], &[vec![11000.0, 9000.5], vec![11000.0]]);
        assert_eq!(text, "pulse,r_at_-1.2v,r_at_0v\n0,11000,11000\n1,9000.5,\n");
    }

    #[test]
    fn uniform_snapshot_is_10000_identical_values() {
        let text = write_snapshot(&Matrix::filled(100, 100, 11000.0));
        let values: Vec<&str> = text.lines().flat_map(|l| l.split(',')).collect();
        assert_eq!(values.len(), 10000);
        assert!(values.iter().all(|&v| v == "11000"));
    }

    #[test]
    fn snapshot_rejects_ragged_and_bad_values() {
        assert!(parse_snapshot("1,2\n3\n").is_err());
        assert!(parse_snapshot("1,-2\n").is_err());
        assert!(parse_snapshot("1,x\n").is_err());
        assert!(parse_snapshot("").is_err());
    }

    #[test]
    fn analysis_lists_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        match render_analysis(dir.path(), dir.path()) {
            Err(DataError::MissingFiles(files)) => assert_eq!(files.len(), 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn snapshot_round_trips(rows in 1usize..8, cols in 1usize..8, seed in proptest::collection::vec(1e-3f64..1e6, 64)) {
            let m = Matrix::from_vec(rows, cols, seed[..rows * cols].to_vec());
            prop_assert_eq!(parse_snapshot(&write_snapshot(&m)).unwrap(), m);
        }
    }
}
