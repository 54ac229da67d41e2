use std::io::Write;
use std::path::Path;

use super::{MetricsReport, SimError};
use crate::matrixcore::DenseVector;

/// A named vector series; column headers are `{name}{i}` with 1-based `i`
/// (or just `{name}` for scalar series).
pub struct SeriesColumn<'a> {
    pub name: &'a str,
    pub values: &'a [DenseVector],
}

fn io(e: impl std::fmt::Display) -> SimError {
    SimError::Io(e.to_string())
}

/// Writes one row per step `k`; series shorter than the longest leave
/// trailing cells empty.
pub fn write_trajectories_csv<W: Write>(out: W, columns: &[SeriesColumn<'_>]) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    let dims: Vec<usize> = columns.iter().map(|c| c.values.first().map_or(0, |v| v.len())).collect();
    let mut header = vec!["k".to_string()];
    for (c, &d) in columns.iter().zip(&dims) {
        if d == 1 {
            header.push(c.name.to_string());
        } else {
            header.extend((1..=d).map(|i| format!("{}{i}", c.name)));
        }
    }
    w.write_record(&header).map_err(io)?;
    let rows = columns.iter().map(|c| c.values.len()).max().unwrap_or(0);
    for k in 0..rows {
        let mut rec = vec![k.to_string()];
        for (c, &d) in columns.iter().zip(&dims) {
            match c.values.get(k) {
                Some(v) => rec.extend(v.iter().map(|x| format!("{x:e}"))),
                None => rec.extend(std::iter::repeat_n(String::new(), d)),
            }
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_metrics_json(path: &Path, report: &MetricsReport) -> Result<(), SimError> {
    let text = serde_json::to_string_pretty(report).map_err(io)?;
    std::fs::write(path, text + "\n").map_err(io)
}

/// Reads a headered numeric CSV into one row per record; a column named
/// `k` is treated as the step index and dropped.
pub fn read_series_csv(path: &Path) -> Result<Vec<Vec<f64>>, SimError> {
    let mut r = csv::Reader::from_path(path).map_err(io)?;
    let skip = r.headers().map_err(io)?.iter().position(|h| h.trim() == "k");
    r.records()
        .enumerate()
        .map(|(k, rec)| {
            let rec = rec.map_err(io)?;
            rec.iter()
                .enumerate()
                .filter(|(i, _)| Some(*i) != skip)
                .map(|(_, s)| s.trim().parse::<f64>().map_err(|e| SimError::Parse(format!("row {}: {e}", k + 1))))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let x = vec![DenseVector::from_column_slice(&[1.0, 2.0]); 3];
        let y = vec![DenseVector::from_element(1, 0.5); 2];
        let mut buf = Vec::new();
        write_trajectories_csv(&mut buf, &[SeriesColumn { name: "x", values: &x }, SeriesColumn { name: "y", values: &y }]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,x1,x2,y");
        assert_eq!(lines[1], "0,1e0,2e0,5e-1");
        assert_eq!(lines[3], "2,1e0,2e0,");
    }

    #[test]
    fn series_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "a,b\n1,2\n3.5,-4\n").unwrap();
        assert_eq!(read_series_csv(&p).unwrap(), vec![vec![1.0, 2.0], vec![3.5, -4.0]]);
        std::fs::write(&p, "a\nx\n").unwrap();
        assert!(read_series_csv(&p).is_err());
    }
}
