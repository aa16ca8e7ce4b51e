//! Plot-ready CSV export of run traces and value-function heatmaps.

use std::io::Write;
use std::path::Path;

use nalgebra::DVector;

use crate::engine::RunTrace;
use crate::error::{Error, Result};
use crate::mdp::FeatureMap;

/// Writes a float with 17 significant digits, enough to round-trip f64
/// bit-exactly.
fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes the per-iteration trace as CSV. The header carries the metric
/// columns followed by one `w_agent_<i>_<j>` column per recorded w component
/// (1-indexed, omitted when block recording was disabled for size).
pub fn export_trace(trace: &RunTrace, num_agents: usize, path: &Path) -> Result<()> {
    let q = if num_agents > 0 && !trace.records.is_empty() {
        trace.records[0].w_agents.len() / num_agents
    } else {
        0
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let mut header = "k,consensus_penalty,theta_err,v_norm,w_err,gap_proxy".to_string();
    for i in 1..=num_agents {
        for j in 1..=q {
            header.push_str(&format!(",w_agent_{i}_{j}"));
        }
    }
    writeln!(out, "{header}")?;
    for rec in &trace.records {
        let mut line = format!(
            "{},{},{},{},{},{}",
            rec.k,
            fmt(rec.consensus_penalty),
            fmt(rec.theta_err),
            fmt(rec.v_norm),
            fmt(rec.w_err),
            fmt(rec.gap_proxy)
        );
        for x in &rec.w_agents {
            line.push(',');
            line.push_str(&fmt(*x));
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Parses a trace CSV back into numeric rows (header skipped).
pub fn parse_trace_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for line in text.lines().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|f| f.parse::<f64>()).collect();
        rows.push(row.map_err(|e| Error::Config(format!("bad CSV field: {e}")))?);
    }
    Ok(rows)
}

/// Writes the value estimate Phi w of one agent reshaped to a rows x cols
/// grid (row-major states), one CSV row per grid row.
pub fn export_value_heatmap(
    feats: &FeatureMap,
    w_block: &DVector<f64>,
    rows: usize,
    cols: usize,
    path: &Path,
) -> Result<()> {
    if rows * cols != feats.num_states() {
        return Err(Error::DimensionMismatch(format!(
            "heatmap grid {rows}x{cols} does not cover {} states",
            feats.num_states()
        )));
    }
    let values = feats.phi() * w_block;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in 0..rows {
        let line: Vec<String> = (0..cols).map(|c| fmt(values[r * cols + c])).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{OutputSelect, TraceRecord};
    use crate::saddle::StackedIterate;
    use nalgebra::DMatrix;

    fn tiny_trace() -> RunTrace {
        // Constants chosen to need the full 17 significant digits.
        let rec = |k: usize| TraceRecord {
            k,
            consensus_penalty: 0.1 * k as f64 + 1.0 / 3.0,
            theta_err: (k as f64).exp(),
            v_norm: 0.5,
            w_err: 1e-17 + k as f64,
            gap_proxy: -0.25,
            w_agents: vec![0.1 * k as f64, std::f64::consts::PI / 7.0, 2.0, 3.0],
            avg_consensus_penalty: 0.0,
            avg_gap_proxy: 0.0,
        };
        RunTrace {
            records: vec![rec(0), rec(1), rec(2)],
            averaged: StackedIterate::zeros(4),
            last: StackedIterate::zeros(4),
            empirical_c: 1.0,
            iterations: 3,
            stride: 1,
            seed: 7,
            output: OutputSelect::Both,
        }
    }

    #[test]
    fn trace_csv_rows_and_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let trace = tiny_trace();
        export_trace(&trace, 2, &path).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "k,consensus_penalty,theta_err,v_norm,w_err,gap_proxy,w_agent_1_1,w_agent_1_2,w_agent_2_1,w_agent_2_2"
        );
        assert_eq!(lines.count(), 3);

        let rows = parse_trace_csv(&path).unwrap();
        assert_eq!(rows.len(), 3);
        for (rec, row) in trace.records.iter().zip(&rows) {
            assert_eq!(row[0], rec.k as f64);
            assert_eq!(row[1].to_bits(), rec.consensus_penalty.to_bits());
            assert_eq!(row[2].to_bits(), rec.theta_err.to_bits());
            assert_eq!(row[5].to_bits(), rec.gap_proxy.to_bits());
            for (a, b) in rec.w_agents.iter().zip(&row[6..]) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn heatmap_reshapes_row_major() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("heat.csv");
        // 2x3 grid, tabular features: values are the weights themselves.
        let feats = FeatureMap::identity(6);
        let w = DVector::from_row_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        export_value_heatmap(&feats, &w, 2, 3, &path).unwrap();
        let rows = std::fs::read_to_string(&path).unwrap();
        let parsed: Vec<Vec<f64>> = rows
            .lines()
            .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
            .collect();
        assert_eq!(parsed, vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        // Non-tabular features produce Phi w.
        let phi = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
        let feats2 = FeatureMap::new(phi).unwrap();
        let path2 = dir.path().join("heat2.csv");
        export_value_heatmap(&feats2, &DVector::from_row_slice(&[3.0]), 1, 2, &path2).unwrap();
        let text = std::fs::read_to_string(&path2).unwrap();
        let vals: Vec<f64> = text
            .trim()
            .split(',')
            .map(|f| f.parse().unwrap())
            .collect();
        assert_eq!(vals, vec![3.0, 6.0]);
    }

    #[test]
    fn mismatched_grid_is_rejected() {
        let feats = FeatureMap::identity(6);
        let w = DVector::zeros(6);
        let dir = tempfile::tempdir().unwrap();
        let err = export_value_heatmap(&feats, &w, 2, 2, &dir.path().join("x.csv"));
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
    }
}
