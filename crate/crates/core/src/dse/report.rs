//! Delimited-text report files.
//!
//! | file | columns |
//! |------|---------|
//! | `ledger.csv` | name, kind, encoder_depth, latent_percent, header_depth, cell, mask_percent, seed, test_mae, test_rmse, val_mae, stage1_epochs, stage2_epochs, wall_time_s, nan, error |
//! | `ranking.csv` | rank, name, test_mae, test_rmse, delta_vs_lstm, delta_vs_gru, nan |
//! | `boxplot_<dim>.csv` | dimension, level, n, min, q1, median, q3, max, whisker_low, whisker_high, beats_lstm, beats_gru, outliers |
//! | `dimension_correlations.csv` | dimension, metric, pearson_r |
//! | `correlation_matrix.csv` | variable, then one column per variable |
//!
//! Deltas are fractions (`-0.198` is 19.8 % better). Floats are written in
//! shortest round-trip form; undefined correlations are written as `NA`;
//! outliers are `;`-separated.

use std::path::{Path, PathBuf};

use super::analysis::{correlation_matrix, dimension_analysis, rank_and_compare};
use super::{ModelTag, RunRecord};
use crate::error::{Error, Result};

pub const LEDGER_HEADER: [&str; 16] = [
    "name",
    "kind",
    "encoder_depth",
    "latent_percent",
    "header_depth",
    "cell",
    "mask_percent",
    "seed",
    "test_mae",
    "test_rmse",
    "val_mae",
    "stage1_epochs",
    "stage2_epochs",
    "wall_time_s",
    "nan",
    "error",
];

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_ledger(path: &Path, records: &[RunRecord]) -> Result<()> {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let (kind, dims, cell) = match &r.tag {
                ModelTag::Mae(c) => (
                    "mae",
                    [
                        c.encoder_depth.to_string(),
                        c.latent_percent.to_string(),
                        c.header_depth.to_string(),
                    ],
                    (c.cell.to_string(), c.mask_percent.to_string()),
                ),
                ModelTag::Baseline(cell) => (
                    "baseline",
                    [String::new(), String::new(), String::new()],
                    (cell.to_string(), String::new()),
                ),
            };
            vec![
                r.name(),
                kind.to_string(),
                dims[0].clone(),
                dims[1].clone(),
                dims[2].clone(),
                cell.0,
                cell.1,
                r.seed.to_string(),
                r.test_mae.to_string(),
                r.test_rmse.to_string(),
                r.val_mae.to_string(),
                r.stage1_epochs.to_string(),
                r.stage2_epochs.to_string(),
                r.wall_time_s.to_string(),
                u8::from(r.nan).to_string(),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect();
    write_rows(path, &LEDGER_HEADER, &rows)
}

pub fn read_ledger(path: &Path) -> Result<Vec<RunRecord>> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != LEDGER_HEADER {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "unexpected ledger header".into(),
        });
    }
    let bad = |what: &str, line: usize| Error::Format {
        path: path.to_path_buf(),
        reason: format!("row {line}: bad {what}"),
    };
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = i + 2;
        let f = |k: usize| rec.get(k).unwrap_or("");
        let num = |k: usize| f(k).parse::<f64>().map_err(|_| bad(LEDGER_HEADER[k], line));
        let int = |k: usize| f(k).parse::<usize>().map_err(|_| bad(LEDGER_HEADER[k], line));
        out.push(RunRecord {
            tag: f(0).parse().map_err(|_| bad("name", line))?,
            seed: f(7).parse().map_err(|_| bad("seed", line))?,
            test_mae: num(8)?,
            test_rmse: num(9)?,
            val_mae: num(10)?,
            stage1_epochs: int(11)?,
            stage2_epochs: int(12)?,
            wall_time_s: num(13)?,
            nan: f(14) == "1",
            error: Some(f(15).to_string()).filter(|s| !s.is_empty()),
        });
    }
    Ok(out)
}

/// Writes every analysis file derived from `records` into `out_dir`
/// (ledger excluded) and returns the paths written.
pub fn emit_reports(records: &[RunRecord], out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let ranking = rank_and_compare(records)?;
    let path = out_dir.join("ranking.csv");
    let rows: Vec<Vec<String>> = ranking
        .iter()
        .map(|r| {
            vec![
                r.rank.to_string(),
                r.name.clone(),
                r.test_mae.to_string(),
                r.test_rmse.to_string(),
                r.delta_vs_lstm.to_string(),
                r.delta_vs_gru.to_string(),
                u8::from(r.nan).to_string(),
            ]
        })
        .collect();
    write_rows(
        &path,
        &["rank", "name", "test_mae", "test_rmse", "delta_vs_lstm", "delta_vs_gru", "nan"],
        &rows,
    )?;
    written.push(path);

    let dims = dimension_analysis(records)?;
    let mut corr_rows = Vec::new();
    for d in &dims {
        let name = d.dimension.name();
        let rows: Vec<Vec<String>> = d
            .levels
            .iter()
            .map(|l| {
                let b = &l.test_mae;
                vec![
                    name.to_string(),
                    l.level.clone(),
                    b.n.to_string(),
                    b.min.to_string(),
                    b.q1.to_string(),
                    b.median.to_string(),
                    b.q3.to_string(),
                    b.max.to_string(),
                    b.whisker_low.to_string(),
                    b.whisker_high.to_string(),
                    l.beats_lstm.to_string(),
                    l.beats_gru.to_string(),
                    b.outliers.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
                ]
            })
            .collect();
        let path = out_dir.join(format!("boxplot_{name}.csv"));
        write_rows(
            &path,
            &[
                "dimension", "level", "n", "min", "q1", "median", "q3", "max", "whisker_low",
                "whisker_high", "beats_lstm", "beats_gru", "outliers",
            ],
            &rows,
        )?;
        written.push(path);
        for (metric, r) in &d.correlations {
            corr_rows.push(vec![name.to_string(), metric.clone(), opt(*r)]);
        }
    }
    let path = out_dir.join("dimension_correlations.csv");
    write_rows(&path, &["dimension", "metric", "pearson_r"], &corr_rows)?;
    written.push(path);

    let m = correlation_matrix(records);
    let mut header = vec!["variable"];
    header.extend(m.names.iter().map(String::as_str));
    let rows: Vec<Vec<String>> = m
        .names
        .iter()
        .zip(&m.values)
        .map(|(n, row)| {
            let mut r = vec![n.clone()];
            r.extend(row.iter().map(|v| opt(*v)));
            r
        })
        .collect();
    let path = out_dir.join("correlation_matrix.csv");
    write_rows(&path, &header, &rows)?;
    written.push(path);
    Ok(written)
}
