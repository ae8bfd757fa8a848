//! Analysis and report files from a ledger. Without an argument a synthetic
//! 72-configuration ledger is fabricated, where test MAE shrinks with latent
//! width and grows with mask ratio.
//!
//! cargo run --example report -- [LEDGER.csv] [OUT_DIR]

use std::path::PathBuf;

use anyhow::Result;
use drillmae::dse::analysis::{correlation_matrix, dimension_analysis, rank_and_compare};
use drillmae::dse::report::{emit_reports, read_ledger};
use drillmae::dse::{enumerate_grid, ModelTag, RunRecord};
use drillmae::nn::CellKind;
use drillmae::rng::rng_from;
use rand::Rng;

fn fabricate() -> Vec<RunRecord> {
    let mut rng = rng_from(3);
    let mut records: Vec<RunRecord> = enumerate_grid()
        .into_iter()
        .map(|c| {
            let mae = 0.05 - 0.02 * c.latent_fraction() + 0.01 * c.mask_fraction() + rng.gen_range(0.0..0.006);
            RunRecord {
                test_mae: mae,
                test_rmse: 1.4 * mae,
                val_mae: mae * 0.95,
                stage1_epochs: 10,
                stage2_epochs: 15,
                nan: false,
                ..RunRecord::failed(ModelTag::Mae(c), 0, None)
            }
        })
        .collect();
    for (cell, mae) in [(CellKind::Lstm, 0.0196), (CellKind::Gru, 0.026)] {
        records.push(RunRecord {
            test_mae: mae,
            test_rmse: 1.3 * mae,
            val_mae: mae,
            nan: false,
            ..RunRecord::failed(ModelTag::Baseline(cell), 0, None)
        });
    }
    records
}

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let records = match args.next() {
        Some(path) => read_ledger(path.as_ref())?,
        None => fabricate(),
    };
    let out = PathBuf::from(args.next().unwrap_or_else(|| "report-demo".into()));

    for row in rank_and_compare(&records)?.iter().take(5) {
        println!("{:>2} {:<24} {:.5} ({:+.1}% vs GRU)", row.rank, row.name, row.test_mae, 100.0 * row.delta_vs_gru);
    }
    for d in dimension_analysis(&records)? {
        let medians: Vec<String> = d.levels.iter().map(|l| format!("{}={:.5}", l.level, l.median_test_mae)).collect();
        let r = d.correlations[0].1.map_or("NA".into(), |r| format!("{r:+.2}"));
        println!("{:<15} r(test_mae)={r:<6} medians {}", d.dimension.name(), medians.join(" "));
    }
    let m = correlation_matrix(&records);
    println!("correlation matrix over {:?}", m.names);
    for f in emit_reports(&records, &out)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}
