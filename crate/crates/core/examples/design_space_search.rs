//! A small design-space search: four configurations plus both baselines,
//! run in parallel, then ranked and written as report files.
//!
//! cargo run --release --example design_space_search -- [OUT_DIR]

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Result;
use drillmae::dse::analysis::rank_and_compare;
use drillmae::dse::report::{emit_reports, write_ledger};
use drillmae::dse::{run_all, PipelineRunner, SearchSettings};
use drillmae::ingest::forge_channels;
use drillmae::mae::MaeConfig;
use drillmae::segmentation::{segment_well, SegmentationParams};
use drillmae::synthetic::{two_well_dataset, SyntheticTarget};
use drillmae::transfer::TestSet;
use drillmae::windows::{prepare, WindowLayout, WindowParams};

fn main() -> Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "dse-demo".into()));
    let wells = two_well_dataset(20_000, SyntheticTarget::CopyOf("Total Pump Output".into()), 7);
    let mut per_well = BTreeMap::new();
    for w in &wells {
        per_well.insert(w.well_id.clone(), segment_well(w, &SegmentationParams::default())?);
    }
    let params = WindowParams {
        window_len: 40,
        stride: 4,
        ..WindowParams::default()
    };
    let data = prepare(&per_well, &WindowLayout::from_specs(&forge_channels())?, &params, 1)?;
    let test = TestSet::new(data.test.clone());

    let mut settings = SearchSettings::default();
    settings.pretrain.max_epochs = 4;
    settings.finetune.max_epochs = 6;
    settings.baseline.max_epochs = 4;
    let runner = PipelineRunner {
        data: &data,
        test: &test,
        settings,
        snapshot_dir: None,
    };
    let grid: Vec<MaeConfig> = ["ae1-lat80-hd1-GRU-m20", "ae1-lat20-hd1-GRU-m20", "ae2-lat80-hd2-LSTM-m50", "ae1-lat50-hd1-LSTM-m80"]
        .iter()
        .map(|s| s.parse())
        .collect::<Result<_, _>>()?;
    let records = run_all(&grid, &runner, 2024, 4)?;
    println!("{} models, test set read {} times", records.len(), test.reads());
    for row in rank_and_compare(&records)? {
        println!(
            "{:>2} {:<24} MAE {:.5}  vs LSTM {:+6.1}%  vs GRU {:+6.1}%",
            row.rank,
            row.name,
            row.test_mae,
            100.0 * row.delta_vs_lstm,
            100.0 * row.delta_vs_gru
        );
    }
    std::fs::create_dir_all(&out)?;
    write_ledger(&out.join("ledger.csv"), &records)?;
    for f in emit_reports(&records, &out)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}
