//! The two supervised recurrent baselines trained directly on the target.

use std::collections::BTreeMap;
use std::time::Instant;

use anyhow::Result;
use drillmae::ingest::forge_channels;
use drillmae::nn::{CellKind, TrainConfig};
use drillmae::segmentation::{segment_well, SegmentationParams};
use drillmae::synthetic::{two_well_dataset, SyntheticTarget};
use drillmae::transfer::{build_baseline, train_supervised, TestSet};
use drillmae::windows::{prepare, WindowLayout, WindowParams};

fn main() -> Result<()> {
    let wells = two_well_dataset(20_000, SyntheticTarget::CopyOf("Total Pump Output".into()), 7);
    let mut per_well = BTreeMap::new();
    for w in &wells {
        per_well.insert(w.well_id.clone(), segment_well(w, &SegmentationParams::default())?);
    }
    let params = WindowParams {
        window_len: 60,
        stride: 3,
        ..WindowParams::default()
    };
    let data = prepare(&per_well, &WindowLayout::from_specs(&forge_channels())?, &params, 1)?;
    let test = TestSet::new(data.test.clone());
    for cell in [CellKind::Lstm, CellKind::Gru] {
        let start = Instant::now();
        let mut model = build_baseline(cell, data.train.window_len(), data.train.features(), 1)?;
        let cfg = TrainConfig { max_epochs: 8, seed: 2, ..TrainConfig::default() };
        let r = train_supervised(&mut model, &data.train, &data.validation, &cfg)?;
        let e = test.evaluate(&mut model, 256)?;
        println!(
            "{cell}: {} parameters, {} epochs, test MAE {:.5}, RMSE {:.5} ({:.0}s)",
            model.param_count(),
            r.epochs_run(),
            e.mae,
            e.rmse,
            start.elapsed().as_secs_f64()
        );
    }
    println!("test set read {} times", test.reads());
    Ok(())
}
