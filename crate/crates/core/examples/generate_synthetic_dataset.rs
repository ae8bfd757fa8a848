//! Writes the bundled two-well synthetic dataset plus a ready-to-run manifest.
//!
//! cargo run --release --example generate_synthetic_dataset -- [DIR] [SAMPLES]
//! cargo run --release -- --manifest DIR/manifest.txt dse

use std::path::PathBuf;

use anyhow::{Context, Result};
use drillmae::ingest::write_well;
use drillmae::synthetic::{two_well_dataset, SyntheticTarget};

fn main() -> Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "synthetic-data".into()));
    let samples: usize = args.next().map_or(Ok(50_000), |s| s.parse()).context("SAMPLES")?;
    std::fs::create_dir_all(&dir)?;

    let mut manifest = String::from("# two synthetic wells; target copies Total Pump Output\n");
    for well in two_well_dataset(samples, SyntheticTarget::CopyOf("Total Pump Output".into()), 7) {
        let file = format!("{}.csv", well.well_id);
        write_well(&well, &dir.join(&file))?;
        manifest.push_str(&format!("well.{} = {file}\n", well.well_id));
        println!("{}: {} rows -> {}", well.well_id, well.len(), dir.join(&file).display());
    }
    manifest.push_str(
        "window.len = 60\n\
         window.stride = 3\n\
         train.pretrain_epochs = 10\n\
         train.finetune_epochs = 15\n\
         grid = ae1-lat80-hd1-GRU-m20, ae1-lat80-hd2-GRU-m20, ae2-lat80-hd1-LSTM-m50, ae1-lat50-hd1-LSTM-m20\n\
         seed = 1\n\
         workers = 4\n\
         out = runs\n",
    );
    std::fs::write(dir.join("manifest.txt"), manifest)?;
    println!("manifest: {}", dir.join("manifest.txt").display());
    Ok(())
}
