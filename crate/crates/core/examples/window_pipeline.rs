//! Segments, normalization statistics, windows and the split for two wells.

use std::collections::{BTreeMap, BTreeSet};

use anyhow::Result;
use drillmae::ingest::forge_channels;
use drillmae::segmentation::{segment_well, SegmentationParams};
use drillmae::synthetic::{two_well_dataset, SyntheticTarget};
use drillmae::windows::{prepare, WindowLayout, WindowParams};

fn main() -> Result<()> {
    let wells = two_well_dataset(30_000, SyntheticTarget::MudVolume, 3);
    let mut per_well = BTreeMap::new();
    for w in &wells {
        per_well.insert(w.well_id.clone(), segment_well(w, &SegmentationParams::default())?);
    }
    let layout = WindowLayout::from_specs(&forge_channels())?;
    println!("inputs {:?}, target {:?}", layout.inputs, layout.target);

    let params = WindowParams {
        window_len: 120,
        stride: 4,
        ..WindowParams::default()
    };
    let data = prepare(&per_well, &layout, &params, 42)?;
    for (name, lo, hi) in data.stats.channels.iter().zip(&data.stats.min).zip(&data.stats.max).map(|((n, a), b)| (n, a, b)) {
        println!("  {name:<20} min {lo:>10.3} max {hi:>10.3}");
    }
    for set in [&data.train, &data.validation, &data.test] {
        let mut by_well: BTreeMap<String, usize> = BTreeMap::new();
        for w in &set.windows {
            *by_well.entry(w.well_id().to_string()).or_default() += 1;
        }
        println!("{:<10} {:>5} windows {:?}", set.split.to_string(), set.len(), by_well);
    }
    let train: BTreeSet<_> = data.train.ids().into_iter().collect();
    let overlap = data.test.ids().iter().filter(|id| train.contains(*id)).count();
    println!("train/test overlap: {overlap}");
    Ok(())
}
