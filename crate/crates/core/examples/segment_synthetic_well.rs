//! Drilling-activity segmentation on one synthetic well, with the default
//! thresholds and with shorter windows that split at connections.

use anyhow::Result;
use drillmae::segmentation::{base_mask, drilling_mask, segment_well_detailed, SegmentationParams};
use drillmae::synthetic::{generate, SyntheticWell};

fn main() -> Result<()> {
    let well = generate("demo", &SyntheticWell::default(), 11);
    let defaults = SegmentationParams::default();
    let tight = SegmentationParams {
        long_window: 500,
        short_window: 20,
        block_window: 200,
        block_threshold: 0.9,
        gap_limit: 10,
        ..SegmentationParams::default()
    };
    for (label, p) in [("default", &defaults), ("tight", &tight)] {
        let base = base_mask(&well, p)?;
        let keep = drilling_mask(&well, p)?;
        let seg = segment_well_detailed(&well, p)?;
        println!(
            "{label}: {} of {} samples pass the base test, {} survive smoothing",
            base.iter().filter(|&&b| b).count(),
            well.len(),
            keep.iter().filter(|&&b| b).count()
        );
        for s in seg.segments.iter().take(8) {
            println!("  segment at {:>6}, {:>6} samples", s.start_index, s.len());
        }
        if seg.segments.len() > 8 {
            println!("  ... {} segments in total", seg.segments.len());
        }
        for d in &seg.dropped {
            println!("  dropped run at {} ({} samples): `{}` has no finite value", d.start_index, d.len, d.channel);
        }
    }
    Ok(())
}
