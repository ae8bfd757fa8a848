//! Stage 1: masked reconstruction pretraining of one autoencoder.

use std::collections::BTreeMap;

use anyhow::Result;
use drillmae::ingest::forge_channels;
use drillmae::mae::{apply_mask, build_autoencoder, pretrain, width_schedule, MaeConfig};
use drillmae::nn::TrainConfig;
use drillmae::rng::rng_from;
use drillmae::segmentation::{segment_well, SegmentationParams};
use drillmae::synthetic::{two_well_dataset, SyntheticTarget};
use drillmae::windows::{prepare, WindowLayout, WindowParams};

fn main() -> Result<()> {
    let cfg: MaeConfig = std::env::args().nth(1).unwrap_or_else(|| "ae2-lat80-hd1-LSTM-m50".into()).parse()?;
    let wells = two_well_dataset(20_000, SyntheticTarget::MudVolume, 5);
    let mut per_well = BTreeMap::new();
    for w in &wells {
        per_well.insert(w.well_id.clone(), segment_well(w, &SegmentationParams::default())?);
    }
    let params = WindowParams {
        window_len: 60,
        stride: 6,
        ..WindowParams::default()
    };
    let data = prepare(&per_well, &WindowLayout::from_specs(&forge_channels())?, &params, 5)?;
    let (steps, features) = (data.train.window_len(), data.train.features());

    let schedule = width_schedule(features, &cfg)?;
    println!("{cfg}: widths {:?}, latent {}", schedule.widths, schedule.latent);

    let first = &data.train.unlabeled()[0];
    let (masked, sample) = apply_mask(first.inputs(), cfg.mask_fraction(), &mut rng_from(1));
    println!(
        "masking {} of {} values; first masked row: {:?}",
        sample.len(),
        steps * features,
        masked.row(sample.positions[0].0).to_vec()
    );

    let mut ae = build_autoencoder(&cfg, features, steps, 1)?;
    println!("{} parameters", ae.param_count());
    let tc = TrainConfig {
        max_epochs: 8,
        seed: 2,
        ..TrainConfig::default()
    };
    let report = pretrain(&mut ae, &data.train.unlabeled(), &data.validation.unlabeled(), cfg.mask_fraction(), &tc)?;
    for e in &report.epochs {
        println!("epoch {:>2}: train {:.5}  val {:.5}", e.epoch, e.train_loss, e.val_loss);
    }
    println!("kept epoch {:?} (val {:.5})", report.best_epoch, report.best_val_loss);
    Ok(())
}
