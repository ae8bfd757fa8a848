//! Stage 1 + Stage 2: pretrain, freeze the encoder, fit a task header and
//! evaluate once on the held-out windows.

use std::collections::BTreeMap;

use anyhow::{ensure, Result};
use drillmae::ingest::forge_channels;
use drillmae::mae::{build_autoencoder, pretrain, MaeConfig};
use drillmae::nn::snapshot::layers_digest;
use drillmae::nn::TrainConfig;
use drillmae::segmentation::{segment_well, SegmentationParams};
use drillmae::synthetic::{two_well_dataset, SyntheticTarget};
use drillmae::transfer::{build_finetune_model, extract_encoder, finetune, TaskHeadSpec, TestSet};
use drillmae::windows::{prepare, WindowLayout, WindowParams};

fn main() -> Result<()> {
    let cfg: MaeConfig = "ae1-lat80-hd2-GRU-m20".parse()?;
    let wells = two_well_dataset(30_000, SyntheticTarget::CopyOf("Total Pump Output".into()), 7);
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
    let (steps, features) = (data.train.window_len(), data.train.features());

    let mut ae = build_autoencoder(&cfg, features, steps, 3)?;
    let s1 = TrainConfig { max_epochs: 10, seed: 4, ..TrainConfig::default() };
    let r1 = pretrain(&mut ae, &data.train.unlabeled(), &data.validation.unlabeled(), cfg.mask_fraction(), &s1)?;
    println!("stage 1: {} epochs, reconstruction MAE {:.5}", r1.epochs_run(), r1.best_val_loss);

    let enc = extract_encoder(&ae, cfg.encoder_depth as usize)?;
    let digest = enc.digest();
    let head = TaskHeadSpec::new(cfg.header_depth as usize, cfg.cell);
    let mut model = build_finetune_model(&enc, &head, 5)?;
    println!(
        "fine-tune model: {} parameters, {} trainable",
        model.param_count(),
        model.trainable_param_count()
    );
    let s2 = TrainConfig { max_epochs: 15, seed: 6, ..TrainConfig::default() };
    let r2 = finetune(&mut model, &data.train, &data.validation, &s2)?;
    ensure!(layers_digest(&model.layers()[..enc.depth()]) == digest, "encoder changed");
    println!("stage 2: {} epochs, validation MAE {:.5}", r2.epochs_run(), r2.best_val_loss);

    let e = test.evaluate_finetuned(&model, 256)?;
    println!("test MAE {:.5}, RMSE {:.5} over {} windows", e.mae, e.rmse, e.n);
    Ok(())
}
