use std::collections::BTreeMap;

use drillmae::ingest::forge_channels;
use drillmae::mae::{build_autoencoder, pretrain, MaeConfig};
use drillmae::nn::snapshot::layers_digest;
use drillmae::nn::TrainConfig;
use drillmae::segmentation::{segment_well, SegmentationParams};
use drillmae::synthetic::{two_well_dataset, SyntheticTarget};
use drillmae::transfer::{build_finetune_model, extract_encoder, finetune, finetune_composite, TaskHeadSpec};
use drillmae::windows::{prepare, PreparedData, WindowLayout, WindowParams};

fn data() -> PreparedData {
    let wells = two_well_dataset(8_000, SyntheticTarget::CopyOf("Total Pump Output".into()), 11);
    let per_well: BTreeMap<_, _> = wells
        .iter()
        .map(|w| (w.well_id.clone(), segment_well(w, &SegmentationParams::default()).unwrap()))
        .collect();
    let params = WindowParams {
        window_len: 20,
        stride: 10,
        ..WindowParams::default()
    };
    prepare(&per_well, &WindowLayout::from_specs(&forge_channels()).unwrap(), &params, 2).unwrap()
}

#[test]
fn cached_features_match_composite_training() {
    let d = data();
    for name in ["ae1-lat50-hd1-GRU-m20", "ae2-lat80-hd2-LSTM-m50"] {
        let cfg: MaeConfig = name.parse().unwrap();
        let mut ae = build_autoencoder(&cfg, d.train.features(), d.train.window_len(), 1).unwrap();
        let s1 = TrainConfig { max_epochs: 1, seed: 2, ..TrainConfig::default() };
        pretrain(&mut ae, &d.train.unlabeled(), &d.validation.unlabeled(), cfg.mask_fraction(), &s1).unwrap();
        let enc = extract_encoder(&ae, cfg.encoder_depth as usize).unwrap();
        let head = TaskHeadSpec::new(cfg.header_depth as usize, cfg.cell);
        let s2 = TrainConfig { max_epochs: 3, seed: 3, ..TrainConfig::default() };

        let mut fast = build_finetune_model(&enc, &head, 4).unwrap();
        let mut slow = fast.clone();
        let a = finetune(&mut fast, &d.train, &d.validation, &s2).unwrap();
        let b = finetune_composite(&mut slow, &d.train, &d.validation, &s2).unwrap();

        assert_eq!(a.epochs_run(), b.epochs_run(), "{name}");
        for (x, y) in a.epochs.iter().zip(&b.epochs) {
            assert!((x.train_loss - y.train_loss).abs() < 1e-4, "{name}: {x:?} vs {y:?}");
            assert!((x.val_loss - y.val_loss).abs() < 1e-4, "{name}: {x:?} vs {y:?}");
        }
        let depth = enc.depth();
        assert_eq!(layers_digest(&fast.layers()[..depth]), enc.digest());
        assert_eq!(layers_digest(&slow.layers()[..depth]), enc.digest());
        for (p, q) in fast.params().zip(slow.params()) {
            let diff = p.value.iter().zip(q.value.iter()).fold(0.0f32, |m, (a, b)| m.max((a - b).abs()));
            assert!(diff < 1e-3, "{name}: parameter drift {diff}");
        }
    }
}
