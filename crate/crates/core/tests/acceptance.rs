//! One PASS/FAIL line per acceptance criterion, written to stderr so it
//! shows up in `cargo test` output without `--nocapture`.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use common::{max_relative_error, median_oracle, naive_mask, naive_segments, pearson_oracle, random_instance, verdict};
use drillmae::dse::analysis::{median, pearson, percent_delta, rank_and_compare};
use drillmae::dse::{enumerate_grid, ModelTag, RunRecord};
use drillmae::ingest::forge_channels;
use drillmae::mae::{build_autoencoder, mask_count, pretrain, width_schedule, MaeConfig, MaskSample};
use drillmae::nn::snapshot::layers_digest;
use drillmae::nn::{CellKind, TrainConfig};
use drillmae::rng::rng_from;
use drillmae::segmentation::{drilling_mask, segment_well, SegmentationParams};
use drillmae::synthetic::{generate, two_well_dataset, SyntheticTarget, SyntheticWell};
use drillmae::transfer::{
    build_baseline, build_finetune_model, extract_encoder, finetune, train_supervised, TaskHeadSpec, TestSet,
};
use drillmae::windows::{fit_stats, prepare, PreparedData, WindowLayout, WindowParams};
use rand::Rng;

const GRAD_H: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;
const GRAD_FLOOR: f64 = 1e-6;
const MASK_SIGMAS: f64 = 5.0;
const STAT_TOL: f64 = 1e-12;
const BASELINE_MAX_MAE: f64 = 0.02;
const PIPELINE_MAX_MAE: f64 = 0.05;

#[test]
fn gradient_oracle() {
    let start = Instant::now();
    let mut rng = rng_from(20_240_601);
    let mut worst = 0.0f64;
    let mut per_family: BTreeMap<&str, (usize, f64)> = BTreeMap::new();
    for i in 0..100 {
        let inst = random_instance(i, &mut rng);
        let err = max_relative_error(&inst, GRAD_H, GRAD_FLOOR);
        let e = per_family.entry(inst.family).or_default();
        e.0 += 1;
        e.1 = e.1.max(err);
        worst = worst.max(err);
    }
    let secs = start.elapsed().as_secs_f64();
    let ok = worst <= GRAD_TOL && secs < 120.0;
    verdict(
        "gradient oracle",
        ok,
        &format!("100 instances {per_family:?}, worst rel err {worst:.2e} (tol {GRAD_TOL:e}), {secs:.1}s"),
    );
    assert!(ok);
}

#[test]
fn masking_exactness_and_uniformity() {
    let start = Instant::now();
    let mut ok = true;
    let mut notes = Vec::new();
    for (steps, features) in [(4usize, 3usize), (600, 5)] {
        for p in [0.2, 0.5, 0.8] {
            let n = steps * features;
            let expected = n * (p * 10.0f64).round() as usize / 10;
            let k = mask_count(steps, features, p);
            let mut counts = vec![0u32; n];
            let mut rng = rng_from(n as u64 * 10 + (p * 10.0) as u64);
            let draws = 10_000;
            for _ in 0..draws {
                let m = MaskSample::draw(steps, features, p, &mut rng);
                if m.len() != expected {
                    ok = false;
                }
                let uniq: BTreeSet<_> = m.positions.iter().collect();
                if uniq.len() != m.len() {
                    ok = false;
                }
                for &(t, f) in &m.positions {
                    counts[t * features + f] += 1;
                }
            }
            let q = expected as f64 / n as f64;
            let sigma = (draws as f64 * q * (1.0 - q)).sqrt();
            let mean = draws as f64 * q;
            let dev = counts.iter().map(|&c| (c as f64 - mean).abs() / sigma).fold(0.0, f64::max);
            ok &= k == expected && dev <= MASK_SIGMAS;
            notes.push(format!("({steps},{features},{p}) n={k} max dev {dev:.2}σ"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 30.0;
    verdict("masking exactness and uniformity", ok, &format!("{}; {secs:.1}s", notes.join(", ")));
    assert!(ok);
}

#[test]
fn width_schedule_structure() {
    let mut ok = true;
    let mut seen = BTreeSet::new();
    for cfg in enumerate_grid() {
        let s = width_schedule(5, &cfg).unwrap();
        let l = cfg.encoder_depth as usize;
        let w = &s.widths;
        let palindrome = w.iter().eq(w.iter().rev());
        ok &= w.len() == 2 * l && palindrome && w[l - 1] == s.latent && w[l] == s.latent;
        seen.insert((cfg.encoder_depth, cfg.latent_percent, cfg.header_depth, cfg.cell, s.widths.clone()));
    }
    let dz = |pz| width_schedule(5, &MaeConfig::new(1, pz, 1, CellKind::Gru, 20)).unwrap().latent;
    ok &= dz(20) == 1 && dz(80) == 4;
    verdict(
        "width schedule",
        ok,
        &format!("{} (L, p_z, L_h, cell) combinations, d_z = {} / {} / {} at p_z 0.2 / 0.5 / 0.8", seen.len(), dz(20), dz(50), dz(80)),
    );
    assert!(ok);
}

fn random_well(i: u64) -> (drillmae::ingest::WellSeries, SegmentationParams) {
    let mut rng = rng_from(1000 + i);
    let cfg = SyntheticWell {
        samples: 100_000,
        drilling: (rng.gen_range(200..800), rng.gen_range(1000..4000)),
        connection: (rng.gen_range(10..60), rng.gen_range(60..400)),
        missing_rate: rng.gen_range(0.0..0.02),
        start_depth: rng.gen_range(800.0..1200.0),
        ..SyntheticWell::default()
    };
    let p = SegmentationParams {
        long_window: rng.gen_range(20..300),
        short_window: rng.gen_range(5..40),
        short_threshold: rng.gen_range(0.1..0.6),
        block_window: rng.gen_range(50..400),
        block_threshold: rng.gen_range(0.3..0.8),
        min_depth: rng.gen_range(900.0..1100.0),
        gap_limit: rng.gen_range(1..30),
        impute_window: rng.gen_range(2..30),
        ..SegmentationParams::default()
    };
    (generate(&format!("w{i}"), &cfg, i), p)
}

#[test]
fn segmentation_oracle_equivalence() {
    let start = Instant::now();
    let mut ok = true;
    let (mut segments, mut kept) = (0usize, 0usize);
    for i in 0..20 {
        let (well, p) = random_well(i);
        let mask = drilling_mask(&well, &p).unwrap();
        let oracle_mask = naive_mask(&well, &p);
        ok &= mask == oracle_mask;
        let got = segment_well(&well, &p).unwrap();
        let want = naive_segments(&well, &p);
        ok &= got.len() == want.len();
        for (g, (idx, cols)) in got.iter().zip(&want) {
            ok &= &g.indices == idx && g.start_index == idx[0];
            for (c, w) in g.channels.iter().zip(cols) {
                ok &= c.values.iter().zip(w).all(|(a, b)| a.to_bits() == b.to_bits());
            }
        }
        segments += got.len();
        kept += mask.iter().filter(|&&b| b).count();
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 60.0;
    verdict(
        "segmentation oracle equivalence",
        ok,
        &format!("20 wells x 1e5 samples, {kept} kept samples in {segments} segments, bit-identical; {secs:.1}s"),
    );
    assert!(ok);
}

fn small_dataset(target: SyntheticTarget, samples: usize, window_len: usize, stride: usize, seed: u64) -> PreparedData {
    let wells = two_well_dataset(samples, target, 7);
    let per_well: BTreeMap<_, _> = wells
        .iter()
        .map(|w| (w.well_id.clone(), segment_well(w, &SegmentationParams::default()).unwrap()))
        .collect();
    let params = WindowParams {
        window_len,
        stride,
        ..WindowParams::default()
    };
    prepare(&per_well, &WindowLayout::from_specs(&forge_channels()).unwrap(), &params, seed).unwrap()
}

#[test]
fn pipeline_hygiene() {
    let wells = two_well_dataset(20_000, SyntheticTarget::MudVolume, 3);
    let per_well: BTreeMap<_, _> = wells
        .iter()
        .map(|w| (w.well_id.clone(), segment_well(w, &SegmentationParams::default()).unwrap()))
        .collect();
    let layout = WindowLayout::from_specs(&forge_channels()).unwrap();
    let params = WindowParams {
        window_len: 40,
        stride: 5,
        ..WindowParams::default()
    };
    let runs: Vec<PreparedData> = (0..4).map(|s| prepare(&per_well, &layout, &params, s).unwrap()).collect();

    // statistics: identical under any split/permutation seed and any segment order
    let mut reversed: Vec<_> = per_well.values().flatten().cloned().collect();
    reversed.reverse();
    let stats_ok = runs.iter().all(|d| *d.stats == *runs[0].stats) && fit_stats(&reversed).unwrap() == *runs[0].stats;

    let disjoint = runs.iter().all(|d| {
        let test: BTreeSet<_> = d.test.ids().into_iter().collect();
        d.train.ids().iter().chain(d.validation.ids().iter()).all(|id| !test.contains(id))
    });

    let d = &runs[0];
    let target = &layout.target;
    let target_absent = !layout.inputs.contains(target)
        && d.train.features() == layout.inputs.len()
        && d.train.layout.inputs.iter().all(|c| c != target);

    let cfg: MaeConfig = "ae1-lat80-hd1-GRU-m20".parse().unwrap();
    let mut ae = build_autoencoder(&cfg, d.train.features(), d.train.window_len(), 1).unwrap();
    let tc = TrainConfig {
        max_epochs: 2,
        ..TrainConfig::default()
    };
    pretrain(&mut ae, &d.train.unlabeled(), &d.validation.unlabeled(), cfg.mask_fraction(), &tc).unwrap();
    let enc = extract_encoder(&ae, 1).unwrap();
    let before = enc.digest();
    let mut model = build_finetune_model(&enc, &TaskHeadSpec::new(1, CellKind::Gru), 2).unwrap();
    finetune(&mut model, &d.train, &d.validation, &tc).unwrap();
    let frozen_ok = layers_digest(&model.layers()[..1]) == before;

    let test = TestSet::new(d.test.clone());
    test.evaluate_finetuned(&model, 256).unwrap();
    let one_read = test.reads() == 1;

    let ok = stats_ok && disjoint && target_absent && frozen_ok && one_read;
    verdict(
        "pipeline hygiene",
        ok,
        &format!(
            "stats invariant {stats_ok}, train/test disjoint {disjoint}, target absent {target_absent}, encoder hash stable {frozen_ok}, single test read {one_read}"
        ),
    );
    assert!(ok);
}

#[test]
fn grid_and_analytics() {
    let grid = enumerate_grid();
    let distinct: BTreeSet<String> = grid.iter().map(|c| c.to_string()).collect();
    let count = |f: &dyn Fn(&MaeConfig) -> u8, v: u8| grid.iter().filter(|c| f(c) == v).count();
    let levels = [
        [1, 2].map(|v| count(&|c| c.encoder_depth, v)).to_vec(),
        [20, 50, 80].map(|v| count(&|c| c.latent_percent, v)).to_vec(),
        [1, 2].map(|v| count(&|c| c.header_depth, v)).to_vec(),
        [CellKind::Lstm, CellKind::Gru].map(|cell| grid.iter().filter(|c| c.cell == cell).count()).to_vec(),
        [20, 50, 80].map(|v| count(&|c| c.mask_percent, v)).to_vec(),
    ];
    let counts_ok = grid.len() == 72
        && distinct.len() == 72
        && distinct.contains("ae1-lat80-hd2-GRU-m20")
        && levels.iter().zip([36, 24, 36, 36, 24]).all(|(l, want)| l.iter().all(|&n| n == want));

    let mut rng = rng_from(99);
    let mut stat_err = 0.0f64;
    for n in 2..60 {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.3 * v + rng.gen_range(-1.0..1.0)).collect();
        stat_err = stat_err.max((pearson(&x, &y).unwrap() - pearson_oracle(&x, &y).unwrap()).abs());
        stat_err = stat_err.max((median(&x).unwrap() - median_oracle(&x)).abs());
    }
    let stats_ok = stat_err <= STAT_TOL;

    let rec = |tag: ModelTag, mae: f64| RunRecord {
        test_mae: mae,
        test_rmse: mae,
        val_mae: mae,
        nan: false,
        ..RunRecord::failed(tag, 0, None)
    };
    let fixture = vec![
        rec(ModelTag::Mae("ae1-lat80-hd2-GRU-m20".parse().unwrap()), 0.02085),
        rec(ModelTag::Baseline(CellKind::Lstm), 0.01959),
        rec(ModelTag::Baseline(CellKind::Gru), 0.02599),
    ];
    let table = rank_and_compare(&fixture).unwrap();
    let row = table.iter().find(|r| r.name == "ae1-lat80-hd2-GRU-m20").unwrap();
    let pct = |v: f64| (1000.0 * v).round() / 10.0;
    let deltas_ok = pct(row.delta_vs_gru) == -19.8 && pct(row.delta_vs_lstm) == 6.4 && percent_delta(0.5, 0.5) == 0.0;

    let ok = counts_ok && stats_ok && deltas_ok;
    verdict(
        "grid and analytics",
        ok,
        &format!(
            "72 configs, per-level counts {levels:?}; Pearson/median max err {stat_err:.1e}; deltas vs GRU {:+.1}% vs LSTM {:+.1}%",
            pct(row.delta_vs_gru),
            pct(row.delta_vs_lstm)
        ),
    );
    assert!(ok);
}

#[test]
fn learnability_smoke() {
    let start = Instant::now();
    let data = small_dataset(SyntheticTarget::CopyOf("Total Pump Output".into()), 50_000, 60, 3, 1);
    let test = TestSet::new(data.test.clone());
    let (steps, features) = (data.train.window_len(), data.train.features());

    let baseline = |cell: CellKind| {
        let mut m = build_baseline(cell, steps, features, 11).unwrap();
        let cfg = TrainConfig { seed: 12, ..TrainConfig::default() };
        train_supervised(&mut m, &data.train, &data.validation, &cfg).unwrap();
        test.evaluate(&mut m, 256).unwrap().mae
    };
    let pipeline = || {
        let cfg = MaeConfig::new(1, 80, 1, CellKind::Gru, 20);
        let mut ae = build_autoencoder(&cfg, features, steps, 21).unwrap();
        let s1 = TrainConfig { seed: 22, max_epochs: 10, ..TrainConfig::default() };
        pretrain(&mut ae, &data.train.unlabeled(), &data.validation.unlabeled(), cfg.mask_fraction(), &s1).unwrap();
        let enc = extract_encoder(&ae, 1).unwrap();
        let mut model = build_finetune_model(&enc, &TaskHeadSpec::new(1, CellKind::Gru), 23).unwrap();
        let s2 = TrainConfig { seed: 24, ..TrainConfig::default() };
        finetune(&mut model, &data.train, &data.validation, &s2).unwrap();
        test.evaluate_finetuned(&model, 256).unwrap().mae
    };
    let (lstm, gru, mae) = std::thread::scope(|s| {
        let a = s.spawn(|| baseline(CellKind::Lstm));
        let b = s.spawn(|| baseline(CellKind::Gru));
        let c = s.spawn(pipeline);
        (a.join().unwrap(), b.join().unwrap(), c.join().unwrap())
    });
    let secs = start.elapsed().as_secs_f64();
    let ok = lstm < BASELINE_MAX_MAE && gru < BASELINE_MAX_MAE && mae < PIPELINE_MAX_MAE && secs < 600.0;
    verdict(
        "learnability smoke",
        ok,
        &format!(
            "{} train windows; LSTM {lstm:.4}, GRU {gru:.4} (< {BASELINE_MAX_MAE}); ae1-lat80 pipeline {mae:.4} (< {PIPELINE_MAX_MAE}); {secs:.0}s",
            data.train.len()
        ),
    );
    assert!(ok);
}

#[test]
fn directional_reproduction_on_real_data() {
    let Ok(path) = std::env::var("DRILLMAE_FORGE_MANIFEST") else {
        common::report("SKIP directional reproduction: set DRILLMAE_FORGE_MANIFEST to a manifest of real wells");
        return;
    };
    let mut m = drillmae::manifest::Manifest::load(path.as_ref()).unwrap();
    m.grid = enumerate_grid()
        .into_iter()
        .filter(|c| c.header_depth == 1 && c.mask_percent == 20)
        .collect();
    assert_eq!(m.grid.len(), 12);
    let out = drillmae::workflow::search(&m, false).unwrap();
    let med = |pz: u8| {
        let v: Vec<f64> = out
            .records
            .iter()
            .filter(|r| r.is_valid() && r.tag.config().is_some_and(|c| c.latent_percent == pz))
            .map(|r| r.test_mae)
            .collect();
        median(&v).unwrap_or(f64::NAN)
    };
    let (lo, hi) = (med(20), med(80));
    let ok = hi < lo;
    verdict(
        "directional reproduction",
        ok,
        &format!("median test MAE at p_z 0.8 = {hi:.5}, at p_z 0.2 = {lo:.5}"),
    );
    assert!(ok);
}
