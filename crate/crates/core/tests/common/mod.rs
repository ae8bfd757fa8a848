//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use drillmae::ingest::WellSeries;
use drillmae::nn::{Activation, CellKind, LayerSpec, Mode, ModelGraph};
use drillmae::segmentation::SegmentationParams;
use ndarray::{Array2, Array3};
use rand::Rng;

/// Writes one line straight to stderr, bypassing the test harness capture.
pub fn report(line: &str) {
    use std::io::Write;
    let _ = std::io::stderr().write_all(format!("{line}\n").as_bytes());
}

pub fn verdict(name: &str, ok: bool, detail: &str) {
    report(&format!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" }));
}

// ---------------------------------------------------------------- segmentation

fn q(x: f64) -> Option<i128> {
    (x.is_finite() && x.abs() < 2f64.powi(40)).then(|| (x * 2f64.powi(32)).round() as i128)
}

/// Trailing window `[t+1-w, t]` clipped at zero, summed from scratch.
fn window_sum(values: &[f64], t: usize, w: usize) -> (i128, i128) {
    let lo = (t + 1).saturating_sub(w);
    values[lo..=t]
        .iter()
        .filter_map(|&v| q(v))
        .fold((0, 0), |(s, c), v| (s + v, c + 1))
}

fn window_fraction(m: &[bool], t: usize, w: usize) -> f64 {
    let lo = (t + 1).saturating_sub(w);
    let ones = m[lo..=t].iter().filter(|&&b| b).count();
    ones as f64 / (t + 1 - lo) as f64
}

/// Per-sample reference for the retained-sample mask.
pub fn naive_mask(s: &WellSeries, p: &SegmentationParams) -> Vec<bool> {
    let hd = &s.channel(&p.hole_depth).unwrap().values;
    let bd = &s.channel(&p.bit_depth).unwrap().values;
    let n = hd.len();
    let mut base = vec![false; n];
    for t in 1..n {
        let (s1, c1) = window_sum(hd, t, p.long_window);
        let (s0, c0) = window_sum(hd, t - 1, p.long_window);
        // mean_t > mean_{t-1}  <=>  s1 * c0 > s0 * c1  (counts positive)
        let rising = c1 > 0 && c0 > 0 && s1 * c0 > s0 * c1;
        let (h, b) = (hd[t], bd[t]);
        base[t] = rising
            && h.is_finite()
            && b.is_finite()
            && (h - b).abs() <= p.depth_tolerance
            && h > p.min_depth;
    }
    let pass1: Vec<bool> = (0..n)
        .map(|t| base[t] && window_fraction(&base, t, p.short_window) > p.short_threshold)
        .collect();
    (0..n)
        .map(|t| window_fraction(&pass1, t, p.block_window) > p.block_threshold)
        .collect()
}

fn naive_impute(v: &[f64], window: usize) -> Option<Vec<f64>> {
    if v.iter().all(|x| !x.is_finite()) {
        return None;
    }
    let n = v.len();
    let half = window / 2;
    let mut out = v.to_vec();
    for i in 0..n {
        if v[i].is_finite() || i < half || i - half + window > n {
            continue;
        }
        let vals: Vec<f64> = v[i - half..i - half + window].iter().copied().filter(|x| x.is_finite()).collect();
        if !vals.is_empty() {
            out[i] = vals.iter().sum::<f64>() / vals.len() as f64;
        }
    }
    let snapshot = out.clone();
    for i in 0..n {
        if !snapshot[i].is_finite() {
            if let Some(next) = snapshot[i..].iter().find(|x| x.is_finite()) {
                out[i] = *next;
            }
        }
    }
    let snapshot = out.clone();
    for i in 0..n {
        if !snapshot[i].is_finite() {
            out[i] = *snapshot[..i].iter().rev().find(|x| x.is_finite()).unwrap();
        }
    }
    Some(out)
}

/// Reference segments: `(indices, channel values)` per kept run.
pub fn naive_segments(s: &WellSeries, p: &SegmentationParams) -> Vec<(Vec<usize>, Vec<Vec<f64>>)> {
    let mask = naive_mask(s, p);
    let kept: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    let mut runs: Vec<Vec<usize>> = Vec::new();
    for (k, &i) in kept.iter().enumerate() {
        if k == 0 || i - kept[k - 1] > p.gap_limit {
            runs.push(Vec::new());
        }
        runs.last_mut().unwrap().push(i);
    }
    runs.into_iter()
        .filter_map(|run| {
            let cols = s
                .channels
                .iter()
                .map(|c| naive_impute(&run.iter().map(|&i| c.values[i]).collect::<Vec<_>>(), p.impute_window))
                .collect::<Option<Vec<_>>>()?;
            Some((run, cols))
        })
        .collect()
}

// ---------------------------------------------------------------- gradients

#[derive(Debug, Clone)]
pub struct GradInstance {
    pub family: &'static str,
    pub steps: usize,
    pub features: usize,
    pub batch: usize,
    pub specs: Vec<LayerSpec>,
    pub seed: u64,
}

fn cell(rng: &mut impl Rng) -> CellKind {
    if rng.gen() {
        CellKind::Lstm
    } else {
        CellKind::Gru
    }
}

/// Random graph of at most three layers and eight units, cycling through
/// the layer families.
pub fn random_instance(i: usize, rng: &mut impl Rng) -> GradInstance {
    let w = |rng: &mut dyn rand::RngCore| rng.gen_range(1..=8usize);
    let (family, specs) = match i % 5 {
        0 => ("lstm", {
            let mut v = vec![LayerSpec::recurrent(CellKind::Lstm, w(rng), rng.gen())];
            if rng.gen() {
                v.push(LayerSpec::recurrent(CellKind::Lstm, w(rng), false));
            }
            v
        }),
        1 => ("gru", {
            let mut v = vec![LayerSpec::recurrent(CellKind::Gru, w(rng), true)];
            v.push(LayerSpec::recurrent(CellKind::Gru, w(rng), rng.gen()));
            v
        }),
        2 => ("affine", {
            let c = cell(rng);
            vec![LayerSpec::recurrent(c, w(rng), false), LayerSpec::affine(w(rng)), LayerSpec::affine(w(rng))]
        }),
        3 => ("time-distributed", {
            let c = cell(rng);
            let mut v = vec![LayerSpec::time_distributed(w(rng))];
            v.push(LayerSpec::recurrent(c, w(rng), true));
            v.push(LayerSpec::time_distributed(w(rng)));
            v
        }),
        _ => ("dropout", {
            let c = cell(rng);
            vec![
                LayerSpec::recurrent(c, w(rng), true),
                LayerSpec::dropout(rng.gen_range(0.0..0.5)),
                LayerSpec::recurrent(cell(rng), w(rng), false),
            ]
        }),
    };
    GradInstance {
        family,
        steps: rng.gen_range(1..=6),
        features: rng.gen_range(1..=4),
        batch: rng.gen_range(1..=3),
        specs,
        seed: rng.gen(),
    }
}

fn weighted_sum(out: &Activation<f64>, w: &Activation<f64>) -> f64 {
    match (out, w) {
        (Activation::Flat(a), Activation::Flat(b)) => (a * b).sum(),
        (Activation::Seq(a), Activation::Seq(b)) => a.iter().zip(b).map(|(x, y)| (x * y).sum()).sum(),
        _ => panic!("layout mismatch"),
    }
}

/// Largest relative error between backpropagated and central-difference
/// gradients, over every parameter and every input element. The loss is a
/// fixed random linear functional of the output; dropout masks are held
/// fixed by reseeding before every forward pass.
pub fn max_relative_error(inst: &GradInstance, h: f64, floor: f64) -> f64 {
    let mut rng = drillmae::rng::rng_from(inst.seed);
    let mut g = ModelGraph::<f64>::new((inst.steps, inst.features), inst.specs.clone(), inst.seed).unwrap();
    let x = Array3::from_shape_fn((inst.batch, inst.steps, inst.features), |_| rng.gen_range(-1.0..1.0));
    let drop_seed: u64 = rng.gen();

    let probe = {
        g.reseed_dropout(drop_seed);
        g.forward_batch(&x, Mode::Train).unwrap()
    };
    let mut rand_like = |a: &Array2<f64>| Array2::from_shape_fn(a.raw_dim(), |_| rng.gen_range(-1.0..1.0));
    let w = match &probe {
        Activation::Flat(a) => Activation::Flat(rand_like(a)),
        Activation::Seq(xs) => Activation::Seq(xs.iter().map(&mut rand_like).collect()),
    };
    let dx = g.backward_to_input(w.clone()).unwrap();
    let analytic: Vec<Array2<f64>> = g.params().map(|p| p.grad.clone()).collect();

    let f = |g: &mut ModelGraph<f64>, x: &Array3<f64>| {
        g.reseed_dropout(drop_seed);
        weighted_sum(&g.forward_batch(x, Mode::Train).unwrap(), &w)
    };
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(floor);
    let mut worst = 0.0f64;

    let mut k = 0;
    for li in 0..g.layers().len() {
        for pi in 0..g.layers()[li].params.len() {
            let dim = g.layers()[li].params[pi].value.dim();
            for idx in ndarray::indices(dim) {
                let orig = g.layers()[li].params[pi].value[idx];
                g.layers_mut()[li].params[pi].value[idx] = orig + h;
                let up = f(&mut g, &x);
                g.layers_mut()[li].params[pi].value[idx] = orig - h;
                let down = f(&mut g, &x);
                g.layers_mut()[li].params[pi].value[idx] = orig;
                worst = worst.max(rel(analytic[k][idx], (up - down) / (2.0 * h)));
            }
            k += 1;
        }
    }
    let dx = dx.to_batch();
    for idx in ndarray::indices(x.dim()) {
        let mut xp = x.clone();
        xp[idx] += h;
        let up = f(&mut g, &xp);
        xp[idx] -= 2.0 * h;
        let down = f(&mut g, &xp);
        worst = worst.max(rel(dx[idx], (up - down) / (2.0 * h)));
    }
    worst
}

// ---------------------------------------------------------------- statistics

/// Pearson r from the definition: covariance over the product of standard
/// deviations, each computed with the two-pass formula.
pub fn pearson_oracle(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (n - 1.0);
    let sx = (x.iter().map(|a| (a - mx).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let sy = (y.iter().map(|b| (b - my).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let r = cov / (sx * sy);
    r.is_finite().then_some(r)
}

pub fn median_oracle(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}
