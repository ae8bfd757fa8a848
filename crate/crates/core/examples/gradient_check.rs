//! Analytic gradients of a small LSTM/GRU stack against central finite
//! differences in double precision.

use anyhow::Result;
use drillmae::nn::{Activation, CellKind, LayerSpec, Mode, ModelGraph};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};

fn loss(g: &mut ModelGraph<f64>, x: &Array3<f64>, w: &Array2<f64>) -> Result<f64> {
    let out = g.forward_batch(x, Mode::Infer)?;
    let Activation::Flat(y) = out else { unreachable!() };
    Ok((&y * w).sum())
}

fn main() -> Result<()> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    for cell in [CellKind::Lstm, CellKind::Gru] {
        let specs = vec![
            LayerSpec::recurrent(cell, 4, true),
            LayerSpec::recurrent(cell, 3, false),
            LayerSpec::affine(2),
        ];
        let mut g = ModelGraph::<f64>::new((5, 3), specs, 9)?;
        let x = Array3::from_shape_fn((2, 5, 3), |_| rng.gen_range(-1.0..1.0));
        let w = Array2::from_shape_fn((2, 2), |_| rng.gen_range(-1.0..1.0));

        g.forward_batch(&x, Mode::Train)?;
        g.backward(Activation::Flat(w.clone()))?;
        let analytic: Vec<Array2<f64>> = g.params().map(|p| p.grad.clone()).collect();

        let h = 1e-5;
        let mut worst = 0.0f64;
        let mut k = 0;
        for li in 0..g.layers().len() {
            for pi in 0..g.layers()[li].params.len() {
                let shape = g.layers()[li].params[pi].value.dim();
                for idx in ndarray::indices(shape) {
                    let orig = g.layers()[li].params[pi].value[idx];
                    g.layers_mut()[li].params[pi].value[idx] = orig + h;
                    let up = loss(&mut g, &x, &w)?;
                    g.layers_mut()[li].params[pi].value[idx] = orig - h;
                    let down = loss(&mut g, &x, &w)?;
                    g.layers_mut()[li].params[pi].value[idx] = orig;
                    let numeric = (up - down) / (2.0 * h);
                    let a = analytic[k][idx];
                    let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                    worst = worst.max(rel);
                }
                k += 1;
            }
        }
        println!("{cell}: {} parameters, worst relative error {worst:.2e}", g.param_count());
    }
    Ok(())
}
