use ndarray::Array2;

use super::graph::ModelGraph;
use super::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: Some(1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    /// `norm` is the global gradient norm before clipping.
    Applied { norm: f64, clipped: bool },
    /// The gradient was non-finite; parameters were left untouched.
    NonFinite,
}

/// Rescales `grads` in place so their joint L2 norm is at most `max_norm`.
/// Returns the norm before scaling.
pub fn clip_global_norm<T: Scalar>(grads: &mut [&mut Array2<T>], max_norm: f64) -> f64 {
    let norm = global_norm(grads.iter().map(|g| &**g));
    if norm.is_finite() && norm > max_norm {
        let s = T::of(max_norm / norm);
        for g in grads.iter_mut() {
            g.mapv_inplace(|v| v * s);
        }
    }
    norm
}

fn global_norm<'a, T: Scalar>(grads: impl Iterator<Item = &'a Array2<T>>) -> f64 {
    grads
        .flat_map(|g| g.iter())
        .map(|v| {
            let x = v.f64();
            x * x
        })
        .sum::<f64>()
        .sqrt()
}

/// Adam with bias correction. Moment buffers are created on the first step
/// and follow the order of the graph's trainable parameters.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub params: AdamParams,
    step: u64,
    m: Vec<Array2<T>>,
    v: Vec<Array2<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: AdamParams) -> Self {
        Self {
            params,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, graph: &mut ModelGraph<T>) -> StepOutcome {
        self.update(graph.trainable_slots())
    }

    /// Applies one update to `(value, grad)` pairs. Gradients are read, not
    /// modified; clipping is applied as a scale factor.
    pub fn update(&mut self, mut slots: Vec<(&mut Array2<T>, &Array2<T>)>) -> StepOutcome {
        let norm = global_norm(slots.iter().map(|(_, g)| *g));
        if !norm.is_finite() {
            return StepOutcome::NonFinite;
        }
        let (scale, clipped) = match self.params.clip_norm {
            Some(c) if norm > c => (c / norm, true),
            _ => (1.0, false),
        };
        if self.m.is_empty() {
            self.m = slots.iter().map(|(p, _)| Array2::zeros(p.raw_dim())).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), slots.len(), "parameter set changed between steps");
        self.step += 1;
        let p = self.params;
        let t = self.step as i32;
        let bc1 = 1.0 - p.beta1.powi(t);
        let bc2 = 1.0 - p.beta2.powi(t);
        let (b1, b2) = (T::of(p.beta1), T::of(p.beta2));
        let (nb1, nb2) = (T::of(1.0 - p.beta1), T::of(1.0 - p.beta2));
        let (lr, eps, s) = (T::of(p.learning_rate), T::of(p.epsilon), T::of(scale));
        let (c1, c2) = (T::of(bc1), T::of(bc2));
        for ((value, grad), (m, v)) in slots.iter_mut().zip(self.m.iter_mut().zip(&mut self.v)) {
            ndarray::Zip::from(&mut **value)
                .and(*grad)
                .and(m)
                .and(v)
                .for_each(|w, &g, m, v| {
                    let g = g * s;
                    *m = b1 * *m + nb1 * g;
                    *v = b2 * *v + nb2 * g * g;
                    let mh = *m / c1;
                    let vh = *v / c2;
                    *w -= lr * mh / (vh.sqrt() + eps);
                });
        }
        StepOutcome::Applied { norm, clipped }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut adam = Adam::<f64>::new(AdamParams::default());
        let mut w = array![[0.5]];
        let g = array![[1.0]];
        adam.update(vec![(&mut w, &g)]);
        let expected = 0.5 - 0.001 * (1.0 / (1.0 + 1e-8));
        assert!((w[[0, 0]] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut adam = Adam::<f64>::new(AdamParams::default());
        let mut w = array![[0.5, -2.0], [3.0, 0.0]];
        let before = w.clone();
        let g = Array2::zeros((2, 2));
        for _ in 0..3 {
            adam.update(vec![(&mut w, &g)]);
        }
        assert_eq!(w, before);
    }

    #[test]
    fn clipping_caps_norm() {
        let mut a = array![[6.0f64, 0.0]];
        let mut b = array![[0.0], [8.0]];
        let norm = clip_global_norm(&mut [&mut a, &mut b], 1.0);
        assert!((norm - 10.0).abs() < 1e-12);
        let after = global_norm([&a, &b].into_iter());
        assert!((after - 1.0).abs() < 1e-12);
        assert!((a[[0, 0]] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn non_finite_gradient_is_reported() {
        let mut adam = Adam::<f32>::new(AdamParams::default());
        let mut w = array![[1.0f32]];
        let g = array![[f32::NAN]];
        assert_eq!(adam.update(vec![(&mut w, &g)]), StepOutcome::NonFinite);
        assert_eq!(w[[0, 0]], 1.0);
    }
}
