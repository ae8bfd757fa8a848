use ndarray::{Array2, Array3, Axis};
use rand::SeedableRng;

use super::layer::{Cache, Layer, LayerKind, LayerSpec};
use super::Scalar;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Activations flowing between layers. Sequences are time-major: one
/// `(batch, width)` matrix per step.
#[derive(Debug, Clone, PartialEq)]
pub enum Activation<T> {
    Seq(Vec<Array2<T>>),
    Flat(Array2<T>),
}

impl<T: Scalar> Activation<T> {
    pub fn width(&self) -> usize {
        match self {
            Activation::Seq(xs) => xs.first().map_or(0, |x| x.ncols()),
            Activation::Flat(x) => x.ncols(),
        }
    }

    pub fn batch(&self) -> usize {
        match self {
            Activation::Seq(xs) => xs.first().map_or(0, |x| x.nrows()),
            Activation::Flat(x) => x.nrows(),
        }
    }

    /// Converts a `(batch, time, features)` tensor to time-major steps.
    pub fn from_batch(batch: &Array3<T>) -> Self {
        Activation::Seq(
            batch
                .axis_iter(Axis(1))
                .map(|step| step.to_owned())
                .collect(),
        )
    }

    /// Inverse of [`Activation::from_batch`]; a flat activation becomes a
    /// single step.
    pub fn to_batch(&self) -> Array3<T> {
        let steps: Vec<&Array2<T>> = match self {
            Activation::Seq(xs) => xs.iter().collect(),
            Activation::Flat(x) => vec![x],
        };
        let (b, w) = steps[0].dim();
        Array3::from_shape_fn((b, steps.len(), w), |(i, t, f)| steps[t][[i, f]])
    }

    pub fn map(&self, f: impl Fn(&Array2<T>) -> Array2<T>) -> Self {
        match self {
            Activation::Seq(xs) => Activation::Seq(xs.iter().map(f).collect()),
            Activation::Flat(x) => Activation::Flat(f(x)),
        }
    }

    pub fn iter_values(&self) -> Box<dyn Iterator<Item = T> + '_> {
        match self {
            Activation::Seq(xs) => Box::new(xs.iter().flat_map(|x| x.iter().copied())),
            Activation::Flat(x) => Box::new(x.iter().copied()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Borrowed view of one parameter in the store, keyed by layer index and name.
#[derive(Debug)]
pub struct ParamRef<'a, T> {
    pub layer: usize,
    pub name: &'static str,
    pub trainable: bool,
    pub value: &'a Array2<T>,
    pub grad: &'a Array2<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Seq(usize),
    Flat(usize),
}

/// An ordered stack of layers with a fixed `(timesteps, features)` input.
pub struct ModelGraph<T> {
    input_shape: (usize, usize),
    layers: Vec<Layer<T>>,
    dropout_rng: Rng,
    cache: Option<Vec<Option<Cache<T>>>>,
}

impl<T: Scalar> Clone for ModelGraph<T> {
    fn clone(&self) -> Self {
        Self {
            input_shape: self.input_shape,
            layers: self.layers.clone(),
            dropout_rng: self.dropout_rng.clone(),
            cache: None,
        }
    }
}

impl<T: Scalar> std::fmt::Debug for ModelGraph<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelGraph")
            .field("input_shape", &self.input_shape)
            .field("layers", &self.layers.iter().map(|l| &l.spec).collect::<Vec<_>>())
            .finish()
    }
}

fn next_shape(current: Shape, spec: &LayerSpec) -> Result<Shape> {
    match (&spec.kind, current) {
        (LayerKind::Recurrent { return_sequences, .. }, _) => Ok(if *return_sequences {
            Shape::Seq(spec.width)
        } else {
            Shape::Flat(spec.width)
        }),
        (LayerKind::Affine, Shape::Flat(_)) => Ok(Shape::Flat(spec.width)),
        (LayerKind::TimeDistributedAffine, Shape::Seq(_)) => Ok(Shape::Seq(spec.width)),
        (LayerKind::Dropout { .. }, s) => Ok(s),
        (LayerKind::Affine, Shape::Seq(_)) => {
            Err(Error::shape("flat input for affine layer", "sequence"))
        }
        (LayerKind::TimeDistributedAffine, Shape::Flat(_)) => Err(Error::shape(
            "sequence input for time-distributed layer",
            "flat",
        )),
    }
}

fn width_of(s: Shape) -> usize {
    match s {
        Shape::Seq(w) | Shape::Flat(w) => w,
    }
}

impl<T: Scalar> ModelGraph<T> {
    /// Builds and initializes a graph. `seed` drives both the parameter
    /// initialization and the dropout stream.
    pub fn new(input_shape: (usize, usize), specs: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        if input_shape.0 == 0 || input_shape.1 == 0 {
            return Err(Error::param("input_shape", "timesteps and features must be positive"));
        }
        let mut init_rng = Rng::seed_from_u64(seed);
        let mut shape = Shape::Seq(input_shape.1);
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            let in_width = width_of(shape);
            shape = next_shape(shape, &spec)?;
            layers.push(Layer::new(spec, in_width, &mut init_rng)?);
        }
        Ok(Self {
            input_shape,
            layers,
            dropout_rng: Rng::seed_from_u64(crate::rng::mix(seed, 0xD80F)),
            cache: None,
        })
    }

    /// Assembles a graph from already-initialized layers, checking that
    /// adjacent shapes are compatible.
    pub fn from_layers(input_shape: (usize, usize), layers: Vec<Layer<T>>, seed: u64) -> Result<Self> {
        let mut shape = Shape::Seq(input_shape.1);
        for layer in &layers {
            if layer.in_width != width_of(shape) {
                return Err(Error::shape(
                    format!("layer input width {}", width_of(shape)),
                    layer.in_width.to_string(),
                ));
            }
            shape = next_shape(shape, &layer.spec)?;
        }
        Ok(Self {
            input_shape,
            layers,
            dropout_rng: Rng::seed_from_u64(crate::rng::mix(seed, 0xD80F)),
            cache: None,
        })
    }

    pub fn input_shape(&self) -> (usize, usize) {
        self.input_shape
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        self.cache = None;
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<Layer<T>> {
        self.layers
    }

    /// Width of the final output (per step for sequence outputs).
    pub fn output_width(&self) -> usize {
        self.layers
            .last()
            .map_or(self.input_shape.1, Layer::out_width)
    }

    pub fn output_is_sequence(&self) -> bool {
        let mut shape = Shape::Seq(self.input_shape.1);
        for l in &self.layers {
            shape = next_shape(shape, &l.spec).expect("validated at construction");
        }
        matches!(shape, Shape::Seq(_))
    }

    pub fn reseed_dropout(&mut self, seed: u64) {
        self.dropout_rng = Rng::seed_from_u64(seed);
    }

    pub fn set_trainable(&mut self, layer: usize, trainable: bool) {
        self.layers[layer].spec.trainable = trainable;
    }

    pub fn forward(&mut self, input: Activation<T>, mode: Mode) -> Result<Activation<T>> {
        let (steps, features) = self.input_shape;
        match &input {
            Activation::Seq(xs) => {
                if xs.len() != steps || input.width() != features {
                    return Err(Error::shape(
                        format!("({steps}, {features}) per sample"),
                        format!("({}, {})", xs.len(), input.width()),
                    ));
                }
                let b = input.batch();
                if xs.iter().any(|x| x.dim() != (b, features)) {
                    return Err(Error::shape("uniform batch", "ragged steps"));
                }
            }
            Activation::Flat(_) => {
                return Err(Error::shape("sequence input", "flat"));
            }
        }
        let train = mode == Mode::Train;
        let mut caches = Vec::with_capacity(if train { self.layers.len() } else { 0 });
        let mut act = input;
        for layer in &self.layers {
            let (out, cache) = layer.forward(act, train, &mut self.dropout_rng)?;
            if train {
                caches.push(cache);
            }
            act = out;
        }
        self.cache = train.then_some(caches);
        Ok(act)
    }

    pub fn forward_batch(&mut self, batch: &Array3<T>, mode: Mode) -> Result<Activation<T>> {
        self.forward(Activation::from_batch(batch), mode)
    }

    /// Backpropagates `grad_output` through the last train-mode forward
    /// pass. Gradients are reset first, so the store holds exactly this
    /// batch's gradients afterwards. Frozen layers keep zero gradients but
    /// still pass gradients down when a trainable layer lies below them.
    pub fn backward(&mut self, grad_output: Activation<T>) -> Result<()> {
        self.backward_impl(grad_output, false).map(|_| ())
    }

    /// Like [`ModelGraph::backward`] but also returns the input gradient.
    pub fn backward_to_input(&mut self, grad_output: Activation<T>) -> Result<Activation<T>> {
        self.backward_impl(grad_output, true)
            .map(|g| g.expect("input gradient requested"))
    }

    fn backward_impl(
        &mut self,
        grad_output: Activation<T>,
        want_input: bool,
    ) -> Result<Option<Activation<T>>> {
        let caches = self.cache.take().ok_or(Error::NoForwardCache)?;
        self.zero_grads();
        // need[i]: does anything at or below layer i - 1 want a gradient?
        let mut need = vec![want_input; self.layers.len() + 1];
        for i in 1..=self.layers.len() {
            let below = &self.layers[i - 1];
            need[i] = need[i - 1] || (below.spec.trainable && !below.params.is_empty());
        }
        let mut grad = Some(grad_output);
        for (i, (layer, cache)) in self.layers.iter_mut().zip(caches).enumerate().rev() {
            let Some(g) = grad.take() else { break };
            let cache = cache.ok_or(Error::NoForwardCache)?;
            grad = layer.backward(cache, g, need[i])?;
        }
        Ok(grad)
    }

    pub fn zero_grads(&mut self) {
        for p in self.layers.iter_mut().flat_map(|l| l.params.iter_mut()) {
            p.grad.fill(T::zero());
        }
    }

    pub fn params(&self) -> impl Iterator<Item = ParamRef<'_, T>> {
        self.layers.iter().enumerate().flat_map(|(i, l)| {
            l.params.iter().map(move |p| ParamRef {
                layer: i,
                name: p.name,
                trainable: l.spec.trainable,
                value: &p.value,
                grad: &p.grad,
            })
        })
    }

    pub fn param_count(&self) -> usize {
        self.params().map(|p| p.value.len()).sum()
    }

    pub fn trainable_param_count(&self) -> usize {
        self.params()
            .filter(|p| p.trainable)
            .map(|p| p.value.len())
            .sum()
    }

    /// Copies of every parameter value, in store order.
    pub fn snapshot(&self) -> Vec<Array2<T>> {
        self.params().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Array2<T>]) -> Result<()> {
        let slots: Vec<&mut Array2<T>> = self
            .layers
            .iter_mut()
            .flat_map(|l| l.params.iter_mut().map(|p| &mut p.value))
            .collect();
        if slots.len() != snapshot.len() {
            return Err(Error::shape(
                format!("{} parameters", slots.len()),
                snapshot.len().to_string(),
            ));
        }
        for (dst, src) in slots.into_iter().zip(snapshot) {
            if dst.dim() != src.dim() {
                return Err(Error::shape(format!("{:?}", dst.dim()), format!("{:?}", src.dim())));
            }
            dst.assign(src);
        }
        Ok(())
    }

    /// Mutable access to trainable `(value, grad)` pairs in store order.
    pub(crate) fn trainable_slots(&mut self) -> Vec<(&mut Array2<T>, &Array2<T>)> {
        self.layers
            .iter_mut()
            .filter(|l| l.spec.trainable)
            .flat_map(|l| l.params.iter_mut().map(|p| (&mut p.value, &p.grad)))
            .collect()
    }

    /// Converts parameter precision, e.g. an `f32` training graph to `f64`.
    pub fn cast<U: Scalar>(&self) -> ModelGraph<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| Layer {
                spec: l.spec.clone(),
                in_width: l.in_width,
                params: l
                    .params
                    .iter()
                    .map(|p| super::layer::Param {
                        name: p.name,
                        value: p.value.mapv(|v| U::of(v.f64())),
                        grad: p.grad.mapv(|v| U::of(v.f64())),
                    })
                    .collect(),
            })
            .collect();
        ModelGraph {
            input_shape: self.input_shape,
            layers,
            dropout_rng: self.dropout_rng.clone(),
            cache: None,
        }
    }
}
