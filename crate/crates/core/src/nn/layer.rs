use std::fmt;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::graph::Activation;
use super::{sigmoid, Scalar};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    pub fn gates(self) -> usize {
        match self {
            CellKind::Lstm => 4,
            CellKind::Gru => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Lstm => "LSTM",
            CellKind::Gru => "GRU",
        }
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            other => Err(Error::param("cell", format!("unknown cell `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerKind {
    Recurrent {
        cell: CellKind,
        return_sequences: bool,
    },
    Affine,
    TimeDistributedAffine,
    Dropout {
        rate: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    /// Output width. For dropout this is resolved to the input width.
    pub width: usize,
    pub trainable: bool,
}

impl LayerSpec {
    pub fn recurrent(cell: CellKind, width: usize, return_sequences: bool) -> Self {
        Self {
            kind: LayerKind::Recurrent {
                cell,
                return_sequences,
            },
            width,
            trainable: true,
        }
    }

    pub fn affine(width: usize) -> Self {
        Self {
            kind: LayerKind::Affine,
            width,
            trainable: true,
        }
    }

    pub fn time_distributed(width: usize) -> Self {
        Self {
            kind: LayerKind::TimeDistributedAffine,
            width,
            trainable: true,
        }
    }

    pub fn dropout(rate: f64) -> Self {
        Self {
            kind: LayerKind::Dropout { rate },
            width: 0,
            trainable: true,
        }
    }

    pub fn frozen(mut self) -> Self {
        self.trainable = false;
        self
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self.kind, LayerKind::Recurrent { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: &'static str,
    pub value: Array2<T>,
    pub grad: Array2<T>,
}

impl<T: Scalar> Param<T> {
    fn new(name: &'static str, value: Array2<T>) -> Self {
        let grad = Array2::zeros(value.raw_dim());
        Self { name, value, grad }
    }
}

fn uniform<T: Scalar>(rows: usize, cols: usize, limit: f64, rng: &mut Rng) -> Array2<T> {
    Array2::from_shape_fn((rows, cols), |_| T::of(rng.gen_range(-limit..=limit)))
}

/// One layer with its parameters. Shapes are fixed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub spec: LayerSpec,
    pub in_width: usize,
    pub params: Vec<Param<T>>,
}

pub(crate) enum Cache<T> {
    Recurrent {
        xs: Vec<Array2<T>>,
        /// h_0 ..= h_T
        hs: Vec<Array2<T>>,
        /// Activated gates per step: LSTM (i, f, g, o), GRU (z, r, n).
        gates: Vec<Array2<T>>,
        /// LSTM: c_0 ..= c_T. GRU: the candidate's recurrent term U_n h + b_n.
        aux: Vec<Array2<T>>,
        /// LSTM only: tanh(c_t) for t = 1 ..= T.
        tanh_c: Vec<Array2<T>>,
        flat_input: bool,
    },
    Affine {
        x: Array2<T>,
    },
    TimeDistributed {
        xs: Vec<Array2<T>>,
    },
    Dropout {
        masks: Option<Vec<Array2<T>>>,
    },
}

fn add_bias<T: Scalar>(rows: usize, bias: &Array2<T>) -> Array2<T> {
    let row = bias.row(0);
    let mut out = Array2::zeros((rows, bias.ncols()));
    for mut r in out.rows_mut() {
        r.assign(&row);
    }
    out
}

fn accumulate_bias<T: Scalar>(grad: &mut Array2<T>, d: &Array2<T>) {
    let sums = d.sum_axis(Axis(0));
    let mut row = grad.row_mut(0);
    row += &sums;
}

impl<T: Scalar> Layer<T> {
    pub fn new(mut spec: LayerSpec, in_width: usize, rng: &mut Rng) -> Result<Self> {
        if in_width == 0 {
            return Err(Error::param("width", "layer input width must be at least 1"));
        }
        let params = match &spec.kind {
            LayerKind::Recurrent { cell, .. } => {
                let h = spec.width;
                if h == 0 {
                    return Err(Error::param("width", "must be at least 1"));
                }
                let g = cell.gates() * h;
                let kernel = uniform(in_width, g, 1.0 / (in_width as f64).sqrt(), rng);
                let recurrent = uniform(h, g, 1.0 / (h as f64).sqrt(), rng);
                let mut bias = Array2::<T>::zeros((1, g));
                let mut params = vec![Param::new("kernel", kernel), Param::new("recurrent_kernel", recurrent)];
                match cell {
                    CellKind::Lstm => {
                        bias.slice_mut(ndarray::s![0, h..2 * h]).fill(T::one());
                        params.push(Param::new("bias", bias));
                    }
                    CellKind::Gru => {
                        params.push(Param::new("bias", bias));
                        params.push(Param::new("recurrent_bias", Array2::zeros((1, g))));
                    }
                }
                params
            }
            LayerKind::Affine | LayerKind::TimeDistributedAffine => {
                if spec.width == 0 {
                    return Err(Error::param("width", "must be at least 1"));
                }
                let kernel = uniform(in_width, spec.width, 1.0 / (in_width as f64).sqrt(), rng);
                vec![
                    Param::new("kernel", kernel),
                    Param::new("bias", Array2::zeros((1, spec.width))),
                ]
            }
            LayerKind::Dropout { rate } => {
                if !(0.0..1.0).contains(rate) {
                    return Err(Error::param("rate", format!("{rate} not in [0, 1)")));
                }
                spec.width = in_width;
                Vec::new()
            }
        };
        Ok(Self {
            spec,
            in_width,
            params,
        })
    }

    pub fn out_width(&self) -> usize {
        self.spec.width
    }

    pub fn param(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Param<T>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub(crate) fn forward(
        &self,
        input: Activation<T>,
        train: bool,
        rng: &mut Rng,
    ) -> Result<(Activation<T>, Option<Cache<T>>)> {
        let width = input.width();
        if width != self.in_width {
            return Err(Error::shape(
                format!("input width {}", self.in_width),
                width.to_string(),
            ));
        }
        match &self.spec.kind {
            LayerKind::Recurrent {
                cell,
                return_sequences,
            } => {
                let (xs, flat_input) = match input {
                    Activation::Seq(xs) => (xs, false),
                    Activation::Flat(x) => (vec![x], true),
                };
                if xs.is_empty() {
                    return Err(Error::Empty("sequence"));
                }
                let (hs, gates, aux, tanh_c) = match cell {
                    CellKind::Lstm => self.lstm_forward(&xs),
                    CellKind::Gru => self.gru_forward(&xs),
                };
                let out = if *return_sequences {
                    Activation::Seq(hs[1..].to_vec())
                } else {
                    Activation::Flat(hs.last().unwrap().clone())
                };
                let cache = train.then_some(Cache::Recurrent {
                    xs,
                    hs,
                    gates,
                    aux,
                    tanh_c,
                    flat_input,
                });
                Ok((out, cache))
            }
            LayerKind::Affine => {
                let Activation::Flat(x) = input else {
                    return Err(Error::shape("flat (batch, width) input", "sequence"));
                };
                let y = self.affine(&x);
                Ok((Activation::Flat(y), train.then_some(Cache::Affine { x })))
            }
            LayerKind::TimeDistributedAffine => {
                let Activation::Seq(xs) = input else {
                    return Err(Error::shape("sequence input", "flat (batch, width)"));
                };
                let ys = xs.iter().map(|x| self.affine(x)).collect();
                Ok((
                    Activation::Seq(ys),
                    train.then_some(Cache::TimeDistributed { xs }),
                ))
            }
            LayerKind::Dropout { rate } => {
                if !train || *rate == 0.0 {
                    return Ok((input, train.then_some(Cache::Dropout { masks: None })));
                }
                let keep = 1.0 - rate;
                let scale = T::of(1.0 / keep);
                let mut draw = |x: &Array2<T>| -> Array2<T> {
                    Array2::from_shape_fn(x.raw_dim(), |_| {
                        if rng.gen::<f64>() < keep {
                            scale
                        } else {
                            T::zero()
                        }
                    })
                };
                let (out, masks) = match input {
                    Activation::Flat(x) => {
                        let m = draw(&x);
                        (Activation::Flat(&x * &m), vec![m])
                    }
                    Activation::Seq(xs) => {
                        let masks: Vec<_> = xs.iter().map(&mut draw).collect();
                        let ys = xs.iter().zip(&masks).map(|(x, m)| x * m).collect();
                        (Activation::Seq(ys), masks)
                    }
                };
                Ok((out, Some(Cache::Dropout { masks: Some(masks) })))
            }
        }
    }

    fn affine(&self, x: &Array2<T>) -> Array2<T> {
        let mut y = add_bias(x.nrows(), &self.params[1].value);
        general_mat_mul(T::one(), x, &self.params[0].value, T::one(), &mut y);
        y
    }

    #[allow(clippy::type_complexity)]
    fn lstm_forward(
        &self,
        xs: &[Array2<T>],
    ) -> (Vec<Array2<T>>, Vec<Array2<T>>, Vec<Array2<T>>, Vec<Array2<T>>) {
        let h = self.spec.width;
        let b = xs[0].nrows();
        let (w, u, bias) = (&self.params[0].value, &self.params[1].value, &self.params[2].value);
        let mut hs = Vec::with_capacity(xs.len() + 1);
        let mut cs = Vec::with_capacity(xs.len() + 1);
        let mut gates = Vec::with_capacity(xs.len());
        let mut tanh_c = Vec::with_capacity(xs.len());
        hs.push(Array2::zeros((b, h)));
        cs.push(Array2::zeros((b, h)));
        for x in xs {
            let mut z = add_bias(b, bias);
            general_mat_mul(T::one(), x, w, T::one(), &mut z);
            general_mat_mul(T::one(), hs.last().unwrap(), u, T::one(), &mut z);
            let c_prev = cs.last().unwrap();
            let mut c = Array2::zeros((b, h));
            let mut tc = Array2::zeros((b, h));
            let mut hn = Array2::zeros((b, h));
            for r in 0..b {
                for j in 0..h {
                    let i = sigmoid(z[[r, j]]);
                    let f = sigmoid(z[[r, h + j]]);
                    let g = z[[r, 2 * h + j]].tanh();
                    let o = sigmoid(z[[r, 3 * h + j]]);
                    z[[r, j]] = i;
                    z[[r, h + j]] = f;
                    z[[r, 2 * h + j]] = g;
                    z[[r, 3 * h + j]] = o;
                    let cv = f * c_prev[[r, j]] + i * g;
                    let t = cv.tanh();
                    c[[r, j]] = cv;
                    tc[[r, j]] = t;
                    hn[[r, j]] = o * t;
                }
            }
            gates.push(z);
            cs.push(c);
            tanh_c.push(tc);
            hs.push(hn);
        }
        (hs, gates, cs, tanh_c)
    }

    #[allow(clippy::type_complexity)]
    fn gru_forward(
        &self,
        xs: &[Array2<T>],
    ) -> (Vec<Array2<T>>, Vec<Array2<T>>, Vec<Array2<T>>, Vec<Array2<T>>) {
        let h = self.spec.width;
        let b = xs[0].nrows();
        let (w, u) = (&self.params[0].value, &self.params[1].value);
        let (bias, rbias) = (&self.params[2].value, &self.params[3].value);
        let mut hs = Vec::with_capacity(xs.len() + 1);
        let mut gates = Vec::with_capacity(xs.len());
        let mut rec_n = Vec::with_capacity(xs.len());
        hs.push(Array2::zeros((b, h)));
        for x in xs {
            let mut xz = add_bias(b, bias);
            general_mat_mul(T::one(), x, w, T::one(), &mut xz);
            let h_prev = hs.last().unwrap();
            let mut hz = add_bias(b, rbias);
            general_mat_mul(T::one(), h_prev, u, T::one(), &mut hz);
            let mut hn = Array2::zeros((b, h));
            let mut hzn = Array2::zeros((b, h));
            for r in 0..b {
                for j in 0..h {
                    let z = sigmoid(xz[[r, j]] + hz[[r, j]]);
                    let rg = sigmoid(xz[[r, h + j]] + hz[[r, h + j]]);
                    let rn = hz[[r, 2 * h + j]];
                    let n = (xz[[r, 2 * h + j]] + rg * rn).tanh();
                    xz[[r, j]] = z;
                    xz[[r, h + j]] = rg;
                    xz[[r, 2 * h + j]] = n;
                    hzn[[r, j]] = rn;
                    hn[[r, j]] = z * h_prev[[r, j]] + (T::one() - z) * n;
                }
            }
            gates.push(xz);
            rec_n.push(hzn);
            hs.push(hn);
        }
        (hs, gates, rec_n, Vec::new())
    }

    /// Accumulates parameter gradients (when trainable) and returns the
    /// gradient with respect to the layer input when `need_input_grad`.
    pub(crate) fn backward(
        &mut self,
        cache: Cache<T>,
        grad_out: Activation<T>,
        need_input_grad: bool,
    ) -> Result<Option<Activation<T>>> {
        let trainable = self.spec.trainable;
        if !trainable && !need_input_grad {
            return Ok(None);
        }
        match cache {
            Cache::Recurrent {
                xs,
                hs,
                gates,
                aux,
                tanh_c,
                flat_input,
            } => {
                let steps = xs.len();
                let mut step_grads: Vec<Option<Array2<T>>> = match grad_out {
                    Activation::Seq(gs) => {
                        if gs.len() != steps {
                            return Err(Error::shape(format!("{steps} steps"), gs.len().to_string()));
                        }
                        gs.into_iter().map(Some).collect()
                    }
                    Activation::Flat(g) => {
                        let mut v = vec![None; steps];
                        v[steps - 1] = Some(g);
                        v
                    }
                };
                let cell = match self.spec.kind {
                    LayerKind::Recurrent { cell, .. } => cell,
                    _ => unreachable!(),
                };
                let dxs = match cell {
                    CellKind::Lstm => self.lstm_backward(
                        &xs,
                        &hs,
                        &gates,
                        &aux,
                        &tanh_c,
                        &mut step_grads,
                        need_input_grad,
                    ),
                    CellKind::Gru => self.gru_backward(
                        &xs,
                        &hs,
                        &gates,
                        &aux,
                        &mut step_grads,
                        need_input_grad,
                    ),
                };
                Ok(dxs.map(|mut d| {
                    if flat_input {
                        Activation::Flat(d.pop().unwrap())
                    } else {
                        Activation::Seq(d)
                    }
                }))
            }
            Cache::Affine { x } => {
                let Activation::Flat(dy) = grad_out else {
                    return Err(Error::shape("flat gradient", "sequence"));
                };
                Ok(self.affine_backward(&x, &dy, need_input_grad).map(Activation::Flat))
            }
            Cache::TimeDistributed { xs } => {
                let Activation::Seq(dys) = grad_out else {
                    return Err(Error::shape("sequence gradient", "flat"));
                };
                let dxs: Vec<Option<Array2<T>>> = xs
                    .iter()
                    .zip(&dys)
                    .map(|(x, dy)| self.affine_backward(x, dy, need_input_grad))
                    .collect();
                Ok(need_input_grad
                    .then(|| Activation::Seq(dxs.into_iter().map(Option::unwrap).collect())))
            }
            Cache::Dropout { masks } => {
                if !need_input_grad {
                    return Ok(None);
                }
                Ok(Some(match (masks, grad_out) {
                    (None, g) => g,
                    (Some(m), Activation::Flat(g)) => Activation::Flat(&g * &m[0]),
                    (Some(m), Activation::Seq(gs)) => {
                        Activation::Seq(gs.iter().zip(&m).map(|(g, m)| g * m).collect())
                    }
                }))
            }
        }
    }

    fn affine_backward(
        &mut self,
        x: &Array2<T>,
        dy: &Array2<T>,
        need_input_grad: bool,
    ) -> Option<Array2<T>> {
        if self.spec.trainable {
            let [kernel, bias] = self.params.as_mut_slice() else {
                unreachable!()
            };
            general_mat_mul(T::one(), &x.t(), dy, T::one(), &mut kernel.grad);
            accumulate_bias(&mut bias.grad, dy);
        }
        need_input_grad.then(|| dy.dot(&self.params[0].value.t()))
    }

    #[allow(clippy::too_many_arguments)]
    fn lstm_backward(
        &mut self,
        xs: &[Array2<T>],
        hs: &[Array2<T>],
        gates: &[Array2<T>],
        cs: &[Array2<T>],
        tanh_c: &[Array2<T>],
        step_grads: &mut [Option<Array2<T>>],
        need_input_grad: bool,
    ) -> Option<Vec<Array2<T>>> {
        let h = self.spec.width;
        let b = xs[0].nrows();
        let trainable = self.spec.trainable;
        let [kernel, recurrent, bias] = self.params.as_mut_slice() else {
            unreachable!()
        };
        let one = T::one();
        let mut dh_next = Array2::<T>::zeros((b, h));
        let mut dc_next = Array2::<T>::zeros((b, h));
        let mut dxs = Vec::with_capacity(if need_input_grad { xs.len() } else { 0 });
        for t in (0..xs.len()).rev() {
            let mut dh = dh_next;
            if let Some(g) = step_grads[t].take() {
                dh += &g;
            }
            let gate = &gates[t];
            let c_prev = &cs[t];
            let tc = &tanh_c[t];
            let mut dz = Array2::<T>::zeros((b, 4 * h));
            for r in 0..b {
                for j in 0..h {
                    let i = gate[[r, j]];
                    let f = gate[[r, h + j]];
                    let g = gate[[r, 2 * h + j]];
                    let o = gate[[r, 3 * h + j]];
                    let dhv = dh[[r, j]];
                    let tcv = tc[[r, j]];
                    let dc = dc_next[[r, j]] + dhv * o * (one - tcv * tcv);
                    dz[[r, j]] = dc * g * i * (one - i);
                    dz[[r, h + j]] = dc * c_prev[[r, j]] * f * (one - f);
                    dz[[r, 2 * h + j]] = dc * i * (one - g * g);
                    dz[[r, 3 * h + j]] = dhv * tcv * o * (one - o);
                    dc_next[[r, j]] = dc * f;
                }
            }
            if trainable {
                general_mat_mul(one, &xs[t].t(), &dz, one, &mut kernel.grad);
                general_mat_mul(one, &hs[t].t(), &dz, one, &mut recurrent.grad);
                accumulate_bias(&mut bias.grad, &dz);
            }
            if need_input_grad {
                dxs.push(dz.dot(&kernel.value.t()));
            }
            dh_next = if t > 0 {
                dz.dot(&recurrent.value.t())
            } else {
                Array2::zeros((0, 0))
            };
        }
        need_input_grad.then(|| {
            dxs.reverse();
            dxs
        })
    }

    fn gru_backward(
        &mut self,
        xs: &[Array2<T>],
        hs: &[Array2<T>],
        gates: &[Array2<T>],
        rec_n: &[Array2<T>],
        step_grads: &mut [Option<Array2<T>>],
        need_input_grad: bool,
    ) -> Option<Vec<Array2<T>>> {
        let h = self.spec.width;
        let b = xs[0].nrows();
        let trainable = self.spec.trainable;
        let [kernel, recurrent, bias, rbias] = self.params.as_mut_slice() else {
            unreachable!()
        };
        let one = T::one();
        let mut dh_next = Array2::<T>::zeros((b, h));
        let mut dxs = Vec::with_capacity(if need_input_grad { xs.len() } else { 0 });
        for t in (0..xs.len()).rev() {
            let mut dh = dh_next;
            if let Some(g) = step_grads[t].take() {
                dh += &g;
            }
            let gate = &gates[t];
            let h_prev = &hs[t];
            let rn = &rec_n[t];
            let mut dxz = Array2::<T>::zeros((b, 3 * h));
            let mut dhz = Array2::<T>::zeros((b, 3 * h));
            let mut dh_direct = Array2::<T>::zeros((b, h));
            for r in 0..b {
                for j in 0..h {
                    let z = gate[[r, j]];
                    let rg = gate[[r, h + j]];
                    let n = gate[[r, 2 * h + j]];
                    let dhv = dh[[r, j]];
                    let da_n = dhv * (one - z) * (one - n * n);
                    let da_z = dhv * (h_prev[[r, j]] - n) * z * (one - z);
                    let da_r = da_n * rn[[r, j]] * rg * (one - rg);
                    dxz[[r, j]] = da_z;
                    dxz[[r, h + j]] = da_r;
                    dxz[[r, 2 * h + j]] = da_n;
                    dhz[[r, j]] = da_z;
                    dhz[[r, h + j]] = da_r;
                    dhz[[r, 2 * h + j]] = da_n * rg;
                    dh_direct[[r, j]] = dhv * z;
                }
            }
            if trainable {
                general_mat_mul(one, &xs[t].t(), &dxz, one, &mut kernel.grad);
                accumulate_bias(&mut bias.grad, &dxz);
                general_mat_mul(one, &h_prev.t(), &dhz, one, &mut recurrent.grad);
                accumulate_bias(&mut rbias.grad, &dhz);
            }
            if need_input_grad {
                dxs.push(dxz.dot(&kernel.value.t()));
            }
            dh_next = if t > 0 {
                general_mat_mul(one, &dhz, &recurrent.value.t(), one, &mut dh_direct);
                dh_direct
            } else {
                Array2::zeros((0, 0))
            };
        }
        need_input_grad.then(|| {
            dxs.reverse();
            dxs
        })
    }
}
