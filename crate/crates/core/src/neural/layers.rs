use super::{GradBuffer, ParameterSet, Tensor};
use crate::{Error, Result, Rng};

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub fn elu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `y = x W^T (+ b)` for `x: rows x in`, `w: out x in`.
pub(crate) fn affine(x: &Tensor, w: &Tensor, b: Option<&Tensor>) -> Result<Tensor> {
    let (out_dim, in_dim) = (w.rows(), w.cols());
    if x.cols() != in_dim {
        return Err(Error::Shape(format!(
            "input width {} does not match layer input {in_dim}",
            x.cols()
        )));
    }
    let rows = x.rows();
    let mut y = Tensor::zeros(&[rows, out_dim]);
    let wd = w.data();
    for r in 0..rows {
        let xr = x.row(r);
        let yr = y.row_mut(r);
        for (o, slot) in yr.iter_mut().enumerate() {
            let wr = &wd[o * in_dim..(o + 1) * in_dim];
            let mut acc = b.map_or(0.0, |b| b.data()[o]);
            for (a, c) in wr.iter().zip(xr) {
                acc += a * c;
            }
            *slot = acc;
        }
    }
    Ok(y)
}

/// Accumulates `dW += dy^T x` and `db += sum(dy)`, returns `dx = dy W` when asked.
pub(crate) fn affine_backward(
    x: &Tensor,
    w: &Tensor,
    dy: &Tensor,
    dw: &mut Tensor,
    mut db: Option<&mut Tensor>,
    want_dx: bool,
) -> Option<Tensor> {
    let in_dim = w.cols();
    let rows = x.rows();
    let mut dx = want_dx.then(|| Tensor::zeros(&[rows, in_dim]));
    let wd = w.data();
    for r in 0..rows {
        let xr = x.row(r);
        let dyr = dy.row(r);
        for (o, &g) in dyr.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let dwr = &mut dw.data_mut()[o * in_dim..(o + 1) * in_dim];
            for (d, v) in dwr.iter_mut().zip(xr) {
                *d += g * v;
            }
            if let Some(db) = db.as_deref_mut() {
                db.data_mut()[o] += g;
            }
            if let Some(dx) = dx.as_mut() {
                let wr = &wd[o * in_dim..(o + 1) * in_dim];
                for (d, v) in dx.row_mut(r).iter_mut().zip(wr) {
                    *d += g * v;
                }
            }
        }
    }
    dx
}

/// Dense layer backed by `{name}.w` and `{name}.b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    name: String,
    input: usize,
    output: usize,
}

impl Linear {
    pub fn new(name: impl Into<String>, input: usize, output: usize) -> Self {
        Self {
            name: name.into(),
            input,
            output,
        }
    }

    pub fn init(&self, params: &mut ParameterSet, rng: &mut Rng) -> Result<()> {
        params.add_linear(&self.name, self.input, self.output, rng)
    }

    pub fn weight_key(&self) -> String {
        format!("{}.w", self.name)
    }

    pub fn bias_key(&self) -> String {
        format!("{}.b", self.name)
    }

    pub fn input(&self) -> usize {
        self.input
    }

    pub fn output(&self) -> usize {
        self.output
    }

    pub fn forward(&self, params: &ParameterSet, x: &Tensor) -> Result<Tensor> {
        let w = params.get(&self.weight_key())?;
        let b = params.get(&self.bias_key())?;
        if w.shape() != [self.output, self.input] {
            return Err(Error::Shape(format!("{} has shape {:?}", self.weight_key(), w.shape())));
        }
        affine(x, w, Some(b))
    }

    /// `x` is the input the matching forward call saw.
    pub fn backward(&self, params: &ParameterSet, x: &Tensor, dy: &Tensor, grads: &mut GradBuffer, want_dx: bool) -> Result<Option<Tensor>> {
        if dy.rows() != x.rows() || dy.cols() != self.output {
            return Err(Error::Cache(format!(
                "{}: upstream {:?} vs input rows {}",
                self.name,
                dy.shape(),
                x.rows()
            )));
        }
        let w = params.get(&self.weight_key())?;
        let (dw, db) = grads.get_pair_mut(&self.weight_key(), &self.bias_key())?;
        Ok(affine_backward(x, w, dy, dw, Some(db), want_dx))
    }
}

/// Multi-layer perceptron: ReLU between layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    name: String,
    layers: Vec<Linear>,
}

/// Activations saved by [`Mlp::forward`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    owner: String,
    sizes: Vec<usize>,
    /// Input to each layer.
    inputs: Vec<Tensor>,
}

impl Mlp {
    /// `sizes = [input, hidden..., output]`; layers are `{name}.l{i}`.
    pub fn new(name: impl Into<String>, sizes: &[usize]) -> Self {
        let name = name.into();
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(format!("{name}.l{i}"), w[0], w[1]))
            .collect();
        Self { name, layers }
    }

    pub fn init(&self, params: &mut ParameterSet, rng: &mut Rng) -> Result<()> {
        self.layers.iter().try_for_each(|l| l.init(params, rng))
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output()
    }

    fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Linear::output))
            .collect()
    }

    pub fn forward(&self, params: &ParameterSet, x: &Tensor) -> Result<(Tensor, MlpCache)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(params, &h)?;
            inputs.push(h);
            h = if i + 1 < self.layers.len() {
                let mut a = z;
                a.data_mut().iter_mut().for_each(|v| *v = relu(*v));
                a
            } else {
                z
            };
        }
        h.check_finite(&self.name)?;
        Ok((
            h,
            MlpCache {
                owner: self.name.clone(),
                sizes: self.sizes(),
                inputs,
            },
        ))
    }

    /// Accumulates parameter gradients and returns the gradient with respect
    /// to the input.
    pub fn backward(&self, params: &ParameterSet, cache: &MlpCache, dy: &Tensor, grads: &mut GradBuffer) -> Result<Tensor> {
        if cache.owner != self.name || cache.sizes != self.sizes() {
            return Err(Error::Cache(format!(
                "cache from {} used with {}",
                cache.owner, self.name
            )));
        }
        if dy.rows() != cache.inputs[0].rows() || dy.cols() != self.output_dim() {
            return Err(Error::Cache(format!(
                "{}: upstream gradient {:?} does not match forward batch",
                self.name,
                dy.shape()
            )));
        }
        let mut g = dy.clone();
        for i in (0..self.layers.len()).rev() {
            let x = &cache.inputs[i];
            let mut dx = self.layers[i]
                .backward(params, x, &g, grads, true)?
                .expect("requested input gradient");
            if i > 0 {
                // x is relu(z) of the previous layer, so relu'(z) = [x > 0]
                for (d, &a) in dx.data_mut().iter_mut().zip(x.data()) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            g = dx;
        }
        Ok(g)
    }
}
