//! Small multi-layer perceptron with hand-written reverse-mode gradients and
//! an adaptive-moment optimizer. Every learner is built from these pieces.
//!
//! Parameters live in one flat vector. Layer `l` occupies a contiguous slice
//! holding its weight matrix row-major (`output_width` rows of
//! `input_width` columns) followed by its bias.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Rectifier,
    Identity,
    AbsoluteValue,
}

impl Activation {
    fn apply<S: Scalar>(self, z: S) -> S {
        match self {
            Activation::Rectifier => z.max(S::zero()),
            Activation::Identity => z,
            Activation::AbsoluteValue => z.abs(),
        }
    }

    /// Derivative at `z`; the rectifier and absolute value use 0 at the kink.
    fn derivative<S: Scalar>(self, z: S) -> S {
        match self {
            Activation::Rectifier => {
                if z > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Activation::Identity => S::one(),
            Activation::AbsoluteValue => {
                if z > S::zero() {
                    S::one()
                } else if z < S::zero() {
                    -S::one()
                } else {
                    S::zero()
                }
            }
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            Activation::Rectifier => 0,
            Activation::Identity => 1,
            Activation::AbsoluteValue => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Rectifier),
            1 => Some(Activation::Identity),
            2 => Some(Activation::AbsoluteValue),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_width: usize,
    pub output_width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_width: usize, output_width: usize, activation: Activation) -> Self {
        Self {
            input_width,
            output_width,
            activation,
        }
    }

    pub fn param_count(&self) -> usize {
        self.input_width * self.output_width + self.output_width
    }
}

/// Layer stack `input -> hidden.. -> output` with rectifier hidden layers.
pub fn mlp_spec(
    input: usize,
    hidden: &[usize],
    output: usize,
    output_activation: Activation,
) -> Vec<LayerSpec> {
    let mut widths = Vec::with_capacity(hidden.len() + 2);
    widths.push(input);
    widths.extend_from_slice(hidden);
    widths.push(output);
    let last = widths.len() - 2;
    widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let act = if i == last {
                output_activation
            } else {
                Activation::Rectifier
            };
            LayerSpec::new(w[0], w[1], act)
        })
        .collect()
}

fn validate_spec(spec: &[LayerSpec]) -> Result<()> {
    if spec.is_empty() {
        return Err(Error::Config("network needs at least one layer".into()));
    }
    for (i, layer) in spec.iter().enumerate() {
        if layer.input_width == 0 || layer.output_width == 0 {
            return Err(Error::Config(format!("layer {i} has a zero width")));
        }
        if i > 0 && spec[i - 1].output_width != layer.input_width {
            return Err(Error::Config(format!(
                "layer {i} input width {} does not match previous output width {}",
                layer.input_width,
                spec[i - 1].output_width
            )));
        }
    }
    Ok(())
}

/// Flat parameters of one network plus the layer layout they follow.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector<S> {
    layers: Vec<LayerSpec>,
    values: Vec<S>,
}

impl<S: Scalar> ParameterVector<S> {
    pub fn zeros(layers: Vec<LayerSpec>) -> Result<Self> {
        validate_spec(&layers)?;
        let n = layers.iter().map(LayerSpec::param_count).sum();
        Ok(Self {
            layers,
            values: vec![S::zero(); n],
        })
    }

    pub fn from_values(layers: Vec<LayerSpec>, values: Vec<S>) -> Result<Self> {
        validate_spec(&layers)?;
        let n: usize = layers.iter().map(LayerSpec::param_count).sum();
        if values.len() != n {
            return Err(Error::ShapeMismatch {
                what: "parameter count",
                expected: n,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("parameters must be finite".into()));
        }
        Ok(Self { layers, values })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output_width
    }

    /// Weight matrix and bias slices of layer `l`.
    pub fn layer(&self, l: usize) -> (&[S], &[S]) {
        let offset: usize = self.layers[..l].iter().map(LayerSpec::param_count).sum();
        let spec = self.layers[l];
        let w = spec.input_width * spec.output_width;
        (
            &self.values[offset..offset + w],
            &self.values[offset + w..offset + w + spec.output_width],
        )
    }

    pub fn layer_mut(&mut self, l: usize) -> (&mut [S], &mut [S]) {
        let offset: usize = self.layers[..l].iter().map(LayerSpec::param_count).sum();
        let spec = self.layers[l];
        let w = spec.input_width * spec.output_width;
        let (weights, rest) = self.values[offset..offset + spec.param_count()].split_at_mut(w);
        (weights, rest)
    }
}

/// Fresh parameters: weights uniform in `±sqrt(6 / (in + out))`, zero biases.
pub fn init_params<S: Scalar, R: Rng + ?Sized>(
    spec: &[LayerSpec],
    rng: &mut R,
) -> Result<ParameterVector<S>> {
    let mut params = ParameterVector::zeros(spec.to_vec())?;
    for l in 0..spec.len() {
        let bound = (6.0 / (spec[l].input_width + spec[l].output_width) as f64).sqrt();
        let (weights, _) = params.layer_mut(l);
        for w in weights {
            *w = S::lit(rng.gen_range(-bound..bound));
        }
    }
    Ok(params)
}

/// Intermediate values of a forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape<S> {
    /// Input of every layer.
    inputs: Vec<Vec<S>>,
    /// Pre-activation of every layer.
    pre: Vec<Vec<S>>,
    output: Vec<S>,
}

impl<S: Scalar> Tape<S> {
    pub fn output(&self) -> &[S] {
        &self.output
    }
}

fn affine_into<S: Scalar>(weights: &[S], bias: &[S], input: &[S], out: &mut Vec<S>) {
    let cols = input.len();
    out.clear();
    out.extend(bias.iter().enumerate().map(|(j, &b)| {
        let row = &weights[j * cols..(j + 1) * cols];
        row.iter().zip(input).fold(b, |acc, (&w, &x)| acc + w * x)
    }));
}

fn check_input<S: Scalar>(params: &ParameterVector<S>, input: &[S]) -> Result<()> {
    if input.len() != params.input_width() {
        return Err(Error::ShapeMismatch {
            what: "network input width",
            expected: params.input_width(),
            got: input.len(),
        });
    }
    Ok(())
}

/// Network output for `input`.
pub fn forward<S: Scalar>(params: &ParameterVector<S>, input: &[S]) -> Result<Vec<S>> {
    check_input(params, input)?;
    let mut current = input.to_vec();
    let mut next = Vec::new();
    for (l, spec) in params.layers.iter().enumerate() {
        let (w, b) = params.layer(l);
        affine_into(w, b, &current, &mut next);
        for z in next.iter_mut() {
            *z = spec.activation.apply(*z);
        }
        std::mem::swap(&mut current, &mut next);
    }
    Ok(current)
}

/// Forward pass that records what [`backward`] needs.
pub fn forward_tape<S: Scalar>(params: &ParameterVector<S>, input: &[S]) -> Result<Tape<S>> {
    check_input(params, input)?;
    let n = params.layers.len();
    let mut inputs = Vec::with_capacity(n);
    let mut pre = Vec::with_capacity(n);
    let mut current = input.to_vec();
    for (l, spec) in params.layers.iter().enumerate() {
        let (w, b) = params.layer(l);
        let mut z = Vec::with_capacity(spec.output_width);
        affine_into(w, b, &current, &mut z);
        let a: Vec<S> = z.iter().map(|&v| spec.activation.apply(v)).collect();
        inputs.push(current);
        pre.push(z);
        current = a;
    }
    if current.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite network output".into()));
    }
    Ok(Tape {
        inputs,
        pre,
        output: current,
    })
}

/// Reverse pass of `<upstream, output>`: adds the parameter gradient into
/// `param_grad` and returns the input gradient.
pub fn backward<S: Scalar>(
    params: &ParameterVector<S>,
    tape: &Tape<S>,
    upstream: &[S],
    param_grad: &mut [S],
) -> Result<Vec<S>> {
    if upstream.len() != params.output_width() {
        return Err(Error::ShapeMismatch {
            what: "upstream gradient width",
            expected: params.output_width(),
            got: upstream.len(),
        });
    }
    if param_grad.len() != params.len() {
        return Err(Error::ShapeMismatch {
            what: "parameter gradient length",
            expected: params.len(),
            got: param_grad.len(),
        });
    }
    let mut offsets = Vec::with_capacity(params.layers.len());
    let mut acc = 0;
    for spec in &params.layers {
        offsets.push(acc);
        acc += spec.param_count();
    }
    let mut delta: Vec<S> = upstream.to_vec();
    for l in (0..params.layers.len()).rev() {
        let spec = params.layers[l];
        for (d, &z) in delta.iter_mut().zip(&tape.pre[l]) {
            *d *= spec.activation.derivative(z);
        }
        let input = &tape.inputs[l];
        let cols = spec.input_width;
        let (w, _) = params.layer(l);
        let start = offsets[l];
        let (gw, gb) = param_grad[start..start + spec.param_count()].split_at_mut(cols * spec.output_width);
        let mut next = vec![S::zero(); cols];
        for (j, &d) in delta.iter().enumerate() {
            if d == S::zero() {
                continue;
            }
            gb[j] += d;
            let row = &w[j * cols..(j + 1) * cols];
            let grow = &mut gw[j * cols..(j + 1) * cols];
            for i in 0..cols {
                grow[i] += d * input[i];
                next[i] += d * row[i];
            }
        }
        delta = next;
    }
    if delta.iter().any(|v| !v.is_finite()) || param_grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    Ok(delta)
}

/// Output, parameter gradient and input gradient of `<upstream, f(input)>`.
pub fn forward_backward<S: Scalar>(
    params: &ParameterVector<S>,
    input: &[S],
    upstream: &[S],
) -> Result<(Vec<S>, Vec<S>, Vec<S>)> {
    let tape = forward_tape(params, input)?;
    let mut grad = vec![S::zero(); params.len()];
    let input_grad = backward(params, &tape, upstream, &mut grad)?;
    Ok((tape.output, grad, input_grad))
}

/// Independent copy of `params` for use as a target network.
pub fn copy_to_target<S: Scalar>(params: &ParameterVector<S>) -> ParameterVector<S> {
    params.clone()
}

/// Adaptive-moment optimizer state over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<S> {
    pub first_moment: Vec<S>,
    pub second_moment: Vec<S>,
    pub step: u64,
    pub learning_rate: S,
    pub beta1: S,
    pub beta2: S,
    pub epsilon: S,
    /// Gradients with a larger global norm are rescaled to this norm.
    pub clip_norm: Option<S>,
}

impl<S: Scalar> OptimizerState<S> {
    /// Defaults: lr 5e-4, betas (0.9, 0.999), epsilon 1e-8, clipping at 10.
    pub fn new(n_params: usize) -> Self {
        Self {
            first_moment: vec![S::zero(); n_params],
            second_moment: vec![S::zero(); n_params],
            step: 0,
            learning_rate: S::lit(5e-4),
            beta1: S::lit(0.9),
            beta2: S::lit(0.999),
            epsilon: S::lit(1e-8),
            clip_norm: Some(S::lit(10.0)),
        }
    }

    pub fn with_learning_rate(mut self, lr: S) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn with_clip_norm(mut self, clip: Option<S>) -> Self {
        self.clip_norm = clip;
        self
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }
}

/// One adaptive-moment update of `params` along `gradient`.
pub fn optimizer_step<S: Scalar>(
    params: &mut [S],
    gradient: &[S],
    state: &mut OptimizerState<S>,
) -> Result<()> {
    if params.len() != gradient.len() || params.len() != state.len() {
        return Err(Error::ShapeMismatch {
            what: "optimizer parameter count",
            expected: state.len(),
            got: gradient.len(),
        });
    }
    if gradient.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    let scale = match state.clip_norm {
        Some(clip) => {
            let norm = gradient.iter().map(|&g| g * g).sum::<S>().sqrt();
            if norm > clip {
                clip / norm
            } else {
                S::one()
            }
        }
        None => S::one(),
    };
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = S::one() - b1.powi(t);
    let c2 = S::one() - b2.powi(t);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(gradient)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        let g = g * scale;
        *m = b1 * *m + (S::one() - b1) * g;
        *v = b2 * *v + (S::one() - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}
