//! From-scratch dense networks in 64-bit floats.
//!
//! A [`DenseNet`] is a stack of affine layers with an element-wise activation
//! on every hidden layer and a linear output layer. Reverse-mode gradients
//! are computed by [`DenseNet::backward`] and checked against central finite
//! differences in the test suite.

mod checkpoint;
pub(crate) mod functions;
mod optimizer;

pub use checkpoint::{read_parameters, write_parameters, PARAM_FORMAT_VERSION, PARAM_MAGIC};
pub use functions::{huber, huber_prime, mish, mish_prime};
pub use optimizer::{optimizer_step, OptimizerKind, OptimizerState};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Hidden-layer activation. The output layer is always linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Mish,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Mish => mish(x),
            Activation::Identity => x,
        }
    }

    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Mish => mish_prime(x),
            Activation::Identity => 1.0,
        }
    }
}

/// Architecture of a dense network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseNetSpec {
    pub input_width: usize,
    pub hidden_widths: Vec<usize>,
    pub output_width: usize,
    pub activation: Activation,
}

impl DenseNetSpec {
    pub fn new(
        input_width: usize,
        hidden_widths: Vec<usize>,
        output_width: usize,
        activation: Activation,
    ) -> Result<Self> {
        if input_width == 0 || output_width == 0 || hidden_widths.iter().any(|&w| w == 0) {
            return Err(Error::contract("network widths must be positive"));
        }
        Ok(Self {
            input_width,
            hidden_widths,
            output_width,
            activation,
        })
    }

    /// Widths of consecutive layers: input, hidden..., output.
    fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_widths.len() + 2);
        w.push(self.input_width);
        w.extend_from_slice(&self.hidden_widths);
        w.push(self.output_width);
        w
    }

    /// Number of affine layers.
    pub fn layer_count(&self) -> usize {
        self.hidden_widths.len() + 1
    }
}

/// Per-layer weight matrices (row-major, `outputs x inputs`) and bias vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    layer_inputs: Vec<usize>,
    layer_outputs: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl ParameterSet {
    /// All-zero parameters shaped for `spec`.
    pub fn zeros(spec: &DenseNetSpec) -> Self {
        let widths = spec.widths();
        let mut layer_inputs = Vec::new();
        let mut layer_outputs = Vec::new();
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..spec.layer_count() {
            let (nin, nout) = (widths[l], widths[l + 1]);
            layer_inputs.push(nin);
            layer_outputs.push(nout);
            weights.push(vec![0.0; nin * nout]);
            biases.push(vec![0.0; nout]);
        }
        Self {
            layer_inputs,
            layer_outputs,
            weights,
            biases,
        }
    }

    /// Seeded uniform init in +-sqrt(6 / (fan_in + fan_out)), zero biases.
    pub fn xavier<R: Rng + ?Sized>(spec: &DenseNetSpec, rng: &mut R) -> Self {
        let mut p = Self::zeros(spec);
        for l in 0..p.layer_count() {
            let limit = (6.0 / (p.layer_inputs[l] + p.layer_outputs[l]) as f64).sqrt();
            for w in &mut p.weights[l] {
                *w = rng.gen_range(-limit..limit);
            }
        }
        p
    }

    pub fn layer_count(&self) -> usize {
        self.weights.len()
    }

    pub fn layer_dims(&self, layer: usize) -> (usize, usize) {
        (self.layer_inputs[layer], self.layer_outputs[layer])
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.weights[layer]
    }

    pub fn biases_mut(&mut self, layer: usize) -> &mut [f64] {
        &mut self.biases[layer]
    }

    /// Total number of scalar parameters.
    pub fn len(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape_matches(&self, other: &ParameterSet) -> bool {
        self.layer_inputs == other.layer_inputs && self.layer_outputs == other.layer_outputs
    }

    /// True when every weight and bias is finite.
    pub fn all_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Visit every parameter in a fixed order (used for hashing and audits).
    pub fn for_each(&self, mut f: impl FnMut(f64)) {
        for l in 0..self.layer_count() {
            self.weights[l].iter().for_each(|&x| f(x));
            self.biases[l].iter().for_each(|&x| f(x));
        }
    }
}

/// Deep copy of a parameter set, used to freeze target-network parameters.
/// Later updates to the source leave the copy untouched.
pub fn copy_to_target(params: &ParameterSet) -> ParameterSet {
    params.clone()
}

/// Accumulated partial derivatives, shaped like a [`ParameterSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBuffer {
    pub(crate) weights: Vec<Vec<f64>>,
    pub(crate) biases: Vec<Vec<f64>>,
}

impl GradientBuffer {
    pub fn zeros(spec: &DenseNetSpec) -> Self {
        let p = ParameterSet::zeros(spec);
        Self {
            weights: p.weights,
            biases: p.biases,
        }
    }

    pub fn zeros_like(params: &ParameterSet) -> Self {
        Self {
            weights: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn reset(&mut self) {
        for w in &mut self.weights {
            w.fill(0.0);
        }
        for b in &mut self.biases {
            b.fill(0.0);
        }
    }

    /// Scale all accumulated gradients, e.g. by `1 / batch_size`.
    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            for x in w {
                *x *= factor;
            }
        }
        for b in &mut self.biases {
            for x in b {
                *x *= factor;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.weights
            .iter()
            .chain(self.biases.iter())
            .all(|v| v.iter().all(|x| x.is_finite()))
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        &self.weights[layer]
    }

    pub fn biases(&self, layer: usize) -> &[f64] {
        &self.biases[layer]
    }
}

/// A dense network: spec plus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    spec: DenseNetSpec,
    params: ParameterSet,
}

/// Scratch buffers for a forward pass with cached intermediates.
///
/// `inputs[l]` is the input to layer `l`; `preacts[l]` its pre-activation.
#[derive(Debug, Clone, Default)]
pub struct ForwardTrace {
    inputs: Vec<Vec<f64>>,
    preacts: Vec<Vec<f64>>,
}

impl DenseNet {
    /// Network with seeded Xavier-uniform weights and zero biases.
    pub fn new<R: Rng + ?Sized>(spec: DenseNetSpec, rng: &mut R) -> Self {
        let params = ParameterSet::xavier(&spec, rng);
        Self { spec, params }
    }

    pub fn from_parts(spec: DenseNetSpec, params: ParameterSet) -> Result<Self> {
        let expected = ParameterSet::zeros(&spec);
        if !expected.shape_matches(&params) {
            return Err(Error::contract("parameter shapes do not match spec"));
        }
        Ok(Self { spec, params })
    }

    pub fn spec(&self) -> &DenseNetSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn set_params(&mut self, params: ParameterSet) -> Result<()> {
        if !self.params.shape_matches(&params) {
            return Err(Error::contract("parameter shapes do not match spec"));
        }
        self.params = params;
        Ok(())
    }

    fn layer_activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.spec.layer_count() {
            Activation::Identity
        } else {
            self.spec.activation
        }
    }

    /// Forward pass. Deterministic given parameters and input.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut trace = ForwardTrace::default();
        self.forward_trace(input, &mut trace)
    }

    /// Forward pass that records per-layer inputs and pre-activations so a
    /// subsequent [`DenseNet::backward_from_trace`] can reuse them.
    pub fn forward_trace(&self, input: &[f64], trace: &mut ForwardTrace) -> Result<Vec<f64>> {
        if input.len() != self.spec.input_width {
            return Err(Error::contract(format!(
                "forward input length {} != input width {}",
                input.len(),
                self.spec.input_width
            )));
        }
        let layers = self.spec.layer_count();
        trace.inputs.resize(layers, Vec::new());
        trace.preacts.resize(layers, Vec::new());

        let mut current = input.to_vec();
        for l in 0..layers {
            let (nin, nout) = self.params.layer_dims(l);
            let w = &self.params.weights[l];
            let b = &self.params.biases[l];
            let mut z = vec![0.0; nout];
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &w[o * nin..(o + 1) * nin];
                let mut acc = b[o];
                for (wi, xi) in row.iter().zip(current.iter()) {
                    acc += wi * xi;
                }
                *zo = acc;
            }
            let act = self.layer_activation(l);
            trace.inputs[l] = std::mem::take(&mut current);
            current = z.iter().map(|&v| act.apply(v)).collect();
            trace.preacts[l] = z;
        }
        Ok(current)
    }

    /// Reverse-mode derivatives of `forward`.
    ///
    /// Accumulates parameter gradients into `grads` (callers zero it between
    /// batches) and returns the gradient with respect to the input.
    pub fn backward(
        &self,
        input: &[f64],
        output_grad: &[f64],
        grads: &mut GradientBuffer,
    ) -> Result<Vec<f64>> {
        let mut trace = ForwardTrace::default();
        self.forward_trace(input, &mut trace)?;
        self.backward_from_trace(&trace, output_grad, grads)
    }

    /// Backward pass reusing a trace produced by [`DenseNet::forward_trace`]
    /// on the same input and parameters.
    pub fn backward_from_trace(
        &self,
        trace: &ForwardTrace,
        output_grad: &[f64],
        grads: &mut GradientBuffer,
    ) -> Result<Vec<f64>> {
        if output_grad.len() != self.spec.output_width {
            return Err(Error::contract(format!(
                "output grad length {} != output width {}",
                output_grad.len(),
                self.spec.output_width
            )));
        }
        let layers = self.spec.layer_count();
        let mut dy = output_grad.to_vec();
        for l in (0..layers).rev() {
            let (nin, nout) = self.params.layer_dims(l);
            let act = self.layer_activation(l);
            let z = &trace.preacts[l];
            let x = &trace.inputs[l];
            // dz = dy * act'(z)
            let mut dz = dy;
            if act != Activation::Identity {
                for (d, &zv) in dz.iter_mut().zip(z.iter()) {
                    *d *= act.derivative(zv);
                }
            }
            let w = &self.params.weights[l];
            let gw = &mut grads.weights[l];
            let gb = &mut grads.biases[l];
            let mut dx = vec![0.0; nin];
            for o in 0..nout {
                let d = dz[o];
                gb[o] += d;
                let row = &w[o * nin..(o + 1) * nin];
                let grow = &mut gw[o * nin..(o + 1) * nin];
                for i in 0..nin {
                    grow[i] += d * x[i];
                    dx[i] += d * row[i];
                }
            }
            dy = dx;
        }
        Ok(dy)
    }
}
