//! Small differentiable classifiers: dense and same-padded 3×3 convolution
//! layers joined by softplus activations, with exact reverse-mode input
//! gradients.

mod train;
mod weights;

pub use train::{train_toy, Architecture, Dataset, ToyTask};
pub use weights::{load_weights, read_weights, save_weights, write_weights};

use crate::error::{invalid, Result};
use crate::numerics::Tensor;

/// One layer of a [`ScoreModel`].
///
/// Weights are stored flat and row-major: dense `[outputs, inputs]`, conv
/// `[out_channels, in_channels, kernel, kernel]`.
#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Dense {
        inputs: usize,
        outputs: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
    /// Stride 1, zero padding `kernel / 2` (spatial size preserved).
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        height: usize,
        width: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
    Softplus,
}

impl Layer {
    pub fn dense(inputs: usize, outputs: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weight.len() != inputs * outputs || bias.len() != outputs {
            return invalid(format!(
                "dense {inputs}->{outputs}: weight has {} values, bias {}",
                weight.len(),
                bias.len()
            ));
        }
        Ok(Layer::Dense {
            inputs,
            outputs,
            weight,
            bias,
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn conv2d(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        height: usize,
        width: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if kernel.is_multiple_of(2) || kernel > 7 {
            return invalid(format!("conv kernel must be odd and at most 7, got {kernel}"));
        }
        if weight.len() != out_channels * in_channels * kernel * kernel || bias.len() != out_channels {
            return invalid(format!(
                "conv {in_channels}->{out_channels} k{kernel}: weight has {} values, bias {}",
                weight.len(),
                bias.len()
            ));
        }
        Ok(Layer::Conv2d {
            in_channels,
            out_channels,
            kernel,
            height,
            width,
            weight,
            bias,
        })
    }

    fn input_len(&self) -> Option<usize> {
        match self {
            Layer::Dense { inputs, .. } => Some(*inputs),
            Layer::Conv2d {
                in_channels,
                height,
                width,
                ..
            } => Some(in_channels * height * width),
            Layer::Softplus => None,
        }
    }

    fn output_len(&self, input_len: usize) -> usize {
        match self {
            Layer::Dense { outputs, .. } => *outputs,
            Layer::Conv2d {
                out_channels,
                height,
                width,
                ..
            } => out_channels * height * width,
            Layer::Softplus => input_len,
        }
    }

    fn forward(&self, input: &[f64]) -> Vec<f64> {
        match self {
            Layer::Dense {
                inputs,
                outputs,
                weight,
                bias,
            } => (0..*outputs)
                .map(|o| {
                    let row = &weight[o * inputs..(o + 1) * inputs];
                    bias[o] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
                })
                .collect(),
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                height,
                width,
                weight,
                bias,
            } => {
                let (h, w, k) = (*height, *width, *kernel);
                let mut out = vec![0.0; out_channels * h * w];
                for o in 0..*out_channels {
                    let plane = &mut out[o * h * w..(o + 1) * h * w];
                    plane.iter_mut().for_each(|v| *v = bias[o]);
                    for c in 0..*in_channels {
                        let src = &input[c * h * w..(c + 1) * h * w];
                        let wbase = (o * in_channels + c) * k * k;
                        for_each_tap(h, w, k, |tap, y, xs, shift| {
                            let wv = weight[wbase + tap];
                            let out = y * w + xs.start..y * w + xs.end;
                            let from = (out.start as isize + shift) as usize;
                            for (dst, s) in plane[out.clone()]
                                .iter_mut()
                                .zip(&src[from..from + out.len()])
                            {
                                *dst += wv * s;
                            }
                        });
                    }
                }
                out
            }
            Layer::Softplus => input.iter().map(|&z| softplus(z)).collect(),
        }
    }

    /// Pulls `grad_out` back through the layer. When `params` is given the
    /// weight and bias gradients are accumulated into it (same layout as the
    /// layer's weight followed by its bias).
    fn backward(&self, input: &[f64], grad_out: &[f64], params: Option<&mut [f64]>) -> Vec<f64> {
        match self {
            Layer::Dense {
                inputs,
                outputs,
                weight,
                ..
            } => {
                let mut grad_in = vec![0.0; *inputs];
                for o in 0..*outputs {
                    let g = grad_out[o];
                    if g == 0.0 {
                        continue;
                    }
                    let row = &weight[o * inputs..(o + 1) * inputs];
                    for (gi, w) in grad_in.iter_mut().zip(row) {
                        *gi += g * w;
                    }
                }
                if let Some(p) = params {
                    let (gw, gb) = p.split_at_mut(inputs * outputs);
                    for o in 0..*outputs {
                        let g = grad_out[o];
                        gb[o] += g;
                        for (gwi, x) in gw[o * inputs..(o + 1) * inputs].iter_mut().zip(input) {
                            *gwi += g * x;
                        }
                    }
                }
                grad_in
            }
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel,
                height,
                width,
                weight,
                ..
            } => {
                let (h, w, k) = (*height, *width, *kernel);
                let mut grad_in = vec![0.0; in_channels * h * w];
                let mut params = params;
                for o in 0..*out_channels {
                    let g = &grad_out[o * h * w..(o + 1) * h * w];
                    if let Some(p) = params.as_deref_mut() {
                        p[out_channels * in_channels * k * k + o] += g.iter().sum::<f64>();
                    }
                    for c in 0..*in_channels {
                        let src = &input[c * h * w..(c + 1) * h * w];
                        let dst = &mut grad_in[c * h * w..(c + 1) * h * w];
                        let wbase = (o * in_channels + c) * k * k;
                        let mut wgrad = [0.0; 49];
                        for_each_tap(h, w, k, |tap, y, xs, shift| {
                            let wv = weight[wbase + tap];
                            let out = y * w + xs.start..y * w + xs.end;
                            let from = (out.start as isize + shift) as usize;
                            let inp = from..from + out.len();
                            let mut acc = 0.0;
                            for ((gi, di), si) in g[out]
                                .iter()
                                .zip(&mut dst[inp.clone()])
                                .zip(&src[inp])
                            {
                                *di += gi * wv;
                                acc += gi * si;
                            }
                            wgrad[tap] += acc;
                        });
                        if let Some(p) = params.as_deref_mut() {
                            for (tap, v) in wgrad[..k * k].iter().enumerate() {
                                p[wbase + tap] += v;
                            }
                        }
                    }
                }
                grad_in
            }
            Layer::Softplus => input
                .iter()
                .zip(grad_out)
                .map(|(&z, &g)| g * sigmoid(z))
                .collect(),
        }
    }

    fn param_count(&self) -> usize {
        match self {
            Layer::Dense { weight, bias, .. } | Layer::Conv2d { weight, bias, .. } => {
                weight.len() + bias.len()
            }
            Layer::Softplus => 0,
        }
    }

    fn params_mut(&mut self) -> Option<(&mut Vec<f64>, &mut Vec<f64>)> {
        match self {
            Layer::Dense { weight, bias, .. } | Layer::Conv2d { weight, bias, .. } => {
                Some((weight, bias))
            }
            Layer::Softplus => None,
        }
    }
}

/// Visits every kernel tap of a same-padded `k×k` convolution over an
/// `h×w` plane. For each tap and output row `y` the callback gets the valid
/// output column range and the flat offset from output index to input index.
fn for_each_tap(h: usize, w: usize, k: usize, mut visit: impl FnMut(usize, usize, std::ops::Range<usize>, isize)) {
    let pad = (k / 2) as isize;
    for ky in 0..k {
        let dy = ky as isize - pad;
        let ys = (-dy).max(0) as usize..(h as isize - dy).min(h as isize).max(0) as usize;
        for kx in 0..k {
            let dx = kx as isize - pad;
            let xs = (-dx).max(0) as usize..(w as isize - dx).min(w as isize).max(0) as usize;
            if xs.is_empty() {
                continue;
            }
            let shift = dy * w as isize + dx;
            for y in ys.clone() {
                visit(ky * k + kx, y, xs.clone(), shift);
            }
        }
    }
}

/// `log(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Derivative of [`softplus`], the logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Predicted label and the score vector it was read from.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub class_index: usize,
    pub scores: Vec<f64>,
}

/// Argmax with ties broken by the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// A classifier `R^d → R^k` built from [`Layer`]s.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreModel {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    classes: usize,
}

struct Trace {
    /// `activations[l]` is the input to layer `l`; the last entry holds the scores.
    activations: Vec<Vec<f64>>,
}

impl ScoreModel {
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return invalid(format!("invalid input shape {input_shape:?}"));
        }
        let mut len: usize = input_shape.iter().product();
        for (i, layer) in layers.iter().enumerate() {
            if let Some(expected) = layer.input_len() {
                if expected != len {
                    return invalid(format!(
                        "layer {i} expects {expected} inputs but receives {len}"
                    ));
                }
            }
            len = layer.output_len(len);
        }
        if !matches!(layers.last(), Some(Layer::Dense { .. })) {
            return invalid("the final layer must be dense (it emits the class scores)");
        }
        if len == 0 {
            return invalid("model has no outputs");
        }
        Ok(Self {
            input_shape,
            layers,
            classes: len,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.shape() != self.input_shape.as_slice() {
            return invalid(format!(
                "input shape {:?} does not match model input {:?}",
                x.shape(),
                self.input_shape
            ));
        }
        Ok(())
    }

    fn check_class(&self, class: usize) -> Result<()> {
        if class >= self.classes {
            return invalid(format!(
                "class index {class} out of range for {} classes",
                self.classes
            ));
        }
        Ok(())
    }

    fn trace(&self, input: &[f64]) -> Trace {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        for layer in &self.layers {
            let next = layer.forward(activations.last().unwrap());
            activations.push(next);
        }
        Trace { activations }
    }

    fn backward(&self, trace: &Trace, seed: Vec<f64>, mut param_grads: Option<&mut [f64]>) -> Vec<f64> {
        let mut grad = seed;
        let mut offset = param_grads.as_ref().map_or(0, |p| p.len());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let count = layer.param_count();
            offset -= if param_grads.is_some() { count } else { 0 };
            let slot = param_grads
                .as_deref_mut()
                .filter(|_| count > 0)
                .map(|p| &mut p[offset..offset + count]);
            grad = layer.backward(&trace.activations[l], &grad, slot);
        }
        grad
    }

    /// Class scores `f_w(x)`.
    pub fn forward(&self, x: &Tensor) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.scores_unchecked(x.data()))
    }

    pub(crate) fn scores_unchecked(&self, input: &[f64]) -> Vec<f64> {
        let mut act = input.to_vec();
        for layer in &self.layers {
            act = layer.forward(&act);
        }
        act
    }

    pub fn score(&self, x: &Tensor, class: usize) -> Result<f64> {
        self.check_class(class)?;
        Ok(self.forward(x)?[class])
    }

    pub fn predict(&self, x: &Tensor) -> Result<Prediction> {
        let scores = self.forward(x)?;
        Ok(Prediction {
            class_index: argmax(&scores),
            scores,
        })
    }

    /// Exact gradient `∇_x f_{w,c}(x)`, shaped like `x`.
    pub fn grad_input(&self, x: &Tensor, class: usize) -> Result<Tensor> {
        self.check_input(x)?;
        self.check_class(class)?;
        let trace = self.trace(x.data());
        let mut seed = vec![0.0; self.classes];
        seed[class] = 1.0;
        Ok(x.with_data(self.backward(&trace, seed, None)))
    }

    pub(crate) fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Softmax cross-entropy loss at one sample; parameter gradients are
    /// accumulated into `grads` (flat, layer order, weight then bias).
    pub(crate) fn accumulate_loss_grad(&self, input: &[f64], label: usize, grads: &mut [f64]) -> f64 {
        let trace = self.trace(input);
        let scores = trace.activations.last().unwrap();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let mut seed: Vec<f64> = exps.iter().map(|e| e / total).collect();
        let loss = -(seed[label].max(1e-300)).ln();
        seed[label] -= 1.0;
        self.backward(&trace, seed, Some(grads));
        loss
    }

    /// `params -= step * grads`, layer by layer in the same flat layout.
    pub(crate) fn apply_update(&mut self, grads: &[f64], step: f64, decay: f64) {
        let mut offset = 0;
        for layer in &mut self.layers {
            if let Some((w, b)) = layer.params_mut() {
                for v in w.iter_mut() {
                    *v -= step * (grads[offset] + decay * *v);
                    offset += 1;
                }
                for v in b.iter_mut() {
                    *v -= step * grads[offset];
                    offset += 1;
                }
            }
        }
    }

    /// Multiplies the output layer (weight and bias) by `factor`.
    pub(crate) fn scale_scores(&mut self, factor: f64) {
        if let Some((w, b)) = self.layers.last_mut().and_then(Layer::params_mut) {
            w.iter_mut().chain(b.iter_mut()).for_each(|v| *v *= factor);
        }
    }

    /// Rounds every parameter to the nearest `f32` so weight files
    /// round-trip exactly.
    pub(crate) fn quantize_to_f32(&mut self) {
        for layer in &mut self.layers {
            if let Some((w, b)) = layer.params_mut() {
                for v in w.iter_mut().chain(b.iter_mut()) {
                    *v = *v as f32 as f64;
                }
            }
        }
    }
}
