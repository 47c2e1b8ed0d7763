//! Sequential layer stacks with cached activations and backprop.
//!
//! A [`Stack`] owns an ordered list of layers, validates the whole shape
//! pipeline at construction time, and exposes `forward` (which returns the
//! full activation trace) plus `backward` (which consumes that trace and
//! the upstream gradient). Models are assembled from several stacks that
//! share activations at their seams.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::{Element, Tensor};

/// Declarative description of one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerSpec {
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    ConvTranspose2d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Relu,
    Sigmoid,
    /// Collapse `[C, H, W]` (or any shape) to a flat feature vector.
    Flatten,
}

impl LayerSpec {
    /// Human-readable layer kind for error messages.
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "Conv2d",
            LayerSpec::ConvTranspose2d { .. } => "ConvTranspose2d",
            LayerSpec::Dense { .. } => "Dense",
            LayerSpec::Relu => "Relu",
            LayerSpec::Sigmoid => "Sigmoid",
            LayerSpec::Flatten => "Flatten",
        }
    }

    /// Per-sample output shape for a per-sample `input` shape, or a
    /// description of why the input is unacceptable.
    pub fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        match self {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let [c, h, w] = shape3(input)?;
                if c != *in_channels {
                    return Err(format!("expects {in_channels} channels, input has {c}"));
                }
                let oh = ops::conv_output_side(h, *kernel, *stride, *padding)
                    .map_err(|e| e.to_string())?;
                let ow = ops::conv_output_side(w, *kernel, *stride, *padding)
                    .map_err(|e| e.to_string())?;
                Ok(vec![*out_channels, oh, ow])
            }
            LayerSpec::ConvTranspose2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let [c, h, w] = shape3(input)?;
                if c != *in_channels {
                    return Err(format!("expects {in_channels} channels, input has {c}"));
                }
                let oh = ops::conv_transpose_output_side(h, *kernel, *stride, *padding)
                    .map_err(|e| e.to_string())?;
                let ow = ops::conv_transpose_output_side(w, *kernel, *stride, *padding)
                    .map_err(|e| e.to_string())?;
                Ok(vec![*out_channels, oh, ow])
            }
            LayerSpec::Dense { inputs, outputs } => {
                if input.len() != 1 {
                    return Err(format!(
                        "expects a flat feature vector, input shape is {input:?}"
                    ));
                }
                if input[0] != *inputs {
                    return Err(format!("expects {inputs} features, input has {}", input[0]));
                }
                Ok(vec![*outputs])
            }
            LayerSpec::Relu | LayerSpec::Sigmoid => Ok(input.to_vec()),
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
        }
    }

    fn has_params(&self) -> bool {
        matches!(
            self,
            LayerSpec::Conv2d { .. } | LayerSpec::ConvTranspose2d { .. } | LayerSpec::Dense { .. }
        )
    }
}

fn shape3(input: &[usize]) -> std::result::Result<[usize; 3], String> {
    match input {
        [c, h, w] => Ok([*c, *h, *w]),
        other => Err(format!("expects [C, H, W] input, got {other:?}")),
    }
}

/// One layer: its spec plus owned parameters (absent for stateless layers).
#[derive(Debug, Clone, PartialEq)]
struct Layer<T> {
    spec: LayerSpec,
    weight: Option<Tensor<T>>,
    bias: Option<Tensor<T>>,
}

/// Per-layer parameter gradients, aligned with the stack's layer order.
#[derive(Debug, Clone)]
pub struct LayerGrads<T> {
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

impl<T: Element> LayerGrads<T> {
    /// Zero gradients shaped like the given layer's parameters.
    fn zeros_like(layer: &Layer<T>) -> Self {
        LayerGrads {
            weight: layer.weight.as_ref().map(|w| Tensor::zeros(w.shape().to_vec())),
            bias: layer.bias.as_ref().map(|b| Tensor::zeros(b.shape().to_vec())),
        }
    }
}

/// An ordered stack of layers with a validated shape pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Stack<T = f32> {
    layers: Vec<Layer<T>>,
    /// Per-sample shapes: `shapes[i]` feeds layer `i`; the last entry is
    /// the stack's output shape.
    shapes: Vec<Vec<usize>>,
}

impl<T: Element> Stack<T> {
    /// Build a stack for the given per-sample input shape, initialising
    /// parameters from `rng`.
    ///
    /// Weights draw from the Glorot uniform band
    /// `±sqrt(6 / (fan_in + fan_out))` (receptive-field fans for the
    /// convolutions); biases start at zero. Initialisation order is fixed
    /// by layer order, so a given rng state always yields the same stack.
    pub fn new<R: Rng + ?Sized>(
        specs: Vec<LayerSpec>,
        input_shape: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let mut shapes = vec![input_shape.to_vec()];
        for (i, spec) in specs.iter().enumerate() {
            let out = spec
                .output_shape(shapes.last().expect("shapes is never empty"))
                .map_err(|detail| Error::LayerGeometry {
                    layer: i,
                    kind: spec.kind(),
                    input: shapes.last().unwrap().clone(),
                    detail,
                })?;
            shapes.push(out);
        }
        let layers = specs
            .into_iter()
            .map(|spec| {
                let (weight, bias) = init_params(&spec, rng);
                Layer { spec, weight, bias }
            })
            .collect();
        Ok(Self { layers, shapes })
    }

    /// Per-sample output shape.
    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().expect("shapes is never empty")
    }

    /// Per-sample input shape.
    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Total parameter element count.
    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                l.weight.as_ref().map_or(0, Tensor::len) + l.bias.as_ref().map_or(0, Tensor::len)
            })
            .sum()
    }

    fn check_batch_input(&self, x: &Tensor<T>) -> Result<()> {
        let expected = &self.shapes[0];
        if x.rank() != expected.len() + 1 || &x.shape()[1..] != expected.as_slice() {
            let mut want = vec![0]; // batch axis is free
            want.extend_from_slice(expected);
            return Err(Error::ShapeMismatch {
                context: "stack input (leading axis is the batch)",
                expected: want,
                actual: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Run the stack, returning every activation: `trace[0]` is the input,
    /// `trace[i+1]` the output of layer `i`.
    pub fn forward(&self, x: Tensor<T>) -> Result<Vec<Tensor<T>>> {
        self.check_batch_input(&x)?;
        let n = x.dim(0);
        let mut trace = Vec::with_capacity(self.layers.len() + 1);
        trace.push(x);
        for (i, layer) in self.layers.iter().enumerate() {
            let input = trace.last().expect("trace is never empty");
            let out = apply_forward(layer, input)?;
            debug_assert_eq!(&out.shape()[1..], self.shapes[i + 1].as_slice());
            debug_assert_eq!(out.dim(0), n);
            trace.push(out);
        }
        Ok(trace)
    }

    /// Run the stack keeping only the final output (inference path).
    pub fn infer(&self, x: Tensor<T>) -> Result<Tensor<T>> {
        self.check_batch_input(&x)?;
        let mut cur = x;
        for layer in &self.layers {
            cur = apply_forward(layer, &cur)?;
        }
        Ok(cur)
    }

    /// Backpropagate `grad_out` through the stack given the forward trace.
    ///
    /// Returns the gradient with respect to the stack input and the
    /// per-layer parameter gradients (stateless layers get `None`s).
    pub fn backward(
        &self,
        trace: &[Tensor<T>],
        grad_out: Tensor<T>,
    ) -> Result<(Tensor<T>, Vec<LayerGrads<T>>)> {
        assert_eq!(
            trace.len(),
            self.layers.len() + 1,
            "forward trace does not match stack depth"
        );
        let mut grads: Vec<LayerGrads<T>> = self
            .layers
            .iter()
            .map(LayerGrads::zeros_like)
            .collect();
        let mut dy = grad_out;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace[i];
            let output = &trace[i + 1];
            if dy.shape() != output.shape() {
                return Err(Error::ShapeMismatch {
                    context: "stack upstream gradient",
                    expected: output.shape().to_vec(),
                    actual: dy.shape().to_vec(),
                });
            }
            let (dx, dw, db) = apply_backward(layer, input, output, dy)?;
            grads[i].weight = dw;
            grads[i].bias = db;
            dy = dx;
        }
        Ok((dy, grads))
    }

    /// Visit parameters in layer order (weight before bias), passing a
    /// stable name like `"2.weight"`.
    pub fn visit_params(&self, f: &mut impl FnMut(String, &Tensor<T>)) {
        for (i, layer) in self.layers.iter().enumerate() {
            if let Some(w) = &layer.weight {
                f(format!("{i}.weight"), w);
            }
            if let Some(b) = &layer.bias {
                f(format!("{i}.bias"), b);
            }
        }
    }

    /// Mutable parameter references in layer order (weight before bias).
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut(), l.bias.as_mut()])
            .flatten()
            .collect()
    }

    /// Parameter references in layer order (weight before bias).
    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_ref(), l.bias.as_ref()])
            .flatten()
            .collect()
    }

    /// Flatten per-layer gradients into the same order as [`Self::params`].
    pub fn flatten_grads(grads: Vec<LayerGrads<T>>) -> Vec<Tensor<T>> {
        grads
            .into_iter()
            .flat_map(|g| [g.weight, g.bias])
            .flatten()
            .collect()
    }

    /// All-zero gradients aligned with [`Self::params`], for paths that
    /// did not execute.
    pub fn zero_grads(&self) -> Vec<Tensor<T>> {
        self.params()
            .iter()
            .map(|p| Tensor::zeros(p.shape().to_vec()))
            .collect()
    }
}

fn init_params<T: Element, R: Rng + ?Sized>(
    spec: &LayerSpec,
    rng: &mut R,
) -> (Option<Tensor<T>>, Option<Tensor<T>>) {
    if !spec.has_params() {
        return (None, None);
    }
    let (shape, fan_in, fan_out, out) = match spec {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            ..
        } => (
            vec![*out_channels, *in_channels, *kernel, *kernel],
            in_channels * kernel * kernel,
            out_channels * kernel * kernel,
            *out_channels,
        ),
        LayerSpec::ConvTranspose2d {
            in_channels,
            out_channels,
            kernel,
            ..
        } => (
            vec![*in_channels, *out_channels, *kernel, *kernel],
            in_channels * kernel * kernel,
            out_channels * kernel * kernel,
            *out_channels,
        ),
        LayerSpec::Dense { inputs, outputs } => {
            (vec![*inputs, *outputs], *inputs, *outputs, *outputs)
        }
        _ => unreachable!("stateless layers have no parameters"),
    };
    // Glorot uniform: (-limit, limit) with limit = sqrt(6 / (fan_in +
    // fan_out)), receptive-field fans for the convolutions. Draws happen
    // in f64 so f32 and f64 stacks built from the same rng state start
    // from the same numbers. Biases start at zero.
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let len = shape.iter().product();
    let data = (0..len)
        .map(|_| T::from_f64_lossy(rng.random_range(-limit..limit)))
        .collect();
    let weight = Tensor::new(shape, data).expect("init length matches shape");
    (Some(weight), Some(Tensor::zeros(vec![out])))
}

fn apply_forward<T: Element>(layer: &Layer<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    match &layer.spec {
        LayerSpec::Conv2d { stride, padding, .. } => ops::conv2d_forward(
            x,
            layer.weight.as_ref().expect("conv has weights"),
            layer.bias.as_ref().expect("conv has bias"),
            *stride,
            *padding,
        ),
        LayerSpec::ConvTranspose2d { stride, padding, .. } => ops::conv_transpose2d_forward(
            x,
            layer.weight.as_ref().expect("conv_t has weights"),
            layer.bias.as_ref().expect("conv_t has bias"),
            *stride,
            *padding,
        ),
        LayerSpec::Dense { .. } => ops::dense_forward(
            x,
            layer.weight.as_ref().expect("dense has weights"),
            layer.bias.as_ref().expect("dense has bias"),
        ),
        LayerSpec::Relu => Ok(ops::relu_forward(x)),
        LayerSpec::Sigmoid => Ok(ops::sigmoid_forward(x)),
        LayerSpec::Flatten => {
            let n = x.dim(0);
            let flat: usize = x.shape()[1..].iter().product();
            x.clone().into_reshaped(vec![n, flat])
        }
    }
}

#[allow(clippy::type_complexity)]
fn apply_backward<T: Element>(
    layer: &Layer<T>,
    input: &Tensor<T>,
    output: &Tensor<T>,
    dy: Tensor<T>,
) -> Result<(Tensor<T>, Option<Tensor<T>>, Option<Tensor<T>>)> {
    match &layer.spec {
        LayerSpec::Conv2d { stride, padding, .. } => {
            let (dx, dw, db) = ops::conv2d_backward(
                input,
                layer.weight.as_ref().expect("conv has weights"),
                &dy,
                *stride,
                *padding,
            )?;
            Ok((dx, Some(dw), Some(db)))
        }
        LayerSpec::ConvTranspose2d { stride, padding, .. } => {
            let (dx, dw, db) = ops::conv_transpose2d_backward(
                input,
                layer.weight.as_ref().expect("conv_t has weights"),
                &dy,
                *stride,
                *padding,
            )?;
            Ok((dx, Some(dw), Some(db)))
        }
        LayerSpec::Dense { .. } => {
            let (dx, dw, db) = ops::dense_backward(
                input,
                layer.weight.as_ref().expect("dense has weights"),
                &dy,
            )?;
            Ok((dx, Some(dw), Some(db)))
        }
        LayerSpec::Relu => Ok((ops::relu_backward(input, &dy), None, None)),
        LayerSpec::Sigmoid => Ok((ops::sigmoid_backward(output, &dy), None, None)),
        LayerSpec::Flatten => Ok((dy.into_reshaped(input.shape().to_vec())?, None, None)),
    }
}

// Checkpoint support: overwrite parameters by stable name.
impl<T: Element> Stack<T> {
    /// Replace the named parameter (`"<layer>.weight"`/`"<layer>.bias"`).
    /// The replacement must match the existing shape exactly.
    pub(crate) fn set_param(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let (idx, field) = name
            .split_once('.')
            .ok_or_else(|| Error::CheckpointCorrupt {
                detail: format!("malformed parameter name {name:?}"),
            })?;
        let idx: usize = idx.parse().map_err(|_| Error::CheckpointCorrupt {
            detail: format!("malformed parameter name {name:?}"),
        })?;
        let layer = self
            .layers
            .get_mut(idx)
            .ok_or_else(|| Error::CheckpointCorrupt {
                detail: format!("parameter {name:?} addresses a missing layer"),
            })?;
        let slot = match field {
            "weight" => layer.weight.as_mut(),
            "bias" => layer.bias.as_mut(),
            _ => None,
        }
        .ok_or_else(|| Error::CheckpointCorrupt {
            detail: format!("layer {idx} has no parameter {field:?}"),
        })?;
        if slot.shape() != value.shape() {
            return Err(Error::ShapeMismatch {
                context: "checkpoint parameter",
                expected: slot.shape().to_vec(),
                actual: value.shape().to_vec(),
            });
        }
        *slot = value;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded_rng, stream};

    fn toy_encoder_specs() -> Vec<LayerSpec> {
        vec![
            LayerSpec::Conv2d {
                in_channels: 1,
                out_channels: 2,
                kernel: 3,
                stride: 2,
                padding: 1,
            },
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Dense {
                inputs: 2 * 4 * 4,
                outputs: 5,
            },
        ]
    }

    #[test]
    fn shape_pipeline_is_validated_up_front() {
        let mut rng = seeded_rng(0, stream::INIT);
        let stack: Stack<f32> = Stack::new(toy_encoder_specs(), &[1, 8, 8], &mut rng).unwrap();
        assert_eq!(stack.output_shape(), &[5]);

        // A dense layer whose width disagrees with the conv output must be
        // rejected at construction, naming the offending layer.
        let mut bad = toy_encoder_specs();
        bad[3] = LayerSpec::Dense { inputs: 33, outputs: 5 };
        let err = Stack::<f32>::new(bad, &[1, 8, 8], &mut rng).unwrap_err();
        assert!(matches!(err, Error::LayerGeometry { layer: 3, .. }), "{err}");
    }

    #[test]
    fn forward_trace_has_one_entry_per_layer_plus_input() {
        let mut rng = seeded_rng(1, stream::INIT);
        let stack: Stack<f32> = Stack::new(toy_encoder_specs(), &[1, 8, 8], &mut rng).unwrap();
        let x = Tensor::zeros(vec![3, 1, 8, 8]);
        let trace = stack.forward(x).unwrap();
        assert_eq!(trace.len(), 5);
        assert_eq!(trace[4].shape(), &[3, 5]);
    }

    #[test]
    fn infer_matches_forward_output() {
        let mut rng = seeded_rng(2, stream::INIT);
        let stack: Stack<f32> = Stack::new(toy_encoder_specs(), &[1, 8, 8], &mut rng).unwrap();
        let mut x = Tensor::zeros(vec![2, 1, 8, 8]);
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            *v = (i as f32 * 0.37).sin();
        }
        let trace = stack.forward(x.clone()).unwrap();
        let out = stack.infer(x).unwrap();
        assert_eq!(trace.last().unwrap().data(), out.data());
    }

    #[test]
    fn rejects_wrong_batch_shape() {
        let mut rng = seeded_rng(3, stream::INIT);
        let stack: Stack<f32> = Stack::new(toy_encoder_specs(), &[1, 8, 8], &mut rng).unwrap();
        let err = stack.forward(Tensor::zeros(vec![2, 1, 9, 8])).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn same_seed_same_init() {
        let mut r1 = seeded_rng(7, stream::INIT);
        let mut r2 = seeded_rng(7, stream::INIT);
        let a: Stack<f32> = Stack::new(toy_encoder_specs(), &[1, 8, 8], &mut r1).unwrap();
        let b: Stack<f32> = Stack::new(toy_encoder_specs(), &[1, 8, 8], &mut r2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn param_order_is_stable() {
        let mut rng = seeded_rng(4, stream::INIT);
        let stack: Stack<f32> = Stack::new(toy_encoder_specs(), &[1, 8, 8], &mut rng).unwrap();
        let mut names = Vec::new();
        stack.visit_params(&mut |name, _| names.push(name));
        assert_eq!(names, ["0.weight", "0.bias", "3.weight", "3.bias"]);
        assert_eq!(stack.params().len(), 4);
    }
}
