use std::collections::BTreeMap;

use rand_distr::{Distribution, Normal};

use crate::data::ImageTensor;
use crate::error::{Error, Result};
use crate::numerics::{softplus, NodeId, Scalar, Tape, Tensor};
use crate::rng;

pub const LEAKY_SLOPE: f64 = 0.2;
pub const DEFAULT_VAR_FLOOR: f64 = 1e-6;
const KERNEL: usize = 3;
const VAR_BIAS_INIT: f64 = 0.05;

/// Shape of the network: a stack of same-width convolutions followed by a
/// mean head and a variance head, both upsampled by sub-pixel shuffling.
/// With `skip`, the mean head predicts a residual over the
/// nearest-upsampled input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArchDescriptor {
    pub in_channels: usize,
    pub width: usize,
    pub body_layers: usize,
    pub upscale: usize,
    pub var_floor: f64,
    pub skip: bool,
}

impl Default for ArchDescriptor {
    fn default() -> Self {
        Self {
            in_channels: 3,
            width: 32,
            body_layers: 4,
            upscale: 4,
            var_floor: DEFAULT_VAR_FLOOR,
            skip: false,
        }
    }
}

impl ArchDescriptor {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.width == 0 || self.body_layers == 0 || self.upscale == 0 {
            return Err(Error::InvalidArgument(format!("degenerate architecture {self:?}")));
        }
        if !(self.var_floor > 0.0 && self.var_floor.is_finite()) {
            return Err(Error::InvalidArgument(format!("variance floor must be positive, got {}", self.var_floor)));
        }
        Ok(())
    }

    /// `(name, dims)` of every tensor in forward order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut c = self.in_channels;
        for i in 0..self.body_layers {
            out.push((format!("body.{i}.weight"), vec![self.width, c, KERNEL, KERNEL]));
            out.push((format!("body.{i}.bias"), vec![self.width]));
            c = self.width;
        }
        let r2 = self.upscale * self.upscale;
        out.push(("mean_head.weight".into(), vec![self.in_channels * r2, c, KERNEL, KERNEL]));
        out.push(("mean_head.bias".into(), vec![self.in_channels * r2]));
        out.push(("var_head.weight".into(), vec![r2, c, KERNEL, KERNEL]));
        out.push(("var_head.bias".into(), vec![r2]));
        out
    }

    /// Recovers the descriptor from a set of named tensors.
    pub fn infer(tensors: &BTreeMap<String, Tensor>, var_floor: f64, skip: bool) -> Result<Self> {
        let first = tensors
            .get("body.0.weight")
            .ok_or_else(|| Error::Shape("missing body.0.weight".into()))?;
        let body_layers = (0..).take_while(|i| tensors.contains_key(&format!("body.{i}.weight"))).count();
        let var = tensors
            .get("var_head.bias")
            .ok_or_else(|| Error::Shape("missing var_head.bias".into()))?;
        let r2 = var.numel();
        let upscale = (r2 as f64).sqrt().round() as usize;
        let arch = Self {
            in_channels: first.dims()[1],
            width: first.dims()[0],
            body_layers,
            upscale,
            var_floor,
            skip,
        };
        arch.validate()?;
        Ok(arch)
    }
}

/// Named parameter tensors plus the architecture they realize.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    arch: ArchDescriptor,
    tensors: BTreeMap<String, Tensor>,
}

impl NetworkParams {
    /// Checks every tensor against `arch.layout()`. The variance floor is
    /// rounded to f32 so that it survives a checkpoint round trip.
    pub fn new(arch: ArchDescriptor, tensors: BTreeMap<String, Tensor>) -> Result<Self> {
        arch.validate()?;
        let arch = ArchDescriptor { var_floor: arch.var_floor as f32 as f64, ..arch };
        let layout = arch.layout();
        if layout.len() != tensors.len() {
            return Err(Error::Shape(format!("expected {} tensors, got {}", layout.len(), tensors.len())));
        }
        for (name, dims) in &layout {
            let t = tensors.get(name).ok_or_else(|| Error::Shape(format!("missing tensor {name}")))?;
            if t.dims() != dims.as_slice() {
                return Err(Error::Shape(format!("{name}: expected {dims:?}, got {:?}", t.dims())));
            }
            if !t.is_finite() {
                return Err(Error::NonFinite(name.clone()));
            }
        }
        Ok(Self { arch, tensors })
    }

    /// He-normal weights and zero body biases. The mean head starts at
    /// mid-gray (or at zero residual with `skip`); the variance head starts
    /// at a small positive variance.
    pub fn init(arch: ArchDescriptor, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut r = rng::stream(seed);
        let mut tensors = BTreeMap::new();
        let raw_var_bias = (VAR_BIAS_INIT.exp_m1()).ln();
        for (name, dims) in arch.layout() {
            let n: usize = dims.iter().product();
            let values: Vec<f32> = if dims.len() == 4 {
                let fan_in = (dims[1] * dims[2] * dims[3]) as f64;
                let gain = if name.starts_with("body") { 2.0 / (1.0 + LEAKY_SLOPE * LEAKY_SLOPE) } else { 0.1 };
                let normal = Normal::new(0.0, (gain / fan_in).sqrt()).expect("positive std");
                (0..n).map(|_| normal.sample(&mut r) as f32).collect()
            } else if name == "mean_head.bias" && !arch.skip {
                vec![0.5; n]
            } else if name == "var_head.bias" {
                vec![raw_var_bias as f32; n]
            } else {
                vec![0.0; n]
            };
            tensors.insert(name, Tensor::new(dims, values)?);
        }
        Self::new(arch, tensors)
    }

    pub fn arch(&self) -> &ArchDescriptor {
        &self.arch
    }

    pub fn set_var_floor(&mut self, var_floor: f64) -> Result<()> {
        let arch = ArchDescriptor { var_floor: var_floor as f32 as f64, ..self.arch };
        arch.validate()?;
        self.arch = arch;
        Ok(())
    }

    pub fn tensors(&self) -> &BTreeMap<String, Tensor> {
        &self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    /// Tensors in layout (forward) order.
    pub fn ordered(&self) -> Vec<&Tensor> {
        self.arch.layout().iter().map(|(n, _)| &self.tensors[n]).collect()
    }

    /// Replaces tensors in layout order.
    pub fn set_ordered(&mut self, values: Vec<Tensor>) -> Result<()> {
        let layout = self.arch.layout();
        if values.len() != layout.len() {
            return Err(Error::Shape(format!("expected {} tensors, got {}", layout.len(), values.len())));
        }
        for ((name, dims), t) in layout.into_iter().zip(values) {
            if t.dims() != dims.as_slice() {
                return Err(Error::Shape(format!("{name}: expected {dims:?}, got {:?}", t.dims())));
            }
            if !t.is_finite() {
                return Err(Error::NonFinite(name));
            }
            self.tensors.insert(name, t);
        }
        Ok(())
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }
}

/// Tape nodes for the two heads.
#[derive(Clone, Copy, Debug)]
pub struct HeadNodes {
    pub mean: NodeId,
    pub variance: NodeId,
}

/// Records the forward pass on `tape`. `params` holds one node per tensor in
/// layout order and `input` is an NCHW low-resolution batch.
pub fn forward_graph<T: Scalar>(
    tape: &mut Tape<T>,
    arch: &ArchDescriptor,
    params: &[NodeId],
    input: NodeId,
) -> Result<HeadNodes> {
    let expected = 2 * arch.body_layers + 4;
    if params.len() != expected {
        return Err(Error::Shape(format!("expected {expected} parameter nodes, got {}", params.len())));
    }
    check_input(arch, tape.value(input).dims())?;
    let slope = T::of_f64(LEAKY_SLOPE);
    let mut h = input;
    for layer in params[..2 * arch.body_layers].chunks(2) {
        h = tape.conv2d(h, layer[0], layer[1])?;
        h = tape.leaky_relu(h, slope);
    }
    let k = 2 * arch.body_layers;
    let m = tape.conv2d(h, params[k], params[k + 1])?;
    let mut mean = tape.pixel_shuffle(m, arch.upscale)?;
    if arch.skip {
        let skip = tape.value(input).upsample_nearest(arch.upscale)?;
        let skip = tape.constant(skip);
        mean = tape.add(mean, skip)?;
    }
    let v = tape.conv2d(h, params[k + 2], params[k + 3])?;
    let v = tape.pixel_shuffle(v, arch.upscale)?;
    let v = tape.softplus(v);
    let variance = tape.add_scalar(v, T::of_f64(arch.var_floor));
    Ok(HeadNodes { mean, variance })
}

fn check_input(arch: &ArchDescriptor, dims: &[usize]) -> Result<()> {
    match dims {
        [_, c, h, w] if *c == arch.in_channels && *h >= 8 && *w >= 8 => Ok(()),
        _ => Err(Error::Shape(format!(
            "network input must be N x {} x H x W with H, W >= 8, got {dims:?}",
            arch.in_channels
        ))),
    }
}

/// Network output for a batch: `mean` is N x 3 x 4H x 4W (unclamped) and
/// `variance` is N x 1 x 4H x 4W, strictly positive.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveOutput {
    pub mean: Tensor,
    pub variance: Tensor,
}

impl PredictiveOutput {
    pub fn batch_len(&self) -> usize {
        self.mean.dims()[0]
    }

    /// Predicted image `i`, clamped to the unit range.
    pub fn mean_image(&self, i: usize) -> Result<ImageTensor> {
        ImageTensor::from_nchw(&self.mean, i)
    }

    /// Variance map `i` in row-major order.
    pub fn variance_map(&self, i: usize) -> &[f32] {
        let plane = self.variance.dims()[2] * self.variance.dims()[3];
        &self.variance.values()[i * plane..(i + 1) * plane]
    }

    /// Pixel mean of variance map `i`.
    pub fn mean_variance(&self, i: usize) -> f64 {
        let m = self.variance_map(i);
        m.iter().map(|&v| v as f64).sum::<f64>() / m.len() as f64
    }
}

/// Inference without recording a tape.
pub fn forward_batch(params: &NetworkParams, input: &Tensor) -> Result<PredictiveOutput> {
    let arch = params.arch();
    check_input(arch, input.dims())?;
    let t = params.ordered();
    let slope = LEAKY_SLOPE as f32;
    let mut h = input.conv2d(t[0], t[1])?.leaky_relu(slope);
    for layer in t[2..2 * arch.body_layers].chunks(2) {
        h = h.conv2d(layer[0], layer[1])?.leaky_relu(slope);
    }
    let k = 2 * arch.body_layers;
    let mut mean = h.conv2d(t[k], t[k + 1])?.pixel_shuffle(arch.upscale)?;
    if arch.skip {
        mean = mean.add(&input.upsample_nearest(arch.upscale)?)?;
    }
    let floor = arch.var_floor as f32;
    let variance = h
        .conv2d(t[k + 2], t[k + 3])?
        .pixel_shuffle(arch.upscale)?
        .map(|v| softplus(v) + floor);
    if !mean.is_finite() || !variance.is_finite() {
        return Err(Error::NonFinite("network output".into()));
    }
    Ok(PredictiveOutput { mean, variance })
}

/// Inference on a single low-resolution image.
pub fn forward(params: &NetworkParams, x: &ImageTensor) -> Result<PredictiveOutput> {
    forward_batch(params, &x.to_nchw())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(seed: u64, n: usize, side: usize) -> Tensor {
        use rand::Rng;
        let mut r = rng::stream(seed);
        Tensor::new(vec![n, 3, side, side], (0..n * 3 * side * side).map(|_| r.random::<f32>()).collect()).unwrap()
    }

    #[test]
    fn shapes_follow_upscale() {
        let p = NetworkParams::init(ArchDescriptor::default(), 1).unwrap();
        let out = forward_batch(&p, &input(2, 2, 16)).unwrap();
        assert_eq!(out.mean.dims(), &[2, 3, 64, 64]);
        assert_eq!(out.variance.dims(), &[2, 1, 64, 64]);
        assert!(out.variance.values().iter().all(|&v| v > 0.0));
        assert_eq!(out, forward_batch(&p, &input(2, 2, 16)).unwrap());
    }

    #[test]
    fn skip_adds_nearest_upsampled_input() {
        let arch = ArchDescriptor { skip: true, ..ArchDescriptor::default() };
        let mut p = NetworkParams::init(arch, 1).unwrap();
        let zeroed: Vec<Tensor> = p
            .arch()
            .layout()
            .iter()
            .map(|(n, d)| if n.starts_with("mean_head") { Tensor::zeros(d) } else { p.get(n).unwrap().clone() })
            .collect();
        p.set_ordered(zeroed).unwrap();
        let x = input(3, 1, 8);
        let out = forward_batch(&p, &x).unwrap();
        assert_eq!(out.mean, x.upsample_nearest(4).unwrap());
    }

    #[test]
    fn small_or_wrong_inputs_rejected() {
        let p = NetworkParams::init(ArchDescriptor::default(), 1).unwrap();
        assert!(forward_batch(&p, &input(0, 1, 4)).is_err());
        assert!(forward_batch(&p, &Tensor::zeros(&[1, 1, 8, 8])).is_err());
    }

    #[test]
    fn tape_and_plain_forward_agree() {
        let p = NetworkParams::init(ArchDescriptor::default(), 3).unwrap();
        let x = input(4, 1, 8);
        let mut tape = Tape::new();
        let nodes: Vec<_> = p.ordered().into_iter().map(|t| tape.param(t.clone())).collect();
        let xi = tape.constant(x.clone());
        let heads = forward_graph(&mut tape, p.arch(), &nodes, xi).unwrap();
        let plain = forward_batch(&p, &x).unwrap();
        assert_eq!(tape.value(heads.mean), &plain.mean);
        for (a, b) in tape.value(heads.variance).values().iter().zip(plain.variance.values()) {
            assert!((a - b).abs() <= 1e-7 * a.abs().max(1.0));
        }
    }

    #[test]
    fn init_is_seeded_and_validated() {
        let a = NetworkParams::init(ArchDescriptor::default(), 5).unwrap();
        assert_eq!(a, NetworkParams::init(ArchDescriptor::default(), 5).unwrap());
        assert_ne!(a, NetworkParams::init(ArchDescriptor::default(), 6).unwrap());
        let arch = ArchDescriptor::infer(a.tensors(), 1e-6f32 as f64, false).unwrap();
        assert_eq!(arch, *a.arch());
        let mut t = a.tensors().clone();
        t.remove("var_head.bias");
        assert!(NetworkParams::new(*a.arch(), t).is_err());
    }
}
