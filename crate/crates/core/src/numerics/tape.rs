//! Reverse-mode differentiation over a linear tape of tensor ops.
//!
//! Nodes are appended in evaluation order, so the tape is topologically
//! sorted by construction and [`backward`] is a single reverse sweep.

use super::tensor::{conv2d_backward, conv2d_forward, conv_geometry, sigmoid, ConvGeometry};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    AddScalar(NodeId),
    MulScalar(NodeId, T),
    Exp(NodeId),
    Log(NodeId),
    Softplus(NodeId),
    LeakyRelu(NodeId, T),
    Conv2d {
        input: NodeId,
        kernel: NodeId,
        bias: NodeId,
        geometry: ConvGeometry,
        cols: Vec<T>,
    },
    PixelShuffle(NodeId, usize),
    MeanChannels(NodeId),
    Sum(NodeId),
    Mean(NodeId),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records tensor operations for a later [`backward`] sweep.
pub struct Tape<T = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A differentiable input (a parameter).
    pub fn param(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// A non-differentiable input.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn grad_any(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    fn unary(&mut self, a: NodeId, value: Tensor<T>, op: Op<T>) -> NodeId {
        let rg = self.grad_any(&[a]);
        self.push(value, op, rg)
    }

    fn binary(&mut self, a: NodeId, b: NodeId, value: Tensor<T>, op: Op<T>) -> NodeId {
        let rg = self.grad_any(&[a, b]);
        self.push(value, op, rg)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.binary(a, b, v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.binary(a, b, v, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).mul(self.value(b))?;
        Ok(self.binary(a, b, v, Op::Mul(a, b)))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).div(self.value(b))?;
        Ok(self.binary(a, b, v, Op::Div(a, b)))
    }

    pub fn add_scalar(&mut self, a: NodeId, s: T) -> NodeId {
        let v = self.value(a).map(|x| x + s);
        self.unary(a, v, Op::AddScalar(a))
    }

    pub fn mul_scalar(&mut self, a: NodeId, s: T) -> NodeId {
        let v = self.value(a).map(|x| x * s);
        self.unary(a, v, Op::MulScalar(a, s))
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).exp()?;
        Ok(self.unary(a, v, Op::Exp(a)))
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).log()?;
        Ok(self.unary(a, v, Op::Log(a)))
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).softplus();
        self.unary(a, v, Op::Softplus(a))
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: T) -> NodeId {
        let v = self.value(a).leaky_relu(slope);
        self.unary(a, v, Op::LeakyRelu(a, slope))
    }

    pub fn conv2d(&mut self, input: NodeId, kernel: NodeId, bias: NodeId) -> Result<NodeId> {
        let geometry = conv_geometry(self.value(input), self.value(kernel), self.value(bias))?;
        let (v, cols) = conv2d_forward(self.value(input), self.value(kernel), self.value(bias))?;
        let rg = self.grad_any(&[input, kernel, bias]);
        Ok(self.push(
            v,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geometry,
                cols,
            },
            rg,
        ))
    }

    pub fn pixel_shuffle(&mut self, a: NodeId, r: usize) -> Result<NodeId> {
        let v = self.value(a).pixel_shuffle(r)?;
        Ok(self.unary(a, v, Op::PixelShuffle(a, r)))
    }

    pub fn mean_channels(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a).mean_channels()?;
        Ok(self.unary(a, v, Op::MeanChannels(a)))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(T::of_f64(self.value(a).sum()));
        self.unary(a, v, Op::Sum(a))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(T::of_f64(self.value(a).mean()));
        self.unary(a, v, Op::Mean(a))
    }
}

/// Gradients of a scalar loss with respect to every differentiable leaf.
pub struct Gradients<T = f32> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor<T>> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
    match slot {
        Some(acc) => {
            for (a, b) in acc.values_mut().iter_mut().zip(g.values()) {
                *a = *a + *b;
            }
        }
        None => *slot = Some(g),
    }
}

/// Reduces a gradient to the shape of an operand that may have been
/// broadcast from a scalar.
fn unbroadcast<T: Scalar>(g: Tensor<T>, target: &Tensor<T>) -> Tensor<T> {
    if g.dims() == target.dims() {
        g
    } else {
        Tensor::from_parts(target.dims().to_vec(), vec![T::of_f64(g.sum())])
    }
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    Tensor::from_parts(
        a.dims().to_vec(),
        a.values().iter().zip(b.values()).map(|(&x, &y)| f(x, y)).collect(),
    )
}

/// Broadcast-aware elementwise gradient for a binary op: `da = g * fa(a, b)`.
fn binary_grad<T: Scalar>(
    g: &Tensor<T>,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T, T) -> T,
) -> Tensor<T> {
    let n = g.numel();
    let pick = |t: &Tensor<T>, i: usize| if t.numel() == 1 { t.values()[0] } else { t.values()[i] };
    let vals = (0..n).map(|i| f(g.values()[i], pick(a, i), pick(b, i))).collect();
    Tensor::from_parts(g.dims().to_vec(), vals)
}

/// Reverse accumulation from a scalar `loss` node.
pub fn backward<T: Scalar>(tape: &Tape<T>, loss: NodeId) -> Result<Gradients<T>> {
    let loss_value = tape.value(loss);
    if loss_value.numel() != 1 {
        return Err(Error::Shape(format!(
            "backward needs a scalar loss, got dims {:?}",
            loss_value.dims()
        )));
    }
    let mut grads: Vec<Option<Tensor<T>>> = (0..tape.nodes.len()).map(|_| None).collect();
    grads[loss.0] = Some(Tensor::from_parts(loss_value.dims().to_vec(), vec![T::one()]));

    for idx in (0..=loss.0).rev() {
        let node = &tape.nodes[idx];
        if !node.requires_grad || matches!(node.op, Op::Leaf) {
            continue;
        }
        let Some(g) = grads[idx].take() else { continue };
        let needs = |id: NodeId| tape.nodes[id.0].requires_grad;
        let val = |id: NodeId| tape.value(id);
        match &node.op {
            Op::Leaf => unreachable!(),
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -T::one() } else { T::one() };
                if needs(*a) {
                    accumulate(&mut grads[a.0], unbroadcast(g.clone(), val(*a)));
                }
                if needs(*b) {
                    let gb = g.map(|v| v * sign);
                    accumulate(&mut grads[b.0], unbroadcast(gb, val(*b)));
                }
            }
            Op::Mul(a, b) => {
                if needs(*a) {
                    let ga = binary_grad(&g, val(*a), val(*b), |g, _, y| g * y);
                    accumulate(&mut grads[a.0], unbroadcast(ga, val(*a)));
                }
                if needs(*b) {
                    let gb = binary_grad(&g, val(*a), val(*b), |g, x, _| g * x);
                    accumulate(&mut grads[b.0], unbroadcast(gb, val(*b)));
                }
            }
            Op::Div(a, b) => {
                if needs(*a) {
                    let ga = binary_grad(&g, val(*a), val(*b), |g, _, y| g / y);
                    accumulate(&mut grads[a.0], unbroadcast(ga, val(*a)));
                }
                if needs(*b) {
                    let gb = binary_grad(&g, val(*a), val(*b), |g, x, y| -g * x / (y * y));
                    accumulate(&mut grads[b.0], unbroadcast(gb, val(*b)));
                }
            }
            Op::AddScalar(a) => accumulate(&mut grads[a.0], g),
            Op::MulScalar(a, s) => {
                let s = *s;
                accumulate(&mut grads[a.0], g.map(|v| v * s));
            }
            Op::Exp(a) => accumulate(&mut grads[a.0], zip_map(&g, &node.value, |g, y| g * y)),
            Op::Log(a) => accumulate(&mut grads[a.0], zip_map(&g, val(*a), |g, x| g / x)),
            Op::Softplus(a) => {
                accumulate(&mut grads[a.0], zip_map(&g, val(*a), |g, x| g * sigmoid(x)))
            }
            Op::LeakyRelu(a, slope) => {
                let s = *slope;
                let ga = zip_map(&g, val(*a), |g, x| if x > T::zero() { g } else { g * s });
                accumulate(&mut grads[a.0], ga);
            }
            Op::Conv2d {
                input,
                kernel,
                bias,
                geometry,
                cols,
            } => {
                let (gi, gk, gb) = conv2d_backward(&g, geometry, val(*kernel), cols, needs(*input));
                if let Some(gi) = gi {
                    accumulate(&mut grads[input.0], gi);
                }
                if needs(*kernel) {
                    accumulate(&mut grads[kernel.0], gk);
                }
                if needs(*bias) {
                    accumulate(&mut grads[bias.0], gb);
                }
            }
            Op::PixelShuffle(a, r) => accumulate(&mut grads[a.0], g.pixel_unshuffle(*r)?),
            Op::MeanChannels(a) => {
                let src = val(*a);
                let (n, c, plane) = (src.dims()[0], src.dims()[1], src.dims()[2] * src.dims()[3]);
                let inv = T::of_f64(1.0 / c as f64);
                let mut out = vec![T::zero(); src.numel()];
                for b in 0..n {
                    for ch in 0..c {
                        for p in 0..plane {
                            out[(b * c + ch) * plane + p] = g.values()[b * plane + p] * inv;
                        }
                    }
                }
                accumulate(&mut grads[a.0], Tensor::from_parts(src.dims().to_vec(), out));
            }
            Op::Sum(a) => {
                let gv = g.values()[0];
                accumulate(&mut grads[a.0], Tensor::full(val(*a).dims(), gv));
            }
            Op::Mean(a) => {
                let n = val(*a).numel() as f64;
                let gv = g.values()[0] * T::of_f64(1.0 / n);
                accumulate(&mut grads[a.0], Tensor::full(val(*a).dims(), gv));
            }
        }
    }
    Ok(Gradients { grads })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random(dims: &[usize], seed: u64) -> Tensor<f64> {
        let mut r = rng::stream(seed);
        let n = dims.iter().product();
        Tensor::new(dims.to_vec(), (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn linear_map_gradient_is_input() {
        let mut tape = Tape::<f64>::new();
        let x = random(&[2, 3], 1);
        let w = tape.param(random(&[2, 3], 2));
        let xi = tape.constant(x.clone());
        let p = tape.mul(w, xi).unwrap();
        let loss = tape.sum(p);
        let grads = backward(&tape, loss).unwrap();
        assert_eq!(grads.get(w).unwrap(), &x);
        assert!(grads.get(xi).is_none());
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut tape = Tape::<f64>::new();
        let w = tape.param(random(&[4], 3));
        let z = tape.mul_scalar(w, 0.0);
        let loss = tape.sum(z);
        let grads = backward(&tape, loss).unwrap();
        assert!(grads.get(w).unwrap().values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::<f64>::new();
        let w = tape.param(random(&[4], 3));
        assert!(matches!(backward(&tape, w), Err(Error::Shape(_))));
    }

    /// Central finite differences of `f` at every coordinate of `x0`.
    fn fd(x0: &Tensor<f64>, f: &dyn Fn(&Tensor<f64>) -> f64) -> Vec<f64> {
        let h = 1e-3;
        (0..x0.numel())
            .map(|i| {
                let mut p = x0.clone();
                p.values_mut()[i] += h;
                let mut m = x0.clone();
                m.values_mut()[i] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    fn check_unary(build: impl Fn(&mut Tape<f64>, NodeId) -> NodeId, x0: Tensor<f64>) {
        let eval = |x: &Tensor<f64>| {
            let mut t = Tape::new();
            let a = t.param(x.clone());
            let y = build(&mut t, a);
            let l = t.sum(y);
            (t.value(l).values()[0], t, a, l)
        };
        let (_, tape, a, l) = eval(&x0);
        let analytic = backward(&tape, l).unwrap().take(a).unwrap();
        let numeric = fd(&x0, &|x| eval(x).0);
        for (an, nu) in analytic.values().iter().zip(&numeric) {
            let rel = (an - nu).abs() / an.abs().max(nu.abs()).max(1e-8);
            assert!(rel < 1e-3, "analytic {an} vs numeric {nu}");
        }
    }

    #[test]
    fn primitive_gradients_match_finite_differences() {
        let x = random(&[1, 4, 3, 3], 10);
        let pos = x.map(|v| v.abs() + 0.5);
        check_unary(|t, a| t.exp(a).unwrap(), x.clone());
        check_unary(|t, a| t.log(a).unwrap(), pos.clone());
        check_unary(|t, a| t.softplus(a), x.clone());
        // keep away from the kink
        check_unary(|t, a| t.leaky_relu(a, 0.2), x.map(|v| if v.abs() < 0.05 { 0.3 } else { v }));
        check_unary(|t, a| t.pixel_shuffle(a, 2).unwrap(), x.clone());
        check_unary(|t, a| t.mean_channels(a).unwrap(), x.clone());
        check_unary(|t, a| { let m = t.mul(a, a).unwrap(); t.mean(m) }, x.clone());
        check_unary(|t, a| { let c = t.constant(Tensor::scalar(0.7)); t.div(c, a).unwrap() }, pos.clone());
        check_unary(|t, a| { let c = t.constant(Tensor::scalar(0.7)); t.sub(c, a).unwrap() }, x.clone());
        check_unary(|t, a| { let s = t.add_scalar(a, 2.0); t.mul_scalar(s, -1.5) }, x.clone());
        check_unary(|t, a| {
            let k = t.constant(random(&[2, 4, 3, 3], 11));
            let b = t.constant(random(&[2], 12));
            t.conv2d(a, k, b).unwrap()
        }, x.clone());
        // kernel gradient
        let k0 = random(&[2, 4, 3, 3], 13);
        check_unary(|t, k| {
            let xi = t.constant(random(&[2, 4, 3, 3], 14));
            let b = t.constant(random(&[2], 15));
            t.conv2d(xi, k, b).unwrap()
        }, k0);
    }

    #[test]
    fn scalar_broadcast_gradient_is_summed() {
        let mut tape = Tape::<f64>::new();
        let s = tape.param(Tensor::scalar(2.0));
        let x = tape.constant(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let y = tape.mul(x, s).unwrap();
        let l = tape.sum(y);
        let g = backward(&tape, l).unwrap();
        assert_eq!(g.get(s).unwrap().values(), &[6.0]);
    }
}
