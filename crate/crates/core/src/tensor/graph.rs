use super::kernels::{self, ConvGeometry};
use super::{Float, Tensor};
use crate::error::{Error, Result};
use crate::stn::{self, TransformMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

impl Activation {
    fn apply(self, x: Float) -> Float {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }
}

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Option<Var>,
        geom: ConvGeometry,
    },
    MaxPool2 {
        input: Var,
        argmax: Vec<usize>,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Option<Var>,
    },
    Act {
        input: Var,
        kind: Activation,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, Float),
    Sum(Var),
    Reshape(Var),
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    MeanSpatial(Var),
    AffineGrid {
        theta: Var,
        height: usize,
        width: usize,
    },
    BilinearSample {
        map: Var,
        grid: Var,
    },
    InvertAffine {
        theta: Var,
    },
    ComposeTransform {
        raw: Var,
        mode: TransformMode,
        s_min: Float,
    },
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    grad: Option<Tensor>,
    op: Op,
}

/// Tape of primitive applications recorded in forward order.
///
/// Nodes are appended as operations run, so operands always precede their
/// consumers and [`Graph::backward`] is a single reverse sweep. A graph is
/// built per forward pass and dropped afterwards.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a leaf. Gradients are kept only for leaves with `requires_grad`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf; `None` before any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op, operands: &[Var]) -> Var {
        let requires_grad = operands.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn expect_rank(&self, op: &'static str, v: Var, rank: usize) -> Result<&[usize]> {
        let shape = self.shape(v);
        if shape.len() != rank {
            return Err(Error::dim(
                op,
                "rank",
                format!("expected rank {rank}, got shape {shape:?}"),
            ));
        }
        Ok(shape)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            let axis = if sa.len() != sb.len() {
                "rank".to_string()
            } else {
                let i = sa.iter().zip(sb).position(|(x, y)| x != y).unwrap_or(0);
                format!("axis {i}")
            };
            return Err(Error::dim(op, axis, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    /// 2-D cross-correlation of `[N,C,H,W]` input with `[K,C,kh,kw]` weight.
    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        const OP: &str = "conv2d";
        let xs = self.expect_rank(OP, input, 4)?.to_vec();
        let ws = self.expect_rank(OP, weight, 4)?.to_vec();
        if ws[1] != xs[1] {
            return Err(Error::dim(
                OP,
                "channel (axis 1)",
                format!("input has {} channels, weight expects {}", xs[1], ws[1]),
            ));
        }
        if stride == 0 {
            return Err(Error::Contract("conv2d stride must be positive".into()));
        }
        if let Some(b) = bias {
            if self.shape(b) != [ws[0]] {
                return Err(Error::dim(
                    OP,
                    "bias (axis 0)",
                    format!("expected [{}], got {:?}", ws[0], self.shape(b)),
                ));
            }
        }
        for (axis, (extent, k)) in [("height (axis 2)", (xs[2], ws[2])), ("width (axis 3)", (xs[3], ws[3]))] {
            if extent + 2 * pad < k {
                return Err(Error::dim(
                    OP,
                    axis,
                    format!("kernel {k} exceeds padded extent {}", extent + 2 * pad),
                ));
            }
        }
        let geom = ConvGeometry {
            batch: xs[0],
            in_channels: xs[1],
            height: xs[2],
            width: xs[3],
            out_channels: ws[0],
            kernel_h: ws[2],
            kernel_w: ws[3],
            stride,
            pad,
        };
        let out = kernels::conv2d_forward(
            self.value(input).data(),
            self.value(weight).data(),
            bias.map(|b| self.value(b).data()),
            &geom,
        );
        let shape = [geom.batch, geom.out_channels, geom.out_height(), geom.out_width()];
        let value = Tensor::new(&shape, out)?;
        let mut operands = vec![input, weight];
        operands.extend(bias);
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            },
            &operands,
        ))
    }

    /// 2×2 max pool with stride 2; ties go to the first element in row-major window order.
    pub fn maxpool2(&mut self, input: Var) -> Result<Var> {
        let s = self.expect_rank("maxpool2", input, 4)?.to_vec();
        for (axis, extent) in [("height (axis 2)", s[2]), ("width (axis 3)", s[3])] {
            if extent % 2 != 0 {
                return Err(Error::dim("maxpool2", axis, format!("extent {extent} is odd")));
            }
        }
        let (out, argmax) = kernels::maxpool2_forward(self.value(input).data(), s[0] * s[1], s[2], s[3]);
        let value = Tensor::new(&[s[0], s[1], s[2] / 2, s[3] / 2], out)?;
        Ok(self.push(value, Op::MaxPool2 { input, argmax }, &[input]))
    }

    /// Affine map `input · weight + bias` for `[N,D]` input and `[D,M]` weight.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        const OP: &str = "fully_connected";
        let xs = self.expect_rank(OP, input, 2)?.to_vec();
        let ws = self.expect_rank(OP, weight, 2)?.to_vec();
        if xs[1] != ws[0] {
            return Err(Error::dim(
                OP,
                "inner (axis 1 of input / axis 0 of weight)",
                format!("{} vs {}", xs[1], ws[0]),
            ));
        }
        if let Some(b) = bias {
            if self.shape(b) != [ws[1]] {
                return Err(Error::dim(
                    OP,
                    "bias (axis 0)",
                    format!("expected [{}], got {:?}", ws[1], self.shape(b)),
                ));
            }
        }
        let out = kernels::linear_forward(
            self.value(input).data(),
            self.value(weight).data(),
            bias.map(|b| self.value(b).data()),
            xs[0],
            xs[1],
            ws[1],
        );
        let value = Tensor::new(&[xs[0], ws[1]], out)?;
        let mut operands = vec![input, weight];
        operands.extend(bias);
        Ok(self.push(value, Op::Linear { input, weight, bias }, &operands))
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Var {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| kind.apply(v)).collect();
        let value = Tensor::new(x.shape(), data).expect("shape preserved");
        self.push(value, Op::Act { input, kind }, &[input])
    }

    pub fn relu(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Relu)
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, input: Var) -> Var {
        self.activation(input, Activation::Tanh)
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(Float, Float) -> Float, node: Op) -> Result<Var> {
        self.same_shape(op, a, b)?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(va.shape(), data)?;
        Ok(self.push(value, node, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: Float) -> Var {
        let x = self.value(a);
        let data = x.data().iter().map(|v| v * factor).collect();
        let value = Tensor::new(x.shape(), data).expect("shape preserved");
        self.push(value, Op::Scale(a, factor), &[a])
    }

    /// Sum of all elements as a one-element tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a), &[a])
    }

    /// Sum of squared elements.
    pub fn sum_squares(&mut self, a: Var) -> Var {
        let sq = self.mul(a, a).expect("same operand");
        self.sum(sq)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(a), &[a]))
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        const OP: &str = "concat";
        let first = inputs
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::dim(OP, "axis", format!("axis {axis} out of range for rank {}", base.len())));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let agrees = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !agrees {
                return Err(Error::dim(OP, format!("axis other than {axis}"), format!("{s:?} vs {base:?}")));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let chunk = self.shape(v)[axis] * inner;
                data.extend_from_slice(&self.value(v).data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let value = Tensor::new(&shape, data)?;
        Ok(self.push(
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        ))
    }

    /// Spatial average `[N,C,H,W] -> [N,C]`.
    pub fn mean_spatial(&mut self, a: Var) -> Result<Var> {
        let s = self.expect_rank("mean_spatial", a, 4)?.to_vec();
        let plane = s[2] * s[3];
        let data = self
            .value(a)
            .data()
            .chunks(plane)
            .map(|p| p.iter().sum::<Float>() / plane as Float)
            .collect();
        let value = Tensor::new(&[s[0], s[1]], data)?;
        Ok(self.push(value, Op::MeanSpatial(a), &[a]))
    }

    /// Reverse sweep from a one-element `loss`.
    ///
    /// Adds d(loss)/d(leaf) into the gradient of every `requires_grad` leaf
    /// reachable from `loss`. Calling it twice without [`Graph::zero_grad`]
    /// accumulates.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let n = self.value(loss).len();
        if n != 1 {
            return Err(Error::Contract(format!(
                "backward needs a one-element loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<Float>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            if let Op::Leaf = self.nodes[id].op {
                let node = &mut self.nodes[id];
                match &mut node.grad {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(&g) {
                            *a += b;
                        }
                    }
                    None => node.grad = Some(Tensor::new(node.value.shape(), g)?),
                }
                continue;
            }
            self.propagate(id, &g, &mut grads);
        }
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[Float], grads: &mut [Option<Vec<Float>>]) {
        let nodes = &self.nodes;
        let out = &nodes[id].value;
        let mut send = |v: Var, contrib: Vec<Float>| {
            if !nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => {
                    for (a, b) in acc.iter_mut().zip(&contrib) {
                        *a += b;
                    }
                }
                slot @ None => *slot = Some(contrib),
            }
        };
        let val = |v: Var| nodes[v.0].value.data();
        let wants = |v: Var| nodes[v.0].requires_grad;

        match &nodes[id].op {
            Op::Leaf => unreachable!("leaves handled by backward"),
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
            } => {
                let (d_in, d_w, d_b) = kernels::conv2d_backward(val(*input), val(*weight), g, geom, wants(*input));
                if let Some(d_in) = d_in {
                    send(*input, d_in);
                }
                send(*weight, d_w);
                if let Some(b) = bias {
                    send(*b, d_b);
                }
            }
            Op::MaxPool2 { input, argmax } => {
                let mut d_in = vec![0.0; nodes[input.0].value.len()];
                for (&src, &gv) in argmax.iter().zip(g) {
                    d_in[src] += gv;
                }
                send(*input, d_in);
            }
            Op::Linear { input, weight, bias } => {
                let xs = nodes[input.0].value.shape();
                let d_out = nodes[weight.0].value.shape()[1];
                let (d_in, d_w, d_b) =
                    kernels::linear_backward(val(*input), val(*weight), g, xs[0], xs[1], d_out, wants(*input));
                if let Some(d_in) = d_in {
                    send(*input, d_in);
                }
                send(*weight, d_w);
                if let Some(b) = bias {
                    send(*b, d_b);
                }
            }
            Op::Act { input, kind } => {
                let y = out.data();
                let d: Vec<Float> = match kind {
                    Activation::Relu => val(*input)
                        .iter()
                        .zip(g)
                        .map(|(&x, &gv)| if x > 0.0 { gv } else { 0.0 })
                        .collect(),
                    Activation::Sigmoid => y.iter().zip(g).map(|(&s, &gv)| gv * s * (1.0 - s)).collect(),
                    Activation::Tanh => y.iter().zip(g).map(|(&t, &gv)| gv * (1.0 - t * t)).collect(),
                };
                send(*input, d);
            }
            Op::Add(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let da = g.iter().zip(vb).map(|(gv, y)| gv * y).collect();
                let db = g.iter().zip(va).map(|(gv, x)| gv * x).collect();
                send(*a, da);
                send(*b, db);
            }
            Op::Scale(a, factor) => send(*a, g.iter().map(|v| v * factor).collect()),
            Op::Sum(a) => send(*a, vec![g[0]; nodes[a.0].value.len()]),
            Op::Reshape(a) => send(*a, g.to_vec()),
            Op::Concat { inputs, axis } => {
                let shape = out.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let total = shape[*axis] * inner;
                let mut offset = 0;
                for &v in inputs {
                    let chunk = nodes[v.0].value.shape()[*axis] * inner;
                    let mut d = Vec::with_capacity(outer * chunk);
                    for o in 0..outer {
                        d.extend_from_slice(&g[o * total + offset..o * total + offset + chunk]);
                    }
                    offset += chunk;
                    send(v, d);
                }
            }
            Op::MeanSpatial(a) => {
                let s = nodes[a.0].value.shape();
                let plane = s[2] * s[3];
                let scale = 1.0 / plane as Float;
                let d = g.iter().flat_map(|&gv| std::iter::repeat_n(gv * scale, plane)).collect();
                send(*a, d);
            }
            Op::AffineGrid { theta, height, width } => {
                send(*theta, stn::affine_grid_backward(g, *height, *width).to_vec());
            }
            Op::BilinearSample { map, grid } => {
                let ms = nodes[map.0].value.shape();
                let gs = nodes[grid.0].value.shape();
                let (d_map, d_grid) = stn::bilinear_backward(
                    val(*map),
                    (ms[0], ms[1], ms[2]),
                    val(*grid),
                    (gs[0], gs[1]),
                    g,
                    wants(*map),
                    wants(*grid),
                );
                if let Some(d) = d_map {
                    send(*map, d);
                }
                if let Some(d) = d_grid {
                    send(*grid, d);
                }
            }
            Op::InvertAffine { theta } => {
                send(*theta, stn::invert_backward(val(*theta), g).to_vec());
            }
            Op::ComposeTransform { raw, mode, s_min } => {
                send(*raw, stn::compose_backward(val(*raw), *mode, *s_min, g));
            }
        }
    }
}
