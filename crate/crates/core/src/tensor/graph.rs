use std::collections::HashMap;

use rand::Rng;

use super::{ParamId, ParamStore, Tensor};
use crate::error::TensorError;

/// Handle to a node recorded in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseKind {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointwiseKind {
    Relu,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    BinaryCrossEntropy,
    SoftmaxCrossEntropy,
}

/// Probabilities are clamped to `[PROB_FLOOR, 1 - PROB_FLOOR]` before taking logs.
pub const PROB_FLOOR: f64 = 1e-7;

#[derive(Debug)]
enum Op {
    Leaf,
    Elementwise(ElementwiseKind, Var, Var),
    Pointwise(PointwiseKind, Var),
    Affine { x: Var, w: Var, b: Var },
    Concat { parts: Vec<Var>, axis: usize },
    Gather { table: Var, ids: Vec<usize> },
    Reshape(Var),
    Conv { x: Var, w: Var, b: Option<Var>, per_sample: bool },
    Emit { z: Var, g: Var },
    MaxOverTime { p: Var, argmax: Vec<usize> },
    Dropout { x: Var, mask: Vec<f64> },
    Sum(Var),
    Bce { p: Var, targets: Vec<f64> },
    SoftmaxCe { logits: Var, targets: Vec<usize>, probs: Vec<f64> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Linear record of operations; backward replays it in reverse insertion order.
///
/// Leaves created with `requires_grad` keep a gradient buffer that persists
/// across `backward` calls, so repeated calls accumulate. Gradients of
/// intermediate nodes are transient.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    leaf_grads: HashMap<usize, Vec<f64>>,
    bound: Vec<(ParamId, Var)>,
    bound_lookup: HashMap<ParamId, Var>,
    regime: u64,
}

fn mix(state: u64, value: u64) -> u64 {
    (state ^ value).wrapping_mul(0x100_0000_01b3).rotate_left(29) ^ 0x9e37_79b9_7f4a_7c15
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        let numel = value.numel();
        let var = self.push(value, Op::Leaf, requires_grad);
        if requires_grad {
            self.leaf_grads.insert(var.0, vec![0.0; numel]);
        }
        var
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn variable(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Binds a stored parameter as a leaf. Binding the same id twice returns
    /// the same node, so every use accumulates into one gradient.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&var) = self.bound_lookup.get(&id) {
            return var;
        }
        let var = self.variable(store.value(id).clone());
        self.bound.push((id, var));
        self.bound_lookup.insert(id, var);
        var
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    /// Accumulated gradient of a `requires_grad` leaf.
    pub fn grad(&self, var: Var) -> Option<&[f64]> {
        self.leaf_grads.get(&var.0).map(Vec::as_slice)
    }

    /// Adds the gradients of every bound parameter into `store`.
    pub fn store_grads(&self, store: &mut ParamStore) {
        for &(id, var) in &self.bound {
            store.accumulate_grad(id, &self.leaf_grads[&var.0]);
        }
    }

    /// Fingerprint of every relu activation pattern and pooling selection made
    /// so far. Two evaluations with equal fingerprints lie on the same linear
    /// piece of every non-smooth operation.
    pub fn regime(&self) -> u64 {
        self.regime
    }

    fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
        TensorError::ShapeMismatch {
            op,
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        }
    }

    pub fn elementwise(&mut self, kind: ElementwiseKind, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Self::shape_err("elementwise", ta, tb));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| match kind {
                ElementwiseKind::Add => x + y,
                ElementwiseKind::Sub => x - y,
                ElementwiseKind::Mul => x * y,
            })
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Elementwise(kind, a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(ElementwiseKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(ElementwiseKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(ElementwiseKind::Mul, a, b)
    }

    pub fn pointwise(&mut self, kind: PointwiseKind, a: Var) -> Var {
        let input = &self.nodes[a.0].value;
        let data: Vec<f64> = match kind {
            PointwiseKind::Relu => input.data().iter().map(|&x| x.max(0.0)).collect(),
            PointwiseKind::Sigmoid => input.data().iter().copied().map(sigmoid).collect(),
        };
        if kind == PointwiseKind::Relu {
            let mut h = 0u64;
            for (i, &x) in input.data().iter().enumerate() {
                if x > 0.0 {
                    h = mix(h, i as u64);
                }
            }
            self.regime = mix(self.regime, h);
        }
        let value = Tensor::new(input.shape().to_vec(), data).expect("same shape");
        let rg = self.needs(&[a]);
        self.push(value, Op::Pointwise(kind, a), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.pointwise(PointwiseKind::Relu, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.pointwise(PointwiseKind::Sigmoid, a)
    }

    /// `x W^T + b` for `x` of shape `[n_in]` or `[rows, n_in]`, `W` of shape
    /// `[n_out, n_in]` and `b` of shape `[n_out]`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        if tw.rank() != 2 || tb.rank() != 1 || tb.shape()[0] != tw.shape()[0] {
            return Err(Self::shape_err("affine", tw, tb));
        }
        let (n_out, n_in) = (tw.shape()[0], tw.shape()[1]);
        let rows = match tx.shape() {
            [n] if *n == n_in => 1,
            [r, n] if *n == n_in => *r,
            _ => return Err(Self::shape_err("affine", tx, tw)),
        };
        let mut out = Vec::with_capacity(rows * n_out);
        for r in 0..rows {
            let xr = &tx.data()[r * n_in..(r + 1) * n_in];
            for o in 0..n_out {
                out.push(dot(&tw.data()[o * n_in..(o + 1) * n_in], xr) + tb.data()[o]);
            }
        }
        let shape = if tx.rank() == 1 { vec![n_out] } else { vec![rows, n_out] };
        let value = Tensor::new(shape, out)?;
        let rg = self.needs(&[x, w, b]);
        Ok(self.push(value, Op::Affine { x, w, b }, rg))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = self.value(*parts.first().ok_or(TensorError::InvalidShape {
            op: "concat",
            detail: "no inputs".into(),
        })?);
        if axis >= first.rank() {
            return Err(TensorError::InvalidShape {
                op: "concat",
                detail: format!("axis {axis} out of range for rank {}", first.rank()),
            });
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = 0;
        for &p in parts {
            let t = self.value(p);
            let compatible = t.rank() == shape.len()
                && t
                    .shape()
                    .iter()
                    .zip(&shape)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Self::shape_err("concat", first, t));
            }
            shape[axis] += t.shape()[axis];
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &p in parts {
                let t = self.value(p);
                let row = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * row..(o + 1) * row]);
            }
        }
        let value = Tensor::new(shape, data)?;
        let rg = self.needs(parts);
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            rg,
        ))
    }

    /// Rows of a `[V, d]` table selected by `ids`, shaped `[ids.len(), d]`.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        let t = self.value(table);
        if t.rank() != 2 {
            return Err(TensorError::InvalidShape {
                op: "gather_rows",
                detail: format!("table must be rank 2, got {:?}", t.shape()),
            });
        }
        let (rows, d) = (t.shape()[0], t.shape()[1]);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= rows {
                return Err(TensorError::IndexOutOfRange {
                    index: id,
                    bound: rows,
                });
            }
            data.extend_from_slice(&t.data()[id * d..(id + 1) * d]);
        }
        let value = Tensor::new(vec![ids.len(), d], data)?;
        let rg = self.needs(&[table]);
        Ok(self.push(
            value,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let value = self.value(a).clone().reshape(shape)?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    fn conv_dims(x: &Tensor) -> Result<(usize, usize, usize), TensorError> {
        match *x.shape() {
            [t, d] => Ok((1, t, d)),
            [b, t, d] => Ok((b, t, d)),
            _ => Err(TensorError::InvalidShape {
                op: "conv1d",
                detail: format!("input must be [T, d] or [B, T, d], got {:?}", x.shape()),
            }),
        }
    }

    /// Static sliding-window convolution. `x` is `[T, d]` or `[B, T, d]`,
    /// `w` is `[K, h, d]`, `b` is `[K]`. Output `[K, T-h+1]` or `[B, K, T-h+1]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var, TensorError> {
        self.conv(x, w, b, false)
    }

    /// Convolution where sample `j` of `x` (`[B, T, d]`) uses its own bank
    /// `f[j]` (`f` is `[B, K, h, d]`). The bias `[K]` is optional.
    pub fn conv1d_per_sample(&mut self, x: Var, f: Var, b: Option<Var>) -> Result<Var, TensorError> {
        self.conv(x, f, b, true)
    }

    fn conv(&mut self, x: Var, w: Var, b: Option<Var>, per_sample: bool) -> Result<Var, TensorError> {
        let (tx, tw) = (self.value(x), self.value(w));
        let (batch, len, d) = Self::conv_dims(tx)?;
        let (k, h, wd) = match (per_sample, tw.shape()) {
            (false, &[k, h, wd]) => (k, h, wd),
            (true, &[fb, k, h, wd]) if tx.rank() == 3 => {
                if fb != batch {
                    return Err(Self::shape_err("conv1d_per_sample", tx, tw));
                }
                (k, h, wd)
            }
            _ => return Err(Self::shape_err("conv1d", tx, tw)),
        };
        if wd != d || h == 0 {
            return Err(Self::shape_err("conv1d", tx, tw));
        }
        if len < h {
            return Err(TensorError::WindowTooLong { len, window: h });
        }
        let bias = match b {
            Some(bv) => {
                let tb = self.value(bv);
                if tb.shape() != [k] {
                    return Err(Self::shape_err("conv1d bias", tw, tb));
                }
                Some(tb.data())
            }
            None => None,
        };
        let width = len - h + 1;
        let span = h * d;
        let mut out = vec![0.0; batch * k * width];
        for s in 0..batch {
            let xs = &tx.data()[s * len * d..(s + 1) * len * d];
            let bank = if per_sample {
                &tw.data()[s * k * span..(s + 1) * k * span]
            } else {
                tw.data()
            };
            for ki in 0..k {
                let filter = &bank[ki * span..(ki + 1) * span];
                let offset = bias.map_or(0.0, |bb| bb[ki]);
                let row = &mut out[(s * k + ki) * width..(s * k + ki + 1) * width];
                for (i, o) in row.iter_mut().enumerate() {
                    *o = dot(&xs[i * d..i * d + span], filter) + offset;
                }
            }
        }
        let shape = if tx.rank() == 2 {
            vec![k, width]
        } else {
            vec![batch, k, width]
        };
        let value = Tensor::new(shape, out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        let rg = self.needs(&inputs);
        Ok(self.push(value, Op::Conv { x, w, b, per_sample }, rg))
    }

    /// Emits filter banks from codes: `z` (`[l]` or `[B, l]`) times `g`
    /// (`[l, f_s*k_x*k_y]`), reshaped to `bank` = `[f_s, k_x, k_y]` per sample.
    ///
    /// A transposed convolution applied to a code of unit spatial extent is
    /// exactly this linear map.
    pub fn transposed_conv_generate(
        &mut self,
        z: Var,
        g: Var,
        bank: [usize; 3],
    ) -> Result<Var, TensorError> {
        let (tz, tg) = (self.value(z), self.value(g));
        let n: usize = bank.iter().product();
        let (rows, l) = match *tz.shape() {
            [l] => (1, l),
            [r, l] => (r, l),
            _ => return Err(Self::shape_err("transposed_conv_generate", tz, tg)),
        };
        if tg.shape() != [l, n] {
            return Err(TensorError::InvalidShape {
                op: "transposed_conv_generate",
                detail: format!(
                    "emitter must be [{l}, {n}] for code dim {l} and bank {bank:?}, got {:?}",
                    tg.shape()
                ),
            });
        }
        let mut out = vec![0.0; rows * n];
        for r in 0..rows {
            let zr = &tz.data()[r * l..(r + 1) * l];
            let target = &mut out[r * n..(r + 1) * n];
            for (i, &zi) in zr.iter().enumerate() {
                axpy(zi, &tg.data()[i * n..(i + 1) * n], target);
            }
        }
        let shape = if tz.rank() == 1 {
            bank.to_vec()
        } else {
            vec![rows, bank[0], bank[1], bank[2]]
        };
        let value = Tensor::new(shape, out)?;
        let rg = self.needs(&[z, g]);
        Ok(self.push(value, Op::Emit { z, g }, rg))
    }

    /// Row-wise maximum over unmasked columns. `p` is `[K, W]` with a mask of
    /// `W`, or `[B, K, W]` with a mask of `B*W`. Ties resolve to the first index.
    pub fn max_over_time(&mut self, p: Var, mask: &[bool]) -> Result<Var, TensorError> {
        let tp = &self.nodes[p.0].value;
        let (batch, k, width) = match *tp.shape() {
            [k, w] => (1, k, w),
            [b, k, w] => (b, k, w),
            _ => {
                return Err(TensorError::InvalidShape {
                    op: "max_over_time",
                    detail: format!("expected [K, W] or [B, K, W], got {:?}", tp.shape()),
                })
            }
        };
        if mask.len() != batch * width {
            return Err(TensorError::InvalidShape {
                op: "max_over_time",
                detail: format!("mask of {} for {batch} x {width} windows", mask.len()),
            });
        }
        let mut out = Vec::with_capacity(batch * k);
        let mut argmax = Vec::with_capacity(batch * k);
        let mut h = 0u64;
        for s in 0..batch {
            let m = &mask[s * width..(s + 1) * width];
            for ki in 0..k {
                let base = (s * k + ki) * width;
                let row = &tp.data()[base..base + width];
                let mut best: Option<usize> = None;
                for (i, &v) in row.iter().enumerate() {
                    if m[i] && best.is_none_or(|j| v > row[j]) {
                        best = Some(i);
                    }
                }
                let i = best.ok_or(TensorError::AllMasked { row: s * k + ki })?;
                out.push(row[i]);
                argmax.push(base + i);
                h = mix(h, i as u64);
            }
        }
        self.regime = mix(self.regime, h);
        let shape = if tp.rank() == 2 { vec![k] } else { vec![batch, k] };
        let value = Tensor::new(shape, out)?;
        let rg = self.needs(&[p]);
        Ok(self.push(value, Op::MaxOverTime { p, argmax }, rg))
    }

    /// Inverted dropout. Identity in eval mode or at rate 0.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::InvalidRate(rate));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let t = self.value(x);
        let mask: Vec<f64> = (0..t.numel())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let data = t.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(t.shape().to_vec(), data)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::Dropout { x, mask }, rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().sum();
        let rg = self.needs(&[a]);
        self.push(Tensor::scalar(total), Op::Sum(a), rg)
    }

    /// Mean loss over the batch. Binary cross-entropy takes probabilities and
    /// 0/1 targets; softmax cross-entropy takes `[B, C]` (or `[C]`) logits and
    /// class indices.
    pub fn loss(&mut self, kind: LossKind, predictions: Var, targets: &[usize]) -> Result<Var, TensorError> {
        let t = self.value(predictions);
        match kind {
            LossKind::BinaryCrossEntropy => {
                if t.numel() != targets.len() {
                    return Err(TensorError::InvalidShape {
                        op: "binary_cross_entropy",
                        detail: format!("{} predictions for {} targets", t.numel(), targets.len()),
                    });
                }
                let mut ys = Vec::with_capacity(targets.len());
                let mut total = 0.0;
                for (&p, &y) in t.data().iter().zip(targets) {
                    if y > 1 {
                        return Err(TensorError::ClassOutOfRange { class: y, n_classes: 2 });
                    }
                    let y = y as f64;
                    let pc = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                    total -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
                    ys.push(y);
                }
                let n = targets.len().max(1) as f64;
                let rg = self.needs(&[predictions]);
                Ok(self.push(
                    Tensor::scalar(total / n),
                    Op::Bce {
                        p: predictions,
                        targets: ys,
                    },
                    rg,
                ))
            }
            LossKind::SoftmaxCrossEntropy => {
                let (rows, classes) = match *t.shape() {
                    [c] => (1, c),
                    [r, c] => (r, c),
                    _ => {
                        return Err(TensorError::InvalidShape {
                            op: "softmax_cross_entropy",
                            detail: format!("logits must be [C] or [B, C], got {:?}", t.shape()),
                        })
                    }
                };
                if rows != targets.len() {
                    return Err(TensorError::InvalidShape {
                        op: "softmax_cross_entropy",
                        detail: format!("{rows} rows for {} targets", targets.len()),
                    });
                }
                let mut probs = Vec::with_capacity(rows * classes);
                let mut total = 0.0;
                for (r, &y) in targets.iter().enumerate() {
                    if y >= classes {
                        return Err(TensorError::ClassOutOfRange { class: y, n_classes: classes });
                    }
                    let row = &t.data()[r * classes..(r + 1) * classes];
                    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let norm: f64 = row.iter().map(|v| (v - max).exp()).sum();
                    let log_norm = max + norm.ln();
                    total += log_norm - row[y];
                    probs.extend(row.iter().map(|v| (v - log_norm).exp()));
                }
                let n = rows.max(1) as f64;
                let rg = self.needs(&[predictions]);
                Ok(self.push(
                    Tensor::scalar(total / n),
                    Op::SoftmaxCe {
                        logits: predictions,
                        targets: targets.to_vec(),
                        probs,
                    },
                    rg,
                ))
            }
        }
    }

    /// Propagates d(loss)/d(node) to every `requires_grad` leaf.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let loss_value = self.value(loss);
        if loss_value.numel() != 1 {
            return Err(TensorError::NotScalar(loss_value.shape().to_vec()));
        }
        let nodes = &self.nodes;
        let leaf_grads = &mut self.leaf_grads;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        // Returns the gradient buffer of `v`, or None when `v` needs no gradient.
        fn slot<'a>(
            grads: &'a mut [Option<Vec<f64>>],
            nodes: &[Node],
            v: Var,
        ) -> Option<&'a mut Vec<f64>> {
            let node = &nodes[v.0];
            if !node.requires_grad {
                return None;
            }
            Some(grads[v.0].get_or_insert_with(|| vec![0.0; node.value.numel()]))
        }

        for idx in (0..=loss.0).rev() {
            let node = &nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(go) = grads[idx].take() else {
                continue;
            };
            match &node.op {
                Op::Leaf => {
                    if let Some(acc) = leaf_grads.get_mut(&idx) {
                        axpy(1.0, &go, acc);
                    }
                }
                Op::Elementwise(kind, a, b) => {
                    let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                    if let Some(ga) = slot(&mut grads, nodes, *a) {
                        match kind {
                            ElementwiseKind::Mul => {
                                for ((g, o), y) in ga.iter_mut().zip(&go).zip(vb) {
                                    *g += o * y;
                                }
                            }
                            _ => axpy(1.0, &go, ga),
                        }
                    }
                    if let Some(gb) = slot(&mut grads, nodes, *b) {
                        match kind {
                            ElementwiseKind::Add => axpy(1.0, &go, gb),
                            ElementwiseKind::Sub => axpy(-1.0, &go, gb),
                            ElementwiseKind::Mul => {
                                for ((g, o), x) in gb.iter_mut().zip(&go).zip(va) {
                                    *g += o * x;
                                }
                            }
                        }
                    }
                }
                Op::Pointwise(kind, a) => {
                    let out = node.value.data();
                    if let Some(ga) = slot(&mut grads, nodes, *a) {
                        for ((g, o), y) in ga.iter_mut().zip(&go).zip(out) {
                            *g += match kind {
                                PointwiseKind::Relu if *y > 0.0 => *o,
                                PointwiseKind::Relu => 0.0,
                                PointwiseKind::Sigmoid => o * y * (1.0 - y),
                            };
                        }
                    }
                }
                Op::Affine { x, w, b } => {
                    let (tx, tw) = (&nodes[x.0].value, &nodes[w.0].value);
                    let (n_out, n_in) = (tw.shape()[0], tw.shape()[1]);
                    let rows = go.len() / n_out;
                    if let Some(gx) = slot(&mut grads, nodes, *x) {
                        for r in 0..rows {
                            for o in 0..n_out {
                                axpy(
                                    go[r * n_out + o],
                                    &tw.data()[o * n_in..(o + 1) * n_in],
                                    &mut gx[r * n_in..(r + 1) * n_in],
                                );
                            }
                        }
                    }
                    if let Some(gw) = slot(&mut grads, nodes, *w) {
                        for r in 0..rows {
                            for o in 0..n_out {
                                axpy(
                                    go[r * n_out + o],
                                    &tx.data()[r * n_in..(r + 1) * n_in],
                                    &mut gw[o * n_in..(o + 1) * n_in],
                                );
                            }
                        }
                    }
                    if let Some(gb) = slot(&mut grads, nodes, *b) {
                        for r in 0..rows {
                            axpy(1.0, &go[r * n_out..(r + 1) * n_out], gb);
                        }
                    }
                }
                Op::Concat { parts, axis } => {
                    let shape = node.value.shape();
                    let outer: usize = shape[..*axis].iter().product();
                    let inner: usize = shape[axis + 1..].iter().product();
                    let full_row = shape[*axis] * inner;
                    let mut offset = 0;
                    for p in parts {
                        let row = nodes[p.0].value.shape()[*axis] * inner;
                        if let Some(gp) = slot(&mut grads, nodes, *p) {
                            for o in 0..outer {
                                let src = o * full_row + offset;
                                axpy(1.0, &go[src..src + row], &mut gp[o * row..(o + 1) * row]);
                            }
                        }
                        offset += row;
                    }
                }
                Op::Gather { table, ids } => {
                    let d = nodes[table.0].value.shape()[1];
                    if let Some(gt) = slot(&mut grads, nodes, *table) {
                        for (i, &id) in ids.iter().enumerate() {
                            axpy(1.0, &go[i * d..(i + 1) * d], &mut gt[id * d..(id + 1) * d]);
                        }
                    }
                }
                Op::Reshape(a) => {
                    if let Some(ga) = slot(&mut grads, nodes, *a) {
                        axpy(1.0, &go, ga);
                    }
                }
                Op::Conv { x, w, b, per_sample } => {
                    let (tx, tw) = (&nodes[x.0].value, &nodes[w.0].value);
                    let (batch, len, d) = Self::conv_dims(tx).expect("validated in forward");
                    let wshape = tw.shape();
                    let (k, h) = if *per_sample {
                        (wshape[1], wshape[2])
                    } else {
                        (wshape[0], wshape[1])
                    };
                    let width = len - h + 1;
                    let span = h * d;
                    let bank_of = |s: usize| if *per_sample { s * k * span } else { 0 };
                    if let Some(gx) = slot(&mut grads, nodes, *x) {
                        for s in 0..batch {
                            for ki in 0..k {
                                let f0 = bank_of(s) + ki * span;
                                let filter = &tw.data()[f0..f0 + span];
                                for i in 0..width {
                                    let o = go[(s * k + ki) * width + i];
                                    if o != 0.0 {
                                        let x0 = s * len * d + i * d;
                                        axpy(o, filter, &mut gx[x0..x0 + span]);
                                    }
                                }
                            }
                        }
                    }
                    if let Some(gw) = slot(&mut grads, nodes, *w) {
                        for s in 0..batch {
                            for ki in 0..k {
                                let f0 = bank_of(s) + ki * span;
                                for i in 0..width {
                                    let o = go[(s * k + ki) * width + i];
                                    if o != 0.0 {
                                        let x0 = s * len * d + i * d;
                                        axpy(o, &tx.data()[x0..x0 + span], &mut gw[f0..f0 + span]);
                                    }
                                }
                            }
                        }
                    }
                    if let Some(bv) = b {
                        if let Some(gb) = slot(&mut grads, nodes, *bv) {
                            for s in 0..batch {
                                for (ki, g) in gb.iter_mut().enumerate() {
                                    let base = (s * k + ki) * width;
                                    *g += go[base..base + width].iter().sum::<f64>();
                                }
                            }
                        }
                    }
                }
                Op::Emit { z, g } => {
                    let (tz, tg) = (&nodes[z.0].value, &nodes[g.0].value);
                    let (l, n) = (tg.shape()[0], tg.shape()[1]);
                    let rows = tz.numel() / l;
                    if let Some(gz) = slot(&mut grads, nodes, *z) {
                        for r in 0..rows {
                            let gor = &go[r * n..(r + 1) * n];
                            for i in 0..l {
                                gz[r * l + i] += dot(gor, &tg.data()[i * n..(i + 1) * n]);
                            }
                        }
                    }
                    if let Some(gg) = slot(&mut grads, nodes, *g) {
                        for r in 0..rows {
                            let gor = &go[r * n..(r + 1) * n];
                            for i in 0..l {
                                axpy(tz.data()[r * l + i], gor, &mut gg[i * n..(i + 1) * n]);
                            }
                        }
                    }
                }
                Op::MaxOverTime { p, argmax } => {
                    if let Some(gp) = slot(&mut grads, nodes, *p) {
                        for (o, &src) in go.iter().zip(argmax) {
                            gp[src] += o;
                        }
                    }
                }
                Op::Dropout { x, mask } => {
                    if let Some(gx) = slot(&mut grads, nodes, *x) {
                        for ((g, o), m) in gx.iter_mut().zip(&go).zip(mask) {
                            *g += o * m;
                        }
                    }
                }
                Op::Sum(a) => {
                    if let Some(ga) = slot(&mut grads, nodes, *a) {
                        for g in ga.iter_mut() {
                            *g += go[0];
                        }
                    }
                }
                Op::Bce { p, targets } => {
                    let tp = nodes[p.0].value.data();
                    let n = targets.len().max(1) as f64;
                    if let Some(gp) = slot(&mut grads, nodes, *p) {
                        for ((g, &prob), &y) in gp.iter_mut().zip(tp).zip(targets) {
                            // Straight-through the clamp so saturated outputs keep a gradient.
                            let pc = prob.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                            *g += go[0] * (-y / pc + (1.0 - y) / (1.0 - pc)) / n;
                        }
                    }
                }
                Op::SoftmaxCe {
                    logits,
                    targets,
                    probs,
                } => {
                    let classes = probs.len() / targets.len().max(1);
                    let n = targets.len().max(1) as f64;
                    if let Some(gl) = slot(&mut grads, nodes, *logits) {
                        for (r, &y) in targets.iter().enumerate() {
                            for c in 0..classes {
                                let onehot = if c == y { 1.0 } else { 0.0 };
                                gl[r * classes + c] += go[0] * (probs[r * classes + c] - onehot) / n;
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
