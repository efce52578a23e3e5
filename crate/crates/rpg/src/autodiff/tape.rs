use std::collections::BTreeMap;

use super::array::{axpy, dot, RealArray};
use crate::error::{Error, Result};

/// Index of a recorded node. Only valid for the tape that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(pub(crate) usize);

/// Elementwise nonlinearity selector for [`Tape::activation`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Relu,
    Linear,
}

#[derive(Debug)]
enum Op {
    /// Input, parameter or constant; nothing to propagate.
    Leaf,
    /// y = x * W^T + b  with x: (B,D), W: (M,D), b: (1,M).
    Affine { x: NodeId, w: NodeId, b: NodeId },
    /// y = x * W^T  (no bias).
    MatMul { x: NodeId, w: NodeId },
    Tanh { x: NodeId },
    Sigmoid { x: NodeId },
    Relu { x: NodeId },
    Exp { x: NodeId },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    /// Elementwise product; squaring is `mul(x, x)`.
    Mul { a: NodeId, b: NodeId },
    Scale { x: NodeId, c: f64 },
    /// y = x + row broadcast over rows; row: (1,M).
    AddRow { x: NodeId, row: NodeId },
    /// y = row ⊙ x broadcast over rows; row: (1,M).
    MulRow { row: NodeId, x: NodeId },
    ConcatCols { parts: Vec<NodeId> },
    /// Sum of all elements -> (1,1).
    Sum { x: NodeId },
}

struct Node {
    op: Op,
    needs_grad: bool,
}

/// Append-only record of a forward computation with reverse-mode replay.
///
/// Nodes are recorded in topological order (inputs always precede their
/// consumers), so the backward pass is a single reverse sweep. Gradient
/// slots are cleared at the start of every backward pass and accumulate
/// additively within it. `reset` empties the tape for a fresh forward.
pub struct Tape {
    nodes: Vec<Node>,
    vals: Vec<RealArray>,
    grads: Vec<Option<Vec<f64>>>,
    params: BTreeMap<String, NodeId>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), vals: Vec::new(), grads: Vec::new(), params: BTreeMap::new() }
    }

    /// Drop all recorded nodes so the tape can host a fresh forward pass.
    pub fn reset(&mut self) {
        self.nodes.clear();
        self.vals.clear();
        self.grads.clear();
        self.params.clear();
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn value(&self, id: NodeId) -> &RealArray {
        &self.vals[id.0]
    }

    fn push(&mut self, op: Op, needs_grad: bool, value: RealArray) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, needs_grad });
        self.vals.push(value);
        self.grads.push(None);
        id
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Leaf that never receives a gradient (inputs, targets, noise draws).
    pub fn constant(&mut self, value: RealArray) -> NodeId {
        self.push(Op::Leaf, false, value)
    }

    /// Leaf that is not a parameter but should accumulate a gradient
    /// (e.g. stored actions when querying dQ/da).
    pub fn watched(&mut self, value: RealArray) -> NodeId {
        self.push(Op::Leaf, true, value)
    }

    /// Leaf registered under a unique name; gradients for all registered
    /// parameters can be collected with [`Tape::gradient_map`].
    pub fn param(&mut self, name: &str, value: &RealArray) -> Result<NodeId> {
        if self.params.contains_key(name) {
            return Err(Error::invalid("Tape::param", format!("duplicate parameter name {name:?}")));
        }
        let id = self.push(Op::Leaf, true, value.clone());
        self.params.insert(name.to_string(), id);
        Ok(id)
    }

    fn check_id(&self, id: NodeId, context: &'static str) -> Result<()> {
        if id.0 >= self.nodes.len() {
            return Err(Error::invalid(context, format!("node {} not on tape", id.0)));
        }
        Ok(())
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        self.check_id(x, "affine")?;
        self.check_id(w, "affine")?;
        self.check_id(b, "affine")?;
        let (bx, d) = self.vals[x.0].shape();
        let (m, wd) = self.vals[w.0].shape();
        let (br, bm) = self.vals[b.0].shape();
        if wd != d || br != 1 || bm != m {
            return Err(Error::shape(
                "affine",
                format!("x {bx}x{d}, W {m}x{wd}, b {br}x{bm} are incompatible"),
            ));
        }
        let mut out = RealArray::zeros(bx, m);
        {
            let xs = self.vals[x.0].data();
            let ws = self.vals[w.0].data();
            let bs = self.vals[b.0].data();
            let od = out.data_mut();
            for bi in 0..bx {
                let xr = &xs[bi * d..(bi + 1) * d];
                let or = &mut od[bi * m..(bi + 1) * m];
                for mi in 0..m {
                    or[mi] = dot(xr, &ws[mi * d..(mi + 1) * d]) + bs[mi];
                }
            }
        }
        out.check_finite("affine")?;
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(Op::Affine { x, w, b }, needs, out))
    }

    pub fn matmul(&mut self, x: NodeId, w: NodeId) -> Result<NodeId> {
        self.check_id(x, "matmul")?;
        self.check_id(w, "matmul")?;
        let (bx, d) = self.vals[x.0].shape();
        let (m, wd) = self.vals[w.0].shape();
        if wd != d {
            return Err(Error::shape("matmul", format!("x {bx}x{d} vs W {m}x{wd}")));
        }
        let mut out = RealArray::zeros(bx, m);
        {
            let xs = self.vals[x.0].data();
            let ws = self.vals[w.0].data();
            let od = out.data_mut();
            for bi in 0..bx {
                let xr = &xs[bi * d..(bi + 1) * d];
                let or = &mut od[bi * m..(bi + 1) * m];
                for mi in 0..m {
                    or[mi] = dot(xr, &ws[mi * d..(mi + 1) * d]);
                }
            }
        }
        out.check_finite("matmul")?;
        let needs = self.needs(x) || self.needs(w);
        Ok(self.push(Op::MatMul { x, w }, needs, out))
    }

    pub fn activation(&mut self, kind: Activation, x: NodeId) -> Result<NodeId> {
        match kind {
            Activation::Tanh => self.tanh(x),
            Activation::Sigmoid => self.sigmoid(x),
            Activation::Relu => self.relu(x),
            Activation::Linear => {
                self.check_id(x, "activation")?;
                Ok(x)
            }
        }
    }

    fn unary(
        &mut self,
        x: NodeId,
        context: &'static str,
        f: impl Fn(f64) -> f64,
        op: impl Fn(NodeId) -> Op,
    ) -> Result<NodeId> {
        self.check_id(x, context)?;
        let (r, c) = self.vals[x.0].shape();
        let mut out = RealArray::zeros(r, c);
        for (o, v) in out.data_mut().iter_mut().zip(self.vals[x.0].data()) {
            *o = f(*v);
        }
        out.check_finite(context)?;
        let needs = self.needs(x);
        Ok(self.push(op(x), needs, out))
    }

    pub fn tanh(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, "tanh", f64::tanh, |x| Op::Tanh { x })
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, "sigmoid", |v| 1.0 / (1.0 + (-v).exp()), |x| Op::Sigmoid { x })
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, "relu", |v| if v > 0.0 { v } else { 0.0 }, |x| Op::Relu { x })
    }

    pub fn exp(&mut self, x: NodeId) -> Result<NodeId> {
        self.unary(x, "exp", f64::exp, |x| Op::Exp { x })
    }

    fn binary(
        &mut self,
        a: NodeId,
        b: NodeId,
        context: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        self.check_id(a, context)?;
        self.check_id(b, context)?;
        if self.vals[a.0].shape() != self.vals[b.0].shape() {
            return Err(Error::shape(
                context,
                format!("{:?} vs {:?}", self.vals[a.0].shape(), self.vals[b.0].shape()),
            ));
        }
        let (r, c) = self.vals[a.0].shape();
        let mut out = RealArray::zeros(r, c);
        for ((o, x), y) in out.data_mut().iter_mut().zip(self.vals[a.0].data()).zip(self.vals[b.0].data()) {
            *o = f(*x, *y);
        }
        out.check_finite(context)?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(op, needs, out))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul { a, b })
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        self.check_id(x, "scale")?;
        if !c.is_finite() {
            return Err(Error::non_finite("scale", format!("factor {c}")));
        }
        let (r, cc) = self.vals[x.0].shape();
        let mut out = RealArray::zeros(r, cc);
        for (o, v) in out.data_mut().iter_mut().zip(self.vals[x.0].data()) {
            *o = c * v;
        }
        out.check_finite("scale")?;
        let needs = self.needs(x);
        Ok(self.push(Op::Scale { x, c }, needs, out))
    }

    pub fn add_row(&mut self, x: NodeId, row: NodeId) -> Result<NodeId> {
        self.check_id(x, "add_row")?;
        self.check_id(row, "add_row")?;
        let (b, m) = self.vals[x.0].shape();
        if self.vals[row.0].shape() != (1, m) {
            return Err(Error::shape(
                "add_row",
                format!("x {b}x{m} vs row {:?}", self.vals[row.0].shape()),
            ));
        }
        let mut out = RealArray::zeros(b, m);
        {
            let xs = self.vals[x.0].data();
            let rs = self.vals[row.0].data();
            let od = out.data_mut();
            for bi in 0..b {
                for mi in 0..m {
                    od[bi * m + mi] = xs[bi * m + mi] + rs[mi];
                }
            }
        }
        out.check_finite("add_row")?;
        let needs = self.needs(x) || self.needs(row);
        Ok(self.push(Op::AddRow { x, row }, needs, out))
    }

    pub fn mul_row(&mut self, row: NodeId, x: NodeId) -> Result<NodeId> {
        self.check_id(x, "mul_row")?;
        self.check_id(row, "mul_row")?;
        let (b, m) = self.vals[x.0].shape();
        if self.vals[row.0].shape() != (1, m) {
            return Err(Error::shape(
                "mul_row",
                format!("x {b}x{m} vs row {:?}", self.vals[row.0].shape()),
            ));
        }
        let mut out = RealArray::zeros(b, m);
        {
            let xs = self.vals[x.0].data();
            let rs = self.vals[row.0].data();
            let od = out.data_mut();
            for bi in 0..b {
                for mi in 0..m {
                    od[bi * m + mi] = rs[mi] * xs[bi * m + mi];
                }
            }
        }
        out.check_finite("mul_row")?;
        let needs = self.needs(x) || self.needs(row);
        Ok(self.push(Op::MulRow { row, x }, needs, out))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::invalid("concat_cols", "no parts"));
        }
        for &p in parts {
            self.check_id(p, "concat_cols")?;
        }
        let rows = self.vals[parts[0].0].rows();
        let mut total = 0;
        for &p in parts {
            if self.vals[p.0].rows() != rows {
                return Err(Error::shape(
                    "concat_cols",
                    format!("row counts differ: {} vs {}", rows, self.vals[p.0].rows()),
                ));
            }
            total += self.vals[p.0].cols();
        }
        let mut out = RealArray::zeros(rows, total);
        {
            let od = out.data_mut();
            for bi in 0..rows {
                let mut off = 0;
                for &p in parts {
                    let c = self.vals[p.0].cols();
                    od[bi * total + off..bi * total + off + c]
                        .copy_from_slice(self.vals[p.0].row_slice(bi));
                    off += c;
                }
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(Op::ConcatCols { parts: parts.to_vec() }, needs, out))
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        self.check_id(x, "sum")?;
        let total: f64 = self.vals[x.0].data().iter().sum();
        let out = RealArray::scalar(total)
            .map_err(|_| Error::non_finite("sum", format!("total {total}")))?;
        let needs = self.needs(x);
        Ok(self.push(Op::Sum { x }, needs, out))
    }

    /// Reverse sweep from `output`, seeding its gradient with
    /// `seed_gradient`. Gradient slots are zeroed first; afterwards each
    /// reachable node holds d(seed . output)/d(node). Unreached nodes read
    /// back as exactly zero.
    pub fn backward(&mut self, output: NodeId, seed_gradient: &RealArray) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::invalid("backward", "no forward pass recorded"));
        }
        self.check_id(output, "backward")?;
        if self.vals[output.0].shape() != seed_gradient.shape() {
            return Err(Error::shape(
                "backward",
                format!(
                    "seed {:?} vs output {:?}",
                    seed_gradient.shape(),
                    self.vals[output.0].shape()
                ),
            ));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[output.0] = Some(seed_gradient.data().to_vec());

        for i in (0..=output.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let grad = match self.grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            propagate(&self.nodes, &self.vals, &mut self.grads, i, &grad);
            self.grads[i] = Some(grad);
        }
        Ok(())
    }

    /// Gradient accumulated at `id` after a backward pass; zeros when the
    /// node was not reached.
    pub fn grad_array(&self, id: NodeId) -> RealArray {
        let (r, c) = self.vals[id.0].shape();
        match &self.grads[id.0] {
            Some(g) => RealArray::from_vec(r, c, g.clone()).expect("gradient is finite"),
            None => RealArray::zeros(r, c),
        }
    }

    /// Gradients of every parameter registered via [`Tape::param`], keyed
    /// by registered name. Parameters the forward pass never touched map
    /// to exact zeros.
    pub fn gradient_map(&self) -> BTreeMap<String, RealArray> {
        self.params
            .iter()
            .map(|(name, &id)| (name.clone(), self.grad_array(id)))
            .collect()
    }

    pub fn param_node(&self, name: &str) -> Option<NodeId> {
        self.params.get(name).copied()
    }
}

fn slot<'a>(
    grads: &'a mut [Option<Vec<f64>>],
    vals: &[RealArray],
    id: NodeId,
) -> &'a mut Vec<f64> {
    let n = vals[id.0].len();
    grads[id.0].get_or_insert_with(|| vec![0.0; n])
}

/// Apply the vector-Jacobian product of node `i` to its inputs' gradient
/// slots. `g` is the gradient already accumulated at node `i`.
fn propagate(nodes: &[Node], vals: &[RealArray], grads: &mut [Option<Vec<f64>>], i: usize, g: &[f64]) {
    let needs = |id: NodeId| nodes[id.0].needs_grad;
    match nodes[i].op {
        Op::Leaf => {}
        Op::Affine { x, w, b } => {
            let (bx, d) = vals[x.0].shape();
            let (m, _) = vals[w.0].shape();
            if needs(x) {
                let ws = vals[w.0].data();
                let gx = slot(grads, vals, x);
                for bi in 0..bx {
                    let gr = &g[bi * m..(bi + 1) * m];
                    let xr = &mut gx[bi * d..(bi + 1) * d];
                    for mi in 0..m {
                        axpy(gr[mi], &ws[mi * d..(mi + 1) * d], xr);
                    }
                }
            }
            if needs(w) {
                let xs = vals[x.0].data();
                let gw = slot(grads, vals, w);
                for bi in 0..bx {
                    let gr = &g[bi * m..(bi + 1) * m];
                    let xr = &xs[bi * d..(bi + 1) * d];
                    for mi in 0..m {
                        axpy(gr[mi], xr, &mut gw[mi * d..(mi + 1) * d]);
                    }
                }
            }
            if needs(b) {
                let gb = slot(grads, vals, b);
                for bi in 0..bx {
                    axpy(1.0, &g[bi * m..(bi + 1) * m], gb);
                }
            }
        }
        Op::MatMul { x, w } => {
            let (bx, d) = vals[x.0].shape();
            let (m, _) = vals[w.0].shape();
            if needs(x) {
                let ws = vals[w.0].data();
                let gx = slot(grads, vals, x);
                for bi in 0..bx {
                    let gr = &g[bi * m..(bi + 1) * m];
                    let xr = &mut gx[bi * d..(bi + 1) * d];
                    for mi in 0..m {
                        axpy(gr[mi], &ws[mi * d..(mi + 1) * d], xr);
                    }
                }
            }
            if needs(w) {
                let xs = vals[x.0].data();
                let gw = slot(grads, vals, w);
                for bi in 0..bx {
                    let gr = &g[bi * m..(bi + 1) * m];
                    let xr = &xs[bi * d..(bi + 1) * d];
                    for mi in 0..m {
                        axpy(gr[mi], xr, &mut gw[mi * d..(mi + 1) * d]);
                    }
                }
            }
        }
        Op::Tanh { x } => {
            if needs(x) {
                let ys = vals[i].data();
                let gx = slot(grads, vals, x);
                for ((dst, gi), y) in gx.iter_mut().zip(g).zip(ys) {
                    *dst += gi * (1.0 - y * y);
                }
            }
        }
        Op::Sigmoid { x } => {
            if needs(x) {
                let ys = vals[i].data();
                let gx = slot(grads, vals, x);
                for ((dst, gi), y) in gx.iter_mut().zip(g).zip(ys) {
                    *dst += gi * y * (1.0 - y);
                }
            }
        }
        Op::Relu { x } => {
            if needs(x) {
                let xs = vals[x.0].data();
                let gx = slot(grads, vals, x);
                for ((dst, gi), xv) in gx.iter_mut().zip(g).zip(xs) {
                    if *xv > 0.0 {
                        *dst += gi;
                    }
                }
            }
        }
        Op::Exp { x } => {
            if needs(x) {
                let ys = vals[i].data();
                let gx = slot(grads, vals, x);
                for ((dst, gi), y) in gx.iter_mut().zip(g).zip(ys) {
                    *dst += gi * y;
                }
            }
        }
        Op::Add { a, b } => {
            if needs(a) {
                axpy(1.0, g, slot(grads, vals, a));
            }
            if needs(b) {
                axpy(1.0, g, slot(grads, vals, b));
            }
        }
        Op::Sub { a, b } => {
            if needs(a) {
                axpy(1.0, g, slot(grads, vals, a));
            }
            if needs(b) {
                axpy(-1.0, g, slot(grads, vals, b));
            }
        }
        Op::Mul { a, b } => {
            if needs(a) {
                let bs = vals[b.0].data();
                let ga = slot(grads, vals, a);
                for ((dst, gi), bv) in ga.iter_mut().zip(g).zip(bs) {
                    *dst += gi * bv;
                }
            }
            if needs(b) {
                let as_ = vals[a.0].data();
                let gb = slot(grads, vals, b);
                for ((dst, gi), av) in gb.iter_mut().zip(g).zip(as_) {
                    *dst += gi * av;
                }
            }
        }
        Op::Scale { x, c } => {
            if needs(x) {
                axpy(c, g, slot(grads, vals, x));
            }
        }
        Op::AddRow { x, row } => {
            let (b, m) = vals[x.0].shape();
            if needs(x) {
                axpy(1.0, g, slot(grads, vals, x));
            }
            if needs(row) {
                let gr = slot(grads, vals, row);
                for bi in 0..b {
                    axpy(1.0, &g[bi * m..(bi + 1) * m], gr);
                }
            }
        }
        Op::MulRow { row, x } => {
            let (b, m) = vals[x.0].shape();
            if needs(x) {
                let rs = vals[row.0].data();
                let gx = slot(grads, vals, x);
                for bi in 0..b {
                    for mi in 0..m {
                        gx[bi * m + mi] += g[bi * m + mi] * rs[mi];
                    }
                }
            }
            if needs(row) {
                let xs = vals[x.0].data();
                let gr = slot(grads, vals, row);
                for bi in 0..b {
                    for mi in 0..m {
                        gr[mi] += g[bi * m + mi] * xs[bi * m + mi];
                    }
                }
            }
        }
        Op::ConcatCols { ref parts } => {
            let rows = vals[i].rows();
            let total = vals[i].cols();
            let mut off = 0;
            for &p in parts {
                let c = vals[p.0].cols();
                if needs(p) {
                    let gp = slot(grads, vals, p);
                    for bi in 0..rows {
                        axpy(
                            1.0,
                            &g[bi * total + off..bi * total + off + c],
                            &mut gp[bi * c..(bi + 1) * c],
                        );
                    }
                }
                off += c;
            }
        }
        Op::Sum { x } => {
            if needs(x) {
                let s = g[0];
                for dst in slot(grads, vals, x).iter_mut() {
                    *dst += s;
                }
            }
        }
    }
}
