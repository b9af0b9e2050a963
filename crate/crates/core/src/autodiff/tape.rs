use std::cell::RefCell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use super::AutodiffError;

/// Smoothing constant for [`Var::abs_smooth`].
pub const ABS_SMOOTH_EPS: f64 = 1e-12;

/// Primitive tag stored on every node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Const,
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Sin,
    Cos,
    Tanh,
    Exp,
    Log,
    Pow,
    Min,
    Max,
    AbsSmooth,
    /// `bias + Σ wᵢ·xᵢ` as a single n-ary node.
    Affine,
    /// Caller-supplied value and local partials.
    Custom,
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Op::Const => "const",
            Op::Leaf => "leaf",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Neg => "neg",
            Op::Sin => "sin",
            Op::Cos => "cos",
            Op::Tanh => "tanh",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Pow => "pow",
            Op::Min => "min",
            Op::Max => "max",
            Op::AbsSmooth => "abs_smooth",
            Op::Affine => "affine",
            Op::Custom => "custom",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy)]
struct Edge {
    parent: u32,
    partial: f64,
}

#[derive(Debug, Default)]
struct TapeInner {
    values: Vec<f64>,
    ops: Vec<Op>,
    // edges of node i live in edges[edge_start[i]..edge_start[i + 1]]
    edge_start: Vec<u32>,
    edges: Vec<Edge>,
    leaves: Vec<usize>,
    error: Option<AutodiffError>,
}

impl TapeInner {
    fn push(&mut self, op: Op, value: f64, parents: impl IntoIterator<Item = (usize, f64)>) -> usize {
        let id = self.values.len();
        if self.edge_start.is_empty() {
            self.edge_start.push(0);
        }
        for (parent, partial) in parents {
            debug_assert!(parent < id);
            self.edges.push(Edge { parent: parent as u32, partial });
        }
        self.values.push(value);
        self.ops.push(op);
        self.edge_start.push(self.edges.len() as u32);
        if !value.is_finite() && self.error.is_none() {
            self.error = Some(AutodiffError::NonFinite { op, node: id });
        }
        id
    }
}

/// Read-only view of one node of the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: usize,
    pub value: f64,
    pub op: Op,
    pub parents: Vec<(usize, f64)>,
}

/// Append-only scalar computation graph.
///
/// Operator overloads on [`Var`] never fail; a domain violation or a
/// non-finite value poisons the tape and the first such error is returned by
/// [`Tape::check`] and [`Tape::backward`]. Use [`Tape::apply_primitive`] to
/// get the error at construction time instead.
#[derive(Debug, Default)]
pub struct Tape {
    inner: RefCell<TapeInner>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var").field("id", &self.id).field("value", &self.value()).finish()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        let inner = TapeInner {
            values: Vec::with_capacity(nodes),
            ops: Vec::with_capacity(nodes),
            edge_start: Vec::with_capacity(nodes + 1),
            edges: Vec::with_capacity(2 * nodes),
            ..TapeInner::default()
        };
        Self { inner: RefCell::new(inner) }
    }

    /// Registers a differentiable input.
    pub fn leaf(&self, value: f64) -> Result<Var<'_>, AutodiffError> {
        if !value.is_finite() {
            return Err(AutodiffError::NonFiniteInput(value));
        }
        let mut inner = self.inner.borrow_mut();
        let id = inner.push(Op::Leaf, value, []);
        inner.leaves.push(id);
        Ok(Var { tape: self, id })
    }

    /// Registers one leaf per value.
    pub fn leaves(&self, values: &[f64]) -> Result<Vec<Var<'_>>, AutodiffError> {
        values.iter().map(|&v| self.leaf(v)).collect()
    }

    /// A constant node. Constants carry no gradient.
    pub fn constant(&self, value: f64) -> Var<'_> {
        let id = self.inner.borrow_mut().push(Op::Const, value, []);
        Var { tape: self, id }
    }

    pub fn len(&self) -> usize {
        self.inner.borrow().values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn leaf_ids(&self) -> Vec<usize> {
        self.inner.borrow().leaves.clone()
    }

    pub fn node(&self, id: usize) -> Option<Node> {
        let inner = self.inner.borrow();
        if id >= inner.values.len() {
            return None;
        }
        let (lo, hi) = (inner.edge_start[id] as usize, inner.edge_start[id + 1] as usize);
        Some(Node {
            id,
            value: inner.values[id],
            op: inner.ops[id],
            parents: inner.edges[lo..hi].iter().map(|e| (e.parent as usize, e.partial)).collect(),
        })
    }

    /// First error recorded by an unchecked operation, if any.
    pub fn check(&self) -> Result<(), AutodiffError> {
        match &self.inner.borrow().error {
            Some(e) => Err(e.clone()),
            None => Ok(()),
        }
    }

    fn owns(&self, v: Var<'_>) -> bool {
        std::ptr::eq(self, v.tape) && v.id < self.len()
    }

    fn push_unchecked(&self, op: Op, value: f64, parents: &[(usize, f64)]) -> Var<'_> {
        let id = self.inner.borrow_mut().push(op, value, parents.iter().copied());
        Var { tape: self, id }
    }

    fn poison(&self, err: AutodiffError) {
        let mut inner = self.inner.borrow_mut();
        if inner.error.is_none() {
            inner.error = Some(err);
        }
    }

    /// Applies `op` to `args` with domain checking.
    ///
    /// Arity: unary ops take one argument, `add sub mul div pow min max`
    /// take two. `const`, `leaf`, `affine` and `custom` have dedicated
    /// constructors and are rejected here.
    pub fn apply_primitive<'t>(&'t self, op: Op, args: &[Var<'t>]) -> Result<Var<'t>, AutodiffError> {
        if let Some(foreign) = args.iter().find(|a| !self.owns(**a)) {
            return Err(AutodiffError::ForeignNode(foreign.id));
        }
        let arity = match op {
            Op::Neg | Op::Sin | Op::Cos | Op::Tanh | Op::Exp | Op::Log | Op::AbsSmooth => 1,
            Op::Add | Op::Sub | Op::Mul | Op::Div | Op::Pow | Op::Min | Op::Max => 2,
            Op::Const | Op::Leaf | Op::Affine | Op::Custom => {
                return Err(AutodiffError::Arity { op, expected: 0, got: args.len() })
            }
        };
        if args.len() != arity {
            return Err(AutodiffError::Arity { op, expected: arity, got: args.len() });
        }
        let (value, parents) = local_rule(op, args)?;
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite { op, node: self.len() });
        }
        Ok(self.push_unchecked(op, value, &parents))
    }

    /// `bias + Σ weights[i]·inputs[i]` as one node.
    pub fn affine<'t>(&'t self, weights: &[Var<'t>], inputs: &[Var<'t>], bias: Var<'t>) -> Var<'t> {
        assert_eq!(weights.len(), inputs.len(), "affine: length mismatch");
        let mut value = bias.value();
        let mut parents = Vec::with_capacity(2 * weights.len() + 1);
        parents.push((bias.id, 1.0));
        for (w, x) in weights.iter().zip(inputs) {
            let (wv, xv) = (w.value(), x.value());
            value += wv * xv;
            parents.push((w.id, xv));
            parents.push((x.id, wv));
        }
        self.push_unchecked(Op::Affine, value, &parents)
    }

    /// A node with caller-supplied value and local partial derivatives.
    pub fn custom<'t>(&'t self, value: f64, parents: &[(Var<'t>, f64)]) -> Result<Var<'t>, AutodiffError> {
        if let Some((foreign, _)) = parents.iter().find(|(p, _)| !self.owns(*p)) {
            return Err(AutodiffError::ForeignNode(foreign.id));
        }
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite { op: Op::Custom, node: self.len() });
        }
        let parents: Vec<_> = parents.iter().map(|(p, d)| (p.id, *d)).collect();
        Ok(self.push_unchecked(Op::Custom, value, &parents))
    }

    /// Reverse sweep from `root`.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients, AutodiffError> {
        if !self.owns(root) {
            return Err(AutodiffError::ForeignNode(root.id));
        }
        self.check()?;
        let inner = self.inner.borrow();
        let mut adjoints = vec![0.0; root.id + 1];
        adjoints[root.id] = 1.0;
        for id in (0..=root.id).rev() {
            let adj = adjoints[id];
            if adj == 0.0 {
                continue;
            }
            let (lo, hi) = (inner.edge_start[id] as usize, inner.edge_start[id + 1] as usize);
            for e in &inner.edges[lo..hi] {
                adjoints[e.parent as usize] += adj * e.partial;
            }
        }
        Ok(Gradients { root: root.id, adjoints, leaves: inner.leaves.clone() })
    }
}

fn local_rule(op: Op, args: &[Var<'_>]) -> Result<(f64, Vec<(usize, f64)>), AutodiffError> {
    let a = args[0];
    let av = a.value();
    let unary = |v: f64, d: f64| Ok((v, vec![(a.id, d)]));
    match op {
        Op::Neg => unary(-av, -1.0),
        Op::Sin => unary(av.sin(), av.cos()),
        Op::Cos => unary(av.cos(), -av.sin()),
        Op::Tanh => {
            let t = av.tanh();
            unary(t, 1.0 - t * t)
        }
        Op::Exp => {
            let e = av.exp();
            unary(e, e)
        }
        Op::Log => {
            if av <= 0.0 {
                return Err(AutodiffError::Domain { op, value: av });
            }
            unary(av.ln(), 1.0 / av)
        }
        Op::AbsSmooth => {
            let r = (av * av + ABS_SMOOTH_EPS).sqrt();
            unary(r, av / r)
        }
        _ => {
            let b = args[1];
            let bv = b.value();
            match op {
                Op::Add => Ok((av + bv, vec![(a.id, 1.0), (b.id, 1.0)])),
                Op::Sub => Ok((av - bv, vec![(a.id, 1.0), (b.id, -1.0)])),
                Op::Mul => Ok((av * bv, vec![(a.id, bv), (b.id, av)])),
                Op::Div => {
                    if bv == 0.0 {
                        return Err(AutodiffError::Domain { op, value: bv });
                    }
                    Ok((av / bv, vec![(a.id, 1.0 / bv), (b.id, -av / (bv * bv))]))
                }
                Op::Pow => {
                    if av <= 0.0 {
                        return Err(AutodiffError::Domain { op, value: av });
                    }
                    let p = av.powf(bv);
                    Ok((p, vec![(a.id, bv * av.powf(bv - 1.0)), (b.id, p * av.ln())]))
                }
                // ties go to the left argument
                Op::Min => Ok(if av <= bv { (av, vec![(a.id, 1.0)]) } else { (bv, vec![(b.id, 1.0)]) }),
                Op::Max => Ok(if av >= bv { (av, vec![(a.id, 1.0)]) } else { (bv, vec![(b.id, 1.0)]) }),
                _ => unreachable!("unary ops handled above"),
            }
        }
    }
}

/// Adjoints of every node up to the root of a backward pass.
#[derive(Debug, Clone)]
pub struct Gradients {
    root: usize,
    adjoints: Vec<f64>,
    leaves: Vec<usize>,
}

impl Gradients {
    /// ∂root/∂v. Zero for nodes created after the root.
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.adjoints.get(v.id).copied().unwrap_or(0.0)
    }

    pub fn wrt_all(&self, vars: &[Var<'_>]) -> Vec<f64> {
        vars.iter().map(|v| self.wrt(*v)).collect()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// (leaf id, adjoint) for every registered leaf.
    pub fn leaf_gradients(&self) -> Vec<(usize, f64)> {
        self.leaves
            .iter()
            .map(|&id| (id, self.adjoints.get(id).copied().unwrap_or(0.0)))
            .collect()
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> f64 {
        self.tape.inner.borrow().values[self.id]
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn unary(self, op: Op, value: f64, partial: f64) -> Self {
        self.tape.push_unchecked(op, value, &[(self.id, partial)])
    }

    fn binary(self, other: Self, op: Op, value: f64, da: f64, db: f64) -> Self {
        debug_assert!(std::ptr::eq(self.tape, other.tape), "nodes from different tapes");
        self.tape.push_unchecked(op, value, &[(self.id, da), (other.id, db)])
    }

    pub fn sin(self) -> Self {
        let v = self.value();
        self.unary(Op::Sin, v.sin(), v.cos())
    }

    pub fn cos(self) -> Self {
        let v = self.value();
        self.unary(Op::Cos, v.cos(), -v.sin())
    }

    pub fn tanh(self) -> Self {
        let t = self.value().tanh();
        self.unary(Op::Tanh, t, 1.0 - t * t)
    }

    pub fn exp(self) -> Self {
        let e = self.value().exp();
        self.unary(Op::Exp, e, e)
    }

    pub fn ln(self) -> Self {
        let v = self.value();
        if v <= 0.0 {
            self.tape.poison(AutodiffError::Domain { op: Op::Log, value: v });
        }
        self.unary(Op::Log, v.ln(), 1.0 / v)
    }

    pub fn powf(self, p: f64) -> Self {
        let v = self.value();
        if v < 0.0 && p.fract() != 0.0 {
            self.tape.poison(AutodiffError::Domain { op: Op::Pow, value: v });
        }
        self.unary(Op::Pow, v.powf(p), p * v.powf(p - 1.0))
    }

    pub fn powi(self, n: i32) -> Self {
        let v = self.value();
        self.unary(Op::Pow, v.powi(n), f64::from(n) * v.powi(n - 1))
    }

    pub fn square(self) -> Self {
        self * self
    }

    pub fn min(self, other: Self) -> Self {
        let (a, b) = (self.value(), other.value());
        if a <= b {
            self.unary(Op::Min, a, 1.0)
        } else {
            other.unary(Op::Min, b, 1.0)
        }
    }

    pub fn max(self, other: Self) -> Self {
        let (a, b) = (self.value(), other.value());
        if a >= b {
            self.unary(Op::Max, a, 1.0)
        } else {
            other.unary(Op::Max, b, 1.0)
        }
    }

    /// `√(x² + ε)` with ε = [`ABS_SMOOTH_EPS`].
    pub fn abs_smooth(self) -> Self {
        let v = self.value();
        let r = (v * v + ABS_SMOOTH_EPS).sqrt();
        self.unary(Op::AbsSmooth, r, v / r)
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        let v = self.value() + rhs.value();
        self.binary(rhs, Op::Add, v, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        let v = self.value() - rhs.value();
        self.binary(rhs, Op::Sub, v, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        let (a, b) = (self.value(), rhs.value());
        self.binary(rhs, Op::Mul, a * b, b, a)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self {
        let (a, b) = (self.value(), rhs.value());
        if b == 0.0 {
            self.tape.poison(AutodiffError::Domain { op: Op::Div, value: b });
        }
        self.binary(rhs, Op::Div, a / b, 1.0 / b, -a / (b * b))
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        let v = self.value();
        self.unary(Op::Neg, -v, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Self {
        let v = self.value();
        self.unary(Op::Add, v + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Self {
        let v = self.value();
        self.unary(Op::Sub, v - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Self {
        let v = self.value();
        self.unary(Op::Mul, v * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Self {
        if rhs == 0.0 {
            self.tape.poison(AutodiffError::Domain { op: Op::Div, value: rhs });
        }
        let v = self.value();
        self.unary(Op::Div, v / rhs, 1.0 / rhs)
    }
}

impl<'t> Add<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        rhs + self
    }
}

impl<'t> Sub<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        let v = rhs.value();
        rhs.unary(Op::Sub, self - v, -1.0)
    }
}

impl<'t> Mul<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        rhs * self
    }
}

impl<'t> Div<Var<'t>> for f64 {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        let b = rhs.value();
        if b == 0.0 {
            rhs.tape.poison(AutodiffError::Domain { op: Op::Div, value: b });
        }
        rhs.unary(Op::Div, self / b, -self / (b * b))
    }
}
