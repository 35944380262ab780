//! Tape-based reverse-mode differentiation.
//!
//! A [`Tape`] is an append-only Wengert list. [`Var`] is a `Copy` handle that
//! carries its value and, when it depends on a registered input, the index of
//! the node that produced it. Values that do not depend on any input are
//! plain constants and never touch the tape, so constant sub-expressions (zero
//! imaginary parts, fixed features during training) cost nothing to record.
//!
//! Subgradient conventions at kinks are fixed so that training is
//! deterministic: `max`/`min` route the adjoint to the selected operand (the
//! first one on exact ties) and `|x|` has derivative zero at the origin.
//!
//! ```
//! use qcert_core::autodiff::value_and_grad;
//! use qcert_core::Scalar;
//!
//! let (value, grad) = value_and_grad(&[0.3], |_, x| x[0].cos()).unwrap();
//! assert!((value - 0.3f64.cos()).abs() < 1e-15);
//! assert!((grad[0] + 0.3f64.sin()).abs() < 1e-15);
//! ```

use std::cell::{Cell, RefCell};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const NO_PARENT: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Input,
    Add,
    Sub,
    Mul,
    Neg,
    Max,
    Min,
    Abs,
    Square,
    Cos,
    Sin,
    Exp,
    Ln,
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug)]
struct Node {
    op: OpKind,
    value: f64,
    parents: [(u32, f64); 2],
}

/// Append-only record of a computation. Thread-confined by construction.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    inputs: RefCell<Vec<u32>>,
    kink_gap: Cell<f64>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            inputs: RefCell::new(Vec::new()),
            kink_gap: Cell::new(f64::INFINITY),
        }
    }

    /// Registers a differentiable input.
    pub fn var(&self, value: f64) -> Var<'_> {
        let index = self.push(OpKind::Input, value, [(NO_PARENT, 0.0); 2]);
        self.inputs.borrow_mut().push(index);
        Var {
            value,
            node: Some(NodeRef { tape: self, index }),
        }
    }

    pub fn vars(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.var(v)).collect()
    }

    /// Number of recorded nodes, inputs included.
    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// How many nodes were recorded with the given operation kind.
    pub fn count(&self, op: OpKind) -> usize {
        self.nodes.borrow().iter().filter(|n| n.op == op).count()
    }

    /// Smallest distance to a `max`/`min` tie or `|x|`/branch kink seen while
    /// recording. Infinite when no kink was involved.
    pub fn kink_gap(&self) -> f64 {
        self.kink_gap.get()
    }

    fn note_gap(&self, gap: f64) {
        if gap < self.kink_gap.get() {
            self.kink_gap.set(gap);
        }
    }

    fn push(&self, op: OpKind, value: f64, parents: [(u32, f64); 2]) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let index = u32::try_from(nodes.len()).expect("tape exceeds u32::MAX nodes");
        nodes.push(Node { op, value, parents });
        index
    }

    /// Fails on the first node whose value is not finite, naming it.
    pub fn check_finite(&self) -> Result<()> {
        match self
            .nodes
            .borrow()
            .iter()
            .enumerate()
            .find(|(_, n)| !n.value.is_finite())
        {
            Some((index, node)) => Err(Error::domain(format!(
                "non-finite value {} at tape node {index} ({})",
                node.value, node.op
            ))),
            None => Ok(()),
        }
    }

    /// Reverse sweep from `output`; every node is visited at most once.
    pub fn gradients(&self, output: Var<'_>) -> Gradients {
        let nodes = self.nodes.borrow();
        let mut adjoints = vec![0.0; nodes.len()];
        if let Some(out) = output.node {
            assert!(
                std::ptr::eq(out.tape, self),
                "output variable belongs to a different tape"
            );
            adjoints[out.index as usize] = 1.0;
            for i in (0..=out.index as usize).rev() {
                let adj = adjoints[i];
                if adj == 0.0 {
                    continue;
                }
                for &(parent, weight) in &nodes[i].parents {
                    if parent != NO_PARENT {
                        adjoints[parent as usize] += adj * weight;
                    }
                }
            }
        }
        Gradients {
            adjoints,
            inputs: self.inputs.borrow().clone(),
        }
    }
}

/// Adjoints produced by [`Tape::gradients`].
pub struct Gradients {
    adjoints: Vec<f64>,
    inputs: Vec<u32>,
}

impl Gradients {
    /// Derivative of the output with respect to `var`; zero for constants.
    pub fn wrt(&self, var: Var<'_>) -> f64 {
        var.node
            .map(|n| self.adjoints.get(n.index as usize).copied().unwrap_or(0.0))
            .unwrap_or(0.0)
    }

    /// Gradient over registered inputs in registration order.
    pub fn inputs(&self) -> Vec<f64> {
        self.inputs
            .iter()
            .map(|&i| self.adjoints[i as usize])
            .collect()
    }
}

#[derive(Clone, Copy)]
struct NodeRef<'t> {
    tape: &'t Tape,
    index: u32,
}

/// A tracked real scalar.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    value: f64,
    node: Option<NodeRef<'t>>,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Some(n) => write!(f, "Var({} @{})", self.value, n.index),
            None => write!(f, "Var({})", self.value),
        }
    }
}

impl<'t> Var<'t> {
    pub fn is_tracked(&self) -> bool {
        self.node.is_some()
    }

    fn unary(self, op: OpKind, value: f64, partial: f64) -> Self {
        match self.node {
            None => Var::constant(value),
            Some(n) => Var {
                value,
                node: Some(NodeRef {
                    tape: n.tape,
                    index: n.tape.push(op, value, [(n.index, partial), (NO_PARENT, 0.0)]),
                }),
            },
        }
    }

    fn binary(self, other: Self, op: OpKind, value: f64, da: f64, db: f64) -> Self {
        let (tape, parents) = match (self.node, other.node) {
            (None, None) => return Var::constant(value),
            (Some(a), None) => (a.tape, [(a.index, da), (NO_PARENT, 0.0)]),
            (None, Some(b)) => (b.tape, [(b.index, db), (NO_PARENT, 0.0)]),
            (Some(a), Some(b)) => {
                debug_assert!(std::ptr::eq(a.tape, b.tape), "mixing tapes");
                (a.tape, [(a.index, da), (b.index, db)])
            }
        };
        Var {
            value,
            node: Some(NodeRef {
                tape,
                index: tape.push(op, value, parents),
            }),
        }
    }

    fn select(self, other: Self, take_self: bool, op: OpKind) -> Self {
        if let Some(tape) = self.node.or(other.node).map(|n| n.tape) {
            tape.note_gap((self.value - other.value).abs());
        }
        let chosen = if take_self { self } else { other };
        chosen.unary(op, chosen.value, 1.0)
    }

    fn is_const(self, c: f64) -> bool {
        self.node.is_none() && self.value == c
    }
}

impl Add for Var<'_> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        if rhs.is_const(0.0) {
            return self;
        }
        if self.is_const(0.0) {
            return rhs;
        }
        self.binary(rhs, OpKind::Add, self.value + rhs.value, 1.0, 1.0)
    }
}

impl Sub for Var<'_> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        if rhs.is_const(0.0) {
            return self;
        }
        self.binary(rhs, OpKind::Sub, self.value - rhs.value, 1.0, -1.0)
    }
}

impl Mul for Var<'_> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        if self.is_const(0.0) || rhs.is_const(0.0) {
            return Var::constant(self.value * rhs.value);
        }
        if rhs.is_const(1.0) {
            return self;
        }
        if self.is_const(1.0) {
            return rhs;
        }
        self.binary(rhs, OpKind::Mul, self.value * rhs.value, rhs.value, self.value)
    }
}

impl Neg for Var<'_> {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(OpKind::Neg, -self.value, -1.0)
    }
}

impl Scalar for Var<'_> {
    #[inline]
    fn constant(c: f64) -> Self {
        Var {
            value: c,
            node: None,
        }
    }

    #[inline]
    fn value(self) -> f64 {
        self.value
    }

    fn max(self, other: Self) -> Self {
        let take_self = self.value >= other.value;
        self.select(other, take_self, OpKind::Max)
    }

    fn min(self, other: Self) -> Self {
        let take_self = self.value <= other.value;
        self.select(other, take_self, OpKind::Min)
    }

    fn abs(self) -> Self {
        self.note_branch();
        let slope = if self.value > 0.0 {
            1.0
        } else if self.value < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.unary(OpKind::Abs, self.value.abs(), slope)
    }

    fn square(self) -> Self {
        self.unary(OpKind::Square, self.value * self.value, 2.0 * self.value)
    }

    fn cos(self) -> Self {
        self.unary(OpKind::Cos, self.value.cos(), -self.value.sin())
    }

    fn sin(self) -> Self {
        self.unary(OpKind::Sin, self.value.sin(), self.value.cos())
    }

    fn exp(self) -> Self {
        let e = self.value.exp();
        self.unary(OpKind::Exp, e, e)
    }

    fn ln(self) -> Self {
        self.unary(OpKind::Ln, self.value.ln(), 1.0 / self.value)
    }

    fn is_const_zero(self) -> bool {
        self.is_const(0.0)
    }

    fn note_branch(self) {
        if let Some(n) = self.node {
            n.tape.note_gap(self.value.abs());
        }
    }
}

/// Records `f` over fresh inputs, then returns its value and gradient.
///
/// Errors if any recorded intermediate is non-finite.
pub fn value_and_grad<F>(inputs: &[f64], f: F) -> Result<(f64, Vec<f64>)>
where
    F: for<'t> FnOnce(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let vars = tape.vars(inputs);
    let out = f(&tape, &vars);
    tape.check_finite()?;
    if !out.value.is_finite() {
        return Err(Error::domain(format!("non-finite output {}", out.value)));
    }
    let grads = tape.gradients(out);
    Ok((out.value, vars.iter().map(|&v| grads.wrt(v)).collect()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradCheckStatus {
    Passed,
    Failed,
    /// The point lies within the exclusion radius of a tie or kink.
    Excluded,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub status: GradCheckStatus,
    pub max_rel_error: f64,
    /// Input index where the worst relative error occurred.
    pub worst_index: usize,
    pub kink_gap: f64,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

/// Central-difference step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-5;
/// Points closer than this to a tie or kink are excluded from [`grad_check`].
pub const KINK_EXCLUSION: f64 = 1e-6;
/// Gradient magnitudes below this are compared in absolute terms: central
/// differences at [`FD_STEP`] carry roundoff near `1e-11`.
pub const GRAD_FLOOR: f64 = 1e-6;

/// Compares reverse-mode gradients against central finite differences.
///
/// The relative error for component `i` is `|g_i - fd_i| / max(|g_i|, GRAD_FLOOR)`.
pub fn grad_check<F>(f: F, point: &[f64], tolerance: f64) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let vars = tape.vars(point);
    let out = f(&tape, &vars);
    tape.check_finite()?;
    let grads = tape.gradients(out);
    let analytic: Vec<f64> = vars.iter().map(|&v| grads.wrt(v)).collect();
    let kink_gap = tape.kink_gap();

    let eval = |x: &[f64]| -> f64 {
        let tape = Tape::new();
        let vars = tape.vars(x);
        f(&tape, &vars).value()
    };
    let mut numeric = Vec::with_capacity(point.len());
    let mut probe = point.to_vec();
    for i in 0..point.len() {
        probe[i] = point[i] + FD_STEP;
        let up = eval(&probe);
        probe[i] = point[i] - FD_STEP;
        let down = eval(&probe);
        probe[i] = point[i];
        numeric.push((up - down) / (2.0 * FD_STEP));
    }

    let (worst_index, max_rel_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(g, fd)| (g - fd).abs() / g.abs().max(GRAD_FLOOR))
        .enumerate()
        .fold((0, 0.0), |best, (i, e)| if e > best.1 { (i, e) } else { best });

    let status = if kink_gap < KINK_EXCLUSION {
        GradCheckStatus::Excluded
    } else if max_rel_error <= tolerance {
        GradCheckStatus::Passed
    } else {
        GradCheckStatus::Failed
    };
    Ok(GradCheckReport {
        status,
        max_rel_error,
        worst_index,
        kink_gap,
        analytic,
        numeric,
    })
}
