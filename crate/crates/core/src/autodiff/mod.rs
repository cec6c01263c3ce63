//! Define-by-run reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! Operations are recorded on a [`Tape`] as they execute. [`Tape::backward`]
//! walks the records in exact reverse order, applying each primitive's
//! vector–Jacobian product. Complex values are differentiated as pairs of
//! independent real coordinates: the gradient slot of a complex node holds
//! `∂L/∂re + i·∂L/∂im`.
//!
//! ```
//! use lensless::autodiff::Tape;
//! use lensless::Tensor;
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(Tensor::from_plane(1, 3, vec![1.0, -2.0, 3.0]).unwrap(), true);
//! let sq = tape.mul(x, x).unwrap();
//! let loss = tape.sum(sq).unwrap();
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(x).unwrap().data(), &[2.0, -4.0, 6.0]);
//! ```

mod backward;
mod broadcast;
mod gradcheck;
mod ops;

pub use gradcheck::{grad_check, GradCheck};

use crate::error::{Error, Result};
use crate::tensor::{ComplexTensor, Shape, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Real(Tensor),
    Complex(ComplexTensor),
}

impl Value {
    pub fn shape(&self) -> Shape {
        match self {
            Value::Real(t) => t.shape(),
            Value::Complex(z) => z.shape(),
        }
    }

    fn accumulate(&mut self, other: &Value) {
        match (self, other) {
            (Value::Real(a), Value::Real(b)) => {
                for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                    *x += y;
                }
            }
            (Value::Complex(a), Value::Complex(b)) => {
                for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                    *x += y;
                }
            }
            _ => unreachable!("gradient kind always matches value kind"),
        }
    }
}

/// Recorded operation with its parents and whatever the backward rule needs
/// beyond the parents' values.
#[derive(Debug, Clone)]
pub(crate) enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    ScalarMul(Var, f64),
    AddScalar(Var),
    Conv2d { x: Var, w: Var, stride: usize },
    Pointwise { x: Var, w: Var },
    GlobalAvgPool(Var),
    AvgPool2(Var),
    Upsample { x: Var, factor: usize },
    Concat(Var, Var),
    Pad { x: Var, top: usize, left: usize },
    Crop { x: Var, top: usize, left: usize },
    Reshape(Var),
    Sigmoid(Var),
    Relu(Var),
    Exp(Var),
    Reciprocal(Var),
    SoftmaxSpatial(Var),
    Sum(Var),
    Mean(Var),
    Mse(Var, Var),
    Ssim { a: Var, b: Var, grad_a: Tensor, grad_b: Tensor },
    Fft2(Var),
    Ifft2(Var),
    ComplexMul(Var, Var),
    ComplexConj(Var),
    MagnitudeSq(Var),
    RealPart(Var),
    ComplexScale(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Value,
    op: Op,
    needs_grad: bool,
}

/// Recording of one forward computation. Not shared across threads.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Value>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Value, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// Input variable; gradients are accumulated for it when `requires_grad`.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(Value::Real(value), Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Value {
        &self.nodes[v.0].value
    }

    /// Real value of `v`. Panics if `v` is complex.
    pub fn tensor(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Real(t) => t,
            Value::Complex(_) => panic!("variable {} is complex", v.0),
        }
    }

    /// Complex value of `v`. Panics if `v` is real.
    pub fn complex(&self, v: Var) -> &ComplexTensor {
        match &self.nodes[v.0].value {
            Value::Complex(z) => z,
            Value::Real(_) => panic!("variable {} is real", v.0),
        }
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Accumulated gradient of a leaf, if any has been populated.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        match self.grads[v.0].as_ref()? {
            Value::Real(t) => Some(t),
            Value::Complex(_) => None,
        }
    }

    pub fn grad_value(&self, v: Var) -> Option<&Value> {
        self.grads[v.0].as_ref()
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    pub(crate) fn real_of(&self, v: Var, what: &str) -> Result<&Tensor> {
        match &self.nodes[v.0].value {
            Value::Real(t) => Ok(t),
            Value::Complex(_) => Err(Error::sizing(format!("{what} expects a real operand"))),
        }
    }

    pub(crate) fn complex_of(&self, v: Var, what: &str) -> Result<&ComplexTensor> {
        match &self.nodes[v.0].value {
            Value::Complex(z) => Ok(z),
            Value::Real(_) => Err(Error::sizing(format!("{what} expects a complex operand"))),
        }
    }

    /// Backpropagates from a scalar `loss`, adding into the gradient slots of
    /// every variable that requires a gradient. Repeated calls accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.shape(loss) != [1, 1, 1, 1] || matches!(self.value(loss), Value::Complex(_)) {
            return Err(Error::argument(format!(
                "backward needs a real scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut adjoints: Vec<Option<Value>> = vec![None; loss.0 + 1];
        adjoints[loss.0] = Some(Value::Real(Tensor::scalar(1.0)));
        for idx in (0..=loss.0).rev() {
            let Some(g) = adjoints[idx].take() else { continue };
            if !self.nodes[idx].needs_grad {
                continue;
            }
            for (parent, contribution) in self.vjp(idx, &g)? {
                if !self.nodes[parent.0].needs_grad {
                    continue;
                }
                match &mut adjoints[parent.0] {
                    Some(acc) => acc.accumulate(&contribution),
                    slot => *slot = Some(contribution),
                }
            }
            if !matches!(self.nodes[idx].op, Op::Leaf) {
                continue;
            }
            let slot = &mut self.grads[idx];
            match slot {
                Some(acc) => acc.accumulate(&g),
                None => *slot = Some(g),
            }
        }
        Ok(())
    }
}
