//! Scalar reverse-mode tape (Wengert list).
//!
//! Every arithmetic operation on a [`Var`] appends one node holding the
//! local partial derivatives with respect to at most two parents. Because
//! [`Var`] implements [`JetScalar`], jets whose slots are `Var`s record the
//! full Taylor propagation, so gradients of expressions containing `u_xxx`
//! come out of the same reverse sweep as gradients of `u` itself.

use std::cell::RefCell;
use std::ops::{Add, Mul, Neg, Sub};

use super::jet::JetScalar;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
struct Node {
    value: f64,
    parents: [(usize, f64); 2],
    arity: u8,
}

/// Append-only computation graph for one loss evaluation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    params: RefCell<Vec<usize>>,
}

/// A scalar recorded on a [`Tape`].
#[derive(Clone, Copy, Debug)]
pub struct Var<'t> {
    tape: &'t Tape,
    index: usize,
    value: f64,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: f64, parents: [(usize, f64); 2], arity: u8) -> usize {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            parents,
            arity,
        });
        nodes.len() - 1
    }

    /// A leaf that does not receive a gradient.
    pub fn constant(&self, value: f64) -> Var<'_> {
        let index = self.push(value, [(0, 0.0); 2], 0);
        Var {
            tape: self,
            index,
            value,
        }
    }

    /// Registers a parameter leaf; `backward` reports gradients in
    /// registration order.
    pub fn param(&self, value: f64) -> Var<'_> {
        let v = self.constant(value);
        self.params.borrow_mut().push(v.index);
        v
    }

    pub fn params(&self, values: &[f64]) -> Vec<Var<'_>> {
        values.iter().map(|&v| self.param(v)).collect()
    }

    fn unary(&self, value: f64, a: usize, da: f64) -> Var<'_> {
        let index = self.push(value, [(a, da), (0, 0.0)], 1);
        Var {
            tape: self,
            index,
            value,
        }
    }

    fn binary(&self, value: f64, a: usize, da: f64, b: usize, db: f64) -> Var<'_> {
        let index = self.push(value, [(a, da), (b, db)], 2);
        Var {
            tape: self,
            index,
            value,
        }
    }

    /// Gradient of `output` with respect to every registered parameter.
    ///
    /// The recorded graph is consumed: the tape is empty afterwards and any
    /// `Var` still alive must not be used for further arithmetic.
    pub fn backward(&self, output: Var<'_>) -> Result<Vec<f64>> {
        let nodes = std::mem::take(&mut *self.nodes.borrow_mut());
        let params = std::mem::take(&mut *self.params.borrow_mut());
        if let Some(i) = nodes[..=output.index]
            .iter()
            .position(|n| !n.value.is_finite())
        {
            return Err(Error::non_finite(format!("tape node {i}")));
        }
        let mut adjoint = vec![0.0; output.index + 1];
        adjoint[output.index] = 1.0;
        for i in (0..=output.index).rev() {
            let a = adjoint[i];
            if a == 0.0 {
                continue;
            }
            let node = &nodes[i];
            for &(p, d) in &node.parents[..node.arity as usize] {
                adjoint[p] += a * d;
            }
        }
        Ok(params
            .iter()
            .map(|&p| adjoint.get(p).copied().unwrap_or(0.0))
            .collect())
    }
}

impl<'t> Var<'t> {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn sin(self) -> Var<'t> {
        let (s, c) = self.value.sin_cos();
        self.tape.unary(s, self.index, c)
    }

    pub fn cos(self) -> Var<'t> {
        let (s, c) = self.value.sin_cos();
        self.tape.unary(c, self.index, -s)
    }

    pub fn tanh(self) -> Var<'t> {
        let t = self.value.tanh();
        self.tape.unary(t, self.index, 1.0 - t * t)
    }

    pub fn scale(self, k: f64) -> Var<'t> {
        self.tape.unary(self.value * k, self.index, k)
    }

    pub fn square(self) -> Var<'t> {
        self * self
    }

    /// Sequential left-to-right sum.
    pub fn sum(tape: &'t Tape, terms: impl IntoIterator<Item = Var<'t>>) -> Var<'t> {
        let mut acc: Option<Var<'t>> = None;
        for t in terms {
            acc = Some(match acc {
                None => t,
                Some(a) => a + t,
            });
        }
        acc.unwrap_or_else(|| tape.constant(0.0))
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.tape
            .binary(self.value + rhs.value, self.index, 1.0, rhs.index, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.tape
            .binary(self.value - rhs.value, self.index, 1.0, rhs.index, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.tape.binary(
            self.value * rhs.value,
            self.index,
            rhs.value,
            rhs.index,
            self.value,
        )
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }
}

impl<'t> JetScalar for Var<'t> {
    fn constant_like(&self, value: f64) -> Self {
        self.tape.constant(value)
    }
    fn scale(&self, k: f64) -> Self {
        Var::scale(*self, k)
    }
    fn sin(&self) -> Self {
        Var::sin(*self)
    }
    fn cos(&self) -> Self {
        Var::cos(*self)
    }
    fn tanh(&self) -> Self {
        Var::tanh(*self)
    }
    fn value(&self) -> f64 {
        self.value
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Jet;

    #[test]
    fn product_gradient() {
        let tape = Tape::new();
        let p = tape.params(&[3.0, 5.0]);
        let loss = p[0] * p[1];
        assert_eq!(tape.backward(loss).unwrap(), vec![5.0, 3.0]);
        assert!(tape.is_empty());
    }

    #[test]
    fn quadratic_gradient() {
        let tape = Tape::new();
        let p = tape.params(&[1.0, -2.0]);
        let loss = Var::sum(&tape, p.iter().map(|&q| q.square()));
        assert_eq!(tape.backward(loss).unwrap(), vec![2.0, -4.0]);
    }

    #[test]
    fn non_finite_node_is_reported() {
        let tape = Tape::new();
        let p = tape.params(&[1.0]);
        let big = tape.constant(f64::INFINITY);
        let loss = p[0] * big;
        match tape.backward(loss) {
            Err(Error::NonFinite { location }) => assert_eq!(location, "tape node 1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gradient_through_third_derivative_slot() {
        // f(x) = sin(w x); d³f/dx³ = -w³ cos(w x); d/dw of that at x.
        let (w0, x0) = (0.7, 1.3);
        let tape = Tape::new();
        let w = tape.param(w0);
        let x = Jet::seed_x(x0).map(|s| tape.constant(s));
        let f = x.scale_by(&w).sin();
        let g = tape.backward(f.vxxx).unwrap()[0];
        let exact = -3.0 * w0 * w0 * (w0 * x0).cos() + w0.powi(3) * x0 * (w0 * x0).sin();
        assert!((g - exact).abs() < 1e-12);
    }
}
