//! Minimal reverse-mode differentiation tape.
//!
//! Every recorded node has at most two parents; backpropagation is a single
//! reverse sweep over the node list. Node 0 is a sentinel that absorbs the
//! adjoints of leaves and constants.

use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::real::Real;

#[derive(Clone, Copy)]
struct Node {
    parents: [u32; 2],
    weights: [f64; 2],
}

pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: RefCell::new(vec![Node {
                parents: [0, 0],
                weights: [0.0, 0.0],
            }]),
        }
    }

    pub fn with_capacity(cap: usize) -> Self {
        let tape = Tape {
            nodes: RefCell::new(Vec::with_capacity(cap + 1)),
        };
        tape.nodes.borrow_mut().push(Node {
            parents: [0, 0],
            weights: [0.0, 0.0],
        });
        tape
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= 1
    }

    fn push(&self, parents: [u32; 2], weights: [f64; 2]) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        let idx = nodes.len() as u32;
        nodes.push(Node { parents, weights });
        idx
    }

    /// Registers a differentiable leaf.
    pub fn var(&self, val: f64) -> Var<'_> {
        Var {
            tape: self,
            idx: self.push([0, 0], [0.0, 0.0]),
            val,
        }
    }

    /// Registers a constant; its adjoint is discarded.
    pub fn constant(&self, val: f64) -> Var<'_> {
        Var {
            tape: self,
            idx: 0,
            val,
        }
    }

    /// Adjoints of every node with respect to `output`.
    pub fn backward(&self, output: Var<'_>) -> Adjoints {
        let nodes = self.nodes.borrow();
        let mut adj = vec![0.0f64; nodes.len()];
        adj[output.idx as usize] = 1.0;
        for i in (1..nodes.len()).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let node = nodes[i];
            adj[node.parents[0] as usize] += a * node.weights[0];
            adj[node.parents[1] as usize] += a * node.weights[1];
        }
        Adjoints(adj)
    }
}

pub struct Adjoints(Vec<f64>);

impl Adjoints {
    pub fn get(&self, v: Var<'_>) -> f64 {
        self.0[v.idx as usize]
    }
}

#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: u32,
    val: f64,
}

impl<'t> Var<'t> {
    #[inline]
    fn unary(self, val: f64, dval: f64) -> Var<'t> {
        Var {
            tape: self.tape,
            idx: self.tape.push([self.idx, 0], [dval, 0.0]),
            val,
        }
    }

    #[inline]
    fn binary(self, other: Var<'t>, val: f64, da: f64, db: f64) -> Var<'t> {
        Var {
            tape: self.tape,
            idx: self.tape.push([self.idx, other.idx], [da, db]),
            val,
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Var<'t>) -> Var<'t> {
        self.binary(
            rhs,
            self.val / rhs.val,
            1.0 / rhs.val,
            -self.val / (rhs.val * rhs.val),
        )
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.unary(-self.val, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Var<'t> {
        self.unary(self.val + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Var<'t> {
        self.unary(self.val - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Var<'t> {
        self.unary(self.val * rhs, rhs)
    }
}

impl<'t> Div<f64> for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: f64) -> Var<'t> {
        self.unary(self.val / rhs, 1.0 / rhs)
    }
}

impl<'t> Real for Var<'t> {
    #[inline]
    fn value(self) -> f64 {
        self.val
    }

    fn constant(self, c: f64) -> Var<'t> {
        self.tape.constant(c)
    }

    fn sqrt(self) -> Var<'t> {
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s)
    }

    fn sin(self) -> Var<'t> {
        self.unary(self.val.sin(), self.val.cos())
    }

    fn cos(self) -> Var<'t> {
        self.unary(self.val.cos(), -self.val.sin())
    }

    fn exp(self) -> Var<'t> {
        let e = self.val.exp();
        self.unary(e, e)
    }

    fn ln(self) -> Var<'t> {
        self.unary(self.val.ln(), 1.0 / self.val)
    }

    fn ln_1p(self) -> Var<'t> {
        self.unary(self.val.ln_1p(), 1.0 / (1.0 + self.val))
    }
}
