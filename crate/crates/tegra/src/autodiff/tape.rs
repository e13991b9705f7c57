use std::cell::RefCell;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Append-only reverse-mode tape. Nodes are recorded in topological order by
/// construction, so the backward sweep is a single reverse pass that visits
/// each node exactly once.
///
/// A tape is confined to one thread; independent tapes may run concurrently.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    node_limit: usize,
    overflow: std::cell::Cell<bool>,
}

#[derive(Clone, Copy)]
struct Node {
    parents: [u32; 2],
    partials: [f64; 2],
}

/// A value recorded on a tape.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: u32,
    pub value: f64,
}

/// Adjoints produced by a backward sweep.
pub struct Grads(Vec<f64>);

impl Grads {
    pub fn wrt(&self, v: Var<'_>) -> f64 {
        self.0[v.id as usize]
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub const DEFAULT_NODE_LIMIT: usize = 1 << 26;

    pub fn new() -> Self {
        Self::with_node_limit(Self::DEFAULT_NODE_LIMIT)
    }

    pub fn with_node_limit(node_limit: usize) -> Self {
        Tape {
            nodes: RefCell::new(Vec::new()),
            node_limit,
            overflow: std::cell::Cell::new(false),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True once a recording was refused because the node limit was hit.
    pub fn overflowed(&self) -> bool {
        self.overflow.get()
    }

    /// Record an independent variable.
    pub fn var(&self, value: f64) -> Var<'_> {
        let id = self.push(Node {
            parents: [0, 0],
            partials: [0.0, 0.0],
        });
        Var {
            tape: self,
            id,
            value,
        }
    }

    /// Record a constant (zero adjoint contribution).
    pub fn constant(&self, value: f64) -> Var<'_> {
        self.var(value)
    }

    fn push(&self, node: Node) -> u32 {
        let mut nodes = self.nodes.borrow_mut();
        if nodes.len() >= self.node_limit {
            self.overflow.set(true);
            // keep ids valid by clamping to the last node
            return (nodes.len().saturating_sub(1)) as u32;
        }
        nodes.push(node);
        (nodes.len() - 1) as u32
    }

    fn unary(&self, a: Var<'_>, value: f64, da: f64) -> Var<'_> {
        let id = self.push(Node {
            parents: [a.id, a.id],
            partials: [da, 0.0],
        });
        Var {
            tape: self,
            id,
            value,
        }
    }

    fn binary(&self, a: Var<'_>, b: Var<'_>, value: f64, da: f64, db: f64) -> Var<'_> {
        let id = self.push(Node {
            parents: [a.id, b.id],
            partials: [da, db],
        });
        Var {
            tape: self,
            id,
            value,
        }
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    /// Backward sweep seeded with adjoint 1 at this node.
    pub fn backward(&self) -> Grads {
        let nodes = self.tape.nodes.borrow();
        let mut adj = vec![0.0f64; nodes.len()];
        adj[self.id as usize] = 1.0;
        for i in (0..=self.id as usize).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let n = &nodes[i];
            adj[n.parents[0] as usize] += n.partials[0] * a;
            adj[n.parents[1] as usize] += n.partials[1] * a;
        }
        // independent variables have zero partials, so their self-loops
        // contributed nothing
        Grads(adj)
    }

    pub fn exp(self) -> Self {
        let e = self.value.exp();
        self.tape.unary(self, e, e)
    }

    pub fn ln(self) -> Self {
        self.tape.unary(self, self.value.ln(), 1.0 / self.value)
    }

    pub fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        self.tape.unary(self, s, 0.5 / s)
    }

    pub fn sin(self) -> Self {
        self.tape.unary(self, self.value.sin(), self.value.cos())
    }

    pub fn cos(self) -> Self {
        self.tape.unary(self, self.value.cos(), -self.value.sin())
    }

    pub fn sigmoid(self) -> Self {
        let s = if self.value >= 0.0 {
            1.0 / (1.0 + (-self.value).exp())
        } else {
            let e = self.value.exp();
            e / (1.0 + e)
        };
        self.tape.unary(self, s, s * (1.0 - s))
    }

    pub fn softplus(self) -> Self {
        let v = if self.value > 0.0 {
            self.value + (-self.value).exp().ln_1p()
        } else {
            self.value.exp().ln_1p()
        };
        let sig = if self.value >= 0.0 {
            1.0 / (1.0 + (-self.value).exp())
        } else {
            let e = self.value.exp();
            e / (1.0 + e)
        };
        self.tape.unary(self, v, sig)
    }

    pub fn relu(self) -> Self {
        if self.value > 0.0 {
            self.tape.unary(self, self.value, 1.0)
        } else {
            self.tape.unary(self, 0.0, 0.0)
        }
    }

    pub fn powi(self, n: i32) -> Self {
        let v = self.value.powi(n);
        self.tape
            .unary(self, v, n as f64 * self.value.powi(n - 1))
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Self) -> Self {
        self.tape
            .binary(self, rhs, self.value + rhs.value, 1.0, 1.0)
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Self) -> Self {
        self.tape
            .binary(self, rhs, self.value - rhs.value, 1.0, -1.0)
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Self) -> Self {
        self.tape
            .binary(self, rhs, self.value * rhs.value, rhs.value, self.value)
    }
}

impl<'t> Div for Var<'t> {
    type Output = Var<'t>;
    fn div(self, rhs: Self) -> Self {
        let q = self.value / rhs.value;
        self.tape
            .binary(self, rhs, q, 1.0 / rhs.value, -q / rhs.value)
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Self {
        self.tape.unary(self, -self.value, -1.0)
    }
}

impl<'t> Add<f64> for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: f64) -> Self {
        self.tape.unary(self, self.value + rhs, 1.0)
    }
}

impl<'t> Sub<f64> for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: f64) -> Self {
        self.tape.unary(self, self.value - rhs, 1.0)
    }
}

impl<'t> Mul<f64> for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: f64) -> Self {
        self.tape.unary(self, self.value * rhs, rhs)
    }
}
