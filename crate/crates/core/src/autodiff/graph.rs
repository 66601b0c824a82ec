//! Define-by-run reverse-mode differentiation over 2D arrays.
//!
//! Every tensor is an `Array2<f64>`; scalars are 1×1. Elementwise binary
//! ops broadcast along axes of size one (both operands may broadcast), and
//! the backward pass sum-reduces adjoints over the broadcast axes. Values
//! are computed eagerly at node creation, so a loss is built by running the
//! model; `backward` then walks the tape once in reverse.
//!
//! There is no gradient-of-gradient: quantities that need input derivatives
//! (Jacobians, Taylor jets) are themselves expressed as forward nodes built
//! from these primitives, so a single reverse pass differentiates losses
//! that contain them.

use ndarray::Array2;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Square(NodeId),
    Sum(NodeId),
    RowSum(NodeId),
    SliceCols(NodeId, usize, usize),
    SliceRows(NodeId, usize, usize),
    Tanh(NodeId),
    SinW(NodeId, f64),
    CosW(NodeId, f64),
    Erf(NodeId),
    Exp(NodeId),
}

pub struct Graph {
    ops: Vec<Op>,
    values: Vec<Array2<f64>>,
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize), what: &str) -> (usize, usize) {
    let dim = |x: usize, y: usize| -> usize {
        if x == y {
            x
        } else if x == 1 {
            y
        } else if y == 1 {
            x
        } else {
            panic!("{what}: incompatible shapes {a:?} and {b:?}");
        }
    };
    (dim(a.0, b.0), dim(a.1, b.1))
}

fn binary(a: &Array2<f64>, b: &Array2<f64>, what: &str, f: impl Fn(f64, f64) -> f64) -> Array2<f64> {
    let shape = broadcast_shape(a.dim(), b.dim(), what);
    let av = a.broadcast(shape).unwrap();
    let bv = b.broadcast(shape).unwrap();
    let mut out = Array2::zeros(shape);
    ndarray::Zip::from(&mut out).and(&av).and(&bv).for_each(|o, &x, &y| *o = f(x, y));
    out
}

/// Sum an adjoint over the axes its operand had broadcast along.
fn reduce_to(g: &Array2<f64>, shape: (usize, usize)) -> Array2<f64> {
    let mut out = g.clone();
    if shape.0 == 1 && out.nrows() > 1 {
        out = out
            .sum_axis(ndarray::Axis(0))
            .insert_axis(ndarray::Axis(0))
            .into_dimensionality()
            .unwrap();
    }
    if shape.1 == 1 && out.ncols() > 1 {
        out = out
            .sum_axis(ndarray::Axis(1))
            .insert_axis(ndarray::Axis(1))
            .into_dimensionality()
            .unwrap();
    }
    out
}

impl Graph {
    pub fn new() -> Graph {
        Graph {
            ops: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.values[id.0]
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, id: NodeId) -> f64 {
        let v = self.value(id);
        assert_eq!(v.dim(), (1, 1), "scalar() on a non-scalar node");
        v[(0, 0)]
    }

    fn push(&mut self, op: Op, value: Array2<f64>) -> NodeId {
        self.ops.push(op);
        self.values.push(value);
        NodeId(self.ops.len() - 1)
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn leaf_scalar(&mut self, value: f64) -> NodeId {
        self.leaf(Array2::from_elem((1, 1), value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = binary(self.value(a), self.value(b), "add", |x, y| x + y);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = binary(self.value(a), self.value(b), "sub", |x, y| x - y);
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = binary(self.value(a), self.value(b), "mul", |x, y| x * y);
        self.push(Op::Mul(a, b), v)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(
            av.ncols(),
            bv.nrows(),
            "matmul: inner dimensions differ ({:?} · {:?})",
            av.dim(),
            bv.dim()
        );
        let v = av.dot(bv);
        self.push(Op::MatMul(a, b), v)
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).mapv(|x| x * s);
        self.push(Op::Scale(a, s), v)
    }

    pub fn add_scalar(&mut self, a: NodeId, s: f64) -> NodeId {
        let v = self.value(a).mapv(|x| x + s);
        self.push(Op::AddScalar(a), v)
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(|x| x * x);
        self.push(Op::Square(a), v)
    }

    /// Sum of all entries, as a 1×1 node.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(Op::Sum(a), v)
    }

    /// Row sums: (n, m) → (n, 1).
    pub fn row_sum(&mut self, a: NodeId) -> NodeId {
        let v = self
            .value(a)
            .sum_axis(ndarray::Axis(1))
            .insert_axis(ndarray::Axis(1))
            .into_dimensionality()
            .unwrap();
        self.push(Op::RowSum(a), v)
    }

    /// Columns `c0..c1`.
    pub fn slice_cols(&mut self, a: NodeId, c0: usize, c1: usize) -> NodeId {
        let v = self.value(a).slice(ndarray::s![.., c0..c1]).to_owned();
        self.push(Op::SliceCols(a, c0, c1), v)
    }

    /// Rows `r0..r1`.
    pub fn slice_rows(&mut self, a: NodeId, r0: usize, r1: usize) -> NodeId {
        let v = self.value(a).slice(ndarray::s![r0..r1, ..]).to_owned();
        self.push(Op::SliceRows(a, r0, r1), v)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(f64::tanh);
        self.push(Op::Tanh(a), v)
    }

    /// sin(w·x).
    pub fn sin_w(&mut self, a: NodeId, w: f64) -> NodeId {
        let v = self.value(a).mapv(|x| (w * x).sin());
        self.push(Op::SinW(a, w), v)
    }

    /// cos(w·x).
    pub fn cos_w(&mut self, a: NodeId, w: f64) -> NodeId {
        let v = self.value(a).mapv(|x| (w * x).cos());
        self.push(Op::CosW(a, w), v)
    }

    pub fn erf(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(libm::erf);
        self.push(Op::Erf(a), v)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).mapv(f64::exp);
        self.push(Op::Exp(a), v)
    }

    /// Mean of all entries, as a 1×1 node.
    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// Mean of squared entries, the workhorse of residual losses.
    pub fn mean_sq(&mut self, a: NodeId) -> NodeId {
        let sq = self.square(a);
        self.mean(sq)
    }

    /// Adjoints of every node with respect to a 1×1 loss node. Nodes that
    /// do not influence the loss get `None`.
    pub fn backward(&self, loss: NodeId) -> Vec<Option<Array2<f64>>> {
        assert_eq!(
            self.value(loss).dim(),
            (1, 1),
            "backward() needs a scalar loss node"
        );
        let mut adj: Vec<Option<Array2<f64>>> = vec![None; self.ops.len()];
        adj[loss.0] = Some(Array2::from_elem((1, 1), 1.0));
        for i in (0..=loss.0).rev() {
            // Creation order is topological, so this adjoint is final here;
            // take it for the match, restore it after.
            let Some(g) = adj[i].take() else { continue };
            match self.ops[i] {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    self.accumulate(&mut adj, a, reduce_to(&g, self.value(a).dim()));
                    self.accumulate(&mut adj, b, reduce_to(&g, self.value(b).dim()));
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut adj, a, reduce_to(&g, self.value(a).dim()));
                    self.accumulate(&mut adj, b, reduce_to(&g.mapv(|x| -x), self.value(b).dim()));
                }
                Op::Mul(a, b) => {
                    let ga = binary(&g, self.value(b), "mul-adjoint", |x, y| x * y);
                    let gb = binary(&g, self.value(a), "mul-adjoint", |x, y| x * y);
                    self.accumulate(&mut adj, a, reduce_to(&ga, self.value(a).dim()));
                    self.accumulate(&mut adj, b, reduce_to(&gb, self.value(b).dim()));
                }
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(b).t());
                    let gb = self.value(a).t().dot(&g);
                    self.accumulate(&mut adj, a, ga);
                    self.accumulate(&mut adj, b, gb);
                }
                Op::Scale(a, s) => {
                    self.accumulate(&mut adj, a, g.mapv(|x| x * s));
                }
                Op::AddScalar(a) => {
                    self.accumulate(&mut adj, a, g.clone());
                }
                Op::Square(a) => {
                    let ga = binary(&g, self.value(a), "square-adjoint", |x, y| 2.0 * x * y);
                    self.accumulate(&mut adj, a, ga);
                }
                Op::Sum(a) => {
                    let s = g[(0, 0)];
                    self.accumulate(&mut adj, a, Array2::from_elem(self.value(a).dim(), s));
                }
                Op::RowSum(a) => {
                    let shape = self.value(a).dim();
                    let ga = g.broadcast(shape).unwrap().to_owned();
                    self.accumulate(&mut adj, a, ga);
                }
                Op::SliceCols(a, c0, c1) => {
                    let mut ga = Array2::zeros(self.value(a).dim());
                    ga.slice_mut(ndarray::s![.., c0..c1]).assign(&g);
                    self.accumulate(&mut adj, a, ga);
                }
                Op::SliceRows(a, r0, r1) => {
                    let mut ga = Array2::zeros(self.value(a).dim());
                    ga.slice_mut(ndarray::s![r0..r1, ..]).assign(&g);
                    self.accumulate(&mut adj, a, ga);
                }
                Op::Tanh(a) => {
                    let y = &self.values[i];
                    let ga = binary(&g, y, "tanh-adjoint", |x, t| x * (1.0 - t * t));
                    self.accumulate(&mut adj, a, ga);
                }
                Op::SinW(a, w) => {
                    let ga = binary(&g, self.value(a), "sin-adjoint", |x, z| {
                        x * w * (w * z).cos()
                    });
                    self.accumulate(&mut adj, a, ga);
                }
                Op::CosW(a, w) => {
                    let ga = binary(&g, self.value(a), "cos-adjoint", |x, z| {
                        -x * w * (w * z).sin()
                    });
                    self.accumulate(&mut adj, a, ga);
                }
                Op::Erf(a) => {
                    let c = 2.0 / std::f64::consts::PI.sqrt();
                    let ga = binary(&g, self.value(a), "erf-adjoint", |x, z| {
                        x * c * (-z * z).exp()
                    });
                    self.accumulate(&mut adj, a, ga);
                }
                Op::Exp(a) => {
                    let y = &self.values[i];
                    let ga = binary(&g, y, "exp-adjoint", |x, e| x * e);
                    self.accumulate(&mut adj, a, ga);
                }
            }
            adj[i] = Some(g);
        }
        adj
    }

    fn accumulate(&self, adj: &mut [Option<Array2<f64>>], id: NodeId, g: Array2<f64>) {
        match &mut adj[id.0] {
            Some(acc) => *acc += &g,
            slot => *slot = Some(g),
        }
    }
}

impl Default for Graph {
    fn default() -> Self {
        Graph::new()
    }
}
