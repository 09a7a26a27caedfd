//! Reverse-mode differentiation over batched matrix operations.
//!
//! Every node holds a 2-D array (scalars are `1 x 1`). Nodes are appended in
//! evaluation order, so walking the tape backwards visits them in reverse
//! topological order. Gradients are summed where a value fans out.

use std::borrow::Cow;

use ndarray::{Array2, Zip};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<'a> {
    Leaf,
    MatMul(Var, Var),
    /// `a * c` with a constant right factor.
    MatMulConst(Var, &'a Array2<f64>),
    /// `a * c^T` with a constant right factor.
    MatMulConstT(Var, &'a Array2<f64>),
    Add(Var, Var),
    Sub(Var, Var),
    /// `s * a` with `s` a `1 x 1` node.
    ScaleBy(Var, Var),
    ScaleConst(Var, f64),
    /// Adds a `1 x c` row to every row.
    AddRow(Var, Var),
    Tanh(Var),
    /// `sign(a) max(|a| - t, 0)` with `t` a `1 x 1` node.
    Soft(Var, Var),
    Softplus(Var),
    Reshape(Var),
    SumSquares(Var),
}

struct Node<'a> {
    value: Cow<'a, Array2<f64>>,
    op: Op<'a>,
    needs_grad: bool,
}

pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

fn scalar(v: f64) -> Array2<f64> {
    Array2::from_elem((1, 1), v)
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn soft(a: f64, t: f64) -> f64 {
    a.signum() * (a.abs() - t).max(0.0)
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Array2<f64>>, op: Op<'a>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn owned(&mut self, value: Array2<f64>, op: Op<'a>, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.push(Cow::Owned(value), op, needs_grad)
    }

    /// Differentiable leaf borrowing its value.
    pub fn param(&mut self, value: &'a Array2<f64>) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, true)
    }

    /// Leaf that takes no gradient.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, false)
    }

    pub fn constant_ref(&mut self, value: &'a Array2<f64>) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.value(v)[(0, 0)]
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.owned(v, Op::MatMul(a, b), &[a, b])
    }

    pub fn matmul_const(&mut self, a: Var, c: &'a Array2<f64>) -> Var {
        let v = self.value(a).dot(c);
        self.owned(v, Op::MatMulConst(a, c), &[a])
    }

    pub fn matmul_const_t(&mut self, a: Var, c: &'a Array2<f64>) -> Var {
        let v = self.value(a).dot(&c.t());
        self.owned(v, Op::MatMulConstT(a, c), &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.owned(v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.owned(v, Op::Sub(a, b), &[a, b])
    }

    pub fn scale_by(&mut self, a: Var, s: Var) -> Var {
        let k = self.scalar_value(s);
        let v = self.value(a) * k;
        self.owned(v, Op::ScaleBy(a, s), &[a, s])
    }

    pub fn scale_const(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.owned(v, Op::ScaleConst(a, k), &[a])
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + self.value(row);
        self.owned(v, Op::AddRow(a, row), &[a, row])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.owned(v, Op::Tanh(a), &[a])
    }

    pub fn soft_threshold(&mut self, a: Var, t: Var) -> Var {
        let th = self.scalar_value(t);
        let v = self.value(a).mapv(|x| soft(x, th));
        self.owned(v, Op::Soft(a, t), &[a, t])
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(softplus);
        self.owned(v, Op::Softplus(a), &[a])
    }

    /// Row-major reshape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Var {
        let v = reshape(self.value(a), rows, cols);
        self.owned(v, Op::Reshape(a), &[a])
    }

    pub fn sum_squares(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().map(|x| x * x).sum();
        self.owned(scalar(s), Op::SumSquares(a), &[a])
    }

    /// Gradients of the scalar `output` with respect to the leaves.
    pub fn backward(&self, output: Var) -> Gradients {
        let n = output.0 + 1;
        let mut grads: Vec<Option<Array2<f64>>> = (0..n).map(|_| None).collect();
        grads[output.0] = Some(Array2::ones(self.value(output).raw_dim()));

        for idx in (0..n).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            match node.op {
                Op::Leaf => grads[idx] = Some(g),
                Op::MatMul(a, b) => {
                    if self.nodes[a.0].needs_grad {
                        accumulate(&mut grads, a, g.dot(&self.value(b).t()));
                    }
                    if self.nodes[b.0].needs_grad {
                        accumulate(&mut grads, b, self.value(a).t().dot(&g));
                    }
                }
                Op::MatMulConst(a, c) => accumulate(&mut grads, a, g.dot(&c.t())),
                Op::MatMulConstT(a, c) => accumulate(&mut grads, a, g.dot(c)),
                Op::Add(a, b) => {
                    self.accumulate_if(&mut grads, b, || g.clone());
                    self.accumulate_if(&mut grads, a, || g);
                }
                Op::Sub(a, b) => {
                    self.accumulate_if(&mut grads, b, || -&g);
                    self.accumulate_if(&mut grads, a, || g);
                }
                Op::ScaleBy(a, s) => {
                    let k = self.scalar_value(s);
                    self.accumulate_if(&mut grads, s, || {
                        scalar(Zip::from(&g).and(self.value(a)).fold(0.0, |acc, &x, &y| acc + x * y))
                    });
                    self.accumulate_if(&mut grads, a, || g * k);
                }
                Op::ScaleConst(a, k) => accumulate(&mut grads, a, g * k),
                Op::AddRow(a, row) => {
                    self.accumulate_if(&mut grads, row, || g.sum_axis(ndarray::Axis(0)).insert_axis(ndarray::Axis(0)));
                    self.accumulate_if(&mut grads, a, || g);
                }
                Op::Tanh(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(&*node.value)
                        .for_each(|gx, &y| *gx *= 1.0 - y * y);
                    accumulate(&mut grads, a, ga);
                }
                Op::Soft(a, t) => {
                    let th = self.scalar_value(t);
                    let x = self.value(a);
                    self.accumulate_if(&mut grads, t, || {
                        scalar(Zip::from(&g).and(x).fold(0.0, |acc, &gx, &xv| {
                            if xv.abs() > th {
                                acc - gx * xv.signum()
                            } else {
                                acc
                            }
                        }))
                    });
                    self.accumulate_if(&mut grads, a, || {
                        let mut ga = g;
                        Zip::from(&mut ga).and(x).for_each(|gx, &xv| {
                            if xv.abs() <= th {
                                *gx = 0.0;
                            }
                        });
                        ga
                    });
                }
                Op::Softplus(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga)
                        .and(self.value(a))
                        .for_each(|gx, &x| *gx *= sigmoid(x));
                    accumulate(&mut grads, a, ga);
                }
                Op::Reshape(a) => {
                    let (r, c) = self.value(a).dim();
                    accumulate(&mut grads, a, reshape(&g, r, c));
                }
                Op::SumSquares(a) => {
                    let k = 2.0 * g[(0, 0)];
                    accumulate(&mut grads, a, self.value(a) * k);
                }
            }
        }
        Gradients { grads }
    }

    fn accumulate_if(
        &self,
        grads: &mut [Option<Array2<f64>>],
        v: Var,
        g: impl FnOnce() -> Array2<f64>,
    ) {
        if self.nodes[v.0].needs_grad {
            accumulate(grads, v, g());
        }
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
    match &mut grads[v.0] {
        Some(existing) => *existing += &g,
        slot => *slot = Some(g),
    }
}

/// Row-major reshape of a 2-D array.
pub fn reshape(a: &Array2<f64>, rows: usize, cols: usize) -> Array2<f64> {
    let flat: Vec<f64> = if a.is_standard_layout() {
        a.as_slice().unwrap().to_vec()
    } else {
        a.iter().copied().collect()
    };
    Array2::from_shape_vec((rows, cols), flat).expect("reshape preserves the element count")
}

pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient of `v`; `None` when the output does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, zeros of `shape` if it has none.
    pub fn take_or_zeros(&mut self, v: Var, shape: (usize, usize)) -> Array2<f64> {
        self.grads
            .get_mut(v.0)
            .and_then(|g| g.take())
            .unwrap_or_else(|| Array2::zeros(shape))
    }
}
