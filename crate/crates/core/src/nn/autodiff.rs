//! A small reverse-mode autodiff tape over dense matrices.
//!
//! Nodes are appended in evaluation order, so the tape is already a
//! topological order and `backward` is a single reverse sweep. Only the
//! operations the denoiser and its loss need are provided.

use ndarray::{Array1, Array2, Axis, Zip};

use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// matrix + row vector broadcast over rows
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Silu(Var),
    /// scale row i by a constant factor
    ScaleRows(Var, Array1<f64>),
    Scale(Var, f64),
    MeanSquare(Var),
    MeanAbs(Var),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
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

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    /// Scalar value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[[0, 0]]
    }

    fn shape_err<T>(&self, what: &str, a: Var, b: Var) -> Result<T> {
        Err(Error::Shape(format!(
            "{what}: {:?} and {:?}",
            self.value(a).dim(),
            self.value(b).dim()
        )))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).ncols() != self.value(b).nrows() {
            return self.shape_err("matmul", a, b);
        }
        let v = self.value(a).dot(self.value(b));
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (ra, ca) = self.value(a).dim();
        let (rr, cr) = self.value(row).dim();
        if rr != 1 || cr != ca {
            return self.shape_err("add_row", a, row);
        }
        let _ = ra;
        let v = self.value(a) + self.value(row);
        Ok(self.push(v, Op::AddRow(a, row)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).dim() != self.value(b).dim() {
            return self.shape_err("add", a, b);
        }
        let v = self.value(a) + self.value(b);
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).dim() != self.value(b).dim() {
            return self.shape_err("sub", a, b);
        }
        let v = self.value(a) - self.value(b);
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn silu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(silu);
        self.push(v, Op::Silu(a))
    }

    pub fn scale_rows(&mut self, a: Var, factors: Array1<f64>) -> Result<Var> {
        if factors.len() != self.value(a).nrows() {
            return Err(Error::Shape(format!(
                "scale_rows: {} factors for {} rows",
                factors.len(),
                self.value(a).nrows()
            )));
        }
        let f2 = factors.view().insert_axis(Axis(1));
        let v = self.value(a) * &f2;
        Ok(self.push(v, Op::ScaleRows(a, factors)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.push(v, Op::Scale(a, k))
    }

    /// Mean of squared entries, as a 1×1 node.
    pub fn mean_square(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let m = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        self.push(Array2::from_elem((1, 1), m), Op::MeanSquare(a))
    }

    /// Mean of absolute entries, as a 1×1 node.
    pub fn mean_abs(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let m = x.iter().map(|v| v.abs()).sum::<f64>() / x.len() as f64;
        self.push(Array2::from_elem((1, 1), m), Op::MeanAbs(a))
    }

    /// Gradients of the scalar `output` with respect to every node.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if output.0 >= self.nodes.len() {
            return Err(Error::Tape(format!(
                "output node {} not recorded (tape has {} nodes)",
                output.0,
                self.nodes.len()
            )));
        }
        if self.value(output).dim() != (1, 1) {
            return Err(Error::Tape("backward needs a scalar (1x1) output".into()));
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Array2::ones((1, 1)));

        fn acc(grads: &mut [Option<Array2<f64>>], v: Var, g: Array2<f64>) {
            match &mut grads[v.0] {
                Some(existing) => *existing += &g,
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.dot(&self.value(*b).t());
                    let gb = self.value(*a).t().dot(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddRow(a, row) => {
                    let gr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut grads, *row, gr);
                    acc(&mut grads, *a, g.clone());
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, -&g);
                    acc(&mut grads, *a, g.clone());
                }
                Op::Silu(a) => {
                    let ga = Zip::from(&g)
                        .and(self.value(*a))
                        .map_collect(|&g, &x| g * silu_grad(x));
                    acc(&mut grads, *a, ga);
                }
                Op::ScaleRows(a, f) => {
                    let ga = &g * &f.view().insert_axis(Axis(1));
                    acc(&mut grads, *a, ga);
                }
                Op::Scale(a, k) => acc(&mut grads, *a, &g * *k),
                Op::MeanSquare(a) => {
                    let x = self.value(*a);
                    let k = 2.0 * g[[0, 0]] / x.len() as f64;
                    acc(&mut grads, *a, x * k);
                }
                Op::MeanAbs(a) => {
                    let x = self.value(*a);
                    let k = g[[0, 0]] / x.len() as f64;
                    // subgradient 0 at exactly zero
                    acc(&mut grads, *a, x.mapv(|v| k * if v == 0.0 { 0.0 } else { v.signum() }));
                }
            }
            if matches!(node.op, Op::Leaf) {
                grads[i] = Some(g);
            }
        }
        Ok(Gradients { grads })
    }
}

/// Result of a backward sweep; gradients of leaves are retained.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient for `v`, or zeros of `shape` if `v` did not influence the output.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Array2<f64> {
        self.grads
            .get(v.0)
            .and_then(|g| g.clone())
            .unwrap_or_else(|| Array2::zeros(shape))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn matmul_mean_square_gradient() {
        // f(W) = mean((X W)^2); df/dW = 2/n X^T X W
        let mut tape = Tape::new();
        let x = tape.leaf(array![[1.0, 2.0], [3.0, -1.0]]);
        let w = tape.leaf(array![[0.5], [-0.25]]);
        let y = tape.matmul(x, w).unwrap();
        let l = tape.mean_square(y);
        let g = tape.backward(l).unwrap();
        let xv = tape.value(x);
        let wv = tape.value(w);
        let expect = xv.t().dot(&xv.dot(wv)) * (2.0 / 2.0);
        assert_eq!(g.get_or_zeros(w, (2, 1)), expect);
    }

    #[test]
    fn silu_gradient_matches_difference() {
        let h = 1e-6;
        for x in [-3.0, -0.5, 0.0, 0.7, 4.0] {
            let fd = (silu(x + h) - silu(x - h)) / (2.0 * h);
            assert!((fd - silu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn backward_rejects_bad_output() {
        let mut tape = Tape::new();
        let a = tape.leaf(array![[1.0, 2.0]]);
        assert!(matches!(tape.backward(a), Err(Error::Tape(_))));
        assert!(matches!(tape.backward(Var(7)), Err(Error::Tape(_))));
    }

    #[test]
    fn shared_node_accumulates() {
        // f = mean((a + a)^2) = 4 mean(a^2); df/da = 8 a / n
        let mut tape = Tape::new();
        let a = tape.leaf(array![[1.0, -2.0]]);
        let s = tape.add(a, a).unwrap();
        let l = tape.mean_square(s);
        let g = tape.backward(l).unwrap().get_or_zeros(a, (1, 2));
        assert_eq!(g, array![[4.0, -8.0]]);
    }
}
