//! Vector-valued reverse-mode differentiation.
//!
//! A [`Tape`] records a forward pass as a Wengert list of vector nodes, then
//! [`Tape::backward`] sweeps the list in reverse, accumulating adjoints and
//! scattering parameter adjoints into a flat gradient buffer. Buffers are
//! kept across [`Tape::clear`] so a tape can be reused per sample without
//! reallocating.
//!
//! Inner products in [`Tape::matvec`] follow the supplied
//! [`ReductionPlan`]; the backward sweep is always binary64.

use crate::vhw::ReductionPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy)]
enum Op {
    Input,
    Param { offset: usize },
    MatVec { w: Var, x: Var, rows: usize, cols: usize },
    Add(Var, Var),
    Tanh(Var),
    Relu(Var),
    Sigmoid(Var),
}

#[derive(Debug, Clone, Copy)]
struct Node {
    op: Op,
    start: usize,
    len: usize,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
    values: Vec<f64>,
    adjoints: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
        self.values.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, len: usize) -> (Var, usize) {
        let start = self.values.len();
        self.values.resize(start + len, 0.0);
        self.nodes.push(Node { op, start, len });
        (Var(self.nodes.len() - 1), start)
    }

    fn node(&self, v: Var) -> Node {
        self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let n = self.node(v);
        &self.values[n.start..n.start + n.len]
    }

    pub fn input(&mut self, x: &[f64]) -> Var {
        let (v, start) = self.push(Op::Input, x.len());
        self.values[start..].copy_from_slice(x);
        v
    }

    /// Leaf holding `theta[offset..offset + len]`; its adjoint lands at the
    /// same offsets of the gradient buffer.
    pub fn param(&mut self, theta: &[f64], offset: usize, len: usize) -> Var {
        let (v, start) = self.push(Op::Param { offset }, len);
        self.values[start..].copy_from_slice(&theta[offset..offset + len]);
        v
    }

    /// `W x` with `W` a row-major `rows × cols` node.
    pub fn matvec(&mut self, w: Var, x: Var, rows: usize, cols: usize, plan: &ReductionPlan) -> Var {
        let (wn, xn) = (self.node(w), self.node(x));
        assert_eq!(wn.len, rows * cols, "matvec weight shape");
        assert_eq!(xn.len, cols, "matvec input shape");
        let (v, start) = self.push(Op::MatVec { w, x, rows, cols }, rows);
        let (before, out) = self.values.split_at_mut(start);
        let wv = &before[wn.start..wn.start + wn.len];
        let xv = &before[xn.start..xn.start + xn.len];
        for (r, o) in out.iter_mut().enumerate() {
            *o = plan.dot(&wv[r * cols..(r + 1) * cols], xv);
        }
        v
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (an, bn) = (self.node(a), self.node(b));
        assert_eq!(an.len, bn.len, "add shape");
        let (v, start) = self.push(Op::Add(a, b), an.len);
        let (before, out) = self.values.split_at_mut(start);
        for i in 0..an.len {
            out[i] = before[an.start + i] + before[bn.start + i];
        }
        v
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let an = self.node(a);
        let (v, start) = self.push(op, an.len);
        let (before, out) = self.values.split_at_mut(start);
        for i in 0..an.len {
            out[i] = f(before[an.start + i]);
        }
        v
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    /// ReLU with subgradient 0 at the kink.
    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    /// Seeds `output` with `seed` and accumulates `∂⟨seed, output⟩/∂θ` into `grad`.
    pub fn backward(&mut self, output: Var, seed: &[f64], grad: &mut [f64]) {
        let out = self.node(output);
        assert_eq!(seed.len(), out.len, "seed shape");
        self.adjoints.clear();
        self.adjoints.resize(self.values.len(), 0.0);
        self.adjoints[out.start..out.start + out.len].copy_from_slice(seed);

        for idx in (0..=output.0).rev() {
            let node = self.nodes[idx];
            let (adj_before, adj_rest) = self.adjoints.split_at_mut(node.start);
            let dy = &adj_rest[..node.len];
            if dy.iter().all(|&d| d == 0.0) {
                continue;
            }
            match node.op {
                Op::Input => {}
                Op::Param { offset } => {
                    for (g, d) in grad[offset..offset + node.len].iter_mut().zip(dy) {
                        *g += d;
                    }
                }
                Op::MatVec { w, x, rows, cols } => {
                    let (wn, xn) = (self.nodes[w.0], self.nodes[x.0]);
                    let wv = &self.values[wn.start..wn.start + wn.len];
                    let xv = &self.values[xn.start..xn.start + xn.len];
                    for r in 0..rows {
                        let d = dy[r];
                        if d == 0.0 {
                            continue;
                        }
                        let row = r * cols;
                        for c in 0..cols {
                            adj_before[wn.start + row + c] += d * xv[c];
                            adj_before[xn.start + c] += d * wv[row + c];
                        }
                    }
                }
                Op::Add(a, b) => {
                    let (an, bn) = (self.nodes[a.0], self.nodes[b.0]);
                    for i in 0..node.len {
                        adj_before[an.start + i] += dy[i];
                        adj_before[bn.start + i] += dy[i];
                    }
                }
                Op::Tanh(a) => {
                    let an = self.nodes[a.0];
                    let y = &self.values[node.start..node.start + node.len];
                    for i in 0..node.len {
                        adj_before[an.start + i] += dy[i] * (1.0 - y[i] * y[i]);
                    }
                }
                Op::Relu(a) => {
                    let an = self.nodes[a.0];
                    let x = &self.values[an.start..an.start + an.len];
                    for i in 0..node.len {
                        if x[i] > 0.0 {
                            adj_before[an.start + i] += dy[i];
                        }
                    }
                }
                Op::Sigmoid(a) => {
                    let an = self.nodes[a.0];
                    let y = &self.values[node.start..node.start + node.len];
                    for i in 0..node.len {
                        adj_before[an.start + i] += dy[i] * y[i] * (1.0 - y[i]);
                    }
                }
            }
        }
    }
}

/// Logistic function evaluated without overflow for large |x|.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vhw::VirtualHardwareProfile;

    #[test]
    fn affine_tanh_gradient_by_hand() {
        // y = tanh(w·x + b), x = (1, 2), w = (0.5, -0.25), b = 0.1
        let theta = [0.5, -0.25, 0.1];
        let x = [1.0, 2.0];
        let reference = VirtualHardwareProfile::reference();
        let plan = reference.plan(2);
        let mut tape = Tape::new();
        let xi = tape.input(&x);
        let w = tape.param(&theta, 0, 2);
        let b = tape.param(&theta, 2, 1);
        let z = tape.matvec(w, xi, 1, 2, &plan);
        let z = tape.add(z, b);
        let y = tape.tanh(z);
        let pre = 0.5 - 0.5 + 0.1;
        assert!((tape.value(y)[0] - f64::tanh(pre)).abs() < 1e-15);
        let mut g = [0.0; 3];
        tape.backward(y, &[1.0], &mut g);
        let dt = 1.0 - f64::tanh(pre).powi(2);
        assert!((g[0] - dt * 1.0).abs() < 1e-15);
        assert!((g[1] - dt * 2.0).abs() < 1e-15);
        assert!((g[2] - dt).abs() < 1e-15);
    }

    #[test]
    fn relu_kink_has_zero_subgradient() {
        let theta = [0.0];
        let mut tape = Tape::new();
        let p = tape.param(&theta, 0, 1);
        let y = tape.relu(p);
        let mut g = [0.0];
        tape.backward(y, &[1.0], &mut g);
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
        assert!((sigmoid(3.0) + sigmoid(-3.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cleared_tape_reuses_buffers() {
        let reference = VirtualHardwareProfile::reference();
        let plan = reference.plan(1);
        let mut tape = Tape::new();
        for k in 0..3 {
            tape.clear();
            let theta = [k as f64];
            let x = tape.input(&[2.0]);
            let w = tape.param(&theta, 0, 1);
            let z = tape.matvec(w, x, 1, 1, &plan);
            let mut g = [0.0];
            tape.backward(z, &[1.0], &mut g);
            assert_eq!(tape.len(), 3);
            assert_eq!(g[0], 2.0);
        }
    }
}
