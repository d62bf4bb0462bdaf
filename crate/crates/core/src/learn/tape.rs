//! Minimal reverse-mode autodiff over `ndarray::Array2<f64>`.
//!
//! A `Tape` records every intermediate value plus the op that produced
//! it; `backward` walks the recording in reverse, accumulating exact
//! gradients. Scalars are 1×1 arrays. The op set is exactly what the
//! policy, recurrent cells, attention, and losses need — nothing more.

use ndarray::{concatenate, Array2, Axis};
use std::collections::HashMap;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    /// Input or parameter; `param` links back to a `ParamStore` index.
    Leaf { param: Option<usize> },
    MatMul(Var, Var),
    /// a @ b^T without materializing the transpose.
    MatMulT(Var, Var),
    Add(Var, Var),
    /// (n×d) + (1×d), bias broadcast down the rows.
    AddRow(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Ln(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize, usize),
    SliceRows(Var, usize, usize),
    SumAll(Var),
    MeanRows(Var),
    Clamp(Var, f64, f64),
    Min(Var, Var),
}

struct Node {
    value: Array2<f64>,
    op: Op,
}

/// One recorded forward computation.
pub struct Tape {
    nodes: Vec<Node>,
    param_cache: HashMap<usize, Var>,
}

fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s: f64 = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

impl Tape {
    pub fn new() -> Tape {
        Tape { nodes: Vec::new(), param_cache: HashMap::new() }
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let a = self.value(v);
        debug_assert_eq!(a.len(), 1, "scalar read of a non-scalar node");
        a[[0, 0]]
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

    /// Constant input (no gradient flows out of it).
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf { param: None })
    }

    /// Trainable parameter leaf; repeated requests for the same id reuse
    /// the node so each parameter appears once per tape.
    pub fn param(&mut self, id: usize, value: &Array2<f64>) -> Var {
        if let Some(&v) = self.param_cache.get(&id) {
            return v;
        }
        let v = self.push(value.clone(), Op::Leaf { param: Some(id) });
        self.param_cache.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        debug_assert_eq!(self.value(bias).nrows(), 1);
        let v = self.value(a) + self.value(bias);
        self.push(v, Op::AddRow(a, bias))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        self.push(v, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(v, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::ln);
        self.push(v, Op::Ln(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let v = softmax_rows(self.value(a));
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            row.mapv_inplace(|v| v - lse);
        }
        self.push(out, Op::LogSoftmaxRows(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = concatenate(Axis(1), &views).expect("column concat shapes agree");
        self.push(v, Op::ConcatCols(parts.to_vec()))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = concatenate(Axis(0), &views).expect("row concat shapes agree");
        self.push(v, Op::ConcatRows(parts.to_vec()))
    }

    pub fn slice_cols(&mut self, a: Var, lo: usize, hi: usize) -> Var {
        let v = self.value(a).slice(ndarray::s![.., lo..hi]).to_owned();
        self.push(v, Op::SliceCols(a, lo, hi))
    }

    pub fn slice_rows(&mut self, a: Var, lo: usize, hi: usize) -> Var {
        let v = self.value(a).slice(ndarray::s![lo..hi, ..]).to_owned();
        self.push(v, Op::SliceRows(a, lo, hi))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let v = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(v, Op::SumAll(a))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let n = self.value(a).nrows() as f64;
        let v = (self.value(a).sum_axis(Axis(0)) / n).insert_axis(Axis(0));
        self.push(v, Op::MeanRows(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let v = self.value(a).mapv(|x| x.clamp(lo, hi));
        self.push(v, Op::Clamp(a, lo, hi))
    }

    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let v = ndarray::Zip::from(self.value(a))
            .and(self.value(b))
            .map_collect(|&x, &y| x.min(y));
        self.push(v, Op::Min(a, b))
    }

    /// Reverse pass from a scalar loss. Returns one gradient array per
    /// node; caller scatters the parameter-leaf entries into its store.
    pub fn backward(&self, loss: Var) -> Vec<Option<Array2<f64>>> {
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Array2::ones(self.value(loss).dim()));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            // Re-insert so callers can inspect intermediate grads too.
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf { .. } => {}
                Op::MatMul(a, b) => {
                    let da = g.dot(&self.value(*b).t());
                    let db = self.value(*a).t().dot(&g);
                    accumulate(&mut grads, a.0, da);
                    accumulate(&mut grads, b.0, db);
                }
                Op::MatMulT(a, b) => {
                    // c = a @ b^T: da = g @ b; db = g^T @ a.
                    let da = g.dot(self.value(*b));
                    let db = g.t().dot(self.value(*a));
                    accumulate(&mut grads, a.0, da);
                    accumulate(&mut grads, b.0, db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, a.0, g.clone());
                    accumulate(&mut grads, b.0, g.clone());
                }
                Op::AddRow(a, bias) => {
                    accumulate(&mut grads, a.0, g.clone());
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads, bias.0, gb);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, a.0, g.clone());
                    accumulate(&mut grads, b.0, -&g);
                }
                Op::Mul(a, b) => {
                    let da = &g * self.value(*b);
                    let db = &g * self.value(*a);
                    accumulate(&mut grads, a.0, da);
                    accumulate(&mut grads, b.0, db);
                }
                Op::Scale(a, c) => accumulate(&mut grads, a.0, &g * *c),
                Op::AddScalar(a) => accumulate(&mut grads, a.0, g.clone()),
                Op::Tanh(a) => {
                    let da = ndarray::Zip::from(&g)
                        .and(&node.value)
                        .map_collect(|&gi, &y| gi * (1.0 - y * y));
                    accumulate(&mut grads, a.0, da);
                }
                Op::Sigmoid(a) => {
                    let da = ndarray::Zip::from(&g)
                        .and(&node.value)
                        .map_collect(|&gi, &y| gi * y * (1.0 - y));
                    accumulate(&mut grads, a.0, da);
                }
                Op::Exp(a) => {
                    let da = &g * &node.value;
                    accumulate(&mut grads, a.0, da);
                }
                Op::Ln(a) => {
                    let da = &g / self.value(*a);
                    accumulate(&mut grads, a.0, da);
                }
                Op::SoftmaxRows(a) => {
                    // ds = s ⊙ (g − rowsum(g ⊙ s))
                    let s = &node.value;
                    let gs = (&g * s).sum_axis(Axis(1)).insert_axis(Axis(1));
                    let da = s * &(&g - &gs);
                    accumulate(&mut grads, a.0, da);
                }
                Op::LogSoftmaxRows(a) => {
                    // dz = g − softmax(z) ⊙ rowsum(g)
                    let s = node.value.mapv(f64::exp);
                    let gsum = g.sum_axis(Axis(1)).insert_axis(Axis(1));
                    let da = &g - &(&s * &gsum);
                    accumulate(&mut grads, a.0, da);
                }
                Op::ConcatCols(parts) => {
                    let mut lo = 0;
                    for p in parts {
                        let w = self.value(*p).ncols();
                        let gp = g.slice(ndarray::s![.., lo..lo + w]).to_owned();
                        accumulate(&mut grads, p.0, gp);
                        lo += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut lo = 0;
                    for p in parts {
                        let h = self.value(*p).nrows();
                        let gp = g.slice(ndarray::s![lo..lo + h, ..]).to_owned();
                        accumulate(&mut grads, p.0, gp);
                        lo += h;
                    }
                }
                Op::SliceCols(a, lo, _hi) => {
                    let mut da = Array2::zeros(self.value(*a).dim());
                    da.slice_mut(ndarray::s![.., *lo..*lo + g.ncols()]).assign(&g);
                    accumulate(&mut grads, a.0, da);
                }
                Op::SliceRows(a, lo, _hi) => {
                    let mut da = Array2::zeros(self.value(*a).dim());
                    da.slice_mut(ndarray::s![*lo..*lo + g.nrows(), ..]).assign(&g);
                    accumulate(&mut grads, a.0, da);
                }
                Op::SumAll(a) => {
                    let da = Array2::from_elem(self.value(*a).dim(), g[[0, 0]]);
                    accumulate(&mut grads, a.0, da);
                }
                Op::MeanRows(a) => {
                    let n = self.value(*a).nrows();
                    let da = Array2::from_shape_fn(self.value(*a).dim(), |(_, j)| {
                        g[[0, j]] / n as f64
                    });
                    accumulate(&mut grads, a.0, da);
                }
                Op::Clamp(a, lo, hi) => {
                    let x = self.value(*a);
                    let da = ndarray::Zip::from(&g)
                        .and(x)
                        .map_collect(|&gi, &xi| if xi > *lo && xi < *hi { gi } else { 0.0 });
                    accumulate(&mut grads, a.0, da);
                }
                Op::Min(a, b) => {
                    // Ties route the gradient to the first argument.
                    let xa = self.value(*a);
                    let xb = self.value(*b);
                    let da = ndarray::Zip::from(&g)
                        .and(xa)
                        .and(xb)
                        .map_collect(|&gi, &x, &y| if x <= y { gi } else { 0.0 });
                    let db = ndarray::Zip::from(&g)
                        .and(xa)
                        .and(xb)
                        .map_collect(|&gi, &x, &y| if x > y { gi } else { 0.0 });
                    accumulate(&mut grads, a.0, da);
                    accumulate(&mut grads, b.0, db);
                }
            }
            grads[idx] = Some(g);
        }
        grads
    }

    /// Scatter the backward result into per-parameter gradients, indexed
    /// by parameter id.
    pub fn param_grads(&self, grads: &[Option<Array2<f64>>]) -> Vec<(usize, Array2<f64>)> {
        let mut out = Vec::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Op::Leaf { param: Some(pid) } = node.op {
                if let Some(g) = &grads[idx] {
                    out.push((pid, g.clone()));
                }
            }
        }
        out
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], idx: usize, g: Array2<f64>) {
    match &mut grads[idx] {
        Some(existing) => *existing += &g,
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    /// Central finite differences against the analytic gradient for a
    /// scalar function of one leaf.
    fn check_grad<F>(build: F, x0: Array2<f64>, tol: f64)
    where
        F: Fn(&mut Tape, Var) -> Var,
    {
        let mut tape = Tape::new();
        let x = tape.param(0, &x0);
        let loss = build(&mut tape, x);
        assert_eq!(tape.value(loss).len(), 1, "loss must be scalar");
        let grads = tape.backward(loss);
        let analytic = tape.param_grads(&grads);
        let ga = &analytic.iter().find(|(p, _)| *p == 0).expect("leaf gradient").1;

        let h = 1e-5;
        for i in 0..x0.nrows() {
            for j in 0..x0.ncols() {
                let eval = |delta: f64| {
                    let mut xp = x0.clone();
                    xp[[i, j]] += delta;
                    let mut t = Tape::new();
                    let v = t.param(0, &xp);
                    let l = build(&mut t, v);
                    t.scalar(l)
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let denom = numeric.abs().max(ga[[i, j]].abs()).max(1e-8);
                assert!(
                    (numeric - ga[[i, j]]).abs() / denom < tol,
                    "({i},{j}): analytic {} vs numeric {}",
                    ga[[i, j]],
                    numeric
                );
            }
        }
    }

    #[test]
    fn elementwise_chain_gradients() {
        let x0 = array![[0.3, -1.2, 0.7], [2.0, -0.4, 0.1]];
        check_grad(
            |t, x| {
                let a = t.tanh(x);
                let b = t.sigmoid(a);
                let c = t.mul(b, a);
                let d = t.exp(c);
                let l = t.ln(d);
                let e = t.scale(l, 0.37);
                let f = t.add_scalar(e, -0.5);
                let g = t.exp(f);
                t.sum_all(g)
            },
            x0,
            1e-6,
        );
    }

    #[test]
    fn matmul_and_bias_gradients() {
        let x0 = array![[0.5, -0.3], [1.1, 0.2], [-0.7, 0.9]];
        check_grad(
            |t, x| {
                let w = t.constant(array![[0.2, -0.1, 0.5], [0.7, 0.3, -0.4]]);
                let b = t.constant(array![[0.1, -0.2, 0.05]]);
                let y = t.matmul(x, w);
                let y = t.add_row(y, b);
                let y = t.tanh(y);
                let z = t.matmul_t(y, y);
                t.sum_all(z)
            },
            x0,
            1e-6,
        );
    }

    #[test]
    fn softmax_and_logsoftmax_gradients() {
        let x0 = array![[0.5, -1.0, 2.0, 0.0], [1.5, 1.4, -0.3, 0.2]];
        check_grad(
            |t, x| {
                let s = t.softmax_rows(x);
                let l = t.log_softmax_rows(x);
                let p = t.mul(s, l); // -entropy per element
                t.sum_all(p)
            },
            x0,
            1e-6,
        );
    }

    #[test]
    fn structural_op_gradients() {
        let x0 = array![[0.5, -0.3, 0.8, 0.4], [1.1, 0.2, -0.6, 0.9]];
        check_grad(
            |t, x| {
                let left = t.slice_cols(x, 0, 2);
                let right = t.slice_cols(x, 2, 4);
                let top = t.slice_rows(x, 0, 1);
                let glued = t.concat_cols(&[left, right]);
                let rows = t.concat_rows(&[glued, x]);
                let m = t.mean_rows(rows);
                let mm = t.concat_cols(&[m, top]);
                let s = t.tanh(mm);
                t.sum_all(s)
            },
            x0,
            1e-6,
        );
    }

    #[test]
    fn clamp_and_min_gradients_away_from_kinks() {
        let x0 = array![[0.5, -0.3, 1.8, -2.0]];
        check_grad(
            |t, x| {
                let c = t.clamp(x, -1.0, 1.0);
                let other = t.constant(array![[0.2, 0.6, -0.5, 3.0]]);
                let m = t.min(c, other);
                let sq = t.mul(m, m);
                t.sum_all(sq)
            },
            x0,
            1e-6,
        );
    }

    #[test]
    fn shared_parameter_grads_accumulate() {
        // y = x·w + x·w reuses the same leaf twice; gradient must double.
        let x0 = array![[1.5]];
        let mut tape = Tape::new();
        let x = tape.param(0, &x0);
        let a = tape.scale(x, 2.0);
        let b = tape.scale(x, 3.0);
        let s = tape.add(a, b);
        let loss = tape.sum_all(s);
        let grads = tape.backward(loss);
        let pg = tape.param_grads(&grads);
        assert_eq!(pg.len(), 1);
        assert_eq!(pg[0].1[[0, 0]], 5.0);
        // Same id requested twice maps to one node.
        let mut tape = Tape::new();
        let p1 = tape.param(7, &x0);
        let p2 = tape.param(7, &x0);
        assert_eq!(p1, p2);
    }
}
