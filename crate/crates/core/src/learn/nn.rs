//! Parameter storage, layer primitives, and the optimizer.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

use super::tape::{Tape, Var};

/// Named, ordered bag of trainable matrices. Ids are assigned in
/// registration order, which fixes both checkpoint layout and the
/// optimizer update order.
#[derive(Clone)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
    grads: Vec<Array2<f64>>,
    by_name: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: &str, value: Array2<f64>) -> usize {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name {name:?}"
        );
        let id = self.values.len();
        self.names.push(name.to_string());
        self.grads.push(Array2::zeros(value.dim()));
        self.values.push(value);
        self.by_name.insert(name.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_scalars(&self) -> usize {
        self.values.iter().map(Array2::len).sum()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.by_name.get(name).copied()
    }

    pub fn value(&self, id: usize) -> &Array2<f64> {
        &self.values[id]
    }

    pub fn value_mut(&mut self, id: usize) -> &mut Array2<f64> {
        &mut self.values[id]
    }

    pub fn grad(&self, id: usize) -> &Array2<f64> {
        &self.grads[id]
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn accumulate_grad(&mut self, id: usize, g: &Array2<f64>) {
        self.grads[id] += g;
    }

    /// Pull every parameter gradient out of a finished backward pass.
    pub fn absorb(&mut self, tape: &Tape, grads: &[Option<Array2<f64>>]) {
        for (pid, g) in tape.param_grads(grads) {
            self.accumulate_grad(pid, &g);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads
            .iter()
            .map(|g| g.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Scales gradients so the global norm is at most `max_norm`;
    /// returns the pre-clip norm.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm.is_finite() {
            let s = max_norm / norm;
            for g in &mut self.grads {
                g.mapv_inplace(|x| x * s);
            }
        }
        norm
    }

    pub fn grads_finite(&self) -> bool {
        self.grads.iter().all(|g| g.iter().all(|x| x.is_finite()))
    }

    pub fn values_finite(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Flat export in registration order: (name, rows, cols, data).
    pub fn export(&self) -> Vec<(String, usize, usize, Vec<f64>)> {
        self.names
            .iter()
            .zip(&self.values)
            .map(|(n, v)| (n.clone(), v.nrows(), v.ncols(), v.iter().cloned().collect()))
            .collect()
    }

    /// Overwrite values from an export. Every stored name must be
    /// present with a matching shape.
    pub fn import(&mut self, entries: &[(String, usize, usize, Vec<f64>)]) -> Result<(), String> {
        let by_name: HashMap<&str, &(String, usize, usize, Vec<f64>)> =
            entries.iter().map(|e| (e.0.as_str(), e)).collect();
        for (id, name) in self.names.iter().enumerate() {
            let Some((_, rows, cols, data)) = by_name.get(name.as_str()) else {
                return Err(format!("checkpoint is missing parameter {name:?}"));
            };
            let want = self.values[id].dim();
            if (*rows, *cols) != want || data.len() != rows * cols {
                return Err(format!(
                    "parameter {name:?} has shape {rows}x{cols}, expected {}x{}",
                    want.0, want.1
                ));
            }
            self.values[id] = Array2::from_shape_vec((*rows, *cols), data.clone())
                .map_err(|e| format!("parameter {name:?}: {e}"))?;
        }
        Ok(())
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        ParamStore::new()
    }
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-limit..limit))
}

/// Dense layer: y = x @ W + b.
pub struct Linear {
    pub w: usize,
    pub b: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        din: usize,
        dout: usize,
    ) -> Linear {
        let w = store.add(&format!("{name}.w"), xavier(rng, din, dout));
        let b = store.add(&format!("{name}.b"), Array2::zeros((1, dout)));
        Linear { w, b }
    }

    pub fn apply(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let w = tape.param(self.w, store.value(self.w));
        let b = tape.param(self.b, store.value(self.b));
        let y = tape.matmul(x, w);
        tape.add_row(y, b)
    }
}

/// Gated recurrent cell; rows of the input batch advance independently.
pub struct GruCell {
    wz: usize,
    uz: usize,
    bz: usize,
    wr: usize,
    ur: usize,
    br: usize,
    wn: usize,
    un: usize,
    bn: usize,
    pub d_hidden: usize,
}

impl GruCell {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        din: usize,
        dh: usize,
    ) -> GruCell {
        let mat = |store: &mut ParamStore, rng: &mut ChaCha8Rng, part: &str, r, c| {
            store.add(&format!("{name}.{part}"), xavier(rng, r, c))
        };
        let wz = mat(store, rng, "wz", din, dh);
        let uz = mat(store, rng, "uz", dh, dh);
        let bz = store.add(&format!("{name}.bz"), Array2::zeros((1, dh)));
        let wr = mat(store, rng, "wr", din, dh);
        let ur = mat(store, rng, "ur", dh, dh);
        let br = store.add(&format!("{name}.br"), Array2::zeros((1, dh)));
        let wn = mat(store, rng, "wn", din, dh);
        let un = mat(store, rng, "un", dh, dh);
        let bn = store.add(&format!("{name}.bn"), Array2::zeros((1, dh)));
        GruCell { wz, uz, bz, wr, ur, br, wn, un, bn, d_hidden: dh }
    }

    pub fn apply(&self, tape: &mut Tape, store: &ParamStore, x: Var, h: Var) -> Var {
        let gate = |tape: &mut Tape, w, u, b, x, h| {
            let w = tape.param(w, store.value(w));
            let u = tape.param(u, store.value(u));
            let b = tape.param(b, store.value(b));
            let xa = tape.matmul(x, w);
            let hb = tape.matmul(h, u);
            let s = tape.add(xa, hb);
            tape.add_row(s, b)
        };
        let z = gate(tape, self.wz, self.uz, self.bz, x, h);
        let z = tape.sigmoid(z);
        let r = gate(tape, self.wr, self.ur, self.br, x, h);
        let r = tape.sigmoid(r);
        let rh = tape.mul(r, h);
        let n = gate(tape, self.wn, self.un, self.bn, x, rh);
        let n = tape.tanh(n);
        // h' = (1 - z) ⊙ n + z ⊙ h
        let neg_z = tape.scale(z, -1.0);
        let one_minus_z = tape.add_scalar(neg_z, 1.0);
        let a = tape.mul(one_minus_z, n);
        let b = tape.mul(z, h);
        tape.add(a, b)
    }

    pub fn zero_state(&self, tape: &mut Tape, rows: usize) -> Var {
        tape.constant(Array2::zeros((rows, self.d_hidden)))
    }
}

/// Parameter-free self-attention where queries, keys, and values are all
/// the input rows: softmax(h hᵀ / √d) h.
pub fn self_attention(tape: &mut Tape, h: Var) -> Var {
    let d = tape.value(h).ncols() as f64;
    let scores = tape.matmul_t(h, h);
    let scaled = tape.scale(scores, 1.0 / d.sqrt());
    let weights = tape.softmax_rows(scaled);
    tape.matmul(weights, h)
}

/// Adam with bias correction; state lives outside the store so resetting
/// gradients never touches the moments.
pub struct Adam {
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
    t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Adam {
        Adam {
            m: (0..store.len()).map(|i| Array2::zeros(store.value(i).dim())).collect(),
            v: (0..store.len()).map(|i| Array2::zeros(store.value(i).dim())).collect(),
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, store: &mut ParamStore) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for id in 0..store.len() {
            let g = store.grad(id).clone();
            let m = &mut self.m[id];
            let v = &mut self.v[id];
            m.zip_mut_with(&g, |mi, &gi| *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi);
            v.zip_mut_with(&g, |vi, &gi| *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi);
            let val = store.value_mut(id);
            ndarray::Zip::from(val).and(&*m).and(&*v).for_each(|p, &mi, &vi| {
                *p -= self.lr * (mi / c1) / ((vi / c2).sqrt() + self.eps);
            });
        }
    }
}
