//! Differentiable tensor operations recorded on the tape.
//!
//! Every op validates shapes, checks the forward result for non-finite
//! values, and registers a backward rule when any input requires gradients.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::numerics::tape::{Node, Var};
use crate::numerics::tensor::Tensor;

impl Var {
    fn record(
        &self,
        value: Tensor,
        requires_grad: bool,
        backward: Option<super::tape::BackwardFn>,
    ) -> Var {
        self.tape.push(Node {
            value,
            grad: None,
            requires_grad,
            backward: if requires_grad { backward } else { None },
        })
    }

    /// Elementwise sum of two identically shaped tensors.
    pub fn add(&self, rhs: &Var) -> Result<Var> {
        self.check_same_tape(rhs, "add")?;
        let a = self.value();
        let b = rhs.value();
        if a.shape() != b.shape() {
            return Err(CoreError::ShapeMismatch {
                op: "add",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let mut out = a.clone();
        out.add_assign(&b);
        out.ensure_finite("add")?;
        let (li, ri) = (self.index, rhs.index);
        let requires = self.requires_grad() || rhs.requires_grad();
        Ok(self.record(
            out,
            requires,
            Some(Box::new(move |g, sink| {
                sink(li, g.clone());
                sink(ri, g.clone());
            })),
        ))
    }

    /// Adds a rank-1 row vector onto the trailing axis of `self`.
    pub fn add_row(&self, row: &Var) -> Result<Var> {
        self.check_same_tape(row, "add_row")?;
        let a = self.value();
        let r = row.value();
        let d = *a.shape().last().unwrap_or(&0);
        if r.rank() != 1 || r.shape()[0] != d || d == 0 {
            return Err(CoreError::ShapeMismatch {
                op: "add_row",
                lhs: a.shape().to_vec(),
                rhs: r.shape().to_vec(),
            });
        }
        let mut out = a.clone();
        for chunk in out.data_mut().chunks_mut(d) {
            for (o, b) in chunk.iter_mut().zip(r.data().iter()) {
                *o += b;
            }
        }
        out.ensure_finite("add_row")?;
        let (li, ri) = (self.index, row.index);
        let requires = self.requires_grad() || row.requires_grad();
        Ok(self.record(
            out,
            requires,
            Some(Box::new(move |g, sink| {
                sink(li, g.clone());
                let d = *g.shape().last().unwrap();
                let mut rg = vec![0.0; d];
                for chunk in g.data().chunks(d) {
                    for (acc, v) in rg.iter_mut().zip(chunk.iter()) {
                        *acc += v;
                    }
                }
                sink(ri, Tensor::from_vec(vec![d], rg).expect("finite grad"));
            })),
        ))
    }

    /// Elementwise (Hadamard) product of identically shaped tensors.
    pub fn mul(&self, rhs: &Var) -> Result<Var> {
        self.check_same_tape(rhs, "mul")?;
        let a = self.value();
        let b = rhs.value();
        if a.shape() != b.shape() {
            return Err(CoreError::ShapeMismatch {
                op: "mul",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let data = a
            .data()
            .iter()
            .zip(b.data().iter())
            .map(|(x, y)| x * y)
            .collect();
        let out = Tensor::from_vec(a.shape().to_vec(), data)
            .map_err(|_| CoreError::NonFinite { op: "mul" })?;
        let (li, ri) = (self.index, rhs.index);
        let requires = self.requires_grad() || rhs.requires_grad();
        let (av, bv) = (a, b);
        Ok(self.record(
            out,
            requires,
            Some(Box::new(move |g, sink| {
                let la = Tensor::from_vec(
                    g.shape().to_vec(),
                    g.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect(),
                )
                .expect("finite grad");
                let lb = Tensor::from_vec(
                    g.shape().to_vec(),
                    g.data().iter().zip(av.data()).map(|(x, y)| x * y).collect(),
                )
                .expect("finite grad");
                sink(li, la);
                sink(ri, lb);
            })),
        ))
    }

    /// Multiplies every element by a finite constant.
    pub fn scale(&self, c: f64) -> Result<Var> {
        if !c.is_finite() {
            return Err(CoreError::NonFinite { op: "scale" });
        }
        let mut out = self.value();
        out.scale_in_place(c);
        out.ensure_finite("scale")?;
        let li = self.index;
        Ok(self.record(
            out,
            self.requires_grad(),
            Some(Box::new(move |g, sink| {
                let mut gg = g.clone();
                gg.scale_in_place(c);
                sink(li, gg);
            })),
        ))
    }

    /// Batched matrix product over the trailing two axes; batch extents must
    /// match or one operand must be rank-2.
    pub fn matmul(&self, rhs: &Var) -> Result<Var> {
        self.check_same_tape(rhs, "matmul")?;
        let a = self.value();
        let b = rhs.value();
        let out = a.matmul_plain(&b)?;
        out.ensure_finite("matmul")?;
        let (li, ri) = (self.index, rhs.index);
        let requires = self.requires_grad() || rhs.requires_grad();
        Ok(self.record(
            out,
            requires,
            Some(Box::new(move |g, sink| {
                let bt = b.transpose_last().expect("rank checked");
                let da = g
                    .matmul_plain(&bt)
                    .and_then(|t| t.reduce_to_shape(a.shape()))
                    .expect("shapes checked in forward");
                let at = a.transpose_last().expect("rank checked");
                let db = at
                    .matmul_plain(g)
                    .and_then(|t| t.reduce_to_shape(b.shape()))
                    .expect("shapes checked in forward");
                sink(li, da);
                sink(ri, db);
            })),
        ))
    }

    /// Swaps the trailing two axes.
    pub fn transpose_last(&self) -> Result<Var> {
        let out = self.value().transpose_last()?;
        let li = self.index;
        Ok(self.record(
            out,
            self.requires_grad(),
            Some(Box::new(move |g, sink| {
                sink(li, g.transpose_last().expect("rank checked"));
            })),
        ))
    }

    /// Reinterprets the value under a new shape with the same element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Var> {
        let v = self.value();
        let numel: usize = shape.iter().product();
        if numel != v.numel() {
            return Err(CoreError::ShapeMismatch {
                op: "reshape",
                lhs: v.shape().to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let old_shape = v.shape().to_vec();
        let out = Tensor::from_vec(shape.to_vec(), v.into_data())?;
        let li = self.index;
        Ok(self.record(
            out,
            self.requires_grad(),
            Some(Box::new(move |g, sink| {
                let back = Tensor::from_vec(old_shape.clone(), g.data().to_vec())
                    .expect("same element count");
                sink(li, back);
            })),
        ))
    }

    /// [T, h*d_k] -> [h, T, d_k] head split.
    pub fn split_heads(&self, heads: usize) -> Result<Var> {
        let v = self.value();
        if v.rank() != 2 || heads == 0 || !v.shape()[1].is_multiple_of(heads) {
            return Err(CoreError::ShapeMismatch {
                op: "split_heads",
                lhs: v.shape().to_vec(),
                rhs: vec![heads],
            });
        }
        let (t, d) = (v.shape()[0], v.shape()[1]);
        let dk = d / heads;
        let mut data = vec![0.0; t * d];
        for h in 0..heads {
            for i in 0..t {
                for j in 0..dk {
                    data[(h * t + i) * dk + j] = v.data()[i * d + h * dk + j];
                }
            }
        }
        let out = Tensor::from_vec(vec![heads, t, dk], data)?;
        let li = self.index;
        Ok(self.record(
            out,
            self.requires_grad(),
            Some(Box::new(move |g, sink| {
                let mut back = vec![0.0; t * d];
                for h in 0..heads {
                    for i in 0..t {
                        for j in 0..dk {
                            back[i * d + h * dk + j] = g.data()[(h * t + i) * dk + j];
                        }
                    }
                }
                sink(li, Tensor::from_vec(vec![t, d], back).expect("finite grad"));
            })),
        ))
    }

    /// [h, T, d_k] -> [T, h*d_k] head merge (inverse of `split_heads`).
    pub fn merge_heads(&self) -> Result<Var> {
        let v = self.value();
        if v.rank() != 3 {
            return Err(CoreError::ShapeMismatch {
                op: "merge_heads",
                lhs: v.shape().to_vec(),
                rhs: vec![],
            });
        }
        let (heads, t, dk) = (v.shape()[0], v.shape()[1], v.shape()[2]);
        let d = heads * dk;
        let mut data = vec![0.0; t * d];
        for h in 0..heads {
            for i in 0..t {
                for j in 0..dk {
                    data[i * d + h * dk + j] = v.data()[(h * t + i) * dk + j];
                }
            }
        }
        let out = Tensor::from_vec(vec![t, d], data)?;
        let li = self.index;
        Ok(self.record(
            out,
            self.requires_grad(),
            Some(Box::new(move |g, sink| {
                let mut back = vec![0.0; t * d];
                for h in 0..heads {
                    for i in 0..t {
                        for j in 0..dk {
                            back[(h * t + i) * dk + j] = g.data()[i * d + h * dk + j];
                        }
                    }
                }
                sink(
                    li,
                    Tensor::from_vec(vec![heads, t, dk], back).expect("finite grad"),
                );
            })),
        ))
    }

    /// Broadcasts a [T, T] matrix to [h, T, T] across attention heads.
    pub fn stack_heads(&self, heads: usize) -> Result<Var> {
        let v = self.value();
        if v.rank() != 2 || heads == 0 {
            return Err(CoreError::ShapeMismatch {
                op: "stack_heads",
                lhs: v.shape().to_vec(),
                rhs: vec![heads],
            });
        }
        let (rows, cols) = (v.shape()[0], v.shape()[1]);
        let mut data = Vec::with_capacity(heads * rows * cols);
        for _ in 0..heads {
            data.extend_from_slice(v.data());
        }
        let out = Tensor::from_vec(vec![heads, rows, cols], data)?;
        let li = self.index;
        Ok(self.record(
            out,
            self.requires_grad(),
            Some(Box::new(move |g, sink| {
                let mut back = vec![0.0; rows * cols];
                for h in 0..heads {
                    let src = &g.data()[h * rows * cols..(h + 1) * rows * cols];
                    for (acc, s) in back.iter_mut().zip(src.iter()) {
                        *acc += s;
                    }
                }
                sink(
                    li,
                    Tensor::from_vec(vec![rows, cols], back).expect("finite grad"),
                );
            })),
        ))
    }

    /// Numerically stable softmax over the trailing axis.
    pub fn softmax_rows(&self) -> Result<Var> {
        let v = self.value();
        let n = *v.shape().last().ok_or_else(|| {
            CoreError::structure("softmax_rows on a rank-0 tensor")
        })?;
        if n == 0 {
            return Err(CoreError::structure("softmax_rows over an empty axis"));
        }
        let mut data = v.data().to_vec();
        for row in data.chunks_mut(n) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                sum += *x;
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
        }
        let out = Tensor::from_vec(v.shape().to_vec(), data)?;
        out.ensure_finite("softmax_rows")?;
        let y = out.clone();
        let li = self.index;
        Ok(self.record(
            out,
            self.requires_grad(),
            Some(Box::new(move |g, sink| {
                let mut back = vec![0.0; y.numel()];
                for (row_idx, (grow, yrow)) in
                    g.data().chunks(n).zip(y.data().chunks(n)).enumerate()
                {
                    let dot: f64 = grow.iter().zip(yrow.iter()).map(|(a, b)| a * b).sum();
                    let dst = &mut back[row_idx * n..(row_idx + 1) * n];
                    for ((d, &gv), &yv) in dst.iter_mut().zip(grow).zip(yrow) {
                        *d = yv * (gv - dot);
                    }
                }
                sink(
                    li,
                    Tensor::from_vec(y.shape().to_vec(), back).expect("finite grad"),
                );
            })),
        ))
    }

    /// Per-row normalization over the trailing axis followed by an affine map.
    pub fn layer_norm(&self, gain: &Var, bias: &Var, eps: f64) -> Result<Var> {
        self.check_same_tape(gain, "layer_norm")?;
        self.check_same_tape(bias, "layer_norm")?;
        if eps <= 0.0 {
            return Err(CoreError::config("layer_norm eps must be positive"));
        }
        let x = self.value();
        let g = gain.value();
        let b = bias.value();
        let d = *x.shape().last().unwrap_or(&0);
        if d < 2 {
            return Err(CoreError::config(format!(
                "layer_norm needs trailing extent >= 2, got shape {:?}",
                x.shape()
            )));
        }
        if g.shape() != [d] || b.shape() != [d] {
            return Err(CoreError::ShapeMismatch {
                op: "layer_norm",
                lhs: x.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        let rows = x.numel() / d;
        let mut normed = vec![0.0; x.numel()];
        let mut inv_sigma = vec![0.0; rows];
        let mut out = vec![0.0; x.numel()];
        for r in 0..rows {
            let src = &x.data()[r * d..(r + 1) * d];
            let mean = src.iter().sum::<f64>() / d as f64;
            let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_sigma[r] = inv;
            for j in 0..d {
                let xn = (src[j] - mean) * inv;
                normed[r * d + j] = xn;
                out[r * d + j] = g.data()[j] * xn + b.data()[j];
            }
        }
        let out = Tensor::from_vec(x.shape().to_vec(), out)?;
        out.ensure_finite("layer_norm")?;
        let (xi, gi, bi) = (self.index, gain.index, bias.index);
        let requires = self.requires_grad() || gain.requires_grad() || bias.requires_grad();
        let gain_v = g;
        let shape = x.shape().to_vec();
        Ok(self.record(
            out,
            requires,
            Some(Box::new(move |grad, sink| {
                let mut dx = vec![0.0; grad.numel()];
                let mut dgain = vec![0.0; d];
                let mut dbias = vec![0.0; d];
                for r in 0..rows {
                    let go = &grad.data()[r * d..(r + 1) * d];
                    let xn = &normed[r * d..(r + 1) * d];
                    let mut dxn = vec![0.0; d];
                    for j in 0..d {
                        dgain[j] += go[j] * xn[j];
                        dbias[j] += go[j];
                        dxn[j] = go[j] * gain_v.data()[j];
                    }
                    let mean_dxn = dxn.iter().sum::<f64>() / d as f64;
                    let mean_dxn_xn =
                        dxn.iter().zip(xn.iter()).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                    for j in 0..d {
                        dx[r * d + j] =
                            inv_sigma[r] * (dxn[j] - mean_dxn - xn[j] * mean_dxn_xn);
                    }
                }
                sink(xi, Tensor::from_vec(shape.clone(), dx).expect("finite grad"));
                sink(gi, Tensor::from_vec(vec![d], dgain).expect("finite grad"));
                sink(bi, Tensor::from_vec(vec![d], dbias).expect("finite grad"));
            })),
        ))
    }

    /// `x` for `x >= 0`, `slope * x` otherwise; backward uses the same gate.
    pub fn leaky_relu(&self, slope: f64) -> Result<Var> {
        if !(0.0 < slope && slope < 1.0) {
            return Err(CoreError::config(format!(
                "leaky_relu slope must lie in (0, 1), got {slope}"
            )));
        }
        self.gated_linear("leaky_relu", slope)
    }

    /// `max(x, 0)` elementwise.
    pub fn relu(&self) -> Result<Var> {
        self.gated_linear("relu", 0.0)
    }

    fn gated_linear(&self, op: &'static str, slope: f64) -> Result<Var> {
        let x = self.value();
        let data = x
            .data()
            .iter()
            .map(|&v| if v >= 0.0 { v } else { slope * v })
            .collect();
        let out = Tensor::from_vec(x.shape().to_vec(), data)?;
        out.ensure_finite(op)?;
        let li = self.index;
        Ok(self.record(
            out,
            self.requires_grad(),
            Some(Box::new(move |g, sink| {
                let data = g
                    .data()
                    .iter()
                    .zip(x.data().iter())
                    .map(|(&gv, &xv)| if xv >= 0.0 { gv } else { slope * gv })
                    .collect();
                sink(
                    li,
                    Tensor::from_vec(g.shape().to_vec(), data).expect("finite grad"),
                );
            })),
        ))
    }

    /// Inverted dropout with an explicit seeded mask; `p == 0` is a no-op.
    pub fn dropout(&self, p: f64, rng: &mut ChaCha8Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(CoreError::config(format!(
                "dropout rate must lie in [0, 1), got {p}"
            )));
        }
        if p == 0.0 {
            return Ok(self.clone());
        }
        let x = self.value();
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..x.numel())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let data = x
            .data()
            .iter()
            .zip(mask.iter())
            .map(|(a, m)| a * m)
            .collect();
        let out = Tensor::from_vec(x.shape().to_vec(), data)?;
        let li = self.index;
        Ok(self.record(
            out,
            self.requires_grad(),
            Some(Box::new(move |g, sink| {
                let data = g
                    .data()
                    .iter()
                    .zip(mask.iter())
                    .map(|(a, m)| a * m)
                    .collect();
                sink(
                    li,
                    Tensor::from_vec(g.shape().to_vec(), data).expect("finite grad"),
                );
            })),
        ))
    }

    /// Mean negative log-softmax over non-pad positions of [T, V] logits.
    pub fn cross_entropy(&self, targets: &[usize], pad_id: usize) -> Result<Var> {
        let logits = self.value();
        if logits.rank() != 2 {
            return Err(CoreError::structure(format!(
                "cross_entropy expects [T, V] logits, got shape {:?}",
                logits.shape()
            )));
        }
        let (t, v) = (logits.shape()[0], logits.shape()[1]);
        if targets.len() != t {
            return Err(CoreError::ShapeMismatch {
                op: "cross_entropy",
                lhs: logits.shape().to_vec(),
                rhs: vec![targets.len()],
            });
        }
        let supervised: Vec<usize> = (0..t).filter(|&i| targets[i] != pad_id).collect();
        if supervised.is_empty() {
            return Err(CoreError::domain("no supervised positions"));
        }
        for &i in &supervised {
            if targets[i] >= v {
                return Err(CoreError::Index(format!(
                    "target id {} at position {} out of vocabulary range {}",
                    targets[i], i, v
                )));
            }
        }
        let count = supervised.len() as f64;
        let mut total = 0.0;
        let mut probs = vec![0.0; t * v];
        for &i in &supervised {
            let row = &logits.data()[i * v..(i + 1) * v];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            let dst = &mut probs[i * v..(i + 1) * v];
            for (p, &x) in dst.iter_mut().zip(row.iter()) {
                *p = (x - max).exp();
                sum += *p;
            }
            for p in dst.iter_mut() {
                *p /= sum;
            }
            total += sum.ln() + max - row[targets[i]];
        }
        let out = Tensor::scalar(total / count);
        out.ensure_finite("cross_entropy")?;
        let li = self.index;
        let targets = targets.to_vec();
        Ok(self.record(
            out,
            self.requires_grad(),
            Some(Box::new(move |g, sink| {
                let scale = g.data()[0] / count;
                let mut back = vec![0.0; t * v];
                for &i in &supervised {
                    let prow = &probs[i * v..(i + 1) * v];
                    let dst = &mut back[i * v..(i + 1) * v];
                    for (d, &p) in dst.iter_mut().zip(prow.iter()) {
                        *d = p * scale;
                    }
                    dst[targets[i]] -= scale;
                }
                sink(li, Tensor::from_vec(vec![t, v], back).expect("finite grad"));
            })),
        ))
    }

    /// Sum of all elements as a scalar.
    pub fn sum_all(&self) -> Result<Var> {
        let x = self.value();
        let out = Tensor::scalar(x.data().iter().sum());
        out.ensure_finite("sum_all")?;
        let li = self.index;
        let shape = x.shape().to_vec();
        Ok(self.record(
            out,
            self.requires_grad(),
            Some(Box::new(move |g, sink| {
                sink(li, Tensor::filled(&shape, g.data()[0]));
            })),
        ))
    }

    /// Row gather from an embedding table: `self` is [V, d], output [len(ids), d].
    pub fn embedding(&self, ids: &[usize]) -> Result<Var> {
        let table = self.value();
        if table.rank() != 2 {
            return Err(CoreError::structure(format!(
                "embedding table must be [V, d], got shape {:?}",
                table.shape()
            )));
        }
        let (vocab, d) = (table.shape()[0], table.shape()[1]);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= vocab {
                return Err(CoreError::Index(format!(
                    "token id {id} out of embedding range {vocab}"
                )));
            }
            data.extend_from_slice(&table.data()[id * d..(id + 1) * d]);
        }
        let out = Tensor::from_vec(vec![ids.len(), d], data)?;
        let li = self.index;
        let ids = ids.to_vec();
        Ok(self.record(
            out,
            self.requires_grad(),
            Some(Box::new(move |g, sink| {
                let mut back = vec![0.0; vocab * d];
                for (row, &id) in ids.iter().enumerate() {
                    let src = &g.data()[row * d..(row + 1) * d];
                    let dst = &mut back[id * d..(id + 1) * d];
                    for (a, b) in dst.iter_mut().zip(src.iter()) {
                        *a += b;
                    }
                }
                sink(
                    li,
                    Tensor::from_vec(vec![vocab, d], back).expect("finite grad"),
                );
            })),
        ))
    }

    /// Scatters per-relation weights (`self` is [N]) into a [T, T] matrix:
    /// entry (i, j, r) writes `self[r]` at (i, j); unlisted pairs stay 0.
    pub fn scatter_relation(&self, entries: &[(usize, usize, usize)], seq_len: usize) -> Result<Var> {
        let w = self.value();
        if w.rank() != 1 {
            return Err(CoreError::structure(format!(
                "scatter_relation weights must be rank-1, got shape {:?}",
                w.shape()
            )));
        }
        let n = w.shape()[0];
        let mut data = vec![0.0; seq_len * seq_len];
        let mut written = vec![false; seq_len * seq_len];
        for &(i, j, r) in entries {
            if i >= seq_len || j >= seq_len {
                return Err(CoreError::Index(format!(
                    "relation entry ({i}, {j}) outside sequence length {seq_len}"
                )));
            }
            if r >= n {
                return Err(CoreError::Index(format!(
                    "relation index {r} outside weight table of size {n}"
                )));
            }
            if written[i * seq_len + j] {
                return Err(CoreError::structure(format!(
                    "duplicate relation entry at ({i}, {j})"
                )));
            }
            written[i * seq_len + j] = true;
            data[i * seq_len + j] = w.data()[r];
        }
        let out = Tensor::from_vec(vec![seq_len, seq_len], data)?;
        let li = self.index;
        let entries = entries.to_vec();
        Ok(self.record(
            out,
            self.requires_grad(),
            Some(Box::new(move |g, sink| {
                let mut back = vec![0.0; n];
                for &(i, j, r) in &entries {
                    back[r] += g.data()[i * seq_len + j];
                }
                sink(li, Tensor::from_vec(vec![n], back).expect("finite grad"));
            })),
        ))
    }
}
