//! Differentiable operations recorded on the [`Tape`].
//!
//! Shape policy: no implicit broadcasting except the batched matmul
//! forms and the row-wise bias add — everything else must match exactly
//! and mismatches are errors that name both shapes.

use super::kernels;
use super::tape::{acc, BackFn, Node, NodeId, Tape};
use super::Tensor;
use crate::error::{Error, Result};

fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn data(nodes: &[Node], id: NodeId) -> &[f64] {
    nodes[id].value.data()
}

impl Tape {
    /// Elementwise sum; both operands must share a shape.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("add", ta.shape(), tb.shape()));
        }
        let out: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::from_vec(ta.shape(), out)?;
        let requires = self.requires_grad(a) || self.requires_grad(b);
        let back: Option<BackFn> = requires.then(|| {
            let (ra, rb) = (self.requires_grad(a), self.requires_grad(b));
            Box::new(move |g: &[f64], _nodes: &[Node], grads: &mut [Option<Vec<f64>>]| {
                if ra {
                    for (o, &gv) in acc(grads, a, g.len()).iter_mut().zip(g) {
                        *o += gv;
                    }
                }
                if rb {
                    for (o, &gv) in acc(grads, b, g.len()).iter_mut().zip(g) {
                        *o += gv;
                    }
                }
            }) as BackFn
        });
        Ok(self.push_node(value, requires, back))
    }

    /// `x + bias` where `bias` has the length of `x`'s last axis and is
    /// added to every row. The one sanctioned broadcast besides batched
    /// matmul.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let d = tx.last_dim();
        if tb.rank() != 1 || tb.numel() != d {
            return Err(mismatch("add_bias", tx.shape(), tb.shape()));
        }
        let mut out = tx.data().to_vec();
        for row in out.chunks_mut(d) {
            for (o, &bv) in row.iter_mut().zip(tb.data()) {
                *o += bv;
            }
        }
        let value = Tensor::from_vec(tx.shape(), out)?;
        let requires = self.requires_grad(x) || self.requires_grad(bias);
        let back: Option<BackFn> = requires.then(|| {
            let (rx, rb) = (self.requires_grad(x), self.requires_grad(bias));
            Box::new(move |g: &[f64], _nodes: &[Node], grads: &mut [Option<Vec<f64>>]| {
                if rx {
                    for (o, &gv) in acc(grads, x, g.len()).iter_mut().zip(g) {
                        *o += gv;
                    }
                }
                if rb {
                    let gb = acc(grads, bias, d);
                    for row in g.chunks(d) {
                        for (o, &gv) in gb.iter_mut().zip(row) {
                            *o += gv;
                        }
                    }
                }
            }) as BackFn
        });
        Ok(self.push_node(value, requires, back))
    }

    /// Elementwise product. Multiplying by a `constant` node is how mask
    /// multipliers enter the graph: the constant side gets no gradient
    /// and the other side sees exactly `g ⊙ mask`.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch("mul", ta.shape(), tb.shape()));
        }
        let out: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::from_vec(ta.shape(), out)?;
        let requires = self.requires_grad(a) || self.requires_grad(b);
        let back: Option<BackFn> = requires.then(|| {
            let (ra, rb) = (self.requires_grad(a), self.requires_grad(b));
            Box::new(move |g: &[f64], nodes: &[Node], grads: &mut [Option<Vec<f64>>]| {
                if ra {
                    let bv = data(nodes, b);
                    let ga = acc(grads, a, g.len());
                    for i in 0..g.len() {
                        ga[i] += g[i] * bv[i];
                    }
                }
                if rb {
                    let av = data(nodes, a);
                    let gb = acc(grads, b, g.len());
                    for i in 0..g.len() {
                        gb[i] += g[i] * av[i];
                    }
                }
            }) as BackFn
        });
        Ok(self.push_node(value, requires, back))
    }

    /// Multiply by a scalar constant.
    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let tx = self.value(x);
        let out: Vec<f64> = tx.data().iter().map(|v| v * c).collect();
        let value = Tensor::from_vec(tx.shape(), out)?;
        let requires = self.requires_grad(x);
        let back: Option<BackFn> = requires.then(|| {
            Box::new(move |g: &[f64], _nodes: &[Node], grads: &mut [Option<Vec<f64>>]| {
                let gx = acc(grads, x, g.len());
                for i in 0..g.len() {
                    gx[i] += g[i] * c;
                }
            }) as BackFn
        });
        Ok(self.push_node(value, requires, back))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let tx = self.value(x);
        let out: Vec<f64> = tx.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
        let value = Tensor::from_vec(tx.shape(), out)?;
        let requires = self.requires_grad(x);
        let back: Option<BackFn> = requires.then(|| {
            Box::new(move |g: &[f64], nodes: &[Node], grads: &mut [Option<Vec<f64>>]| {
                let xv = data(nodes, x);
                let gx = acc(grads, x, g.len());
                for i in 0..g.len() {
                    if xv[i] > 0.0 {
                        gx[i] += g[i];
                    }
                }
            }) as BackFn
        });
        Ok(self.push_node(value, requires, back))
    }

    /// Matrix product. Accepted forms:
    /// `[m,k]·[k,n]`, `[B,m,k]·[k,n]` (shared right operand), and
    /// `[B,m,k]·[B,k,n]`. Backward is `dA = dC·Bᵀ`, `dB = Aᵀ·dC`,
    /// summed over the batch where the operand is shared.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        match (ta.rank(), tb.rank()) {
            (2, 2) => {
                let (m, k) = ta.dims2()?;
                let (k2, n) = tb.dims2()?;
                if k != k2 {
                    return Err(mismatch("matmul", ta.shape(), tb.shape()));
                }
                let mut out = vec![0.0; m * n];
                kernels::matmul2(ta.data(), tb.data(), m, k, n, &mut out);
                let value = Tensor::from_vec(&[m, n], out)?;
                let requires = self.requires_grad(a) || self.requires_grad(b);
                let back: Option<BackFn> = requires.then(|| {
                    let (ra, rb) = (self.requires_grad(a), self.requires_grad(b));
                    Box::new(move |g: &[f64], nodes: &[Node], grads: &mut [Option<Vec<f64>>]| {
                        if ra {
                            let bv = data(nodes, b);
                            let mut da = vec![0.0; m * k];
                            kernels::matmul2_nt(g, bv, m, n, k, &mut da);
                            let ga = acc(grads, a, m * k);
                            for i in 0..ga.len() {
                                ga[i] += da[i];
                            }
                        }
                        if rb {
                            let av = data(nodes, a);
                            let gb = acc(grads, b, k * n);
                            kernels::matmul2_tn(av, g, m, k, n, gb);
                        }
                    }) as BackFn
                });
                Ok(self.push_node(value, requires, back))
            }
            (3, 2) => {
                let (bs, m, k) = ta.dims3()?;
                let (k2, n) = tb.dims2()?;
                if k != k2 {
                    return Err(mismatch("matmul", ta.shape(), tb.shape()));
                }
                let mut out = vec![0.0; bs * m * n];
                {
                    let av = ta.data();
                    let bv = tb.data();
                    crate::parallel::chunks_mut(&mut out, m * n, |bi, chunk| {
                        kernels::matmul2_seq(&av[bi * m * k..(bi + 1) * m * k], bv, m, k, n, chunk);
                    });
                }
                let value = Tensor::from_vec(&[bs, m, n], out)?;
                let requires = self.requires_grad(a) || self.requires_grad(b);
                let back: Option<BackFn> = requires.then(|| {
                    let (ra, rb) = (self.requires_grad(a), self.requires_grad(b));
                    Box::new(move |g: &[f64], nodes: &[Node], grads: &mut [Option<Vec<f64>>]| {
                        if ra {
                            let bv = data(nodes, b);
                            let ga = acc(grads, a, bs * m * k);
                            for bi in 0..bs {
                                let mut da = vec![0.0; m * k];
                                kernels::matmul2_nt(&g[bi * m * n..(bi + 1) * m * n], bv, m, n, k, &mut da);
                                let slot = &mut ga[bi * m * k..(bi + 1) * m * k];
                                for i in 0..slot.len() {
                                    slot[i] += da[i];
                                }
                            }
                        }
                        if rb {
                            let av = data(nodes, a);
                            let gb = acc(grads, b, k * n);
                            for bi in 0..bs {
                                kernels::matmul2_tn(
                                    &av[bi * m * k..(bi + 1) * m * k],
                                    &g[bi * m * n..(bi + 1) * m * n],
                                    m,
                                    k,
                                    n,
                                    gb,
                                );
                            }
                        }
                    }) as BackFn
                });
                Ok(self.push_node(value, requires, back))
            }
            (3, 3) => {
                let (bs, m, k) = ta.dims3()?;
                let (bs2, k2, n) = tb.dims3()?;
                if bs != bs2 || k != k2 {
                    return Err(mismatch("matmul", ta.shape(), tb.shape()));
                }
                let mut out = vec![0.0; bs * m * n];
                {
                    let av = ta.data();
                    let bv = tb.data();
                    crate::parallel::chunks_mut(&mut out, m * n, |bi, chunk| {
                        kernels::matmul2_seq(
                            &av[bi * m * k..(bi + 1) * m * k],
                            &bv[bi * k * n..(bi + 1) * k * n],
                            m,
                            k,
                            n,
                            chunk,
                        );
                    });
                }
                let value = Tensor::from_vec(&[bs, m, n], out)?;
                let requires = self.requires_grad(a) || self.requires_grad(b);
                let back: Option<BackFn> = requires.then(|| {
                    let (ra, rb) = (self.requires_grad(a), self.requires_grad(b));
                    Box::new(move |g: &[f64], nodes: &[Node], grads: &mut [Option<Vec<f64>>]| {
                        if ra {
                            let bv = data(nodes, b);
                            let ga = acc(grads, a, bs * m * k);
                            for bi in 0..bs {
                                let mut da = vec![0.0; m * k];
                                kernels::matmul2_nt(
                                    &g[bi * m * n..(bi + 1) * m * n],
                                    &bv[bi * k * n..(bi + 1) * k * n],
                                    m,
                                    n,
                                    k,
                                    &mut da,
                                );
                                let slot = &mut ga[bi * m * k..(bi + 1) * m * k];
                                for i in 0..slot.len() {
                                    slot[i] += da[i];
                                }
                            }
                        }
                        if rb {
                            let av = data(nodes, a);
                            let gb = acc(grads, b, bs * k * n);
                            for bi in 0..bs {
                                kernels::matmul2_tn(
                                    &av[bi * m * k..(bi + 1) * m * k],
                                    &g[bi * m * n..(bi + 1) * m * n],
                                    m,
                                    k,
                                    n,
                                    &mut gb[bi * k * n..(bi + 1) * k * n],
                                );
                            }
                        }
                    }) as BackFn
                });
                Ok(self.push_node(value, requires, back))
            }
            _ => Err(mismatch("matmul", ta.shape(), tb.shape())),
        }
    }

    /// Batched `A · Bᵀ`: `[B,m,k] · [B,n,k] → [B,m,n]`. This is the
    /// query–key product, with keys kept row-major.
    pub fn bmm_nt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (bs, m, k) = ta.dims3()?;
        let (bs2, n, k2) = tb.dims3()?;
        if bs != bs2 || k != k2 {
            return Err(mismatch("bmm_nt", ta.shape(), tb.shape()));
        }
        let mut out = vec![0.0; bs * m * n];
        {
            let av = ta.data();
            let bv = tb.data();
            crate::parallel::chunks_mut(&mut out, m * n, |bi, chunk| {
                kernels::matmul2_nt(
                    &av[bi * m * k..(bi + 1) * m * k],
                    &bv[bi * n * k..(bi + 1) * n * k],
                    m,
                    k,
                    n,
                    chunk,
                );
            });
        }
        let value = Tensor::from_vec(&[bs, m, n], out)?;
        let requires = self.requires_grad(a) || self.requires_grad(b);
        let back: Option<BackFn> = requires.then(|| {
            let (ra, rb) = (self.requires_grad(a), self.requires_grad(b));
            Box::new(move |g: &[f64], nodes: &[Node], grads: &mut [Option<Vec<f64>>]| {
                if ra {
                    // dA[b] = dC[b] · B[b]
                    let bv = data(nodes, b);
                    let ga = acc(grads, a, bs * m * k);
                    for bi in 0..bs {
                        let mut da = vec![0.0; m * k];
                        kernels::matmul2_seq(
                            &g[bi * m * n..(bi + 1) * m * n],
                            &bv[bi * n * k..(bi + 1) * n * k],
                            m,
                            n,
                            k,
                            &mut da,
                        );
                        let slot = &mut ga[bi * m * k..(bi + 1) * m * k];
                        for i in 0..slot.len() {
                            slot[i] += da[i];
                        }
                    }
                }
                if rb {
                    // dB[b] = dC[b]ᵀ · A[b]
                    let av = data(nodes, a);
                    let gb = acc(grads, b, bs * n * k);
                    for bi in 0..bs {
                        kernels::matmul2_tn(
                            &g[bi * m * n..(bi + 1) * m * n],
                            &av[bi * m * k..(bi + 1) * m * k],
                            m,
                            n,
                            k,
                            &mut gb[bi * n * k..(bi + 1) * n * k],
                        );
                    }
                }
            }) as BackFn
        });
        Ok(self.push_node(value, requires, back))
    }

    /// Transpose of a rank-2 tensor.
    pub fn transpose(&mut self, x: NodeId) -> Result<NodeId> {
        let tx = self.value(x);
        let (m, n) = tx.dims2()?;
        let xd = tx.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = xd[i * n + j];
            }
        }
        let value = Tensor::from_vec(&[n, m], out)?;
        let requires = self.requires_grad(x);
        let back: Option<BackFn> = requires.then(|| {
            Box::new(move |g: &[f64], _nodes: &[Node], grads: &mut [Option<Vec<f64>>]| {
                let gx = acc(grads, x, m * n);
                for j in 0..n {
                    for i in 0..m {
                        gx[i * n + j] += g[j * m + i];
                    }
                }
            }) as BackFn
        });
        Ok(self.push_node(value, requires, back))
    }

    /// Take `len` columns of the last axis starting at `start`.
    pub fn slice_cols(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let tx = self.value(x);
        let d = tx.last_dim();
        if start + len > d || len == 0 {
            return Err(Error::param(
                "slice_cols",
                format!("range {}..{} out of last axis {}", start, start + len, d),
            ));
        }
        let rows = tx.leading_rows();
        let mut shape = tx.shape().to_vec();
        *shape.last_mut().expect("rank >= 1") = len;
        let xd = tx.data();
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&xd[r * d + start..r * d + start + len]);
        }
        let value = Tensor::from_vec(&shape, out)?;
        let requires = self.requires_grad(x);
        let back: Option<BackFn> = requires.then(|| {
            Box::new(move |g: &[f64], _nodes: &[Node], grads: &mut [Option<Vec<f64>>]| {
                let gx = acc(grads, x, rows * d);
                for r in 0..rows {
                    for j in 0..len {
                        gx[r * d + start + j] += g[r * len + j];
                    }
                }
            }) as BackFn
        });
        Ok(self.push_node(value, requires, back))
    }

    /// Concatenate along the last axis; leading dims must all match.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::param("concat_cols", "no parts".to_string()));
        }
        let lead: Vec<usize> = {
            let first = self.value(parts[0]);
            first.shape()[..first.rank() - 1].to_vec()
        };
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            if t.shape()[..t.rank() - 1] != lead[..] {
                return Err(mismatch("concat_cols", self.value(parts[0]).shape(), t.shape()));
            }
            widths.push(t.last_dim());
        }
        let rows: usize = lead.iter().product();
        let d_out: usize = widths.iter().sum();
        let mut out = vec![0.0; rows * d_out];
        let mut offset = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let pd = self.value(p).data();
            for r in 0..rows {
                out[r * d_out + offset..r * d_out + offset + w].copy_from_slice(&pd[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let mut shape = lead.clone();
        shape.push(d_out);
        let value = Tensor::from_vec(&shape, out)?;
        let requires = parts.iter().any(|&p| self.requires_grad(p));
        let back: Option<BackFn> = requires.then(|| {
            let parts = parts.to_vec();
            let widths = widths.clone();
            let flags: Vec<bool> = parts.iter().map(|&p| self.requires_grad(p)).collect();
            Box::new(move |g: &[f64], _nodes: &[Node], grads: &mut [Option<Vec<f64>>]| {
                let mut offset = 0;
                for ((&p, &w), &f) in parts.iter().zip(&widths).zip(&flags) {
                    if f {
                        let gp = acc(grads, p, rows * w);
                        for r in 0..rows {
                            for j in 0..w {
                                gp[r * w + j] += g[r * d_out + offset + j];
                            }
                        }
                    }
                    offset += w;
                }
            }) as BackFn
        });
        Ok(self.push_node(value, requires, back))
    }

    /// Row softmax over the last axis, stabilized by max subtraction.
    pub fn softmax_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let tx = self.value(x);
        let d = tx.last_dim();
        let mut out = tx.data().to_vec();
        for row in out.chunks_mut(d) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let value = Tensor::from_vec(tx.shape(), out)?;
        let requires = self.requires_grad(x);
        let out_id = self.len();
        let back: Option<BackFn> = requires.then(|| {
            Box::new(move |g: &[f64], nodes: &[Node], grads: &mut [Option<Vec<f64>>]| {
                let y = data(nodes, out_id);
                let gx = acc(grads, x, g.len());
                for r in 0..g.len() / d {
                    let (ys, gs) = (&y[r * d..(r + 1) * d], &g[r * d..(r + 1) * d]);
                    let dot: f64 = ys.iter().zip(gs).map(|(a, b)| a * b).sum();
                    let slot = &mut gx[r * d..(r + 1) * d];
                    for j in 0..d {
                        slot[j] += ys[j] * (gs[j] - dot);
                    }
                }
            }) as BackFn
        });
        Ok(self.push_node(value, requires, back))
    }

    /// Renormalize each last-axis row to sum 1; rows that sum to exactly
    /// zero become uniform and pass no gradient. This is the second half
    /// of attention-weight dropping.
    pub fn row_renorm_uniform(&mut self, x: NodeId) -> Result<NodeId> {
        let tx = self.value(x);
        let d = tx.last_dim();
        let rows = tx.leading_rows();
        let mut sums = vec![0.0; rows];
        let mut out = tx.data().to_vec();
        for (r, row) in out.chunks_mut(d).enumerate() {
            let s: f64 = row.iter().sum();
            sums[r] = s;
            if s == 0.0 {
                row.fill(1.0 / d as f64);
            } else {
                for v in row.iter_mut() {
                    *v /= s;
                }
            }
        }
        let value = Tensor::from_vec(tx.shape(), out)?;
        let requires = self.requires_grad(x);
        let out_id = self.len();
        let back: Option<BackFn> = requires.then(|| {
            Box::new(move |g: &[f64], nodes: &[Node], grads: &mut [Option<Vec<f64>>]| {
                let y = data(nodes, out_id);
                let gx = acc(grads, x, g.len());
                for r in 0..rows {
                    let s = sums[r];
                    if s == 0.0 {
                        continue;
                    }
                    let (ys, gs) = (&y[r * d..(r + 1) * d], &g[r * d..(r + 1) * d]);
                    let dot: f64 = ys.iter().zip(gs).map(|(a, b)| a * b).sum();
                    let slot = &mut gx[r * d..(r + 1) * d];
                    for j in 0..d {
                        slot[j] += (gs[j] - dot) / s;
                    }
                }
            }) as BackFn
        });
        Ok(self.push_node(value, requires, back))
    }

    /// Layer normalization over the last axis with learnable gain/bias.
    /// A zero-variance row (with `eps = 0`) normalizes to zeros rather
    /// than dividing by zero.
    pub fn layernorm(&mut self, x: NodeId, gain: NodeId, bias: NodeId, eps: f64) -> Result<NodeId> {
        if eps < 0.0 {
            return Err(Error::param("eps", format!("must be >= 0, got {}", eps)));
        }
        let (tx, tg, tb) = (self.value(x), self.value(gain), self.value(bias));
        let d = tx.last_dim();
        if tg.rank() != 1 || tg.numel() != d {
            return Err(mismatch("layernorm", tx.shape(), tg.shape()));
        }
        if tb.rank() != 1 || tb.numel() != d {
            return Err(mismatch("layernorm", tx.shape(), tb.shape()));
        }
        let rows = tx.leading_rows();
        let xd = tx.data();
        let mut normalized = vec![0.0; rows * d];
        let mut sigmas = vec![0.0; rows];
        for r in 0..rows {
            let row = &xd[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let sigma = (var + eps).sqrt();
            sigmas[r] = sigma;
            if sigma > 0.0 {
                let slot = &mut normalized[r * d..(r + 1) * d];
                for j in 0..d {
                    slot[j] = (row[j] - mean) / sigma;
                }
            }
        }
        let mut out = vec![0.0; rows * d];
        let (gd, bd) = (tg.data(), tb.data());
        for r in 0..rows {
            for j in 0..d {
                out[r * d + j] = gd[j] * normalized[r * d + j] + bd[j];
            }
        }
        let value = Tensor::from_vec(tx.shape(), out)?;
        let requires = self.requires_grad(x) || self.requires_grad(gain) || self.requires_grad(bias);
        let back: Option<BackFn> = requires.then(|| {
            let (rx, rg, rb) = (
                self.requires_grad(x),
                self.requires_grad(gain),
                self.requires_grad(bias),
            );
            Box::new(move |g: &[f64], nodes: &[Node], grads: &mut [Option<Vec<f64>>]| {
                let gaind = data(nodes, gain);
                for r in 0..rows {
                    let gr = &g[r * d..(r + 1) * d];
                    let yr = &normalized[r * d..(r + 1) * d];
                    if rg {
                        let gg = acc(grads, gain, d);
                        for j in 0..d {
                            gg[j] += gr[j] * yr[j];
                        }
                    }
                    if rb {
                        let gb = acc(grads, bias, d);
                        for j in 0..d {
                            gb[j] += gr[j];
                        }
                    }
                    if rx {
                        let sigma = sigmas[r];
                        if sigma == 0.0 {
                            continue;
                        }
                        let mut m1 = 0.0;
                        let mut m2 = 0.0;
                        for j in 0..d {
                            let gh = gr[j] * gaind[j];
                            m1 += gh;
                            m2 += gh * yr[j];
                        }
                        m1 /= d as f64;
                        m2 /= d as f64;
                        let gx = acc(grads, x, rows * d);
                        let slot = &mut gx[r * d..(r + 1) * d];
                        for j in 0..d {
                            let gh = gr[j] * gaind[j];
                            slot[j] += (gh - m1 - yr[j] * m2) / sigma;
                        }
                    }
                }
            }) as BackFn
        });
        Ok(self.push_node(value, requires, back))
    }

    /// Row lookup: `table[ids]` with `batch_dims` giving the id layout
    /// (`[T]` or `[B,T]`). Backward scatter-adds rows into the table.
    pub fn embedding(&mut self, table: NodeId, ids: &[u32], batch_dims: &[usize]) -> Result<NodeId> {
        let tt = self.value(table);
        let (vocab, d) = tt.dims2()?;
        let n: usize = batch_dims.iter().product();
        if n != ids.len() || batch_dims.is_empty() || batch_dims.len() > 2 {
            return Err(Error::param(
                "batch_dims",
                format!("{:?} incompatible with {} ids", batch_dims, ids.len()),
            ));
        }
        for &id in ids {
            if id as usize >= vocab {
                return Err(Error::index(format!("token id {} >= vocab {}", id, vocab)));
            }
        }
        let td = tt.data();
        let mut out = Vec::with_capacity(n * d);
        for &id in ids {
            out.extend_from_slice(&td[id as usize * d..(id as usize + 1) * d]);
        }
        let mut shape = batch_dims.to_vec();
        shape.push(d);
        let value = Tensor::from_vec(&shape, out)?;
        let requires = self.requires_grad(table);
        let back: Option<BackFn> = requires.then(|| {
            let ids = ids.to_vec();
            Box::new(move |g: &[f64], _nodes: &[Node], grads: &mut [Option<Vec<f64>>]| {
                let gt = acc(grads, table, vocab * d);
                for (r, &id) in ids.iter().enumerate() {
                    let slot = &mut gt[id as usize * d..(id as usize + 1) * d];
                    for j in 0..d {
                        slot[j] += g[r * d + j];
                    }
                }
            }) as BackFn
        });
        Ok(self.push_node(value, requires, back))
    }

    /// Keep every `stride`-th row of the time axis of `[B,T,D]`,
    /// starting at row 0; the result has `ceil(T/stride)` rows.
    pub fn stride_rows(&mut self, x: NodeId, stride: usize) -> Result<NodeId> {
        if stride == 0 {
            return Err(Error::param("stride", "must be >= 1".to_string()));
        }
        let tx = self.value(x);
        let (b, t, d) = tx.dims3()?;
        let t_out = t.div_ceil(stride);
        let xd = tx.data();
        let mut out = Vec::with_capacity(b * t_out * d);
        for bi in 0..b {
            for ti in (0..t).step_by(stride) {
                let base = (bi * t + ti) * d;
                out.extend_from_slice(&xd[base..base + d]);
            }
        }
        let value = Tensor::from_vec(&[b, t_out, d], out)?;
        let requires = self.requires_grad(x);
        let back: Option<BackFn> = requires.then(|| {
            Box::new(move |g: &[f64], _nodes: &[Node], grads: &mut [Option<Vec<f64>>]| {
                let gx = acc(grads, x, b * t * d);
                for bi in 0..b {
                    for (ro, ti) in (0..t).step_by(stride).enumerate() {
                        let src = (bi * t_out + ro) * d;
                        let dst = (bi * t + ti) * d;
                        for j in 0..d {
                            gx[dst + j] += g[src + j];
                        }
                    }
                }
            }) as BackFn
        });
        Ok(self.push_node(value, requires, back))
    }

    /// Sum of all entries, as a `[1]` tensor.
    pub fn sum_all(&mut self, x: NodeId) -> Result<NodeId> {
        let tx = self.value(x);
        let n = tx.numel();
        let value = Tensor::scalar(tx.data().iter().sum());
        let requires = self.requires_grad(x);
        let back: Option<BackFn> = requires.then(|| {
            Box::new(move |g: &[f64], _nodes: &[Node], grads: &mut [Option<Vec<f64>>]| {
                let gx = acc(grads, x, n);
                for v in gx.iter_mut() {
                    *v += g[0];
                }
            }) as BackFn
        });
        Ok(self.push_node(value, requires, back))
    }

    /// Mean of all entries, as a `[1]` tensor.
    pub fn mean_all(&mut self, x: NodeId) -> Result<NodeId> {
        let tx = self.value(x);
        let n = tx.numel();
        let value = Tensor::scalar(tx.data().iter().sum::<f64>() / n as f64);
        let requires = self.requires_grad(x);
        let back: Option<BackFn> = requires.then(|| {
            Box::new(move |g: &[f64], _nodes: &[Node], grads: &mut [Option<Vec<f64>>]| {
                let gx = acc(grads, x, n);
                let gv = g[0] / n as f64;
                for v in gx.iter_mut() {
                    *v += gv;
                }
            }) as BackFn
        });
        Ok(self.push_node(value, requires, back))
    }

    /// Mean over non-pad positions of the KL divergence between the
    /// smoothed target distribution (1−ε on the gold id, ε/(V−1)
    /// elsewhere) and the softmax of the logits. With ε = 0 this is
    /// standard cross-entropy.
    pub fn cross_entropy_label_smoothed(
        &mut self,
        logits: NodeId,
        targets: &[u32],
        eps: f64,
        pad_id: u32,
    ) -> Result<NodeId> {
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::param("eps", format!("must be in [0,1), got {}", eps)));
        }
        let tl = self.value(logits);
        let v = tl.last_dim();
        let n = tl.leading_rows();
        if v < 2 {
            return Err(Error::param("logits", format!("vocab axis must be >= 2, got {}", v)));
        }
        if targets.len() != n {
            return Err(mismatch("cross_entropy", tl.shape(), &[targets.len()]));
        }
        for &t in targets {
            if t != pad_id && t as usize >= v {
                return Err(Error::index(format!("target id {} >= vocab {}", t, v)));
            }
        }
        let n_live = targets.iter().filter(|&&t| t != pad_id).count();
        if n_live == 0 {
            return Err(Error::param("targets", "no non-pad targets".to_string()));
        }
        let ld = tl.data();
        // Softmax probabilities are needed by the backward rule; keep them.
        let mut probs = vec![0.0; n * v];
        let off_mass = eps / (v as f64 - 1.0);
        let gold_mass = 1.0 - eps;
        let q_entropy = gold_mass * gold_mass.ln()
            + if eps > 0.0 {
                (v as f64 - 1.0) * off_mass * off_mass.ln()
            } else {
                0.0
            };
        let mut total = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            if t == pad_id {
                continue;
            }
            let row = &ld[r * v..(r + 1) * v];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for &x in row {
                sum += (x - max).exp();
            }
            let lse = max + sum.ln();
            let prow = &mut probs[r * v..(r + 1) * v];
            for (j, &x) in row.iter().enumerate() {
                prow[j] = (x - lse).exp();
            }
            // −Σ_j q_j·logp_j, written out over the two mass levels.
            let mut cross = gold_mass * (row[t as usize] - lse);
            if eps > 0.0 {
                for (j, &x) in row.iter().enumerate() {
                    if j != t as usize {
                        cross += off_mass * (x - lse);
                    }
                }
            }
            total += q_entropy - cross;
        }
        let value = Tensor::scalar(total / n_live as f64);
        let requires = self.requires_grad(logits);
        let back: Option<BackFn> = requires.then(|| {
            let targets = targets.to_vec();
            Box::new(move |g: &[f64], _nodes: &[Node], grads: &mut [Option<Vec<f64>>]| {
                let gl = acc(grads, logits, n * v);
                let scale = g[0] / n_live as f64;
                for (r, &t) in targets.iter().enumerate() {
                    if t == pad_id {
                        continue;
                    }
                    let prow = &probs[r * v..(r + 1) * v];
                    let slot = &mut gl[r * v..(r + 1) * v];
                    for j in 0..v {
                        let q = if j == t as usize { gold_mass } else { off_mass };
                        slot[j] += (prow[j] - q) * scale;
                    }
                }
            }) as BackFn
        });
        Ok(self.push_node(value, requires, back))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(tape: &mut Tape, shape: &[usize], data: Vec<f64>) -> NodeId {
        tape.leaf(Tensor::from_vec(shape, data).unwrap().with_grad())
    }

    #[test]
    fn matmul_identity() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, &[2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let b = leaf(&mut tape, &[2, 2], vec![5.0, 6.0, 7.0, 8.0]);
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[5.0, 6.0, 7.0, 8.0]);
    }

    #[test]
    fn matmul_hand_case_and_gradient() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, &[1, 2], vec![1.0, 2.0]);
        let b = leaf(&mut tape, &[2, 1], vec![3.0, 4.0]);
        let c = tape.matmul(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[11.0]);
        let s = tape.sum_all(c).unwrap();
        tape.backward(s).unwrap();
        // d sum(A·B) / dA = Bᵀ
        assert_eq!(tape.grad(a).unwrap(), &[3.0, 4.0]);
        assert_eq!(tape.grad(b).unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = leaf(&mut tape, &[2, 3], vec![0.0; 6]);
        let b = leaf(&mut tape, &[2, 2], vec![0.0; 4]);
        let err = tape.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2, 2]"), "{}", msg);
    }

    #[test]
    fn softmax_uniform_and_closed_form() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 3], vec![0.0, 0.0, 0.0]);
        let y = tape.softmax_rows(x).unwrap();
        for &v in tape.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        // Large equal logits must not overflow.
        let x2 = leaf(&mut tape, &[1, 2], vec![1000.0, 1000.0]);
        let y2 = tape.softmax_rows(x2).unwrap();
        assert_eq!(tape.value(y2).data(), &[0.5, 0.5]);
        // softmax([0, ln 3]) = [1/4, 3/4]
        let x3 = leaf(&mut tape, &[1, 2], vec![0.0, 3.0f64.ln()]);
        let y3 = tape.softmax_rows(x3).unwrap();
        let out = tape.value(y3).data();
        assert!((out[0] - 0.25).abs() < 1e-12);
        assert!((out[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[3, 5], (0..15).map(|i| (i as f64).sin() * 9.0).collect());
        let y = tape.softmax_rows(x).unwrap();
        for row in tape.value(y).data().chunks(5) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layernorm_constant_row_is_zero() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 4], vec![5.0, 5.0, 5.0, 5.0]);
        let g = tape.leaf(Tensor::full(&[4], 1.0));
        let b = tape.leaf(Tensor::zeros(&[4]));
        let y = tape.layernorm(x, g, b, 1e-6).unwrap();
        for &v in tape.value(y).data() {
            assert!(v.abs() < 1e-9);
        }
        // Also safe with eps exactly zero.
        let x2 = leaf(&mut tape, &[1, 4], vec![5.0, 5.0, 5.0, 5.0]);
        let y2 = tape.layernorm(x2, g, b, 0.0).unwrap();
        assert_eq!(tape.value(y2).data(), &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn layernorm_two_point_row() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 2], vec![1.0, 3.0]);
        let g = tape.leaf(Tensor::full(&[2], 1.0));
        let b = tape.leaf(Tensor::zeros(&[2]));
        let y = tape.layernorm(x, g, b, 0.0).unwrap();
        let out = tape.value(y).data();
        assert!((out[0] + 1.0).abs() < 1e-12);
        assert!((out[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_uniform_is_ln_v() {
        let mut tape = Tape::new();
        let logits = leaf(&mut tape, &[2, 4], vec![0.3; 8]);
        let loss = tape
            .cross_entropy_label_smoothed(logits, &[1, 3], 0.0, 0)
            .unwrap();
        let got = tape.value(loss).data()[0];
        assert!((got - 4.0f64.ln()).abs() < 1e-12, "{}", got);
    }

    #[test]
    fn cross_entropy_all_pad_is_error() {
        let mut tape = Tape::new();
        let logits = leaf(&mut tape, &[2, 4], vec![0.0; 8]);
        let err = tape
            .cross_entropy_label_smoothed(logits, &[0, 0], 0.1, 0)
            .unwrap_err();
        assert!(err.to_string().contains("no non-pad targets"));
    }

    #[test]
    fn cross_entropy_rejects_out_of_vocab() {
        let mut tape = Tape::new();
        let logits = leaf(&mut tape, &[1, 4], vec![0.0; 4]);
        assert!(tape
            .cross_entropy_label_smoothed(logits, &[9], 0.0, 0)
            .is_err());
    }

    #[test]
    fn smoothed_cross_entropy_matches_direct_kl() {
        // Independent evaluation of Σ q (ln q − ln p) with naive loops.
        let v = 4usize;
        let eps = 0.1;
        let logits = [7.0f64, 0.0, 0.0, 0.0];
        let gold = 1usize;
        let mut z = 0.0;
        for &l in &logits {
            z += l.exp();
        }
        let mut expected = 0.0;
        for j in 0..v {
            let q = if j == gold { 1.0 - eps } else { eps / (v as f64 - 1.0) };
            let p = logits[j].exp() / z;
            expected += q * (q.ln() - p.ln());
        }

        let mut tape = Tape::new();
        let l = leaf(&mut tape, &[1, 4], logits.to_vec());
        let loss = tape
            .cross_entropy_label_smoothed(l, &[gold as u32], eps, 0)
            .unwrap();
        let got = tape.value(loss).data()[0];
        assert!((got - expected).abs() < 1e-10, "got {}, expected {}", got, expected);
    }

    #[test]
    fn relu_and_scale_compose() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[4], vec![-1.0, 2.0, -3.0, 4.0]);
        let y = tape.relu(x).unwrap();
        let z = tape.scale(y, 2.0).unwrap();
        assert_eq!(tape.value(z).data(), &[0.0, 4.0, 0.0, 8.0]);
        let s = tape.sum_all(z).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.0, 2.0, 0.0, 2.0]);
    }

    #[test]
    fn slice_concat_roundtrip() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[2, 4], (0..8).map(f64::from).collect());
        let a = tape.slice_cols(x, 0, 2).unwrap();
        let b = tape.slice_cols(x, 2, 2).unwrap();
        let y = tape.concat_cols(&[a, b]).unwrap();
        assert_eq!(tape.value(y).data(), tape.value(x).data());
    }

    #[test]
    fn stride_rows_halves_time_axis() {
        let mut tape = Tape::new();
        let x = leaf(&mut tape, &[1, 4, 2], (0..8).map(f64::from).collect());
        let y = tape.stride_rows(x, 2).unwrap();
        assert_eq!(tape.value(y).shape(), &[1, 2, 2]);
        assert_eq!(tape.value(y).data(), &[0.0, 1.0, 4.0, 5.0]);
        // ceil(5/2) = 3
        let x2 = leaf(&mut tape, &[1, 5, 1], vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        let y2 = tape.stride_rows(x2, 2).unwrap();
        assert_eq!(tape.value(y2).shape(), &[1, 3, 1]);
    }

    #[test]
    fn embedding_rejects_out_of_vocab() {
        let mut tape = Tape::new();
        let table = leaf(&mut tape, &[3, 2], vec![0.0; 6]);
        assert!(tape.embedding(table, &[3], &[1]).is_err());
    }

    #[test]
    fn ops_are_deterministic() {
        let run = || {
            let mut tape = Tape::new();
            let x = leaf(&mut tape, &[3, 4], (0..12).map(|i| (i as f64 * 0.77).cos()).collect());
            let w = leaf(&mut tape, &[4, 4], (0..16).map(|i| (i as f64 * 0.31).sin()).collect());
            let h = tape.matmul(x, w).unwrap();
            let s = tape.softmax_rows(h).unwrap();
            tape.value(s).data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
