//! Reverse pass over the tape.

use super::tape::{conv_tap, interp_bracket, Node, Padding, Tape, Var};
use crate::error::{Error, Result};

impl Tape {
    /// Propagate d(loss)/d(value) to every tracked leaf reachable from
    /// `loss`, adding into each leaf's accumulated gradient. Calling twice
    /// without clearing doubles the accumulated gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.slots[loss.0].data.len() != 1 {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.slots[loss.0].shape
            )));
        }
        let mut tmp: Vec<Option<Vec<f64>>> = vec![None; self.slots.len()];
        tmp[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if tmp[i].is_none() || !self.slots[i].needs_grad {
                continue;
            }
            let g = tmp[i].take().unwrap();
            self.propagate(i, &g, &mut tmp);
            if matches!(self.nodes[i], Node::Leaf) {
                tmp[i] = Some(g);
            }
        }

        for (i, t) in tmp.into_iter().enumerate() {
            if let (Some(t), Node::Leaf) = (t, &self.nodes[i]) {
                match self.acc[i].as_mut() {
                    Some(acc) => acc.iter_mut().zip(&t).for_each(|(a, b)| *a += b),
                    None => self.acc[i] = Some(t),
                }
            }
        }
        Ok(())
    }

    fn needs(&self, v: Var) -> bool {
        self.slots[v.0].needs_grad
    }

    fn accum(&self, tmp: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&[f64], &mut [f64])) {
        if !self.needs(v) {
            return;
        }
        let buf = tmp[v.0].get_or_insert_with(|| vec![0.0; self.slots[v.0].data.len()]);
        // Split borrow: the closure reads other slots through `self`.
        let mut taken = std::mem::take(buf);
        f(&self.slots[v.0].data, &mut taken);
        tmp[v.0] = Some(taken);
    }

    fn propagate(&self, i: usize, g: &[f64], tmp: &mut [Option<Vec<f64>>]) {
        let out = &self.slots[i].data;
        match &self.nodes[i] {
            Node::Leaf => {}
            Node::Add { a, b } => {
                self.accum(tmp, *a, |_, ga| add_into(ga, g, 1.0));
                self.accum(tmp, *b, |_, gb| add_into(gb, g, 1.0));
            }
            Node::Sub { a, b } => {
                self.accum(tmp, *a, |_, ga| add_into(ga, g, 1.0));
                self.accum(tmp, *b, |_, gb| add_into(gb, g, -1.0));
            }
            Node::Mul { a, b } => {
                let (av, bv) = (&self.slots[a.0].data, &self.slots[b.0].data);
                self.accum(tmp, *a, |_, ga| {
                    ga.iter_mut().zip(g.iter().zip(bv)).for_each(|(o, (gg, bb))| *o += gg * bb)
                });
                self.accum(tmp, *b, |_, gb| {
                    gb.iter_mut().zip(g.iter().zip(av)).for_each(|(o, (gg, aa))| *o += gg * aa)
                });
            }
            Node::Affine { x, scale } => {
                self.accum(tmp, *x, |_, gx| add_into(gx, g, *scale));
            }
            Node::Sigmoid { x } => {
                self.accum(tmp, *x, |_, gx| {
                    gx.iter_mut()
                        .zip(g.iter().zip(out))
                        .for_each(|(o, (gg, y))| *o += gg * y * (1.0 - y))
                });
            }
            Node::Tanh { x } => {
                self.accum(tmp, *x, |_, gx| {
                    gx.iter_mut()
                        .zip(g.iter().zip(out))
                        .for_each(|(o, (gg, y))| *o += gg * (1.0 - y * y))
                });
            }
            Node::Relu { x } => {
                let xv = &self.slots[x.0].data;
                self.accum(tmp, *x, |_, gx| {
                    gx.iter_mut()
                        .zip(g.iter().zip(xv))
                        .for_each(|(o, (gg, xx))| {
                            if *xx > 0.0 {
                                *o += gg
                            }
                        })
                });
            }
            Node::Exp { x } => {
                self.accum(tmp, *x, |_, gx| {
                    gx.iter_mut()
                        .zip(g.iter().zip(out))
                        .for_each(|(o, (gg, y))| *o += gg * y)
                });
            }
            Node::Log { x } => {
                let xv = &self.slots[x.0].data;
                self.accum(tmp, *x, |_, gx| {
                    gx.iter_mut()
                        .zip(g.iter().zip(xv))
                        .for_each(|(o, (gg, xx))| *o += gg / xx)
                });
            }
            Node::Matmul { a, b } => {
                let (p, q) = dims2(&self.slots[a.0].shape);
                let r = self.slots[b.0].data.len() / q;
                let (av, bv) = (&self.slots[a.0].data, &self.slots[b.0].data);
                // dA = g · Bᵀ
                self.accum(tmp, *a, |_, ga| {
                    for ii in 0..p {
                        let grow = &g[ii * r..(ii + 1) * r];
                        for kq in 0..q {
                            let brow = &bv[kq * r..(kq + 1) * r];
                            ga[ii * q + kq] +=
                                grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
                // dB = Aᵀ · g
                self.accum(tmp, *b, |_, gb| {
                    for ii in 0..p {
                        let grow = &g[ii * r..(ii + 1) * r];
                        let arow = &av[ii * q..(ii + 1) * q];
                        for (kq, aa) in arow.iter().enumerate() {
                            add_into(&mut gb[kq * r..(kq + 1) * r], grow, *aa);
                        }
                    }
                });
            }
            Node::MatmulTa { a, b } => {
                // y = aᵀ·b with a[q×p], b[q×r], g[p×r]
                let (q, p) = dims2(&self.slots[a.0].shape);
                let r = self.slots[b.0].data.len() / q;
                let (av, bv) = (&self.slots[a.0].data, &self.slots[b.0].data);
                self.accum(tmp, *a, |_, ga| {
                    for kq in 0..q {
                        let brow = &bv[kq * r..(kq + 1) * r];
                        for ii in 0..p {
                            let grow = &g[ii * r..(ii + 1) * r];
                            ga[kq * p + ii] +=
                                grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
                self.accum(tmp, *b, |_, gb| {
                    for kq in 0..q {
                        let arow = &av[kq * p..(kq + 1) * p];
                        let gbrow = &mut gb[kq * r..(kq + 1) * r];
                        for (ii, aa) in arow.iter().enumerate() {
                            add_into(gbrow, &g[ii * r..(ii + 1) * r], *aa);
                        }
                    }
                });
            }
            Node::MatmulTb { a, b } => {
                // y = a·bᵀ with a[p×q], b[r×q], g[p×r]
                let (p, q) = dims2(&self.slots[a.0].shape);
                let r = self.slots[b.0].data.len() / q;
                let (av, bv) = (&self.slots[a.0].data, &self.slots[b.0].data);
                self.accum(tmp, *a, |_, ga| {
                    for ii in 0..p {
                        let garow = &mut ga[ii * q..(ii + 1) * q];
                        let grow = &g[ii * r..(ii + 1) * r];
                        for (jj, gg) in grow.iter().enumerate() {
                            add_into(garow, &bv[jj * q..(jj + 1) * q], *gg);
                        }
                    }
                });
                self.accum(tmp, *b, |_, gb| {
                    for ii in 0..p {
                        let arow = &av[ii * q..(ii + 1) * q];
                        let grow = &g[ii * r..(ii + 1) * r];
                        for (jj, gg) in grow.iter().enumerate() {
                            add_into(&mut gb[jj * q..(jj + 1) * q], arow, *gg);
                        }
                    }
                });
            }
            Node::Conv1d {
                x,
                w,
                bias,
                dilation,
                stride,
                padding,
            } => self.conv1d_backward(g, *x, *w, *bias, *dilation, *stride, *padding, tmp),
            Node::Softmax { x, axis } => {
                let shape = &self.slots[x.0].shape;
                let (rows, cols) = if shape.len() == 1 {
                    (1, shape[0])
                } else {
                    (shape[0], shape[1])
                };
                let row_wise = shape.len() == 1 || *axis == 1;
                self.accum(tmp, *x, |_, gx| {
                    if row_wise {
                        for rr in 0..rows {
                            let y = &out[rr * cols..(rr + 1) * cols];
                            let gg = &g[rr * cols..(rr + 1) * cols];
                            let dot: f64 = y.iter().zip(gg).map(|(a, b)| a * b).sum();
                            for c in 0..cols {
                                gx[rr * cols + c] += y[c] * (gg[c] - dot);
                            }
                        }
                    } else {
                        for c in 0..cols {
                            let mut dot = 0.0;
                            for rr in 0..rows {
                                dot += out[rr * cols + c] * g[rr * cols + c];
                            }
                            for rr in 0..rows {
                                let y = out[rr * cols + c];
                                gx[rr * cols + c] += y * (g[rr * cols + c] - dot);
                            }
                        }
                    }
                });
            }
            Node::SumAll { x } => {
                self.accum(tmp, *x, |_, gx| gx.iter_mut().for_each(|o| *o += g[0]));
            }
            Node::MeanRows { x } => {
                let (rows, cols) = dims2(&self.slots[x.0].shape);
                let inv = 1.0 / rows as f64;
                self.accum(tmp, *x, |_, gx| {
                    for rr in 0..rows {
                        add_into(&mut gx[rr * cols..(rr + 1) * cols], g, inv);
                    }
                });
            }
            Node::Concat { parts, axis } => {
                if *axis == 0 {
                    let mut at = 0;
                    for p in parts {
                        let len = self.slots[p.0].data.len();
                        self.accum(tmp, *p, |_, gp| add_into(gp, &g[at..at + len], 1.0));
                        at += len;
                    }
                } else {
                    let rows = self.slots[parts[0].0].shape[0];
                    let total_cols = self.slots[i].shape[1];
                    let mut at = 0;
                    for p in parts {
                        let c = self.slots[p.0].shape[1];
                        self.accum(tmp, *p, |_, gp| {
                            for rr in 0..rows {
                                add_into(
                                    &mut gp[rr * c..(rr + 1) * c],
                                    &g[rr * total_cols + at..rr * total_cols + at + c],
                                    1.0,
                                );
                            }
                        });
                        at += c;
                    }
                }
            }
            Node::SliceCols { x, start, len } => {
                let (rows, cols) = dims2(&self.slots[x.0].shape);
                self.accum(tmp, *x, |_, gx| {
                    for rr in 0..rows {
                        add_into(
                            &mut gx[rr * cols + start..rr * cols + start + len],
                            &g[rr * len..(rr + 1) * len],
                            1.0,
                        );
                    }
                });
            }
            Node::GatherRows { x, idx } => {
                let cols = self.slots[x.0].shape[1];
                self.accum(tmp, *x, |_, gx| {
                    for (k, &src) in idx.iter().enumerate() {
                        add_into(
                            &mut gx[src * cols..(src + 1) * cols],
                            &g[k * cols..(k + 1) * cols],
                            1.0,
                        );
                    }
                });
            }
            Node::InterpRows { x, coords } => {
                let (rows, cols) = dims2(&self.slots[x.0].shape);
                self.accum(tmp, *x, |_, gx| {
                    for (k, &c) in coords.iter().enumerate() {
                        let (i0, i1, f) = interp_bracket(c, rows);
                        let grow = &g[k * cols..(k + 1) * cols];
                        if f == 0.0 {
                            add_into(&mut gx[i0 * cols..(i0 + 1) * cols], grow, 1.0);
                        } else {
                            add_into(&mut gx[i0 * cols..(i0 + 1) * cols], grow, 1.0 - f);
                            add_into(&mut gx[i1 * cols..(i1 + 1) * cols], grow, f);
                        }
                    }
                });
            }
            Node::Reshape { x } => {
                self.accum(tmp, *x, |_, gx| add_into(gx, g, 1.0));
            }
            Node::BatchNorm {
                x,
                gamma,
                beta,
                eps,
                train,
                mean,
                var,
            } => {
                let (rows, cols) = dims2(&self.slots[x.0].shape);
                let xv = &self.slots[x.0].data;
                let gv = &self.slots[gamma.0].data;
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
                let xhat = |rr: usize, c: usize| (xv[rr * cols + c] - mean[c]) * inv_std[c];
                self.accum(tmp, *beta, |_, gb| {
                    for rr in 0..rows {
                        add_into(gb, &g[rr * cols..(rr + 1) * cols], 1.0);
                    }
                });
                self.accum(tmp, *gamma, |_, gg| {
                    for rr in 0..rows {
                        for c in 0..cols {
                            gg[c] += g[rr * cols + c] * xhat(rr, c);
                        }
                    }
                });
                if *train {
                    // Through the batch statistics.
                    let n = rows as f64;
                    let mut sum_dxhat = vec![0.0; cols];
                    let mut sum_dxhat_xhat = vec![0.0; cols];
                    for rr in 0..rows {
                        for c in 0..cols {
                            let dxhat = g[rr * cols + c] * gv[c];
                            sum_dxhat[c] += dxhat;
                            sum_dxhat_xhat[c] += dxhat * xhat(rr, c);
                        }
                    }
                    self.accum(tmp, *x, |_, gx| {
                        for rr in 0..rows {
                            for c in 0..cols {
                                let dxhat = g[rr * cols + c] * gv[c];
                                gx[rr * cols + c] += inv_std[c] / n
                                    * (n * dxhat - sum_dxhat[c] - xhat(rr, c) * sum_dxhat_xhat[c]);
                            }
                        }
                    });
                } else {
                    self.accum(tmp, *x, |_, gx| {
                        for rr in 0..rows {
                            for c in 0..cols {
                                gx[rr * cols + c] += g[rr * cols + c] * gv[c] * inv_std[c];
                            }
                        }
                    });
                }
            }
            Node::SoftmaxCrossEntropy { logits, target } => {
                let z = &self.slots[logits.0].data;
                let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = z.iter().map(|v| (v - m).exp()).sum();
                self.accum(tmp, *logits, |_, gz| {
                    for (k, o) in gz.iter_mut().enumerate() {
                        let p = (z[k] - m).exp() / sum;
                        let onehot = if k == *target { 1.0 } else { 0.0 };
                        *o += g[0] * (p - onehot);
                    }
                });
            }
            Node::SmoothL1 { x, target } => {
                let xv = &self.slots[x.0].data;
                self.accum(tmp, *x, |_, gx| {
                    for (k, o) in gx.iter_mut().enumerate() {
                        let d = xv[k] - target[k];
                        *o += g[k] * d.clamp(-1.0, 1.0);
                    }
                });
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn conv1d_backward(
        &self,
        g: &[f64],
        x: Var,
        w: Var,
        bias: Var,
        dilation: usize,
        stride: usize,
        padding: Padding,
        tmp: &mut [Option<Vec<f64>>],
    ) {
        let (m, c_in) = dims2(&self.slots[x.0].shape);
        let ws = &self.slots[w.0].shape;
        let (k, c_out) = (ws[0], ws[2]);
        let out_len = g.len() / c_out;
        let xv = &self.slots[x.0].data;
        let wv = &self.slots[w.0].data;

        self.accum(tmp, bias, |_, gb| {
            for j in 0..out_len {
                add_into(gb, &g[j * c_out..(j + 1) * c_out], 1.0);
            }
        });
        self.accum(tmp, x, |_, gx| {
            for j in 0..out_len {
                let grow = &g[j * c_out..(j + 1) * c_out];
                for kp in 0..k {
                    let Some(t) = conv_tap(j, kp, k, m, dilation, stride, padding) else {
                        continue;
                    };
                    let wk = &wv[kp * c_in * c_out..(kp + 1) * c_in * c_out];
                    let gxrow = &mut gx[t * c_in..(t + 1) * c_in];
                    for (c, o) in gxrow.iter_mut().enumerate() {
                        let wrow = &wk[c * c_out..(c + 1) * c_out];
                        *o += grow.iter().zip(wrow).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
        });
        self.accum(tmp, w, |_, gw| {
            for j in 0..out_len {
                let grow = &g[j * c_out..(j + 1) * c_out];
                for kp in 0..k {
                    let Some(t) = conv_tap(j, kp, k, m, dilation, stride, padding) else {
                        continue;
                    };
                    let xrow = &xv[t * c_in..(t + 1) * c_in];
                    let gwk = &mut gw[kp * c_in * c_out..(kp + 1) * c_in * c_out];
                    for (c, &xval) in xrow.iter().enumerate() {
                        add_into(&mut gwk[c * c_out..(c + 1) * c_out], grow, xval);
                    }
                }
            }
        });
    }
}

fn dims2(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        1 => (1, shape[0]),
        _ => (shape[0], shape[1]),
    }
}

fn add_into(dst: &mut [f64], src: &[f64], scale: f64) {
    if scale == 1.0 {
        dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
    } else {
        dst.iter_mut().zip(src).for_each(|(d, s)| *d += scale * s);
    }
}
