//! Tape construction: recorded ops and their forward kernels.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Handle to a value on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Padding scheme for 1-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding; output length is ceil(m / stride). Requires odd kernels.
    Same,
    /// No padding; output length is (m - (k-1)*dilation - 1) / stride + 1.
    Valid,
}

/// One recorded operation. Saved fields are what backward needs.
#[derive(Debug)]
pub(crate) enum Node {
    Leaf,
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    /// scale * x + offset, elementwise with scalar constants.
    Affine { x: Var, scale: f64 },
    Sigmoid { x: Var },
    Tanh { x: Var },
    Relu { x: Var },
    Exp { x: Var },
    Log { x: Var },
    /// a[p×q] · b[q×r] -> [p×r]
    Matmul { a: Var, b: Var },
    /// aᵀ[q×p] · b[q×r] -> [p×r]
    MatmulTa { a: Var, b: Var },
    /// a[p×q] · bᵀ[r×q] -> [p×r]
    MatmulTb { a: Var, b: Var },
    Conv1d {
        x: Var,
        w: Var,
        bias: Var,
        dilation: usize,
        stride: usize,
        padding: Padding,
    },
    Softmax { x: Var, axis: usize },
    SumAll { x: Var },
    /// [m×C] -> [1×C], mean over rows.
    MeanRows { x: Var },
    Concat { parts: Vec<Var>, axis: usize },
    SliceCols { x: Var, start: usize, len: usize },
    GatherRows { x: Var, idx: Vec<usize> },
    /// Row interpolation at clamped fractional coordinates.
    InterpRows { x: Var, coords: Vec<f64> },
    Reshape { x: Var },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
        train: bool,
        /// Statistics used for normalization (batch stats when training,
        /// running stats otherwise).
        mean: Vec<f64>,
        var: Vec<f64>,
    },
    /// -log softmax(logits)[target], fused for stability.
    SoftmaxCrossEntropy { logits: Var, target: usize },
    /// Elementwise smooth-L1 of (x - target) against a constant target.
    SmoothL1 { x: Var, target: Vec<f64> },
}

#[derive(Debug)]
pub(crate) struct Slot {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub needs_grad: bool,
}

/// Wengert tape: value arena plus the node per value that produced it.
#[derive(Debug, Default)]
pub struct Tape {
    pub(crate) slots: Vec<Slot>,
    pub(crate) nodes: Vec<Node>,
    /// Accumulated leaf gradients, filled by `backward`.
    pub(crate) acc: Vec<Option<Vec<f64>>>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub(crate) fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, node: Node, needs_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.slots.push(Slot {
            shape,
            data,
            needs_grad,
        });
        self.nodes.push(node);
        self.acc.push(None);
        Var(self.slots.len() - 1)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.slots[v.0].shape
    }

    pub fn values(&self, v: Var) -> &[f64] {
        &self.slots[v.0].data
    }

    pub fn value_scalar(&self, v: Var) -> f64 {
        self.slots[v.0].data[0]
    }

    /// Accumulated gradient of a tracked leaf after `backward`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.acc[v.0].as_deref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn rows_cols(&self, v: Var) -> Result<(usize, usize)> {
        let s = &self.slots[v.0].shape;
        match s.len() {
            1 => Ok((1, s[0])),
            2 => Ok((s[0], s[1])),
            _ => Err(Error::contract(format!("expected 1-D or 2-D value, got {:?}", s))),
        }
    }

    // ----- leaves --------------------------------------------------------

    /// Untracked constant.
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::contract("constant shape/value length mismatch"));
        }
        Ok(self.push(shape, data, Node::Leaf, false))
    }

    pub fn constant_from(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.values().to_vec(), Node::Leaf, false)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.push(vec![1], vec![v], Node::Leaf, false)
    }

    /// Tracked leaf: gradients accumulate for it during `backward`.
    pub fn leaf(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::contract("leaf shape/value length mismatch"));
        }
        Ok(self.push(shape, data, Node::Leaf, true))
    }

    /// Lift a tensor onto the tape, tracking it iff `requires_grad` is set.
    pub fn lift(&mut self, t: &Tensor) -> Var {
        self.push(
            t.shape().to_vec(),
            t.values().to_vec(),
            Node::Leaf,
            t.requires_grad(),
        )
    }

    // ----- elementwise ---------------------------------------------------

    fn binary_check(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.slots[a.0].shape != self.slots[b.0].shape {
            return Err(Error::shape(
                format!("{what} operands"),
                &self.slots[a.0].shape,
                &self.slots[b.0].shape,
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_check(a, b, "add")?;
        let data = self.slots[a.0]
            .data
            .iter()
            .zip(&self.slots[b.0].data)
            .map(|(x, y)| x + y)
            .collect();
        let needs = self.slots[a.0].needs_grad || self.slots[b.0].needs_grad;
        Ok(self.push(self.slots[a.0].shape.clone(), data, Node::Add { a, b }, needs))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_check(a, b, "sub")?;
        let data = self.slots[a.0]
            .data
            .iter()
            .zip(&self.slots[b.0].data)
            .map(|(x, y)| x - y)
            .collect();
        let needs = self.slots[a.0].needs_grad || self.slots[b.0].needs_grad;
        Ok(self.push(self.slots[a.0].shape.clone(), data, Node::Sub { a, b }, needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_check(a, b, "mul")?;
        let data = self.slots[a.0]
            .data
            .iter()
            .zip(&self.slots[b.0].data)
            .map(|(x, y)| x * y)
            .collect();
        let needs = self.slots[a.0].needs_grad || self.slots[b.0].needs_grad;
        Ok(self.push(self.slots[a.0].shape.clone(), data, Node::Mul { a, b }, needs))
    }

    /// scale * x + offset.
    pub fn affine(&mut self, x: Var, scale: f64, offset: f64) -> Var {
        let data = self.slots[x.0].data.iter().map(|v| scale * v + offset).collect();
        let needs = self.slots[x.0].needs_grad;
        self.push(self.slots[x.0].shape.clone(), data, Node::Affine { x, scale }, needs)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, node: Node) -> Var {
        let data = self.slots[x.0].data.iter().map(|v| f(*v)).collect();
        let needs = self.slots[x.0].needs_grad;
        self.push(self.slots[x.0].shape.clone(), data, node, needs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Node::Sigmoid { x })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Node::Tanh { x })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Node::Relu { x })
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Node::Exp { x })
    }

    pub fn log(&mut self, x: Var) -> Result<Var> {
        if let Some(v) = self.slots[x.0].data.iter().find(|v| **v <= 0.0) {
            return Err(Error::domain(format!("log of non-positive value {v}")));
        }
        Ok(self.unary(x, f64::ln, Node::Log { x }))
    }

    // ----- linear algebra --------------------------------------------------

    /// a[p×q] · b[q×r].
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (p, q) = self.rows_cols(a)?;
        let (q2, r) = self.rows_cols(b)?;
        if q != q2 {
            return Err(Error::shape(
                "matmul inner dimensions",
                &self.slots[a.0].shape,
                &self.slots[b.0].shape,
            ));
        }
        let mut out = vec![0.0; p * r];
        let av = &self.slots[a.0].data;
        let bv = &self.slots[b.0].data;
        for i in 0..p {
            let arow = &av[i * q..(i + 1) * q];
            let orow = &mut out[i * r..(i + 1) * r];
            for (kq, &aik) in arow.iter().enumerate() {
                let brow = &bv[kq * r..(kq + 1) * r];
                for (o, bb) in orow.iter_mut().zip(brow) {
                    *o += aik * bb;
                }
            }
        }
        let needs = self.slots[a.0].needs_grad || self.slots[b.0].needs_grad;
        Ok(self.push(vec![p, r], out, Node::Matmul { a, b }, needs))
    }

    /// aᵀ · b where a is [q×p] and b is [q×r].
    pub fn matmul_ta(&mut self, a: Var, b: Var) -> Result<Var> {
        let (q, p) = self.rows_cols(a)?;
        let (q2, r) = self.rows_cols(b)?;
        if q != q2 {
            return Err(Error::shape(
                "matmul_ta shared dimension",
                &self.slots[a.0].shape,
                &self.slots[b.0].shape,
            ));
        }
        let mut out = vec![0.0; p * r];
        let av = &self.slots[a.0].data;
        let bv = &self.slots[b.0].data;
        for kq in 0..q {
            let arow = &av[kq * p..(kq + 1) * p];
            let brow = &bv[kq * r..(kq + 1) * r];
            for (i, &aki) in arow.iter().enumerate() {
                let orow = &mut out[i * r..(i + 1) * r];
                for (o, bb) in orow.iter_mut().zip(brow) {
                    *o += aki * bb;
                }
            }
        }
        let needs = self.slots[a.0].needs_grad || self.slots[b.0].needs_grad;
        Ok(self.push(vec![p, r], out, Node::MatmulTa { a, b }, needs))
    }

    /// a · bᵀ where a is [p×q] and b is [r×q].
    pub fn matmul_tb(&mut self, a: Var, b: Var) -> Result<Var> {
        let (p, q) = self.rows_cols(a)?;
        let (r, q2) = self.rows_cols(b)?;
        if q != q2 {
            return Err(Error::shape(
                "matmul_tb shared dimension",
                &self.slots[a.0].shape,
                &self.slots[b.0].shape,
            ));
        }
        let mut out = vec![0.0; p * r];
        let av = &self.slots[a.0].data;
        let bv = &self.slots[b.0].data;
        for i in 0..p {
            let arow = &av[i * q..(i + 1) * q];
            let orow = &mut out[i * r..(i + 1) * r];
            for (j, o) in orow.iter_mut().enumerate() {
                let brow = &bv[j * q..(j + 1) * q];
                *o = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
            }
        }
        let needs = self.slots[a.0].needs_grad || self.slots[b.0].needs_grad;
        Ok(self.push(vec![p, r], out, Node::MatmulTb { a, b }, needs))
    }

    // ----- convolution ----------------------------------------------------

    /// Cross-correlation over time: x[m×C_in], w[k×C_in×C_out], bias[C_out].
    pub fn conv1d(
        &mut self,
        x: Var,
        w: Var,
        bias: Var,
        dilation: usize,
        stride: usize,
        padding: Padding,
    ) -> Result<Var> {
        let (m, c_in) = self.rows_cols(x)?;
        let ws = self.slots[w.0].shape.clone();
        if ws.len() != 3 || ws[1] != c_in {
            return Err(Error::shape("conv1d kernel vs input", &ws, &self.slots[x.0].shape));
        }
        let (k, c_out) = (ws[0], ws[2]);
        if self.slots[bias.0].data.len() != c_out {
            return Err(Error::shape(
                "conv1d bias vs kernel",
                &self.slots[bias.0].shape,
                &ws,
            ));
        }
        if stride == 0 || dilation == 0 {
            return Err(Error::config("conv1d stride and dilation must be >= 1"));
        }
        let out_len = match padding {
            Padding::Same => {
                if k % 2 == 0 {
                    return Err(Error::config(format!(
                        "same-padded conv1d requires an odd kernel, got {k}"
                    )));
                }
                m.div_ceil(stride)
            }
            Padding::Valid => {
                let span = (k - 1) * dilation + 1;
                if m < span {
                    return Err(Error::contract(format!(
                        "valid conv1d needs at least {span} frames, got {m}"
                    )));
                }
                (m - span) / stride + 1
            }
        };

        let xv = &self.slots[x.0].data;
        let wv = &self.slots[w.0].data;
        let bv = &self.slots[bias.0].data;
        let mut out = vec![0.0; out_len * c_out];
        for j in 0..out_len {
            let orow = &mut out[j * c_out..(j + 1) * c_out];
            orow.copy_from_slice(bv);
            for kp in 0..k {
                let Some(t) = conv_tap(j, kp, k, m, dilation, stride, padding) else {
                    continue;
                };
                let xrow = &xv[t * c_in..(t + 1) * c_in];
                let wk = &wv[kp * c_in * c_out..(kp + 1) * c_in * c_out];
                for (c, &xval) in xrow.iter().enumerate() {
                    let wrow = &wk[c * c_out..(c + 1) * c_out];
                    for (o, ww) in orow.iter_mut().zip(wrow) {
                        *o += xval * ww;
                    }
                }
            }
        }
        let needs = self.slots[x.0].needs_grad
            || self.slots[w.0].needs_grad
            || self.slots[bias.0].needs_grad;
        Ok(self.push(
            vec![out_len, c_out],
            out,
            Node::Conv1d {
                x,
                w,
                bias,
                dilation,
                stride,
                padding,
            },
            needs,
        ))
    }

    // ----- shape manipulation ----------------------------------------------

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        if shape.iter().product::<usize>() != self.slots[x.0].data.len() {
            return Err(Error::shape("reshape", &self.slots[x.0].shape, &shape));
        }
        let data = self.slots[x.0].data.clone();
        let needs = self.slots[x.0].needs_grad;
        Ok(self.push(shape, data, Node::Reshape { x }, needs))
    }

    /// Concatenate along `axis` (0 or 1). All parts must share the other axis.
    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::contract("concat of zero parts"));
        }
        let dims: Vec<(usize, usize)> = parts
            .iter()
            .map(|p| self.rows_cols(*p))
            .collect::<Result<_>>()?;
        let needs = parts.iter().any(|p| self.slots[p.0].needs_grad);
        match axis {
            0 => {
                let cols = dims[0].1;
                if dims.iter().any(|d| d.1 != cols) {
                    return Err(Error::contract("concat axis 0 requires equal column counts"));
                }
                let rows: usize = dims.iter().map(|d| d.0).sum();
                let mut data = Vec::with_capacity(rows * cols);
                for p in parts {
                    data.extend_from_slice(&self.slots[p.0].data);
                }
                Ok(self.push(
                    vec![rows, cols],
                    data,
                    Node::Concat {
                        parts: parts.to_vec(),
                        axis,
                    },
                    needs,
                ))
            }
            1 => {
                let rows = dims[0].0;
                if dims.iter().any(|d| d.0 != rows) {
                    return Err(Error::contract("concat axis 1 requires equal row counts"));
                }
                let cols: usize = dims.iter().map(|d| d.1).sum();
                let mut data = vec![0.0; rows * cols];
                let mut at = 0;
                for (p, (_, c)) in parts.iter().zip(&dims) {
                    let pv = &self.slots[p.0].data;
                    for r in 0..rows {
                        data[r * cols + at..r * cols + at + c]
                            .copy_from_slice(&pv[r * c..(r + 1) * c]);
                    }
                    at += c;
                }
                Ok(self.push(
                    vec![rows, cols],
                    data,
                    Node::Concat {
                        parts: parts.to_vec(),
                        axis,
                    },
                    needs,
                ))
            }
            _ => Err(Error::contract("concat supports axis 0 or 1")),
        }
    }

    /// Columns [start, start+len) of a 2-D value.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (rows, cols) = self.rows_cols(x)?;
        if start + len > cols {
            return Err(Error::contract(format!(
                "slice_cols [{start}, {}) out of {cols} columns",
                start + len
            )));
        }
        let xv = &self.slots[x.0].data;
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&xv[r * cols + start..r * cols + start + len]);
        }
        let needs = self.slots[x.0].needs_grad;
        Ok(self.push(vec![rows, len], data, Node::SliceCols { x, start, len }, needs))
    }

    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let (rows, cols) = self.rows_cols(x)?;
        if let Some(bad) = idx.iter().find(|i| **i >= rows) {
            return Err(Error::contract(format!(
                "gather_rows index {bad} out of {rows} rows"
            )));
        }
        let xv = &self.slots[x.0].data;
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            data.extend_from_slice(&xv[i * cols..(i + 1) * cols]);
        }
        let needs = self.slots[x.0].needs_grad;
        Ok(self.push(
            vec![idx.len(), cols],
            data,
            Node::GatherRows {
                x,
                idx: idx.to_vec(),
            },
            needs,
        ))
    }

    /// Linear interpolation of rows at fractional coordinates, clamped to
    /// [0, rows-1]. Integer coordinates copy the source row bit-exactly.
    pub fn interp_rows(&mut self, x: Var, coords: &[f64]) -> Result<Var> {
        let (rows, cols) = self.rows_cols(x)?;
        if rows == 0 {
            return Err(Error::contract("interp_rows on empty input"));
        }
        let xv = &self.slots[x.0].data;
        let mut data = Vec::with_capacity(coords.len() * cols);
        for &c in coords {
            let (i0, i1, f) = interp_bracket(c, rows);
            if f == 0.0 {
                data.extend_from_slice(&xv[i0 * cols..(i0 + 1) * cols]);
            } else {
                let r0 = &xv[i0 * cols..(i0 + 1) * cols];
                let r1 = &xv[i1 * cols..(i1 + 1) * cols];
                data.extend(r0.iter().zip(r1).map(|(a, b)| (1.0 - f) * a + f * b));
            }
        }
        let needs = self.slots[x.0].needs_grad;
        Ok(self.push(
            vec![coords.len(), cols],
            data,
            Node::InterpRows {
                x,
                coords: coords.to_vec(),
            },
            needs,
        ))
    }

    // ----- reductions and normalizations ------------------------------------

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s: f64 = self.slots[x.0].data.iter().sum();
        let needs = self.slots[x.0].needs_grad;
        self.push(vec![1], vec![s], Node::SumAll { x }, needs)
    }

    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (rows, cols) = self.rows_cols(x)?;
        if rows == 0 {
            return Err(Error::contract("mean_rows on empty input"));
        }
        let xv = &self.slots[x.0].data;
        let mut out = vec![0.0; cols];
        for r in 0..rows {
            for (o, v) in out.iter_mut().zip(&xv[r * cols..(r + 1) * cols]) {
                *o += v;
            }
        }
        let inv = 1.0 / rows as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        let needs = self.slots[x.0].needs_grad;
        Ok(self.push(vec![1, cols], out, Node::MeanRows { x }, needs))
    }

    /// Softmax along `axis` of a 1-D or 2-D value, with max subtraction.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (rows, cols) = self.rows_cols(x)?;
        let rank = self.slots[x.0].shape.len();
        if axis >= rank.max(1) {
            return Err(Error::contract(format!(
                "softmax axis {axis} invalid for shape {:?}",
                self.slots[x.0].shape
            )));
        }
        let xv = &self.slots[x.0].data;
        let mut out = vec![0.0; xv.len()];
        // Axis 1 on 2-D (or axis 0 on 1-D): normalize each row.
        // Axis 0 on 2-D: normalize each column.
        let row_wise = rank == 1 || axis == 1;
        if row_wise {
            for r in 0..rows {
                softmax_slice(&xv[r * cols..(r + 1) * cols], &mut out[r * cols..(r + 1) * cols]);
            }
        } else {
            let mut col = vec![0.0; rows];
            let mut colo = vec![0.0; rows];
            for c in 0..cols {
                for r in 0..rows {
                    col[r] = xv[r * cols + c];
                }
                softmax_slice(&col, &mut colo);
                for r in 0..rows {
                    out[r * cols + c] = colo[r];
                }
            }
        }
        let needs = self.slots[x.0].needs_grad;
        Ok(self.push(self.slots[x.0].shape.clone(), out, Node::Softmax { x, axis }, needs))
    }

    /// Batch normalization over rows of x[rows×C].
    ///
    /// In training mode the batch statistics are computed here and also
    /// returned so the caller can fold them into running statistics. In
    /// inference mode the provided running statistics are used as constants.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
        running: Option<(&[f64], &[f64])>,
    ) -> Result<(Var, Option<(Vec<f64>, Vec<f64>)>)> {
        let (rows, cols) = self.rows_cols(x)?;
        if self.slots[gamma.0].data.len() != cols || self.slots[beta.0].data.len() != cols {
            return Err(Error::shape(
                "batch_norm scale/shift vs channels",
                &self.slots[gamma.0].shape,
                &self.slots[x.0].shape,
            ));
        }
        let train = running.is_none();
        let (mean, var) = match running {
            Some((m, v)) => {
                if m.len() != cols || v.len() != cols {
                    return Err(Error::contract("batch_norm running stats length mismatch"));
                }
                (m.to_vec(), v.to_vec())
            }
            None => {
                if rows < 2 {
                    return Err(Error::contract(
                        "batch_norm training mode needs at least 2 elements per channel",
                    ));
                }
                let xv = &self.slots[x.0].data;
                let mut mean = vec![0.0; cols];
                for r in 0..rows {
                    for (m, v) in mean.iter_mut().zip(&xv[r * cols..(r + 1) * cols]) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= rows as f64);
                let mut var = vec![0.0; cols];
                for r in 0..rows {
                    for c in 0..cols {
                        let d = xv[r * cols + c] - mean[c];
                        var[c] += d * d;
                    }
                }
                var.iter_mut().for_each(|v| *v /= rows as f64);
                (mean, var)
            }
        };
        let xv = &self.slots[x.0].data;
        let gv = &self.slots[gamma.0].data;
        let bv = &self.slots[beta.0].data;
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut out = vec![0.0; xv.len()];
        for r in 0..rows {
            for c in 0..cols {
                let xhat = (xv[r * cols + c] - mean[c]) * inv_std[c];
                out[r * cols + c] = gv[c] * xhat + bv[c];
            }
        }
        let needs = self.slots[x.0].needs_grad
            || self.slots[gamma.0].needs_grad
            || self.slots[beta.0].needs_grad;
        let batch_stats = train.then(|| (mean.clone(), var.clone()));
        let v = self.push(
            self.slots[x.0].shape.clone(),
            out,
            Node::BatchNorm {
                x,
                gamma,
                beta,
                eps,
                train,
                mean,
                var,
            },
            needs,
        );
        Ok((v, batch_stats))
    }

    // ----- losses -----------------------------------------------------------

    /// -log softmax(logits)[target]; logits are flattened.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let k = self.slots[logits.0].data.len();
        if target >= k {
            return Err(Error::contract(format!(
                "cross-entropy target {target} out of {k} classes"
            )));
        }
        let z = &self.slots[logits.0].data;
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = z.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
        let loss = lse - z[target];
        let needs = self.slots[logits.0].needs_grad;
        Ok(self.push(
            vec![1],
            vec![loss],
            Node::SoftmaxCrossEntropy { logits, target },
            needs,
        ))
    }

    /// Elementwise smooth-L1 of (x - target): 0.5 d^2 for |d|<1 else |d|-0.5.
    pub fn smooth_l1(&mut self, x: Var, target: &[f64]) -> Result<Var> {
        if target.len() != self.slots[x.0].data.len() {
            return Err(Error::contract("smooth_l1 target length mismatch"));
        }
        let data: Vec<f64> = self.slots[x.0]
            .data
            .iter()
            .zip(target)
            .map(|(p, t)| {
                let d = p - t;
                if d.abs() < 1.0 {
                    0.5 * d * d
                } else {
                    d.abs() - 0.5
                }
            })
            .collect();
        let needs = self.slots[x.0].needs_grad;
        Ok(self.push(
            self.slots[x.0].shape.clone(),
            data,
            Node::SmoothL1 {
                x,
                target: target.to_vec(),
            },
            needs,
        ))
    }
}

/// Input tap position for output j and kernel tap kp, or None when the tap
/// falls in zero padding.
pub(crate) fn conv_tap(
    j: usize,
    kp: usize,
    k: usize,
    m: usize,
    dilation: usize,
    stride: usize,
    padding: Padding,
) -> Option<usize> {
    let t = match padding {
        Padding::Same => {
            let center = (j * stride) as isize;
            center + (kp as isize - (k / 2) as isize) * dilation as isize
        }
        Padding::Valid => (j * stride + kp * dilation) as isize,
    };
    (t >= 0 && (t as usize) < m).then_some(t as usize)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_slice(x: &[f64], out: &mut [f64]) {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, v) in out.iter_mut().zip(x) {
        *o = (v - m).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Bracketing rows and fraction for a clamped coordinate.
pub(crate) fn interp_bracket(coord: f64, rows: usize) -> (usize, usize, f64) {
    let c = coord.clamp(0.0, (rows - 1) as f64);
    let i0 = c.floor() as usize;
    if i0 + 1 >= rows {
        (rows - 1, rows - 1, 0.0)
    } else {
        let f = c - i0 as f64;
        if f == 0.0 {
            (i0, i0, 0.0)
        } else {
            (i0, i0 + 1, f)
        }
    }
}
