//! Linear map and 1-D convolution layers.

use super::{Ctx, ParamId, ParamStore};
use crate::autograd::{Padding, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;

/// Dense layer y = x·W + b for a single-row input.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    out_dim: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w = store.add(
            format!("{name}.w"),
            Tensor::glorot_uniform(vec![in_dim, out_dim], in_dim, out_dim, rng),
            true,
        );
        let b = store.add(format!("{name}.b"), Tensor::zeros(vec![out_dim]), true);
        Linear { w, b, out_dim }
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        if ctx.tape.shape(x).first() != Some(&1) {
            return Err(Error::contract(
                "Linear expects a single-row input; use a kernel-1 convolution for sequences",
            ));
        }
        let w = ctx.param(self.w);
        let b = ctx.param(self.b);
        let y = ctx.tape.matmul(x, w)?;
        let b = ctx.tape.reshape(b, vec![1, self.out_dim])?;
        ctx.tape.add(y, b)
    }
}

/// Cross-correlation over the time axis with shared weights per position.
#[derive(Debug, Clone)]
pub struct Conv1dLayer {
    pub w: ParamId,
    pub b: ParamId,
    pub dilation: usize,
    pub stride: usize,
    pub padding: Padding,
}

impl Conv1dLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        kernel: usize,
        c_in: usize,
        c_out: usize,
        dilation: usize,
        stride: usize,
        padding: Padding,
        rng: &mut impl Rng,
    ) -> Self {
        let w = store.add(
            format!("{name}.w"),
            Tensor::glorot_uniform(
                vec![kernel, c_in, c_out],
                kernel * c_in,
                kernel * c_out,
                rng,
            ),
            true,
        );
        let b = store.add(format!("{name}.b"), Tensor::zeros(vec![c_out]), true);
        Conv1dLayer {
            w,
            b,
            dilation,
            stride,
            padding,
        }
    }

    /// Kernel-1 projection, the building block used for lateral connections,
    /// attention projections and residual dimension adjustment.
    pub fn kernel1(store: &mut ParamStore, name: &str, c_in: usize, c_out: usize, rng: &mut impl Rng) -> Self {
        Conv1dLayer::new(store, name, 1, c_in, c_out, 1, 1, Padding::Same, rng)
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let w = ctx.param(self.w);
        let b = ctx.param(self.b);
        ctx.tape.conv1d(x, w, b, self.dilation, self.stride, self.padding)
    }
}
