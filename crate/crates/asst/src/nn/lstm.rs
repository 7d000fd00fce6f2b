//! LSTM cell and the residual bidirectional layer used by the language
//! subnet.

use super::{glu, Conv1dLayer, Ctx, ParamId, ParamStore};
use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;

/// Parameters of one LSTM direction. Gates are packed (i, f, g, o) along the
/// trailing axis; the forget-gate bias starts at 1.0.
#[derive(Debug, Clone)]
pub struct LstmParams {
    pub w_in: ParamId,
    pub w_rec: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl LstmParams {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let w_in = store.add(
            format!("{name}.w_in"),
            Tensor::glorot_uniform(vec![input, 4 * hidden], input, 4 * hidden, rng),
            true,
        );
        let w_rec = store.add(
            format!("{name}.w_rec"),
            Tensor::glorot_uniform(vec![hidden, 4 * hidden], hidden, 4 * hidden, rng),
            true,
        );
        let mut b = Tensor::zeros(vec![4 * hidden]);
        b.values_mut()[hidden..2 * hidden].fill(1.0);
        let bias = store.add(format!("{name}.bias"), b, true);
        LstmParams {
            w_in,
            w_rec,
            bias,
            hidden,
        }
    }

    /// Run the cell over a sequence, right-to-left when `reverse` is set.
    /// The output keeps sequence order: row t is the state emitted at token t.
    pub fn forward_seq(&self, ctx: &mut Ctx, x: Var, reverse: bool) -> Result<Var> {
        let n = ctx.tape.shape(x)[0];
        if n == 0 {
            return Err(Error::contract("lstm over an empty sequence"));
        }
        let h = self.hidden;
        let w_in = ctx.param(self.w_in);
        let w_rec = ctx.param(self.w_rec);
        let bias = ctx.param(self.bias);
        let bias = ctx.tape.reshape(bias, vec![1, 4 * h])?;

        let mut hidden = ctx.tape.constant(vec![1, h], vec![0.0; h])?;
        let mut cell = ctx.tape.constant(vec![1, h], vec![0.0; h])?;
        let mut states: Vec<Option<Var>> = vec![None; n];
        let order: Vec<usize> = if reverse {
            (0..n).rev().collect()
        } else {
            (0..n).collect()
        };
        for t in order {
            let x_t = ctx.tape.gather_rows(x, &[t])?;
            let gi = ctx.tape.matmul(x_t, w_in)?;
            let gr = ctx.tape.matmul(hidden, w_rec)?;
            let sum = ctx.tape.add(gi, gr)?;
            let gates = ctx.tape.add(sum, bias)?;
            let i_raw = ctx.tape.slice_cols(gates, 0, h)?;
            let f_raw = ctx.tape.slice_cols(gates, h, h)?;
            let g_raw = ctx.tape.slice_cols(gates, 2 * h, h)?;
            let o_raw = ctx.tape.slice_cols(gates, 3 * h, h)?;
            let i = ctx.tape.sigmoid(i_raw);
            let f = ctx.tape.sigmoid(f_raw);
            let g = ctx.tape.tanh(g_raw);
            let o = ctx.tape.sigmoid(o_raw);
            let keep = ctx.tape.mul(f, cell)?;
            let write = ctx.tape.mul(i, g)?;
            cell = ctx.tape.add(keep, write)?;
            let c_act = ctx.tape.tanh(cell);
            hidden = ctx.tape.mul(o, c_act)?;
            states[t] = Some(hidden);
        }
        let rows: Vec<Var> = states.into_iter().map(|s| s.unwrap()).collect();
        ctx.tape.concat(&rows, 0)
    }
}

/// One language-subnet layer: bidirectional LSTM, [fwd, bwd] concatenation,
/// kernel-1 convolution gated by a GLU back to the input width, plus the
/// shortcut from the layer input.
#[derive(Debug, Clone)]
pub struct BiLstmLayer {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
    pub proj: Conv1dLayer,
    pub width: usize,
}

impl BiLstmLayer {
    pub fn new(store: &mut ParamStore, name: &str, width: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let fwd = LstmParams::new(store, &format!("{name}.fwd"), width, hidden, rng);
        let bwd = LstmParams::new(store, &format!("{name}.bwd"), width, hidden, rng);
        let proj = Conv1dLayer::kernel1(store, &format!("{name}.proj"), 2 * hidden, 2 * width, rng);
        BiLstmLayer {
            fwd,
            bwd,
            proj,
            width,
        }
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let shape = ctx.tape.shape(x).to_vec();
        if shape.len() != 2 || shape[1] != self.width {
            return Err(Error::shape("bilstm layer input", &shape, &[0, self.width]));
        }
        let hf = self.fwd.forward_seq(ctx, x, false)?;
        let hb = self.bwd.forward_seq(ctx, x, true)?;
        let cat = ctx.tape.concat(&[hf, hb], 1)?;
        let pre = self.proj.forward(ctx, cat)?;
        let gated = glu(&mut ctx.tape, pre)?;
        ctx.tape.add(x, gated)
    }
}
