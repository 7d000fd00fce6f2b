//! Neural building blocks on top of the autograd tape.

mod batchnorm;
mod dropout;
mod glu;
mod linear;
mod lstm;
mod params;
mod resize;

pub use batchnorm::BatchNorm;
pub use dropout::{apply_mask, RangeDropout};
pub use glu::glu;
pub use linear::{Conv1dLayer, Linear};
pub use lstm::{BiLstmLayer, LstmParams};
pub use params::{ParamId, ParamStore};
pub use resize::linear_interp_resize;

use crate::autograd::{Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;
use rand_chacha::ChaCha8Rng;

/// Deferred update of one batch-norm layer's running statistics, produced by
/// a training-mode forward pass and folded into the store by the trainer in
/// a deterministic order.
#[derive(Debug, Clone)]
pub struct BnUpdate {
    pub mean_id: ParamId,
    pub var_id: ParamId,
    pub momentum: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BnUpdate {
    pub fn apply(&self, store: &mut ParamStore) {
        let m = self.momentum;
        let rm = store.get_mut(self.mean_id).values_mut();
        for (r, b) in rm.iter_mut().zip(&self.mean) {
            *r = m * *r + (1.0 - m) * b;
        }
        let rv = store.get_mut(self.var_id).values_mut();
        for (r, b) in rv.iter_mut().zip(&self.var) {
            *r = m * *r + (1.0 - m) * b;
        }
    }
}

/// Attention matrix captured during a forward pass for inspection.
#[derive(Debug, Clone)]
pub struct AttentionRecord {
    pub layer: String,
    pub words: usize,
    pub frames: usize,
    pub values: Vec<f64>,
}

/// Per-sample forward context: the tape under construction, read-only
/// parameters, memoized parameter lifts and training-time state.
pub struct Ctx<'s> {
    pub tape: Tape,
    pub store: &'s ParamStore,
    pub train: bool,
    pub rng: ChaCha8Rng,
    pub bn_updates: Vec<BnUpdate>,
    /// When set, attention layers record their weight matrices here.
    pub attn_dump: Option<Vec<AttentionRecord>>,
    lifted: Vec<Option<Var>>,
}

impl<'s> Ctx<'s> {
    pub fn new(store: &'s ParamStore, train: bool, rng: ChaCha8Rng) -> Self {
        Ctx {
            tape: Tape::new(),
            store,
            train,
            rng,
            bn_updates: Vec::new(),
            attn_dump: None,
            lifted: vec![None; store.len()],
        }
    }

    /// Lift a parameter onto the tape, once per context. Repeated uses share
    /// the same tape variable, so gradients from all uses accumulate.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.lifted[id.0] {
            return v;
        }
        let v = self.tape.lift(self.store.get(id));
        self.lifted[id.0] = Some(v);
        v
    }

    pub fn constant_from(&mut self, t: &Tensor) -> Var {
        self.tape.constant_from(t)
    }

    /// Run backward from `loss` and collect this sample's parameter
    /// gradients, keyed by parameter id.
    pub fn backward_grads(&mut self, loss: Var) -> Result<Vec<(ParamId, Vec<f64>)>> {
        self.tape.backward(loss)?;
        let mut out = Vec::new();
        for (i, v) in self.lifted.iter().enumerate() {
            if let Some(v) = v {
                if let Some(g) = self.tape.grad(*v) {
                    out.push((ParamId(i), g.to_vec()));
                }
            }
        }
        Ok(out)
    }
}
