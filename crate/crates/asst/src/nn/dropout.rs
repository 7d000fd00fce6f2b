//! Range dropout.
//!
//! Note the rate convention: following the source architecture, `rate` is the
//! KEEP probability (an element survives with probability `rate` and the
//! survivors are rescaled by `1/rate`), not the drop probability. Range
//! dropout draws the keep probability itself uniformly from `[rate, 1]` once
//! per call, so the regularization strength varies between iterations while
//! the expectation stays unchanged.

use super::Ctx;
use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use rand::Rng;

#[derive(Debug, Clone, Copy)]
pub struct RangeDropout {
    /// Floor of the keep probability, in (0, 1].
    pub rate: f64,
}

impl RangeDropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate <= 1.0) {
            return Err(Error::config(format!(
                "range dropout keep-probability floor must be in (0,1], got {rate}"
            )));
        }
        Ok(RangeDropout { rate })
    }

    /// Identity at inference time and for rate 1; otherwise samples one keep
    /// probability for the call and an independent mask per element.
    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        if !ctx.train || self.rate == 1.0 {
            return Ok(x);
        }
        let keep = self.rate + (1.0 - self.rate) * ctx.rng.gen::<f64>();
        let n = ctx.tape.values(x).len();
        let inv = 1.0 / keep;
        let mask: Vec<f64> = (0..n)
            .map(|_| if ctx.rng.gen::<f64>() < keep { inv } else { 0.0 })
            .collect();
        apply_mask(&mut ctx.tape, x, &mask)
    }
}

/// Multiply by a precomputed dropout mask (entries are 0 or 1/keep). Split
/// out so gradient checks can run at a fixed mask.
pub fn apply_mask(tape: &mut Tape, x: Var, mask: &[f64]) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    let m = tape.constant(shape, mask.to_vec())?;
    tape.mul(x, m)
}
