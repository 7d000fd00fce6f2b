//! Align-corners linear resizing along the time axis.

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};

/// Resample x[m×C] to `target` rows. Output position j reads source
/// coordinate j·(m−1)/(M−1); endpoints are preserved bit-exactly. A single
/// source or target row degenerates to reading coordinate 0.
pub fn linear_interp_resize(tape: &mut Tape, x: Var, target: usize) -> Result<Var> {
    let shape = tape.shape(x);
    if shape.len() != 2 {
        return Err(Error::contract(format!(
            "linear_interp_resize expects [m×C], got {shape:?}"
        )));
    }
    let m = shape[0];
    if m == 0 || target == 0 {
        return Err(Error::contract("linear_interp_resize needs m >= 1 and M >= 1"));
    }
    let coords: Vec<f64> = if target == 1 || m == 1 {
        vec![0.0; target]
    } else {
        let scale = (m - 1) as f64 / (target - 1) as f64;
        (0..target).map(|j| j as f64 * scale).collect()
    };
    tape.interp_rows(x, &coords)
}
