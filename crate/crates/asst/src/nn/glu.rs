//! Gated linear unit.

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};

/// GLU([q0, q1]) = q0 ⊙ σ(q1), where q0 and q1 are the first and second
/// halves of the trailing dimension.
pub fn glu(tape: &mut Tape, pre: Var) -> Result<Var> {
    let shape = tape.shape(pre).to_vec();
    let cols = *shape.last().ok_or_else(|| Error::contract("glu on a 0-d value"))?;
    if cols % 2 != 0 {
        return Err(Error::shape("glu needs an even trailing dimension", &shape, &shape));
    }
    let half = cols / 2;
    let q0 = tape.slice_cols(pre, 0, half)?;
    let q1 = tape.slice_cols(pre, half, half)?;
    let gate = tape.sigmoid(q1);
    tape.mul(q0, gate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_at_zero_halves() {
        let mut t = Tape::new();
        let pre = t.constant(vec![1, 4], vec![2.0, -4.0, 0.0, 0.0]).unwrap();
        let y = glu(&mut t, pre).unwrap();
        assert_eq!(t.values(y), &[1.0, -2.0]);
    }

    #[test]
    fn sigmoid_ln3_is_three_quarters() {
        let mut t = Tape::new();
        let pre = t.constant(vec![1, 2], vec![1.0, 3.0_f64.ln()]).unwrap();
        let y = glu(&mut t, pre).unwrap();
        assert!((t.values(y)[0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn zero_first_half_annihilates() {
        let mut t = Tape::new();
        let pre = t.constant(vec![1, 4], vec![0.0, 0.0, 3.0, -7.0]).unwrap();
        let y = glu(&mut t, pre).unwrap();
        assert_eq!(t.values(y), &[0.0, 0.0]);
    }

    #[test]
    fn odd_trailing_dimension_rejected() {
        let mut t = Tape::new();
        let pre = t.constant(vec![1, 3], vec![0.0; 3]).unwrap();
        assert!(glu(&mut t, pre).is_err());
    }
}
