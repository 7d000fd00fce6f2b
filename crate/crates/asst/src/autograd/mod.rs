//! Reverse-mode automatic differentiation on a Wengert tape.
//!
//! Forward calls on [`Tape`] record one node per produced value; the node list
//! is in topological order by construction (an operation can only consume
//! already-created [`Var`]s). [`Tape::backward`] replays the list in reverse
//! exactly once, accumulating gradients for every tracked leaf.
//!
//! Execution is single-threaded per tape. Independent samples may be
//! evaluated on separate tapes on separate threads; reduction order across
//! tapes is then the caller's responsibility.

mod backward;
mod gradcheck;
mod tape;
#[cfg(test)]
mod tests;

pub use gradcheck::{grad_check, grad_check_multi};
pub use tape::{Padding, Tape, Var};
