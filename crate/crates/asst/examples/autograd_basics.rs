//! Tour of the reverse-mode autodiff tape: record ops, backpropagate,
//! verify against finite differences.

use asst::autograd::{grad_check, Padding, Tape};
use asst::Tensor;

fn main() -> asst::Result<()> {
    // Forward: y = sum(sigmoid(x W + b)) on a tiny problem.
    let mut tape = Tape::new();
    let x = tape.leaf(vec![2, 3], vec![0.5, -1.0, 2.0, 0.1, 0.0, -0.7])?;
    let w = tape.leaf(vec![3, 2], vec![0.2, -0.4, 0.9, 0.3, -0.5, 0.8])?;
    let b = tape.constant(vec![1, 2], vec![0.1, -0.1])?;

    let h = tape.matmul(x, w)?;
    let b2 = tape.concat(&[b, b], 0)?; // broadcast the bias over both rows
    let pre = tape.add(h, b2)?;
    let act = tape.sigmoid(pre);
    let loss = tape.sum_all(act);
    println!("loss = {:.6}", tape.value_scalar(loss));

    tape.backward(loss)?;
    println!("dloss/dx = {:?}", tape.grad(x).unwrap());
    println!("dloss/dw = {:?}", tape.grad(w).unwrap());

    // Gradients accumulate: a second backward doubles them.
    tape.backward(loss)?;
    println!("after second backward, dloss/dx = {:?}", tape.grad(x).unwrap());

    // A dilated convolution and its hand-checkable output.
    let mut t2 = Tape::new();
    let signal = t2.constant(vec![5, 1], vec![1.0, 2.0, 3.0, 4.0, 5.0])?;
    let kernel = t2.constant(vec![3, 1, 1], vec![1.0, 0.0, -1.0])?;
    let zero_bias = t2.constant(vec![1], vec![0.0])?;
    let edges = t2.conv1d(signal, kernel, zero_bias, 2, 1, Padding::Same)?;
    println!("dilated edge filter: {:?}", t2.values(edges));

    // The checker compares every coordinate against central differences.
    let x0 = Tensor::new(vec![4], vec![0.3, -0.2, 1.5, 0.0])?;
    let err = grad_check(
        |t, v| {
            let s = t.softmax(v, 0)?;
            let e = t.exp(s);
            Ok(t.sum_all(e))
        },
        &x0,
        1e-4,
    )?;
    println!("softmax-exp-sum gradient max relative error: {err:.3e}");
    Ok(())
}
