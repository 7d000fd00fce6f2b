//! Finite-difference verification of tape gradients.

use super::tape::{Tape, Var};
use crate::error::Result;
use crate::tensor::Tensor;

/// Compare the tape gradient of a scalar-valued function against central
/// differences, coordinate by coordinate. Returns the maximum relative error
/// `|analytic - numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let wrap = |tape: &mut Tape, vars: &[Var]| f(tape, vars[0]);
    grad_check_multi(wrap, &[x], eps)
}

/// Multi-input variant of [`grad_check`]: checks every coordinate of every
/// input tensor.
pub fn grad_check_multi<F>(f: F, xs: &[&Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    assert!(eps > 0.0, "grad_check eps must be positive");

    let forward = |values: &[Vec<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs
            .iter()
            .zip(values)
            .map(|(x, v)| tape.constant(x.shape().to_vec(), v.clone()))
            .collect::<Result<_>>()?;
        let loss = f(&mut tape, &vars)?;
        Ok(tape.value_scalar(loss))
    };

    // Analytic gradients from one backward pass.
    let mut tape = Tape::new();
    let vars: Vec<Var> = xs
        .iter()
        .map(|x| tape.leaf(x.shape().to_vec(), x.values().to_vec()))
        .collect::<Result<_>>()?;
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(xs)
        .map(|(v, x)| tape.grad(*v).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; x.numel()]))
        .collect();

    let mut values: Vec<Vec<f64>> = xs.iter().map(|x| x.values().to_vec()).collect();
    let mut max_err: f64 = 0.0;
    for (xi, x) in xs.iter().enumerate() {
        for i in 0..x.numel() {
            let orig = values[xi][i];
            values[xi][i] = orig + eps;
            let fp = forward(&values)?;
            values[xi][i] = orig - eps;
            let fm = forward(&values)?;
            values[xi][i] = orig;
            let numeric = (fp - fm) / (2.0 * eps);
            let err = (analytic[xi][i] - numeric).abs() / numeric.abs().max(1.0);
            max_err = max_err.max(err);
        }
    }
    Ok(max_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::Padding;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(shape: Vec<usize>, rng: &mut impl Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap()
    }

    #[test]
    fn sum_is_exactly_linear() {
        let x = Tensor::new(vec![4], vec![0.3, -1.1, 2.0, 0.0]).unwrap();
        let err = grad_check(|t, v| Ok(t.sum_all(v)), &x, 1e-4).unwrap();
        assert!(err < 1e-9, "sum grad err {err}");
    }

    #[test]
    fn sigmoid_sum_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = rand_tensor(vec![5], &mut rng);
        let err = grad_check(
            |t, v| {
                let s = t.sigmoid(v);
                Ok(t.sum_all(s))
            },
            &x,
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-6, "sigmoid grad err {err}");
    }

    #[test]
    fn composite_ops_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = rand_tensor(vec![3, 4], &mut rng);
        let w = rand_tensor(vec![4, 2], &mut rng);
        let err = grad_check_multi(
            |t, vs| {
                let y = t.matmul(vs[0], vs[1])?;
                let y = t.tanh(y);
                let s = t.softmax(y, 1)?;
                let e = t.exp(s);
                Ok(t.sum_all(e))
            },
            &[&x, &w],
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-6, "composite grad err {err}");
    }

    #[test]
    fn conv_same_and_valid_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = rand_tensor(vec![7, 3], &mut rng);
        let w = rand_tensor(vec![3, 3, 2], &mut rng);
        let b = rand_tensor(vec![2], &mut rng);
        for (dilation, stride, padding) in [
            (1, 1, Padding::Same),
            (2, 1, Padding::Same),
            (1, 2, Padding::Same),
            (1, 1, Padding::Valid),
            (2, 1, Padding::Valid),
        ] {
            let err = grad_check_multi(
                |t, vs| {
                    let y = t.conv1d(vs[0], vs[1], vs[2], dilation, stride, padding)?;
                    let y = t.relu(y);
                    Ok(t.sum_all(y))
                },
                &[&x, &w, &b],
                1e-4,
            )
            .unwrap();
            assert!(err < 1e-6, "conv d{dilation} s{stride} {padding:?} err {err}");
        }
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        // Harness sanity: a wrong analytic gradient must produce a large error.
        let x = Tensor::new(vec![3], vec![0.5, -0.2, 1.0]).unwrap();
        let mut tape = Tape::new();
        let v = tape.leaf(vec![3], x.values().to_vec()).unwrap();
        let s = tape.sigmoid(v);
        let loss = tape.sum_all(s);
        tape.backward(loss).unwrap();
        let mut corrupted = tape.grad(v).unwrap().to_vec();
        corrupted[1] += 0.25;

        let numeric: Vec<f64> = (0..3)
            .map(|i| {
                let eval = |vals: &[f64]| {
                    let mut t = Tape::new();
                    let v = t.constant(vec![3], vals.to_vec()).unwrap();
                    let s = t.sigmoid(v);
                    let l = t.sum_all(s);
                    t.value_scalar(l)
                };
                let mut vp = x.values().to_vec();
                vp[i] += 1e-4;
                let mut vm = x.values().to_vec();
                vm[i] -= 1e-4;
                (eval(&vp) - eval(&vm)) / 2e-4
            })
            .collect();
        let max_err = corrupted
            .iter()
            .zip(&numeric)
            .map(|(a, n)| (a - n).abs() / n.abs().max(1.0))
            .fold(0.0_f64, f64::max);
        assert!(max_err > 1e-2, "corruption not detected: {max_err}");
    }
}
