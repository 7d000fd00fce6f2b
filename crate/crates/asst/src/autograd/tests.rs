use super::tape::{Padding, Tape};
use crate::error::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn matmul_identity_and_hand_product() {
    let mut t = Tape::new();
    let eye = t.constant(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let m = t.constant(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let y = t.matmul(eye, m).unwrap();
    assert_eq!(t.values(y), &[1.0, 2.0, 3.0, 4.0]);

    let a = t.constant(vec![1, 2], vec![1.0, 2.0]).unwrap();
    let b = t.constant(vec![2, 1], vec![3.0, 4.0]).unwrap();
    let y = t.matmul(a, b).unwrap();
    assert_eq!(t.values(y), &[11.0]);

    let z = t.constant(vec![2, 2], vec![0.0; 4]).unwrap();
    let y = t.matmul(z, m).unwrap();
    assert_eq!(t.values(y), &[0.0; 4]);
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let mut t = Tape::new();
    let a = t.constant(vec![2, 3], vec![0.0; 6]).unwrap();
    let b = t.constant(vec![2, 2], vec![0.0; 4]).unwrap();
    match t.matmul(a, b) {
        Err(Error::Shape { lhs, rhs, .. }) => {
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![2, 2]);
        }
        other => panic!("expected shape error, got {other:?}"),
    }
}

#[test]
fn conv1d_hand_cross_correlation() {
    let mut t = Tape::new();
    let x = t.constant(vec![5, 1], vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    let w = t.constant(vec![3, 1, 1], vec![1.0, 0.0, -1.0]).unwrap();
    let b = t.constant(vec![1], vec![0.0]).unwrap();

    let y = t.conv1d(x, w, b, 1, 1, Padding::Same).unwrap();
    assert_eq!(t.values(y), &[-2.0, -2.0, -2.0, -2.0, 4.0]);

    let y = t.conv1d(x, w, b, 2, 1, Padding::Same).unwrap();
    assert_eq!(t.values(y), &[-3.0, -4.0, -4.0, 2.0, 3.0]);
}

#[test]
fn conv1d_identity_kernel_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xs: Vec<f64> = (0..24).map(|_| rng.gen_range(-10.0..10.0)).collect();
    let mut t = Tape::new();
    let x = t.constant(vec![8, 3], xs.clone()).unwrap();
    // w[kp, c_in, c_out]: center tap = identity over channels.
    let mut wv = vec![0.0; 3 * 3 * 3];
    for c in 0..3 {
        wv[1 * 9 + c * 3 + c] = 1.0;
    }
    let w = t.constant(vec![3, 3, 3], wv).unwrap();
    let b = t.constant(vec![3], vec![0.0; 3]).unwrap();
    for dilation in [1, 2, 3] {
        let y = t.conv1d(x, w, b, dilation, 1, Padding::Same).unwrap();
        assert_eq!(t.values(y), xs.as_slice());
    }
}

#[test]
fn conv1d_even_kernel_same_rejected() {
    let mut t = Tape::new();
    let x = t.constant(vec![4, 1], vec![0.0; 4]).unwrap();
    let w = t.constant(vec![2, 1, 1], vec![0.0; 2]).unwrap();
    let b = t.constant(vec![1], vec![0.0]).unwrap();
    assert!(matches!(
        t.conv1d(x, w, b, 1, 1, Padding::Same),
        Err(Error::Config(_))
    ));
}

#[test]
fn conv1d_valid_shrinks_length() {
    let mut t = Tape::new();
    let x = t.constant(vec![7, 1], vec![1.0; 7]).unwrap();
    let w = t.constant(vec![3, 1, 1], vec![1.0, 1.0, 1.0]).unwrap();
    let b = t.constant(vec![1], vec![0.0]).unwrap();
    let y = t.conv1d(x, w, b, 1, 1, Padding::Valid).unwrap();
    assert_eq!(t.shape(y), &[5, 1]);
    assert_eq!(t.values(y), &[3.0; 5]);
}

#[test]
fn elementwise_examples() {
    let mut t = Tape::new();
    let z = t.scalar(0.0);
    let s = t.sigmoid(z);
    assert_eq!(t.value_scalar(s), 0.5);

    let x = t.constant(vec![2], vec![-1.0, 2.0]).unwrap();
    let r = t.relu(x);
    assert_eq!(t.values(r), &[0.0, 2.0]);

    let a = t.constant(vec![2], vec![2.0, -4.0]).unwrap();
    let b = t.constant(vec![2], vec![0.5, 0.5]).unwrap();
    let m = t.mul(a, b).unwrap();
    assert_eq!(t.values(m), &[1.0, -2.0]);

    let bad = t.constant(vec![2], vec![1.0, -0.5]).unwrap();
    assert!(matches!(t.log(bad), Err(Error::Domain(_))));
}

#[test]
fn softmax_examples_and_stability() {
    let mut t = Tape::new();
    let x = t.constant(vec![2], vec![0.0, 0.0]).unwrap();
    let y = t.softmax(x, 0).unwrap();
    assert!(close(t.values(y), &[0.5, 0.5], 1e-12));

    let x = t.constant(vec![2], vec![0.0, 3.0_f64.ln()]).unwrap();
    let y = t.softmax(x, 0).unwrap();
    assert!(close(t.values(y), &[0.25, 0.75], 1e-12));

    let x = t.constant(vec![2], vec![1000.0, 0.0]).unwrap();
    let y = t.softmax(x, 0).unwrap();
    let v = t.values(y);
    assert!(v.iter().all(|p| p.is_finite() && *p >= 0.0));
    assert!((v[0] - 1.0).abs() < 1e-12 && v[1] < 1e-12);
}

#[test]
fn softmax_slices_sum_to_one_along_both_axes() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let vals: Vec<f64> = (0..20).map(|_| rng.gen_range(-30.0..30.0)).collect();
    let mut t = Tape::new();
    let x = t.constant(vec![4, 5], vals).unwrap();
    for axis in [0, 1] {
        let y = t.softmax(x, axis).unwrap();
        let v = t.values(y).to_vec();
        assert!(v.iter().all(|p| *p >= 0.0));
        if axis == 0 {
            for c in 0..5 {
                let s: f64 = (0..4).map(|r| v[r * 5 + c]).sum();
                assert!((s - 1.0).abs() < 1e-9);
            }
        } else {
            for r in 0..4 {
                let s: f64 = v[r * 5..(r + 1) * 5].iter().sum();
                assert!((s - 1.0).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn backward_hand_derivatives() {
    // loss = sum x^2 at [1, 2] -> grad [2, 4]
    let mut t = Tape::new();
    let x = t.leaf(vec![2], vec![1.0, 2.0]).unwrap();
    let sq = t.mul(x, x).unwrap();
    let loss = t.sum_all(sq);
    t.backward(loss).unwrap();
    assert!(close(t.grad(x).unwrap(), &[2.0, 4.0], 1e-12));

    // loss = x * y at (3, 5) -> d/dx = 5, d/dy = 3
    let mut t = Tape::new();
    let x = t.leaf(vec![1], vec![3.0]).unwrap();
    let y = t.leaf(vec![1], vec![5.0]).unwrap();
    let p = t.mul(x, y).unwrap();
    t.backward(p).unwrap();
    assert_eq!(t.grad(x).unwrap(), &[5.0]);
    assert_eq!(t.grad(y).unwrap(), &[3.0]);
}

#[test]
fn backward_constant_loss_leaves_grads_zero() {
    let mut t = Tape::new();
    let x = t.leaf(vec![2], vec![1.0, 2.0]).unwrap();
    let c = t.scalar(7.0);
    let loss = t.sum_all(c);
    t.backward(loss).unwrap();
    assert!(t.grad(x).is_none());
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut t = Tape::new();
    let x = t.leaf(vec![2], vec![1.0, 2.0]).unwrap();
    assert!(matches!(t.backward(x), Err(Error::Contract(_))));
}

#[test]
fn backward_twice_doubles_grads() {
    let mut t = Tape::new();
    let x = t.leaf(vec![2], vec![1.0, 2.0]).unwrap();
    let sq = t.mul(x, x).unwrap();
    let loss = t.sum_all(sq);
    t.backward(loss).unwrap();
    t.backward(loss).unwrap();
    assert!(close(t.grad(x).unwrap(), &[4.0, 8.0], 1e-12));
}

#[test]
fn cross_entropy_closed_forms() {
    let mut t = Tape::new();
    let z = t.constant(vec![2], vec![0.0, 0.0]).unwrap();
    let l = t.softmax_cross_entropy(z, 0).unwrap();
    assert!((t.value_scalar(l) - 2.0_f64.ln()).abs() < 1e-12);

    let z = t.constant(vec![2], vec![100.0, -100.0]).unwrap();
    let l = t.softmax_cross_entropy(z, 0).unwrap();
    assert!(t.value_scalar(l).abs() < 1e-12);

    let z = t.constant(vec![21], vec![0.0; 21]).unwrap();
    let l = t.softmax_cross_entropy(z, 3).unwrap();
    assert!((t.value_scalar(l) - 21.0_f64.ln()).abs() < 1e-12);

    let z = t.constant(vec![3], vec![0.0; 3]).unwrap();
    assert!(matches!(
        t.softmax_cross_entropy(z, 3),
        Err(Error::Contract(_))
    ));
}

#[test]
fn smooth_l1_branches() {
    let mut t = Tape::new();
    let x = t.constant(vec![3], vec![0.0, 0.5, -2.0]).unwrap();
    let l = t.smooth_l1(x, &[0.0, 0.0, 0.0]).unwrap();
    assert!(close(t.values(l), &[0.0, 0.125, 1.5], 1e-12));
}

#[test]
fn interp_rows_copies_integer_coordinates_bit_exactly() {
    let mut t = Tape::new();
    let x = t
        .constant(vec![3, 2], vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6])
        .unwrap();
    let y = t.interp_rows(x, &[0.0, 1.0, 2.0, 0.5]).unwrap();
    let v = t.values(y);
    assert_eq!(&v[0..6], t.values(x));
    assert!(close(&v[6..8], &[0.2, 0.3], 1e-12));
}

#[test]
fn concat_and_slice_roundtrip() {
    let mut t = Tape::new();
    let a = t.constant(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let b = t.constant(vec![2, 1], vec![5.0, 6.0]).unwrap();
    let c = t.concat(&[a, b], 1).unwrap();
    assert_eq!(t.values(c), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
    let back = t.slice_cols(c, 0, 2).unwrap();
    assert_eq!(t.values(back), t.values(a));

    let d = t.concat(&[a, a], 0).unwrap();
    assert_eq!(t.shape(d), &[4, 2]);
}
