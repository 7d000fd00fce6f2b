//! Cross-modal attention: word-to-frame weights and the language-augmented
//! context added into the video subnet.
//!
//! Scores divide by the shared projection width d_a (not its square root);
//! that is the scaling this architecture specifies, and we keep it verbatim.

use crate::autograd::{Tape, Var};
use crate::error::{Error, Result};
use crate::nn::{AttentionRecord, BatchNorm, Conv1dLayer, Ctx, ParamStore};
use rand::Rng;

/// Attention weight matrix A (and its raw scores), size words × frames.
/// Columns of A are normalized over the word axis.
#[derive(Debug, Clone, Copy)]
pub struct AttentionMatrix {
    pub weights: Var,
    pub scores: Var,
}

/// A'_ij = (wᵃ_i · vᵃ_j) / d_a, A = column-wise softmax over words.
pub fn attention_weights(tape: &mut Tape, w_a: Var, v_a: Var) -> Result<AttentionMatrix> {
    let d_a = tape.shape(w_a)[1];
    if tape.shape(v_a)[1] != d_a {
        return Err(Error::shape(
            "attention projections must share d_a",
            tape.shape(w_a),
            tape.shape(v_a),
        ));
    }
    let dots = tape.matmul_tb(w_a, v_a)?;
    let scores = tape.affine(dots, 1.0 / d_a as f64, 0.0);
    let weights = tape.softmax(scores, 0)?;
    Ok(AttentionMatrix { weights, scores })
}

/// u'_j = Σ_i A_ij wᵛ_i, then u_j = u'_j ⊙ v_j. The caller wraps the result
/// in a kernel-1 convolution, ReLU and BatchNorm before adding it back into
/// the visual pathway.
pub fn attend_and_fuse(tape: &mut Tape, a: &AttentionMatrix, w_v: Var, v: Var) -> Result<Var> {
    if tape.shape(w_v)[1] != tape.shape(v)[1] {
        return Err(Error::shape(
            "attended language channels vs visual channels",
            tape.shape(w_v),
            tape.shape(v),
        ));
    }
    let u_prime = tape.matmul_ta(a.weights, w_v)?;
    tape.mul(u_prime, v)
}

/// The full per-layer attention block: kernel-1 projections of the language
/// sequence into attention keys (wᵃ) and values (wᵛ), a kernel-1 projection
/// of the visual layer into keys (vᵃ), the attended product, and the
/// conv1×1 → ReLU → BatchNorm normalization of the context.
#[derive(Debug, Clone)]
pub struct AttentionBlock {
    pub name: String,
    w_a: Conv1dLayer,
    w_v: Conv1dLayer,
    v_a: Conv1dLayer,
    fuse: Conv1dLayer,
    bn: BatchNorm,
}

impl AttentionBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        lang_width: usize,
        channels: usize,
        d_a: usize,
        bn_momentum: f64,
        bn_eps: f64,
        rng: &mut impl Rng,
    ) -> Self {
        AttentionBlock {
            name: name.to_string(),
            w_a: Conv1dLayer::kernel1(store, &format!("{name}.w_a"), lang_width, d_a, rng),
            w_v: Conv1dLayer::kernel1(store, &format!("{name}.w_v"), lang_width, channels, rng),
            v_a: Conv1dLayer::kernel1(store, &format!("{name}.v_a"), channels, d_a, rng),
            fuse: Conv1dLayer::kernel1(store, &format!("{name}.fuse"), channels, channels, rng),
            bn: BatchNorm::new(store, &format!("{name}.bn"), channels, bn_momentum, bn_eps),
        }
    }

    /// Normalized language-augmented context for visual layer `v` [m×C];
    /// the caller adds it onto the layer's carrier.
    pub fn forward(&self, ctx: &mut Ctx, lang: Var, v: Var) -> Result<Var> {
        let w_a = self.w_a.forward(ctx, lang)?;
        let w_v = self.w_v.forward(ctx, lang)?;
        let v_a = self.v_a.forward(ctx, v)?;
        let a = attention_weights(&mut ctx.tape, w_a, v_a)?;
        if ctx.attn_dump.is_some() {
            let shape = ctx.tape.shape(a.weights).to_vec();
            let values = ctx.tape.values(a.weights).to_vec();
            ctx.attn_dump.as_mut().unwrap().push(AttentionRecord {
                layer: self.name.clone(),
                words: shape[0],
                frames: shape[1],
                values,
            });
        }
        let u = attend_and_fuse(&mut ctx.tape, &a, w_v, v)?;
        let f = self.fuse.forward(ctx, u)?;
        let r = ctx.tape.relu(f);
        // The batch here is the current sequence's frames, so the same
        // statistics apply in both phases.
        self.bn.forward_instance(ctx, r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn closed_form_column() {
        let mut t = Tape::new();
        let w_a = t.constant(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let v_a = t.constant(vec![1, 2], vec![1.0, 0.0]).unwrap();
        let a = attention_weights(&mut t, w_a, v_a).unwrap();
        assert_eq!(t.values(a.scores), &[0.5, 0.0]);
        let col = t.values(a.weights);
        let z = 0.5_f64.exp() + 1.0;
        assert!((col[0] - 0.5_f64.exp() / z).abs() < 1e-12);
        assert!((col[1] - 1.0 / z).abs() < 1e-12);
        assert!((col[0] - 0.6225).abs() < 1e-4);
        assert!((col[1] - 0.3775).abs() < 1e-4);
    }

    #[test]
    fn zero_keys_give_uniform_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut t = Tape::new();
        let n = 4;
        let wv: Vec<f64> = (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w_a = t.constant(vec![n, 3], wv).unwrap();
        let v_a = t.constant(vec![5, 3], vec![0.0; 15]).unwrap();
        let a = attention_weights(&mut t, w_a, v_a).unwrap();
        for v in t.values(a.weights) {
            assert!((v - 1.0 / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn single_word_attention_is_all_ones() {
        let mut t = Tape::new();
        let w_a = t.constant(vec![1, 2], vec![0.3, -0.7]).unwrap();
        let v_a = t.constant(vec![4, 2], vec![0.1; 8]).unwrap();
        let a = attention_weights(&mut t, w_a, v_a).unwrap();
        assert!(t.values(a.weights).iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn single_word_fusion_broadcasts_value_row() {
        let mut t = Tape::new();
        let w_a = t.constant(vec![1, 2], vec![0.0, 0.0]).unwrap();
        let v_a = t.constant(vec![3, 2], vec![0.0; 6]).unwrap();
        let a = attention_weights(&mut t, w_a, v_a).unwrap();
        let w_v = t.constant(vec![1, 2], vec![2.0, -1.0]).unwrap();
        let v = t
            .constant(vec![3, 2], vec![1.0, 1.0, 0.5, 2.0, -1.0, 3.0])
            .unwrap();
        let u = attend_and_fuse(&mut t, &a, w_v, v).unwrap();
        assert_eq!(t.values(u), &[2.0, -1.0, 1.0, -2.0, -2.0, -3.0]);
    }

    #[test]
    fn ones_visual_passes_attended_language_through() {
        let mut t = Tape::new();
        let w_a = t.constant(vec![2, 1], vec![0.0, 0.0]).unwrap();
        let v_a = t.constant(vec![2, 1], vec![0.0, 0.0]).unwrap();
        let a = attention_weights(&mut t, w_a, v_a).unwrap();
        let w_v = t.constant(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let v = t.constant(vec![2, 2], vec![1.0; 4]).unwrap();
        let u = attend_and_fuse(&mut t, &a, w_v, v).unwrap();
        // Uniform attention over rows [1,0] and [0,1] gives [0.5, 0.5].
        assert_eq!(t.values(u), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn attended_rows_stay_in_value_convex_hull() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let (n, m, c) = (3, 6, 4);
            let mut t = Tape::new();
            let rand_mat = |t: &mut Tape, r: usize, cc: usize, rng: &mut ChaCha8Rng| {
                let v: Vec<f64> = (0..r * cc).map(|_| rng.gen_range(-2.0..2.0)).collect();
                t.constant(vec![r, cc], v).unwrap()
            };
            let w_a = rand_mat(&mut t, n, 5, &mut rng);
            let v_a = rand_mat(&mut t, m, 5, &mut rng);
            let w_v = rand_mat(&mut t, n, c, &mut rng);
            let a = attention_weights(&mut t, w_a, v_a).unwrap();
            let u_prime = t.matmul_ta(a.weights, w_v).unwrap();
            let wv = t.values(w_v).to_vec();
            for ch in 0..c {
                let lo = (0..n).map(|i| wv[i * c + ch]).fold(f64::INFINITY, f64::min);
                let hi = (0..n).map(|i| wv[i * c + ch]).fold(f64::NEG_INFINITY, f64::max);
                for j in 0..m {
                    let v = t.values(u_prime)[j * c + ch];
                    assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
                }
            }
        }
    }

    #[test]
    fn positive_key_rescaling_preserves_column_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..100 {
            let (n, m, d) = (5, 7, 3);
            let wv: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let vv: Vec<f64> = (0..m * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let scale = rng.gen_range(0.05..20.0);
            let argmaxes = |vv: &[f64]| -> Vec<usize> {
                let mut t = Tape::new();
                let w_a = t.constant(vec![n, d], wv.clone()).unwrap();
                let v_a = t.constant(vec![m, d], vv.to_vec()).unwrap();
                let a = attention_weights(&mut t, w_a, v_a).unwrap();
                let av = t.values(a.weights);
                (0..m)
                    .map(|j| {
                        (0..n)
                            .max_by(|x, y| av[x * m + j].partial_cmp(&av[y * m + j]).unwrap())
                            .unwrap()
                    })
                    .collect()
            };
            let scaled: Vec<f64> = vv.iter().map(|v| v * scale).collect();
            assert_eq!(argmaxes(&vv), argmaxes(&scaled), "trial {trial}");
        }
    }
}
