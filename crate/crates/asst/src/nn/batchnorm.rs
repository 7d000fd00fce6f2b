//! Batch normalization over the batch×time rows of a channel-last value.

use super::{BnUpdate, Ctx, ParamId, ParamStore};
use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub momentum: f64,
    pub eps: f64,
    channels: usize,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, momentum: f64, eps: f64) -> Self {
        assert!(momentum > 0.0 && momentum <= 1.0, "momentum must be in (0,1]");
        assert!(eps > 0.0, "eps must be positive");
        let gamma = store.add(format!("{name}.gamma"), Tensor::full(vec![channels], 1.0), true);
        let beta = store.add(format!("{name}.beta"), Tensor::zeros(vec![channels]), true);
        let running_mean = store.add(
            format!("{name}.running_mean"),
            Tensor::zeros(vec![channels]),
            false,
        );
        let running_var = store.add(
            format!("{name}.running_var"),
            Tensor::full(vec![channels], 1.0),
            false,
        );
        BatchNorm {
            gamma,
            beta,
            running_mean,
            running_var,
            momentum,
            eps,
            channels,
        }
    }

    /// Normalize x of shape [rows×C] or [B,m,C]. Training mode uses batch
    /// statistics and queues an exponential-moving-average update of the
    /// running statistics; inference mode uses the stored running statistics.
    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        self.forward_with(ctx, x, ctx.train)
    }

    /// Normalize with batch statistics regardless of phase: the rows of the
    /// value at hand are the batch. Running statistics are still tracked
    /// while training. Used where the natural batch is the current
    /// sequence's frames, which keeps training and inference normalization
    /// identical for per-sequence evaluation.
    pub fn forward_instance(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        self.forward_with(ctx, x, true)
    }

    fn forward_with(&self, ctx: &mut Ctx, x: Var, batch_stats: bool) -> Result<Var> {
        let shape = ctx.tape.shape(x).to_vec();
        let (flat, restore) = match shape.len() {
            2 => (x, None),
            3 => {
                let rows = shape[0] * shape[1];
                (ctx.tape.reshape(x, vec![rows, shape[2]])?, Some(shape.clone()))
            }
            _ => {
                return Err(Error::contract(format!(
                    "batch_norm expects [rows×C] or [B,m,C], got {shape:?}"
                )))
            }
        };
        if ctx.tape.shape(flat)[1] != self.channels {
            return Err(Error::shape(
                "batch_norm channel count",
                ctx.tape.shape(flat),
                &[self.channels],
            ));
        }
        let gamma = ctx.param(self.gamma);
        let beta = ctx.param(self.beta);
        let y = if batch_stats {
            let (y, stats) = ctx.tape.batch_norm(flat, gamma, beta, self.eps, None)?;
            if ctx.train {
                let (mean, var) = stats.expect("batch-stats batch_norm returns them");
                ctx.bn_updates.push(BnUpdate {
                    mean_id: self.running_mean,
                    var_id: self.running_var,
                    momentum: self.momentum,
                    mean,
                    var,
                });
            }
            y
        } else {
            let rm = ctx.store.get(self.running_mean).values().to_vec();
            let rv = ctx.store.get(self.running_var).values().to_vec();
            let (y, _) = ctx.tape.batch_norm(flat, gamma, beta, self.eps, Some((&rm, &rv)))?;
            y
        };
        match restore {
            Some(shape) => ctx.tape.reshape(y, shape),
            None => Ok(y),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ctx(store: &ParamStore, train: bool) -> Ctx<'_> {
        Ctx::new(store, train, ChaCha8Rng::seed_from_u64(0))
    }

    #[test]
    fn train_mode_standardizes() {
        let mut store = ParamStore::new();
        let bn = BatchNorm::new(&mut store, "bn", 1, 0.9, 1e-5);
        let mut c = ctx(&store, true);
        let x = c.tape.constant(vec![3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let y = bn.forward(&mut c, x).unwrap();
        let v = c.tape.values(y);
        let mean: f64 = v.iter().sum::<f64>() / 3.0;
        let var: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-4, "eps-perturbed unit variance, got {var}");
        assert_eq!(c.bn_updates.len(), 1);
    }

    #[test]
    fn zero_gamma_outputs_beta() {
        let mut store = ParamStore::new();
        let bn = BatchNorm::new(&mut store, "bn", 2, 0.9, 1e-5);
        store.get_mut(bn.gamma).values_mut().fill(0.0);
        store.get_mut(bn.beta).values_mut().copy_from_slice(&[0.25, -1.5]);
        let mut c = ctx(&store, true);
        let x = c.tape.constant(vec![3, 2], vec![1.0, 9.0, 2.0, 8.0, 3.0, 7.0]).unwrap();
        let y = bn.forward(&mut c, x).unwrap();
        assert_eq!(c.tape.values(y), &[0.25, -1.5, 0.25, -1.5, 0.25, -1.5]);
    }

    #[test]
    fn infer_mode_near_identity_with_unit_stats() {
        let mut store = ParamStore::new();
        let bn = BatchNorm::new(&mut store, "bn", 1, 0.9, 1e-5);
        let mut c = ctx(&store, false);
        let x = c.tape.constant(vec![2, 1], vec![1.0, -4.0]).unwrap();
        let y = bn.forward(&mut c, x).unwrap();
        let scale = 1.0 / (1.0 + 1e-5_f64).sqrt();
        assert!((c.tape.values(y)[0] - scale).abs() < 1e-12);
        assert!((c.tape.values(y)[1] + 4.0 * scale).abs() < 1e-12);
        assert!(c.bn_updates.is_empty());
    }

    #[test]
    fn single_element_training_batch_rejected() {
        let mut store = ParamStore::new();
        let bn = BatchNorm::new(&mut store, "bn", 1, 0.9, 1e-5);
        let mut c = ctx(&store, true);
        let x = c.tape.constant(vec![1, 1], vec![1.0]).unwrap();
        assert!(matches!(bn.forward(&mut c, x), Err(Error::Contract(_))));
    }

    #[test]
    fn running_stats_track_batches() {
        let mut store = ParamStore::new();
        let bn = BatchNorm::new(&mut store, "bn", 1, 0.9, 1e-5);
        let mut c = ctx(&store, true);
        let x = c.tape.constant(vec![2, 1], vec![4.0, 8.0]).unwrap();
        bn.forward(&mut c, x).unwrap();
        let updates = std::mem::take(&mut c.bn_updates);
        drop(c);
        for u in &updates {
            u.apply(&mut store);
        }
        // mean EMA: 0.9*0 + 0.1*6 = 0.6; var EMA: 0.9*1 + 0.1*4 = 1.3
        assert!((store.get(bn.running_mean).values()[0] - 0.6).abs() < 1e-12);
        assert!((store.get(bn.running_var).values()[0] - 1.3).abs() < 1e-12);
    }
}
