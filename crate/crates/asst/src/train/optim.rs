//! Optimizers and the step-decay learning-rate schedule.

use crate::data::NamedArray;
use crate::error::{Error, Result};
use crate::nn::{ParamId, ParamStore};
use serde::{Deserialize, Serialize};

/// lr(step) = base · decay^⌊step / interval⌋.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base: f64,
    pub decay: f64,
    pub interval: usize,
}

impl LrSchedule {
    pub fn at(&self, step: usize) -> f64 {
        self.base * self.decay.powi((step / self.interval) as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimKind {
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

/// Optimizer with per-parameter state slots aligned to the store.
pub struct Optimizer {
    pub kind: OptimKind,
    pub step_count: u64,
    /// Momentum buffer (SGD) or first moment (Adam).
    slot1: Vec<Vec<f64>>,
    /// Second moment (Adam only).
    slot2: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimKind, store: &ParamStore) -> Self {
        let slot = |on: bool| -> Vec<Vec<f64>> {
            store
                .ids()
                .map(|id| {
                    if on && store.is_trainable(id) {
                        vec![0.0; store.get(id).numel()]
                    } else {
                        Vec::new()
                    }
                })
                .collect()
        };
        let adam = matches!(kind, OptimKind::Adam { .. });
        Optimizer {
            kind,
            step_count: 0,
            slot1: slot(true),
            slot2: slot(adam),
        }
    }

    /// Apply one update from the gradients accumulated in the store.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        self.step_count += 1;
        let t = self.step_count;
        for id in store.trainable_ids() {
            let grad = store
                .get(id)
                .grad()
                .ok_or_else(|| {
                    Error::contract(format!(
                        "trainable parameter {} has no gradient",
                        store.name(id)
                    ))
                })?
                .to_vec();
            match self.kind {
                OptimKind::SgdMomentum { momentum } => {
                    let buf = &mut self.slot1[id.0];
                    let p = store.get_mut(id).values_mut();
                    for i in 0..p.len() {
                        buf[i] = momentum * buf[i] + grad[i];
                        p[i] -= lr * buf[i];
                    }
                }
                OptimKind::Adam { beta1, beta2, eps } => {
                    let bc1 = 1.0 - beta1.powi(t as i32);
                    let bc2 = 1.0 - beta2.powi(t as i32);
                    let m = &mut self.slot1[id.0];
                    let v = &mut self.slot2[id.0];
                    let p = store.get_mut(id).values_mut();
                    for i in 0..p.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                        let mhat = m[i] / bc1;
                        let vhat = v[i] / bc2;
                        p[i] -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }

    /// Serialize state slots as named arrays with an "opt." prefix.
    pub fn to_arrays(&self, store: &ParamStore) -> Vec<NamedArray> {
        let mut out = Vec::new();
        for id in store.trainable_ids() {
            let shape = store.get(id).shape().to_vec();
            out.push(NamedArray {
                name: format!("opt.s1.{}", store.name(id)),
                shape: shape.clone(),
                values: self.slot1[id.0].clone(),
            });
            if !self.slot2[id.0].is_empty() {
                out.push(NamedArray {
                    name: format!("opt.s2.{}", store.name(id)),
                    shape,
                    values: self.slot2[id.0].clone(),
                });
            }
        }
        out
    }

    pub fn meta(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": self.kind,
            "step_count": self.step_count,
        })
    }

    /// Restore from checkpoint metadata plus "opt.*" arrays.
    pub fn from_checkpoint(
        meta: &serde_json::Value,
        arrays: &[NamedArray],
        store: &ParamStore,
    ) -> Result<Self> {
        let kind: OptimKind = serde_json::from_value(meta["kind"].clone())
            .map_err(|e| Error::format(format!("optimizer kind in checkpoint: {e}")))?;
        let step_count = meta["step_count"]
            .as_u64()
            .ok_or_else(|| Error::format("optimizer step_count missing in checkpoint"))?;
        let mut opt = Optimizer::new(kind, store);
        opt.step_count = step_count;
        let find = |name: &str| arrays.iter().find(|a| a.name == name);
        for id in store.trainable_ids() {
            let n1 = format!("opt.s1.{}", store.name(id));
            let a1 = find(&n1).ok_or_else(|| Error::format(format!("checkpoint missing {n1}")))?;
            opt.slot1[id.0].copy_from_slice(&a1.values);
            if matches!(kind, OptimKind::Adam { .. }) {
                let n2 = format!("opt.s2.{}", store.name(id));
                let a2 = find(&n2).ok_or_else(|| Error::format(format!("checkpoint missing {n2}")))?;
                opt.slot2[id.0].copy_from_slice(&a2.values);
            }
        }
        Ok(opt)
    }

    pub fn param_id_state(&self, id: ParamId) -> (&[f64], &[f64]) {
        (&self.slot1[id.0], &self.slot2[id.0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn store_with_grad(g: f64) -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("p", Tensor::zeros(vec![1]), true);
        store.accumulate_grad(id, &[g]).unwrap();
        (store, id)
    }

    #[test]
    fn schedule_floors_steps() {
        let s = LrSchedule {
            base: 5e-4,
            decay: 0.9,
            interval: 2500,
        };
        assert_eq!(s.at(0), 5e-4);
        assert_eq!(s.at(2499), 5e-4);
        assert!((s.at(5000) - 4.05e-4).abs() < 1e-12);
    }

    #[test]
    fn sgd_first_step_is_plain_gradient() {
        let (mut store, id) = store_with_grad(1.0);
        let mut opt = Optimizer::new(OptimKind::SgdMomentum { momentum: 0.9 }, &store);
        opt.step(&mut store, 0.1).unwrap();
        assert!((store.get(id).values()[0] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn sgd_momentum_accumulates() {
        let (mut store, id) = store_with_grad(1.0);
        let mut opt = Optimizer::new(OptimKind::SgdMomentum { momentum: 0.9 }, &store);
        opt.step(&mut store, 0.1).unwrap();
        // Same gradient again: buffer = 0.9*1 + 1 = 1.9.
        opt.step(&mut store, 0.1).unwrap();
        assert!((store.get(id).values()[0] + 0.1 + 0.19).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let (mut store, id) = store_with_grad(1.0);
        let mut opt = Optimizer::new(
            OptimKind::Adam {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            &store,
        );
        opt.step(&mut store, 0.01).unwrap();
        let delta = store.get(id).values()[0];
        assert!((delta + 0.01).abs() < 1e-6, "got {delta}");
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let (mut store, id) = store_with_grad(0.0);
        let mut sgd = Optimizer::new(OptimKind::SgdMomentum { momentum: 0.9 }, &store);
        sgd.step(&mut store, 0.1).unwrap();
        assert_eq!(store.get(id).values()[0], 0.0);

        let mut adam = Optimizer::new(
            OptimKind::Adam {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            &store,
        );
        adam.step(&mut store, 0.1).unwrap();
        assert!(store.get(id).values()[0].abs() < 1e-12);
    }

    #[test]
    fn state_round_trips_through_arrays() {
        let (mut store, _) = store_with_grad(0.5);
        let mut opt = Optimizer::new(
            OptimKind::Adam {
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            &store,
        );
        opt.step(&mut store, 0.01).unwrap();
        let arrays = opt.to_arrays(&store);
        let back = Optimizer::from_checkpoint(&opt.meta(), &arrays, &store).unwrap();
        assert_eq!(back.step_count, 1);
        assert_eq!(back.slot1, opt.slot1);
        assert_eq!(back.slot2, opt.slot2);
    }
}
