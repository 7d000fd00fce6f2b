//! Batch training loop for both task framings.
//!
//! One step: draw a batch of (video, description) pairs, build each sample's
//! tape (in parallel across worker threads), accumulate the per-sample
//! parameter gradients into the store in sample order, fold the deferred
//! batch-norm updates in the same order, and apply one optimizer step.
//! Every random draw derives from (seed, step, slot), so runs reproduce
//! bit-exactly regardless of thread count and resuming from a checkpoint
//! continues the original trajectory.

use super::augment::augment_sample;
use super::losses::mohem_select;
use super::optim::{LrSchedule, Optimizer};
use crate::clip::{assign_positives, encode_targets, AnchorLabel, ClipWindow, TaskMode};
use crate::data::LoadedDataset;
use crate::error::{Error, Result};
use crate::lang::TokenQuery;
use crate::model::AsstModel;
use crate::nn::BnUpdate;
use crate::nn::ParamId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct TrainerSettings {
    pub batch_size: usize,
    pub seed: u64,
    pub mohem: bool,
    pub neg_per_pos: usize,
    pub scale_range: (f64, f64),
    pub iou_positive: f64,
    pub threads: usize,
}

/// A training pair with its targets resolved up front.
#[derive(Debug, Clone)]
pub struct PreparedPair {
    pub video_idx: usize,
    pub desc_idx: usize,
    pub query: TokenQuery,
    pub segment_index: Option<usize>,
    pub gts: Vec<(ClipWindow, usize)>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct StepStats {
    pub loss: f64,
    pub cls: f64,
    pub reg: f64,
}

struct SampleResult {
    slot: usize,
    grads: Vec<(ParamId, Vec<f64>)>,
    bn: Vec<BnUpdate>,
    loss: f64,
    cls: f64,
    reg: f64,
}

pub struct Trainer<'d> {
    pub model: AsstModel,
    pub optimizer: Optimizer,
    pub schedule: LrSchedule,
    pub settings: TrainerSettings,
    dataset: &'d LoadedDataset,
    pairs: Vec<PreparedPair>,
}

/// Derive an independent stream seed from (seed, step, slot).
fn stream_seed(seed: u64, step: u64, slot: u64) -> u64 {
    let mut z = seed
        ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ slot.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Resolve every annotated pair into training targets, checking that the
/// annotations fit the task mode.
pub fn prepare_pairs(
    dataset: &LoadedDataset,
    mode: TaskMode,
    num_classes: usize,
    lookup: Option<&dyn Fn(&str) -> usize>,
) -> Result<Vec<PreparedPair>> {
    let mut pairs = Vec::new();
    for (vi, video) in dataset.annotations.videos.iter().enumerate() {
        for (di, desc) in video.descriptions.iter().enumerate() {
            let tokens = dataset.resolve_tokens(&desc.tokens, lookup)?;
            let query = TokenQuery::new(tokens)?;
            let windows = desc.clip_windows()?;
            let class = desc.class_id.unwrap_or(0);
            if num_classes > 1 && class >= num_classes {
                return Err(Error::config(format!(
                    "video {} description {di}: class id {class} exceeds num_classes {num_classes}",
                    video.video_id
                )));
            }
            let class = if num_classes == 1 { 0 } else { class };
            if mode == TaskMode::Classification && desc.segment_index.is_none() {
                return Err(Error::config(format!(
                    "classification training needs segment_index annotations (video {}, description {di})",
                    video.video_id
                )));
            }
            pairs.push(PreparedPair {
                video_idx: vi,
                desc_idx: di,
                query,
                segment_index: desc.segment_index,
                gts: windows.into_iter().map(|w| (w, class)).collect(),
            });
        }
    }
    if pairs.is_empty() {
        return Err(Error::config("dataset has no annotated pairs"));
    }
    Ok(pairs)
}

impl<'d> Trainer<'d> {
    pub fn new(
        model: AsstModel,
        optimizer: Optimizer,
        schedule: LrSchedule,
        settings: TrainerSettings,
        dataset: &'d LoadedDataset,
        pairs: Vec<PreparedPair>,
    ) -> Self {
        Trainer {
            model,
            optimizer,
            schedule,
            settings,
            dataset,
            pairs,
        }
    }

    pub fn pairs(&self) -> &[PreparedPair] {
        &self.pairs
    }

    fn run_sample(&self, pair: &PreparedPair, slot: usize, sample_seed: u64, inv_b: f64) -> Result<SampleResult> {
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
        match self.model.cfg.mode {
            TaskMode::Classification => {
                let target = pair.segment_index.expect("checked during preparation");
                let seq = &self.dataset.features[pair.video_idx];
                let mut ctx = self.model.ctx(true, rng);
                let x = ctx.constant_from(&seq.features);
                let scores = self.model.classification_scores(&mut ctx, x, &pair.query)?;
                let loss = ctx.tape.softmax_cross_entropy(scores, target)?;
                let scaled = ctx.tape.affine(loss, inv_b, 0.0);
                let loss_value = ctx.tape.value_scalar(loss);
                let grads = ctx.backward_grads(scaled)?;
                Ok(SampleResult {
                    slot,
                    grads,
                    bn: std::mem::take(&mut ctx.bn_updates),
                    loss: loss_value,
                    cls: loss_value,
                    reg: 0.0,
                })
            }
            TaskMode::Detection => {
                let seq = &self.dataset.features[pair.video_idx];
                let aug = augment_sample(
                    seq,
                    &pair.gts,
                    self.model.cfg.frames,
                    self.settings.scale_range,
                    &mut rng,
                )?;
                let gt_windows: Vec<ClipWindow> = aug.gts.iter().map(|(w, _)| *w).collect();
                let labels = assign_positives(
                    self.model.anchors(),
                    &gt_windows,
                    self.settings.iou_positive,
                );
                let positives: Vec<(usize, usize)> = labels
                    .iter()
                    .enumerate()
                    .filter_map(|(ai, l)| match l {
                        AnchorLabel::Positive(gi) => Some((ai, *gi)),
                        AnchorLabel::Negative => None,
                    })
                    .collect();
                let negative_pool: Vec<usize> = labels
                    .iter()
                    .enumerate()
                    .filter_map(|(ai, l)| matches!(l, AnchorLabel::Negative).then_some(ai))
                    .collect();
                // 1:1 by default; at least one negative keeps the background
                // class training when nothing matched.
                let want_neg = (positives.len().max(1)) * self.settings.neg_per_pos.max(1);
                let mut pool = negative_pool;
                let mut negatives = Vec::with_capacity(want_neg.min(pool.len()));
                for _ in 0..want_neg.min(pool.len()) {
                    let k = rng.gen_range(0..pool.len());
                    negatives.push(pool.swap_remove(k));
                }
                negatives.sort_unstable();

                let mut selected: Vec<(usize, Option<usize>)> = Vec::new();
                for (ai, gi) in &positives {
                    selected.push((*ai, Some(*gi)));
                }
                for ai in &negatives {
                    selected.push((*ai, None));
                }
                let anchor_indices: Vec<usize> = selected.iter().map(|(ai, _)| *ai).collect();

                let mut ctx = self.model.ctx(true, rng);
                let x = ctx.constant_from(&aug.features);
                let outputs =
                    self.model
                        .detection_outputs(&mut ctx, x, &pair.query, Some(&anchor_indices))?;

                // Per-anchor classification losses.
                let mut ce_vars = Vec::with_capacity(outputs.len());
                let mut ce_vals = Vec::with_capacity(outputs.len());
                for (out, (_, gi)) in outputs.iter().zip(&selected) {
                    let target = match gi {
                        Some(gi) => aug.gts[*gi].1 + 1,
                        None => 0,
                    };
                    let ce = ctx.tape.softmax_cross_entropy(out.head.logits, target)?;
                    ce_vals.push(ctx.tape.value_scalar(ce));
                    ce_vars.push(ce);
                }
                let kept: Vec<usize> = if self.settings.mohem {
                    mohem_select(&ce_vals)
                } else {
                    (0..ce_vars.len()).collect()
                };
                let kept_vars: Vec<_> = kept.iter().map(|i| ce_vars[*i]).collect();
                let stacked = ctx.tape.concat(&kept_vars, 0)?;
                let summed = ctx.tape.sum_all(stacked);
                let cls_loss = ctx.tape.affine(summed, 1.0 / kept_vars.len() as f64, 0.0);

                // Regression over positives.
                let mut loss = cls_loss;
                let mut reg_value = 0.0;
                if !positives.is_empty() {
                    let mut sl_parts = Vec::with_capacity(positives.len());
                    for (out, (ai, gi)) in outputs.iter().zip(&selected) {
                        let Some(gi) = gi else { continue };
                        let anchor = &self.model.anchors()[*ai];
                        let (d_c, d_l) = encode_targets(anchor, &aug.gts[*gi].0);
                        let reg = out.head.regression.expect("detection head regresses");
                        let sl = ctx.tape.smooth_l1(reg, &[d_c, d_l])?;
                        sl_parts.push(sl);
                    }
                    let stacked = ctx.tape.concat(&sl_parts, 0)?;
                    let summed = ctx.tape.sum_all(stacked);
                    let reg_loss =
                        ctx.tape.affine(summed, 1.0 / (2.0 * positives.len() as f64), 0.0);
                    reg_value = ctx.tape.value_scalar(reg_loss);
                    loss = ctx.tape.add(cls_loss, reg_loss)?;
                }
                let cls_value = ctx.tape.value_scalar(cls_loss);
                let scaled = ctx.tape.affine(loss, inv_b, 0.0);
                let grads = ctx.backward_grads(scaled)?;
                Ok(SampleResult {
                    slot,
                    grads,
                    bn: std::mem::take(&mut ctx.bn_updates),
                    loss: cls_value + reg_value,
                    cls: cls_value,
                    reg: reg_value,
                })
            }
        }
    }

    /// One optimizer step over a freshly drawn batch.
    pub fn train_step(&mut self, step: usize) -> Result<StepStats> {
        let b = self.settings.batch_size;
        let inv_b = 1.0 / b as f64;
        let mut batch_rng =
            ChaCha8Rng::seed_from_u64(stream_seed(self.settings.seed, step as u64, u64::MAX));
        let batch: Vec<usize> = (0..b)
            .map(|_| batch_rng.gen_range(0..self.pairs.len()))
            .collect();

        let threads = self.settings.threads.clamp(1, b);
        let mut results: Vec<SampleResult> = if threads == 1 {
            batch
                .iter()
                .enumerate()
                .map(|(slot, pi)| {
                    let seed = stream_seed(self.settings.seed, step as u64, slot as u64);
                    self.run_sample(&self.pairs[*pi], slot, seed, inv_b)
                })
                .collect::<Result<_>>()?
        } else {
            let trainer = &*self;
            let batch_ref = &batch;
            std::thread::scope(|scope| -> Result<Vec<SampleResult>> {
                let handles: Vec<_> = (0..threads)
                    .map(|t| {
                        scope.spawn(move || -> Result<Vec<SampleResult>> {
                            let mut out = Vec::new();
                            for (slot, pi) in batch_ref.iter().enumerate() {
                                if slot % threads != t {
                                    continue;
                                }
                                let seed = stream_seed(
                                    trainer.settings.seed,
                                    step as u64,
                                    slot as u64,
                                );
                                out.push(trainer.run_sample(
                                    &trainer.pairs[*pi],
                                    slot,
                                    seed,
                                    inv_b,
                                )?);
                            }
                            Ok(out)
                        })
                    })
                    .collect();
                let mut all = Vec::with_capacity(b);
                for h in handles {
                    all.extend(h.join().expect("training worker panicked")?);
                }
                Ok(all)
            })?
        };
        // Deterministic reduction: accumulate in batch-slot order.
        results.sort_by_key(|r| r.slot);

        self.model.store.zero_grads();
        let mut stats = StepStats::default();
        for r in &results {
            for (id, g) in &r.grads {
                self.model.store.accumulate_grad(*id, g)?;
            }
            for bn in &r.bn {
                bn.apply(&mut self.model.store);
            }
            stats.loss += r.loss * inv_b;
            stats.cls += r.cls * inv_b;
            stats.reg += r.reg * inv_b;
        }
        let lr = self.schedule.at(step);
        self.optimizer.step(&mut self.model.store, lr)?;
        Ok(stats)
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        self.schedule.at(step)
    }
}

/// Worker-thread cap: the ASST_THREADS variable wins, then the machine's
/// available parallelism.
pub fn default_threads() -> usize {
    if let Ok(v) = std::env::var("ASST_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            return n.max(1);
        }
    }
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stream_seeds_differ_across_slots_and_steps() {
        let a = stream_seed(7, 0, 0);
        let b = stream_seed(7, 0, 1);
        let c = stream_seed(7, 1, 0);
        let d = stream_seed(8, 0, 0);
        assert!(a != b && a != c && a != d && b != c);
    }
}
