//! The assembled translator: language subnet, attention-augmented video
//! subnet and the clip-sampling head for either task framing, plus
//! checkpointing and sliding-window inference.

use crate::autograd::Var;
use crate::clip::{
    anchor_grid, decode_window, roi_pool, tef, Anchor, ClipWindow, ClipHead, HeadOutput,
    SegmentEnumeration, TaskMode, TefMode, ROI_SAMPLES,
};
use crate::data::{Checkpoint, NamedArray};
use crate::error::{Error, Result};
use crate::eval::{nms, sliding_offsets, ScoredWindow};
use crate::data::FeatureSequence;
use crate::lang::{LanguageSubnet, TokenQuery};
use crate::nn::{Ctx, ParamStore, RangeDropout};
use crate::tensor::Tensor;
use crate::video::{AttentionFeed, VideoSubnet, VideoSubnetConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub mode: TaskMode,
    /// Model input length in frames.
    pub frames: usize,
    pub frame_rate: f64,
    pub d_v: usize,
    /// Embedding rows (including any unknown-token row).
    pub vocab_rows: usize,
    pub d_w: usize,
    pub d_lang: usize,
    pub lstm_hidden: usize,
    pub lang_layers: usize,
    pub video: VideoSubnetConfig,
    pub tef: TefMode,
    pub head_channels: usize,
    pub num_classes: usize,
    pub n_segments: usize,
    pub segment_len: f64,
    pub dropout_input: f64,
    pub freeze_embeddings: bool,
    pub init_seed: u64,
}

impl ModelConfig {
    /// Seconds observed in one model window.
    pub fn window_duration(&self) -> f64 {
        self.frames as f64 / self.frame_rate
    }

    /// Duration implied by the segment enumeration (classification mode).
    pub fn enumeration_duration(&self) -> f64 {
        self.n_segments as f64 * self.segment_len
    }

    pub fn validate(&self) -> Result<()> {
        self.video.validate()?;
        self.video.check_length(self.frames)?;
        if self.frames < 2 {
            return Err(Error::config("model frames must be >= 2"));
        }
        if self.vocab_rows == 0 || self.d_w == 0 || self.d_lang == 0 || self.lstm_hidden == 0 {
            return Err(Error::config("language dimensions must be >= 1"));
        }
        if self.lang_layers == 0 {
            return Err(Error::config("lang_layers must be >= 1"));
        }
        if self.num_classes == 0 {
            return Err(Error::config("num_classes must be >= 1"));
        }
        if self.mode == TaskMode::Classification {
            let tau = self.window_duration();
            let dur = self.enumeration_duration();
            if (tau - dur).abs() > 1.0 / self.frame_rate + 1e-9 {
                return Err(Error::config(format!(
                    "classification window covers {tau:.3} s but the segment grid spans {dur:.3} s"
                )));
            }
        }
        Ok(())
    }
}

/// Per-anchor outputs of one detection forward pass.
pub struct AnchorOutput {
    pub anchor_idx: usize,
    pub head: HeadOutput,
}

pub struct AsstModel {
    pub cfg: ModelConfig,
    pub store: ParamStore,
    lang: LanguageSubnet,
    video: VideoSubnet,
    head: ClipHead,
    input_dropout: RangeDropout,
    segments: SegmentEnumeration,
    anchors: Vec<Anchor>,
}

impl AsstModel {
    /// Build with freshly initialized parameters; `initial_embeddings`
    /// overrides the random embedding table (e.g. rows loaded from a text
    /// embedding file).
    pub fn new(cfg: ModelConfig, initial_embeddings: Option<Tensor>) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        let mut store = ParamStore::new();
        let embeddings = match initial_embeddings {
            Some(e) => {
                if e.shape() != [cfg.vocab_rows, cfg.d_w] {
                    return Err(Error::shape(
                        "embedding table vs model config",
                        e.shape(),
                        &[cfg.vocab_rows, cfg.d_w],
                    ));
                }
                e
            }
            None => Tensor::glorot_uniform(
                vec![cfg.vocab_rows, cfg.d_w],
                cfg.vocab_rows,
                cfg.d_w,
                &mut rng,
            ),
        };
        let lang = LanguageSubnet::new(
            &mut store,
            "lang",
            embeddings,
            cfg.d_lang,
            cfg.lstm_hidden,
            cfg.lang_layers,
            cfg.video.dropout_hidden,
            cfg.freeze_embeddings,
            &mut rng,
        )?;
        let video = VideoSubnet::new(&mut store, "video", cfg.d_v, cfg.d_lang, cfg.video.clone(), &mut rng)?;
        let tef_extra = if cfg.tef == TefMode::Off { 0 } else { 2 };
        let (score_outputs, with_regression) = match cfg.mode {
            TaskMode::Classification => (1, false),
            TaskMode::Detection => (cfg.num_classes + 1, true),
        };
        let head = ClipHead::new(
            &mut store,
            "head",
            cfg.video.c_se + tef_extra,
            cfg.head_channels,
            score_outputs,
            with_regression,
            &mut rng,
        );
        let input_dropout = RangeDropout::new(cfg.dropout_input)?;
        let segments = SegmentEnumeration::new(cfg.n_segments, cfg.segment_len)?;
        let anchors = anchor_grid(cfg.window_duration());
        Ok(AsstModel {
            cfg,
            store,
            lang,
            video,
            head,
            input_dropout,
            segments,
            anchors,
        })
    }

    pub fn ctx(&self, train: bool, rng: ChaCha8Rng) -> Ctx<'_> {
        Ctx::new(&self.store, train, rng)
    }

    pub fn segments(&self) -> &SegmentEnumeration {
        &self.segments
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn language(&self) -> &LanguageSubnet {
        &self.lang
    }

    pub fn video_subnet(&self) -> &VideoSubnet {
        &self.video
    }

    fn encode_query(&self, ctx: &mut Ctx, query: &TokenQuery) -> Result<Option<Var>> {
        if self.cfg.video.attention_feed == AttentionFeed::None {
            return Ok(None);
        }
        Ok(Some(self.lang.encode(ctx, query)?))
    }

    /// The final representation sequence for a lifted feature value
    /// [m×d_v], with the per-frame TEF channels appended when configured.
    pub fn representation(&self, ctx: &mut Ctx, features: Var, query: &TokenQuery) -> Result<Var> {
        let x = self.input_dropout.forward(ctx, features)?;
        let lang = self.encode_query(ctx, query)?;
        let mut rep = self.video.forward(ctx, x, lang)?;
        if self.cfg.tef == TefMode::PerFrame {
            let m = ctx.tape.shape(rep)[0];
            let mut vals = Vec::with_capacity(m * 2);
            for j in 0..m {
                vals.push(j as f64 / m as f64);
                vals.push((j + 1) as f64 / m as f64);
            }
            let coords = ctx.tape.constant(vec![m, 2], vals)?;
            rep = ctx.tape.concat(&[rep, coords], 1)?;
        }
        Ok(rep)
    }

    fn pooled_for(&self, ctx: &mut Ctx, rep: Var, w: &ClipWindow, tau: f64) -> Result<Var> {
        let mut pooled = roi_pool(&mut ctx.tape, rep, w, tau)?;
        if self.cfg.tef == TefMode::PerPooledVector {
            let (s, e) = tef(w, tau);
            let vals: Vec<f64> = (0..ROI_SAMPLES).flat_map(|_| [s, e]).collect();
            let t = ctx.tape.constant(vec![ROI_SAMPLES, 2], vals)?;
            pooled = ctx.tape.concat(&[pooled, t], 1)?;
        }
        Ok(pooled)
    }

    /// Classification model: one logit per enumerated segment, shape [K]
    /// where K = n_seg(n_seg+1)/2.
    pub fn classification_scores(&self, ctx: &mut Ctx, features: Var, query: &TokenQuery) -> Result<Var> {
        if self.cfg.mode != TaskMode::Classification {
            return Err(Error::contract("model was built in detection mode"));
        }
        let rep = self.representation(ctx, features, query)?;
        let tau = self.cfg.enumeration_duration();
        let mut scores = Vec::with_capacity(self.segments.len());
        for idx in 0..self.segments.len() {
            let w = self.segments.window(idx);
            let pooled = self.pooled_for(ctx, rep, &w, tau)?;
            let out = self.head.forward(ctx, pooled)?;
            scores.push(out.logits);
        }
        let stacked = ctx.tape.concat(&scores, 0)?;
        ctx.tape.reshape(stacked, vec![self.segments.len()])
    }

    /// Detection model outputs for the requested anchors (all of them when
    /// `anchor_indices` is None).
    pub fn detection_outputs(
        &self,
        ctx: &mut Ctx,
        features: Var,
        query: &TokenQuery,
        anchor_indices: Option<&[usize]>,
    ) -> Result<Vec<AnchorOutput>> {
        if self.cfg.mode != TaskMode::Detection {
            return Err(Error::contract("model was built in classification mode"));
        }
        let rep = self.representation(ctx, features, query)?;
        let tau = self.cfg.window_duration();
        let all: Vec<usize>;
        let wanted: &[usize] = match anchor_indices {
            Some(list) => list,
            None => {
                all = (0..self.anchors.len()).collect();
                &all
            }
        };
        let mut outputs = Vec::with_capacity(wanted.len());
        for &ai in wanted {
            let w = self.anchors[ai].window();
            let pooled = self.pooled_for(ctx, rep, &w, tau)?;
            let head = self.head.forward(ctx, pooled)?;
            outputs.push(AnchorOutput {
                anchor_idx: ai,
                head,
            });
        }
        Ok(outputs)
    }

    /// Inference-time classification scores as plain probabilities over the
    /// enumerated segments.
    pub fn classify(&self, seq: &FeatureSequence, query: &TokenQuery) -> Result<Vec<f64>> {
        if seq.frames() != self.cfg.frames {
            return Err(Error::contract(format!(
                "classification expects whole videos of {} frames, got {}",
                self.cfg.frames,
                seq.frames()
            )));
        }
        let mut ctx = self.ctx(false, ChaCha8Rng::seed_from_u64(0));
        let x = ctx.constant_from(&seq.features);
        let logits = self.classification_scores(&mut ctx, x, query)?;
        let probs = ctx.tape.softmax(logits, 0)?;
        Ok(ctx.tape.values(probs).to_vec())
    }

    /// Score one model-length window of features with every anchor,
    /// returning per-class probabilities and decoded deltas.
    pub fn detect_window(&self, features: &Tensor, query: &TokenQuery) -> Result<Vec<WindowDetection>> {
        let mut ctx = self.ctx(false, ChaCha8Rng::seed_from_u64(0));
        let x = ctx.constant_from(features);
        let outs = self.detection_outputs(&mut ctx, x, query, None)?;
        let mut result = Vec::with_capacity(outs.len());
        for o in outs {
            let probs_var = ctx.tape.softmax(o.head.logits, 1)?;
            let probs = ctx.tape.values(probs_var).to_vec();
            let reg = ctx.tape.values(o.head.regression.expect("detection head regresses"));
            result.push(WindowDetection {
                anchor_idx: o.anchor_idx,
                class_probs: probs,
                d_c: reg[0],
                d_l: reg[1],
            });
        }
        Ok(result)
    }

    /// Slide the model along a video, decode every anchor at every offset,
    /// and suppress duplicates. Scores are foreground-class probabilities;
    /// with several foreground classes each anchor emits one candidate per
    /// class.
    pub fn sliding_inference(
        &self,
        video_id: &str,
        description_idx: usize,
        seq: &FeatureSequence,
        query: &TokenQuery,
        stride_fraction: f64,
        nms_thresh: f64,
    ) -> Result<Vec<ScoredWindow>> {
        let m_model = self.cfg.frames;
        let tau_m = self.cfg.window_duration();
        let fr = seq.frame_rate;
        let d_v = seq.channels();
        if d_v != self.cfg.d_v {
            return Err(Error::shape(
                "video channels vs model",
                seq.features.shape(),
                &[m_model, self.cfg.d_v],
            ));
        }
        let offsets = sliding_offsets(seq.duration, tau_m, tau_m * stride_fraction);
        let mut candidates = Vec::new();
        for &offset in &offsets {
            let (window_feats, local_shift) = if seq.frames() >= m_model {
                let fo = ((offset * fr).round() as usize).min(seq.frames() - m_model);
                let mut vals = Vec::with_capacity(m_model * d_v);
                vals.extend_from_slice(
                    &seq.features.values()[fo * d_v..(fo + m_model) * d_v],
                );
                (Tensor::new(vec![m_model, d_v], vals)?, fo as f64 / fr)
            } else {
                // Shorter video: center it in a zero-padded window.
                let pad_left = (m_model - seq.frames()) / 2;
                let mut vals = vec![0.0; m_model * d_v];
                vals[pad_left * d_v..(pad_left + seq.frames()) * d_v]
                    .copy_from_slice(seq.features.values());
                (
                    Tensor::new(vec![m_model, d_v], vals)?,
                    -(pad_left as f64) / fr,
                )
            };
            let detections = self.detect_window(&window_feats, query)?;
            for det in detections {
                let anchor = &self.anchors[det.anchor_idx];
                let local = decode_window(anchor, det.d_c, det.d_l, tau_m);
                let global = local.shifted(local_shift).clipped(seq.duration);
                for class in 0..self.cfg.num_classes {
                    candidates.push(ScoredWindow {
                        video_id: video_id.to_string(),
                        description_idx,
                        window: [global.start, global.end],
                        score: det.class_probs[class + 1],
                        class_id: Some(class),
                    });
                }
            }
        }
        Ok(nms(&candidates, nms_thresh))
    }

    /// Run one inference forward with attention recording enabled and return
    /// every fed layer's word×frame weight matrix.
    pub fn inspect_attention(
        &self,
        features: &Tensor,
        query: &TokenQuery,
    ) -> Result<Vec<crate::nn::AttentionRecord>> {
        let mut ctx = self.ctx(false, ChaCha8Rng::seed_from_u64(0));
        ctx.attn_dump = Some(Vec::new());
        let x = ctx.constant_from(features);
        self.representation(&mut ctx, x, query)?;
        Ok(ctx.attn_dump.take().unwrap_or_default())
    }

    // ----- checkpointing ---------------------------------------------------

    pub fn to_checkpoint(&self, step: u64, seed: u64, optimizer: Option<serde_json::Value>, extra_arrays: Vec<NamedArray>) -> Checkpoint {
        let mut arrays: Vec<NamedArray> = self
            .store
            .ids()
            .map(|id| NamedArray {
                name: self.store.name(id).to_string(),
                shape: self.store.get(id).shape().to_vec(),
                values: self.store.get(id).values().to_vec(),
            })
            .collect();
        arrays.extend(extra_arrays);
        Checkpoint {
            meta: serde_json::json!({
                "step": step,
                "seed": seed,
                "model": self.cfg,
                "optimizer": optimizer,
                "version": env!("CARGO_PKG_VERSION"),
            }),
            arrays,
        }
    }

    /// Rebuild a model from a checkpoint; optimizer arrays ("opt.*") are left
    /// for the caller.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<AsstModel> {
        let cfg: ModelConfig = serde_json::from_value(ckpt.meta["model"].clone())
            .map_err(|e| Error::format(format!("checkpoint model config: {e}")))?;
        let mut model = AsstModel::new(cfg, None)?;
        for id in model.store.ids().collect::<Vec<_>>() {
            let name = model.store.name(id).to_string();
            let arr = ckpt
                .array(&name)
                .ok_or_else(|| Error::format(format!("checkpoint missing parameter {name}")))?;
            if arr.shape != model.store.get(id).shape() {
                return Err(Error::shape(
                    format!("checkpoint parameter {name}"),
                    &arr.shape,
                    model.store.get(id).shape(),
                ));
            }
            model
                .store
                .get_mut(id)
                .values_mut()
                .copy_from_slice(&arr.values);
        }
        Ok(model)
    }
}

/// Raw per-anchor inference result for one model window.
pub struct WindowDetection {
    pub anchor_idx: usize,
    /// softmax over (background, class 1, ..., class K).
    pub class_probs: Vec<f64>,
    pub d_c: f64,
    pub d_l: f64,
}
