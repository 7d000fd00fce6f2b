//! Composition layer: dataset-wide inference, prediction scoring, and the
//! gradient-check table behind the `gradcheck` command.

use crate::autograd::Padding;
use crate::clip::{roi_pool, ClipWindow, SegmentEnumeration, TaskMode, TefMode};
use crate::data::{AnnotationSet, EvalSettings, LoadedDataset};
use crate::error::{Error, Result};
use crate::eval::{
    mean_average_precision, miou, rank_at_k_classification, rank_at_k_detection, EvalReport,
    GroundTruth, ScoredWindow,
};
use crate::lang::TokenQuery;
use crate::model::{AsstModel, ModelConfig};
use crate::nn::{apply_mask, glu, linear_interp_resize, BiLstmLayer, Ctx, ParamId, ParamStore};
use crate::tensor::Tensor;
use crate::train::PreparedPair;
use crate::video::{AttentionFeed, VideoSubnetConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

// ---------------------------------------------------------------------------
// Inference over a dataset
// ---------------------------------------------------------------------------

/// Run the model over every prepared pair and emit scored windows: one per
/// enumerated segment (classification) or the NMS survivors of sliding
/// inference (detection). Pairs may be evaluated on several threads; the
/// output order is by pair index regardless of thread count.
pub fn infer_dataset(
    model: &AsstModel,
    dataset: &LoadedDataset,
    pairs: &[PreparedPair],
    settings: &EvalSettings,
    threads: usize,
) -> Result<Vec<ScoredWindow>> {
    let run_pair = |pair: &PreparedPair| -> Result<Vec<ScoredWindow>> {
        let video = &dataset.annotations.videos[pair.video_idx];
        let seq = &dataset.features[pair.video_idx];
        match model.cfg.mode {
            TaskMode::Classification => {
                let probs = model.classify(seq, &pair.query)?;
                Ok(probs
                    .iter()
                    .enumerate()
                    .map(|(idx, p)| {
                        let w = model.segments().window(idx);
                        ScoredWindow {
                            video_id: video.video_id.clone(),
                            description_idx: pair.desc_idx,
                            window: [w.start, w.end],
                            score: *p,
                            class_id: None,
                        }
                    })
                    .collect())
            }
            TaskMode::Detection => model.sliding_inference(
                &video.video_id,
                pair.desc_idx,
                seq,
                &pair.query,
                settings.stride_fraction,
                settings.nms_thresh,
            ),
        }
    };

    let threads = threads.clamp(1, pairs.len().max(1));
    let mut per_pair: Vec<Vec<ScoredWindow>> = if threads == 1 {
        pairs.iter().map(run_pair).collect::<Result<_>>()?
    } else {
        std::thread::scope(|scope| -> Result<Vec<Vec<ScoredWindow>>> {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    scope.spawn(move || -> Result<Vec<(usize, Vec<ScoredWindow>)>> {
                        pairs
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| i % threads == t)
                            .map(|(i, p)| run_pair(p).map(|r| (i, r)))
                            .collect()
                    })
                })
                .collect();
            let mut indexed = Vec::with_capacity(pairs.len());
            for h in handles {
                indexed.extend(h.join().expect("inference worker panicked")?);
            }
            indexed.sort_by_key(|(i, _)| *i);
            Ok(indexed.into_iter().map(|(_, r)| r).collect())
        })?
    };
    Ok(per_pair.drain(..).flatten().collect())
}

// ---------------------------------------------------------------------------
// Scoring predictions against annotations
// ---------------------------------------------------------------------------

fn group_by_pair<'a>(
    preds: &'a [ScoredWindow],
    annotations: &AnnotationSet,
) -> Result<BTreeMap<(String, usize), Vec<&'a ScoredWindow>>> {
    let mut grouped: BTreeMap<(String, usize), Vec<&ScoredWindow>> = BTreeMap::new();
    for p in preds {
        if annotations.find_video(&p.video_id).is_none() {
            return Err(Error::format(format!(
                "prediction references unknown video_id {:?}",
                p.video_id
            )));
        }
        grouped
            .entry((p.video_id.clone(), p.description_idx))
            .or_default()
            .push(p);
    }
    Ok(grouped)
}

/// Score a prediction set. Classification datasets (segment_index present)
/// are ranked over the segment enumeration; detection datasets get
/// IoU-thresholded rank metrics and mAP at each configured threshold.
/// `num_classes` mirrors the detection head: with a single foreground class
/// every ground truth collapses to class 0.
pub fn evaluate_predictions(
    preds: &[ScoredWindow],
    annotations: &AnnotationSet,
    segments: &SegmentEnumeration,
    settings: &EvalSettings,
    num_classes: usize,
) -> Result<EvalReport> {
    let grouped = group_by_pair(preds, annotations)?;
    let classification = annotations
        .videos
        .iter()
        .flat_map(|v| &v.descriptions)
        .all(|d| d.segment_index.is_some());

    let mut report = EvalReport::default();
    if classification {
        let mut rank_pairs: Vec<(Vec<usize>, usize)> = Vec::new();
        let mut miou_pairs: Vec<(Option<ClipWindow>, ClipWindow)> = Vec::new();
        for v in &annotations.videos {
            for (di, d) in v.descriptions.iter().enumerate() {
                let gt_idx = d.segment_index.expect("checked above");
                let gt_window = segments.window(gt_idx);
                let empty = Vec::new();
                let ps = grouped
                    .get(&(v.video_id.clone(), di))
                    .unwrap_or(&empty);
                // Map windows onto segment ids, then rank by score.
                let mut scored: Vec<(usize, f64)> = Vec::with_capacity(ps.len());
                for p in ps {
                    let idx = segments.index_of_window(&p.clip(), 1e-6).ok_or_else(|| {
                        Error::format(format!(
                            "prediction window [{}, {}] for {} matches no enumerated segment",
                            p.window[0], p.window[1], v.video_id
                        ))
                    })?;
                    scored.push((idx, p.score));
                }
                scored.sort_by(|a, b| {
                    b.1.partial_cmp(&a.1)
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(a.0.cmp(&b.0))
                });
                let ranked: Vec<usize> = scored.iter().map(|(i, _)| *i).collect();
                let top1 = ranked.first().map(|i| segments.window(*i));
                rank_pairs.push((ranked, gt_idx));
                miou_pairs.push((top1, gt_window));
            }
        }
        report.rank1 = Some(rank_at_k_classification(&rank_pairs, 1));
        report.rank5 = Some(rank_at_k_classification(&rank_pairs, 5));
        report.miou = Some(miou(&miou_pairs));
    } else {
        let mut ranked_pairs: Vec<(Vec<ClipWindow>, Vec<ClipWindow>)> = Vec::new();
        let mut miou_pairs: Vec<(Option<ClipWindow>, ClipWindow)> = Vec::new();
        let mut all_preds: Vec<ScoredWindow> = Vec::new();
        let mut all_gts: Vec<(usize, GroundTruth)> = Vec::new();
        for v in &annotations.videos {
            for (di, d) in v.descriptions.iter().enumerate() {
                let gts = d.clip_windows()?;
                let class = if num_classes == 1 {
                    0
                } else {
                    d.class_id.unwrap_or(0)
                };
                let empty = Vec::new();
                let ps = grouped.get(&(v.video_id.clone(), di)).unwrap_or(&empty);
                let mut sorted: Vec<&ScoredWindow> = ps.clone();
                sorted.sort_by(|a, b| crate::eval::nms_priority(a, b));
                let ranked: Vec<ClipWindow> = sorted.iter().map(|p| p.clip()).collect();
                miou_pairs.push((
                    ranked.first().copied(),
                    gts.first().copied().ok_or_else(|| {
                        Error::format(format!("video {}: description without clips", v.video_id))
                    })?,
                ));
                ranked_pairs.push((ranked, gts.clone()));
                all_preds.extend(sorted.iter().map(|p| (*p).clone()));
                for g in gts {
                    all_gts.push((
                        class,
                        GroundTruth {
                            video_id: v.video_id.clone(),
                            description_idx: di,
                            window: g,
                        },
                    ));
                }
            }
        }
        let flavor = settings.ap_flavor();
        for (ti, thresh) in settings.iou_thresholds.iter().enumerate() {
            let r1 = rank_at_k_detection(&ranked_pairs, 1, *thresh);
            let r5 = rank_at_k_detection(&ranked_pairs, 5, *thresh);
            let (map, per_class) = mean_average_precision(&all_preds, &all_gts, *thresh, flavor);
            report
                .detail
                .insert(format!("rank1@{thresh}"), r1);
            report
                .detail
                .insert(format!("rank5@{thresh}"), r5);
            if let Some(m) = map {
                report.detail.insert(format!("map@{thresh}"), m);
            }
            if ti == 0 {
                report.rank1 = Some(r1);
                report.rank5 = Some(r5);
                report.map = map;
                report.per_class_ap = per_class
                    .into_iter()
                    .map(|(c, ap)| (c.to_string(), ap))
                    .collect();
            }
        }
        report.miou = Some(miou(&miou_pairs));
    }
    Ok(report)
}

/// Keep only the requested metric names in a report (None keeps everything).
pub fn filter_report(report: &mut EvalReport, metrics: Option<&[String]>) {
    let Some(wanted) = metrics else { return };
    let keep = |name: &str| wanted.iter().any(|m| m == name);
    if !keep("rank1") {
        report.rank1 = None;
    }
    if !keep("rank5") {
        report.rank5 = None;
    }
    if !keep("miou") {
        report.miou = None;
    }
    if !keep("map") {
        report.map = None;
        report.per_class_ap.clear();
    }
    report
        .detail
        .retain(|k, _| wanted.iter().any(|m| k.starts_with(m.as_str())));
}

// ---------------------------------------------------------------------------
// Gradient-check table
// ---------------------------------------------------------------------------

pub struct GradcheckRow {
    pub name: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradcheckRow {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

/// Central-difference check of every parameter (and the planted input) of a
/// store-backed forward function.
pub fn grad_check_params(
    store: &mut ParamStore,
    forward: &dyn Fn(&ParamStore) -> Result<f64>,
    analytic: &[(ParamId, Vec<f64>)],
    eps: f64,
) -> Result<f64> {
    let by_id: BTreeMap<usize, &Vec<f64>> = analytic.iter().map(|(id, g)| (id.0, g)).collect();
    let ids = store.trainable_ids();
    let mut max_err = 0.0_f64;
    for id in ids {
        let numel = store.get(id).numel();
        let zeros = vec![0.0; numel];
        let g = by_id.get(&id.0).map(|v| v.as_slice()).unwrap_or(&zeros);
        for i in 0..numel {
            let orig = store.get(id).values()[i];
            store.get_mut(id).values_mut()[i] = orig + eps;
            let fp = forward(store)?;
            store.get_mut(id).values_mut()[i] = orig - eps;
            let fm = forward(store)?;
            store.get_mut(id).values_mut()[i] = orig;
            let numeric = (fp - fm) / (2.0 * eps);
            let err = (g[i] - numeric).abs() / numeric.abs().max(1.0);
            max_err = max_err.max(err);
        }
    }
    Ok(max_err)
}

fn rand_tensor(shape: Vec<usize>, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.2..1.2)).collect()).unwrap()
}

/// Gradient-check a closure that builds its layer over a scratch store with
/// the checked input planted as a trainable entry.
fn check_store_fn(
    store: &mut ParamStore,
    forward: &dyn Fn(&ParamStore) -> Result<f64>,
    build_loss: &dyn Fn(&mut Ctx) -> Result<crate::autograd::Var>,
    eps: f64,
) -> Result<f64> {
    let grads = {
        let mut ctx = Ctx::new(store, true, ChaCha8Rng::seed_from_u64(0));
        let loss = build_loss(&mut ctx)?;
        ctx.backward_grads(loss)?
    };
    grad_check_params(store, forward, &grads, eps)
}

const EPS: f64 = 1e-4;
const TOL: f64 = 1e-4;

/// The per-layer and full-model gradient table. Every row compares the tape
/// gradient with central differences at double precision.
pub fn gradcheck_rows() -> Result<Vec<GradcheckRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut rows: Vec<GradcheckRow> = Vec::new();
    let mut push = |name: &str, err: f64| {
        rows.push(GradcheckRow {
            name: name.to_string(),
            max_rel_err: err,
            tolerance: TOL,
        });
    };

    // conv1d variants (input, kernel and bias all checked).
    for (name, dilation, stride, padding) in [
        ("conv1d same", 1, 1, Padding::Same),
        ("conv1d dilation 2", 2, 1, Padding::Same),
        ("conv1d stride 2", 1, 2, Padding::Same),
        ("conv1d valid", 1, 1, Padding::Valid),
    ] {
        let x = rand_tensor(vec![8, 3], &mut rng);
        let w = rand_tensor(vec![3, 3, 2], &mut rng);
        let b = rand_tensor(vec![2], &mut rng);
        let err = crate::autograd::grad_check_multi(
            |t, vs| {
                let y = t.conv1d(vs[0], vs[1], vs[2], dilation, stride, padding)?;
                let y = t.tanh(y);
                Ok(t.sum_all(y))
            },
            &[&x, &w, &b],
            EPS,
        )?;
        push(name, err);
    }

    // GLU.
    {
        let x = rand_tensor(vec![3, 6], &mut rng);
        let err = crate::autograd::grad_check(
            |t, v| {
                let g = glu(t, v)?;
                Ok(t.sum_all(g))
            },
            &x,
            EPS,
        )?;
        push("glu", err);
    }

    // BatchNorm, training and inference statistics.
    {
        let x = rand_tensor(vec![6, 3], &mut rng);
        let gamma = rand_tensor(vec![3], &mut rng);
        let beta = rand_tensor(vec![3], &mut rng);
        let err = crate::autograd::grad_check_multi(
            |t, vs| {
                let (y, _) = t.batch_norm(vs[0], vs[1], vs[2], 1e-5, None)?;
                let y = t.tanh(y);
                Ok(t.sum_all(y))
            },
            &[&x, &gamma, &beta],
            EPS,
        )?;
        push("batchnorm train", err);

        let mean = vec![0.2, -0.4, 0.1];
        let var = vec![1.3, 0.6, 2.0];
        let err = crate::autograd::grad_check_multi(
            |t, vs| {
                let (y, _) = t.batch_norm(vs[0], vs[1], vs[2], 1e-5, Some((&mean, &var)))?;
                let y = t.tanh(y);
                Ok(t.sum_all(y))
            },
            &[&x, &gamma, &beta],
            EPS,
        )?;
        push("batchnorm infer", err);
    }

    // Range dropout at a fixed mask.
    {
        let x = rand_tensor(vec![4, 5], &mut rng);
        let keep = 0.7;
        let mask: Vec<f64> = (0..20)
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let err = crate::autograd::grad_check(
            |t, v| {
                let y = apply_mask(t, v, &mask)?;
                let y = t.sigmoid(y);
                Ok(t.sum_all(y))
            },
            &x,
            EPS,
        )?;
        push("range dropout (fixed mask)", err);
    }

    // Linear interpolation resize.
    {
        let x = rand_tensor(vec![5, 3], &mut rng);
        let err = crate::autograd::grad_check(
            |t, v| {
                let y = linear_interp_resize(t, v, 9)?;
                let y = t.tanh(y);
                Ok(t.sum_all(y))
            },
            &x,
            EPS,
        )?;
        push("linear_interp_resize", err);
    }

    // LSTM cell (one step) and the full residual biLSTM layer, checked
    // through every parameter and the input.
    {
        let mut store = ParamStore::new();
        let x_id = store.add("x", rand_tensor(vec![1, 3], &mut rng), true);
        let cell = crate::nn::LstmParams::new(&mut store, "cell", 3, 2, &mut rng);
        let loss = |ctx: &mut Ctx| -> Result<crate::autograd::Var> {
            let x_id = ctx.store.lookup("x").unwrap();
            let x = ctx.param(x_id);
            let h = cell.forward_seq(ctx, x, false)?;
            Ok(ctx.tape.sum_all(h))
        };
        let forward = |store: &ParamStore| -> Result<f64> {
            let mut ctx = Ctx::new(store, true, ChaCha8Rng::seed_from_u64(0));
            let l = loss(&mut ctx)?;
            Ok(ctx.tape.value_scalar(l))
        };
        let err = check_store_fn(&mut store, &forward, &loss, EPS)?;
        push("lstm cell", err);
        let _ = x_id;
    }
    {
        let mut store = ParamStore::new();
        store.add("x", rand_tensor(vec![4, 3], &mut rng), true);
        let layer = BiLstmLayer::new(&mut store, "bilstm", 3, 2, &mut rng);
        let loss = |ctx: &mut Ctx| -> Result<crate::autograd::Var> {
            let x_id = ctx.store.lookup("x").unwrap();
            let x = ctx.param(x_id);
            let h = layer.forward(ctx, x)?;
            let h = ctx.tape.tanh(h);
            Ok(ctx.tape.sum_all(h))
        };
        let forward = |store: &ParamStore| -> Result<f64> {
            let mut ctx = Ctx::new(store, true, ChaCha8Rng::seed_from_u64(0));
            let l = loss(&mut ctx)?;
            Ok(ctx.tape.value_scalar(l))
        };
        let err = check_store_fn(&mut store, &forward, &loss, EPS)?;
        push("bilstm residual layer", err);
    }

    // Attention block, through the softmax and the BatchNorm fusion.
    {
        let mut store = ParamStore::new();
        store.add("lang", rand_tensor(vec![3, 4], &mut rng), true);
        store.add("visual", rand_tensor(vec![5, 4], &mut rng), true);
        let block =
            crate::attention::AttentionBlock::new(&mut store, "attn", 4, 4, 4, 0.9, 1e-5, &mut rng);
        let loss = |ctx: &mut Ctx| -> Result<crate::autograd::Var> {
            let lang = ctx.param(ctx.store.lookup("lang").unwrap());
            let v = ctx.param(ctx.store.lookup("visual").unwrap());
            let fused = block.forward(ctx, lang, v)?;
            let y = ctx.tape.tanh(fused);
            Ok(ctx.tape.sum_all(y))
        };
        let forward = |store: &ParamStore| -> Result<f64> {
            let mut ctx = Ctx::new(store, true, ChaCha8Rng::seed_from_u64(0));
            let l = loss(&mut ctx)?;
            Ok(ctx.tape.value_scalar(l))
        };
        let err = check_store_fn(&mut store, &forward, &loss, EPS)?;
        push("attention block", err);
    }

    // RoI pooling.
    {
        let x = rand_tensor(vec![9, 3], &mut rng);
        let w = ClipWindow::new(1.3, 6.7).unwrap();
        let err = crate::autograd::grad_check(
            |t, v| {
                let pooled = roi_pool(t, v, &w, 9.0)?;
                let y = t.tanh(pooled);
                Ok(t.sum_all(y))
            },
            &x,
            EPS,
        )?;
        push("roi pooling", err);
    }

    // Both heads.
    {
        let mut store = ParamStore::new();
        store.add("pooled", rand_tensor(vec![7, 3], &mut rng), true);
        let head = crate::clip::ClipHead::new(&mut store, "head", 3, 4, 1, false, &mut rng);
        let loss = |ctx: &mut Ctx| -> Result<crate::autograd::Var> {
            let pooled = ctx.param(ctx.store.lookup("pooled").unwrap());
            let out = head.forward(ctx, pooled)?;
            Ok(ctx.tape.sum_all(out.logits))
        };
        let forward = |store: &ParamStore| -> Result<f64> {
            let mut ctx = Ctx::new(store, true, ChaCha8Rng::seed_from_u64(0));
            let l = loss(&mut ctx)?;
            Ok(ctx.tape.value_scalar(l))
        };
        let err = check_store_fn(&mut store, &forward, &loss, EPS)?;
        push("classification head", err);
    }
    {
        let mut store = ParamStore::new();
        store.add("pooled", rand_tensor(vec![7, 3], &mut rng), true);
        let head = crate::clip::ClipHead::new(&mut store, "head", 3, 4, 2, true, &mut rng);
        let loss = |ctx: &mut Ctx| -> Result<crate::autograd::Var> {
            let pooled = ctx.param(ctx.store.lookup("pooled").unwrap());
            let out = head.forward(ctx, pooled)?;
            let ce = ctx.tape.softmax_cross_entropy(out.logits, 1)?;
            let sl = ctx.tape.smooth_l1(out.regression.unwrap(), &[0.3, -0.6])?;
            let sl = ctx.tape.sum_all(sl);
            ctx.tape.add(ce, sl)
        };
        let forward = |store: &ParamStore| -> Result<f64> {
            let mut ctx = Ctx::new(store, true, ChaCha8Rng::seed_from_u64(0));
            let l = loss(&mut ctx)?;
            Ok(ctx.tape.value_scalar(l))
        };
        let err = check_store_fn(&mut store, &forward, &loss, EPS)?;
        push("detection head", err);
    }

    // Both losses on their own.
    {
        let z = rand_tensor(vec![5], &mut rng);
        let err = crate::autograd::grad_check(
            |t, v| t.softmax_cross_entropy(v, 2),
            &z,
            EPS,
        )?;
        push("softmax cross-entropy", err);

        let p = rand_tensor(vec![4], &mut rng);
        let err = crate::autograd::grad_check(
            |t, v| {
                let l = t.smooth_l1(v, &[0.2, -2.0, 0.9, 1.4])?;
                Ok(t.sum_all(l))
            },
            &p,
            EPS,
        )?;
        push("smooth-l1", err);
    }

    // Full models on a 5-frame, 3-token toy.
    for (name, mode) in [
        ("full model (classification)", TaskMode::Classification),
        ("full model (detection)", TaskMode::Detection),
    ] {
        let cfg = toy_model_config(mode);
        let mut model = AsstModel::new(cfg, None)?;
        model
            .store
            .add("gradcheck.x", rand_tensor(vec![5, 3], &mut rng), true);
        let query = TokenQuery::new(vec![0, 2, 1]).unwrap();
        let loss = |ctx: &mut Ctx, model: &AsstModel| -> Result<crate::autograd::Var> {
            let x = ctx.param(ctx.store.lookup("gradcheck.x").unwrap());
            match model.cfg.mode {
                TaskMode::Classification => {
                    let scores = model.classification_scores(ctx, x, &query)?;
                    ctx.tape.softmax_cross_entropy(scores, 4)
                }
                TaskMode::Detection => {
                    let outs = model.detection_outputs(ctx, x, &query, Some(&[0, 3, 7]))?;
                    let mut total = None;
                    for (k, o) in outs.iter().enumerate() {
                        let ce = ctx.tape.softmax_cross_entropy(o.head.logits, k % 2)?;
                        let sl = ctx
                            .tape
                            .smooth_l1(o.head.regression.unwrap(), &[0.25, -0.4])?;
                        let sl = ctx.tape.sum_all(sl);
                        let part = ctx.tape.add(ce, sl)?;
                        total = Some(match total {
                            None => part,
                            Some(t) => ctx.tape.add(t, part)?,
                        });
                    }
                    Ok(total.unwrap())
                }
            }
        };
        // The forward methods read parameters through the context's store
        // reference, so the store can live outside the model during the
        // check.
        let mut store = std::mem::take(&mut model.store);
        let model_ref = &model;
        let analytic = {
            let mut ctx = Ctx::new(&store, true, ChaCha8Rng::seed_from_u64(0));
            let l = loss(&mut ctx, model_ref)?;
            ctx.backward_grads(l)?
        };
        let forward = |store: &ParamStore| -> Result<f64> {
            let mut ctx = Ctx::new(store, true, ChaCha8Rng::seed_from_u64(0));
            let l = loss(&mut ctx, model_ref)?;
            Ok(ctx.tape.value_scalar(l))
        };
        let err = grad_check_params(&mut store, &forward, &analytic, EPS)?;
        push(name, err);
    }

    Ok(rows)
}

fn toy_model_config(mode: TaskMode) -> ModelConfig {
    ModelConfig {
        mode,
        frames: 5,
        frame_rate: 5.0 / 30.0,
        d_v: 3,
        vocab_rows: 5,
        d_w: 3,
        d_lang: 4,
        lstm_hidden: 3,
        lang_layers: 1,
        video: VideoSubnetConfig {
            n_dilation: 2,
            n_squeeze: 3,
            n_expand: 3,
            c_dil: 4,
            c_se: 4,
            attention_feed: AttentionFeed::All,
            d_a: 0,
            bn_momentum: 0.9,
            bn_eps: 1e-5,
            dropout_hidden: 1.0,
        },
        tef: TefMode::PerPooledVector,
        head_channels: 4,
        num_classes: 1,
        n_segments: 6,
        segment_len: 5.0,
        dropout_input: 1.0,
        freeze_embeddings: false,
        init_seed: 11,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_table_passes() {
        let rows = gradcheck_rows().unwrap();
        assert!(rows.len() >= 15);
        for r in &rows {
            println!("{:35} {:.3e}", r.name, r.max_rel_err);
            assert!(r.passed(), "{} failed: {:.3e}", r.name, r.max_rel_err);
        }
    }
}
