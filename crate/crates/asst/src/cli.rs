//! Batch command implementations behind the `asst` binary: dataset
//! generation, training, evaluation, inference, the gradient-check table and
//! attention inspection.

use crate::clip::TaskMode;
use crate::data::{
    generate_synthetic, read_checkpoint, write_checkpoint, AppConfig, LoadedDataset,
};
use crate::error::{Error, Result};
use crate::eval::{nms, ScoredWindow};
use crate::lang::{TokenQuery, Vocabulary};
use crate::model::{AsstModel, ModelConfig};
use crate::pipeline::{evaluate_predictions, filter_report, gradcheck_rows, infer_dataset};
use crate::train::{
    default_threads, prepare_pairs, LrSchedule, OptimKind, Optimizer, Trainer, TrainerSettings,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

fn load_config(path: Option<&Path>) -> Result<AppConfig> {
    match path {
        Some(p) => AppConfig::load(p),
        None => Ok(AppConfig::default()),
    }
}

/// Token list sidecar written next to checkpoints when training used a word
/// vocabulary.
#[derive(Serialize, Deserialize)]
struct VocabSidecar {
    tokens: Vec<String>,
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

pub struct SynthArgs {
    pub out: PathBuf,
    pub spec: Option<PathBuf>,
    pub seed: Option<u64>,
    pub videos: Option<usize>,
    pub mode: Option<TaskMode>,
    pub force: bool,
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let cfg = load_config(args.spec.as_deref())?;
    let mut spec = cfg.synth.clone();
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(videos) = args.videos {
        spec.n_videos = videos;
    }
    if let Some(mode) = args.mode {
        spec.mode = mode;
    }
    spec.validate()?;
    if args.out.exists() {
        let non_empty = std::fs::read_dir(&args.out)?.next().is_some();
        if non_empty && !args.force {
            return Err(Error::config(format!(
                "output directory {} is not empty (pass --force to overwrite)",
                args.out.display()
            )));
        }
    }
    let manifest = generate_synthetic(&spec, &args.out)?;
    println!(
        "wrote {} videos ({} files, mode {}) to {}",
        manifest.n_videos,
        manifest.files.len(),
        manifest.mode,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

pub struct TrainArgs {
    pub config: Option<PathBuf>,
    pub data: PathBuf,
    pub mode: TaskMode,
    pub out: PathBuf,
    pub seed: u64,
    pub embeddings: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub steps: Option<usize>,
    pub threads: Option<usize>,
}

/// Derive the model configuration from the run configuration plus what the
/// dataset dictates (channels, clock, vocabulary width).
fn model_config_for(
    cfg: &AppConfig,
    mode: TaskMode,
    dataset: &LoadedDataset,
    vocab: Option<&Vocabulary>,
    seed: u64,
) -> Result<ModelConfig> {
    let first = dataset
        .features
        .first()
        .ok_or_else(|| Error::config("dataset is empty"))?;
    let d_v = first.channels();
    let frame_rate = first.frame_rate;
    for (i, f) in dataset.features.iter().enumerate() {
        if f.channels() != d_v {
            return Err(Error::config(format!(
                "video {} has {} channels, expected {d_v}",
                dataset.annotations.videos[i].video_id,
                f.channels()
            )));
        }
        if (f.frame_rate - frame_rate).abs() > 1e-9 {
            return Err(Error::config(format!(
                "video {} frame rate {} differs from {frame_rate}",
                dataset.annotations.videos[i].video_id, f.frame_rate
            )));
        }
    }
    let (vocab_rows, d_w) = match vocab {
        Some(v) => (v.len() + 1, v.embed_dim()),
        None => {
            let rows = dataset.annotations.vocab_size.ok_or_else(|| {
                Error::config(
                    "dataset declares no vocab_size and no embedding file was given",
                )
            })?;
            (rows, cfg.model.d_w)
        }
    };
    Ok(ModelConfig {
        mode,
        frames: cfg.model.frames,
        frame_rate,
        d_v,
        vocab_rows,
        d_w,
        d_lang: cfg.model.d_lang,
        lstm_hidden: cfg.model.lstm_hidden,
        lang_layers: cfg.model.lang_layers,
        video: cfg.video.clone(),
        tef: cfg.model.tef,
        head_channels: cfg.model.head_channels,
        num_classes: cfg.model.num_classes,
        n_segments: cfg.synth.n_segments,
        segment_len: cfg.synth.segment_len,
        dropout_input: cfg.model.dropout_input,
        freeze_embeddings: cfg.model.freeze_embeddings,
        init_seed: seed,
    })
}

fn vocab_lookup(vocab: Option<&Vocabulary>) -> Option<Box<dyn Fn(&str) -> usize + '_>> {
    vocab.map(|v| Box::new(move |w: &str| v.lookup(w)) as Box<dyn Fn(&str) -> usize>)
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub log_path: PathBuf,
    pub last_stats: crate::train::StepStats,
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainOutcome> {
    let cfg = load_config(args.config.as_deref())?;
    let dataset = LoadedDataset::load(&args.data)?;
    let vocab = args
        .embeddings
        .as_deref()
        .map(Vocabulary::load_embeddings)
        .transpose()?;

    let total_steps = args.steps.unwrap_or(cfg.training.steps);
    let (model, optimizer, start_step) = match &args.resume {
        Some(ckpt_path) => {
            let ckpt = read_checkpoint(ckpt_path)?;
            let model = AsstModel::from_checkpoint(&ckpt)?;
            if model.cfg.mode != args.mode {
                return Err(Error::config(format!(
                    "checkpoint was trained in {} mode, requested {}",
                    model.cfg.mode, args.mode
                )));
            }
            let optimizer =
                Optimizer::from_checkpoint(&ckpt.meta["optimizer"], &ckpt.arrays, &model.store)?;
            let start = ckpt.meta["step"].as_u64().unwrap_or(0) as usize;
            (model, optimizer, start)
        }
        None => {
            let mcfg = model_config_for(&cfg, args.mode, &dataset, vocab.as_ref(), args.seed)?;
            let model = AsstModel::new(mcfg, vocab.as_ref().map(|v| v.embedding_tensor()))?;
            let kind = match cfg.training.optimizer {
                crate::data::OptimizerChoice::Adam => OptimKind::Adam {
                    beta1: cfg.training.adam_beta1,
                    beta2: cfg.training.adam_beta2,
                    eps: cfg.training.adam_eps,
                },
                crate::data::OptimizerChoice::SgdMomentum => OptimKind::SgdMomentum {
                    momentum: cfg.training.momentum,
                },
            };
            let optimizer = Optimizer::new(kind, &model.store);
            (model, optimizer, 0)
        }
    };

    let lookup = vocab_lookup(vocab.as_ref());
    let pairs = prepare_pairs(
        &dataset,
        args.mode,
        model.cfg.num_classes,
        lookup.as_ref().map(|b| b.as_ref() as &dyn Fn(&str) -> usize),
    )?;

    let schedule = LrSchedule {
        base: cfg.training.lr,
        decay: cfg.training.lr_decay,
        interval: cfg.training.lr_decay_interval,
    };
    let settings = TrainerSettings {
        batch_size: cfg.training.batch_size,
        seed: args.seed,
        mohem: cfg.training.mohem,
        neg_per_pos: cfg.training.neg_per_pos,
        scale_range: (cfg.training.scale_min, cfg.training.scale_max),
        iou_positive: 0.5,
        threads: args.threads.unwrap_or_else(default_threads),
    };
    let mut trainer = Trainer::new(model, optimizer, schedule, settings, &dataset, pairs);

    std::fs::create_dir_all(&args.out)?;
    if let Some(v) = &vocab {
        let tokens: Vec<String> = (0..v.len())
            .map(|i| v.token(i).unwrap_or_default().to_string())
            .collect();
        std::fs::write(
            args.out.join("vocab.json"),
            serde_json::to_string_pretty(&VocabSidecar { tokens })?,
        )?;
    }
    let log_path = args.out.join("train.log");
    let mut log: Box<dyn Write> = if start_step > 0 && log_path.exists() {
        Box::new(std::fs::OpenOptions::new().append(true).open(&log_path)?)
    } else {
        Box::new(std::fs::File::create(&log_path)?)
    };
    if start_step == 0 {
        writeln!(log, "# asst train")?;
        writeln!(log, "# version = {}", env!("CARGO_PKG_VERSION"))?;
        writeln!(log, "# mode = {}", args.mode)?;
        writeln!(log, "# seed = {}", args.seed)?;
        writeln!(log, "# data = {}", args.data.display())?;
        for line in cfg.provenance_lines() {
            writeln!(log, "{line}")?;
        }
        writeln!(log, "# columns: step\tlr\tloss\tloss_cls\tloss_reg\twall_ms")?;
    } else {
        writeln!(log, "# resumed at step {start_step}")?;
    }

    let mut last_stats = crate::train::StepStats::default();
    for step in start_step..total_steps {
        let t0 = Instant::now();
        let stats = trainer.train_step(step)?;
        let wall_ms = t0.elapsed().as_millis();
        writeln!(
            log,
            "{}\t{:.6e}\t{:.12e}\t{:.12e}\t{:.12e}\t{}",
            step,
            trainer.lr_at(step),
            stats.loss,
            stats.cls,
            stats.reg,
            wall_ms
        )?;
        last_stats = stats;
        let at_interval = cfg.training.checkpoint_interval > 0
            && (step + 1) % cfg.training.checkpoint_interval == 0;
        if at_interval && step + 1 != total_steps {
            let ckpt = trainer.model.to_checkpoint(
                (step + 1) as u64,
                args.seed,
                Some(trainer.optimizer.meta()),
                trainer.optimizer.to_arrays(&trainer.model.store),
            );
            write_checkpoint(args.out.join(format!("ckpt_{:06}.ckpt", step + 1)), &ckpt)?;
        }
    }
    let final_path = args.out.join("final.ckpt");
    let ckpt = trainer.model.to_checkpoint(
        total_steps as u64,
        args.seed,
        Some(trainer.optimizer.meta()),
        trainer.optimizer.to_arrays(&trainer.model.store),
    );
    write_checkpoint(&final_path, &ckpt)?;
    Ok(TrainOutcome {
        final_checkpoint: final_path,
        log_path,
        last_stats,
    })
}

// ---------------------------------------------------------------------------
// eval / infer
// ---------------------------------------------------------------------------

pub struct EvalArgs {
    pub config: Option<PathBuf>,
    pub ckpt: Option<PathBuf>,
    pub preds: Option<PathBuf>,
    pub fuse: Option<String>,
    pub data: PathBuf,
    pub metrics: Option<String>,
    pub iou: Option<String>,
    pub nms: Option<f64>,
    pub stride: Option<f64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

fn load_predictions(path: &Path) -> Result<Vec<ScoredWindow>> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Align prediction files by candidate identity and fuse their scores.
fn fuse_files(spec: &str) -> Result<Vec<ScoredWindow>> {
    let mut lists: Vec<Vec<ScoredWindow>> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for part in spec.split(',') {
        let (file, w) = part.rsplit_once(':').ok_or_else(|| {
            Error::config(format!("--fuse expects file:weight pairs, got {part:?}"))
        })?;
        let weight: f64 = w
            .parse()
            .map_err(|_| Error::config(format!("bad fuse weight {w:?}")))?;
        lists.push(load_predictions(Path::new(file))?);
        weights.push(weight);
    }
    if lists.is_empty() {
        return Err(Error::config("--fuse needs at least one file"));
    }
    let base = lists[0].clone();
    for (li, l) in lists.iter().enumerate() {
        if l.len() != base.len() {
            return Err(Error::contract(format!(
                "fuse list {li} has {} candidates, expected {}",
                l.len(),
                base.len()
            )));
        }
        for (a, b) in l.iter().zip(&base) {
            let aligned = a.video_id == b.video_id
                && a.description_idx == b.description_idx
                && a.class_id == b.class_id
                && (a.window[0] - b.window[0]).abs() < 1e-9
                && (a.window[1] - b.window[1]).abs() < 1e-9;
            if !aligned {
                return Err(Error::contract(
                    "fuse candidate sets are not aligned (video/window/class mismatch)",
                ));
            }
        }
    }
    let score_lists: Vec<Vec<f64>> = lists
        .iter()
        .map(|l| l.iter().map(|p| p.score).collect())
        .collect();
    let fused = crate::eval::fuse_scores(&score_lists, &weights)?;
    let mut out = base;
    for (p, s) in out.iter_mut().zip(fused) {
        p.score = s;
    }
    Ok(out)
}

pub fn cmd_eval(args: &EvalArgs) -> Result<crate::eval::EvalReport> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(iou) = &args.iou {
        cfg.eval.iou_thresholds = iou
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::config(format!("bad IoU threshold {p:?}")))
            })
            .collect::<Result<_>>()?;
    }
    if let Some(n) = args.nms {
        cfg.eval.nms_thresh = n;
    }
    if let Some(s) = args.stride {
        cfg.eval.stride_fraction = s;
    }
    let dataset = LoadedDataset::load(&args.data)?;

    let (preds, segments, num_classes) = match (&args.ckpt, &args.preds, &args.fuse) {
        (Some(ckpt_path), None, None) => {
            let ckpt = read_checkpoint(ckpt_path)?;
            let model = AsstModel::from_checkpoint(&ckpt)?;
            let lookup_vocab = sidecar_vocab(ckpt_path)?;
            let lookup = lookup_vocab.as_ref().map(|m| {
                Box::new(move |w: &str| m.get(w).copied().unwrap_or(m.len()))
                    as Box<dyn Fn(&str) -> usize>
            });
            let pairs = prepare_pairs(
                &dataset,
                model.cfg.mode,
                model.cfg.num_classes,
                lookup.as_ref().map(|b| b.as_ref() as &dyn Fn(&str) -> usize),
            )?;
            let preds = infer_dataset(
                &model,
                &dataset,
                &pairs,
                &cfg.eval,
                args.threads.unwrap_or_else(default_threads),
            )?;
            let segments = model.segments().clone();
            let num_classes = model.cfg.num_classes;
            (preds, segments, num_classes)
        }
        (None, Some(preds_path), None) => {
            let mut preds = load_predictions(preds_path)?;
            if args.nms.is_some() {
                preds = renms(&preds, cfg.eval.nms_thresh);
            }
            let segments =
                crate::clip::SegmentEnumeration::new(cfg.synth.n_segments, cfg.synth.segment_len)?;
            (preds, segments, cfg.model.num_classes)
        }
        (None, None, Some(fuse)) => {
            let mut preds = fuse_files(fuse)?;
            if args.nms.is_some() {
                preds = renms(&preds, cfg.eval.nms_thresh);
            }
            let segments =
                crate::clip::SegmentEnumeration::new(cfg.synth.n_segments, cfg.synth.segment_len)?;
            (preds, segments, cfg.model.num_classes)
        }
        _ => {
            return Err(Error::config(
                "eval needs exactly one of --ckpt, --preds or --fuse",
            ))
        }
    };

    let mut report =
        evaluate_predictions(&preds, &dataset.annotations, &segments, &cfg.eval, num_classes)?;
    let metric_list: Option<Vec<String>> = args
        .metrics
        .as_ref()
        .map(|m| m.split(',').map(|s| s.trim().to_string()).collect());
    filter_report(&mut report, metric_list.as_deref());
    let json = report.to_json();
    println!("{json}");
    if let Some(out) = &args.out {
        std::fs::write(out, &json)?;
    }
    Ok(report)
}

fn renms(preds: &[ScoredWindow], thresh: f64) -> Vec<ScoredWindow> {
    let mut grouped: BTreeMap<(String, usize), Vec<ScoredWindow>> = BTreeMap::new();
    for p in preds {
        grouped
            .entry((p.video_id.clone(), p.description_idx))
            .or_default()
            .push(p.clone());
    }
    grouped
        .into_values()
        .flat_map(|g| nms(&g, thresh))
        .collect()
}

fn sidecar_vocab(ckpt_path: &Path) -> Result<Option<BTreeMap<String, usize>>> {
    let Some(dir) = ckpt_path.parent() else {
        return Ok(None);
    };
    let path = dir.join("vocab.json");
    if !path.exists() {
        return Ok(None);
    }
    let sidecar: VocabSidecar = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    Ok(Some(
        sidecar
            .tokens
            .into_iter()
            .enumerate()
            .map(|(i, t)| (t, i))
            .collect(),
    ))
}

pub struct InferArgs {
    pub config: Option<PathBuf>,
    pub ckpt: PathBuf,
    pub data: PathBuf,
    pub out: PathBuf,
    pub nms: Option<f64>,
    pub stride: Option<f64>,
    pub threads: Option<usize>,
}

pub fn cmd_infer(args: &InferArgs) -> Result<usize> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(n) = args.nms {
        cfg.eval.nms_thresh = n;
    }
    if let Some(s) = args.stride {
        cfg.eval.stride_fraction = s;
    }
    let dataset = LoadedDataset::load(&args.data)?;
    let ckpt = read_checkpoint(&args.ckpt)?;
    let model = AsstModel::from_checkpoint(&ckpt)?;
    let lookup_vocab = sidecar_vocab(&args.ckpt)?;
    let lookup = lookup_vocab.as_ref().map(|m| {
        Box::new(move |w: &str| m.get(w).copied().unwrap_or(m.len()))
            as Box<dyn Fn(&str) -> usize>
    });
    let pairs = prepare_pairs(
        &dataset,
        model.cfg.mode,
        model.cfg.num_classes,
        lookup.as_ref().map(|b| b.as_ref() as &dyn Fn(&str) -> usize),
    )?;
    let preds = infer_dataset(
        &model,
        &dataset,
        &pairs,
        &cfg.eval,
        args.threads.unwrap_or_else(default_threads),
    )?;
    std::fs::write(&args.out, serde_json::to_string_pretty(&preds)?)?;
    println!("wrote {} predictions to {}", preds.len(), args.out.display());
    Ok(preds.len())
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

pub fn cmd_gradcheck(scale: &str) -> Result<()> {
    if scale != "tiny" {
        return Err(Error::config(format!(
            "unknown gradcheck scale {scale:?} (only \"tiny\" is available)"
        )));
    }
    let rows = gradcheck_rows()?;
    let mut all_ok = true;
    println!("{:<35} {:>12}  {:>9}  result", "layer", "max rel err", "tolerance");
    for r in &rows {
        let ok = r.passed();
        all_ok &= ok;
        println!(
            "{:<35} {:>12.3e}  {:>9.1e}  {}",
            r.name,
            r.max_rel_err,
            r.tolerance,
            if ok { "pass" } else { "FAIL" }
        );
    }
    if !all_ok {
        return Err(Error::contract("gradient check failed"));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// inspect-attention
// ---------------------------------------------------------------------------

pub struct InspectArgs {
    pub ckpt: PathBuf,
    pub data: PathBuf,
    pub video: String,
    pub query: String,
    pub out: PathBuf,
}

#[derive(Serialize)]
struct AttentionDumpFile {
    video_id: String,
    query_tokens: Vec<usize>,
    layers: Vec<AttentionLayerDump>,
}

#[derive(Serialize)]
struct AttentionLayerDump {
    layer: String,
    words: usize,
    frames: usize,
    /// words × frames, row-major.
    matrix: Vec<Vec<f64>>,
}

pub fn cmd_inspect_attention(args: &InspectArgs) -> Result<usize> {
    let ckpt = read_checkpoint(&args.ckpt)?;
    let model = AsstModel::from_checkpoint(&ckpt)?;
    let dataset = LoadedDataset::load(&args.data)?;
    let vi = dataset
        .video_index(&args.video)
        .ok_or_else(|| Error::config(format!("unknown video id {:?}", args.video)))?;
    let vocab = sidecar_vocab(&args.ckpt)?;
    let tokens: Vec<usize> = args
        .query
        .split_whitespace()
        .map(|t| {
            if let Ok(id) = t.parse::<usize>() {
                Ok(id)
            } else if let Some(v) = &vocab {
                Ok(v.get(&t.to_lowercase()).copied().unwrap_or(v.len()))
            } else {
                Err(Error::config(format!(
                    "word token {t:?} needs a vocabulary sidecar next to the checkpoint"
                )))
            }
        })
        .collect::<Result<_>>()?;
    let query = TokenQuery::new(tokens.clone())?;

    // Inspection looks at one model window of the video.
    let seq = &dataset.features[vi];
    let m_model = model.cfg.frames;
    let d_v = seq.channels();
    let features = if seq.frames() >= m_model {
        let vals = seq.features.values()[..m_model * d_v].to_vec();
        crate::tensor::Tensor::new(vec![m_model, d_v], vals)?
    } else {
        let mut vals = vec![0.0; m_model * d_v];
        vals[..seq.frames() * d_v].copy_from_slice(seq.features.values());
        crate::tensor::Tensor::new(vec![m_model, d_v], vals)?
    };
    let records = model.inspect_attention(&features, &query)?;
    if records.is_empty() {
        println!("no attention layers (attention_feed = none)");
    }
    let layers: Vec<AttentionLayerDump> = records
        .iter()
        .map(|r| AttentionLayerDump {
            layer: r.layer.clone(),
            words: r.words,
            frames: r.frames,
            matrix: (0..r.words)
                .map(|i| r.values[i * r.frames..(i + 1) * r.frames].to_vec())
                .collect(),
        })
        .collect();
    let count = layers.len();
    let dump = AttentionDumpFile {
        video_id: args.video.clone(),
        query_tokens: tokens,
        layers,
    };
    std::fs::write(&args.out, serde_json::to_string_pretty(&dump)?)?;
    println!(
        "wrote {} attention matrices to {}",
        count,
        args.out.display()
    );
    Ok(count)
}
