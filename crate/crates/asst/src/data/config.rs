//! Run configuration: `key = value` lines under `[section]` headers, with
//! desk-scale defaults, strict unknown-key rejection and provenance tracking
//! for the run log.

use super::synth::SyntheticSpec;
use crate::clip::TefMode;
use crate::error::{Error, Result};
use crate::eval::ApFlavor;
use crate::video::VideoSubnetConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    File,
    Default,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSettings {
    /// Model input length in frames (the detection model's window; the
    /// classification model observes whole videos of this length).
    pub frames: usize,
    pub d_w: usize,
    pub d_lang: usize,
    pub lstm_hidden: usize,
    pub lang_layers: usize,
    pub head_channels: usize,
    /// Foreground classes of the detection head; 1 gives the plain
    /// presence/background head.
    pub num_classes: usize,
    pub tef: TefMode,
    pub freeze_embeddings: bool,
    /// Keep-probability floor of range dropout on the input features.
    pub dropout_input: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            frames: 64,
            d_w: 16,
            d_lang: 32,
            lstm_hidden: 32,
            lang_layers: 1,
            head_channels: 32,
            num_classes: 1,
            tef: TefMode::Off,
            freeze_embeddings: false,
            dropout_input: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingSettings {
    pub optimizer: OptimizerChoice,
    pub lr: f64,
    pub lr_decay: f64,
    pub lr_decay_interval: usize,
    pub batch_size: usize,
    pub steps: usize,
    pub momentum: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub mohem: bool,
    /// Stretch/compress augmentation range for detection training.
    pub scale_min: f64,
    pub scale_max: f64,
    /// Negatives sampled per positive.
    pub neg_per_pos: usize,
    pub checkpoint_interval: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerChoice {
    Adam,
    SgdMomentum,
}

impl std::str::FromStr for OptimizerChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerChoice::Adam),
            "sgd_momentum" | "sgd" => Ok(OptimizerChoice::SgdMomentum),
            other => Err(Error::config(format!(
                "unknown optimizer {other:?} (adam|sgd_momentum)"
            ))),
        }
    }
}

impl Default for TrainingSettings {
    fn default() -> Self {
        TrainingSettings {
            optimizer: OptimizerChoice::Adam,
            lr: 5e-4,
            lr_decay: 0.9,
            lr_decay_interval: 2500,
            batch_size: 16,
            steps: 1200,
            momentum: 0.9,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            mohem: false,
            scale_min: 0.8,
            scale_max: 1.25,
            neg_per_pos: 1,
            checkpoint_interval: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSettings {
    pub nms_thresh: f64,
    /// Sliding-window stride as a fraction of the model window.
    pub stride_fraction: f64,
    pub iou_thresholds: Vec<f64>,
    pub eleven_point_ap: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            nms_thresh: 0.8,
            stride_fraction: 0.5,
            iou_thresholds: vec![0.5, 0.7],
            eleven_point_ap: false,
        }
    }
}

impl EvalSettings {
    pub fn ap_flavor(&self) -> ApFlavor {
        if self.eleven_point_ap {
            ApFlavor::ElevenPoint
        } else {
            ApFlavor::EveryPoint
        }
    }
}

/// The fully resolved configuration plus where each value came from.
#[derive(Debug, Clone)]
pub struct AppConfig {
    pub synth: SyntheticSpec,
    pub model: ModelSettings,
    pub video: VideoSubnetConfig,
    pub training: TrainingSettings,
    pub eval: EvalSettings,
    pub provenance: Vec<(String, String, Provenance)>,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig::from_text("").expect("defaults resolve")
    }
}

struct Resolver {
    raw: BTreeMap<String, (String, usize)>,
    provenance: Vec<(String, String, Provenance)>,
}

impl Resolver {
    fn parse(text: &str) -> Result<Self> {
        let mut raw = BTreeMap::new();
        let mut section = String::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest.strip_suffix(']').ok_or_else(|| {
                    Error::config(format!("line {}: malformed section header", lineno + 1))
                })?;
                section = name.trim().to_string();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(format!(
                    "line {}: expected key = value",
                    lineno + 1
                )));
            };
            let full = if section.is_empty() {
                key.trim().to_string()
            } else {
                format!("{}.{}", section, key.trim())
            };
            if raw
                .insert(full.clone(), (value.trim().to_string(), lineno + 1))
                .is_some()
            {
                return Err(Error::config(format!(
                    "line {}: duplicate key {full}",
                    lineno + 1
                )));
            }
        }
        Ok(Resolver {
            raw,
            provenance: Vec::new(),
        })
    }

    fn take<T>(&mut self, key: &str, default: T) -> Result<T>
    where
        T: std::str::FromStr + std::fmt::Display,
    {
        match self.raw.remove(key) {
            Some((text, line)) => {
                let v: T = text.parse().map_err(|_| {
                    Error::config(format!(
                        "line {line}: key {key} expects a {}, got {text:?}",
                        friendly_type::<T>()
                    ))
                })?;
                self.provenance
                    .push((key.to_string(), v.to_string(), Provenance::File));
                Ok(v)
            }
            None => {
                self.provenance
                    .push((key.to_string(), default.to_string(), Provenance::Default));
                Ok(default)
            }
        }
    }

    fn take_list_f64(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.raw.remove(key) {
            Some((text, line)) => {
                let v: Vec<f64> = text
                    .split(',')
                    .map(|p| {
                        p.trim().parse::<f64>().map_err(|_| {
                            Error::config(format!(
                                "line {line}: key {key} expects comma-separated reals, got {text:?}"
                            ))
                        })
                    })
                    .collect::<Result<_>>()?;
                self.provenance
                    .push((key.to_string(), text, Provenance::File));
                Ok(v)
            }
            None => {
                let rendered = default
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(",");
                self.provenance
                    .push((key.to_string(), rendered, Provenance::Default));
                Ok(default.to_vec())
            }
        }
    }

    fn finish(self) -> Result<Vec<(String, String, Provenance)>> {
        if let Some((key, (_, line))) = self.raw.into_iter().next() {
            return Err(Error::config(format!("line {line}: unknown key {key}")));
        }
        Ok(self.provenance)
    }
}

fn friendly_type<T>() -> &'static str {
    let name = std::any::type_name::<T>();
    match name {
        "f64" => "real",
        "usize" | "u64" => "non-negative integer",
        "bool" => "boolean",
        _ => name.rsplit("::").next().unwrap_or(name),
    }
}

impl AppConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_text(&text)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut r = Resolver::parse(text)?;
        let sd = SyntheticSpec::default();
        let synth = SyntheticSpec {
            n_videos: r.take("synth.videos", sd.n_videos)?,
            frames: r.take("synth.frames", sd.frames)?,
            d_v: r.take("synth.channels", sd.d_v)?,
            n_patterns: r.take("synth.patterns", sd.n_patterns)?,
            noise_std: r.take("synth.noise_std", sd.noise_std)?,
            pattern_amplitude: r.take("synth.amplitude", sd.pattern_amplitude)?,
            mode: r.take("synth.mode", sd.mode)?,
            seed: r.take("synth.seed", sd.seed)?,
            signature_seed: r.take("synth.signature_seed", sd.signature_seed)?,
            n_segments: r.take("synth.segments", sd.n_segments)?,
            segment_len: r.take("synth.segment_len", sd.segment_len)?,
            frame_rate: r.take("synth.frame_rate", sd.frame_rate)?,
            n_distractors: r.take("synth.distractors", sd.n_distractors)?,
            query_pad_tokens: r.take("synth.query_pad", sd.query_pad_tokens)?,
        };
        let md = ModelSettings::default();
        let model = ModelSettings {
            frames: r.take("model.frames", md.frames)?,
            d_w: r.take("model.d_w", md.d_w)?,
            d_lang: r.take("model.d_lang", md.d_lang)?,
            lstm_hidden: r.take("model.lstm_hidden", md.lstm_hidden)?,
            lang_layers: r.take("model.lang_layers", md.lang_layers)?,
            head_channels: r.take("model.head_channels", md.head_channels)?,
            num_classes: r.take("model.num_classes", md.num_classes)?,
            tef: r.take("model.tef", md.tef)?,
            freeze_embeddings: r.take("model.freeze_embeddings", md.freeze_embeddings)?,
            dropout_input: r.take("model.dropout_input", md.dropout_input)?,
        };
        let vd = VideoSubnetConfig::default();
        let video = VideoSubnetConfig {
            n_dilation: r.take("video.n_dilation", vd.n_dilation)?,
            n_squeeze: r.take("video.n_squeeze", vd.n_squeeze)?,
            n_expand: r.take("video.n_expand", vd.n_expand)?,
            c_dil: r.take("video.c_dil", vd.c_dil)?,
            c_se: r.take("video.c_se", vd.c_se)?,
            attention_feed: r.take("video.attention_feed", vd.attention_feed)?,
            d_a: r.take("video.d_a", vd.d_a)?,
            bn_momentum: r.take("video.bn_momentum", vd.bn_momentum)?,
            bn_eps: r.take("video.bn_eps", vd.bn_eps)?,
            dropout_hidden: r.take("video.dropout_hidden", vd.dropout_hidden)?,
        };
        let td = TrainingSettings::default();
        let training = TrainingSettings {
            optimizer: {
                let s: String = r.take(
                    "training.optimizer",
                    match td.optimizer {
                        OptimizerChoice::Adam => "adam".to_string(),
                        OptimizerChoice::SgdMomentum => "sgd_momentum".to_string(),
                    },
                )?;
                s.parse()?
            },
            lr: r.take("training.lr", td.lr)?,
            lr_decay: r.take("training.lr_decay", td.lr_decay)?,
            lr_decay_interval: r.take("training.lr_decay_interval", td.lr_decay_interval)?,
            batch_size: r.take("training.batch_size", td.batch_size)?,
            steps: r.take("training.steps", td.steps)?,
            momentum: r.take("training.momentum", td.momentum)?,
            adam_beta1: r.take("training.adam_beta1", td.adam_beta1)?,
            adam_beta2: r.take("training.adam_beta2", td.adam_beta2)?,
            adam_eps: r.take("training.adam_eps", td.adam_eps)?,
            mohem: r.take("training.mohem", td.mohem)?,
            scale_min: r.take("training.scale_min", td.scale_min)?,
            scale_max: r.take("training.scale_max", td.scale_max)?,
            neg_per_pos: r.take("training.neg_per_pos", td.neg_per_pos)?,
            checkpoint_interval: r.take("training.checkpoint_interval", td.checkpoint_interval)?,
        };
        let ed = EvalSettings::default();
        let eval = EvalSettings {
            nms_thresh: r.take("eval.nms_thresh", ed.nms_thresh)?,
            stride_fraction: r.take("eval.stride_fraction", ed.stride_fraction)?,
            iou_thresholds: r.take_list_f64("eval.iou_thresholds", &ed.iou_thresholds)?,
            eleven_point_ap: r.take("eval.eleven_point_ap", ed.eleven_point_ap)?,
        };
        let provenance = r.finish()?;
        let cfg = AppConfig {
            synth,
            model,
            video,
            training,
            eval,
            provenance,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.video.validate()?;
        if self.model.frames < 2 {
            return Err(Error::config("model.frames must be >= 2"));
        }
        if self.model.lang_layers < 1 {
            return Err(Error::config("model.lang_layers must be >= 1 (>=1 required)"));
        }
        if self.model.num_classes < 1 {
            return Err(Error::config("model.num_classes must be >= 1"));
        }
        if !(self.model.dropout_input > 0.0 && self.model.dropout_input <= 1.0) {
            return Err(Error::config("model.dropout_input must be in (0,1]"));
        }
        if !(self.training.lr > 0.0) {
            return Err(Error::config("training.lr must be positive"));
        }
        if !(self.training.lr_decay > 0.0 && self.training.lr_decay <= 1.0) {
            return Err(Error::config("training.lr_decay must be in (0,1]"));
        }
        if self.training.lr_decay_interval == 0 {
            return Err(Error::config("training.lr_decay_interval must be >= 1"));
        }
        if self.training.batch_size == 0 || self.training.steps == 0 {
            return Err(Error::config("training.batch_size and training.steps must be >= 1"));
        }
        if !(self.training.scale_min > 0.0 && self.training.scale_min <= self.training.scale_max) {
            return Err(Error::config("training scale range must satisfy 0 < min <= max"));
        }
        if !(0.0..=1.0).contains(&self.eval.nms_thresh) {
            return Err(Error::config("eval.nms_thresh must be in [0,1]"));
        }
        if !(self.eval.stride_fraction > 0.0 && self.eval.stride_fraction <= 1.0) {
            return Err(Error::config("eval.stride_fraction must be in (0,1]"));
        }
        if self.eval.iou_thresholds.is_empty() {
            return Err(Error::config("eval.iou_thresholds must not be empty"));
        }
        Ok(())
    }

    /// One `# key = value (source)` line per resolved setting.
    pub fn provenance_lines(&self) -> Vec<String> {
        self.provenance
            .iter()
            .map(|(k, v, p)| {
                let src = match p {
                    Provenance::File => "file",
                    Provenance::Default => "default",
                };
                format!("# {k} = {v} ({src})")
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_yields_defaults() {
        let cfg = AppConfig::from_text("").unwrap();
        assert_eq!(cfg.training.lr, 5e-4);
        assert_eq!(cfg.video.n_dilation, 4);
        assert_eq!(cfg.synth.n_patterns, 8);
        assert!(cfg
            .provenance
            .iter()
            .all(|(_, _, p)| *p == Provenance::Default));
    }

    #[test]
    fn scientific_notation_and_provenance() {
        let cfg = AppConfig::from_text("[training]\nlr = 5e-4\n").unwrap();
        assert_eq!(cfg.training.lr, 5e-4);
        let (_, v, p) = cfg
            .provenance
            .iter()
            .find(|(k, _, _)| k == "training.lr")
            .unwrap();
        assert_eq!(*p, Provenance::File);
        assert_eq!(v, "0.0005");
    }

    #[test]
    fn unknown_key_is_named() {
        let err = AppConfig::from_text("[training]\nlearning_rate = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("training.learning_rate"), "{err}");
    }

    #[test]
    fn type_mismatch_names_expected_type() {
        let err = AppConfig::from_text("[training]\nlr = fast\n").unwrap_err();
        assert!(err.to_string().contains("real"), "{err}");
    }

    #[test]
    fn zero_dilation_rejected() {
        let err = AppConfig::from_text("[video]\nn_dilation = 0\n").unwrap_err();
        assert!(err.to_string().contains("n_dilation"), "{err}");
    }

    #[test]
    fn resolution_is_pure() {
        let text = "[video]\nattention_feed = last_dilation\n[eval]\niou_thresholds = 0.3, 0.5\n";
        let a = AppConfig::from_text(text).unwrap();
        let b = AppConfig::from_text(text).unwrap();
        assert_eq!(a.video.attention_feed, b.video.attention_feed);
        assert_eq!(a.eval.iou_thresholds, vec![0.3, 0.5]);
        assert_eq!(a.provenance, b.provenance);
    }

    #[test]
    fn comments_and_sections_parse() {
        let text = "# top comment\n[model]\ntef = per_pooled # trailing\nd_w = 8\n";
        let cfg = AppConfig::from_text(text).unwrap();
        assert_eq!(cfg.model.tef, TefMode::PerPooledVector);
        assert_eq!(cfg.model.d_w, 8);
    }
}
