//! Video subnet: attention-augmented dilated convolution stack followed by
//! the squeezing-expansion pyramid, mapping an m×d_v feature sequence to an
//! equal-length m×C representation sequence.

use crate::attention::AttentionBlock;
use crate::autograd::{Padding, Var};
use crate::error::{Error, Result};
use crate::nn::{linear_interp_resize, Conv1dLayer, Ctx, ParamStore, RangeDropout};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Where the language feature feeds the video subnet through attention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionFeed {
    None,
    FirstDilation,
    LastDilation,
    FinalRep,
    All,
}

impl std::str::FromStr for AttentionFeed {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AttentionFeed::None),
            "first_dilation" => Ok(AttentionFeed::FirstDilation),
            "last_dilation" => Ok(AttentionFeed::LastDilation),
            "final_rep" => Ok(AttentionFeed::FinalRep),
            "all" => Ok(AttentionFeed::All),
            other => Err(Error::config(format!(
                "unknown attention feed {other:?} (none|first_dilation|last_dilation|final_rep|all)"
            ))),
        }
    }
}

impl std::fmt::Display for AttentionFeed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AttentionFeed::None => "none",
            AttentionFeed::FirstDilation => "first_dilation",
            AttentionFeed::LastDilation => "last_dilation",
            AttentionFeed::FinalRep => "final_rep",
            AttentionFeed::All => "all",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VideoSubnetConfig {
    pub n_dilation: usize,
    pub n_squeeze: usize,
    pub n_expand: usize,
    pub c_dil: usize,
    pub c_se: usize,
    pub attention_feed: AttentionFeed,
    /// Shared attention projection width; 0 means "same as the layer's
    /// channel count".
    pub d_a: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    /// Keep-probability floor of the range dropout on dilation-layer inputs.
    pub dropout_hidden: f64,
}

impl Default for VideoSubnetConfig {
    fn default() -> Self {
        VideoSubnetConfig {
            n_dilation: 4,
            n_squeeze: 6,
            n_expand: 6,
            c_dil: 64,
            c_se: 32,
            attention_feed: AttentionFeed::All,
            d_a: 0,
            bn_momentum: 0.9,
            bn_eps: 1e-5,
            dropout_hidden: 0.8,
        }
    }
}

impl VideoSubnetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_dilation < 1 {
            return Err(Error::config("n_dilation must be >= 1"));
        }
        if self.c_dil < 1 || self.c_se < 1 {
            return Err(Error::config("channel counts must be >= 1"));
        }
        if self.n_expand != self.n_squeeze {
            return Err(Error::config(format!(
                "expansion must mirror squeezing exactly: n_expand {} != n_squeeze {}",
                self.n_expand, self.n_squeeze
            )));
        }
        Ok(())
    }

    /// Smallest squeeze depth that collapses m frames to a single global
    /// vector under ceil-halving.
    pub fn min_squeeze_for(m: usize) -> usize {
        let mut len = m;
        let mut k = 0;
        while len > 1 {
            len = len.div_ceil(2);
            k += 1;
        }
        k
    }

    pub fn check_length(&self, m: usize) -> Result<()> {
        let need = Self::min_squeeze_for(m);
        if self.n_squeeze < need {
            return Err(Error::config(format!(
                "{} squeezing layers cannot reduce {m} frames to a global vector; need at least {need}",
                self.n_squeeze
            )));
        }
        Ok(())
    }

    /// Feature-map lengths produced by the squeezing phase for m input frames.
    pub fn squeeze_lengths(&self, m: usize) -> Vec<usize> {
        let mut lens = Vec::with_capacity(self.n_squeeze);
        let mut len = m;
        for _ in 0..self.n_squeeze {
            len = len.div_ceil(2);
            lens.push(len);
        }
        lens
    }
}

pub struct VideoSubnet {
    cfg: VideoSubnetConfig,
    input_proj: Conv1dLayer,
    dilation: Vec<(Conv1dLayer, Option<AttentionBlock>)>,
    squeeze: Vec<(Conv1dLayer, Option<AttentionBlock>)>,
    laterals: Vec<Conv1dLayer>,
    final_attn: Option<AttentionBlock>,
    dropout: RangeDropout,
}

impl VideoSubnet {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_v: usize,
        lang_width: usize,
        cfg: VideoSubnetConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        cfg.validate()?;
        let feed = cfg.attention_feed;
        let input_proj = Conv1dLayer::kernel1(store, &format!("{name}.input_proj"), d_v, cfg.c_dil, rng);
        let attn = |store: &mut ParamStore, lname: &str, channels: usize, rng: &mut _| {
            let d_a = if cfg.d_a == 0 { channels } else { cfg.d_a };
            AttentionBlock::new(
                store,
                lname,
                lang_width,
                channels,
                d_a,
                cfg.bn_momentum,
                cfg.bn_eps,
                rng,
            )
        };
        let mut dilation = Vec::new();
        for i in 0..cfg.n_dilation {
            let conv = Conv1dLayer::new(
                store,
                &format!("{name}.dilation{i}"),
                3,
                cfg.c_dil,
                cfg.c_dil,
                1 << i,
                1,
                Padding::Same,
                rng,
            );
            let fed = match feed {
                AttentionFeed::All => true,
                AttentionFeed::FirstDilation => i == 0,
                AttentionFeed::LastDilation => i == cfg.n_dilation - 1,
                _ => false,
            };
            let block = fed.then(|| attn(store, &format!("{name}.dilation{i}.attn"), cfg.c_dil, rng));
            dilation.push((conv, block));
        }
        let mut squeeze = Vec::new();
        for s in 0..cfg.n_squeeze {
            let c_in = if s == 0 { cfg.c_dil } else { cfg.c_se };
            let conv = Conv1dLayer::new(
                store,
                &format!("{name}.squeeze{s}"),
                3,
                c_in,
                cfg.c_se,
                1,
                2,
                Padding::Same,
                rng,
            );
            let block = (feed == AttentionFeed::All)
                .then(|| attn(store, &format!("{name}.squeeze{s}.attn"), cfg.c_se, rng));
            squeeze.push((conv, block));
        }
        let laterals = (0..cfg.n_squeeze)
            .map(|i| {
                let c_in = if i == 0 { cfg.c_dil } else { cfg.c_se };
                Conv1dLayer::kernel1(store, &format!("{name}.lateral{i}"), c_in, cfg.c_se, rng)
            })
            .collect();
        let final_attn = (feed == AttentionFeed::FinalRep)
            .then(|| attn(store, &format!("{name}.final.attn"), cfg.c_se, rng));
        let dropout = RangeDropout::new(cfg.dropout_hidden)?;
        Ok(VideoSubnet {
            cfg,
            input_proj,
            dilation,
            squeeze,
            laterals,
            final_attn,
            dropout,
        })
    }

    pub fn config(&self) -> &VideoSubnetConfig {
        &self.cfg
    }

    fn lang_for(&self, lang: Option<Var>, wanted: bool) -> Result<Option<Var>> {
        if wanted && lang.is_none() {
            return Err(Error::contract(
                "attention feed is enabled but no language encoding was supplied",
            ));
        }
        Ok(lang)
    }

    /// The dilated stack alone: input projection plus n_dilation residual
    /// layers, each a same-padded kernel-3 convolution with dilation 2^i.
    pub fn dilation_features(&self, ctx: &mut Ctx, x: Var, lang: Option<Var>) -> Result<Var> {
        let mut h = self.input_proj.forward(ctx, x)?;
        for (conv, block) in &self.dilation {
            let inp = self.dropout.forward(ctx, h)?;
            let v = conv.forward(ctx, inp)?;
            let fused = match block {
                Some(block) => {
                    let lang = self.lang_for(lang, true)?.unwrap();
                    block.forward(ctx, lang, v)?
                }
                None => ctx.tape.relu(v),
            };
            h = ctx.tape.add(h, fused)?;
        }
        Ok(h)
    }

    /// Squeezing phase: stride-2 kernel-3 convolutions halving the length
    /// (ceil division) down to a single global vector. Returns every map,
    /// starting with the dilation output.
    pub fn squeeze_phase(&self, ctx: &mut Ctx, dilated: Var, lang: Option<Var>) -> Result<Vec<Var>> {
        let m = ctx.tape.shape(dilated)[0];
        self.cfg.check_length(m)?;
        let mut maps = vec![dilated];
        let mut cur = dilated;
        for (conv, block) in &self.squeeze {
            let v = conv.forward(ctx, cur)?;
            let act = ctx.tape.relu(v);
            cur = match block {
                // Normalizing a single time point is meaningless, so layers
                // whose output collapsed to length 1 are not fed.
                Some(block) if ctx.tape.shape(v)[0] >= 2 => {
                    let lang = self.lang_for(lang, true)?.unwrap();
                    let fused = block.forward(ctx, lang, v)?;
                    ctx.tape.add(act, fused)?
                }
                _ => act,
            };
            maps.push(cur);
        }
        Ok(maps)
    }

    /// Expansion phase: from the global vector, repeatedly resize to the next
    /// squeeze length and add the kernel-1 lateral projection of the
    /// corresponding squeeze map, ending at the dilation output length.
    pub fn expand_phase(&self, ctx: &mut Ctx, maps: &[Var]) -> Result<Var> {
        let mut h = *maps.last().expect("squeeze phase yields at least the input map");
        for i in (0..self.cfg.n_squeeze).rev() {
            let target = ctx.tape.shape(maps[i])[0];
            h = linear_interp_resize(&mut ctx.tape, h, target)?;
            let lat = self.laterals[i].forward(ctx, maps[i])?;
            h = ctx.tape.add(h, lat)?;
        }
        Ok(h)
    }

    /// Full subnet: representation sequence of the same length as the input.
    pub fn forward(&self, ctx: &mut Ctx, x: Var, lang: Option<Var>) -> Result<Var> {
        let dilated = self.dilation_features(ctx, x, lang)?;
        let maps = self.squeeze_phase(ctx, dilated, lang)?;
        let mut rep = self.expand_phase(ctx, &maps)?;
        if let Some(block) = &self.final_attn {
            let lang = self.lang_for(lang, true)?.unwrap();
            let fused = block.forward(ctx, lang, rep)?;
            rep = ctx.tape.add(rep, fused)?;
        }
        Ok(rep)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build(
        d_v: usize,
        cfg: VideoSubnetConfig,
        seed: u64,
    ) -> (ParamStore, VideoSubnet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let net = VideoSubnet::new(&mut store, "video", d_v, 4, cfg, &mut rng).unwrap();
        (store, net)
    }

    fn cfg_no_attention() -> VideoSubnetConfig {
        VideoSubnetConfig {
            attention_feed: AttentionFeed::None,
            c_dil: 8,
            c_se: 6,
            ..VideoSubnetConfig::default()
        }
    }

    fn ctx(store: &ParamStore) -> Ctx<'_> {
        Ctx::new(store, false, ChaCha8Rng::seed_from_u64(0))
    }

    #[test]
    fn squeeze_lengths_ceil_halve() {
        let cfg = VideoSubnetConfig::default();
        assert_eq!(cfg.squeeze_lengths(64), vec![32, 16, 8, 4, 2, 1]);
        assert_eq!(cfg.squeeze_lengths(1), vec![1; 6]);
        let mut c5 = cfg.clone();
        c5.n_squeeze = 3;
        c5.n_expand = 3;
        assert_eq!(c5.squeeze_lengths(5), vec![3, 2, 1]);
    }

    #[test]
    fn min_squeeze_matches_examples() {
        assert_eq!(VideoSubnetConfig::min_squeeze_for(1), 0);
        assert_eq!(VideoSubnetConfig::min_squeeze_for(2), 1);
        assert_eq!(VideoSubnetConfig::min_squeeze_for(5), 3);
        assert_eq!(VideoSubnetConfig::min_squeeze_for(64), 6);
    }

    #[test]
    fn insufficient_squeeze_depth_names_minimum() {
        let mut cfg = cfg_no_attention();
        cfg.n_squeeze = 3;
        cfg.n_expand = 3;
        let (store, net) = build(3, cfg, 1);
        let mut c = ctx(&store);
        let x = c.tape.constant(vec![64, 3], vec![0.0; 192]).unwrap();
        let err = net.forward(&mut c, x, None).unwrap_err();
        assert!(err.to_string().contains("at least 6"), "{err}");
    }

    #[test]
    fn output_length_equals_input_length() {
        let (store, net) = build(3, cfg_no_attention(), 2);
        for m in [1usize, 2, 5, 17, 64] {
            let mut c = ctx(&store);
            let x = c
                .tape
                .constant(vec![m, 3], (0..m * 3).map(|i| (i as f64).sin()).collect())
                .unwrap();
            let rep = net.forward(&mut c, x, None).unwrap();
            assert_eq!(c.tape.shape(rep), &[m, 6], "m = {m}");
        }
    }

    #[test]
    fn zero_dilation_weights_pass_input_projection_through() {
        let (mut store, net) = build(3, cfg_no_attention(), 3);
        for id in store.trainable_ids() {
            if store.name(id).contains("dilation") {
                store.get_mut(id).values_mut().fill(0.0);
            }
        }
        let mut c = ctx(&store);
        let x = c
            .tape
            .constant(vec![5, 3], (0..15).map(|i| i as f64 * 0.1).collect())
            .unwrap();
        let dil = net.dilation_features(&mut c, x, None).unwrap();
        let proj = net.input_proj.forward(&mut c, x).unwrap();
        assert_eq!(c.tape.values(dil), c.tape.values(proj));
    }

    #[test]
    fn zero_laterals_broadcast_global_vector() {
        let (mut store, net) = build(3, cfg_no_attention(), 4);
        for id in store.trainable_ids() {
            if store.name(id).contains("lateral") {
                store.get_mut(id).values_mut().fill(0.0);
            }
        }
        let mut c = ctx(&store);
        let x = c
            .tape
            .constant(vec![8, 3], (0..24).map(|i| (i as f64 * 0.37).cos()).collect())
            .unwrap();
        let dil = net.dilation_features(&mut c, x, None).unwrap();
        let maps = net.squeeze_phase(&mut c, dil, None).unwrap();
        let rep = net.expand_phase(&mut c, &maps).unwrap();
        let global = c.tape.values(*maps.last().unwrap()).to_vec();
        let rv = c.tape.values(rep);
        for j in 0..8 {
            assert_eq!(&rv[j * 6..(j + 1) * 6], global.as_slice(), "frame {j}");
        }
    }

    #[test]
    fn receptive_field_of_four_dilation_layers_is_31() {
        let cfg = cfg_no_attention();
        let (store, net) = build(2, cfg, 5);
        let m = 80;
        let probe = m / 2;
        let base: Vec<f64> = vec![0.0; m * 2];
        let run = |vals: Vec<f64>| {
            let mut c = ctx(&store);
            let x = c.tape.constant(vec![m, 2], vals).unwrap();
            let d = net.dilation_features(&mut c, x, None).unwrap();
            c.tape.values(d).to_vec()
        };
        let quiet = run(base.clone());
        let mut spiked = base;
        spiked[probe * 2] = 10.0;
        spiked[probe * 2 + 1] = -7.0;
        let loud = run(spiked);
        let c_dil = 8;
        let affected: Vec<usize> = (0..m)
            .filter(|t| {
                (0..c_dil).any(|ch| (quiet[t * c_dil + ch] - loud[t * c_dil + ch]).abs() > 1e-12)
            })
            .collect();
        let lo = *affected.first().unwrap();
        let hi = *affected.last().unwrap();
        assert_eq!(lo, probe - 15, "left edge of receptive field");
        assert_eq!(hi, probe + 15, "right edge of receptive field");
        assert_eq!(affected.len(), 31, "support must be contiguous 31 frames");
    }

    #[test]
    fn single_frame_input_is_valid() {
        let (store, net) = build(3, cfg_no_attention(), 6);
        let mut c = ctx(&store);
        let x = c.tape.constant(vec![1, 3], vec![0.5, -0.5, 1.0]).unwrap();
        let rep = net.forward(&mut c, x, None).unwrap();
        assert_eq!(c.tape.shape(rep), &[1, 6]);
        assert!(c.tape.values(rep).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn global_context_reaches_every_frame() {
        let (store, net) = build(2, cfg_no_attention(), 7);
        let m = 16;
        let run = |vals: Vec<f64>| {
            let mut c = ctx(&store);
            let x = c.tape.constant(vec![m, 2], vals).unwrap();
            let rep = net.forward(&mut c, x, None).unwrap();
            c.tape.values(rep).to_vec()
        };
        let base: Vec<f64> = (0..m * 2).map(|i| (i as f64 * 0.21).sin()).collect();
        let a = run(base.clone());
        let mut tweaked = base;
        tweaked[0] += 2.5;
        let b = run(tweaked);
        for t in 0..m {
            let differs = (0..6).any(|ch| (a[t * 6 + ch] - b[t * 6 + ch]).abs() > 1e-12);
            assert!(differs, "frame {t} untouched by a frame-0 perturbation");
        }
    }

    #[test]
    fn attention_none_ignores_query_and_attention_feed_requires_one() {
        let mut cfg = cfg_no_attention();
        let (store, net) = build(3, cfg.clone(), 8);
        let mut c = ctx(&store);
        let x = c.tape.constant(vec![4, 3], vec![0.3; 12]).unwrap();
        let lang = c.tape.constant(vec![2, 4], vec![0.9; 8]).unwrap();
        let with_lang = net.forward(&mut c, x, Some(lang)).unwrap();
        let without = net.forward(&mut c, x, None).unwrap();
        assert_eq!(c.tape.values(with_lang), c.tape.values(without));

        cfg.attention_feed = AttentionFeed::All;
        let (store2, net2) = build(3, cfg, 9);
        let mut c2 = ctx(&store2);
        let x2 = c2.tape.constant(vec![4, 3], vec![0.3; 12]).unwrap();
        assert!(net2.forward(&mut c2, x2, None).is_err());
    }
}
