//! Language subnet: token embedding plus stacked residual biLSTM layers.

use crate::autograd::Var;
use crate::error::{Error, Result};
use crate::nn::{glu, BiLstmLayer, Conv1dLayer, Ctx, ParamId, ParamStore, RangeDropout};
use crate::tensor::Tensor;
use rand::Rng;
use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

/// Token table with one embedding row per token and an all-zeros unknown
/// row appended at index `len`.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    embed_dim: usize,
    /// (tokens.len() + 1) × embed_dim, row-major; last row is the unknown.
    embeddings: Vec<f64>,
}

impl Vocabulary {
    /// Parse a whitespace-separated text embedding file: one token followed
    /// by its vector per line.
    pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::parse_embeddings(std::io::BufReader::new(file))
    }

    pub fn parse_embeddings(reader: impl BufRead) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut index = HashMap::new();
        let mut embeddings: Vec<f64> = Vec::new();
        let mut embed_dim = None;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts
                .next()
                .ok_or_else(|| Error::format(format!("line {}: empty record", lineno + 1)))?
                .to_string();
            let vec: Vec<f64> = parts
                .map(|p| {
                    p.parse::<f64>().map_err(|_| {
                        Error::format(format!("line {}: bad number {:?}", lineno + 1, p))
                    })
                })
                .collect::<Result<_>>()?;
            match embed_dim {
                None => {
                    if vec.is_empty() {
                        return Err(Error::format(format!(
                            "line {}: token {:?} has no embedding values",
                            lineno + 1,
                            token
                        )));
                    }
                    embed_dim = Some(vec.len());
                }
                Some(d) if d != vec.len() => {
                    return Err(Error::format(format!(
                        "line {}: expected {} values, got {}",
                        lineno + 1,
                        d,
                        vec.len()
                    )));
                }
                _ => {}
            }
            if !vec.iter().all(|v| v.is_finite()) {
                return Err(Error::format(format!("line {}: non-finite embedding", lineno + 1)));
            }
            if index.insert(token.clone(), tokens.len()).is_some() {
                return Err(Error::format(format!(
                    "line {}: duplicate token {:?}",
                    lineno + 1,
                    token
                )));
            }
            tokens.push(token);
            embeddings.extend_from_slice(&vec);
        }
        let embed_dim =
            embed_dim.ok_or_else(|| Error::format("empty embedding file"))?;
        // Unknown-token row.
        embeddings.extend(std::iter::repeat(0.0).take(embed_dim));
        Ok(Vocabulary {
            tokens,
            index,
            embed_dim,
            embeddings,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn unknown_index(&self) -> usize {
        self.tokens.len()
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(self.unknown_index())
    }

    pub fn token(&self, idx: usize) -> Option<&str> {
        self.tokens.get(idx).map(|s| s.as_str())
    }

    /// Embedding matrix including the unknown row, as a tensor of shape
    /// [len+1 × embed_dim].
    pub fn embedding_tensor(&self) -> Tensor {
        Tensor::new(vec![self.tokens.len() + 1, self.embed_dim], self.embeddings.clone())
            .expect("vocabulary embedding buffer is consistent")
    }

    /// Lowercase, split on whitespace, strip surrounding punctuation.
    pub fn tokenize(text: &str) -> Vec<String> {
        text.split_whitespace()
            .map(|w| {
                w.trim_matches(|c: char| !c.is_alphanumeric())
                    .to_lowercase()
            })
            .filter(|w| !w.is_empty())
            .collect()
    }

    pub fn encode_text(&self, text: &str) -> Vec<usize> {
        Self::tokenize(text).iter().map(|t| self.lookup(t)).collect()
    }
}

/// A query resolved to embedding-row indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenQuery {
    pub tokens: Vec<usize>,
}

impl TokenQuery {
    pub fn new(tokens: Vec<usize>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::contract("query must contain at least one token"));
        }
        Ok(TokenQuery { tokens })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Embeds a token query and contextualizes it with stacked residual biLSTM
/// layers, producing the word-level sequence consumed by cross-modal
/// attention.
#[derive(Debug, Clone)]
pub struct LanguageSubnet {
    pub embeddings: ParamId,
    input_proj: Option<Conv1dLayer>,
    layers: Vec<BiLstmLayer>,
    dropout: RangeDropout,
    vocab_rows: usize,
    pub width: usize,
}

impl LanguageSubnet {
    /// `vocab_rows` counts every embedding row (including any unknown row).
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        initial_embeddings: Tensor,
        width: usize,
        hidden: usize,
        layer_count: usize,
        dropout_rate: f64,
        freeze_embeddings: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if layer_count == 0 {
            return Err(Error::config("language subnet needs at least one biLSTM layer"));
        }
        let shape = initial_embeddings.shape().to_vec();
        if shape.len() != 2 {
            return Err(Error::config("embedding matrix must be 2-D"));
        }
        let (vocab_rows, d_w) = (shape[0], shape[1]);
        let embeddings = store.add(
            format!("{name}.embeddings"),
            initial_embeddings,
            !freeze_embeddings,
        );
        let input_proj = (d_w != width).then(|| {
            Conv1dLayer::kernel1(store, &format!("{name}.input_proj"), d_w, 2 * width, rng)
        });
        let layers = (0..layer_count)
            .map(|i| BiLstmLayer::new(store, &format!("{name}.bilstm{i}"), width, hidden, rng))
            .collect();
        Ok(LanguageSubnet {
            embeddings,
            input_proj,
            layers,
            dropout: RangeDropout::new(dropout_rate)?,
            vocab_rows,
            width,
        })
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    /// Word-level output sequence, shape [n × width].
    pub fn encode(&self, ctx: &mut Ctx, query: &TokenQuery) -> Result<Var> {
        if let Some(bad) = query.tokens.iter().find(|t| **t >= self.vocab_rows) {
            return Err(Error::contract(format!(
                "token id {bad} out of vocabulary ({} rows)",
                self.vocab_rows
            )));
        }
        let table = ctx.param(self.embeddings);
        let mut h = ctx.tape.gather_rows(table, &query.tokens)?;
        if let Some(proj) = &self.input_proj {
            let pre = proj.forward(ctx, h)?;
            h = glu(&mut ctx.tape, pre)?;
        }
        for layer in &self.layers {
            h = self.dropout.forward(ctx, h)?;
            h = layer.forward(ctx, h)?;
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parse_embeddings_by_hand() {
        let v = Vocabulary::parse_embeddings("a 1.0 2.0\nb 3.0 4.0".as_bytes()).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.embed_dim(), 2);
        assert_eq!(v.lookup("a"), 0);
        let e = v.embedding_tensor();
        assert_eq!(e.shape(), &[3, 2]);
        assert_eq!(&e.values()[0..2], &[1.0, 2.0]);
        // Unseen tokens resolve to the zero row.
        assert_eq!(v.lookup("zebra"), 2);
        assert_eq!(&e.values()[4..6], &[0.0, 0.0]);
    }

    #[test]
    fn inconsistent_dimension_reports_line() {
        let err = Vocabulary::parse_embeddings("a 1.0 2.0\nb 3.0 4.0 5.0".as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "got {msg}");
    }

    #[test]
    fn empty_file_rejected() {
        assert!(Vocabulary::parse_embeddings("".as_bytes()).is_err());
    }

    #[test]
    fn tokenize_strips_punctuation_and_lowercases() {
        assert_eq!(
            Vocabulary::tokenize("The dog, runs!  fast."),
            vec!["the", "dog", "runs", "fast"]
        );
    }

    fn subnet(width: usize, p: usize) -> (ParamStore, LanguageSubnet) {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParamStore::new();
        let emb = Tensor::glorot_uniform(vec![6, 4], 6, 4, &mut rng);
        let net = LanguageSubnet::new(&mut store, "lang", emb, width, 3, p, 1.0, false, &mut rng)
            .unwrap();
        (store, net)
    }

    #[test]
    fn zero_recurrence_reduces_to_projected_embeddings() {
        let (mut store, net) = subnet(4, 1);
        // Zero every biLSTM parameter; embeddings (and the absent input
        // projection) stay.
        for id in store.trainable_ids() {
            if store.name(id).contains("bilstm") {
                store.get_mut(id).values_mut().fill(0.0);
            }
        }
        let mut ctx = Ctx::new(&store, false, ChaCha8Rng::seed_from_u64(0));
        let q = TokenQuery::new(vec![1, 3]).unwrap();
        let out = net.encode(&mut ctx, &q).unwrap();
        let table = store.get(net.embeddings).values();
        let expect: Vec<f64> = table[4..8].iter().chain(&table[12..16]).copied().collect();
        assert_eq!(ctx.tape.values(out), expect.as_slice());
    }

    #[test]
    fn stacking_two_layers_composes_single_layers() {
        let (store, net) = subnet(4, 2);
        let q = TokenQuery::new(vec![0, 2, 5]).unwrap();
        let mut ctx = Ctx::new(&store, false, ChaCha8Rng::seed_from_u64(0));
        let full = net.encode(&mut ctx, &q).unwrap();
        let full_vals = ctx.tape.values(full).to_vec();

        // Apply layer 0 then layer 1 by hand.
        let mut ctx2 = Ctx::new(&store, false, ChaCha8Rng::seed_from_u64(0));
        let table = ctx2.param(net.embeddings);
        let mut h = ctx2.tape.gather_rows(table, &q.tokens).unwrap();
        for layer in &net.layers {
            h = layer.forward(&mut ctx2, h).unwrap();
        }
        assert_eq!(full_vals, ctx2.tape.values(h));
    }

    #[test]
    fn single_token_output_shape() {
        let (store, net) = subnet(4, 1);
        let mut ctx = Ctx::new(&store, false, ChaCha8Rng::seed_from_u64(0));
        let q = TokenQuery::new(vec![2]).unwrap();
        let out = net.encode(&mut ctx, &q).unwrap();
        assert_eq!(ctx.tape.shape(out), &[1, 4]);
    }

    #[test]
    fn token_order_changes_output() {
        let (store, net) = subnet(4, 1);
        let run = |tokens: Vec<usize>| {
            let mut ctx = Ctx::new(&store, false, ChaCha8Rng::seed_from_u64(0));
            let q = TokenQuery::new(tokens).unwrap();
            let out = net.encode(&mut ctx, &q).unwrap();
            ctx.tape.values(out).to_vec()
        };
        let ab = run(vec![1, 2]);
        let ba = run(vec![2, 1]);
        assert_ne!(ab, ba, "token permutation must change the encoding");
    }

    #[test]
    fn out_of_vocabulary_id_rejected() {
        let (store, net) = subnet(4, 1);
        let mut ctx = Ctx::new(&store, false, ChaCha8Rng::seed_from_u64(0));
        let q = TokenQuery::new(vec![6]).unwrap();
        assert!(net.encode(&mut ctx, &q).is_err());
    }
}
