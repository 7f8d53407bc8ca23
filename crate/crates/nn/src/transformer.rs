//! Pre-LN transformer trunk shared by the causal decoder and the
//! bidirectional encoder.
//!
//! Sequences in a batch are packed row-wise into one activation matrix and
//! described by [`Segment`]s, so position-wise layers run as a single matmul
//! while attention stays within each sequence.

use ndarray::{s, Array2};

pub use crate::attention::Segment;
use crate::attention::{AttentionCache, SelfAttention};
use crate::config::ModelConfig;
pub use crate::dropout::ForwardMode;
use crate::dropout::{dropout_backward, dropout_forward, DropMask};
use crate::error::{NnError, Result};
use crate::feed_forward::{FeedForward, FeedForwardCache};
use crate::layer_norm::{LayerNorm, LayerNormCache};
use crate::param::{Module, Param, ParamInit};

#[derive(Clone, Debug)]
pub struct Block {
    pub ln1: LayerNorm,
    pub attn: SelfAttention,
    pub ln2: LayerNorm,
    pub ffn: FeedForward,
    dropout: f64,
}

pub struct BlockCache {
    ln1: LayerNormCache,
    attn: AttentionCache,
    attn_drop: DropMask,
    ln2: LayerNormCache,
    ffn: FeedForwardCache,
    ffn_drop: DropMask,
}

impl Block {
    fn new(init: &mut ParamInit, name: &str, cfg: &ModelConfig, causal: bool) -> Self {
        Self {
            ln1: LayerNorm::new(&format!("{name}.ln1"), cfg.embed_dim),
            attn: SelfAttention::new(
                init,
                &format!("{name}.attn"),
                cfg.embed_dim,
                cfg.heads,
                causal,
            ),
            ln2: LayerNorm::new(&format!("{name}.ln2"), cfg.embed_dim),
            ffn: FeedForward::new(init, &format!("{name}.ffn"), cfg.embed_dim, cfg.ff_dim),
            dropout: cfg.dropout,
        }
    }

    fn forward(
        &self,
        x: &Array2<f64>,
        segments: &[Segment],
        mode: &mut ForwardMode<'_>,
    ) -> (Array2<f64>, BlockCache) {
        let (h, ln1) = self.ln1.forward(x);
        let (mut a, attn) = self.attn.forward(&h, segments);
        let attn_drop = dropout_forward(&mut a, self.dropout, mode);
        let x1 = x + &a;
        let (h2, ln2) = self.ln2.forward(&x1);
        let (mut f, ffn) = self.ffn.forward(&h2);
        let ffn_drop = dropout_forward(&mut f, self.dropout, mode);
        let y = x1 + &f;
        (
            y,
            BlockCache {
                ln1,
                attn,
                attn_drop,
                ln2,
                ffn,
                ffn_drop,
            },
        )
    }

    fn backward(&mut self, cache: &BlockCache, segments: &[Segment], dy: &Array2<f64>) -> Array2<f64> {
        let mut df = dy.clone();
        dropout_backward(&mut df, &cache.ffn_drop);
        let dh2 = self.ffn.backward(&cache.ffn, &df);
        let dx1 = dy + &self.ln2.backward(&cache.ln2, &dh2);
        let mut da = dx1.clone();
        dropout_backward(&mut da, &cache.attn_drop);
        let dh = self.attn.backward(&cache.attn, segments, &da);
        dx1 + &self.ln1.backward(&cache.ln1, &dh)
    }
}

impl Module for Block {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.ln1.visit(f);
        self.attn.visit(f);
        self.ln2.visit(f);
        self.ffn.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.ln1.visit_mut(f);
        self.attn.visit_mut(f);
        self.ln2.visit_mut(f);
        self.ffn.visit_mut(f);
    }
}

/// Token + learned absolute position embeddings, blocks, final layer norm.
#[derive(Clone, Debug)]
struct Trunk {
    cfg: ModelConfig,
    tok_embed: Param,
    pos_embed: Param,
    blocks: Vec<Block>,
    ln_f: LayerNorm,
}

struct TrunkCache {
    segments: Vec<Segment>,
    /// Token id per packed row, `None` where the word embedding was overridden.
    row_tokens: Vec<Option<usize>>,
    embed_drop: DropMask,
    blocks: Vec<BlockCache>,
    ln_f: LayerNormCache,
    hidden: Array2<f64>,
}

/// One packed row source: a token id, or an explicit embedding vector.
enum RowInput<'a> {
    Token(usize),
    Vector(&'a [f64]),
}

impl Trunk {
    fn new(cfg: &ModelConfig, init: &mut ParamInit, name: &str, causal: bool) -> Result<Self> {
        cfg.validate()?;
        let tok_embed = init.weight(format!("{name}.tok_embed"), &[cfg.vocab_size, cfg.embed_dim]);
        let pos_embed = init.weight(format!("{name}.pos_embed"), &[cfg.max_seq_len, cfg.embed_dim]);
        let blocks = (0..cfg.layers)
            .map(|i| Block::new(init, &format!("{name}.blocks.{i}"), cfg, causal))
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            tok_embed,
            pos_embed,
            blocks,
            ln_f: LayerNorm::new(&format!("{name}.ln_f"), cfg.embed_dim),
        })
    }

    fn forward<'a>(
        &self,
        seqs: &[Vec<RowInput<'a>>],
        mode: &mut ForwardMode<'_>,
    ) -> Result<TrunkCache> {
        let e = self.cfg.embed_dim;
        let v = self.cfg.vocab_size;
        for seq in seqs {
            if seq.len() > self.cfg.max_seq_len {
                return Err(NnError::Overlength {
                    len: seq.len(),
                    max: self.cfg.max_seq_len,
                });
            }
        }
        let segments = Segment::pack(seqs.iter().map(Vec::len));
        let n: usize = seqs.iter().map(Vec::len).sum();
        let mut x = Array2::zeros((n, e));
        let mut row_tokens = Vec::with_capacity(n);
        let tok = self.tok_embed.mat();
        let pos = self.pos_embed.mat();
        let mut r = 0;
        for seq in seqs {
            for (t, item) in seq.iter().enumerate() {
                let mut row = x.row_mut(r);
                match item {
                    RowInput::Token(id) => {
                        if *id >= v {
                            return Err(NnError::TokenOutOfRange { id: *id, vocab: v });
                        }
                        row.assign(&tok.row(*id));
                        row_tokens.push(Some(*id));
                    }
                    RowInput::Vector(vec) => {
                        if vec.len() != e {
                            return Err(NnError::DimensionMismatch {
                                expected: e,
                                got: vec.len(),
                                context: "prompt override vector",
                            });
                        }
                        row.assign(&ndarray::ArrayView1::from(*vec));
                        row_tokens.push(None);
                    }
                }
                row += &pos.row(t);
                r += 1;
            }
        }
        let embed_drop = dropout_forward(&mut x, self.cfg.dropout, mode);
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, c) = block.forward(&x, &segments, mode);
            caches.push(c);
            x = y;
        }
        let (hidden, ln_f) = self.ln_f.forward(&x);
        Ok(TrunkCache {
            segments,
            row_tokens,
            embed_drop,
            blocks: caches,
            ln_f,
            hidden,
        })
    }

    /// Backpropagates `dhidden`; returns the gradient w.r.t. each packed input
    /// embedding row (before positional embeddings are added).
    fn backward(&mut self, cache: &TrunkCache, dhidden: &Array2<f64>) -> Array2<f64> {
        let mut dx = self.ln_f.backward(&cache.ln_f, dhidden);
        for (block, c) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            dx = block.backward(c, &cache.segments, &dx);
        }
        dropout_backward(&mut dx, &cache.embed_drop);
        let want_tok = self.tok_embed.wants_grad();
        let want_pos = self.pos_embed.wants_grad();
        let e = self.cfg.embed_dim;
        for seg in &cache.segments {
            for t in 0..seg.len {
                let r = seg.start + t;
                let g = dx.row(r);
                if want_pos {
                    let dst = &mut self.pos_embed.grad[t * e..(t + 1) * e];
                    dst.iter_mut().zip(g.iter()).for_each(|(d, s)| *d += s);
                }
                if let (true, Some(id)) = (want_tok, cache.row_tokens[r]) {
                    let dst = &mut self.tok_embed.grad[id * e..(id + 1) * e];
                    dst.iter_mut().zip(g.iter()).for_each(|(d, s)| *d += s);
                }
            }
        }
        dx
    }
}

impl Module for Trunk {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        f(&self.tok_embed);
        f(&self.pos_embed);
        self.blocks.visit(f);
        self.ln_f.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.tok_embed);
        f(&mut self.pos_embed);
        self.blocks.visit_mut(f);
        self.ln_f.visit_mut(f);
    }
}

/// One decoder sequence, optionally with its first two word embeddings
/// replaced by caller-supplied vectors.
#[derive(Clone, Copy, Debug)]
pub struct DecoderInput<'a> {
    pub tokens: &'a [usize],
    pub prompts: Option<[&'a [f64]; 2]>,
}

impl<'a> DecoderInput<'a> {
    pub fn plain(tokens: &'a [usize]) -> Self {
        Self {
            tokens,
            prompts: None,
        }
    }
}

/// Causal decoder-only language model with the output projection tied to
/// the token embedding.
#[derive(Clone, Debug)]
pub struct Decoder {
    trunk: Trunk,
}

pub struct DecoderCache {
    trunk: TrunkCache,
    overridden: Vec<bool>,
}

impl DecoderCache {
    pub fn segments(&self) -> &[Segment] {
        &self.trunk.segments
    }

    pub fn hidden(&self) -> &Array2<f64> {
        &self.trunk.hidden
    }
}

impl Decoder {
    pub fn new(cfg: &ModelConfig, init: &mut ParamInit) -> Result<Self> {
        Ok(Self {
            trunk: Trunk::new(cfg, init, "decoder", true)?,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.trunk.cfg
    }

    pub fn token_embedding(&self) -> &Param {
        &self.trunk.tok_embed
    }

    pub fn token_embedding_mut(&mut self) -> &mut Param {
        &mut self.trunk.tok_embed
    }

    /// Returns logits for every packed row, `[sum(len) x vocab]`.
    pub fn forward(
        &self,
        batch: &[DecoderInput<'_>],
        mode: &mut ForwardMode<'_>,
    ) -> Result<(Array2<f64>, DecoderCache)> {
        let mut seqs = Vec::with_capacity(batch.len());
        let mut overridden = Vec::with_capacity(batch.len());
        for item in batch {
            let mut rows: Vec<RowInput<'_>> =
                item.tokens.iter().map(|&t| RowInput::Token(t)).collect();
            if let Some([a, b]) = item.prompts {
                if rows.len() < 2 {
                    return Err(NnError::OverrideTooShort(rows.len()));
                }
                rows[0] = RowInput::Vector(a);
                rows[1] = RowInput::Vector(b);
            }
            overridden.push(item.prompts.is_some());
            seqs.push(rows);
        }
        let trunk = self.trunk.forward(&seqs, mode)?;
        let logits = trunk.hidden.dot(&self.trunk.tok_embed.mat().t());
        Ok((logits, DecoderCache { trunk, overridden }))
    }

    /// Accumulates gradients from `dlogits`. For sequences that used a prompt
    /// override, returns the gradient w.r.t. the two override vectors.
    pub fn backward(
        &mut self,
        cache: &DecoderCache,
        dlogits: &Array2<f64>,
    ) -> Vec<Option<[Vec<f64>; 2]>> {
        let tok = &mut self.trunk.tok_embed;
        if tok.wants_grad() {
            ndarray::linalg::general_mat_mul(
                1.0,
                &dlogits.t(),
                &cache.trunk.hidden,
                1.0,
                &mut tok.grad_mat_mut(),
            );
        }
        let dhidden = dlogits.dot(&tok.mat());
        let dx = self.trunk.backward(&cache.trunk, &dhidden);
        cache
            .trunk
            .segments
            .iter()
            .zip(&cache.overridden)
            .map(|(seg, &o)| {
                o.then(|| {
                    [
                        dx.row(seg.start).to_vec(),
                        dx.row(seg.start + 1).to_vec(),
                    ]
                })
            })
            .collect()
    }
}

impl Module for Decoder {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.trunk.visit(f)
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.trunk.visit_mut(f)
    }
}

/// Bidirectional encoder returning contextual vectors for every position.
#[derive(Clone, Debug)]
pub struct Encoder {
    trunk: Trunk,
}

pub struct EncoderCache {
    trunk: TrunkCache,
}

impl EncoderCache {
    pub fn segments(&self) -> &[Segment] {
        &self.trunk.segments
    }
}

pub type EncoderInput<'a> = &'a [usize];

impl Encoder {
    pub fn new(cfg: &ModelConfig, init: &mut ParamInit) -> Result<Self> {
        Ok(Self {
            trunk: Trunk::new(cfg, init, "encoder", false)?,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.trunk.cfg
    }

    /// Contextual vectors `[sum(len) x E]`, plus the cache for backward.
    pub fn forward(
        &self,
        batch: &[EncoderInput<'_>],
        mode: &mut ForwardMode<'_>,
    ) -> Result<(Array2<f64>, EncoderCache)> {
        let seqs: Vec<Vec<RowInput<'_>>> = batch
            .iter()
            .map(|s| s.iter().map(|&t| RowInput::Token(t)).collect())
            .collect();
        let trunk = self.trunk.forward(&seqs, mode)?;
        Ok((trunk.hidden.clone(), EncoderCache { trunk }))
    }

    /// Rows of the first position of every sequence.
    pub fn first_rows(hidden: &Array2<f64>, segments: &[Segment]) -> Array2<f64> {
        let mut out = Array2::zeros((segments.len(), hidden.ncols()));
        for (i, seg) in segments.iter().enumerate() {
            out.row_mut(i).assign(&hidden.row(seg.start));
        }
        out
    }

    pub fn backward(&mut self, cache: &EncoderCache, dhidden: &Array2<f64>) {
        self.trunk.backward(&cache.trunk, dhidden);
    }

    /// Scatter per-sequence first-row gradients into a full `dhidden`.
    pub fn scatter_first_rows(d_first: &Array2<f64>, segments: &[Segment], rows: usize) -> Array2<f64> {
        let mut out = Array2::zeros((rows, d_first.ncols()));
        for (i, seg) in segments.iter().enumerate() {
            out.slice_mut(s![seg.start, ..]).assign(&d_first.row(i));
        }
        out
    }
}

impl Module for Encoder {
    fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Param)) {
        self.trunk.visit(f)
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.trunk.visit_mut(f)
    }
}
