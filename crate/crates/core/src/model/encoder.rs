//! Factorized embeddings and the (shared) post-norm transformer block, with
//! cached forward passes and explicit backward passes.

use super::params::{names, BlockNames};
use super::{HeadSet, ModelConfig, ModelError, ParameterSet};
use crate::numerics::kernels::{self as k, LayerNormCache};
use crate::numerics::{RngStream, Scalar};
use crate::tokenizer::InputSequence;

pub const LAYER_NORM_EPS: f64 = 1e-12;

/// Batch shape plus flattened ids, validated against the config.
#[derive(Debug, Clone)]
pub(crate) struct BatchLayout {
    pub batch: usize,
    pub seq_len: usize,
    pub token_ids: Vec<usize>,
    pub type_ids: Vec<usize>,
    pub position_ids: Vec<usize>,
    /// `key_valid[b * T + j]`: whether position j of item b may be attended.
    pub key_valid: Vec<bool>,
}

impl BatchLayout {
    pub fn new(config: &ModelConfig, inputs: &[&InputSequence]) -> Result<Self, ModelError> {
        let first = inputs.first().ok_or(ModelError::EmptyBatch)?;
        let t = first.len();
        if t == 0 {
            return Err(ModelError::EmptyBatch);
        }
        if t > config.max_positions {
            return Err(ModelError::SequenceTooLong {
                len: t,
                max: config.max_positions,
            });
        }
        let mut layout = Self {
            batch: inputs.len(),
            seq_len: t,
            token_ids: Vec::with_capacity(inputs.len() * t),
            type_ids: Vec::with_capacity(inputs.len() * t),
            position_ids: Vec::with_capacity(inputs.len() * t),
            key_valid: Vec::with_capacity(inputs.len() * t),
        };
        for s in inputs {
            if s.len() != t || s.type_ids.len() != t || s.attention_mask.len() != t {
                return Err(ModelError::RaggedBatch);
            }
            for i in 0..t {
                let id = s.token_ids[i] as usize;
                if id >= config.vocab_size {
                    return Err(ModelError::TokenOutOfRange {
                        id,
                        vocab_size: config.vocab_size,
                    });
                }
                let ty = s.type_ids[i] as usize;
                if ty >= config.type_vocab_size {
                    return Err(ModelError::TokenOutOfRange {
                        id: ty,
                        vocab_size: config.type_vocab_size,
                    });
                }
                layout.token_ids.push(id);
                layout.type_ids.push(ty);
                layout.position_ids.push(i);
                layout.key_valid.push(s.attention_mask[i] == 1);
            }
        }
        Ok(layout)
    }

    pub fn rows(&self) -> usize {
        self.batch * self.seq_len
    }
}

#[derive(Debug, Clone)]
struct BlockCache<F> {
    names: BlockNames,
    input: Vec<F>,
    q: Vec<F>,
    k: Vec<F>,
    v: Vec<F>,
    /// `[B × heads × T × T]`, zero on masked keys.
    probs: Vec<F>,
    context: Vec<F>,
    attn_dropout: Option<Vec<F>>,
    attn_norm: LayerNormCache<F>,
    h1: Vec<F>,
    ffn_pre: Vec<F>,
    ffn_act: Vec<F>,
    ffn_dropout: Option<Vec<F>>,
    ffn_norm: LayerNormCache<F>,
}

/// Forward pass state needed for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct EncoderCache<F> {
    pub layout: BatchLayout,
    emb_norm: LayerNormCache<F>,
    emb_normed: Vec<F>,
    emb_dropout: Option<Vec<F>>,
    blocks: Vec<BlockCache<F>>,
    /// Final hidden states, `[B·T × H]`.
    pub hidden: Vec<F>,
}

fn dropout_mask<F: Scalar>(n: usize, rate: f64, rng: Option<&mut RngStream>) -> Option<Vec<F>> {
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let keep = F::lit(1.0 / (1.0 - rate));
    Some((0..n).map(|_| if rng.uniform() < rate { F::zero() } else { keep }).collect())
}

/// Runs the embeddings and `num_layers` block applications. Dropout is
/// active only when an RNG is supplied and the configured rate is positive.
pub(crate) fn forward<F: Scalar>(
    params: &ParameterSet<F>,
    config: &ModelConfig,
    inputs: &[&InputSequence],
    mut dropout_rng: Option<&mut RngStream>,
) -> Result<EncoderCache<F>, ModelError> {
    params.validate_present(config, HeadSet::NONE)?;
    let layout = BatchLayout::new(config, inputs)?;
    let n = layout.rows();
    let (e, h) = (config.embedding_size, config.hidden_size);

    let mut emb = k::embedding(params.w(names::TOKEN_EMB), &layout.token_ids, e);
    k::add_assign(&mut emb, &k::embedding(params.w(names::POSITION_EMB), &layout.position_ids, e));
    k::add_assign(&mut emb, &k::embedding(params.w(names::TYPE_EMB), &layout.type_ids, e));
    let (emb_normed, emb_norm) = k::layer_norm(
        &emb,
        params.w(names::EMB_NORM_GAIN),
        params.w(names::EMB_NORM_BIAS),
        e,
        LAYER_NORM_EPS,
    )?;
    let mut x = k::linear(&emb_normed, params.w(names::EMB_PROJ_W), params.w(names::EMB_PROJ_B), n, e, h);
    let emb_dropout = dropout_mask(n * h, config.dropout_rate, dropout_rng.as_deref_mut());
    if let Some(m) = &emb_dropout {
        k::apply_mask(&mut x, m);
    }

    let mut blocks = Vec::with_capacity(config.num_layers);
    for layer in 0..config.num_layers {
        let names = BlockNames::for_layer(config, layer);
        let (out, cache) = block_forward(params, config, &layout, names, x, dropout_rng.as_deref_mut())?;
        x = out;
        blocks.push(cache);
    }

    Ok(EncoderCache {
        layout,
        emb_norm,
        emb_normed,
        emb_dropout,
        blocks,
        hidden: x,
    })
}

fn block_forward<F: Scalar>(
    params: &ParameterSet<F>,
    config: &ModelConfig,
    layout: &BatchLayout,
    names: BlockNames,
    input: Vec<F>,
    mut dropout_rng: Option<&mut RngStream>,
) -> Result<(Vec<F>, BlockCache<F>), ModelError> {
    let n = layout.rows();
    let (h, inter) = (config.hidden_size, config.intermediate_size);
    let q = k::linear(&input, params.w(&names.query_w), params.w(&names.query_b), n, h, h);
    let kk = k::linear(&input, params.w(&names.key_w), params.w(&names.key_b), n, h, h);
    let v = k::linear(&input, params.w(&names.value_w), params.w(&names.value_b), n, h, h);
    let (probs, context) = attention(config, layout, &q, &kk, &v);

    let mut attn_out = k::linear(&context, params.w(&names.output_w), params.w(&names.output_b), n, h, h);
    let attn_dropout = dropout_mask(n * h, config.dropout_rate, dropout_rng.as_deref_mut());
    if let Some(m) = &attn_dropout {
        k::apply_mask(&mut attn_out, m);
    }
    k::add_assign(&mut attn_out, &input);
    let (h1, attn_norm) = k::layer_norm(
        &attn_out,
        params.w(&names.attn_norm_gain),
        params.w(&names.attn_norm_bias),
        h,
        LAYER_NORM_EPS,
    )?;

    let ffn_pre = k::linear(&h1, params.w(&names.ffn_in_w), params.w(&names.ffn_in_b), n, h, inter);
    let ffn_act = k::gelu(&ffn_pre);
    let mut ffn_out = k::linear(&ffn_act, params.w(&names.ffn_out_w), params.w(&names.ffn_out_b), n, inter, h);
    let ffn_dropout = dropout_mask(n * h, config.dropout_rate, dropout_rng);
    if let Some(m) = &ffn_dropout {
        k::apply_mask(&mut ffn_out, m);
    }
    k::add_assign(&mut ffn_out, &h1);
    let (out, ffn_norm) = k::layer_norm(
        &ffn_out,
        params.w(&names.ffn_norm_gain),
        params.w(&names.ffn_norm_bias),
        h,
        LAYER_NORM_EPS,
    )?;

    Ok((
        out,
        BlockCache {
            names,
            input,
            q,
            k: kk,
            v,
            probs,
            context,
            attn_dropout,
            attn_norm,
            h1,
            ffn_pre,
            ffn_act,
            ffn_dropout,
            ffn_norm,
        },
    ))
}

/// Scaled dot-product attention per item and head. Padded keys get zero
/// probability, which is the limit of an additive −∞ mask.
fn attention<F: Scalar>(
    config: &ModelConfig,
    layout: &BatchLayout,
    q: &[F],
    kk: &[F],
    v: &[F],
) -> (Vec<F>, Vec<F>) {
    let (t, h, heads) = (layout.seq_len, config.hidden_size, config.num_heads);
    let d = config.head_dim();
    let scale = F::lit(1.0 / (d as f64).sqrt());
    let mut probs = vec![F::zero(); layout.batch * heads * t * t];
    let mut context = vec![F::zero(); layout.rows() * h];
    let mut scores = vec![F::zero(); t];
    for b in 0..layout.batch {
        let valid = &layout.key_valid[b * t..(b + 1) * t];
        for hd in 0..heads {
            let off = hd * d;
            for i in 0..t {
                let qi = &q[(b * t + i) * h + off..(b * t + i) * h + off + d];
                let mut max = F::neg_infinity();
                for j in 0..t {
                    if valid[j] {
                        let kj = &kk[(b * t + j) * h + off..(b * t + j) * h + off + d];
                        scores[j] = k::dot(qi, kj) * scale;
                        max = max.max(scores[j]);
                    }
                }
                let p_row = &mut probs[((b * heads + hd) * t + i) * t..((b * heads + hd) * t + i + 1) * t];
                let mut sum = F::zero();
                for j in 0..t {
                    if valid[j] {
                        p_row[j] = (scores[j] - max).exp();
                        sum += p_row[j];
                    }
                }
                let ctx = &mut context[(b * t + i) * h + off..(b * t + i) * h + off + d];
                for j in 0..t {
                    if valid[j] {
                        p_row[j] /= sum;
                        let vj = &v[(b * t + j) * h + off..(b * t + j) * h + off + d];
                        for (c, &vv) in ctx.iter_mut().zip(vj) {
                            *c += p_row[j] * vv;
                        }
                    }
                }
            }
        }
    }
    (probs, context)
}

fn attention_backward<F: Scalar>(
    config: &ModelConfig,
    layout: &BatchLayout,
    cache: &BlockCache<F>,
    dcontext: &[F],
) -> (Vec<F>, Vec<F>, Vec<F>) {
    let (t, h, heads) = (layout.seq_len, config.hidden_size, config.num_heads);
    let d = config.head_dim();
    let scale = F::lit(1.0 / (d as f64).sqrt());
    let n = layout.rows();
    let (mut dq, mut dk, mut dv) = (vec![F::zero(); n * h], vec![F::zero(); n * h], vec![F::zero(); n * h]);
    let mut dp = vec![F::zero(); t];
    for b in 0..layout.batch {
        let valid = &layout.key_valid[b * t..(b + 1) * t];
        for hd in 0..heads {
            let off = hd * d;
            for i in 0..t {
                let row_i = (b * t + i) * h + off;
                let dctx = &dcontext[row_i..row_i + d];
                let p_row = &cache.probs[((b * heads + hd) * t + i) * t..((b * heads + hd) * t + i + 1) * t];
                let mut weighted = F::zero();
                for j in 0..t {
                    if valid[j] {
                        let row_j = (b * t + j) * h + off;
                        dp[j] = k::dot(dctx, &cache.v[row_j..row_j + d]);
                        weighted += p_row[j] * dp[j];
                        for (g, &c) in dv[row_j..row_j + d].iter_mut().zip(dctx) {
                            *g += p_row[j] * c;
                        }
                    }
                }
                for j in 0..t {
                    if !valid[j] {
                        continue;
                    }
                    let ds = p_row[j] * (dp[j] - weighted) * scale;
                    if ds == F::zero() {
                        continue;
                    }
                    let row_j = (b * t + j) * h + off;
                    for c in 0..d {
                        dq[row_i + c] += ds * cache.k[row_j + c];
                        dk[row_j + c] += ds * cache.q[row_i + c];
                    }
                }
            }
        }
    }
    (dq, dk, dv)
}

fn block_backward<F: Scalar>(
    params: &ParameterSet<F>,
    config: &ModelConfig,
    layout: &BatchLayout,
    cache: &BlockCache<F>,
    dout: &[F],
    grads: &mut ParameterSet<F>,
) -> Vec<F> {
    let n = layout.rows();
    let (h, inter) = (config.hidden_size, config.intermediate_size);
    let nm = &cache.names;

    let mut dgain = vec![F::zero(); h];
    let mut dbias = vec![F::zero(); h];
    let dz2 = k::layer_norm_backward(dout, &cache.ffn_norm, params.w(&nm.ffn_norm_gain), &mut dgain, &mut dbias);
    k::add_assign(grads.g(&nm.ffn_norm_gain), &dgain);
    k::add_assign(grads.g(&nm.ffn_norm_bias), &dbias);

    let mut dh1 = dz2.clone();
    let mut dffn_out = dz2;
    if let Some(m) = &cache.ffn_dropout {
        k::apply_mask(&mut dffn_out, m);
    }
    let dact = linear_back(params, grads, &nm.ffn_out_w, &nm.ffn_out_b, &cache.ffn_act, &dffn_out, n, inter, h);
    let dpre = k::gelu_backward(&cache.ffn_pre, &dact);
    let dh1_ffn = linear_back(params, grads, &nm.ffn_in_w, &nm.ffn_in_b, &cache.h1, &dpre, n, h, inter);
    k::add_assign(&mut dh1, &dh1_ffn);

    dgain.iter_mut().for_each(|v| *v = F::zero());
    dbias.iter_mut().for_each(|v| *v = F::zero());
    let dz1 = k::layer_norm_backward(&dh1, &cache.attn_norm, params.w(&nm.attn_norm_gain), &mut dgain, &mut dbias);
    k::add_assign(grads.g(&nm.attn_norm_gain), &dgain);
    k::add_assign(grads.g(&nm.attn_norm_bias), &dbias);

    let mut dx = dz1.clone();
    let mut dattn = dz1;
    if let Some(m) = &cache.attn_dropout {
        k::apply_mask(&mut dattn, m);
    }
    let dcontext = linear_back(params, grads, &nm.output_w, &nm.output_b, &cache.context, &dattn, n, h, h);
    let (dq, dk, dv) = attention_backward(config, layout, cache, &dcontext);
    for (dy, w, b) in [
        (&dq, &nm.query_w, &nm.query_b),
        (&dk, &nm.key_w, &nm.key_b),
        (&dv, &nm.value_w, &nm.value_b),
    ] {
        let dxi = linear_back(params, grads, w, b, &cache.input, dy, n, h, h);
        k::add_assign(&mut dx, &dxi);
    }
    dx
}

/// Backward of a named linear layer; accumulates into `grads`, returns `dx`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_back<F: Scalar>(
    params: &ParameterSet<F>,
    grads: &mut ParameterSet<F>,
    w_name: &str,
    b_name: &str,
    x: &[F],
    dy: &[F],
    n: usize,
    d_in: usize,
    d_out: usize,
) -> Vec<F> {
    let mut dw = grads.remove(w_name).expect("gradient buffer");
    let mut db = grads.remove(b_name).expect("gradient buffer");
    let dx = k::linear_backward(x, params.w(w_name), dy, n, d_in, d_out, dw.data_mut(), db.data_mut());
    grads.insert(w_name, dw);
    grads.insert(b_name, db);
    dx
}

/// Backpropagates `dhidden` (`[B·T × H]`) through blocks and embeddings.
pub(crate) fn backward<F: Scalar>(
    params: &ParameterSet<F>,
    config: &ModelConfig,
    cache: &EncoderCache<F>,
    dhidden: Vec<F>,
    grads: &mut ParameterSet<F>,
) {
    let layout = &cache.layout;
    let n = layout.rows();
    let (e, h) = (config.embedding_size, config.hidden_size);
    let mut dx = dhidden;
    for block in cache.blocks.iter().rev() {
        dx = block_backward(params, config, layout, block, &dx, grads);
    }
    if let Some(m) = &cache.emb_dropout {
        k::apply_mask(&mut dx, m);
    }
    let demb_normed = linear_back(
        params,
        grads,
        names::EMB_PROJ_W,
        names::EMB_PROJ_B,
        &cache.emb_normed,
        &dx,
        n,
        e,
        h,
    );
    let mut dgain = vec![F::zero(); e];
    let mut dbias = vec![F::zero(); e];
    let demb = k::layer_norm_backward(
        &demb_normed,
        &cache.emb_norm,
        params.w(names::EMB_NORM_GAIN),
        &mut dgain,
        &mut dbias,
    );
    k::add_assign(grads.g(names::EMB_NORM_GAIN), &dgain);
    k::add_assign(grads.g(names::EMB_NORM_BIAS), &dbias);
    k::embedding_backward(&demb, &layout.token_ids, e, grads.g(names::TOKEN_EMB));
    k::embedding_backward(&demb, &layout.position_ids, e, grads.g(names::POSITION_EMB));
    k::embedding_backward(&demb, &layout.type_ids, e, grads.g(names::TYPE_EMB));
}
