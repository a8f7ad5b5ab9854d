use super::encoder::{self, linear_back, EncoderCache, LAYER_NORM_EPS};
use super::params::names;
use super::{HeadSet, ModelConfig, ModelError, ParameterSet, IGNORE_INDEX};
use crate::corpus::{PretrainExample, SopLabel};
use crate::numerics::kernels as k;
use crate::numerics::{RngStream, Scalar, Tensor};
use crate::tokenizer::InputSequence;

/// Final hidden states, shape `[batch, T, hidden]`.
pub fn encode_forward<F: Scalar>(
    params: &ParameterSet<F>,
    config: &ModelConfig,
    batch: &[InputSequence],
) -> Result<Tensor<F>, ModelError> {
    let refs: Vec<&InputSequence> = batch.iter().collect();
    let cache = encoder::forward(params, config, &refs, None)?;
    let shape = vec![cache.layout.batch, cache.layout.seq_len, config.hidden_size];
    Ok(Tensor::new(shape, cache.hidden)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainLoss<F> {
    pub mlm_loss: F,
    pub sop_loss: F,
    pub total: F,
}

struct PretrainForward<F> {
    enc: EncoderCache<F>,
    loss: PretrainLoss<F>,
    mlm: MlmCache<F>,
    sop: SopCache<F>,
}

struct MlmCache<F> {
    rows: Vec<usize>,
    gathered: Vec<F>,
    dense_pre: Vec<F>,
    norm: k::LayerNormCache<F>,
    normed: Vec<F>,
    logits: Vec<F>,
    dlogits: Vec<F>,
}

struct SopCache<F> {
    cls: Vec<F>,
    pooled: Vec<F>,
    logits: Vec<F>,
    dlogits: Vec<F>,
}

/// Gathers rows `idx` of an `[n × dim]` matrix.
fn gather<F: Scalar>(x: &[F], idx: &[usize], dim: usize) -> Vec<F> {
    let mut out = Vec::with_capacity(idx.len() * dim);
    for &r in idx {
        out.extend_from_slice(&x[r * dim..(r + 1) * dim]);
    }
    out
}

fn scatter_add<F: Scalar>(dst: &mut [F], src: &[F], idx: &[usize], dim: usize) {
    for (row, &r) in src.chunks(dim).zip(idx) {
        k::add_assign(&mut dst[r * dim..(r + 1) * dim], row);
    }
}

fn cls_rows(batch: usize, seq_len: usize) -> Vec<usize> {
    (0..batch).map(|b| b * seq_len).collect()
}

/// Pooler plus SOP classifier on the `[CLS]` rows.
fn sop_forward<F: Scalar>(
    params: &ParameterSet<F>,
    config: &ModelConfig,
    enc: &EncoderCache<F>,
) -> (Vec<F>, Vec<F>, Vec<F>) {
    let h = config.hidden_size;
    let b = enc.layout.batch;
    let cls = gather(&enc.hidden, &cls_rows(b, enc.layout.seq_len), h);
    let pooled = k::tanh(&k::linear(&cls, params.w(names::POOLER_W), params.w(names::POOLER_B), b, h, h));
    let logits = k::linear(&pooled, params.w(names::SOP_W), params.w(names::SOP_B), b, h, 2);
    (cls, pooled, logits)
}

fn pretrain_forward<F: Scalar>(
    params: &ParameterSet<F>,
    config: &ModelConfig,
    batch: &[PretrainExample],
    dropout_rng: Option<&mut RngStream>,
) -> Result<PretrainForward<F>, ModelError> {
    params.validate_present(config, HeadSet::PRETRAINING)?;
    let inputs: Vec<&InputSequence> = batch.iter().map(|e| &e.input).collect();
    let enc = encoder::forward(params, config, &inputs, dropout_rng)?;
    let (t, h, e, v) = (
        enc.layout.seq_len,
        config.hidden_size,
        config.embedding_size,
        config.vocab_size,
    );

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (b, ex) in batch.iter().enumerate() {
        if ex.mlm_positions.len() != ex.mlm_labels.len() {
            return Err(ModelError::InvalidExample("mlm positions and labels differ in length".into()));
        }
        for (&p, &l) in ex.mlm_positions.iter().zip(&ex.mlm_labels) {
            if p as usize >= t || l as usize >= v {
                return Err(ModelError::InvalidExample(format!("mlm target ({p}, {l}) out of range")));
            }
            rows.push(b * t + p as usize);
            labels.push(l as usize);
        }
    }
    if rows.is_empty() {
        return Err(ModelError::NoMaskedPositions);
    }
    let m = rows.len();
    let gathered = gather(&enc.hidden, &rows, h);
    let dense_pre = k::linear(&gathered, params.w(names::MLM_DENSE_W), params.w(names::MLM_DENSE_B), m, h, e);
    let act = k::gelu(&dense_pre);
    let (normed, norm) = k::layer_norm(
        &act,
        params.w(names::MLM_NORM_GAIN),
        params.w(names::MLM_NORM_BIAS),
        e,
        LAYER_NORM_EPS,
    )?;
    let mut logits = k::matmul_bt(&normed, params.w(names::TOKEN_EMB), m, e, v);
    let out_bias = params.w(names::MLM_OUTPUT_BIAS);
    for row in logits.chunks_mut(v) {
        k::add_assign(row, out_bias);
    }
    let (mlm_loss, mlm_dlogits) = k::softmax_cross_entropy(&logits, v, &labels, IGNORE_INDEX)?;

    let (cls, pooled, sop_logits) = sop_forward(params, config, &enc);
    let sop_targets: Vec<usize> = batch.iter().map(|e| e.sop_label.class()).collect();
    let (sop_loss, sop_dlogits) = k::softmax_cross_entropy(&sop_logits, 2, &sop_targets, IGNORE_INDEX)?;

    Ok(PretrainForward {
        enc,
        loss: PretrainLoss {
            mlm_loss,
            sop_loss,
            total: mlm_loss + sop_loss,
        },
        mlm: MlmCache {
            rows,
            gathered,
            dense_pre,
            norm,
            normed,
            logits,
            dlogits: mlm_dlogits,
        },
        sop: SopCache {
            cls,
            pooled,
            logits: sop_logits,
            dlogits: sop_dlogits,
        },
    })
}

/// Masked-LM plus sentence-order loss on a batch of equal-length examples.
pub fn pretrain_loss<F: Scalar>(
    params: &ParameterSet<F>,
    config: &ModelConfig,
    batch: &[PretrainExample],
) -> Result<PretrainLoss<F>, ModelError> {
    Ok(pretrain_forward(params, config, batch, None)?.loss)
}

/// Loss and gradient of `total` with respect to every parameter.
pub fn pretrain_loss_and_grads<F: Scalar>(
    params: &ParameterSet<F>,
    config: &ModelConfig,
    batch: &[PretrainExample],
    dropout_rng: Option<&mut RngStream>,
) -> Result<(PretrainLoss<F>, ParameterSet<F>), ModelError> {
    let fwd = pretrain_forward(params, config, batch, dropout_rng)?;
    let (h, e, v) = (config.hidden_size, config.embedding_size, config.vocab_size);
    let n = fwd.enc.layout.rows();
    let b = fwd.enc.layout.batch;
    let mut grads = params.zeros_like();
    let mut dhidden = vec![F::zero(); n * h];

    // MLM head
    let mlm = &fwd.mlm;
    let m = mlm.rows.len();
    k::col_sum_acc(&mlm.dlogits, v, grads.g(names::MLM_OUTPUT_BIAS));
    let dnormed = k::matmul(&mlm.dlogits, params.w(names::TOKEN_EMB), m, v, e);
    k::matmul_at_acc(&mlm.dlogits, &mlm.normed, m, v, e, grads.g(names::TOKEN_EMB));
    let mut dgain = vec![F::zero(); e];
    let mut dbias = vec![F::zero(); e];
    let dact = k::layer_norm_backward(&dnormed, &mlm.norm, params.w(names::MLM_NORM_GAIN), &mut dgain, &mut dbias);
    k::add_assign(grads.g(names::MLM_NORM_GAIN), &dgain);
    k::add_assign(grads.g(names::MLM_NORM_BIAS), &dbias);
    let dpre = k::gelu_backward(&mlm.dense_pre, &dact);
    let dgathered = linear_back(
        params,
        &mut grads,
        names::MLM_DENSE_W,
        names::MLM_DENSE_B,
        &mlm.gathered,
        &dpre,
        m,
        h,
        e,
    );
    scatter_add(&mut dhidden, &dgathered, &mlm.rows, h);

    // SOP head
    let sop = &fwd.sop;
    let dpooled = linear_back(params, &mut grads, names::SOP_W, names::SOP_B, &sop.pooled, &sop.dlogits, b, h, 2);
    let dpool_pre = k::tanh_backward(&sop.pooled, &dpooled);
    let dcls = linear_back(params, &mut grads, names::POOLER_W, names::POOLER_B, &sop.cls, &dpool_pre, b, h, h);
    scatter_add(&mut dhidden, &dcls, &cls_rows(b, fwd.enc.layout.seq_len), h);

    encoder::backward(params, config, &fwd.enc, dhidden, &mut grads);
    Ok((fwd.loss, grads))
}

/// SOP predictions and MLM top-1 accuracy for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainEval {
    pub sop_predictions: Vec<SopLabel>,
    pub mlm_correct: usize,
    pub mlm_total: usize,
}

pub fn pretrain_eval<F: Scalar>(
    params: &ParameterSet<F>,
    config: &ModelConfig,
    batch: &[PretrainExample],
) -> Result<PretrainEval, ModelError> {
    let fwd = pretrain_forward(params, config, batch, None)?;
    let v = config.vocab_size;
    let labels: Vec<u32> = batch.iter().flat_map(|e| e.mlm_labels.iter().copied()).collect();
    let m = labels.len();
    let correct = fwd
        .mlm
        .logits
        .chunks(v)
        .zip(&labels)
        .filter(|(row, &label)| argmax(row) == label as usize)
        .count();
    let sop_predictions = fwd
        .sop
        .logits
        .chunks(2)
        .map(|r| SopLabel::from_class(argmax(r) as u32).expect("two classes"))
        .collect();
    Ok(PretrainEval {
        sop_predictions,
        mlm_correct: correct,
        mlm_total: m,
    })
}

pub(crate) fn argmax<F: Scalar>(row: &[F]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn ner_forward<F: Scalar>(
    params: &ParameterSet<F>,
    config: &ModelConfig,
    inputs: &[&InputSequence],
    dropout_rng: Option<&mut RngStream>,
) -> Result<(EncoderCache<F>, Vec<F>), ModelError> {
    if config.num_labels == 0 || !params.contains(names::NER_W) {
        return Err(ModelError::MissingNerHead);
    }
    params.validate_present(config, HeadSet::NER)?;
    let enc = encoder::forward(params, config, inputs, dropout_rng)?;
    let n = enc.layout.rows();
    let logits = k::linear(
        &enc.hidden,
        params.w(names::NER_W),
        params.w(names::NER_B),
        n,
        config.hidden_size,
        config.num_labels,
    );
    Ok((enc, logits))
}

/// Per-position label scores, shape `[batch, T, num_labels]`.
pub fn token_logits<F: Scalar>(
    params: &ParameterSet<F>,
    config: &ModelConfig,
    batch: &[InputSequence],
) -> Result<Tensor<F>, ModelError> {
    let refs: Vec<&InputSequence> = batch.iter().collect();
    let (enc, logits) = ner_forward(params, config, &refs, None)?;
    Ok(Tensor::new(
        vec![enc.layout.batch, enc.layout.seq_len, config.num_labels],
        logits,
    )?)
}

/// Token-classification cross-entropy; `labels[b][t]` is a label id or
/// [`IGNORE_INDEX`].
pub fn ner_loss_and_grads<F: Scalar>(
    params: &ParameterSet<F>,
    config: &ModelConfig,
    batch: &[&InputSequence],
    labels: &[&[usize]],
    dropout_rng: Option<&mut RngStream>,
) -> Result<(F, ParameterSet<F>), ModelError> {
    let (enc, logits) = ner_forward(params, config, batch, dropout_rng)?;
    let targets = flatten_labels(&enc, labels)?;
    let (loss, dlogits) = k::softmax_cross_entropy(&logits, config.num_labels, &targets, IGNORE_INDEX)?;
    let mut grads = params.zeros_like();
    let n = enc.layout.rows();
    let dhidden = linear_back(
        params,
        &mut grads,
        names::NER_W,
        names::NER_B,
        &enc.hidden,
        &dlogits,
        n,
        config.hidden_size,
        config.num_labels,
    );
    encoder::backward(params, config, &enc, dhidden, &mut grads);
    Ok((loss, grads))
}

pub fn ner_loss<F: Scalar>(
    params: &ParameterSet<F>,
    config: &ModelConfig,
    batch: &[&InputSequence],
    labels: &[&[usize]],
) -> Result<F, ModelError> {
    let (enc, logits) = ner_forward(params, config, batch, None)?;
    let targets = flatten_labels(&enc, labels)?;
    Ok(k::softmax_cross_entropy(&logits, config.num_labels, &targets, IGNORE_INDEX)?.0)
}

fn flatten_labels<F>(enc: &EncoderCache<F>, labels: &[&[usize]]) -> Result<Vec<usize>, ModelError> {
    if labels.len() != enc.layout.batch || labels.iter().any(|l| l.len() != enc.layout.seq_len) {
        return Err(ModelError::InvalidExample("label rows must match the batch layout".into()));
    }
    Ok(labels.iter().flat_map(|l| l.iter().copied()).collect())
}
