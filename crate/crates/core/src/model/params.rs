use std::collections::BTreeMap;

use super::{HeadSet, ModelConfig, ModelError};
use crate::numerics::{RngStream, Scalar, Tensor};

pub const INIT_STD: f64 = 0.02;
pub const INIT_CLIP: f64 = 2.0;

pub mod names {
    pub const TOKEN_EMB: &str = "embeddings/token";
    pub const POSITION_EMB: &str = "embeddings/position";
    pub const TYPE_EMB: &str = "embeddings/type";
    pub const EMB_NORM_GAIN: &str = "embeddings/norm/gain";
    pub const EMB_NORM_BIAS: &str = "embeddings/norm/bias";
    pub const EMB_PROJ_W: &str = "embeddings/projection/weight";
    pub const EMB_PROJ_B: &str = "embeddings/projection/bias";
    pub const POOLER_W: &str = "pooler/weight";
    pub const POOLER_B: &str = "pooler/bias";
    pub const MLM_DENSE_W: &str = "mlm/dense/weight";
    pub const MLM_DENSE_B: &str = "mlm/dense/bias";
    pub const MLM_NORM_GAIN: &str = "mlm/norm/gain";
    pub const MLM_NORM_BIAS: &str = "mlm/norm/bias";
    pub const MLM_OUTPUT_BIAS: &str = "mlm/output_bias";
    pub const SOP_W: &str = "sop/weight";
    pub const SOP_B: &str = "sop/bias";
    pub const NER_W: &str = "ner/weight";
    pub const NER_B: &str = "ner/bias";

    /// Prefix of the block used by `layer`.
    pub fn block(shared: bool, layer: usize) -> String {
        if shared {
            "encoder/shared".to_string()
        } else {
            format!("encoder/layer_{layer}")
        }
    }
}

/// Tensor names within a transformer block.
#[derive(Debug, Clone)]
pub struct BlockNames {
    pub query_w: String,
    pub query_b: String,
    pub key_w: String,
    pub key_b: String,
    pub value_w: String,
    pub value_b: String,
    pub output_w: String,
    pub output_b: String,
    pub attn_norm_gain: String,
    pub attn_norm_bias: String,
    pub ffn_in_w: String,
    pub ffn_in_b: String,
    pub ffn_out_w: String,
    pub ffn_out_b: String,
    pub ffn_norm_gain: String,
    pub ffn_norm_bias: String,
}

impl BlockNames {
    pub fn new(prefix: &str) -> Self {
        let n = |s: &str| format!("{prefix}/{s}");
        Self {
            query_w: n("attention/query/weight"),
            query_b: n("attention/query/bias"),
            key_w: n("attention/key/weight"),
            key_b: n("attention/key/bias"),
            value_w: n("attention/value/weight"),
            value_b: n("attention/value/bias"),
            output_w: n("attention/output/weight"),
            output_b: n("attention/output/bias"),
            attn_norm_gain: n("attention_norm/gain"),
            attn_norm_bias: n("attention_norm/bias"),
            ffn_in_w: n("ffn/in/weight"),
            ffn_in_b: n("ffn/in/bias"),
            ffn_out_w: n("ffn/out/weight"),
            ffn_out_b: n("ffn/out/bias"),
            ffn_norm_gain: n("ffn_norm/gain"),
            ffn_norm_bias: n("ffn_norm/bias"),
        }
    }

    pub fn for_layer(config: &ModelConfig, layer: usize) -> Self {
        Self::new(&names::block(config.share_parameters, layer))
    }
}

/// How a tensor is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Weight,
    Zero,
    One,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: InitKind,
}

/// Every tensor the config defines, in initialization order.
pub fn parameter_specs(config: &ModelConfig, heads: HeadSet) -> Vec<ParamSpec> {
    use names::*;
    use InitKind::*;
    let (v, e, h, i) = (
        config.vocab_size,
        config.embedding_size,
        config.hidden_size,
        config.intermediate_size,
    );
    let mut specs = Vec::new();
    let mut add = |name: &str, shape: &[usize], init| {
        specs.push(ParamSpec {
            name: name.to_string(),
            shape: shape.to_vec(),
            init,
        })
    };
    add(TOKEN_EMB, &[v, e], Weight);
    add(POSITION_EMB, &[config.max_positions, e], Weight);
    add(TYPE_EMB, &[config.type_vocab_size, e], Weight);
    add(EMB_NORM_GAIN, &[e], One);
    add(EMB_NORM_BIAS, &[e], Zero);
    add(EMB_PROJ_W, &[e, h], Weight);
    add(EMB_PROJ_B, &[h], Zero);

    let blocks = if config.share_parameters {
        1
    } else {
        config.num_layers
    };
    for layer in 0..blocks {
        let b = BlockNames::for_layer(config, layer);
        for (w, bias) in [
            (&b.query_w, &b.query_b),
            (&b.key_w, &b.key_b),
            (&b.value_w, &b.value_b),
            (&b.output_w, &b.output_b),
        ] {
            add(w, &[h, h], Weight);
            add(bias, &[h], Zero);
        }
        add(&b.attn_norm_gain, &[h], One);
        add(&b.attn_norm_bias, &[h], Zero);
        add(&b.ffn_in_w, &[h, i], Weight);
        add(&b.ffn_in_b, &[i], Zero);
        add(&b.ffn_out_w, &[i, h], Weight);
        add(&b.ffn_out_b, &[h], Zero);
        add(&b.ffn_norm_gain, &[h], One);
        add(&b.ffn_norm_bias, &[h], Zero);
    }

    add(POOLER_W, &[h, h], Weight);
    add(POOLER_B, &[h], Zero);
    if heads.mlm {
        add(MLM_DENSE_W, &[h, e], Weight);
        add(MLM_DENSE_B, &[e], Zero);
        add(MLM_NORM_GAIN, &[e], One);
        add(MLM_NORM_BIAS, &[e], Zero);
        // output projection is tied to the token embedding
        add(MLM_OUTPUT_BIAS, &[v], Zero);
    }
    if heads.sop {
        add(SOP_W, &[h, 2], Weight);
        add(SOP_B, &[2], Zero);
    }
    if heads.ner && config.num_labels > 0 {
        add(NER_W, &[h, config.num_labels], Weight);
        add(NER_B, &[config.num_labels], Zero);
    }
    specs
}

/// Exact number of trainable scalars.
pub fn count_parameters(config: &ModelConfig, heads: HeadSet) -> usize {
    parameter_specs(config, heads)
        .iter()
        .map(|s| s.shape.iter().product::<usize>())
        .sum()
}

/// Named collection of model tensors, iterated in name order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<F> {
    tensors: BTreeMap<String, Tensor<F>>,
}

impl<F: Scalar> Default for ParameterSet<F> {
    fn default() -> Self {
        Self {
            tensors: BTreeMap::new(),
        }
    }
}

impl<F: Scalar> ParameterSet<F> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<F>) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<F>, ModelError> {
        self.tensors
            .get(name)
            .ok_or_else(|| ModelError::MissingTensor(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<F>, ModelError> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| ModelError::MissingTensor(name.to_string()))
    }

    /// Raw values of a tensor; panics if absent. For use after validation.
    pub(crate) fn w(&self, name: &str) -> &[F] {
        self.tensors[name].data()
    }

    pub(crate) fn g(&mut self, name: &str) -> &mut [F] {
        self.tensors.get_mut(name).expect("gradient buffer").data_mut()
    }

    /// Inserts unless `name` is taken; returns whether it was inserted.
    pub fn insert_new(&mut self, name: &str, t: Tensor<F>) -> bool {
        if self.tensors.contains_key(name) {
            return false;
        }
        self.tensors.insert(name.to_string(), t);
        true
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor<F>> {
        self.tensors.remove(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<F>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<F>)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }

    pub fn cast<G: Scalar>(&self) -> ParameterSet<G> {
        ParameterSet {
            tensors: self.tensors.iter().map(|(k, t)| (k.clone(), t.cast())).collect(),
        }
    }

    /// Checks that every tensor the config requires is present with the
    /// right shape; extra tensors are allowed.
    pub fn validate_present(&self, config: &ModelConfig, heads: HeadSet) -> Result<(), ModelError> {
        for spec in parameter_specs(config, heads) {
            let t = self.get(&spec.name)?;
            if t.shape() != spec.shape.as_slice() {
                return Err(ModelError::ShapeMismatch {
                    name: spec.name,
                    expected: spec.shape,
                    found: t.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    /// Like [`Self::validate_present`], but also rejects tensors the config
    /// does not define.
    pub fn validate(&self, config: &ModelConfig, heads: HeadSet) -> Result<(), ModelError> {
        self.validate_present(config, heads)?;
        let specs = parameter_specs(config, heads);
        if self.len() != specs.len() {
            let known: std::collections::HashSet<&str> = specs.iter().map(|s| s.name.as_str()).collect();
            let extra = self.names().find(|n| !known.contains(n.as_str())).cloned().unwrap_or_default();
            return Err(ModelError::UnexpectedTensor(extra));
        }
        Ok(())
    }
}

/// Truncated-normal weights (std 0.02, clipped at 2 std), zero biases, unit gains.
pub fn init_parameters<F: Scalar>(config: &ModelConfig, heads: HeadSet, rng: &mut RngStream) -> ParameterSet<F> {
    let mut params = ParameterSet::new();
    for spec in parameter_specs(config, heads) {
        let t = match spec.init {
            InitKind::Zero => Tensor::zeros(&spec.shape),
            InitKind::One => Tensor::full(&spec.shape, F::one()),
            InitKind::Weight => {
                let n: usize = spec.shape.iter().product();
                let data = (0..n).map(|_| F::lit(rng.truncated_normal(INIT_STD, INIT_CLIP))).collect();
                Tensor::new(spec.shape.clone(), data).expect("spec shape")
            }
        };
        params.insert(spec.name, t.with_grad());
    }
    params
}

/// Adds freshly initialized NER-head tensors sized for `config.num_labels`.
pub fn add_ner_head<F: Scalar>(params: &mut ParameterSet<F>, config: &ModelConfig, rng: &mut RngStream) {
    let h = config.hidden_size;
    let n = config.num_labels;
    let data = (0..h * n).map(|_| F::lit(rng.truncated_normal(INIT_STD, INIT_CLIP))).collect();
    params.insert(names::NER_W, Tensor::new(vec![h, n], data).expect("shape").with_grad());
    params.insert(names::NER_B, Tensor::<F>::zeros(&[n]).with_grad());
}
