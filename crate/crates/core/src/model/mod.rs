//! Gated graph-convolution link predictor for (call site, function) pairs.
//!
//! Node inputs are the sum of four embeddings (kind, hashed name, capped
//! parameter count, capped argument count). Each of the `L` layers updates
//! edge states and node states:
//!
//! ```text
//! ê_ij = e_ij + ReLU(Norm(W3 e_ij + W4 h_i + W5 h_j))
//! η_ij = σ(ê_ij) / (Σ_j' σ(ê_ij') + ε)
//! h'_i = h_i + ReLU(Norm(W1 h_i + Σ_j η_ij ⊙ W2 h_j))
//! ```
//!
//! where `j → i` ranges over incoming message edges and initial edge states
//! are edge-type embeddings. `Norm` standardises each vector over its
//! features and applies a learnable per-feature scale `1 + γ` and shift `β`;
//! it normalises per node (not per batch) so a node's state depends only on
//! its neighbourhood. Pairs are scored by
//! `σ(w2ᵀ ReLU(W_head [h_cs ‖ h_fn] + b1) + b2)`.
//!
//! All arithmetic is `f64`; gradients are computed by hand in [`net`].

pub mod checkpoint;
pub mod net;
pub mod train;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use callsight_js::NodeKind;

use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::graph::EdgeType;

pub use checkpoint::Checkpoint;
pub use net::{forward, loss_and_gradients, score_pairs, Batch, MessageGraph, Predictor};
pub use train::{train, EpochRecord, StopReason, TrainOutcome, TrainReport};

/// Counts at or above this share the last count bucket.
pub const COUNT_CAP: usize = 16;

/// Bound of the uniform initialisation of embedding tables.
pub const EMB_BOUND: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub layers: usize,
    pub hidden_dim: usize,
    pub name_buckets: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub lr_init: f64,
    pub lr_floor: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    /// Train / validation / test fractions.
    pub split: [f64; 3],
    pub seed: u64,
    /// Whether training-split call edges join the message-passing graph.
    pub train_edges_in_graph: bool,
    /// Batches per epoch when training edges are messages; each batch's
    /// positives are withheld from its own message graph.
    pub message_folds: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            layers: 5,
            hidden_dim: 64,
            name_buckets: 1024,
            max_epochs: 500,
            batch_size: 32768,
            lr_init: 1e-3,
            lr_floor: 1e-5,
            plateau_factor: 0.5,
            plateau_patience: 10,
            split: [0.8, 0.1, 0.1],
            seed: 0,
            train_edges_in_graph: true,
            message_folds: 2,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Hyperparams(m.to_string()));
        if self.layers == 0 {
            return fail("layers must be at least 1");
        }
        if self.hidden_dim == 0
            || self.name_buckets == 0
            || self.batch_size == 0
            || self.message_folds == 0
        {
            return fail("hidden_dim, name_buckets, batch_size and message_folds must be positive");
        }
        if self.split.iter().any(|f| !(0.0..=1.0).contains(f))
            || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return fail("split fractions must lie in [0, 1] and sum to 1");
        }
        if !(self.lr_floor > 0.0) || !(self.lr_init > 0.0) {
            return fail("learning rates must be positive");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor < 1.0) {
            return fail("plateau_factor must lie in (0, 1)");
        }
        Ok(())
    }

    /// Bound of the uniform initialisation, `1/√H`.
    pub fn init_bound(&self) -> f64 {
        1.0 / (self.hidden_dim as f64).sqrt()
    }
}

/// Per-layer learnable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub w3: Array2<f64>,
    pub w4: Array2<f64>,
    pub w5: Array2<f64>,
    /// Node norm scale offset γ (scale is `1 + γ`) and shift β.
    pub node_gain: Array1<f64>,
    pub node_bias: Array1<f64>,
    pub edge_gain: Array1<f64>,
    pub edge_bias: Array1<f64>,
}

/// Every learnable tensor. Gradients and optimizer moments share this shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensors {
    /// One row per vocabulary kind plus a final out-of-vocabulary row.
    pub kind_emb: Array2<f64>,
    /// One row per name bucket plus a final row for unnamed nodes.
    pub name_emb: Array2<f64>,
    pub par_emb: Array2<f64>,
    pub arg_emb: Array2<f64>,
    pub edge_emb: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub head_w: Array2<f64>,
    pub head_b1: Array1<f64>,
    pub head_w2: Array1<f64>,
    pub head_b2: Array1<f64>,
}

impl Tensors {
    pub fn zeros(hp: &Hyperparams, vocab: usize) -> Self {
        let h = hp.hidden_dim;
        let m = |r, c| Array2::zeros((r, c));
        let v = |n| Array1::zeros(n);
        Tensors {
            kind_emb: m(vocab + 1, h),
            name_emb: m(hp.name_buckets + 1, h),
            par_emb: m(COUNT_CAP + 1, h),
            arg_emb: m(COUNT_CAP + 1, h),
            edge_emb: m(EdgeType::ALL.len(), h),
            layers: (0..hp.layers)
                .map(|_| LayerParams {
                    w1: m(h, h),
                    w2: m(h, h),
                    w3: m(h, h),
                    w4: m(h, h),
                    w5: m(h, h),
                    node_gain: v(h),
                    node_bias: v(h),
                    edge_gain: v(h),
                    edge_bias: v(h),
                })
                .collect(),
            head_w: m(h, 2 * h),
            head_b1: v(h),
            head_w2: v(h),
            head_b2: v(1),
        }
    }

    /// Number of scalars [`Tensors::zeros`] would allocate, or `None` on
    /// overflow. Lets untrusted hyperparameters be checked before allocating.
    pub fn count_for(hp: &Hyperparams, vocab: usize) -> Option<usize> {
        let h = hp.hidden_dim;
        let rows = vocab
            .checked_add(hp.name_buckets)?
            .checked_add(2 + 2 * (COUNT_CAP + 1) + EdgeType::ALL.len())?;
        let per_layer = h
            .checked_mul(h)?
            .checked_mul(5)?
            .checked_add(h.checked_mul(4)?)?;
        let head = h
            .checked_mul(h)?
            .checked_mul(2)?
            .checked_add(h.checked_mul(2)?)?
            .checked_add(1)?;
        rows.checked_mul(h)?
            .checked_add(per_layer.checked_mul(hp.layers)?)?
            .checked_add(head)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|_, s| s.fill(0.0));
        z
    }

    /// Visits every tensor as `(name, shape, data)` in a fixed order.
    pub fn for_each(&self, mut f: impl FnMut(&str, &[usize], &[f64])) {
        fn data2(a: &Array2<f64>) -> &[f64] {
            a.as_slice().expect("standard layout")
        }
        fn data1(a: &Array1<f64>) -> &[f64] {
            a.as_slice().expect("standard layout")
        }
        f("kind_emb", self.kind_emb.shape(), data2(&self.kind_emb));
        f("name_emb", self.name_emb.shape(), data2(&self.name_emb));
        f("par_emb", self.par_emb.shape(), data2(&self.par_emb));
        f("arg_emb", self.arg_emb.shape(), data2(&self.arg_emb));
        f("edge_emb", self.edge_emb.shape(), data2(&self.edge_emb));
        for (l, p) in self.layers.iter().enumerate() {
            for (n, w) in [
                ("w1", &p.w1),
                ("w2", &p.w2),
                ("w3", &p.w3),
                ("w4", &p.w4),
                ("w5", &p.w5),
            ] {
                f(&format!("layers.{l}.{n}"), w.shape(), data2(w));
            }
            for (n, v) in [
                ("node_gain", &p.node_gain),
                ("node_bias", &p.node_bias),
                ("edge_gain", &p.edge_gain),
                ("edge_bias", &p.edge_bias),
            ] {
                f(&format!("layers.{l}.{n}"), v.shape(), data1(v));
            }
        }
        f("head_w", self.head_w.shape(), data2(&self.head_w));
        f("head_b1", self.head_b1.shape(), data1(&self.head_b1));
        f("head_w2", self.head_w2.shape(), data1(&self.head_w2));
        f("head_b2", self.head_b2.shape(), data1(&self.head_b2));
    }

    /// Mutable counterpart of [`Tensors::for_each`], same order.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, &mut [f64])) {
        fn d2(a: &mut Array2<f64>) -> &mut [f64] {
            a.as_slice_mut().expect("standard layout")
        }
        fn d1(a: &mut Array1<f64>) -> &mut [f64] {
            a.as_slice_mut().expect("standard layout")
        }
        f("kind_emb", d2(&mut self.kind_emb));
        f("name_emb", d2(&mut self.name_emb));
        f("par_emb", d2(&mut self.par_emb));
        f("arg_emb", d2(&mut self.arg_emb));
        f("edge_emb", d2(&mut self.edge_emb));
        for (l, p) in self.layers.iter_mut().enumerate() {
            f(&format!("layers.{l}.w1"), d2(&mut p.w1));
            f(&format!("layers.{l}.w2"), d2(&mut p.w2));
            f(&format!("layers.{l}.w3"), d2(&mut p.w3));
            f(&format!("layers.{l}.w4"), d2(&mut p.w4));
            f(&format!("layers.{l}.w5"), d2(&mut p.w5));
            f(&format!("layers.{l}.node_gain"), d1(&mut p.node_gain));
            f(&format!("layers.{l}.node_bias"), d1(&mut p.node_bias));
            f(&format!("layers.{l}.edge_gain"), d1(&mut p.edge_gain));
            f(&format!("layers.{l}.edge_bias"), d1(&mut p.edge_bias));
        }
        f("head_w", d2(&mut self.head_w));
        f("head_b1", d1(&mut self.head_b1));
        f("head_w2", d1(&mut self.head_w2));
        f("head_b2", d1(&mut self.head_b2));
    }

    /// `(name, shape)` of every tensor, in visiting order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        self.for_each(|n, s, _| out.push((n.to_string(), s.to_vec())));
        out
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        self.for_each(|_, _, d| ok &= d.iter().all(|x| x.is_finite()));
        ok
    }

    pub fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.for_each(|_, _, d| n += d.len());
        n
    }
}

/// Learnable tensors with the hyperparameters and kind vocabulary they were
/// built for.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub hp: Hyperparams,
    pub kind_vocab: Vec<String>,
    pub tensors: Tensors,
}

/// The default kind vocabulary: every node kind the graph builder emits.
pub fn default_kind_vocab() -> Vec<String> {
    NodeKind::ALL
        .iter()
        .map(|k| k.as_str().to_string())
        .collect()
}

/// Draws embedding tables uniformly from `±EMB_BOUND` and every other weight
/// from `±1/√H` with a seeded generator. Norm scale offsets start at zero
/// (unit scale) and shifts at zero.
pub fn init_model(hp: &Hyperparams) -> Result<ModelParams> {
    hp.validate()?;
    let vocab = default_kind_vocab();
    let mut tensors = Tensors::zeros(hp, vocab.len());
    let bound = hp.init_bound();
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    tensors.for_each_mut(|name, data| {
        if name.ends_with("_gain") || name.ends_with("_bias") {
            return;
        }
        let b = if name.ends_with("_emb") {
            EMB_BOUND
        } else {
            bound
        };
        for x in data {
            *x = rng.gen_range(-b..=b);
        }
    });
    Ok(ModelParams {
        hp: hp.clone(),
        kind_vocab: vocab,
        tensors,
    })
}

/// FNV-1a hash of the name's UTF-8 bytes, reduced modulo `buckets`.
pub fn name_bucket(name: &str, buckets: usize) -> usize {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    (h % buckets as u64) as usize
}

pub fn count_bucket(n: u32) -> usize {
    (n as usize).min(COUNT_CAP)
}

/// Embedding-row indices of every node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeInputs {
    pub kind: Vec<usize>,
    pub name: Vec<usize>,
    pub par: Vec<usize>,
    pub arg: Vec<usize>,
    /// Nodes whose kind is missing from the model's vocabulary.
    pub oov_kinds: usize,
}

impl NodeInputs {
    pub fn new(features: &FeatureTable, params: &ModelParams) -> Self {
        let vocab: std::collections::HashMap<&str, usize> = params
            .kind_vocab
            .iter()
            .enumerate()
            .map(|(i, k)| (k.as_str(), i))
            .collect();
        let oov = params.kind_vocab.len();
        let buckets = params.hp.name_buckets;
        let mut inputs = NodeInputs {
            kind: Vec::with_capacity(features.len()),
            name: Vec::with_capacity(features.len()),
            par: Vec::with_capacity(features.len()),
            arg: Vec::with_capacity(features.len()),
            oov_kinds: 0,
        };
        for row in &features.rows {
            let kind = vocab
                .get(row.node_type.as_str())
                .copied()
                .unwrap_or_else(|| {
                    inputs.oov_kinds += 1;
                    oov
                });
            inputs.kind.push(kind);
            inputs.name.push(
                row.name
                    .as_deref()
                    .map_or(buckets, |n| name_bucket(n, buckets)),
            );
            inputs.par.push(count_bucket(row.number_of_parameter));
            inputs.arg.push(count_bucket(row.number_of_argument));
        }
        inputs
    }

    pub fn len(&self) -> usize {
        self.kind.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kind.is_empty()
    }
}

/// Initial node states `h⁰`, one row per feature row.
pub fn encode_nodes(features: &FeatureTable, params: &ModelParams) -> (Array2<f64>, usize) {
    let inputs = NodeInputs::new(features, params);
    (net::embed(&inputs, &params.tensors), inputs.oov_kinds)
}
