//! Training loop: seeded split, per-epoch negatives, Adam, plateau schedule.

use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{
    bce_with_logit, embed, forward, head_projections, loss_and_gradients, projected_logit, Batch,
    MessageGraph,
};
use super::{init_model, Hyperparams, ModelParams, NodeInputs, Tensors};
use crate::error::{Error, Result};
use crate::eval::{pessimistic_rank, split_edges, Splits};
use crate::features::{enumerate_endpoints, FeatureTable};
use crate::graph::{NodeId, ProgramGraph};
use crate::truth::{sample_negatives_from, CallEdgeSet};

/// Fewest labelled edges accepted by [`train`].
pub const MIN_LABELS: usize = 20;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss over the epoch's batches.
    pub loss: f64,
    /// Loss on validation positives plus the fixed validation negatives.
    pub val_loss: f64,
    pub val_hit_at_1: f64,
    pub val_hit_at_5: f64,
    pub val_mean_rank: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EpochCap,
    LrFloor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub stop_reason: StopReason,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub final_lr: f64,
    pub wall_time_secs: f64,
    /// Nodes whose kind fell outside the model vocabulary.
    pub oov_kinds: usize,
    pub message_call_edges: usize,
}

impl TrainReport {
    pub fn loss_curve(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }

    pub fn best(&self) -> Option<&EpochRecord> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub report: TrainReport,
    pub splits: Splits,
}

/// Validation score compared lexicographically: hit@5, then hit@1, then
/// lower mean rank. When the validation split is empty, lower validation
/// loss on training pairs decides instead.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ValScore(f64, f64, f64);

impl ValScore {
    fn better_than(self, other: ValScore) -> bool {
        (self.0, self.1, self.2) > (other.0, other.1, other.2)
    }
}

/// Adam moments, flattened in [`Tensors::for_each`] order.
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(t: &Tensors) -> Self {
        let n = t.parameter_count();
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut Tensors, grads: &Tensors, lr: f64) {
        self.t += 1;
        let mut flat = Vec::with_capacity(self.m.len());
        grads.for_each(|_, _, d| flat.extend_from_slice(d));
        let c1 = 1.0 - ADAM_BETA1.powi(self.t);
        let c2 = 1.0 - ADAM_BETA2.powi(self.t);
        let mut k = 0;
        let (m, v) = (&mut self.m, &mut self.v);
        params.for_each_mut(|_, data| {
            for x in data {
                let g = flat[k];
                m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * g;
                v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * g * g;
                *x -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + ADAM_EPS);
                k += 1;
            }
        });
    }
}

/// Trains from a fresh seeded initialisation.
pub fn train(
    graph: &ProgramGraph,
    features: &FeatureTable,
    positives: &CallEdgeSet,
    hp: &Hyperparams,
) -> Result<TrainOutcome> {
    train_from(init_model(hp)?, graph, features, positives)
}

/// Trains starting from `params` (whose hyperparameters drive the run).
///
/// Positives are split by a seeded shuffle; training-split edges join the
/// message graph when `train_edges_in_graph` is set. Each epoch draws fresh
/// negatives (one per training positive, never a known positive) and runs
/// Adam over shuffled balanced batches. When training edges are messages,
/// the epoch's positives are dealt into `message_folds` batches and each
/// batch's own positives are withheld from its message graph, so the model
/// cannot score an edge by seeing it; the remaining training edges still
/// carry messages, as they do at prediction time. Each epoch ends by scoring
/// the validation split by
/// ranking every function definition for each validation call site. The
/// learning rate halves after `plateau_patience` epochs without improvement;
/// training stops at `max_epochs` or once the rate drops below `lr_floor`.
/// The returned parameters are those of the best validation epoch.
pub fn train_from(
    mut params: ModelParams,
    graph: &ProgramGraph,
    features: &FeatureTable,
    positives: &CallEdgeSet,
) -> Result<TrainOutcome> {
    let started = Instant::now();
    let hp = params.hp.clone();
    hp.validate()?;
    if positives.len() < MIN_LABELS {
        return Err(Error::TooFewLabels(positives.len()));
    }
    if features.len() != graph.nodes.len() {
        return Err(Error::Invalid(format!(
            "feature table has {} rows for {} nodes",
            features.len(),
            graph.nodes.len()
        )));
    }
    positives.check_endpoints(graph)?;
    let splits = split_edges(positives, hp.split, hp.seed)?;
    let message_edges: Vec<(NodeId, NodeId)> = if hp.train_edges_in_graph {
        splits.train.pairs().collect()
    } else {
        Vec::new()
    };
    let mg = MessageGraph::new(graph, &message_edges)?;
    let dense = |(c, f): (NodeId, NodeId)| (graph.index_of(c).unwrap(), graph.index_of(f).unwrap());
    {
        let present = mg.call_pairs();
        let leaked = splits
            .val
            .pairs()
            .chain(splits.test.pairs())
            .map(dense)
            .any(|(c, f)| present.contains(&(c, f)) || present.contains(&(f, c)));
        assert!(!leaked, "a held-out edge is present in the message graph");
    }

    let inputs = NodeInputs::new(features, &params);
    let (sites, defs) = enumerate_endpoints(graph);
    let def_idx: Vec<usize> = defs.iter().map(|&d| graph.index_of(d).unwrap()).collect();
    let available = sites.len() * defs.len() - positives.len();
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed.wrapping_add(0x5eed));

    let val_pos: Vec<(usize, usize)> = splits.val.pairs().map(dense).collect();
    let val_neg: Vec<(usize, usize)> = sample_negatives_from(
        &sites,
        &defs,
        positives,
        val_pos.len().min(available),
        &mut rng,
    )?
    .into_iter()
    .map(dense)
    .collect();
    let train_pos: Vec<(usize, usize)> = splits.train.pairs().map(dense).collect();

    let mut adam = Adam::new(&params.tensors);
    let mut lr = hp.lr_init;
    let mut epochs = Vec::new();
    let mut best: Option<(ValScore, usize, Tensors)> = None;
    let mut plateau_best: Option<ValScore> = None;
    let mut bad_epochs = 0;
    let mut stop_reason = StopReason::EpochCap;

    for epoch in 0..hp.max_epochs {
        let mut order = train_pos.clone();
        order.shuffle(&mut rng);
        let negs = sample_negatives_from(
            &sites,
            &defs,
            positives,
            train_pos.len().min(available),
            &mut rng,
        )?;
        let negs: Vec<(usize, usize)> = negs.into_iter().map(dense).collect();
        let folds = if hp.train_edges_in_graph {
            hp.message_folds.clamp(1, order.len().max(1))
        } else {
            1
        };

        let mut total = 0.0;
        let mut seen = 0;
        for fold in 0..folds {
            let (lo, hi) = (fold * order.len() / folds, (fold + 1) * order.len() / folds);
            let (nlo, nhi) = (fold * negs.len() / folds, (fold + 1) * negs.len() / folds);
            let fold_graph;
            let graph_for_fold = if folds > 1 {
                let held: std::collections::HashSet<(usize, usize)> =
                    order[lo..hi].iter().copied().collect();
                let kept: Vec<(NodeId, NodeId)> = message_edges
                    .iter()
                    .copied()
                    .filter(|&p| !held.contains(&dense(p)))
                    .collect();
                fold_graph = MessageGraph::new(graph, &kept)?;
                &fold_graph
            } else {
                &mg
            };
            let mut pairs: Vec<((usize, usize), f64)> = order[lo..hi]
                .iter()
                .map(|&p| (p, 1.0))
                .chain(negs[nlo..nhi].iter().map(|&p| (p, 0.0)))
                .collect();
            pairs.shuffle(&mut rng);
            for chunk in pairs.chunks(hp.batch_size) {
                let (bp, bl): (Vec<_>, Vec<_>) = chunk.iter().copied().unzip();
                let batch = Batch {
                    graph: graph_for_fold,
                    inputs: &inputs,
                    pairs: &bp,
                    labels: &bl,
                };
                let (loss, grads) = loss_and_gradients(&params, &batch);
                if !loss.is_finite() || !grads.all_finite() {
                    return Err(Error::NonFiniteLoss { epoch });
                }
                adam.step(&mut params.tensors, &grads, lr);
                total += loss * chunk.len() as f64;
                seen += chunk.len();
            }
        }
        let loss = total / seen.max(1) as f64;

        let h = forward(&mg, &embed(&inputs, &params.tensors), &params);
        let record = validate(&params, &h, &val_pos, &val_neg, &def_idx, epoch, loss, lr);
        if !record.val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        let score = if val_pos.is_empty() {
            ValScore(-loss, 0.0, 0.0)
        } else {
            ValScore(
                record.val_hit_at_5,
                record.val_hit_at_1,
                -record.val_mean_rank,
            )
        };
        epochs.push(record);
        if best.as_ref().is_none_or(|(b, _, _)| score.better_than(*b)) {
            best = Some((score, epoch, params.tensors.clone()));
        }
        if plateau_best.is_none_or(|b| score.better_than(b)) {
            plateau_best = Some(score);
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs > hp.plateau_patience {
                lr *= hp.plateau_factor;
                bad_epochs = 0;
            }
        }
        if lr < hp.lr_floor {
            stop_reason = StopReason::LrFloor;
            break;
        }
    }

    let best_epoch = match best {
        Some((_, epoch, tensors)) => {
            params.tensors = tensors;
            epoch
        }
        None => 0,
    };
    Ok(TrainOutcome {
        params,
        report: TrainReport {
            epochs,
            stop_reason,
            best_epoch,
            final_lr: lr,
            wall_time_secs: started.elapsed().as_secs_f64(),
            oov_kinds: inputs.oov_kinds,
            message_call_edges: message_edges.len(),
        },
        splits,
    })
}

#[allow(clippy::too_many_arguments)]
fn validate(
    params: &ModelParams,
    h: &Array2<f64>,
    val_pos: &[(usize, usize)],
    val_neg: &[(usize, usize)],
    def_idx: &[usize],
    epoch: usize,
    loss: f64,
    lr: f64,
) -> EpochRecord {
    let t = &params.tensors;
    let (a, b) = head_projections(t, h);
    let logit = |c: usize, f: usize| projected_logit(t, a.row(c), b.row(f));
    let labelled = val_pos.len() + val_neg.len();
    let val_loss = val_pos
        .iter()
        .map(|&(c, f)| bce_with_logit(logit(c, f), 1.0))
        .sum::<f64>()
        + val_neg
            .iter()
            .map(|&(c, f)| bce_with_logit(logit(c, f), 0.0))
            .sum::<f64>();
    let mut cache: Option<(usize, Vec<f64>)> = None;
    let mut ranks = Vec::with_capacity(val_pos.len());
    for &(c, f) in val_pos {
        if cache.as_ref().is_none_or(|(cs, _)| *cs != c) {
            cache = Some((c, def_idx.iter().map(|&d| logit(c, d)).collect()));
        }
        let scores = &cache.as_ref().unwrap().1;
        let target = def_idx
            .iter()
            .position(|&d| d == f)
            .expect("validation callee is a definition");
        ranks.push(pessimistic_rank(scores, target));
    }
    let n = ranks.len().max(1) as f64;
    EpochRecord {
        epoch,
        loss,
        val_loss: val_loss / labelled.max(1) as f64,
        val_hit_at_1: ranks.iter().filter(|&&r| r < 1).count() as f64 / n,
        val_hit_at_5: ranks.iter().filter(|&&r| r < 5).count() as f64 / n,
        val_mean_rank: ranks.iter().sum::<usize>() as f64 / n,
        lr,
    }
}
