//! Forward pass, scoring head, and hand-written backward pass.

use std::collections::BTreeSet;

use ndarray::{Array1, Array2, ArrayView1, Axis};

use super::{LayerParams, ModelParams, NodeInputs, Tensors};
use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::graph::{EdgeType, NodeId, ProgramGraph};
use crate::truth::check_endpoint;

/// Gate normaliser offset.
pub const GATE_EPS: f64 = 1e-6;
/// Variance offset inside `Norm`.
pub const NORM_EPS: f64 = 1e-5;

/// Directed message edges over dense node indices, grouped by destination.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageGraph {
    pub n: usize,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub etype: Vec<usize>,
    /// Edges into node `i` are `in_ptr[i]..in_ptr[i + 1]`.
    pub in_ptr: Vec<usize>,
}

impl MessageGraph {
    /// `(src, dst, edge type row)` triples over `n` nodes.
    pub fn from_edges(n: usize, mut edges: Vec<(usize, usize, usize)>) -> Self {
        edges.sort_by_key(|&(s, d, t)| (d, s, t));
        edges.dedup();
        let mut in_ptr = vec![0; n + 1];
        for &(_, d, _) in &edges {
            in_ptr[d + 1] += 1;
        }
        for i in 0..n {
            in_ptr[i + 1] += in_ptr[i];
        }
        MessageGraph {
            n,
            src: edges.iter().map(|e| e.0).collect(),
            dst: edges.iter().map(|e| e.1).collect(),
            etype: edges.iter().map(|e| e.2).collect(),
            in_ptr,
        }
    }

    /// The graph's AST and semantic edges (both directions) plus the given
    /// call edges in both directions. Call edges stored in the graph itself
    /// are ignored; only `call_edges` carry call messages.
    pub fn new(graph: &ProgramGraph, call_edges: &[(NodeId, NodeId)]) -> Result<Self> {
        let mut edges = Vec::with_capacity(graph.edges.len() + 2 * call_edges.len());
        for e in &graph.edges {
            if e.etype == EdgeType::CallMsg {
                continue;
            }
            let s = graph.index_of(e.src).ok_or(Error::UnknownNode(e.src))?;
            let d = graph.index_of(e.dst).ok_or(Error::UnknownNode(e.dst))?;
            edges.push((s, d, e.etype.index()));
        }
        let call = EdgeType::CallMsg.index();
        for &(cs, f) in call_edges {
            check_endpoint(graph, cs, true)?;
            check_endpoint(graph, f, false)?;
            let s = graph.index_of(cs).unwrap();
            let d = graph.index_of(f).unwrap();
            edges.push((s, d, call));
            edges.push((d, s, call));
        }
        Ok(MessageGraph::from_edges(graph.nodes.len(), edges))
    }

    pub fn edge_count(&self) -> usize {
        self.src.len()
    }

    /// Call-message pairs `(src, dst)` present, as dense indices.
    pub fn call_pairs(&self) -> BTreeSet<(usize, usize)> {
        let call = EdgeType::CallMsg.index();
        (0..self.edge_count())
            .filter(|&k| self.etype[k] == call)
            .map(|k| (self.src[k], self.dst[k]))
            .collect()
    }
}

/// One optimisation batch: pairs of dense node indices with 0/1 labels.
pub struct Batch<'a> {
    pub graph: &'a MessageGraph,
    pub inputs: &'a NodeInputs,
    pub pairs: &'a [(usize, usize)],
    pub labels: &'a [f64],
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Probability emitted for a logit, kept strictly inside (0, 1).
pub fn probability(logit: f64) -> f64 {
    sigmoid(logit).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Binary cross-entropy of a logit against a 0/1 label.
pub fn bce_with_logit(logit: f64, label: f64) -> f64 {
    softplus(logit) - label * logit
}

/// Sum of the four embedding rows of every node.
pub fn embed(inputs: &NodeInputs, t: &Tensors) -> Array2<f64> {
    let h = t.kind_emb.ncols();
    let mut out = Array2::zeros((inputs.len(), h));
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        row += &t.kind_emb.row(inputs.kind[i]);
        row += &t.name_emb.row(inputs.name[i]);
        row += &t.par_emb.row(inputs.par[i]);
        row += &t.arg_emb.row(inputs.arg[i]);
    }
    out
}

fn rows(a: &Array2<f64>) -> std::slice::ChunksExact<'_, f64> {
    a.as_slice()
        .expect("standard layout")
        .chunks_exact(a.ncols())
}

fn row_mut(a: &mut Array2<f64>, i: usize) -> &mut [f64] {
    let h = a.ncols();
    &mut a.as_slice_mut().expect("standard layout")[i * h..(i + 1) * h]
}

fn row(a: &Array2<f64>, i: usize) -> &[f64] {
    let h = a.ncols();
    &a.as_slice().expect("standard layout")[i * h..(i + 1) * h]
}

struct Norm {
    xhat: Array2<f64>,
    rstd: Vec<f64>,
}

fn norm_forward(x: &Array2<f64>, gain: &Array1<f64>, bias: &Array1<f64>) -> (Array2<f64>, Norm) {
    let (r, h) = x.dim();
    let mut xhat = Array2::zeros((r, h));
    let mut y = Array2::zeros((r, h));
    let mut rstd = Vec::with_capacity(r);
    for (i, xr) in rows(x).enumerate() {
        let mean = xr.iter().sum::<f64>() / h as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h as f64;
        let rs = 1.0 / (var + NORM_EPS).sqrt();
        rstd.push(rs);
        let xh = row_mut(&mut xhat, i);
        let yr = row_mut(&mut y, i);
        for f in 0..h {
            xh[f] = (xr[f] - mean) * rs;
            yr[f] = xh[f] * (1.0 + gain[f]) + bias[f];
        }
    }
    (y, Norm { xhat, rstd })
}

fn norm_backward(
    gy: &Array2<f64>,
    cache: &Norm,
    gain: &Array1<f64>,
    g_gain: &mut Array1<f64>,
    g_bias: &mut Array1<f64>,
) -> Array2<f64> {
    let (r, h) = gy.dim();
    let mut gx = Array2::zeros((r, h));
    let mut gxh = vec![0.0; h];
    for (i, gr) in rows(gy).enumerate() {
        let xh = row(&cache.xhat, i);
        for f in 0..h {
            gxh[f] = gr[f] * (1.0 + gain[f]);
            g_gain[f] += gr[f] * xh[f];
            g_bias[f] += gr[f];
        }
        let m1 = gxh.iter().sum::<f64>() / h as f64;
        let m2 = gxh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / h as f64;
        let rs = cache.rstd[i];
        let out = row_mut(&mut gx, i);
        for f in 0..h {
            out[f] = rs * (gxh[f] - m1 - xh[f] * m2);
        }
    }
    gx
}

struct LayerCache {
    h_in: Array2<f64>,
    e_in: Array2<f64>,
    norm_e: Norm,
    ne: Array2<f64>,
    s: Array2<f64>,
    denom: Array2<f64>,
    eta: Array2<f64>,
    bh: Array2<f64>,
    norm_h: Norm,
    nh: Array2<f64>,
}

fn relu_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| v.max(0.0));
}

fn layer_forward(
    mg: &MessageGraph,
    p: &LayerParams,
    h: Array2<f64>,
    e: Array2<f64>,
    keep: bool,
) -> (Array2<f64>, Array2<f64>, Option<LayerCache>) {
    let (n, hd) = h.dim();
    let m = mg.edge_count();
    let hw4 = h.dot(&p.w4.t());
    let hw5 = h.dot(&p.w5.t());
    let mut pre_e = e.dot(&p.w3.t());
    for k in 0..m {
        let (a, c) = (row(&hw4, mg.dst[k]), row(&hw5, mg.src[k]));
        let r = row_mut(&mut pre_e, k);
        for f in 0..hd {
            r[f] += a[f] + c[f];
        }
    }
    let (ne, norm_e) = norm_forward(&pre_e, &p.edge_gain, &p.edge_bias);
    drop(pre_e);
    let mut e_out = ne.clone();
    relu_inplace(&mut e_out);
    e_out += &e;
    let s = e_out.mapv(sigmoid);
    let mut denom = Array2::from_elem((n, hd), GATE_EPS);
    for k in 0..m {
        let sk = row(&s, k);
        let d = row_mut(&mut denom, mg.dst[k]);
        for f in 0..hd {
            d[f] += sk[f];
        }
    }
    let mut eta = s.clone();
    for k in 0..m {
        let d = row(&denom, mg.dst[k]);
        let r = row_mut(&mut eta, k);
        for f in 0..hd {
            r[f] /= d[f];
        }
    }
    let bh = h.dot(&p.w2.t());
    let mut pre_h = h.dot(&p.w1.t());
    for k in 0..m {
        let (et, b) = (row(&eta, k), row(&bh, mg.src[k]));
        let r = row_mut(&mut pre_h, mg.dst[k]);
        for f in 0..hd {
            r[f] += et[f] * b[f];
        }
    }
    let (nh, norm_h) = norm_forward(&pre_h, &p.node_gain, &p.node_bias);
    drop(pre_h);
    let mut h_out = nh.clone();
    relu_inplace(&mut h_out);
    h_out += &h;
    let cache = keep.then(|| LayerCache {
        h_in: h,
        e_in: e,
        norm_e,
        ne,
        s,
        denom,
        eta,
        bh,
        norm_h,
        nh,
    });
    (h_out, e_out, cache)
}

fn initial_edges(mg: &MessageGraph, t: &Tensors) -> Array2<f64> {
    let hd = t.edge_emb.ncols();
    let mut e = Array2::zeros((mg.edge_count(), hd));
    for (k, mut r) in e.axis_iter_mut(Axis(0)).enumerate() {
        r.assign(&t.edge_emb.row(mg.etype[k]));
    }
    e
}

/// Final node states after every layer.
pub fn forward(mg: &MessageGraph, h0: &Array2<f64>, params: &ModelParams) -> Array2<f64> {
    let mut h = h0.clone();
    let mut e = initial_edges(mg, &params.tensors);
    for p in &params.tensors.layers {
        let (h2, e2, _) = layer_forward(mg, p, h, e, false);
        h = h2;
        e = e2;
    }
    h
}

/// Head pre-activations and logit for one pair.
fn head(t: &Tensors, hc: ArrayView1<f64>, hf: ArrayView1<f64>) -> (Array1<f64>, Array1<f64>, f64) {
    let hd = hc.len();
    let mut z = Array1::zeros(2 * hd);
    z.slice_mut(ndarray::s![..hd]).assign(&hc);
    z.slice_mut(ndarray::s![hd..]).assign(&hf);
    let u = t.head_w.dot(&z) + &t.head_b1;
    let logit = u
        .iter()
        .zip(t.head_w2.iter())
        .map(|(u, w)| u.max(0.0) * w)
        .sum::<f64>()
        + t.head_b2[0];
    (z, u, logit)
}

pub fn pair_logit(t: &Tensors, hc: ArrayView1<f64>, hf: ArrayView1<f64>) -> f64 {
    head(t, hc, hf).2
}

/// Mean binary cross-entropy of a batch.
pub fn loss(params: &ModelParams, batch: &Batch<'_>) -> f64 {
    let h0 = embed(batch.inputs, &params.tensors);
    let h = forward(batch.graph, &h0, params);
    let total: f64 = batch
        .pairs
        .iter()
        .zip(batch.labels)
        .map(|(&(c, f), &y)| bce_with_logit(pair_logit(&params.tensors, h.row(c), h.row(f)), y))
        .sum();
    total / batch.pairs.len().max(1) as f64
}

/// Mean binary cross-entropy of a batch and its exact gradient with respect
/// to every tensor.
pub fn loss_and_gradients(params: &ModelParams, batch: &Batch<'_>) -> (f64, Tensors) {
    let t = &params.tensors;
    let mg = batch.graph;
    let mut g = t.zeros_like();
    let h0 = embed(batch.inputs, t);
    let mut caches = Vec::with_capacity(t.layers.len());
    let mut h = h0;
    let mut e = initial_edges(mg, t);
    for p in &t.layers {
        let (h2, e2, c) = layer_forward(mg, p, h, e, true);
        caches.push(c.expect("cache requested"));
        h = h2;
        e = e2;
    }
    drop(e);

    let npairs = batch.pairs.len().max(1) as f64;
    let hd = h.ncols();
    let mut gh = Array2::zeros(h.dim());
    let mut total = 0.0;
    for (&(c, f), &y) in batch.pairs.iter().zip(batch.labels) {
        let (z, u, logit) = head(t, h.row(c), h.row(f));
        total += bce_with_logit(logit, y);
        let gl = (sigmoid(logit) - y) / npairs;
        g.head_b2[0] += gl;
        let mut gu = Array1::zeros(hd);
        for q in 0..hd {
            let a = u[q].max(0.0);
            g.head_w2[q] += gl * a;
            if u[q] > 0.0 {
                gu[q] = gl * t.head_w2[q];
            }
        }
        g.head_b1 += &gu;
        for q in 0..hd {
            if gu[q] != 0.0 {
                g.head_w.row_mut(q).scaled_add(gu[q], &z);
            }
        }
        let gz = t.head_w.t().dot(&gu);
        {
            let mut r = gh.row_mut(c);
            r += &gz.slice(ndarray::s![..hd]);
        }
        let mut r = gh.row_mut(f);
        r += &gz.slice(ndarray::s![hd..]);
    }

    let mut ge = Array2::zeros((mg.edge_count(), hd));
    for (l, c) in caches.iter().enumerate().rev() {
        let (gh2, ge2) = layer_backward(mg, &t.layers[l], c, gh, ge, &mut g.layers[l]);
        gh = gh2;
        ge = ge2;
    }
    for k in 0..mg.edge_count() {
        let mut r = g.edge_emb.row_mut(mg.etype[k]);
        r += &ge.row(k);
    }
    let inputs = batch.inputs;
    for i in 0..inputs.len() {
        let gr = gh.row(i);
        let mut r = g.kind_emb.row_mut(inputs.kind[i]);
        r += &gr;
        let mut r = g.name_emb.row_mut(inputs.name[i]);
        r += &gr;
        let mut r = g.par_emb.row_mut(inputs.par[i]);
        r += &gr;
        let mut r = g.arg_emb.row_mut(inputs.arg[i]);
        r += &gr;
    }
    (total / npairs, g)
}

fn layer_backward(
    mg: &MessageGraph,
    p: &LayerParams,
    c: &LayerCache,
    gh_out: Array2<f64>,
    ge_out: Array2<f64>,
    g: &mut LayerParams,
) -> (Array2<f64>, Array2<f64>) {
    let (n, hd) = c.h_in.dim();
    let m = mg.edge_count();

    // h_out = h + ReLU(Norm(pre_h))
    let mut g_nh = gh_out.clone();
    ndarray::Zip::from(&mut g_nh).and(&c.nh).for_each(|gv, &v| {
        if v <= 0.0 {
            *gv = 0.0;
        }
    });
    let mut gh = gh_out;
    let g_pre_h = norm_backward(
        &g_nh,
        &c.norm_h,
        &p.node_gain,
        &mut g.node_gain,
        &mut g.node_bias,
    );
    drop(g_nh);

    // pre_h = W1 h + Σ η ⊙ W2 h_src
    g.w1 += &g_pre_h.t().dot(&c.h_in);
    gh += &g_pre_h.dot(&p.w1);
    let mut g_eta = Array2::zeros((m, hd));
    let mut g_bh = Array2::zeros((n, hd));
    for k in 0..m {
        let (d, s) = (mg.dst[k], mg.src[k]);
        let gp = row(&g_pre_h, d);
        let b = row(&c.bh, s);
        let et = row(&c.eta, k);
        let ge = row_mut(&mut g_eta, k);
        for f in 0..hd {
            ge[f] = gp[f] * b[f];
        }
        let gb = row_mut(&mut g_bh, s);
        for f in 0..hd {
            gb[f] += et[f] * gp[f];
        }
    }
    g.w2 += &g_bh.t().dot(&c.h_in);
    gh += &g_bh.dot(&p.w2);
    drop(g_bh);

    // η = s / (Σ s + ε) per destination
    let mut tsum = Array2::zeros((n, hd));
    for k in 0..m {
        let (ge, et) = (row(&g_eta, k), row(&c.eta, k));
        let r = row_mut(&mut tsum, mg.dst[k]);
        for f in 0..hd {
            r[f] += ge[f] * et[f];
        }
    }
    let mut g_eout = ge_out;
    for k in 0..m {
        let d = mg.dst[k];
        let (ts, den, ge, s) = (
            row(&tsum, d),
            row(&c.denom, d),
            row(&g_eta, k),
            row(&c.s, k),
        );
        let r = row_mut(&mut g_eout, k);
        for f in 0..hd {
            r[f] += (ge[f] - ts[f]) / den[f] * s[f] * (1.0 - s[f]);
        }
    }
    drop(g_eta);
    drop(tsum);

    // ê = e + ReLU(Norm(pre_e))
    let mut ge = g_eout.clone();
    let mut g_ne = g_eout;
    ndarray::Zip::from(&mut g_ne).and(&c.ne).for_each(|gv, &v| {
        if v <= 0.0 {
            *gv = 0.0;
        }
    });
    let g_pre_e = norm_backward(
        &g_ne,
        &c.norm_e,
        &p.edge_gain,
        &mut g.edge_gain,
        &mut g.edge_bias,
    );
    drop(g_ne);

    // pre_e = W3 e + W4 h_dst + W5 h_src
    g.w3 += &g_pre_e.t().dot(&c.e_in);
    ge += &g_pre_e.dot(&p.w3);
    let mut g_a = Array2::zeros((n, hd));
    let mut g_c = Array2::zeros((n, hd));
    for k in 0..m {
        let gp = row(&g_pre_e, k);
        let r = row_mut(&mut g_a, mg.dst[k]);
        for f in 0..hd {
            r[f] += gp[f];
        }
        let r = row_mut(&mut g_c, mg.src[k]);
        for f in 0..hd {
            r[f] += gp[f];
        }
    }
    g.w4 += &g_a.t().dot(&c.h_in);
    gh += &g_a.dot(&p.w4);
    g.w5 += &g_c.t().dot(&c.h_in);
    gh += &g_c.dot(&p.w5);
    (gh, ge)
}

/// Per-node halves of the head's first affine map: `a_i = W_head[:, :H] h_i`
/// and `b_i = W_head[:, H:] h_i`, so a pair's hidden layer is
/// `ReLU(a_cs + b_fn + b1)`. Computed row by row so that scoring one pair and
/// scoring many give bit-identical results.
pub fn head_projections(t: &Tensors, h: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let hd = h.ncols();
    let wa = t.head_w.slice(ndarray::s![.., ..hd]);
    let wb = t.head_w.slice(ndarray::s![.., hd..]);
    let mut a = Array2::zeros((h.nrows(), hd));
    let mut b = Array2::zeros((h.nrows(), hd));
    for (i, hr) in h.axis_iter(Axis(0)).enumerate() {
        a.row_mut(i).assign(&wa.dot(&hr));
        b.row_mut(i).assign(&wb.dot(&hr));
    }
    (a, b)
}

/// Logit of a pair from its head projections.
pub fn projected_logit(t: &Tensors, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let mut sum = t.head_b2[0];
    for q in 0..a.len() {
        sum += t.head_w2[q] * (a[q] + b[q] + t.head_b1[q]).max(0.0);
    }
    sum
}

/// Final node states of a graph, addressable by node id, with their head
/// projections.
#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub ids: Vec<NodeId>,
    pub table: Array2<f64>,
    pub proj_cs: Array2<f64>,
    pub proj_fn: Array2<f64>,
}

impl Embeddings {
    pub fn new(ids: Vec<NodeId>, table: Array2<f64>, params: &ModelParams) -> Self {
        let (proj_cs, proj_fn) = head_projections(&params.tensors, &table);
        Embeddings {
            ids,
            table,
            proj_cs,
            proj_fn,
        }
    }

    pub fn index_of(&self, id: NodeId) -> Option<usize> {
        self.ids.binary_search(&id).ok()
    }

    /// Logit by dense indices.
    pub fn logit(&self, params: &ModelParams, cs: usize, f: usize) -> f64 {
        projected_logit(&params.tensors, self.proj_cs.row(cs), self.proj_fn.row(f))
    }
}

/// Probabilities of `(callsite, callee)` pairs. Every pair is scored with
/// the same per-pair arithmetic, so results do not depend on batching.
pub fn score_pairs(
    emb: &Embeddings,
    pairs: &[(NodeId, NodeId)],
    params: &ModelParams,
) -> Result<Vec<f64>> {
    pairs
        .iter()
        .map(|&(c, f)| {
            let ci = emb.index_of(c).ok_or(Error::UnknownNode(c))?;
            let fi = emb.index_of(f).ok_or(Error::UnknownNode(f))?;
            Ok(probability(emb.logit(params, ci, fi)))
        })
        .collect()
}

/// A trained model applied to one graph: parameters plus the node states
/// computed over that graph's message edges.
#[derive(Debug, Clone)]
pub struct Predictor {
    pub params: ModelParams,
    pub embeddings: Embeddings,
    pub oov_kinds: usize,
}

impl Predictor {
    /// `call_edges` are the known call edges passed as messages (normally
    /// the training split).
    pub fn new(
        params: ModelParams,
        graph: &ProgramGraph,
        features: &FeatureTable,
        call_edges: &[(NodeId, NodeId)],
    ) -> Result<Self> {
        let mg = MessageGraph::new(graph, call_edges)?;
        let inputs = NodeInputs::new(features, &params);
        let h0 = embed(&inputs, &params.tensors);
        let table = forward(&mg, &h0, &params);
        Ok(Predictor {
            embeddings: Embeddings::new(graph.nodes.iter().map(|n| n.id).collect(), table, &params),
            oov_kinds: inputs.oov_kinds,
            params,
        })
    }

    pub fn score_pairs(&self, pairs: &[(NodeId, NodeId)]) -> Result<Vec<f64>> {
        score_pairs(&self.embeddings, pairs, &self.params)
    }
}
