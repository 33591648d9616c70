//! Attention layers on primal and dual neighborhoods.
//!
//! The building blocks are:
//!
//! * [`gat_forward`]: classic graph attention, scores from the
//!   concatenated transformed endpoint features.
//! * [`dual_conv_forward`]: graph attention over the dual graph; each
//!   dual vertex (primal arc) aggregates its dual neighbors under a
//!   single softmax spanning the whole joint neighborhood.
//! * [`primal_conv_forward`]: vertex aggregation whose attention
//!   logits come from the per-arc dual features.
//! * [`poly_conv_forward`]: p-step attention diffusion with an
//!   independent scorer per order and per-order mixing weights.
//!
//! All attention aggregates run over arcs (j, i): destination i
//! attends over its in-neighborhood. Per-arc logits are computed by
//! splitting the attention vector over the two concatenated halves,
//! which is exact and avoids materializing pairwise concatenations.

use alloc::fmt;
use alloc::rc::Rc;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::dual::DualGraph;
use crate::graph::DirectedGraph;
use crate::rng::Rng;
use crate::tape::{NodeId, Tape, TapeError};
use crate::tensor::Tensor;

pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    None,
    Relu,
    Elu,
    Softmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Merge {
    Concat,
    Average,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LayerError {
    Tape(TapeError),
    /// A vertex has no in-arcs and self-loops are disabled, so its
    /// attention softmax would be empty.
    EmptyNeighborhood { vertex: usize },
    /// Softmax dual attention was requested without a dual graph.
    MissingDual,
}

impl fmt::Display for LayerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerError::Tape(e) => write!(f, "{e}"),
            LayerError::EmptyNeighborhood { vertex } => {
                write!(f, "vertex {vertex} has an empty in-neighborhood")
            }
            LayerError::MissingDual => write!(f, "dual attention requires a dual graph"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for LayerError {}

impl From<TapeError> for LayerError {
    fn from(e: TapeError) -> Self {
        LayerError::Tape(e)
    }
}

/// Per-arc indexing of a directed graph: arc k runs srcs[k] -> dsts[k].
#[derive(Clone, Debug)]
pub struct GraphCtx {
    pub n: usize,
    pub m: usize,
    pub srcs: Rc<[usize]>,
    pub dsts: Rc<[usize]>,
    zero_in_degree: Option<usize>,
}

impl GraphCtx {
    pub fn new(g: &DirectedGraph) -> Self {
        let srcs: Vec<usize> = g.arcs().iter().map(|&(s, _)| s).collect();
        let dsts: Vec<usize> = g.arcs().iter().map(|&(_, d)| d).collect();
        let zero_in_degree = (0..g.n()).find(|&v| g.in_degree(v) == 0);
        GraphCtx {
            n: g.n(),
            m: g.arc_count(),
            srcs: Rc::from(srcs),
            dsts: Rc::from(dsts),
            zero_in_degree,
        }
    }
}

/// Directed expansion of the symmetric dual adjacency: one (center,
/// neighbor) pair per adjacency slot, center aggregating.
#[derive(Clone, Debug)]
pub struct DualCtx {
    pub dual_n: usize,
    pub centers: Rc<[usize]>,
    pub neighbors: Rc<[usize]>,
    /// Dual vertices with no neighbors; their aggregation output is
    /// the activation of zero. Callers log this once at setup.
    pub isolated: usize,
}

impl DualCtx {
    pub fn new(d: &DualGraph) -> Self {
        let mut centers = Vec::new();
        let mut neighbors = Vec::new();
        for u in 0..d.dual_n() {
            for &v in d.neighbors(u) {
                centers.push(u);
                neighbors.push(v);
            }
        }
        DualCtx {
            dual_n: d.dual_n(),
            centers: Rc::from(centers),
            neighbors: Rc::from(neighbors),
            isolated: d.isolated_count(),
        }
    }
}

/// Attention-coefficient dropout, applied after each softmax while
/// training.
pub struct AttnDropout<'a> {
    pub keep: f64,
    pub rng: &'a mut Rng,
}

pub fn apply_activation(tape: &mut Tape, x: NodeId, act: Activation) -> NodeId {
    match act {
        Activation::None => x,
        Activation::Relu => tape.relu(x),
        Activation::Elu => tape.elu(x),
        Activation::Softmax => tape.row_softmax(x),
    }
}

fn merge_heads(tape: &mut Tape, heads: Vec<NodeId>, merge: Merge) -> Result<NodeId, LayerError> {
    debug_assert!(!heads.is_empty());
    let mut iter = heads.into_iter();
    let first = iter.next().unwrap();
    let mut acc = first;
    let mut count = 1usize;
    for h in iter {
        acc = match merge {
            Merge::Concat => tape.concat_cols(acc, h)?,
            Merge::Average => tape.add(acc, h)?,
        };
        count += 1;
    }
    if merge == Merge::Average && count > 1 {
        acc = tape.scale(acc, 1.0 / count as f64);
    }
    Ok(acc)
}

/// One attention head of a GAT layer: w is q x q', a is 2q' x 1 with
/// the center (destination) half first.
#[derive(Clone, Copy, Debug)]
pub struct GatHeadNodes {
    pub w: NodeId,
    pub a: NodeId,
}

/// Classic GAT layer: per arc (j, i) the logit is
/// leaky(a . [h_i, h_j]), softmax over each destination's
/// in-neighborhood, then the attention-weighted sum of transformed
/// neighbor features.
pub fn gat_forward(
    tape: &mut Tape,
    f: NodeId,
    ctx: &GraphCtx,
    heads: &[GatHeadNodes],
    merge: Merge,
    activation: Activation,
    mut dropout: Option<&mut AttnDropout<'_>>,
) -> Result<NodeId, LayerError> {
    if let Some(v) = ctx.zero_in_degree {
        return Err(LayerError::EmptyNeighborhood { vertex: v });
    }
    let mut outs = Vec::with_capacity(heads.len());
    for head in heads {
        let (_, qp) = tape.shape(head.w);
        let h = tape.matmul(f, head.w)?;
        let a_center = tape.slice_rows(head.a, 0, qp)?;
        let a_neigh = tape.slice_rows(head.a, qp, qp)?;
        let sc = tape.matmul(h, a_center)?;
        let sn = tape.matmul(h, a_neigh)?;
        let sc_arc = tape.gather_rows(sc, ctx.dsts.clone())?;
        let sn_arc = tape.gather_rows(sn, ctx.srcs.clone())?;
        let pre = tape.add(sc_arc, sn_arc)?;
        let logits = tape.leaky_relu(pre, LEAKY_SLOPE);
        let mut alpha = tape.segment_softmax(logits, ctx.dsts.clone(), ctx.n)?;
        if let Some(d) = dropout.as_deref_mut() {
            alpha = tape.dropout(alpha, d.keep, d.rng, true);
        }
        let h_src = tape.gather_rows(h, ctx.srcs.clone())?;
        let msg = tape.mul_rows(h_src, alpha)?;
        outs.push(tape.segment_sum(msg, ctx.dsts.clone(), ctx.n)?);
    }
    let merged = merge_heads(tape, outs, merge)?;
    Ok(apply_activation(tape, merged, activation))
}

/// Per-arc feature rows [f_src, f_dst]: the dual vertex features built
/// by concatenating the endpoint features of each arc.
pub fn dual_features_init(
    tape: &mut Tape,
    f: NodeId,
    ctx: &GraphCtx,
) -> Result<NodeId, LayerError> {
    let fs = tape.gather_rows(f, ctx.srcs.clone())?;
    let fd = tape.gather_rows(f, ctx.dsts.clone())?;
    Ok(tape.concat_cols(fs, fd)?)
}

/// A block of per-arc input features. `FromSrc`/`FromDst` stand for a
/// gather of vertex features by arc endpoint; the weight matrix rows
/// for the block multiply the block's columns, so a list of blocks is
/// exactly the concatenated feature matrix without materializing it.
#[derive(Clone, Copy, Debug)]
pub enum ArcFeatureBlock {
    PerArc(NodeId),
    FromSrc(NodeId),
    FromDst(NodeId),
}

impl ArcFeatureBlock {
    fn width(&self, tape: &Tape) -> usize {
        let id = match self {
            ArcFeatureBlock::PerArc(x) | ArcFeatureBlock::FromSrc(x) | ArcFeatureBlock::FromDst(x) => *x,
        };
        tape.shape(id).1
    }
}

/// Transformed per-arc features: (concat of blocks) * w, computed
/// block-row-wise. `w` has one row per concatenated input column.
pub fn arc_transform(
    tape: &mut Tape,
    blocks: &[ArcFeatureBlock],
    w: NodeId,
    ctx: &GraphCtx,
) -> Result<NodeId, LayerError> {
    let mut offset = 0usize;
    let mut acc: Option<NodeId> = None;
    for block in blocks {
        let width = block.width(tape);
        let wslice = tape.slice_rows(w, offset, width)?;
        offset += width;
        let part = match block {
            ArcFeatureBlock::PerArc(x) => tape.matmul(*x, wslice)?,
            ArcFeatureBlock::FromSrc(x) => {
                let t = tape.matmul(*x, wslice)?;
                tape.gather_rows(t, ctx.srcs.clone())?
            }
            ArcFeatureBlock::FromDst(x) => {
                let t = tape.matmul(*x, wslice)?;
                tape.gather_rows(t, ctx.dsts.clone())?
            }
        };
        acc = Some(match acc {
            None => part,
            Some(prev) => tape.add(prev, part)?,
        });
    }
    let out = acc.expect("at least one input block");
    debug_assert_eq!(tape.shape(w).0, offset, "weight rows must cover all blocks");
    Ok(out)
}

/// One dual-convolution head: w maps the concatenated arc inputs to
/// q~, a is 2q~ x 1 (center half first).
#[derive(Clone, Copy, Debug)]
pub struct DualConvHeadNodes {
    pub w: NodeId,
    pub a: NodeId,
}

/// Dual attention mode: learned softmax scores, or the fixed identity
/// assignment (keep only the self term) under which the dual-primal
/// pipeline collapses to plain GAT.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualAttention {
    Softmax,
    Identity,
}

/// GAT over the dual graph. Every dual vertex scores all of its dual
/// neighbors with one softmax spanning the joint neighborhood, then
/// aggregates their transformed features. Isolated dual vertices
/// produce the activation of zero.
pub fn dual_conv_forward(
    tape: &mut Tape,
    blocks: &[ArcFeatureBlock],
    gctx: &GraphCtx,
    dctx: Option<&DualCtx>,
    heads: &[DualConvHeadNodes],
    attention: DualAttention,
    activation: Activation,
    mut dropout: Option<&mut AttnDropout<'_>>,
) -> Result<NodeId, LayerError> {
    let mut outs = Vec::with_capacity(heads.len());
    for head in heads {
        let z = arc_transform(tape, blocks, head.w, gctx)?;
        let aggregated = match attention {
            DualAttention::Identity => z,
            DualAttention::Softmax => {
                let d = dctx.ok_or(LayerError::MissingDual)?;
                let (_, qt) = tape.shape(z);
                let a_center = tape.slice_rows(head.a, 0, qt)?;
                let a_neigh = tape.slice_rows(head.a, qt, qt)?;
                let sc = tape.matmul(z, a_center)?;
                let sn = tape.matmul(z, a_neigh)?;
                let sc_pair = tape.gather_rows(sc, d.centers.clone())?;
                let sn_pair = tape.gather_rows(sn, d.neighbors.clone())?;
                let pre = tape.add(sc_pair, sn_pair)?;
                let logits = tape.leaky_relu(pre, LEAKY_SLOPE);
                let mut alpha = tape.segment_softmax(logits, d.centers.clone(), d.dual_n)?;
                if let Some(dr) = dropout.as_deref_mut() {
                    alpha = tape.dropout(alpha, dr.keep, dr.rng, true);
                }
                let z_neigh = tape.gather_rows(z, d.neighbors.clone())?;
                let msg = tape.mul_rows(z_neigh, alpha)?;
                tape.segment_sum(msg, d.centers.clone(), d.dual_n)?
            }
        };
        outs.push(aggregated);
    }
    let merged = merge_heads(tape, outs, Merge::Concat)?;
    Ok(apply_activation(tape, merged, activation))
}

/// One primal-convolution head: w is q x q', a is q~ x 1 and consumes
/// a single per-arc dual feature row.
#[derive(Clone, Copy, Debug)]
pub struct PrimalConvHeadNodes {
    pub w: NodeId,
    pub a: NodeId,
}

/// Vertex aggregation with attention logits from dual features: for
/// each in-arc (j, i) the logit is leaky(a . ef'_(j,i)); vertex i
/// softmaxes over its in-arcs and sums the transformed neighbor
/// features. `literal_self_summand` switches the summand to the
/// vertex's own features, the literal reading of the source equation,
/// for auditing only.
#[allow(clippy::too_many_arguments)]
pub fn primal_conv_forward(
    tape: &mut Tape,
    f: NodeId,
    dual_feats: NodeId,
    ctx: &GraphCtx,
    heads: &[PrimalConvHeadNodes],
    merge: Merge,
    activation: Activation,
    literal_self_summand: bool,
    mut dropout: Option<&mut AttnDropout<'_>>,
) -> Result<NodeId, LayerError> {
    if let Some(v) = ctx.zero_in_degree {
        return Err(LayerError::EmptyNeighborhood { vertex: v });
    }
    let (rows, _) = tape.shape(dual_feats);
    if rows != ctx.m {
        return Err(LayerError::Tape(TapeError::ShapeMismatch {
            op: "primal_conv",
            left: (rows, tape.shape(dual_feats).1),
            right: (ctx.m, 0),
        }));
    }
    let mut outs = Vec::with_capacity(heads.len());
    for head in heads {
        let pre = tape.matmul(dual_feats, head.a)?;
        let logits = tape.leaky_relu(pre, LEAKY_SLOPE);
        let mut alpha = tape.segment_softmax(logits, ctx.dsts.clone(), ctx.n)?;
        if let Some(d) = dropout.as_deref_mut() {
            alpha = tape.dropout(alpha, d.keep, d.rng, true);
        }
        let h = tape.matmul(f, head.w)?;
        let picked = if literal_self_summand {
            tape.gather_rows(h, ctx.dsts.clone())?
        } else {
            tape.gather_rows(h, ctx.srcs.clone())?
        };
        let msg = tape.mul_rows(picked, alpha)?;
        outs.push(tape.segment_sum(msg, ctx.dsts.clone(), ctx.n)?);
    }
    let merged = merge_heads(tape, outs, merge)?;
    Ok(apply_activation(tape, merged, activation))
}

/// Scorer for one diffusion order of a polynomial layer.
#[derive(Clone, Copy, Debug)]
pub enum PolyScorerNodes {
    /// GAT-style scoring of the order's transformed diffused features:
    /// a is 2q' x 1, applied to [theta_k f_i, theta_k f_j].
    VertexPair { a: NodeId },
    /// Scores from per-arc dual features: a is q~ x 1.
    DualFeatures { a: NodeId, feats: NodeId },
}

#[derive(Clone, Debug)]
pub struct PolyConvNodes {
    /// Mixing weights theta_0 .. theta_p, each q x q'.
    pub thetas: Vec<NodeId>,
    /// One scorer per order k >= 1.
    pub scorers: Vec<PolyScorerNodes>,
}

/// Polynomial attention filter: f^(0) = f, f^(k) = attention-weighted
/// neighbor sum of f^(k-1) under the order-k scorer, output is the
/// activation of sum_l f^(l) theta_l.
pub fn poly_conv_forward(
    tape: &mut Tape,
    f: NodeId,
    ctx: &GraphCtx,
    nodes: &PolyConvNodes,
    activation: Activation,
    mut dropout: Option<&mut AttnDropout<'_>>,
) -> Result<NodeId, LayerError> {
    assert_eq!(nodes.thetas.len(), nodes.scorers.len() + 1);
    if !nodes.scorers.is_empty() {
        if let Some(v) = ctx.zero_in_degree {
            return Err(LayerError::EmptyNeighborhood { vertex: v });
        }
    }
    let mut acc = tape.matmul(f, nodes.thetas[0])?;
    let mut cur = f;
    for (k, scorer) in nodes.scorers.iter().enumerate() {
        let theta = nodes.thetas[k + 1];
        let logits = match scorer {
            PolyScorerNodes::VertexPair { a } => {
                let t = tape.matmul(cur, theta)?;
                let (_, qp) = tape.shape(t);
                let a_center = tape.slice_rows(*a, 0, qp)?;
                let a_neigh = tape.slice_rows(*a, qp, qp)?;
                let sc = tape.matmul(t, a_center)?;
                let sn = tape.matmul(t, a_neigh)?;
                let sc_arc = tape.gather_rows(sc, ctx.dsts.clone())?;
                let sn_arc = tape.gather_rows(sn, ctx.srcs.clone())?;
                tape.add(sc_arc, sn_arc)?
            }
            PolyScorerNodes::DualFeatures { a, feats } => tape.matmul(*feats, *a)?,
        };
        let logits = tape.leaky_relu(logits, LEAKY_SLOPE);
        let mut alpha = tape.segment_softmax(logits, ctx.dsts.clone(), ctx.n)?;
        if let Some(d) = dropout.as_deref_mut() {
            alpha = tape.dropout(alpha, d.keep, d.rng, true);
        }
        let cur_src = tape.gather_rows(cur, ctx.srcs.clone())?;
        let msg = tape.mul_rows(cur_src, alpha)?;
        cur = tape.segment_sum(msg, ctx.dsts.clone(), ctx.n)?;
        let term = tape.matmul(cur, theta)?;
        acc = tape.add(acc, term)?;
    }
    Ok(apply_activation(tape, acc, activation))
}

/// Runs the dual-primal pipeline with dual attention fixed to the
/// identity assignment. With the induced parameters (block-diagonal
/// dual weights, swapped attention halves) the output equals plain GAT
/// with heads (w, a).
pub fn gat_as_dual_primal(
    tape: &mut Tape,
    f: NodeId,
    ctx: &GraphCtx,
    heads: &[(Tensor, Tensor)],
    merge: Merge,
    activation: Activation,
) -> Result<NodeId, LayerError> {
    let mut outs = Vec::with_capacity(heads.len());
    for (w, a) in heads {
        let (q, qp) = w.shape();
        debug_assert_eq!(a.shape(), (2 * qp, 1));
        // Block-diagonal dual weights: [f_i, f_j] W~ = [f_i W, f_j W].
        let mut wt = Tensor::zeros(2 * q, 2 * qp);
        for r in 0..q {
            for c in 0..qp {
                wt.set(r, c, w.get(r, c));
                wt.set(q + r, qp + c, w.get(r, c));
            }
        }
        let wt_id = tape.constant(&wt);
        let head = DualConvHeadNodes { w: wt_id, a: wt_id };
        let blocks = [ArcFeatureBlock::FromSrc(f), ArcFeatureBlock::FromDst(f)];
        let ef = dual_conv_forward(
            tape,
            &blocks,
            ctx,
            None,
            &[head],
            DualAttention::Identity,
            Activation::None,
            None,
        )?;
        // ef rows are [h_src, h_dst]; the GAT attention vector keeps
        // the center (destination) half first, so swap the halves.
        let mut a_swapped = Tensor::zeros(2 * qp, 1);
        for k in 0..qp {
            a_swapped.set(k, 0, a.get(qp + k, 0));
            a_swapped.set(qp + k, 0, a.get(k, 0));
        }
        let a_id = tape.constant(&a_swapped);
        let w_id = tape.constant(w);
        let h = primal_conv_forward(
            tape,
            f,
            ef,
            ctx,
            &[PrimalConvHeadNodes { w: w_id, a: a_id }],
            Merge::Concat,
            Activation::None,
            false,
            None,
        )?;
        outs.push(h);
    }
    let merged = merge_heads(tape, outs, merge)?;
    Ok(apply_activation(tape, merged, activation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::DualMode;
    use crate::optim::glorot_uniform;
    use alloc::sync::Arc;
    use alloc::vec;

    fn graph(pairs: &[(usize, usize)], n: usize) -> DirectedGraph {
        DirectedGraph::from_edge_list(pairs, n, true).unwrap()
    }

    fn rand_tensor(r: usize, c: usize, rng: &mut Rng) -> Tensor {
        Tensor::from_vec(r, c, (0..r * c).map(|_| rng.symmetric(1.0)).collect())
    }

    /// Dense per-vertex GAT oracle: literal translation of the
    /// attention equation with plain loops.
    fn dense_gat_oracle(
        f: &Tensor,
        g: &DirectedGraph,
        w: &Tensor,
        a: &Tensor,
        activation: Activation,
    ) -> Tensor {
        let n = g.n();
        let qp = w.cols();
        let mut h = Tensor::zeros(n, qp);
        for i in 0..n {
            for c in 0..qp {
                let mut acc = 0.0;
                for k in 0..f.cols() {
                    acc += f.get(i, k) * w.get(k, c);
                }
                h.set(i, c, acc);
            }
        }
        let leaky = |x: f64| if x >= 0.0 { x } else { LEAKY_SLOPE * x };
        let mut out = Tensor::zeros(n, qp);
        for i in 0..n {
            let neighbors: Vec<usize> = g.in_sources(i).to_vec();
            assert!(!neighbors.is_empty());
            let logits: Vec<f64> = neighbors
                .iter()
                .map(|&j| {
                    let mut s = 0.0;
                    for k in 0..qp {
                        s += a.get(k, 0) * h.get(i, k);
                        s += a.get(qp + k, 0) * h.get(j, k);
                    }
                    leaky(s)
                })
                .collect();
            let m = logits.iter().fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
            let exps: Vec<f64> = logits.iter().map(|&l| crate::math::exp(l - m)).collect();
            let denom: f64 = exps.iter().sum();
            for (idx, &j) in neighbors.iter().enumerate() {
                let alpha = exps[idx] / denom;
                for k in 0..qp {
                    out.set(i, k, out.get(i, k) + alpha * h.get(j, k));
                }
            }
        }
        for v in out.values_mut() {
            *v = match activation {
                Activation::None => *v,
                Activation::Relu => v.max(0.0),
                Activation::Elu => {
                    if *v >= 0.0 {
                        *v
                    } else {
                        crate::math::exp(*v) - 1.0
                    }
                }
                Activation::Softmax => unreachable!(),
            };
        }
        out
    }

    #[test]
    fn gat_isolated_vertex_with_self_loop() {
        // Vertex 1 only has its self-loop: output = elu(f_1 W).
        let g = graph(&[(0, 1)], 2).add_self_loops();
        let ctx = GraphCtx::new(&g);
        let mut rng = Rng::from_seed(1);
        let f = rand_tensor(2, 3, &mut rng);
        let w = rand_tensor(3, 2, &mut rng);
        let a = rand_tensor(4, 1, &mut rng);
        let mut tape = Tape::new();
        let fid = tape.constant(&f);
        let wid = tape.param(&w);
        let aid = tape.param(&a);
        let out = gat_forward(
            &mut tape,
            fid,
            &ctx,
            &[GatHeadNodes { w: wid, a: aid }],
            Merge::Concat,
            Activation::Elu,
            None,
        )
        .unwrap();
        // Vertex 0 aggregates only itself.
        let mut expect0 = [0.0; 2];
        for c in 0..2 {
            for k in 0..3 {
                expect0[c] += f.get(0, k) * w.get(k, c);
            }
            expect0[c] = if expect0[c] >= 0.0 {
                expect0[c]
            } else {
                crate::math::exp(expect0[c]) - 1.0
            };
        }
        for c in 0..2 {
            assert!((tape.values(out)[c] - expect0[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn gat_uniform_attention_for_identical_features() {
        // All vertices share one feature vector: every softmax is
        // uniform, so the output equals the transformed feature.
        let g = graph(&[(0, 1), (1, 2), (2, 0)], 3).to_bidirected().add_self_loops();
        let ctx = GraphCtx::new(&g);
        let mut rng = Rng::from_seed(2);
        let row: Vec<f64> = (0..3).map(|_| rng.symmetric(1.0)).collect();
        let mut fv = Vec::new();
        for _ in 0..3 {
            fv.extend_from_slice(&row);
        }
        let f = Tensor::from_vec(3, 3, fv);
        let w = rand_tensor(3, 2, &mut rng);
        let a = rand_tensor(4, 1, &mut rng);
        let mut tape = Tape::new();
        let fid = tape.constant(&f);
        let wid = tape.param(&w);
        let aid = tape.param(&a);
        let out = gat_forward(
            &mut tape,
            fid,
            &ctx,
            &[GatHeadNodes { w: wid, a: aid }],
            Merge::Concat,
            Activation::None,
            None,
        )
        .unwrap();
        let mut hw = [0.0; 2];
        for c in 0..2 {
            for k in 0..3 {
                hw[c] += row[k] * w.get(k, c);
            }
        }
        for i in 0..3 {
            for c in 0..2 {
                assert!((tape.values(out)[i * 2 + c] - hw[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gat_matches_dense_oracle() {
        let mut rng = Rng::from_seed(3);
        for _ in 0..5 {
            let n = 6;
            let mut pairs = Vec::new();
            for _ in 0..12 {
                pairs.push((rng.below(n), rng.below(n)));
            }
            let g = graph(&pairs, n).to_bidirected().add_self_loops();
            let ctx = GraphCtx::new(&g);
            let f = rand_tensor(n, 4, &mut rng);
            let w = rand_tensor(4, 3, &mut rng);
            let a = rand_tensor(6, 1, &mut rng);
            let mut tape = Tape::new();
            let fid = tape.constant(&f);
            let wid = tape.param(&w);
            let aid = tape.param(&a);
            let out = gat_forward(
                &mut tape,
                fid,
                &ctx,
                &[GatHeadNodes { w: wid, a: aid }],
                Merge::Concat,
                Activation::Elu,
                None,
            )
            .unwrap();
            let oracle = dense_gat_oracle(&f, &g, &w, &a, Activation::Elu);
            assert!(tape.to_tensor(out).max_abs_diff(&oracle) < 1e-12);
        }
    }

    #[test]
    fn gat_errors_on_empty_neighborhood() {
        let g = graph(&[(0, 1)], 3);
        let ctx = GraphCtx::new(&g);
        let mut rng = Rng::from_seed(4);
        let f = rand_tensor(3, 2, &mut rng);
        let w = rand_tensor(2, 2, &mut rng);
        let a = rand_tensor(4, 1, &mut rng);
        let mut tape = Tape::new();
        let fid = tape.constant(&f);
        let wid = tape.param(&w);
        let aid = tape.param(&a);
        let err = gat_forward(
            &mut tape,
            fid,
            &ctx,
            &[GatHeadNodes { w: wid, a: aid }],
            Merge::Concat,
            Activation::None,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, LayerError::EmptyNeighborhood { .. }));
    }

    #[test]
    fn dual_features_init_rows() {
        let g = graph(&[(0, 1), (1, 0), (2, 2)], 3);
        let ctx = GraphCtx::new(&g);
        let f = Tensor::from_vec(3, 1, vec![1.0, 2.0, 7.0]);
        let mut tape = Tape::new();
        let fid = tape.constant(&f);
        let ef = dual_features_init(&mut tape, fid, &ctx).unwrap();
        // Arcs sorted: (0,1), (1,0), (2,2).
        assert_eq!(tape.values(ef), &[1.0, 2.0, 2.0, 1.0, 7.0, 7.0]);
    }

    #[test]
    fn dual_conv_single_neighbor_copies_transformed_feature() {
        // Path 0 -> 1 -> 2: chain dual of the two arcs is a single
        // edge, so each dual vertex attends only to the other.
        let g = graph(&[(0, 1), (1, 2)], 3);
        let dual = DualGraph::build(Arc::new(g.clone()), DualMode::Chain).unwrap();
        let gctx = GraphCtx::new(&g);
        let dctx = DualCtx::new(&dual);
        let mut rng = Rng::from_seed(5);
        let f = rand_tensor(3, 2, &mut rng);
        let w = rand_tensor(4, 3, &mut rng);
        let a = rand_tensor(6, 1, &mut rng);
        let mut tape = Tape::new();
        let fid = tape.constant(&f);
        let wid = tape.param(&w);
        let aid = tape.param(&a);
        let blocks = [ArcFeatureBlock::FromSrc(fid), ArcFeatureBlock::FromDst(fid)];
        let out = dual_conv_forward(
            &mut tape,
            &blocks,
            &gctx,
            Some(&dctx),
            &[DualConvHeadNodes { w: wid, a: aid }],
            DualAttention::Softmax,
            Activation::Relu,
            None,
        )
        .unwrap();
        // z rows: transformed [f_src, f_dst] per arc.
        let z = |arc: usize| -> Vec<f64> {
            let (s, d) = g.arc(arc);
            (0..3)
                .map(|c| {
                    let mut acc = 0.0;
                    for k in 0..2 {
                        acc += f.get(s, k) * w.get(k, c);
                        acc += f.get(d, k) * w.get(2 + k, c);
                    }
                    acc
                })
                .collect()
        };
        let z0 = z(0);
        let z1 = z(1);
        // Dual vertex 0 aggregates only dual vertex 1 and vice versa.
        for c in 0..3 {
            assert!((tape.values(out)[c] - z1[c].max(0.0)).abs() < 1e-12);
            assert!((tape.values(out)[3 + c] - z0[c].max(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn dual_conv_uniform_attention_when_features_identical() {
        // Identical dual features everywhere: alpha = 1/deg, so each
        // output row is the shared transformed feature.
        let g = graph(&[(0, 1), (1, 2), (2, 0)], 3);
        let dual = DualGraph::build(Arc::new(g.clone()), DualMode::Chain).unwrap();
        let gctx = GraphCtx::new(&g);
        let dctx = DualCtx::new(&dual);
        let mut rng = Rng::from_seed(6);
        let row: Vec<f64> = (0..2).map(|_| rng.symmetric(1.0)).collect();
        let f = Tensor::from_vec(3, 2, [row.clone(), row.clone(), row.clone()].concat());
        let w = rand_tensor(4, 2, &mut rng);
        let a = rand_tensor(4, 1, &mut rng);
        let mut tape = Tape::new();
        let fid = tape.constant(&f);
        let wid = tape.param(&w);
        let aid = tape.param(&a);
        let blocks = [ArcFeatureBlock::FromSrc(fid), ArcFeatureBlock::FromDst(fid)];
        let out = dual_conv_forward(
            &mut tape,
            &blocks,
            &gctx,
            Some(&dctx),
            &[DualConvHeadNodes { w: wid, a: aid }],
            DualAttention::Softmax,
            Activation::None,
            None,
        )
        .unwrap();
        let mut zrow = [0.0; 2];
        for c in 0..2 {
            for k in 0..2 {
                zrow[c] += row[k] * w.get(k, c) + row[k] * w.get(2 + k, c);
            }
        }
        for arc in 0..3 {
            for c in 0..2 {
                assert!((tape.values(out)[arc * 2 + c] - zrow[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn figure_two_discrimination() {
        // Vertices 2 and 3 share features but edge (1,2) has the extra
        // dual neighbor (2,4): GAT attention at vertex 1 cannot
        // separate them, the dual outputs can.
        let g = graph(&[(1, 2), (1, 3), (2, 4)], 5).to_bidirected();
        let gctx = GraphCtx::new(&g);
        let dual = DualGraph::build(Arc::new(g.clone()), DualMode::Chain).unwrap();
        let dctx = DualCtx::new(&dual);
        let mut rng = Rng::from_seed(7);
        let a12 = g.arc_index(1, 2).unwrap();
        let a13 = g.arc_index(1, 3).unwrap();

        let dual_gap = |f: &Tensor, w: &Tensor, a: &Tensor| -> f64 {
            let mut tape = Tape::new();
            let fid = tape.constant(f);
            let wid = tape.param(w);
            let aid = tape.param(a);
            let blocks = [ArcFeatureBlock::FromSrc(fid), ArcFeatureBlock::FromDst(fid)];
            let out = dual_conv_forward(
                &mut tape,
                &blocks,
                &gctx,
                Some(&dctx),
                &[DualConvHeadNodes { w: wid, a: aid }],
                DualAttention::Softmax,
                Activation::None,
                None,
            )
            .unwrap();
            (0..4)
                .map(|c| (tape.values(out)[a12 * 4 + c] - tape.values(out)[a13 * 4 + c]).abs())
                .fold(0.0, f64::max)
        };

        for _ in 0..20 {
            let mut f = rand_tensor(5, 3, &mut rng);
            // f_2 = f_3.
            let row2: Vec<f64> = f.row(2).to_vec();
            f.row_mut(3).copy_from_slice(&row2);
            let gat_w = rand_tensor(3, 4, &mut rng);
            let gat_a = rand_tensor(8, 1, &mut rng);

            // Plain GAT logits at vertex 1 for neighbors 2 and 3 are
            // bitwise equal because the features coincide.
            let mut tape = Tape::new();
            let fid = tape.constant(&f);
            let wid = tape.constant(&gat_w);
            let h = tape.matmul(fid, wid).unwrap();
            let a_center =
                tape.constant(&Tensor::from_vec(4, 1, gat_a.values()[0..4].to_vec()));
            let a_neigh =
                tape.constant(&Tensor::from_vec(4, 1, gat_a.values()[4..8].to_vec()));
            let sc = tape.matmul(h, a_center).unwrap();
            let sn = tape.matmul(h, a_neigh).unwrap();
            let l2 = tape.values(sc)[1] + tape.values(sn)[2];
            let l3 = tape.values(sc)[1] + tape.values(sn)[3];
            assert_eq!(l2, l3, "GAT cannot separate the arcs");

            // Dual outputs differ for generic weights; a measure-zero
            // coincidence gets one fresh redraw.
            let w = rand_tensor(6, 4, &mut rng);
            let a = rand_tensor(8, 1, &mut rng);
            let mut gap = dual_gap(&f, &w, &a);
            if gap <= 1e-8 {
                let w2 = rand_tensor(6, 4, &mut rng);
                let a2 = rand_tensor(8, 1, &mut rng);
                gap = dual_gap(&f, &w2, &a2);
            }
            assert!(gap > 1e-8, "dual conv failed to separate the arcs: gap {gap}");
        }
    }

    #[test]
    fn primal_conv_uniform_scores_give_mean_aggregation() {
        let g = graph(&[(0, 1), (1, 2), (2, 0)], 3).to_bidirected().add_self_loops();
        let ctx = GraphCtx::new(&g);
        let mut rng = Rng::from_seed(8);
        let f = rand_tensor(3, 3, &mut rng);
        let w = rand_tensor(3, 2, &mut rng);
        // Identical dual features for every arc: uniform attention.
        let ef = Tensor::from_vec(g.arc_count(), 2, vec![0.3; g.arc_count() * 2]);
        let a = rand_tensor(2, 1, &mut rng);
        let mut tape = Tape::new();
        let fid = tape.constant(&f);
        let wid = tape.param(&w);
        let efid = tape.constant(&ef);
        let aid = tape.param(&a);
        let out = primal_conv_forward(
            &mut tape,
            fid,
            efid,
            &ctx,
            &[PrimalConvHeadNodes { w: wid, a: aid }],
            Merge::Concat,
            Activation::None,
            false,
            None,
        )
        .unwrap();
        // Oracle: mean over in-neighbors of f_j W.
        for i in 0..3 {
            let nbrs = g.in_sources(i);
            for c in 0..2 {
                let mut acc = 0.0;
                for &j in nbrs {
                    for k in 0..3 {
                        acc += f.get(j, k) * w.get(k, c) / nbrs.len() as f64;
                    }
                }
                assert!((tape.values(out)[i * 2 + c] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn primal_conv_single_self_loop() {
        let g = graph(&[], 1).add_self_loops();
        let ctx = GraphCtx::new(&g);
        let f = Tensor::from_vec(1, 2, vec![0.5, -1.0]);
        let w = Tensor::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]);
        let ef = Tensor::from_vec(1, 3, vec![0.1, 0.2, 0.3]);
        let a = Tensor::from_vec(3, 1, vec![1.0, 1.0, 1.0]);
        let mut tape = Tape::new();
        let fid = tape.constant(&f);
        let wid = tape.param(&w);
        let efid = tape.constant(&ef);
        let aid = tape.param(&a);
        let out = primal_conv_forward(
            &mut tape,
            fid,
            efid,
            &ctx,
            &[PrimalConvHeadNodes { w: wid, a: aid }],
            Merge::Concat,
            Activation::Relu,
            false,
            None,
        )
        .unwrap();
        assert_eq!(tape.values(out), &[0.5, 0.0]);
    }

    #[test]
    fn primal_conv_matches_dense_oracle() {
        let mut rng = Rng::from_seed(9);
        let n = 6;
        let mut pairs = Vec::new();
        for _ in 0..14 {
            pairs.push((rng.below(n), rng.below(n)));
        }
        let g = graph(&pairs, n).to_bidirected().add_self_loops();
        let ctx = GraphCtx::new(&g);
        let f = rand_tensor(n, 3, &mut rng);
        let w = rand_tensor(3, 2, &mut rng);
        let ef = rand_tensor(g.arc_count(), 4, &mut rng);
        let a = rand_tensor(4, 1, &mut rng);
        let mut tape = Tape::new();
        let fid = tape.constant(&f);
        let wid = tape.param(&w);
        let efid = tape.constant(&ef);
        let aid = tape.param(&a);
        let out = primal_conv_forward(
            &mut tape,
            fid,
            efid,
            &ctx,
            &[PrimalConvHeadNodes { w: wid, a: aid }],
            Merge::Concat,
            Activation::None,
            false,
            None,
        )
        .unwrap();
        // Dense oracle over in-neighborhoods.
        let leaky = |x: f64| if x >= 0.0 { x } else { LEAKY_SLOPE * x };
        for i in 0..n {
            let arcs: Vec<usize> = g.in_arc_ids(i).to_vec();
            let logits: Vec<f64> = arcs
                .iter()
                .map(|&arc| {
                    let mut s = 0.0;
                    for k in 0..4 {
                        s += ef.get(arc, k) * a.get(k, 0);
                    }
                    leaky(s)
                })
                .collect();
            let m = logits.iter().fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
            let exps: Vec<f64> = logits.iter().map(|&l| crate::math::exp(l - m)).collect();
            let denom: f64 = exps.iter().sum();
            for c in 0..2 {
                let mut acc = 0.0;
                for (idx, &arc) in arcs.iter().enumerate() {
                    let (src, _) = g.arc(arc);
                    let mut hw = 0.0;
                    for k in 0..3 {
                        hw += f.get(src, k) * w.get(k, c);
                    }
                    acc += exps[idx] / denom * hw;
                }
                assert!((tape.values(out)[i * 2 + c] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gat_reduction_matches_plain_gat() {
        let mut rng = Rng::from_seed(10);
        for _ in 0..20 {
            let n = 8;
            let mut pairs = Vec::new();
            for _ in 0..20 {
                pairs.push((rng.below(n), rng.below(n)));
            }
            let g = graph(&pairs, n).to_bidirected().add_self_loops();
            let ctx = GraphCtx::new(&g);
            let f = rand_tensor(n, 5, &mut rng);
            let w = glorot_uniform(5, 3, &mut rng);
            let a = glorot_uniform(6, 1, &mut rng);
            let mut tape = Tape::new();
            let fid = tape.constant(&f);
            let wid = tape.constant(&w);
            let aid = tape.constant(&a);
            let plain = gat_forward(
                &mut tape,
                fid,
                &ctx,
                &[GatHeadNodes { w: wid, a: aid }],
                Merge::Concat,
                Activation::Elu,
                None,
            )
            .unwrap();
            let reduced = gat_as_dual_primal(
                &mut tape,
                fid,
                &ctx,
                &[(w.clone(), a.clone())],
                Merge::Concat,
                Activation::Elu,
            )
            .unwrap();
            let d = tape.to_tensor(plain).max_abs_diff(&tape.to_tensor(reduced));
            assert!(d < 1e-10, "reduction mismatch {d}");
        }
    }

    #[test]
    fn gat_reduction_single_arc() {
        let g = graph(&[(0, 0), (1, 1), (0, 1)], 2);
        let ctx = GraphCtx::new(&g);
        let mut rng = Rng::from_seed(11);
        let f = rand_tensor(2, 2, &mut rng);
        let w = rand_tensor(2, 2, &mut rng);
        let a = rand_tensor(4, 1, &mut rng);
        let mut tape = Tape::new();
        let fid = tape.constant(&f);
        let wid = tape.constant(&w);
        let aid = tape.constant(&a);
        let plain = gat_forward(
            &mut tape,
            fid,
            &ctx,
            &[GatHeadNodes { w: wid, a: aid }],
            Merge::Concat,
            Activation::None,
            None,
        )
        .unwrap();
        let reduced =
            gat_as_dual_primal(&mut tape, fid, &ctx, &[(w, a)], Merge::Concat, Activation::None)
                .unwrap();
        assert!(tape.to_tensor(plain).max_abs_diff(&tape.to_tensor(reduced)) < 1e-12);
    }

    #[test]
    fn poly_order_zero_is_dense_layer() {
        let mut rng = Rng::from_seed(12);
        let g = graph(&[(0, 1), (1, 0)], 2);
        let ctx = GraphCtx::new(&g);
        let f = rand_tensor(2, 3, &mut rng);
        let theta = rand_tensor(3, 2, &mut rng);
        let mut tape = Tape::new();
        let fid = tape.constant(&f);
        let tid = tape.param(&theta);
        let nodes = PolyConvNodes { thetas: vec![tid], scorers: vec![] };
        let out = poly_conv_forward(&mut tape, fid, &ctx, &nodes, Activation::None, None).unwrap();
        let direct = tape.matmul(fid, tid).unwrap();
        assert!(tape.to_tensor(out).max_abs_diff(&tape.to_tensor(direct)) < 1e-15);
    }

    #[test]
    fn poly_order_one_uniform_attention_is_mean_diffusion() {
        // Identical features force uniform attention; the order-1 term
        // is the in-neighborhood mean of f, transformed.
        let g = graph(&[(0, 1), (1, 2), (2, 0)], 3).to_bidirected().add_self_loops();
        let ctx = GraphCtx::new(&g);
        let mut rng = Rng::from_seed(13);
        let row: Vec<f64> = (0..3).map(|_| rng.symmetric(1.0)).collect();
        let f = Tensor::from_vec(3, 3, [row.clone(), row.clone(), row.clone()].concat());
        let t0 = rand_tensor(3, 2, &mut rng);
        let t1 = rand_tensor(3, 2, &mut rng);
        let a = rand_tensor(4, 1, &mut rng);
        let mut tape = Tape::new();
        let fid = tape.constant(&f);
        let t0id = tape.param(&t0);
        let t1id = tape.param(&t1);
        let aid = tape.param(&a);
        let nodes = PolyConvNodes {
            thetas: vec![t0id, t1id],
            scorers: vec![PolyScorerNodes::VertexPair { a: aid }],
        };
        let out = poly_conv_forward(&mut tape, fid, &ctx, &nodes, Activation::None, None).unwrap();
        // With identical rows the diffused features equal the row, so
        // the output is row * (theta_0 + theta_1) everywhere.
        for i in 0..3 {
            for c in 0..2 {
                let mut expect = 0.0;
                for k in 0..3 {
                    expect += row[k] * (t0.get(k, c) + t1.get(k, c));
                }
                assert!((tape.values(out)[i * 2 + c] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn poly_diffusion_has_exact_hop_locality() {
        // Path graph: two order-1 diffusions move mass exactly two
        // hops; vertex 4 stays untouched by a pulse at vertex 0.
        let g = graph(&[(0, 1), (1, 2), (2, 3), (3, 4)], 5).to_bidirected();
        let ctx = GraphCtx::new(&g);
        let mut f = Tensor::zeros(5, 1);
        f.set(0, 0, 1.0);
        let eye = Tensor::from_vec(1, 1, vec![1.0]);
        let zero = Tensor::zeros(1, 1);
        let a = Tensor::from_vec(2, 1, vec![0.3, -0.2]);
        let mut tape = Tape::new();
        let fid = tape.constant(&f);
        let t0 = tape.param(&zero);
        let t1 = tape.param(&zero);
        let t2 = tape.param(&eye);
        let a1 = tape.param(&a);
        let a2 = tape.param(&a);
        let nodes = PolyConvNodes {
            thetas: vec![t0, t1, t2],
            scorers: vec![
                PolyScorerNodes::VertexPair { a: a1 },
                PolyScorerNodes::VertexPair { a: a2 },
            ],
        };
        let out = poly_conv_forward(&mut tape, fid, &ctx, &nodes, Activation::None, None).unwrap();
        let v = tape.values(out);
        // Order-2 support of a pulse at 0 is {0, 1, 2}.
        assert!(v[0] != 0.0 || v[1] != 0.0 || v[2] != 0.0);
        assert_eq!(v[3], 0.0);
        assert_eq!(v[4], 0.0);
    }

    #[test]
    fn permutation_equivariance() {
        let mut rng = Rng::from_seed(14);
        for _ in 0..10 {
            let n = 7;
            let mut pairs = Vec::new();
            for _ in 0..16 {
                pairs.push((rng.below(n), rng.below(n)));
            }
            let g = graph(&pairs, n).to_bidirected().add_self_loops();
            let ctx = GraphCtx::new(&g);
            let f = rand_tensor(n, 3, &mut rng);
            let w = rand_tensor(3, 2, &mut rng);
            let a = rand_tensor(4, 1, &mut rng);

            let mut perm: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut perm);
            let mut fp = Tensor::zeros(n, 3);
            for i in 0..n {
                fp.row_mut(perm[i]).copy_from_slice(f.row(i));
            }
            let ppairs: Vec<(usize, usize)> = g
                .arcs()
                .iter()
                .map(|&(s, d)| (perm[s], perm[d]))
                .collect();
            let gp = graph(&ppairs, n);
            let ctxp = GraphCtx::new(&gp);

            let mut tape = Tape::new();
            let fid = tape.constant(&f);
            let wid = tape.constant(&w);
            let aid = tape.constant(&a);
            let out = gat_forward(
                &mut tape,
                fid,
                &ctx,
                &[GatHeadNodes { w: wid, a: aid }],
                Merge::Concat,
                Activation::Elu,
                None,
            )
            .unwrap();
            let fpid = tape.constant(&fp);
            let outp = gat_forward(
                &mut tape,
                fpid,
                &ctxp,
                &[GatHeadNodes { w: wid, a: aid }],
                Merge::Concat,
                Activation::Elu,
                None,
            )
            .unwrap();
            for i in 0..n {
                for c in 0..2 {
                    let x = tape.values(out)[i * 2 + c];
                    let y = tape.values(outp)[perm[i] * 2 + c];
                    let denom = x.abs().max(y.abs()).max(1.0);
                    assert!(
                        ((x - y) / denom).abs() < 1e-12,
                        "equivariance violated: {x} vs {y}"
                    );
                }
            }
        }
    }

    #[test]
    fn attention_rows_sum_to_one_per_neighborhood() {
        let mut rng = Rng::from_seed(15);
        let n = 6;
        let mut pairs = Vec::new();
        for _ in 0..15 {
            pairs.push((rng.below(n), rng.below(n)));
        }
        let g = graph(&pairs, n).to_bidirected().add_self_loops();
        let ctx = GraphCtx::new(&g);
        let f = rand_tensor(n, 3, &mut rng);
        let mut tape = Tape::new();
        let fid = tape.constant(&f);
        let sel = tape.constant(&Tensor::from_vec(3, 1, vec![1.0, 0.0, 0.0]));
        let scores = tape.matmul(fid, sel).unwrap();
        let logits = tape.gather_rows(scores, ctx.srcs.clone()).unwrap();
        let alpha = tape
            .segment_softmax(logits, ctx.dsts.clone(), ctx.n)
            .unwrap();
        let mut sums = vec![0.0; n];
        for (k, &d) in ctx.dsts.iter().enumerate() {
            sums[d] += tape.values(alpha)[k];
        }
        for (v, s) in sums.iter().enumerate() {
            if g.in_degree(v) > 0 {
                assert!((s - 1.0).abs() < 1e-12, "vertex {v} sums to {s}");
            }
        }
    }
}
