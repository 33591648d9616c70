//! Declarative model specifications and the forward executor.
//!
//! A [`ModelSpec`] is a JSON-serializable description of a layer
//! stack; [`Model::build`] validates the width flow, allocates and
//! initializes every parameter, and [`Model::forward`] executes the
//! stack on a tape. Vertex-classification models end in vertex logits
//! (the classifying softmax lives inside the loss); link models end in
//! a fully connected readout over the features of each labeled edge.

use alloc::format;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::layers::{
    apply_activation, dual_conv_forward, gat_forward, poly_conv_forward, primal_conv_forward,
    Activation, ArcFeatureBlock, AttnDropout, DualAttention, DualConvHeadNodes, DualCtx,
    GatHeadNodes, GraphCtx, LayerError, Merge, PolyConvNodes, PolyScorerNodes,
    PrimalConvHeadNodes,
};
use crate::optim::glorot_uniform;
use crate::rng::Rng;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    VertexClassification,
    LinkDirection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolyScorerKind {
    /// GAT-style scores from the order's transformed endpoint pair.
    VertexPair,
    /// Scores from the current per-arc edge features.
    DualFeatures,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Row-wise fully connected layer on vertex features.
    Dense { out: usize, bias: bool, activation: Activation },
    /// Attention layer on the primal graph.
    Gat { out: usize, heads: usize, merge: Merge, activation: Activation },
    /// Attention layer over the dual adjacency, on edge features.
    DualGat { out: usize, heads: usize, merge: Merge, activation: Activation },
    /// Linear map on edge features (dimensionality reduction).
    EdgeDense { out: usize, activation: Activation },
    /// Edge-feature convolution over the dual graph. The input per
    /// arc is the concatenation of the previous edge features (when
    /// present and requested) with the endpoint vertex features.
    DualConv { out: usize, heads: usize, activation: Activation, include_prev_edge: bool },
    /// Vertex convolution whose attention scores come from the
    /// current edge features.
    PrimalConv { out: usize, heads: usize, merge: Merge, activation: Activation },
    /// Polynomial attention filter of the given order.
    Poly { order: usize, out: usize, activation: Activation, scorer: PolyScorerKind },
}

/// Which feature blocks feed the final link readout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadoutSpec {
    pub use_vertex: bool,
    pub use_edge: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub task: TaskKind,
    pub dual_mode: crate::dual::DualMode,
    pub self_loops: bool,
    pub layers: Vec<LayerSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub readout: Option<ReadoutSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelError {
    InvalidSpec(String),
    Layer(LayerError),
}

impl core::fmt::Display for ModelError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ModelError::InvalidSpec(s) => write!(f, "invalid model spec: {s}"),
            ModelError::Layer(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for ModelError {}

impl From<LayerError> for ModelError {
    fn from(e: LayerError) -> Self {
        ModelError::Layer(e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(usize);

/// Owns every learnable tensor of a model.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    tensors: Vec<Tensor>,
    names: Vec<String>,
}

impl ParamStore {
    fn add(&mut self, name: String, t: Tensor) -> ParamId {
        self.tensors.push(t);
        self.names.push(name);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of learnable scalars.
    pub fn count_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn snapshot(&self) -> Vec<Tensor> {
        self.tensors.clone()
    }

    pub fn restore(&mut self, snap: &[Tensor]) {
        assert_eq!(snap.len(), self.tensors.len());
        self.tensors.clone_from_slice(snap);
    }

    /// Attaches every parameter as a tape leaf, in store order.
    pub fn attach(&self, tape: &mut Tape) -> Vec<NodeId> {
        self.tensors.iter().map(|t| tape.param(t)).collect()
    }

    /// Gradients per parameter after a backward pass; parameters
    /// untouched by the loss get zeros.
    pub fn collect_grads(&self, tape: &Tape, bound: &[NodeId]) -> Vec<Tensor> {
        bound
            .iter()
            .zip(&self.tensors)
            .map(|(&id, p)| {
                tape.grad_tensor(id)
                    .unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols()))
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
enum LayerParams {
    Dense { w: ParamId, b: Option<ParamId>, activation: Activation },
    Gat { heads: Vec<(ParamId, ParamId)>, merge: Merge, activation: Activation },
    DualGat { heads: Vec<(ParamId, ParamId)>, merge: Merge, activation: Activation },
    EdgeDense { w: ParamId, activation: Activation },
    DualConv { heads: Vec<(ParamId, ParamId)>, activation: Activation, include_prev_edge: bool },
    PrimalConv { heads: Vec<(ParamId, ParamId)>, merge: Merge, activation: Activation },
    Poly { thetas: Vec<ParamId>, scorers: Vec<ParamId>, activation: Activation, scorer: PolyScorerKind },
}

pub struct Model {
    pub spec: ModelSpec,
    pub store: ParamStore,
    layers: Vec<LayerParams>,
    readout: Option<(ParamId, ParamId)>,
    pub in_dim: usize,
    pub vertex_dim: usize,
    pub edge_dim: Option<usize>,
}

/// Arc and vertex indices of each labeled undirected edge, in example
/// order: the two orientations (lo, hi) and (hi, lo) of every pair.
#[derive(Clone, Debug)]
pub struct LinkPairs {
    pub lo: Rc<[usize]>,
    pub hi: Rc<[usize]>,
    pub lo_arc: Rc<[usize]>,
    pub hi_arc: Rc<[usize]>,
}

pub struct ForwardInputs<'a> {
    pub features: &'a Tensor,
    pub gctx: &'a GraphCtx,
    pub dctx: Option<&'a DualCtx>,
    /// Dual adjacency re-expressed as a bidirected self-looped graph
    /// over dual vertices, for GAT layers running on the dual.
    pub dual_as_graph: Option<&'a GraphCtx>,
    pub link_pairs: Option<&'a LinkPairs>,
}

pub enum Mode<'a> {
    Eval,
    Train { rng: &'a mut Rng, input_keep: f64, attn_keep: f64 },
}

struct DropCache {
    src: NodeId,
    dropped: NodeId,
}

impl Model {
    /// Validates the spec against the input width and initializes all
    /// parameters with Glorot uniform draws from `rng`.
    pub fn build(spec: ModelSpec, in_dim: usize, rng: &mut Rng) -> Result<Model, ModelError> {
        let mut store = ParamStore::default();
        let mut layers = Vec::with_capacity(spec.layers.len());
        let mut vdim = in_dim;
        let mut edim: Option<usize> = None;
        for (li, layer) in spec.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Dense { out, bias, activation } => {
                    let w = store.add(format!("layer{li}.dense.w"), glorot_uniform(vdim, out, rng));
                    let b = bias.then(|| {
                        store.add(format!("layer{li}.dense.b"), Tensor::zeros(1, out))
                    });
                    layers.push(LayerParams::Dense { w, b, activation });
                    vdim = out;
                }
                LayerSpec::Gat { out, heads, merge, activation } => {
                    require(heads >= 1, li, "gat needs at least one head")?;
                    let hs = (0..heads)
                        .map(|h| {
                            let w = store.add(
                                format!("layer{li}.gat.h{h}.w"),
                                glorot_uniform(vdim, out, rng),
                            );
                            let a = store.add(
                                format!("layer{li}.gat.h{h}.a"),
                                glorot_uniform(2 * out, 1, rng),
                            );
                            (w, a)
                        })
                        .collect();
                    layers.push(LayerParams::Gat { heads: hs, merge, activation });
                    vdim = merged_dim(out, heads, merge);
                }
                LayerSpec::DualGat { out, heads, merge, activation } => {
                    let ein = edim.ok_or_else(|| {
                        ModelError::InvalidSpec(format!(
                            "layer {li}: dual gat needs edge features; add an edge layer first"
                        ))
                    })?;
                    let hs = (0..heads)
                        .map(|h| {
                            let w = store.add(
                                format!("layer{li}.dualgat.h{h}.w"),
                                glorot_uniform(ein, out, rng),
                            );
                            let a = store.add(
                                format!("layer{li}.dualgat.h{h}.a"),
                                glorot_uniform(2 * out, 1, rng),
                            );
                            (w, a)
                        })
                        .collect();
                    layers.push(LayerParams::DualGat { heads: hs, merge, activation });
                    edim = Some(merged_dim(out, heads, merge));
                }
                LayerSpec::EdgeDense { out, activation } => {
                    let ein = edim.unwrap_or(2 * vdim);
                    let w = store.add(
                        format!("layer{li}.edgedense.w"),
                        glorot_uniform(ein, out, rng),
                    );
                    layers.push(LayerParams::EdgeDense { w, activation });
                    edim = Some(out);
                }
                LayerSpec::DualConv { out, heads, activation, include_prev_edge } => {
                    let ein = if include_prev_edge { edim.unwrap_or(0) } else { 0 };
                    let total_in = ein + 2 * vdim;
                    let hs = (0..heads)
                        .map(|h| {
                            let w = store.add(
                                format!("layer{li}.dualconv.h{h}.w"),
                                glorot_uniform(total_in, out, rng),
                            );
                            let a = store.add(
                                format!("layer{li}.dualconv.h{h}.a"),
                                glorot_uniform(2 * out, 1, rng),
                            );
                            (w, a)
                        })
                        .collect();
                    layers.push(LayerParams::DualConv { heads: hs, activation, include_prev_edge });
                    edim = Some(heads * out);
                }
                LayerSpec::PrimalConv { out, heads, merge, activation } => {
                    let ein = edim.ok_or_else(|| {
                        ModelError::InvalidSpec(format!(
                            "layer {li}: primal conv scores need edge features; run a dual conv first"
                        ))
                    })?;
                    let hs = (0..heads)
                        .map(|h| {
                            let w = store.add(
                                format!("layer{li}.primalconv.h{h}.w"),
                                glorot_uniform(vdim, out, rng),
                            );
                            let a = store.add(
                                format!("layer{li}.primalconv.h{h}.a"),
                                glorot_uniform(ein, 1, rng),
                            );
                            (w, a)
                        })
                        .collect();
                    layers.push(LayerParams::PrimalConv { heads: hs, merge, activation });
                    vdim = merged_dim(out, heads, merge);
                }
                LayerSpec::Poly { order, out, activation, scorer } => {
                    let thetas = (0..=order)
                        .map(|k| {
                            store.add(
                                format!("layer{li}.poly.theta{k}"),
                                glorot_uniform(vdim, out, rng),
                            )
                        })
                        .collect();
                    let scorers = (1..=order)
                        .map(|k| match scorer {
                            PolyScorerKind::VertexPair => store.add(
                                format!("layer{li}.poly.a{k}"),
                                glorot_uniform(2 * out, 1, rng),
                            ),
                            PolyScorerKind::DualFeatures => {
                                let ein = edim.unwrap_or(0).max(1);
                                store.add(
                                    format!("layer{li}.poly.a{k}"),
                                    glorot_uniform(ein, 1, rng),
                                )
                            }
                        })
                        .collect::<Vec<_>>();
                    if scorer == PolyScorerKind::DualFeatures && order >= 1 && edim.is_none() {
                        return Err(ModelError::InvalidSpec(format!(
                            "layer {li}: dual-feature poly scorer needs edge features"
                        )));
                    }
                    layers.push(LayerParams::Poly { thetas, scorers, activation, scorer });
                    vdim = out;
                }
            }
        }
        let readout = match (spec.task, spec.readout) {
            (TaskKind::LinkDirection, Some(r)) => {
                if !r.use_vertex && !r.use_edge {
                    return Err(ModelError::InvalidSpec(
                        "readout must use vertex or edge features".into(),
                    ));
                }
                if r.use_edge && edim.is_none() {
                    return Err(ModelError::InvalidSpec(
                        "edge readout needs edge features".into(),
                    ));
                }
                let width = if r.use_vertex { 2 * vdim } else { 0 }
                    + if r.use_edge { 2 * edim.unwrap_or(0) } else { 0 };
                let w = store.add("readout.w".into(), glorot_uniform(width, 2, rng));
                let b = store.add("readout.b".into(), Tensor::zeros(1, 2));
                Some((w, b))
            }
            (TaskKind::LinkDirection, None) => {
                return Err(ModelError::InvalidSpec(
                    "link-direction models need a readout".into(),
                ))
            }
            (TaskKind::VertexClassification, None) => None,
            (TaskKind::VertexClassification, Some(_)) => {
                return Err(ModelError::InvalidSpec(
                    "vertex models take no readout".into(),
                ))
            }
        };
        Ok(Model {
            spec,
            store,
            layers,
            readout,
            in_dim,
            vertex_dim: vdim,
            edge_dim: edim,
        })
    }

    pub fn param_count(&self) -> usize {
        self.store.count_scalars()
    }

    /// Executes the layer stack. Returns per-vertex logits for vertex
    /// classification or per-labeled-edge logits (E x 2) for link
    /// direction. `bound` is the tape binding from `store.attach`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &[NodeId],
        inputs: &ForwardInputs<'_>,
        mode: &mut Mode<'_>,
    ) -> Result<NodeId, ModelError> {
        let mut f = tape.constant(inputs.features);
        let mut e: Option<NodeId> = None;
        let mut f_cache: Option<DropCache> = None;
        let mut e_cache: Option<DropCache> = None;

        for layer in &self.layers {
            match layer {
                LayerParams::Dense { w, b, activation } => {
                    let fin = dropped(tape, &mut f_cache, f, mode);
                    let mut h = tape.matmul(fin, bound[w.0]).map_err(LayerError::from)?;
                    if let Some(b) = b {
                        h = tape.add_row_bias(h, bound[b.0]).map_err(LayerError::from)?;
                    }
                    f = apply_activation(tape, h, *activation);
                    f_cache = None;
                }
                LayerParams::Gat { heads, merge, activation } => {
                    let fin = dropped(tape, &mut f_cache, f, mode);
                    let hs: Vec<GatHeadNodes> = heads
                        .iter()
                        .map(|&(w, a)| GatHeadNodes { w: bound[w.0], a: bound[a.0] })
                        .collect();
                    f = with_attn_dropout(mode, |drop| {
                        gat_forward(tape, fin, inputs.gctx, &hs, *merge, *activation, drop)
                    })?;
                    f_cache = None;
                }
                LayerParams::DualGat { heads, merge, activation } => {
                    let ein = e.ok_or_else(|| {
                        ModelError::InvalidSpec("dual gat ran before edge features exist".into())
                    })?;
                    let ctx = inputs.dual_as_graph.ok_or_else(|| {
                        ModelError::InvalidSpec("dual gat needs the dual-as-graph context".into())
                    })?;
                    let edrop = dropped(tape, &mut e_cache, ein, mode);
                    let hs: Vec<GatHeadNodes> = heads
                        .iter()
                        .map(|&(w, a)| GatHeadNodes { w: bound[w.0], a: bound[a.0] })
                        .collect();
                    let out = with_attn_dropout(mode, |drop| {
                        gat_forward(tape, edrop, ctx, &hs, *merge, *activation, drop)
                    })?;
                    e = Some(out);
                    e_cache = None;
                }
                LayerParams::EdgeDense { w, activation } => {
                    let blocks = self.edge_blocks(tape, &mut f_cache, &mut e_cache, f, e, mode, true);
                    let head = DualConvHeadNodes { w: bound[w.0], a: bound[w.0] };
                    let out = dual_conv_forward(
                        tape,
                        &blocks,
                        inputs.gctx,
                        None,
                        &[head],
                        DualAttention::Identity,
                        *activation,
                        None,
                    )?;
                    e = Some(out);
                    e_cache = None;
                }
                LayerParams::DualConv { heads, activation, include_prev_edge } => {
                    let blocks = self.edge_blocks(
                        tape,
                        &mut f_cache,
                        &mut e_cache,
                        f,
                        e,
                        mode,
                        *include_prev_edge,
                    );
                    let hs: Vec<DualConvHeadNodes> = heads
                        .iter()
                        .map(|&(w, a)| DualConvHeadNodes { w: bound[w.0], a: bound[a.0] })
                        .collect();
                    let out = with_attn_dropout(mode, |drop| {
                        dual_conv_forward(
                            tape,
                            &blocks,
                            inputs.gctx,
                            inputs.dctx,
                            &hs,
                            DualAttention::Softmax,
                            *activation,
                            drop,
                        )
                    })?;
                    e = Some(out);
                    e_cache = None;
                }
                LayerParams::PrimalConv { heads, merge, activation } => {
                    let ein = e.ok_or_else(|| {
                        ModelError::InvalidSpec("primal conv ran before edge features exist".into())
                    })?;
                    let fin = dropped(tape, &mut f_cache, f, mode);
                    let edrop = dropped(tape, &mut e_cache, ein, mode);
                    let hs: Vec<PrimalConvHeadNodes> = heads
                        .iter()
                        .map(|&(w, a)| PrimalConvHeadNodes { w: bound[w.0], a: bound[a.0] })
                        .collect();
                    f = with_attn_dropout(mode, |drop| {
                        primal_conv_forward(
                            tape,
                            fin,
                            edrop,
                            inputs.gctx,
                            &hs,
                            *merge,
                            *activation,
                            false,
                            drop,
                        )
                    })?;
                    f_cache = None;
                }
                LayerParams::Poly { thetas, scorers, activation, scorer } => {
                    let fin = dropped(tape, &mut f_cache, f, mode);
                    let theta_nodes: Vec<NodeId> = thetas.iter().map(|t| bound[t.0]).collect();
                    let scorer_nodes: Vec<PolyScorerNodes> = match scorer {
                        PolyScorerKind::VertexPair => scorers
                            .iter()
                            .map(|s| PolyScorerNodes::VertexPair { a: bound[s.0] })
                            .collect(),
                        PolyScorerKind::DualFeatures => {
                            let ein = e.ok_or_else(|| {
                                ModelError::InvalidSpec(
                                    "dual-feature poly scorer ran before edge features exist"
                                        .into(),
                                )
                            })?;
                            let edrop = dropped(tape, &mut e_cache, ein, mode);
                            scorers
                                .iter()
                                .map(|s| PolyScorerNodes::DualFeatures {
                                    a: bound[s.0],
                                    feats: edrop,
                                })
                                .collect()
                        }
                    };
                    let nodes = PolyConvNodes { thetas: theta_nodes, scorers: scorer_nodes };
                    f = with_attn_dropout(mode, |drop| {
                        poly_conv_forward(tape, fin, inputs.gctx, &nodes, *activation, drop)
                    })?;
                    f_cache = None;
                }
            }
        }

        match self.spec.task {
            TaskKind::VertexClassification => Ok(f),
            TaskKind::LinkDirection => {
                let (w, b) = self.readout.expect("validated at build");
                let r = self.spec.readout.expect("validated at build");
                let pairs = inputs.link_pairs.ok_or_else(|| {
                    ModelError::InvalidSpec("link forward needs labeled pairs".into())
                })?;
                let fin = dropped(tape, &mut f_cache, f, mode);
                let mut blocks: Vec<NodeId> = Vec::new();
                if r.use_vertex {
                    blocks.push(tape.gather_rows(fin, pairs.lo.clone()).map_err(LayerError::from)?);
                    blocks.push(tape.gather_rows(fin, pairs.hi.clone()).map_err(LayerError::from)?);
                }
                if r.use_edge {
                    let ein = e.ok_or_else(|| {
                        ModelError::InvalidSpec("edge readout ran without edge features".into())
                    })?;
                    let edrop = dropped(tape, &mut e_cache, ein, mode);
                    blocks.push(
                        tape.gather_rows(edrop, pairs.lo_arc.clone())
                            .map_err(LayerError::from)?,
                    );
                    blocks.push(
                        tape.gather_rows(edrop, pairs.hi_arc.clone())
                            .map_err(LayerError::from)?,
                    );
                }
                let mut cat = blocks[0];
                for &b in &blocks[1..] {
                    cat = tape.concat_cols(cat, b).map_err(LayerError::from)?;
                }
                let h = tape.matmul(cat, bound[w.0]).map_err(LayerError::from)?;
                let out = tape.add_row_bias(h, bound[b.0]).map_err(LayerError::from)?;
                Ok(out)
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn edge_blocks(
        &self,
        tape: &mut Tape,
        f_cache: &mut Option<DropCache>,
        e_cache: &mut Option<DropCache>,
        f: NodeId,
        e: Option<NodeId>,
        mode: &mut Mode<'_>,
        include_prev_edge: bool,
    ) -> Vec<ArcFeatureBlock> {
        let mut blocks = Vec::with_capacity(3);
        if include_prev_edge {
            if let Some(e) = e {
                let edrop = dropped(tape, e_cache, e, mode);
                blocks.push(ArcFeatureBlock::PerArc(edrop));
            }
        }
        let fin = dropped(tape, f_cache, f, mode);
        blocks.push(ArcFeatureBlock::FromSrc(fin));
        blocks.push(ArcFeatureBlock::FromDst(fin));
        blocks
    }
}

fn merged_dim(out: usize, heads: usize, merge: Merge) -> usize {
    match merge {
        Merge::Concat => heads * out,
        Merge::Average => out,
    }
}

fn require(cond: bool, layer: usize, msg: &str) -> Result<(), ModelError> {
    if cond {
        Ok(())
    } else {
        Err(ModelError::InvalidSpec(format!("layer {layer}: {msg}")))
    }
}

/// Input dropout, computed once per distinct feature node.
fn dropped(tape: &mut Tape, cache: &mut Option<DropCache>, x: NodeId, mode: &mut Mode<'_>) -> NodeId {
    match mode {
        Mode::Eval => x,
        Mode::Train { rng, input_keep, .. } => {
            if let Some(c) = cache {
                if c.src == x {
                    return c.dropped;
                }
            }
            let d = tape.dropout(x, *input_keep, rng, true);
            *cache = Some(DropCache { src: x, dropped: d });
            d
        }
    }
}

fn with_attn_dropout<T>(
    mode: &mut Mode<'_>,
    f: impl FnOnce(Option<&mut AttnDropout<'_>>) -> Result<T, LayerError>,
) -> Result<T, LayerError> {
    match mode {
        Mode::Eval => f(None),
        Mode::Train { rng, attn_keep, .. } => {
            let mut d = AttnDropout { keep: *attn_keep, rng };
            f(Some(&mut d))
        }
    }
}

/// The vertex-classification GAT baseline: eight 8-wide heads with ELU
/// then a single averaged classification head.
pub fn vertex_gat_spec(classes: usize) -> ModelSpec {
    ModelSpec {
        task: TaskKind::VertexClassification,
        dual_mode: crate::dual::DualMode::Chain,
        self_loops: true,
        layers: vec![
            LayerSpec::Gat { out: 8, heads: 8, merge: Merge::Concat, activation: Activation::Elu },
            LayerSpec::Gat { out: classes, heads: 1, merge: Merge::Average, activation: Activation::None },
        ],
        readout: None,
    }
}

/// The vertex-classification dual-primal model: each primal layer is
/// preceded by a one-head 32-wide dual convolution (ReLU).
pub fn vertex_dpgcnn_spec(classes: usize) -> ModelSpec {
    ModelSpec {
        task: TaskKind::VertexClassification,
        dual_mode: crate::dual::DualMode::Chain,
        self_loops: true,
        layers: vec![
            LayerSpec::DualConv { out: 32, heads: 1, activation: Activation::Relu, include_prev_edge: false },
            LayerSpec::PrimalConv { out: 8, heads: 8, merge: Merge::Concat, activation: Activation::Elu },
            LayerSpec::DualConv { out: 32, heads: 1, activation: Activation::Relu, include_prev_edge: false },
            LayerSpec::PrimalConv { out: classes, heads: 1, merge: Merge::Average, activation: Activation::None },
        ],
        readout: None,
    }
}

/// Polynomial-filter models for the 500-train protocol: two layers
/// with 16 features; the dual convolution (also 16-wide) only enters
/// in the second layer, whose per-order scores read the edge features.
pub fn vertex_poly_spec(classes: usize, order: usize, dual_primal: bool) -> ModelSpec {
    let mut layers = vec![LayerSpec::Poly {
        order,
        out: 16,
        activation: Activation::Elu,
        scorer: PolyScorerKind::VertexPair,
    }];
    if dual_primal {
        layers.push(LayerSpec::DualConv {
            out: 16,
            heads: 1,
            activation: Activation::Relu,
            include_prev_edge: false,
        });
        layers.push(LayerSpec::Poly {
            order,
            out: classes,
            activation: Activation::None,
            scorer: PolyScorerKind::DualFeatures,
        });
    } else {
        layers.push(LayerSpec::Poly {
            order,
            out: classes,
            activation: Activation::None,
            scorer: PolyScorerKind::VertexPair,
        });
    }
    ModelSpec {
        task: TaskKind::VertexClassification,
        dual_mode: crate::dual::DualMode::Chain,
        self_loops: true,
        layers,
        readout: None,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkVariant {
    PrimalGat,
    DualGat,
    Dpgcnn,
}

/// Link-direction models: three convolutional layers and a final
/// fully connected readout over (i) endpoint vertex features, (ii)
/// both orientations' edge features, or (iii) both. The dual-only
/// variant starts with a dimensionality reduction so all three have
/// approximately equal parameter counts.
pub fn link_spec(variant: LinkVariant) -> ModelSpec {
    let (layers, readout) = match variant {
        LinkVariant::PrimalGat => (
            vec![
                LayerSpec::Gat { out: 16, heads: 1, merge: Merge::Concat, activation: Activation::Elu },
                LayerSpec::Gat { out: 16, heads: 1, merge: Merge::Concat, activation: Activation::Elu },
                LayerSpec::Gat { out: 16, heads: 1, merge: Merge::Concat, activation: Activation::Elu },
            ],
            ReadoutSpec { use_vertex: true, use_edge: false },
        ),
        LinkVariant::DualGat => (
            vec![
                LayerSpec::EdgeDense { out: 8, activation: Activation::Elu },
                LayerSpec::DualGat { out: 16, heads: 1, merge: Merge::Concat, activation: Activation::Elu },
                LayerSpec::DualGat { out: 16, heads: 1, merge: Merge::Concat, activation: Activation::Elu },
                LayerSpec::DualGat { out: 16, heads: 1, merge: Merge::Concat, activation: Activation::Elu },
            ],
            ReadoutSpec { use_vertex: false, use_edge: true },
        ),
        LinkVariant::Dpgcnn => (
            vec![
                LayerSpec::Gat { out: 16, heads: 1, merge: Merge::Concat, activation: Activation::Elu },
                LayerSpec::DualConv { out: 8, heads: 1, activation: Activation::Relu, include_prev_edge: true },
                LayerSpec::PrimalConv { out: 16, heads: 1, merge: Merge::Concat, activation: Activation::Elu },
                LayerSpec::DualConv { out: 8, heads: 1, activation: Activation::Relu, include_prev_edge: true },
                LayerSpec::PrimalConv { out: 16, heads: 1, merge: Merge::Concat, activation: Activation::Elu },
                LayerSpec::DualConv { out: 8, heads: 1, activation: Activation::Relu, include_prev_edge: true },
            ],
            ReadoutSpec { use_vertex: true, use_edge: true },
        ),
    };
    ModelSpec {
        task: TaskKind::LinkDirection,
        dual_mode: crate::dual::DualMode::Chain,
        self_loops: true,
        layers,
        readout: Some(readout),
    }
}
