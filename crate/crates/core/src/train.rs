//! Full-batch training loops with GAT-style early stopping, for both
//! tasks, plus seed-sweep aggregation.

use alloc::boxed::Box;
use alloc::fmt;
use alloc::rc::Rc;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::data::{DataError, LinkTask, SplitMasks};
use crate::dual::DualGraph;
use crate::graph::DirectedGraph;
use crate::layers::{DualCtx, GraphCtx, LayerError};
use crate::model::{
    ForwardInputs, LayerSpec, LinkPairs, Mode, Model, ModelError, ModelSpec, PolyScorerKind,
    TaskKind,
};
use crate::optim::{AdamState, OptimError};
use crate::rng::{streams, Rng};
use crate::tape::{Tape, TapeError};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    /// Keep probability for input-feature dropout.
    pub dropout_keep: f64,
    /// Keep probability for attention-coefficient dropout; defaults
    /// to `dropout_keep` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attn_dropout_keep: Option<f64>,
    pub max_epochs: usize,
    pub patience: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sparsify_k: Option<usize>,
}

impl TrainConfig {
    fn attn_keep(&self) -> f64 {
        self.attn_dropout_keep.unwrap_or(self.dropout_keep)
    }
}

/// Per-run metrics; the serialized form is the external interface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub test_acc: f64,
    pub val_acc_curve: Vec<f64>,
    pub train_loss_curve: Vec<f64>,
    pub params: usize,
    pub wall_ms: u64,
    #[serde(skip)]
    pub val_loss_curve: Vec<f64>,
    #[serde(skip)]
    pub final_val_acc: f64,
    /// Dual vertices with empty neighborhoods (their aggregation is
    /// the activation of zero); callers surface this in their logs.
    #[serde(skip)]
    pub isolated_dual: usize,
}

#[derive(Debug)]
pub enum TrainError {
    Diverged { epoch: usize, loss: f64 },
    Model(ModelError),
    Layer(LayerError),
    Tape(TapeError),
    Data(DataError),
    Optim(OptimError),
    Graph(crate::graph::GraphError),
    RunFailed { seed: u64, message: String },
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Diverged { epoch, loss } => {
                write!(f, "loss diverged at epoch {epoch} (loss {loss})")
            }
            TrainError::Model(e) => write!(f, "{e}"),
            TrainError::Layer(e) => write!(f, "{e}"),
            TrainError::Tape(e) => write!(f, "{e}"),
            TrainError::Data(e) => write!(f, "{e}"),
            TrainError::Optim(e) => write!(f, "{e}"),
            TrainError::Graph(e) => write!(f, "{e}"),
            TrainError::RunFailed { seed, message } => {
                write!(f, "run with seed {seed} failed: {message}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TrainError {}

impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        TrainError::Model(e)
    }
}
impl From<LayerError> for TrainError {
    fn from(e: LayerError) -> Self {
        TrainError::Layer(e)
    }
}
impl From<TapeError> for TrainError {
    fn from(e: TapeError) -> Self {
        TrainError::Tape(e)
    }
}
impl From<DataError> for TrainError {
    fn from(e: DataError) -> Self {
        TrainError::Data(e)
    }
}
impl From<OptimError> for TrainError {
    fn from(e: OptimError) -> Self {
        TrainError::Optim(e)
    }
}
impl From<crate::graph::GraphError> for TrainError {
    fn from(e: crate::graph::GraphError) -> Self {
        TrainError::Graph(e)
    }
}

/// A loaded vertex-classification dataset. The graph is the raw
/// (bidirected) citation graph; self-loops are added per model spec.
pub struct VertexDataset<'a> {
    pub features: &'a Tensor,
    pub labels: &'a [usize],
    pub classes: usize,
    pub graph: &'a DirectedGraph,
}

fn spec_needs_dual(spec: &ModelSpec) -> bool {
    spec.layers.iter().any(|l| {
        matches!(
            l,
            LayerSpec::DualConv { .. }
                | LayerSpec::Poly { scorer: PolyScorerKind::DualFeatures, .. }
        )
    })
}

fn spec_needs_dual_as_graph(spec: &ModelSpec) -> bool {
    spec.layers.iter().any(|l| matches!(l, LayerSpec::DualGat { .. }))
}

/// Accuracy of argmax predictions over masked rows.
pub fn accuracy(logits: &Tensor, labels: &[usize], mask: &[usize]) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    let c = logits.cols();
    let mut hits = 0usize;
    for &row in mask {
        let vals = logits.row(row);
        let mut best = 0usize;
        for j in 1..c {
            if vals[j] > vals[best] {
                best = j;
            }
        }
        if best == labels[row] {
            hits += 1;
        }
    }
    hits as f64 / mask.len() as f64
}

struct Graphs {
    gctx: GraphCtx,
    dctx: Option<DualCtx>,
    dual_as_graph: Option<GraphCtx>,
    /// Isolated dual vertices, surfaced for the caller's log.
    pub isolated_dual: usize,
}

fn prepare_graphs(
    base: &DirectedGraph,
    spec: &ModelSpec,
    sparsify_k: Option<usize>,
    rng: &Rng,
) -> Result<Graphs, TrainError> {
    let g = if spec.self_loops { base.add_self_loops() } else { base.clone() };
    let gctx = GraphCtx::new(&g);
    let needs_dual = spec_needs_dual(spec) || spec_needs_dual_as_graph(spec);
    let mut dctx = None;
    let mut dual_as_graph = None;
    let mut isolated = 0;
    if needs_dual {
        let mut dual = DualGraph::build(Arc::new(g.clone()), spec.dual_mode)?;
        if let Some(k) = sparsify_k {
            let seed = rng.stream(streams::SPARSIFY).next_u64();
            dual = dual.sparsify(k, seed);
        }
        isolated = dual.isolated_count();
        if spec_needs_dual_as_graph(spec) {
            let pairs: Vec<(usize, usize)> = dual
                .edges()
                .iter()
                .flat_map(|&(u, v)| [(u, v), (v, u)])
                .collect();
            let dg = DirectedGraph::from_edge_list(&pairs, dual.dual_n(), true)?
                .add_self_loops();
            dual_as_graph = Some(GraphCtx::new(&dg));
        }
        dctx = Some(DualCtx::new(&dual));
    }
    Ok(Graphs { gctx, dctx, dual_as_graph, isolated_dual: isolated })
}

struct EarlyStopping {
    best_loss: f64,
    best_acc: f64,
    stale: usize,
    snapshot_loss: f64,
    snapshot_acc: f64,
    best_epoch: usize,
    snapshot: Vec<Tensor>,
}

impl EarlyStopping {
    fn new(initial: Vec<Tensor>) -> Self {
        EarlyStopping {
            best_loss: f64::INFINITY,
            best_acc: f64::NEG_INFINITY,
            stale: 0,
            snapshot_loss: f64::INFINITY,
            snapshot_acc: f64::NEG_INFINITY,
            best_epoch: 0,
            snapshot: initial,
        }
    }

    /// GAT rule: the patience counter resets when either the
    /// validation loss or the validation accuracy improves. The kept
    /// weights are the lowest-loss epoch, ties broken by higher
    /// accuracy, then by the earlier epoch.
    fn observe(&mut self, epoch: usize, loss: f64, acc: f64, params: &[Tensor]) -> bool {
        let improved = loss <= self.best_loss || acc >= self.best_acc;
        self.best_loss = self.best_loss.min(loss);
        self.best_acc = self.best_acc.max(acc);
        if loss < self.snapshot_loss || (loss == self.snapshot_loss && acc > self.snapshot_acc) {
            self.snapshot_loss = loss;
            self.snapshot_acc = acc;
            self.best_epoch = epoch;
            self.snapshot = params.to_vec();
        }
        if improved {
            self.stale = 0;
            false
        } else {
            self.stale += 1;
            true
        }
    }
}

/// Trains a vertex-classification model and reports metrics; the
/// model is restored to its best validation epoch before the test
/// accuracy is computed. `wall_ms` is left at zero for the caller.
pub fn train_vertex(
    cfg: &TrainConfig,
    spec: &ModelSpec,
    data: &VertexDataset<'_>,
    masks: &SplitMasks,
    seed: u64,
) -> Result<RunMetrics, TrainError> {
    debug_assert_eq!(spec.task, TaskKind::VertexClassification);
    let root = Rng::from_seed(seed);
    let graphs = prepare_graphs(data.graph, spec, cfg.sparsify_k, &root)?;
    let mut init_rng = root.stream(streams::INIT);
    let mut model = Model::build(spec.clone(), data.features.cols(), &mut init_rng)?;
    let labels: Rc<[usize]> = Rc::from(data.labels.to_vec());
    let train_mask: Rc<[usize]> = Rc::from(masks.train.clone());
    let val_mask: Rc<[usize]> = Rc::from(masks.val.clone());
    let forward_eval = |model: &Model| -> Result<Tensor, TrainError> {
        let mut tape = Tape::new();
        let bound = model.store.attach(&mut tape);
        let inputs = ForwardInputs {
            features: data.features,
            gctx: &graphs.gctx,
            dctx: graphs.dctx.as_ref(),
            dual_as_graph: graphs.dual_as_graph.as_ref(),
            link_pairs: None,
        };
        let out = model.forward(&mut tape, &bound, &inputs, &mut Mode::Eval)?;
        Ok(tape.to_tensor(out))
    };

    let mut drop_rng = root.stream(streams::DROPOUT);
    let mut adam = AdamState::new(model.store.tensors());
    let mut stopper = EarlyStopping::new(model.store.snapshot());
    let mut metrics = RunMetrics {
        seed,
        epochs: 0,
        best_epoch: 0,
        test_acc: 0.0,
        val_acc_curve: Vec::new(),
        train_loss_curve: Vec::new(),
        params: model.param_count(),
        wall_ms: 0,
        val_loss_curve: Vec::new(),
        final_val_acc: 0.0,
        isolated_dual: graphs.isolated_dual,
    };

    for epoch in 1..=cfg.max_epochs {
        let mut tape = Tape::new();
        let bound = model.store.attach(&mut tape);
        let inputs = ForwardInputs {
            features: data.features,
            gctx: &graphs.gctx,
            dctx: graphs.dctx.as_ref(),
            dual_as_graph: graphs.dual_as_graph.as_ref(),
            link_pairs: None,
        };
        let mut mode = Mode::Train {
            rng: &mut drop_rng,
            input_keep: cfg.dropout_keep,
            attn_keep: cfg.attn_keep(),
        };
        let logits = model.forward(&mut tape, &bound, &inputs, &mut mode)?;
        let loss_node =
            tape.masked_softmax_cross_entropy(logits, labels.clone(), train_mask.clone())?;
        let loss = tape.scalar(loss_node);
        if !loss.is_finite() {
            return Err(TrainError::Diverged { epoch, loss });
        }
        tape.backward(loss_node)?;
        let grads = model.store.collect_grads(&tape, &bound);
        adam.step(model.store.tensors_mut(), &grads, cfg.lr, cfg.weight_decay)?;

        let eval_logits = forward_eval(&model)?;
        let mut vtape = Tape::new();
        let vl = vtape.constant(&eval_logits);
        let val_loss_node =
            vtape.masked_softmax_cross_entropy(vl, labels.clone(), val_mask.clone())?;
        let val_loss = vtape.scalar(val_loss_node);
        let val_acc = accuracy(&eval_logits, data.labels, &masks.val);
        metrics.train_loss_curve.push(loss);
        metrics.val_loss_curve.push(val_loss);
        metrics.val_acc_curve.push(val_acc);
        metrics.epochs = epoch;
        let exhausted = stopper.observe(epoch, val_loss, val_acc, model.store.tensors());
        if exhausted && stopper.stale >= cfg.patience {
            break;
        }
    }

    if cfg.max_epochs > 0 {
        model.store.restore(&stopper.snapshot);
        metrics.best_epoch = stopper.best_epoch;
    }
    let final_logits = forward_eval(&model)?;
    metrics.test_acc = accuracy(&final_logits, data.labels, &masks.test);
    metrics.final_val_acc = accuracy(&final_logits, data.labels, &masks.val);
    Ok(metrics)
}

/// Trains a link-direction model over the bidirected version of the
/// task's directed graph.
pub fn train_link(
    cfg: &TrainConfig,
    spec: &ModelSpec,
    features: &Tensor,
    graph: &DirectedGraph,
    task: &LinkTask,
    seed: u64,
) -> Result<RunMetrics, TrainError> {
    debug_assert_eq!(spec.task, TaskKind::LinkDirection);
    let root = Rng::from_seed(seed);
    let bid = graph.to_bidirected();
    let graphs = prepare_graphs(&bid, spec, cfg.sparsify_k, &root)?;
    // Arc ids resolve against the final (possibly self-looped) graph.
    let looped = if spec.self_loops { bid.add_self_loops() } else { bid.clone() };
    let mut lo = Vec::with_capacity(task.examples.len());
    let mut hi = Vec::with_capacity(task.examples.len());
    let mut lo_arc = Vec::with_capacity(task.examples.len());
    let mut hi_arc = Vec::with_capacity(task.examples.len());
    let mut labels = Vec::with_capacity(task.examples.len());
    for ex in &task.examples {
        lo.push(ex.lo);
        hi.push(ex.hi);
        lo_arc.push(looped.arc_index(ex.lo, ex.hi).expect("bidirected graph keeps every edge"));
        hi_arc.push(looped.arc_index(ex.hi, ex.lo).expect("bidirected graph keeps every edge"));
        labels.push(ex.label);
    }
    let pairs = LinkPairs {
        lo: Rc::from(lo),
        hi: Rc::from(hi),
        lo_arc: Rc::from(lo_arc),
        hi_arc: Rc::from(hi_arc),
    };
    let labels: Rc<[usize]> = Rc::from(labels);
    let train_mask: Rc<[usize]> = Rc::from(task.train.clone());
    let val_mask: Rc<[usize]> = Rc::from(task.val.clone());

    let mut init_rng = root.stream(streams::INIT);
    let mut model = Model::build(spec.clone(), features.cols(), &mut init_rng)?;
    let forward_eval = |model: &Model| -> Result<Tensor, TrainError> {
        let mut tape = Tape::new();
        let bound = model.store.attach(&mut tape);
        let inputs = ForwardInputs {
            features,
            gctx: &graphs.gctx,
            dctx: graphs.dctx.as_ref(),
            dual_as_graph: graphs.dual_as_graph.as_ref(),
            link_pairs: Some(&pairs),
        };
        let out = model.forward(&mut tape, &bound, &inputs, &mut Mode::Eval)?;
        Ok(tape.to_tensor(out))
    };

    let mut drop_rng = root.stream(streams::DROPOUT);
    let mut adam = AdamState::new(model.store.tensors());
    let mut stopper = EarlyStopping::new(model.store.snapshot());
    let mut metrics = RunMetrics {
        seed,
        epochs: 0,
        best_epoch: 0,
        test_acc: 0.0,
        val_acc_curve: Vec::new(),
        train_loss_curve: Vec::new(),
        params: model.param_count(),
        wall_ms: 0,
        val_loss_curve: Vec::new(),
        final_val_acc: 0.0,
        isolated_dual: graphs.isolated_dual,
    };
    let label_slice: Vec<usize> = labels.to_vec();

    for epoch in 1..=cfg.max_epochs {
        let mut tape = Tape::new();
        let bound = model.store.attach(&mut tape);
        let inputs = ForwardInputs {
            features,
            gctx: &graphs.gctx,
            dctx: graphs.dctx.as_ref(),
            dual_as_graph: graphs.dual_as_graph.as_ref(),
            link_pairs: Some(&pairs),
        };
        let mut mode = Mode::Train {
            rng: &mut drop_rng,
            input_keep: cfg.dropout_keep,
            attn_keep: cfg.attn_keep(),
        };
        let logits = model.forward(&mut tape, &bound, &inputs, &mut mode)?;
        let loss_node =
            tape.masked_softmax_cross_entropy(logits, labels.clone(), train_mask.clone())?;
        let loss = tape.scalar(loss_node);
        if !loss.is_finite() {
            return Err(TrainError::Diverged { epoch, loss });
        }
        tape.backward(loss_node)?;
        let grads = model.store.collect_grads(&tape, &bound);
        adam.step(model.store.tensors_mut(), &grads, cfg.lr, cfg.weight_decay)?;

        let eval_logits = forward_eval(&model)?;
        let mut vtape = Tape::new();
        let vl = vtape.constant(&eval_logits);
        let val_loss_node =
            vtape.masked_softmax_cross_entropy(vl, labels.clone(), val_mask.clone())?;
        let val_loss = vtape.scalar(val_loss_node);
        let val_acc = accuracy(&eval_logits, &label_slice, &task.val);
        metrics.train_loss_curve.push(loss);
        metrics.val_loss_curve.push(val_loss);
        metrics.val_acc_curve.push(val_acc);
        metrics.epochs = epoch;
        let exhausted = stopper.observe(epoch, val_loss, val_acc, model.store.tensors());
        if exhausted && stopper.stale >= cfg.patience {
            break;
        }
    }

    if cfg.max_epochs > 0 {
        model.store.restore(&stopper.snapshot);
        metrics.best_epoch = stopper.best_epoch;
    }
    let final_logits = forward_eval(&model)?;
    metrics.test_acc = accuracy(&final_logits, &label_slice, &task.test);
    metrics.final_val_acc = accuracy(&final_logits, &label_slice, &task.val);
    Ok(metrics)
}

/// Sweep aggregate. Mean and population standard deviation of the
/// test accuracy, computed in seed order so the result is independent
/// of run completion order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepSummary {
    pub mean_test_acc: f64,
    pub std_test_acc: f64,
    pub runs: Vec<RunMetrics>,
}

pub fn aggregate(mut runs: Vec<RunMetrics>) -> SweepSummary {
    runs.sort_by_key(|r| r.seed);
    let k = runs.len().max(1) as f64;
    let mean = runs.iter().map(|r| r.test_acc).sum::<f64>() / k;
    let var = runs
        .iter()
        .map(|r| (r.test_acc - mean) * (r.test_acc - mean))
        .sum::<f64>()
        / k;
    SweepSummary {
        mean_test_acc: mean,
        std_test_acc: crate::math::sqrt(var),
        runs,
    }
}

/// Runs one training closure per seed, sequentially, and aggregates.
/// Failures carry the offending seed.
pub fn run_sweep<F>(seeds: &[u64], run: F) -> Result<SweepSummary, TrainError>
where
    F: Fn(u64) -> Result<RunMetrics, TrainError>,
{
    assert!(!seeds.is_empty(), "sweep needs at least one seed");
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        match run(seed) {
            Ok(m) => runs.push(m),
            Err(e) => {
                return Err(TrainError::RunFailed { seed, message: e.to_string() })
            }
        }
    }
    Ok(aggregate(runs))
}

/// Silences an unused-field warning: boxed errors keep their size down
/// in results.
#[allow(dead_code)]
type BoxedError = Box<TrainError>;
