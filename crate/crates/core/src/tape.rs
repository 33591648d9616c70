//! Tape-based reverse-mode automatic differentiation over dense f64
//! matrices, plus the sparse-neighborhood primitives (gather,
//! segment-sum, segment-softmax) attention layers are built from.
//!
//! Every forward op appends a record to the tape; `backward` sweeps
//! the records in reverse exactly once, accumulating gradients into
//! every node on a path to a parameter leaf. Constant leaves (inputs)
//! do not request gradients, and whole branches without parameter
//! ancestors are skipped.

use alloc::fmt;
use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TapeError {
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    NonScalarLoss {
        rows: usize,
        cols: usize,
    },
    EmptyMask,
}

impl fmt::Display for TapeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TapeError::ShapeMismatch { op, left, right } => write!(
                f,
                "{op}: incompatible shapes {}x{} and {}x{}",
                left.0, left.1, right.0, right.1
            ),
            TapeError::IndexOutOfRange { op, index, bound } => {
                write!(f, "{op}: index {index} out of range (bound {bound})")
            }
            TapeError::NonScalarLoss { rows, cols } => {
                write!(f, "backward requires a 1x1 loss, got {rows}x{cols}")
            }
            TapeError::EmptyMask => write!(f, "cross-entropy mask selects no rows"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TapeError {}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

enum Op {
    Leaf,
    Matmul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Scale(NodeId, f64),
    ConcatCols(NodeId, NodeId),
    SliceRows(NodeId, usize),
    GatherRows(NodeId, Rc<[usize]>),
    SegmentSum(NodeId, Rc<[usize]>),
    SegmentSoftmax(NodeId, Rc<[usize]>),
    MulRows(NodeId, NodeId),
    LeakyRelu(NodeId, f64),
    Relu(NodeId),
    Elu(NodeId),
    Dropout(NodeId, Vec<f64>),
    AddRowBias(NodeId, NodeId),
    RowSoftmax(NodeId),
    MaskedCe {
        logits: NodeId,
        labels: Rc<[usize]>,
        mask: Rc<[usize]>,
        /// Softmax rows for masked rows only, mask.len() x C.
        probs: Vec<f64>,
    },
    SumAll(NodeId),
}

struct Node {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Vec<f64>>,
    check_finite: bool,
    backward_visits: usize,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
            check_finite: false,
            backward_visits: 0,
        }
    }

    /// When set, every op asserts its output is finite.
    pub fn set_check_finite(&mut self, on: bool) {
        self.check_finite = on;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records visited by the last `backward` sweep.
    pub fn backward_visits(&self) -> usize {
        self.backward_visits
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        let n = &self.nodes[id.0];
        (n.rows, n.cols)
    }

    pub fn values(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].values
    }

    pub fn to_tensor(&self, id: NodeId) -> Tensor {
        let n = &self.nodes[id.0];
        Tensor::from_vec(n.rows, n.cols, n.values.clone())
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        let n = &self.nodes[id.0];
        debug_assert_eq!((n.rows, n.cols), (1, 1));
        n.values[0]
    }

    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        let g = &self.grads[id.0];
        if g.is_empty() {
            None
        } else {
            Some(g)
        }
    }

    pub fn grad_tensor(&self, id: NodeId) -> Option<Tensor> {
        let (r, c) = self.shape(id);
        self.grad(id).map(|g| Tensor::from_vec(r, c, g.to_vec()))
    }

    /// Differentiable leaf (parameter).
    pub fn param(&mut self, t: &Tensor) -> NodeId {
        self.push(t.rows(), t.cols(), t.values().to_vec(), true, Op::Leaf)
    }

    /// Non-differentiable leaf (input data).
    pub fn constant(&mut self, t: &Tensor) -> NodeId {
        self.push(t.rows(), t.cols(), t.values().to_vec(), false, Op::Leaf)
    }

    fn push(
        &mut self,
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        requires_grad: bool,
        op: Op,
    ) -> NodeId {
        debug_assert_eq!(values.len(), rows * cols);
        if self.check_finite {
            assert!(
                values.iter().all(|v| v.is_finite()),
                "non-finite value produced at node {}",
                self.nodes.len()
            );
        }
        self.nodes.push(Node {
            rows,
            cols,
            values,
            requires_grad,
            op,
        });
        self.grads.push(Vec::new());
        NodeId(self.nodes.len() - 1)
    }

    fn requires(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Dense product: (r x k) * (k x c).
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let (ar, ak) = self.shape(a);
        let (bk, bc) = self.shape(b);
        if ak != bk {
            return Err(TapeError::ShapeMismatch {
                op: "matmul",
                left: (ar, ak),
                right: (bk, bc),
            });
        }
        let mut out = vec![0.0; ar * bc];
        matmul_acc(
            &mut out,
            &self.nodes[a.0].values,
            &self.nodes[b.0].values,
            ar,
            ak,
            bc,
        );
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(ar, bc, out, rg, Op::Matmul(a, b)))
    }

    /// Elementwise sum of equal shapes.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(TapeError::ShapeMismatch {
                op: "add",
                left: sa,
                right: sb,
            });
        }
        let out = self.nodes[a.0]
            .values
            .iter()
            .zip(&self.nodes[b.0].values)
            .map(|(x, y)| x + y)
            .collect();
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(sa.0, sa.1, out, rg, Op::Add(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let (r, c) = self.shape(a);
        let out = self.nodes[a.0].values.iter().map(|x| x * factor).collect();
        let rg = self.requires(a);
        self.push(r, c, out, rg, Op::Scale(a, factor))
    }

    /// Columns of `a` followed by columns of `b`.
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TapeError> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ar != br {
            return Err(TapeError::ShapeMismatch {
                op: "concat_cols",
                left: (ar, ac),
                right: (br, bc),
            });
        }
        let cc = ac + bc;
        let mut out = vec![0.0; ar * cc];
        for i in 0..ar {
            out[i * cc..i * cc + ac]
                .copy_from_slice(&self.nodes[a.0].values[i * ac..(i + 1) * ac]);
            out[i * cc + ac..(i + 1) * cc]
                .copy_from_slice(&self.nodes[b.0].values[i * bc..(i + 1) * bc]);
        }
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(ar, cc, out, rg, Op::ConcatCols(a, b)))
    }

    /// Contiguous row block `start..start + len`.
    pub fn slice_rows(
        &mut self,
        a: NodeId,
        start: usize,
        len: usize,
    ) -> Result<NodeId, TapeError> {
        let (r, c) = self.shape(a);
        if start + len > r {
            return Err(TapeError::IndexOutOfRange {
                op: "slice_rows",
                index: start + len,
                bound: r,
            });
        }
        let out = self.nodes[a.0].values[start * c..(start + len) * c].to_vec();
        let rg = self.requires(a);
        Ok(self.push(len, c, out, rg, Op::SliceRows(a, start)))
    }

    /// Row k of the output is row `index[k]` of `a`; the gradient
    /// scatter-adds back.
    pub fn gather_rows(&mut self, a: NodeId, index: Rc<[usize]>) -> Result<NodeId, TapeError> {
        let (r, c) = self.shape(a);
        for &i in index.iter() {
            if i >= r {
                return Err(TapeError::IndexOutOfRange {
                    op: "gather_rows",
                    index: i,
                    bound: r,
                });
            }
        }
        let mut out = vec![0.0; index.len() * c];
        for (k, &i) in index.iter().enumerate() {
            out[k * c..(k + 1) * c]
                .copy_from_slice(&self.nodes[a.0].values[i * c..(i + 1) * c]);
        }
        let rg = self.requires(a);
        Ok(self.push(index.len(), c, out, rg, Op::GatherRows(a, index)))
    }

    /// Row s of the output is the sum of input rows with segment id s;
    /// empty segments give zero rows.
    pub fn segment_sum(
        &mut self,
        a: NodeId,
        segments: Rc<[usize]>,
        segment_count: usize,
    ) -> Result<NodeId, TapeError> {
        let (r, c) = self.shape(a);
        if segments.len() != r {
            return Err(TapeError::ShapeMismatch {
                op: "segment_sum",
                left: (r, c),
                right: (segments.len(), 1),
            });
        }
        for &s in segments.iter() {
            if s >= segment_count {
                return Err(TapeError::IndexOutOfRange {
                    op: "segment_sum",
                    index: s,
                    bound: segment_count,
                });
            }
        }
        let mut out = vec![0.0; segment_count * c];
        for (k, &s) in segments.iter().enumerate() {
            let src = &self.nodes[a.0].values[k * c..(k + 1) * c];
            let dst = &mut out[s * c..(s + 1) * c];
            for (d, x) in dst.iter_mut().zip(src) {
                *d += x;
            }
        }
        let rg = self.requires(a);
        Ok(self.push(segment_count, c, out, rg, Op::SegmentSum(a, segments)))
    }

    /// Softmax over single-column logits, independently per segment,
    /// with max-subtraction. Rows of a segment sum to one.
    pub fn segment_softmax(
        &mut self,
        a: NodeId,
        segments: Rc<[usize]>,
        segment_count: usize,
    ) -> Result<NodeId, TapeError> {
        let (r, c) = self.shape(a);
        if c != 1 || segments.len() != r {
            return Err(TapeError::ShapeMismatch {
                op: "segment_softmax",
                left: (r, c),
                right: (segments.len(), 1),
            });
        }
        for &s in segments.iter() {
            if s >= segment_count {
                return Err(TapeError::IndexOutOfRange {
                    op: "segment_softmax",
                    index: s,
                    bound: segment_count,
                });
            }
        }
        let vals = &self.nodes[a.0].values;
        let mut maxes = vec![f64::NEG_INFINITY; segment_count];
        for (k, &s) in segments.iter().enumerate() {
            maxes[s] = maxes[s].max(vals[k]);
        }
        let mut out: Vec<f64> = segments
            .iter()
            .zip(vals)
            .map(|(&s, &v)| math::exp(v - maxes[s]))
            .collect();
        let mut denom = vec![0.0; segment_count];
        for (k, &s) in segments.iter().enumerate() {
            denom[s] += out[k];
        }
        for (k, &s) in segments.iter().enumerate() {
            out[k] /= denom[s];
        }
        let rg = self.requires(a);
        Ok(self.push(r, 1, out, rg, Op::SegmentSoftmax(a, segments)))
    }

    /// Scales row k of `a` by the scalar `s[k]` (s is m x 1).
    pub fn mul_rows(&mut self, a: NodeId, s: NodeId) -> Result<NodeId, TapeError> {
        let (r, c) = self.shape(a);
        let ss = self.shape(s);
        if ss != (r, 1) {
            return Err(TapeError::ShapeMismatch {
                op: "mul_rows",
                left: (r, c),
                right: ss,
            });
        }
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let f = self.nodes[s.0].values[i];
            for (o, x) in out[i * c..(i + 1) * c]
                .iter_mut()
                .zip(&self.nodes[a.0].values[i * c..(i + 1) * c])
            {
                *o = f * x;
            }
        }
        let rg = self.requires(a) || self.requires(s);
        Ok(self.push(r, c, out, rg, Op::MulRows(a, s)))
    }

    /// Leaky ReLU; the subgradient at zero takes the positive branch.
    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> NodeId {
        let (r, c) = self.shape(a);
        let out = self.nodes[a.0]
            .values
            .iter()
            .map(|&x| if x >= 0.0 { x } else { slope * x })
            .collect();
        let rg = self.requires(a);
        self.push(r, c, out, rg, Op::LeakyRelu(a, slope))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let out = self.nodes[a.0]
            .values
            .iter()
            .map(|&x| if x >= 0.0 { x } else { 0.0 })
            .collect();
        let rg = self.requires(a);
        self.push(r, c, out, rg, Op::Relu(a))
    }

    pub fn elu(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let out = self.nodes[a.0]
            .values
            .iter()
            .map(|&x| if x >= 0.0 { x } else { math::exp(x) - 1.0 })
            .collect();
        let rg = self.requires(a);
        self.push(r, c, out, rg, Op::Elu(a))
    }

    /// Inverted dropout: each entry kept with probability `keep` and
    /// scaled by 1/keep. Identity when not training or keep == 1.
    pub fn dropout(&mut self, a: NodeId, keep: f64, rng: &mut Rng, training: bool) -> NodeId {
        assert!(keep > 0.0 && keep <= 1.0, "keep probability in (0, 1]");
        if !training || keep >= 1.0 {
            return a;
        }
        let (r, c) = self.shape(a);
        let inv = 1.0 / keep;
        let mask: Vec<f64> = (0..r * c)
            .map(|_| if rng.next_f64() < keep { inv } else { 0.0 })
            .collect();
        let out = self.nodes[a.0]
            .values
            .iter()
            .zip(&mask)
            .map(|(x, m)| x * m)
            .collect();
        let rg = self.requires(a);
        self.push(r, c, out, rg, Op::Dropout(a, mask))
    }

    /// Adds a 1 x c bias row to every row of `a`.
    pub fn add_row_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId, TapeError> {
        let (r, c) = self.shape(a);
        let bs = self.shape(bias);
        if bs != (1, c) {
            return Err(TapeError::ShapeMismatch {
                op: "add_row_bias",
                left: (r, c),
                right: bs,
            });
        }
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[i * c + j] =
                    self.nodes[a.0].values[i * c + j] + self.nodes[bias.0].values[j];
            }
        }
        let rg = self.requires(a) || self.requires(bias);
        Ok(self.push(r, c, out, rg, Op::AddRowBias(a, bias)))
    }

    /// Stable softmax along each row.
    pub fn row_softmax(&mut self, a: NodeId) -> NodeId {
        let (r, c) = self.shape(a);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &self.nodes[a.0].values[i * c..(i + 1) * c];
            let m = row.iter().fold(f64::NEG_INFINITY, |acc, &x| acc.max(x));
            let mut denom = 0.0;
            for j in 0..c {
                let e = math::exp(row[j] - m);
                out[i * c + j] = e;
                denom += e;
            }
            for j in 0..c {
                out[i * c + j] /= denom;
            }
        }
        let rg = self.requires(a);
        self.push(r, c, out, rg, Op::RowSoftmax(a))
    }

    /// Mean over masked rows of -log softmax(logits)[label], computed
    /// with log-sum-exp. The gradient is zero outside the mask.
    pub fn masked_softmax_cross_entropy(
        &mut self,
        logits: NodeId,
        labels: Rc<[usize]>,
        mask: Rc<[usize]>,
    ) -> Result<NodeId, TapeError> {
        let (r, c) = self.shape(logits);
        if mask.is_empty() {
            return Err(TapeError::EmptyMask);
        }
        if labels.len() != r {
            return Err(TapeError::ShapeMismatch {
                op: "masked_ce",
                left: (r, c),
                right: (labels.len(), 1),
            });
        }
        for &row in mask.iter() {
            if row >= r {
                return Err(TapeError::IndexOutOfRange {
                    op: "masked_ce",
                    index: row,
                    bound: r,
                });
            }
            if labels[row] >= c {
                return Err(TapeError::IndexOutOfRange {
                    op: "masked_ce",
                    index: labels[row],
                    bound: c,
                });
            }
        }
        let vals = &self.nodes[logits.0].values;
        let mut probs = vec![0.0; mask.len() * c];
        let mut total = 0.0;
        for (k, &row) in mask.iter().enumerate() {
            let x = &vals[row * c..(row + 1) * c];
            let m = x.iter().fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
            let mut sum = 0.0;
            for j in 0..c {
                let e = math::exp(x[j] - m);
                probs[k * c + j] = e;
                sum += e;
            }
            for j in 0..c {
                probs[k * c + j] /= sum;
            }
            let lse = m + math::ln(sum);
            total += lse - x[labels[row]];
        }
        let loss = total / mask.len() as f64;
        let rg = self.requires(logits);
        Ok(self.push(
            1,
            1,
            vec![loss],
            rg,
            Op::MaskedCe {
                logits,
                labels,
                mask,
                probs,
            },
        ))
    }

    /// Sum of all entries, as a 1 x 1 tensor.
    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let total: f64 = self.nodes[a.0].values.iter().sum();
        let rg = self.requires(a);
        self.push(1, 1, vec![total], rg, Op::SumAll(a))
    }

    /// Reverse sweep from a scalar loss. Populates gradients for every
    /// node that requires them; each record is visited exactly once.
    pub fn backward(&mut self, loss: NodeId) -> Result<(), TapeError> {
        let (r, c) = self.shape(loss);
        if (r, c) != (1, 1) {
            return Err(TapeError::NonScalarLoss { rows: r, cols: c });
        }
        for g in &mut self.grads {
            g.clear();
        }
        self.grads[loss.0] = vec![1.0];
        self.backward_visits = 0;
        for idx in (0..=loss.0).rev() {
            self.backward_visits += 1;
            if !self.nodes[idx].requires_grad || self.grads[idx].is_empty() {
                continue;
            }
            let g = core::mem::take(&mut self.grads[idx]);
            self.propagate(idx, &g);
            self.grads[idx] = g;
        }
        Ok(())
    }

    fn ensure_grad(&mut self, id: NodeId) {
        if self.grads[id.0].is_empty() {
            let n = &self.nodes[id.0];
            self.grads[id.0] = vec![0.0; n.rows * n.cols];
        }
    }

    fn propagate(&mut self, idx: usize, g: &[f64]) {
        // Parents always precede their children, so `idx`'s gradient
        // is final when this runs.
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (a, b) = (*a, *b);
                let (ar, ak) = self.shape(a);
                let (_, bc) = self.shape(b);
                if self.requires(a) {
                    self.ensure_grad(a);
                    let da = core::mem::take(&mut self.grads[a.0]);
                    let mut da = da;
                    // dA = dC * B^T, row by row.
                    matmul_bt_acc(&mut da, g, &self.nodes[b.0].values, ar, bc, ak);
                    self.grads[a.0] = da;
                }
                if self.requires(b) {
                    self.ensure_grad(b);
                    let db = core::mem::take(&mut self.grads[b.0]);
                    let mut db = db;
                    let avals = &self.nodes[a.0].values;
                    // dB = A^T * dC; skipping exact zeros of A keeps
                    // the per-cell accumulation order intact.
                    for i in 0..ar {
                        for (k, &aik) in avals[i * ak..(i + 1) * ak].iter().enumerate() {
                            if aik != 0.0 {
                                let grow = &g[i * bc..(i + 1) * bc];
                                let drow = &mut db[k * bc..(k + 1) * bc];
                                for (d, &gv) in drow.iter_mut().zip(grow) {
                                    *d += aik * gv;
                                }
                            }
                        }
                    }
                    self.grads[b.0] = db;
                }
            }
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                for p in [a, b] {
                    if self.requires(p) {
                        self.ensure_grad(p);
                        for (d, &gv) in self.grads[p.0].iter_mut().zip(g) {
                            *d += gv;
                        }
                    }
                }
            }
            Op::Scale(a, f) => {
                let (a, f) = (*a, *f);
                if self.requires(a) {
                    self.ensure_grad(a);
                    for (d, &gv) in self.grads[a.0].iter_mut().zip(g) {
                        *d += f * gv;
                    }
                }
            }
            Op::ConcatCols(a, b) => {
                let (a, b) = (*a, *b);
                let (r, ac) = self.shape(a);
                let (_, bc) = self.shape(b);
                let cc = ac + bc;
                if self.requires(a) {
                    self.ensure_grad(a);
                    for i in 0..r {
                        for j in 0..ac {
                            self.grads[a.0][i * ac + j] += g[i * cc + j];
                        }
                    }
                }
                if self.requires(b) {
                    self.ensure_grad(b);
                    for i in 0..r {
                        for j in 0..bc {
                            self.grads[b.0][i * bc + j] += g[i * cc + ac + j];
                        }
                    }
                }
            }
            Op::SliceRows(a, start) => {
                let (a, start) = (*a, *start);
                if self.requires(a) {
                    let (_, c) = self.shape(a);
                    self.ensure_grad(a);
                    for (k, &gv) in g.iter().enumerate() {
                        self.grads[a.0][start * c + k] += gv;
                    }
                }
            }
            Op::GatherRows(a, index) => {
                let a = *a;
                let index = index.clone();
                if self.requires(a) {
                    let (_, c) = self.shape(a);
                    self.ensure_grad(a);
                    for (k, &i) in index.iter().enumerate() {
                        let dst = &mut self.grads[a.0][i * c..(i + 1) * c];
                        for (d, &gv) in dst.iter_mut().zip(&g[k * c..(k + 1) * c]) {
                            *d += gv;
                        }
                    }
                }
            }
            Op::SegmentSum(a, segments) => {
                let a = *a;
                let segments = segments.clone();
                if self.requires(a) {
                    let (_, c) = self.shape(a);
                    self.ensure_grad(a);
                    for (k, &s) in segments.iter().enumerate() {
                        let dst = &mut self.grads[a.0][k * c..(k + 1) * c];
                        for (d, &gv) in dst.iter_mut().zip(&g[s * c..(s + 1) * c]) {
                            *d += gv;
                        }
                    }
                }
            }
            Op::SegmentSoftmax(a, segments) => {
                let a = *a;
                let segments = segments.clone();
                if self.requires(a) {
                    self.ensure_grad(a);
                    let y = &self.nodes[idx].values;
                    let count = segments.iter().copied().max().map_or(0, |m| m + 1);
                    let mut dots = vec![0.0; count];
                    for (k, &s) in segments.iter().enumerate() {
                        dots[s] += g[k] * y[k];
                    }
                    let da = core::mem::take(&mut self.grads[a.0]);
                    let mut da = da;
                    for (k, &s) in segments.iter().enumerate() {
                        da[k] += y[k] * (g[k] - dots[s]);
                    }
                    self.grads[a.0] = da;
                }
            }
            Op::MulRows(a, s) => {
                let (a, s) = (*a, *s);
                let (r, c) = self.shape(a);
                if self.requires(a) {
                    self.ensure_grad(a);
                    let da = core::mem::take(&mut self.grads[a.0]);
                    let mut da = da;
                    for i in 0..r {
                        let f = self.nodes[s.0].values[i];
                        for (d, &gv) in da[i * c..(i + 1) * c]
                            .iter_mut()
                            .zip(&g[i * c..(i + 1) * c])
                        {
                            *d += f * gv;
                        }
                    }
                    self.grads[a.0] = da;
                }
                if self.requires(s) {
                    self.ensure_grad(s);
                    let ds = core::mem::take(&mut self.grads[s.0]);
                    let mut ds = ds;
                    for i in 0..r {
                        let mut dot = 0.0;
                        for (x, &gv) in self.nodes[a.0].values[i * c..(i + 1) * c]
                            .iter()
                            .zip(&g[i * c..(i + 1) * c])
                        {
                            dot += x * gv;
                        }
                        ds[i] += dot;
                    }
                    self.grads[s.0] = ds;
                }
            }
            Op::LeakyRelu(a, slope) => {
                let (a, slope) = (*a, *slope);
                if self.requires(a) {
                    self.ensure_grad(a);
                    let da = core::mem::take(&mut self.grads[a.0]);
                    let mut da = da;
                    for ((d, &x), &gv) in da.iter_mut().zip(&self.nodes[a.0].values).zip(g) {
                        *d += if x >= 0.0 { gv } else { slope * gv };
                    }
                    self.grads[a.0] = da;
                }
            }
            Op::Relu(a) => {
                let a = *a;
                if self.requires(a) {
                    self.ensure_grad(a);
                    let da = core::mem::take(&mut self.grads[a.0]);
                    let mut da = da;
                    for ((d, &x), &gv) in da.iter_mut().zip(&self.nodes[a.0].values).zip(g) {
                        *d += if x >= 0.0 { gv } else { 0.0 };
                    }
                    self.grads[a.0] = da;
                }
            }
            Op::Elu(a) => {
                let a = *a;
                if self.requires(a) {
                    self.ensure_grad(a);
                    let da = core::mem::take(&mut self.grads[a.0]);
                    let mut da = da;
                    let y = &self.nodes[idx].values;
                    for (k, (d, &gv)) in da.iter_mut().zip(g).enumerate() {
                        let x = self.nodes[a.0].values[k];
                        *d += if x >= 0.0 { gv } else { gv * (y[k] + 1.0) };
                    }
                    self.grads[a.0] = da;
                }
            }
            Op::Dropout(a, _) => {
                let a = *a;
                if self.requires(a) {
                    self.ensure_grad(a);
                    let da = core::mem::take(&mut self.grads[a.0]);
                    let mut da = da;
                    let mask = match &self.nodes[idx].op {
                        Op::Dropout(_, m) => m,
                        _ => unreachable!(),
                    };
                    for ((d, &m), &gv) in da.iter_mut().zip(mask.iter()).zip(g) {
                        *d += m * gv;
                    }
                    self.grads[a.0] = da;
                }
            }
            Op::AddRowBias(a, bias) => {
                let (a, bias) = (*a, *bias);
                let (r, c) = self.shape(a);
                if self.requires(a) {
                    self.ensure_grad(a);
                    for (d, &gv) in self.grads[a.0].iter_mut().zip(g) {
                        *d += gv;
                    }
                }
                if self.requires(bias) {
                    self.ensure_grad(bias);
                    for i in 0..r {
                        for j in 0..c {
                            self.grads[bias.0][j] += g[i * c + j];
                        }
                    }
                }
            }
            Op::RowSoftmax(a) => {
                let a = *a;
                if self.requires(a) {
                    self.ensure_grad(a);
                    let (r, c) = self.shape(a);
                    let y = &self.nodes[idx].values;
                    let da = core::mem::take(&mut self.grads[a.0]);
                    let mut da = da;
                    for i in 0..r {
                        let mut dot = 0.0;
                        for j in 0..c {
                            dot += g[i * c + j] * y[i * c + j];
                        }
                        for j in 0..c {
                            da[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
                        }
                    }
                    self.grads[a.0] = da;
                }
            }
            Op::MaskedCe { logits, .. } => {
                let logits = *logits;
                if self.requires(logits) {
                    let (labels, mask, probs) = match &self.nodes[idx].op {
                        Op::MaskedCe {
                            labels,
                            mask,
                            probs,
                            ..
                        } => (labels.clone(), mask.clone(), probs.clone()),
                        _ => unreachable!(),
                    };
                    let (_, c) = self.shape(logits);
                    let scale = g[0] / mask.len() as f64;
                    self.ensure_grad(logits);
                    let dl = core::mem::take(&mut self.grads[logits.0]);
                    let mut dl = dl;
                    for (k, &row) in mask.iter().enumerate() {
                        for j in 0..c {
                            let onehot = if labels[row] == j { 1.0 } else { 0.0 };
                            dl[row * c + j] += scale * (probs[k * c + j] - onehot);
                        }
                    }
                    self.grads[logits.0] = dl;
                }
            }
            Op::SumAll(a) => {
                let a = *a;
                if self.requires(a) {
                    self.ensure_grad(a);
                    for d in self.grads[a.0].iter_mut() {
                        *d += g[0];
                    }
                }
            }
        }
    }
}

#[cfg(feature = "parallel")]
const PAR_THRESHOLD: usize = 1 << 21;

/// out += a * b where a is r x k and b is k x c. Accumulation over k
/// is ascending per output cell; exact zeros in `a` contribute nothing
/// and are skipped. Row-parallel execution is bit-identical to the
/// sequential sweep.
fn matmul_acc(out: &mut [f64], a: &[f64], b: &[f64], r: usize, k: usize, c: usize) {
    let row = |i: usize, orow: &mut [f64]| {
        for (kk, &aik) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aik != 0.0 {
                let brow = &b[kk * c..(kk + 1) * c];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += aik * bv;
                }
            }
        }
    };
    #[cfg(feature = "parallel")]
    {
        if r * k * c >= PAR_THRESHOLD && r > 1 {
            use rayon::prelude::*;
            out.par_chunks_mut(c)
                .enumerate()
                .for_each(|(i, orow)| row(i, orow));
            return;
        }
    }
    for i in 0..r {
        row(i, &mut out[i * c..(i + 1) * c]);
    }
}

/// out += g * b^T where g is r x c and b is k x c (so out is r x k).
fn matmul_bt_acc(out: &mut [f64], g: &[f64], b: &[f64], r: usize, c: usize, k: usize) {
    let row = |i: usize, orow: &mut [f64]| {
        let grow = &g[i * c..(i + 1) * c];
        for (kk, o) in orow.iter_mut().enumerate() {
            let brow = &b[kk * c..(kk + 1) * c];
            let mut dot = 0.0;
            for (&gv, &bv) in grow.iter().zip(brow) {
                dot += gv * bv;
            }
            *o += dot;
        }
    };
    #[cfg(feature = "parallel")]
    {
        if r * k * c >= PAR_THRESHOLD && r > 1 {
            use rayon::prelude::*;
            out.par_chunks_mut(k)
                .enumerate()
                .for_each(|(i, orow)| row(i, orow));
            return;
        }
    }
    for i in 0..r {
        row(i, &mut out[i * k..(i + 1) * k]);
    }
}
