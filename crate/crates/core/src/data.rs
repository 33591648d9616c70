//! Split management, feature preprocessing, and link-direction task
//! construction. File parsing lives in the companion crate; these are
//! the pure parts.

use alloc::fmt;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::graph::DirectedGraph;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DataError {
    OverlappingSplits { id: usize },
    UnknownId { id: usize, n: usize },
    InfeasibleSplit { requested: usize, available: usize },
    TooFewEdges { candidates: usize },
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataError::OverlappingSplits { id } => {
                write!(f, "vertex {id} appears in more than one split")
            }
            DataError::UnknownId { id, n } => {
                write!(f, "split id {id} out of range for {n} vertices")
            }
            DataError::InfeasibleSplit { requested, available } => {
                write!(f, "cannot sample {requested} vertices from {available}")
            }
            DataError::TooFewEdges { candidates } => {
                write!(f, "link task needs at least one edge per split, got {candidates} candidates")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for DataError {}

/// Disjoint vertex index lists for train/validation/test.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitMasks {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SplitSpec {
    /// Verbatim id lists.
    Explicit { train: Vec<usize>, val: Vec<usize>, test: Vec<usize> },
    /// Sizes sampled with the run seed; `per_class` balances the
    /// training draw across classes.
    Sampled { train: usize, val: usize, test: usize, per_class: bool },
}

pub fn make_split(
    labels: &[usize],
    classes: usize,
    spec: &SplitSpec,
    rng: &mut Rng,
) -> Result<SplitMasks, DataError> {
    let n = labels.len();
    match spec {
        SplitSpec::Explicit { train, val, test } => {
            let mut seen = vec![false; n];
            for list in [train, val, test] {
                for &id in list {
                    if id >= n {
                        return Err(DataError::UnknownId { id, n });
                    }
                    if seen[id] {
                        return Err(DataError::OverlappingSplits { id });
                    }
                    seen[id] = true;
                }
            }
            Ok(SplitMasks { train: train.clone(), val: val.clone(), test: test.clone() })
        }
        SplitSpec::Sampled { train, val, test, per_class } => {
            if train + val + test > n {
                return Err(DataError::InfeasibleSplit {
                    requested: train + val + test,
                    available: n,
                });
            }
            let mut order: Vec<usize> = (0..n).collect();
            rng.shuffle(&mut order);
            let mut train_ids = Vec::with_capacity(*train);
            let mut taken = vec![false; n];
            if *per_class {
                let per = train / classes.max(1);
                let mut counts = vec![0usize; classes];
                for &id in &order {
                    if train_ids.len() == *train {
                        break;
                    }
                    let c = labels[id];
                    if counts[c] < per {
                        counts[c] += 1;
                        taken[id] = true;
                        train_ids.push(id);
                    }
                }
                // Top up uniformly if classes were too small.
                for &id in &order {
                    if train_ids.len() == *train {
                        break;
                    }
                    if !taken[id] {
                        taken[id] = true;
                        train_ids.push(id);
                    }
                }
            } else {
                for &id in order.iter().take(*train) {
                    taken[id] = true;
                    train_ids.push(id);
                }
            }
            if train_ids.len() < *train {
                return Err(DataError::InfeasibleSplit { requested: *train, available: n });
            }
            let rest: Vec<usize> = order.iter().copied().filter(|&id| !taken[id]).collect();
            let val_ids = rest[..*val].to_vec();
            let test_ids = rest[*val..*val + *test].to_vec();
            Ok(SplitMasks { train: train_ids, val: val_ids, test: test_ids })
        }
    }
}

/// Divides every nonzero row by its L1 norm.
pub fn row_normalize(t: &mut Tensor) {
    for r in 0..t.rows() {
        let row = t.row_mut(r);
        let norm: f64 = row.iter().map(|v| crate::math::abs(*v)).sum();
        if norm > 0.0 {
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
    }
}

/// One labeled undirected edge: the original arc ran lo -> hi when
/// `label` is 0, hi -> lo when it is 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkExample {
    pub lo: usize,
    pub hi: usize,
    pub label: usize,
}

/// Link-direction task over a directed graph: all single-direction
/// edges are candidates; disjoint fractions are drawn for
/// train/val/test. Reciprocal pairs and self-loops carry no direction
/// information and are excluded (counted).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinkTask {
    pub examples: Vec<LinkExample>,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub reciprocal_skipped: usize,
    pub self_loops_skipped: usize,
}

pub fn make_link_task(
    g: &DirectedGraph,
    fractions: (f64, f64, f64),
    rng: &mut Rng,
) -> Result<LinkTask, DataError> {
    let reverse = g.reverse_arcs();
    let mut examples = Vec::new();
    let mut reciprocal = 0usize;
    let mut loops = 0usize;
    for (id, &(s, d)) in g.arcs().iter().enumerate() {
        if s == d {
            loops += 1;
            continue;
        }
        if reverse[id].is_some() {
            reciprocal += 1;
            continue;
        }
        let (lo, hi) = (s.min(d), s.max(d));
        let label = usize::from(s > d);
        examples.push(LinkExample { lo, hi, label });
    }
    let m = examples.len();
    let n_train = (m as f64 * fractions.0) as usize;
    let n_val = (m as f64 * fractions.1) as usize;
    let n_test = (m as f64 * fractions.2) as usize;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(DataError::TooFewEdges { candidates: m });
    }
    let mut order: Vec<usize> = (0..m).collect();
    rng.shuffle(&mut order);
    Ok(LinkTask {
        examples,
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..n_train + n_val + n_test].to_vec(),
        reciprocal_skipped: reciprocal / 2,
        self_loops_skipped: loops,
    })
}
