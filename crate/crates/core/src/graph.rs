//! Compressed sparse representation of a directed graph with both
//! out- and in-adjacency.
//!
//! Arcs are kept sorted lexicographically by (src, dst) and addressed
//! by their position in that order; every derived structure (dual
//! graphs, per-arc feature rows) references arcs by id, never by pair.

use alloc::fmt;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphError {
    IndexOutOfRange { position: usize, id: usize, n: usize },
    DuplicateArc { src: usize, dst: usize },
    ModeRequiresUndirected,
}

impl fmt::Display for GraphError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphError::IndexOutOfRange { position, id, n } => write!(
                f,
                "arc {position}: vertex id {id} out of range for graph on {n} vertices"
            ),
            GraphError::DuplicateArc { src, dst } => {
                write!(f, "duplicate arc ({src}, {dst}) with dedupe disabled")
            }
            GraphError::ModeRequiresUndirected => {
                write!(f, "classic line-graph mode requires a bidirected primal graph")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for GraphError {}

#[derive(Clone, Debug)]
pub struct DirectedGraph {
    n: usize,
    /// Sorted by (src, dst); arc id = index.
    arcs: Vec<(usize, usize)>,
    out_offsets: Vec<usize>,
    in_offsets: Vec<usize>,
    /// Source vertex per incoming slot, grouped by destination.
    in_sources: Vec<usize>,
    /// Arc id per incoming slot, aligned with `in_sources`.
    in_arc_ids: Vec<usize>,
    is_bidirected: bool,
    has_self_loops: bool,
}

impl DirectedGraph {
    /// Builds a graph from (src, dst) pairs.
    ///
    /// Arcs are sorted and, when `dedupe` is set, duplicates collapse;
    /// otherwise a duplicate is an error. Out-of-range endpoints are
    /// always an error.
    pub fn from_edge_list(
        pairs: &[(usize, usize)],
        n: usize,
        dedupe: bool,
    ) -> Result<Self, GraphError> {
        for (position, &(src, dst)) in pairs.iter().enumerate() {
            if src >= n {
                return Err(GraphError::IndexOutOfRange { position, id: src, n });
            }
            if dst >= n {
                return Err(GraphError::IndexOutOfRange { position, id: dst, n });
            }
        }
        let mut arcs = pairs.to_vec();
        arcs.sort_unstable();
        if dedupe {
            arcs.dedup();
        } else if let Some(w) = arcs.windows(2).find(|w| w[0] == w[1]) {
            return Err(GraphError::DuplicateArc { src: w[0].0, dst: w[0].1 });
        }
        Ok(Self::from_sorted_arcs(n, arcs))
    }

    /// `arcs` must be sorted and deduped.
    fn from_sorted_arcs(n: usize, arcs: Vec<(usize, usize)>) -> Self {
        let m = arcs.len();
        let mut out_offsets = vec![0usize; n + 1];
        let mut in_degree = vec![0usize; n];
        let mut has_self_loops = false;
        for &(src, dst) in &arcs {
            out_offsets[src + 1] += 1;
            in_degree[dst] += 1;
            has_self_loops |= src == dst;
        }
        for v in 0..n {
            out_offsets[v + 1] += out_offsets[v];
        }
        let mut in_offsets = vec![0usize; n + 1];
        for v in 0..n {
            in_offsets[v + 1] = in_offsets[v] + in_degree[v];
        }
        let mut cursor = in_offsets[..n].to_vec();
        let mut in_sources = vec![0usize; m];
        let mut in_arc_ids = vec![0usize; m];
        for (id, &(src, dst)) in arcs.iter().enumerate() {
            let slot = cursor[dst];
            in_sources[slot] = src;
            in_arc_ids[slot] = id;
            cursor[dst] += 1;
        }
        let mut g = DirectedGraph {
            n,
            arcs,
            out_offsets,
            in_offsets,
            in_sources,
            in_arc_ids,
            is_bidirected: false,
            has_self_loops,
        };
        g.is_bidirected = g
            .arcs
            .iter()
            .all(|&(src, dst)| src == dst || g.arc_index(dst, src).is_some());
        g
    }

    /// Adds the reverse of every arc. Idempotent.
    pub fn to_bidirected(&self) -> DirectedGraph {
        if self.is_bidirected {
            return self.clone();
        }
        let mut arcs = self.arcs.clone();
        arcs.extend(self.arcs.iter().map(|&(s, d)| (d, s)));
        arcs.sort_unstable();
        arcs.dedup();
        Self::from_sorted_arcs(self.n, arcs)
    }

    /// Adds an (i, i) arc for every vertex. Idempotent.
    pub fn add_self_loops(&self) -> DirectedGraph {
        let mut arcs = self.arcs.clone();
        arcs.extend((0..self.n).map(|v| (v, v)));
        arcs.sort_unstable();
        arcs.dedup();
        Self::from_sorted_arcs(self.n, arcs)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn arcs(&self) -> &[(usize, usize)] {
        &self.arcs
    }

    pub fn arc(&self, id: usize) -> (usize, usize) {
        self.arcs[id]
    }

    pub fn is_bidirected(&self) -> bool {
        self.is_bidirected
    }

    pub fn has_self_loops(&self) -> bool {
        self.has_self_loops
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.out_offsets[v + 1] - self.out_offsets[v]
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.in_offsets[v + 1] - self.in_offsets[v]
    }

    /// Arc ids leaving `v`, ascending (arcs are grouped by source).
    pub fn out_arc_ids(&self, v: usize) -> core::ops::Range<usize> {
        self.out_offsets[v]..self.out_offsets[v + 1]
    }

    /// Arc ids entering `v`, ascending.
    pub fn in_arc_ids(&self, v: usize) -> &[usize] {
        &self.in_arc_ids[self.in_offsets[v]..self.in_offsets[v + 1]]
    }

    /// Sources of arcs entering `v`, ascending.
    pub fn in_sources(&self, v: usize) -> &[usize] {
        &self.in_sources[self.in_offsets[v]..self.in_offsets[v + 1]]
    }

    /// Binary search over the sorted arc list.
    pub fn arc_index(&self, src: usize, dst: usize) -> Option<usize> {
        self.arcs.binary_search(&(src, dst)).ok()
    }

    /// Reverse arc id per arc, or None when the reverse is absent.
    /// A self-loop is its own reverse.
    pub fn reverse_arcs(&self) -> Vec<Option<usize>> {
        self.arcs
            .iter()
            .map(|&(s, d)| self.arc_index(d, s))
            .collect()
    }

    /// Weak connectivity: one component in the underlying undirected
    /// graph. Vacuously true for the empty graph.
    pub fn connected(&self) -> bool {
        if self.n == 0 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut visited = 1;
        while let Some(v) = stack.pop() {
            let outs = self.out_arc_ids(v).map(|a| self.arcs[a].1);
            let ins = self.in_sources(v).iter().copied();
            for u in outs.chain(ins) {
                if !seen[u] {
                    seen[u] = true;
                    visited += 1;
                    stack.push(u);
                }
            }
        }
        visited == self.n
    }
}

/// Weak connectivity of a symmetric CSR adjacency (used for duals).
pub(crate) fn connected_csr(n: usize, offsets: &[usize], targets: &[usize]) -> bool {
    if n == 0 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut visited = 1;
    while let Some(v) = stack.pop() {
        for &u in &targets[offsets[v]..offsets[v + 1]] {
            if !seen[u] {
                seen[u] = true;
                visited += 1;
                stack.push(u);
            }
        }
    }
    visited == n
}
