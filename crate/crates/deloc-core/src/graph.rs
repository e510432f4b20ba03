//! Interaction graphs of sparse potentials.
//!
//! An [`InteractionGraph`] links coordinates that appear together in a term
//! of the potential. Iterated neighborhoods `N_k(i)` (everything reachable
//! from `i` in at most `k` hops, with self-loops so `i` always counts) and
//! their maximal sizes `s_k = max_i |N_k(i)|` drive the sparsity-aware bias
//! bounds: `s_k` measures how far a perturbation at one coordinate can
//! spread in `k` steps.

use std::collections::VecDeque;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("node index {index} out of range for graph with {d} nodes")]
    IndexOutOfRange { index: usize, d: usize },
    #[error("node count must be positive")]
    EmptyGraph,
    #[error("k must be >= 1")]
    ZeroK,
    #[error("malformed edge list line {line}: {reason}")]
    MalformedEdgeList { line: usize, reason: String },
}

/// Undirected interaction graph over coordinates `0..d`.
///
/// Adjacency lists are sorted and always contain the node itself (the
/// self-loop convention `i ~ i`), so `|adj(i)| = degree(i) + 1`. Immutable
/// after construction; safe to share across threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionGraph {
    d: usize,
    adjacency: Vec<Vec<usize>>,
}

impl InteractionGraph {
    /// Builds a graph on `d` nodes from undirected edges. Self-loops are
    /// implied and duplicate edges (in either orientation) are ignored.
    pub fn from_edges(d: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if d == 0 {
            return Err(GraphError::EmptyGraph);
        }
        let mut adjacency: Vec<Vec<usize>> = (0..d).map(|i| vec![i]).collect();
        for &(i, j) in edges {
            for index in [i, j] {
                if index >= d {
                    return Err(GraphError::IndexOutOfRange { index, d });
                }
            }
            if i != j {
                adjacency[i].push(j);
                adjacency[j].push(i);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { d, adjacency })
    }

    /// Path graph `0 - 1 - ... - d-1`.
    pub fn path(d: usize) -> Self {
        let edges: Vec<_> = (1..d).map(|i| (i - 1, i)).collect();
        Self::from_edges(d, &edges).expect("path edges are in range")
    }

    /// Complete graph on `d` nodes.
    pub fn complete(d: usize) -> Self {
        let mut edges = Vec::with_capacity(d * (d - 1) / 2);
        for i in 0..d {
            for j in (i + 1)..d {
                edges.push((i, j));
            }
        }
        Self::from_edges(d, &edges).expect("complete edges are in range")
    }

    /// 2D grid graph with `nx * ny` nodes; node `(x, y)` has index
    /// `y * nx + x` and is linked to its horizontal/vertical neighbors.
    pub fn lattice_2d(nx: usize, ny: usize) -> Self {
        let mut edges = Vec::new();
        for y in 0..ny {
            for x in 0..nx {
                let i = y * nx + x;
                if x + 1 < nx {
                    edges.push((i, i + 1));
                }
                if y + 1 < ny {
                    edges.push((i, i + nx));
                }
            }
        }
        Self::from_edges(nx * ny, &edges).expect("lattice edges are in range")
    }

    /// Parses the edge-list text format: one `i j` pair per line, 0-indexed,
    /// whitespace-separated. Blank lines are skipped; self-loops are implied
    /// and duplicates ignored. `d` is `max index + 1` unless a larger
    /// explicit node count is given.
    pub fn from_edge_list_text(text: &str, d: Option<usize>) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        let mut max_index = 0usize;
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let mut parse = |what: &str| -> Result<usize, GraphError> {
                fields
                    .next()
                    .ok_or_else(|| GraphError::MalformedEdgeList {
                        line: line_no + 1,
                        reason: format!("missing {what} index"),
                    })?
                    .parse::<usize>()
                    .map_err(|e| GraphError::MalformedEdgeList {
                        line: line_no + 1,
                        reason: format!("bad {what} index: {e}"),
                    })
            };
            let i = parse("first")?;
            let j = parse("second")?;
            if fields.next().is_some() {
                return Err(GraphError::MalformedEdgeList {
                    line: line_no + 1,
                    reason: "more than two fields".to_string(),
                });
            }
            max_index = max_index.max(i).max(j);
            edges.push((i, j));
        }
        if edges.is_empty() && d.is_none() {
            return Err(GraphError::EmptyGraph);
        }
        let d = d.unwrap_or(0).max(max_index + 1);
        Self::from_edges(d, &edges)
    }

    /// Number of nodes.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Sorted neighbor list of `i`, including `i` itself.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// Undirected edges `(i, j)` with `i < j`, excluding self-loops.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for (i, list) in self.adjacency.iter().enumerate() {
            for &j in list {
                if j > i {
                    edges.push((i, j));
                }
            }
        }
        edges
    }

    /// True degree of `i`, not counting the self-loop.
    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len() - 1
    }

    /// Largest true degree over all nodes.
    pub fn max_degree(&self) -> usize {
        (0..self.d).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    /// The k-hop neighborhood `N_k(i)`: all nodes reachable from `i` within
    /// `k` edge hops, returned sorted. `N_1(i) = adj(i)`, and the sets grow
    /// with `k` because of the self-loops.
    pub fn neighborhood_k(&self, i: usize, k: usize) -> Result<Vec<usize>, GraphError> {
        if i >= self.d {
            return Err(GraphError::IndexOutOfRange { index: i, d: self.d });
        }
        if k == 0 {
            return Err(GraphError::ZeroK);
        }
        let dist = self.bfs_distances(i, k);
        let mut out: Vec<usize> = (0..self.d).filter(|&j| dist[j] <= k).collect();
        out.sort_unstable();
        Ok(out)
    }

    /// BFS distances from `i`, capped at `cap` (nodes farther than `cap`
    /// report `usize::MAX`).
    fn bfs_distances(&self, i: usize, cap: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.d];
        let mut queue = VecDeque::new();
        dist[i] = 0;
        queue.push_back(i);
        while let Some(u) = queue.pop_front() {
            if dist[u] == cap {
                continue;
            }
            for &v in &self.adjacency[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// Computes `s_k = max_i |N_k(i)|` for `k = 1..=k_max`.
    ///
    /// Stops early once some `s_k` reaches `d`: the profile is then
    /// saturated and every later value equals `d`, which the returned
    /// [`SparsityProfile`] reports without storing them.
    pub fn sparsity_profile(&self, k_max: usize) -> Result<SparsityProfile, GraphError> {
        if k_max == 0 {
            return Err(GraphError::ZeroK);
        }
        // One BFS per node; bucket nodes by distance, then s_k is the max
        // over nodes of the running prefix count.
        let mut s = vec![0usize; k_max];
        let mut saturation_k = None;
        for i in 0..self.d {
            let dist = self.bfs_distances(i, k_max);
            let mut counts = vec![0usize; k_max + 1];
            for &dv in &dist {
                if dv <= k_max {
                    counts[dv] += 1;
                }
            }
            let mut reach = counts[0];
            for k in 1..=k_max {
                reach += counts[k];
                s[k - 1] = s[k - 1].max(reach);
            }
        }
        for (k0, &sk) in s.iter().enumerate() {
            if sk == self.d {
                saturation_k = Some(k0 + 1);
                break;
            }
        }
        if let Some(k0) = saturation_k {
            s.truncate(k0);
        }
        Ok(SparsityProfile {
            d: self.d,
            s,
            saturated: saturation_k.is_some(),
        })
    }
}

/// Sparsity profile `s_k = max_i |N_k(i)|` of a graph, for `k` starting
/// at 1. Nondecreasing and bounded by `d`; once `s_k = d` the profile is
/// saturated and all later values are `d` as well.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityProfile {
    d: usize,
    s: Vec<usize>,
    saturated: bool,
}

impl SparsityProfile {
    /// Profile of the complete graph: `s_k = d` for every `k`.
    pub fn complete(d: usize) -> Self {
        Self {
            d,
            s: vec![d],
            saturated: true,
        }
    }

    /// Builds a profile directly from explicit values (nondecreasing, each
    /// in `[1, d]`). Intended for synthetic profiles in bound studies.
    pub fn from_values(d: usize, s: Vec<usize>) -> Option<Self> {
        if s.is_empty() || s.windows(2).any(|w| w[0] > w[1]) {
            return None;
        }
        if s.iter().any(|&v| v == 0 || v > d) {
            return None;
        }
        let saturated = *s.last().unwrap() == d;
        Some(Self { d, s, saturated })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `s_k` for `k >= 1`; `None` when `k` lies beyond the computed range
    /// and the profile has not saturated.
    pub fn s_k(&self, k: usize) -> Option<usize> {
        if k == 0 {
            return None;
        }
        if k <= self.s.len() {
            Some(self.s[k - 1])
        } else if self.saturated {
            Some(self.d)
        } else {
            None
        }
    }

    /// Largest `k` with a stored value; beyond it `s_k` is known only if
    /// saturated.
    pub fn k_max(&self) -> usize {
        self.s.len()
    }

    pub fn is_saturated(&self) -> bool {
        self.saturated
    }

    /// Stored values `s_1..s_kmax` (saturation extends them by `d`).
    pub fn values(&self) -> &[usize] {
        &self.s
    }
}
