//! Directed graphs, fully-adjacent edge sets, and the reachability statistics
//! used for under-reaching analysis.

mod io;

pub use io::{parse_graph, write_graph};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;
use thiserror::Error;

pub type Edge = (usize, usize);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("edge ({src}, {dst}) has an endpoint outside 0..{num_nodes}")]
    Endpoint { src: usize, dst: usize, num_nodes: usize },
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("node {0} out of range")]
    Node(usize),
    #[error("fraction {0} outside [0, 1]")]
    Fraction(f64),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Leaf,
    Intermediate,
    Root,
    Generic,
}

impl NodeKind {
    pub fn name(self) -> &'static str {
        match self {
            NodeKind::Leaf => "leaf",
            NodeKind::Intermediate => "intermediate",
            NodeKind::Root => "root",
            NodeKind::Generic => "generic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "leaf" => Some(NodeKind::Leaf),
            "intermediate" => Some(NodeKind::Intermediate),
            "root" | "target" => Some(NodeKind::Root),
            "generic" => Some(NodeKind::Generic),
            _ => None,
        }
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Node set with directed, single-typed edges and per-node annotations.
///
/// Edges are `(src, dst)`: a message flows from `src` into `dst`, so the
/// neighborhood `N_v` of a node is the set of sources of its in-edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<Edge>,
    edge_types: Option<Vec<u32>>,
    node_kind: Vec<NodeKind>,
    node_label: Vec<Option<usize>>,
    node_count: Vec<Option<usize>>,
    target: Option<usize>,
}

impl Graph {
    pub fn new(num_nodes: usize, edges: Vec<Edge>) -> Result<Self, GraphError> {
        let mut seen = HashSet::with_capacity(edges.len());
        for &(src, dst) in &edges {
            if src >= num_nodes || dst >= num_nodes {
                return Err(GraphError::Endpoint { src, dst, num_nodes });
            }
            if !seen.insert((src, dst)) {
                return Err(GraphError::DuplicateEdge(src, dst));
            }
        }
        Ok(Self {
            num_nodes,
            edges,
            edge_types: None,
            node_kind: vec![NodeKind::Generic; num_nodes],
            node_label: vec![None; num_nodes],
            node_count: vec![None; num_nodes],
            target: None,
        })
    }

    /// Undirected path `0 - 1 - ... - (n-1)`, stored as both directions.
    pub fn path(n: usize) -> Self {
        let mut edges = Vec::new();
        for i in 1..n {
            edges.push((i - 1, i));
            edges.push((i, i - 1));
        }
        Self::new(n, edges).expect("path edges are valid")
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_types(&self) -> Option<&[u32]> {
        self.edge_types.as_deref()
    }

    pub fn set_edge_types(&mut self, types: Vec<u32>) -> Result<(), GraphError> {
        if types.len() != self.edges.len() {
            return Err(GraphError::Node(types.len()));
        }
        self.edge_types = Some(types);
        Ok(())
    }

    pub fn kind(&self, v: usize) -> NodeKind {
        self.node_kind[v]
    }

    pub fn kinds(&self) -> &[NodeKind] {
        &self.node_kind
    }

    pub fn label(&self, v: usize) -> Option<usize> {
        self.node_label[v]
    }

    pub fn count(&self, v: usize) -> Option<usize> {
        self.node_count[v]
    }

    pub fn target(&self) -> Option<usize> {
        self.target
    }

    pub fn set_kind(&mut self, v: usize, kind: NodeKind) -> Result<(), GraphError> {
        *self.node_kind.get_mut(v).ok_or(GraphError::Node(v))? = kind;
        if self.target == Some(v) && kind != NodeKind::Root {
            self.target = None;
        }
        Ok(())
    }

    pub fn set_label(&mut self, v: usize, label: Option<usize>) -> Result<(), GraphError> {
        *self.node_label.get_mut(v).ok_or(GraphError::Node(v))? = label;
        Ok(())
    }

    pub fn set_count(&mut self, v: usize, count: Option<usize>) -> Result<(), GraphError> {
        *self.node_count.get_mut(v).ok_or(GraphError::Node(v))? = count;
        Ok(())
    }

    /// Designates the target node; its kind becomes [`NodeKind::Root`].
    pub fn set_target(&mut self, v: usize) -> Result<(), GraphError> {
        if v >= self.num_nodes {
            return Err(GraphError::Node(v));
        }
        self.node_kind[v] = NodeKind::Root;
        self.target = Some(v);
        Ok(())
    }

    /// In-neighbor lists: `in_neighbors()[v]` holds every `u` with an edge `u → v`.
    pub fn in_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            adj[v].push(u);
        }
        adj
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        in_degrees(self.num_nodes, &self.edges)
    }
}

pub fn in_degrees(num_nodes: usize, edges: &[Edge]) -> Vec<usize> {
    let mut deg = vec![0; num_nodes];
    for &(_, v) in edges {
        deg[v] += 1;
    }
    deg
}

/// All ordered pairs `(u, v)` with `u ≠ v`, in lexicographic order.
pub fn fa_edges(n: usize) -> Vec<Edge> {
    fa_edges_with(n, false)
}

/// Fully-adjacent edge set; `include_self` adds the `n` self-pairs.
pub fn fa_edges_with(n: usize, include_self: bool) -> Vec<Edge> {
    let mut edges = Vec::with_capacity(n * n);
    for u in 0..n {
        for v in 0..n {
            if u != v || include_self {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Uniform sample of `floor(p · |fa_edges(n)|)` fully-adjacent edges, kept in
/// lexicographic order. Deterministic in `seed`.
pub fn partial_fa_edges(n: usize, p: f64, seed: u64) -> Result<Vec<Edge>, GraphError> {
    partial_fa_edges_with(n, p, seed, false)
}

pub fn partial_fa_edges_with(n: usize, p: f64, seed: u64, include_self: bool) -> Result<Vec<Edge>, GraphError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(GraphError::Fraction(p));
    }
    let all = fa_edges_with(n, include_self);
    let keep = (p * all.len() as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = index::sample(&mut rng, all.len(), keep).into_vec();
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| all[i]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diameter {
    Finite(usize),
    Unreachable,
}

impl Diameter {
    pub fn finite(self) -> Option<usize> {
        match self {
            Diameter::Finite(d) => Some(d),
            Diameter::Unreachable => None,
        }
    }
}

/// Longest BFS shortest-path length over all ordered node pairs.
pub fn diameter(g: &Graph, undirected: bool) -> Diameter {
    let n = g.num_nodes();
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(u, v) in g.edges() {
        out[u].push(v);
        if undirected {
            out[v].push(u);
        }
    }
    let mut best = 0;
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[s] = 0;
        queue.clear();
        queue.push_back(s);
        let mut reached = 1;
        while let Some(u) = queue.pop_front() {
            for &w in &out[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    best = best.max(dist[w]);
                    reached += 1;
                    queue.push_back(w);
                }
            }
        }
        if reached < n {
            return Diameter::Unreachable;
        }
    }
    Diameter::Finite(best)
}

/// Nodes whose information can reach `v` within `k` message-passing steps:
/// `N¹ = N_v` and `Nᵏ = Nᵏ⁻¹ ∪ { w | (w, u) ∈ E, u ∈ Nᵏ⁻¹ }`.
pub fn receptive_field(g: &Graph, v: usize, k: usize) -> Result<BTreeSet<usize>, GraphError> {
    if v >= g.num_nodes() {
        return Err(GraphError::Node(v));
    }
    let adj = g.in_neighbors();
    let mut field: BTreeSet<usize> = adj[v].iter().copied().collect();
    let mut frontier: Vec<usize> = field.iter().copied().collect();
    for _ in 1..k {
        let mut next = Vec::new();
        for &u in &frontier {
            for &w in &adj[u] {
                if field.insert(w) {
                    next.push(w);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    Ok(field)
}
