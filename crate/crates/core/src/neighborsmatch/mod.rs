//! Tree-NeighborsMatch benchmark generator.
//!
//! Each example is a full binary tree of depth `r` with edges directed toward
//! the root. Leaf `i` (in canonical left-to-right order) carries the
//! blue-neighbor count `i` and a label drawn from a random permutation of
//! `0..2^r`; the root carries a count, and the answer is the label of the leaf
//! with the same count. Blue nodes are never materialized: counts are encoded
//! as one-hot features.
//!
//! The chain control keeps the depth-2 tree but moves the target to the end of
//! a directed path hanging off the root, so the distance grows while the
//! information to squash does not.

mod io;

pub use io::{parse_dataset, write_dataset};

use crate::bounds::{total_examples, total_examples_u64};
use crate::graph::{Graph, NodeKind};
use num_bigint::BigUint;
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashSet;
use thiserror::Error;

/// Default upper bound on sampled examples per dataset.
pub const DEFAULT_CAP: usize = 32_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("requested {requested} examples but depth {depth} only has {available}")]
    Capacity {
        depth: u32,
        requested: usize,
        available: String,
    },
    #[error("requested {requested} examples exceeds the cap of {cap}")]
    Cap { requested: usize, cap: usize },
    #[error("depth must be between 1 and 16, got {0}")]
    Depth(u32),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Per-node input description; the model turns it into a `2C`-wide row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeEncoding {
    /// `onehot(label) ‖ onehot(count)`
    Leaf { label: usize, count: usize },
    /// `learned ‖ onehot(count)`
    Target { count: usize },
    /// `learned` of full width
    Intermediate,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TreeMatchExample {
    depth: u32,
    chain_len: usize,
    leaf_labels: Vec<usize>,
    root_count: usize,
}

impl TreeMatchExample {
    /// Builds an example from its identity. `leaf_labels` must be a permutation
    /// of `0..2^depth` and `root_count < 2^depth`.
    pub fn new(depth: u32, leaf_labels: Vec<usize>, root_count: usize, chain_len: usize) -> Result<Self, DataError> {
        check_depth(depth)?;
        let c = 1usize << depth;
        let bad = |msg: String| DataError::Parse { line: 0, msg };
        if leaf_labels.len() != c {
            return Err(bad(format!("expected {c} labels, got {}", leaf_labels.len())));
        }
        let mut seen = vec![false; c];
        for &l in &leaf_labels {
            if l >= c || std::mem::replace(&mut seen[l], true) {
                return Err(bad(format!("labels are not a permutation of 0..{c}")));
            }
        }
        if root_count >= c {
            return Err(bad(format!("root count {root_count} outside 0..{c}")));
        }
        Ok(Self {
            depth,
            chain_len,
            leaf_labels,
            root_count,
        })
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn chain_len(&self) -> usize {
        self.chain_len
    }

    pub fn num_classes(&self) -> usize {
        1 << self.depth
    }

    pub fn leaf_labels(&self) -> &[usize] {
        &self.leaf_labels
    }

    /// Leaf `i` has count `i`.
    pub fn leaf_counts(&self) -> Vec<usize> {
        (0..self.num_classes()).collect()
    }

    pub fn root_count(&self) -> usize {
        self.root_count
    }

    pub fn answer(&self) -> usize {
        self.leaf_labels[self.root_count]
    }

    pub fn num_nodes(&self) -> usize {
        tree_nodes(self.depth) + self.chain_len
    }

    /// Node id of canonical leaf `i`.
    pub fn leaf_node(&self, i: usize) -> usize {
        self.num_classes() - 1 + i
    }

    pub fn target(&self) -> usize {
        if self.chain_len == 0 {
            0
        } else {
            self.num_nodes() - 1
        }
    }

    /// Edges shared by every example with this depth and chain length.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        topology(self.depth, self.chain_len)
    }

    pub fn encodings(&self) -> Vec<NodeEncoding> {
        let c = self.num_classes();
        let target = self.target();
        (0..self.num_nodes())
            .map(|v| {
                if v == target {
                    NodeEncoding::Target {
                        count: self.root_count,
                    }
                } else if (c - 1..2 * c - 1).contains(&v) {
                    let i = v - (c - 1);
                    NodeEncoding::Leaf {
                        label: self.leaf_labels[i],
                        count: i,
                    }
                } else {
                    NodeEncoding::Intermediate
                }
            })
            .collect()
    }

    pub fn graph(&self) -> Graph {
        let mut g = Graph::new(self.num_nodes(), self.edges()).expect("tree topology is valid");
        for (v, enc) in self.encodings().into_iter().enumerate() {
            match enc {
                NodeEncoding::Leaf { label, count } => {
                    g.set_kind(v, NodeKind::Leaf).unwrap();
                    g.set_label(v, Some(label)).unwrap();
                    g.set_count(v, Some(count)).unwrap();
                }
                NodeEncoding::Target { count } => {
                    g.set_target(v).unwrap();
                    g.set_count(v, Some(count)).unwrap();
                }
                NodeEncoding::Intermediate => g.set_kind(v, NodeKind::Intermediate).unwrap(),
            }
        }
        g
    }
}

fn check_depth(depth: u32) -> Result<(), DataError> {
    if (1..=16).contains(&depth) {
        Ok(())
    } else {
        Err(DataError::Depth(depth))
    }
}

fn tree_nodes(depth: u32) -> usize {
    (1 << (depth + 1)) - 1
}

/// Heap-ordered binary tree (children of `v` are `2v+1`, `2v+2`) with edges
/// child → parent, followed by `chain_len` path nodes `root → c₁ → … → c_len`.
pub fn topology(depth: u32, chain_len: usize) -> Vec<(usize, usize)> {
    let n = tree_nodes(depth);
    let mut edges: Vec<(usize, usize)> = (1..n).map(|c| (c, (c - 1) / 2)).collect();
    let mut prev = 0;
    for k in 0..chain_len {
        edges.push((prev, n + k));
        prev = n + k;
    }
    edges
}

/// Exact number of distinct examples, `(2^depth)! · 2^depth`.
pub fn count_examples(depth: u32) -> BigUint {
    total_examples(depth)
}

/// Training-set size used per depth: every example up to depth 2, then
/// 8000, 16,000 and 32,000 from depth 5 on.
pub fn default_sample_size(depth: u32) -> usize {
    match depth {
        0..=2 => total_examples_u64(depth).map_or(0, |n| n as usize),
        3 => 8000,
        4 => 16_000,
        _ => DEFAULT_CAP,
    }
}

pub fn generate_example<R: Rng + ?Sized>(depth: u32, rng: &mut R) -> TreeMatchExample {
    generate_chainable(depth, 0, rng)
}

/// Depth-2 tree whose root feeds a path of `chain_len` nodes ending at the target.
pub fn generate_chain_example<R: Rng + ?Sized>(chain_len: usize, rng: &mut R) -> TreeMatchExample {
    generate_chainable(2, chain_len, rng)
}

fn generate_chainable<R: Rng + ?Sized>(depth: u32, chain_len: usize, rng: &mut R) -> TreeMatchExample {
    check_depth(depth).expect("depth in 1..=16");
    let c = 1usize << depth;
    let mut leaf_labels: Vec<usize> = (0..c).collect();
    leaf_labels.shuffle(rng);
    let root_count = rng.random_range(0..c);
    TreeMatchExample {
        depth,
        chain_len,
        leaf_labels,
        root_count,
    }
}

/// Lexicographic rank → permutation of `0..c`.
fn unrank_permutation(mut rank: u64, c: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..c).collect();
    let mut radix: Vec<u64> = Vec::with_capacity(c);
    let mut f = 1u64;
    for k in 1..=c as u64 {
        radix.push(f);
        f = f.saturating_mul(k);
    }
    let mut out = Vec::with_capacity(c);
    for pos in (0..c).rev() {
        let digit = (rank / radix[pos]) as usize;
        rank %= radix[pos];
        out.push(pool.remove(digit));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub depth: u32,
    pub chain_len: usize,
    pub examples: Vec<TreeMatchExample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        1 << self.depth
    }

    /// How many examples have each answer.
    pub fn class_distribution(&self) -> Vec<usize> {
        let mut hist = vec![0; self.num_classes()];
        for e in &self.examples {
            hist[e.answer()] += 1;
        }
        hist
    }
}

/// `n` pairwise-distinct examples, deterministic in `seed`, with the default cap.
pub fn generate_dataset(depth: u32, n: usize, seed: u64) -> Result<Dataset, DataError> {
    generate_dataset_with(depth, 0, n, seed, DEFAULT_CAP)
}

/// `n` distinct chain-control examples (depth-2 tree plus a path of `chain_len`).
pub fn generate_chain_dataset(chain_len: usize, n: usize, seed: u64) -> Result<Dataset, DataError> {
    generate_dataset_with(2, chain_len, n, seed, DEFAULT_CAP)
}

/// Samples without replacement from the `(2^depth)! · 2^depth` possible examples.
///
/// When the space fits in a `u64`, example indices are sampled directly and
/// decoded; otherwise examples are drawn i.i.d. and duplicates rejected
/// against an exact set.
pub fn generate_dataset_with(
    depth: u32,
    chain_len: usize,
    n: usize,
    seed: u64,
    cap: usize,
) -> Result<Dataset, DataError> {
    check_depth(depth)?;
    if n > cap {
        return Err(DataError::Cap { requested: n, cap });
    }
    let total = total_examples(depth);
    if BigUint::from(n) > total {
        return Err(DataError::Capacity {
            depth,
            requested: n,
            available: total.to_string(),
        });
    }
    let c = 1usize << depth;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let examples = match total_examples_u64(depth).and_then(|t| usize::try_from(t).ok()) {
        Some(total) => index::sample(&mut rng, total, n)
            .into_iter()
            .map(|i| TreeMatchExample {
                depth,
                chain_len,
                leaf_labels: unrank_permutation((i / c) as u64, c),
                root_count: i % c,
            })
            .collect(),
        None => {
            let mut seen = HashSet::with_capacity(n);
            let mut out = Vec::with_capacity(n);
            while out.len() < n {
                let e = generate_chainable(depth, chain_len, &mut rng);
                if seen.insert((e.leaf_labels.clone(), e.root_count)) {
                    out.push(e);
                }
            }
            out
        }
    };
    Ok(Dataset {
        depth,
        chain_len,
        examples,
    })
}
