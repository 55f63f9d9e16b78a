//! Slow, independent reference implementations used to cross-check the graph
//! statistics (test support only).

use crate::graph::{Diameter, Edge, Graph};
use crate::neighborsmatch::TreeMatchExample;
use crate::tensor::{Tape, Tensor, Var};
use crate::train::{Batch, Model, TrainError};
use rand::Rng;
use std::collections::BTreeSet;

/// All-pairs shortest paths by Floyd–Warshall.
pub fn floyd_warshall_diameter(g: &Graph, undirected: bool) -> Diameter {
    let n = g.num_nodes();
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(u, v) in g.edges() {
        d[u][v] = d[u][v].min(1);
        if undirected {
            d[v][u] = d[v][u].min(1);
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    let worst = d.iter().flatten().copied().max().unwrap_or(0);
    if worst >= inf {
        Diameter::Unreachable
    } else {
        Diameter::Finite(worst)
    }
}

/// The recursive receptive-field definition evaluated literally: `K` rounds
/// of "add every source of an edge into the current set", rescanning all
/// edges each round.
pub fn brute_receptive_field(g: &Graph, v: usize, k: usize) -> BTreeSet<usize> {
    let mut set: BTreeSet<usize> = g.edges().iter().filter(|e| e.1 == v).map(|e| e.0).collect();
    for _ in 1..k {
        let add: Vec<usize> = g.edges().iter().filter(|e| set.contains(&e.1)).map(|e| e.0).collect();
        set.extend(add);
    }
    set
}

/// Random simple directed graph; each ordered pair is an edge with probability `p`.
pub fn random_graph<R: Rng + ?Sized>(rng: &mut R, n: usize, p: f64) -> Graph {
    let edges: Vec<Edge> = (0..n)
        .flat_map(|u| (0..n).map(move |v| (u, v)))
        .filter(|&(u, v)| u != v)
        .filter(|_| rng.random_bool(p))
        .collect();
    Graph::new(n, edges).expect("valid random graph")
}

/// For every node `u` of `example`, the largest change in the target's final
/// state when `u`'s input to the last block is perturbed by `delta` (along a
/// fixed non-constant direction).
pub fn penultimate_sensitivity(
    model: &Model<f64>,
    example: &TreeMatchExample,
    delta: f64,
) -> Result<Vec<f64>, TrainError> {
    let batch = Batch::<f64>::new(model.config(), &[(0, example)])?;
    let target = batch.targets[0];
    let final_target = |bump: Option<usize>| -> Result<Vec<f64>, TrainError> {
        let mut tape = Tape::new();
        let bound = model.bind(&mut tape);
        let hook = |tape: &mut Tape<f64>, h: Var| {
            let (n, d) = (tape.shape(h)[0], tape.shape(h)[1]);
            let mut t = Tensor::zeros(&[n, d]);
            if let Some(u) = bump {
                for (j, x) in t.data_mut()[u * d..(u + 1) * d].iter_mut().enumerate() {
                    *x = delta * if j % 2 == 0 { 1.0 } else { -0.5 };
                }
            }
            let c = tape.constant(t);
            tape.add(h, c)
        };
        let h = model.node_states(&mut tape, &bound, &batch, Some(&hook))?;
        Ok(tape.value(h).row(target).to_vec())
    };
    let base = final_target(None)?;
    (0..batch.num_nodes)
        .map(|u| {
            let moved = final_target(Some(u))?;
            Ok(moved.iter().zip(&base).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        })
        .collect()
}
