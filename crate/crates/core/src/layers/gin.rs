use super::{BoundLayer, MessageGraph};
use crate::scalar::Scalar;
use crate::tensor::{Result, Tape, Var};

/// `h'_v = MLP( (1+ε)·h_v + Σ_{u ∈ N_v} h_u )` with `MLP = Linear → ReLU → Linear`.
pub fn gin_forward<T: Scalar>(tape: &mut Tape<T>, h: Var, graph: &MessageGraph, layer: &BoundLayer) -> Result<Var> {
    let BoundLayer::Gin { w1, b1, w2, b2, eps } = *layer else {
        panic!("gin_forward called with {layer:?}");
    };
    let msgs = tape.gather_rows(h, &graph.src)?;
    let agg = tape.scatter_add_rows(msgs, &graph.dst, graph.num_nodes)?;
    let eps_h = tape.mul_scalar(h, eps)?;
    let own = tape.add(h, eps_h)?;
    let x = tape.add(own, agg)?;
    let hidden = tape.matmul(x, w1)?;
    let hidden = tape.add_row_bias(hidden, b1)?;
    let hidden = tape.relu(hidden);
    let out = tape.matmul(hidden, w2)?;
    tape.add_row_bias(out, b2)
}
