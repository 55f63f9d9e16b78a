use super::{Activation, GcnNorm, MessageGraph};
use crate::scalar::Scalar;
use crate::tensor::{Result, Tape, Tensor, Var};

/// `h'_v = σ( Σ_{u ∈ N_v ∪ {v}} (1/c_{u,v}) · h_u W )`
pub fn gcn_forward<T: Scalar>(
    tape: &mut Tape<T>,
    h: Var,
    graph: &MessageGraph,
    w: Var,
    norm: GcnNorm,
    activation: Activation,
) -> Result<Var> {
    let hw = tape.matmul(h, w)?;
    let msgs = tape.gather_rows(hw, &graph.loop_src)?;
    let coef: Vec<T> = graph.gcn_coefficients(norm).into_iter().map(T::lit).collect();
    let coef = tape.constant(Tensor::vector(coef));
    let scaled = tape.row_scale(msgs, coef)?;
    let agg = tape.scatter_add_rows(scaled, &graph.loop_dst, graph.num_nodes)?;
    Ok(activation.apply(tape, agg))
}
