use super::{BoundGate, BoundLayer, MessageGraph};
use crate::scalar::Scalar;
use crate::tensor::{Result, Tape, Var};

fn gate<T: Scalar>(tape: &mut Tape<T>, input: Var, state: Var, g: &BoundGate) -> Result<Var> {
    let a = tape.matmul(input, g.w_in)?;
    let b = tape.matmul(state, g.w_state)?;
    let s = tape.add(a, b)?;
    tape.add_row_bias(s, g.bias)
}

/// Gated graph layer: `m_v = Σ_{u ∈ N_v} h_u W`, then a GRU step with input
/// `m_v` and state `h_v`:
///
/// ```text
/// z  = σ(m W_z + h U_z + b_z)
/// r  = σ(m W_r + h U_r + b_r)
/// ĥ  = tanh(m W_h + (r ⊙ h) U_h + b_h)
/// h' = (1 − z) ⊙ h + z ⊙ ĥ
/// ```
pub fn ggnn_forward<T: Scalar>(tape: &mut Tape<T>, h: Var, graph: &MessageGraph, layer: &BoundLayer) -> Result<Var> {
    let BoundLayer::Ggnn { w_msg, gates } = layer else {
        panic!("ggnn_forward called with {layer:?}");
    };
    let hw = tape.matmul(h, *w_msg)?;
    let msgs = tape.gather_rows(hw, &graph.src)?;
    let m = tape.scatter_add_rows(msgs, &graph.dst, graph.num_nodes)?;

    let z = gate(tape, m, h, &gates[0])?;
    let z = tape.sigmoid(z);
    let r = gate(tape, m, h, &gates[1])?;
    let r = tape.sigmoid(r);
    let rh = tape.mul(r, h)?;
    let cand = gate(tape, m, rh, &gates[2])?;
    let cand = tape.tanh(cand);
    let delta = tape.sub(cand, h)?;
    let step = tape.mul(z, delta)?;
    tape.add(h, step)
}
