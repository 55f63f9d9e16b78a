use super::{Activation, MessageGraph, GAT_LEAKY_SLOPE};
use crate::scalar::Scalar;
use crate::tensor::{Result, Tape, Var};

/// Per head `k` with width `d/H`:
/// `e(u→v) = LeakyReLU(a_src·W h_u + a_dst·W h_v)`, `α = softmax` over the
/// in-edges of `v` (self-loop included), `h'_v = σ(Σ_u α(u→v) W h_u)`.
/// Heads are concatenated.
pub fn gat_forward<T: Scalar>(
    tape: &mut Tape<T>,
    h: Var,
    graph: &MessageGraph,
    w: Var,
    attention: Var,
    heads: usize,
    activation: Activation,
) -> Result<Var> {
    let (out, _) = gat_inner(tape, h, graph, w, attention, heads)?;
    Ok(activation.apply(tape, out))
}

/// Attention coefficients per head, aligned with `graph.loop_src`/`loop_dst`.
pub fn gat_attention<T: Scalar>(
    tape: &mut Tape<T>,
    h: Var,
    graph: &MessageGraph,
    w: Var,
    attention: Var,
    heads: usize,
) -> Result<Vec<Var>> {
    Ok(gat_inner(tape, h, graph, w, attention, heads)?.1)
}

fn gat_inner<T: Scalar>(
    tape: &mut Tape<T>,
    h: Var,
    graph: &MessageGraph,
    w: Var,
    attention: Var,
    heads: usize,
) -> Result<(Var, Vec<Var>)> {
    let hw = tape.matmul(h, w)?;
    let d = tape.shape(hw)[1];
    let width = d / heads.max(1);
    let mut outs = Vec::with_capacity(heads);
    let mut alphas = Vec::with_capacity(heads);
    for k in 0..heads {
        let hk = if heads == 1 { hw } else { tape.slice_cols(hw, k * width, width)? };
        let a_src = tape.slice_rows(attention, k * width, width)?;
        let a_dst = tape.slice_rows(attention, d + k * width, width)?;
        let s_src = tape.matmul(hk, a_src)?;
        let s_dst = tape.matmul(hk, a_dst)?;
        let e_src = tape.gather_rows(s_src, &graph.loop_src)?;
        let e_dst = tape.gather_rows(s_dst, &graph.loop_dst)?;
        let e = tape.add(e_src, e_dst)?;
        let e = tape.leaky_relu(e, T::lit(GAT_LEAKY_SLOPE));
        let alpha = tape.segment_softmax(e, &graph.loop_dst)?;
        let msgs = tape.gather_rows(hk, &graph.loop_src)?;
        let weighted = tape.row_scale(msgs, alpha)?;
        outs.push(tape.scatter_add_rows(weighted, &graph.loop_dst, graph.num_nodes)?);
        alphas.push(alpha);
    }
    let out = if heads == 1 { outs[0] } else { tape.concat_cols(&outs)? };
    Ok((out, alphas))
}
