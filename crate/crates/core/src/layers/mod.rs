//! GNN layers (GCN, GIN, GAT, GGNN), the residual + layer-norm block that
//! wraps them, and graph readout.
//!
//! Node states are row-major `[n×d]` matrices and weights multiply from the
//! right (`h · W`). Messages travel along `(src, dst)` edges.

mod gat;
mod gcn;
mod ggnn;
mod gin;

pub use gat::{gat_attention, gat_forward};
pub use gcn::gcn_forward;
pub use ggnn::ggnn_forward;
pub use gin::gin_forward;

use crate::graph::{in_degrees, Edge};
use crate::scalar::Scalar;
use crate::tensor::{Result, Tape, Tensor, Var};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum LayerType {
    Gcn,
    Gin,
    Gat,
    Ggnn,
}

impl LayerType {
    pub const ALL: [LayerType; 4] = [LayerType::Gcn, LayerType::Gin, LayerType::Gat, LayerType::Ggnn];

    pub fn name(self) -> &'static str {
        match self {
            LayerType::Gcn => "gcn",
            LayerType::Gin => "gin",
            LayerType::Gat => "gat",
            LayerType::Ggnn => "ggnn",
        }
    }
}

impl fmt::Display for LayerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LayerType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(LayerType::Gcn),
            "gin" => Ok(LayerType::Gin),
            "gat" => Ok(LayerType::Gat),
            "ggnn" => Ok(LayerType::Ggnn),
            other => Err(format!("unknown GNN type '{other}' (expected gcn, gin, gat or ggnn)")),
        }
    }
}

/// Normalization constant `c_{u,v}` for GCN messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GcnNorm {
    /// `sqrt(|N_v|+1) · sqrt(|N_u|+1)`
    #[default]
    Symmetric,
    /// `|N_v|+1`
    InDegree,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply<T: Scalar>(self, tape: &mut Tape<T>, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Identity => x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnnBlockConfig {
    pub layer_type: LayerType,
    pub residual: bool,
    pub layer_norm: bool,
    pub gcn_norm: GcnNorm,
    pub gat_heads: usize,
    /// σ for GCN and GAT outputs.
    pub activation: Activation,
}

impl GnnBlockConfig {
    pub fn new(layer_type: LayerType) -> Self {
        Self {
            layer_type,
            residual: true,
            layer_norm: true,
            gcn_norm: GcnNorm::Symmetric,
            gat_heads: 1,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self, dim: usize) -> std::result::Result<(), String> {
        if self.gat_heads == 0 || !dim.is_multiple_of(self.gat_heads) {
            return Err(format!("gat_heads={} must be ≥ 1 and divide d={dim}", self.gat_heads));
        }
        Ok(())
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const GAT_LEAKY_SLOPE: f64 = 0.2;

/// Edge structure prepared for message passing over `num_nodes` nodes.
#[derive(Debug, Clone)]
pub struct MessageGraph {
    pub num_nodes: usize,
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
    /// Edges followed by one self-loop per node.
    pub loop_src: Arc<[usize]>,
    pub loop_dst: Arc<[usize]>,
    in_degree: Vec<usize>,
}

impl MessageGraph {
    pub fn new(num_nodes: usize, edges: &[Edge]) -> Self {
        let src: Vec<usize> = edges.iter().map(|e| e.0).collect();
        let dst: Vec<usize> = edges.iter().map(|e| e.1).collect();
        let mut loop_src = src.clone();
        let mut loop_dst = dst.clone();
        loop_src.extend(0..num_nodes);
        loop_dst.extend(0..num_nodes);
        Self {
            num_nodes,
            src: src.into(),
            dst: dst.into(),
            loop_src: loop_src.into(),
            loop_dst: loop_dst.into(),
            in_degree: in_degrees(num_nodes, edges),
        }
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }

    /// `1 / c_{u,v}` for every entry of `loop_src`/`loop_dst`.
    pub fn gcn_coefficients(&self, norm: GcnNorm) -> Vec<f64> {
        self.loop_src
            .iter()
            .zip(self.loop_dst.iter())
            .map(|(&u, &v)| {
                let dv = (self.in_degree[v] + 1) as f64;
                let du = (self.in_degree[u] + 1) as f64;
                match norm {
                    GcnNorm::Symmetric => 1.0 / (dv.sqrt() * du.sqrt()),
                    GcnNorm::InDegree => 1.0 / dv,
                }
            })
            .collect()
    }
}

/// Trainable weights of one GNN layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams<T> {
    Gcn {
        w: Tensor<T>,
    },
    Gin {
        w1: Tensor<T>,
        b1: Tensor<T>,
        w2: Tensor<T>,
        b2: Tensor<T>,
        eps: Tensor<T>,
    },
    Gat {
        w: Tensor<T>,
        /// `[2d×1]`: rows `0..d` score the sender, rows `d..2d` the receiver.
        attention: Tensor<T>,
    },
    Ggnn {
        w_msg: Tensor<T>,
        /// Update, reset, candidate gates: input weight, state weight, bias.
        gates: [GateParams<T>; 3],
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateParams<T> {
    pub w_in: Tensor<T>,
    pub w_state: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Glorot-uniform `[rows×cols]` matrix marked trainable.
pub fn glorot<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
    let data = (0..rows * cols).map(|_| T::lit(dist.sample(rng))).collect();
    Tensor::new(vec![rows, cols], data).unwrap().with_grad()
}

pub fn zeros_param<T: Scalar>(shape: &[usize]) -> Tensor<T> {
    Tensor::zeros(shape).with_grad()
}

impl<T: Scalar> LayerParams<T> {
    /// Glorot matrices, zero biases, `ε = 0`.
    pub fn init<R: Rng + ?Sized>(kind: LayerType, d: usize, rng: &mut R) -> Self {
        match kind {
            LayerType::Gcn => LayerParams::Gcn { w: glorot(d, d, rng) },
            LayerType::Gin => LayerParams::Gin {
                w1: glorot(d, d, rng),
                b1: zeros_param(&[d]),
                w2: glorot(d, d, rng),
                b2: zeros_param(&[d]),
                eps: zeros_param(&[1]),
            },
            LayerType::Gat => LayerParams::Gat {
                w: glorot(d, d, rng),
                attention: glorot(2 * d, 1, rng),
            },
            LayerType::Ggnn => {
                let w_msg = glorot(d, d, rng);
                let gates = std::array::from_fn(|_| GateParams {
                    w_in: glorot(d, d, rng),
                    w_state: glorot(d, d, rng),
                    bias: zeros_param(&[d]),
                });
                LayerParams::Ggnn { w_msg, gates }
            }
        }
    }

    pub fn layer_type(&self) -> LayerType {
        match self {
            LayerParams::Gcn { .. } => LayerType::Gcn,
            LayerParams::Gin { .. } => LayerType::Gin,
            LayerParams::Gat { .. } => LayerType::Gat,
            LayerParams::Ggnn { .. } => LayerType::Ggnn,
        }
    }

    /// Parameter tensors in a fixed order shared by [`Self::tensors_mut`] and [`Self::bind`].
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        match self {
            LayerParams::Gcn { w } => vec![w],
            LayerParams::Gin { w1, b1, w2, b2, eps } => vec![w1, b1, w2, b2, eps],
            LayerParams::Gat { w, attention } => vec![w, attention],
            LayerParams::Ggnn { w_msg, gates } => {
                let mut v = vec![w_msg];
                for g in gates {
                    v.extend([&g.w_in, &g.w_state, &g.bias]);
                }
                v
            }
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        match self {
            LayerParams::Gcn { w } => vec![w],
            LayerParams::Gin { w1, b1, w2, b2, eps } => vec![w1, b1, w2, b2, eps],
            LayerParams::Gat { w, attention } => vec![w, attention],
            LayerParams::Ggnn { w_msg, gates } => {
                let mut v = vec![w_msg];
                for g in gates {
                    v.extend([&mut g.w_in, &mut g.w_state, &mut g.bias]);
                }
                v
            }
        }
    }

    /// Registers every tensor as a tape parameter.
    pub fn bind(&self, tape: &mut Tape<T>) -> BoundLayer {
        let vars: Vec<Var> = self.tensors().into_iter().map(|t| tape.param(t)).collect();
        BoundLayer::from_vars(self.layer_type(), &vars)
    }

    pub fn cast<U: Scalar>(&self) -> LayerParams<U> {
        match self {
            LayerParams::Gcn { w } => LayerParams::Gcn { w: w.cast() },
            LayerParams::Gin { w1, b1, w2, b2, eps } => LayerParams::Gin {
                w1: w1.cast(),
                b1: b1.cast(),
                w2: w2.cast(),
                b2: b2.cast(),
                eps: eps.cast(),
            },
            LayerParams::Gat { w, attention } => LayerParams::Gat {
                w: w.cast(),
                attention: attention.cast(),
            },
            LayerParams::Ggnn { w_msg, gates } => LayerParams::Ggnn {
                w_msg: w_msg.cast(),
                gates: std::array::from_fn(|i| GateParams {
                    w_in: gates[i].w_in.cast(),
                    w_state: gates[i].w_state.cast(),
                    bias: gates[i].bias.cast(),
                }),
            },
        }
    }
}

/// [`LayerParams`] registered on a tape.
#[derive(Debug, Clone, Copy)]
pub enum BoundLayer {
    Gcn { w: Var },
    Gin { w1: Var, b1: Var, w2: Var, b2: Var, eps: Var },
    Gat { w: Var, attention: Var },
    Ggnn { w_msg: Var, gates: [BoundGate; 3] },
}

impl BoundLayer {
    /// Rebuilds the handles from vars listed in [`LayerParams::tensors`] order.
    pub fn from_vars(kind: LayerType, vars: &[Var]) -> Self {
        match kind {
            LayerType::Gcn => BoundLayer::Gcn { w: vars[0] },
            LayerType::Gin => BoundLayer::Gin {
                w1: vars[0],
                b1: vars[1],
                w2: vars[2],
                b2: vars[3],
                eps: vars[4],
            },
            LayerType::Gat => BoundLayer::Gat {
                w: vars[0],
                attention: vars[1],
            },
            LayerType::Ggnn => BoundLayer::Ggnn {
                w_msg: vars[0],
                gates: std::array::from_fn(|i| BoundGate {
                    w_in: vars[1 + 3 * i],
                    w_state: vars[2 + 3 * i],
                    bias: vars[3 + 3 * i],
                }),
            },
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundGate {
    pub w_in: Var,
    pub w_state: Var,
    pub bias: Var,
}

/// Gain and bias of a block's layer normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct NormParams<T> {
    pub gain: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> NormParams<T> {
    pub fn new(d: usize) -> Self {
        Self {
            gain: Tensor::filled(&[d], T::one()).with_grad(),
            bias: zeros_param(&[d]),
        }
    }

    pub fn bind(&self, tape: &mut Tape<T>) -> (Var, Var) {
        (tape.param(&self.gain), tape.param(&self.bias))
    }
}

/// One GNN layer without residual or normalization.
pub fn layer_forward<T: Scalar>(
    tape: &mut Tape<T>,
    h: Var,
    graph: &MessageGraph,
    layer: &BoundLayer,
    cfg: &GnnBlockConfig,
) -> Result<Var> {
    match layer {
        BoundLayer::Gcn { w } => gcn_forward(tape, h, graph, *w, cfg.gcn_norm, cfg.activation),
        BoundLayer::Gin { .. } => gin_forward(tape, h, graph, layer),
        BoundLayer::Gat { w, attention } => gat_forward(tape, h, graph, *w, *attention, cfg.gat_heads, cfg.activation),
        BoundLayer::Ggnn { .. } => ggnn_forward(tape, h, graph, layer),
    }
}

/// `out = layer(h)`, then `out += h` when residual, then row layer-norm when enabled.
pub fn block_forward<T: Scalar>(
    tape: &mut Tape<T>,
    h: Var,
    graph: &MessageGraph,
    layer: &BoundLayer,
    norm: Option<(Var, Var)>,
    cfg: &GnnBlockConfig,
) -> Result<Var> {
    let mut out = layer_forward(tape, h, graph, layer, cfg)?;
    if cfg.residual {
        out = tape.add(out, h)?;
    }
    if cfg.layer_norm {
        let (gain, bias) = norm.expect("layer norm enabled but no norm params bound");
        out = tape.layer_norm_rows(out, gain, bias, T::lit(LAYER_NORM_EPS))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    #[default]
    Sum,
    Mean,
}

/// Column-wise sum or mean over node rows.
pub fn readout<T: Scalar>(tape: &mut Tape<T>, h: Var, mode: Readout) -> Result<Var> {
    match mode {
        Readout::Sum => Ok(tape.sum_rows(h)),
        Readout::Mean => tape.mean_rows(h),
    }
}
