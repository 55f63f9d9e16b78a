//! Laboratory for the GNN over-squashing bottleneck.
//!
//! * [`tensor`]: dense tensors with a reverse-mode tape.
//! * [`graph`]: graphs, fully-adjacent edge sets, diameter and receptive fields.
//! * [`layers`]: GCN, GIN, GAT and GGNN layers with residual/layer-norm blocks.
//! * [`neighborsmatch`]: the Tree-NeighborsMatch generator and its chain control.
//! * [`bounds`]: exact hidden-dimension vs. radius capacity bounds.
//! * [`train`]: model assembly, Adam and the patience-based training schedule.
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix it to `f32`,
//! the width used for training.

pub mod bounds;
pub mod graph;
pub mod layers;
pub mod neighborsmatch;
pub mod scalar;
pub mod tensor;
pub mod train;

#[cfg(any(test, feature = "testing"))]
pub mod gradcheck;
#[cfg(any(test, feature = "testing"))]
pub mod oracles;

pub use scalar::Scalar;

pub type Tensor = tensor::Tensor<f32>;
pub type Tape = tensor::Tape<f32>;
pub type Model = train::Model<f32>;
pub type LayerParams = layers::LayerParams<f32>;
