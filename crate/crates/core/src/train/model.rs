use super::{ModelConfig, TrainError};
use crate::graph::{fa_edges_with, partial_fa_edges_with, Edge};
use crate::layers::{block_forward, glorot, zeros_param, BoundLayer, GnnBlockConfig, LayerParams, MessageGraph, NormParams};
use crate::neighborsmatch::{NodeEncoding, TreeMatchExample};
use crate::scalar::Scalar;
use crate::tensor::{Result as TensorResult, Tape, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::sync::Arc;

/// Rewrites node states inside a forward pass.
pub type StateHook<'a, T> = dyn Fn(&mut Tape<T>, Var) -> TensorResult<Var> + 'a;

/// Slot ids used to place learned input vectors.
const SLOT_NONE: usize = 0;
const SLOT_INTERMEDIATE: usize = 1;
const SLOT_TARGET: usize = 2;

/// Initial linear layer, `num_layers` GNN blocks, and a linear classifier on the target node.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    config: ModelConfig,
    /// `[1×2C]` input of intermediate nodes.
    slot_intermediate: Tensor<T>,
    /// `[1×C]` stand-in for the target's missing label.
    slot_target: Tensor<T>,
    input_w: Tensor<T>,
    input_b: Tensor<T>,
    layers: Vec<LayerParams<T>>,
    norms: Vec<NormParams<T>>,
    output_w: Tensor<T>,
    output_b: Tensor<T>,
}

/// A disjoint union of examples prepared for one forward pass.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub num_nodes: usize,
    pub base: MessageGraph,
    /// Adjacency of the last block (FA, partial FA, or `base` again).
    pub last: MessageGraph,
    features: Tensor<T>,
    slots: Arc<[usize]>,
    pub targets: Arc<[usize]>,
    pub labels: Vec<usize>,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl<T: Scalar> Batch<T> {
    /// `examples` pairs each example with its dataset index, which seeds its
    /// partial-FA sample so the sample does not depend on batching.
    pub fn new(config: &ModelConfig, examples: &[(usize, &TreeMatchExample)]) -> Result<Self, TrainError> {
        let c = config.num_classes();
        let width = 2 * c;
        let mut base: Vec<Edge> = Vec::new();
        let mut last: Vec<Edge> = Vec::new();
        let mut slots = Vec::new();
        let mut targets = Vec::with_capacity(examples.len());
        let mut labels = Vec::with_capacity(examples.len());
        let total: usize = examples.iter().map(|(_, e)| e.num_nodes()).sum();
        let mut features = vec![T::zero(); total * width];
        let mut offset = 0;
        for &(index, e) in examples {
            if e.num_classes() != c {
                return Err(TrainError::Config(format!(
                    "example has {} classes but the model expects {c}",
                    e.num_classes()
                )));
            }
            let n = e.num_nodes();
            let local = e.edges();
            base.extend(local.iter().map(|&(u, v)| (u + offset, v + offset)));
            if config.fa_last {
                let fa = match config.fa_fraction {
                    Some(p) => partial_fa_edges_with(n, p, mix(config.seed ^ mix(index as u64)), config.fa_self_loops)
                        .map_err(|err| TrainError::Config(err.to_string()))?,
                    None => fa_edges_with(n, config.fa_self_loops),
                };
                last.extend(fa.into_iter().map(|(u, v)| (u + offset, v + offset)));
            }
            for (v, enc) in e.encodings().into_iter().enumerate() {
                let row = &mut features[(offset + v) * width..(offset + v + 1) * width];
                match enc {
                    NodeEncoding::Leaf { label, count } => {
                        row[label] = T::one();
                        row[c + count] = T::one();
                        slots.push(SLOT_NONE);
                    }
                    NodeEncoding::Target { count } => {
                        row[c + count] = T::one();
                        slots.push(SLOT_TARGET);
                    }
                    NodeEncoding::Intermediate => slots.push(SLOT_INTERMEDIATE),
                }
            }
            targets.push(offset + e.target());
            labels.push(e.answer());
            offset += n;
        }
        let base_graph = MessageGraph::new(total, &base);
        let last_graph = if config.fa_last {
            MessageGraph::new(total, &last)
        } else {
            base_graph.clone()
        };
        Ok(Self {
            num_nodes: total,
            base: base_graph,
            last: last_graph,
            features: Tensor::new(vec![total, width], features).expect("feature shape"),
            slots: slots.into(),
            targets: targets.into(),
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Handles of every model parameter on a tape.
#[derive(Debug, Clone)]
pub struct BoundModel {
    slot_intermediate: Var,
    slot_target: Var,
    input_w: Var,
    input_b: Var,
    layers: Vec<BoundLayer>,
    norms: Vec<(Var, Var)>,
    output_w: Var,
    output_b: Var,
}

impl<T: Scalar> Model<T> {
    /// Glorot matrices, zero biases, learned slots drawn from `N(0, 0.01²)`.
    pub fn new(config: ModelConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let c = config.num_classes();
        let d = config.dim;
        let normal = Normal::new(0.0, 0.01).expect("valid normal");
        let mut slot = |len: usize| {
            let data = (0..len).map(|_| T::lit(normal.sample(&mut rng))).collect();
            Tensor::new(vec![1, len], data).unwrap().with_grad()
        };
        let slot_intermediate = slot(2 * c);
        let slot_target = slot(c);
        let input_w = glorot(2 * c, d, &mut rng);
        let input_b = zeros_param(&[d]);
        let distinct = if config.unroll_shared_weights { 1 } else { config.layers() };
        let layers = (0..distinct)
            .map(|_| LayerParams::init(config.gnn_type, d, &mut rng))
            .collect();
        let norms = if config.layer_norm {
            (0..config.layers()).map(|_| NormParams::new(d)).collect()
        } else {
            Vec::new()
        };
        let output_w = glorot(d, c, &mut rng);
        let output_b = zeros_param(&[c]);
        Ok(Self {
            config,
            slot_intermediate,
            slot_target,
            input_w,
            input_b,
            layers,
            norms,
            output_w,
            output_b,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn block_config(&self) -> GnnBlockConfig {
        self.config.block_config()
    }

    pub fn layers(&self) -> &[LayerParams<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams<T>] {
        &mut self.layers
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut v = vec![&self.slot_intermediate, &self.slot_target, &self.input_w, &self.input_b];
        for l in &self.layers {
            v.extend(l.tensors());
        }
        for n in &self.norms {
            v.extend([&n.gain, &n.bias]);
        }
        v.extend([&self.output_w, &self.output_b]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = vec![
            &mut self.slot_intermediate,
            &mut self.slot_target,
            &mut self.input_w,
            &mut self.input_b,
        ];
        for l in &mut self.layers {
            v.extend(l.tensors_mut());
        }
        for n in &mut self.norms {
            v.extend([&mut n.gain, &mut n.bias]);
        }
        v.extend([&mut self.output_w, &mut self.output_b]);
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Registers all parameters on `tape`, in [`Self::tensors`] order.
    pub fn bind(&self, tape: &mut Tape<T>) -> BoundModel {
        let slot_intermediate = tape.param(&self.slot_intermediate);
        let slot_target = tape.param(&self.slot_target);
        let input_w = tape.param(&self.input_w);
        let input_b = tape.param(&self.input_b);
        let layers = self.layers.iter().map(|l| l.bind(tape)).collect();
        let norms = self.norms.iter().map(|n| n.bind(tape)).collect();
        let output_w = tape.param(&self.output_w);
        let output_b = tape.param(&self.output_b);
        BoundModel {
            slot_intermediate,
            slot_target,
            input_w,
            input_b,
            layers,
            norms,
            output_w,
            output_b,
        }
    }

    /// Input rows: one-hot features plus learned slots, `[N×2C]`.
    pub fn input_features(&self, tape: &mut Tape<T>, bound: &BoundModel, batch: &Batch<T>) -> TensorResult<Var> {
        let c = self.config.num_classes();
        let zero_row = tape.constant(Tensor::zeros(&[1, 2 * c]));
        let zero_half = tape.constant(Tensor::zeros(&[1, c]));
        let target_row = tape.concat_cols(&[bound.slot_target, zero_half])?;
        let table = tape.concat_rows(&[zero_row, bound.slot_intermediate, target_row])?;
        let learned = tape.gather_rows(table, &batch.slots)?;
        let fixed = tape.constant(batch.features.clone());
        tape.add(fixed, learned)
    }

    /// Node states after the initial linear layer and all GNN blocks, `[N×d]`.
    ///
    /// `penultimate_hook` may replace the input of the last block; it is used
    /// to probe which nodes the target can see.
    pub fn node_states(
        &self,
        tape: &mut Tape<T>,
        bound: &BoundModel,
        batch: &Batch<T>,
        penultimate_hook: Option<&StateHook<'_, T>>,
    ) -> TensorResult<Var> {
        let x = self.input_features(tape, bound, batch)?;
        let h = tape.matmul(x, bound.input_w)?;
        let mut h = tape.add_row_bias(h, bound.input_b)?;
        let cfg = self.block_config();
        let k = self.config.layers();
        for i in 0..k {
            let layer = &bound.layers[if self.config.unroll_shared_weights { 0 } else { i }];
            let norm = bound.norms.get(i).copied();
            let graph = if i + 1 == k { &batch.last } else { &batch.base };
            if i + 1 == k {
                if let Some(hook) = penultimate_hook {
                    h = hook(tape, h)?;
                }
            }
            h = block_forward(tape, h, graph, layer, norm, &cfg)?;
        }
        Ok(h)
    }

    /// Class logits of every target node, `[B×C]`.
    pub fn forward(&self, tape: &mut Tape<T>, bound: &BoundModel, batch: &Batch<T>) -> TensorResult<Var> {
        let h = self.node_states(tape, bound, batch, None)?;
        self.classify(tape, bound, batch, h)
    }

    pub fn classify(&self, tape: &mut Tape<T>, bound: &BoundModel, batch: &Batch<T>, h: Var) -> TensorResult<Var> {
        let th = tape.gather_rows(h, &batch.targets)?;
        let logits = tape.matmul(th, bound.output_w)?;
        tape.add_row_bias(logits, bound.output_b)
    }

    /// Logits without keeping a tape around.
    pub fn logits(&self, batch: &Batch<T>) -> TensorResult<Tensor<T>> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let out = self.forward(&mut tape, &bound, batch)?;
        Ok(tape.value(out).clone())
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            slot_intermediate: self.slot_intermediate.cast(),
            slot_target: self.slot_target.cast(),
            input_w: self.input_w.cast(),
            input_b: self.input_b.cast(),
            layers: self.layers.iter().map(LayerParams::cast).collect(),
            norms: self
                .norms
                .iter()
                .map(|n| NormParams {
                    gain: n.gain.cast(),
                    bias: n.bias.cast(),
                })
                .collect(),
            output_w: self.output_w.cast(),
            output_b: self.output_b.cast(),
        }
    }
}
