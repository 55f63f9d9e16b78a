//! Central finite-difference oracle for tape gradients (test support only).
//!
//! Differences are taken at `h` and `h/2` and combined by Richardson
//! extrapolation.

use crate::layers::{
    block_forward, layer_forward, Activation, BoundLayer, GcnNorm, GnnBlockConfig, LayerParams, LayerType, MessageGraph,
};
use crate::tensor::{Result, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub step: f64,
    pub tolerance: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        Self {
            step: 1e-3,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Norm-wise relative error `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` per input.
    pub rel_errors: Vec<f64>,
    /// Set when the half-step and full-step stencils disagree, i.e. a kink
    /// (ReLU, max) lies inside the stencil and the point is not differentiable.
    pub non_smooth: bool,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.rel_errors.iter().copied().fold(0.0, f64::max)
    }
}

/// Random tensor with entries uniform in `[-1, 1]`.
pub fn uniform<R: Rng>(shape: &[usize], rng: &mut R) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()).unwrap()
}

fn eval<F>(f: &F, inputs: &[Tensor<f64>]) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    Ok(tape.value(out).item())
}

impl GradCheck {
    /// Compares tape gradients of the scalar `f(inputs)` against central differences.
    pub fn run<F>(&self, inputs: &[Tensor<f64>], f: F) -> Result<GradCheckReport>
    where
        F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
    {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone().with_grad())).collect();
        let out = f(&mut tape, &vars)?;
        let grads = tape.backward(out)?;

        let h = self.step;
        let mut rel_errors = Vec::with_capacity(inputs.len());
        let mut non_smooth = false;
        let mut work: Vec<Tensor<f64>> = inputs.to_vec();
        for (k, v) in vars.iter().enumerate() {
            let analytic = grads.get(*v).expect("leaf gradient").to_vec();
            let mut diff2 = 0.0;
            let mut a2 = 0.0;
            let mut n2 = 0.0;
            for i in 0..inputs[k].len() {
                let x0 = inputs[k].data()[i];
                let mut at = |x: f64| -> Result<f64> {
                    work[k].data_mut()[i] = x;
                    let y = eval(&f, &work);
                    work[k].data_mut()[i] = x0;
                    y
                };
                let full = (at(x0 + h)? - at(x0 - h)?) / (2.0 * h);
                let half = (at(x0 + h / 2.0)? - at(x0 - h / 2.0)?) / h;
                // Smooth functions make the two stencils agree to O(h²); a kink breaks that by O(|g|).
                let scale = full.abs().max(half.abs()).max(1e-3);
                if (full - half).abs() > 10.0 * self.tolerance * scale {
                    non_smooth = true;
                }
                // Richardson extrapolation cancels the O(h²) truncation term,
                // which alone can exceed the tolerance where curvature is high.
                let numeric = (4.0 * half - full) / 3.0;
                diff2 += (analytic[i] - numeric).powi(2);
                a2 += analytic[i].powi(2);
                n2 += numeric.powi(2);
            }
            let denom = a2.sqrt().max(n2.sqrt());
            rel_errors.push(if denom == 0.0 { 0.0 } else { diff2.sqrt() / denom });
        }
        Ok(GradCheckReport {
            rel_errors,
            non_smooth,
        })
    }
}

/// Outcome of one entry of [`op_suite`] or [`layer_suite`].
#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub name: String,
    /// Smooth trials checked.
    pub trials: usize,
    /// Trials redrawn because a kink fell inside the stencil.
    pub redrawn: usize,
    pub max_error: f64,
}

impl SuiteEntry {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_error < tolerance
    }
}

type Draw = Box<dyn Fn(&mut ChaCha8Rng) -> Case>;
type Body = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>>;

/// One random instance: its inputs and the function under test.
pub struct Case {
    pub inputs: Vec<Tensor<f64>>,
    pub body: Body,
}

impl Case {
    fn new(inputs: Vec<Tensor<f64>>, body: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var> + 'static) -> Self {
        Self {
            inputs,
            body: Box::new(body),
        }
    }
}

/// Runs `trials` smooth instances drawn by `draw`. The output is projected
/// onto a fixed random tensor so that every output entry reaches the loss
/// with a distinct weight.
pub fn check_cases(
    check: &GradCheck,
    name: &str,
    trials: usize,
    rng: &mut ChaCha8Rng,
    draw: impl Fn(&mut ChaCha8Rng) -> Case,
) -> Result<SuiteEntry> {
    let mut entry = SuiteEntry {
        name: name.to_string(),
        trials: 0,
        redrawn: 0,
        max_error: 0.0,
    };
    while entry.trials < trials {
        if entry.redrawn > 20 * trials {
            entry.max_error = f64::INFINITY;
            break;
        }
        let case = draw(rng);
        let shape = {
            let mut tape = Tape::new();
            let vars: Vec<Var> = case.inputs.iter().map(|t| tape.constant(t.clone())).collect();
            let out = (case.body)(&mut tape, &vars)?;
            tape.shape(out).to_vec()
        };
        let proj = uniform(&shape, rng);
        let body = &case.body;
        let report = check.run(&case.inputs, |tape, vars| {
            let out = body(tape, vars)?;
            let w = tape.constant(proj.clone());
            let weighted = tape.mul(out, w)?;
            Ok(tape.sum_all(weighted))
        })?;
        if report.non_smooth {
            entry.redrawn += 1;
            continue;
        }
        entry.trials += 1;
        entry.max_error = entry.max_error.max(report.max_error());
    }
    Ok(entry)
}

fn index_vec(rng: &mut ChaCha8Rng, len: usize, bound: usize) -> Arc<[usize]> {
    (0..len).map(|_| rng.random_range(0..bound)).collect::<Vec<_>>().into()
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize) {
    (rng.random_range(1..=4), rng.random_range(1..=4))
}

/// Every differentiable tape op.
pub fn op_cases() -> Vec<(&'static str, Draw)> {
    let mut v: Vec<(&'static str, Draw)> = Vec::new();
    v.push((
        "matmul",
        Box::new(|rng| {
            let (m, k) = dims(rng);
            let n = rng.random_range(1..=4);
            Case::new(vec![uniform(&[m, k], rng), uniform(&[k, n], rng)], |t, x| t.matmul(x[0], x[1]))
        }),
    ));
    macro_rules! binary {
        ($name:literal, $op:ident) => {
            v.push((
                $name,
                Box::new(|rng| {
                    let (m, n) = dims(rng);
                    Case::new(vec![uniform(&[m, n], rng), uniform(&[m, n], rng)], |t, x| t.$op(x[0], x[1]))
                }),
            ));
        };
    }
    binary!("add", add);
    binary!("sub", sub);
    binary!("mul", mul);
    macro_rules! unary {
        ($name:literal, |$t:ident, $x:ident| $e:expr) => {
            v.push((
                $name,
                Box::new(|rng| {
                    let (m, n) = dims(rng);
                    Case::new(vec![uniform(&[m, n], rng)], |$t, $x| Ok($e))
                }),
            ));
        };
    }
    unary!("relu", |t, x| t.relu(x[0]));
    unary!("leaky_relu", |t, x| t.leaky_relu(x[0], 0.2));
    unary!("tanh", |t, x| t.tanh(x[0]));
    unary!("sigmoid", |t, x| t.sigmoid(x[0]));
    unary!("scale", |t, x| t.scale(x[0], -1.7)?);
    unary!("sum_all", |t, x| t.sum_all(x[0]));
    unary!("sum_rows", |t, x| t.sum_rows(x[0]));
    unary!("mean_rows", |t, x| t.mean_rows(x[0])?);
    v.push((
        "add_row_bias",
        Box::new(|rng| {
            let (m, n) = dims(rng);
            Case::new(vec![uniform(&[m, n], rng), uniform(&[n], rng)], |t, x| t.add_row_bias(x[0], x[1]))
        }),
    ));
    v.push((
        "mul_scalar",
        Box::new(|rng| {
            let (m, n) = dims(rng);
            Case::new(vec![uniform(&[m, n], rng), uniform(&[1], rng)], |t, x| t.mul_scalar(x[0], x[1]))
        }),
    ));
    v.push((
        "concat_rows",
        Box::new(|rng| {
            let (m, n) = dims(rng);
            let m2 = rng.random_range(1..=3);
            Case::new(vec![uniform(&[m, n], rng), uniform(&[m2, n], rng)], |t, x| t.concat_rows(&[x[0], x[1], x[0]]))
        }),
    ));
    v.push((
        "concat_cols",
        Box::new(|rng| {
            let (m, n) = dims(rng);
            let n2 = rng.random_range(1..=3);
            Case::new(vec![uniform(&[m, n], rng), uniform(&[m, n2], rng)], |t, x| t.concat_cols(&[x[1], x[0]]))
        }),
    ));
    v.push((
        "slice_rows",
        Box::new(|rng| {
            let m = rng.random_range(2..=5);
            let n = rng.random_range(1..=3);
            let start = rng.random_range(0..m);
            let len = rng.random_range(1..=m - start);
            Case::new(vec![uniform(&[m, n], rng)], move |t, x| t.slice_rows(x[0], start, len))
        }),
    ));
    v.push((
        "slice_cols",
        Box::new(|rng| {
            let m = rng.random_range(1..=3);
            let n = rng.random_range(2..=5);
            let start = rng.random_range(0..n);
            let len = rng.random_range(1..=n - start);
            Case::new(vec![uniform(&[m, n], rng)], move |t, x| t.slice_cols(x[0], start, len))
        }),
    ));
    v.push((
        "gather_rows",
        Box::new(|rng| {
            let (m, n) = dims(rng);
            let len = rng.random_range(1..=8);
            let idx = index_vec(rng, len, m);
            Case::new(vec![uniform(&[m, n], rng)], move |t, x| t.gather_rows(x[0], &idx))
        }),
    ));
    v.push((
        "scatter_add_rows",
        Box::new(|rng| {
            let (e, n) = (rng.random_range(1..=8), rng.random_range(1..=3));
            let out = rng.random_range(1..=4);
            let idx = index_vec(rng, e, out);
            Case::new(vec![uniform(&[e, n], rng)], move |t, x| t.scatter_add_rows(x[0], &idx, out))
        }),
    ));
    v.push((
        "segment_softmax",
        Box::new(|rng| {
            let e = rng.random_range(1..=8);
            let idx = index_vec(rng, e, 3);
            Case::new(vec![uniform(&[e], rng)], move |t, x| t.segment_softmax(x[0], &idx))
        }),
    ));
    v.push((
        "row_scale",
        Box::new(|rng| {
            let (m, n) = dims(rng);
            Case::new(vec![uniform(&[m, n], rng), uniform(&[m], rng)], |t, x| t.row_scale(x[0], x[1]))
        }),
    ));
    v.push((
        "layer_norm_rows",
        Box::new(|rng| {
            let m = rng.random_range(1..=4);
            let n = rng.random_range(2..=5);
            Case::new(vec![uniform(&[m, n], rng), uniform(&[n], rng), uniform(&[n], rng)], |t, x| {
                t.layer_norm_rows(x[0], x[1], x[2], 1e-5)
            })
        }),
    ));
    v.push((
        "cross_entropy",
        Box::new(|rng| {
            let (m, c) = (rng.random_range(1..=4), rng.random_range(2..=5));
            let labels: Vec<usize> = (0..m).map(|_| rng.random_range(0..c)).collect();
            Case::new(vec![uniform(&[m, c], rng)], move |t, x| t.cross_entropy(x[0], &labels))
        }),
    ));
    v
}

/// Runs every op in [`op_cases`] for `trials` smooth instances.
pub fn op_suite(trials: usize, seed: u64) -> Result<Vec<SuiteEntry>> {
    let check = GradCheck::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    op_cases()
        .into_iter()
        .map(|(name, draw)| check_cases(&check, name, trials, &mut rng, draw))
        .collect()
}

fn random_edges(rng: &mut ChaCha8Rng, n: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in 0..n {
            if u != v && rng.random_bool(0.4) {
                edges.push((u, v));
            }
        }
    }
    edges
}

/// Full layer forwards (and the residual + norm block around each) on random
/// graphs with `n ≤ 5`, `d = 4`.
pub fn layer_suite(trials: usize, seed: u64) -> Result<Vec<SuiteEntry>> {
    let check = GradCheck::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut configs = Vec::new();
    for kind in LayerType::ALL {
        configs.push((format!("{kind}"), GnnBlockConfig::new(kind), false));
        configs.push((format!("{kind}+block"), GnnBlockConfig::new(kind), true));
    }
    configs.push((
        "gcn(in_degree)".into(),
        GnnBlockConfig {
            gcn_norm: GcnNorm::InDegree,
            ..GnnBlockConfig::new(LayerType::Gcn)
        },
        false,
    ));
    configs.push((
        "gat(2 heads, tanh)".into(),
        GnnBlockConfig {
            gat_heads: 2,
            activation: Activation::Tanh,
            ..GnnBlockConfig::new(LayerType::Gat)
        },
        false,
    ));
    let d = 4;
    configs
        .into_iter()
        .map(|(name, cfg, block)| {
            check_cases(&check, &name, trials, &mut rng, |rng| {
                let n = rng.random_range(1..=5);
                let graph = MessageGraph::new(n, &random_edges(rng, n));
                let mut inputs = vec![uniform(&[n, d], rng)];
                inputs.extend(LayerParams::<f64>::init(cfg.layer_type, d, rng).tensors().into_iter().cloned());
                if block {
                    inputs.push(uniform(&[d], rng));
                    inputs.push(uniform(&[d], rng));
                }
                let count = inputs.len();
                Case::new(inputs, move |tape, v| {
                    if block {
                        let layer = BoundLayer::from_vars(cfg.layer_type, &v[1..count - 2]);
                        block_forward(tape, v[0], &graph, &layer, Some((v[count - 2], v[count - 1])), &cfg)
                    } else {
                        let layer = BoundLayer::from_vars(cfg.layer_type, &v[1..]);
                        layer_forward(tape, v[0], &graph, &layer, &cfg)
                    }
                })
            })
        })
        .collect()
}
