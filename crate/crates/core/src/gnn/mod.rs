//! Graph neural networks whose node states are the fixed point of a
//! contractive neighbor-aggregation map.
//!
//! For every node `n` the state solves `x_n = Σ_{u ∈ ne[n]} h(l_n, l_{n,u}, x_u, l_u)`.
//! Two transition families are provided:
//!
//! * [`Variant::Linear`]: `h = A_{n,u} x_u + b_{n,u}` where both come from
//!   affine maps of the concatenated labels. `A` is squashed with `tanh` and
//!   scaled by `μ / (s · |ne[n]|)`, which bounds the row-sum norm of the
//!   aggregate map by `μ < 1`.
//! * [`Variant::Nonlinear`]: a one-hidden-layer `tanh` network of
//!   `(l_n, l_{n,u}, x_u, l_u)`. Contraction is encouraged by a penalty on a
//!   power-iteration estimate of the Jacobian norm at the fixed point.
//!
//! The graph-level class is read from the output node's state by an affine
//! map to two logits followed by softmax. Gradients flow through the fixed
//! point by an adjoint fixed-point iteration.

mod backward;
mod checkpoint;
mod forward;
mod train;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::graph::{encode_var_var, EncodeOptions, GraphError, NodeKind, VarVarGraph};
use crate::oracle::Label;
use crate::rng::rng_from_seed;

pub use backward::{backward_fixed_point, contraction_penalty, example_gradient, ExampleGradient, POWER_ITERATIONS};
pub use checkpoint::{curves_csv, parse_curves_csv, Checkpoint, CURVES_CSV_HEADER};
pub use forward::{
    forward_fixed_point, forward_fixed_point_from, loss, readout, transition, FixedPointConfig, NodeStates, Readout,
    PROB_FLOOR,
};
pub use train::{
    evaluate_accuracy, predict, resume, resume_with, train, EpochRecord, Metrics, RpropConfig, RpropState, TrainConfig,
    TrainOutcome, TrainState,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GnnError {
    #[error("non-finite node state after {iterations} iterations")]
    NonFiniteState { iterations: usize },
    #[error("adjoint iteration did not converge: residual {residual:e} after {iterations} iterations")]
    AdjointNotConverged { iterations: usize, residual: f64 },
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("cannot evaluate on an empty dataset")]
    EmptyDataset,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type SparseVec = Vec<(usize, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Variant {
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnEdge {
    pub u: usize,
    pub v: usize,
    pub label: SparseVec,
}

/// One directed message `source → target` along an undirected edge.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Message {
    pub target: usize,
    pub source: usize,
    /// Sparse `[l_target; l_edge; l_source]`.
    pub input: SparseVec,
}

/// A labeled undirected graph with a designated output node.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnGraph {
    pub num_nodes: usize,
    pub node_label_dim: usize,
    pub edge_label_dim: usize,
    pub node_labels: Vec<SparseVec>,
    pub edges: Vec<GnnEdge>,
    pub output_node: usize,
    pub(crate) messages: Vec<Message>,
    pub(crate) degree: Vec<usize>,
}

impl GnnGraph {
    pub fn new(
        node_label_dim: usize,
        edge_label_dim: usize,
        node_labels: Vec<SparseVec>,
        edges: Vec<GnnEdge>,
        output_node: usize,
    ) -> Self {
        let num_nodes = node_labels.len();
        assert!(output_node < num_nodes, "output node out of range");
        let mut messages = Vec::with_capacity(2 * edges.len());
        let mut degree = vec![0; num_nodes];
        let concat = |target: usize, edge: &SparseVec, source: usize| {
            let mut input = SparseVec::new();
            input.extend(node_labels[target].iter().copied());
            input.extend(edge.iter().map(|&(i, x)| (node_label_dim + i, x)));
            input.extend(node_labels[source].iter().map(|&(i, x)| (node_label_dim + edge_label_dim + i, x)));
            input
        };
        for e in &edges {
            assert!(e.u != e.v && e.u < num_nodes && e.v < num_nodes, "bad edge endpoints");
            for (target, source) in [(e.u, e.v), (e.v, e.u)] {
                messages.push(Message { target, source, input: concat(target, &e.label, source) });
                degree[target] += 1;
            }
        }
        messages.sort_by_key(|m| m.target);
        Self { num_nodes, node_label_dim, edge_label_dim, node_labels, edges, output_node, messages, degree }
    }

    /// Graph view of a variable-variable encoding.
    pub fn from_var_var(g: &VarVarGraph) -> Self {
        let node_labels = g.nodes.iter().map(|n| vec![(n.kind as usize, 1.0)]).collect();
        let edges = g.edges.iter().map(|e| GnnEdge { u: e.u, v: e.v, label: g.sparse_label(e) }).collect();
        Self::new(NodeKind::LABEL_DIM, g.label_width(), node_labels, edges, g.output_node)
    }

    /// Width of the concatenated label input `[l_n; l_{n,u}; l_u]`.
    pub fn input_dim(&self) -> usize {
        2 * self.node_label_dim + self.edge_label_dim
    }

    pub fn degree(&self, node: usize) -> usize {
        self.degree[node]
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut labels = vec![SparseVec::new(); self.num_nodes];
        for (i, l) in self.node_labels.iter().enumerate() {
            labels[perm[i]] = l.clone();
        }
        let edges = self.edges.iter().map(|e| GnnEdge { u: perm[e.u], v: perm[e.v], label: e.label.clone() }).collect();
        Self::new(self.node_label_dim, self.edge_label_dim, labels, edges, perm[self.output_node])
    }
}

/// Two-class target: SAT is class 0, UNSAT class 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub graph: GnnGraph,
    pub label: Label,
}

impl TrainingExample {
    pub fn new(graph: GnnGraph, label: Label) -> Self {
        Self { graph, label }
    }

    pub fn target(&self) -> [f64; 2] {
        match self.label {
            Label::Sat => [1.0, 0.0],
            Label::Unsat => [0.0, 1.0],
        }
    }
}

/// Encodes every formula of `dataset` with `options`.
pub fn examples_from_dataset(dataset: &Dataset, options: EncodeOptions) -> Result<Vec<TrainingExample>, GraphError> {
    dataset
        .iter()
        .map(|(f, label)| Ok(TrainingExample::new(GnnGraph::from_var_var(&encode_var_var(f, options)?), label)))
        .collect()
}

pub(crate) fn class_index(label: Label) -> usize {
    match label {
        Label::Sat => 0,
        Label::Unsat => 1,
    }
}

/// Offsets of each parameter block inside [`GnnModel::params`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Layout {
    pub s: usize,
    pub h: usize,
    pub d: usize,
    /// Linear: label→A weights `(s·s) × d`; nonlinear: label→hidden `h × d`.
    pub w_in: usize,
    /// Linear: A bias `s·s`; nonlinear: hidden bias `h`.
    pub b_in: usize,
    /// Linear: label→b weights `s × d`; nonlinear: state→hidden `h × s`.
    pub w_aux: usize,
    /// Nonlinear only: hidden→state `s × h`.
    pub w_out: usize,
    /// Linear: b bias `s`; nonlinear: output bias `s`.
    pub b_out: usize,
    /// Readout `2 × s`.
    pub w_read: usize,
    pub b_read: usize,
    pub len: usize,
}

impl Layout {
    pub fn new(variant: Variant, s: usize, h: usize, d: usize) -> Self {
        match variant {
            Variant::Linear => {
                let w_in = 0;
                let b_in = w_in + s * s * d;
                let w_aux = b_in + s * s;
                let b_out = w_aux + s * d;
                let w_read = b_out + s;
                let b_read = w_read + 2 * s;
                Self { s, h: 0, d, w_in, b_in, w_aux, w_out: b_out, b_out, w_read, b_read, len: b_read + 2 }
            }
            Variant::Nonlinear => {
                let w_in = 0;
                let b_in = w_in + h * d;
                let w_aux = b_in + h;
                let w_out = w_aux + h * s;
                let b_out = w_out + s * h;
                let w_read = b_out + s;
                let b_read = w_read + 2 * s;
                Self { s, h, d, w_in, b_in, w_aux, w_out, b_out, w_read, b_read, len: b_read + 2 }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnModel {
    pub variant: Variant,
    pub state_dim: usize,
    /// Hidden width of the nonlinear transition; 0 for the linear variant.
    pub hidden_dim: usize,
    pub node_label_dim: usize,
    pub edge_label_dim: usize,
    /// Contraction factor in (0, 1).
    pub mu: f64,
    pub params: Vec<f64>,
}

pub const DEFAULT_STATE_DIM: usize = 10;
pub const DEFAULT_HIDDEN_DIM: usize = 32;
pub const DEFAULT_MU: f64 = 0.9;
pub const INIT_RANGE: f64 = 0.1;

impl GnnModel {
    /// All-zero parameters.
    pub fn zeros(
        variant: Variant,
        state_dim: usize,
        hidden_dim: usize,
        node_label_dim: usize,
        edge_label_dim: usize,
        mu: f64,
    ) -> Self {
        assert!(mu > 0.0 && mu < 1.0, "contraction factor must lie in (0, 1)");
        assert!(state_dim > 0, "state dimension must be positive");
        let hidden_dim = if variant == Variant::Linear { 0 } else { hidden_dim };
        let mut m = Self { variant, state_dim, hidden_dim, node_label_dim, edge_label_dim, mu, params: vec![] };
        m.params = vec![0.0; m.layout().len];
        m
    }

    /// Parameters drawn uniformly from `[-0.1, 0.1]`.
    pub fn random(
        variant: Variant,
        state_dim: usize,
        hidden_dim: usize,
        node_label_dim: usize,
        edge_label_dim: usize,
        mu: f64,
        seed: u64,
    ) -> Self {
        let mut m = Self::zeros(variant, state_dim, hidden_dim, node_label_dim, edge_label_dim, mu);
        let mut rng = rng_from_seed(seed);
        for p in &mut m.params {
            *p = rng.gen_range(-INIT_RANGE..=INIT_RANGE);
        }
        m
    }

    /// Random model sized for `graph`.
    pub fn for_graph(
        variant: Variant,
        state_dim: usize,
        hidden_dim: usize,
        mu: f64,
        graph: &GnnGraph,
        seed: u64,
    ) -> Self {
        Self::random(variant, state_dim, hidden_dim, graph.node_label_dim, graph.edge_label_dim, mu, seed)
    }

    pub(crate) fn layout(&self) -> Layout {
        Layout::new(self.variant, self.state_dim, self.hidden_dim, 2 * self.node_label_dim + self.edge_label_dim)
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Sets the readout weights and bias to zero.
    pub fn zero_readout(&mut self) {
        let l = self.layout();
        self.params[l.w_read..l.len].iter_mut().for_each(|p| *p = 0.0);
    }

    pub fn readout_params_mut(&mut self) -> &mut [f64] {
        let l = self.layout();
        &mut self.params[l.w_read..l.len]
    }

    pub(crate) fn check_graph(&self, graph: &GnnGraph) -> Result<(), GnnError> {
        if graph.node_label_dim != self.node_label_dim {
            return Err(GnnError::DimensionMismatch {
                what: "node label",
                expected: self.node_label_dim,
                got: graph.node_label_dim,
            });
        }
        if graph.edge_label_dim != self.edge_label_dim {
            return Err(GnnError::DimensionMismatch {
                what: "edge label",
                expected: self.edge_label_dim,
                got: graph.edge_label_dim,
            });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }
}

/// `out[r] += Σ_c m[r, c] * x[c]` for a row-major `rows × cols` block.
pub(crate) fn matvec_add(m: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        let row = &m[r * cols..(r + 1) * cols];
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out[c] += Σ_r m[r, c] * y[r]`.
pub(crate) fn matvec_t_add(m: &[f64], cols: usize, y: &[f64], out: &mut [f64]) {
    for (r, &yr) in y.iter().enumerate() {
        if yr == 0.0 {
            continue;
        }
        let row = &m[r * cols..(r + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * yr;
        }
    }
}

/// `out[r] += Σ_c m[r, c] * x[c]` for sparse `x`.
pub(crate) fn matvec_sparse_add(m: &[f64], cols: usize, x: &SparseVec, out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        let row = &m[r * cols..(r + 1) * cols];
        *o += x.iter().map(|&(c, v)| row[c] * v).sum::<f64>();
    }
}

/// `g[r, c] += a[r] * b[c]`.
pub(crate) fn outer_add(g: &mut [f64], cols: usize, a: &[f64], b: &[f64]) {
    for (r, &ar) in a.iter().enumerate() {
        if ar == 0.0 {
            continue;
        }
        for (gc, bc) in g[r * cols..(r + 1) * cols].iter_mut().zip(b) {
            *gc += ar * bc;
        }
    }
}

/// `g[r, c] += a[r] * b[c]` for sparse `b`.
pub(crate) fn outer_sparse_add(g: &mut [f64], cols: usize, a: &[f64], b: &SparseVec) {
    for (r, &ar) in a.iter().enumerate() {
        if ar == 0.0 {
            continue;
        }
        let row = &mut g[r * cols..(r + 1) * cols];
        for &(c, v) in b {
            row[c] += ar * v;
        }
    }
}
