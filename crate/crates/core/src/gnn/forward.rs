use serde::{Deserialize, Serialize};

use super::{matvec_add, matvec_sparse_add, GnnError, GnnGraph, GnnModel, Variant};
use crate::oracle::Label;

/// Probabilities are clamped to this floor inside the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedPointConfig {
    pub max_iterations: usize,
    /// Stop once the max-norm change of all states is at most this.
    pub tolerance: f64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self { max_iterations: 50, tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeStates {
    pub num_nodes: usize,
    pub state_dim: usize,
    /// Row-major `num_nodes × state_dim`.
    pub values: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Max-norm update at each iteration.
    pub residuals: Vec<f64>,
}

impl NodeStates {
    pub fn node(&self, n: usize) -> &[f64] {
        &self.values[n * self.state_dim..(n + 1) * self.state_dim]
    }

    pub fn residual(&self) -> f64 {
        self.residuals.last().copied().unwrap_or(f64::INFINITY)
    }
}

/// Model quantities that do not depend on the node states.
pub(crate) enum Prepared {
    Linear {
        /// `tanh` of the label-driven pre-activation, `s·s` per message.
        t: Vec<f64>,
        /// Scaled transition matrices, `s·s` per message.
        a: Vec<f64>,
        /// Per-node sum of the bias terms `b_{n,u}`.
        bsum: Vec<f64>,
        /// Per-message scale `μ / (s · |ne[n]|)`.
        kappa: Vec<f64>,
    },
    Nonlinear {
        /// `W_l c_k + b_1`, `h` per message.
        c: Vec<f64>,
    },
}

pub(crate) fn prepare(model: &GnnModel, graph: &GnnGraph) -> Prepared {
    let l = model.layout();
    let p = &model.params;
    let (s, d) = (l.s, l.d);
    match model.variant {
        Variant::Linear => {
            let ss = s * s;
            let mut t = vec![0.0; graph.messages.len() * ss];
            let mut a = vec![0.0; t.len()];
            let mut bsum = vec![0.0; graph.num_nodes * s];
            let mut kappa = Vec::with_capacity(graph.messages.len());
            for (k, m) in graph.messages.iter().enumerate() {
                let tk = &mut t[k * ss..(k + 1) * ss];
                tk.copy_from_slice(&p[l.b_in..l.b_in + ss]);
                matvec_sparse_add(&p[l.w_in..l.b_in], d, &m.input, tk);
                let kap = model.mu / (s as f64 * graph.degree[m.target] as f64);
                for (ai, ti) in a[k * ss..(k + 1) * ss].iter_mut().zip(tk.iter_mut()) {
                    *ti = ti.tanh();
                    *ai = kap * *ti;
                }
                kappa.push(kap);
                let bn = &mut bsum[m.target * s..(m.target + 1) * s];
                for (b, bb) in bn.iter_mut().zip(&p[l.b_out..l.b_out + s]) {
                    *b += bb;
                }
                matvec_sparse_add(&p[l.w_aux..l.b_out], d, &m.input, bn);
            }
            Prepared::Linear { t, a, bsum, kappa }
        }
        Variant::Nonlinear => {
            let h = l.h;
            let mut c = vec![0.0; graph.messages.len() * h];
            for (k, m) in graph.messages.iter().enumerate() {
                let ck = &mut c[k * h..(k + 1) * h];
                ck.copy_from_slice(&p[l.b_in..l.b_in + h]);
                matvec_sparse_add(&p[l.w_in..l.b_in], d, &m.input, ck);
            }
            Prepared::Nonlinear { c }
        }
    }
}

/// One synchronous application of the transition map. For the nonlinear
/// variant `hidden` receives the per-message activations `a_k`.
pub(crate) fn apply(
    model: &GnnModel,
    graph: &GnnGraph,
    prep: &Prepared,
    x: &[f64],
    out: &mut [f64],
    mut hidden: Option<&mut Vec<f64>>,
) {
    let l = model.layout();
    let s = l.s;
    match prep {
        Prepared::Linear { a, bsum, .. } => {
            out.copy_from_slice(bsum);
            for (k, m) in graph.messages.iter().enumerate() {
                let src = &x[m.source * s..(m.source + 1) * s];
                matvec_add(&a[k * s * s..(k + 1) * s * s], s, src, &mut out[m.target * s..(m.target + 1) * s]);
            }
        }
        Prepared::Nonlinear { c } => {
            let h = l.h;
            let p = &model.params;
            let w_x = &p[l.w_aux..l.w_out];
            let mut proj = vec![0.0; graph.num_nodes * h];
            for n in 0..graph.num_nodes {
                matvec_add(w_x, s, &x[n * s..(n + 1) * s], &mut proj[n * h..(n + 1) * h]);
            }
            let mut hsum = vec![0.0; graph.num_nodes * h];
            if let Some(hv) = hidden.as_deref_mut() {
                hv.clear();
                hv.resize(graph.messages.len() * h, 0.0);
            }
            for (k, m) in graph.messages.iter().enumerate() {
                let ck = &c[k * h..(k + 1) * h];
                let pu = &proj[m.source * h..(m.source + 1) * h];
                let acc = &mut hsum[m.target * h..(m.target + 1) * h];
                for j in 0..h {
                    let act = (ck[j] + pu[j]).tanh();
                    acc[j] += act;
                    if let Some(hv) = hidden.as_deref_mut() {
                        hv[k * h + j] = act;
                    }
                }
            }
            let w2 = &p[l.w_out..l.b_out];
            let b2 = &p[l.b_out..l.b_out + s];
            for n in 0..graph.num_nodes {
                let o = &mut out[n * s..(n + 1) * s];
                let deg = graph.degree[n] as f64;
                for (oi, bi) in o.iter_mut().zip(b2) {
                    *oi = deg * bi;
                }
                matvec_add(w2, h, &hsum[n * h..(n + 1) * h], o);
            }
        }
    }
}

/// Applies the transition map once to the given states.
pub fn transition(model: &GnnModel, graph: &GnnGraph, x: &[f64]) -> Result<Vec<f64>, GnnError> {
    model.check_graph(graph)?;
    let expected = graph.num_nodes * model.state_dim;
    if x.len() != expected {
        return Err(GnnError::DimensionMismatch { what: "node states", expected, got: x.len() });
    }
    let prep = prepare(model, graph);
    let mut out = vec![0.0; expected];
    apply(model, graph, &prep, x, &mut out, None);
    Ok(out)
}

/// Iterates the transition map from all-zero states.
pub fn forward_fixed_point(
    model: &GnnModel,
    graph: &GnnGraph,
    config: &FixedPointConfig,
) -> Result<NodeStates, GnnError> {
    let zeros = vec![0.0; graph.num_nodes * model.state_dim];
    forward_fixed_point_from(model, graph, config, &zeros)
}

/// Iterates the transition map from `init` until the update is within
/// tolerance or the iteration cap is hit. Hitting the cap is not an error;
/// check [`NodeStates::converged`].
pub fn forward_fixed_point_from(
    model: &GnnModel,
    graph: &GnnGraph,
    config: &FixedPointConfig,
    init: &[f64],
) -> Result<NodeStates, GnnError> {
    model.check_graph(graph)?;
    let prep = prepare(model, graph);
    forward_prepared(model, graph, &prep, config, init)
}

pub(crate) fn forward_prepared(
    model: &GnnModel,
    graph: &GnnGraph,
    prep: &Prepared,
    config: &FixedPointConfig,
    init: &[f64],
) -> Result<NodeStates, GnnError> {
    let s = model.state_dim;
    let expected = graph.num_nodes * s;
    if init.len() != expected {
        return Err(GnnError::DimensionMismatch { what: "initial states", expected, got: init.len() });
    }
    let mut x = init.to_vec();
    let mut next = vec![0.0; expected];
    let mut residuals = Vec::new();
    let mut converged = false;
    for it in 1..=config.max_iterations {
        apply(model, graph, prep, &x, &mut next, None);
        let res = x.iter().zip(&next).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        std::mem::swap(&mut x, &mut next);
        if !res.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(GnnError::NonFiniteState { iterations: it });
        }
        residuals.push(res);
        if res <= config.tolerance {
            converged = true;
            break;
        }
    }
    Ok(NodeStates {
        num_nodes: graph.num_nodes,
        state_dim: s,
        values: x,
        iterations: residuals.len(),
        converged,
        residuals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Readout {
    pub logits: [f64; 2],
    /// `[P(SAT), P(UNSAT)]`.
    pub probs: [f64; 2],
}

impl Readout {
    /// Ties go to UNSAT.
    pub fn predicted(&self) -> Label {
        if self.probs[0] > self.probs[1] {
            Label::Sat
        } else {
            Label::Unsat
        }
    }
}

pub fn readout(model: &GnnModel, graph: &GnnGraph, states: &NodeStates) -> Readout {
    let l = model.layout();
    let p = &model.params;
    let mut logits = [p[l.b_read], p[l.b_read + 1]];
    matvec_add(&p[l.w_read..l.b_read], l.s, states.node(graph.output_node), &mut logits);
    let mx = logits[0].max(logits[1]);
    let e = [(logits[0] - mx).exp(), (logits[1] - mx).exp()];
    let z = e[0] + e[1];
    Readout { logits, probs: [e[0] / z, e[1] / z] }
}

/// Cross-entropy of the readout against `label`.
pub fn loss(readout: &Readout, label: Label) -> f64 {
    -readout.probs[super::class_index(label)].max(PROB_FLOOR).ln()
}
