use super::forward::{
    apply, forward_prepared, prepare, readout, FixedPointConfig, NodeStates, Prepared, Readout, PROB_FLOOR,
};
use super::{
    class_index, matvec_add, matvec_t_add, outer_add, outer_sparse_add, GnnError, GnnGraph, GnnModel, Layout,
    TrainingExample,
};

/// Power-iteration steps used for the Jacobian norm estimate.
pub const POWER_ITERATIONS: usize = 5;

/// The transition map linearized at a fixed point.
struct Linearization<'a> {
    model: &'a GnnModel,
    graph: &'a GnnGraph,
    layout: Layout,
    prep: Prepared,
    /// Nonlinear only: activations `a_k` and derivatives `1 - a_k²`.
    act: Vec<f64>,
    deriv: Vec<f64>,
}

impl<'a> Linearization<'a> {
    fn new(model: &'a GnnModel, graph: &'a GnnGraph, prep: Prepared, x: &[f64]) -> Self {
        let layout = model.layout();
        let mut act = Vec::new();
        let mut deriv = Vec::new();
        if let Prepared::Nonlinear { .. } = prep {
            let mut scratch = vec![0.0; x.len()];
            apply(model, graph, &prep, x, &mut scratch, Some(&mut act));
            deriv = act.iter().map(|a| 1.0 - a * a).collect();
        }
        Self { model, graph, layout, prep, act, deriv }
    }

    fn len(&self) -> usize {
        self.graph.num_nodes * self.layout.s
    }

    /// `J v`.
    fn jvp(&self, v: &[f64]) -> Vec<f64> {
        let (s, h) = (self.layout.s, self.layout.h);
        let mut y = vec![0.0; self.len()];
        match &self.prep {
            Prepared::Linear { a, .. } => {
                for (k, m) in self.graph.messages.iter().enumerate() {
                    matvec_add(
                        &a[k * s * s..(k + 1) * s * s],
                        s,
                        &v[m.source * s..(m.source + 1) * s],
                        &mut y[m.target * s..(m.target + 1) * s],
                    );
                }
            }
            Prepared::Nonlinear { .. } => {
                let p = &self.model.params;
                let l = &self.layout;
                let proj = self.project_states(v);
                let mut r = vec![0.0; self.graph.num_nodes * h];
                for (k, m) in self.graph.messages.iter().enumerate() {
                    let dk = &self.deriv[k * h..(k + 1) * h];
                    let pu = &proj[m.source * h..(m.source + 1) * h];
                    for ((ri, di), pi) in r[m.target * h..(m.target + 1) * h].iter_mut().zip(dk).zip(pu) {
                        *ri += di * pi;
                    }
                }
                for n in 0..self.graph.num_nodes {
                    matvec_add(&p[l.w_out..l.b_out], h, &r[n * h..(n + 1) * h], &mut y[n * s..(n + 1) * s]);
                }
            }
        }
        y
    }

    /// `Jᵀ z`.
    fn vjp(&self, z: &[f64]) -> Vec<f64> {
        let (s, h) = (self.layout.s, self.layout.h);
        let mut w = vec![0.0; self.len()];
        match &self.prep {
            Prepared::Linear { a, .. } => {
                for (k, m) in self.graph.messages.iter().enumerate() {
                    matvec_t_add(
                        &a[k * s * s..(k + 1) * s * s],
                        s,
                        &z[m.target * s..(m.target + 1) * s],
                        &mut w[m.source * s..(m.source + 1) * s],
                    );
                }
            }
            Prepared::Nonlinear { .. } => {
                let p = &self.model.params;
                let l = &self.layout;
                let q = self.back_project(z);
                let mut acc = vec![0.0; self.graph.num_nodes * h];
                for (k, m) in self.graph.messages.iter().enumerate() {
                    let dk = &self.deriv[k * h..(k + 1) * h];
                    let qn = &q[m.target * h..(m.target + 1) * h];
                    for ((ai, di), qi) in acc[m.source * h..(m.source + 1) * h].iter_mut().zip(dk).zip(qn) {
                        *ai += di * qi;
                    }
                }
                for u in 0..self.graph.num_nodes {
                    matvec_t_add(&p[l.w_aux..l.w_out], s, &acc[u * h..(u + 1) * h], &mut w[u * s..(u + 1) * s]);
                }
            }
        }
        w
    }

    /// Per-node `W_x v_n`.
    fn project_states(&self, v: &[f64]) -> Vec<f64> {
        let (s, h, l) = (self.layout.s, self.layout.h, &self.layout);
        let w_x = &self.model.params[l.w_aux..l.w_out];
        let mut out = vec![0.0; self.graph.num_nodes * h];
        for n in 0..self.graph.num_nodes {
            matvec_add(w_x, s, &v[n * s..(n + 1) * s], &mut out[n * h..(n + 1) * h]);
        }
        out
    }

    /// Per-node `W_2ᵀ z_n`.
    fn back_project(&self, z: &[f64]) -> Vec<f64> {
        let (s, h, l) = (self.layout.s, self.layout.h, &self.layout);
        let w2 = &self.model.params[l.w_out..l.b_out];
        let mut out = vec![0.0; self.graph.num_nodes * h];
        for n in 0..self.graph.num_nodes {
            matvec_t_add(w2, h, &z[n * s..(n + 1) * s], &mut out[n * h..(n + 1) * h]);
        }
        out
    }

    /// Accumulates `scale · ∂(leftᵀ J right)/∂θ` holding the activations
    /// fixed, and `scale · ∂(leftᵀ J right)/∂(1 - a_k²)` into `dderiv`.
    /// Nonlinear variant only.
    fn bilinear_grad(&self, left: &[f64], right: &[f64], scale: f64, grad: &mut [f64], dderiv: &mut [f64]) {
        let (s, h, l) = (self.layout.s, self.layout.h, self.layout);
        let t = self.project_states(right);
        let q = self.back_project(left);
        let n = self.graph.num_nodes;
        let mut dt = vec![0.0; n * h];
        let mut dq = vec![0.0; n * h];
        for (k, m) in self.graph.messages.iter().enumerate() {
            let dk = &self.deriv[k * h..(k + 1) * h];
            let tu = &t[m.source * h..(m.source + 1) * h];
            let qn = &q[m.target * h..(m.target + 1) * h];
            for j in 0..h {
                dderiv[k * h + j] += scale * qn[j] * tu[j];
                dt[m.target * h + j] += dk[j] * tu[j];
                dq[m.source * h + j] += dk[j] * qn[j];
            }
        }
        for node in 0..n {
            let ln: Vec<f64> = left[node * s..(node + 1) * s].iter().map(|v| scale * v).collect();
            outer_add(&mut grad[l.w_out..l.b_out], h, &ln, &dt[node * h..(node + 1) * h]);
            let dqn: Vec<f64> = dq[node * h..(node + 1) * h].iter().map(|v| scale * v).collect();
            outer_add(&mut grad[l.w_aux..l.w_out], s, &dqn, &right[node * s..(node + 1) * s]);
        }
    }
}

/// Power-iteration estimate of the spectral norm of the Jacobian of the
/// transition map at `states`.
pub fn contraction_penalty(model: &GnnModel, graph: &GnnGraph, states: &NodeStates) -> Result<f64, GnnError> {
    model.check_graph(graph)?;
    let lin = Linearization::new(model, graph, prepare(model, graph), &states.values);
    Ok(PowerTrace::run(&lin).rho)
}

struct PowerTrace {
    /// `v_0 … v_K`.
    v: Vec<Vec<f64>>,
    /// `y_k = J v_{k-1}` for `k = 1..=K`.
    y: Vec<Vec<f64>>,
    /// `‖Jᵀ y_k‖`.
    norms: Vec<f64>,
    y_final: Vec<f64>,
    rho: f64,
}

impl PowerTrace {
    fn run(lin: &Linearization) -> Self {
        let len = lin.len();
        let mut trace = Self { v: vec![], y: vec![], norms: vec![], y_final: vec![], rho: 0.0 };
        if len == 0 {
            return trace;
        }
        trace.v.push(vec![1.0 / (len as f64).sqrt(); len]);
        for _ in 0..POWER_ITERATIONS {
            let y = lin.jvp(trace.v.last().unwrap());
            let w = lin.vjp(&y);
            let norm = norm2(&w);
            if norm == 0.0 || !norm.is_finite() {
                return trace;
            }
            trace.y.push(y);
            trace.norms.push(norm);
            trace.v.push(w.iter().map(|x| x / norm).collect());
        }
        trace.y_final = lin.jvp(trace.v.last().unwrap());
        trace.rho = norm2(&trace.y_final);
        trace
    }

    fn complete(&self) -> bool {
        self.norms.len() == POWER_ITERATIONS && self.rho > 0.0
    }

    /// Accumulates `scale · ∂ρ/∂θ` into `grad` and `scale · ∂ρ/∂x*` into
    /// `state_grad`.
    fn backprop(&self, lin: &Linearization, x: &[f64], scale: f64, grad: &mut [f64], state_grad: &mut [f64]) {
        let (s, h, l) = (lin.layout.s, lin.layout.h, lin.layout);
        let mut dderiv = vec![0.0; lin.deriv.len()];
        let ybar: Vec<f64> = self.y_final.iter().map(|y| y / self.rho).collect();
        let kmax = self.norms.len();
        lin.bilinear_grad(&ybar, &self.v[kmax], scale, grad, &mut dderiv);
        let mut vbar = lin.vjp(&ybar);
        for k in (1..=kmax).rev() {
            let vk = &self.v[k];
            let dot: f64 = vk.iter().zip(&vbar).map(|(a, b)| a * b).sum();
            let wbar: Vec<f64> = vbar.iter().zip(vk).map(|(b, v)| (b - v * dot) / self.norms[k - 1]).collect();
            lin.bilinear_grad(&self.y[k - 1], &wbar, scale, grad, &mut dderiv);
            let ybar_k = lin.jvp(&wbar);
            lin.bilinear_grad(&ybar_k, &self.v[k - 1], scale, grad, &mut dderiv);
            if k > 1 {
                vbar = lin.vjp(&ybar_k);
            }
        }
        // (1 - a²) with a = tanh(pre): d/dpre = -2 a (1 - a²).
        let w_x = &lin.model.params[l.w_aux..l.w_out];
        for (k, m) in lin.graph.messages.iter().enumerate() {
            let pre_bar: Vec<f64> =
                (0..h).map(|j| dderiv[k * h + j] * -2.0 * lin.act[k * h + j] * lin.deriv[k * h + j]).collect();
            accumulate_pre_activation(grad, &l, &pre_bar, &m.input, &x[m.source * s..(m.source + 1) * s]);
            matvec_t_add(w_x, s, &pre_bar, &mut state_grad[m.source * s..(m.source + 1) * s]);
        }
    }
}

/// Gradient of `W_l c + b_1 + W_x x_u` contracted with `pre_bar`.
fn accumulate_pre_activation(grad: &mut [f64], l: &Layout, pre_bar: &[f64], input: &super::SparseVec, xu: &[f64]) {
    outer_sparse_add(&mut grad[l.w_in..l.b_in], l.d, pre_bar, input);
    for (g, v) in grad[l.b_in..l.b_in + l.h].iter_mut().zip(pre_bar) {
        *g += v;
    }
    outer_add(&mut grad[l.w_aux..l.w_out], l.s, pre_bar, xu);
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct AdjointInfo {
    converged: bool,
    iterations: usize,
    residual: f64,
}

/// Solves `z = Jᵀ z + g` by iteration and accumulates the parameter
/// gradient of `gᵀ x*` into `grad`.
fn adjoint(lin: &Linearization, x: &[f64], g: &[f64], cfg: &FixedPointConfig, grad: &mut [f64]) -> AdjointInfo {
    let mut z = g.to_vec();
    let mut info = AdjointInfo { converged: false, iterations: 0, residual: f64::INFINITY };
    if g.iter().all(|v| *v == 0.0) {
        return AdjointInfo { converged: true, iterations: 0, residual: 0.0 };
    }
    for it in 1..=cfg.max_iterations {
        let mut next = lin.vjp(&z);
        for (n, gi) in next.iter_mut().zip(g) {
            *n += gi;
        }
        let res = z.iter().zip(&next).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        z = next;
        info.iterations = it;
        info.residual = res;
        if res <= cfg.tolerance {
            info.converged = true;
            break;
        }
        if !res.is_finite() {
            break;
        }
    }
    transition_param_grad(lin, x, &z, grad);
    info
}

/// `∂(zᵀ F(x, θ))/∂θ` at fixed `x`.
fn transition_param_grad(lin: &Linearization, x: &[f64], z: &[f64], grad: &mut [f64]) {
    let (s, h, l) = (lin.layout.s, lin.layout.h, lin.layout);
    let graph = lin.graph;
    match &lin.prep {
        Prepared::Linear { t, kappa, .. } => {
            let ss = s * s;
            let mut gbar = vec![0.0; ss];
            for (k, m) in graph.messages.iter().enumerate() {
                let zn = &z[m.target * s..(m.target + 1) * s];
                let xu = &x[m.source * s..(m.source + 1) * s];
                let tk = &t[k * ss..(k + 1) * ss];
                for i in 0..s {
                    for j in 0..s {
                        let tij = tk[i * s + j];
                        gbar[i * s + j] = zn[i] * xu[j] * kappa[k] * (1.0 - tij * tij);
                    }
                }
                outer_sparse_add(&mut grad[l.w_in..l.b_in], l.d, &gbar, &m.input);
                for (g, v) in grad[l.b_in..l.b_in + ss].iter_mut().zip(&gbar) {
                    *g += v;
                }
                outer_sparse_add(&mut grad[l.w_aux..l.b_out], l.d, zn, &m.input);
                for (g, v) in grad[l.b_out..l.b_out + s].iter_mut().zip(zn) {
                    *g += v;
                }
            }
        }
        Prepared::Nonlinear { .. } => {
            let q = lin.back_project(z);
            let mut hsum = vec![0.0; graph.num_nodes * h];
            let mut delta = vec![0.0; h];
            for (k, m) in graph.messages.iter().enumerate() {
                let qn = &q[m.target * h..(m.target + 1) * h];
                for j in 0..h {
                    delta[j] = lin.deriv[k * h + j] * qn[j];
                    hsum[m.target * h + j] += lin.act[k * h + j];
                }
                accumulate_pre_activation(grad, &l, &delta, &m.input, &x[m.source * s..(m.source + 1) * s]);
            }
            for n in 0..graph.num_nodes {
                let zn = &z[n * s..(n + 1) * s];
                outer_add(&mut grad[l.w_out..l.b_out], h, zn, &hsum[n * h..(n + 1) * h]);
                let deg = graph.degree[n] as f64;
                for (g, v) in grad[l.b_out..l.b_out + s].iter_mut().zip(zn) {
                    *g += deg * v;
                }
            }
        }
    }
}

/// Gradient with respect to the parameters of `gᵀ x*`, where `x*` is the
/// fixed point in `states` and `g = state_grad`. Fails if the adjoint
/// iteration does not converge within the iteration cap.
pub fn backward_fixed_point(
    model: &GnnModel,
    graph: &GnnGraph,
    states: &NodeStates,
    state_grad: &[f64],
    config: &FixedPointConfig,
) -> Result<Vec<f64>, GnnError> {
    model.check_graph(graph)?;
    if state_grad.len() != states.values.len() {
        return Err(GnnError::DimensionMismatch {
            what: "state gradient",
            expected: states.values.len(),
            got: state_grad.len(),
        });
    }
    let lin = Linearization::new(model, graph, prepare(model, graph), &states.values);
    let mut grad = vec![0.0; model.num_params()];
    let info = adjoint(&lin, &states.values, state_grad, config, &mut grad);
    if !info.converged {
        return Err(GnnError::AdjointNotConverged { iterations: info.iterations, residual: info.residual });
    }
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExampleGradient {
    /// Cross-entropy plus penalty.
    pub loss: f64,
    pub cross_entropy: f64,
    pub penalty: f64,
    /// Jacobian norm estimate; 0 for the linear variant.
    pub rho: f64,
    pub readout: Readout,
    pub grad: Vec<f64>,
    pub forward_converged: bool,
    pub adjoint_converged: bool,
}

/// Loss and exact gradient for one example. For the nonlinear variant the
/// loss includes `penalty_weight · max(0, ρ - μ)²`. Fails if the adjoint
/// iteration does not converge.
pub fn example_gradient(
    model: &GnnModel,
    example: &TrainingExample,
    config: &FixedPointConfig,
    penalty_weight: f64,
) -> Result<ExampleGradient, GnnError> {
    let out = example_gradient_lenient(model, example, config, penalty_weight)?;
    if !out.adjoint_converged {
        return Err(GnnError::AdjointNotConverged { iterations: config.max_iterations, residual: f64::NAN });
    }
    Ok(out)
}

/// Like [`example_gradient`] but reports adjoint non-convergence in the
/// result instead of failing.
pub(crate) fn example_gradient_lenient(
    model: &GnnModel,
    example: &TrainingExample,
    config: &FixedPointConfig,
    penalty_weight: f64,
) -> Result<ExampleGradient, GnnError> {
    let graph = &example.graph;
    model.check_graph(graph)?;
    let l = model.layout();
    let s = l.s;
    let prep = prepare(model, graph);
    let zeros = vec![0.0; graph.num_nodes * s];
    let states = forward_prepared(model, graph, &prep, config, &zeros)?;
    let ro = readout(model, graph, &states);
    let cls = class_index(example.label);
    let target = example.target();
    let cross_entropy = -ro.probs[cls].max(PROB_FLOOR).ln();

    let mut grad = vec![0.0; model.num_params()];
    let mut state_grad = vec![0.0; states.values.len()];
    if ro.probs[cls] > PROB_FLOOR {
        let dlogit = [ro.probs[0] - target[0], ro.probs[1] - target[1]];
        let xo = states.node(graph.output_node);
        outer_add(&mut grad[l.w_read..l.b_read], s, &dlogit, xo);
        grad[l.b_read] += dlogit[0];
        grad[l.b_read + 1] += dlogit[1];
        let o = graph.output_node;
        matvec_t_add(&model.params[l.w_read..l.b_read], s, &dlogit, &mut state_grad[o * s..(o + 1) * s]);
    }

    let lin = Linearization::new(model, graph, prep, &states.values);
    let mut penalty = 0.0;
    let mut rho = 0.0;
    if matches!(lin.prep, Prepared::Nonlinear { .. }) {
        let trace = PowerTrace::run(&lin);
        rho = trace.rho;
        let excess = rho - model.mu;
        if penalty_weight > 0.0 && excess > 0.0 && trace.complete() {
            penalty = penalty_weight * excess * excess;
            let scale = 2.0 * penalty_weight * excess;
            trace.backprop(&lin, &states.values, scale, &mut grad, &mut state_grad);
        }
    }

    let info = adjoint(&lin, &states.values, &state_grad, config, &mut grad);
    Ok(ExampleGradient {
        loss: cross_entropy + penalty,
        cross_entropy,
        penalty,
        rho,
        readout: ro,
        grad,
        forward_converged: states.converged,
        adjoint_converged: info.converged,
    })
}
