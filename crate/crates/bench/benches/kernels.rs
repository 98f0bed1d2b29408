use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use satlab_core::circuit::{approx_sat_grad, encode_w, RelaxedPoint};
use satlab_core::gnn::{
    example_gradient, forward_fixed_point, FixedPointConfig, GnnGraph, GnnModel, TrainingExample, Variant,
};
use satlab_core::graph::{encode_var_var, EncodeOptions};
use satlab_core::{dpll_sat, generate_random_3sat, Label};

fn dpll(c: &mut Criterion) {
    let hard: Vec<_> = (0..8).map(|s| generate_random_3sat(50, 213, s).unwrap()).collect();
    c.bench_function("dpll n=50 ratio=4.26 x8", |b| {
        b.iter(|| hard.iter().map(|f| dpll_sat(black_box(f)).unwrap().is_sat() as u32).sum::<u32>())
    });
}

fn gnn(c: &mut Criterion) {
    let f = generate_random_3sat(20, 88, 1).unwrap();
    let graph = GnnGraph::from_var_var(&encode_var_var(&f, EncodeOptions::new(88)).unwrap());
    let cfg = FixedPointConfig::default();
    for variant in [Variant::Linear, Variant::Nonlinear] {
        let model = GnnModel::for_graph(variant, 10, 32, 0.9, &graph, 0);
        c.bench_function(&format!("gnn forward {variant:?} n=20"), |b| {
            b.iter(|| forward_fixed_point(black_box(&model), &graph, &cfg).unwrap())
        });
        let ex = TrainingExample::new(graph.clone(), Label::Sat);
        c.bench_function(&format!("gnn loss+gradient {variant:?} n=20"), |b| {
            b.iter(|| example_gradient(black_box(&model), &ex, &cfg, 10.0))
        });
    }
}

fn relaxation(c: &mut Criterion) {
    let f = generate_random_3sat(80, 344, 2).unwrap();
    let w = encode_w(&f).unwrap();
    let p = RelaxedPoint::new((0..80).map(|i| (i as f64 * 0.37).sin()).collect(), 2.0);
    c.bench_function("approx_sat_grad n=80", |b| b.iter(|| approx_sat_grad(black_box(&w), &p)));
}

criterion_group!(benches, dpll, gnn, relaxation);
criterion_main!(benches);
