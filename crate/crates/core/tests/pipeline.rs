use satlab_core::circuit::{anneal_solve, encode_w, AnnealConfig, SolveStatus};
use satlab_core::gnn::{evaluate_accuracy, examples_from_dataset, train, Checkpoint, GnnModel, TrainConfig, Variant};
use satlab_core::graph::{encode_var_var, graph_stats, EncodeOptions};
use satlab_core::{
    build_balanced_dataset, dpll_sat, evaluate, generate_random_3sat, parse_dimacs, write_dimacs, Dataset, Label,
};

#[test]
fn dataset_survives_a_disk_round_trip() {
    let ds = build_balanced_dataset(10, 4.4, 8, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    ds.write(dir.path()).unwrap();
    let back = Dataset::load(dir.path()).unwrap();
    assert_eq!(back.manifest, ds.manifest);
    assert_eq!(back.formulas, ds.formulas);
    back.verify().unwrap();
    for rec in &ds.manifest.records {
        let text = std::fs::read_to_string(dir.path().join(&rec.path)).unwrap();
        assert_eq!(write_dimacs(&parse_dimacs(&text).unwrap()), text);
    }
}

#[test]
fn dpll_models_satisfy_and_anneal_agrees_on_small_instances() {
    for seed in 0..40 {
        let f = generate_random_3sat(10, 43, seed).unwrap();
        let res = dpll_sat(&f).unwrap();
        let w = encode_w(&f).unwrap();
        let out = anneal_solve(&w, &AnnealConfig { seed, ..AnnealConfig::default() });
        if let Some(m) = &res.model {
            assert!(evaluate(&f, m).unwrap());
        }
        if out.status == SolveStatus::Solved {
            // The solver only claims success with a verified model.
            assert!(res.is_sat());
            assert!(evaluate(&f, &out.model.unwrap().to_assignment()).unwrap());
        }
    }
}

#[test]
fn graphs_have_expected_shape_for_a_dataset() {
    let ds = build_balanced_dataset(12, 4.4, 6, 1).unwrap();
    let m = ds.manifest.spec.num_clauses;
    for (f, _) in ds.iter() {
        let g = encode_var_var(f, EncodeOptions::new(m)).unwrap();
        assert_eq!(g.nodes.len(), 2 * 12 + 1);
        assert_eq!(g.label_width(), m + 3);
        let stats = graph_stats(&g);
        assert!(stats.max_literal_degree >= 2);
    }
}

#[test]
fn train_evaluate_and_checkpoint_small_model() {
    let mk = |seed| {
        let ds = build_balanced_dataset(8, 4.4, 8, seed).unwrap();
        examples_from_dataset(&ds, EncodeOptions::new(ds.manifest.spec.num_clauses)).unwrap()
    };
    let (tr, va) = (mk(10), mk(11));
    let model = GnnModel::for_graph(Variant::Linear, 4, 0, 0.9, &tr[0].graph, 3);
    let cfg = TrainConfig { epochs: 15, ..TrainConfig::default() };
    let out = train(model, &tr, &va, &cfg).unwrap();
    assert_eq!(out.curve.len(), 15);
    assert!(out.curve.iter().all(|r| r.train_loss.is_finite() && r.train_loss >= 0.0));
    let best = out.curve[out.best_epoch - 1].val_acc;
    assert_eq!(best, out.best_val_acc);
    assert!(out.curve.iter().all(|r| r.val_acc <= best));

    let met = evaluate_accuracy(&out.best_model, &va, &cfg.fixed_point).unwrap();
    assert_eq!(met.accuracy, best);
    assert_eq!(met.confusion.iter().flatten().sum::<usize>(), va.len());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    let ck = Checkpoint { config: cfg, state: out.state };
    ck.save(&path).unwrap();
    assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    assert!(va.iter().any(|e| e.label == Label::Sat));
}
