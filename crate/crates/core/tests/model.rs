mod common;

use common::{max_diff, random_graph, random_transform};
use egno_core::egnn::egnn_layer_forward;
use egno_core::geometry::{apply_rigid_transform, Frame, GeometricGraph};
use egno_core::grid::{Discretization, TimeGrid};
use egno_core::model::{
    compute_metrics, decode_super_resolution, egno_forward, stack_targets, trajectory_loss, Egno, EgnoConfig,
    GraphBatch, Readout,
};
use egno_core::temporal::FeatureMask;
use egno_tensor::{grad_check, TensorError};
use proptest::prelude::*;

fn small_config() -> EgnoConfig {
    EgnoConfig {
        layers: 2,
        hidden: 16,
        time_emb: 8,
        ..Default::default()
    }
}

fn uniform_grid(p: usize) -> TimeGrid {
    TimeGrid::discretize(Discretization::Uniform, 10, p, 1).unwrap()
}

fn frames_diff(a: &[Frame], b: &[Frame], f: impl Fn(&Frame) -> &Vec<[f64; 3]>) -> f64 {
    a.iter().zip(b).map(|(x, y)| max_diff(f(x), f(y))).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn model_is_se3_equivariant(seed in any::<u64>()) {
        let model = Egno::new(small_config(), 1, 1).unwrap();
        let params = model.init(seed);
        let g = random_graph(seed, 5);
        let t = random_transform(seed);
        let grid = uniform_grid(5);
        let out = egno_forward(&model, &params, &g, &grid).unwrap();
        let moved = egno_forward(&model, &params, &apply_rigid_transform(&g, &t), &grid).unwrap();
        prop_assert_eq!(out.len(), 5);
        for (a, b) in out.iter().zip(&moved) {
            let xt: Vec<_> = a.x.iter().map(|&p| t.apply_point(p)).collect();
            let vt: Vec<_> = a.v.iter().map(|&p| t.apply_vector(p)).collect();
            prop_assert!(max_diff(&xt, &b.x) < 1e-8);
            prop_assert!(max_diff(&vt, &b.v) < 1e-8);
        }
    }
}

#[test]
fn model_is_permutation_equivariant() {
    let model = Egno::new(small_config(), 1, 1).unwrap();
    let params = model.init(3);
    let g = random_graph(3, 5);
    let perm = [3, 0, 4, 1, 2];
    let grid = uniform_grid(5);
    let out = egno_forward(&model, &params, &g, &grid).unwrap();
    let pout = egno_forward(&model, &params, &g.permute_nodes(&perm).unwrap(), &grid).unwrap();
    for (a, b) in out.iter().zip(&pout) {
        for (new, &old) in perm.iter().enumerate() {
            assert!(max_diff(&[a.x[old]], &[b.x[new]]) < 1e-12);
        }
    }
}

#[test]
fn output_shapes_and_determinism() {
    let model = Egno::new(small_config(), 1, 1).unwrap();
    let params = model.init(1);
    let g = random_graph(1, 5);
    let a = egno_forward(&model, &params, &g, &uniform_grid(5)).unwrap();
    let b = egno_forward(&model, &params, &g, &uniform_grid(5)).unwrap();
    assert_eq!(a.len(), 5);
    assert!(a.iter().all(|f| f.x.len() == 5 && f.v.len() == 5));
    for (fa, fb) in a.iter().zip(&b) {
        for (p, q) in fa.x.iter().flatten().zip(fb.x.iter().flatten()) {
            assert_eq!(p.to_bits(), q.to_bits());
        }
    }
    assert_eq!(model.init(1), params);
    assert_ne!(model.init(2), params);
}

#[test]
fn batched_prediction_matches_single_graphs() {
    let model = Egno::new(small_config(), 1, 1).unwrap();
    let params = model.init(4);
    let graphs: Vec<GeometricGraph> = (0..3).map(|s| random_graph(s, 5)).collect();
    let refs: Vec<&GeometricGraph> = graphs.iter().collect();
    let grid = uniform_grid(5);
    let batched = model.predict(&params, &refs, &grid).unwrap();
    for (g, b) in graphs.iter().zip(&batched) {
        let single = egno_forward(&model, &params, g, &grid).unwrap();
        assert!(frames_diff(&single, b, |f| &f.x) < 1e-12);
        assert!(frames_diff(&single, b, |f| &f.v) < 1e-12);
    }
}

#[test]
fn full_loss_gradient_matches_finite_differences() {
    let model = Egno::new(small_config(), 1, 1).unwrap();
    let params = model.init(7);
    let graphs: Vec<GeometricGraph> = (10..12).map(|s| random_graph(s, 5)).collect();
    let refs: Vec<&GeometricGraph> = graphs.iter().collect();
    let batch = GraphBatch::new(&refs).unwrap();
    let grid = uniform_grid(5);
    let targets: Vec<Vec<Frame>> = (20..22)
        .map(|s| (0..5).map(|t| { let g = random_graph(s * 10 + t, 5); Frame { x: g.x().to_vec(), v: g.v().to_vec() } }).collect())
        .collect();
    let target_refs: Vec<&[Frame]> = targets.iter().map(|t| t.as_slice()).collect();
    let (tx, tv) = stack_targets(&target_refs).unwrap();
    let report = grad_check(&params, 1e-6, |_, p| {
        model
            .loss(p, &batch, &grid, &tx, &tv)
            .map_err(|e| TensorError::InvalidArgument { op: "loss", detail: e.to_string() })
    })
    .unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
    assert_eq!(report.coordinates, params.num_scalars());
}

#[test]
fn zero_update_model_predicts_the_input_state() {
    for mask in [FeatureMask::all(), FeatureMask::hx(), FeatureMask::h_only(), FeatureMask::none()] {
        let model = Egno::new(EgnoConfig { mask, ..small_config() }, 1, 1).unwrap();
        let mut params = model.init(2);
        model.zero_updates(&mut params);
        let g = random_graph(8, 5);
        let out = egno_forward(&model, &params, &g, &uniform_grid(5)).unwrap();
        for f in &out {
            assert!(max_diff(&f.x, g.x()) < 1e-14);
        }
    }
}

#[test]
fn super_resolution_decodes_twice_as_many_steps() {
    let model = Egno::new(small_config(), 1, 1).unwrap();
    let params = model.init(5);
    let g = random_graph(5, 5);
    let (grid, frames) = decode_super_resolution(&model, &params, &g, &uniform_grid(5), 2).unwrap();
    assert_eq!(frames.len(), 10);
    assert_eq!(grid.offsets(), (1..=10).map(f64::from).collect::<Vec<_>>().as_slice());
    assert!(decode_super_resolution(&model, &params, &g, &uniform_grid(5), 0).is_err());
}

/// The sequential readout returns the coordinates after each of the last
/// `P` layers, checked against layer-by-layer evaluation.
#[test]
fn per_layer_readout_matches_layerwise_evaluation() {
    let cfg = EgnoConfig {
        layers: 4,
        hidden: 8,
        p_steps: 3,
        time_emb: 0,
        mask: FeatureMask::none(),
        readout: Readout::PerLayer,
        ..Default::default()
    };
    let model = Egno::new(cfg, 1, 1).unwrap();
    let params = model.init(9);
    let g = random_graph(9, 4);
    let grid = TimeGrid::new(vec![2.0, 4.0, 6.0], vec![1.0, 2.0, 3.0]).unwrap();
    let out = egno_forward(&model, &params, &g, &grid).unwrap();

    let w = params.get("embed.w").unwrap();
    let b = params.get("embed.b").unwrap();
    let h: Vec<f64> = g.h().iter().flat_map(|&s| (0..8).map(move |c| s * w.data()[c] + b.data()[c])).collect();
    let mut cur = GeometricGraph::new(h, 8, g.x().to_vec(), g.v().to_vec(), g.edges().to_vec(), g.edge_attr().to_vec(), 1).unwrap();
    let mut xs = Vec::new();
    for layer in model.layers() {
        let o = egnn_layer_forward(&cur, layer, &params).unwrap();
        xs.push(o.x.clone());
        cur = GeometricGraph::new(o.h.into_data(), 8, o.x, o.v, g.edges().to_vec(), g.edge_attr().to_vec(), 1).unwrap();
    }
    for (p, f) in out.iter().enumerate() {
        assert!(max_diff(&f.x, &xs[1 + p]) < 1e-12, "step {p}");
    }
}

#[test]
fn loss_is_invariant_under_joint_rigid_motion() {
    let t = random_transform(11);
    let mk = |s: u64| -> Vec<Frame> {
        (0..5).map(|i| { let g = random_graph(s + i, 4); Frame { x: g.x().to_vec(), v: g.v().to_vec() } }).collect()
    };
    let (pred, target) = (mk(0), mk(100));
    let move_all = |fs: &[Frame]| -> Vec<Frame> {
        fs.iter()
            .map(|f| Frame {
                x: f.x.iter().map(|&p| t.apply_point(p)).collect(),
                v: f.v.iter().map(|&p| t.apply_vector(p)).collect(),
            })
            .collect()
    };
    let a = trajectory_loss(&pred, &target).unwrap();
    let b = trajectory_loss(&move_all(&pred), &move_all(&target)).unwrap();
    assert!((a - b).abs() < 1e-10);
    let m = compute_metrics(&pred, &target).unwrap();
    assert!((m.a_mse - a).abs() < 1e-15);
}

#[test]
fn tape_loss_agrees_with_value_loss() {
    let model = Egno::new(small_config(), 1, 1).unwrap();
    let params = model.init(12);
    let g = random_graph(12, 5);
    let grid = uniform_grid(5);
    let target: Vec<Frame> = (0..5).map(|i| { let r = random_graph(50 + i, 5); Frame { x: r.x().to_vec(), v: r.v().to_vec() } }).collect();
    let pred = egno_forward(&model, &params, &g, &grid).unwrap();
    let (tx, tv) = stack_targets(&[&target]).unwrap();
    let tape = egno_tensor::Tape::new();
    let p = tape.bind(&params);
    let batch = GraphBatch::new(&[&g]).unwrap();
    let l = model.loss(&p, &batch, &grid, &tx, &tv).unwrap().item().unwrap();
    assert!((l - trajectory_loss(&pred, &target).unwrap()).abs() < 1e-12);
}
