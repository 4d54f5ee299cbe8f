mod common;

use common::{max_diff, random_graph, random_transform, rng};
use egno_core::egnn::{egnn_layer_forward, EgnnLayer};
use egno_core::geometry::{apply_rigid_transform, vec3, GeometricGraph};
use egno_tensor::{ParamSet, Tensor};
use proptest::prelude::*;
use rand::Rng;

const K: usize = 8;

/// Lifts a raw graph to width-`K` features with a fixed random map so the
/// layer can consume it directly.
fn widen(g: &GeometricGraph, seed: u64) -> GeometricGraph {
    let mut r = rng(seed);
    let w: Vec<f64> = (0..K).map(|_| r.random_range(-1.0..1.0)).collect();
    let h = g.h().iter().flat_map(|&s| w.iter().map(move |&wk| (s * wk).tanh())).collect();
    GeometricGraph::new(h, K, g.x().to_vec(), g.v().to_vec(), g.edges().to_vec(), g.edge_attr().to_vec(), 1).unwrap()
}

fn layer_and_params(seed: u64) -> (EgnnLayer, ParamSet) {
    let layer = EgnnLayer::new("l", K, 1);
    let mut params = ParamSet::new();
    layer.init(&mut params, &mut rng(seed));
    // larger coordinate head so the equivariance check exercises the update
    let w = params.get_mut("l.coord.1.w").unwrap();
    w.data_mut().iter_mut().for_each(|v| *v *= 300.0);
    (layer, params)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn layer_is_se3_equivariant(seed in any::<u64>()) {
        let (layer, params) = layer_and_params(seed);
        let g = widen(&random_graph(seed, 5), seed);
        let t = random_transform(seed ^ 77);
        let out = egnn_layer_forward(&g, &layer, &params).unwrap();
        let moved = egnn_layer_forward(&apply_rigid_transform(&g, &t), &layer, &params).unwrap();
        let xt: Vec<_> = out.x.iter().map(|&p| t.apply_point(p)).collect();
        let vt: Vec<_> = out.v.iter().map(|&p| t.apply_vector(p)).collect();
        prop_assert!(max_diff(&xt, &moved.x) < 1e-9);
        prop_assert!(max_diff(&vt, &moved.v) < 1e-9);
        prop_assert!(out.h.max_abs_diff(&moved.h).unwrap() < 1e-9);
        // the update actually moved something
        prop_assert!(max_diff(&out.x, g.x()) > 1e-6);
    }
}

/// Relabel nodes by every permutation of 3 and compare against the
/// permuted outputs.
#[test]
fn layer_is_permutation_equivariant() {
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    for seed in 0..5 {
        let (layer, params) = layer_and_params(seed);
        let g = widen(&random_graph(seed, 3), seed);
        let out = egnn_layer_forward(&g, &layer, &params).unwrap();
        for perm in perms {
            let pg = g.permute_nodes(&perm).unwrap();
            let pout = egnn_layer_forward(&pg, &layer, &params).unwrap();
            for (new, &old) in perm.iter().enumerate() {
                assert!(max_diff(&[out.x[old]], &[pout.x[new]]) < 1e-12);
                assert!(max_diff(&[out.v[old]], &[pout.v[new]]) < 1e-12);
                for c in 0..K {
                    assert!((out.h.data()[old * K + c] - pout.h.data()[new * K + c]).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn free_drift_configuration() {
    let layer = EgnnLayer::new("l", K, 1);
    let mut params = ParamSet::new();
    layer.init(&mut params, &mut rng(1));
    layer.free_drift(&mut params);
    let g = widen(&random_graph(3, 4), 3);
    let out = egnn_layer_forward(&g, &layer, &params).unwrap();
    let drift: Vec<_> = g.x().iter().zip(g.v()).map(|(&x, &v)| vec3::add(x, v)).collect();
    assert!(max_diff(&out.x, &drift) < 1e-15);
    assert!(max_diff(&out.v, g.v()) < 1e-15);
}

#[test]
fn zero_messages_make_h_local() {
    let layer = EgnnLayer::new("l", K, 1);
    let mut params = ParamSet::new();
    layer.init(&mut params, &mut rng(2));
    params.insert("l.edge.1.w", Tensor::zeros(vec![K, K]));
    params.insert("l.edge.1.b", Tensor::zeros(vec![K]));
    let g = widen(&random_graph(4, 4), 4);
    let other = GeometricGraph::new(
        g.h().to_vec(),
        K,
        common::random_points(&mut rng(9), 4, 3.0),
        common::random_points(&mut rng(10), 4, 1.0),
        g.edges().to_vec(),
        vec![-1.0; g.edges().len()],
        1,
    )
    .unwrap();
    let a = egnn_layer_forward(&g, &layer, &params).unwrap();
    let b = egnn_layer_forward(&other, &layer, &params).unwrap();
    assert_eq!(a.h, b.h);
}

#[test]
fn width_mismatch_is_an_error() {
    let (layer, params) = layer_and_params(0);
    assert!(egnn_layer_forward(&random_graph(0, 4), &layer, &params).is_err());
}
