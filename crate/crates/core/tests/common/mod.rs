#![allow(dead_code)]

use egno_core::dataset::input_graph;
use egno_core::geometry::{Frame, GeometricGraph, RigidTransform, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<Vec3> {
    (0..n)
        .map(|_| [0; 3].map(|_| rng.random_range(-scale..scale)))
        .collect()
}

/// Fully connected graph with `h = ‖v‖` and charge-product edge attributes.
pub fn random_graph(seed: u64, n: usize) -> GeometricGraph {
    let mut r = rng(seed);
    let frame = Frame {
        x: random_points(&mut r, n, 2.0),
        v: random_points(&mut r, n, 1.0),
    };
    let q: Vec<f64> = (0..n).map(|_| if r.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    input_graph(&frame, &q).unwrap()
}

pub fn random_transform(seed: u64) -> RigidTransform {
    let mut r = rng(seed ^ 0x5eed);
    let mu = [0; 3].map(|_| r.random_range(-5.0..5.0));
    egno_core::geometry::random_rotation(seed).with_translation(mu)
}

pub fn max_diff(a: &[Vec3], b: &[Vec3]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(p, q)| (0..3).map(move |c| (p[c] - q[c]).abs()))
        .fold(0.0, f64::max)
}

pub fn max_diff_slices(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
