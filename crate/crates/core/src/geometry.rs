//! Geometric graphs, rigid motions and center-of-mass handling.
//!
//! Points are row vectors; a transform maps `x ↦ x Rᵀ + μ` and `v ↦ v Rᵀ`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{CoreError, Result};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub mod vec3 {
    use super::{Mat3, Vec3};

    #[inline]
    pub fn add(a: Vec3, b: Vec3) -> Vec3 {
        [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
    }

    #[inline]
    pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }

    #[inline]
    pub fn scale(a: Vec3, s: f64) -> Vec3 {
        [a[0] * s, a[1] * s, a[2] * s]
    }

    #[inline]
    pub fn dot(a: Vec3, b: Vec3) -> f64 {
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    }

    #[inline]
    pub fn norm(a: Vec3) -> f64 {
        dot(a, a).sqrt()
    }

    #[inline]
    pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    }

    /// `R a` for a column vector, equivalently `a Rᵀ` for a row vector.
    #[inline]
    pub fn rotate(r: &Mat3, a: Vec3) -> Vec3 {
        [dot(r[0], a), dot(r[1], a), dot(r[2], a)]
    }

    pub fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
        let mut c = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        c
    }

    pub fn transpose(a: &Mat3) -> Mat3 {
        let mut t = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                t[i][j] = a[j][i];
            }
        }
        t
    }

    pub fn det(a: &Mat3) -> f64 {
        dot(a[0], cross(a[1], a[2]))
    }
}

/// One system state: invariant node features `h` (N×k, row-major), positions
/// and velocities, plus directed edges with per-edge attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometricGraph {
    h: Vec<f64>,
    feature_dim: usize,
    x: Vec<Vec3>,
    v: Vec<Vec3>,
    edges: Vec<(usize, usize)>,
    edge_attr: Vec<f64>,
    edge_attr_dim: usize,
}

impl GeometricGraph {
    pub fn new(
        h: Vec<f64>,
        feature_dim: usize,
        x: Vec<Vec3>,
        v: Vec<Vec3>,
        edges: Vec<(usize, usize)>,
        edge_attr: Vec<f64>,
        edge_attr_dim: usize,
    ) -> Result<Self> {
        let n = x.len();
        if v.len() != n {
            return Err(CoreError::InvalidGraph(format!("{} positions but {} velocities", n, v.len())));
        }
        if h.len() != n * feature_dim {
            return Err(CoreError::InvalidGraph(format!(
                "node features hold {} values, expected {n}×{feature_dim}",
                h.len()
            )));
        }
        if edge_attr.len() != edges.len() * edge_attr_dim {
            return Err(CoreError::InvalidGraph(format!(
                "edge attributes hold {} values, expected {}×{edge_attr_dim}",
                edge_attr.len(),
                edges.len()
            )));
        }
        for &(i, j) in &edges {
            if i == j {
                return Err(CoreError::InvalidGraph(format!("self-loop at node {i}")));
            }
            if i >= n || j >= n {
                return Err(CoreError::InvalidGraph(format!("edge ({i}, {j}) out of range for {n} nodes")));
            }
        }
        if x.iter().chain(&v).flatten().any(|c| !c.is_finite()) {
            return Err(CoreError::InvalidGraph("non-finite position or velocity".into()));
        }
        Ok(Self {
            h,
            feature_dim,
            x,
            v,
            edges,
            edge_attr,
            edge_attr_dim,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.x.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn edge_attr_dim(&self) -> usize {
        self.edge_attr_dim
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn x(&self) -> &[Vec3] {
        &self.x
    }

    pub fn v(&self) -> &[Vec3] {
        &self.v
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_attr(&self) -> &[f64] {
        &self.edge_attr
    }

    /// Relabels nodes so that new node `i` is old node `perm[i]`.
    pub fn permute_nodes(&self, perm: &[usize]) -> Result<Self> {
        let n = self.num_nodes();
        let mut inverse = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            if old >= n || inverse[old] != usize::MAX {
                return Err(CoreError::InvalidGraph("not a permutation".into()));
            }
            inverse[old] = new;
        }
        if perm.len() != n {
            return Err(CoreError::InvalidGraph("not a permutation".into()));
        }
        let k = self.feature_dim;
        let h = perm.iter().flat_map(|&o| self.h[o * k..(o + 1) * k].to_vec()).collect();
        let edges = self.edges.iter().map(|&(i, j)| (inverse[i], inverse[j])).collect();
        Self::new(
            h,
            k,
            perm.iter().map(|&o| self.x[o]).collect(),
            perm.iter().map(|&o| self.v[o]).collect(),
            edges,
            self.edge_attr.clone(),
            self.edge_attr_dim,
        )
    }
}

/// A rotation `R ∈ SO(3)` followed by a translation `μ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Mat3,
    translation: Vec3,
}

const ORTHO_TOL: f64 = 1e-12;

impl RigidTransform {
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        let rtr = vec3::matmul(&vec3::transpose(&rotation), &rotation);
        for (i, row) in rtr.iter().enumerate() {
            for (j, &val) in row.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                if (val - want).abs() > ORTHO_TOL {
                    return Err(CoreError::InvalidTransform(format!(
                        "RᵀR[{i}][{j}] = {val}, expected {want}"
                    )));
                }
            }
        }
        let det = vec3::det(&rotation);
        if (det - 1.0).abs() > ORTHO_TOL {
            return Err(CoreError::InvalidTransform(format!("det(R) = {det}")));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0; 3],
        }
    }

    pub fn translation(mu: Vec3) -> Self {
        Self {
            translation: mu,
            ..Self::identity()
        }
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn mu(&self) -> Vec3 {
        self.translation
    }

    pub fn with_translation(mut self, mu: Vec3) -> Self {
        self.translation = mu;
        self
    }

    pub fn apply_point(&self, p: Vec3) -> Vec3 {
        vec3::add(vec3::rotate(&self.rotation, p), self.translation)
    }

    pub fn apply_vector(&self, v: Vec3) -> Vec3 {
        vec3::rotate(&self.rotation, v)
    }

    /// `next ∘ self`: apply `self` first, then `next`.
    pub fn then(&self, next: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: vec3::matmul(&next.rotation, &self.rotation),
            translation: next.apply_point(self.translation),
        }
    }
}

pub fn apply_rigid_transform(g: &GeometricGraph, t: &RigidTransform) -> GeometricGraph {
    GeometricGraph {
        x: g.x.iter().map(|&p| t.apply_point(p)).collect(),
        v: g.v.iter().map(|&p| t.apply_vector(p)).collect(),
        ..g.clone()
    }
}

/// Random proper rotation from a Gaussian matrix orthonormalized column by
/// column, with the last column's sign fixed so that det = +1.
pub fn random_rotation(seed: u64) -> RigidTransform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut cols = [[0.0; 3]; 3];
        for c in cols.iter_mut() {
            for v in c.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
        }
        let Some(q) = gram_schmidt(cols) else { continue };
        let mut r = vec3::transpose(&q);
        if vec3::det(&r) < 0.0 {
            for row in r.iter_mut() {
                row[2] = -row[2];
            }
        }
        if let Ok(t) = RigidTransform::new(r, [0.0; 3]) {
            return t;
        }
    }
}

// Two passes of modified Gram-Schmidt; None when the columns are (nearly)
// linearly dependent.
fn gram_schmidt(mut cols: [Vec3; 3]) -> Option<[Vec3; 3]> {
    for _ in 0..2 {
        for i in 0..3 {
            for j in 0..i {
                let d = vec3::dot(cols[i], cols[j]);
                cols[i] = vec3::sub(cols[i], vec3::scale(cols[j], d));
            }
            let n = vec3::norm(cols[i]);
            if n < 1e-6 {
                return None;
            }
            cols[i] = vec3::scale(cols[i], 1.0 / n);
        }
    }
    Some(cols)
}

/// All `N(N−1)` ordered pairs `(i, j)`, `i ≠ j`, in `i`-major order.
pub fn build_fully_connected_edges(n: usize) -> Result<Vec<(usize, usize)>> {
    if n < 2 {
        return Err(CoreError::InvalidGraph(format!("need at least 2 nodes, got {n}")));
    }
    Ok((0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect())
}

/// Returns positions shifted to zero mean together with the removed mean.
pub fn zero_center_of_mass(x: &[Vec3]) -> (Vec<Vec3>, Vec3) {
    let n = x.len().max(1) as f64;
    let mut com = [0.0; 3];
    for p in x {
        com = vec3::add(com, *p);
    }
    com = vec3::scale(com, 1.0 / n);
    (x.iter().map(|&p| vec3::sub(p, com)).collect(), com)
}

/// One recorded simulator frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub x: Vec<Vec3>,
    pub v: Vec<Vec3>,
}

/// Time-ordered frames with integer frame times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    frames: Vec<Frame>,
    frame_times: Vec<u64>,
}

impl Trajectory {
    pub fn new(frames: Vec<Frame>, frame_times: Vec<u64>) -> Result<Self> {
        if frames.is_empty() || frames.len() != frame_times.len() {
            return Err(CoreError::InvalidGraph(format!(
                "{} frames with {} times",
                frames.len(),
                frame_times.len()
            )));
        }
        let n = frames[0].x.len();
        if frames.iter().any(|f| f.x.len() != n || f.v.len() != n) {
            return Err(CoreError::InvalidGraph("frame shapes vary".into()));
        }
        if frame_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CoreError::InvalidGraph("frame times not increasing".into()));
        }
        Ok(Self {
            frames,
            frame_times,
        })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frame_times(&self) -> &[u64] {
        &self.frame_times
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn num_nodes(&self) -> usize {
        self.frames[0].x.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_graph() -> GeometricGraph {
        let edges = build_fully_connected_edges(3).unwrap();
        let attr = (0..edges.len()).map(|e| e as f64).collect();
        GeometricGraph::new(
            vec![0.1, 0.2, 0.3],
            1,
            vec![[1.0, 2.0, 3.0], [-1.0, 0.5, 0.0], [0.0, 0.0, 2.0]],
            vec![[0.1, 0.0, 0.0], [0.0, -0.2, 0.3], [0.5, 0.5, 0.5]],
            edges,
            attr,
            1,
        )
        .unwrap()
    }

    #[test]
    fn edge_counts_and_order() {
        assert_eq!(build_fully_connected_edges(5).unwrap().len(), 20);
        assert_eq!(build_fully_connected_edges(2).unwrap(), vec![(0, 1), (1, 0)]);
        assert!(build_fully_connected_edges(1).is_err());
        let e = build_fully_connected_edges(6).unwrap();
        let mut seen = std::collections::HashSet::new();
        for &(i, j) in &e {
            assert_ne!(i, j);
            assert!(seen.insert((i, j)));
        }
        assert_eq!(seen.len(), 30);
    }

    #[test]
    fn graph_rejects_self_loops_and_bad_indices() {
        let ok = sample_graph();
        let mk = |edges: Vec<(usize, usize)>| {
            let n = edges.len();
            GeometricGraph::new(ok.h.clone(), 1, ok.x.clone(), ok.v.clone(), edges, vec![0.0; n], 1)
        };
        assert!(mk(vec![(1, 1)]).is_err());
        assert!(mk(vec![(0, 3)]).is_err());
        assert!(mk(vec![(0, 2)]).is_ok());
    }

    #[test]
    fn center_of_mass_examples() {
        let (xc, com) = zero_center_of_mass(&[[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]);
        assert_eq!(com, [0.0; 3]);
        assert_eq!(xc, vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]);
        let (xc, com) = zero_center_of_mass(&[[2.0, 2.0, 2.0]]);
        assert_eq!(com, [2.0; 3]);
        assert_eq!(xc, vec![[0.0; 3]]);
    }

    #[test]
    fn identity_and_translation() {
        let g = sample_graph();
        assert_eq!(apply_rigid_transform(&g, &RigidTransform::identity()), g);
        let moved = apply_rigid_transform(&g, &RigidTransform::translation([1.0, -2.0, 0.5]));
        assert_eq!(moved.v(), g.v());
        assert_eq!(moved.x()[0], [2.0, 0.0, 3.5]);
        assert_eq!(moved.h(), g.h());
        assert_eq!(moved.edges(), g.edges());
    }

    #[test]
    fn random_rotation_is_proper_and_deterministic() {
        for seed in 0..200 {
            let t = random_rotation(seed);
            let r = t.rotation();
            let rtr = vec3::matmul(&vec3::transpose(r), r);
            for i in 0..3 {
                for j in 0..3 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((rtr[i][j] - want).abs() < 1e-12);
                }
            }
            assert!((vec3::det(r) - 1.0).abs() < 1e-12);
            assert_eq!(t.mu(), [0.0; 3]);
        }
        assert_eq!(random_rotation(9), random_rotation(9));
        assert_ne!(random_rotation(9), random_rotation(10));
    }

    #[test]
    fn improper_matrix_is_rejected() {
        let reflect = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]];
        assert!(RigidTransform::new(reflect, [0.0; 3]).is_err());
        let skew = [[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(RigidTransform::new(skew, [0.0; 3]).is_err());
    }

    #[test]
    fn permutation_relabels_edges() {
        let g = sample_graph();
        let p = g.permute_nodes(&[2, 0, 1]).unwrap();
        assert_eq!(p.x()[0], g.x()[2]);
        assert_eq!(p.h()[1], g.h()[0]);
        // old edge (0, 1) is new edge (1, 2), with the same attribute
        let old = g.edges().iter().position(|&e| e == (0, 1)).unwrap();
        assert_eq!(p.edges()[old], (1, 2));
        assert!(g.permute_nodes(&[0, 0, 1]).is_err());
    }
}
