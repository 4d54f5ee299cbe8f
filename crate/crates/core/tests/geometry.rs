mod common;

use common::{max_diff, random_graph, random_points, random_transform, rng};
use egno_core::geometry::{apply_rigid_transform, vec3, zero_center_of_mass, RigidTransform};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn transforms_preserve_pairwise_distances(seed in any::<u64>()) {
        let g = random_graph(seed, 6);
        let t = apply_rigid_transform(&g, &random_transform(seed));
        for i in 0..6 {
            for j in 0..6 {
                let a = vec3::norm(vec3::sub(g.x()[i], g.x()[j]));
                let b = vec3::norm(vec3::sub(t.x()[i], t.x()[j]));
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
        prop_assert_eq!(t.h(), g.h());
        prop_assert_eq!(t.edge_attr(), g.edge_attr());
    }

    #[test]
    fn center_of_mass_is_idempotent_and_invertible(seed in any::<u64>(), n in 1usize..12) {
        let x = random_points(&mut rng(seed), n, 10.0);
        let (xc, com) = zero_center_of_mass(&x);
        let (xcc, com2) = zero_center_of_mass(&xc);
        prop_assert!(com2.iter().all(|c| c.abs() < 1e-12));
        prop_assert!(max_diff(&xc, &xcc) < 1e-12);
        let back: Vec<_> = xc.iter().map(|&p| vec3::add(p, com)).collect();
        prop_assert!(max_diff(&back, &x) < 1e-12);
    }

    #[test]
    fn composition_matches_sequential_application(s1 in any::<u64>(), s2 in any::<u64>()) {
        let (t1, t2) = (random_transform(s1), random_transform(s2));
        let g = random_graph(s1 ^ s2, 4);
        let seq = apply_rigid_transform(&apply_rigid_transform(&g, &t1), &t2);
        // brute force: (R2 R1, R2 μ1 + μ2) built entry by entry
        let (r1, r2) = (t1.rotation(), t2.rotation());
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    r[i][j] += r2[i][k] * r1[k][j];
                }
            }
        }
        let mu1 = t1.mu();
        let mut mu = t2.mu();
        for i in 0..3 {
            for k in 0..3 {
                mu[i] += r2[i][k] * mu1[k];
            }
        }
        let composed = RigidTransform::new(r, mu).unwrap();
        let once = apply_rigid_transform(&g, &composed);
        prop_assert!(max_diff(seq.x(), once.x()) < 1e-10);
        prop_assert!(max_diff(seq.v(), once.v()) < 1e-10);
        let via_then = apply_rigid_transform(&g, &t1.then(&t2));
        prop_assert!(max_diff(via_then.x(), once.x()) < 1e-10);
    }
}

#[test]
fn edge_construction_is_order_stable() {
    let a = egno_core::geometry::build_fully_connected_edges(7).unwrap();
    let b = egno_core::geometry::build_fully_connected_edges(7).unwrap();
    assert_eq!(a, b);
    assert!(a.windows(2).all(|w| w[0] < w[1]));
}
