mod common;

use common::max_diff;
use egno_core::dataset::{generate_dataset, generate_split, Dataset, DatasetSpec, Split};
use egno_core::geometry::{random_rotation, vec3, Vec3};
use egno_core::nbody::{coulomb_accelerations, sample_initial_state, simulate_trajectory, total_energy, SimConfig};
use egno_core::CoreError;

#[test]
fn free_particles_move_in_straight_lines() {
    let cfg = SimConfig::default();
    let s = sample_initial_state(&cfg, 17).unwrap();
    let traj = simulate_trajectory(&s.x, &s.v, &[0.0; 5], &cfg).unwrap();
    assert_eq!(traj.len(), cfg.frames);
    assert_eq!(traj.frame_times(), (0..cfg.frames as u64).collect::<Vec<_>>().as_slice());
    for (f, frame) in traj.frames().iter().enumerate() {
        let t = (f * cfg.record_stride) as f64 * cfg.dt;
        let want: Vec<Vec3> = s.x.iter().zip(&s.v).map(|(&x, &v)| vec3::add(x, vec3::scale(v, t))).collect();
        assert!(max_diff(&frame.x, &want) < 1e-10, "frame {f}");
        assert!(max_diff(&frame.v, &s.v) < 1e-15);
    }
}

#[test]
fn momentum_is_conserved_without_friction() {
    let cfg = SimConfig::default();
    for seed in 0..20 {
        let s = sample_initial_state(&cfg, seed).unwrap();
        let traj = simulate_trajectory(&s.x, &s.v, &s.charges, &cfg).unwrap();
        let momentum = |v: &[Vec3]| v.iter().fold([0.0; 3], |a, &b| vec3::add(a, b));
        let p0 = momentum(&s.v);
        for frame in traj.frames() {
            assert!(max_diff(&[momentum(&frame.v)], &[p0]) < 1e-8);
        }
    }
}

/// Central differences of the pair potential recover the force field.
#[test]
fn forces_are_the_negative_potential_gradient() {
    let cfg = SimConfig::default();
    let s = sample_initial_state(&cfg, 4).unwrap();
    let a = coulomb_accelerations(&s.x, &s.charges, cfg.softening);
    let zero_v = vec![[0.0; 3]; s.x.len()];
    let h = 1e-6;
    for i in 0..s.x.len() {
        for c in 0..3 {
            let mut xp = s.x.clone();
            let mut xm = s.x.clone();
            xp[i][c] += h;
            xm[i][c] -= h;
            let du = (total_energy(&xp, &zero_v, &s.charges, cfg.softening)
                - total_energy(&xm, &zero_v, &s.charges, cfg.softening))
                / (2.0 * h);
            assert!((a[i][c] + du).abs() < 1e-6, "node {i} coord {c}: {} vs {}", a[i][c], -du);
        }
    }
}

fn two_body_cases() -> Vec<(Vec<Vec3>, Vec<Vec3>, Vec<f64>)> {
    vec![
        // bound pair on a near-circular orbit
        (vec![[0.5, 0.0, 0.0], [-0.5, 0.0, 0.0]], vec![[0.0, 0.7, 0.0], [0.0, -0.7, 0.0]], vec![1.0, -1.0]),
        // repelling pair with a glancing approach
        (vec![[1.0, 0.2, 0.0], [-1.0, -0.2, 0.1]], vec![[-0.5, 0.0, 0.1], [0.5, 0.0, 0.0]], vec![1.0, 1.0]),
    ]
}

#[test]
fn two_body_energy_drift_is_small_against_fine_reference() {
    let cfg = SimConfig { n_particles: 2, ..Default::default() };
    let fine = SimConfig {
        dt: cfg.dt / 10.0,
        record_stride: cfg.record_stride * 10,
        ..cfg.clone()
    };
    for (x0, v0, q) in two_body_cases() {
        let coarse = simulate_trajectory(&x0, &v0, &q, &cfg).unwrap();
        let reference = simulate_trajectory(&x0, &v0, &q, &fine).unwrap();
        let e0 = total_energy(&x0, &v0, &q, cfg.softening);
        for (fc, fr) in coarse.frames().iter().zip(reference.frames()) {
            let ec = total_energy(&fc.x, &fc.v, &q, cfg.softening);
            let er = total_energy(&fr.x, &fr.v, &q, cfg.softening);
            assert!(((ec - e0) / e0).abs() < 1e-3, "drift {}", (ec - e0) / e0);
            assert!(((ec - er) / er).abs() < 1e-3);
            // both integrations follow the same path
            assert!(max_diff(&fc.x, &fr.x) < 1e-3);
        }
    }
}

#[test]
fn simulation_commutes_with_rotation() {
    let cfg = SimConfig::default();
    for seed in 0..10 {
        let s = sample_initial_state(&cfg, 100 + seed).unwrap();
        let r = random_rotation(seed);
        let rot = |p: &[Vec3]| -> Vec<Vec3> { p.iter().map(|&q| r.apply_vector(q)).collect() };
        let a = simulate_trajectory(&s.x, &s.v, &s.charges, &cfg).unwrap();
        let b = simulate_trajectory(&rot(&s.x), &rot(&s.v), &s.charges, &cfg).unwrap();
        for (fa, fb) in a.frames().iter().zip(b.frames()) {
            assert!(max_diff(&rot(&fa.x), &fb.x) < 1e-8);
            assert!(max_diff(&rot(&fa.v), &fb.v) < 1e-8);
        }
    }
}

#[test]
fn strong_friction_only_drains_kinetic_energy() {
    let cfg = SimConfig { friction: 10.0, ..Default::default() };
    let s = sample_initial_state(&cfg, 8).unwrap();
    let traj = simulate_trajectory(&s.x, &s.v, &[0.0; 5], &cfg).unwrap();
    let ke: Vec<f64> = traj
        .frames()
        .iter()
        .map(|f| f.v.iter().map(|&v| 0.5 * vec3::dot(v, v)).sum())
        .collect();
    assert!(ke.windows(2).all(|w| w[1] <= w[0]), "{ke:?}");
    assert!(ke.last().unwrap() < &(ke[0] * 1e-3));
}

fn small_spec(seed: u64) -> DatasetSpec {
    DatasetSpec {
        sim: SimConfig { seed, ..Default::default() },
        train: 6,
        valid: 3,
        test: 3,
        ..Default::default()
    }
}

#[test]
fn dataset_generation_is_bit_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let pa = generate_dataset(&small_spec(5), a.path()).unwrap();
    let pb = generate_dataset(&small_spec(5), b.path()).unwrap();
    for (x, y) in pa.iter().zip(&pb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    let c = generate_split(&small_spec(6), Split::Train).unwrap();
    assert_ne!(c, Dataset::read(&pa[0]).unwrap());
}

#[test]
fn dataset_round_trip_is_bit_identical() {
    let ds = generate_split(&small_spec(1), Split::Valid).unwrap();
    let back = Dataset::from_bytes(&ds.to_bytes().unwrap()).unwrap();
    assert_eq!(ds.to_bytes().unwrap(), back.to_bytes().unwrap());
    for i in 0..ds.len() {
        assert_eq!(ds.sample(i).unwrap(), back.sample(i).unwrap());
    }
    // regenerating from the stored metadata reproduces the file
    let again = generate_split(back.spec(), back.split()).unwrap();
    assert_eq!(again.to_bytes().unwrap(), ds.to_bytes().unwrap());
}

#[test]
fn damaged_dataset_files_fail_cleanly() {
    let bytes = generate_split(&small_spec(1), Split::Test).unwrap().to_bytes().unwrap();

    let mut bad = bytes.clone();
    bad[21] = b'#'; // inside the JSON header
    assert!(matches!(Dataset::from_bytes(&bad), Err(CoreError::Json(_))));

    let cut = &bytes[..bytes.len() - 12];
    match Dataset::from_bytes(cut) {
        Err(CoreError::Truncated { offset, .. }) => assert_eq!(offset, cut.len() as u64),
        other => panic!("{other:?}"),
    }

    let mut v2 = bytes.clone();
    v2[8..12].copy_from_slice(&2u32.to_le_bytes());
    let err = Dataset::from_bytes(&v2).unwrap_err().to_string();
    assert!(err.contains('2') && err.contains('1'), "{err}");
}

#[test]
fn splits_are_disjoint() {
    let spec = small_spec(2);
    let sets: Vec<Dataset> = Split::ALL.iter().map(|&s| generate_split(&spec, s).unwrap()).collect();
    let mut firsts = Vec::new();
    for ds in &sets {
        for i in 0..ds.len() {
            firsts.push(ds.frame(i, 0).x);
        }
    }
    for i in 0..firsts.len() {
        for j in (i + 1)..firsts.len() {
            assert_ne!(firsts[i], firsts[j]);
        }
    }
}

#[test]
fn generation_requires_a_long_enough_run() {
    let mut spec = small_spec(0);
    spec.sim.frames = 10;
    assert!(generate_split(&spec, Split::Train).is_err());
}
