//! Charged N-body ground truth: Coulomb forces, optional friction and a
//! velocity-Verlet integrator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::{vec3, Frame, Trajectory, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_particles: usize,
    pub position_std: f64,
    pub velocity_norm: f64,
    pub softening: f64,
    pub friction: f64,
    pub dt: f64,
    pub record_stride: usize,
    pub frames: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_particles: 5,
            position_std: 1.0,
            velocity_norm: 0.5,
            softening: 1e-2,
            friction: 0.0,
            dt: 1e-3,
            record_stride: 100,
            frames: 11,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::InvalidConfig(m.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if self.record_stride == 0 {
            return bad("record_stride must be at least 1");
        }
        if !(self.friction >= 0.0 && self.friction.is_finite()) {
            return bad("friction must be nonnegative");
        }
        if !(self.softening > 0.0 && self.softening.is_finite()) {
            return bad("softening must be positive");
        }
        if self.n_particles < 2 {
            return bad("need at least 2 particles");
        }
        if self.frames == 0 {
            return bad("frames must be at least 1");
        }
        if !(self.position_std >= 0.0 && self.velocity_norm >= 0.0) {
            return bad("initial-condition scales must be nonnegative");
        }
        Ok(())
    }
}

/// `a_i = Σ_{j≠i} q_i q_j (x_i − x_j) / (‖x_i − x_j‖ + ε)³` with unit masses.
pub fn coulomb_accelerations(x: &[Vec3], q: &[f64], softening: f64) -> Vec<Vec3> {
    let n = x.len();
    let mut a = vec![[0.0; 3]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = vec3::sub(x[i], x[j]);
            let s = vec3::norm(d) + softening;
            let f = vec3::scale(d, q[i] * q[j] / (s * s * s));
            a[i] = vec3::add(a[i], f);
            a[j] = vec3::sub(a[j], f);
        }
    }
    a
}

/// Kinetic energy plus the pair potential whose negative gradient is the
/// softened Coulomb force above.
pub fn total_energy(x: &[Vec3], v: &[Vec3], q: &[f64], softening: f64) -> f64 {
    let kinetic: f64 = v.iter().map(|&vi| 0.5 * vec3::dot(vi, vi)).sum();
    let mut potential = 0.0;
    for i in 0..x.len() {
        for j in (i + 1)..x.len() {
            let s = vec3::norm(vec3::sub(x[i], x[j])) + softening;
            potential += q[i] * q[j] * (1.0 / s - softening / (2.0 * s * s));
        }
    }
    kinetic + potential
}

fn accelerations(x: &[Vec3], v: &[Vec3], q: &[f64], cfg: &SimConfig) -> Vec<Vec3> {
    let mut a = coulomb_accelerations(x, q, cfg.softening);
    if cfg.friction > 0.0 {
        for (ai, vi) in a.iter_mut().zip(v) {
            *ai = vec3::sub(*ai, vec3::scale(*vi, cfg.friction));
        }
    }
    a
}

/// Records `cfg.frames` frames, one every `record_stride` integrator steps,
/// starting with the initial state.
pub fn simulate_trajectory(x0: &[Vec3], v0: &[Vec3], q: &[f64], cfg: &SimConfig) -> Result<Trajectory> {
    cfg.validate()?;
    if x0.len() != v0.len() || x0.len() != q.len() {
        return Err(CoreError::InvalidConfig(format!(
            "{} positions, {} velocities, {} charges",
            x0.len(),
            v0.len(),
            q.len()
        )));
    }
    let dt = cfg.dt;
    let mut x = x0.to_vec();
    let mut v = v0.to_vec();
    let mut a = accelerations(&x, &v, q, cfg);
    let mut frames = Vec::with_capacity(cfg.frames);
    frames.push(Frame {
        x: x.clone(),
        v: v.clone(),
    });
    let total = (cfg.frames - 1) * cfg.record_stride;
    let mut v_half = vec![[0.0; 3]; v.len()];
    for step in 1..=total {
        for i in 0..x.len() {
            v_half[i] = vec3::add(v[i], vec3::scale(a[i], 0.5 * dt));
            x[i] = vec3::add(x[i], vec3::scale(v_half[i], dt));
        }
        a = accelerations(&x, &v_half, q, cfg);
        for i in 0..v.len() {
            v[i] = vec3::add(v_half[i], vec3::scale(a[i], 0.5 * dt));
        }
        if x.iter().chain(&v).flatten().any(|c| !c.is_finite()) {
            return Err(CoreError::NonFiniteState { step });
        }
        if step % cfg.record_stride == 0 {
            frames.push(Frame {
                x: x.clone(),
                v: v.clone(),
            });
        }
    }
    let times = (0..frames.len() as u64).collect();
    Trajectory::new(frames, times)
}

/// Charges, positions and velocities drawn for one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub charges: Vec<f64>,
    pub x: Vec<Vec3>,
    pub v: Vec<Vec3>,
}

pub fn sample_initial_state(cfg: &SimConfig, seed: u64) -> Result<InitialState> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n_particles;
    let charges = (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    let pos = Normal::new(0.0, cfg.position_std).map_err(|e| CoreError::InvalidConfig(e.to_string()))?;
    let x = (0..n)
        .map(|_| [pos.sample(&mut rng), pos.sample(&mut rng), pos.sample(&mut rng)])
        .collect();
    let v = (0..n)
        .map(|_| loop {
            let d: Vec3 = [
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            ];
            let len = vec3::norm(d);
            if len > 1e-12 {
                break vec3::scale(d, cfg.velocity_norm / len);
            }
        })
        .collect();
    Ok(InitialState { charges, x, v })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn like_charges_repel_unlike_attract() {
        let x = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        let a = coulomb_accelerations(&x, &[1.0, 1.0], 1e-300);
        assert!((a[0][0] + 1.0).abs() < 1e-12 && (a[1][0] - 1.0).abs() < 1e-12);
        let a = coulomb_accelerations(&x, &[1.0, -1.0], 1e-300);
        assert!((a[0][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forces_sum_to_zero() {
        let s = sample_initial_state(&SimConfig::default(), 3).unwrap();
        let a = coulomb_accelerations(&s.x, &s.charges, 1e-2);
        for c in 0..3 {
            assert!(a.iter().map(|ai| ai[c]).sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn coincident_particles_are_finite() {
        let a = coulomb_accelerations(&[[1.0; 3], [1.0; 3]], &[1.0, 1.0], 1e-2);
        assert!(a.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn validation_rejects_bad_config() {
        for cfg in [
            SimConfig { dt: 0.0, ..Default::default() },
            SimConfig { record_stride: 0, ..Default::default() },
            SimConfig { friction: -1.0, ..Default::default() },
            SimConfig { softening: 0.0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn blow_up_reports_step() {
        let cfg = SimConfig { dt: 1e300, frames: 3, record_stride: 1, ..Default::default() };
        let err = simulate_trajectory(&[[0.0; 3], [1.0, 0.0, 0.0]], &[[1.0; 3], [0.0; 3]], &[1.0, 1.0], &cfg)
            .unwrap_err();
        assert!(matches!(err, CoreError::NonFiniteState { step: 1 | 2 }), "{err}");
    }

    #[test]
    fn initial_velocities_have_configured_norm() {
        let s = sample_initial_state(&SimConfig::default(), 1).unwrap();
        for v in &s.v {
            assert!((vec3::norm(*v) - 0.5).abs() < 1e-12);
        }
        assert!(s.charges.iter().all(|&q| q == 1.0 || q == -1.0));
    }
}
