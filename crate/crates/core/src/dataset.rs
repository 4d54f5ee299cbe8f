//! Trajectory datasets: generation, windowing into supervised samples and
//! the `EGNODSET` file format.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::container::{write_container, ContainerReader};
use crate::error::{CoreError, Result};
use crate::geometry::{build_fully_connected_edges, vec3, Frame, GeometricGraph, Trajectory, Vec3};
use crate::grid::{Discretization, TimeGrid};
use crate::nbody::{sample_initial_state, simulate_trajectory, SimConfig};

pub const DATASET_MAGIC: &[u8; 8] = b"EGNODSET";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Valid => 2,
            Split::Test => 3,
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.egnods", self.name())
    }
}

/// Everything needed to regenerate a dataset bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub sim: SimConfig,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    /// ΔT in recorded frames.
    pub window: usize,
    pub p_steps: usize,
    pub discretization: Discretization,
    pub delta: usize,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            train: 3000,
            valid: 2000,
            test: 2000,
            window: 10,
            p_steps: 5,
            discretization: Discretization::Uniform,
            delta: 1,
        }
    }
}

impl DatasetSpec {
    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Valid => self.valid,
            Split::Test => self.test,
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::discretize(self.discretization, self.window, self.p_steps, self.delta)
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        if self.window >= self.sim.frames {
            return Err(CoreError::InvalidConfig(format!(
                "ΔT = {} needs more than {} recorded frames",
                self.window, self.sim.frames
            )));
        }
        self.grid().map(|_| ())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of trajectory `index` in `split`; distinct splits never share seeds
/// for the same index.
pub fn trajectory_seed(master: u64, split: Split, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64((split.tag() << 48) ^ index))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayDecl {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub split: Split,
    pub spec: DatasetSpec,
    pub trajectories: usize,
    pub nodes: usize,
    /// Frames stored per trajectory, `0..=ΔT`.
    pub frames: usize,
    pub arrays: Vec<ArrayDecl>,
}

/// One supervised example: the state at the window start and the states at
/// the grid offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub graph: GeometricGraph,
    pub grid: TimeGrid,
    pub targets: Vec<Frame>,
}

/// Stored trajectories of one split. Arrays are row-major:
/// `charges[T, N]`, `x[T, F, N, 3]`, `v[T, F, N, 3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    header: DatasetHeader,
    charges: Vec<f64>,
    x: Vec<f64>,
    v: Vec<f64>,
}

impl Dataset {
    fn from_parts(split: Split, spec: DatasetSpec, nodes: usize, charges: Vec<f64>, x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let frames = spec.window + 1;
        let t = charges.len() / nodes.max(1);
        let header = DatasetHeader {
            split,
            trajectories: t,
            nodes,
            frames,
            arrays: vec![
                ArrayDecl {
                    name: "charges".into(),
                    shape: vec![t, nodes],
                },
                ArrayDecl {
                    name: "x".into(),
                    shape: vec![t, frames, nodes, 3],
                },
                ArrayDecl {
                    name: "v".into(),
                    shape: vec![t, frames, nodes, 3],
                },
            ],
            spec,
        };
        let ds = Self { header, charges, x, v };
        ds.check_lengths()?;
        Ok(ds)
    }

    fn check_lengths(&self) -> Result<()> {
        let h = &self.header;
        let want = [
            h.trajectories * h.nodes,
            h.trajectories * h.frames * h.nodes * 3,
            h.trajectories * h.frames * h.nodes * 3,
        ];
        let got = [self.charges.len(), self.x.len(), self.v.len()];
        if want != got {
            return Err(CoreError::Format(format!("array lengths {got:?}, expected {want:?}")));
        }
        Ok(())
    }

    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }

    pub fn spec(&self) -> &DatasetSpec {
        &self.header.spec
    }

    pub fn split(&self) -> Split {
        self.header.split
    }

    pub fn len(&self) -> usize {
        self.header.trajectories
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_nodes(&self) -> usize {
        self.header.nodes
    }

    /// ΔT in frames.
    pub fn window(&self) -> usize {
        self.header.spec.window
    }

    pub fn charges(&self, i: usize) -> &[f64] {
        let n = self.header.nodes;
        &self.charges[i * n..(i + 1) * n]
    }

    pub fn frame(&self, i: usize, f: usize) -> Frame {
        let (n, nf) = (self.header.nodes, self.header.frames);
        let start = (i * nf + f) * n * 3;
        let read = |buf: &[f64]| -> Vec<Vec3> {
            buf[start..start + n * 3].chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
        };
        Frame {
            x: read(&self.x),
            v: read(&self.v),
        }
    }

    pub fn trajectory(&self, i: usize) -> Result<Trajectory> {
        let nf = self.header.frames;
        Trajectory::new((0..nf).map(|f| self.frame(i, f)).collect(), (0..nf as u64).collect())
    }

    /// Sample `i` on the dataset's own grid.
    pub fn sample(&self, i: usize) -> Result<Sample> {
        self.sample_on(i, &self.header.spec.grid()?)
    }

    /// Sample `i` with targets read at an arbitrary integer grid.
    pub fn sample_on(&self, i: usize, grid: &TimeGrid) -> Result<Sample> {
        if i >= self.len() {
            return Err(CoreError::InvalidConfig(format!("sample {i} out of range for {} trajectories", self.len())));
        }
        let offsets = grid.integer_offsets()?;
        if let Some(&o) = offsets.iter().find(|&&o| o >= self.header.frames) {
            return Err(CoreError::InvalidGrid(format!(
                "offset {o} beyond the {} stored frames",
                self.header.frames
            )));
        }
        Ok(Sample {
            graph: input_graph(&self.frame(i, 0), self.charges(i))?,
            grid: grid.clone(),
            targets: offsets.iter().map(|&o| self.frame(i, o)).collect(),
        })
    }

    pub fn samples(&self) -> Result<Vec<Sample>> {
        (0..self.len()).map(|i| self.sample(i)).collect()
    }

    /// Keeps the first `n` trajectories.
    pub fn truncated(&self, n: usize) -> Result<Dataset> {
        let n = n.min(self.len());
        let (nodes, nf) = (self.header.nodes, self.header.frames);
        let per = nf * nodes * 3;
        let mut spec = self.header.spec.clone();
        match self.header.split {
            Split::Train => spec.train = n,
            Split::Valid => spec.valid = n,
            Split::Test => spec.test = n,
        }
        Self::from_parts(
            self.header.split,
            spec,
            nodes,
            self.charges[..n * nodes].to_vec(),
            self.x[..n * per].to_vec(),
            self.v[..n * per].to_vec(),
        )
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut buf = Vec::new();
        write_container(
            &mut buf,
            DATASET_MAGIC,
            DATASET_VERSION,
            &header,
            &[&self.charges, &self.x, &self.v],
        )?;
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (mut r, header) = ContainerReader::open(bytes, DATASET_MAGIC, DATASET_VERSION, "dataset")?;
        let header: DatasetHeader = serde_json::from_slice(header)?;
        let mut arrays = Vec::with_capacity(3);
        for (decl, name) in header.arrays.iter().zip(["charges", "x", "v"]) {
            if decl.name != name {
                return Err(CoreError::Format(format!("expected array `{name}`, found `{}`", decl.name)));
            }
            arrays.push(r.f64s(decl.shape.iter().product())?);
        }
        if arrays.len() != 3 {
            return Err(CoreError::Format("header must declare charges, x and v".into()));
        }
        r.finish()?;
        let v = arrays.pop().expect("3 arrays");
        let x = arrays.pop().expect("3 arrays");
        let charges = arrays.pop().expect("3 arrays");
        let ds = Self { header, charges, x, v };
        ds.check_lengths()?;
        Ok(ds)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Input graph at a frame: `h_i = ‖v_i‖`, fully connected edges with
/// attribute `q_i q_j`.
pub fn input_graph(frame: &Frame, charges: &[f64]) -> Result<GeometricGraph> {
    let n = frame.x.len();
    let edges = build_fully_connected_edges(n)?;
    let attr = edges.iter().map(|&(i, j)| charges[i] * charges[j]).collect();
    let h = frame.v.iter().map(|&v| vec3::norm(v)).collect();
    GeometricGraph::new(h, 1, frame.x.clone(), frame.v.clone(), edges, attr, 1)
}

/// Targets at the discretized offsets of the window starting at frame `t`.
pub fn discretize_window(
    traj: &Trajectory,
    t: usize,
    window: usize,
    p: usize,
    mode: Discretization,
    delta: usize,
) -> Result<(TimeGrid, Vec<Frame>)> {
    let grid = TimeGrid::discretize(mode, window, p, delta)?;
    if t + window >= traj.len() {
        return Err(CoreError::InvalidGrid(format!(
            "window [{t}, {}] exceeds {} recorded frames",
            t + window,
            traj.len()
        )));
    }
    let targets = grid
        .integer_offsets()?
        .into_iter()
        .map(|o| traj.frames()[t + o].clone())
        .collect();
    Ok((grid, targets))
}

/// Simulates every trajectory of one split.
pub fn generate_split(spec: &DatasetSpec, split: Split) -> Result<Dataset> {
    spec.validate()?;
    let n = spec.sim.n_particles;
    let count = spec.count(split);
    let frames = spec.window + 1;
    let mut charges = Vec::with_capacity(count * n);
    let mut xs = Vec::with_capacity(count * frames * n * 3);
    let mut vs = Vec::with_capacity(count * frames * n * 3);
    for i in 0..count {
        let init = sample_initial_state(&spec.sim, trajectory_seed(spec.sim.seed, split, i as u64))?;
        let traj = simulate_trajectory(&init.x, &init.v, &init.charges, &spec.sim)?;
        charges.extend_from_slice(&init.charges);
        for f in &traj.frames()[..frames] {
            xs.extend(f.x.iter().flatten());
            vs.extend(f.v.iter().flatten());
        }
    }
    Dataset::from_parts(split, spec.clone(), n, charges, xs, vs)
}

/// Generates all three splits and writes them into `out_dir`.
pub fn generate_dataset(spec: &DatasetSpec, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    Split::ALL
        .iter()
        .map(|&split| {
            let path = out_dir.join(split.file_name());
            generate_split(spec, split)?.write(&path)?;
            Ok(path)
        })
        .collect()
}

/// Reads the three splits written by [`generate_dataset`].
pub fn load_splits(dir: &Path) -> Result<[Dataset; 3]> {
    let read = |s: Split| Dataset::read(&dir.join(s.file_name()));
    Ok([read(Split::Train)?, read(Split::Valid)?, read(Split::Test)?])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> DatasetSpec {
        DatasetSpec {
            train: 4,
            valid: 2,
            test: 3,
            ..Default::default()
        }
    }

    #[test]
    fn window_offsets_match_grid() {
        let ds = generate_split(&tiny(), Split::Train).unwrap();
        let traj = ds.trajectory(0).unwrap();
        let (grid, targets) = discretize_window(&traj, 0, 10, 5, Discretization::Last, 1).unwrap();
        assert_eq!(grid.offsets(), &[6.0, 7.0, 8.0, 9.0, 10.0]);
        assert_eq!(targets[0], traj.frames()[6]);
        assert!(discretize_window(&traj, 1, 10, 5, Discretization::Uniform, 1).is_err());
    }

    #[test]
    fn sample_features() {
        let ds = generate_split(&tiny(), Split::Test).unwrap();
        assert_eq!(ds.len(), 3);
        let s = ds.sample(1).unwrap();
        assert_eq!(s.graph.edges().len(), 20);
        assert_eq!(s.targets.len(), 5);
        assert_eq!(s.targets[4], ds.frame(1, 10));
        let v0 = s.graph.v()[2];
        assert!((s.graph.h()[2] - vec3::norm(v0)).abs() < 1e-15);
        let q = ds.charges(1);
        let e = s.graph.edges().iter().position(|&e| e == (3, 1)).unwrap();
        assert_eq!(s.graph.edge_attr()[e], q[3] * q[1]);
    }

    #[test]
    fn window_must_fit() {
        let mut spec = tiny();
        spec.window = 11;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn seeds_differ_across_splits() {
        assert_ne!(trajectory_seed(0, Split::Train, 0), trajectory_seed(0, Split::Valid, 0));
        assert_ne!(trajectory_seed(0, Split::Train, 0), trajectory_seed(0, Split::Train, 1));
        assert_ne!(trajectory_seed(0, Split::Train, 0), trajectory_seed(1, Split::Train, 0));
    }

    #[test]
    fn truncation_keeps_prefix() {
        let ds = generate_split(&tiny(), Split::Train).unwrap();
        let t = ds.truncated(2).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.sample(1).unwrap(), ds.sample(1).unwrap());
        assert_eq!(t.spec().train, 2);
    }
}
