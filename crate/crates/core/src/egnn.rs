//! Velocity-aware EGNN message-passing layer.

use std::sync::Arc;

use egno_tensor::{Bound, ParamSet, Tape, Tensor, Var};
use rand::Rng;

use crate::error::{CoreError, Result};
use crate::geometry::{GeometricGraph, Vec3};
use crate::nn::{Linear, Mlp};

/// Row indexing for a stack of graphs sharing the node count `nodes`.
/// Node `n` of graph `g` is row `g * nodes + n`; edges hold global rows.
#[derive(Debug, Clone)]
pub struct GraphLayout {
    graphs: usize,
    nodes: usize,
    src: Arc<[usize]>,
    dst: Arc<[usize]>,
    group: Arc<[usize]>,
}

impl GraphLayout {
    /// `edges[g]` lists the local edges of graph `g`.
    pub fn new(nodes: usize, edges: &[&[(usize, usize)]]) -> Result<Self> {
        if nodes == 0 {
            return Err(CoreError::InvalidGraph("graphs must have at least one node".into()));
        }
        let mut src = Vec::new();
        let mut dst = Vec::new();
        for (g, list) in edges.iter().enumerate() {
            for &(i, j) in *list {
                if i >= nodes || j >= nodes || i == j {
                    return Err(CoreError::InvalidGraph(format!("bad edge ({i}, {j}) for {nodes} nodes")));
                }
                src.push(g * nodes + i);
                dst.push(g * nodes + j);
            }
        }
        let graphs = edges.len();
        Ok(Self {
            graphs,
            nodes,
            src: src.into(),
            dst: dst.into(),
            group: (0..graphs * nodes).map(|r| r / nodes).collect(),
        })
    }

    pub fn replicated(nodes: usize, edges: &[(usize, usize)], graphs: usize) -> Result<Self> {
        Self::new(nodes, &vec![edges; graphs])
    }

    pub fn graphs(&self) -> usize {
        self.graphs
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn rows(&self) -> usize {
        self.graphs * self.nodes
    }

    pub fn num_edges(&self) -> usize {
        self.src.len()
    }

    pub fn src(&self) -> &Arc<[usize]> {
        &self.src
    }

    pub fn dst(&self) -> &Arc<[usize]> {
        &self.dst
    }

    /// Graph index of each row.
    pub fn group(&self) -> &Arc<[usize]> {
        &self.group
    }
}

/// Parameter names of one layer. The first edge-MLP layer acting on
/// `[h_i, h_j, ‖x_i − x_j‖², e_ij]` is stored as four blocks so the node
/// terms can be projected before gathering onto edges.
#[derive(Debug, Clone, PartialEq)]
pub struct EgnnLayer {
    pub name: String,
    pub hidden: usize,
    pub edge_attr_dim: usize,
    edge_src: String,
    edge_dst: String,
    edge_dist: String,
    edge_attr: String,
    edge_bias: String,
    edge_out: Linear,
    coord_hidden: Linear,
    coord_out: Linear,
    node: Mlp,
    vel: Mlp,
}

impl EgnnLayer {
    pub fn new(name: &str, hidden: usize, edge_attr_dim: usize) -> Self {
        let k = hidden;
        Self {
            name: name.to_string(),
            hidden,
            edge_attr_dim,
            edge_src: format!("{name}.edge.0.src"),
            edge_dst: format!("{name}.edge.0.dst"),
            edge_dist: format!("{name}.edge.0.dist"),
            edge_attr: format!("{name}.edge.0.attr"),
            edge_bias: format!("{name}.edge.0.b"),
            edge_out: Linear::new(&format!("{name}.edge.1"), k, k, true),
            coord_hidden: Linear::new(&format!("{name}.coord.0"), k, k, true),
            coord_out: Linear::new(&format!("{name}.coord.1"), k, 1, false),
            node: Mlp::new(&format!("{name}.node"), 2 * k, k, k, false),
            vel: Mlp::new(&format!("{name}.vel"), k, k, 1, false),
        }
    }

    pub fn init<R: Rng>(&self, params: &mut ParamSet, rng: &mut R) {
        let k = self.hidden;
        let a = self.edge_attr_dim;
        let bound = 1.0 / ((2 * k + 1 + a) as f64).sqrt();
        let mut u = |shape: Vec<usize>| Tensor::from_fn(shape, |_| rng.random_range(-bound..=bound));
        let blocks = [
            (&self.edge_src, vec![k, k]),
            (&self.edge_dst, vec![k, k]),
            (&self.edge_dist, vec![1, k]),
            (&self.edge_attr, vec![a, k]),
            (&self.edge_bias, vec![k]),
        ];
        for (name, shape) in blocks {
            params.insert(name.clone(), u(shape));
        }
        self.edge_out.init(params, rng);
        self.coord_hidden.init(params, rng);
        self.coord_out.init_uniform(params, rng, 1e-3);
        self.node.init(params, rng);
        self.vel.init(params, rng);
    }

    /// Zeroes the coordinate head and the velocity gate so that `x' = x`,
    /// `v' = 0`.
    pub fn zero_updates(&self, params: &mut ParamSet) {
        self.coord_out.init_zero(params);
        self.vel.second.init_zero(params);
    }

    /// Sets `φ_x ≡ 0` and `φ_v ≡ 1`, turning the layer into free drift.
    pub fn free_drift(&self, params: &mut ParamSet) {
        self.zero_updates(params);
        params.insert(self.vel.second.bias.clone().expect("vel bias"), Tensor::full(vec![1], 1.0));
    }

    /// One layer over a batch of graphs. `edge_attr` is `[edges, a]`; `h`,
    /// `x`, `v` have one row per node.
    pub fn forward<'t>(
        &self,
        p: &Bound<'t>,
        layout: &GraphLayout,
        edge_attr: Var<'t>,
        h: Var<'t>,
        x: Var<'t>,
        v: Var<'t>,
    ) -> Result<(Var<'t>, Var<'t>, Var<'t>)> {
        if layout.nodes() < 2 {
            return Err(CoreError::InvalidGraph(format!(
                "message passing needs at least 2 nodes, got {}",
                layout.nodes()
            )));
        }
        let rows = layout.rows();
        let (src, dst) = (layout.src(), layout.dst());
        let diff = x.gather_rows(src)?.sub(x.gather_rows(dst)?)?;
        let d2 = diff.square().row_sum();

        let hs = h.matmul(p.get(&self.edge_src)?)?.gather_rows(src)?;
        let hd = h.matmul(p.get(&self.edge_dst)?)?.gather_rows(dst)?;
        let pre = hs
            .add(hd)?
            .add(d2.matmul(p.get(&self.edge_dist)?)?)?
            .add(edge_attr.matmul(p.get(&self.edge_attr)?)?)?
            .add_bias(p.get(&self.edge_bias)?)?;
        let m = self.edge_out.forward(p, pre.silu())?.silu();
        if !m.value().is_finite() {
            return Err(CoreError::NonFiniteMessage {
                layer: self.name.clone(),
            });
        }

        let phi_x = self.coord_out.forward(p, self.coord_hidden.forward(p, m)?.silu())?;
        let c = 1.0 / (layout.nodes() - 1) as f64;
        let shift = diff.mul_col(phi_x)?.scatter_add_rows(src, rows)?.scale(c);
        let gate = self.vel.forward(p, h)?;
        let v_new = v.mul_col(gate)?.add(shift)?;
        let x_new = x.add(v_new)?;

        let agg = m.scatter_add_rows(src, rows)?;
        let h_new = self.node.forward(p, h.tape().concat_cols(&[h, agg])?)?;
        Ok((h_new, x_new, v_new))
    }
}

/// Output of [`egnn_layer_forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerOutput {
    /// `[N, k]`
    pub h: Tensor,
    pub x: Vec<Vec3>,
    pub v: Vec<Vec3>,
}

pub(crate) fn vec3s_to_tensor(rows: &[Vec3]) -> Tensor {
    Tensor::new(vec![rows.len(), 3], rows.iter().flatten().copied().collect()).expect("3 columns")
}

pub(crate) fn tensor_to_vec3s(t: &Tensor) -> Vec<Vec3> {
    t.data().chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
}

/// Applies one layer to a single graph whose features already have width
/// `k = layer.hidden`.
pub fn egnn_layer_forward(g: &GeometricGraph, layer: &EgnnLayer, params: &ParamSet) -> Result<LayerOutput> {
    let n = g.num_nodes();
    if g.feature_dim() != layer.hidden || g.edge_attr_dim() != layer.edge_attr_dim {
        return Err(CoreError::Shape(format!(
            "graph widths (h {}, edge {}) do not match layer (h {}, edge {})",
            g.feature_dim(),
            g.edge_attr_dim(),
            layer.hidden,
            layer.edge_attr_dim
        )));
    }
    let layout = GraphLayout::new(n, &[g.edges()])?;
    let tape = Tape::new();
    let p = tape.bind(params);
    let attr = tape.constant(Tensor::new(vec![g.edges().len(), g.edge_attr_dim()], g.edge_attr().to_vec())?);
    let h = tape.constant(Tensor::new(vec![n, g.feature_dim()], g.h().to_vec())?);
    let (h, x, v) = layer.forward(
        &p,
        &layout,
        attr,
        h,
        tape.constant(vec3s_to_tensor(g.x())),
        tape.constant(vec3s_to_tensor(g.v())),
    )?;
    let out = LayerOutput {
        h: h.to_tensor(),
        x: tensor_to_vec3s(&x.to_tensor()),
        v: tensor_to_vec3s(&v.to_tensor()),
    };
    Ok(out)
}
