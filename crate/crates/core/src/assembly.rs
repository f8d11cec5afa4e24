//! Global matrices of the discrete Stokes problem and their sub-blocks.
//!
//! With `N` velocity DOFs (interior first, `N0` of them), `M` pressure DOFs
//! and one pinned pressure DOF, the blocks are
//!
//! * `M = [(ζ_j, ζ_i)]`, `K = [(∇ζ_j, ∇ζ_i)]` (N×N)
//! * `B = -[(χ_i, ∇·ζ_j)]` (M×N) and `B̃`, `B` without the pinned row
//! * row blocks `X_0` (interior rows), `X_Γ` (boundary rows) and the
//!   four corner blocks `X_00`, `X_Γ0`, `X_ΓΓ` of `M` and `K`
//! * `S_ΓΓ`, the mass matrix of the trace space on Γ, and `c_j = ∫_Γ ζ_j·n`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::fem::basis::{pressure_basis, velocity_basis, LocalValues};
use crate::fem::quadrature::gauss_legendre_unit;
use crate::fem::{FeSpace, Quadrature};
use crate::mesh::{BoundaryEdge, Point};
use crate::sparse::{CooBuilder, CsrMatrix};

#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub space: Arc<FeSpace>,
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
    pub divergence: CsrMatrix,
    /// Index of the pressure DOF fixed to zero.
    pub pin: usize,
    /// `B` with the pinned row removed.
    pub b_tilde: CsrMatrix,
    pub b_tilde_0: CsrMatrix,
    pub b_tilde_gamma: CsrMatrix,
    pub m_0: CsrMatrix,
    pub m_00: CsrMatrix,
    pub m_g0: CsrMatrix,
    pub m_gg: CsrMatrix,
    pub m_g: CsrMatrix,
    pub k_0: CsrMatrix,
    pub k_00: CsrMatrix,
    pub k_g0: CsrMatrix,
    pub k_gg: CsrMatrix,
    pub k_g: CsrMatrix,
    /// Boundary mass matrix on the trace space.
    pub s_gg: CsrMatrix,
    /// Flux constraint vector, `u^T c = (u_h·n, 1)_Γ`.
    pub c: Vec<f64>,
    /// `∫ χ_i` for every pressure basis function.
    pub pressure_integrals: Vec<f64>,
    pub boundary_length: f64,
    pub area: f64,
}

struct ReferenceTables {
    weights: Vec<f64>,
    velocity: Vec<LocalValues>,
    pressure: Vec<LocalValues>,
    points: Vec<[f64; 3]>,
}

impl ReferenceTables {
    fn new(space: &FeSpace) -> Self {
        let q = Quadrature::triangle(space.family.quadrature_degree());
        ReferenceTables {
            velocity: q.points.iter().map(|&l| velocity_basis(space.family.kind, l)).collect(),
            pressure: q.points.iter().map(|&l| pressure_basis(space.family.kind, l)).collect(),
            weights: q.weights,
            points: q.points,
        }
    }
}

/// Affine map data of one triangle: `|det J|` and `J^{-T}`.
struct Geometry {
    origin: Point,
    jac: [[f64; 2]; 2],
    abs_det: f64,
    inv_t: [[f64; 2]; 2],
}

impl Geometry {
    fn new(space: &FeSpace, t: usize) -> Self {
        let [a, b, c] = space.mesh.triangles[t].map(|v| space.mesh.vertices[v]);
        let jac = [[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        // J^{-T} = 1/det [[d, -c], [-b, a]] for J = [[a, b], [c, d]]
        let inv_t = [
            [jac[1][1] / det, -jac[1][0] / det],
            [-jac[0][1] / det, jac[0][0] / det],
        ];
        Geometry {
            origin: a,
            jac,
            abs_det: det.abs(),
            inv_t,
        }
    }

    fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            self.inv_t[0][0] * g[0] + self.inv_t[0][1] * g[1],
            self.inv_t[1][0] * g[0] + self.inv_t[1][1] * g[1],
        ]
    }

    fn point(&self, l: [f64; 3]) -> Point {
        [
            self.origin[0] + self.jac[0][0] * l[1] + self.jac[0][1] * l[2],
            self.origin[1] + self.jac[1][0] * l[1] + self.jac[1][1] * l[2],
        ]
    }
}

type Entries = Vec<(usize, usize, f64)>;

fn element_entries(space: &FeSpace, tables: &ReferenceTables, t: usize) -> (Entries, Entries, Entries) {
    let geo = Geometry::new(space, t);
    let nodes = space.cell_nodes(t);
    let pnodes = space.pressure_cell_nodes(t);
    let (nv, np) = (nodes.len(), pnodes.len());
    let mut mloc = [[0.0; 10]; 10];
    let mut kloc = [[0.0; 10]; 10];
    let mut bloc = [[[0.0; 2]; 10]; 6];
    for (q, &w) in tables.weights.iter().enumerate() {
        let w = w * geo.abs_det;
        let v = &tables.velocity[q];
        let p = &tables.pressure[q];
        let mut grads = [[0.0; 2]; 10];
        for i in 0..nv {
            grads[i] = geo.grad(v.grads[i]);
        }
        for i in 0..nv {
            for j in 0..nv {
                mloc[i][j] += w * v.values[i] * v.values[j];
                kloc[i][j] += w * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
            }
        }
        for a in 0..np {
            for j in 0..nv {
                bloc[a][j][0] -= w * p.values[a] * grads[j][0];
                bloc[a][j][1] -= w * p.values[a] * grads[j][1];
            }
        }
    }
    let mut m = Vec::with_capacity(2 * nv * nv);
    let mut k = Vec::with_capacity(2 * nv * nv);
    let mut b = Vec::with_capacity(2 * np * nv);
    for i in 0..nv {
        let di = space.node_dofs[nodes[i]];
        for j in 0..nv {
            let dj = space.node_dofs[nodes[j]];
            for c in 0..2 {
                m.push((di[c], dj[c], mloc[i][j]));
                k.push((di[c], dj[c], kloc[i][j]));
            }
        }
    }
    for a in 0..np {
        for j in 0..nv {
            let dj = space.node_dofs[nodes[j]];
            for c in 0..2 {
                b.push((pnodes[a], dj[c], bloc[a][j][c]));
            }
        }
    }
    (m, k, b)
}

/// Assembles all matrices with the pressure pinned at the last DOF.
pub fn assemble(space: Arc<FeSpace>) -> AssembledSystem {
    let pin = space.m - 1;
    assemble_with_pin(space, pin)
}

pub fn assemble_with_pin(space: Arc<FeSpace>, pin: usize) -> AssembledSystem {
    assert!(pin < space.m);
    let tables = ReferenceTables::new(&space);
    let nt = space.mesh.triangles.len();
    let (n, n0, m) = (space.n, space.n0, space.m);

    // Chunks are reduced in order, so the COO buffers are identical across runs.
    let chunks: Vec<(Entries, Entries, Entries)> = (0..nt)
        .collect::<Vec<_>>()
        .par_chunks(1024)
        .map(|ts| {
            let mut acc = (Vec::new(), Vec::new(), Vec::new());
            for &t in ts {
                let (m, k, b) = element_entries(&space, &tables, t);
                acc.0.extend(m);
                acc.1.extend(k);
                acc.2.extend(b);
            }
            acc
        })
        .collect();
    let nloc = space.family.velocity_local();
    let mut mb = CooBuilder::with_capacity(n, n, 2 * nloc * nloc * nt);
    let mut kb = CooBuilder::with_capacity(n, n, 2 * nloc * nloc * nt);
    let mut bb = CooBuilder::new(m, n);
    for (me, ke, be) in chunks {
        for (i, j, v) in me {
            mb.push(i, j, v);
        }
        for (i, j, v) in ke {
            kb.push(i, j, v);
        }
        for (i, j, v) in be {
            bb.push(i, j, v);
        }
    }
    let mass = mb.into_csr();
    let stiffness = kb.into_csr();
    let divergence = bb.into_csr();
    let b_tilde = remove_row(&divergence, pin);

    let (s_gg, c) = boundary_mass_and_constraint(&space);
    let pressure_integrals = pressure_integrals(&space, &tables);
    let area = space.mesh.domain.area();
    let boundary_length = space.mesh.boundary_edges.iter().map(|e| e.length).sum();

    AssembledSystem {
        b_tilde_0: b_tilde.submatrix(0..m - 1, 0..n0),
        b_tilde_gamma: b_tilde.submatrix(0..m - 1, n0..n),
        m_0: mass.submatrix(0..n0, 0..n),
        m_00: mass.submatrix(0..n0, 0..n0),
        m_g0: mass.submatrix(n0..n, 0..n0),
        m_gg: mass.submatrix(n0..n, n0..n),
        m_g: mass.submatrix(n0..n, 0..n),
        k_0: stiffness.submatrix(0..n0, 0..n),
        k_00: stiffness.submatrix(0..n0, 0..n0),
        k_g0: stiffness.submatrix(n0..n, 0..n0),
        k_gg: stiffness.submatrix(n0..n, n0..n),
        k_g: stiffness.submatrix(n0..n, 0..n),
        space,
        mass,
        stiffness,
        divergence,
        pin,
        b_tilde,
        s_gg,
        c,
        pressure_integrals,
        boundary_length,
        area,
    }
}

fn remove_row(a: &CsrMatrix, pin: usize) -> CsrMatrix {
    let mut coo = CooBuilder::with_capacity(a.nrows - 1, a.ncols, a.nnz());
    for i in 0..a.nrows {
        if i == pin {
            continue;
        }
        let r = if i > pin { i - 1 } else { i };
        for (j, v) in a.row(i) {
            coo.push(r, j, v);
        }
    }
    coo.into_csr()
}

/// Gauss points on a boundary edge: physical point, weight (including the
/// edge length) and barycentric coordinates inside the owning triangle.
pub(crate) fn edge_rule(space: &FeSpace, edge: &BoundaryEdge) -> Vec<(Point, f64, [f64; 3])> {
    let (ts, ws) = gauss_legendre_unit(space.family.boundary_points());
    let [a, b] = edge.vertices.map(|v| space.mesh.vertices[v]);
    ts.iter()
        .zip(&ws)
        .map(|(&t, &w)| {
            let mut l = [0.0; 3];
            l[edge.local_edge] = 1.0 - t;
            l[(edge.local_edge + 1) % 3] = t;
            let p = [(1.0 - t) * a[0] + t * b[0], (1.0 - t) * a[1] + t * b[1]];
            (p, w * edge.length, l)
        })
        .collect()
}

fn boundary_mass_and_constraint(space: &FeSpace) -> (CsrMatrix, Vec<f64>) {
    let ng = space.n_gamma;
    let n0 = space.n0;
    let mut s = CooBuilder::new(ng, ng);
    let mut c = vec![0.0; ng];
    for edge in &space.mesh.boundary_edges {
        let nodes = space.cell_nodes(edge.triangle);
        for (_, w, l) in edge_rule(space, edge) {
            let v = velocity_basis(space.family.kind, l);
            for (i, &ni) in nodes.iter().enumerate() {
                if !space.node_on_boundary[ni] {
                    continue;
                }
                let di = space.node_dofs[ni];
                for comp in 0..2 {
                    c[di[comp] - n0] += w * v.values[i] * edge.normal[comp];
                }
                for (j, &nj) in nodes.iter().enumerate() {
                    if !space.node_on_boundary[nj] {
                        continue;
                    }
                    let dj = space.node_dofs[nj];
                    for comp in 0..2 {
                        s.push(di[comp] - n0, dj[comp] - n0, w * v.values[i] * v.values[j]);
                    }
                }
            }
        }
    }
    (s.into_csr(), c)
}

fn pressure_integrals(space: &FeSpace, tables: &ReferenceTables) -> Vec<f64> {
    let mut out = vec![0.0; space.m];
    for t in 0..space.mesh.triangles.len() {
        let geo = Geometry::new(space, t);
        let pnodes = space.pressure_cell_nodes(t);
        for (q, &w) in tables.weights.iter().enumerate() {
            for (a, &node) in pnodes.iter().enumerate() {
                out[node] += w * geo.abs_det * tables.pressure[q].values[a];
            }
        }
    }
    out
}

/// Flux constraint vector `c_j = ∫_Γ ζ_j·n ds`, edge by edge.
pub fn constraint_vector(space: &FeSpace) -> Vec<f64> {
    boundary_mass_and_constraint(space).1
}

/// Load vector `(f, ζ_j)` over all `N` velocity DOFs.
pub fn load_vector(space: &FeSpace, f: impl Fn(Point) -> [f64; 2] + Sync) -> Vec<f64> {
    let tables = ReferenceTables::new(space);
    let mut out = vec![0.0; space.n];
    for t in 0..space.mesh.triangles.len() {
        let geo = Geometry::new(space, t);
        let nodes = space.cell_nodes(t);
        for (q, &w) in tables.weights.iter().enumerate() {
            let x = geo.point(tables.points[q]);
            let fx = f(x);
            for (i, &node) in nodes.iter().enumerate() {
                let v = tables.velocity[q].values[i] * w * geo.abs_det;
                out[space.node_dofs[node][0]] += v * fx[0];
                out[space.node_dofs[node][1]] += v * fx[1];
            }
        }
    }
    out
}

/// Boundary functional `(g, ζ_j)_Γ` over the `N_Γ` trace DOFs. `g` receives
/// the point and the boundary edge it is evaluated on, so piecewise fields
/// such as the outward normal are integrated edge by edge.
pub fn boundary_load(space: &FeSpace, g: impl Fn(Point, &BoundaryEdge) -> [f64; 2]) -> Vec<f64> {
    let mut out = vec![0.0; space.n_gamma];
    for edge in &space.mesh.boundary_edges {
        let nodes = space.cell_nodes(edge.triangle);
        for (p, w, l) in edge_rule(space, edge) {
            let gv = g(p, edge);
            let v = velocity_basis(space.family.kind, l);
            for (i, &ni) in nodes.iter().enumerate() {
                if !space.node_on_boundary[ni] {
                    continue;
                }
                let d = space.node_dofs[ni];
                out[d[0] - space.n0] += w * v.values[i] * gv[0];
                out[d[1] - space.n0] += w * v.values[i] * gv[1];
            }
        }
    }
    out
}

impl AssembledSystem {
    pub fn n(&self) -> usize {
        self.space.n
    }

    pub fn n0(&self) -> usize {
        self.space.n0
    }

    pub fn n_gamma(&self) -> usize {
        self.space.n_gamma
    }

    pub fn m(&self) -> usize {
        self.space.m
    }

    /// Expands pinned pressure coefficients (length `M - 1`) to all `M` DOFs.
    pub fn expand_pressure(&self, pinned: &[f64]) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.m());
        p.extend_from_slice(&pinned[..self.pin]);
        p.push(0.0);
        p.extend_from_slice(&pinned[self.pin..]);
        p
    }

    /// Discrete mean `(p, 1) / |Ω|` of a full pressure vector.
    pub fn pressure_mean(&self, p: &[f64]) -> f64 {
        crate::sparse::dot(p, &self.pressure_integrals) / self.area
    }

    /// Zero-mean representative of a pinned pressure vector.
    pub fn zero_mean_pressure(&self, pinned: &[f64]) -> Vec<f64> {
        let mut p = self.expand_pressure(pinned);
        let mean = self.pressure_mean(&p);
        p.iter_mut().for_each(|v| *v -= mean);
        p
    }
}
