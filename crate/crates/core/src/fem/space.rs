use std::sync::Arc;

use super::basis::{velocity_basis, ElementFamily, ElementKind, MAX_LOCAL};
use crate::mesh::{Mesh, Point};

/// Where a scalar velocity node lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeEntity {
    Vertex(usize),
    /// The `slot`-th node of an edge, counted from the lower vertex index.
    Edge { edge: usize, slot: usize },
    /// Mini bubble or P3 interior node of a triangle.
    Cell(usize),
}

/// Velocity/pressure DOF layout.
///
/// Velocity DOFs are numbered so that the first `n0` belong to nodes off the
/// boundary and the remaining `n_gamma` to boundary nodes. Boundary nodes are
/// numbered along the boundary loop, counterclockwise from the first corner,
/// and each node carries two DOFs (`2k` for x, `2k + 1` for y).
#[derive(Debug, Clone)]
pub struct FeSpace {
    pub mesh: Arc<Mesh>,
    pub family: ElementFamily,
    /// Scalar velocity nodes.
    pub nodes: Vec<NodeEntity>,
    /// Nodal point, `None` for bubbles.
    pub node_points: Vec<Option<Point>>,
    pub node_on_boundary: Vec<bool>,
    /// Global DOF index of `(node, component)`.
    pub node_dofs: Vec<[usize; 2]>,
    /// Inverse of `node_dofs`.
    pub dof_node: Vec<(usize, usize)>,
    cell_nodes: Vec<usize>,
    /// Boundary nodes in loop order; position `k` owns trace DOFs `2k`, `2k + 1`.
    pub boundary_nodes: Vec<usize>,
    /// Arc-length coordinate of each entry of `boundary_nodes`.
    pub boundary_arclength: Vec<f64>,
    pub n: usize,
    pub n0: usize,
    pub n_gamma: usize,
    /// Pressure DOF count.
    pub m: usize,
    pressure_cell_nodes: Vec<usize>,
    pub pressure_points: Vec<Point>,
}

pub fn build_space(mesh: Arc<Mesh>, family: ElementFamily) -> FeSpace {
    FeSpace::new(mesh, family)
}

impl FeSpace {
    pub fn new(mesh: Arc<Mesh>, family: ElementFamily) -> Self {
        let nv = mesh.vertices.len();
        let nt = mesh.triangles.len();
        let per_edge = family.velocity_degree - 1;
        let has_cell_node = family.has_bubble || family.kind == ElementKind::Th3;

        let mut nodes = Vec::new();
        let mut node_points = Vec::new();
        let mut node_on_boundary = Vec::new();
        for v in 0..nv {
            nodes.push(NodeEntity::Vertex(v));
            node_points.push(Some(mesh.vertices[v]));
            node_on_boundary.push(mesh.vertex_on_boundary[v]);
        }
        for (e, &[a, b]) in mesh.edges.iter().enumerate() {
            let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
            for slot in 0..per_edge {
                let t = (slot + 1) as f64 / (per_edge + 1) as f64;
                nodes.push(NodeEntity::Edge { edge: e, slot });
                node_points.push(Some([
                    (1.0 - t) * pa[0] + t * pb[0],
                    (1.0 - t) * pa[1] + t * pb[1],
                ]));
                node_on_boundary.push(mesh.edge_on_boundary[e]);
            }
        }
        let cell_base = nodes.len();
        if has_cell_node {
            for t in 0..nt {
                nodes.push(NodeEntity::Cell(t));
                node_points.push(if family.has_bubble {
                    None
                } else {
                    let c = mesh.triangles[t].map(|v| mesh.vertices[v]);
                    Some([
                        (c[0][0] + c[1][0] + c[2][0]) / 3.0,
                        (c[0][1] + c[1][1] + c[2][1]) / 3.0,
                    ])
                });
                node_on_boundary.push(false);
            }
        }
        let edge_base = nv;

        let nloc = family.velocity_local();
        let mut cell_nodes = Vec::with_capacity(nt * nloc);
        for (t, tri) in mesh.triangles.iter().enumerate() {
            cell_nodes.extend_from_slice(tri);
            match family.kind {
                ElementKind::Mini => cell_nodes.push(cell_base + t),
                ElementKind::Th2 => {
                    for k in 0..3 {
                        cell_nodes.push(edge_base + mesh.triangle_edges[t][k]);
                    }
                }
                ElementKind::Th3 => {
                    for k in 0..3 {
                        let e = mesh.triangle_edges[t][k];
                        let forward = mesh.edges[e][0] == tri[k];
                        let (near_a, near_b) = if forward { (0, 1) } else { (1, 0) };
                        cell_nodes.push(edge_base + 2 * e + near_a);
                        cell_nodes.push(edge_base + 2 * e + near_b);
                    }
                    cell_nodes.push(cell_base + t);
                }
            }
        }

        // boundary loop order
        let mut boundary_nodes = Vec::new();
        let mut boundary_arclength = Vec::new();
        let mut s = 0.0;
        for be in &mesh.boundary_edges {
            let [a, _] = be.vertices;
            let e = mesh.triangle_edges[be.triangle][be.local_edge];
            boundary_nodes.push(a);
            boundary_arclength.push(s);
            let forward = mesh.edges[e][0] == a;
            for j in 0..per_edge {
                let slot = if forward { j } else { per_edge - 1 - j };
                boundary_nodes.push(edge_base + per_edge * e + slot);
                boundary_arclength.push(s + be.length * (j + 1) as f64 / (per_edge + 1) as f64);
            }
            s += be.length;
        }

        let ns = nodes.len();
        let mut node_dofs = vec![[usize::MAX; 2]; ns];
        let mut next = 0;
        for (k, dofs) in node_dofs.iter_mut().enumerate() {
            if !node_on_boundary[k] {
                *dofs = [next, next + 1];
                next += 2;
            }
        }
        let n0 = next;
        for &k in &boundary_nodes {
            node_dofs[k] = [next, next + 1];
            next += 2;
        }
        let n = next;
        assert_eq!(n, 2 * ns, "every node must receive DOFs");
        let mut dof_node = vec![(0, 0); n];
        for (k, dofs) in node_dofs.iter().enumerate() {
            dof_node[dofs[0]] = (k, 0);
            dof_node[dofs[1]] = (k, 1);
        }

        let mut pressure_points: Vec<Point> = mesh.vertices.clone();
        let mut pressure_cell_nodes = Vec::with_capacity(nt * family.pressure_local());
        if family.pressure_degree == 2 {
            for &[a, b] in &mesh.edges {
                let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
                pressure_points.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            }
        }
        for (t, tri) in mesh.triangles.iter().enumerate() {
            pressure_cell_nodes.extend_from_slice(tri);
            if family.pressure_degree == 2 {
                for k in 0..3 {
                    pressure_cell_nodes.push(nv + mesh.triangle_edges[t][k]);
                }
            }
        }
        let m = pressure_points.len();

        FeSpace {
            mesh,
            family,
            nodes,
            node_points,
            node_on_boundary,
            node_dofs,
            dof_node,
            cell_nodes,
            boundary_nodes,
            boundary_arclength,
            n,
            n0,
            n_gamma: n - n0,
            m,
            pressure_cell_nodes,
            pressure_points,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Scalar velocity nodes of triangle `t` in local order.
    pub fn cell_nodes(&self, t: usize) -> &[usize] {
        let nloc = self.family.velocity_local();
        &self.cell_nodes[t * nloc..(t + 1) * nloc]
    }

    pub fn pressure_cell_nodes(&self, t: usize) -> &[usize] {
        let nloc = self.family.pressure_local();
        &self.pressure_cell_nodes[t * nloc..(t + 1) * nloc]
    }

    /// Nodal interpolant of a vector field. Bubble coefficients are zero.
    pub fn interpolate(&self, f: impl Fn(Point) -> [f64; 2]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (k, p) in self.node_points.iter().enumerate() {
            if let Some(p) = p {
                let v = f(*p);
                out[self.node_dofs[k][0]] = v[0];
                out[self.node_dofs[k][1]] = v[1];
            }
        }
        out
    }

    /// Trace part of the nodal interpolant.
    pub fn interpolate_trace(&self, f: impl Fn(Point) -> [f64; 2]) -> Vec<f64> {
        self.interpolate(f)[self.n0..].to_vec()
    }

    /// Full coefficient vector whose interior part is zero.
    pub fn zero_extend(&self, trace: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        out[self.n0..].copy_from_slice(trace);
        out
    }

    /// Evaluates the velocity field with coefficients `coeffs` (length `n`)
    /// inside triangle `t` at barycentric point `l`.
    pub fn eval_in_cell(&self, coeffs: &[f64], t: usize, l: [f64; 3]) -> [f64; 2] {
        let v = velocity_basis(self.family.kind, l);
        let mut out = [0.0; 2];
        for (i, &node) in self.cell_nodes(t).iter().enumerate() {
            let [d0, d1] = self.node_dofs[node];
            out[0] += v.values[i] * coeffs[d0];
            out[1] += v.values[i] * coeffs[d1];
        }
        out
    }

    pub fn eval(&self, coeffs: &[f64], p: Point) -> Option<[f64; 2]> {
        let (t, l) = self.mesh.locate(p)?;
        Some(self.eval_in_cell(coeffs, t, l))
    }

    /// Scalar node values (local order) of triangle `t`; helper for tests and export.
    pub fn local_dofs(&self, t: usize) -> ([usize; MAX_LOCAL], [usize; MAX_LOCAL], usize) {
        let mut xs = [0; MAX_LOCAL];
        let mut ys = [0; MAX_LOCAL];
        let nodes = self.cell_nodes(t);
        for (i, &node) in nodes.iter().enumerate() {
            xs[i] = self.node_dofs[node][0];
            ys[i] = self.node_dofs[node][1];
        }
        (xs, ys, nodes.len())
    }

    /// Trace position `k` of the boundary node at a mesh corner.
    pub fn corner_trace_positions(&self) -> Vec<usize> {
        self.mesh
            .corner_vertices
            .iter()
            .map(|&v| {
                self.boundary_nodes
                    .iter()
                    .position(|&n| n == v)
                    .expect("corner is a boundary node")
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::basis::ElementKind;
    use crate::mesh::{build_mesh, Domain};

    fn space(domain: Domain, level: usize, kind: ElementKind) -> FeSpace {
        build_space(Arc::new(build_mesh(&domain, level)), ElementFamily::new(kind))
    }

    #[test]
    fn mini_counts_level_one() {
        let s = space(Domain::unit_square(), 1, ElementKind::Mini);
        assert_eq!(s.n, 34);
        assert_eq!(s.n0, 18);
        assert_eq!(s.n_gamma, 16);
        assert_eq!(s.m, 9);
    }

    #[test]
    fn mini_counts_level_zero() {
        let s = space(Domain::unit_square(), 0, ElementKind::Mini);
        assert_eq!((s.n, s.n0, s.n_gamma), (12, 4, 8));
    }

    #[test]
    fn taylor_hood_counts() {
        // level 1 square: 9 vertices, 16 edges (8 on the boundary), 8 triangles
        let s = space(Domain::unit_square(), 1, ElementKind::Th2);
        assert_eq!(s.n, 2 * 25);
        assert_eq!(s.n_gamma, 2 * 16);
        assert_eq!(s.m, 9);
        let s = space(Domain::unit_square(), 1, ElementKind::Th3);
        assert_eq!(s.n, 2 * (9 + 2 * 16 + 8));
        assert_eq!(s.n_gamma, 2 * 24);
        assert_eq!(s.m, 25);
    }

    #[test]
    fn boundary_dofs_are_trailing() {
        for kind in [ElementKind::Mini, ElementKind::Th2, ElementKind::Th3] {
            let s = space(Domain::l_shape(), 1, kind);
            assert_eq!(s.n0 + s.n_gamma, s.n);
            for (k, dofs) in s.node_dofs.iter().enumerate() {
                for d in dofs {
                    assert_eq!(*d >= s.n0, s.node_on_boundary[k]);
                }
            }
        }
    }

    #[test]
    fn interior_functions_vanish_on_boundary() {
        for kind in [ElementKind::Mini, ElementKind::Th2, ElementKind::Th3] {
            let s = space(Domain::l_shape(), 1, kind);
            for dof in 0..s.n {
                let mut c = vec![0.0; s.n];
                c[dof] = 1.0;
                let mut max: f64 = 0.0;
                for be in &s.mesh.boundary_edges {
                    for t in [0.0, 0.13, 0.5, 0.77, 1.0] {
                        let mut l = [0.0; 3];
                        l[be.local_edge] = 1.0 - t;
                        l[(be.local_edge + 1) % 3] = t;
                        let v = s.eval_in_cell(&c, be.triangle, l);
                        max = max.max(v[0].abs()).max(v[1].abs());
                    }
                }
                if dof < s.n0 {
                    assert!(max < 1e-14, "{kind:?} interior dof {dof}");
                } else {
                    assert!(max > 0.1, "{kind:?} boundary dof {dof}");
                }
            }
        }
    }

    #[test]
    fn boundary_loop_is_ordered_by_arclength() {
        let s = space(Domain::l_shape(), 2, ElementKind::Th3);
        assert_eq!(s.boundary_nodes.len() * 2, s.n_gamma);
        for w in s.boundary_arclength.windows(2) {
            assert!(w[1] > w[0]);
        }
        for (k, &node) in s.boundary_nodes.iter().enumerate() {
            let p = s.node_points[node].unwrap();
            let corners = &s.mesh.domain.corners;
            // recompute arclength by walking the corner polygon
            let mut acc = 0.0;
            let mut found = None;
            for c in 0..corners.len() {
                let a = corners[c];
                let b = corners[(c + 1) % corners.len()];
                let len = crate::mesh::dist(a, b);
                let t = ((p[0] - a[0]) * (b[0] - a[0]) + (p[1] - a[1]) * (b[1] - a[1])) / (len * len);
                let q = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
                if (0.0..1.0).contains(&t) && crate::mesh::dist(p, q) < 1e-12 {
                    found = Some(acc + t * len);
                    break;
                }
                acc += len;
            }
            assert!((found.unwrap() - s.boundary_arclength[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let f = |p: Point| [p[0] * p[0] * p[1] - 0.3, p[1].powi(3) + p[0]];
        let s = space(Domain::unit_square(), 2, ElementKind::Th3);
        let c = s.interpolate(f);
        for p in [[0.31, 0.72], [0.05, 0.01], [0.9, 0.4]] {
            let v = s.eval(&c, p).unwrap();
            let e = f(p);
            assert!((v[0] - e[0]).abs() < 1e-12 && (v[1] - e[1]).abs() < 1e-12);
        }
    }
}
