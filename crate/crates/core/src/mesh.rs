//! Structured triangulations of the unit square and the L-shaped domain.
//!
//! Level-0 meshes split every unit cell along its bottom-left to top-right
//! diagonal. Finer levels are produced by regular (red) refinement, which
//! keeps every coarse vertex at its index and coordinates, so meshes of a
//! family are nested and vertex sets can be matched exactly.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum DomainKind {
    UnitSquare,
    LShape,
}

/// A polygonal domain described by its corners in counterclockwise order.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub kind: DomainKind,
    pub corners: Vec<Point>,
    /// Greatest interior angle.
    pub greatest_angle: f64,
}

impl Domain {
    pub fn new(kind: DomainKind) -> Self {
        match kind {
            DomainKind::UnitSquare => Domain {
                kind,
                corners: vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
                greatest_angle: PI / 2.0,
            },
            DomainKind::LShape => Domain {
                kind,
                corners: vec![
                    [-1.0, -1.0],
                    [1.0, -1.0],
                    [1.0, 0.0],
                    [0.0, 0.0],
                    [0.0, 1.0],
                    [-1.0, 1.0],
                ],
                greatest_angle: 1.5 * PI,
            },
        }
    }

    pub fn unit_square() -> Self {
        Self::new(DomainKind::UnitSquare)
    }

    pub fn l_shape() -> Self {
        Self::new(DomainKind::LShape)
    }

    pub fn area(&self) -> f64 {
        let n = self.corners.len();
        0.5 * (0..n)
            .map(|k| {
                let a = self.corners[k];
                let b = self.corners[(k + 1) % n];
                a[0] * b[1] - b[0] * a[1]
            })
            .sum::<f64>()
    }

    pub fn perimeter(&self) -> f64 {
        let n = self.corners.len();
        (0..n)
            .map(|k| dist(self.corners[k], self.corners[(k + 1) % n]))
            .sum()
    }

    fn lower_left(&self) -> Point {
        self.corners.iter().fold([f64::INFINITY; 2], |acc, c| {
            [acc[0].min(c[0]), acc[1].min(c[1])]
        })
    }

    fn upper_right(&self) -> Point {
        self.corners.iter().fold([f64::NEG_INFINITY; 2], |acc, c| {
            [acc[0].max(c[0]), acc[1].max(c[1])]
        })
    }
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
}

/// A boundary edge oriented so that the domain lies on its left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub normal: Point,
    pub length: f64,
    /// Index `k` of the straight segment between corners `k` and `k + 1`.
    pub segment: usize,
    pub triangle: usize,
    /// Local edge index inside `triangle`; local edge `k` joins local
    /// vertices `k` and `(k + 1) % 3`.
    pub local_edge: usize,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub domain: Domain,
    pub level: usize,
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    /// Unique edges as sorted vertex pairs.
    pub edges: Vec<[usize; 2]>,
    pub triangle_edges: Vec<[usize; 3]>,
    /// Boundary edges in counterclockwise loop order, starting at the first corner.
    pub boundary_edges: Vec<BoundaryEdge>,
    pub edge_on_boundary: Vec<bool>,
    pub vertex_on_boundary: Vec<bool>,
    pub corner_vertices: Vec<usize>,
    cells: CellLookup,
}

#[derive(Debug, Clone)]
struct CellLookup {
    origin: Point,
    cell_size: f64,
    nx: usize,
    ny: usize,
    /// `[below diagonal, above diagonal]` triangle per cell.
    slots: Vec<[Option<usize>; 2]>,
}

/// Builds the mesh of the given refinement level.
pub fn build_mesh(domain: &Domain, level: usize) -> Mesh {
    let (mut vertices, mut triangles) = coarse_mesh(domain.kind);
    for _ in 0..level {
        let (v, t) = refine(vertices, &triangles);
        vertices = v;
        triangles = t;
    }
    Mesh::from_parts(domain.clone(), level, vertices, triangles)
}

fn coarse_mesh(kind: DomainKind) -> (Vec<Point>, Vec<[usize; 3]>) {
    match kind {
        DomainKind::UnitSquare => (
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![[0, 1, 2], [0, 2, 3]],
        ),
        DomainKind::LShape => (
            vec![
                [-1.0, -1.0],
                [0.0, -1.0],
                [1.0, -1.0],
                [-1.0, 0.0],
                [0.0, 0.0],
                [1.0, 0.0],
                [-1.0, 1.0],
                [0.0, 1.0],
            ],
            vec![
                [0, 1, 4],
                [0, 4, 3],
                [1, 2, 5],
                [1, 5, 4],
                [3, 4, 7],
                [3, 7, 6],
            ],
        ),
    }
}

fn refine(mut vertices: Vec<Point>, triangles: &[[usize; 3]]) -> (Vec<Point>, Vec<[usize; 3]>) {
    let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
    let mut children = Vec::with_capacity(4 * triangles.len());
    let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
        let key = (a.min(b), a.max(b));
        *midpoints.entry(key).or_insert_with(|| {
            let (pa, pb) = (vertices[a], vertices[b]);
            vertices.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            vertices.len() - 1
        })
    };
    for &[a, b, c] in triangles {
        let ab = midpoint(a, b, &mut vertices);
        let bc = midpoint(b, c, &mut vertices);
        let ca = midpoint(c, a, &mut vertices);
        children.push([a, ab, ca]);
        children.push([ab, b, bc]);
        children.push([ca, bc, c]);
        children.push([ab, bc, ca]);
    }
    (vertices, children)
}

impl Mesh {
    fn from_parts(
        domain: Domain,
        level: usize,
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
    ) -> Mesh {
        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_owners: Vec<Vec<(usize, usize)>> = Vec::new();
        let mut triangle_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut te = [0; 3];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                let e = *edge_index.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_owners.push(Vec::with_capacity(2));
                    edges.len() - 1
                });
                edge_owners[e].push((t, k));
                te[k] = e;
            }
            triangle_edges.push(te);
        }

        let mut edge_on_boundary = vec![false; edges.len()];
        let mut vertex_on_boundary = vec![false; vertices.len()];
        let mut by_start: HashMap<usize, BoundaryEdge> = HashMap::new();
        for (e, owners) in edge_owners.iter().enumerate() {
            if owners.len() != 1 {
                continue;
            }
            edge_on_boundary[e] = true;
            let (t, k) = owners[0];
            let a = triangles[t][k];
            let b = triangles[t][(k + 1) % 3];
            vertex_on_boundary[a] = true;
            vertex_on_boundary[b] = true;
            let (pa, pb) = (vertices[a], vertices[b]);
            let length = dist(pa, pb);
            let normal = [(pb[1] - pa[1]) / length, -(pb[0] - pa[0]) / length];
            by_start.insert(
                a,
                BoundaryEdge {
                    vertices: [a, b],
                    normal,
                    length,
                    segment: 0,
                    triangle: t,
                    local_edge: k,
                },
            );
        }

        let corner_vertices: Vec<usize> = domain
            .corners
            .iter()
            .map(|c| {
                vertices
                    .iter()
                    .position(|v| v == c)
                    .expect("domain corners are mesh vertices")
            })
            .collect();

        let mut boundary_edges = Vec::with_capacity(by_start.len());
        let mut current = corner_vertices[0];
        let mut segment = 0;
        for _ in 0..by_start.len() {
            if let Some(k) = corner_vertices.iter().position(|&c| c == current) {
                segment = k;
            }
            let mut edge = by_start[&current];
            edge.segment = segment;
            current = edge.vertices[1];
            boundary_edges.push(edge);
        }
        debug_assert_eq!(current, corner_vertices[0]);

        let cells = CellLookup::build(&domain, level, &vertices, &triangles);
        Mesh {
            domain,
            level,
            vertices,
            triangles,
            edges,
            triangle_edges,
            boundary_edges,
            edge_on_boundary,
            vertex_on_boundary,
            corner_vertices,
            cells,
        }
    }

    /// Mesh size `h = 2^{-level} * sqrt(2)`.
    pub fn h(&self) -> f64 {
        2f64.powi(-(self.level as i32)) * 2f64.sqrt()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    /// Corner vertices paired with their coordinates, in boundary order.
    pub fn corner_nodes(&self) -> Vec<(usize, Point)> {
        self.corner_vertices
            .iter()
            .map(|&v| (v, self.vertices[v]))
            .collect()
    }

    /// Finds a triangle containing `p` and the barycentric coordinates of `p`
    /// in it. Points on shared edges may be reported in either neighbour.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        let c = &self.cells;
        let fx = (p[0] - c.origin[0]) / c.cell_size;
        let fy = (p[1] - c.origin[1]) / c.cell_size;
        let ix = (fx.floor().max(0.0) as usize).min(c.nx - 1);
        let iy = (fy.floor().max(0.0) as usize).min(c.ny - 1);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for dy in 0..2usize {
            for dx in 0..2usize {
                let (Some(cx), Some(cy)) = (ix.checked_sub(dx), iy.checked_sub(dy)) else {
                    continue;
                };
                for t in c.slots[cy * c.nx + cx].iter().flatten() {
                    let bary = self.barycentric(*t, p);
                    let worst = bary.iter().cloned().fold(f64::INFINITY, f64::min);
                    if worst >= -1e-12 {
                        return Some((*t, bary));
                    }
                    if best.as_ref().map_or(true, |b| worst > b.2) {
                        best = Some((*t, bary, worst));
                    }
                }
            }
        }
        best.filter(|b| b.2 > -1e-9).map(|b| (b.0, b.1))
    }

    pub fn barycentric(&self, t: usize, p: Point) -> [f64; 3] {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let l2 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
        let l3 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
        [1.0 - l2 - l3, l2, l3]
    }

    /// Legacy VTK ASCII unstructured grid (triangles only, cell type 5).
    pub fn to_vtk(&self) -> String {
        let mut s = String::new();
        s.push_str("# vtk DataFile Version 3.0\n");
        let _ = writeln!(s, "{:?} level {}", self.domain.kind, self.level);
        s.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
        let _ = writeln!(s, "POINTS {} double", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(s, "{} {} 0", v[0], v[1]);
        }
        let _ = writeln!(
            s,
            "CELLS {} {}",
            self.triangles.len(),
            4 * self.triangles.len()
        );
        for t in &self.triangles {
            let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
        }
        let _ = writeln!(s, "CELL_TYPES {}", self.triangles.len());
        for _ in &self.triangles {
            s.push_str("5\n");
        }
        s
    }
}

impl CellLookup {
    fn build(domain: &Domain, level: usize, vertices: &[Point], triangles: &[[usize; 3]]) -> Self {
        let origin = domain.lower_left();
        let upper = domain.upper_right();
        let cell_size = 2f64.powi(-(level as i32));
        let nx = ((upper[0] - origin[0]) / cell_size).round() as usize;
        let ny = ((upper[1] - origin[1]) / cell_size).round() as usize;
        let mut slots = vec![[None, None]; nx * ny];
        for (t, tri) in triangles.iter().enumerate() {
            let cx = tri.iter().map(|&v| vertices[v][0]).sum::<f64>() / 3.0;
            let cy = tri.iter().map(|&v| vertices[v][1]).sum::<f64>() / 3.0;
            let fx = (cx - origin[0]) / cell_size;
            let fy = (cy - origin[1]) / cell_size;
            let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
            let upper_half = (fy - fy.floor()) > (fx - fx.floor());
            slots[iy * nx + ix][upper_half as usize] = Some(t);
        }
        CellLookup {
            origin,
            cell_size,
            nx,
            ny,
            slots,
        }
    }
}
