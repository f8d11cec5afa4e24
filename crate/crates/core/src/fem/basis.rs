//! Local shape functions on the reference triangle.
//!
//! Points are given in barycentric coordinates `(l1, l2, l3)` with
//! `l2 = x`, `l3 = y` on the reference triangle. Gradients are returned
//! with respect to the reference coordinates `(x, y)`.

use serde::{Deserialize, Serialize};

/// Maximum number of local scalar velocity functions (P3).
pub const MAX_LOCAL: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    /// P1 + cubic bubble velocity, P1 pressure.
    Mini,
    /// Taylor–Hood P2–P1.
    Th2,
    /// Taylor–Hood P3–P2.
    Th3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ElementFamily {
    pub kind: ElementKind,
    pub velocity_degree: usize,
    pub pressure_degree: usize,
    pub has_bubble: bool,
}

impl ElementFamily {
    pub fn new(kind: ElementKind) -> Self {
        let (velocity_degree, pressure_degree, has_bubble) = match kind {
            ElementKind::Mini => (1, 1, true),
            ElementKind::Th2 => (2, 1, false),
            ElementKind::Th3 => (3, 2, false),
        };
        ElementFamily {
            kind,
            velocity_degree,
            pressure_degree,
            has_bubble,
        }
    }

    /// Local scalar velocity functions per triangle.
    pub fn velocity_local(&self) -> usize {
        match self.kind {
            ElementKind::Mini => 4,
            ElementKind::Th2 => 6,
            ElementKind::Th3 => 10,
        }
    }

    pub fn pressure_local(&self) -> usize {
        match self.pressure_degree {
            1 => 3,
            _ => 6,
        }
    }

    /// Degree of exactness used for element integrals.
    pub fn quadrature_degree(&self) -> usize {
        match self.kind {
            ElementKind::Mini | ElementKind::Th2 => 6,
            ElementKind::Th3 => 8,
        }
    }

    /// Gauss points per boundary edge.
    pub fn boundary_points(&self) -> usize {
        (2 * self.velocity_degree + 1).div_ceil(2) + 1
    }

    /// Barycentric positions of the local velocity nodes; `None` marks the
    /// Mini bubble, which has no nodal point.
    pub fn velocity_nodes(&self) -> Vec<Option<[f64; 3]>> {
        let mut nodes: Vec<Option<[f64; 3]>> = vec![
            Some([1.0, 0.0, 0.0]),
            Some([0.0, 1.0, 0.0]),
            Some([0.0, 0.0, 1.0]),
        ];
        match self.kind {
            ElementKind::Mini => nodes.push(None),
            ElementKind::Th2 => {
                for k in 0..3 {
                    let mut p = [0.0; 3];
                    p[k] = 0.5;
                    p[(k + 1) % 3] = 0.5;
                    nodes.push(Some(p));
                }
            }
            ElementKind::Th3 => {
                for k in 0..3 {
                    for near in [2.0 / 3.0, 1.0 / 3.0] {
                        let mut p = [0.0; 3];
                        p[k] = near;
                        p[(k + 1) % 3] = 1.0 - near;
                        nodes.push(Some(p));
                    }
                }
                nodes.push(Some([1.0 / 3.0; 3]));
            }
        }
        nodes
    }
}

/// Values and reference gradients of the local basis at one point.
#[derive(Debug, Clone, Copy)]
pub struct LocalValues {
    pub n: usize,
    pub values: [f64; MAX_LOCAL],
    pub grads: [[f64; 2]; MAX_LOCAL],
}

impl LocalValues {
    fn new(n: usize) -> Self {
        LocalValues {
            n,
            values: [0.0; MAX_LOCAL],
            grads: [[0.0; 2]; MAX_LOCAL],
        }
    }

    fn set(&mut self, i: usize, value: f64, dl: [f64; 3]) {
        self.values[i] = value;
        self.grads[i] = [dl[1] - dl[0], dl[2] - dl[0]];
    }

    pub fn values(&self) -> &[f64] {
        &self.values[..self.n]
    }

    pub fn grads(&self) -> &[[f64; 2]] {
        &self.grads[..self.n]
    }
}

fn unit(i: usize, s: f64) -> [f64; 3] {
    let mut d = [0.0; 3];
    d[i] = s;
    d
}

fn p1(out: &mut LocalValues, l: [f64; 3]) {
    for i in 0..3 {
        out.set(i, l[i], unit(i, 1.0));
    }
}

fn p2(out: &mut LocalValues, l: [f64; 3]) {
    for i in 0..3 {
        out.set(i, l[i] * (2.0 * l[i] - 1.0), unit(i, 4.0 * l[i] - 1.0));
    }
    for k in 0..3 {
        let (i, j) = (k, (k + 1) % 3);
        let mut d = [0.0; 3];
        d[i] = 4.0 * l[j];
        d[j] = 4.0 * l[i];
        out.set(3 + k, 4.0 * l[i] * l[j], d);
    }
}

fn p3(out: &mut LocalValues, l: [f64; 3]) {
    for i in 0..3 {
        let x = l[i];
        out.set(
            i,
            0.5 * x * (3.0 * x - 1.0) * (3.0 * x - 2.0),
            unit(i, 0.5 * (27.0 * x * x - 18.0 * x + 2.0)),
        );
    }
    for k in 0..3 {
        for (slot, (a, b)) in [(k, (k + 1) % 3), ((k + 1) % 3, k)].into_iter().enumerate() {
            // node on edge k closer to vertex `a`
            let (la, lb) = (l[a], l[b]);
            let mut d = [0.0; 3];
            d[a] = 4.5 * (6.0 * la * lb - lb);
            d[b] = 4.5 * (3.0 * la * la - la);
            out.set(3 + 2 * k + slot, 4.5 * la * lb * (3.0 * la - 1.0), d);
        }
    }
    bubble(out, 9, l);
}

fn bubble(out: &mut LocalValues, i: usize, l: [f64; 3]) {
    out.set(
        i,
        27.0 * l[0] * l[1] * l[2],
        [
            27.0 * l[1] * l[2],
            27.0 * l[0] * l[2],
            27.0 * l[0] * l[1],
        ],
    );
}

/// Local scalar velocity functions. Vector-valued velocity functions are
/// these times a unit vector.
pub fn velocity_basis(kind: ElementKind, l: [f64; 3]) -> LocalValues {
    match kind {
        ElementKind::Mini => {
            let mut out = LocalValues::new(4);
            p1(&mut out, l);
            bubble(&mut out, 3, l);
            out
        }
        ElementKind::Th2 => {
            let mut out = LocalValues::new(6);
            p2(&mut out, l);
            out
        }
        ElementKind::Th3 => {
            let mut out = LocalValues::new(10);
            p3(&mut out, l);
            out
        }
    }
}

pub fn pressure_basis(kind: ElementKind, l: [f64; 3]) -> LocalValues {
    match kind {
        ElementKind::Mini | ElementKind::Th2 => {
            let mut out = LocalValues::new(3);
            p1(&mut out, l);
            out
        }
        ElementKind::Th3 => {
            let mut out = LocalValues::new(6);
            p2(&mut out, l);
            out
        }
    }
}

/// Velocity and pressure shape functions at one barycentric point.
pub fn eval_basis(family: &ElementFamily, l: [f64; 3]) -> (LocalValues, LocalValues) {
    (velocity_basis(family.kind, l), pressure_basis(family.kind, l))
}
