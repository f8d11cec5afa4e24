//! Singular exponents, boundary error norms and convergence rates.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::assembly::AssembledSystem;
use crate::control::ControlOperator;
use crate::error::{Error, Result};
use crate::fem::{FeSpace, Quadrature};
use crate::sparse::dot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingularExponent {
    pub omega: f64,
    /// Real part of the smallest nonzero root.
    pub xi: f64,
    pub imaginary: f64,
    /// `min(ξ - 1/2, 1/2)`
    pub s_star: f64,
    /// `min(1, ξ)`
    pub rate: f64,
}

/// Smallest nonzero root of `sin²(zω) = z² sin²ω` in the right half plane.
///
/// Newton is run on `sin(zω) ± z sin ω` from a grid of starting points.
/// The root `z = 1` of the minus branch holds for every `ω` and is skipped.
pub fn singular_exponent(omega: f64) -> Result<SingularExponent> {
    if !(omega > 0.0 && omega <= 2.0 * std::f64::consts::PI) {
        return Err(Error::NoRoot(omega));
    }
    let sw = omega.sin();
    let mut roots: Vec<Complex64> = Vec::new();
    for sign in [1.0, -1.0] {
        let g = |z: Complex64| (z * omega).sin() + z * (sign * sw);
        let dg = |z: Complex64| (z * omega).cos() * omega + sign * sw;
        for i in 1..=45 {
            for k in 0..=30 {
                let mut z = Complex64::new(0.1 * i as f64, 0.1 * k as f64);
                for _ in 0..60 {
                    let d = dg(z);
                    if d.norm() < 1e-300 {
                        break;
                    }
                    let step = g(z) / d;
                    z -= step;
                    if !z.is_finite() || step.norm() < 1e-15 * z.norm().max(1.0) {
                        break;
                    }
                }
                if !z.is_finite() || g(z).norm() >= 1e-12 || z.re <= 1e-8 || z.norm() < 1e-6 {
                    continue;
                }
                if sign < 0.0 && (z - 1.0).norm() < 1e-6 {
                    continue;
                }
                let z = Complex64::new(z.re, z.im.abs());
                if !roots.iter().any(|r| (r - z).norm() < 1e-8) {
                    roots.push(z);
                }
            }
        }
    }
    let best = roots
        .into_iter()
        .min_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)))
        .ok_or(Error::NoRoot(omega))?;
    Ok(SingularExponent {
        omega,
        xi: best.re,
        imaginary: best.im,
        s_star: (best.re - 0.5).min(0.5),
        rate: best.re.min(1.0),
    })
}

/// `√(e^T S_ΓΓ e)`
pub fn error_l2_gamma(sys: &AssembledSystem, e: &[f64]) -> f64 {
    sys.s_gg.quad_form(e, e).max(0.0).sqrt()
}

/// Discrete `H^{1/2}(Γ)` seminorm `⟨D e, e⟩^{1/2}` on the given mesh.
pub fn error_h12_gamma(op: &ControlOperator, e: &[f64]) -> Result<f64> {
    Ok(dot(e, &op.apply_d(e)?).max(0.0).sqrt())
}

fn check_nested(coarse: &FeSpace, fine: &FeSpace) -> Result<()> {
    if coarse.mesh.domain.kind != fine.mesh.domain.kind {
        return Err(Error::NotNested("different domains".into()));
    }
    if coarse.mesh.level > fine.mesh.level {
        return Err(Error::NotNested(format!(
            "coarse level {} above fine level {}",
            coarse.mesh.level, fine.mesh.level
        )));
    }
    if coarse.family.kind != fine.family.kind {
        return Err(Error::NotNested("different element families".into()));
    }
    Ok(())
}

/// Interpolates a coarse trace into the fine trace space. Exact for nested
/// meshes since traces are continuous piecewise polynomials of equal degree.
pub fn prolong_trace(coarse: &FeSpace, u: &[f64], fine: &FeSpace) -> Result<Vec<f64>> {
    check_nested(coarse, fine)?;
    let full = coarse.zero_extend(u);
    let mut out = vec![0.0; fine.n_gamma];
    for (k, &node) in fine.boundary_nodes.iter().enumerate() {
        let p = fine.node_points[node].expect("boundary nodes are Lagrange nodes");
        let v = coarse
            .eval(&full, p)
            .ok_or_else(|| Error::NotNested(format!("point {p:?} outside the coarse mesh")))?;
        out[2 * k] = v[0];
        out[2 * k + 1] = v[1];
    }
    Ok(out)
}

/// Samples a fine trace at the coarse boundary nodes.
pub fn restrict_trace(fine: &FeSpace, u: &[f64], coarse: &FeSpace) -> Result<Vec<f64>> {
    check_nested(coarse, fine)?;
    let full = fine.zero_extend(u);
    let mut out = vec![0.0; coarse.n_gamma];
    for (k, &node) in coarse.boundary_nodes.iter().enumerate() {
        let p = coarse.node_points[node].expect("boundary nodes are Lagrange nodes");
        let v = fine
            .eval(&full, p)
            .ok_or_else(|| Error::NotNested(format!("point {p:?} outside the fine mesh")))?;
        out[2 * k] = v[0];
        out[2 * k + 1] = v[1];
    }
    Ok(out)
}

/// `‖y_f - y_c‖_{L²(Ω)}` by quadrature on the fine mesh, evaluating the
/// coarse field by point location.
pub fn l2_difference(fine: &FeSpace, y_fine: &[f64], coarse: &FeSpace, y_coarse: &[f64]) -> Result<f64> {
    check_nested(coarse, fine)?;
    let q = Quadrature::triangle(2 * fine.family.velocity_degree.max(3));
    let mesh = &fine.mesh;
    let mut sum = 0.0;
    for t in 0..mesh.num_triangles() {
        let [a, b, c] = mesh.triangles[t].map(|v| mesh.vertices[v]);
        let jac = 2.0 * mesh.signed_area(t).abs();
        for (l, w) in q.points.iter().zip(&q.weights) {
            let p = [
                l[0] * a[0] + l[1] * b[0] + l[2] * c[0],
                l[0] * a[1] + l[1] * b[1] + l[2] * c[1],
            ];
            let vf = fine.eval_in_cell(y_fine, t, *l);
            let vc = coarse
                .eval(y_coarse, p)
                .ok_or_else(|| Error::NotNested(format!("point {p:?} outside the coarse mesh")))?;
            sum += w * jac * ((vf[0] - vc[0]).powi(2) + (vf[1] - vc[1]).powi(2));
        }
    }
    Ok(sum.sqrt())
}

/// `|q_0(x_j) + λ_0|` at each corner vertex, where `q_0` is the zero-mean
/// representative of the pinned adjoint pressure.
pub fn corner_residuals(sys: &AssembledSystem, adjoint_pressure: &[f64], lambda0: f64) -> Vec<f64> {
    corner_values(sys, &sys.zero_mean_pressure(adjoint_pressure), lambda0)
}

/// `|q(x_j) + λ_0|` for a full pressure vector `q`.
pub fn corner_values(sys: &AssembledSystem, q: &[f64], lambda0: f64) -> Vec<f64> {
    sys.space
        .mesh
        .corner_vertices
        .iter()
        .map(|&v| (q[v] + lambda0).abs())
        .collect()
}

/// `rate_i = log2(err_{i-1} / err_i)`; `None` for the first level and
/// whenever an error is zero.
pub fn rates(errors: &[f64]) -> Vec<Option<f64>> {
    let mut out = vec![None; errors.len()];
    for i in 1..errors.len() {
        let (a, b) = (errors[i - 1], errors[i]);
        if a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() {
            out[i] = Some((a / b).log2());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelErrors {
    pub level: usize,
    pub h: f64,
    pub err_l2_gamma: f64,
    pub rate_l2: Option<f64>,
    pub err_h12: f64,
    pub rate_h12: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub err_state: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_state: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub err_adjoint: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_adjoint: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelFunctionals {
    pub level: usize,
    pub f0: f64,
    pub f: f64,
    pub j: f64,
    pub lambda: f64,
    pub lambda0: Option<f64>,
    pub corner_residuals: Vec<f64>,
    pub cg_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub singular_exponent: SingularExponent,
    pub levels: Vec<LevelErrors>,
    pub reference: LevelFunctionals,
    pub per_level: Vec<LevelFunctionals>,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let fmt = |r: Option<f64>| r.map_or(String::new(), |v| format!("{v:.6}"));
        let mut out = String::from("level,h,err_l2_gamma,rate_l2,err_h12,rate_h12\n");
        for l in &self.levels {
            out.push_str(&format!(
                "{},{:.6e},{:.6e},{},{:.6e},{}\n",
                l.level,
                l.h,
                l.err_l2_gamma,
                fmt(l.rate_l2),
                l.err_h12,
                fmt(l.rate_h12)
            ));
        }
        out
    }
}
