//! Discrete control operators.
//!
//! For a trace vector `u` on Γ:
//!
//! * `E u` is the discrete Stokes extension `(y_I, u)`,
//! * `E* g = -K_Γ0 z - B̃_Γ^T q̃ + M_Γ g` with `(z, q̃)` the homogeneous
//!   Dirichlet solve with source `M_0 g`,
//! * `D u = K_Γ ỹ + B̃_Γ^T p̃` is the discrete Steklov–Poincaré operator,
//! * `T u = α D u + E* E u` (energy regularization) or
//!   `T u = α S_ΓΓ u + E* E u` (L² regularization).
//!
//! All results on Γ are functionals (dual vectors), i.e. `v^T (T u)` is the
//! boundary pairing of `T u` with the trace `v`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assembly::{load_vector, AssembledSystem};
use crate::error::Result;
use crate::mesh::Point;
use crate::stokes::{StokesSolution, StokesSolver};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regularization {
    /// Energy-space regularization `α/2 (D u, u)_Γ`.
    H12,
    /// `α/2 ‖u‖²_{L²(Γ)}`.
    L2,
}

impl std::str::FromStr for Regularization {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "h12" => Ok(Regularization::H12),
            "l2" => Ok(Regularization::L2),
            other => Err(format!("unknown regularization `{other}` (expected h12 or l2)")),
        }
    }
}

impl std::fmt::Display for Regularization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regularization::H12 => "h12",
            Regularization::L2 => "l2",
        })
    }
}

/// Coefficients on the trace space `Y_h(Γ)` together with whether the flux
/// constraint `u^T c = 0` is asserted to hold.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryVector {
    pub coeffs: Vec<f64>,
    pub flux_free: bool,
}

impl BoundaryVector {
    pub fn new(coeffs: Vec<f64>) -> Self {
        BoundaryVector {
            coeffs,
            flux_free: false,
        }
    }

    /// Marks the vector as flux free after checking
    /// `|u^T c| <= 1e-10 ‖u‖ ‖c‖`.
    pub fn flux_free(coeffs: Vec<f64>, c: &[f64]) -> Option<Self> {
        let ok = crate::sparse::dot(&coeffs, c).abs()
            <= 1e-10 * crate::sparse::norm(&coeffs) * crate::sparse::norm(c);
        ok.then_some(BoundaryVector {
            coeffs,
            flux_free: true,
        })
    }
}

/// Intermediate results of one application of `T`.
#[derive(Debug, Clone)]
pub struct TApplication {
    pub value: Vec<f64>,
    pub state: StokesSolution,
    pub adjoint: Vec<f64>,
    pub adjoint_pressure: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ControlOperator {
    pub solver: Arc<StokesSolver>,
    pub regularization: Regularization,
    pub alpha: f64,
}

impl ControlOperator {
    pub fn new(solver: Arc<StokesSolver>, regularization: Regularization, alpha: f64) -> Self {
        assert!(alpha > 0.0, "regularization parameter must be positive");
        ControlOperator {
            solver,
            regularization,
            alpha,
        }
    }

    pub fn system(&self) -> &AssembledSystem {
        &self.solver.system
    }

    /// State of the Dirichlet problem with trace `u` and no body force.
    pub fn apply_e(&self, u: &[f64]) -> Result<StokesSolution> {
        self.solver.solve_dirichlet(u, None)
    }

    pub fn apply_e_star(&self, g: &[f64]) -> Result<Vec<f64>> {
        let (z, q) = self.solver.solve_adjoint(g)?;
        Ok(self.negative_stress(g, &z, &q))
    }

    /// `-K_Γ0 z - B̃_Γ^T q̃ + M_Γ g`
    fn negative_stress(&self, g: &[f64], z: &[f64], q: &[f64]) -> Vec<f64> {
        let sys = self.system();
        let mut out = sys.m_g.mul_vec(g);
        sys.k_g0.mul_vec_acc(z, -1.0, &mut out);
        sys.b_tilde_gamma.tr_mul_vec_acc(q, -1.0, &mut out);
        out
    }

    /// `K_Γ ỹ + B̃_Γ^T p̃` for a computed state.
    pub fn stress_of_state(&self, state: &StokesSolution) -> Vec<f64> {
        let sys = self.system();
        let mut out = sys.k_g.mul_vec(&state.velocity);
        sys.b_tilde_gamma.tr_mul_vec_acc(&state.pressure, 1.0, &mut out);
        out
    }

    pub fn apply_d(&self, u: &[f64]) -> Result<Vec<f64>> {
        let state = self.apply_e(u)?;
        Ok(self.stress_of_state(&state))
    }

    pub fn apply_t(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.apply_t_full(u)?.value)
    }

    pub fn apply_t_full(&self, u: &[f64]) -> Result<TApplication> {
        // state solve
        let state = self.apply_e(u)?;
        // adjoint solve with the state as source
        let (z, q) = self.solver.solve_adjoint(&state.velocity)?;
        let mut value = self.negative_stress(&state.velocity, &z, &q);
        match self.regularization {
            Regularization::H12 => {
                let d = self.stress_of_state(&state);
                crate::sparse::axpy(self.alpha, &d, &mut value);
            }
            Regularization::L2 => {
                self.system().s_gg.mul_vec_acc(u, self.alpha, &mut value);
            }
        }
        Ok(TApplication {
            value,
            state,
            adjoint: z,
            adjoint_pressure: q,
        })
    }

    /// Data vector `w = E* y_d`, computed as
    /// `K_00 z_d + B̃_0^T q̃_d = M_0 y_d`, `B̃_0 z_d = 0`, then
    /// `w = -K_Γ0 z_d - B̃_Γ^T q̃_d + M_Γ y_d`.
    pub fn compute_w(&self, y_d: &[f64]) -> Result<Vec<f64>> {
        let sys = self.system();
        let rhs = sys.m_0.mul_vec(y_d);
        let (z_d, q_d) = self
            .solver
            .solve_saddle(&rhs, &vec![0.0; sys.m() - 1])?;
        let mut w = sys.m_g.mul_vec(y_d);
        sys.k_g0.mul_vec_acc(&z_d, -1.0, &mut w);
        sys.b_tilde_gamma.tr_mul_vec_acc(&q_d, -1.0, &mut w);
        Ok(w)
    }

    /// Regularization energy `(R u, u)` with `R = D` or `R = S_ΓΓ`.
    pub fn regularization_energy(&self, u: &[f64]) -> Result<f64> {
        Ok(match self.regularization {
            Regularization::H12 => crate::sparse::dot(u, &self.apply_d(u)?),
            Regularization::L2 => self.system().s_gg.quad_form(u, u),
        })
    }
}

/// Discrete state `y^f` driven by a body force with homogeneous boundary data.
pub fn body_force_state(solver: &StokesSolver, f: impl Fn(Point) -> [f64; 2] + Sync) -> Result<Vec<f64>> {
    let sys = &solver.system;
    let load = load_vector(&sys.space, f);
    Ok(solver
        .solve_dirichlet(&vec![0.0; sys.n_gamma()], Some(&load))?
        .velocity)
}

/// Replaces the target by `y_d - y^f`, which turns a problem with body force
/// `f` into one without it.
pub fn shift_target(
    solver: &StokesSolver,
    f: Option<&(dyn Fn(Point) -> [f64; 2] + Sync)>,
    y_d: &[f64],
) -> Result<Vec<f64>> {
    let Some(f) = f else {
        return Ok(y_d.to_vec());
    };
    let y_f = body_force_state(solver, f)?;
    Ok(y_d.iter().zip(&y_f).map(|(a, b)| a - b).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble;
    use crate::fem::{build_space, ElementFamily, ElementKind};
    use crate::mesh::{build_mesh, Domain};
    use crate::sparse::dot;

    fn operator(kind: ElementKind, reg: Regularization) -> ControlOperator {
        let mesh = Arc::new(build_mesh(&Domain::unit_square(), 2));
        let space = Arc::new(build_space(mesh, ElementFamily::new(kind)));
        let solver = Arc::new(StokesSolver::new(Arc::new(assemble(space))).unwrap());
        ControlOperator::new(solver, reg, 0.5)
    }

    #[test]
    fn zero_in_zero_out() {
        let op = operator(ElementKind::Mini, Regularization::H12);
        let ng = op.system().n_gamma();
        let n = op.system().n();
        assert!(op.apply_e(&vec![0.0; ng]).unwrap().velocity.iter().all(|v| *v == 0.0));
        assert!(op.apply_e_star(&vec![0.0; n]).unwrap().iter().all(|v| *v == 0.0));
        assert!(op.apply_d(&vec![0.0; ng]).unwrap().iter().all(|v| *v == 0.0));
        assert!(op.apply_t(&vec![0.0; ng]).unwrap().iter().all(|v| *v == 0.0));
        assert!(op.compute_w(&vec![0.0; n]).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn extension_reproduces_linear_field() {
        let op = operator(ElementKind::Th2, Regularization::H12);
        let sp = &op.system().space;
        let exact = sp.interpolate(|p| [p[0], -p[1]]);
        let y = op.apply_e(&exact[sp.n0..]).unwrap().velocity;
        for (a, b) in y.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn w_matches_e_star() {
        let op = operator(ElementKind::Mini, Regularization::H12);
        let yd = op.system().space.interpolate(|p| [p[0], p[1] - p[0]]);
        let w = op.compute_w(&yd).unwrap();
        let e = op.apply_e_star(&yd).unwrap();
        for (a, b) in w.iter().zip(&e) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_trace_has_zero_energy() {
        let op = operator(ElementKind::Mini, Regularization::H12);
        let u = op.system().space.interpolate_trace(|_| [1.0, -2.0]);
        let d = op.apply_d(&u).unwrap();
        assert!(dot(&u, &d).abs() < 1e-12);
    }

    #[test]
    fn modes_differ_by_regularization_term() {
        let h = operator(ElementKind::Mini, Regularization::H12);
        let l = ControlOperator::new(h.solver.clone(), Regularization::L2, h.alpha);
        let u = h.system().space.interpolate_trace(|p| [p[1] * (1.0 - p[1]), p[0]]);
        let th = h.apply_t(&u).unwrap();
        let tl = l.apply_t(&u).unwrap();
        let d = h.apply_d(&u).unwrap();
        let s = h.system().s_gg.mul_vec(&u);
        for i in 0..u.len() {
            let expected = h.alpha * d[i] - h.alpha * s[i];
            assert!((th[i] - tl[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_without_force_is_identity() {
        let op = operator(ElementKind::Mini, Regularization::L2);
        let yd = op.system().space.interpolate(|p| [p[0], 1.0]);
        assert_eq!(shift_target(&op.solver, None, &yd).unwrap(), yd);
        let zero = vec![0.0; yd.len()];
        let f = |p: Point| [-p[1], p[0]];
        let shifted = shift_target(&op.solver, Some(&f), &zero).unwrap();
        let yf = body_force_state(&op.solver, f).unwrap();
        assert!(shifted.iter().zip(&yf).all(|(a, b)| *a == -b));
        assert!(yf.iter().any(|v| v.abs() > 1e-6));
    }

    #[test]
    fn gradient_force_is_absorbed_by_pressure() {
        let op = operator(ElementKind::Th2, Regularization::H12);
        let yf = body_force_state(&op.solver, |_| [1.0, 1.0]).unwrap();
        assert!(yf.iter().all(|v| v.abs() < 1e-12));
    }
}
