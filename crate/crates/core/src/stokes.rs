//! Discrete Stokes solves with strongly imposed Dirichlet data.
//!
//! Every solve uses the pinned saddle matrix
//!
//! ```text
//! [ K_00  B̃_0^T ] [ y_I ]   [ r_v ]
//! [ B̃_0   0     ] [ p̃   ] = [ r_p ]
//! ```
//!
//! which is factorized once per space and shared by state and adjoint solves.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::Mat;

use crate::assembly::{boundary_load, AssembledSystem};
use crate::error::{Error, Result};
use crate::mesh::{BoundaryEdge, Point};
use crate::sparse::{dot, norm, CooBuilder};

/// Velocity and pinned pressure of a Dirichlet solve.
#[derive(Debug, Clone)]
pub struct StokesSolution {
    /// Full velocity coefficients `(y_I, u)`.
    pub velocity: Vec<f64>,
    /// Pressure without the pinned DOF (length `M - 1`).
    pub pressure: Vec<f64>,
    /// Relative residual of the momentum rows.
    pub momentum_residual: f64,
    /// `‖B̃_0 y_I + B̃_Γ u‖`.
    pub divergence_residual: f64,
}

pub struct StokesSolver {
    pub system: Arc<AssembledSystem>,
    lu: Lu<usize, f64>,
    n0: usize,
    np: usize,
}

impl std::fmt::Debug for StokesSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StokesSolver")
            .field("n0", &self.n0)
            .field("np", &self.np)
            .finish()
    }
}

impl StokesSolver {
    pub fn new(system: Arc<AssembledSystem>) -> Result<Self> {
        let n0 = system.n0();
        let np = system.m() - 1;
        let mut coo = CooBuilder::with_capacity(
            n0 + np,
            n0 + np,
            system.k_00.nnz() + 2 * system.b_tilde_0.nnz(),
        );
        coo.push_block(0, 0, &system.k_00, 1.0);
        for i in 0..np {
            for (j, v) in system.b_tilde_0.row(i) {
                coo.push(n0 + i, j, v);
                coo.push(j, n0 + i, v);
            }
        }
        let saddle = coo.into_csr().to_faer();
        let lu = saddle
            .sp_lu()
            .map_err(|e| Error::SingularSystem(format!("{e:?}")))?;
        let solver = StokesSolver { system, lu, n0, np };
        // a singular pivot shows up as non-finite output
        let probe = solver.solve_saddle(&vec![1.0; n0], &vec![0.0; np])?;
        if probe.0.iter().chain(&probe.1).any(|v| !v.is_finite()) {
            return Err(Error::SingularSystem("non-finite solution".into()));
        }
        Ok(solver)
    }

    /// Solves the pinned saddle system for one right-hand side.
    pub fn solve_saddle(&self, rhs_velocity: &[f64], rhs_pressure: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        assert_eq!(rhs_velocity.len(), self.n0);
        assert_eq!(rhs_pressure.len(), self.np);
        let mut rhs = Mat::<f64>::from_fn(self.n0 + self.np, 1, |i, _| {
            if i < self.n0 {
                rhs_velocity[i]
            } else {
                rhs_pressure[i - self.n0]
            }
        });
        self.lu.solve_in_place(rhs.as_mut());
        let col = rhs.col(0);
        let v: Vec<f64> = (0..self.n0).map(|i| col[i]).collect();
        let p: Vec<f64> = (0..self.np).map(|i| col[self.n0 + i]).collect();
        if v.iter().chain(&p).any(|x| !x.is_finite()) {
            return Err(Error::SingularSystem("non-finite solution".into()));
        }
        Ok((v, p))
    }

    /// Stokes solve with trace `u` on Γ and optional interior load `(f, ζ_j)`
    /// given over all `N` DOFs (only the interior part is used).
    pub fn solve_dirichlet(&self, u: &[f64], load: Option<&[f64]>) -> Result<StokesSolution> {
        let sys = &self.system;
        assert_eq!(u.len(), sys.n_gamma());
        let mut rhs_v = match load {
            Some(f) => f[..self.n0].to_vec(),
            None => vec![0.0; self.n0],
        };
        sys.k_g0.tr_mul_vec_acc(u, -1.0, &mut rhs_v);
        let rhs_p: Vec<f64> = sys.b_tilde_gamma.mul_vec(u).iter().map(|v| -v).collect();
        let (y_i, p) = self.solve_saddle(&rhs_v, &rhs_p)?;

        let mut res_v = sys.k_00.mul_vec(&y_i);
        sys.b_tilde_0.tr_mul_vec_acc(&p, 1.0, &mut res_v);
        for (r, b) in res_v.iter_mut().zip(&rhs_v) {
            *r -= b;
        }
        let mut res_p = sys.b_tilde_0.mul_vec(&y_i);
        sys.b_tilde_gamma.mul_vec_acc(u, 1.0, &mut res_p);
        let scale = norm(&rhs_v).max(norm(&sys.k_g0.tr_mul_vec(u))).max(f64::MIN_POSITIVE);

        let mut velocity = y_i;
        velocity.extend_from_slice(u);
        Ok(StokesSolution {
            velocity,
            pressure: p,
            momentum_residual: norm(&res_v) / scale,
            divergence_residual: norm(&res_p),
        })
    }

    /// Homogeneous-Dirichlet solve with source `M_0 g`:
    /// `K_00 z + B̃_0^T q̃ = M_0 g`, `B̃_0 z = 0`.
    pub fn solve_adjoint(&self, g: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        assert_eq!(g.len(), self.system.n());
        let rhs = self.system.m_0.mul_vec(g);
        self.solve_saddle(&rhs, &vec![0.0; self.np])
    }
}

/// L² projection onto the flux-free trace space: minimizes
/// `‖u_h - u‖²_{L²(Γ)}` subject to `u_h^T c = 0`, through the system
/// `[[S_ΓΓ, c], [c^T, 0]]`.
pub fn project_qh(sys: &AssembledSystem, u: impl Fn(Point, &BoundaryEdge) -> [f64; 2]) -> Result<Vec<f64>> {
    let b = boundary_load(&sys.space, u);
    project_functional(sys, &b)
}

/// Constrained projection of a functional `b_j = (u, ζ_j)_Γ`.
pub fn project_functional(sys: &AssembledSystem, b: &[f64]) -> Result<Vec<f64>> {
    let ng = sys.n_gamma();
    let mut coo = CooBuilder::with_capacity(ng + 1, ng + 1, sys.s_gg.nnz() + 2 * ng);
    coo.push_block(0, 0, &sys.s_gg, 1.0);
    for (j, &cj) in sys.c.iter().enumerate() {
        if cj != 0.0 {
            coo.push(ng, j, cj);
            coo.push(j, ng, cj);
        }
    }
    let lu = coo
        .into_csr()
        .to_faer()
        .sp_lu()
        .map_err(|e| Error::SingularSystem(format!("{e:?}")))?;
    let mut rhs = Mat::<f64>::from_fn(ng + 1, 1, |i, _| if i < ng { b[i] } else { 0.0 });
    lu.solve_in_place(rhs.as_mut());
    let col = rhs.col(0);
    let mut out: Vec<f64> = (0..ng).map(|i| col[i]).collect();
    // one correction step against rounding in the constraint
    let cc = dot(&sys.c, &sys.c);
    let drift = dot(&out, &sys.c) / cc;
    for (o, c) in out.iter_mut().zip(&sys.c) {
        *o -= drift * c;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble, assemble_with_pin, load_vector};
    use crate::fem::{build_space, ElementFamily, ElementKind};
    use crate::mesh::{build_mesh, Domain};
    use rand::{Rng, SeedableRng};

    fn solver(domain: Domain, level: usize, kind: ElementKind) -> StokesSolver {
        let mesh = Arc::new(build_mesh(&domain, level));
        let space = Arc::new(build_space(mesh, ElementFamily::new(kind)));
        StokesSolver::new(Arc::new(assemble(space))).unwrap()
    }

    #[test]
    fn linear_field_is_reproduced() {
        for kind in [ElementKind::Mini, ElementKind::Th2] {
            let s = solver(Domain::unit_square(), 3, kind);
            let sp = &s.system.space;
            let exact = sp.interpolate(|p| [p[0], -p[1]]);
            let sol = s.solve_dirichlet(&exact[sp.n0..], None).unwrap();
            let err = sol
                .velocity
                .iter()
                .zip(&exact)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-10, "{kind:?} {err}");
            // the pressure is constant
            let p = s.system.expand_pressure(&sol.pressure);
            assert!(p.iter().all(|v| v.abs() < 1e-10));
        }
    }

    #[test]
    fn homogeneous_problem_has_zero_solution() {
        let s = solver(Domain::unit_square(), 2, ElementKind::Mini);
        let sol = s.solve_dirichlet(&vec![0.0; s.system.n_gamma()], None).unwrap();
        assert!(sol.velocity.iter().chain(&sol.pressure).all(|v| *v == 0.0));
    }

    #[test]
    fn body_force_solution() {
        let s = solver(Domain::unit_square(), 4, ElementKind::Mini);
        let sys = &s.system;
        let f = load_vector(&sys.space, |_| [1.0, 1.0]);
        let sol = s.solve_dirichlet(&vec![0.0; sys.n_gamma()], Some(&f)).unwrap();
        assert!(sys.mass.quad_form(&sol.velocity, &sol.velocity) > 0.0);
        let div = sys.b_tilde_0.mul_vec(&sol.velocity[..sys.n0()]);
        assert!(norm(&div) < 1e-10);
        assert!(sol.momentum_residual < 1e-10);
    }

    #[test]
    fn adjoint_solve_is_self_adjoint() {
        let s = solver(Domain::l_shape(), 2, ElementKind::Mini);
        let sys = &s.system;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let g1: Vec<f64> = (0..sys.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g2: Vec<f64> = (0..sys.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (z1, _) = s.solve_adjoint(&g1).unwrap();
        let (z2, _) = s.solve_adjoint(&g2).unwrap();
        let a = dot(&sys.m_0.mul_vec(&g2), &z1);
        let b = dot(&sys.m_0.mul_vec(&g1), &z2);
        assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()));
        let (z, q) = s.solve_adjoint(&vec![0.0; sys.n()]).unwrap();
        assert!(z.iter().chain(&q).all(|v| *v == 0.0));
    }

    #[test]
    fn pin_choice_only_shifts_pressure() {
        let mesh = Arc::new(build_mesh(&Domain::unit_square(), 3));
        let space = Arc::new(build_space(mesh, ElementFamily::new(ElementKind::Mini)));
        let a = StokesSolver::new(Arc::new(assemble(space.clone()))).unwrap();
        let b = StokesSolver::new(Arc::new(assemble_with_pin(space.clone(), 0))).unwrap();
        // flux-free trace: rotation field
        let u = space.interpolate_trace(|p| [p[1] - 0.5, 0.5 - p[0]]);
        let sa = a.solve_dirichlet(&u, None).unwrap();
        let sb = b.solve_dirichlet(&u, None).unwrap();
        for (x, y) in sa.velocity.iter().zip(&sb.velocity) {
            assert!((x - y).abs() < 1e-10);
        }
        let pa = a.system.zero_mean_pressure(&sa.pressure);
        let pb = b.system.zero_mean_pressure(&sb.pressure);
        for (x, y) in pa.iter().zip(&pb) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn projection_is_idempotent_and_constrained() {
        let s = solver(Domain::unit_square(), 3, ElementKind::Th2);
        let sys = &s.system;
        let sp = &sys.space;
        // a flux-free trace is already in U_h
        let u = sp.interpolate_trace(|p| [p[1] * p[1], 0.3]);
        let flux = dot(&u, &sys.c);
        assert!(flux.abs() < 1e-12);
        let full = sp.zero_extend(&u);
        let proj = project_qh(sys, |p, _| sp.eval(&full, p).unwrap()).unwrap();
        for (a, b) in proj.iter().zip(&u) {
            assert!((a - b).abs() < 1e-12);
        }
        let pn = project_qh(sys, |_, e| e.normal).unwrap();
        assert!(dot(&pn, &sys.c).abs() < 1e-12);
    }
}
