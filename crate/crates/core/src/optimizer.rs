//! Null-space reduced solve and the assembled optimality system.

use serde::{Deserialize, Serialize};

use crate::control::{ControlOperator, Regularization};
use crate::error::{Error, Result};
use crate::sparse::{axpy, dot, norm, CooBuilder, CsrMatrix};
use crate::stokes::StokesSolution;

/// Basis `Z` of the kernel of `c^T`. Column `j` is the unit vector of trace
/// position `j` (skipping the pivot) with `-c_j / c_k` in the pivot row.
#[derive(Debug, Clone)]
pub struct NullSpaceBasis {
    pub c: Vec<f64>,
    pub pivot: usize,
}

impl NullSpaceBasis {
    /// Pivot at the largest `|c_i|`.
    pub fn new(c: &[f64]) -> Self {
        let pivot = c
            .iter()
            .enumerate()
            .fold((0, -1.0), |best, (i, v)| if v.abs() > best.1 { (i, v.abs()) } else { best })
            .0;
        Self::with_pivot(c, pivot)
    }

    pub fn with_pivot(c: &[f64], pivot: usize) -> Self {
        assert!(c[pivot] != 0.0, "pivot entry of c must be nonzero");
        NullSpaceBasis {
            c: c.to_vec(),
            pivot,
        }
    }

    pub fn rows(&self) -> usize {
        self.c.len()
    }

    pub fn cols(&self) -> usize {
        self.c.len() - 1
    }

    fn position(&self, j: usize) -> usize {
        if j < self.pivot {
            j
        } else {
            j + 1
        }
    }

    /// Entry `Z_{k,j}` of the pivot row.
    pub fn pivot_entry(&self, j: usize) -> f64 {
        -self.c[self.position(j)] / self.c[self.pivot]
    }

    /// `u = Z x`
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols());
        let k = self.pivot;
        let mut u = Vec::with_capacity(self.rows());
        u.extend_from_slice(&x[..k]);
        u.push(0.0);
        u.extend_from_slice(&x[k..]);
        let s: f64 = (0..self.rows()).filter(|&i| i != k).map(|i| self.c[i] * u[i]).sum();
        u[k] = -s / self.c[k];
        u
    }

    /// `Z^T v`
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.rows());
        let k = self.pivot;
        (0..self.cols())
            .map(|j| {
                let i = self.position(j);
                v[i] - self.c[i] / self.c[k] * v[k]
            })
            .collect()
    }

    pub fn to_csr(&self) -> CsrMatrix {
        let mut coo = CooBuilder::with_capacity(self.rows(), self.cols(), 2 * self.cols());
        for j in 0..self.cols() {
            coo.push(self.position(j), j, 1.0);
            coo.push(self.pivot, j, self.pivot_entry(j));
        }
        coo.into_csr()
    }

    /// Diagonal of `Z^T A Z` for a symmetric `A`.
    pub fn projected_diagonal(&self, a: &CsrMatrix) -> Vec<f64> {
        let k = self.pivot;
        let a_kk = a.get(k, k);
        (0..self.cols())
            .map(|j| {
                let i = self.position(j);
                let z = self.pivot_entry(j);
                a.get(i, i) + 2.0 * z * a.get(i, k) + z * z * a_kk
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions {
            tolerance: 1e-10,
            max_iterations: 5000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Reduced,
    Big,
}

#[derive(Debug, Clone, Default)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    /// Relative preconditioned residual at each CG iteration (starting with 1).
    pub residual_history: Vec<f64>,
    /// Decrease of the `Z^T T Z` energy error at each CG step.
    pub energy_decrements: Vec<f64>,
    /// Residuals of the five block rows of the assembled system.
    pub block_residuals: Option<[f64; 5]>,
}

#[derive(Debug, Clone)]
pub struct OptimalSolution {
    pub control: Vec<f64>,
    pub state: StokesSolution,
    /// Adjoint velocity `z` on the interior DOFs.
    pub adjoint: Vec<f64>,
    /// Pinned adjoint pressure `q̃`.
    pub adjoint_pressure: Vec<f64>,
    pub lambda: f64,
    pub lambda0: Option<f64>,
    pub j: f64,
    pub f: f64,
    /// `‖Z^T (T u - w)‖ / ‖Z^T w‖`
    pub first_order_residual: f64,
    pub method: SolveMethod,
    pub diagnostics: SolveDiagnostics,
}

/// Result of a preconditioned CG run.
#[derive(Debug, Clone)]
pub struct CgResult {
    pub x: Vec<f64>,
    pub diagnostics: SolveDiagnostics,
}

/// Preconditioned conjugate gradients for an SPD operator given as a closure.
pub fn pcg(
    apply: impl Fn(&[f64]) -> Result<Vec<f64>>,
    b: &[f64],
    inv_diag: &[f64],
    opts: CgOptions,
) -> Result<CgResult> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut diag = SolveDiagnostics::default();
    let mut r = b.to_vec();
    let precondition = |r: &[f64]| -> Vec<f64> { r.iter().zip(inv_diag).map(|(a, d)| a * d).collect() };
    let mut z = precondition(&r);
    let mut rz = dot(&r, &z);
    let rz0 = rz;
    diag.residual_history.push(1.0);
    if rz0 == 0.0 {
        return Ok(CgResult { x, diagnostics: diag });
    }
    let mut p = z.clone();
    loop {
        let rel = (rz / rz0).max(0.0).sqrt();
        if rel <= opts.tolerance {
            break;
        }
        if diag.iterations >= opts.max_iterations {
            return Err(Error::CgNotConverged {
                iterations: diag.iterations,
                residual: rel,
            });
        }
        let ap = apply(&p)?;
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::Indefinite(pap));
        }
        let step = rz / pap;
        axpy(step, &p, &mut x);
        axpy(-step, &ap, &mut r);
        diag.energy_decrements.push(step * rz);
        z = precondition(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
        diag.iterations += 1;
        diag.residual_history.push((rz / rz0).max(0.0).sqrt());
    }
    Ok(CgResult { x, diagnostics: diag })
}

/// `αK_ΓΓ + M_ΓΓ` (energy mode) or `αS_ΓΓ + M_ΓΓ` (L² mode).
pub fn boundary_operator(op: &ControlOperator) -> CsrMatrix {
    let sys = op.system();
    match op.regularization {
        Regularization::H12 => sys.k_gg.add(op.alpha, &sys.m_gg, 1.0),
        Regularization::L2 => sys.s_gg.add(op.alpha, &sys.m_gg, 1.0),
    }
}

/// Solves `Z^T T Z x = Z^T w` by Jacobi-preconditioned CG and recovers `u = Z x`.
pub fn solve_reduced(op: &ControlOperator, y_d: &[f64], opts: CgOptions) -> Result<OptimalSolution> {
    let w = op.compute_w(y_d)?;
    let basis = NullSpaceBasis::new(&op.system().c);
    solve_reduced_with(op, y_d, &w, &basis, opts)
}

/// As [`solve_reduced`] with a given data vector and basis.
pub fn solve_reduced_with(
    op: &ControlOperator,
    y_d: &[f64],
    w: &[f64],
    basis: &NullSpaceBasis,
    opts: CgOptions,
) -> Result<OptimalSolution> {
    let rhs = basis.apply_transpose(w);
    let inv_diag: Vec<f64> = basis
        .projected_diagonal(&boundary_operator(op))
        .iter()
        .map(|d| if *d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let cg = pcg(
        |x| Ok(basis.apply_transpose(&op.apply_t(&basis.apply(x))?)),
        &rhs,
        &inv_diag,
        opts,
    )?;
    let u = basis.apply(&cg.x);
    finish(op, y_d, u, basis, SolveMethod::Reduced, cg.diagnostics)
}

/// `λ_0 = -λ / |Γ|`
pub fn recover_lambda0(lambda: f64, boundary_length: f64) -> f64 {
    -lambda / boundary_length
}

/// `F = ½ (y - y_d)^T M (y - y_d)`
pub fn tracking(op: &ControlOperator, y: &[f64], y_d: &[f64]) -> f64 {
    let e: Vec<f64> = y.iter().zip(y_d).map(|(a, b)| a - b).collect();
    0.5 * op.system().mass.quad_form(&e, &e)
}

/// Returns `(J, F)` for control `u`.
pub fn evaluate_functionals(op: &ControlOperator, u: &[f64], y_d: &[f64]) -> Result<(f64, f64)> {
    let state = op.apply_e(u)?;
    let f = tracking(op, &state.velocity, y_d);
    let j = f + 0.5 * op.alpha * op.regularization_energy(u)?;
    Ok((j, f))
}

fn finish(
    op: &ControlOperator,
    y_d: &[f64],
    u: Vec<f64>,
    basis: &NullSpaceBasis,
    method: SolveMethod,
    diagnostics: SolveDiagnostics,
) -> Result<OptimalSolution> {
    let sys = op.system();
    let state = op.apply_e(&u)?;
    let e: Vec<f64> = state.velocity.iter().zip(y_d).map(|(a, b)| a - b).collect();
    let (z, q) = op.solver.solve_adjoint(&e)?;

    // T u - w = α R u + M_Γ (y - y_d) - K_Γ0 z - B̃_Γ^T q̃
    let mut r = sys.m_g.mul_vec(&e);
    sys.k_g0.mul_vec_acc(&z, -1.0, &mut r);
    sys.b_tilde_gamma.tr_mul_vec_acc(&q, -1.0, &mut r);
    let reg = match op.regularization {
        Regularization::H12 => op.stress_of_state(&state),
        Regularization::L2 => sys.s_gg.mul_vec(&u),
    };
    axpy(op.alpha, &reg, &mut r);

    let lambda = dot(&sys.c, &r) / dot(&sys.c, &sys.c);
    let f = 0.5 * sys.mass.quad_form(&e, &e);
    let j = f + 0.5 * op.alpha * dot(&u, &reg);
    let w_norm = norm(&basis.apply_transpose(&op.compute_w(y_d)?));
    let first_order_residual = norm(&basis.apply_transpose(&r)) / w_norm.max(f64::MIN_POSITIVE);
    let lambda0 = match op.regularization {
        Regularization::L2 => Some(recover_lambda0(lambda, sys.boundary_length)),
        Regularization::H12 => None,
    };
    Ok(OptimalSolution {
        control: u,
        state,
        adjoint: z,
        adjoint_pressure: q,
        lambda,
        lambda0,
        j,
        f,
        first_order_residual,
        method,
        diagnostics,
    })
}

/// Assembled optimality system in the unknowns `(y_I, x, p̃, z, q̃)` and its
/// right-hand side.
pub fn big_system(op: &ControlOperator, y_d: &[f64], basis: &NullSpaceBasis) -> (CsrMatrix, Vec<f64>, [usize; 6]) {
    let sys = op.system();
    let alpha = op.alpha;
    let n0 = sys.n0();
    let nx = basis.cols();
    let np = sys.m() - 1;
    let z = basis.to_csr();
    let zt = z.transpose();

    // row and column block offsets share the same layout
    let off = [0, n0, n0 + nx, n0 + nx + np, 2 * n0 + nx + np, 2 * n0 + nx + 2 * np];
    let [oy, ox, op_, oz, oq, total] = off;

    let k0g_z = sys.k_g0.transpose().mul(&z);
    let bg_z = sys.b_tilde_gamma.mul(&z);
    let m0g_z = sys.m_g0.transpose().mul(&z);
    let (a_g0, a_gg) = match op.regularization {
        Regularization::H12 => (
            sys.k_g0.add(alpha, &sys.m_g0, 1.0),
            sys.k_gg.add(alpha, &sys.m_gg, 1.0),
        ),
        Regularization::L2 => (sys.m_g0.clone(), sys.s_gg.add(alpha, &sys.m_gg, 1.0)),
    };
    let zt_a_g0 = zt.mul(&a_g0);
    let zt_a_gg_z = zt.mul(&a_gg).mul(&z);
    let zt_bgt = zt.mul(&sys.b_tilde_gamma.transpose());
    let zt_kg0 = zt.mul(&sys.k_g0);
    let b0t = sys.b_tilde_0.transpose();

    let mut coo = CooBuilder::new(total, total);
    // state momentum
    coo.push_block(oy, oy, &sys.k_00, 1.0);
    coo.push_block(oy, ox, &k0g_z, 1.0);
    coo.push_block(oy, op_, &b0t, 1.0);
    // state divergence
    let r2 = ox;
    let r3 = r2 + np;
    let r4 = r3 + n0;
    let r5 = r4 + np;
    coo.push_block(r2, oy, &sys.b_tilde_0, 1.0);
    coo.push_block(r2, ox, &bg_z, 1.0);
    // adjoint momentum
    coo.push_block(r3, oy, &sys.m_00, -1.0);
    coo.push_block(r3, ox, &m0g_z, -1.0);
    coo.push_block(r3, oz, &sys.k_00, 1.0);
    coo.push_block(r3, oq, &b0t, 1.0);
    // adjoint divergence
    coo.push_block(r4, oz, &sys.b_tilde_0, 1.0);
    // optimality
    coo.push_block(r5, oy, &zt_a_g0, 1.0);
    coo.push_block(r5, ox, &zt_a_gg_z, 1.0);
    if op.regularization == Regularization::H12 {
        coo.push_block(r5, op_, &zt_bgt, alpha);
    }
    coo.push_block(r5, oz, &zt_kg0, -1.0);
    coo.push_block(r5, oq, &zt_bgt, -1.0);
    let a = coo.into_csr();

    let mut rhs = vec![0.0; total];
    let m0yd = sys.m_0.mul_vec(y_d);
    for (i, v) in m0yd.iter().enumerate() {
        rhs[r3 + i] = -v;
    }
    let zt_mg_yd = basis.apply_transpose(&sys.m_g.mul_vec(y_d));
    rhs[r5..].copy_from_slice(&zt_mg_yd);
    (a, rhs, [oy, ox, op_, oz, oq, total])
}

/// Direct solve of the assembled optimality system.
pub fn solve_big(op: &ControlOperator, y_d: &[f64]) -> Result<OptimalSolution> {
    use faer::linalg::solvers::Solve;

    let sys = op.system();
    let basis = NullSpaceBasis::new(&sys.c);
    let (a, rhs, [_, ox, op_, _, _, total]) = big_system(op, y_d, &basis);
    let lu = a
        .to_faer()
        .sp_lu()
        .map_err(|e| Error::SingularSystem(format!("optimality system: {e:?}")))?;
    let solve = |b: &[f64]| -> Vec<f64> {
        let mut m = faer::Mat::<f64>::from_fn(total, 1, |i, _| b[i]);
        lu.solve_in_place(m.as_mut());
        (0..total).map(|i| m[(i, 0)]).collect()
    };
    let mut sol = solve(&rhs);
    // one step of iterative refinement
    let mut res = rhs.clone();
    a.mul_vec_acc(&sol, -1.0, &mut res);
    let corr = solve(&res);
    axpy(1.0, &corr, &mut sol);
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem("optimality system: non-finite solution".into()));
    }

    let mut res = rhs.clone();
    a.mul_vec_acc(&sol, -1.0, &mut res);
    let n0 = sys.n0();
    let np = sys.m() - 1;
    let rows = [0, n0, n0 + np, 2 * n0 + np, 2 * n0 + 2 * np, total];
    let scale = norm(&rhs).max(f64::MIN_POSITIVE);
    let mut block_residuals = [0.0; 5];
    for b in 0..5 {
        block_residuals[b] = norm(&res[rows[b]..rows[b + 1]]) / scale;
    }

    let u = basis.apply(&sol[ox..op_]);
    let diagnostics = SolveDiagnostics {
        block_residuals: Some(block_residuals),
        ..Default::default()
    };
    finish(op, y_d, u, &basis, SolveMethod::Big, diagnostics)
}

pub fn solve(op: &ControlOperator, y_d: &[f64], method: SolveMethod, opts: CgOptions) -> Result<OptimalSolution> {
    match method {
        SolveMethod::Reduced => solve_reduced(op, y_d, opts),
        SolveMethod::Big => solve_big(op, y_d),
    }
}
