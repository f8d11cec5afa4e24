//! Convergence studies for the three benchmark configurations and their
//! on-disk artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    corner_residuals, error_h12_gamma, error_l2_gamma, l2_difference, prolong_trace, rates, singular_exponent,
    ConvergenceReport, LevelErrors, LevelFunctionals,
};
use crate::assembly::{assemble, AssembledSystem};
use crate::control::{body_force_state, ControlOperator, Regularization};
use crate::error::{Error, Result};
use crate::fem::{build_space, ElementFamily, ElementKind};
use crate::mesh::{build_mesh, Domain, DomainKind, Point};
use crate::optimizer::{solve, tracking, CgOptions, OptimalSolution, SolveMethod};
use crate::stokes::StokesSolver;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOverrides {
    pub cg_tolerance: f64,
    pub max_iterations: usize,
    /// Solver for the study levels; the reference level always uses CG.
    pub study_method: SolveMethod,
}

impl Default for SolverOverrides {
    fn default() -> Self {
        let cg = CgOptions::default();
        SolverOverrides {
            cg_tolerance: cg.tolerance,
            max_iterations: cg.max_iterations,
            study_method: SolveMethod::Reduced,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub example: u8,
    pub regularization: Regularization,
    pub alpha: f64,
    pub element: ElementKind,
    /// Inclusive range of study levels.
    pub levels: [usize; 2],
    pub reference_level: usize,
    pub out_dir: Option<PathBuf>,
    /// Also report `L²(Ω)` errors of state and adjoint.
    pub table2: bool,
    pub export_fields: bool,
    /// Use the L² projection of `y_d` instead of its nodal interpolant.
    #[serde(default)]
    pub project_target: bool,
    pub solver: SolverOverrides,
}

impl ExperimentConfig {
    /// Defaults of the given example: Mini element, reference level 7 on the
    /// square and 6 on the L-shape, study levels `2..=I-2`.
    pub fn for_example(example: u8, regularization: Regularization) -> Result<Self> {
        let target = TargetField::new(example)?;
        let reference_level = match target.domain.kind {
            DomainKind::UnitSquare => 7,
            DomainKind::LShape => 6,
        };
        Ok(ExperimentConfig {
            example,
            regularization,
            alpha: target.default_alpha(),
            element: ElementKind::Mini,
            levels: [2, reference_level - 2],
            reference_level,
            out_dir: None,
            table2: false,
            export_fields: false,
            project_target: false,
            solver: SolverOverrides::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        TargetField::new(self.example)?;
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        let [a, b] = self.levels;
        if a > b {
            return Err(Error::Config(format!("empty level range {a}..{b}")));
        }
        if self.reference_level < b + 2 {
            return Err(Error::Config(format!(
                "reference level {} must be at least the finest study level plus two ({})",
                self.reference_level,
                b + 2
            )));
        }
        if !(self.solver.cg_tolerance > 0.0) || self.solver.max_iterations == 0 {
            return Err(Error::Config("CG tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }

    pub fn cg_options(&self) -> CgOptions {
        CgOptions {
            tolerance: self.solver.cg_tolerance,
            max_iterations: self.solver.max_iterations,
        }
    }
}

/// Target velocity, body force and domain of an example.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetField {
    pub example: u8,
    pub domain: Domain,
}

impl TargetField {
    pub fn new(example: u8) -> Result<Self> {
        let domain = match example {
            1 | 2 => Domain::unit_square(),
            3 => Domain::l_shape(),
            other => return Err(Error::Config(format!("unknown example {other} (expected 1, 2 or 3)"))),
        };
        Ok(TargetField { example, domain })
    }

    pub fn y_d(&self, p: Point) -> [f64; 2] {
        let [x, y] = p;
        match self.example {
            1 => [
                200.0 * x * x * (1.0 - x).powi(2) * y * (1.0 - y) * (1.0 - 2.0 * y),
                -200.0 * x * (1.0 - x) * (1.0 - 2.0 * x) * y * y * (1.0 - y).powi(2),
            ],
            _ => [x, y - x],
        }
    }

    pub fn force(&self) -> Option<fn(Point) -> [f64; 2]> {
        match self.example {
            1 => Some(|_| [1.0, 1.0]),
            _ => None,
        }
    }

    pub fn default_alpha(&self) -> f64 {
        match self.example {
            1 => 1e-3,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelTimings {
    pub level: usize,
    pub assembly_s: f64,
    pub factorization_s: f64,
    pub solve_s: f64,
    pub cg_iterations: usize,
}

/// Everything computed on one mesh level.
#[derive(Debug, Clone)]
pub struct LevelSolution {
    pub level: usize,
    pub operator: ControlOperator,
    /// Nodal interpolant of `y_d`, shifted by the body-force state.
    pub target: Vec<f64>,
    pub body_state: Option<Vec<f64>>,
    pub solution: OptimalSolution,
    pub f0: f64,
    pub timings: LevelTimings,
}

impl LevelSolution {
    pub fn system(&self) -> &AssembledSystem {
        self.operator.system()
    }

    /// State of the original problem, including the body-force part.
    pub fn full_state(&self) -> Vec<f64> {
        let mut y = self.solution.state.velocity.clone();
        if let Some(yf) = &self.body_state {
            crate::sparse::axpy(1.0, yf, &mut y);
        }
        y
    }

    /// Adjoint velocity extended by zero to all DOFs.
    pub fn full_adjoint(&self) -> Vec<f64> {
        let mut z = self.solution.adjoint.clone();
        z.resize(self.system().n(), 0.0);
        z
    }

    pub fn functionals(&self) -> LevelFunctionals {
        let s = &self.solution;
        LevelFunctionals {
            level: self.level,
            f0: self.f0,
            f: s.f,
            j: s.j,
            lambda: s.lambda,
            lambda0: s.lambda0,
            corner_residuals: s
                .lambda0
                .map(|l0| corner_residuals(self.system(), &s.adjoint_pressure, l0))
                .unwrap_or_default(),
            cg_iterations: s.diagnostics.iterations,
        }
    }
}

pub fn solve_level(config: &ExperimentConfig, level: usize, method: SolveMethod) -> Result<LevelSolution> {
    let target = TargetField::new(config.example)?;
    let t0 = Instant::now();
    let mesh = Arc::new(build_mesh(&target.domain, level));
    let space = Arc::new(build_space(mesh, ElementFamily::new(config.element)));
    let system = Arc::new(assemble(space));
    let t1 = Instant::now();
    let solver = Arc::new(StokesSolver::new(system.clone()).map_err(|e| e.at(level, "factorization"))?);
    let t2 = Instant::now();
    let operator = ControlOperator::new(solver, config.regularization, config.alpha);

    let mut y_d = if config.project_target {
        l2_projection(&system, |p| target.y_d(p)).map_err(|e| e.at(level, "target projection"))?
    } else {
        system.space.interpolate(|p| target.y_d(p))
    };
    let body_state = match target.force() {
        Some(f) => {
            let yf = body_force_state(&operator.solver, f).map_err(|e| e.at(level, "target shift"))?;
            crate::sparse::axpy(-1.0, &yf, &mut y_d);
            Some(yf)
        }
        None => None,
    };
    let zero = vec![0.0; system.n_gamma()];
    let y0 = operator.apply_e(&zero).map_err(|e| e.at(level, "uncontrolled state"))?;
    let f0 = tracking(&operator, &y0.velocity, &y_d);

    let solution = solve(&operator, &y_d, method, config.cg_options()).map_err(|e| e.at(level, "optimization"))?;
    let t3 = Instant::now();
    let timings = LevelTimings {
        level,
        assembly_s: (t1 - t0).as_secs_f64(),
        factorization_s: (t2 - t1).as_secs_f64(),
        solve_s: (t3 - t2).as_secs_f64(),
        cg_iterations: solution.diagnostics.iterations,
    };
    Ok(LevelSolution {
        level,
        operator,
        target: y_d,
        body_state,
        solution,
        f0,
        timings,
    })
}

/// Coefficients of the `L²(Ω)` projection of `f` onto the velocity space.
pub fn l2_projection(sys: &AssembledSystem, f: impl Fn(Point) -> [f64; 2] + Sync) -> Result<Vec<f64>> {
    use faer::linalg::solvers::Solve;
    let b = crate::assembly::load_vector(&sys.space, f);
    let lu = sys
        .mass
        .to_faer()
        .sp_lu()
        .map_err(|e| Error::SingularSystem(format!("mass matrix: {e:?}")))?;
    let mut rhs = faer::Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
    lu.solve_in_place(rhs.as_mut());
    Ok((0..b.len()).map(|i| rhs[(i, 0)]).collect())
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ConvergenceReport,
    pub timings: Vec<LevelTimings>,
    pub reference: LevelSolution,
    pub levels: Vec<LevelSolution>,
}

#[derive(Serialize)]
struct Summary<'a> {
    config: &'a ExperimentConfig,
    #[serde(flatten)]
    report: &'a ConvergenceReport,
}

/// Solves the reference and study levels, computes errors against the
/// reference and, if an output directory is set, writes the artifacts.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    faer::set_global_parallelism(faer::Par::Seq);
    let target = TargetField::new(config.example)?;
    let xi = singular_exponent(target.domain.greatest_angle)?;

    let [a, b] = config.levels;
    let (reference, levels) = rayon::join(
        || solve_level(config, config.reference_level, SolveMethod::Reduced),
        || {
            (a..=b)
                .into_par_iter()
                .map(|i| solve_level(config, i, config.solver.study_method))
                .collect::<Result<Vec<_>>>()
        },
    );
    let reference = reference?;
    let levels = levels?;

    let ref_space = &reference.system().space;
    let ref_state = reference.full_state();
    let ref_adjoint = reference.full_adjoint();
    let errors = levels
        .par_iter()
        .map(|lvl| -> Result<(f64, f64, Option<(f64, f64)>)> {
            let stage = |e: Error| e.at(lvl.level, "error evaluation");
            let sp = &lvl.system().space;
            let up = prolong_trace(sp, &lvl.solution.control, ref_space).map_err(stage)?;
            let e: Vec<f64> = up.iter().zip(&reference.solution.control).map(|(x, y)| x - y).collect();
            let l2 = error_l2_gamma(reference.system(), &e);
            let h12 = error_h12_gamma(&reference.operator, &e).map_err(stage)?;
            let interior = if config.table2 {
                let ey = l2_difference(ref_space, &ref_state, sp, &lvl.full_state()).map_err(stage)?;
                let ez = l2_difference(ref_space, &ref_adjoint, sp, &lvl.full_adjoint()).map_err(stage)?;
                Some((ey, ez))
            } else {
                None
            };
            Ok((l2, h12, interior))
        })
        .collect::<Result<Vec<_>>>()?;

    let l2: Vec<f64> = errors.iter().map(|e| e.0).collect();
    let h12: Vec<f64> = errors.iter().map(|e| e.1).collect();
    let ey: Vec<f64> = errors.iter().filter_map(|e| e.2.map(|v| v.0)).collect();
    let ez: Vec<f64> = errors.iter().filter_map(|e| e.2.map(|v| v.1)).collect();
    let (r_l2, r_h12, r_y, r_z) = (rates(&l2), rates(&h12), rates(&ey), rates(&ez));
    let rows = levels
        .iter()
        .enumerate()
        .map(|(k, lvl)| LevelErrors {
            level: lvl.level,
            h: lvl.system().space.mesh.h(),
            err_l2_gamma: l2[k],
            rate_l2: r_l2[k],
            err_h12: h12[k],
            rate_h12: r_h12[k],
            err_state: ey.get(k).copied(),
            rate_state: r_y.get(k).copied().flatten(),
            err_adjoint: ez.get(k).copied(),
            rate_adjoint: r_z.get(k).copied().flatten(),
        })
        .collect();

    let report = ConvergenceReport {
        singular_exponent: xi,
        levels: rows,
        reference: reference.functionals(),
        per_level: levels.iter().map(|l| l.functionals()).collect(),
    };
    let mut timings: Vec<LevelTimings> = levels.iter().map(|l| l.timings.clone()).collect();
    timings.push(reference.timings.clone());

    let out = ExperimentOutput {
        report,
        timings,
        reference,
        levels,
    };
    if let Some(dir) = &config.out_dir {
        write_outputs(config, &out, dir)?;
    }
    Ok(out)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_outputs(config: &ExperimentConfig, out: &ExperimentOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut csv = out.report.to_csv();
    if config.table2 {
        csv = table2_csv(&out.report);
    }
    write_file(&dir.join("convergence.csv"), &csv)?;
    let summary = Summary {
        config,
        report: &out.report,
    };
    write_file(
        &dir.join("summary.json"),
        &(serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"),
    )?;
    write_file(
        &dir.join("timings.json"),
        &(serde_json::to_string_pretty(&out.timings).expect("timings serialize") + "\n"),
    )?;
    if config.export_fields {
        for lvl in out.levels.iter().chain(std::iter::once(&out.reference)) {
            export_fields(
                &lvl.solution,
                lvl.system(),
                lvl.body_state.as_deref(),
                &dir.join(format!("level{}", lvl.level)),
            )?;
        }
    }
    Ok(())
}

fn table2_csv(report: &ConvergenceReport) -> String {
    let fmt = |r: Option<f64>| r.map_or(String::new(), |v| format!("{v:.6}"));
    let fe = |r: Option<f64>| r.map_or(String::new(), |v| format!("{v:.6e}"));
    let mut out = String::from("level,h,err_l2_gamma,rate_l2,err_h12,rate_h12,err_state,rate_state,err_adjoint,rate_adjoint\n");
    for l in &report.levels {
        let _ = writeln!(
            out,
            "{},{:.6e},{:.6e},{},{:.6e},{},{},{},{},{}",
            l.level,
            l.h,
            l.err_l2_gamma,
            fmt(l.rate_l2),
            l.err_h12,
            fmt(l.rate_h12),
            fe(l.err_state),
            fmt(l.rate_state),
            fe(l.err_adjoint),
            fmt(l.rate_adjoint)
        );
    }
    out
}

/// Control samples `(s, u_1, u_2)` along Γ, counterclockwise from the first corner.
pub fn control_csv(sys: &AssembledSystem, control: &[f64]) -> String {
    let sp = &sys.space;
    let mut out = String::from("s,u1,u2\n");
    for (k, s) in sp.boundary_arclength.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", s, control[2 * k], control[2 * k + 1]);
    }
    out
}

/// Legacy VTK file with vertex values of velocity, zero-mean pressure,
/// adjoint velocity and zero-mean adjoint pressure.
pub fn fields_vtk(sys: &AssembledSystem, velocity: &[f64], pressure: &[f64], adjoint: &[f64], adjoint_pressure: &[f64]) -> String {
    let sp = &sys.space;
    let mesh = &sp.mesh;
    let nv = mesh.vertices.len();
    let mut s = mesh.to_vtk();
    let _ = writeln!(s, "POINT_DATA {nv}");
    let p0 = sys.zero_mean_pressure(pressure);
    let q0 = sys.zero_mean_pressure(adjoint_pressure);
    for (name, field) in [("velocity", velocity), ("adjoint_velocity", adjoint)] {
        let _ = writeln!(s, "VECTORS {name} double");
        for v in 0..nv {
            let [d0, d1] = sp.node_dofs[v];
            let _ = writeln!(s, "{} {} 0", field[d0], field[d1]);
        }
    }
    for (name, field) in [("pressure", &p0), ("adjoint_pressure", &q0)] {
        let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in field.iter().take(nv) {
            let _ = writeln!(s, "{v}");
        }
    }
    s
}

/// Writes `<stem>.vtk` and `<stem>_control.csv`.
pub fn export_fields(solution: &OptimalSolution, sys: &AssembledSystem, body_state: Option<&[f64]>, stem: &Path) -> Result<()> {
    let mut y = solution.state.velocity.clone();
    if let Some(yf) = body_state {
        crate::sparse::axpy(1.0, yf, &mut y);
    }
    let mut z = solution.adjoint.clone();
    z.resize(sys.n(), 0.0);
    let vtk = fields_vtk(sys, &y, &solution.state.pressure, &z, &solution.adjoint_pressure);
    let with_suffix = |suffix: &str| {
        let mut name = stem.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(suffix);
        stem.with_file_name(name)
    };
    write_file(&with_suffix(".vtk"), &vtk)?;
    write_file(&with_suffix("_control.csv"), &control_csv(sys, &solution.control))
}
