//! Acceptance suite. Runs every criterion, prints one line each and exits
//! nonzero if any criterion fails.

mod common;

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::{random_vec, rel_diff, rng, square_mini, vec_rel_diff};
use sdbc::analysis::{singular_exponent, ConvergenceReport};
use sdbc::control::Regularization;
use sdbc::experiment::{run_experiment, solve_level, ExperimentConfig, LevelSolution};
use sdbc::fem::ElementKind;
use sdbc::optimizer::{solve_big, solve_reduced, CgOptions, NullSpaceBasis, SolveMethod};
use sdbc::sparse::{dot, norm};

type Outcome = Result<String, String>;

fn check(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let op = square_mini(3, Regularization::H12, 1.0);
    let l2 = sdbc::control::ControlOperator::new(op.solver.clone(), Regularization::L2, 1.0);
    let sys = op.system();
    let basis = NullSpaceBasis::new(&sys.c);
    let mut r = rng(2024);
    let (mut adj, mut semi, mut sym) = (0f64, 0f64, 0f64);
    let mut positive = true;
    for _ in 0..20 {
        let g = random_vec(&mut r, sys.n());
        let v = random_vec(&mut r, sys.n_gamma());
        let ev = op.apply_e(&v).map_err(|e| e.to_string())?.velocity;
        adj = adj.max(rel_diff(dot(&v, &op.apply_e_star(&g).unwrap()), sys.mass.quad_form(&g, &ev)));

        let u = random_vec(&mut r, sys.n_gamma());
        let y = op.apply_e(&u).unwrap().velocity;
        semi = semi.max(rel_diff(dot(&u, &op.apply_d(&u).unwrap()), sys.stiffness.quad_form(&y, &y)));

        for t in [&op, &l2] {
            let u1 = basis.apply(&random_vec(&mut r, basis.cols()));
            let u2 = basis.apply(&random_vec(&mut r, basis.cols()));
            let (t1, t2) = (t.apply_t(&u1).unwrap(), t.apply_t(&u2).unwrap());
            sym = sym.max(rel_diff(dot(&u1, &t2), dot(&u2, &t1)));
            positive &= dot(&u1, &t1) > 0.0 && dot(&u2, &t2) > 0.0;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        adj < 1e-10 && semi < 1e-10 && sym < 1e-10 && positive && secs < 10.0,
        format!("adjoint {adj:.1e}, seminorm {semi:.1e}, symmetry {sym:.1e}, positive {positive}, {secs:.2} s"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut worst = 0f64;
    let mut constraint = 0f64;
    for reg in [Regularization::H12, Regularization::L2] {
        let op = square_mini(3, reg, 1.0);
        let yd = op.system().space.interpolate(|p| [p[0], p[1] - p[0]]);
        let red = solve_reduced(&op, &yd, CgOptions::default()).map_err(|e| e.to_string())?;
        let big = solve_big(&op, &yd).map_err(|e| e.to_string())?;
        worst = worst.max(vec_rel_diff(&big.control, &red.control));
        let c = &op.system().c;
        for u in [&red.control, &big.control] {
            constraint = constraint.max(dot(u, c).abs() / (norm(u) * norm(c)));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-8 && constraint <= 1e-10 && secs < 30.0,
        format!("max relative control difference {worst:.1e}, constraint {constraint:.1e}, {secs:.2} s"),
    )
}

fn criterion_3() -> Outcome {
    let sq = singular_exponent(PI / 2.0).map_err(|e| e.to_string())?.xi;
    let l = singular_exponent(1.5 * PI).map_err(|e| e.to_string())?.xi;
    let flat = singular_exponent(PI).map_err(|e| e.to_string())?.xi;
    let angles = [PI / 3.0, PI / 2.0, 2.0 * PI / 3.0, PI, 4.0 * PI / 3.0, 1.5 * PI, 1.75 * PI];
    let xi: Vec<f64> = angles.iter().map(|w| singular_exponent(*w).map(|s| s.xi).unwrap_or(f64::NAN)).collect();
    let monotone = xi.windows(2).all(|w| w[0] > w[1]);
    check(
        (sq - 2.740).abs() <= 5e-3 && (l - 0.544).abs() <= 5e-3 && (flat - 1.0).abs() <= 1e-10 && monotone,
        format!("xi(pi/2) = {sq:.4}, xi(3pi/2) = {l:.4}, xi(pi) = {flat:.12}, monotone {monotone}"),
    )
}

struct Functionals {
    f0: f64,
    f: f64,
}

fn functionals(example: u8, reg: Regularization, level: usize) -> Result<(Functionals, LevelSolution), String> {
    let mut config = ExperimentConfig::for_example(example, reg).map_err(|e| e.to_string())?;
    config.levels = [level, level];
    config.reference_level = level + 2;
    let s = solve_level(&config, level, SolveMethod::Reduced).map_err(|e| e.to_string())?;
    Ok((Functionals { f0: s.f0, f: s.solution.f }, s))
}

struct Levels {
    ex1_l2_level6: LevelSolution,
    ex2_l2_level6: LevelSolution,
}

fn criterion_4(keep: &mut Option<Levels>) -> Outcome {
    // (example, level, F(0), tol, F(ū), F(u_0), tol)
    let cases = [
        (1u8, 6, 0.302339, 1e-3, 0.112264, 0.111576, 2e-3),
        (2, 6, 0.25, 1e-6, 0.117607, 0.158279, 2e-3),
        (3, 5, 1.75, 1e-4, 1.107016, 1.044080, 5e-3),
    ];
    let mut ok = true;
    let mut msg = Vec::new();
    let mut kept = Vec::new();
    for (ex, level, f0, tol0, f_h12, f_l2, tol) in cases {
        let (h, _) = functionals(ex, Regularization::H12, level)?;
        let (l, sol) = functionals(ex, Regularization::L2, level)?;
        let good = (h.f0 - f0).abs() <= tol0
            && (l.f0 - f0).abs() <= tol0
            && (h.f - f_h12).abs() <= tol
            && (l.f - f_l2).abs() <= tol;
        ok &= good;
        msg.push(format!("ex{ex}: F(0) {:.6}, F(u) {:.6}, F(u0) {:.6}", h.f0, h.f, l.f));
        if ex < 3 {
            kept.push(sol);
        }
    }
    let mut it = kept.into_iter();
    *keep = Some(Levels {
        ex1_l2_level6: it.next().unwrap(),
        ex2_l2_level6: it.next().unwrap(),
    });
    check(ok, msg.join("; "))
}

fn study(example: u8, reg: Regularization) -> Result<ConvergenceReport, String> {
    let config = ExperimentConfig::for_example(example, reg).map_err(|e| e.to_string())?;
    Ok(run_experiment(&config).map_err(|e| e.to_string())?.report)
}

fn rate_check(name: &str, rates: Vec<f64>, lo: f64, hi: f64, bad: &mut Vec<String>) -> String {
    let out: Vec<String> = rates.iter().map(|r| format!("{r:.3}")).collect();
    if rates.is_empty() || rates.iter().any(|r| !(*r >= lo && *r <= hi)) {
        bad.push(format!("{name} [{}] outside [{lo:.2}, {hi:.2}]", out.join(", ")));
    }
    format!("{name} [{}]", out.join(", "))
}

fn criterion_5(studies: &mut Vec<(u8, Regularization, ConvergenceReport)>) -> Outcome {
    for (ex, reg) in [
        (1, Regularization::H12),
        (1, Regularization::L2),
        (2, Regularization::H12),
        (2, Regularization::L2),
        (3, Regularization::H12),
        (3, Regularization::L2),
    ] {
        studies.push((ex, reg, study(ex, reg)?));
    }
    let l2 = |r: &ConvergenceReport| r.levels.iter().filter_map(|l| l.rate_l2).collect::<Vec<_>>();
    let h12 = |r: &ConvergenceReport| r.levels.iter().filter_map(|l| l.rate_h12).collect::<Vec<_>>();
    let mut bad = Vec::new();
    let mut lines = Vec::new();
    for (ex, reg, rep) in studies.iter() {
        let tag = format!("ex{ex} {reg}");
        match (ex, reg) {
            (1, _) => {
                lines.push(rate_check(&format!("{tag} H1/2"), h12(rep), 1.45, 2.05, &mut bad));
                lines.push(rate_check(&format!("{tag} L2"), l2(rep), 1.65, 2.25, &mut bad));
            }
            (2, Regularization::H12) => {
                lines.push(rate_check(&format!("{tag} L2"), l2(rep), 1.7, 2.1, &mut bad));
                lines.push(rate_check(&format!("{tag} H1/2"), h12(rep), 1.3, 1.8, &mut bad));
            }
            (2, Regularization::L2) => lines.push(rate_check(&format!("{tag} L2"), l2(rep), 0.41, 0.61, &mut bad)),
            (3, Regularization::H12) => {
                lines.push(rate_check(&format!("{tag} H1/2"), h12(rep), 0.47, 1.10, &mut bad));
                lines.push(rate_check(&format!("{tag} L2"), l2(rep), 0.85, 1.55, &mut bad));
            }
            _ => lines.push(rate_check(&format!("{tag} L2"), l2(rep), 0.32, 0.62, &mut bad)),
        }
    }
    if bad.is_empty() {
        Ok(lines.join("; "))
    } else {
        Err(format!("{} | all: {}", bad.join("; "), lines.join("; ")))
    }
}

fn criterion_6(studies: &[(u8, Regularization, ConvergenceReport)], levels: &Option<Levels>) -> Outcome {
    let levels = levels.as_ref().ok_or("level-6 solutions unavailable")?;
    let max = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max);
    let corner = |s: &LevelSolution| s.functionals().corner_residuals;
    let per_level = |ex: u8| -> Vec<Vec<f64>> {
        studies
            .iter()
            .find(|(e, r, _)| *e == ex && *r == Regularization::L2)
            .map(|(_, _, rep)| rep.per_level.iter().map(|l| l.corner_residuals.clone()).collect())
            .unwrap_or_default()
    };

    // example 1: levels 2..5 of the study, then level 6
    let mut ex1: Vec<Vec<f64>> = per_level(1);
    ex1.push(corner(&levels.ex1_l2_level6));
    let fine = ex1.last().unwrap().clone();
    let maxima: Vec<f64> = ex1.iter().map(|v| max(v)).collect();
    let decreasing = maxima.len() >= 2 && maxima.windows(2).all(|w| w[1] < w[0]);
    let ex1_ok = fine.len() == 4 && fine.iter().all(|r| *r < 1e-4) && decreasing;

    let mut ex2: Vec<Vec<f64>> = per_level(2);
    ex2.push(corner(&levels.ex2_l2_level6));
    let ex2_max: Vec<f64> = ex2.iter().map(|v| max(v)).collect();
    let ex2_ok = ex2_max.len() >= 2
        && ex2_max.iter().all(|m| *m > 1e-2)
        && *ex2_max.last().unwrap() > 0.5 * ex2_max[0];
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.1e}")).collect::<Vec<_>>().join(", ");
    check(
        ex1_ok && ex2_ok,
        format!(
            "ex1 max residual per level 2..6 [{}]; ex2 max residual per level 2..6 [{}]",
            fmt(&maxima),
            fmt(&ex2_max)
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut config = ExperimentConfig::for_example(1, Regularization::H12).map_err(|e| e.to_string())?;
    config.element = ElementKind::Th2;
    config.table2 = true;
    config.levels = [1, 3];
    config.reference_level = 5;
    let rep = run_experiment(&config).map_err(|e| e.to_string())?.report;
    let ry: Vec<f64> = rep.levels.iter().filter_map(|l| l.rate_state).collect();
    let rz: Vec<f64> = rep.levels.iter().filter_map(|l| l.rate_adjoint).collect();
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ");
    check(
        ry.len() == 2 && rz.len() == 2 && ry.iter().chain(&rz).all(|r| *r > 2.4),
        format!("state rates [{}], adjoint rates [{}]", fmt(&ry), fmt(&rz)),
    )
}

fn run(name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    match result {
        Ok(m) => {
            println!("PASS {name} ({secs:.1} s): {m}");
            true
        }
        Err(m) => {
            println!("FAIL {name} ({secs:.1} s): {m}");
            false
        }
    }
}

fn main() {
    faer::set_global_parallelism(faer::Par::Seq);
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let wanted = |n: &str| filter.is_empty() || filter.iter().any(|f| n.contains(f.as_str()));
    let mut ok = true;
    let mut kept = None;
    let mut studies = Vec::new();
    if wanted("criterion 1") {
        ok &= run("criterion 1 operator identities", criterion_1);
    }
    if wanted("criterion 2") {
        ok &= run("criterion 2 oracle equivalence", criterion_2);
    }
    if wanted("criterion 3") {
        ok &= run("criterion 3 singular exponent", criterion_3);
    }
    if wanted("criterion 4") || wanted("criterion 6") {
        ok &= run("criterion 4 tracking functionals", || criterion_4(&mut kept));
    }
    if wanted("criterion 5") || wanted("criterion 6") {
        ok &= run("criterion 5 convergence rates", || criterion_5(&mut studies));
    }
    if wanted("criterion 6") {
        ok &= run("criterion 6 corner diagnostic", || criterion_6(&studies, &kept));
    }
    if wanted("criterion 7") {
        ok &= run("criterion 7 higher-order state and adjoint rates", criterion_7);
    }
    if !ok {
        std::process::exit(1);
    }
}
