#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdbc::assembly::assemble;
use sdbc::control::{ControlOperator, Regularization};
use sdbc::fem::{build_space, ElementFamily, ElementKind};
use sdbc::mesh::{build_mesh, Domain};
use sdbc::stokes::StokesSolver;

pub fn operator(domain: Domain, level: usize, kind: ElementKind, reg: Regularization, alpha: f64) -> ControlOperator {
    let mesh = Arc::new(build_mesh(&domain, level));
    let space = Arc::new(build_space(mesh, ElementFamily::new(kind)));
    let solver = Arc::new(StokesSolver::new(Arc::new(assemble(space))).expect("factorization"));
    ControlOperator::new(solver, reg, alpha)
}

pub fn square_mini(level: usize, reg: Regularization, alpha: f64) -> ControlOperator {
    operator(Domain::unit_square(), level, ElementKind::Mini, reg, alpha)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn vec_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let n: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    d / n.max(f64::MIN_POSITIVE)
}
