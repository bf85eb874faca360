#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use slsregret::model::spring_damper;
use slsregret::{CostWeights, LtvSystem};

/// A small random time-invariant instance.
pub struct Instance {
    pub system: LtvSystem,
    pub costs: CostWeights,
    pub x0: DVector<f64>,
    pub p: DMatrix<f64>,
}

pub fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let g = gaussian(rng, n, n);
    &g * g.transpose() * 0.5 + DMatrix::identity(n, n) * floor
}

/// `n, m, r ≤ 2`, `T ≤ max_t`; `E` has full column rank.
pub fn random_instance(seed: u64, max_t: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=2);
    let m = rng.random_range(1..=2);
    let r = rng.random_range(1..=n);
    let t = rng.random_range(1..=max_t);
    let a = gaussian(&mut rng, n, n) * 0.6;
    let b = gaussian(&mut rng, n, m);
    let mut e = gaussian(&mut rng, n, r);
    for i in 0..r {
        e[(i, i)] += 2.0;
    }
    let system = LtvSystem::time_invariant(a, b, e, t).unwrap();
    let costs = CostWeights::constant(spd(&mut rng, n, 0.2), spd(&mut rng, m, 0.2), t).unwrap();
    let x0 = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let p = spd(&mut rng, r, 0.3);
    Instance { system, costs, x0, p }
}

/// The benchmark oscillator with `Q = 0.1 I`, `R = 1` over `t` steps.
pub fn benchmark_system(t: usize) -> (LtvSystem, CostWeights) {
    let (a, b, e) = spring_damper(0.2, 0.1, 0.1);
    let sys = LtvSystem::time_invariant(a, b, e, t).unwrap();
    let costs = CostWeights::constant(DMatrix::identity(2, 2) * 0.1, DMatrix::identity(1, 1), t).unwrap();
    (sys, costs)
}

pub fn stack(w: &[DVector<f64>]) -> DVector<f64> {
    let r = w.first().map_or(0, DVector::len);
    DVector::from_fn(w.len() * r, |i, _| w[i / r][i % r])
}

pub fn unstack(w: &DVector<f64>, r: usize) -> Vec<DVector<f64>> {
    (0..w.len() / r).map(|k| w.rows(k * r, r).into_owned()).collect()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
