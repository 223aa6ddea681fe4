#![allow(dead_code)]

use newton_deconv::{
    EstimatorState, GridSpec, LearningRateSchedule, MixingPmf, NoiseModel, ParameterGrid,
    StreamRng, ThetaAtom,
};

pub const DESK: GridSpec = GridSpec {
    mean_min: -10.0,
    mean_max: 10.0,
    mean_step: 0.5,
    var_min: 0.25,
    var_max: 4.0,
    var_step: 0.25,
};

pub fn desk_grid() -> ParameterGrid {
    ParameterGrid::from_spec(DESK).unwrap()
}

/// Atoms (-1, 2) and (3, 1.5) with weights 0.3 and 0.7, Laplace noise sd 0.5, n = 100.
pub fn two_atom_state() -> EstimatorState {
    two_atom_with(NoiseModel::laplace(0.5).unwrap(), 100)
}

pub fn two_atom_with(noise: NoiseModel, n: u64) -> EstimatorState {
    let grid = ParameterGrid::from_atoms(vec![
        ThetaAtom::new(-1.0, 2.0).unwrap(),
        ThetaAtom::new(3.0, 1.5).unwrap(),
    ])
    .unwrap();
    EstimatorState::from_parts(
        grid,
        MixingPmf::new(vec![0.3, 0.7]).unwrap(),
        n,
        LearningRateSchedule::harmonic(),
        noise,
    )
    .unwrap()
}

pub fn random_noise(rng: &mut StreamRng) -> NoiseModel {
    let sd = 0.25 + 3.75 * rng.uniform();
    if rng.uniform() < 0.5 {
        NoiseModel::laplace(sd).unwrap()
    } else {
        NoiseModel::gaussian(sd).unwrap()
    }
}

pub fn random_atom(rng: &mut StreamRng) -> ThetaAtom {
    ThetaAtom::new(-5.0 + 10.0 * rng.uniform(), 0.25 + 3.75 * rng.uniform()).unwrap()
}

/// Random grid of `2..=10` atoms, random positive pmf and noise, `n` in `1..=1000`.
pub fn random_state(rng: &mut StreamRng) -> EstimatorState {
    let k = 2 + (rng.uniform() * 9.0) as usize;
    let mut atoms: Vec<ThetaAtom> = Vec::new();
    while atoms.len() < k {
        let a = random_atom(rng);
        if !atoms.contains(&a) {
            atoms.push(a);
        }
    }
    let raw: Vec<f64> = (0..k).map(|_| 0.05 + rng.uniform()).collect();
    let total: f64 = raw.iter().sum();
    let pmf = MixingPmf::new(raw.iter().map(|w| w / total).collect()).unwrap();
    let n = 1 + (rng.uniform() * 1000.0) as u64;
    EstimatorState::from_parts(
        ParameterGrid::from_atoms(atoms).unwrap(),
        pmf,
        n,
        LearningRateSchedule::harmonic(),
        random_noise(rng),
    )
    .unwrap()
}

/// Composite trapezoid over `nodes` equally spaced points.
pub fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, nodes: usize) -> f64 {
    let h = (b - a) / (nodes - 1) as f64;
    let mut s = 0.5 * (f(a) + f(b));
    for i in 1..nodes - 1 {
        s += f(a + i as f64 * h);
    }
    s * h
}
