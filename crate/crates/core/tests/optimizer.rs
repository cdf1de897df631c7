use std::f64::consts::PI;

use bellnav::geometry::{expand_settings, BlochAngles, SymmetryMode};
use bellnav::models::{build_hamiltonian_dense, ground_state_ed, ground_state_umps, ModelSpec};
use bellnav::optimizer::{
    angles_to_params, gradient, optimize_settings, richardson_gradient, FiniteObjective, Objective, OptimizerConfig,
    UniformObjective,
};
use bellnav::GroundState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ed_state(spec: &ModelSpec, n: usize) -> GroundState {
    ground_state_ed(&build_hamiltonian_dense::<f64>(spec, n, true).unwrap()).unwrap()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[test]
fn gradient_matches_richardson_estimate() {
    let mps = ground_state_umps::<f64>(&ModelSpec::cluster_ising(0.0, 0.8), 8, 1e-9, 20_000).unwrap();
    let uniform = UniformObjective::new(&mps, 2);
    let gs = ed_state(&ModelSpec::tfim(0.7), 8);
    let finite = FiniteObjective::new(&gs, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = OptimizerConfig::default().fd_step;
    for i in 0..20 {
        let (objective, mode): (&dyn Objective<f64>, SymmetryMode) = match i % 3 {
            0 => (&uniform, SymmetryMode::axis_locked(&[2])),
            1 => (&uniform, SymmetryMode::free()),
            _ => (&finite, SymmetryMode::polar_mirror()),
        };
        let dims = 2 * mode.reduced_count(objective.unit_cell());
        let x: Vec<f64> = (0..dims).map(|k| rng.gen_range(0.2..if k % 2 == 0 { PI - 0.2 } else { 2.0 * PI - 0.2 })).collect();
        let g = gradient(objective, &mode, &x, h).unwrap();
        let r = richardson_gradient(objective, &mode, &x, h).unwrap();
        let diff: Vec<f64> = g.iter().zip(&r).map(|(a, b)| a - b).collect();
        let scale = max_abs(&r).max(1e-6);
        assert!(max_abs(&diff) <= 1e-4 * scale, "point {i}: {g:?} vs {r:?}");
    }
}

/// Best value over a 64-point grid per angle of the reduced parameters.
fn exhaustive<O: Objective<f64>>(objective: &O, mode: &SymmetryMode) -> f64 {
    let steps = 64;
    let mut best = f64::NEG_INFINITY;
    for i in 0..steps {
        let theta = PI * i as f64 / (steps - 1) as f64;
        for j in 0..steps {
            let phi = 2.0 * PI * j as f64 / steps as f64;
            let angles = [BlochAngles::new(theta, phi).unwrap()];
            let settings = expand_settings(&angles, mode, objective.unit_cell()).unwrap();
            best = best.max(objective.evaluate(&settings).unwrap().value);
        }
    }
    best
}

#[test]
fn optimizer_beats_exhaustive_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let config = OptimizerConfig { grid_resolution: 16, n_starts: 2, ..OptimizerConfig::default() };
    for case in 0..10 {
        let h = rng.gen_range(0.2..1.6);
        let (spec, u, mode) = match case % 3 {
            0 => (ModelSpec::cluster_ising(rng.gen_range(0.0..0.5), h), 2, SymmetryMode::axis_locked(&[2])),
            1 => (ModelSpec::tfim(h), 1, SymmetryMode::polar_mirror()),
            _ => (ModelSpec::xxz(rng.gen_range(-0.5..0.8), h), 1, SymmetryMode::polar_mirror()),
        };
        let n = if case % 2 == 0 { 8 } else { 6 };
        let gs = ed_state(&spec, n);
        let objective = FiniteObjective::new(&gs, u).unwrap();
        let grid = exhaustive(&objective, &mode);
        let res = optimize_settings(&objective, &OptimizerConfig { mode: mode.clone(), ..config.clone() }, &[]).unwrap();
        assert!(res.lambda1_per_site >= grid - 1e-4, "{spec} N={n}: {} < {grid}", res.lambda1_per_site);
        assert!(res.trace.windows(2).all(|w| w[1].1 >= w[0].1), "{spec}: trace not monotone");
    }
}

#[test]
fn free_mode_is_never_worse_than_a_constraint() {
    let mps = ground_state_umps::<f64>(&ModelSpec::cluster_ising(0.3, 0.9), 8, 1e-9, 20_000).unwrap();
    let objective = UniformObjective::new(&mps, 2);
    let base = OptimizerConfig { grid_resolution: 12, n_starts: 2, grid_budget: 1024, ..OptimizerConfig::default() };
    for mode in [SymmetryMode::axis_locked(&[2]), SymmetryMode::polar_mirror(), SymmetryMode::azimuthal_mirror()] {
        let constrained = optimize_settings(&objective, &OptimizerConfig { mode, ..base.clone() }, &[]).unwrap();
        let warm = angles_to_params(&constrained.settings.angles());
        let free = optimize_settings(&objective, &OptimizerConfig { mode: SymmetryMode::free(), ..base.clone() }, &[warm])
            .unwrap();
        assert!(free.lambda1_per_site >= constrained.lambda1_per_site - 1e-9);
        for start in &free.starts {
            assert!(start.value.is_finite());
        }
    }
}

#[test]
fn traces_are_monotone_and_results_deterministic() {
    let mps = ground_state_umps::<f64>(&ModelSpec::cluster_ising(0.0, 1.2), 8, 1e-9, 20_000).unwrap();
    let objective = UniformObjective::new(&mps, 2);
    let config = OptimizerConfig {
        mode: SymmetryMode::axis_locked(&[2]),
        compare_relations: true,
        grid_resolution: 16,
        n_starts: 3,
        ..OptimizerConfig::default()
    };
    let a = optimize_settings(&objective, &config, &[]).unwrap();
    let b = optimize_settings(&objective, &OptimizerConfig { workers: 4, ..config.clone() }, &[]).unwrap();
    assert_eq!(a, b);
    assert!(a.trace.windows(2).all(|w| w[1].1 > w[0].1));
    assert!(a.lambda1_per_site > 1.0);
    let locked = &a.settings.pairs()[1];
    assert!(locked.a.x.abs() < 1e-3 && locked.a.y.abs() < 1e-3);
}
