mod common;

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wavecert::pde::{
    energy, run, sobolev_check, trace_check, wirtinger_check, BoundaryTrace, Grid, Mode, Nonlinearity, WaveField,
};

fn preset_field(grid: &Grid) -> WaveField {
    let p = |x: &[f64]| 0.2733 * x[0] * (1.0 - x[0] / 2.0);
    WaveField::from_fn(grid, p, p).unwrap()
}

#[test]
fn plant_energy_is_conserved() {
    let grid = Grid::for_horizon(1, 201, 10.0, Mode::Plant).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let f = common::compatible_field(&mut rng, &grid);
    let out = run(&f, 10.0, &grid, &Nonlinearity::zero(), None).unwrap();
    let e0 = out.energy[0];
    let drift = out.energy.iter().map(|e| (e - e0).abs() / e0).fold(0.0, f64::max);
    assert!(drift <= 1e-3, "{drift}");
}

#[test]
fn plant_energy_is_conserved_in_2d() {
    let grid = Grid::for_horizon(2, 61, 3.0, Mode::Plant).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let f = common::compatible_field(&mut rng, &grid);
    let out = run(&f, 3.0, &grid, &Nonlinearity::zero(), None).unwrap();
    let e0 = out.energy[0];
    let drift = out.energy.iter().map(|e| (e - e0).abs() / e0).fold(0.0, f64::max);
    assert!(drift <= 1e-2, "{drift}");
}

#[test]
fn plant_energy_growth_bound() {
    let g1 = 0.2;
    let grid = Grid::for_horizon(1, 201, 10.0, Mode::Plant).unwrap();
    let out = run(&preset_field(&grid), 10.0, &grid, &Nonlinearity::quadratic(0.1, 1.0), None).unwrap();
    for (t, e) in out.times.iter().zip(&out.energy) {
        let bound = (2.0 * g1 / PI * t).exp() * out.energy[0] * (1.0 + 1e-3);
        assert!(*e <= bound, "t {t}: {e} > {bound}");
    }
}

#[test]
fn undamped_run_is_time_reversible() {
    let horizon = 3.0;
    let grid = Grid::for_horizon(1, 201, horizon, Mode::Plant).unwrap();
    let nl = Nonlinearity::quadratic(0.1, 1.0);
    let start = preset_field(&grid);
    let fwd = run(&start, horizon, &grid, &nl, None).unwrap();
    let back_grid = grid.with_mode(Mode::ObserverBackward { k: 0.0 }).unwrap();
    let zeros = BoundaryTrace::zeros(&grid, 0.0, grid.steps_for(horizon).unwrap());
    let back = run(&fwd.field, horizon, &back_grid, &nl, Some(&zeros)).unwrap();
    assert!(back.field.t.abs() < 1e-12);
    let gap = back.field.diff(&start).max_abs();
    assert!(gap < 1e-12, "{gap}");
}

#[test]
fn damped_error_energy_decreases() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for dim in [1, 2] {
        let n = if dim == 1 { 201 } else { 51 };
        let grid = Grid::for_horizon(dim, n, 4.0, Mode::ObserverForward { k: 1.0 }).unwrap();
        let zeros = BoundaryTrace::zeros(&grid, 0.0, grid.steps_for(4.0).unwrap());
        let e = common::compatible_field(&mut rng, &grid);
        let out = run(&e, 4.0, &grid, &Nonlinearity::zero(), Some(&zeros)).unwrap();
        let scale = out.energy[0];
        // the trapezoid functional tracks the scheme's energy to O(dx²)
        let tol = grid.dx() * grid.dx() * scale;
        for w in out.energy.windows(2) {
            assert!(w[1] <= w[0] + tol, "dim {dim}: {} -> {}", w[0], w[1]);
        }
        assert!(out.energy.last().unwrap() < &(0.5 * scale));
    }
}

#[test]
fn matched_gain_absorbs_everything_in_one_dimension() {
    // k = 1 is the impedance of the string: every wave leaves within time 2
    let grid = Grid::for_horizon(1, 201, 2.5, Mode::ObserverForward { k: 1.0 }).unwrap();
    let zeros = BoundaryTrace::zeros(&grid, 0.0, grid.steps_for(2.5).unwrap());
    let out = run(&preset_field(&grid), 2.5, &grid, &Nonlinearity::zero(), Some(&zeros)).unwrap();
    assert!(out.energy.last().unwrap() / out.energy[0] < 1e-20);
}

#[test]
fn recorded_trace_is_boundary_velocity() {
    let grid = Grid::for_horizon(2, 31, 0.5, Mode::Plant).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let f = common::random_field(&mut rng, &grid);
    let out = run(&f, 0.5, &grid, &Nonlinearity::zero(), None).unwrap();
    let last = out.trace.samples.last().unwrap();
    for (v, &node) in last.iter().zip(&grid.neumann_nodes()) {
        assert_eq!(*v, out.field.zt[node]);
    }
    assert_eq!(out.trace.len(), out.times.len());
    assert!((out.trace.t_end() - 0.5).abs() < 1e-12);
}

#[test]
fn trace_interpolation_is_linear() {
    let tr = BoundaryTrace::new(0.0, 0.5, vec![3], vec![vec![0.0], vec![1.0], vec![4.0]]).unwrap();
    assert_eq!(tr.value_at(0.25).unwrap(), vec![0.5]);
    assert_eq!(tr.value_at(0.75).unwrap(), vec![2.5]);
    assert!(tr.value_at(1.5).is_err());
}

#[test]
fn inequality_residuals_on_random_fields() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..100 {
        let grid = if case % 2 == 0 {
            Grid::new(1, 201, 0.005, Mode::Plant).unwrap()
        } else {
            Grid::new(2, 61, 0.01, Mode::Plant).unwrap()
        };
        let f = common::random_field(&mut rng, &grid);
        assert!(wirtinger_check(&f, &grid).unwrap() >= -1e-8, "case {case}");
        assert!(trace_check(&f, &grid).unwrap() >= -1e-8, "case {case}");
        if grid.dim() == 1 {
            assert!(sobolev_check(&f, &grid).unwrap() >= -1e-8, "case {case}");
        }
        assert!(energy(&f, &grid) >= 0.0);
    }
}
