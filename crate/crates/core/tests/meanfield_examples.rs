use bistab_core::meanfield::{
    hysteresis_sweep, integrate_classical, solve_photon_branches, SweepDirection,
};
use bistab_core::stability::classify;
use bistab_core::{DynLabel, ParamField, PhysParams};
use num_complex::Complex64;

/// Bistable point whose outer branches are both dynamically stable.
fn bistable() -> PhysParams {
    PhysParams { omega_m: 1.0, delta: 1.0, kappa: 0.1, gamma: 0.1, g: 0.05, eps: 1.0, n_th: 0.0 }
}

#[test]
fn bistable_point_has_two_stable_outer_branches() {
    let set = solve_photon_branches(&bistable());
    assert_eq!(set.branches.len(), 3);
    let p = bistable();
    let st: Vec<bool> = set.branches.iter().map(|b| classify(&b.operating_point(&p)).stable).collect();
    assert_eq!(st, [true, false, true]);
    assert_eq!(set.branches[2].dyn_label, DynLabel::Metastable);
}

#[test]
fn basins_lead_to_distinct_outer_roots() {
    let p = bistable();
    let set = solve_photon_branches(&p);
    let (lo, hi) = (set.branches[0], set.branches[2]);
    let nudge = Complex64::new(1.0 + 1e-3, 0.0);
    let a = integrate_classical(&p, lo.alpha * nudge, lo.beta, 1e5).unwrap();
    let b = integrate_classical(&p, hi.alpha * nudge, hi.beta, 1e5).unwrap();
    assert!(a.converged && b.converged);
    assert!(((a.terminal_n() - lo.n) / lo.n).abs() < 1e-6, "{} vs {}", a.terminal_n(), lo.n);
    assert!(((b.terminal_n() - hi.n) / hi.n).abs() < 1e-6, "{} vs {}", b.terminal_n(), hi.n);
}

#[test]
fn drive_sweeps_show_a_hysteresis_window() {
    let p = bistable();
    let grid: Vec<f64> = (0..=32).map(|i| 0.2 + 0.05 * i as f64).collect();
    let up = hysteresis_sweep(&p, ParamField::Eps, &grid, SweepDirection::Up).unwrap();
    let down = hysteresis_sweep(&p, ParamField::Eps, &grid, SweepDirection::Down).unwrap();
    let mut window = 0;
    for (u, d) in up.iter().zip(&down) {
        let set = solve_photon_branches(&bistable_at(u.value));
        // sandwich: every terminal state sits on an algebraic root
        assert!(u.rel_gap < 1e-6 && d.rel_gap < 1e-6, "at {}: {} {}", u.value, u.rel_gap, d.rel_gap);
        // up follows the lowest root, down the highest, while they exist and are stable
        assert_eq!(u.branch.n, set.branches[0].n);
        assert_eq!(d.branch.n, set.branches.last().unwrap().n);
        if set.branches.len() == 3 {
            window += 1;
            assert!(d.terminal_n > 10.0 * u.terminal_n);
        }
    }
    assert!(window > 0);
}

fn bistable_at(eps: f64) -> PhysParams {
    PhysParams { eps, ..bistable() }
}

#[test]
fn weak_drive_up_sweep_tracks_the_lower_root() {
    let p = PhysParams::default();
    let grid: Vec<f64> = (1..=10).map(|i| 2.0 * i as f64).collect();
    let up = hysteresis_sweep(&p, ParamField::Eps, &grid, SweepDirection::Up).unwrap();
    for h in &up {
        let lower = solve_photon_branches(&PhysParams { eps: h.value, ..p }).branches[0].n;
        assert!(((h.terminal_n - lower) / lower).abs() < 1e-6);
    }
}
