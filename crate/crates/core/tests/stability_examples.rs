use bistab_core::stability::{classify, select_point, threshold_scan, BranchPolicy};
use bistab_core::{ParamField, PhysParams};

fn fig2(kappa: f64, g: f64, eps: f64) -> PhysParams {
    PhysParams { delta: 1.0, kappa, gamma: 1e-5, g, eps, ..Default::default() }
}

fn stable_at(p: &PhysParams, policy: BranchPolicy) -> bool {
    let (_, _, pt) = select_point(p, policy).unwrap();
    classify(&pt).stable
}

// The figure pipelines evaluate the no-back-action reference; see README.
#[test]
fn kappa_examples() {
    let pol = BranchPolicy::Linearized;
    assert!(!stable_at(&fig2(1.5, 1e-3, 1e3), pol));
    assert!(stable_at(&fig2(2.5, 1e-3, 1e3), pol));
}

#[test]
fn drive_examples() {
    let pol = BranchPolicy::Linearized;
    assert!(stable_at(&fig2(0.1, 1e-3, 400.0), pol));
    assert!(!stable_at(&fig2(0.1, 1e-3, 600.0), pol));
}

#[test]
fn coupling_examples() {
    let pol = BranchPolicy::Linearized;
    assert!(stable_at(&fig2(0.1, 3e-4, 1e3), pol));
    assert!(!stable_at(&fig2(0.1, 8e-4, 1e3), pol));
}

#[test]
fn kappa_scan_has_one_threshold_near_two() {
    let scan = threshold_scan(&fig2(1.0, 1e-3, 1e3), ParamField::Kappa, (0.5, 4.0), 60, BranchPolicy::Linearized);
    assert_eq!(scan.thresholds.len(), 1);
    let t = scan.thresholds[0];
    assert!(!t.stable_below);
    // static threshold 4G²Δ = Δ² + κ²/4 with G² = g²ε²/(Δ² + κ²/4), solved by hand
    let exact = 2.0 * ((2.0 * 1e-3 * 1e3f64) - 1.0).sqrt();
    assert!((t.value - exact).abs() < 2e-4 * exact, "{} vs {exact}", t.value);
}

#[test]
fn detuning_scan_has_a_red_side_window() {
    let scan = threshold_scan(&fig2(0.1, 1e-3, 1e3), ParamField::Delta, (-4.0, 4.0), 161, BranchPolicy::Linearized);
    let windows = scan.unstable_windows();
    assert!(!windows.is_empty());
    // blue-detuned side is parametrically unstable, red side up to the static edge
    assert!(windows.iter().any(|&(a, b)| a <= -3.9 && b < 0.0), "{windows:?}");
    assert!(windows.iter().any(|&(a, b)| a > 0.0 && b >= 1.5), "{windows:?}");
}

#[test]
fn uncoupled_scan_is_stable() {
    let p = PhysParams { g: 0.0, ..fig2(0.1, 0.0, 1e3) };
    for field in [ParamField::Kappa, ParamField::Eps, ParamField::Delta] {
        for pol in [BranchPolicy::Linearized, BranchPolicy::HysteresisUp] {
            let scan = threshold_scan(&p, field, (0.5, 4.0), 20, pol);
            assert!(scan.samples.iter().all(|s| s.stable));
        }
    }
}

#[test]
fn thresholds_are_bisected_tightly() {
    let scan = threshold_scan(&fig2(0.1, 1e-3, 1e3), ParamField::Eps, (100.0, 1000.0), 10, BranchPolicy::Linearized);
    let t = scan.thresholds[0].value;
    let below = fig2(0.1, 1e-3, t * (1.0 - 2e-4));
    let above = fig2(0.1, 1e-3, t * (1.0 + 2e-4));
    assert!(stable_at(&below, BranchPolicy::Linearized));
    assert!(!stable_at(&above, BranchPolicy::Linearized));
}
