//! Linear stability of the fluctuation dynamics around a mean-field point.
//!
//! The drift matrix acts on the quadratures `(X_c, P_c, X_m, P_m)` with
//! `X = (o + o†)/√2`, `P = (o − o†)/(i√2)`. Stability is decided from the
//! eigenvalues; the Routh–Hurwitz minors of the characteristic quartic are
//! reported alongside as an independent certificate.

use nalgebra::Matrix4;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::meanfield::{linearized_reference, solve_photon_branches};
use crate::params::{ParamField, PhysParams, TOLERANCES};

/// Where the linearized fluctuations live: effective detuning, complex
/// field-enhanced coupling and the three loss/frequency scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub delta_eff: f64,
    pub g_enh: Complex64,
    pub kappa: f64,
    pub gamma: f64,
    pub omega_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftMatrix4 {
    pub matrix: Matrix4<f64>,
    pub point: OperatingPoint,
}

pub fn drift_matrix(point: &OperatingPoint) -> DriftMatrix4 {
    let OperatingPoint { delta_eff: d, g_enh, kappa, gamma, omega_m: w } = *point;
    let (gr, gi) = (g_enh.re, g_enh.im);
    #[rustfmt::skip]
    let matrix = Matrix4::new(
        -kappa / 2.0, d,            -2.0 * gi,    0.0,
        -d,           -kappa / 2.0, 2.0 * gr,     0.0,
        0.0,          0.0,          -gamma / 2.0, w,
        2.0 * gr,     2.0 * gi,     -w,           -gamma / 2.0,
    );
    DriftMatrix4 { matrix, point: *point }
}

/// Coefficients `[1, a1, a2, a3, a4]` of `det(λI − A)` by Faddeev–LeVerrier.
pub fn characteristic_quartic(a: &Matrix4<f64>) -> [f64; 5] {
    let id = Matrix4::<f64>::identity();
    let mut coeffs = [1.0, 0.0, 0.0, 0.0, 0.0];
    let mut m = Matrix4::<f64>::zeros();
    for k in 1..=4 {
        m = a * m + id * coeffs[k - 1];
        coeffs[k] = -(a * m).trace() / k as f64;
    }
    coeffs
}

/// Leading principal minors of the Hurwitz matrix of a monic quartic.
pub fn hurwitz_minors(q: &[f64; 5]) -> [f64; 4] {
    let [_, a1, a2, a3, a4] = *q;
    let d1 = a1;
    let d2 = a1 * a2 - a3;
    let d3 = a3 * d2 - a1 * a1 * a4;
    [d1, d2, d3, a4 * d3]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub eigenvalues: [Complex64; 4],
    pub max_re: f64,
    /// `[1, a1, a2, a3, a4]`.
    pub quartic: [f64; 5],
    pub hurwitz_minors: [f64; 4],
    pub stable: bool,
    /// `-max_re`; positive when stable.
    pub margin: f64,
}

impl StabilityReport {
    /// The Routh–Hurwitz verdict: every quartic coefficient and every
    /// Hurwitz minor strictly positive.
    pub fn routh_hurwitz_stable(&self) -> bool {
        self.quartic.iter().all(|&c| c > 0.0) && self.hurwitz_minors.iter().all(|&m| m > 0.0)
    }
}

/// Classifies the operating point. A drift matrix with non-finite entries
/// (a degenerate branch) is reported unstable with NaN spectrum.
pub fn classify(point: &OperatingPoint) -> StabilityReport {
    let a = drift_matrix(point).matrix;
    if a.iter().any(|v| !v.is_finite()) {
        let nan = Complex64::new(f64::NAN, f64::NAN);
        return StabilityReport {
            eigenvalues: [nan; 4],
            max_re: f64::NAN,
            quartic: [f64::NAN; 5],
            hurwitz_minors: [f64::NAN; 4],
            stable: false,
            margin: f64::NAN,
        };
    }
    let ev = a.complex_eigenvalues();
    let mut eigenvalues = [Complex64::new(0.0, 0.0); 4];
    for (dst, src) in eigenvalues.iter_mut().zip(ev.iter()) {
        *dst = *src;
    }
    eigenvalues.sort_by(|x, y| y.re.total_cmp(&x.re).then(x.im.total_cmp(&y.im)));
    let max_re = eigenvalues[0].re;
    let quartic = characteristic_quartic(&a);
    StabilityReport {
        eigenvalues,
        max_re,
        quartic,
        hurwitz_minors: hurwitz_minors(&quartic),
        stable: max_re < -TOLERANCES.stability_band,
        margin: -max_re,
    }
}

/// Which mean-field solution a scan evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchPolicy {
    /// The no-back-action reference: `Δ' = Δ`, `G = g α0`.
    Linearized,
    /// The lowest photon root, which an adiabatic drive ramp from zero follows.
    HysteresisUp,
    /// The highest photon root, followed when ramping the drive down.
    HysteresisDown,
}

/// Operating point and branch index chosen by `policy` at `params`.
pub fn select_point(params: &PhysParams, policy: BranchPolicy) -> Option<(usize, f64, OperatingPoint)> {
    match policy {
        BranchPolicy::Linearized => {
            let r = linearized_reference(params);
            Some((0, r.n0, r.operating_point(params)))
        }
        BranchPolicy::HysteresisUp | BranchPolicy::HysteresisDown => {
            let set = solve_photon_branches(params);
            let b = if policy == BranchPolicy::HysteresisUp {
                set.branches.first()
            } else {
                set.branches.last()
            }?;
            Some((b.branch_id, b.n, b.operating_point(params)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSample {
    pub value: f64,
    pub branch_id: usize,
    pub n: f64,
    pub g_abs: f64,
    pub margin: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub value: f64,
    /// Stability on the low-value side of the threshold.
    pub stable_below: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScan {
    pub field: ParamField,
    pub policy: BranchPolicy,
    pub samples: Vec<ScanSample>,
    pub thresholds: Vec<Threshold>,
}

impl ThresholdScan {
    /// Maximal runs of unstable samples as `[first, last]` value pairs.
    pub fn unstable_windows(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut start: Option<f64> = None;
        let mut prev = f64::NAN;
        for s in &self.samples {
            match (s.stable, start) {
                (false, None) => start = Some(s.value),
                (true, Some(a)) => {
                    out.push((a, prev));
                    start = None;
                }
                _ => {}
            }
            prev = s.value;
        }
        if let Some(a) = start {
            out.push((a, prev));
        }
        out
    }
}

fn sample_at(params: &PhysParams, field: ParamField, value: f64, policy: BranchPolicy) -> ScanSample {
    let p = field.with(*params, value);
    match select_point(&p, policy) {
        Some((branch_id, n, point)) => {
            let rep = classify(&point);
            ScanSample { value, branch_id, n, g_abs: point.g_enh.norm(), margin: rep.margin, stable: rep.stable }
        }
        None => ScanSample {
            value,
            branch_id: 0,
            n: f64::NAN,
            g_abs: f64::NAN,
            margin: f64::NAN,
            stable: false,
        },
    }
}

/// Evaluates stability on an evenly spaced grid of `resolution` points over
/// `range` and refines every change of verdict by bisection to `1e-4`
/// relative accuracy.
pub fn threshold_scan(
    params: &PhysParams,
    field: ParamField,
    range: (f64, f64),
    resolution: usize,
    policy: BranchPolicy,
) -> ThresholdScan {
    let (lo, hi) = range;
    let n = resolution.max(2);
    let samples: Vec<ScanSample> = (0..n)
        .map(|i| {
            let v = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            sample_at(params, field, v, policy)
        })
        .collect();

    let mut thresholds = Vec::new();
    for w in samples.windows(2) {
        if w[0].stable == w[1].stable {
            continue;
        }
        let (mut a, mut b) = (w[0].value, w[1].value);
        let stable_a = w[0].stable;
        while (b - a).abs() > 1e-4 * a.abs().max(b.abs()).max(1e-300) {
            let m = 0.5 * (a + b);
            if sample_at(params, field, m, policy).stable == stable_a {
                a = m;
            } else {
                b = m;
            }
        }
        thresholds.push(Threshold { value: 0.5 * (a + b), stable_below: stable_a });
    }
    ThresholdScan { field, policy, samples, thresholds }
}
