//! Classical steady states of the driven cavity and their dynamics.
//!
//! The photon number obeys the cubic
//! `4χ² n³ − 4Δχ n² + (Δ² + κ²/4) n − ε² = 0` with
//! `χ = g² / (ω_m + γ²/(4ω_m))`. Each real root is turned back into a full
//! branch: mechanical amplitude, displacement `x = β + β*`, effective
//! detuning `Δ' = Δ − g x` and the field-enhanced coupling `G = g α`.
//!
//! The displacement is taken positive for `g > 0`, which is what the
//! classical equations of motion give.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ode::{Control, Dopri5, OdeError};
use crate::params::{ParamField, PhysParams, TOLERANCES};
use crate::poly::{real_cubic_roots, RealRoots};
use crate::stability::{classify, OperatingPoint};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicCoefficients {
    pub c3: f64,
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
    pub chi: f64,
}

impl CubicCoefficients {
    pub fn as_array(&self) -> [f64; 4] {
        [self.c3, self.c2, self.c1, self.c0]
    }
}

pub fn chi(p: &PhysParams) -> f64 {
    p.g * p.g / (p.omega_m + p.gamma * p.gamma / (4.0 * p.omega_m))
}

pub fn cubic_coeffs(p: &PhysParams) -> CubicCoefficients {
    let chi = chi(p);
    CubicCoefficients {
        c3: 4.0 * chi * chi,
        c2: -4.0 * p.delta * chi,
        c1: p.delta * p.delta + p.kappa * p.kappa / 4.0,
        c0: -p.eps * p.eps,
        chi,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DynLabel {
    Stable,
    Unstable,
    Metastable,
}

impl DynLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            DynLabel::Stable => "stable",
            DynLabel::Unstable => "unstable",
            DynLabel::Metastable => "metastable",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldBranch {
    pub n: f64,
    pub alpha: Complex64,
    pub beta: Complex64,
    pub x: f64,
    pub delta_eff: f64,
    pub g_enh: Complex64,
    pub branch_id: usize,
    pub dyn_label: DynLabel,
    /// Distance of the slowest fluctuation eigenvalue from the imaginary axis.
    pub margin: f64,
}

impl MeanFieldBranch {
    pub fn operating_point(&self, p: &PhysParams) -> OperatingPoint {
        OperatingPoint {
            delta_eff: self.delta_eff,
            g_enh: self.g_enh,
            kappa: p.kappa,
            gamma: p.gamma,
            omega_m: p.omega_m,
        }
    }
}

/// Rebuilds a branch from a photon-number root and labels it from its own
/// fluctuation spectrum (stable or unstable only).
pub fn branch_from_root(p: &PhysParams, n: f64, branch_id: usize) -> MeanFieldBranch {
    let beta = I * p.g * n / (I * p.omega_m + p.gamma / 2.0);
    let x = 2.0 * beta.re;
    let delta_eff = p.delta - p.g * x;
    let alpha = -I * p.eps / (I * delta_eff + p.kappa / 2.0);
    let g_enh = alpha * p.g;
    let mut b = MeanFieldBranch {
        n,
        alpha,
        beta,
        x,
        delta_eff,
        g_enh,
        branch_id,
        dyn_label: DynLabel::Unstable,
        margin: 0.0,
    };
    let rep = classify(&b.operating_point(p));
    b.margin = rep.margin;
    b.dyn_label = if rep.stable { DynLabel::Stable } else { DynLabel::Unstable };
    b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSet {
    pub branches: Vec<MeanFieldBranch>,
    /// Two roots are closer than the degeneracy tolerance (fold point).
    pub degenerate: bool,
}

/// All nonnegative real photon roots, ascending, as labelled branches.
///
/// When the lowest branch and at least one other are stable, the others are
/// relabelled metastable: an adiabatic drive ramp from zero ends on the
/// lowest one.
pub fn solve_photon_branches(p: &PhysParams) -> BranchSet {
    let c = cubic_coeffs(p);
    let RealRoots { roots, degenerate } = real_cubic_roots(c.as_array());
    let mut branches: Vec<MeanFieldBranch> = roots
        .into_iter()
        .filter(|&n| n >= -1e-12 * p.eps.powi(2).max(1.0))
        .enumerate()
        .map(|(i, n)| branch_from_root(p, n.max(0.0), i))
        .collect();
    let n_stable = branches.iter().filter(|b| b.dyn_label == DynLabel::Stable).count();
    if n_stable >= 2 && branches[0].dyn_label == DynLabel::Stable {
        for b in branches.iter_mut().skip(1) {
            if b.dyn_label == DynLabel::Stable {
                b.dyn_label = DynLabel::Metastable;
            }
        }
    }
    BranchSet { branches, degenerate }
}

/// Coefficients `[c3, c2, c1, c0]` of the displacement cubic
/// `ω g² x³ − 2gΔω x² + (Δ² + κ²/4) ω x − 2g ε² = 0`.
pub fn displacement_coeffs(p: &PhysParams) -> [f64; 4] {
    let (g, w, d) = (p.g, p.omega_m, p.delta);
    [
        w * g * g,
        -2.0 * g * d * w,
        (d * d + p.kappa * p.kappa / 4.0) * w,
        -2.0 * g * p.eps * p.eps,
    ]
}

/// Real roots of the displacement cubic (damping neglected in the
/// mechanical susceptibility), each mapping to a photon root through
/// `n = ω x / (2g)`.
pub fn solve_displacement_branches(p: &PhysParams) -> RealRoots {
    real_cubic_roots(displacement_coeffs(p))
}

/// The reference solution without optomechanical back-action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizedReference {
    pub alpha0: Complex64,
    pub n0: f64,
    /// `2 g n0 / ω_m`, the sign the equations of motion give.
    pub x0: f64,
    /// `−2 g n0 / ω_m`, the opposite sign convention.
    pub x0_alt_sign: f64,
}

impl LinearizedReference {
    /// Fluctuations about the reference: bare detuning, `G = g α0`.
    pub fn operating_point(&self, p: &PhysParams) -> OperatingPoint {
        OperatingPoint {
            delta_eff: p.delta,
            g_enh: self.alpha0 * p.g,
            kappa: p.kappa,
            gamma: p.gamma,
            omega_m: p.omega_m,
        }
    }

    /// The reference as a single branch. Its `delta_eff` is the bare
    /// detuning by construction.
    pub fn as_branch(&self, p: &PhysParams) -> MeanFieldBranch {
        let point = self.operating_point(p);
        let rep = classify(&point);
        MeanFieldBranch {
            n: self.n0,
            alpha: self.alpha0,
            beta: Complex64::new(self.x0 / 2.0, 0.0),
            x: self.x0,
            delta_eff: p.delta,
            g_enh: point.g_enh,
            branch_id: 0,
            dyn_label: if rep.stable { DynLabel::Stable } else { DynLabel::Unstable },
            margin: rep.margin,
        }
    }
}

pub fn linearized_reference(p: &PhysParams) -> LinearizedReference {
    let alpha0 = -I * p.eps / (I * p.delta + p.kappa / 2.0);
    let n0 = alpha0.norm_sqr();
    let x0 = 2.0 * p.g * n0 / p.omega_m;
    LinearizedReference { alpha0, n0, x0, x0_alt_sign: -x0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalTrajectory {
    pub times: Vec<f64>,
    pub alpha: Vec<Complex64>,
    pub beta: Vec<Complex64>,
    pub terminal_alpha: Complex64,
    pub terminal_beta: Complex64,
    pub converged: bool,
    /// `max(|α̇|, |β̇|) / max(1, |α|, |β|)` at the terminal state.
    pub residual: f64,
}

impl ClassicalTrajectory {
    pub fn terminal_n(&self) -> f64 {
        self.terminal_alpha.norm_sqr()
    }
}

fn classical_rhs(p: &PhysParams, y: &[f64], dy: &mut [f64]) {
    let a = Complex64::new(y[0], y[1]);
    let b = Complex64::new(y[2], y[3]);
    let x = 2.0 * b.re;
    let da = -(I * p.delta + p.kappa / 2.0) * a + I * p.g * a * x - I * p.eps;
    let db = -(I * p.omega_m + p.gamma / 2.0) * b + I * p.g * a.norm_sqr();
    dy[0] = da.re;
    dy[1] = da.im;
    dy[2] = db.re;
    dy[3] = db.im;
}

const MAX_SAMPLES: usize = 4096;

/// Integrates the classical equations of motion until `t_end` or until the
/// state is stationary.
pub fn integrate_classical(
    p: &PhysParams,
    alpha_init: Complex64,
    beta_init: Complex64,
    t_end: f64,
) -> Result<ClassicalTrajectory, OdeError> {
    let mut y = [alpha_init.re, alpha_init.im, beta_init.re, beta_init.im];
    let mut times = Vec::new();
    let mut alpha = Vec::new();
    let mut beta = Vec::new();
    let mut converged = false;
    let mut residual = f64::INFINITY;
    let sample_dt = t_end / MAX_SAMPLES as f64;
    let mut last_sample = f64::NEG_INFINITY;

    let solver = Dopri5::with_tolerances(TOLERANCES.ode_rtol_classical, 1e-12);
    solver.integrate(
        |_, y, dy| classical_rhs(p, y, dy),
        0.0,
        &mut y,
        t_end,
        |t, y, dy| {
            let a = Complex64::new(y[0], y[1]);
            let b = Complex64::new(y[2], y[3]);
            let scale = 1f64.max(a.norm()).max(b.norm());
            let da = dy[0].hypot(dy[1]);
            let db = dy[2].hypot(dy[3]);
            residual = da.max(db) / scale;
            converged = da < 1e-8 * scale && db < 1e-8 * scale;
            if t == 0.0 || t - last_sample >= sample_dt || converged || t >= t_end {
                times.push(t);
                alpha.push(a);
                beta.push(b);
                last_sample = t;
            }
            if converged { Control::Stop } else { Control::Continue }
        },
    )?;
    Ok(ClassicalTrajectory {
        times,
        alpha,
        beta,
        terminal_alpha: Complex64::new(y[0], y[1]),
        terminal_beta: Complex64::new(y[2], y[3]),
        converged,
        residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepDirection {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HysteresisPoint {
    pub value: f64,
    /// The algebraic branch nearest to where the dynamics ended.
    pub branch: MeanFieldBranch,
    pub terminal_n: f64,
    /// `|terminal_n − branch.n| / max(branch.n, 1)`.
    pub rel_gap: f64,
    pub converged: bool,
}

/// Nominal dwell per grid point: `50/κ`, capped at `1e5/ω_m`.
pub fn dwell_time(p: &PhysParams) -> f64 {
    (50.0 / p.kappa).min(1e5 / p.omega_m)
}

/// Horizon actually integrated per grid point. The nominal dwell is too
/// short for weakly damped mechanics, so points run until stationary or
/// until the `1e5/ω_m` cap.
pub fn settle_horizon(p: &PhysParams) -> f64 {
    dwell_time(p).max(1e5 / p.omega_m)
}

/// Adiabatic sweep of `field` over the ascending grid `values`.
///
/// Each point starts from the previous terminal state. An up sweep starts
/// from the empty cavity; a down sweep starts on the highest algebraic
/// branch of the first (largest) value.
pub fn hysteresis_sweep(
    p: &PhysParams,
    field: ParamField,
    values: &[f64],
    direction: SweepDirection,
) -> Result<Vec<HysteresisPoint>, OdeError> {
    let order: Vec<f64> = match direction {
        SweepDirection::Up => values.to_vec(),
        SweepDirection::Down => values.iter().rev().copied().collect(),
    };
    let mut state: Option<(Complex64, Complex64)> = None;
    let mut out = Vec::with_capacity(order.len());
    for v in order {
        let q = field.with(*p, v);
        let set = solve_photon_branches(&q);
        let (a0, b0) = match (state, direction) {
            (Some(s), _) => s,
            (None, SweepDirection::Up) => (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)),
            (None, SweepDirection::Down) => {
                let top = set.branches.last().copied();
                top.map(|b| (b.alpha, b.beta))
                    .unwrap_or((Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)))
            }
        };
        let traj = integrate_classical(&q, a0, b0, settle_horizon(&q))?;
        let terminal_n = traj.terminal_n();
        let branch = nearest_branch(&set, terminal_n)
            .unwrap_or_else(|| branch_from_root(&q, terminal_n, 0));
        out.push(HysteresisPoint {
            value: v,
            branch,
            terminal_n,
            rel_gap: (terminal_n - branch.n).abs() / branch.n.max(1.0),
            converged: traj.converged,
        });
        state = Some((traj.terminal_alpha, traj.terminal_beta));
    }
    if direction == SweepDirection::Down {
        out.reverse();
    }
    Ok(out)
}

fn nearest_branch(set: &BranchSet, n: f64) -> Option<MeanFieldBranch> {
    set.branches
        .iter()
        .min_by(|a, b| (a.n - n).abs().total_cmp(&(b.n - n).abs()))
        .copied()
}
