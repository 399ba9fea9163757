//! Linearized second moments of the fluctuation operators.
//!
//! The state is `s = (Na, Nb, Re⟨a†b⟩, Im⟨a†b⟩, Re⟨ab⟩, Im⟨ab⟩, Re⟨a²⟩,
//! Im⟨a²⟩, Re⟨b²⟩, Im⟨b²⟩)` and obeys `ds/dt = M s + c`. The drift is
//! assembled from a direct complex transcription of the six moment
//! equations: `c = f(0)` and column `i` of `M` is `f(e_i)` with the source
//! terms switched off.

use nalgebra::{Complex, DMatrix, DVector, Matrix4, SMatrix, SVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::meanfield::MeanFieldBranch;
use crate::ode::{Control, Dopri5, OdeError};
use crate::params::{PhysParams, TOLERANCES};
use crate::stability::{classify, OperatingPoint};

pub type Drift = SMatrix<f64, 10, 10>;
pub type MomentVector = SVector<f64, 10>;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CovarianceError {
    #[error("moment drift is singular (condition number {condition:.3e})")]
    SingularDrift { condition: f64 },
    #[error("steady-state residual {residual:.3e} exceeds tolerance")]
    Residual { residual: f64 },
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Which detuning enters the fluctuation equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetuningMode {
    /// `Δ'` of the operating branch.
    #[default]
    Effective,
    /// The bare laser detuning `Δ`.
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPoint {
    /// Detuning used in the drift.
    pub delta: f64,
    pub g_enh: Complex64,
    pub kappa: f64,
    pub gamma: f64,
    pub omega_m: f64,
    pub n_th: f64,
    pub branch_id: Option<usize>,
}

impl MomentPoint {
    pub fn new(delta: f64, g_enh: Complex64, kappa: f64, gamma: f64, omega_m: f64, n_th: f64) -> Self {
        Self { delta, g_enh, kappa, gamma, omega_m, n_th, branch_id: None }
    }

    pub fn from_branch(p: &PhysParams, b: &MeanFieldBranch, mode: DetuningMode) -> Self {
        let delta = match mode {
            DetuningMode::Effective => b.delta_eff,
            DetuningMode::AsPrinted => p.delta,
        };
        Self {
            delta,
            g_enh: b.g_enh,
            kappa: p.kappa,
            gamma: p.gamma,
            omega_m: p.omega_m,
            n_th: p.n_th,
            branch_id: Some(b.branch_id),
        }
    }

    pub fn operating_point(&self) -> OperatingPoint {
        OperatingPoint {
            delta_eff: self.delta,
            g_enh: self.g_enh,
            kappa: self.kappa,
            gamma: self.gamma,
            omega_m: self.omega_m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SecondMoments {
    pub na: f64,
    pub nb: f64,
    /// ⟨a†b⟩
    pub c_adb: Complex64,
    /// ⟨ab⟩
    pub c_ab: Complex64,
    /// ⟨a²⟩
    pub c_aa: Complex64,
    /// ⟨b²⟩
    pub c_bb: Complex64,
}

impl SecondMoments {
    /// Cavity vacuum and mechanics in a thermal state of occupancy `n_th`.
    pub fn thermal(n_th: f64) -> Self {
        Self { nb: n_th, ..Default::default() }
    }

    pub fn pack(&self) -> MomentVector {
        MomentVector::from([
            self.na,
            self.nb,
            self.c_adb.re,
            self.c_adb.im,
            self.c_ab.re,
            self.c_ab.im,
            self.c_aa.re,
            self.c_aa.im,
            self.c_bb.re,
            self.c_bb.im,
        ])
    }

    pub fn unpack(s: &[f64]) -> Self {
        Self {
            na: s[0],
            nb: s[1],
            c_adb: Complex64::new(s[2], s[3]),
            c_ab: Complex64::new(s[4], s[5]),
            c_aa: Complex64::new(s[6], s[7]),
            c_bb: Complex64::new(s[8], s[9]),
        }
    }

    /// Symmetrized covariance of `(X_c, P_c, X_m, P_m)`.
    pub fn quadrature_covariance(&self) -> Matrix4<f64> {
        let (na, nb) = (self.na, self.nb);
        let (aa, bb, ab, adb) = (self.c_aa, self.c_bb, self.c_ab, self.c_adb);
        let xx_c = aa.re + na + 0.5;
        let pp_c = -aa.re + na + 0.5;
        let xp_c = aa.im;
        let xx_m = bb.re + nb + 0.5;
        let pp_m = -bb.re + nb + 0.5;
        let xp_m = bb.im;
        let xc_xm = ab.re + adb.re;
        let xc_pm = ab.im + adb.im;
        let pc_xm = ab.im - adb.im;
        let pc_pm = adb.re - ab.re;
        #[rustfmt::skip]
        let s = Matrix4::new(
            xx_c,  xp_c,  xc_xm, xc_pm,
            xp_c,  pp_c,  pc_xm, pc_pm,
            xc_xm, pc_xm, xx_m,  xp_m,
            xc_pm, pc_pm, xp_m,  pp_m,
        );
        s
    }

    /// Smallest eigenvalue of the Hermitian matrix `σ + (i/2)Ω`; a physical
    /// state has it nonnegative.
    pub fn uncertainty_min_eig(&self) -> f64 {
        let s = self.quadrature_covariance();
        let mut omega = Matrix4::<f64>::zeros();
        for k in [0, 2] {
            omega[(k, k + 1)] = 1.0;
            omega[(k + 1, k)] = -1.0;
        }
        let h: SMatrix<Complex<f64>, 4, 4> =
            SMatrix::from_fn(|r, c| Complex::new(s[(r, c)], 0.5 * omega[(r, c)]));
        h.symmetric_eigenvalues().min()
    }

    pub fn is_physical(&self) -> bool {
        self.uncertainty_min_eig() >= -1e-6
    }
}

/// Right-hand side of the moment equations; `sources` toggles the constant
/// (state-independent) terms.
fn moment_rhs(pt: &MomentPoint, s: &SecondMoments, sources: bool) -> SecondMoments {
    let d = pt.delta;
    let w = pt.omega_m;
    let (k, gm) = (pt.kappa, pt.gamma);
    let g = pt.g_enh;
    let gc = g.conj();
    let SecondMoments { na, nb, c_adb: x, c_ab: ab, c_aa: aa, c_bb: bb } = *s;
    let on = if sources { 1.0 } else { 0.0 };

    let dna = -k * na - I * gc * (ab + x.conj()) + I * g * (x + ab.conj());
    let dnb = -gm * nb + on * gm * pt.n_th + I * gc * x.conj() + I * g * ab.conj()
        - I * g * x
        - I * gc * ab;
    let dx = -(I * (w - d) + (k + gm) / 2.0) * x - I * gc * (bb + nb) + I * gc * na + I * g * aa.conj();
    let dab = -(I * (d + w) + (k + gm) / 2.0) * ab
        + I * g * (bb + nb)
        + I * gc * aa
        + I * g * na
        + on * I * g;
    let daa = -2.0 * (I * d + k / 2.0) * aa + 2.0 * I * g * (ab + x.conj());
    let dbb = -2.0 * (I * w + gm / 2.0) * bb + 2.0 * I * gc * ab + 2.0 * I * g * x;

    SecondMoments { na: dna.re, nb: dnb.re, c_adb: dx, c_ab: dab, c_aa: daa, c_bb: dbb }
}

/// `(M, c)` with `ds/dt = M s + c`.
pub fn moment_drift(pt: &MomentPoint) -> (Drift, MomentVector) {
    let c = moment_rhs(pt, &SecondMoments::default(), true).pack();
    let mut m = Drift::zeros();
    for j in 0..10 {
        let mut e = [0.0; 10];
        e[j] = 1.0;
        let col = moment_rhs(pt, &SecondMoments::unpack(&e), false).pack();
        m.set_column(j, &col);
    }
    (m, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyMoments {
    pub moments: SecondMoments,
    pub residual: f64,
    pub condition: f64,
    /// Verdict of the fluctuation spectrum at the same point. Unstable
    /// points still have an algebraic solution, which is not physical.
    pub stable: bool,
    pub margin: f64,
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let (lo, hi) = (sv.min(), sv.max());
    if lo == 0.0 { f64::INFINITY } else { hi / lo }
}

/// Solves `m s + c = 0`; returns `(s, relative residual, condition number)`.
fn solve_affine(m: DMatrix<f64>, c: DVector<f64>) -> Result<(DVector<f64>, f64, f64), CovarianceError> {
    if m.iter().chain(c.iter()).any(|v| !v.is_finite()) {
        return Err(CovarianceError::SingularDrift { condition: f64::NAN });
    }
    let condition = condition_number(&m);
    if !(condition <= TOLERANCES.max_condition) {
        return Err(CovarianceError::SingularDrift { condition });
    }
    let lu = m.clone().lu();
    let mut s = lu.solve(&(-&c)).ok_or(CovarianceError::SingularDrift { condition })?;
    let scale = c.norm().max(f64::MIN_POSITIVE);
    let mut residual = (&m * &s + &c).norm() / scale;
    // one round of iterative refinement if needed
    if residual > TOLERANCES.linear_residual {
        if let Some(ds) = lu.solve(&(-(&m * &s + &c))) {
            let refined = &s + ds;
            let r2 = (&m * &refined + &c).norm() / scale;
            if r2 < residual {
                s = refined;
                residual = r2;
            }
        }
    }
    if residual > TOLERANCES.linear_residual {
        return Err(CovarianceError::Residual { residual });
    }
    Ok((s, residual, condition))
}

pub fn steady_moments(pt: &MomentPoint) -> Result<SteadyMoments, CovarianceError> {
    let (m, c) = moment_drift(pt);
    let (s, residual, condition) = solve_affine(DMatrix::from_iterator(10, 10, m.iter().copied()), DVector::from_column_slice(c.as_slice()))?;
    let rep = classify(&pt.operating_point());
    Ok(SteadyMoments {
        moments: SecondMoments::unpack(s.as_slice()),
        residual,
        condition,
        stable: rep.stable,
        margin: rep.margin,
    })
}

/// Steady `Nb` with the counter-rotating moments `⟨ab⟩`, `⟨a²⟩`, `⟨b²⟩`
/// removed from the dynamics.
pub fn rw_truncated_nb(pt: &MomentPoint) -> Result<f64, CovarianceError> {
    let (m, c) = moment_drift(pt);
    let m4 = DMatrix::from_fn(4, 4, |r, k| m[(r, k)]);
    let c4 = DVector::from_column_slice(&c.as_slice()[..4]);
    let (s, _, _) = solve_affine(m4, c4)?;
    Ok(s[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<SecondMoments>,
    pub terminal: SecondMoments,
    pub t_final: f64,
    /// Some component exceeded `1e12` in magnitude.
    pub diverged: bool,
}

const DIVERGENCE: f64 = 1e12;
const MAX_SAMPLES: usize = 2048;

pub fn integrate_moments(
    pt: &MomentPoint,
    s0: &SecondMoments,
    t_end: f64,
) -> Result<MomentTrajectory, CovarianceError> {
    let (m, c) = moment_drift(pt);
    let mut y: Vec<f64> = s0.pack().as_slice().to_vec();
    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut diverged = false;
    let sample_dt = t_end / MAX_SAMPLES as f64;
    let mut last = f64::NEG_INFINITY;

    let solver = Dopri5::with_tolerances(TOLERANCES.ode_rtol_moments, 1e-12);
    let out = solver.integrate(
        |_, y, dy| {
            let s = MomentVector::from_column_slice(y);
            let d = m * s + c;
            dy.copy_from_slice(d.as_slice());
        },
        0.0,
        &mut y,
        t_end,
        |t, y, _| {
            if t == 0.0 || t - last >= sample_dt || t >= t_end {
                times.push(t);
                states.push(SecondMoments::unpack(y));
                last = t;
            }
            if y.iter().any(|v| v.abs() > DIVERGENCE) {
                diverged = true;
                Control::Stop
            } else {
                Control::Continue
            }
        },
    );
    let t_final = match out {
        Ok(o) => o.t,
        Err(OdeError::NonFinite { t }) => {
            diverged = true;
            t
        }
        Err(e) => return Err(e.into()),
    };
    if times.last() != Some(&t_final) {
        times.push(t_final);
        states.push(SecondMoments::unpack(&y));
    }
    Ok(MomentTrajectory { times, states, terminal: SecondMoments::unpack(&y), t_final, diverged })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClosedForms {
    /// Rotating-wave occupancy as printed; `+inf` at `G = 0`.
    pub n_rw: f64,
    /// Counter-rotating correction as printed.
    pub n_arw: f64,
    /// `4|G|² < 100 κγ`: outside the strong-coupling validity regime.
    pub weak_coupling: bool,
    /// The counter-rotating denominator `4ω² + κ² − 16|G|²` is near zero.
    pub near_pole: bool,
}

pub fn nbs_closed_forms(g_abs: f64, kappa: f64, gamma: f64, omega_m: f64, n_th: f64) -> ClosedForms {
    let g2 = g_abs * g_abs;
    let n_rw = if g2 == 0.0 {
        f64::INFINITY
    } else {
        (4.0 * g2 + kappa) * n_th / (4.0 * g2 * (kappa + gamma))
    };
    let w2 = omega_m * omega_m;
    let k2 = kappa * kappa;
    let den = 4.0 * w2 + k2 - 16.0 * g2;
    // Same rational function, split so the G = 0 value is exactly κ²/16ω².
    let n_arw = k2 / (16.0 * w2) + g2 * (k2 + 4.0 * w2) / (2.0 * w2 * den);
    ClosedForms {
        n_rw,
        n_arw,
        weak_coupling: 4.0 * g2 < 100.0 * kappa * gamma,
        near_pole: den.abs() < 1e-9,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoolingResult {
    /// Steady `Nb` from the full linear solve.
    pub nbs_exact: f64,
    /// Rotating-wave reference: steady `Nb` of the truncated solve. This is
    /// the denominator of `r_c`.
    pub n_rw: f64,
    /// Rotating-wave closed form as printed.
    pub n_rw_printed: f64,
    /// Counter-rotating closed form as printed.
    pub n_arw: f64,
    /// `nbs_exact / n_rw`; `NaN` without coupling.
    pub r_c: f64,
    pub stable: bool,
    pub margin: f64,
    pub branch_id: Option<usize>,
    pub uncoupled: bool,
    pub weak_coupling: bool,
    pub near_pole: bool,
}

pub fn cooling_factor(pt: &MomentPoint) -> Result<CoolingResult, CovarianceError> {
    let steady = steady_moments(pt)?;
    let g_abs = pt.g_enh.norm();
    let cf = nbs_closed_forms(g_abs, pt.kappa, pt.gamma, pt.omega_m, pt.n_th);
    let uncoupled = g_abs == 0.0;
    let n_rw = rw_truncated_nb(pt)?;
    let nbs = steady.moments.nb;
    Ok(CoolingResult {
        nbs_exact: nbs,
        n_rw,
        n_rw_printed: cf.n_rw,
        n_arw: cf.n_arw,
        r_c: if uncoupled { f64::NAN } else { nbs / n_rw },
        stable: steady.stable,
        margin: steady.margin,
        branch_id: pt.branch_id,
        uncoupled,
        weak_coupling: cf.weak_coupling,
        near_pole: cf.near_pole,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(g: f64) -> MomentPoint {
        MomentPoint::new(1.0, Complex64::new(g, 0.0), 0.1, 1e-4, 1.0, 200.0)
    }

    #[test]
    fn uncoupled_drift_is_thermal_relaxation() {
        let (m, c) = moment_drift(&pt(0.0));
        assert_eq!(m[(1, 1)], -1e-4);
        assert!((c[1] - 0.02).abs() < 1e-15);
        for j in 0..10 {
            if j != 1 {
                assert_eq!(m[(1, j)], 0.0);
            }
        }
        assert_eq!(m[(0, 0)], -0.1);
        // no coupling between the optical and mechanical blocks
        for (r, col) in [(0, 1), (1, 0), (6, 8), (8, 6)] {
            assert_eq!(m[(r, col)], 0.0);
        }
    }

    #[test]
    fn constant_term_has_thermal_and_vacuum_entries() {
        let (_, c) = moment_drift(&pt(0.1));
        let nonzero: Vec<usize> = (0..10).filter(|&i| c[i] != 0.0).collect();
        // i G with G real lands in Im⟨ab⟩ only
        assert_eq!(nonzero, vec![1, 5]);
        assert!((c[1] - 0.02).abs() < 1e-15);
        assert!((c[5] - 0.1).abs() < 1e-15);
        let (_, c) = moment_drift(&MomentPoint::new(1.0, Complex64::new(0.06, 0.08), 0.1, 1e-4, 1.0, 200.0));
        assert!((c[4] + 0.08).abs() < 1e-15 && (c[5] - 0.06).abs() < 1e-15);
    }

    #[test]
    fn thermal_equilibrium_without_coupling() {
        let s = steady_moments(&pt(0.0)).unwrap();
        assert!((s.moments.nb - 200.0).abs() < 1e-9);
        assert!(s.moments.na.abs() < 1e-12);
        assert!(s.moments.c_ab.norm() < 1e-12 && s.moments.c_adb.norm() < 1e-12);
        assert!(s.stable);
    }

    #[test]
    fn closed_forms_by_hand() {
        let cf = nbs_closed_forms(0.0, 0.1, 1e-4, 1.0, 200.0);
        assert_eq!(cf.n_rw, f64::INFINITY);
        assert!((cf.n_arw - 0.01 / 16.0).abs() < 1e-15);
        let cf = nbs_closed_forms(0.5, 0.1, 1e-4, 1.0, 200.0);
        assert!((cf.n_rw - 1.1 * 200.0 / 0.1001).abs() < 1e-9);
        assert!((cf.n_rw - 2197.8).abs() < 0.05);
        let pole = (4.0f64 + 0.01).sqrt() / 4.0;
        assert!(nbs_closed_forms(pole, 0.1, 1e-4, 1.0, 200.0).near_pole);
        assert!(!nbs_closed_forms(0.45, 0.1, 1e-4, 1.0, 200.0).near_pole);
    }

    #[test]
    fn unstable_point_diverges() {
        let p = pt(0.55);
        assert!(!steady_moments(&p).unwrap().stable);
        let tr = integrate_moments(&p, &SecondMoments::thermal(200.0), 2e4).unwrap();
        assert!(tr.diverged);
    }

    #[test]
    fn fixed_point_stays_put() {
        let p = pt(0.0);
        let s = steady_moments(&p).unwrap().moments;
        let tr = integrate_moments(&p, &s, 100.0).unwrap();
        for st in &tr.states {
            assert!((st.pack() - s.pack()).norm() < 1e-10 * 200.0);
        }
    }

    #[test]
    fn uncoupled_cooling_factor_is_flagged() {
        let r = cooling_factor(&pt(0.0)).unwrap();
        assert!(r.uncoupled && r.r_c.is_nan());
        assert_eq!(r.n_rw_printed, f64::INFINITY);
    }

    #[test]
    fn pack_round_trip() {
        let v: Vec<f64> = (0..10).map(|i| i as f64 * 0.5 - 1.0).collect();
        assert_eq!(SecondMoments::unpack(&v).pack().as_slice(), v.as_slice());
    }

    #[test]
    fn thermal_state_is_physical_and_vacuum_saturates() {
        assert!(SecondMoments::thermal(5.0).is_physical());
        assert!(SecondMoments::thermal(0.0).uncertainty_min_eig().abs() < 1e-12);
        let bad = SecondMoments { na: -0.2, ..Default::default() };
        assert!(!bad.is_physical());
    }
}
