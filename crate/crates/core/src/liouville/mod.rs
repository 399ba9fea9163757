//! Master equation for the fluctuation modes on a truncated Fock space.
//!
//! `H = Δ' a†a + ω b†b − (G* a + G a†)(b + b†) − g a†a (b + b†)`, the last
//! term only with `include_qnl`. Dissipation: cavity decay `κ`, mechanical
//! thermal contact `γ(n_th + 1)` down and `γ n_th` up.

mod ops;

use std::collections::BTreeMap;

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ops::{Generator, SparseOp};
use ops::Builder;

use crate::meanfield::MeanFieldBranch;
use crate::ode::{Control, Dopri5, OdeError};
use crate::params::PhysParams;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LiouvilleError {
    #[error("Hilbert dimension {dim} exceeds the cap of {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("cutoffs must be at least 2 (got {n_cav} x {n_mech})")]
    InvalidCutoff { n_cav: usize, n_mech: usize },
    #[error("no steady state by t = {t} (max |dρ/dt| = {residual:.3e})")]
    NonConvergence { t: f64, residual: f64 },
    #[error("kernel is not one-dimensional (residual {residual:.3e})")]
    DegenerateKernel { residual: f64 },
    #[error(transparent)]
    Ode(#[from] OdeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SteadyMethod {
    TimeEvolution,
    NullSpace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FockConfig {
    pub n_cav: usize,
    pub n_mech: usize,
    pub include_qnl: bool,
    /// Stop time evolution once `max |dρ/dt|` falls below this.
    pub steady_tol: f64,
    pub method: SteadyMethod,
    /// Cap on the Hilbert dimension `n_cav · n_mech`.
    pub max_dim: usize,
    /// Tighter cap for the sparse direct solve, whose size is `dim²`.
    pub max_nullspace_dim: usize,
    /// Time cap for propagation.
    pub max_time: f64,
}

impl Default for FockConfig {
    fn default() -> Self {
        Self {
            n_cav: 12,
            n_mech: 30,
            include_qnl: false,
            steady_tol: 1e-10,
            method: SteadyMethod::NullSpace,
            max_dim: 1024,
            max_nullspace_dim: 400,
            max_time: 1e6,
        }
    }
}

impl FockConfig {
    pub fn with_cutoffs(n_cav: usize, n_mech: usize) -> Self {
        Self { n_cav, n_mech, ..Default::default() }
    }

    pub fn dim(&self) -> usize {
        self.n_cav * self.n_mech
    }

    pub fn check(&self) -> Result<(), LiouvilleError> {
        if self.n_cav < 2 || self.n_mech < 2 {
            return Err(LiouvilleError::InvalidCutoff { n_cav: self.n_cav, n_mech: self.n_mech });
        }
        let cap = match self.method {
            SteadyMethod::TimeEvolution => self.max_dim,
            SteadyMethod::NullSpace => self.max_dim.min(self.max_nullspace_dim),
        };
        if self.dim() > cap {
            return Err(LiouvilleError::DimensionCap { dim: self.dim(), cap });
        }
        Ok(())
    }

    /// Both cutoffs grown by 25% (at least one level).
    pub fn refined(&self) -> Self {
        let grow = |n: usize| (n + n.div_ceil(4)).max(n + 1);
        Self { n_cav: grow(self.n_cav), n_mech: grow(self.n_mech), ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiouvillePoint {
    pub delta_eff: f64,
    pub g_enh: Complex64,
    pub g: f64,
    pub omega_m: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub n_th: f64,
}

impl LiouvillePoint {
    pub fn from_branch(p: &PhysParams, b: &MeanFieldBranch) -> Self {
        Self {
            delta_eff: b.delta_eff,
            g_enh: b.g_enh,
            g: p.g,
            omega_m: p.omega_m,
            kappa: p.kappa,
            gamma: p.gamma,
            n_th: p.n_th,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Liouvillian {
    pub point: LiouvillePoint,
    pub cfg: FockConfig,
    pub gen: Generator,
}

pub fn build_generator(point: &LiouvillePoint, cfg: &FockConfig) -> Result<Liouvillian, LiouvilleError> {
    cfg.check()?;
    let (nc, nm) = (cfg.n_cav, cfg.n_mech);
    let dim = nc * nm;
    let idx = |ic: usize, im: usize| ic * nm + im;
    let c = |re: f64| Complex64::new(re, 0.0);
    let i = Complex64::new(0.0, 1.0);

    let mut h = Builder::default();
    for ic in 0..nc {
        for im in 0..nm {
            let d = idx(ic, im);
            h.add(d, d, c(point.delta_eff * ic as f64 + point.omega_m * im as f64));
        }
    }
    // −(G* a + G a†)(b + b†) and −g a†a (b + b†)
    for ic in 0..nc {
        for im in 0..nm {
            let col = idx(ic, im);
            for (jm, bamp) in [(im.wrapping_sub(1), (im as f64).sqrt()), (im + 1, ((im + 1) as f64).sqrt())] {
                if jm >= nm || bamp == 0.0 {
                    continue;
                }
                if ic >= 1 {
                    h.add(idx(ic - 1, jm), col, -point.g_enh.conj() * (ic as f64).sqrt() * bamp);
                }
                if ic + 1 < nc {
                    h.add(idx(ic + 1, jm), col, -point.g_enh * ((ic + 1) as f64).sqrt() * bamp);
                }
                if cfg.include_qnl && ic > 0 {
                    h.add(idx(ic, jm), col, c(-point.g * ic as f64 * bamp));
                }
            }
        }
    }

    let down = point.gamma * (point.n_th + 1.0);
    let up = point.gamma * point.n_th;
    let mut k = Builder::default();
    for (&(r, col), &v) in &h.entries {
        k.add(r, col, -i * v);
    }
    // −½ Σ L†L, using the truncated jump operators so trace is exact
    for ic in 0..nc {
        for im in 0..nm {
            let d = idx(ic, im);
            let bbd = if im + 1 < nm { (im + 1) as f64 } else { 0.0 };
            let rate = point.kappa * ic as f64 + down * im as f64 + up * bbd;
            k.add(d, d, c(-0.5 * rate));
        }
    }

    let mut jumps = Vec::new();
    let mut push = |scale: f64, f: &dyn Fn(usize, usize) -> Option<(usize, f64)>| {
        if scale <= 0.0 {
            return;
        }
        let mut b = Builder::default();
        for ic in 0..nc {
            for im in 0..nm {
                if let Some((row, amp)) = f(ic, im) {
                    b.add(row, idx(ic, im), c(scale.sqrt() * amp));
                }
            }
        }
        jumps.push(SparseOp::from_entries(dim, b.entries));
    };
    push(point.kappa, &|ic, im| (ic > 0).then(|| (idx(ic - 1, im), (ic as f64).sqrt())));
    push(down, &|ic, im| (im > 0).then(|| (idx(ic, im - 1), (im as f64).sqrt())));
    push(up, &|ic, im| (im + 1 < nm).then(|| (idx(ic, im + 1), ((im + 1) as f64).sqrt())));

    let gen = Generator { n_cav: nc, n_mech: nm, k: SparseOp::from_entries(dim, k.entries), jumps };
    Ok(Liouvillian { point: *point, cfg: *cfg, gen })
}

/// A density matrix with its invariant diagnostics, measured before any
/// clean-up.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    pub n_cav: usize,
    pub n_mech: usize,
    /// Row-major, `dim × dim`.
    pub rho: Vec<Complex64>,
    pub trace: f64,
    pub hermiticity_dev: f64,
    pub min_eig: f64,
}

impl DensityState {
    pub fn dim(&self) -> usize {
        self.n_cav * self.n_mech
    }

    pub fn new(n_cav: usize, n_mech: usize, rho: Vec<Complex64>) -> Self {
        let n = n_cav * n_mech;
        let trace = (0..n).map(|i| rho[i * n + i].re).sum();
        let mut herm = 0.0f64;
        for r in 0..n {
            for c in r..n {
                herm = herm.max((rho[r * n + c] - rho[c * n + r].conj()).norm());
            }
        }
        let m = DMatrix::from_fn(n, n, |r, c| 0.5 * (rho[r * n + c] + rho[c * n + r].conj()));
        let min_eig = m.symmetric_eigenvalues().min();
        Self { n_cav, n_mech, rho, trace, hermiticity_dev: herm, min_eig }
    }

    /// Cavity vacuum ⊗ truncated mechanical thermal state.
    pub fn vacuum_thermal(n_cav: usize, n_mech: usize, n_th: f64) -> Self {
        let n = n_cav * n_mech;
        let ratio = if n_th > 0.0 { n_th / (n_th + 1.0) } else { 0.0 };
        let weights: Vec<f64> = (0..n_mech).map(|k| ratio.powi(k as i32)).collect();
        let z: f64 = weights.iter().sum();
        let mut rho = vec![Complex64::new(0.0, 0.0); n * n];
        for (k, w) in weights.iter().enumerate() {
            rho[k * n + k] = Complex64::new(w / z, 0.0);
        }
        Self::new(n_cav, n_mech, rho)
    }

    pub fn invariants_hold(&self) -> bool {
        (self.trace - 1.0).abs() <= 1e-8 && self.hermiticity_dev <= 1e-10 && self.min_eig >= -1e-8
    }

    fn population(&self, ic: usize, im: usize) -> f64 {
        let n = self.dim();
        let d = ic * self.n_mech + im;
        self.rho[d * n + d].re
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhononStats {
    pub nb: f64,
    pub na: f64,
    /// Population of the top two cavity levels.
    pub tail_cav: f64,
    /// Population of the top two mechanical levels.
    pub tail_mech: f64,
    pub truncation_warning: bool,
}

pub fn phonon_number(state: &DensityState) -> PhononStats {
    let (nc, nm) = (state.n_cav, state.n_mech);
    let mut stats = PhononStats { nb: 0.0, na: 0.0, tail_cav: 0.0, tail_mech: 0.0, truncation_warning: false };
    for ic in 0..nc {
        for im in 0..nm {
            let p = state.population(ic, im);
            stats.nb += im as f64 * p;
            stats.na += ic as f64 * p;
            if ic + 2 >= nc {
                stats.tail_cav += p;
            }
            if im + 2 >= nm {
                stats.tail_mech += p;
            }
        }
    }
    stats.truncation_warning = stats.tail_cav.max(stats.tail_mech) > 1e-6;
    stats
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub state: DensityState,
    pub method: SteadyMethod,
    /// Propagation time used (zero for the direct solve).
    pub t: f64,
    /// `max |L(ρ)|` at the returned state.
    pub residual: f64,
}

fn as_reals_mut(v: &mut [Complex64]) -> &mut [f64] {
    // SAFETY: Complex<f64> is #[repr(C)] { re, im }.
    unsafe { std::slice::from_raw_parts_mut(v.as_mut_ptr().cast::<f64>(), v.len() * 2) }
}

fn as_complex(v: &[f64]) -> &[Complex64] {
    // SAFETY: even length by construction; same layout as above.
    unsafe { std::slice::from_raw_parts(v.as_ptr().cast::<Complex64>(), v.len() / 2) }
}

fn as_complex_mut(v: &mut [f64]) -> &mut [Complex64] {
    // SAFETY: as above.
    unsafe { std::slice::from_raw_parts_mut(v.as_mut_ptr().cast::<Complex64>(), v.len() / 2) }
}

fn max_abs(v: &[Complex64]) -> f64 {
    v.iter().fold(0.0, |m, z| m.max(z.norm()))
}

fn residual_of(gen: &Generator, rho: &[Complex64]) -> f64 {
    let mut out = vec![Complex64::new(0.0, 0.0); rho.len()];
    let mut scratch = out.clone();
    gen.apply(rho, &mut out, &mut scratch);
    max_abs(&out)
}

pub fn steady_state(l: &Liouvillian) -> Result<SteadyState, LiouvilleError> {
    match l.cfg.method {
        SteadyMethod::TimeEvolution => steady_by_evolution(l),
        SteadyMethod::NullSpace => steady_by_nullspace(l),
    }
}

fn steady_by_evolution(l: &Liouvillian) -> Result<SteadyState, LiouvilleError> {
    let (nc, nm) = (l.cfg.n_cav, l.cfg.n_mech);
    let start = DensityState::vacuum_thermal(nc, nm, l.point.n_th);
    let mut rho = start.rho;
    let mut scratch = vec![Complex64::new(0.0, 0.0); rho.len()];
    let mut residual = f64::INFINITY;
    let tol = l.cfg.steady_tol;
    // the derivative stalls at a floor proportional to rtol
    let rtol = tol.min(1e-8);
    let solver = Dopri5::with_tolerances(rtol, 1e-4 * rtol);
    let out = solver.integrate(
        |_, y, dy| l.gen.apply(as_complex(y), as_complex_mut(dy), &mut scratch),
        0.0,
        as_reals_mut(&mut rho),
        l.cfg.max_time,
        |_, _, dy| {
            residual = max_abs(as_complex(dy));
            if residual < tol { Control::Stop } else { Control::Continue }
        },
    )?;
    if !out.stopped {
        return Err(LiouvilleError::NonConvergence { t: out.t, residual });
    }
    Ok(SteadyState {
        state: DensityState::new(nc, nm, rho),
        method: SteadyMethod::TimeEvolution,
        t: out.t,
        residual,
    })
}

/// Solves `L(ρ) = 0` with the trace condition in place of the `(0,0)`
/// equation. The generator preserves Hermiticity, so `ρ` is parametrized by
/// `n²` real numbers: slot `i·n+j` holds `Re ρ_ij` for `i <= j` and slot
/// `j·n+i` holds `Im ρ_ij` for `i < j`. The equations use the same layout,
/// which keeps the system real and a quarter of the complex LU cost.
fn steady_by_nullspace(l: &Liouvillian) -> Result<SteadyState, LiouvilleError> {
    let (nc, nm) = (l.cfg.n_cav, l.cfg.n_mech);
    let n = nc * nm;
    let nn = n * n;
    let mut sys: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for ((r, c), v) in l.gen.superoperator_entries() {
        let (k, m) = (r / n, r % n);
        if k > m || r == 0 {
            continue;
        }
        let (i, j) = (c / n, c % n);
        // ρ_ij in terms of the real unknowns
        let terms = match i.cmp(&j) {
            std::cmp::Ordering::Equal => [(c, v), (c, Complex64::new(0.0, 0.0))],
            std::cmp::Ordering::Less => [(c, v), (j * n + i, v * Complex64::i())],
            std::cmp::Ordering::Greater => [(j * n + i, v), (c, -v * Complex64::i())],
        };
        for (col, w) in terms {
            *sys.entry((r, col)).or_default() += w.re;
            if k < m {
                *sys.entry((m * n + k, col)).or_default() += w.im;
            }
        }
    }
    for d in 0..n {
        sys.insert((0, d * n + d), 1.0);
    }
    let triplets: Vec<Triplet<usize, usize, f64>> =
        sys.iter().filter(|(_, &v)| v != 0.0).map(|(&(r, c), &v)| Triplet::new(r, c, v)).collect();
    let degenerate = |residual| LiouvilleError::DegenerateKernel { residual };
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(nn, nn, &triplets)
        .map_err(|_| degenerate(f64::NAN))?;
    let lu = a.sp_lu().map_err(|_| degenerate(f64::INFINITY))?;
    let mut rhs = faer::Mat::<f64>::zeros(nn, 1);
    rhs[(0, 0)] = 1.0;
    let x = lu.solve(&rhs);
    let mut rho = vec![Complex64::new(0.0, 0.0); nn];
    for i in 0..n {
        rho[i * n + i] = Complex64::new(x[(i * n + i, 0)], 0.0);
        for j in i + 1..n {
            let z = Complex64::new(x[(i * n + j, 0)], x[(j * n + i, 0)]);
            rho[i * n + j] = z;
            rho[j * n + i] = z.conj();
        }
    }
    if rho.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(degenerate(f64::INFINITY));
    }
    let residual = residual_of(&l.gen, &rho);
    if residual > 1e-8 {
        return Err(degenerate(residual));
    }
    Ok(SteadyState {
        state: DensityState::new(nc, nm, rho),
        method: SteadyMethod::NullSpace,
        t: 0.0,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceScan {
    /// The coarser configuration of the final agreeing pair.
    pub cfg: FockConfig,
    pub nbs: f64,
    /// `(n_cav, n_mech, N_bs)` for every solve, in order.
    pub history: Vec<(usize, usize, f64)>,
    pub refinements: usize,
}

/// Grows both cutoffs by 25% until `N_bs` changes by less than 1%.
pub fn convergence_scan(point: &LiouvillePoint, base: &FockConfig) -> Result<ConvergenceScan, LiouvilleError> {
    let solve = |cfg: &FockConfig| -> Result<f64, LiouvilleError> {
        let l = build_generator(point, cfg)?;
        Ok(phonon_number(&steady_state(&l)?.state).nb)
    };
    let mut cfg = *base;
    let mut nbs = solve(&cfg)?;
    let mut history = vec![(cfg.n_cav, cfg.n_mech, nbs)];
    let mut refinements = 0;
    loop {
        let next = cfg.refined();
        let v = solve(&next)?;
        refinements += 1;
        history.push((next.n_cav, next.n_mech, v));
        let change = (v - nbs).abs();
        if change <= 0.01 * nbs.abs().max(v.abs()) || change < 1e-12 {
            return Ok(ConvergenceScan { cfg, nbs, history, refinements });
        }
        cfg = next;
        nbs = v;
    }
}
