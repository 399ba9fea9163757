//! System parameters, unit conventions and shared numerical tolerances.
//!
//! Every rate is expressed in units of the mechanical frequency, so a
//! validated [`PhysParams`] always carries `omega_m == 1` unless the caller
//! explicitly works in raw units.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("rate `{field}` is negative ({value})")]
    NegativeRate { field: &'static str, value: f64 },
    #[error("mechanical frequency must be positive, got {0}")]
    NonPositiveFrequency(f64),
    #[error("parameter `{field}` is not finite")]
    NonFinite { field: &'static str },
}

/// How the numbers in a [`PhysParams`] are to be read by [`PhysParams::validate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Units {
    /// Already divided by the mechanical frequency.
    #[default]
    Normalized,
    /// Raw angular frequencies; validation rescales everything by `omega_m`.
    Raw,
}

/// Rates and occupancy of the driven optomechanical cavity.
///
/// `delta` is the laser-cavity detuning `omega_c - omega_d`; positive values
/// are red detuned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    pub omega_m: f64,
    pub delta: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub g: f64,
    pub eps: f64,
    pub n_th: f64,
}

impl Default for PhysParams {
    /// The working point of the cooling study: red sideband drive at
    /// `delta = omega_m`, `kappa = 0.1`, `gamma = 1e-4`, `g = 1e-3`,
    /// `eps = 100`, `n_th = 200`.
    fn default() -> Self {
        Self {
            omega_m: 1.0,
            delta: 1.0,
            kappa: 0.1,
            gamma: 1e-4,
            g: 1e-3,
            eps: 100.0,
            n_th: 200.0,
        }
    }
}

impl PhysParams {
    fn fields(&self) -> [(&'static str, f64); 7] {
        [
            ("omega_m", self.omega_m),
            ("delta", self.delta),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("g", self.g),
            ("eps", self.eps),
            ("n_th", self.n_th),
        ]
    }

    /// Checks the field invariants. With [`Units::Raw`] the returned value is
    /// normalized to `omega_m = 1`.
    pub fn validate(self, units: Units) -> Result<PhysParams, ParamError> {
        for (field, value) in self.fields() {
            if !value.is_finite() {
                return Err(ParamError::NonFinite { field });
            }
        }
        if self.omega_m <= 0.0 {
            return Err(ParamError::NonPositiveFrequency(self.omega_m));
        }
        for (field, value) in [
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("eps", self.eps),
            ("n_th", self.n_th),
        ] {
            if value < 0.0 {
                return Err(ParamError::NegativeRate { field, value });
            }
        }
        Ok(match units {
            Units::Normalized => self,
            Units::Raw => self.normalized(),
        })
    }

    /// Divides every rate by `omega_m` and sets `omega_m = 1`. `n_th` is
    /// dimensionless and left alone.
    pub fn normalized(self) -> PhysParams {
        let w = self.omega_m;
        PhysParams {
            omega_m: 1.0,
            delta: self.delta / w,
            kappa: self.kappa / w,
            gamma: self.gamma / w,
            g: self.g / w,
            eps: self.eps / w,
            n_th: self.n_th,
        }
    }

    /// Inverse of [`normalized`](Self::normalized) for a given raw `omega_m`.
    pub fn to_raw(self, omega_m: f64) -> PhysParams {
        let s = omega_m / self.omega_m;
        PhysParams {
            omega_m,
            delta: self.delta * s,
            kappa: self.kappa * s,
            gamma: self.gamma * s,
            g: self.g * s,
            eps: self.eps * s,
            n_th: self.n_th,
        }
    }

    /// Mechanical quality factor `omega_m / gamma` (infinite for `gamma = 0`).
    pub fn q_m(&self) -> f64 {
        self.omega_m / self.gamma
    }
}

/// A scalar parameter that sweeps and scans can vary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamField {
    Delta,
    Kappa,
    Gamma,
    G,
    Eps,
    NTh,
}

impl ParamField {
    pub const ALL: [ParamField; 6] = [
        ParamField::Delta,
        ParamField::Kappa,
        ParamField::Gamma,
        ParamField::G,
        ParamField::Eps,
        ParamField::NTh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamField::Delta => "delta",
            ParamField::Kappa => "kappa",
            ParamField::Gamma => "gamma",
            ParamField::G => "g",
            ParamField::Eps => "eps",
            ParamField::NTh => "n_th",
        }
    }

    pub fn parse(name: &str) -> Option<ParamField> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    pub fn get(self, p: &PhysParams) -> f64 {
        match self {
            ParamField::Delta => p.delta,
            ParamField::Kappa => p.kappa,
            ParamField::Gamma => p.gamma,
            ParamField::G => p.g,
            ParamField::Eps => p.eps,
            ParamField::NTh => p.n_th,
        }
    }

    pub fn with(self, p: PhysParams, value: f64) -> PhysParams {
        let mut q = p;
        match self {
            ParamField::Delta => q.delta = value,
            ParamField::Kappa => q.kappa = value,
            ParamField::Gamma => q.gamma = value,
            ParamField::G => q.g = value,
            ParamField::Eps => q.eps = value,
            ParamField::NTh => q.n_th = value,
        }
        q
    }
}

/// Centralized solver tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative imaginary part below which a cubic root counts as real.
    pub root_realness: f64,
    /// Relative separation below which two roots are flagged degenerate.
    pub root_degeneracy: f64,
    /// Relative residual accepted for steady-state linear solves.
    pub linear_residual: f64,
    /// Relative tolerance of the classical mean-field integrator.
    pub ode_rtol_classical: f64,
    /// Relative tolerance of the second-moment integrator.
    pub ode_rtol_moments: f64,
    /// Eigenvalue band around zero treated as marginal.
    pub stability_band: f64,
    /// Condition number above which the moment drift is singular.
    pub max_condition: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    root_realness: 1e-9,
    root_degeneracy: 1e-7,
    linear_residual: 1e-10,
    ode_rtol_classical: 1e-10,
    ode_rtol_moments: 1e-8,
    stability_band: 1e-9,
    max_condition: 1e14,
};
