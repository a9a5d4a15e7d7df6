use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Pressure conversion applied at the mechanical-equilibrium boundary.
pub const MMHG_PER_KPA: f64 = 7.5006;

/// The four dimensionless correction factors of the generalized one-fiber model.
///
/// `alpha` and `beta` shape the stress-pressure ratio `2α + 3β V/Vw`;
/// `gamma` and `lambda` scale the passive stiffness pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionFactors<T> {
    pub alpha: T,
    pub beta: T,
    pub gamma: T,
    pub lambda: T,
}

impl<T: Real> CorrectionFactors<T> {
    pub fn new(alpha: T, beta: T, gamma: T, lambda: T) -> Self {
        Self {
            alpha,
            beta,
            gamma,
            lambda,
        }
    }

    pub fn unity() -> Self {
        Self::new(T::one(), T::one(), T::one(), T::one())
    }

    /// Factors that reproduce the cylindrical-shell relation `1 + 3V/Vw`.
    pub fn cylindrical() -> Self {
        Self::new(T::lit(0.5), T::one(), T::one(), T::one())
    }

    pub fn from_array(a: [T; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [T; 4] {
        [self.alpha, self.beta, self.gamma, self.lambda]
    }

    /// Checks `β > 0` and a positive stress-pressure ratio on `[0, v_ratio_max]`.
    pub fn validate(&self, v_ratio_max: T) -> Result<()> {
        let arr = self.to_array();
        if arr.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite correction factor".into()));
        }
        if !(self.beta > T::zero()) {
            return Err(Error::Domain(format!("beta must be positive, got {}", self.beta)));
        }
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let lo = two * self.alpha;
        let hi = two * self.alpha + three * self.beta * v_ratio_max;
        if !(lo > T::zero() && hi > T::zero()) {
            return Err(Error::Domain(
                "stress-pressure ratio not positive over the volume range".into(),
            ));
        }
        if !(self.gamma > T::zero() && self.lambda > T::zero()) {
            return Err(Error::Domain("stiffness factors must be positive".into()));
        }
        Ok(())
    }
}

/// Closed-loop arterial/venous compartment parameters.
///
/// Volumes in ml, compliances in ml/mmHg, resistances in mmHg·ms/ml.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirculationParameters<T> {
    #[serde(rename = "Vart0")]
    pub vart0: T,
    #[serde(rename = "Vven0")]
    pub vven0: T,
    #[serde(rename = "Cart")]
    pub cart: T,
    #[serde(rename = "Cven")]
    pub cven: T,
    #[serde(rename = "Rart")]
    pub rart: T,
    #[serde(rename = "Rven")]
    pub rven: T,
    #[serde(rename = "Rper")]
    pub rper: T,
}

impl<T: Real> CirculationParameters<T> {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.vart0, self.vven0, self.cart, self.cven, self.rart, self.rven, self.rper,
        ];
        if all.iter().all(|v| *v > T::zero() && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Invalid("circulation parameters must be strictly positive".into()))
        }
    }

    #[inline]
    pub fn arterial_pressure(&self, vart: T) -> T {
        (vart - self.vart0) / self.cart
    }

    #[inline]
    pub fn venous_pressure(&self, vven: T) -> T {
        (vven - self.vven0) / self.cven
    }
}

/// Reduced-order model parameters. Lengths in µm, times in ms, stresses in kPa.
///
/// `tp0` and `cp` are the passive stiffnesses before correction; the model uses
/// `γ·tp0` and `λ·cp` (see [`ParameterAdapter`]). `ea` has units 1/µm so that
/// `Ea (ls − lc)` is dimensionless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RomParameters<T> {
    #[serde(rename = "V0")]
    pub v0: T,
    #[serde(rename = "Vw")]
    pub vw: T,
    pub ls0: T,
    pub lc0: T,
    #[serde(rename = "Tp0")]
    pub tp0: T,
    pub cp: T,
    #[serde(rename = "T0")]
    pub t0: T,
    pub al: T,
    #[serde(rename = "Ea")]
    pub ea: T,
    #[serde(rename = "v0")]
    pub v_contraction: T,
    pub taur: T,
    pub taud: T,
    pub b: T,
    pub ld: T,
    pub tcycle: T,
    pub tact: T,
    pub circ: CirculationParameters<T>,
}

impl<T: Real> RomParameters<T> {
    pub fn validate(&self) -> Result<()> {
        let z = T::zero();
        if !(self.vw > z && self.v0 > z && self.ls0 > z) {
            return Err(Error::Invalid("V0, Vw and ls0 must be positive".into()));
        }
        if !(self.tcycle > self.tact && self.tact >= z) {
            return Err(Error::Invalid("require tcycle > tact >= 0".into()));
        }
        if !(self.taur > z && self.taud > z) {
            return Err(Error::Invalid("twitch time constants must be positive".into()));
        }
        self.circ.validate()
    }

    /// Copy with geometry volumes replaced.
    pub fn with_volumes(mut self, v0: T, vw: T) -> Self {
        self.v0 = v0;
        self.vw = vw;
        self
    }

    /// Passive stiffness pair after applying `γ` and `λ`.
    pub fn corrected_stiffness(&self, factors: &CorrectionFactors<T>) -> (T, T) {
        (factors.gamma * self.tp0, factors.lambda * self.cp)
    }

    pub fn cast<U: Real>(&self) -> RomParameters<U> {
        let c = |x: T| U::lit(x.as_f64());
        RomParameters {
            v0: c(self.v0),
            vw: c(self.vw),
            ls0: c(self.ls0),
            lc0: c(self.lc0),
            tp0: c(self.tp0),
            cp: c(self.cp),
            t0: c(self.t0),
            al: c(self.al),
            ea: c(self.ea),
            v_contraction: c(self.v_contraction),
            taur: c(self.taur),
            taud: c(self.taud),
            b: c(self.b),
            ld: c(self.ld),
            tcycle: c(self.tcycle),
            tact: c(self.tact),
            circ: CirculationParameters {
                vart0: c(self.circ.vart0),
                vven0: c(self.circ.vven0),
                cart: c(self.circ.cart),
                cven: c(self.circ.cven),
                rart: c(self.circ.rart),
                rven: c(self.circ.rven),
                rper: c(self.circ.rper),
            },
        }
    }
}

/// Linear map from continuum passive stiffnesses to the one-fiber pair:
/// `Tp0 = γ a0`, `cp = 2λ (a1 − a2/2 + a3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterAdapter<T> {
    pub a0: T,
    pub a1: T,
    pub a2: T,
    pub a3: T,
}

impl<T: Real> ParameterAdapter<T> {
    /// Uncorrected `(Tp0, cp)`; the correction factors enter later.
    pub fn base_stiffness(&self) -> (T, T) {
        let two = T::lit(2.0);
        (self.a0, two * (self.a1 - self.a2 / two + self.a3))
    }

    pub fn corrected(&self, gamma: T, lambda: T) -> (T, T) {
        let (tp0, cp) = self.base_stiffness();
        (gamma * tp0, lambda * cp)
    }
}

/// Time stepping and initialization settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSettings<T> {
    /// Time step (ms).
    pub dt: T,
    pub n_cycles: usize,
    /// Absolute tolerance of the per-step volume solve (ml).
    pub volume_tol: T,
    /// End-diastolic pressure used to initialize (mmHg).
    pub p_ed: T,
    /// Arterial pressure at initialization (mmHg).
    pub p_art_init: T,
    /// Upper limit of the initialization bracket as a multiple of V0.
    pub v_max_factor: T,
}

/// Versioned on-disk parameter file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterFile {
    pub schema_version: u32,
    pub rom: RomParameters<f64>,
    pub simulation: SimulationSettings<f64>,
}

const DEFAULT_PARAMETERS: &str = include_str!("../../data/default_params.json");

impl ParameterFile {
    pub const SCHEMA_VERSION: u32 = 1;

    /// Parameter set shipped with the crate.
    pub fn shipped_default() -> Self {
        serde_json::from_str(DEFAULT_PARAMETERS).expect("shipped parameter file parses")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ParameterFile = serde_json::from_str(text)?;
        if file.schema_version != Self::SCHEMA_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported parameter schema version {}",
                file.schema_version
            )));
        }
        file.rom.validate()?;
        Ok(file)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
