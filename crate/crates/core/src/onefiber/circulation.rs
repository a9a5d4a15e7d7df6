use crate::real::Real;

use super::params::CirculationParameters;

/// Snapshot of the coupled ventricle + circulation state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CardiacState<T> {
    /// Absolute time (ms).
    pub t: T,
    /// Cavity volume (ml).
    pub v: T,
    /// Cavity pressure (mmHg).
    pub p: T,
    /// Contractile length (µm).
    pub lc: T,
    pub vart: T,
    pub vven: T,
}

impl<T: Real> CardiacState<T> {
    pub fn total_volume(&self) -> T {
        self.v + self.vart + self.vven
    }
}

/// Open/closed state of the two ideal-diode valves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ValveState {
    pub aortic_open: bool,
    pub mitral_open: bool,
}

impl ValveState {
    /// Both valves closed: isovolumetric contraction or relaxation.
    pub fn isovolumetric(&self) -> bool {
        !self.aortic_open && !self.mitral_open
    }
}

/// Result of advancing the compartments over one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CirculationUpdate<T> {
    pub vart: T,
    pub vven: T,
    /// Aortic valve flow, ventricle to arteries (ml/ms).
    pub q_art: T,
    /// Mitral valve flow, veins to ventricle (ml/ms).
    pub q_ven: T,
    /// Peripheral flow, arteries to veins (ml/ms).
    pub q_per: T,
}

impl<T: Real> CirculationUpdate<T> {
    pub fn valves(&self) -> ValveState {
        ValveState {
            aortic_open: self.q_art > T::zero(),
            mitral_open: self.q_ven > T::zero(),
        }
    }

    /// Net inflow into the ventricle over the step.
    pub fn ventricular_inflow(&self) -> T {
        self.q_ven - self.q_art
    }
}

/// Linearized view of one circulation step as a function of the end-of-step
/// cavity pressure.
///
/// Peripheral flow is taken from the start-of-step compartment pressures;
/// valve flows are backward-Euler in closed form, so the only remaining
/// unknown is the cavity pressure.
#[derive(Debug, Clone, Copy)]
pub struct CirculationStep<T> {
    vart: T,
    vven: T,
    dt: T,
    q_per: T,
    p_art_closed: T,
    p_ven_closed: T,
    g_art: T,
    g_ven: T,
}

impl<T: Real> CirculationStep<T> {
    pub fn new(vart: T, vven: T, circ: &CirculationParameters<T>, dt: T) -> Self {
        let q_per = (circ.arterial_pressure(vart) - circ.venous_pressure(vven)) / circ.rper;
        Self {
            vart,
            vven,
            dt,
            q_per,
            p_art_closed: circ.arterial_pressure(vart - dt * q_per),
            p_ven_closed: circ.venous_pressure(vven + dt * q_per),
            g_art: (circ.rart + dt / circ.cart).recip(),
            g_ven: (circ.rven + dt / circ.cven).recip(),
        }
    }

    /// Valve flows for end-of-step cavity pressure `p`.
    #[inline]
    pub fn flows(&self, p: T) -> (T, T) {
        let z = T::zero();
        let q_art = self.g_art * (p - self.p_art_closed).max(z);
        let q_ven = self.g_ven * (self.p_ven_closed - p).max(z);
        (q_art, q_ven)
    }

    /// Derivative of ventricular inflow with respect to cavity pressure.
    #[inline]
    pub fn inflow_slope(&self, p: T) -> T {
        let mut s = T::zero();
        if p > self.p_art_closed {
            s = s - self.g_art;
        }
        if p < self.p_ven_closed {
            s = s - self.g_ven;
        }
        s
    }

    pub fn finish(&self, p: T) -> CirculationUpdate<T> {
        let (q_art, q_ven) = self.flows(p);
        CirculationUpdate {
            vart: self.vart + self.dt * (q_art - self.q_per),
            vven: self.vven + self.dt * (self.q_per - q_ven),
            q_art,
            q_ven,
            q_per: self.q_per,
        }
    }
}

/// Instantaneous `(q_art, q_ven, q_per)` for a state.
pub fn instantaneous_flows<T: Real>(state: &CardiacState<T>, circ: &CirculationParameters<T>) -> (T, T, T) {
    let z = T::zero();
    let p_art = circ.arterial_pressure(state.vart);
    let p_ven = circ.venous_pressure(state.vven);
    (
        (state.p - p_art).max(z) / circ.rart,
        (p_ven - state.p).max(z) / circ.rven,
        (p_art - p_ven) / circ.rper,
    )
}

/// Advances the compartments given the end-of-step cavity pressure.
pub fn circulation_step<T: Real>(
    state: &CardiacState<T>,
    p_next: T,
    circ: &CirculationParameters<T>,
    dt: T,
) -> CirculationUpdate<T> {
    CirculationStep::new(state.vart, state.vven, circ, dt).finish(p_next)
}
