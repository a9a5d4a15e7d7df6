//! Pointwise constitutive and kinematic relations of the one-fiber model.

use crate::error::{Error, Result};
use crate::real::Real;

use super::params::{CorrectionFactors, RomParameters};

/// Generalized stress-pressure ratio `2α + 3β v`, with `v = V/Vw`.
#[inline]
pub fn f_generalized<T: Real>(v_ratio: T, alpha: T, beta: T) -> T {
    T::lit(2.0) * alpha + T::lit(3.0) * beta * v_ratio
}

/// Cylindrical-shell relation `1 + 3v`.
#[inline]
pub fn f_cylindrical<T: Real>(v_ratio: T) -> T {
    T::one() + T::lit(3.0) * v_ratio
}

/// Thick-walled rotationally symmetric relation `3 / ln(1 + 1/v)`.
pub fn f_rsym<T: Real>(v_ratio: T) -> Result<T> {
    if !(v_ratio > T::zero()) {
        return Err(Error::Domain(format!(
            "f_rsym requires a positive volume ratio, got {v_ratio}"
        )));
    }
    Ok(T::lit(3.0) / (T::one() + v_ratio.recip()).ln())
}

/// Slope of [`f_rsym`].
pub fn f_rsym_derivative<T: Real>(v_ratio: T) -> Result<T> {
    let ln = (T::one() + v_ratio.recip()).ln();
    if !(v_ratio > T::zero()) {
        return Err(Error::Domain("f_rsym derivative at nonpositive ratio".into()));
    }
    Ok(T::lit(3.0) / (ln * ln * v_ratio * v_ratio * (T::one() + v_ratio.recip())))
}

/// First-order expansion of [`f_rsym`] at `eta`, returned as
/// `(intercept, slope)` of `f ≈ intercept + slope·v`.
pub fn taylor_coefficients<T: Real>(eta: T) -> Result<(T, T)> {
    if !(eta > T::zero()) {
        return Err(Error::Domain(format!("expansion point must be positive, got {eta}")));
    }
    let three = T::lit(3.0);
    let ln = (T::one() + eta.recip()).ln();
    let eta_ln = eta * ln;
    let beta_star = three / (eta_ln * eta_ln) / (T::one() + eta.recip());
    let alpha_star = three / ln - eta * beta_star;
    Ok((alpha_star, beta_star))
}

/// Logarithmic fiber strain `(1/3β) ln[f(V/Vw) / f(V0/Vw)]`.
pub fn fiber_strain<T: Real>(volume: T, v0: T, vw: T, alpha: T, beta: T) -> Result<T> {
    let num = f_generalized(volume / vw, alpha, beta);
    let den = f_generalized(v0 / vw, alpha, beta);
    if !(num > T::zero() && den > T::zero()) {
        return Err(Error::Domain(format!(
            "fiber strain log argument nonpositive (f(V)={num}, f(V0)={den})"
        )));
    }
    Ok((num / den).ln() / (T::lit(3.0) * beta))
}

/// `dε/dV = 1 / (Vw f(V/Vw))`.
pub fn fiber_strain_derivative<T: Real>(volume: T, vw: T, alpha: T, beta: T) -> T {
    (vw * f_generalized(volume / vw, alpha, beta)).recip()
}

#[inline]
pub fn sarcomere_length<T: Real>(eps_fiber: T, ls0: T) -> T {
    ls0 * eps_fiber.exp()
}

/// Exponential passive stress, zero below the reference sarcomere length.
#[inline]
pub fn passive_fiber_stress<T: Real>(ls: T, ls0: T, tp0: T, cp: T) -> T {
    if ls <= ls0 {
        T::zero()
    } else {
        tp0 * ((cp * (ls - ls0)).exp() - T::one())
    }
}

/// Isometric stress-length function `T0 tanh²(al (lc − lc0))`.
#[inline]
pub fn f_iso<T: Real>(lc: T, lc0: T, t0: T, al: T) -> T {
    if lc < lc0 {
        T::zero()
    } else {
        let th = (al * (lc - lc0)).tanh();
        t0 * th * th
    }
}

/// Twitch shape in `[0, 1]`. A nonpositive duration `b (ls − ld)` yields zero.
#[inline]
pub fn f_twitch<T: Real>(ta: T, ls: T, taur: T, taud: T, b: T, ld: T) -> T {
    let t_max = b * (ls - ld);
    if t_max <= T::zero() || ta < T::zero() || ta > t_max {
        return T::zero();
    }
    let rise = (ta / taur).tanh();
    let decay = ((t_max - ta) / taud).tanh();
    rise * rise * decay * decay
}

/// Active fiber stress `f_iso(lc) f_twitch(ta, ls) Ea (ls − lc)`.
#[inline]
pub fn active_fiber_stress<T: Real>(ls: T, lc: T, ta: T, p: &RomParameters<T>) -> T {
    let twitch = f_twitch(ta, ls, p.taur, p.taud, p.b, p.ld);
    if twitch == T::zero() {
        return T::zero();
    }
    f_iso(lc, p.lc0, p.t0, p.al) * twitch * p.ea * (ls - lc)
}

/// Fiber-level quantities evaluated at one volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberState<T> {
    pub strain: T,
    pub sarcomere_length: T,
    /// Total fiber stress (kPa).
    pub stress: T,
    /// Stress-pressure ratio `f(V/Vw)`.
    pub ratio: T,
}

/// Composes strain, sarcomere length and passive + active stress at volume `V`.
///
/// `lc = None` means the contractile element follows the sarcomere (before
/// activation), which makes the active stress vanish.
pub fn fiber_state<T: Real>(
    volume: T,
    lc: Option<T>,
    ta: T,
    p: &RomParameters<T>,
    factors: &CorrectionFactors<T>,
) -> Result<FiberState<T>> {
    let strain = fiber_strain(volume, p.v0, p.vw, factors.alpha, factors.beta)?;
    let ls = sarcomere_length(strain, p.ls0);
    let (tp0, cp) = p.corrected_stiffness(factors);
    let passive = passive_fiber_stress(ls, p.ls0, tp0, cp);
    let active = match lc {
        Some(lc) => active_fiber_stress(ls, lc, ta, p),
        None => T::zero(),
    };
    Ok(FiberState {
        strain,
        sarcomere_length: ls,
        stress: ls / p.ls0 * (passive + active),
        ratio: f_generalized(volume / p.vw, factors.alpha, factors.beta),
    })
}

/// Total fiber stress (kPa) at volume `V`.
pub fn total_fiber_stress<T: Real>(
    volume: T,
    lc: Option<T>,
    ta: T,
    p: &RomParameters<T>,
    factors: &CorrectionFactors<T>,
) -> Result<T> {
    fiber_state(volume, lc, ta, p, factors).map(|s| s.stress)
}

/// Mechanical equilibrium `p = τ_fiber / f(V/Vw)`, converted to mmHg.
pub fn cavity_pressure<T: Real>(
    volume: T,
    lc: Option<T>,
    ta: T,
    p: &RomParameters<T>,
    factors: &CorrectionFactors<T>,
) -> Result<T> {
    let s = fiber_state(volume, lc, ta, p, factors)?;
    pressure_from_stress(s.stress, s.ratio)
}

/// `p = τ / f`, kPa to mmHg.
pub fn pressure_from_stress<T: Real>(stress_kpa: T, ratio: T) -> Result<T> {
    if !(ratio > T::zero()) {
        return Err(Error::Domain(format!("stress-pressure ratio {ratio} is not positive")));
    }
    Ok(T::lit(super::params::MMHG_PER_KPA) * stress_kpa / ratio)
}

/// One explicit step of the contractile-element ODE `dlc/dt = [Ea(ls − lc) − 1] v0`.
///
/// `t_in_cycle` is the time within the current cycle; before `tact` the
/// contractile length is slaved to the sarcomere length.
#[inline]
pub fn contractile_step<T: Real>(
    lc: T,
    ls: T,
    dt: T,
    ea: T,
    v0: T,
    t_in_cycle: T,
    tact: T,
) -> T {
    if t_in_cycle < tact {
        ls
    } else {
        lc + dt * contractile_rate(lc, ls, ea, v0)
    }
}

#[inline]
pub fn contractile_rate<T: Real>(lc: T, ls: T, ea: T, v0: T) -> T {
    (ea * (ls - lc) - T::one()) * v0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::onefiber::ParameterFile;
    use approx::assert_relative_eq;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = n + n % 2;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn generalized_relation_examples() {
        assert_relative_eq!(f_generalized(0.345, 0.5, 1.0), 2.035, epsilon = 1e-12);
        assert_relative_eq!(f_generalized(0.0, 0.5, 1.0), 1.0, epsilon = 1e-15);
        let lin = f_generalized(0.345, 1.0002 / 2.0, 3.492 / 3.0);
        assert_relative_eq!(lin, 2.2047, epsilon = 5e-4);
        let rsym = f_rsym(0.345f64).unwrap();
        assert!((lin - rsym).abs() / rsym < 1e-3);
    }

    #[test]
    fn cylindrical_is_special_case_of_generalized() {
        for i in 0..100 {
            let v = i as f64 * 0.013;
            assert_eq!(f_cylindrical(v), f_generalized(v, 0.5, 1.0));
        }
        assert_eq!(f_cylindrical(0.0), 1.0);
        assert_relative_eq!(f_cylindrical(1.0 / 3.0), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn rsym_value_and_limits() {
        assert!((f_rsym(0.345f64).unwrap() - 2.2049).abs() < 1e-3);
        assert!(f_rsym(1e-12).unwrap() < 0.12);
        assert!(f_rsym(0.0).is_err());
        assert!(f_rsym(-1.0).is_err());
        // spherical shell: ratio equals 3 / ∫_{v}^{v+1} du/u
        let v: f64 = 0.345;
        let integral = simpson(|u| 1.0 / u, v, v + 1.0, 2000);
        assert_relative_eq!(f_rsym(v).unwrap(), 3.0 / integral, epsilon = 1e-9);
    }

    #[test]
    fn taylor_coefficients_at_physiological_point() {
        let (a, b) = taylor_coefficients(0.345f64).unwrap();
        assert!((a - 1.0).abs() < 1e-2, "alpha* = {a}");
        assert!((b - 3.5).abs() < 1e-2, "beta* = {b}");
        assert!(taylor_coefficients(0.0).is_err());
    }

    #[test]
    fn taylor_coefficients_large_eta_limit() {
        let (a, b) = taylor_coefficients(1e6f64).unwrap();
        assert!((a - 1.5).abs() < 1e-3);
        assert!((b - 3.0).abs() < 1e-3);
    }

    #[test]
    fn taylor_line_is_tangent() {
        for &eta in &[0.15f64, 0.345, 0.7, 2.0] {
            let (a, b) = taylor_coefficients(eta).unwrap();
            let f = f_rsym(eta).unwrap();
            assert!((a + b * eta - f).abs() < 1e-9);
            assert!((b - f_rsym_derivative(eta).unwrap()).abs() < 1e-9);
            // slope against central differences
            let h = 1e-6;
            let fd = (f_rsym(eta + h).unwrap() - f_rsym(eta - h).unwrap()) / (2.0 * h);
            assert!((fd - b).abs() < 1e-7);
        }
    }

    #[test]
    fn fiber_strain_examples() {
        assert_eq!(fiber_strain(44.0, 44.0, 136.0, 0.5, 1.0).unwrap(), 0.0);
        let e = fiber_strain(88.0, 44.0, 136.0, 0.5, 1.0).unwrap();
        // quadrature oracle: ε = ∫ dv / f(v)
        let q = simpson(|v| 1.0 / f_generalized(v, 0.5, 1.0), 44.0 / 136.0, 88.0 / 136.0, 400);
        assert_relative_eq!(e, q, epsilon = 1e-10);
        assert!((e - 0.1334).abs() < 2e-4, "{e}");
        assert!(fiber_strain(10.0, 44.0, 136.0, -1.0, 0.1).is_err());
    }

    #[test]
    fn fiber_strain_matches_quadrature_for_general_factors() {
        for &(a, b) in &[(0.8, 1.2), (1.0, 1.0), (1.3, 0.4)] {
            for &v in &[20.0, 60.0, 150.0] {
                let e = fiber_strain(v, 44.0, 136.0, a, b).unwrap();
                let q = simpson(|x| 1.0 / f_generalized(x, a, b), 44.0 / 136.0, v / 136.0, 2000);
                assert!((e - q).abs() < 1e-8, "a={a} b={b} v={v}");
            }
        }
    }

    #[test]
    fn fiber_strain_derivative_matches_finite_difference() {
        let (a, b) = (0.9, 1.1);
        for &v in &[30.0, 80.0, 140.0] {
            let h = 1e-4;
            let fd: f64 = (fiber_strain(v + h, 44.0, 136.0, a, b).unwrap()
                - fiber_strain(v - h, 44.0, 136.0, a, b).unwrap())
                / (2.0 * h);
            let an = fiber_strain_derivative(v, 136.0, a, b);
            assert!(((fd - an) / an).abs() < 1e-6);
            assert!(an > 0.0);
        }
    }

    #[test]
    fn sarcomere_and_passive() {
        assert_eq!(sarcomere_length(0.0, 1.9), 1.9);
        assert_relative_eq!(sarcomere_length(2f64.ln(), 1.9), 3.8, epsilon = 1e-14);
        assert_eq!(passive_fiber_stress(1.9, 1.9, 0.5, 8.0), 0.0);
        assert_eq!(passive_fiber_stress(1.7, 1.9, 0.5, 8.0), 0.0);
        assert_relative_eq!(
            passive_fiber_stress(1.9 + 1.0 / 8.0, 1.9, 0.5, 8.0),
            0.5 * (std::f64::consts::E - 1.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn isometric_and_twitch() {
        assert_eq!(f_iso(1.5, 1.5, 180.0, 2.0), 0.0);
        assert_eq!(f_iso(1.2, 1.5, 180.0, 2.0), 0.0);
        assert!((f_iso(100.0f64, 1.5, 180.0, 2.0) - 180.0).abs() < 1e-9);
        assert_eq!(f_twitch(-1.0, 2.0, 75.0, 150.0, 150.0, -0.4), 0.0);
        assert_eq!(f_twitch(0.0, 2.0, 75.0, 150.0, 150.0, -0.4), 0.0);
        let t_max = 150.0 * (2.0 + 0.4);
        assert_eq!(f_twitch(t_max, 2.0, 75.0, 150.0, 150.0, -0.4), 0.0);
        let mid = f_twitch(150.0, 2.0, 75.0, 150.0, 150.0, -0.4);
        assert!(mid > 0.0 && mid <= 1.0);
        // degenerate duration
        assert_eq!(f_twitch(10.0, -1.0, 75.0, 150.0, 150.0, -0.4), 0.0);
    }

    #[test]
    fn active_stress_signs() {
        let p = ParameterFile::shipped_default().rom;
        assert_eq!(active_fiber_stress(2.1, 2.05, -5.0, &p), 0.0);
        assert_eq!(active_fiber_stress(2.1, 2.1, 100.0, &p), 0.0);
        assert!(active_fiber_stress(2.1, 2.05, 100.0, &p) > 0.0);
        assert!(active_fiber_stress(2.1, 2.15, 100.0, &p) < 0.0);
    }

    #[test]
    fn pressure_at_stress_free_volume_is_zero() {
        let p = ParameterFile::shipped_default().rom;
        let f = CorrectionFactors::unity();
        assert_eq!(cavity_pressure(p.v0, None, -1.0, &p, &f).unwrap(), 0.0);
        assert!(cavity_pressure(p.v0 + 5.0, None, -1.0, &p, &f).unwrap() > 0.0);
    }

    #[test]
    fn pressure_scales_linearly_with_stress() {
        let p1 = pressure_from_stress(3.0, 2.5).unwrap();
        let p2 = pressure_from_stress(6.0, 2.5).unwrap();
        assert_relative_eq!(p2, 2.0 * p1, epsilon = 1e-14);
        assert!(pressure_from_stress(1.0, 0.0).is_err());
    }

    #[test]
    fn passive_stress_increases_with_volume() {
        let p = ParameterFile::shipped_default().rom;
        let f = CorrectionFactors::unity();
        let mut last = -1.0;
        for i in 0..200 {
            let v = p.v0 + i as f64 * 0.7;
            let s = total_fiber_stress(v, None, -1.0, &p, &f).unwrap();
            assert!(s >= last);
            if i > 0 {
                assert!(s > last);
            }
            last = s;
        }
    }

    #[test]
    fn contractile_dynamics() {
        assert_eq!(contractile_step(1.8, 2.0, 2.0, 20.0, 0.0075, 10.0, 50.0), 2.0);
        let eq: f64 = 2.0 - 1.0 / 20.0;
        assert!(contractile_rate(eq, 2.0, 20.0, 0.0075).abs() < 1e-15);
        assert!(contractile_step(1.9, 2.0, 2.0, 20.0, 0.0075, 100.0, 50.0) > 1.9);
    }

    #[test]
    fn generic_over_f32() {
        let r: f32 = f_rsym(0.345f32).unwrap();
        assert!((r - 2.2049).abs() < 1e-3);
        let (a, b) = taylor_coefficients(0.345f32).unwrap();
        assert!((a - 1.0).abs() < 1e-2 && (b - 3.5).abs() < 1e-2);
    }
}
