//! Closed-form physics of one pulse period.
//!
//! Units throughout: angular frequencies in rad/ns, times in ns, rates in
//! 1/ns. Ordinary frequencies (GHz) are converted with [`ghz_to_rad_per_ns`]
//! at the configuration boundary and nowhere else.
//!
//! The count rate is the steady-state trion excitation probability of the
//! pump / rotate / precess / rotate cycle:
//!
//! ```text
//! C(w, tau) = s_p (1 - q)(1 - cos th) / (1 - q cos th),
//!     q = exp(-beta(w) T),  th = (w0 + w) tau,
//!     beta(w) = beta0 exp(-w^2 / (2 sigma^2)).
//! ```
//!
//! [`count_rate`] evaluates it in the cancellation-free form
//! `s_p a b / (a + q b)` with `a = 1 - q` (via `expm1`) and
//! `b = 1 - cos th = 2 sin^2(th / 2)`. The single indeterminate point
//! `a = b = 0` resolves to 0, its limit along every path.

use std::f64::consts::{PI, TAU};

use crate::error::{invalid, Error, Result};
use crate::lattice::Lattice;

/// Vacuum permeability [T m / A], CODATA 2018.
pub const MU_0: f64 = 1.256_637_062_12e-6;
/// Bohr magneton [J / T], CODATA 2018.
pub const MU_B: f64 = 9.274_010_078_3e-24;

pub fn ghz_to_rad_per_ns(f_ghz: f64) -> f64 {
    TAU * f_ghz
}

pub fn rad_per_ns_to_ghz(omega: f64) -> f64 {
    omega / TAU
}

/// Pulse-sequence and optical-pumping constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Bare electron Larmor frequency [rad/ns].
    pub omega0: f64,
    /// Optical pumping duration [ns].
    pub t_pump: f64,
    /// Peak pumping rate [1/ns].
    pub beta0: f64,
    /// Width of the Gaussian pumping profile [rad/ns].
    pub sigma: f64,
    /// Saturation polarization, 1/2 for perfect pumping.
    pub s_p: f64,
    /// Sequence repetition period [ns].
    pub t_rep: f64,
}

impl ModelParams {
    /// Pumping time 26 ns with peak rate 3/T, profile width 2 pi x 1.6 GHz,
    /// perfect pumping and a 143 ns repetition period.
    ///
    /// The bare Larmor frequency is not a measured input; 2 pi x 25 GHz is
    /// an electron with |g| of about 0.45 at 4 T.
    pub fn defaults() -> Self {
        let t_pump = 26.0;
        Self {
            omega0: ghz_to_rad_per_ns(25.0),
            t_pump,
            beta0: 3.0 / t_pump,
            sigma: ghz_to_rad_per_ns(1.6),
            s_p: 0.5,
            t_rep: 143.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_pump > 0.0 && self.t_pump.is_finite()) {
            return Err(invalid("model.T", "T > 0 is required"));
        }
        if !(self.beta0 >= 0.0 && self.beta0.is_finite()) {
            return Err(invalid("model.beta0", "beta0 >= 0 is required"));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid("model.sigma_ghz", "sigma > 0 is required"));
        }
        if !(self.s_p > 0.0 && self.s_p <= 0.5) {
            return Err(invalid("model.s_p", "0 < s_p <= 1/2 is required"));
        }
        if !(self.t_rep >= self.t_pump) {
            return Err(invalid("model.t_rep", "t_rep >= T is required"));
        }
        if !self.omega0.is_finite() {
            return Err(invalid("model.omega0_ghz", "omega0 must be finite"));
        }
        Ok(())
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::defaults()
    }
}

/// Optical pumping rate `beta0 exp(-w^2 / 2 sigma^2)` [1/ns].
pub fn pump_rate(omega: f64, p: &ModelParams) -> f64 {
    let z = omega / p.sigma;
    p.beta0 * (-0.5 * z * z).exp()
}

/// Steady-state count rate for Overhauser shift `omega` and delay `tau`.
pub fn count_rate(omega: f64, tau: f64, p: &ModelParams) -> f64 {
    let x = pump_rate(omega, p) * p.t_pump;
    let a = -(-x).exp_m1();
    let q = (-x).exp();
    let half = 0.5 * (p.omega0 + omega) * tau;
    let b = 2.0 * half.sin().powi(2);
    let den = a + q * b;
    if den > 0.0 {
        p.s_p * a * b / den
    } else {
        0.0
    }
}

/// The Ramsey factor `1 - cos((w0 + w) tau)`: the only place the bare and
/// nuclear frequencies enter, and only through their sum.
pub fn ramsey_factor(omega: f64, tau: f64, p: &ModelParams) -> f64 {
    let half = 0.5 * (p.omega0 + omega) * tau;
    2.0 * half.sin().powi(2)
}

/// `C`, `dC/dw` and `d2C/dw2` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountDerivatives {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
}

/// Analytic first and second derivatives of [`count_rate`] in `omega`.
///
/// On the indeterminate locus (`beta T` underflowed and `cos = 1`) all three
/// values are reported as 0.
pub fn count_rate_derivatives(omega: f64, tau: f64, p: &ModelParams) -> CountDerivatives {
    let inv_s2 = 1.0 / (p.sigma * p.sigma);
    let x = pump_rate(omega, p) * p.t_pump;
    let x1 = -omega * inv_s2 * x;
    let x2 = (omega * omega * inv_s2 - 1.0) * inv_s2 * x;

    let q = (-x).exp();
    let a = -(-x).exp_m1();
    let a1 = q * x1;
    let a2 = q * (x2 - x1 * x1);
    let q1 = -a1;
    let q2 = -a2;

    let th = (p.omega0 + omega) * tau;
    let (s, c) = th.sin_cos();
    let b = 2.0 * (0.5 * th).sin().powi(2);
    let b1 = tau * s;
    let b2 = tau * tau * c;

    let num = a * b;
    let num1 = a1 * b + a * b1;
    let num2 = a2 * b + 2.0 * a1 * b1 + a * b2;
    let den = a + q * b;
    if den <= 0.0 {
        return CountDerivatives {
            value: 0.0,
            d1: 0.0,
            d2: 0.0,
        };
    }
    let den1 = a1 + q1 * b + q * b1;
    let den2 = a2 + q2 * b + 2.0 * q1 * b1 + q * b2;

    let r = num / den;
    let r1 = (num1 - r * den1) / den;
    let r2 = (num2 - 2.0 * r1 * den1 - r * den2) / den;
    CountDerivatives {
        value: p.s_p * r,
        d1: p.s_p * r1,
        d2: p.s_p * r2,
    }
}

/// Electron polarization at the two instants of the pulse sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseMapState {
    /// Polarization at the end of pumping.
    pub s_f: f64,
    /// Polarization after the second rotation, before pumping resumes.
    pub s_i: f64,
}

const PULSE_MAP_TOL: f64 = 1e-15;
const PULSE_MAP_MAX_DOUBLINGS: u32 = 64;

/// Steady state of the one-period electron map, found by iterating it.
///
/// One period sends the post-pumping polarization `s` to
/// `s_p + (s cos th - s_p) q`, an affine map `s -> k s + c`. The iteration
/// runs by repeated squaring (`2^n` periods after `n` doublings), so slowly
/// contracting maps near the `q cos th -> 1` corner still converge in at
/// most 64 doublings. Returns the state and the count `s_f - s_i`.
pub fn pulse_map_fixed_point(omega: f64, tau: f64, p: &ModelParams) -> Result<(PulseMapState, f64)> {
    let q = (-pump_rate(omega, p) * p.t_pump).exp();
    let cos_th = ((p.omega0 + omega) * tau).cos();
    let one_period = |s: f64| p.s_p + (s * cos_th - p.s_p) * q;

    // (gain, offset) of the 2^n-fold composition.
    let mut gain = q * cos_th;
    let mut offset = one_period(0.0);
    let mut s = 0.0_f64;
    let mut residual = f64::INFINITY;
    for _ in 0..PULSE_MAP_MAX_DOUBLINGS {
        s = gain * s + offset;
        residual = (one_period(s) - s).abs();
        if residual <= PULSE_MAP_TOL {
            break;
        }
        offset += gain * offset;
        gain *= gain;
    }
    let state = PulseMapState {
        s_f: s,
        s_i: s * cos_th,
    };
    if residual > PULSE_MAP_TOL {
        return Err(Error::NonConverged { residual });
    }
    // s (1 - cos) rather than s_f - s_i: same value, no cancellation.
    let count = s * ramsey_factor(omega, tau, p);
    Ok((state, count))
}

/// Hole and trion properties entering the golden-rule nuclear flip rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoleNuclearParams {
    /// External magnetic field [T].
    pub b0: f64,
    /// Hole gyromagnetic factor along the growth axis.
    pub g_h: f64,
    /// Trion radiative linewidth, angular [rad/ns].
    pub gamma_rad: f64,
    /// `<|r - r_h|^-3>` averaged over the hole wavefunction [1/nm^3].
    pub inv_r3_avg: f64,
}

impl HoleNuclearParams {
    /// 4 T, linewidth 2 pi x 0.1 GHz, `g_h = 1` and `<r^-3> = 0.6472 nm^-3`.
    ///
    /// Neither `g_h` nor `<r^-3>` is measured. With `g_h = 1` the golden-rule
    /// formula gives 1/(20 ms) at `<r^-3> = 0.64720 nm^-3` (a hole-nucleus
    /// distance of about 1.16 nm), which is the value used here.
    pub fn defaults() -> Self {
        Self {
            b0: 4.0,
            g_h: 1.0,
            gamma_rad: ghz_to_rad_per_ns(0.1),
            inv_r3_avg: 0.6472,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("hole.b0_t", self.b0),
            ("hole.g_h", self.g_h),
            ("hole.linewidth_ghz", self.gamma_rad),
            ("hole.inv_r3_nm3", self.inv_r3_avg),
        ];
        for (name, v) in checks {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be strictly positive"));
            }
        }
        Ok(())
    }
}

impl Default for HoleNuclearParams {
    fn default() -> Self {
        Self::defaults()
    }
}

/// Golden-rule rate [1/ns] at which a trion hole flips one nucleus:
/// `(9 mu0^2 / 128 pi) (mu_B g_h / B0)^2 gamma <r^-3>^2`.
///
/// Evaluated in SI, where the prefactor times `<r^-3>^2` is dimensionless and
/// the rate inherits the units of `gamma`.
pub fn trion_flip_rate(h: &HoleNuclearParams) -> f64 {
    let gamma_per_s = h.gamma_rad * 1e9;
    let inv_r3_per_m3 = h.inv_r3_avg * 1e27;
    let moment = MU_B * h.g_h / h.b0;
    let rate_per_s =
        9.0 * MU_0 * MU_0 / (128.0 * PI) * moment * moment * gamma_per_s * inv_r3_per_m3 * inv_r3_per_m3;
    rate_per_s * 1e-9
}

/// `sum_j Gamma_j A_j^2` [rad^2/ns^3].
pub fn alpha_from_lattice(lat: &Lattice) -> f64 {
    lat.a.iter().zip(&lat.gamma).map(|(a, g)| g * a * a).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> ModelParams {
        ModelParams::defaults()
    }

    #[test]
    fn pump_rate_peak_and_one_sigma() {
        let p = params();
        assert_eq!(pump_rate(0.0, &p), p.beta0);
        assert_relative_eq!(pump_rate(p.sigma, &p), p.beta0 * (-0.5f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(pump_rate(0.0, &p), 3.0 / 26.0, max_relative = 1e-15);
        assert!((pump_rate(0.0, &p) - 0.11538).abs() < 1e-5);
    }

    #[test]
    fn pump_rate_is_even() {
        let p = params();
        for w in [0.3, 1.0, 7.5, 33.0, 120.0] {
            assert_eq!(pump_rate(w, &p), pump_rate(-w, &p));
        }
    }

    #[test]
    fn count_rate_vanishes_when_rotation_is_identity() {
        let p = params();
        let omega = 1.7;
        let tau = 2.0 * TAU / (p.omega0 + omega);
        assert!(count_rate(omega, tau, &p).abs() < 1e-12);
        assert_eq!(count_rate(0.0, 0.0, &p), 0.0);
    }

    #[test]
    fn count_rate_saturates_with_strong_pumping() {
        let p = ModelParams {
            beta0: 1e3,
            ..params()
        };
        let tau = PI / p.omega0;
        assert_relative_eq!(count_rate(0.0, tau, &p), 2.0 * p.s_p, max_relative = 1e-12);
    }

    #[test]
    fn count_rate_at_half_turn_with_beta_t_three() {
        let p = params();
        let tau = PI / p.omega0;
        let e3 = (-3.0f64).exp();
        let expected = 0.5 * (1.0 - e3) * 2.0 / (1.0 + e3);
        assert_relative_eq!(count_rate(0.0, tau, &p), expected, max_relative = 1e-14);
        let (_, via_map) = pulse_map_fixed_point(0.0, tau, &p).unwrap();
        assert_relative_eq!(via_map, expected, max_relative = 1e-13);
    }

    #[test]
    fn indeterminate_point_resolves_to_zero() {
        // beta underflows to exactly zero and cos = 1.
        let p = params();
        let omega = 60.0 * p.sigma;
        assert_eq!(pump_rate(omega, &p), 0.0);
        let tau = TAU / (p.omega0 + omega);
        let c = count_rate(omega, tau, &p);
        assert!(c.is_finite());
        assert!(c.abs() < 1e-12);
        let d = count_rate_derivatives(omega, 0.0, &p);
        assert_eq!((d.value, d.d1, d.d2), (0.0, 0.0, 0.0));
    }

    #[test]
    fn count_rate_decays_far_off_resonance() {
        let p = params();
        assert!(count_rate(12.0 * p.sigma, 0.37, &p) < 1e-20);
    }

    #[test]
    fn pulse_map_identity_rotation_gives_zero_count() {
        let p = params();
        let tau = TAU / p.omega0;
        let (state, count) = pulse_map_fixed_point(0.0, tau, &p).unwrap();
        assert!((state.s_f - state.s_i).abs() < 1e-15);
        assert!(count.abs() < 1e-15);
    }

    #[test]
    fn pulse_map_perfect_repumping() {
        let p = ModelParams {
            beta0: 1e3,
            ..params()
        };
        let tau = 0.123;
        let (state, count) = pulse_map_fixed_point(0.0, tau, &p).unwrap();
        assert_relative_eq!(state.s_f, p.s_p, max_relative = 1e-14);
        let cos = (p.omega0 * tau).cos();
        assert_relative_eq!(count, p.s_p * (1.0 - cos), max_relative = 1e-12);
    }

    #[test]
    fn pulse_map_converges_when_contraction_is_weak() {
        // q cos th = 1 - O(1e-9): plain iteration would need ~1e10 periods.
        let p = params();
        let omega = 5.6 * p.sigma;
        let tau = (TAU + 1e-4) / (p.omega0 + omega);
        let (_, count) = pulse_map_fixed_point(omega, tau, &p).unwrap();
        assert!((count - count_rate(omega, tau, &p)).abs() < 1e-12);
    }

    #[test]
    fn trion_flip_rate_scaling() {
        let h = HoleNuclearParams::defaults();
        let g = trion_flip_rate(&h);
        let twice_b = HoleNuclearParams { b0: 2.0 * h.b0, ..h };
        assert_relative_eq!(trion_flip_rate(&twice_b), g / 4.0, max_relative = 1e-14);
        let twice_gamma = HoleNuclearParams {
            gamma_rad: 2.0 * h.gamma_rad,
            ..h
        };
        assert_relative_eq!(trion_flip_rate(&twice_gamma), 2.0 * g, max_relative = 1e-14);
        let twice_r = HoleNuclearParams {
            inv_r3_avg: 2.0 * h.inv_r3_avg,
            ..h
        };
        assert_relative_eq!(trion_flip_rate(&twice_r), 4.0 * g, max_relative = 1e-14);
    }

    #[test]
    fn trion_flip_rate_defaults_hit_twenty_milliseconds() {
        let g = trion_flip_rate(&HoleNuclearParams::defaults());
        // 1/(20 ms) = 5e-8 per ns
        assert_relative_eq!(g, 5e-8, max_relative = 1e-3);
    }

    #[test]
    fn validation_rejects_bad_params() {
        let mut p = params();
        p.t_pump = -1.0;
        assert!(matches!(p.validate(), Err(Error::InvalidParameter { name: "model.T", .. })));
        let p = ModelParams { s_p: 0.6, ..params() };
        assert!(p.validate().is_err());
        let p = ModelParams { t_rep: 10.0, ..params() };
        assert!(p.validate().is_err());
        assert!(params().validate().is_ok());
        let h = HoleNuclearParams { g_h: 0.0, ..HoleNuclearParams::defaults() };
        assert!(h.validate().is_err());
    }
}
