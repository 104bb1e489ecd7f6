//! Mean-field Overhauser drift
//!
//! ```text
//! dw/dt = g(w) = -kappa w + alpha d2/dw2 [w C(w, tau)]
//! ```
//!
//! with relaxation to quasi-equilibrium and exhaustive root enumeration.
//! Relaxation runs in scaled time `s = kappa t`, where the right-hand side is
//! `-w + (1/rho) d2[wC]` and only the ratio `rho = kappa / alpha` matters.

use std::f64::consts::{PI, TAU};

use crate::error::{invalid, Error, Result};
use crate::model::{count_rate_derivatives, pump_rate, ModelParams};

/// Unit convention for the ratio `rho = kappa / alpha`.
///
/// `rho` has the dimension of an inverse squared angular frequency, so its
/// numerical value depends on how the Overhauser shift is measured. The
/// variants name that unit; internally everything is rad/ns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RatioUnits {
    /// `w` in rad/ns, `rho` in ns^2/rad^2.
    RadPerNs,
    /// `w` in GHz (cycles/ns), `rho` in ns^2.
    Ghz,
    /// `w` in rad/ps, `rho` in ps^2/rad^2.
    RadPerPs,
    /// `w` in THz (cycles/ps), `rho` in ps^2.
    Thz,
}

impl RatioUnits {
    pub const ALL: [RatioUnits; 4] = [Self::RadPerNs, Self::Ghz, Self::RadPerPs, Self::Thz];

    /// Converts a ratio in this convention to ns^2/rad^2.
    pub fn to_internal(self, rho: f64) -> f64 {
        match self {
            Self::RadPerNs => rho,
            Self::Ghz => rho / (TAU * TAU),
            Self::RadPerPs => rho * 1e-6,
            Self::Thz => rho * 1e-6 / (TAU * TAU),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::RadPerNs => "rad_ns",
            Self::Ghz => "ghz",
            Self::RadPerPs => "rad_ps",
            Self::Thz => "thz",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|u| u.name() == name)
    }
}

/// Mean-field rates and solver controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldParams {
    /// Boundary-diffusion decay rate [1/ns].
    pub kappa: f64,
    /// Trion-walk strength [rad^2/ns^3].
    pub alpha: f64,
    /// Half-width of the Overhauser search interval [rad/ns].
    pub omega_bracket: f64,
    /// Step for numerical slopes [rad/ns].
    pub fd_step: f64,
    /// Steady-state tolerance; roots satisfy `|g| <= relax_tol kappa sigma`.
    pub relax_tol: f64,
    /// Cap on scaled relaxation time `kappa t`.
    pub relax_t_max: f64,
}

impl MeanFieldParams {
    /// Builds the parameters from `kappa` and a ratio `rho` quoted in `units`.
    pub fn from_ratio(kappa: f64, rho: f64, units: RatioUnits, p: &ModelParams) -> Self {
        Self {
            kappa,
            alpha: kappa / units.to_internal(rho),
            ..Self::defaults(p)
        }
    }

    /// `kappa = 1/ms` with `kappa/alpha = 1e4` in ps^2/rad^2.
    pub fn defaults(p: &ModelParams) -> Self {
        let kappa = 1e-6;
        Self {
            kappa,
            alpha: kappa / RatioUnits::RadPerPs.to_internal(1e4),
            omega_bracket: 8.0 * p.sigma,
            fd_step: 1e-3,
            relax_tol: 1e-8,
            relax_t_max: 1e6,
        }
    }

    /// `kappa / alpha` in ns^2/rad^2.
    pub fn ratio(&self) -> f64 {
        self.kappa / self.alpha
    }

    /// Absolute drift tolerance [rad/ns^2].
    pub fn drift_tolerance(&self, p: &ModelParams) -> f64 {
        self.relax_tol * self.kappa * p.sigma
    }

    pub fn validate(&self, p: &ModelParams) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(invalid("meanfield.kappa", "kappa > 0 is required"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(invalid("meanfield.alpha", "alpha >= 0 is required"));
        }
        if !(self.omega_bracket >= 4.0 * p.sigma) {
            return Err(invalid("meanfield.omega_bracket", "omega_bracket >= 4 sigma is required"));
        }
        if !(self.fd_step > 0.0) {
            return Err(invalid("meanfield.fd_step", "fd_step > 0 is required"));
        }
        if !(self.relax_tol > 0.0) {
            return Err(invalid("meanfield.relax_tol", "relax_tol > 0 is required"));
        }
        if !(self.relax_t_max > 0.0) {
            return Err(invalid("meanfield.relax_t_max", "relax_t_max > 0 is required"));
        }
        Ok(())
    }

    /// `fd_step` must stay below a tenth of the finest fringe period.
    pub fn validate_for_tau_max(&self, tau_max: f64) -> Result<()> {
        if tau_max > 0.0 && self.fd_step >= TAU / (10.0 * tau_max) {
            return Err(invalid(
                "meanfield.fd_step",
                format!("fd_step < 2 pi / (10 tau_max) = {} is required", TAU / (10.0 * tau_max)),
            ));
        }
        Ok(())
    }
}

/// A zero of the mean-field drift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyState {
    /// Steady Overhauser shift [rad/ns].
    pub omega_f: f64,
    /// Whether `dg/dw <= 0` at the root.
    pub stable: bool,
    /// `|g(omega_f)|` [rad/ns^2].
    pub residual: f64,
    /// The shift the search started from.
    pub basin_seed: f64,
    /// Scaled time `kappa t` spent relaxing (0 for enumerated roots).
    pub scaled_time: f64,
    /// Width of the final sign-change bracket [rad/ns]; zero when the
    /// residual met the tolerance directly.
    pub bracket: f64,
}

impl SteadyState {
    /// The residual meets `tol`, or the sign change is pinned between
    /// neighbouring doubles (narrow notches deep in the pumping tail, where
    /// no double meets the tolerance).
    pub fn is_resolved(&self, tol: f64) -> bool {
        self.residual <= tol || self.bracket <= 2.0 * f64::EPSILON * self.omega_f.abs().max(f64::MIN_POSITIVE)
    }
}

/// `d2/dw2 [w C(w, tau)] = 2 C' + w C''`, from the analytic derivatives of C.
pub fn d2_omega_c(omega: f64, tau: f64, p: &ModelParams) -> f64 {
    let d = count_rate_derivatives(omega, tau, p);
    2.0 * d.d1 + omega * d.d2
}

/// `g(w) = -kappa w + alpha d2[wC]` [rad/ns^2].
pub fn drift(omega: f64, tau: f64, p: &ModelParams, mf: &MeanFieldParams) -> f64 {
    let feedback = if mf.alpha == 0.0 {
        0.0
    } else {
        mf.alpha * d2_omega_c(omega, tau, p)
    };
    -mf.kappa * omega + feedback
}

/// Resolution of the drift scan: a twentieth of the fringe period `2 pi / tau`,
/// and never coarser than `sigma / 20`.
pub fn scan_step(tau: f64, p: &ModelParams) -> f64 {
    let envelope = p.sigma / 20.0;
    if tau > 0.0 {
        (TAU / (20.0 * tau)).min(envelope)
    } else {
        envelope
    }
}

/// Local resolution of the drift near `omega` [rad/ns].
///
/// Close to a Ramsey zero `(w0 + w) tau = 2 pi k` with weak pumping, the
/// count has a notch of phase width `sqrt(2 (e^(beta T) - 1))` whose
/// curvature `s_p tau^2` does not shrink with the pumping, so the drift has
/// narrow structure there. The step is a tenth of the larger of that width
/// and the phase distance to the zero, capped by [`scan_step`] and floored
/// at `1e-9` rad/ns.
pub fn resolution(omega: f64, tau: f64, p: &ModelParams) -> f64 {
    let coarse = scan_step(tau, p);
    if !(tau > 0.0) {
        return coarse;
    }
    let theta = (p.omega0 + omega) * tau;
    let offset = (theta - TAU * (theta / TAU).round()).abs();
    let width = (2.0 * (pump_rate(omega, p) * p.t_pump).exp_m1()).sqrt();
    (offset.max(width) / (10.0 * tau)).clamp(1e-9, coarse)
}

fn slope_sign_stable(omega: f64, tau: f64, p: &ModelParams, mf: &MeanFieldParams) -> bool {
    let h = mf.fd_step;
    let up = drift(omega + h, tau, p, mf);
    let down = drift(omega - h, tau, p, mf);
    up - down <= 0.0
}

/// Bisects a bracket with `g(lo) > 0 >= g(hi)` or `g(lo) < 0 <= g(hi)`.
/// Returns the best point, its residual and the final bracket width.
fn bisect(
    mut lo: f64,
    mut hi: f64,
    tau: f64,
    p: &ModelParams,
    mf: &MeanFieldParams,
    tol: f64,
) -> (f64, f64, f64) {
    let g_lo = drift(lo, tau, p, mf);
    let sign_lo = g_lo > 0.0;
    let g_hi = drift(hi, tau, p, mf);
    if g_hi.abs() <= tol {
        return (hi, g_hi.abs(), 0.0);
    }
    if g_lo.abs() <= tol {
        return (lo, g_lo.abs(), 0.0);
    }
    let mut best = (hi, g_hi.abs());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let g = drift(mid, tau, p, mf);
        if g.abs() < best.1 {
            best = (mid, g.abs());
        }
        if g.abs() <= tol {
            return (mid, g.abs(), 0.0);
        }
        if (g > 0.0) == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (best.0, best.1, (hi - lo).abs())
}

/// Every zero of the drift on `[-W, W]`, sorted by `omega`.
///
/// A scan stepping by [`resolution`] locates sign changes, each refined by
/// bisection. Stability is the sign of the secant slope over the bracket, so
/// the list alternates stable / unstable and, with `g(-W) > 0 > g(W)`, starts
/// and ends on a stable root.
pub fn steady_states(tau: f64, p: &ModelParams, mf: &MeanFieldParams) -> Vec<SteadyState> {
    let tol = mf.drift_tolerance(p);
    let w = mf.omega_bracket;

    let mut roots = Vec::new();
    let mut last: Option<(f64, bool)> = None;
    let mut omega = -w;
    loop {
        let g = drift(omega, tau, p, mf);
        let positive = g > 0.0;
        if g == 0.0 {
            // Exact zero on the scan: let the next sign change bracket it.
        } else if let Some((prev_omega, prev_positive)) = last {
            if prev_positive != positive {
                let (root, residual, bracket) = bisect(prev_omega, omega, tau, p, mf, tol);
                roots.push(SteadyState {
                    omega_f: root,
                    stable: prev_positive,
                    residual,
                    basin_seed: 0.5 * (prev_omega + omega),
                    scaled_time: 0.0,
                    bracket,
                });
            }
        }
        if g != 0.0 {
            last = Some((omega, positive));
        }
        if omega >= w {
            break;
        }
        omega = (omega + resolution(omega, tau, p)).min(w);
    }
    roots
}

/// Integrates the drift from `omega_init` until it settles on a root.
///
/// Bogacki-Shampine 3(2) with error control in scaled time, with each step
/// additionally capped at the local [`resolution`] in `omega` so a single
/// step cannot hop over a basin. The flow in one dimension is monotone, so a sign change
/// of `g` across an accepted step brackets the stable root of the starting
/// basin; that bracket is finished by bisection.
pub fn relax_to_steady(
    omega_init: f64,
    tau: f64,
    p: &ModelParams,
    mf: &MeanFieldParams,
) -> Result<SteadyState> {
    let tol = mf.drift_tolerance(p);
    let bracket = mf.omega_bracket;
    if omega_init.abs() > bracket {
        return Err(Error::BracketEscape {
            tau,
            omega: omega_init,
            bracket,
        });
    }
    let rhs = |w: f64| drift(w, tau, p, mf) / mf.kappa;

    let mut w = omega_init;
    let mut g = drift(w, tau, p, mf);
    let mut t = 0.0;
    let mut dt = 1e-3;
    let mut steps = 0u64;

    let finish = |omega_f: f64, stable: bool, residual: f64, t: f64, bracket: f64| SteadyState {
        omega_f,
        stable,
        residual,
        basin_seed: omega_init,
        scaled_time: t,
        bracket,
    };

    loop {
        if g.abs() <= tol {
            return Ok(finish(w, slope_sign_stable(w, tau, p, mf), g.abs(), t, 0.0));
        }
        if t > mf.relax_t_max || steps > 10_000_000 {
            return Err(Error::NoConvergence {
                tau,
                t_reached: t,
                omega: w,
                drift: g,
            });
        }
        steps += 1;
        let up = g > 0.0;
        let max_dw = resolution(w, tau, p);
        let err_tol = 1e-4 * max_dw;

        let k1 = g / mf.kappa;
        let k2 = rhs(w + 0.5 * dt * k1);
        let k3 = rhs(w + 0.75 * dt * k2);
        let step = dt * (2.0 / 9.0 * k1 + 1.0 / 3.0 * k2 + 4.0 / 9.0 * k3);
        let w_new = w + step;
        let g_new = drift(w_new, tau, p, mf);
        let k4 = g_new / mf.kappa;
        let err = (dt * (-5.0 / 72.0 * k1 + 1.0 / 12.0 * k2 + 1.0 / 9.0 * k3 - 1.0 / 8.0 * k4)).abs();

        if step.abs() > max_dw || err > err_tol || (step > 0.0) != up || !w_new.is_finite() {
            let shrink = if step.abs() > max_dw {
                0.9 * max_dw / step.abs()
            } else if err > err_tol {
                0.9 * (err_tol / err).cbrt()
            } else {
                0.5
            };
            dt *= shrink.clamp(0.1, 0.5);
            continue;
        }

        if (g_new > 0.0) != up || g_new == 0.0 {
            let (root, residual, bracket) = bisect(w, w_new, tau, p, mf, tol);
            return Ok(finish(root, true, residual, t + dt, bracket));
        }

        w = w_new;
        g = g_new;
        t += dt;
        if w.abs() > bracket {
            return Err(Error::BracketEscape {
                tau,
                omega: w,
                bracket,
            });
        }
        let grow = if err > 0.0 { 0.9 * (err_tol / err).cbrt() } else { 5.0 };
        dt *= grow.clamp(1.0, 5.0);
    }
}

/// Half a fringe: shifts larger than this between neighbouring delays count
/// as a switch to a different branch.
pub fn jump_threshold(tau: f64) -> f64 {
    PI / tau
}
