//! Small-N oracles for the joint nuclear distribution.
//!
//! Each site `j` carries a magnetization `m_j`; the Overhauser shift is
//! `Omega = sum_j A_j m_j`. The distribution evolves under
//!
//! ```text
//! df/dt = sum_j { d/dm_j [ (sum_k D_jk (m_j - m_k) + b_j D_bath m_j) f ]
//!               + d2/dm_j2 [ (F_j + Gamma_j C(Omega)) f ]
//!               - d/dm_j [ Gamma_j d2/dm_j2 (m_j C(Omega)) f ] }
//! ```
//!
//! (`b_j` marks the two chain ends, which exchange with a bath held at zero
//! magnetization). This is the probability-conserving operator whose first
//! moments obey
//!
//! ```text
//! d<m_j>/dt = -sum_k D_jk (<m_j> - <m_k>) - b_j D_bath <m_j>
//!             + Gamma_j < d2/dm_j2 (m_j C) >,
//! ```
//!
//! the same moment law as the trion-walk term `(F_j + Gamma_j C) d2f/dm_j2`.
//! For one site, with `kappa = D_bath` and `alpha = Gamma A^2`, the mean shift
//! obeys `d<Omega>/dt = -kappa <Omega> + alpha <d2/dOmega2 [Omega C]>`
//! exactly; the mean-field drift then only differs by evaluating `C` at the
//! mean instead of averaging over the distribution.
//!
//! * [`grid`] solves the one-site equation on a finite-volume grid.
//! * [`langevin`] integrates the equivalent Ito process for any small chain.
//! * [`compare`] lines both up against the mean-field steady states.

pub mod compare;
pub mod grid;
pub mod langevin;

use crate::error::{invalid, Result};
use crate::meanfield::{d2_omega_c, MeanFieldParams};
use crate::model::{count_rate_derivatives, ModelParams};

/// Nuclear sites on an open chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    /// Hyperfine weights `A_j` [rad/ns per unit magnetization].
    pub a: Vec<f64>,
    /// Trion flip rates `Gamma_j` [1/ns].
    pub gamma: Vec<f64>,
    /// Nearest-neighbour diffusion rates, `d_nn[j]` couples sites `j` and `j+1` [1/ns].
    pub d_nn: Vec<f64>,
    /// Fluctuating spin-diffusion constants `F_j` [magnetization^2/ns].
    pub f: Vec<f64>,
    /// Exchange rate of the chain ends with the zero-magnetization bath [1/ns].
    pub d_bath: f64,
}

impl Lattice {
    pub fn single_site(a: f64, gamma: f64, f: f64, d_bath: f64) -> Self {
        Self {
            a: vec![a],
            gamma: vec![gamma],
            d_nn: Vec::new(),
            f: vec![f],
            d_bath,
        }
    }

    /// One site with unit hyperfine weight whose moment law reproduces `mf`:
    /// `D_bath = kappa`, `Gamma = alpha`.
    pub fn matched_single_site(mf: &MeanFieldParams, f: f64) -> Self {
        Self::single_site(1.0, mf.alpha, f, mf.kappa)
    }

    /// Chain of `n` sites with a Gaussian hyperfine envelope of `width`
    /// sites, trion rates proportional to the envelope and scaled so that
    /// `sum_j Gamma_j A_j^2 = alpha`. The central weight is 1 rad/ns.
    pub fn gaussian_chain(n: usize, width: f64, alpha: f64, f: f64, d_nn: f64, d_bath: f64) -> Self {
        let centre = 0.5 * (n as f64 - 1.0);
        let a: Vec<f64> = (0..n)
            .map(|j| {
                let z = (j as f64 - centre) / width;
                (-0.5 * z * z).exp()
            })
            .collect();
        let cubes: f64 = a.iter().map(|x| x * x * x).sum();
        let gamma = a.iter().map(|x| alpha * x / cubes).collect();
        Self {
            a,
            gamma,
            d_nn: vec![d_nn; n.saturating_sub(1)],
            f: vec![f; n],
            d_bath,
        }
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn is_boundary(&self, j: usize) -> bool {
        j == 0 || j + 1 == self.n()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if n == 0 {
            return Err(invalid("lattice.n", "at least one site is required"));
        }
        if self.gamma.len() != n || self.f.len() != n {
            return Err(invalid("lattice", "a, gamma and f must have one entry per site"));
        }
        if self.d_nn.len() != n - 1 {
            return Err(invalid("lattice.d_nn", "one coupling per nearest-neighbour bond is required"));
        }
        if !self.a.iter().all(|x| x.is_finite()) {
            return Err(invalid("lattice.a", "hyperfine weights must be finite"));
        }
        let rates = self.gamma.iter().chain(&self.f).chain(&self.d_nn);
        if !rates.clone().all(|x| *x >= 0.0 && x.is_finite()) || !(self.d_bath >= 0.0) {
            return Err(invalid("lattice", "all rates must be >= 0"));
        }
        Ok(())
    }

    pub fn omega(&self, m: &[f64]) -> f64 {
        self.a.iter().zip(m).map(|(a, m)| a * m).sum()
    }
}

/// Moments of the Overhauser shift and the trion-drift decomposition at one
/// time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentReport {
    /// Time [ns].
    pub t: f64,
    /// `<Omega>` [rad/ns].
    pub mean_omega: f64,
    /// `Var(Omega)` [rad^2/ns^2].
    pub var_omega: f64,
    /// Standard error of the mean; zero for deterministic solvers.
    pub se_mean: f64,
    /// Standard error of the variance; zero for deterministic solvers.
    pub se_var: f64,
    /// Trion contribution to `d<Omega>/dt`:
    /// `sum_j Gamma_j A_j < d2/dm_j2 (m_j C) >`.
    pub trion_drift_exact: f64,
    /// The single-variable reduction `alpha <d2/dOmega2 (Omega C)>`.
    pub trion_drift_reduced: f64,
    /// `alpha d2/dw2 (w C)` at `w = <Omega>`.
    pub trion_drift_meanfield: f64,
    /// `exact - reduced = sum_j Gamma_j A_j^2 <(A_j m_j - Omega) C''>`;
    /// identically zero for one site.
    pub remainder: f64,
    /// `|reduced - meanfield| / max(|reduced|, |meanfield|)`.
    pub flatness_error: f64,
    /// Total probability.
    pub mass: f64,
}

/// Builds a [`MomentReport`] from weighted lattice states.
///
/// `states` holds one state of `lat.n()` magnetizations after another.
/// Without `weights` the states are equally likely samples and standard
/// errors are attached.
pub fn moment_report(
    lat: &Lattice,
    tau: f64,
    p: &ModelParams,
    t: f64,
    states: &[f64],
    weights: Option<&[f64]>,
) -> MomentReport {
    let n = lat.n();
    let count = states.len() / n;
    let weight = |i: usize| weights.map_or(1.0, |w| w[i]);
    let alpha = crate::model::alpha_from_lattice(lat);

    let mut total = 0.0;
    let mut sum_omega = 0.0;
    for i in 0..count {
        let w = weight(i);
        total += w;
        sum_omega += w * lat.omega(&states[i * n..(i + 1) * n]);
    }
    let mean = sum_omega / total;

    let mut m2 = 0.0;
    let mut m4 = 0.0;
    let mut c1 = 0.0;
    let mut omega_c2 = 0.0;
    let mut site_terms = 0.0;
    let mut remainder = 0.0;
    for i in 0..count {
        let w = weight(i) / total;
        if w == 0.0 {
            continue;
        }
        let m = &states[i * n..(i + 1) * n];
        let omega = lat.omega(m);
        let dev = omega - mean;
        m2 += w * dev * dev;
        m4 += w * dev.powi(4);
        let d = count_rate_derivatives(omega, tau, p);
        c1 += w * d.d1;
        omega_c2 += w * omega * d.d2;
        for j in 0..n {
            let ga2 = lat.gamma[j] * lat.a[j] * lat.a[j];
            let local = lat.a[j] * m[j];
            site_terms += w * ga2 * local * d.d2;
            remainder += w * ga2 * (local - omega) * d.d2;
        }
    }

    let exact = 2.0 * alpha * c1 + site_terms;
    let reduced = alpha * (2.0 * c1 + omega_c2);
    let meanfield = alpha * d2_omega_c(mean, tau, p);
    let denom = reduced.abs().max(meanfield.abs());
    let flatness_error = if denom > 0.0 {
        (reduced - meanfield).abs() / denom
    } else {
        0.0
    };
    let (se_mean, se_var) = if weights.is_none() && count > 1 {
        let k = count as f64;
        let var_unbiased = m2 * k / (k - 1.0);
        ((var_unbiased / k).sqrt(), ((m4 - m2 * m2).max(0.0) / k).sqrt())
    } else {
        (0.0, 0.0)
    };
    MomentReport {
        t,
        mean_omega: mean,
        var_omega: m2,
        se_mean,
        se_var,
        trion_drift_exact: exact,
        trion_drift_reduced: reduced,
        trion_drift_meanfield: meanfield,
        remainder,
        flatness_error,
        mass: total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::alpha_from_lattice;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn alpha_of_single_and_mirrored_sites() {
        let lat = Lattice::single_site(2.5, 3e-4, 0.0, 1e-6);
        assert!((alpha_from_lattice(&lat) - 3e-4 * 6.25).abs() < 1e-18);
        let pair = Lattice {
            a: vec![2.5, -2.5],
            gamma: vec![3e-4, 3e-4],
            d_nn: vec![0.0],
            f: vec![0.0, 0.0],
            d_bath: 0.0,
        };
        assert!((alpha_from_lattice(&pair) - 2.0 * 3e-4 * 6.25).abs() < 1e-18);
    }

    #[test]
    fn alpha_matches_brute_force_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 50;
        let lat = Lattice {
            a: (0..n).map(|_| rng.random_range(-3.0..3.0)).collect(),
            gamma: (0..n).map(|_| rng.random_range(0.0..1e-3)).collect(),
            d_nn: vec![0.0; n - 1],
            f: vec![0.0; n],
            d_bath: 0.0,
        };
        // Kahan-compensated reference in the opposite order.
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for j in (0..n).rev() {
            let y = lat.gamma[j] * lat.a[j].powi(2) - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        let alpha = alpha_from_lattice(&lat);
        assert!((alpha - sum).abs() <= 1e-14 * sum.abs());
    }

    #[test]
    fn gaussian_chain_reproduces_alpha() {
        let lat = Lattice::gaussian_chain(5, 1.5, 2e-4, 1e-9, 3e-6, 1e-6);
        assert!(lat.validate().is_ok());
        assert!((alpha_from_lattice(&lat) - 2e-4).abs() < 1e-18);
        assert_eq!(lat.a[2], 1.0);
        assert!(lat.is_boundary(0) && lat.is_boundary(4) && !lat.is_boundary(2));
    }

    #[test]
    fn single_site_remainder_is_identically_zero() {
        let p = ModelParams::defaults();
        let lat = Lattice::single_site(1.3, 1e-4, 0.0, 1e-6);
        let states: Vec<f64> = (0..200).map(|i| -8.0 + 0.08 * i as f64).collect();
        let r = moment_report(&lat, 0.37, &p, 0.0, &states, None);
        assert_eq!(r.remainder, 0.0);
        assert!((r.trion_drift_exact - r.trion_drift_reduced).abs() <= 1e-12 * r.trion_drift_exact.abs());
    }

    #[test]
    fn validation_catches_shape_errors() {
        let mut lat = Lattice::gaussian_chain(3, 1.0, 1e-4, 0.0, 1e-6, 1e-6);
        lat.d_nn.pop();
        assert!(lat.validate().is_err());
        let mut lat = Lattice::single_site(1.0, 1e-4, 0.0, 1e-6);
        lat.f[0] = -1.0;
        assert!(lat.validate().is_err());
    }
}
