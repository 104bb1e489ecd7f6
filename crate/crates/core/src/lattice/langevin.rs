//! Euler-Maruyama ensemble for a small chain.
//!
//! Each site follows the Ito process
//!
//! ```text
//! dm_j = [ -sum_k D_jk (m_j - m_k) - b_j D_bath m_j
//!          + Gamma_j (2 A_j C'(Omega) + A_j^2 m_j C''(Omega)) ] dt
//!        + sqrt(2 (F_j + Gamma_j C(Omega)) dt) xi_j
//! ```
//!
//! whose forward equation is the operator documented in [`super`]. The
//! trion drift is `Gamma_j d2/dm_j2 (m_j C)`, so the first moments match the
//! grid solver term by term.
//!
//! Trajectory `i` draws from a ChaCha8 stream selected by `(seed, i)`, so the
//! ensemble is identical whatever the number of worker threads. Moments are
//! reduced in trajectory order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::{count_rate_derivatives, ModelParams};

use super::{moment_report, Lattice, MomentReport};

/// Starting state of every trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    /// All trajectories start at the same magnetizations.
    Fixed(Vec<f64>),
    /// Independent Gaussians per site.
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOptions {
    /// Nominal time step [ns]; shortened so outputs fall on steps.
    pub dt: f64,
    /// Time between moment reports [ns].
    pub output_interval: f64,
    pub initial: InitialState,
}

fn step(lat: &Lattice, tau: f64, p: &ModelParams, m: &mut [f64], drift: &mut [f64], dt: f64, rng: &mut ChaCha8Rng) {
    let n = lat.n();
    let omega = lat.omega(m);
    let c = count_rate_derivatives(omega, tau, p);
    for j in 0..n {
        let mut d = 0.0;
        if j > 0 {
            d -= lat.d_nn[j - 1] * (m[j] - m[j - 1]);
        }
        if j + 1 < n {
            d -= lat.d_nn[j] * (m[j] - m[j + 1]);
        }
        if lat.is_boundary(j) {
            d -= lat.d_bath * m[j];
        }
        let (a, g) = (lat.a[j], lat.gamma[j]);
        d += g * a * (2.0 * c.d1 + a * m[j] * c.d2);
        drift[j] = d;
    }
    for j in 0..n {
        let diffusion = lat.f[j] + lat.gamma[j] * c.value;
        let xi: f64 = StandardNormal.sample(rng);
        m[j] += drift[j] * dt + (2.0 * diffusion * dt).sqrt() * xi;
    }
}

fn trajectory(
    lat: &Lattice,
    tau: f64,
    p: &ModelParams,
    opts: &EnsembleOptions,
    seed: u64,
    index: u64,
    n_out: usize,
    steps_per_out: u64,
    dt: f64,
) -> Result<Vec<f64>> {
    let n = lat.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let mut m: Vec<f64> = match &opts.initial {
        InitialState::Fixed(m0) => m0.clone(),
        InitialState::Gaussian { mean, std } => mean
            .iter()
            .zip(std)
            .map(|(mu, s)| {
                let z: f64 = StandardNormal.sample(&mut rng);
                mu + s * z
            })
            .collect(),
    };
    let mut drift = vec![0.0; n];
    let mut out = Vec::with_capacity(n_out * n);
    out.extend_from_slice(&m);
    for k in 1..n_out {
        for _ in 0..steps_per_out {
            step(lat, tau, p, &mut m, &mut drift, dt, &mut rng);
        }
        if !m.iter().all(|x| x.is_finite()) {
            return Err(Error::Diverged {
                t: k as f64 * steps_per_out as f64 * dt,
            });
        }
        out.extend_from_slice(&m);
    }
    Ok(out)
}

/// Integrates `n_traj` trajectories to `t_end` [ns] and reports moments at
/// every output time, starting with `t = 0`.
pub fn langevin_ensemble(
    lat: &Lattice,
    tau: f64,
    t_end: f64,
    n_traj: usize,
    seed: u64,
    p: &ModelParams,
    opts: &EnsembleOptions,
) -> Result<Vec<MomentReport>> {
    lat.validate()?;
    let n = lat.n();
    if n_traj < 2 {
        return Err(invalid("oracle.n_traj", "at least two trajectories are required"));
    }
    if !(opts.dt > 0.0 && opts.output_interval > 0.0 && t_end >= 0.0) {
        return Err(invalid("oracle.dt", "dt, output interval and t_end must be positive"));
    }
    let init_len = match &opts.initial {
        InitialState::Fixed(m0) => m0.len(),
        InitialState::Gaussian { mean, std } => {
            if mean.len() != std.len() || std.iter().any(|s| !(*s >= 0.0)) {
                return Err(invalid("oracle.initial", "one non-negative width per site is required"));
            }
            mean.len()
        }
    };
    if init_len != n {
        return Err(invalid("oracle.initial", "one initial magnetization per site is required"));
    }

    let n_out = (t_end / opts.output_interval).round() as usize + 1;
    let interval = if n_out > 1 { t_end / (n_out - 1) as f64 } else { 0.0 };
    let steps_per_out = (interval / opts.dt).ceil().max(1.0) as u64;
    let dt = interval / steps_per_out as f64;

    let paths: Vec<Vec<f64>> = (0..n_traj as u64)
        .into_par_iter()
        .map(|i| trajectory(lat, tau, p, opts, seed, i, n_out, steps_per_out, dt))
        .collect::<Result<_>>()?;

    let mut states = vec![0.0; n_traj * n];
    Ok((0..n_out)
        .map(|k| {
            for (i, path) in paths.iter().enumerate() {
                states[i * n..(i + 1) * n].copy_from_slice(&path[k * n..(k + 1) * n]);
            }
            moment_report(lat, tau, p, k as f64 * interval, &states, None)
        })
        .collect())
}
