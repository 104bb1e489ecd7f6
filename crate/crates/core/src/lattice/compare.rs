//! Oracle runs lined up against the mean-field steady states.

use crate::error::{invalid, Error, Result};
use crate::meanfield::{drift, relax_to_steady, MeanFieldParams, SteadyState};
use crate::model::{count_rate, ModelParams};
use crate::sweep::{run_sweep, Direction, Pass, SweepSchedule};

use super::grid::{fp_grid_solve, grid_moments, GridOptions, PdfGrid, Scheme};
use super::langevin::{langevin_ensemble, EnsembleOptions, InitialState};
use super::{Lattice, MomentReport};

/// Largest chain handled by the trajectory ensemble.
pub const MAX_ENSEMBLE_SITES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    Grid,
    Ensemble,
}

impl OracleMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::Grid => "grid",
            Self::Ensemble => "ensemble",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareOptions {
    /// Continuation path that supplies the starting shift for each delay.
    pub schedule: SweepSchedule,
    /// Oracle run time per delay [ns]; `None` picks `20 / lambda` from the
    /// linearized relaxation rate `lambda` at the mean-field root.
    pub t_end: Option<f64>,
    /// Number of moment reports per run, besides the initial one.
    pub n_outputs: usize,
    /// Cells of the one-site grid.
    pub n_cells: usize,
    /// Trajectories of the ensemble.
    pub n_traj: usize,
    pub seed: u64,
    /// Ensemble step [ns]; `None` picks `0.01 / lambda`.
    pub dt: Option<f64>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            schedule: SweepSchedule {
                direction: Direction::Forward,
                ..SweepSchedule::default()
            },
            t_end: None,
            n_outputs: 40,
            n_cells: 400,
            n_traj: 10_000,
            seed: 0,
            dt: None,
        }
    }
}

/// One delay of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub tau: f64,
    /// Shift the mean-field relaxation and the oracle both started from [rad/ns].
    pub seed_omega: f64,
    pub meanfield: SteadyState,
    /// Linearized relaxation rate `-dg/dw` at the mean-field root [1/ns].
    pub relaxation_rate: f64,
    pub method: OracleMethod,
    /// Final oracle moments.
    pub oracle: MomentReport,
    pub series: Vec<MomentReport>,
}

impl CompareRow {
    /// `|<Omega> - omega_f| / |omega_f|`.
    pub fn relative_error(&self) -> f64 {
        (self.oracle.mean_omega - self.meanfield.omega_f).abs() / self.meanfield.omega_f.abs()
    }
}

/// `-dg/dw` at `omega` by central differences, floored at `kappa`.
pub fn relaxation_rate(omega: f64, tau: f64, p: &ModelParams, mf: &MeanFieldParams) -> f64 {
    let h = mf.fd_step;
    let slope = (drift(omega + h, tau, p, mf) - drift(omega - h, tau, p, mf)) / (2.0 * h);
    (-slope).max(mf.kappa)
}

/// Stationary variance of the shift from the process linearized about
/// `omega`: `sum_j A_j^2 (F_j + Gamma_j C) / lambda` [rad^2/ns^2].
pub fn linearized_variance(lat: &Lattice, omega: f64, tau: f64, p: &ModelParams, lambda: f64) -> f64 {
    let c = count_rate(omega, tau, p);
    let noise: f64 = (0..lat.n())
        .map(|j| lat.a[j] * lat.a[j] * (lat.f[j] + lat.gamma[j] * c))
        .sum();
    noise / lambda
}

fn solve_grid_widening(
    lat: &Lattice,
    tau: f64,
    t_end: f64,
    p: &ModelParams,
    mean_m: f64,
    std_m: f64,
    n_cells: usize,
    opts: &GridOptions,
) -> Result<Vec<MomentReport>> {
    let mut half = 12.0 * std_m;
    let mut cells = n_cells;
    for _ in 0..6 {
        let init = PdfGrid::gaussian(mean_m - half, mean_m + half, cells, mean_m, std_m)?;
        match fp_grid_solve(lat, tau, t_end, init, p, opts) {
            Err(Error::GridTooSmall { .. }) => {
                half *= 2.0;
                cells *= 2;
            }
            other => return other.map(|run| run.series),
        }
    }
    let init = PdfGrid::gaussian(mean_m - half, mean_m + half, cells, mean_m, std_m)?;
    fp_grid_solve(lat, tau, t_end, init, p, opts).map(|run| run.series)
}

/// For each delay, relaxes the mean-field shift and runs the oracle from the
/// same starting shift, which comes from a forward continuation sweep.
///
/// One site uses the grid solver starting from a Gaussian of the linearized
/// stationary width; longer chains use the trajectory ensemble starting from
/// the minimum-norm magnetizations that produce the starting shift.
pub fn compare_meanfield(
    lat: &Lattice,
    taus: &[f64],
    p: &ModelParams,
    mf: &MeanFieldParams,
    opts: &CompareOptions,
) -> Result<Vec<CompareRow>> {
    lat.validate()?;
    if lat.n() > MAX_ENSEMBLE_SITES {
        return Err(invalid("lattice.n", format!("at most {MAX_ENSEMBLE_SITES} sites are supported")));
    }
    if opts.n_outputs == 0 {
        return Err(invalid("oracle.output_every", "at least one output is required"));
    }
    let schedule = SweepSchedule {
        direction: Direction::Forward,
        ..opts.schedule
    };
    let path = run_sweep(&schedule, p, mf)?;
    let a_norm2: f64 = lat.a.iter().map(|a| a * a).sum();

    let mut rows = Vec::with_capacity(taus.len());
    for &tau in taus {
        let seed_omega = path
            .iter()
            .min_by(|x, y| (x.tau - tau).abs().total_cmp(&(y.tau - tau).abs()))
            .map_or(schedule.omega_init, |s| s.omega_f);
        let meanfield = relax_to_steady(seed_omega, tau, p, mf)?;
        let lambda = relaxation_rate(meanfield.omega_f, tau, p, mf);
        let t_end = opts.t_end.unwrap_or(20.0 / lambda);
        let interval = t_end / opts.n_outputs as f64;
        let var = linearized_variance(lat, meanfield.omega_f, tau, p, lambda);

        let (method, series) = if lat.n() == 1 {
            let a = lat.a[0];
            let std_m = (var.sqrt() / a.abs()).max(1e-9 * (seed_omega / a).abs().max(1.0));
            let grid_opts = GridOptions {
                output_interval: interval,
                ..GridOptions::default()
            };
            let series = solve_grid_widening(lat, tau, t_end, p, seed_omega / a, std_m, opts.n_cells, &grid_opts)?;
            (OracleMethod::Grid, series)
        } else {
            let m0 = lat.a.iter().map(|a| seed_omega * a / a_norm2).collect();
            let ens = EnsembleOptions {
                dt: opts.dt.unwrap_or(0.01 / lambda),
                output_interval: interval,
                initial: InitialState::Fixed(m0),
            };
            let series = langevin_ensemble(lat, tau, t_end, opts.n_traj, opts.seed, p, &ens)?;
            (OracleMethod::Ensemble, series)
        };
        rows.push(CompareRow {
            tau,
            seed_omega,
            meanfield,
            relaxation_rate: lambda,
            method,
            oracle: *series.last().expect("series holds the initial report"),
            series,
        });
    }
    Ok(rows)
}

/// Quasi-static oracle scan controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSweepOptions {
    /// Evolution time at each delay [ns].
    pub t_per_tau: f64,
    /// Backward-Euler steps at each delay.
    pub steps_per_tau: usize,
    /// Cells per linearized standard deviation.
    pub cells_per_std: f64,
    /// Cap on grid size.
    pub max_cells: usize,
}

impl OracleSweepOptions {
    pub fn for_meanfield(mf: &MeanFieldParams) -> Self {
        Self {
            t_per_tau: 200.0 / mf.kappa,
            steps_per_tau: 200,
            cells_per_std: 8.0,
            max_cells: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSample {
    pub tau: f64,
    pub pass: Pass,
    pub moments: MomentReport,
    /// `<C(Omega)>` over the density.
    pub mean_count: f64,
}

/// Scans the delay with the one-site density carried from each delay to the
/// next, the full-distribution analogue of [`run_sweep`].
///
/// Before each delay the density is resampled onto a window that covers its
/// current support, the linearized stationary width there, and one fringe
/// period `2 pi / tau` on either side, so a branch switch stays on the grid.
pub fn oracle_sweep(
    lat: &Lattice,
    schedule: &SweepSchedule,
    p: &ModelParams,
    mf: &MeanFieldParams,
    opts: &OracleSweepOptions,
) -> Result<Vec<OracleSample>> {
    lat.validate()?;
    schedule.validate()?;
    if lat.n() != 1 {
        return Err(invalid("lattice.n", "the oracle sweep handles one site only"));
    }
    if opts.steps_per_tau == 0 || !(opts.t_per_tau > 0.0) || !(opts.cells_per_std > 0.0) {
        return Err(invalid("oracle", "positive time, steps and resolution are required"));
    }
    let a = lat.a[0];
    let up = schedule.grid();
    let down: Vec<f64> = up.iter().rev().copied().collect();
    let passes: Vec<(Pass, &[f64])> = match schedule.direction {
        Direction::Forward => vec![(Pass::Forward, &up)],
        Direction::Backward => vec![(Pass::Backward, &down)],
        Direction::RoundTrip => vec![(Pass::Forward, &up), (Pass::Backward, &down)],
    };
    let grid_opts = GridOptions {
        scheme: Scheme::Implicit,
        dt_max: opts.t_per_tau / opts.steps_per_tau as f64,
        output_interval: opts.t_per_tau,
        boundary_tol: 1e-6,
        ..GridOptions::default()
    };

    let first = passes[0].1[0];
    let omega0 = schedule.omega_init;
    let lambda0 = relaxation_rate(omega0, first, p, mf);
    let std0 = linearized_variance(lat, omega0, first, p, lambda0).sqrt() / a.abs();
    let mut density = PdfGrid::gaussian(
        omega0 / a - 12.0 * std0,
        omega0 / a + 12.0 * std0,
        400,
        omega0 / a,
        std0,
    )?;

    let mut out = Vec::new();
    for (pass, taus) in passes {
        for &tau in taus {
            let mean = density.mean();
            let spread = density.variance().sqrt();
            let lambda = relaxation_rate(a * mean, tau, p, mf);
            let std_lin = linearized_variance(lat, a * mean, tau, p, lambda).sqrt() / a.abs();
            let dx = spread.min(std_lin).max(1e-12) / opts.cells_per_std;
            let mut half = 12.0 * spread.max(std_lin) + std::f64::consts::TAU / (tau * a.abs());
            let mut result = None;
            for _ in 0..6 {
                let cells = ((2.0 * half / dx).ceil() as usize).clamp(64, opts.max_cells);
                let start = density.regrid(mean - half, mean + half, cells)?;
                match fp_grid_solve(lat, tau, density.t + opts.t_per_tau, start, p, &grid_opts) {
                    Err(Error::GridTooSmall { .. }) => half *= 2.0,
                    other => {
                        result = Some(other?);
                        break;
                    }
                }
            }
            let run = match result {
                Some(run) => run,
                None => {
                    return Err(Error::GridTooSmall {
                        boundary_mass: 1.0,
                        t: density.t,
                    })
                }
            };
            density = run.grid;
            let moments = grid_moments(lat, tau, p, &density);
            let dx = density.dx();
            let mean_count = (0..density.n_cells())
                .map(|i| count_rate(a * density.center(i), tau, p) * density.values[i] * dx)
                .sum();
            out.push(OracleSample {
                tau,
                pass,
                moments,
                mean_count,
            });
        }
    }
    Ok(out)
}
