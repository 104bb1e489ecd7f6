//! Finite-volume solver for the one-site density.
//!
//! The operator is discretized as a birth-death chain on uniform cells: cell
//! `i` sends probability to `i+1` at rate `D_i/dx^2 + mu_i/(2 dx)` and to
//! `i-1` at rate `D_i/dx^2 - mu_i/(2 dx)`, where `D` is the local diffusion
//! `F + Gamma C(A m)` and `mu` the local drift `-D_bath m + Gamma A d2(A m)`.
//! Where the drift would make a rate negative, `D` is raised to
//! `|mu| dx / 2` (upwinding). The chain conserves probability exactly, keeps
//! it non-negative, and its first moment obeys `d<m>/dt = sum_i mu_i f_i dx`
//! up to the two boundary cells, where the outward rate is removed
//! (no-flux walls).

use crate::error::{invalid, Error, Result};
use crate::meanfield::d2_omega_c;
use crate::model::{count_rate, ModelParams};

use super::{moment_report, Lattice, MomentReport};

/// Density of the single-site magnetization on uniform cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PdfGrid {
    pub m_min: f64,
    pub m_max: f64,
    /// Cell-averaged density; `sum(values) * dx` is the total probability.
    pub values: Vec<f64>,
    /// Time [ns].
    pub t: f64,
}

impl PdfGrid {
    fn empty(m_min: f64, m_max: f64, n_cells: usize) -> Result<Self> {
        if !(m_max > m_min) || !m_min.is_finite() || !m_max.is_finite() {
            return Err(invalid("oracle.grid", "m_max > m_min is required"));
        }
        if n_cells < 8 {
            return Err(invalid("oracle.n_cells", "at least 8 cells are required"));
        }
        Ok(Self {
            m_min,
            m_max,
            values: vec![0.0; n_cells],
            t: 0.0,
        })
    }

    /// Gaussian of the given mean and standard deviation sampled at cell
    /// centres and normalized to unit mass.
    pub fn gaussian(m_min: f64, m_max: f64, n_cells: usize, mean: f64, std: f64) -> Result<Self> {
        if !(std > 0.0) {
            return Err(invalid("oracle.grid", "initial width must be > 0"));
        }
        let mut g = Self::empty(m_min, m_max, n_cells)?;
        for i in 0..n_cells {
            let z = (g.center(i) - mean) / std;
            g.values[i] = (-0.5 * z * z).exp();
        }
        g.normalize()?;
        Ok(g)
    }

    /// Unit mass at `m0`, split between the two nearest cell centres so the
    /// discrete mean is exactly `m0`.
    pub fn point(m_min: f64, m_max: f64, n_cells: usize, m0: f64) -> Result<Self> {
        let mut g = Self::empty(m_min, m_max, n_cells)?;
        let dx = g.dx();
        let x = (m0 - m_min) / dx - 0.5;
        if !(x >= 0.0 && x <= (n_cells - 1) as f64) {
            return Err(invalid("oracle.grid", "point mass must lie between the outer cell centres"));
        }
        let i = (x.floor() as usize).min(n_cells - 2);
        let frac = x - i as f64;
        g.values[i] = (1.0 - frac) / dx;
        g.values[i + 1] = frac / dx;
        Ok(g)
    }

    pub fn n_cells(&self) -> usize {
        self.values.len()
    }

    pub fn dx(&self) -> f64 {
        (self.m_max - self.m_min) / self.values.len() as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.m_min + (i as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells()).map(|i| self.center(i)).collect()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx()
    }

    pub fn mean(&self) -> f64 {
        let dx = self.dx();
        (0..self.n_cells()).map(|i| self.center(i) * self.values[i] * dx).sum::<f64>() / self.mass()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        let dx = self.dx();
        (0..self.n_cells())
            .map(|i| (self.center(i) - mean).powi(2) * self.values[i] * dx)
            .sum::<f64>()
            / self.mass()
    }

    /// Probability held by the two outermost cells.
    pub fn boundary_mass(&self) -> f64 {
        (self.values[0] + self.values[self.n_cells() - 1]) * self.dx()
    }

    fn normalize(&mut self) -> Result<()> {
        let mass = self.mass();
        if !(mass > 0.0) {
            return Err(invalid("oracle.grid", "initial density has no mass on the grid"));
        }
        self.values.iter_mut().for_each(|v| *v /= mass);
        Ok(())
    }

    /// Resamples onto a new window by linear interpolation between cell
    /// centres, then restores unit mass.
    pub fn regrid(&self, m_min: f64, m_max: f64, n_cells: usize) -> Result<Self> {
        let mut g = Self::empty(m_min, m_max, n_cells)?;
        g.t = self.t;
        let dx_old = self.dx();
        let last = self.n_cells() - 1;
        for i in 0..n_cells {
            let x = (g.center(i) - self.m_min) / dx_old - 0.5;
            g.values[i] = if x < 0.0 || x > last as f64 {
                0.0
            } else {
                let j = (x.floor() as usize).min(last - 1);
                let frac = x - j as f64;
                (1.0 - frac) * self.values[j] + frac * self.values[j + 1]
            };
        }
        g.normalize()?;
        Ok(g)
    }
}

/// Which parts of the one-site operator to assemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OperatorTerms {
    pub bath: bool,
    pub fluctuation: bool,
    pub trion: bool,
}

impl OperatorTerms {
    pub const ALL: Self = Self {
        bath: true,
        fluctuation: true,
        trion: true,
    };
    pub const TRION: Self = Self {
        bath: false,
        fluctuation: false,
        trion: true,
    };
}

/// Transition rates of the discretized one-site operator at fixed delay.
#[derive(Debug, Clone)]
pub struct GridOperator {
    up: Vec<f64>,
    down: Vec<f64>,
    dx: f64,
    m_min: f64,
}

impl GridOperator {
    pub fn new(lat: &Lattice, tau: f64, p: &ModelParams, grid: &PdfGrid, terms: OperatorTerms) -> Self {
        let n = grid.n_cells();
        let dx = grid.dx();
        let (a, gamma) = (lat.a[0], lat.gamma[0]);
        let mut up = vec![0.0; n];
        let mut down = vec![0.0; n];
        for i in 0..n {
            let m = grid.center(i);
            let mut diffusion = 0.0;
            let mut drift = 0.0;
            if terms.fluctuation {
                diffusion += lat.f[0];
            }
            if terms.bath {
                drift -= lat.d_bath * m;
            }
            if terms.trion && gamma != 0.0 {
                diffusion += gamma * count_rate(a * m, tau, p);
                drift += gamma * a * d2_omega_c(a * m, tau, p);
            }
            let diffusion = diffusion.max(0.5 * drift.abs() * dx);
            up[i] = diffusion / (dx * dx) + drift / (2.0 * dx);
            down[i] = diffusion / (dx * dx) - drift / (2.0 * dx);
        }
        down[0] = 0.0;
        up[n - 1] = 0.0;
        Self {
            up,
            down,
            dx,
            m_min: grid.m_min,
        }
    }

    /// Largest total exit rate of any cell [1/ns].
    pub fn max_rate(&self) -> f64 {
        self.up
            .iter()
            .zip(&self.down)
            .map(|(u, d)| u + d)
            .fold(0.0, f64::max)
    }

    /// `out = L f`.
    pub fn apply(&self, f: &[f64], out: &mut [f64]) {
        let n = f.len();
        for i in 0..n {
            let mut v = -(self.up[i] + self.down[i]) * f[i];
            if i > 0 {
                v += self.up[i - 1] * f[i - 1];
            }
            if i + 1 < n {
                v += self.down[i + 1] * f[i + 1];
            }
            out[i] = v;
        }
    }

    /// Solves `(I - dt L) f_new = f` in place by the Thomas algorithm.
    /// `I - dt L` has unit column sums and non-positive off-diagonals, so the
    /// update keeps mass and positivity and needs no pivoting.
    fn backward_euler(&self, f: &mut [f64], dt: f64, c: &mut [f64], d: &mut [f64]) {
        let n = f.len();
        let lower = |i: usize| -dt * self.up[i - 1];
        let upper = |i: usize| -dt * self.down[i + 1];
        let diag = |i: usize| 1.0 + dt * (self.up[i] + self.down[i]);
        c[0] = upper(0) / diag(0);
        d[0] = f[0] / diag(0);
        for i in 1..n {
            let denom = diag(i) - lower(i) * c[i - 1];
            c[i] = if i + 1 < n { upper(i) / denom } else { 0.0 };
            d[i] = (f[i] - lower(i) * d[i - 1]) / denom;
        }
        f[n - 1] = d[n - 1];
        for i in (0..n - 1).rev() {
            f[i] = d[i] - c[i] * f[i + 1];
        }
    }

    /// `d<m>/dt` of the discrete chain for the given density.
    pub fn mean_rate(&self, grid: &PdfGrid) -> f64 {
        let mut lf = vec![0.0; grid.n_cells()];
        self.apply(&grid.values, &mut lf);
        lf.iter()
            .enumerate()
            .map(|(i, v)| (self.m_min + (i as f64 + 0.5) * self.dx) * v * self.dx)
            .sum()
    }
}

/// Time stepping of the grid solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Two-stage SSP Runge-Kutta under the explicit stability bound.
    Explicit,
    /// Backward Euler with step `dt_max`; unconditionally stable, for long
    /// quasi-static runs where only the settled density matters.
    Implicit,
}

/// Step and output controls for [`fp_grid_solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridOptions {
    pub scheme: Scheme,
    /// Time between emitted moment reports [ns].
    pub output_interval: f64,
    /// Fraction of the explicit stability bound used per step, in (0, 1].
    pub cfl: f64,
    /// Upper cap on the step [ns].
    pub dt_max: f64,
    /// Smallest acceptable step [ns].
    pub dt_floor: f64,
    /// Largest tolerated share of probability in the two outer cells.
    pub boundary_tol: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            scheme: Scheme::Explicit,
            output_interval: f64::INFINITY,
            cfl: 0.9,
            dt_max: f64::INFINITY,
            dt_floor: 1e-12,
            boundary_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridRun {
    pub grid: PdfGrid,
    /// Moment reports at `t0, t0 + interval, ...` and at the final time.
    pub series: Vec<MomentReport>,
}

/// One-site moments of a density, as reported by the grid solver.
pub fn grid_moments(lat: &Lattice, tau: f64, p: &ModelParams, grid: &PdfGrid) -> MomentReport {
    let dx = grid.dx();
    let weights: Vec<f64> = grid.values.iter().map(|v| v * dx).collect();
    moment_report(lat, tau, p, grid.t, &grid.centers(), Some(&weights))
}

/// Evolves a one-site density at fixed delay `tau` until `t_end` [ns].
///
/// Explicit two-stage strong-stability-preserving Runge-Kutta; the step is
/// `cfl / max_rate`, which keeps the density non-negative.
pub fn fp_grid_solve(
    lat: &Lattice,
    tau: f64,
    t_end: f64,
    init: PdfGrid,
    p: &ModelParams,
    opts: &GridOptions,
) -> Result<GridRun> {
    lat.validate()?;
    if lat.n() != 1 {
        return Err(invalid("lattice.n", "the grid solver handles one site only"));
    }
    if !(t_end >= init.t) {
        return Err(invalid("oracle.t_end", "t_end must not precede the initial time"));
    }
    if !(opts.cfl > 0.0 && opts.cfl <= 1.0) {
        return Err(invalid("oracle.cfl", "cfl must lie in (0, 1]"));
    }
    if !(opts.output_interval > 0.0) {
        return Err(invalid("oracle.output_every", "output interval must be > 0"));
    }

    let op = GridOperator::new(lat, tau, p, &init, OperatorTerms::ALL);
    let dt_nominal = match opts.scheme {
        Scheme::Explicit => {
            let rate = op.max_rate();
            let dt_stable = if rate > 0.0 { opts.cfl / rate } else { f64::INFINITY };
            if dt_stable < opts.dt_floor {
                return Err(Error::CflViolation {
                    dt_required: dt_stable,
                    dt_floor: opts.dt_floor,
                });
            }
            dt_stable.min(opts.dt_max)
        }
        Scheme::Implicit => {
            if !(opts.dt_max > 0.0 && opts.dt_max.is_finite()) {
                return Err(invalid("oracle.dt", "implicit stepping needs a finite dt_max"));
            }
            opts.dt_max
        }
    };

    let check = |g: &PdfGrid| -> Result<()> {
        let share = g.boundary_mass() / g.mass();
        if share > opts.boundary_tol {
            return Err(Error::GridTooSmall {
                boundary_mass: share,
                t: g.t,
            });
        }
        Ok(())
    };

    let mut grid = init;
    check(&grid)?;
    let t0 = grid.t;
    let mut series = vec![grid_moments(lat, tau, p, &grid)];
    let n = grid.n_cells();
    let mut k1 = vec![0.0; n];
    let mut stage = vec![0.0; n];

    // Report count fixed up front so rounding in `k * interval` cannot add
    // a sliver step before `t_end`.
    let n_reports = ((t_end - t0) / opts.output_interval * (1.0 - 1e-12)).ceil() as u64;
    for k in 1..=n_reports {
        let target = if k == n_reports {
            t_end
        } else {
            t0 + k as f64 * opts.output_interval
        };
        while grid.t < target {
            let dt = dt_nominal.min(target - grid.t);
            match opts.scheme {
                Scheme::Explicit => {
                    op.apply(&grid.values, &mut k1);
                    for i in 0..n {
                        stage[i] = grid.values[i] + dt * k1[i];
                    }
                    op.apply(&stage, &mut k1);
                    for i in 0..n {
                        grid.values[i] = 0.5 * grid.values[i] + 0.5 * (stage[i] + dt * k1[i]);
                    }
                }
                Scheme::Implicit => op.backward_euler(&mut grid.values, dt, &mut k1, &mut stage),
            }
            grid.t = if target - grid.t <= dt { target } else { grid.t + dt };
        }
        check(&grid)?;
        series.push(grid_moments(lat, tau, p, &grid));
    }
    Ok(GridRun { grid, series })
}
