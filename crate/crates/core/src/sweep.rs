//! Delay scans with nuclear memory, fringe maps and nullcline branches.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::meanfield::{jump_threshold, relax_to_steady, steady_states, MeanFieldParams, SteadyState};
use crate::model::{count_rate, pump_rate, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
    RoundTrip,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Self::Forward => "forward",
            Self::Backward => "backward",
            Self::RoundTrip => "round-trip",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [Self::Forward, Self::Backward, Self::RoundTrip]
            .into_iter()
            .find(|d| d.name() == name)
    }
}

/// Which leg of a scan a sample belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    Forward,
    Backward,
}

impl Pass {
    pub fn name(self) -> &'static str {
        match self {
            Self::Forward => "fwd",
            Self::Backward => "bwd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSchedule {
    /// First delay [ns].
    pub tau_start: f64,
    /// Last delay [ns].
    pub tau_end: f64,
    /// Delay increment [ns].
    pub tau_step: f64,
    pub direction: Direction,
    /// Overhauser shift before the first delay [rad/ns].
    pub omega_init: f64,
    /// Reseed from `omega_init` every this many samples within a pass.
    pub reset_omega_every: Option<usize>,
}

impl Default for SweepSchedule {
    fn default() -> Self {
        Self {
            tau_start: 0.002,
            tau_end: 1.5,
            tau_step: 0.002,
            direction: Direction::RoundTrip,
            omega_init: 0.0,
            reset_omega_every: None,
        }
    }
}

impl SweepSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_step > 0.0) {
            return Err(invalid("sweep.tau_step", "tau_step > 0 is required"));
        }
        if !(self.tau_start >= 0.0) {
            return Err(invalid("sweep.tau_start", "tau_start >= 0 is required"));
        }
        if !(self.tau_start < self.tau_end) || !self.tau_end.is_finite() {
            return Err(invalid("sweep.tau_end", "tau_start < tau_end is required"));
        }
        if !self.omega_init.is_finite() {
            return Err(invalid("sweep.omega_init", "omega_init must be finite"));
        }
        if self.reset_omega_every == Some(0) {
            return Err(invalid("sweep.reset_omega_every", "reset_omega_every >= 1 is required"));
        }
        Ok(())
    }

    /// `tau_start + k tau_step` up to `tau_end`, ascending.
    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.tau_end - self.tau_start) / self.tau_step * (1.0 + 1e-12)).floor() as usize;
        (0..=n).map(|k| self.tau_start + k as f64 * self.tau_step).collect()
    }
}

/// One point of a scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    /// Delay [ns].
    pub tau: f64,
    /// Quasi-equilibrium Overhauser shift [rad/ns].
    pub omega_f: f64,
    /// `C(omega_f, tau)`.
    pub count: f64,
    /// `beta(omega_f)` [1/ns].
    pub beta_f: f64,
    pub stable: bool,
    /// The shift moved by more than `pi / tau` from the previous sample.
    pub jumped: bool,
    pub pass: Pass,
    /// `|g(omega_f)|` [rad/ns^2].
    pub residual: f64,
}

fn sample(tau: f64, s: &SteadyState, prev: Option<f64>, pass: Pass, p: &ModelParams) -> TraceSample {
    TraceSample {
        tau,
        omega_f: s.omega_f,
        count: count_rate(s.omega_f, tau, p),
        beta_f: pump_rate(s.omega_f, p),
        stable: s.stable,
        jumped: prev.is_some_and(|w| (s.omega_f - w).abs() > jump_threshold(tau)),
        pass,
        residual: s.residual,
    }
}

/// Scans the delay, relaxing to quasi-equilibrium at each step from the
/// previous shift. A round trip runs the ascending grid, then the same grid
/// descending, carrying the shift across the turn.
pub fn run_sweep(s: &SweepSchedule, p: &ModelParams, mf: &MeanFieldParams) -> Result<Vec<TraceSample>> {
    s.validate()?;
    p.validate()?;
    mf.validate(p)?;
    mf.validate_for_tau_max(s.tau_end)?;
    let up = s.grid();
    let down: Vec<f64> = up.iter().rev().copied().collect();
    let passes: Vec<(Pass, &[f64])> = match s.direction {
        Direction::Forward => vec![(Pass::Forward, &up)],
        Direction::Backward => vec![(Pass::Backward, &down)],
        Direction::RoundTrip => vec![(Pass::Forward, &up), (Pass::Backward, &down)],
    };

    let mut trace = Vec::with_capacity(passes.len() * up.len());
    let mut omega = s.omega_init;
    let mut prev: Option<f64> = None;
    for (pass, taus) in passes {
        for (k, &tau) in taus.iter().enumerate() {
            if s.reset_omega_every.is_some_and(|every| k > 0 && k % every == 0) {
                omega = s.omega_init;
            }
            let st = relax_to_steady(omega, tau, p, mf)?;
            trace.push(sample(tau, &st, prev, pass, p));
            omega = st.omega_f;
            prev = Some(st.omega_f);
        }
    }
    Ok(trace)
}

/// Trapezoid integral of `|C_fwd - C_bwd|` over the delay for a round-trip
/// trace [ns]. Zero unless the trace holds both passes on one grid.
pub fn loop_area(trace: &[TraceSample]) -> f64 {
    let fwd: Vec<&TraceSample> = trace.iter().filter(|t| t.pass == Pass::Forward).collect();
    let mut bwd: Vec<&TraceSample> = trace.iter().filter(|t| t.pass == Pass::Backward).collect();
    bwd.reverse();
    if fwd.len() != bwd.len() || fwd.len() < 2 {
        return 0.0;
    }
    let gap: Vec<f64> = fwd.iter().zip(&bwd).map(|(f, b)| (f.count - b.count).abs()).collect();
    fwd.windows(2)
        .zip(gap.windows(2))
        .map(|(t, g)| 0.5 * (g[0] + g[1]) * (t[1].tau - t[0].tau))
        .sum()
}

/// Counts on an `(omega, tau)` grid, stored with `tau` varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeMap {
    pub omega: Vec<f64>,
    pub tau: Vec<f64>,
    pub counts: Vec<f64>,
}

impl FringeMap {
    pub fn get(&self, i_omega: usize, i_tau: usize) -> f64 {
        self.counts[i_omega * self.tau.len() + i_tau]
    }
}

pub fn fringe_map(omega_grid: &[f64], tau_grid: &[f64], p: &ModelParams) -> Result<FringeMap> {
    let ascending = |g: &[f64]| g.windows(2).all(|w| w[0] < w[1]);
    if !ascending(omega_grid) {
        return Err(invalid("fringe.omega", "omega grid must be strictly increasing"));
    }
    if !ascending(tau_grid) || tau_grid.first().is_some_and(|t| *t < 0.0) {
        return Err(invalid("fringe.tau", "tau grid must be non-negative and strictly increasing"));
    }
    let counts = omega_grid
        .par_iter()
        .flat_map_iter(|&w| tau_grid.iter().map(move |&t| count_rate(w, t, p)))
        .collect();
    Ok(FringeMap {
        omega: omega_grid.to_vec(),
        tau: tau_grid.to_vec(),
        counts,
    })
}

/// A root of the drift tagged with its branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullclinePoint {
    pub tau: f64,
    pub root: SteadyState,
    pub branch: usize,
}

/// Delay at which roots appear or vanish in stable/unstable pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fold {
    /// Last delay before the change [ns].
    pub tau_before: f64,
    /// First delay after the change [ns].
    pub tau_after: f64,
    /// Midpoint of the merging pair [rad/ns].
    pub omega: f64,
    /// `true` when the pair is created with increasing delay.
    pub created: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Nullcline {
    /// Roots at each delay, sorted by delay then shift.
    pub points: Vec<NullclinePoint>,
    pub n_branches: usize,
    pub folds: Vec<Fold>,
    /// Root-count changes that could not be explained by adjacent pairs.
    pub unexplained: usize,
}

/// Groups unmatched roots into adjacent stable/unstable pairs. Returns the
/// pair midpoints and the number of roots left over.
fn pair_up(roots: &[SteadyState], unmatched: &[usize]) -> (Vec<f64>, usize) {
    let mut mids = Vec::new();
    let mut left = 0;
    let mut i = 0;
    while i < unmatched.len() {
        if i + 1 < unmatched.len()
            && unmatched[i + 1] == unmatched[i] + 1
            && roots[unmatched[i]].stable != roots[unmatched[i + 1]].stable
        {
            mids.push(0.5 * (roots[unmatched[i]].omega_f + roots[unmatched[i + 1]].omega_f));
            i += 2;
        } else {
            left += 1;
            i += 1;
        }
    }
    (mids, left)
}

/// Roots of the drift along `tau_grid`, chained into branches by
/// nearest-neighbour continuation in `omega` (same stability, step below a
/// quarter fringe `pi / (2 tau)`).
pub fn nullcline(tau_grid: &[f64], p: &ModelParams, mf: &MeanFieldParams) -> Result<Nullcline> {
    p.validate()?;
    mf.validate(p)?;
    if tau_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("steady.tau", "tau grid must be strictly increasing"));
    }
    let slices: Vec<Vec<SteadyState>> = tau_grid.par_iter().map(|&t| steady_states(t, p, mf)).collect();

    let mut points = Vec::new();
    let mut folds = Vec::new();
    let mut unexplained = 0;
    let mut prev_ids: Vec<usize> = Vec::new();
    let mut next_id = 0;
    for (k, roots) in slices.iter().enumerate() {
        let tau = tau_grid[k];
        let mut ids = vec![usize::MAX; roots.len()];
        if k > 0 {
            let old = &slices[k - 1];
            let limit = PI / (2.0 * tau);
            let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
            for (i, r) in roots.iter().enumerate() {
                for (j, o) in old.iter().enumerate() {
                    let d = (r.omega_f - o.omega_f).abs();
                    if r.stable == o.stable && d <= limit {
                        candidates.push((d, i, j));
                    }
                }
            }
            candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut old_taken = vec![false; old.len()];
            for (_, i, j) in candidates {
                if ids[i] == usize::MAX && !old_taken[j] {
                    ids[i] = prev_ids[j];
                    old_taken[j] = true;
                }
            }
            let lost: Vec<usize> = (0..old.len()).filter(|j| !old_taken[*j]).collect();
            let born: Vec<usize> = (0..roots.len()).filter(|i| ids[*i] == usize::MAX).collect();
            let (gone, left_old) = pair_up(old, &lost);
            let (new, left_new) = pair_up(roots, &born);
            unexplained += left_old + left_new;
            for (omega, created) in gone.into_iter().map(|w| (w, false)).chain(new.into_iter().map(|w| (w, true))) {
                folds.push(Fold {
                    tau_before: tau_grid[k - 1],
                    tau_after: tau,
                    omega,
                    created,
                });
            }
        }
        for id in ids.iter_mut() {
            if *id == usize::MAX {
                *id = next_id;
                next_id += 1;
            }
        }
        for (r, &id) in roots.iter().zip(&ids) {
            points.push(NullclinePoint {
                tau,
                root: *r,
                branch: id,
            });
        }
        prev_ids = ids;
    }
    Ok(Nullcline {
        points,
        n_branches: next_id,
        folds,
        unexplained,
    })
}
