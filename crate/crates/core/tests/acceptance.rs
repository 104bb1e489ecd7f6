//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the report reads top to
//! bottom. Exits non-zero when any criterion fails.

use std::f64::consts::TAU;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use overhauser::lattice::compare::{compare_meanfield, linearized_variance, relaxation_rate, CompareOptions};
use overhauser::lattice::grid::{fp_grid_solve, GridOptions, PdfGrid};
use overhauser::lattice::langevin::{langevin_ensemble, EnsembleOptions, InitialState};
use overhauser::meanfield::{d2_omega_c, drift, relax_to_steady, steady_states, MeanFieldParams, RatioUnits};
use overhauser::model::{count_rate, pulse_map_fixed_point, trion_flip_rate, HoleNuclearParams, ModelParams};
use overhauser::sweep::{loop_area, run_sweep, Pass, SweepSchedule, TraceSample};
use overhauser::{Lattice, MomentReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

// 1 -------------------------------------------------------------------------

fn closed_form_vs_pulse_map() -> Outcome {
    let p = ModelParams::defaults();
    let mut worst: f64 = 0.0;
    for &w in &linspace(-4.0 * p.sigma, 4.0 * p.sigma, 100) {
        for &tau in &linspace(0.0, 1.5, 100) {
            let (_, iterated) = match pulse_map_fixed_point(w, tau, &p) {
                Ok(x) => x,
                Err(e) => return outcome(false, format!("pulse map failed at w={w} tau={tau}: {e}")),
            };
            worst = worst.max((count_rate(w, tau, &p) - iterated).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max |dC| = {worst:.2e} over 100x100 (limit 1e-12)"))
}

// 2 -------------------------------------------------------------------------

fn curvature_vs_finite_differences() -> Outcome {
    let p = ModelParams::defaults();
    let h = 1e-3;
    let f = |w: f64, tau: f64| w * count_rate(w, tau, &p);
    let mut values = Vec::new();
    for &w in &linspace(-4.0 * p.sigma, 4.0 * p.sigma, 50) {
        for &tau in &linspace(0.01, 1.5, 50) {
            let fd = (-f(w + 2.0 * h, tau) + 16.0 * f(w + h, tau) - 30.0 * f(w, tau) + 16.0 * f(w - h, tau)
                - f(w - 2.0 * h, tau))
                / (12.0 * h * h);
            values.push((d2_omega_c(w, tau, &p), fd));
        }
    }
    // Points where the curvature crosses zero are judged against a floor set
    // by the rounding error of the difference quotient.
    let peak = values.iter().map(|(a, _)| a.abs()).fold(0.0, f64::max);
    let floor = 1e-6 * peak;
    let worst = values
        .iter()
        .map(|(a, fd)| (a - fd).abs() / a.abs().max(floor))
        .fold(0.0, f64::max);
    let floored = values.iter().filter(|(a, _)| a.abs() < floor).count();
    outcome(
        worst <= 1e-4,
        format!("max relative error {worst:.2e} over 50x50 (limit 1e-4; {floored} points below floor {floor:.1e})"),
    )
}

// 3 -------------------------------------------------------------------------

fn steady_state_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut n_roots = 0;
    let mut machine_limited = 0;
    for draw in 0..20 {
        let t_pump = rng.random_range(10.0..40.0);
        let p = ModelParams {
            t_pump,
            beta0: rng.random_range(1.0..6.0) / t_pump,
            sigma: TAU * rng.random_range(0.5..3.0),
            s_p: rng.random_range(0.3..0.5),
            ..ModelParams::defaults()
        };
        let rho = 10f64.powf(rng.random_range(2.0..6.0));
        let mf = MeanFieldParams::from_ratio(1e-6, rho, RatioUnits::RadPerPs, &p);
        let tau = rng.random_range(0.02..1.5);
        let tol = mf.drift_tolerance(&p);
        let roots = steady_states(tau, &p, &mf);
        if roots.len() % 2 != 1 {
            return outcome(false, format!("draw {draw}: {} roots at tau={tau:.4}", roots.len()));
        }
        if !roots[0].stable || roots.windows(2).any(|r| r[0].stable == r[1].stable) {
            return outcome(false, format!("draw {draw}: stability does not alternate at tau={tau:.4}"));
        }
        for r in &roots {
            let g = drift(r.omega_f, tau, &p, &mf).abs();
            if g > tol {
                if !r.is_resolved(tol) {
                    return outcome(false, format!("draw {draw}: |g| = {g:.2e} > tol {tol:.2e} at {}", r.omega_f));
                }
                machine_limited += 1;
            }
        }
        n_roots += roots.len();
    }
    outcome(
        true,
        format!(
            "20 draws, {n_roots} roots, odd counts, alternating stability; \
             {machine_limited} roots bracketed to 2 ulp without reaching |g| <= tol"
        ),
    )
}

// 4 -------------------------------------------------------------------------

fn meanfield_vs_grid_oracle() -> Outcome {
    let p = ModelParams::defaults();
    let mf = MeanFieldParams::defaults(&p);
    let lat = Lattice::matched_single_site(&mf, 1e-8);
    let taus: Vec<f64> = (0..=30).map(|i| 0.15 + 0.005 * i as f64).collect();
    let opts = CompareOptions {
        schedule: SweepSchedule {
            tau_end: 0.32,
            ..CompareOptions::default().schedule
        },
        ..CompareOptions::default()
    };
    let rows = match compare_meanfield(&lat, &taus, &p, &mf, &opts) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("oracle failed: {e}")),
    };
    let flat: Vec<_> = rows.iter().filter(|r| r.oracle.flatness_error < 0.05).collect();
    let worst = flat.iter().map(|r| r.relative_error()).fold(0.0, f64::max);
    let pass = flat.len() >= 5 && worst <= 0.05;
    outcome(
        pass,
        format!(
            "{} of {} delays with flatness < 0.05; max |<W> - w_f|/|w_f| = {worst:.2e} (limit 5e-2)",
            flat.len(),
            rows.len()
        ),
    )
}

// 5 -------------------------------------------------------------------------

fn grid_series(
    lat: &Lattice,
    tau: f64,
    t_end: f64,
    interval: f64,
    mean: f64,
    std: f64,
    cells: usize,
    p: &ModelParams,
) -> Result<Vec<MomentReport>, String> {
    let init = PdfGrid::gaussian(mean - 14.0 * std, mean + 14.0 * std, cells, mean, std).map_err(|e| e.to_string())?;
    let opts = GridOptions {
        output_interval: interval,
        ..GridOptions::default()
    };
    fp_grid_solve(lat, tau, t_end, init, p, &opts)
        .map(|run| run.series)
        .map_err(|e| e.to_string())
}

fn ensemble_vs_grid() -> Outcome {
    let p = ModelParams::defaults();
    let mf = MeanFieldParams::defaults(&p);
    let lat = Lattice::matched_single_site(&mf, 1e-8);
    let tau = 0.19;
    let root = match relax_to_steady(-25.0, tau, &p, &mf) {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let lambda = relaxation_rate(root.omega_f, tau, &p, &mf);
    let std_lin = linearized_variance(&lat, root.omega_f, tau, &p, lambda).sqrt();
    // Start displaced and too wide so both moments relax over the run.
    let (mean0, std0) = (root.omega_f + 2.0 * std_lin, 2.0 * std_lin);
    let t_end = 4.0 / lambda;
    let n_out = 20;
    let interval = t_end / n_out as f64;

    let coarse = grid_series(&lat, tau, t_end, interval, mean0, std0, 400, &p);
    let fine = grid_series(&lat, tau, t_end, interval, mean0, std0, 800, &p);
    let (coarse, fine) = match (coarse, fine) {
        (Ok(c), Ok(f)) => (c, f),
        (Err(e), _) | (_, Err(e)) => return outcome(false, format!("grid failed: {e}")),
    };
    let ens_opts = EnsembleOptions {
        dt: 0.01 / lambda,
        output_interval: interval,
        initial: InitialState::Gaussian {
            mean: vec![mean0],
            std: vec![std0],
        },
    };
    let n_traj = 10_000;
    let ens = match langevin_ensemble(&lat, tau, t_end, n_traj, 17, &p, &ens_opts) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("ensemble failed: {e}")),
    };
    if ens.len() != fine.len() {
        return outcome(false, format!("{} ensemble vs {} grid reports", ens.len(), fine.len()));
    }
    // Combined error: ensemble standard error and the grid's change under
    // refinement.
    let mut worst: f64 = 0.0;
    for ((e, g), c) in ens.iter().zip(&fine).zip(&coarse) {
        if (e.t - g.t).abs() > 1e-9 * t_end {
            return outcome(false, format!("report times differ: {} vs {}", e.t, g.t));
        }
        let se_mean = e.se_mean.hypot(g.mean_omega - c.mean_omega);
        let se_var = e.se_var.hypot(g.var_omega - c.var_omega);
        worst = worst
            .max((e.mean_omega - g.mean_omega).abs() / se_mean)
            .max((e.var_omega - g.var_omega).abs() / se_var);
    }
    outcome(
        worst <= 3.0,
        format!(
            "{n_traj} trajectories, {} reports of mean and variance; max deviation {worst:.2} combined SE (limit 3)",
            ens.len()
        ),
    )
}

// 6 -------------------------------------------------------------------------

struct SweepSignature {
    window: usize,
    periods: f64,
    visibility: f64,
    bare_deviation: f64,
    jumps: usize,
    segments: usize,
    non_monotone: usize,
    beta_misaligned: usize,
    area: f64,
}

impl SweepSignature {
    fn pass(&self) -> bool {
        let small_tau = self.periods >= 1.0 && self.visibility >= 0.9 && self.bare_deviation <= 0.05;
        let sawtooth = self.jumps >= 2 && self.segments >= 1 && self.non_monotone == 0;
        small_tau && sawtooth && self.area > 1e-3 && self.beta_misaligned == 0
    }
}

fn analyse_sweep(trace: &[TraceSample], p: &ModelParams, mf: &MeanFieldParams) -> SweepSignature {
    let fwd: Vec<&TraceSample> = trace.iter().filter(|t| t.pass == Pass::Forward).collect();
    let mut bwd: Vec<&TraceSample> = trace.iter().filter(|t| t.pass == Pass::Backward).collect();
    bwd.reverse();
    let n = fwd.len();

    // (a) leading delays where both passes agree, nothing jumps and the
    // drift has a single root.
    let mut w = 0;
    while w < n
        && (fwd[w].count - bwd[w].count).abs() <= 1e-6
        && !fwd[w].jumped
        && !bwd[w].jumped
        && steady_states(fwd[w].tau, p, mf).len() == 1
    {
        w += 1;
    }
    let lead = &fwd[..w];
    let periods = if w > 1 {
        (lead[w - 1].tau - lead[0].tau) / (TAU / p.omega0)
    } else {
        0.0
    };
    let (hi, lo) = lead
        .iter()
        .fold((0.0_f64, f64::INFINITY), |(h, l), t| (h.max(t.count), l.min(t.count)));
    let visibility = if w > 0 { (hi - lo) / (hi + lo) } else { 0.0 };
    // Largest departure from the fringe without nuclear feedback over the
    // first fringe period of the scan, relative to its peak.
    let first: Vec<&&TraceSample> = fwd.iter().take_while(|t| t.tau <= fwd[0].tau + TAU / p.omega0).collect();
    let peak = first.iter().map(|t| count_rate(0.0, t.tau, p)).fold(0.0, f64::max);
    let bare_deviation = first
        .iter()
        .map(|t| (t.count - count_rate(0.0, t.tau, p)).abs())
        .fold(0.0, f64::max)
        / peak;

    // (b), (d) past the window: segments bounded by jumps on both sides.
    let jumps: Vec<usize> = (w..n).filter(|&i| fwd[i].jumped).collect();
    let mut segments = 0;
    let mut non_monotone = 0;
    let mut beta_misaligned = 0;
    for (k, &j) in jumps.iter().enumerate() {
        let start = if k == 0 { w } else { jumps[k - 1] };
        let seg = &fwd[start..j];
        if k > 0 && seg.len() >= 3 {
            segments += 1;
            let up = seg.windows(2).all(|x| x[1].count >= x[0].count);
            let down = seg.windows(2).all(|x| x[1].count <= x[0].count);
            if !(up || down) {
                non_monotone += 1;
            }
        }
        let beta_min = seg.iter().map(|t| t.beta_f).fold(f64::INFINITY, f64::min);
        let before = fwd[j - 1].beta_f;
        if !(before == beta_min && fwd[j].beta_f > before) {
            beta_misaligned += 1;
        }
    }
    SweepSignature {
        window: w,
        periods,
        visibility,
        bare_deviation,
        jumps: jumps.len(),
        segments,
        non_monotone,
        beta_misaligned,
        area: loop_area(trace),
    }
}

fn hysteresis_reproduction() -> Outcome {
    let p = ModelParams::defaults();
    let schedule = SweepSchedule::default();
    let mut lines = Vec::new();
    let mut target = None;
    let mut slowest = Duration::ZERO;
    for units in [RatioUnits::RadPerPs, RatioUnits::RadPerNs] {
        for exp in 2..=6 {
            let rho = 10f64.powi(exp);
            let mf = MeanFieldParams::from_ratio(1e-6, rho, units, &p);
            let start = Instant::now();
            let trace = match run_sweep(&schedule, &p, &mf) {
                Ok(t) => t,
                Err(e) => return outcome(false, format!("sweep failed at rho=1e{exp} {}: {e}", units.name())),
            };
            slowest = slowest.max(start.elapsed());
            let f = analyse_sweep(&trace, &p, &mf);
            lines.push(format!(
                "      rho=1e{exp} {:<6} window {:>3} ({:.1} periods, visibility {:.3}, off bare fringe {:.3}) \
                 jumps {:>2}, segments {:>2} ({} non-monotone), beta misaligned {}, area {:.3e} -> {}",
                units.name(),
                f.window,
                f.periods,
                f.visibility,
                f.bare_deviation,
                f.jumps,
                f.segments,
                f.non_monotone,
                f.beta_misaligned,
                f.area,
                if f.pass() { "all four" } else { "no" }
            ));
            if units == RatioUnits::RadPerPs && exp == 4 {
                target = Some(f.pass());
            }
        }
    }
    let pass = target == Some(true) && slowest < Duration::from_secs(120);
    outcome(
        pass,
        format!(
            "rho=1e4 in ps^2/rad^2 shows (a)-(d); slowest sweep {slowest:.2?}\n{}",
            lines.join("\n")
        ),
    )
}

// 7 -------------------------------------------------------------------------

fn golden_rule_rate() -> Outcome {
    let h = HoleNuclearParams::defaults();
    let rate = trion_flip_rate(&h);
    let target = 5e-8;
    let in_decade = rate >= target / 10.0 && rate <= target * 10.0;
    let b = trion_flip_rate(&HoleNuclearParams { b0: 2.0 * h.b0, ..h }) / rate;
    let g = trion_flip_rate(&HoleNuclearParams {
        gamma_rad: 3.0 * h.gamma_rad,
        ..h
    }) / rate;
    let scaling = (b - 0.25).abs() <= 1e-12 && (g - 3.0).abs() <= 1e-12;
    outcome(
        in_decade && scaling,
        format!("rate {rate:.4e} /ns (target 5e-8 within 10x); B0 x2 -> x{b:.12}, gamma x3 -> x{g:.12}"),
    )
}

// 8 -------------------------------------------------------------------------

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_overhauser"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(String::from_utf8_lossy(&out.stderr).into_owned())
    }
}

fn determinism() -> Outcome {
    let tmp = match tempfile::tempdir() {
        Ok(t) => t,
        Err(e) => return outcome(false, e.to_string()),
    };
    let runs: [(&str, &[&str], &[&str]); 2] = [
        ("sweep", &["sweep", "--seed", "5"], &["sweep.csv"]),
        (
            "oracle",
            &[
                "oracle",
                "--seed",
                "5",
                "--set",
                "lattice.n=3",
                "--set",
                "oracle.taus=[0.19, 0.24]",
                "--set",
                "oracle.n_traj=2000",
            ],
            &["oracle.csv", "oracle_series.csv"],
        ),
    ];
    let mut compared = 0;
    for (name, args, files) in runs {
        let a = tmp.path().join(format!("{name}-a"));
        let b = tmp.path().join(format!("{name}-b"));
        for dir in [&a, &b] {
            if let Err(e) = run_cli(dir, args) {
                return outcome(false, format!("{name} failed: {e}"));
            }
        }
        for file in files {
            let (x, y) = (std::fs::read(a.join(file)), std::fs::read(b.join(file)));
            match (x, y) {
                (Ok(x), Ok(y)) if x == y && !x.is_empty() => compared += x.len(),
                _ => return outcome(false, format!("{name}: {file} differs between runs")),
            }
        }
    }
    outcome(true, format!("sweep and oracle runs byte-identical ({compared} bytes compared)"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 8] = [
        ("closed-form count vs pulse-map iteration", closed_form_vs_pulse_map, Duration::from_secs(1)),
        ("analytic curvature vs finite differences", curvature_vs_finite_differences, Duration::from_secs(1)),
        ("steady-state soundness", steady_state_soundness, Duration::from_secs(10)),
        ("mean-field vs grid oracle", meanfield_vs_grid_oracle, Duration::from_secs(300)),
        ("trajectory ensemble vs grid", ensemble_vs_grid, Duration::from_secs(600)),
        ("hysteresis sweep reproduction", hysteresis_reproduction, Duration::from_secs(600)),
        ("golden-rule flip rate", golden_rule_rate, Duration::from_secs(1)),
        ("determinism", determinism, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let elapsed = start.elapsed();
        let pass = out.pass && elapsed <= *budget;
        if !pass {
            failed += 1;
        }
        println!(
            "{} [{}] {name}: {} ({elapsed:.2?}, budget {budget:.0?})",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            out.detail
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
