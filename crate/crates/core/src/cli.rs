//! Subcommand drivers behind the `overhauser` binary.
//!
//! Each subcommand computes its tables in memory, then writes them together
//! with a `<subcommand>.meta` sidecar holding the effective configuration.
//! Failures print one JSON record on stderr and map to exit codes 2
//! (configuration), 3 (numerical) or 1 (file system).

use std::fs;
use std::path::PathBuf;

use clap::{Parser, ValueEnum};
use serde_json::json;
use thiserror::Error;

use crate::config::{echo, parse_config_with_overrides, ConfigError, EffectiveConfig, OutputFormat, RunConfig};
use crate::lattice::compare::{compare_meanfield, CompareOptions};
use crate::meanfield::steady_states;
use crate::model::{alpha_from_lattice, trion_flip_rate};
use crate::output::{write_all, Cell, Table};
use crate::sweep::{fringe_map, nullcline, run_sweep, Direction, SweepSchedule};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Subcommand {
    /// Counts on an (omega, tau) grid.
    FringeMap,
    /// Delay scan with nuclear memory.
    Sweep,
    /// Drift roots at fixed delays, optionally the full nullcline.
    Steady,
    /// Full-distribution oracle against the mean-field shift.
    Oracle,
    /// Golden-rule trion flip rate.
    Rate,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Self::FringeMap => "fringe-map",
            Self::Sweep => "sweep",
            Self::Steady => "steady",
            Self::Oracle => "oracle",
            Self::Rate => "rate",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "overhauser", version, about = "Overhauser-field feedback under pulsed Ramsey sequences")]
pub struct Args {
    #[arg(value_enum)]
    pub subcommand: Subcommand,
    /// TOML configuration; all defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set model.T=30`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory, overriding `output.dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Random seed, overriding `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Numeric(#[from] crate::Error),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Numeric(crate::Error::InvalidParameter { .. }) => 2,
            Self::Numeric(_) => 3,
            Self::Io { .. } => 1,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            Self::Config(e) => e.code(),
            Self::Numeric(e) => e.code(),
            Self::Io { .. } => "IO_ERROR",
        }
    }

    /// Machine-readable description, printed as one line of JSON.
    pub fn record(&self) -> serde_json::Value {
        let mut rec = json!({ "error": self.code(), "message": self.to_string() });
        match self {
            Self::Config(ConfigError::Parse { origin, line, column, .. }) => {
                rec["origin"] = json!(origin);
                rec["line"] = json!(line);
                rec["column"] = json!(column);
            }
            Self::Config(ConfigError::Validation { key, .. }) => rec["key"] = json!(key),
            Self::Numeric(e) => {
                if let crate::Error::InvalidParameter { name, .. } = e {
                    rec["key"] = json!(name);
                }
                if let Some(tau) = e.tau() {
                    rec["tau_ns"] = json!(tau);
                }
            }
            Self::Io { path, .. } => rec["path"] = json!(path.display().to_string()),
        }
        rec
    }
}

/// Reads the configuration named in `args` and applies the command-line
/// overrides, `--out` and `--seed` last.
pub fn load_config(args: &Args) -> Result<EffectiveConfig, CliError> {
    let text = match &args.config {
        Some(path) => fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?,
        None => String::new(),
    };
    let mut overrides = args.set.clone();
    if let Some(dir) = &args.out {
        let dir = toml::Value::String(dir.display().to_string());
        overrides.push(format!("output.dir = {dir}"));
    }
    if let Some(seed) = args.seed {
        overrides.push(format!("seed = {seed}"));
    }
    Ok(parse_config_with_overrides(&text, &overrides)?)
}

/// Output files of one subcommand: `(file name, contents)`.
pub type Files = Vec<(String, String)>;

/// Computes the tables of `cmd` and renders them, sidecar last.
pub fn render_subcommand(cmd: Subcommand, eff: &EffectiveConfig) -> Result<Files, CliError> {
    let cfg = &eff.config;
    let csv = |t: &Table| t.render(OutputFormat::Csv, cfg.output.precision);
    let mut files: Files = match cmd {
        Subcommand::FringeMap => vec![("fringe_map.csv".into(), csv(&fringe_table(cfg)?))],
        Subcommand::Sweep => vec![("sweep.csv".into(), csv(&sweep_table(cfg)?))],
        Subcommand::Steady => vec![("steady.csv".into(), csv(&steady_table(cfg)?))],
        Subcommand::Oracle => {
            let (summary, series) = oracle_tables(cfg)?;
            let ext = cfg.output.format.extension();
            vec![
                ("oracle.csv".into(), csv(&summary)),
                (format!("oracle_series.{ext}"), series.render(cfg.output.format, cfg.output.precision)),
            ]
        }
        Subcommand::Rate => vec![("rate.csv".into(), csv(&rate_table(cfg)))],
    };
    let names: Vec<&str> = files.iter().map(|(n, _)| n.as_str()).collect();
    let meta = echo(
        eff,
        &[
            ("tool_version", TOOL_VERSION.to_string()),
            ("subcommand", cmd.name().to_string()),
            ("files", names.join(" ")),
        ],
    );
    files.push((format!("{}.meta", cmd.name().replace('-', "_")), meta));
    Ok(files)
}

/// Runs `cmd` and writes its files into `output.dir`.
pub fn run_subcommand(cmd: Subcommand, eff: &EffectiveConfig) -> Result<Vec<PathBuf>, CliError> {
    let files = render_subcommand(cmd, eff)?;
    let dir = PathBuf::from(&eff.config.output.dir);
    write_all(&dir, &files).map_err(|source| CliError::Io { path: dir, source })
}

/// Entry point shared by the binary and the tests. Returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match load_config(&args).and_then(|eff| run_subcommand(args.subcommand, &eff)) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("{}", e.record());
            e.exit_code()
        }
    }
}

// ---------------------------------------------------------------------------
// Tables

pub fn fringe_table(cfg: &RunConfig) -> Result<Table, CliError> {
    let map = fringe_map(&cfg.omega_grid(), &cfg.tau_grid(), &cfg.model_params())?;
    let mut t = Table::new(&["omega_rad_per_ns", "tau_ns", "count"]);
    for (i, &w) in map.omega.iter().enumerate() {
        for (k, &tau) in map.tau.iter().enumerate() {
            t.push(vec![w.into(), tau.into(), map.get(i, k).into()]);
        }
    }
    Ok(t)
}

pub fn sweep_table(cfg: &RunConfig) -> Result<Table, CliError> {
    let trace = run_sweep(&cfg.sweep, &cfg.model_params(), &cfg.meanfield_params())?;
    let mut t = Table::new(&[
        "tau_ns",
        "omega_f_rad_per_ns",
        "count",
        "beta_per_ns",
        "stable",
        "jumped",
        "pass",
    ]);
    for s in trace {
        t.push(vec![
            s.tau.into(),
            s.omega_f.into(),
            s.count.into(),
            s.beta_f.into(),
            s.stable.into(),
            s.jumped.into(),
            s.pass.name().into(),
        ]);
    }
    Ok(t)
}

/// Roots at `steady.taus`; with `steady.nullcline` the branches along the
/// sweep grid follow, tagged with their branch id.
pub fn steady_table(cfg: &RunConfig) -> Result<Table, CliError> {
    let p = cfg.model_params();
    let mf = cfg.meanfield_params();
    p.validate()?;
    mf.validate(&p)?;
    let mut t = Table::new(&[
        "kind",
        "tau_ns",
        "omega_f_rad_per_ns",
        "stable",
        "residual",
        "basin_seed_rad_per_ns",
        "branch",
    ]);
    for &tau in &cfg.steady.taus {
        for r in steady_states(tau, &p, &mf) {
            t.push(vec![
                "root".into(),
                tau.into(),
                r.omega_f.into(),
                r.stable.into(),
                r.residual.into(),
                r.basin_seed.into(),
                Cell::Empty,
            ]);
        }
    }
    if cfg.steady.nullcline {
        let nc = nullcline(&cfg.tau_grid(), &p, &mf)?;
        for pt in nc.points {
            t.push(vec![
                "nullcline".into(),
                pt.tau.into(),
                pt.root.omega_f.into(),
                pt.root.stable.into(),
                pt.root.residual.into(),
                pt.root.basin_seed.into(),
                pt.branch.into(),
            ]);
        }
    }
    Ok(t)
}

/// Summary per delay and the full moment series.
pub fn oracle_tables(cfg: &RunConfig) -> Result<(Table, Table), CliError> {
    let opts = CompareOptions {
        schedule: SweepSchedule {
            direction: Direction::Forward,
            ..cfg.sweep
        },
        t_end: cfg.oracle.t_end,
        n_outputs: cfg.oracle.n_outputs,
        n_cells: cfg.oracle.n_cells,
        n_traj: cfg.oracle.n_traj,
        seed: cfg.seed,
        dt: cfg.oracle.dt,
    };
    let rows = compare_meanfield(
        &cfg.lattice(),
        &cfg.oracle.taus,
        &cfg.model_params(),
        &cfg.meanfield_params(),
        &opts,
    )?;
    let mut summary = Table::new(&[
        "tau_ns",
        "method",
        "seed_omega_rad_per_ns",
        "meanfield_omega_rad_per_ns",
        "meanfield_stable",
        "relaxation_rate_per_ns",
        "mean_omega_rad_per_ns",
        "se_mean",
        "var_omega",
        "relative_error",
        "flatness_error",
        "remainder",
    ]);
    let mut series = Table::new(&[
        "tau_ns",
        "t_ns",
        "mean_omega_rad_per_ns",
        "var_omega",
        "se_mean",
        "se_var",
        "trion_drift_exact",
        "trion_drift_reduced",
        "trion_drift_meanfield",
        "remainder",
        "flatness_error",
        "mass",
    ]);
    for row in &rows {
        let o = &row.oracle;
        summary.push(vec![
            row.tau.into(),
            row.method.name().into(),
            row.seed_omega.into(),
            row.meanfield.omega_f.into(),
            row.meanfield.stable.into(),
            row.relaxation_rate.into(),
            o.mean_omega.into(),
            o.se_mean.into(),
            o.var_omega.into(),
            row.relative_error().into(),
            o.flatness_error.into(),
            o.remainder.into(),
        ]);
        for m in &row.series {
            series.push(vec![
                row.tau.into(),
                m.t.into(),
                m.mean_omega.into(),
                m.var_omega.into(),
                m.se_mean.into(),
                m.se_var.into(),
                m.trion_drift_exact.into(),
                m.trion_drift_reduced.into(),
                m.trion_drift_meanfield.into(),
                m.remainder.into(),
                m.flatness_error.into(),
                m.mass.into(),
            ]);
        }
    }
    Ok((summary, series))
}

pub fn rate_table(cfg: &RunConfig) -> Table {
    let h = cfg.hole_params();
    let rate = trion_flip_rate(&h);
    let mut t = Table::new(&[
        "b0_t",
        "g_h",
        "linewidth_ghz",
        "inv_r3_nm3",
        "flip_rate_per_ns",
        "flip_time_ms",
        "lattice_alpha",
        "meanfield_alpha",
    ]);
    t.push(vec![
        cfg.hole.b0_t.into(),
        cfg.hole.g_h.into(),
        cfg.hole.linewidth_ghz.into(),
        cfg.hole.inv_r3_nm3.into(),
        rate.into(),
        (1e-6 / rate).into(),
        alpha_from_lattice(&cfg.lattice()).into(),
        cfg.meanfield_params().alpha.into(),
    ]);
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use crate::model::count_rate;

    fn cfg(text: &str) -> EffectiveConfig {
        parse_config(text).unwrap()
    }

    #[test]
    fn sweep_without_feedback_is_the_bare_fringe() {
        let eff = cfg("meanfield.alpha = 0.0\nsweep.tau_end = 0.4\nsweep.tau_step = 0.01\n");
        let t = sweep_table(&eff.config).unwrap();
        let p = eff.config.model_params();
        assert_eq!(t.rows.len(), 2 * 40);
        for row in &t.rows {
            let (Cell::Float(tau), Cell::Float(w), Cell::Float(c)) = (&row[0], &row[1], &row[2]) else {
                panic!()
            };
            assert_eq!(*w, 0.0);
            assert_eq!(*c, count_rate(0.0, *tau, &p));
        }
    }

    #[test]
    fn steady_without_feedback_has_one_stable_zero() {
        let eff = cfg("meanfield.alpha = 0.0\n");
        let t = steady_table(&eff.config).unwrap();
        assert_eq!(t.rows.len(), 1);
        let Cell::Float(w) = t.rows[0][2] else { panic!() };
        let mf = eff.config.meanfield_params();
        assert!(w.abs() <= mf.relax_tol * eff.config.model_params().sigma, "{w}");
        assert_eq!(t.rows[0][3], Cell::Bool(true));
    }

    #[test]
    fn nullcline_rows_follow_the_roots() {
        let eff = cfg("steady.nullcline = true\nsweep.tau_start = 0.1\nsweep.tau_end = 0.2\nsweep.tau_step = 0.02\n");
        let t = steady_table(&eff.config).unwrap();
        let kinds: Vec<_> = t.rows.iter().map(|r| r[0].clone()).collect();
        let first_nc = kinds.iter().position(|k| *k == Cell::from("nullcline")).unwrap();
        assert!(first_nc > 0);
        assert!(kinds[first_nc..].iter().all(|k| *k == Cell::from("nullcline")));
        assert!(t.rows[first_nc..].iter().all(|r| matches!(r[6], Cell::Int(_))));
    }

    #[test]
    fn rate_row_uses_hole_parameters() {
        let t = rate_table(&cfg("hole.b0_t = 2.0\n").config);
        let base = rate_table(&cfg("").config);
        let (Cell::Float(r2), Cell::Float(r4)) = (&t.rows[0][4], &base.rows[0][4]) else {
            panic!()
        };
        assert!((r2 / r4 - 4.0).abs() < 1e-12);
    }

    #[test]
    fn sidecar_round_trips_and_names_the_files() {
        let eff = cfg("sweep.tau_end = 0.1\nsweep.tau_step = 0.01\n");
        let files = render_subcommand(Subcommand::Sweep, &eff).unwrap();
        assert_eq!(files.len(), 2);
        let (name, meta) = &files[1];
        assert_eq!(name, "sweep.meta");
        assert!(meta.contains("meta.subcommand = \"sweep\""));
        assert!(meta.contains("meta.files = \"sweep.csv\""));
        assert_eq!(parse_config(meta).unwrap().config, eff.config);
    }

    #[test]
    fn error_records_carry_codes() {
        let err = CliError::from(parse_config("model.T = -1\n").unwrap_err());
        assert_eq!(err.exit_code(), 2);
        assert_eq!(err.record()["key"], "model.T");
        let err = CliError::from(crate::Error::NoConvergence {
            tau: 0.3,
            t_reached: 1.0,
            omega: 0.0,
            drift: 1.0,
        });
        assert_eq!(err.exit_code(), 3);
        assert_eq!(err.record()["error"], "NO_CONVERGENCE");
        assert_eq!(err.record()["tau_ns"], 0.3);
    }
}
