//! Run configuration: a TOML document of dotted keys.
//!
//! ```toml
//! model.sigma_ghz = 1.6
//! meanfield.rho = 1e4
//! meanfield.ratio_units = "rad_ps"
//! sweep.tau_step = 0.002
//! ```
//!
//! Frequencies given in GHz are ordinary frequencies and are converted with
//! `2 pi`; the remaining quantities use rad/ns and ns. Unknown keys are
//! rejected, except under `meta.`, which is free for annotations.
//!
//! [`RunConfig`] stores values exactly as written in the configuration's own
//! units, so [`echo`] followed by [`parse_config`] reproduces it bit for bit.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Deserialize;
use thiserror::Error;
use toml::{Table, Value};

use crate::lattice::Lattice;
use crate::meanfield::{MeanFieldParams, RatioUnits};
use crate::model::{ghz_to_rad_per_ns, HoleNuclearParams, ModelParams};
use crate::sweep::{Direction, SweepSchedule};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{origin}:{line}:{column}: {message}")]
    Parse {
        origin: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid `{key}`: {message}")]
    Validation { key: String, message: String },
}

impl ConfigError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Parse { .. } => "PARSE_ERROR",
            Self::Validation { .. } => "VALIDATION_ERROR",
        }
    }

    fn validation(key: &str, message: impl Into<String>) -> Self {
        Self::Validation {
            key: key.to_string(),
            message: message.into(),
        }
    }
}

impl From<crate::Error> for ConfigError {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::InvalidParameter { name, reason } => Self::validation(name, reason),
            other => Self::validation("config", other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Ndjson,
}

impl OutputFormat {
    pub fn name(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Ndjson => "ndjson",
        }
    }

    pub fn extension(self) -> &'static str {
        self.name()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSection {
    pub omega0_ghz: f64,
    pub t: f64,
    pub beta0: f64,
    pub sigma_ghz: f64,
    pub s_p: f64,
    pub t_rep: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoleSection {
    pub b0_t: f64,
    pub g_h: f64,
    pub linewidth_ghz: f64,
    pub inv_r3_nm3: f64,
}

/// How the feedback strength is given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strength {
    /// `kappa / alpha` in the named units.
    Ratio(f64),
    /// `alpha` directly [rad^2/ns^3].
    Alpha(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldSection {
    pub kappa: f64,
    pub strength: Strength,
    pub ratio_units: RatioUnits,
    pub omega_bracket: f64,
    pub fd_step: f64,
    pub relax_tol: f64,
    pub relax_t_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FringeSection {
    pub n_omega: usize,
    /// Half-width of the shift axis [rad/ns].
    pub omega_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadySection {
    pub taus: Vec<f64>,
    pub nullcline: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSection {
    pub n: usize,
    pub a: Vec<f64>,
    pub gamma: Vec<f64>,
    pub f: f64,
    pub d_nn: f64,
    pub d_bath: f64,
    pub envelope_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSection {
    pub taus: Vec<f64>,
    pub t_end: Option<f64>,
    pub n_traj: usize,
    pub dt: Option<f64>,
    pub n_cells: usize,
    pub n_outputs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub dir: String,
    pub format: OutputFormat,
    pub precision: usize,
}

/// Every setting, in configuration units.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelSection,
    pub hole: HoleSection,
    pub meanfield: MeanFieldSection,
    pub sweep: SweepSchedule,
    pub fringe: FringeSection,
    pub steady: SteadySection,
    pub lattice: LatticeSection,
    pub oracle: OracleSection,
    pub output: OutputSection,
    pub seed: u64,
}

/// A parsed configuration and the keys that took their default.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveConfig {
    pub config: RunConfig,
    pub defaulted: BTreeSet<String>,
}

// ---------------------------------------------------------------------------
// Raw document

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: Option<RawModel>,
    hole: Option<RawHole>,
    meanfield: Option<RawMeanField>,
    sweep: Option<RawSweep>,
    fringe: Option<RawFringe>,
    steady: Option<RawSteady>,
    lattice: Option<RawLattice>,
    oracle: Option<RawOracle>,
    output: Option<RawOutput>,
    seed: Option<u64>,
    #[allow(dead_code)]
    meta: Option<Table>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    omega0_ghz: Option<f64>,
    #[serde(rename = "T")]
    t: Option<f64>,
    beta0: Option<f64>,
    sigma_ghz: Option<f64>,
    s_p: Option<f64>,
    t_rep: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHole {
    b0_t: Option<f64>,
    g_h: Option<f64>,
    linewidth_ghz: Option<f64>,
    inv_r3_nm3: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeanField {
    kappa: Option<f64>,
    rho: Option<f64>,
    ratio_units: Option<String>,
    alpha: Option<f64>,
    omega_bracket: Option<f64>,
    fd_step: Option<f64>,
    relax_tol: Option<f64>,
    relax_t_max: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    tau_start: Option<f64>,
    tau_end: Option<f64>,
    tau_step: Option<f64>,
    direction: Option<String>,
    omega_init: Option<f64>,
    reset_omega_every: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFringe {
    n_omega: Option<usize>,
    omega_max: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSteady {
    taus: Option<Vec<f64>>,
    nullcline: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLattice {
    n: Option<usize>,
    a: Option<Vec<f64>>,
    gamma: Option<Vec<f64>>,
    f: Option<f64>,
    d_nn: Option<f64>,
    d_bath: Option<f64>,
    envelope_width: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOracle {
    taus: Option<Vec<f64>>,
    t_end: Option<f64>,
    n_traj: Option<usize>,
    dt: Option<f64>,
    n_cells: Option<usize>,
    n_outputs: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
    format: Option<String>,
    precision: Option<usize>,
}

// ---------------------------------------------------------------------------
// Parsing

fn parse_error(origin: &str, text: &str, err: &toml::de::Error) -> ConfigError {
    let (line, column) = match err.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
            (line, column)
        }
        None => (0, 0),
    };
    ConfigError::Parse {
        origin: origin.to_string(),
        line,
        column,
        message: err.message().trim().to_string(),
    }
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<EffectiveConfig, ConfigError> {
    parse_config_with_overrides(text, &[])
}

/// Parses a document, then applies `key=value` overrides in order. Each
/// override is a one-line TOML assignment such as `model.T=30` or
/// `sweep.direction="forward"`.
pub fn parse_config_with_overrides(text: &str, overrides: &[String]) -> Result<EffectiveConfig, ConfigError> {
    let raw: RawConfig = if overrides.is_empty() {
        toml::from_str(text).map_err(|e| parse_error("config", text, &e))?
    } else {
        // Validate the base document on its own first so locations refer to it.
        toml::from_str::<RawConfig>(text).map_err(|e| parse_error("config", text, &e))?;
        let mut table: Table = toml::from_str(text).map_err(|e| parse_error("config", text, &e))?;
        for (i, item) in overrides.iter().enumerate() {
            let origin = format!("--set #{}", i + 1);
            if !item.contains('=') {
                return Err(ConfigError::Parse {
                    origin,
                    line: 1,
                    column: 1,
                    message: format!("expected key=value, got `{item}`"),
                });
            }
            let over: Table = toml::from_str(item).map_err(|e| parse_error(&origin, item, &e))?;
            merge(&mut table, over);
        }
        let merged = toml::to_string(&table).map_err(|e| ConfigError::validation("--set", e.to_string()))?;
        toml::from_str(&merged).map_err(|e| match parse_error("--set", &merged, &e) {
            ConfigError::Parse { message, .. } => ConfigError::Parse {
                origin: "--set".into(),
                line: 0,
                column: 0,
                message,
            },
            other => other,
        })?
    };
    let eff = resolve(raw)?;
    eff.config.validate()?;
    Ok(eff)
}

struct Defaults<'a>(&'a mut BTreeSet<String>);

impl Defaults<'_> {
    fn take<T>(&mut self, key: &str, value: Option<T>, default: impl FnOnce() -> T) -> T {
        value.unwrap_or_else(|| {
            self.0.insert(key.to_string());
            default()
        })
    }
}

fn resolve(raw: RawConfig) -> Result<EffectiveConfig, ConfigError> {
    let mut defaulted = BTreeSet::new();
    let mut d = Defaults(&mut defaulted);

    let rm = raw.model.unwrap_or_default();
    let t = d.take("model.T", rm.t, || 26.0);
    let model = ModelSection {
        omega0_ghz: d.take("model.omega0_ghz", rm.omega0_ghz, || 25.0),
        t,
        beta0: d.take("model.beta0", rm.beta0, || 3.0 / t),
        sigma_ghz: d.take("model.sigma_ghz", rm.sigma_ghz, || 1.6),
        s_p: d.take("model.s_p", rm.s_p, || 0.5),
        t_rep: d.take("model.t_rep", rm.t_rep, || 143.0),
    };
    let sigma = ghz_to_rad_per_ns(model.sigma_ghz);

    let rh = raw.hole.unwrap_or_default();
    let hole_defaults = HoleNuclearParams::defaults();
    let hole = HoleSection {
        b0_t: d.take("hole.b0_t", rh.b0_t, || hole_defaults.b0),
        g_h: d.take("hole.g_h", rh.g_h, || hole_defaults.g_h),
        linewidth_ghz: d.take("hole.linewidth_ghz", rh.linewidth_ghz, || 0.1),
        inv_r3_nm3: d.take("hole.inv_r3_nm3", rh.inv_r3_nm3, || hole_defaults.inv_r3_avg),
    };

    let rmf = raw.meanfield.unwrap_or_default();
    let ratio_units = match rmf.ratio_units.as_deref() {
        None => {
            d.0.insert("meanfield.ratio_units".into());
            RatioUnits::RadPerPs
        }
        Some(name) => RatioUnits::from_name(name).ok_or_else(|| {
            ConfigError::validation("meanfield.ratio_units", "one of rad_ns, ghz, rad_ps, thz is required")
        })?,
    };
    let strength = match (rmf.rho, rmf.alpha) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::validation(
                "meanfield.alpha",
                "give either meanfield.rho or meanfield.alpha, not both",
            ))
        }
        (Some(rho), None) => Strength::Ratio(rho),
        (None, Some(alpha)) => Strength::Alpha(alpha),
        (None, None) => {
            d.0.insert("meanfield.rho".into());
            Strength::Ratio(1e4)
        }
    };
    let meanfield = MeanFieldSection {
        kappa: d.take("meanfield.kappa", rmf.kappa, || 1e-6),
        strength,
        ratio_units,
        omega_bracket: d.take("meanfield.omega_bracket", rmf.omega_bracket, || 8.0 * sigma),
        fd_step: d.take("meanfield.fd_step", rmf.fd_step, || 1e-3),
        relax_tol: d.take("meanfield.relax_tol", rmf.relax_tol, || 1e-8),
        relax_t_max: d.take("meanfield.relax_t_max", rmf.relax_t_max, || 1e6),
    };

    let rs = raw.sweep.unwrap_or_default();
    let sd = SweepSchedule::default();
    let direction = match rs.direction.as_deref() {
        None => {
            d.0.insert("sweep.direction".into());
            sd.direction
        }
        Some(name) => Direction::from_name(name).ok_or_else(|| {
            ConfigError::validation("sweep.direction", "one of forward, backward, round-trip is required")
        })?,
    };
    if rs.reset_omega_every.is_none() {
        d.0.insert("sweep.reset_omega_every".into());
    }
    let sweep = SweepSchedule {
        tau_start: d.take("sweep.tau_start", rs.tau_start, || sd.tau_start),
        tau_end: d.take("sweep.tau_end", rs.tau_end, || sd.tau_end),
        tau_step: d.take("sweep.tau_step", rs.tau_step, || sd.tau_step),
        direction,
        omega_init: d.take("sweep.omega_init", rs.omega_init, || sd.omega_init),
        reset_omega_every: rs.reset_omega_every,
    };

    let rf = raw.fringe.unwrap_or_default();
    let fringe = FringeSection {
        n_omega: d.take("fringe.n_omega", rf.n_omega, || 201),
        omega_max: d.take("fringe.omega_max", rf.omega_max, || 4.0 * sigma),
    };

    let rst = raw.steady.unwrap_or_default();
    let steady = SteadySection {
        taus: d.take("steady.taus", rst.taus, || vec![0.2]),
        nullcline: d.take("steady.nullcline", rst.nullcline, || false),
    };

    let alpha = match strength {
        Strength::Ratio(rho) => meanfield.kappa / ratio_units.to_internal(rho),
        Strength::Alpha(a) => a,
    };
    let rl = raw.lattice.unwrap_or_default();
    let n = d.take("lattice.n", rl.n, || 1);
    if n == 0 {
        return Err(ConfigError::validation("lattice.n", "n >= 1 is required"));
    }
    let envelope_width = d.take("lattice.envelope_width", rl.envelope_width, || (n as f64 / 4.0).max(1.0));
    let kappa = meanfield.kappa;
    let d_bath = d.take("lattice.d_bath", rl.d_bath, || kappa);
    let d_nn = d.take("lattice.d_nn", rl.d_nn, || kappa);
    let f = d.take("lattice.f", rl.f, || 1e-8);
    let chain = Lattice::gaussian_chain(n, envelope_width, alpha, f, d_nn, d_bath);
    let a = d.take("lattice.a", rl.a, || chain.a.clone());
    let gamma = match rl.gamma {
        Some(g) => g,
        None => {
            d.0.insert("lattice.gamma".into());
            let cubes: f64 = a.iter().map(|x| x.abs().powi(3)).sum();
            a.iter().map(|x| alpha * x.abs() / cubes).collect()
        }
    };
    let lattice = LatticeSection {
        n,
        a,
        gamma,
        f,
        d_nn,
        d_bath,
        envelope_width,
    };

    let ro = raw.oracle.unwrap_or_default();
    if ro.t_end.is_none() {
        d.0.insert("oracle.t_end".into());
    }
    if ro.dt.is_none() {
        d.0.insert("oracle.dt".into());
    }
    let oracle = OracleSection {
        taus: d.take("oracle.taus", ro.taus, || vec![0.184, 0.19, 0.236, 0.24, 0.28]),
        t_end: ro.t_end,
        n_traj: d.take("oracle.n_traj", ro.n_traj, || 10_000),
        dt: ro.dt,
        n_cells: d.take("oracle.n_cells", ro.n_cells, || 400),
        n_outputs: d.take("oracle.n_outputs", ro.n_outputs, || 40),
    };

    let rout = raw.output.unwrap_or_default();
    let format = match rout.format.as_deref() {
        None => {
            d.0.insert("output.format".into());
            OutputFormat::Csv
        }
        Some("csv") => OutputFormat::Csv,
        Some("ndjson") => OutputFormat::Ndjson,
        Some(_) => return Err(ConfigError::validation("output.format", "one of csv, ndjson is required")),
    };
    let output = OutputSection {
        dir: d.take("output.dir", rout.dir, || "out".to_string()),
        format,
        precision: d.take("output.precision", rout.precision, || 12),
    };
    let seed = d.take("seed", raw.seed, || 0);

    Ok(EffectiveConfig {
        config: RunConfig {
            model,
            hole,
            meanfield,
            sweep,
            fringe,
            steady,
            lattice,
            oracle,
            output,
            seed,
        },
        defaulted,
    })
}

// ---------------------------------------------------------------------------
// Typed views

impl RunConfig {
    pub fn model_params(&self) -> ModelParams {
        ModelParams {
            omega0: ghz_to_rad_per_ns(self.model.omega0_ghz),
            t_pump: self.model.t,
            beta0: self.model.beta0,
            sigma: ghz_to_rad_per_ns(self.model.sigma_ghz),
            s_p: self.model.s_p,
            t_rep: self.model.t_rep,
        }
    }

    pub fn hole_params(&self) -> HoleNuclearParams {
        HoleNuclearParams {
            b0: self.hole.b0_t,
            g_h: self.hole.g_h,
            gamma_rad: ghz_to_rad_per_ns(self.hole.linewidth_ghz),
            inv_r3_avg: self.hole.inv_r3_nm3,
        }
    }

    pub fn meanfield_params(&self) -> MeanFieldParams {
        let m = &self.meanfield;
        let alpha = match m.strength {
            Strength::Ratio(rho) => m.kappa / m.ratio_units.to_internal(rho),
            Strength::Alpha(a) => a,
        };
        MeanFieldParams {
            kappa: m.kappa,
            alpha,
            omega_bracket: m.omega_bracket,
            fd_step: m.fd_step,
            relax_tol: m.relax_tol,
            relax_t_max: m.relax_t_max,
        }
    }

    pub fn lattice(&self) -> Lattice {
        let l = &self.lattice;
        Lattice {
            a: l.a.clone(),
            gamma: l.gamma.clone(),
            d_nn: vec![l.d_nn; l.n - 1],
            f: vec![l.f; l.n],
            d_bath: l.d_bath,
        }
    }

    /// The delay axis shared by `sweep`, `fringe-map` and the nullcline.
    pub fn tau_grid(&self) -> Vec<f64> {
        self.sweep.grid()
    }

    /// Evenly spaced shifts on `[-omega_max, omega_max]`.
    pub fn omega_grid(&self) -> Vec<f64> {
        let n = self.fringe.n_omega;
        let w = self.fringe.omega_max;
        (0..n).map(|i| -w + 2.0 * w * i as f64 / (n - 1) as f64).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = self.model_params();
        p.validate()?;
        self.hole_params().validate()?;
        if let Strength::Ratio(rho) = self.meanfield.strength {
            if !(rho > 0.0 && rho.is_finite()) {
                return Err(ConfigError::validation("meanfield.rho", "rho > 0 is required"));
            }
        }
        let mf = self.meanfield_params();
        mf.validate(&p)?;
        self.sweep.validate()?;
        mf.validate_for_tau_max(self.sweep.tau_end)?;
        if self.fringe.n_omega < 2 {
            return Err(ConfigError::validation("fringe.n_omega", "n_omega >= 2 is required"));
        }
        if !(self.fringe.omega_max > 0.0) {
            return Err(ConfigError::validation("fringe.omega_max", "omega_max > 0 is required"));
        }
        if self.steady.taus.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(ConfigError::validation("steady.taus", "delays must be >= 0"));
        }
        let l = &self.lattice;
        if l.a.len() != l.n {
            return Err(ConfigError::validation("lattice.a", "one weight per site is required"));
        }
        if l.gamma.len() != l.n {
            return Err(ConfigError::validation("lattice.gamma", "one rate per site is required"));
        }
        if !(l.envelope_width > 0.0) {
            return Err(ConfigError::validation("lattice.envelope_width", "envelope_width > 0 is required"));
        }
        self.lattice().validate()?;
        let o = &self.oracle;
        if o.taus.is_empty() || o.taus.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(ConfigError::validation("oracle.taus", "at least one delay >= 0 is required"));
        }
        if o.t_end.is_some_and(|t| !(t > 0.0)) {
            return Err(ConfigError::validation("oracle.t_end", "t_end > 0 is required"));
        }
        if o.dt.is_some_and(|t| !(t > 0.0)) {
            return Err(ConfigError::validation("oracle.dt", "dt > 0 is required"));
        }
        if o.n_traj < 100 {
            return Err(ConfigError::validation("oracle.n_traj", "n_traj >= 100 is required"));
        }
        if o.n_cells < 8 {
            return Err(ConfigError::validation("oracle.n_cells", "n_cells >= 8 is required"));
        }
        if o.n_outputs == 0 {
            return Err(ConfigError::validation("oracle.n_outputs", "n_outputs >= 1 is required"));
        }
        if !(1..=17).contains(&self.output.precision) {
            return Err(ConfigError::validation("output.precision", "1 <= precision <= 17 is required"));
        }
        if self.output.dir.is_empty() {
            return Err(ConfigError::validation("output.dir", "a directory is required"));
        }
        Ok(())
    }

    /// Every key with its value, in document order. Unset optional keys
    /// carry `None`.
    pub fn entries(&self) -> Vec<(&'static str, Option<Value>)> {
        let f = |x: f64| Some(Value::Float(x));
        let i = |x: usize| Some(Value::Integer(x as i64));
        let s = |x: &str| Some(Value::String(x.to_string()));
        let list = |v: &[f64]| Some(Value::Array(v.iter().map(|x| Value::Float(*x)).collect()));
        let m = &self.model;
        let h = &self.hole;
        let mf = &self.meanfield;
        let sw = &self.sweep;
        let l = &self.lattice;
        let o = &self.oracle;
        let (rho, alpha) = match mf.strength {
            Strength::Ratio(r) => (f(r), None),
            Strength::Alpha(a) => (None, f(a)),
        };
        vec![
            ("model.omega0_ghz", f(m.omega0_ghz)),
            ("model.T", f(m.t)),
            ("model.beta0", f(m.beta0)),
            ("model.sigma_ghz", f(m.sigma_ghz)),
            ("model.s_p", f(m.s_p)),
            ("model.t_rep", f(m.t_rep)),
            ("hole.b0_t", f(h.b0_t)),
            ("hole.g_h", f(h.g_h)),
            ("hole.linewidth_ghz", f(h.linewidth_ghz)),
            ("hole.inv_r3_nm3", f(h.inv_r3_nm3)),
            ("meanfield.kappa", f(mf.kappa)),
            ("meanfield.rho", rho),
            ("meanfield.alpha", alpha),
            ("meanfield.ratio_units", s(mf.ratio_units.name())),
            ("meanfield.omega_bracket", f(mf.omega_bracket)),
            ("meanfield.fd_step", f(mf.fd_step)),
            ("meanfield.relax_tol", f(mf.relax_tol)),
            ("meanfield.relax_t_max", f(mf.relax_t_max)),
            ("sweep.tau_start", f(sw.tau_start)),
            ("sweep.tau_end", f(sw.tau_end)),
            ("sweep.tau_step", f(sw.tau_step)),
            ("sweep.direction", s(sw.direction.name())),
            ("sweep.omega_init", f(sw.omega_init)),
            ("sweep.reset_omega_every", sw.reset_omega_every.and_then(i)),
            ("fringe.n_omega", i(self.fringe.n_omega)),
            ("fringe.omega_max", f(self.fringe.omega_max)),
            ("steady.taus", list(&self.steady.taus)),
            ("steady.nullcline", Some(Value::Boolean(self.steady.nullcline))),
            ("lattice.n", i(l.n)),
            ("lattice.a", list(&l.a)),
            ("lattice.gamma", list(&l.gamma)),
            ("lattice.f", f(l.f)),
            ("lattice.d_nn", f(l.d_nn)),
            ("lattice.d_bath", f(l.d_bath)),
            ("lattice.envelope_width", f(l.envelope_width)),
            ("oracle.taus", list(&o.taus)),
            ("oracle.t_end", o.t_end.and_then(f)),
            ("oracle.n_traj", i(o.n_traj)),
            ("oracle.dt", o.dt.and_then(f)),
            ("oracle.n_cells", i(o.n_cells)),
            ("oracle.n_outputs", i(o.n_outputs)),
            ("output.dir", s(&self.output.dir)),
            ("output.format", s(self.output.format.name())),
            ("output.precision", i(self.output.precision)),
            ("seed", Some(Value::Integer(self.seed as i64))),
        ]
    }
}

/// The effective configuration as a document that parses back to the same
/// [`RunConfig`]. Defaulted keys are marked `# default`; unset optional keys
/// and `extra` lines are written as comments.
pub fn echo(eff: &EffectiveConfig, extra: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (key, value) in eff.config.entries() {
        let mark = if eff.defaulted.contains(key) { "  # default" } else { "" };
        match value {
            Some(v) => {
                let _ = writeln!(out, "{key} = {v}{mark}");
            }
            None => {
                let _ = writeln!(out, "# {key} unset{mark}");
            }
        }
    }
    for (key, value) in extra {
        let _ = writeln!(out, "meta.{key} = {}", Value::String(value.clone()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn empty_document_gives_defaults() {
        let eff = parse_config("").unwrap();
        let p = eff.config.model_params();
        assert_eq!(p.t_pump, 26.0);
        assert_eq!(p.beta0, 3.0 / 26.0);
        assert!((p.sigma - TAU * 1.6).abs() < 1e-15);
        assert_eq!(p.t_rep, 143.0);
        assert_eq!(p.s_p, 0.5);
        assert!(eff.defaulted.contains("model.T"));
        assert!(eff.defaulted.contains("seed"));
        let mf = eff.config.meanfield_params();
        assert!((mf.ratio() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn sigma_is_converted_from_ghz() {
        let eff = parse_config("model.sigma_ghz = 1.6\n").unwrap();
        assert_eq!(eff.config.model_params().sigma, TAU * 1.6);
        assert!(!eff.defaulted.contains("model.sigma_ghz"));
    }

    #[test]
    fn beta0_default_follows_t() {
        let eff = parse_config("model.T = 30\n").unwrap();
        assert_eq!(eff.config.model.beta0, 0.1);
    }

    #[test]
    fn negative_t_is_a_validation_error() {
        let err = parse_config("model.T = -1\n").unwrap_err();
        assert_eq!(err.code(), "VALIDATION_ERROR");
        match err {
            ConfigError::Validation { key, message } => {
                assert_eq!(key, "model.T");
                assert!(message.contains("T > 0"));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn unknown_key_reports_location() {
        let err = parse_config("model.T = 26\n\nsweep.tau_stpe = 0.1\n").unwrap_err();
        match err {
            ConfigError::Parse { line, column, message, .. } => {
                assert_eq!(line, 3);
                assert!(column >= 1);
                assert!(message.contains("tau_stpe"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_error_reports_location() {
        let err = parse_config("seed = 1\nmodel.T = = 3\n").unwrap_err();
        assert_eq!(err.code(), "PARSE_ERROR");
        assert!(matches!(err, ConfigError::Parse { line: 2, .. }));
    }

    #[test]
    fn meta_keys_are_ignored() {
        assert!(parse_config("meta.note = \"hello\"\nmeta.tool_version = \"0\"\n").is_ok());
    }

    #[test]
    fn rho_and_alpha_conflict() {
        let err = parse_config("meanfield.rho = 1e4\nmeanfield.alpha = 1e-4\n").unwrap_err();
        assert_eq!(err.code(), "VALIDATION_ERROR");
    }

    #[test]
    fn overrides_merge_into_sections() {
        let eff = parse_config_with_overrides(
            "model.T = 30\nmodel.s_p = 0.4\n",
            &["model.T=20".into(), "sweep.direction=\"forward\"".into()],
        )
        .unwrap();
        assert_eq!(eff.config.model.t, 20.0);
        assert_eq!(eff.config.model.s_p, 0.4);
        assert_eq!(eff.config.sweep.direction, Direction::Forward);
        let err = parse_config_with_overrides("", &["model.nope=1".into()]).unwrap_err();
        assert_eq!(err.code(), "PARSE_ERROR");
        let err = parse_config_with_overrides("", &["model.T".into()]).unwrap_err();
        assert_eq!(err.code(), "PARSE_ERROR");
    }

    #[test]
    fn echo_round_trips_exactly() {
        let docs = [
            "",
            "model.sigma_ghz = 1.7\nmeanfield.alpha = 3.3e-5\nsweep.reset_omega_every = 7\n",
            "lattice.n = 4\noracle.t_end = 12.5\noracle.dt = 0.001\noutput.format = \"ndjson\"\nseed = 99\n",
            "meanfield.rho = 0.1\nmeanfield.ratio_units = \"rad_ns\"\nsteady.nullcline = true\n",
        ];
        for doc in docs {
            let eff = parse_config(doc).unwrap();
            let text = echo(&eff, &[("tool_version", "x".into())]);
            let again = parse_config(&text).unwrap();
            assert_eq!(again.config, eff.config, "{text}");
            assert!(again.defaulted.len() <= eff.defaulted.len());
        }
    }

    #[test]
    fn echo_lists_every_key_and_marks_defaults() {
        let eff = parse_config("model.T = 26\n").unwrap();
        let text = echo(&eff, &[]);
        for (key, _) in eff.config.entries() {
            assert!(text.contains(key), "{key}");
        }
        assert!(text.contains("model.T = 26.0\n"));
        assert!(text.contains("model.s_p = 0.5  # default"));
    }

    #[test]
    fn single_site_lattice_matches_meanfield() {
        let cfg = parse_config("").unwrap().config;
        let lat = cfg.lattice();
        let mf = cfg.meanfield_params();
        assert_eq!(lat, Lattice::matched_single_site(&mf, 1e-8));
    }
}
