//! Run configuration: flat `key = value` text with dotted sections, or the
//! equivalent nested JSON object.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use dmv_core::field::{read_state_csv, Grid2D};
use dmv_core::relenergy::{ConstantState, Manufactured, PdeForcing, StrongSolution};
use dmv_core::solver::{InitialCondition, SmoothPerturbation, SolverConfig};
use dmv_core::thermo::FluidParams;
use serde::Serialize;
use thiserror::Error;

use crate::commands::LemmaArgs;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: duplicate key '{key}' (first set on line {first})")]
    Duplicate { key: String, line: usize, first: usize },
    #[error("missing required key '{key}'")]
    Missing { key: String },
    #[error("{}{key}: {msg}", line_prefix(*.line))]
    Invalid { key: String, line: usize, msg: String },
    #[error("line {line}: unknown key '{key}'")]
    Unknown { key: String, line: usize },
    #[error("cannot read '{}': {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

fn line_prefix(line: usize) -> String {
    if line == 0 {
        String::new()
    } else {
        format!("line {line}: ")
    }
}

/// Key/value pairs with the line each came from; `0` for JSON input and
/// for values synthesized by the harness.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, usize)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        if text.trim_start().starts_with('{') {
            Self::parse_json(text)
        } else {
            Self::parse_flat(text)
        }
    }

    pub fn parse_flat(text: &str) -> Result<Self, ConfigError> {
        let mut raw = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: line_no,
                msg: format!("expected 'key = value', got '{body}'"),
            })?;
            let key = key.trim();
            let valid_key = !key.is_empty()
                && key
                    .split('.')
                    .all(|part| !part.is_empty() && part.chars().all(|c| c.is_ascii_alphanumeric() || c == '_'));
            if !valid_key {
                return Err(ConfigError::Syntax {
                    line: line_no,
                    msg: format!("invalid key '{key}'"),
                });
            }
            let value = value.trim().trim_matches('"').to_string();
            raw.insert(key, value, line_no)?;
        }
        Ok(raw)
    }

    pub fn parse_json(text: &str) -> Result<Self, ConfigError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
            line: e.line(),
            msg: e.to_string(),
        })?;
        let mut raw = Self::default();
        let serde_json::Value::Object(map) = value else {
            return Err(ConfigError::Syntax {
                line: 1,
                msg: "top level must be an object".into(),
            });
        };
        flatten("", &map, &mut raw)?;
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    fn insert(&mut self, key: &str, value: String, line: usize) -> Result<(), ConfigError> {
        if let Some((_, first)) = self.entries.get(key) {
            return Err(ConfigError::Duplicate {
                key: key.to_string(),
                line,
                first: *first,
            });
        }
        self.entries.insert(key.to_string(), (value, line));
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    /// Sets or replaces a value, as done for command-line overrides.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), (value.into(), 0));
    }

    fn take(&mut self, key: &str) -> Option<(String, usize)> {
        self.entries.remove(key)
    }

    fn take_parsed<V: FromStr>(&mut self, key: &str, what: &str) -> Result<Option<V>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some((v, line)) => v.parse().map(Some).map_err(|_| ConfigError::Invalid {
                key: key.to_string(),
                line,
                msg: format!("expected {what}, got '{v}'"),
            }),
        }
    }

    fn required<V: FromStr>(&mut self, key: &str, what: &str) -> Result<V, ConfigError> {
        self.take_parsed(key, what)?
            .ok_or_else(|| ConfigError::Missing { key: key.to_string() })
    }

    fn f64_or(&mut self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.take_parsed(key, "a number")?.unwrap_or(default))
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.entries.into_iter().next() {
            Some((key, (_, line))) => Err(ConfigError::Unknown { key, line }),
            None => Ok(()),
        }
    }
}

/// Overrides `base` with `fluid.gamma`, `fluid.a`, `fluid.c_star`,
/// `lemma.*` and `seeds.sampling`. Other sections of a run configuration are
/// ignored so the same file can drive both kinds of command.
pub fn lemma_args(mut raw: RawConfig, base: LemmaArgs) -> Result<LemmaArgs, ConfigError> {
    let mut a = base;
    a.gamma = raw.f64_or("fluid.gamma", a.gamma)?;
    a.a = raw.f64_or("fluid.a", a.a)?;
    a.c_star = raw.f64_or("fluid.c_star", a.c_star)?;
    a.rho_min = raw.f64_or("lemma.rho_min", a.rho_min)?;
    a.rho_max = raw.f64_or("lemma.rho_max", a.rho_max)?;
    a.theta_min = raw.f64_or("lemma.theta_min", a.theta_min)?;
    a.theta_max = raw.f64_or("lemma.theta_max", a.theta_max)?;
    a.samples = raw.take_parsed("lemma.samples", "a count")?.unwrap_or(a.samples);
    a.seed = raw.take_parsed("seeds.sampling", "an integer seed")?.unwrap_or(a.seed);
    raw.entries.retain(|k, _| {
        let section = k.split('.').next().unwrap_or("");
        !matches!(section, "grid" | "fluid" | "run" | "ic" | "forcing" | "seeds" | "rei")
    });
    raw.finish()?;
    Ok(a)
}

fn flatten(
    prefix: &str,
    map: &serde_json::Map<String, serde_json::Value>,
    raw: &mut RawConfig,
) -> Result<(), ConfigError> {
    for (k, v) in map {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            serde_json::Value::Object(inner) => flatten(&key, inner, raw)?,
            serde_json::Value::String(s) => raw.insert(&key, s.clone(), 0)?,
            serde_json::Value::Number(_) | serde_json::Value::Bool(_) => raw.insert(&key, v.to_string(), 0)?,
            other => {
                return Err(ConfigError::Invalid {
                    key,
                    line: 0,
                    msg: format!("unsupported value {other}"),
                })
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FluidSpec {
    pub gamma: f64,
    pub a: f64,
    pub mu: f64,
    pub lambda: f64,
    pub c_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunSpec {
    pub t_end: f64,
    pub cfl: f64,
    pub output_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IcSpec {
    Constant {
        rho: f64,
        theta: f64,
        ux: f64,
        uy: f64,
    },
    Perturbed {
        rho: f64,
        theta: f64,
        amplitude: f64,
        mode_x: usize,
        mode_y: usize,
    },
    File {
        path: PathBuf,
    },
    /// The manufactured solution at `t = 0`; pairs with manufactured forcing.
    Manufactured {
        rho: f64,
        theta: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ManufacturedSpec {
    pub amp_rho: f64,
    pub amp_theta: f64,
    pub amp_u: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForcingSpec {
    None,
    Manufactured(ManufacturedSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Seeds {
    pub ic: u64,
    pub sampling: u64,
}

/// Tolerances of the relative energy check: a checkpoint passes when
/// `LHS ≤ Σ RHS + abs_tol + slack_dx·Δx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReiSpec {
    pub abs_tol: f64,
    pub slack_dx: f64,
    /// Bound on the strong-residual terms when the strong solution is unforced.
    pub term_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub fluid: FluidSpec,
    pub run: RunSpec,
    pub ic: IcSpec,
    pub forcing: ForcingSpec,
    pub seeds: Seeds,
    pub rei: ReiSpec,
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{} grid, gamma {}, t_end {}",
            self.grid.nx, self.grid.ny, self.fluid.gamma, self.run.t_end
        )
    }
}

impl RunConfig {
    pub fn from_raw(mut raw: RawConfig) -> Result<Self, ConfigError> {
        let nx: usize = raw.required("grid.nx", "a positive integer")?;
        let grid = GridSpec {
            nx,
            ny: raw.take_parsed("grid.ny", "a positive integer")?.unwrap_or(nx),
            lx: raw.f64_or("grid.lx", 1.0)?,
            ly: raw.f64_or("grid.ly", 1.0)?,
        };
        let fluid = FluidSpec {
            gamma: raw.required("fluid.gamma", "a number")?,
            a: raw.f64_or("fluid.a", 1.0)?,
            mu: raw.required("fluid.mu", "a number")?,
            lambda: raw.f64_or("fluid.lambda", 0.0)?,
            c_star: raw.required("fluid.c_star", "a number")?,
        };
        let run = RunSpec {
            t_end: raw.required("run.t_end", "a number")?,
            cfl: raw.f64_or("run.cfl", 0.4)?,
            output_every: raw.take_parsed("run.output_every", "a positive integer")?.unwrap_or(1),
        };
        let (kind, kind_line) = raw
            .take("ic.kind")
            .ok_or_else(|| ConfigError::Missing { key: "ic.kind".into() })?;
        let rho = raw.f64_or("ic.rho", 1.0)?;
        let theta = raw.f64_or("ic.theta", 1.0)?;
        let ic = match kind.as_str() {
            "constant" => IcSpec::Constant {
                rho,
                theta,
                ux: raw.f64_or("ic.ux", 0.0)?,
                uy: raw.f64_or("ic.uy", 0.0)?,
            },
            "perturbed" => IcSpec::Perturbed {
                rho,
                theta,
                amplitude: raw.required("ic.amplitude", "a number")?,
                mode_x: raw.take_parsed("ic.mode_x", "a non-negative integer")?.unwrap_or(1),
                mode_y: raw.take_parsed("ic.mode_y", "a non-negative integer")?.unwrap_or(1),
            },
            "file" => IcSpec::File {
                path: raw.required::<String>("ic.path", "a path")?.into(),
            },
            "manufactured" => IcSpec::Manufactured { rho, theta },
            other => {
                return Err(ConfigError::Invalid {
                    key: "ic.kind".into(),
                    line: kind_line,
                    msg: format!("expected constant, perturbed, file or manufactured, got '{other}'"),
                })
            }
        };
        let (fkind, fline) = raw.take("forcing.kind").unwrap_or(("none".into(), 0));
        let forcing = match fkind.as_str() {
            "none" => ForcingSpec::None,
            "manufactured" => ForcingSpec::Manufactured(ManufacturedSpec {
                amp_rho: raw.f64_or("forcing.amp_rho", 0.1)?,
                amp_theta: raw.f64_or("forcing.amp_theta", 0.05)?,
                amp_u: raw.f64_or("forcing.amp_u", 0.1)?,
                omega: raw.f64_or("forcing.omega", 2.0)?,
            }),
            other => {
                return Err(ConfigError::Invalid {
                    key: "forcing.kind".into(),
                    line: fline,
                    msg: format!("expected none or manufactured, got '{other}'"),
                })
            }
        };
        if matches!(ic, IcSpec::Manufactured { .. }) != matches!(forcing, ForcingSpec::Manufactured(_)) {
            return Err(ConfigError::Invalid {
                key: "forcing.kind".into(),
                line: fline.max(kind_line),
                msg: "manufactured forcing and ic.kind = manufactured must be used together".into(),
            });
        }
        let seeds = Seeds {
            ic: raw.take_parsed("seeds.ic", "a non-negative integer")?.unwrap_or(0),
            sampling: raw
                .take_parsed("seeds.sampling", "a non-negative integer")?
                .unwrap_or(7),
        };
        let rei = ReiSpec {
            abs_tol: raw.f64_or("rei.abs_tol", 1e-8)?,
            slack_dx: raw.f64_or("rei.slack_dx", 0.0)?,
            term_tol: raw.f64_or("rei.term_tol", 1e-12)?,
        };
        raw.finish()?;
        let cfg = Self {
            grid,
            fluid,
            run,
            ic,
            forcing,
            seeds,
            rei,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_raw(RawConfig::load(path)?)
    }

    fn check(&self) -> Result<(), ConfigError> {
        let invalid = |key: &str, msg: String| ConfigError::Invalid {
            key: key.to_string(),
            line: 0,
            msg,
        };
        self.grid_for(self.grid.nx, self.grid.ny)
            .map_err(|e| invalid("grid", e.to_string()))?;
        self.params().map_err(|e| invalid("fluid", e.to_string()))?;
        if !(self.run.t_end >= 0.0 && self.run.t_end.is_finite()) {
            return Err(invalid(
                "run.t_end",
                format!("must be finite and >= 0, got {}", self.run.t_end),
            ));
        }
        if !(self.run.cfl > 0.0 && self.run.cfl <= 0.9) {
            return Err(invalid(
                "run.cfl",
                format!("must lie in (0, 0.9], got {}", self.run.cfl),
            ));
        }
        if self.run.output_every == 0 {
            return Err(invalid("run.output_every", "must be at least 1".into()));
        }
        if let IcSpec::Constant { rho, theta, .. }
        | IcSpec::Perturbed { rho, theta, .. }
        | IcSpec::Manufactured { rho, theta } = self.ic
        {
            if !(rho > 0.0) {
                return Err(invalid("ic.rho", format!("must be positive, got {rho}")));
            }
            if !(theta >= self.fluid.c_star) {
                return Err(invalid(
                    "ic.theta",
                    format!("must be at least c_star = {}, got {theta}", self.fluid.c_star),
                ));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> Result<FluidParams<f64>, dmv_core::thermo::ThermoError> {
        let f = &self.fluid;
        FluidParams::new(f.gamma, f.a, f.mu, f.lambda, f.c_star)
    }

    pub fn grid_for(&self, nx: usize, ny: usize) -> Result<Grid2D<f64>, dmv_core::field::FieldError> {
        Grid2D::new(nx, ny, self.grid.lx, self.grid.ly)
    }

    pub fn grid(&self) -> Grid2D<f64> {
        self.grid_for(self.grid.nx, self.grid.ny).expect("checked on load")
    }

    fn manufactured(&self) -> Option<Manufactured<f64>> {
        match (&self.ic, &self.forcing) {
            (IcSpec::Manufactured { rho, theta }, ForcingSpec::Manufactured(m)) => Some(Manufactured {
                rho0: *rho,
                theta0: *theta,
                amp_rho: m.amp_rho,
                amp_theta: m.amp_theta,
                amp_u: m.amp_u,
                omega: m.omega,
                lx: self.grid.lx,
                ly: self.grid.ly,
            }),
            _ => None,
        }
    }

    /// Smooth reference for relative-energy diagnostics: the base state of a
    /// constant or perturbed run, or the manufactured solution.
    pub fn strong_solution(&self) -> Option<Arc<dyn StrongSolution<f64>>> {
        if let Some(m) = self.manufactured() {
            return Some(Arc::new(m));
        }
        match self.ic {
            IcSpec::Constant { rho, theta, ux, uy } if ux == 0.0 && uy == 0.0 => {
                Some(Arc::new(ConstantState { rho, theta }))
            }
            IcSpec::Perturbed { rho, theta, .. } => Some(Arc::new(ConstantState { rho, theta })),
            _ => None,
        }
    }

    /// Solver configuration on the given grid.
    pub fn solver_config(&self, grid: Grid2D<f64>) -> Result<SolverConfig<f64>, ConfigError> {
        let params = self.params().map_err(|e| ConfigError::Invalid {
            key: "fluid".into(),
            line: 0,
            msg: e.to_string(),
        })?;
        let initial = match &self.ic {
            IcSpec::Constant { rho, theta, ux, uy } => InitialCondition::Uniform {
                rho: *rho,
                theta: *theta,
                u: [*ux, *uy],
            },
            IcSpec::Perturbed {
                rho,
                theta,
                amplitude,
                mode_x,
                mode_y,
            } => InitialCondition::Perturbed(SmoothPerturbation {
                rho0: *rho,
                theta0: *theta,
                amplitude: *amplitude,
                modes: (*mode_x, *mode_y),
                seed: self.seeds.ic,
            }),
            IcSpec::File { path } => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?;
                let state = read_state_csv(grid, &text).map_err(|e| ConfigError::Invalid {
                    key: "ic.path".into(),
                    line: 0,
                    msg: format!("{}: {e}", path.display()),
                })?;
                InitialCondition::State(state)
            }
            IcSpec::Manufactured { .. } => {
                let m = self.manufactured().expect("paired with manufactured forcing");
                InitialCondition::State(m.state_at(grid, 0.0))
            }
        };
        let mut cfg = SolverConfig::new(grid, params, initial);
        cfg.cfl = self.run.cfl;
        cfg.t_end = self.run.t_end;
        cfg.output_every = self.run.output_every;
        if let Some(m) = self.manufactured() {
            cfg.forcing = Some(Arc::new(PdeForcing {
                strong: Arc::new(m),
                params,
            }));
        }
        Ok(cfg)
    }

    pub fn is_forced(&self) -> bool {
        !matches!(self.forcing, ForcingSpec::None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
grid.nx = 16
fluid.gamma = 1.4
fluid.mu = 0.01
fluid.c_star = 0.5
run.t_end = 0.1
ic.kind = constant
";

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = RunConfig::from_raw(RawConfig::parse(MINIMAL).unwrap()).unwrap();
        assert_eq!(cfg.grid.ny, 16);
        assert_eq!(cfg.fluid.a, 1.0);
        assert_eq!(cfg.run.cfl, 0.4);
        assert_eq!(cfg.forcing, ForcingSpec::None);
        assert!(matches!(cfg.ic, IcSpec::Constant { rho, .. } if rho == 1.0));
        assert!(cfg.strong_solution().is_some());
    }

    #[test]
    fn json_and_flat_forms_agree() {
        let json = r#"{"grid": {"nx": 16}, "fluid": {"gamma": 1.4, "mu": 0.01, "c_star": 0.5},
                      "run": {"t_end": 0.1}, "ic": {"kind": "constant"}}"#;
        let a = RunConfig::from_raw(RawConfig::parse(json).unwrap()).unwrap();
        let b = RunConfig::from_raw(RawConfig::parse(MINIMAL).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_key_is_named() {
        let text = MINIMAL.replace("fluid.mu = 0.01\n", "");
        let err = RunConfig::from_raw(RawConfig::parse(&text).unwrap()).unwrap_err();
        assert!(matches!(&err, ConfigError::Missing { key } if key == "fluid.mu"));
        assert!(err.to_string().contains("fluid.mu"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = RawConfig::parse("grid.nx = 4\nthis is not valid\n").unwrap_err();
        assert_eq!(
            err.to_string(),
            "line 2: expected 'key = value', got 'this is not valid'"
        );
        let err = RawConfig::parse("a = 1\na = 2\n").unwrap_err();
        assert!(matches!(err, ConfigError::Duplicate { line: 2, first: 1, .. }));
        let text = MINIMAL.replace("grid.nx = 16", "grid.nx = sixteen");
        let err = RunConfig::from_raw(RawConfig::parse(&text).unwrap()).unwrap_err();
        assert!(err.to_string().starts_with("line 2: grid.nx:"), "{err}");
        let text = format!("{MINIMAL}grid.nz = 3\n");
        let err = RunConfig::from_raw(RawConfig::parse(&text).unwrap()).unwrap_err();
        assert_eq!(err.to_string(), "line 8: unknown key 'grid.nz'");
    }

    #[test]
    fn comments_and_quotes_are_accepted() {
        let raw = RawConfig::parse("# header\nic.path = \"a b.csv\"  # trailing\n").unwrap();
        assert_eq!(raw.get("ic.path"), Some("a b.csv"));
    }

    #[test]
    fn constraint_violations_are_rejected() {
        for (from, to) in [
            ("fluid.c_star = 0.5", "fluid.c_star = 2.0"),
            ("run.t_end = 0.1", "run.t_end = -1"),
            ("grid.nx = 16", "grid.nx = 2"),
            ("fluid.gamma = 1.4", "fluid.gamma = 1.0"),
        ] {
            let text = MINIMAL.replace(from, to);
            assert!(RunConfig::from_raw(RawConfig::parse(&text).unwrap()).is_err(), "{to}");
        }
        let text = format!("{MINIMAL}forcing.kind = manufactured\n");
        assert!(RunConfig::from_raw(RawConfig::parse(&text).unwrap()).is_err());
    }

    #[test]
    fn manufactured_pairing_builds_forcing() {
        let text = MINIMAL.replace(
            "ic.kind = constant",
            "ic.kind = manufactured\nforcing.kind = manufactured",
        );
        let cfg = RunConfig::from_raw(RawConfig::parse(&text).unwrap()).unwrap();
        let sc = cfg.solver_config(cfg.grid()).unwrap();
        assert!(sc.forcing.is_some());
        assert_eq!(cfg.strong_solution().unwrap().name(), "manufactured");
    }
}
