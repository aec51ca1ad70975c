//! Artifact files: manifest, time series, snapshots and JSON reports.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dmv_core::field::{fmt17, write_state_csv, ConservedState};
use dmv_core::mvmeasure::dirac_from_state;
use dmv_core::relenergy::{relative_energy_total, StrongSolution};
use dmv_core::solver::Trajectory;
use dmv_core::thermo::FluidParams;
use serde::Serialize;

use crate::error::{io_err, HarnessError};

pub const TIMESERIES_HEADER: &str =
    "t,total_mass,total_rhotheta,total_energy,entropy_integral,dissipation_accum,min_theta,max_rho";

/// Output directory; records every file written for the manifest.
#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, HarnessError> {
        fs::create_dir_all(root).map_err(io_err(root))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn open(&mut self, rel: &str) -> Result<(BufWriter<File>, PathBuf), HarnessError> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        let f = File::create(&path).map_err(io_err(&path))?;
        self.files.push(rel.to_string());
        Ok((BufWriter::new(f), path))
    }

    pub fn write_with(
        &mut self,
        rel: &str,
        body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    ) -> Result<(), HarnessError> {
        let (mut w, path) = self.open(rel)?;
        body(&mut w).and_then(|_| w.flush()).map_err(io_err(path))
    }

    pub fn write_json<S: Serialize>(&mut self, rel: &str, value: &S) -> Result<(), HarnessError> {
        self.write_with(rel, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
            writeln!(w)
        })
    }

    pub fn write_csv(&mut self, rel: &str, header: &str, rows: &[Vec<String>]) -> Result<(), HarnessError> {
        self.write_with(rel, |w| {
            writeln!(w, "{header}")?;
            for r in rows {
                writeln!(w, "{}", r.join(","))?;
            }
            Ok(())
        })
    }

    pub fn write_snapshot(&mut self, rel: &str, state: &ConservedState<f64>) -> Result<(), HarnessError> {
        self.write_with(rel, |w| write_state_csv(state, w))
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize, S: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config: &'a C,
    /// Only non-reproducible value in the artifact set.
    pub wall_clock_seconds: f64,
    pub summary: &'a S,
    pub files: Vec<String>,
}

impl<'a, C: Serialize, S: Serialize> Manifest<'a, C, S> {
    pub fn new(command: &'a str, config: &'a C, summary: &'a S, wall_clock_seconds: f64) -> Self {
        Self {
            tool: "dmv",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            wall_clock_seconds,
            summary,
            files: Vec::new(),
        }
    }

    /// Writes `manifest.json`, listing every file written before it.
    pub fn write(mut self, out: &mut OutDir) -> Result<(), HarnessError> {
        self.files = out.files().to_vec();
        out.write_json("manifest.json", &self)
    }
}

/// Integral diagnostics of one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesRow {
    pub t: f64,
    pub total_mass: f64,
    pub total_rhotheta: f64,
    pub total_energy: f64,
    pub entropy_integral: f64,
    pub dissipation_accum: f64,
    pub min_theta: f64,
    pub max_rho: f64,
    pub rel_energy: Option<f64>,
}

impl SeriesRow {
    pub fn cells(&self) -> Vec<String> {
        let mut v = vec![
            fmt17(self.t),
            fmt17(self.total_mass),
            fmt17(self.total_rhotheta),
            fmt17(self.total_energy),
            fmt17(self.entropy_integral),
            fmt17(self.dissipation_accum),
            fmt17(self.min_theta),
            fmt17(self.max_rho),
        ];
        if let Some(e) = self.rel_energy {
            v.push(fmt17(e));
        }
        v
    }
}

pub fn time_series(
    traj: &Trajectory<f64>,
    params: &FluidParams<f64>,
    strong: Option<&dyn StrongSolution<f64>>,
) -> Result<Vec<SeriesRow>, HarnessError> {
    traj.states
        .iter()
        .zip(&traj.times)
        .zip(&traj.dissipation_accum)
        .map(|((s, &t), &d)| {
            let theta = s.theta();
            let ent = s
                .rho
                .zip_map(&theta, |r, th| r * th.ln())
                .expect("same grid")
                .integrate();
            let rel_energy = match strong {
                Some(sol) => Some(relative_energy_total(
                    &dirac_from_state(s).map_err(dmv_core::relenergy::RelEnergyError::from)?,
                    sol,
                    t,
                    params,
                )?),
                None => None,
            };
            Ok(SeriesRow {
                t,
                total_mass: s.rho.integrate(),
                total_rhotheta: s.z.integrate(),
                total_energy: s.energy_density(params).integrate(),
                entropy_integral: ent,
                dissipation_accum: d,
                min_theta: theta.min(),
                max_rho: s.rho.max(),
                rel_energy,
            })
        })
        .collect()
}

/// `"n/a"` for undefined values, 17 digits otherwise.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt17).unwrap_or_else(|| "n/a".into())
}

/// Parses a comma-separated list.
pub fn parse_list<V: std::str::FromStr>(flag: &str, text: &str) -> Result<Vec<V>, HarnessError> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| HarnessError::Usage(format!("{flag}: cannot parse '{s}'")))
        })
        .collect()
}
