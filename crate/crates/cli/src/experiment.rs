//! Experiment specs, the worker pool and deterministic CSV/manifest output.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use irsec_core::baselines::{draw_actual_angles, run_scheme, SchemeId, SchemeRun};
use irsec_core::scenario::Instance;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::beampattern::{beampattern, display_lattice, eve_lattice};
use crate::config::ConfigFile;
use crate::error::{CliError, Result};
use crate::format::sig9;

/// Feasibility tolerance applied before a row is reported as `ok`.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ExperimentKind {
    Convergence,
    SweepPower,
    SweepDelta,
    SweepElements,
    SweepEves,
    SweepPosition,
    SweepCorrelation,
    Beampattern,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Convergence => "convergence",
            Self::SweepPower => "sweep_power",
            Self::SweepDelta => "sweep_delta",
            Self::SweepElements => "sweep_elements",
            Self::SweepEves => "sweep_eves",
            Self::SweepPosition => "sweep_position",
            Self::SweepCorrelation => "sweep_correlation",
            Self::Beampattern => "beampattern",
        }
    }

    fn default_schemes(self) -> Vec<SchemeId> {
        match self {
            Self::Convergence | Self::Beampattern => vec![SchemeId::Robust],
            _ => SchemeId::ALL.to_vec(),
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Config key a sweep overrides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    PowerDbm,
    DeltaDeg,
    IrsSize,
    CbsAntennas,
    EveCount,
    IrsXM,
    CbsCorrelation,
    GammaThDb,
}

impl Axis {
    const ALL: [Axis; 8] = [
        Axis::PowerDbm,
        Axis::DeltaDeg,
        Axis::IrsSize,
        Axis::CbsAntennas,
        Axis::EveCount,
        Axis::IrsXM,
        Axis::CbsCorrelation,
        Axis::GammaThDb,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Axis::PowerDbm => "p_c_max_dbm",
            Axis::DeltaDeg => "delta_deg",
            Axis::IrsSize => "irs_size",
            Axis::CbsAntennas => "cbs_antennas",
            Axis::EveCount => "eve_count",
            Axis::IrsXM => "irs_x_m",
            Axis::CbsCorrelation => "cbs_correlation",
            Axis::GammaThDb => "gamma_th_db",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.key() == key)
    }

    /// Axis of `kind`; `sweep_elements` switches to CBS antennas when only
    /// that axis is configured.
    pub fn for_kind(kind: ExperimentKind, cfg: &ConfigFile) -> Self {
        match kind {
            ExperimentKind::Convergence => Axis::GammaThDb,
            ExperimentKind::SweepPower => Axis::PowerDbm,
            ExperimentKind::SweepDelta | ExperimentKind::Beampattern => Axis::DeltaDeg,
            ExperimentKind::SweepElements => {
                let has = |a: Axis| cfg.sweeps.contains_key(a.key());
                if has(Axis::CbsAntennas) && !has(Axis::IrsSize) {
                    Axis::CbsAntennas
                } else {
                    Axis::IrsSize
                }
            }
            ExperimentKind::SweepEves => Axis::EveCount,
            ExperimentKind::SweepPosition => Axis::IrsXM,
            ExperimentKind::SweepCorrelation => Axis::CbsCorrelation,
        }
    }

    fn default_values(self, cfg: &ConfigFile) -> Vec<AxisValue> {
        let nums = |v: &[f64]| v.iter().map(|&x| AxisValue::Real(x)).collect();
        match self {
            Axis::PowerDbm => nums(&[38.0, 42.0, 46.0]),
            Axis::DeltaDeg => nums(&[1.0, 2.0, 4.0, 6.0]),
            Axis::IrsSize => [2, 4, 6].map(|n| AxisValue::Size(n, n)).to_vec(),
            Axis::CbsAntennas => [4, 8, 12].map(AxisValue::Count).to_vec(),
            Axis::EveCount => [1, 2, 3].map(AxisValue::Count).to_vec(),
            Axis::IrsXM => nums(&[-40.0, -20.0, 0.0, 20.0, 40.0]),
            Axis::CbsCorrelation => nums(&[0.0, 0.5, 0.9]),
            Axis::GammaThDb => nums(&[cfg.gamma_th_db]),
        }
    }

    pub fn parse_value(self, v: &serde_json::Value) -> std::result::Result<AxisValue, String> {
        match self {
            Axis::IrsSize => {
                let s = v.as_str().ok_or("expected a string like \"4x4\"")?;
                let (r, c) = s.split_once('x').ok_or("expected a string like \"4x4\"")?;
                let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{s:?}: {e}"));
                Ok(AxisValue::Size(parse(r)?, parse(c)?))
            }
            Axis::CbsAntennas | Axis::EveCount => v
                .as_u64()
                .map(|n| AxisValue::Count(n as usize))
                .ok_or_else(|| "expected a nonnegative integer".into()),
            _ => v
                .as_f64()
                .map(AxisValue::Real)
                .ok_or_else(|| "expected a number".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AxisValue {
    Real(f64),
    Count(usize),
    Size(usize, usize),
}

impl AxisValue {
    pub fn label(self) -> String {
        match self {
            AxisValue::Real(x) => sig9(x),
            AxisValue::Count(n) => n.to_string(),
            AxisValue::Size(r, c) => format!("{r}x{c}"),
        }
    }

    fn to_json(self) -> serde_json::Value {
        match self {
            AxisValue::Real(x) => json!(x),
            AxisValue::Count(n) => json!(n),
            AxisValue::Size(r, c) => json!(format!("{r}x{c}")),
        }
    }
}

/// One point of a sweep axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisPoint {
    pub axis: Axis,
    pub value: AxisValue,
}

impl AxisPoint {
    /// `cfg` with the axis key overridden and its sweeps removed.
    pub fn apply(&self, cfg: &ConfigFile) -> Result<ConfigFile> {
        let mut out = cfg.clone();
        out.sweeps.clear();
        let mismatch = || CliError::Config {
            key: format!("sweeps.{}", self.axis.key()),
            reason: format!("value {:?} has the wrong type", self.value),
        };
        match (self.axis, self.value) {
            (Axis::PowerDbm, AxisValue::Real(x)) => out.p_c_max_dbm = x,
            (Axis::DeltaDeg, AxisValue::Real(x)) => out.delta_deg = x,
            (Axis::IrsXM, AxisValue::Real(x)) => out.irs_position_m[0] = x,
            (Axis::CbsCorrelation, AxisValue::Real(x)) => out.cbs_correlation = x,
            (Axis::GammaThDb, AxisValue::Real(x)) => out.gamma_th_db = x,
            (Axis::CbsAntennas, AxisValue::Count(n)) => out.cbs_antennas = n,
            (Axis::EveCount, AxisValue::Count(n)) => out.eve_count = n,
            (Axis::IrsSize, AxisValue::Size(r, c)) => {
                out.irs_rows = r;
                out.irs_cols = c;
            }
            _ => return Err(mismatch()),
        }
        Ok(out)
    }
}

/// Parses `"0-19"`, `"1,4,7"` or a mix such as `"0-3,10"`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || CliError::Seeds(s.to_string());
    let mut seeds = Vec::new();
    for part in s.split(',').map(str::trim) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| bad())?;
                let b: u64 = b.trim().parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|_| bad())?),
        }
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if seeds.is_empty() || sorted.len() != seeds.len() {
        return Err(bad());
    }
    Ok(seeds)
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub base: ConfigFile,
    pub axis: Axis,
    pub values: Vec<AxisValue>,
    pub schemes: Vec<SchemeId>,
    pub seeds: Vec<u64>,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, base: ConfigFile, seeds: Vec<u64>) -> Result<Self> {
        let axis = Axis::for_kind(kind, &base);
        let values = match base.sweeps.get(axis.key()) {
            Some(raw) => raw
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    axis.parse_value(v).map_err(|reason| CliError::Config {
                        key: format!("sweeps.{}[{i}]", axis.key()),
                        reason,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
            None => axis.default_values(&base),
        };
        let schemes = base.schemes.clone().unwrap_or_else(|| kind.default_schemes());
        Ok(Self {
            kind,
            base,
            axis,
            values,
            schemes,
            seeds,
        })
    }

    /// Base config with this spec's axis and schemes written in, enough to
    /// rerun the experiment on its own.
    pub fn resolved_config(&self) -> ConfigFile {
        let mut cfg = self.base.clone();
        cfg.sweeps.clear();
        cfg.sweeps.insert(
            self.axis.key().to_string(),
            self.values.iter().map(|v| v.to_json()).collect(),
        );
        cfg.schemes = Some(self.schemes.clone());
        cfg
    }
}

/// Rows of one CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &'static str, header: &[&'static str]) -> Self {
        Self {
            name,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(self.name);
        let csv_err = |source| CliError::Csv {
            path: path.clone(),
            source,
        };
        let mut wtr = csv::Writer::from_path(&path).map_err(csv_err)?;
        wtr.write_record(&self.header).map_err(csv_err)?;
        for row in &self.rows {
            wtr.write_record(row).map_err(csv_err)?;
        }
        wtr.flush().map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }
}

const SUMMARY_HEADER: [&str; 16] = [
    "seed",
    "axis",
    "axis_value",
    "scheme",
    "status",
    "worst_case_asr",
    "actual_asr",
    "outer_iterations",
    "converged",
    "power_ratio",
    "interference_ratio",
    "modulus_error",
    "sdp_solves",
    "max_eve_gain_db",
    "wall_seconds",
    "error",
];

const TRACE_HEADER: [&str; 6] = ["seed", "axis", "axis_value", "scheme", "iteration", "asr"];
const GRID_HEADER: [&str; 7] = ["seed", "axis", "axis_value", "scheme", "theta_deg", "phi_deg", "gain_db"];

/// Everything one (axis value, seed) cell contributes to each table.
#[derive(Debug, Default)]
struct CellRows {
    summary: Vec<Vec<String>>,
    trace: Vec<Vec<String>>,
    grid: Vec<Vec<String>>,
}

fn status_of(run: &SchemeRun) -> &'static str {
    if !run.result.feasibility.is_feasible(FEASIBILITY_TOL) {
        "infeasible"
    } else if run.result.failure.is_some() {
        "partial"
    } else {
        "ok"
    }
}

fn run_cell(spec: &ExperimentSpec, point: AxisPoint, seed: u64, wall_clock: bool) -> CellRows {
    let prefix = vec![seed.to_string(), spec.axis.key().to_string(), point.value.label()];
    let mut rows = CellRows::default();
    let inst = point
        .apply(&spec.base)
        .and_then(|c| Ok(Instance::build(&c.to_scenario(), seed)?));
    let inst = match inst {
        Ok(i) => i,
        Err(e) => {
            for id in &spec.schemes {
                rows.summary.push(failed_row(&prefix, *id, &e.to_string()));
            }
            return rows;
        }
    };
    let actual = draw_actual_angles(&inst, seed);
    for &id in &spec.schemes {
        let run = match run_scheme(id, &inst, &actual, seed) {
            Ok(r) => r,
            Err(e) => {
                rows.summary.push(failed_row(&prefix, id, &e.to_string()));
                continue;
            }
        };
        let r = &run.result;
        let mut max_eve = String::new();
        if spec.kind == ExperimentKind::Beampattern {
            let pattern = display_lattice(&inst, spec.base.beampattern_step_deg)
                .and_then(|l| beampattern(&r.w, &r.q, &inst, &l));
            let eves = beampattern(&r.w, &r.q, &inst, &eve_lattice(&inst));
            match (pattern, eves) {
                (Ok(p), Ok(e)) => {
                    max_eve = sig9(e.max_gain_db());
                    for (a, g) in p.points.iter().zip(&p.gain_db) {
                        let (th, ph) = a.to_degrees();
                        let mut row = prefix.clone();
                        row.extend([id.to_string(), sig9(th), sig9(ph), sig9(*g)]);
                        rows.grid.push(row);
                    }
                }
                (Err(e), _) | (_, Err(e)) => {
                    rows.summary.push(failed_row(&prefix, id, &e.to_string()));
                    continue;
                }
            }
        }
        for (i, v) in r.asr_trace.iter().enumerate() {
            let mut row = prefix.clone();
            row.extend([id.to_string(), i.to_string(), sig9(*v)]);
            rows.trace.push(row);
        }
        let mut row = prefix.clone();
        row.extend([
            id.to_string(),
            status_of(&run).to_string(),
            sig9(r.final_worst_case_asr),
            sig9(run.actual_asr),
            r.outer_iterations.to_string(),
            r.converged.to_string(),
            sig9(r.feasibility.power_ratio),
            sig9(r.feasibility.interference_ratio),
            sig9(r.feasibility.modulus_error),
            r.sdp_solves.to_string(),
            max_eve,
            if wall_clock { sig9(r.wall_seconds) } else { String::new() },
            r.failure.clone().unwrap_or_default(),
        ]);
        rows.summary.push(row);
    }
    rows
}

fn failed_row(prefix: &[String], id: SchemeId, error: &str) -> Vec<String> {
    let mut row = prefix.to_vec();
    row.extend([id.to_string(), "failed".to_string()]);
    row.resize(SUMMARY_HEADER.len() - 1, String::new());
    row.push(error.to_string());
    row
}

/// Tables produced by an experiment, in deterministic order.
#[derive(Debug)]
pub struct ExperimentOutput {
    pub tables: Vec<Table>,
    pub failed_rows: usize,
}

/// Runs every (axis value, seed) cell on a pool of `jobs` workers. Rows are
/// collected in axis, seed, scheme order regardless of scheduling. Wall
/// times are left blank unless `wall_clock` is set, which keeps reruns
/// byte-identical.
pub fn execute(spec: &ExperimentSpec, jobs: usize, wall_clock: bool) -> Result<ExperimentOutput> {
    let cells: Vec<(AxisPoint, u64)> = spec
        .values
        .iter()
        .flat_map(|&value| {
            spec.seeds.iter().map(move |&s| {
                (
                    AxisPoint {
                        axis: spec.axis,
                        value,
                    },
                    s,
                )
            })
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Config {
            key: "--jobs".into(),
            reason: e.to_string(),
        })?;
    let results: Vec<CellRows> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(point, seed)| run_cell(spec, point, seed, wall_clock))
            .collect()
    });

    let mut summary = Table::new("summary.csv", &SUMMARY_HEADER);
    let mut trace = Table::new("trace.csv", &TRACE_HEADER);
    let mut grid = Table::new("beampattern.csv", &GRID_HEADER);
    for cell in results {
        summary.rows.extend(cell.summary);
        trace.rows.extend(cell.trace);
        grid.rows.extend(cell.grid);
    }
    let failed_rows = summary.rows.iter().filter(|r| r[4] == "failed").count();
    let mut tables = vec![summary];
    match spec.kind {
        ExperimentKind::Convergence => tables.push(trace),
        ExperimentKind::Beampattern => tables.push(grid),
        _ => {}
    }
    Ok(ExperimentOutput { tables, failed_rows })
}

/// Writes the tables and `manifest.json` into `out`.
pub fn write_outputs(spec: &ExperimentSpec, output: &ExperimentOutput, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    for t in &output.tables {
        written.push(t.write(out)?);
    }
    let manifest = json!({
        "artifact": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "experiment": spec.kind,
        "axis": spec.axis.key(),
        "axis_values": spec.values.iter().map(|v| v.to_json()).collect::<Vec<_>>(),
        "schemes": spec.schemes,
        "seeds": spec.seeds,
        "files": output.tables.iter().map(|t| json!({"name": t.name, "rows": t.rows.len()})).collect::<Vec<_>>(),
        "failed_rows": output.failed_rows,
        "config": spec.resolved_config(),
    });
    let path = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(&path, text).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    written.push(path);
    Ok(written)
}
