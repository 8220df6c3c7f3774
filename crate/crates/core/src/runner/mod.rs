//! Single runs, parameter sweeps and their on-disk artifacts.
//!
//! A run directory holds `diagnostics.csv` (one [`DiagnosticsRecord`] per
//! row, columns in [`DiagnosticsRecord::COLUMNS`] order), `snapshots/` with
//! one CSV per stored state plus `snapshots/index.json`, and `meta.json`
//! with the resolved configuration and a run summary. A sweep directory
//! holds one run directory per member plus `sweep.csv` and `sweep.json`.

pub mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

pub use config::{
    apply_override, parse_config, parse_config_with, parse_override, serialize_config, OutputConfig, RunConfig,
    SweepMember, SweepPlan,
};

use crate::diagnostics::{
    congestion_metrics, energy_budget, lmp_crosscheck, strictly_decreasing, DiagnosticsRecord, LMP_FLOOR,
};
use crate::domain::{build_barrier, vacuum_threshold, BarrierField, FlowState, Grid};
use crate::error::{Error, Result};
use crate::pressure::{PressureLaw, PressureModel};
use crate::scenarios::{InitialProfile, ManufacturedSource};
use crate::solver::{advance, step_ratio, AdvanceStats, DiagnosticsSink, Model};

/// Everything a run needs, built from a validated configuration.
pub struct Prepared {
    pub grid: Grid,
    pub barrier: BarrierField,
    pub state: FlowState,
    pub pressure: PressureModel,
    pub source: Option<ManufacturedSource>,
}

impl Prepared {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid.build()?;
        let barrier = build_barrier(&cfg.barrier, &grid)?;
        let data = cfg.initial.generate(&grid, &barrier)?;
        let state = FlowState::from_initial(&grid, &data)?;
        let pressure = PressureModel::new(cfg.pressure)?;
        let source = match cfg.initial {
            InitialProfile::Manufactured(fields) => Some(ManufacturedSource {
                fields,
                law: cfg.pressure,
                fluid: cfg.fluid,
                barrier: cfg.barrier.clone(),
            }),
            _ => None,
        };
        Ok(Self {
            grid,
            barrier,
            state,
            pressure,
            source,
        })
    }

    pub fn model<'a>(&'a self, cfg: &'a RunConfig) -> Model<'a> {
        let m = Model::new(&self.pressure, &cfg.fluid, &self.barrier);
        match &self.source {
            Some(s) => m.with_source(s),
            None => m,
        }
    }
}

/// Scalar summary of a run, also written to `meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub ok: bool,
    pub error: Option<String>,
    pub final_t: f64,
    pub steps: usize,
    pub halvings: usize,
    pub min_dt: f64,
    pub max_dt: f64,
    /// Largest `ρ/ρ*` over all accepted states.
    pub max_ratio: f64,
    pub final_max_ratio: f64,
    pub min_density: f64,
    /// `|M(t) - M(0)| / M(0)` maximised over the records.
    pub mass_drift: f64,
    pub energy_initial: f64,
    pub energy_positive_residual: f64,
    pub energy_max_residual: f64,
    /// `∫∫(ρ*-ρ)π dx dt` by the trapezoid rule over the records.
    pub complementarity_integral: f64,
    /// `∫∫π dx dt`.
    pub pi_l1_integral: f64,
    /// `π(max_ratio)`, the largest pressure seen.
    pub max_pi: f64,
    pub congested_records: usize,
    pub lmp_mean: f64,
    /// Mean `divu_congested` over records with congested cells.
    pub divu_congested_mean: f64,
    /// LMP mean recomputed at each of [`DELTA_C_SENSITIVITY`].
    pub lmp_sensitivity: Vec<LmpSensitivity>,
    pub wall_time: f64,
}

/// Alternative congestion thresholds reported next to the configured one.
pub const DELTA_C_SENSITIVITY: [f64; 3] = [0.02, 0.05, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LmpSensitivity {
    pub delta_c: f64,
    pub congested_records: usize,
    pub lmp_mean: f64,
}

/// Accumulates the LMP ratio at every threshold of [`DELTA_C_SENSITIVITY`]
/// while forwarding everything to `inner`.
struct Sensitivity<'a, S> {
    inner: S,
    pressure: &'a PressureModel,
    barrier: &'a BarrierField,
    sums: [(f64, usize); 3],
}

impl<'a, S> Sensitivity<'a, S> {
    fn new(inner: S, prep: &'a Prepared) -> Self {
        Self {
            inner,
            pressure: &prep.pressure,
            barrier: &prep.barrier,
            sums: [(0.0, 0); 3],
        }
    }

    fn report(&self) -> Vec<LmpSensitivity> {
        DELTA_C_SENSITIVITY
            .iter()
            .zip(&self.sums)
            .map(|(&delta_c, &(sum, n))| LmpSensitivity {
                delta_c,
                congested_records: n,
                lmp_mean: if n == 0 { 0.0 } else { sum / n as f64 },
            })
            .collect()
    }
}

impl<S: DiagnosticsSink> DiagnosticsSink for Sensitivity<'_, S> {
    fn emit(&mut self, record: &DiagnosticsRecord, state: &FlowState) -> Result<()> {
        for (acc, &dc) in self.sums.iter_mut().zip(&DELTA_C_SENSITIVITY) {
            let m = congestion_metrics(state, self.pressure, self.barrier, dc)?;
            if m.congested_measure > 0.0 {
                acc.0 += m.divu_congested / (m.divu_l2 + LMP_FLOOR);
                acc.1 += 1;
            }
        }
        self.inner.emit(record, state)
    }

    fn snapshot(&mut self, state: &FlowState) -> Result<()> {
        self.inner.snapshot(state)
    }

    fn accepted(&mut self, before: &FlowState, after: &FlowState) -> Result<()> {
        self.inner.accepted(before, after)
    }
}

fn trapezoid(records: &[DiagnosticsRecord], f: impl Fn(&DiagnosticsRecord) -> f64) -> f64 {
    records
        .windows(2)
        .map(|w| 0.5 * (w[1].t - w[0].t) * (f(&w[0]) + f(&w[1])))
        .sum()
}

pub fn summarize(
    records: &[DiagnosticsRecord],
    stats: Option<&AdvanceStats>,
    law: &PressureLaw,
    error: Option<&Error>,
    wall_time: f64,
) -> RunSummary {
    let budget = energy_budget(records);
    let lmp = lmp_crosscheck(records);
    let m0 = records.first().map_or(0.0, |r| r.mass);
    let mass_drift = records
        .iter()
        .map(|r| (r.mass - m0).abs() / m0)
        .fold(0.0, f64::max);
    let congested: Vec<&DiagnosticsRecord> = records.iter().filter(|r| r.congested_measure > 0.0).collect();
    let divu_congested_mean = if congested.is_empty() {
        0.0
    } else {
        congested.iter().map(|r| r.divu_congested).sum::<f64>() / congested.len() as f64
    };
    let max_ratio = stats.map_or_else(
        || records.iter().map(|r| r.max_ratio).fold(f64::NEG_INFINITY, f64::max),
        |s| s.max_ratio,
    );
    RunSummary {
        ok: error.is_none(),
        error: error.map(ToString::to_string),
        final_t: records.last().map_or(0.0, |r| r.t),
        steps: stats.map_or(0, |s| s.steps),
        halvings: stats.map_or(0, |s| s.halvings),
        min_dt: stats.map_or(f64::NAN, |s| s.min_dt),
        max_dt: stats.map_or(f64::NAN, |s| s.max_dt),
        max_ratio,
        final_max_ratio: records.last().map_or(f64::NAN, |r| r.max_ratio),
        min_density: stats.map_or(f64::NAN, |s| s.min_density),
        mass_drift,
        energy_initial: budget.e0,
        energy_positive_residual: budget.cumulative_positive,
        energy_max_residual: budget.max_positive,
        complementarity_integral: trapezoid(records, |r| r.complementarity),
        pi_l1_integral: trapezoid(records, |r| r.pi_l1),
        max_pi: law.pi_unchecked(max_ratio.max(0.0)),
        congested_records: lmp.congested_records,
        lmp_mean: lmp.mean_congested,
        divu_congested_mean,
        lmp_sensitivity: Vec::new(),
        wall_time,
    }
}

/// Outcome of a run kept in memory.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<FlowState>,
    pub final_state: Option<FlowState>,
    pub stats: Option<AdvanceStats>,
    pub summary: RunSummary,
}

#[derive(Default)]
struct MemorySink {
    records: Vec<DiagnosticsRecord>,
    snapshots: Vec<FlowState>,
}

impl DiagnosticsSink for MemorySink {
    fn emit(&mut self, record: &DiagnosticsRecord, _state: &FlowState) -> Result<()> {
        self.records.push(record.clone());
        Ok(())
    }

    fn snapshot(&mut self, state: &FlowState) -> Result<()> {
        self.snapshots.push(state.clone());
        Ok(())
    }
}

/// Runs the configuration without touching the filesystem. Solver errors
/// are returned in the summary, not as `Err`.
pub fn run_in_memory(cfg: &RunConfig) -> Result<RunOutput> {
    let prep = Prepared::new(cfg)?;
    let model = prep.model(cfg);
    let mut sink = Sensitivity::new(MemorySink::default(), &prep);
    let start = Instant::now();
    let result = advance(&prep.state, cfg.solver.t_end, &model, &cfg.solver, &mut sink);
    let wall = start.elapsed().as_secs_f64();
    let lmp_sensitivity = sink.report();
    let sink = sink.inner;
    let (final_state, stats, err) = match result {
        Ok((s, st)) => (Some(s), Some(st), None),
        Err(e) => (None, None, Some(e)),
    };
    let mut summary = summarize(&sink.records, stats.as_ref(), &cfg.pressure, err.as_ref(), wall);
    summary.lmp_sensitivity = lmp_sensitivity;
    Ok(RunOutput {
        records: sink.records,
        snapshots: sink.snapshots,
        final_state,
        stats,
        summary,
    })
}

#[derive(Debug, Clone, Serialize)]
struct SnapshotEntry {
    file: String,
    t: f64,
}

struct FileSink<'a> {
    dir: PathBuf,
    csv: csv::Writer<BufWriter<File>>,
    records: Vec<DiagnosticsRecord>,
    snapshots: Vec<SnapshotEntry>,
    barrier: &'a BarrierField,
}

impl<'a> FileSink<'a> {
    fn new(dir: &Path, barrier: &'a BarrierField) -> Result<Self> {
        let path = dir.join("diagnostics.csv");
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let snap_dir = dir.join("snapshots");
        fs::create_dir_all(&snap_dir).map_err(|e| Error::io(&snap_dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            csv: csv::Writer::from_writer(BufWriter::new(file)),
            records: Vec::new(),
            snapshots: Vec::new(),
            barrier,
        })
    }

    fn csv_err(&self, e: csv::Error) -> Error {
        let path = self.dir.join("diagnostics.csv");
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
        }
    }

    fn finish(mut self) -> Result<(Vec<DiagnosticsRecord>, Vec<SnapshotEntry>)> {
        self.csv.flush().map_err(|e| Error::io(self.dir.join("diagnostics.csv"), e))?;
        let index = self.dir.join("snapshots").join("index.json");
        write_json(&index, &self.snapshots)?;
        Ok((self.records, self.snapshots))
    }
}

impl DiagnosticsSink for FileSink<'_> {
    fn emit(&mut self, record: &DiagnosticsRecord, _state: &FlowState) -> Result<()> {
        self.csv.serialize(record).map_err(|e| self.csv_err(e))?;
        self.records.push(record.clone());
        Ok(())
    }

    fn snapshot(&mut self, state: &FlowState) -> Result<()> {
        let name = format!("snap_{:04}.csv", self.snapshots.len());
        let path = self.dir.join("snapshots").join(&name);
        write_snapshot(&path, state, self.barrier)?;
        self.snapshots.push(SnapshotEntry { file: name, t: state.t });
        Ok(())
    }
}

/// Cell-centred fields in long format: `x,rho,u,rho_star` in one dimension,
/// `x,y,rho,u,v,rho_star` in two (row-major, `x` fastest).
pub fn write_snapshot(path: &Path, state: &FlowState, barrier: &BarrierField) -> Result<()> {
    let grid = state.grid;
    let vac = vacuum_threshold(barrier);
    let (rho, u, v) = (state.density(), state.velocity(0, vac), state.velocity(1, vac));
    let star = barrier.interior_values();
    let mut out = String::new();
    out.push_str(if grid.dim == 1 { "x,rho,u,rho_star\n" } else { "x,y,rho,u,v,rho_star\n" });
    for k in 0..grid.n_cells() {
        let c = grid.center_flat(k);
        if grid.dim == 1 {
            out.push_str(&format!("{},{},{},{}\n", c[0], rho[k], u[k], star[k]));
        } else {
            out.push_str(&format!("{},{},{},{},{},{}\n", c[0], c[1], rho[k], u[k], v[k], star[k]));
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes to JSON");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct Meta<'a> {
    package: &'static str,
    version: &'static str,
    status: &'a str,
    config: &'a RunConfig,
    config_toml: String,
    columns: [&'static str; 14],
    #[serde(skip_serializing_if = "Option::is_none")]
    summary: Option<&'a RunSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stats: Option<&'a AdvanceStats>,
}

fn write_meta(dir: &Path, cfg: &RunConfig, status: &str, summary: Option<&RunSummary>, stats: Option<&AdvanceStats>) -> Result<()> {
    let meta = Meta {
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        status,
        config: cfg,
        config_toml: serialize_config(cfg),
        columns: DiagnosticsRecord::COLUMNS,
        summary,
        stats,
    };
    write_json(&dir.join("meta.json"), &meta)
}

/// Runs `cfg` writing artifacts into `dir`. Solver failures are recorded in
/// `meta.json` and then returned as `Err`.
pub fn run_once(cfg: &RunConfig, dir: &Path) -> Result<RunSummary> {
    match run_recorded(cfg, dir)? {
        (summary, None) => Ok(summary),
        (_, Some(e)) => Err(e),
    }
}

/// Like [`run_once`] but hands back the summary of a failed solve together
/// with its error. Only setup and I/O problems are `Err`.
fn run_recorded(cfg: &RunConfig, dir: &Path) -> Result<(RunSummary, Option<Error>)> {
    let prep = Prepared::new(cfg)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_meta(dir, cfg, "running", None, None)?;
    let model = prep.model(cfg);
    let mut sink = Sensitivity::new(FileSink::new(dir, &prep.barrier)?, &prep);
    let start = Instant::now();
    let result = advance(&prep.state, cfg.solver.t_end, &model, &cfg.solver, &mut sink);
    let wall = start.elapsed().as_secs_f64();
    let lmp_sensitivity = sink.report();
    let (records, _) = sink.inner.finish()?;
    let (stats, err) = match result {
        Ok((_, stats)) => (Some(stats), None),
        Err(e @ Error::Io { .. }) => return Err(e),
        Err(e) => (None, Some(e)),
    };
    let mut summary = summarize(&records, stats.as_ref(), &cfg.pressure, err.as_ref(), wall);
    summary.lmp_sensitivity = lmp_sensitivity;
    let status = if err.is_none() { "ok" } else { "failed" };
    write_meta(dir, cfg, status, Some(&summary), stats.as_ref())?;
    Ok((summary, err))
}

/// One sweep member's outcome.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub label: String,
    pub eps: Option<f64>,
    pub kappa: Option<f64>,
    pub delta: Option<f64>,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepChecks {
    /// `None` for a single-member sweep.
    pub complementarity_decreasing: Option<bool>,
    /// Over members that have congested records; `None` if fewer than two.
    pub lmp_decreasing: Option<bool>,
    /// `max/min` of the time-integrated `∫π` over successful members.
    pub pi_l1_spread: Option<f64>,
    /// For `(kappa, delta)` sweeps: largest pressure grows as `delta` shrinks.
    pub max_pi_increasing: Option<bool>,
    pub failed_members: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub checks: SweepChecks,
}

fn sweep_checks(rows: &[SweepRow]) -> SweepChecks {
    let ok: Vec<&SweepRow> = rows.iter().filter(|r| r.summary.ok).collect();
    let failed = rows.len() - ok.len();
    let trend = |vals: Vec<f64>| (vals.len() >= 2 && failed == 0).then(|| strictly_decreasing(&vals));
    let lmp: Vec<f64> = ok
        .iter()
        .filter(|r| r.summary.congested_records > 0)
        .map(|r| r.summary.lmp_mean)
        .collect();
    let pis: Vec<f64> = ok.iter().map(|r| r.summary.pi_l1_integral).collect();
    let spread = (pis.len() >= 2).then(|| {
        let max = pis.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = pis.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    });
    let is_delta = rows.iter().any(|r| r.delta.is_some());
    let max_pi: Vec<f64> = ok.iter().map(|r| -r.summary.max_pi).collect();
    SweepChecks {
        complementarity_decreasing: trend(ok.iter().map(|r| r.summary.complementarity_integral).collect()),
        lmp_decreasing: (lmp.len() >= 2).then(|| strictly_decreasing(&lmp)),
        pi_l1_spread: spread,
        max_pi_increasing: if is_delta { trend(max_pi) } else { None },
        failed_members: failed,
    }
}

fn member_row(member: SweepMember, summary: RunSummary) -> SweepRow {
    let (eps, kappa, delta) = match member {
        SweepMember::Eps(e) => (Some(e), None, None),
        SweepMember::KappaDelta(k, d) => (None, Some(k), Some(d)),
    };
    SweepRow {
        label: member.label(),
        eps,
        kappa,
        delta,
        summary,
    }
}

fn failed_summary(e: &Error, law: &PressureLaw) -> RunSummary {
    summarize(&[], None, law, Some(e), 0.0)
}

/// Runs every sweep member (in parallel) and aggregates the rows, ordered
/// by decreasing `eps` or `delta`. `dir = None` keeps everything in memory.
pub fn run_sweep(cfg: &RunConfig, dir: Option<&Path>) -> Result<SweepResult> {
    cfg.validate()?;
    let plan = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::param("sweep", "configuration has no [sweep] section"))?;
    if let Some(d) = dir {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        let probe = d.join("sweep.json");
        fs::write(&probe, "{}\n").map_err(|e| Error::io(&probe, e))?;
    }
    let members = plan.members();
    let rows: Vec<Result<SweepRow>> = members
        .par_iter()
        .map(|&m| {
            let member_cfg = cfg.with_member(m);
            let summary = match dir {
                Some(d) => match run_recorded(&member_cfg, &d.join(m.label())) {
                    Ok((s, _)) => s,
                    Err(e @ Error::Io { .. }) => return Err(e),
                    Err(e) => failed_summary(&e, &member_cfg.pressure),
                },
                None => run_in_memory(&member_cfg)?.summary,
            };
            Ok(member_row(m, summary))
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let result = SweepResult {
        checks: sweep_checks(&rows),
        rows,
    };
    if let Some(d) = dir {
        write_sweep(d, &result)?;
    }
    Ok(result)
}

fn write_sweep(dir: &Path, result: &SweepResult) -> Result<()> {
    let path = dir.join("sweep.csv");
    let mut out = String::from(
        "label,eps,kappa,delta,status,final_max_ratio,max_ratio,complementarity_integral,pi_l1_integral,\
         divu_congested_mean,lmp_mean,lmp_dc_0.02,lmp_dc_0.05,lmp_dc_0.1,max_pi,energy_positive_residual,\
         mass_drift,steps,wall_time\n",
    );
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in &result.rows {
        let s = &r.summary;
        let sens: Vec<String> = (0..DELTA_C_SENSITIVITY.len())
            .map(|i| s.lmp_sensitivity.get(i).map_or(String::new(), |l| l.lmp_mean.to_string()))
            .collect();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.label,
            opt(r.eps),
            opt(r.kappa),
            opt(r.delta),
            if s.ok { "ok" } else { "failed" },
            s.final_max_ratio,
            s.max_ratio,
            s.complementarity_integral,
            s.pi_l1_integral,
            s.divu_congested_mean,
            s.lmp_mean,
            sens.join(","),
            s.max_pi,
            s.energy_positive_residual,
            s.mass_drift,
            s.steps,
            s.wall_time
        ));
    }
    fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
    write_json(&dir.join("sweep.json"), result)
}

/// L¹ errors of density and momentum against the manufactured solution at
/// the final time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ManufacturedErrors {
    pub cells: usize,
    pub l1_rho: f64,
    pub l1_mom: f64,
}

pub fn manufactured_errors(cfg: &RunConfig) -> Result<ManufacturedErrors> {
    let InitialProfile::Manufactured(fields) = cfg.initial else {
        return Err(Error::param("initial.kind", "manufactured fields required"));
    };
    let prep = Prepared::new(cfg)?;
    let model = prep.model(cfg);
    let (fin, _) = advance(
        &prep.state,
        cfg.solver.t_end,
        &model,
        &cfg.solver,
        &mut crate::solver::NullSink,
    )?;
    let g = prep.grid;
    let (rho, mom) = (fin.density(), fin.momentum(0));
    let (mut e_rho, mut e_mom) = (0.0, 0.0);
    for k in 0..g.n_cells() {
        let x = g.center_flat(k)[0];
        e_rho += (rho[k] - fields.density(fin.t, x)).abs();
        e_mom += (mom[k] - fields.momentum(fin.t, x)).abs();
    }
    Ok(ManufacturedErrors {
        cells: g.n_cells(),
        l1_rho: e_rho * g.cell_volume(),
        l1_mom: e_mom * g.cell_volume(),
    })
}

/// Transports `R = ρ/ρ*` alongside the solve with the solver's velocities.
struct RatioTracker<'a> {
    barrier: &'a BarrierField,
    ratio: Vec<f64>,
}

impl DiagnosticsSink for RatioTracker<'_> {
    fn emit(&mut self, _record: &DiagnosticsRecord, _state: &FlowState) -> Result<()> {
        Ok(())
    }

    fn accepted(&mut self, before: &FlowState, after: &FlowState) -> Result<()> {
        let vac = vacuum_threshold(self.barrier);
        let u = [before.velocity(0, vac), before.velocity(1, vac)];
        self.ratio = step_ratio(&self.ratio, &u, after.t - before.t, self.barrier)?;
        Ok(())
    }
}

/// `‖R_advected - ρ/ρ*‖_{L¹}` at the final time.
pub fn ratio_equation_gap(cfg: &RunConfig) -> Result<f64> {
    let prep = Prepared::new(cfg)?;
    let model = prep.model(cfg);
    let star = prep.barrier.interior_values();
    let r0: Vec<f64> = prep.state.density().iter().zip(&star).map(|(r, s)| r / s).collect();
    let mut tracker = RatioTracker {
        barrier: &prep.barrier,
        ratio: r0,
    };
    let (fin, _) = advance(&prep.state, cfg.solver.t_end, &model, &cfg.solver, &mut tracker)?;
    let gap: f64 = fin
        .density()
        .iter()
        .zip(&star)
        .zip(&tracker.ratio)
        .map(|((rho, s), r)| (rho / s - r).abs())
        .sum();
    Ok(gap * prep.grid.cell_volume())
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(name: &str, n: usize, t_end: f64) -> RunConfig {
        let mut c = RunConfig::scenario(name).unwrap();
        c.grid.cells[0] = n;
        c.solver.t_end = t_end;
        c
    }

    #[test]
    fn zero_duration_writes_single_record() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small("traffic_1d", 20, 0.0);
        let s = run_once(&cfg, dir.path()).unwrap();
        assert!(s.ok);
        let text = fs::read_to_string(dir.path().join("diagnostics.csv")).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with(&DiagnosticsRecord::COLUMNS.join(",")));
        assert!(dir.path().join("meta.json").exists());
        assert!(dir.path().join("snapshots/snap_0000.csv").exists());
    }

    #[test]
    fn unwritable_output_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let cfg = small("traffic_1d", 20, 0.1);
        let e = run_once(&cfg, &blocker.join("sub")).unwrap_err();
        assert!(matches!(e, Error::Io { .. }));
        assert_eq!(e.exit_code(), 4);
    }

    #[test]
    fn deterministic_in_memory() {
        let cfg = small("lane_narrowing_1d", 40, 0.05);
        let a = run_in_memory(&cfg).unwrap();
        let b = run_in_memory(&cfg).unwrap();
        assert_eq!(a.records, b.records);
    }

    #[test]
    fn single_member_sweep_has_no_trend() {
        let mut cfg = small("traffic_1d", 20, 0.02);
        cfg.sweep = Some(SweepPlan {
            eps: Some(vec![1e-2]),
            kappa_delta: None,
        });
        let r = run_sweep(&cfg, None).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.checks.complementarity_decreasing, None);
        assert_eq!(r.checks.lmp_decreasing, None);
    }

    #[test]
    fn sweep_rows_ordered_by_decreasing_eps() {
        let mut cfg = small("traffic_1d", 20, 0.02);
        cfg.sweep = Some(SweepPlan {
            eps: Some(vec![1e-4, 1e-2, 1e-3]),
            kappa_delta: None,
        });
        let dir = tempfile::tempdir().unwrap();
        let r = run_sweep(&cfg, Some(dir.path())).unwrap();
        let eps: Vec<f64> = r.rows.iter().map(|r| r.eps.unwrap()).collect();
        assert_eq!(eps, vec![1e-2, 1e-3, 1e-4]);
        assert!(dir.path().join("sweep.csv").exists());
        assert!(dir.path().join("eps_1e-3/diagnostics.csv").exists());
    }
}
