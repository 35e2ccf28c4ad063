//! Command implementations behind the `sparse-mpc` binary. Each command
//! writes its report to the given writer and returns a process exit code.

use std::cmp::Ordering;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::condense::CondensedMpc;
use crate::config::{ConfigError, RunConfig};
use crate::fxp::FxpFormat;
use crate::plant::zoh_discretize;
use crate::simloop::{compute_metrics, run_closed_loop, MetricsReport, SimulationTrace};
use crate::solver::{mpc_objective, Arithmetic, Solver};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

pub const DEFAULT_TRACE_PATH: &str = "trace.csv";
pub const DEFAULT_SWEEP_PATH: &str = "sweep.csv";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error(transparent)]
    Run(#[from] crate::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::Run(_) => EXIT_FAILURE,
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn num(v: f64) -> String {
    format!("{v}")
}

/// Trace CSV: `step, t, x1..xn, y1..ym, u1..up, clamped, iters, residual,
/// eps_norm, zeros_in_u`.
pub fn trace_csv(trace: &SimulationTrace) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if let Some(first) = trace.rows.first() {
        let mut header = vec!["step".to_string(), "t".to_string()];
        header.extend((1..=first.x.len()).map(|i| format!("x{i}")));
        header.extend((1..=first.y.len()).map(|i| format!("y{i}")));
        header.extend((1..=first.u.len()).map(|i| format!("u{i}")));
        header.extend(["clamped", "iters", "residual", "eps_norm", "zeros_in_u"].map(String::from));
        w.write_record(&header).expect("in-memory write");
    }
    for row in &trace.rows {
        let mut rec = vec![row.step.to_string(), num(row.t)];
        rec.extend(row.x.iter().map(|v| num(*v)));
        rec.extend(row.y.iter().map(|v| num(*v)));
        rec.extend(row.u.iter().map(|v| num(*v)));
        rec.push(u8::from(row.clamped).to_string());
        rec.push(row.iters.to_string());
        rec.push(num(row.residual));
        rec.push(num(row.eps_norm));
        rec.push(row.zeros_in_u.to_string());
        w.write_record(&rec).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Writes through a temporary file in the target directory, so a failed
/// write leaves nothing behind.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| CliError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

fn settle_field(m: &MetricsReport) -> String {
    m.settle_step.map_or("-1".to_string(), |s| s.to_string())
}

fn write_metrics(out: &mut dyn Write, m: &MetricsReport) -> std::io::Result<()> {
    writeln!(out, "rms_err = {}", num(m.rms_err))?;
    writeln!(out, "settle_step = {}", settle_field(m))?;
    writeln!(out, "sparsity = {}", num(m.sparsity))?;
    writeln!(out, "eps_peak = {}", num(m.eps_peak))?;
    writeln!(out, "osc_index = {}", num(m.osc_index))?;
    writeln!(out, "divergent = {}", u8::from(m.divergent))
}

fn stdout_err(e: std::io::Error) -> CliError {
    CliError::io(Path::new("<stdout>"), e)
}

pub fn cmd_simulate(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<i32> {
    let trace = run_closed_loop(&cfg.scenario)?;
    let path = cfg.out.clone().unwrap_or_else(|| DEFAULT_TRACE_PATH.into());
    atomic_write(&path, &trace_csv(&trace))?;
    let metrics = compute_metrics(&trace);
    writeln!(out, "trace = {}", path.display()).map_err(stdout_err)?;
    writeln!(out, "rows = {}", trace.rows.len()).map_err(stdout_err)?;
    write_metrics(out, &metrics).map_err(stdout_err)?;
    if metrics.divergent {
        log::error!("solver divergence flagged in {} step(s)", trace.rows.iter().filter(|r| r.divergent).count());
        return Ok(EXIT_DIVERGENCE);
    }
    Ok(EXIT_OK)
}

/// One sweep point: `None` is double precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub format: Option<FxpFormat>,
    pub sigma: f64,
}

impl SweepPoint {
    /// Word and fraction width as written to the summary; 0 for double precision.
    pub fn widths(&self) -> (u32, u32) {
        self.format.map_or((0, 0), |f| (f.word_width(), f.frac_width()))
    }

    fn cmp_key(&self, other: &Self) -> Ordering {
        self.widths()
            .cmp(&other.widths())
            .then(self.sigma.total_cmp(&other.sigma))
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub point: SweepPoint,
    /// `None` when the run stopped on a datapath overflow.
    pub trace: Option<SimulationTrace>,
    pub metrics: MetricsReport,
}

/// Sorted, deduplicated `formats x sigmas`; an empty list stands for the
/// scenario's own setting.
pub fn sweep_points(cfg: &RunConfig) -> Vec<SweepPoint> {
    let formats = if cfg.sweep.formats.is_empty() {
        vec![match cfg.scenario.solver.arithmetic {
            Arithmetic::Exact => None,
            Arithmetic::Fxp(f) => Some(f),
        }]
    } else {
        cfg.sweep.formats.clone()
    };
    let sigmas = if cfg.sweep.sigmas.is_empty() {
        vec![cfg.scenario.mpc.sigma]
    } else {
        cfg.sweep.sigmas.clone()
    };
    let mut points: Vec<SweepPoint> = formats
        .iter()
        .flat_map(|f| sigmas.iter().map(move |s| SweepPoint { format: *f, sigma: *s }))
        .collect();
    points.sort_by(SweepPoint::cmp_key);
    let before = points.len();
    points.dedup_by(|a, b| a.cmp_key(b) == Ordering::Equal);
    if points.len() < before {
        log::warn!("dropped {} duplicate sweep entr(ies)", before - points.len());
    }
    points
}

fn run_point(cfg: &RunConfig, point: SweepPoint) -> CliResult<SweepOutcome> {
    let arithmetic = point.format.map_or(Arithmetic::Exact, Arithmetic::Fxp);
    let scn = cfg.scenario.clone().with_arithmetic(arithmetic).with_sigma(point.sigma);
    match run_closed_loop(&scn) {
        Ok(trace) => Ok(SweepOutcome {
            point,
            metrics: compute_metrics(&trace),
            trace: Some(trace),
        }),
        Err(crate::Error::Overflow { .. }) => {
            log::warn!("sweep point {:?} overflowed its datapath", point.widths());
            Ok(SweepOutcome {
                point,
                trace: None,
                metrics: MetricsReport {
                    rms_err: f64::NAN,
                    settle_step: None,
                    sparsity: f64::NAN,
                    eps_peak: f64::NAN,
                    osc_index: f64::NAN,
                    divergent: true,
                },
            })
        }
        Err(e) => Err(e.into()),
    }
}

/// Runs every sweep point on a worker pool of `cfg.sweep.jobs` threads
/// (all cores when unset); results come back in sweep order.
pub fn run_sweep(cfg: &RunConfig) -> CliResult<Vec<SweepOutcome>> {
    let points = sweep_points(cfg);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cfg.sweep.jobs {
        builder = builder.num_threads(j);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Run(crate::Error::InvalidParameter(e.to_string())))?;
    pool.install(|| points.par_iter().map(|p| run_point(cfg, *p)).collect())
}

/// Sweep CSV: `word_width, frac_width, sigma, rms_err, settle_step,
/// sparsity, eps_peak, osc_index, divergent`.
pub fn sweep_csv(outcomes: &[SweepOutcome]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "word_width",
        "frac_width",
        "sigma",
        "rms_err",
        "settle_step",
        "sparsity",
        "eps_peak",
        "osc_index",
        "divergent",
    ])
    .expect("in-memory write");
    for o in outcomes {
        let (ww, fw) = o.point.widths();
        let m = &o.metrics;
        w.write_record([
            ww.to_string(),
            fw.to_string(),
            num(o.point.sigma),
            num(m.rms_err),
            settle_field(m),
            num(m.sparsity),
            num(m.eps_peak),
            num(m.osc_index),
            u8::from(m.divergent).to_string(),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn cmd_sweep(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<i32> {
    let outcomes = run_sweep(cfg)?;
    let path = cfg.out.clone().unwrap_or_else(|| DEFAULT_SWEEP_PATH.into());
    let bytes = sweep_csv(&outcomes);
    atomic_write(&path, &bytes)?;
    writeln!(out, "summary = {}", path.display()).map_err(stdout_err)?;
    out.write_all(&bytes).map_err(stdout_err)?;
    Ok(EXIT_OK)
}

fn join(v: impl Iterator<Item = f64>) -> String {
    v.map(num).collect::<Vec<_>>().join(", ")
}

/// Solves one instance from `x` (the configured initial state when `None`).
pub fn cmd_solve(cfg: &RunConfig, x: Option<&DVector<f64>>, out: &mut dyn Write) -> CliResult<i32> {
    let scn = &cfg.scenario;
    let x = x.unwrap_or(&scn.x0);
    if x.len() != scn.plant.n_states() {
        return Err(ConfigError::Invalid(format!(
            "state has {} entries, the plant has {} states",
            x.len(),
            scn.plant.n_states()
        ))
        .into());
    }
    let mpc = scn.mpc.problem(zoh_discretize(&scn.plant)?)?;
    let cond = CondensedMpc::new(&mpc)?;
    let solver = Solver::new(&mpc, &cond, &scn.solver)?;
    let (u, state) = solver.solve(x, None)?;
    let p = mpc.plant.n_inputs();
    let mut report = || -> std::io::Result<()> {
        for k in 0..mpc.n_c {
            writeln!(out, "u[{k}] = [{}]", join(u.rows(k * p, p).iter().copied()))?;
        }
        writeln!(out, "objective = {}", num(mpc_objective(&mpc, &cond, x, &u)))?;
        writeln!(out, "residual = {}", num(state.final_residual()))?;
        writeln!(out, "iterations = {}", state.iter)?;
        writeln!(out, "eps_peak = {}", num(state.eps_peak()))?;
        writeln!(out, "eps_inf_peak = {}", num(state.eps_inf_peak()))
    };
    report().map_err(stdout_err)?;
    Ok(EXIT_OK)
}

fn write_matrix(out: &mut dyn Write, name: &str, m: &DMatrix<f64>) -> std::io::Result<()> {
    writeln!(out, "{name} =")?;
    for i in 0..m.nrows() {
        writeln!(out, "  [{}]", join(m.row(i).iter().copied()))?;
    }
    Ok(())
}

pub fn cmd_discretize(cfg: &RunConfig, out: &mut dyn Write) -> CliResult<i32> {
    let d = zoh_discretize(&cfg.scenario.plant)?;
    let mut report = || -> std::io::Result<()> {
        writeln!(out, "h = {}", num(d.h))?;
        write_matrix(out, "A_d", &d.a_d)?;
        write_matrix(out, "B_d", &d.b_d)
    };
    report().map_err(stdout_err)?;
    Ok(EXIT_OK)
}
